//! Complementary-label transition matrices.
//!
//! A [`TransitionMatrix`] holds `Q[k][j] = p(Ȳ = j | Y = k)`: the probability that
//! an instance of true class `k` receives complementary label `j`. Every row is a
//! probability distribution. The noiseless builders here all produce a zero
//! diagonal (a complementary label never names the true class); matrices
//! estimated from annotated pairs keep whatever diagonal mass the annotations
//! carry, since self-pairs are annotation noise.

use std::fmt;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Tolerance on row sums, both for builders and for the JSON loader.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Condition-number estimate above which [`invert`] refuses to return `Q⁻¹`.
pub const MAX_CONDITION: f64 = 1e12;

/// Probability masses of the high/mid/low groups in the three-level design.
pub const THREE_LEVEL_MASSES: [f64; 3] = [0.75, 0.24, 0.01];

/// A C×C row-stochastic table, stored row-major.
#[derive(Clone, PartialEq)]
pub struct TransitionMatrix {
    c: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Validates and wraps a row-major table.
    pub fn from_flat(c: usize, data: Vec<f64>) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidClassCount { c, min: 2 });
        }
        if data.len() != c * c {
            return Err(Error::shape(format!("{c}x{c} entries"), data.len()));
        }
        let q = TransitionMatrix { c, data };
        q.validate()?;
        Ok(q)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let c = rows.len();
        if let Some((k, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != c) {
            return Err(Error::shape(format!("row {k} of length {c}"), row.len()));
        }
        Self::from_flat(c, rows.into_iter().flatten().collect())
    }

    fn validate(&self) -> Result<()> {
        for k in 0..self.c {
            let row = self.row(k);
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidMatrix(format!(
                    "row {k} has entry {v} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMatrix(format!("row {k} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Number of classes `C`.
    pub fn c(&self) -> usize {
        self.c
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.c + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.c..(k + 1) * self.c]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.c).map(<[f64]>::to_vec).collect()
    }

    /// Column `j` of `Q`, i.e. `Q[·][j]`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.c).map(|k| self.get(k, j)).collect()
    }

    /// Indices of the nonzero entries in row `k`.
    pub fn row_support(&self, k: usize) -> Vec<usize> {
        self.row(k)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.c).all(|k| self.get(k, k) == 0.0)
    }

    /// `Qᵀ p`: maps a distribution over true classes to one over complementary labels.
    pub fn forward_map(&self, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), self.c);
        let mut out = vec![0.0; self.c];
        for (k, pk) in p.iter().enumerate() {
            for (o, q) in out.iter_mut().zip(self.row(k)) {
                *o += pk * q;
            }
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}

impl fmt::Debug for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "TransitionMatrix(c={}) [", self.c)?;
        for k in 0..self.c {
            writeln!(f, "  {:?}", self.row(k))?;
        }
        write!(f, "]")
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    c: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for TransitionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // serde_json writes shortest round-trip decimals, i.e. up to 17 significant digits.
        MatrixJson {
            c: self.c,
            rows: self.to_rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransitionMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = MatrixJson::deserialize(d)?;
        if wire.rows.len() != wire.c {
            return Err(serde::de::Error::custom(format!(
                "\"c\" is {} but {} rows were given",
                wire.c,
                wire.rows.len()
            )));
        }
        TransitionMatrix::from_rows(wire.rows).map_err(serde::de::Error::custom)
    }
}

/// Observed (true label, complementary label) pair counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairCounts {
    c: usize,
    counts: Vec<u64>,
}

impl PairCounts {
    pub fn new(c: usize) -> Self {
        PairCounts {
            c,
            counts: vec![0; c * c],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        let mut pc = PairCounts::new(c);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::shape(format!("row {k} of length {c}"), row.len()));
            }
            pc.counts[k * c..(k + 1) * c].copy_from_slice(row);
        }
        Ok(pc)
    }

    pub fn from_pairs(c: usize, labels: &[usize], cls: &[usize]) -> Result<Self> {
        if labels.len() != cls.len() {
            return Err(Error::shape(labels.len(), cls.len()));
        }
        let mut pc = PairCounts::new(c);
        for (&y, &ybar) in labels.iter().zip(cls) {
            pc.add(y, ybar)?;
        }
        Ok(pc)
    }

    pub fn add(&mut self, y: usize, ybar: usize) -> Result<()> {
        if y >= self.c || ybar >= self.c {
            return Err(Error::invalid(format!(
                "pair ({y}, {ybar}) out of range for C={}",
                self.c
            )));
        }
        self.counts[y * self.c + ybar] += 1;
        Ok(())
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn row(&self, k: usize) -> &[u64] {
        &self.counts[k * self.c..(k + 1) * self.c]
    }

    pub fn get(&self, k: usize, j: usize) -> u64 {
        self.counts[k * self.c + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `Q⁻¹` as returned by [`invert`]. Not a probability table: entries may be negative.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseTransition {
    c: usize,
    data: Vec<f64>,
    condition: f64,
}

impl InverseTransition {
    pub fn c(&self) -> usize {
        self.c
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.c + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.c..(k + 1) * self.c]
    }

    /// 1-norm condition estimate `‖Q‖₁ ‖Q⁻¹‖₁` computed during inversion.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

fn check_class_count(c: usize, min: usize) -> Result<()> {
    if c < min {
        Err(Error::InvalidClassCount { c, min })
    } else {
        Ok(())
    }
}

fn check_sparsity(c: usize, k: usize) -> Result<()> {
    if k == 0 || k + 1 > c {
        Err(Error::InvalidSparsity {
            k,
            max: c.saturating_sub(1),
        })
    } else {
        Ok(())
    }
}

/// Uniform assumption: every wrong class is equally likely, `Q[k][j] = 1/(C-1)`.
pub fn make_uniform(c: usize) -> Result<TransitionMatrix> {
    check_class_count(c, 2)?;
    let off = 1.0 / (c - 1) as f64;
    let data = (0..c * c)
        .map(|i| if i / c == i % c { 0.0 } else { off })
        .collect();
    Ok(TransitionMatrix { c, data })
}

/// Deterministic cyclic design: class `k` always receives complementary label `(k+1) mod C`.
pub fn make_cyclic(c: usize) -> Result<TransitionMatrix> {
    check_class_count(c, 2)?;
    let mut data = vec![0.0; c * c];
    for k in 0..c {
        data[k * c + (k + 1) % c] = 1.0;
    }
    Ok(TransitionMatrix { c, data })
}

/// Sizes of the (high, mid, low) groups that partition `c - 1` off-diagonal classes.
/// Remainder classes join the high group first, then the mid group.
pub fn three_level_group_sizes(c: usize) -> [usize; 3] {
    let m = c - 1;
    let base = m / 3;
    let rem = m % 3;
    [
        base + usize::from(rem >= 1),
        base + usize::from(rem >= 2),
        base,
    ]
}

/// Three-level biased design: in each row the off-diagonal classes are split into
/// groups that share 0.75, 0.24 and 0.01 of the mass respectively.
pub fn make_biased_three_level(c: usize, seed: u64) -> Result<TransitionMatrix> {
    check_class_count(c, 4)?;
    let sizes = three_level_group_sizes(c);
    let mut rng = rng::seeded(seed);
    let mut data = vec![0.0; c * c];
    for y in 0..c {
        let mut order: Vec<usize> = (1..c).map(|s| (y + s) % c).collect();
        order.shuffle(&mut rng);
        let mut it = order.into_iter();
        for (size, mass) in sizes.iter().zip(THREE_LEVEL_MASSES) {
            let per_entry = mass / *size as f64;
            for j in it.by_ref().take(*size) {
                data[y * c + j] = per_entry;
            }
        }
    }
    Ok(TransitionMatrix { c, data })
}

/// Dense random bias: off-diagonal entries drawn from U[0, 1], rows normalized.
pub fn make_dense_random(c: usize, seed: u64) -> Result<TransitionMatrix> {
    check_class_count(c, 2)?;
    Ok(dense_random_with(c, &mut rng::seeded(seed)))
}

pub(crate) fn dense_random_with(c: usize, rng: &mut StreamRng) -> TransitionMatrix {
    let mut data = vec![0.0; c * c];
    for k in 0..c {
        let row = &mut data[k * c..(k + 1) * c];
        for (j, v) in row.iter_mut().enumerate() {
            if j != k {
                *v = rng.random::<f64>();
            }
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            let off = 1.0 / (c - 1) as f64;
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j == k { 0.0 } else { off };
            }
        }
    }
    TransitionMatrix { c, data }
}

/// Draws `k` distinct labels uniformly from `0..c`, skipping `exclude` when given.
/// The result is sorted ascending.
pub(crate) fn sample_label_set(
    c: usize,
    k: usize,
    exclude: Option<usize>,
    rng: &mut StreamRng,
) -> Vec<usize> {
    let pool: Vec<usize> = (0..c).filter(|&j| Some(j) != exclude).collect();
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Keeps only the listed columns of each row and renormalizes the kept mass.
/// A row whose kept entries are all zero becomes uniform over the kept set.
pub fn sparsify_with_keep_sets(
    q: &TransitionMatrix,
    keep: &[Vec<usize>],
) -> Result<TransitionMatrix> {
    let c = q.c;
    if keep.len() != c {
        return Err(Error::shape(format!("{c} keep sets"), keep.len()));
    }
    let mut data = vec![0.0; c * c];
    for (k, set) in keep.iter().enumerate() {
        if set.is_empty() || set.iter().any(|&j| j >= c) {
            return Err(Error::invalid(format!("keep set for row {k} is invalid")));
        }
        let row = &mut data[k * c..(k + 1) * c];
        let kept: f64 = set.iter().map(|&j| q.get(k, j)).sum();
        for &j in set {
            row[j] = if kept > 0.0 {
                q.get(k, j) / kept
            } else {
                1.0 / set.len() as f64
            };
        }
    }
    Ok(TransitionMatrix { c, data })
}

/// Retains `k` randomly chosen off-diagonal entries per row of a zero-diagonal `q`.
pub fn make_sparse_from_dense(
    q: &TransitionMatrix,
    k: usize,
    seed: u64,
) -> Result<TransitionMatrix> {
    sparse_from_dense_with(q, k, &mut rng::seeded(seed))
}

pub(crate) fn sparse_from_dense_with(
    q: &TransitionMatrix,
    k: usize,
    rng: &mut StreamRng,
) -> Result<TransitionMatrix> {
    let c = q.c;
    check_sparsity(c, k)?;
    if !q.has_zero_diagonal() {
        return Err(Error::InvalidMatrix(
            "sparsification expects a zero diagonal".into(),
        ));
    }
    if k == c - 1 {
        // Nothing is dropped, so the rows are already normalized.
        return Ok(q.clone());
    }
    let keep: Vec<Vec<usize>> = (0..c)
        .map(|row| sample_label_set(c, k, Some(row), rng))
        .collect();
    sparsify_with_keep_sets(q, &keep)
}

/// Analysis-case constrained labeling: each class gets a fixed random set of `k`
/// wrong labels and its complementary label is uniform over that set.
pub fn make_bicl_analysis(c: usize, k: usize, seed: u64) -> Result<TransitionMatrix> {
    check_class_count(c, 2)?;
    check_sparsity(c, k)?;
    let sets = bicl_candidate_sets(c, k, seed);
    Ok(from_candidate_sets(c, &sets))
}

/// The per-class candidate sets behind [`make_bicl_analysis`] for the same seed.
pub fn bicl_candidate_sets(c: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::seeded(seed);
    (0..c)
        .map(|y| sample_label_set(c, k, Some(y), &mut rng))
        .collect()
}

fn from_candidate_sets(c: usize, sets: &[Vec<usize>]) -> TransitionMatrix {
    let mut data = vec![0.0; c * c];
    for (y, set) in sets.iter().enumerate() {
        let p = 1.0 / set.len() as f64;
        for &j in set {
            data[y * c + j] = p;
        }
    }
    TransitionMatrix { c, data }
}

/// Row-normalized pair counts with additive (Laplace) smoothing. The diagonal is
/// kept as observed.
pub fn estimate_from_pairs(counts: &PairCounts, smoothing: f64) -> Result<TransitionMatrix> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::invalid(format!(
            "smoothing must be finite and >= 0, got {smoothing}"
        )));
    }
    let c = counts.c;
    check_class_count(c, 2)?;
    let mut data = Vec::with_capacity(c * c);
    for k in 0..c {
        let row = counts.row(k);
        let total: f64 = row.iter().map(|&n| n as f64 + smoothing).sum();
        if total <= 0.0 {
            return Err(Error::UndefinedRow { row: k });
        }
        data.extend(row.iter().map(|&n| (n as f64 + smoothing) / total));
    }
    Ok(TransitionMatrix { c, data })
}

fn norm1(c: usize, m: &[f64]) -> f64 {
    (0..c)
        .map(|j| (0..c).map(|i| m[i * c + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inversion with partial pivoting. Fails with
/// [`Error::SingularTransition`] when a pivot vanishes or the 1-norm condition
/// estimate exceeds [`MAX_CONDITION`].
pub fn invert(q: &TransitionMatrix) -> Result<InverseTransition> {
    let c = q.c;
    let mut a = q.data.clone();
    let mut inv: Vec<f64> = (0..c * c)
        .map(|i| if i / c == i % c { 1.0 } else { 0.0 })
        .collect();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let singular = Error::SingularTransition {
        condition: f64::INFINITY,
    };

    for col in 0..c {
        let pivot_row = (col..c)
            .max_by(|&i, &j| a[i * c + col].abs().total_cmp(&a[j * c + col].abs()))
            .expect("non-empty pivot range");
        let pivot = a[pivot_row * c + col];
        if pivot.abs() <= 1e-14 * scale {
            return Err(singular);
        }
        if pivot_row != col {
            for j in 0..c {
                a.swap(pivot_row * c + j, col * c + j);
                inv.swap(pivot_row * c + j, col * c + j);
            }
        }
        for j in 0..c {
            a[col * c + j] /= pivot;
            inv[col * c + j] /= pivot;
        }
        for i in 0..c {
            if i == col {
                continue;
            }
            let factor = a[i * c + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..c {
                a[i * c + j] -= factor * a[col * c + j];
                inv[i * c + j] -= factor * inv[col * c + j];
            }
        }
    }

    let condition = norm1(c, &q.data) * norm1(c, &inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularTransition { condition });
    }
    let out = InverseTransition {
        c,
        data: inv,
        condition,
    };
    if identity_residual(q, &out) >= 1e-8 {
        return Err(Error::SingularTransition { condition });
    }
    Ok(out)
}

/// The 10-class dense biased matrix of the sparse-vs-dense counterexample:
/// one dominant 0.90 entry per row over a 0.02/0.005 background.
pub fn counterexample_dense() -> TransitionMatrix {
    TransitionMatrix::from_json_str(include_str!("../fixtures/q_bias.json"))
        .expect("bundled fixture is valid")
}

/// The 4-sparse matrix obtained from [`counterexample_dense`] by keeping four
/// classes per row. Rows 5..10 coincide, so it is singular.
pub fn counterexample_sparse() -> TransitionMatrix {
    TransitionMatrix::from_json_str(include_str!("../fixtures/q_ours.json"))
        .expect("bundled fixture is valid")
}

/// `max |Q·Q⁻¹ − I|`.
pub fn identity_residual(q: &TransitionMatrix, inv: &InverseTransition) -> f64 {
    let c = q.c;
    let mut worst = 0.0f64;
    for i in 0..c {
        for j in 0..c {
            let v: f64 = (0..c).map(|m| q.get(i, m) * inv.get(m, j)).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}
