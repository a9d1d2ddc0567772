//! Data-collection protocols for complementary labels.
//!
//! Two constrained labeling pipelines are modeled:
//!
//! - **analysis case**: every true class gets a fixed candidate set of `k` wrong
//!   labels; an annotator picks one of them. The true label is never offered, so
//!   the resulting labels are noise-free.
//! - **practical case**: features are clustered with k-means and every cluster
//!   gets a fixed candidate set drawn from the whole label space. The annotator
//!   discards the true label if it is offered and picks among the rest.
//!
//! A third route, [`sample_from_q`], draws each complementary label directly
//! from a transition row.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_sig;
use crate::rng;
use crate::transition::{bicl_candidate_sets, sample_label_set, TransitionMatrix};

/// Minimum pairwise distance between blob means.
pub const MIN_MEAN_DISTANCE: f64 = 4.0;

/// Features (row-major `n × d`) with true class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    c: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(c: usize, d: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidClassCount { c, min: 2 });
        }
        if d == 0 {
            return Err(Error::invalid("feature dimension must be >= 1"));
        }
        if features.len() != labels.len() * d {
            return Err(Error::shape(
                format!("{} x {d} features", labels.len()),
                features.len(),
            ));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::invalid(format!("label {y} out of range for C={c}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(LabeledDataset {
            c,
            d,
            features,
            labels,
        })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.c];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            c: self.c,
            d: self.d,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(self, None, w)
    }
}

/// A labeled dataset plus one complementary label per sample. The true labels
/// stay available for oracle metrics; learners only look at `cl`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplementaryDataset {
    base: LabeledDataset,
    cl: Vec<usize>,
}

impl ComplementaryDataset {
    pub fn new(base: LabeledDataset, cl: Vec<usize>) -> Result<Self> {
        if cl.len() != base.n() {
            return Err(Error::shape(base.n(), cl.len()));
        }
        if let Some(j) = cl.iter().find(|&&j| j >= base.c) {
            return Err(Error::invalid(format!(
                "complementary label {j} out of range for C={}",
                base.c
            )));
        }
        Ok(ComplementaryDataset { base, cl })
    }

    pub fn base(&self) -> &LabeledDataset {
        &self.base
    }

    pub fn cl(&self) -> &[usize] {
        &self.cl
    }

    pub fn c(&self) -> usize {
        self.base.c
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn subset(&self, indices: &[usize]) -> ComplementaryDataset {
        ComplementaryDataset {
            base: self.base.subset(indices),
            cl: indices.iter().map(|&i| self.cl[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(&self.base, Some(&self.cl), w)
    }
}

fn write_rows<W: Write>(ds: &LabeledDataset, cl: Option<&[usize]>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..ds.d).map(|j| format!("f{j}")).collect();
    header.push("y".into());
    if cl.is_some() {
        header.push("ybar".into());
    }
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        record.clear();
        record.extend(ds.row(i).iter().map(|v| fmt_sig(*v, 9)));
        record.push(ds.labels[i].to_string());
        if let Some(cl) = cl {
            record.push(cl[i].to_string());
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Either kind of dataset, as read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub enum CsvDataset {
    Labeled(LabeledDataset),
    Complementary(ComplementaryDataset),
}

impl CsvDataset {
    pub fn labeled(&self) -> &LabeledDataset {
        match self {
            CsvDataset::Labeled(ds) => ds,
            CsvDataset::Complementary(ds) => ds.base(),
        }
    }
}

/// Reads `f0,…,f{d-1},y[,ybar]`. When `c` is `None` the class count is taken as
/// one more than the largest label seen.
pub fn read_csv<R: Read>(r: R, c: Option<usize>) -> Result<CsvDataset> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let has_ybar = cols.last() == Some(&"ybar");
    let n_label_cols = if has_ybar { 2 } else { 1 };
    if cols.len() < n_label_cols + 1 || cols[cols.len() - n_label_cols] != "y" {
        return Err(Error::Parse("header must be f0,...,f{d-1},y[,ybar]".into()));
    }
    let d = cols.len() - n_label_cols;
    for (j, name) in cols[..d].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Parse(format!(
                "column {j} is {name:?}, expected f{j}"
            )));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut cl = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields",
                line + 1,
                rec.len()
            )));
        }
        for field in rec.iter().take(d) {
            features.push(field.trim().parse::<f64>().map_err(|e| {
                Error::Parse(format!("row {}: bad feature {field:?}: {e}", line + 1))
            })?);
        }
        let parse_label = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("row {}: bad label {s:?}: {e}", line + 1)))
        };
        labels.push(parse_label(&rec[d])?);
        if has_ybar {
            cl.push(parse_label(&rec[d + 1])?);
        }
    }
    let c = match c {
        Some(c) => c,
        None => labels.iter().chain(&cl).max().map_or(2, |m| (m + 1).max(2)),
    };
    let base = LabeledDataset::new(c, d, features, labels)?;
    if has_ybar {
        Ok(CsvDataset::Complementary(ComplementaryDataset::new(
            base, cl,
        )?))
    } else {
        Ok(CsvDataset::Labeled(base))
    }
}

/// Isotropic Gaussian blobs around seeded class means.
#[derive(Clone, Debug)]
pub struct BlobGenerator {
    c: usize,
    d: usize,
    spread: f64,
    seed: u64,
    means: Vec<f64>,
}

impl BlobGenerator {
    /// Places `c` means in a cube that starts small and grows until rejection
    /// sampling can keep every pair at least [`MIN_MEAN_DISTANCE`] apart, so the
    /// classes end up close to the minimum separation.
    pub fn new(c: usize, d: usize, spread: f64, seed: u64) -> Result<Self> {
        if c < 2 {
            return Err(Error::invalid(format!("class count must be >= 2, got {c}")));
        }
        if d == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::invalid(format!("spread must be > 0, got {spread}")));
        }
        let mut rng = rng::stream(seed, 0);
        let mut half_width = MIN_MEAN_DISTANCE / 2.0;
        let mut means: Vec<f64> = Vec::with_capacity(c * d);
        let mut failures = 0;
        while means.len() < c * d {
            let cand: Vec<f64> = (0..d)
                .map(|_| rng.random_range(-half_width..half_width))
                .collect();
            let far_enough = means.chunks(d).all(|m| {
                let dist2: f64 = m.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum();
                dist2 >= MIN_MEAN_DISTANCE * MIN_MEAN_DISTANCE
            });
            if far_enough {
                means.extend(cand);
                failures = 0;
            } else {
                failures += 1;
                if failures >= 100 {
                    half_width *= 1.05;
                    failures = 0;
                }
            }
        }
        Ok(BlobGenerator {
            c,
            d,
            spread,
            seed,
            means,
        })
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.d..(class + 1) * self.d]
    }

    /// `n_per_class` samples of every class, class-major. Distinct `stream`
    /// values give independent draws around the same means (e.g. train/test).
    pub fn sample(&self, n_per_class: usize, stream: u64) -> Result<LabeledDataset> {
        if n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be >= 1"));
        }
        let mut rng = rng::stream(self.seed, stream + 1);
        let n = self.c * n_per_class;
        let mut features = Vec::with_capacity(n * self.d);
        let mut labels = Vec::with_capacity(n);
        for y in 0..self.c {
            for _ in 0..n_per_class {
                for m in self.mean(y) {
                    let z: f64 = rng.sample(StandardNormal);
                    features.push(m + self.spread * z);
                }
                labels.push(y);
            }
        }
        LabeledDataset::new(self.c, self.d, features, labels)
    }
}

/// Gaussian blobs with `n_per_class` samples per class.
pub fn gen_blobs(
    c: usize,
    n_per_class: usize,
    d: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    BlobGenerator::new(c, d, spread, seed)?.sample(n_per_class, 0)
}

/// Result of k-means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub d: usize,
    /// Row-major `k × d`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// Sum of squared distances after initialization and after every Lloyd step.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.d..(j + 1) * self.d]
    }

    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid; ties go to the lowest index.
fn nearest(x: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks(d).enumerate() {
        let dist = sq_dist(x, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign_all(features: &[f64], d: usize, centroids: &[f64]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let assignments = features
        .chunks(d)
        .map(|x| {
            let (j, dist) = nearest(x, centroids, d);
            total += dist;
            j
        })
        .collect();
    (assignments, total)
}

fn recompute_means(
    features: &[f64],
    d: usize,
    k: usize,
    assignments: &[usize],
) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; k * d];
    let mut sizes = vec![0usize; k];
    for (x, &j) in features.chunks(d).zip(assignments) {
        sizes[j] += 1;
        for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(x) {
            *s += v;
        }
    }
    for j in 0..k {
        if sizes[j] > 0 {
            let n = sizes[j] as f64;
            sums[j * d..(j + 1) * d].iter_mut().for_each(|s| *s /= n);
        }
    }
    (sums, sizes)
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Stops when an assignment pass changes nothing or after `max_iters` update
/// steps. The returned assignments are always nearest-centroid assignments for
/// the returned centroids. A cluster that loses all its points takes over the
/// point farthest from its current centroid.
pub fn kmeans(
    features: &[f64],
    d: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterModel> {
    if d == 0 || !features.len().is_multiple_of(d) {
        return Err(Error::invalid("feature table is not n x d"));
    }
    let n = features.len() / d;
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "need 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be >= 1"));
    }
    let row = |i: usize| &features[i * d..(i + 1) * d];

    // k-means++ seeding.
    let mut rng = rng::seeded(seed);
    let mut centroids = Vec::with_capacity(k * d);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut dist2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..d])).collect();
    for _ in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in dist2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(pick));
        for (i, slot) in dist2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(row(i), &centroids[start..start + d]));
        }
    }

    let (mut assignments, objective) = assign_all(features, d, &centroids);
    let mut history = vec![objective];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let (mut means, mut sizes) = recompute_means(features, d, k, &assignments);
        // Old centroids stay in place for empty clusters until repaired.
        for j in 0..k {
            if sizes[j] == 0 {
                means[j * d..(j + 1) * d].copy_from_slice(&centroids[j * d..(j + 1) * d]);
            }
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let far = (0..n)
                .filter(|&i| sizes[assignments[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(row(a), &means[assignments[a] * d..(assignments[a] + 1) * d]);
                    let db = sq_dist(row(b), &means[assignments[b] * d..(assignments[b] + 1) * d]);
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            let Some(i) = far else { break };
            let old = assignments[i];
            assignments[i] = empty;
            means[empty * d..(empty + 1) * d].copy_from_slice(row(i));
            sizes[empty] = 1;
            sizes[old] -= 1;
            let (fixed, _) = recompute_means(features, d, k, &assignments);
            means[old * d..(old + 1) * d].copy_from_slice(&fixed[old * d..(old + 1) * d]);
        }
        centroids = means;
        let (next, objective) = assign_all(features, d, &centroids);
        history.push(objective);
        let changed = next != assignments;
        assignments = next;
        if !changed {
            break;
        }
    }

    Ok(ClusterModel {
        k,
        d,
        centroids,
        assignments,
        iterations,
        objective_history: history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// One set per true class, never containing that class.
    PerClass,
    /// One set per cluster, drawn from all labels.
    PerCluster,
}

/// Fixed candidate label sets, one per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateAssignment {
    pub mode: CandidateMode,
    pub k: usize,
    pub c: usize,
    /// Sorted candidate labels of each group.
    pub sets: Vec<Vec<usize>>,
    /// Shuffled order in which each set would be shown to an annotator. The
    /// rule-based annotator ignores the order; it is kept as metadata.
    pub presentation_order: Vec<Vec<usize>>,
}

impl CandidateAssignment {
    pub fn set(&self, group: usize) -> &[usize] {
        &self.sets[group]
    }

    pub fn n_groups(&self) -> usize {
        self.sets.len()
    }

    /// For per-class sets, the transition matrix of a noiseless annotator:
    /// uniform over each class's set.
    pub fn per_class_transition(&self) -> Option<TransitionMatrix> {
        if self.mode != CandidateMode::PerClass {
            return None;
        }
        let c = self.c;
        let mut data = vec![0.0; c * c];
        for (y, set) in self.sets.iter().enumerate() {
            for &j in set {
                data[y * c + j] = 1.0 / set.len() as f64;
            }
        }
        TransitionMatrix::from_flat(c, data).ok()
    }
}

/// Draws the fixed candidate sets. Per-class sets use the same random stream as
/// [`crate::transition::make_bicl_analysis`], so equal seeds give equal sets.
pub fn assign_candidates(
    mode: CandidateMode,
    groups: &[usize],
    c: usize,
    k: usize,
    seed: u64,
) -> Result<CandidateAssignment> {
    if c < 2 {
        return Err(Error::InvalidClassCount { c, min: 2 });
    }
    let sets = match mode {
        CandidateMode::PerClass => {
            if k == 0 || k >= c {
                return Err(Error::InvalidSparsity { k, max: c - 1 });
            }
            if let Some(g) = groups.iter().find(|&&g| g >= c) {
                return Err(Error::invalid(format!(
                    "per-class group {g} is not a class index for C={c}"
                )));
            }
            bicl_candidate_sets(c, k, seed)
        }
        CandidateMode::PerCluster => {
            if k == 0 || k > c {
                return Err(Error::InvalidSparsity { k, max: c });
            }
            let n_groups = groups.iter().max().map_or(0, |m| m + 1);
            let mut rng = rng::seeded(seed);
            (0..n_groups)
                .map(|_| sample_label_set(c, k, None, &mut rng))
                .collect()
        }
    };
    let mut order_rng = rng::stream(seed, 1);
    let presentation_order = sets
        .iter()
        .map(|s| {
            let mut o = s.clone();
            o.shuffle(&mut order_rng);
            o
        })
        .collect();
    Ok(CandidateAssignment {
        mode,
        k,
        c,
        sets,
        presentation_order,
    })
}

/// Simulated annotator. For each sample, with probability `1 − ε` the true label
/// is removed from the group's candidate set and one of the remaining labels is
/// picked uniformly; with probability `ε` the pick is uniform over the full set,
/// true label included. If removing the true label empties the set, the pick is
/// uniform over all other classes.
pub fn annotate_rule_based(
    ds: &LabeledDataset,
    ca: &CandidateAssignment,
    groups: &[usize],
    error_rate: f64,
    seed: u64,
) -> Result<ComplementaryDataset> {
    if groups.len() != ds.n() {
        return Err(Error::shape(ds.n(), groups.len()));
    }
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(Error::invalid(format!(
            "error rate {error_rate} not in [0, 1]"
        )));
    }
    if ca.c != ds.c() {
        return Err(Error::shape(format!("C={}", ds.c()), format!("C={}", ca.c)));
    }
    if let Some(g) = groups.iter().find(|&&g| g >= ca.n_groups()) {
        return Err(Error::invalid(format!("group {g} has no candidate set")));
    }
    let c = ds.c();
    let cl = (0..ds.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            let y = ds.labels[i];
            let set = ca.set(groups[i]);
            if rng.random::<f64>() < error_rate {
                return set[rng.random_range(0..set.len())];
            }
            let remaining: Vec<usize> = set.iter().copied().filter(|&j| j != y).collect();
            if remaining.is_empty() {
                let others: Vec<usize> = (0..c).filter(|&j| j != y).collect();
                others[rng.random_range(0..others.len())]
            } else {
                remaining[rng.random_range(0..remaining.len())]
            }
        })
        .collect();
    ComplementaryDataset::new(ds.clone(), cl)
}

/// Draws `ȳ_i ~ Q[y_i][·]` independently per sample.
pub fn sample_from_q(
    ds: &LabeledDataset,
    q: &TransitionMatrix,
    seed: u64,
) -> Result<ComplementaryDataset> {
    if q.c() != ds.c() {
        return Err(Error::shape(
            format!("C={}", ds.c()),
            format!("C={}", q.c()),
        ));
    }
    let cl = (0..ds.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            categorical(q.row(ds.labels[i]), rng.random::<f64>())
        })
        .collect();
    ComplementaryDataset::new(ds.clone(), cl)
}

/// Inverse-CDF draw that never returns a zero-probability index.
fn categorical(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// Picks `per_class` random sample indices of every class (fewer if a class is
/// smaller), e.g. the small true-labeled seed set used to estimate `Q`.
pub fn sample_seed_set(labels: &[usize], c: usize, per_class: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(c * per_class);
    for y in 0..c {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == y).collect();
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        idx.sort_unstable();
        out.extend(idx);
    }
    out
}
