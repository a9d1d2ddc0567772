//! Information measures of a complementary-label channel `Y → Ȳ`.
//!
//! All quantities are in bits. For a prior `p(Y)` and transition `Q`, the joint
//! is `p(k, j) = p(k) Q[k][j]`, the complementary marginal is
//! `p(ȳ = j) = Σ_k p(k) Q[k][j]`, and
//!
//! ```text
//! H(Y | Ȳ) = − Σ_j Σ_k p(k, j) log2( p(k, j) / p(ȳ = j) )
//! I(Y; Ȳ)  = H(Y) − H(Y | Ȳ)
//! ```
//!
//! with `0 · log 0 = 0`, so columns no class ever maps to contribute nothing.
//!
//! Fano's inequality turns the conditional entropy into a floor on the error of
//! any classifier trained under `Q`:
//!
//! ```text
//! p_err ≥ (H(Y | Ȳ) − I(Y; X) − 1) / log2(C − 1)
//! ```
//!
//! `I(Y; X)` is not estimated here; callers supply it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::{ser_sig12, ser_sig12_opt};
use crate::rng;
use crate::transition::{dense_random_with, sparse_from_dense_with, TransitionMatrix};

/// Slack allowed when comparing sparse and dense entropies in the ordering simulation.
pub const ORDERING_SLACK: f64 = 1e-12;

/// A distribution over the C true classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPrior {
    p: Vec<f64>,
}

impl ClassPrior {
    pub fn uniform(c: usize) -> Self {
        ClassPrior {
            p: vec![1.0 / c as f64; c],
        }
    }

    pub fn from_probs(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("prior over zero classes"));
        }
        if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("prior entries must be finite and >= 0"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("prior sums to {sum}")));
        }
        Ok(ClassPrior { p })
    }

    /// Empirical label frequencies.
    pub fn from_labels(c: usize, labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("cannot build a prior from zero labels"));
        }
        let mut counts = vec![0usize; c];
        for &y in labels {
            *counts
                .get_mut(y)
                .ok_or_else(|| Error::invalid(format!("label {y} out of range for C={c}")))? += 1;
        }
        let n = labels.len() as f64;
        Ok(ClassPrior {
            p: counts.into_iter().map(|k| k as f64 / n).collect(),
        })
    }

    pub fn c(&self) -> usize {
        self.p.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }
}

fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy `H(Y)` of the prior, in bits.
pub fn entropy(prior: &ClassPrior) -> f64 {
    -prior.p.iter().map(|&x| plogp(x)).sum::<f64>()
}

fn check_dims(q: &TransitionMatrix, prior: &ClassPrior) -> Result<()> {
    if q.c() != prior.c() {
        return Err(Error::shape(
            format!("prior over {} classes", q.c()),
            format!("prior over {} classes", prior.c()),
        ));
    }
    Ok(())
}

/// `H(Y | Ȳ)` in bits.
pub fn conditional_entropy(q: &TransitionMatrix, prior: &ClassPrior) -> Result<f64> {
    check_dims(q, prior)?;
    let c = q.c();
    let mut h = 0.0;
    for j in 0..c {
        let marginal: f64 = (0..c).map(|k| prior.p[k] * q.get(k, j)).sum();
        if marginal <= 0.0 {
            continue;
        }
        for k in 0..c {
            let joint = prior.p[k] * q.get(k, j);
            if joint > 0.0 {
                h -= joint * (joint / marginal).log2();
            }
        }
    }
    // Rounding can leave a tiny negative value when Ȳ determines Y.
    Ok(h.max(0.0))
}

/// `I(Y; Ȳ) = H(Y) − H(Y | Ȳ)` in bits.
pub fn mutual_information(q: &TransitionMatrix, prior: &ClassPrior) -> Result<f64> {
    let h_cond = conditional_entropy(q, prior)?;
    Ok((entropy(prior) - h_cond).max(0.0))
}

/// Fano floor on the error probability, unclamped: negative values mean the bound
/// is vacuous.
pub fn fano_lower_bound(h_cond_bits: f64, i_yx_bits: f64, c: usize) -> Result<f64> {
    if c <= 2 {
        return Err(Error::DegenerateDenominator { c });
    }
    if h_cond_bits < 0.0 || i_yx_bits < 0.0 {
        return Err(Error::invalid(
            "entropy and mutual information must be non-negative",
        ));
    }
    Ok((h_cond_bits - i_yx_bits - 1.0) / ((c - 1) as f64).log2())
}

/// Entropy summary of one transition matrix under one prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    #[serde(serialize_with = "ser_sig12")]
    pub h_cond_bits: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub i_yybar_bits: f64,
    /// `None` when C = 2, where the bound's denominator vanishes.
    #[serde(serialize_with = "ser_sig12_opt")]
    pub fano_bound: Option<f64>,
    pub c: usize,
}

impl InfoReport {
    pub fn compute(q: &TransitionMatrix, prior: &ClassPrior, i_yx_bits: f64) -> Result<Self> {
        let h_cond_bits = conditional_entropy(q, prior)?;
        let i_yybar_bits = (entropy(prior) - h_cond_bits).max(0.0);
        let fano_bound = match fano_lower_bound(h_cond_bits, i_yx_bits, q.c()) {
            Ok(b) => Some(b),
            Err(Error::DegenerateDenominator { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(InfoReport {
            h_cond_bits,
            i_yybar_bits,
            fano_bound,
            c: q.c(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialEntropies {
    pub h_dense: f64,
    pub h_sparse: f64,
}

impl TrialEntropies {
    pub fn sparse_not_worse(&self) -> bool {
        self.h_sparse <= self.h_dense + ORDERING_SLACK
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderingOutcome {
    pub c: usize,
    pub k: usize,
    pub seed: u64,
    pub trials: Vec<TrialEntropies>,
}

impl OrderingOutcome {
    /// Fraction of trials where the sparse matrix has no more conditional entropy.
    pub fn fraction(&self) -> f64 {
        let ok = self.trials.iter().filter(|t| t.sparse_not_worse()).count();
        ok as f64 / self.trials.len() as f64
    }
}

/// Sparse-vs-dense Monte Carlo: each trial draws a dense random zero-diagonal `Q`,
/// keeps `k` random off-diagonal entries per row, and records both conditional
/// entropies under a uniform prior.
///
/// Trial `t` uses its own ChaCha stream `(seed, t)`, so the outcome does not
/// depend on how rayon schedules the trials.
pub fn entropy_ordering_simulation(
    c: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<OrderingOutcome> {
    if c < 2 {
        return Err(Error::InvalidClassCount { c, min: 2 });
    }
    if k == 0 || k >= c {
        return Err(Error::InvalidSparsity { k, max: c - 1 });
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let prior = ClassPrior::uniform(c);
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t);
            let dense = dense_random_with(c, &mut rng);
            let sparse = sparse_from_dense_with(&dense, k, &mut rng)?;
            Ok(TrialEntropies {
                h_dense: conditional_entropy(&dense, &prior)?,
                h_sparse: conditional_entropy(&sparse, &prior)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderingOutcome { c, k, seed, trials })
}
