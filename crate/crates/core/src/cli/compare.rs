//! The `compare` grid: transition designs x losses x seeds.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::{blobs, build_q, stage_seed, CompareArgs, QBuilder};
use crate::error::{Error, Result};
use crate::infotheory::{conditional_entropy, ClassPrior};
use crate::learner::{train, LossKind, LossSpec, TrainConfig};
use crate::numfmt::{fmt_sig, ser_sig12_opt};
use crate::protocol::sample_from_q;
use crate::transition::TransitionMatrix;

#[derive(Clone, Debug, PartialEq)]
pub enum Design {
    Builder(QBuilder),
    File(PathBuf),
}

impl Design {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Design::File(PathBuf::from(path)));
        }
        Ok(Design::Builder(match s {
            "uniform" => QBuilder::Uniform,
            "biased3" => QBuilder::Biased3,
            "bicl" => QBuilder::Bicl,
            "sparse-from-dense" => QBuilder::SparseFromDense,
            other => return Err(Error::invalid(format!("unknown design {other:?}"))),
        }))
    }

    fn matrix(&self, c: usize, k: usize, seed: u64) -> Result<TransitionMatrix> {
        match self {
            Design::Builder(b) => build_q(*b, c, k, seed),
            Design::File(p) => {
                let q = TransitionMatrix::load(p)?;
                if q.c() != c {
                    return Err(Error::shape(format!("Q over {c} classes"), q.c()));
                }
                Ok(q)
            }
        }
    }
}

/// One (design, loss) row aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub design: String,
    pub loss: String,
    /// Mean conditional entropy (bits, uniform prior) of the generating matrices.
    #[serde(serialize_with = "ser_sig12_opt")]
    pub h_cond_bits: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    #[serde(serialize_with = "ser_sig12_opt")]
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two runs.
    #[serde(serialize_with = "ser_sig12_opt")]
    pub std: Option<f64>,
    /// `mean` minus the baseline design's mean for the same loss.
    #[serde(serialize_with = "ser_sig12_opt")]
    pub delta: Option<f64>,
    /// `ok`, or the kind of the first failure.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareTable {
    pub baseline: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn write_csv<W: Write>(&self, w: W, digits: usize) -> Result<()> {
        let f = |x: Option<f64>| x.map(|v| fmt_sig(v, digits)).unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "design",
            "loss",
            "h_cond_bits",
            "n_ok",
            "n_failed",
            "mean",
            "std",
            "delta",
            "status",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.design.clone(),
                r.loss.clone(),
                f(r.h_cond_bits),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
                f(r.mean),
                f(r.std),
                f(r.delta),
                r.status.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Cell {
    entropy: Option<f64>,
    outcome: Result<f64>,
}

fn run_cell(
    a: &CompareArgs,
    design: &Design,
    kind: LossKind,
    seed: u64,
    cfg: &TrainConfig,
) -> Cell {
    let c = a.data.c;
    let q = match design.matrix(c, a.k, stage_seed(seed, 11)) {
        Ok(q) => q,
        Err(e) => {
            return Cell {
                entropy: None,
                outcome: Err(e),
            }
        }
    };
    let entropy = conditional_entropy(&q, &ClassPrior::uniform(c)).ok();
    let outcome = (|| {
        let (train_ds, test) = blobs(&a.data, stage_seed(seed, 10))?;
        let cds = sample_from_q(&train_ds, &q, stage_seed(seed, 12))?;
        let spec = LossSpec::new(kind, Some(q.clone()));
        let cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        Ok(train(&cds, &spec, &cfg, &test)?.final_eval.accuracy)
    })();
    Cell { entropy, outcome }
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Runs every (design, loss, seed) cell in parallel. Each cell draws its own
/// data, matrix and complementary labels from `seed`, so designs are compared
/// on identical features. Failed cells are recorded in `status`.
pub fn run_compare(a: &CompareArgs, base_seed: u64) -> Result<CompareTable> {
    let split = |s: &str| -> Vec<String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect()
    };
    let design_names = split(&a.designs);
    let loss_names = split(&a.losses);
    if design_names.is_empty() || loss_names.is_empty() || a.seeds == 0 {
        return Err(Error::invalid(
            "empty grid: need at least one design, one loss and one seed",
        ));
    }
    if !design_names.contains(&a.baseline) {
        return Err(Error::invalid(format!(
            "baseline {:?} is not in --designs",
            a.baseline
        )));
    }
    let designs = design_names
        .iter()
        .map(|s| Design::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let losses = loss_names
        .iter()
        .map(|s| LossKind::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..a.seeds as u64)
        .map(|i| base_seed.wrapping_add(i))
        .collect();
    let cfg = a.training.config(base_seed);
    cfg.validate()?;

    let mut jobs = Vec::new();
    for d in 0..designs.len() {
        for l in 0..losses.len() {
            for &s in &seeds {
                jobs.push((d, l, s));
            }
        }
    }
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(d, l, s)| run_cell(a, &designs[d], losses[l], s, &cfg))
        .collect();

    let mut rows = Vec::new();
    for (d, name) in design_names.iter().enumerate() {
        for (l, kind) in losses.iter().enumerate() {
            let start = (d * losses.len() + l) * seeds.len();
            let group = &cells[start..start + seeds.len()];
            let accs: Vec<f64> = group
                .iter()
                .filter_map(|c| c.outcome.as_ref().ok().copied())
                .collect();
            let entropies: Vec<f64> = group.iter().filter_map(|c| c.entropy).collect();
            let (mean, std) = mean_std(&accs);
            let status = group
                .iter()
                .find_map(|c| c.outcome.as_ref().err().map(|e| e.kind().to_string()))
                .unwrap_or_else(|| "ok".to_string());
            rows.push(CompareRow {
                design: name.clone(),
                loss: kind.name(),
                h_cond_bits: mean_std(&entropies).0,
                n_ok: accs.len(),
                n_failed: group.len() - accs.len(),
                mean,
                std,
                delta: None,
                status,
            });
        }
    }
    let baseline: Vec<Option<f64>> = (0..losses.len())
        .map(|l| {
            rows[design_names
                .iter()
                .position(|n| *n == a.baseline)
                .expect("checked")
                * losses.len()
                + l]
                .mean
        })
        .collect();
    for (i, row) in rows.iter_mut().enumerate() {
        if let (Some(m), Some(b)) = (row.mean, baseline[i % losses.len()]) {
            row.delta = Some(m - b);
        }
    }
    Ok(CompareTable {
        baseline: a.baseline.clone(),
        seeds,
        rows,
    })
}
