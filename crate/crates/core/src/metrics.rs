//! Quality diagnostics for collected complementary-label datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{ClassPrior, InfoReport};
use crate::numfmt::ser_sig12;
use crate::protocol::ComplementaryDataset;
use crate::transition::{estimate_from_pairs, PairCounts, TransitionMatrix};

/// Fraction of samples whose complementary label equals the true label.
pub fn noise_rate(ds: &ComplementaryDataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::invalid("noise rate of an empty dataset"));
    }
    let hits = ds
        .cl()
        .iter()
        .zip(ds.base().labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / ds.n() as f64)
}

/// Complementary-label counts per class.
pub fn cl_counts(ds: &ComplementaryDataset) -> Vec<usize> {
    let mut counts = vec![0; ds.c()];
    for &j in ds.cl() {
        counts[j] += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct Imbalance {
    /// Largest count over smallest nonzero count.
    pub ratio: f64,
    /// Classes never used as a complementary label.
    pub zero_count_classes: Vec<usize>,
}

/// Max-over-min-nonzero ratio of class counts.
pub fn imbalance_from_counts(counts: &[usize]) -> Result<Imbalance> {
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::invalid("imbalance ratio needs at least one label"));
    }
    let min_nonzero = counts
        .iter()
        .copied()
        .filter(|&n| n > 0)
        .min()
        .expect("max > 0");
    Ok(Imbalance {
        ratio: max as f64 / min_nonzero as f64,
        zero_count_classes: counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(j, _)| j)
            .collect(),
    })
}

pub fn imbalance_ratio(ds: &ComplementaryDataset) -> Result<Imbalance> {
    imbalance_from_counts(&cl_counts(ds))
}

/// Row-normalized `(y, ȳ)` counts.
pub fn empirical_transition(ds: &ComplementaryDataset, smoothing: f64) -> Result<TransitionMatrix> {
    let counts = PairCounts::from_pairs(ds.c(), ds.base().labels(), ds.cl())?;
    estimate_from_pairs(&counts, smoothing)
}

/// Summary of a collected complementary-label dataset. Entropies are reported
/// under both a uniform prior and the dataset's empirical label distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetReport {
    pub noise_rate: f64,
    pub imbalance: Imbalance,
    pub empirical_q: TransitionMatrix,
    pub info_uniform: InfoReport,
    pub info_empirical: InfoReport,
    pub counts: Vec<usize>,
}

/// The JSON document written for a [`DatasetReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReportJson {
    #[serde(serialize_with = "ser_sig12")]
    pub noise_rate: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub imbalance_ratio: f64,
    pub zero_count_classes: Vec<usize>,
    #[serde(serialize_with = "ser_sig12")]
    pub h_cond_bits_uniform: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub h_cond_bits_empirical: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub i_bits_uniform: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub i_bits_empirical: f64,
    pub counts: Vec<usize>,
}

impl DatasetReport {
    /// Builds the report from the empirical transition estimated with
    /// `smoothing`. `i_yx_bits` feeds the Fano bound of both info reports.
    pub fn compute(ds: &ComplementaryDataset, smoothing: f64, i_yx_bits: f64) -> Result<Self> {
        let empirical_q = empirical_transition(ds, smoothing)?;
        let counts = cl_counts(ds);
        let prior = ClassPrior::from_labels(ds.c(), ds.base().labels())?;
        Ok(DatasetReport {
            noise_rate: noise_rate(ds)?,
            imbalance: imbalance_from_counts(&counts)?,
            info_uniform: InfoReport::compute(
                &empirical_q,
                &ClassPrior::uniform(ds.c()),
                i_yx_bits,
            )?,
            info_empirical: InfoReport::compute(&empirical_q, &prior, i_yx_bits)?,
            empirical_q,
            counts,
        })
    }

    pub fn to_json(&self) -> DatasetReportJson {
        DatasetReportJson {
            noise_rate: self.noise_rate,
            imbalance_ratio: self.imbalance.ratio,
            zero_count_classes: self.imbalance.zero_count_classes.clone(),
            h_cond_bits_uniform: self.info_uniform.h_cond_bits,
            h_cond_bits_empirical: self.info_empirical.h_cond_bits,
            i_bits_uniform: self.info_uniform.i_yybar_bits,
            i_bits_empirical: self.info_empirical.i_yybar_bits,
            counts: self.counts.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report serialization cannot fail")
    }
}

impl Serialize for DatasetReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}
