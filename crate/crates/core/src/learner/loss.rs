//! Complementary-label losses on a single logit vector, each with its exact
//! gradient. Units are nats.
//!
//! With `p = softmax(z)` and a complementary label `ȳ`:
//!
//! - FWD:   `−ln [Qᵀp]_ȳ`
//! - URE:   `e_ȳᵀ Q⁻¹ ℓ(z)` where `ℓ_k(z) = −ln p_k`
//! - CPE-I: `−ln p_ȳ`
//! - CPE-F: `−ln [Qᵀp]_ȳ` (same computation as FWD)
//! - CPE-T: `−ln [Tᵀp]_ȳ` with a trainable row-stochastic `T`

use serde::{Deserialize, Serialize};

use crate::transition::{InverseTransition, TransitionMatrix};

/// Floor applied to every probability before taking its log.
pub const EPS_PROB: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Ordinary cross-entropy `−ln p_y`, computed through log-sum-exp.
pub fn loss_ce(logits: &[f64], y: usize) -> LossOutput {
    let mut grad = softmax(logits);
    let loss = log_sum_exp(logits) - logits[y];
    grad[y] -= 1.0;
    LossOutput {
        loss,
        grad_logits: grad,
    }
}

/// `ℓ_k(z) = −ln p_k` for every class `k`.
pub fn per_class_ce(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| lse - z).collect()
}

/// Cross-entropy of `Mᵀp` against `ȳ`, where `column[k] = M[k][ȳ]`.
/// Returns the loss and `∂loss/∂p`-derived logit gradient plus `∂loss/∂M[·][ȳ]`.
fn corrected_ce(column: &[f64], p: &[f64]) -> (f64, Vec<f64>, Option<Vec<f64>>) {
    let r: f64 = column.iter().zip(p).map(|(m, pk)| m * pk).sum();
    if r <= EPS_PROB {
        return (-EPS_PROB.ln(), vec![0.0; p.len()], None);
    }
    // ∂/∂z_k of −ln Σ_j M_jȳ p_j  =  p_k − p_k M_kȳ / r
    let grad = p
        .iter()
        .zip(column)
        .map(|(pk, m)| pk - pk * m / r)
        .collect();
    let grad_column = p.iter().map(|pk| -pk / r).collect();
    (-r.ln(), grad, Some(grad_column))
}

/// Forward-corrected cross-entropy `−ln max(ε, [Qᵀσ(z)]_ȳ)`.
pub fn loss_fwd(q: &TransitionMatrix, logits: &[f64], ybar: usize) -> LossOutput {
    let p = softmax(logits);
    let (loss, grad_logits, _) = corrected_ce(&q.column(ybar), &p);
    LossOutput { loss, grad_logits }
}

/// Components `w_k ℓ_k` with `w = e_ȳᵀ Q⁻¹`; their sum is the URE loss.
pub fn ure_components(
    q_inv: &InverseTransition,
    ybar: usize,
    per_class_losses: &[f64],
) -> Vec<f64> {
    q_inv
        .row(ybar)
        .iter()
        .zip(per_class_losses)
        .map(|(w, l)| w * l)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UreOutput {
    pub components: Vec<f64>,
    pub loss: f64,
    /// Gradient of the uncorrected sum of components.
    pub grad_logits: Vec<f64>,
}

/// Unbiased risk estimator for one sample.
pub fn loss_ure(q_inv: &InverseTransition, logits: &[f64], ybar: usize) -> UreOutput {
    let components = ure_components(q_inv, ybar, &per_class_ce(logits));
    let loss = components.iter().sum();
    let w = q_inv.row(ybar);
    let w_sum: f64 = w.iter().sum();
    let p = softmax(logits);
    // Σ_k w_k ∂ℓ_k/∂z = Σ_k w_k (p − e_k) = (Σ w) p − w
    let grad_logits = p.iter().zip(w).map(|(pk, wk)| w_sum * pk - wk).collect();
    UreOutput {
        components,
        loss,
        grad_logits,
    }
}

/// Gradient of `Σ_k coef_k w_k ℓ_k(z)` with respect to `z`.
pub(crate) fn ure_weighted_grad(w: &[f64], coef: &[f64], p: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().zip(coef).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(w.iter().zip(coef))
        .map(|(pk, (wk, ck))| s * pk - ck * wk)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpeVariant {
    /// No transition layer.
    I,
    /// Fixed transition layer `Q`.
    F,
    /// Trainable transition layer.
    T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpeOutput {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
    /// `∂loss/∂T` (row-major C×C) for variant T, zero outside column `ȳ`.
    pub grad_table: Option<Vec<f64>>,
}

/// Complementary probability estimation loss. `table` is ignored for variant I,
/// is the fixed `Q` for F and the current trainable `T` for T.
pub fn loss_cpe(
    variant: CpeVariant,
    table: &TransitionMatrix,
    logits: &[f64],
    ybar: usize,
) -> CpeOutput {
    match variant {
        CpeVariant::I => {
            let mut grad = softmax(logits);
            let p = grad[ybar];
            if p <= EPS_PROB {
                return CpeOutput {
                    loss: -EPS_PROB.ln(),
                    grad_logits: vec![0.0; logits.len()],
                    grad_table: None,
                };
            }
            grad[ybar] -= 1.0;
            CpeOutput {
                loss: -p.ln(),
                grad_logits: grad,
                grad_table: None,
            }
        }
        CpeVariant::F => {
            let LossOutput { loss, grad_logits } = loss_fwd(table, logits, ybar);
            CpeOutput {
                loss,
                grad_logits,
                grad_table: None,
            }
        }
        CpeVariant::T => {
            let c = table.c();
            let p = softmax(logits);
            let (loss, grad_logits, grad_col) = corrected_ce(&table.column(ybar), &p);
            let mut grad_table = vec![0.0; c * c];
            if let Some(col) = grad_col {
                for (k, g) in col.into_iter().enumerate() {
                    grad_table[k * c + ybar] = g;
                }
            }
            CpeOutput {
                loss,
                grad_logits,
                grad_table: Some(grad_table),
            }
        }
    }
}

/// A row-stochastic, zero-diagonal transition layer parameterized by a softmax
/// over the C−1 off-diagonal logits of each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainableTransition {
    c: usize,
    /// Row-major `C × (C−1)`; entry `(k, m)` maps to column `m` if `m < k`, else `m + 1`.
    theta: Vec<f64>,
}

impl TrainableTransition {
    pub fn uniform(c: usize) -> Self {
        TrainableTransition {
            c,
            theta: vec![0.0; c * (c - 1)],
        }
    }

    /// Starts at `q`'s off-diagonal distribution (floored at 1e-6 so that
    /// structural zeros stay reachable).
    pub fn from_matrix(q: &TransitionMatrix) -> Self {
        let c = q.c();
        let mut theta = Vec::with_capacity(c * (c - 1));
        for k in 0..c {
            for j in (0..c).filter(|&j| j != k) {
                theta.push(q.get(k, j).max(1e-6).ln());
            }
        }
        TrainableTransition { c, theta }
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn col(k: usize, m: usize) -> usize {
        if m < k {
            m
        } else {
            m + 1
        }
    }

    pub fn matrix(&self) -> TransitionMatrix {
        let c = self.c;
        let mut data = vec![0.0; c * c];
        for k in 0..c {
            let row = &self.theta[k * (c - 1)..(k + 1) * (c - 1)];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|t| (t - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (m, e) in exps.into_iter().enumerate() {
                data[k * c + Self::col(k, m)] = e / sum;
            }
        }
        TransitionMatrix::from_flat(c, data).expect("softmax rows are stochastic")
    }

    /// Chains `∂loss/∂T` through the row softmax to `∂loss/∂θ`.
    pub fn grad_params(&self, matrix: &TransitionMatrix, grad_table: &[f64]) -> Vec<f64> {
        let c = self.c;
        let mut out = vec![0.0; c * (c - 1)];
        for k in 0..c {
            let dot: f64 = (0..c)
                .map(|j| matrix.get(k, j) * grad_table[k * c + j])
                .sum();
            for m in 0..c - 1 {
                let j = Self::col(k, m);
                out[k * (c - 1) + m] = matrix.get(k, j) * (grad_table[k * c + j] - dot);
            }
        }
        out
    }
}

/// `α · ce_mean + (1 − α)(C − 1) · fwd_mean`.
pub fn combined_risk(alpha: f64, ce_mean: f64, fwd_mean: f64, c: usize) -> f64 {
    alpha * ce_mean + (1.0 - alpha) * (c as f64 - 1.0) * fwd_mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::{invert, make_cyclic, make_uniform};

    fn one_hot_logits(c: usize, at: usize) -> Vec<f64> {
        (0..c).map(|k| if k == at { 60.0 } else { 0.0 }).collect()
    }

    #[test]
    fn softmax_sums_to_one() {
        for z in [
            vec![1.0, 2.0, 3.0],
            vec![1000.0, -1000.0, 0.0],
            vec![0.0; 7],
        ] {
            assert!((softmax(&z).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fwd_uniform_one_hot_prediction() {
        let q = make_uniform(10).unwrap();
        let out = loss_fwd(&q, &one_hot_logits(10, 3), 7);
        assert!((out.loss - 9f64.ln()).abs() < 1e-12);
        assert!((out.loss - 2.19722).abs() < 1e-5);
    }

    #[test]
    fn fwd_cyclic_is_zero_loss() {
        let q = make_cyclic(6).unwrap();
        let out = loss_fwd(&q, &one_hot_logits(6, 2), 3);
        assert!(out.loss.abs() < 1e-12);
    }

    #[test]
    fn fwd_clamps_impossible_labels() {
        let q = make_cyclic(4).unwrap();
        // All mass on class 0, whose only complementary label is 1.
        let out = loss_fwd(&q, &[200.0, 0.0, 0.0, 0.0], 3);
        assert!((out.loss + EPS_PROB.ln()).abs() < 1e-9);
        assert!(out.grad_logits.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn ure_permutation_is_plain_ce() {
        let q = make_cyclic(5).unwrap();
        let inv = invert(&q).unwrap();
        let z = [0.3, -1.2, 2.0, 0.1, 0.7];
        for ybar in 0..5 {
            // Class y emits (y+1) mod 5, so ȳ reveals y = ȳ − 1.
            let y = (ybar + 4) % 5;
            let ure = loss_ure(&inv, &z, ybar);
            let ce = loss_ce(&z, y);
            assert!((ure.loss - ce.loss).abs() < 1e-12);
            for (a, b) in ure.grad_logits.iter().zip(&ce.grad_logits) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ure_goes_negative_when_the_complementary_label_is_ruled_out() {
        let inv = invert(&make_uniform(10).unwrap()).unwrap();
        // Uniform Q⁻¹ puts weight −(C−2) on ȳ; a large ℓ_ȳ drives that component negative.
        let mut z = vec![0.0; 10];
        z[4] = -20.0;
        let out = loss_ure(&inv, &z, 4);
        assert!(out.components[4] < 0.0);
        assert!(out
            .components
            .iter()
            .enumerate()
            .all(|(k, v)| k == 4 || *v > 0.0));
        assert!(out.loss < 0.0);
    }

    #[test]
    fn cpe_identity_behaviour() {
        let q = make_uniform(5).unwrap();
        let hit = loss_cpe(CpeVariant::I, &q, &one_hot_logits(5, 2), 2);
        assert!(hit.loss < 1e-20);
        let miss = loss_cpe(CpeVariant::I, &q, &[800.0, 0.0, 0.0, 0.0, 0.0], 2);
        assert!((miss.loss + EPS_PROB.ln()).abs() < 1e-9);
    }

    #[test]
    fn cpe_t_at_uniform_matches_fwd() {
        let t = TrainableTransition::uniform(6);
        let q = make_uniform(6).unwrap();
        assert_eq!(t.matrix(), q);
        let z = [0.1, 0.5, -0.3, 1.2, 0.0, -0.8];
        let a = loss_cpe(CpeVariant::T, &t.matrix(), &z, 4);
        let b = loss_fwd(&q, &z, 4);
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grad_logits, b.grad_logits);
    }

    #[test]
    fn trainable_transition_from_matrix() {
        let q = make_uniform(5).unwrap();
        let t = TrainableTransition::from_matrix(&q);
        for (a, b) in t.matrix().as_flat().iter().zip(q.as_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(t.matrix().has_zero_diagonal());
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_risk(1.0, 2.0, 1.0, 10), 2.0);
        assert_eq!(combined_risk(0.0, 2.0, 1.0, 10), 9.0);
        assert!((combined_risk(0.5, 2.0, 1.0, 10) - 5.5).abs() < 1e-15);
    }
}
