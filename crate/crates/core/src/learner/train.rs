use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{
    combined_risk, loss_ce, loss_cpe, loss_fwd, per_class_ce, softmax, ure_weighted_grad,
    CpeVariant, TrainableTransition,
};
use super::model::{Architecture, ClassifierParams};
use crate::error::{Error, Result};
use crate::numfmt::{fmt_sig, ser_sig12, ser_sig12_opt_vec, ser_sig12_vec};
use crate::protocol::{ComplementaryDataset, LabeledDataset};
use crate::rng;
use crate::transition::{invert, InverseTransition, TransitionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UreCorrection {
    None,
    /// Negative class-wise risk components are clipped to zero.
    Nn,
    /// Negative class-wise risk components are pushed back up by gradient ascent.
    Ga,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "option")]
pub enum LossKind {
    /// Ordinary cross-entropy on the true labels (fully supervised reference).
    Ce,
    Fwd,
    Ure(UreCorrection),
    Cpe(CpeVariant),
}

impl LossKind {
    pub fn name(&self) -> String {
        match self {
            LossKind::Ce => "ce".into(),
            LossKind::Fwd => "fwd".into(),
            LossKind::Ure(UreCorrection::None) => "ure".into(),
            LossKind::Ure(UreCorrection::Nn) => "ure-nn".into(),
            LossKind::Ure(UreCorrection::Ga) => "ure-ga".into(),
            LossKind::Cpe(CpeVariant::I) => "cpe-i".into(),
            LossKind::Cpe(CpeVariant::F) => "cpe-f".into(),
            LossKind::Cpe(CpeVariant::T) => "cpe-t".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ce" => LossKind::Ce,
            "fwd" => LossKind::Fwd,
            "ure" => LossKind::Ure(UreCorrection::None),
            "ure-nn" | "ure-tnn" => LossKind::Ure(UreCorrection::Nn),
            "ure-ga" | "ure-tga" => LossKind::Ure(UreCorrection::Ga),
            "cpe-i" => LossKind::Cpe(CpeVariant::I),
            "cpe-f" => LossKind::Cpe(CpeVariant::F),
            "cpe-t" => LossKind::Cpe(CpeVariant::T),
            other => return Err(Error::invalid(format!("unknown loss {other:?}"))),
        })
    }

    fn needs_q(&self) -> bool {
        matches!(
            self,
            LossKind::Fwd | LossKind::Ure(_) | LossKind::Cpe(CpeVariant::F)
        )
    }
}

/// What to optimize. `q` is required by FWD, URE and CPE-F and seeds CPE-T
/// (uniform when absent). A `seed_set` switches FWD to the combined objective
/// `α·CE(seed set) + (1−α)(C−1)·FWD`.
#[derive(Clone, Debug)]
pub struct LossSpec {
    pub kind: LossKind,
    pub q: Option<TransitionMatrix>,
    pub alpha: f64,
    pub seed_set: Option<LabeledDataset>,
}

impl LossSpec {
    pub fn new(kind: LossKind, q: Option<TransitionMatrix>) -> Self {
        LossSpec {
            kind,
            q,
            alpha: 0.5,
            seed_set: None,
        }
    }

    pub fn combined(q: TransitionMatrix, seed_set: LabeledDataset, alpha: f64) -> Self {
        LossSpec {
            kind: LossKind::Fwd,
            q: Some(q),
            alpha,
            seed_set: Some(seed_set),
        }
    }

    fn validate(&self, c: usize) -> Result<()> {
        if self.kind.needs_q() && self.q.is_none() {
            return Err(Error::invalid(format!(
                "loss {} needs a transition matrix",
                self.kind.name()
            )));
        }
        if let Some(q) = &self.q {
            if q.c() != c {
                return Err(Error::shape(
                    format!("Q over {c} classes"),
                    format!("Q over {}", q.c()),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha {} not in [0, 1]",
                self.alpha
            )));
        }
        if let Some(seed) = &self.seed_set {
            if self.kind != LossKind::Fwd {
                return Err(Error::invalid("a seed set is only used with the FWD loss"));
            }
            if seed.is_empty() || seed.c() != c {
                return Err(Error::invalid("seed set must be non-empty and share C"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            optimizer: Optimizer::Adam,
            seed: 0,
            arch: Architecture::Mlp { hidden: 64 },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid("weight decay must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(serialize_with = "ser_sig12")]
    pub accuracy: f64,
    /// `None` for classes absent from the test set.
    #[serde(serialize_with = "ser_sig12_opt_vec")]
    pub per_class_accuracy: Vec<Option<f64>>,
}

/// Accuracy of `argmax_k g_k(x)` (lowest index on ties), overall and per true class.
pub fn evaluate(params: &ClassifierParams, test: &LabeledDataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if test.d() != params.d || test.c() != params.c {
        return Err(Error::shape(
            format!("d={}, C={}", params.d, params.c),
            format!("d={}, C={}", test.d(), test.c()),
        ));
    }
    let c = params.c;
    let mut hits = vec![0usize; c];
    let mut totals = vec![0usize; c];
    for i in 0..test.n() {
        let y = test.labels()[i];
        totals[y] += 1;
        if params.predict(test.row(i)) == y {
            hits[y] += 1;
        }
    }
    Ok(Evaluation {
        accuracy: hits.iter().sum::<usize>() as f64 / test.n() as f64,
        per_class_accuracy: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss: String,
    pub epochs: usize,
    /// Mean training objective per epoch.
    #[serde(serialize_with = "ser_sig12_vec")]
    pub train_loss: Vec<f64>,
    #[serde(serialize_with = "ser_sig12_vec")]
    pub test_accuracy: Vec<f64>,
    pub final_eval: Evaluation,
    #[serde(skip)]
    pub params: Option<ClassifierParams>,
    /// The learned transition layer for CPE-T.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learned_transition: Option<TransitionMatrix>,
}

impl TrainReport {
    /// `epoch,loss,test_acc` rows, epochs counted from 1.
    pub fn write_curves_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "loss", "test_acc"])?;
        for (e, (l, a)) in self.train_loss.iter().zip(&self.test_accuracy).enumerate() {
            out.write_record([(e + 1).to_string(), fmt_sig(*l, 12), fmt_sig(*a, 12)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Class-wise URE risk components after a correction, with the coefficient
/// each raw component carries in the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedRisk {
    pub components: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub objective: f64,
}

/// Applies a URE correction to batch-level class-wise risks `R_k`.
///
/// - none: objective `Σ R_k`, every coefficient 1.
/// - nn: objective `Σ max(R_k, 0)`; clipped components get coefficient 0.
/// - ga: when some `R_k < 0`, descend on `−Σ_{R_k<0} R_k` (ascent on the negative
///   components, coefficient −1) and ignore the rest; otherwise as none.
///   The reported objective is the uncorrected `Σ R_k`.
pub fn correct_ure_risk(risks: &[f64], correction: UreCorrection) -> CorrectedRisk {
    match correction {
        UreCorrection::None => CorrectedRisk {
            components: risks.to_vec(),
            coefficients: vec![1.0; risks.len()],
            objective: risks.iter().sum(),
        },
        UreCorrection::Nn => {
            let components: Vec<f64> = risks.iter().map(|r| r.max(0.0)).collect();
            CorrectedRisk {
                coefficients: risks
                    .iter()
                    .map(|r| if *r >= 0.0 { 1.0 } else { 0.0 })
                    .collect(),
                objective: components.iter().sum(),
                components,
            }
        }
        UreCorrection::Ga => {
            let objective = risks.iter().sum();
            if risks.iter().any(|r| *r < 0.0) {
                CorrectedRisk {
                    components: risks.iter().map(|r| r.min(0.0)).collect(),
                    coefficients: risks
                        .iter()
                        .map(|r| if *r < 0.0 { -1.0 } else { 0.0 })
                        .collect(),
                    objective,
                }
            } else {
                CorrectedRisk {
                    components: risks.to_vec(),
                    coefficients: vec![1.0; risks.len()],
                    objective,
                }
            }
        }
    }
}

/// Loss and parameter gradient of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGrad {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Gradient for the CPE-T transition parameters.
    pub transition_grads: Option<Vec<f64>>,
}

/// Combined objective on one ordinary-labeled batch and one complementary batch:
/// `α · mean CE(seed) + (1 − α)(C − 1) · mean FWD(cl)`.
pub fn loss_combined(
    alpha: f64,
    seed_batch: &LabeledDataset,
    cl_batch: &ComplementaryDataset,
    q: &TransitionMatrix,
    params: &ClassifierParams,
) -> Result<BatchGrad> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} not in [0, 1]")));
    }
    let c = params.c;
    let mut grads = vec![0.0; params.n_params()];
    let mut ce_mean = 0.0;
    let mut fwd_mean = 0.0;
    if !seed_batch.is_empty() {
        let m = seed_batch.n() as f64;
        for i in 0..seed_batch.n() {
            let x = seed_batch.row(i);
            let cache = params.forward(x);
            let out = loss_ce(&cache.logits, seed_batch.labels()[i]);
            ce_mean += out.loss / m;
            params.backward(x, &cache, &out.grad_logits, alpha / m, &mut grads);
        }
    }
    if cl_batch.n() > 0 {
        let n = cl_batch.n() as f64;
        let scale = (1.0 - alpha) * (c as f64 - 1.0) / n;
        for i in 0..cl_batch.n() {
            let x = cl_batch.base().row(i);
            let cache = params.forward(x);
            let out = loss_fwd(q, &cache.logits, cl_batch.cl()[i]);
            fwd_mean += out.loss / n;
            params.backward(x, &cache, &out.grad_logits, scale, &mut grads);
        }
    }
    Ok(BatchGrad {
        loss: combined_risk(alpha, ce_mean, fwd_mean, c),
        grads,
        transition_grads: None,
    })
}

/// Everything a batch gradient needs besides the data.
pub struct Objective<'a> {
    kind: LossKind,
    q: Option<&'a TransitionMatrix>,
    q_inv: Option<InverseTransition>,
    alpha: f64,
    seed_set: Option<&'a LabeledDataset>,
}

impl<'a> Objective<'a> {
    pub fn new(spec: &'a LossSpec, c: usize) -> Result<Self> {
        spec.validate(c)?;
        let q_inv = match spec.kind {
            LossKind::Ure(_) => Some(invert(spec.q.as_ref().expect("validated"))?),
            _ => None,
        };
        Ok(Objective {
            kind: spec.kind,
            q: spec.q.as_ref(),
            q_inv,
            alpha: spec.alpha,
            seed_set: spec.seed_set.as_ref(),
        })
    }

    /// Mean objective over `batch` (indices into `ds`) and its gradient.
    /// `transition` is the current CPE-T layer, if any.
    pub fn batch_grad(
        &self,
        params: &ClassifierParams,
        ds: &ComplementaryDataset,
        batch: &[usize],
        transition: Option<&TrainableTransition>,
    ) -> Result<BatchGrad> {
        let b = batch.len() as f64;
        let mut grads = vec![0.0; params.n_params()];
        let mut loss = 0.0;
        let x = |i: usize| ds.base().row(i);
        match self.kind {
            LossKind::Ce => {
                for &i in batch {
                    let cache = params.forward(x(i));
                    let out = loss_ce(&cache.logits, ds.base().labels()[i]);
                    loss += out.loss / b;
                    params.backward(x(i), &cache, &out.grad_logits, 1.0 / b, &mut grads);
                }
            }
            LossKind::Fwd => {
                let q = self.q.expect("validated");
                if let Some(seed) = self.seed_set {
                    return loss_combined(self.alpha, seed, &ds.subset(batch), q, params);
                }
                for &i in batch {
                    let cache = params.forward(x(i));
                    let out = loss_fwd(q, &cache.logits, ds.cl()[i]);
                    loss += out.loss / b;
                    params.backward(x(i), &cache, &out.grad_logits, 1.0 / b, &mut grads);
                }
            }
            LossKind::Ure(correction) => {
                let q_inv = self.q_inv.as_ref().expect("inverted in new");
                let c = params.c;
                let caches: Vec<_> = batch.iter().map(|&i| params.forward(x(i))).collect();
                let mut risks = vec![0.0; c];
                for (cache, &i) in caches.iter().zip(batch) {
                    let w = q_inv.row(ds.cl()[i]);
                    for (r, (wk, lk)) in risks
                        .iter_mut()
                        .zip(w.iter().zip(per_class_ce(&cache.logits)))
                    {
                        *r += wk * lk / b;
                    }
                }
                let corrected = correct_ure_risk(&risks, correction);
                loss = corrected.objective;
                for (cache, &i) in caches.iter().zip(batch) {
                    let w = q_inv.row(ds.cl()[i]);
                    let g = ure_weighted_grad(w, &corrected.coefficients, &softmax(&cache.logits));
                    params.backward(x(i), cache, &g, 1.0 / b, &mut grads);
                }
            }
            LossKind::Cpe(variant) => {
                let table = match (variant, transition) {
                    (CpeVariant::T, Some(t)) => t.matrix(),
                    (CpeVariant::T, None) => {
                        return Err(Error::invalid("CPE-T needs a transition layer"))
                    }
                    _ => self.q.cloned().unwrap_or_else(|| {
                        crate::transition::make_uniform(params.c).expect("C >= 2")
                    }),
                };
                let c = params.c;
                let mut grad_table = vec![0.0; c * c];
                for &i in batch {
                    let cache = params.forward(x(i));
                    let out = loss_cpe(variant, &table, &cache.logits, ds.cl()[i]);
                    loss += out.loss / b;
                    params.backward(x(i), &cache, &out.grad_logits, 1.0 / b, &mut grads);
                    if let Some(gt) = out.grad_table {
                        for (acc, g) in grad_table.iter_mut().zip(gt) {
                            *acc += g / b;
                        }
                    }
                }
                if let (CpeVariant::T, Some(t)) = (variant, transition) {
                    return Ok(BatchGrad {
                        loss,
                        grads,
                        transition_grads: Some(t.grad_params(&table, &grad_table)),
                    });
                }
            }
        }
        Ok(BatchGrad {
            loss,
            grads,
            transition_grads: None,
        })
    }
}

/// First-order optimizer state for one parameter vector. Weight decay is added
/// to the gradient as an L2 term.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: Optimizer, n: usize, lr: f64, weight_decay: f64) -> Self {
        OptimizerState {
            kind,
            lr,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            match self.kind {
                Optimizer::Sgd => params[i] -= self.lr * g,
                Optimizer::Adam => {
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Mini-batch training from complementary labels (or true labels for CE).
///
/// Streams: `(seed, 0)` initializes the weights and `(seed, 1 + epoch)` shuffles
/// each epoch, so equal inputs give bitwise-equal curves.
pub fn train(
    ds: &ComplementaryDataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
    test: &LabeledDataset,
) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.n() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if test.c() != ds.c() || test.d() != ds.base().d() {
        return Err(Error::shape(
            format!("test set with d={}, C={}", ds.base().d(), ds.c()),
            format!("d={}, C={}", test.d(), test.c()),
        ));
    }
    let c = ds.c();
    let objective = Objective::new(spec, c)?;
    let mut params =
        ClassifierParams::init(cfg.arch, ds.base().d(), c, &mut rng::stream(cfg.seed, 0))?;
    let mut opt = OptimizerState::new(
        cfg.optimizer,
        params.n_params(),
        cfg.learning_rate,
        cfg.weight_decay,
    );

    let mut transition = match spec.kind {
        LossKind::Cpe(CpeVariant::T) => Some(match &spec.q {
            Some(q) => TrainableTransition::from_matrix(q),
            None => TrainableTransition::uniform(c),
        }),
        _ => None,
    };
    let mut t_opt = transition
        .as_ref()
        .map(|t| OptimizerState::new(cfg.optimizer, t.params().len(), cfg.learning_rate, 0.0));

    let mut order: Vec<usize> = (0..ds.n()).collect();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut test_accuracy = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, 1 + epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let g = objective.batch_grad(&params, ds, batch, transition.as_ref())?;
            total += g.loss * batch.len() as f64;
            opt.step(&mut params.values, &g.grads);
            if let (Some(t), Some(tg), Some(to)) =
                (transition.as_mut(), g.transition_grads, t_opt.as_mut())
            {
                to.step(t.params_mut(), &tg);
            }
        }
        if !total.is_finite() {
            return Err(Error::invalid(format!(
                "training diverged at epoch {}",
                epoch + 1
            )));
        }
        train_loss.push(total / ds.n() as f64);
        test_accuracy.push(evaluate(&params, test)?.accuracy);
    }

    Ok(TrainReport {
        loss: spec.kind.name(),
        epochs: cfg.epochs,
        train_loss,
        test_accuracy,
        final_eval: evaluate(&params, test)?,
        params: Some(params),
        learned_transition: transition.map(|t| t.matrix()),
    })
}
