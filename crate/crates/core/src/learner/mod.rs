//! Softmax classifiers trained from complementary labels.
//!
//! Gradients are written by hand: [`loss`] gives each loss's derivative with
//! respect to the logits, [`model`] backpropagates logit gradients into the
//! weights, and [`train`] drives mini-batch Adam/SGD.

pub mod loss;
pub mod model;
pub mod train;

pub use loss::{
    combined_risk, loss_ce, loss_cpe, loss_fwd, loss_ure, per_class_ce, softmax, ure_components,
    CpeOutput, CpeVariant, LossOutput, TrainableTransition, UreOutput, EPS_PROB,
};
pub use model::{argmax, Architecture, ClassifierParams, ForwardCache};
pub use train::{
    correct_ure_risk, evaluate, loss_combined, train, BatchGrad, CorrectedRisk, Evaluation,
    LossKind, LossSpec, Objective, Optimizer, OptimizerState, TrainConfig, TrainReport,
    UreCorrection,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{gen_blobs, sample_from_q, BlobGenerator, LabeledDataset};
    use crate::rng;
    use crate::transition::{
        counterexample_sparse, make_biased_three_level, make_bicl_analysis, make_uniform,
    };
    use crate::Error;

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 1e-2,
            arch: Architecture::Mlp { hidden: 16 },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let gen = BlobGenerator::new(5, 4, 1.0, 2).unwrap();
        let train_ds = gen.sample(40, 0).unwrap();
        let test = gen.sample(10, 1).unwrap();
        let q = make_bicl_analysis(5, 2, 3).unwrap();
        let cds = sample_from_q(&train_ds, &q, 4).unwrap();
        for kind in [
            LossKind::Fwd,
            LossKind::Ure(UreCorrection::Nn),
            LossKind::Ure(UreCorrection::Ga),
            LossKind::Cpe(CpeVariant::T),
        ] {
            let spec = LossSpec::new(kind, Some(make_uniform(5).unwrap()));
            let a = train(&cds, &spec, &small_cfg(5), &test).unwrap();
            let b = train(&cds, &spec, &small_cfg(5), &test).unwrap();
            assert_eq!(a.train_loss, b.train_loss);
            assert_eq!(a.test_accuracy, b.test_accuracy);
            assert_eq!(a.params, b.params);
            assert_eq!(a.train_loss.len(), 5);
        }
    }

    #[test]
    fn fwd_learns_separated_blobs() {
        let gen = BlobGenerator::new(10, 8, 1.0, 11).unwrap();
        let train_ds = gen.sample(100, 0).unwrap();
        let test = gen.sample(50, 1).unwrap();
        // Full-rank Q; a sparse BICL draw can repeat a candidate set, which makes
        // two classes indistinguishable under any loss.
        let q = make_biased_three_level(10, 5).unwrap();
        let cds = sample_from_q(&train_ds, &q, 6).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        let report = train(&cds, &LossSpec::new(LossKind::Fwd, Some(q)), &cfg, &test).unwrap();
        assert!(
            report.final_eval.accuracy >= 0.85,
            "{}",
            report.final_eval.accuracy
        );
    }

    #[test]
    fn ure_rejects_singular_q() {
        let ds = gen_blobs(10, 5, 2, 1.0, 0).unwrap();
        let cds = sample_from_q(&ds, &counterexample_sparse(), 0).unwrap();
        let spec = LossSpec::new(
            LossKind::Ure(UreCorrection::None),
            Some(counterexample_sparse()),
        );
        let err = train(&cds, &spec, &small_cfg(1), &ds).unwrap_err();
        assert!(matches!(err, Error::SingularTransition { .. }));
        assert!(err.to_string().contains("FWD or CPE"));
    }

    #[test]
    fn missing_q_is_rejected() {
        let ds = gen_blobs(3, 5, 2, 1.0, 0).unwrap();
        let cds = sample_from_q(&ds, &make_uniform(3).unwrap(), 0).unwrap();
        let spec = LossSpec::new(LossKind::Fwd, None);
        assert!(train(&cds, &spec, &small_cfg(1), &ds).is_err());
    }

    #[test]
    fn nn_correction_leaves_no_negative_components() {
        let risks = [0.4, -0.2, 1.3, -0.01, 0.0];
        let out = correct_ure_risk(&risks, UreCorrection::Nn);
        assert!(out.components.iter().all(|v| *v >= 0.0));
        assert_eq!(out.coefficients, vec![1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((out.objective - 1.7).abs() < 1e-12);

        let ga = correct_ure_risk(&risks, UreCorrection::Ga);
        assert_eq!(ga.coefficients, vec![0.0, -1.0, 0.0, -1.0, 0.0]);
        let ga_pos = correct_ure_risk(&[0.1, 0.2], UreCorrection::Ga);
        assert_eq!(ga_pos.coefficients, vec![1.0, 1.0]);
    }

    #[test]
    fn nn_clipping_holds_on_real_batches() {
        // Confident training under uniform Q drives class-wise URE risks negative.
        let gen = BlobGenerator::new(10, 4, 1.0, 3).unwrap();
        let train_ds = gen.sample(30, 0).unwrap();
        let q = make_uniform(10).unwrap();
        let cds = sample_from_q(&train_ds, &q, 1).unwrap();
        let spec = LossSpec::new(LossKind::Ure(UreCorrection::None), Some(q.clone()));
        let plain = Objective::new(&spec, 10).unwrap();
        let mut params =
            ClassifierParams::init(Architecture::Linear, 4, 10, &mut rng::seeded(0)).unwrap();
        let mut opt = OptimizerState::new(Optimizer::Adam, params.n_params(), 0.05, 0.0);
        let idx: Vec<usize> = (0..cds.n()).collect();
        for _ in 0..300 {
            let g = plain.batch_grad(&params, &cds, &idx, None).unwrap();
            opt.step(&mut params.values, &g.grads);
        }
        let inv = crate::transition::invert(&q).unwrap();
        let mut risks = vec![0.0; 10];
        for &i in &idx {
            let comps = ure_components(
                &inv,
                cds.cl()[i],
                &per_class_ce(&params.logits(cds.base().row(i))),
            );
            for (r, v) in risks.iter_mut().zip(comps) {
                *r += v / idx.len() as f64;
            }
        }
        assert!(risks.iter().any(|r| *r < 0.0), "{risks:?}");
        let corrected = correct_ure_risk(&risks, UreCorrection::Nn);
        assert!(corrected.components.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn evaluate_zero_weights_predicts_class_zero() {
        let ds = gen_blobs(4, 25, 3, 1.0, 1).unwrap();
        let params = ClassifierParams::zeros(Architecture::Linear, 3, 4).unwrap();
        let ev = evaluate(&params, &ds).unwrap();
        assert_eq!(ev.accuracy, 0.25);
        assert_eq!(
            ev.per_class_accuracy,
            vec![Some(1.0), Some(0.0), Some(0.0), Some(0.0)]
        );
    }

    #[test]
    fn evaluate_memorized_set() {
        // One sample per class at a one-hot feature; identity weights memorize it.
        let c = 10;
        let mut features = vec![0.0; c * c];
        for i in 0..c {
            features[i * c + i] = 1.0;
        }
        let ds = LabeledDataset::new(c, c, features, (0..c).collect()).unwrap();
        let mut params = ClassifierParams::zeros(Architecture::Linear, c, c).unwrap();
        for k in 0..c {
            params.values[k * c + k] = 1.0;
        }
        let ev = evaluate(&params, &ds).unwrap();
        assert_eq!(ev.accuracy, 1.0);
        assert!(ev.per_class_accuracy.iter().all(|a| *a == Some(1.0)));
        let empty = ds.subset(&[]);
        assert!(evaluate(&params, &empty).is_err());
    }

    #[test]
    fn accuracy_is_frequency_weighted_per_class_mean() {
        let gen = BlobGenerator::new(4, 2, 2.0, 5).unwrap();
        let ds = gen.sample(30, 0).unwrap();
        let unbalanced = ds.subset(
            &(0..ds.n())
                .filter(|i| i % 4 != 0 || *i < 30)
                .collect::<Vec<_>>(),
        );
        let params =
            ClassifierParams::init(Architecture::Linear, 2, 4, &mut rng::seeded(3)).unwrap();
        let ev = evaluate(&params, &unbalanced).unwrap();
        let counts = unbalanced.class_counts();
        let weighted: f64 = ev
            .per_class_accuracy
            .iter()
            .zip(&counts)
            .map(|(a, n)| a.unwrap_or(0.0) * *n as f64)
            .sum::<f64>()
            / unbalanced.n() as f64;
        assert!((weighted - ev.accuracy).abs() < 1e-12);
    }

    #[test]
    fn curves_csv_header() {
        let gen = BlobGenerator::new(3, 2, 1.0, 5).unwrap();
        let ds = gen.sample(10, 0).unwrap();
        let cds = sample_from_q(&ds, &make_uniform(3).unwrap(), 1).unwrap();
        let rep = train(
            &cds,
            &LossSpec::new(LossKind::Cpe(CpeVariant::I), None),
            &small_cfg(3),
            &ds,
        )
        .unwrap();
        let mut buf = Vec::new();
        rep.write_curves_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,loss,test_acc\n1,"));
        assert_eq!(text.lines().count(), 4);
    }
}
