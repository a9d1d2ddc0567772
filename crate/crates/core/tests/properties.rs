use bicl::learner::{
    evaluate, loss_ce, loss_cpe, loss_fwd, loss_ure, softmax, Architecture, ClassifierParams,
    CpeVariant,
};
use bicl::metrics::{empirical_transition, noise_rate};
use bicl::protocol::{
    annotate_rule_based, assign_candidates, gen_blobs, sample_from_q, CandidateMode,
};
use bicl::rng;
use bicl::transition::{invert, make_bicl_analysis, make_dense_random};
use proptest::prelude::*;

fn logits(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0..8.0f64, c)
}

fn case() -> impl Strategy<Value = (usize, Vec<f64>, usize, u64)> {
    (3usize..=10).prop_flat_map(|c| (Just(c), logits(c), 0..c, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ure_is_unbiased_for_invertible_q((c, z, _, seed) in case()) {
        let q = make_dense_random(c, seed).unwrap();
        let inv = invert(&q);
        prop_assume!(inv.is_ok());
        let inv = inv.unwrap();
        for y in 0..c {
            let expected: f64 = (0..c).map(|yb| q.get(y, yb) * loss_ure(&inv, &z, yb).loss).sum();
            prop_assert!((expected - loss_ce(&z, y).loss).abs() < 1e-9);
        }
    }

    #[test]
    fn fwd_and_cpe_f_agree((c, z, yb, seed) in case()) {
        let q = make_dense_random(c, seed).unwrap();
        let a = loss_fwd(&q, &z, yb);
        let b = loss_cpe(CpeVariant::F, &q, &z, yb);
        prop_assert_eq!(a.loss, b.loss);
        prop_assert_eq!(a.grad_logits, b.grad_logits);
    }

    #[test]
    fn probabilities_are_normalized((c, z, _, seed) in case()) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q = make_dense_random(c, seed).unwrap();
        prop_assert!((q.forward_map(&p).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evaluation_ignores_logit_shifts(seed in any::<u64>(), shift in -50.0..50.0f64) {
        let ds = gen_blobs(4, 10, 3, 1.0, seed).unwrap();
        let params = ClassifierParams::init(Architecture::Linear, 3, 4, &mut rng::seeded(seed)).unwrap();
        let mut shifted = params.clone();
        // Linear layout is weights then biases; shifting every bias shifts every logit.
        let n = shifted.values.len();
        for b in &mut shifted.values[n - 4..] {
            *b += shift;
        }
        prop_assert_eq!(evaluate(&params, &ds).unwrap(), evaluate(&shifted, &ds).unwrap());
    }

    #[test]
    fn groups_share_sets_and_labels_stay_inside(seed in any::<u64>(), k in 1usize..=5, groups in 1usize..=6) {
        let c = 6;
        let ds = gen_blobs(c, 8, 2, 1.0, seed).unwrap();
        let group_of: Vec<usize> = (0..ds.n()).map(|i| (i * 7).wrapping_add(seed as usize) % groups).collect();
        let ca = assign_candidates(CandidateMode::PerCluster, &group_of, c, k, seed).unwrap();
        prop_assert_eq!(ca.n_groups(), groups);
        let cds = annotate_rule_based(&ds, &ca, &group_of, 0.0, seed).unwrap();
        prop_assert_eq!(noise_rate(&cds).unwrap(), 0.0);
        for (i, &g) in group_of.iter().enumerate() {
            let set = ca.set(g);
            let y = ds.labels()[i];
            let allowed: Vec<usize> = set.iter().copied().filter(|&j| j != y).collect();
            if allowed.is_empty() {
                prop_assert_ne!(cds.cl()[i], y);
            } else {
                prop_assert!(allowed.contains(&cds.cl()[i]));
            }
        }
    }

    #[test]
    fn annotation_is_deterministic(seed in any::<u64>()) {
        let ds = gen_blobs(5, 6, 2, 1.0, seed).unwrap();
        let q = make_bicl_analysis(5, 2, seed).unwrap();
        prop_assert_eq!(sample_from_q(&ds, &q, seed).unwrap(), sample_from_q(&ds, &q, seed).unwrap());
        let emp = empirical_transition(&sample_from_q(&ds, &q, seed).unwrap(), 0.5).unwrap();
        for k in 0..5 {
            prop_assert!((emp.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
