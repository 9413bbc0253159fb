mod common;

use common::*;
use gradood::evalharness::*;
use proptest::prelude::*;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-20i32..20).prop_map(f64::from), -50.0f64..50.0], 1..120)
}

proptest! {
    #[test]
    fn auroc_equals_pairwise(id in scores(), ood in scores()) {
        prop_assert_eq!(auroc(&id, &ood).unwrap(), pairwise_auroc(&id, &ood));
    }

    #[test]
    fn auroc_swap_symmetry(id in scores(), ood in scores()) {
        let a = auroc(&id, &ood).unwrap();
        let b = auroc(&ood, &id).unwrap();
        prop_assert_eq!(a + b, 1.0);
    }

    #[test]
    fn auroc_invariant_under_monotone_maps(id in scores(), ood in scores()) {
        let f = |v: &f64| (v / 10.0).tanh() * 3.0 + v.powi(3) * 1e-3;
        let id2: Vec<f64> = id.iter().map(f).collect();
        let ood2: Vec<f64> = ood.iter().map(f).collect();
        prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&id2, &ood2).unwrap());
    }

    #[test]
    fn fpr_matches_sweep_and_is_monotone(id in scores(), ood in scores()) {
        prop_assert_eq!(fpr95(&id, &ood).unwrap(), sweep_fpr(&id, &ood, 0.95));
        prop_assert_eq!(calibrate_lambda(&id, 0.95).unwrap(), sweep_lambda(&id, 0.95));
        let mut last = 0.0;
        for t in [0.1, 0.3, 0.5, 0.8, 0.95, 1.0] {
            let f = fpr_at(&id, &ood, t).unwrap();
            prop_assert!(f >= last);
            last = f;
            let lambda = calibrate_lambda(&id, t).unwrap();
            let kept = id.iter().filter(|&&s| s >= lambda).count() as f64;
            prop_assert!(kept >= t * id.len() as f64 - 1e-9);
        }
    }

    #[test]
    fn histogram_matches_edge_scan(values in scores(), bins in 1usize..40) {
        let h = histogram(&values, bins).unwrap();
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        let mut want = vec![0usize; bins];
        for &v in &values {
            let b = (0..bins).find(|&b| v >= h.edges[b] && (v < h.edges[b + 1] || b == bins - 1)).unwrap();
            want[b] += 1;
        }
        prop_assert_eq!(h.counts, want);
    }
}

#[test]
fn worked_examples() {
    let ints: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(calibrate_lambda(&ints, 0.95).unwrap(), 6.0);
    let ood: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(fpr95(&ints, &ood).unwrap(), 0.5);
    assert_eq!(auroc(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 0.25);
    assert_eq!(auroc(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert_eq!(auroc(&[1.0, 1.0], &[1.0]).unwrap(), 0.5);
}

#[test]
fn empty_inputs_are_rejected() {
    assert!(auroc(&[], &[1.0]).is_err());
    assert!(calibrate_lambda(&[], 0.95).is_err());
    assert!(histogram(&[1.0], 0).is_err());
}
