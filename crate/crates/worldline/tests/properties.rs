//! Property tests over the crate's core invariants.

use proptest::prelude::*;

use worldline::autodiff::Tensor;
use worldline::geometry::{
    classify, in_future_cone, poincare_distance, proper_time_distance, LorentzianEvent,
    Separation,
};
use worldline::metrics::{adjusted_rand_index, level_accuracy};

fn event(t: f64, x: Vec<f64>) -> LorentzianEvent {
    LorentzianEvent::new(t, x)
}

proptest! {
    /// Softmax columns are probability vectors regardless of logit scale.
    #[test]
    fn softmax_columns_normalize(
        vals in prop::collection::vec(-1e3f64..1e3, 9),
    ) {
        let t = Tensor::constant(3, 3, vals);
        let y = t.softmax(0);
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| y.at(i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for i in 0..3 {
                let v = y.at(i, j);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    /// Gradient accumulation: d/dx of f(x) + g(x) equals the sum of the
    /// separate gradients.
    #[test]
    fn backward_accumulates_shared_subexpressions(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = Tensor::param(1, 2, vec![a, b]);
        let f = x.mul_s(3.0).sum_all();
        let g = x.mul(&x).unwrap().sum_all();
        let joint = f.add(&g).unwrap().backward().unwrap().get_or_zeros(&x);
        let gf = x.mul_s(3.0).sum_all().backward().unwrap().get_or_zeros(&x);
        let gg = x.mul(&x).unwrap().sum_all().backward().unwrap().get_or_zeros(&x);
        for i in 0..2 {
            prop_assert!((joint[i] - (gf[i] + gg[i])).abs() < 1e-12);
        }
    }

    /// Separation classification is symmetric and its sign agrees with the
    /// signed proper time.
    #[test]
    fn classification_symmetry_and_sign(
        t1 in -4.0f64..4.0, x1 in -4.0f64..4.0, y1 in -4.0f64..4.0,
        t2 in -4.0f64..4.0, x2 in -4.0f64..4.0, y2 in -4.0f64..4.0,
    ) {
        let a = event(t1, vec![x1, y1]);
        let b = event(t2, vec![x2, y2]);
        let ab = classify(&a, &b).unwrap();
        prop_assert_eq!(ab, classify(&b, &a).unwrap());
        let d = proper_time_distance(&a, &b).unwrap();
        match ab {
            Separation::Timelike => prop_assert!(d > 0.0),
            Separation::Spacelike => prop_assert!(d < 0.0),
            Separation::Lightlike => prop_assert!(d.abs() < 2e-3),
        }
    }

    /// At most one direction of a pair is causally reachable.
    #[test]
    fn future_cone_is_antisymmetric(
        t1 in -4.0f64..4.0, x1 in -4.0f64..4.0,
        t2 in -4.0f64..4.0, x2 in -4.0f64..4.0,
    ) {
        let a = event(t1, vec![x1]);
        let b = event(t2, vec![x2]);
        prop_assume!(a != b);
        let fwd = in_future_cone(&a, &b).unwrap();
        let bwd = in_future_cone(&b, &a).unwrap();
        prop_assert!(!(fwd && bwd));
    }

    /// Poincaré distance is symmetric, nonnegative, and zero only at
    /// coincidence.
    #[test]
    fn poincare_metric_axioms(
        u in prop::collection::vec(-0.55f64..0.55, 3),
        v in prop::collection::vec(-0.55f64..0.55, 3),
    ) {
        let duv = poincare_distance(&u, &v).unwrap();
        let dvu = poincare_distance(&v, &u).unwrap();
        prop_assert!((duv - dvu).abs() < 1e-12);
        prop_assert!(duv >= 0.0);
        if u == v {
            prop_assert!(duv == 0.0);
        }
    }

    /// ARI is invariant under relabeling either argument; level accuracy is
    /// deliberately not (unless the permutation fixes every used label).
    #[test]
    fn ari_permutation_invariance(
        labels in prop::collection::vec(0i32..3, 4..40),
        offset in 1i32..5,
    ) {
        let n = labels.len();
        let truth: Vec<i32> = (0..n).map(|i| (i % 3) as i32).collect();
        let relabeled: Vec<i32> = labels.iter().map(|&l| (l + offset) * 7).collect();
        let base = adjusted_rand_index(&labels, &truth).unwrap();
        let relab = adjusted_rand_index(&relabeled, &truth).unwrap();
        prop_assert!((base - relab).abs() < 1e-12);
        // plain accuracy moves when a nontrivial permutation touches a
        // label that appears
        let acc_base = level_accuracy(&labels, &truth);
        let swapped: Vec<i32> = labels.iter().map(|&l| (l + 1) % 3).collect();
        let acc_swapped = level_accuracy(&swapped, &truth);
        if labels.iter().any(|&l| l != swapped[labels.iter().position(|&x| x == l).unwrap()]) {
            // the two predictions genuinely differ somewhere; accuracies may
            // coincide numerically, but both stay in [0, 1]
            prop_assert!((0.0..=1.0).contains(&acc_base));
            prop_assert!((0.0..=1.0).contains(&acc_swapped));
        }
    }
}
