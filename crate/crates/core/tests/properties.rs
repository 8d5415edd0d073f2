//! Property-based invariants over randomly generated weights, exponents,
//! escape vectors and data.

use proptest::prelude::*;
use tree_sobolev::extension::harmonic_extend;
use tree_sobolev::kernels::kernel_entry;
use tree_sobolev::norms::{muckenhoupt_best_a, theoretical_constants, HardyDirection};
use tree_sobolev::norms::trace_seminorm;
use tree_sobolev::tree::{dlca, FieldRole, ScalarField, TreeWeights, VertexRef};
use tree_sobolev::walk::{
    min_depth_distribution, min_depth_distribution_recurrence, wilson_bounds, WalkProfile,
};

fn weights_and_exponent(max_n: usize) -> impl Strategy<Value = (TreeWeights, f64)> {
    (1..=max_n, 1.05f64..5.0).prop_flat_map(|(n, p)| {
        prop::collection::vec(-3.0f64..3.0, n).prop_map(move |logs| {
            let w = TreeWeights::explicit(logs.iter().map(|l| l.exp()).collect()).unwrap();
            (w, p)
        })
    })
}

fn escape_vector(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.01f64..=1.0, n - 1).prop_map(move |mid| {
            let mut q = Vec::with_capacity(n + 1);
            q.push(1.0);
            q.extend(mid);
            q.push(1.0);
            q
        })
    })
}

fn escape_and_leaves(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    escape_vector(max_n).prop_flat_map(|q| {
        let n = q.len() - 1;
        prop::collection::vec(-1.0f64..1.0, 1usize << n).prop_map(move |ls| (q.clone(), ls))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_depth_rows_are_distributions((weights, p) in weights_and_exponent(8)) {
        let profile = WalkProfile::adapted(&weights, p).unwrap();
        let n = profile.height();
        let q = profile.escape();
        prop_assert_eq!(q[0], 1.0);
        prop_assert_eq!(q[n], 1.0);
        for &qs in q {
            prop_assert!(qs > 0.0 && qs <= 1.0);
        }
        let product = min_depth_distribution(q).unwrap();
        let recurrence = min_depth_distribution_recurrence(q).unwrap();
        for s in 0..=n {
            let mut row_sum = 0.0;
            for r in 0..=n {
                row_sum += product.get(s, r);
                prop_assert!((product.get(s, r) - recurrence.get(s, r)).abs() < 1e-13);
            }
            prop_assert!((row_sum - 1.0).abs() < 1e-12, "row {} sums to {}", s, row_sum);
        }
    }

    #[test]
    fn extension_obeys_the_maximum_principle((q, leaves) in escape_and_leaves(6)) {
        let n = q.len() - 1;
        let profile = WalkProfile::from_escape(q).unwrap();
        let f = ScalarField::from_values(FieldRole::Leaves, n, leaves.clone()).unwrap();
        let ext = harmonic_extend(&profile, &f).unwrap();
        let lo = leaves.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = leaves.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &v in ext.values() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
        let tail = &ext.values()[(1 << n) - 1..];
        prop_assert_eq!(tail, &leaves[..]);
    }

    #[test]
    fn kernel_sign_follows_comparability(
        (weights, p) in weights_and_exponent(7),
        a in any::<u64>(),
        b in any::<u64>(),
    ) {
        let n = weights.height();
        let profile = WalkProfile::adapted(&weights, p).unwrap();
        let pick = |raw: u64| {
            let depth = 1 + (raw % n as u64) as usize;
            VertexRef::new(depth, (raw >> 8) % (1u64 << depth))
        };
        let (x, y) = (pick(a), pick(b));
        let entry = kernel_entry(&profile, x, y).unwrap();
        if dlca(x, y) == x.depth().min(y.depth()) {
            prop_assert!(entry >= 0.0);
        } else {
            prop_assert!(entry <= 0.0);
        }
    }

    #[test]
    fn trace_is_homogeneous_and_below_the_walk_extension(
        (weights, p) in weights_and_exponent(3),
        scale in 0.1f64..10.0,
        raw in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let n = weights.height();
        let leaves: Vec<f64> = raw[..1 << n].to_vec();
        let f = ScalarField::from_values(FieldRole::Leaves, n, leaves.clone()).unwrap();
        let tr = trace_seminorm(&weights, &f, p).unwrap();

        let profile = WalkProfile::adapted(&weights, p).unwrap();
        let ext = harmonic_extend(&profile, &f).unwrap();
        let upper = tree_sobolev::norms::sobolev_seminorm(&weights, &ext, p).unwrap();
        prop_assert!(tr.value <= upper * (1.0 + 1e-9));

        let spread = leaves.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - leaves.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 0.01 {
            prop_assert!(tr.value > 0.0);
        }

        let scaled = ScalarField::from_values(
            FieldRole::Leaves,
            n,
            leaves.iter().map(|v| v * scale).collect(),
        )
        .unwrap();
        let tr2 = trace_seminorm(&weights, &scaled, p).unwrap();
        prop_assert!(
            (tr2.value - scale * tr.value).abs() <= 1e-7 * (tr2.value + scale * tr.value + 1e-12),
            "scaling by {} took {} to {}", scale, tr.value, tr2.value
        );
    }

    #[test]
    fn muckenhoupt_constant_is_homogeneous_and_certifies_hardy(
        n in 1usize..=10,
        p in 1.1f64..4.0,
        c in 0.1f64..10.0,
        raw in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0, -1.0f64..1.0), 10),
    ) {
        let u: Vec<f64> = raw[..n].iter().map(|t| t.0).collect();
        let v: Vec<f64> = raw[..n].iter().map(|t| t.1).collect();
        let f: Vec<f64> = raw[..n].iter().map(|t| t.2).collect();
        let a = muckenhoupt_best_a(&u, &v, p, HardyDirection::Forward).unwrap();
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let ca = muckenhoupt_best_a(&cu, &v, p, HardyDirection::Forward).unwrap();
        prop_assert!((ca - c * a).abs() <= 1e-12 * ca.max(c * a));

        let cp = theoretical_constants(p).unwrap().c_p;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut acc = 0.0;
        for k in 0..n {
            acc += f[k];
            lhs += (u[k] * acc).abs().powf(p);
            rhs += (v[k] * f[k]).abs().powf(p);
        }
        prop_assert!(
            lhs.powf(1.0 / p) <= cp * a * rhs.powf(1.0 / p) * (1.0 + 1e-9),
            "Hardy bound violated: {} > {}", lhs.powf(1.0 / p), cp * a * rhs.powf(1.0 / p)
        );
    }
}

proptest! {
    #[test]
    fn wilson_interval_contains_the_point_estimate(
        trials in 1u64..1_000_000,
        frac in 0.0f64..=1.0,
        z in 0.5f64..5.0,
    ) {
        let successes = ((trials as f64) * frac).round() as u64;
        let successes = successes.min(trials);
        let (lo, hi) = wilson_bounds(successes, trials, z);
        let phat = successes as f64 / trials as f64;
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!((0.0..=1.0).contains(&hi));
        prop_assert!(lo <= phat + 1e-15 && phat <= hi + 1e-15);
    }
}
