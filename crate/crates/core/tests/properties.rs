use proptest::prelude::*;
use rand::Rng;

use regnoise::drift::{twist, validate_assumption, validation_samples, DriftFamily, DriftSpec};
use regnoise::estimates::{bdg_check, IncrementFamily};
use regnoise::exec::Execution;
use regnoise::funcspace::{
    check_membership, dyadic_floor_projection, oscillation_sum, random_phi, random_phi_m, zigzag_phi,
    zigzag_phi_m, FunctionClass, RangeSet, ViolationKind,
};
use regnoise::gronwall::{closed_form_cap, recursion_cap, run_recursion};
use regnoise::lattice::{enumerate_lattice, lattice_count, project, QDescriptor, Scale, DEFAULT_BUDGET};
use regnoise::phi::{phi_eval, PhiQuery};
use regnoise::rng::{stream, Purpose};
use regnoise::spectral::{simulate_ou, SpectralOperator, TimeGrid};
use regnoise::stats::{dist_inf, norm2};

fn squares(dim: usize) -> SpectralOperator {
    SpectralOperator::power_law(dim, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup_is_a_contraction_semigroup(
        x in prop::collection::vec(-5.0f64..5.0, 4),
        s in 0.0f64..2.0,
        t in 0.0f64..2.0,
    ) {
        let op = squares(4);
        let st = op.semigroup_apply(s, &op.semigroup_apply(t, &x).unwrap()).unwrap();
        let direct = op.semigroup_apply(s + t, &x).unwrap();
        for (a, b) in st.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
        prop_assert!(norm2(&direct) <= norm2(&x));
    }

    #[test]
    fn marginal_variance_increases_to_stationary(l in 0.01f64..50.0, t in 0.0f64..5.0, dt in 0.0f64..1.0) {
        let op = SpectralOperator::new(vec![l]).unwrap();
        let a = op.marginal_variance(1, t).unwrap();
        let b = op.marginal_variance(1, t + dt).unwrap();
        prop_assert!(a <= b);
        prop_assert!(b <= op.stationary_variance(1).unwrap());
    }

    #[test]
    fn enumerated_lattice_matches_count_and_membership(gamma in 1.0f64..3.0, r in 0u32..3, extra in 0u32..6, two in any::<bool>()) {
        let scale = if two { Scale::Two } else { Scale::One };
        let q = QDescriptor::new(gamma, r, scale).unwrap();
        let m = r + extra;
        let pts = enumerate_lattice(&q, m, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(Some(pts.len() as u128), lattice_count(&q, m).unwrap());
        for p in &pts {
            prop_assert!(q.check_contains(&p.to_vector(8)).is_ok());
        }
    }

    #[test]
    fn projection_is_nearest_point(seed in any::<u64>(), extra in 0u32..5) {
        let q = QDescriptor::new(1.0, 0, Scale::One).unwrap();
        let m = extra + 1;
        let pts = enumerate_lattice(&q, m, DEFAULT_BUDGET).unwrap();
        let mut rng = stream(seed, Purpose::Validation, 0, 0);
        let x: Vec<f64> = (1..=4)
            .map(|n| {
                let b = q.component_log_bound(n).exp();
                rng.random_range(-b..=b)
            })
            .collect();
        let p = project(&q, m, &x).unwrap();
        let d = dist_inf(&p.to_vector(4), &x);
        let best = pts.iter().map(|c| dist_inf(&c.to_vector(4), &x)).fold(f64::INFINITY, f64::min);
        prop_assert!(d <= best + 1e-15);
    }

    #[test]
    fn evaluate_is_pure(t in 0.0f64..1.0, z in prop::collection::vec(-2.0f64..2.0, 3), seed in any::<u64>()) {
        let f = DriftSpec::new(DriftFamily::PiecewiseRandom { cell: 0.05, time_cells: 16, seed }, &[0.1, 0.05, 0.01]).unwrap();
        let a = f.evaluate(t, &z);
        let b = f.evaluate(t, &z);
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn twist_is_dominated(n in 1u32..8, kf in 0.0f64..1.0, s in 0.0f64..1.0, z in prop::collection::vec(-1.0f64..1.0, 4)) {
        let op = squares(4);
        let k = ((kf * (1u64 << n) as f64) as u64).min((1u64 << n) - 1);
        let f = DriftSpec::new(DriftFamily::Lipschitz { kappa: 2.0 }, &[0.3, 0.2, 0.1, 0.05]).unwrap();
        let t = s * (k + 1) as f64 / (1u64 << n) as f64;
        let tw = twist(&f, &op, n, k).unwrap();
        prop_assert!(norm2(&tw.evaluate(t, &z)) <= norm2(&f.evaluate(t, &z)));
    }

    #[test]
    fn validation_is_monotone_under_shrinking(amp in 0.01f64..4.0, shrink in 0.0f64..1.0) {
        let op = squares(3);
        let grid = validation_samples(3, 50, 1);
        let f = DriftSpec::sign_envelope(2.0, 3, amp, 0.0).unwrap();
        let g = DriftSpec::sign_envelope(2.0, 3, amp * shrink.max(1e-9), 0.0).unwrap();
        let pf = validate_assumption(&f, &op, 2.0, &grid).unwrap().pass;
        let pg = validate_assumption(&g, &op, 2.0, &grid).unwrap().pass;
        prop_assert!(!pf || pg);
    }

    #[test]
    fn oscillation_sum_at_most_one(seed in any::<u64>(), n in 1u32..=8, m in 0u32..=9, zig in any::<bool>(), stepfn in any::<bool>()) {
        let grid = TimeGrid::dyadic(10);
        let caps = RangeSet::new(1.0, &SpectralOperator::new(vec![0.01, 0.02, 0.03]).unwrap()).unwrap().caps();
        let mut rng = stream(seed, Purpose::Sampling, 0, 0);
        let h = match (stepfn, zig) {
            (false, false) => random_phi(grid, &caps, &mut rng),
            (false, true) => zigzag_phi(grid, &caps, &mut rng),
            (true, false) => random_phi_m(grid, m, &caps, &mut rng).unwrap(),
            (true, true) => zigzag_phi_m(grid, m, &caps, &mut rng).unwrap(),
        };
        prop_assert!(oscillation_sum(&h, n).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn floor_projection_converges_and_keeps_increments(seed in any::<u64>(), n in 0u32..=8) {
        let grid = TimeGrid::dyadic(10);
        let op = SpectralOperator::new(vec![0.01, 0.02]).unwrap();
        let range = RangeSet::new(1.0, &op).unwrap();
        let mut rng = stream(seed, Purpose::Sampling, 1, 0);
        let h = random_phi(grid, &range.caps(), &mut rng);
        let hn = dyadic_floor_projection(&h, n);
        let w = (-(n as f64)).exp2();
        for i in 0..grid.nodes() {
            prop_assert!(dist_inf(h.at(i), hn.at(i)) <= 3.0 * w + 1e-15);
        }
        // only the range condition can fail, and only through flooring negatives
        if let Some(v) = check_membership(&hn, FunctionClass::PhiN(n), &range).unwrap() {
            let negative = hn.at(v.nodes.0).iter().any(|x| *x < 0.0);
            let range_violation = matches!(v.kind, ViolationKind::OutsideQ { .. } | ViolationKind::OutsideQA { .. });
            prop_assert!(range_violation && negative, "unexpected violation {:?}", v);
        }
    }

    #[test]
    fn phi_lipschitz_and_sup_bounds(seed in 0u64..1000, n in 1u32..=6, kf in 0.0f64..1.0,
                                     x in prop::collection::vec(-0.5f64..0.5, 3),
                                     y in prop::collection::vec(-0.5f64..0.5, 3)) {
        let op = squares(3);
        let path = simulate_ou(&op, &TimeGrid::dyadic(10), seed, 0);
        let k = ((kf * (1u64 << n) as f64) as u64).min((1u64 << n) - 1);
        let w = (-(n as f64)).exp2();
        let lip = DriftSpec::new(DriftFamily::Lipschitz { kappa: 4.0 }, &[0.2, 0.1, 0.05]).unwrap();
        let q = PhiQuery { n, k, x: x.clone(), y: y.clone() };
        let r = phi_eval(&lip, &path, &q, 16).unwrap();
        let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(r.h_norm <= lip.lipschitz_constant().unwrap() * w * norm2(&dxy) * (1.0 + 1e-12));
        let sign = DriftSpec::sign_envelope(1.0, 3, 1.0, 0.0).unwrap();
        let sup = norm2(sign.scales());
        let r = phi_eval(&sign, &path, &q, 16).unwrap();
        prop_assert!(r.h_norm <= 2.0 * w * sup * (1.0 + 1e-12));
    }

    #[test]
    fn gronwall_sequence_and_cap_monotone(m in 0u32..=10, kf in 0.0f64..1.0, beta0 in 1e-9f64..0.999, dk in 0.0f64..1.0, db in 0.0f64..0.5) {
        let k = kf * std::f64::consts::LN_2 * (m as f64).exp2();
        let s = run_recursion(k, m, beta0, 1u64 << m).unwrap();
        prop_assert!(s.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(s.max() <= recursion_cap(k, m, beta0) * (1.0 + 1e-12));
        let b2 = beta0 + db * (1.0 - beta0);
        prop_assert!(closed_form_cap(k, beta0) <= closed_form_cap(k + dk, beta0));
        prop_assert!(closed_form_cap(k, beta0) <= closed_form_cap(k, b2));
    }
}

#[test]
fn bdg_enumerated_instances() {
    for n in 1..=12 {
        for p in [2.0, 4.0, 6.0] {
            let r = bdg_check(p, n, IncrementFamily::Rademacher { c: 1.0 }, 0, 0, Execution::Sequential).unwrap();
            assert!(r.exact && r.holds(), "n={n} p={p} ratio={}", r.ratio);
        }
    }
}
