//! Path-level laws and invariants of the reflected diffusion and its
//! multiplicative functional.

use bundleheat::ensemble::path_rng;
use bundleheat::linalg::FiberMatrix;
use bundleheat::{BundleModel, Chart, LocalTimeScheme, ModelGeometry, Point, Simulator, StepConfig};
use proptest::prelude::*;
use statrs::function::erf::erf;

fn sim(bundle: &BundleModel, dt: f64, seed: u64) -> Simulator {
    Simulator::new(&bundle.geom, bundle, &StepConfig::new(dt, LocalTimeScheme::OnestepExact, seed)).unwrap()
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn half_line_endpoint_is_half_normal() {
    let geom = ModelGeometry::half_space(1).unwrap();
    let s = sim(&BundleModel::scalar(geom), 1e-3, 77);
    let x0 = geom.point(&[0.0]).unwrap();
    let n = 100_000;
    let ends: Vec<f64> = (0..n)
        .map(|i| s.simulate_path(&x0, 1.0, &mut path_rng(77, i)).unwrap().pos.coords[0])
        .collect();
    let d = ks_statistic(ends, |x| erf(x / 2f64.sqrt()));
    // 1% critical value of the one-sample KS statistic
    let crit = 1.628 / (n as f64).sqrt();
    assert!(d < crit, "KS distance {d} vs critical {crit}");
}

#[test]
fn hemisphere_colatitude_spreads_at_rate_two() {
    let geom = ModelGeometry::Hemisphere;
    let s = sim(&BundleModel::scalar(geom), 1e-4, 5);
    let pole = Point::new(Chart::Orthographic, &[0.0, 0.0]);
    let t = 0.01;
    let n = 20_000;
    let mean: f64 = (0..n)
        .map(|i| {
            let end = s.simulate_path(&pole, t, &mut path_rng(5, i)).unwrap().pos;
            geom.distance(&pole, &end).powi(2)
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean / (2.0 * t) - 1.0).abs() < 0.05, "E[theta^2] = {mean}");
}

#[test]
fn flat_transport_has_no_holonomy() {
    let geom = ModelGeometry::half_space(3).unwrap();
    let b = BundleModel::forms(geom, 1).unwrap();
    let s = sim(&b, 1e-3, 9);
    let x0 = geom.point(&[0.1, -0.2, 0.05]).unwrap();
    for i in 0..50 {
        let start = s.initial_state(&x0).unwrap();
        let end = s.simulate_path(&x0, 1.0, &mut path_rng(9, i)).unwrap();
        assert_eq!(end.steps, 1000);
        for a in 0..3 {
            for c in 0..3 {
                assert!((end.frame[a][c] - start.frame[a][c]).abs() < 1e-6);
            }
        }
    }
}

/// Rank-2 bundle on the half-line from a symmetric `W`, `S = diag(s, 0)` and
/// involution `diag(1, ±1)`.
fn rank_two(w: [f64; 3], s: f64, dirichlet: bool) -> BundleModel {
    let geom = ModelGeometry::half_space(1).unwrap();
    let inv = if dirichlet { [1.0, 0.0, 0.0, -1.0] } else { [1.0, 0.0, 0.0, 1.0] };
    let robin = if dirichlet { [s, 0.0, 0.0, 0.0] } else { [s, 0.0, 0.0, s / 2.0] };
    BundleModel::generic_constant(geom, 2, &[w[0], w[1], w[1], w[2]], &robin, &inv, None, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// `‖M_t‖ ≤ exp(-c1 t / 2 - c2 λ_t)` after every step.
    #[test]
    fn functional_obeys_pointwise_bound(
        w in proptest::array::uniform3(-1.0f64..2.0),
        s in -0.5f64..1.5,
        dirichlet in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let b = rank_two(w, s, dirichlet);
        let sim = sim(&b, 2e-3, seed);
        let x0 = b.geom.point(&[0.05]).unwrap();
        let plan = sim.plan(0.5, &[]).unwrap();
        for i in 0..20 {
            let mut rng = path_rng(seed, i);
            let mut st = sim.initial_state(&x0).unwrap();
            for _ in 0..plan.steps {
                sim.step(&mut st, &plan, &mut rng).unwrap();
                let bound = (-0.5 * b.c1 * st.t - b.c2 * st.lambda).exp();
                prop_assert!(st.m_norm() <= bound * (1.0 + 1e-8), "{} > {bound}", st.m_norm());
            }
        }
    }

    #[test]
    fn inverse_functional_stays_consistent(
        w in proptest::array::uniform3(-1.0f64..2.0),
        s in -0.5f64..1.5,
        seed in 0u64..1000,
    ) {
        let b = rank_two(w, s, false);
        let sim = sim(&b, 2e-3, seed).with_inverse();
        let x0 = b.geom.point(&[0.05]).unwrap();
        let plan = sim.plan(0.5, &[]).unwrap();
        for i in 0..20 {
            let mut rng = path_rng(seed, i);
            let mut st = sim.initial_state(&x0).unwrap();
            for _ in 0..plan.steps {
                sim.step(&mut st, &plan, &mut rng).unwrap();
                let inv = st.m_inv.expect("no Dirichlet part");
                let err = st.m.mul(&inv).max_abs_diff(&FiberMatrix::identity(2));
                prop_assert!(err <= 1e-6, "|M M^-1 - I| = {err}");
            }
        }
    }

    #[test]
    fn local_time_is_monotone_and_lives_on_the_collar(seed in 0u64..10_000) {
        let geom = ModelGeometry::DiskExterior;
        let b = BundleModel::forms(geom, 1).unwrap();
        let sim = sim(&b, 1e-3, seed);
        let r0 = geom.collar_radius();
        let plan = sim.plan(0.5, &[]).unwrap();
        for (i, rho) in [1.0, 1.2, 2.5].into_iter().enumerate() {
            let x0 = geom.point(&[rho, 0.3]).unwrap();
            let mut rng = path_rng(seed, i);
            let mut st = sim.initial_state(&x0).unwrap();
            let mut closest = geom.boundary_distance(&st.pos);
            for _ in 0..plan.steps {
                let before = st.lambda;
                sim.step(&mut st, &plan, &mut rng).unwrap();
                prop_assert!(st.lambda >= before);
                closest = closest.min(geom.boundary_distance(&st.pos));
            }
            if closest > r0 {
                prop_assert_eq!(st.lambda, 0.0);
            }
        }
    }

    #[test]
    fn paths_are_reproducible(seed in any::<u64>(), index in 0usize..1_000_000) {
        let geom = ModelGeometry::Hemisphere;
        let b = BundleModel::forms(geom, 1).unwrap();
        let sim = sim(&b, 1e-3, seed);
        let x0 = geom.point(&[1.3, 0.2]).unwrap();
        let a = sim.simulate_path(&x0, 0.2, &mut path_rng(seed, index)).unwrap();
        let c = sim.simulate_path(&x0, 0.2, &mut path_rng(seed, index)).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{c:?}"));
    }
}
