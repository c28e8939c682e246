//! Statistical properties of the estimators, checked against closed forms
//! computed here independently of the library oracles.

use std::f64::consts::PI;

use bundleheat::estimators::{
    domination_report, kernel_estimate, l1_growth, local_time_moment, semigroup_apply, Setup,
};
use bundleheat::oracle::QuadratureGrid;
use bundleheat::sections::SectionField;
use bundleheat::{BundleModel, EnsembleConfig, LocalTimeScheme, ModelGeometry, Point, StepConfig, Window};
use statrs::function::erf::erf;

fn setup(bundle: BundleModel, paths: usize, dt: f64, seed: u64) -> Setup {
    Setup::new(
        bundle,
        EnsembleConfig::new(paths, StepConfig::new(dt, LocalTimeScheme::OnestepExact, seed)),
    )
}

fn pt(geom: ModelGeometry, c: &[f64]) -> Point {
    geom.point(c).unwrap()
}

fn gauss(t: f64, d: f64) -> f64 {
    (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Midpoint rule on `[a, b]` with `n` cells.
fn midpoint(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[test]
fn standard_error_shrinks_like_root_paths() {
    let geom = ModelGeometry::half_space(1).unwrap();
    let phi = SectionField::bump(geom, pt(geom, &[0.5]), 0.4);
    let x = pt(geom, &[0.3]);
    let mean_se = |paths: usize| {
        (0..8)
            .map(|seed| {
                semigroup_apply(&setup(BundleModel::scalar(geom), paths, 0.01, seed), &phi, &x, &[0.5]).unwrap()[0]
                    .stderr()
            })
            .sum::<f64>()
            / 8.0
    };
    let ratio = mean_se(4000) / mean_se(8000);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "SE ratio {ratio}");
}

#[test]
fn constant_potential_factorizes() {
    let geom = ModelGeometry::half_space(1).unwrap();
    let (c, r) = (0.5, 0.4);
    let phi = SectionField::bump(geom, pt(geom, &[c]), r);
    let x = pt(geom, &[0.3]);
    let est = &semigroup_apply(&setup(BundleModel::scalar_potential(geom, 2.0), 20_000, 1e-3, 3), &phi, &x, &[1.0])
        .unwrap()[0];
    let f = |y: f64| phi.eval(&pt(geom, &[y]))[0];
    let neumann = midpoint(c - r, c + r, 4000, |y| (gauss(1.0, 0.3 - y) + gauss(1.0, 0.3 + y)) * f(y));
    let target = (-1.0f64).exp() * neumann;
    assert!(
        (est.mean() - target).abs() <= 3.0 * est.stderr(),
        "{} ± {} vs {target}",
        est.mean(),
        est.stderr()
    );
}

fn single_bin(geom: ModelGeometry, y: &[f64], half: f64) -> Window {
    let lo: Vec<f64> = y.iter().map(|v| v - half).collect();
    let hi: Vec<f64> = y.iter().map(|v| v + half).collect();
    let _ = geom;
    Window::new(&lo, &hi, &[1, 1]).unwrap()
}

#[test]
fn scalar_kernel_is_symmetric() {
    let cases: [(ModelGeometry, [[f64; 2]; 6]); 3] = [
        (
            ModelGeometry::half_space(2).unwrap(),
            [[0.0, 0.3], [0.4, 0.6], [-0.3, 0.2], [0.2, 0.2], [0.0, 1.0], [0.5, 0.4]],
        ),
        (
            ModelGeometry::DiskExterior,
            [[1.2, 0.0], [1.5, 0.4], [1.1, -0.3], [1.4, 0.2], [1.3, 0.1], [1.3, 0.6]],
        ),
        (
            ModelGeometry::Hemisphere,
            [[0.8, 0.0], [1.2, 0.4], [1.0, -0.5], [1.3, 0.3], [0.6, 0.2], [1.1, -0.3]],
        ),
    ];
    for (seed, (geom, pts)) in cases.into_iter().enumerate() {
        let s = setup(BundleModel::scalar(geom), 20_000, 5e-3, 100 + seed as u64);
        for pair in pts.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            let density = |from: [f64; 2], at: [f64; 2]| {
                let h = &kernel_estimate(&s, &pt(geom, &from), &[0.5], &single_bin(geom, &at, 0.1)).unwrap()[0];
                (h.density[0].as_ref().unwrap()[(0, 0)], h.se[0].as_ref().unwrap()[(0, 0)])
            };
            let (kab, sab) = density(a, b);
            let (kba, sba) = density(b, a);
            let tol = 3.0 * sab.hypot(sba);
            assert!((kab - kba).abs() <= tol, "{}: K({a:?},{b:?}) = {kab} vs {kba} (tol {tol})", geom.id());
        }
    }
}

#[test]
fn chapman_kolmogorov_at_the_mode() {
    let geom = ModelGeometry::half_space(1).unwrap();
    let s = setup(BundleModel::scalar(geom), 100_000, 2e-3, 11);
    let window = Window::new(&[0.0], &[6.0], &[120]).unwrap();
    let x = pt(geom, &[0.3]);
    let from_x = kernel_estimate(&s, &x, &[0.5, 1.0], &window).unwrap();
    let dens = |h: &bundleheat::KernelHistogram, b: usize| h.density[b].as_ref().map_or(0.0, |d| d[(0, 0)]);
    let (half, full) = (&from_x[0], &from_x[1]);
    let mode = (0..window.len())
        .max_by(|&a, &b| dens(full, a).total_cmp(&dens(full, b)))
        .unwrap();
    let y = window.bin_center(&geom, mode);
    let from_y = &kernel_estimate(&s, &y, &[0.5], &window).unwrap()[0];
    let composed: f64 = (0..window.len())
        .map(|b| dens(half, b) * dens(from_y, b) * half.volumes[b])
        .sum();
    let direct = dens(full, mode);
    assert!((composed / direct - 1.0).abs() < 0.05, "composed {composed} vs direct {direct}");
}

#[test]
fn normal_component_l1_decays_like_dirichlet() {
    let geom = ModelGeometry::half_space(2).unwrap();
    let b = BundleModel::forms(geom, 1).unwrap();
    let (cx, cy, r) = (0.0, 0.6, 0.5);
    let phi = SectionField::bump_component(geom, pt(geom, &[cx, cy]), r, 2, 1);
    let quad = QuadratureGrid::covering(&geom, &phi, 4, 4).unwrap();
    let times = [0.5, 1.0];
    let window = Window::exhaustive(&geom, &pt(geom, &[cx, cy]), 1.0, &[40, 40]).unwrap();
    let res = l1_growth(&setup(b, 40_000, 1e-3, 21), &phi, &times, &quad, &window, None).unwrap();
    let f = |x: f64, y: f64| phi.eval(&pt(geom, &[x, y]))[1];
    for (g, t) in res.iter().zip(times) {
        // f >= 0, so the Dirichlet evolution is nonnegative and its mass is ∫ f P(no hit)
        let oracle = midpoint(cx - r, cx + r, 400, |x| {
            midpoint(cy - r, cy + r, 400, |y| f(x, y) * erf(y / (2.0 * t).sqrt()))
        });
        assert!((g.l1.mean() / oracle - 1.0).abs() < 0.05, "t = {t}: {} vs {oracle}", g.l1.mean());
        assert!(g.l1.mean() < g.initial);
    }
    assert!(res[1].l1.mean() < res[0].l1.mean());
}

#[test]
fn constant_potential_scales_kernel_and_l1() {
    let geom = ModelGeometry::half_space(2).unwrap();
    let c = 1.5;
    let scalar = BundleModel::scalar(geom);
    let weighted = BundleModel::generic_constant(geom, 2, &[c, 0.0, 0.0, c], &[0.0; 4], &[1.0, 0.0, 0.0, 1.0], None, None)
        .unwrap();
    let x = pt(geom, &[0.0, 0.4]);
    let t = 0.5;
    let decay = (-c * t / 2.0).exp();
    let window = Window::new(&[-1.0, 0.0], &[1.0, 1.5], &[8, 6]).unwrap();
    let ks = &kernel_estimate(&setup(scalar.clone(), 10_000, 1e-3, 5), &x, &[t], &window).unwrap()[0];
    let kw = &kernel_estimate(&setup(weighted.clone(), 10_000, 1e-3, 5), &x, &[t], &window).unwrap()[0];
    for b in 0..window.len() {
        let (Some(d0), Some(s0)) = (&ks.density[b], &ks.se[b]) else { continue };
        let (dw, sw) = (kw.density[b].as_ref().unwrap(), kw.se[b].as_ref().unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { decay * d0[(0, 0)] } else { 0.0 };
                let tol = 3.0 * sw[(i, j)].hypot(decay * s0[(0, 0)]) + 1e-12;
                assert!((dw[(i, j)] - expect).abs() <= tol, "bin {b} ({i},{j}): {} vs {expect}", dw[(i, j)]);
            }
        }
    }

    let phi_s = SectionField::bump(geom, pt(geom, &[0.0, 0.6]), 0.5);
    let phi_w = SectionField::bump_component(geom, pt(geom, &[0.0, 0.6]), 0.5, 2, 0);
    let quad = QuadratureGrid::covering(&geom, &phi_s, 4, 4).unwrap();
    let window = Window::exhaustive(&geom, &pt(geom, &[0.0, 0.6]), t, &[30, 30]).unwrap();
    let ls = &l1_growth(&setup(scalar, 10_000, 1e-3, 8), &phi_s, &[t], &quad, &window, None).unwrap()[0];
    let lw = &l1_growth(&setup(weighted, 10_000, 1e-3, 8), &phi_w, &[t], &quad, &window, None).unwrap()[0];
    let tol = 3.0 * lw.l1.stderr().hypot(decay * ls.l1.stderr()) + 1e-12;
    assert!((lw.l1.mean() - decay * ls.l1.mean()).abs() <= tol);
    // scalar Neumann evolution of a nonnegative bump is an L1 contraction
    assert!(ls.l1.mean() <= ls.initial + 3.0 * ls.l1.stderr());
}

#[test]
fn local_time_moments_increase_with_p() {
    let geom = ModelGeometry::DiskExterior;
    let s = setup(BundleModel::scalar(geom), 10_000, 1e-3, 4);
    let x = pt(geom, &[1.0, 0.0]);
    let m1 = local_time_moment(&s, &x, &[0.5], 1.0, -1.0).unwrap();
    let m2 = local_time_moment(&s, &x, &[0.5], 2.0, -1.0).unwrap();
    // same paths, so Jensen holds sample by sample on the mean
    assert!(m2.moments[0].mean() >= m1.moments[0].mean());
    assert!(m1.moments[0].mean() > 1.0);
}

#[test]
fn scalar_domination_ratio_is_one() {
    let geom = ModelGeometry::half_space(2).unwrap();
    let s = setup(BundleModel::scalar(geom), 40_000, 1e-3, 6);
    let x = pt(geom, &[0.0, 0.5]);
    let ys = [pt(geom, &[0.0, 0.3]), pt(geom, &[0.4, 0.8])];
    let rep = domination_report(&s, &x, &ys, &[0.5, 1.0], 0.05).unwrap();
    for r in &rep.rows {
        assert!((r.ratio - 1.0).abs() <= 3.0 * r.ratio_se, "y = {:?}, t = {}: {}", r.y, r.t, r.ratio);
    }
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let geom = ModelGeometry::Hemisphere;
    let b = BundleModel::forms(geom, 1).unwrap();
    let phi = SectionField::bump_component(geom, pt(geom, &[0.9, 0.1]), 0.4, 2, 0);
    let x = pt(geom, &[1.0, 0.0]);
    let run = |threads: usize| {
        let mut s = setup(b.clone(), 640, 2e-3, 31);
        s.ensemble.threads = threads;
        semigroup_apply(&s, &phi, &x, &[0.2, 0.4]).unwrap()
    };
    let (a, c) = (run(1), run(4));
    for (ea, ec) in a.iter().zip(&c) {
        assert_eq!(ea.value, ec.value);
        assert_eq!(ea.se, ec.se);
        assert_eq!(ea.fingerprint, ec.fingerprint);
    }
}
