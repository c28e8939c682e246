//! Randomized invariants of the model geometries and bundle boundary data.

use std::f64::consts::{FRAC_PI_2, PI};

use bundleheat::bundles::BoundaryOps;
use bundleheat::geometry::{Frame, Vector, MAX_DIM};
use bundleheat::{BundleModel, Chart, ModelGeometry, Point, SpinorInvolution};
use nalgebra::DMatrix;
use proptest::prelude::*;

const GEOMETRIES: [ModelGeometry; 5] = [
    ModelGeometry::HalfSpace { dim: 1 },
    ModelGeometry::HalfSpace { dim: 3 },
    ModelGeometry::HalfSpace { dim: 4 },
    ModelGeometry::DiskExterior,
    ModelGeometry::Hemisphere,
];

/// A point of `geom` in `chart` built from unit-interval samples.
fn sample_point(geom: ModelGeometry, chart: Chart, u: &[f64; 4]) -> Point {
    let c: Vec<f64> = match (geom, chart) {
        (ModelGeometry::HalfSpace { dim }, _) => (0..dim)
            .map(|i| if i + 1 == dim { 3.0 * u[i] } else { 6.0 * u[i] - 3.0 })
            .collect(),
        (ModelGeometry::DiskExterior, _) => vec![1.0 + 4.0 * u[0], PI * (2.0 * u[1] - 1.0)],
        (ModelGeometry::Hemisphere, Chart::Polar) => vec![0.1 + (FRAC_PI_2 - 0.1) * u[0], PI * (2.0 * u[1] - 1.0)],
        (ModelGeometry::Hemisphere, _) => {
            let (r, a) = (0.9 * u[0], 2.0 * PI * u[1]);
            vec![r * a.cos(), r * a.sin()]
        }
    };
    Point::new(chart, &c)
}

fn charts(geom: ModelGeometry) -> Vec<Chart> {
    match geom {
        ModelGeometry::HalfSpace { .. } => vec![Chart::Cartesian],
        ModelGeometry::DiskExterior => vec![Chart::Polar],
        ModelGeometry::Hemisphere => vec![Chart::Polar, Chart::Orthographic],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// `∂_k g_ij = g_lj Γ^l_ki + g_il Γ^l_kj`, by central differences.
    #[test]
    fn metric_is_compatible(u in proptest::array::uniform4(0.0f64..1.0)) {
        for geom in GEOMETRIES {
            for chart in charts(geom) {
                let p = sample_point(geom, chart, &u);
                let n = geom.dim();
                let g = geom.metric_raw(chart, &p.coords);
                let gamma = geom.christoffel_raw(chart, &p.coords);
                let h = 1e-5;
                for k in 0..n {
                    let mut xp: Vector = p.coords;
                    let mut xm: Vector = p.coords;
                    xp[k] += h;
                    xm[k] -= h;
                    let (gp, gm) = (geom.metric_raw(chart, &xp), geom.metric_raw(chart, &xm));
                    for i in 0..n {
                        for j in 0..n {
                            let fd = (gp[i][j] - gm[i][j]) / (2.0 * h);
                            let rec: f64 = (0..n)
                                .map(|l| g[l][j] * gamma.get(l, k, i) + g[i][l] * gamma.get(l, k, j))
                                .sum();
                            prop_assert!(
                                (fd - rec).abs() < 1e-6,
                                "{} {:?} at {:?}: d_{k} g_{i}{j} = {fd} vs {rec}",
                                geom.id(), chart, p.coords()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn collar_round_trip(u in proptest::array::uniform4(0.0f64..1.0), s in 0.0f64..0.9) {
        for geom in GEOMETRIES {
            let r0 = geom.collar_radius().min(100.0);
            let r = s * r0;
            let mut y = sample_point(geom, geom.standard_chart(), &u);
            let nc = geom.normal_coordinate(y.chart).unwrap();
            nc.set_distance(&mut y.coords, 0.0);
            let p = geom.from_collar(r, &y).unwrap();
            prop_assert!((geom.boundary_distance(&p) - r).abs() < 1e-10);
            let (r2, y2) = geom.collar_coords(&p).unwrap();
            prop_assert!((r2 - r).abs() < 1e-10, "{}: r {r} -> {r2}", geom.id());
            for i in 0..geom.dim() {
                prop_assert!((y2.coords[i] - y.coords[i]).abs() < 1e-10);
            }
        }
    }
}

/// The reference frame at `y` rotated by Givens rotations through `angles`.
fn rotated_frame(geom: ModelGeometry, y: &Point, angles: &[f64; 6]) -> Frame {
    let n = geom.dim();
    let mut f = geom.reference_frame(y);
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            let (s, c) = angles[k % 6].sin_cos();
            k += 1;
            let (fa, fb) = (f[a], f[b]);
            for i in 0..MAX_DIM {
                f[a][i] = c * fa[i] - s * fb[i];
                f[b][i] = s * fa[i] + c * fb[i];
            }
        }
    }
    f
}

fn bundles() -> Vec<BundleModel> {
    let mut out = Vec::new();
    for n in 1..=4 {
        let g = ModelGeometry::half_space(n).unwrap();
        for p in 0..=n {
            out.push(BundleModel::forms(g, p).unwrap());
        }
    }
    out.push(BundleModel::forms(ModelGeometry::DiskExterior, 1).unwrap());
    out.push(BundleModel::forms(ModelGeometry::Hemisphere, 1).unwrap());
    let plane = ModelGeometry::half_space(2).unwrap();
    out.push(BundleModel::spinor2d(plane, SpinorInvolution::Chirality).unwrap());
    out.push(BundleModel::spinor2d(plane, SpinorInvolution::Tangential).unwrap());
    out.push(BundleModel::scalar_robin(ModelGeometry::DiskExterior, 0.7));
    out.push(
        BundleModel::generic_constant(
            plane,
            2,
            &[1.5, 0.5, 0.5, 1.0],
            &[0.7, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, -1.0],
            None,
            None,
        )
        .unwrap(),
    );
    out
}

fn dm(m: &bundleheat::linalg::FiberMatrix) -> DMatrix<f64> {
    m.to_dmatrix()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn check_projection_algebra(ops: &BoundaryOps) -> Result<(), String> {
    let (pp, pm, s) = (dm(&ops.pi_plus), dm(&ops.pi_minus), dm(&ops.robin));
    let n = pp.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let errs = [
        ("P+ + P- - I", max_abs(&(&pp + &pm - &id))),
        ("P+^2 - P+", max_abs(&(&pp * &pp - &pp))),
        ("P-^2 - P-", max_abs(&(&pm * &pm - &pm))),
        ("P+ P-", max_abs(&(&pp * &pm))),
        ("[S, P+]", max_abs(&(&s * &pp - &pp * &s))),
        ("S P-", max_abs(&(&s * &pm))),
    ];
    for (what, e) in errs {
        if e > 1e-10 {
            return Err(format!("{what} = {e:e}"));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_algebra_at_boundary_points(
        u in proptest::array::uniform4(0.0f64..1.0),
        angles in proptest::array::uniform6(-PI..PI),
    ) {
        for b in bundles() {
            let geom = b.geom;
            let mut y = sample_point(geom, geom.standard_chart(), &u);
            let nc = geom.normal_coordinate(y.chart).unwrap();
            nc.set_distance(&mut y.coords, 0.0);
            let frame = rotated_frame(geom, &y, &angles);
            let ops = b.boundary_ops(&y, &frame);
            if let Err(e) = check_projection_algebra(&ops) {
                prop_assert!(false, "{} at {:?}: {e}", b.id(), y.coords());
            }
        }
    }
}

#[test]
fn weitzenbock_terms_are_exact() {
    for n in 1..=4 {
        let g = ModelGeometry::half_space(n).unwrap();
        for p in 0..=n {
            let b = BundleModel::forms(g, p).unwrap();
            let x = g.point(&vec![0.3; n]).unwrap();
            assert_eq!(b.weitzenbock(&x).max_abs_diff(&bundleheat::linalg::FiberMatrix::zeros(b.rank)), 0.0);
        }
    }
    let b = BundleModel::forms(ModelGeometry::DiskExterior, 1).unwrap();
    let x = ModelGeometry::DiskExterior.point(&[1.7, 0.4]).unwrap();
    assert_eq!(b.weitzenbock(&x).max_abs_diff(&bundleheat::linalg::FiberMatrix::zeros(2)), 0.0);
    let b = BundleModel::forms(ModelGeometry::Hemisphere, 1).unwrap();
    let x = ModelGeometry::Hemisphere.point(&[0.7, 0.4]).unwrap();
    assert_eq!(b.weitzenbock(&x).max_abs_diff(&bundleheat::linalg::FiberMatrix::identity(2)), 0.0);
}
