//! Test sections in reference-frame fiber coordinates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundles::BundleModel;
use crate::error::{Error, Result};
use crate::geometry::{ModelGeometry, Point, MAX_DIM};
use crate::linalg::MAX_RANK;

pub type FiberVector = [f64; MAX_RANK];

pub type SectionEval = Arc<dyn Fn(&Point) -> FiberVector + Send + Sync>;

/// Bounded harmonic sections known in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Harmonic {
    /// The constant scalar function one.
    ScalarOne,
    /// The parallel 1-form `dx_k` on a half-space.
    Dx(usize),
}

/// Geodesic ball containing the support.
#[derive(Clone, Copy, Debug)]
pub struct Support {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone)]
pub struct SectionField {
    pub name: String,
    pub rank: usize,
    pub support: Option<Support>,
    pub harmonic: Option<Harmonic>,
    eval: SectionEval,
}

impl fmt::Debug for SectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SectionField")
            .field("name", &self.name)
            .field("rank", &self.rank)
            .field("support", &self.support)
            .field("harmonic", &self.harmonic)
            .finish()
    }
}

/// Smooth bump profile `exp(1 - 1/(1 - s^2))` on `|s| < 1`, one at the center.
pub fn bump_profile(s: f64) -> f64 {
    let q = s * s;
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q)).exp()
    }
}

impl SectionField {
    pub fn new(
        name: impl Into<String>,
        rank: usize,
        support: Option<Support>,
        eval: SectionEval,
    ) -> Self {
        assert!(rank >= 1 && rank <= MAX_RANK);
        SectionField {
            name: name.into(),
            rank,
            support,
            harmonic: None,
            eval,
        }
    }

    /// Value at `p` (standard chart) in reference-frame coordinates.
    #[inline]
    pub fn eval(&self, p: &Point) -> FiberVector {
        (self.eval)(p)
    }

    /// Value at a point in any chart of `geom`.
    pub fn value(&self, geom: &ModelGeometry, p: &Point) -> FiberVector {
        if p.chart == geom.standard_chart() {
            return self.eval(p);
        }
        let q = geom
            .to_chart(p, geom.standard_chart())
            .expect("every point has standard coordinates");
        self.eval(&q)
    }

    /// Scalar smooth bump of geodesic radius `radius` around `center`.
    pub fn bump(geom: ModelGeometry, center: Point, radius: f64) -> Self {
        Self::bump_component(geom, center, radius, 1, 0)
    }

    /// Bump times the `component`-th reference basis element of a rank-`rank` fiber.
    pub fn bump_component(
        geom: ModelGeometry,
        center: Point,
        radius: f64,
        rank: usize,
        component: usize,
    ) -> Self {
        assert!(component < rank);
        let c = center;
        let eval: SectionEval = Arc::new(move |p: &Point| {
            let mut v = [0.0; MAX_RANK];
            v[component] = bump_profile(geom.distance(&c, p) / radius);
            v
        });
        SectionField::new(
            format!("bump[{component}]"),
            rank,
            Some(Support { center, radius }),
            eval,
        )
    }

    /// Gaussian `exp(-|x - c|^2 / (2 w^2))` on a half-space; not compactly supported.
    pub fn gaussian(center: &[f64], width: f64) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..center.len()].copy_from_slice(center);
        let dim = center.len();
        let eval: SectionEval = Arc::new(move |p: &Point| {
            let d2: f64 = (0..dim).map(|i| (p.coords[i] - c[i]).powi(2)).sum();
            let mut v = [0.0; MAX_RANK];
            v[0] = (-d2 / (2.0 * width * width)).exp();
            v
        });
        SectionField::new("gaussian", 1, None, eval)
    }

    pub fn scalar_one() -> Self {
        let eval: SectionEval = Arc::new(|_: &Point| {
            let mut v = [0.0; MAX_RANK];
            v[0] = 1.0;
            v
        });
        let mut s = SectionField::new("one", 1, None, eval);
        s.harmonic = Some(Harmonic::ScalarOne);
        s
    }

    /// The 1-form `dx_k` on a half-space of dimension `n`.
    pub fn dx(k: usize, n: usize) -> Self {
        assert!(k < n);
        let eval: SectionEval = Arc::new(move |_: &Point| {
            let mut v = [0.0; MAX_RANK];
            v[k] = 1.0;
            v
        });
        let mut s = SectionField::new(format!("dx{}", k + 1), n, None, eval);
        s.harmonic = Some(Harmonic::Dx(k));
        s
    }

    pub fn support_contains(&self, geom: &ModelGeometry, p: &Point) -> bool {
        match &self.support {
            None => true,
            Some(s) => geom.distance(&s.center, p) < s.radius,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Compliance {
    /// Largest `|Π₋ φ|` over sampled boundary points.
    pub dirichlet_residual: f64,
    /// Largest `|Π₊(∇_ν - S) φ|` over sampled boundary points.
    pub robin_residual: f64,
    pub compliant: bool,
}

/// Checks the mixed boundary conditions at sampled boundary points. Normal
/// derivatives are one-sided second-order differences along the collar; the
/// reference frames are parallel along normal geodesics, so differencing
/// components gives the covariant derivative.
pub fn check_compliance(
    bundle: &BundleModel,
    section: &SectionField,
    samples: usize,
) -> Result<Compliance> {
    let geom = bundle.geom;
    if section.rank != bundle.rank {
        return Err(Error::InvalidArgument(format!(
            "section rank {} does not match bundle rank {}",
            section.rank, bundle.rank
        )));
    }
    let n = bundle.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let h = 1e-4;
    let mut dres: f64 = 0.0;
    let mut rres: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for k in 0..samples.max(1) {
        let y = boundary_sample(&geom, section, k, samples.max(1), &mut rng);
        let ops = bundle.boundary_ops(&y, &geom.reference_frame(&y));
        let v0 = section.eval(&y);
        let v1 = section.eval(&geom.from_collar(h, &y)?);
        let v2 = section.eval(&geom.from_collar(2.0 * h, &y)?);
        let mut dn = [0.0; MAX_RANK];
        for i in 0..n {
            dn[i] = (-3.0 * v0[i] + 4.0 * v1[i] - v2[i]) / (2.0 * h);
            scale = scale.max(v0[i].abs());
        }
        let mut sv = [0.0; MAX_RANK];
        ops.robin.apply(&v0, &mut sv);
        let mut w = [0.0; MAX_RANK];
        for i in 0..n {
            w[i] = dn[i] - sv[i];
        }
        let mut pw = [0.0; MAX_RANK];
        ops.pi_plus.apply(&w, &mut pw);
        let mut pm = [0.0; MAX_RANK];
        ops.pi_minus.apply(&v0, &mut pm);
        for i in 0..n {
            dres = dres.max(pm[i].abs());
            rres = rres.max(pw[i].abs());
        }
    }
    Ok(Compliance {
        dirichlet_residual: dres,
        robin_residual: rres,
        compliant: dres <= 1e-8 * scale && rres <= 1e-5 * scale,
    })
}

fn boundary_sample<R: Rng>(
    geom: &ModelGeometry,
    section: &SectionField,
    k: usize,
    total: usize,
    rng: &mut R,
) -> Point {
    let n = geom.dim();
    let chart = geom.standard_chart();
    let nc = geom
        .normal_coordinate(chart)
        .expect("standard chart is a collar chart");
    let mut c = [0.0; MAX_DIM];
    match geom {
        ModelGeometry::HalfSpace { .. } => {
            let (center, spread) = match &section.support {
                Some(s) => (s.center.coords, s.radius),
                None => ([0.0; MAX_DIM], 3.0),
            };
            for i in 0..n {
                c[i] = center[i] + rng.random_range(-spread..spread);
            }
        }
        _ => {
            c[1] = -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * (k as f64 + rng.random::<f64>()) / total as f64;
        }
    }
    nc.set_distance(&mut c, 0.0);
    Point::new(chart, &c[..n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::SpinorInvolution;

    #[test]
    fn bump_vanishes_outside_support() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = SectionField::bump(g, g.point(&[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(b.eval(&g.point(&[0.0, 1.0]).unwrap())[0], 1.0);
        assert_eq!(b.eval(&g.point(&[0.0, 0.45]).unwrap())[0], 0.0);
        assert_eq!(b.eval(&g.point(&[0.6, 1.0]).unwrap())[0], 0.0);
    }

    #[test]
    fn interior_bumps_are_compliant() {
        let g = ModelGeometry::half_space(2).unwrap();
        let forms = BundleModel::forms(g, 1).unwrap();
        let c = g.point(&[0.0, 0.6]).unwrap();
        for k in 0..2 {
            let s = SectionField::bump_component(g, c, 0.5, 2, k);
            assert!(check_compliance(&forms, &s, 50).unwrap().compliant);
        }
    }

    #[test]
    fn dx2_violates_absolute_conditions() {
        let g = ModelGeometry::half_space(2).unwrap();
        let forms = BundleModel::forms(g, 1).unwrap();
        assert!(check_compliance(&forms, &SectionField::dx(0, 2), 20).unwrap().compliant);
        let c = check_compliance(&forms, &SectionField::dx(1, 2), 20).unwrap();
        assert!(!c.compliant);
        assert_eq!(c.dirichlet_residual, 1.0);
    }

    #[test]
    fn spinor_sections_by_boundary_trace() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = BundleModel::spinor2d(g, SpinorInvolution::Chirality).unwrap();
        let plus: SectionEval = Arc::new(|_| {
            let mut v = [0.0; MAX_RANK];
            v[0] = 1.0;
            v
        });
        let minus: SectionEval = Arc::new(|_| {
            let mut v = [0.0; MAX_RANK];
            v[1] = 1.0;
            v
        });
        let sp = SectionField::new("plus", 2, None, plus);
        let sm = SectionField::new("minus", 2, None, minus);
        assert!(check_compliance(&b, &sp, 10).unwrap().compliant);
        assert!(!check_compliance(&b, &sm, 10).unwrap().compliant);
    }

    #[test]
    fn robin_compliance_detects_wrong_slope() {
        let g = ModelGeometry::half_space(1).unwrap();
        let b = BundleModel::scalar_robin(g, 1.0);
        // u' = u at 0
        let good: SectionEval = Arc::new(|p| {
            let mut v = [0.0; MAX_RANK];
            v[0] = p.coords[0].exp() * (-p.coords[0] * p.coords[0]).exp() / (1.0 + p.coords[0].powi(2));
            v
        });
        let bad: SectionEval = Arc::new(|p| {
            let mut v = [0.0; MAX_RANK];
            v[0] = (-p.coords[0] * p.coords[0]).exp();
            v
        });
        assert!(check_compliance(&b, &SectionField::new("g", 1, None, good), 5).unwrap().compliant);
        assert!(!check_compliance(&b, &SectionField::new("b", 1, None, bad), 5).unwrap().compliant);
    }

    #[test]
    fn disk_exterior_scalar_bump_near_boundary_is_checked() {
        let g = ModelGeometry::DiskExterior;
        let b = BundleModel::scalar(g);
        // centered on the boundary: radial derivative vanishes by symmetry only at phi = 0
        let s = SectionField::bump(g, g.point(&[1.2, 0.0]).unwrap(), 0.5);
        assert!(!check_compliance(&b, &s, 200).unwrap().compliant);
        let far = SectionField::bump(g, g.point(&[2.5, 0.0]).unwrap(), 0.5);
        assert!(check_compliance(&b, &far, 200).unwrap().compliant);
    }
}
