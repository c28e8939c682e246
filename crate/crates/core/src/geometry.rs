//! Model manifolds with boundary.
//!
//! The catalogue is closed: a flat half-space in any dimension up to
//! [`MAX_DIM`], the exterior of the unit disk in the plane, and the closed
//! upper unit hemisphere. Every chart used here is also a collar (Fermi)
//! chart near the boundary: one chart coordinate is an affine function of
//! the geodesic distance to the boundary, and the metric splits orthogonally
//! along it.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest manifold dimension supported by the stack-allocated path state.
pub const MAX_DIM: usize = 4;

/// Sentinel collar radius for geometries whose collar map is globally injective.
pub const INFINITE_COLLAR: f64 = 1.0e12;

/// Tolerance used to decide whether a point sits on the boundary.
pub const BOUNDARY_TOL: f64 = 1.0e-9;

pub type Vector = [f64; MAX_DIM];

/// `frame[a]` holds the chart components of the a-th frame vector.
pub type Frame = [[f64; MAX_DIM]; MAX_DIM];

pub type SquareMatrix = [[f64; MAX_DIM]; MAX_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chart {
    /// Cartesian coordinates on the half-space `x_n >= 0`.
    Cartesian,
    /// `(rho, phi)` on the disk exterior, `(theta, phi)` (colatitude) on the hemisphere.
    Polar,
    /// Orthographic projection of the hemisphere onto its equatorial plane.
    Orthographic,
}

impl Chart {
    pub fn name(self) -> &'static str {
        match self {
            Chart::Cartesian => "cartesian",
            Chart::Polar => "polar",
            Chart::Orthographic => "orthographic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub chart: Chart,
    pub dim: usize,
    pub coords: Vector,
}

impl Point {
    pub fn new(chart: Chart, coords: &[f64]) -> Self {
        assert!(coords.len() <= MAX_DIM, "too many coordinates");
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            chart,
            dim: coords.len(),
            coords: c,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }
}

/// Christoffel symbols `data[k][i][j] = Γ^k_ij` in a chart.
#[derive(Clone, Copy, Debug)]
pub struct Christoffel {
    pub dim: usize,
    pub data: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl Christoffel {
    fn zero(dim: usize) -> Self {
        Christoffel {
            dim,
            data: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM],
        }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[k][i][j]
    }
}

/// Normal collar coordinate inside a chart: `r = sign * (x[index] - offset)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalCoordinate {
    pub index: usize,
    pub sign: f64,
    pub offset: f64,
}

impl NormalCoordinate {
    #[inline]
    pub fn distance(&self, x: &Vector) -> f64 {
        self.sign * (x[self.index] - self.offset)
    }

    #[inline]
    pub fn set_distance(&self, x: &mut Vector, r: f64) {
        x[self.index] = self.offset + self.sign * r;
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryData {
    pub point: Point,
    /// Inward unit normal, chart components.
    pub normal: Vector,
    /// Shape operator `B = -∇ν` as a chart-basis endomorphism `shape[i][j] = B^i_j`,
    /// extended by `Bν = 0`.
    pub shape: SquareMatrix,
    /// Principal curvatures, ascending.
    pub curvatures: Vec<f64>,
}

/// Constants witnessing the boundary-geometry hypotheses for a catalogue entry.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GeometryWitnesses {
    pub ricci_lower: f64,
    pub shape_lower: f64,
    pub shape_upper: f64,
    pub collar_radius: f64,
    pub sectional_upper_on_collar: f64,
    pub convex: bool,
}

/// Hemisphere chart switching thresholds (colatitude), with hysteresis.
const HEMI_TO_ORTHO: f64 = 0.4;
const HEMI_TO_POLAR: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelGeometry {
    /// `{x in R^n : x_n >= 0}` with the flat metric.
    HalfSpace { dim: usize },
    /// `{x in R^2 : |x| >= 1}` with the flat metric.
    DiskExterior,
    /// Closed upper unit hemisphere with the round metric; boundary is the equator.
    Hemisphere,
}

impl ModelGeometry {
    pub fn half_space(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(ModelGeometry::HalfSpace { dim })
    }

    /// Looks up a catalogue entry by its configuration id.
    pub fn from_id(id: &str, dimension: Option<usize>) -> Result<Self> {
        match id {
            "half_space" => Self::half_space(dimension.unwrap_or(2)),
            "disk_exterior" => Ok(ModelGeometry::DiskExterior),
            "hemisphere" => Ok(ModelGeometry::Hemisphere),
            other => Err(Error::Unsupported(format!("unknown geometry id {other:?}"))),
        }
    }

    pub fn id(&self) -> String {
        match self {
            ModelGeometry::HalfSpace { dim } => format!("half_space({dim})"),
            ModelGeometry::DiskExterior => "disk_exterior".into(),
            ModelGeometry::Hemisphere => "hemisphere".into(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelGeometry::HalfSpace { dim } => *dim,
            _ => 2,
        }
    }

    pub fn collar_radius(&self) -> f64 {
        match self {
            ModelGeometry::HalfSpace { .. } => INFINITE_COLLAR,
            ModelGeometry::DiskExterior => 0.5,
            ModelGeometry::Hemisphere => FRAC_PI_4,
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self, ModelGeometry::Hemisphere)
    }

    pub fn witnesses(&self) -> GeometryWitnesses {
        match self {
            ModelGeometry::HalfSpace { .. } => GeometryWitnesses {
                ricci_lower: 0.0,
                shape_lower: 0.0,
                shape_upper: 0.0,
                collar_radius: INFINITE_COLLAR,
                sectional_upper_on_collar: 0.0,
                convex: true,
            },
            ModelGeometry::DiskExterior => GeometryWitnesses {
                ricci_lower: 0.0,
                shape_lower: -1.0,
                shape_upper: -1.0,
                collar_radius: 0.5,
                sectional_upper_on_collar: 0.0,
                convex: false,
            },
            ModelGeometry::Hemisphere => GeometryWitnesses {
                ricci_lower: 1.0,
                shape_lower: 0.0,
                shape_upper: 0.0,
                collar_radius: FRAC_PI_4,
                sectional_upper_on_collar: 1.0,
                convex: true,
            },
        }
    }

    /// Chart used for histograms, quadrature grids and user-facing coordinates.
    pub fn standard_chart(&self) -> Chart {
        match self {
            ModelGeometry::HalfSpace { .. } => Chart::Cartesian,
            _ => Chart::Polar,
        }
    }

    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        let p = Point::new(self.standard_chart(), coords);
        self.check_domain(&p)?;
        Ok(p)
    }

    fn outside(p: &Point) -> Error {
        Error::OutsideChart {
            chart: p.chart.name(),
            coords: p.coords().to_vec(),
        }
    }

    pub fn check_domain(&self, p: &Point) -> Result<()> {
        if p.dim != self.dim() || !p.is_finite() {
            return Err(Self::outside(p));
        }
        let ok = match (self, p.chart) {
            (ModelGeometry::HalfSpace { dim }, Chart::Cartesian) => {
                p.coords[dim - 1] >= -BOUNDARY_TOL
            }
            (ModelGeometry::DiskExterior, Chart::Polar) => p.coords[0] >= 1.0 - BOUNDARY_TOL,
            (ModelGeometry::Hemisphere, Chart::Polar) => {
                p.coords[0] > 0.0 && p.coords[0] <= FRAC_PI_2 + BOUNDARY_TOL
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                p.coords[0].hypot(p.coords[1]) < 1.0
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Self::outside(p))
        }
    }

    /// Signed collar coordinate `r(x)`: the distance to the boundary.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        match (self, p.chart) {
            (ModelGeometry::HalfSpace { dim }, _) => p.coords[dim - 1],
            (ModelGeometry::DiskExterior, _) => p.coords[0] - 1.0,
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                FRAC_PI_2 - p.coords[0].hypot(p.coords[1]).min(1.0).asin()
            }
            (ModelGeometry::Hemisphere, _) => FRAC_PI_2 - p.coords[0],
        }
    }

    pub fn normal_coordinate(&self, chart: Chart) -> Option<NormalCoordinate> {
        match (self, chart) {
            (ModelGeometry::HalfSpace { dim }, Chart::Cartesian) => Some(NormalCoordinate {
                index: dim - 1,
                sign: 1.0,
                offset: 0.0,
            }),
            (ModelGeometry::DiskExterior, Chart::Polar) => Some(NormalCoordinate {
                index: 0,
                sign: 1.0,
                offset: 1.0,
            }),
            (ModelGeometry::Hemisphere, Chart::Polar) => Some(NormalCoordinate {
                index: 0,
                sign: -1.0,
                offset: FRAC_PI_2,
            }),
            _ => None,
        }
    }

    /// Metric `g_ij` at `x` in `chart` (no domain check).
    #[inline]
    pub fn metric_raw(&self, chart: Chart, x: &Vector) -> SquareMatrix {
        let mut g = [[0.0; MAX_DIM]; MAX_DIM];
        match (self, chart) {
            (ModelGeometry::HalfSpace { dim }, _) => {
                for (i, row) in g.iter_mut().enumerate().take(*dim) {
                    row[i] = 1.0;
                }
            }
            (ModelGeometry::DiskExterior, _) => {
                g[0][0] = 1.0;
                g[1][1] = x[0] * x[0];
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                let f2 = 1.0 - x[0] * x[0] - x[1] * x[1];
                for i in 0..2 {
                    for j in 0..2 {
                        g[i][j] = if i == j { 1.0 } else { 0.0 } + x[i] * x[j] / f2;
                    }
                }
            }
            (ModelGeometry::Hemisphere, _) => {
                let s = x[0].sin();
                g[0][0] = 1.0;
                g[1][1] = s * s;
            }
        }
        g
    }

    /// Inverse metric `g^ij` at `x` in `chart` (no domain check).
    #[inline]
    pub fn inverse_metric_raw(&self, chart: Chart, x: &Vector) -> SquareMatrix {
        let mut h = [[0.0; MAX_DIM]; MAX_DIM];
        match (self, chart) {
            (ModelGeometry::HalfSpace { dim }, _) => {
                for (i, row) in h.iter_mut().enumerate().take(*dim) {
                    row[i] = 1.0;
                }
            }
            (ModelGeometry::DiskExterior, _) => {
                h[0][0] = 1.0;
                h[1][1] = 1.0 / (x[0] * x[0]);
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] = if i == j { 1.0 } else { 0.0 } - x[i] * x[j];
                    }
                }
            }
            (ModelGeometry::Hemisphere, _) => {
                let s = x[0].sin();
                h[0][0] = 1.0;
                h[1][1] = 1.0 / (s * s);
            }
        }
        h
    }

    pub fn metric(&self, p: &Point) -> Result<SquareMatrix> {
        self.check_domain(p)?;
        Ok(self.metric_raw(p.chart, &p.coords))
    }

    /// Riemannian volume density `sqrt(det g)`.
    pub fn volume_density(&self, p: &Point) -> f64 {
        match (self, p.chart) {
            (ModelGeometry::HalfSpace { .. }, _) => 1.0,
            (ModelGeometry::DiskExterior, _) => p.coords[0],
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                1.0 / (1.0 - p.coords[0] * p.coords[0] - p.coords[1] * p.coords[1]).sqrt()
            }
            (ModelGeometry::Hemisphere, _) => p.coords[0].sin(),
        }
    }

    #[inline]
    pub fn christoffel_raw(&self, chart: Chart, x: &Vector) -> Christoffel {
        let mut c = Christoffel::zero(self.dim());
        match (self, chart) {
            (ModelGeometry::HalfSpace { .. }, _) => {}
            (ModelGeometry::DiskExterior, _) => {
                let rho = x[0];
                c.data[0][1][1] = -rho;
                c.data[1][0][1] = 1.0 / rho;
                c.data[1][1][0] = 1.0 / rho;
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                let g = self.metric_raw(chart, x);
                for k in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            c.data[k][i][j] = x[k] * g[i][j];
                        }
                    }
                }
            }
            (ModelGeometry::Hemisphere, _) => {
                let (s, co) = x[0].sin_cos();
                c.data[0][1][1] = -s * co;
                c.data[1][0][1] = co / s;
                c.data[1][1][0] = co / s;
            }
        }
        c
    }

    /// Christoffel symbols of the Levi-Civita connection at `p`.
    pub fn christoffel_at(&self, p: &Point) -> Result<Christoffel> {
        self.check_domain(p)?;
        Ok(self.christoffel_raw(p.chart, &p.coords))
    }

    /// Itô drift `-1/2 g^ij Γ^k_ij` of Brownian motion generated by half the Laplacian.
    #[inline]
    pub fn ito_drift(&self, chart: Chart, x: &Vector) -> Vector {
        let mut d = [0.0; MAX_DIM];
        match (self, chart) {
            (ModelGeometry::HalfSpace { .. }, _) => {}
            (ModelGeometry::DiskExterior, _) => d[0] = 0.5 / x[0],
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                // Γ^k_ij g^ij = p_k * trace(I) = 2 p_k
                d[0] = -x[0];
                d[1] = -x[1];
            }
            (ModelGeometry::Hemisphere, _) => d[0] = 0.5 * x[0].cos() / x[0].sin(),
        }
        d
    }

    /// Converts a point to another chart of the same geometry.
    pub fn to_chart(&self, p: &Point, chart: Chart) -> Result<Point> {
        if p.chart == chart {
            return Ok(*p);
        }
        match (self, p.chart, chart) {
            (ModelGeometry::Hemisphere, Chart::Polar, Chart::Orthographic) => {
                let (st, _) = p.coords[0].sin_cos();
                let (sp, cp) = p.coords[1].sin_cos();
                Ok(Point::new(chart, &[st * cp, st * sp]))
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic, Chart::Polar) => {
                let rad = p.coords[0].hypot(p.coords[1]);
                let theta = rad.min(1.0).asin();
                let phi = p.coords[1].atan2(p.coords[0]);
                Ok(Point::new(chart, &[theta, phi]))
            }
            _ => Err(Error::Unsupported(format!(
                "{} has no {} chart",
                self.id(),
                chart.name()
            ))),
        }
    }

    /// Jacobian `∂(target)/∂(source)` at `p` for a chart change on the hemisphere.
    fn chart_jacobian(&self, p: &Point, target: Chart) -> SquareMatrix {
        let mut j = [[0.0; MAX_DIM]; MAX_DIM];
        match (p.chart, target) {
            (Chart::Polar, Chart::Orthographic) => {
                let (st, ct) = p.coords[0].sin_cos();
                let (sp, cp) = p.coords[1].sin_cos();
                j[0][0] = ct * cp;
                j[0][1] = -st * sp;
                j[1][0] = ct * sp;
                j[1][1] = st * cp;
            }
            (Chart::Orthographic, Chart::Polar) => {
                let polar = self
                    .to_chart(p, Chart::Polar)
                    .expect("hemisphere chart change");
                let fwd = self.chart_jacobian(&polar, Chart::Orthographic);
                let det = fwd[0][0] * fwd[1][1] - fwd[0][1] * fwd[1][0];
                j[0][0] = fwd[1][1] / det;
                j[0][1] = -fwd[0][1] / det;
                j[1][0] = -fwd[1][0] / det;
                j[1][1] = fwd[0][0] / det;
            }
            _ => {
                for (i, row) in j.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
            }
        }
        j
    }

    /// Moves `p` (and the tangent frame carried with it) to another chart.
    pub fn change_chart(&self, p: &mut Point, frame: &mut Frame, target: Chart) -> Result<()> {
        if p.chart == target {
            return Ok(());
        }
        let jac = self.chart_jacobian(p, target);
        let q = self.to_chart(p, target)?;
        let n = self.dim();
        for v in frame.iter_mut().take(n) {
            let mut w = [0.0; MAX_DIM];
            for (i, wi) in w.iter_mut().enumerate().take(n) {
                *wi = (0..n).map(|k| jac[i][k] * v[k]).sum();
            }
            *v = w;
        }
        *p = q;
        Ok(())
    }

    /// Keeps the point in a chart where the step is well conditioned: wraps the
    /// angular coordinate and switches hemisphere charts away from the pole.
    pub fn rechart(&self, p: &mut Point, frame: &mut Frame) -> Result<()> {
        match (self, p.chart) {
            (ModelGeometry::DiskExterior, _) => wrap_angle(&mut p.coords[1]),
            (ModelGeometry::Hemisphere, Chart::Polar) => {
                if p.coords[0] < HEMI_TO_ORTHO {
                    self.change_chart(p, frame, Chart::Orthographic)?;
                } else {
                    wrap_angle(&mut p.coords[1]);
                }
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                if p.coords[0].hypot(p.coords[1]) > HEMI_TO_POLAR.sin() {
                    self.change_chart(p, frame, Chart::Polar)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The geometry's reference orthonormal frame field, parallel along the
    /// normal geodesics of the collar. Sections are expressed in this frame.
    /// On the hemisphere it is the polar frame, singular at the pole.
    pub fn reference_frame(&self, p: &Point) -> Frame {
        let mut f = [[0.0; MAX_DIM]; MAX_DIM];
        match (self, p.chart) {
            (ModelGeometry::HalfSpace { dim }, _) => {
                for (a, v) in f.iter_mut().enumerate().take(*dim) {
                    v[a] = 1.0;
                }
            }
            (ModelGeometry::DiskExterior, _) => {
                f[0][0] = 1.0;
                f[1][1] = 1.0 / p.coords[0];
            }
            (ModelGeometry::Hemisphere, Chart::Polar) => {
                f[0][0] = 1.0;
                f[1][1] = 1.0 / p.coords[0].sin();
            }
            (ModelGeometry::Hemisphere, _) => {
                let rad = p.coords[0].hypot(p.coords[1]);
                if rad < 1e-300 {
                    f[0][0] = 1.0;
                    f[1][1] = 1.0;
                } else {
                    let polar = self
                        .to_chart(p, Chart::Polar)
                        .expect("hemisphere chart change");
                    let mut frame = self.reference_frame(&polar);
                    let mut q = polar;
                    self.change_chart(&mut q, &mut frame, Chart::Orthographic)
                        .expect("hemisphere chart change");
                    f = frame;
                }
            }
        }
        f
    }

    /// Collar (Fermi) coordinates `(r, y)`: distance to the boundary and foot point.
    pub fn collar_coords(&self, p: &Point) -> Result<(f64, Point)> {
        self.check_domain(p)?;
        let q = self.to_chart(p, self.standard_chart())?;
        let r = self.boundary_distance(&q).max(0.0);
        let r0 = self.collar_radius();
        if r >= r0 {
            return Err(Error::OutsideCollar { r, r0 });
        }
        let nc = self
            .normal_coordinate(q.chart)
            .expect("standard chart is a collar chart");
        let mut y = q;
        nc.set_distance(&mut y.coords, 0.0);
        Ok((r, y))
    }

    /// Inverse collar map `(r, y) -> exp_y(r ν)`.
    pub fn from_collar(&self, r: f64, y: &Point) -> Result<Point> {
        let r0 = self.collar_radius();
        if !(0.0..r0).contains(&r) {
            return Err(Error::OutsideCollar { r, r0 });
        }
        let y = self.to_chart(y, self.standard_chart())?;
        if self.boundary_distance(&y).abs() > BOUNDARY_TOL {
            return Err(Error::NotOnBoundary(self.boundary_distance(&y)));
        }
        let nc = self
            .normal_coordinate(y.chart)
            .expect("standard chart is a collar chart");
        let mut p = y;
        nc.set_distance(&mut p.coords, r);
        Ok(p)
    }

    /// Inward unit normal at a point of the boundary, chart components.
    pub fn inward_normal(&self, chart: Chart) -> Vector {
        let nc = self
            .normal_coordinate(chart)
            .expect("boundary data requires a collar chart");
        let mut v = [0.0; MAX_DIM];
        v[nc.index] = nc.sign;
        v
    }

    /// Shape operator carried into the collar along normal geodesics, as a chart
    /// endomorphism `B^i_j` with `Bν = 0`.
    pub fn collar_shape(&self, chart: Chart) -> SquareMatrix {
        let mut b = [[0.0; MAX_DIM]; MAX_DIM];
        if let (ModelGeometry::DiskExterior, Chart::Polar) = (self, chart) {
            b[1][1] = -1.0;
        }
        b
    }

    /// Shape operator and principal curvatures at a boundary point.
    pub fn shape_operator(&self, y: &Point) -> Result<BoundaryData> {
        self.check_domain(y)?;
        let y = self.to_chart(y, self.standard_chart())?;
        let r = self.boundary_distance(&y);
        if r.abs() > BOUNDARY_TOL {
            return Err(Error::NotOnBoundary(r));
        }
        let normal = self.inward_normal(y.chart);
        let shape = self.collar_shape(y.chart);
        let curvatures = match self {
            ModelGeometry::HalfSpace { dim } => vec![0.0; dim - 1],
            ModelGeometry::DiskExterior => vec![-1.0],
            ModelGeometry::Hemisphere => vec![0.0],
        };
        Ok(BoundaryData {
            point: y,
            normal,
            shape,
            curvatures,
        })
    }

    /// Embedding into Euclidean space (the plane for flat entries, R^3 for the hemisphere).
    pub fn embed(&self, p: &Point) -> Vec<f64> {
        match (self, p.chart) {
            (ModelGeometry::HalfSpace { .. }, _) => p.coords().to_vec(),
            (ModelGeometry::DiskExterior, _) => {
                let (s, c) = p.coords[1].sin_cos();
                vec![p.coords[0] * c, p.coords[0] * s]
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                let z = (1.0 - p.coords[0] * p.coords[0] - p.coords[1] * p.coords[1])
                    .max(0.0)
                    .sqrt();
                vec![p.coords[0], p.coords[1], z]
            }
            (ModelGeometry::Hemisphere, _) => {
                let (st, ct) = p.coords[0].sin_cos();
                let (sp, cp) = p.coords[1].sin_cos();
                vec![st * cp, st * sp, ct]
            }
        }
    }

    /// Pushes a chart tangent vector at `p` forward to the embedding space.
    pub fn embed_vector(&self, p: &Point, v: &Vector) -> Vec<f64> {
        match (self, p.chart) {
            (ModelGeometry::HalfSpace { dim }, _) => v[..*dim].to_vec(),
            (ModelGeometry::DiskExterior, _) => {
                let (s, c) = p.coords[1].sin_cos();
                let rho = p.coords[0];
                vec![c * v[0] - rho * s * v[1], s * v[0] + rho * c * v[1]]
            }
            (ModelGeometry::Hemisphere, Chart::Orthographic) => {
                let z = (1.0 - p.coords[0] * p.coords[0] - p.coords[1] * p.coords[1]).sqrt();
                let dz = -(p.coords[0] * v[0] + p.coords[1] * v[1]) / z;
                vec![v[0], v[1], dz]
            }
            (ModelGeometry::Hemisphere, _) => {
                let (st, ct) = p.coords[0].sin_cos();
                let (sp, cp) = p.coords[1].sin_cos();
                vec![
                    ct * cp * v[0] - st * sp * v[1],
                    ct * sp * v[0] + st * cp * v[1],
                    -st * v[0],
                ]
            }
        }
    }

    /// Geodesic distance, exact for the catalogue.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        let (ea, eb) = (self.embed(a), self.embed(b));
        match self {
            ModelGeometry::Hemisphere => {
                let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
                dot.clamp(-1.0, 1.0).acos()
            }
            // straight segments may cross the removed disk; only used for supports
            _ => ea
                .iter()
                .zip(&eb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[inline]
pub fn wrap_angle(phi: &mut f64) {
    if *phi > PI || *phi <= -PI {
        *phi = (*phi + PI).rem_euclid(2.0 * PI) - PI;
        if *phi <= -PI {
            *phi += 2.0 * PI;
        }
    }
}

/// `g(u, v)` for chart vectors.
#[inline]
pub fn inner(g: &SquareMatrix, u: &Vector, v: &Vector, n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i][j] * u[i] * v[j];
        }
    }
    s
}

/// Modified Gram-Schmidt of the first `n` frame vectors with respect to `g`.
pub fn orthonormalize(frame: &mut Frame, g: &SquareMatrix, n: usize) {
    for a in 0..n {
        for b in 0..a {
            let proj = inner(g, &frame[a], &frame[b], n);
            for k in 0..n {
                frame[a][k] -= proj * frame[b][k];
            }
        }
        let norm = inner(g, &frame[a], &frame[a], n).sqrt();
        for k in 0..n {
            frame[a][k] /= norm;
        }
    }
}

/// Largest deviation of `E^T g E` from the identity.
pub fn frame_defect(frame: &Frame, g: &SquareMatrix, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((inner(g, &frame[a], &frame[b], n) - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn half_space_christoffel_vanishes() {
        let g = ModelGeometry::half_space(2).unwrap();
        let c = g.christoffel_at(&g.point(&[0.3, 0.7]).unwrap()).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(c.get(k, i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn hemisphere_christoffel_at_quarter_pi() {
        let g = ModelGeometry::Hemisphere;
        let c = g
            .christoffel_at(&Point::new(Chart::Polar, &[FRAC_PI_4, 0.3]))
            .unwrap();
        assert_abs_diff_eq!(c.get(0, 1, 1), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn disk_exterior_christoffel_at_two() {
        let g = ModelGeometry::DiskExterior;
        let c = g.christoffel_at(&g.point(&[2.0, 1.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(c.get(0, 1, 1), -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(1, 0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(1, 1, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn christoffel_rejects_points_outside_chart() {
        let g = ModelGeometry::DiskExterior;
        assert!(g.christoffel_at(&Point::new(Chart::Polar, &[0.5, 0.0])).is_err());
        let h = ModelGeometry::half_space(2).unwrap();
        assert!(h.christoffel_at(&Point::new(Chart::Cartesian, &[0.0, -1.0])).is_err());
        let s = ModelGeometry::Hemisphere;
        assert!(s
            .christoffel_at(&Point::new(Chart::Orthographic, &[0.8, 0.8]))
            .is_err());
    }

    #[test]
    fn collar_examples() {
        let h = ModelGeometry::half_space(2).unwrap();
        let (r, y) = h.collar_coords(&h.point(&[0.3, 0.1]).unwrap()).unwrap();
        assert_abs_diff_eq!(r, 0.1, epsilon = 1e-15);
        assert_eq!(y.coords(), &[0.3, 0.0]);

        let d = ModelGeometry::DiskExterior;
        let (r, y) = d.collar_coords(&d.point(&[1.2, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(r, 0.2, epsilon = 1e-12);
        assert_eq!(y.coords(), &[1.0, 0.0]);

        let s = ModelGeometry::Hemisphere;
        let (r, y) = s
            .collar_coords(&s.point(&[FRAC_PI_2 - 0.1, 0.7]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(r, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(y.coords[0], FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(y.coords[1], 0.7);
    }

    #[test]
    fn collar_rejects_far_points() {
        let d = ModelGeometry::DiskExterior;
        assert!(matches!(
            d.collar_coords(&d.point(&[1.7, 0.0]).unwrap()),
            Err(Error::OutsideCollar { .. })
        ));
    }

    #[test]
    fn shape_operator_catalogue() {
        let h = ModelGeometry::half_space(3).unwrap();
        let b = h.shape_operator(&h.point(&[0.1, 0.2, 0.0]).unwrap()).unwrap();
        assert_eq!(b.curvatures, vec![0.0, 0.0]);
        let d = ModelGeometry::DiskExterior;
        let b = d.shape_operator(&d.point(&[1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(b.curvatures, vec![-1.0]);
        let s = ModelGeometry::Hemisphere;
        let b = s.shape_operator(&s.point(&[FRAC_PI_2, 2.0]).unwrap()).unwrap();
        assert_eq!(b.curvatures, vec![0.0]);
        assert!(d.shape_operator(&d.point(&[1.1, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn disk_curvature_by_differentiating_the_normal() {
        // ν(φ) = (cos φ, sin φ) in the plane; along the unit tangent T the
        // derivative of ν is T, so B T = -T and κ = -1.
        let d = ModelGeometry::DiskExterior;
        let phi: f64 = 0.37;
        let h = 1e-6;
        let nu = |a: f64| [a.cos(), a.sin()];
        let (np, nm) = (nu(phi + h), nu(phi - h));
        let dnu = [(np[0] - nm[0]) / (2.0 * h), (np[1] - nm[1]) / (2.0 * h)];
        let t = [-phi.sin(), phi.cos()];
        let kappa = -(dnu[0] * t[0] + dnu[1] * t[1]);
        let b = d.shape_operator(&d.point(&[1.0, phi]).unwrap()).unwrap();
        assert_abs_diff_eq!(kappa, b.curvatures[0], epsilon = 1e-8);
    }

    #[test]
    fn normal_has_unit_length() {
        for geom in [
            ModelGeometry::half_space(2).unwrap(),
            ModelGeometry::DiskExterior,
            ModelGeometry::Hemisphere,
        ] {
            let y = match geom {
                ModelGeometry::HalfSpace { .. } => geom.point(&[0.4, 0.0]).unwrap(),
                ModelGeometry::DiskExterior => geom.point(&[1.0, 0.4]).unwrap(),
                ModelGeometry::Hemisphere => geom.point(&[FRAC_PI_2, 0.4]).unwrap(),
            };
            let b = geom.shape_operator(&y).unwrap();
            let g = geom.metric(&b.point).unwrap();
            assert_abs_diff_eq!(inner(&g, &b.normal, &b.normal, 2), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hemisphere_chart_change_round_trip() {
        let s = ModelGeometry::Hemisphere;
        let mut p = Point::new(Chart::Polar, &[0.3, -2.0]);
        let mut frame = s.reference_frame(&p);
        let orig = (p, frame);
        s.change_chart(&mut p, &mut frame, Chart::Orthographic).unwrap();
        let g = s.metric(&p).unwrap();
        assert!(frame_defect(&frame, &g, 2) < 1e-12);
        s.change_chart(&mut p, &mut frame, Chart::Polar).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(p.coords[k], orig.0.coords[k], epsilon = 1e-12);
            for a in 0..2 {
                assert_abs_diff_eq!(frame[a][k], orig.1[a][k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reference_frames_are_orthonormal() {
        let s = ModelGeometry::Hemisphere;
        for p in [
            Point::new(Chart::Polar, &[1.2, 0.4]),
            Point::new(Chart::Orthographic, &[0.2, -0.1]),
            Point::new(Chart::Orthographic, &[0.0, 0.0]),
        ] {
            let g = s.metric(&p).unwrap();
            assert!(frame_defect(&s.reference_frame(&p), &g, 2) < 1e-12);
        }
        let d = ModelGeometry::DiskExterior;
        let p = d.point(&[2.5, 1.0]).unwrap();
        assert!(frame_defect(&d.reference_frame(&p), &d.metric(&p).unwrap(), 2) < 1e-12);
    }

    #[test]
    fn angle_wrapping() {
        let mut a = 3.5;
        wrap_angle(&mut a);
        assert_abs_diff_eq!(a, 3.5 - 2.0 * PI, epsilon = 1e-15);
        let mut b = -PI;
        wrap_angle(&mut b);
        assert_abs_diff_eq!(b, PI, epsilon = 1e-15);
    }

    #[test]
    fn witnesses_are_finite() {
        for geom in [
            ModelGeometry::half_space(2).unwrap(),
            ModelGeometry::DiskExterior,
            ModelGeometry::Hemisphere,
        ] {
            let w = geom.witnesses();
            for v in [
                w.ricci_lower,
                w.shape_lower,
                w.shape_upper,
                w.collar_radius,
                w.sectional_upper_on_collar,
            ] {
                assert!(v.is_finite());
            }
            assert_eq!(w.collar_radius, geom.collar_radius());
        }
    }
}
