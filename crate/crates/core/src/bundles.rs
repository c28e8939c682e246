//! Vector bundles with a Weitzenböck term and mixed boundary data.
//!
//! Everything is expressed in orthonormal frame coordinates. For the form
//! bundle the frame is the tangent frame carried by a path (or the geometry's
//! reference frame); the spinor and generic bundles are trivialized, so their
//! fiber coordinates do not depend on the tangent frame.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{inner, Frame, ModelGeometry, Point, SquareMatrix, MAX_DIM};
use crate::linalg::{
    binomial, compound, derivation, max_asymmetry, min_eigenvalue, subsets, sym_exp,
    FiberMatrix, MAX_RANK,
};

pub const INVARIANT_TOL: f64 = 1e-10;

/// Spinor boundary involution choices; both are real symmetric with square one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpinorInvolution {
    /// `γ(ν)`: anticommutes with tangential Clifford multiplication.
    Chirality,
    /// `γ(e_1)`: commutes with tangential Clifford multiplication.
    Tangential,
}

/// A bundle endomorphism field, in fiber coordinates.
#[derive(Clone)]
pub enum Coefficient {
    Constant(DMatrix<f64>),
    Field(Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>),
}

impl Coefficient {
    pub fn at(&self, p: &Point) -> DMatrix<f64> {
        match self {
            Coefficient::Constant(m) => m.clone(),
            Coefficient::Field(f) => f(p),
        }
    }

    pub fn constant(&self) -> Option<&DMatrix<f64>> {
        match self {
            Coefficient::Constant(m) => Some(m),
            Coefficient::Field(_) => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(m) => write!(f, "Constant({m})"),
            Coefficient::Field(_) => write!(f, "Field(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BundleKind {
    Scalar,
    Forms { p: usize },
    Spinor2d(SpinorInvolution),
    Generic {
        weitzenbock: Coefficient,
        robin: Coefficient,
        involution: Coefficient,
    },
}

/// Boundary matrices at one point, in the frame they were computed in.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryOps {
    pub involution: FiberMatrix,
    pub pi_plus: FiberMatrix,
    pub pi_minus: FiberMatrix,
    pub robin: FiberMatrix,
}

#[derive(Clone, Debug)]
pub struct BundleModel {
    pub geom: ModelGeometry,
    pub kind: BundleKind,
    pub rank: usize,
    pub c1: f64,
    pub c2: f64,
    basis: Vec<Vec<usize>>,
    weitzenbock: Option<FiberMatrix>,
}

impl BundleModel {
    pub fn scalar(geom: ModelGeometry) -> Self {
        BundleModel {
            geom,
            kind: BundleKind::Scalar,
            rank: 1,
            c1: 0.0,
            c2: 0.0,
            basis: vec![vec![]],
            weitzenbock: Some(FiberMatrix::zeros(1)),
        }
    }

    /// Exterior `p`-forms with absolute boundary conditions.
    pub fn forms(geom: ModelGeometry, p: usize) -> Result<Self> {
        let n = geom.dim();
        if p > n {
            return Err(Error::DegreeOutOfRange { p, n });
        }
        let rank = binomial(n, p);
        if rank > MAX_RANK {
            return Err(Error::Unsupported(format!("fiber rank {rank} too large")));
        }
        let mut w = FiberMatrix::zeros(rank);
        if matches!(geom, ModelGeometry::Hemisphere) {
            match p {
                0 => {}
                // Ric = (n - 1) g on the unit sphere
                1 => w = FiberMatrix::identity(rank),
                _ => {
                    return Err(Error::Unsupported(format!(
                        "Weitzenböck term for {p}-forms on {} is not tabulated",
                        geom.id()
                    )))
                }
            }
        }
        let c1 = if matches!(geom, ModelGeometry::Hemisphere) && p == 1 {
            1.0
        } else {
            0.0
        };
        // inf of sums of p principal curvatures; vacuous when no tangential p-forms exist
        let c2 = if p >= 1 && p < n {
            match geom {
                ModelGeometry::DiskExterior => -(p as f64),
                _ => 0.0,
            }
        } else {
            0.0
        };
        Ok(BundleModel {
            geom,
            kind: BundleKind::Forms { p },
            rank,
            c1,
            c2,
            basis: subsets(n, p),
            weitzenbock: Some(w),
        })
    }

    pub fn spinor2d(geom: ModelGeometry, involution: SpinorInvolution) -> Result<Self> {
        if geom != (ModelGeometry::HalfSpace { dim: 2 }) {
            return Err(Error::Unsupported(format!(
                "spinor bundle is only provided on half_space(2), not {}",
                geom.id()
            )));
        }
        Ok(BundleModel {
            geom,
            kind: BundleKind::Spinor2d(involution),
            rank: 2,
            c1: 0.0,
            c2: 0.0,
            basis: Vec::new(),
            weitzenbock: Some(FiberMatrix::zeros(2)),
        })
    }

    /// A trivial bundle with user-supplied data. The invariants are checked at
    /// `samples` interior and boundary points; `c1`, `c2` default to the
    /// sampled lower bounds.
    pub fn generic(
        geom: ModelGeometry,
        rank: usize,
        weitzenbock: Coefficient,
        robin: Coefficient,
        involution: Coefficient,
        c1: Option<f64>,
        c2: Option<f64>,
    ) -> Result<Self> {
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::InvalidArgument(format!("fiber rank {rank}")));
        }
        let weitz_const = weitzenbock.constant().map(FiberMatrix::from_dmatrix);
        let mut b = BundleModel {
            geom,
            kind: BundleKind::Generic {
                weitzenbock,
                robin,
                involution,
            },
            rank,
            c1: f64::NEG_INFINITY,
            c2: f64::NEG_INFINITY,
            basis: Vec::new(),
            weitzenbock: weitz_const,
        };
        b.verify(200)?;
        let (w_min, s_min) = b.lower_bounds(200);
        b.c1 = c1.unwrap_or(w_min);
        b.c2 = c2.unwrap_or(if s_min.is_finite() { s_min } else { 0.0 });
        if b.c1 > w_min + 1e-8 {
            return Err(Error::Invariant {
                what: format!("declared c1 = {} exceeds sampled minimum {w_min}", b.c1),
                at: "weitzenbock".into(),
            });
        }
        if s_min.is_finite() && b.c2 > s_min + 1e-8 {
            return Err(Error::Invariant {
                what: format!("declared c2 = {} exceeds sampled minimum {s_min}", b.c2),
                at: "robin".into(),
            });
        }
        Ok(b)
    }

    /// Constant generic bundle from row-major matrices.
    pub fn generic_constant(
        geom: ModelGeometry,
        rank: usize,
        weitzenbock: &[f64],
        robin: &[f64],
        involution: &[f64],
        c1: Option<f64>,
        c2: Option<f64>,
    ) -> Result<Self> {
        let mat = |name: &str, v: &[f64]| -> Result<Coefficient> {
            if v.len() != rank * rank {
                return Err(Error::InvalidArgument(format!(
                    "{name} has {} entries, expected {}",
                    v.len(),
                    rank * rank
                )));
            }
            Ok(Coefficient::Constant(DMatrix::from_row_slice(rank, rank, v)))
        };
        Self::generic(
            geom,
            rank,
            mat("weitzenbock", weitzenbock)?,
            mat("robin", robin)?,
            mat("involution", involution)?,
            c1,
            c2,
        )
    }

    /// Scalar bundle with constant potential `W = w`.
    pub fn scalar_potential(geom: ModelGeometry, w: f64) -> Self {
        Self::generic_constant(geom, 1, &[w], &[0.0], &[1.0], None, None)
            .expect("scalar potential is always a valid bundle")
    }

    /// Pure Robin scalar bundle `u_ν = σ u`, no potential.
    pub fn scalar_robin(geom: ModelGeometry, sigma: f64) -> Self {
        Self::generic_constant(geom, 1, &[0.0], &[sigma], &[1.0], None, None)
            .expect("scalar Robin data is always a valid bundle")
    }

    /// Constant `W = c I` on forms of degree `p`, absolute boundary conditions.
    pub fn forms_with_potential(geom: ModelGeometry, p: usize, c: f64) -> Result<Self> {
        let mut b = Self::forms(geom, p)?;
        let base = b.weitzenbock.expect("forms have constant Weitzenböck term");
        let mut w = FiberMatrix::identity(b.rank);
        w.scale(c);
        for i in 0..b.rank {
            for j in 0..b.rank {
                w.a[i][j] += base.a[i][j];
            }
        }
        b.weitzenbock = Some(w);
        b.c1 += c;
        Ok(b)
    }

    pub fn id(&self) -> String {
        match &self.kind {
            BundleKind::Scalar => "scalar".into(),
            BundleKind::Forms { p } => format!("forms:{p}"),
            BundleKind::Spinor2d(SpinorInvolution::Chirality) => "spinor2d".into(),
            BundleKind::Spinor2d(SpinorInvolution::Tangential) => "spinor2d:tangential".into(),
            BundleKind::Generic { .. } => format!("generic({})", self.rank),
        }
    }

    /// Whether fiber coordinates follow the tangent frame (and so need transport).
    pub fn uses_tangent_frame(&self) -> bool {
        matches!(self.kind, BundleKind::Forms { p } if p > 0 && p < self.geom.dim())
    }

    /// Whether fiber coordinates follow the tangent frame up to orientation (top forms).
    fn top_form(&self) -> bool {
        matches!(self.kind, BundleKind::Forms { p } if p > 0 && p == self.geom.dim())
    }

    pub fn form_degree(&self) -> Option<usize> {
        match self.kind {
            BundleKind::Forms { p } => Some(p),
            _ => None,
        }
    }

    /// `W†` when it is constant in frame coordinates.
    pub fn constant_weitzenbock(&self) -> Option<&FiberMatrix> {
        self.weitzenbock.as_ref()
    }

    pub fn weitzenbock(&self, x: &Point) -> FiberMatrix {
        if let Some(w) = &self.weitzenbock {
            return *w;
        }
        match &self.kind {
            BundleKind::Generic { weitzenbock, .. } => FiberMatrix::from_dmatrix(&weitzenbock.at(x)),
            _ => unreachable!("catalogue bundles have constant Weitzenböck terms"),
        }
    }

    /// Whether the boundary matrices are independent of point and frame.
    pub fn constant_boundary(&self) -> bool {
        match &self.kind {
            BundleKind::Scalar | BundleKind::Spinor2d(_) => true,
            BundleKind::Forms { p } => *p == 0 || *p == self.geom.dim(),
            BundleKind::Generic {
                robin, involution, ..
            } => robin.constant().is_some() && involution.constant().is_some(),
        }
    }

    /// Whether `S†` vanishes identically.
    pub fn robin_vanishes(&self) -> bool {
        match &self.kind {
            BundleKind::Scalar | BundleKind::Spinor2d(_) => true,
            BundleKind::Forms { .. } => self.c2 == 0.0 && !matches!(self.geom, ModelGeometry::DiskExterior),
            BundleKind::Generic { robin, .. } => robin
                .constant()
                .map(|m| m.iter().all(|&v| v == 0.0))
                .unwrap_or(false),
        }
    }

    /// Involution, projections and Robin term at a boundary (or collar) point
    /// `y`, in the frame `frame` (chart components at `y`).
    pub fn boundary_ops(&self, y: &Point, frame: &Frame) -> BoundaryOps {
        let n = self.geom.dim();
        let (involution, robin) = match &self.kind {
            BundleKind::Scalar => (FiberMatrix::identity(1), FiberMatrix::zeros(1)),
            BundleKind::Spinor2d(which) => {
                let mut i = FiberMatrix::zeros(2);
                match which {
                    SpinorInvolution::Chirality => {
                        i.a[0][0] = 1.0;
                        i.a[1][1] = -1.0;
                    }
                    SpinorInvolution::Tangential => {
                        i.a[0][1] = 1.0;
                        i.a[1][0] = 1.0;
                    }
                }
                (i, FiberMatrix::zeros(2))
            }
            BundleKind::Generic {
                robin, involution, ..
            } => (
                FiberMatrix::from_dmatrix(&involution.at(y)),
                FiberMatrix::from_dmatrix(&robin.at(y)),
            ),
            BundleKind::Forms { .. } => {
                let (nn, b) = self.frame_boundary_geometry(y, frame);
                let pi_n = derivation(&nn, n, &self.basis);
                let mut inv = FiberMatrix::identity(self.rank);
                for i in 0..self.rank {
                    for j in 0..self.rank {
                        inv.a[i][j] -= 2.0 * pi_n.a[i][j];
                    }
                }
                let mut pi_t = FiberMatrix::identity(self.rank);
                for i in 0..self.rank {
                    for j in 0..self.rank {
                        pi_t.a[i][j] -= pi_n.a[i][j];
                    }
                }
                let s = pi_t.mul(&derivation(&b, n, &self.basis)).mul(&pi_t);
                (inv, s)
            }
        };
        let mut pi_plus = FiberMatrix::zeros(self.rank);
        let mut pi_minus = FiberMatrix::zeros(self.rank);
        for i in 0..self.rank {
            for j in 0..self.rank {
                let id = if i == j { 1.0 } else { 0.0 };
                pi_plus.a[i][j] = 0.5 * (id + involution.a[i][j]);
                pi_minus.a[i][j] = 0.5 * (id - involution.a[i][j]);
            }
        }
        BoundaryOps {
            involution,
            pi_plus,
            pi_minus,
            robin,
        }
    }

    /// `nn^T` and `B†` in frame components, from the collar chart at `y`.
    fn frame_boundary_geometry(&self, y: &Point, frame: &Frame) -> (SquareMatrix, SquareMatrix) {
        let geom = &self.geom;
        let n = geom.dim();
        let g = geom.metric_raw(y.chart, &y.coords);
        let nu = geom.inward_normal(y.chart);
        let bchart = geom.collar_shape(y.chart);
        let mut ncomp = [0.0; MAX_DIM];
        for a in 0..n {
            ncomp[a] = inner(&g, &frame[a], &nu, n);
        }
        let mut nn = [[0.0; MAX_DIM]; MAX_DIM];
        let mut bf = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..n {
            for b in 0..n {
                nn[a][b] = ncomp[a] * ncomp[b];
                let mut be = [0.0; MAX_DIM];
                for i in 0..n {
                    be[i] = (0..n).map(|j| bchart[i][j] * frame[b][j]).sum();
                }
                bf[a][b] = inner(&g, &frame[a], &be, n);
            }
        }
        (nn, bf)
    }

    /// `exp(-S† dλ) (I - Π₋†)` at a contact point.
    pub fn contact_factor(&self, y: &Point, frame: &Frame, dlam: f64) -> FiberMatrix {
        let ops = self.boundary_ops(y, frame);
        let keep = ops.pi_plus;
        if self.robin_vanishes() {
            return keep;
        }
        let e = FiberMatrix::from_dmatrix(&sym_exp(&ops.robin.to_dmatrix(), -dlam));
        e.mul(&keep)
    }

    /// Map from reference-frame fiber coordinates at the path endpoint to the
    /// path's carried frame: `Λ^p(R)^T` with `R_ab = g(F_a, E_b)`.
    pub fn pullback(&self, x: &Point, frame: &Frame, reference: &Frame) -> FiberMatrix {
        if !self.uses_tangent_frame() && !self.top_form() {
            return FiberMatrix::identity(self.rank);
        }
        let n = self.geom.dim();
        let g = self.geom.metric_raw(x.chart, &x.coords);
        let mut r = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..n {
            for b in 0..n {
                r[a][b] = inner(&g, &reference[a], &frame[b], n);
            }
        }
        compound(&r, &self.basis).transpose()
    }

    /// Minimum eigenvalue of `W†` and of `S†` on the `+1` eigenspace of the
    /// involution, over sampled points and frames. The second entry is `+inf`
    /// when that eigenspace is trivial everywhere.
    pub fn lower_bounds(&self, samples: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut w_min = f64::INFINITY;
        let mut s_min = f64::INFINITY;
        for _ in 0..samples.max(1) {
            let x = sample_interior(&self.geom, &mut rng);
            let w = self.weitzenbock(&x).to_dmatrix();
            w_min = w_min.min(min_eigenvalue(&w));
            let (y, frame) = sample_boundary_frame(&self.geom, &mut rng);
            let ops = self.boundary_ops(&y, &frame);
            if let Some(m) = restricted_min_eig(&ops.robin, &ops.involution) {
                s_min = s_min.min(m);
            }
        }
        (w_min, s_min)
    }

    /// Re-checks the structural invariants at sampled points.
    pub fn verify(&self, samples: usize) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ 1);
        for _ in 0..samples.max(1) {
            let x = sample_interior(&self.geom, &mut rng);
            let w = self.weitzenbock(&x).to_dmatrix();
            if w.nrows() != self.rank || !w.iter().all(|v| v.is_finite()) {
                return Err(invariant("weitzenbock has wrong shape or non-finite entries", &x));
            }
            if max_asymmetry(&w) > INVARIANT_TOL {
                return Err(invariant("weitzenbock is not symmetric", &x));
            }
            let (y, frame) = sample_boundary_frame(&self.geom, &mut rng);
            let ops = self.boundary_ops(&y, &frame);
            check_boundary_ops(&ops).map_err(|what| invariant(&what, &y))?;
        }
        Ok(())
    }
}

fn invariant(what: &str, p: &Point) -> Error {
    Error::Invariant {
        what: what.to_string(),
        at: format!("{:?} {:?}", p.chart, p.coords()),
    }
}

/// Checks the projection algebra and Robin compatibility of one boundary sample.
pub fn check_boundary_ops(ops: &BoundaryOps) -> std::result::Result<(), String> {
    let n = ops.involution.n;
    let i = ops.involution.to_dmatrix();
    let s = ops.robin.to_dmatrix();
    let id = DMatrix::<f64>::identity(n, n);
    if !i.iter().all(|v| v.is_finite()) || !s.iter().all(|v| v.is_finite()) {
        return Err("non-finite boundary data".into());
    }
    if max_asymmetry(&i) > INVARIANT_TOL {
        return Err("involution is not symmetric".into());
    }
    let sq = (&i * &i - &id).abs().max();
    if sq > INVARIANT_TOL {
        return Err(format!("involution squares to identity only up to {sq:e}"));
    }
    if max_asymmetry(&s) > INVARIANT_TOL {
        return Err("robin endomorphism is not symmetric".into());
    }
    let pm = ops.pi_minus.to_dmatrix();
    let comm = (&s * &pm - &pm * &s).abs().max();
    if comm > INVARIANT_TOL {
        return Err(format!("robin endomorphism does not commute with projections ({comm:e})"));
    }
    let leak = (&s * &pm).abs().max();
    if leak > INVARIANT_TOL {
        return Err(format!("robin endomorphism does not vanish on the -1 eigenspace ({leak:e})"));
    }
    Ok(())
}

/// Minimum eigenvalue of `S` restricted to the `+1` eigenspace of `I`.
fn restricted_min_eig(s: &FiberMatrix, inv: &FiberMatrix) -> Option<f64> {
    let eig = inv.to_dmatrix().symmetric_eigen();
    let cols: Vec<usize> = (0..inv.n)
        .filter(|&k| eig.eigenvalues[k] > 0.0)
        .collect();
    if cols.is_empty() {
        return None;
    }
    let q = DMatrix::from_fn(inv.n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])]);
    let r = q.transpose() * s.to_dmatrix() * &q;
    Some(min_eigenvalue(&r))
}

fn random_rotation<R: Rng>(n: usize, rng: &mut R) -> SquareMatrix {
    // Gram-Schmidt of a random matrix; any orthogonal matrix will do here
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    let mut id = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in id.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    for row in m.iter_mut().take(n) {
        for v in row.iter_mut().take(n) {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    crate::geometry::orthonormalize(&mut m, &id, n);
    m
}

/// Rotates a frame by an orthogonal matrix: `E'_a = Σ_b Q_ab E_b`.
fn rotate_frame(frame: &Frame, q: &SquareMatrix, n: usize) -> Frame {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for a in 0..n {
        for b in 0..n {
            for k in 0..n {
                out[a][k] += q[a][b] * frame[b][k];
            }
        }
    }
    out
}

pub(crate) fn sample_interior<R: Rng>(geom: &ModelGeometry, rng: &mut R) -> Point {
    match geom {
        ModelGeometry::HalfSpace { dim } => {
            let mut c = [0.0; MAX_DIM];
            for v in c.iter_mut().take(*dim) {
                *v = rng.random_range(-3.0..3.0);
            }
            c[dim - 1] = rng.random_range(0.0..3.0);
            Point::new(geom.standard_chart(), &c[..*dim])
        }
        ModelGeometry::DiskExterior => Point::new(
            geom.standard_chart(),
            &[rng.random_range(1.0..4.0), rng.random_range(-PI..PI)],
        ),
        ModelGeometry::Hemisphere => Point::new(
            geom.standard_chart(),
            &[rng.random_range(0.05..FRAC_PI_2), rng.random_range(-PI..PI)],
        ),
    }
}

/// A random boundary point with a randomly rotated orthonormal frame.
pub(crate) fn sample_boundary_frame<R: Rng>(geom: &ModelGeometry, rng: &mut R) -> (Point, Frame) {
    let n = geom.dim();
    let x = sample_interior(geom, rng);
    let (_, y) = match geom.collar_coords(&x) {
        Ok(v) => v,
        Err(_) => {
            let mut y = x;
            let nc = geom.normal_coordinate(y.chart).expect("standard chart is a collar chart");
            nc.set_distance(&mut y.coords, 0.0);
            (0.0, y)
        }
    };
    let f = geom.reference_frame(&y);
    let q = random_rotation(n, rng);
    (y, rotate_frame(&f, &q, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident(n: usize) -> FiberMatrix {
        FiberMatrix::identity(n)
    }

    #[test]
    fn half_plane_one_forms() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = BundleModel::forms(g, 1).unwrap();
        assert_eq!(b.rank, 2);
        let y = g.point(&[0.3, 0.0]).unwrap();
        let ops = b.boundary_ops(&y, &g.reference_frame(&y));
        assert_eq!(ops.involution.a[0][0], 1.0);
        assert_eq!(ops.involution.a[1][1], -1.0);
        assert_eq!(ops.involution.a[0][1], 0.0);
        assert!(ops.robin.max_abs_diff(&FiberMatrix::zeros(2)) == 0.0);
        assert_eq!(b.lower_bounds(50), (0.0, 0.0));
    }

    #[test]
    fn hemisphere_one_forms_have_ricci_weitzenbock() {
        let b = BundleModel::forms(ModelGeometry::Hemisphere, 1).unwrap();
        assert_eq!(*b.constant_weitzenbock().unwrap(), ident(2));
        let (w, s) = b.lower_bounds(50);
        assert_eq!(w, 1.0);
        assert_eq!(s, 0.0);
        assert!(BundleModel::forms(ModelGeometry::Hemisphere, 2).is_err());
    }

    #[test]
    fn zero_forms_are_neumann_scalars() {
        for geom in [
            ModelGeometry::half_space(3).unwrap(),
            ModelGeometry::DiskExterior,
            ModelGeometry::Hemisphere,
        ] {
            let b = BundleModel::forms(geom, 0).unwrap();
            assert_eq!(b.rank, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (y, f) = sample_boundary_frame(&geom, &mut rng);
            let ops = b.boundary_ops(&y, &f);
            assert_eq!(ops.involution.a[0][0], 1.0);
            assert_eq!(ops.robin.a[0][0], 0.0);
        }
    }

    #[test]
    fn degree_out_of_range() {
        assert!(matches!(
            BundleModel::forms(ModelGeometry::half_space(2).unwrap(), 3),
            Err(Error::DegreeOutOfRange { p: 3, n: 2 })
        ));
    }

    #[test]
    fn disk_exterior_one_forms_have_negative_robin() {
        let g = ModelGeometry::DiskExterior;
        let b = BundleModel::forms(g, 1).unwrap();
        let y = g.point(&[1.0, 0.4]).unwrap();
        let ops = b.boundary_ops(&y, &g.reference_frame(&y));
        // (e_rho, e_phi): e_phi is tangential with curvature -1
        assert!((ops.robin.a[1][1] + 1.0).abs() < 1e-14);
        assert!(ops.robin.a[0][0].abs() < 1e-14);
        let (_, s) = b.lower_bounds(100);
        assert!((s + 1.0).abs() < 1e-10);
        assert_eq!(b.c2, -1.0);
    }

    #[test]
    fn spinor_projections_are_complementary_rank_one() {
        let g = ModelGeometry::half_space(2).unwrap();
        for inv in [SpinorInvolution::Chirality, SpinorInvolution::Tangential] {
            let b = BundleModel::spinor2d(g, inv).unwrap();
            let y = g.point(&[0.0, 0.0]).unwrap();
            let ops = b.boundary_ops(&y, &g.reference_frame(&y));
            check_boundary_ops(&ops).unwrap();
            let tr_plus = ops.pi_plus.a[0][0] + ops.pi_plus.a[1][1];
            assert!((tr_plus - 1.0).abs() < 1e-15);
        }
        assert!(BundleModel::spinor2d(ModelGeometry::Hemisphere, SpinorInvolution::Chirality).is_err());
    }

    #[test]
    fn chirality_involution_anticommutes_with_tangential_clifford() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = BundleModel::spinor2d(g, SpinorInvolution::Chirality).unwrap();
        let y = g.point(&[0.0, 0.0]).unwrap();
        let i = b.boundary_ops(&y, &g.reference_frame(&y)).involution.to_dmatrix();
        let gamma_t = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((&i * &gamma_t + &gamma_t * &i).abs().max() < 1e-15);
    }

    #[test]
    fn generic_examples() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = BundleModel::scalar_potential(g, 2.0);
        assert_eq!(b.c1, 2.0);
        let b = BundleModel::generic_constant(
            g,
            2,
            &[1.0, 0.0, 0.0, 3.0],
            &[0.0; 4],
            &[1.0, 0.0, 0.0, 1.0],
            None,
            None,
        )
        .unwrap();
        assert!((b.c1 - 1.0).abs() < 1e-12);
        assert_eq!(b.lower_bounds(10).1, 0.0);
        let bad = BundleModel::generic_constant(
            g,
            2,
            &[1.0, 0.0, 0.0, 3.0],
            &[0.0; 4],
            &[1.0, 0.5, 0.5, 1.0],
            None,
            None,
        );
        assert!(matches!(bad, Err(Error::Invariant { .. })));
    }

    #[test]
    fn generic_rejects_robin_on_dirichlet_part() {
        let g = ModelGeometry::half_space(2).unwrap();
        let bad = BundleModel::generic_constant(
            g,
            2,
            &[0.0; 4],
            &[0.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, -1.0],
            None,
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn generic_rejects_overstated_bounds() {
        let g = ModelGeometry::half_space(2).unwrap();
        let bad = BundleModel::generic_constant(g, 1, &[1.0], &[0.0], &[1.0], Some(2.0), None);
        assert!(bad.is_err());
    }

    #[test]
    fn pullback_is_identity_in_reference_frame() {
        let g = ModelGeometry::Hemisphere;
        let b = BundleModel::forms(g, 1).unwrap();
        let x = g.point(&[1.0, 0.5]).unwrap();
        let f = g.reference_frame(&x);
        assert!(b.pullback(&x, &f, &f).max_abs_diff(&ident(2)) < 1e-14);
    }

    #[test]
    fn contact_factor_kills_normal_component() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = BundleModel::forms(g, 1).unwrap();
        let y = g.point(&[0.0, 0.0]).unwrap();
        let c = b.contact_factor(&y, &g.reference_frame(&y), 0.3);
        assert_eq!(c.a[1][1], 0.0);
        assert_eq!(c.a[0][0], 1.0);
    }
}
