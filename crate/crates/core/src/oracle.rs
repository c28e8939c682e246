//! Deterministic reference values: method-of-images kernels, the hemisphere
//! eigen-expansion, Crank-Nicolson solvers for Robin problems, quadrature, and
//! a discrete quadratic form.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::erf::{erf, erfc};

use crate::bundles::BundleModel;
use crate::error::{Error, Result};
use crate::geometry::{ModelGeometry, Point, MAX_DIM};
use crate::sections::{check_compliance, SectionField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bc {
    Neumann,
    Dirichlet,
}

/// Free heat kernel of `½ d²/dx²` in one dimension.
#[inline]
pub fn gaussian_kernel(t: f64, d: f64) -> f64 {
    (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Half-line heat kernel of `½ d²/dx²` with Neumann or Dirichlet data at 0.
pub fn images_kernel(t: f64, x: f64, y: f64, bc: Bc) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel time must be positive, got {t}")));
    }
    if x < 0.0 || y < 0.0 {
        return Err(Error::InvalidArgument("half-line points must be nonnegative".into()));
    }
    let direct = gaussian_kernel(t, x - y);
    let image = gaussian_kernel(t, x + y);
    Ok(match bc {
        Bc::Neumann => direct + image,
        Bc::Dirichlet => direct - image,
    })
}

/// Scalar Neumann kernel on the half-space `x_n >= 0`.
pub fn halfspace_neumann_kernel(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    let mut k = images_kernel(t, x[n - 1], y[n - 1], Bc::Neumann)?;
    for i in 0..n - 1 {
        k *= gaussian_kernel(t, x[i] - y[i]);
    }
    Ok(k)
}

/// 1-form kernel on the half-space with absolute boundary conditions: in the
/// `dx_i` frame it is diagonal, Neumann in the tangential components and
/// Dirichlet in the normal one, times free Gaussians along the boundary.
pub fn halfspace_forms_kernel(t: f64, x: &[f64], y: &[f64], p: usize, n: usize) -> Result<DMatrix<f64>> {
    if x.len() != n || y.len() != n {
        return Err(Error::InvalidArgument("point dimension mismatch".into()));
    }
    match p {
        0 => Ok(DMatrix::from_element(1, 1, halfspace_neumann_kernel(t, x, y)?)),
        1 => {
            let mut tang = 1.0;
            for i in 0..n - 1 {
                tang *= gaussian_kernel(t, x[i] - y[i]);
            }
            let kn = images_kernel(t, x[n - 1], y[n - 1], Bc::Neumann)?;
            let kd = images_kernel(t, x[n - 1], y[n - 1], Bc::Dirichlet)?;
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n - 1 {
                m[(i, i)] = tang * kn;
            }
            m[(n - 1, n - 1)] = tang * kd;
            Ok(m)
        }
        _ => Err(Error::Unsupported(format!(
            "half-space form kernel is tabulated for p <= 1, not p = {p}"
        ))),
    }
}

/// `∫_0^∞ K_bc(t; x, y) dy`: one for Neumann, `erf(x / sqrt(2t))` for Dirichlet.
pub fn images_mass(t: f64, x: f64, bc: Bc) -> f64 {
    match bc {
        Bc::Neumann => 1.0,
        Bc::Dirichlet => erf(x / (2.0 * t).sqrt()),
    }
}

/// `E_x[exp(-σ λ_t)]` for reflected Brownian motion on the half-line, the
/// closed form of the Robin problem `u_t = ½u''`, `u'(0) = σu(0)`, `u(0, ·) = 1`.
pub fn robin_survival(sigma: f64, t: f64, x: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    let a = x / s + sigma * (t / 2.0).sqrt();
    let second = if a > 25.0 {
        // erfc underflows; use the exponentially scaled asymptotic form
        let ex = -x * x / (2.0 * t);
        ex.exp() / (a * PI.sqrt()) * (1.0 - 1.0 / (2.0 * a * a) + 3.0 / (4.0 * a.powi(4)))
    } else {
        (sigma * x + sigma * sigma * t / 2.0).exp() * erfc(a)
    };
    erf(x / s) + second
}

// ---------------------------------------------------------------- quadrature

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("nonzero order"));
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (c + h * x, h * w))
        .collect()
}

/// Adaptive Gauss-Legendre integration (bisection on a 10-point rule).
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(10).unwrap());
    fn rec(f: &dyn Fn(f64) -> f64, rule: &GaussLegendre, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, f);
        let right = rule.integrate(m, b, f);
        if depth == 0 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            rec(f, rule, a, m, left, 0.5 * tol, depth - 1) + rec(f, rule, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    let whole = rule.integrate(a, b, f);
    rec(f, &rule, a, b, whole, tol, 40)
}

/// Tensor-product quadrature over a coordinate box of the standard chart,
/// with the Riemannian volume density folded into the weights.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    /// `cells[i]` panels of `order`-point Gauss-Legendre along coordinate `i`.
    pub fn boxed(geom: &ModelGeometry, lo: &[f64], hi: &[f64], cells: &[usize], order: usize) -> Self {
        let n = geom.dim();
        assert!(lo.len() == n && hi.len() == n && cells.len() == n);
        let axes: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|i| {
                let h = (hi[i] - lo[i]) / cells[i] as f64;
                (0..cells[i])
                    .flat_map(|c| {
                        let a = lo[i] + c as f64 * h;
                        gauss_legendre(order, a, a + h)
                    })
                    .collect()
            })
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let mut c = [0.0; MAX_DIM];
            let mut w = 1.0;
            for i in 0..n {
                c[i] = axes[i][idx[i]].0;
                w *= axes[i][idx[i]].1;
            }
            let p = Point::new(geom.standard_chart(), &c[..n]);
            w *= geom.volume_density(&p);
            points.push(p);
            weights.push(w);
            let mut k = 0;
            loop {
                if k == n {
                    return QuadratureGrid { points, weights };
                }
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Grid covering the support ball of a compactly supported section.
    pub fn covering(geom: &ModelGeometry, section: &SectionField, cells: usize, order: usize) -> Result<Self> {
        let s = section
            .support
            .ok_or_else(|| Error::InvalidArgument("section has no compact support".into()))?;
        let n = geom.dim();
        let c = s.center.coords;
        let (mut lo, mut hi) = (vec![0.0; n], vec![0.0; n]);
        match geom {
            ModelGeometry::HalfSpace { .. } => {
                for i in 0..n {
                    lo[i] = c[i] - s.radius;
                    hi[i] = c[i] + s.radius;
                }
                lo[n - 1] = lo[n - 1].max(0.0);
            }
            ModelGeometry::DiskExterior => {
                lo[0] = (c[0] - s.radius).max(1.0);
                hi[0] = c[0] + s.radius;
                let half = (s.radius / (c[0] - s.radius).max(1.0)).asin().min(PI) * 1.05;
                lo[1] = c[1] - half;
                hi[1] = c[1] + half;
            }
            ModelGeometry::Hemisphere => {
                lo[0] = (c[0] - s.radius).max(1e-6);
                hi[0] = (c[0] + s.radius).min(PI / 2.0);
                let sin_min = lo[0].sin().min(hi[0].sin());
                let half = if s.radius >= c[0] || sin_min <= s.radius.sin() {
                    PI
                } else {
                    (s.radius.sin() / sin_min).asin() * 1.05
                };
                lo[1] = c[1] - half;
                hi[1] = c[1] + half;
            }
        }
        Ok(Self::boxed(geom, &lo, &hi, &vec![cells; n], order))
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

// ---------------------------------------------------------------- Crank-Nicolson

/// Uniform grid on `[left, left + length]` with `nx` intervals and `nt` time steps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Grid1d {
    pub length: f64,
    pub nx: usize,
    pub nt: usize,
}

#[derive(Clone, Debug)]
pub struct PdeSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    radial: bool,
}

impl PdeSolution {
    /// Four-point Lagrange interpolation; zero beyond the absorbing end.
    pub fn value_at(&self, x: f64) -> f64 {
        let h = self.x[1] - self.x[0];
        let s = (x - self.x[0]) / h;
        let last = self.x.len() - 1;
        if s < 0.0 || s > last as f64 {
            return if s < 0.0 { self.u[0] } else { 0.0 };
        }
        let i = (s.floor() as usize).clamp(1, last.saturating_sub(2));
        let nodes = [i - 1, i, i + 1, i + 2];
        let mut v = 0.0;
        for &j in &nodes {
            let mut l = 1.0;
            for &k in &nodes {
                if k != j {
                    l *= (s - k as f64) / (j as f64 - k as f64);
                }
            }
            v += l * self.u[j];
        }
        v
    }

    /// Trapezoidal `∫ u dx` (with `2π r dr` on radial grids).
    pub fn mass(&self) -> f64 {
        let h = self.x[1] - self.x[0];
        let weight = |i: usize| if self.radial { 2.0 * PI * self.x[i] } else { 1.0 };
        let n = self.u.len();
        let mut s = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            s += w * weight(i) * self.u[i];
        }
        s * h
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm).
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut bp = b[0];
    cp[0] = c[0] / bp;
    d[0] /= bp;
    for i in 1..n {
        bp = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / bp;
        d[i] = (d[i] - a[i] * d[i - 1]) / bp;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// `u_t = ½(u'' + (a/x) u')` on `[left, left + L]`, `u'(left) = σ u(left)`,
/// `u(left + L) = 0`, by Crank-Nicolson with Rannacher start-up (the first two
/// steps are replaced by four implicit Euler half steps).
fn crank_nicolson(
    left: f64,
    radial: bool,
    sigma: f64,
    t: f64,
    grid: Grid1d,
    u0: &dyn Fn(f64) -> f64,
) -> Result<PdeSolution> {
    if !(t >= 0.0) || grid.nx < 4 || grid.nt < 2 || !(grid.length > 0.0) {
        return Err(Error::InvalidArgument(format!("bad grid {grid:?} for t = {t}")));
    }
    let nx = grid.nx;
    let h = grid.length / nx as f64;
    let x: Vec<f64> = (0..=nx).map(|i| left + i as f64 * h).collect();
    // operator rows for unknowns 0..nx (the last is pinned to zero)
    let m = nx;
    let mut lo = vec![0.0; m];
    let mut di = vec![0.0; m];
    let mut up = vec![0.0; m];
    // flux form: V_i du_i/dt = ½ (F_{i+½} - F_{i-½}), F = r u' (r = 1 on the
    // half-line), with the half cell V_0 = r_0 h / 2 and F_{-½} = r_0 σ u_0
    let rr = |xv: f64| if radial { xv } else { 1.0 };
    for i in 0..m {
        let rp = rr(x[i] + 0.5 * h);
        if i == 0 {
            let v0 = rr(x[0]) * h / 2.0;
            up[0] = 0.5 * rp / h / v0;
            di[0] = -0.5 * (rp / h + rr(x[0]) * sigma) / v0;
        } else {
            let rm = rr(x[i] - 0.5 * h);
            let vi = rr(x[i]) * h;
            lo[i] = 0.5 * rm / h / vi;
            up[i] = 0.5 * rp / h / vi;
            di[i] = -0.5 * (rm + rp) / h / vi;
        }
    }
    let mut u: Vec<f64> = (0..m).map(|i| u0(x[i])).collect();
    let k = t / grid.nt as f64;
    let apply = |u: &[f64], out: &mut [f64]| {
        for i in 0..m {
            let mut v = di[i] * u[i];
            if i > 0 {
                v += lo[i] * u[i - 1];
            }
            if i + 1 < m {
                v += up[i] * u[i + 1];
            }
            out[i] = v;
        }
    };
    let mut lu = vec![0.0; m];
    let implicit = |theta_k: f64| {
        let a_: Vec<f64> = lo.iter().map(|v| -theta_k * v).collect();
        let b_: Vec<f64> = di.iter().map(|v| 1.0 - theta_k * v).collect();
        let c_: Vec<f64> = up.iter().map(|v| -theta_k * v).collect();
        (a_, b_, c_)
    };
    let (ea, eb, ec) = implicit(0.5 * k);
    let (ca, cb, cc) = implicit(0.5 * k);
    for step in 0..grid.nt {
        if step < 2 {
            for _ in 0..2 {
                thomas(&ea, &eb, &ec, &mut u);
            }
        } else {
            apply(&u, &mut lu);
            for i in 0..m {
                u[i] += 0.5 * k * lu[i];
            }
            thomas(&ca, &cb, &cc, &mut u);
        }
    }
    u.push(0.0);
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::Convergence("non-finite Crank-Nicolson solution".into()));
    }
    Ok(PdeSolution { x, u, radial })
}

/// Value from three grid levels with the observed convergence order.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergedValue {
    /// Finest-grid value.
    pub value: f64,
    /// Richardson-extrapolated value.
    pub extrapolated: f64,
    pub order: f64,
    /// `|fine - medium|`.
    pub error_estimate: f64,
}

/// Refines `grid` twice (space and time together) and checks the observed
/// order of `functional`. Differences below `1e-11` count as converged.
pub fn grid_doubling(
    grid: Grid1d,
    min_order: f64,
    solve: &dyn Fn(Grid1d) -> Result<PdeSolution>,
    functional: &dyn Fn(&PdeSolution) -> f64,
) -> Result<ConvergedValue> {
    let g1 = grid;
    let g2 = Grid1d { nx: 2 * grid.nx, nt: 2 * grid.nt, ..grid };
    let g4 = Grid1d { nx: 4 * grid.nx, nt: 4 * grid.nt, ..grid };
    let v1 = functional(&solve(g1)?);
    let v2 = functional(&solve(g2)?);
    let v4 = functional(&solve(g4)?);
    let e1 = (v1 - v2).abs();
    let e2 = (v2 - v4).abs();
    let order = if e2 < 1e-11 { f64::INFINITY } else { (e1 / e2).log2() };
    if e2 >= 1e-11 && order < min_order {
        return Err(Error::Convergence(format!(
            "observed order {order:.3} < {min_order} (values {v1}, {v2}, {v4})"
        )));
    }
    let extrapolated = if order.is_finite() { v4 + (v4 - v2) / 3.0 } else { v4 };
    Ok(ConvergedValue {
        value: v4,
        extrapolated,
        order,
        error_estimate: e2,
    })
}

/// `u_t = ½u''` on `[0, L]`, `u'(0) = σ u(0)`, absorbing at `L`.
pub fn robin_pde_1d(sigma: f64, t: f64, grid: Grid1d, u0: &dyn Fn(f64) -> f64) -> Result<PdeSolution> {
    crank_nicolson(0.0, false, sigma, t, grid, u0)
}

/// Default half-line grid for time `t` and data supported in `[0, support]`.
pub fn half_line_grid(t: f64, support: f64, nx: usize) -> Grid1d {
    let length = support + 6.0 * t.sqrt() + 2.0;
    Grid1d { length, nx, nt: nx }
}

/// `E_x[exp(-σ λ_t)]` from the backward Robin problem with `u(0, ·) = 1`,
/// checked by grid doubling.
pub fn robin_weight_pde(sigma: f64, t: f64, x: f64, nx: usize) -> Result<ConvergedValue> {
    let grid = half_line_grid(t, x, nx);
    grid_doubling(
        grid,
        1.9,
        &|g| robin_pde_1d(sigma, t, g, &|_| 1.0),
        &|s| s.value_at(x),
    )
}

/// Radial heat equation outside the unit disk,
/// `u_t = ½(u'' + u'/r)` on `[1, R]`, with `u'(1) = -β u(1)` and `u(R) = 0`.
/// With `u(0, ·) = 1` the solution at `r` is `E_r[exp(β λ_t)]`.
pub fn radial_disk_exterior_pde(t: f64, beta: f64, grid: Grid1d, u0: &dyn Fn(f64) -> f64) -> Result<PdeSolution> {
    if grid.length < 6.0 * t.sqrt() {
        return Err(Error::InvalidArgument(format!(
            "radial grid length {} is below 6 sqrt(t)",
            grid.length
        )));
    }
    crank_nicolson(1.0, true, -beta, t, grid, u0)
}

/// `E_r[exp(β λ_t)]` outside the unit disk, checked by grid doubling.
pub fn disk_exterior_moment_pde(t: f64, beta: f64, r: f64, nx: usize) -> Result<ConvergedValue> {
    let grid = Grid1d {
        length: (r - 1.0) + 6.0 * t.sqrt() + 2.0,
        nx,
        nt: nx,
    };
    grid_doubling(
        grid,
        1.9,
        &|g| radial_disk_exterior_pde(t, beta, g, &|_| 1.0),
        &|s| s.value_at(r),
    )
}

// ---------------------------------------------------------------- hemisphere

/// Legendre polynomials `P_0..=P_L` at `z`.
fn legendre_all(lmax: usize, z: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = z;
    }
    for l in 2..=lmax {
        p[l] = ((2 * l - 1) as f64 * z * p[l - 1] - (l - 1) as f64 * p[l - 2]) / l as f64;
    }
    p
}

/// Truncation degree with `Σ_{l>L} (2l+1)/(4π) e^{-l(l+1)t/2} < tol`.
fn sphere_truncation(t: f64, tol: f64) -> usize {
    let mut l = 1usize;
    loop {
        // tail bounded by an integral of the decreasing summand
        let tail = (-((l * (l + 1)) as f64) * t / 2.0).exp() / (2.0 * PI * t);
        if tail < tol {
            return l;
        }
        l += 1;
    }
}

/// Heat kernel of `½Δ` on the unit sphere as a function of `cos γ`.
pub fn sphere_kernel(t: f64, cos_gamma: f64, lmax: usize) -> f64 {
    let p = legendre_all(lmax, cos_gamma.clamp(-1.0, 1.0));
    (0..=lmax)
        .map(|l| (2 * l + 1) as f64 / (4.0 * PI) * p[l] * (-((l * (l + 1)) as f64) * t / 2.0).exp())
        .sum()
}

/// Neumann heat kernel of the closed upper hemisphere: the sphere kernel at
/// `y` plus its image reflected through the equator.
pub fn hemisphere_kernel(t: f64, x: &Point, y: &Point) -> Result<f64> {
    if t < 0.01 {
        return Err(Error::InvalidArgument(format!(
            "hemisphere series needs t >= 0.01, got {t}"
        )));
    }
    let geom = ModelGeometry::Hemisphere;
    geom.check_domain(x)?;
    geom.check_domain(y)?;
    let ex = geom.embed(x);
    let ey = geom.embed(y);
    let lmax = sphere_truncation(t, 0.5e-8);
    let c1 = ex[0] * ey[0] + ex[1] * ey[1] + ex[2] * ey[2];
    let c2 = ex[0] * ey[0] + ex[1] * ey[1] - ex[2] * ey[2];
    Ok(sphere_kernel(t, c1, lmax) + sphere_kernel(t, c2, lmax))
}

// ---------------------------------------------------------------- quadratic form

/// Nodal values of a section on a uniform Cartesian grid of a half-space.
struct NodalField {
    h: Vec<f64>,
    counts: Vec<usize>,
    rank: usize,
    values: Vec<[f64; crate::linalg::MAX_RANK]>,
}

impl NodalField {
    fn sample(section: &SectionField, lo: &[f64], hi: &[f64], counts: &[usize]) -> Self {
        let n = lo.len();
        let h: Vec<f64> = (0..n).map(|i| (hi[i] - lo[i]) / (counts[i] - 1) as f64).collect();
        let total: usize = counts.iter().product();
        let mut values = Vec::with_capacity(total);
        for lin in 0..total {
            let idx = unravel(lin, counts);
            let c: Vec<f64> = (0..n).map(|i| lo[i] + idx[i] as f64 * h[i]).collect();
            values.push(section.eval(&Point::new(crate::geometry::Chart::Cartesian, &c)));
        }
        NodalField {
            h,
            counts: counts.to_vec(),
            rank: section.rank,
            values,
        }
    }

    /// Second-order finite difference along axis `ax` at node `lin`.
    fn derivative(&self, lin: usize, ax: usize) -> [f64; crate::linalg::MAX_RANK] {
        let idx = unravel(lin, &self.counts);
        let stride: usize = self.counts[..ax].iter().product();
        let m = self.counts[ax];
        let h = self.h[ax];
        let mut d = [0.0; crate::linalg::MAX_RANK];
        let v = |o: isize| &self.values[(lin as isize + o * stride as isize) as usize];
        for r in 0..self.rank {
            d[r] = if idx[ax] == 0 {
                (-3.0 * v(0)[r] + 4.0 * v(1)[r] - v(2)[r]) / (2.0 * h)
            } else if idx[ax] == m - 1 {
                (3.0 * v(0)[r] - 4.0 * v(-1)[r] + v(-2)[r]) / (2.0 * h)
            } else {
                (v(1)[r] - v(-1)[r]) / (2.0 * h)
            };
        }
        d
    }

    fn weight(&self, lin: usize) -> f64 {
        let idx = unravel(lin, &self.counts);
        (0..self.counts.len())
            .map(|i| {
                let edge = idx[i] == 0 || idx[i] == self.counts[i] - 1;
                self.h[i] * if edge { 0.5 } else { 1.0 }
            })
            .product()
    }
}

fn unravel(mut lin: usize, counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .map(|&c| {
            let i = lin % c;
            lin /= c;
            i
        })
        .collect()
}

/// Box of the half-space on which quadratic forms are evaluated: the last axis
/// starts on the boundary.
#[derive(Clone, Debug, Serialize)]
pub struct FormGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

/// `Q(φ, η) = ∫⟨∇φ, ∇η⟩ + ∫⟨Wφ, η⟩ + ∫_Σ ⟨Sφ, η⟩` on a flat half-space, by
/// central differences and trapezoidal quadrature.
pub fn quadratic_form_q(
    phi: &SectionField,
    eta: &SectionField,
    bundle: &BundleModel,
    grid: &FormGrid,
) -> Result<f64> {
    let geom = bundle.geom;
    let n = match geom {
        ModelGeometry::HalfSpace { dim } => dim,
        _ => {
            return Err(Error::Unsupported(
                "discrete quadratic form is implemented on flat half-spaces".into(),
            ))
        }
    };
    if grid.lo[n - 1] != 0.0 {
        return Err(Error::InvalidArgument("form grid must start on the boundary".into()));
    }
    for s in [phi, eta] {
        if !check_compliance(bundle, s, 64)?.compliant {
            return Err(Error::NonCompliant(s.name.clone()));
        }
    }
    let fa = NodalField::sample(phi, &grid.lo, &grid.hi, &grid.nodes);
    let fb = NodalField::sample(eta, &grid.lo, &grid.hi, &grid.nodes);
    let rank = bundle.rank;
    let mut q = 0.0;
    let frame = geom.reference_frame(&Point::new(geom.standard_chart(), &grid.lo));
    for lin in 0..fa.values.len() {
        let w = fa.weight(lin);
        let mut local = 0.0;
        for ax in 0..n {
            let da = fa.derivative(lin, ax);
            let db = fb.derivative(lin, ax);
            local += (0..rank).map(|r| da[r] * db[r]).sum::<f64>();
        }
        let idx = unravel(lin, &grid.nodes);
        let c: Vec<f64> = (0..n)
            .map(|i| grid.lo[i] + idx[i] as f64 * fa.h[i])
            .collect();
        let x = Point::new(geom.standard_chart(), &c);
        let wm = bundle.weitzenbock(&x);
        let mut wa = [0.0; crate::linalg::MAX_RANK];
        wm.apply(&fa.values[lin], &mut wa);
        local += (0..rank).map(|r| wa[r] * fb.values[lin][r]).sum::<f64>();
        q += w * local;
        if idx[n - 1] == 0 {
            // boundary node: surface weight excludes the normal spacing
            let ws = w / (0.5 * fa.h[n - 1]);
            let ops = bundle.boundary_ops(&x, &frame);
            let mut sa = [0.0; crate::linalg::MAX_RANK];
            ops.robin.apply(&fa.values[lin], &mut sa);
            q += ws * (0..rank).map(|r| sa[r] * fb.values[lin][r]).sum::<f64>();
        }
    }
    Ok(q)
}

/// `∫ |dα|² + |d*α|²` for a 1-form on the half-plane, same discretization.
pub fn hodge_energy_2d(alpha: &SectionField, grid: &FormGrid) -> Result<f64> {
    if alpha.rank != 2 || grid.lo.len() != 2 {
        return Err(Error::Unsupported("hodge energy is implemented for 1-forms in 2-D".into()));
    }
    let f = NodalField::sample(alpha, &grid.lo, &grid.hi, &grid.nodes);
    let mut e = 0.0;
    for lin in 0..f.values.len() {
        let d1 = f.derivative(lin, 0);
        let d2 = f.derivative(lin, 1);
        let curl = d1[1] - d2[0];
        let div = d1[0] + d2[1];
        e += f.weight(lin) * (curl * curl + div * div);
    }
    Ok(e)
}

/// `∫ |φ|²` with the same nodal quadrature.
pub fn l2_norm_sq(phi: &SectionField, grid: &FormGrid) -> f64 {
    let f = NodalField::sample(phi, &grid.lo, &grid.hi, &grid.nodes);
    (0..f.values.len())
        .map(|lin| f.weight(lin) * (0..f.rank).map(|r| f.values[lin][r].powi(2)).sum::<f64>())
        .sum()
}
