//! Monte Carlo estimators built on path ensembles: semigroup action, kernel
//! histograms, conservation pairings, local-time moments, domination ratios,
//! L¹ growth and the integrated heat identity.
//!
//! Every estimator runs paths through [`run_batches`], so results carry
//! batch-means standard errors and are reproducible for a fixed seed
//! independently of the thread count.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bundles::BundleModel;
use crate::ensemble::{batch_means, fingerprint, run_batches, EnsembleConfig, Estimate, VectorSums};
use crate::error::{Error, Result};
use crate::geometry::{ModelGeometry, Point};
use crate::linalg::{FiberMatrix, MAX_RANK};
use crate::oracle::{halfspace_neumann_kernel, hemisphere_kernel, QuadratureGrid};
use crate::sde::{PathState, Simulator};
use crate::sections::{check_compliance, Harmonic, SectionField};

/// Boundary samples used when checking that a test section is compliant.
const COMPLIANCE_SAMPLES: usize = 64;

/// Geometry, bundle and ensemble settings shared by all estimators.
#[derive(Clone, Debug)]
pub struct Setup {
    pub geom: ModelGeometry,
    pub bundle: BundleModel,
    pub ensemble: EnsembleConfig,
}

impl Setup {
    pub fn new(bundle: BundleModel, ensemble: EnsembleConfig) -> Self {
        Setup {
            geom: bundle.geom,
            bundle,
            ensemble,
        }
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(&self.geom, &self.bundle, &self.ensemble.step)
    }

    fn fingerprint<A: Serialize>(&self, op: &str, args: &A) -> String {
        // results do not depend on the worker count
        let ensemble = EnsembleConfig {
            threads: 0,
            ..self.ensemble
        };
        fingerprint(&(op, self.geom.id(), self.bundle.id(), &ensemble, args))
    }
}

/// `M_t C_t`: the multiplicative functional times the map from reference
/// fiber coordinates at the endpoint to the carried frame.
pub fn endpoint_transfer(sim: &Simulator, s: &PathState) -> FiberMatrix {
    let reference = sim.geom.reference_frame(&s.pos);
    let c = sim.bundle.pullback(&s.pos, &s.frame, &reference);
    s.m.mul(&c)
}

fn standard_point(geom: &ModelGeometry, p: &Point) -> Point {
    geom.to_chart(p, geom.standard_chart())
        .expect("every point has standard coordinates")
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("times must be positive, got {times:?}")));
    }
    Ok(())
}

fn max_time(times: &[f64]) -> f64 {
    times.iter().cloned().fold(0.0, f64::max)
}

fn require_compliant(bundle: &BundleModel, phi: &SectionField) -> Result<()> {
    if phi.support.is_none() {
        return Err(Error::InvalidArgument(format!(
            "section {} is not compactly supported",
            phi.name
        )));
    }
    let c = check_compliance(bundle, phi, COMPLIANCE_SAMPLES)?;
    if !c.compliant {
        return Err(Error::NonCompliant(format!(
            "{} (Dirichlet residual {:.2e}, Robin residual {:.2e})",
            phi.name, c.dirichlet_residual, c.robin_residual
        )));
    }
    Ok(())
}

/// Standard error of the linear functional `Σ_i c_i sum_i / count` of
/// per-batch sums, by batch means.
pub fn linear_functional_se(batches: &[VectorSums], coeffs: &[(usize, f64)]) -> f64 {
    let scalar: Vec<VectorSums> = batches
        .iter()
        .map(|b| VectorSums {
            sum: vec![coeffs.iter().map(|&(i, c)| c * b.sum[i]).sum()],
            count: b.count,
        })
        .collect();
    batch_means(&scalar).1[0]
}

// ---------------------------------------------------------------- semigroup

/// `(e^{-tΔ/2} φ)(x)` at each of `times`, in reference-frame coordinates at `x`.
pub fn semigroup_apply(setup: &Setup, phi: &SectionField, x: &Point, times: &[f64]) -> Result<Vec<Estimate>> {
    check_times(times)?;
    setup.geom.check_domain(x)?;
    require_compliant(&setup.bundle, phi)?;
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let n = setup.bundle.rank;
    let k = times.len();
    let batches = run_batches(&setup.ensemble, || VectorSums::new(k * n), |_, rng, acc| {
        sim.run(x, &plan, rng, |c, s| {
            let v = phi.value(&setup.geom, &s.pos);
            if v[..n].iter().all(|&a| a == 0.0) {
                return;
            }
            let mut out = [0.0; MAX_RANK];
            endpoint_transfer(&sim, s).apply(&v, &mut out);
            for i in 0..n {
                acc.sum[c * n + i] += out[i];
            }
        })?;
        acc.count += 1;
        Ok(())
    })?;
    let fp = setup.fingerprint("semigroup_apply", &(&phi.name, x.coords(), times));
    Ok(split_times(&batches, k, n, &fp))
}

/// Splits per-batch sums laid out as `times × len` into one vector estimate per time.
fn split_times(batches: &[VectorSums], k: usize, len: usize, fp: &str) -> Vec<Estimate> {
    (0..k)
        .map(|c| {
            let part: Vec<VectorSums> = batches
                .iter()
                .map(|b| VectorSums {
                    sum: b.sum[c * len..(c + 1) * len].to_vec(),
                    count: b.count,
                })
                .collect();
            Estimate::from_batches((len, 1), &part, fp.to_string())
        })
        .collect()
}

/// `E_x[M_t C_t]` at each of `times`, row-major. For the scalar Robin
/// bundle this is `E_x[exp(-σ λ_t)]`.
pub fn multiplicative_mean(setup: &Setup, x: &Point, times: &[f64]) -> Result<Vec<Estimate>> {
    check_times(times)?;
    setup.geom.check_domain(x)?;
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let n = setup.bundle.rank;
    let nn = n * n;
    let k = times.len();
    let batches = run_batches(&setup.ensemble, || VectorSums::new(k * nn), |_, rng, acc| {
        sim.run(x, &plan, rng, |c, s| {
            let mc = endpoint_transfer(&sim, s);
            for i in 0..n {
                for j in 0..n {
                    acc.sum[c * nn + i * n + j] += mc.a[i][j];
                }
            }
        })?;
        acc.count += 1;
        Ok(())
    })?;
    let fp = setup.fingerprint("multiplicative_mean", &(x.coords(), times));
    Ok(split_times(&batches, k, nn, &fp)
        .into_iter()
        .map(|mut e| {
            e.shape = (n, n);
            e
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct NormBound {
    pub paths: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest `‖M_t‖ / exp(-½c1 t - c2 λ_t)` seen.
    pub worst_ratio: f64,
}

/// Checks `‖M_t‖ ≤ exp(-½ c1 t - c2 λ_t)(1 + tol)` path by path at each of
/// `times`, with `c1`, `c2` the bundle's lower bounds.
pub fn multiplicative_bound_check(setup: &Setup, x: &Point, times: &[f64], tol: f64) -> Result<NormBound> {
    check_times(times)?;
    let (c1, c2) = (setup.bundle.c1, setup.bundle.c2);
    if !c1.is_finite() || !c2.is_finite() {
        return Err(Error::InvalidArgument("bundle has no finite lower bounds".into()));
    }
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let batches = run_batches(
        &setup.ensemble,
        || (0usize, 0usize, 0.0f64),
        |_, rng, acc| {
            sim.run(x, &plan, rng, |_, s| {
                let bound = (-0.5 * c1 * s.t - c2 * s.lambda).exp();
                let ratio = s.m_norm() / bound;
                acc.0 += 1;
                if ratio > 1.0 + tol {
                    acc.1 += 1;
                }
                acc.2 = acc.2.max(ratio);
            })?;
            Ok(())
        },
    )?;
    Ok(NormBound {
        paths: setup.ensemble.paths,
        checks: batches.iter().map(|b| b.0).sum(),
        violations: batches.iter().map(|b| b.1).sum(),
        worst_ratio: batches.iter().map(|b| b.2).fold(0.0, f64::max),
    })
}

// ---------------------------------------------------------------- kernel

/// Rectangular window of the standard chart split into `bins[i]` cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl Window {
    pub fn new(lo: &[f64], hi: &[f64], bins: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != bins.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("window axes disagree".into()));
        }
        if (0..lo.len()).any(|i| !(hi[i] > lo[i]) || bins[i] == 0) {
            return Err(Error::InvalidArgument(format!("degenerate window {lo:?}..{hi:?}")));
        }
        Ok(Window {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            bins: bins.to_vec(),
        })
    }

    /// A window holding all but a negligible fraction of the mass started at
    /// `x` by time `t`.
    pub fn exhaustive(geom: &ModelGeometry, x: &Point, t: f64, bins: &[usize]) -> Result<Self> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let x = standard_point(geom, x);
        let reach = 8.0 * t.sqrt() + 0.5;
        match geom {
            ModelGeometry::HalfSpace { dim } => {
                let n = *dim;
                let mut lo: Vec<f64> = (0..n).map(|i| x.coords[i] - reach).collect();
                let hi: Vec<f64> = (0..n).map(|i| x.coords[i] + reach).collect();
                lo[n - 1] = 0.0;
                Window::new(&lo, &hi, bins)
            }
            ModelGeometry::DiskExterior => Window::new(&[1.0, -PI], &[x.coords[0] + reach, PI], bins),
            ModelGeometry::Hemisphere => Window::new(&[0.0, -PI], &[FRAC_PI_2, PI], bins),
        }
    }

    pub fn len(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_of(&self, p: &Point) -> Option<usize> {
        let mut index = 0;
        let mut stride = 1;
        for i in 0..self.bins.len() {
            let c = p.coords[i];
            if c < self.lo[i] || c > self.hi[i] {
                return None;
            }
            let w = (self.hi[i] - self.lo[i]) / self.bins[i] as f64;
            let b = (((c - self.lo[i]) / w) as usize).min(self.bins[i] - 1);
            index += b * stride;
            stride *= self.bins[i];
        }
        Some(index)
    }

    /// Coordinate bounds of bin `b`.
    pub fn bin_box(&self, b: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rest = b;
        let mut lo = Vec::with_capacity(self.bins.len());
        let mut hi = Vec::with_capacity(self.bins.len());
        for i in 0..self.bins.len() {
            let j = rest % self.bins[i];
            rest /= self.bins[i];
            let w = (self.hi[i] - self.lo[i]) / self.bins[i] as f64;
            lo.push(self.lo[i] + j as f64 * w);
            hi.push(self.lo[i] + (j + 1) as f64 * w);
        }
        (lo, hi)
    }

    pub fn bin_center(&self, geom: &ModelGeometry, b: usize) -> Point {
        let (lo, hi) = self.bin_box(b);
        let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        Point::new(geom.standard_chart(), &c)
    }

    /// Whether bin `b` touches the outer edge of the window (excluding the
    /// physical boundary and periodic azimuth).
    fn on_outer_edge(&self, geom: &ModelGeometry, b: usize) -> bool {
        if matches!(geom, ModelGeometry::Hemisphere) {
            return false;
        }
        let mut rest = b;
        for i in 0..self.bins.len() {
            let j = rest % self.bins[i];
            rest /= self.bins[i];
            let periodic = !matches!(geom, ModelGeometry::HalfSpace { .. }) && i == 1;
            let boundary_axis = match geom {
                ModelGeometry::HalfSpace { dim } => i == dim - 1,
                _ => i == 0,
            };
            if periodic {
                continue;
            }
            if j + 1 == self.bins[i] || (j == 0 && !boundary_axis) {
                return true;
            }
        }
        false
    }

    /// Riemannian volume of each bin.
    pub fn volumes(&self, geom: &ModelGeometry) -> Vec<f64> {
        let ones = vec![1; self.bins.len()];
        (0..self.len())
            .map(|b| {
                let (lo, hi) = self.bin_box(b);
                QuadratureGrid::boxed(geom, &lo, &hi, &ones, 6).weights.iter().sum()
            })
            .collect()
    }
}

/// Endpoint histogram of `M_t C_t`, an estimate of the bin-averaged kernel
/// `K_{W,S}(t; x, ·)`.
#[derive(Clone, Debug)]
pub struct KernelHistogram {
    pub t: f64,
    pub x: Point,
    pub rank: usize,
    pub window: Window,
    pub volumes: Vec<f64>,
    pub counts: Vec<usize>,
    /// Bin-averaged kernel matrix; `None` for bins no path reached.
    pub density: Vec<Option<DMatrix<f64>>>,
    pub se: Vec<Option<DMatrix<f64>>>,
    /// `E[tr(M_t C_t)/N · 1_window(X_t)]`: total scalar mass in the window.
    pub mass: Estimate,
    /// Per-batch sums: `bins × N²` matrix entries, then `bins` counts, then the mass.
    batches: Vec<VectorSums>,
}

impl KernelHistogram {
    fn from_batches(t: f64, x: Point, rank: usize, window: Window, volumes: Vec<f64>, batches: Vec<VectorSums>, fp: &str) -> Self {
        let nb = window.len();
        let nn = rank * rank;
        let (mean, se, total) = batch_means(&batches);
        let mut counts = vec![0usize; nb];
        for b in &batches {
            for (i, c) in counts.iter_mut().enumerate() {
                *c += b.sum[nb * nn + i] as usize;
            }
        }
        let mut density = Vec::with_capacity(nb);
        let mut dse = Vec::with_capacity(nb);
        for b in 0..nb {
            if counts[b] == 0 {
                density.push(None);
                dse.push(None);
                continue;
            }
            let v = volumes[b];
            let base = b * nn;
            density.push(Some(DMatrix::from_fn(rank, rank, |i, j| mean[base + i * rank + j] / v)));
            dse.push(Some(DMatrix::from_fn(rank, rank, |i, j| se[base + i * rank + j] / v)));
        }
        let mass = Estimate::scalar(mean[nb * nn + nb], se[nb * nn + nb], total, fp.to_string());
        KernelHistogram {
            t,
            x,
            rank,
            window,
            volumes,
            counts,
            density,
            se: dse,
            mass,
            batches,
        }
    }

    /// `(‖K‖, SE)` of the bin-averaged kernel in bin `b`. The SE is that of
    /// `uᵀ K v` with `u, v` the top singular pair of the pooled estimate.
    pub fn norm(&self, b: usize) -> Option<(f64, f64)> {
        let k = self.density[b].as_ref()?;
        let svd = k.clone().svd(true, true);
        let (i, &s) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        let u = svd.u.as_ref()?.column(i).into_owned();
        let v = svd.v_t.as_ref()?.row(i).transpose();
        let n = self.rank;
        let base = b * n * n;
        let coeffs: Vec<(usize, f64)> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| (base + r * n + c, u[r] * v[c] / self.volumes[b]))
            .collect();
        Some((s, linear_functional_se(&self.batches, &coeffs)))
    }

    /// Scalar density (count-based, ignoring the weight) and its SE in bin `b`.
    pub fn count_density(&self, b: usize) -> (f64, f64) {
        let idx = self.window.len() * self.rank * self.rank + b;
        let (mean, se, _) = batch_means(&self.batches);
        (mean[idx] / self.volumes[b], se[idx] / self.volumes[b])
    }
}

/// Kernel histograms from `x` at each of `times`.
pub fn kernel_estimate(setup: &Setup, x: &Point, times: &[f64], window: &Window) -> Result<Vec<KernelHistogram>> {
    check_times(times)?;
    setup.geom.check_domain(x)?;
    if window.lo.len() != setup.geom.dim() {
        return Err(Error::InvalidArgument("window dimension differs from the geometry".into()));
    }
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let n = setup.bundle.rank;
    let nn = n * n;
    let nb = window.len();
    let per_time = nb * nn + nb + 1;
    let k = times.len();
    let batches = run_batches(&setup.ensemble, || VectorSums::new(k * per_time), |_, rng, acc| {
        sim.run(x, &plan, rng, |c, s| {
            let y = standard_point(&setup.geom, &s.pos);
            let Some(b) = window.bin_of(&y) else { return };
            let mc = endpoint_transfer(&sim, s);
            let off = c * per_time;
            let mut tr = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc.sum[off + b * nn + i * n + j] += mc.a[i][j];
                }
                tr += mc.a[i][i];
            }
            acc.sum[off + nb * nn + b] += 1.0;
            acc.sum[off + nb * nn + nb] += tr / n as f64;
        })?;
        acc.count += 1;
        Ok(())
    })?;
    let volumes = window.volumes(&setup.geom);
    let fp = setup.fingerprint("kernel_estimate", &(x.coords(), times, window));
    Ok((0..k)
        .map(|c| {
            let part: Vec<VectorSums> = batches
                .iter()
                .map(|b| VectorSums {
                    sum: b.sum[c * per_time..(c + 1) * per_time].to_vec(),
                    count: b.count,
                })
                .collect();
            KernelHistogram::from_batches(times[c], *x, n, window.clone(), volumes.clone(), part, &fp)
        })
        .collect())
}

// ---------------------------------------------------------------- conservation

/// Quadrature nodes where the section is nonzero, with weighted values.
struct Nodes {
    points: Vec<Point>,
    weights: Vec<f64>,
    values: Vec<[f64; MAX_RANK]>,
}

impl Nodes {
    fn active(geom: &ModelGeometry, phi: &SectionField, quad: &QuadratureGrid) -> Result<Self> {
        let mut nodes = Nodes {
            points: Vec::new(),
            weights: Vec::new(),
            values: Vec::new(),
        };
        for (p, &w) in quad.points.iter().zip(&quad.weights) {
            let v = phi.value(geom, p);
            if v[..phi.rank].iter().any(|&a| a != 0.0) {
                geom.check_domain(p)?;
                nodes.points.push(*p);
                nodes.weights.push(w);
                nodes.values.push(v);
            }
        }
        if nodes.points.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "section {} vanishes on every quadrature node",
                phi.name
            )));
        }
        Ok(nodes)
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    /// Stratified assignment of path `i` to a node, and the factor that makes
    /// the path average an unbiased quadrature sum.
    fn assign(&self, i: usize, paths: usize) -> (usize, f64) {
        let q = i % self.len();
        let per_node = paths / self.len() + usize::from(q < paths % self.len());
        (q, paths as f64 / per_node as f64)
    }
}

fn harmonic_matches(bundle: &BundleModel, eta: &SectionField) -> Result<()> {
    let ok = match eta.harmonic {
        None => false,
        Some(Harmonic::ScalarOne) => {
            bundle.rank == 1
                && bundle.robin_vanishes()
                && bundle
                    .constant_weitzenbock()
                    .is_some_and(|w| w.a[0][0] == 0.0)
        }
        Some(Harmonic::Dx(k)) => {
            matches!(bundle.geom, ModelGeometry::HalfSpace { dim } if k < dim)
                && bundle.form_degree() == Some(1)
                && bundle
                    .constant_weitzenbock()
                    .is_some_and(|w| w.max_abs_diff(&FiberMatrix::zeros(w.n)) == 0.0)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::NotHarmonic(format!(
            "{} is not a catalogued harmonic section of {} on {}",
            eta.name,
            bundle.id(),
            bundle.geom.id()
        )))
    }
}

/// `(φ, e^{-tΔ/2} η) − (φ, η)` for each of `times`. Conservation predicts zero
/// when `η` is a bounded harmonic section satisfying the boundary conditions;
/// `η` that only solves the interior equation (such as the normal `dx_n`)
/// serves as a negative control and is accepted.
///
/// Paths start from the quadrature nodes of `quad` on which `φ` is nonzero,
/// assigned round-robin; each contributes `w_q ⟨φ(x_q), M_t C_t η(X_t) − η(x_q)⟩`.
pub fn conservation_pairing(
    setup: &Setup,
    phi: &SectionField,
    eta: &SectionField,
    times: &[f64],
    quad: &QuadratureGrid,
) -> Result<Vec<Estimate>> {
    check_times(times)?;
    require_compliant(&setup.bundle, phi)?;
    harmonic_matches(&setup.bundle, eta)?;
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let nodes = Nodes::active(&setup.geom, phi, quad)?;
    let n = setup.bundle.rank;
    let paths = setup.ensemble.paths;
    let k = times.len();
    let batches = run_batches(&setup.ensemble, || VectorSums::new(k), |i, rng, acc| {
        let (q, factor) = nodes.assign(i, paths);
        let x = nodes.points[q];
        let f = nodes.values[q];
        let e0 = eta.value(&setup.geom, &x);
        let w = nodes.weights[q] * factor;
        sim.run(&x, &plan, rng, |c, s| {
            let e = eta.value(&setup.geom, &s.pos);
            let mut out = [0.0; MAX_RANK];
            endpoint_transfer(&sim, s).apply(&e, &mut out);
            let pair: f64 = (0..n).map(|j| f[j] * (out[j] - e0[j])).sum();
            acc.sum[c] += w * pair;
        })?;
        acc.count += 1;
        Ok(())
    })?;
    let fp = setup.fingerprint("conservation_pairing", &(&phi.name, &eta.name, times, quad.points.len()));
    Ok(split_times(&batches, k, 1, &fp))
}

// ---------------------------------------------------------------- local time

#[derive(Clone, Debug, Serialize)]
pub struct ExponentialFit {
    /// `ln m(t) ≈ ln K1 + K2 t`.
    pub k1: f64,
    pub k2: f64,
    /// 95% half-widths.
    pub k1_ci: f64,
    pub k2_ci: f64,
}

/// Weighted least squares of `ln m` against `t` with weights `(m/se)²`.
pub fn fit_exponential(times: &[f64], values: &[f64], se: &[f64]) -> Result<ExponentialFit> {
    if times.len() < 2 || values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("exponential fit needs two positive values".into()));
    }
    let w: Vec<f64> = values
        .iter()
        .zip(se)
        .map(|(&v, &s)| {
            let rel = (s / v).max(1e-12);
            1.0 / (rel * rel)
        })
        .collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let tm = times.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let stt: f64 = times.iter().zip(&w).map(|(t, w)| w * (t - tm).powi(2)).sum();
    let sty: f64 = times
        .iter()
        .zip(&y)
        .zip(&w)
        .map(|((t, y), w)| w * (t - tm) * (y - ym))
        .sum();
    if stt <= 0.0 {
        return Err(Error::InvalidArgument("exponential fit needs distinct times".into()));
    }
    let k2 = sty / stt;
    let a = ym - k2 * tm;
    // standard errors from the weights (known variances)
    let var_k2 = 1.0 / stt;
    let var_a = 1.0 / sw + tm * tm / stt;
    let k1 = a.exp();
    Ok(ExponentialFit {
        k1,
        k2,
        k1_ci: 1.96 * var_a.sqrt() * k1,
        k2_ci: 1.96 * var_k2.sqrt(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalTimeMoments {
    pub times: Vec<f64>,
    pub p: f64,
    pub kappa: f64,
    pub moments: Vec<Estimate>,
    pub fit: Option<ExponentialFit>,
    /// Times at which the top 1% of samples carry more than 20% of the mean.
    pub heavy_tail: Vec<f64>,
}

/// `E_x[exp(-p κ λ_t)]` at each of `times`, with a log-linear fit.
pub fn local_time_moment(setup: &Setup, x: &Point, times: &[f64], p: f64, kappa: f64) -> Result<LocalTimeMoments> {
    check_times(times)?;
    if !(p >= 1.0) || !(kappa <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need p >= 1 and kappa <= 0, got p = {p}, kappa = {kappa}"
        )));
    }
    setup.geom.check_domain(x)?;
    // the weight needs only the motion; run it with the scalar bundle
    let scalar = Setup::new(BundleModel::scalar(setup.geom), setup.ensemble);
    let sim = scalar.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let k = times.len();
    let a = -p * kappa;
    let batches = run_batches(
        &setup.ensemble,
        || (VectorSums::new(k), vec![Vec::new(); k]),
        |_, rng, (acc, samples)| {
            sim.run(x, &plan, rng, |c, s| {
                let v = (a * s.lambda).exp();
                acc.sum[c] += v;
                samples[c].push(v);
            })?;
            acc.count += 1;
            Ok(())
        },
    )?;
    let fp = setup.fingerprint("local_time_moment", &(x.coords(), times, p, kappa));
    let sums: Vec<VectorSums> = batches.iter().map(|b| b.0.clone()).collect();
    let moments = split_times(&sums, k, 1, &fp);
    let mut heavy_tail = Vec::new();
    for c in 0..k {
        let mut all: Vec<f64> = batches.iter().flat_map(|b| b.1[c].iter().cloned()).collect();
        all.sort_by(|a, b| b.total_cmp(a));
        let top = (all.len() / 100).max(1);
        let total: f64 = all.iter().sum();
        let head: f64 = all[..top].iter().sum();
        if total > 0.0 && head > 0.2 * total {
            heavy_tail.push(times[c]);
        }
    }
    let values: Vec<f64> = moments.iter().map(|m| m.mean()).collect();
    let se: Vec<f64> = moments.iter().map(|m| m.stderr()).collect();
    let fit = if k >= 2 { fit_exponential(times, &values, &se).ok() } else { None };
    Ok(LocalTimeMoments {
        times: times.to_vec(),
        p,
        kappa,
        moments,
        fit,
        heavy_tail,
    })
}

// ---------------------------------------------------------------- domination

#[derive(Clone, Debug, Serialize)]
pub struct DominationRow {
    pub y: Vec<f64>,
    pub t: f64,
    pub norm: f64,
    pub norm_se: f64,
    pub k0: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// `e^{-c1 t/2}` when `c2 >= 0`, else `None`.
    pub bound: Option<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub geometry: String,
    pub bundle: String,
    pub c1: f64,
    pub c2: f64,
    /// Whether `K0` comes from an oracle (or from the scalar endpoint counts).
    pub oracle_k0: bool,
    pub rows: Vec<DominationRow>,
    /// `ratio ≤ C1 e^{C2 t}` fitted on the rows.
    pub fit_c1: f64,
    pub fit_c2: f64,
}

impl DominationReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Neumann heat kernel averaged over a coordinate box of the standard chart.
fn k0_bin_average(geom: &ModelGeometry, t: f64, x: &Point, lo: &[f64], hi: &[f64]) -> Result<Option<f64>> {
    let cells = vec![1; lo.len()];
    let quad = QuadratureGrid::boxed(geom, lo, hi, &cells, 6);
    let vol: f64 = quad.weights.iter().sum();
    let xs = standard_point(geom, x);
    let mut acc = 0.0;
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let k = match geom {
            ModelGeometry::HalfSpace { .. } => halfspace_neumann_kernel(t, xs.coords(), p.coords())?,
            ModelGeometry::Hemisphere => hemisphere_kernel(t, &xs, p)?,
            ModelGeometry::DiskExterior => return Ok(None),
        };
        acc += w * k;
    }
    Ok(Some(acc / vol))
}

/// Operator norm of the kernel estimate against the scalar Neumann kernel on a
/// `(y, t)` grid. Each `y` is the center of a small bin of half-width `half`
/// in every standard coordinate; `K0` is averaged over the same bin.
pub fn domination_report(setup: &Setup, x: &Point, ys: &[Point], times: &[f64], half: f64) -> Result<DominationReport> {
    check_times(times)?;
    if ys.is_empty() {
        return Err(Error::InvalidArgument("empty y grid".into()));
    }
    let geom = setup.geom;
    let dim = geom.dim();
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = ys
        .iter()
        .map(|y| {
            let y = standard_point(&geom, y);
            let mut lo: Vec<f64> = (0..dim).map(|i| y.coords[i] - half).collect();
            let mut hi: Vec<f64> = (0..dim).map(|i| y.coords[i] + half).collect();
            clip_to_domain(&geom, &mut lo, &mut hi);
            (lo, hi)
        })
        .collect();
    let in_box = |p: &Point, b: &(Vec<f64>, Vec<f64>)| (0..dim).all(|i| p.coords[i] >= b.0[i] && p.coords[i] < b.1[i]);
    let n = setup.bundle.rank;
    let nn = n * n;
    let ny = ys.len();
    // per (time, y): N² weights then the count
    let slot = nn + 1;
    let per_time = ny * slot;
    let k = times.len();
    let batches = run_batches(&setup.ensemble, || VectorSums::new(k * per_time), |_, rng, acc| {
        sim.run(x, &plan, rng, |c, s| {
            let y = standard_point(&geom, &s.pos);
            let mut mc = None;
            for (j, b) in boxes.iter().enumerate() {
                if !in_box(&y, b) {
                    continue;
                }
                let m = *mc.get_or_insert_with(|| endpoint_transfer(&sim, s));
                let off = c * per_time + j * slot;
                for r in 0..n {
                    for q in 0..n {
                        acc.sum[off + r * n + q] += m.a[r][q];
                    }
                }
                acc.sum[off + nn] += 1.0;
            }
        })?;
        acc.count += 1;
        Ok(())
    })?;
    let (c1, c2) = (setup.bundle.c1, setup.bundle.c2);
    let mut rows = Vec::with_capacity(k * ny);
    let mut oracle_k0 = true;
    for c in 0..k {
        let t = times[c];
        for (j, b) in boxes.iter().enumerate() {
            let vol: f64 = QuadratureGrid::boxed(&geom, &b.0, &b.1, &vec![1; dim], 6).weights.iter().sum();
            let off = c * per_time + j * slot;
            let part: Vec<VectorSums> = batches
                .iter()
                .map(|bs| VectorSums {
                    sum: bs.sum[off..off + slot].to_vec(),
                    count: bs.count,
                })
                .collect();
            let (mean, _, _) = batch_means(&part);
            let kmat = DMatrix::from_fn(n, n, |r, q| mean[r * n + q] / vol);
            let svd = kmat.clone().svd(true, true);
            let (i, &norm) = svd
                .singular_values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty matrix");
            let u = svd.u.as_ref().expect("u").column(i).into_owned();
            let v = svd.v_t.as_ref().expect("v").row(i).transpose();
            let proj: Vec<(usize, f64)> = (0..n)
                .flat_map(|r| (0..n).map(move |q| (r, q)))
                .map(|(r, q)| (r * n + q, u[r] * v[q] / vol))
                .collect();
            let norm_se = linear_functional_se(&part, &proj);
            let (k0, ratio, ratio_se) = match k0_bin_average(&geom, t, x, &b.0, &b.1)? {
                Some(k0) => (k0, norm / k0, norm_se / k0),
                None => {
                    // no closed-form kernel: the scalar count density from the same paths
                    oracle_k0 = false;
                    let d = mean[nn] / vol;
                    if d <= 0.0 {
                        (0.0, f64::NAN, f64::NAN)
                    } else {
                        let ratio = norm / d;
                        let mut lin = proj.clone();
                        for e in &mut lin {
                            e.1 /= d;
                        }
                        lin.push((nn, -ratio / vol / d));
                        (d, ratio, linear_functional_se(&part, &lin))
                    }
                }
            };
            let bound = (c2 >= 0.0).then(|| (-0.5 * c1 * t).exp());
            let holds = match bound {
                Some(bd) => ratio.is_finite() && ratio <= bd * (1.0 + 3.0 * ratio_se / ratio.max(f64::MIN_POSITIVE)),
                None => true,
            };
            rows.push(DominationRow {
                y: standard_point(&geom, &ys[j]).coords().to_vec(),
                t,
                norm,
                norm_se,
                k0,
                ratio,
                ratio_se,
                bound,
                holds,
            });
        }
    }
    let (fit_c1, fit_c2) = fit_domination(&rows, times);
    Ok(DominationReport {
        geometry: geom.id(),
        bundle: setup.bundle.id(),
        c1,
        c2,
        oracle_k0,
        rows,
        fit_c1,
        fit_c2,
    })
}

fn clip_to_domain(geom: &ModelGeometry, lo: &mut [f64], hi: &mut [f64]) {
    use std::f64::consts::FRAC_PI_2;
    match geom {
        ModelGeometry::HalfSpace { dim } => {
            let n = *dim;
            if lo[n - 1] < 0.0 {
                hi[n - 1] -= lo[n - 1];
                lo[n - 1] = 0.0;
            }
        }
        ModelGeometry::DiskExterior => {
            if lo[0] < 1.0 {
                hi[0] += 1.0 - lo[0];
                lo[0] = 1.0;
            }
        }
        ModelGeometry::Hemisphere => {
            if hi[0] > FRAC_PI_2 {
                lo[0] -= hi[0] - FRAC_PI_2;
                hi[0] = FRAC_PI_2;
            }
            lo[0] = lo[0].max(0.0);
        }
    }
}

/// `C2` from a least-squares line through `ln max_y ratio(y, t)`; `C1` as the
/// smallest constant with `ratio + 3 SE ≤ C1 e^{C2 t}` on every row.
fn fit_domination(rows: &[DominationRow], times: &[f64]) -> (f64, f64) {
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for &t in times {
        let m = rows
            .iter()
            .filter(|r| r.t == t && r.ratio.is_finite())
            .map(|r| r.ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        if m > 0.0 {
            ts.push(t);
            ls.push(m.ln());
        }
    }
    let c2 = if ts.len() >= 2 {
        let tm = ts.iter().sum::<f64>() / ts.len() as f64;
        let lm = ls.iter().sum::<f64>() / ls.len() as f64;
        let num: f64 = ts.iter().zip(&ls).map(|(t, l)| (t - tm) * (l - lm)).sum();
        let den: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    } else {
        0.0
    };
    let c1 = rows
        .iter()
        .filter(|r| r.ratio.is_finite())
        .map(|r| (r.ratio + 3.0 * r.ratio_se) * (-c2 * r.t).exp())
        .fold(0.0, f64::max);
    (c1, c2)
}

// ---------------------------------------------------------------- L¹ growth

#[derive(Clone, Debug, Serialize)]
pub struct L1Growth {
    pub t: f64,
    pub l1: Estimate,
    /// `‖φ‖_{L¹}` by quadrature.
    pub initial: f64,
    /// `C1 e^{C2 t} ‖φ‖₁` when constants were supplied.
    pub bound: Option<f64>,
    pub holds: bool,
    /// Fraction of the transported mass landing in outer-edge bins or outside
    /// the window; above 1e-3 the window is too small.
    pub leak: f64,
}

/// `‖e^{-tΔ/2} φ‖_{L¹}` at each of `times` by adjoint binning: paths start from
/// the quadrature nodes of `φ` and deposit `w_q (M_t C_t)ᵀ φ(x_q)` in the bin of
/// their endpoint, which estimates `∫_B e^{-tΔ/2}φ` by kernel symmetry. The
/// L¹ norm is the sum of bin magnitudes; its SE is by the delta method.
pub fn l1_growth(
    setup: &Setup,
    phi: &SectionField,
    times: &[f64],
    quad: &QuadratureGrid,
    window: &Window,
    constants: Option<(f64, f64)>,
) -> Result<Vec<L1Growth>> {
    check_times(times)?;
    require_compliant(&setup.bundle, phi)?;
    let geom = setup.geom;
    let sim = setup.simulator()?;
    let plan = sim.plan(max_time(times), times)?;
    let nodes = Nodes::active(&geom, phi, quad)?;
    let n = setup.bundle.rank;
    let nb = window.len();
    // per time: nb × n deposits, then the leaked magnitude
    let per_time = nb * n + 1;
    let paths = setup.ensemble.paths;
    let k = times.len();
    let edge: Vec<bool> = (0..nb).map(|b| window.on_outer_edge(&geom, b)).collect();
    let batches = run_batches(&setup.ensemble, || VectorSums::new(k * per_time), |i, rng, acc| {
        let (q, factor) = nodes.assign(i, paths);
        let x = nodes.points[q];
        let f = nodes.values[q];
        let w = nodes.weights[q] * factor;
        sim.run(&x, &plan, rng, |c, s| {
            let mc = endpoint_transfer(&sim, s).transpose();
            let mut d = [0.0; MAX_RANK];
            mc.apply(&f, &mut d);
            let off = c * per_time;
            let y = standard_point(&geom, &s.pos);
            match window.bin_of(&y) {
                Some(b) => {
                    for r in 0..n {
                        acc.sum[off + b * n + r] += w * d[r];
                    }
                }
                None => {
                    let mag: f64 = d[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                    acc.sum[off + nb * n] += w * mag;
                }
            }
        })?;
        acc.count += 1;
        Ok(())
    })?;
    let initial = quad.integrate(|p| {
        let v = phi.value(&geom, p);
        v[..n].iter().map(|a| a * a).sum::<f64>().sqrt()
    });
    let fp = setup.fingerprint("l1_growth", &(&phi.name, times, window, quad.points.len()));
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let off = c * per_time;
        let part: Vec<VectorSums> = batches
            .iter()
            .map(|b| VectorSums {
                sum: b.sum[off..off + per_time].to_vec(),
                count: b.count,
            })
            .collect();
        let (mean, _, total) = batch_means(&part);
        let mut l1 = 0.0;
        let mut edge_mass = mean[nb * n];
        let mut coeffs = Vec::new();
        for b in 0..nb {
            let v = DVector::from_fn(n, |r, _| mean[b * n + r]);
            let mag = v.norm();
            if mag == 0.0 {
                continue;
            }
            l1 += mag;
            if edge[b] {
                edge_mass += mag;
            }
            for r in 0..n {
                coeffs.push((b * n + r, v[r] / mag));
            }
        }
        let se = linear_functional_se(&part, &coeffs);
        let l1_est = Estimate::scalar(l1, se, total, fp.clone());
        let bound = constants.map(|(c1, c2)| c1 * (c2 * times[c]).exp() * initial);
        let holds = bound.is_none_or(|bd| l1 <= bd + 3.0 * se);
        let total_mass = l1 + mean[nb * n];
        out.push(L1Growth {
            t: times[c],
            l1: l1_est,
            initial,
            bound,
            holds,
            leak: if total_mass > 0.0 { edge_mass / total_mass } else { 0.0 },
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- integral identity

#[derive(Clone, Debug, Serialize)]
pub struct IntIdentity {
    pub t: f64,
    /// `(e^{-tΔ/2}φ − φ, ξ)`.
    pub lhs: Estimate,
    /// `−½ ∫_0^t (e^{-τΔ/2}φ, Δξ) dτ`, trapezoid in τ over every step.
    pub rhs: Estimate,
    /// `lhs − rhs` estimated path by path.
    pub residual: Estimate,
    pub tau_nodes: usize,
}

/// Test function on the half-line for the integrated heat identity.
pub trait HalfLineTest: Send + Sync {
    fn value(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Send + Sync> HalfLineTest for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Step of the discrete Laplacian used for `Δξ`.
const XI_STEP: f64 = 1e-3;

/// `Δξ = −ξ''` by the three-point stencil, with the even extension across 0
/// (valid because `ξ'(0) = 0`).
fn discrete_laplacian(xi: &dyn HalfLineTest, x: f64) -> f64 {
    let h = XI_STEP;
    -(xi.value((x + h).abs()) - 2.0 * xi.value(x) + xi.value((x - h).abs())) / (h * h)
}

/// Integrated heat identity on the half-line for a scalar bundle without
/// potential or Robin term: `(e^{-tΔ/2}φ − φ, ξ) = −½∫_0^t (e^{-τΔ/2}φ, Δξ) dτ`.
/// Both sides use self-adjointness to move the semigroup onto `ξ`, and paths
/// start from the quadrature nodes of `φ`.
pub fn intident_check(
    setup: &Setup,
    phi: &SectionField,
    xi: &dyn HalfLineTest,
    t: f64,
    quad: &QuadratureGrid,
) -> Result<IntIdentity> {
    check_times(&[t])?;
    let flat_scalar = matches!(setup.geom, ModelGeometry::HalfSpace { dim: 1 })
        && setup.bundle.rank == 1
        && setup.bundle.robin_vanishes()
        && setup
            .bundle
            .constant_weitzenbock()
            .is_some_and(|w| w.a[0][0] == 0.0);
    if !flat_scalar {
        return Err(Error::Unsupported(
            "the integral identity is checked for the scalar half-line without potential".into(),
        ));
    }
    let h = 1e-5;
    let slope = (-3.0 * xi.value(0.0) + 4.0 * xi.value(h) - xi.value(2.0 * h)) / (2.0 * h);
    let scale = xi.value(0.0).abs().max(1.0);
    if slope.abs() > 1e-6 * scale {
        return Err(Error::InvalidArgument(format!(
            "test function has ξ'(0) = {slope:.3e}; it must satisfy the Neumann condition"
        )));
    }
    let sim = setup.simulator()?;
    let plan = sim.plan(t, &[])?;
    let nodes = Nodes::active(&setup.geom, phi, quad)?;
    let paths = setup.ensemble.paths;
    let dtau = plan.h;
    let batches = run_batches(&setup.ensemble, || VectorSums::new(3), |i, rng, acc| {
        let (q, factor) = nodes.assign(i, paths);
        let x = nodes.points[q];
        let w = nodes.weights[q] * factor * nodes.values[q][0];
        let mut s = sim.initial_state(&x)?;
        let x0 = x.coords[0];
        let mut integral = 0.5 * discrete_laplacian(xi, x0);
        for k in 1..=plan.steps {
            sim.step(&mut s, &plan, rng)?;
            let l = discrete_laplacian(xi, s.pos.coords[0]);
            integral += if k == plan.steps { 0.5 * l } else { l };
        }
        integral *= dtau;
        let lhs = xi.value(s.pos.coords[0]) - xi.value(x0);
        let rhs = -0.5 * integral;
        acc.add(&[w * lhs, w * rhs, w * (lhs - rhs)]);
        Ok(())
    })?;
    let fp = setup.fingerprint("intident_check", &(&phi.name, t, quad.points.len()));
    let parts = split_times(&batches, 3, 1, &fp);
    Ok(IntIdentity {
        t,
        lhs: parts[0].clone(),
        rhs: parts[1].clone(),
        residual: parts[2].clone(),
        tau_nodes: plan.steps + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{images_kernel, Bc};
    use crate::sde::StepConfig;

    fn setup(bundle: BundleModel, paths: usize, seed: u64) -> Setup {
        let mut step = StepConfig::default();
        step.dt = 1e-2;
        step.seed = seed;
        let mut e = EnsembleConfig::new(paths, step);
        e.threads = 1;
        Setup::new(bundle, e)
    }

    #[test]
    fn window_bins_round_trip() {
        let w = Window::new(&[0.0, -1.0], &[2.0, 1.0], &[4, 5]).unwrap();
        let g = ModelGeometry::half_space(2).unwrap();
        for b in 0..w.len() {
            let c = w.bin_center(&g, b);
            assert_eq!(w.bin_of(&c), Some(b));
        }
        assert_eq!(w.bin_of(&Point::new(g.standard_chart(), &[3.0, 0.0])), None);
        let v = w.volumes(&g);
        assert!(v.iter().all(|&a| (a - 0.2).abs() < 1e-12));
    }

    #[test]
    fn scalar_one_is_conserved() {
        let g = ModelGeometry::half_space(1).unwrap();
        let s = setup(BundleModel::scalar(g), 2000, 3);
        let phi = SectionField::bump(g, g.point(&[1.0]).unwrap(), 0.5);
        // a bump wide enough to be one wherever the paths go
        let wide = SectionField::bump(g, g.point(&[1.0]).unwrap(), 1e3);
        let est = semigroup_apply(&s, &wide, &g.point(&[1.0]).unwrap(), &[1.0]).unwrap();
        assert!((est[0].mean() - 1.0).abs() < 1e-4);
        let quad = QuadratureGrid::covering(&g, &phi, 8, 4).unwrap();
        let c = conservation_pairing(&s, &phi, &SectionField::scalar_one(), &[0.5, 1.0], &quad).unwrap();
        for e in c {
            assert!(e.mean().abs() < 1e-12 && e.stderr() < 1e-12);
        }
    }

    #[test]
    fn histogram_matches_images_density() {
        let g = ModelGeometry::half_space(1).unwrap();
        let s = setup(BundleModel::scalar(g), 20_000, 5);
        let x = g.point(&[0.0]).unwrap();
        let w = Window::new(&[0.0], &[6.0], &[30]).unwrap();
        let h = &kernel_estimate(&s, &x, &[1.0], &w).unwrap()[0];
        let d = h.density[0].as_ref().unwrap()[(0, 0)];
        let se = h.se[0].as_ref().unwrap()[(0, 0)];
        // bin-averaged oracle over [0, 0.2]
        let (lo, hi) = w.bin_box(0);
        let exact = crate::oracle::integrate(&|y| images_kernel(1.0, 0.0, y, Bc::Neumann).unwrap(), lo[0], hi[0], 1e-12) / (hi[0] - lo[0]);
        assert!((d - exact).abs() < 4.0 * se, "{d} vs {exact} (se {se})");
        assert!((h.mass.mean() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn empty_bins_are_missing() {
        let g = ModelGeometry::half_space(1).unwrap();
        let s = setup(BundleModel::scalar(g), 64, 5);
        let x = g.point(&[0.0]).unwrap();
        let w = Window::new(&[0.0], &[20.0], &[10]).unwrap();
        let h = &kernel_estimate(&s, &x, &[0.1], &w).unwrap()[0];
        assert!(h.density[9].is_none());
        assert!(h.density[0].is_some());
    }

    #[test]
    fn noncompliant_section_is_refused() {
        let g = ModelGeometry::half_space(2).unwrap();
        let b = BundleModel::forms(g, 1).unwrap();
        let s = setup(b, 64, 1);
        // normal component nonzero on the boundary violates the Dirichlet part
        let phi = SectionField::bump_component(g, g.point(&[0.0, 0.0]).unwrap(), 0.5, 2, 1);
        let x = g.point(&[0.0, 1.0]).unwrap();
        assert!(matches!(semigroup_apply(&s, &phi, &x, &[0.5]), Err(Error::NonCompliant(_))));
    }

    #[test]
    fn non_catalogue_eta_is_refused() {
        let g = ModelGeometry::half_space(1).unwrap();
        let s = setup(BundleModel::scalar(g), 64, 1);
        let phi = SectionField::bump(g, g.point(&[1.0]).unwrap(), 0.5);
        let quad = QuadratureGrid::covering(&g, &phi, 4, 4).unwrap();
        let eta = SectionField::gaussian(&[0.0], 1.0);
        assert!(matches!(
            conservation_pairing(&s, &phi, &eta, &[1.0], &quad),
            Err(Error::NotHarmonic(_))
        ));
    }

    #[test]
    fn exponential_fit_recovers_line() {
        let t = [0.25, 0.5, 1.0];
        let v: Vec<f64> = t.iter().map(|&t: &f64| 1.3 * (0.7 * t).exp()).collect();
        let f = fit_exponential(&t, &v, &[1e-3; 3]).unwrap();
        assert!((f.k1 - 1.3).abs() < 1e-10 && (f.k2 - 0.7).abs() < 1e-10);
        assert!(f.k2_ci > 0.0);
    }

    #[test]
    fn local_time_moment_is_one_on_flat_boundary() {
        let g = ModelGeometry::half_space(2).unwrap();
        let s = setup(BundleModel::scalar(g), 256, 2);
        let x = g.point(&[0.0, 0.0]).unwrap();
        let m = local_time_moment(&s, &x, &[0.25, 0.5], 1.0, 0.0).unwrap();
        for e in &m.moments {
            assert_eq!(e.mean(), 1.0);
        }
        assert!(m.heavy_tail.is_empty());
        assert!(local_time_moment(&s, &x, &[0.5], 0.5, 0.0).is_err());
    }

    #[test]
    fn intident_refuses_non_neumann_test_function() {
        let g = ModelGeometry::half_space(1).unwrap();
        let s = setup(BundleModel::scalar(g), 64, 1);
        let phi = SectionField::bump(g, g.point(&[1.0]).unwrap(), 0.5);
        let quad = QuadratureGrid::covering(&g, &phi, 4, 4).unwrap();
        let xi = |x: f64| (-(x - 1.0) * (x - 1.0)).exp();
        assert!(intident_check(&s, &phi, &xi, 0.5, &quad).is_err());
    }

    #[test]
    fn intident_small_time_is_small() {
        let g = ModelGeometry::half_space(1).unwrap();
        let s = setup(BundleModel::scalar(g), 512, 9);
        let phi = SectionField::bump(g, g.point(&[1.0]).unwrap(), 0.5);
        let quad = QuadratureGrid::covering(&g, &phi, 4, 4).unwrap();
        let xi = |x: f64| 1.0 / (1.0 + x * x);
        let r = intident_check(&s, &phi, &xi, 0.02, &quad).unwrap();
        assert!(r.lhs.mean().abs() < 0.05 && r.rhs.mean().abs() < 0.05);
        assert!(r.residual.mean().abs() <= 4.0 * r.residual.stderr() + 1e-4);
    }
}
