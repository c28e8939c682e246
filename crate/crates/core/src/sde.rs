//! Reflected Brownian motion with its frame lift, boundary local time, and the
//! mixed-boundary multiplicative functional.
//!
//! Local time is the semimartingale (Skorokhod) local time of the normal
//! coordinate `r`: `r_t = r_0 + b_t + λ_t` with `b` a standard Brownian motion,
//! so that `E[λ_t] = sqrt(2t/π)` on the half-line started at the boundary.
//! Robin couplings `exp(-∫ S† dλ)` use this normalization.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bundles::BundleModel;
use crate::error::{Error, Result};
use crate::geometry::{
    frame_defect, orthonormalize, Chart, Frame, ModelGeometry, Point, Vector, MAX_DIM,
};
use crate::linalg::{sym_exp, FiberMatrix, MAX_RANK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalTimeScheme {
    /// Reflect the overshoot; `Δλ = 2 * overshoot` keeps `r' = r + Δb + Δλ`.
    Overshoot,
    /// Exact joint law of the reflected endpoint and its local time over a
    /// step with frozen coefficients, via the Brownian-bridge minimum.
    OnestepExact,
}

impl LocalTimeScheme {
    pub fn name(self) -> &'static str {
        match self {
            LocalTimeScheme::Overshoot => "overshoot",
            LocalTimeScheme::OnestepExact => "onestep-exact",
        }
    }
}

impl FromStr for LocalTimeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overshoot" => Ok(LocalTimeScheme::Overshoot),
            "onestep-exact" | "onestep_exact" | "exact" => Ok(LocalTimeScheme::OnestepExact),
            other => Err(Error::StepConfig(format!("unknown local-time scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub scheme: LocalTimeScheme,
    pub seed: u64,
    pub max_steps: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 1e-3,
            scheme: LocalTimeScheme::OnestepExact,
            seed: 0,
            max_steps: 10_000_000,
        }
    }
}

impl StepConfig {
    pub fn new(dt: f64, scheme: LocalTimeScheme, seed: u64) -> Self {
        StepConfig {
            dt,
            scheme,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, geom: &ModelGeometry) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::StepConfig(format!("dt must be positive, got {}", self.dt)));
        }
        let r0 = geom.collar_radius();
        if !matches!(geom, ModelGeometry::HalfSpace { .. }) && self.dt >= r0 * r0 / 4.0 {
            return Err(Error::StepConfig(format!(
                "dt = {} does not resolve the collar of {} (need dt < r0^2/4 = {})",
                self.dt,
                geom.id(),
                r0 * r0 / 4.0
            )));
        }
        Ok(())
    }
}

/// Reflects a free normal-coordinate move `r -> y` over a step of length `dt`.
/// `u` is uniform on `(0, 1]` and only used by the exact scheme.
#[inline]
pub fn reflect(r: f64, y: f64, dt: f64, scheme: LocalTimeScheme, u: f64) -> (f64, f64) {
    match scheme {
        LocalTimeScheme::Overshoot => {
            if y < 0.0 {
                (-y, -2.0 * y)
            } else {
                (y, 0.0)
            }
        }
        LocalTimeScheme::OnestepExact => {
            let d = y - r;
            let m = 0.5 * (r + y - (d * d - 2.0 * dt * u.ln()).sqrt());
            if m < 0.0 {
                (y - m, -m)
            } else {
                (y, 0.0)
            }
        }
    }
}

/// One step of the reflected normal coordinate: returns `(r', Δλ)`.
pub fn local_time_increment<R: Rng>(
    r: f64,
    db: f64,
    dt: f64,
    scheme: LocalTimeScheme,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if r < 0.0 {
        return Err(Error::NegativeNormal(r));
    }
    let u = 1.0 - rng.random::<f64>();
    Ok(reflect(r, r + db, dt, scheme, u))
}

#[derive(Clone, Copy, Debug)]
pub struct PathState {
    pub pos: Point,
    pub frame: Frame,
    pub t: f64,
    pub lambda: f64,
    pub m: FiberMatrix,
    /// `M^{-1}`, tracked until the first Dirichlet projection makes `M` singular.
    pub m_inv: Option<FiberMatrix>,
    pub alive: bool,
    pub steps: usize,
    pub contacts: usize,
}

impl PathState {
    pub fn m_norm(&self) -> f64 {
        self.m.spectral_norm()
    }
}

/// The interior factor `exp(-W† h / 2)` for a fixed step.
#[derive(Clone, Copy, Debug)]
enum Interior {
    Identity,
    Scalar(f64, f64),
    Matrix(FiberMatrix, FiberMatrix),
    Varying,
}

/// Boundary factor data when it does not depend on the point or frame.
#[derive(Clone, Copy, Debug)]
struct ConstantContact {
    pi_plus: FiberMatrix,
    pi_minus_zero: bool,
    robin_zero: bool,
    q: FiberMatrix,
    mu: [f64; MAX_RANK],
}

#[derive(Clone, Debug)]
pub struct StepPlan {
    pub steps: usize,
    pub h: f64,
    pub t: f64,
    /// Step indices at which checkpoint observers fire (sorted).
    pub checkpoints: Vec<usize>,
    interior: Interior,
}

impl StepPlan {
    pub fn checkpoint_times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|&k| k as f64 * self.h).collect()
    }
}

/// Shared, read-only path simulator for one geometry, bundle and step config.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub geom: ModelGeometry,
    pub bundle: BundleModel,
    pub cfg: StepConfig,
    contact: Option<ConstantContact>,
    transport: bool,
    track_inverse: bool,
}

impl Simulator {
    pub fn new(geom: &ModelGeometry, bundle: &BundleModel, cfg: &StepConfig) -> Result<Self> {
        cfg.validate(geom)?;
        if bundle.geom != *geom {
            return Err(Error::InvalidArgument(format!(
                "bundle lives on {}, not {}",
                bundle.geom.id(),
                geom.id()
            )));
        }
        let contact = if bundle.constant_boundary() {
            let y = boundary_anchor(geom);
            let ops = bundle.boundary_ops(&y, &geom.reference_frame(&y));
            let robin = ops.robin.to_dmatrix();
            let eig = robin.clone().symmetric_eigen();
            let mut mu = [0.0; MAX_RANK];
            for (i, m) in mu.iter_mut().enumerate().take(bundle.rank) {
                *m = eig.eigenvalues[i];
            }
            Some(ConstantContact {
                pi_plus: ops.pi_plus,
                pi_minus_zero: ops.pi_minus.max_abs_diff(&FiberMatrix::zeros(bundle.rank)) == 0.0,
                robin_zero: robin.iter().all(|&v| v == 0.0),
                q: FiberMatrix::from_dmatrix(&eig.eigenvectors),
                mu,
            })
        } else {
            None
        };
        Ok(Simulator {
            geom: *geom,
            bundle: bundle.clone(),
            cfg: *cfg,
            contact,
            transport: !matches!(geom, ModelGeometry::HalfSpace { .. }),
            track_inverse: false,
        })
    }

    /// Also integrate `M^{-1}` (used for consistency checks).
    pub fn with_inverse(mut self) -> Self {
        self.track_inverse = true;
        self
    }

    /// Steps of size `t / round(t / dt)` so the terminal time is hit exactly.
    /// Checkpoint times are rounded to the nearest step.
    pub fn plan(&self, t: f64, checkpoints: &[f64]) -> Result<StepPlan> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("terminal time {t}")));
        }
        let steps = if t == 0.0 {
            0
        } else {
            ((t / self.cfg.dt).round() as usize).max(1)
        };
        if steps > self.cfg.max_steps {
            return Err(Error::MaxSteps(self.cfg.max_steps));
        }
        let h = if steps == 0 { 0.0 } else { t / steps as f64 };
        let mut cps: Vec<usize> = checkpoints
            .iter()
            .map(|&c| {
                if h == 0.0 {
                    0
                } else {
                    ((c / h).round() as usize).min(steps)
                }
            })
            .collect();
        cps.sort_unstable();
        let interior = match self.bundle.constant_weitzenbock() {
            None => Interior::Varying,
            Some(w) => {
                let n = w.n;
                let zero = w.max_abs_diff(&FiberMatrix::zeros(n)) == 0.0;
                let c = w.a[0][0];
                let mut ci = FiberMatrix::identity(n);
                ci.scale(c);
                if zero {
                    Interior::Identity
                } else if w.max_abs_diff(&ci) == 0.0 {
                    Interior::Scalar((-0.5 * c * h).exp(), (0.5 * c * h).exp())
                } else {
                    let wd = w.to_dmatrix();
                    Interior::Matrix(
                        FiberMatrix::from_dmatrix(&sym_exp(&wd, -0.5 * h)),
                        FiberMatrix::from_dmatrix(&sym_exp(&wd, 0.5 * h)),
                    )
                }
            }
        };
        Ok(StepPlan {
            steps,
            h,
            t: steps as f64 * h,
            checkpoints: cps,
            interior,
        })
    }

    pub fn initial_state(&self, x0: &Point) -> Result<PathState> {
        self.geom.check_domain(x0)?;
        let mut pos = *x0;
        let mut frame = self.geom.reference_frame(&pos);
        self.geom.rechart(&mut pos, &mut frame)?;
        let n = self.bundle.rank;
        Ok(PathState {
            pos,
            frame,
            t: 0.0,
            lambda: 0.0,
            m: FiberMatrix::identity(n),
            m_inv: if self.track_inverse {
                Some(FiberMatrix::identity(n))
            } else {
                None
            },
            alive: true,
            steps: 0,
            contacts: 0,
        })
    }

    /// Simulates one path to `plan.t`, calling `observe(k, state)` at each
    /// checkpoint (in order; repeated indices fire repeatedly).
    pub fn run<F>(
        &self,
        x0: &Point,
        plan: &StepPlan,
        rng: &mut ChaCha8Rng,
        mut observe: F,
    ) -> Result<PathState>
    where
        F: FnMut(usize, &PathState),
    {
        let mut s = self.initial_state(x0)?;
        let mut next = 0;
        while next < plan.checkpoints.len() && plan.checkpoints[next] == 0 {
            observe(next, &s);
            next += 1;
        }
        for k in 1..=plan.steps {
            self.step(&mut s, plan, rng)?;
            while next < plan.checkpoints.len() && plan.checkpoints[next] == k {
                observe(next, &s);
                next += 1;
            }
        }
        Ok(s)
    }

    /// Terminal state at time `t`.
    pub fn simulate_path(&self, x0: &Point, t: f64, rng: &mut ChaCha8Rng) -> Result<PathState> {
        let plan = self.plan(t, &[])?;
        self.run(x0, &plan, rng, |_, _| {})
    }

    /// Advances the state by one step of the plan.
    pub fn step(&self, s: &mut PathState, plan: &StepPlan, rng: &mut ChaCha8Rng) -> Result<()> {
        let h = plan.h;
        let sqh = h.sqrt();
        let n = self.geom.dim();
        let scheme = self.cfg.scheme;
        let start = s.pos;
        let mut db = [0.0; MAX_DIM];
        for v in db.iter_mut().take(n) {
            let z: f64 = rng.sample(StandardNormal);
            *v = sqh * z;
        }
        let mut dlam = 0.0;
        if !self.transport {
            // flat Cartesian half-space: the frame never moves
            for (i, d) in db.iter().enumerate().take(n - 1) {
                s.pos.coords[i] += d;
            }
            let r = s.pos.coords[n - 1];
            let u = self.uniform(rng);
            let (r1, dl) = reflect(r, r + db[n - 1], h, scheme, u);
            s.pos.coords[n - 1] = r1;
            dlam = dl;
        } else {
            let chart = s.pos.chart;
            let x = s.pos.coords;
            let drift = self.geom.ito_drift(chart, &x);
            let mut dx = [0.0; MAX_DIM];
            for (k, d) in dx.iter_mut().enumerate().take(n) {
                *d = drift[k] * h + (0..n).map(|a| s.frame[a][k] * db[a]).sum::<f64>();
            }
            let mut x1 = x;
            for k in 0..n {
                x1[k] += dx[k];
            }
            if let Some(nc) = self.geom.normal_coordinate(chart) {
                let r = nc.distance(&x);
                let u = self.uniform(rng);
                let (r1, dl) = reflect(r, nc.distance(&x1), h, scheme, u);
                nc.set_distance(&mut x1, r1);
                dlam = dl;
            }
            for k in 0..n {
                dx[k] = x1[k] - x[k];
            }
            transport_frame(&self.geom, chart, &x, &dx, &mut s.frame);
            s.pos.coords = x1;
            let g = self.geom.metric_raw(chart, &x1);
            orthonormalize(&mut s.frame, &g, n);
        }

        // multiplicative functional, left-point coefficients
        match plan.interior {
            Interior::Identity => {}
            Interior::Scalar(f, finv) => {
                s.m.scale(f);
                if let Some(mi) = s.m_inv.as_mut() {
                    mi.scale(finv);
                }
            }
            Interior::Matrix(p, pinv) => {
                s.m = s.m.mul(&p);
                if let Some(mi) = s.m_inv.as_mut() {
                    *mi = pinv.mul(mi);
                }
            }
            Interior::Varying => {
                let w = self.bundle.weitzenbock(&self.standard(&start)).to_dmatrix();
                s.m = s.m.mul(&FiberMatrix::from_dmatrix(&sym_exp(&w, -0.5 * h)));
                if let Some(mi) = s.m_inv.as_mut() {
                    *mi = FiberMatrix::from_dmatrix(&sym_exp(&w, 0.5 * h)).mul(mi);
                }
            }
        }
        if dlam > 0.0 {
            self.contact(s, dlam);
        }
        s.lambda += dlam;
        s.t += h;
        s.steps += 1;
        self.geom.rechart(&mut s.pos, &mut s.frame)?;
        if !s.pos.is_finite() || !s.m.is_finite() || !s.lambda.is_finite() {
            s.alive = false;
            return Err(Error::NonFinite {
                t: s.t,
                what: format!(
                    "position {:?}, local time {}, from {:?}",
                    s.pos.coords(),
                    s.lambda,
                    start.coords()
                ),
            });
        }
        Ok(())
    }

    #[inline]
    fn uniform(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.cfg.scheme {
            LocalTimeScheme::OnestepExact => 1.0 - rng.random::<f64>(),
            LocalTimeScheme::Overshoot => 1.0,
        }
    }

    fn standard(&self, p: &Point) -> Point {
        self.geom
            .to_chart(p, self.geom.standard_chart())
            .unwrap_or(*p)
    }

    /// `M ← M exp(-S† Δλ)(I - Π₋†)` at the foot point of the current position.
    fn contact(&self, s: &mut PathState, dlam: f64) {
        s.contacts += 1;
        if let Some(c) = &self.contact {
            if c.robin_zero {
                if !c.pi_minus_zero {
                    s.m = s.m.mul(&c.pi_plus);
                    s.m_inv = None;
                }
                return;
            }
            let n = self.bundle.rank;
            let mut e = FiberMatrix::zeros(n);
            let mut einv = FiberMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let qq = c.q.a[i][k] * c.q.a[j][k];
                        e.a[i][j] += qq * (-c.mu[k] * dlam).exp();
                        einv.a[i][j] += qq * (c.mu[k] * dlam).exp();
                    }
                }
            }
            if c.pi_minus_zero {
                s.m = s.m.mul(&e);
                if let Some(mi) = s.m_inv.as_mut() {
                    *mi = einv.mul(mi);
                }
            } else {
                s.m = s.m.mul(&e.mul(&c.pi_plus));
                s.m_inv = None;
            }
            return;
        }
        let nc = self
            .geom
            .normal_coordinate(s.pos.chart)
            .expect("contacts happen in collar charts");
        let mut y = s.pos;
        nc.set_distance(&mut y.coords, 0.0);
        let f = self.bundle.contact_factor(&y, &s.frame, dlam);
        s.m = s.m.mul(&f);
        s.m_inv = None;
    }
}

fn boundary_anchor(geom: &ModelGeometry) -> Point {
    let chart = geom.standard_chart();
    let nc = geom
        .normal_coordinate(chart)
        .expect("standard chart is a collar chart");
    let mut c = [0.0; MAX_DIM];
    nc.set_distance(&mut c, 0.0);
    Point::new(chart, &c[..geom.dim()])
}

/// Parallel transport of a frame along the chart segment `x -> x + dx`
/// (classical Runge-Kutta in the segment parameter).
fn transport_frame(geom: &ModelGeometry, chart: Chart, x: &Vector, dx: &Vector, frame: &mut Frame) {
    let n = geom.dim();
    let rhs = |s: f64, e: &Frame| -> Frame {
        let mut xs = *x;
        for k in 0..n {
            xs[k] += s * dx[k];
        }
        let gam = geom.christoffel_raw(chart, &xs);
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..n {
            for k in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    if dx[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        acc += gam.data[k][i][j] * dx[i] * e[a][j];
                    }
                }
                out[a][k] = -acc;
            }
        }
        out
    };
    let axpy = |e: &Frame, k: &Frame, c: f64| -> Frame {
        let mut out = *e;
        for a in 0..n {
            for i in 0..n {
                out[a][i] += c * k[a][i];
            }
        }
        out
    };
    let k1 = rhs(0.0, frame);
    let k2 = rhs(0.5, &axpy(frame, &k1, 0.5));
    let k3 = rhs(0.5, &axpy(frame, &k2, 0.5));
    let k4 = rhs(1.0, &axpy(frame, &k3, 1.0));
    for a in 0..n {
        for i in 0..n {
            frame[a][i] += (k1[a][i] + 2.0 * k2[a][i] + 2.0 * k3[a][i] + k4[a][i]) / 6.0;
        }
    }
}

/// Largest deviation of the carried frame from orthonormality.
pub fn frame_error(geom: &ModelGeometry, s: &PathState) -> f64 {
    let g = geom.metric_raw(s.pos.chart, &s.pos.coords);
    frame_defect(&s.frame, &g, geom.dim())
}
