//! Runs one configured experiment and collects table rows and assertions.

use bundleheat::estimators::{
    conservation_pairing, domination_report, kernel_estimate, l1_growth, local_time_moment,
    multiplicative_mean, semigroup_apply, Setup,
};
use bundleheat::oracle::QuadratureGrid;
use bundleheat::sections::check_compliance;
use bundleheat::validation::Check;
use bundleheat::{Error, Estimate, Point};
use serde::Serialize;

use crate::config::{Config, ConfigError, ExperimentKind};

/// One line of the CSV table.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub quantity: String,
    pub t: f64,
    pub x: Vec<f64>,
    /// Second point (kernel bin centre, domination target); empty if unused.
    pub y: Vec<f64>,
    pub value: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
}

impl Row {
    fn new(quantity: &str, t: f64, x: &Point, y: &[f64], value: Vec<f64>, se: Vec<f64>, n: usize) -> Self {
        Row {
            quantity: quantity.into(),
            t,
            x: x.coords().to_vec(),
            y: y.to_vec(),
            value,
            se,
            n,
        }
    }

    fn from_estimate(quantity: &str, t: f64, x: &Point, e: &Estimate) -> Self {
        Row::new(quantity, t, x, &[], e.value.clone(), e.se.clone(), e.n)
    }
}

#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        // input the user can fix is reported as a configuration problem
        match e {
            Error::OutsideChart { .. }
            | Error::UnsupportedDimension(_)
            | Error::DegreeOutOfRange { .. }
            | Error::Unsupported(_)
            | Error::Invariant { .. }
            | Error::StepConfig(_)
            | Error::NonCompliant(_)
            | Error::NotHarmonic(_)
            | Error::InvalidArgument(_) => RunError::Config(ConfigError(e.to_string())),
            other => RunError::Runtime(other),
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

pub fn run(cfg: &Config) -> Result<Outcome> {
    let setup = Setup::new(cfg.bundle.clone(), cfg.ensemble);
    let times = cfg.times()?;
    match cfg.kind {
        ExperimentKind::Semigroup => semigroup(cfg, &setup, &times),
        ExperimentKind::Mean => mean(cfg, &setup, &times),
        ExperimentKind::Kernel => kernel(cfg, &setup, &times),
        ExperimentKind::Conservation => conservation(cfg, &setup, &times),
        ExperimentKind::Domination => domination(cfg, &setup, &times),
        ExperimentKind::LocalTime => localtime(cfg, &setup, &times),
        ExperimentKind::L1 => l1(cfg, &setup, &times),
    }
}

fn semigroup(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let x = cfg.point("x")?;
    let phi = cfg.section("section")?;
    let est = semigroup_apply(setup, &phi, &x, times)?;
    let rows = times
        .iter()
        .zip(&est)
        .map(|(&t, e)| Row::from_estimate("semigroup", t, &x, e))
        .collect();
    Ok(Outcome {
        rows,
        ..Default::default()
    })
}

fn mean(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let x = cfg.point("x")?;
    let est = multiplicative_mean(setup, &x, times)?;
    let rows = times
        .iter()
        .zip(&est)
        .map(|(&t, e)| Row::from_estimate("multiplicative_mean", t, &x, e))
        .collect();
    Ok(Outcome {
        rows,
        ..Default::default()
    })
}

fn kernel(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let x = cfg.point("x")?;
    let tmax = times.iter().cloned().fold(0.0, f64::max);
    let window = cfg.window(&x, tmax)?;
    let hists = kernel_estimate(setup, &x, times, &window)?;
    let mut out = Outcome::default();
    for h in &hists {
        for b in 0..window.len() {
            let c = window.bin_center(&setup.geom, b);
            if let (Some(d), Some(s)) = (&h.density[b], &h.se[b]) {
                out.rows.push(Row::new(
                    "kernel",
                    h.t,
                    &x,
                    c.coords(),
                    d.transpose().iter().cloned().collect(),
                    s.transpose().iter().cloned().collect(),
                    h.counts[b],
                ));
            }
        }
        out.rows.push(Row::from_estimate("kernel_mass", h.t, &x, &h.mass));
        out.checks.push(Check::at_most(
            format!("captured mass at t = {}", h.t),
            h.mass.mean(),
            h.mass.stderr(),
            1.0,
            3.0 * h.mass.stderr(),
        ));
    }
    Ok(out)
}

fn conservation(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let phi = cfg.section("section")?;
    let eta = cfg.harmonic("eta")?;
    let quad = QuadratureGrid::covering(&setup.geom, &phi, cfg.uint_or("cells", 4)?, cfg.uint_or("order", 4)?)?;
    let est = conservation_pairing(setup, &phi, &eta, times, &quad)?;
    let compliance = check_compliance(&setup.bundle, &eta, 64)?;
    let origin = setup.geom.point(&vec![0.0; setup.geom.dim()]).map_err(RunError::from)?;
    let mut out = Outcome::default();
    for (&t, e) in times.iter().zip(&est) {
        out.rows.push(Row::from_estimate("conservation", t, &origin, e));
        if compliance.compliant {
            out.checks.push(Check::within_se(
                format!("(phi, P_t eta - eta) at t = {t}"),
                e.mean(),
                e.stderr(),
                0.0,
                3.0,
            ));
        }
    }
    if !compliance.compliant {
        out.warnings.push(format!(
            "eta = {} violates the boundary conditions (dirichlet residual {:.2e}, robin residual {:.2e}); \
             reported as a negative control",
            eta.name, compliance.dirichlet_residual, compliance.robin_residual
        ));
    }
    Ok(out)
}

fn domination(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let x = cfg.point("x")?;
    let ys = cfg.points("ys")?;
    let half = cfg.float_or("half_width", 0.05)?;
    let rep = domination_report(setup, &x, &ys, times, half)?;
    let mut out = Outcome::default();
    for r in &rep.rows {
        out.rows.push(Row::new(
            "domination_ratio",
            r.t,
            &x,
            &r.y,
            vec![r.norm, r.k0, r.ratio],
            vec![r.norm_se, 0.0, r.ratio_se],
            setup.ensemble.paths,
        ));
        if let Some(b) = r.bound {
            out.checks.push(Check::at_most(
                format!("|K|/K0 at y = {:?}, t = {}", r.y, r.t),
                r.ratio,
                r.ratio_se,
                b,
                3.0 * r.ratio_se,
            ));
        }
    }
    out.rows.push(Row::new(
        "domination_fit",
        0.0,
        &x,
        &[],
        vec![rep.fit_c1, rep.fit_c2],
        vec![0.0, 0.0],
        setup.ensemble.paths,
    ));
    if !rep.oracle_k0 {
        out.warnings
            .push("no closed-form scalar kernel for this geometry; K0 is the empirical path density".into());
    }
    Ok(out)
}

fn localtime(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let x = cfg.point("x")?;
    let p = cfg.float_or("p", 1.0)?;
    let kappa = cfg.float_or("kappa", 1.0)?;
    let m = local_time_moment(setup, &x, times, p, kappa)?;
    let mut out = Outcome::default();
    for (&t, e) in m.times.iter().zip(&m.moments) {
        out.rows.push(Row::from_estimate("localtime_moment", t, &x, e));
    }
    if let Some(f) = &m.fit {
        out.rows.push(Row::new(
            "localtime_fit",
            0.0,
            &x,
            &[],
            vec![f.k1, f.k2],
            vec![f.k1_ci / 1.96, f.k2_ci / 1.96],
            setup.ensemble.paths,
        ));
    } else {
        out.warnings.push("exponential fit needs at least two times".into());
    }
    for t in &m.heavy_tail {
        out.warnings.push(format!(
            "t = {t}: the top 1% of samples carry over 20% of the mean; the standard error may understate the spread"
        ));
    }
    Ok(out)
}

fn l1(cfg: &Config, setup: &Setup, times: &[f64]) -> Result<Outcome> {
    let phi = cfg.section("section")?;
    let quad = QuadratureGrid::covering(&setup.geom, &phi, cfg.uint_or("cells", 4)?, cfg.uint_or("order", 4)?)?;
    let support = phi
        .support
        .as_ref()
        .ok_or_else(|| ConfigError("section: the L1 experiment needs a compactly supported section".into()))?;
    let tmax = times.iter().cloned().fold(0.0, f64::max);
    let window = cfg.window(&support.center, tmax)?;
    let res = l1_growth(setup, &phi, times, &quad, &window, cfg.constants()?)?;
    let mut out = Outcome::default();
    for g in &res {
        out.rows.push(Row::new(
            "l1_norm",
            g.t,
            &support.center,
            &[],
            vec![g.l1.mean(), g.initial],
            vec![g.l1.stderr(), 0.0],
            g.l1.n,
        ));
        if let Some(b) = g.bound {
            out.checks.push(Check::at_most(
                format!("L1 norm at t = {}", g.t),
                g.l1.mean(),
                g.l1.stderr(),
                b,
                3.0 * g.l1.stderr(),
            ));
        }
        if g.leak > 1e-3 {
            out.warnings.push(format!(
                "t = {}: {:.2}% of the mass reached the window edge; widen the window",
                g.t,
                100.0 * g.leak
            ));
        }
    }
    Ok(out)
}
