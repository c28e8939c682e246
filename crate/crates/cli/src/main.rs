mod config;
mod experiments;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bundleheat::validation::{oracle_self_tests, run_criterion, Scale, SuiteConfig, CRITERIA};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Config, ExperimentKind, Overrides};
use experiments::RunError;

#[derive(Parser)]
#[command(name = "bundleheat", version = report::VERSION, about = "Monte Carlo heat semigroups on bundles over manifolds with boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named by `[experiment] kind`.
    Run(RunArgs),
    /// Kernel histogram from a fixed start point.
    Kernel(RunArgs),
    /// Pairing of a test section against a harmonic section.
    Conservation(RunArgs),
    /// Kernel norm against the scalar Neumann kernel.
    Domination(RunArgs),
    /// Exponential moments of boundary local time.
    Localtime(RunArgs),
    /// Oracle self-tests and the acceptance criteria.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML file.
    #[arg(value_name = "CONFIG", required_unless_present = "config_flag")]
    config: Option<PathBuf>,
    #[arg(long = "config", value_name = "FILE", conflicts_with = "config")]
    config_flag: Option<PathBuf>,
    /// Output directory for the CSV table and JSON report.
    #[arg(long, default_value = "bundleheat-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Local-time scheme: onestep-exact or overshoot.
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// 10⁴ paths per run instead of 10⁵.
    #[arg(long)]
    quick: bool,
    /// Comma-separated criterion ids; all by default.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<usize>,
    /// Skip the Monte Carlo criteria and run only the oracle self-tests.
    #[arg(long)]
    oracles_only: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write validate.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a, None),
        Command::Kernel(a) => run(a, Some(ExperimentKind::Kernel)),
        Command::Conservation(a) => run(a, Some(ExperimentKind::Conservation)),
        Command::Domination(a) => run(a, Some(ExperimentKind::Domination)),
        Command::Localtime(a) => run(a, Some(ExperimentKind::LocalTime)),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e @ RunError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Runtime(bundleheat::Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn run(a: RunArgs, kind: Option<ExperimentKind>) -> Result<bool, RunError> {
    let path = a.config.or(a.config_flag).expect("clap requires a config path");
    let text = fs::read_to_string(&path)
        .map_err(|e| RunError::Config(config::ConfigError(format!("{}: {e}", path.display()))))?;
    let overrides = Overrides {
        seed: a.seed,
        paths: a.paths,
        dt: a.dt,
        threads: a.threads,
        scheme: a.scheme,
    };
    let cfg = Config::parse(&text, &overrides, kind)?;
    let outcome = experiments::run(&cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for c in &outcome.checks {
        println!("{}", c.line());
    }
    let pass = outcome.pass();

    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    let name = cfg.kind.name();
    let step = &cfg.ensemble.step;
    let info = report::RunInfo {
        geometry: &cfg.geometry.id(),
        bundle: &cfg.bundle.id(),
        seed: step.seed,
        scheme: step.scheme.name(),
        dt: step.dt,
    };
    let csv_path = a.out.join(format!("{name}.csv"));
    report::write_csv(&csv_path, &outcome.rows, &info).map_err(|e| io_error(&csv_path, e))?;
    let config_echo = serde_json::to_value(&cfg.echo).expect("TOML values map to JSON");
    let body = json!({
        "geometry": info.geometry,
        "bundle": info.bundle,
        "rows": outcome.rows,
        "checks": outcome.checks,
        "warnings": outcome.warnings,
    });
    let json_path = a.out.join(format!("{name}.json"));
    report::write_json(&json_path, &report::report(name, config_echo, body, pass))
        .map_err(|e| io_error(&json_path, e))?;
    println!(
        "{name}: {} rows, {} checks, {} -> {}",
        outcome.rows.len(),
        outcome.checks.len(),
        if pass { "pass" } else { "FAIL" },
        a.out.display()
    );
    Ok(pass)
}

fn validate(a: ValidateArgs) -> Result<bool, RunError> {
    let mut cfg = SuiteConfig::new(if a.quick { Scale::Quick } else { Scale::Full });
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(dt) = a.dt {
        cfg.dt = dt;
    }
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    let ids: Vec<usize> = if a.criteria.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        a.criteria.clone()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(RunError::Config(config::ConfigError(format!("--criteria: no criterion {bad}"))));
    }

    println!("oracle self-tests");
    let oracles = oracle_self_tests()?;
    for c in &oracles {
        println!("  {}", c.line());
    }
    let mut pass = oracles.iter().all(|c| c.pass);

    let mut results = Vec::new();
    if !a.oracles_only {
        println!("acceptance criteria ({:?} scale)", cfg.scale);
        for id in ids {
            let r = run_criterion(id, &cfg);
            println!("{}", r.line());
            pass &= r.pass();
            results.push(r);
        }
    }
    if let Some(out) = a.out {
        fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
        let body = json!({ "oracles": oracles, "criteria": results });
        let path = out.join("validate.json");
        report::write_json(&path, &report::report("validate", json!(cfg), body, pass))
            .map_err(|e| io_error(&path, e))?;
    }
    println!("{}", if pass { "all passed" } else { "FAILED" });
    Ok(pass)
}
