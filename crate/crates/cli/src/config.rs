//! Experiment configuration: a TOML file with `[geometry]`, `[bundle]`,
//! `[run]` and `[experiment]` tables, plus command-line overrides.

use std::fmt;

use bundleheat::estimators::Window;
use bundleheat::sections::SectionField;
use bundleheat::{
    BundleModel, EnsembleConfig, LocalTimeScheme, ModelGeometry, Point, SpinorInvolution, StepConfig,
};
use toml::{Table, Value};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

fn lib<T>(r: bundleheat::Result<T>, ctx: &str) -> Result<T> {
    r.map_err(|e| ConfigError(format!("{ctx}: {e}")))
}

/// Command-line values that take precedence over the `[run]` table.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub threads: Option<usize>,
    pub scheme: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Semigroup,
    Kernel,
    Conservation,
    Domination,
    LocalTime,
    L1,
    Mean,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "semigroup" => ExperimentKind::Semigroup,
            "kernel" => ExperimentKind::Kernel,
            "conservation" => ExperimentKind::Conservation,
            "domination" => ExperimentKind::Domination,
            "localtime" => ExperimentKind::LocalTime,
            "l1" => ExperimentKind::L1,
            "mean" => ExperimentKind::Mean,
            other => return err(format!("experiment.kind: unknown experiment {other:?}")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Semigroup => "semigroup",
            ExperimentKind::Kernel => "kernel",
            ExperimentKind::Conservation => "conservation",
            ExperimentKind::Domination => "domination",
            ExperimentKind::LocalTime => "localtime",
            ExperimentKind::L1 => "l1",
            ExperimentKind::Mean => "mean",
        }
    }
}

pub struct Config {
    pub geometry: ModelGeometry,
    pub bundle: BundleModel,
    pub ensemble: EnsembleConfig,
    pub kind: ExperimentKind,
    pub experiment: Table,
    /// The parsed file with overrides applied, echoed into reports.
    pub echo: Table,
}

/// Typed access to one table with `table.key` diagnostics.
struct Keys<'a> {
    name: &'a str,
    table: &'a Table,
}

impl<'a> Keys<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| ConfigError(format!("missing key: {key}")))
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn float_value(&self, key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => err(format!("{}: expected a number", self.path(key))),
        }
    }

    fn float(&self, key: &str) -> Result<f64> {
        self.float_value(key, self.require(key)?)
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| self.float_value(key, v))
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => err(format!("{}: expected a nonnegative integer", self.path(key))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => err(format!("{}: expected a string", self.path(key))),
        }
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        match self.require(key)? {
            Value::Array(a) => a.iter().map(|v| self.float_value(key, v)).collect(),
            v => Ok(vec![self.float_value(key, v)?]),
        }
    }

    fn floats_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        if self.get(key).is_some() {
            self.floats(key)
        } else {
            Ok(default.to_vec())
        }
    }

    fn points(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        match self.require(key)? {
            Value::Array(a) => a
                .iter()
                .map(|row| match row {
                    Value::Array(r) => r.iter().map(|v| self.float_value(key, v)).collect(),
                    _ => err(format!("{}: expected an array of coordinate arrays", self.path(key))),
                })
                .collect(),
            _ => err(format!("{}: expected an array of coordinate arrays", self.path(key))),
        }
    }

    fn sub(&self, key: &'a str) -> Result<Option<Keys<'a>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Keys { name: key, table: t })),
            Some(_) => err(format!("{}: expected a table", self.path(key))),
        }
    }
}

fn table<'a>(root: &'a Table, name: &'a str) -> Result<Keys<'a>> {
    match root.get(name) {
        Some(Value::Table(t)) => Ok(Keys { name, table: t }),
        Some(_) => err(format!("[{name}] must be a table")),
        None => err(format!("missing table: [{name}]")),
    }
}

impl Config {
    pub fn parse(text: &str, overrides: &Overrides, command: Option<ExperimentKind>) -> Result<Self> {
        let mut root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError(format!("parse error: {e}")))?;
        apply_overrides(&mut root, overrides);
        let geometry = parse_geometry(&table(&root, "geometry")?)?;
        let generic = match root.get("generic") {
            Some(Value::Table(t)) => Some(Keys { name: "generic", table: t }),
            Some(_) => return err("[generic] must be a table"),
            None => None,
        };
        let bundle = parse_bundle(geometry, &table(&root, "bundle")?, generic.as_ref())?;
        let run = table(&root, "run")?;
        let dt = run.float("dt")?;
        let scheme = match run.string("scheme")? {
            None => LocalTimeScheme::OnestepExact,
            Some(s) => lib(s.parse(), "run.scheme")?,
        };
        let seed = run.uint("seed")?.unwrap_or(0);
        let mut step = StepConfig::new(dt, scheme, seed);
        if let Some(m) = run.uint("max_steps")? {
            step.max_steps = m as usize;
        }
        lib(step.validate(&geometry), "run")?;
        let mut ensemble = EnsembleConfig::new(run.uint("paths")?.unwrap_or(100_000) as usize, step);
        ensemble.threads = run.uint("threads")?.unwrap_or(0) as usize;
        if let Some(b) = run.uint("batches")? {
            ensemble.batches = b as usize;
        }
        lib(ensemble.validate(), "run")?;
        let experiment = match root.get("experiment") {
            Some(Value::Table(t)) => t.clone(),
            Some(_) => return err("[experiment] must be a table"),
            None => Table::new(),
        };
        let declared = Keys {
            name: "experiment",
            table: &experiment,
        }
        .string("kind")?
        .map(ExperimentKind::parse)
        .transpose()?;
        let kind = match (command, declared) {
            (Some(c), _) => c,
            (None, Some(d)) => d,
            (None, None) => return err("missing key: kind"),
        };
        Ok(Config {
            geometry,
            bundle,
            ensemble,
            kind,
            experiment,
            echo: root,
        })
    }

    fn exp(&self) -> Keys<'_> {
        Keys {
            name: "experiment",
            table: &self.experiment,
        }
    }

    pub fn point(&self, key: &str) -> Result<Point> {
        let c = self.exp().floats(key)?;
        lib(self.geometry.point(&c), &format!("experiment.{key}"))
    }

    pub fn points(&self, key: &str) -> Result<Vec<Point>> {
        self.exp()
            .points(key)?
            .iter()
            .map(|c| lib(self.geometry.point(c), &format!("experiment.{key}")))
            .collect()
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        self.exp().floats_or("times", &[1.0])
    }

    pub fn float_or(&self, key: &str, default: f64) -> Result<f64> {
        self.exp().float_or(key, default)
    }

    pub fn uint_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.exp().uint(key)?.map_or(default, |v| v as usize))
    }

    /// Optional `C1, C2` pair for the L¹ assertion.
    pub fn constants(&self) -> Result<Option<(f64, f64)>> {
        match self.exp().get("constants") {
            None => Ok(None),
            Some(_) => {
                let c = self.exp().floats("constants")?;
                if c.len() != 2 {
                    return err("experiment.constants: expected [C1, C2]");
                }
                Ok(Some((c[0], c[1])))
            }
        }
    }

    /// `[experiment.window]` with `lo`, `hi`, `bins`; defaults to an
    /// exhaustive window around `center` for the largest time.
    pub fn window(&self, center: &Point, t: f64) -> Result<Window> {
        match self.exp().sub("window")? {
            Some(w) => {
                let lo = w.floats("lo")?;
                let hi = w.floats("hi")?;
                let bins: Vec<usize> = w.floats("bins")?.iter().map(|b| *b as usize).collect();
                lib(Window::new(&lo, &hi, &bins), "experiment.window")
            }
            None => {
                let bins = vec![self.uint_or("bins", 40)?; self.geometry.dim()];
                lib(Window::exhaustive(&self.geometry, center, t, &bins), "experiment.window")
            }
        }
    }

    /// Test section from a `[experiment.<key>]` table.
    pub fn section(&self, key: &str) -> Result<SectionField> {
        let s = self
            .exp()
            .sub(key)?
            .ok_or_else(|| ConfigError(format!("missing key: {key}")))?;
        let rank = self.bundle.rank;
        match s.string("kind")?.unwrap_or("bump") {
            "bump" => {
                let c = lib(self.geometry.point(&s.floats("center")?), &format!("{key}.center"))?;
                let radius = s.float("radius")?;
                let comp = s.uint("component")?.unwrap_or(0) as usize;
                if comp >= rank {
                    return err(format!("{key}.component: {comp} is not below the fiber rank {rank}"));
                }
                Ok(SectionField::bump_component(self.geometry, c, radius, rank, comp))
            }
            "gaussian" => {
                if rank != 1 {
                    return err(format!("{key}.kind: gaussian sections are scalar"));
                }
                Ok(SectionField::gaussian(&s.floats("center")?, s.float("width")?))
            }
            other => err(format!("{key}.kind: unknown section {other:?}")),
        }
    }

    /// Harmonic test section by name: `one`, or `dx1`, `dx2`, ...
    pub fn harmonic(&self, key: &str) -> Result<SectionField> {
        let name = self
            .exp()
            .string(key)?
            .ok_or_else(|| ConfigError(format!("missing key: {key}")))?;
        if name == "one" {
            return Ok(SectionField::scalar_one());
        }
        let n = self.geometry.dim();
        match name.strip_prefix("dx").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if (1..=n).contains(&k) => Ok(SectionField::dx(k - 1, n)),
            _ => err(format!("experiment.{key}: unknown harmonic section {name:?}")),
        }
    }
}

fn apply_overrides(root: &mut Table, o: &Overrides) {
    let run = root
        .entry("run")
        .or_insert_with(|| Value::Table(Table::new()));
    let Value::Table(run) = run else { return };
    if let Some(v) = o.seed {
        run.insert("seed".into(), Value::Integer(v as i64));
    }
    if let Some(v) = o.paths {
        run.insert("paths".into(), Value::Integer(v as i64));
    }
    if let Some(v) = o.dt {
        run.insert("dt".into(), Value::Float(v));
    }
    if let Some(v) = o.threads {
        run.insert("threads".into(), Value::Integer(v as i64));
    }
    if let Some(v) = &o.scheme {
        run.insert("scheme".into(), Value::String(v.clone()));
    }
}

fn parse_geometry(g: &Keys<'_>) -> Result<ModelGeometry> {
    let id = g.require("id")?;
    let Value::String(id) = id else {
        return err("geometry.id: expected a string");
    };
    let dim = g.uint("dimension")?.map(|d| d as usize);
    lib(ModelGeometry::from_id(id, dim), "geometry.id")
}

/// `[bundle]` takes either `kind` (with `degree`) or a compact `id` such as
/// `"forms:1"`; generic matrices may also live in a `[generic]` table.
fn parse_bundle(geom: ModelGeometry, b: &Keys<'_>, generic: Option<&Keys<'_>>) -> Result<BundleModel> {
    let (kind, id_degree) = match b.string("id")? {
        Some(id) => match id.split_once(':') {
            Some(("forms", p)) => match p.parse::<usize>() {
                Ok(p) => ("forms", Some(p)),
                Err(_) => return err(format!("bundle.id: bad form degree in {id:?}")),
            },
            _ => (id, None),
        },
        None => (b.string("kind")?.unwrap_or("scalar"), None),
    };
    let potential = b.float_or("potential", 0.0)?;
    match kind {
        "scalar" => {
            let robin = b.float_or("robin", 0.0)?;
            if potential == 0.0 && robin == 0.0 {
                Ok(BundleModel::scalar(geom))
            } else {
                lib(
                    BundleModel::generic_constant(geom, 1, &[potential], &[robin], &[1.0], None, None),
                    "bundle",
                )
            }
        }
        "forms" => {
            let p = match id_degree {
                Some(p) => p,
                None => b.uint("degree")?.unwrap_or(1) as usize,
            };
            if potential == 0.0 {
                lib(BundleModel::forms(geom, p), "bundle")
            } else {
                lib(BundleModel::forms_with_potential(geom, p, potential), "bundle")
            }
        }
        "spinor2d" => {
            let inv = match b.string("involution")?.unwrap_or("chirality") {
                "chirality" => SpinorInvolution::Chirality,
                "tangential" => SpinorInvolution::Tangential,
                other => return err(format!("bundle.involution: unknown involution {other:?}")),
            };
            lib(BundleModel::spinor2d(geom, inv), "bundle")
        }
        "generic" => {
            let b = generic.unwrap_or(b);
            let rank = b
                .uint("rank")?
                .ok_or_else(|| ConfigError("missing key: rank".into()))? as usize;
            lib(
                BundleModel::generic_constant(
                    geom,
                    rank,
                    &b.floats("weitzenbock")?,
                    &b.floats("robin")?,
                    &b.floats("involution")?,
                    None,
                    None,
                ),
                "bundle",
            )
        }
        other => err(format!("bundle.kind: unknown bundle {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[geometry]
id = "half_space"
dimension = 2

[bundle]
kind = "forms"
degree = 1

[run]
dt = 0.01
paths = 64
seed = 3

[experiment]
kind = "semigroup"
x = [0.0, 0.5]
"#;

    #[test]
    fn parses_base_config() {
        let c = Config::parse(BASE, &Overrides::default(), None).unwrap();
        assert_eq!(c.kind, ExperimentKind::Semigroup);
        assert_eq!(c.bundle.rank, 2);
        assert_eq!(c.ensemble.paths, 64);
        assert_eq!(c.ensemble.step.seed, 3);
        assert_eq!(c.times().unwrap(), vec![1.0]);
    }

    #[test]
    fn missing_dt_is_reported_by_key() {
        let text = BASE.replace("dt = 0.01\n", "");
        let e = Config::parse(&text, &Overrides::default(), None).err().unwrap();
        assert_eq!(e.0, "missing key: dt");
        let o = Overrides {
            dt: Some(0.02),
            ..Default::default()
        };
        assert!(Config::parse(&text, &o, None).is_ok());
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seed: Some(9),
            paths: Some(128),
            scheme: Some("overshoot".into()),
            ..Default::default()
        };
        let c = Config::parse(BASE, &o, None).unwrap();
        assert_eq!(c.ensemble.step.seed, 9);
        assert_eq!(c.ensemble.paths, 128);
        assert_eq!(c.ensemble.step.scheme, LocalTimeScheme::Overshoot);
    }

    #[test]
    fn compact_bundle_ids() {
        let text = BASE.replace("kind = \"forms\"\ndegree = 1", "id = \"forms:2\"");
        let c = Config::parse(&text, &Overrides::default(), None).unwrap();
        assert_eq!(c.bundle.rank, 1);
        let text = BASE.replace("kind = \"forms\"\ndegree = 1", "id = \"generic\"")
            + "\n[generic]\nrank = 2\nweitzenbock = [1, 0, 0, 3]\nrobin = [0, 0, 0, 0]\ninvolution = [1, 0, 0, 1]\n";
        let c = Config::parse(&text, &Overrides::default(), None).unwrap();
        assert_eq!((c.bundle.rank, c.bundle.c1), (2, 1.0));
    }

    #[test]
    fn bad_values_name_their_key() {
        let e = Config::parse(&BASE.replace("seed = 3", "seed = \"x\""), &Overrides::default(), None)
            .err()
            .unwrap();
        assert!(e.0.contains("run.seed"), "{e}");
        let e = Config::parse(&BASE.replace("\"forms\"", "\"tensor\""), &Overrides::default(), None)
            .err()
            .unwrap();
        assert!(e.0.contains("bundle.kind"), "{e}");
        let e = Config::parse("[geometry\n", &Overrides::default(), None).err().unwrap();
        assert!(e.0.contains("line"), "{e}");
    }
}
