//! Simulation configuration files.
//!
//! TOML with a mandatory `schema = 1`. Physical values are strings of the
//! form `"<number> <unit>"` and are checked against the dimension each key
//! expects; any key not listed in [`DOCUMENTED_KEYS`] is rejected.
//!
//! ```toml
//! schema = 1
//!
//! [mesh]
//! nx = 200                 # ny, nz default to 1
//! dx = "0.5e-9 m"          # dy, dz default to dx
//!
//! [material]
//! Ms = "8e5 A/m"
//! A = "1.3e-11 J/m"        # default 0
//! K = "5e5 J/m^3"          # default 0
//! easy_axis = [0, 0, 1]
//! alpha = 0.5
//! gamma = "2.211e5 m/A/s"  # default
//! # c1 = "-2.2e5 m/A/s"    # optional overrides
//!
//! [initial_m]
//! preset = "uniform"       # or "expression" / "vortex-free-expression"
//! direction = [1, 0, 0]
//! # mx = "if(x < 50e-9, 1, -1)"   # expression presets, x y z in metres
//!
//! [applied_field]
//! value = [0, 0, 1e5]
//! unit = "A/m"
//!
//! [run]
//! mode = "dynamics"        # or "relax"
//! t_end = "2e-9 s"         # time limit in relax mode
//! # torque_threshold = "1e7 1/s"  # relax mode only
//! rtol = 1e-8
//! atol = 1e-10
//! dt_initial = "1e-15 s"
//! dt_max = "1e-11 s"
//! renormalize_every = 0
//! max_steps = 10000000
//!
//! [equations]
//! source = "t(i) <- eps(i, j, k) * m(j) * H(k)"
//! constants = { }
//!
//! [output]
//! dir = "output"
//! observables = "observables.csv"
//! observe_every_steps = 1
//! snapshot_every_steps = 0  # 0 = off
//! snapshot_fields = ["m"]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::integrate::IntegratorConfig;
use crate::kernel::Constants;
use crate::llg::{MaterialParams, DEFAULT_GAMMA, UNIT_ANISOTROPY, UNIT_EXCHANGE, UNIT_FIELD, UNIT_GAMMA, UNIT_MS};
use crate::mesh::Mesh;
use crate::quantity::{Dimension, Quantity};

pub const SCHEMA_VERSION: i64 = 1;

/// Every key the loader understands, as dotted paths. Entries of
/// `equations.constants` are free-form names.
pub const DOCUMENTED_KEYS: &[&str] = &[
    "schema",
    "mesh.nx",
    "mesh.ny",
    "mesh.nz",
    "mesh.dx",
    "mesh.dy",
    "mesh.dz",
    "material.Ms",
    "material.A",
    "material.K",
    "material.easy_axis",
    "material.alpha",
    "material.gamma",
    "material.c1",
    "material.c2",
    "initial_m.preset",
    "initial_m.direction",
    "initial_m.mx",
    "initial_m.my",
    "initial_m.mz",
    "applied_field.value",
    "applied_field.unit",
    "run.mode",
    "run.t_end",
    "run.torque_threshold",
    "run.rtol",
    "run.atol",
    "run.dt_initial",
    "run.dt_max",
    "run.renormalize_every",
    "run.max_steps",
    "equations.source",
    "equations.constants",
    "output.dir",
    "output.observables",
    "output.observe_every_steps",
    "output.snapshot_every_steps",
    "output.snapshot_fields",
];

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
pub const DEFAULT_DT_INITIAL: f64 = 1e-15;
pub const DEFAULT_DT_MAX: f64 = 1e-11;
pub const DEFAULT_MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("`{key}` must be in {expected}, got {found}")]
    UnitMismatch {
        key: String,
        expected: String,
        found: String,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialM {
    Uniform([f64; 3]),
    /// Component expressions in `x`, `y`, `z` (metres, cell centres).
    Expression { mx: String, my: String, mz: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Dynamics,
    Relax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub mode: RunMode,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Equations {
    pub source: Option<String>,
    pub constants: Constants,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub observables: String,
    pub observe_every_steps: usize,
    pub snapshot_every_steps: usize,
    pub snapshot_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mesh: Mesh,
    pub material: MaterialParams,
    pub initial_m: InitialM,
    /// Applied field, A/m.
    pub applied_field: [f64; 3],
    pub run: RunSettings,
    pub equations: Equations,
    pub output: OutputSettings,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

/// A table being consumed; remembers which keys were read.
struct Section<'a> {
    path: String,
    table: &'a Table,
    seen: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table) -> Section<'a> {
        Section {
            path: path.to_string(),
            table,
            seen: BTreeSet::new(),
        }
    }

    fn key(&self, name: &str) -> String {
        if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.path)
        }
    }

    fn get(&mut self, name: &str) -> Option<&'a Value> {
        let (k, v) = self.table.get_key_value(name)?;
        self.seen.insert(k.as_str());
        Some(v)
    }

    fn require(&mut self, name: &str) -> Result<&'a Value, ConfigError> {
        self.get(name).ok_or_else(|| parse_err(self.key(name), "missing required key"))
    }

    fn type_err(&self, name: &str, what: &str) -> ConfigError {
        parse_err(self.key(name), format!("expected {what}"))
    }

    fn table(&mut self, name: &str) -> Result<Option<Section<'a>>, ConfigError> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(&self.key(name), t))),
            Some(_) => Err(self.type_err(name, "a table")),
        }
    }

    fn string(&mut self, name: &str) -> Result<Option<String>, ConfigError> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.type_err(name, "a string")),
        }
    }

    fn number(&mut self, name: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(name) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| self.type_err(name, "a number")),
        }
    }

    fn count(&mut self, name: &str) -> Result<Option<usize>, ConfigError> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::Integer(n)) if *n >= 0 => Ok(Some(*n as usize)),
            Some(_) => Err(self.type_err(name, "a non-negative integer")),
        }
    }

    fn vector(&mut self, name: &str) -> Result<Option<[f64; 3]>, ConfigError> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::Array(a)) if a.len() == 3 => {
                let mut out = [0.0; 3];
                for (o, v) in out.iter_mut().zip(a) {
                    *o = as_f64(v).ok_or_else(|| self.type_err(name, "an array of 3 numbers"))?;
                }
                Ok(Some(out))
            }
            Some(_) => Err(self.type_err(name, "an array of 3 numbers")),
        }
    }

    /// A `"<value> <unit>"` string checked against `unit`.
    fn quantity(&mut self, name: &str, unit: &str) -> Result<Option<Quantity>, ConfigError> {
        let Some(v) = self.get(name) else {
            return Ok(None);
        };
        let q = match v {
            Value::String(s) => s.parse::<Quantity>().map_err(|e| parse_err(self.key(name), e.to_string()))?,
            other => match as_f64(other) {
                Some(x) => Quantity::dimensionless(x).map_err(|e| parse_err(self.key(name), e.to_string()))?,
                None => return Err(self.type_err(name, "a quantity string such as \"1e-9 m\"")),
            },
        };
        check_unit(&self.key(name), q.dim(), unit)?;
        Ok(Some(q))
    }

    fn finish(self) -> Result<(), ConfigError> {
        for k in self.table.keys() {
            if !self.seen.contains(k.as_str()) {
                return Err(ConfigError::UnknownKey(self.key(k)));
            }
        }
        Ok(())
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(n) => Some(*n as f64),
        _ => None,
    }
}

fn check_unit(key: &str, found: Dimension, expected: &str) -> Result<(), ConfigError> {
    if found != Dimension::parse(expected).expect("static unit") {
        let found = match found.unit_string() {
            s if s.is_empty() => "a dimensionless value".to_string(),
            s => s,
        };
        return Err(ConfigError::UnitMismatch {
            key: key.to_string(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let location = match e.span() {
            Some(span) => {
                let (line, column) = line_column(text, span.start);
                format!("line {line}, column {column}")
            }
            None => "input".to_string(),
        };
        parse_err(location, e.message().trim())
    })?;
    let mut top = Section::new("", &root);

    match top.require("schema")? {
        Value::Integer(SCHEMA_VERSION) => {}
        Value::Integer(n) => return Err(parse_err("schema", format!("unsupported schema version {n}"))),
        _ => return Err(top.type_err("schema", "an integer")),
    }

    let mut mesh_sec = top.table("mesh")?.ok_or_else(|| parse_err("mesh", "missing required section"))?;
    let mesh = read_mesh(&mut mesh_sec)?;
    mesh_sec.finish()?;

    let mut mat = top
        .table("material")?
        .ok_or_else(|| parse_err("material", "missing required section"))?;
    let material = read_material(&mut mat)?;
    mat.finish()?;

    let initial_m = match top.table("initial_m")? {
        Some(mut s) => {
            let m = read_initial_m(&mut s)?;
            s.finish()?;
            m
        }
        None => return Err(parse_err("initial_m", "missing required section")),
    };

    let applied_field = match top.table("applied_field")? {
        Some(mut s) => {
            let value = s.vector("value")?.ok_or_else(|| parse_err(s.key("value"), "missing required key"))?;
            let unit = s.string("unit")?.ok_or_else(|| parse_err(s.key("unit"), "missing required key"))?;
            let dim = Dimension::parse(&unit).map_err(|e| parse_err(s.key("unit"), e.to_string()))?;
            check_unit(&s.key("unit"), dim, UNIT_FIELD)?;
            s.finish()?;
            value
        }
        None => [0.0; 3],
    };

    let mut run_sec = top.table("run")?.ok_or_else(|| parse_err("run", "missing required section"))?;
    let mut run = read_run(&mut run_sec)?;
    run_sec.finish()?;

    let equations = match top.table("equations")? {
        Some(mut s) => {
            let eq = read_equations(&mut s)?;
            s.finish()?;
            eq
        }
        None => Equations::default(),
    };

    let output = match top.table("output")? {
        Some(mut s) => {
            let o = read_output(&mut s)?;
            s.finish()?;
            o
        }
        None => OutputSettings {
            dir: PathBuf::from("output"),
            observables: "observables.csv".into(),
            observe_every_steps: 1,
            snapshot_every_steps: 0,
            snapshot_fields: vec!["m".into()],
        },
    };
    run.integrator.observe_every = output.observe_every_steps;
    top.finish()?;

    Ok(SimConfig {
        mesh,
        material,
        initial_m,
        applied_field,
        run,
        equations,
        output,
    })
}

fn read_mesh(s: &mut Section<'_>) -> Result<Mesh, ConfigError> {
    let nx = s.count("nx")?.ok_or_else(|| parse_err(s.key("nx"), "missing required key"))?;
    let ny = s.count("ny")?.unwrap_or(1);
    let nz = s.count("nz")?.unwrap_or(1);
    let dx = s
        .quantity("dx", "m")?
        .ok_or_else(|| parse_err(s.key("dx"), "missing required key"))?
        .value();
    let dy = s.quantity("dy", "m")?.map_or(dx, |q| q.value());
    let dz = s.quantity("dz", "m")?.map_or(dx, |q| q.value());
    Mesh::new([nx, ny, nz], [dx, dy, dz]).map_err(|e| parse_err(s.path.clone(), e.to_string()))
}

fn read_material(s: &mut Section<'_>) -> Result<MaterialParams, ConfigError> {
    let ms = s
        .quantity("Ms", UNIT_MS)?
        .ok_or_else(|| parse_err(s.key("Ms"), "missing required key"))?;
    let a_ex = s
        .quantity("A", UNIT_EXCHANGE)?
        .unwrap_or(Quantity::new(0.0, UNIT_EXCHANGE).expect("static unit"));
    let alpha = s
        .number("alpha")?
        .ok_or_else(|| parse_err(s.key("alpha"), "missing required key"))?;
    let mut p = MaterialParams::new(ms, a_ex, alpha);
    if let Some(k) = s.quantity("K", UNIT_ANISOTROPY)? {
        p.k_u = k;
    }
    if let Some(e) = s.vector("easy_axis")? {
        p.easy_axis = e;
    }
    p.gamma = s
        .quantity("gamma", UNIT_GAMMA)?
        .unwrap_or(Quantity::new(DEFAULT_GAMMA, UNIT_GAMMA).expect("static unit"));
    p.c1 = s.quantity("c1", UNIT_GAMMA)?;
    p.c2 = s.quantity("c2", UNIT_GAMMA)?;
    p.validate().map_err(|e| parse_err(s.path.clone(), e.to_string()))?;
    Ok(p)
}

fn read_initial_m(s: &mut Section<'_>) -> Result<InitialM, ConfigError> {
    let preset = s
        .string("preset")?
        .ok_or_else(|| parse_err(s.key("preset"), "missing required key"))?;
    match preset.as_str() {
        "uniform" => {
            let d = s
                .vector("direction")?
                .ok_or_else(|| parse_err(s.key("direction"), "missing required key"))?;
            if d.iter().all(|&x| x == 0.0) {
                return Err(parse_err(s.key("direction"), "direction must be non-zero"));
            }
            Ok(InitialM::Uniform(d))
        }
        "expression" | "vortex-free-expression" => {
            let mut comp = |name: &str| {
                s.string(name)?
                    .ok_or_else(|| parse_err(s.key(name), "missing required key"))
            };
            Ok(InitialM::Expression {
                mx: comp("mx")?,
                my: comp("my")?,
                mz: comp("mz")?,
            })
        }
        other => Err(parse_err(
            s.key("preset"),
            format!("unknown preset `{other}` (expected uniform, expression or vortex-free-expression)"),
        )),
    }
}

fn read_run(s: &mut Section<'_>) -> Result<RunSettings, ConfigError> {
    let mode = match s.string("mode")?.as_deref() {
        None | Some("dynamics") => RunMode::Dynamics,
        Some("relax") => RunMode::Relax,
        Some(other) => {
            return Err(parse_err(
                s.key("mode"),
                format!("unknown mode `{other}` (expected dynamics or relax)"),
            ))
        }
    };
    let t_end = s
        .quantity("t_end", "s")?
        .ok_or_else(|| parse_err(s.key("t_end"), "missing required key"))?
        .value();
    let torque_threshold = s.quantity("torque_threshold", "1/s")?.map(|q| q.value());
    match (mode, torque_threshold) {
        (RunMode::Relax, None) => {
            return Err(parse_err(s.key("torque_threshold"), "required in relax mode"));
        }
        (RunMode::Dynamics, Some(_)) => {
            return Err(parse_err(s.key("torque_threshold"), "only valid in relax mode"));
        }
        _ => {}
    }
    let cfg = IntegratorConfig {
        rtol: s.number("rtol")?.unwrap_or(DEFAULT_RTOL),
        atol: s.number("atol")?.unwrap_or(DEFAULT_ATOL),
        dt_initial: s.quantity("dt_initial", "s")?.map_or(DEFAULT_DT_INITIAL, |q| q.value()),
        dt_max: s.quantity("dt_max", "s")?.map_or(DEFAULT_DT_MAX, |q| q.value()),
        renormalize_every: s.count("renormalize_every")?.unwrap_or(0),
        t_end,
        torque_threshold,
        max_steps: s.count("max_steps")?.unwrap_or(DEFAULT_MAX_STEPS),
        observe_every: 1,
    };
    cfg.validate().map_err(|e| parse_err(s.path.clone(), e.to_string()))?;
    Ok(RunSettings { mode, integrator: cfg })
}

fn read_equations(s: &mut Section<'_>) -> Result<Equations, ConfigError> {
    let source = s.string("source")?;
    let mut constants = Constants::new();
    if let Some(c) = s.table("constants")? {
        for (name, v) in c.table {
            let key = c.key(name);
            let q = match v {
                Value::String(text) => text.parse::<Quantity>().map_err(|e| parse_err(&key, e.to_string()))?,
                other => as_f64(other)
                    .and_then(|x| Quantity::dimensionless(x).ok())
                    .ok_or_else(|| parse_err(&key, "expected a quantity string or number"))?,
            };
            constants.insert(name.clone(), q);
        }
    }
    if let Some(src) = &source {
        crate::dsl::parse_many(src).map_err(|e| parse_err(s.key("source"), e.to_string()))?;
    }
    Ok(Equations { source, constants })
}

fn read_output(s: &mut Section<'_>) -> Result<OutputSettings, ConfigError> {
    let observe_every_steps = s.count("observe_every_steps")?.unwrap_or(1);
    if observe_every_steps == 0 {
        return Err(parse_err(s.key("observe_every_steps"), "must be at least 1"));
    }
    let snapshot_fields = match s.get("snapshot_fields") {
        None => vec!["m".to_string()],
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| s.type_err("snapshot_fields", "an array of field names"))?,
        Some(_) => return Err(s.type_err("snapshot_fields", "an array of field names")),
    };
    Ok(OutputSettings {
        dir: PathBuf::from(s.string("dir")?.unwrap_or_else(|| "output".into())),
        observables: s.string("observables")?.unwrap_or_else(|| "observables.csv".into()),
        observe_every_steps,
        snapshot_every_steps: s.count("snapshot_every_steps")?.unwrap_or(0),
        snapshot_fields,
    })
}
