//! Drive a simulation from a [`SimConfig`]: build the micromagnet, integrate
//! and write observables and snapshots.
//!
//! The observables file is CSV with header `t,mx,my,mz,max_torque,steps`,
//! preceded by `#` comment lines recording every setting in effect. Reals are
//! written with 17 significant digits. Snapshots go to
//! `<dir>/<field>_<steps>.txt` in the field snapshot format.

use std::cell::RefCell;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
use thiserror::Error;

use crate::config::{ConfigError, InitialM, RunMode, SimConfig};
use crate::integrate::{integrate, normalize_triples, IntegrateError, IntegratorConfig, Observation, StopReason, Summary};
use crate::kernel::{benchmark_backends, seeded_fields, BenchReport, KernelError};
use crate::llg::{max_triple_norm, LlgError, Micromagnet, FIELD_M};
use crate::mesh::{FieldError, Mesh, Rank};
use crate::quantity::format_real;

pub const OBSERVABLES_HEADER: &str = "t,mx,my,mz,max_torque,steps";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Llg(#[from] LlgError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("initial_m.{component}: {message}")]
    InitialM { component: String, message: String },
    #[error("unknown snapshot field `{0}`")]
    UnknownSnapshotField(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("relaxation did not reach the torque threshold by t = {t:e} s")]
    NotConverged { t: f64 },
    #[error("step limit reached at t = {t:e} s before t_end")]
    StepLimit { t: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub output_dir: Option<PathBuf>,
    /// Collect the expanded kernels into [`RunReport::kernel_dump`].
    pub dump_kernel: bool,
    /// Collect one line per executed rule, followed by per-rule compute
    /// counts.
    pub trace_deps: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub observables: PathBuf,
    pub rows: usize,
    pub snapshots: Vec<PathBuf>,
    pub kernel_dump: Option<String>,
    pub trace: Vec<String>,
}

/// Initial magnetisation for every site, normalised to unit length.
pub fn initial_magnetization(cfg: &SimConfig) -> Result<Vec<f64>, RunError> {
    let mesh = cfg.mesh;
    let mut m = vec![0.0; 3 * mesh.site_count()];
    match &cfg.initial_m {
        InitialM::Uniform(d) => {
            for v in m.chunks_exact_mut(3) {
                v.copy_from_slice(d);
            }
        }
        InitialM::Expression { mx, my, mz } => {
            let err = |c: &str, e: &dyn std::fmt::Display| RunError::InitialM {
                component: c.to_string(),
                message: e.to_string(),
            };
            let mut trees = Vec::new();
            for (c, src) in [("mx", mx), ("my", my), ("mz", mz)] {
                trees.push((c, build_operator_tree::<DefaultNumericTypes>(src).map_err(|e| err(c, &e))?));
            }
            let mut ctx: HashMapContext<DefaultNumericTypes> = HashMapContext::new();
            for site in 0..mesh.site_count() {
                let r = mesh.site_center(site);
                for (name, x) in ["x", "y", "z"].into_iter().zip(r) {
                    ctx.set_value(name.into(), Value::Float(x)).map_err(|e| err("x", &e))?;
                }
                for (k, (c, tree)) in trees.iter().enumerate() {
                    let v = tree.eval_number_with_context(&ctx).map_err(|e| err(c, &e))?;
                    if !v.is_finite() {
                        return Err(err(c, &format!("not finite at {r:?}")));
                    }
                    m[3 * site + k] = v;
                }
            }
        }
    }
    for (site, v) in m.chunks_exact(3).enumerate() {
        if v.iter().all(|&x| x == 0.0) {
            return Err(RunError::InitialM {
                component: "m".into(),
                message: format!("zero vector at site {site}"),
            });
        }
    }
    normalize_triples(&mut m);
    Ok(m)
}

/// The micromagnet described by `cfg`, with its initial magnetisation and
/// any extra equations registered.
pub fn build_magnet(cfg: &SimConfig) -> Result<Micromagnet, RunError> {
    let mut magnet = Micromagnet::new(cfg.mesh, cfg.material.clone(), cfg.applied_field)?;
    magnet.set_magnetization(&initial_magnetization(cfg)?)?;
    if let Some(src) = &cfg.equations.source {
        for eq in crate::dsl::parse_many(src).map_err(LlgError::from)? {
            magnet.add_equation(&eq.to_string(), &cfg.equations.constants)?;
        }
    }
    Ok(magnet)
}

fn header_comments(cfg: &SimConfig, magnet: &Micromagnet) -> Result<Vec<String>, RunError> {
    let p = magnet.params();
    let c = p.coefficients()?;
    let i = &cfg.run.integrator;
    let [nx, ny, nz] = cfg.mesh.counts();
    let [dx, dy, dz] = cfg.mesh.spacing();
    let mode = match cfg.run.mode {
        RunMode::Dynamics => "dynamics",
        RunMode::Relax => "relax",
    };
    let initial = match &cfg.initial_m {
        InitialM::Uniform(d) => format!("uniform [{}, {}, {}]", format_real(d[0]), format_real(d[1]), format_real(d[2])),
        InitialM::Expression { mx, my, mz } => format!("expression mx = {mx:?}, my = {my:?}, mz = {mz:?}"),
    };
    let h = cfg.applied_field;
    let mut lines = vec![
        format!("fieldsim {}", env!("CARGO_PKG_VERSION")),
        format!("mode = {mode}"),
        format!(
            "mesh = {nx} x {ny} x {nz}, spacing = [{}, {}, {}] m",
            format_real(dx),
            format_real(dy),
            format_real(dz)
        ),
        format!("Ms = {}, A = {}, K = {}", p.ms, p.a_ex, p.k_u),
        format!(
            "easy_axis = [{}, {}, {}], alpha = {}",
            format_real(p.easy_axis[0]),
            format_real(p.easy_axis[1]),
            format_real(p.easy_axis[2]),
            format_real(p.alpha)
        ),
        format!("gamma = {}, c1 = {}, c2 = {}", p.gamma, c.c1, c.c2),
        format!("initial_m = {initial}"),
        format!(
            "applied_field = [{}, {}, {}] A/m",
            format_real(h[0]),
            format_real(h[1]),
            format_real(h[2])
        ),
        format!(
            "t_end = {} s, torque_threshold = {}",
            format_real(i.t_end),
            i.torque_threshold.map_or("none".into(), |t| format!("{} 1/s", format_real(t)))
        ),
        format!(
            "rtol = {}, atol = {}, dt_initial = {} s, dt_max = {} s",
            format_real(i.rtol),
            format_real(i.atol),
            format_real(i.dt_initial),
            format_real(i.dt_max)
        ),
        format!("renormalize_every = {}, max_steps = {}", i.renormalize_every, i.max_steps),
        format!(
            "observe_every_steps = {}, snapshot_every_steps = {}",
            cfg.output.observe_every_steps, cfg.output.snapshot_every_steps
        ),
    ];
    if let Some(src) = &cfg.equations.source {
        lines.push(format!("equations = {src:?}"));
    }
    Ok(lines)
}

fn observable_row(obs: &Observation<'_>) -> String {
    let n = (obs.y.len() / 3).max(1) as f64;
    let mut avg = [0.0; 3];
    for v in obs.y.chunks_exact(3) {
        for k in 0..3 {
            avg[k] += v[k];
        }
    }
    format!(
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        obs.t,
        avg[0] / n,
        avg[1] / n,
        avg[2] / n,
        max_triple_norm(obs.dydt),
        obs.steps
    )
}

struct Output {
    dir: PathBuf,
    csv: BufWriter<File>,
    csv_path: PathBuf,
    rows: usize,
    last_row: Option<(usize, String)>,
    snapshots: Vec<PathBuf>,
    last_snapshot: Option<usize>,
    error: Option<RunError>,
}

impl Output {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn write_row(&mut self, row: &str) -> Result<(), RunError> {
        writeln!(self.csv, "{row}").map_err(Self::io(&self.csv_path))?;
        self.rows += 1;
        Ok(())
    }

    fn snapshot(&mut self, magnet: &mut Micromagnet, fields: &[String], y: &[f64], steps: usize) -> Result<(), RunError> {
        magnet.set_magnetization(y)?;
        for name in fields {
            let field = magnet.request(name)?;
            let path = self.dir.join(format!("{name}_{steps:09}.txt"));
            let file = File::create(&path).map_err(Self::io(&path))?;
            let mut w = BufWriter::new(file);
            field.write_snapshot(&mut w)?;
            w.flush().map_err(Self::io(&path))?;
            self.snapshots.push(path);
        }
        self.last_snapshot = Some(steps);
        Ok(())
    }
}

/// Run the simulation, writing into the configured (or overridden) output
/// directory. Output is a deterministic function of the configuration.
pub fn run_simulation(cfg: &SimConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    let mut magnet = build_magnet(cfg)?;
    for name in &cfg.output.snapshot_fields {
        if !magnet.graph().fields().contains(name) {
            return Err(RunError::UnknownSnapshotField(name.clone()));
        }
    }
    let kernel_dump = opts.dump_kernel.then(|| {
        magnet
            .kernels()
            .iter()
            .map(|(id, ir)| format!("# rule {id}\n{ir}"))
            .collect::<Vec<_>>()
            .join("\n")
    });

    let dir = opts.output_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).map_err(Output::io(&dir))?;
    let csv_path = dir.join(&cfg.output.observables);
    let file = File::create(&csv_path).map_err(Output::io(&csv_path))?;
    let mut out = Output {
        dir,
        csv: BufWriter::new(file),
        csv_path,
        rows: 0,
        last_row: None,
        snapshots: Vec::new(),
        last_snapshot: None,
        error: None,
    };
    for line in header_comments(cfg, &magnet)? {
        writeln!(out.csv, "# {line}").map_err(Output::io(&out.csv_path))?;
    }
    writeln!(out.csv, "{OBSERVABLES_HEADER}").map_err(Output::io(&out.csv_path))?;

    let trace = Vec::new();
    if opts.trace_deps {
        magnet.graph_mut().enable_trace();
    }

    let mut y = magnet.magnetization().data().to_vec();
    let every = cfg.output.observe_every_steps;
    let snap_every = cfg.output.snapshot_every_steps;
    let fields = &cfg.output.snapshot_fields;
    // observe every step here; the cadence is applied below so the final
    // state can always be written
    let icfg = IntegratorConfig {
        observe_every: 1,
        ..cfg.run.integrator.clone()
    };

    let magnet = RefCell::new(magnet);
    let trace = RefCell::new(trace);
    let drain = |mag: &mut Micromagnet| {
        trace
            .borrow_mut()
            .extend(mag.graph_mut().drain_trace().iter().map(|e| e.to_string()));
    };
    let rhs = |_t: f64, m: &[f64], dmdt: &mut [f64]| {
        let mut mag = magnet.borrow_mut();
        mag.rhs(m, dmdt)?;
        drain(&mut mag);
        Ok(())
    };
    let observe = |obs: &Observation<'_>| {
        if out.error.is_some() {
            return;
        }
        let row = observable_row(obs);
        let mut result = Ok(());
        if obs.steps.is_multiple_of(every) {
            result = out.write_row(&row);
        } else {
            out.last_row = Some((obs.steps, row));
        }
        if result.is_ok() && snap_every > 0 && obs.steps.is_multiple_of(snap_every) {
            let mut mag = magnet.borrow_mut();
            result = out.snapshot(&mut mag, fields, obs.y, obs.steps);
            drain(&mut mag);
        }
        if obs.steps.is_multiple_of(every) {
            out.last_row = None;
        }
        if let Err(e) = result {
            out.error = Some(e);
        }
    };
    let summary = integrate(rhs, &mut y, &icfg, observe)?;

    if let Some(e) = out.error.take() {
        return Err(e);
    }
    if let Some((_, row)) = out.last_row.take() {
        out.write_row(&row)?;
    }
    let mut magnet = magnet.into_inner();
    if snap_every > 0 && out.last_snapshot != Some(summary.accepted_steps) {
        out.snapshot(&mut magnet, fields, &y, summary.accepted_steps)?;
    }
    let mut trace = trace.into_inner();
    trace.extend(magnet.graph_mut().drain_trace().iter().map(|e| e.to_string()));
    out.csv.flush().map_err(Output::io(&out.csv_path))?;
    if opts.trace_deps {
        for id in magnet.graph().rule_ids() {
            let n = magnet.graph().compute_count(id).unwrap_or(0);
            trace.push(format!("rule {id} computed {n} times"));
        }
    }

    match (cfg.run.mode, summary.reason) {
        (_, StopReason::MaxSteps) => return Err(RunError::StepLimit { t: summary.t }),
        (RunMode::Relax, StopReason::EndTime) => return Err(RunError::NotConverged { t: summary.t }),
        _ => {}
    }

    Ok(RunReport {
        summary,
        observables: out.csv_path,
        rows: out.rows,
        snapshots: out.snapshots,
        kernel_dump,
        trace,
    })
}

/// Time the equation-of-motion kernel on both backends over a line of
/// `sites` cells with the configuration's coefficients.
pub fn bench_config(cfg: &SimConfig, sites: usize, repetitions: usize, seed: u64) -> Result<BenchReport, RunError> {
    let mesh = Mesh::new([sites, 1, 1], cfg.mesh.spacing())?;
    let fields = seeded_fields(mesh, &[(FIELD_M, Rank::Vector), ("H", Rank::Vector)], seed)?;
    let eq = crate::dsl::parse(crate::dsl::DMDT_SOURCE).map_err(KernelError::from)?;
    let constants = cfg.material.coefficients()?.constants();
    Ok(benchmark_backends(&eq, &constants, &fields, repetitions)?)
}
