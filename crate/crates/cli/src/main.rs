use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fieldsim::config::load_config;
use fieldsim::dsl::parse_many;
use fieldsim::kernel::{expand, MIN_BENCH_SITES};
use fieldsim::runner::{bench_config, run_simulation, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "fieldsim", about = "Field simulation engine with an index-notation equation compiler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation config and write observables and snapshots.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Print the expanded kernels before running.
        #[arg(long)]
        dump_kernel: bool,
        /// Print every dependency-graph rule execution and per-rule compute counts.
        #[arg(long)]
        trace_deps: bool,
    },
    /// Expand index-notation equations and print the kernel IR.
    Expand { dsl_file: PathBuf },
    /// Time the interpreted and compiled backends on the equation-of-motion kernel.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        sites: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the version.
    Version,
}

/// Write to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Version => {
            emit(&format!("fieldsim {}\n", env!("CARGO_PKG_VERSION")));
            ExitCode::SUCCESS
        }
        Command::Expand { dsl_file } => {
            let src = match std::fs::read_to_string(&dsl_file) {
                Ok(s) => s,
                Err(e) => return fail(format!("cannot read {}: {e}", dsl_file.display())),
            };
            let eqs = match parse_many(&src) {
                Ok(eqs) => eqs,
                Err(e) => return fail(e),
            };
            for eq in &eqs {
                match expand(eq) {
                    Ok(ir) => emit(&ir.to_string()),
                    Err(e) => return fail(e),
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            output_dir,
            dump_kernel,
            trace_deps,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let opts = RunOptions {
                output_dir,
                dump_kernel,
                trace_deps,
            };
            match run_simulation(&cfg, &opts) {
                Ok(report) => {
                    if let Some(dump) = &report.kernel_dump {
                        emit(dump);
                    }
                    for line in &report.trace {
                        emit(&format!("{line}\n"));
                    }
                    emit(&format!(
                        "t = {:e} s, {} steps ({} rejected), {} rows -> {}\n",
                        report.summary.t,
                        report.summary.accepted_steps,
                        report.summary.rejected_steps,
                        report.rows,
                        report.observables.display()
                    ));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Bench {
            config,
            sites,
            repetitions,
            seed,
        } => {
            if sites < MIN_BENCH_SITES {
                eprintln!("error: --sites must be at least {MIN_BENCH_SITES}");
                return ExitCode::from(2);
            }
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match bench_config(&cfg, sites, repetitions, seed) {
                Ok(r) => {
                    emit(&format!(
                        "sites = {}, repetitions = {}\ninterpreted: {:.2} ns/site\ncompiled:    {:.2} ns/site\nspeedup:     {:.2}x\n",
                        r.sites, r.repetitions, r.interpreted_ns_per_site, r.compiled_ns_per_site, r.speedup
                    ));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
