use std::error::Error;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use osnst_bench::report::{emit_report, fmt_g6};
use osnst_bench::{gen_problem, run_sweep, ExperimentSpec, SweepOptions};
use osnst_core::diagnostics::{self, Enumeration, SAMPLED_SUBSETS};
use osnst_core::instance_io::{read_instance, write_instance, InstanceMeta};
use osnst_core::linalg::DEFAULT_RANK_TOL;
use osnst_core::model::relative_error;
use osnst_core::{osnst_solve, somp_solve, FeedbackSchedule, SolverConfig, Tolerance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type BoxResult<T> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "osnst", version, about = "Joint-sparse recovery from multiple measurement vectors")]
struct Cli {
    /// Debug logging; `solve` also records every support.
    #[arg(long, global = true)]
    verbose: bool,
    /// Worker threads for sweeps and subset enumeration.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Osnst,
    Somp,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as `<out>/<name>.bin` plus a JSON sidecar.
    Gen {
        #[arg(short = 'm', long)]
        rows: usize,
        #[arg(short = 'n', long)]
        cols: usize,
        #[arg(short = 'l', long, default_value_t = 1)]
        snapshots: usize,
        #[arg(short = 's', long)]
        sparsity: usize,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "instance")]
        name: String,
    },
    /// Solve one instance file and print the result as JSON.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Solver::Osnst)]
        solver: Solver,
        /// Feedback schedule, e.g. `6x`, `x`, `quadratic`, `table(1;2;4)`.
        #[arg(long, default_value = "6x")]
        schedule: FeedbackSchedule,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        /// Stopping threshold relative to ‖Y‖_F.
        #[arg(long, default_value_t = 1e-12, conflicts_with = "abs_epsilon")]
        epsilon: f64,
        /// Absolute stopping threshold on ‖Y − ΦW‖_F.
        #[arg(long)]
        abs_epsilon: Option<f64>,
        /// Sparsity given to SOMP; defaults to the sidecar's.
        #[arg(long)]
        sparsity: Option<usize>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sparsity sweep described by a JSON spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
        /// Write every time as 0 so reruns produce identical files.
        #[arg(long)]
        no_timing: bool,
    },
    /// Restricted isometry constants, spark and the contraction certificate of a small instance.
    Diagnose {
        instance: PathBuf,
        /// Subset size for the isometry constants; defaults to the true sparsity.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, default_value = "6x")]
        schedule: FeedbackSchedule,
        /// Iteration whose certificate is reported.
        #[arg(long, default_value_t = 1)]
        iteration: usize,
        /// Refuse to fall back to sampled subsets.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> BoxResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn run(cli: Cli) -> BoxResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Gen {
            rows,
            cols,
            snapshots,
            sparsity,
            beta,
            seed,
            out,
            name,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = gen_problem(rows, cols, snapshots, sparsity, beta, &mut rng)?;
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let path = out.join(format!("{name}.bin"));
            let mut meta = InstanceMeta::for_instance(&p);
            meta.beta = Some(beta);
            meta.seed = Some(seed);
            write_instance(&path, &p, &meta)?;
            info!("wrote {}", path.display());
            println!("{}", path.display());
        }
        Command::Solve {
            instance,
            solver,
            schedule,
            max_iter,
            epsilon,
            abs_epsilon,
            sparsity,
            out,
        } => {
            let (p, meta) = read_instance(&instance)?;
            let result = match solver {
                Solver::Osnst => {
                    let cfg = SolverConfig {
                        epsilon: abs_epsilon.map_or(Tolerance::Relative(epsilon), Tolerance::Absolute),
                        max_iter,
                        record_supports: cli.verbose,
                        ..SolverConfig::with_schedule(schedule)
                    };
                    osnst_solve(&p, &cfg)?
                }
                Solver::Somp => {
                    let s = sparsity
                        .or_else(|| meta.as_ref().and_then(|m| m.s))
                        .or_else(|| p.true_support().map(<[usize]>::len))
                        .ok_or("SOMP needs --sparsity when the instance has no recorded support")?;
                    somp_solve(&p, s)?
                }
            };
            if let Some(truth) = p.truth() {
                info!("relative error {}", fmt_g6(relative_error(truth, &result.estimate)));
            }
            emit_json(&serde_json::to_value(&result)?, out.as_deref())?;
        }
        Command::Sweep {
            spec,
            seed,
            out,
            no_timing,
        } => {
            let text = fs::read_to_string(&spec).map_err(|e| format!("{}: {e}", spec.display()))?;
            let mut parsed: ExperimentSpec =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", spec.display()))?;
            if let Some(seed) = seed {
                parsed.seed = seed;
            }
            let opts = SweepOptions {
                threads: None,
                timing: !no_timing,
            };
            let report = run_sweep(&parsed, opts)?;
            let files = emit_report(&report, &out)?;
            for row in &report.rows {
                info!(
                    "{} {} s={}: success {} iters {} time {}s",
                    row.solver,
                    row.schedule,
                    row.s,
                    fmt_g6(row.success_freq),
                    fmt_g6(row.mean_iters),
                    fmt_g6(row.mean_time_s)
                );
            }
            println!("{}", files.csv.display());
        }
        Command::Diagnose {
            instance,
            level,
            schedule,
            iteration,
            exhaustive,
            seed,
        } => {
            let (p, _) = read_instance(&instance)?;
            let level = level
                .or_else(|| p.true_support().map(<[usize]>::len))
                .unwrap_or(1)
                .clamp(1, p.n());
            let mode = if exhaustive {
                Enumeration::Exhaustive
            } else {
                Enumeration::Auto {
                    samples: SAMPLED_SUBSETS,
                    seed,
                }
            };
            let rip = diagnostics::rip_report(p.phi(), level, mode)?;
            let spark = match diagnostics::spark_and_uniqueness(p.phi(), p.y(), DEFAULT_RANK_TOL) {
                Ok(u) => serde_json::to_value(u)?,
                Err(e) => {
                    warn!("spark skipped: {e}");
                    json!({ "error": e.to_string() })
                }
            };
            let cert = match p.truth() {
                Some(truth) => match diagnostics::certificate(p.phi(), truth, &schedule, iteration) {
                    Ok(c) => serde_json::to_value(c)?,
                    Err(e) => json!({ "error": e.to_string() }),
                },
                None => serde_json::Value::Null,
            };
            emit_json(
                &json!({
                    "m": p.m(),
                    "n": p.n(),
                    "l": p.l(),
                    "isometry": rip,
                    "uniqueness": spark,
                    "certificate": cert,
                }),
                None,
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
