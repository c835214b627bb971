use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codelet_engine::hierarchy::{read_snapshot, write_snapshot};
use codelet_engine::simlab::{self, fig3_experiment, fuzz_vm, RunConfig, Session};

#[derive(Parser)]
#[command(name = "codelet-lab", version, about = "Run the codelet hierarchy in a simulated world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Session length in simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// VM worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session; writes metrics.csv and actuations.csv.
    Run(Common),
    /// Stimulus-response experiment; writes response_curve.csv.
    Fig3 {
        #[command(flatten)]
        common: Common,
        /// Override the feedback actuator's echo delay (ms).
        #[arg(long)]
        delay: Option<u64>,
    },
    /// Fuzz the interpreter with random (codelet, input, budget) triples.
    FuzzVm {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        count: u64,
    },
    /// Save the hierarchy after a session, or check a saved one.
    Snapshot {
        #[command(flatten)]
        common: Common,
        /// Load and audit this snapshot instead of running.
        #[arg(long)]
        load: Option<PathBuf>,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn config(common: &Common, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.session.seed = seed;
    }
    if let Some(d) = common.duration {
        cfg.session.duration_s = d;
    }
    if let Some(w) = common.workers {
        cfg.session.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run(common) => {
            let cfg = config(&common, RunConfig::default())?;
            let log = simlab::run_session(&cfg)?;
            simlab::emit_metrics(&log, &common.out)?;
            let last = log.samples.last().map_or(0.0, |s| s.r);
            println!(
                "{} samples, final R {:.6}, {} activations -> {}",
                log.samples.len(),
                last,
                log.counters.activations,
                common.out.display()
            );
        }
        Command::Fig3 { common, delay } => {
            let mut cfg = config(&common, RunConfig::fig3_default(300))?;
            if let Some(d) = delay {
                for a in &mut cfg.world.actuators {
                    if let Some(f) = a.feedback.as_mut() {
                        f.delay_ms = d;
                    }
                }
            }
            let schedule = cfg.schedule()?;
            let result = fig3_experiment(&cfg, &schedule)?;
            write(&common.out, "response_curve.csv", &result.curve.to_csv())?;
            simlab::emit_metrics(&result.log, &common.out)?;
            println!("response peak at {} ms", result.peak_ms);
        }
        Command::FuzzVm { seed, count } => {
            let r = fuzz_vm(seed, count);
            println!(
                "{} runs: {} match, {} no-match, {} runtime error, {} budget exhausted; \
                 {} host failures, {} overruns, {} leaks",
                r.runs,
                r.matches,
                r.no_matches,
                r.runtime_errors,
                r.budget_exhausted,
                r.host_failures,
                r.overruns,
                r.leaks
            );
            if !r.clean() {
                return Err("fuzzing found failures".into());
            }
        }
        Command::Snapshot { common, load } => {
            let cfg = config(&common, RunConfig::default())?;
            let params = cfg.engine_params()?;
            match load {
                Some(path) => {
                    let engine = read_snapshot(&fs::read_to_string(&path)?, params)?;
                    println!(
                        "{}: {} concepts, R {:.6} at t={} ms",
                        path.display(),
                        engine.graph().len(),
                        engine.global_reward().value(),
                        engine.clock()
                    );
                }
                None => {
                    let mut session = Session::new(&cfg)?;
                    session.run_until(simlab::session::duration_ms(&cfg))?;
                    let (engine, _) = session.into_parts();
                    write(&common.out, "snapshot.txt", &write_snapshot(&engine))?;
                    println!("{} concepts -> {}", engine.graph().len(), common.out.join("snapshot.txt").display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
