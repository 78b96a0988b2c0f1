//! Subcommands and exit-code mapping.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use gaqueue_broker::BrokerServer;
use gaqueue_core::{run_ga_with, Evaluator, SequentialEvaluator};
use gaqueue_runtime::{worker_run_loop, DistributedEvaluator, MasterOptions, WorkerOptions};
use log::info;
use thiserror::Error;

use crate::config::{parse_config, Mode, RunConfig, DEFAULT_RUN_ID};
use crate::orchestrate::{run_local, LocalOptions, Signals, LISTENING_PREFIX};
use crate::report::{read_rows, BenchmarkReport, CsvReport, GenerationRow};

#[derive(Debug, Error)]
pub enum CmdError {
    /// Bad arguments or configuration: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gaqueue",
    version,
    about = "Master-slave genetic algorithm over a work-queue broker"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Distributed,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a broker until SIGTERM or SIGINT.
    Broker {
        /// Address to listen on; port 0 picks a free port.
        #[arg(long, env = "BROKER_ADDR", default_value = "127.0.0.1:5672")]
        addr: String,
    },
    /// Evaluate requests for one run until terminated.
    Worker {
        #[arg(long, env = "BROKER_ADDR")]
        addr: Option<String>,
        /// Defaults to host name and process id.
        #[arg(long, env = "WORKER_ID")]
        id: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "RUN_ID")]
        run_id: Option<String>,
        /// Exit after the broker has been unreachable this many seconds.
        #[arg(long, default_value_t = 60.0)]
        give_up_secs: f64,
    },
    /// Run the GA and write the per-generation CSV report.
    Master {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, env = "BROKER_ADDR")]
        addr: Option<String>,
        #[arg(long, env = "RUN_ID")]
        run_id: Option<String>,
        /// CSV destination; overrides `report_path`. Without either the CSV
        /// goes to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Start broker, workers and master as local processes.
    Local {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `worker_count`.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Creating this file adds one worker (SIGUSR1 does the same).
        #[arg(long)]
        control_file: Option<PathBuf>,
    },
    /// Run `local` once per worker count with the same seed.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        workers: Vec<usize>,
        /// Raw per-generation rows; defaults to bench.csv.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaqueue: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cmd: Cmd) -> Result<(), CmdError> {
    match cmd {
        Cmd::Broker { addr } => cmd_broker(&addr),
        Cmd::Worker {
            addr,
            id,
            config,
            run_id,
            give_up_secs,
        } => cmd_worker(addr, id, config.as_deref(), run_id, give_up_secs),
        Cmd::Master {
            config,
            mode,
            addr,
            run_id,
            report,
        } => cmd_master(&config, mode, addr, run_id, report),
        Cmd::Local {
            config,
            workers,
            report,
            control_file,
        } => cmd_local(&config, workers, report, control_file),
        Cmd::Bench { config, workers, out } => cmd_bench(&config, &workers, &out),
    }
}

fn load(path: &Path) -> Result<RunConfig, CmdError> {
    parse_config(path).map_err(|e| CmdError::Usage(e.to_string()))
}

fn stop_flag() -> Result<Arc<AtomicBool>, CmdError> {
    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
        signal_hook::flag::register(sig, stop.clone()).context("installing signal handler")?;
    }
    Ok(stop)
}

fn default_worker_id() -> String {
    let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
        .ok()
        .or_else(|| std::env::var("HOSTNAME").ok())
        .map(|h| h.trim().to_string())
        .filter(|h| !h.is_empty())
        .unwrap_or_else(|| "localhost".to_string());
    format!("{host}-{}", std::process::id())
}

pub fn cmd_broker(addr: &str) -> Result<(), CmdError> {
    let stop = stop_flag()?;
    let server = BrokerServer::bind(addr).with_context(|| format!("cannot listen on {addr}"))?;
    let mut handle = server.spawn().context("starting broker")?;
    let mut out = io::stdout().lock();
    writeln!(out, "{LISTENING_PREFIX}{}", handle.addr()).context("writing to stdout")?;
    out.flush().context("writing to stdout")?;
    drop(out);
    while !stop.load(Ordering::SeqCst) {
        thread::sleep(Duration::from_millis(50));
    }
    info!("broker shutting down");
    handle.shutdown();
    Ok(())
}

pub fn cmd_worker(
    addr: Option<String>,
    id: Option<String>,
    config: Option<&Path>,
    run_id: Option<String>,
    give_up_secs: f64,
) -> Result<(), CmdError> {
    let config = config.map(load).transpose()?;
    let addr = addr
        .or_else(|| config.as_ref().map(|c| c.broker_addr.clone()))
        .unwrap_or_else(|| crate::config::DEFAULT_BROKER_ADDR.to_string());
    let run_id = run_id
        .or_else(|| config.as_ref().and_then(|c| c.run_id.clone()))
        .unwrap_or_else(|| DEFAULT_RUN_ID.to_string());
    if !give_up_secs.is_finite() || give_up_secs < 0.0 {
        return Err(CmdError::Usage(format!("--give-up-secs {give_up_secs} must be >= 0")));
    }
    let mut options = WorkerOptions::new(&addr, &run_id, &id.unwrap_or_else(default_worker_id));
    options.give_up_after = Some(Duration::from_secs_f64(give_up_secs));
    let stop = stop_flag()?;
    let stats = worker_run_loop(&options, &stop).map_err(|e| CmdError::Runtime(e.into()))?;
    info!(
        "worker {} done: {} evaluations, {} dead-lettered, {} reconnects",
        options.worker_id, stats.evaluations, stats.dead_lettered, stats.reconnects
    );
    Ok(())
}

pub fn cmd_master(
    config_path: &Path,
    mode: Option<ModeArg>,
    addr: Option<String>,
    run_id: Option<String>,
    report: Option<PathBuf>,
) -> Result<(), CmdError> {
    let config = load(config_path)?;
    let mode = match mode {
        Some(ModeArg::Sequential) => Mode::Sequential,
        Some(ModeArg::Distributed) => Mode::Distributed,
        None => config.mode,
    };
    let run_id = run_id
        .or_else(|| config.run_id.clone())
        .unwrap_or_else(|| DEFAULT_RUN_ID.to_string());
    let report_path = report.or_else(|| config.report_path.clone());
    let out: Box<dyn Write> = match &report_path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    let mut sink = CsvReport::new(out).context("writing report")?;
    // with the CSV on stdout, keep the summary off it
    let mut summary: Box<dyn Write> = match report_path {
        Some(_) => Box::new(io::stdout()),
        None => Box::new(io::stderr()),
    };

    let mut distributed = None;
    let mut sequential = None;
    let evaluator: &mut dyn Evaluator = match mode {
        Mode::Sequential => {
            sequential.insert(SequentialEvaluator::for_config(&config.ga).map_err(|e| CmdError::Usage(e.to_string()))?)
        }
        Mode::Distributed => {
            let addr = addr.unwrap_or_else(|| config.broker_addr.clone());
            let mut options = MasterOptions::from_config(&run_id, &config.ga);
            options.max_republish = config.max_republish;
            distributed.insert(
                DistributedEvaluator::connect(&addr, options)
                    .with_context(|| format!("connecting to broker at {addr}"))?,
            )
        }
    };

    let mut write_error = None;
    let result = run_ga_with(&config.ga, evaluator, |r| {
        if let Err(e) = sink.write(&GenerationRow::from(r)) {
            write_error.get_or_insert(e);
        }
    });
    if let Some(e) = write_error {
        return Err(anyhow!(e).context("writing report").into());
    }
    let result = result.map_err(|f| {
        anyhow!(
            "run failed after {} generations: {}",
            f.reports.len(),
            match &f.source {
                gaqueue_core::GaError::Evaluation(e) => e.to_string(),
                other => other.to_string(),
            }
        )
    })?;

    let w = &mut summary;
    let io = |e: io::Error| CmdError::Runtime(anyhow!(e).context("writing summary"));
    writeln!(
        w,
        "best fitness={} generation={} genome={}",
        result.best.fitness.expect("evaluated"),
        result.best_generation,
        result.best.genome
    )
    .map_err(io)?;
    if let Some(d) = distributed {
        let s = d.stats().clone();
        for (worker, n) in &s.per_worker {
            writeln!(w, "worker {worker} evaluations={n}").map_err(io)?;
        }
        writeln!(
            w,
            "responses accepted={} duplicates={} stale={} rejected={} republished={}",
            s.accepted, s.duplicates, s.stale, s.rejected, s.republished
        )
        .map_err(io)?;
        let _ = d.close();
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn local_options(
    config_path: &Path,
    config: &RunConfig,
    workers: Option<usize>,
    report: Option<PathBuf>,
    control_file: Option<PathBuf>,
) -> Result<LocalOptions, CmdError> {
    let exe = std::env::current_exe().context("locating executable")?;
    let run_id = std::env::var("RUN_ID")
        .ok()
        .or_else(|| config.run_id.clone())
        .unwrap_or_else(|| format!("local-{}", std::process::id()));
    Ok(LocalOptions {
        exe,
        config_path: config_path.to_path_buf(),
        worker_count: workers.unwrap_or(config.worker_count),
        run_id,
        report_path: report.or_else(|| config.report_path.clone()),
        control_file,
        master_to_stderr: false,
    })
}

pub fn cmd_local(
    config_path: &Path,
    workers: Option<usize>,
    report: Option<PathBuf>,
    control_file: Option<PathBuf>,
) -> Result<(), CmdError> {
    let config = load(config_path)?;
    let options = local_options(config_path, &config, workers, report, control_file)?;
    let signals = Signals::install().context("installing signal handlers")?;
    match run_local(options, &signals)? {
        0 => Ok(()),
        code => Err(anyhow!("master exited with status {code}").into()),
    }
}

pub fn cmd_bench(config_path: &Path, worker_counts: &[usize], out: &Path) -> Result<(), CmdError> {
    let config = load(config_path)?;
    if worker_counts.contains(&0) {
        return Err(CmdError::Usage("--workers entries must be >= 1".into()));
    }
    let signals = Signals::install().context("installing signal handlers")?;
    let scratch = tempfile::tempdir().context("creating scratch directory")?;
    let mut bench = BenchmarkReport {
        worker_counts: worker_counts.to_vec(),
        ..Default::default()
    };
    for &n in worker_counts {
        let report = scratch.path().join(format!("workers-{n}.csv"));
        let mut options = local_options(config_path, &config, Some(n), Some(report.clone()), None)?;
        options.run_id = format!("{}-w{n}", options.run_id);
        options.master_to_stderr = true;
        eprintln!("bench: {n} worker(s)");
        let outcome = run_local(options, &signals);
        if let Ok(rows) = read_rows(&report) {
            bench.add_run(n, &rows);
        }
        match outcome {
            Ok(0) => {}
            Ok(code) => {
                bench.failures.insert(n, format!("master exited with status {code}"));
            }
            Err(e) => {
                bench.failures.insert(n, format!("{e:#}"));
            }
        }
        if signals.terminate.load(Ordering::SeqCst) {
            break;
        }
    }
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    bench.write_rows(file).context("writing benchmark rows")?;
    bench.write_summary(io::stdout()).context("writing summary")?;
    if bench.is_partial() {
        return Err(anyhow!("benchmark incomplete; report marked partial").into());
    }
    Ok(())
}
