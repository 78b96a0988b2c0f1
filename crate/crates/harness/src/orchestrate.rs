//! Local multi-process cluster: one broker, N workers and a master, each a
//! child process running this same executable.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use gaqueue_broker::Session;
use gaqueue_runtime::request_queue;
use log::{info, warn};

/// First line a broker prints on stdout once it accepts connections.
pub const LISTENING_PREFIX: &str = "gaqueue broker listening on ";

const STARTUP_TIMEOUT: Duration = Duration::from_secs(15);
const GRACE: Duration = Duration::from_secs(5);
const POLL: Duration = Duration::from_millis(20);

/// Flags set from signal handlers (or directly, in tests).
#[derive(Debug, Clone, Default)]
pub struct Signals {
    pub add_worker: Arc<AtomicBool>,
    pub terminate: Arc<AtomicBool>,
}

impl Signals {
    /// SIGUSR1 adds a worker; SIGTERM and SIGINT stop the run.
    pub fn install() -> std::io::Result<Signals> {
        let s = Signals::default();
        signal_hook::flag::register(signal_hook::consts::SIGUSR1, s.add_worker.clone())?;
        for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
            signal_hook::flag::register(sig, s.terminate.clone())?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct LocalOptions {
    /// Executable providing the `broker`, `worker` and `master` subcommands.
    pub exe: PathBuf,
    pub config_path: PathBuf,
    pub worker_count: usize,
    pub run_id: String,
    pub report_path: Option<PathBuf>,
    /// When this file appears it is removed and one worker is added.
    pub control_file: Option<PathBuf>,
    /// Send the master's stdout to our stderr, keeping our stdout clean.
    pub master_to_stderr: bool,
}

fn child_command(exe: &Path) -> Command {
    let mut cmd = Command::new(exe);
    cmd.stdin(Stdio::null());
    #[cfg(target_os = "linux")]
    {
        use std::os::unix::process::CommandExt;
        // SAFETY: prctl is async-signal-safe and touches no parent state.
        unsafe {
            cmd.pre_exec(|| {
                libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGTERM);
                Ok(())
            });
        }
    }
    cmd
}

/// SIGTERM, then SIGKILL after `grace`. Always reaps.
fn terminate(child: &mut Child, grace: Duration) {
    if let Ok(Some(_)) = child.try_wait() {
        return;
    }
    // SAFETY: plain kill(2) on a pid we spawned and have not yet reaped.
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGTERM);
    }
    let deadline = Instant::now() + grace;
    while Instant::now() < deadline {
        if let Ok(Some(_)) = child.try_wait() {
            return;
        }
        thread::sleep(POLL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

pub struct LocalCluster {
    options: LocalOptions,
    broker: Option<Child>,
    broker_addr: String,
    workers: Vec<(String, Child)>,
    master: Option<Child>,
}

impl LocalCluster {
    pub fn start_broker(options: LocalOptions) -> Result<LocalCluster> {
        let mut broker = child_command(&options.exe)
            .args(["broker", "--addr", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .spawn()
            .context("spawning broker")?;
        let stdout = broker.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut lines = BufReader::new(stdout).lines();
            if let Some(Ok(line)) = lines.next() {
                let _ = tx.send(line);
            }
            for _ in lines {}
        });
        let mut cluster = LocalCluster {
            options,
            broker: Some(broker),
            broker_addr: String::new(),
            workers: Vec::new(),
            master: None,
        };
        let line = rx
            .recv_timeout(STARTUP_TIMEOUT)
            .map_err(|_| anyhow!("broker did not report a listening address"))?;
        cluster.broker_addr = line
            .strip_prefix(LISTENING_PREFIX)
            .ok_or_else(|| anyhow!("unexpected broker output {line:?}"))?
            .trim()
            .to_string();
        info!("broker listening on {}", cluster.broker_addr);
        Ok(cluster)
    }

    pub fn broker_addr(&self) -> &str {
        &self.broker_addr
    }

    pub fn worker_ids(&self) -> Vec<String> {
        self.workers.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn spawn_worker(&mut self) -> Result<String> {
        let id = format!("local-worker-{}", self.workers.len() + 1);
        let child = child_command(&self.options.exe)
            .args(["worker", "--addr", &self.broker_addr, "--id", &id, "--config"])
            .arg(&self.options.config_path)
            .env("RUN_ID", &self.options.run_id)
            .spawn()
            .with_context(|| format!("spawning {id}"))?;
        info!("started {id} (pid {})", child.id());
        self.workers.push((id.clone(), child));
        Ok(id)
    }

    /// Blocks until `n` consumers are subscribed to the run's request queue.
    pub fn wait_for_consumers(&mut self, n: usize) -> Result<()> {
        let session = Session::connect(self.broker_addr.as_str(), "orchestrator")?;
        let queue = request_queue(&self.options.run_id);
        let deadline = Instant::now() + STARTUP_TIMEOUT;
        loop {
            let count = session.stats(&queue).map(|s| s.consumer_count).unwrap_or(0);
            if count >= n {
                break;
            }
            if Instant::now() >= deadline {
                bail!("only {count} of {n} workers subscribed within {STARTUP_TIMEOUT:?}");
            }
            for (id, child) in &mut self.workers {
                if let Some(status) = child.try_wait()? {
                    bail!("{id} exited during startup ({status})");
                }
            }
            thread::sleep(POLL);
        }
        let _ = session.close();
        Ok(())
    }

    pub fn spawn_master(&mut self) -> Result<()> {
        let mut cmd = child_command(&self.options.exe);
        cmd.args([
            "master",
            "--mode",
            "distributed",
            "--addr",
            &self.broker_addr,
            "--config",
        ])
        .arg(&self.options.config_path)
        .env("RUN_ID", &self.options.run_id);
        if let Some(report) = &self.options.report_path {
            cmd.arg("--report").arg(report);
        }
        if self.options.master_to_stderr {
            cmd.stdout(std::io::stderr());
        }
        self.master = Some(cmd.spawn().context("spawning master")?);
        Ok(())
    }

    /// Waits for the master, adding workers on request. Returns the master's
    /// exit status, or `None` if the run was interrupted.
    pub fn wait_master(&mut self, signals: &Signals) -> Result<Option<ExitStatus>> {
        loop {
            let master = self.master.as_mut().ok_or_else(|| anyhow!("master not started"))?;
            if let Some(status) = master.try_wait()? {
                return Ok(Some(status));
            }
            if signals.terminate.load(Ordering::SeqCst) {
                warn!("interrupted; tearing down");
                return Ok(None);
            }
            let mut add = signals.add_worker.swap(false, Ordering::SeqCst);
            if let Some(path) = &self.options.control_file {
                if fs::remove_file(path).is_ok() {
                    add = true;
                }
            }
            if add {
                let id = self.spawn_worker()?;
                println!("added worker {id}");
            }
            thread::sleep(POLL);
        }
    }

    /// Stops every child: master, then workers, then the broker.
    pub fn teardown(&mut self) {
        if let Some(mut m) = self.master.take() {
            terminate(&mut m, GRACE);
        }
        for (_, mut w) in self.workers.drain(..) {
            terminate(&mut w, GRACE);
        }
        if let Some(mut b) = self.broker.take() {
            terminate(&mut b, GRACE);
        }
    }
}

impl Drop for LocalCluster {
    fn drop(&mut self) {
        self.teardown();
    }
}

/// Full local run. Returns the master's exit code.
pub fn run_local(options: LocalOptions, signals: &Signals) -> Result<i32> {
    let workers = options.worker_count;
    let mut cluster = LocalCluster::start_broker(options)?;
    for _ in 0..workers {
        cluster.spawn_worker()?;
    }
    cluster.wait_for_consumers(workers)?;
    cluster.spawn_master()?;
    let status = cluster.wait_master(signals);
    cluster.teardown();
    match status? {
        Some(s) => Ok(s.code().unwrap_or(1)),
        None => bail!("run interrupted"),
    }
}
