//! Acceptance suite. Runs every criterion in order and prints one PASS/FAIL
//! line per criterion; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::TcpStream;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use gaqueue::report::{read_rows, BenchmarkReport, GenerationRow};
use gaqueue_broker::sim::{check_fairness, run_script, single_consumer_order, Op};
use gaqueue_broker::wire::{decode_frame, encode_frame, CommandReader, FrameDecoder};
use gaqueue_broker::{BrokerServer, Command as Wire, Session};
use gaqueue_core::{
    crossover, mutate, run_ga, seeded_rng, GaConfig, GenerationReport, Genome, Individual, SequentialEvaluator,
};
use gaqueue_runtime::{
    request_queue, worker_run_loop, DistributedEvaluator, Fault, MasterOptions, RuntimeError, WorkerOptions,
    WorkerStats,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const BIN: &str = env!("CARGO_BIN_EXE_gaqueue");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn gaqueue() -> Command {
    let mut c = Command::new(BIN);
    c.env_remove("BROKER_ADDR").env_remove("RUN_ID").env_remove("WORKER_ID");
    c.stderr(Stdio::null());
    c
}

fn onemax(seed: u64) -> GaConfig {
    let mut c = GaConfig::for_problem("onemax", BTreeMap::new()).unwrap();
    c.genome_length = 32;
    c.mutation_rate = 1.0 / 32.0;
    c.population_size = 64;
    c.seed = seed;
    c
}

fn columns(rows: &[GenerationRow]) -> Vec<(u64, u64, u64)> {
    rows.iter()
        .map(|r| (r.generation, r.best.to_bits(), r.mean.to_bits()))
        .collect()
}

fn report_columns(rows: &[GenerationReport]) -> Vec<(u64, u64, u64)> {
    rows.iter()
        .map(|r| (r.generation, r.best_fitness.to_bits(), r.mean_fitness.to_bits()))
        .collect()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_cli(args: &[&str], config: &Path, report: &Path) -> Result<String, String> {
    let out = gaqueue()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--report")
        .arg(report)
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Sequential and distributed (1, 2, 4 workers) OneMax runs agree bit for bit.
fn equivalence() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "equiv.toml",
        "problem_id = \"onemax\"\ngenome_length = 32\npopulation_size = 64\nmax_generations = 30\nseed = 42\n",
    );
    let seq_csv = dir.path().join("seq.csv");
    run_cli(&["master"], &cfg, &seq_csv)?;
    let reference = read_rows(&seq_csv).map_err(|e| e.to_string())?;
    check!(reference.len() == 30, "sequential run wrote {} rows", reference.len());
    for n in [1, 2, 4] {
        let csv = dir.path().join(format!("dist-{n}.csv"));
        run_cli(&["local", "--workers", &n.to_string()], &cfg, &csv)?;
        let rows = read_rows(&csv).map_err(|e| e.to_string())?;
        check!(
            columns(&rows) == columns(&reference),
            "{n} workers diverged from the sequential run"
        );
    }
    let elapsed = started.elapsed();
    check!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("4 runs identical over 30 generations in {elapsed:.1?}"))
}

/// OneMax L=32 reaches 32 within 50 generations for at least 9 of 10 seeds.
fn solver_sanity() -> Outcome {
    let started = Instant::now();
    let mut solved = Vec::new();
    for seed in 0..10u64 {
        let mut cfg = onemax(seed);
        cfg.max_generations = 50;
        let result = run_ga(&cfg, &mut SequentialEvaluator::for_config(&cfg).unwrap()).map_err(|e| e.to_string())?;
        if let Some(r) = result.reports.iter().find(|r| r.best_fitness == 32.0) {
            solved.push((seed, r.generation));
        }
    }
    let elapsed = started.elapsed();
    check!(
        solved.len() >= 9,
        "only {} of 10 seeds solved: {solved:?}",
        solved.len()
    );
    check!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "{}/10 seeds solved (generations {:?})",
        solved.len(),
        solved.iter().map(|s| s.1).collect::<Vec<_>>()
    ))
}

/// delay 50 ms, pop 64, 5 generations: efficiency(4) >= 0.6 and T(1) per
/// generation >= 3.2 s.
fn speedup() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        "problem_id = \"onemax\"\npopulation_size = 64\nmax_generations = 5\nelite_count = 0\ndelay_ms = 50\nseed = 3\n",
    );
    let out = dir.path().join("bench.csv");
    let status = gaqueue()
        .args(["bench", "--workers", "1,4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    check!(status.success(), "bench exited {:?}", status.code());
    let mut report = BenchmarkReport {
        worker_counts: vec![1, 4],
        ..Default::default()
    };
    report.rows = BenchmarkReport::read_rows(&out).map_err(|e| e.to_string())?;
    let one: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.worker_count == 1)
        .map(|r| r.wall_ms)
        .collect();
    check!(one.len() == 5, "1-worker run has {} rows", one.len());
    let slowest_floor = one.iter().cloned().fold(f64::INFINITY, f64::min);
    check!(
        slowest_floor >= 3200.0,
        "1-worker generation took only {slowest_floor:.0} ms"
    );
    let efficiency = report.efficiency(4).ok_or("missing 4-worker rows")?;
    let elapsed = started.elapsed();
    check!(efficiency >= 0.6, "efficiency(4) = {efficiency:.3}");
    check!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "T(1)/gen = {:.0} ms, T(4)/gen = {:.0} ms, speedup(4) = {:.2}, efficiency(4) = {efficiency:.3}",
        report.total_ms(1).unwrap() / 5.0,
        report.total_ms(4).unwrap() / 5.0,
        report.speedup(4).unwrap()
    ))
}

struct Worker {
    stop: Arc<AtomicBool>,
    handle: thread::JoinHandle<Result<WorkerStats, RuntimeError>>,
}

fn spawn_worker(addr: &str, run_id: &str, id: &str, fault: Option<Fault>) -> Worker {
    let mut options = WorkerOptions::new(addr, run_id, id);
    options.fault = fault;
    options.poll = Duration::from_millis(20);
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    Worker {
        stop,
        handle: thread::spawn(move || worker_run_loop(&options, &flag)),
    }
}

impl Worker {
    fn finish(self) -> WorkerStats {
        self.stop.store(true, Ordering::SeqCst);
        self.handle.join().unwrap().unwrap()
    }
}

fn wait_for_consumers(session: &Session, run_id: &str, n: usize) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while session
        .stats(&request_queue(run_id))
        .map(|s| s.consumer_count)
        .unwrap_or(0)
        < n
    {
        assert!(Instant::now() < deadline, "workers did not subscribe");
        thread::sleep(Duration::from_millis(5));
    }
}

/// One of two workers is killed mid-generation; the run finishes with the
/// sequential trajectory. Repeated 20 times with different kill points.
fn fault_tolerance() -> Outcome {
    let mut cfg = onemax(17);
    cfg.max_generations = 10;
    let reference = run_ga(&cfg, &mut SequentialEvaluator::for_config(&cfg).unwrap()).unwrap();
    let mut redelivery = 0;
    for rep in 0..20u64 {
        let server = BrokerServer::bind("127.0.0.1:0").unwrap().spawn().unwrap();
        let addr = server.addr().to_string();
        let run_id = format!("fault{rep}");
        let probe = Session::connect(addr.as_str(), "probe").unwrap();
        // kill points spread over generations 0..9, never on a boundary
        let after = 5 + rep * 13;
        let victim = spawn_worker(&addr, &run_id, "victim", Some(Fault::CrashBeforeReply { after }));
        wait_for_consumers(&probe, &run_id, 1);
        let survivor = spawn_worker(&addr, &run_id, "survivor", None);
        wait_for_consumers(&probe, &run_id, 2);
        let mut master = DistributedEvaluator::connect(&addr, MasterOptions::from_config(&run_id, &cfg)).unwrap();
        let result = run_ga(&cfg, &mut master).map_err(|e| format!("repetition {rep}: {e}"))?;
        check!(
            report_columns(&result.reports) == report_columns(&reference.reports),
            "repetition {rep}: trajectory diverged"
        );
        check!(
            result.best == reference.best,
            "repetition {rep}: best individual differs"
        );
        let victim_stats = victim.handle.join().unwrap().map_err(|e| e.to_string())?;
        check!(victim_stats.crashed, "repetition {rep}: fault did not fire");
        survivor.finish();
        redelivery += result
            .reports
            .iter()
            .map(|r| r.duplicate_responses + r.republished_requests)
            .sum::<u64>();
    }
    Ok(format!(
        "20/20 runs matched the sequential trajectory ({redelivery} duplicates+republishes in total)"
    ))
}

/// A second worker joins at generation 3 through the orchestrator's signal
/// and serves requests; the trajectory matches the 1-worker run.
fn runtime_scaling() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "scale.toml",
        "problem_id = \"onemax\"\npopulation_size = 64\nmax_generations = 8\ndelay_ms = 10\nseed = 23\nworker_count = 1\n",
    );
    let base_csv = dir.path().join("one.csv");
    run_cli(&["local"], &cfg, &base_csv)?;
    let baseline = read_rows(&base_csv).map_err(|e| e.to_string())?;

    let csv = dir.path().join("grow.csv");
    let child = gaqueue()
        .args(["local", "--config"])
        .arg(&cfg)
        .arg("--report")
        .arg(&csv)
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(60);
    while read_rows(&csv).map(|r| r.len()).unwrap_or(0) < 3 {
        check!(Instant::now() < deadline, "run never reached generation 3");
        thread::sleep(Duration::from_millis(10));
    }
    // SAFETY: signalling our own child process.
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGUSR1);
    }
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    check!(out.status.success(), "local exited {:?}", out.status.code());
    let stdout = String::from_utf8_lossy(&out.stdout);
    check!(
        stdout.contains("added worker local-worker-2"),
        "no worker was added:\n{stdout}"
    );
    let late: u64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("worker local-worker-2 evaluations="))
        .ok_or_else(|| format!("late worker missing from registry:\n{stdout}"))?
        .parse()
        .map_err(|e| format!("{e}"))?;
    check!(late >= 1, "late worker evaluated nothing");
    let rows = read_rows(&csv).map_err(|e| e.to_string())?;
    check!(
        columns(&rows) == columns(&baseline),
        "trajectory changed after adding a worker"
    );
    Ok(format!(
        "late worker evaluated {late} individuals; trajectory unchanged over {} generations",
        rows.len()
    ))
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => (0..2usize, 1..4u32).prop_map(|(queue, prefetch)| Op::Subscribe { queue, prefetch }),
        5 => (0..2usize).prop_map(|queue| Op::Publish { queue }),
        5 => any::<usize>().prop_map(|pick| Op::Ack { pick }),
        1 => any::<usize>().prop_map(|pick| Op::Disconnect { pick }),
        1 => any::<usize>().prop_map(|pick| Op::BogusAck { pick }),
    ]
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Randomized broker simulations: accounting, prefetch, FIFO, fairness.
fn broker_properties() -> Outcome {
    runner(10_000)
        .run(&prop::collection::vec(op(), 1..120), |ops| {
            run_script(&ops).map_err(TestCaseError::fail)
        })
        .map_err(|e| format!("accounting: {e}"))?;
    runner(2_000)
        .run(&(1usize..200, 1u32..8, any::<bool>()), |(n, prefetch, early)| {
            single_consumer_order(n, prefetch, early).map_err(TestCaseError::fail)
        })
        .map_err(|e| format!("fifo: {e}"))?;
    runner(2_000)
        .run(&(0usize..300, 1usize..9), |(n, k)| {
            check_fairness(n, k).map_err(TestCaseError::fail)
        })
        .map_err(|e| format!("fairness: {e}"))?;
    Ok("10000 operation sequences, 2000 FIFO and 2000 fairness cases".into())
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![Just(String::new()), "[a-z.:0-9]{1,12}", any::<String>()]
}

fn command() -> impl Strategy<Value = Wire> {
    let body = prop::collection::vec(any::<u8>(), 0..64);
    prop_oneof![
        (text(), any::<u32>()).prop_map(|(role, protocol_version)| Wire::Hello { role, protocol_version }),
        text().prop_map(|queue| Wire::Declare { queue }),
        (text(), body.clone(), text(), prop::option::of(text())).prop_map(|(queue, body, correlation_id, reply_to)| {
            Wire::Publish {
                queue,
                body,
                correlation_id,
                reply_to,
            }
        }),
        (text(), text(), any::<u32>()).prop_map(|(queue, consumer_id, prefetch)| Wire::Subscribe {
            queue,
            consumer_id,
            prefetch
        }),
        any::<u64>().prop_map(|delivery_tag| Wire::Ack { delivery_tag }),
        (
            text(),
            text(),
            any::<u64>(),
            body,
            text(),
            prop::option::of(text()),
            any::<bool>()
        )
            .prop_map(
                |(queue, consumer_id, delivery_tag, body, correlation_id, reply_to, redelivered)| Wire::Deliver {
                    queue,
                    consumer_id,
                    delivery_tag,
                    body,
                    correlation_id,
                    reply_to,
                    redelivered
                }
            ),
        Just(Wire::Ok),
        (text(), text()).prop_map(|(code, message)| Wire::Err { code, message }),
        text().prop_map(|queue| Wire::Stats { queue }),
        (text(), any::<u64>(), any::<u64>(), any::<u64>()).prop_map(
            |(queue, depth, consumer_count, in_flight_total)| {
                Wire::StatsReply {
                    queue,
                    depth,
                    consumer_count,
                    in_flight_total,
                }
            }
        ),
        Just(Wire::Close),
    ]
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut f = (payload.len() as u32).to_be_bytes().to_vec();
    f.extend(payload);
    f
}

/// Sends `bytes` (optionally after a handshake) and requires ERR then close.
fn expect_err_then_close(addr: &str, handshake: bool, bytes: &[u8]) -> Result<String, String> {
    let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut reader = CommandReader::new(s.try_clone().unwrap());
    if handshake {
        let hello = Wire::Hello {
            role: "acceptance".into(),
            protocol_version: 1,
        };
        s.write_all(&encode_frame(&hello).unwrap()).map_err(|e| e.to_string())?;
        check!(
            reader.read_command().ok().flatten() == Some(Wire::Ok),
            "handshake refused"
        );
    }
    s.write_all(bytes).map_err(|e| e.to_string())?;
    let code = match reader.read_command() {
        Ok(Some(Wire::Err { code, .. })) => code,
        other => return Err(format!("expected ERR, got {other:?}")),
    };
    check!(
        matches!(reader.read_command(), Ok(None) | Err(_)),
        "connection stayed open after ERR {code}"
    );
    Ok(code)
}

/// Wire round-trips under arbitrary chunking; malformed input gets ERR then
/// close and never takes the broker down.
fn wire_round_trip() -> Outcome {
    runner(1_000)
        .run(
            &(
                prop::collection::vec(command(), 1..6),
                prop::collection::vec(any::<prop::sample::Index>(), 0..8),
            ),
            |(cmds, cuts)| {
                let mut stream = Vec::new();
                for c in &cmds {
                    let f = encode_frame(c).unwrap();
                    let (decoded, used) = decode_frame(&f).unwrap().unwrap();
                    prop_assert_eq!(&decoded, c);
                    prop_assert_eq!(used, f.len());
                    prop_assert_eq!(encode_frame(&decoded).unwrap(), f.clone());
                    stream.extend(f);
                }
                let mut points: Vec<usize> = cuts.iter().map(|i| i.index(stream.len() + 1)).collect();
                points.extend([0, stream.len()]);
                points.sort();
                let mut dec = FrameDecoder::new();
                let mut out = Vec::new();
                for w in points.windows(2) {
                    dec.feed(&stream[w[0]..w[1]]);
                    while let Some(c) = dec.next_command().unwrap() {
                        out.push(c);
                    }
                }
                prop_assert_eq!(out, cmds);
                Ok(())
            },
        )
        .map_err(|e| format!("round trip: {e}"))?;

    let server = BrokerServer::bind("127.0.0.1:0").unwrap().spawn().unwrap();
    let addr = server.addr().to_string();
    let cases: Vec<(&str, Vec<u8>, bool, &str)> = vec![
        (
            "oversized frame",
            (17u32 << 20).to_be_bytes().to_vec(),
            true,
            "frame_too_large",
        ),
        ("invalid json", frame(b"{nope"), true, "malformed"),
        ("invalid utf-8", frame(&[0xff, 0xfe, 0xfd]), true, "malformed"),
        ("unknown op", frame(br#"{"op":"FLY"}"#), true, "bad_op"),
        ("missing field", frame(br#"{"op":"DECLARE"}"#), true, "malformed"),
        ("unknown field", frame(br#"{"op":"OK","queue":"q"}"#), true, "malformed"),
        (
            "bad base64",
            frame(br#"{"op":"PUBLISH","queue":"q","body":"***","correlation_id":"c","reply_to":null}"#),
            true,
            "malformed",
        ),
        ("server-only op", frame(br#"{"op":"OK"}"#), true, "bad_op"),
        (
            "unknown delivery tag",
            frame(br#"{"op":"ACK","delivery_tag":7}"#),
            true,
            "unknown_tag",
        ),
        (
            "no handshake",
            frame(br#"{"op":"DECLARE","queue":"q"}"#),
            false,
            "no_handshake",
        ),
        (
            "wrong version",
            frame(br#"{"op":"HELLO","role":"x","protocol_version":2}"#),
            false,
            "version",
        ),
    ];
    for (name, bytes, handshake, want) in &cases {
        let got = expect_err_then_close(&addr, *handshake, bytes).map_err(|e| format!("{name}: {e}"))?;
        check!(got == *want, "{name}: expected {want}, got {got}");
    }
    // random non-command payloads after a valid handshake
    let random_err = std::cell::Cell::new(0);
    runner(200)
        .run(&prop::collection::vec(any::<u8>(), 0..64), |junk| {
            let payload = [b"{\"op\":".as_slice(), &junk].concat();
            match expect_err_then_close(&addr, true, &frame(&payload)) {
                Ok(_) => {
                    random_err.set(random_err.get() + 1);
                    Ok(())
                }
                Err(e) => Err(TestCaseError::fail(e)),
            }
        })
        .map_err(|e| format!("random payloads: {e}"))?;
    let s = Session::connect(addr.as_str(), "after").map_err(|e| e.to_string())?;
    s.declare("still.alive")
        .map_err(|e| format!("broker unusable after malformed input: {e}"))?;
    Ok(format!(
        "1000 round-trip cases; {} fixed and {} random malformed inputs got ERR then close",
        cases.len(),
        random_err.get()
    ))
}

/// Mutation flip mean within 20% of L x rate over 10 000 trials; crossover
/// conserves bits on all of 1000 cases.
fn operator_statistics() -> Outcome {
    let len = 64;
    let mut cfg = onemax(1);
    cfg.genome_length = len;
    cfg.mutation_rate = 1.0 / len as f64;
    let expected = len as f64 * cfg.mutation_rate;
    let mut rng = seeded_rng(2024);
    let zero = Genome::Bits(vec![false; len]);
    let trials = 10_000;
    let flips: usize = (0..trials)
        .map(|_| match mutate(zero.clone(), &cfg, &mut rng) {
            Genome::Bits(b) => b.iter().filter(|x| **x).count(),
            Genome::Reals(_) => unreachable!(),
        })
        .sum();
    let mean = flips as f64 / trials as f64;
    check!(
        (mean - expected).abs() <= 0.2 * expected,
        "mean flips {mean} vs expected {expected}"
    );

    let ones = |g: &Genome| match g {
        Genome::Bits(b) => b.iter().filter(|x| **x).count(),
        Genome::Reals(_) => unreachable!(),
    };
    let strategy = (2usize..96).prop_flat_map(|l| {
        (
            prop::collection::vec(any::<bool>(), l),
            prop::collection::vec(any::<bool>(), l),
        )
    });
    runner(1_000)
        .run(&(strategy, any::<u64>()), |((a, b), seed)| {
            let mut c = onemax(0);
            c.genome_length = a.len();
            c.crossover_rate = 1.0;
            let pa = Individual::new(0, Genome::Bits(a));
            let pb = Individual::new(1, Genome::Bits(b));
            let (c1, c2) = crossover(&pa, &pb, &c, &mut seeded_rng(seed)).unwrap();
            prop_assert_eq!(ones(&c1) + ones(&c2), ones(&pa.genome) + ones(&pb.genome));
            Ok(())
        })
        .map_err(|e| format!("crossover: {e}"))?;
    Ok(format!(
        "mean flips {mean:.4} (expected {expected}); 1000/1000 crossover cases conserve bits"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("sequential/distributed equivalence", equivalence),
        ("solver sanity", solver_sanity),
        ("speedup", speedup),
        ("fault tolerance", fault_tolerance),
        ("runtime scaling", runtime_scaling),
        ("broker property suite", broker_properties),
        ("wire round-trip", wire_round_trip),
        ("operator statistics", operator_statistics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
