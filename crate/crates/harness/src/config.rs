//! Run configuration files (TOML, strict keys).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gaqueue_core::{Bounds, ConfigError, GaConfig, GenomeKind};
use gaqueue_runtime::{correlation::check_run_id, DEFAULT_MAX_REPUBLISH};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BROKER_ADDR: &str = "127.0.0.1:5672";
pub const DEFAULT_RUN_ID: &str = "ga";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[serde(alias = "sequential")]
    Sequential,
    #[serde(alias = "distributed")]
    Distributed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "SEQUENTIAL",
            Mode::Distributed => "DISTRIBUTED",
        })
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ga: GaConfig,
    pub mode: Mode,
    pub broker_addr: String,
    pub worker_count: usize,
    /// Workers are provided outside this config (e.g. started by hand).
    pub external_workers: bool,
    pub report_path: Option<PathBuf>,
    pub run_id: Option<String>,
    pub max_republish: u32,
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(#[from] ConfigError),
    #[error("invalid config: {field} {message}")]
    Field { field: &'static str, message: String },
}

/// File layout. Every key is optional except `problem_id`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    problem_id: String,
    delay_ms: Option<f64>,
    population_size: Option<usize>,
    genome_kind: Option<GenomeKind>,
    genome_length: Option<usize>,
    max_generations: Option<u64>,
    crossover_rate: Option<f64>,
    mutation_rate: Option<f64>,
    tournament_size: Option<usize>,
    elite_count: Option<usize>,
    seed: Option<u64>,
    generation_timeout_ms: Option<u64>,
    maximize: Option<bool>,
    broker_addr: Option<String>,
    worker_count: Option<usize>,
    external_workers: Option<bool>,
    report_path: Option<PathBuf>,
    run_id: Option<String>,
    max_republish: Option<u32>,
    bounds: Option<Bounds>,
    problem_params: Option<BTreeMap<String, f64>>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigFileError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigFileError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigFileError::Syntax(e.to_string()))?;
    resolve(raw)
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigFileError {
    ConfigFileError::Field {
        field,
        message: message.into(),
    }
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigFileError> {
    let mut params = raw.problem_params.unwrap_or_default();
    if let Some(delay) = raw.delay_ms {
        match params.get("delay_ms") {
            Some(p) if *p != delay => {
                return Err(field(
                    "delay_ms",
                    format!("{delay} conflicts with problem_params.delay_ms = {p}"),
                ))
            }
            _ => {
                params.insert("delay_ms".to_string(), delay);
            }
        }
    }
    let mut ga = GaConfig::for_problem(&raw.problem_id, params)?;
    if let Some(v) = raw.population_size {
        ga.population_size = v;
    }
    if let Some(v) = raw.genome_kind {
        ga.genome_kind = v;
    }
    if let Some(v) = raw.genome_length {
        ga.genome_length = v;
        ga.mutation_rate = if v > 0 { 1.0 / v as f64 } else { 0.0 };
    }
    if let Some(v) = raw.max_generations {
        ga.max_generations = v;
    }
    if let Some(v) = raw.crossover_rate {
        ga.crossover_rate = v;
    }
    if let Some(v) = raw.mutation_rate {
        ga.mutation_rate = v;
    }
    if let Some(v) = raw.tournament_size {
        ga.tournament_size = v;
    }
    if let Some(v) = raw.elite_count {
        ga.elite_count = v;
    }
    if let Some(v) = raw.seed {
        ga.seed = v;
    }
    if let Some(v) = raw.generation_timeout_ms {
        if v == 0 {
            return Err(field("generation_timeout_ms", "0 must be >= 1"));
        }
        ga.generation_timeout = Duration::from_millis(v);
    }
    if let Some(v) = raw.maximize {
        ga.maximize = v;
    }
    if raw.bounds.is_some() {
        ga.bounds = raw.bounds;
    }
    ga.validate()?;

    let mode = raw.mode.unwrap_or(Mode::Sequential);
    let worker_count = raw.worker_count.unwrap_or(1);
    let external_workers = raw.external_workers.unwrap_or(false);
    if mode == Mode::Distributed && worker_count == 0 && !external_workers {
        return Err(field(
            "worker_count",
            "0 must be >= 1 in DISTRIBUTED mode unless external_workers = true",
        ));
    }
    let broker_addr = raw.broker_addr.unwrap_or_else(|| DEFAULT_BROKER_ADDR.to_string());
    if broker_addr.trim().is_empty() {
        return Err(field("broker_addr", "must not be empty"));
    }
    if let Some(id) = &raw.run_id {
        check_run_id(id).map_err(|e| field("run_id", e.to_string()))?;
    }
    Ok(RunConfig {
        ga,
        mode,
        broker_addr,
        worker_count,
        external_workers,
        report_path: raw.report_path,
        run_id: raw.run_id,
        max_republish: raw.max_republish.unwrap_or(DEFAULT_MAX_REPUBLISH),
    })
}

impl RunConfig {
    /// Writes every key explicitly, so defaults cannot drift between writer
    /// and reader.
    pub fn emit(&self) -> Result<String, ConfigFileError> {
        let ga = &self.ga;
        let timeout_ms = ga.generation_timeout.as_millis();
        if Duration::from_millis(timeout_ms as u64) != ga.generation_timeout {
            return Err(field("generation_timeout_ms", "is not a whole number of milliseconds"));
        }
        if ga.seed > i64::MAX as u64 {
            return Err(field("seed", format!("{} does not fit a TOML integer", ga.seed)));
        }
        let raw = RawConfig {
            mode: Some(self.mode),
            problem_id: ga.problem_id.clone(),
            delay_ms: None,
            population_size: Some(ga.population_size),
            genome_kind: Some(ga.genome_kind),
            genome_length: Some(ga.genome_length),
            max_generations: Some(ga.max_generations),
            crossover_rate: Some(ga.crossover_rate),
            mutation_rate: Some(ga.mutation_rate),
            tournament_size: Some(ga.tournament_size),
            elite_count: Some(ga.elite_count),
            seed: Some(ga.seed),
            generation_timeout_ms: Some(timeout_ms as u64),
            maximize: Some(ga.maximize),
            broker_addr: Some(self.broker_addr.clone()),
            worker_count: Some(self.worker_count),
            external_workers: Some(self.external_workers),
            report_path: self.report_path.clone(),
            run_id: self.run_id.clone(),
            max_republish: Some(self.max_republish),
            bounds: ga.bounds,
            problem_params: Some(ga.problem_params.clone()),
        };
        toml::to_string(&raw).map_err(|e| ConfigFileError::Syntax(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), ConfigFileError> {
        fs::write(path, self.emit()?).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn delay(&self) -> Duration {
        let ms = self.ga.problem_params.get("delay_ms").copied().unwrap_or(0.0);
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}
