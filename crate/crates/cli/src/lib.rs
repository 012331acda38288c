//! Config parsing, dispatch and reporting behind the `expeuler` binary.

pub mod config;
pub mod experiments;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use config::{ExperimentConfig, Plan};
use report::{config_hash, write_text, Report};

/// Environment variable consulted for the seed when no flag is given.
pub const SEED_ENV: &str = "EXPEULER_SEED";

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const TOLERANCE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<expeuler::Error> for Failure {
    fn from(e: expeuler::Error) -> Self {
        use expeuler::Error::*;
        let code = match e {
            Divergence { .. } | DivergenceRate { .. } | Evaluation { .. } => exit::DIVERGENCE,
            InvalidInput(_) | InvalidSpec(_) | DimensionMismatch { .. } => exit::PRECONDITION,
        };
        Self::new(code, e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Seed precedence: flag, then environment, then config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::new(exit::PARSE, format!("{SEED_ENV} = {v:?} is not an unsigned integer"))),
        None => Ok(config),
    }
}

pub struct Loaded {
    pub config: ExperimentConfig,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::new(exit::PARSE, format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Failure::new(exit::PARSE, format!("{}: {e}", path.display())))?;
    let config = config::parse(text).map_err(|e| Failure::new(exit::PARSE, format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        config,
        hash: config_hash(&bytes),
    })
}

/// Validates a config without simulating.
pub fn check(path: &Path) -> Result<Plan, Failure> {
    let loaded = load(path)?;
    loaded
        .config
        .plan()
        .map_err(|p| Failure::new(exit::PRECONDITION, format!("precondition violated: {p}")))
}

pub struct RunResult {
    pub code: i32,
    pub report: Report,
    pub report_path: PathBuf,
    pub csv_path: PathBuf,
}

pub fn run(path: &Path, overrides: &Overrides) -> Result<RunResult, Failure> {
    let env_seed = std::env::var(SEED_ENV).ok();
    run_with_env(path, overrides, env_seed.as_deref())
}

pub fn run_with_env(path: &Path, overrides: &Overrides, env_seed: Option<&str>) -> Result<RunResult, Failure> {
    let Loaded { mut config, hash } = load(path)?;
    let seed = resolve_seed(overrides.seed, env_seed, config.noise.seed)?;
    config.noise.seed = seed;
    let plan = config
        .plan()
        .map_err(|p| Failure::new(exit::PRECONDITION, format!("precondition violated: {p}")))?;
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| config.run.output.clone())
        .unwrap_or_else(|| PathBuf::from("reports"));

    let outcome = match overrides.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Failure::new(exit::PRECONDITION, format!("worker pool: {e}")))?;
            pool.install(|| experiments::execute(&config, plan, seed))
        }
        None => experiments::execute(&config, plan, seed),
    }?;

    let name = config.experiment.name();
    let timestamp = chrono::Utc::now().to_rfc3339();
    let io = |e: std::io::Error| Failure::new(exit::PRECONDITION, format!("cannot write to {}: {e}", out_dir.display()));
    let stream_text = match outcome.streams {
        Some(s) => format!("streams {}..{}", s.first, s.first + s.count),
        None => "no streams".to_string(),
    };
    let provenance = format!("experiment {name}, seed {seed}, {stream_text}, config sha256 {hash}");
    let csv_path = write_text(&out_dir.join(format!("{name}.csv")), &outcome.table.to_csv(&timestamp, &provenance)).map_err(io)?;
    let mut files = vec![file_name(&csv_path)];
    for (label, set) in &outcome.samples {
        let p = out_dir.join(format!("{name}-{label}.txt"));
        set.write(&p)?;
        files.push(file_name(&p));
    }

    let mut report = Report {
        experiment: name.to_string(),
        generated: timestamp,
        config: serde_json::to_value(&config).unwrap_or(serde_json::Value::Null),
        config_hash: hash,
        seed,
        streams: outcome.streams,
        aborted: outcome.aborted,
        metrics: outcome.metrics,
        checks: outcome.checks,
        verdict: "PASS",
        csv_columns: outcome.table.columns.clone(),
        files,
    };
    if !report.passed() {
        report.verdict = "FAIL";
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let report_path = write_text(&out_dir.join(format!("{name}.json")), &json).map_err(io)?;
    Ok(RunResult {
        code: if report.passed() { exit::SUCCESS } else { exit::TOLERANCE },
        report,
        report_path,
        csv_path,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("5"), 7).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some("5"), 7).unwrap(), 5);
        assert_eq!(resolve_seed(None, None, 7).unwrap(), 7);
        assert_eq!(resolve_seed(None, Some("x"), 7).unwrap_err().code, exit::PARSE);
    }

    #[test]
    fn error_codes() {
        let f: Failure = expeuler::Error::DivergenceRate {
            aborted: 2,
            samples: 10,
            limit: 0,
        }
        .into();
        assert_eq!(f.code, exit::DIVERGENCE);
        let f: Failure = expeuler::Error::InvalidInput("x".into()).into();
        assert_eq!(f.code, exit::PRECONDITION);
    }
}
