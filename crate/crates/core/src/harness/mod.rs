//! Experiment runner: beta/seed sweeps with hierarchical seeding, one CSV
//! and one manifest per cell, and bounded cell parallelism. Cells share no
//! mutable state, so results are independent of scheduling.

pub mod config;
pub mod csvio;
pub mod seeding;
pub mod training;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::maze::{map_sha256, CANONICAL_MAP};
use crate::envs::EnvError;
use crate::pipeline::{PipelineError, PipelineMode};

pub use config::{AlgoKind, EnvKind, ExperimentConfig, RecognizerKind};
pub use training::{run_cell, METRIC_OBSERVER};

/// Environment variable capping how many cells train in parallel.
pub const THREADS_ENV_VAR: &str = "LEGIBLE_MARL_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Written before any training step; the completion flag is flipped once the
/// cell's CSV is fully on disk, so an interrupted run is recognizable by
/// `completed: false`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub beta: f64,
    pub seed: u64,
    pub map_sha256: String,
    pub code_version: String,
    pub started_unix: u64,
    pub completed: bool,
}

impl RunManifest {
    fn new(cfg: &ExperimentConfig, beta: f64, seed: u64) -> Result<Self, HarnessError> {
        let map_text = match &cfg.map_file {
            Some(path) => fs::read_to_string(path)?,
            None => CANONICAL_MAP.to_string(),
        };
        // Echo the fully resolved config so every defaulted constant is on
        // the record.
        let mut resolved = cfg.clone();
        resolved.max_steps = Some(cfg.resolved_max_steps());
        resolved.recognizer = Some(cfg.resolved_recognizer());
        if cfg.env == EnvKind::SimpleNavigation {
            resolved.physics = Some(cfg.resolved_physics());
        }
        Ok(Self {
            config: resolved,
            beta,
            seed,
            map_sha256: map_sha256(&map_text),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            completed: false,
        })
    }

    fn write(&self, path: &PathBuf) -> Result<(), HarnessError> {
        let mut file = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CellSummary {
    pub beta: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub rows: usize,
}

/// Cell parallelism cap: `LEGIBLE_MARL_THREADS` when set, otherwise the
/// machine's available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs every (beta, seed) cell of the sweep: fresh environment, learners,
/// and recognizers per cell, one metrics CSV and one manifest per cell.
/// Within a cell execution is strictly sequential and deterministic; cells
/// run in parallel up to the thread cap.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<CellSummary>, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let cells: Vec<(f64, u64)> = cfg
        .betas
        .iter()
        .flat_map(|&b| cfg.seeds.iter().map(move |&s| (b, s)))
        .collect();

    let workers = thread_cap().min(cells.len()).max(1);
    let next = AtomicUsize::new(0);
    let summaries: Mutex<Vec<CellSummary>> = Mutex::new(Vec::with_capacity(cells.len()));
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= cells.len() || failure.lock().unwrap().is_some() {
                    return;
                }
                let (beta, seed) = cells[idx];
                match run_cell_to_disk(cfg, beta, seed) {
                    Ok(summary) => summaries.lock().unwrap().push(summary),
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut out = summaries.into_inner().unwrap();
    out.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.seed.cmp(&b.seed)));
    Ok(out)
}

/// Trains one cell and writes `metrics.csv` + `manifest.json` into its
/// directory. Rows are flushed as they are produced so an interrupt leaves a
/// readable partial CSV behind.
pub fn run_cell_to_disk(
    cfg: &ExperimentConfig,
    beta: f64,
    seed: u64,
) -> Result<CellSummary, HarnessError> {
    let dir = cfg.cell_dir(beta, seed);
    fs::create_dir_all(&dir)?;
    let manifest_path = dir.join("manifest.json");
    let mut manifest = RunManifest::new(cfg, beta, seed)?;
    manifest.write(&manifest_path)?;

    let csv_path = dir.join("metrics.csv");
    let mut file = std::io::BufWriter::new(fs::File::create(&csv_path)?);
    writeln!(file, "{}", csvio::CSV_HEADER)?;
    let rows = training::run_cell(cfg, beta, seed, PipelineMode::Shaped, |row, _record| {
        csvio::write_row(&mut file, row)?;
        file.flush()?;
        Ok(())
    })?;
    file.flush()?;
    drop(file);

    manifest.completed = true;
    manifest.write(&manifest_path)?;
    Ok(CellSummary {
        beta,
        seed,
        dir,
        rows: rows.len(),
    })
}
