//! Command implementations behind the `randsum` binary.
//!
//! Each command reads and writes files and returns the process exit code.
//! Errors returned as `Err` are input errors (exit code [`EXIT_INPUT`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

mod compare;
mod fit;
mod ingest;
mod simulate;
mod spec;
mod study;

pub use compare::{cmd_compare, rank_fits, RankedModel};
pub use fit::{cmd_fit, effects_rows, EffectRow, FitOutput};
pub use ingest::{cmd_ingest, IngestArgs};
pub use simulate::{cmd_simulate, SimulationManifest};
pub use spec::{load_panel, ModelSpec};
pub use study::{cmd_mc_study, run_study, McConfig, McSummary, ReplicateOutcome, StudyCell};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;
pub const EXIT_STUDY_FAILURE: i32 = 4;

/// Environment variable overriding the seed of simulation configs.
pub const SEED_ENV: &str = "RANDSUM_SEED";

pub(crate) fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => {
            s.trim().parse().map(Some).with_context(|| format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))
        }
        Err(_) => Ok(None),
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `panel.csv` → `panel.csv.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Empty string for missing values, shortest round-trip form otherwise.
pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
