//! Replication batches, result files and run comparison for `aqmsim`.

pub mod compare;
pub mod manifest;
pub mod output;

use std::fs;

use aqmsim_core::netsim::{self, RunResult};
use rayon::prelude::*;
use thiserror::Error;

pub use compare::compare;
pub use manifest::{load_scenario, Emit, PresetChoice, RunManifest};
pub use output::Aggregate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runs are not comparable: {0} differ")]
    Shape(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Shape(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))
}

/// Runs every replication of `manifest` without writing anything.
pub fn simulate(manifest: &RunManifest) -> Result<Vec<RunResult>, CliError> {
    manifest.validate()?;
    pool(manifest.jobs)?.install(|| {
        (0..manifest.replications)
            .into_par_iter()
            .map(|i| {
                netsim::run(&manifest.scenario_for(i)).map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    })
}

/// Runs every replication, writes per-replication files as each finishes,
/// then writes `aggregate.json` and `manifest.json`.
pub fn run(manifest: &RunManifest) -> Result<Aggregate, CliError> {
    manifest.validate()?;
    let root = &manifest.output_dir;
    fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
    let results: Vec<RunResult> = pool(manifest.jobs)?.install(|| {
        (0..manifest.replications)
            .into_par_iter()
            .map(|i| {
                let cfg = manifest.scenario_for(i);
                let result = netsim::run(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
                output::write_replication(root, &cfg, &result, manifest.emit)?;
                Ok(result)
            })
            .collect::<Result<_, CliError>>()
    })?;
    let seeds = (0..manifest.replications).map(|i| manifest.seed_for(i)).collect();
    let refs: Vec<&RunResult> = results.iter().collect();
    let aggregate = Aggregate::build(manifest.scenario_for(0), seeds, &refs);
    output::write_json(&root.join(output::AGGREGATE_FILE), &aggregate)?;
    output::write_json(&root.join(output::MANIFEST_FILE), manifest)?;
    Ok(aggregate)
}
