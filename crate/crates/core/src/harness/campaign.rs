//! Runs every (task, variant, seed) combination of a campaign into a store.

use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use super::config::CampaignConfig;
use super::store::{write_records, Manifest, ManifestRun, RunKey, RunStatus, RUNS_DIR};
use crate::error::{Error, Result};
use crate::optimizer::{run_optimization, InvariantTally};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
    /// Invariant checks over every run in the store, resumed ones included.
    pub invariants: InvariantTally,
}

/// All run keys of `cfg` in manifest order.
pub fn run_keys(cfg: &CampaignConfig) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &task in &cfg.tasks {
        for &variant in &cfg.variants {
            for seed in cfg.seeds() {
                keys.push(RunKey {
                    task,
                    variant,
                    seed,
                });
            }
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

/// Executes the campaign. Runs already recorded in the store's manifest
/// (under the same config hash) are skipped; a manifest written for a
/// different configuration is an error. `threads = None` uses every core.
pub fn run_campaign(
    cfg: &CampaignConfig,
    store: &Path,
    threads: Option<usize>,
) -> Result<CampaignSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(store.join(RUNS_DIR))?;
    let hash = cfg.hash();
    let manifest = match Manifest::load(store)? {
        Some(m) if m.config_hash != hash => {
            return Err(Error::Store(format!(
                "{} holds a campaign with config hash {}, not {hash}",
                store.display(),
                m.config_hash
            )))
        }
        Some(m) => m,
        None => Manifest::new(hash, cfg.seeds()),
    };

    let keys = run_keys(cfg);
    let done = |k: &RunKey| {
        manifest.find(k).is_some_and(|r| match r.status {
            RunStatus::Ok => k.records_path(store).exists(),
            RunStatus::Failed => true,
        })
    };
    let mut pending: Vec<RunKey> = keys.iter().copied().filter(|k| !done(k)).collect();
    let skipped = keys.len() - pending.len();
    // Expensive runs first for better load balance.
    pending.sort_by_key(|k| {
        (
            std::cmp::Reverse((k.variant.uses_surrogate(), k.task.dim())),
            *k,
        )
    });
    manifest.save(store)?;

    let manifest = Mutex::new(manifest);
    let execute = |key: &RunKey| -> Result<bool> {
        let task = cfg.task(key.task);
        let opt = cfg.optimizer_config(&task, key.variant, key.seed);
        log::info!("running {}", key.file_stem());
        let entry = match run_optimization(&opt, &task) {
            Ok(trace) => {
                write_records(store, key, &trace.records, &trace.wall_ms)?;
                ManifestRun {
                    task: key.task,
                    variant: key.variant,
                    seed: key.seed,
                    status: RunStatus::Ok,
                    file: Some(format!("{RUNS_DIR}/{}.csv", key.file_stem())),
                    max_evals: opt.max_evals,
                    step_budget: opt.step_budget,
                    evaluations: trace.records.len(),
                    invariant_checks: trace.invariants.checked,
                    invariant_violations: trace.invariants.violations,
                    fallbacks: trace.fallbacks,
                    error: None,
                }
            }
            Err(e) => {
                log::error!("run {} failed: {e}", key.file_stem());
                ManifestRun {
                    task: key.task,
                    variant: key.variant,
                    seed: key.seed,
                    status: RunStatus::Failed,
                    file: None,
                    max_evals: opt.max_evals,
                    step_budget: opt.step_budget,
                    evaluations: 0,
                    invariant_checks: 0,
                    invariant_violations: 0,
                    fallbacks: 0,
                    error: Some(e.to_string()),
                }
            }
        };
        let ok = entry.status == RunStatus::Ok;
        let mut m = manifest.lock().expect("manifest lock");
        m.upsert(entry);
        m.save(store)?;
        Ok(ok)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Store(format!("thread pool: {e}")))?;
    let results: Vec<Result<bool>> = pool.install(|| pending.par_iter().map(execute).collect());

    let mut summary = CampaignSummary {
        skipped,
        ..CampaignSummary::default()
    };
    for r in results {
        if r? {
            summary.executed += 1;
        } else {
            summary.failed += 1;
        }
    }
    let manifest = manifest.into_inner().expect("manifest lock");
    for run in &manifest.runs {
        summary.invariants.merge(&InvariantTally {
            checked: run.invariant_checks,
            violations: run.invariant_violations,
        });
    }
    Ok(summary)
}
