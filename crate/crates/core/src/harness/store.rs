//! On-disk result store: one records file per run, a wall-clock sidecar per
//! run, and a campaign manifest. All writes go through a temporary file and a
//! rename so an interrupted campaign never leaves a truncated file behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::ParamVector;
use crate::episode::EpisodeStatus;
use crate::error::{Error, Result};
use crate::optimizer::{RunRecord, Variant};
use crate::tasks::TaskId;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RUNS_DIR: &str = "runs";
const HEADER: &str = "task,variant,seed,k,theta,status,stop_time,cost,incumbent,cumulative_steps";

/// Identifies one optimization run of a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub task: TaskId,
    pub variant: Variant,
    pub seed: u64,
}

impl RunKey {
    pub fn file_stem(&self) -> String {
        format!("{}__{}__s{}", self.task, self.variant, self.seed)
    }

    pub fn records_path(&self, store: &Path) -> PathBuf {
        store
            .join(RUNS_DIR)
            .join(format!("{}.csv", self.file_stem()))
    }

    pub fn timing_path(&self, store: &Path) -> PathBuf {
        store
            .join(RUNS_DIR)
            .join(format!("{}.timing.csv", self.file_stem()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub task: TaskId,
    pub variant: Variant,
    pub seed: u64,
    pub status: RunStatus,
    /// Records file relative to the store root (absent for failed runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Budgets the run was executed under; needed to place records on the
    /// budget-fraction grid.
    pub max_evals: usize,
    pub step_budget: usize,
    #[serde(default)]
    pub evaluations: usize,
    #[serde(default)]
    pub invariant_checks: u64,
    #[serde(default)]
    pub invariant_violations: u64,
    #[serde(default)]
    pub fallbacks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ManifestRun {
    pub fn key(&self) -> RunKey {
        RunKey {
            task: self.task,
            variant: self.variant,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub runs: Vec<ManifestRun>,
}

impl Manifest {
    pub fn new(config_hash: String, seeds: Vec<u64>) -> Self {
        Self {
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            runs: Vec::new(),
        }
    }

    pub fn load(store: &Path) -> Result<Option<Self>> {
        let path = store.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        toml::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Store(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, store: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Store(e.to_string()))?;
        write_atomic(&store.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn find(&self, key: &RunKey) -> Option<&ManifestRun> {
        self.runs.iter().find(|r| r.key() == *key)
    }

    /// Inserts or replaces the entry for `run`, keeping entries sorted.
    pub fn upsert(&mut self, run: ManifestRun) {
        self.runs.retain(|r| r.key() != run.key());
        self.runs.push(run);
        self.runs.sort_by_key(ManifestRun::key);
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Store(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders records as CSV. Floats use the shortest round-trip form.
pub fn format_records(key: &RunKey, records: &[RunRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            key.task,
            key.variant,
            key.seed,
            r.index,
            r.theta,
            r.status.as_str(),
            r.stop_time,
            r.cost,
            r.incumbent,
            r.cumulative_steps
        );
    }
    out
}

pub fn write_records(
    store: &Path,
    key: &RunKey,
    records: &[RunRecord],
    wall_ms: &[f64],
) -> Result<()> {
    write_atomic(
        &key.records_path(store),
        format_records(key, records).as_bytes(),
    )?;
    let mut timing = String::from("k,wall_ms\n");
    for (i, ms) in wall_ms.iter().enumerate() {
        let _ = writeln!(timing, "{},{:.3}", i + 1, ms);
    }
    write_atomic(&key.timing_path(store), timing.as_bytes())
}

/// Parses a records file written by [`write_records`].
pub fn read_records(path: &Path) -> Result<(RunKey, Vec<RunRecord>)> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, msg: String| Error::RecordFormat {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut key = None;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(n, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| err(n, format!("bad {what} `{s}`")))
        };
        let int = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| err(n, format!("bad {what} `{s}`")))
        };
        let this = RunKey {
            task: f[0].parse().map_err(|e: Error| err(n, e.to_string()))?,
            variant: f[1].parse().map_err(|e: Error| err(n, e.to_string()))?,
            seed: f[2]
                .parse()
                .map_err(|_| err(n, format!("bad seed `{}`", f[2])))?,
        };
        if *key.get_or_insert(this) != this {
            return Err(err(n, "run key changes within the file".into()));
        }
        let theta = f[4]
            .split(';')
            .map(|v| num(v, "theta component"))
            .collect::<Result<Vec<f64>>>()?;
        records.push(RunRecord {
            index: int(f[3], "index")?,
            theta: ParamVector::new(theta),
            status: EpisodeStatus::parse(f[5])
                .ok_or_else(|| err(n, format!("bad status `{}`", f[5])))?,
            stop_time: int(f[6], "stop time")?,
            cost: num(f[7], "cost")?,
            incumbent: num(f[8], "incumbent")?,
            cumulative_steps: int(f[9], "cumulative steps")?,
        });
    }
    let key = key.ok_or_else(|| err(2, "no records".into()))?;
    Ok((key, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RunRecord> {
        vec![
            RunRecord {
                index: 1,
                theta: ParamVector::new(vec![0.1, -1.5e-7]),
                status: EpisodeStatus::Crashed,
                stop_time: 12,
                cost: 0.30000000000000004,
                incumbent: f64::INFINITY,
                cumulative_steps: 12,
            },
            RunRecord {
                index: 2,
                theta: ParamVector::new(vec![1.0 / 3.0, 2.0]),
                status: EpisodeStatus::Complete,
                stop_time: 600,
                cost: 17.25,
                incumbent: 17.25,
                cumulative_steps: 612,
            },
        ]
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let key = RunKey {
            task: TaskId::Pt2Pid,
            variant: Variant::EsboGp,
            seed: 3,
        };
        write_records(dir.path(), &key, &sample(), &[1.0, 2.0]).unwrap();
        let (k, recs) = read_records(&key.records_path(dir.path())).unwrap();
        assert_eq!(k, key);
        assert_eq!(recs, sample());
    }

    #[test]
    fn manifest_round_trip_and_sorted_upsert() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("abc".into(), vec![0, 1]);
        for (seed, variant) in [(1, Variant::Bo), (0, Variant::Rs), (0, Variant::Bo)] {
            m.upsert(ManifestRun {
                task: TaskId::Pt2Pid,
                variant,
                seed,
                status: RunStatus::Ok,
                file: Some("x".into()),
                max_evals: 90,
                step_budget: 18000,
                evaluations: 3,
                invariant_checks: 0,
                invariant_violations: 0,
                fallbacks: 0,
                error: None,
            });
        }
        m.save(dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap().unwrap();
        assert_eq!(back, m);
        let keys: Vec<_> = m.runs.iter().map(|r| (r.variant, r.seed)).collect();
        assert_eq!(
            keys,
            vec![(Variant::Bo, 0), (Variant::Bo, 1), (Variant::Rs, 0)]
        );
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(
            &p,
            format!("{HEADER}\npt2_pid,BO,0,1,0.5,complete,x,1,1,600\n"),
        )
        .unwrap();
        let e = read_records(&p).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("stop time"), "{e}");
    }
}
