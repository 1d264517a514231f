//! Turns a result store into plot-ready summary files.
//!
//! Everything here is a pure function of the records files, so re-running a
//! report over the same store rewrites identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::metrics::{
    budget_grid, first_reach, median_final_scaled, rank_curves, scaled_curves, summarize,
    task_scales, variants_of, Abscissa, CurveSummary, RunData, TaskScale,
};
use super::store::{read_records, write_atomic, Manifest, RunStatus};
use crate::error::{Error, Result};
use crate::optimizer::Variant;
use crate::tasks::TaskId;

/// Loads every successful run listed in the store's manifest.
pub fn load_runs(store: &Path) -> Result<Vec<RunData>> {
    let manifest = Manifest::load(store)?
        .ok_or_else(|| Error::Store(format!("no manifest in {}", store.display())))?;
    let mut runs = Vec::new();
    for entry in manifest.runs.iter().filter(|r| r.status == RunStatus::Ok) {
        let key = entry.key();
        let (found, records) = read_records(&key.records_path(store))?;
        if found != key {
            return Err(Error::Store(format!(
                "{} holds records of {}",
                key.file_stem(),
                found.file_stem()
            )));
        }
        runs.push(RunData {
            key,
            records,
            max_evals: entry.max_evals,
            step_budget: entry.step_budget,
        });
    }
    if runs.is_empty() {
        return Err(Error::Store(format!(
            "no completed runs in {}",
            store.display()
        )));
    }
    Ok(runs)
}

/// Budget fraction at which each variant's aggregate curve first reaches a
/// reference level.
#[derive(Clone, Debug, PartialEq)]
pub struct Headline {
    /// Variant whose final aggregate value defines the threshold.
    pub reference: Variant,
    pub threshold: f64,
    /// `None` = not reached within the budget.
    pub first_fraction: BTreeMap<Variant, Option<f64>>,
}

impl Headline {
    /// `1 − f_a / f_b`, defined only when both variants reach the threshold.
    pub fn reduction(&self, a: Variant, b: Variant) -> Option<f64> {
        let fa = (*self.first_fraction.get(&a)?)?;
        let fb = (*self.first_fraction.get(&b)?)?;
        Some(1.0 - fa / fb)
    }
}

#[derive(Clone, Debug)]
pub struct AbscissaReport {
    pub abscissa: Abscissa,
    /// Across-(task, seed) statistics of the scaled-regret curves.
    pub scaled: BTreeMap<Variant, CurveSummary>,
    pub ranks: BTreeMap<Variant, Vec<f64>>,
    /// Thresholds from the RS and ESRS aggregate median curves, when present.
    pub headlines: Vec<Headline>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub variants: Vec<Variant>,
    pub scales: BTreeMap<TaskId, TaskScale>,
    pub degenerate: Vec<TaskId>,
    /// Median final scaled regret per task and variant.
    pub final_by_task: BTreeMap<(TaskId, Variant), f64>,
    /// Mean over non-degenerate tasks of [`Report::final_by_task`].
    pub final_average: BTreeMap<Variant, f64>,
    pub by_abscissa: Vec<AbscissaReport>,
}

impl Report {
    pub fn abscissa(&self, a: Abscissa) -> Option<&AbscissaReport> {
        self.by_abscissa.iter().find(|r| r.abscissa == a)
    }
}

pub fn analyze(runs: &[RunData], abscissae: &[Abscissa]) -> Report {
    let variants = variants_of(runs);
    let scales = task_scales(runs);
    let degenerate: Vec<TaskId> = scales
        .iter()
        .filter(|(_, s)| s.is_degenerate())
        .map(|(t, _)| *t)
        .collect();
    for t in &degenerate {
        log::warn!("task {t}: RS median final regret is zero, excluded from averages");
    }

    let mut final_by_task = BTreeMap::new();
    for &task in scales.keys() {
        for &v in &variants {
            if let Some(x) = median_final_scaled(runs, &scales, task, v) {
                final_by_task.insert((task, v), x);
            }
        }
    }
    let final_average = variants
        .iter()
        .filter_map(|&v| {
            let xs: Vec<f64> = final_by_task
                .iter()
                .filter(|((_, w), _)| *w == v)
                .map(|(_, x)| *x)
                .collect();
            (!xs.is_empty()).then(|| (v, xs.iter().sum::<f64>() / xs.len() as f64))
        })
        .collect();

    let by_abscissa = abscissae
        .iter()
        .map(|&abscissa| {
            let curves = scaled_curves(runs, &scales, abscissa);
            let scaled: BTreeMap<Variant, CurveSummary> = variants
                .iter()
                .filter_map(|&v| {
                    let cs: Vec<&Vec<f64>> = curves
                        .iter()
                        .filter(|(k, _)| k.variant == v)
                        .map(|(_, c)| c)
                        .collect();
                    (!cs.is_empty()).then(|| (v, summarize(&cs)))
                })
                .collect();
            let headlines = [Variant::Rs, Variant::Esrs]
                .into_iter()
                .filter_map(|reference| {
                    let threshold = *scaled.get(&reference)?.median.last()?;
                    let first_fraction = scaled
                        .iter()
                        .map(|(v, s)| (*v, first_reach(&s.median, threshold)))
                        .collect();
                    Some(Headline {
                        reference,
                        threshold,
                        first_fraction,
                    })
                })
                .collect();
            AbscissaReport {
                abscissa,
                ranks: rank_curves(&curves),
                scaled,
                headlines,
            }
        })
        .collect();

    Report {
        variants,
        scales,
        degenerate,
        final_by_task,
        final_average,
        by_abscissa,
    }
}

fn fraction_cell(f: Option<f64>) -> String {
    f.map_or_else(|| "not reached".to_string(), |x| x.to_string())
}

/// Writes the report files into `out_dir`:
/// `scaled_regret_<abscissa>.csv`, `rank_<abscissa>.csv`, `headline_<abscissa>.csv`
/// and `final_regret.csv`.
pub fn write_report(report: &Report, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        let p = out_dir.join(name);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    let grid = budget_grid();

    for r in &report.by_abscissa {
        let a = r.abscissa.as_str();
        let mut s = String::from("fraction,variant,mean,median,q25,q75\n");
        for (v, c) in &r.scaled {
            for (i, f) in grid.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{f},{v},{},{},{},{}",
                    c.mean[i], c.median[i], c.q25[i], c.q75[i]
                );
            }
        }
        emit(format!("scaled_regret_{a}.csv"), s)?;

        let mut s = String::from("fraction");
        for v in r.ranks.keys() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
        for (i, f) in grid.iter().enumerate() {
            let _ = write!(s, "{f}");
            for c in r.ranks.values() {
                let _ = write!(s, ",{}", c[i]);
            }
            s.push('\n');
        }
        emit(format!("rank_{a}.csv"), s)?;

        let mut s = String::from("reference,threshold,variant,first_fraction\n");
        for h in &r.headlines {
            for (v, f) in &h.first_fraction {
                let _ = writeln!(
                    s,
                    "{},{},{v},{}",
                    h.reference,
                    h.threshold,
                    fraction_cell(*f)
                );
            }
        }
        emit(format!("headline_{a}.csv"), s)?;
    }

    let mut s = String::from("task,variant,median_final_scaled_regret\n");
    for ((t, v), x) in &report.final_by_task {
        let _ = writeln!(s, "{t},{v},{x}");
    }
    for (v, x) in &report.final_average {
        let _ = writeln!(s, "average,{v},{x}");
    }
    emit("final_regret.csv".into(), s)?;
    Ok(written)
}
