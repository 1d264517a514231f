//! Simple and scaled regret, budget-aligned curves and average ranks.

use std::collections::{BTreeMap, BTreeSet};

use crate::optimizer::{RunRecord, Variant};
use crate::tasks::TaskId;

use super::store::RunKey;

/// Number of points on the budget-fraction grid.
pub const GRID_POINTS: usize = 200;

/// Budget fractions `1/200, 2/200, …, 1`.
pub fn budget_grid() -> Vec<f64> {
    (1..=GRID_POINTS)
        .map(|i| i as f64 / GRID_POINTS as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Abscissa {
    /// Evaluations as a fraction of `K`.
    Evals,
    /// Simulated steps as a fraction of `T_budget`.
    Steps,
}

impl Abscissa {
    pub const ALL: [Abscissa; 2] = [Abscissa::Evals, Abscissa::Steps];

    pub fn as_str(&self) -> &'static str {
        match self {
            Abscissa::Evals => "evals",
            Abscissa::Steps => "steps",
        }
    }
}

/// `J*_k − J*` elementwise.
pub fn simple_regret(incumbents: &[f64], j_star: f64) -> Vec<f64> {
    incumbents.iter().map(|j| j - j_star).collect()
}

/// Median with `total_cmp` ordering; infinities are legal. Even-length
/// inputs average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (type 7). `NaN` for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if frac == 0.0 || i + 1 >= v.len() {
        return v[i];
    }
    let (a, b) = (v[i], v[i + 1]);
    if a == b {
        return a;
    }
    a + frac * (b - a)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fractional ranks (1 = lowest); tied values share the mean of their ranks.
pub fn average_rank(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j.
        let r = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = r;
        }
        i = j;
    }
    ranks
}

/// Last-observation-carried-forward resampling of a step function given by
/// `(x, y)` points sorted by `x`. Grid points before the first `x` get `before`.
pub fn locf(points: &[(f64, f64)], grid: &[f64], before: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    let mut current = before;
    for &g in grid {
        while j < points.len() && points[j].0 <= g {
            current = points[j].1;
            j += 1;
        }
        out.push(current);
    }
    out
}

/// One run as loaded from the store, with the budgets it ran under.
#[derive(Clone, Debug)]
pub struct RunData {
    pub key: RunKey,
    pub records: Vec<RunRecord>,
    pub max_evals: usize,
    pub step_budget: usize,
}

impl RunData {
    pub fn final_incumbent(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.incumbent)
    }

    /// Incumbent trajectory against the budget fraction; the fraction is
    /// capped at 1 (the last episode may overshoot the step budget).
    pub fn incumbent_points(&self, abscissa: Abscissa) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| {
                let x = match abscissa {
                    Abscissa::Evals => r.index as f64 / self.max_evals as f64,
                    Abscissa::Steps => r.cumulative_steps as f64 / self.step_budget as f64,
                };
                (x.min(1.0), r.incumbent)
            })
            .collect()
    }
}

/// Per-task normalization of regrets.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskScale {
    /// Best cost over every algorithm and seed.
    pub j_star: f64,
    /// Median over RS seeds of the final simple regret.
    pub rs_median_final_regret: f64,
}

impl TaskScale {
    /// A zero (or non-finite) RS reference cannot normalize anything.
    pub fn is_degenerate(&self) -> bool {
        !(self.rs_median_final_regret > 0.0 && self.rs_median_final_regret.is_finite())
    }

    pub fn scale(&self, cost: f64) -> f64 {
        (cost - self.j_star) / self.rs_median_final_regret
    }
}

/// Global best and RS reference per task. Tasks without RS runs are absent.
pub fn task_scales(runs: &[RunData]) -> BTreeMap<TaskId, TaskScale> {
    let mut best: BTreeMap<TaskId, f64> = BTreeMap::new();
    for r in runs {
        let e = best.entry(r.key.task).or_insert(f64::INFINITY);
        *e = e.min(r.final_incumbent());
    }
    best.into_iter()
        .filter_map(|(task, j_star)| {
            let finals: Vec<f64> = runs
                .iter()
                .filter(|r| r.key.task == task && r.key.variant == Variant::Rs)
                .map(|r| r.final_incumbent() - j_star)
                .collect();
            (!finals.is_empty()).then(|| {
                (
                    task,
                    TaskScale {
                        j_star,
                        rs_median_final_regret: median(&finals),
                    },
                )
            })
        })
        .collect()
}

/// Scaled-regret curves of every run on the budget grid, keyed by run.
pub fn scaled_curves(
    runs: &[RunData],
    scales: &BTreeMap<TaskId, TaskScale>,
    abscissa: Abscissa,
) -> BTreeMap<RunKey, Vec<f64>> {
    let grid = budget_grid();
    runs.iter()
        .filter_map(|r| {
            let s = scales.get(&r.key.task).filter(|s| !s.is_degenerate())?;
            let pts: Vec<(f64, f64)> = r
                .incumbent_points(abscissa)
                .into_iter()
                .map(|(x, j)| (x, s.scale(j)))
                .collect();
            Some((r.key, locf(&pts, &grid, f64::INFINITY)))
        })
        .collect()
}

/// Mean, median and quartiles across curves at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSummary {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

pub fn summarize(curves: &[&Vec<f64>]) -> CurveSummary {
    let n = curves.first().map_or(0, |c| c.len());
    let column = |i: usize| -> Vec<f64> { curves.iter().map(|c| c[i]).collect() };
    CurveSummary {
        mean: (0..n).map(|i| mean(&column(i))).collect(),
        median: (0..n).map(|i| median(&column(i))).collect(),
        q25: (0..n).map(|i| quantile(&column(i), 0.25)).collect(),
        q75: (0..n).map(|i| quantile(&column(i), 0.75)).collect(),
    }
}

/// Average rank curve per variant. Ranks are taken per (task, seed) over
/// the variants that have that (task, seed), then averaged.
pub fn rank_curves(curves: &BTreeMap<RunKey, Vec<f64>>) -> BTreeMap<Variant, Vec<f64>> {
    type Group<'a> = Vec<(Variant, &'a Vec<f64>)>;
    let mut groups: BTreeMap<(TaskId, u64), Group> = BTreeMap::new();
    for (k, c) in curves {
        groups
            .entry((k.task, k.seed))
            .or_default()
            .push((k.variant, c));
    }
    let mut sums: BTreeMap<Variant, (Vec<f64>, usize)> = BTreeMap::new();
    for members in groups.values() {
        let n = members[0].1.len();
        for i in 0..n {
            let vals: Vec<f64> = members.iter().map(|(_, c)| c[i]).collect();
            for ((v, _), r) in members.iter().zip(average_rank(&vals)) {
                let e = sums.entry(*v).or_insert_with(|| (vec![0.0; n], 0));
                e.0[i] += r;
            }
        }
        for (v, _) in members {
            sums.get_mut(v).expect("inserted above").1 += 1;
        }
    }
    sums.into_iter()
        .map(|(v, (s, count))| (v, s.into_iter().map(|x| x / count as f64).collect()))
        .collect()
}

/// First grid fraction at which `curve` is at or below `threshold`.
pub fn first_reach(curve: &[f64], threshold: f64) -> Option<f64> {
    let grid = budget_grid();
    curve
        .iter()
        .zip(grid)
        .find(|(v, _)| **v <= threshold)
        .map(|(_, g)| g)
}

/// Median over seeds of the final scaled regret for one variant and task,
/// computed as median(raw)/scale so the RS reference is exactly 1.
pub fn median_final_scaled(
    runs: &[RunData],
    scales: &BTreeMap<TaskId, TaskScale>,
    task: TaskId,
    variant: Variant,
) -> Option<f64> {
    let s = scales.get(&task).filter(|s| !s.is_degenerate())?;
    let raw: Vec<f64> = runs
        .iter()
        .filter(|r| r.key.task == task && r.key.variant == variant)
        .map(|r| r.final_incumbent() - s.j_star)
        .collect();
    (!raw.is_empty()).then(|| median(&raw) / s.rs_median_final_regret)
}

/// Variants present in `runs`, in canonical order.
pub fn variants_of(runs: &[RunData]) -> Vec<Variant> {
    let present: BTreeSet<Variant> = runs.iter().map(|r| r.key.variant).collect();
    Variant::ALL
        .into_iter()
        .filter(|v| present.contains(v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regret_examples() {
        assert_eq!(simple_regret(&[5.0, 4.0, 4.0], 3.0), vec![2.0, 1.0, 1.0]);
        assert_eq!(simple_regret(&[3.0], 3.0), vec![0.0]);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(average_rank(&[0.1, 0.3, 0.2]), vec![1.0, 3.0, 2.0]);
        assert_eq!(average_rank(&[0.1, 0.1, 0.2]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_rank(&[7.0]), vec![1.0]);
        assert_eq!(
            average_rank(&[f64::INFINITY, 1.0, f64::INFINITY]),
            vec![2.5, 1.0, 2.5]
        );
    }

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    }

    #[test]
    fn locf_carries_values_forward() {
        let grid = [0.1, 0.2, 0.3, 0.4];
        let v = locf(&[(0.15, 5.0), (0.3, 2.0)], &grid, f64::INFINITY);
        assert_eq!(v, vec![f64::INFINITY, 5.0, 2.0, 2.0]);
    }

    #[test]
    fn grid_ends_at_one() {
        let g = budget_grid();
        assert_eq!(g.len(), GRID_POINTS);
        assert_eq!(*g.last().unwrap(), 1.0);
    }
}
