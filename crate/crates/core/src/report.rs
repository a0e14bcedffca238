//! Aggregation of test-phase records into figure tables and a summary.
//! Confidence intervals are percentile bootstraps over test blocks, pooled
//! across seeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::experiment::{normalize_trajectory, CurveRecord, TrialRecord};
use crate::io::Provenance;
use crate::point::Point2;
use crate::rng::{stream_rng, Stream};
use crate::stats::{bootstrap_ci, mean, std_dev, Interval};
use crate::transforms::Condition;

/// Bootstrap settings and the seed their streams derive from.
#[derive(Debug, Clone, Copy)]
pub struct CiSettings {
    pub resamples: usize,
    pub level: f64,
    pub root_seed: u64,
}

impl CiSettings {
    /// Each statistic draws from its own stream so results do not depend
    /// on the order in which they are computed.
    fn ci(&self, xs: &[f64], condition: Condition, reach: usize, metric: u64) -> Interval {
        let index = (metric << 40) | ((condition.code() as u64) << 32) | reach as u64;
        bootstrap_ci(xs, self.resamples, self.level, &mut stream_rng(self.root_seed, Stream::Bootstrap, index))
    }
}

/// Training outcome of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub condition: Condition,
    pub seed: u64,
    pub corpus_size: usize,
    pub epochs_run: usize,
    pub final_error_cm: f64,
    pub weights_checksum: String,
}

/// Random-policy penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub episodes: usize,
    pub mean: f64,
    pub std_err: f64,
    pub ci: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStepRow {
    pub condition: Condition,
    pub step: usize,
    pub models: usize,
    pub mean_error_cm: f64,
    pub sd_error_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachStatRow {
    pub condition: Condition,
    pub reach: usize,
    pub n: usize,
    pub missing: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub condition: Condition,
    pub reach: usize,
    pub step: usize,
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    /// Spread of the normalized final positions of this reach, cm.
    pub final_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub condition: Condition,
    pub reach: usize,
    pub step: usize,
    pub n: usize,
    pub mean_speed: f64,
}

/// Per-condition headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub models: usize,
    pub blocks: usize,
    pub train_error_cm: BTreeMap<u64, f64>,
    pub curve_first_steps: Option<f64>,
    pub curve_last_third: Option<f64>,
    pub penalty_by_reach: Vec<Interval>,
    pub penalty_all_reaches: Option<Interval>,
    pub reach_rate_by_reach: Vec<f64>,
    pub final_position_sd_reach1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub provenance: Provenance,
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
    pub conditions: BTreeMap<String, ConditionSummary>,
    pub baseline: Option<BaselineSummary>,
    pub comparisons: Comparisons,
}

/// Orderings between conditions; `None` when an input is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparisons {
    pub rot_reach5_ci_below_reach1: Option<bool>,
    pub rot_le_rotplus_reaches: Option<usize>,
    pub rotplus_curve_above_rot_steps: Option<usize>,
    pub rot_curve_ratio: Option<f64>,
    pub rotplus_final_sd_exceeds_rot: Option<bool>,
    pub baseline_ci_above_rotplus: Option<bool>,
    pub rot_train_error_below_rotplus_seeds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figures {
    pub fig3: Vec<CurveStepRow>,
    pub fig4: Vec<ReachStatRow>,
    pub fig5: Vec<PathRow>,
    pub fig6: Vec<ReachStatRow>,
    pub fig7: Vec<SpeedRow>,
    pub fig8: Vec<ReachStatRow>,
    pub summary: Summary,
}

const PENALTY: u64 = 1;
const ANGLE: u64 = 2;
const MIN_DIST: u64 = 3;
const POOLED: u64 = 4;

fn conditions_present(trials: &[TrialRecord], curves: &[CurveRecord]) -> Vec<Condition> {
    Condition::BOTH
        .into_iter()
        .filter(|c| trials.iter().any(|t| t.condition == *c) || curves.iter().any(|k| k.condition == *c))
        .collect()
}

fn max_reach(trials: &[TrialRecord]) -> usize {
    trials.iter().map(|t| t.reach).max().unwrap_or(0)
}

fn of<'a>(trials: &'a [TrialRecord], c: Condition, reach: usize) -> impl Iterator<Item = &'a TrialRecord> {
    trials.iter().filter(move |t| t.condition == c && t.reach == reach)
}

/// Mean curve across models, step by step.
pub fn mean_curve(curves: &[CurveRecord], c: Condition) -> Vec<CurveStepRow> {
    let mine: Vec<&CurveRecord> = curves.iter().filter(|k| k.condition == c).collect();
    let steps = mine.iter().map(|k| k.errors.len()).max().unwrap_or(0);
    (0..steps)
        .map(|step| {
            let xs: Vec<f64> = mine.iter().filter_map(|k| k.errors.get(step).copied()).collect();
            CurveStepRow {
                condition: c,
                step,
                models: xs.len(),
                mean_error_cm: mean(&xs),
                sd_error_cm: std_dev(&xs),
            }
        })
        .collect()
}

fn reach_stat(
    trials: &[TrialRecord],
    c: Condition,
    reach: usize,
    metric: u64,
    ci: &CiSettings,
    value: impl Fn(&TrialRecord) -> Option<f64>,
) -> ReachStatRow {
    let all: Vec<Option<f64>> = of(trials, c, reach).map(value).collect();
    let xs: Vec<f64> = all.iter().flatten().copied().collect();
    let iv = ci.ci(&xs, c, reach, metric);
    ReachStatRow {
        condition: c,
        reach,
        n: xs.len(),
        missing: all.len() - xs.len(),
        mean: iv.mean,
        ci_lo: iv.lo,
        ci_hi: iv.hi,
    }
}

fn normalized(t: &TrialRecord) -> Vec<Point2> {
    normalize_trajectory(&t.metrics.trajectory, t.rotation, t.metrics.goal)
}

/// Spread of final cursor positions after normalization: root of the summed
/// per-axis variances.
pub fn final_position_sd<'a>(trials: impl Iterator<Item = &'a TrialRecord>) -> f64 {
    let finals: Vec<Point2> = trials
        .map(|t| normalize_trajectory(&[t.metrics.final_position], t.rotation, t.metrics.goal)[0])
        .collect();
    let xs: Vec<f64> = finals.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = finals.iter().map(|p| p.y).collect();
    (std_dev(&xs).powi(2) + std_dev(&ys).powi(2)).sqrt()
}

fn paths(trials: &[TrialRecord], c: Condition, reach: usize) -> Vec<PathRow> {
    let norm: Vec<Vec<Point2>> = of(trials, c, reach).map(normalized).collect();
    let len = norm.iter().map(Vec::len).max().unwrap_or(0);
    let final_sd = final_position_sd(of(trials, c, reach));
    (0..len)
        .map(|step| {
            // finished reaches hold their last position
            let pts: Vec<Point2> = norm.iter().filter_map(|p| p.get(step).or(p.last()).copied()).collect();
            PathRow {
                condition: c,
                reach,
                step,
                n: pts.len(),
                mean_x: mean(&pts.iter().map(|p| p.x).collect::<Vec<_>>()),
                mean_y: mean(&pts.iter().map(|p| p.y).collect::<Vec<_>>()),
                final_sd,
            }
        })
        .collect()
}

fn speeds(trials: &[TrialRecord], c: Condition, reach: usize) -> Vec<SpeedRow> {
    let series: Vec<&Vec<f64>> = of(trials, c, reach).map(|t| &t.metrics.speeds).collect();
    let len = series.iter().map(|s| s.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let xs: Vec<f64> = series.iter().filter_map(|s| s.get(k).copied()).collect();
            SpeedRow {
                condition: c,
                reach,
                step: k + 1,
                n: xs.len(),
                mean_speed: mean(&xs),
            }
        })
        .collect()
}

fn curve_window(rows: &[CurveStepRow]) -> (Option<f64>, Option<f64>) {
    if rows.len() < 3 {
        return (None, None);
    }
    let e: Vec<f64> = rows.iter().map(|r| r.mean_error_cm).collect();
    (Some(mean(&e[..3])), Some(mean(&e[e.len() - e.len() / 3..])))
}

pub fn build_figures(
    trials: &[TrialRecord],
    curves: &[CurveRecord],
    train: &[TrainSummary],
    baseline_penalties: Option<&[f64]>,
    provenance: Provenance,
    ci: CiSettings,
) -> Figures {
    let conds = conditions_present(trials, curves);
    let reaches = max_reach(trials);
    let mut fig3 = Vec::new();
    let mut fig4 = Vec::new();
    let mut fig5 = Vec::new();
    let mut fig6 = Vec::new();
    let mut fig7 = Vec::new();
    let mut fig8 = Vec::new();
    let mut conditions = BTreeMap::new();
    for &c in &conds {
        let curve = mean_curve(curves, c);
        let (first, last) = curve_window(&curve);
        fig3.extend(curve);
        let mut penalty_by_reach = Vec::new();
        let mut reach_rate_by_reach = Vec::new();
        for r in 1..=reaches {
            let p = reach_stat(trials, c, r, PENALTY, &ci, |t| Some(t.metrics.cumulative_penalty));
            penalty_by_reach.push(Interval {
                mean: p.mean,
                lo: p.ci_lo,
                hi: p.ci_hi,
            });
            fig4.push(p);
            fig5.extend(paths(trials, c, r));
            fig6.push(reach_stat(trials, c, r, ANGLE, &ci, |t| t.metrics.angular_error));
            fig7.extend(speeds(trials, c, r));
            fig8.push(reach_stat(trials, c, r, MIN_DIST, &ci, |t| Some(t.metrics.min_goal_distance)));
            let n = of(trials, c, r).count();
            let hit = of(trials, c, r).filter(|t| t.metrics.reached).count();
            reach_rate_by_reach.push(if n == 0 { f64::NAN } else { hit as f64 / n as f64 });
        }
        let pooled: Vec<f64> = trials.iter().filter(|t| t.condition == c).map(|t| t.metrics.cumulative_penalty).collect();
        let mut blocks: Vec<(u64, usize)> = trials.iter().filter(|t| t.condition == c).map(|t| (t.seed, t.block)).collect();
        blocks.sort_unstable();
        blocks.dedup();
        let mut models: Vec<u64> = curves.iter().filter(|k| k.condition == c).map(|k| k.seed).collect();
        models.extend(trials.iter().filter(|t| t.condition == c).map(|t| t.seed));
        models.sort_unstable();
        models.dedup();
        conditions.insert(
            c.label().to_string(),
            ConditionSummary {
                models: models.len(),
                blocks: blocks.len(),
                train_error_cm: train.iter().filter(|s| s.condition == c).map(|s| (s.seed, s.final_error_cm)).collect(),
                curve_first_steps: first,
                curve_last_third: last,
                penalty_by_reach,
                penalty_all_reaches: (!pooled.is_empty()).then(|| ci.ci(&pooled, c, 0, POOLED)),
                reach_rate_by_reach,
                final_position_sd_reach1: (reaches > 0).then(|| final_position_sd(of(trials, c, 1))),
            },
        );
    }
    let baseline = baseline_penalties.map(|p| {
        let iv = ci.ci(p, Condition::Rot, 0, 99);
        BaselineSummary {
            episodes: p.len(),
            mean: if p.is_empty() { 0.0 } else { iv.mean },
            std_err: crate::stats::std_err(p),
            ci: iv,
        }
    });
    let comparisons = compare(&conditions, &fig3, train, baseline.as_ref());
    Figures {
        fig3,
        fig4,
        fig5,
        fig6,
        fig7,
        fig8,
        summary: Summary {
            provenance,
            ci_level: ci.level,
            bootstrap_resamples: ci.resamples,
            conditions,
            baseline,
            comparisons,
        },
    }
}

fn compare(
    conds: &BTreeMap<String, ConditionSummary>,
    fig3: &[CurveStepRow],
    train: &[TrainSummary],
    baseline: Option<&BaselineSummary>,
) -> Comparisons {
    let rot = conds.get(Condition::Rot.label());
    let plus = conds.get(Condition::RotPlus.label());
    let curve = |c: Condition| fig3.iter().filter(|r| r.condition == c).map(|r| r.mean_error_cm).collect::<Vec<_>>();
    let (rc, pc) = (curve(Condition::Rot), curve(Condition::RotPlus));
    let both = rot.zip(plus);
    let mut train_wins = None;
    let rot_train: BTreeMap<u64, f64> = train.iter().filter(|s| s.condition == Condition::Rot).map(|s| (s.seed, s.final_error_cm)).collect();
    let plus_train: BTreeMap<u64, f64> = train.iter().filter(|s| s.condition == Condition::RotPlus).map(|s| (s.seed, s.final_error_cm)).collect();
    if !rot_train.is_empty() && !plus_train.is_empty() {
        train_wins = Some(rot_train.iter().filter(|(s, e)| plus_train.get(s).is_some_and(|p| *e < p)).count());
    }
    Comparisons {
        rot_reach5_ci_below_reach1: rot.and_then(|r| {
            let first = r.penalty_by_reach.first()?;
            let last = r.penalty_by_reach.last()?;
            (r.penalty_by_reach.len() > 1).then(|| last.disjoint_below(first))
        }),
        rot_le_rotplus_reaches: both.map(|(r, p)| {
            r.penalty_by_reach
                .iter()
                .zip(&p.penalty_by_reach)
                .filter(|(a, b)| a.mean <= b.mean)
                .count()
        }),
        rotplus_curve_above_rot_steps: (!rc.is_empty() && !pc.is_empty()).then(|| rc.iter().zip(&pc).filter(|(a, b)| b > a).count()),
        rot_curve_ratio: rot.and_then(|r| Some(r.curve_last_third? / r.curve_first_steps?)),
        rotplus_final_sd_exceeds_rot: both.and_then(|(r, p)| Some(p.final_position_sd_reach1? > r.final_position_sd_reach1?)),
        baseline_ci_above_rotplus: plus.and_then(|p| Some(p.penalty_all_reaches?.disjoint_below(&baseline?.ci))),
        rot_train_error_below_rotplus_seeds: train_wins,
    }
}

/// Per condition, seed and reach table of test metrics.
pub fn metrics_rows(trials: &[TrialRecord], ci: CiSettings) -> Vec<crate::io::tables::MetricsRow> {
    let mut keys: Vec<(u8, u64, usize)> = trials.iter().map(|t| (t.condition.code(), t.seed, t.reach)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(code, seed, reach)| {
            let condition = Condition::from_code(code).expect("valid code");
            let mine: Vec<&TrialRecord> = trials.iter().filter(|t| t.condition == condition && t.seed == seed && t.reach == reach).collect();
            let pen: Vec<f64> = mine.iter().map(|t| t.metrics.cumulative_penalty).collect();
            let angles: Vec<f64> = mine.iter().filter_map(|t| t.metrics.angular_error).collect();
            let iv = ci.ci(&pen, condition, reach, PENALTY | (seed.wrapping_add(1) << 4));
            crate::io::tables::MetricsRow {
                condition,
                seed,
                reach,
                blocks: mine.len(),
                penalty_mean: iv.mean,
                penalty_ci_lo: iv.lo,
                penalty_ci_hi: iv.hi,
                angular_error_mean: (!angles.is_empty()).then(|| mean(&angles)),
                angular_error_missing: mine.len() - angles.len(),
                min_distance_mean: mean(&mine.iter().map(|t| t.metrics.min_goal_distance).collect::<Vec<_>>()),
                reach_rate: mine.iter().filter(|t| t.metrics.reached).count() as f64 / mine.len() as f64,
                final_position_sd: final_position_sd(mine.iter().copied()),
                peak_speed_mean: mean(
                    &mine
                        .iter()
                        .map(|t| t.metrics.speeds.iter().copied().fold(0.0, f64::max))
                        .collect::<Vec<_>>(),
                ),
                steps_mean: mean(&mine.iter().map(|t| t.metrics.steps() as f64).collect::<Vec<_>>()),
            }
        })
        .collect()
}
