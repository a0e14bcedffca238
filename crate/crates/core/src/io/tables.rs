//! CSV artifacts. Each file opens with `#` provenance lines followed by a
//! header row; column schemas are listed in `docs/formats.md`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{CurveRecord, TrialMetrics, TrialRecord};
use crate::io::Provenance;
use crate::point::Point2;
use crate::transforms::Condition;

pub fn write_rows<W: Write, T: Serialize>(mut out: W, provenance: &Provenance, kind: &str, rows: &[T]) -> Result<()> {
    out.write_all(provenance.csv_header(kind).as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a CSV artifact; `#` lines are skipped.
pub fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Provenance from the comment lines of a CSV artifact, if present.
pub fn read_provenance(text: &str) -> Option<Provenance> {
    let line = text.lines().take_while(|l| l.starts_with('#')).find(|l| l.contains("format_version="))?;
    let mut version = None;
    let mut hash = None;
    let mut seed = None;
    for field in line.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("format_version", v)) => version = v.parse().ok(),
            Some(("config_hash", v)) => hash = u64::from_str_radix(v, 16).ok(),
            Some(("root_seed", v)) => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some(Provenance {
        format_version: version?,
        config_hash: hash?,
        root_seed: seed?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub condition: Condition,
    pub seed: u64,
    pub step: usize,
    pub error_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub condition: Condition,
    pub seed: u64,
    pub block: usize,
    pub rotation: f64,
    pub reach: usize,
    pub goal_x: f64,
    pub goal_y: f64,
    pub steps: usize,
    pub cumulative_penalty: f64,
    pub angular_error: Option<f64>,
    pub min_goal_distance: f64,
    pub reached: bool,
    pub final_x: f64,
    pub final_y: f64,
}

/// One cursor sample of one reach. `speed` is empty at step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub condition: Condition,
    pub seed: u64,
    pub block: usize,
    pub reach: usize,
    pub step: usize,
    pub cursor_x: f64,
    pub cursor_y: f64,
    pub speed: Option<f64>,
}

/// Per condition, seed and reach summary over test blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub condition: Condition,
    pub seed: u64,
    pub reach: usize,
    pub blocks: usize,
    pub penalty_mean: f64,
    pub penalty_ci_lo: f64,
    pub penalty_ci_hi: f64,
    pub angular_error_mean: Option<f64>,
    pub angular_error_missing: usize,
    pub min_distance_mean: f64,
    pub reach_rate: f64,
    pub final_position_sd: f64,
    pub peak_speed_mean: f64,
    pub steps_mean: f64,
}

pub fn curve_rows(curves: &[CurveRecord]) -> Vec<CurveRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.errors.iter().enumerate().map(move |(step, &e)| CurveRow {
                condition: c.condition,
                seed: c.seed,
                step,
                error_cm: e,
            })
        })
        .collect()
}

pub fn curves_from_rows(rows: &[CurveRow]) -> Result<Vec<CurveRecord>> {
    let mut map: BTreeMap<(u8, u64), CurveRecord> = BTreeMap::new();
    for r in rows {
        let c = map.entry((r.condition.code(), r.seed)).or_insert_with(|| CurveRecord {
            condition: r.condition,
            seed: r.seed,
            errors: Vec::new(),
        });
        if r.step != c.errors.len() {
            return Err(Error::format("curve table", format!("step {} out of order for seed {}", r.step, r.seed)));
        }
        c.errors.push(r.error_cm);
    }
    Ok(map.into_values().collect())
}

pub fn trial_rows(trials: &[TrialRecord]) -> (Vec<TrialRow>, Vec<PointRow>) {
    let mut rows = Vec::with_capacity(trials.len());
    let mut points = Vec::new();
    for t in trials {
        let m = &t.metrics;
        rows.push(TrialRow {
            condition: t.condition,
            seed: t.seed,
            block: t.block,
            rotation: t.rotation,
            reach: t.reach,
            goal_x: m.goal.x,
            goal_y: m.goal.y,
            steps: m.steps(),
            cumulative_penalty: m.cumulative_penalty,
            angular_error: m.angular_error,
            min_goal_distance: m.min_goal_distance,
            reached: m.reached,
            final_x: m.final_position.x,
            final_y: m.final_position.y,
        });
        for (step, p) in m.trajectory.iter().enumerate() {
            points.push(PointRow {
                condition: t.condition,
                seed: t.seed,
                block: t.block,
                reach: t.reach,
                step,
                cursor_x: p.x,
                cursor_y: p.y,
                speed: step.checked_sub(1).and_then(|k| m.speeds.get(k).copied()),
            });
        }
    }
    (rows, points)
}

type TrialKey = (u8, u64, usize, usize);

/// Rebuild trial records from the two tables written by [`trial_rows`].
pub fn trials_from_rows(rows: &[TrialRow], points: &[PointRow]) -> Result<Vec<TrialRecord>> {
    let bad = |msg: String| Error::format("trial tables", msg);
    let mut paths: BTreeMap<TrialKey, (Vec<Point2>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        let e = paths.entry((p.condition.code(), p.seed, p.block, p.reach)).or_default();
        if p.step != e.0.len() {
            return Err(bad(format!("step {} out of order in block {} reach {}", p.step, p.block, p.reach)));
        }
        e.0.push(Point2::new(p.cursor_x, p.cursor_y));
        match (p.step, p.speed) {
            (0, _) => {}
            (_, Some(s)) => e.1.push(s),
            (_, None) => return Err(bad(format!("missing speed at step {}", p.step))),
        }
    }
    rows.iter()
        .map(|r| {
            let (trajectory, speeds) = paths
                .remove(&(r.condition.code(), r.seed, r.block, r.reach))
                .ok_or_else(|| bad(format!("no trajectory for block {} reach {}", r.block, r.reach)))?;
            if trajectory.len() != r.steps + 1 {
                return Err(bad(format!("block {} reach {} has {} points for {} steps", r.block, r.reach, trajectory.len(), r.steps)));
            }
            Ok(TrialRecord {
                condition: r.condition,
                seed: r.seed,
                block: r.block,
                rotation: r.rotation,
                reach: r.reach,
                metrics: TrialMetrics {
                    cumulative_penalty: r.cumulative_penalty,
                    angular_error: r.angular_error,
                    speeds,
                    min_goal_distance: r.min_goal_distance,
                    reached: r.reached,
                    goal: Point2::new(r.goal_x, r.goal_y),
                    final_position: Point2::new(r.final_x, r.final_y),
                    trajectory,
                },
            })
        })
        .collect()
}
