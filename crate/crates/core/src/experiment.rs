//! The protocol: corpora, training, held-out adaptation curves, frozen-weight
//! test blocks under pure rotations, per-reach metrics and the random-policy
//! baseline.

use serde::{Deserialize, Serialize};

use crate::arm::Action;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{one_step_errors, train_model, ForwardModel, ModelMeta, TrainReport};
use crate::planner::{Agent, ArmOracle, PlanningModel};
use crate::point::{angle_between, Point2};
use crate::rng::{stream_rng, Stream};
use crate::stats::mean;
use crate::task::{random_walk, uniform_action, Env, TaskInstance, Trajectory};
use crate::transforms::{Condition, LinearTransform};

/// Consecutive random-walk segments under one perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub transform: LinearTransform,
    pub segments: Vec<Trajectory>,
}

impl CorpusEntry {
    pub fn goals(&self) -> impl Iterator<Item = Point2> + '_ {
        self.segments.iter().map(|t| t.observations[0].goal)
    }

    pub fn steps(&self) -> usize {
        self.segments.iter().map(Trajectory::steps).sum()
    }
}

/// Random-walk training data for one condition and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub condition: Condition,
    pub seed: u64,
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chains(&self) -> Vec<Vec<Trajectory>> {
        self.entries.iter().map(|e| e.segments.clone()).collect()
    }
}

fn task(cfg: &ExperimentConfig, transform: LinearTransform, goal: Point2) -> TaskInstance {
    TaskInstance {
        transform,
        goal,
        episode: cfg.episode,
        geom: cfg.geometry,
    }
}

/// `n` chains of `episode.walk_segments` walks of `episode.walk_steps`
/// steps, each chain under a fresh transform from the condition's sampler
/// and each segment with a fresh goal. Goals and walk actions are drawn from
/// streams that do not depend on the condition, so the Rot and Rot+ corpora
/// of one seed differ only in their transforms.
pub fn generate_corpus(cfg: &ExperimentConfig, condition: Condition, seed: u64, n: usize) -> Corpus {
    let mut goals = stream_rng(cfg.root_seed, Stream::Goals, seed);
    let mut transforms = stream_rng(cfg.root_seed, Stream::Transforms, seed);
    let mut walks = stream_rng(cfg.root_seed, Stream::WalkActions, seed);
    let entries = (0..n)
        .map(|_| {
            let transform = condition.sample(&mut transforms, &cfg.transforms);
            let segments = (0..cfg.episode.walk_segments)
                .map(|_| {
                    let goal = crate::task::sample_goal(&mut goals, &cfg.episode);
                    random_walk(&task(cfg, transform, goal), cfg.episode.walk_steps, &mut walks)
                })
                .collect();
            CorpusEntry { transform, segments }
        })
        .collect();
    Corpus {
        condition,
        seed,
        entries,
    }
}

pub fn train_on_corpus(cfg: &ExperimentConfig, corpus: &Corpus, config_hash: u64) -> Result<(ForwardModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let meta = ModelMeta {
        condition: corpus.condition,
        corpus_size: corpus.len(),
        seed: corpus.seed,
        root_seed: cfg.root_seed,
        config_hash,
    };
    train_model(&corpus.chains(), cfg.network.hidden, cfg.normalization(), &cfg.training, meta)
}

/// Held-out walks under pure rotations of alternating sign, shared by both
/// conditions.
pub fn heldout_walks(cfg: &ExperimentConfig, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = stream_rng(cfg.root_seed, Stream::HeldOut, seed);
    (0..cfg.experiment.heldout_walks)
        .map(|k| {
            let transform = LinearTransform::pure_rotation(block_sign(k) * cfg.experiment.test_rotation);
            let goal = crate::task::sample_goal(&mut rng, &cfg.episode);
            let walk = random_walk(&task(cfg, transform, goal), cfg.experiment.heldout_steps, &mut rng);
            CorpusEntry {
                transform,
                segments: vec![walk],
            }
        })
        .collect()
}

/// Mean one-step cursor error (cm) at each step, averaged over walks.
pub fn adaptation_curve(model: &ForwardModel, walks: &[CorpusEntry]) -> Vec<f64> {
    let chains: Vec<Vec<Trajectory>> = walks.iter().map(|w| w.segments.clone()).collect();
    let errors = one_step_errors(model, &chains);
    let steps = errors.iter().map(Vec::len).max().unwrap_or(0);
    (0..steps)
        .map(|t| mean(&errors.iter().filter_map(|e| e.get(t).copied()).collect::<Vec<_>>()))
        .collect()
}

/// +1 for even blocks, -1 for odd ones.
pub fn block_sign(block: usize) -> f64 {
    if block % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-reach behavioural record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Sum of cursor-goal distances over executed steps.
    pub cumulative_penalty: f64,
    /// Unsigned angle (degrees) between the cursor displacement at the
    /// angle step and the goal direction; `None` if the cursor had not moved.
    pub angular_error: Option<f64>,
    /// cm/s, one entry per executed step.
    pub speeds: Vec<f64>,
    pub min_goal_distance: f64,
    pub reached: bool,
    pub goal: Point2,
    pub final_position: Point2,
    /// Cursor positions including the start.
    pub trajectory: Vec<Point2>,
}

impl TrialMetrics {
    pub fn steps(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }
}

/// Metrics of one reach. `cursors[0]` is the start position; penalties and
/// distances cover `cursors[1..]`.
pub fn compute_metrics(cursors: &[Point2], goal: Point2, dt: f64, angle_step: usize, reached: bool) -> TrialMetrics {
    let origin = cursors.first().copied().unwrap_or(Point2::ORIGIN);
    let executed = cursors.get(1..).unwrap_or(&[]);
    let cumulative_penalty = executed.iter().map(|c| c.distance(goal)).sum();
    let min_goal_distance = executed.iter().map(|c| c.distance(goal)).fold(f64::INFINITY, f64::min);
    let angular_error = cursors
        .get(angle_step)
        .and_then(|c| angle_between(*c - origin, goal - origin))
        .map(f64::to_degrees);
    let speeds = cursors.windows(2).map(|w| w[1].distance(w[0]) / dt).collect();
    TrialMetrics {
        cumulative_penalty,
        angular_error,
        speeds,
        min_goal_distance: if executed.is_empty() { origin.distance(goal) } else { min_goal_distance },
        reached,
        goal,
        final_position: cursors.last().copied().unwrap_or(origin),
        trajectory: cursors.to_vec(),
    }
}

/// Rotate so the goal lies on +x, and mirror reaches made under negative
/// rotations so every block curls the same way.
pub fn normalize_trajectory(points: &[Point2], rotation_deg: f64, goal: Point2) -> Vec<Point2> {
    let turn = -goal.angle();
    points
        .iter()
        .map(|p| {
            let q = p.rotated(turn);
            if rotation_deg < 0.0 {
                Point2::new(q.x, -q.y)
            } else {
                q
            }
        })
        .collect()
}

/// Run one reach to termination.
pub fn run_reach<M: PlanningModel, R: rand::Rng>(
    agent: &mut Agent<'_, M, R>,
    task: TaskInstance,
    angle_step: usize,
) -> Result<TrialMetrics> {
    let mut env = Env::new(task);
    agent.begin_reach();
    let mut cursors = vec![env.observation().cursor];
    while !env.is_done() {
        let obs = env.observation();
        let action = agent.act(&obs)?;
        let rec = env.step(action)?;
        cursors.push(rec.obs.cursor);
    }
    Ok(compute_metrics(&cursors, task.goal, task.geom.dt, angle_step, env.reached()))
}

/// Index of a test block's random streams. Both conditions use the same
/// goals and planner noise for a given seed and block.
pub fn block_key(seed: u64, block: usize) -> u64 {
    (seed << 32) | block as u64
}

/// A block of reaches under one fixed transform with goals at fresh angles.
/// The planner's memory is cleared at the start and persists across reaches.
pub fn run_block<M: PlanningModel>(
    model: &M,
    cfg: &ExperimentConfig,
    transform: LinearTransform,
    key: u64,
) -> Result<Vec<TrialMetrics>> {
    let mut goals = stream_rng(cfg.root_seed, Stream::TestGoals, key);
    let cem = stream_rng(cfg.root_seed, Stream::Cem, key);
    let mut agent = Agent::new(model, cfg.cem.clone(), cfg.geometry.acc_limit, cem)?;
    agent.reset_memory();
    let angle_step = cfg.angle_step();
    (0..cfg.experiment.reaches)
        .map(|_| {
            let goal = crate::task::sample_goal(&mut goals, &cfg.episode);
            run_reach(&mut agent, task(cfg, transform, goal), angle_step)
        })
        .collect()
}

/// Frozen-weight test block under a pure rotation of `sign · test_rotation`.
pub fn run_test_block(model: &ForwardModel, cfg: &ExperimentConfig, sign: f64, seed: u64, block: usize) -> Result<Vec<TrialMetrics>> {
    let transform = LinearTransform::pure_rotation(sign * cfg.experiment.test_rotation);
    run_block(model, cfg, transform, block_key(seed, block))
}

/// The same block driven by the true arm dynamics.
pub fn run_oracle_block(cfg: &ExperimentConfig, transform: LinearTransform, key: u64) -> Result<Vec<TrialMetrics>> {
    run_block(&ArmOracle::new(cfg.geometry, transform), cfg, transform, key)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
}

/// Cumulative penalty of each episode under uniform random actions, test
/// rotations alternating in sign.
pub fn random_policy_penalties(cfg: &ExperimentConfig, n_episodes: usize, index: u64) -> Result<Vec<f64>> {
    let mut rng = stream_rng(cfg.root_seed, Stream::Baseline, index);
    let limit = cfg.geometry.acc_limit;
    (0..n_episodes)
        .map(|k| {
            let transform = LinearTransform::pure_rotation(block_sign(k) * cfg.experiment.test_rotation);
            let goal = crate::task::sample_goal(&mut rng, &cfg.episode);
            let mut env = Env::new(task(cfg, transform, goal));
            let mut penalty = 0.0;
            while !env.is_done() {
                let a: Action = uniform_action(&mut rng, limit);
                penalty -= env.step(a)?.reward;
            }
            Ok(penalty)
        })
        .collect()
}

pub fn random_policy_baseline(cfg: &ExperimentConfig, n_episodes: usize, index: u64) -> Result<BaselineResult> {
    let p = random_policy_penalties(cfg, n_episodes, index)?;
    Ok(BaselineResult {
        mean: if p.is_empty() { 0.0 } else { mean(&p) },
        std_err: if p.len() < 2 { 0.0 } else { crate::stats::std_err(&p) },
        episodes: p.len(),
    })
}

/// One reach of one test block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub condition: Condition,
    pub seed: u64,
    pub block: usize,
    /// Signed test rotation, degrees.
    pub rotation: f64,
    /// 1-based position within the block.
    pub reach: usize,
    pub metrics: TrialMetrics,
}

/// Mean one-step error per held-out step for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub condition: Condition,
    pub seed: u64,
    pub errors: Vec<f64>,
}

/// Test-phase output of one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelResults {
    pub trials: Vec<TrialRecord>,
    pub curve: CurveRecord,
}

/// Test blocks `blocks` of one model, signs alternating by block index.
pub fn evaluate_blocks(model: &ForwardModel, cfg: &ExperimentConfig, blocks: std::ops::Range<usize>) -> Result<Vec<TrialRecord>> {
    let condition = model.meta.condition;
    let seed = model.meta.seed;
    let mut trials = Vec::with_capacity(blocks.len() * cfg.experiment.reaches);
    for block in blocks {
        let sign = block_sign(block);
        let goals = run_test_block(model, cfg, sign, seed, block)?;
        for (k, metrics) in goals.into_iter().enumerate() {
            trials.push(TrialRecord {
                condition,
                seed,
                block,
                rotation: sign * cfg.experiment.test_rotation,
                reach: k + 1,
                metrics,
            });
        }
    }
    Ok(trials)
}

pub fn heldout_curve(model: &ForwardModel, cfg: &ExperimentConfig) -> CurveRecord {
    CurveRecord {
        condition: model.meta.condition,
        seed: model.meta.seed,
        errors: adaptation_curve(model, &heldout_walks(cfg, model.meta.seed)),
    }
}

/// Held-out curve plus `experiment.blocks` test blocks for one model.
pub fn evaluate_model(model: &ForwardModel, cfg: &ExperimentConfig) -> Result<ModelResults> {
    let before = model.weights_checksum();
    let curve = heldout_curve(model, cfg);
    let trials = evaluate_blocks(model, cfg, 0..cfg.experiment.blocks)?;
    debug_assert_eq!(before, model.weights_checksum());
    Ok(ModelResults { trials, curve })
}
