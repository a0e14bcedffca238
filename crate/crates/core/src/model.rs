//! The adaptive forward model: the recurrent network plus its persistent
//! memory, used both to track the real episode and to imagine rollouts.
//!
//! The network predicts the next cursor displacement from the current
//! (cursor, goal, action); reward is computed from the predicted cursor, not
//! learned. Rollouts branch from a copy of the memory, so planning can never
//! disturb the memory that tracks the real episode.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arm::Action;
use crate::error::{Error, Result};
use crate::neural::{adam_step, bptt_gradients_refs, forward_batch, BatchState, NetShape, OptimizerState, Sequence, TrainConfig, WeightSet};
use crate::point::Point2;
use crate::rng::{stream_rng, Stream};
use crate::task::{reward, Observation, Trajectory};
use crate::transforms::Condition;

pub const INPUT_WIDTH: usize = 6;
pub const OUTPUT_WIDTH: usize = 2;

/// Fixed scalings between physical units and network units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// cm per unit for cursor and goal inputs
    pub pos_scale: f64,
    /// rad/s² per unit for action inputs
    pub action_scale: f64,
    /// cm per unit for predicted cursor displacements
    pub delta_scale: f64,
}

impl Normalization {
    pub fn for_acc_limit(acc_limit: f64) -> Self {
        Self {
            pos_scale: 10.0,
            action_scale: acc_limit,
            delta_scale: 1.0,
        }
    }

    pub fn encode(&self, obs: &Observation, action: Action) -> [f64; INPUT_WIDTH] {
        [
            obs.cursor.x / self.pos_scale,
            obs.cursor.y / self.pos_scale,
            obs.goal.x / self.pos_scale,
            obs.goal.y / self.pos_scale,
            action.shoulder_acc / self.action_scale,
            action.elbow_acc / self.action_scale,
        ]
    }

    fn encode_cursor(&self, cursor: Point2, goal: Point2, action: Action, out: &mut [f64]) {
        out[0] = cursor.x / self.pos_scale;
        out[1] = cursor.y / self.pos_scale;
        out[2] = goal.x / self.pos_scale;
        out[3] = goal.y / self.pos_scale;
        out[4] = action.shoulder_acc / self.action_scale;
        out[5] = action.elbow_acc / self.action_scale;
    }

    fn decode_delta(&self, y: &[f64]) -> Point2 {
        Point2::new(y[0] * self.delta_scale, y[1] * self.delta_scale)
    }
}

/// Provenance carried with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub condition: Condition,
    pub corpus_size: usize,
    pub seed: u64,
    pub root_seed: u64,
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub weights: WeightSet,
    pub norm: Normalization,
    pub meta: ModelMeta,
}

/// The model's persistent state: LSTM hidden and cell vectors plus the most
/// recent real observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMemory {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub last_obs: Option<Observation>,
}

impl ModelMemory {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
            last_obs: None,
        }
    }

    fn broadcast(&self, rows: usize) -> BatchState {
        let hd = self.h.len();
        let mut st = BatchState::zeros(rows, hd);
        for r in 0..rows {
            st.h.row_mut(r).as_slice_mut().expect("contiguous").copy_from_slice(&self.h);
            st.c.row_mut(r).as_slice_mut().expect("contiguous").copy_from_slice(&self.c);
        }
        st
    }
}

pub fn memory_reset(hidden: usize) -> ModelMemory {
    ModelMemory::zeros(hidden)
}

/// Output of one model step.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub memory: ModelMemory,
    pub next_cursor: Point2,
    pub reward: f64,
}

impl ForwardModel {
    pub fn new(weights: WeightSet, norm: Normalization, meta: ModelMeta) -> Result<Self> {
        let s = weights.shape();
        if s.input != INPUT_WIDTH || s.output != OUTPUT_WIDTH {
            return Err(Error::ShapeMismatch(format!("forward model needs 6 inputs and 2 outputs, got {s:?}")));
        }
        Ok(Self { weights, norm, meta })
    }

    pub fn hidden(&self) -> usize {
        self.weights.shape().hidden
    }

    pub fn memory_reset(&self) -> ModelMemory {
        ModelMemory::zeros(self.hidden())
    }

    /// SHA-256 over the little-endian parameter bytes, hex encoded.
    pub fn weights_checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.weights.as_slice() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Consume one (observation, action) pair.
    pub fn observe(&self, mem: &ModelMemory, obs: &Observation, action: Action) -> Prediction {
        let x = self.norm.encode(obs, action);
        let mut st = mem.broadcast(1);
        let y = forward_batch(&self.weights, ArrayView2::from_shape((1, INPUT_WIDTH), &x).expect("row"), &mut st)
            .expect("memory matches model");
        let next_cursor = obs.cursor + self.norm.decode_delta(y.row(0).as_slice().expect("contiguous"));
        Prediction {
            memory: ModelMemory {
                h: st.h.into_raw_vec_and_offset().0,
                c: st.c.into_raw_vec_and_offset().0,
                last_obs: mem.last_obs,
            },
            next_cursor,
            reward: reward(next_cursor, obs.goal),
        }
    }

    /// Open-loop rollout of each plan from a shared memory snapshot, feeding
    /// predicted cursors back as inputs. Returns the summed predicted reward
    /// of every plan. All plans must have the same length.
    pub fn simulate_batch(&self, mem: &ModelMemory, start: &Observation, plans: &[Vec<Action>]) -> Vec<f64> {
        let rows = plans.len();
        if rows == 0 {
            return Vec::new();
        }
        let horizon = plans[0].len();
        assert!(plans.iter().all(|p| p.len() == horizon), "plans must share one horizon");
        let mut st = mem.broadcast(rows);
        let mut cursors = vec![start.cursor; rows];
        let mut totals = vec![0.0; rows];
        let mut x = Array2::<f64>::zeros((rows, INPUT_WIDTH));
        for t in 0..horizon {
            for (r, plan) in plans.iter().enumerate() {
                let row = x.row_mut(r).into_slice().expect("contiguous");
                self.norm.encode_cursor(cursors[r], start.goal, plan[t], row);
            }
            let y = forward_batch(&self.weights, x.view(), &mut st).expect("memory matches model");
            for r in 0..rows {
                let d = self.norm.decode_delta(y.row(r).as_slice().expect("contiguous"));
                cursors[r] = cursors[r] + d;
                totals[r] += reward(cursors[r], start.goal);
            }
        }
        totals
    }

    /// Sequence of network inputs and displacement targets for a trajectory.
    pub fn sequence(&self, traj: &Trajectory) -> Sequence {
        to_sequence(&self.norm, traj)
    }
}

/// Total predicted reward of one action sequence; `mem` is untouched.
pub fn simulate(model: &ForwardModel, mem: &ModelMemory, start: &Observation, actions: &[Action]) -> f64 {
    if actions.is_empty() {
        return 0.0;
    }
    model.simulate_batch(mem, start, &[actions.to_vec()])[0]
}

pub fn model_observe(model: &ForwardModel, mem: &ModelMemory, obs: &Observation, action: Action) -> Prediction {
    model.observe(mem, obs, action)
}

/// Rows of consecutive segments stacked into one sequence.
pub fn chain_sequence(norm: &Normalization, chain: &[Trajectory]) -> Sequence {
    if let [single] = chain {
        return to_sequence(norm, single);
    }
    let parts: Vec<Sequence> = chain.iter().map(|t| to_sequence(norm, t)).collect();
    let steps: usize = parts.iter().map(Sequence::len).sum();
    let mut inputs = Array2::zeros((steps, INPUT_WIDTH));
    let mut targets = Array2::zeros((steps, OUTPUT_WIDTH));
    let mut at = 0;
    for p in &parts {
        let n = p.len();
        inputs.slice_mut(ndarray::s![at..at + n, ..]).assign(&p.inputs);
        targets.slice_mut(ndarray::s![at..at + n, ..]).assign(&p.targets);
        at += n;
    }
    Sequence { inputs, targets }
}

pub fn to_sequence(norm: &Normalization, traj: &Trajectory) -> Sequence {
    let steps = traj.steps();
    let mut inputs = Array2::zeros((steps, INPUT_WIDTH));
    let mut targets = Array2::zeros((steps, OUTPUT_WIDTH));
    for t in 0..steps {
        let obs = &traj.observations[t];
        inputs
            .row_mut(t)
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&norm.encode(obs, traj.actions[t]));
        let d = traj.observations[t + 1].cursor - obs.cursor;
        targets[[t, 0]] = d.x / norm.delta_scale;
        targets[[t, 1]] = d.y / norm.delta_scale;
    }
    Sequence { inputs, targets }
}

/// Training outcome alongside the frozen model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-step squared error (network units) for each epoch run.
    pub epoch_losses: Vec<f64>,
    /// Mean per-step Euclidean cursor error on the training set, cm.
    pub final_error_cm: f64,
    pub epochs_run: usize,
}

/// Backpropagation-through-time training on chains of random-walk
/// segments. Memory is zeroed at the start of each chain and carried across
/// its segment boundaries.
pub fn train_model(
    corpus: &[Vec<Trajectory>],
    hidden: usize,
    norm: Normalization,
    config: &TrainConfig,
    meta: ModelMeta,
) -> Result<(ForwardModel, TrainReport)> {
    if corpus.iter().flatten().all(|t| t.steps() == 0) {
        return Err(Error::EmptyCorpus);
    }
    config.validate()?;
    let shape = NetShape::new(INPUT_WIDTH, hidden, OUTPUT_WIDTH);
    let mut weights = WeightSet::init(shape, &mut stream_rng(meta.seed, Stream::WeightInit, 0));
    let sequences: Vec<Sequence> = corpus.iter().map(|c| chain_sequence(&norm, c)).collect();
    let mut opt = OptimizerState::new(shape.param_count());
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut batch_rng = stream_rng(meta.seed, Stream::Batching, 0);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let lr = cosine_lr(config, epoch);
        order.shuffle(&mut batch_rng);
        let mut weighted = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sequence> = chunk.iter().map(|&k| &sequences[k]).collect();
            let steps: usize = batch.iter().map(|s| s.len()).sum();
            if steps == 0 {
                continue;
            }
            let (l, grads) = bptt_gradients_refs(&weights, &batch)?;
            adam_step(weights.as_mut_slice(), grads.as_slice(), &mut opt, config, lr)?;
            weighted += l * steps as f64;
            count += steps;
        }
        let epoch_loss = weighted / count as f64;
        epoch_losses.push(epoch_loss);
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        if config.patience > 0 {
            if epoch_loss < best * (1.0 - config.min_improvement) {
                best = epoch_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    let model = ForwardModel::new(weights, norm, meta)?;
    let errors = sequence_errors(&model, &sequences);
    let (sum, n) = errors.iter().flatten().fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    let report = TrainReport {
        epochs_run: epoch_losses.len(),
        epoch_losses,
        final_error_cm: sum / n.max(1) as f64,
    };
    Ok((model, report))
}

fn cosine_lr(config: &TrainConfig, epoch: usize) -> f64 {
    if config.epochs <= 1 || config.final_lr_fraction == 1.0 {
        return config.learning_rate;
    }
    let progress = epoch as f64 / (config.epochs - 1) as f64;
    let floor = config.final_lr_fraction;
    config.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Teacher-forced one-step cursor errors (cm) for each chain, with memory
/// zeroed at each chain start. Entry `t` is the error of the prediction made
/// at step `t`; entry 0 is made before any experience of the chain's
/// perturbation.
pub fn one_step_errors(model: &ForwardModel, chains: &[Vec<Trajectory>]) -> Vec<Vec<f64>> {
    let seqs: Vec<Sequence> = chains.iter().map(|c| chain_sequence(&model.norm, c)).collect();
    sequence_errors(model, &seqs)
}

fn sequence_errors(model: &ForwardModel, seqs: &[Sequence]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); seqs.len()];
    // batch sequences of equal length
    let mut lengths: Vec<usize> = seqs.iter().map(Sequence::len).collect();
    lengths.sort_unstable();
    lengths.dedup();
    let scale = model.norm.delta_scale;
    for len in lengths {
        let idx: Vec<usize> = (0..seqs.len()).filter(|&k| seqs[k].len() == len).collect();
        let mut st = BatchState::zeros(idx.len(), model.hidden());
        let mut x = Array2::<f64>::zeros((idx.len(), INPUT_WIDTH));
        for t in 0..len {
            for (r, &k) in idx.iter().enumerate() {
                x.row_mut(r).assign(&seqs[k].inputs.row(t));
            }
            let y = forward_batch(&model.weights, x.view(), &mut st).expect("memory matches model");
            for (r, &k) in idx.iter().enumerate() {
                let dx = (y[[r, 0]] - seqs[k].targets[[t, 0]]) * scale;
                let dy = (y[[r, 1]] - seqs[k].targets[[t, 1]]) * scale;
                out[k].push(dx.hypot(dy));
            }
        }
    }
    out
}

/// Per-step prediction error series for one held-out trajectory.
pub fn eval_model_error(model: &ForwardModel, traj: &Trajectory) -> Vec<f64> {
    one_step_errors(model, &[vec![traj.clone()]]).pop().unwrap_or_default()
}

/// Error after predicting `k` steps open-loop from step `start`, having
/// consumed the real trajectory up to `start`.
pub fn rollout_error(model: &ForwardModel, traj: &Trajectory, start: usize, k: usize) -> f64 {
    assert!(start + k <= traj.steps(), "rollout runs past the trajectory");
    let mut mem = model.memory_reset();
    for t in 0..start {
        mem = model.observe(&mem, &traj.observations[t], traj.actions[t]).memory;
    }
    let goal = traj.observations[start].goal;
    let mut obs = traj.observations[start];
    for t in start..start + k {
        let p = model.observe(&mem, &obs, traj.actions[t]);
        mem = p.memory;
        obs = Observation {
            cursor: p.next_cursor,
            goal,
        };
    }
    obs.cursor.distance(traj.observations[start + k].cursor)
}
