//! Open-loop cross-entropy planning with warm starting, executed in a
//! receding-horizon loop.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arm::{initial_state, step_arm, tip_position, Action, ArmGeometry, ArmState};
use crate::error::{Error, Result};
use crate::model::{ForwardModel, ModelMemory};
use crate::point::Point2;
use crate::task::{cursor_for, reward, Observation};
use crate::transforms::LinearTransform;

/// Anything the planner can query for imagined returns.
pub trait PlanningModel {
    type Memory: Clone + PartialEq + std::fmt::Debug;

    fn fresh_memory(&self) -> Self::Memory;

    /// Called when a new reach begins within the same block.
    fn start_reach(&self, mem: &mut Self::Memory);

    /// Summed predicted reward of each plan from the current observation;
    /// plans share one length.
    fn score(&self, mem: &Self::Memory, obs: &Observation, plans: &[Vec<Action>]) -> Vec<f64>;

    /// Fold an executed (observation, action) pair into memory.
    fn advance(&self, mem: &mut Self::Memory, obs: &Observation, action: Action);
}

impl PlanningModel for ForwardModel {
    type Memory = ModelMemory;

    fn fresh_memory(&self) -> ModelMemory {
        self.memory_reset()
    }

    // Memory deliberately survives across reaches; it carries what has been
    // learned about the current perturbation.
    fn start_reach(&self, _mem: &mut ModelMemory) {}

    fn score(&self, mem: &ModelMemory, obs: &Observation, plans: &[Vec<Action>]) -> Vec<f64> {
        self.simulate_batch(mem, obs, plans)
    }

    fn advance(&self, mem: &mut ModelMemory, obs: &Observation, action: Action) {
        let p = self.observe(mem, obs, action);
        *mem = p.memory;
        mem.last_obs = Some(*obs);
    }
}

/// The true arm and perturbation, used as a perfect model.
#[derive(Debug, Clone)]
pub struct ArmOracle {
    pub geom: ArmGeometry,
    pub transform: LinearTransform,
    p0: Point2,
}

impl ArmOracle {
    pub fn new(geom: ArmGeometry, transform: LinearTransform) -> Self {
        let p0 = tip_position(&initial_state(&geom), &geom);
        Self { geom, transform, p0 }
    }
}

impl PlanningModel for ArmOracle {
    type Memory = ArmState;

    fn fresh_memory(&self) -> ArmState {
        initial_state(&self.geom)
    }

    fn start_reach(&self, mem: &mut ArmState) {
        *mem = initial_state(&self.geom);
    }

    fn score(&self, mem: &ArmState, obs: &Observation, plans: &[Vec<Action>]) -> Vec<f64> {
        plans
            .iter()
            .map(|plan| {
                let mut s = *mem;
                plan.iter()
                    .map(|&a| {
                        s = step_arm(&s, a, &self.geom).expect("finite plan");
                        reward(cursor_for(&s, &self.transform, self.p0, &self.geom), obs.goal)
                    })
                    .sum()
            })
            .collect()
    }

    fn advance(&self, mem: &mut ArmState, _obs: &Observation, action: Action) {
        *mem = step_arm(mem, action, &self.geom).expect("finite action");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemConfig {
    pub population: usize,
    pub elite_count: usize,
    pub iterations: usize,
    /// steps
    pub horizon: usize,
    /// rad/s²
    pub init_stddev: f64,
    /// rad/s²
    pub min_stddev: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        let acc_limit = ArmGeometry::default().acc_limit;
        Self {
            population: 128,
            elite_count: 16,
            iterations: 8,
            horizon: 14,
            init_stddev: acc_limit / 2.0,
            min_stddev: 0.02 * acc_limit,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::config("cem.population", "must be positive"));
        }
        if self.elite_count == 0 || self.elite_count > self.population {
            return Err(Error::config(
                "cem.elite_count",
                format!("need 0 < elite_count ({}) <= population ({})", self.elite_count, self.population),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("cem.horizon", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("cem.iterations", "must be at least 1"));
        }
        if !(self.init_stddev.is_finite() && self.init_stddev > 0.0) {
            return Err(Error::config("cem.init_stddev", "must be positive"));
        }
        if !(self.min_stddev.is_finite() && self.min_stddev > 0.0) {
            return Err(Error::config("cem.min_stddev", "must be positive"));
        }
        Ok(())
    }
}

/// Independent Gaussian over each action of a horizon-long plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDistribution {
    pub mean: Vec<[f64; 2]>,
    pub stddev: Vec<[f64; 2]>,
}

impl PlanDistribution {
    pub fn fresh(horizon: usize, init_stddev: f64) -> Self {
        Self {
            mean: vec![[0.0; 2]; horizon],
            stddev: vec![[init_stddev; 2]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn first_action(&self, limit: f64) -> Action {
        Action::from_array(self.mean[0]).clamped(limit)
    }
}

/// Shift the previous solution one step forward, repeating its last mean,
/// and reopen exploration at `init_stddev`.
pub fn warm_start(prev: &PlanDistribution, init_stddev: f64) -> PlanDistribution {
    let mut mean: Vec<[f64; 2]> = prev.mean.iter().skip(1).copied().collect();
    if let Some(&last) = prev.mean.last() {
        mean.push(last);
    }
    PlanDistribution {
        stddev: vec![[init_stddev; 2]; mean.len()],
        mean,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub best: Vec<Action>,
    pub best_score: f64,
    pub distribution: PlanDistribution,
    /// Best score seen after each iteration.
    pub best_trace: Vec<f64>,
}

pub fn sample_plans<R: Rng + ?Sized>(dist: &PlanDistribution, count: usize, limit: f64, rng: &mut R) -> Vec<Vec<Action>> {
    (0..count)
        .map(|_| {
            dist.mean
                .iter()
                .zip(&dist.stddev)
                .map(|(m, s)| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Action::new(m[0] + s[0] * a, m[1] + s[1] * b).clamped(limit)
                })
                .collect()
        })
        .collect()
}

/// Indices of the `k` best scores, best first; ties keep sample order.
pub fn elite_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Mean and standard deviation of the elite plans, stddev floored.
pub fn refit(plans: &[Vec<Action>], elites: &[usize], min_stddev: f64) -> PlanDistribution {
    let horizon = plans[elites[0]].len();
    let n = elites.len() as f64;
    let mut mean = vec![[0.0; 2]; horizon];
    let mut stddev = vec![[0.0; 2]; horizon];
    for t in 0..horizon {
        for j in 0..2 {
            let vals = elites.iter().map(|&e| plans[e][t].as_array()[j]);
            let m = vals.clone().sum::<f64>() / n;
            let var = vals.map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[t][j] = m;
            stddev[t][j] = var.sqrt().max(min_stddev);
        }
    }
    PlanDistribution { mean, stddev }
}

pub fn cem_plan<M: PlanningModel, R: Rng + ?Sized>(
    model: &M,
    mem: &M::Memory,
    obs: &Observation,
    init: PlanDistribution,
    config: &CemConfig,
    limit: f64,
    rng: &mut R,
) -> Result<PlanResult> {
    config.validate()?;
    if init.horizon() == 0 {
        return Err(Error::InvalidPlanner("empty initial distribution".into()));
    }
    let mut dist = init;
    let mut best: Option<(Vec<Action>, f64)> = None;
    let mut trace = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let plans = sample_plans(&dist, config.population, limit, rng);
        let scores = model.score(mem, obs, &plans);
        let elites = elite_indices(&scores, config.elite_count);
        let top = elites[0];
        if best.as_ref().is_none_or(|(_, s)| scores[top] > *s) {
            best = Some((plans[top].clone(), scores[top]));
        }
        trace.push(best.as_ref().map(|b| b.1).unwrap_or(f64::NEG_INFINITY));
        dist = refit(&plans, &elites, config.min_stddev);
    }
    let (best, best_score) = best.expect("at least one iteration");
    Ok(PlanResult {
        best,
        best_score,
        distribution: dist,
        best_trace: trace,
    })
}

/// Planner plus the model memory that tracks the real episode.
pub struct Agent<'m, M: PlanningModel, R: Rng> {
    model: &'m M,
    memory: M::Memory,
    previous: Option<PlanDistribution>,
    config: CemConfig,
    limit: f64,
    rng: R,
}

impl<'m, M: PlanningModel, R: Rng> Agent<'m, M, R> {
    pub fn new(model: &'m M, config: CemConfig, limit: f64, rng: R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            memory: model.fresh_memory(),
            model,
            previous: None,
            config,
            limit,
            rng,
        })
    }

    pub fn memory(&self) -> &M::Memory {
        &self.memory
    }

    /// Clear memory entirely (a new perturbation block).
    pub fn reset_memory(&mut self) {
        self.memory = self.model.fresh_memory();
        self.previous = None;
    }

    /// Start a new reach: the next plan is built from scratch.
    pub fn begin_reach(&mut self) {
        self.previous = None;
        self.model.start_reach(&mut self.memory);
    }

    pub fn is_planning_from_scratch(&self) -> bool {
        self.previous.is_none()
    }

    /// Plan from the current observation, commit the first action, and fold
    /// the executed pair into memory.
    pub fn act(&mut self, obs: &Observation) -> Result<Action> {
        let init = match &self.previous {
            None => PlanDistribution::fresh(self.config.horizon, self.config.init_stddev),
            Some(prev) => warm_start(prev, self.config.init_stddev),
        };
        let result = cem_plan(self.model, &self.memory, obs, init, &self.config, self.limit, &mut self.rng)?;
        let action = result.distribution.first_action(self.limit);
        self.previous = Some(result.distribution);
        self.model.advance(&mut self.memory, obs, action);
        Ok(action)
    }
}
