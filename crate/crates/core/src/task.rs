//! The reaching environment: goal sampling, the cursor observation, reward,
//! dwell-based termination and random-walk data collection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{initial_state, step_arm, tip_position, Action, ArmGeometry, ArmState};
use crate::error::{Error, Result};
use crate::point::Point2;
use crate::transforms::{apply, LinearTransform};

/// What the agent sees: the cursor and the goal, both in cm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub cursor: Point2,
    pub goal: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Step cap of a test reach (2 s).
    pub max_steps: usize,
    /// Length of one training random-walk segment (3 s).
    pub walk_steps: usize,
    /// Segments per training chain. Between segments the arm returns to
    /// rest and a new goal appears while the perturbation and the model's
    /// memory carry over, as between the reaches of a test block.
    pub walk_segments: usize,
    /// Consecutive in-region steps that end a reach (500 ms).
    pub dwell_steps: usize,
    pub goal_radius: f64,
    pub goal_dist: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 28,
            walk_steps: 42,
            walk_segments: 3,
            dwell_steps: 7,
            goal_radius: 1.6,
            goal_dist: 8.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_steps == 0 {
            return Err(Error::config("episode.walk_steps", "must be positive"));
        }
        if self.walk_segments == 0 {
            return Err(Error::config("episode.walk_segments", "must be positive"));
        }
        if self.dwell_steps == 0 {
            return Err(Error::config("episode.dwell_steps", "must be positive"));
        }
        if !(self.goal_radius.is_finite() && self.goal_radius > 0.0) {
            return Err(Error::config("episode.goal_radius", "must be positive"));
        }
        if !(self.goal_dist.is_finite() && self.goal_dist > 0.0) {
            return Err(Error::config("episode.goal_dist", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
    pub dwell_count: usize,
}

/// One draw from the task distribution: a fixed perturbation and goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskInstance {
    pub transform: LinearTransform,
    pub goal: Point2,
    pub episode: EpisodeConfig,
    pub geom: ArmGeometry,
}

/// Goal at `goal_dist` from the origin, angle uniform on [0, 2π).
pub fn sample_goal<R: Rng + ?Sized>(rng: &mut R, config: &EpisodeConfig) -> Point2 {
    let angle = std::f64::consts::TAU * rng.random::<f64>();
    goal_at_angle(angle, config)
}

pub fn goal_at_angle(angle: f64, config: &EpisodeConfig) -> Point2 {
    Point2::from_polar(config.goal_dist, angle)
}

pub fn reward(cursor: Point2, goal: Point2) -> f64 {
    -cursor.distance(goal)
}

/// Cursor shown for a given hand position: the perturbation applied to the
/// hand's displacement from its rest position `p0`.
pub fn cursor_for(arm: &ArmState, transform: &LinearTransform, p0: Point2, geom: &ArmGeometry) -> Point2 {
    apply(transform, tip_position(arm, geom) - p0)
}

pub fn observe(arm: &ArmState, task: &TaskInstance) -> Observation {
    let p0 = tip_position(&initial_state(&task.geom), &task.geom);
    Observation {
        cursor: cursor_for(arm, &task.transform, p0, &task.geom),
        goal: task.goal,
    }
}

/// A single reach in progress.
#[derive(Debug, Clone)]
pub struct Env {
    task: TaskInstance,
    p0: Point2,
    arm: ArmState,
    obs: Observation,
    steps: usize,
    dwell: usize,
    done: bool,
}

impl Env {
    pub fn new(task: TaskInstance) -> Self {
        let arm = initial_state(&task.geom);
        let p0 = tip_position(&arm, &task.geom);
        let obs = Observation {
            cursor: cursor_for(&arm, &task.transform, p0, &task.geom),
            goal: task.goal,
        };
        // A zero-length episode is over before it starts.
        let done = task.episode.max_steps == 0;
        Self {
            task,
            p0,
            arm,
            obs,
            steps: 0,
            dwell: 0,
            done,
        }
    }

    pub fn task(&self) -> &TaskInstance {
        &self.task
    }

    pub fn observation(&self) -> Observation {
        self.obs
    }

    pub fn arm(&self) -> &ArmState {
        &self.arm
    }

    pub fn rest_tip(&self) -> Point2 {
        self.p0
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Whether the reach ended by dwelling in the goal region.
    pub fn reached(&self) -> bool {
        self.dwell >= self.task.episode.dwell_steps
    }

    pub fn step(&mut self, action: Action) -> Result<StepRecord> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let action = action.clamped(self.task.geom.acc_limit);
        self.arm = step_arm(&self.arm, action, &self.task.geom)?;
        self.steps += 1;
        let cursor = cursor_for(&self.arm, &self.task.transform, self.p0, &self.task.geom);
        self.obs = Observation {
            cursor,
            goal: self.task.goal,
        };
        let dist = cursor.distance(self.task.goal);
        if dist <= self.task.episode.goal_radius {
            self.dwell += 1;
        } else {
            self.dwell = 0;
        }
        self.done = self.dwell >= self.task.episode.dwell_steps || self.steps >= self.task.episode.max_steps;
        Ok(StepRecord {
            obs: self.obs,
            action,
            reward: -dist,
            done: self.done,
            dwell_count: self.dwell,
        })
    }
}

pub fn env_step(env: &mut Env, action: Action) -> Result<StepRecord> {
    env.step(action)
}

/// Observations `o_0..o_T` and the actions `a_0..a_{T-1}` between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn cursors(&self) -> impl Iterator<Item = Point2> + '_ {
        self.observations.iter().map(|o| o.cursor)
    }
}

pub fn uniform_action<R: Rng + ?Sized>(rng: &mut R, limit: f64) -> Action {
    let a = limit * (2.0 * rng.random::<f64>() - 1.0);
    let b = limit * (2.0 * rng.random::<f64>() - 1.0);
    Action::new(a, b)
}

/// Uniform i.i.d. actions for exactly `steps` steps from the rest pose,
/// regardless of whether the cursor visits the goal region.
pub fn random_walk<R: Rng + ?Sized>(task: &TaskInstance, steps: usize, rng: &mut R) -> Trajectory {
    let geom = &task.geom;
    let mut arm = initial_state(geom);
    let p0 = tip_position(&arm, geom);
    let mut observations = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    observations.push(Observation {
        cursor: cursor_for(&arm, &task.transform, p0, geom),
        goal: task.goal,
    });
    for _ in 0..steps {
        let a = uniform_action(rng, geom.acc_limit);
        arm = step_arm(&arm, a, geom).expect("walk stays finite");
        actions.push(a);
        observations.push(Observation {
            cursor: cursor_for(&arm, &task.transform, p0, geom),
            goal: task.goal,
        });
    }
    Trajectory {
        observations,
        actions,
    }
}

/// Re-run recorded actions through the arm and perturbation.
pub fn replay_cursors(task: &TaskInstance, actions: &[Action]) -> Result<Vec<Point2>> {
    let geom = &task.geom;
    let mut arm = initial_state(geom);
    let p0 = tip_position(&arm, geom);
    let mut out = Vec::with_capacity(actions.len() + 1);
    out.push(cursor_for(&arm, &task.transform, p0, geom));
    for &a in actions {
        arm = step_arm(&arm, a, geom)?;
        out.push(cursor_for(&arm, &task.transform, p0, geom));
    }
    Ok(out)
}
