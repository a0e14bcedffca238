//! Two-link planar arm: joint-space dynamics and forward kinematics.
//!
//! The arm is driven by joint angular accelerations. Velocities are
//! integrated first and the new velocity is used for the angle update
//! (semi-implicit Euler), which stays stable at the coarse control step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmState {
    pub shoulder_angle: f64,
    pub elbow_angle: f64,
    pub shoulder_vel: f64,
    pub elbow_vel: f64,
}

impl ArmState {
    pub fn is_finite(&self) -> bool {
        self.shoulder_angle.is_finite()
            && self.elbow_angle.is_finite()
            && self.shoulder_vel.is_finite()
            && self.elbow_vel.is_finite()
    }
}

/// Joint angular accelerations in rad/s².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub shoulder_acc: f64,
    pub elbow_acc: f64,
}

impl Action {
    pub const ZERO: Action = Action {
        shoulder_acc: 0.0,
        elbow_acc: 0.0,
    };

    pub const fn new(shoulder_acc: f64, elbow_acc: f64) -> Self {
        Self {
            shoulder_acc,
            elbow_acc,
        }
    }

    pub fn clamped(self, limit: f64) -> Self {
        Self::new(
            self.shoulder_acc.clamp(-limit, limit),
            self.elbow_acc.clamp(-limit, limit),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.shoulder_acc.is_finite() && self.elbow_acc.is_finite()
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.shoulder_acc, self.elbow_acc]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// Link lengths (cm), joint limits, control period and the rest pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmGeometry {
    pub upper_len: f64,
    pub fore_len: f64,
    /// rad/s
    pub vel_limit: f64,
    /// rad/s²
    pub acc_limit: f64,
    /// seconds per control step
    pub dt: f64,
    /// (shoulder, elbow) in radians
    pub initial_pose: [f64; 2],
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            upper_len: 30.0,
            fore_len: 35.0,
            // Slow enough that a learned model can follow it: at 20 rad/s² a
            // single step moves the cursor several cm and planning through a
            // desk-scale model fails.
            vel_limit: 1.5,
            acc_limit: 2.0,
            dt: 1.0 / 14.0,
            initial_pose: [120f64.to_radians(), (-90f64).to_radians()],
        }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("upper_len", self.upper_len),
            ("fore_len", self.fore_len),
            ("vel_limit", self.vel_limit),
            ("acc_limit", self.acc_limit),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("geometry.{name}"), format!("must be positive, got {v}")));
            }
        }
        if !(self.initial_pose[0].is_finite() && self.initial_pose[1].is_finite()) {
            return Err(Error::config("geometry.initial_pose", "must be finite"));
        }
        Ok(())
    }

    /// Number of whole control steps in `seconds` of simulated time.
    pub fn steps_for(&self, seconds: f64) -> usize {
        (seconds / self.dt).round() as usize
    }

    pub fn reach(&self) -> f64 {
        self.upper_len + self.fore_len
    }
}

pub fn initial_state(geom: &ArmGeometry) -> ArmState {
    ArmState {
        shoulder_angle: geom.initial_pose[0],
        elbow_angle: geom.initial_pose[1],
        shoulder_vel: 0.0,
        elbow_vel: 0.0,
    }
}

/// Advance the arm by one control period.
pub fn step_arm(state: &ArmState, action: Action, geom: &ArmGeometry) -> Result<ArmState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("arm state"));
    }
    if !action.is_finite() {
        return Err(Error::NonFinite("action"));
    }
    let a = action.clamped(geom.acc_limit);
    let dt = geom.dt;
    let vmax = geom.vel_limit;
    let shoulder_vel = (state.shoulder_vel + a.shoulder_acc * dt).clamp(-vmax, vmax);
    let elbow_vel = (state.elbow_vel + a.elbow_acc * dt).clamp(-vmax, vmax);
    Ok(ArmState {
        shoulder_angle: state.shoulder_angle + shoulder_vel * dt,
        elbow_angle: state.elbow_angle + elbow_vel * dt,
        shoulder_vel,
        elbow_vel,
    })
}

/// Hand position; the elbow angle is measured relative to the upper arm.
pub fn tip_position(state: &ArmState, geom: &ArmGeometry) -> Point2 {
    let t1 = state.shoulder_angle;
    let t12 = t1 + state.elbow_angle;
    Point2::new(
        geom.upper_len * t1.cos() + geom.fore_len * t12.cos(),
        geom.upper_len * t1.sin() + geom.fore_len * t12.sin(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn geom() -> ArmGeometry {
        ArmGeometry::default()
    }

    #[test]
    fn zero_action_at_rest_is_a_fixed_point() {
        let s = ArmState {
            shoulder_angle: 0.7,
            elbow_angle: -1.3,
            ..Default::default()
        };
        let next = step_arm(&s, Action::ZERO, &geom()).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn unit_shoulder_acceleration_from_rest() {
        let next = step_arm(&ArmState::default(), Action::new(1.0, 0.0), &geom()).unwrap();
        assert_abs_diff_eq!(next.shoulder_vel, 1.0 / 14.0, epsilon = 1e-15);
        assert_abs_diff_eq!(next.shoulder_angle, 1.0 / 196.0, epsilon = 1e-15);
        assert_eq!(next.elbow_vel, 0.0);
        assert_eq!(next.elbow_angle, 0.0);
    }

    #[test]
    fn oversized_action_is_clamped() {
        let g = geom();
        let s = initial_state(&g);
        let big = step_arm(&s, Action::new(10.0 * g.acc_limit, 0.0), &g).unwrap();
        let lim = step_arm(&s, Action::new(g.acc_limit, 0.0), &g).unwrap();
        assert_eq!(big, lim);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let g = geom();
        let s = initial_state(&g);
        assert!(step_arm(&s, Action::new(f64::NAN, 0.0), &g).is_err());
        let bad = ArmState {
            elbow_vel: f64::INFINITY,
            ..s
        };
        assert!(step_arm(&bad, Action::ZERO, &g).is_err());
    }

    #[test]
    fn kinematics_reference_poses() {
        let g = geom();
        let at = |a: f64, b: f64| {
            tip_position(
                &ArmState {
                    shoulder_angle: a,
                    elbow_angle: b,
                    ..Default::default()
                },
                &g,
            )
        };
        let p = at(0.0, 0.0);
        assert_abs_diff_eq!(p.x, 65.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);

        let p = at(90f64.to_radians(), (-90f64).to_radians());
        assert_abs_diff_eq!(p.x, 35.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 30.0, epsilon = 1e-12);

        let equal = ArmGeometry {
            upper_len: 30.0,
            fore_len: 30.0,
            ..g
        };
        let folded = tip_position(
            &ArmState {
                elbow_angle: std::f64::consts::PI,
                ..Default::default()
            },
            &equal,
        );
        assert_abs_diff_eq!(folded.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn initial_state_is_at_rest_and_repeatable() {
        let g = geom();
        let a = initial_state(&g);
        assert_eq!([a.shoulder_angle, a.elbow_angle], g.initial_pose);
        assert_eq!((a.shoulder_vel, a.elbow_vel), (0.0, 0.0));
        assert_eq!(a, initial_state(&g));
        // 120° shoulder, -90° elbow: forearm points along 30°.
        let p0 = tip_position(&a, &g);
        let expected = Point2::new(
            30.0 * 120f64.to_radians().cos() + 35.0 * 30f64.to_radians().cos(),
            30.0 * 120f64.to_radians().sin() + 35.0 * 30f64.to_radians().sin(),
        );
        assert_abs_diff_eq!(p0.x, expected.x, epsilon = 1e-12);
        assert_abs_diff_eq!(p0.y, expected.y, epsilon = 1e-12);
    }

    #[test]
    fn step_counts_match_control_rate() {
        let g = geom();
        assert_eq!(g.steps_for(2.0), 28);
        assert_eq!(g.steps_for(3.0), 42);
        assert_eq!(g.steps_for(0.5), 7);
    }

    #[test]
    fn geometry_validation() {
        assert!(geom().validate().is_ok());
        let bad = ArmGeometry { dt: 0.0, ..geom() };
        assert!(bad.validate().is_err());
        let bad = ArmGeometry { fore_len: -1.0, ..geom() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn velocities_stay_clamped(actions in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..80)) {
            let g = geom();
            let mut s = initial_state(&g);
            for (a, b) in actions {
                s = step_arm(&s, Action::new(a, b), &g).unwrap();
                prop_assert!(s.shoulder_vel.abs() <= g.vel_limit);
                prop_assert!(s.elbow_vel.abs() <= g.vel_limit);
                prop_assert!(tip_position(&s, &g).norm() <= g.reach() + 1e-9);
            }
        }

        #[test]
        fn stepping_is_deterministic(a in -30.0f64..30.0, b in -30.0f64..30.0, th in -3.0f64..3.0) {
            let g = geom();
            let s = ArmState { shoulder_angle: th, elbow_angle: -th, shoulder_vel: 0.5, elbow_vel: -0.2 };
            let x = step_arm(&s, Action::new(a, b), &g).unwrap();
            let y = step_arm(&s, Action::new(a, b), &g).unwrap();
            prop_assert_eq!(x.shoulder_angle.to_bits(), y.shoulder_angle.to_bits());
            prop_assert_eq!(x.elbow_vel.to_bits(), y.elbow_vel.to_bits());
        }
    }
}
