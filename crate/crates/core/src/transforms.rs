//! Visuomotor perturbations: 2×2 linear maps from hand displacement to
//! cursor displacement, and the two training-condition samplers.
//!
//! Composition order is `R(rotation) · Shear(shear) · Scale(sx, sy)` with
//! `Shear = [[1, s], [0, 1]]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    /// degrees, counter-clockwise
    pub rotation: f64,
    pub shear: f64,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl TransformSpec {
    pub const IDENTITY: TransformSpec = TransformSpec::rotation(0.0);

    pub const fn rotation(degrees: f64) -> Self {
        Self {
            rotation: degrees,
            shear: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
        }
    }

    pub fn is_pure_rotation(&self) -> bool {
        self.shear == 0.0 && self.scale_x == 1.0 && self.scale_y == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTransform {
    /// Row-major 2×2 matrix.
    pub m: [[f64; 2]; 2],
    pub spec: TransformSpec,
}

impl LinearTransform {
    pub fn identity() -> Self {
        compose(&TransformSpec::IDENTITY).expect("identity spec is valid")
    }

    pub fn pure_rotation(degrees: f64) -> Self {
        compose(&TransformSpec::rotation(degrees)).expect("rotation spec is valid")
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Rotation angle (degrees) recovered from the first column; exact for
    /// pure rotations and for any `R · upper-triangular` factorisation with
    /// positive diagonal.
    pub fn rotation_degrees(&self) -> f64 {
        self.m[1][0].atan2(self.m[0][0]).to_degrees()
    }
}

pub fn compose(spec: &TransformSpec) -> Result<LinearTransform> {
    let vals = [spec.rotation, spec.shear, spec.scale_x, spec.scale_y];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transform spec"));
    }
    if spec.scale_x <= 0.0 || spec.scale_y <= 0.0 {
        return Err(Error::InvalidTransform(format!(
            "scales must be positive, got ({}, {})",
            spec.scale_x, spec.scale_y
        )));
    }
    let (s, c) = spec.rotation.to_radians().sin_cos();
    // Shear · Scale = [[sx, shear·sy], [0, sy]]
    let u00 = spec.scale_x;
    let u01 = spec.shear * spec.scale_y;
    let u11 = spec.scale_y;
    let m = [[c * u00, c * u01 - s * u11], [s * u00, s * u01 + c * u11]];
    Ok(LinearTransform { m, spec: *spec })
}

pub fn apply(t: &LinearTransform, p: Point2) -> Point2 {
    Point2::new(
        t.m[0][0] * p.x + t.m[0][1] * p.y,
        t.m[1][0] * p.x + t.m[1][1] * p.y,
    )
}

/// Ranges for the Rot and Rot+ samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerParams {
    /// Uniform rotation range in degrees, shared by both conditions.
    pub rotation_range: [f64; 2],
    /// Uniform shear range (Rot+ only).
    pub shear_range: [f64; 2],
    /// Log-uniform range for each axis scale (Rot+ only).
    pub scale_range: [f64; 2],
    /// Open band of |rotation| (degrees) replaced by a pure rotation in Rot+.
    pub substitution_band: [f64; 2],
    /// Magnitude of the substituted rotation.
    pub substitute_rotation: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            rotation_range: [-180.0, 180.0],
            shear_range: [-0.5, 0.5],
            scale_range: [0.77, 2.2],
            substitution_band: [50.0, 70.0],
            substitute_rotation: 60.0,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |key: &str, r: [f64; 2]| -> Result<()> {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::config(
                    format!("transforms.{key}"),
                    "expected a finite [low, high] pair with low <= high",
                ));
            }
            Ok(())
        };
        ordered("rotation_range", self.rotation_range)?;
        ordered("shear_range", self.shear_range)?;
        ordered("scale_range", self.scale_range)?;
        ordered("substitution_band", self.substitution_band)?;
        if self.scale_range[0] <= 0.0 {
            return Err(Error::config("transforms.scale_range", "scales must be positive"));
        }
        if !(self.substitute_rotation.is_finite()) {
            return Err(Error::config("transforms.substitute_rotation", "must be finite"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        // Still consume a draw so stream positions do not depend on ranges.
        let _: f64 = rng.random();
        return range[0];
    }
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

/// Pure rotation with angle uniform on `params.rotation_range`.
pub fn sample_rot<R: Rng + ?Sized>(rng: &mut R, params: &SamplerParams) -> LinearTransform {
    let angle = uniform(rng, params.rotation_range);
    LinearTransform::pure_rotation(angle)
}

/// Rotation composed with shear and per-axis scale; rotations whose
/// magnitude falls strictly inside the substitution band are replaced by a
/// pure rotation of `±substitute_rotation`.
pub fn sample_rotplus<R: Rng + ?Sized>(rng: &mut R, params: &SamplerParams) -> LinearTransform {
    let rotation = uniform(rng, params.rotation_range);
    let shear = uniform(rng, params.shear_range);
    let [lo, hi] = params.scale_range;
    let log_range = [lo.ln(), hi.ln()];
    let scale_x = uniform(rng, log_range).exp();
    let scale_y = uniform(rng, log_range).exp();
    rotplus_from_draws(
        TransformSpec {
            rotation,
            shear,
            scale_x,
            scale_y,
        },
        params,
    )
}

/// The Rot+ substitution rule applied to an already drawn spec.
pub fn rotplus_from_draws(drawn: TransformSpec, params: &SamplerParams) -> LinearTransform {
    let [lo, hi] = params.substitution_band;
    let mag = drawn.rotation.abs();
    let spec = if mag > lo && mag < hi {
        TransformSpec::rotation(params.substitute_rotation.copysign(drawn.rotation))
    } else {
        drawn
    };
    compose(&spec).expect("sampled scales are positive")
}

/// Training condition: which perturbation family the corpus is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "rot")]
    Rot,
    #[serde(rename = "rotplus")]
    RotPlus,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::Rot, Condition::RotPlus];

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, params: &SamplerParams) -> LinearTransform {
        match self {
            Condition::Rot => sample_rot(rng, params),
            Condition::RotPlus => sample_rotplus(rng, params),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Condition::Rot => "rot",
            Condition::RotPlus => "rotplus",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Condition::Rot => 0,
            Condition::RotPlus => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Condition::Rot),
            1 => Some(Condition::RotPlus),
            _ => None,
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rot" => Ok(Condition::Rot),
            "rotplus" | "rot+" | "rot-plus" => Ok(Condition::RotPlus),
            other => Err(Error::config("condition", format!("unknown condition `{other}`"))),
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn assert_mat(m: [[f64; 2]; 2], e: [[f64; 2]; 2], tol: f64) {
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(m[i][j], e[i][j], epsilon = tol);
            }
        }
    }

    #[test]
    fn compose_reference_values() {
        let id = compose(&TransformSpec::IDENTITY).unwrap();
        assert_mat(id.m, [[1.0, 0.0], [0.0, 1.0]], 0.0);

        let quarter = LinearTransform::pure_rotation(90.0);
        let p = apply(&quarter, Point2::new(1.0, 0.0));
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-15);

        let sixty = LinearTransform::pure_rotation(60.0);
        let p = apply(&sixty, Point2::new(8.0, 0.0));
        assert_abs_diff_eq!(p.x, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 6.928203230275509, epsilon = 1e-12);
    }

    #[test]
    fn apply_scale_and_shear() {
        let scale = compose(&TransformSpec {
            scale_x: 1.3,
            scale_y: 1.3,
            ..TransformSpec::IDENTITY
        })
        .unwrap();
        let p = apply(&scale, Point2::new(2.0, -1.0));
        assert_abs_diff_eq!(p.x, 2.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, -1.3, epsilon = 1e-15);

        let shear = compose(&TransformSpec {
            shear: 0.35,
            ..TransformSpec::IDENTITY
        })
        .unwrap();
        assert_eq!(apply(&shear, Point2::new(0.0, 1.0)), Point2::new(0.35, 1.0));
        assert_eq!(apply(&LinearTransform::identity(), Point2::new(3.5, -2.0)), Point2::new(3.5, -2.0));
    }

    #[test]
    fn non_positive_scale_rejected() {
        let bad = TransformSpec {
            scale_x: 0.0,
            ..TransformSpec::IDENTITY
        };
        assert!(compose(&bad).is_err());
        let bad = TransformSpec {
            scale_y: -1.0,
            ..TransformSpec::IDENTITY
        };
        assert!(compose(&bad).is_err());
    }

    #[test]
    fn substitution_rule() {
        let p = SamplerParams::default();
        let drawn = |rotation| TransformSpec {
            rotation,
            shear: 0.3,
            scale_x: 1.5,
            scale_y: 0.9,
        };
        assert_eq!(rotplus_from_draws(drawn(55.0), &p).spec, TransformSpec::rotation(60.0));
        assert_eq!(rotplus_from_draws(drawn(-65.0), &p).spec, TransformSpec::rotation(-60.0));
        // band edges are exclusive
        assert_eq!(rotplus_from_draws(drawn(50.0), &p).spec, drawn(50.0));
        assert_eq!(rotplus_from_draws(drawn(-70.0), &p).spec, drawn(-70.0));
    }

    #[test]
    fn rotplus_outside_band_keeps_linear_part() {
        let t = rotplus_from_draws(
            TransformSpec {
                rotation: 45.0,
                shear: 0.2,
                scale_x: 1.3,
                scale_y: 1.1,
            },
            &SamplerParams::default(),
        );
        // R(45°) · [[1, 0.2], [0, 1]] · diag(1.3, 1.1), multiplied out by hand
        assert_mat(
            t.m,
            [
                [0.9192388155425119, -0.6222539674441618],
                [0.9192388155425117, 0.9333809511662429],
            ],
            1e-12,
        );
    }

    #[test]
    fn rot_samples_are_rotations() {
        let p = SamplerParams::default();
        let mut rng = stream_rng(3, Stream::Transforms, 0);
        for _ in 0..1000 {
            let t = sample_rot(&mut rng, &p);
            assert!(t.spec.is_pure_rotation());
            assert_abs_diff_eq!(t.det(), 1.0, epsilon = 1e-12);
            let m = t.m;
            // mᵀm = I
            assert_abs_diff_eq!(m[0][0] * m[0][0] + m[1][0] * m[1][0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m[0][1] * m[0][1] + m[1][1] * m[1][1], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m[0][0] * m[0][1] + m[1][0] * m[1][1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn samplers_are_seed_reproducible() {
        let p = SamplerParams::default();
        let draw = |seed| {
            let mut rng = stream_rng(seed, Stream::Transforms, 0);
            (0..20)
                .map(|_| (sample_rot(&mut rng, &p).spec, sample_rotplus(&mut rng, &p).spec))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    fn chi_square_uniform(samples: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> (f64, f64) {
        let mut counts = vec![0usize; bins];
        let mut n = 0usize;
        for x in samples {
            let k = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
            counts[k.min(bins - 1)] += 1;
            n += 1;
        }
        let expected = n as f64 / bins as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
        (stat, critical)
    }

    #[test]
    fn rot_angles_are_uniform() {
        let p = SamplerParams::default();
        let mut rng = stream_rng(5, Stream::Transforms, 0);
        let angles = (0..100_000).map(|_| sample_rot(&mut rng, &p).spec.rotation);
        let (stat, critical) = chi_square_uniform(angles, -180.0, 180.0, 36);
        assert!(stat < critical, "chi2 {stat} >= {critical}");
    }

    #[test]
    fn rotplus_never_lands_inside_band_except_substitute() {
        let p = SamplerParams::default();
        let mut rng = stream_rng(9, Stream::Transforms, 0);
        let mut substituted = 0;
        for _ in 0..100_000 {
            let t = sample_rotplus(&mut rng, &p);
            let mag = t.spec.rotation.abs();
            if mag > 50.0 && mag < 70.0 {
                assert_eq!(mag, 60.0);
                assert!(t.spec.is_pure_rotation());
                substituted += 1;
            }
            assert!((0.1..=10.0).contains(&t.det().abs()));
        }
        // band mass is 40/360 of the rotation range
        let frac = substituted as f64 / 100_000.0;
        assert!((frac - 40.0 / 360.0).abs() < 0.005, "{frac}");
    }

    #[test]
    fn rotplus_mean_scale_is_about_1_3() {
        let p = SamplerParams::default();
        let mut rng = stream_rng(2, Stream::Transforms, 0);
        let n = 20_000;
        let mut total = 0.0;
        for _ in 0..n {
            let t = sample_rotplus(&mut rng, &p);
            total += 0.5 * (t.spec.scale_x + t.spec.scale_y);
        }
        let mean = total / n as f64;
        assert!((1.25..1.45).contains(&mean), "{mean}");
    }

    proptest! {
        #[test]
        fn rotation_angle_round_trips(deg in -179.9f64..179.9) {
            let t = LinearTransform::pure_rotation(deg);
            prop_assert!((t.rotation_degrees() - deg).abs() < 1e-9);
        }

        #[test]
        fn apply_is_linear(
            rot in -180.0f64..180.0, shear in -0.5f64..0.5, sx in 0.5f64..2.0, sy in 0.5f64..2.0,
            a in -5.0f64..5.0, px in -10.0f64..10.0, py in -10.0f64..10.0, qx in -10.0f64..10.0, qy in -10.0f64..10.0,
        ) {
            let t = compose(&TransformSpec { rotation: rot, shear, scale_x: sx, scale_y: sy }).unwrap();
            let p = Point2::new(px, py);
            let q = Point2::new(qx, qy);
            let lhs = apply(&t, p * a + q);
            let rhs = apply(&t, p) * a + apply(&t, q);
            prop_assert!((lhs - rhs).norm() < 1e-9);
            prop_assert!((t.rotation_degrees() - rot).abs() < 1e-9 || (t.rotation_degrees() - rot).abs() > 359.0);
        }
    }
}
