use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PositionFix, Stage};
use crate::channel::SoundSpeed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightMeasurement {
    pub round_trip_s: f64,
    pub ceiling_height_m: f64,
    /// Drone-to-ceiling distance `c t / 2`.
    pub h_prime_m: f64,
    pub drone_height_m: f64,
}

/// Height below a ceiling at `ceiling_height_m` from an upward echo.
pub fn height_from_echo(round_trip_s: f64, ceiling_height_m: f64, c: SoundSpeed) -> Result<HeightMeasurement> {
    if !(round_trip_s >= 0.0 && round_trip_s.is_finite()) {
        return Err(Error::Argument(format!("round trip {round_trip_s} s must be non-negative")));
    }
    if !(ceiling_height_m > 0.0 && ceiling_height_m.is_finite()) {
        return Err(Error::Argument(format!("ceiling height {ceiling_height_m} m must be positive")));
    }
    let h_prime_m = c.value_mps * round_trip_s / 2.0;
    let drone_height_m = ceiling_height_m - h_prime_m;
    if !(0.0..=ceiling_height_m).contains(&drone_height_m) {
        return Err(Error::EchoInconsistent(format!(
            "echo puts the ceiling {h_prime_m} m away, beyond the {ceiling_height_m} m room height"
        )));
    }
    Ok(HeightMeasurement {
        round_trip_s,
        ceiling_height_m,
        h_prime_m,
        drone_height_m,
    })
}

/// Replaces z by `w1 z + w2 h_drone`; x and y are untouched.
pub fn fuse_height(fix: &PositionFix, h: &HeightMeasurement, w1: f64, w2: f64) -> Result<PositionFix> {
    if !(w1 >= 0.0 && w2 >= 0.0) || (w1 + w2 - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("height weights {w1}, {w2} must be non-negative and sum to 1")));
    }
    let mut out = *fix;
    out.xyz_m.z = w1 * fix.xyz_m.z + w2 * h.drone_height_m;
    out.stage = Stage::Stage3;
    Ok(out)
}

/// Upward ranging sensor: the round trip is timed on the sample clock
/// and blurred by Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoModel {
    pub sample_rate_hz: f64,
    pub jitter_s: f64,
}

impl EchoModel {
    pub fn round_trip_s(&self, drone_z_m: f64, ceiling_height_m: f64, c: SoundSpeed, rng: &mut impl Rng) -> f64 {
        let exact = 2.0 * (ceiling_height_m - drone_z_m) / c.value_mps;
        let quantized = (exact * self.sample_rate_hz).round() / self.sample_rate_hz;
        let jitter: f64 = rng.sample(StandardNormal);
        (quantized + self.jitter_s * jitter).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn fix(z: f64) -> PositionFix {
        PositionFix {
            xyz_m: Vec3::new(1.0, 2.0, z),
            stage: Stage::Stage2,
            residual_m: 0.0,
            dop: None,
        }
    }

    #[test]
    fn echo_geometry() {
        let c = SoundSpeed::new(340.0);
        let h = height_from_echo(0.0, 3.0, c).unwrap();
        assert_eq!(h.drone_height_m, 3.0);
        let h = height_from_echo(2.0 * 1.5 / 340.0, 3.0, c).unwrap();
        assert!((h.drone_height_m - 1.5).abs() < 1e-12);
        assert!((h.h_prime_m - 1.5).abs() < 1e-12);
        assert!(matches!(height_from_echo(0.05, 3.0, c), Err(Error::EchoInconsistent(_))));
        assert!(matches!(height_from_echo(-0.001, 3.0, c), Err(Error::Argument(_))));
    }

    #[test]
    fn weights() {
        let c = SoundSpeed::new(340.0);
        let h = HeightMeasurement {
            drone_height_m: 1.6,
            ..height_from_echo(0.0, 3.0, c).unwrap()
        };
        assert_eq!(fuse_height(&fix(1.4), &h, 1.0, 0.0).unwrap().xyz_m.z, 1.4);
        assert_eq!(fuse_height(&fix(1.4), &h, 0.0, 1.0).unwrap().xyz_m.z, 1.6);
        let mid = fuse_height(&fix(1.4), &h, 0.5, 0.5).unwrap();
        assert!((mid.xyz_m.z - 1.5).abs() < 1e-12);
        assert_eq!((mid.xyz_m.x, mid.xyz_m.y), (1.0, 2.0));
        assert_eq!(mid.stage, Stage::Stage3);
        assert!(fuse_height(&fix(1.4), &h, 0.6, 0.6).is_err());
        assert!(fuse_height(&fix(1.4), &h, -0.5, 1.5).is_err());
    }

    #[test]
    fn noiseless_echo_is_quantized() {
        let c = SoundSpeed::new(343.0);
        let model = EchoModel {
            sample_rate_hz: 340_000.0,
            jitter_s: 0.0,
        };
        let mut rng = crate::rng::stream(1, &[]);
        let t = model.round_trip_s(1.234, 3.0, c, &mut rng);
        let h = height_from_echo(t, 3.0, c).unwrap();
        assert!((h.drone_height_m - 1.234).abs() <= 343.0 / 340_000.0 / 4.0 + 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn fused_height_is_between_inputs(z in 0.0..3.0f64, hd in 0.0..3.0f64, w1 in 0.0..1.0f64) {
            let h = HeightMeasurement { round_trip_s: 0.0, ceiling_height_m: 3.0, h_prime_m: 3.0 - hd, drone_height_m: hd };
            let out = fuse_height(&fix(z), &h, w1, 1.0 - w1).unwrap().xyz_m.z;
            proptest::prop_assert!(out >= z.min(hd) - 1e-12 && out <= z.max(hd) + 1e-12);
        }
    }
}
