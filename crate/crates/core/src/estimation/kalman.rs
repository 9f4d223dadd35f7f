use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar range filter state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub d_hat_m: f64,
    /// Estimate variance (m²).
    pub p_hat: f64,
    /// Process noise standard deviation (m); enters as `q_std_m²`.
    pub q_std_m: f64,
    /// TOA measurement noise standard deviation (m); enters as `r_std_m²`.
    pub r_std_m: f64,
}

impl KalmanState {
    /// Starts from a TOA distance with variance `r_std_m²`.
    pub fn new(d0_m: f64, q_std_m: f64, r_std_m: f64) -> Result<Self> {
        let s = Self {
            d_hat_m: d0_m,
            p_hat: r_std_m * r_std_m,
            q_std_m,
            r_std_m,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.d_hat_m.is_finite() {
            return Err(Error::Argument("filter distance is not finite".into()));
        }
        if !(self.p_hat >= 0.0 && self.q_std_m >= 0.0 && self.r_std_m >= 0.0) {
            return Err(Error::Argument("filter variances must be non-negative".into()));
        }
        Ok(())
    }
}

/// Intermediate quantities of one filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanStep {
    pub state: KalmanState,
    pub prediction_m: f64,
    pub innovation_m: f64,
    pub gain: f64,
}

/// One step with the range rate `v_k` (positive = distance growing).
///
/// Prediction `D + v t`, then a correction toward the TOA distance with
/// gain `(p + q) / (p + q + r)`. When all three variances are zero the
/// measurement is taken as is.
pub fn kalman_step(state: &KalmanState, d_k: f64, v_k: f64, dt_s: f64) -> Result<KalmanStep> {
    if !(dt_s > 0.0 && dt_s.is_finite()) {
        return Err(Error::Argument(format!("time step {dt_s} s must be positive")));
    }
    if !(d_k.is_finite() && v_k.is_finite()) {
        return Err(Error::Argument("measurement is not finite".into()));
    }
    state.validate()?;
    let q = state.q_std_m * state.q_std_m;
    let r = state.r_std_m * state.r_std_m;
    let prior = state.p_hat + q;
    let total = prior + r;
    let (gain, p_hat) = if total > 0.0 && total.is_finite() {
        (prior / total, r * (prior / total))
    } else if total == 0.0 {
        (1.0, 0.0)
    } else {
        // r overflowed to infinity: dead reckoning
        (0.0, prior)
    };
    let prediction_m = state.d_hat_m + v_k * dt_s;
    let innovation_m = d_k - prediction_m;
    Ok(KalmanStep {
        state: KalmanState {
            d_hat_m: prediction_m + gain * innovation_m,
            p_hat,
            ..*state
        },
        prediction_m,
        innovation_m,
        gain,
    })
}

pub fn kalman_update(state: &KalmanState, d_k: f64, v_k: f64, dt_s: f64) -> Result<KalmanState> {
    kalman_step(state, d_k, v_k, dt_s).map(|s| s.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_step() {
        let s = KalmanState {
            d_hat_m: 1.0,
            p_hat: 1e-4,
            q_std_m: 0.01,
            r_std_m: 0.01,
        };
        let step = kalman_step(&s, 1.10, 5.0, 0.02).unwrap();
        assert!((step.prediction_m - 1.10).abs() < 1e-12);
        assert!(step.innovation_m.abs() < 1e-12);
        assert!((step.state.d_hat_m - 1.10).abs() < 1e-12);
        // (1e-4 + 1e-4) / (1e-4 + 1e-4 + 1e-4)
        assert!((step.gain - 2.0 / 3.0).abs() < 1e-12);
        assert!((step.state.p_hat - 1e-4 * 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn limits() {
        let mut s = KalmanState::new(2.0, 0.001, 1e9).unwrap();
        s.p_hat = 1e-6;
        let dr = kalman_update(&s, 7.0, -0.5, 0.1).unwrap();
        assert!((dr.d_hat_m - 1.95).abs() < 1e-12);
        let s0 = KalmanState::new(2.0, 0.001, 0.0).unwrap();
        let raw = kalman_update(&s0, 7.0, -0.5, 0.1).unwrap();
        assert_eq!(raw.d_hat_m, 7.0);
        let z = KalmanState::new(2.0, 0.0, 0.0).unwrap();
        assert_eq!(kalman_update(&z, 3.0, 1.0, 0.1).unwrap().d_hat_m, 3.0);
    }

    #[test]
    fn bad_step() {
        let s = KalmanState::new(1.0, 0.01, 0.01).unwrap();
        assert!(kalman_update(&s, 1.0, 0.0, 0.0).is_err());
        assert!(KalmanState::new(1.0, -1.0, 0.01).is_err());
    }

    #[test]
    fn variance_is_non_increasing_from_r_squared() {
        let mut s = KalmanState::new(1.0, 0.002, 0.003).unwrap();
        for _ in 0..50 {
            let next = kalman_update(&s, 1.0, 0.0, 0.05).unwrap();
            assert!(next.p_hat <= s.p_hat + 1e-18);
            s = next;
        }
    }

    proptest! {
        #[test]
        fn gain_bounds(
            d in -10.0..10.0f64, p in 0.0..1.0f64, q in 1e-6..1.0f64, r in 1e-6..1.0f64,
            meas in -10.0..10.0f64, v in -10.0..10.0f64, dt in 1e-3..1.0f64,
        ) {
            let s = KalmanState { d_hat_m: d, p_hat: p, q_std_m: q, r_std_m: r };
            let step = kalman_step(&s, meas, v, dt).unwrap();
            prop_assert!(step.gain > 0.0 && step.gain < 1.0);
            prop_assert!(step.state.p_hat >= 0.0);
            prop_assert!(step.state.p_hat <= r * r);
        }
    }
}
