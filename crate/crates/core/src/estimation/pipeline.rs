use serde::{Deserialize, Serialize};

use super::doppler::{estimate_doppler_with, DopplerResult};
use super::kalman::{kalman_step, KalmanState};
use super::toa::{guard_samples, toa_from_correlator, ToaResult};
use crate::channel::SoundSpeed;
use crate::dsp::Correlator;
use crate::error::{Error, Result};
use crate::signals::{HopPlan, SignalFrame};

/// Noise scales of the range filter.
///
/// `r_std = r_quanta * c / fs + r_motion_factor * |v| * burst_duration`
/// and `q_std = q_velocity_fraction * |v| * dt + q_floor_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub r_quanta: f64,
    pub r_motion_factor: f64,
    pub q_velocity_fraction: f64,
    pub q_floor_m: f64,
    /// Fixed TOA noise, replacing the formula above.
    pub r_std_override_m: Option<f64>,
    /// Longest gap the filter coasts over before restarting from TOA.
    pub max_coast_s: f64,
    /// TOA readings whose innovation exceeds this many predicted standard
    /// deviations are replaced by the prediction; 0 disables the gate.
    pub gate_sigmas: f64,
    /// After this many consecutive gated readings the filter restarts, as
    /// soon as two successive gated readings agree with each other.
    pub max_gated: u32,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            r_quanta: 2.0,
            r_motion_factor: 0.5,
            q_velocity_fraction: 0.5,
            q_floor_m: 2e-3,
            r_std_override_m: None,
            max_coast_s: 0.5,
            gate_sigmas: 5.0,
            max_gated: 3,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("estimation.r_quanta", self.r_quanta),
            ("estimation.r_motion_factor", self.r_motion_factor),
            ("estimation.q_velocity_fraction", self.q_velocity_fraction),
            ("estimation.q_floor_m", self.q_floor_m),
            ("estimation.max_coast_s", self.max_coast_s),
            ("estimation.gate_sigmas", self.gate_sigmas),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, "must be a non-negative number"));
            }
        }
        if let Some(r) = self.r_std_override_m {
            if !(r >= 0.0) {
                return Err(Error::validation("estimation.r_std_override_m", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// One burst of a range track; measurement fields are `None` for gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeEntry {
    pub t_s: f64,
    pub toa: Option<ToaResult>,
    pub doppler: Option<DopplerResult>,
    pub fused_m: Option<f64>,
    /// The TOA reading was rejected by the innovation gate.
    #[serde(default)]
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTrack {
    pub beacon_id: usize,
    pub entries: Vec<RangeEntry>,
}

/// Incremental TOA/Doppler fusion for one beacon.
#[derive(Debug, Clone)]
pub struct RangeTracker {
    beacon_id: usize,
    config: EstimationConfig,
    quantum_m: f64,
    burst_duration_s: f64,
    // filter state, time of last update, closing speed at that update
    last: Option<(KalmanState, f64, f64)>,
    gated_run: u32,
    // time of the last accepted TOA
    last_accepted_s: f64,
    // last gated reading: time, distance
    last_gated: Option<(f64, f64)>,
    track: RangeTrack,
}

impl RangeTracker {
    pub fn new(
        beacon_id: usize,
        config: EstimationConfig,
        c: SoundSpeed,
        sample_rate_hz: f64,
        burst_duration_s: f64,
    ) -> Self {
        Self {
            beacon_id,
            config,
            quantum_m: c.value_mps / sample_rate_hz,
            burst_duration_s,
            last: None,
            gated_run: 0,
            last_accepted_s: f64::NEG_INFINITY,
            last_gated: None,
            track: RangeTrack {
                beacon_id,
                entries: Vec::new(),
            },
        }
    }

    pub fn beacon_id(&self) -> usize {
        self.beacon_id
    }

    fn r_std(&self, closing_mps: f64) -> f64 {
        self.config.r_std_override_m.unwrap_or(
            self.config.r_quanta * self.quantum_m
                + self.config.r_motion_factor * closing_mps.abs() * self.burst_duration_s,
        )
    }

    /// Adds the burst at `t_s`; `None` records a gap.
    pub fn push(&mut self, t_s: f64, measurement: Option<(ToaResult, Option<DopplerResult>)>) -> Result<&RangeEntry> {
        if let Some(prev) = self.track.entries.last() {
            if !(t_s > prev.t_s) {
                return Err(Error::Argument(format!("burst time {t_s} s does not follow {} s", prev.t_s)));
            }
        }
        let entry = match measurement {
            None => RangeEntry {
                t_s,
                toa: None,
                doppler: None,
                fused_m: None,
                gated: false,
            },
            Some((toa, doppler)) => {
                let closing = doppler.map_or(0.0, |d| d.velocity_mps);
                let r_std = self.r_std(closing);
                let mut gated = false;
                let state = match self.last {
                    Some((state, t_prev, closing_prev)) if t_s - self.last_accepted_s <= self.config.max_coast_s => {
                        let dt = t_s - t_prev;
                        // trapezoid over the interval; the filter wants range rate
                        let range_rate = -0.5 * (closing + closing_prev);
                        let q_std = self.config.q_velocity_fraction * range_rate.abs() * dt + self.config.q_floor_m;
                        let state = KalmanState {
                            q_std_m: q_std,
                            r_std_m: r_std,
                            ..state
                        };
                        let step = kalman_step(&state, toa.distance_m, range_rate, dt)?;
                        let spread = (state.p_hat + q_std * q_std + r_std * r_std).sqrt();
                        let outlier = self.config.gate_sigmas > 0.0
                            && step.innovation_m.abs() > self.config.gate_sigmas * spread;
                        // persistent disagreement: trust the measurements again
                        // once they agree among themselves
                        let restart = outlier
                            && self.gated_run >= self.config.max_gated
                            && self.last_gated.is_some_and(|(tg, dg)| {
                                let drift = toa.distance_m - (dg + range_rate * (t_s - tg));
                                drift.abs() <= self.config.gate_sigmas * std::f64::consts::SQRT_2 * r_std
                            });
                        gated = outlier && !restart;
                        if gated {
                            self.last_gated = Some((t_s, toa.distance_m));
                            KalmanState {
                                d_hat_m: step.prediction_m,
                                p_hat: state.p_hat + q_std * q_std,
                                ..state
                            }
                        } else if restart {
                            KalmanState::new(toa.distance_m, self.config.q_floor_m, r_std)?
                        } else {
                            step.state
                        }
                    }
                    _ => KalmanState::new(toa.distance_m, self.config.q_floor_m, r_std)?,
                };
                if gated {
                    self.gated_run += 1;
                } else {
                    self.gated_run = 0;
                    self.last_gated = None;
                    self.last_accepted_s = t_s;
                }
                self.last = Some((state, t_s, closing));
                RangeEntry {
                    t_s,
                    toa: Some(toa),
                    doppler,
                    fused_m: Some(state.d_hat_m),
                    gated,
                }
            }
        };
        self.track.entries.push(entry);
        Ok(self.track.entries.last().expect("just pushed"))
    }

    pub fn track(&self) -> &RangeTrack {
        &self.track
    }

    pub fn into_track(self) -> RangeTrack {
        self.track
    }
}

/// TOA from the correlation peak, then Doppler over the burst gated at
/// that peak.
pub fn measure_burst(
    received: &SignalFrame,
    correlator: &Correlator,
    plan: &HopPlan,
    bit_duration_s: f64,
    c: SoundSpeed,
) -> Result<(ToaResult, DopplerResult)> {
    let fs = received.sample_rate_hz;
    let toa = toa_from_correlator(correlator, received, c, guard_samples(fs))?;
    let end = (toa.peak_sample + correlator.template_len()).min(received.len());
    let gated = SignalFrame::new(received.samples[toa.peak_sample..end].to_vec(), fs, received.t0_s)?;
    let doppler = estimate_doppler_with(&gated, plan, bit_duration_s, c)?;
    Ok((toa, doppler))
}

/// One synchronized burst as seen by a beacon; `received` is `None` when
/// the beacon heard nothing.
#[derive(Debug, Clone, Copy)]
pub struct BurstInput<'a> {
    pub t_s: f64,
    pub received: Option<&'a SignalFrame>,
    pub reference: &'a SignalFrame,
    pub plan: &'a HopPlan,
}

/// Per-burst TOA, Doppler and fused range for one beacon.
///
/// Bursts whose estimation fails with no-signal become gaps.
pub fn run_range_pipeline(
    beacon_id: usize,
    bursts: &[BurstInput<'_>],
    bit_duration_s: f64,
    c: SoundSpeed,
    config: &EstimationConfig,
) -> Result<RangeTrack> {
    config.validate()?;
    let Some(first) = bursts.first() else {
        return Ok(RangeTrack {
            beacon_id,
            entries: Vec::new(),
        });
    };
    let fs = first.reference.sample_rate_hz;
    let burst_duration = first.reference.len() as f64 / fs;
    let mut tracker = RangeTracker::new(beacon_id, config.clone(), c, fs, burst_duration);
    for b in bursts {
        let measurement = match b.received {
            None => None,
            Some(rx) => {
                let correlator = Correlator::new(&b.reference.samples, rx.len());
                match measure_burst(rx, &correlator, b.plan, bit_duration_s, c) {
                    Ok((toa, doppler)) => Some((toa, Some(doppler))),
                    Err(Error::NoSignal) => None,
                    Err(e) => return Err(e),
                }
            }
        };
        tracker.push(b.t_s, measurement)?;
    }
    Ok(tracker.into_track())
}
