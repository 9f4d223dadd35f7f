//! Experiment description: room, beacons, transmitter clover, medium,
//! channel, trajectory and processing settings, stored as TOML.

mod trajectory;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{sound_speed_from_temperature, ChannelConfig, Clover, SoundSpeed, SoundSpeedSource};
use crate::error::{Error, Result};
use crate::estimation::EstimationConfig;
use crate::geometry::{RoomBox, Vec3};
use crate::localization::BeaconSet;
use crate::signals::{
    WaveformParams, DEFAULT_BITS_PER_BURST, DEFAULT_BIT_DURATION_S, DEFAULT_CARRIERS_HZ, DEFAULT_SAMPLE_RATE_HZ,
};

pub use trajectory::{
    radial_state, random_trajectory, Motion, Trajectory, TrajectorySample, WALL_MARGIN_M, CRUISE_FRACTION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub carriers_hz: Vec<f64>,
    pub sample_rate_hz: f64,
    pub bit_duration_s: f64,
    pub bits_per_burst: usize,
    pub phase_rad: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            carriers_hz: DEFAULT_CARRIERS_HZ.to_vec(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            bit_duration_s: DEFAULT_BIT_DURATION_S,
            bits_per_burst: DEFAULT_BITS_PER_BURST,
            phase_rad: 0.0,
        }
    }
}

impl SignalConfig {
    pub fn waveform(&self) -> WaveformParams {
        WaveformParams {
            bit_duration_s: self.bit_duration_s,
            phase_rad: self.phase_rad,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn burst_duration_s(&self) -> f64 {
        self.bits_per_burst as f64 * self.bit_duration_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::validation("signal.sample_rate_hz", "must be positive"));
        }
        if !(self.bit_duration_s * self.sample_rate_hz >= 2.0 && self.bit_duration_s.is_finite()) {
            return Err(Error::validation("signal.bit_duration_s", "must span at least two samples"));
        }
        if self.bits_per_burst == 0 {
            return Err(Error::validation("signal.bits_per_burst", "must be at least 1"));
        }
        if self.carriers_hz.is_empty() {
            return Err(Error::validation("signal.carriers_hz", "needs at least one carrier"));
        }
        for (i, f) in self.carriers_hz.iter().enumerate() {
            if !(*f > 0.0 && *f < self.sample_rate_hz / 2.0) {
                return Err(Error::validation(format!("signal.carriers_hz[{i}]"), "must lie below Nyquist"));
            }
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::validation("signal.phase_rad", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeightConfig {
    /// Weight of the trilaterated z.
    pub w1: f64,
    /// Weight of the echo height.
    pub w2: f64,
    /// Standard deviation of the echo round-trip timing error.
    pub echo_jitter_s: f64,
}

impl Default for HeightConfig {
    fn default() -> Self {
        Self {
            w1: 0.3,
            w2: 0.7,
            echo_jitter_s: 5e-6,
        }
    }
}

impl HeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) || (self.w1 + self.w2 - 1.0).abs() > 1e-9 {
            return Err(Error::validation("height.w1", "weights must be non-negative and sum to 1"));
        }
        if !(self.echo_jitter_s >= 0.0 && self.echo_jitter_s.is_finite()) {
            return Err(Error::validation("height.echo_jitter_s", "must be non-negative"));
        }
        Ok(())
    }
}

/// How the drone moves during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Seeded random flight; without `seed` the run seed is used.
    Random {
        #[serde(default = "default_duration_s")]
        duration_s: f64,
        #[serde(default = "default_speed_cap_mps")]
        speed_cap_mps: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Fixed waypoints joined by the same monotone spline.
    Waypoints { times_s: Vec<f64>, points_m: Vec<Vec3> },
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::Random {
            duration_s: default_duration_s(),
            speed_cap_mps: default_speed_cap_mps(),
            seed: None,
        }
    }
}

fn default_duration_s() -> f64 {
    30.0
}

fn default_speed_cap_mps() -> f64 {
    0.3
}

impl TrajectorySpec {
    pub fn build(&self, room: &RoomBox, run_seed: u64) -> Result<Trajectory> {
        match self {
            TrajectorySpec::Random {
                duration_s,
                speed_cap_mps,
                seed,
            } => random_trajectory(room, *duration_s, *speed_cap_mps, seed.unwrap_or(run_seed)),
            TrajectorySpec::Waypoints { times_s, points_m } => Trajectory::through(times_s.clone(), points_m.clone()),
        }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            TrajectorySpec::Random { duration_s, .. } => *duration_s,
            TrajectorySpec::Waypoints { times_s, .. } => match (times_s.first(), times_s.last()) {
                (Some(a), Some(b)) => b - a,
                _ => 0.0,
            },
        }
    }

    fn validate(&self, room: &RoomBox) -> Result<()> {
        match self {
            TrajectorySpec::Random {
                duration_s,
                speed_cap_mps,
                ..
            } => {
                if !(*duration_s > 0.0 && duration_s.is_finite()) {
                    return Err(Error::validation("trajectory.duration_s", "must be positive"));
                }
                if !(*speed_cap_mps > 0.0 && speed_cap_mps.is_finite()) {
                    return Err(Error::validation("trajectory.speed_cap_mps", "must be positive"));
                }
                if room.dims_m.iter().any(|d| *d <= 2.0 * WALL_MARGIN_M) {
                    return Err(Error::validation("room_dims_m", "too small for the trajectory wall margin"));
                }
            }
            TrajectorySpec::Waypoints { times_s, points_m } => {
                if times_s.len() != points_m.len() || times_s.len() < 2 {
                    return Err(Error::validation(
                        "trajectory.points_m",
                        "needs at least two waypoints, one per time",
                    ));
                }
                if times_s.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::validation("trajectory.times_s", "must be strictly increasing"));
                }
                // the monotone spline never leaves the box spanned by
                // neighbouring waypoints
                for (i, p) in points_m.iter().enumerate() {
                    if !room.contains_strictly(p) {
                        return Err(Error::validation(
                            format!("trajectory.points_m[{i}]"),
                            "must lie strictly inside the room",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn default_temp_c() -> f64 {
    20.0
}

fn default_burst_rate_hz() -> f64 {
    15.0
}

/// A complete, validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomScenario {
    /// Default run seed when none is given on the command line.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_temp_c")]
    pub temp_c: f64,
    /// Measured sound speed; overrides the temperature formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sound_speed_mps: Option<f64>,
    #[serde(default = "default_burst_rate_hz")]
    pub burst_rate_hz: f64,
    #[serde(default)]
    pub room_dims_m: RoomBox,
    #[serde(default)]
    pub beacons: BeaconSet,
    #[serde(default)]
    pub clover: Clover,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub height: HeightConfig,
}

impl Default for RoomScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            temp_c: default_temp_c(),
            sound_speed_mps: None,
            burst_rate_hz: default_burst_rate_hz(),
            room_dims_m: RoomBox::default(),
            beacons: BeaconSet::default(),
            clover: Clover::default(),
            signal: SignalConfig::default(),
            channel: ChannelConfig::default(),
            trajectory: TrajectorySpec::default(),
            estimation: EstimationConfig::default(),
            height: HeightConfig::default(),
        }
    }
}

impl RoomScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.temp_c.is_finite() && self.temp_c > -273.15) {
            return Err(Error::validation("temp_c", "must be above absolute zero"));
        }
        if let Some(c) = self.sound_speed_mps {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::validation("sound_speed_mps", "must be positive"));
            }
        }
        self.room_dims_m
            .validate()
            .map_err(|_| Error::validation("room_dims_m", "dimensions must be positive"))?;
        for (i, b) in self.beacons.positions.iter().enumerate() {
            if !self.room_dims_m.contains(b) {
                return Err(Error::validation(format!("beacons[{i}]"), "must lie inside or on the room boundary"));
            }
        }
        self.beacons.validate()?;
        self.clover.validate()?;
        self.signal.validate()?;
        if !(self.burst_rate_hz > 0.0 && self.burst_rate_hz.is_finite()) {
            return Err(Error::validation("burst_rate_hz", "must be positive"));
        }
        if self.signal.burst_duration_s() >= 1.0 / self.burst_rate_hz {
            return Err(Error::validation("burst_rate_hz", "bursts would overlap at this rate"));
        }
        self.channel.validate()?;
        self.trajectory.validate(&self.room_dims_m)?;
        self.estimation.validate()?;
        self.height.validate()?;
        Ok(())
    }

    pub fn sound_speed(&self) -> Result<SoundSpeed> {
        match self.sound_speed_mps {
            Some(value_mps) => Ok(SoundSpeed {
                value_mps,
                source: SoundSpeedSource::Calibration,
            }),
            None => sound_speed_from_temperature(self.temp_c),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }
}

pub fn load_scenario(path: &Path) -> Result<RoomScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RoomScenario::from_toml(&text, &path.display().to_string())
}

pub fn save_scenario(s: &RoomScenario, path: &Path) -> Result<()> {
    s.validate()?;
    std::fs::write(path, s.to_toml()?).map_err(|e| Error::io(path, e))
}
