use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RoomBox, Vec3};
use crate::rng;

/// Clearance kept between random trajectories and the walls.
pub const WALL_MARGIN_M: f64 = 0.2;

/// Straight-line speed between random waypoints as a fraction of the cap;
/// the spline peaks at 1.5 times the chord speed on a rest-to-rest leg.
pub const CRUISE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub position_m: Vec3,
    pub velocity_mps: Vec3,
}

/// Piecewise cubic Hermite path through waypoints, with monotone
/// (Fritsch–Butland) slopes per axis and zero velocity at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times_s: Vec<f64>,
    points_m: Vec<Vec3>,
    slopes: Vec<Vec3>,
}

fn monotone_slopes(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut m = vec![0.0; n];
    for k in 1..n.saturating_sub(1) {
        let h0 = times[k] - times[k - 1];
        let h1 = times[k + 1] - times[k];
        let d0 = (values[k] - values[k - 1]) / h0;
        let d1 = (values[k + 1] - values[k]) / h1;
        if d0 * d1 > 0.0 {
            m[k] = 3.0 * (h0 + h1) / ((2.0 * h1 + h0) / d0 + (h1 + 2.0 * h0) / d1);
        }
    }
    m
}

impl Trajectory {
    pub fn through(times_s: Vec<f64>, points_m: Vec<Vec3>) -> Result<Self> {
        if times_s.len() != points_m.len() || times_s.is_empty() {
            return Err(Error::Argument("waypoint times and points must be nonempty and equally long".into()));
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) || !times_s.iter().all(|t| t.is_finite()) {
            return Err(Error::Argument("waypoint times must be strictly increasing".into()));
        }
        if !points_m.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::Argument("waypoints must be finite".into()));
        }
        let per_axis: Vec<Vec<f64>> = (0..3)
            .map(|a| monotone_slopes(&times_s, &points_m.iter().map(|p| p[a]).collect::<Vec<_>>()))
            .collect();
        let slopes = (0..points_m.len())
            .map(|k| Vec3::new(per_axis[0][k], per_axis[1][k], per_axis[2][k]))
            .collect();
        Ok(Self {
            times_s,
            points_m,
            slopes,
        })
    }

    /// A single point held for `duration_s`.
    pub fn hover(point_m: Vec3, duration_s: f64) -> Result<Self> {
        if !(duration_s > 0.0) {
            return Err(Error::Argument("hover duration must be positive".into()));
        }
        Self::through(vec![0.0, duration_s], vec![point_m, point_m])
    }

    pub fn start_s(&self) -> f64 {
        self.times_s[0]
    }

    pub fn end_s(&self) -> f64 {
        *self.times_s.last().expect("nonempty")
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s() - self.start_s()
    }

    pub fn waypoints(&self) -> impl Iterator<Item = (f64, Vec3)> + '_ {
        self.times_s.iter().copied().zip(self.points_m.iter().copied())
    }

    fn segment(&self, t: f64) -> usize {
        match self.times_s.partition_point(|&x| x <= t) {
            0 => 0,
            i => (i - 1).min(self.times_s.len().saturating_sub(2)),
        }
    }

    pub fn sample(&self, t_s: f64) -> Result<TrajectorySample> {
        let eps = 1e-9 * self.duration_s().max(1.0);
        if !(t_s >= self.start_s() - eps && t_s <= self.end_s() + eps) {
            return Err(Error::Argument(format!(
                "time {t_s} s outside trajectory span [{}, {}]",
                self.start_s(),
                self.end_s()
            )));
        }
        if self.times_s.len() == 1 {
            return Ok(TrajectorySample {
                t_s,
                position_m: self.points_m[0],
                velocity_mps: Vec3::zeros(),
            });
        }
        let k = self.segment(t_s);
        let h = self.times_s[k + 1] - self.times_s[k];
        let s = ((t_s - self.times_s[k]) / h).clamp(0.0, 1.0);
        let (p0, p1) = (self.points_m[k], self.points_m[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let position_m = p0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + m0 * (s3 - 2.0 * s2 + s)
            + p1 * (-2.0 * s3 + 3.0 * s2)
            + m1 * (s3 - s2);
        let velocity_mps = (p0 * (6.0 * s2 - 6.0 * s)
            + m0 * (3.0 * s2 - 4.0 * s + 1.0)
            + p1 * (-6.0 * s2 + 6.0 * s)
            + m1 * (3.0 * s2 - 2.0 * s))
            / h;
        Ok(TrajectorySample {
            t_s,
            position_m,
            velocity_mps,
        })
    }

    /// Samples every `dt_s` from the start, including the start.
    pub fn samples(&self, dt_s: f64) -> Result<Vec<TrajectorySample>> {
        if !(dt_s > 0.0) {
            return Err(Error::Argument("sampling interval must be positive".into()));
        }
        let n = (self.duration_s() / dt_s + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.sample(self.start_s() + i as f64 * dt_s)).collect()
    }

    /// Upper bound on speed: per segment and axis the velocity is a
    /// quadratic whose extremes are found exactly.
    pub fn speed_bound_mps(&self) -> f64 {
        let mut bound: f64 = 0.0;
        for k in 0..self.times_s.len().saturating_sub(1) {
            let h = self.times_s[k + 1] - self.times_s[k];
            let mut sq = 0.0;
            for a in 0..3 {
                let (p0, p1) = (self.points_m[k][a], self.points_m[k + 1][a]);
                let (m0, m1) = (self.slopes[k][a] * h, self.slopes[k + 1][a] * h);
                // velocity * h = A s² + B s + C
                let qa = 6.0 * (p0 - p1) + 3.0 * (m0 + m1);
                let qb = -6.0 * (p0 - p1) - 4.0 * m0 - 2.0 * m1;
                let qc = m0;
                let f = |s: f64| (qa * s * s + qb * s + qc).abs();
                let mut best = f(0.0).max(f(1.0));
                if qa.abs() > 0.0 {
                    let v = -qb / (2.0 * qa);
                    if (0.0..=1.0).contains(&v) {
                        best = best.max(f(v));
                    }
                }
                sq += (best / h).powi(2);
            }
            bound = bound.max(sq.sqrt());
        }
        bound
    }

    /// Contracts every waypoint toward the first by `factor`; speeds
    /// scale by the same factor.
    fn contracted(&self, factor: f64) -> Self {
        let origin = self.points_m[0];
        let points = self.points_m.iter().map(|p| origin + (p - origin) * factor).collect();
        Self::through(self.times_s.clone(), points).expect("contraction keeps waypoints valid")
    }
}

/// Seeded random flight between waypoints drawn uniformly inside the room
/// shrunk by the wall margin. Each leg is timed for a chord speed of
/// `CRUISE_FRACTION * speed_cap_mps`; the leg that crosses `duration_s` is
/// cut short on its chord. If the spline still exceeds the cap, waypoints
/// are contracted toward the first one.
pub fn random_trajectory(room: &RoomBox, duration_s: f64, speed_cap_mps: f64, seed: u64) -> Result<Trajectory> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Argument(format!("duration {duration_s} s must be positive")));
    }
    if !(speed_cap_mps > 0.0 && speed_cap_mps.is_finite()) {
        return Err(Error::Argument(format!("speed cap {speed_cap_mps} m/s must be positive")));
    }
    room.validate()?;
    if room.dims_m.iter().any(|d| *d <= 2.0 * WALL_MARGIN_M) {
        return Err(Error::Config(format!(
            "room {:?} is too small for a {WALL_MARGIN_M} m wall margin",
            room.dims_m.as_slice()
        )));
    }
    let cruise = CRUISE_FRACTION * speed_cap_mps;
    let mut rng = rng::stream(seed, &[rng::tag::TRAJECTORY]);
    let mut draw = || Vec3::from_fn(|a, _| rng.random_range(WALL_MARGIN_M..=room.dims_m[a] - WALL_MARGIN_M));
    let mut times = vec![0.0];
    let mut points = vec![draw()];
    while let Some(&t) = times.last().filter(|t| **t < duration_s) {
        let from = *points.last().expect("nonempty");
        let to = draw();
        let leg = ((to - from).norm() / cruise).max(1e-6);
        if t + leg >= duration_s {
            let f = (duration_s - t) / leg;
            times.push(duration_s);
            points.push(from + (to - from) * f);
        } else {
            times.push(t + leg);
            points.push(to);
        }
    }
    let traj = Trajectory::through(times, points)?;
    let bound = traj.speed_bound_mps();
    if bound > speed_cap_mps {
        Ok(traj.contracted(speed_cap_mps / bound * (1.0 - 1e-12)))
    } else {
        Ok(traj)
    }
}

/// Anything that yields position and velocity over time.
pub trait Motion {
    fn state_at(&self, t_s: f64) -> Result<TrajectorySample>;
}

impl Motion for Trajectory {
    fn state_at(&self, t_s: f64) -> Result<TrajectorySample> {
        self.sample(t_s)
    }
}

/// Distance to the beacon and the closing speed (positive = approaching).
pub fn radial_state(trajectory: &impl Motion, t_s: f64, beacon_m: &Vec3) -> Result<(f64, f64)> {
    let s = trajectory.state_at(t_s)?;
    let to_beacon = beacon_m - s.position_m;
    let distance = to_beacon.norm();
    if distance == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((distance, s.velocity_mps.dot(&to_beacon) / distance))
}
