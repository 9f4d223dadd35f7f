use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{image_method_paths, render_paths, SoundSpeed};
use crate::dsp::Correlator;
use crate::error::{Error, Result};
use crate::estimation::{measure_burst, DopplerResult, RangeTracker, ToaResult};
use crate::geometry::Vec3;
use crate::localization::{fuse_height, height_from_echo, trilaterate, BeaconSet, EchoModel, PositionFix, Stage};
use crate::rng;
use crate::scenario::{radial_state, RoomScenario, Trajectory};
use crate::signals::{add_fhss_delayed, make_hop_plan, BitSequence, HopPlan, SignalFrame};

/// Which processing stages produce fixes; stage 1 always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StageSet {
    pub stage2: bool,
    pub stage3: bool,
}

impl StageSet {
    pub const ALL: StageSet = StageSet {
        stage2: true,
        stage3: true,
    };
    pub const BENCHMARK: StageSet = StageSet {
        stage2: false,
        stage3: false,
    };

    pub fn contains(&self, s: Stage) -> bool {
        match s {
            Stage::Stage1 => true,
            Stage::Stage2 => self.stage2,
            Stage::Stage3 => self.stage3,
        }
    }

    pub fn stages(&self) -> Vec<Stage> {
        Stage::ALL.into_iter().filter(|s| self.contains(*s)).collect()
    }
}

impl Default for StageSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl FromStr for StageSet {
    type Err = Error;

    /// Digits in increasing order starting with 1: "1", "12", "13", "123".
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Self::BENCHMARK),
            "12" => Ok(Self {
                stage2: true,
                stage3: false,
            }),
            "13" => Ok(Self {
                stage2: false,
                stage3: true,
            }),
            "123" => Ok(Self::ALL),
            other => Err(Error::Argument(format!(
                "stage set `{other}` is not one of 1, 12, 13, 123"
            ))),
        }
    }
}

impl fmt::Display for StageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.stages() {
            write!(f, "{}", s.number())?;
        }
        Ok(())
    }
}

impl TryFrom<String> for StageSet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StageSet> for String {
    fn from(s: StageSet) -> String {
        s.to_string()
    }
}

/// One beacon's view of one burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    pub true_distance_m: f64,
    pub true_closing_mps: f64,
    pub toa: ToaResult,
    pub doppler: DopplerResult,
    pub fused_m: f64,
    pub gated: bool,
}

/// Range measurements of every beacon for one burst.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstRanges {
    pub burst: usize,
    /// Mid-burst emission time; truth is taken here.
    pub t_s: f64,
    pub truth_m: Vec3,
    /// `None` where the beacon was out of every beam or heard nothing.
    pub beacons: Vec<Option<RangeSample>>,
}

/// Everything a run needs that does not change from burst to burst.
struct RunContext<'a> {
    scenario: &'a RoomScenario,
    seed: u64,
    c: SoundSpeed,
    trajectory: Trajectory,
    out_len: usize,
    burst_len: usize,
}

impl<'a> RunContext<'a> {
    fn new(scenario: &'a RoomScenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let c = scenario.sound_speed()?;
        let trajectory = scenario.trajectory.build(&scenario.room_dims_m, seed)?;
        let sig = &scenario.signal;
        let burst_len = (sig.bits_per_burst as f64 * sig.waveform().samples_per_bit()).round() as usize;
        // every direct path fits, with room for the correlation to see it
        let max_direct = scenario.room_dims_m.diagonal() / c.value_mps * sig.sample_rate_hz;
        let out_len = burst_len + max_direct.ceil() as usize + 64;
        Ok(Self {
            scenario,
            seed,
            c,
            trajectory,
            out_len,
            burst_len,
        })
    }

    fn burst_times(&self) -> Vec<f64> {
        let period = 1.0 / self.scenario.burst_rate_hz;
        let span = self.trajectory.duration_s() - self.scenario.signal.burst_duration_s();
        if span < 0.0 {
            return Vec::new();
        }
        let n = (span / period + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.trajectory.start_s() + k as f64 * period).collect()
    }

    fn burst_signal(&self, k: usize) -> Result<(BitSequence, HopPlan)> {
        let sig = &self.scenario.signal;
        let bits = BitSequence::for_burst(sig.bits_per_burst, self.seed, k as u64)?;
        let plan_seed = rng::derive_seed(self.seed, &[rng::tag::HOP_PLAN, k as u64]);
        let plan = make_hop_plan(sig.bits_per_burst, &sig.carriers_hz, plan_seed)?;
        Ok((bits, plan))
    }

    // Received frame at beacon `b` for the burst emitted at `t_emit`, or
    // `None` when no transmitter beam covers the beacon.
    fn receive(
        &self,
        k: usize,
        b: usize,
        t_emit: f64,
        bits: &BitSequence,
        plan: &HopPlan,
    ) -> Result<Option<SignalFrame>> {
        let s = self.scenario;
        let beacon = s.beacons.positions[b];
        let here = self.trajectory.sample(t_emit)?.position_m;
        if !s.clover.covers(&here, &beacon) {
            return Ok(None);
        }
        let t_mid = t_emit + s.signal.burst_duration_s() / 2.0;
        let (_, closing) = radial_state(&self.trajectory, t_mid, &beacon)?;
        let paths = image_method_paths(
            &here,
            &beacon,
            &s.room_dims_m,
            s.channel.max_reflection_order,
            s.channel.wall_reflection_loss,
            self.c,
        )?;
        let alpha = 1.0 + closing / self.c.value_mps;
        let seed = rng::derive_seed(self.seed, &[rng::tag::CHANNEL, s.channel.seed, k as u64, b as u64]);
        render_paths(bits, plan, &s.signal.waveform(), alpha, &paths, &s.channel.with_seed(seed), self.out_len).map(Some)
    }
}

/// Simulates the bursts of one run and returns every beacon's raw and
/// fused ranges. Beacons of a burst are processed in parallel.
pub fn simulate_ranges(scenario: &RoomScenario, seed: u64) -> Result<Vec<BurstRanges>> {
    let ctx = RunContext::new(scenario, seed)?;
    let s = scenario;
    let n_beacons = s.beacons.len();
    let burst_duration = s.signal.burst_duration_s();
    let fs = s.signal.sample_rate_hz;
    let mut trackers: Vec<RangeTracker> = (0..n_beacons)
        .map(|b| RangeTracker::new(b, s.estimation.clone(), ctx.c, fs, burst_duration))
        .collect();
    let mut out = Vec::new();
    for (k, t_emit) in ctx.burst_times().into_iter().enumerate() {
        let (bits, plan) = ctx.burst_signal(k)?;
        let mut reference = vec![0.0; ctx.burst_len];
        add_fhss_delayed(&mut reference, &bits, &plan, &s.signal.waveform(), 1.0, 0.0, 1.0)?;
        let correlator = Correlator::new(&reference, ctx.out_len);
        let t_mid = t_emit + burst_duration / 2.0;
        let measured: Vec<Option<(ToaResult, DopplerResult)>> = (0..n_beacons)
            .into_par_iter()
            .map(|b| -> Result<_> {
                let Some(rx) = ctx.receive(k, b, t_emit, &bits, &plan)? else {
                    return Ok(None);
                };
                match measure_burst(&rx, &correlator, &plan, s.signal.bit_duration_s, ctx.c) {
                    Ok(m) => Ok(Some(m)),
                    Err(Error::NoSignal) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let truth = ctx.trajectory.sample(t_mid)?.position_m;
        let mut beacons = Vec::with_capacity(n_beacons);
        for (b, m) in measured.into_iter().enumerate() {
            let entry = trackers[b].push(t_mid, m.map(|(toa, d)| (toa, Some(d))))?;
            beacons.push(match (m, entry.fused_m) {
                (Some((toa, doppler)), Some(fused_m)) => {
                    let (dist, closing) = radial_state(&ctx.trajectory, t_mid, &s.beacons.positions[b])?;
                    Some(RangeSample {
                        true_distance_m: dist,
                        true_closing_mps: closing,
                        toa,
                        doppler,
                        fused_m,
                        gated: entry.gated,
                    })
                }
                _ => None,
            });
        }
        out.push(BurstRanges {
            burst: k,
            t_s: t_mid,
            truth_m: truth,
            beacons,
        });
    }
    Ok(out)
}

/// A fix and its error against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageFix {
    pub xyz_m: Vec3,
    /// Per-axis absolute error.
    pub error_m: Vec3,
    pub error_xy_m: f64,
    pub error_3d_m: f64,
    pub residual_m: f64,
    pub gdop: Option<f64>,
}

impl StageFix {
    pub fn new(fix: &PositionFix, truth: &Vec3) -> Self {
        let d = fix.xyz_m - truth;
        Self {
            xyz_m: fix.xyz_m,
            error_m: d.abs(),
            error_xy_m: d.xy().norm(),
            error_3d_m: d.norm(),
            residual_m: fix.residual_m,
            gdop: fix.dop.map(|d| d.gdop),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixRecord {
    pub burst: usize,
    pub t_s: f64,
    pub truth_m: Vec3,
    pub beacons_heard: usize,
    pub stage1: Option<StageFix>,
    pub stage2: Option<StageFix>,
    pub stage3: Option<StageFix>,
}

impl FixRecord {
    pub fn get(&self, s: Stage) -> Option<&StageFix> {
        match s {
            Stage::Stage1 => self.stage1.as_ref(),
            Stage::Stage2 => self.stage2.as_ref(),
            Stage::Stage3 => self.stage3.as_ref(),
        }
    }
}

/// Error statistics of one stage over a run (metres).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub fixes: usize,
    pub unavailable: usize,
    pub mean_abs_x_m: f64,
    pub mean_abs_y_m: f64,
    pub mean_abs_z_m: f64,
    pub mean_xy_m: f64,
    pub mean_3d_m: f64,
    pub rmse_3d_m: f64,
    pub p50_3d_m: f64,
    pub p95_3d_m: f64,
    pub max_3d_m: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl StageSummary {
    pub fn from_records(stage: Stage, records: &[FixRecord]) -> Self {
        let fixes: Vec<&StageFix> = records.iter().filter_map(|r| r.get(stage)).collect();
        let n = fixes.len() as f64;
        let mean = |f: &dyn Fn(&StageFix) -> f64| {
            if fixes.is_empty() {
                f64::NAN
            } else {
                fixes.iter().map(|x| f(x)).sum::<f64>() / n
            }
        };
        let mut e3: Vec<f64> = fixes.iter().map(|f| f.error_3d_m).collect();
        e3.sort_by(f64::total_cmp);
        Self {
            stage,
            fixes: fixes.len(),
            unavailable: records.len() - fixes.len(),
            mean_abs_x_m: mean(&|f| f.error_m.x),
            mean_abs_y_m: mean(&|f| f.error_m.y),
            mean_abs_z_m: mean(&|f| f.error_m.z),
            mean_xy_m: mean(&|f| f.error_xy_m),
            mean_3d_m: mean(&|f| f.error_3d_m),
            rmse_3d_m: mean(&|f| f.error_3d_m * f.error_3d_m).sqrt(),
            p50_3d_m: percentile(&e3, 0.5),
            p95_3d_m: percentile(&e3, 0.95),
            max_3d_m: e3.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub stages: StageSet,
    /// SHA-256 of the scenario's TOML form.
    pub scenario_digest: String,
    pub sound_speed_mps: f64,
    pub records: Vec<FixRecord>,
    pub summary: Vec<StageSummary>,
}

impl RunResult {
    pub fn summary_for(&self, stage: Stage) -> Option<&StageSummary> {
        self.summary.iter().find(|s| s.stage == stage)
    }
}

pub fn scenario_digest(scenario: &RoomScenario) -> Result<String> {
    Ok(hex::encode(Sha256::digest(scenario.to_toml()?.as_bytes())))
}

fn fix_from(beacons: &BeaconSet, ranges: &[Option<f64>]) -> Option<PositionFix> {
    let (subset, d): (Vec<Vec3>, Vec<f64>) = beacons
        .positions
        .iter()
        .zip(ranges)
        .filter_map(|(p, r)| r.map(|r| (*p, r)))
        .unzip();
    if subset.len() < 4 {
        return None;
    }
    trilaterate(&BeaconSet { positions: subset }, &d).ok()
}

/// Turns range measurements into per-stage fixes.
pub fn fixes_from_ranges(
    scenario: &RoomScenario,
    stages: StageSet,
    seed: u64,
    bursts: &[BurstRanges],
) -> Result<Vec<FixRecord>> {
    let c = scenario.sound_speed()?;
    let echo = EchoModel {
        sample_rate_hz: scenario.signal.sample_rate_hz,
        jitter_s: scenario.height.echo_jitter_s,
    };
    let ceiling = scenario.room_dims_m.height();
    let mut records = Vec::with_capacity(bursts.len());
    for b in bursts {
        let raw: Vec<Option<f64>> = b.beacons.iter().map(|r| r.map(|r| r.toa.distance_m)).collect();
        let fused: Vec<Option<f64>> = b.beacons.iter().map(|r| r.map(|r| r.fused_m)).collect();
        let f1 = fix_from(&scenario.beacons, &raw);
        let f2 = if stages.stage2 { fix_from(&scenario.beacons, &fused) } else { None };
        let f3 = if stages.stage3 {
            let base = if stages.stage2 { f2 } else { f1 };
            let mut rng = rng::stream(seed, &[rng::tag::ECHO, b.burst as u64]);
            let t = echo.round_trip_s(b.truth_m.z, ceiling, c, &mut rng);
            match (base, height_from_echo(t, ceiling, c)) {
                (Some(fix), Ok(h)) => {
                    Some(fuse_height(&fix, &h, scenario.height.w1, scenario.height.w2)?)
                }
                _ => None,
            }
        } else {
            None
        };
        records.push(FixRecord {
            burst: b.burst,
            t_s: b.t_s,
            truth_m: b.truth_m,
            beacons_heard: b.beacons.iter().filter(|r| r.is_some()).count(),
            stage1: f1.map(|f| StageFix::new(&f, &b.truth_m)),
            stage2: f2.map(|f| StageFix::new(&f, &b.truth_m)),
            stage3: f3.map(|f| StageFix::new(&f, &b.truth_m)),
        });
    }
    Ok(records)
}

/// One end-to-end run: bursts along the trajectory, ranging at every
/// beacon, and a fix per enabled stage for every burst.
pub fn run_once(scenario: &RoomScenario, stages: StageSet, seed: u64) -> Result<RunResult> {
    let bursts = simulate_ranges(scenario, seed)?;
    let records = fixes_from_ranges(scenario, stages, seed, &bursts)?;
    let summary = stages
        .stages()
        .into_iter()
        .map(|s| StageSummary::from_records(s, &records))
        .collect();
    Ok(RunResult {
        seed,
        stages,
        scenario_digest: scenario_digest(scenario)?,
        sound_speed_mps: scenario.sound_speed()?.value_mps,
        records,
        summary,
    })
}
