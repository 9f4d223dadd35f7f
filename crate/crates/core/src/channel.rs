//! Acoustic propagation from the drone to a wall beacon.
//!
//! The received buffer is `sum_i g_i * x(alpha * (t - tau_i)) + noise` with
//! `alpha = 1 + v/c`: specular image-method paths, one common Doppler
//! time-scale, optional static Rayleigh fading on reflected paths, and
//! white Gaussian noise referenced to the direct-path power.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::geometry::{RoomBox, Vec3};
use crate::rng;
use crate::signals::{add_fhss_delayed, fhss_compressed_power, BitSequence, HopPlan, SignalFrame, WaveformParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundSpeedSource {
    TemperatureFormula,
    Calibration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundSpeed {
    pub value_mps: f64,
    pub source: SoundSpeedSource,
}

impl SoundSpeed {
    pub fn new(value_mps: f64) -> Self {
        Self {
            value_mps,
            source: SoundSpeedSource::TemperatureFormula,
        }
    }
}

/// Speed of sound in dry air, scaled from its 0 °C value of 331.3 m/s.
pub fn sound_speed_from_temperature(temp_c: f64) -> Result<SoundSpeed> {
    if !(temp_c.is_finite() && temp_c > -273.15) {
        return Err(Error::Domain(format!("temperature {temp_c} °C is at or below absolute zero")));
    }
    Ok(SoundSpeed {
        value_mps: 331.3 * (1.0 + temp_c / 273.15).sqrt(),
        source: SoundSpeedSource::TemperatureFormula,
    })
}

/// Speed of sound from a time-of-flight measured over a known distance.
pub fn calibrate_sound_speed(known_distance_m: f64, measured_tof_s: f64) -> Result<SoundSpeed> {
    if !(known_distance_m > 0.0 && known_distance_m.is_finite()) {
        return Err(Error::Argument(format!("calibration distance {known_distance_m} m must be positive")));
    }
    if !(measured_tof_s > 0.0 && measured_tof_s.is_finite()) {
        return Err(Error::Argument(format!("time of flight {measured_tof_s} s must be positive")));
    }
    Ok(SoundSpeed {
        value_mps: known_distance_m / measured_tof_s,
        source: SoundSpeedSource::Calibration,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub delay_s: f64,
    pub gain: f64,
    pub reflections: u8,
}

/// Propagation paths sorted by delay; entry 0 is the direct path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    /// A single line-of-sight path.
    pub fn direct(delay_s: f64, gain: f64) -> Self {
        Self {
            paths: vec![Path {
                delay_s,
                gain,
                reflections: 0,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn delay_spread_s(&self) -> f64 {
        match (self.paths.first(), self.paths.last()) {
            (Some(a), Some(b)) => b.delay_s - a.delay_s,
            _ => 0.0,
        }
    }

    pub fn max_delay_s(&self) -> f64 {
        self.paths.last().map_or(0.0, |p| p.delay_s)
    }
}

// Image coordinates along one axis of length `len` for a source at `u`,
// with the number of wall reflections each one represents.
fn axis_images(u: f64, len: f64) -> [(f64, u8); 5] {
    [
        (u, 0),
        (-u, 1),
        (2.0 * len - u, 1),
        (2.0 * len + u, 2),
        (u - 2.0 * len, 2),
    ]
}

/// Specular paths up to `order` wall reflections (order <= 2).
///
/// Every image combination is kept (1, 7 and 25 paths for orders 0, 1
/// and 2). Gains fall off by `loss` per bounce and by spherical spreading
/// relative to the direct path, whose gain is 1.
pub fn image_method_paths(
    tx: &Vec3,
    rx: &Vec3,
    room: &RoomBox,
    order: u8,
    loss: f64,
    c: SoundSpeed,
) -> Result<PathSet> {
    if order > 2 {
        return Err(Error::Argument(format!("reflection order {order} exceeds 2")));
    }
    if !(0.0..=1.0).contains(&loss) {
        return Err(Error::Argument(format!("wall reflection loss {loss} outside [0, 1]")));
    }
    if !room.contains_strictly(tx) {
        return Err(Error::Argument(format!("transmitter {tx:?} is not inside the room")));
    }
    // Beacons are mounted on walls, so the receiver may sit on the boundary.
    if !room.contains(rx) {
        return Err(Error::Argument(format!("receiver {rx:?} is outside the room")));
    }
    let direct = (tx - rx).norm();
    if direct <= 0.0 {
        return Err(Error::Argument("transmitter and receiver coincide".into()));
    }
    let [ix, iy, iz] = [0, 1, 2].map(|a| axis_images(tx[a], room.dims_m[a]));
    let mut paths = Vec::with_capacity(25);
    for &(x, rx_n) in &ix {
        for &(y, ry_n) in &iy {
            for &(z, rz_n) in &iz {
                let bounces = rx_n + ry_n + rz_n;
                if bounces > order {
                    continue;
                }
                let length = (Vec3::new(x, y, z) - rx).norm();
                paths.push(Path {
                    delay_s: length / c.value_mps,
                    gain: loss.powi(i32::from(bounces)) * direct / length,
                    reflections: bounces,
                });
            }
        }
    }
    // stable: the direct path stays first among equal-delay images
    paths.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    Ok(PathSet { paths })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    None,
    RayleighPerPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Direct-path signal power over noise power at the receiver.
    #[serde(default = "ChannelConfig::default_snr_db")]
    pub snr_db: f64,
    #[serde(default = "ChannelConfig::default_order")]
    pub max_reflection_order: u8,
    /// Amplitude factor per wall bounce.
    #[serde(default = "ChannelConfig::default_loss")]
    pub wall_reflection_loss: f64,
    #[serde(default = "ChannelConfig::default_fading")]
    pub fading: Fading,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            snr_db: Self::default_snr_db(),
            max_reflection_order: Self::default_order(),
            wall_reflection_loss: Self::default_loss(),
            fading: Self::default_fading(),
            seed: 0,
        }
    }
}

impl ChannelConfig {
    fn default_snr_db() -> f64 {
        20.0
    }
    fn default_order() -> u8 {
        1
    }
    fn default_loss() -> f64 {
        0.5
    }
    fn default_fading() -> Fading {
        Fading::RayleighPerPath
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() {
            return Err(Error::validation("channel.snr_db", "must be a number"));
        }
        if self.max_reflection_order > 2 {
            return Err(Error::validation("channel.max_reflection_order", "must be 0, 1 or 2"));
        }
        if !(0.0..=1.0).contains(&self.wall_reflection_loss) {
            return Err(Error::validation("channel.wall_reflection_loss", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Propagates `frame` over `paths`; the output covers the full support of
/// the latest arrival.
pub fn apply_channel(
    frame: &SignalFrame,
    paths: &PathSet,
    radial_velocity_mps: f64,
    config: &ChannelConfig,
    c: SoundSpeed,
) -> Result<SignalFrame> {
    let alpha = 1.0 + radial_velocity_mps / c.value_mps;
    let len = ((frame.len() as f64) / alpha).ceil() as usize
        + (paths.max_delay_s() * frame.sample_rate_hz).ceil() as usize
        + 1;
    apply_channel_window(frame, paths, radial_velocity_mps, config, c, len)
}

/// Like [`apply_channel`] but the receiver records exactly `out_len`
/// samples starting at the frame's transmit time.
pub fn apply_channel_window(
    frame: &SignalFrame,
    paths: &PathSet,
    radial_velocity_mps: f64,
    config: &ChannelConfig,
    c: SoundSpeed,
    out_len: usize,
) -> Result<SignalFrame> {
    if paths.is_empty() {
        return Err(Error::Argument("path set is empty".into()));
    }
    if !(radial_velocity_mps.abs() < 0.1 * c.value_mps) {
        return Err(Error::Argument(format!(
            "radial velocity {radial_velocity_mps} m/s exceeds a tenth of the sound speed"
        )));
    }
    config.validate()?;
    let alpha = 1.0 + radial_velocity_mps / c.value_mps;
    let scaled = SignalFrame {
        samples: dsp::time_scale(&frame.samples, alpha),
        sample_rate_hz: frame.sample_rate_hz,
        t0_s: frame.t0_s,
    };
    apply_paths(&scaled, paths, config, out_len)
}

/// Multipath, fading and noise for a frame that already carries the
/// Doppler time-scale (for instance from
/// [`synthesize_fhss_compressed`](crate::signals::synthesize_fhss_compressed)).
pub fn apply_paths(scaled: &SignalFrame, paths: &PathSet, config: &ChannelConfig, out_len: usize) -> Result<SignalFrame> {
    if paths.is_empty() {
        return Err(Error::Argument("path set is empty".into()));
    }
    config.validate()?;
    let fs = scaled.sample_rate_hz;
    let mut rng = rng::stream(config.seed, &[rng::tag::CHANNEL]);
    let taps = faded_taps(paths, config, fs, &mut rng);
    let mut samples = dsp::delay_and_sum(&scaled.samples, &taps, out_len);
    add_noise(&mut samples, paths.paths[0].gain * paths.paths[0].gain * power(&scaled.samples), config, &mut rng);
    SignalFrame::new(samples, fs, scaled.t0_s)
}

/// Same channel as [`apply_paths`] applied to
/// [`synthesize_fhss_compressed`](crate::signals::synthesize_fhss_compressed) output, but every path is evaluated from
/// the continuous waveform, so fractional delays carry no interpolation
/// error. Draws the same random numbers in the same order.
#[allow(clippy::too_many_arguments)]
pub fn render_paths(
    bits: &BitSequence,
    plan: &HopPlan,
    params: &WaveformParams,
    alpha: f64,
    paths: &PathSet,
    config: &ChannelConfig,
    out_len: usize,
) -> Result<SignalFrame> {
    if paths.is_empty() {
        return Err(Error::Argument("path set is empty".into()));
    }
    config.validate()?;
    let fs = params.sample_rate_hz;
    let mut rng = rng::stream(config.seed, &[rng::tag::CHANNEL]);
    let taps = faded_taps(paths, config, fs, &mut rng);
    let mut samples = vec![0.0; out_len];
    for &(delay, gain) in &taps {
        add_fhss_delayed(&mut samples, bits, plan, params, alpha, delay, gain)?;
    }
    if config.snr_db.is_finite() {
        // power of the compressed burst itself, as apply_paths measures it
        let g0 = paths.paths[0].gain;
        add_noise(&mut samples, g0 * g0 * fhss_compressed_power(bits, plan, params, alpha)?, config, &mut rng);
    }
    SignalFrame::new(samples, fs, 0.0)
}

// (delay in samples, gain) per path; non-direct paths get a Rayleigh
// amplitude with unit mean power.
fn faded_taps(paths: &PathSet, config: &ChannelConfig, fs: f64, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    paths
        .paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let fade = if i > 0 && config.fading == Fading::RayleighPerPath {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                ((re * re + im * im) / 2.0).sqrt()
            } else {
                1.0
            };
            (p.delay_s * fs, p.gain * fade)
        })
        .collect()
}

fn add_noise(samples: &mut [f64], signal_power: f64, config: &ChannelConfig, rng: &mut impl Rng) {
    if !config.snr_db.is_finite() {
        return;
    }
    let sigma = (signal_power / 10f64.powf(config.snr_db / 10.0)).sqrt();
    // bulk draws come from a faster generator keyed by the channel stream
    let mut fast = Xoshiro256PlusPlus::seed_from_u64(rng.random());
    for s in samples.iter_mut() {
        let n: f64 = fast.sample(StandardNormal);
        *s += sigma * n;
    }
}

fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// True when `rx_pos` lies inside the transmitter's beam cone.
pub fn beam_visible(tx_pos: &Vec3, tx_facing: &Vec3, rx_pos: &Vec3, half_angle_deg: f64) -> Result<bool> {
    let facing_norm = tx_facing.norm();
    if !(facing_norm > 0.0 && facing_norm.is_finite()) {
        return Err(Error::Argument("transmitter facing vector has zero length".into()));
    }
    let to_rx = rx_pos - tx_pos;
    let dist = to_rx.norm();
    if dist == 0.0 {
        return Ok(true);
    }
    let cos_angle = to_rx.dot(tx_facing) / (dist * facing_norm);
    Ok(cos_angle >= half_angle_deg.to_radians().cos() - 1e-12)
}

/// Four transmitters on the drone facing front, back, left and right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clover {
    #[serde(default = "Clover::default_facings")]
    pub facings: Vec<Vec3>,
    #[serde(default = "Clover::default_half_angle")]
    pub half_angle_deg: f64,
}

impl Default for Clover {
    fn default() -> Self {
        Self {
            facings: Self::default_facings(),
            half_angle_deg: Self::default_half_angle(),
        }
    }
}

impl Clover {
    fn default_facings() -> Vec<Vec3> {
        vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ]
    }

    fn default_half_angle() -> f64 {
        60.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.facings.is_empty() {
            return Err(Error::validation("clover.facings", "needs at least one transmitter"));
        }
        for (i, f) in self.facings.iter().enumerate() {
            if !(f.norm() > 0.0 && f.iter().all(|v| v.is_finite())) {
                return Err(Error::validation(format!("clover.facings[{i}]"), "zero-length facing"));
            }
        }
        if !(self.half_angle_deg > 0.0 && self.half_angle_deg <= 180.0) {
            return Err(Error::validation("clover.half_angle_deg", "must lie in (0, 180]"));
        }
        Ok(())
    }

    /// Whether any transmitter's cone covers `rx`.
    pub fn covers(&self, drone: &Vec3, rx: &Vec3) -> bool {
        self.facings
            .iter()
            .any(|f| beam_visible(drone, f, rx, self.half_angle_deg).unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{make_hop_plan, synthesize_fhss, synthesize_fhss_compressed, DEFAULT_CARRIERS_HZ};

    const FS: f64 = 340_000.0;

    fn c340() -> SoundSpeed {
        SoundSpeed::new(340.0)
    }

    fn tone_frame(f: f64, n_bits: usize) -> SignalFrame {
        let bits = BitSequence::new(vec![1; n_bits]).unwrap();
        let plan = HopPlan {
            carrier_hz_per_bit: vec![f; n_bits],
            carrier_set: vec![f],
            sub_band_hz: 5_000.0,
            seed: 0,
        };
        synthesize_fhss(&bits, &plan, &WaveformParams::default()).unwrap()
    }

    fn noiseless() -> ChannelConfig {
        ChannelConfig {
            snr_db: f64::INFINITY,
            fading: Fading::None,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn sound_speed_formula() {
        assert_eq!(sound_speed_from_temperature(0.0).unwrap().value_mps, 331.3);
        let c20 = sound_speed_from_temperature(20.0).unwrap().value_mps;
        assert!((c20 - 331.3 * (1.0f64 + 20.0 / 273.15).sqrt()).abs() < 1e-12);
        assert!((c20 - 343.2).abs() < 0.1);
        assert!(matches!(sound_speed_from_temperature(-273.15), Err(Error::Domain(_))));
        for t in [-20.0, 0.0, 25.0, 50.0] {
            let c = sound_speed_from_temperature(t).unwrap().value_mps;
            assert!(c > 300.0 && c < 400.0);
        }
    }

    #[test]
    fn calibration() {
        let c = calibrate_sound_speed(3.40, 0.01).unwrap();
        assert!((c.value_mps - 340.0).abs() < 1e-9);
        assert_eq!(c.source, SoundSpeedSource::Calibration);
        assert!((calibrate_sound_speed(1.0, 1.0 / 331.3).unwrap().value_mps - 331.3).abs() < 1e-9);
        assert!(calibrate_sound_speed(0.0, 1.0).is_err());
        assert!(calibrate_sound_speed(1.0, -1.0).is_err());
    }

    #[test]
    fn order_zero_is_line_of_sight() {
        let room = RoomBox::default();
        let tx = Vec3::new(1.0, 1.0, 1.0);
        let rx = Vec3::new(4.0, 2.0, 2.5);
        let ps = image_method_paths(&tx, &rx, &room, 0, 0.5, c340()).unwrap();
        assert_eq!(ps.len(), 1);
        assert!((ps.paths[0].delay_s - (tx - rx).norm() / 340.0).abs() < 1e-15);
        assert_eq!(ps.paths[0].gain, 1.0);
    }

    #[test]
    fn first_order_images_match_hand_reflection() {
        let room = RoomBox::default();
        let tx = Vec3::new(2.5, 2.5, 1.5);
        let rx = Vec3::new(1.0, 4.0, 2.0);
        let ps = image_method_paths(&tx, &rx, &room, 1, 0.5, c340()).unwrap();
        assert_eq!(ps.len(), 7);
        let dxy2 = (tx.x - rx.x).powi(2) + (tx.y - rx.y).powi(2);
        let floor = (dxy2 + (tx.z + rx.z).powi(2)).sqrt() / 340.0;
        let ceiling = (dxy2 + (6.0 - tx.z - rx.z).powi(2)).sqrt() / 340.0;
        let has = |d: f64| ps.paths.iter().any(|p| (p.delay_s - d).abs() < 1e-12 && p.reflections == 1);
        assert!(has(floor) && has(ceiling));
        let direct = (tx - rx).norm();
        for p in &ps.paths[1..] {
            let len = p.delay_s * 340.0;
            assert!((p.gain - 0.5 * direct / len).abs() < 1e-12);
            assert!(p.gain <= ps.paths[0].gain);
        }
        assert!(ps.paths.windows(2).all(|w| w[0].delay_s <= w[1].delay_s));
    }

    #[test]
    fn image_counts_per_order() {
        let room = RoomBox::default();
        let tx = Vec3::new(1.2, 3.1, 0.7);
        let rx = Vec3::new(4.0, 0.5, 2.9);
        let counts: Vec<usize> = (0..=2)
            .map(|k| image_method_paths(&tx, &rx, &room, k, 0.5, c340()).unwrap().len())
            .collect();
        assert_eq!(counts, vec![1, 7, 25]);
        assert!(image_method_paths(&tx, &rx, &room, 3, 0.5, c340()).is_err());
        let outside = Vec3::new(6.0, 1.0, 1.0);
        assert!(image_method_paths(&outside, &rx, &room, 1, 0.5, c340()).is_err());
    }

    #[test]
    fn delay_spread_near_room_centre() {
        // Endpoints 10 cm apart at the centre of the 5x5x3 room: the latest
        // first-order arrival bounces off a side wall (about 5 m round trip).
        let room = RoomBox::default();
        let tx = room.centre();
        let rx = tx + Vec3::new(0.1, 0.0, 0.0);
        let ps = image_method_paths(&tx, &rx, &room, 1, 0.5, c340()).unwrap();
        let spread = ps.delay_spread_s();
        let longest = (5.0 + 0.1) / 340.0;
        assert!((ps.max_delay_s() - longest).abs() < 1e-12);
        assert!((spread - (longest - 0.1 / 340.0)).abs() < 1e-12);
        // the spread is much longer than one 1 ms hop
        assert!(spread > 1e-3);
    }

    #[test]
    fn integer_delay_is_pure_shift() {
        let frame = tone_frame(40_000.0, 4);
        let ps = PathSet::direct(100.0 / FS, 1.0);
        let out = apply_channel(&frame, &ps, 0.0, &noiseless(), c340()).unwrap();
        for (i, v) in out.samples.iter().enumerate() {
            let expect = if (100..100 + frame.len()).contains(&i) { frame.samples[i - 100] } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn doppler_raises_closing_frequency() {
        let frame = tone_frame(40_000.0, 8);
        let ps = PathSet::direct(1e-9, 1.0);
        let peak = |v: f64| {
            let out = apply_channel(&frame, &ps, v, &noiseless(), c340()).unwrap();
            let x = &out.samples[..2000];
            let spec = dsp::power_spectrum(x, 1 << 16);
            let k = spec.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            k as f64 * FS / f64::from(1 << 16)
        };
        let bin = FS / f64::from(1 << 16);
        assert!((peak(3.4) - 40_400.0).abs() <= bin);
        assert!((peak(-3.4) - 39_600.0).abs() <= bin);
        assert!((peak(0.0) - 40_000.0).abs() <= bin);
    }

    #[test]
    fn snr_of_noisy_tone() {
        // Tone power from the spectral peak region, noise from the flat floor
        // away from it, both scaled back to full-band powers.
        let frame = tone_frame(40_000.0, 64);
        let ps = PathSet::direct(1.0 / FS, 1.0);
        let cfg = ChannelConfig {
            snr_db: 0.0,
            fading: Fading::None,
            seed: 11,
            ..ChannelConfig::default()
        };
        let out = apply_channel(&frame, &ps, 0.0, &cfg, c340()).unwrap();
        let x = &out.samples[1..1 + frame.len()];
        let n = x.len();
        let spec = dsp::power_spectrum(x, n);
        let df = FS / n as f64;
        let k0 = (40_000.0 / df).round() as usize;
        let band = 40;
        let floor: f64 = spec
            .iter()
            .enumerate()
            .filter(|(k, _)| k.abs_diff(k0) > 200 && *k > 0 && *k < n / 2)
            .map(|(_, p)| *p)
            .sum::<f64>()
            / (n / 2 - 402) as f64;
        let tone: f64 = spec[k0 - band..=k0 + band].iter().map(|p| p - floor).sum();
        let noise_power = floor * (n / 2) as f64 * 2.0 / (n * n) as f64;
        let tone_power = tone * 2.0 / (n * n) as f64;
        let snr = 10.0 * (tone_power / noise_power).log10();
        assert!(snr.abs() <= 1.0, "measured {snr} dB");
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let bits = BitSequence::for_burst(8, 5, 0).unwrap();
        let plan = make_hop_plan(8, &crate::signals::DEFAULT_CARRIERS_HZ, 5).unwrap();
        let frame = synthesize_fhss(&bits, &plan, &WaveformParams::default()).unwrap();
        let room = RoomBox::default();
        let ps = image_method_paths(&Vec3::new(1.0, 2.0, 1.0), &Vec3::new(2.5, 0.0, 1.5), &room, 1, 0.5, c340())
            .unwrap();
        let cfg = ChannelConfig {
            seed: 42,
            ..ChannelConfig::default()
        };
        let a = apply_channel(&frame, &ps, 0.7, &cfg, c340()).unwrap();
        let b = apply_channel(&frame, &ps, 0.7, &cfg, c340()).unwrap();
        assert_eq!(a, b);
        let c = apply_channel(&frame, &ps, 0.7, &cfg.with_seed(43), c340()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn reflections_add_energy() {
        let frame = tone_frame(32_500.0, 16);
        let room = RoomBox::default();
        let tx = Vec3::new(1.3, 2.2, 1.1);
        let rx = Vec3::new(5.0, 2.5, 2.5);
        let full = image_method_paths(&tx, &rx, &room, 1, 0.5, c340()).unwrap();
        let cfg = noiseless();
        let mut energies = Vec::new();
        for k in 1..=full.len() {
            let subset = PathSet {
                paths: full.paths[..k].to_vec(),
            };
            let out = apply_channel_window(&frame, &subset, 0.0, &cfg, c340(), 20_000).unwrap();
            energies.push(out.energy());
        }
        // sums of positive-gain copies with distinct delays: each added path
        // may interfere, but the total never falls below the direct energy
        assert!(energies.iter().all(|e| *e >= energies[0] * (1.0 - 1e-9)));
    }

    #[test]
    fn beam_cone() {
        let tx = Vec3::new(1.0, 1.0, 1.0);
        let f = Vec3::new(1.0, 0.0, 0.0);
        assert!(beam_visible(&tx, &f, &Vec3::new(3.0, 1.0, 1.0), 10.0).unwrap());
        assert!(!beam_visible(&tx, &f, &Vec3::new(-3.0, 1.0, 1.0), 179.0).unwrap());
        assert!(beam_visible(&tx, &Vec3::zeros(), &Vec3::new(3.0, 1.0, 1.0), 10.0).is_err());
    }

    #[test]
    fn clover_at_centre_sees_every_beacon() {
        let clover = Clover::default();
        let centre = RoomBox::default().centre();
        let beacons = [
            Vec3::new(2.5, 0.0, 1.5),
            Vec3::new(5.0, 2.5, 2.5),
            Vec3::new(2.5, 5.0, 2.0),
            Vec3::new(0.0, 5.0, 3.0),
        ];
        for b in &beacons {
            assert!(clover.covers(&centre, b), "{b:?}");
        }
    }

    #[test]
    fn rendered_paths_match_resampled_frame() {
        let params = WaveformParams::default();
        let bits = BitSequence::for_burst(16, 2, 0).unwrap();
        let plan = make_hop_plan(16, &DEFAULT_CARRIERS_HZ, 2).unwrap();
        let alpha = 1.0 + 0.7 / 340.0;
        let scaled = synthesize_fhss_compressed(&bits, &plan, &params, alpha).unwrap();
        let ps = PathSet {
            paths: vec![
                Path { delay_s: 300.0 / FS, gain: 0.4, reflections: 0 },
                Path { delay_s: 900.0 / FS, gain: 0.1, reflections: 1 },
                Path { delay_s: 2000.0 / FS, gain: 0.05, reflections: 1 },
            ],
        };
        let cfg = ChannelConfig { snr_db: 5.0, seed: 9, ..ChannelConfig::default() };
        let out_len = scaled.len() + 2500;
        let a = apply_paths(&scaled, &ps, &cfg, out_len).unwrap();
        let b = render_paths(&bits, &plan, &params, alpha, &ps, &cfg, out_len).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
