//! BPSK slow-frequency-hopping waveform synthesis.
//!
//! One data bit per hop: bit `j` is `d_j * sin(2π f_j t' + φ)` where `t'` is
//! the time since the start of that bit, so the carrier phase restarts at
//! every hop boundary.

use std::f64::consts::TAU;

use rand::seq::IndexedRandom;
use rand::Rng;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// The six ultrasonic sub-carriers spanning 25-55 kHz.
pub const DEFAULT_CARRIERS_HZ: [f64; 6] = [27_500.0, 32_500.0, 37_500.0, 42_500.0, 47_500.0, 52_500.0];
pub const DEFAULT_SUB_BAND_HZ: f64 = 5_000.0;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 340_000.0;
pub const DEFAULT_BIT_DURATION_S: f64 = 1e-3;
pub const DEFAULT_BITS_PER_BURST: usize = 64;

/// Antipodal data symbols, each exactly -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSequence(Vec<i8>);

impl BitSequence {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Argument("bit sequence must be nonempty".into()));
        }
        if let Some(i) = bits.iter().position(|&b| b != 1 && b != -1) {
            return Err(Error::Argument(format!("bit {i} is {}, expected -1 or +1", bits[i])));
        }
        Ok(Self(bits))
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    /// Bits for burst `burst` of a run seeded with `seed`.
    pub fn for_burst(n: usize, seed: u64, burst: u64) -> Result<Self> {
        Self::random(n, &mut rng::stream(seed, &[rng::tag::BITS, burst]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|b| -b).collect())
    }
}

/// Pseudo-random carrier schedule, one carrier per data bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopPlan {
    pub carrier_hz_per_bit: Vec<f64>,
    pub carrier_set: Vec<f64>,
    pub sub_band_hz: f64,
    pub seed: u64,
}

impl HopPlan {
    pub fn len(&self) -> usize {
        self.carrier_hz_per_bit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carrier_hz_per_bit.is_empty()
    }

    pub fn max_carrier_hz(&self) -> f64 {
        self.carrier_hz_per_bit.iter().copied().fold(0.0, f64::max)
    }
}

/// Draws `n_bits` carriers uniformly from `carrier_set`.
///
/// The sub-band width defaults to the minimum spacing of the set (or the
/// standard 5 kHz for a single carrier).
pub fn make_hop_plan(n_bits: usize, carrier_set: &[f64], seed: u64) -> Result<HopPlan> {
    if carrier_set.is_empty() {
        return Err(Error::Config("carrier set is empty".into()));
    }
    if let Some(f) = carrier_set.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::Config(format!("carrier frequency {f} Hz is not strictly positive")));
    }
    if n_bits == 0 {
        return Err(Error::Argument("hop plan needs at least one bit".into()));
    }
    let mut sorted = carrier_set.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sub_band_hz = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let sub_band_hz = if sub_band_hz.is_finite() { sub_band_hz } else { DEFAULT_SUB_BAND_HZ };

    let mut rng = rng::stream(seed, &[rng::tag::HOP_PLAN]);
    let carrier_hz_per_bit = (0..n_bits)
        .map(|_| *carrier_set.choose(&mut rng).expect("nonempty"))
        .collect();
    Ok(HopPlan {
        carrier_hz_per_bit,
        carrier_set: carrier_set.to_vec(),
        sub_band_hz,
        seed,
    })
}

/// Timing parameters shared by the transmitter and the correlator template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformParams {
    pub bit_duration_s: f64,
    pub phase_rad: f64,
    pub sample_rate_hz: f64,
}

impl Default for WaveformParams {
    fn default() -> Self {
        Self {
            bit_duration_s: DEFAULT_BIT_DURATION_S,
            phase_rad: 0.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl WaveformParams {
    pub fn samples_per_bit(&self) -> f64 {
        self.bit_duration_s * self.sample_rate_hz
    }
}

/// A sampled real waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
}

impl SignalFrame {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Argument(format!("sample rate {sample_rate_hz} must be positive")));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            t0_s,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Mean-square amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }
}

fn check_waveform_inputs(bits: &BitSequence, plan: &HopPlan, params: &WaveformParams) -> Result<()> {
    if plan.len() != bits.len() {
        return Err(Error::Argument(format!(
            "hop plan has {} entries but there are {} bits",
            plan.len(),
            bits.len()
        )));
    }
    let fs = params.sample_rate_hz;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Config(format!("sample rate {fs} Hz must be positive")));
    }
    if fs < 2.0 * plan.max_carrier_hz() {
        return Err(Error::Config(format!(
            "sample rate {fs} Hz aliases the {} Hz carrier",
            plan.max_carrier_hz()
        )));
    }
    if !(params.bit_duration_s > 0.0) || params.samples_per_bit() < 1.0 {
        return Err(Error::Config(format!(
            "bit duration {} s gives fewer than one sample per bit",
            params.bit_duration_s
        )));
    }
    if !params.phase_rad.is_finite() {
        return Err(Error::Argument("phase must be finite".into()));
    }
    Ok(())
}

/// Synthesizes the hopped BPSK burst, starting at `t0_s = 0`.
pub fn synthesize_fhss(bits: &BitSequence, plan: &HopPlan, params: &WaveformParams) -> Result<SignalFrame> {
    synthesize_fhss_compressed(bits, plan, params, 1.0)
}

/// The burst as heard through a Doppler time-scale: sample `m` is the
/// continuous waveform at `alpha * m / fs`, evaluated exactly rather than
/// interpolated. `alpha = 1` gives [`synthesize_fhss`].
pub fn synthesize_fhss_compressed(
    bits: &BitSequence,
    plan: &HopPlan,
    params: &WaveformParams,
    alpha: f64,
) -> Result<SignalFrame> {
    check_waveform_inputs(bits, plan, params)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Argument(format!("time-scale factor {alpha} must be positive")));
    }
    let fs = params.sample_rate_hz;
    let spb = params.samples_per_bit();
    let n_samples = (bits.len() as f64 * spb).round() as usize;
    let n_out = if alpha == 1.0 {
        n_samples
    } else {
        ((n_samples as f64 - 1.0) / alpha).floor() as usize + 1
    };
    let mut samples = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let u = alpha * m as f64;
        // Bit boundaries are located in sample units; the tiny slack keeps
        // exact multiples of `spb` on the right side of the boundary.
        let j = ((u + 1e-9) / spb).floor() as usize;
        let j = j.min(bits.len() - 1);
        let t_local = (u - j as f64 * spb) / fs;
        let d = f64::from(bits.as_slice()[j]);
        let f = plan.carrier_hz_per_bit[j];
        samples.push(d * (std::f64::consts::TAU * f * t_local + params.phase_rad).sin());
    }
    SignalFrame::new(samples, fs, 0.0)
}

/// Adds `gain * s(alpha * (m - delay_samples))` to `out[m]`, where `s` is
/// the continuous burst waveform indexed in transmit samples and is zero
/// outside `[0, N - 1]`. Equivalent to delaying
/// [`synthesize_fhss_compressed`] by a fractional number of samples with
/// no interpolation error.
pub fn add_fhss_delayed(
    out: &mut [f64],
    bits: &BitSequence,
    plan: &HopPlan,
    params: &WaveformParams,
    alpha: f64,
    delay_samples: f64,
    gain: f64,
) -> Result<()> {
    let len = out.len();
    for_each_segment(bits, plan, params, alpha, delay_samples, len, |seg| {
        let amp = gain * seg.sign;
        // four independent phasor chains keep the multiplier pipeline full
        let mut z: [Complex64; 4] =
            std::array::from_fn(|i| Complex64::from_polar(amp, seg.theta + i as f64 * seg.dtheta));
        let step = Complex64::from_polar(1.0, 4.0 * seg.dtheta);
        let mut quads = out[seg.start..seg.stop].chunks_exact_mut(4);
        for q in &mut quads {
            for i in 0..4 {
                q[i] += z[i].im;
                z[i] *= step;
            }
        }
        for (o, zi) in quads.into_remainder().iter_mut().zip(&z) {
            *o += zi.im;
        }
    })
}

/// Mean square of [`synthesize_fhss_compressed`] output, summed in closed
/// form per bit instead of synthesizing the burst.
pub fn fhss_compressed_power(bits: &BitSequence, plan: &HopPlan, params: &WaveformParams, alpha: f64) -> Result<f64> {
    let mut energy = 0.0;
    let mut count = 0usize;
    for_each_segment(bits, plan, params, alpha, 0.0, usize::MAX, |seg| {
        // sum of sin² = k/2 - Re(e^{2iθ} Σ e^{2ijδ}) / 2
        let k = (seg.stop - seg.start) as f64;
        let ratio = Complex64::from_polar(1.0, 2.0 * seg.dtheta);
        let series = if (ratio - 1.0).norm() < 1e-12 {
            Complex64::new(k, 0.0)
        } else {
            (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * k * seg.dtheta)) / (Complex64::new(1.0, 0.0) - ratio)
        };
        energy += k / 2.0 - (Complex64::from_polar(1.0, 2.0 * seg.theta) * series).re / 2.0;
        count = seg.stop;
    })?;
    Ok(if count == 0 { 0.0 } else { energy / count as f64 })
}

// One bit's run of output samples: out[start..stop] carries
// sign * sin(theta + (m - start) * dtheta).
struct Segment {
    start: usize,
    stop: usize,
    sign: f64,
    theta: f64,
    dtheta: f64,
}

fn for_each_segment(
    bits: &BitSequence,
    plan: &HopPlan,
    params: &WaveformParams,
    alpha: f64,
    delay_samples: f64,
    out_len: usize,
    mut f: impl FnMut(Segment),
) -> Result<()> {
    check_waveform_inputs(bits, plan, params)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Argument(format!("time-scale factor {alpha} must be positive")));
    }
    if !delay_samples.is_finite() {
        return Err(Error::Argument("delay must be finite".into()));
    }
    let fs = params.sample_rate_hz;
    let spb = params.samples_per_bit();
    let last_u = (bits.len() as f64 * spb).round() - 1.0;
    let m_lo = delay_samples.ceil().max(0.0);
    let m_hi = (delay_samples + last_u / alpha).floor().min(out_len as f64 - 1.0);
    if m_hi < m_lo {
        return Ok(());
    }
    let n_bits = bits.len();
    let end = m_hi as usize + 1;
    let mut m = m_lo as usize;
    while m < end {
        let u = (alpha * (m as f64 - delay_samples)).clamp(0.0, last_u);
        let j = (((u + 1e-9) / spb).floor() as usize).min(n_bits - 1);
        let next = if j + 1 < n_bits {
            ((delay_samples + ((j + 1) as f64 * spb - 1e-9) / alpha).ceil() as usize).max(m + 1)
        } else {
            end
        };
        let stop = next.min(end);
        // re-anchored at every bit so rounding never accumulates past one hop
        let freq = plan.carrier_hz_per_bit[j];
        f(Segment {
            start: m,
            stop,
            sign: f64::from(bits.as_slice()[j]),
            theta: TAU * freq * (u - j as f64 * spb) / fs + params.phase_rad,
            dtheta: TAU * freq * alpha / fs,
        });
        m = stop;
    }
    Ok(())
}

/// The zero-delay template the correlator matches against.
pub fn reference_copy(bits: &BitSequence, plan: &HopPlan, params: &WaveformParams) -> Result<SignalFrame> {
    synthesize_fhss(bits, plan, params)
}
