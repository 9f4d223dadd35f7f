use serde::{Deserialize, Serialize};

use crate::channel::SoundSpeed;
use crate::dsp;
use crate::error::{Error, Result};
use crate::signals::{HopPlan, SignalFrame, DEFAULT_BIT_DURATION_S};

/// Burst-averaged Doppler estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerResult {
    pub shift_hz: f64,
    /// Radial speed, positive when the drone closes on the receiver.
    pub velocity_mps: f64,
    /// Mean nominal carrier of the bits used; `shift_hz / carrier_hz * c`
    /// equals `velocity_mps`.
    pub carrier_hz: f64,
    pub bits_used: usize,
}

const COARSE_FFT: usize = 512;
const ALIGN_BITS: usize = 4;

/// Doppler of a burst whose first bit starts at sample 0 of `received`.
pub fn estimate_doppler(received: &SignalFrame, plan: &HopPlan, c: SoundSpeed) -> Result<DopplerResult> {
    estimate_doppler_with(received, plan, DEFAULT_BIT_DURATION_S, c)
}

/// Per-bit spectral peak search around each hop's carrier.
///
/// Each bit window gets a Hann taper, a coarse zero-padded FFT restricted
/// to the hop's sub-band, a parabolic fit on log power, and one more
/// parabolic fit on DTFT samples a quarter bin apart. A first pass over the leading bits estimates the time
/// compression so later windows stay aligned with their bits.
pub fn estimate_doppler_with(
    received: &SignalFrame,
    plan: &HopPlan,
    bit_duration_s: f64,
    c: SoundSpeed,
) -> Result<DopplerResult> {
    let fs = received.sample_rate_hz;
    let spb = fs * bit_duration_s;
    if !(spb >= 2.0) {
        return Err(Error::Argument(format!("bit duration {bit_duration_s} s is below two samples")));
    }
    if (received.len() as f64) < spb.round() {
        return Err(Error::Argument(format!(
            "frame of {} samples is shorter than one bit ({spb} samples)",
            received.len()
        )));
    }
    if plan.is_empty() {
        return Err(Error::Argument("hop plan is empty".into()));
    }
    let first = mean_relative_shift(received, plan, spb, 1.0, ALIGN_BITS)?;
    let (rho, carrier_hz, bits_used) = mean_relative_shift(received, plan, spb, 1.0 + first.0, usize::MAX)?;
    Ok(DopplerResult {
        shift_hz: rho * carrier_hz,
        velocity_mps: rho * c.value_mps,
        carrier_hz,
        bits_used,
    })
}

// Mean of (peak - f_j) / f_j over bits, windows placed for compression alpha.
fn mean_relative_shift(
    received: &SignalFrame,
    plan: &HopPlan,
    spb: f64,
    alpha: f64,
    max_bits: usize,
) -> Result<(f64, f64, usize)> {
    let fs = received.sample_rate_hz;
    let x = &received.samples;
    let win_len = (spb / alpha).round().max(2.0) as usize;
    let guard = ((0.03 * spb).round() as usize).min(win_len / 4);
    let taper = dsp::hann(win_len - 2 * guard);
    let mut rho_sum = 0.0;
    let mut carrier_sum = 0.0;
    let mut used = 0;
    for (j, &f_j) in plan.carrier_hz_per_bit.iter().enumerate().take(max_bits) {
        let start = (j as f64 * spb / alpha).round() as usize + guard;
        let end = start + taper.len();
        if end > x.len() {
            break;
        }
        let w: Vec<f64> = x[start..end].iter().zip(&taper).map(|(a, b)| a * b).collect();
        let peak = spectral_peak(&w, f_j, plan.sub_band_hz, fs);
        rho_sum += (peak - f_j) / f_j;
        carrier_sum += f_j;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Argument("no complete bit window in frame".into()));
    }
    Ok((rho_sum / used as f64, carrier_sum / used as f64, used))
}

fn spectral_peak(w: &[f64], carrier: f64, sub_band: f64, fs: f64) -> f64 {
    let bin = fs / COARSE_FFT as f64;
    let spec = dsp::power_spectrum(w, COARSE_FFT);
    let last = COARSE_FFT / 2 - 1;
    let lo = (((carrier - sub_band / 2.0) / bin).ceil().max(1.0) as usize).min(last);
    let hi = (((carrier + sub_band / 2.0) / bin).floor() as usize).clamp(lo, last);
    let k = (lo..=hi).max_by(|&a, &b| spec[a].total_cmp(&spec[b])).unwrap_or(lo);
    let ln = |p: f64| (p + f64::MIN_POSITIVE).ln();
    let mut f = (k as f64 + dsp::parabolic_offset(ln(spec[k - 1]), ln(spec[k]), ln(spec[k + 1]))) * bin;
    let delta = bin / 4.0;
    let at = |f: f64| ln(dsp::dtft_power(w, f / fs));
    f += dsp::parabolic_offset(at(f - delta), at(f), at(f + delta)) * delta;
    f
}
