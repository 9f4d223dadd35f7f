use serde::{Deserialize, Serialize};

use crate::channel::SoundSpeed;
use crate::dsp::Correlator;
use crate::error::{Error, Result};
use crate::signals::{SignalFrame, DEFAULT_BIT_DURATION_S};

/// Correlation-peak range estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToaResult {
    pub peak_sample: usize,
    pub peak_value: f64,
    /// `c * peak_sample / fs`.
    pub distance_m: f64,
    /// Peak over the highest correlation value more than one bit away;
    /// infinite when no such lag exists or none is positive.
    pub quality: f64,
}

impl ToaResult {
    pub fn time_of_flight_s(&self, sample_rate_hz: f64) -> f64 {
        self.peak_sample as f64 / sample_rate_hz
    }
}

/// Peak sample to one-way distance.
pub fn sample_to_distance(peak_sample: usize, sample_rate_hz: f64, c: SoundSpeed) -> f64 {
    c.value_mps * peak_sample as f64 / sample_rate_hz
}

/// Matched-filter TOA against a known transmit copy.
///
/// Lags run from 0 (no delay) to `received.len() - reference.len()`.
pub fn estimate_toa(received: &SignalFrame, reference: &SignalFrame, c: SoundSpeed) -> Result<ToaResult> {
    estimate_toa_with_guard(received, reference, c, guard_samples(received.sample_rate_hz))
}

/// Like [`estimate_toa`] with an explicit sidelobe exclusion half-width.
pub fn estimate_toa_with_guard(
    received: &SignalFrame,
    reference: &SignalFrame,
    c: SoundSpeed,
    guard: usize,
) -> Result<ToaResult> {
    if reference.is_empty() {
        return Err(Error::Argument("reference frame is empty".into()));
    }
    if received.len() < reference.len() {
        return Err(Error::Argument(format!(
            "received frame ({} samples) shorter than reference ({})",
            received.len(),
            reference.len()
        )));
    }
    if (received.sample_rate_hz - reference.sample_rate_hz).abs() > 1e-9 * received.sample_rate_hz {
        return Err(Error::Argument("received and reference sample rates differ".into()));
    }
    let correlator = Correlator::new(&reference.samples, received.len());
    toa_from_correlator(&correlator, received, c, guard)
}

/// TOA with a prebuilt correlator, for reusing one reference spectrum
/// across many receivers.
pub fn toa_from_correlator(
    correlator: &Correlator,
    received: &SignalFrame,
    c: SoundSpeed,
    guard: usize,
) -> Result<ToaResult> {
    if received.samples.iter().all(|v| *v == 0.0) {
        return Err(Error::NoSignal);
    }
    let corr = correlator.correlate(&received.samples);
    toa_from_correlation(&corr, received.sample_rate_hz, c, guard)
}

pub(crate) fn toa_from_correlation(corr: &[f64], fs: f64, c: SoundSpeed, guard: usize) -> Result<ToaResult> {
    let (peak_sample, &peak_value) = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or(Error::NoSignal)?;
    if !(peak_value > 0.0) {
        return Err(Error::NoSignal);
    }
    let sidelobe = corr
        .iter()
        .enumerate()
        .filter(|(k, _)| k.abs_diff(peak_sample) > guard)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let quality = if sidelobe > 0.0 { peak_value / sidelobe } else { f64::INFINITY };
    Ok(ToaResult {
        peak_sample,
        peak_value,
        distance_m: sample_to_distance(peak_sample, fs, c),
        quality,
    })
}

pub(crate) fn guard_samples(fs: f64) -> usize {
    (fs * DEFAULT_BIT_DURATION_S).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel_window, ChannelConfig, Fading, PathSet};
    use crate::signals::{make_hop_plan, synthesize_fhss, BitSequence, WaveformParams, DEFAULT_CARRIERS_HZ};

    fn burst(n_bits: usize, seed: u64) -> SignalFrame {
        let bits = BitSequence::for_burst(n_bits, seed, 0).unwrap();
        let plan = make_hop_plan(n_bits, &DEFAULT_CARRIERS_HZ, seed).unwrap();
        synthesize_fhss(&bits, &plan, &WaveformParams::default()).unwrap()
    }

    fn delayed(x: &SignalFrame, n: usize, extra: usize) -> SignalFrame {
        let mut s = vec![0.0; n];
        s.extend_from_slice(&x.samples);
        s.resize(s.len() + extra, 0.0);
        SignalFrame::new(s, x.sample_rate_hz, 0.0).unwrap()
    }

    #[test]
    fn integer_delay_recovered() {
        let c = SoundSpeed::new(340.0);
        let reference = burst(8, 1);
        let rx = delayed(&reference, 340, 100);
        let toa = estimate_toa(&rx, &reference, c).unwrap();
        assert_eq!(toa.peak_sample, 340);
        assert!((toa.distance_m - 0.34).abs() < 1e-12);
        assert!(toa.quality >= 1.0);
    }

    #[test]
    fn zero_delay() {
        let c = SoundSpeed::new(340.0);
        let reference = burst(4, 2);
        let toa = estimate_toa(&reference, &reference, c).unwrap();
        assert_eq!(toa.peak_sample, 0);
        assert_eq!(toa.distance_m, 0.0);
        assert_eq!(toa.quality, f64::INFINITY);
    }

    #[test]
    fn silent_frame_is_no_signal() {
        let c = SoundSpeed::new(340.0);
        let reference = burst(4, 2);
        let rx = SignalFrame::new(vec![0.0; reference.len() + 50], reference.sample_rate_hz, 0.0).unwrap();
        assert!(matches!(estimate_toa(&rx, &reference, c), Err(Error::NoSignal)));
        let short = SignalFrame::new(vec![1.0; 10], reference.sample_rate_hz, 0.0).unwrap();
        assert!(matches!(estimate_toa(&short, &reference, c), Err(Error::Argument(_))));
    }

    #[test]
    fn fractional_delay_within_one_quantum() {
        let c = SoundSpeed::new(343.0);
        let reference = burst(16, 3);
        let fs = reference.sample_rate_hz;
        let cfg = ChannelConfig {
            snr_db: f64::INFINITY,
            fading: Fading::None,
            ..ChannelConfig::default()
        };
        for k in 0..20 {
            let delay = 500.0 + 0.05 * k as f64;
            let rx = apply_channel_window(
                &reference,
                &PathSet::direct(delay / fs, 1.0),
                0.0,
                &cfg,
                c,
                reference.len() + 700,
            )
            .unwrap();
            let toa = estimate_toa(&rx, &reference, c).unwrap();
            let truth = c.value_mps * delay / fs;
            assert!((toa.distance_m - truth).abs() <= c.value_mps / fs + 1e-12);
        }
    }

    #[test]
    fn noisy_burst_hits_exact_sample() {
        let c = SoundSpeed::new(340.0);
        let reference = burst(64, 9);
        let fs = reference.sample_rate_hz;
        let out_len = reference.len() + 1500;
        let correlator = Correlator::new(&reference.samples, out_len);
        let mut hits = 0;
        let trials = 200;
        for seed in 0..trials {
            let cfg = ChannelConfig {
                snr_db: 10.0,
                fading: Fading::None,
                seed,
                ..ChannelConfig::default()
            };
            let rx = apply_channel_window(&reference, &PathSet::direct(1000.0 / fs, 1.0), 0.0, &cfg, c, out_len)
                .unwrap();
            let toa = toa_from_correlator(&correlator, &rx, c, guard_samples(fs)).unwrap();
            hits += usize::from(toa.peak_sample == 1000);
        }
        assert!(hits as f64 >= 0.99 * trials as f64, "{hits}/{trials}");
    }
}
