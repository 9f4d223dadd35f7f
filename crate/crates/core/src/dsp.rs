//! FFT correlation, band-limited delay/resampling and spectral peak helpers.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, OnceLock};

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
    // time and frequency buffers reused across transforms
    static BUFFERS: RefCell<(Vec<f64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

// Runs `f` on the spectrum of `x` zero-padded to `n`, with the time buffer
// available afterwards for an inverse transform.
fn with_spectrum<R>(x: &[f64], n: usize, f: impl FnOnce(&mut Vec<f64>, &mut Vec<Complex64>) -> R) -> R {
    assert!(x.len() <= n, "transform shorter than input");
    let plan = forward_plan(n);
    BUFFERS.with(|b| {
        let (real, spec) = &mut *b.borrow_mut();
        real.clear();
        real.extend_from_slice(x);
        real.resize(n, 0.0);
        spec.resize(n / 2 + 1, Complex64::new(0.0, 0.0));
        with_scratch(plan.get_scratch_len(), |scratch| plan.process_with_scratch(real, spec, scratch))
            .expect("sized by plan");
        f(real, spec)
    })
}

fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [Complex64]) -> R) -> R {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        if s.len() < len {
            s.resize(len, Complex64::new(0.0, 0.0));
        }
        f(&mut s[..len])
    })
}

fn forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Smallest 2^a * 3^b that is >= n.
pub fn fast_len(n: usize) -> usize {
    let n = n.max(2);
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < best {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

fn rfft(x: &[f64], n: usize) -> Vec<Complex64> {
    let plan = forward_plan(n);
    let mut input = plan.make_input_vec();
    input[..x.len()].copy_from_slice(x);
    let mut out = plan.make_output_vec();
    with_scratch(plan.get_scratch_len(), |scratch| plan.process_with_scratch(&mut input, &mut out, scratch))
        .expect("sized by plan");
    out
}

fn irfft(mut spectrum: Vec<Complex64>, n: usize) -> Vec<f64> {
    let plan = inverse_plan(n);
    spectrum[0].im = 0.0;
    if n % 2 == 0 {
        let last = spectrum.len() - 1;
        spectrum[last].im = 0.0;
    }
    let mut out = plan.make_output_vec();
    with_scratch(plan.get_scratch_len(), |scratch| plan.process_with_scratch(&mut spectrum, &mut out, scratch))
        .expect("sized by plan");
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Cross-correlation against a fixed template for every lag at which the
/// template lies entirely inside the received buffer.
///
/// The template spectrum is computed once so one correlator can serve many
/// received buffers of the same length.
#[derive(Debug, Clone)]
pub struct Correlator {
    template_len: usize,
    received_len: usize,
    n_fft: usize,
    template_spectrum: Vec<Complex64>,
}

impl Correlator {
    pub fn new(template: &[f64], received_len: usize) -> Self {
        assert!(received_len >= template.len(), "received buffer shorter than template");
        let n_fft = fast_len(received_len);
        let template_spectrum = rfft(template, n_fft).into_iter().map(|c| c.conj()).collect();
        Self {
            template_len: template.len(),
            received_len,
            n_fft,
            template_spectrum,
        }
    }

    pub fn template_len(&self) -> usize {
        self.template_len
    }

    pub fn received_len(&self) -> usize {
        self.received_len
    }

    /// `out[k] = sum_n received[n + k] * template[n]` for
    /// `k in 0..=received_len - template_len`.
    pub fn correlate(&self, received: &[f64]) -> Vec<f64> {
        assert_eq!(received.len(), self.received_len);
        let n = self.n_fft;
        let inverse = inverse_plan(n);
        // circular lags up to received_len - template_len never wrap
        let lags = self.received_len - self.template_len + 1;
        with_spectrum(received, n, |real, spec| {
            spec.iter_mut()
                .zip(&self.template_spectrum)
                .for_each(|(a, b)| *a *= b);
            spec[0].im = 0.0;
            if n % 2 == 0 {
                let last = spec.len() - 1;
                spec[last].im = 0.0;
            }
            with_scratch(inverse.get_scratch_len(), |scratch| inverse.process_with_scratch(spec, real, scratch))
                .expect("sized by plan");
            let scale = 1.0 / n as f64;
            real[..lags].iter().map(|v| v * scale).collect()
        })
    }
}

/// Sum of delayed, scaled copies of `x`, evaluated on `0..out_len`.
///
/// Integer delays (to within 1e-9 samples) are exact sample shifts;
/// fractional ones are applied as linear phase in the frequency domain,
/// i.e. ideal band-limited interpolation.
pub fn delay_and_sum(x: &[f64], taps: &[(f64, f64)], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    let mut fractional = Vec::new();
    for &(delay, gain) in taps {
        let rounded = delay.round();
        if (delay - rounded).abs() < 1e-9 && rounded >= 0.0 {
            let shift = rounded as usize;
            for (i, v) in x.iter().enumerate() {
                match out.get_mut(i + shift) {
                    Some(o) => *o += gain * v,
                    None => break,
                }
            }
        } else {
            fractional.push((delay, gain));
        }
    }
    if fractional.is_empty() {
        return out;
    }
    let max_delay = fractional.iter().map(|t| t.0).fold(0.0, f64::max);
    let guard = 256;
    let n_fft = fast_len((x.len() + max_delay.ceil() as usize + guard).max(out_len));
    let mut spec = rfft(x, n_fft);
    let mut response = vec![Complex64::new(0.0, 0.0); spec.len()];
    for &(delay, gain) in &fractional {
        let step = Complex64::from_polar(1.0, -TAU * delay / n_fft as f64);
        let mut phasor = Complex64::new(gain, 0.0);
        for (k, h) in response.iter_mut().enumerate() {
            // re-anchor periodically to keep the recurrence from drifting
            if k % 1024 == 0 {
                phasor = Complex64::from_polar(gain, -TAU * delay * k as f64 / n_fft as f64);
            }
            *h += phasor;
            phasor *= step;
        }
    }
    spec.iter_mut().zip(&response).for_each(|(a, h)| *a *= h);
    let y = irfft(spec, n_fft);
    out.iter_mut().zip(&y).for_each(|(o, v)| *o += v);
    out
}

const SINC_HALF_WIDTH: usize = 16;
const SINC_PHASES: usize = 2048;
const KAISER_BETA: f64 = 9.0;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

// Kaiser-windowed sinc sampled at SINC_PHASES fractional offsets; row p
// holds the 2W taps for offset mu = p / SINC_PHASES, tap i weighting x[n0 - W + 1 + i].
fn sinc_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let w = SINC_HALF_WIDTH as f64;
        let taps = 2 * SINC_HALF_WIDTH;
        let norm = bessel_i0(KAISER_BETA);
        let mut t = Vec::with_capacity((SINC_PHASES + 1) * taps);
        for p in 0..=SINC_PHASES {
            let mu = p as f64 / SINC_PHASES as f64;
            for i in 0..taps {
                let u = mu - (i as f64 - w + 1.0);
                let sinc = if u.abs() < 1e-12 { 1.0 } else { (PI * u).sin() / (PI * u) };
                let r = u / w;
                let win = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
                };
                t.push(sinc * win);
            }
        }
        t
    })
}

/// Band-limited value of the sampled signal at fractional index `pos`.
pub fn interpolate(x: &[f64], pos: f64) -> f64 {
    let table = sinc_table();
    let taps = 2 * SINC_HALF_WIDTH;
    let n0 = pos.floor();
    let mu = pos - n0;
    let n0 = n0 as isize;
    let ph = mu * SINC_PHASES as f64;
    let p = (ph.floor() as usize).min(SINC_PHASES - 1);
    let frac = ph - p as f64;
    let row_a = &table[p * taps..(p + 1) * taps];
    let row_b = &table[(p + 1) * taps..(p + 2) * taps];
    let start = n0 - SINC_HALF_WIDTH as isize + 1;
    let mut acc = 0.0;
    for i in 0..taps {
        let idx = start + i as isize;
        if idx < 0 || idx as usize >= x.len() {
            continue;
        }
        let h = row_a[i] + frac * (row_b[i] - row_a[i]);
        acc += h * x[idx as usize];
    }
    acc
}

/// Time-scales a sampled signal: `out[m] = x(alpha * m)`.
///
/// `alpha > 1` compresses (raises every frequency by `alpha`).
pub fn time_scale(x: &[f64], alpha: f64) -> Vec<f64> {
    if alpha == 1.0 {
        return x.to_vec();
    }
    let n_out = (((x.len() as f64) - 1.0) / alpha).floor() as usize + 1;
    (0..n_out).map(|m| interpolate(x, alpha * m as f64)).collect()
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Squared DTFT magnitude of `x` at normalized frequency `f` (cycles/sample).
pub fn dtft_power(x: &[f64], f: f64) -> f64 {
    // four interleaved phasor chains, re-anchored every 1024 samples
    const LANES: usize = 4;
    let w = -TAU * f;
    let step = Complex64::from_polar(1.0, w * LANES as f64);
    let mut acc = [Complex64::new(0.0, 0.0); LANES];
    for (b, block) in x.chunks(1024).enumerate() {
        let base = b * 1024;
        let mut p: [Complex64; LANES] = std::array::from_fn(|i| Complex64::from_polar(1.0, w * (base + i) as f64));
        let mut quads = block.chunks_exact(LANES);
        for q in &mut quads {
            for i in 0..LANES {
                acc[i] += p[i] * q[i];
                p[i] *= step;
            }
        }
        for (i, &v) in quads.remainder().iter().enumerate() {
            acc[i] += p[i] * v;
        }
    }
    acc.iter().sum::<Complex64>().norm_sqr()
}

/// Vertex offset (in units of the sample spacing) of the parabola through
/// three equally spaced points centred on the middle one.
pub fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Power spectrum of a zero-padded real signal (bins `0..=n_fft/2`).
pub fn power_spectrum(x: &[f64], n_fft: usize) -> Vec<f64> {
    with_spectrum(x, n_fft, |_, spec| spec.iter().map(|c| c.norm_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fast_len_is_smooth_and_large_enough() {
        for n in [1usize, 2, 5, 100, 340, 1000, 21_760, 28_360, 40_001] {
            let m = fast_len(n);
            assert!(m >= n);
            let mut r = m;
            while r % 2 == 0 {
                r /= 2;
            }
            while r % 3 == 0 {
                r /= 3;
            }
            assert_eq!(r, 1, "{m}");
        }
        assert_eq!(fast_len(1000), 1024);
    }

    #[test]
    fn fft_correlation_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let template: Vec<f64> = (0..301).map(|_| rng.random_range(-1.0..1.0)).collect();
        let received: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = Correlator::new(&template, received.len()).correlate(&received);
        assert_eq!(fast.len(), 700);
        for (k, v) in fast.iter().enumerate() {
            let direct: f64 = template.iter().enumerate().map(|(n, t)| t * received[n + k]).sum();
            assert!((v - direct).abs() <= 1e-9 * direct.abs().max(1.0), "lag {k}");
        }
    }

    #[test]
    fn integer_delay_is_exact_shift() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let y = delay_and_sum(&x, &[(7.0, 0.5)], 70);
        for (i, v) in y.iter().enumerate() {
            let expect = if (7..57).contains(&i) { 0.5 * x[i - 7] } else { 0.0 };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn fractional_delay_of_bandlimited_tone() {
        let f = 0.1;
        let x: Vec<f64> = (0..4000).map(|i| (TAU * f * i as f64).sin()).collect();
        let d = 12.37;
        let y = delay_and_sum(&x, &[(d, 1.0)], 4100);
        // away from the edges the output is the analytically delayed tone
        for i in 1000..3000 {
            let expect = (TAU * f * (i as f64 - d)).sin();
            assert!((y[i] - expect).abs() < 2e-3, "{i}: {} vs {expect}", y[i]);
        }
    }

    #[test]
    fn resampling_scales_frequency() {
        let f = 40_000.0 / 340_000.0;
        let x: Vec<f64> = (0..3000).map(|i| (TAU * f * i as f64).sin()).collect();
        let alpha = 1.01;
        let y = time_scale(&x, alpha);
        for m in 100..2800 {
            let expect = (TAU * f * alpha * m as f64).sin();
            assert!((y[m] - expect).abs() < 1e-4, "{m}");
        }
        assert_eq!(time_scale(&x, 1.0), x);
    }

    #[test]
    fn interpolation_is_exact_on_grid() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        for i in 20..80 {
            assert!((interpolate(&x, i as f64) - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn parabola_vertex() {
        // y = -(x - 0.3)^2 sampled at -1, 0, 1
        let y = |x: f64| -(x - 0.3) * (x - 0.3);
        assert!((parabolic_offset(y(-1.0), y(0.0), y(1.0)) - 0.3).abs() < 1e-12);
        assert_eq!(parabolic_offset(1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn dtft_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 3, 4, 7, 320, 1030, 2500] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for f in [0.0, 0.013, 0.1176, 0.49] {
                let (mut re, mut im) = (0.0, 0.0);
                for (k, v) in x.iter().enumerate() {
                    let a = -TAU * f * k as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                let want = re * re + im * im;
                assert!((dtft_power(&x, f) - want).abs() <= 1e-9 * want.max(1.0), "n={n} f={f}");
            }
        }
    }
}
