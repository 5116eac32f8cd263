//! Interferometric detection of the transmitted light.
//!
//! A waveplate and polarizing beam splitter after the cell send a small
//! fraction ε of the control field into the signal photodetector. At the
//! envelope level the two channels are
//!
//! ```text
//! signal  = |E(L,t) + ε·Ĉ(t)·e^{iφ₀}|²
//! control = (1 − ε²)·|Ĉ(t)|²
//! ```
//!
//! where Ĉ is the control envelope expressed in signal-field units. The
//! relative phase of the released pulse and the control therefore shows up
//! as constructive or destructive interference in the signal channel.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use thiserror::Error;

use crate::sequence::{DetectionConfig, MAX_LEAKAGE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("time series lengths differ: {0} samples vs {1}")]
    MismatchedTimeBase(usize, usize),
    #[error("no retrieval interval: the control never returns after being switched off")]
    NoRetrieval,
    #[error("retrieved field is zero; cannot balance the interferometer")]
    NothingRetrieved,
    #[error("window [{t0}, {t1}] is not inside the trace")]
    WindowOutsideTrace { t0: f64, t1: f64 },
    #[error("window holds only {0} samples")]
    WindowTooShort(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTrace {
    pub times: Vec<f64>,
    pub signal_channel: Vec<f64>,
    pub control_channel: Vec<f64>,
    /// Mixed-control intensity ε²|Ĉ|² at the start of the trace.
    pub baseline: f64,
}

/// Envelope-level detector model. `control_hat` is Ĉ(t) in signal-field
/// units on the same time base as `field_out`.
pub fn detect(
    field_out: &[Complex64],
    control_hat: &[f64],
    times: &[f64],
    cfg: &DetectionConfig,
) -> Result<DetectorTrace, DetectError> {
    if field_out.len() != control_hat.len() {
        return Err(DetectError::MismatchedTimeBase(field_out.len(), control_hat.len()));
    }
    if times.len() != field_out.len() {
        return Err(DetectError::MismatchedTimeBase(times.len(), field_out.len()));
    }
    let eps = cfg.mix_amplitude;
    let mix = Complex64::from_polar(eps, cfg.mix_phase);
    let signal_channel = field_out
        .iter()
        .zip(control_hat)
        .map(|(&e, &c)| (e + mix * c).norm_sqr())
        .collect();
    let control_channel = control_hat
        .iter()
        .map(|&c| (1.0 - eps * eps) * c * c)
        .collect();
    let baseline = control_hat.first().map_or(0.0, |&c| (mix * c).norm_sqr());
    Ok(DetectorTrace {
        times: times.to_vec(),
        signal_channel,
        control_channel,
        baseline,
    })
}

/// Adds zero-mean white noise of standard deviation `std` to the signal
/// channel, clamping at zero intensity. Deterministic for a given seed.
pub fn add_noise(trace: &mut DetectorTrace, std: f64, seed: u64) {
    if std <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    for v in &mut trace.signal_channel {
        *v = (*v + normal.sample(&mut rng)).max(0.0);
    }
}

/// Index range of the retrieval interval: from the first sample where the
/// control is back on after having been switched off, to the end.
pub fn retrieval_interval(control: &[f64]) -> Option<std::ops::Range<usize>> {
    let first_on = control.iter().position(|&c| c > 0.0)?;
    let off = first_on + control[first_on..].iter().position(|&c| c <= 0.0)?;
    let back_on = off + control[off..].iter().position(|&c| c > 0.0)?;
    Some(back_on..control.len())
}

/// Mixing amplitude ε for which the mixed control intensity ε²|Ĉ|² equals
/// the peak retrieved intensity |E|², clamped below the leakage limit.
pub fn auto_balance(field_out: &[Complex64], control_hat: &[f64]) -> Result<f64, DetectError> {
    if field_out.len() != control_hat.len() {
        return Err(DetectError::MismatchedTimeBase(field_out.len(), control_hat.len()));
    }
    let window = retrieval_interval(control_hat).ok_or(DetectError::NoRetrieval)?;
    let (peak_idx, peak) = window
        .clone()
        .map(|i| (i, field_out[i].norm_sqr()))
        .fold((window.start, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if peak <= 0.0 || control_hat[peak_idx] <= 0.0 {
        return Err(DetectError::NothingRetrieved);
    }
    let eps = peak.sqrt() / control_hat[peak_idx];
    Ok(eps.min((MAX_LEAKAGE * (1.0 - 1e-6)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beat {
    /// Dominant modulation frequency in MHz.
    Frequency(f64),
    /// No spectral line stands above the noise floor.
    None,
}

impl Beat {
    pub fn frequency(self) -> Option<f64> {
        match self {
            Beat::Frequency(f) => Some(f),
            Beat::None => None,
        }
    }
}

/// Dominant modulation frequency (MHz) of the signal channel in
/// `[t0, t1]`.
///
/// The mean-subtracted window is Hann-tapered and zero-padded; the highest
/// spectral line above 1/(t1 − t0) is located on the padded FFT grid and
/// then refined by golden-section search on the exact windowed transform.
pub fn beat_frequency(trace: &DetectorTrace, t0: f64, t1: f64) -> Result<Beat, DetectError> {
    let times = &trace.times;
    if times.len() != trace.signal_channel.len() {
        return Err(DetectError::MismatchedTimeBase(times.len(), trace.signal_channel.len()));
    }
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(DetectError::WindowOutsideTrace { t0, t1 });
    };
    if !(t0 < t1) || t0 < first - 1e-9 || t1 > last + 1e-9 {
        return Err(DetectError::WindowOutsideTrace { t0, t1 });
    }
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= t0 - 1e-9 && times[i] <= t1 + 1e-9)
        .collect();
    if idx.len() < 8 {
        return Err(DetectError::WindowTooShort(idx.len()));
    }
    let n = idx.len();
    let dt = (times[idx[n - 1]] - times[idx[0]]) / (n - 1) as f64;
    let span = dt * n as f64;

    let mean = idx.iter().map(|&i| trace.signal_channel[i]).sum::<f64>() / n as f64;
    let samples: Vec<f64> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            (trace.signal_channel[i] - mean) * w
        })
        .collect();

    let scale = samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) || scale == 0.0 {
        return Ok(Beat::None);
    }

    let padded = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(padded, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);

    let df = 1.0 / (padded as f64 * dt);
    let min_bin = ((1.0 / span) / df).ceil() as usize;
    let max_bin = padded / 2;
    if min_bin + 2 >= max_bin {
        return Ok(Beat::None);
    }
    let mags: Vec<f64> = buf[min_bin..max_bin].iter().map(|c| c.norm()).collect();
    let (rel, &peak) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty band");
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    // A lone rising edge into the excluded band is not a spectral line.
    if peak <= 10.0 * median || rel == 0 {
        return Ok(Beat::None);
    }

    let dtft = |f: f64| -> f64 {
        let w = -2.0 * std::f64::consts::PI * f * dt;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &v) in samples.iter().enumerate() {
            acc += Complex64::from_polar(v, w * k as f64);
        }
        acc.norm()
    };
    let centre = (min_bin + rel) as f64 * df;
    let (mut a, mut b) = (centre - df, centre + df);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (dtft(c), dtft(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = dtft(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = dtft(d);
        }
    }
    Ok(Beat::Frequency(0.5 * (a + b)))
}
