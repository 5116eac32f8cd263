//! Post-processing of runs and the multi-run phase sweep.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::detect::{self, DetectError};
use crate::model::zeeman_phase;
use crate::sequence::scenario::{b_pulse, field_for_phase};
use crate::sequence::{ExperimentSpec, StorageTimeline};
use crate::solver::{self, RunResult, SolverError};

/// Pulses carrying less than this fraction of the larger trace's energy
/// count as absent.
const PULSE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no pulse found in the {0} trace")]
    PulseNotFound(&'static str),
    #[error("traces have different lengths ({0} and {1})")]
    MismatchedTraces(usize, usize),
    #[error("control has no nonzero plateau")]
    NoPlateau,
    #[error("control does not switch off and on again")]
    NoTimeline,
    #[error("window [{t0}, {t1}] µs lies outside the trace")]
    WindowOutsideTrace { t0: f64, t1: f64 },
    #[error("a sweep needs at least 3 runs, got {0}")]
    TooFewRuns(usize),
    #[error("fringe fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("run {index} failed: {source}")]
    Run { index: usize, source: SolverError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

fn centroid(times: &[f64], intensity: &[f64]) -> (f64, f64) {
    let w: f64 = intensity.iter().sum();
    let m: f64 = times.iter().zip(intensity).map(|(t, i)| t * i).sum();
    (w, if w > 0.0 { m / w } else { f64::NAN })
}

/// Centroid delay (µs) of the output intensity relative to the input.
pub fn group_delay(times: &[f64], input: &[f64], output: &[f64]) -> Result<f64, AnalysisError> {
    if input.len() != times.len() || output.len() != times.len() {
        return Err(AnalysisError::MismatchedTraces(input.len(), output.len()));
    }
    let (w_in, c_in) = centroid(times, input);
    let (w_out, c_out) = centroid(times, output);
    let scale = w_in.max(w_out);
    if !(w_in > PULSE_THRESHOLD * scale) || scale <= 0.0 {
        return Err(AnalysisError::PulseNotFound("input"));
    }
    if !(w_out > PULSE_THRESHOLD * scale) {
        return Err(AnalysisError::PulseNotFound("output"));
    }
    Ok(c_out - c_in)
}

/// Group delay of a finished run, from |E(0,t)|² to |E(L,t)|².
pub fn run_delay(result: &RunResult) -> Result<f64, AnalysisError> {
    let out: Vec<f64> = result.field_out.iter().map(|e| e.norm_sqr()).collect();
    group_delay(&result.times, &result.input_trace, &out)
}

/// c/v_g = (Ω_c² + g²N)/Ω_c² at the control plateau.
pub fn compression_factor(spec: &ExperimentSpec) -> Result<f64, AnalysisError> {
    let omega = spec.control.max_value().unwrap_or(0.0);
    if !(omega > 0.0) {
        return Err(AnalysisError::NoPlateau);
    }
    Ok((omega * omega + spec.medium.coupling_g2n) / (omega * omega))
}

/// Energy bookkeeping windows of a storage run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyWindows {
    /// Control fully off: the stored excitation is read here.
    pub storage_complete: f64,
    /// Control starts to return: retrieved light is counted from here.
    pub retrieval_start: f64,
}

impl EfficiencyWindows {
    pub fn from_timeline(tl: &StorageTimeline) -> Result<Self, AnalysisError> {
        Ok(Self {
            storage_complete: tl.storage_start,
            retrieval_start: tl.storage_end.ok_or(AnalysisError::NoTimeline)?,
        })
    }

    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self, AnalysisError> {
        Self::from_timeline(&spec.timeline().ok_or(AnalysisError::NoTimeline)?)
    }
}

/// Energies as fractions of the input energy c·∫|E(0,t)|² dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    /// Output energy before storage completes.
    pub escaped: f64,
    /// Spin excitation ∫|S|² dz when storage completes.
    pub stored: f64,
    /// Output energy after the control returns.
    pub retrieved: f64,
}

pub fn retrieval_efficiency(
    result: &RunResult,
    windows: &EfficiencyWindows,
    light_speed: f64,
) -> Result<Efficiency, AnalysisError> {
    let (Some(&first), Some(&last)) = (result.times.first(), result.times.last()) else {
        return Err(AnalysisError::WindowOutsideTrace {
            t0: windows.storage_complete,
            t1: windows.retrieval_start,
        });
    };
    let inside = |t: f64| t >= first - 1e-9 && t <= last + 1e-9;
    if !inside(windows.storage_complete) || !inside(windows.retrieval_start) {
        return Err(AnalysisError::WindowOutsideTrace {
            t0: windows.storage_complete,
            t1: windows.retrieval_start,
        });
    }
    let input = result.diagnostics.input_energy;
    if !(input > 0.0) {
        return Err(AnalysisError::PulseNotFound("input"));
    }
    let at = result
        .times
        .iter()
        .position(|&t| t >= windows.storage_complete - 1e-9)
        .unwrap_or(result.times.len() - 1);
    Ok(Efficiency {
        escaped: result.output_energy(f64::NEG_INFINITY, windows.storage_complete, light_speed) / input,
        stored: result.spin_energy[at] / input,
        retrieved: result.output_energy(windows.retrieval_start, f64::INFINITY, light_speed) / input,
    })
}

/// Time the excitation spends stored: from storage completion to the
/// intensity centroid of the retrieved light.
pub fn storage_time(result: &RunResult, windows: &EfficiencyWindows) -> Result<f64, AnalysisError> {
    let (w, m) = result
        .times
        .iter()
        .zip(&result.field_out)
        .filter(|(&t, _)| t >= windows.retrieval_start)
        .fold((0.0, 0.0), |(w, m), (t, e)| (w + e.norm_sqr(), m + t * e.norm_sqr()));
    if !(w > 0.0) {
        return Err(AnalysisError::PulseNotFound("retrieved"));
    }
    Ok(m / w - windows.storage_complete)
}

/// How a run's retrieval peak intensity is read off the detector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PeakMeasure {
    /// Signal channel at the instant of peak retrieved field |E(L,t)|².
    #[default]
    FieldPeak,
    /// Largest signal-channel value in the retrieval window.
    ChannelMax,
    /// Signal-channel energy above the baseline in the retrieval window.
    Energy,
}

fn retrieval_window(result: &RunResult) -> Result<std::ops::Range<usize>, AnalysisError> {
    Ok(detect::retrieval_interval(&result.control_out).ok_or(DetectError::NoRetrieval)?)
}

fn field_peak_index(result: &RunResult, window: std::ops::Range<usize>) -> usize {
    window
        .clone()
        .fold(window.start, |best, i| {
            if result.field_out[i].norm_sqr() > result.field_out[best].norm_sqr() {
                i
            } else {
                best
            }
        })
}

pub fn retrieval_peak(result: &RunResult, measure: PeakMeasure) -> Result<f64, AnalysisError> {
    let window = retrieval_window(result)?;
    let ch = &result.detector.signal_channel;
    Ok(match measure {
        PeakMeasure::FieldPeak => ch[field_peak_index(result, window)],
        PeakMeasure::ChannelMax => ch[window].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        PeakMeasure::Energy => {
            let b = result.detector.baseline;
            result.sample_interval() * ch[window].iter().map(|v| v - b).sum::<f64>()
        }
    })
}

/// Phase of the retrieved field at its peak, recovered interferometrically.
///
/// The retrieved field is mixed with the control at φ₀ and at φ₀ + π/2;
/// together with the unmixed intensities the two readings give cos and sin
/// of arg E − φ₀.
pub fn interferometric_phase(result: &RunResult, mix_amplitude: f64, mix_phase: f64) -> Result<f64, AnalysisError> {
    let window = retrieval_window(result)?;
    let i = field_peak_index(result, window);
    let e = [result.field_out[i]];
    let c = [result.control_hat[i]];
    let t = [result.times[i]];
    let read = |eps: f64, phi: f64| -> Result<f64, DetectError> {
        let cfg = crate::sequence::DetectionConfig {
            mix_amplitude: eps,
            mix_phase: phi,
            ..Default::default()
        };
        Ok(detect::detect(&e, &c, &t, &cfg)?.signal_channel[0])
    };
    let field = read(0.0, 0.0)?;
    let b = mix_amplitude * c[0];
    if !(b > 0.0) || !(field > 0.0) {
        return Err(DetectError::NothingRetrieved.into());
    }
    let in_phase = read(mix_amplitude, mix_phase)? - field - b * b;
    let quadrature = read(mix_amplitude, mix_phase + FRAC_PI_2)? - field - b * b;
    Ok(mix_phase + quadrature.atan2(in_phase))
}

/// Least-squares fit of I = A + B·cos(Φ + φ₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// RMS deviation of the data from the fit.
    pub residual: f64,
}

impl FringeFit {
    /// B/A, zero when the offset vanishes.
    pub fn contrast(&self) -> f64 {
        if self.offset != 0.0 {
            self.amplitude / self.offset
        } else {
            0.0
        }
    }

    pub fn evaluate(&self, phi: f64) -> f64 {
        self.offset + self.amplitude * (phi + self.phase).cos()
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 * (1.0 + a[col][col].abs()) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

pub fn fit_fringe(phis: &[f64], intensities: &[f64]) -> Result<FringeFit, AnalysisError> {
    let n = phis.len();
    if n != intensities.len() {
        return Err(AnalysisError::MismatchedTraces(n, intensities.len()));
    }
    if n < 3 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    let mean = intensities.iter().sum::<f64>() / n as f64;
    let rows: Vec<[f64; 3]> = phis.iter().map(|p| [1.0, p.cos(), p.sin()]).collect();
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (r, &y) in rows.iter().zip(intensities) {
        for i in 0..3 {
            atb[i] += r[i] * y;
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let (offset, alpha, beta) = match solve3(ata, atb) {
        Some([a, al, be]) => (a, al, be),
        // Φ does not span enough of the circle to separate the terms.
        None => (mean, 0.0, 0.0),
    };
    let amplitude = alpha.hypot(beta);
    let phase = if amplitude > 0.0 { (-beta).atan2(alpha) } else { 0.0 };
    let fit = FringeFit {
        offset,
        amplitude,
        phase,
        residual: 0.0,
    };
    let ss: f64 = phis
        .iter()
        .zip(intensities)
        .map(|(&p, &y)| (y - fit.evaluate(p)).powi(2))
        .sum();
    Ok(FringeFit {
        residual: (ss / n as f64).sqrt(),
        ..fit
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    /// Applied Zeeman phase Φ (rad).
    pub expected_phase: f64,
    /// ∫B dt (gauss·µs).
    pub b_area: f64,
    pub retrieval_peak: f64,
    /// Interferometric phase of the retrieved field (rad).
    pub fitted_phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub fringe_fit: FringeFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub measure: PeakMeasure,
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            measure: PeakMeasure::FieldPeak,
            parallel: true,
        }
    }
}

/// Experiment of a sweep applying Zeeman phase `phi`: the base field
/// waveform rescaled, or the standard storage-window trapezoid when the
/// base has no field.
pub fn sweep_spec(base: &ExperimentSpec, phi: f64) -> Result<ExperimentSpec, AnalysisError> {
    let mut spec = base.clone();
    let (t0, t1) = (base.grid.t_start, base.grid.t_end);
    let base_phase = zeeman_phase(&base.bfield, t0, t1, &base.zeeman).unwrap_or(0.0);
    spec.bfield = if base_phase.abs() > 1e-12 {
        base.bfield.scaled(phi / base_phase)
    } else {
        b_pulse(field_for_phase(phi, &base.zeeman))
    };
    spec.label = format!("{}_phi{:.4}", base.label, phi);
    Ok(spec)
}

/// Runs `n_runs` experiments with Φ_k = k·`phi_max`/`n_runs`, so that 20
/// runs over 4π step by 0.2π, and fits the retrieval peak intensities to
/// the fringe law.
pub fn phase_sweep(
    base: &ExperimentSpec,
    n_runs: usize,
    phi_max: f64,
    options: SweepOptions,
) -> Result<SweepResult, AnalysisError> {
    if n_runs < 3 {
        return Err(AnalysisError::TooFewRuns(n_runs));
    }
    let phis: Vec<f64> = (0..n_runs)
        .map(|k| phi_max * k as f64 / n_runs as f64)
        .collect();
    let one = |index: usize| -> Result<SweepEntry, AnalysisError> {
        let phi = phis[index];
        let spec = sweep_spec(base, phi)?;
        let wrap = |source: SolverError| AnalysisError::Run { index, source };
        let result = solver::run(&spec).map_err(wrap)?;
        let b_area = spec
            .bfield
            .integral(spec.grid.t_start, spec.grid.t_end)
            .unwrap_or(0.0);
        let mix = result.diagnostics.mix_amplitude;
        Ok(SweepEntry {
            expected_phase: phi,
            b_area,
            retrieval_peak: retrieval_peak(&result, options.measure)?,
            fitted_phase: interferometric_phase(&result, mix, spec.detection.mix_phase)?,
        })
    };
    let entries: Vec<SweepEntry> = if options.parallel {
        (0..n_runs).into_par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        (0..n_runs).map(one).collect::<Result<_, _>>()?
    };
    let y: Vec<f64> = entries.iter().map(|e| e.retrieval_peak).collect();
    let fringe_fit = fit_fringe(&phis, &y)?;
    Ok(SweepResult { entries, fringe_fit })
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Phase of the retrieved field at its peak relative to a reference run.
pub fn relative_retrieved_phase(result: &RunResult, reference: &RunResult) -> Result<f64, AnalysisError> {
    let window = retrieval_window(reference)?;
    let i = field_peak_index(reference, window);
    let a: Complex64 = result.field_out[i];
    let b: Complex64 = reference.field_out[i];
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(DetectError::NothingRetrieved.into());
    }
    Ok((a * b.conj()).arg())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{scenario, Scenario, Waveform};
    use proptest::prelude::*;

    fn gaussian(times: &[f64], center: f64, width: f64) -> Vec<f64> {
        times.iter().map(|t| (-((t - center) / width).powi(2)).exp()).collect()
    }

    #[test]
    fn shifted_pulse_delay() {
        let times: Vec<f64> = (0..2000).map(|i| i as f64 * 0.1).collect();
        let a = gaussian(&times, 50.0, 8.0);
        let b = gaussian(&times, 63.0, 8.0);
        assert!((group_delay(&times, &a, &b).unwrap() - 13.0).abs() < 0.05);
        assert_eq!(group_delay(&times, &a, &a).unwrap(), 0.0);
        let zero = vec![0.0; times.len()];
        assert_eq!(group_delay(&times, &a, &zero), Err(AnalysisError::PulseNotFound("output")));
    }

    #[test]
    fn compression_examples() {
        let mut spec = scenario(Scenario::Slowlight).unwrap();
        let omega = spec.control.max_value().unwrap();
        spec.medium.coupling_g2n = 0.0;
        assert_eq!(compression_factor(&spec).unwrap(), 1.0);
        spec.medium.coupling_g2n = 3.0 * omega * omega;
        assert!((compression_factor(&spec).unwrap() - 4.0).abs() < 1e-12);
        spec.medium.coupling_g2n = 1e5 * omega * omega;
        assert!((compression_factor(&spec).unwrap() / 1e5 - 1.0).abs() < 1e-4);
        spec.control = Waveform::constant(0.0);
        assert_eq!(compression_factor(&spec), Err(AnalysisError::NoPlateau));
    }

    #[test]
    fn compression_times_velocity_is_c() {
        use crate::model::{group_velocity, mixing_angle};
        let spec = scenario(Scenario::Fig2a).unwrap();
        let theta = mixing_angle(spec.medium.coupling_g2n, spec.control.max_value().unwrap()).unwrap();
        let vg = group_velocity(theta, spec.medium.light_speed);
        let k = compression_factor(&spec).unwrap();
        assert!((k * vg / spec.medium.light_speed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fringe_fit_recovers_parameters() {
        let phis: Vec<f64> = (0..20).map(|k| 0.2 * PI * k as f64).collect();
        let y: Vec<f64> = phis.iter().map(|p| 3.0 + 2.5 * (p - 0.4).cos()).collect();
        let f = fit_fringe(&phis, &y).unwrap();
        assert!((f.offset - 3.0).abs() < 1e-12);
        assert!((f.amplitude - 2.5).abs() < 1e-12);
        assert!((f.phase + 0.4).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn flat_fringe() {
        let f = fit_fringe(&[0.0; 3], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((f.offset, f.amplitude), (2.0, 0.0));
        assert_eq!(fit_fringe(&[0.0, 1.0], &[1.0, 2.0]), Err(AnalysisError::TooFewPoints(2)));
    }

    #[test]
    fn too_few_runs() {
        let spec = scenario(Scenario::Fig2a).unwrap();
        assert_eq!(
            phase_sweep(&spec, 2, 4.0 * PI, SweepOptions::default()),
            Err(AnalysisError::TooFewRuns(2))
        );
    }

    #[test]
    fn sweep_spec_scales_or_builds_field() {
        let base = scenario(Scenario::Fig2a).unwrap();
        let s = sweep_spec(&base, PI).unwrap();
        let phi = zeeman_phase(&s.bfield, 0.0, 140.0, &s.zeeman).unwrap();
        assert!((phi - PI).abs() < 1e-12);
        let zero = scenario(Scenario::Fig3Trace(0)).unwrap();
        let s = sweep_spec(&zero, 2.0 * PI).unwrap();
        let phi = zeeman_phase(&s.bfield, 0.0, 140.0, &s.zeeman).unwrap();
        assert!((phi - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn wrap() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-0.5) + 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn fit_is_exact_on_noiseless_fringes(
            a in 1.0f64..10.0, b in 0.0f64..1.0, p0 in -PI..PI, n in 3usize..40,
        ) {
            let phis: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
            let y: Vec<f64> = phis.iter().map(|p| a + a * b * (p + p0).cos()).collect();
            let f = fit_fringe(&phis, &y).unwrap();
            prop_assert!((f.offset - a).abs() < 1e-9 * a);
            prop_assert!((f.amplitude - a * b).abs() < 1e-9 * a);
            if b > 1e-3 {
                prop_assert!(wrap_phase(f.phase - p0).abs() < 1e-6);
            }
        }
    }
}
