//! Built-in scenarios.
//!
//! All scenarios share one medium and one timeline:
//!
//! | time (µs) | event |
//! |-----------|-------|
//! | 0–5       | control only: detector baseline |
//! | 5–60      | sin² signal pulse, 20 µs intensity FWHM, peak at 32.5 |
//! | 47–50     | raised-cosine control ramp-off (storage) |
//! | 62–77     | 15 µs magnetic-field pulse with 1 µs edges |
//! | 80–83     | raised-cosine control ramp-on (retrieval) |
//!
//! Storage starts after about half of the pulse has left the cell. The
//! signal is zero well before the control returns, so the retrieved light
//! carries only the stored excitation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{DetectionConfig, ExperimentSpec, GridSpec, Waveform};
use crate::model::{MediumParams, ZeemanConfig};

/// Control Rabi frequency plateau (rad/µs); gives a 2π × 40 kHz window in
/// the default medium.
pub const CONTROL_RABI: f64 = 3.46;
/// Peak input signal amplitude.
pub const SIGNAL_PEAK: f64 = 0.1;
pub const SIGNAL_START: f64 = 5.0;
/// Full support of the sin² signal envelope; its intensity FWHM is
/// 0.3634 of this, about 20 µs.
pub const SIGNAL_SUPPORT: f64 = 55.0;
pub const RAMP_DURATION: f64 = 3.0;
pub const STORE_AT: f64 = 47.0;
pub const RETRIEVE_AT: f64 = 80.0;
pub const B_PULSE_START: f64 = 62.0;
pub const B_PULSE_DURATION: f64 = 15.0;
pub const B_EDGE: f64 = 1.0;
/// Field-time area of the fig2a pulse (gauss·µs).
pub const FIG2A_AREA: f64 = 1.5;
/// Field held through retrieval in fig2b (gauss).
pub const FIG2B_FIELD: f64 = 0.05;
/// Field applied during entry in the opacity scenario (gauss); its Zeeman
/// shift is 4.2 transparency widths.
pub const OPACITY_FIELD: f64 = 0.12;
/// Zeeman phase step between successive fig3 traces.
pub const FIG3_STEP: f64 = 0.2 * PI;
pub const FIG3_TRACES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected fig2a, fig2b, fig3_trace(k), slowlight or opacity)")]
    Unknown(String),
    #[error("fig3 trace index {0} is outside 0..=19")]
    TraceOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Field pulse inside the storage interval, Φ ≈ 4.2π.
    Fig2a,
    /// Field switched on during storage and held through retrieval.
    Fig2b,
    /// Trace k of the phase waterfall, Φ = 0.2π·k.
    Fig3Trace(usize),
    /// Constant control, no storage: the slow-light reference.
    Slowlight,
    /// Large field applied while the pulse is entering the cell.
    Opacity,
}

impl Scenario {
    pub fn name(&self) -> String {
        match self {
            Self::Fig2a => "fig2a".into(),
            Self::Fig2b => "fig2b".into(),
            Self::Fig3Trace(k) => format!("fig3_trace({k})"),
            Self::Slowlight => "slowlight".into(),
            Self::Opacity => "opacity".into(),
        }
    }

    /// Every scenario with a shipped golden file.
    pub fn all() -> Vec<Scenario> {
        let mut out = vec![Self::Fig2a, Self::Fig2b, Self::Slowlight, Self::Opacity];
        out.extend((0..FIG3_TRACES).map(Self::Fig3Trace));
        out
    }

    /// Golden file name, e.g. `fig3_trace_05.exp`.
    pub fn file_name(&self) -> String {
        match self {
            Self::Fig3Trace(k) => format!("fig3_trace_{k:02}.exp"),
            other => format!("{}.exp", other.name()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    /// Accepts `fig2a`, `fig2b`, `slowlight`, `opacity`, and `fig3_trace(k)`
    /// or `fig3_trace:k`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "fig2a" => return Ok(Self::Fig2a),
            "fig2b" => return Ok(Self::Fig2b),
            "slowlight" => return Ok(Self::Slowlight),
            "opacity" => return Ok(Self::Opacity),
            _ => {}
        }
        let index = s
            .strip_prefix("fig3_trace")
            .and_then(|rest| {
                rest.strip_prefix('(')
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| rest.strip_prefix(':'))
            })
            .and_then(|k| k.trim().parse::<usize>().ok())
            .ok_or_else(|| ScenarioError::Unknown(s.to_string()))?;
        if index >= FIG3_TRACES {
            return Err(ScenarioError::TraceOutOfRange(index));
        }
        Ok(Self::Fig3Trace(index))
    }
}

/// Raised-cosine transition from `from` to `to` over `[t0, t0 + RAMP_DURATION]`,
/// sampled every 0.25 µs.
fn ramp(t0: f64, from: f64, to: f64) -> Vec<(f64, f64)> {
    const SEGMENTS: usize = 12;
    (0..=SEGMENTS)
        .map(|i| {
            let x = i as f64 / SEGMENTS as f64;
            let w = 0.5 * (1.0 - (PI * x).cos());
            (t0 + x * RAMP_DURATION, from + (to - from) * w)
        })
        .collect()
}

/// Control plateau, storage ramp-off, retrieval ramp-on to `retrieval_level`.
fn storage_control(retrieval_level: f64) -> Waveform {
    storage_control_at(CONTROL_RABI, STORE_AT, RETRIEVE_AT, retrieval_level)
}

/// Control at `plateau` switched off by a raised-cosine ramp starting at
/// `store_at` and back on to `retrieval_level` from `retrieve_at`.
pub fn storage_control_at(plateau: f64, store_at: f64, retrieve_at: f64, retrieval_level: f64) -> Waveform {
    let mut knots = vec![(0.0, plateau)];
    knots.extend(ramp(store_at, plateau, 0.0));
    knots.extend(ramp(retrieve_at, 0.0, retrieval_level));
    Waveform::new(knots).expect("ramps are ordered")
}

/// sin² amplitude envelope on `[start, start + support]`, knots every 0.5 µs.
pub fn signal_pulse(start: f64, support: f64) -> Waveform {
    let n = (support / 0.5).round() as usize;
    let mut knots = vec![(0.0, 0.0)];
    knots.extend((0..=n).map(|i| {
        let t = start + 0.5 * i as f64;
        let s = (PI * i as f64 / n as f64).sin();
        let v = if i == 0 || i == n { 0.0 } else { SIGNAL_PEAK * s * s };
        (t, v)
    }));
    knots.dedup_by(|b, a| a.0 == b.0);
    Waveform::new(knots).expect("pulse knots are ordered")
}

/// Trapezoidal field pulse of peak `field` on the standard storage slot.
pub fn b_pulse(field: f64) -> Waveform {
    let t0 = B_PULSE_START;
    let t1 = t0 + B_PULSE_DURATION;
    Waveform::new(vec![
        (0.0, 0.0),
        (t0, 0.0),
        (t0 + B_EDGE, field),
        (t1 - B_EDGE, field),
        (t1, 0.0),
    ])
    .expect("pulse knots are ordered")
}

/// Peak field of the standard trapezoid that produces Zeeman phase `phi`.
pub fn field_for_phase(phi: f64, zeeman: &ZeemanConfig) -> f64 {
    phi / (zeeman.detuning_per_gauss() * (B_PULSE_DURATION - B_EDGE))
}

fn base(label: &str, t_end: f64) -> ExperimentSpec {
    ExperimentSpec {
        label: label.to_string(),
        medium: MediumParams::default(),
        zeeman: ZeemanConfig::default(),
        control: storage_control(CONTROL_RABI),
        signal: signal_pulse(SIGNAL_START, SIGNAL_SUPPORT),
        bfield: b_pulse(0.0),
        grid: GridSpec {
            t_end,
            ..GridSpec::default()
        },
        detection: DetectionConfig::default(),
    }
}

pub fn scenario(which: Scenario) -> Result<ExperimentSpec, ScenarioError> {
    let spec = match which {
        Scenario::Fig2a => {
            let mut s = base("fig2a", 140.0);
            s.bfield = b_pulse(FIG2A_AREA / (B_PULSE_DURATION - B_EDGE));
            s
        }
        Scenario::Fig2b => {
            // Half-strength retrieval stretches the released pulse over
            // several beat periods.
            let mut s = base("fig2b", 180.0);
            s.control = storage_control(0.5 * CONTROL_RABI);
            s.bfield = Waveform::new(vec![
                (0.0, 0.0),
                (B_PULSE_START, 0.0),
                (B_PULSE_START + B_EDGE, FIG2B_FIELD),
            ])
            .expect("ordered");
            s
        }
        Scenario::Fig3Trace(k) => {
            if k >= FIG3_TRACES {
                return Err(ScenarioError::TraceOutOfRange(k));
            }
            let mut s = base(&which.name(), 140.0);
            s.bfield = b_pulse(field_for_phase(FIG3_STEP * k as f64, &s.zeeman));
            s
        }
        Scenario::Slowlight => {
            let mut s = base("slowlight", 150.0);
            s.control = Waveform::constant(CONTROL_RABI);
            s.signal = signal_pulse(SIGNAL_START, 2.0 * SIGNAL_SUPPORT);
            s
        }
        Scenario::Opacity => {
            let mut s = base("opacity", 140.0);
            let end = STORE_AT + RAMP_DURATION;
            s.bfield = Waveform::new(vec![
                (0.0, 0.0),
                (SIGNAL_START - B_EDGE, 0.0),
                (SIGNAL_START, OPACITY_FIELD),
                (end, OPACITY_FIELD),
                (end + B_EDGE, 0.0),
            ])
            .expect("ordered");
            s
        }
    };
    Ok(spec)
}
