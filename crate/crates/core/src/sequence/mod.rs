//! Declarative experiment descriptions.
//!
//! An [`ExperimentSpec`] is the software mirror of one run of the apparatus:
//! the medium, the Zeeman constants, the three drive waveforms, the
//! integration grid and the detection interferometer. Specs are read from
//! and written to a sectioned key-value text format (see [`format`]) and the
//! built-in scenarios live in [`scenario`].

pub mod format;
pub mod scenario;
mod waveform;

use std::fmt;

pub use format::{parse_experiment, render, ParseFailure, Parsed};
pub use scenario::{scenario, Scenario};
pub use waveform::{Waveform, WaveformError};

use crate::model::{MediumParams, ZeemanConfig};

/// Intensity leakage ε² of the control field into the signal channel must
/// stay below this.
pub const MAX_LEAKAGE: f64 = 0.10;

/// Signal-to-control amplitude ratio above which the weak-probe model is
/// flagged.
pub const WEAK_PROBE_RATIO: f64 = 0.3;

/// Upper bound on the number of integration steps.
pub const MAX_STEPS: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of spatial grid points, including both faces of the cell.
    pub nz: usize,
    /// Integration step (µs).
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Steps between full-state snapshots; 0 disables them.
    pub snapshot_stride: usize,
    /// Steps between recorded output samples.
    pub output_stride: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nz: 200,
            dt: 0.01,
            t_start: 0.0,
            t_end: 300.0,
            snapshot_stride: 0,
            output_stride: 10,
        }
    }
}

impl GridSpec {
    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }
}

/// Interferometric detection: a fraction of the control field mixed into the
/// signal channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    /// ε, amplitude fraction of the control field in the signal channel.
    pub mix_amplitude: f64,
    /// φ₀, constant interferometer phase offset (rad).
    pub mix_phase: f64,
    /// Control field amplitude at its plateau, in units of the peak input
    /// signal amplitude (√10 for a 1 mW control and a 100 µW signal).
    pub control_ratio: f64,
    /// Choose ε so the mixed baseline matches the retrieved peak.
    pub auto_balance: bool,
    /// Standard deviation of additive white noise on the signal channel.
    pub noise_std: f64,
    pub noise_seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            mix_amplitude: 0.05f64.sqrt(),
            mix_phase: -0.08 * std::f64::consts::PI,
            control_ratio: 10f64.sqrt(),
            auto_balance: false,
            noise_std: 0.0,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub label: String,
    pub medium: MediumParams,
    pub zeeman: ZeemanConfig,
    /// Control Rabi frequency Ω_c(t), rad/µs.
    pub control: Waveform,
    /// Input signal envelope at the cell entrance, arbitrary amplitude units.
    pub signal: Waveform,
    /// Longitudinal magnetic field B(t), gauss.
    pub bfield: Waveform,
    pub grid: GridSpec,
    pub detection: DetectionConfig,
}

/// Storage and retrieval instants read off the control waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageTimeline {
    /// Control starts falling.
    pub ramp_off_start: f64,
    /// Control reaches zero: storage complete.
    pub storage_start: f64,
    /// Control leaves zero again, if it ever does.
    pub storage_end: Option<f64>,
    /// Control back at its retrieval plateau.
    pub ramp_on_end: Option<f64>,
}

impl StorageTimeline {
    /// Finds the first interval where a previously positive control
    /// waveform sits at zero. `None` if the control never switches off.
    pub fn from_control(control: &Waveform) -> Option<Self> {
        let k = control.knots();
        let first_on = k.iter().position(|&(_, v)| v > 0.0)?;
        let zero = first_on + k[first_on..].iter().position(|&(_, v)| v <= 0.0)?;
        let mut off_start = zero;
        while off_start > 0 && k[off_start - 1].1 > k[off_start].1 {
            off_start -= 1;
        }
        let back_on = k[zero..].iter().position(|&(_, v)| v > 0.0).map(|i| zero + i);
        let (storage_end, ramp_on_end) = match back_on {
            Some(on) => {
                let mut top = on;
                while top + 1 < k.len() && k[top + 1].1 > k[top].1 {
                    top += 1;
                }
                (Some(k[on - 1].0), Some(k[top].0))
            }
            None => (None, None),
        };
        Some(Self {
            ramp_off_start: k[off_start].0,
            storage_start: k[zero].0,
            storage_end,
            ramp_on_end,
        })
    }

    pub fn storage_midpoint(&self) -> f64 {
        0.5 * (self.ramp_off_start + self.storage_start)
    }

    pub fn retrieval_midpoint(&self) -> Option<f64> {
        Some(0.5 * (self.storage_end? + self.ramp_on_end?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagnosticCode {
    Syntax,
    UnknownSection,
    UnknownKey,
    Duplicate,
    MissingSection,
    MissingKey,
    InvalidNumber,
    NonMonotoneKnots,
    UnitConflict,
    Invariant,
    WeakProbe,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Syntax => "E001",
            Self::UnknownSection => "E002",
            Self::UnknownKey => "E003",
            Self::Duplicate => "E004",
            Self::MissingSection => "E005",
            Self::MissingKey => "E006",
            Self::InvalidNumber => "E007",
            Self::NonMonotoneKnots => "E008",
            Self::UnitConflict => "E009",
            Self::Invariant => "E010",
            Self::WeakProbe => "W001",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Self::WeakProbe => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding, located by `section.key` and, when it came from a
/// file, by line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub line: Option<usize>,
    pub location: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            line: None,
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn at_line(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }

    pub fn severity(&self) -> Severity {
        self.code.severity()
    }

    pub fn is_error(&self) -> bool {
        self.severity() == Severity::Error
    }

    /// Single-line JSON object.
    pub fn to_json(&self) -> String {
        let line = self.line.map_or("null".to_string(), |l| l.to_string());
        format!(
            "{{\"code\":\"{}\",\"severity\":\"{}\",\"line\":{},\"location\":\"{}\",\"message\":\"{}\"}}",
            self.code.as_str(),
            match self.severity() {
                Severity::Error => "error",
                Severity::Warning => "warning",
            },
            line,
            json_escape(&self.location),
            json_escape(&self.message)
        )
    }
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.severity() {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(line) => write!(
                f,
                "{kind}[{}] line {line}, {}: {}",
                self.code.as_str(),
                self.location,
                self.message
            ),
            None => write!(f, "{kind}[{}] {}: {}", self.code.as_str(), self.location, self.message),
        }
    }
}

impl ExperimentSpec {
    pub fn timeline(&self) -> Option<StorageTimeline> {
        StorageTimeline::from_control(&self.control)
    }

    /// Checks every invariant and returns all findings, errors and warnings
    /// alike. An empty list means the spec is valid and warning-free.
    pub fn validate(&self) -> Vec<Diagnostic> {
        use DiagnosticCode::{Invariant, WeakProbe};
        let mut out = Vec::new();

        if let Err(e) = self.medium.validate() {
            out.push(Diagnostic::new(Invariant, "medium", e.to_string()));
        }
        if let Err(e) = self.zeeman.validate() {
            out.push(Diagnostic::new(Invariant, "zeeman", e.to_string()));
        }
        if self.label.contains('\n') {
            out.push(Diagnostic::new(Invariant, "experiment.label", "label must be one line"));
        }

        let g = &self.grid;
        if g.nz < 8 {
            out.push(Diagnostic::new(Invariant, "grid.nz", format!("nz = {} is below 8", g.nz)));
        }
        if !(g.dt.is_finite() && g.dt > 0.0) {
            out.push(Diagnostic::new(Invariant, "grid.dt", "dt must be finite and > 0"));
        }
        if !(g.t_start.is_finite() && g.t_end.is_finite() && g.t_end > g.t_start) {
            out.push(Diagnostic::new(Invariant, "grid.t_end", "t_end must exceed t_start"));
        } else if g.dt > 0.0 && (g.t_end - g.t_start) / g.dt > MAX_STEPS {
            out.push(Diagnostic::new(
                Invariant,
                "grid.dt",
                format!("window needs more than {MAX_STEPS:e} steps"),
            ));
        }
        if g.output_stride == 0 {
            out.push(Diagnostic::new(Invariant, "grid.output_stride", "must be >= 1"));
        }

        let d = &self.detection;
        if !(d.mix_amplitude.is_finite() && d.mix_amplitude >= 0.0 && d.mix_amplitude < 1.0) {
            out.push(Diagnostic::new(
                Invariant,
                "detection.mix_amplitude",
                "must lie in [0, 1)",
            ));
        } else if d.mix_amplitude * d.mix_amplitude >= MAX_LEAKAGE {
            out.push(Diagnostic::new(
                Invariant,
                "detection.mix_amplitude",
                format!("leakage {} is not below {MAX_LEAKAGE}", d.mix_amplitude.powi(2)),
            ));
        }
        if !d.mix_phase.is_finite() {
            out.push(Diagnostic::new(Invariant, "detection.mix_phase", "must be finite"));
        }
        if !(d.control_ratio.is_finite() && d.control_ratio > 0.0) {
            out.push(Diagnostic::new(Invariant, "detection.control_ratio", "must be > 0"));
        }
        if !(d.noise_std.is_finite() && d.noise_std >= 0.0) {
            out.push(Diagnostic::new(Invariant, "detection.noise_std", "must be >= 0"));
        }

        for (name, w) in [("control", &self.control), ("signal", &self.signal), ("bfield", &self.bfield)] {
            if w.is_empty() {
                out.push(Diagnostic::new(
                    Invariant,
                    format!("{name}.knots"),
                    "waveform has no knots",
                ));
            }
        }
        if self.control.knots().iter().any(|&(_, v)| v < 0.0) {
            out.push(Diagnostic::new(
                Invariant,
                "control.knots",
                "control Rabi frequency must be >= 0",
            ));
        }

        let control_max = self.control.max_abs();
        let signal_max = self.signal.max_abs();
        if control_max > 0.0 && signal_max > 0.0 && signal_max / control_max > WEAK_PROBE_RATIO {
            out.push(Diagnostic::new(
                WeakProbe,
                "signal.knots",
                format!(
                    "signal/control amplitude ratio {:.3} exceeds {WEAK_PROBE_RATIO}; weak-probe model is doubtful",
                    signal_max / control_max
                ),
            ));
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().iter().all(|d| !d.is_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeline_of_storage_control() {
        let s = scenario(Scenario::Fig2a).unwrap();
        let tl = s.timeline().unwrap();
        assert_eq!(tl.ramp_off_start, scenario::STORE_AT);
        assert_eq!(tl.storage_start, scenario::STORE_AT + scenario::RAMP_DURATION);
        assert_eq!(tl.storage_end, Some(scenario::RETRIEVE_AT));
        assert_eq!(tl.ramp_on_end, Some(scenario::RETRIEVE_AT + scenario::RAMP_DURATION));
        assert!(scenario(Scenario::Slowlight).unwrap().timeline().is_none());

        let forever = Waveform::new(vec![(0.0, 1.0), (2.0, 1.0), (3.0, 0.0)]).unwrap();
        let tl = StorageTimeline::from_control(&forever).unwrap();
        assert_eq!((tl.ramp_off_start, tl.storage_start, tl.storage_end), (2.0, 3.0, None));
    }

    #[test]
    fn validation_findings() {
        let mut s = scenario(Scenario::Fig2a).unwrap();
        assert!(s.validate().is_empty());
        s.grid.nz = 7;
        s.grid.dt = 1e-9;
        s.detection.mix_amplitude = 0.4;
        s.control = Waveform::default();
        let codes: Vec<_> = s.validate().iter().map(|d| d.location.clone()).collect();
        assert!(codes.contains(&"grid.nz".to_string()));
        assert!(codes.contains(&"grid.dt".to_string()));
        assert!(codes.contains(&"detection.mix_amplitude".to_string()));
        assert!(codes.contains(&"control.knots".to_string()));
    }

    #[test]
    fn diagnostic_json() {
        let d = Diagnostic::new(DiagnosticCode::UnknownKey, "grid.\"x\"", "bad").at_line(3);
        assert_eq!(
            d.to_json(),
            r#"{"code":"E003","severity":"error","line":3,"location":"grid.\"x\"","message":"bad"}"#
        );
    }
}
