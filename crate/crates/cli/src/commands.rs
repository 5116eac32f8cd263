use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lightstore::analysis::{self, PeakMeasure, SweepOptions};
use lightstore::detect::{beat_frequency, Beat};
use lightstore::model::{eit_susceptibility, transparency_fwhm, zeeman_detuning, zeeman_phase};
use lightstore::sequence::{self, parse_experiment, render, Diagnostic, ExperimentSpec, Scenario};
use lightstore::solver::{self, RunResult};

use crate::output::{self, col, Table};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    /// The experiment file has errors, or warnings under `validate`.
    Invalid(Vec<Diagnostic>),
    /// Arguments violate a command precondition.
    Usage(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Invalid(_) | Self::Usage(_) => EXIT_VALIDATION,
            Self::Io(_) => EXIT_IO,
            Self::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn report(&self, json: bool) {
        let (kind, message) = match self {
            Self::Invalid(diags) => {
                if json {
                    let items: Vec<String> = diags.iter().map(Diagnostic::to_json).collect();
                    eprintln!("[{}]", items.join(","));
                } else {
                    for d in diags {
                        eprintln!("{d}");
                    }
                }
                return;
            }
            Self::Usage(m) => ("usage", m),
            Self::Io(m) => ("io", m),
            Self::Numeric(m) => ("numeric", m),
        };
        if json {
            eprintln!(
                "[{{\"code\":\"{kind}\",\"severity\":\"error\",\"message\":\"{}\"}}]",
                m_escape(message)
            );
        } else {
            eprintln!("error[{kind}]: {message}");
        }
    }
}

fn m_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

impl From<solver::SolverError> for CliError {
    fn from(e: solver::SolverError) -> Self {
        match e {
            solver::SolverError::InvalidSpec(d) => Self::Invalid(d),
            other => Self::Numeric(other.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        match e {
            analysis::AnalysisError::TooFewRuns(_) => Self::Usage(e.to_string()),
            analysis::AnalysisError::Run {
                source: solver::SolverError::InvalidSpec(d),
                ..
            } => Self::Invalid(d),
            other => Self::Numeric(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads and parses an experiment file; warnings go to standard error.
fn load(file: &Path) -> Result<(ExperimentSpec, Vec<Diagnostic>), CliError> {
    let text = fs::read_to_string(file).map_err(|e| io_err(file, e))?;
    let parsed = parse_experiment(&text).map_err(|f| CliError::Invalid(f.diagnostics))?;
    Ok((parsed.spec, parsed.warnings))
}

fn load_for_work(file: &Path, json: bool) -> Result<ExperimentSpec, CliError> {
    let (spec, warnings) = load(file)?;
    if !warnings.is_empty() {
        CliError::Invalid(warnings).report(json);
    }
    Ok(spec)
}

fn stem(file: &Path, spec: &ExperimentSpec) -> String {
    file.file_stem()
        .and_then(|s| s.to_str())
        .map_or_else(|| spec.label.clone(), str::to_string)
}

fn save(dir: &Path, name: &str, contents: &str, report: &mut String) -> Result<(), CliError> {
    let path = output::write(dir, name, contents).map_err(|e| io_err(dir, e))?;
    let _ = writeln!(report, "wrote {}", path.display());
    Ok(())
}

pub fn validate(file: &Path) -> Result<String, CliError> {
    let (spec, warnings) = load(file)?;
    if !warnings.is_empty() {
        return Err(CliError::Invalid(warnings));
    }
    Ok(format!("{}: ok ({})\n", file.display(), spec.label))
}

fn run_table(spec: &ExperimentSpec, r: &RunResult) -> Table {
    let mut t = Table::new(
        "run",
        spec,
        vec![
            col("t", "us"),
            col("signal_channel", "field^2"),
            col("control_channel", "field^2"),
            col("input_intensity", "field^2"),
            col("field_out_re", "field"),
            col("field_out_im", "field"),
            col("control_rabi", "rad/us"),
            col("spin_energy", "field^2 cm"),
        ],
    );
    t.note(format!("detector baseline {}", output::num(r.detector.baseline)));
    t.note(format!("mix_amplitude {}", output::num(r.diagnostics.mix_amplitude)));
    for i in 0..r.times.len() {
        t.row(&[
            r.times[i],
            r.detector.signal_channel[i],
            r.detector.control_channel[i],
            r.input_trace[i],
            r.field_out[i].re,
            r.field_out[i].im,
            r.control_out[i],
            r.spin_energy[i],
        ]);
    }
    t
}

fn snapshot_table(spec: &ExperimentSpec, r: &RunResult) -> Table {
    let mut t = Table::new(
        "snapshots",
        spec,
        vec![
            col("t", "us"),
            col("z", "cm"),
            col("e_re", "field"),
            col("e_im", "field"),
            col("p_re", "field"),
            col("p_im", "field"),
            col("s_re", "field"),
            col("s_im", "field"),
        ],
    );
    t.note("one block per snapshot, blocks separated by a blank line");
    for (k, s) in r.snapshots.iter().enumerate() {
        if k > 0 {
            t.block_break();
        }
        for j in 0..s.z.len() {
            t.row(&[s.t, s.z[j], s.e[j].re, s.e[j].im, s.p[j].re, s.p[j].im, s.s[j].re, s.s[j].im]);
        }
    }
    t
}

pub fn run(file: &Path, out: &Path, snapshots: Option<usize>, json: bool) -> Result<String, CliError> {
    let mut spec = load_for_work(file, json)?;
    if let Some(stride) = snapshots {
        if spec.grid.snapshot_stride == 0 {
            spec.grid.snapshot_stride = stride.max(1);
        }
    }
    let result = solver::run(&spec)?;
    let name = stem(file, &spec);
    let mut report = String::new();
    let (t0, t1) = (spec.grid.t_start, spec.grid.t_end);
    let phi = zeeman_phase(&spec.bfield, t0, t1, &spec.zeeman).map_err(|e| CliError::Numeric(e.to_string()))?;
    let area = spec.bfield.integral(t0, t1).map_err(|e| CliError::Numeric(e.to_string()))?;
    let d = &result.diagnostics;
    let _ = writeln!(report, "experiment {} (spec sha256 {})", spec.label, output::spec_hash(&spec));
    let _ = writeln!(report, "steps {}, output samples {}", d.steps, result.times.len());
    let _ = writeln!(report, "zeeman phase {:.4}pi rad (B area {area:.4} G us)", phi / PI);
    if let (Some(e), Some(s), Some(r)) = (d.escaped_fraction, d.stored_fraction, d.retrieved_fraction) {
        let _ = writeln!(report, "escaped {e:.4}, stored {s:.4}, retrieved {r:.4} of the input energy");
    } else if let Ok(delay) = analysis::run_delay(&result) {
        let _ = writeln!(report, "group delay {delay:.3} us");
    }
    if let Some(tl) = spec.timeline() {
        if let Some(start) = tl.ramp_on_end {
            let shift = zeeman_detuning(spec.bfield.value_at(t1), &spec.zeeman);
            if shift != 0.0 && start < t1 {
                let expected = shift.abs() / (2.0 * PI) * 1e3;
                match beat_frequency(&result.detector, start, t1) {
                    Ok(Beat::Frequency(f)) => {
                        let _ = writeln!(report, "beat {:.3} kHz (field shift {expected:.3} kHz)", f * 1e3);
                    }
                    Ok(Beat::None) => {
                        let _ = writeln!(report, "no beat above the noise floor (field shift {expected:.3} kHz)");
                    }
                    Err(e) => {
                        let _ = writeln!(report, "beat not measurable: {e}");
                    }
                }
            }
        }
    }
    for w in &d.warnings {
        if json {
            eprintln!("[{{\"code\":\"run\",\"severity\":\"warning\",\"message\":\"{}\"}}]", m_escape(w));
        } else {
            eprintln!("warning: {w}");
        }
    }
    save(out, &format!("{name}.run.csv"), &run_table(&spec, &result).render(), &mut report)?;
    save(out, &format!("{name}.meta"), &output::meta(&spec), &mut report)?;
    if snapshots.is_some() {
        save(out, &format!("{name}.snapshots.csv"), &snapshot_table(&spec, &result).render(), &mut report)?;
    }
    Ok(report)
}

pub fn sweep(
    file: &Path,
    out: &Path,
    n: usize,
    phi_max: f64,
    measure: PeakMeasure,
    parallel: bool,
    json: bool,
) -> Result<String, CliError> {
    if n < 3 {
        return Err(CliError::Usage(format!("a sweep needs at least 3 runs, got {n}")));
    }
    let spec = load_for_work(file, json)?;
    let result = analysis::phase_sweep(&spec, n, phi_max, SweepOptions { measure, parallel })?;
    let fit = result.fringe_fit;
    let mut t = Table::new(
        "sweep",
        &spec,
        vec![
            col("phi", "rad"),
            col("phi_over_pi", "1"),
            col("b_area", "G us"),
            col("retrieval_peak", "field^2"),
            col("fitted_phase", "rad"),
        ],
    );
    t.note(format!("measure {measure:?}"));
    t.note(format!(
        "fringe fit offset {} amplitude {} phase {} residual {}",
        output::num(fit.offset),
        output::num(fit.amplitude),
        output::num(fit.phase),
        output::num(fit.residual)
    ));
    for e in &result.entries {
        t.row(&[e.expected_phase, e.expected_phase / PI, e.b_area, e.retrieval_peak, e.fitted_phase]);
    }
    let name = stem(file, &spec);
    let mut report = String::new();
    let _ = writeln!(report, "{n} runs over 0..{:.3}pi", phi_max / PI);
    let _ = writeln!(
        report,
        "fringe I = A + B cos(phi + phi0): A {:.6e}, B {:.6e}, phi0 {:.4}pi, residual {:.3e}, contrast {:.4}",
        fit.offset,
        fit.amplitude,
        fit.phase / PI,
        fit.residual,
        fit.contrast()
    );
    save(out, &format!("{name}.sweep.csv"), &t.render(), &mut report)?;
    save(out, &format!("{name}.meta"), &output::meta(&spec), &mut report)?;
    Ok(report)
}

pub fn spectrum(file: &Path, out: &Path, range: (f64, f64), points: usize, json: bool) -> Result<String, CliError> {
    if points < 2 {
        return Err(CliError::Usage(format!("need at least 2 points, got {points}")));
    }
    let spec = load_for_work(file, json)?;
    let m = spec.medium;
    let omega = spec.control.max_abs();
    let numeric = |e: lightstore::model::ModelError| CliError::Numeric(e.to_string());
    let mut t = Table::new(
        "spectrum",
        &spec,
        vec![
            col("delta", "rad/us"),
            col("re_kappa", "1/cm"),
            col("im_kappa", "1/cm"),
            col("transmission", "1"),
        ],
    );
    t.note(format!("control rabi {} rad/us", output::num(omega)));
    for i in 0..points {
        let delta = range.0 + (range.1 - range.0) * i as f64 / (points - 1) as f64;
        let k = eit_susceptibility(delta, omega, &m, 0.0).map_err(numeric)?;
        t.row(&[delta, k.re, k.im, (2.0 * k.re * m.length_cm).exp()]);
    }
    let k0 = eit_susceptibility(0.0, omega, &m, 0.0).map_err(numeric)?;
    let mut report = String::new();
    let _ = writeln!(
        report,
        "optical depth {:.4}, T(0) = {:.6e}",
        m.optical_depth(),
        (2.0 * k0.re * m.length_cm).exp()
    );
    if omega == 0.0 {
        let _ = writeln!(report, "control is off: no transparency window");
    } else {
        let w = transparency_fwhm(omega, &m).map_err(numeric)?;
        let _ = writeln!(report, "transparency FWHM {w:.6e} rad/us = {:.3} kHz", w / (2.0 * PI) * 1e3);
    }
    let name = stem(file, &spec);
    save(out, &format!("{name}.spectrum.csv"), &t.render(), &mut report)?;
    save(out, &format!("{name}.meta"), &output::meta(&spec), &mut report)?;
    Ok(report)
}

pub fn scenario(name: &str) -> Result<String, CliError> {
    if name == "list" {
        return Ok(Scenario::all().iter().map(|s| s.name() + "\n").collect());
    }
    let which: Scenario = name.parse().map_err(|e: sequence::scenario::ScenarioError| CliError::Usage(e.to_string()))?;
    let spec = sequence::scenario(which).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(render(&spec))
}
