//! The experiment-file format.
//!
//! A file is a list of `[section]` blocks holding `key = value` lines. `#`
//! starts a comment. Scalars are decimal numbers (an optional trailing `pi`
//! multiplies by π), integers, `true`/`false`, or a quoted string for the
//! label. Waveform sections hold a single `knots` array with one
//! `time value` pair per row; rows are separated by newlines or `;`:
//!
//! ```text
//! [bfield]
//! knots = [
//!   0.0 0.0
//!   62.0 0.0
//!   63.0 0.1
//! ]
//! ```
//!
//! Rates are angular frequencies in rad/µs. A rate key may instead carry the
//! suffix `_hz` (for example `gamma_s_hz`), in which case the value is an
//! ordinary frequency in Hz and is converted on load; giving both forms of
//! one key is an error.
//!
//! [`render`] is the canonical serializer: fixed section order, keys sorted,
//! floats in shortest round-trip form. `parse_experiment(&render(s))`
//! reproduces `s` exactly.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use super::{
    DetectionConfig, Diagnostic, DiagnosticCode, ExperimentSpec, GridSpec, Waveform,
    WaveformError,
};
use crate::model::{MediumParams, ZeemanConfig, LIGHT_SPEED, MU_B_OVER_HBAR};

/// Hz → rad/µs.
const HZ_TO_RAD_PER_US: f64 = 2.0 * PI * 1e-6;

const SECTIONS: [&str; 8] = [
    "experiment",
    "medium",
    "zeeman",
    "grid",
    "detection",
    "control",
    "signal",
    "bfield",
];

/// A successfully parsed spec together with any non-fatal findings.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub spec: ExperimentSpec,
    pub warnings: Vec<Diagnostic>,
}

/// Every problem found in a file that could not be turned into a valid spec.
#[derive(Debug, Clone)]
pub struct ParseFailure {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let errors = self.diagnostics.iter().filter(|d| d.is_error()).count();
        write!(f, "experiment file rejected with {errors} error(s)")?;
        for d in &self.diagnostics {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseFailure {}

impl ParseFailure {
    pub fn has_code(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

/// Parses a number with an optional `pi` (or `π`) multiplier suffix.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    let (body, factor) = if let Some(b) = t.strip_suffix("pi").or_else(|| t.strip_suffix('π')) {
        (b.trim_end().trim_end_matches('*').trim_end(), PI)
    } else {
        (t, 1.0)
    };
    let value = match body {
        "" if factor != 1.0 => 1.0,
        "-" if factor != 1.0 => -1.0,
        _ => body.parse::<f64>().ok()?,
    };
    let v = value * factor;
    v.is_finite().then_some(v)
}

struct Entry {
    value: String,
    line: usize,
    /// Line number of each row of an array value.
    row_lines: Vec<usize>,
}

#[derive(Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

/// Splits the text into sections and entries, collecting syntax problems.
fn lex(text: &str, diags: &mut Vec<Diagnostic>) -> HashMap<String, Section> {
    use DiagnosticCode::*;
    let mut sections: HashMap<String, Section> = HashMap::new();
    let mut current: Option<String> = None;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    while let Some((lineno, raw)) = lines.next() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                diags.push(Diagnostic::new(Syntax, "file", "unterminated section header").at_line(lineno));
                current = None;
                continue;
            };
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                diags.push(
                    Diagnostic::new(UnknownSection, name.clone(), format!("unknown section [{name}]"))
                        .at_line(lineno),
                );
                current = None;
                continue;
            }
            if sections.contains_key(&name) {
                diags.push(
                    Diagnostic::new(Duplicate, name.clone(), format!("section [{name}] appears twice"))
                        .at_line(lineno),
                );
                current = None;
                continue;
            }
            sections.insert(
                name.clone(),
                Section {
                    line: lineno,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }

        let Some((key, value)) = line.split_once('=') else {
            diags.push(Diagnostic::new(Syntax, "file", format!("expected `key = value`, found `{line}`")).at_line(lineno));
            continue;
        };
        let key = key.trim().to_string();
        let mut value = value.trim().to_string();
        let mut row_lines = Vec::new();

        if value.starts_with('[') {
            // Array value, possibly spanning several lines.
            let mut body = String::new();
            let mut rest = value[1..].to_string();
            let mut at = lineno;
            let mut closed = false;
            loop {
                let (chunk, done) = match rest.find(']') {
                    Some(pos) => {
                        if !rest[pos + 1..].trim().is_empty() {
                            diags.push(Diagnostic::new(Syntax, key.clone(), "text after closing `]`").at_line(at));
                        }
                        (rest[..pos].to_string(), true)
                    }
                    None => (rest.clone(), false),
                };
                for row in chunk.split(';') {
                    if !row.trim().is_empty() {
                        row_lines.push(at);
                        body.push_str(row.trim());
                        body.push('\n');
                    }
                }
                if done {
                    closed = true;
                    break;
                }
                match lines.next() {
                    Some((n, next)) => {
                        at = n;
                        rest = strip_comment(next).to_string();
                    }
                    None => break,
                }
            }
            if !closed {
                diags.push(Diagnostic::new(Syntax, key.clone(), "array is never closed with `]`").at_line(lineno));
            }
            value = body;
        }

        let Some(section_name) = current.as_ref() else {
            diags.push(
                Diagnostic::new(Syntax, key.clone(), format!("key `{key}` outside of any known section"))
                    .at_line(lineno),
            );
            continue;
        };
        let section = sections.get_mut(section_name).expect("current section exists");
        if section.entries.contains_key(&key) {
            diags.push(
                Diagnostic::new(Duplicate, format!("{section_name}.{key}"), format!("key `{key}` given twice"))
                    .at_line(lineno),
            );
            continue;
        }
        section.entries.insert(
            key,
            Entry {
                value,
                line: lineno,
                row_lines,
            },
        );
    }
    sections
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\\' if in_quotes && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

/// Reads typed values out of one section, recording diagnostics.
struct Reader<'a> {
    name: &'static str,
    section: Option<&'a Section>,
    used: Vec<&'static str>,
    diags: &'a mut Vec<Diagnostic>,
    lines: &'a mut HashMap<String, usize>,
}

impl<'a> Reader<'a> {
    fn loc(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn entry(&mut self, key: &'static str) -> Option<&'a Entry> {
        self.used.push(key);
        let e = self.section?.entries.get(key)?;
        self.lines.insert(self.loc(key), e.line);
        Some(e)
    }

    fn missing(&mut self, key: &str) {
        if let Some(s) = self.section {
            let d = Diagnostic::new(DiagnosticCode::MissingKey, self.loc(key), format!("required key `{key}` is missing"))
                .at_line(s.line);
            self.diags.push(d);
        }
    }

    fn number(&mut self, key: &'static str) -> Option<f64> {
        let e = self.entry(key)?;
        match parse_number(&e.value) {
            Some(v) => Some(v),
            None => {
                let d = Diagnostic::new(
                    DiagnosticCode::InvalidNumber,
                    self.loc(key),
                    format!("`{}` is not a finite number", e.value),
                )
                .at_line(e.line);
                self.diags.push(d);
                None
            }
        }
    }

    fn integer(&mut self, key: &'static str) -> Option<u64> {
        let e = self.entry(key)?;
        match e.value.trim().parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                let d = Diagnostic::new(
                    DiagnosticCode::InvalidNumber,
                    self.loc(key),
                    format!("`{}` is not a non-negative integer", e.value),
                )
                .at_line(e.line);
                self.diags.push(d);
                None
            }
        }
    }

    fn boolean(&mut self, key: &'static str) -> Option<bool> {
        let e = self.entry(key)?;
        match e.value.trim() {
            "true" => Some(true),
            "false" => Some(false),
            other => {
                let d = Diagnostic::new(
                    DiagnosticCode::InvalidNumber,
                    self.loc(key),
                    format!("`{other}` is not true or false"),
                )
                .at_line(e.line);
                self.diags.push(d);
                None
            }
        }
    }

    fn required_number(&mut self, key: &'static str) -> Option<f64> {
        let present = self.section.is_some_and(|s| s.entries.contains_key(key));
        if !present {
            self.used.push(key);
            self.missing(key);
            return None;
        }
        self.number(key)
    }

    fn required_integer(&mut self, key: &'static str) -> Option<u64> {
        let present = self.section.is_some_and(|s| s.entries.contains_key(key));
        if !present {
            self.used.push(key);
            self.missing(key);
            return None;
        }
        self.integer(key)
    }

    /// A rate given either as `key` (rad/µs) or `key_hz` (Hz).
    fn rate(&mut self, key: &'static str, key_hz: &'static str, required: bool) -> Option<f64> {
        let has = |k: &str| self.section.is_some_and(|s| s.entries.contains_key(k));
        match (has(key), has(key_hz)) {
            (true, true) => {
                let line = self.section.and_then(|s| s.entries.get(key_hz)).map(|e| e.line);
                self.used.push(key);
                self.used.push(key_hz);
                let mut d = Diagnostic::new(
                    DiagnosticCode::UnitConflict,
                    self.loc(key),
                    format!("both `{key}` and `{key_hz}` are given"),
                );
                if let Some(l) = line {
                    d = d.at_line(l);
                }
                self.diags.push(d);
                None
            }
            (true, false) => {
                self.used.push(key_hz);
                self.number(key)
            }
            (false, true) => {
                self.used.push(key);
                let v = self.number(key_hz)? * HZ_TO_RAD_PER_US;
                if let Some(&l) = self.lines.get(&self.loc(key_hz)) {
                    self.lines.insert(self.loc(key), l);
                }
                Some(v)
            }
            (false, false) => {
                self.used.push(key);
                self.used.push(key_hz);
                if required {
                    self.missing(key);
                }
                None
            }
        }
    }

    fn label(&mut self, key: &'static str) -> Option<String> {
        let e = self.entry(key)?;
        match unquote(e.value.trim()) {
            Some(s) => Some(s),
            None => {
                let d = Diagnostic::new(DiagnosticCode::Syntax, self.loc(key), "malformed quoted string")
                    .at_line(e.line);
                self.diags.push(d);
                None
            }
        }
    }

    fn knots(&mut self) -> Option<Waveform> {
        let present = self.section.is_some_and(|s| s.entries.contains_key("knots"));
        if !present {
            self.used.push("knots");
            self.missing("knots");
            return None;
        }
        let e = self.entry("knots")?;
        let mut knots = Vec::new();
        let mut ok = true;
        for (row, &line) in e.value.lines().zip(e.row_lines.iter()) {
            let fields: Vec<&str> = row
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parsed: Vec<Option<f64>> = fields.iter().map(|f| parse_number(f)).collect();
            match parsed.as_slice() {
                [Some(t), Some(v)] => knots.push((*t, *v)),
                _ => {
                    ok = false;
                    let d = Diagnostic::new(
                        DiagnosticCode::InvalidNumber,
                        self.loc("knots"),
                        format!("knot row `{row}` must hold two finite numbers"),
                    )
                    .at_line(line);
                    self.diags.push(d);
                }
            }
        }
        if !ok {
            return None;
        }
        match Waveform::new(knots) {
            Ok(w) => Some(w),
            Err(WaveformError::NonMonotone { index, prev, next }) => {
                let line = e.row_lines.get(index).copied().unwrap_or(e.line);
                let d = Diagnostic::new(
                    DiagnosticCode::NonMonotoneKnots,
                    self.loc("knots"),
                    format!("knot times must strictly increase ({prev} is followed by {next})"),
                )
                .at_line(line);
                self.diags.push(d);
                None
            }
            Err(other) => {
                let d = Diagnostic::new(DiagnosticCode::Invariant, self.loc("knots"), other.to_string())
                    .at_line(e.line);
                self.diags.push(d);
                None
            }
        }
    }

    fn finish(self) {
        let Some(section) = self.section else { return };
        for (key, e) in &section.entries {
            if !self.used.contains(&key.as_str()) {
                self.diags.push(
                    Diagnostic::new(
                        DiagnosticCode::UnknownKey,
                        format!("{}.{}", self.name, key),
                        format!("unknown key `{key}` in [{}]", self.name),
                    )
                    .at_line(e.line),
                );
            }
        }
    }
}

fn unquote(s: &str) -> Option<String> {
    let Some(inner) = s.strip_prefix('"') else {
        return Some(s.to_string());
    };
    let inner = inner.strip_suffix('"')?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next()? {
                'n' => out.push('\n'),
                other => out.push(other),
            },
            '"' => return None,
            c => out.push(c),
        }
    }
    Some(out)
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Parses and fully validates an experiment file.
///
/// Never panics; every problem is reported as a [`Diagnostic`] carrying a
/// code and, where possible, the offending line.
pub fn parse_experiment(text: &str) -> Result<Parsed, ParseFailure> {
    let mut diags = Vec::new();
    let sections = lex(text, &mut diags);
    for name in SECTIONS {
        if !sections.contains_key(name) {
            diags.push(Diagnostic::new(
                DiagnosticCode::MissingSection,
                name,
                format!("required section [{name}] is missing"),
            ));
        }
    }

    let mut lines: HashMap<String, usize> = HashMap::new();
    for (name, s) in &sections {
        lines.insert(name.clone(), s.line);
    }

    macro_rules! reader {
        ($name:literal) => {
            Reader {
                name: $name,
                section: sections.get($name),
                used: Vec::new(),
                diags: &mut diags,
                lines: &mut lines,
            }
        };
    }

    let mut r = reader!("experiment");
    let label = r.label("label").unwrap_or_default();
    r.finish();

    let mut r = reader!("medium");
    let length_cm = r.required_number("length_cm");
    let coupling_g2n = r.required_number("coupling_g2n");
    let gamma_e = r.rate("gamma_e", "gamma_e_hz", true);
    let gamma_s = r.rate("gamma_s", "gamma_s_hz", true);
    r.finish();

    let mut r = reader!("zeeman");
    let delta_g = r.required_number("delta_g");
    let mu = r.rate("mu_b_over_hbar", "mu_b_over_hbar_hz", false);
    r.finish();

    let grid_defaults = GridSpec::default();
    let mut r = reader!("grid");
    let nz = r.required_integer("nz");
    let dt = r.required_number("dt");
    let t_start = r.required_number("t_start");
    let t_end = r.required_number("t_end");
    let snapshot_stride = r.integer("snapshot_stride");
    let output_stride = r.integer("output_stride");
    r.finish();

    let det_defaults = DetectionConfig::default();
    let mut r = reader!("detection");
    let mix_amplitude = r.required_number("mix_amplitude");
    let mix_phase = r.required_number("mix_phase");
    let control_ratio = r.number("control_ratio");
    let auto_balance = r.boolean("auto_balance");
    let noise_std = r.number("noise_std");
    let noise_seed = r.integer("noise_seed");
    r.finish();

    let mut r = reader!("control");
    let control = r.knots();
    r.finish();
    let mut r = reader!("signal");
    let signal = r.knots();
    r.finish();
    let mut r = reader!("bfield");
    let bfield = r.knots();
    r.finish();

    let spec = (|| {
        Some(ExperimentSpec {
            label,
            medium: MediumParams {
                length_cm: length_cm?,
                coupling_g2n: coupling_g2n?,
                gamma_e: gamma_e?,
                gamma_s: gamma_s?,
                light_speed: LIGHT_SPEED,
            },
            zeeman: ZeemanConfig {
                delta_g: delta_g?,
                mu_b_over_hbar: mu.unwrap_or(MU_B_OVER_HBAR),
            },
            control: control?,
            signal: signal?,
            bfield: bfield?,
            grid: GridSpec {
                nz: usize::try_from(nz?).ok()?,
                dt: dt?,
                t_start: t_start?,
                t_end: t_end?,
                snapshot_stride: snapshot_stride
                    .map_or(Some(grid_defaults.snapshot_stride), |v| usize::try_from(v).ok())?,
                output_stride: output_stride
                    .map_or(Some(grid_defaults.output_stride), |v| usize::try_from(v).ok())?,
            },
            detection: DetectionConfig {
                mix_amplitude: mix_amplitude?,
                mix_phase: mix_phase?,
                control_ratio: control_ratio.unwrap_or(det_defaults.control_ratio),
                auto_balance: auto_balance.unwrap_or(det_defaults.auto_balance),
                noise_std: noise_std.unwrap_or(det_defaults.noise_std),
                noise_seed: noise_seed.unwrap_or(det_defaults.noise_seed),
            },
        })
    })();

    if let Some(spec) = &spec {
        for mut d in spec.validate() {
            let key = if lines.contains_key(&d.location) {
                Some(d.location.clone())
            } else {
                d.location.split('.').next().map(str::to_string)
            };
            if let Some(&line) = key.and_then(|k| lines.get(&k)) {
                d.line = Some(line);
            }
            diags.push(d);
        }
    }

    diags.sort_by_key(|d| (d.line.unwrap_or(usize::MAX), d.code));
    match spec {
        Some(spec) if diags.iter().all(|d| !d.is_error()) => Ok(Parsed { spec, warnings: diags }),
        _ => Err(ParseFailure { diagnostics: diags }),
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

/// Canonical text form of a spec.
pub fn render(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let m = &spec.medium;
    let z = &spec.zeeman;
    let g = &spec.grid;
    let d = &spec.detection;

    let _ = writeln!(out, "[experiment]\nlabel = {}\n", quote(&spec.label));
    let _ = writeln!(
        out,
        "[medium]\ncoupling_g2n = {}\ngamma_e = {}\ngamma_s = {}\nlength_cm = {}\n",
        float(m.coupling_g2n),
        float(m.gamma_e),
        float(m.gamma_s),
        float(m.length_cm)
    );
    let _ = writeln!(
        out,
        "[zeeman]\ndelta_g = {}\nmu_b_over_hbar = {}\n",
        float(z.delta_g),
        float(z.mu_b_over_hbar)
    );
    let _ = writeln!(
        out,
        "[grid]\ndt = {}\nnz = {}\noutput_stride = {}\nsnapshot_stride = {}\nt_end = {}\nt_start = {}\n",
        float(g.dt),
        g.nz,
        g.output_stride,
        g.snapshot_stride,
        float(g.t_end),
        float(g.t_start)
    );
    let _ = writeln!(
        out,
        "[detection]\nauto_balance = {}\ncontrol_ratio = {}\nmix_amplitude = {}\nmix_phase = {}\nnoise_seed = {}\nnoise_std = {}\n",
        d.auto_balance,
        float(d.control_ratio),
        float(d.mix_amplitude),
        float(d.mix_phase),
        d.noise_seed,
        float(d.noise_std)
    );
    for (name, w) in [("control", &spec.control), ("signal", &spec.signal), ("bfield", &spec.bfield)] {
        let _ = writeln!(out, "[{name}]\nknots = [");
        for &(t, v) in w.knots() {
            let _ = writeln!(out, "  {} {}", float(t), float(v));
        }
        let _ = writeln!(out, "]\n");
    }
    out.pop();
    out
}
