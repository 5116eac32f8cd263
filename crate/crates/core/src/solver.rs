//! Linearized Maxwell–Bloch integration on a 1-D grid.
//!
//! The atomic variables evolve as
//!
//! ```text
//! ∂t P = −γₑ P + i√(g²N)·E + iΩ_c(t)·S
//! ∂t S = −(γₛ + iδ_B(t))·S + iΩ_c(t)·P
//! ```
//!
//! with the signal field slaved to the polarization, ∂z E = i(√(g²N)/c)·P,
//! and E(0,t) fixed by the input pulse. The light transit time L/c is a
//! fraction of a nanosecond, so the field follows the atoms instantaneously
//! and only P and S are stepped in time, with classical fixed-step RK4. The
//! field is re-accumulated over the grid at every Runge–Kutta stage.

use num_complex::Complex64;
use thiserror::Error;

use crate::detect::{self, DetectError, DetectorTrace};
use crate::model::{zeeman_detuning, MediumParams};
use crate::sequence::{Diagnostic, ExperimentSpec};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// dt times the fastest rate may not exceed this.
pub const STABILITY_FACTOR: f64 = 0.2;
/// Weight of the whole-cell absorption rate in the stability bound.
pub const ABSORPTION_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid experiment: {}", first_error(.0))]
    InvalidSpec(Vec<Diagnostic>),
    #[error("time step {dt} µs exceeds the stability bound {limit} µs")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("integration failed at t = {t} µs: non-finite value in cell {cell}")]
    NonFinite { t: f64, cell: usize },
    #[error(transparent)]
    Detection(#[from] DetectError),
}

fn first_error(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .find(|d| d.is_error())
        .map_or_else(|| "unknown".into(), |d| d.to_string())
}

/// Time-dependent inputs of the equations of motion.
pub trait Drive {
    /// Signal envelope entering the cell, E(0,t).
    fn input(&self, t: f64) -> Complex64;
    /// Control Rabi frequency Ω_c(t).
    fn control(&self, t: f64) -> f64;
    /// Zeeman shift δ_B(t) of the spin coherence.
    fn zeeman_shift(&self, t: f64) -> f64;
}

/// Drive read from an experiment's waveforms.
#[derive(Debug, Clone, Copy)]
pub struct SpecDrive<'a> {
    pub spec: &'a ExperimentSpec,
}

impl Drive for SpecDrive<'_> {
    fn input(&self, t: f64) -> Complex64 {
        Complex64::new(self.spec.signal.value_at(t), 0.0)
    }

    fn control(&self, t: f64) -> f64 {
        self.spec.control.value_at(t)
    }

    fn zeeman_shift(&self, t: f64) -> f64 {
        zeeman_detuning(self.spec.bfield.value_at(t), &self.spec.zeeman)
    }
}

/// Field and atomic coherences over the grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    /// Signal envelope.
    pub e: Vec<Complex64>,
    /// Optical coherence √N·σ_ge.
    pub p: Vec<Complex64>,
    /// Spin coherence √N·σ_gs.
    pub s: Vec<Complex64>,
    /// Grid coordinates (cm), from the entrance face 0 to the exit face L.
    pub z: Vec<f64>,
}

impl SimulationState {
    pub fn zero(length_cm: f64, nz: usize, t: f64) -> Self {
        let dz = length_cm / (nz - 1) as f64;
        Self {
            t,
            e: vec![ZERO; nz],
            p: vec![ZERO; nz],
            s: vec![ZERO; nz],
            z: (0..nz).map(|j| j as f64 * dz).collect(),
        }
    }

    /// ∫|S|² dz, the stored excitation in units of the input photon flux
    /// c·|E|² integrated over time.
    pub fn spin_energy(&self) -> f64 {
        trapezoid_norm(&self.s, self.dz())
    }

    fn dz(&self) -> f64 {
        if self.z.len() > 1 {
            self.z[1] - self.z[0]
        } else {
            0.0
        }
    }
}

fn trapezoid_norm(v: &[Complex64], dz: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    dz * (inner - 0.5 * (v[0].norm_sqr() + v[n - 1].norm_sqr()))
}

/// E over the grid from P: E(0) = `boundary`, then trapezoidal accumulation
/// of ∂z E = i(√(g²N)/c)·P.
pub fn propagate_field(p: &[Complex64], boundary: Complex64, medium: &MediumParams) -> Vec<Complex64> {
    let mut e = vec![ZERO; p.len()];
    accumulate_field(p, boundary, medium, &mut e);
    e
}

fn accumulate_field(p: &[Complex64], boundary: Complex64, medium: &MediumParams, e: &mut [Complex64]) {
    let n = p.len();
    if n == 0 {
        return;
    }
    let dz = medium.length_cm / (n - 1).max(1) as f64;
    let w = I * (0.5 * dz * medium.coupling() / medium.light_speed);
    e[0] = boundary;
    for j in 1..n {
        e[j] = e[j - 1] + w * (p[j - 1] + p[j]);
    }
}

/// Right-hand side for P and S given the field on the grid.
#[allow(clippy::too_many_arguments)]
fn derivatives(
    medium: &MediumParams,
    omega: f64,
    delta_b: f64,
    e: &[Complex64],
    p: &[Complex64],
    s: &[Complex64],
    dp: &mut [Complex64],
    ds: &mut [Complex64],
) {
    let g = medium.coupling();
    let decay_p = Complex64::new(-medium.gamma_e, 0.0);
    let decay_s = Complex64::new(-medium.gamma_s, -delta_b);
    let i_omega = I * omega;
    let i_g = I * g;
    for j in 0..p.len() {
        dp[j] = decay_p * p[j] + i_g * e[j] + i_omega * s[j];
        ds[j] = decay_s * s[j] + i_omega * p[j];
    }
}

/// Time derivatives (∂t P, ∂t S) for a state whose field is already
/// consistent with its polarization.
pub fn equations_of_motion(
    state: &SimulationState,
    t: f64,
    spec: &ExperimentSpec,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let drive = SpecDrive { spec };
    let n = state.p.len();
    let mut dp = vec![ZERO; n];
    let mut ds = vec![ZERO; n];
    derivatives(
        &spec.medium,
        drive.control(t),
        drive.zeeman_shift(t),
        &state.e,
        &state.p,
        &state.s,
        &mut dp,
        &mut ds,
    );
    (dp, ds)
}

/// Fixed-step RK4 integrator with preallocated stage buffers.
pub struct Integrator<D: Drive> {
    medium: MediumParams,
    drive: D,
    e: Vec<Complex64>,
    kp: [Vec<Complex64>; 4],
    ks: [Vec<Complex64>; 4],
    tp: Vec<Complex64>,
    ts: Vec<Complex64>,
}

impl<D: Drive> Integrator<D> {
    pub fn new(medium: MediumParams, nz: usize, drive: D) -> Self {
        let buf = || vec![ZERO; nz];
        Self {
            medium,
            drive,
            e: buf(),
            kp: [buf(), buf(), buf(), buf()],
            ks: [buf(), buf(), buf(), buf()],
            tp: buf(),
            ts: buf(),
        }
    }

    pub fn drive(&self) -> &D {
        &self.drive
    }

    fn stage(&mut self, k: usize, t: f64) {
        accumulate_field(&self.tp, self.drive.input(t), &self.medium, &mut self.e);
        derivatives(
            &self.medium,
            self.drive.control(t),
            self.drive.zeeman_shift(t),
            &self.e,
            &self.tp,
            &self.ts,
            &mut self.kp[k],
            &mut self.ks[k],
        );
    }

    /// Advances `state` by `dt` and refreshes its field.
    pub fn step(&mut self, state: &mut SimulationState, dt: f64) -> Result<(), SolverError> {
        let t = state.t;
        let half = 0.5 * dt;

        self.tp.copy_from_slice(&state.p);
        self.ts.copy_from_slice(&state.s);
        self.stage(0, t);
        for (k, (offset, weight)) in [(half, half), (half, half), (dt, dt)].into_iter().enumerate() {
            for j in 0..state.p.len() {
                self.tp[j] = state.p[j] + weight * self.kp[k][j];
                self.ts[j] = state.s[j] + weight * self.ks[k][j];
            }
            self.stage(k + 1, t + offset);
        }

        let sixth = dt / 6.0;
        let [kp1, kp2, kp3, kp4] = &self.kp;
        let [ks1, ks2, ks3, ks4] = &self.ks;
        for j in 0..state.p.len() {
            state.p[j] += sixth * (kp1[j] + 2.0 * (kp2[j] + kp3[j]) + kp4[j]);
            state.s[j] += sixth * (ks1[j] + 2.0 * (ks2[j] + ks3[j]) + ks4[j]);
        }
        state.t = t + dt;

        if let Some(cell) = (0..state.p.len())
            .find(|&j| !(state.p[j].re.is_finite() && state.p[j].im.is_finite() && state.s[j].re.is_finite() && state.s[j].im.is_finite()))
        {
            return Err(SolverError::NonFinite { t: state.t, cell });
        }
        accumulate_field(&state.p, self.drive.input(state.t), &self.medium, &mut state.e);
        Ok(())
    }
}

/// One RK4 step of an experiment's equations.
pub fn step(state: &SimulationState, spec: &ExperimentSpec, dt: f64) -> Result<SimulationState, SolverError> {
    let mut next = state.clone();
    Integrator::new(spec.medium, state.p.len(), SpecDrive { spec }).step(&mut next, dt)?;
    Ok(next)
}

/// Largest accepted step for an experiment: `STABILITY_FACTOR` divided by
/// the fastest rate among γₑ, Ω_c, |δ_B| and `ABSORPTION_SCALE`·g²N·L/c.
///
/// The slaved field couples every cell to all cells upstream, so the stiff
/// rate depends on the whole-cell absorption g²N·L/c rather than on the
/// grid spacing. Measured RK4 blow-up thresholds stay at least 1.1/rate
/// for optical depths from 0.4 to 530.
pub fn stability_limit(spec: &ExperimentSpec) -> f64 {
    let m = &spec.medium;
    let rates = [
        m.gamma_e,
        spec.control.max_abs(),
        zeeman_detuning(spec.bfield.max_abs(), &spec.zeeman).abs(),
        ABSORPTION_SCALE * m.coupling_g2n * m.length_cm / m.light_speed,
    ];
    STABILITY_FACTOR / rates.into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub steps: usize,
    pub max_abs_p: f64,
    pub warnings: Vec<String>,
    /// c·∫|E(0,t)|² dt.
    pub input_energy: f64,
    /// Output energy before storage completes, over input energy.
    pub escaped_fraction: Option<f64>,
    /// Spin excitation when storage completes, over input energy.
    pub stored_fraction: Option<f64>,
    /// Output energy after the control returns, over input energy.
    pub retrieved_fraction: Option<f64>,
    /// ε actually used by the detector.
    pub mix_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub times: Vec<f64>,
    pub detector: DetectorTrace,
    /// |E(0,t)|².
    pub input_trace: Vec<f64>,
    /// E(L,t).
    pub field_out: Vec<Complex64>,
    /// Ω_c(t).
    pub control_out: Vec<f64>,
    /// Control envelope in signal-field units, as seen by the detector.
    pub control_hat: Vec<f64>,
    /// ∫|S|² dz.
    pub spin_energy: Vec<f64>,
    pub snapshots: Vec<SimulationState>,
    pub diagnostics: Diagnostics,
}

impl RunResult {
    /// c·∫|E(L,t)|² dt over output samples with t in [t0, t1).
    pub fn output_energy(&self, t0: f64, t1: f64, light_speed: f64) -> f64 {
        let dt = self.sample_interval();
        light_speed
            * dt
            * self
                .times
                .iter()
                .zip(&self.field_out)
                .filter(|(&t, _)| t >= t0 && t < t1)
                .map(|(_, e)| e.norm_sqr())
                .sum::<f64>()
    }

    pub fn sample_interval(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }
}

/// Simulates one experiment end to end: propagation, storage, field pulse,
/// retrieval and detection.
pub fn run(spec: &ExperimentSpec) -> Result<RunResult, SolverError> {
    let diags = spec.validate();
    if diags.iter().any(Diagnostic::is_error) {
        return Err(SolverError::InvalidSpec(diags));
    }
    let grid = &spec.grid;
    let limit = stability_limit(spec);
    if grid.dt > limit * (1.0 + 1e-12) {
        return Err(SolverError::UnstableStep { dt: grid.dt, limit });
    }

    let medium = spec.medium;
    let nz = grid.nz;
    let n_steps = grid.steps();
    let stride = grid.output_stride;
    let n_out = n_steps / stride + 1;

    let mut integ = Integrator::new(medium, nz, SpecDrive { spec });
    let mut state = SimulationState::zero(medium.length_cm, nz, grid.t_start);
    accumulate_field(&state.p, integ.drive().input(grid.t_start), &medium, &mut state.e);

    let mut times = Vec::with_capacity(n_out);
    let mut field_out = Vec::with_capacity(n_out);
    let mut input_trace = Vec::with_capacity(n_out);
    let mut control_out = Vec::with_capacity(n_out);
    let mut spin_energy = Vec::with_capacity(n_out);
    let mut snapshots = Vec::new();
    let mut max_abs_p: f64 = 0.0;

    for k in 0..=n_steps {
        if k > 0 {
            integ.step(&mut state, grid.dt)?;
            // keep the clock exact rather than accumulated
            state.t = grid.t_start + k as f64 * grid.dt;
            max_abs_p = state.p.iter().fold(max_abs_p, |m, c| m.max(c.norm()));
        }
        if k % stride == 0 {
            times.push(state.t);
            field_out.push(state.e[nz - 1]);
            input_trace.push(state.e[0].norm_sqr());
            control_out.push(integ.drive().control(state.t));
            spin_energy.push(state.spin_energy());
        }
        if grid.snapshot_stride > 0 && k % grid.snapshot_stride == 0 {
            snapshots.push(state.clone());
        }
    }

    let mut warnings = adiabaticity_warnings(spec);

    let signal_peak = spec.signal.max_abs();
    let control_peak = spec.control.max_abs();
    let reference = if signal_peak > 0.0 { signal_peak } else { 1.0 };
    let scale = if control_peak > 0.0 {
        spec.detection.control_ratio * reference / control_peak
    } else {
        0.0
    };
    let control_hat: Vec<f64> = control_out.iter().map(|&c| c * scale).collect();

    let mut cfg = spec.detection;
    if cfg.auto_balance {
        cfg.mix_amplitude = detect::auto_balance(&field_out, &control_hat)?;
    }
    let mut detector = detect::detect(&field_out, &control_hat, &times, &cfg)?;
    detect::add_noise(&mut detector, cfg.noise_std, cfg.noise_seed);

    let dt_out = grid.dt * stride as f64;
    let c = medium.light_speed;
    let input_energy = c * dt_out * input_trace.iter().sum::<f64>();

    let mut result = RunResult {
        times,
        detector,
        input_trace,
        field_out,
        control_out,
        control_hat,
        spin_energy,
        snapshots,
        diagnostics: Diagnostics {
            steps: n_steps,
            max_abs_p,
            warnings: Vec::new(),
            input_energy,
            escaped_fraction: None,
            stored_fraction: None,
            retrieved_fraction: None,
            mix_amplitude: cfg.mix_amplitude,
        },
    };

    if let (Some(tl), true) = (spec.timeline(), input_energy > 0.0) {
        let escaped = result.output_energy(f64::NEG_INFINITY, tl.storage_start, c);
        let retrieved = tl.storage_end.map(|end| result.output_energy(end, f64::INFINITY, c));
        let at = result
            .times
            .iter()
            .position(|&t| t >= tl.storage_start - 1e-9)
            .unwrap_or(result.times.len() - 1);
        let stored = result.spin_energy[at];
        let d = &mut result.diagnostics;
        d.escaped_fraction = Some(escaped / input_energy);
        d.stored_fraction = Some(stored / input_energy);
        d.retrieved_fraction = retrieved.map(|r| r / input_energy);
    } else if spec.timeline().is_some() && signal_peak > 0.0 {
        warnings.push("input pulse does not overlap the simulation window".into());
    }
    result.diagnostics.warnings = warnings;
    Ok(result)
}

/// Flags control ramps faster than the adiabatic rate γₑ·d, checked where
/// the control is at least 10% of its peak.
fn adiabaticity_warnings(spec: &ExperimentSpec) -> Vec<String> {
    let limit = spec.medium.gamma_e * spec.medium.optical_depth();
    let peak = spec.control.max_abs();
    let mut out = Vec::new();
    for pair in spec.control.knots().windows(2) {
        let ((t0, v0), (t1, v1)) = (pair[0], pair[1]);
        let slope = ((v1 - v0) / (t1 - t0)).abs();
        let level = v0.max(v1);
        if level >= 0.1 * peak && level > 0.0 && slope / level > limit {
            out.push(format!(
                "control ramp between {t0} and {t1} µs is non-adiabatic: |dΩ/dt|/Ω = {:.3e} exceeds γₑ·d = {limit:.3e}",
                slope / level
            ));
        }
    }
    out
}
