//! Three-level Λ model and its closed-form physics.
//!
//! The medium is a linearized (weak-probe) Λ system: all population sits in
//! the ground state coupled by the signal, and only the optical coherence
//! and the ground-state spin coherence evolve. Units throughout are µs, cm,
//! rad/µs and gauss.
//!
//! The functions here are used by the solver and, independently, as
//! analytic references in tests.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::sequence::{Waveform, WaveformError};

/// Vacuum light speed in cm/µs.
pub const LIGHT_SPEED: f64 = 2.9979e4;

/// Bohr magneton over ħ, in rad/(µs·gauss): 2π × 1.3996 MHz/G.
pub const MU_B_OVER_HBAR: f64 = 2.0 * PI * 1.3996;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mixing angle undefined: coupling and control Rabi frequency are both zero")]
    UndefinedAngle,
    #[error("susceptibility is singular at detuning {delta}")]
    Singular { delta: f64 },
    #[error("no half-maximum crossing in the transmission spectrum: {0}")]
    DegenerateWindow(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Ensemble and optical constants of the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams {
    /// Cell length L (cm).
    pub length_cm: f64,
    /// Collective coupling g²N (rad²/µs²).
    pub coupling_g2n: f64,
    /// Optical-coherence decay rate γₑ (rad/µs, half-width).
    pub gamma_e: f64,
    /// Spin-coherence decay rate γₛ (rad/µs).
    pub gamma_s: f64,
    /// Light speed c (cm/µs).
    pub light_speed: f64,
}

impl Default for MediumParams {
    /// 4 cm cell with optical depth ≈ 20 and a 200 µs spin lifetime.
    fn default() -> Self {
        Self {
            length_cm: 4.0,
            coupling_g2n: 1.35e6,
            gamma_e: 18.0,
            gamma_s: 0.005,
            light_speed: LIGHT_SPEED,
        }
    }
}

impl MediumParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.length_cm.is_finite() && self.length_cm > 0.0) {
            return Err(invalid("length_cm", "must be finite and > 0"));
        }
        if !(self.coupling_g2n.is_finite() && self.coupling_g2n >= 0.0) {
            return Err(invalid("coupling_g2n", "must be finite and >= 0"));
        }
        if !(self.gamma_e.is_finite() && self.gamma_e > 0.0) {
            return Err(invalid("gamma_e", "must be finite and > 0"));
        }
        if !(self.gamma_s.is_finite() && self.gamma_s >= 0.0) {
            return Err(invalid("gamma_s", "must be finite and >= 0"));
        }
        if !(self.light_speed.is_finite() && self.light_speed > 0.0) {
            return Err(invalid("light_speed", "must be finite and > 0"));
        }
        if !self.optical_depth().is_finite() {
            return Err(invalid("coupling_g2n", "optical depth is not finite"));
        }
        Ok(())
    }

    /// Resonant optical depth d = 2·g²N·L/(c·γₑ) without the control field.
    pub fn optical_depth(&self) -> f64 {
        2.0 * self.coupling_g2n * self.length_cm / (self.light_speed * self.gamma_e)
    }

    /// √(g²N).
    pub fn coupling(&self) -> f64 {
        self.coupling_g2n.sqrt()
    }
}

/// Landé factors and gyromagnetic constant for the Zeeman pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanConfig {
    /// g₊ − g₋.
    pub delta_g: f64,
    /// μ_B/ħ in rad/(µs·gauss).
    pub mu_b_over_hbar: f64,
}

impl Default for ZeemanConfig {
    /// ⁸⁷Rb F=2, M_F = 0 and M_F = +2 with g_F = ½.
    fn default() -> Self {
        Self {
            delta_g: 1.0,
            mu_b_over_hbar: MU_B_OVER_HBAR,
        }
    }
}

impl ZeemanConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.delta_g.is_finite() {
            return Err(invalid("delta_g", "must be finite"));
        }
        if !(self.mu_b_over_hbar.is_finite() && self.mu_b_over_hbar > 0.0) {
            return Err(invalid("mu_b_over_hbar", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Detuning per gauss, (g₊ − g₋)·μ_B/ħ.
    pub fn detuning_per_gauss(&self) -> f64 {
        self.delta_g * self.mu_b_over_hbar
    }
}

/// States of the Λ system.
///
/// For ⁸⁷Rb on the D1 line, `Minus` is |F=2, M_F=0⟩, `Plus` is
/// |F=2, M_F=+2⟩ and `Excited` is |5P½, F=1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaState {
    Minus,
    Plus,
    Excited,
}

/// Circular polarizations of the two optical fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// σ⁺, the control field Ω_c.
    SigmaPlus,
    /// σ⁻, the signal field Ω_s.
    SigmaMinus,
}

/// Dark-state polariton mixing angle, tan θ = √(g²N)/Ω_c.
pub fn mixing_angle(coupling_g2n: f64, omega_c: f64) -> Result<f64, ModelError> {
    if coupling_g2n < 0.0 || omega_c < 0.0 {
        return Err(invalid("mixing_angle", "arguments must be >= 0"));
    }
    if coupling_g2n == 0.0 && omega_c == 0.0 {
        return Err(ModelError::UndefinedAngle);
    }
    Ok(coupling_g2n.sqrt().atan2(omega_c))
}

/// v_g = c·cos²θ.
pub fn group_velocity(theta: f64, light_speed: f64) -> f64 {
    let cos = theta.cos();
    light_speed * cos * cos
}

/// Zeeman shift of the spin coherence, δ_B = (g₊ − g₋)(μ_B/ħ)·B.
pub fn zeeman_detuning(b_gauss: f64, zeeman: &ZeemanConfig) -> f64 {
    zeeman.detuning_per_gauss() * b_gauss
}

/// Phase acquired by the spin coherence under the field `b` between `t0`
/// and `t1`: Φ = (g₊ − g₋)(μ_B/ħ)∫B dt.
pub fn zeeman_phase(
    b: &Waveform,
    t0: f64,
    t1: f64,
    zeeman: &ZeemanConfig,
) -> Result<f64, ModelError> {
    Ok(zeeman.detuning_per_gauss() * b.integral(t0, t1)?)
}

/// Steady-state propagation coefficient κ (1/cm) of the signal envelope,
/// ∂z E = κE, for a probe detuning `delta` and Zeeman shift `delta_b`:
///
/// κ(δ) = −(g²N/c) / (γₑ + iδ + Ω_c² / (γₛ + i(δ − δ_B)))
pub fn eit_susceptibility(
    delta: f64,
    omega_c: f64,
    medium: &MediumParams,
    delta_b: f64,
) -> Result<Complex64, ModelError> {
    if omega_c < 0.0 {
        return Err(invalid("omega_c", "must be >= 0"));
    }
    let spin = Complex64::new(medium.gamma_s, delta - delta_b);
    let dressing = if omega_c == 0.0 {
        Complex64::new(0.0, 0.0)
    } else if spin.norm_sqr() == 0.0 {
        // Perfect two-photon resonance: the dressing term diverges and the
        // medium is exactly transparent.
        return Ok(Complex64::new(0.0, 0.0));
    } else {
        omega_c * omega_c / spin
    };
    let denom = Complex64::new(medium.gamma_e, delta) + dressing;
    if denom.norm_sqr() == 0.0 {
        return Err(ModelError::Singular { delta });
    }
    Ok(-medium.coupling_g2n / medium.light_speed / denom)
}

/// Intensity transmission T(δ) = exp(2·Re κ·L).
pub fn transmission(
    delta: f64,
    omega_c: f64,
    medium: &MediumParams,
    delta_b: f64,
) -> Result<f64, ModelError> {
    let kappa = eit_susceptibility(delta, omega_c, medium, delta_b)?;
    Ok((2.0 * kappa.re * medium.length_cm).exp())
}

/// Full width at half maximum (rad/µs) of the transparency window, measured
/// between the peak T(0) and the two-level absorption floor e^(−d).
pub fn transparency_fwhm(omega_c: f64, medium: &MediumParams) -> Result<f64, ModelError> {
    medium.validate()?;
    if !(omega_c > 0.0) {
        return Err(ModelError::DegenerateWindow(
            "control Rabi frequency must be > 0".into(),
        ));
    }
    let depth = medium.optical_depth();
    if depth <= 1.0 {
        return Err(ModelError::DegenerateWindow(format!(
            "optical depth {depth} gives no absorption feature"
        )));
    }
    let t = |delta: f64| transmission(delta, omega_c, medium, 0.0);
    let floor = (-depth).exp();
    let peak = t(0.0)?;
    let half = floor + 0.5 * (peak - floor);
    if peak <= floor * (1.0 + 1e-9) {
        return Err(ModelError::DegenerateWindow(
            "no transparency above the absorption floor".into(),
        ));
    }

    // Geometric outward scan for the first crossing, then bisection.
    let scale = omega_c * omega_c / medium.gamma_e + medium.gamma_s;
    let limit = 100.0 * (medium.gamma_e + omega_c);
    let mut lo = 0.0;
    let mut hi = 1e-6 * scale.min(limit);
    loop {
        if t(hi)? < half {
            break;
        }
        lo = hi;
        hi *= 1.05;
        if hi > limit {
            return Err(ModelError::DegenerateWindow(
                "transmission never falls to half maximum".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t(mid)? < half {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(lo + hi)
}
