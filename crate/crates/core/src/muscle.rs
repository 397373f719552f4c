//! Hill-type muscle force with an evolvable strength/velocity/stiffness triad.
//!
//! A muscle produces
//!
//! ```text
//! f = -(F_L(L) * F_V(v~) * a + F_P(L, kappa)) * F0(sigma)
//! F0(sigma)      = sigma * f0_ref
//! v~             = v / (nu * vmax_ref)
//! F_P(L, kappa)  = max(0, (exp(kappa (L - 1)) - 1) / (exp(kappa (l_max - 1)) - 1))
//! ```
//!
//! Lengths are normalized by the rest length and velocities are expressed in
//! rest-lengths per second, positive while shortening. Forces are negative
//! when tensile; callers that need magnitudes negate the result.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};

/// Bounds of the evolvable strength multiplier.
pub const SIGMA_BOUNDS: (f64, f64) = (0.5, 1.5);
/// Bounds of the evolvable velocity multiplier.
pub const NU_BOUNDS: (f64, f64) = (0.5, 1.5);
/// Bounds of the passive curvature coefficient.
pub const KAPPA_BOUNDS: (f64, f64) = (0.5, 2.0);

/// Half-width of the active force-length bell.
pub const FL_HALF_WIDTH: f64 = 0.5;
/// Curvature of the concentric force-velocity hyperbola.
pub const FV_CURVATURE: f64 = 4.0;
/// Upper limit of the eccentric force-velocity branch.
pub const FV_ECCENTRIC_PLATEAU: f64 = 1.5;
/// Slope of the eccentric ramp, reaching the plateau at v~ = -0.5.
pub const FV_ECCENTRIC_SLOPE: f64 = 1.0;
/// First-order activation time constant (s), used for rise and decay.
pub const ACTIVATION_TAU: f64 = 0.05;
/// Normalized length at which passive force reaches one.
pub const DEFAULT_L_MAX: f64 = 1.6;

/// Physiological parameters of one muscle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleParams {
    pub sigma: f64,
    pub nu: f64,
    pub kappa: f64,
    /// Reference peak isometric force (N).
    pub f0_ref: f64,
    /// Reference maximum shortening velocity (rest lengths / s).
    pub vmax_ref: f64,
    pub l_max: f64,
}

impl MuscleParams {
    pub fn with_reference(f0_ref: f64, vmax_ref: f64) -> Self {
        Self {
            sigma: 1.0,
            nu: 1.0,
            kappa: 1.0,
            f0_ref,
            vmax_ref,
            l_max: DEFAULT_L_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(self.sigma, SIGMA_BOUNDS) {
            return Err(SdeError::domain(format!(
                "sigma {} outside bounds",
                self.sigma
            )));
        }
        if !within(self.nu, NU_BOUNDS) {
            return Err(SdeError::domain(format!("nu {} outside bounds", self.nu)));
        }
        if !within(self.kappa, KAPPA_BOUNDS) {
            return Err(SdeError::domain(format!(
                "kappa {} outside bounds",
                self.kappa
            )));
        }
        if !(self.f0_ref > 0.0) || !(self.vmax_ref > 0.0) {
            return Err(SdeError::domain(
                "reference force and velocity must be positive",
            ));
        }
        if !(self.l_max > 1.0) {
            return Err(SdeError::domain(format!(
                "l_max {} must exceed 1",
                self.l_max
            )));
        }
        Ok(())
    }
}

/// Instantaneous state of a muscle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleState {
    pub length: f64,
    pub velocity: f64,
    pub activation: f64,
}

pub fn scale_peak_force(sigma: f64, f0_ref: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(f0_ref > 0.0) {
        return Err(SdeError::domain(format!(
            "peak force scaling needs positive inputs, got sigma={sigma}, f0_ref={f0_ref}"
        )));
    }
    Ok(sigma * f0_ref)
}

pub fn normalize_velocity(v: f64, nu: f64, vmax_ref: f64) -> Result<f64> {
    if !(nu > 0.0) || !(vmax_ref > 0.0) {
        return Err(SdeError::domain(format!(
            "velocity normalization needs positive nu and vmax_ref, got {nu}, {vmax_ref}"
        )));
    }
    Ok(v / (nu * vmax_ref))
}

/// Passive parallel-elastic multiplier, zero at or below rest length.
pub fn passive_force(length: f64, kappa: f64, l_max: f64) -> Result<f64> {
    if !(l_max > 1.0) {
        return Err(SdeError::domain(format!("l_max {l_max} must exceed 1")));
    }
    if !(kappa > 0.0) || !(length > 0.0) {
        return Err(SdeError::domain(format!(
            "passive force needs positive length and kappa, got L={length}, kappa={kappa}"
        )));
    }
    // exp_m1 keeps F_P(1) == 0 and F_P(l_max) == 1 exact.
    let num = (kappa * (length - 1.0)).exp_m1();
    let den = (kappa * (l_max - 1.0)).exp_m1();
    Ok((num / den).max(0.0))
}

/// Quadratic bell centred on rest length, zero outside `1 ± FL_HALF_WIDTH`.
pub fn active_force_length(length: f64) -> f64 {
    let x = (length - 1.0) / FL_HALF_WIDTH;
    (1.0 - x * x).clamp(0.0, 1.0)
}

/// Hill force-velocity multiplier. Positive `v_tilde` is shortening.
pub fn force_velocity(v_tilde: f64) -> f64 {
    if v_tilde >= 1.0 {
        0.0
    } else if v_tilde >= 0.0 {
        (1.0 - v_tilde) / (1.0 + FV_CURVATURE * v_tilde)
    } else {
        (1.0 - FV_ECCENTRIC_SLOPE * v_tilde).min(FV_ECCENTRIC_PLATEAU)
    }
}

/// Signed muscle force (N); negative values pull.
pub fn muscle_force(state: &MuscleState, params: &MuscleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&state.activation) {
        return Err(SdeError::domain(format!(
            "activation {} outside [0, 1]",
            state.activation
        )));
    }
    let f0 = scale_peak_force(params.sigma, params.f0_ref)?;
    let v_tilde = normalize_velocity(state.velocity, params.nu, params.vmax_ref)?;
    let passive = passive_force(state.length, params.kappa, params.l_max)?;
    let active = active_force_length(state.length) * force_velocity(v_tilde) * state.activation;
    Ok(-(active + passive) * f0)
}

/// One explicit step of first-order activation dynamics, clamped to [0, 1].
pub fn activation_step(activation: f64, excitation: f64, dt: f64) -> f64 {
    (activation + dt * (excitation - activation) / ACTIVATION_TAU).clamp(0.0, 1.0)
}
