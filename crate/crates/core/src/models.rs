//! The qubit thermometry example in dimensionless units.
//!
//! Energies are measured in units of the probe splitting `ħΩ`, rates and
//! times in units of the probe-ancilla coupling `g`, and the probing time is
//! exactly one. `theta = k_B T / ħΩ`.
//!
//! With `sigma_minus = |0><1|` the thermal jumps drive population into `|0>`,
//! so `|0>` is the probe ground state. The probe Hamiltonian is
//! `-(Ω/g) sigma_z / 2`, which makes the Gibbs state `exp(-H/theta)/Z` the
//! steady state of the generator and gives `tr(sigma_z rho_T) = +1/(2 nbar + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{
    commutator_superop, kron, pauli_z, sigma_minus, sigma_plus, Operator, Superoperator, C64, I,
};
use crate::lindblad::LindbladSpec;

/// Probe splitting `Ω` in units of `g`. It only enters through a commutator
/// that commutes with every other term acting on the populations, so none of
/// the reported quantities depend on it.
pub const PROBE_FREQUENCY: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitThermalModel {
    pub theta: f64,
    pub xi: f64,
    pub eta: f64,
    pub kappa_s_over_g: f64,
}

impl QubitThermalModel {
    pub fn new(theta: f64, xi: f64, eta: f64, kappa_s_over_g: f64) -> Result<Self> {
        let m = Self { theta, xi, eta, kappa_s_over_g };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad("theta must be positive and finite; theta", self.theta);
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return bad("xi must be positive and finite; xi", self.xi);
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta must be nonnegative and finite; eta", self.eta);
        }
        if !(self.kappa_s_over_g.is_finite() && self.kappa_s_over_g >= 0.0) {
            return bad("kappa_s_over_g must be nonnegative and finite; kappa_s_over_g", self.kappa_s_over_g);
        }
        Ok(())
    }

    pub fn with_theta(self, theta: f64) -> Self {
        Self { theta, ..self }
    }

    pub fn with_xi(self, xi: f64) -> Self {
        Self { xi, ..self }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn with_kappa_s(self, kappa_s_over_g: f64) -> Self {
        Self { kappa_s_over_g, ..self }
    }

    pub fn thermal(&self) -> Result<ThermalQuantities> {
        thermal_quantities(self.theta)
    }
}

impl Default for QubitThermalModel {
    /// The parameters of the large-N figures: theta = 2, xi = 400, eta = 0.1.
    fn default() -> Self {
        Self { theta: 2.0, xi: 400.0, eta: 0.1, kappa_s_over_g: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThermalQuantities {
    pub nbar: f64,
    pub phi: f64,
    pub dphi_dtheta: f64,
    pub f_th: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("theta must be positive and finite, got {theta}")))
    }
}

pub fn thermal_quantities(theta: f64) -> Result<ThermalQuantities> {
    check_theta(theta)?;
    let x = 0.5 / theta;
    let sech2 = 1.0 / x.cosh().powi(2);
    Ok(ThermalQuantities {
        nbar: 1.0 / (1.0 / theta).exp_m1(),
        phi: x.tanh(),
        dphi_dtheta: -sech2 / (2.0 * theta * theta),
        f_th: (1.0 / (2.0 * theta * theta)).powi(2) * sech2,
    })
}

/// `d nbar / d theta = nbar (nbar + 1) / theta^2`.
pub fn dnbar_dtheta(theta: f64) -> Result<f64> {
    let n = thermal_quantities(theta)?.nbar;
    Ok(n * (n + 1.0) / (theta * theta))
}

/// `exp(-H/theta)/Z`, written through `phi` to stay finite at small theta.
pub fn gibbs_state(theta: f64) -> Result<Operator> {
    let phi = thermal_quantities(theta)?.phi;
    Ok(Operator::real_diag(&[(1.0 + phi) / 2.0, (1.0 - phi) / 2.0]))
}

/// `d rho_T / d theta`.
pub fn gibbs_state_derivative(theta: f64) -> Result<Operator> {
    let dphi = thermal_quantities(theta)?.dphi_dtheta;
    Ok(Operator::real_diag(&[dphi / 2.0, -dphi / 2.0]))
}

pub fn probe_hamiltonian() -> Operator {
    pauli_z().scale(C64::new(-0.5 * PROBE_FREQUENCY, 0.0))
}

/// Thermalization of one probe: `xi (nbar+1) D[sigma_-] + xi nbar D[sigma_+]`.
pub fn probe_liouvillian(model: &QubitThermalModel) -> Result<LindbladSpec> {
    model.validate()?;
    let nbar = model.thermal()?.nbar;
    Ok(LindbladSpec::new(probe_hamiltonian())
        .with_jump(model.xi * (nbar + 1.0), sigma_minus())
        .with_jump(model.xi * nbar, sigma_plus()))
}

/// Probe dephasing at rate `kappa_s_over_g`.
pub fn probe_noise(model: &QubitThermalModel) -> Result<LindbladSpec> {
    model.validate()?;
    Ok(LindbladSpec::zero(2).with_jump(model.kappa_s_over_g, pauli_z()))
}

/// Ancilla dephasing at rate `eta`. The ancilla Hamiltonian commutes with the
/// coupling and is removed by the rotating frame, so it is zero here.
pub fn ancilla_noise(model: &QubitThermalModel) -> Result<LindbladSpec> {
    model.validate()?;
    Ok(LindbladSpec::zero(2).with_jump(model.eta, pauli_z()))
}

/// `K X = -i [sigma_z ⊗ sigma_z, X]` on `probe ⊗ ancilla`.
pub fn coupling_superoperator() -> Superoperator {
    commutator_superop(&kron(&pauli_z(), &pauli_z())).scale(-I)
}

/// Central difference of `f` at `x` with step `h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// One Richardson step on central differences with steps `h` and `h/2`.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let coarse = central_difference(&f, x, h);
    let fine = central_difference(&f, x, h / 2.0);
    (4.0 * fine - coarse) / 3.0
}
