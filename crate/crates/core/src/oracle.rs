//! Brute-force reference: the full joint master equation for up to three
//! probes and the ancilla, exponentiated densely and reduced to the ancilla.
//!
//! Factor order is `S_1 ⊗ ... ⊗ S_N ⊗ A`.

use crate::error::{Error, Result};
use crate::lindblad::{build_liouvillian, LindbladSpec};
use crate::linops::{embed, kron_all, partial_trace, pauli_z, MatrixExp, Operator, Superoperator};
use crate::models::{ancilla_noise, probe_liouvillian, probe_noise, QubitThermalModel};
use crate::scheme::ProbeInitial;

pub const MAX_PROBES: usize = 3;

#[derive(Clone, Debug)]
pub struct JointSystem {
    pub n_probes: usize,
    pub liouvillian: Superoperator,
    pub initial: Operator,
    /// `L_{S_n A} + L^noise_{S_n}` for each probe, embedded in the joint space.
    pub probe_terms: Vec<Superoperator>,
    /// `L^noise_A` embedded in the joint space.
    pub ancilla_term: Superoperator,
}

impl JointSystem {
    pub fn dims(&self) -> Vec<usize> {
        vec![2; self.n_probes + 1]
    }
}

pub fn build_joint(
    model: &QubitThermalModel,
    n: usize,
    probe_initial: &ProbeInitial,
    ancilla_initial: &Operator,
) -> Result<JointSystem> {
    build_joint_with_coupling(model, n, probe_initial, ancilla_initial, 1.0)
}

/// As [`build_joint`] with the `sigma_z ⊗ sigma_z` coupling scaled by `coupling`.
pub fn build_joint_with_coupling(
    model: &QubitThermalModel,
    n: usize,
    probe_initial: &ProbeInitial,
    ancilla_initial: &Operator,
    coupling: f64,
) -> Result<JointSystem> {
    if n > MAX_PROBES {
        return Err(Error::Capacity { requested: n, max: MAX_PROBES });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("at least one probe is required".into()));
    }
    model.validate()?;
    ancilla_initial.check_density()?;
    let rho = probe_initial.state(model.theta)?;
    rho.check_density()?;

    let dims = vec![2; n + 1];
    let anc = n;
    let z_anc = embed(&pauli_z(), &dims, anc)?;
    let probe = probe_liouvillian(model)?.merge(&probe_noise(model)?)?;

    let mut probe_terms = Vec::with_capacity(n);
    for k in 0..n {
        let mut spec = probe.embed(&dims, k)?;
        let zz = &embed(&pauli_z(), &dims, k)? * &z_anc;
        spec.hamiltonian = &spec.hamiltonian + &zz.scale(crate::linops::C64::new(coupling, 0.0));
        probe_terms.push(build_liouvillian(&spec)?);
    }
    let ancilla_term = build_liouvillian(&ancilla_noise(model)?.embed(&dims, anc)?)?;

    let mut liouvillian = ancilla_term.clone();
    for t in &probe_terms {
        liouvillian = &liouvillian + t;
    }
    let tp = crate::lindblad::trace_preservation_defect(&liouvillian);
    if tp > 1e-10 * liouvillian.frobenius_norm().max(1.0) {
        return Err(Error::InvalidParameter(format!("joint generator not trace preserving ({tp:.3e})")));
    }

    let initial = product_state(&rho, n, ancilla_initial);
    Ok(JointSystem { n_probes: n, liouvillian, initial, probe_terms, ancilla_term })
}

/// Spec of the full joint generator, for callers that want to inspect it.
pub fn joint_spec(model: &QubitThermalModel, n: usize) -> Result<LindbladSpec> {
    if n > MAX_PROBES {
        return Err(Error::Capacity { requested: n, max: MAX_PROBES });
    }
    let dims = vec![2; n + 1];
    let probe = probe_liouvillian(model)?.merge(&probe_noise(model)?)?;
    let mut spec = ancilla_noise(model)?.embed(&dims, n)?;
    let z_anc = embed(&pauli_z(), &dims, n)?;
    for k in 0..n {
        spec = spec.merge(&probe.embed(&dims, k)?)?;
        spec.hamiltonian = &spec.hamiltonian + &(&embed(&pauli_z(), &dims, k)? * &z_anc);
    }
    Ok(spec)
}

/// `tr_{S_1..S_N}[exp(L t) rho(0)]`.
pub fn evolve_and_reduce(sys: &JointSystem, t: f64) -> Result<Operator> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("evolution time must be >= 0, got {t}")));
    }
    let dims = sys.dims();
    if t == 0.0 {
        return partial_trace(&sys.initial, &dims, sys.n_probes);
    }
    let state = sys.liouvillian.expm(t)?.apply(&sys.initial)?;
    let reduced = partial_trace(&state, &dims, sys.n_probes)?;
    reduced.check_density_with(1e-10, 1e-9)?;
    Ok(reduced)
}

/// The product `rho^{⊗N} ⊗ sigma` used as the joint initial state.
pub fn product_state(rho: &Operator, n: usize, sigma: &Operator) -> Operator {
    let mut f = vec![rho.clone(); n];
    f.push(sigma.clone());
    kron_all(&f)
}
