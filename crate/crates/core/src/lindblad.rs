//! Lindblad generators, steady states, damping bases and the memory/decay
//! bounds of the projection-operator treatment.
//!
//! Composite spaces in this module are ordered `probe ⊗ ancilla`, so the
//! projection `P X = rho_T ⊗ tr_S X` traces out factor 0.

use ndarray::{Array1, Array2};
use ndarray_linalg::SVD;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linops::{
    anticommutator_superop, commutator_superop, devectorize, eig, embed, induced_norm, kron,
    partial_trace, sandwich, vectorize, MatrixExp, Operator, Spectrum, Superoperator, C64, I, ONE,
};

/// Relative tolerance for treating a singular value or eigenvalue as zero.
pub const NULL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub rate: f64,
    pub operator: Operator,
}

/// Hamiltonian plus weighted jump operators of a Lindblad generator.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladSpec {
    pub hamiltonian: Operator,
    pub jumps: Vec<Jump>,
}

impl LindbladSpec {
    pub fn new(hamiltonian: Operator) -> Self {
        Self { hamiltonian, jumps: Vec::new() }
    }

    /// A spec with zero Hamiltonian on a `dim`-dimensional space.
    pub fn zero(dim: usize) -> Self {
        Self::new(Operator::zeros(dim))
    }

    pub fn with_jump(mut self, rate: f64, operator: Operator) -> Self {
        self.jumps.push(Jump { rate, operator });
        self
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !self.hamiltonian.is_finite() {
            return Err(Error::NonFinite("Hamiltonian"));
        }
        for (index, jump) in self.jumps.iter().enumerate() {
            if !jump.rate.is_finite() {
                return Err(Error::NonFinite("jump rate"));
            }
            if jump.rate < 0.0 {
                return Err(Error::NegativeRate { index, rate: jump.rate });
            }
            if jump.operator.dim() != d {
                return Err(Error::Dimension(format!(
                    "jump {index} has dim {}, Hamiltonian has dim {d}",
                    jump.operator.dim()
                )));
            }
            if !jump.operator.is_finite() {
                return Err(Error::NonFinite("jump operator"));
            }
        }
        Ok(())
    }

    /// Places the whole spec on factor `factor` of a composite space.
    pub fn embed(&self, dims: &[usize], factor: usize) -> Result<Self> {
        let hamiltonian = embed(&self.hamiltonian, dims, factor)?;
        let jumps = self
            .jumps
            .iter()
            .map(|j| Ok(Jump { rate: j.rate, operator: embed(&j.operator, dims, factor)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { hamiltonian, jumps })
    }

    /// Sum of two generators on the same space.
    pub fn merge(&self, other: &LindbladSpec) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "cannot merge specs of dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut jumps = self.jumps.clone();
        jumps.extend(other.jumps.iter().cloned());
        Ok(Self { hamiltonian: &self.hamiltonian + &other.hamiltonian, jumps })
    }
}

/// `rho -> K rho K† - {K†K, rho}/2`.
pub fn dissipator(k: &Operator) -> Superoperator {
    let kd = k.dagger();
    let kdk = &kd * k;
    let jump = sandwich(k, &kd).expect("same dimension");
    &jump - &anticommutator_superop(&kdk).scale_real(0.5)
}

pub fn build_liouvillian(spec: &LindbladSpec) -> Result<Superoperator> {
    spec.validate()?;
    let mut l = commutator_superop(&spec.hamiltonian).scale(-I);
    for jump in &spec.jumps {
        if jump.rate != 0.0 {
            l = &l + &dissipator(&jump.operator).scale_real(jump.rate);
        }
    }
    let defect = trace_preservation_defect(&l);
    let tolerance = NULL_TOL * l.frobenius_norm().max(1.0);
    if defect > tolerance {
        return Err(Error::InvalidParameter(format!(
            "generator is not trace preserving (defect {defect:.3e})"
        )));
    }
    Ok(l)
}

/// Largest entry of `vec(I)† L`, which vanishes for trace-preserving generators.
pub fn trace_preservation_defect(l: &Superoperator) -> f64 {
    let d = l.op_dim();
    let m = l.matrix();
    (0..d * d)
        .map(|col| (0..d).map(|i| m[[i + i * d, col]]).sum::<C64>().norm())
        .fold(0.0, f64::max)
}

/// Unique trace-one fixed point of `l`, from the null space of its matrix.
pub fn steady_state(l: &Superoperator) -> Result<Operator> {
    let d = l.op_dim();
    let (_, sv, vt) = l.matrix().svd(false, true)?;
    let vt = vt.expect("requested right singular vectors");
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = NULL_TOL * smax.max(1.0);
    let null: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] <= cutoff).collect();
    if null.len() != 1 {
        return Err(Error::SteadyStateNotUnique { zero_modes: null.len() });
    }
    let v: Array1<C64> = vt.row(null[0]).mapv(|z| z.conj());
    let rho = devectorize(&v, d)?;
    let tr = rho.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::NotDensity("null vector is traceless".into()));
    }
    Ok(rho.scale(ONE / tr).hermitian_part())
}

/// Eigen-operators of a Liouvillian with its gap and the constant
/// `epsilon = sum_{mu >= 1} |L_mu| |R_mu|`.
///
/// With a unique zero mode, `R_0` is rescaled to the trace-one steady state
/// and `L_0` to the identity, which is the normalization under which `Q`
/// annihilates `R_0`. Right vectors of the decaying modes have unit norm.
#[derive(Clone, Debug)]
pub struct DampingBasis {
    pub spectrum: Spectrum,
    pub epsilon: f64,
    pub gap: f64,
    pub zero_modes: usize,
}

impl DampingBasis {
    /// `|sum_mu lambda_mu R_mu tr(L_mu† X) - L X|` for a given `X`.
    pub fn reconstruction_residual(&self, l: &Superoperator, x: &Operator) -> Result<f64> {
        let a = self.spectrum.reconstruct_apply(x)?;
        let b = l.apply(x)?;
        Ok(crate::linops::hs_norm(&(&a - &b)))
    }
}

pub fn damping_basis(l: &Superoperator) -> Result<DampingBasis> {
    let mut spectrum = eig(l)?;
    let zero_tol = NULL_TOL * l.frobenius_norm().max(1.0);
    let zero_modes = spectrum.eigenvalues.iter().filter(|z| z.norm() <= zero_tol).count();
    let gap = spectrum
        .eigenvalues
        .iter()
        .filter(|z| z.norm() > zero_tol)
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if !gap.is_finite() || gap <= 0.0 {
        return Err(Error::InvalidParameter("Liouvillian has no dissipative gap".into()));
    }

    if zero_modes == 1 {
        // Purely imaginary modes tie with the zero mode on |Re|; move it to the front.
        let idx0 = spectrum.eigenvalues.iter().position(|z| z.norm() <= zero_tol).expect("counted");
        spectrum.eigenvalues.swap(0, idx0);
        spectrum.right_vectors.swap(0, idx0);
        spectrum.left_vectors.swap(0, idx0);
        let d = l.op_dim();
        let r0 = spectrum.right_operator(0);
        let tr = r0.trace();
        if tr.norm() < 1e-12 {
            return Err(Error::NotDensity("zero mode is traceless".into()));
        }
        spectrum.right_vectors[0] = vectorize(&r0).mapv(|z| z / tr);
        spectrum.left_vectors[0] = spectrum.left_vectors[0].mapv(|z| z * tr.conj());
        let rho_t = spectrum.right_operator(0).hermitian_part();
        let ident = vectorize(&Operator::identity(d));
        let drift = spectrum.left_vectors[0]
            .iter()
            .zip(ident.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if drift > 1e-8 {
            return Err(Error::Biorthonormalization {
                condition: f64::NAN,
                cluster: vec![spectrum.eigenvalues[0]],
            });
        }
        spectrum.left_vectors[0] = ident;

        // Q R_0 = 0 and Q R_mu = R_mu on the probe space itself.
        let q = probe_complement(&rho_t);
        let qr0 = q.apply(&spectrum.right_operator(0))?;
        let mut worst: f64 = crate::linops::hs_norm(&qr0);
        for mu in 1..spectrum.len() {
            let r = spectrum.right_operator(mu);
            worst = worst.max(crate::linops::hs_norm(&(&q.apply(&r)? - &r)));
        }
        if worst > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "projection identities violated by {worst:.3e}"
            )));
        }
    }

    let epsilon = (0..spectrum.len())
        .filter(|&mu| spectrum.eigenvalues[mu].norm() > zero_tol)
        .map(|mu| vec_norm(&spectrum.left_vectors[mu]) * vec_norm(&spectrum.right_vectors[mu]))
        .sum();
    Ok(DampingBasis { spectrum, epsilon, gap, zero_modes })
}

fn vec_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `X -> (I - rho_T tr X)` on the probe space alone.
fn probe_complement(rho_t: &Operator) -> Superoperator {
    let d = rho_t.dim();
    let p = outer(&vectorize(rho_t), &vectorize(&Operator::identity(d)));
    &Superoperator::identity(d) - &Superoperator::new(d, p).expect("square")
}

fn outer(a: &Array1<C64>, b: &Array1<C64>) -> Array2<C64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

/// `P X = rho_T ⊗ tr_S X` on `probe ⊗ ancilla` with ancilla dimension `ancilla_dim`.
pub fn projection_p(rho_t: &Operator, ancilla_dim: usize) -> Result<Superoperator> {
    let ds = rho_t.dim();
    Superoperator::from_linear_map(ds * ancilla_dim, |x| {
        let reduced = partial_trace(x, &[ds, ancilla_dim], 1)?;
        Ok(kron(rho_t, &reduced))
    })
}

/// `Q = 1 - P`.
pub fn projection_q(rho_t: &Operator, ancilla_dim: usize) -> Result<Superoperator> {
    let p = projection_p(rho_t, ancilla_dim)?;
    Ok(&Superoperator::identity(p.op_dim()) - &p)
}

/// Probe-space quantities shared by the bounds.
struct BoundInputs {
    rho_t: Operator,
    basis: DampingBasis,
    ancilla_dim: usize,
    joint_probe: Superoperator,
    k_norm: f64,
}

fn bound_inputs(probe: &Superoperator, coupling: &Superoperator) -> Result<BoundInputs> {
    let ds = probe.op_dim();
    if !coupling.op_dim().is_multiple_of(ds) || coupling.op_dim() == ds {
        return Err(Error::Dimension(format!(
            "coupling on {}-dim space does not factor as probe({ds}) ⊗ ancilla",
            coupling.op_dim()
        )));
    }
    let ancilla_dim = coupling.op_dim() / ds;
    let rho_t = steady_state(probe)?;
    let basis = damping_basis(probe)?;
    let joint_probe = probe.on_factor(&[ds, ancilla_dim], 0)?;
    let k_norm = induced_norm(coupling)?;
    Ok(BoundInputs { rho_t, basis, ancilla_dim, joint_probe, k_norm })
}

/// Memory-term bound `eps g |P|^2 |K|^2 / (gap/g - eps |K|)`.
///
/// `probe` is the probe generator, `coupling` the interaction superoperator
/// on `probe ⊗ ancilla`, `gap` the dissipative gap in absolute units.
pub fn memory_bound(
    probe: &Superoperator,
    coupling: &Superoperator,
    g: f64,
    eps: f64,
    gap: f64,
) -> Result<f64> {
    for (name, v) in [("g", g), ("eps", eps), ("gap", gap)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    let ds = probe.op_dim();
    if !coupling.op_dim().is_multiple_of(ds) {
        return Err(Error::Dimension("coupling does not factor through the probe".into()));
    }
    let k_norm = induced_norm(coupling)?;
    let threshold = eps * k_norm;
    if g == 0.0 {
        return Ok(0.0);
    }
    let gap_over_g = gap / g;
    if gap_over_g <= threshold {
        return Err(Error::BoundInapplicable { gap_over_g, threshold });
    }
    let rho_t = steady_state(probe)?;
    let p_norm = induced_norm(&projection_p(&rho_t, coupling.op_dim() / ds)?)?;
    Ok(eps * g * p_norm * p_norm * k_norm * k_norm / (gap_over_g - threshold))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayBoundReport {
    pub epsilon: f64,
    pub gap: f64,
    pub k_norm: f64,
    pub rows: Vec<DecayRow>,
}

impl DecayBoundReport {
    pub fn all_hold(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| r.lhs <= r.rhs + slack)
    }
}

/// Tabulates `|exp(Q L tau) Q|` against `eps exp((eps g |K| - gap) tau)`
/// with `L = L_S + g K` on `probe ⊗ ancilla`.
pub fn decay_bound_check(
    probe: &Superoperator,
    coupling: &Superoperator,
    g: f64,
    t_grid: &[f64],
) -> Result<DecayBoundReport> {
    let inputs = bound_inputs(probe, coupling)?;
    let q = projection_q(&inputs.rho_t, inputs.ancilla_dim)?;
    let total = &inputs.joint_probe + &coupling.scale_real(g);
    let ql = &q * &total;
    let eps = inputs.basis.epsilon;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidParameter(format!("time separation {t} must be >= 0")));
        }
        let g_t = ql.expm(t)?;
        let lhs = induced_norm(&(&g_t * &q))?;
        let rhs = eps * ((eps * g * inputs.k_norm - inputs.basis.gap) * t).exp();
        rows.push(DecayRow { t, lhs, rhs });
    }
    Ok(DecayBoundReport { epsilon: eps, gap: inputs.basis.gap, k_norm: inputs.k_norm, rows })
}

/// Norm of the exact memory integral
/// `int_0^t P L exp(Q L (t - s)) Q L P rho(s) ds` for `rho(0) = rho_T ⊗ ancilla`.
///
/// The convolution is the upper-right block of
/// `exp([[QL, QLP], [0, L]] t)`, which avoids any quadrature.
pub fn memory_term_norm(
    probe: &Superoperator,
    coupling: &Superoperator,
    g: f64,
    ancilla: &Operator,
    t: f64,
) -> Result<f64> {
    let inputs = bound_inputs(probe, coupling)?;
    if ancilla.dim() != inputs.ancilla_dim {
        return Err(Error::Dimension("ancilla state has the wrong dimension".into()));
    }
    let p = projection_p(&inputs.rho_t, inputs.ancilla_dim)?;
    let q = &Superoperator::identity(p.op_dim()) - &p;
    let l = &inputs.joint_probe + &coupling.scale_real(g);
    let ql = &q * &l;
    let qlp = &ql * &p;
    let n = l.matrix().nrows();
    let mut big = Array2::<C64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            big[[i, j]] = ql.matrix()[[i, j]];
            big[[i, j + n]] = qlp.matrix()[[i, j]];
            big[[i + n, j + n]] = l.matrix()[[i, j]];
        }
    }
    let e = crate::linops::expm_matrix(&big, t, crate::linops::ExpmMethod::PadeScalingSquaring)?;
    let conv = crate::linops::block(&e, n, 0, 1);
    let rho0 = vectorize(&kron(&inputs.rho_t, ancilla));
    let pl = (&p * &l).matrix().clone();
    let v = pl.dot(&conv.dot(&rho0));
    Ok(v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
}

/// Bundle used by reports: the probe damping data plus both bounds.
#[derive(Clone, Debug, Serialize)]
pub struct BoundSummary {
    pub epsilon: f64,
    pub gap: f64,
    pub k_norm: f64,
    pub p_norm: f64,
    pub memory_bound: f64,
    pub memory_term: f64,
    pub reconstruction_residual: f64,
}

/// Damping-basis reconstruction residual on the matrix units, relative to `|L|`.
pub fn max_reconstruction_residual(l: &Superoperator, basis: &DampingBasis) -> Result<f64> {
    let d = l.op_dim();
    let scale = l.frobenius_norm().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            worst = worst.max(basis.reconstruction_residual(l, &Operator::ket_bra(i, j, d))? / scale);
        }
    }
    Ok(worst)
}

pub fn bound_summary(
    probe: &Superoperator,
    coupling: &Superoperator,
    g: f64,
    ancilla: &Operator,
) -> Result<BoundSummary> {
    let inputs = bound_inputs(probe, coupling)?;
    let p_norm = induced_norm(&projection_p(&inputs.rho_t, inputs.ancilla_dim)?)?;
    let memory_bound = memory_bound(probe, coupling, g, inputs.basis.epsilon, inputs.basis.gap)?;
    let memory_term = memory_term_norm(probe, coupling, g, ancilla, 1.0)?;
    let reconstruction_residual = max_reconstruction_residual(probe, &inputs.basis)?;
    Ok(BoundSummary {
        epsilon: inputs.basis.epsilon,
        gap: inputs.basis.gap,
        k_norm: inputs.k_norm,
        p_norm,
        memory_bound,
        memory_term,
        reconstruction_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{pauli_z, plus_state, sigma_minus, sigma_plus};
    use approx::assert_abs_diff_eq;

    fn thermal_spec(nbar: f64, gamma: f64) -> LindbladSpec {
        LindbladSpec::new(pauli_z().scale(C64::new(-0.5, 0.0)))
            .with_jump(gamma * (nbar + 1.0), sigma_minus())
            .with_jump(gamma * nbar, sigma_plus())
    }

    fn nbar_at(theta: f64) -> f64 {
        1.0 / (1.0 / theta).exp_m1()
    }

    fn zz_coupling() -> Superoperator {
        commutator_superop(&kron(&pauli_z(), &pauli_z())).scale(-I)
    }

    #[test]
    fn empty_spec_gives_zero_superoperator() {
        let l = build_liouvillian(&LindbladSpec::zero(3)).unwrap();
        assert_eq!(l, Superoperator::zeros(3));
    }

    #[test]
    fn rejects_bad_specs() {
        let neg = LindbladSpec::zero(2).with_jump(-1.0, sigma_minus());
        assert!(matches!(build_liouvillian(&neg), Err(Error::NegativeRate { index: 0, .. })));
        let mismatched = LindbladSpec::zero(2).with_jump(1.0, Operator::identity(3));
        assert!(matches!(build_liouvillian(&mismatched), Err(Error::Dimension(_))));
    }

    #[test]
    fn dephasing_decays_coherence_at_twice_the_rate() {
        let kappa = 0.35;
        let l = build_liouvillian(&LindbladSpec::zero(2).with_jump(kappa, pauli_z())).unwrap();
        let t = 1.7;
        let out = l.expm(t).unwrap().apply(&Operator::ket_bra(0, 1, 2)).unwrap();
        assert_abs_diff_eq!(out.get(0, 1).re, (-2.0 * kappa * t).exp(), epsilon = 1e-13);
        assert!(out.get(0, 1).im.abs() < 1e-14);
    }

    #[test]
    fn thermal_steady_state_matches_populations() {
        let theta = 2.0;
        let nbar = nbar_at(theta);
        let phi = (0.5 / theta).tanh();
        assert_abs_diff_eq!(phi, 1.0 / (2.0 * nbar + 1.0), epsilon = 1e-15);
        let rho = steady_state(&build_liouvillian(&thermal_spec(nbar, 1.0)).unwrap()).unwrap();
        assert_abs_diff_eq!(rho.get(0, 0).re, (1.0 + phi) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.get(1, 1).re, (1.0 - phi) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi, 0.244919, epsilon = 1e-6);
    }

    #[test]
    fn zero_temperature_limit_is_ground_state() {
        let l = build_liouvillian(&thermal_spec(nbar_at(0.01), 1.0)).unwrap();
        let rho = steady_state(&l).unwrap();
        assert!(rho.max_abs_diff(&Operator::ket_bra(0, 0, 2)) < 1e-12);
    }

    #[test]
    fn dephasing_only_steady_state_is_degenerate() {
        let l = build_liouvillian(&LindbladSpec::zero(2).with_jump(1.0, pauli_z())).unwrap();
        assert!(matches!(steady_state(&l), Err(Error::SteadyStateNotUnique { zero_modes: 2 })));
    }

    #[test]
    fn dephasing_damping_spectrum() {
        let gamma = 0.8;
        let l = build_liouvillian(&LindbladSpec::zero(2).with_jump(gamma, pauli_z())).unwrap();
        let basis = damping_basis(&l).unwrap();
        let mut re: Vec<f64> = basis.spectrum.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        for (a, b) in re.iter().zip([-2.0 * gamma, -2.0 * gamma, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(basis.zero_modes, 2);
        assert_abs_diff_eq!(basis.gap, 2.0 * gamma, epsilon = 1e-12);
        assert!(basis.epsilon >= 1.0 - 1e-12);
    }

    #[test]
    fn thermal_damping_basis() {
        for gamma in [1.0, 3.0] {
            let l = build_liouvillian(&thermal_spec(nbar_at(2.0), gamma)).unwrap();
            let basis = damping_basis(&l).unwrap();
            assert_eq!(basis.zero_modes, 1);
            assert!(basis.spectrum.eigenvalues[0].norm() < 1e-10);
            // Population relaxation sets the gap: gamma (2 nbar + 1) / 2 for coherences.
            let c = 2.0 * nbar_at(2.0) + 1.0;
            assert_abs_diff_eq!(basis.gap, gamma * c / 2.0, epsilon = 1e-10);
            assert!(basis.epsilon >= 1.0);
            assert!(max_reconstruction_residual(&l, &basis).unwrap() < 1e-8);
        }
    }

    #[test]
    fn projections_are_complementary_idempotents() {
        let rho_t = steady_state(&build_liouvillian(&thermal_spec(nbar_at(2.0), 1.0)).unwrap()).unwrap();
        let p = projection_p(&rho_t, 2).unwrap();
        let q = projection_q(&rho_t, 2).unwrap();
        assert!((&p * &p).max_abs_diff(&p) < 1e-12);
        assert!((&q * &q).max_abs_diff(&q) < 1e-12);
        assert!((&p * &q).max_abs_diff(&Superoperator::zeros(4)) < 1e-12);
    }

    #[test]
    fn memory_bound_behaviour() {
        let k = zz_coupling();
        let l = build_liouvillian(&thermal_spec(nbar_at(2.0), 100.0)).unwrap();
        let basis = damping_basis(&l).unwrap();
        assert_eq!(memory_bound(&l, &k, 0.0, basis.epsilon, basis.gap).unwrap(), 0.0);

        let mut previous = f64::INFINITY;
        for xi in [100.0, 200.0, 400.0] {
            let l = build_liouvillian(&thermal_spec(nbar_at(2.0), xi)).unwrap();
            let basis = damping_basis(&l).unwrap();
            let b = memory_bound(&l, &k, 1.0, basis.epsilon, basis.gap).unwrap();
            assert!(b > 0.0 && b.is_finite() && b < previous);
            previous = b;
        }

        let eps = 1.5;
        let gap = eps * induced_norm(&k).unwrap();
        assert!(matches!(memory_bound(&l, &k, 1.0, eps, gap), Err(Error::BoundInapplicable { .. })));
    }

    #[test]
    fn memory_term_below_bound() {
        let k = zz_coupling();
        for xi in [50.0, 400.0] {
            let l = build_liouvillian(&thermal_spec(nbar_at(2.0), xi)).unwrap();
            let s = bound_summary(&l, &k, 1.0, &plus_state()).unwrap();
            assert!(s.memory_term <= s.memory_bound, "{s:?}");
            assert!(s.memory_term > 0.0);
        }
    }

    #[test]
    fn decay_bound_at_zero_and_large_separation() {
        let k = zz_coupling();
        let l = build_liouvillian(&thermal_spec(nbar_at(2.0), 400.0)).unwrap();
        let basis = damping_basis(&l).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5 / basis.gap).collect();
        let report = decay_bound_check(&l, &k, 1.0, &grid).unwrap();
        assert!(report.all_hold(1e-9), "{report:?}");
        assert!(report.rows[0].lhs <= basis.epsilon + 1e-9);
        assert!(report.rows.last().unwrap().lhs < report.rows[1].lhs);

        let free = decay_bound_check(&l, &k, 0.0, &grid).unwrap();
        for row in &free.rows {
            let expected = basis.epsilon * (-basis.gap * row.t).exp();
            assert!(row.lhs <= expected + 1e-9);
        }
    }
}
