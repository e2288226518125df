//! Phase accumulation on the ancilla and the quantum Fisher information of
//! its output state.
//!
//! The ancilla couples through `A = sigma_z`, with eigenvalue `+1` on `|0>` and
//! `-1` on `|1>`. Conditioning the joint generator on the ancilla matrix unit
//! `|a><b|` gives a probe-only "sector" generator; the (0,1) sector produces
//! the factor `Gamma` by which every probe multiplies the ancilla coherence.

use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{build_liouvillian, dissipator, LindbladSpec};
use crate::linops::{
    block, eigh, expm_matrix, left_mult, pauli_z, plus_state, right_mult, trace_distance,
    vectorize, ExpmMethod, MatrixExp, Operator, Superoperator, C64, I, ZERO,
};
use crate::models::{
    gibbs_state, gibbs_state_derivative, probe_liouvillian, probe_noise,
    thermal_quantities, QubitThermalModel,
};

/// Tolerance on the Hermiticity of QFI inputs.
pub const QFI_HERMITIAN_TOL: f64 = 1e-9;
/// Eigenvalue cutoff in the generic QFI sum.
pub const QFI_EIGEN_CUTOFF: f64 = 1e-12;
/// Clustering tolerance for eigenvalue differences of `A`.
pub const DELTA_CLUSTER_TOL: f64 = 1e-9;

/// Initial probe state. `Thermal` is the steady state `rho_T` and carries its
/// own temperature dependence; a `Fixed` state is held constant when
/// differentiating with respect to theta.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum ProbeInitial {
    #[default]
    Thermal,
    Fixed(Operator),
}

impl ProbeInitial {
    pub fn state(&self, theta: f64) -> Result<Operator> {
        match self {
            ProbeInitial::Thermal => gibbs_state(theta),
            ProbeInitial::Fixed(rho) => Ok(rho.clone()),
        }
    }

    pub fn derivative(&self, theta: f64) -> Result<Operator> {
        match self {
            ProbeInitial::Thermal => gibbs_state_derivative(theta),
            ProbeInitial::Fixed(rho) => Ok(Operator::zeros(rho.dim())),
        }
    }

    fn validate(&self) -> Result<()> {
        if let ProbeInitial::Fixed(rho) = self {
            if rho.dim() != 2 {
                return Err(Error::Dimension("probe initial state must be 2x2".into()));
            }
            rho.check_density()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeConfig {
    pub model: QubitThermalModel,
    pub n_probes: usize,
    pub ancilla_initial: Operator,
    pub probe_initial: ProbeInitial,
}

impl SchemeConfig {
    /// `N` probes in `rho_T` and the ancilla in `|+><+|`.
    pub fn new(model: QubitThermalModel, n_probes: usize) -> Self {
        Self { model, n_probes, ancilla_initial: plus_state(), probe_initial: ProbeInitial::Thermal }
    }

    pub fn with_ancilla(mut self, sigma: Operator) -> Self {
        self.ancilla_initial = sigma;
        self
    }

    pub fn with_probe(mut self, probe: ProbeInitial) -> Self {
        self.probe_initial = probe;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_probes == 0 {
            return Err(Error::InvalidParameter("n_probes must be at least 1".into()));
        }
        if self.ancilla_initial.dim() != 2 {
            return Err(Error::Dimension("ancilla initial state must be 2x2".into()));
        }
        self.ancilla_initial.check_density()?;
        self.probe_initial.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaValue {
    #[serde(serialize_with = "ser_complex")]
    pub value: C64,
    #[serde(serialize_with = "ser_complex")]
    pub dvalue_dtheta: C64,
}

fn ser_complex<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("Complex", 2)?;
    st.serialize_field("re", &z.re)?;
    st.serialize_field("im", &z.im)?;
    st.end()
}

/// First-order forward-mode dual number over the complex field.
#[derive(Clone, Copy, Debug)]
struct Dual {
    v: C64,
    d: C64,
}

impl Dual {
    fn constant(v: C64) -> Self {
        Self { v, d: ZERO }
    }

    fn real(v: f64, d: f64) -> Self {
        Self { v: C64::new(v, 0.0), d: C64::new(d, 0.0) }
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        Self { v: r, d: self.d / (2.0 * r) }
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        Self { v: e, d: self.d * e }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Mul<Dual> for C64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self * o.v, d: self * o.d }
    }
}

/// Closed-form `Gamma` for the thermal probe state.
pub fn gamma_analytic(model: &QubitThermalModel) -> Result<GammaValue> {
    gamma_analytic_with(model, &ProbeInitial::Thermal)
}

/// Closed-form `Gamma` for an arbitrary probe state. Only the population
/// difference `d0 = rho_00 - rho_11` enters.
///
/// With `c = 2 nbar + 1`, the populations under the (0,1) sector generator
/// obey a second-order linear equation whose characteristic roots are
/// `omega_± = (-c xi ± sqrt(Delta)) / 2`, `Delta = c^2 xi^2 - 8 i xi - 16`.
/// Then `Gamma = A e^{omega_+} + (1 - A) e^{omega_-}` with
/// `A = (1 + c xi / sqrt(Delta) - 4 i d0 / sqrt(Delta)) / 2`. The expression
/// is symmetric under `sqrt(Delta) -> -sqrt(Delta)`, so the principal branch
/// is safe. `omega_+` is taken from the root product `omega_+ omega_- = 4 + 2 i xi`
/// to avoid cancellation at large `xi`. The theta-derivative is propagated
/// exactly with dual numbers seeded at `c` and `d0`.
pub fn gamma_analytic_with(model: &QubitThermalModel, probe: &ProbeInitial) -> Result<GammaValue> {
    model.validate()?;
    probe.validate()?;
    let tq = thermal_quantities(model.theta)?;
    let c = Dual::real(1.0 / tq.phi, -tq.dphi_dtheta / (tq.phi * tq.phi));
    let d0 = match probe {
        ProbeInitial::Thermal => Dual::real(tq.phi, tq.dphi_dtheta),
        ProbeInitial::Fixed(rho) => Dual::constant(rho.get(0, 0) - rho.get(1, 1)),
    };
    let xi = Dual::real(model.xi, 0.0);
    let two = Dual::real(2.0, 0.0);
    let half = Dual::real(0.5, 0.0);
    let cxi = c * xi;
    let delta = cxi * cxi - C64::new(0.0, 8.0) * xi - Dual::real(16.0, 0.0);
    let sq = delta.sqrt();
    let omega_minus = (-cxi - sq) / two;
    let omega_plus = (Dual::real(4.0, 0.0) + C64::new(0.0, 2.0) * xi) / omega_minus;
    let a = half * (Dual::real(1.0, 0.0) + cxi / sq - C64::new(0.0, 4.0) * d0 / sq);
    let gamma = a * omega_plus.exp() + (Dual::real(1.0, 0.0) - a) * omega_minus.exp();
    let out = GammaValue { value: gamma.v, dvalue_dtheta: gamma.d };
    check_contraction(&out)?;
    Ok(out)
}

fn check_contraction(g: &GammaValue) -> Result<()> {
    if !(g.value.re.is_finite() && g.value.im.is_finite() && g.dvalue_dtheta.norm().is_finite()) {
        return Err(Error::NonFinite("Gamma"));
    }
    if g.value.norm() > 1.0 + 1e-10 {
        return Err(Error::InvalidParameter(format!("|Gamma| = {} exceeds 1", g.value.norm())));
    }
    Ok(())
}

/// `Gamma` in the infinitely strong thermalization limit, `exp(-2 i phi_T)`.
pub fn gamma_ideal_limit(theta: f64) -> Result<GammaValue> {
    let tq = thermal_quantities(theta)?;
    let value = C64::new(0.0, -2.0 * tq.phi).exp();
    Ok(GammaValue { value, dvalue_dtheta: C64::new(0.0, -2.0 * tq.dphi_dtheta) * value })
}

/// Ancilla matrix unit labelling a sector generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector {
    S00,
    S01,
    S10,
    S11,
}

impl Sector {
    /// Eigenvalues of `A` on the bra and ket: `+1` for `|0>`, `-1` for `|1>`.
    fn labels(self) -> (f64, f64) {
        match self {
            Sector::S00 => (1.0, 1.0),
            Sector::S01 => (1.0, -1.0),
            Sector::S10 => (-1.0, 1.0),
            Sector::S11 => (-1.0, -1.0),
        }
    }
}

/// Probe generator conditioned on an ancilla sector:
/// `L_S + L_noise - i (a sigma_z rho - b rho sigma_z)`.
pub fn sector_generator(model: &QubitThermalModel, sector: Sector) -> Result<Superoperator> {
    let spec = probe_liouvillian(model)?.merge(&probe_noise(model)?)?;
    let base = build_liouvillian(&spec)?;
    let (a, b) = sector.labels();
    let z = pauli_z();
    let coupling = &left_mult(&z).scale_real(a) - &right_mult(&z).scale_real(b);
    Ok(&base + &coupling.scale(-I))
}

/// `tr[exp(L^(ab)) rho]` for a probe state `rho`.
pub fn sector_trace(model: &QubitThermalModel, sector: Sector, rho: &Operator) -> Result<C64> {
    Ok(sector_generator(model, sector)?.expm(1.0)?.apply(rho)?.trace())
}

/// `Gamma = tr[exp(L^(01)) rho]` by direct exponentiation. The derivative
/// combines the Fréchet derivative of the exponential along
/// `dL/dtheta = xi (dnbar/dtheta) (D[sigma_-] + D[sigma_+])`, read off the
/// block exponential `exp([[L, L'], [0, L]])`, with the change of the probe
/// state.
pub fn gamma_numeric(model: &QubitThermalModel, probe: &ProbeInitial) -> Result<GammaValue> {
    model.validate()?;
    probe.validate()?;
    let l = sector_generator(model, Sector::S01)?;
    let dn = crate::models::dnbar_dtheta(model.theta)?;
    let dl = (&dissipator(&crate::linops::sigma_minus()) + &dissipator(&crate::linops::sigma_plus()))
        .scale_real(model.xi * dn);
    let n = l.matrix().nrows();
    let mut big = Array2::<C64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            big[[i, j]] = l.matrix()[[i, j]];
            big[[i + n, j + n]] = l.matrix()[[i, j]];
            big[[i, j + n]] = dl.matrix()[[i, j]];
        }
    }
    let e = expm_matrix(&big, 1.0, ExpmMethod::PadeScalingSquaring)?;
    let prop = block(&e, n, 0, 0);
    let frechet = block(&e, n, 0, 1);
    let rho = vectorize(&probe.state(model.theta)?);
    let drho = vectorize(&probe.derivative(model.theta)?);
    // tr X = sum of the diagonal positions i + i d of vec(X).
    let d = l.op_dim();
    let tr = |v: &ndarray::Array1<C64>| (0..d).map(|i| v[i + i * d]).sum::<C64>();
    let value = tr(&prop.dot(&rho));
    let dvalue = tr(&frechet.dot(&rho)) + tr(&prop.dot(&drho));
    let out = GammaValue { value, dvalue_dtheta: dvalue };
    check_contraction(&out)?;
    Ok(out)
}

/// `Gamma` for a config, from the closed form.
pub fn gamma_for(config: &SchemeConfig) -> Result<GammaValue> {
    gamma_analytic_with(&config.model, &config.probe_initial)
}

/// Ancilla output state for a given `Gamma`:
/// `[[s00, s01 Gamma^N e^{-2 eta}], [c.c., s11]]`.
pub fn output_state_from_gamma(sigma: &Operator, gamma: C64, n: usize, eta: f64) -> Operator {
    let damp = (-2.0 * eta).exp();
    let coh = sigma.get(0, 1) * gamma.powu(n as u32) * damp;
    Operator::from_rows(&[&[sigma.get(0, 0), coh], &[coh.conj(), sigma.get(1, 1)]])
}

pub fn output_state(config: &SchemeConfig) -> Result<Operator> {
    config.validate()?;
    let g = gamma_for(config)?;
    Ok(output_state_from_gamma(&config.ancilla_initial, g.value, config.n_probes, config.model.eta))
}

/// `d rho_A / d theta` of the output state.
pub fn output_state_derivative(config: &SchemeConfig) -> Result<Operator> {
    config.validate()?;
    let g = gamma_for(config)?;
    let n = config.n_probes;
    let damp = (-2.0 * config.model.eta).exp();
    let dcoh = config.ancilla_initial.get(0, 1)
        * C64::new(n as f64, 0.0)
        * g.value.powu(n as u32 - 1)
        * g.dvalue_dtheta
        * damp;
    Ok(Operator::from_rows(&[&[ZERO, dcoh], &[dcoh.conj(), ZERO]]))
}

/// `N^2 a_gap^2 |dphi|^2`.
pub fn qfi_ideal(n: usize, a_gap: f64, dphi: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if !(a_gap.is_finite() && a_gap > 0.0) {
        return Err(Error::InvalidParameter(format!("a_gap must be positive, got {a_gap}")));
    }
    let nf = n as f64;
    Ok(nf * nf * a_gap * a_gap * dphi * dphi)
}

/// `1 / sqrt(nu F)`, the Cramér-Rao precision after `nu` repetitions.
pub fn cramer_rao(qfi: f64, nu: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    if !(qfi.is_finite() && qfi >= 0.0) {
        return Err(Error::InvalidParameter(format!("QFI must be nonnegative, got {qfi}")));
    }
    Ok(1.0 / (nu * qfi).sqrt())
}

/// QFI of the ancilla output state in closed form.
///
/// `F = 4 N^2 |s01|^2 |G|^{2N-2} |G'|^2 e^{-4 eta}
///    + 4 N^2 |s01|^4 |G|^{4N-2} (|G|')^2 e^{-8 eta} / (s00 s11 - |s01|^2 |G|^{2N} e^{-4 eta})`.
///
/// When the denominator vanishes the state is pure along the whole family
/// and the second term is replaced by its limit, zero.
pub fn qfi_closed_form(sigma: &Operator, gamma: &GammaValue, n: usize, eta: f64) -> f64 {
    let nf = n as f64;
    let s01 = sigma.get(0, 1).norm_sqr();
    let g2 = gamma.value.norm_sqr();
    let gabs = g2.sqrt();
    let dg2 = gamma.dvalue_dtheta.norm_sqr();
    let e4 = (-4.0 * eta).exp();
    let first = 4.0 * nf * nf * s01 * g2.powf(nf - 1.0) * dg2 * e4;

    let dabs = if gabs > 0.0 { (gamma.value.conj() * gamma.dvalue_dtheta).re / gabs } else { 0.0 };
    let numerator = 4.0 * nf * nf * s01 * s01 * gabs.powf(4.0 * nf - 2.0) * dabs * dabs * e4 * e4;
    let denominator = (sigma.get(0, 0) * sigma.get(1, 1)).re - s01 * g2.powf(nf) * e4;
    let second = if numerator == 0.0 || denominator <= 1e-15 { 0.0 } else { numerator / denominator };
    first + second
}

pub fn qfi_example_noise(config: &SchemeConfig) -> Result<f64> {
    config.validate()?;
    let g = gamma_for(config)?;
    Ok(qfi_closed_form(&config.ancilla_initial, &g, config.n_probes, config.model.eta))
}

/// `2 sum_{p_k + p_l > cutoff} |<k|drho|l>|^2 / (p_k + p_l)`.
pub fn qfi_generic(rho: &Operator, drho: &Operator) -> Result<f64> {
    if rho.dim() != drho.dim() {
        return Err(Error::Dimension("rho and drho differ in dimension".into()));
    }
    let defect = rho.hermiticity_defect();
    if defect > QFI_HERMITIAN_TOL {
        return Err(Error::NotHermitian { what: "rho", defect });
    }
    let defect = drho.hermiticity_defect();
    if defect > QFI_HERMITIAN_TOL {
        return Err(Error::NotHermitian { what: "drho", defect });
    }
    let (p, v) = eigh(&rho.hermitian_part())?;
    let vd = v.t().mapv(|z| z.conj());
    let dm = vd.dot(drho.matrix()).dot(&v);
    let mut f = 0.0;
    for k in 0..p.len() {
        for l in 0..p.len() {
            let s = p[k] + p[l];
            if s > QFI_EIGEN_CUTOFF {
                f += 2.0 * dm[[k, l]].norm_sqr() / s;
            }
        }
    }
    Ok(f)
}

/// The noise-dressed ancilla state and its eigendecomposition.
#[derive(Clone, Debug)]
pub struct NoiseDressedState {
    pub delta: Operator,
    pub eigvals: Vec<f64>,
    /// Eigenvectors as columns, matching `eigvals`.
    pub eigvecs: Array2<C64>,
}

/// Splits `x` into the pieces `sum_{a_mu - a_nu = Delta} P_mu x P_nu`, one per
/// distinct eigenvalue difference of `A`.
fn secular_components(x: &Operator, a_vals: &[f64], a_vecs: &Array2<C64>) -> Vec<Operator> {
    let d = a_vals.len();
    let mut diffs: Vec<f64> = Vec::new();
    for &am in a_vals {
        for &an in a_vals {
            let delta = am - an;
            if !diffs.iter().any(|&e| (e - delta).abs() < DELTA_CLUSTER_TOL) {
                diffs.push(delta);
            }
        }
    }
    let vd = a_vecs.t().mapv(|z| z.conj());
    let xt = vd.dot(x.matrix()).dot(a_vecs);
    diffs
        .iter()
        .map(|&delta| {
            let mut part = Array2::<C64>::zeros((d, d));
            for m in 0..d {
                for n in 0..d {
                    if ((a_vals[m] - a_vals[n]) - delta).abs() < DELTA_CLUSTER_TOL {
                        part[[m, n]] = xt[[m, n]];
                    }
                }
            }
            Operator::new(a_vecs.dot(&part).dot(&vd)).expect("square")
        })
        .collect()
}

/// Generator of the ancilla noise after the rotating-wave approximation in
/// the frame of `A`: each jump splits into its secular components and the
/// noise Hamiltonian keeps only the part commuting with `A`.
pub fn rwa_noise_generator(a: &Operator, noise: &LindbladSpec) -> Result<Superoperator> {
    let defect = a.hermiticity_defect();
    if defect > QFI_HERMITIAN_TOL {
        return Err(Error::NotHermitian { what: "A", defect });
    }
    noise.validate()?;
    if noise.dim() != a.dim() {
        return Err(Error::Dimension("noise spec and A differ in dimension".into()));
    }
    let (vals, vecs) = eigh(&a.hermitian_part())?;
    let h_parts = secular_components(&noise.hamiltonian, &vals, &vecs);
    // The first difference enumerated is a_0 - a_0 = 0.
    let mut spec = LindbladSpec::new(h_parts[0].hermitian_part());
    for jump in &noise.jumps {
        for part in secular_components(&jump.operator, &vals, &vecs) {
            spec = spec.with_jump(jump.rate, part);
        }
    }
    build_liouvillian(&spec)
}

pub fn noise_dressed_state(
    a: &Operator,
    noise: &LindbladSpec,
    ancilla_initial: &Operator,
) -> Result<NoiseDressedState> {
    ancilla_initial.check_density()?;
    let l = rwa_noise_generator(a, noise)?;
    let delta = l.expm(1.0)?.apply(ancilla_initial)?.hermitian_part();
    let (eigvals, eigvecs) = eigh(&delta)?;
    let total: f64 = eigvals.iter().sum();
    if eigvals.iter().any(|&p| p < -1e-10) || (total - 1.0).abs() > 1e-10 {
        return Err(Error::NotDensity(format!("dressed state spectrum {eigvals:?}")));
    }
    Ok(NoiseDressedState { delta, eigvals, eigvecs })
}

/// `2 N^2 |dphi|^2 sum_{k != l} p_{k,l} |<phi_k|A|phi_l>|^2` with
/// `p_{k,l} = (p_k - p_l)^2 / (p_k + p_l)` and `p_{k,l} = 0` when both vanish.
pub fn general_noise_qfi(
    a: &Operator,
    noise: &LindbladSpec,
    ancilla_initial: &Operator,
    n: usize,
    dphi: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let dressed = noise_dressed_state(a, noise, ancilla_initial)?;
    let v = &dressed.eigvecs;
    let am = v.t().mapv(|z| z.conj()).dot(a.matrix()).dot(v);
    let p = &dressed.eigvals;
    let mut sum = 0.0;
    for k in 0..p.len() {
        for l in 0..p.len() {
            let s = p[k] + p[l];
            if k != l && s > QFI_EIGEN_CUTOFF {
                sum += (p[k] - p[l]).powi(2) / s * am[[k, l]].norm_sqr();
            }
        }
    }
    let nf = n as f64;
    Ok(2.0 * nf * nf * dphi * dphi * sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveAncillaRow {
    pub xi: f64,
    pub g_over_lambda: f64,
    pub deviation: f64,
}

/// Trace distance between the single-probe joint evolution, reduced to the
/// ancilla, and the effective unitary `exp(-i phi_T A) rho_A exp(i phi_T A)`.
///
/// The comparison isolates the memory effect, so the ancilla noise is
/// switched off; probe noise is kept since it does not reach the ancilla.
pub fn effective_ancilla_check(
    model: &QubitThermalModel,
    xi_grid: &[f64],
    ancilla_initial: &Operator,
) -> Result<Vec<EffectiveAncillaRow>> {
    ancilla_initial.check_density()?;
    let mut rows = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let m = model.with_xi(xi).with_eta(0.0);
        m.validate()?;
        let sys = crate::oracle::build_joint(&m, 1, &ProbeInitial::Thermal, ancilla_initial)?;
        let actual = crate::oracle::evolve_and_reduce(&sys, 1.0)?;
        let phi = thermal_quantities(m.theta)?.phi;
        let u = pauli_z().scale(C64::new(0.0, -phi)).expm(1.0)?;
        let expected = &(&u * ancilla_initial) * &u.dagger();
        let basis = crate::lindblad::damping_basis(&build_liouvillian(&probe_liouvillian(&m)?)?)?;
        rows.push(EffectiveAncillaRow {
            xi,
            g_over_lambda: 1.0 / basis.gap,
            deviation: trace_distance(&actual, &expected)?,
        });
    }
    Ok(rows)
}

/// `2 |s01|`, the l1 coherence of a qubit state.
pub fn l1_coherence(sigma: &Operator) -> f64 {
    2.0 * sigma.get(0, 1).norm()
}

/// Qubit state with populations `(p0, 1 - p0)` and coherence `s01`.
pub fn qubit_state(p0: f64, s01: C64) -> Result<Operator> {
    let rho = Operator::from_rows(&[&[C64::new(p0, 0.0), s01], &[s01.conj(), C64::new(1.0 - p0, 0.0)]]);
    rho.check_density()?;
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::ONE;
    use crate::models::{central_difference, richardson_derivative};
    use approx::assert_abs_diff_eq;

    fn model(theta: f64, xi: f64, eta: f64) -> QubitThermalModel {
        QubitThermalModel::new(theta, xi, eta, 0.0).unwrap()
    }

    #[test]
    fn gamma_large_xi_approaches_phase() {
        let g = gamma_analytic(&model(2.0, 1e6, 0.0)).unwrap();
        let lim = gamma_ideal_limit(2.0).unwrap();
        assert!((g.value - lim.value).norm() < 1e-4);
        assert!((g.dvalue_dtheta - lim.dvalue_dtheta).norm() < 1e-4);
    }

    #[test]
    fn gamma_analytic_matches_numeric() {
        for &(theta, xi) in &[(2.0, 400.0), (0.5, 50.0), (5.0, 1e4), (1.3, 10.0)] {
            let m = model(theta, xi, 0.1);
            let a = gamma_analytic(&m).unwrap();
            let b = gamma_numeric(&m, &ProbeInitial::Thermal).unwrap();
            assert!((a.value - b.value).norm() < 1e-10, "{a:?} {b:?}");
            assert!((a.dvalue_dtheta - b.dvalue_dtheta).norm() < 1e-9, "{a:?} {b:?}");
        }
    }

    #[test]
    fn gamma_derivative_matches_richardson() {
        let m = model(2.0, 300.0, 0.0);
        let exact = gamma_analytic(&m).unwrap().dvalue_dtheta;
        let f_re = |t: f64| gamma_analytic(&m.with_theta(t)).unwrap().value.re;
        let f_im = |t: f64| gamma_analytic(&m.with_theta(t)).unwrap().value.im;
        let h = 1e-3 * m.theta;
        assert_abs_diff_eq!(richardson_derivative(f_re, 2.0, h), exact.re, epsilon = 1e-9);
        assert_abs_diff_eq!(richardson_derivative(f_im, 2.0, h), exact.im, epsilon = 1e-9);
        let fd = central_difference(f_im, 2.0, 1e-6 * 2.0);
        assert!((fd - exact.im).abs() < 1e-7);
    }

    #[test]
    fn gamma_for_fixed_probe_matches_numeric() {
        let rho = qubit_state(0.3, C64::new(0.1, -0.2)).unwrap();
        let m = model(1.5, 120.0, 0.0);
        let probe = ProbeInitial::Fixed(rho);
        let a = gamma_analytic_with(&m, &probe).unwrap();
        let b = gamma_numeric(&m, &probe).unwrap();
        assert!((a.value - b.value).norm() < 1e-10);
        assert!((a.dvalue_dtheta - b.dvalue_dtheta).norm() < 1e-9);
    }

    #[test]
    fn diagonal_sectors_preserve_trace() {
        let m = model(2.0, 400.0, 0.1);
        let rho = gibbs_state(2.0).unwrap();
        for s in [Sector::S00, Sector::S11] {
            assert!((sector_trace(&m, s, &rho).unwrap() - ONE).norm() < 1e-12);
        }
        let g01 = sector_trace(&m, Sector::S01, &rho).unwrap();
        let g10 = sector_trace(&m, Sector::S10, &rho).unwrap();
        assert!((g01 - g10.conj()).norm() < 1e-12);
    }

    #[test]
    fn gamma_independent_of_probe_dephasing_and_coherence() {
        let base = gamma_numeric(&model(2.0, 400.0, 0.0), &ProbeInitial::Thermal).unwrap();
        for kappa in [0.5, 2.0] {
            let g = gamma_numeric(&model(2.0, 400.0, 0.0).with_kappa_s(kappa), &ProbeInitial::Thermal).unwrap();
            assert!((g.value - base.value).norm() < 1e-12);
        }
        let m = model(2.0, 400.0, 0.0);
        let reference = gamma_numeric(&m, &ProbeInitial::Fixed(qubit_state(0.6, ZERO).unwrap())).unwrap();
        for phase in [0.0, 1.0, 2.5] {
            let rho = qubit_state(0.6, C64::from_polar(0.3, phase)).unwrap();
            let g = gamma_numeric(&m, &ProbeInitial::Fixed(rho)).unwrap();
            assert!((g.value - reference.value).norm() < 1e-12);
        }
    }

    #[test]
    fn output_state_limits() {
        let m = model(2.0, 1e6, 0.0);
        let phi = thermal_quantities(2.0).unwrap().phi;
        for n in [1usize, 5, 20] {
            let out = output_state(&SchemeConfig::new(m, n)).unwrap();
            let expected = C64::new(0.0, -2.0 * n as f64 * phi).exp() * 0.5;
            assert!((out.get(0, 1) - expected).norm() < 1e-4 * n as f64);
        }
        let diag = Operator::real_diag(&[0.3, 0.7]);
        let out = output_state(&SchemeConfig::new(model(2.0, 400.0, 0.2), 7).with_ancilla(diag.clone())).unwrap();
        assert_eq!(out, diag);
    }

    #[test]
    fn ideal_qfi_and_precision() {
        let dphi = thermal_quantities(2.0).unwrap().dphi_dtheta;
        let f1 = qfi_ideal(1, 2.0, dphi).unwrap();
        let sech = 1.0 / 0.25f64.cosh();
        assert_abs_diff_eq!(f1, 4.0 * (sech * sech / 8.0).powi(2), epsilon = 1e-15);
        assert!((f1 - 0.0552268).abs() < 1e-7);
        assert!((f1 / thermal_quantities(2.0).unwrap().f_th - 3.76006).abs() < 1e-5);
        assert_abs_diff_eq!(qfi_ideal(2, 2.0, dphi).unwrap(), 4.0 * f1, epsilon = 1e-15);
        let a = cramer_rao(f1, 10.0).unwrap();
        let b = cramer_rao(f1, 40.0).unwrap();
        assert_abs_diff_eq!(b, a / 2.0, epsilon = 1e-12);
        assert!(qfi_ideal(1, 0.0, dphi).is_err());
        assert!(cramer_rao(f1, 0.0).is_err());
    }

    #[test]
    fn closed_form_limits() {
        let m = model(2.0, 1e6, 0.1);
        let tq = thermal_quantities(2.0).unwrap();
        let f = qfi_example_noise(&SchemeConfig::new(m, 1)).unwrap();
        assert!((f / tq.f_th - 2.52044).abs() < 1e-4);
        let zero = qfi_example_noise(&SchemeConfig::new(m, 3).with_ancilla(Operator::real_diag(&[0.5, 0.5]))).unwrap();
        assert_eq!(zero, 0.0);
        let pure = qfi_example_noise(&SchemeConfig::new(m, 3).with_ancilla(Operator::real_diag(&[1.0, 0.0]))).unwrap();
        assert_eq!(pure, 0.0);
    }

    #[test]
    fn generic_qfi_pure_rotation() {
        // Fidelity oracle: F = 8 (1 - |<psi_t|psi_{t+h}>|) / h^2 for pure states.
        let psi = |t: f64| {
            let h = 1.0 / 2f64.sqrt();
            [C64::new(0.0, -t).exp() * h, C64::new(0.0, t).exp() * h]
        };
        let t = 0.4;
        let h = 1e-4;
        let (a, b) = (psi(t), psi(t + h));
        let overlap = (a[0].conj() * b[0] + a[1].conj() * b[1]).norm();
        let oracle = 8.0 * (1.0 - overlap) / (h * h);
        let rho = Operator::projector(&psi(t));
        let drho = (&Operator::projector(&psi(t + 1e-6)) - &Operator::projector(&psi(t - 1e-6))).scale(C64::new(0.5e6, 0.0));
        let f = qfi_generic(&rho, &drho).unwrap();
        assert!((f - 4.0).abs() < 1e-6, "{f} {rho:?} {drho:?}");
        assert!((oracle - 4.0).abs() < 1e-4);
        assert_eq!(qfi_generic(&rho, &Operator::zeros(2)).unwrap(), 0.0);
        assert!(qfi_generic(&Operator::ket_bra(0, 1, 2), &Operator::zeros(2)).is_err());
    }

    #[test]
    fn closed_form_matches_generic() {
        let cfg = SchemeConfig::new(model(2.0, 400.0, 0.1), 50);
        let rho = output_state(&cfg).unwrap();
        let drho = output_state_derivative(&cfg).unwrap();
        let a = qfi_example_noise(&cfg).unwrap();
        let b = qfi_generic(&rho, &drho).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.max(1e-300), "{a} {b}");
    }

    #[test]
    fn general_noise_dephasing_reproduces_example() {
        let eta = 0.2;
        let dphi = thermal_quantities(2.0).unwrap().dphi_dtheta;
        let noise = LindbladSpec::zero(2).with_jump(eta, pauli_z());
        let dressed = noise_dressed_state(&pauli_z(), &noise, &plus_state()).unwrap();
        assert_abs_diff_eq!(dressed.delta.get(0, 1).re, 0.5 * (-2.0 * eta).exp(), epsilon = 1e-13);
        for n in [1usize, 7, 30] {
            let f = general_noise_qfi(&pauli_z(), &noise, &plus_state(), n, dphi).unwrap();
            let expected = 4.0 * (n * n) as f64 * dphi * dphi * (-4.0 * eta).exp();
            assert!((f - expected).abs() < 1e-12 * expected.max(1.0));
        }
        let clean = general_noise_qfi(&pauli_z(), &LindbladSpec::zero(2), &plus_state(), 3, dphi).unwrap();
        assert!((clean - qfi_ideal(3, 2.0, dphi).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn general_noise_amplitude_damping_ratio_is_n_independent() {
        let dphi = thermal_quantities(2.0).unwrap().dphi_dtheta;
        let noise = LindbladSpec::zero(2)
            .with_jump(0.15, crate::linops::sigma_minus())
            .with_jump(0.05, pauli_z());
        let ratios: Vec<f64> = [1usize, 7, 30]
            .iter()
            .map(|&n| general_noise_qfi(&pauli_z(), &noise, &plus_state(), n, dphi).unwrap() / qfi_ideal(n, 2.0, dphi).unwrap())
            .collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-12 && *r < 1.0 && *r > 0.0));
        assert!(general_noise_qfi(&Operator::ket_bra(0, 1, 2), &noise, &plus_state(), 1, dphi).is_err());
    }

    #[test]
    fn effective_ancilla_deviation_shrinks() {
        let m = QubitThermalModel::default();
        let rows = effective_ancilla_check(&m, &[1e2, 1e3, 1e4], &plus_state()).unwrap();
        assert!(rows[0].deviation > rows[1].deviation && rows[1].deviation > rows[2].deviation);
        assert!(rows[2].deviation < 1e-3);
        let diag = Operator::real_diag(&[0.8, 0.2]);
        for r in effective_ancilla_check(&m, &[1e2, 1e3], &diag).unwrap() {
            assert!(r.deviation < 1e-12);
        }
    }
}
