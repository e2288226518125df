//! Command-line front end.
//!
//! Settings resolve in the order command-line flag, then config file, then
//! built-in default. The config file is TOML whose keys are read in dotted
//! form (`model.theta`, `sweep.xi`, `output.format`, ...).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{
    bound_summary, build_liouvillian, damping_basis, decay_bound_check,
};
use crate::linops::{plus_state, trace_distance, C64};
use crate::models::{ancilla_noise, coupling_superoperator, probe_liouvillian, thermal_quantities, QubitThermalModel};
use crate::oracle::{build_joint, evolve_and_reduce};
use crate::scheme::{
    gamma_analytic, gamma_ideal_limit, general_noise_qfi, output_state, qfi_closed_form,
    qfi_example_noise, qfi_ideal, qubit_state, GammaValue, ProbeInitial, SchemeConfig,
};

/// Default N_max threshold. With `tau` fixed here, the largest `N` whose QFI
/// stays above `(1 - tau)` times the ideal-limit value is 435 at xi = 400,
/// theta = 2, eta = 0.1. The other xi values are not used in the calibration.
pub const DEFAULT_TAU: f64 = 0.8651;
/// Oracle agreement threshold in trace distance.
pub const ORACLE_TOL: f64 = 1e-7;
/// Slack allowed on the inequality checks of the bounds report.
pub const BOUND_SLACK: f64 = 1e-9;
/// Scan limit for the N_max search.
pub const NMAX_SCAN_LIMIT: usize = 100_000_000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hsthermo", version, about = "Heisenberg-scaling thermometry with an ancilla: sweeps, N_max, bounds and oracle checks")]
pub struct Cli {
    /// TOML config file with dotted keys such as model.theta or sweep.xi.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for grid evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Closed-form QFI with ancilla dephasing at finite xi.
    ExampleNoise,
    /// The xi -> infinity limit of the closed form.
    Ideal,
    /// The rotating-wave general-noise construction with A = sigma_z.
    GeneralNoise,
    /// Closed form for probe states diag(rho00, 1 - rho00) and ancilla coherence sigma01.
    InitialState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NmaxRule {
    /// Largest N before the QFI first drops below (1 - tau) of the ideal-limit value.
    Threshold,
    /// Location of the QFI maximum over N.
    Peak,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub xi: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long = "kappa-s")]
    pub kappa_s: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate QFI values over a parameter grid.
    Sweep {
        #[arg(long, value_enum)]
        mode: Option<SweepMode>,
        /// Probe numbers: "1,2,5", "1..1000" or "1..1000:log:60".
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        model: ModelArgs,
        /// Probe populations rho00 for initial-state mode; thermal when absent.
        #[arg(long = "rho00")]
        rho00: Option<String>,
        /// Real ancilla coherences sigma01 in [0, 0.5] for initial-state mode.
        #[arg(long = "sigma01")]
        sigma01: Option<String>,
    },
    /// Extract N_max, the end of the Heisenberg-scaling window.
    Nmax {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_enum)]
        rule: Option<NmaxRule>,
    },
    /// Check the memory-effect and decay bounds.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of separations on [0, 5/gap].
        #[arg(long = "t-points")]
        t_points: Option<usize>,
    },
    /// Compare the full joint evolution with the closed form.
    OracleCheck {
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print Gamma and its theta-derivative.
    Gamma {
        #[command(flatten)]
        model: ModelArgs,
    },
}

/// Flattened config file: dotted key to scalar or list rendered as a grid string.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut values = BTreeMap::new();
        flatten("", &toml::Value::Table(table), &mut values)?;
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, String>) -> Result<()> {
    let scalar = |v: &toml::Value| -> Result<String> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(format!("{f:?}")),
            toml::Value::Boolean(b) => Ok(b.to_string()),
            other => Err(Error::Config(format!("unsupported value {other}"))),
        }
    };
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out)?;
            }
        }
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            out.insert(prefix.to_string(), parts.join(","));
        }
        other => {
            out.insert(prefix.to_string(), scalar(other)?);
        }
    }
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("not a number: {s:?}")))
}

/// Parses a float grid: a list `a,b,c`, or `a..b:lin:K` / `a..b:log:K`.
pub fn parse_grid_f64(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    let out = if let Some((range, spec)) = s.split_once(':') {
        let (a, b) = range
            .split_once("..")
            .ok_or_else(|| Error::Config(format!("bad range {s:?}")))?;
        let (a, b) = (parse_f64(a)?, parse_f64(b)?);
        let (kind, count) = spec
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("range {s:?} needs :lin:K or :log:K")))?;
        let k: usize = count.trim().parse().map_err(|_| Error::Config(format!("bad count in {s:?}")))?;
        if k == 0 {
            return Err(Error::Config(format!("empty grid {s:?}")));
        }
        let frac = |i: usize| if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
        match kind {
            "lin" => (0..k).map(|i| a + (b - a) * frac(i)).collect(),
            "log" => {
                if a <= 0.0 || b <= 0.0 {
                    return Err(Error::Config(format!("log grid {s:?} needs positive bounds")));
                }
                let (la, lb) = (a.ln(), b.ln());
                (0..k).map(|i| (la + (lb - la) * frac(i)).exp()).collect()
            }
            other => return Err(Error::Config(format!("unknown spacing {other:?}"))),
        }
    } else if s.contains("..") {
        return Err(Error::Config(format!("float range {s:?} needs :lin:K or :log:K")));
    } else {
        s.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("invalid grid {s:?}")));
    }
    Ok(out)
}

/// Parses a probe-number grid: `1,2,3`, `1..1000` (inclusive) or
/// `1..1000:log:K` (log-spaced, rounded, duplicates removed).
pub fn parse_grid_usize(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let parse = |t: &str| -> Result<usize> {
        t.trim().parse::<usize>().map_err(|_| Error::Config(format!("not a probe number: {t:?}")))
    };
    let mut out: Vec<usize> = if let Some((a, rest)) = s.split_once("..") {
        match rest.split_once(':') {
            None => (parse(a)?..=parse(rest)?).collect(),
            Some((b, spec)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                let floats = parse_grid_f64(&format!("{a}..{b}:{spec}"))?;
                let mut v: Vec<usize> = floats.iter().map(|x| x.round() as usize).collect();
                v.dedup();
                v
            }
        }
    } else {
        s.split(',').map(parse).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(Error::Config(format!("probe grid {s:?} must be non-empty and positive")));
    }
    out.dedup();
    Ok(out)
}

/// Resolved settings lookup with CLI > file > default precedence.
struct Resolver<'a> {
    file: &'a ConfigFile,
}

impl Resolver<'_> {
    fn string(&self, cli: Option<&str>, keys: &[&str]) -> Option<String> {
        if let Some(v) = cli {
            return Some(v.to_string());
        }
        keys.iter().find_map(|k| self.file.get(k).map(str::to_string))
    }

    fn grid(&self, cli: Option<&str>, keys: &[&str], default: &str) -> Result<Vec<f64>> {
        parse_grid_f64(&self.string(cli, keys).unwrap_or_else(|| default.to_string()))
    }

    fn scalar(&self, cli: Option<&str>, keys: &[&str], default: f64) -> Result<f64> {
        match self.string(cli, keys) {
            Some(s) => parse_f64(&s),
            None => Ok(default),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub n: Vec<usize>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    pub kappa_s: f64,
    /// Probe populations for initial-state mode; `None` means thermal probes.
    pub rho00: Option<Vec<f64>>,
    pub sigma01: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.xi.is_empty() || self.eta.is_empty() || self.theta.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        for &xi in &self.xi {
            for &eta in &self.eta {
                for &theta in &self.theta {
                    QubitThermalModel::new(theta, xi, eta, self.kappa_s)?;
                }
            }
        }
        if let Some(r) = &self.rho00 {
            if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Config("rho00 values must lie in [0, 1]".into()));
            }
        }
        if self.sigma01.iter().any(|&s| !(0.0..=0.5).contains(&s)) {
            return Err(Error::Config("sigma01 values must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub xi: f64,
    pub eta: f64,
    pub theta: f64,
    pub qfi_over_fth: f64,
    pub qfi_ideal_over_fth: f64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho00: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma01: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub command: String,
    pub conventions: Vec<&'static str>,
    pub generated_at_unix: u64,
}

fn metadata(command: &str) -> Metadata {
    Metadata {
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        conventions: vec![
            "hbar = k_B = 1; theta = k_B T / (hbar Omega); rates in units of g; probing time 1/g",
            "qfi_over_fth and qfi_ideal_over_fth are divided by F_th = (1/(2 theta^2))^2 sech^2(1/(2 theta))",
            "qfi_ideal is N^2 (a_M - a_m)^2 |dphi/dtheta|^2 with a_M - a_m = 2; ratio = qfi / qfi_ideal",
            "theta-derivatives taken at fixed xi and eta",
        ],
        generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    }
}

/// One grid point of a sweep.
pub fn sweep_point(
    mode: SweepMode,
    model: &QubitThermalModel,
    n: usize,
    rho00: Option<f64>,
    sigma01: Option<f64>,
) -> Result<SweepRow> {
    let tq = thermal_quantities(model.theta)?;
    let ideal = qfi_ideal(n, 2.0, tq.dphi_dtheta)?;
    let qfi = match mode {
        SweepMode::ExampleNoise => qfi_example_noise(&SchemeConfig::new(*model, n))?,
        SweepMode::Ideal => {
            let g = gamma_ideal_limit(model.theta)?;
            qfi_closed_form(&plus_state(), &g, n, model.eta)
        }
        SweepMode::GeneralNoise => general_noise_qfi(
            &crate::linops::pauli_z(),
            &ancilla_noise(model)?,
            &plus_state(),
            n,
            tq.dphi_dtheta,
        )?,
        SweepMode::InitialState => {
            let sigma = qubit_state(0.5, C64::new(sigma01.unwrap_or(0.5), 0.0))?;
            let probe = match rho00 {
                Some(p) => ProbeInitial::Fixed(qubit_state(p, C64::new(0.0, 0.0))?),
                None => ProbeInitial::Thermal,
            };
            qfi_example_noise(&SchemeConfig::new(*model, n).with_ancilla(sigma).with_probe(probe))?
        }
    };
    let (rho00, sigma01) = match mode {
        SweepMode::InitialState => (Some(rho00.unwrap_or(f64::NAN)), Some(sigma01.unwrap_or(0.5))),
        _ => (None, None),
    };
    Ok(SweepRow {
        n,
        xi: model.xi,
        eta: model.eta,
        theta: model.theta,
        qfi_over_fth: qfi / tq.f_th,
        qfi_ideal_over_fth: ideal / tq.f_th,
        ratio: qfi / ideal,
        rho00,
        sigma01,
    })
}

/// Evaluates the grid in the order theta, xi, eta, (rho00, sigma01), N with
/// N varying fastest; the output order is independent of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let rho_grid: Vec<Option<f64>> = match (&spec.rho00, spec.mode) {
        (Some(r), SweepMode::InitialState) => r.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let sigma_grid: Vec<Option<f64>> = match spec.mode {
        SweepMode::InitialState => spec.sigma01.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut points = Vec::new();
    for &theta in &spec.theta {
        for &xi in &spec.xi {
            for &eta in &spec.eta {
                for &r in &rho_grid {
                    for &s in &sigma_grid {
                        for &n in &spec.n {
                            points.push((QubitThermalModel::new(theta, xi, eta, spec.kappa_s)?, n, r, s));
                        }
                    }
                }
            }
        }
    }
    points
        .par_iter()
        .map(|(m, n, r, s)| sweep_point(spec.mode, m, *n, *r, *s))
        .collect()
}

fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mode: SweepMode, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["N", "xi", "eta", "theta", "qfi_over_fth", "qfi_ideal_over_fth", "ratio"];
    if mode == SweepMode::InitialState {
        header.extend(["rho00", "sigma01"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            sci(r.xi),
            sci(r.eta),
            sci(r.theta),
            sci(r.qfi_over_fth),
            sci(r.qfi_ideal_over_fth),
            sci(r.ratio),
        ];
        if mode == SweepMode::InitialState {
            rec.push(r.rho00.map(|p| if p.is_nan() { "thermal".to_string() } else { sci(p) }).unwrap_or_default());
            rec.push(r.sigma01.map(sci).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    metadata: Metadata,
    rows: &'a [T],
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
}

fn write_json<W: Write, T: Serialize>(rows: &[T], command: &str, pass: Option<bool>, mut out: W) -> Result<()> {
    let doc = JsonDoc { metadata: metadata(command), rows, pass };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NmaxResult {
    pub xi: f64,
    pub eta: f64,
    pub theta: f64,
    pub rule: NmaxRule,
    pub tau: Option<f64>,
    pub n_max: usize,
    /// QFI at N_max over the ideal-limit QFI with the same eta.
    pub ratio: f64,
}

/// QFI at `n` divided by the xi -> infinity value with the same eta.
pub fn heisenberg_ratio(model: &QubitThermalModel, gamma: &GammaValue, n: usize) -> Result<f64> {
    let sigma = plus_state();
    let limit = qfi_closed_form(&sigma, &gamma_ideal_limit(model.theta)?, n, model.eta);
    Ok(qfi_closed_form(&sigma, gamma, n, model.eta) / limit)
}

/// Scans `N = 1, 2, ...` and stops at the first `N` whose ratio falls below
/// `1 - tau`; every `N` up to that point has been checked.
pub fn n_max_threshold(model: &QubitThermalModel, tau: f64) -> Result<NmaxResult> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    let gamma = gamma_analytic(model)?;
    let floor = 1.0 - tau;
    let first = heisenberg_ratio(model, &gamma, 1)?;
    if first < floor {
        return Err(Error::NoHeisenbergWindow { ratio: first });
    }
    let mut n = 1;
    let mut ratio = first;
    while n < NMAX_SCAN_LIMIT {
        let next = heisenberg_ratio(model, &gamma, n + 1)?;
        if next < floor {
            break;
        }
        n += 1;
        ratio = next;
    }
    Ok(NmaxResult { xi: model.xi, eta: model.eta, theta: model.theta, rule: NmaxRule::Threshold, tau: Some(tau), n_max: n, ratio })
}

/// First maximum of the QFI over N.
pub fn n_max_peak(model: &QubitThermalModel) -> Result<NmaxResult> {
    let gamma = gamma_analytic(model)?;
    let sigma = plus_state();
    let mut n = 1;
    let mut f = qfi_closed_form(&sigma, &gamma, 1, model.eta);
    while n < NMAX_SCAN_LIMIT {
        let next = qfi_closed_form(&sigma, &gamma, n + 1, model.eta);
        if next < f {
            break;
        }
        n += 1;
        f = next;
    }
    let ratio = heisenberg_ratio(model, &gamma, n)?;
    Ok(NmaxResult { xi: model.xi, eta: model.eta, theta: model.theta, rule: NmaxRule::Peak, tau: None, n_max: n, ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub xi: f64,
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Decay-bound grid, memory-bound inequality and damping-basis reconstruction
/// for each xi.
pub fn bounds_report(theta: f64, xis: &[f64], t_points: usize) -> Result<Vec<CheckRow>> {
    let k = coupling_superoperator();
    let mut rows = Vec::new();
    for &xi in xis {
        let model = QubitThermalModel::new(theta, xi, 0.0, 0.0)?;
        let l = build_liouvillian(&probe_liouvillian(&model)?)?;
        let basis = damping_basis(&l)?;
        let steps = t_points.max(2);
        let grid: Vec<f64> = (0..steps).map(|i| 5.0 / basis.gap * i as f64 / (steps - 1) as f64).collect();
        let report = decay_bound_check(&l, &k, 1.0, &grid)?;
        for r in &report.rows {
            rows.push(CheckRow {
                check: "decay".into(),
                xi,
                t: Some(r.t),
                lhs: r.lhs,
                rhs: r.rhs,
                pass: r.lhs <= r.rhs + BOUND_SLACK,
            });
        }
        let s = bound_summary(&l, &k, 1.0, &plus_state())?;
        rows.push(CheckRow {
            check: "memory".into(),
            xi,
            t: Some(1.0),
            lhs: s.memory_term,
            rhs: s.memory_bound,
            pass: s.memory_term <= s.memory_bound + BOUND_SLACK,
        });
        rows.push(CheckRow {
            check: "reconstruction".into(),
            xi,
            t: None,
            lhs: s.reconstruction_residual,
            rhs: 1e-7,
            pass: s.reconstruction_residual < 1e-7,
        });
    }
    Ok(rows)
}

/// Oracle ancilla state versus the closed form, by trace distance, plus the
/// exact conservation of the ancilla populations.
pub fn oracle_report(model: &QubitThermalModel, n: usize) -> Result<Vec<CheckRow>> {
    let sys = build_joint(model, n, &ProbeInitial::Thermal, &plus_state())?;
    let oracle = evolve_and_reduce(&sys, 1.0)?;
    let closed = output_state(&SchemeConfig::new(*model, n))?;
    let td = trace_distance(&oracle, &closed)?;
    let pop = (oracle.get(0, 0) - closed.get(0, 0)).norm().max((oracle.get(1, 1) - closed.get(1, 1)).norm());
    Ok(vec![
        CheckRow { check: format!("trace_distance_N{n}"), xi: model.xi, t: Some(1.0), lhs: td, rhs: ORACLE_TOL, pass: td < ORACLE_TOL },
        CheckRow { check: format!("populations_N{n}"), xi: model.xi, t: Some(1.0), lhs: pop, rhs: 1e-10, pass: pop < 1e-10 },
    ])
}

fn write_checks_csv<W: Write>(rows: &[CheckRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "xi", "t", "lhs", "rhs", "pass"])?;
    for r in rows {
        w.write_record([
            r.check.clone(),
            sci(r.xi),
            r.t.map(sci).unwrap_or_default(),
            sci(r.lhs),
            sci(r.rhs),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_nmax_csv<W: Write>(rows: &[NmaxResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["xi", "eta", "theta", "rule", "tau", "n_max", "ratio"])?;
    for r in rows {
        let rule = match r.rule {
            NmaxRule::Threshold => "threshold",
            NmaxRule::Peak => "peak",
        };
        w.write_record([
            sci(r.xi),
            sci(r.eta),
            sci(r.theta),
            rule.to_string(),
            r.tau.map(sci).unwrap_or_default(),
            r.n_max.to_string(),
            sci(r.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Maps library errors onto the process exit codes.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Capacity { .. } => EXIT_CAPACITY,
        Error::Config(_) | Error::InvalidParameter(_) | Error::Io(_) | Error::Dimension(_) => EXIT_USAGE,
        _ => EXIT_ASSERTION,
    }
}

fn emit(path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn model_from(r: &Resolver<'_>, a: &ModelArgs, defaults: QubitThermalModel) -> Result<QubitThermalModel> {
    QubitThermalModel::new(
        r.scalar(a.theta.as_deref(), &["model.theta"], defaults.theta)?,
        r.scalar(a.xi.as_deref(), &["model.xi"], defaults.xi)?,
        r.scalar(a.eta.as_deref(), &["model.eta"], defaults.eta)?,
        r.scalar(a.kappa_s.as_deref(), &["model.kappa_s"], defaults.kappa_s_over_g)?,
    )
}

/// Runs the CLI, writing results to `stdout` and diagnostics to `stderr`,
/// and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code_for(&e)
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let r = Resolver { file: &file };
    let format = match cli.format {
        Some(f) => f,
        None => match file.get("output.format") {
            Some("json") => Format::Json,
            Some("csv") | None => Format::Csv,
            Some(other) => return Err(Error::Config(format!("unknown output.format {other:?}"))),
        },
    };
    let output: Option<PathBuf> = cli.output.clone().or_else(|| file.get("output.path").map(PathBuf::from));
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => file.get("threads").map(|s| s.parse::<usize>()).transpose().map_err(|_| Error::Config("threads must be an integer".into()))?,
    };
    if threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            b = b.num_threads(t);
        }
        b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };
    let mut buf = Vec::new();
    let code = pool.install(|| dispatch(cli, &r, format, &mut buf))?;
    emit(output.as_deref(), &buf, stdout)?;
    Ok(code)
}

fn dispatch(cli: &Cli, r: &Resolver<'_>, format: Format, out: &mut Vec<u8>) -> Result<i32> {
    let defaults = QubitThermalModel::default();
    match &cli.command {
        Command::Sweep { mode, n, model, rho00, sigma01 } => {
            let mode = match mode {
                Some(m) => *m,
                None => match r.file.get("sweep.mode") {
                    Some(s) => SweepMode::from_str(s, true).map_err(|_| Error::Config(format!("unknown sweep.mode {s:?}")))?,
                    None => SweepMode::ExampleNoise,
                },
            };
            let spec = SweepSpec {
                mode,
                n: parse_grid_usize(&r.string(n.as_deref(), &["sweep.n"]).unwrap_or_else(|| "1..1000:log:60".into()))?,
                xi: r.grid(model.xi.as_deref(), &["sweep.xi", "model.xi"], "100,200,300,400")?,
                eta: r.grid(model.eta.as_deref(), &["sweep.eta", "model.eta"], "0.1")?,
                theta: r.grid(model.theta.as_deref(), &["sweep.theta", "model.theta"], "2")?,
                kappa_s: r.scalar(model.kappa_s.as_deref(), &["model.kappa_s"], 0.0)?,
                rho00: r.string(rho00.as_deref(), &["sweep.rho00"]).map(|s| parse_grid_f64(&s)).transpose()?,
                sigma01: r.grid(sigma01.as_deref(), &["sweep.sigma01"], "0.5")?,
            };
            let rows = run_sweep(&spec)?;
            match format {
                Format::Csv => write_sweep_csv(&rows, mode, out)?,
                Format::Json => write_json(&rows, "sweep", None, out)?,
            }
            Ok(EXIT_OK)
        }
        Command::Nmax { model, tau, rule } => {
            let rule = match rule {
                Some(x) => *x,
                None => match r.file.get("nmax.rule") {
                    Some(s) => NmaxRule::from_str(s, true).map_err(|_| Error::Config(format!("unknown nmax.rule {s:?}")))?,
                    None => NmaxRule::Threshold,
                },
            };
            let tau = match tau {
                Some(t) => *t,
                None => r.scalar(None, &["nmax.tau"], DEFAULT_TAU)?,
            };
            let xis = r.grid(model.xi.as_deref(), &["nmax.xi", "model.xi"], "100,200,300,400")?;
            let etas = r.grid(model.eta.as_deref(), &["nmax.eta", "model.eta"], "0.1")?;
            let theta = r.scalar(model.theta.as_deref(), &["model.theta"], defaults.theta)?;
            let kappa = r.scalar(model.kappa_s.as_deref(), &["model.kappa_s"], 0.0)?;
            let mut models = Vec::new();
            for &xi in &xis {
                for &eta in &etas {
                    models.push(QubitThermalModel::new(theta, xi, eta, kappa)?);
                }
            }
            let rows: Vec<NmaxResult> = models
                .par_iter()
                .map(|m| match rule {
                    NmaxRule::Threshold => n_max_threshold(m, tau),
                    NmaxRule::Peak => n_max_peak(m),
                })
                .collect::<Result<_>>()?;
            match format {
                Format::Csv => write_nmax_csv(&rows, out)?,
                Format::Json => write_json(&rows, "nmax", None, out)?,
            }
            Ok(EXIT_OK)
        }
        Command::Bounds { model, t_points } => {
            let xis = r.grid(model.xi.as_deref(), &["bounds.xi", "model.xi"], "50,100,400")?;
            let theta = r.scalar(model.theta.as_deref(), &["model.theta"], defaults.theta)?;
            let points = match t_points {
                Some(p) => *p,
                None => r.scalar(None, &["bounds.t_points"], 21.0)? as usize,
            };
            let rows = bounds_report(theta, &xis, points)?;
            let pass = rows.iter().all(|c| c.pass);
            match format {
                Format::Csv => write_checks_csv(&rows, out)?,
                Format::Json => write_json(&rows, "bounds", Some(pass), out)?,
            }
            Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
        }
        Command::OracleCheck { n, model } => {
            let n = match n {
                Some(n) => *n,
                None => r.scalar(None, &["oracle.n"], 2.0)? as usize,
            };
            let m = model_from(r, model, defaults)?;
            let rows = oracle_report(&m, n)?;
            let pass = rows.iter().all(|c| c.pass);
            match format {
                Format::Csv => write_checks_csv(&rows, out)?,
                Format::Json => write_json(&rows, "oracle-check", Some(pass), out)?,
            }
            Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
        }
        Command::Gamma { model } => {
            let m = model_from(r, model, defaults)?;
            let g = gamma_analytic(&m)?;
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut *out, &g)?;
                    writeln!(out)?;
                }
                Format::Csv => {
                    writeln!(out, "Gamma = {:.12} {:+.12}i", g.value.re, g.value.im)?;
                    writeln!(out, "dGamma/dtheta = {:.12} {:+.12}i", g.dvalue_dtheta.re, g.dvalue_dtheta.im)?;
                }
            }
            Ok(EXIT_OK)
        }
    }
}
