//! Configuration, frequency sweeps over band pairs, and validation reports.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use toml::{Table, Value};

use crate::bands::{
    self, generator_negativity_identity, negativity_closed, BandPair, BandSpec, PairRates, Purity, Relation,
    ThermalEnvironment,
};
use crate::gaussian::{self, MeasuredSide, TwoModeCovariance};
use crate::green::{solve_green_coefficients, DrivingSpec, GreenCoefficients, Reservoirs, Side, MAX_ORDER};
use crate::oracle::{self, OracleComparison, OracleParams, OracleRun};
use crate::{Error, Result};

/// Keys accepted in a configuration document.
pub const KEYS: &[&str] = &[
    "omega_r",
    "omega_d",
    "v",
    "gamma0",
    "lambda",
    "m",
    "m_i",
    "delta_omega",
    "T_R",
    "T_L",
    "t",
    "omega_i_min",
    "omega_i_max",
    "points",
    "relation",
    "harmonic",
    "order",
    "output",
    "oracle",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepRelation {
    NonResonant,
    Resonant,
}

impl std::str::FromStr for SweepRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonresonant" => Ok(Self::NonResonant),
            "resonant" => Ok(Self::Resonant),
            other => Err(config_error("relation", format!("expected \"nonresonant\" or \"resonant\", got {other:?}"))),
        }
    }
}

impl fmt::Display for SweepRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NonResonant => "nonresonant",
            Self::Resonant => "resonant",
        })
    }
}

/// Machine parameters in units of `γ₀`, sweep axis and output options.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub omega_r: f64,
    pub omega_d: f64,
    pub v: f64,
    pub gamma0: f64,
    pub lambda: f64,
    pub m: f64,
    pub m_i: f64,
    pub delta_omega: f64,
    pub t_right: f64,
    pub t_left: f64,
    pub t: f64,
    pub omega_i_min: f64,
    pub omega_i_max: f64,
    pub points: usize,
    pub relation: SweepRelation,
    pub harmonic: i32,
    /// Perturbative order; `None` picks the lowest order whose recurrence
    /// residual is below 1e-8.
    pub order: Option<usize>,
    pub output: Option<PathBuf>,
    pub oracle: bool,
}

fn config_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

impl Default for SweepConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

fn number(table: &Table, key: &str) -> Result<Option<f64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Float(x)) => Ok(Some(*x)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(other) => Err(config_error(key, format!("expected a number, got {}", other.type_str()))),
    }
}

fn integer(table: &Table, key: &str) -> Result<Option<i64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) => Ok(Some(*i)),
        Some(other) => Err(config_error(key, format!("expected an integer, got {}", other.type_str()))),
    }
}

fn string<'a>(table: &'a Table, key: &str) -> Result<Option<&'a str>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(config_error(key, format!("expected a string, got {}", other.type_str()))),
    }
}

/// Parses a flat TOML document; absent keys take the default machine.
pub fn parse_config(text: &str) -> Result<SweepConfig> {
    parse_config_with(text, Table::new())
}

/// As [`parse_config`], with `overrides` replacing keys of the document
/// before defaults are derived (so e.g. a relation override also moves the
/// default grid).
pub fn parse_config_with(text: &str, overrides: Table) -> Result<SweepConfig> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_error("document", e.message().to_string()))?;
    table.extend(overrides);
    for key in table.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(key, "unknown key"));
        }
    }
    let omega_r = number(&table, "omega_r")?.unwrap_or(800.0);
    let omega_d = number(&table, "omega_d")?.unwrap_or(omega_r / 11f64.sqrt());
    let relation = match string(&table, "relation")? {
        Some(s) => s.parse()?,
        None => SweepRelation::NonResonant,
    };
    let harmonic = integer(&table, "harmonic")?.unwrap_or(1);
    let harmonic = i32::try_from(harmonic).map_err(|_| config_error("harmonic", "out of range"))?;
    let span = match relation {
        SweepRelation::NonResonant => harmonic.max(1) as f64 * omega_d,
        SweepRelation::Resonant => omega_d,
    };
    let order = match table.get("order") {
        None => None,
        Some(Value::String(s)) if s == "auto" => None,
        Some(Value::Integer(i)) => Some(usize::try_from(*i).map_err(|_| config_error("order", "must be >= 0"))?),
        Some(_) => return Err(config_error("order", "expected an integer or \"auto\"")),
    };
    let points = integer(&table, "points")?.unwrap_or(81);
    let oracle = match table.get("oracle") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(other) => return Err(config_error("oracle", format!("expected a boolean, got {}", other.type_str()))),
    };
    let config = SweepConfig {
        omega_r,
        omega_d,
        v: number(&table, "v")?.unwrap_or(omega_r * omega_r / 32.0),
        gamma0: number(&table, "gamma0")?.unwrap_or(1.0),
        lambda: number(&table, "lambda")?.unwrap_or(10.0 * omega_r),
        m: number(&table, "m")?.unwrap_or(10.0),
        m_i: number(&table, "m_i")?.unwrap_or(1.0),
        delta_omega: number(&table, "delta_omega")?.unwrap_or(0.1),
        t_right: number(&table, "T_R")?.unwrap_or(0.0),
        t_left: number(&table, "T_L")?.unwrap_or(0.0),
        t: number(&table, "t")?.unwrap_or(20.0),
        omega_i_min: number(&table, "omega_i_min")?.unwrap_or(0.01 * span),
        omega_i_max: number(&table, "omega_i_max")?.unwrap_or(0.99 * span),
        points: usize::try_from(points).map_err(|_| config_error("points", "must be >= 2"))?,
        relation,
        harmonic,
        order,
        output: string(&table, "output")?.map(PathBuf::from),
        oracle,
    };
    config.validate()?;
    Ok(config)
}

impl SweepConfig {
    /// Range checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_r", self.omega_r),
            ("omega_d", self.omega_d),
            ("gamma0", self.gamma0),
            ("lambda", self.lambda),
            ("m", self.m),
            ("m_i", self.m_i),
            ("delta_omega", self.delta_omega),
            ("t", self.t),
            ("omega_i_min", self.omega_i_min),
            ("omega_i_max", self.omega_i_max),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_error(key, format!("must be finite and > 0, got {v}")));
            }
        }
        for (key, v) in [("v", self.v), ("T_R", self.t_right), ("T_L", self.t_left)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(config_error(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.points < 2 {
            return Err(config_error("points", format!("need at least 2 grid points, got {}", self.points)));
        }
        if !(self.omega_i_max > self.omega_i_min) {
            return Err(config_error("omega_i_max", "grid must be strictly increasing"));
        }
        if self.harmonic < 1 {
            return Err(config_error("harmonic", format!("must be >= 1, got {}", self.harmonic)));
        }
        if self.relation == SweepRelation::NonResonant && self.omega_i_max >= self.harmonic as f64 * self.omega_d {
            return Err(config_error("omega_i_max", "nonresonant sweeps need omega_i < k·omega_d"));
        }
        if let Some(order) = self.order {
            if order > MAX_ORDER {
                return Err(config_error("order", format!("must be <= {MAX_ORDER}, got {order}")));
            }
        }
        Ok(())
    }

    pub fn band_relation(&self) -> Relation {
        match self.relation {
            SweepRelation::NonResonant => Relation::NonResonant(self.harmonic),
            SweepRelation::Resonant => Relation::Resonant(self.harmonic),
        }
    }

    pub fn reservoirs(&self) -> Result<Reservoirs> {
        Reservoirs::symmetric(self.gamma0, self.lambda, self.m, self.m_i)
    }

    pub fn green(&self) -> Result<GreenCoefficients> {
        let res = self.reservoirs()?;
        let drv = DrivingSpec::cosine(self.omega_r, self.omega_d, self.v)?;
        let gc = match self.order {
            Some(order) => solve_green_coefficients(&res, &drv, order)?,
            None => GreenCoefficients::auto_order(&res, &drv, &[self.omega_d / 2.0, self.omega_r])?,
        };
        if self.harmonic > gc.k_max() {
            return Err(config_error(
                "harmonic",
                format!("harmonic {} outside the window |k| <= {}", self.harmonic, gc.k_max()),
            ));
        }
        Ok(gc)
    }

    pub fn environment(&self) -> Result<ThermalEnvironment> {
        ThermalEnvironment::new(self.t_right, self.t_left)
    }

    /// Evenly spaced `ω_i` from `omega_i_min` to `omega_i_max`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.omega_i_min + (self.omega_i_max - self.omega_i_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn pair(&self, omega_i: f64) -> Result<BandPair> {
        let relation = self.band_relation();
        let omega_j = BandPair::partner(omega_i, relation, self.omega_d).expect("related pair");
        Ok(BandPair {
            band_i: BandSpec::new(omega_i, self.delta_omega, Side::R)?,
            band_j: BandSpec::new(omega_j, self.delta_omega, Side::L)?,
            relation,
        })
    }

    /// `E₀ = γ₀ΔωVt/ω_r³`.
    pub fn e0(&self) -> f64 {
        self.gamma0 * self.delta_omega * self.v * self.t / self.omega_r.powi(3)
    }

    fn with_scenario(&self, t_right: f64, t_left: f64, relation: SweepRelation) -> Self {
        Self {
            t_right,
            t_left,
            relation,
            harmonic: 1,
            omega_i_min: 0.01 * self.omega_d,
            omega_i_max: 0.99 * self.omega_d,
            ..self.clone()
        }
    }
}

/// One grid point. Measures are `NaN` when the point failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub omega_i: f64,
    pub omega_j: f64,
    pub mu_i: f64,
    pub mu_j: f64,
    pub gamma: f64,
    pub gamma_t2: f64,
    pub mutual_information: f64,
    pub discord: f64,
    pub discord_ratio: f64,
    pub log_negativity: f64,
    pub s_ij: f64,
    pub t_ent: f64,
    pub q_dot_i: f64,
    pub exact_mutual_information: f64,
    pub exact_discord: f64,
    pub exact_log_negativity: f64,
    /// Resonant rows: whether `|Γ₋|t² ≤ (1/μ_i − 1)(1/μ_j − 1)` holds.
    pub bound_holds: Option<bool>,
    pub flags: Vec<String>,
    /// Set when the state at this point is past the validity horizon.
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "omega_i,omega_j,mu_i,mu_j,Gamma,I_over_E0sq,D_over_E0sq,D_over_I,EN_over_E0,S_ij,t_ent,\
Q_dot_i,flags,I,D,E_N,Gamma_t2,I_exact,D_exact,E_N_exact";

fn num(x: f64) -> String {
    format!("{x:.11e}")
}

impl SweepRow {
    fn failed(omega_i: f64, omega_j: f64, reason: String) -> Self {
        let nan = f64::NAN;
        Self {
            omega_i,
            omega_j,
            mu_i: nan,
            mu_j: nan,
            gamma: nan,
            gamma_t2: nan,
            mutual_information: nan,
            discord: nan,
            discord_ratio: nan,
            log_negativity: nan,
            s_ij: nan,
            t_ent: nan,
            q_dot_i: nan,
            exact_mutual_information: nan,
            exact_discord: nan,
            exact_log_negativity: nan,
            bound_holds: None,
            flags: vec!["validity-horizon".into()],
            failure: Some(reason),
        }
    }

    fn csv_line(&self, e0: f64) -> String {
        let flags = if self.flags.is_empty() { "-".to_string() } else { self.flags.join("|") };
        [
            num(self.omega_i),
            num(self.omega_j),
            num(self.mu_i),
            num(self.mu_j),
            num(self.gamma),
            num(self.mutual_information / (e0 * e0)),
            num(self.discord / (e0 * e0)),
            num(self.discord_ratio),
            num(self.log_negativity / e0),
            num(self.s_ij),
            num(self.t_ent),
            num(self.q_dot_i),
            flags,
            num(self.mutual_information),
            num(self.discord),
            num(self.log_negativity),
            num(self.gamma_t2),
            num(self.exact_mutual_information),
            num(self.exact_discord),
            num(self.exact_log_negativity),
        ]
        .join(",")
    }
}

/// Peaks, bound checks and closed-vs-exact deviations of one sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub relation: Relation,
    pub points: usize,
    pub failed: usize,
    pub order: usize,
    pub k_max: i32,
    pub e0: f64,
    /// `(ω_i, value)` of the largest value of each column.
    pub peak_information: (f64, f64),
    pub peak_discord: (f64, f64),
    pub peak_log_negativity: (f64, f64),
    pub peak_gamma: (f64, f64),
    pub bound_passed: usize,
    pub bound_tested: usize,
    pub max_deviation_information: f64,
    pub max_deviation_discord: f64,
    /// Over points whose exact `E_N` exceeds [`EN_COMPARISON_FLOOR`].
    pub max_deviation_log_negativity: f64,
}

/// Exact log-negativity above which closed and exact values are compared.
pub const EN_COMPARISON_FLOOR: f64 = 0.05;

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "relation = {}", self.relation)?;
        writeln!(f, "points = {}", self.points)?;
        writeln!(f, "failed_points = {}", self.failed)?;
        writeln!(f, "order = {}", self.order)?;
        writeln!(f, "k_max = {}", self.k_max)?;
        writeln!(f, "E0 = {}", num(self.e0))?;
        for (name, (w, v)) in [
            ("I", self.peak_information),
            ("D", self.peak_discord),
            ("E_N", self.peak_log_negativity),
            ("Gamma", self.peak_gamma),
        ] {
            writeln!(f, "peak_{name}_omega_i = {}", num(w))?;
            writeln!(f, "peak_{name} = {}", num(v))?;
        }
        writeln!(f, "max_E_N = {}", num(self.peak_log_negativity.1))?;
        writeln!(f, "bound_check = {}/{}", self.bound_passed, self.bound_tested)?;
        writeln!(f, "max_rel_dev_I = {}", num(self.max_deviation_information))?;
        writeln!(f, "max_rel_dev_D = {}", num(self.max_deviation_discord))?;
        write!(f, "max_rel_dev_E_N = {}", num(self.max_deviation_log_negativity))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line(self.summary.e0));
            out.push('\n');
        }
        out
    }

    /// More than half of the grid is past the validity horizon.
    pub fn majority_failed(&self) -> bool {
        2 * self.summary.failed > self.summary.points
    }
}

fn evaluate_point(config: &SweepConfig, gc: &GreenCoefficients, env: &ThermalEnvironment, omega_i: f64) -> Result<SweepRow> {
    let pair = config.pair(omega_i)?;
    let omega_j = pair.band_j.omega_center;
    let horizon = |e: Error| match e {
        Error::ValidityHorizon { reason } => Ok(SweepRow::failed(omega_i, omega_j, reason)),
        Error::UnphysicalCovariance { lambda } => {
            Ok(SweepRow::failed(omega_i, omega_j, format!("unphysical state, eigenvalue {lambda}")))
        }
        other => Err(other),
    };
    let rates = PairRates::new(&pair, env, gc)?;
    let report = match bands::report_from_rates(&pair, env, gc, &rates, config.t) {
        Ok(r) => r,
        Err(e) => return horizon(e),
    };
    let bound_holds = match pair.relation {
        Relation::Resonant(_) => {
            let state = match rates.state(&pair, env, config.t) {
                Ok(s) => s,
                Err(e) => return horizon(e),
            };
            Some(bands::bound_check_ineq(state.purity_i, state.purity_j, rates.gamma, config.t))
        }
        _ => None,
    };
    Ok(SweepRow {
        omega_i,
        omega_j,
        mu_i: report.mu_i,
        mu_j: report.mu_j,
        gamma: report.gamma,
        gamma_t2: report.gamma_t2,
        mutual_information: report.mutual_information,
        discord: report.discord,
        discord_ratio: report.discord_ratio,
        log_negativity: report.log_negativity,
        s_ij: report.s_ij,
        t_ent: report.t_ent,
        q_dot_i: report.q_dot_i,
        exact_mutual_information: report.exact_mutual_information,
        exact_discord: report.exact_discord,
        exact_log_negativity: report.exact_log_negativity,
        bound_holds,
        flags: report.flags.iter().map(|f| f.as_str().to_string()).collect(),
        failure: None,
    })
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}

/// Evaluates every grid point (in parallel, rows kept in grid order).
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let gc = config.green()?;
    let env = config.environment()?;
    let rows = config
        .grid()
        .into_par_iter()
        .map(|w| evaluate_point(config, &gc, &env, w))
        .collect::<Result<Vec<_>>>()?;

    let ok = || rows.iter().filter(|r| r.failure.is_none());
    let peak = |f: &dyn Fn(&SweepRow) -> f64| {
        ok().fold((f64::NAN, f64::NEG_INFINITY), |best, r| if f(r) > best.1 { (r.omega_i, f(r)) } else { best })
    };
    let max_dev = |f: &dyn Fn(&SweepRow) -> Option<f64>| ok().filter_map(f).fold(0.0, f64::max);
    let summary = SweepSummary {
        relation: config.band_relation(),
        points: rows.len(),
        failed: rows.iter().filter(|r| r.failure.is_some()).count(),
        order: gc.order(),
        k_max: gc.k_max(),
        e0: config.e0(),
        peak_information: peak(&|r| r.mutual_information),
        peak_discord: peak(&|r| r.discord),
        peak_log_negativity: peak(&|r| r.log_negativity),
        peak_gamma: peak(&|r| r.gamma.abs()),
        bound_passed: ok().filter(|r| r.bound_holds == Some(true)).count(),
        bound_tested: ok().filter(|r| r.bound_holds.is_some()).count(),
        max_deviation_information: max_dev(&|r| Some(relative(r.mutual_information, r.exact_mutual_information))),
        max_deviation_discord: max_dev(&|r| Some(relative(r.discord, r.exact_discord))),
        max_deviation_log_negativity: max_dev(&|r| {
            (r.exact_log_negativity > EN_COMPARISON_FLOOR).then(|| relative(r.log_negativity, r.exact_log_negativity))
        }),
    };
    Ok(SweepOutcome { rows, summary })
}

/// Outcome of one invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub oracle: Option<OracleComparison>,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "fail" };
            writeln!(f, "{} = {verdict} ; {:.2}s ; {}", c.name, c.seconds, c.detail)?;
        }
        if let Some(cmp) = &self.oracle {
            writeln!(f, "oracle_quantity,fitted,analytic,relative_error")?;
            for r in &cmp.rows {
                writeln!(f, "{},{},{},{}", r.quantity, num(r.fitted), num(r.analytic), num(r.relative_error()))?;
            }
        }
        Ok(())
    }
}

/// Fuzzing samples of the negativity identity.
pub const FUZZ_SAMPLES: usize = 1000;

/// Runs the invariant suite on the configured machine: the reference scenarios
/// (T = 0 and 7.5 nonresonant, 1500/0 and 7500/7500 resonant), the toolbox
/// reference states, the identity fuzz, determinism, and optionally the
/// discrete oracle.
pub fn run_validation(config: &SweepConfig, seed: u64) -> Result<ValidationReport> {
    config.validate()?;
    let mut checks = Vec::new();
    let mut timed = |name: &'static str, f: &mut dyn FnMut() -> Result<(bool, String)>| -> Result<()> {
        let start = Instant::now();
        let (passed, detail) = f()?;
        checks.push(Check { name, passed, detail, seconds: start.elapsed().as_secs_f64() });
        Ok(())
    };

    let cold = run_sweep(&config.with_scenario(0.0, 0.0, SweepRelation::NonResonant))?;
    let warm = run_sweep(&config.with_scenario(7.5, 7.5, SweepRelation::NonResonant))?;
    let hot_r = run_sweep(&config.with_scenario(1500.0, 0.0, SweepRelation::Resonant))?;
    let hot = run_sweep(&config.with_scenario(7500.0, 7500.0, SweepRelation::Resonant))?;
    let scenarios = [&cold, &warm, &hot_r, &hot];

    timed("closed_vs_exact", &mut || {
        let worst = scenarios
            .iter()
            .map(|s| {
                s.summary
                    .max_deviation_information
                    .max(s.summary.max_deviation_discord)
                    .max(s.summary.max_deviation_log_negativity)
            })
            .fold(0.0, f64::max);
        let failed: usize = scenarios.iter().map(|s| s.summary.failed).sum();
        Ok((worst <= 0.05 && failed == 0, format!("max relative deviation {worst:.3e}, failed points {failed}")))
    })?;

    timed("zero_temperature_discord_ratio", &mut || {
        let ratios: Vec<f64> = cold
            .rows
            .iter()
            .filter(|r| r.log_negativity > 0.0)
            .map(|r| r.discord_ratio)
            .collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // 0.50 read to two decimals.
        let ok = !ratios.is_empty() && lo >= 0.48 && hi < 0.505;
        Ok((ok, format!("D/I in [{lo:.6}, {hi:.6}] over {} entangled points", ratios.len())))
    })?;

    timed("resonant_bounds", &mut || {
        let rows = || hot_r.rows.iter().chain(&hot.rows);
        let over = rows()
            .filter(|r| !(r.mutual_information <= 1.0 + 1e-9 && r.discord <= 1.0 + 1e-9))
            .count();
        let (passed, tested) = (
            hot_r.summary.bound_passed + hot.summary.bound_passed,
            hot_r.summary.bound_tested + hot.summary.bound_tested,
        );
        Ok((
            over == 0 && passed == tested && tested == hot_r.rows.len() + hot.rows.len(),
            format!("I, D above 1: {over}; inequality {passed}/{tested}"),
        ))
    })?;

    timed("resonant_separability", &mut || {
        let rows: Vec<&SweepRow> = hot_r.rows.iter().chain(&hot.rows).collect();
        let nonzero = rows.iter().filter(|r| r.exact_log_negativity != 0.0).count();
        Ok((nonzero == 0, format!("{nonzero} of {} resonant points with E_N != 0", rows.len())))
    })?;

    timed("interference_suppression", &mut || {
        let ratio = hot_r.summary.peak_information.1 / hot.summary.peak_information.1;
        Ok((ratio >= 50.0, format!("max I(1500/0) / max I(7500/7500) = {ratio:.2}")))
    })?;

    timed("lambda_sensitivity", &mut || {
        let mut parts = Vec::new();
        for factor in [5.0, 10.0, 20.0] {
            let c = SweepConfig { lambda: factor * config.omega_r, ..config.clone() };
            let a = run_sweep(&c.with_scenario(1500.0, 0.0, SweepRelation::Resonant))?;
            let b = run_sweep(&c.with_scenario(7500.0, 7500.0, SweepRelation::Resonant))?;
            parts.push(format!(
                "Lambda={factor}omega_r: {:.2}",
                a.summary.peak_information.1 / b.summary.peak_information.1
            ));
        }
        Ok((true, format!("suppression ratio {}", parts.join(", "))))
    })?;

    timed("entanglement_threshold", &mut || threshold_check(config, &warm))?;
    timed("gaussian_toolbox", &mut || toolbox_check())?;
    timed("identity_fuzz", &mut || identity_fuzz(seed))?;

    timed("determinism", &mut || {
        let a = run_sweep(config)?.to_csv();
        let b = run_sweep(config)?.to_csv();
        Ok((a == b, format!("{} bytes, identical: {}", a.len(), a == b)))
    })?;

    let mut comparison = None;
    if config.oracle {
        timed("discrete_oracle", &mut || {
            let params = OracleParams::reduced_scale();
            let cmp = oracle::compare_with_analytic(&params, &OracleRun::reduced_scale(&params))?;
            let worst = cmp.worst_relative_error();
            let ok = worst <= 0.15 && cmp.symplectic_drift <= oracle::SYMPLECTIC_TOL;
            let detail = format!("worst relative error {worst:.3e}, symplectic drift {:.3e}", cmp.symplectic_drift);
            comparison = Some(cmp);
            Ok((ok, detail))
        })?;
    }
    Ok(ValidationReport { checks, oracle: comparison })
}

fn threshold_check(config: &SweepConfig, warm: &SweepOutcome) -> Result<(bool, String)> {
    let w = warm.summary.peak_log_negativity.0;
    if !w.is_finite() {
        return Ok((false, "no entangled point at T = 7.5".into()));
    }
    let c = config.with_scenario(7.5, 7.5, SweepRelation::NonResonant);
    let (gc, env, pair) = (c.green()?, c.environment()?, c.pair(w)?);
    let rates = PairRates::new(&pair, &env, &gc)?;
    let t_ent = rates.latency(&pair, &env)?;
    let mut ok = t_ent.is_finite() && t_ent > 0.0;
    for f in [0.0, 0.25, 0.5, 0.9, 0.999] {
        ok &= bands::report_from_rates(&pair, &env, &gc, &rates, f * t_ent)?.log_negativity == 0.0;
    }
    for f in [1.1, 1.5, 2.0] {
        ok &= bands::report_from_rates(&pair, &env, &gc, &rates, f * t_ent)?.log_negativity > 0.0;
    }
    let state = rates.state(&pair, &env, c.t)?;
    let (si, sj) = (gaussian::renyi2_entropy(&state.sigma.alpha)?, gaussian::renyi2_entropy(&state.sigma.beta)?);
    let half = (0.5 * (si - sj)).sinh();
    let via_renyi = 0.5 * (si + sj) + 0.5 * (2.0 * half * half).ln_1p();
    let direct = bands::entropy_threshold(state.purity_i, state.purity_j);
    let gap = (direct - via_renyi).abs();
    ok &= gap < 1e-12;
    Ok((ok, format!("peak omega_i = {w:.4}, t_ent = {t_ent:.4}, |S_ij - Renyi| = {gap:.2e}")))
}

fn toolbox_check() -> Result<(bool, String)> {
    let tol = 1e-8;
    let mut worst = 0.0f64;
    let mut note = |x: f64| worst = worst.max(x.abs());
    let vac = TwoModeCovariance::vacuum();
    let inv = gaussian::symplectic_invariants(&vac);
    let (l1, l2) = gaussian::symplectic_eigenvalues(&inv)?;
    note(l1.value() - 0.5);
    note(l2.value() - 0.5);
    note(gaussian::mutual_information_exact(&vac)?);
    note(gaussian::log_negativity_exact(&vac)?);
    let th = TwoModeCovariance::thermal(1.3, 2.7);
    let (l1, l2) = gaussian::symplectic_eigenvalues(&gaussian::symplectic_invariants(&th))?;
    note(l1.value() - 2.7);
    note(l2.value() - 1.3);
    note(gaussian::mutual_information_exact(&th)?);
    note(gaussian::gaussian_discord_exact(&th, MeasuredSide::J)?);
    for r in [0.1, 0.5, 1.2] {
        let s = TwoModeCovariance::squeezed_vacuum(r);
        let (l1, l2) = gaussian::symplectic_eigenvalues(&gaussian::symplectic_invariants(&s))?;
        note(l1.value() - 0.5);
        note(l2.value() - 0.5);
        note(gaussian::log_negativity_exact(&s)? - 2.0 * r);
        let marginal = gaussian::entropy_f((2.0 * r).cosh() / 2.0)?;
        note(gaussian::gaussian_discord_exact(&s, MeasuredSide::J)? - marginal);
        note(gaussian::mutual_information_exact(&s)? - 2.0 * marginal);
    }
    // Araki–Lieb on a mixed correlated state: |S_i − S_j| ≤ S.
    let mixed = TwoModeCovariance::standard(1.4, 0.9, 0.6, -0.5);
    let inv = gaussian::symplectic_invariants(&mixed);
    let (l1, l2) = gaussian::symplectic_eigenvalues(&inv)?;
    let total = gaussian::entropy_f(l1.value())? + gaussian::entropy_f(l2.value())?;
    let (si, sj) = (gaussian::entropy_f(1.4)?, gaussian::entropy_f(0.9)?);
    let araki_lieb = (si - sj).abs() <= total + tol;
    Ok((worst < tol && araki_lieb, format!("max deviation {worst:.2e}, Araki-Lieb {araki_lieb}")))
}

fn identity_fuzz(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..FUZZ_SAMPLES {
        let pi = Purity::from_mu(rng.gen_range(0.01..1.0))?;
        let pj = Purity::from_mu(rng.gen_range(0.01..1.0))?;
        let gamma = -(10f64).powf(rng.gen_range(-14.0..0.0));
        let n = negativity_closed(pi, pj, gamma, 1.0, Relation::NonResonant(1));
        let t = n.latency * rng.gen_range(1.0001..100.0);
        let n = negativity_closed(pi, pj, gamma, t, Relation::NonResonant(1));
        let res = generator_negativity_identity(n.log_negativity, n.threshold, n.rate, gamma, t)?;
        worst = worst.max(res / (gamma.abs() * t * t));
    }
    Ok((worst < 1e-10, format!("{FUZZ_SAMPLES} samples, max relative residual {worst:.2e}")))
}
