//! Brute-force check of the band formulas: both reservoirs are discretised
//! into oscillators on a uniform grid and the full Gaussian state of system
//! plus reservoirs is propagated under the exact quadratic dynamics.
//!
//! Coordinates are scaled so free evolution is a rotation:
//! `x̃ = √(mω_r) x`, `Q_n = √(m_nω_n) q_n` (and conjugate momenta). Then
//!
//! ```text
//! x̃' = ω_r p̃              p̃' = −(V_bare(t)/ω_r) x̃ − Σ κ_n Q_n
//! Q_n' = ω_n P_n           P_n' = −ω_n Q_n − κ_n x̃
//! ```
//!
//! with `κ_n² = I(ω_n)δω/(mω_r)` and `V_bare` carrying the counterterm
//! `2Σ κ_n² ω_r/ω_n`. Both reservoirs share the density, so only the bright
//! combinations `(R_n + L_n)/√2` couple to the system; the dark ones rotate
//! freely and are added back analytically.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use nalgebra::DMatrix;

use crate::bands::{self, BandPair, BandSpec, Relation, ThermalEnvironment};
use crate::green::{DrivingSpec, GreenCoefficients, Reservoirs, Side};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleParams {
    pub omega_r: f64,
    pub omega_d: f64,
    /// Driving amplitude `V` in `V(t) = ω_r² + V cos ω_d t`.
    pub amplitude: f64,
    pub gamma0: f64,
    pub cutoff: f64,
    pub mass: f64,
    pub env_mass: f64,
    /// Oscillators per reservoir.
    pub modes: usize,
    /// Grid spacing `δω`; mode `n` sits at `nδω`.
    pub spacing: f64,
    pub t_right: f64,
    pub t_left: f64,
    /// Harmonic window whose sidebands must fit below the grid top.
    pub k_max: i32,
}

impl OracleParams {
    /// `ω_r = 50γ₀`, `Λ = 10ω_r`, otherwise the default machine; `δω = ω_d/48`
    /// so that `ω_d/2` and `3ω_d/2` are grid points and 33 driving periods
    /// stay below the recurrence time `2π/δω`.
    pub fn reduced_scale() -> Self {
        let omega_r = 50.0;
        let omega_d = omega_r / 11f64.sqrt();
        Self {
            omega_r,
            omega_d,
            amplitude: omega_r * omega_r / 32.0,
            gamma0: 1.0,
            cutoff: 10.0 * omega_r,
            mass: 10.0,
            env_mass: 1.0,
            modes: 400,
            spacing: omega_d / 48.0,
            t_right: 20.0,
            t_left: 5.0,
            k_max: 2,
        }
    }

    pub fn omega_max(&self) -> f64 {
        self.modes as f64 * self.spacing
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_d
    }

    fn density(&self, omega: f64) -> f64 {
        let l2 = self.cutoff * self.cutoff;
        2.0 * self.mass * self.gamma0 * omega * l2 / (PI * (omega * omega + l2))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel {
    pub params: OracleParams,
    /// `ω_n = nδω`, `n = 1..=N`.
    pub frequencies: Vec<f64>,
    /// `λ_n` with `λ_n² = m_n ω_n I(ω_n) δω`.
    pub couplings: Vec<f64>,
    /// Scaled couplings `κ_n`.
    kappa: Vec<f64>,
    /// `Σ λ_n²/(m m_n ω_n²)` of one reservoir; the bare frequency squared
    /// carries it once per reservoir.
    pub counterterm: f64,
}

/// Largest tolerated mismatch between the discrete counterterm and its continuum value.
pub const COUNTERTERM_TOL: f64 = 0.02;

pub fn build_discrete_model(params: &OracleParams) -> Result<DiscreteModel> {
    let p = *params;
    if p.modes < 100 {
        return Err(Error::Oracle(format!("need at least 100 modes per reservoir, got {}", p.modes)));
    }
    for (what, v) in [
        ("omega_r", p.omega_r),
        ("omega_d", p.omega_d),
        ("spacing", p.spacing),
        ("cutoff", p.cutoff),
        ("mass", p.mass),
        ("env_mass", p.env_mass),
    ] {
        if !(v > 0.0) {
            return Err(Error::domain(what, "> 0", v));
        }
    }
    if !(p.gamma0 >= 0.0) || !(p.t_right >= 0.0) || !(p.t_left >= 0.0) {
        return Err(Error::Oracle("damping and temperatures must be >= 0".into()));
    }
    let needed = (2.0 * p.omega_r).max(p.omega_d * p.k_max as f64 + p.omega_r);
    if p.omega_max() < needed {
        return Err(Error::Oracle(format!(
            "grid top {:.4} below {needed:.4}; use at least {} modes",
            p.omega_max(),
            (needed / p.spacing).ceil()
        )));
    }
    let frequencies: Vec<f64> = (1..=p.modes).map(|n| n as f64 * p.spacing).collect();
    let couplings: Vec<f64> = frequencies
        .iter()
        .map(|&w| (p.env_mass * w * p.density(w) * p.spacing).sqrt())
        .collect();
    let kappa = frequencies
        .iter()
        .map(|&w| (p.density(w) * p.spacing / (p.mass * p.omega_r)).sqrt())
        .collect();
    let counterterm = frequencies
        .iter()
        .zip(&couplings)
        .map(|(&w, &l)| l * l / (p.mass * p.env_mass * w * w))
        .sum();
    let model = DiscreteModel { params: p, frequencies, couplings, kappa, counterterm };
    let mismatch = model.counterterm_mismatch();
    if mismatch > COUNTERTERM_TOL {
        let suggested = (p.modes as f64 * mismatch / (0.5 * COUNTERTERM_TOL)).ceil();
        return Err(Error::Oracle(format!(
            "grid too coarse: counterterm off by {:.2}%; use at least {suggested} modes",
            100.0 * mismatch
        )));
    }
    Ok(model)
}

impl DiscreteModel {
    pub fn dim(&self) -> usize {
        2 + 2 * self.params.modes
    }

    /// Continuum counterterm on the same band, `(2γ₀Λ/π) atan(ω_max/Λ)`.
    pub fn continuum_counterterm(&self) -> f64 {
        let p = &self.params;
        2.0 * p.gamma0 * p.cutoff / PI * (p.omega_max() / p.cutoff).atan()
    }

    pub fn counterterm_mismatch(&self) -> f64 {
        let c = self.continuum_counterterm();
        if c == 0.0 {
            self.counterterm.abs()
        } else {
            (self.counterterm / c - 1.0).abs()
        }
    }

    /// Relative deviation of `Σ λ_n²/(m_n ω_n)` from `∫₀^{ω_max} I dω`.
    pub fn continuum_sum_deviation(&self) -> f64 {
        let p = &self.params;
        let sum: f64 = self
            .frequencies
            .iter()
            .zip(&self.couplings)
            .map(|(&w, &l)| l * l / (p.env_mass * w))
            .sum();
        let integral = p.mass * p.gamma0 * p.cutoff * p.cutoff / PI
            * (1.0 + (p.omega_max() / p.cutoff).powi(2)).ln();
        if integral == 0.0 {
            sum.abs()
        } else {
            (sum / integral - 1.0).abs()
        }
    }

    fn bare_frequency_sq(&self, t: f64) -> f64 {
        let p = &self.params;
        p.omega_r * p.omega_r + 2.0 * self.counterterm + p.amplitude * (p.omega_d * t).cos()
    }

    fn occupation(&self, side: Side, omega: f64) -> f64 {
        let t = match side {
            Side::R => self.params.t_right,
            Side::L => self.params.t_left,
        };
        if t == 0.0 {
            0.0
        } else {
            1.0 / (omega / t).exp_m1()
        }
    }

    /// Derivative of each column of `phi` under the bright-mode flow.
    fn bright_flow(&self, t: f64, phi: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let n = self.dim();
        let wr = self.params.omega_r;
        let v = self.bare_frequency_sq(t) / wr;
        for (col, dst) in phi.as_slice().chunks_exact(n).zip(out.as_mut_slice().chunks_exact_mut(n)) {
            let x = col[0];
            let mut force = 0.0;
            for (b, (&w, &k)) in self.frequencies.iter().zip(&self.kappa).enumerate() {
                let kb = SQRT_2 * k;
                let (q, p) = (col[2 + 2 * b], col[3 + 2 * b]);
                force += kb * q;
                dst[2 + 2 * b] = w * p;
                dst[3 + 2 * b] = -w * q - kb * x;
            }
            dst[0] = wr * col[1];
            dst[1] = -v * x - force;
        }
    }
}

/// A mode whose reduced covariance is recorded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeRef {
    System,
    /// Mode `n` (1-based) of one reservoir.
    Bath(Side, usize),
}

/// Reduced covariance of the tracked modes at each sample time, in the lab frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceTrajectory {
    pub tracked: Vec<ModeRef>,
    pub frequencies: Vec<f64>,
    pub times: Vec<f64>,
    /// `2k × 2k` covariance of the `k` tracked modes, `(Q, P)` per mode.
    pub blocks: Vec<DMatrix<f64>>,
    pub samples_per_period: usize,
    pub period: f64,
    /// Largest relative change of the global symplectic spectrum.
    pub symplectic_drift: f64,
}

impl CovarianceTrajectory {
    /// Delimited dump: time, then the upper triangle of each reduced block row by row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = 2 * self.tracked.len();
        let mut header = vec!["t".to_string()];
        for i in 0..d {
            for j in i..d {
                header.push(format!("s{i}{j}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for (t, b) in self.times.iter().zip(&self.blocks) {
            write!(w, "{t:.11e}")?;
            for i in 0..d {
                for j in i..d {
                    write!(w, ",{:.11e}", b[(i, j)])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Largest relative drift of the global symplectic spectrum accepted.
pub const SYMPLECTIC_TOL: f64 = 1e-6;

/// Tracked observable as coefficients on (system + bright, own dark mode).
struct Row {
    bright: Vec<f64>,
    dark: Option<(usize, [f64; 2])>,
}

/// Propagates the full Gaussian state and records the tracked modes.
///
/// The one-period propagator is built with fixed-step RK4 (`dt` rounded down
/// to a whole number of steps per sample); later periods reuse it.
pub fn evolve_covariance(
    model: &DiscreteModel,
    tracked: &[ModeRef],
    t_final: f64,
    dt: f64,
    samples_per_period: usize,
) -> Result<CovarianceTrajectory> {
    let p = &model.params;
    if !(dt > 0.0) || dt > 0.05 / p.omega_max() {
        return Err(Error::Oracle(format!(
            "time step {dt} must be in (0, 0.05/omega_max = {}]",
            0.05 / p.omega_max()
        )));
    }
    let period = p.period();
    let periods = (t_final / period).ceil().max(1.0) as usize;
    let recurrence = 2.0 * PI / p.spacing;
    if periods as f64 * period >= recurrence {
        return Err(Error::Oracle(format!(
            "run of {:.4} reaches the recurrence time {recurrence:.4}",
            periods as f64 * period
        )));
    }
    let samples = samples_per_period.max(1);
    for m in tracked {
        if let ModeRef::Bath(_, n) = m {
            if *n == 0 || *n > p.modes {
                return Err(Error::Oracle(format!("mode index {n} outside 1..={}", p.modes)));
            }
        }
    }
    let per_sample = ((period / samples as f64) / dt).ceil() as usize;
    let steps = per_sample * samples;
    let h = period / steps as f64;

    let n = model.dim();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let bright_rows: Vec<usize> = tracked
        .iter()
        .flat_map(|m| match m {
            ModeRef::System => [0, 1],
            ModeRef::Bath(_, k) => [2 + 2 * (k - 1), 3 + 2 * (k - 1)],
        })
        .collect();
    let r = bright_rows.len();
    let mut rows_at = DMatrix::<f64>::zeros(samples * r, n);
    let (mut k1, mut k2, mut k3, mut k4) = (
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
    );
    let mut tmp = DMatrix::zeros(n, n);
    for step in 0..steps {
        if step % per_sample == 0 {
            let s = step / per_sample;
            for (i, &row) in bright_rows.iter().enumerate() {
                rows_at.row_mut(s * r + i).copy_from(&phi.row(row));
            }
        }
        let t = step as f64 * h;
        model.bright_flow(t, &phi, &mut k1);
        tmp.copy_from(&phi);
        axpy(&mut tmp, 0.5 * h, &k1);
        model.bright_flow(t + 0.5 * h, &tmp, &mut k2);
        tmp.copy_from(&phi);
        axpy(&mut tmp, 0.5 * h, &k2);
        model.bright_flow(t + 0.5 * h, &tmp, &mut k3);
        tmp.copy_from(&phi);
        axpy(&mut tmp, h, &k3);
        model.bright_flow(t + h, &tmp, &mut k4);
        axpy(&mut phi, h / 6.0, &k1);
        axpy(&mut phi, h / 3.0, &k2);
        axpy(&mut phi, h / 3.0, &k3);
        axpy(&mut phi, h / 6.0, &k4);
    }
    let floquet = phi;

    let init = InitialState::new(model);
    let mut times = Vec::with_capacity(periods * samples);
    let mut blocks = Vec::with_capacity(periods * samples);
    let mut current = rows_at;
    for period_idx in 0..periods {
        for s in 0..samples {
            let t = period_idx as f64 * period + s as f64 * period / samples as f64;
            let rows: Vec<Row> = tracked
                .iter()
                .enumerate()
                .flat_map(|(i, m)| {
                    let b0 = current.row(s * r + 2 * i).iter().copied().collect::<Vec<_>>();
                    let b1 = current.row(s * r + 2 * i + 1).iter().copied().collect::<Vec<_>>();
                    tracked_rows(model, *m, b0, b1, t)
                })
                .collect();
            let d = rows.len();
            let mut block = DMatrix::zeros(d, d);
            for a in 0..d {
                for b in a..d {
                    let v = init.covariance(&rows[a], &rows[b]);
                    block[(a, b)] = v;
                    block[(b, a)] = v;
                }
            }
            times.push(t);
            blocks.push(block);
        }
        current = &current * &floquet;
    }

    let drift = spectrum_drift(model, &init, &matrix_power(&floquet, periods))?;
    if drift > SYMPLECTIC_TOL {
        return Err(Error::Oracle(format!("symplectic spectrum drifted by {drift:e}; reduce dt")));
    }
    Ok(CovarianceTrajectory {
        tracked: tracked.to_vec(),
        frequencies: tracked
            .iter()
            .map(|m| match m {
                ModeRef::System => p.omega_r,
                ModeRef::Bath(_, k) => model.frequencies[k - 1],
            })
            .collect(),
        times,
        blocks,
        samples_per_period: samples,
        period,
        symplectic_drift: drift,
    })
}

fn tracked_rows(model: &DiscreteModel, m: ModeRef, b0: Vec<f64>, b1: Vec<f64>, t: f64) -> Vec<Row> {
    match m {
        ModeRef::System => vec![Row { bright: b0, dark: None }, Row { bright: b1, dark: None }],
        ModeRef::Bath(side, k) => {
            // R = (B + D)/√2, L = (B − D)/√2; D rotates freely.
            let sign = if side == Side::R { 1.0 } else { -1.0 } / SQRT_2;
            let (s, c) = (model.frequencies[k - 1] * t).sin_cos();
            let scale = |v: Vec<f64>| v.into_iter().map(|x| x / SQRT_2).collect::<Vec<_>>();
            vec![
                Row { bright: scale(b0), dark: Some((k - 1, [sign * c, sign * s])) },
                Row { bright: scale(b1), dark: Some((k - 1, [-sign * s, sign * c])) },
            ]
        }
    }
}

/// Initial product state: system vacuum, each reservoir thermal.
struct InitialState {
    /// Per grid mode: `(σ_BB = σ_DD, σ_BD)` as multiples of the identity.
    modes: Vec<(f64, f64)>,
}

impl InitialState {
    fn new(model: &DiscreteModel) -> Self {
        let modes = model
            .frequencies
            .iter()
            .map(|&w| {
                let nr = 0.5 + model.occupation(Side::R, w);
                let nl = 0.5 + model.occupation(Side::L, w);
                (0.5 * (nr + nl), 0.5 * (nr - nl))
            })
            .collect();
        Self { modes }
    }

    fn covariance(&self, u: &Row, v: &Row) -> f64 {
        let mut acc = 0.5 * (u.bright[0] * v.bright[0] + u.bright[1] * v.bright[1]);
        for (b, &(diag, _)) in self.modes.iter().enumerate() {
            let i = 2 + 2 * b;
            acc += diag * (u.bright[i] * v.bright[i] + u.bright[i + 1] * v.bright[i + 1]);
        }
        let dark_dot = |row: &Row, b: usize, other: &[f64]| match row.dark {
            Some((k, c)) if k == b => c[0] * other[2 + 2 * b] + c[1] * other[3 + 2 * b],
            _ => 0.0,
        };
        for (row, other) in [(u, v), (v, u)] {
            if let Some((b, _)) = row.dark {
                acc += self.modes[b].1 * dark_dot(row, b, &other.bright);
            }
        }
        if let (Some((a, cu)), Some((b, cv))) = (u.dark, v.dark) {
            if a == b {
                acc += self.modes[a].0 * (cu[0] * cv[0] + cu[1] * cv[1]);
            }
        }
        acc
    }
}

fn axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

fn matrix_power(m: &DMatrix<f64>, mut e: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Relative change of the symplectic spectrum of the full (system, bright,
/// dark) state after the bright propagator `phi`. Dark modes only rotate and
/// drop out, so the state is `G Gᵀ` with `G = (φ ⊕ 1) L₀`, and the squared
/// symplectic eigenvalues are the eigenvalues of `AᵀA`, `A = Gᵀ J G`.
fn spectrum_drift(model: &DiscreteModel, init: &InitialState, phi: &DMatrix<f64>) -> Result<f64> {
    let nb = model.dim();
    let modes = model.params.modes;
    let full = nb + 2 * modes;
    // L₀ with σ₀ = L₀L₀ᵀ: per grid mode the (B, D) pair has covariance
    // [[d, o], [o, d]]·1₂ = U diag(d+o, d−o) Uᵀ with U the 45° rotation.
    let mut l0 = DMatrix::<f64>::zeros(full, full);
    let half = 0.5f64.sqrt();
    l0[(0, 0)] = half;
    l0[(1, 1)] = half;
    let mut reference = vec![0.5];
    for (b, &(d, o)) in init.modes.iter().enumerate() {
        let (sp, sm) = ((d + o).sqrt(), (d - o).max(0.0).sqrt());
        for c in 0..2 {
            let bi = 2 + 2 * b + c;
            let di = nb + 2 * b + c;
            l0[(bi, bi)] = half * sp;
            l0[(bi, di)] = half * sm;
            l0[(di, bi)] = half * sp;
            l0[(di, di)] = -half * sm;
        }
        reference.push(d + o);
        reference.push(d - o);
    }
    let mut big = DMatrix::<f64>::identity(full, full);
    big.view_mut((0, 0), (nb, nb)).copy_from(phi);
    let g = &big * &l0;
    let mut jg = DMatrix::<f64>::zeros(full, full);
    for i in 0..full / 2 {
        jg.row_mut(2 * i).copy_from(&g.row(2 * i + 1));
        let neg = -g.row(2 * i);
        jg.row_mut(2 * i + 1).copy_from(&neg);
    }
    let a = g.transpose() * jg;
    let ata = a.transpose() * &a;
    let mut nu: Vec<f64> = ata.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
    nu.sort_by(|x, y| x.total_cmp(y));
    let mut expected: Vec<f64> = reference.iter().flat_map(|&v| [v, v]).collect();
    expected.sort_by(|x, y| x.total_cmp(y));
    if nu.len() != expected.len() {
        return Err(Error::Oracle("symplectic spectrum has the wrong size".into()));
    }
    Ok(nu
        .iter()
        .zip(&expected)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max))
}

/// Full-model reference integrator: `σ' = Mσ + σMᵀ` over system and both
/// reservoirs without the bright/dark reduction. Intended for small models.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectRun {
    pub times: Vec<f64>,
    /// `⟨H(t)⟩` at each time.
    pub energy: Vec<f64>,
    /// Covariance at the final time, ordered (system, R₁…R_N, L₁…L_N).
    pub sigma: DMatrix<f64>,
}

pub fn evolve_covariance_direct(model: &DiscreteModel, t_final: f64, dt: f64) -> Result<DirectRun> {
    let p = &model.params;
    if !(dt > 0.0) || dt > 0.05 / p.omega_max() {
        return Err(Error::Oracle(format!("time step {dt} must be in (0, 0.05/omega_max]")));
    }
    let nm = p.modes;
    let n = 2 + 4 * nm;
    let steps = (t_final / dt).ceil().max(1.0) as usize;
    let h = t_final / steps as f64;
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    sigma[(0, 0)] = 0.5;
    sigma[(1, 1)] = 0.5;
    for (b, &w) in model.frequencies.iter().enumerate() {
        for (offset, side) in [(2, Side::R), (2 + 2 * nm, Side::L)] {
            let v = 0.5 + model.occupation(side, w);
            sigma[(offset + 2 * b, offset + 2 * b)] = v;
            sigma[(offset + 2 * b + 1, offset + 2 * b + 1)] = v;
        }
    }
    let wr = p.omega_r;
    // Row r of Mσ from the sparse generator.
    let apply = |t: f64, s: &DMatrix<f64>| {
        let v = model.bare_frequency_sq(t) / wr;
        let mut out = DMatrix::<f64>::zeros(n, n);
        for c in 0..n {
            out[(0, c)] = wr * s[(1, c)];
            let mut force = v * s[(0, c)];
            for (b, (&w, &k)) in model.frequencies.iter().zip(&model.kappa).enumerate() {
                for offset in [2, 2 + 2 * nm] {
                    let (q, pp) = (offset + 2 * b, offset + 2 * b + 1);
                    force += k * s[(q, c)];
                    out[(q, c)] = w * s[(pp, c)];
                    out[(pp, c)] = -w * s[(q, c)] - k * s[(0, c)];
                }
            }
            out[(1, c)] = -force;
        }
        out
    };
    let energy_of = |t: f64, s: &DMatrix<f64>| {
        let mut e = model.bare_frequency_sq(t) / wr * s[(0, 0)] + wr * s[(1, 1)];
        for (b, (&w, &k)) in model.frequencies.iter().zip(&model.kappa).enumerate() {
            for offset in [2, 2 + 2 * nm] {
                let q = offset + 2 * b;
                e += w * (s[(q, q)] + s[(q + 1, q + 1)]) + 2.0 * k * s[(0, q)];
            }
        }
        0.5 * e
    };
    let deriv = |t: f64, s: &DMatrix<f64>| {
        let ms = apply(t, s);
        &ms + ms.transpose()
    };
    let mut times = vec![0.0];
    let mut energy = vec![energy_of(0.0, &sigma)];
    for step in 0..steps {
        let t = step as f64 * h;
        let k1 = deriv(t, &sigma);
        let k2 = deriv(t + 0.5 * h, &(&sigma + &k1 * (0.5 * h)));
        let k3 = deriv(t + 0.5 * h, &(&sigma + &k2 * (0.5 * h)));
        let k4 = deriv(t + h, &(&sigma + &k3 * h));
        sigma += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        times.push(t + h);
        energy.push(energy_of(t + h, &sigma));
    }
    Ok(DirectRun { times, energy, sigma })
}

/// Reduced block of `modes` from a [`DirectRun`] covariance.
pub fn direct_block(model: &DiscreteModel, sigma: &DMatrix<f64>, modes: &[ModeRef]) -> DMatrix<f64> {
    let nm = model.params.modes;
    let idx: Vec<usize> = modes
        .iter()
        .flat_map(|m| {
            let base = match m {
                ModeRef::System => 0,
                ModeRef::Bath(Side::R, k) => 2 + 2 * (k - 1),
                ModeRef::Bath(Side::L, k) => 2 + 2 * nm + 2 * (k - 1),
            };
            [base, base + 1]
        })
        .collect();
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| sigma[(idx[i], idx[j])])
}

/// Least-squares polynomial fit.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    /// Coefficients in ascending powers of `t`.
    pub coefficients: Vec<f64>,
    /// Standard errors of the coefficients.
    pub errors: Vec<f64>,
    pub r2: f64,
}

pub fn polyfit(t: &[f64], y: &[f64], degree: usize) -> Result<Fit> {
    let n = t.len();
    let k = degree + 1;
    if n <= k {
        return Err(Error::Oracle(format!("{n} points cannot fit degree {degree}")));
    }
    // Centre and scale the abscissa for conditioning, then map back.
    let t0 = t.iter().sum::<f64>() / n as f64;
    let span = t.iter().map(|x| (x - t0).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(n, k, |i, j| ((t[i] - t0) / span).powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    let inv = ata
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Oracle("singular fit".into()))?;
    let c = &inv * a.transpose() * &b;
    let resid = &b - &a * &c;
    let ss_res = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let s2 = ss_res / (n - k) as f64;
    // Back to powers of t: Σ c_j ((t − t0)/span)^j.
    let mut coefficients = vec![0.0; k];
    let mut variances = vec![0.0; k];
    for j in 0..k {
        let cj = c[j] / span.powi(j as i32);
        let var_j = s2 * inv[(j, j)] / span.powi(2 * j as i32);
        for m in 0..=j {
            let binom = binomial(j, m) * (-t0).powi((j - m) as i32);
            coefficients[m] += cj * binom;
            if m == j {
                variances[m] += var_j;
            }
        }
    }
    Ok(Fit {
        coefficients,
        errors: variances.iter().map(|v| v.sqrt()).collect(),
        r2,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fit results for one tracked mode pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedRates {
    /// `Γ±` from `det γ ≈ a + bt + (Γ/4)t²`.
    pub gamma: f64,
    /// Slopes of `2√det α` for modes i and j.
    pub purity_slope: (f64, f64),
    /// Energy slopes `Q̇` for modes i and j.
    pub heat: (f64, f64),
    /// Quadratic coefficient of `2√det α_i` and its standard error.
    pub purity_curvature: (f64, f64),
    pub r2_gamma: f64,
    pub r2_purity: (f64, f64),
    pub r2_heat: (f64, f64),
    /// Cycle-averaged points used in the fits.
    pub cycles: usize,
}

/// Cycles required past the transient.
pub const MIN_FIT_CYCLES: usize = 20;

/// Averages the tracked pair `(i, j)` (indices into the tracked list) in the
/// interaction picture over the common period of drive and modes and fits the band growth laws over `t ≥ transient`.
pub fn extract_band_rates(
    traj: &CovarianceTrajectory,
    pair: (usize, usize),
    omega_d: f64,
    transient: f64,
) -> Result<FittedRates> {
    let (i, j) = pair;
    if i >= traj.tracked.len() || j >= traj.tracked.len() || i == j {
        return Err(Error::Oracle("pair indices must name two distinct tracked modes".into()));
    }
    if ((2.0 * PI / omega_d) - traj.period).abs() > 1e-9 * traj.period {
        return Err(Error::Oracle("trajectory was not sampled on this driving period".into()));
    }
    let s = traj.samples_per_period;
    let window = common_period(&[traj.frequencies[i], traj.frequencies[j]], omega_d);
    let start = traj.times.iter().position(|&t| t >= transient).unwrap_or(traj.times.len());
    let start = start.div_ceil(s) * s;
    let per_sample: Vec<DMatrix<f64>> = traj
        .times
        .iter()
        .zip(&traj.blocks)
        .skip(start)
        .map(|(&t, b)| interaction_pair(traj, b, (i, j), t))
        .collect();
    // Windows of `window` periods sliding by one period.
    let mut ts = Vec::new();
    let mut averaged = Vec::new();
    let mut first = 0;
    while first + window * s <= per_sample.len() {
        let acc = per_sample[first..first + window * s]
            .iter()
            .fold(DMatrix::<f64>::zeros(4, 4), |acc, m| acc + m);
        averaged.push(acc / (window * s) as f64);
        ts.push(traj.times[start + first] + 0.5 * window as f64 * traj.period);
        first += s;
    }
    let cycles = per_sample.len() / s;
    if cycles < MIN_FIT_CYCLES || averaged.len() < 6 {
        return Err(Error::Oracle(format!(
            "{cycles} cycles past the transient with a {window}-period window; need {MIN_FIT_CYCLES}"
        )));
    }
    let (wi, wj) = (traj.frequencies[i], traj.frequencies[j]);
    let sqrt_det = |m: &DMatrix<f64>, o: usize| {
        2.0 * (m[(o, o)] * m[(o + 1, o + 1)] - m[(o, o + 1)] * m[(o + 1, o)]).sqrt()
    };
    let pur_i: Vec<f64> = averaged.iter().map(|m| sqrt_det(m, 0)).collect();
    let pur_j: Vec<f64> = averaged.iter().map(|m| sqrt_det(m, 2)).collect();
    let en_i: Vec<f64> = averaged.iter().map(|m| 0.5 * wi * (m[(0, 0)] + m[(1, 1)])).collect();
    let en_j: Vec<f64> = averaged.iter().map(|m| 0.5 * wj * (m[(2, 2)] + m[(3, 3)])).collect();
    let det_g: Vec<f64> = averaged.iter().map(|m| m[(0, 2)] * m[(1, 3)] - m[(0, 3)] * m[(1, 2)]).collect();

    let fit_pi = checked(polyfit(&ts, &pur_i, 1)?, "purity of band i", &ts, mean_abs(&pur_i))?;
    let fit_pj = checked(polyfit(&ts, &pur_j, 1)?, "purity of band j", &ts, mean_abs(&pur_j))?;
    let fit_ei = checked(polyfit(&ts, &en_i, 1)?, "energy of band i", &ts, mean_abs(&en_i))?;
    let fit_ej = checked(polyfit(&ts, &en_j, 1)?, "energy of band j", &ts, mean_abs(&en_j))?;
    let fit_g = checked(polyfit(&ts, &det_g, 2)?, "cross determinant", &ts, mean_abs(&pur_i) * mean_abs(&pur_j) / 4.0)?;
    let curv = polyfit(&ts, &pur_i, 2)?;
    Ok(FittedRates {
        gamma: 4.0 * fit_g.coefficients[2],
        purity_slope: (fit_pi.coefficients[1], fit_pj.coefficients[1]),
        heat: (fit_ei.coefficients[1], fit_ej.coefficients[1]),
        purity_curvature: (curv.coefficients[2], curv.errors[2]),
        r2_gamma: fit_g.r2,
        r2_purity: (fit_pi.r2, fit_pj.r2),
        r2_heat: (fit_ei.r2, fit_ej.r2),
        cycles,
    })
}

/// Smallest number of driving periods (at most 48) after which every
/// frequency in `freqs` has also completed whole cycles; 1 if none fits.
fn common_period(freqs: &[f64], omega_d: f64) -> usize {
    (1..=48)
        .find(|&w| {
            freqs.iter().all(|&f| {
                let cycles = w as f64 * f / omega_d;
                (cycles - cycles.round()).abs() < 1e-6
            })
        })
        .unwrap_or(1)
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// Changes smaller than this fraction of the level count as flat.
const FLAT_CHANGE: f64 = 1e-8;

/// Rejects a poor fit unless the trend it describes is indistinguishable from
/// zero or negligible against `level`.
fn checked(fit: Fit, quantity: &'static str, ts: &[f64], level: f64) -> Result<Fit> {
    let span = ts.last().unwrap() - ts[0];
    let top = fit.coefficients.len() - 1;
    let trend = (fit.coefficients[top] * span.powi(top as i32)).abs();
    let noise = fit.errors[top] * span.powi(top as i32);
    if fit.r2 < 0.9 && trend > 3.0 * noise && trend > FLAT_CHANGE * level {
        return Err(Error::PoorFit { quantity, r2: fit.r2 });
    }
    Ok(fit)
}

/// 4×4 block of tracked modes `(i, j)` rotated back by their free evolution.
fn interaction_pair(traj: &CovarianceTrajectory, block: &DMatrix<f64>, (i, j): (usize, usize), t: f64) -> DMatrix<f64> {
    let idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
    let sub = DMatrix::from_fn(4, 4, |a, b| block[(idx[a], idx[b])]);
    let mut rot = DMatrix::<f64>::zeros(4, 4);
    for (o, w) in [(0, traj.frequencies[i]), (2, traj.frequencies[j])] {
        // Free flow is R(ωt) = [[c, s], [−s, c]]; undo it.
        let (s, c) = (w * t).sin_cos();
        rot[(o, o)] = c;
        rot[(o, o + 1)] = -s;
        rot[(o + 1, o)] = s;
        rot[(o + 1, o + 1)] = c;
    }
    &rot * sub * rot.transpose()
}

/// One fitted quantity next to its analytic prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub quantity: String,
    pub fitted: f64,
    pub analytic: f64,
}

impl ComparisonRow {
    pub fn relative_error(&self) -> f64 {
        ((self.fitted - self.analytic) / self.analytic).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleComparison {
    pub rows: Vec<ComparisonRow>,
    pub symplectic_drift: f64,
    pub counterterm_mismatch: f64,
    pub continuum_sum_deviation: f64,
    pub trajectory: CovarianceTrajectory,
}

impl OracleComparison {
    pub fn worst_relative_error(&self) -> f64 {
        self.rows.iter().map(ComparisonRow::relative_error).fold(0.0, f64::max)
    }
}

/// Options for [`compare_with_analytic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleRun {
    /// Grid index `n` of band i (right); the nonresonant partner is
    /// `ω_d − ω_i` and the resonant one `ω_i + ω_d` on the left.
    pub band: usize,
    pub periods: usize,
    pub samples_per_period: usize,
    pub dt: f64,
    /// Excluded initial interval, in units of `1/γ₀`.
    pub transient: f64,
}

impl OracleRun {
    pub fn reduced_scale(params: &OracleParams) -> Self {
        Self {
            // ω_d/3; at ω_d/2 the nonresonant partner has the same
            // frequency and same-frequency transport swamps it.
            band: (params.omega_d / (3.0 * params.spacing)).round() as usize,
            periods: 33,
            samples_per_period: 16,
            dt: params.period() / 2048.0,
            transient: 5.0,
        }
    }
}

/// Runs the discrete model with bands at `ω_i`, `ω_d − ω_i` and `ω_i + ω_d`
/// and compares fitted Γ₊, Γ₋, heat currents and purity slopes with the
/// band formulas evaluated at `Δω = δω`.
pub fn compare_with_analytic(params: &OracleParams, run: &OracleRun) -> Result<OracleComparison> {
    let model = build_discrete_model(params)?;
    let per_drive = (params.omega_d / params.spacing).round() as usize;
    if ((per_drive as f64) * params.spacing - params.omega_d).abs() > 1e-9 * params.omega_d {
        return Err(Error::Oracle("omega_d must be a whole number of grid spacings".into()));
    }
    let i = run.band;
    if i == 0 || i >= per_drive || i + per_drive > params.modes {
        return Err(Error::Oracle(format!("band index {i} has no partner on the grid")));
    }
    let tracked = [
        ModeRef::Bath(Side::R, i),
        ModeRef::Bath(Side::L, per_drive - i),
        ModeRef::Bath(Side::L, i + per_drive),
    ];
    let t_final = run.periods as f64 * params.period();
    let traj = evolve_covariance(&model, &tracked, t_final, run.dt, run.samples_per_period)?;
    let transient = run.transient / params.gamma0.max(f64::MIN_POSITIVE);
    let nonres = extract_band_rates(&traj, (0, 1), params.omega_d, transient)?;
    let res = extract_band_rates(&traj, (0, 2), params.omega_d, transient)?;

    let reservoirs = Reservoirs::symmetric(params.gamma0, params.cutoff, params.mass, params.env_mass)?;
    let driving = DrivingSpec::cosine(params.omega_r, params.omega_d, params.amplitude)?;
    let gc = GreenCoefficients::auto_order(&reservoirs, &driving, &[params.omega_d / 2.0, params.omega_r])?;
    let env = ThermalEnvironment::new(params.t_right, params.t_left)?;
    let band = |n: usize, side| BandSpec::new(model.frequencies[n - 1], params.spacing, side);
    let bi = band(i, Side::R)?;
    let bj = band(per_drive - i, Side::L)?;
    let bk = band(i + per_drive, Side::L)?;
    let plus = bands::gamma_plus(&BandPair { band_i: bi, band_j: bj, relation: Relation::NonResonant(1) }, &env, &gc)?;
    let minus = bands::gamma_minus(&BandPair { band_i: bi, band_j: bk, relation: Relation::Resonant(1) }, &env, &gc)?;
    let rate = |b: &BandSpec| bands::band_rates(b, &env, &gc).map(|r| r.total());
    let heat = |b: &BandSpec| bands::heat_current(b, &env, &gc).map(|q| q.total());

    let row = |q: &str, fitted, analytic| ComparisonRow { quantity: q.into(), fitted, analytic };
    let rows = vec![
        row("gamma_plus", nonres.gamma, plus),
        row("gamma_minus", res.gamma, minus),
        row("heat_i", nonres.heat.0, heat(&bi)?),
        row("heat_j_nonresonant", nonres.heat.1, heat(&bj)?),
        row("heat_j_resonant", res.heat.1, heat(&bk)?),
        row("purity_slope_i", nonres.purity_slope.0, rate(&bi)?),
        row("purity_slope_j_nonresonant", nonres.purity_slope.1, rate(&bj)?),
        row("purity_slope_j_resonant", res.purity_slope.1, rate(&bk)?),
    ];
    Ok(OracleComparison {
        rows,
        symplectic_drift: traj.symplectic_drift,
        counterterm_mismatch: model.counterterm_mismatch(),
        continuum_sum_deviation: model.continuum_sum_deviation(),
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyfit_recovers_exact_quadratic() {
        let t: Vec<f64> = (0..20).map(|i| 5.0 + 0.4 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 1.5 - 0.25 * x + 3e-3 * x * x).collect();
        let f = polyfit(&t, &y, 2).unwrap();
        assert!((f.coefficients[0] - 1.5).abs() < 1e-10);
        assert!((f.coefficients[1] + 0.25).abs() < 1e-11);
        assert!((f.coefficients[2] - 3e-3).abs() < 1e-12);
        assert!(f.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn matrix_power_matches_repeated_product() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.2, 0.9]);
        let direct = &m * &m * &m * &m * &m;
        assert!((matrix_power(&m, 5) - direct).amax() < 1e-15);
    }
}
