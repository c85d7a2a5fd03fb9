//! Spectral densities, the static Green function, and the perturbative
//! Floquet recurrence for the Laplace-domain coefficients `Ã_k(s)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    R,
    L,
}

/// Lorentz–Drude density `I(ω) = 2mγ₀ωΛ²/π(ω² + Λ²)` of one reservoir.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralDensity {
    pub gamma0: f64,
    pub cutoff: f64,
    /// System mass `m`.
    pub mass: f64,
    /// Mass of each reservoir oscillator.
    pub env_mass: f64,
    pub side: Side,
}

impl SpectralDensity {
    pub fn lorentz_drude(gamma0: f64, cutoff: f64, mass: f64, env_mass: f64, side: Side) -> Result<Self> {
        if !(gamma0 > 0.0) {
            return Err(Error::domain("gamma0", "> 0", gamma0));
        }
        if !(cutoff > 0.0) {
            return Err(Error::domain("cutoff", "> 0", cutoff));
        }
        if !(mass > 0.0) {
            return Err(Error::domain("mass", "> 0", mass));
        }
        if !(env_mass > 0.0) {
            return Err(Error::domain("env_mass", "> 0", env_mass));
        }
        Ok(Self { gamma0, cutoff, mass, env_mass, side })
    }

    pub fn value(&self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::domain("frequency", ">= 0", omega));
        }
        Ok(self.at(omega))
    }

    /// Unchecked density; zero for non-positive frequencies.
    pub(crate) fn at(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        let l2 = self.cutoff * self.cutoff;
        2.0 * self.mass * self.gamma0 * omega * l2 / (PI * (omega * omega + l2))
    }

    /// `γ(t) = γ₀Λe^{−Λt}`.
    pub fn dissipation_kernel(&self, t: f64) -> f64 {
        self.gamma0 * self.cutoff * (-self.cutoff * t).exp()
    }

    /// `γ̃(s) = γ₀Λ/(s + Λ)`.
    pub fn dissipation_laplace(&self, s: Complex64) -> Result<Complex64> {
        if s.re < 0.0 {
            return Err(Error::domain("Re s", ">= 0", s.re));
        }
        Ok(self.laplace(s))
    }

    fn laplace(&self, s: Complex64) -> Complex64 {
        self.gamma0 * self.cutoff / (s + self.cutoff)
    }
}

/// The two reservoirs; the system is damped by both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reservoirs {
    pub right: SpectralDensity,
    pub left: SpectralDensity,
}

impl Reservoirs {
    pub fn new(right: SpectralDensity, left: SpectralDensity) -> Result<Self> {
        if right.side != Side::R || left.side != Side::L {
            return Err(Error::Config {
                key: "side".into(),
                reason: "reservoirs must be given as (R, L)".into(),
            });
        }
        if right.mass != left.mass {
            return Err(Error::Config {
                key: "m".into(),
                reason: "both densities must refer to the same system mass".into(),
            });
        }
        Ok(Self { right, left })
    }

    /// Identical Lorentz–Drude densities on both sides.
    pub fn symmetric(gamma0: f64, cutoff: f64, mass: f64, env_mass: f64) -> Result<Self> {
        Ok(Self {
            right: SpectralDensity::lorentz_drude(gamma0, cutoff, mass, env_mass, Side::R)?,
            left: SpectralDensity::lorentz_drude(gamma0, cutoff, mass, env_mass, Side::L)?,
        })
    }

    pub fn side(&self, side: Side) -> &SpectralDensity {
        match side {
            Side::R => &self.right,
            Side::L => &self.left,
        }
    }

    pub fn mass(&self) -> f64 {
        self.right.mass
    }

    /// Total `γ̃(s)` felt by the system.
    pub fn dissipation_laplace(&self, s: Complex64) -> Result<Complex64> {
        Ok(self.right.dissipation_laplace(s)? + self.left.dissipation_laplace(s)?)
    }

    /// Total `γ(0)`, the frequency renormalisation absorbed into `ω_r²`.
    pub fn gamma_at_zero(&self) -> f64 {
        self.right.dissipation_kernel(0.0) + self.left.dissipation_kernel(0.0)
    }
}

/// `V(t) = ω_r² + Σ_{k≠0} V_k e^{ikω_d t}` with `V_{−k} = V_k*`.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingSpec {
    pub omega_r: f64,
    pub omega_d: f64,
    /// `(k, V_k)` for `k > 0`.
    harmonics: Vec<(i32, Complex64)>,
}

impl DrivingSpec {
    pub fn new(omega_r: f64, omega_d: f64, harmonics: &[(i32, Complex64)]) -> Result<Self> {
        if !(omega_r > 0.0) {
            return Err(Error::domain("omega_r", "> 0", omega_r));
        }
        if !(omega_d > 0.0) {
            return Err(Error::domain("omega_d", "> 0", omega_d));
        }
        let mut list: Vec<(i32, Complex64)> = Vec::new();
        for &(k, v) in harmonics {
            if k == 0 {
                return Err(Error::Config {
                    key: "harmonics".into(),
                    reason: "the static part belongs in omega_r".into(),
                });
            }
            let (k, v) = if k < 0 { (-k, v.conj()) } else { (k, v) };
            match list.iter_mut().find(|(q, _)| *q == k) {
                Some(entry) if entry.1 != v => {
                    return Err(Error::Config {
                        key: "harmonics".into(),
                        reason: format!("V_{k} and V_-{k} are not complex conjugates"),
                    })
                }
                Some(_) => {}
                None => list.push((k, v)),
            }
        }
        list.sort_by_key(|&(k, _)| k);
        Ok(Self { omega_r, omega_d, harmonics: list })
    }

    /// `V(t) = ω_r² + V cos(ω_d t)`.
    pub fn cosine(omega_r: f64, omega_d: f64, amplitude: f64) -> Result<Self> {
        Self::new(omega_r, omega_d, &[(1, Complex64::new(amplitude / 2.0, 0.0))])
    }

    pub fn undriven(omega_r: f64, omega_d: f64) -> Result<Self> {
        Self::new(omega_r, omega_d, &[])
    }

    pub fn coeff(&self, n: i32) -> Complex64 {
        let v = self
            .harmonics
            .iter()
            .find(|(k, _)| *k == n.abs())
            .map_or(Complex64::new(0.0, 0.0), |&(_, v)| v);
        if n < 0 {
            v.conj()
        } else {
            v
        }
    }

    pub fn max_harmonic(&self) -> i32 {
        self.harmonics.iter().map(|&(k, _)| k).max().unwrap_or(0)
    }

    /// Nonzero `(n, V_n)` for both signs of `n`.
    fn terms(&self) -> Vec<(i32, Complex64)> {
        self.harmonics
            .iter()
            .flat_map(|&(k, v)| [(k, v), (-k, v.conj())])
            .filter(|(_, v)| v.norm() > 0.0)
            .collect()
    }

    /// Orders `n ≤ 4` whose parametric tongue `nω_d ≈ 2ω_r` lies within the
    /// first-order tongue width `Σ|V_k|/ω_r`.
    pub fn parametric_proximity(&self) -> Option<i32> {
        let width = self.harmonics.iter().map(|(_, v)| v.norm()).sum::<f64>() / self.omega_r;
        (1..=4).find(|&n| (n as f64 * self.omega_d - 2.0 * self.omega_r).abs() < width)
    }
}

/// `g̃(s) = [s² + ω_r² + sγ̃(s)]^{−1}`.
pub fn static_green(reservoirs: &Reservoirs, omega_r: f64, s: Complex64) -> Result<Complex64> {
    let den = s * s + omega_r * omega_r + s * reservoirs.dissipation_laplace(s)?;
    if den.norm() < 1e-14 * omega_r * omega_r {
        return Err(Error::Pole { re: s.re, im: s.im });
    }
    Ok(den.inv())
}

#[derive(Clone, Debug, PartialEq)]
pub enum GreenWarning {
    /// Harmonic window narrower than the order of the expansion requires.
    Truncation { k_max: i32, required: i32 },
    /// Second-order self-energy correction to `Ã_0` exceeds half of `g̃` at `omega`.
    Perturbative { omega: f64, ratio: f64 },
    /// Driving frequency close to the `n`-th parametric resonance.
    ParametricResonance { n: i32 },
}

impl fmt::Display for GreenWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GreenWarning::Truncation { k_max, required } => {
                write!(f, "harmonic window {k_max} below required {required}")
            }
            GreenWarning::Perturbative { omega, ratio } => {
                write!(f, "perturbative ratio {ratio:.3} at omega = {omega:.4}")
            }
            GreenWarning::ParametricResonance { n } => {
                write!(f, "driving near parametric resonance of order {n}")
            }
        }
    }
}

/// `Ã_k(s)` for `|k| ≤ k_max` at perturbative order `m`.
///
/// Evaluations are memoised per `s`; the cache is shared between threads.
pub struct GreenCoefficients {
    reservoirs: Reservoirs,
    driving: DrivingSpec,
    order: usize,
    k_max: i32,
    warnings: Vec<GreenWarning>,
    cache: RwLock<HashMap<(u64, u64), Arc<Vec<Complex64>>>>,
}

impl fmt::Debug for GreenCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreenCoefficients")
            .field("order", &self.order)
            .field("k_max", &self.k_max)
            .field("warnings", &self.warnings)
            .finish_non_exhaustive()
    }
}

impl Clone for GreenCoefficients {
    fn clone(&self) -> Self {
        Self {
            reservoirs: self.reservoirs,
            driving: self.driving.clone(),
            order: self.order,
            k_max: self.k_max,
            warnings: self.warnings.clone(),
            cache: RwLock::default(),
        }
    }
}

/// Solver with the default window `K_max = 2·(max harmonic)·max(m, 1)`.
pub fn solve_green_coefficients(
    reservoirs: &Reservoirs,
    driving: &DrivingSpec,
    order: usize,
) -> Result<GreenCoefficients> {
    let k_max = 2 * driving.max_harmonic() * order.max(1) as i32;
    GreenCoefficients::with_window(reservoirs, driving, order, k_max)
}

/// Residual below which [`GreenCoefficients::auto_order`] stops raising the order.
pub const AUTO_RESIDUAL: f64 = 1e-8;
pub const MAX_ORDER: usize = 6;

impl GreenCoefficients {
    pub fn with_window(
        reservoirs: &Reservoirs,
        driving: &DrivingSpec,
        order: usize,
        k_max: i32,
    ) -> Result<Self> {
        if k_max < 0 {
            return Err(Error::domain("k_max", ">= 0", k_max as f64));
        }
        let mut gc = Self {
            reservoirs: *reservoirs,
            driving: driving.clone(),
            order,
            k_max,
            warnings: Vec::new(),
            cache: RwLock::default(),
        };
        let required = order as i32 * driving.max_harmonic();
        if k_max < required {
            gc.warnings.push(GreenWarning::Truncation { k_max, required });
        }
        if let Some(n) = driving.parametric_proximity() {
            gc.warnings.push(GreenWarning::ParametricResonance { n });
        }
        if let Some((omega, ratio)) = gc.worst_self_energy()? {
            if ratio > 0.5 {
                gc.warnings.push(GreenWarning::Perturbative { omega, ratio });
            }
        }
        Ok(gc)
    }

    /// Smallest order in `2..=MAX_ORDER` whose residual at every probe
    /// frequency is below [`AUTO_RESIDUAL`].
    pub fn auto_order(reservoirs: &Reservoirs, driving: &DrivingSpec, probes: &[f64]) -> Result<Self> {
        let mut order = 2;
        loop {
            let gc = solve_green_coefficients(reservoirs, driving, order)?;
            let mut worst = 0.0f64;
            for &w in probes {
                worst = worst.max(residual_check(&gc, Complex64::new(0.0, w))?);
            }
            if worst < AUTO_RESIDUAL || order == MAX_ORDER {
                return Ok(gc);
            }
            order += 1;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }
    pub fn k_max(&self) -> i32 {
        self.k_max
    }
    pub fn warnings(&self) -> &[GreenWarning] {
        &self.warnings
    }
    pub fn reservoirs(&self) -> &Reservoirs {
        &self.reservoirs
    }
    pub fn driving(&self) -> &DrivingSpec {
        &self.driving
    }

    pub fn static_green(&self, s: Complex64) -> Result<Complex64> {
        static_green(&self.reservoirs, self.driving.omega_r, s)
    }

    /// `Ã_k(s)`.
    pub fn evaluate(&self, k: i32, s: Complex64) -> Result<Complex64> {
        if k.abs() > self.k_max {
            return Err(Error::HarmonicOutOfWindow { k, k_max: self.k_max });
        }
        Ok(self.all(s)?[(k + self.k_max) as usize])
    }

    /// `Ã_k(iω)`.
    pub fn evaluate_axis(&self, k: i32, omega: f64) -> Result<Complex64> {
        self.evaluate(k, Complex64::new(0.0, omega))
    }

    /// Coefficients for every `k` in the window, indexed by `k + k_max`.
    pub fn all(&self, s: Complex64) -> Result<Arc<Vec<Complex64>>> {
        let key = (s.re.to_bits(), s.im.to_bits());
        if let Some(v) = self.cache.read().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(self.solve(s, self.order)?);
        self.cache
            .write()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&v));
        Ok(v)
    }

    fn shifted_greens(&self, s: Complex64) -> Result<Vec<Complex64>> {
        if s.re < 0.0 {
            return Err(Error::domain("Re s", ">= 0", s.re));
        }
        (-self.k_max..=self.k_max)
            .map(|k| self.static_green(s + Complex64::new(0.0, k as f64 * self.driving.omega_d)))
            .collect()
    }

    fn solve(&self, s: Complex64, order: usize) -> Result<Vec<Complex64>> {
        let g = self.shifted_greens(s)?;
        let k0 = self.k_max as usize;
        let width = g.len();
        let terms = self.driving.terms();
        let mut a = vec![Complex64::new(0.0, 0.0); width];
        a[k0] = g[k0];
        for _ in 0..order {
            let mut next = vec![Complex64::new(0.0, 0.0); width];
            for (idx, out) in next.iter_mut().enumerate() {
                let mut acc = Complex64::new(if idx == k0 { 1.0 } else { 0.0 }, 0.0);
                for &(n, v) in &terms {
                    let src = idx as i64 - n as i64;
                    if (0..width as i64).contains(&src) {
                        acc -= v * a[src as usize];
                    }
                }
                *out = g[idx] * acc;
            }
            a = next;
        }
        Ok(a)
    }

    /// Largest `|Σ_n |V_n|² g̃(s − inω_d) g̃(s)|` on `s = iω`, `ω ∈ [0, 2ω_r]`.
    fn worst_self_energy(&self) -> Result<Option<(f64, f64)>> {
        let terms = self.driving.terms();
        if terms.is_empty() {
            return Ok(None);
        }
        let mut worst = (0.0, 0.0);
        for i in 0..=400 {
            let omega = 2.0 * self.driving.omega_r * i as f64 / 400.0;
            let s = Complex64::new(0.0, omega);
            let g0 = self.static_green(s)?;
            let mut sum = Complex64::new(0.0, 0.0);
            for &(n, v) in &terms {
                let shifted = s - Complex64::new(0.0, n as f64 * self.driving.omega_d);
                sum += v.norm_sqr() * self.static_green(shifted)?;
            }
            let ratio = (sum * g0).norm();
            if ratio > worst.1 {
                worst = (omega, ratio);
            }
        }
        Ok(Some(worst))
    }
}

/// `max_k |g̃⁻¹(s + ikω_d) Ã_k(s) + Σ_{n≠0} V_n Ã_{k−n}(s) − δ_{k0}|`.
pub fn residual_check(gc: &GreenCoefficients, s: Complex64) -> Result<f64> {
    let a = gc.all(s)?;
    let g = gc.shifted_greens(s)?;
    let k0 = gc.k_max as usize;
    let terms = gc.driving.terms();
    let mut worst = 0.0f64;
    for idx in 0..a.len() {
        let mut r = a[idx] / g[idx] - if idx == k0 { 1.0 } else { 0.0 };
        for &(n, v) in &terms {
            let src = idx as i64 - n as i64;
            if (0..a.len() as i64).contains(&src) {
                r += v * a[src as usize];
            }
        }
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// `Ã_k(iω)`.
pub fn evaluate_ak(gc: &GreenCoefficients, k: i32, omega: f64) -> Result<Complex64> {
    gc.evaluate_axis(k, omega)
}
