//! Long-time, cycle-averaged state of two environmental bands: purities,
//! heat currents, cross-correlation generators, and the closed-form
//! correlation measures together with their exact counterparts.

use std::fmt;

use crate::gaussian::{
    self, gaussian_discord_detailed, log_negativity_from_invariants,
    mutual_information_from_invariants, EminBranch, MeasuredSide, SymplecticInvariants,
    TwoModeCovariance,
};
use crate::green::{GreenCoefficients, GreenWarning, Side};
use crate::{Error, Result};

/// Reservoir temperatures in units of the damping constant (`k_B = ħ = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalEnvironment {
    pub t_right: f64,
    pub t_left: f64,
}

impl ThermalEnvironment {
    pub fn new(t_right: f64, t_left: f64) -> Result<Self> {
        for (key, t) in [("T_R", t_right), ("T_L", t_left)] {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::Config {
                    key: key.into(),
                    reason: format!("temperature must be finite and >= 0, got {t}"),
                });
            }
        }
        Ok(Self { t_right, t_left })
    }

    pub fn temperature(&self, side: Side) -> f64 {
        match side {
            Side::R => self.t_right,
            Side::L => self.t_left,
        }
    }

    fn occupation(&self, side: Side, omega: f64) -> f64 {
        occupation(omega, self.temperature(side))
    }
}

/// `n(ω) = 1/(e^{ω/T} − 1)`, zero at `T = 0`.
pub fn planck_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::domain("frequency", "> 0", omega));
    }
    if !(temperature >= 0.0) {
        return Err(Error::domain("temperature", ">= 0", temperature));
    }
    Ok(occupation(omega, temperature))
}

fn occupation(omega: f64, temperature: f64) -> f64 {
    if temperature == 0.0 || omega <= 0.0 {
        0.0
    } else {
        1.0 / (omega / temperature).exp_m1()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandSpec {
    pub omega_center: f64,
    pub delta_omega: f64,
    pub side: Side,
}

impl BandSpec {
    pub fn new(omega_center: f64, delta_omega: f64, side: Side) -> Result<Self> {
        if !(omega_center > 0.0) {
            return Err(Error::domain("band centre", "> 0", omega_center));
        }
        if !(delta_omega > 0.0) {
            return Err(Error::domain("bandwidth", "> 0", delta_omega));
        }
        Ok(Self { omega_center, delta_omega, side })
    }

    /// Bandwidth above 10% of the centre frequency.
    pub fn is_wide(&self) -> bool {
        self.delta_omega > 0.1 * self.omega_center
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `ω_i + ω_j = kω_d`: pair creation.
    NonResonant(i32),
    /// `ω_j = ω_i + kω_d`: resonant transport.
    Resonant(i32),
    Uncorrelated,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::NonResonant(k) => write!(f, "nonresonant k={k}"),
            Relation::Resonant(k) => write!(f, "resonant k={k}"),
            Relation::Uncorrelated => f.write_str("uncorrelated"),
        }
    }
}

/// Band `i` on the right reservoir, band `j` on the left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPair {
    pub band_i: BandSpec,
    pub band_j: BandSpec,
    pub relation: Relation,
}

impl BandPair {
    /// Classifies the pair with tolerance `Δω/2` around the exact conditions.
    pub fn classify(band_i: BandSpec, band_j: BandSpec, omega_d: f64, k_max: i32) -> Result<Self> {
        if band_i.side != Side::R || band_j.side != Side::L {
            return Err(Error::Config {
                key: "side".into(),
                reason: "band i must be on R and band j on L".into(),
            });
        }
        let tol = 0.5 * band_i.delta_omega.max(band_j.delta_omega);
        let (wi, wj) = (band_i.omega_center, band_j.omega_center);
        let relation = (1..=k_max)
            .find(|&k| (wi + wj - k as f64 * omega_d).abs() < tol)
            .map(Relation::NonResonant)
            .or_else(|| {
                (-k_max..=k_max)
                    .find(|&k| (wj - wi - k as f64 * omega_d).abs() < tol)
                    .map(Relation::Resonant)
            })
            .unwrap_or(Relation::Uncorrelated);
        Ok(Self { band_i, band_j, relation })
    }

    /// Partner of `omega_i` in `relation`, i.e. `kω_d − ω_i` or `ω_i + kω_d`.
    pub fn partner(omega_i: f64, relation: Relation, omega_d: f64) -> Option<f64> {
        match relation {
            Relation::NonResonant(k) => Some(k as f64 * omega_d - omega_i),
            Relation::Resonant(k) => Some(omega_i + k as f64 * omega_d),
            Relation::Uncorrelated => None,
        }
    }
}

/// `p^{(k)}_{σ,α}(ω) = π I_σ(ω) I_α(|ω − kω_d|) |Ã_k(i(ω − kω_d))|² / 2m²`.
pub fn interaction_probability(
    gc: &GreenCoefficients,
    k: i32,
    omega: f64,
    from: Side,
    to: Side,
) -> Result<f64> {
    let res = gc.reservoirs();
    let wk = omega - k as f64 * gc.driving().omega_d;
    let dens = res.side(from).at(omega) * res.side(to).at(wk.abs());
    if dens == 0.0 {
        return Ok(0.0);
    }
    let a = gc.evaluate_axis(k, wk)?;
    let m = res.mass();
    Ok(std::f64::consts::PI * dens * a.norm_sqr() / (2.0 * m * m))
}

/// Linear-in-time growth of `2√det` of one band, split by process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandRates {
    /// Resonant absorption/emission; may be negative.
    pub transport: f64,
    /// Pair creation; never negative.
    pub pair: f64,
    /// Largest contribution of the outermost harmonics relative to the total.
    pub tail: f64,
}

impl BandRates {
    pub fn total(&self) -> f64 {
        self.transport + self.pair
    }
}

pub fn band_rates(band: &BandSpec, env: &ThermalEnvironment, gc: &GreenCoefficients) -> Result<BandRates> {
    let w = band.omega_center;
    let own = env.occupation(band.side, w);
    let k_max = gc.k_max();
    let (mut transport, mut pair, mut edge) = (0.0, 0.0, 0.0f64);
    for k in -k_max..=k_max {
        let wk = w - k as f64 * gc.driving().omega_d;
        if wk == 0.0 {
            continue;
        }
        for alpha in [Side::R, Side::L] {
            let p = interaction_probability(gc, k, w, band.side, alpha)?;
            let other = env.occupation(alpha, wk.abs());
            let term = if wk > 0.0 {
                let t = p * (other - own);
                transport += t;
                t
            } else {
                let t = p * (other + own + 1.0);
                pair += t;
                t
            };
            if k.abs() == k_max {
                edge = edge.max(term.abs());
            }
        }
    }
    // 2√det grows by 2Δω·Σp[…].
    let scale = 2.0 * band.delta_omega;
    let total = (transport.abs() + pair.abs()).max(f64::MIN_POSITIVE);
    Ok(BandRates {
        transport: scale * transport,
        pair: scale * pair,
        tail: edge / total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatCurrent {
    pub transport: f64,
    pub pair: f64,
}

impl HeatCurrent {
    pub fn total(&self) -> f64 {
        self.transport + self.pair
    }
}

/// Energy current into the band, `E(t) = (1/2 + n)ω + Q̇ t`.
pub fn heat_current(band: &BandSpec, env: &ThermalEnvironment, gc: &GreenCoefficients) -> Result<HeatCurrent> {
    let r = band_rates(band, env, gc)?;
    let half_w = 0.5 * band.omega_center;
    Ok(HeatCurrent {
        transport: half_w * r.transport,
        pair: half_w * r.pair,
    })
}

/// Purity `μ = 1/(1 + x)`, stored through `x = 2√det − 1` so that states
/// within 1e-16 of purity keep their distance from it.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Purity {
    excess: f64,
}

impl Purity {
    pub fn from_mu(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::domain("purity", "in (0, 1]", mu));
        }
        Ok(Self { excess: 1.0 / mu - 1.0 })
    }

    pub fn from_excess(excess: f64) -> Result<Self> {
        if !(excess >= 0.0) || !excess.is_finite() {
            return Err(Error::domain("purity excess", ">= 0", excess));
        }
        Ok(Self { excess })
    }

    pub fn mu(&self) -> f64 {
        1.0 / (1.0 + self.excess)
    }

    /// `1/μ − 1`.
    pub fn excess(&self) -> f64 {
        self.excess
    }

    /// `√det` of the band block.
    pub fn half_width(&self) -> f64 {
        0.5 * (1.0 + self.excess)
    }

    /// `atanh μ = ½ ln((2 + x)/x)`.
    fn atanh(&self) -> f64 {
        if self.excess == 0.0 {
            f64::INFINITY
        } else {
            0.5 * (2.0 / self.excess).ln_1p()
        }
    }
}

/// `atanh μ_a − atanh μ_b` without cancellation.
fn atanh_gap(a: Purity, b: Purity) -> f64 {
    let (xa, xb) = (a.excess, b.excess);
    0.5 * (log_ratio(2.0 + xa, 2.0 + xb) - log_ratio(xa, xb))
}

/// `ln(u/v)`, through `ln_1p` when the ratio is close to one.
fn log_ratio(u: f64, v: f64) -> f64 {
    if (u - v).abs() < 0.5 * v {
        ((u - v) / v).ln_1p()
    } else {
        (u / v).ln()
    }
}

/// `μ(t)` of one band from the linearised `2√det`.
pub fn band_purity(band: &BandSpec, env: &ThermalEnvironment, gc: &GreenCoefficients, t: f64) -> Result<Purity> {
    if !(t >= 0.0) {
        return Err(Error::domain("t", ">= 0", t));
    }
    let rates = band_rates(band, env, gc)?;
    purity_at(band, env, &rates, t)
}

fn purity_at(band: &BandSpec, env: &ThermalEnvironment, rates: &BandRates, t: f64) -> Result<Purity> {
    let n = env.occupation(band.side, band.omega_center);
    let excess = 2.0 * n + rates.total() * t;
    if 1.0 + excess <= 0.0 {
        return Err(Error::PurityInvalid { value: 1.0 + excess });
    }
    // Transport may pull the state below its thermal value but not below purity.
    Ok(Purity { excess: excess.max(0.0) })
}

fn require_nonresonant(relation: Relation) -> Result<i32> {
    match relation {
        Relation::NonResonant(k) => Ok(k),
        _ => Err(Error::WrongRelation { expected: "nonresonant" }),
    }
}

fn require_resonant(relation: Relation) -> Result<i32> {
    match relation {
        Relation::Resonant(k) => Ok(k),
        _ => Err(Error::WrongRelation { expected: "resonant" }),
    }
}

fn cross_prefactor(pair: &BandPair, gc: &GreenCoefficients) -> f64 {
    let res = gc.reservoirs();
    let m = res.mass();
    pair.band_i.delta_omega * pair.band_j.delta_omega
        * res.right.at(pair.band_i.omega_center)
        * res.left.at(pair.band_j.omega_center)
        / (m * m)
}

/// `Γ₊ ≤ 0`, the rate of `det γ = Γ₊t²/4` for a pair-creation partner.
pub fn gamma_plus(pair: &BandPair, env: &ThermalEnvironment, gc: &GreenCoefficients) -> Result<f64> {
    let k = require_nonresonant(pair.relation)?;
    let (wi, wj) = (pair.band_i.omega_center, pair.band_j.omega_center);
    let ai = gc.evaluate_axis(-k, wi)?.conj();
    let aj = gc.evaluate_axis(-k, wj)?.conj();
    let ni = env.occupation(Side::R, wi);
    let nj = env.occupation(Side::L, wj);
    let amp = (2.0 * ni + 1.0) * ai + (2.0 * nj + 1.0) * aj;
    Ok(-0.25 * cross_prefactor(pair, gc) * amp.norm_sqr())
}

/// `Γ₋ ≥ 0` for a resonant-transport partner.
pub fn gamma_minus(pair: &BandPair, env: &ThermalEnvironment, gc: &GreenCoefficients) -> Result<f64> {
    let k = require_resonant(pair.relation)?;
    let (wi, wj) = (pair.band_i.omega_center, pair.band_j.omega_center);
    let ai = gc.evaluate_axis(k, wi)?;
    let aj = gc.evaluate_axis(-k, wj)?.conj();
    let ni = env.occupation(Side::R, wi);
    let nj = env.occupation(Side::L, wj);
    let amp = ni * ai - nj * aj;
    Ok(cross_prefactor(pair, gc) * amp.norm_sqr())
}

/// Generator rate for the pair's relation; zero for uncorrelated bands.
pub fn generator(pair: &BandPair, env: &ThermalEnvironment, gc: &GreenCoefficients) -> Result<f64> {
    match pair.relation {
        Relation::NonResonant(_) => gamma_plus(pair, env, gc),
        Relation::Resonant(_) => gamma_minus(pair, env, gc),
        Relation::Uncorrelated => Ok(0.0),
    }
}

/// Smallest purity ratio `μ(t)/μ(0)` accepted by the linearised description.
pub const PURITY_DRIFT_FLOOR: f64 = 0.05;

/// Band-pair state at one time in standard form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairState {
    pub purity_i: Purity,
    pub purity_j: Purity,
    /// `Γ±·t²`, signed.
    pub gamma_t2: f64,
    pub sigma: TwoModeCovariance,
    invariants: SymplecticInvariants,
}

impl PairState {
    pub fn invariants(&self) -> &SymplecticInvariants {
        &self.invariants
    }
}

fn standard_state(pi: Purity, pj: Purity, gamma_t2: f64, relation: Relation) -> PairState {
    let c = 0.5 * gamma_t2.abs().sqrt();
    let (c1, c2) = match relation {
        Relation::NonResonant(_) => (c, -c),
        Relation::Resonant(_) => (c, c),
        Relation::Uncorrelated => (0.0, 0.0),
    };
    let (a, b) = (pi.half_width(), pj.half_width());
    PairState {
        purity_i: pi,
        purity_j: pj,
        gamma_t2,
        sigma: TwoModeCovariance::standard(a, b, c1, c2),
        invariants: SymplecticInvariants::from_standard(a, b, c1, c2),
    }
}

fn pair_state(
    pair: &BandPair,
    env: &ThermalEnvironment,
    rates: (&BandRates, &BandRates),
    gamma: f64,
    t: f64,
) -> Result<PairState> {
    if !(t >= 0.0) {
        return Err(Error::domain("t", ">= 0", t));
    }
    let pi = purity_at(&pair.band_i, env, rates.0, t)?;
    let pj = purity_at(&pair.band_j, env, rates.1, t)?;
    for (band, p) in [(&pair.band_i, pi), (&pair.band_j, pj)] {
        let thermal = 1.0 + 2.0 * env.occupation(band.side, band.omega_center);
        if thermal / (1.0 + p.excess) < PURITY_DRIFT_FLOOR {
            return Err(Error::ValidityHorizon {
                reason: format!("purity fell below {PURITY_DRIFT_FLOOR} of its thermal value"),
            });
        }
    }
    let state = standard_state(pi, pj, gamma * t * t, pair.relation);
    let horizon = |detail: String| Error::ValidityHorizon {
        reason: format!("assembled state is unphysical ({detail})"),
    };
    let (_, l2) = gaussian::symplectic_eigenvalues(&state.invariants).map_err(|e| horizon(e.to_string()))?;
    if l2.excess() < -gaussian::PHYSICALITY_TOL {
        return Err(horizon(format!("smallest symplectic eigenvalue {}", l2.value())));
    }
    Ok(state)
}

/// `σ_av(t) = ν_i ⊕ ν_j + σ_lin t` in standard form.
pub fn assemble_sigma_av(
    pair: &BandPair,
    env: &ThermalEnvironment,
    gc: &GreenCoefficients,
    t: f64,
) -> Result<TwoModeCovariance> {
    let ri = band_rates(&pair.band_i, env, gc)?;
    let rj = band_rates(&pair.band_j, env, gc)?;
    let gamma = generator(pair, env, gc)?;
    pair_state(pair, env, (&ri, &rj), gamma, t).map(|s| s.sigma)
}

/// A closed-form value, or the exact one when the closed form is invalid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedValue {
    pub value: f64,
    /// The resonant purities were too close for the expansion; `value` is exact.
    pub degenerate: bool,
}

/// `|μ_i − μ_j|` below which resonant closed forms are replaced by exact values.
pub const DEGENERATE_PURITY_GAP: f64 = 1e-6;

fn is_degenerate(pi: Purity, pj: Purity, relation: Relation) -> bool {
    matches!(relation, Relation::Resonant(_)) && (pi.mu() - pj.mu()).abs() < DEGENERATE_PURITY_GAP
}

/// `f± = μ_iμ_j[atanh μ_i ± atanh μ_j]/(μ_i ± μ_j)`.
fn f_factor(pi: Purity, pj: Purity, relation: Relation) -> f64 {
    match relation {
        Relation::NonResonant(_) => (pi.atanh() + pj.atanh()) / (2.0 + pi.excess + pj.excess),
        Relation::Resonant(_) => atanh_gap(pi, pj) / (pj.excess - pi.excess),
        Relation::Uncorrelated => 0.0,
    }
}

/// `I± = f±(μ_i, μ_j)|Γ±t²|`.
pub fn mutual_information_closed(pi: Purity, pj: Purity, gamma_t2: f64, relation: Relation) -> Result<ClosedValue> {
    if gamma_t2 == 0.0 || relation == Relation::Uncorrelated {
        return Ok(ClosedValue { value: 0.0, degenerate: false });
    }
    if is_degenerate(pi, pj, relation) {
        let s = standard_state(pi, pj, gamma_t2, relation);
        return Ok(ClosedValue {
            value: mutual_information_from_invariants(&s.invariants)?,
            degenerate: true,
        });
    }
    Ok(ClosedValue {
        value: f_factor(pi, pj, relation) * gamma_t2.abs(),
        degenerate: false,
    })
}

/// `D̄±/I± = 1 − g±(μ_i, μ_j)`, clamped to `[0, 1]`, for measurement on band `j`.
pub fn discord_ratio_closed(pi: Purity, pj: Purity, relation: Relation) -> Result<ClosedValue> {
    let (xi, xj) = (pi.excess, pj.excess);
    let (value, degenerate) = match relation {
        Relation::Uncorrelated => return Err(Error::WrongRelation { expected: "correlated" }),
        Relation::NonResonant(_) => {
            let g = if xi == 0.0 && xj == 0.0 {
                0.5
            } else {
                let ratio = (1.0 + xi) / (1.0 + xj);
                let r = pj.atanh() / pi.atanh();
                let r = if r.is_nan() { 1.0 } else { r };
                (1.0 + xj) / (2.0 + xj) * (1.0 + ratio) / (1.0 + r)
            };
            (1.0 - g, false)
        }
        Relation::Resonant(_) if is_degenerate(pi, pj, relation) => {
            let mean = Purity { excess: 0.5 * (xi + xj) };
            (resonant_similar_limit(mean), true)
        }
        Relation::Resonant(_) => {
            // g₋ = (x_j − x_i) atanh μ_i / ((2 + x_j)(atanh μ_i − atanh μ_j))
            let g = if xi == 0.0 {
                (1.0 + xj) / (2.0 + xj) * (xj - xi) / (1.0 + xj)
            } else {
                (xj - xi) * pi.atanh() / ((2.0 + xj) * atanh_gap(pi, pj))
            };
            (1.0 - g, false)
        }
    };
    Ok(ClosedValue { value: value.clamp(0.0, 1.0), degenerate })
}

/// `1 − (1 − μ̄) atanh(μ̄)/μ̄`.
fn resonant_similar_limit(mean: Purity) -> f64 {
    if mean.excess == 0.0 {
        1.0
    } else {
        1.0 - mean.excess * mean.atanh()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Comparable purities, `|μ_i − μ_j|/μ̄ < 0.1`.
    SimilarTemperature,
    /// Left band nearly pure, `μ_j > 0.99`.
    ColdLeft,
    /// Right band nearly pure, `μ_i > 0.99`.
    ColdRight,
}

/// Approximate discord ratio in a limiting regime.
pub fn discord_regime_limits(pi: Purity, pj: Purity, relation: Relation, regime: Regime) -> Result<f64> {
    let (mi, mj) = (pi.mu(), pj.mu());
    match regime {
        Regime::SimilarTemperature => {
            let mean = 0.5 * (mi + mj);
            let spread = (mi - mj).abs() / mean;
            if spread >= 0.1 {
                return Err(Error::Regime(format!("|mu_i - mu_j|/mean = {spread:.3} must be < 0.1")));
            }
            match relation {
                Relation::NonResonant(_) => Ok(mean / (1.0 + mean)),
                Relation::Resonant(_) => Ok(resonant_similar_limit(Purity::from_mu(mean)?)),
                Relation::Uncorrelated => Err(Error::WrongRelation { expected: "correlated" }),
            }
        }
        Regime::ColdLeft => {
            if mj <= 0.99 {
                return Err(Error::Regime(format!("mu_j = {mj:.4} must exceed 0.99")));
            }
            if relation == Relation::Uncorrelated {
                return Err(Error::WrongRelation { expected: "correlated" });
            }
            Ok(1.0 - mj / (2.0 * pj.atanh()))
        }
        Regime::ColdRight => {
            if mi <= 0.99 {
                return Err(Error::Regime(format!("mu_i = {mi:.4} must exceed 0.99")));
            }
            match relation {
                Relation::Resonant(_) => Ok(2.0 * mj / mi),
                _ => Err(Error::Regime("the cold-R limit is stated for resonant pairs only".into())),
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Negativity {
    pub log_negativity: f64,
    /// Phase-space entropy threshold `S_ij`.
    pub threshold: f64,
    /// `Γ_N`, the net generation rate.
    pub rate: f64,
    /// `t_ent = S_ij/Γ_N`; infinite when `Γ_N = 0`.
    pub latency: f64,
    /// The pair is resonant and therefore separable.
    pub separable: bool,
}

/// `S_ij = ½ ln[(μ_i² + μ_j²)/(2μ_i²μ_j²)]`.
pub fn entropy_threshold(pi: Purity, pj: Purity) -> f64 {
    let (xi, xj) = (pi.excess, pj.excess);
    0.5 * (xi + xj + 0.5 * (xi * xi + xj * xj)).ln_1p()
}

/// `E_N = max(0, −S_ij + Γ_N t)` with `Γ_N = (μ_i + μ_j)e^{−2S_ij}√|Γ₊|/2μ_iμ_j`.
pub fn negativity_closed(pi: Purity, pj: Purity, gamma_plus: f64, t: f64, relation: Relation) -> Negativity {
    let threshold = entropy_threshold(pi, pj);
    if !matches!(relation, Relation::NonResonant(_)) {
        return Negativity {
            log_negativity: 0.0,
            threshold,
            rate: 0.0,
            latency: f64::INFINITY,
            separable: true,
        };
    }
    let rate = 0.5 * (2.0 + pi.excess + pj.excess) * (-2.0 * threshold).exp() * gamma_plus.abs().sqrt();
    let latency = if rate > 0.0 { threshold / rate } else { f64::INFINITY };
    Negativity {
        log_negativity: (rate * t - threshold).max(0.0),
        threshold,
        rate,
        latency,
        separable: false,
    }
}

/// `μ_iμ_j|Γ±|t²`.
pub fn kl_divergence_proxy(mu_i: f64, mu_j: f64, gamma: f64, t: f64) -> f64 {
    mu_i * mu_j * gamma.abs() * t * t
}

/// `| |Γ₊|t² − (|Γ₊|/Γ_N²)(E_N + S_ij)² |`, zero once entanglement has set in.
pub fn generator_negativity_identity(e_n: f64, s_ij: f64, gamma_n: f64, gamma_plus: f64, t: f64) -> Result<f64> {
    let t_ent = s_ij / gamma_n;
    if !(t > t_ent) {
        return Err(Error::BeforeLatency { t, t_ent });
    }
    let g = gamma_plus.abs();
    let lhs = g * t * t;
    let rhs = g / (gamma_n * gamma_n) * (e_n + s_ij) * (e_n + s_ij);
    Ok((lhs - rhs).abs())
}

/// `Γ₋t² ≤ (1/μ_i − 1)(1/μ_j − 1)`.
pub fn bound_check_ineq(pi: Purity, pj: Purity, gamma_minus: f64, t: f64) -> bool {
    gamma_minus.abs() * t * t <= pi.excess * pj.excess
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReportFlag {
    /// Resonant purities within 1e-6; exact values substituted.
    DegeneratePurity,
    /// Resonant pair; no entanglement by construction.
    Separable,
    /// Bands not related by the driving; no cross correlations.
    Uncorrelated,
    /// Conditional determinant taken from the pure-mode limit.
    EminPureMode,
    /// Conditional determinant taken from the second minimisation branch.
    EminAlternative,
    /// Outermost harmonics contribute more than 1e-6 of a rate.
    HarmonicTail,
    /// Bandwidth above 10% of a band centre.
    WideBand,
    Truncation,
    Perturbative,
    ParametricResonance,
}

impl ReportFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportFlag::DegeneratePurity => "degenerate-purity",
            ReportFlag::Separable => "resonant-separable",
            ReportFlag::Uncorrelated => "uncorrelated",
            ReportFlag::EminPureMode => "emin-pure-mode",
            ReportFlag::EminAlternative => "emin-alternative",
            ReportFlag::HarmonicTail => "harmonic-tail",
            ReportFlag::WideBand => "wide-band",
            ReportFlag::Truncation => "truncation",
            ReportFlag::Perturbative => "perturbative",
            ReportFlag::ParametricResonance => "parametric-resonance",
        }
    }
}

impl fmt::Display for ReportFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Harmonic-tail fraction above which a report is flagged.
pub const TAIL_FLAG: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub t: f64,
    pub relation: Relation,
    pub mu_i: f64,
    pub mu_j: f64,
    /// `Γ±` (rate squared).
    pub gamma: f64,
    /// `Γ±t²`.
    pub gamma_t2: f64,
    pub mutual_information: f64,
    pub discord: f64,
    pub discord_ratio: f64,
    pub log_negativity: f64,
    pub s_ij: f64,
    pub gamma_n: f64,
    /// Self-consistent latency: purities are evaluated at `t_ent` itself.
    pub t_ent: f64,
    pub q_dot_i: f64,
    pub q_dot_j: f64,
    /// `γ₀ΔωVt/ω_r³`.
    pub e0: f64,
    pub exact_mutual_information: f64,
    pub exact_discord: f64,
    pub exact_log_negativity: f64,
    pub flags: Vec<ReportFlag>,
}

impl CorrelationReport {
    pub fn flag_string(&self) -> String {
        if self.flags.is_empty() {
            "-".into()
        } else {
            self.flags.iter().map(ReportFlag::as_str).collect::<Vec<_>>().join("|")
        }
    }
}

/// Everything about a band pair that does not depend on time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRates {
    pub rates_i: BandRates,
    pub rates_j: BandRates,
    pub gamma: f64,
}

impl PairRates {
    pub fn new(pair: &BandPair, env: &ThermalEnvironment, gc: &GreenCoefficients) -> Result<Self> {
        Ok(Self {
            rates_i: band_rates(&pair.band_i, env, gc)?,
            rates_j: band_rates(&pair.band_j, env, gc)?,
            gamma: generator(pair, env, gc)?,
        })
    }

    pub fn state(&self, pair: &BandPair, env: &ThermalEnvironment, t: f64) -> Result<PairState> {
        pair_state(pair, env, (&self.rates_i, &self.rates_j), self.gamma, t)
    }

    fn purities(&self, pair: &BandPair, env: &ThermalEnvironment, t: f64) -> Result<(Purity, Purity)> {
        Ok((
            purity_at(&pair.band_i, env, &self.rates_i, t)?,
            purity_at(&pair.band_j, env, &self.rates_j, t)?,
        ))
    }

    /// Solves `t = S_ij(t)/Γ_N(t)` by fixed-point iteration.
    pub fn latency(&self, pair: &BandPair, env: &ThermalEnvironment) -> Result<f64> {
        if !matches!(pair.relation, Relation::NonResonant(_)) {
            return Ok(f64::INFINITY);
        }
        let mut t = 0.0;
        for _ in 0..100 {
            let (pi, pj) = self.purities(pair, env, t)?;
            let next = negativity_closed(pi, pj, self.gamma, t, pair.relation).latency;
            if !next.is_finite() {
                return Ok(next);
            }
            if (next - t).abs() <= 1e-13 * next.max(f64::MIN_POSITIVE) {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }
}

/// Closed-form and exact correlation measures of a band pair at time `t`.
pub fn correlation_report(
    pair: &BandPair,
    env: &ThermalEnvironment,
    gc: &GreenCoefficients,
    t: f64,
) -> Result<CorrelationReport> {
    let rates = PairRates::new(pair, env, gc)?;
    report_from_rates(pair, env, gc, &rates, t)
}

pub fn report_from_rates(
    pair: &BandPair,
    env: &ThermalEnvironment,
    gc: &GreenCoefficients,
    rates: &PairRates,
    t: f64,
) -> Result<CorrelationReport> {
    let state = rates.state(pair, env, t)?;
    let (pi, pj) = (state.purity_i, state.purity_j);
    let mut flags = Vec::new();
    let relation = pair.relation;

    let (info, ratio, discord) = if relation == Relation::Uncorrelated {
        flags.push(ReportFlag::Uncorrelated);
        (0.0, 0.0, 0.0)
    } else {
        let info = mutual_information_closed(pi, pj, state.gamma_t2, relation)?;
        let ratio = discord_ratio_closed(pi, pj, relation)?;
        if info.degenerate || ratio.degenerate {
            flags.push(ReportFlag::DegeneratePurity);
        }
        let discord = if info.degenerate {
            let d = gaussian_discord_detailed(state.invariants(), MeasuredSide::J)?.value;
            d
        } else {
            ratio.value * info.value
        };
        let ratio = if info.degenerate && info.value > 0.0 {
            (discord / info.value).clamp(0.0, 1.0)
        } else {
            ratio.value
        };
        (info.value, ratio, discord)
    };

    let neg = negativity_closed(pi, pj, rates.gamma, t, relation);
    if matches!(relation, Relation::Resonant(_)) {
        flags.push(ReportFlag::Separable);
    }
    let t_ent = rates.latency(pair, env)?;

    let exact_info = mutual_information_from_invariants(state.invariants())?;
    let exact_discord = gaussian_discord_detailed(state.invariants(), MeasuredSide::J)?;
    match exact_discord.branch {
        EminBranch::Quotient => {}
        EminBranch::Alternative => flags.push(ReportFlag::EminAlternative),
        EminBranch::PureMeasuredMode => flags.push(ReportFlag::EminPureMode),
    }
    let exact_neg = log_negativity_from_invariants(state.invariants())?;

    if rates.rates_i.tail.max(rates.rates_j.tail) > TAIL_FLAG {
        flags.push(ReportFlag::HarmonicTail);
    }
    if pair.band_i.is_wide() || pair.band_j.is_wide() {
        flags.push(ReportFlag::WideBand);
    }
    for w in gc.warnings() {
        flags.push(match w {
            GreenWarning::Truncation { .. } => ReportFlag::Truncation,
            GreenWarning::Perturbative { .. } => ReportFlag::Perturbative,
            GreenWarning::ParametricResonance { .. } => ReportFlag::ParametricResonance,
        });
    }
    flags.sort();
    flags.dedup();

    let drv = gc.driving();
    let amplitude = 2.0 * (1..=drv.max_harmonic()).map(|k| drv.coeff(k).norm()).fold(0.0, f64::max);
    let e0 = gc.reservoirs().right.gamma0 * pair.band_i.delta_omega * amplitude * t / drv.omega_r.powi(3);
    let half = |b: &BandSpec, r: &BandRates| 0.5 * b.omega_center * r.total();

    Ok(CorrelationReport {
        t,
        relation,
        mu_i: pi.mu(),
        mu_j: pj.mu(),
        gamma: rates.gamma,
        gamma_t2: state.gamma_t2,
        mutual_information: info,
        discord,
        discord_ratio: ratio,
        log_negativity: neg.log_negativity,
        s_ij: neg.threshold,
        gamma_n: neg.rate,
        t_ent,
        q_dot_i: half(&pair.band_i, &rates.rates_i),
        q_dot_j: half(&pair.band_j, &rates.rates_j),
        e0,
        exact_mutual_information: exact_info,
        exact_discord: exact_discord.value,
        exact_log_negativity: exact_neg,
        flags,
    })
}
