//! Two-mode Gaussian states in the vacuum-variance-1/2 convention.
//!
//! Band states produced by weak coupling sit a hair above the vacuum, where
//! combinations such as `Δ² − 4D` cancel to the last bit of an f64. The
//! determinant invariants and symplectic eigenvalues are therefore carried in
//! double-double arithmetic, and entropies are evaluated from the excess of
//! each eigenvalue over 1/2 rather than from the eigenvalue itself. Only the
//! arithmetic and square root of `twofloat` are used; its logarithms are not
//! accurate to double-double precision.

use twofloat::TwoFloat;

use crate::{Error, Result};

pub type Block = [[f64; 2]; 2];

/// Slack below 1/2 tolerated for the smallest symplectic eigenvalue.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Negative discriminants above `-DISCRIMINANT_CLAMP` are treated as zero.
pub const DISCRIMINANT_CLAMP: f64 = 1e-10;
/// `|1/4 − det β|` below which the conditional-entropy quotient is replaced
/// by its pure-mode limit.
const PURE_MODE_GAP: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoModeCovariance {
    pub alpha: Block,
    pub beta: Block,
    pub gamma: Block,
}

/// Standard form `diag(a, a, b, b)` with cross block `diag(c1, c2)`.
///
/// `c1 ≥ 0`, `|c1| ≥ |c2|`, and `c2` carries the sign of `det γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StandardForm {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl StandardForm {
    pub fn to_covariance(self) -> TwoModeCovariance {
        TwoModeCovariance::standard(self.a, self.b, self.c1, self.c2)
    }
}

impl TwoModeCovariance {
    /// Builds a covariance and checks symmetry and physicality.
    pub fn new(alpha: Block, beta: Block, gamma: Block) -> Result<Self> {
        let s = Self { alpha, beta, gamma };
        s.validate()?;
        Ok(s)
    }

    pub const fn new_unchecked(alpha: Block, beta: Block, gamma: Block) -> Self {
        Self { alpha, beta, gamma }
    }

    pub const fn standard(a: f64, b: f64, c1: f64, c2: f64) -> Self {
        Self {
            alpha: [[a, 0.0], [0.0, a]],
            beta: [[b, 0.0], [0.0, b]],
            gamma: [[c1, 0.0], [0.0, c2]],
        }
    }

    pub const fn vacuum() -> Self {
        Self::standard(0.5, 0.5, 0.0, 0.0)
    }

    /// Product of thermal modes with symplectic eigenvalues `nu_i`, `nu_j`.
    pub const fn thermal(nu_i: f64, nu_j: f64) -> Self {
        Self::standard(nu_i, nu_j, 0.0, 0.0)
    }

    /// Two-mode squeezed vacuum with squeezing parameter `r`.
    pub fn squeezed_vacuum(r: f64) -> Self {
        let (s, c) = ((2.0 * r).sinh() / 2.0, (2.0 * r).cosh() / 2.0);
        Self::standard(c, c, s, -s)
    }

    pub fn from_matrix(m: [[f64; 4]; 4]) -> Result<Self> {
        for (r, row) in m.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if (v - m[c][r]).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(Error::AsymmetricBlock);
                }
            }
        }
        Self::new(
            [[m[0][0], m[0][1]], [m[1][0], m[1][1]]],
            [[m[2][2], m[2][3]], [m[3][2], m[3][3]]],
            [[m[0][2], m[0][3]], [m[1][2], m[1][3]]],
        )
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let (a, b, g) = (self.alpha, self.beta, self.gamma);
        [
            [a[0][0], a[0][1], g[0][0], g[0][1]],
            [a[1][0], a[1][1], g[1][0], g[1][1]],
            [g[0][0], g[1][0], b[0][0], b[0][1]],
            [g[0][1], g[1][1], b[1][0], b[1][1]],
        ]
    }

    /// Conjugates by the local symplectic `s_i ⊕ s_j` (each with unit determinant).
    pub fn local_symplectic(&self, s_i: Block, s_j: Block) -> Self {
        Self {
            alpha: sandwich(s_i, self.alpha, s_i),
            beta: sandwich(s_j, self.beta, s_j),
            gamma: sandwich(s_i, self.gamma, s_j),
        }
    }

    /// Time reversal `p_j → −p_j` on the second mode.
    pub fn partial_transpose(&self) -> Self {
        let mut out = *self;
        out.beta[0][1] = -out.beta[0][1];
        out.beta[1][0] = -out.beta[1][0];
        out.gamma[0][1] = -out.gamma[0][1];
        out.gamma[1][1] = -out.gamma[1][1];
        out
    }

    fn validate(&self) -> Result<()> {
        for blk in [&self.alpha, &self.beta] {
            let scale = 1.0 + blk[0][1].abs().max(blk[1][0].abs());
            if (blk[0][1] - blk[1][0]).abs() > 1e-12 * scale {
                return Err(Error::AsymmetricBlock);
            }
        }
        physical_spectrum(&symplectic_invariants(self)).map(|_| ())
    }
}

fn sandwich(l: Block, m: Block, r: Block) -> Block {
    let mut lm = [[0.0; 2]; 2];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            lm[i][j] = l[i][0] * m[0][j] + l[i][1] * m[1][j];
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = lm[i][0] * r[j][0] + lm[i][1] * r[j][1];
        }
    }
    out
}

fn dd(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

fn det2(b: &Block) -> TwoFloat {
    dd(b[0][0]) * dd(b[1][1]) - dd(b[0][1]) * dd(b[1][0])
}

fn det4(m: &[[f64; 4]; 4]) -> TwoFloat {
    // Laplace expansion along the first two rows.
    let minor = |r: usize, c1: usize, c2: usize| {
        dd(m[r][c1]) * dd(m[r + 1][c2]) - dd(m[r][c2]) * dd(m[r + 1][c1])
    };
    minor(0, 0, 1) * minor(2, 2, 3) - minor(0, 0, 2) * minor(2, 1, 3)
        + minor(0, 0, 3) * minor(2, 1, 2)
        + minor(0, 1, 2) * minor(2, 0, 3)
        - minor(0, 1, 3) * minor(2, 0, 2)
        + minor(0, 2, 3) * minor(2, 0, 1)
}

/// Double-double quotient; `twofloat`'s own division is only f64-accurate.
fn ddiv(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    dd(q1) + q2 + q3
}

fn dd_sqrt(x: TwoFloat) -> TwoFloat {
    if x.hi() <= 0.0 {
        TwoFloat::from(0.0)
    } else {
        x.sqrt()
    }
}

/// `x − 1/2` for `x = √x_sq`, without forming the difference of near-equal numbers.
fn excess_of_root(x_sq: TwoFloat) -> TwoFloat {
    ddiv(x_sq - 0.25, dd_sqrt(x_sq) + 0.5)
}

/// The four determinant invariants `A = det α`, `B = det β`, `C = det γ`,
/// `D = det σ`, held in double-double precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymplecticInvariants {
    a: TwoFloat,
    b: TwoFloat,
    c: TwoFloat,
    d: TwoFloat,
}

impl SymplecticInvariants {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            a: dd(a),
            b: dd(b),
            c: dd(c),
            d: dd(d),
        }
    }

    /// Invariants of the standard form, with `D = (ab − c1²)(ab − c2²)` formed exactly.
    pub fn from_standard(a: f64, b: f64, c1: f64, c2: f64) -> Self {
        let ab = dd(a) * dd(b);
        Self {
            a: dd(a) * dd(a),
            b: dd(b) * dd(b),
            c: dd(c1) * dd(c2),
            d: (ab - dd(c1) * dd(c1)) * (ab - dd(c2) * dd(c2)),
        }
    }

    pub fn det_alpha(&self) -> f64 {
        self.a.hi()
    }
    pub fn det_beta(&self) -> f64 {
        self.b.hi()
    }
    pub fn det_gamma(&self) -> f64 {
        self.c.hi()
    }
    pub fn det_sigma(&self) -> f64 {
        self.d.hi()
    }
    /// `Δ = A + B + 2C`.
    pub fn delta(&self) -> f64 {
        (self.a + self.b + self.c * 2.0).hi()
    }
    /// `Δ̃ = A + B − 2C`, the seralian of the partial transpose.
    pub fn delta_tilde(&self) -> f64 {
        (self.a + self.b - self.c * 2.0).hi()
    }

    /// Same invariants with the roles of the two modes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            ..*self
        }
    }
}

pub fn symplectic_invariants(sigma: &TwoModeCovariance) -> SymplecticInvariants {
    SymplecticInvariants {
        a: det2(&sigma.alpha),
        b: det2(&sigma.beta),
        c: det2(&sigma.gamma),
        d: det4(&sigma.to_matrix()),
    }
}

/// A symplectic eigenvalue, stored as its offset above the vacuum value 1/2.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SymplecticValue {
    excess: TwoFloat,
}

impl SymplecticValue {
    pub fn value(&self) -> f64 {
        (self.excess + 0.5).hi()
    }
    /// `ν − 1/2`, accurate even when `ν` rounds to 1/2 in f64.
    pub fn excess(&self) -> f64 {
        self.excess.hi()
    }
}

/// Larger and smaller roots of `λ⁴ − s λ² + D = 0`.
fn quadratic_spectrum(s: TwoFloat, d: TwoFloat) -> Result<(SymplecticValue, SymplecticValue)> {
    let mut disc = s * s - d * 4.0;
    if disc.hi() < 0.0 {
        if disc.hi() < -DISCRIMINANT_CLAMP {
            return Err(Error::InvariantInconsistency {
                discriminant: disc.hi(),
            });
        }
        disc = dd(0.0);
    }
    let l1_sq = (s + dd_sqrt(disc)) * 0.5;
    if l1_sq.hi() <= 0.0 {
        return Err(Error::InvariantInconsistency {
            discriminant: disc.hi(),
        });
    }
    let l2_sq = ddiv(d, l1_sq);
    Ok((
        SymplecticValue {
            excess: excess_of_root(l1_sq),
        },
        SymplecticValue {
            excess: excess_of_root(l2_sq),
        },
    ))
}

/// `(λ1, λ2)` with `λ1 ≥ λ2`.
pub fn symplectic_eigenvalues(
    inv: &SymplecticInvariants,
) -> Result<(SymplecticValue, SymplecticValue)> {
    quadratic_spectrum(inv.a + inv.b + inv.c * 2.0, inv.d)
}

/// Smaller symplectic eigenvalue of the partially transposed state.
pub fn ppt_eigenvalue(inv: &SymplecticInvariants) -> Result<SymplecticValue> {
    quadratic_spectrum(inv.a + inv.b - inv.c * 2.0, inv.d).map(|(_, l2)| l2)
}

fn physical_spectrum(inv: &SymplecticInvariants) -> Result<(SymplecticValue, SymplecticValue)> {
    if inv.a.hi() <= 0.0 || inv.b.hi() <= 0.0 {
        return Err(Error::UnphysicalCovariance {
            lambda: inv.a.hi().min(inv.b.hi()),
        });
    }
    let (l1, l2) = symplectic_eigenvalues(inv)?;
    if l2.excess() < -PHYSICALITY_TOL {
        return Err(Error::UnphysicalCovariance { lambda: l2.value() });
    }
    Ok((l1, l2))
}

/// `f(1/2 + e)`; negative round-off excess counts as pure.
fn entropy_of_excess(e: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    (1.0 + e) * e.ln_1p() - e * e.ln()
}

/// `f(1/2 + ex) − f(1/2 + ey)`.
///
/// When the two arguments are close the difference is regrouped so that only
/// logarithms of well-conditioned ratios appear and the small difference
/// `ex − ey` is taken before rounding to f64.
fn entropy_gap(ex: TwoFloat, ey: TwoFloat) -> f64 {
    let (x, y) = (ex.hi().max(0.0), ey.hi().max(0.0));
    let delta = if x > 0.0 && y > 0.0 { (ex - ey).hi() } else { x - y };
    if y > 0.0 && delta.abs() < 0.5 * y {
        (1.0 + x) * (delta / (1.0 + y)).ln_1p() - x * (delta / y).ln_1p()
            + delta * ((1.0 + y) / y).ln()
    } else if x > 0.0 && delta.abs() < 0.5 * x {
        -entropy_gap(ey, ex)
    } else {
        entropy_of_excess(x) - entropy_of_excess(y)
    }
}

/// `f(a) + f(b) − f(c) − f(d)` with the larger of `a, b` paired against `c ≥ d`.
fn paired_gap(a: TwoFloat, b: TwoFloat, c: TwoFloat, d: TwoFloat) -> f64 {
    if a >= b {
        entropy_gap(a, c) + entropy_gap(b, d)
    } else {
        entropy_gap(b, c) + entropy_gap(a, d)
    }
}

/// `f(x) = (x + 1/2) ln(x + 1/2) − (x − 1/2) ln(x − 1/2)`, the von Neumann
/// entropy of a mode with symplectic eigenvalue `x`.
pub fn entropy_f(x: f64) -> Result<f64> {
    if !(x >= 0.5 - PHYSICALITY_TOL) {
        return Err(Error::domain("symplectic eigenvalue", ">= 1/2", x));
    }
    Ok(entropy_of_excess(x - 0.5))
}

pub fn mutual_information_exact(sigma: &TwoModeCovariance) -> Result<f64> {
    mutual_information_from_invariants(&symplectic_invariants(sigma))
}

pub fn mutual_information_from_invariants(inv: &SymplecticInvariants) -> Result<f64> {
    let (l1, l2) = physical_spectrum(inv)?;
    let i = paired_gap(excess_of_root(inv.a), excess_of_root(inv.b), l1.excess, l2.excess);
    Ok(i.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasuredSide {
    I,
    J,
}

/// Which expression produced the minimal conditional determinant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EminBranch {
    /// Quotient valid for squeezed-thermal-like states.
    Quotient,
    /// Second branch of the minimisation.
    Alternative,
    /// The measured mode is pure; the quotient is replaced by its limit.
    PureMeasuredMode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discord {
    pub value: f64,
    pub branch: EminBranch,
}

/// Minimal determinant of mode `A` conditioned on a Gaussian measurement of mode `B`.
fn e_min(inv: &SymplecticInvariants) -> (TwoFloat, EminBranch) {
    let (a, b, c, d) = (inv.a, inv.b, inv.c, inv.d);
    let q = dd(0.25) - b;
    let c_abs = if c.hi() < 0.0 { -c } else { c };
    if q.hi().abs() < PURE_MODE_GAP {
        let r = dd_sqrt(a) - ddiv(c_abs, dd_sqrt(b) + 0.5);
        return (r * r, EminBranch::PureMeasuredMode);
    }
    let ab = a * b;
    let c2 = c * c;
    let lhs = (d - ab) * (d - ab) * 4.0;
    let rhs = (b * 4.0 + 1.0) * c2 * (a + d * 4.0);
    if lhs.hi() <= rhs.hi() {
        let inner = c2 + q * (a - d * 4.0);
        let num = c2 * 2.0 + q * (a - d * 4.0) + c_abs * dd_sqrt(inner) * 2.0;
        (ddiv(num, q * q * 4.0), EminBranch::Quotient)
    } else {
        let disc = c2 * c2 + (d - ab) * (d - ab) - c2 * (ab + d) * 2.0;
        (ddiv(ab - c2 + d - dd_sqrt(disc), b * 2.0), EminBranch::Alternative)
    }
}

/// Gaussian discord with the measurement performed on `side`.
pub fn gaussian_discord_exact(sigma: &TwoModeCovariance, side: MeasuredSide) -> Result<f64> {
    gaussian_discord_detailed(&symplectic_invariants(sigma), side).map(|d| d.value)
}

pub fn gaussian_discord_detailed(
    inv: &SymplecticInvariants,
    side: MeasuredSide,
) -> Result<Discord> {
    let inv = match side {
        MeasuredSide::J => *inv,
        MeasuredSide::I => inv.swapped(),
    };
    let (l1, l2) = physical_spectrum(&inv)?;
    let (e, branch) = e_min(&inv);
    let value = paired_gap(excess_of_root(inv.b), excess_of_root(e), l1.excess, l2.excess);
    Ok(Discord {
        value: value.max(0.0),
        branch,
    })
}

/// `max(0, −ln 2λ̃2)`.
pub fn log_negativity_exact(sigma: &TwoModeCovariance) -> Result<f64> {
    log_negativity_from_invariants(&symplectic_invariants(sigma))
}

pub fn log_negativity_from_invariants(inv: &SymplecticInvariants) -> Result<f64> {
    physical_spectrum(inv)?;
    let e = ppt_eigenvalue(inv)?.excess;
    if e.hi() >= 0.0 {
        return Ok(0.0);
    }
    Ok(-(2.0 * e.hi()).ln_1p())
}

/// `S₂ = ln(2√det)`, the Rényi-2 entropy of a single-mode block.
pub fn renyi2_entropy(block: &Block) -> Result<f64> {
    let det = det2(block);
    if !(det.hi() > 0.0) {
        return Err(Error::domain("block determinant", "> 0", det.hi()));
    }
    Ok((det * 4.0 - 1.0).hi().ln_1p() / 2.0)
}

pub fn to_standard_form(sigma: &TwoModeCovariance) -> Result<StandardForm> {
    let inv = symplectic_invariants(sigma);
    physical_spectrum(&inv)?;
    let ab = dd_sqrt(inv.a * inv.b);
    let c2 = inv.c * inv.c;
    // c1² + c2² = s and c1² c2² = C².
    let s = ddiv(inv.a * inv.b + c2 - inv.d, ab);
    let mut disc = s * s - c2 * 4.0;
    if disc.hi() < 0.0 {
        if disc.hi() < -DISCRIMINANT_CLAMP {
            return Err(Error::InvariantInconsistency {
                discriminant: disc.hi(),
            });
        }
        disc = dd(0.0);
    }
    let big = (s + dd_sqrt(disc)) * 0.5;
    let small = if big.hi() > 0.0 { ddiv(c2, big) } else { dd(0.0) };
    let c1 = dd_sqrt(big).hi();
    let c2_mag = dd_sqrt(small).hi();
    Ok(StandardForm {
        a: dd_sqrt(inv.a).hi(),
        b: dd_sqrt(inv.b).hi(),
        c1,
        c2: if inv.c.hi() < 0.0 { -c2_mag } else { c2_mag },
    })
}
