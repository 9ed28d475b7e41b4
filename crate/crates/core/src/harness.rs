//! Empirical constants for the ball inequalities and the two iteration
//! arguments.
//!
//! Each inequality is read as `lhs <= N * bracket`; a sweep records the
//! ratios `lhs / bracket` over a family of fields, scales and centres.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{criterion_e, e_sweep, BootstrapSchedule, EpsilonConfig, Status};
use crate::error::{Error, Result};
use crate::field::{axpy, unit, BoxDomain, FieldTriple, Point};
use crate::generators::random_triple;
use crate::pressure::{same_ball_h_mean, PressureConfig};
use crate::quadrature::{Ball, QuadratureConfig};
use crate::quantities::{compute_quantities, log_log_slope, Quantity, QuantityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    /// `C(g rho) <= N [g^-3 E^{3/2} + g^-6 A^{3/4} E^{3/4} + g^3 C](rho)`.
    Cubic,
    /// `D(g rho, x1) <= N [g^{9/2} D + g^-3 E^{3/2} + g^-3 F^{3/4}](rho, x0)`
    /// with `x1 = x0 + rho/8 e1`.
    PressureShift,
    /// `(A + E)(g rho) <= N g^-2 [C^{2/3} + C + C^{1/3} D^{2/3} + F](rho)`.
    EnergyCubic,
    /// `Phi(g rho) <= N [g^2 Phi(rho) + g^2 + g^-50 (E + E^3 + F)(rho)]`,
    /// `Phi = A + E + C + D`.
    StepOne,
    /// `(A + E)(g rho) <= N [g^2 A + g^-3 ((A + E)^{3/2} + D) + g^-6 F](rho)`.
    EnergyDecay,
    /// `[psi(g rho) - psi(rho) / 4]_+ <= N [psi^{3/2} + F + F^{1/2}](rho)`,
    /// `psi = A + E + D^{2/3}`.
    Absorbed,
    /// `(A + E + C^{2/3} + D^{2/3})(r) <= N (r / rho)^a [psi + F + F^{1/2}](rho / 8)`
    /// with `r = g^2 rho / 8` and `a = log(1/2) / log g`.
    DecayRate,
}

impl LemmaId {
    pub const ALL: [LemmaId; 7] = [
        LemmaId::Cubic,
        LemmaId::PressureShift,
        LemmaId::EnergyCubic,
        LemmaId::StepOne,
        LemmaId::EnergyDecay,
        LemmaId::Absorbed,
        LemmaId::DecayRate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LemmaId::Cubic => "cubic",
            LemmaId::PressureShift => "pressure-shift",
            LemmaId::EnergyCubic => "energy-cubic",
            LemmaId::StepOne => "step-one",
            LemmaId::EnergyDecay => "energy-decay",
            LemmaId::Absorbed => "absorbed",
            LemmaId::DecayRate => "decay-rate",
        }
    }

    /// Values of the ratio parameter swept by default.
    pub fn default_params(&self) -> Vec<f64> {
        match self {
            LemmaId::Cubic | LemmaId::PressureShift | LemmaId::DecayRate => vec![0.25],
            LemmaId::EnergyCubic => vec![0.5],
            LemmaId::StepOne => vec![1.0 / 16.0],
            LemmaId::EnergyDecay => vec![1.0 / 3.0],
            LemmaId::Absorbed => vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
        }
    }

    /// `Some(reason)` when `g` is outside the hypotheses.
    pub fn check_param(&self, g: f64) -> Option<String> {
        let (hi, closed) = match self {
            LemmaId::Cubic | LemmaId::Absorbed => (1.0, false),
            LemmaId::PressureShift => (0.25, true),
            LemmaId::EnergyCubic | LemmaId::DecayRate => (0.5, true),
            LemmaId::StepOne => (0.125, false),
            LemmaId::EnergyDecay => (1.0 / 3.0, true),
        };
        let ok = g > 0.0 && if closed { g <= hi } else { g < hi };
        (!ok).then(|| format!("parameter {g} outside (0, {hi}{}", if closed { "]" } else { ")" }))
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LemmaId::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown lemma '{s}'")))
    }
}

/// Quantity reports per (field, ball), computed once.
pub struct HarnessContext<'a> {
    pub family: &'a [FieldTriple],
    pub quad: QuadratureConfig,
    pub pressure: PressureConfig,
    cache: Mutex<HashMap<(usize, [u64; 6], u64), QuantityReport>>,
}

/// Tensor rule used for harness quantities.
pub fn harness_quadrature() -> QuadratureConfig {
    QuadratureConfig::tensor(12, 6)
}

impl<'a> HarnessContext<'a> {
    pub fn new(family: &'a [FieldTriple], quad: QuadratureConfig, pressure: PressureConfig) -> Self {
        Self { family, quad, pressure, cache: Mutex::new(HashMap::new()) }
    }

    /// Harness defaults: tensor quadrature and a coarse spectral grid.
    pub fn with_defaults(family: &'a [FieldTriple]) -> Self {
        Self::new(family, harness_quadrature(), PressureConfig::with_grid(8))
    }

    pub fn report(&self, field: usize, center: &Point, r: f64) -> Result<QuantityReport> {
        let key = (field, center.map(f64::to_bits), r.to_bits());
        if let Some(rep) = self.cache.lock().expect("report cache").get(&key) {
            return Ok(rep.clone());
        }
        let t = &self.family[field];
        let ball = Ball::new(t.dim(), *center, r)?;
        let h = if t.p.is_some() { Some(same_ball_h_mean(t, &ball, &self.pressure)?) } else { None };
        let rep = compute_quantities(t, h, &ball, &self.quad)?;
        self.cache.lock().expect("report cache").insert(key, rep.clone());
        Ok(rep)
    }
}

fn psi(r: &QuantityReport) -> f64 {
    r.v(Quantity::A) + r.v(Quantity::E) + r.v(Quantity::D).powf(2.0 / 3.0)
}

/// `(lhs, bracket)` for one case.
pub fn evaluate(ctx: &HarnessContext, lemma: LemmaId, field: usize, x0: &Point, rho: f64, g: f64) -> Result<(f64, f64)> {
    use Quantity::*;
    let big = |c: &Point, r: f64| ctx.report(field, c, r);
    Ok(match lemma {
        LemmaId::Cubic => {
            let s = big(x0, g * rho)?;
            let b = big(x0, rho)?;
            let (a, e, c) = (b.v(A), b.v(E), b.v(C));
            (s.v(C), g.powi(-3) * e.powf(1.5) + g.powi(-6) * (a * e).powf(0.75) + g.powi(3) * c)
        }
        LemmaId::PressureShift => {
            let x1 = axpy(x0, rho / 8.0, &unit(0));
            let s = big(&x1, g * rho)?;
            let b = big(x0, rho)?;
            (s.v(D), g.powf(4.5) * b.v(D) + g.powi(-3) * (b.v(E).powf(1.5) + b.v(F).powf(0.75)))
        }
        LemmaId::EnergyCubic => {
            let s = big(x0, g * rho)?;
            let b = big(x0, rho)?;
            let (c, d) = (b.v(C), b.v(D));
            (s.v(A) + s.v(E), g.powi(-2) * (c.powf(2.0 / 3.0) + c + c.cbrt() * d.powf(2.0 / 3.0) + b.v(F)))
        }
        LemmaId::StepOne => {
            let s = big(x0, g * rho)?;
            let b = big(x0, rho)?;
            let phi = |r: &QuantityReport| r.v(A) + r.v(E) + r.v(C) + r.v(D);
            let e = b.v(E);
            (phi(&s), g * g * (phi(&b) + 1.0) + g.powi(-50) * (e + e.powi(3) + b.v(F)))
        }
        LemmaId::EnergyDecay => {
            let s = big(x0, g * rho)?;
            let b = big(x0, rho)?;
            let (a, e) = (b.v(A), b.v(E));
            (s.v(A) + s.v(E), g * g * a + g.powi(-3) * ((a + e).powf(1.5) + b.v(D)) + g.powi(-6) * b.v(F))
        }
        LemmaId::Absorbed => {
            let s = big(x0, g * rho)?;
            let b = big(x0, rho)?;
            let f = b.v(F);
            ((psi(&s) - 0.25 * psi(&b)).max(0.0), psi(&b).powf(1.5) + f + f.sqrt())
        }
        LemmaId::DecayRate => {
            let alpha0 = 0.5f64.ln() / g.ln();
            let r = g * g * rho / 8.0;
            let s = big(x0, r)?;
            let b = big(x0, rho / 8.0)?;
            let f = b.v(F);
            let lhs = s.v(A) + s.v(E) + s.v(C).powf(2.0 / 3.0) + s.v(D).powf(2.0 / 3.0);
            (lhs, (r / rho).powf(alpha0) * (psi(&b) + f + f.sqrt()))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Included,
    ZeroBracket,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub field: usize,
    pub center: Vec<f64>,
    pub rho: f64,
    pub param: f64,
    pub lhs: f64,
    pub bracket: f64,
    pub ratio: Option<f64>,
    pub status: CaseStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSweep {
    pub lemma: LemmaId,
    pub cases: Vec<Case>,
    pub best_constant: f64,
    pub median: f64,
    /// `max / median` over positive ratios; 1 when none are positive.
    pub dispersion: f64,
    pub included: usize,
    pub zero_bracket: usize,
    pub skipped: usize,
}

impl ConstantSweep {
    pub fn all_finite(&self) -> bool {
        self.cases.iter().filter_map(|c| c.ratio).all(|r| r.is_finite() && r >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub scales: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    /// Ratio parameters; the lemma defaults when empty.
    pub params: Vec<f64>,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            scales: vec![0.5, std::f64::consts::FRAC_1_SQRT_2, 1.0],
            centers: vec![vec![0.0; 6], vec![0.3, -0.2, 0.1, 0.0, 0.2, -0.1]],
            params: Vec::new(),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(lemma: LemmaId, cases: Vec<Case>) -> ConstantSweep {
    let ratios: Vec<f64> = cases.iter().filter_map(|c| c.ratio).collect();
    let positive: Vec<f64> = ratios.iter().copied().filter(|&r| r > 0.0).collect();
    let best_constant = ratios.iter().copied().fold(0.0, f64::max);
    let med = median(positive.clone());
    let dispersion = if positive.is_empty() { 1.0 } else { positive.iter().copied().fold(0.0, f64::max) / med };
    let count = |f: fn(&CaseStatus) -> bool| cases.iter().filter(|c| f(&c.status)).count();
    ConstantSweep {
        lemma,
        best_constant,
        median: med,
        dispersion,
        included: count(|s| matches!(s, CaseStatus::Included)),
        zero_bracket: count(|s| matches!(s, CaseStatus::ZeroBracket)),
        skipped: count(|s| matches!(s, CaseStatus::Skipped(_))),
        cases,
    }
}

/// Brackets at or below this are cancellation noise and count as zero; the
/// quantities are scale-invariant, so an absolute floor is meaningful.
pub const NEGLIGIBLE: f64 = 1e-20;

/// Ratios over every (field, scale, centre, parameter) combination.
pub fn sweep_constant(lemma: LemmaId, ctx: &HarnessContext, params: &SweepParams) -> Result<ConstantSweep> {
    let gs = if params.params.is_empty() { lemma.default_params() } else { params.params.clone() };
    let mut grid = Vec::new();
    for field in 0..ctx.family.len() {
        for &rho in &params.scales {
            for c in &params.centers {
                for &g in &gs {
                    grid.push((field, rho, crate::field::point_from_slice(c), g));
                }
            }
        }
    }
    let cases: Vec<Case> = grid
        .par_iter()
        .map(|&(field, rho, x0, g)| {
            let dim = ctx.family[field].dim();
            let mut case = Case {
                field,
                center: x0[..dim].to_vec(),
                rho,
                param: g,
                lhs: 0.0,
                bracket: 0.0,
                ratio: None,
                status: CaseStatus::Included,
            };
            if let Some(reason) = lemma.check_param(g) {
                case.status = CaseStatus::Skipped(reason);
                return Ok(case);
            }
            let (lhs, bracket) = evaluate(ctx, lemma, field, &x0, rho, g)?;
            case.lhs = lhs;
            case.bracket = bracket;
            if bracket > NEGLIGIBLE {
                case.ratio = Some(lhs / bracket);
            } else {
                case.status = CaseStatus::ZeroBracket;
            }
            Ok(case)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(lemma, cases))
}

/// Divergence-free random triples with manufactured forcing, seeds `1..=count`.
pub fn random_family(count: usize, modes: usize, amplitude: f64, domain: &BoxDomain) -> Result<Vec<FieldTriple>> {
    (1..=count as u64).map(|s| random_triple(s, modes, amplitude, domain.clone())).collect()
}

// ---------------------------------------------------------------------------
// step-one iteration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step1Trace {
    pub radii: Vec<f64>,
    /// `A + E + C + D` on each radius.
    pub phi: Vec<f64>,
    pub e_surrogate: Option<f64>,
    pub applicable: bool,
    /// First index with `phi <= eps0`.
    pub reached: Option<usize>,
    /// `phi[k+1] <= phi[k] / 3 + eps0 / 2` for each step.
    pub contraction: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Measures `A + E + C + D` on `rho1 g^k`, `k = 0..=steps`, once the
/// smallness of `E` has been checked on the detector ladder.
pub fn step1_iteration(
    ctx: &HarnessContext,
    field: usize,
    x0: &Point,
    rho1: f64,
    g: f64,
    steps: usize,
    eps: &EpsilonConfig,
) -> Result<Step1Trace> {
    let t = &ctx.family[field];
    let ladder = EpsilonConfig { r_max: rho1, r_floor: rho1 * 0.5f64.powi(eps.levels as i32), ..*eps };
    let v = criterion_e(&e_sweep(t.u.as_ref(), x0, &ladder, &ctx.quad)?, &EpsilonConfig { eps0: eps.eps1, ..ladder });
    let radii: Vec<f64> = (0..=steps).map(|k| rho1 * g.powi(k as i32)).collect();
    if v.status != Status::Regular {
        return Ok(Step1Trace {
            radii,
            phi: Vec::new(),
            e_surrogate: v.value,
            applicable: false,
            reached: None,
            contraction: Vec::new(),
            note: Some(format!("E surrogate above eps1 = {}", eps.eps1)),
        });
    }
    let mut phi = Vec::with_capacity(radii.len());
    for &r in &radii {
        let rep = ctx.report(field, x0, r)?;
        phi.push(rep.v(Quantity::A) + rep.v(Quantity::E) + rep.v(Quantity::C) + rep.v(Quantity::D));
    }
    let contraction = phi.windows(2).map(|w| w[1] <= w[0] / 3.0 + eps.eps0 / 2.0).collect();
    let reached = phi.iter().position(|&p| p <= eps.eps0);
    Ok(Step1Trace { radii, phi, e_surrogate: v.value, applicable: true, reached, contraction, note: None })
}

// ---------------------------------------------------------------------------
// decay iteration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    pub bound: Vec<f64>,
    /// Exact comparison of every term.
    pub holds: bool,
    pub alpha0: f64,
    /// Log-log slope of the bound against the radius.
    pub fitted_alpha0: Option<f64>,
}

fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Precondition(format!("non-finite input {x}")))
}

fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// `phi_k = phi_{k-1} / 2 + n1 (theta1^{k-1} rho0)^2` against
/// `(1/2)^k [phi0 + 2 n1 rho0^2 / (1 - theta1)]`, in exact arithmetic.
pub fn decay_iteration(phi0: f64, theta1: f64, n1: f64, rho0: f64, k_max: usize) -> Result<DecayTrace> {
    if !(theta1 > 0.0 && theta1 <= 0.5) {
        return Err(Error::Precondition(format!("theta1 must lie in (0, 1/2], got {theta1}")));
    }
    if !(phi0 >= 0.0 && n1 >= 0.0 && rho0 > 0.0) {
        return Err(Error::Precondition("phi0, n1 must be nonnegative and rho0 positive".into()));
    }
    let (p0, th, n, r0) = (rational(phi0)?, rational(theta1)?, rational(n1)?, rational(rho0)?);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let two = BigRational::from_integer(BigInt::from(2));
    let tail = &two * &n * &r0 * &r0 / (BigRational::one() - &th);
    let mut phi = p0.clone();
    let mut scale = r0.clone();
    let mut weight = BigRational::one();
    let mut holds = true;
    let mut out = DecayTrace { radii: vec![rho0], phi: vec![phi0], bound: Vec::new(), holds: true, alpha0: 0.5f64.ln() / theta1.ln(), fitted_alpha0: None };
    let first_bound = &p0 + &tail;
    holds &= phi <= first_bound;
    out.bound.push(to_f64(&first_bound));
    for _ in 1..=k_max {
        phi = &half * &phi + &n * &scale * &scale;
        scale = &scale * &th;
        weight = &weight * &half;
        let bound = &weight * (&p0 + &tail);
        holds &= phi <= bound;
        out.radii.push(to_f64(&scale));
        out.phi.push(to_f64(&phi));
        out.bound.push(to_f64(&bound));
    }
    out.holds = holds;
    out.fitted_alpha0 = log_log_slope(&out.radii, &out.bound);
    Ok(out)
}

// ---------------------------------------------------------------------------
// bootstrap trace

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub k: usize,
    pub alpha: f64,
    pub ae_ok: bool,
    pub c_ok: bool,
    pub d_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapTrace {
    pub radii: Vec<f64>,
    pub ae_exponent: Option<f64>,
    pub c_exponent: Option<f64>,
    pub d_exponent: Option<f64>,
    pub rows: Vec<BootstrapRow>,
    /// The `A + E` decay meets `alpha_0`.
    pub applicable: bool,
    /// The `A + E` decay reaches the ceiling 2 of the schedule.
    pub exceeds_ceiling: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Fitted exponents may fall short of the target by this much.
pub const EXPONENT_SLACK: f64 = 0.05;

/// Decay exponents of `A + E`, `C` and `D` about `x1` against each
/// `alpha_k` of the schedule.
pub fn bootstrap_trace(ctx: &HarnessContext, field: usize, x1: &Point, schedule: &BootstrapSchedule, radii: &[f64]) -> Result<BootstrapTrace> {
    let mut ae = Vec::new();
    let mut c = Vec::new();
    let mut d = Vec::new();
    for &r in radii {
        let rep = ctx.report(field, x1, r)?;
        ae.push(rep.v(Quantity::A) + rep.v(Quantity::E));
        c.push(rep.v(Quantity::C));
        d.push(rep.v(Quantity::D));
    }
    let ae_exponent = log_log_slope(radii, &ae);
    let c_exponent = log_log_slope(radii, &c);
    let d_exponent = log_log_slope(radii, &d);
    let meets = |e: Option<f64>, target: f64| e.is_none_or(|e| e >= target - EXPONENT_SLACK);
    let rows: Vec<BootstrapRow> = schedule
        .alpha
        .iter()
        .enumerate()
        .map(|(k, &a)| BootstrapRow {
            k,
            alpha: a,
            ae_ok: meets(ae_exponent, a),
            c_ok: meets(c_exponent, 1.5 * a),
            d_ok: meets(d_exponent, 1.5 * a),
        })
        .collect();
    let applicable = rows.first().is_none_or(|r| r.ae_ok);
    let exceeds_ceiling = ae_exponent.is_some_and(|e| e > 2.0);
    let note = if ae_exponent.is_none() {
        Some("all exponents undefined".into())
    } else if !applicable {
        Some("A + E decays slower than alpha_0; bootstrap inapplicable".into())
    } else {
        None
    };
    Ok(BootstrapTrace { radii: radii.to_vec(), ae_exponent, c_exponent, d_exponent, rows, applicable, exceeds_ceiling, note })
}
