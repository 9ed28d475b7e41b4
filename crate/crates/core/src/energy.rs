//! Local energy balance and the Sobolev bound on balls.
//!
//! For a smooth steady solution and a test function `psi >= 0`,
//!
//! ```text
//! 2 int |grad u|^2 psi = int |u|^2 lap psi + (|u|^2 + 2 (p - [h])) u . grad psi + 2 f . u psi
//! ```
//!
//! and a suitable weak solution satisfies it with `<=`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff::{Product, Psi2, RadialBump, TestFunction};
use crate::error::{Error, Result};
use crate::field::{axpy, dist, dot, frobenius2, jacobian, norm2, FieldTriple, Point, ZERO};
use crate::quadrature::{integrate_ball_multi, Ball, QuadratureConfig};

/// Residuals above `-SUITABILITY_TOLERANCE` count as satisfying the inequality.
pub const SUITABILITY_TOLERANCE: f64 = 0.05;
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Tensor rule fine enough in radius to resolve the cutoff transitions.
pub fn energy_quadrature() -> QuadratureConfig {
    let mut c = QuadratureConfig::tensor(16, 6);
    c.radial_panels = 8;
    c
}

/// `lap (r^2 + |x - x1|^2)^{-2}` in R^6.
pub fn psi2_laplacian(x: &Point, x1: &Point, r: f64) -> f64 {
    let s = r * r + norm2(&crate::field::sub(x, x1), 6);
    -24.0 * r * r / (s * s * s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `int u . grad psi`; zero for divergence-free `u`, which is what makes
    /// the constant `[h]` irrelevant.
    pub flux: f64,
}

/// Both sides of the local energy balance for one test function.
pub fn energy_residual(
    t: &FieldTriple,
    psi: &dyn TestFunction,
    h_mean: f64,
    cfg: &QuadratureConfig,
) -> Result<EnergyReport> {
    let dim = t.dim();
    let support = psi
        .support()
        .ok_or_else(|| Error::Precondition("test function must have compact support".into()))?;
    if !t.u.domain().contains_ball(&support.center, support.radius) {
        return Err(Error::Domain(format!(
            "test function support of radius {} about {:?} leaves the field domain",
            support.radius,
            &support.center[..dim]
        )));
    }
    let mut sing = t.u.singular_points().to_vec();
    if let Some(p) = &t.p {
        sing.extend_from_slice(p.singular_points());
    }
    let est = integrate_ball_multi(
        |x: &Point, out: &mut [f64]| {
            let v = psi.value(x);
            let g = psi.gradient(x);
            let lap = psi.laplacian(x);
            let u = t.u.eval(x);
            let u2 = norm2(&u, dim);
            let grad2 = if v != 0.0 { frobenius2(&jacobian(t.u.as_ref(), x), dim) } else { 0.0 };
            let p = t.p.as_ref().map(|p| p.eval(x) - h_mean).unwrap_or(0.0);
            let ug = dot(&u, &g, dim);
            let fu = t.f.as_ref().map(|f| dot(&f.eval(x), &u, dim)).unwrap_or(0.0);
            out[0] = 2.0 * grad2 * v;
            out[1] = u2 * lap + (u2 + 2.0 * p) * ug + 2.0 * fu * v;
            out[2] = ug;
        },
        3,
        &support,
        &sing,
        cfg,
    )?;
    let (lhs, rhs, flux) = (est[0].value, est[1].value, est[2].value);
    let residual = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { (rhs - lhs) / lhs.abs().max(RESIDUAL_FLOOR) };
    Ok(EnergyReport { lhs, rhs, residual, flux })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Psi1,
    Psi1Psi2,
}

/// One member of the test-function battery.
pub struct BatteryEntry {
    pub kind: TestKind,
    pub center: Point,
    pub rho: f64,
    /// ψ₂ scale, when present.
    pub r: Option<f64>,
    pub func: Box<dyn TestFunction>,
}

/// Deterministic battery of `count` test functions about `x0`: plain
/// cutoffs alternating with cutoff times `(r^2 + |x - x1|^2)^{-2}`, centres
/// within `rho / 4` of `x0` and scales between `rho / 2` and `rho`.
pub fn battery(dim: usize, x0: &Point, rho: f64, count: usize, seed: u64) -> Vec<BatteryEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas = [1.0 / 3.0, 1.0 / 4.0, 1.0 / 6.0, 1.0 / 8.0];
    (0..count)
        .map(|k| {
            let mut z = ZERO;
            loop {
                for c in z.iter_mut().take(dim) {
                    *c = rng.random_range(-1.0..1.0);
                }
                if norm2(&z, dim) < 1.0 {
                    break;
                }
            }
            let center = axpy(x0, rho / 4.0, &z);
            let scale = rho * (0.5 + 0.5 * rng.random::<f64>());
            let psi1 = RadialBump::psi1(dim, center, scale);
            if k % 2 == 0 {
                BatteryEntry { kind: TestKind::Psi1, center, rho: scale, r: None, func: Box::new(psi1) }
            } else {
                let r = thetas[(k / 2) % thetas.len()] * scale;
                let func = Product { a: psi1, b: Psi2::new(dim, center, r) };
                BatteryEntry { kind: TestKind::Psi1Psi2, center, rho: scale, r: Some(r), func: Box::new(func) }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub kind: TestKind,
    pub center: Vec<f64>,
    pub rho: f64,
    pub r: Option<f64>,
    pub report: EnergyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    pub rows: Vec<BatteryRow>,
    pub max_abs_residual: f64,
    pub min_residual: f64,
    /// Every residual is at least `-SUITABILITY_TOLERANCE`.
    pub suitable: bool,
}

pub fn run_battery(t: &FieldTriple, entries: &[BatteryEntry], h_mean: f64, cfg: &QuadratureConfig) -> Result<BatteryResult> {
    let dim = t.dim();
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let report = energy_residual(t, e.func.as_ref(), h_mean, cfg)?;
        rows.push(BatteryRow { kind: e.kind, center: e.center[..dim].to_vec(), rho: e.rho, r: e.r, report });
    }
    let max_abs_residual = rows.iter().map(|r| r.report.residual.abs()).fold(0.0, f64::max);
    let min_residual = rows.iter().map(|r| r.report.residual).fold(f64::INFINITY, f64::min);
    Ok(BatteryResult { rows, max_abs_residual, min_residual, suitable: min_residual >= -SUITABILITY_TOLERANCE })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevReport {
    pub lhs: f64,
    pub bracket: f64,
    pub ratio: f64,
}

/// `int |u|^3` against `(int |grad u|^2)^{3/2} + r^-3 (int |u|^2)^{3/2}`.
pub fn sobolev_check(t: &FieldTriple, ball: &Ball, cfg: &QuadratureConfig) -> Result<SobolevReport> {
    let dim = t.dim();
    if !t.u.domain().contains_ball(&ball.center, ball.radius) {
        return Err(Error::Domain("ball leaves the field domain".into()));
    }
    let est = integrate_ball_multi(
        |x: &Point, out: &mut [f64]| {
            let u2 = norm2(&t.u.eval(x), dim);
            out[0] = u2 * u2.sqrt();
            out[1] = frobenius2(&jacobian(t.u.as_ref(), x), dim);
            out[2] = u2;
        },
        3,
        ball,
        t.u.singular_points(),
        cfg,
    )?;
    let lhs = est[0].value;
    let bracket = est[1].value.powf(1.5) + ball.radius.powi(-3) * est[2].value.powf(1.5);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / bracket };
    Ok(SobolevReport { lhs, bracket, ratio })
}

/// Whether `psi2` is negative-Laplacian everywhere, at most the uniform bound inside `rho`, and at least `r^-4/4` inside `r`.
pub fn psi2_bounds_hold(x1: &Point, r: f64, rho: f64, points: &[Point]) -> bool {
    let c = -24.0 * r.powi(-6) * (r * r / (r * r + rho * rho)).powi(4);
    let psi = Psi2::new(6, *x1, r);
    points.iter().all(|x| {
        let d = dist(x, x1, 6);
        let lap = psi.laplacian(x);
        lap < 0.0 && (d > rho || lap <= c * (1.0 - 1e-12)) && (d > r || psi.value(x) >= 0.25 * r.powi(-4) * (1.0 - 1e-12))
    })
}
