//! Epsilon-regularity verdicts, singular-set covering and the bootstrap
//! exponent schedule.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{frobenius2, jacobian, FieldTriple, Point, VectorField, ZERO};
use crate::quadrature::{integrate_ball, Ball, Estimate, QuadratureConfig};
use crate::quantities::{dyadic_ladder, log_log_slope, trusted, FittedExponents, Quantity, QuantityReport, SweepResult};

/// Hölder threshold for the exponent of `int_{B(r)} |grad u|^{3/2}` in six
/// dimensions.
pub const MORREY_THRESHOLD: f64 = 4.5;
pub const MORREY_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonConfig {
    /// Threshold for the `E` and `C + D + F` criteria.
    pub eps0: f64,
    /// Smallness of `E` assumed by the step-one iteration.
    pub eps1: f64,
    /// Largest ladder radius.
    pub r_max: f64,
    /// Radii below this are never trusted.
    pub r_floor: f64,
    /// Ladder `r_max 2^-j`, `j = 0..=levels`.
    pub levels: usize,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        Self { eps0: 0.01, eps1: 0.005, r_max: 0.125, r_floor: 0.125 / 8.0, levels: 3 }
    }
}

impl EpsilonConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.eps0) || !pos(self.eps1) {
            return Err(Error::Config(format!("thresholds must be positive (eps0 = {}, eps1 = {})", self.eps0, self.eps1)));
        }
        if !pos(self.r_floor) || !pos(self.r_max) {
            return Err(Error::Config("r_floor and r_max must be positive".into()));
        }
        if self.levels < 2 {
            return Err(Error::Config("ladder needs at least three radii (levels >= 2)".into()));
        }
        Ok(())
    }

    pub fn ladder(&self) -> Vec<f64> {
        dyadic_ladder(self.r_max, self.levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Regular,
    SingularCandidate,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    /// Achieved value of the tested quantity, when it could be formed.
    pub value: Option<f64>,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    fn decide(value: f64, threshold: f64) -> Self {
        let status = if value <= threshold { Status::Regular } else { Status::SingularCandidate };
        Self { status, value: Some(value), threshold, note: None }
    }

    fn inconclusive(threshold: f64, note: String) -> Self {
        Self { status: Status::Inconclusive, value: None, threshold, note: Some(note) }
    }

    pub fn is_regular(&self) -> bool {
        self.status == Status::Regular
    }
}

/// Max of `E` over the three smallest trusted radii against `eps0`.
pub fn criterion_e(sweep: &SweepResult, cfg: &EpsilonConfig) -> Verdict {
    let mut usable: Vec<(f64, f64)> = sweep
        .reports
        .iter()
        .filter(|r| r.radius >= cfg.r_floor * (1.0 - 1e-12))
        .filter_map(|r| r.e.filter(trusted).map(|e| (r.radius, e.value)))
        .collect();
    if usable.len() < 3 {
        return Verdict::inconclusive(cfg.eps0, format!("only {} trusted radii", usable.len()));
    }
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    let worst = usable[..3].iter().map(|u| u.1).fold(0.0, f64::max);
    Verdict::decide(worst, cfg.eps0)
}

/// `C + D + F` at one radius against `eps0`.
pub fn criterion_cdf(report: &QuantityReport, cfg: &EpsilonConfig) -> Verdict {
    let (Some(c), Some(d), Some(f)) = (report.c, report.d, report.f) else {
        return Verdict::inconclusive(cfg.eps0, "C, D and F are all required".into());
    };
    Verdict::decide(c.value + d.value + f.value, cfg.eps0)
}

/// `E` alone along the ladder of `cfg`; the other quantities are left out.
pub fn e_sweep(u: &dyn VectorField, center: &Point, cfg: &EpsilonConfig, quad: &QuadratureConfig) -> Result<SweepResult> {
    let dim = u.dim();
    let radii = cfg.ladder();
    let mut reports = Vec::with_capacity(radii.len());
    for &r in &radii {
        let ball = Ball::new(dim, *center, r)?;
        if !u.domain().contains_ball(center, r) {
            return Err(Error::Domain(format!("ball of radius {r} about {:?} leaves the field domain", &center[..dim])));
        }
        let est = integrate_ball(|x| frobenius2(&jacobian(u, x), dim), &ball, u.singular_points(), quad)?;
        reports.push(QuantityReport {
            center: center[..dim].to_vec(),
            radius: r,
            a: None,
            e: Some(est.scale(r.powi(-2))),
            c: None,
            d: None,
            f: None,
            h_mean_used: None,
        });
    }
    let fitted_exponents = FittedExponents { e: crate::quantities::fit_exponent(&reports, Quantity::E), ..Default::default() };
    Ok(SweepResult { center: center[..dim].to_vec(), radii, reports, fitted_exponents })
}

/// Cheap tensor rule used for the per-probe `E` ladders.
pub fn detect_quadrature() -> QuadratureConfig {
    QuadratureConfig::tensor(4, 4)
}

/// Lattice of `per_axis^dim` probes on the cube of half-width `half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeGrid {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub per_axis: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self { center: vec![0.0; 6], half_width: 1.0, per_axis: 5 }
    }
}

impl ProbeGrid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.per_axis - 1) as f64
    }

    pub fn extent(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn lower(&self) -> Point {
        let mut lo = ZERO;
        for (i, c) in self.center.iter().enumerate() {
            lo[i] = c - self.half_width;
        }
        lo
    }

    pub fn validate(&self, t: &FieldTriple, r_max: f64) -> Result<()> {
        if self.center.len() != t.dim() {
            return Err(Error::Config(format!("probe grid has dimension {} but the field has {}", self.center.len(), t.dim())));
        }
        if self.per_axis < 2 || !(self.half_width > 0.0) {
            return Err(Error::Config("probe grid needs per_axis >= 2 and half_width > 0".into()));
        }
        let dom = t.u.domain();
        let lo = self.lower();
        for i in 0..t.dim() {
            if lo[i] - r_max < dom.lo[i] || lo[i] + self.extent() + r_max > dom.hi[i] {
                return Err(Error::Precondition(format!(
                    "probe grid plus margin {r_max} leaves the field domain along axis {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Probes in lexicographic order, last axis fastest.
    pub fn points(&self) -> Vec<Point> {
        let dim = self.dim();
        let lo = self.lower();
        let h = self.spacing();
        let total = self.per_axis.pow(dim as u32);
        (0..total)
            .map(|mut k| {
                let mut x = ZERO;
                for i in (0..dim).rev() {
                    x[i] = lo[i] + h * (k % self.per_axis) as f64;
                    k /= self.per_axis;
                }
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPoint {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSetEstimate {
    pub probes: usize,
    pub flagged: Vec<FlaggedPoint>,
    pub inconclusive: usize,
    /// Box side to number of boxes meeting the flagged set.
    pub covering: BTreeMap<String, usize>,
    /// Box side to `N delta^2`.
    pub measure_estimates: BTreeMap<String, f64>,
    pub dimension_fit: Option<f64>,
    pub thresholds: EpsilonConfig,
}

/// Scales `extent 2^-j`, `j = 3..=6`.
pub fn covering_scales(extent: f64) -> Vec<f64> {
    (3..=6).map(|j| extent * 0.5f64.powi(j)).collect()
}

/// Number of lattice boxes of side `delta` anchored at `lo` that contain a point.
pub fn box_count(points: &[Point], dim: usize, lo: &Point, delta: f64) -> usize {
    points
        .iter()
        .map(|x| (0..dim).map(|i| ((x[i] - lo[i]) / delta).floor() as i64).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Applies the `E` criterion at every probe of the grid and covers the
/// flagged ones.
pub fn detect_singular_set(t: &FieldTriple, grid: &ProbeGrid, cfg: &EpsilonConfig, quad: &QuadratureConfig) -> Result<SingularSetEstimate> {
    cfg.validate()?;
    grid.validate(t, cfg.r_max)?;
    let dim = t.dim();
    let probes = grid.points();
    let verdicts: Vec<Verdict> = probes
        .par_iter()
        .map(|x| e_sweep(t.u.as_ref(), x, cfg, quad).map(|s| criterion_e(&s, cfg)))
        .collect::<Result<_>>()?;
    let mut flagged = Vec::new();
    let mut flagged_pts = Vec::new();
    let mut inconclusive = 0;
    for (x, v) in probes.iter().zip(&verdicts) {
        match v.status {
            Status::SingularCandidate => {
                flagged.push(FlaggedPoint { point: x[..dim].to_vec(), value: v.value.unwrap_or(f64::NAN) });
                flagged_pts.push(*x);
            }
            Status::Inconclusive => inconclusive += 1,
            Status::Regular => {}
        }
    }
    let lo = grid.lower();
    let scales = covering_scales(grid.extent());
    let counts: Vec<usize> = scales.iter().map(|&d| box_count(&flagged_pts, dim, &lo, d)).collect();
    let inv: Vec<f64> = scales.iter().map(|d| 1.0 / d).collect();
    let ys: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let dimension_fit = if counts.iter().all(|&n| n > 0) { log_log_slope(&inv, &ys) } else { None };
    let mut covering = BTreeMap::new();
    let mut measure_estimates = BTreeMap::new();
    for (d, n) in scales.iter().zip(&counts) {
        covering.insert(format!("{d}"), *n);
        measure_estimates.insert(format!("{d}"), *n as f64 * d * d);
    }
    Ok(SingularSetEstimate {
        probes: probes.len(),
        flagged,
        inconclusive,
        covering,
        measure_estimates,
        dimension_fit,
        thresholds: *cfg,
    })
}

// ---------------------------------------------------------------------------
// bootstrap exponents

/// `alpha -> 12 alpha / (10 + alpha)`.
pub fn next_alpha(alpha: f64) -> f64 {
    12.0 * alpha / (10.0 + alpha)
}

/// `alpha_0, ..., alpha_n`.
pub fn alpha_sequence(alpha0: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut a = alpha0;
    out.push(a);
    for _ in 0..n {
        a = next_alpha(a);
        out.push(a);
    }
    out
}

pub fn mu(alpha: f64) -> f64 {
    alpha / (10.0 + alpha)
}

/// Morrey exponent `(6 - 3 delta / 2) / (5/4 - delta / 8)`.
pub fn beta(delta: f64) -> f64 {
    (6.0 - 1.5 * delta) / (1.25 - delta / 8.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSchedule {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub delta: f64,
    /// First index with `alpha_m > 2 - delta`.
    pub m: usize,
    pub beta: f64,
}

/// Iterates the exponent recurrence from `alpha0` until it passes `2 - delta`.
pub fn bootstrap_schedule(alpha0: f64, delta: f64) -> Result<BootstrapSchedule> {
    if !(alpha0 > 0.0 && alpha0 <= 2.0) {
        return Err(Error::Precondition(format!("alpha0 must lie in (0, 2], got {alpha0}")));
    }
    if !(delta > 0.0 && delta <= 0.1) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1/10], got {delta}")));
    }
    let mut alpha = vec![alpha0];
    while *alpha.last().unwrap() <= 2.0 - delta {
        let a = next_alpha(*alpha.last().unwrap());
        alpha.push(a);
    }
    let m = alpha.len() - 1;
    let mu = alpha.iter().map(|&a| mu(a)).collect();
    Ok(BootstrapSchedule { alpha, mu, delta, m, beta: beta(delta) })
}

// ---------------------------------------------------------------------------
// Morrey check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorreyReport {
    pub radii: Vec<f64>,
    pub integrals: Vec<f64>,
    pub exponent: Option<f64>,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `int_{B(r)} |grad u|^{3/2}` along `radii`.
pub fn grad_l32_sweep(u: &dyn VectorField, center: &Point, radii: &[f64], quad: &QuadratureConfig) -> Result<Vec<Estimate>> {
    let dim = u.dim();
    radii
        .iter()
        .map(|&r| {
            let ball = Ball::new(dim, *center, r)?;
            integrate_ball(|x| frobenius2(&jacobian(u, x), dim).powf(0.75), &ball, u.singular_points(), quad)
        })
        .collect()
}

/// Whether the fitted exponent clears `4.5 + margin`; an undefined fit holds
/// vacuously.
pub fn morrey_verdict(exponent: Option<f64>, margin: f64) -> (bool, Option<String>) {
    match exponent {
        Some(e) => (e > MORREY_THRESHOLD + margin, None),
        None => (true, Some("undefined fit (vanishing gradient)".into())),
    }
}

pub fn morrey_check(u: &dyn VectorField, center: &Point, radii: &[f64], margin: f64, quad: &QuadratureConfig) -> Result<MorreyReport> {
    let est = grad_l32_sweep(u, center, radii, quad)?;
    let integrals: Vec<f64> = est.iter().map(|e| e.value).collect();
    let exponent = log_log_slope(radii, &integrals);
    let (holds, note) = morrey_verdict(exponent, margin);
    Ok(MorreyReport { radii: radii.to_vec(), integrals, exponent, holds, note })
}
