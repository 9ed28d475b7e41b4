//! The scale-invariant ball quantities
//!
//! ```text
//! A = r^-4 int |u|^2      E = r^-2 int |grad u|^2     C = r^-3 int |u|^3
//! D = r^-3 int |p - [h]|^{3/2}                        F = int |f|^2
//! ```
//!
//! and dyadic radius sweeps with log-log exponent fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{frobenius2, jacobian, norm2, FieldTriple, Point, MAX_DIM};
use crate::quadrature::{integrate_ball_multi, Ball, Estimate, QuadratureConfig};

/// Trusted entries have `stderr / value` below this.
pub const TRUST_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    A,
    E,
    C,
    D,
    F,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [Quantity::A, Quantity::E, Quantity::C, Quantity::D, Quantity::F];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::A => "A",
            Quantity::E => "E",
            Quantity::C => "C",
            Quantity::D => "D",
            Quantity::F => "F",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityReport {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(rename = "A")]
    pub a: Option<Estimate>,
    #[serde(rename = "E")]
    pub e: Option<Estimate>,
    #[serde(rename = "C")]
    pub c: Option<Estimate>,
    #[serde(rename = "D")]
    pub d: Option<Estimate>,
    #[serde(rename = "F")]
    pub f: Option<Estimate>,
    pub h_mean_used: Option<f64>,
}

impl QuantityReport {
    pub fn get(&self, q: Quantity) -> Option<Estimate> {
        match q {
            Quantity::A => self.a,
            Quantity::E => self.e,
            Quantity::C => self.c,
            Quantity::D => self.d,
            Quantity::F => self.f,
        }
    }

    /// Value of an entry; absent entries read as `None`.
    pub fn value(&self, q: Quantity) -> Option<f64> {
        self.get(q).map(|e| e.value)
    }

    /// Value of an entry, treating absent as zero.
    pub fn v(&self, q: Quantity) -> f64 {
        self.value(q).unwrap_or(0.0)
    }
}

fn singular_union(t: &FieldTriple) -> Vec<Point> {
    let mut s: Vec<Point> = t.u.singular_points().to_vec();
    if let Some(p) = &t.p {
        s.extend_from_slice(p.singular_points());
    }
    if let Some(f) = &t.f {
        s.extend_from_slice(f.singular_points());
    }
    s.dedup();
    s
}

/// Raw integrals over a ball, in the order A, E, C, D, F (D and F only when
/// the pressure or forcing is present).
fn raw_integrals(t: &FieldTriple, h_mean: Option<f64>, ball: &Ball, cfg: &QuadratureConfig) -> Result<Vec<Estimate>> {
    let dim = ball.dim;
    let p = t.p.as_ref();
    let f = t.f.as_ref();
    let n_out = 3 + p.is_some() as usize + f.is_some() as usize;
    let h = h_mean.unwrap_or(0.0);
    integrate_ball_multi(
        |x: &Point, out: &mut [f64]| {
            let u = t.u.eval(x);
            let u2 = norm2(&u, dim);
            out[0] = u2;
            out[1] = frobenius2(&jacobian(t.u.as_ref(), x), dim);
            out[2] = u2 * u2.sqrt();
            let mut k = 3;
            if let Some(p) = p {
                out[k] = (p.eval(x) - h).abs().powf(1.5);
                k += 1;
            }
            if let Some(f) = f {
                out[k] = norm2(&f.eval(x), dim);
            }
        },
        n_out,
        ball,
        &singular_union(t),
        cfg,
    )
}

pub fn check_ball_in_domain(t: &FieldTriple, ball: &Ball) -> Result<()> {
    if ball.dim != t.dim() {
        return Err(Error::Precondition(format!("ball dimension {} differs from field dimension {}", ball.dim, t.dim())));
    }
    if !t.u.domain().contains_ball(&ball.center, ball.radius) {
        return Err(Error::Domain(format!(
            "ball of radius {} about {:?} leaves the field domain",
            ball.radius,
            &ball.center[..ball.dim]
        )));
    }
    Ok(())
}

/// A, E, C, D, F on one ball. `h_mean` is the harmonic-part mean subtracted
/// inside D and is required whenever the triple carries a pressure.
pub fn compute_quantities(t: &FieldTriple, h_mean: Option<f64>, ball: &Ball, cfg: &QuadratureConfig) -> Result<QuantityReport> {
    check_ball_in_domain(t, ball)?;
    if t.p.is_some() && h_mean.is_none() {
        return Err(Error::Config("D needs the harmonic-part mean [h] of the pressure decomposition".into()));
    }
    let raw = raw_integrals(t, h_mean, ball, cfg)?;
    let r = ball.radius;
    let mut it = raw.into_iter();
    let a = it.next().map(|e| e.scale(r.powi(-4)));
    let e = it.next().map(|e| e.scale(r.powi(-2)));
    let c = it.next().map(|e| e.scale(r.powi(-3)));
    let d = if t.p.is_some() { it.next().map(|e| e.scale(r.powi(-3))) } else { None };
    let f = if t.f.is_some() { it.next() } else { None };
    Ok(QuantityReport {
        center: ball.center[..ball.dim].to_vec(),
        radius: r,
        a,
        e,
        c,
        d,
        f,
        h_mean_used: if t.p.is_some() { h_mean } else { None },
    })
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than
/// two usable points.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedExponents {
    #[serde(rename = "A")]
    pub a: Option<f64>,
    #[serde(rename = "E")]
    pub e: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "F")]
    pub f: Option<f64>,
}

impl FittedExponents {
    pub fn get(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::A => self.a,
            Quantity::E => self.e,
            Quantity::C => self.c,
            Quantity::D => self.d,
            Quantity::F => self.f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub reports: Vec<QuantityReport>,
    pub fitted_exponents: FittedExponents,
}

/// Whether an entry may be used for fits and limsup surrogates.
pub fn trusted(e: &Estimate) -> bool {
    e.value.is_finite() && (e.value == 0.0 && e.stderr == 0.0 || e.relative_error() < TRUST_RATIO)
}

pub fn fit_exponent(reports: &[QuantityReport], q: Quantity) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .filter_map(|r| r.get(q).filter(trusted).map(|e| (r.radius, e.value)))
        .unzip();
    log_log_slope(&xs, &ys)
}

/// Dyadic ladder `r_max 2^-j`, `j = 0..=levels`.
pub fn dyadic_ladder(r_max: f64, levels: usize) -> Vec<f64> {
    (0..=levels).map(|j| r_max * 0.5f64.powi(j as i32)).collect()
}

/// Quantities along a dyadic ladder. `h_mean` supplies `[h]` for each ball
/// when the triple has a pressure.
pub fn radius_sweep<H>(
    t: &FieldTriple,
    center: &Point,
    r_max: f64,
    levels: usize,
    cfg: &QuadratureConfig,
    h_mean: H,
) -> Result<SweepResult>
where
    H: Fn(&Ball) -> Result<f64>,
{
    if levels < 2 {
        return Err(Error::Precondition("a sweep needs at least three radii".into()));
    }
    let dim = t.dim();
    let radii = dyadic_ladder(r_max, levels);
    let mut reports = Vec::with_capacity(radii.len());
    for &r in &radii {
        let ball = Ball::new(dim, *center, r)?;
        check_ball_in_domain(t, &ball)?;
        let h = if t.p.is_some() { Some(h_mean(&ball)?) } else { None };
        reports.push(compute_quantities(t, h, &ball, cfg)?);
    }
    let fitted_exponents = FittedExponents {
        a: fit_exponent(&reports, Quantity::A),
        e: fit_exponent(&reports, Quantity::E),
        c: fit_exponent(&reports, Quantity::C),
        d: fit_exponent(&reports, Quantity::D),
        f: fit_exponent(&reports, Quantity::F),
    };
    Ok(SweepResult { center: center[..dim].to_vec(), radii, reports, fitted_exponents })
}

/// Column header of the tabular sweep output.
pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = (1..=MAX_DIM).map(|i| format!("center_{i}")).collect();
    cols.push("r".into());
    for q in Quantity::ALL {
        cols.push(q.name().into());
        cols.push(format!("{}_err", q.name()));
    }
    cols
}

/// One row per report, matching [`csv_header`]; absent entries are empty.
pub fn csv_row(r: &QuantityReport) -> Vec<String> {
    let mut row: Vec<String> = (0..MAX_DIM).map(|i| format!("{}", r.center.get(i).copied().unwrap_or(0.0))).collect();
    row.push(format!("{}", r.radius));
    for q in Quantity::ALL {
        match r.get(q) {
            Some(e) => {
                row.push(format!("{}", e.value));
                row.push(format!("{}", e.stderr));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{BoxDomain, ZERO};
    use crate::generators::{constant_triple, make_rotation, plane_rotation_matrix, rotation_triple, singular_triple};
    use crate::quadrature::unit_ball_volume;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const PI3: f64 = PI * PI * PI;

    fn dom() -> BoxDomain {
        BoxDomain::cube(6, 8.0).unwrap()
    }

    #[test]
    fn constant_field_values() {
        let mut v = ZERO;
        v[0] = 1.0;
        let t = constant_triple(v, 0.0, dom()).unwrap().velocity_only();
        let b = Ball::new(6, ZERO, 1.0).unwrap();
        let q = compute_quantities(&t, None, &b, &QuadratureConfig::tensor(8, 6)).unwrap();
        assert_relative_eq!(q.v(Quantity::A), PI3 / 6.0, max_relative = 1e-12);
        assert_eq!(q.v(Quantity::E), 0.0);
        assert_relative_eq!(q.v(Quantity::C), PI3 / 6.0, max_relative = 1e-12);
        assert!(q.d.is_none() && q.f.is_none());
    }

    #[test]
    fn rotation_values_tensor() {
        let (u, _) = make_rotation(1.0, dom());
        let t = FieldTriple::new(u, None, None);
        let b = Ball::new(6, ZERO, 1.0).unwrap();
        let q = compute_quantities(&t, None, &b, &QuadratureConfig::tensor(16, 8)).unwrap();
        assert_relative_eq!(q.v(Quantity::A), PI3 / 24.0, max_relative = 1e-10);
        assert_relative_eq!(q.v(Quantity::E), PI3 / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn pressure_without_mean_is_config_error() {
        let t = rotation_triple(1.0, dom()).unwrap();
        let b = Ball::new(6, ZERO, 1.0).unwrap();
        let err = compute_quantities(&t, None, &b, &QuadratureConfig::tensor(4, 4)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn ball_outside_domain() {
        let t = rotation_triple(1.0, BoxDomain::cube(6, 1.0).unwrap()).unwrap();
        let mut c = ZERO;
        c[0] = 0.9;
        let b = Ball::new(6, c, 0.5).unwrap();
        assert!(matches!(compute_quantities(&t, Some(0.0), &b, &QuadratureConfig::tensor(4, 4)), Err(Error::Domain(_))));
    }

    #[test]
    fn slopes() {
        let xs = [1.0, 0.5, 0.25, 0.125];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(4)).collect();
        assert_relative_eq!(log_log_slope(&xs, &ys).unwrap(), 4.0, max_relative = 1e-12);
        assert!(log_log_slope(&xs, &[0.0; 4]).is_none());
    }

    #[test]
    fn rotation_sweep_exponent() {
        let (u, _) = make_rotation(1.0, dom());
        let t = FieldTriple::new(u, None, None);
        let s = radius_sweep(&t, &ZERO, 2.0, 4, &QuadratureConfig::tensor(8, 4), |_| Ok(0.0)).unwrap();
        let e = s.fitted_exponents.e.unwrap();
        assert!((e - 4.0).abs() < 1e-8, "{e}");
        for w in s.radii.windows(2) {
            assert!(w[0] > w[1]);
        }
        for (r, q) in s.radii.iter().zip(&s.reports) {
            assert_relative_eq!(q.v(Quantity::E), PI3 / 3.0 * r.powi(4), max_relative = 1e-10);
        }
    }

    #[test]
    fn constant_sweep_has_undefined_e_exponent() {
        let mut v = ZERO;
        v[2] = 2.0;
        let t = constant_triple(v, 0.0, dom()).unwrap().velocity_only();
        let s = radius_sweep(&t, &ZERO, 1.0, 3, &QuadratureConfig::tensor(4, 4), |_| Ok(0.0)).unwrap();
        assert!(s.reports.iter().all(|r| r.v(Quantity::E) == 0.0));
        assert!(s.fitted_exponents.e.is_none());
    }

    #[test]
    fn singular_fixture_is_scale_free() {
        let t = singular_triple(plane_rotation_matrix(1.0), dom()).unwrap().velocity_only();
        let cfg = QuadratureConfig::tensor(8, 6);
        let s = radius_sweep(&t, &ZERO, 0.5, 2, &cfg, |_| Ok(0.0)).unwrap();
        let e0 = s.reports[0].v(Quantity::E);
        // |grad u|^2 = ||M||_F^2 / |x|^4, so E = pi^3 ||M||_F^2 / 2 = pi^3
        assert_relative_eq!(e0, PI3, max_relative = 1e-10);
        for r in &s.reports {
            for q in [Quantity::A, Quantity::E, Quantity::C] {
                assert_relative_eq!(r.v(q), s.reports[0].v(q), max_relative = 2e-2);
            }
        }
        assert!(s.fitted_exponents.e.unwrap().abs() <= 0.2);
    }

    #[test]
    fn holder_interpolation_and_monotone_mass() {
        let t = crate::generators::random_triple(4, 6, 1.0, dom()).unwrap().velocity_only();
        let mut c = ZERO;
        c[1] = 0.3;
        let s = radius_sweep(&t, &c, 1.0, 3, &QuadratureConfig::tensor(8, 5), |_| Ok(0.0)).unwrap();
        let w = unit_ball_volume(6).powf(1.0 / 3.0);
        for r in &s.reports {
            assert!(r.v(Quantity::A) <= r.v(Quantity::C).powf(2.0 / 3.0) * w * (1.0 + 1e-9));
        }
        let mass: Vec<f64> = s.reports.iter().map(|r| r.v(Quantity::A) * r.radius.powi(4)).collect();
        for m in mass.windows(2) {
            assert!(m[0] >= m[1]);
        }
    }

    #[test]
    fn csv_layout() {
        assert_eq!(
            csv_header().join(","),
            "center_1,center_2,center_3,center_4,center_5,center_6,r,A,A_err,E,E_err,C,C_err,D,D_err,F,F_err"
        );
    }
}
