//! Integration over balls and spheres in R^d.
//!
//! Monte Carlo draws come from counter-addressed ChaCha streams, one per
//! block of samples, and partial sums are merged in a fixed tree order, so
//! results do not depend on the number of worker threads.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{axpy, check_dim, dist, Point, ScalarField, VectorField, ZERO};
use crate::gauss::{gauss_gegenbauer, gauss_legendre};

pub const BLOCK: usize = 4096;
const STRATA: usize = 16;
const TENSOR_CHUNK: usize = 2048;

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        d => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

pub fn ball_volume(dim: usize, radius: f64) -> f64 {
    unit_ball_volume(dim) * radius.powi(dim as i32)
}

/// Area of the unit sphere S^{d-1}.
pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub dim: usize,
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(dim: usize, center: Point, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { dim, center, radius })
    }

    pub fn volume(&self) -> f64 {
        ball_volume(self.dim, self.radius)
    }

    pub fn contains(&self, x: &Point) -> bool {
        dist(x, &self.center, self.dim) < self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    TensorSpherical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub method: Method,
    pub samples: usize,
    pub radial_nodes: usize,
    pub radial_panels: usize,
    pub angular_points: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            method: Method::MonteCarlo,
            samples: 2_000_000,
            radial_nodes: 16,
            radial_panels: 1,
            angular_points: 8,
            seed: 42,
            stratified: true,
        }
    }
}

impl QuadratureConfig {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self { method: Method::MonteCarlo, samples, seed, ..Self::default() }
    }

    pub fn tensor(radial_nodes: usize, angular_points: usize) -> Self {
        Self { method: Method::TensorSpherical, radial_nodes, angular_points, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self.method {
            Method::MonteCarlo => self.samples < 2,
            Method::TensorSpherical => self.radial_nodes < 1 || self.angular_points < 1 || self.radial_panels < 1,
        };
        if bad {
            return Err(Error::Config("quadrature sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// A quadrature value with its standard error (0 for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    pub fn scale(self, s: f64) -> Self {
        Self { value: self.value * s, stderr: self.stderr * s.abs() }
    }

    /// `stderr / |value|`, 0 for an exact zero.
    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.stderr == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.stderr / self.value.abs()
        }
    }
}

// ---------------------------------------------------------------------------
// spherical tensor rule

/// Product rule on S^{d-1}: nested Gauss-Gegenbauer in the polar angles and
/// the trapezoid rule in the azimuth, `n` points per angle.
pub fn sphere_rule(dim: usize, n: usize) -> Arc<Vec<(Point, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Vec<(Point, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("sphere rule cache").get(&(dim, n)) {
        return rule.clone();
    }
    let rule = Arc::new(build_sphere_rule(dim - 1, n));
    cache.lock().expect("sphere rule cache").insert((dim, n), rule.clone());
    rule
}

/// Rule on S^k in R^{k+1}; the first coordinate is the polar one.
fn build_sphere_rule(k: usize, n: usize) -> Vec<(Point, f64)> {
    if k == 1 {
        let w = 2.0 * PI / n as f64;
        return (0..n)
            .map(|j| {
                let phi = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                let mut p = ZERO;
                p[0] = phi.cos();
                p[1] = phi.sin();
                (p, w)
            })
            .collect();
    }
    let inner = build_sphere_rule(k - 1, n);
    let (t, wt) = gauss_gegenbauer(n, (k as f64 - 2.0) / 2.0);
    let mut out = Vec::with_capacity(n * inner.len());
    for (ti, wi) in t.iter().zip(&wt) {
        let s = (1.0 - ti * ti).max(0.0).sqrt();
        for (y, wy) in inner.iter() {
            let mut p = ZERO;
            p[0] = *ti;
            for j in 0..k {
                p[j + 1] = s * y[j];
            }
            out.push((p, wi * wy));
        }
    }
    out
}

/// Gauss-Legendre on `[0, r]` split into equal panels.
fn radial_rule(r: f64, nodes: usize, panels: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(nodes);
    let h = r / panels as f64;
    let mut out = Vec::with_capacity(nodes * panels);
    for p in 0..panels {
        let a = p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((a + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Welford / Chan statistics

#[derive(Clone)]
struct Stats {
    n: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Stats {
    fn new(cells: usize) -> Self {
        Self { n: vec![0.0; cells], mean: vec![0.0; cells], m2: vec![0.0; cells] }
    }

    #[inline]
    fn push(&mut self, stratum: usize, n_out: usize, values: &[f64]) {
        for (k, v) in values.iter().enumerate() {
            let c = stratum * n_out + k;
            self.n[c] += 1.0;
            let d = v - self.mean[c];
            self.mean[c] += d / self.n[c];
            self.m2[c] += d * (v - self.mean[c]);
        }
    }

    fn merge(mut self, other: &Stats) -> Stats {
        for c in 0..self.n.len() {
            let (na, nb) = (self.n[c], other.n[c]);
            if nb == 0.0 {
                continue;
            }
            let n = na + nb;
            let d = other.mean[c] - self.mean[c];
            self.mean[c] += d * nb / n;
            self.m2[c] += other.m2[c] + d * d * na * nb / n;
            self.n[c] = n;
        }
        self
    }
}

fn tree_merge(mut parts: Vec<Stats>) -> Stats {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(&b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

fn non_finite(x: &Point, dim: usize, k: usize, v: f64) -> Error {
    Error::Quadrature { point: x[..dim].to_vec(), message: format!("integrand component {k} evaluated to {v}") }
}

// ---------------------------------------------------------------------------
// integration

/// Sampling geometry: either the ball itself or polar coordinates around a
/// singular point lying inside it.
#[derive(Clone, Copy)]
enum Geometry {
    Ball,
    Polar { pole: Point, reach: f64 },
}

fn geometry(ball: &Ball, singular: &[Point]) -> Geometry {
    let tol = 1e-12 * ball.radius;
    for s in singular {
        let d = dist(s, &ball.center, ball.dim);
        if d <= tol {
            // Already polar about the centre.
            return Geometry::Ball;
        }
        if d < ball.radius {
            return Geometry::Polar { pole: *s, reach: ball.radius + d };
        }
    }
    Geometry::Ball
}

fn isotropic(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    loop {
        let mut p = ZERO;
        let mut n2 = 0.0;
        for c in p.iter_mut().take(dim) {
            let z: f64 = rng.sample(StandardNormal);
            *c = z;
            n2 += z * z;
        }
        if n2 > 1e-300 {
            let inv = 1.0 / n2.sqrt();
            for c in p.iter_mut().take(dim) {
                *c *= inv;
            }
            return p;
        }
    }
}

/// Integrates a vector-valued integrand over a ball. `g` writes `n_out`
/// values for each point.
pub fn integrate_ball_multi<G>(g: G, n_out: usize, ball: &Ball, singular: &[Point], cfg: &QuadratureConfig) -> Result<Vec<Estimate>>
where
    G: Fn(&Point, &mut [f64]) + Sync,
{
    cfg.validate()?;
    match cfg.method {
        Method::TensorSpherical => tensor_ball(&g, n_out, ball, singular, cfg),
        Method::MonteCarlo => mc_ball(&g, n_out, ball, singular, cfg),
    }
}

pub fn integrate_ball<G>(g: G, ball: &Ball, singular: &[Point], cfg: &QuadratureConfig) -> Result<Estimate>
where
    G: Fn(&Point) -> f64 + Sync,
{
    let est = integrate_ball_multi(|x: &Point, out: &mut [f64]| out[0] = g(x), 1, ball, singular, cfg)?;
    Ok(est[0])
}

fn tensor_ball<G>(g: &G, n_out: usize, ball: &Ball, singular: &[Point], cfg: &QuadratureConfig) -> Result<Vec<Estimate>>
where
    G: Fn(&Point, &mut [f64]) + Sync,
{
    let dim = ball.dim;
    let (pole, reach, clip) = match geometry(ball, singular) {
        Geometry::Ball => (ball.center, ball.radius, false),
        Geometry::Polar { pole, reach } => (pole, reach, true),
    };
    let radial = radial_rule(reach, cfg.radial_nodes, cfg.radial_panels);
    let sphere = sphere_rule(dim, cfg.angular_points);
    let chunks = sphere.len().div_ceil(TENSOR_CHUNK);
    let tasks: Vec<(usize, usize)> = (0..radial.len()).flat_map(|i| (0..chunks).map(move |c| (i, c))).collect();
    let parts: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(i, c)| {
            let (s, ws) = radial[i];
            let jac = ws * s.powi(dim as i32 - 1);
            let mut acc = vec![0.0; n_out];
            let mut buf = vec![0.0; n_out];
            let lo = c * TENSOR_CHUNK;
            let hi = (lo + TENSOR_CHUNK).min(sphere.len());
            for (dir, wd) in &sphere[lo..hi] {
                let x = axpy(&pole, s, dir);
                if clip && !ball.contains(&x) {
                    continue;
                }
                buf.iter_mut().for_each(|b| *b = 0.0);
                g(&x, &mut buf);
                let w = jac * wd;
                for k in 0..n_out {
                    if !buf[k].is_finite() {
                        return Err(non_finite(&x, dim, k, buf[k]));
                    }
                    acc[k] += w * buf[k];
                }
            }
            Ok(acc)
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(tree_sum(parts).into_iter().map(Estimate::exact).collect())
}

fn mc_ball<G>(g: &G, n_out: usize, ball: &Ball, singular: &[Point], cfg: &QuadratureConfig) -> Result<Vec<Estimate>>
where
    G: Fn(&Point, &mut [f64]) + Sync,
{
    let dim = ball.dim;
    let geom = geometry(ball, singular);
    let strata = if cfg.stratified { STRATA } else { 1 };
    let blocks = cfg.samples.div_ceil(BLOCK);
    let area = unit_sphere_area(dim);
    let parts: Vec<Result<Stats>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(cfg.samples - b * BLOCK);
            let mut stats = Stats::new(strata * n_out);
            let mut buf = vec![0.0; n_out];
            for i in 0..count {
                let stratum = (b * BLOCK + i) % strata;
                let v: f64 = rng.random();
                let u = (stratum as f64 + v) / strata as f64;
                let dir = isotropic(&mut rng, dim);
                buf.iter_mut().for_each(|x| *x = 0.0);
                let (x, weight) = match geom {
                    Geometry::Ball => {
                        let s = ball.radius * u.powf(1.0 / dim as f64);
                        let x = axpy(&ball.center, s, &dir);
                        g(&x, &mut buf);
                        (x, ball.volume())
                    }
                    Geometry::Polar { pole, reach } => {
                        let t = reach * (1.0 - u);
                        let x = axpy(&pole, t, &dir);
                        if ball.contains(&x) {
                            g(&x, &mut buf);
                            (x, reach * area * t.powi(dim as i32 - 1))
                        } else {
                            (x, 0.0)
                        }
                    }
                };
                for k in 0..n_out {
                    if !buf[k].is_finite() {
                        return Err(non_finite(&x, dim, k, buf[k]));
                    }
                    buf[k] *= weight;
                }
                stats.push(stratum, n_out, &buf);
            }
            Ok(stats)
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let total = tree_merge(parts);
    Ok(combine_strata(&total, strata, n_out))
}

fn combine_strata(total: &Stats, strata: usize, n_out: usize) -> Vec<Estimate> {
    (0..n_out)
        .map(|k| {
            let mut value = 0.0;
            let mut var = 0.0;
            for s in 0..strata {
                let c = s * n_out + k;
                let n = total.n[c];
                if n == 0.0 {
                    continue;
                }
                value += total.mean[c];
                if n > 1.0 {
                    var += total.m2[c] / (n - 1.0) / n;
                }
            }
            let sf = strata as f64;
            Estimate { value: value / sf, stderr: var.sqrt() / sf }
        })
        .collect()
}

/// Componentwise mean of a vector field over the ball.
pub fn mean_value(v: &dyn VectorField, ball: &Ball, cfg: &QuadratureConfig) -> Result<Vec<Estimate>> {
    let dim = ball.dim;
    let est = integrate_ball_multi(
        |x: &Point, out: &mut [f64]| {
            let u = v.eval(x);
            out.copy_from_slice(&u[..dim]);
        },
        dim,
        ball,
        v.singular_points(),
        cfg,
    )?;
    let inv = 1.0 / ball.volume();
    Ok(est.into_iter().map(|e| e.scale(inv)).collect())
}

/// Mean of a scalar field over the ball.
pub fn mean_value_scalar(s: &dyn ScalarField, ball: &Ball, cfg: &QuadratureConfig) -> Result<Estimate> {
    let e = integrate_ball(|x| s.eval(x), ball, s.singular_points(), cfg)?;
    Ok(e.scale(1.0 / ball.volume()))
}

/// Integral over the sphere of radius `radius` about `center`.
pub fn integrate_sphere<G>(g: G, dim: usize, center: &Point, radius: f64, cfg: &QuadratureConfig) -> Result<Estimate>
where
    G: Fn(&Point) -> f64 + Sync,
{
    check_dim(dim)?;
    cfg.validate()?;
    if !(radius > 0.0) {
        return Err(Error::Precondition("sphere radius must be positive".into()));
    }
    let area = unit_sphere_area(dim) * radius.powi(dim as i32 - 1);
    match cfg.method {
        Method::TensorSpherical => {
            let rule = sphere_rule(dim, cfg.angular_points);
            let mut acc = 0.0;
            for (dir, w) in rule.iter() {
                let x = axpy(center, radius, dir);
                let v = g(&x);
                if !v.is_finite() {
                    return Err(non_finite(&x, dim, 0, v));
                }
                acc += w * v;
            }
            Ok(Estimate::exact(acc * radius.powi(dim as i32 - 1)))
        }
        Method::MonteCarlo => {
            let blocks = cfg.samples.div_ceil(BLOCK);
            let parts: Vec<Result<Stats>> = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(b as u64);
                    let count = BLOCK.min(cfg.samples - b * BLOCK);
                    let mut stats = Stats::new(1);
                    for _ in 0..count {
                        let x = axpy(center, radius, &isotropic(&mut rng, dim));
                        let v = g(&x);
                        if !v.is_finite() {
                            return Err(non_finite(&x, dim, 0, v));
                        }
                        stats.push(0, 1, &[v * area]);
                    }
                    Ok(stats)
                })
                .collect();
            let total = tree_merge(parts.into_iter().collect::<Result<Vec<_>>>()?);
            Ok(combine_strata(&total, 1, 1)[0])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{norm2, BoxDomain};
    use crate::generators::make_rotation;
    use approx::assert_relative_eq;

    const PI3: f64 = PI * PI * PI;

    fn unit(dim: usize) -> Ball {
        Ball::new(dim, ZERO, 1.0).unwrap()
    }

    #[test]
    fn volumes() {
        assert_relative_eq!(unit_ball_volume(6), PI3 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(6), PI3, max_relative = 1e-15);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(5), 8.0 * PI * PI / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn sphere_rule_weights_and_moments() {
        for dim in 3..=6 {
            let rule = sphere_rule(dim, 6);
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert_relative_eq!(total, unit_sphere_area(dim), max_relative = 1e-13);
            for (p, _) in rule.iter() {
                assert_relative_eq!(norm2(p, dim), 1.0, max_relative = 1e-13);
            }
            // <x_i^2> = area / d; <x_1^2 x_2^2> = area / (d (d + 2))
            for i in 0..dim {
                let m: f64 = rule.iter().map(|(p, w)| w * p[i] * p[i]).sum();
                assert_relative_eq!(m, unit_sphere_area(dim) / dim as f64, max_relative = 1e-12);
            }
            let m: f64 = rule.iter().map(|(p, w)| w * p[0] * p[0] * p[dim - 1] * p[dim - 1]).sum();
            assert_relative_eq!(m, unit_sphere_area(dim) / (dim * (dim + 2)) as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn tensor_ball_analytic_values() {
        let cfg = QuadratureConfig::tensor(16, 8);
        let b = unit(6);
        let one = integrate_ball(|_| 1.0, &b, &[], &cfg).unwrap();
        assert_relative_eq!(one.value, PI3 / 6.0, max_relative = 1e-13);
        let x1 = integrate_ball(|x| x[0] * x[0], &b, &[], &cfg).unwrap();
        assert_relative_eq!(x1.value, PI3 / 48.0, max_relative = 1e-13);
        let sing = integrate_ball(|x| 1.0 / norm2(x, 6), &b, &[ZERO], &cfg).unwrap();
        // int_0^1 s^{5-2} ds * area = pi^3 / 4
        assert_relative_eq!(sing.value, PI3 / 4.0, max_relative = 1e-13);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_forms() {
        let b = unit(6);
        let c1 = QuadratureConfig::monte_carlo(200_000, 1);
        let c2 = QuadratureConfig::monte_carlo(200_000, 2);
        let one = integrate_ball(|_| 1.0, &b, &[], &c1).unwrap();
        assert_relative_eq!(one.value, PI3 / 6.0, max_relative = 1e-12);
        let a = integrate_ball(|x| x[0] * x[0], &b, &[], &c1).unwrap();
        let c = integrate_ball(|x| x[0] * x[0], &b, &[], &c2).unwrap();
        let joint = (a.stderr.powi(2) + c.stderr.powi(2)).sqrt();
        assert!((a.value - c.value).abs() <= 4.0 * joint);
        assert!((a.value - PI3 / 48.0).abs() <= 4.0 * a.stderr);
        let s = integrate_ball(|x| 1.0 / norm2(x, 6), &b, &[ZERO], &c1).unwrap();
        assert!((s.value - PI3 / 4.0).abs() <= 4.0 * s.stderr, "{s:?}");
    }

    #[test]
    fn off_centre_singularity_uses_polar_sampling() {
        let mut c = ZERO;
        c[0] = 0.3;
        let b = Ball::new(6, c, 1.0).unwrap();
        // int over B(c,1) of |x|^{-4} is finite; tensor and MC agree
        let f = |x: &Point| norm2(x, 6).powi(-2);
        let mut t = QuadratureConfig::tensor(24, 10);
        t.radial_panels = 4;
        let tv = integrate_ball(f, &b, &[ZERO], &t).unwrap();
        let mv = integrate_ball(f, &b, &[ZERO], &QuadratureConfig::monte_carlo(400_000, 9)).unwrap();
        assert!((tv.value - mv.value).abs() <= 4.0 * mv.stderr + 2e-2 * mv.value, "{tv:?} {mv:?}");
    }

    #[test]
    fn nan_is_reported_with_point() {
        let err = integrate_ball(|_| f64::NAN, &unit(6), &[], &QuadratureConfig::monte_carlo(10, 0)).unwrap_err();
        match err {
            Error::Quadrature { point, .. } => assert_eq!(point.len(), 6),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn stratification_reduces_variance() {
        let b = unit(6);
        let g = |x: &Point| norm2(x, 6).powi(2);
        let mut plain = QuadratureConfig::monte_carlo(100_000, 5);
        plain.stratified = false;
        let strat = QuadratureConfig::monte_carlo(100_000, 5);
        let p = integrate_ball(g, &b, &[], &plain).unwrap();
        let s = integrate_ball(g, &b, &[], &strat).unwrap();
        assert!(s.stderr <= p.stderr, "{s:?} vs {p:?}");
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let b = unit(6);
        let cfg = QuadratureConfig::monte_carlo(50_000, 17);
        let g = |x: &Point| (x[0] + 2.0 * x[3]).exp();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| integrate_ball(g, &b, &[], &cfg).unwrap())
        };
        let a = run(1);
        for t in [2, 4, 16] {
            let o = run(t);
            assert_eq!(a.value.to_bits(), o.value.to_bits());
            assert_eq!(a.stderr.to_bits(), o.stderr.to_bits());
        }
    }

    #[test]
    fn mean_values() {
        let dom = BoxDomain::cube(6, 8.0).unwrap();
        let (u, _) = make_rotation(1.0, dom);
        let mut c = ZERO;
        c[0] = 1.0;
        let b = Ball::new(6, c, 0.5).unwrap();
        let m = mean_value(u.as_ref(), &b, &QuadratureConfig::tensor(8, 6)).unwrap();
        assert!(m[0].value.abs() < 1e-13);
        assert_relative_eq!(m[1].value, -1.0, max_relative = 1e-13);
        let m0 = mean_value(u.as_ref(), &unit(6), &QuadratureConfig::monte_carlo(20_000, 3)).unwrap();
        assert!(m0.iter().all(|e| e.value.abs() <= 4.0 * e.stderr + 1e-15));
    }

    #[test]
    fn sphere_integrals() {
        let t = QuadratureConfig::tensor(1, 8);
        assert_relative_eq!(integrate_sphere(|_| 1.0, 6, &ZERO, 1.0, &t).unwrap().value, PI3, max_relative = 1e-13);
        assert!(integrate_sphere(|x| x[0], 6, &ZERO, 2.0, &t).unwrap().value.abs() < 1e-12);
        assert_relative_eq!(
            integrate_sphere(|x| x[0] * x[0], 6, &ZERO, 1.0, &t).unwrap().value,
            PI3 / 6.0,
            max_relative = 1e-13
        );
        let mc = integrate_sphere(|x| x[0] * x[0], 6, &ZERO, 1.0, &QuadratureConfig::monte_carlo(100_000, 4)).unwrap();
        assert!((mc.value - PI3 / 6.0).abs() <= 4.0 * mc.stderr);
    }
}
