//! Localized pressure decomposition `p = p~ + h`.
//!
//! `p~` solves `lap p~ = -d_i d_j (u~_i u~_j eta) + div(f eta)` with
//! `u~ = u - [u]`, computed spectrally on a padded periodic box, and
//! `h = p - p~` is harmonic where `eta = 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cutoff::{RadialBump, TestFunction};
use crate::error::{Error, Result};
use crate::gauss::{gauss_gegenbauer, gegenbauer_mass};
use crate::field::{
    axpy, dist, dot, frobenius2, jacobian, norm2, point_from_slice, sub, BoxDomain, FieldTriple, Point, ScalarField,
    ScalarRef, ZERO,
};
use crate::quadrature::{
    integrate_ball, integrate_sphere, mean_value, sphere_rule, unit_sphere_area, Ball, QuadratureConfig,
};

pub const MAX_GRID_N: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PressureConfig {
    pub grid_n: usize,
    /// Box side is `2 pad r`.
    pub pad: f64,
    pub memory_budget_bytes: usize,
    /// Rule used for `[u]` and for ball means of `h`.
    pub mean_quadrature: QuadratureConfig,
}

impl Default for PressureConfig {
    fn default() -> Self {
        Self {
            grid_n: 16,
            pad: 1.25,
            memory_budget_bytes: 1_800_000_000,
            mean_quadrature: QuadratureConfig::tensor(12, 6),
        }
    }
}

impl PressureConfig {
    pub fn with_grid(grid_n: usize) -> Self {
        Self { grid_n, ..Self::default() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let n = self.grid_n;
        if n < 4 || !n.is_power_of_two() || n > MAX_GRID_N {
            return Err(Error::Config(format!("grid_n must be a power of two in 4..={MAX_GRID_N}, got {n}")));
        }
        if !(self.pad >= 1.0 && self.pad.is_finite()) {
            return Err(Error::Config(format!("pad must be >= 1, got {}", self.pad)));
        }
        let bytes = grid_bytes(n, dim);
        if bytes > self.memory_budget_bytes {
            return Err(Error::Resource(format!(
                "a {n}^{dim} grid needs about {} MB, budget is {} MB",
                bytes / 1_000_000,
                self.memory_budget_bytes / 1_000_000
            )));
        }
        self.mean_quadrature.validate()
    }
}

/// Peak bytes held by one solve: two complex work arrays and the real result.
pub fn grid_bytes(n: usize, dim: usize) -> usize {
    let cells = n.pow(dim as u32);
    cells * (2 * std::mem::size_of::<Complex<f64>>() + std::mem::size_of::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub grid_n: usize,
    pub box_side: f64,
    pub spacing: f64,
    pub pad: f64,
    pub support_points: usize,
    pub transforms: usize,
}

/// Grid samples of `p~` with periodic tensor-cubic interpolation.
pub struct SpectralSolution {
    dim: usize,
    n: usize,
    h: f64,
    /// Coordinate of grid index 0 on every axis.
    origin: Point,
    values: Vec<f64>,
    domain: BoxDomain,
}

impl SpectralSolution {
    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Grid nodes inside `ball` with their exact solver values.
    pub fn nodes_in(&self, ball: &Ball) -> Vec<(Point, f64)> {
        let d = self.dim;
        let axis: Vec<Vec<usize>> = (0..d)
            .map(|a| {
                (0..self.n)
                    .filter(|&i| (self.origin[a] + i as f64 * self.h - ball.center[a]).abs() < ball.radius)
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let mut x = ZERO;
            let mut flat = 0;
            for a in 0..d {
                let i = axis[a][idx[a]];
                x[a] = self.origin[a] + i as f64 * self.h;
                flat = flat * self.n + i;
            }
            if ball.contains(&x) {
                out.push((x, self.values[flat]));
            }
            let mut a = d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < axis[a].len() {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Mean over `ball` of the trigonometric interpolant of the grid values,
    /// summed mode by mode with the exact ball average of each plane wave.
    pub fn ball_mean(&self, ball: &Ball) -> f64 {
        let (d, n) = (self.dim, self.n);
        let mut data: Vec<Complex<f64>> = self.values.par_iter().map(|&v| Complex::new(v, 0.0)).collect();
        let forward = FftPlanner::<f64>::new().plan_fft_forward(n);
        fft_nd(&mut data, n, d, &forward);
        let ks = wavenumbers(n, self.h * n as f64);
        // The first coordinate of a uniform point of the unit d-ball has
        // density proportional to (1 - t^2)^((d-1)/2).
        let a = (d as f64 - 1.0) / 2.0;
        let (nodes, weights) = gauss_gegenbauer(64, a);
        let mass = gegenbauer_mass(a);
        let shift = sub(&ball.center, &self.origin);
        for_each_mode(&mut data, n, d, &ks, |_, z, k| match k {
            Some(k) => {
                let s = norm2(k, d).sqrt() * ball.radius;
                let avg: f64 = nodes.iter().zip(&weights).map(|(t, w)| w * (s * t).cos()).sum::<f64>() / mass;
                *z *= Complex::from_polar(avg, dot(k, &shift, d));
            }
            None => *z = Complex::default(),
        });
        // Fixed-size partial sums reduced in order, so any worker count gives
        // the same bits.
        let partial: Vec<f64> = data.par_chunks(n).map(|c| c.iter().map(|z| z.re).sum()).collect();
        partial.iter().sum::<f64>() / data.len() as f64
    }

    /// Weights and wrapped indices of the 4-point Lagrange stencil on one axis.
    #[inline]
    fn stencil(&self, axis: usize, y: f64) -> ([f64; 4], [usize; 4]) {
        let t = (y - self.origin[axis]) / self.h;
        let base = t.floor();
        let f = t - base;
        let w = [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ];
        let n = self.n as i64;
        let b = base as i64 - 1;
        let idx = [0, 1, 2, 3].map(|k| (b + k).rem_euclid(n) as usize);
        (w, idx)
    }
}

impl ScalarField for SpectralSolution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Point) -> f64 {
        let d = self.dim;
        let mut ws = [[0.0; 4]; 6];
        let mut is = [[0usize; 4]; 6];
        for a in 0..d {
            let (w, i) = self.stencil(a, x[a]);
            ws[a] = w;
            is[a] = i;
        }
        // Contract the last axis first, then fold outward.
        let total = 4usize.pow(d as u32);
        let mut acc = 0.0;
        for code in 0..total {
            let mut c = code;
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let k = c % 4;
                c /= 4;
                w *= ws[a][k];
                flat = flat * self.n + is[a][k];
            }
            acc += w * self.values[flat];
        }
        acc
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
}

/// In-place multidimensional FFT over a row-major `n^dim` array.
fn fft_nd(data: &mut [Complex<f64>], n: usize, dim: usize, fft: &Arc<dyn Fft<f64>>) {
    let total = data.len();
    const BATCH: usize = 512;
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            data.par_chunks_mut(n * BATCH).for_each(|chunk| {
                let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
            continue;
        }
        let block = n * stride;
        debug_assert_eq!(total % block, 0);
        data.par_chunks_mut(block).for_each(|blk| {
            let mut lines = vec![Complex::default(); n * BATCH.min(stride)];
            let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
            let mut j0 = 0;
            while j0 < stride {
                let cnt = BATCH.min(stride - j0);
                for l in 0..cnt {
                    for k in 0..n {
                        lines[l * n + k] = blk[j0 + l + k * stride];
                    }
                }
                fft.process_with_scratch(&mut lines[..cnt * n], &mut scratch);
                for l in 0..cnt {
                    for k in 0..n {
                        blk[j0 + l + k * stride] = lines[l * n + k];
                    }
                }
                j0 += cnt;
            }
        });
    }
}

/// Angular wavenumbers of the discrete transform on one axis; `None` marks
/// the Nyquist mode.
fn wavenumbers(n: usize, side: f64) -> Vec<Option<f64>> {
    (0..n)
        .map(|m| {
            if m == n / 2 {
                None
            } else {
                let s = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                Some(2.0 * PI * s / side)
            }
        })
        .collect()
}

/// Calls `g(flat, value, k)` with `k = None` on Nyquist modes, in parallel over
/// chunks of the last axis.
fn for_each_mode<G>(data: &mut [Complex<f64>], n: usize, dim: usize, ks: &[Option<f64>], g: G)
where
    G: Fn(usize, &mut Complex<f64>, Option<&Point>) + Sync,
{
    data.par_chunks_mut(n).enumerate().for_each(|(outer, line)| {
        let mut k = ZERO;
        let mut nyq = false;
        let mut o = outer;
        for a in (0..dim - 1).rev() {
            let m = o % n;
            o /= n;
            match ks[m] {
                Some(v) => k[a] = v,
                None => nyq = true,
            }
        }
        for (m, z) in line.iter_mut().enumerate() {
            match (nyq, ks[m]) {
                (false, Some(v)) => {
                    k[dim - 1] = v;
                    g(outer * n + m, z, Some(&k));
                }
                _ => g(outer * n + m, z, None),
            }
        }
    });
}

struct Source {
    flat: usize,
    /// Upper triangle of `u~ u~ eta`, then `f eta`.
    values: Vec<f64>,
}

/// Solves for `p~` on the padded periodic box about `eta`'s center.
pub fn solve_p_tilde(
    t: &FieldTriple,
    eta: &RadialBump,
    u_mean: &Point,
    cfg: &PressureConfig,
) -> Result<(SpectralSolution, SolverMeta)> {
    let dim = t.dim();
    cfg.validate(dim)?;
    let x0 = eta.center;
    let r = eta.support;
    if !t.u.domain().contains_ball(&x0, r) {
        return Err(Error::Domain(format!("cutoff ball of radius {r} leaves the field domain")));
    }
    let n = cfg.grid_n;
    let side = 2.0 * cfg.pad * r;
    let h = side / n as f64;
    let mut origin = ZERO;
    for a in 0..dim {
        origin[a] = x0[a] - (n as f64 / 2.0 - 0.5) * h;
    }
    let coord = |i: usize| (i as f64 - n as f64 / 2.0 + 0.5) * h;
    let axis_idx: Vec<usize> = (0..n).filter(|&i| coord(i).abs() < r).collect();

    let npairs = dim * (dim + 1) / 2;
    let has_f = t.f.is_some();
    let ncomp = npairs + if has_f { dim } else { 0 };

    // Enumerate support points of eta on the grid.
    let m = axis_idx.len();
    let total_candidates = m.pow(dim as u32);
    let sources: Vec<Source> = (0..total_candidates)
        .into_par_iter()
        .filter_map(|code| {
            let mut c = code;
            let mut x = ZERO;
            let mut flat = 0usize;
            let mut idx = [0usize; 6];
            for a in (0..dim).rev() {
                idx[a] = axis_idx[c % m];
                c /= m;
            }
            for a in 0..dim {
                x[a] = x0[a] + coord(idx[a]);
                flat = flat * n + idx[a];
            }
            let e = eta.value(&x);
            if e == 0.0 {
                return None;
            }
            let w = sub(&t.u.eval(&x), u_mean);
            let mut values = Vec::with_capacity(ncomp);
            for i in 0..dim {
                for j in i..dim {
                    values.push(w[i] * w[j] * e);
                }
            }
            if let Some(f) = &t.f {
                let fx = f.eval(&x);
                for i in 0..dim {
                    values.push(fx[i] * e);
                }
            }
            Some(Source { flat, values })
        })
        .collect();
    for s in &sources {
        if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Quadrature {
                point: vec![],
                message: format!("non-finite source value {v} at grid cell {}", s.flat),
            });
        }
    }

    let cells = n.pow(dim as u32);
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let ks = wavenumbers(n, side);
    let mut acc = vec![Complex::<f64>::default(); cells];
    let mut work = vec![Complex::<f64>::default(); cells];
    let mut transforms = 0;
    for comp in 0..ncomp {
        work.par_iter_mut().for_each(|z| *z = Complex::default());
        for s in &sources {
            work[s.flat] = Complex::new(s.values[comp], 0.0);
        }
        fft_nd(&mut work, n, dim, &forward);
        transforms += 1;
        // Multiplier: k_i k_j (doubled off the diagonal) or i k_i.
        let (ci, cj, is_f) = if comp < npairs {
            let mut c = comp;
            let mut i = 0;
            while c >= dim - i {
                c -= dim - i;
                i += 1;
            }
            (i, i + c, false)
        } else {
            (comp - npairs, 0, true)
        };
        let work_ref = &work;
        for_each_mode(&mut acc, n, dim, &ks, |flat, z, k| {
            if let Some(k) = k {
                let w = work_ref[flat];
                if is_f {
                    *z += Complex::new(0.0, k[ci]) * w;
                } else {
                    let mult = if ci == cj { 1.0 } else { 2.0 } * k[ci] * k[cj];
                    *z += w * mult;
                }
            }
        });
    }
    drop(work);
    for_each_mode(&mut acc, n, dim, &ks, |_, z, k| match k {
        Some(k) => {
            let k2 = norm2(k, dim);
            *z = if k2 > 0.0 { -*z / k2 } else { Complex::default() };
        }
        None => *z = Complex::default(),
    });
    fft_nd(&mut acc, n, dim, &inverse);
    transforms += 1;
    let scale = 1.0 / cells as f64;
    let values: Vec<f64> = acc.par_iter().map(|z| z.re * scale).collect();
    drop(acc);

    let mut lo = ZERO;
    let mut hi = ZERO;
    for a in 0..dim {
        lo[a] = x0[a] - side / 2.0;
        hi[a] = x0[a] + side / 2.0;
    }
    let domain = BoxDomain::new(dim, lo, hi)?;
    let meta = SolverMeta { grid_n: n, box_side: side, spacing: h, pad: cfg.pad, support_points: sources.len(), transforms };
    Ok((SpectralSolution { dim, n, h, origin, values, domain }, meta))
}

/// `h = p - p~`, harmonic on `region`.
pub struct HarmonicRemainder {
    p: Option<ScalarRef>,
    p_tilde: Arc<SpectralSolution>,
    region: Ball,
    singular: Vec<Point>,
}

impl HarmonicRemainder {
    pub fn region(&self) -> &Ball {
        &self.region
    }
}

impl ScalarField for HarmonicRemainder {
    fn dim(&self) -> usize {
        self.p_tilde.dim
    }

    fn eval(&self, x: &Point) -> f64 {
        self.p.as_ref().map(|p| p.eval(x)).unwrap_or(0.0) - self.p_tilde.eval(x)
    }

    fn domain(&self) -> &BoxDomain {
        self.p_tilde.domain()
    }

    fn singular_points(&self) -> &[Point] {
        &self.singular
    }
}

pub fn harmonic_remainder(p: Option<ScalarRef>, p_tilde: Arc<SpectralSolution>, region: Ball) -> HarmonicRemainder {
    let singular = p.as_ref().map(|p| p.singular_points().to_vec()).unwrap_or_default();
    HarmonicRemainder { p, p_tilde, region, singular }
}

pub struct PressureDecomposition {
    pub center: Point,
    pub r: f64,
    pub u_mean: Point,
    pub p_tilde: Arc<SpectralSolution>,
    pub h: HarmonicRemainder,
    pub eta: RadialBump,
    pub meta: SolverMeta,
    mean_cfg: QuadratureConfig,
}

impl PressureDecomposition {
    /// Full decomposition about `B(x0, r)`.
    pub fn new(t: &FieldTriple, x0: &Point, r: f64, cfg: &PressureConfig) -> Result<Self> {
        let dim = t.dim();
        cfg.validate(dim)?;
        let ball = Ball::new(dim, *x0, r)?;
        if !t.u.domain().contains_ball(x0, r) {
            return Err(Error::Domain(format!("ball of radius {r} about {:?} leaves the field domain", &x0[..dim])));
        }
        let mean = mean_value(t.u.as_ref(), &ball, &cfg.mean_quadrature)?;
        let mut u_mean = ZERO;
        for (i, e) in mean.iter().enumerate() {
            u_mean[i] = e.value;
        }
        let eta = RadialBump::eta(dim, *x0, r);
        let (sol, meta) = solve_p_tilde(t, &eta, &u_mean, cfg)?;
        let p_tilde = Arc::new(sol);
        let region = Ball::new(dim, *x0, 2.0 * r / 3.0)?;
        let h = harmonic_remainder(t.p.clone(), p_tilde.clone(), region);
        Ok(Self { center: *x0, r, u_mean, p_tilde, h, eta, meta, mean_cfg: cfg.mean_quadrature.clone() })
    }

    fn check_inside_box(&self, ball: &Ball) -> Result<()> {
        let half = self.meta.box_side / 2.0;
        let dim = ball.dim;
        for a in 0..dim {
            if (ball.center[a] - self.center[a]).abs() + ball.radius > half {
                return Err(Error::Domain(format!(
                    "ball of radius {} about {:?} leaves the decomposition box",
                    ball.radius,
                    &ball.center[..dim]
                )));
            }
        }
        Ok(())
    }

    /// `[h]` over any ball inside the solver box.
    pub fn h_mean_on(&self, ball: &Ball) -> Result<f64> {
        self.check_inside_box(ball)?;
        let p_mean = match &self.h.p {
            Some(p) => integrate_ball(|x| p.eval(x), ball, p.singular_points(), &self.mean_cfg)?.value / ball.volume(),
            None => 0.0,
        };
        Ok(p_mean - self.p_tilde.ball_mean(ball))
    }
}

/// Same-ball `[h]_{x0,r}`: decomposes about `ball` and averages over it.
pub fn same_ball_h_mean(t: &FieldTriple, ball: &Ball, cfg: &PressureConfig) -> Result<f64> {
    if t.p.is_none() {
        return Ok(0.0);
    }
    PressureDecomposition::new(t, &ball.center, ball.radius, cfg)?.h_mean_on(ball)
}

/// Oscillation `max - min` of `g` over deterministic points of `region`.
pub fn oscillation(g: &dyn ScalarField, region: &Ball, count: usize, seed: u64) -> f64 {
    let dim = region.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut taken = 0;
    while taken < count {
        let mut z = ZERO;
        for c in z.iter_mut().take(dim) {
            *c = rng.random_range(-1.0..1.0);
        }
        if norm2(&z, dim) >= 1.0 {
            continue;
        }
        let x = axpy(&region.center, region.radius, &z);
        let v = g.eval(&x);
        lo = lo.min(v);
        hi = hi.max(v);
        taken += 1;
    }
    hi - lo
}

pub const OSC_FLOOR: f64 = 1e-12;

/// `|h(x) - avg_{S(x,s)} h| / max(osc(h), floor)`.
pub fn mean_value_check(
    h: &dyn ScalarField,
    region: &Ball,
    x: &Point,
    s: f64,
    osc: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let dim = region.dim;
    if dist(x, &region.center, dim) + s > region.radius * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("sphere of radius {s} about {:?} leaves the harmonic region", &x[..dim])));
    }
    let avg = integrate_sphere(|y| h.eval(y), dim, x, s, cfg)?.value / (unit_sphere_area(dim) * s.powi(dim as i32 - 1));
    Ok((h.eval(x) - avg).abs() / osc.max(OSC_FLOOR))
}

// ---------------------------------------------------------------------------
// free-space oracle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub radial_panels: usize,
    pub radial_nodes: usize,
    pub angular_points: usize,
    /// Principal-value subtraction radius as a fraction of `r`.
    pub pv_fraction: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { radial_panels: 8, radial_nodes: 8, angular_points: 6, pv_fraction: 0.1 }
    }
}

/// Free-space representation of `p~` at `x` through the Newtonian potential
/// `Phi = 1 / ((d-2) |S^{d-1}| |z|^{d-2})`:
///
/// ```text
/// p~(x) = PV int K_ij(x-y) G_ij(y) dy - G_ii(x)/d - int grad Phi(x-y) . F(y) dy
/// ```
///
/// with `K_ij = (d w_i w_j - delta_ij) / (|S^{d-1}| |z|^d)`, `G = u~ u~ eta`,
/// `F = f eta`, evaluated in polar coordinates about `x`.
pub fn newtonian_potential_oracle(
    t: &FieldTriple,
    eta: &RadialBump,
    u_mean: &Point,
    x: &Point,
    cfg: &OracleConfig,
) -> Result<f64> {
    let dim = t.dim();
    let r = eta.support;
    let dx = dist(x, &eta.center, dim);
    if (dx - r).abs() < 0.05 * r {
        return Err(Error::Precondition(format!("oracle point within 0.05 r of the cutoff boundary (|x - x0| = {dx})")));
    }
    let w_at = |y: &Point| -> Point {
        let e = eta.value(y);
        if e == 0.0 {
            return ZERO;
        }
        crate::field::scaled(&sub(&t.u.eval(y), u_mean), e.sqrt())
    };
    let wx = w_at(x);
    let d = dim as f64;
    let s_max = dx + r;
    let pv = cfg.pv_fraction * r;
    let mut breaks = vec![0.0];
    if pv < s_max {
        breaks.push(pv);
    }
    for k in 1..=cfg.radial_panels {
        let b = pv + (s_max - pv) * k as f64 / cfg.radial_panels as f64;
        if b > *breaks.last().expect("nonempty") {
            breaks.push(b);
        }
    }
    let (gx, gw) = crate::gauss::gauss_legendre(cfg.radial_nodes);
    let mut radial = Vec::new();
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        for (xi, wi) in gx.iter().zip(&gw) {
            radial.push((a + 0.5 * (b - a) * (xi + 1.0), 0.5 * (b - a) * wi));
        }
    }
    let sphere = sphere_rule(dim, cfg.angular_points);
    let omega = unit_sphere_area(dim);
    let parts: Vec<(f64, f64)> = radial
        .par_iter()
        .map(|&(s, ws)| {
            let mut t1 = 0.0;
            let mut t2 = 0.0;
            let sub_x = s < pv;
            for (dir, wd) in sphere.iter() {
                let y = axpy(x, -s, dir);
                if dist(&y, &eta.center, dim) >= r {
                    continue;
                }
                let w = w_at(&y);
                let mut k = d * dot(dir, &w, dim).powi(2) - norm2(&w, dim);
                if sub_x {
                    k -= d * dot(dir, &wx, dim).powi(2) - norm2(&wx, dim);
                }
                t1 += wd * k;
                if let Some(f) = &t.f {
                    t2 += wd * eta.value(&y) * dot(dir, &f.eval(&y), dim);
                }
            }
            (ws * t1 / s, ws * t2)
        })
        .collect();
    let (t1, t2) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let local = norm2(&wx, dim) / d;
    let v = (t1 + t2) / omega - local;
    if !v.is_finite() {
        return Err(Error::Quadrature { point: x[..dim].to_vec(), message: "oracle produced a non-finite value".into() });
    }
    Ok(v)
}

/// Gauge-free relative discrepancy: RMS of `a - b - c` over RMS of
/// `b - mean(b)`, with `c` the mean offset.
pub fn offset_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let c = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y - c).powi(2)).sum();
    let den: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (num / den.max(1e-300)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    pub lhs: f64,
    pub bracket: f64,
    pub ratio: f64,
}

/// `int_B |p~|^{3/2} / [(int_B |grad u|^2)^{3/2} + (int_B |f|^{6/5})^{5/4}]`
/// over the decomposition ball.
pub fn cz_ratio(t: &FieldTriple, dec: &PressureDecomposition, cfg: &QuadratureConfig) -> Result<CzReport> {
    let dim = t.dim();
    let ball = Ball::new(dim, dec.center, dec.r)?;
    let sing = t.u.singular_points().to_vec();
    let est = crate::quadrature::integrate_ball_multi(
        |x: &Point, out: &mut [f64]| {
            out[0] = dec.p_tilde.eval(x).abs().powf(1.5);
            out[1] = frobenius2(&jacobian(t.u.as_ref(), x), dim);
            out[2] = t.f.as_ref().map(|f| norm2(&f.eval(x), dim).powf(0.6)).unwrap_or(0.0);
        },
        3,
        &ball,
        &sing,
        cfg,
    )?;
    let lhs = est[0].value;
    let bracket = est[1].value.powf(1.5) + est[2].value.powf(1.25);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / bracket };
    Ok(CzReport { lhs, bracket, ratio })
}

/// Points of `B(x0, rho)` at which to compare solvers, on a deterministic
/// stream.
pub fn interior_probes(dim: usize, x0: &Point, rho: f64, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = point_from_slice(&z);
        if norm2(&z, dim) < 1.0 {
            out.push(axpy(x0, rho, &z));
        }
    }
    out
}
