//! Velocity, pressure and forcing fields on boxes in R^d (3 <= d <= 6).
//!
//! Points are stored in fixed `[f64; 6]` arrays; coordinates past `dim` are
//! zero and ignored. Fields are immutable once built and shared through
//! `Arc`, so every evaluation path is reentrant.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 6;
pub const MIN_DIM: usize = 3;

pub type Point = [f64; MAX_DIM];
/// `jac[i][j] = d u_i / d x_j`.
pub type Jacobian = [[f64; MAX_DIM]; MAX_DIM];

pub const ZERO: Point = [0.0; MAX_DIM];

/// Points closer than this to a declared singular point count as singular.
const SINGULAR_TOL: f64 = 1e-12;

pub fn point_from_slice(xs: &[f64]) -> Point {
    let mut p = ZERO;
    for (dst, src) in p.iter_mut().zip(xs) {
        *dst = *src;
    }
    p
}

pub fn unit(axis: usize) -> Point {
    let mut p = ZERO;
    p[axis] = 1.0;
    p
}

#[inline]
pub fn dot(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

#[inline]
pub fn norm2(a: &Point, dim: usize) -> f64 {
    dot(a, a, dim)
}

#[inline]
pub fn dist(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>().sqrt()
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    let mut out = ZERO;
    for i in 0..MAX_DIM {
        out[i] = a[i] - b[i];
    }
    out
}

#[inline]
pub fn scaled(a: &Point, s: f64) -> Point {
    let mut out = *a;
    out.iter_mut().for_each(|v| *v *= s);
    out
}

#[inline]
pub fn axpy(a: &Point, s: f64, b: &Point) -> Point {
    let mut out = ZERO;
    for i in 0..MAX_DIM {
        out[i] = a[i] + s * b[i];
    }
    out
}

pub fn frobenius2(m: &Jacobian, dim: usize) -> f64 {
    (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| m[i][j] * m[i][j])
        .sum()
}

/// Axis-aligned box `[lo, hi]` in the first `dim` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl BoxDomain {
    pub fn new(dim: usize, lo: Point, hi: Point) -> Result<Self> {
        check_dim(dim)?;
        for i in 0..dim {
            if !(lo[i] < hi[i]) {
                return Err(Error::Config(format!(
                    "empty domain along axis {}: [{}, {}]",
                    i + 1,
                    lo[i],
                    hi[i]
                )));
            }
        }
        Ok(Self { dim, lo, hi })
    }

    /// The cube `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        check_dim(dim)?;
        let mut lo = ZERO;
        let mut hi = ZERO;
        for i in 0..dim {
            lo[i] = -half_width;
            hi[i] = half_width;
        }
        Self::new(dim, lo, hi)
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn contains_ball(&self, center: &Point, radius: f64) -> bool {
        (0..self.dim).all(|i| center[i] - radius >= self.lo[i] && center[i] + radius <= self.hi[i])
    }

    /// Longest side length.
    pub fn extent(&self) -> f64 {
        (0..self.dim).map(|i| self.hi[i] - self.lo[i]).fold(0.0, f64::max)
    }

    /// Image of the box under `x -> x / lambda`.
    pub fn shrunk(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.lo[i] = self.lo[i] / lambda;
            out.hi[i] = self.hi[i] / lambda;
        }
        out
    }

    /// Finite-difference step used whenever analytic derivatives are missing.
    pub fn fd_step(&self) -> f64 {
        1e-4 * self.extent()
    }
}

pub fn check_dim(dim: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "dimension {dim} outside supported range {MIN_DIM}..={MAX_DIM}"
        )))
    }
}

/// A map R^dim -> R^dim.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Point) -> Point;
    /// Analytic Jacobian, if known.
    fn grad(&self, _x: &Point) -> Option<Jacobian> {
        None
    }
    /// Analytic componentwise Laplacian, if known.
    fn laplacian(&self, _x: &Point) -> Option<Point> {
        None
    }
    fn domain(&self) -> &BoxDomain;
    fn singular_points(&self) -> &[Point] {
        &[]
    }
    /// Whether the field is divergence-free by construction.
    fn divergence_free(&self) -> bool {
        false
    }
}

/// A map R^dim -> R.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Point) -> f64;
    fn grad(&self, _x: &Point) -> Option<Point> {
        None
    }
    fn laplacian(&self, _x: &Point) -> Option<f64> {
        None
    }
    fn domain(&self) -> &BoxDomain;
    fn singular_points(&self) -> &[Point] {
        &[]
    }
}

pub type VectorRef = Arc<dyn VectorField>;
pub type ScalarRef = Arc<dyn ScalarField>;

/// Velocity with optional pressure and forcing.
#[derive(Clone)]
pub struct FieldTriple {
    pub u: VectorRef,
    pub p: Option<ScalarRef>,
    pub f: Option<VectorRef>,
}

impl FieldTriple {
    pub fn new(u: VectorRef, p: Option<ScalarRef>, f: Option<VectorRef>) -> Self {
        Self { u, p, f }
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    /// Same velocity, no pressure or forcing.
    pub fn velocity_only(&self) -> Self {
        Self { u: self.u.clone(), p: None, f: None }
    }
}

// ---------------------------------------------------------------------------
// Finite differences (4th-order central stencils).

#[inline]
fn fd1<T: Fn(&Point) -> f64>(g: T, x: &Point, axis: usize, h: f64) -> f64 {
    let at = |s: f64| {
        let mut y = *x;
        y[axis] += s * h;
        g(&y)
    };
    (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
}

#[inline]
fn fd2<T: Fn(&Point) -> f64>(g: T, x: &Point, axis: usize, h: f64) -> f64 {
    let at = |s: f64| {
        let mut y = *x;
        y[axis] += s * h;
        g(&y)
    };
    (-at(2.0) + 16.0 * at(1.0) - 30.0 * at(0.0) + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * h * h)
}

/// Jacobian by 4th-order central differences.
pub fn fd_jacobian(v: &dyn VectorField, x: &Point) -> Jacobian {
    let dim = v.dim();
    let h = v.domain().fd_step();
    let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
    for j in 0..dim {
        let at = |s: f64| {
            let mut y = *x;
            y[j] += s * h;
            v.eval(&y)
        };
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        for i in 0..dim {
            jac[i][j] = (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h);
        }
    }
    jac
}

/// Componentwise Laplacian by 4th-order central differences.
pub fn fd_vector_laplacian(v: &dyn VectorField, x: &Point) -> Point {
    let dim = v.dim();
    let h = v.domain().fd_step();
    let mut out = ZERO;
    let centre = v.eval(x);
    for j in 0..dim {
        let at = |s: f64| {
            let mut y = *x;
            y[j] += s * h;
            v.eval(&y)
        };
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        for i in 0..dim {
            out[i] += (-p2[i] + 16.0 * p1[i] - 30.0 * centre[i] + 16.0 * m1[i] - m2[i]) / (12.0 * h * h);
        }
    }
    out
}

pub fn fd_gradient(s: &dyn ScalarField, x: &Point) -> Point {
    let h = s.domain().fd_step();
    let mut out = ZERO;
    for (j, o) in out.iter_mut().enumerate().take(s.dim()) {
        *o = fd1(|y| s.eval(y), x, j, h);
    }
    out
}

pub fn fd_scalar_laplacian(s: &dyn ScalarField, x: &Point) -> f64 {
    let h = s.domain().fd_step();
    (0..s.dim()).map(|j| fd2(|y| s.eval(y), x, j, h)).sum()
}

/// Analytic Jacobian when available, finite differences otherwise.
#[inline]
pub fn jacobian(v: &dyn VectorField, x: &Point) -> Jacobian {
    v.grad(x).unwrap_or_else(|| fd_jacobian(v, x))
}

#[inline]
pub fn vector_laplacian(v: &dyn VectorField, x: &Point) -> Point {
    v.laplacian(x).unwrap_or_else(|| fd_vector_laplacian(v, x))
}

#[inline]
pub fn gradient(s: &dyn ScalarField, x: &Point) -> Point {
    s.grad(x).unwrap_or_else(|| fd_gradient(s, x))
}

#[inline]
pub fn scalar_laplacian(s: &dyn ScalarField, x: &Point) -> f64 {
    s.laplacian(x).unwrap_or_else(|| fd_scalar_laplacian(s, x))
}

fn near_singular(points: &[Point], x: &Point, dim: usize, scale: f64) -> Option<Point> {
    points
        .iter()
        .find(|s| dist(s, x, dim) <= SINGULAR_TOL * scale.max(1.0))
        .copied()
}

/// Checks that `x` is a regular point of the domain.
pub fn check_regular_point(domain: &BoxDomain, singular: &[Point], x: &Point) -> Result<()> {
    if !domain.contains(x) {
        return Err(Error::Domain(format!("point {:?} outside the field domain", &x[..domain.dim])));
    }
    if let Some(s) = near_singular(singular, x, domain.dim, domain.extent()) {
        return Err(Error::Domain(format!(
            "evaluation at singular point {:?}",
            &s[..domain.dim]
        )));
    }
    Ok(())
}

/// `sum_i d u_i / d x_i` at a regular point.
pub fn divergence(v: &dyn VectorField, x: &Point) -> Result<f64> {
    check_regular_point(v.domain(), v.singular_points(), x)?;
    let jac = jacobian(v, x);
    Ok((0..v.dim()).map(|i| jac[i][i]).sum())
}

/// Deterministic probe points inside the domain, away from singular points.
pub fn probe_points(domain: &BoxDomain, singular: &[Point], count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = domain.dim;
    let min_gap = 1e-3 * domain.extent();
    let mut out = Vec::with_capacity(count);
    // Shrink toward the centre so finite-difference stencils stay inside.
    let margin = 0.05;
    while out.len() < count {
        let mut x = ZERO;
        for i in 0..dim {
            let t: f64 = rng.random::<f64>();
            let side = domain.hi[i] - domain.lo[i];
            x[i] = domain.lo[i] + side * (margin + (1.0 - 2.0 * margin) * t);
        }
        if singular.iter().all(|s| dist(s, &x, dim) > min_gap) {
            out.push(x);
        }
    }
    out
}

/// Largest |div v| over deterministic probe points.
pub fn max_probe_divergence(v: &dyn VectorField, count: usize, seed: u64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for x in probe_points(v.domain(), v.singular_points(), count, seed) {
        worst = worst.max(divergence(v, &x)?.abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Natural scaling u -> lambda u(lambda x), p -> lambda^2 p(lambda x),
// f -> lambda^3 f(lambda x).

/// The scaling factor `lambda > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleTransform {
    lambda: f64,
}

impl ScaleTransform {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(Error::Precondition(format!("scale factor must be positive, got {lambda}")))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

struct RescaledVector {
    inner: VectorRef,
    lambda: f64,
    weight: f64,
    domain: BoxDomain,
    singular: Vec<Point>,
}

impl RescaledVector {
    fn new(inner: VectorRef, lambda: f64, power: i32) -> Self {
        let domain = inner.domain().shrunk(lambda);
        let singular = inner.singular_points().iter().map(|s| scaled(s, 1.0 / lambda)).collect();
        Self { weight: lambda.powi(power), inner, lambda, domain, singular }
    }
}

impl VectorField for RescaledVector {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &Point) -> Point {
        scaled(&self.inner.eval(&scaled(x, self.lambda)), self.weight)
    }
    fn grad(&self, x: &Point) -> Option<Jacobian> {
        let mut jac = self.inner.grad(&scaled(x, self.lambda))?;
        let w = self.weight * self.lambda;
        jac.iter_mut().flatten().for_each(|v| *v *= w);
        Some(jac)
    }
    fn laplacian(&self, x: &Point) -> Option<Point> {
        let lap = self.inner.laplacian(&scaled(x, self.lambda))?;
        Some(scaled(&lap, self.weight * self.lambda * self.lambda))
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn singular_points(&self) -> &[Point] {
        &self.singular
    }
    fn divergence_free(&self) -> bool {
        self.inner.divergence_free()
    }
}

struct RescaledScalar {
    inner: ScalarRef,
    lambda: f64,
    weight: f64,
    domain: BoxDomain,
    singular: Vec<Point>,
}

impl ScalarField for RescaledScalar {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &Point) -> f64 {
        self.weight * self.inner.eval(&scaled(x, self.lambda))
    }
    fn grad(&self, x: &Point) -> Option<Point> {
        let g = self.inner.grad(&scaled(x, self.lambda))?;
        Some(scaled(&g, self.weight * self.lambda))
    }
    fn laplacian(&self, x: &Point) -> Option<f64> {
        let l = self.inner.laplacian(&scaled(x, self.lambda))?;
        Some(l * self.weight * self.lambda * self.lambda)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn singular_points(&self) -> &[Point] {
        &self.singular
    }
}

/// `lambda^power * v(lambda x)`.
pub fn rescale_vector(v: &VectorRef, t: ScaleTransform, power: i32) -> VectorRef {
    Arc::new(RescaledVector::new(v.clone(), t.lambda, power))
}

/// `lambda^2 * p(lambda x)`.
pub fn rescale_scalar(p: &ScalarRef, t: ScaleTransform) -> ScalarRef {
    let lambda = t.lambda;
    Arc::new(RescaledScalar {
        domain: p.domain().shrunk(lambda),
        singular: p.singular_points().iter().map(|s| scaled(s, 1.0 / lambda)).collect(),
        inner: p.clone(),
        lambda,
        weight: lambda * lambda,
    })
}

/// Applies the natural scaling to a whole triple.
pub fn rescale(triple: &FieldTriple, t: ScaleTransform) -> FieldTriple {
    FieldTriple {
        u: rescale_vector(&triple.u, t, 1),
        p: triple.p.as_ref().map(|p| rescale_scalar(p, t)),
        f: triple.f.as_ref().map(|f| rescale_vector(f, t, 3)),
    }
}

// ---------------------------------------------------------------------------
// Manufactured forcing f = u.grad(u) - lap(u) + grad(p).

struct ManufacturedForcing {
    u: VectorRef,
    p: Option<ScalarRef>,
}

impl VectorField for ManufacturedForcing {
    fn dim(&self) -> usize {
        self.u.dim()
    }
    fn eval(&self, x: &Point) -> Point {
        let dim = self.u.dim();
        let u = self.u.eval(x);
        let jac = jacobian(self.u.as_ref(), x);
        let lap = vector_laplacian(self.u.as_ref(), x);
        let gp = self.p.as_ref().map(|p| gradient(p.as_ref(), x)).unwrap_or(ZERO);
        let mut f = ZERO;
        for i in 0..dim {
            let conv: f64 = (0..dim).map(|j| u[j] * jac[i][j]).sum();
            f[i] = conv - lap[i] + gp[i];
        }
        f
    }
    fn domain(&self) -> &BoxDomain {
        self.u.domain()
    }
    fn singular_points(&self) -> &[Point] {
        self.u.singular_points()
    }
}

/// Threshold on probed |div u| above which forcing is refused.
pub const DIVERGENCE_PRECONDITION: f64 = 1e-6;

/// Forcing that makes `(u, p, f)` an exact steady solution.
pub fn manufacture_forcing(u: &VectorRef, p: Option<&ScalarRef>) -> Result<VectorRef> {
    let worst = max_probe_divergence(u.as_ref(), 64, 0x5eed)?;
    if worst > DIVERGENCE_PRECONDITION {
        return Err(Error::Precondition(format!(
            "velocity is not divergence-free (max probed |div u| = {worst:.3e})"
        )));
    }
    if let Some(p) = p {
        if p.dim() != u.dim() {
            return Err(Error::Precondition("pressure and velocity dimensions differ".into()));
        }
    }
    Ok(Arc::new(ManufacturedForcing { u: u.clone(), p: p.cloned() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{make_random_divfree, make_rotation, make_taylor_green6, random_triple};
    use proptest::prelude::*;

    fn dom() -> BoxDomain {
        BoxDomain::cube(6, 8.0).unwrap()
    }

    /// u = x, divergence 6.
    struct Dilation(BoxDomain);

    impl VectorField for Dilation {
        fn dim(&self) -> usize {
            6
        }
        fn eval(&self, x: &Point) -> Point {
            *x
        }
        fn domain(&self) -> &BoxDomain {
            &self.0
        }
    }

    #[test]
    fn box_checks() {
        assert!(BoxDomain::cube(2, 1.0).is_err());
        assert!(BoxDomain::cube(7, 1.0).is_err());
        let d = BoxDomain::cube(6, 2.0).unwrap();
        assert!(d.contains_ball(&ZERO, 2.0));
        assert!(!d.contains_ball(&unit(3), 1.5));
        assert_eq!(d.shrunk(2.0).hi[0], 1.0);
    }

    #[test]
    fn divergence_examples() {
        let (u, _) = make_rotation(1.0, dom());
        let x = point_from_slice(&[0.3, -0.2, 0.1, 0.0, 0.5, 0.7]);
        assert!(divergence(u.as_ref(), &x).unwrap().abs() < 1e-12);
        let d = Dilation(dom());
        assert!((divergence(&d, &x).unwrap() - 6.0).abs() < 1e-8);
        let mut far = ZERO;
        far[0] = 9.0;
        assert!(matches!(divergence(&d, &far), Err(Error::Domain(_))));
    }

    #[test]
    fn rotation_forcing_without_pressure() {
        let (u, _) = make_rotation(1.0, dom());
        let f = manufacture_forcing(&u, None).unwrap();
        let x = point_from_slice(&[0.4, -1.1, 0.2, 0.3, 0.0, 2.0]);
        let v = f.eval(&x);
        let expect = [-0.4, 1.1, 0.0, 0.0, 0.0, 0.0];
        for i in 0..6 {
            assert!((v[i] - expect[i]).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn forcing_refuses_compressible_velocity() {
        let u: VectorRef = Arc::new(Dilation(dom()));
        assert!(matches!(manufacture_forcing(&u, None), Err(Error::Precondition(_))));
    }

    #[test]
    fn fd_agrees_with_analytic_derivatives() {
        let (u, p) = make_taylor_green6(1, dom()).unwrap();
        let x = point_from_slice(&[0.3, -0.7, 0.2, 0.4, -0.1, 0.9]);
        let a = jacobian(u.as_ref(), &x);
        let b = fd_jacobian(u.as_ref(), &x);
        for i in 0..6 {
            for j in 0..6 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-6);
            }
        }
        let la = vector_laplacian(u.as_ref(), &x);
        let lb = fd_vector_laplacian(u.as_ref(), &x);
        assert!(dist(&la, &lb, 6) < 1e-4);
        assert!(dist(&gradient(p.as_ref(), &x), &fd_gradient(p.as_ref(), &x), 6) < 1e-6);
        assert!((scalar_laplacian(p.as_ref(), &x) - fd_scalar_laplacian(p.as_ref(), &x)).abs() < 1e-4);
    }

    #[test]
    fn scaling_rejects_nonpositive() {
        assert!(ScaleTransform::new(0.0).is_err());
        assert!(ScaleTransform::new(-1.0).is_err());
        assert!(ScaleTransform::new(f64::NAN).is_err());
    }

    #[test]
    fn rescaled_random_field_stays_divergence_free() {
        let u = make_random_divfree(3, 6, 1.0, dom());
        let v = rescale_vector(&u, ScaleTransform::new(2.5).unwrap(), 1);
        assert!(max_probe_divergence(v.as_ref(), 32, 1).unwrap() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rescaling_composes(l1 in 0.2f64..5.0, l2 in 0.2f64..5.0, seed in 0u64..1000, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let t = random_triple(seed, 4, 1.0, dom()).unwrap();
            let s1 = ScaleTransform::new(l1).unwrap();
            let s2 = ScaleTransform::new(l2).unwrap();
            let twice = rescale(&rescale(&t, s1), s2);
            let once = rescale(&t, ScaleTransform::new(l1 * l2).unwrap());
            let x = scaled(&point_from_slice(&[a, b, 0.5 * a, -b, 0.1, 0.2]), 1.0 / (l1 * l2));
            let (u1, u2) = (twice.u.eval(&x), once.u.eval(&x));
            let (p1, p2) = (twice.p.as_ref().unwrap().eval(&x), once.p.as_ref().unwrap().eval(&x));
            let (f1, f2) = (twice.f.as_ref().unwrap().eval(&x), once.f.as_ref().unwrap().eval(&x));
            let tol = |v: f64| 1e-12 * v.abs().max(1.0);
            for i in 0..6 {
                prop_assert!((u1[i] - u2[i]).abs() <= tol(u2[i]));
                prop_assert!((f1[i] - f2[i]).abs() <= 1e-9 * f2[i].abs().max(1.0));
            }
            prop_assert!((p1 - p2).abs() <= tol(p2));
        }
    }
}
