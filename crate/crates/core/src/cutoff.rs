//! Smooth radial cutoffs and the weighted test functions used by the local
//! energy balance.

use crate::field::{dist, dot, norm2, sub, Point, ZERO};
use crate::quadrature::Ball;

/// A smooth function with analytic gradient and Laplacian.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
    fn laplacian(&self, x: &Point) -> f64;
    /// Ball containing the support, if compact.
    fn support(&self) -> Option<Ball>;
}

const GUARD: f64 = 0.005;

/// `exp(-1/s)` and its first two derivatives, zero for `s <= GUARD`.
#[inline]
fn a012(s: f64) -> (f64, f64, f64) {
    if s <= GUARD {
        return (0.0, 0.0, 0.0);
    }
    let a = (-1.0 / s).exp();
    let s2 = s * s;
    (a, a / s2, a * (1.0 / (s2 * s2) - 2.0 / (s2 * s)))
}

/// Smooth step `q(s) = a(s) / (a(s) + a(1 - s))` with derivatives;
/// 0 for `s <= 0`, 1 for `s >= 1`.
pub fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (a, a1, a2) = a012(s);
    let (b, b1m, b2) = a012(1.0 - s);
    let b1 = -b1m;
    let sum = a + b;
    let s1 = a1 + b1;
    let n = a1 * b - a * b1;
    let n1 = a2 * b - a * b2;
    let q = a / sum;
    let q1 = n / (sum * sum);
    let q2 = n1 / (sum * sum) - 2.0 * n * s1 / (sum * sum * sum);
    (q, q1, q2)
}

/// Radial bump equal to 1 on `|x - c| <= plateau` and 0 on `|x - c| >= support`.
#[derive(Debug, Clone)]
pub struct RadialBump {
    pub dim: usize,
    pub center: Point,
    pub plateau: f64,
    pub support: f64,
}

impl RadialBump {
    pub fn new(dim: usize, center: Point, plateau: f64, support: f64) -> Self {
        assert!(plateau >= 0.0 && support > plateau);
        Self { dim, center, plateau, support }
    }

    /// The pressure cutoff: plateau `2r/3`, support `r`.
    pub fn eta(dim: usize, center: Point, r: f64) -> Self {
        Self::new(dim, center, 2.0 * r / 3.0, r)
    }

    /// Plateau `rho/2`, support `rho`.
    pub fn psi1(dim: usize, center: Point, rho: f64) -> Self {
        Self::new(dim, center, rho / 2.0, rho)
    }

    /// Profile and its first two radial derivatives.
    pub fn profile(&self, rho: f64) -> (f64, f64, f64) {
        let w = self.support - self.plateau;
        let (q, q1, q2) = smooth_step((rho - self.plateau) / w);
        (1.0 - q, -q1 / w, -q2 / (w * w))
    }

    pub fn radius_of(&self, x: &Point) -> f64 {
        dist(x, &self.center, self.dim)
    }
}

impl TestFunction for RadialBump {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        self.profile(self.radius_of(x)).0
    }

    fn gradient(&self, x: &Point) -> Point {
        let rho = self.radius_of(x);
        if rho <= self.plateau || rho >= self.support {
            return ZERO;
        }
        let (_, d1, _) = self.profile(rho);
        let z = sub(x, &self.center);
        crate::field::scaled(&z, d1 / rho)
    }

    fn laplacian(&self, x: &Point) -> f64 {
        let rho = self.radius_of(x);
        if rho <= self.plateau || rho >= self.support {
            return 0.0;
        }
        let (_, d1, d2) = self.profile(rho);
        d2 + (self.dim as f64 - 1.0) * d1 / rho
    }

    fn support(&self) -> Option<Ball> {
        Some(Ball { dim: self.dim, center: self.center, radius: self.support })
    }
}

/// `(r^2 + |x - x1|^2)^{-2}`.
#[derive(Debug, Clone)]
pub struct Psi2 {
    pub dim: usize,
    pub center: Point,
    pub r: f64,
}

impl Psi2 {
    pub fn new(dim: usize, center: Point, r: f64) -> Self {
        Self { dim, center, r }
    }
}

/// Closed-form Laplacian of `(r^2 + |z|^2)^{-2}` in R^dim; equals
/// `-24 r^2 (r^2 + |z|^2)^{-4}` when dim = 6.
pub fn psi2_laplacian_dim(dim: usize, z2: f64, r: f64) -> f64 {
    let s = r * r + z2;
    (-4.0 * dim as f64 * s + 24.0 * z2) / (s * s * s * s)
}

impl TestFunction for Psi2 {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Point) -> f64 {
        let s = self.r * self.r + norm2(&sub(x, &self.center), self.dim);
        1.0 / (s * s)
    }

    fn gradient(&self, x: &Point) -> Point {
        let z = sub(x, &self.center);
        let s = self.r * self.r + norm2(&z, self.dim);
        crate::field::scaled(&z, -4.0 / (s * s * s))
    }

    fn laplacian(&self, x: &Point) -> f64 {
        psi2_laplacian_dim(self.dim, norm2(&sub(x, &self.center), self.dim), self.r)
    }

    fn support(&self) -> Option<Ball> {
        None
    }
}

/// Pointwise product of two test functions.
pub struct Product<A, B> {
    pub a: A,
    pub b: B,
}

impl<A: TestFunction, B: TestFunction> TestFunction for Product<A, B> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn value(&self, x: &Point) -> f64 {
        self.a.value(x) * self.b.value(x)
    }

    fn gradient(&self, x: &Point) -> Point {
        let (va, vb) = (self.a.value(x), self.b.value(x));
        let (ga, gb) = (self.a.gradient(x), self.b.gradient(x));
        let mut g = ZERO;
        for i in 0..self.dim() {
            g[i] = va * gb[i] + vb * ga[i];
        }
        g
    }

    fn laplacian(&self, x: &Point) -> f64 {
        let d = self.dim();
        self.a.value(x) * self.b.laplacian(x)
            + self.b.value(x) * self.a.laplacian(x)
            + 2.0 * dot(&self.a.gradient(x), &self.b.gradient(x), d)
    }

    fn support(&self) -> Option<Ball> {
        match (self.a.support(), self.b.support()) {
            (Some(x), Some(y)) => Some(if x.radius <= y.radius { x } else { y }),
            (x, None) => x,
            (None, y) => y,
        }
    }
}

/// Measured constants `N` with `|grad psi| <= N / rho` and
/// `|D^2 psi| <= N / rho^2` (the latter via the radial second derivative and
/// `phi'/rho`, which bound the Hessian eigenvalues).
pub fn bump_derivative_constants(b: &RadialBump, samples: usize) -> (f64, f64) {
    let mut n1 = 0.0_f64;
    let mut n2 = 0.0_f64;
    for i in 0..=samples {
        let rho = b.plateau + (b.support - b.plateau) * i as f64 / samples as f64;
        if rho <= 0.0 {
            continue;
        }
        let (_, d1, d2) = b.profile(rho);
        n1 = n1.max(d1.abs() * b.support);
        n2 = n2.max(d2.abs().max((d1 / rho).abs()) * b.support * b.support);
    }
    (n1, n2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{axpy, unit};
    use proptest::prelude::*;

    fn fd_grad(t: &dyn TestFunction, x: &Point, h: f64) -> Point {
        let mut g = ZERO;
        for i in 0..t.dim() {
            let e = unit(i);
            let f = |s: f64| t.value(&axpy(x, s * h, &e));
            g[i] = (-f(2.0) + 8.0 * f(1.0) - 8.0 * f(-1.0) + f(-2.0)) / (12.0 * h);
        }
        g
    }

    fn fd_lap(t: &dyn TestFunction, x: &Point, h: f64) -> f64 {
        (0..t.dim())
            .map(|i| {
                let e = unit(i);
                let f = |s: f64| t.value(&axpy(x, s * h, &e));
                (-f(2.0) + 16.0 * f(1.0) - 30.0 * f(0.0) + 16.0 * f(-1.0) - f(-2.0)) / (12.0 * h * h)
            })
            .sum()
    }

    #[test]
    fn step_endpoints_and_symmetry() {
        assert_eq!(smooth_step(0.0).0, 0.0);
        assert_eq!(smooth_step(1.0).0, 1.0);
        assert!((smooth_step(0.5).0 - 0.5).abs() < 1e-15);
        for s in [0.1, 0.3, 0.45] {
            let (a, a1, a2) = smooth_step(s);
            let (b, b1, b2) = smooth_step(1.0 - s);
            assert!((a + b - 1.0).abs() < 1e-14);
            assert!((a1 - b1).abs() < 1e-10);
            assert!((a2 + b2).abs() < 1e-8);
        }
    }

    #[test]
    fn eta_plateau_and_support() {
        let eta = RadialBump::eta(6, ZERO, 1.0);
        assert_eq!(eta.value(&unit(0)), 0.0);
        assert_eq!(eta.value(&crate::field::scaled(&unit(2), 2.0 / 3.0)), 1.0);
        assert_eq!(eta.value(&ZERO), 1.0);
        let mid = eta.value(&crate::field::scaled(&unit(1), 5.0 / 6.0));
        assert!((mid - 0.5).abs() < 1e-14);
    }

    #[test]
    fn psi2_closed_form_points() {
        let r = 0.3;
        let p = Psi2::new(6, ZERO, r);
        assert!((p.laplacian(&ZERO) + 24.0 / r.powi(6)).abs() < 1e-9 / r.powi(6));
        let x = crate::field::scaled(&unit(3), r);
        assert!((p.laplacian(&x) + 1.5 / r.powi(6)).abs() < 1e-12 / r.powi(6));
    }

    #[test]
    fn measured_bump_constants_are_moderate() {
        let (n1, n2) = bump_derivative_constants(&RadialBump::psi1(6, ZERO, 1.0), 4000);
        assert!(n1 > 1.0 && n1 < 10.0, "{n1}");
        assert!(n2 > 1.0 && n2 < 200.0, "{n2}");
    }

    proptest! {
        #[test]
        fn bump_bounds(xs in proptest::collection::vec(-1.2f64..1.2, 6)) {
            let x = crate::field::point_from_slice(&xs);
            let b = RadialBump::psi1(6, ZERO, 1.0);
            let v = b.value(&x);
            prop_assert!((0.0..=1.0).contains(&v));
            let rho = norm2(&x, 6).sqrt();
            if rho <= 0.5 { prop_assert_eq!(v, 1.0); }
            if rho >= 1.0 { prop_assert_eq!(v, 0.0); }
        }

        #[test]
        fn bump_derivatives_match_fd(xs in proptest::collection::vec(-0.6f64..0.6, 6)) {
            let x = crate::field::point_from_slice(&xs);
            let b = RadialBump::eta(6, ZERO, 1.0);
            let g = b.gradient(&x);
            let fd = fd_grad(&b, &x, 1e-3);
            for i in 0..6 {
                prop_assert!((g[i] - fd[i]).abs() < 1e-6, "{} vs {}", g[i], fd[i]);
            }
            prop_assert!((b.laplacian(&x) - fd_lap(&b, &x, 1e-3)).abs() < 1e-4);
        }

        #[test]
        fn psi2_laplacian_matches_fd(xs in proptest::collection::vec(-1.0f64..1.0, 6), r in 0.2f64..1.0) {
            let x = crate::field::point_from_slice(&xs);
            let p = Psi2::new(6, ZERO, r);
            let exact = p.laplacian(&x);
            let fd = fd_lap(&p, &x, 1e-3 * r);
            prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs(), "{} vs {}", exact, fd);
            prop_assert!(exact < 0.0);
        }

        #[test]
        fn product_rule(xs in proptest::collection::vec(-0.7f64..0.7, 6)) {
            let x = crate::field::point_from_slice(&xs);
            let t = Product { a: RadialBump::psi1(6, ZERO, 1.0), b: Psi2::new(6, ZERO, 0.3) };
            let fd = fd_lap(&t, &x, 1e-3);
            let ex = t.laplacian(&x);
            prop_assert!((ex - fd).abs() <= 1e-5 * ex.abs().max(1.0), "{} vs {}", ex, fd);
        }
    }
}
