//! Closed-form fixtures: smooth exact solutions and a scale-invariant
//! singular candidate.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    check_dim, dot, manufacture_forcing, norm2, BoxDomain, FieldTriple, Jacobian, Point, ScalarField, ScalarRef,
    VectorField, VectorRef, MAX_DIM, ZERO,
};

pub const DEFAULT_HALF_WIDTH: f64 = 8.0;

// ---------------------------------------------------------------------------
// constant

pub struct ConstantVector {
    value: Point,
    domain: BoxDomain,
}

impl VectorField for ConstantVector {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, _x: &Point) -> Point {
        self.value
    }
    fn grad(&self, _x: &Point) -> Option<Jacobian> {
        Some([[0.0; MAX_DIM]; MAX_DIM])
    }
    fn laplacian(&self, _x: &Point) -> Option<Point> {
        Some(ZERO)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn divergence_free(&self) -> bool {
        true
    }
}

pub struct ConstantScalar {
    value: f64,
    domain: BoxDomain,
}

impl ConstantScalar {
    pub fn new(value: f64, domain: BoxDomain) -> Self {
        Self { value, domain }
    }
}

impl ScalarField for ConstantScalar {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, _x: &Point) -> f64 {
        self.value
    }
    fn grad(&self, _x: &Point) -> Option<Point> {
        Some(ZERO)
    }
    fn laplacian(&self, _x: &Point) -> Option<f64> {
        Some(0.0)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
}

pub fn make_constant(value: Point, domain: BoxDomain) -> VectorRef {
    Arc::new(ConstantVector { value, domain })
}

pub fn constant_triple(value: Point, pressure: f64, domain: BoxDomain) -> Result<FieldTriple> {
    let u = make_constant(value, domain.clone());
    let p: ScalarRef = Arc::new(ConstantScalar { value: pressure, domain });
    let f = manufacture_forcing(&u, Some(&p))?;
    Ok(FieldTriple::new(u, Some(p), Some(f)))
}

// ---------------------------------------------------------------------------
// rigid rotation in the (x1, x2) plane

pub struct Rotation {
    a: f64,
    domain: BoxDomain,
}

impl VectorField for Rotation {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> Point {
        let mut u = ZERO;
        u[0] = self.a * x[1];
        u[1] = -self.a * x[0];
        u
    }
    fn grad(&self, _x: &Point) -> Option<Jacobian> {
        let mut j = [[0.0; MAX_DIM]; MAX_DIM];
        j[0][1] = self.a;
        j[1][0] = -self.a;
        Some(j)
    }
    fn laplacian(&self, _x: &Point) -> Option<Point> {
        Some(ZERO)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn divergence_free(&self) -> bool {
        true
    }
}

/// `a^2 (x1^2 + x2^2) / 2`.
pub struct RotationPressure {
    a: f64,
    domain: BoxDomain,
}

impl ScalarField for RotationPressure {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> f64 {
        0.5 * self.a * self.a * (x[0] * x[0] + x[1] * x[1])
    }
    fn grad(&self, x: &Point) -> Option<Point> {
        let mut g = ZERO;
        g[0] = self.a * self.a * x[0];
        g[1] = self.a * self.a * x[1];
        Some(g)
    }
    fn laplacian(&self, _x: &Point) -> Option<f64> {
        Some(2.0 * self.a * self.a)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
}

pub fn make_rotation(a: f64, domain: BoxDomain) -> (VectorRef, ScalarRef) {
    (
        Arc::new(Rotation { a, domain: domain.clone() }),
        Arc::new(RotationPressure { a, domain }),
    )
}

pub fn rotation_triple(a: f64, domain: BoxDomain) -> Result<FieldTriple> {
    let (u, p) = make_rotation(a, domain);
    let f = manufacture_forcing(&u, Some(&p))?;
    Ok(FieldTriple::new(u, Some(p), Some(f)))
}

// ---------------------------------------------------------------------------
// Taylor-Green cell embedded in the first two coordinates

pub struct TaylorGreen {
    k: f64,
    domain: BoxDomain,
}

impl VectorField for TaylorGreen {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> Point {
        let (s1, c1) = (self.k * x[0]).sin_cos();
        let (s2, c2) = (self.k * x[1]).sin_cos();
        let mut u = ZERO;
        u[0] = s1 * c2;
        u[1] = -c1 * s2;
        u
    }
    fn grad(&self, x: &Point) -> Option<Jacobian> {
        let k = self.k;
        let (s1, c1) = (k * x[0]).sin_cos();
        let (s2, c2) = (k * x[1]).sin_cos();
        let mut j = [[0.0; MAX_DIM]; MAX_DIM];
        j[0][0] = k * c1 * c2;
        j[0][1] = -k * s1 * s2;
        j[1][0] = k * s1 * s2;
        j[1][1] = -k * c1 * c2;
        Some(j)
    }
    fn laplacian(&self, x: &Point) -> Option<Point> {
        let u = self.eval(x);
        Some(crate::field::scaled(&u, -2.0 * self.k * self.k))
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn divergence_free(&self) -> bool {
        true
    }
}

/// `-(cos 2k x1 + cos 2k x2) / 4`.
pub struct TaylorGreenPressure {
    k: f64,
    domain: BoxDomain,
}

impl ScalarField for TaylorGreenPressure {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> f64 {
        -((2.0 * self.k * x[0]).cos() + (2.0 * self.k * x[1]).cos()) / 4.0
    }
    fn grad(&self, x: &Point) -> Option<Point> {
        let mut g = ZERO;
        g[0] = 0.5 * self.k * (2.0 * self.k * x[0]).sin();
        g[1] = 0.5 * self.k * (2.0 * self.k * x[1]).sin();
        Some(g)
    }
    fn laplacian(&self, x: &Point) -> Option<f64> {
        let k2 = self.k * self.k;
        Some(k2 * ((2.0 * self.k * x[0]).cos() + (2.0 * self.k * x[1]).cos()))
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
}

pub fn make_taylor_green6(k: u32, domain: BoxDomain) -> Result<(VectorRef, ScalarRef)> {
    if k < 1 {
        return Err(Error::Precondition("Taylor-Green wavenumber must be >= 1".into()));
    }
    let k = k as f64;
    Ok((
        Arc::new(TaylorGreen { k, domain: domain.clone() }),
        Arc::new(TaylorGreenPressure { k, domain }),
    ))
}

pub fn taylor_green_triple(k: u32, domain: BoxDomain) -> Result<FieldTriple> {
    let (u, p) = make_taylor_green6(k, domain)?;
    let f = manufacture_forcing(&u, Some(&p))?;
    Ok(FieldTriple::new(u, Some(p), Some(f)))
}

// ---------------------------------------------------------------------------
// singular rotation M x / |x|^2

pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];

/// The antisymmetric matrix with `M[0][1] = 1 = -M[1][0]`, scaled.
pub fn plane_rotation_matrix(amplitude: f64) -> Matrix {
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    m[0][1] = amplitude;
    m[1][0] = -amplitude;
    m
}

fn mat_vec(m: &Matrix, x: &Point, dim: usize) -> Point {
    let mut y = ZERO;
    for i in 0..dim {
        y[i] = (0..dim).map(|j| m[i][j] * x[j]).sum();
    }
    y
}

pub struct SingularRotation {
    m: Matrix,
    domain: BoxDomain,
    singular: Vec<Point>,
}

impl VectorField for SingularRotation {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> Point {
        let dim = self.domain.dim;
        let r2 = norm2(x, dim);
        crate::field::scaled(&mat_vec(&self.m, x, dim), 1.0 / r2)
    }
    fn grad(&self, x: &Point) -> Option<Jacobian> {
        let dim = self.domain.dim;
        let r2 = norm2(x, dim);
        let mx = mat_vec(&self.m, x, dim);
        let mut j = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..dim {
            for b in 0..dim {
                j[a][b] = self.m[a][b] / r2 - 2.0 * mx[a] * x[b] / (r2 * r2);
            }
        }
        Some(j)
    }
    fn laplacian(&self, x: &Point) -> Option<Point> {
        let dim = self.domain.dim;
        let r2 = norm2(x, dim);
        let factor = -2.0 * (dim as f64 - 2.0) / (r2 * r2);
        Some(crate::field::scaled(&mat_vec(&self.m, x, dim), factor))
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn singular_points(&self) -> &[Point] {
        &self.singular
    }
    fn divergence_free(&self) -> bool {
        true
    }
}

/// `-|M x|^2 / (2 |x|^4)`, homogeneous of degree -2.
pub struct SingularPressure {
    m: Matrix,
    domain: BoxDomain,
    singular: Vec<Point>,
}

impl ScalarField for SingularPressure {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> f64 {
        let dim = self.domain.dim;
        let r2 = norm2(x, dim);
        -norm2(&mat_vec(&self.m, x, dim), dim) / (2.0 * r2 * r2)
    }
    fn grad(&self, x: &Point) -> Option<Point> {
        let dim = self.domain.dim;
        let r2 = norm2(x, dim);
        let mx = mat_vec(&self.m, x, dim);
        let q = norm2(&mx, dim);
        let mut g = ZERO;
        for k in 0..dim {
            // (M^T M x)_k
            let mtmx: f64 = (0..dim).map(|i| self.m[i][k] * mx[i]).sum();
            g[k] = -mtmx / (r2 * r2) + 2.0 * q * x[k] / (r2 * r2 * r2);
        }
        Some(g)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn singular_points(&self) -> &[Point] {
        &self.singular
    }
}

pub fn validate_antisymmetric(m: &Matrix, dim: usize) -> Result<()> {
    for i in 0..dim {
        for j in 0..dim {
            if m[i][j] != -m[j][i] {
                return Err(Error::Precondition(format!(
                    "matrix is not antisymmetric: M[{}][{}] = {} but M[{}][{}] = {}",
                    i + 1,
                    j + 1,
                    m[i][j],
                    j + 1,
                    i + 1,
                    m[j][i]
                )));
            }
        }
    }
    Ok(())
}

pub fn make_singular_rotation(m: Matrix, domain: BoxDomain) -> Result<VectorRef> {
    validate_antisymmetric(&m, domain.dim)?;
    Ok(Arc::new(SingularRotation { m, domain, singular: vec![ZERO] }))
}

/// Detector fixture: `u = M x / |x|^2`, the degree -2 pressure
/// `-|M x|^2 / (2|x|^4)` and zero forcing. Not a solution of the equations.
pub fn singular_triple(m: Matrix, domain: BoxDomain) -> Result<FieldTriple> {
    let u = make_singular_rotation(m, domain.clone())?;
    let p: ScalarRef = Arc::new(SingularPressure { m, domain: domain.clone(), singular: vec![ZERO] });
    let f = make_constant(ZERO, domain);
    Ok(FieldTriple::new(u, Some(p), Some(f)))
}

// ---------------------------------------------------------------------------
// random divergence-free Fourier sums

#[derive(Debug, Clone)]
struct Mode {
    k: Point,
    cos_coef: Point,
    sin_coef: Point,
}

pub struct RandomDivFree {
    modes: Vec<Mode>,
    domain: BoxDomain,
}

impl VectorField for RandomDivFree {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> Point {
        let dim = self.domain.dim;
        let mut u = ZERO;
        for m in &self.modes {
            let (s, c) = dot(&m.k, x, dim).sin_cos();
            for i in 0..dim {
                u[i] += m.cos_coef[i] * c + m.sin_coef[i] * s;
            }
        }
        u
    }
    fn grad(&self, x: &Point) -> Option<Jacobian> {
        let dim = self.domain.dim;
        let mut j = [[0.0; MAX_DIM]; MAX_DIM];
        for m in &self.modes {
            let (s, c) = dot(&m.k, x, dim).sin_cos();
            for a in 0..dim {
                let amp = -m.cos_coef[a] * s + m.sin_coef[a] * c;
                for b in 0..dim {
                    j[a][b] += amp * m.k[b];
                }
            }
        }
        Some(j)
    }
    fn laplacian(&self, x: &Point) -> Option<Point> {
        let dim = self.domain.dim;
        let mut out = ZERO;
        for m in &self.modes {
            let (s, c) = dot(&m.k, x, dim).sin_cos();
            let k2 = norm2(&m.k, dim);
            for i in 0..dim {
                out[i] -= k2 * (m.cos_coef[i] * c + m.sin_coef[i] * s);
            }
        }
        Some(out)
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
    fn divergence_free(&self) -> bool {
        true
    }
}

struct ScalarMode {
    k: Point,
    cos_coef: f64,
    sin_coef: f64,
}

pub struct RandomPressure {
    modes: Vec<ScalarMode>,
    domain: BoxDomain,
}

impl ScalarField for RandomPressure {
    fn dim(&self) -> usize {
        self.domain.dim
    }
    fn eval(&self, x: &Point) -> f64 {
        let dim = self.domain.dim;
        self.modes
            .iter()
            .map(|m| {
                let (s, c) = dot(&m.k, x, dim).sin_cos();
                m.cos_coef * c + m.sin_coef * s
            })
            .sum()
    }
    fn grad(&self, x: &Point) -> Option<Point> {
        let dim = self.domain.dim;
        let mut g = ZERO;
        for m in &self.modes {
            let (s, c) = dot(&m.k, x, dim).sin_cos();
            let amp = -m.cos_coef * s + m.sin_coef * c;
            for b in 0..dim {
                g[b] += amp * m.k[b];
            }
        }
        Some(g)
    }
    fn laplacian(&self, x: &Point) -> Option<f64> {
        let dim = self.domain.dim;
        Some(
            self.modes
                .iter()
                .map(|m| {
                    let (s, c) = dot(&m.k, x, dim).sin_cos();
                    -norm2(&m.k, dim) * (m.cos_coef * c + m.sin_coef * s)
                })
                .sum(),
        )
    }
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }
}

const MAX_WAVENUMBER: i32 = 2;

fn random_wavevector(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    let comp = Uniform::new_inclusive(-MAX_WAVENUMBER, MAX_WAVENUMBER).expect("valid range");
    loop {
        let mut k = ZERO;
        for v in k.iter_mut().take(dim) {
            *v = comp.sample(rng) as f64;
        }
        if norm2(&k, dim) > 0.0 {
            return k;
        }
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Point {
    let mut v = ZERO;
    for c in v.iter_mut().take(dim) {
        let z: f64 = StandardNormal.sample(rng);
        *c = scale * z;
    }
    v
}

/// Removes the component along `k`.
fn project_transverse(v: &Point, k: &Point, dim: usize) -> Point {
    let coef = dot(v, k, dim) / norm2(k, dim);
    crate::field::axpy(v, -coef, k)
}

/// Truncated Fourier sum whose coefficients are projected orthogonal to
/// their wavevectors; integer wavevectors in `[-2, 2]^dim`.
pub fn make_random_divfree(seed: u64, modes: usize, amplitude: f64, domain: BoxDomain) -> VectorRef {
    let dim = domain.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let scale = if modes > 0 { amplitude / (modes as f64).sqrt() } else { 0.0 };
    let modes = (0..modes)
        .map(|_| {
            let k = random_wavevector(&mut rng, dim);
            let a = gaussian_vector(&mut rng, dim, scale);
            let b = gaussian_vector(&mut rng, dim, scale);
            Mode { cos_coef: project_transverse(&a, &k, dim), sin_coef: project_transverse(&b, &k, dim), k }
        })
        .collect();
    Arc::new(RandomDivFree { modes, domain })
}

/// Random smooth pressure drawn from an independent stream of the same seed.
pub fn make_random_pressure(seed: u64, modes: usize, amplitude: f64, domain: BoxDomain) -> ScalarRef {
    let dim = domain.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let scale = if modes > 0 { amplitude / (modes as f64).sqrt() } else { 0.0 };
    let modes = (0..modes)
        .map(|_| {
            let k = random_wavevector(&mut rng, dim);
            let c: f64 = StandardNormal.sample(&mut rng);
            let s: f64 = StandardNormal.sample(&mut rng);
            ScalarMode { k, cos_coef: scale * c, sin_coef: scale * s }
        })
        .collect();
    Arc::new(RandomPressure { modes, domain })
}

pub fn random_triple(seed: u64, modes: usize, amplitude: f64, domain: BoxDomain) -> Result<FieldTriple> {
    let u = make_random_divfree(seed, modes, amplitude, domain.clone());
    let p = make_random_pressure(seed, modes, amplitude * amplitude, domain);
    let f = manufacture_forcing(&u, Some(&p))?;
    Ok(FieldTriple::new(u, Some(p), Some(f)))
}

// ---------------------------------------------------------------------------
// declarative specs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Constant,
    Rotation,
    TaylorGreen6,
    SingularRotation,
    RandomDivfree,
}

impl FieldKind {
    pub const ALL: [FieldKind; 5] = [
        FieldKind::Constant,
        FieldKind::Rotation,
        FieldKind::TaylorGreen6,
        FieldKind::SingularRotation,
        FieldKind::RandomDivfree,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Constant => "constant",
            FieldKind::Rotation => "rotation",
            FieldKind::TaylorGreen6 => "taylor_green6",
            FieldKind::SingularRotation => "singular_rotation",
            FieldKind::RandomDivfree => "random_divfree",
        }
    }

    /// One-line parameter summary, used by the `gen` command.
    pub fn summary(&self) -> &'static str {
        match self {
            FieldKind::Constant => "u = value (list), p = pressure (default 0), f = 0",
            FieldKind::Rotation => "u = a (x2, -x1, 0, ...), p = a^2 (x1^2 + x2^2) / 2; parameter amplitude (a, default 1)",
            FieldKind::TaylorGreen6 => {
                "u = (sin k x1 cos k x2, -cos k x1 sin k x2, 0, ...), p = -(cos 2k x1 + cos 2k x2) / 4, \
                 f manufactured; parameter wavenumber (k >= 1, default 1)"
            }
            FieldKind::SingularRotation => {
                "u = M x / |x|^2 with antisymmetric M, p = -|Mx|^2 / (2|x|^4), f = 0; parameters matrix \
                 (rows) or amplitude (scales the (1,2)-plane rotation, default 1)"
            }
            FieldKind::RandomDivfree => {
                "Fourier sum with transverse coefficients, random pressure, f manufactured; parameters \
                 seed (default 0), modes (default 8), amplitude (default 1)"
            }
        }
    }
}

fn default_dim() -> usize {
    MAX_DIM
}

fn default_half_width() -> f64 {
    DEFAULT_HALF_WIDTH
}

/// Flat declarative field description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavenumber: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

impl FieldSpec {
    pub fn new(kind: FieldKind) -> Self {
        Self {
            kind,
            dim: MAX_DIM,
            half_width: DEFAULT_HALF_WIDTH,
            amplitude: None,
            wavenumber: None,
            value: None,
            pressure: None,
            matrix: None,
            seed: None,
            modes: None,
        }
    }

    fn reject(&self, present: bool, name: &str) -> Result<()> {
        if present {
            Err(Error::Config(format!("parameter `{name}` does not apply to field kind `{}`", self.kind.name())))
        } else {
            Ok(())
        }
    }

    /// Checks that only parameters meaningful for `kind` are set.
    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim)?;
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::Config("half_width must be positive".into()));
        }
        let k = self.kind;
        self.reject(self.wavenumber.is_some() && k != FieldKind::TaylorGreen6, "wavenumber")?;
        self.reject(self.value.is_some() && k != FieldKind::Constant, "value")?;
        self.reject(self.pressure.is_some() && k != FieldKind::Constant, "pressure")?;
        self.reject(self.matrix.is_some() && k != FieldKind::SingularRotation, "matrix")?;
        self.reject(self.seed.is_some() && k != FieldKind::RandomDivfree, "seed")?;
        self.reject(self.modes.is_some() && k != FieldKind::RandomDivfree, "modes")?;
        self.reject(
            self.amplitude.is_some() && matches!(k, FieldKind::Constant | FieldKind::TaylorGreen6),
            "amplitude",
        )?;
        if let Some(v) = &self.value {
            if v.len() != self.dim {
                return Err(Error::Config(format!("constant value has {} entries, expected {}", v.len(), self.dim)));
            }
        }
        if let Some(m) = &self.matrix {
            if m.len() != self.dim || m.iter().any(|row| row.len() != self.dim) {
                return Err(Error::Config(format!("matrix must be {0}x{0}", self.dim)));
            }
            if self.amplitude.is_some() {
                return Err(Error::Config("give either matrix or amplitude, not both".into()));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::cube(self.dim, self.half_width)
    }

    pub fn build(&self) -> Result<FieldTriple> {
        self.validate()?;
        let domain = self.domain()?;
        match self.kind {
            FieldKind::Constant => {
                let value = self.value.as_deref().map(crate::field::point_from_slice).unwrap_or(ZERO);
                constant_triple(value, self.pressure.unwrap_or(0.0), domain)
            }
            FieldKind::Rotation => rotation_triple(self.amplitude.unwrap_or(1.0), domain),
            FieldKind::TaylorGreen6 => taylor_green_triple(self.wavenumber.unwrap_or(1), domain),
            FieldKind::SingularRotation => {
                let m = match &self.matrix {
                    Some(rows) => {
                        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
                        for (i, row) in rows.iter().enumerate() {
                            for (j, v) in row.iter().enumerate() {
                                m[i][j] = *v;
                            }
                        }
                        m
                    }
                    None => plane_rotation_matrix(self.amplitude.unwrap_or(1.0)),
                };
                singular_triple(m, domain)
            }
            FieldKind::RandomDivfree => random_triple(
                self.seed.unwrap_or(0),
                self.modes.unwrap_or(8),
                self.amplitude.unwrap_or(1.0),
                domain,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{divergence, jacobian, max_probe_divergence, probe_points, rescale, ScaleTransform};

    fn cube() -> BoxDomain {
        BoxDomain::cube(6, DEFAULT_HALF_WIDTH).unwrap()
    }

    fn e(i: usize, s: f64) -> Point {
        crate::field::scaled(&crate::field::unit(i), s)
    }

    #[test]
    fn rotation_values() {
        let (u, _) = make_rotation(0.0, cube());
        assert_eq!(u.eval(&e(0, 1.0)), ZERO);
        let (u, _) = make_rotation(1.0, cube());
        assert_eq!(u.eval(&e(0, 1.0)), e(1, -1.0));
    }

    #[test]
    fn rotation_forcing_cancels() {
        let t = rotation_triple(1.0, cube()).unwrap();
        let f = t.f.unwrap();
        for x in probe_points(&cube(), &[], 200, 3) {
            let fx = f.eval(&x);
            assert!(fx.iter().all(|v| v.abs() < 1e-10), "{fx:?}");
        }
    }

    #[test]
    fn taylor_green_values_and_divergence() {
        let (u, _) = make_taylor_green6(1, cube()).unwrap();
        assert!(u.eval(&ZERO).iter().all(|v| *v == 0.0));
        let v = u.eval(&e(0, std::f64::consts::FRAC_PI_2));
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!(max_probe_divergence(u.as_ref(), 1000, 11).unwrap() <= 1e-12);
        assert!(make_taylor_green6(0, cube()).is_err());
    }

    #[test]
    fn singular_rotation_values() {
        let u = make_singular_rotation(plane_rotation_matrix(1.0), cube()).unwrap();
        assert_eq!(u.eval(&e(0, 1.0)), e(1, -1.0));
        assert_eq!(u.eval(&e(0, 2.0)), e(1, -0.5));
        assert!(divergence(u.as_ref(), &ZERO).is_err());
        let mut bad = plane_rotation_matrix(1.0);
        bad[2][3] = 0.5;
        assert!(make_singular_rotation(bad, cube()).is_err());
    }

    #[test]
    fn singular_rotation_fixed_by_rescaling() {
        let t = singular_triple(plane_rotation_matrix(1.0), cube()).unwrap();
        let pts = probe_points(&BoxDomain::cube(6, 1.0).unwrap(), &[ZERO], 100, 5);
        for lambda in [0.5, 2.0, 5.0] {
            let r = rescale(&t, ScaleTransform::new(lambda).unwrap());
            for x in &pts {
                let (a, b) = (t.u.eval(x), r.u.eval(x));
                for i in 0..6 {
                    assert!((a[i] - b[i]).abs() < 1e-12);
                }
                let (pa, pb) = (t.p.as_ref().unwrap().eval(x), r.p.as_ref().unwrap().eval(x));
                assert!((pa - pb).abs() < 1e-12 * pa.abs().max(1.0));
            }
        }
    }

    #[test]
    fn singular_pressure_gradient_matches_fd() {
        let t = singular_triple(plane_rotation_matrix(0.7), cube()).unwrap();
        let p = t.p.unwrap();
        for x in probe_points(&BoxDomain::cube(6, 1.0).unwrap(), &[ZERO], 50, 8) {
            if norm2(&x, 6) < 0.05 {
                continue;
            }
            let (g, fd) = (p.grad(&x).unwrap(), crate::field::fd_gradient(p.as_ref(), &x));
            let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for i in 0..6 {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * scale.max(1e-3));
            }
        }
    }

    #[test]
    fn random_divfree_properties() {
        let u = make_random_divfree(7, 12, 1.0, cube());
        assert!(max_probe_divergence(u.as_ref(), 1000, 13).unwrap() <= 1e-10);
        let v = make_random_divfree(7, 12, 1.0, cube());
        for x in probe_points(&cube(), &[], 50, 2) {
            assert_eq!(u.eval(&x), v.eval(&x));
        }
        let zero = make_random_divfree(7, 0, 1.0, cube());
        assert_eq!(zero.eval(&e(2, 0.3)), ZERO);
    }

    #[test]
    fn analytic_jacobians_match_fd() {
        let fields: Vec<VectorRef> = vec![
            make_rotation(1.3, cube()).0,
            make_taylor_green6(2, cube()).unwrap().0,
            make_singular_rotation(plane_rotation_matrix(1.0), cube()).unwrap(),
            make_random_divfree(3, 6, 1.0, cube()),
        ];
        for u in fields {
            for x in probe_points(&BoxDomain::cube(6, 2.0).unwrap(), &[ZERO], 30, 9) {
                if norm2(&x, 6) < 0.25 {
                    continue;
                }
                let a = jacobian(u.as_ref(), &x);
                let fd = crate::field::fd_jacobian(u.as_ref(), &x);
                let scale = a.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
                for i in 0..6 {
                    for j in 0..6 {
                        assert!((a[i][j] - fd[i][j]).abs() <= 1e-6 * scale, "{} vs {}", a[i][j], fd[i][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn spec_parsing_rejects_stray_parameters() {
        let mut s = FieldSpec::new(FieldKind::Rotation);
        s.seed = Some(3);
        assert!(s.build().is_err());
        let parsed: std::result::Result<FieldSpec, _> = toml::from_str("kind = \"rotation\"\nbogus = 1\n");
        assert!(parsed.is_err());
        let parsed: FieldSpec = toml::from_str("kind = \"taylor_green6\"\nwavenumber = 2\n").unwrap();
        assert_eq!(parsed.wavenumber, Some(2));
        assert!(parsed.build().is_ok());
    }
}
