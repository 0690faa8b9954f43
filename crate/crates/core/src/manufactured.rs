//! Closed-form exact solutions and forcings for the benchmark problems on the
//! unit square.
//!
//! Every exact field is a product `g(t) X(x) Y(y)`, so Laplacians follow from
//! the one-dimensional second derivatives of the factors.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::mesh::Point;
use crate::projection::ScalarField;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemName {
    Example1Helmholtz,
    Example2Poisson,
    Example3Conservation,
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemName::Example1Helmholtz => "example1_helmholtz",
            ProblemName::Example2Poisson => "example2_poisson",
            ProblemName::Example3Conservation => "example3_conservation",
        })
    }
}

/// Coupling of the potential equation `alpha phi - beta^2 lap phi = |u|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// `alpha = beta = 1`
    Helmholtz,
    /// `alpha = 0, beta = 1`
    Poisson,
}

impl Model {
    pub fn alpha(self) -> f64 {
        match self {
            Model::Helmholtz => 1.0,
            Model::Poisson => 0.0,
        }
    }

    pub fn beta(self) -> f64 {
        1.0
    }
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "helmholtz" => Ok(Model::Helmholtz),
            "poisson" => Ok(Model::Poisson),
            other => Err(format!(
                "unknown model '{other}' (expected helmholtz or poisson)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: ProblemName,
    pub alpha: f64,
    pub beta: f64,
    pub final_time: f64,
    pub u0: ScalarField,
    pub phi0: ScalarField,
    pub u_exact: Option<ScalarField>,
    pub phi_exact: Option<ScalarField>,
    pub f1: Option<ScalarField>,
    pub f2: Option<ScalarField>,
}

impl ProblemSpec {
    pub fn is_forced(&self) -> bool {
        self.f1.is_some() || self.f2.is_some()
    }
}

/// A factor `X(x)` with its first two derivatives.
#[derive(Clone, Copy)]
struct Factor(fn(f64) -> [f64; 3]);

impl Factor {
    fn eval(self, x: f64) -> [f64; 3] {
        (self.0)(x)
    }
}

/// `X(x) X(y)` as value, gradient and Laplacian.
fn product(f: Factor, p: [f64; 2]) -> (f64, [f64; 2], f64) {
    let [a, da, dda] = f.eval(p[0]);
    let [b, db, ddb] = f.eval(p[1]);
    (a * b, [da * b, a * db], dda * b + a * ddb)
}

/// `sin x sin(pi x)`
fn s_factor(x: f64) -> [f64; 3] {
    let (s, c) = x.sin_cos();
    let (sp, cp) = (PI * x).sin_cos();
    [
        s * sp,
        c * sp + PI * s * cp,
        -(1.0 + PI * PI) * s * sp + 2.0 * PI * c * cp,
    ]
}

/// `e^x (1 - x) sin x`
fn p_factor(x: f64) -> [f64; 3] {
    let e = x.exp();
    let (s, c) = x.sin_cos();
    [
        e * (1.0 - x) * s,
        e * ((1.0 - x) * c - x * s),
        -2.0 * e * (s + x * c),
    ]
}

/// `e^(x/5) x (1 - x)`
fn q_factor(x: f64) -> [f64; 3] {
    let e = (x / 5.0).exp();
    let b = x * (1.0 - x);
    [
        e * b,
        e * (b / 5.0 + 1.0 - 2.0 * x),
        e * (b / 25.0 + 2.0 * (1.0 - 2.0 * x) / 5.0 - 2.0),
    ]
}

/// `sin(x/2) (1 - x)`
fn a_factor(x: f64) -> [f64; 3] {
    let (s, c) = (x / 2.0).sin_cos();
    [
        s * (1.0 - x),
        0.5 * c * (1.0 - x) - s,
        -0.25 * s * (1.0 - x) - c,
    ]
}

/// Builds `u`, `phi`, `f1`, `f2` from separable closed forms.
///
/// `u = gu(t) U(x) U(y)` and `phi = gp(t) P(x) P(y)`, with `gu` returning the
/// time factor and its derivative.
struct Separable {
    u_time: fn(f64) -> [Complex64; 2],
    u_space: Factor,
    phi_time: fn(f64) -> f64,
    phi_space: fn([f64; 2]) -> (f64, [f64; 2], f64),
}

impl Separable {
    fn fields(self, alpha: f64, beta: f64) -> [ScalarField; 4] {
        let Separable {
            u_time,
            u_space,
            phi_time,
            phi_space,
        } = self;
        let u = ScalarField::complex(move |p, t| u_time(t)[0] * product(u_space, p).0)
            .with_gradient(move |p, t| {
                let g = u_time(t)[0];
                let (_, d, _) = product(u_space, p);
                [g * d[0], g * d[1]]
            });
        let phi = ScalarField::real(move |p, t| phi_time(t) * phi_space(p).0).with_real_gradient(
            move |p, t| {
                let g = phi_time(t);
                let (_, d, _) = phi_space(p);
                [g * d[0], g * d[1]]
            },
        );
        let f1 = ScalarField::complex(move |p, t| {
            let [g, dg] = u_time(t);
            let (s, _, lap) = product(u_space, p);
            let phi = phi_time(t) * phi_space(p).0;
            I * dg * s + g * lap - phi * g * s
        });
        let f2 = ScalarField::real(move |p, t| {
            let g = phi_time(t);
            let (v, _, lap) = phi_space(p);
            let u = u_time(t)[0] * product(u_space, p).0;
            alpha * g * v - beta * beta * g * lap - u.norm_sqr()
        });
        [u, phi, f1, f2]
    }
}

fn at_time_zero(f: &ScalarField) -> ScalarField {
    let g = f.clone();
    let value = f.clone();
    match f.codomain() {
        crate::projection::Codomain::Real => ScalarField::real(move |p, _| value.value(p, 0.0).re)
            .with_real_gradient(move |p, _| {
                let d = g.gradient(p, 0.0).expect("exact fields carry gradients");
                [d[0].re, d[1].re]
            }),
        crate::projection::Codomain::Complex => ScalarField::complex(move |p, _| {
            value.value(p, 0.0)
        })
        .with_gradient(move |p, _| g.gradient(p, 0.0).expect("exact fields carry gradients")),
    }
}

fn forced(name: ProblemName, alpha: f64, beta: f64, sep: Separable) -> ProblemSpec {
    let [u, phi, f1, f2] = sep.fields(alpha, beta);
    ProblemSpec {
        name,
        alpha,
        beta,
        final_time: 0.5,
        u0: at_time_zero(&u),
        phi0: at_time_zero(&phi),
        u_exact: Some(u),
        phi_exact: Some(phi),
        f1: Some(f1),
        f2: Some(f2),
    }
}

/// Schrodinger-Helmholtz benchmark with
/// `u = e^((1+i)t) sin x sin y sin(pi x) sin(pi y)` and
/// `phi = e^(t+x+y) (1-x)(1-y) sin x sin y`.
pub fn example1() -> ProblemSpec {
    forced(
        ProblemName::Example1Helmholtz,
        1.0,
        1.0,
        Separable {
            u_time: |t| {
                let g = ((1.0 + I) * t).exp();
                [g, (1.0 + I) * g]
            },
            u_space: Factor(s_factor),
            phi_time: f64::exp,
            phi_space: |p| product(Factor(p_factor), p),
        },
    )
}

fn example2_u_time(t: f64) -> [Complex64; 2] {
    let e = (I * t).exp();
    let a = 1.0 + 5.0 * t.powi(3);
    [2.0 * e * a, 2.0 * e * (I * a + 15.0 * t * t)]
}

fn example2_phi_time(t: f64) -> f64 {
    5.0 * (1.0 + 3.0 * t * t + t.sin())
}

/// Schrodinger-Poisson benchmark with
/// `u = 2 e^(it + (x+y)/5) (1 + 5t^3) x(1-x) y(1-y)` and
/// `phi = 5 (1 + 3t^2 + sin t) sin(x/2) sin(y/2) (1-x)(1-y)`.
///
/// The potential is the symmetric reading of the benchmark; see
/// [`example2_unsymmetric`] for the variant whose potential repeats
/// `sin(x/2)` and does not vanish on `y = 0`.
pub fn example2() -> ProblemSpec {
    forced(
        ProblemName::Example2Poisson,
        0.0,
        1.0,
        Separable {
            u_time: example2_u_time,
            u_space: Factor(q_factor),
            phi_time: example2_phi_time,
            phi_space: |p| product(Factor(a_factor), p),
        },
    )
}

/// `phi = 5 (1 + 3t^2 + sin t) sin(x/2)^2 (1-x)(1-y)`. This field is
/// nonzero on the edge `y = 0`, so it is incompatible with homogeneous
/// Dirichlet conditions and cannot be Ritz-projected.
pub fn example2_unsymmetric() -> ProblemSpec {
    forced(
        ProblemName::Example2Poisson,
        0.0,
        1.0,
        Separable {
            u_time: example2_u_time,
            u_space: Factor(q_factor),
            phi_time: example2_phi_time,
            phi_space: |p| {
                let s = (p[0] / 2.0).sin();
                let c = (p[0] / 2.0).cos();
                let (x, y) = (p[0], p[1]);
                // sin^2(x/2) = (1 - cos x) / 2
                let cx = s * s * (1.0 - x);
                let dcx = s * c * (1.0 - x) - s * s;
                let ddcx = 0.5 * x.cos() * (1.0 - x) - x.sin();
                (cx * (1.0 - y), [dcx * (1.0 - y), -cx], ddcx * (1.0 - y))
            },
        },
    )
}

/// Unforced conservation study started from
/// `u0 = sin x sin y sin(pi x) sin(pi y)` and
/// `phi0 = e^(x+y) (1-x)(1-y) sin x sin y`.
pub fn example3(model: Model) -> ProblemSpec {
    let u0 = ScalarField::complex(|p, _| Complex64::new(product(Factor(s_factor), p).0, 0.0))
        .with_real_gradient(|p, _| product(Factor(s_factor), p).1);
    let phi0 = ScalarField::real(|p, _| product(Factor(p_factor), p).0)
        .with_real_gradient(|p, _| product(Factor(p_factor), p).1);
    ProblemSpec {
        name: ProblemName::Example3Conservation,
        alpha: model.alpha(),
        beta: model.beta(),
        final_time: 100.0,
        u0,
        phi0,
        u_exact: None,
        phi_exact: None,
        f1: None,
        f2: None,
    }
}

/// Step of the finite-difference residual oracle.
const FD_STEP: f64 = 2e-3;

/// Fourth-order central first difference.
fn d1(f: impl Fn(f64) -> Complex64, x: f64) -> Complex64 {
    let h = FD_STEP;
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Fourth-order central second difference.
fn d2(f: impl Fn(f64) -> Complex64, x: f64) -> Complex64 {
    let h = FD_STEP;
    (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h))
        / (12.0 * h * h)
}

fn fd_laplacian(v: &ScalarField, p: Point, t: f64) -> Complex64 {
    d2(|x| v.value([x, p[1]], t), p[0]) + d2(|y| v.value([p[0], y], t), p[1])
}

/// Reproducible uniform samples `(x, y, t)` in `(0,1)^2 x (0, t_max)`.
pub fn sample_points(seed: u64, count: usize, t_max: f64) -> Vec<(Point, f64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            (p, rng.gen_range(0.0..t_max))
        })
        .collect()
}

/// Largest residuals of `i u_t + lap u - phi u = f1` and
/// `alpha phi - beta^2 lap phi - |u|^2 = f2` at the samples, with derivatives
/// of the exact fields taken by finite differences. `None` for problems
/// without an exact solution.
pub fn max_residuals(spec: &ProblemSpec, samples: &[(Point, f64)]) -> Option<(f64, f64)> {
    let (u, phi) = (spec.u_exact.as_ref()?, spec.phi_exact.as_ref()?);
    let zero = ScalarField::real(|_, _| 0.0);
    let f1 = spec.f1.as_ref().unwrap_or(&zero);
    let f2 = spec.f2.as_ref().unwrap_or(&zero);
    let mut worst = (0.0f64, 0.0f64);
    for &(p, t) in samples {
        let ut = d1(|s| u.value(p, s), t);
        let uv = u.value(p, t);
        let pv = phi.value(p, t).re;
        let r1 = I * ut + fd_laplacian(u, p, t) - pv * uv - f1.value(p, t);
        let r2 = spec.alpha * pv
            - spec.beta.powi(2) * fd_laplacian(phi, p, t).re
            - uv.norm_sqr()
            - f2.value(p, t).re;
        worst = (worst.0.max(r1.norm()), worst.1.max(r2.abs()));
    }
    Some(worst)
}
