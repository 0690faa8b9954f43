//! Symmetric positive-weight quadrature on triangles.
//!
//! Points are barycentric; weights sum to one, so a rule integrates over a
//! physical triangle `T` as `|T| * sum_q w_q f(x_q)`. The six- and twelve-point
//! rules are Dunavant's, with orbit parameters re-solved from the moment
//! equations to full double precision.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral of `f(xi, eta)` over the reference triangle (0,0), (1,0), (0,1).
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        0.5 * self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * f(l[1], l[2]))
            .sum::<f64>()
    }
}

/// The cheapest rule in the table that is exact for polynomials of total
/// degree `exactness_degree`.
pub fn quadrature(exactness_degree: usize) -> Result<QuadratureRule> {
    let mut rule = Builder::default();
    let degree = match exactness_degree {
        0 | 1 => {
            rule.centroid(1.0);
            1
        }
        2 => {
            rule.orbit21(1.0 / 6.0, 1.0 / 3.0);
            2
        }
        3 | 4 => {
            rule.orbit21(0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_7);
            rule.orbit21(0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_64);
            4
        }
        5 => {
            let s15 = 15f64.sqrt();
            rule.centroid(9.0 / 40.0);
            rule.orbit21((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
            rule.orbit21((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
            5
        }
        6 => {
            rule.orbit21(0.249_286_745_170_910_421_29, 0.116_786_275_726_379_366_03);
            rule.orbit21(0.063_089_014_491_502_228_34, 0.050_844_906_370_206_816_921);
            rule.orbit111(
                0.053_145_049_844_816_947_353,
                0.310_352_451_033_784_405_42,
                0.082_851_075_618_373_575_194,
            );
            6
        }
        d => return Err(Error::UnsupportedQuadrature(d)),
    };
    Ok(QuadratureRule {
        points: rule.points,
        weights: rule.weights,
        exactness_degree: degree,
    })
}

#[derive(Default)]
struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn centroid(&mut self, w: f64) {
        self.points.push([1.0 / 3.0; 3]);
        self.weights.push(w);
    }

    /// Orbit of `(a, a, 1 - 2a)`.
    fn orbit21(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    /// Orbit of `(a, b, 1 - a - b)` under all six permutations.
    fn orbit111(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [
            [a, b, c],
            [a, c, b],
            [b, a, c],
            [b, c, a],
            [c, a, b],
            [c, b, a],
        ] {
            self.points.push(p);
            self.weights.push(w);
        }
    }
}

/// Closed form of the integral of `x^i y^j` over the reference triangle:
/// `i! j! / (i + j + 2)!`.
pub fn reference_monomial_integral(i: u32, j: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(i) * fact(j) / fact(i + j + 2)
}

/// Largest absolute error of `rule` over all monomials of total degree up to
/// `degree`.
pub fn monomial_error(rule: &QuadratureRule, degree: u32) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..=degree {
        for j in 0..=degree - i {
            let q = rule.integrate_reference(|x, y| x.powi(i as i32) * y.powi(j as i32));
            worst = worst.max((q - reference_monomial_integral(i, j)).abs());
        }
    }
    worst
}
