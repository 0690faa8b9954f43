//! Ritz projection, Lagrange interpolation and L2 errors against analytic
//! fields.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::assembly::{Assembler, DofSet, Scalar};
use crate::error::{Error, Result};
use crate::fe_space::{eval_basis, FeSpace, Tabulation};
use crate::linear_solver::{SpdSolver, DEFAULT_TOL};
use crate::mesh::Point;

type ValueFn = dyn Fn(Point, f64) -> Complex64 + Send + Sync;
type GradientFn = dyn Fn(Point, f64) -> [Complex64; 2] + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codomain {
    Real,
    Complex,
}

/// A space-time field `v(x, t)` with an optional analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
    codomain: Codomain,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("codomain", &self.codomain)
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn real(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            value: Arc::new(move |p, t| Complex64::new(f(p, t), 0.0)),
            gradient: None,
            codomain: Codomain::Real,
        }
    }

    pub fn complex(f: impl Fn(Point, f64) -> Complex64 + Send + Sync + 'static) -> Self {
        ScalarField {
            value: Arc::new(f),
            gradient: None,
            codomain: Codomain::Complex,
        }
    }

    pub fn with_real_gradient(
        mut self,
        g: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(move |p, t| {
            let [gx, gy] = g(p, t);
            [Complex64::new(gx, 0.0), Complex64::new(gy, 0.0)]
        }));
        self
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(Point, f64) -> [Complex64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn zero() -> Self {
        ScalarField::real(|_, _| 0.0).with_real_gradient(|_, _| [0.0, 0.0])
    }

    pub fn value(&self, p: Point, t: f64) -> Complex64 {
        (self.value)(p, t)
    }

    pub fn gradient(&self, p: Point, t: f64) -> Option<[Complex64; 2]> {
        self.gradient.as_ref().map(|g| g(p, t))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn codomain(&self) -> Codomain {
        self.codomain
    }

    /// Wraps an FE function (coefficients on all DoFs) as a time-independent
    /// field. Points are located by a linear scan, so this is meant for tests
    /// and diagnostics.
    pub fn from_fe_function<T: Scalar>(space: Arc<FeSpace>, full: Vec<T>) -> Self {
        assert_eq!(
            full.len(),
            space.n_dofs(),
            "coefficients must cover all DoFs"
        );
        let codomain = if std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>() {
            Codomain::Real
        } else {
            Codomain::Complex
        };
        let full: Arc<Vec<Complex64>> = Arc::new(full.iter().map(|c| c.to_complex()).collect());
        let (s1, c1) = (space.clone(), full.clone());
        let value = move |p: Point, _t: f64| match s1.mesh().locate(p) {
            Some((tri, l)) => {
                let e = eval_basis(s1.degree(), l);
                s1.cell_dofs(tri)
                    .iter()
                    .zip(&e.values)
                    .map(|(&d, &v)| c1[d] * v)
                    .sum()
            }
            None => Complex64::new(f64::NAN, f64::NAN),
        };
        let gradient = move |p: Point, _t: f64| match space.mesh().locate(p) {
            Some((tri, l)) => {
                let e = eval_basis(space.degree(), l);
                let g = space.geometry(tri);
                let mut out = [Complex64::default(); 2];
                for (&d, rg) in space.cell_dofs(tri).iter().zip(&e.ref_grads) {
                    let pg = g.physical_grad(*rg);
                    out[0] += full[d] * pg[0];
                    out[1] += full[d] * pg[1];
                }
                out
            }
            None => [Complex64::new(f64::NAN, f64::NAN); 2],
        };
        ScalarField {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
            codomain,
        }
    }
}

/// Nodal values `v(x_d, t)` at every DoF, boundary included.
pub fn interpolate<T: Scalar>(space: &FeSpace, v: &ScalarField, t: f64) -> Vec<T> {
    space
        .dof_coords()
        .iter()
        .map(|&p| T::from_complex(v.value(p, t)))
        .collect()
}

/// Ritz projection onto the zero-trace space: `K x = (grad v, grad psi_i)`.
/// Reuses one stiffness factorization for every projection.
pub struct RitzProjector {
    assembler: Assembler,
    stiffness: SpdSolver,
    tol: f64,
}

impl RitzProjector {
    pub fn new(space: Arc<FeSpace>) -> Result<Self> {
        let assembler = Assembler::new(space, DofSet::Interior)?;
        let stiffness = SpdSolver::new(&assembler.stiffness())?;
        Ok(RitzProjector {
            assembler,
            stiffness,
            tol: DEFAULT_TOL,
        })
    }

    pub fn from_parts(assembler: Assembler, stiffness: SpdSolver, tol: f64) -> Self {
        RitzProjector {
            assembler,
            stiffness,
            tol,
        }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        self.assembler.space()
    }

    /// Right-hand side `(grad v, grad psi_i)` of the projection.
    pub fn load(&self, v: &ScalarField, t: f64) -> Result<Vec<Complex64>> {
        let Some(grad) = v.gradient.as_ref() else {
            return Err(Error::InvalidArgument(
                "Ritz projection needs the gradient of the field".into(),
            ));
        };
        self.assembler.gradient_load(|p| grad(p, t))
    }

    pub fn project<T: Scalar>(&self, v: &ScalarField, t: f64) -> Result<Vec<T>> {
        if v.codomain == Codomain::Complex
            && std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>()
        {
            return Err(Error::InvalidArgument(
                "cannot project a complex field onto real coefficients".into(),
            ));
        }
        check_boundary_trace(self.space(), v, t)?;
        let b = self.load(v, t)?;
        if b.iter().all(|z| z.norm_sqr() == 0.0) {
            return Ok(vec![T::default(); b.len()]);
        }
        let (x, _) = self.stiffness.solve_complex_rhs(&b, self.tol)?;
        Ok(x.into_iter().map(T::from_complex).collect())
    }
}

/// Rejects fields that do not vanish on the boundary: the projection is only
/// defined on zero-trace functions.
fn check_boundary_trace(space: &FeSpace, v: &ScalarField, t: f64) -> Result<()> {
    let scale = space
        .dof_coords()
        .iter()
        .map(|&p| v.value(p, t).norm())
        .fold(1.0f64, f64::max);
    for (d, &p) in space.dof_coords().iter().enumerate() {
        if space.boundary_dof_flags()[d] {
            let val = v.value(p, t).norm();
            if !(val <= 1e-10 * scale) {
                return Err(Error::NonVanishingBoundary {
                    x: p[0],
                    y: p[1],
                    value: val,
                });
            }
        }
    }
    Ok(())
}

pub fn ritz_project<T: Scalar>(space: &Arc<FeSpace>, v: &ScalarField, t: f64) -> Result<Vec<T>> {
    RitzProjector::new(space.clone())?.project(v, t)
}

/// L2 errors against analytic fields with the degree-6 rule on every
/// element.
#[derive(Debug, Clone)]
pub struct ErrorNorm {
    space: Arc<FeSpace>,
    tab: Tabulation,
}

impl ErrorNorm {
    pub fn new(space: Arc<FeSpace>) -> Result<Self> {
        let tab = space.tabulate(space.quadrature_degrees().error)?;
        Ok(ErrorNorm { space, tab })
    }

    /// `|| u_h - v(., t) ||_L2` for `u_h` given on all DoFs.
    pub fn l2_error_full<T: Scalar>(&self, full: &[T], v: &ScalarField, t: f64) -> f64 {
        assert_eq!(
            full.len(),
            self.space.n_dofs(),
            "coefficients must cover all DoFs"
        );
        let mut total = 0.0;
        for tri in 0..self.space.n_cells() {
            let g = self.space.geometry(tri);
            let dofs = self.space.cell_dofs(tri);
            let mut local = 0.0;
            for (q, (&w, &l)) in self
                .tab
                .rule
                .weights
                .iter()
                .zip(&self.tab.rule.points)
                .enumerate()
            {
                let uh: Complex64 = dofs
                    .iter()
                    .zip(self.tab.values_at(q))
                    .map(|(&d, &p)| full[d].to_complex() * p)
                    .sum();
                local += w * (uh - v.value(g.map(l), t)).norm_sqr();
            }
            total += g.area * local;
        }
        total.sqrt()
    }

    /// Same as [`ErrorNorm::l2_error_full`] for interior coefficients.
    pub fn l2_error<T: Scalar>(&self, interior: &[T], v: &ScalarField, t: f64) -> f64 {
        self.l2_error_full(&self.space.extend(interior), v, t)
    }
}

pub fn l2_error<T: Scalar>(space: &Arc<FeSpace>, coeffs: &[T], v: &ScalarField, t: f64) -> f64 {
    ErrorNorm::new(space.clone())
        .expect("degree-6 rule exists")
        .l2_error(coeffs, v, t)
}

/// Observed convergence orders between consecutive `(h, error)` levels.
/// Halving sequences give `log2(e_k / e_{k+1})`; otherwise the ratio of logs.
/// A vanishing finer error yields `+inf`.
pub fn observed_order(levels: &[(f64, f64)]) -> Result<Vec<f64>> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument(
            "observed order needs at least two levels".into(),
        ));
    }
    Ok(levels
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            if e1 == 0.0 {
                return f64::INFINITY;
            }
            let ratio = h0 / h1;
            if (ratio - 2.0).abs() <= 1e-12 {
                (e0 / e1).log2()
            } else {
                (e0 / e1).ln() / ratio.ln()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::Degree;
    use crate::mesh::Mesh;
    use std::f64::consts::PI;

    fn space(n: usize, degree: Degree) -> Arc<FeSpace> {
        Arc::new(FeSpace::new(Arc::new(Mesh::structured(n).unwrap()), degree))
    }

    fn sine() -> ScalarField {
        ScalarField::real(|p, _| (PI * p[0]).sin() * (PI * p[1]).sin()).with_real_gradient(
            |p, _| {
                [
                    PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
                    PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
                ]
            },
        )
    }

    #[test]
    fn ritz_is_identity_on_fe_functions() {
        for degree in [Degree::Linear, Degree::Quadratic] {
            let s = space(6, degree);
            let coeffs: Vec<f64> = interpolate(&s, &sine(), 0.0);
            let mut coeffs = coeffs;
            for (d, c) in coeffs.iter_mut().enumerate() {
                if s.boundary_dof_flags()[d] {
                    *c = 0.0;
                }
            }
            let field = ScalarField::from_fe_function(s.clone(), coeffs.clone());
            let projected: Vec<f64> = ritz_project(&s, &field, 0.0).unwrap();
            let expected = s.restrict(&coeffs);
            for (a, b) in projected.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{degree:?}");
            }
        }
    }

    #[test]
    fn ritz_of_zero_and_missing_gradient() {
        let s = space(4, Degree::Linear);
        let z: Vec<f64> = ritz_project(&s, &ScalarField::zero(), 0.0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let no_grad = ScalarField::real(|p, _| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]));
        assert!(matches!(
            ritz_project::<f64>(&s, &no_grad, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn ritz_rejects_nonzero_trace() {
        let s = space(4, Degree::Linear);
        let f = ScalarField::real(|p, _| p[0]).with_real_gradient(|_, _| [1.0, 0.0]);
        assert!(matches!(
            ritz_project::<f64>(&s, &f, 0.0),
            Err(Error::NonVanishingBoundary { .. })
        ));
    }

    #[test]
    fn ritz_converges_at_second_order_for_p1() {
        let levels: Vec<(f64, f64)> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let s = space(n, Degree::Linear);
                let c: Vec<f64> = ritz_project(&s, &sine(), 0.0).unwrap();
                (1.0 / n as f64, l2_error(&s, &c, &sine(), 0.0))
            })
            .collect();
        for order in observed_order(&levels).unwrap() {
            assert!((order - 2.0).abs() < 0.1, "{order}");
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let s = space(5, Degree::Linear);
        let lin = ScalarField::real(|p, _| p[0] + p[1]);
        let c: Vec<f64> = interpolate(&s, &lin, 0.0);
        let e = ErrorNorm::new(s.clone()).unwrap();
        assert!(e.l2_error_full(&c, &lin, 0.0) < 1e-15);

        let sq = ScalarField::real(|p, _| p[0] * p[0]);
        let s2 = space(5, Degree::Quadratic);
        let c2: Vec<f64> = interpolate(&s2, &sq, 0.0);
        assert!(ErrorNorm::new(s2).unwrap().l2_error_full(&c2, &sq, 0.0) < 1e-15);

        let levels: Vec<(f64, f64)> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let s = space(n, Degree::Linear);
                let c: Vec<f64> = interpolate(&s, &sq, 0.0);
                (1.0 / n as f64, l2_error_full(&s, &c, &sq))
            })
            .collect();
        for order in observed_order(&levels).unwrap() {
            assert!((order - 2.0).abs() < 0.05, "{order}");
        }
    }

    fn l2_error_full(s: &Arc<FeSpace>, c: &[f64], v: &ScalarField) -> f64 {
        ErrorNorm::new(s.clone()).unwrap().l2_error_full(c, v, 0.0)
    }

    #[test]
    fn interpolation_is_a_projector() {
        let s = space(4, Degree::Quadratic);
        let c: Vec<f64> = interpolate(&s, &sine(), 0.0);
        let again: Vec<f64> = interpolate(
            &s,
            &ScalarField::from_fe_function(s.clone(), c.clone()),
            0.0,
        );
        for (a, b) in c.iter().zip(&again) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_error_closed_forms() {
        let s = space(8, Degree::Linear);
        let zero = vec![0.0; s.n_interior()];
        assert!((l2_error(&s, &zero, &sine(), 0.0) - 0.5).abs() < 1e-9);

        let c: Vec<f64> = interpolate(&s, &sine(), 0.0);
        let fe = ScalarField::from_fe_function(s.clone(), c.clone());
        assert!(l2_error(&s, &s.restrict(&c), &fe, 0.0) < 1e-13);
    }

    #[test]
    fn l2_error_phase_invariant() {
        let s = space(6, Degree::Quadratic);
        let u = ScalarField::complex(|p, _| {
            Complex64::new(p[0] * (1.0 - p[0]), p[1] * (1.0 - p[1]) * p[0])
        });
        let uh: Vec<Complex64> = s.restrict(&interpolate::<Complex64>(&s, &sine(), 0.0));
        let base = l2_error(&s, &uh, &u, 0.0);
        let rot = Complex64::from_polar(1.0, 0.7);
        let uh_rot: Vec<Complex64> = uh.iter().map(|&z| rot * z).collect();
        let u_rot = ScalarField::complex(move |p, t| rot * u.value(p, t));
        assert!((l2_error(&s, &uh_rot, &u_rot, 0.0) - base).abs() < 1e-14);
    }

    #[test]
    fn orders() {
        let o = observed_order(&[(0.2, 4e-3), (0.1, 1e-3)]).unwrap();
        assert!((o[0] - 2.0).abs() < 1e-14);
        let o = observed_order(&[(0.1, 7.1770e-3), (0.05, 1.9732e-3), (0.025, 5.2178e-4)]).unwrap();
        assert_eq!(
            o.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>(),
            ["1.86", "1.92"]
        );
        let o = observed_order(&[(0.1, 8.5171e-5), (0.05, 1.0736e-5), (0.025, 1.3468e-6)]).unwrap();
        assert_eq!(
            o.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>(),
            ["2.99", "2.99"]
        );
        // non-halving: h ratio 3, errors ratio 9
        let o = observed_order(&[(0.3, 9.0), (0.1, 1.0)]).unwrap();
        assert!((o[0] - 2.0).abs() < 1e-12);
        assert_eq!(
            observed_order(&[(0.1, 1.0), (0.05, 0.0)]).unwrap()[0],
            f64::INFINITY
        );
        assert!(observed_order(&[(0.1, 1.0)]).is_err());
    }
}
