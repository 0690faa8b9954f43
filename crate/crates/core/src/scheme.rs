//! Fully implicit Crank-Nicolson stepping with Picard iteration on the
//! potential.
//!
//! One step from `(U, Phi)` at `t_{n-1}` solves
//!
//! ```text
//! [(i/tau) M - S] U_new = f1(t_{n-1/2}) + [(i/tau) M + S] U,
//! S = (K + W((Phi_l + Phi) / 2)) / 2,
//! (alpha M + beta^2 K) Phi_{l+1} = b(|U_new|^2) + f2(t_n),
//! ```
//!
//! until the M-norm increments of both unknowns drop below the tolerance.

use std::sync::Arc;

use num_complex::Complex64;

use crate::assembly::{Assembler, DofSet, SparseMatrix};
use crate::error::{Error, Result};
use crate::fe_space::FeSpace;
use crate::linear_solver::{ComplexMatrix, ComplexSolver, SolveReport, SpdSolver, DEFAULT_TOL};
use crate::manufactured::ProblemSpec;
use crate::projection::{RitzProjector, ScalarField};

pub const DEFAULT_PICARD_TOL: f64 = 1e-7;
pub const DEFAULT_PICARD_MAX_ITER: usize = 100;

/// How the potential of the initial record is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialPotential {
    /// Ritz projection of the prescribed initial potential.
    #[default]
    Ritz,
    /// Solve the discrete potential equation for the projected initial wave
    /// function, ignoring the prescribed potential. Only this choice makes the
    /// discrete energy identity hold from the first step on.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub final_time: f64,
    pub n_steps: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub solver_tol: f64,
    pub initial_potential: InitialPotential,
}

impl SchemeParams {
    /// Uniform steps reaching `final_time` exactly: `N = ceil(T / tau)` and
    /// `tau = T / N`.
    pub fn new(alpha: f64, beta: f64, final_time: f64, tau_nominal: f64) -> Result<Self> {
        if !(tau_nominal > 0.0 && tau_nominal.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time step must be positive, got {tau_nominal}"
            )));
        }
        if !(final_time >= 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "final time must be non-negative, got {final_time}"
            )));
        }
        let n_steps = (final_time / tau_nominal - 1e-9).ceil().max(0.0) as usize;
        let tau = if n_steps == 0 {
            tau_nominal
        } else {
            final_time / n_steps as f64
        };
        let params = SchemeParams {
            alpha,
            beta,
            tau,
            final_time,
            n_steps,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max_iter: DEFAULT_PICARD_MAX_ITER,
            solver_tol: DEFAULT_TOL,
            initial_potential: InitialPotential::Ritz,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn for_problem(spec: &ProblemSpec, tau_nominal: f64) -> Result<Self> {
        SchemeParams::new(spec.alpha, spec.beta, spec.final_time, tau_nominal)
    }

    pub fn with_picard_tol(mut self, tol: f64) -> Self {
        self.picard_tol = tol;
        self
    }

    pub fn with_initial_potential(mut self, policy: InitialPotential) -> Self {
        self.initial_potential = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return bad("alpha and beta cannot both vanish".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("time step must be positive, got {}", self.tau));
        }
        let span = self.n_steps as f64 * self.tau;
        if (span - self.final_time).abs() > 1e-12 * self.final_time.max(1.0) {
            return bad(format!(
                "{} steps of {} do not reach T = {}",
                self.n_steps, self.tau, self.final_time
            ));
        }
        if !(self.picard_tol > 0.0) {
            return bad(format!(
                "Picard tolerance must be positive, got {}",
                self.picard_tol
            ));
        }
        if self.picard_max_iter == 0 {
            return bad("Picard iteration cap must be at least 1".into());
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return bad(format!(
                "solver tolerance must lie in (0, 1), got {}",
                self.solver_tol
            ));
        }
        Ok(())
    }

    /// The same scheme run backwards in time (`tau -> -tau`).
    pub fn reversed(&self) -> Self {
        SchemeParams {
            tau: -self.tau,
            ..*self
        }
    }

    /// `t_n`, with the last level pinned to `final_time`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.final_time
        } else {
            n as f64 * self.tau
        }
    }
}

/// Interior coefficients of `u_h^n` and `phi_h^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

impl State {
    pub fn zero(n_interior: usize) -> Self {
        State {
            u: vec![Complex64::default(); n_interior],
            phi: vec![0.0; n_interior],
            t: 0.0,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardTrace {
    pub iterations: usize,
    /// `(|U_{l+1} - U_l|, |Phi_{l+1} - Phi_l|)` in the discrete L2 norm.
    pub increments: Vec<(f64, f64)>,
    /// Largest `|S_ij - S_ji|` of the real part of any system matrix.
    pub max_asymmetry: f64,
    pub solves: Vec<SolveReport>,
}

impl PicardTrace {
    pub fn final_increments(&self) -> (f64, f64) {
        self.increments.last().copied().unwrap_or((0.0, 0.0))
    }

    /// Whether the combined increment decreases from the first iteration on.
    pub fn is_contracting(&self) -> bool {
        self.increments
            .windows(2)
            .skip(1)
            .all(|w| w[1].0.max(w[1].1) <= w[0].0.max(w[0].1))
    }

    pub fn worst_residual(&self) -> f64 {
        self.solves
            .iter()
            .map(|r| r.relative_residual)
            .fold(0.0, f64::max)
    }
}

/// Matrices and factorizations shared by every step on one space.
pub struct AssembledOperators {
    assembler: Assembler,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    alpha: f64,
    beta: f64,
    potential: SpdSolver,
    complex: ComplexSolver,
    ritz: RitzProjector,
}

impl AssembledOperators {
    pub fn new(space: Arc<FeSpace>, params: &SchemeParams) -> Result<Self> {
        let assembler = Assembler::new(space, DofSet::Interior)?;
        let mass = assembler.mass();
        let stiffness = assembler.stiffness();
        let b2 = params.beta * params.beta;
        let potential = SpdSolver::new(&mass.lin_comb(params.alpha, &stiffness, b2))?;
        let complex = ComplexSolver::new(assembler.pattern())?;
        let ritz = RitzProjector::from_parts(
            assembler.clone(),
            SpdSolver::new(&stiffness)?,
            params.solver_tol,
        );
        Ok(AssembledOperators {
            assembler,
            mass,
            stiffness,
            alpha: params.alpha,
            beta: params.beta,
            potential,
            complex,
            ritz,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        self.assembler.space()
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn ritz(&self) -> &RitzProjector {
        &self.ritz
    }

    pub fn n_interior(&self) -> usize {
        self.mass.n_rows
    }

    fn check(&self, params: &SchemeParams) -> Result<()> {
        if params.alpha != self.alpha || params.beta != self.beta {
            return Err(Error::InvalidArgument(format!(
                "operators were assembled for alpha = {}, beta = {}, not {}, {}",
                self.alpha, self.beta, params.alpha, params.beta
            )));
        }
        Ok(())
    }

    fn forcing<T: crate::assembly::Scalar>(
        &self,
        f: Option<&ScalarField>,
        t: f64,
    ) -> Result<Option<Vec<T>>> {
        f.map(|f| self.assembler.load(|p| T::from_complex(f.value(p, t))))
            .transpose()
    }

    fn solve_potential(
        &self,
        u: &[Complex64],
        f2_load: Option<&[f64]>,
        tol: f64,
    ) -> Result<(Vec<f64>, SolveReport)> {
        let mut b = self.assembler.nonlinear_load(&self.space().extend(u));
        if let Some(f) = f2_load {
            for (bi, fi) in b.iter_mut().zip(f) {
                *bi += fi;
            }
        }
        self.potential.solve(&b, tol)
    }
}

/// `(alpha M + beta^2 K) Phi = b(|U|^2) + load(f2, t)`.
pub fn potential_solve(
    ops: &AssembledOperators,
    params: &SchemeParams,
    u: &[Complex64],
    f2: Option<&ScalarField>,
    t: f64,
) -> Result<Vec<f64>> {
    ops.check(params)?;
    let load = ops.forcing::<f64>(f2, t)?;
    Ok(ops
        .solve_potential(u, load.as_deref(), params.solver_tol)?
        .0)
}

/// Discrete mass `Re(U* M U)` and energy
/// `Re(U* K U) + alpha/2 Phi' M Phi + beta^2/2 Phi' K Phi`.
pub fn invariants(ops: &AssembledOperators, state: &State) -> InvariantReport {
    let b2 = ops.beta * ops.beta;
    InvariantReport {
        step: state.step,
        t: state.t,
        mass: ops.mass.quadratic_form(&state.u),
        energy: ops.stiffness.quadratic_form(&state.u)
            + 0.5 * ops.alpha * ops.mass.quadratic_form(&state.phi)
            + 0.5 * b2 * ops.stiffness.quadratic_form(&state.phi),
    }
}

/// One Crank-Nicolson step from `prev` to `prev.t + tau`.
pub fn cn_step(
    ops: &AssembledOperators,
    params: &SchemeParams,
    prev: &State,
    f1: Option<&ScalarField>,
    f2: Option<&ScalarField>,
) -> Result<(State, PicardTrace)> {
    ops.check(params)?;
    let n = ops.n_interior();
    if prev.u.len() != n || prev.phi.len() != n {
        return Err(Error::InvalidArgument(format!(
            "state has {} / {} coefficients, space has {n} interior DoFs",
            prev.u.len(),
            prev.phi.len()
        )));
    }
    let tau = params.tau;
    if !(tau != 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid time step {tau}")));
    }
    let tol = params.solver_tol;
    let t_half = prev.t + 0.5 * tau;
    let t_new = prev.t + tau;
    let f1_load = ops.forcing::<Complex64>(f1, t_half)?;
    let f2_load = ops.forcing::<f64>(f2, t_new)?;

    let mut trace = PicardTrace::default();
    let m_u_prev: Vec<Complex64> = ops.mass.mul_vec(&prev.u);
    let phi_prev_full = ops.space().extend(&prev.phi);

    let mut u_iter = prev.u.clone();
    let (mut phi_iter, report) = ops.solve_potential(&u_iter, f2_load.as_deref(), tol)?;
    trace.solves.push(report);

    for _ in 0..params.picard_max_iter {
        let phi_iter_full = ops.space().extend(&phi_iter);
        let weight: Vec<f64> = phi_iter_full
            .iter()
            .zip(&phi_prev_full)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let w = ops.assembler.weighted_mass(&weight)?;
        let s = ops.stiffness.lin_comb(0.5, &w, 0.5);
        let asym = s.max_asymmetry();
        trace.max_asymmetry = trace.max_asymmetry.max(asym);
        let minus_s = SparseMatrix {
            values: s.values.iter().map(|v| -v).collect(),
            ..s.clone()
        };
        let a = ComplexMatrix::new(&minus_s, 1.0 / tau, &ops.mass);
        audit_structure(&a, &ops.mass, tau, asym)?;

        let s_u_prev: Vec<Complex64> = s.mul_vec(&prev.u);
        let rhs: Vec<Complex64> = (0..n)
            .map(|i| {
                let f = f1_load.as_ref().map_or(Complex64::default(), |f| f[i]);
                f + s_u_prev[i] + Complex64::i() * m_u_prev[i] / tau
            })
            .collect();
        let (u_new, report) = ops.complex.solve(&a, &rhs, tol)?;
        trace.solves.push(report);
        let (phi_new, report) = ops.solve_potential(&u_new, f2_load.as_deref(), tol)?;
        trace.solves.push(report);

        let du: Vec<Complex64> = u_new.iter().zip(&u_iter).map(|(a, b)| a - b).collect();
        let dphi: Vec<f64> = phi_new.iter().zip(&phi_iter).map(|(a, b)| a - b).collect();
        let inc = (ops.mass.norm(&du), ops.mass.norm(&dphi));
        trace.increments.push(inc);
        trace.iterations += 1;
        u_iter = u_new;
        phi_iter = phi_new;
        if inc.0 <= params.picard_tol && inc.1 <= params.picard_tol {
            let state = State {
                u: u_iter,
                phi: phi_iter,
                t: t_new,
                step: prev.step + 1,
            };
            return Ok((state, trace));
        }
    }
    let (du, dphi) = trace.final_increments();
    Err(Error::PicardNonConvergence {
        iterations: trace.iterations,
        du,
        dphi,
    })
}

/// The system matrix must be `(i/tau) M + S` with `S` real symmetric.
fn audit_structure(a: &ComplexMatrix, m: &SparseMatrix, tau: f64, asym: f64) -> Result<()> {
    let scale = a.values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if asym > 1e-14 * scale.max(1.0) {
        return Err(Error::Structure(format!(
            "real part asymmetric by {asym:e}"
        )));
    }
    let mismatch = a
        .values
        .iter()
        .zip(&m.values)
        .map(|(z, &mv)| (z.im - mv / tau).abs())
        .fold(0.0, f64::max);
    let mscale = m.values.iter().map(|v| v.abs()).fold(0.0, f64::max) / tau.abs();
    if mismatch > 1e-14 * mscale {
        return Err(Error::Structure(format!(
            "imaginary part differs from M / tau by {mismatch:e}"
        )));
    }
    Ok(())
}

/// The projected initial record.
pub fn initial_state(
    ops: &AssembledOperators,
    spec: &ProblemSpec,
    params: &SchemeParams,
) -> Result<State> {
    ops.check(params)?;
    let u: Vec<Complex64> = ops.ritz.project(&spec.u0, 0.0)?;
    let phi = match params.initial_potential {
        InitialPotential::Ritz => ops.ritz.project(&spec.phi0, 0.0)?,
        InitialPotential::Consistent => potential_solve(ops, params, &u, spec.f2.as_ref(), 0.0)?,
    };
    Ok(State {
        u,
        phi,
        t: 0.0,
        step: 0,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: State,
    pub invariants: Vec<InvariantReport>,
    /// Picard iterations per step.
    pub iterations: Vec<usize>,
}

/// Projects the initial data and takes `params.n_steps` steps. The observer
/// sees every record, starting with the initial one (which has no trace).
pub fn run(
    spec: &ProblemSpec,
    params: &SchemeParams,
    ops: &AssembledOperators,
    mut observer: impl FnMut(&State, &InvariantReport, Option<&PicardTrace>),
) -> Result<RunOutput> {
    params.validate()?;
    let mut state = initial_state(ops, spec, params)?;
    let first = invariants(ops, &state);
    observer(&state, &first, None);
    let mut reports = vec![first];
    let mut iterations = Vec::with_capacity(params.n_steps);
    for n in 1..=params.n_steps {
        let (mut next, trace) = cn_step(ops, params, &state, spec.f1.as_ref(), spec.f2.as_ref())
            .map_err(|e| Error::Step {
                step: n,
                source: Box::new(e),
            })?;
        next.t = params.time(n);
        let report = invariants(ops, &next);
        observer(&next, &report, Some(&trace));
        reports.push(report);
        iterations.push(trace.iterations);
        state = next;
    }
    Ok(RunOutput {
        state,
        invariants: reports,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::Degree;
    use crate::manufactured::{example3, Model};
    use crate::mesh::Mesh;
    use crate::projection::{interpolate, ErrorNorm};
    use std::f64::consts::PI;

    fn space(n: usize, degree: Degree) -> Arc<FeSpace> {
        Arc::new(FeSpace::new(Arc::new(Mesh::structured(n).unwrap()), degree))
    }

    fn sine() -> ScalarField {
        ScalarField::real(|p, _| (PI * p[0]).sin() * (PI * p[1]).sin())
    }

    fn params(model: Model, tau: f64, t: f64) -> SchemeParams {
        SchemeParams::new(model.alpha(), model.beta(), t, tau).unwrap()
    }

    #[test]
    fn step_count_rule() {
        let p = SchemeParams::new(1.0, 1.0, 0.5, 0.1).unwrap();
        assert_eq!(p.n_steps, 5);
        let p = SchemeParams::new(1.0, 1.0, 0.5, 0.05f64.powf(1.5)).unwrap();
        assert_eq!(p.n_steps, 45);
        assert!((p.n_steps as f64 * p.tau - 0.5).abs() < 1e-15);
        assert_eq!(p.time(p.n_steps), 0.5);
        assert_eq!(SchemeParams::new(1.0, 1.0, 0.0, 0.1).unwrap().n_steps, 0);
        assert!(SchemeParams::new(0.0, 0.0, 1.0, 0.1).is_err());
        assert!(SchemeParams::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(SchemeParams::new(1.0, 1.0, 1.0, 0.1)
            .unwrap()
            .with_picard_tol(0.0)
            .validate()
            .is_err());
        assert_eq!(p.reversed().tau, -p.tau);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let s = space(4, Degree::Linear);
        for model in [Model::Helmholtz, Model::Poisson] {
            let p = params(model, 0.1, 1.0);
            let ops = AssembledOperators::new(s.clone(), &p).unwrap();
            let (next, trace) =
                cn_step(&ops, &p, &State::zero(ops.n_interior()), None, None).unwrap();
            assert_eq!(trace.iterations, 1);
            assert!(next.u.iter().all(|z| *z == Complex64::default()));
            assert!(next.phi.iter().all(|&v| v == 0.0));
            let inv = invariants(&ops, &next);
            assert_eq!((inv.mass, inv.energy), (0.0, 0.0));
        }
    }

    #[test]
    fn potential_of_laplacian_eigenfunction() {
        for (model, c) in [
            (Model::Helmholtz, 1.0 + 2.0 * PI * PI),
            (Model::Poisson, 2.0 * PI * PI),
        ] {
            let f2 = ScalarField::real(move |p, _| c * (PI * p[0]).sin() * (PI * p[1]).sin());
            let mut errors = vec![];
            for n in [8, 16] {
                let s = space(n, Degree::Linear);
                let p = params(model, 0.1, 1.0);
                let ops = AssembledOperators::new(s.clone(), &p).unwrap();
                let zero = vec![Complex64::default(); ops.n_interior()];
                let phi = potential_solve(&ops, &p, &zero, Some(&f2), 0.0).unwrap();
                errors.push(ErrorNorm::new(s).unwrap().l2_error(&phi, &sine(), 0.0));
            }
            let order = (errors[0] / errors[1]).log2();
            assert!((order - 2.0).abs() < 0.1, "{model:?}: {order}");
        }
    }

    #[test]
    fn invariants_of_sine_interpolant() {
        let s = space(32, Degree::Quadratic);
        let p = params(Model::Helmholtz, 0.1, 1.0);
        let ops = AssembledOperators::new(s.clone(), &p).unwrap();
        let u: Vec<Complex64> = s.restrict(&interpolate(&s, &sine(), 0.0));
        let state = State {
            phi: vec![0.0; u.len()],
            u,
            t: 0.0,
            step: 0,
        };
        let inv = invariants(&ops, &state);
        assert!((inv.mass - 0.25).abs() < 1e-6, "{}", inv.mass);
        assert!((inv.energy - PI * PI / 2.0).abs() < 1e-4, "{}", inv.energy);

        let rot = Complex64::from_polar(1.0, 1.3);
        let rotated = State {
            u: state.u.iter().map(|&z| rot * z).collect(),
            ..state.clone()
        };
        let inv2 = invariants(&ops, &rotated);
        assert!((inv2.mass - inv.mass).abs() < 1e-13);
        assert!((inv2.energy - inv.energy).abs() < 1e-13);
    }

    fn conservation_setup(model: Model) -> (AssembledOperators, SchemeParams, State) {
        let s = space(8, Degree::Linear);
        let p = params(model, 0.1, 1.0)
            .with_picard_tol(1e-12)
            .with_initial_potential(InitialPotential::Consistent);
        let ops = AssembledOperators::new(s, &p).unwrap();
        let init = initial_state(&ops, &example3(model), &p).unwrap();
        (ops, p, init)
    }

    #[test]
    fn unforced_step_conserves_mass_and_energy() {
        for model in [Model::Helmholtz, Model::Poisson] {
            let (ops, p, init) = conservation_setup(model);
            let before = invariants(&ops, &init);
            let (next, trace) = cn_step(&ops, &p, &init, None, None).unwrap();
            let after = invariants(&ops, &next);
            assert!(trace.iterations > 1);
            assert_eq!(trace.max_asymmetry, 0.0);
            assert!((after.mass - before.mass).abs() <= 10.0 * p.picard_tol * before.mass.sqrt());
            assert!(
                (after.energy - before.energy).abs() <= 1e-10 * before.energy,
                "{model:?}"
            );
        }
    }

    #[test]
    fn reversed_step_returns_to_start() {
        for model in [Model::Helmholtz, Model::Poisson] {
            let (ops, p, init) = conservation_setup(model);
            let (fwd, _) = cn_step(&ops, &p, &init, None, None).unwrap();
            let (back, _) = cn_step(&ops, &p.reversed(), &fwd, None, None).unwrap();
            let du: Vec<Complex64> = back.u.iter().zip(&init.u).map(|(a, b)| a - b).collect();
            let dphi: Vec<f64> = back.phi.iter().zip(&init.phi).map(|(a, b)| a - b).collect();
            assert!(ops.mass().norm(&du) <= 100.0 * p.picard_tol, "{model:?}");
            assert!(ops.mass().norm(&dphi) <= 100.0 * p.picard_tol, "{model:?}");
            assert!(back.t.abs() < 1e-15);
        }
    }

    #[test]
    fn step_commutes_with_global_phase() {
        let (ops, p, init) = conservation_setup(Model::Helmholtz);
        let rot = Complex64::from_polar(1.0, 0.4);
        let rotated = State {
            u: init.u.iter().map(|&z| rot * z).collect(),
            ..init.clone()
        };
        let (a, _) = cn_step(&ops, &p, &init, None, None).unwrap();
        let (b, _) = cn_step(&ops, &p, &rotated, None, None).unwrap();
        let diff: Vec<Complex64> = a.u.iter().zip(&b.u).map(|(x, y)| rot * x - y).collect();
        assert!(ops.mass().norm(&diff) < 1e-13);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let (ops, mut p, init) = conservation_setup(Model::Helmholtz);
        p.picard_max_iter = 1;
        match cn_step(&ops, &p, &init, None, None) {
            Err(Error::PicardNonConvergence { iterations, du, .. }) => {
                assert_eq!(iterations, 1);
                assert!(du > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn run_without_steps_returns_projection() {
        let spec = example3(Model::Poisson);
        let s = space(6, Degree::Linear);
        let p = SchemeParams::new(0.0, 1.0, 0.0, 0.1).unwrap();
        let ops = AssembledOperators::new(s, &p).unwrap();
        let mut seen = 0;
        let out = run(&spec, &p, &ops, |_, _, trace| {
            assert!(trace.is_none());
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 1);
        assert_eq!(out.invariants.len(), 1);
        let u: Vec<Complex64> = ops.ritz().project(&spec.u0, 0.0).unwrap();
        assert_eq!(out.state.u, u);
    }

    #[test]
    fn mismatched_operators_are_rejected() {
        let s = space(4, Degree::Linear);
        let p = params(Model::Helmholtz, 0.1, 1.0);
        let ops = AssembledOperators::new(s, &p).unwrap();
        let q = params(Model::Poisson, 0.1, 1.0);
        assert!(cn_step(&ops, &q, &State::zero(ops.n_interior()), None, None).is_err());
        assert!(cn_step(&ops, &p, &State::zero(3), None, None).is_err());
    }
}
