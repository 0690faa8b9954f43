//! Linear solves for the real SPD systems (potential, Ritz projection) and the
//! complex Crank-Nicolson systems `(i s) M + A`.
//!
//! Direct sparse factorizations come from `faer` and run sequentially so that
//! results do not depend on the machine's core count. Every solve recomputes
//! its relative residual independently and applies a few steps of iterative
//! refinement when the factorization alone misses the tolerance. CG and
//! restarted GMRES stand behind the same interface for systems too large to
//! factor.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Par, Side};
use num_complex::Complex64;

use crate::assembly::{Scalar, SparseMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;

/// Systems larger than this use the iterative solvers under [`Method::Auto`].
pub const DIRECT_LIMIT: usize = 200_000;

const MAX_REFINEMENT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    Direct,
    Cg,
    Gmres,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::Direct => "direct",
            Method::Cg => "cg",
            Method::Gmres => "gmres",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// Krylov iterations, or refinement steps for direct solves.
    pub iterations: usize,
    pub relative_residual: f64,
    pub method: Method,
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn norm2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.abs_sqr()).sum::<f64>().sqrt()
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "solver tolerance {tol} not in (0, 1)"
        )))
    }
}

/// CSC structure of a CSR matrix plus the map from CSR value slots to CSC
/// value slots.
#[derive(Debug, Clone)]
struct ColumnMajor {
    symbolic: SymbolicSparseColMat<usize>,
    csr_to_csc: Vec<usize>,
}

impl ColumnMajor {
    fn new(a: &SparseMatrix) -> Self {
        let mut col_ptr = vec![0usize; a.n_cols + 1];
        for &j in &a.col_idx {
            col_ptr[j + 1] += 1;
        }
        for j in 0..a.n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; a.nnz()];
        let mut csr_to_csc = vec![0usize; a.nnz()];
        for i in 0..a.n_rows {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                row_idx[next[j]] = i;
                csr_to_csc[k] = next[j];
                next[j] += 1;
            }
        }
        let symbolic =
            SymbolicSparseColMat::new_checked(a.n_rows, a.n_cols, col_ptr, None, row_idx);
        ColumnMajor {
            symbolic,
            csr_to_csc,
        }
    }

    fn matrix<T: Copy + Default>(&self, csr_values: &[T]) -> SparseColMat<usize, T> {
        let mut values = vec![T::default(); csr_values.len()];
        for (k, &v) in csr_values.iter().enumerate() {
            values[self.csr_to_csc[k]] = v;
        }
        SparseColMat::new(self.symbolic.clone(), values)
    }
}

fn solver_error(method: Method, message: impl std::fmt::Display, residual: f64) -> Error {
    Error::Solver {
        method: method.name(),
        message: message.to_string(),
        residual,
    }
}

/// Factorized SPD matrix, reusable across right-hand sides.
pub struct SpdSolver {
    matrix: SparseMatrix,
    factor: Llt<usize, f64>,
}

impl SpdSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        faer::set_global_parallelism(Par::Seq);
        if a.n_rows != a.n_cols {
            return Err(Error::InvalidArgument(
                "SPD solve needs a square matrix".into(),
            ));
        }
        let cm = ColumnMajor::new(a);
        let mat = cm.matrix(&a.values);
        let symbolic = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
            .map_err(|e| solver_error(Method::Direct, format!("{e:?}"), f64::INFINITY))?;
        let factor =
            Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower).map_err(|e| {
                solver_error(
                    Method::Direct,
                    format!("Cholesky failed: {e:?}"),
                    f64::INFINITY,
                )
            })?;
        Ok(SpdSolver {
            matrix: a.clone(),
            factor,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i]);
        self.factor.solve_in_place(rhs.as_mut());
        (0..r.len()).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve(&self, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
        check_tol(tol)?;
        assert_eq!(b.len(), self.matrix.n_rows, "right-hand side length");
        refine(
            b,
            tol,
            |r| self.apply_inverse(r),
            |x| self.matrix.mul_vec(x),
        )
    }

    /// Solves real and imaginary parts of a complex right-hand side.
    pub fn solve_complex_rhs(
        &self,
        b: &[Complex64],
        tol: f64,
    ) -> Result<(Vec<Complex64>, SolveReport)> {
        check_tol(tol)?;
        let apply = |r: &[Complex64]| {
            let re: Vec<f64> = r.iter().map(|z| z.re).collect();
            let im: Vec<f64> = r.iter().map(|z| z.im).collect();
            let (xr, xi) = (self.apply_inverse(&re), self.apply_inverse(&im));
            xr.into_iter()
                .zip(xi)
                .map(|(a, b)| Complex64::new(a, b))
                .collect()
        };
        refine(b, tol, apply, |x| self.matrix.mul_vec(x))
    }
}

/// Direct solve plus iterative refinement until the recomputed relative
/// residual meets `tol`.
fn refine<T: Scalar>(
    b: &[T],
    tol: f64,
    inverse: impl Fn(&[T]) -> Vec<T>,
    apply: impl Fn(&[T]) -> Vec<T>,
) -> Result<(Vec<T>, SolveReport)> {
    let bnorm = norm2(b);
    let mut x = inverse(b);
    let residual = |x: &[T]| -> (Vec<T>, f64) {
        let ax = apply(x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let rel = relative(norm2(&r), bnorm);
        (r, rel)
    };
    let (mut r, mut rel) = residual(&x);
    let mut best = rel;
    let mut steps = 0;
    while !(rel <= tol) && steps < MAX_REFINEMENT {
        let dx = inverse(&r);
        let candidate: Vec<T> = x.iter().zip(&dx).map(|(&a, &d)| a + d).collect();
        let (r2, rel2) = residual(&candidate);
        steps += 1;
        if !(rel2 < rel) {
            break;
        }
        x = candidate;
        r = r2;
        rel = rel2;
        best = best.min(rel);
    }
    if rel <= tol {
        Ok((
            x,
            SolveReport {
                iterations: steps,
                relative_residual: rel,
                method: Method::Direct,
            },
        ))
    } else {
        Err(solver_error(
            Method::Direct,
            "residual above tolerance after refinement",
            best,
        ))
    }
}

/// Complex matrix `A_real + i s M` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub pattern: SparseMatrix,
    pub values: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(a_real: &SparseMatrix, imag_scale: f64, m: &SparseMatrix) -> Self {
        if a_real.same_pattern(m) {
            let values = a_real
                .values
                .iter()
                .zip(&m.values)
                .map(|(&a, &mm)| Complex64::new(a, imag_scale * mm))
                .collect();
            return ComplexMatrix {
                pattern: a_real.clone(),
                values,
            };
        }
        // merge patterns: real parts then imaginary parts
        let mut triplets = Vec::with_capacity(a_real.nnz() + m.nnz());
        for (src, tag) in [(a_real, 0.0), (m, 1.0)] {
            for i in 0..src.n_rows {
                let (cols, _) = src.row(i);
                for &j in cols {
                    triplets.push((i, j, tag));
                }
            }
        }
        let pattern = SparseMatrix::from_triplets(a_real.n_rows, a_real.n_cols, &triplets);
        let mut values = vec![Complex64::default(); pattern.nnz()];
        for i in 0..a_real.n_rows {
            let (cols, vals) = a_real.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                values[pattern.position(i, j).expect("merged")].re += v;
            }
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                values[pattern.position(i, j).expect("merged")].im += imag_scale * v;
            }
        }
        ComplexMatrix { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.pattern.n_rows)
            .map(|i| {
                let r = self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1];
                self.pattern.col_idx[r.clone()]
                    .iter()
                    .zip(&self.values[r])
                    .map(|(&j, &v)| v * x[j])
                    .sum()
            })
            .collect()
    }

    /// Real part as a real matrix on the same pattern.
    pub fn real_part(&self) -> SparseMatrix {
        SparseMatrix {
            values: self.values.iter().map(|z| z.re).collect(),
            ..self.pattern.clone()
        }
    }

    pub fn imag_part(&self) -> SparseMatrix {
        SparseMatrix {
            values: self.values.iter().map(|z| z.im).collect(),
            ..self.pattern.clone()
        }
    }
}

/// Repeated direct solves on one sparsity pattern; the symbolic LU analysis
/// is done once.
pub struct ComplexSolver {
    pattern: SparseMatrix,
    column_major: ColumnMajor,
    symbolic: SymbolicLu<usize>,
}

impl ComplexSolver {
    pub fn new(pattern: &SparseMatrix) -> Result<Self> {
        faer::set_global_parallelism(Par::Seq);
        let column_major = ColumnMajor::new(pattern);
        let symbolic = SymbolicLu::try_new(column_major.symbolic.as_ref())
            .map_err(|e| solver_error(Method::Direct, format!("{e:?}"), f64::INFINITY))?;
        Ok(ComplexSolver {
            pattern: pattern.clone(),
            column_major,
            symbolic,
        })
    }

    pub fn solve(
        &self,
        a: &ComplexMatrix,
        b: &[Complex64],
        tol: f64,
    ) -> Result<(Vec<Complex64>, SolveReport)> {
        check_tol(tol)?;
        if !a.pattern.same_pattern(&self.pattern) {
            return Err(Error::InvalidArgument(
                "matrix pattern differs from the analysed one".into(),
            ));
        }
        assert_eq!(b.len(), a.n(), "right-hand side length");
        let mat = self.column_major.matrix(&a.values);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat.as_ref()).map_err(|e| {
            solver_error(Method::Direct, format!("LU failed: {e:?}"), f64::INFINITY)
        })?;
        let inverse = |r: &[Complex64]| {
            let mut rhs = Mat::<Complex64>::from_fn(r.len(), 1, |i, _| r[i]);
            lu.solve_in_place(rhs.as_mut());
            (0..r.len()).map(|i| rhs[(i, 0)]).collect::<Vec<_>>()
        };
        refine(b, tol, inverse, |x| a.mul_vec(x))
    }
}

pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    solve_spd_with(a, b, tol, Method::Auto)
}

pub fn solve_spd_with(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    method: Method,
) -> Result<(Vec<f64>, SolveReport)> {
    check_tol(tol)?;
    match resolve(method, a.n_rows, Method::Cg) {
        Method::Direct => SpdSolver::new(a)?.solve(b, tol),
        _ => conjugate_gradient(a, b, tol, 10 * a.n_rows.max(100)),
    }
}

/// Solves `((i s) M + A_real) x = b`.
pub fn solve_complex(
    a_real: &SparseMatrix,
    imag_scale: f64,
    m: &SparseMatrix,
    b: &[Complex64],
    tol: f64,
) -> Result<(Vec<Complex64>, SolveReport)> {
    solve_complex_with(a_real, imag_scale, m, b, tol, Method::Auto)
}

pub fn solve_complex_with(
    a_real: &SparseMatrix,
    imag_scale: f64,
    m: &SparseMatrix,
    b: &[Complex64],
    tol: f64,
    method: Method,
) -> Result<(Vec<Complex64>, SolveReport)> {
    check_tol(tol)?;
    let a = ComplexMatrix::new(a_real, imag_scale, m);
    match resolve(method, a.n(), Method::Gmres) {
        Method::Direct => ComplexSolver::new(&a.pattern)?.solve(&a, b, tol),
        _ => gmres(&a, b, tol, 50, 20 * a.n().max(100)),
    }
}

fn resolve(method: Method, n: usize, iterative: Method) -> Method {
    match method {
        Method::Auto if n <= DIRECT_LIMIT => Method::Direct,
        Method::Auto => iterative,
        m => m,
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(solver_error(
            Method::Cg,
            "non-positive diagonal",
            f64::INFINITY,
        ));
    }
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, report(0, 0.0, Method::Cg)));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut best = 1.0f64;
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(solver_error(
                Method::Cg,
                "breakdown (matrix not SPD?)",
                best,
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = relative(norm2(&r), bnorm);
        best = best.min(rel);
        if rel <= tol {
            // recompute against the true residual
            let true_rel = true_residual(b, &a.mul_vec(&x), bnorm);
            if true_rel <= tol {
                return Ok((x, report(it, true_rel, Method::Cg)));
            }
            r = b.iter().zip(a.mul_vec(&x)).map(|(b, ax)| b - ax).collect();
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(solver_error(
        Method::Cg,
        format!("no convergence in {max_iter} iterations"),
        best,
    ))
}

fn true_residual<T: Scalar>(b: &[T], ax: &[T], bnorm: f64) -> f64 {
    let r: Vec<T> = b.iter().zip(ax).map(|(&b, &a)| b - a).collect();
    relative(norm2(&r), bnorm)
}

fn report(iterations: usize, relative_residual: f64, method: Method) -> SolveReport {
    SolveReport {
        iterations,
        relative_residual,
        method,
    }
}

/// Restarted GMRES with right Jacobi preconditioning, in complex arithmetic.
pub fn gmres(
    a: &ComplexMatrix,
    b: &[Complex64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<Complex64>, SolveReport)> {
    let n = b.len();
    let diag: Vec<Complex64> = (0..n)
        .map(|i| {
            a.pattern
                .position(i, i)
                .map_or(Complex64::new(1.0, 0.0), |k| a.values[k])
        })
        .collect();
    if diag.iter().any(|d| d.norm_sqr() == 0.0) {
        return Err(solver_error(Method::Gmres, "zero diagonal", f64::INFINITY));
    }
    let precond =
        |v: &[Complex64]| -> Vec<Complex64> { v.iter().zip(&diag).map(|(v, d)| v / d).collect() };
    let bnorm = norm2(b);
    let mut x = vec![Complex64::default(); n];
    if bnorm == 0.0 {
        return Ok((x, report(0, 0.0, Method::Gmres)));
    }
    let dot = |u: &[Complex64], v: &[Complex64]| -> Complex64 {
        u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
    };

    let mut total = 0;
    let mut best = f64::INFINITY;
    while total < max_iter {
        let ax = a.mul_vec(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        let rel = relative(beta, bnorm);
        best = best.min(rel);
        if rel <= tol {
            return Ok((x, report(total, rel, Method::Gmres)));
        }
        let m = restart.min(max_iter - total);
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![Complex64::default(); m]; m + 1];
        let mut cs = vec![Complex64::default(); m];
        let mut sn = vec![Complex64::default(); m];
        let mut g = vec![Complex64::default(); m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let mut w = a.mul_vec(&precond(&basis[k]));
            for (j, v) in basis.iter().enumerate() {
                let h = dot(v, &w);
                hess[j][k] = h;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= h * vi;
                }
            }
            let wn = norm2(&w);
            hess[k + 1][k] = Complex64::new(wn, 0.0);
            for j in 0..k {
                let (h0, h1) = (hess[j][k], hess[j + 1][k]);
                hess[j][k] = cs[j].conj() * h0 + sn[j].conj() * h1;
                hess[j + 1][k] = -sn[j] * h0 + cs[j] * h1;
            }
            let (h0, h1) = (hess[k][k], hess[k + 1][k]);
            let denom = (h0.norm_sqr() + h1.norm_sqr()).sqrt();
            if denom == 0.0 {
                return Err(solver_error(Method::Gmres, "breakdown", best));
            }
            cs[k] = h0 / denom;
            sn[k] = h1 / denom;
            hess[k][k] = Complex64::new(denom, 0.0);
            hess[k + 1][k] = Complex64::default();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            if relative(g[k + 1].norm(), bnorm) <= 0.1 * tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![Complex64::default(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![Complex64::default(); n];
        for (yj, v) in y.iter().zip(&basis) {
            for (u, vi) in update.iter_mut().zip(v) {
                *u += yj * vi;
            }
        }
        for (xi, u) in x.iter_mut().zip(precond(&update)) {
            *xi += u;
        }
    }
    let rel = true_residual(b, &a.mul_vec(&x), bnorm);
    if rel <= tol {
        return Ok((x, report(total, rel, Method::Gmres)));
    }
    Err(solver_error(
        Method::Gmres,
        format!("no convergence in {max_iter} iterations"),
        best.min(rel),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, assemble_stiffness};
    use crate::fe_space::{Degree, FeSpace};
    use crate::mesh::Mesh;
    use std::sync::Arc;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    fn random_spd(n: usize, seed: &mut u64) -> SparseMatrix {
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| lcg(seed)).collect())
            .collect();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v: f64 = (0..n).map(|k| b[k][i] * b[k][j]).sum();
                if i == j {
                    v += 1.0;
                }
                trip.push((i, j, v));
            }
        }
        SparseMatrix::from_triplets(n, n, &trip)
    }

    #[test]
    fn diagonal_and_scalar_systems() {
        let d = SparseMatrix::identity(4);
        let b = vec![1.0, -2.0, 3.5, 0.25];
        let (x, rep) = solve_spd(&d, &b, DEFAULT_TOL).unwrap();
        assert_eq!(x, b);
        assert_eq!(rep.relative_residual, 0.0);

        let k = SparseMatrix::diagonal(&[4.0]);
        let (x, _) = solve_spd(&k, &[1.0], DEFAULT_TOL).unwrap();
        assert_eq!(x, vec![0.25]);
    }

    #[test]
    fn random_spd_residual() {
        let mut seed = 7;
        let a = random_spd(20, &mut seed);
        let b: Vec<f64> = (0..20).map(|_| lcg(&mut seed)).collect();
        for method in [Method::Direct, Method::Cg] {
            let (x, rep) = solve_spd_with(&a, &b, DEFAULT_TOL, method).unwrap();
            let ax = a.mul_vec(&x);
            let r: f64 = b
                .iter()
                .zip(&ax)
                .map(|(b, a)| (b - a).powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = r / b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rel <= 1e-12, "{method:?}: {rel:e}");
            assert!((rel - rep.relative_residual).abs() <= 1e-15);
        }
    }

    #[test]
    fn indefinite_matrix_fails_cholesky() {
        let a = SparseMatrix::diagonal(&[1.0, -1.0]);
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0], 1e-12),
            Err(Error::Solver { .. })
        ));
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0], 1.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn pure_imaginary_system() {
        let zero = SparseMatrix::diagonal(&[0.0; 3]);
        let m = SparseMatrix::identity(3);
        let b = vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(-3.0, 0.5),
            Complex64::new(0.0, -1.0),
        ];
        for method in [Method::Direct, Method::Gmres] {
            let (x, _) = solve_complex_with(&zero, 1.0, &m, &b, DEFAULT_TOL, method).unwrap();
            for (xi, bi) in x.iter().zip(&b) {
                assert!((xi - (-Complex64::i() * bi)).norm() < 1e-15);
            }
        }
        let (x, rep) = solve_complex(&zero, 1.0, &m, &[Complex64::default(); 3], 1e-12).unwrap();
        assert!(x.iter().all(|z| z.norm() == 0.0));
        assert_eq!(rep.relative_residual, 0.0);
    }

    #[test]
    fn crank_nicolson_matrix_residual() {
        let space = Arc::new(FeSpace::new(
            Arc::new(Mesh::structured(4).unwrap()),
            Degree::Linear,
        ));
        let m = assemble_mass(&space);
        let k = assemble_stiffness(&space);
        let tau = 0.25;
        let s = k.lin_comb(-0.5, &k, 0.0);
        let mut seed = 11;
        let b: Vec<Complex64> = (0..m.n_rows)
            .map(|_| Complex64::new(lcg(&mut seed), lcg(&mut seed)))
            .collect();
        for method in [Method::Direct, Method::Gmres] {
            let (x, rep) = solve_complex_with(&s, 1.0 / tau, &m, &b, DEFAULT_TOL, method).unwrap();
            // independent residual: real and imaginary blocks applied separately
            let sx = s.mul_vec(&x);
            let mx = m.mul_vec(&x);
            let r: f64 = (0..b.len())
                .map(|i| (b[i] - sx[i] - Complex64::i() * mx[i] / tau).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let bn = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(r / bn <= 1e-12, "{method:?}");
            assert!(rep.relative_residual <= 1e-12);
        }
    }

    #[test]
    fn merged_patterns() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let m = SparseMatrix::identity(2);
        let c = ComplexMatrix::new(&a, 3.0, &m);
        assert_eq!(c.pattern.nnz(), 4);
        assert_eq!(c.values[0], Complex64::new(2.0, 3.0));
        assert_eq!(c.values[3], Complex64::new(0.0, 3.0));
    }

    #[test]
    fn solves_are_deterministic() {
        let space = Arc::new(FeSpace::new(
            Arc::new(Mesh::structured(8).unwrap()),
            Degree::Quadratic,
        ));
        let k = assemble_stiffness(&space);
        let b: Vec<f64> = (0..k.n_rows).map(|i| (i as f64).sin()).collect();
        let (x1, _) = solve_spd(&k, &b, DEFAULT_TOL).unwrap();
        let (x2, _) = solve_spd(&k, &b, DEFAULT_TOL).unwrap();
        assert_eq!(x1, x2);
    }
}
