//! Sparse assembly of the mass, stiffness and potential-weighted mass
//! matrices and of the load vectors.
//!
//! Element contributions are computed in parallel into a per-element buffer
//! and then scattered into a precomputed CSR pattern strictly in element
//! order, so assembled values are bitwise independent of the thread count.

use std::ops::{Add, AddAssign, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe_space::{Degree, FeSpace, Tabulation};
use crate::mesh::Point;

/// Field entries of coefficient vectors: real potentials or complex wave
/// functions.
pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + Send
    + Sync
    + std::fmt::Debug
    + Add<Output = Self>
    + AddAssign
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    fn from_complex(c: Complex64) -> Self;
    fn to_complex(self) -> Complex64;
    fn abs_sqr(self) -> f64;
    /// `Re(conj(self) * other)`
    fn re_dot(self, other: Self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn from_complex(c: Complex64) -> Self {
        c.re
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn abs_sqr(self) -> f64 {
        self * self
    }
    fn re_dot(self, other: Self) -> f64 {
        self * other
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn from_complex(c: Complex64) -> Self {
        c
    }
    fn to_complex(self) -> Complex64 {
        self
    }
    fn abs_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn re_dot(self, other: Self) -> f64 {
        self.re * other.re + self.im * other.im
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

/// Real CSR matrix. Column indices are sorted and unique within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates
    /// in input order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            assert!(i < n_rows && j < n_cols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().expect("entry pushed") += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn mul_vec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_cols, "matrix-vector dimension mismatch");
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut acc = T::default();
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += x[j] * v;
                }
                acc
            })
            .collect()
    }

    /// `Re(x^* A x)`
    pub fn quadratic_form<T: Scalar>(&self, x: &[T]) -> f64 {
        let ax = self.mul_vec(x);
        x.iter().zip(&ax).map(|(&a, &b)| a.re_dot(b)).sum()
    }

    /// `sqrt(Re(x^* A x))`, the discrete L2 norm when `A` is the mass matrix.
    pub fn norm<T: Scalar>(&self, x: &[T]) -> f64 {
        self.quadratic_form(x).max(0.0).sqrt()
    }

    /// `a * self + b * other` on a shared pattern.
    pub fn lin_comb(&self, a: f64, other: &SparseMatrix, b: f64) -> SparseMatrix {
        assert!(self.same_pattern(other), "lin_comb needs a shared pattern");
        SparseMatrix {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            ..self.clone()
        }
    }

    /// Largest `|A_ij - A_ji|`; infinite if the pattern is not symmetric.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                match self.position(j, i) {
                    Some(k) => worst = worst.max((v - self.values[k]).abs()),
                    None => return f64::INFINITY,
                }
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }
}

/// Which global DoFs become matrix rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSet {
    /// Interior DoFs only: homogeneous Dirichlet conditions by elimination.
    Interior,
    /// Every DoF, as before elimination.
    All,
}

const SKIP: usize = usize::MAX;

#[rustfmt::skip]
const P1_MASS: [f64; 9] = [
    2.0, 1.0, 1.0,
    1.0, 2.0, 1.0,
    1.0, 1.0, 2.0,
];

// local order: vertices 0, 1, 2, then midpoints of edges (0,1), (1,2), (2,0)
#[rustfmt::skip]
const P2_MASS: [f64; 36] = [
     6.0, -1.0, -1.0,  0.0, -4.0,  0.0,
    -1.0,  6.0, -1.0,  0.0,  0.0, -4.0,
    -1.0, -1.0,  6.0, -4.0,  0.0,  0.0,
     0.0,  0.0, -4.0, 32.0, 16.0, 16.0,
    -4.0,  0.0,  0.0, 16.0, 32.0, 16.0,
     0.0, -4.0,  0.0, 16.0, 16.0, 32.0,
];

/// Reusable assembly context: sparsity pattern, scatter maps and basis
/// tabulations for one space.
#[derive(Debug, Clone)]
pub struct Assembler {
    space: Arc<FeSpace>,
    dofs: DofSet,
    /// Global DoF to row index (or `SKIP`).
    row_of: Vec<usize>,
    n: usize,
    pattern: SparseMatrix,
    /// Per element, `n_local^2` CSR positions (or `SKIP`).
    scatter: Vec<usize>,
    tab_stiffness: Tabulation,
    tab_nonlinear: Tabulation,
    tab_load: Tabulation,
}

impl Assembler {
    pub fn new(space: Arc<FeSpace>, dofs: DofSet) -> Result<Self> {
        let row_of: Vec<usize> = match dofs {
            DofSet::Interior => (0..space.n_dofs())
                .map(|d| space.interior_index(d).unwrap_or(SKIP))
                .collect(),
            DofSet::All => (0..space.n_dofs()).collect(),
        };
        let n = row_of.iter().filter(|&&r| r != SKIP).count();
        let nl = space.n_local();

        let mut triplets = Vec::with_capacity(space.n_cells() * nl * nl);
        for t in 0..space.n_cells() {
            for &a in space.cell_dofs(t) {
                for &b in space.cell_dofs(t) {
                    let (i, j) = (row_of[a], row_of[b]);
                    if i != SKIP && j != SKIP {
                        triplets.push((i, j, 0.0));
                    }
                }
            }
        }
        let pattern = SparseMatrix::from_triplets(n, n, &triplets);

        let mut scatter = Vec::with_capacity(space.n_cells() * nl * nl);
        for t in 0..space.n_cells() {
            for &a in space.cell_dofs(t) {
                for &b in space.cell_dofs(t) {
                    let (i, j) = (row_of[a], row_of[b]);
                    scatter.push(if i != SKIP && j != SKIP {
                        pattern
                            .position(i, j)
                            .expect("pattern holds every coupling")
                    } else {
                        SKIP
                    });
                }
            }
        }

        let qd = space.quadrature_degrees();
        Ok(Assembler {
            tab_stiffness: space.tabulate(qd.stiffness)?,
            tab_nonlinear: space.tabulate(qd.nonlinear)?,
            tab_load: space.tabulate(qd.load)?,
            space,
            dofs,
            row_of,
            n,
            pattern,
            scatter,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn dof_set(&self) -> DofSet {
        self.dofs
    }

    /// Number of rows (interior or all DoFs).
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn pattern(&self) -> &SparseMatrix {
        &self.pattern
    }

    pub fn load_tabulation(&self) -> &Tabulation {
        &self.tab_load
    }

    fn assemble_matrix<F>(&self, local: F) -> SparseMatrix
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let nl = self.space.n_local();
        let mut buf = vec![0.0; self.space.n_cells() * nl * nl];
        buf.par_chunks_mut(nl * nl)
            .enumerate()
            .for_each(|(t, chunk)| local(t, chunk));
        let mut m = self.pattern.clone();
        for (&pos, &v) in self.scatter.iter().zip(&buf) {
            if pos != SKIP {
                m.values[pos] += v;
            }
        }
        m
    }

    fn assemble_vector<T, F>(&self, local: F) -> Result<Vec<T>>
    where
        T: Scalar,
        F: Fn(usize, &mut [T]) -> Result<()> + Sync,
    {
        let nl = self.space.n_local();
        let mut buf = vec![T::default(); self.space.n_cells() * nl];
        buf.par_chunks_mut(nl)
            .enumerate()
            .map(|(t, chunk)| local(t, chunk))
            .collect::<Result<Vec<()>>>()?;
        let mut out = vec![T::default(); self.n];
        for (t, chunk) in buf.chunks(nl).enumerate() {
            for (&d, &v) in self.space.cell_dofs(t).iter().zip(chunk) {
                let r = self.row_of[d];
                if r != SKIP {
                    out[r] += v;
                }
            }
        }
        Ok(out)
    }

    /// Exact element mass matrices (affine elements), so hand-computed
    /// entries are reproduced without quadrature rounding.
    pub fn mass(&self) -> SparseMatrix {
        let (reference, denom): (&[f64], f64) = match self.space.degree() {
            Degree::Linear => (&P1_MASS, 12.0),
            Degree::Quadratic => (&P2_MASS, 180.0),
        };
        // the common denominator is applied once after summation
        let mut m = self.assemble_matrix(|t, out| {
            let area = self.space.geometry(t).area;
            for (o, &c) in out.iter_mut().zip(reference) {
                *o = area * c;
            }
        });
        for v in &mut m.values {
            *v /= denom;
        }
        m
    }

    pub fn stiffness(&self) -> SparseMatrix {
        let tab = &self.tab_stiffness;
        let nl = tab.n_local;
        self.assemble_matrix(|t, out| {
            let g = self.space.geometry(t);
            let mut grads = [[0.0; 2]; 6];
            for (q, &w) in tab.rule.weights.iter().enumerate() {
                for (a, rg) in tab.ref_grads_at(q).iter().enumerate() {
                    grads[a] = g.physical_grad(*rg);
                }
                let s = g.area * w;
                for a in 0..nl {
                    for b in 0..nl {
                        let dot = grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1];
                        out[a * nl + b] += s * dot;
                    }
                }
            }
        })
    }

    /// `W_ij = int w_h psi_i psi_j` for the FE function `w_h` with the given
    /// coefficients on all DoFs.
    pub fn weighted_mass(&self, weight: &[f64]) -> Result<SparseMatrix> {
        if weight.len() != self.space.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "weight has {} entries, space has {} DoFs",
                weight.len(),
                self.space.n_dofs()
            )));
        }
        let tab = &self.tab_nonlinear;
        let nl = tab.n_local;
        Ok(self.assemble_matrix(|t, out| {
            let area = self.space.geometry(t).area;
            let dofs = self.space.cell_dofs(t);
            for (q, &w) in tab.rule.weights.iter().enumerate() {
                let phi = tab.values_at(q);
                let wq: f64 = dofs.iter().zip(phi).map(|(&d, &p)| weight[d] * p).sum();
                let s = area * w * wq;
                for a in 0..nl {
                    for b in 0..nl {
                        out[a * nl + b] += s * (phi[a] * phi[b]);
                    }
                }
            }
        }))
    }

    /// `b_i = int |u_h|^2 psi_i` for `u_h` given on all DoFs. Uses the same
    /// rule as [`Assembler::weighted_mass`], so `phi^T b(u) = u^* W(phi) u`
    /// holds to rounding.
    pub fn nonlinear_load(&self, u_full: &[Complex64]) -> Vec<f64> {
        assert_eq!(u_full.len(), self.space.n_dofs(), "u must cover all DoFs");
        let tab = &self.tab_nonlinear;
        self.assemble_vector(|t, out: &mut [f64]| {
            let area = self.space.geometry(t).area;
            let dofs = self.space.cell_dofs(t);
            for (q, &w) in tab.rule.weights.iter().enumerate() {
                let phi = tab.values_at(q);
                let uq: Complex64 = dofs.iter().zip(phi).map(|(&d, &p)| u_full[d] * p).sum();
                let s = area * w * uq.norm_sqr();
                for (o, &p) in out.iter_mut().zip(phi) {
                    *o += s * p;
                }
            }
            Ok(())
        })
        .expect("no fallible work")
    }

    /// `b_i = int f psi_i` with the degree-6 rule.
    pub fn load<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Scalar,
        F: Fn(Point) -> T + Sync,
    {
        let tab = &self.tab_load;
        self.assemble_vector(|t, out: &mut [T]| {
            let g = self.space.geometry(t);
            for (q, (&w, &l)) in tab.rule.weights.iter().zip(&tab.rule.points).enumerate() {
                let x = g.map(l);
                let fx = f(x);
                if !fx.is_finite() {
                    return Err(Error::NonFinite {
                        x: x[0],
                        y: x[1],
                        value: format!("{fx:?}"),
                    });
                }
                let s = g.area * w;
                for (o, &p) in out.iter_mut().zip(tab.values_at(q)) {
                    *o += fx * (s * p);
                }
            }
            Ok(())
        })
    }

    /// `b_i = int grad v . grad psi_i` from the gradient of `v`.
    pub fn gradient_load<T, F>(&self, grad: F) -> Result<Vec<T>>
    where
        T: Scalar,
        F: Fn(Point) -> [T; 2] + Sync,
    {
        let tab = &self.tab_load;
        self.assemble_vector(|t, out: &mut [T]| {
            let g = self.space.geometry(t);
            for (q, (&w, &l)) in tab.rule.weights.iter().zip(&tab.rule.points).enumerate() {
                let x = g.map(l);
                let gv = grad(x);
                if !(gv[0].is_finite() && gv[1].is_finite()) {
                    return Err(Error::NonFinite {
                        x: x[0],
                        y: x[1],
                        value: format!("{gv:?}"),
                    });
                }
                let s = g.area * w;
                for (o, rg) in out.iter_mut().zip(tab.ref_grads_at(q)) {
                    let pg = g.physical_grad(*rg);
                    *o += (gv[0] * pg[0] + gv[1] * pg[1]) * s;
                }
            }
            Ok(())
        })
    }
}

pub fn assemble_mass(space: &Arc<FeSpace>) -> SparseMatrix {
    interior(space).mass()
}

pub fn assemble_stiffness(space: &Arc<FeSpace>) -> SparseMatrix {
    interior(space).stiffness()
}

pub fn assemble_weighted_mass(space: &Arc<FeSpace>, weight: &[f64]) -> Result<SparseMatrix> {
    interior(space).weighted_mass(weight)
}

/// `b_i = int |u_h|^2 psi_i` for `u_h` given on interior DoFs.
pub fn assemble_nonlinear_load(space: &Arc<FeSpace>, u: &[Complex64]) -> Vec<f64> {
    interior(space).nonlinear_load(&space.extend(u))
}

pub fn assemble_load<T, F>(space: &Arc<FeSpace>, f: F) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(Point) -> T + Sync,
{
    interior(space).load(f)
}

fn interior(space: &Arc<FeSpace>) -> Assembler {
    Assembler::new(space.clone(), DofSet::Interior).expect("built-in quadrature degrees")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use std::f64::consts::PI;

    fn space(n: usize, degree: Degree) -> Arc<FeSpace> {
        Arc::new(FeSpace::new(Arc::new(Mesh::structured(n).unwrap()), degree))
    }

    #[test]
    fn hand_assembled_single_interior_node() {
        let s = space(2, Degree::Linear);
        let m = assemble_mass(&s);
        let k = assemble_stiffness(&s);
        assert_eq!(m.to_dense(), vec![vec![0.125]]);
        assert_eq!(k.to_dense(), vec![vec![4.0]]);
    }

    #[test]
    fn full_mass_integrates_to_area() {
        for degree in [Degree::Linear, Degree::Quadratic] {
            let a = Assembler::new(space(5, degree), DofSet::All).unwrap();
            let m = a.mass();
            let total: f64 = m.values.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            let k = a.stiffness();
            let ones = vec![1.0; a.size()];
            assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
            let f: Vec<f64> = a.load(|_| 1.0).unwrap();
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn operators_are_symmetric() {
        for degree in [Degree::Linear, Degree::Quadratic] {
            let s = space(6, degree);
            let a = Assembler::new(s.clone(), DofSet::Interior).unwrap();
            let w: Vec<f64> = s
                .dof_coords()
                .iter()
                .map(|p| (p[0] * 3.0).sin() + p[1])
                .collect();
            for m in [a.mass(), a.stiffness(), a.weighted_mass(&w).unwrap()] {
                assert_eq!(m.max_asymmetry(), 0.0);
            }
        }
    }

    #[test]
    fn stiffness_positive_definite_on_small_mesh() {
        // dense Jacobi eigenvalue oracle on the 9x9 interior block of n = 4
        let k = assemble_stiffness(&space(4, Degree::Linear)).to_dense();
        let lambda_min = jacobi_min_eigenvalue(k);
        // 5-point Laplacian: 4 - 4 cos(pi / 4) = 1.1716
        assert!((lambda_min - (4.0 - 4.0 * (PI / 4.0).cos())).abs() < 1e-12);
    }

    fn jacobi_min_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[p][q] * a[p][q];
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
            if off < 1e-30 {
                break;
            }
        }
        (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unit_and_zero_weights() {
        for degree in [Degree::Linear, Degree::Quadratic] {
            let s = space(4, degree);
            let m = assemble_mass(&s);
            let w1 = assemble_weighted_mass(&s, &vec![1.0; s.n_dofs()]).unwrap();
            assert!(m.same_pattern(&w1));
            for (a, b) in m.values.iter().zip(&w1.values) {
                assert!((a - b).abs() <= 1e-14);
            }
            let w0 = assemble_weighted_mass(&s, &vec![0.0; s.n_dofs()]).unwrap();
            assert!(w0.values.iter().all(|&v| v == 0.0));
        }
        let s = space(2, Degree::Linear);
        assert!(matches!(
            assemble_weighted_mass(&s, &[1.0; 3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn weighted_mass_with_linear_weight_by_hand() {
        // Weight x on the six-triangle patch around (1/2, 1/2), integrated
        // with int l1^a l2^b l3^c = 2|T| a! b! c! / (a + b + c + 2)!.
        let s = space(2, Degree::Linear);
        let w: Vec<f64> = s.dof_coords().iter().map(|p| p[0]).collect();
        let wm = assemble_weighted_mass(&s, &w).unwrap();
        let m = s.mesh();
        let mut expected = 0.0;
        for (t, tri) in m.triangles().iter().enumerate() {
            let Some(k) = tri.iter().position(|&v| v == 4) else {
                continue;
            };
            let area = m.area(t);
            for (j, &v) in tri.iter().enumerate() {
                let x = m.vertices()[v][0];
                expected += x * area * if j == k { 1.0 / 10.0 } else { 1.0 / 30.0 };
            }
        }
        assert!((wm.get(0, 0) - expected).abs() < 1e-15);
        assert!((expected - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn weighted_mass_is_linear_in_weight() {
        let s = space(5, Degree::Quadratic);
        let n = s.n_dofs();
        let a: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) / 7.0 - 0.5).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 13 % 5) as f64) / 3.0).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let wa = assemble_weighted_mass(&s, &a).unwrap();
        let wb = assemble_weighted_mass(&s, &b).unwrap();
        let wab = assemble_weighted_mass(&s, &ab).unwrap();
        let comb = wa.lin_comb(2.0, &wb, -3.0);
        for (x, y) in wab.values.iter().zip(&comb.values) {
            assert!((x - y).abs() <= 1e-13);
        }
    }

    #[test]
    fn nonlinear_load_by_hand_and_homogeneity() {
        // int over the patch of the cubed hat: sum_T |T| * 2 * 3!/5! = 6 * (1/8) / 10
        let s = space(2, Degree::Linear);
        let b = assemble_nonlinear_load(&s, &[Complex64::new(1.0, 0.0)]);
        assert!((b[0] - 6.0 * 0.125 / 10.0).abs() < 1e-16);

        let s = space(4, Degree::Quadratic);
        let u: Vec<Complex64> = (0..s.n_interior())
            .map(|i| Complex64::new((i as f64 * 0.3).sin(), (i as f64 * 0.7).cos()))
            .collect();
        let c = Complex64::new(0.6, -1.3);
        let cu: Vec<Complex64> = u.iter().map(|&x| c * x).collect();
        let b = assemble_nonlinear_load(&s, &u);
        let bc = assemble_nonlinear_load(&s, &cu);
        for (x, y) in b.iter().zip(&bc) {
            assert!((c.norm_sqr() * x - y).abs() <= 1e-13);
        }
        let zero = assemble_nonlinear_load(&s, &vec![Complex64::default(); s.n_interior()]);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonlinear_load_pairs_with_weighted_mass() {
        let s = space(5, Degree::Quadratic);
        let a = Assembler::new(s.clone(), DofSet::Interior).unwrap();
        let u: Vec<Complex64> = (0..s.n_interior())
            .map(|i| Complex64::new((i as f64).sin(), (2.0 * i as f64).cos()))
            .collect();
        let phi: Vec<f64> = (0..s.n_interior())
            .map(|i| (i as f64 * 0.1).cos())
            .collect();
        let w = a.weighted_mass(&s.extend(&phi)).unwrap();
        let b = a.nonlinear_load(&s.extend(&u));
        let lhs = w.quadratic_form(&u);
        let rhs: f64 = phi.iter().zip(&b).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn load_of_sine_product() {
        let s = space(64, Degree::Linear);
        let a = Assembler::new(s, DofSet::All).unwrap();
        let b: Vec<f64> = a.load(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).unwrap();
        let integral: f64 = b.iter().sum();
        assert!((integral - 4.0 / (PI * PI)).abs() < 1e-6);
        let z: Vec<f64> = a.load(|_| 0.0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_load_names_point() {
        let s = space(2, Degree::Linear);
        let r: Result<Vec<f64>> = assemble_load(&s, |p| if p[0] > 0.5 { f64::NAN } else { 1.0 });
        match r {
            Err(Error::NonFinite { x, .. }) => assert!(x > 0.5),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn galerkin_consistency_for_quadratics() {
        // No nonzero quadratic vanishes on the whole square, so check the
        // pre-elimination operator: K p = (grad p, grad psi_i) for p in P2.
        let s = space(4, Degree::Quadratic);
        let a = Assembler::new(s.clone(), DofSet::All).unwrap();
        let k = a.stiffness();
        let coeffs: Vec<f64> = s
            .dof_coords()
            .iter()
            .map(|p| p[0] * (1.0 - p[0]) + p[0] * p[1])
            .collect();
        let kc = k.mul_vec(&coeffs);
        let b: Vec<f64> = a
            .gradient_load(|p| [1.0 - 2.0 * p[0] + p[1], p[0]])
            .unwrap();
        for (x, y) in kc.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn assembly_independent_of_thread_count() {
        let s = space(12, Degree::Quadratic);
        let w: Vec<f64> = s
            .dof_coords()
            .iter()
            .map(|p| (5.0 * p[0] * p[1]).exp())
            .collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let a = Assembler::new(s.clone(), DofSet::Interior).unwrap();
                (a.mass(), a.stiffness(), a.weighted_mass(&w).unwrap())
            })
        };
        let one = run(1);
        let many = run(4);
        assert_eq!(one, many);
    }
}
