//! Continuous P1/P2 Lagrange spaces with homogeneous Dirichlet elimination.

mod quadrature;

use std::sync::Arc;

pub use quadrature::{monomial_error, quadrature, reference_monomial_integral, QuadratureRule};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Polynomial degree of the Lagrange element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Degree {
    Linear,
    Quadratic,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }

    pub fn n_local(self) -> usize {
        match self {
            Degree::Linear => 3,
            Degree::Quadratic => 6,
        }
    }

    /// Barycentric coordinates of the local nodes. Quadratic nodes 3, 4, 5 sit
    /// on the midpoints of local edges (0,1), (1,2), (2,0).
    pub fn local_nodes(self) -> &'static [[f64; 3]] {
        const NODES: [[f64; 3]; 6] = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ];
        &NODES[..self.n_local()]
    }
}

impl TryFrom<usize> for Degree {
    type Error = Error;

    fn try_from(r: usize) -> Result<Degree> {
        match r {
            1 => Ok(Degree::Linear),
            2 => Ok(Degree::Quadratic),
            _ => Err(Error::InvalidArgument(format!(
                "unsupported element degree {r} (expected 1 or 2)"
            ))),
        }
    }
}

/// Basis values and gradients with respect to the reference coordinates
/// `(xi, eta)`, where `lambda = (1 - xi - eta, xi, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub ref_grads: Vec<[f64; 2]>,
}

pub fn eval_basis(degree: Degree, l: [f64; 3]) -> BasisEval {
    // derivatives of lambda_k with respect to (xi, eta)
    const DL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    match degree {
        Degree::Linear => BasisEval {
            values: l.to_vec(),
            ref_grads: DL.to_vec(),
        },
        Degree::Quadratic => {
            let mut values = Vec::with_capacity(6);
            let mut ref_grads = Vec::with_capacity(6);
            for k in 0..3 {
                values.push(l[k] * (2.0 * l[k] - 1.0));
                let s = 4.0 * l[k] - 1.0;
                ref_grads.push([s * DL[k][0], s * DL[k][1]]);
            }
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                values.push(4.0 * l[a] * l[b]);
                ref_grads.push([
                    4.0 * (l[a] * DL[b][0] + l[b] * DL[a][0]),
                    4.0 * (l[a] * DL[b][1] + l[b] * DL[a][1]),
                ]);
            }
            BasisEval { values, ref_grads }
        }
    }
}

/// Affine map data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub origin: Point,
    /// Columns are the edge vectors `p1 - p0` and `p2 - p0`.
    pub jacobian: [[f64; 2]; 2],
    /// `J^{-T}`, mapping reference gradients to physical ones.
    pub inv_jt: [[f64; 2]; 2],
    pub area: f64,
}

impl ElementGeometry {
    fn new([p0, p1, p2]: [Point; 3]) -> Self {
        let j = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_jt = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        ElementGeometry {
            origin: p0,
            jacobian: j,
            inv_jt,
            area: 0.5 * det,
        }
    }

    pub fn map(&self, l: [f64; 3]) -> Point {
        let (xi, eta) = (l[1], l[2]);
        [
            self.origin[0] + self.jacobian[0][0] * xi + self.jacobian[0][1] * eta,
            self.origin[1] + self.jacobian[1][0] * xi + self.jacobian[1][1] * eta,
        ]
    }

    pub fn physical_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jt[0][0] * g[0] + self.inv_jt[0][1] * g[1],
            self.inv_jt[1][0] * g[0] + self.inv_jt[1][1] * g[1],
        ]
    }
}

/// Basis functions tabulated at the points of one quadrature rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub n_local: usize,
    /// `values[q * n_local + a]`
    pub values: Vec<f64>,
    pub ref_grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(degree: Degree, rule: QuadratureRule) -> Self {
        let n_local = degree.n_local();
        let mut values = Vec::with_capacity(rule.len() * n_local);
        let mut ref_grads = Vec::with_capacity(rule.len() * n_local);
        for &p in &rule.points {
            let e = eval_basis(degree, p);
            values.extend(e.values);
            ref_grads.extend(e.ref_grads);
        }
        Tabulation {
            rule,
            n_local,
            values,
            ref_grads,
        }
    }

    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_local..(q + 1) * self.n_local]
    }

    pub fn ref_grads_at(&self, q: usize) -> &[[f64; 2]] {
        &self.ref_grads[q * self.n_local..(q + 1) * self.n_local]
    }
}

/// Quadrature exactness used for each family of integrals, fixed when the
/// space is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureDegrees {
    pub mass: usize,
    pub stiffness: usize,
    /// Weighted mass and `|u|^2` load; both must share one rule.
    pub nonlinear: usize,
    pub load: usize,
    pub error: usize,
}

impl QuadratureDegrees {
    pub fn for_degree(degree: Degree) -> Self {
        let r = degree.order();
        QuadratureDegrees {
            mass: 2 * r,
            stiffness: (2 * (r - 1)).max(1),
            nonlinear: 2 * r + 2,
            load: 6,
            error: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    degree: Degree,
    dof_coords: Vec<Point>,
    cell_dofs: Vec<usize>,
    boundary_dof_flags: Vec<bool>,
    interior_dofs: Vec<usize>,
    interior_index: Vec<Option<usize>>,
    geometry: Vec<ElementGeometry>,
    quadrature_degrees: QuadratureDegrees,
}

impl FeSpace {
    /// Numbers vertices first, then edge midpoints in the mesh's sorted edge
    /// order.
    pub fn new(mesh: Arc<Mesh>, degree: Degree) -> FeSpace {
        let nv = mesh.n_vertices();
        let mut dof_coords: Vec<Point> = mesh.vertices().to_vec();
        let mut boundary_dof_flags = mesh.boundary_vertex_flags().to_vec();
        let n_local = degree.n_local();
        let mut cell_dofs = Vec::with_capacity(mesh.n_triangles() * n_local);

        if degree == Degree::Quadratic {
            for (e, &on_boundary) in mesh.edges().iter().zip(mesh.boundary_edge_flags()) {
                let (p, q) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
                dof_coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                boundary_dof_flags.push(on_boundary);
            }
        }
        for (t, tri) in mesh.triangles().iter().enumerate() {
            cell_dofs.extend_from_slice(tri);
            if degree == Degree::Quadratic {
                cell_dofs.extend(mesh.triangle_edges()[t].iter().map(|e| nv + e));
            }
        }

        let mut interior_dofs = Vec::new();
        let mut interior_index = vec![None; dof_coords.len()];
        for (d, &b) in boundary_dof_flags.iter().enumerate() {
            if !b {
                interior_index[d] = Some(interior_dofs.len());
                interior_dofs.push(d);
            }
        }

        let geometry = (0..mesh.n_triangles())
            .map(|t| ElementGeometry::new(mesh.triangle_points(t)))
            .collect();

        FeSpace {
            quadrature_degrees: QuadratureDegrees::for_degree(degree),
            mesh,
            degree,
            dof_coords,
            cell_dofs,
            boundary_dof_flags,
            interior_dofs,
            interior_index,
            geometry,
        }
    }

    pub fn build(mesh: Arc<Mesh>, degree: usize) -> Result<FeSpace> {
        Ok(FeSpace::new(mesh, Degree::try_from(degree)?))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn n_local(&self) -> usize {
        self.degree.n_local()
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_triangles()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_dofs.len()
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        let n = self.n_local();
        &self.cell_dofs[t * n..(t + 1) * n]
    }

    pub fn boundary_dof_flags(&self) -> &[bool] {
        &self.boundary_dof_flags
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    /// Position of global DoF `d` in the interior numbering.
    pub fn interior_index(&self, d: usize) -> Option<usize> {
        self.interior_index[d]
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    pub fn quadrature_degrees(&self) -> QuadratureDegrees {
        self.quadrature_degrees
    }

    pub fn tabulate(&self, exactness: usize) -> Result<Tabulation> {
        Ok(Tabulation::new(self.degree, quadrature(exactness)?))
    }

    /// Extends interior coefficients by zero on the boundary.
    pub fn extend<T: Copy + Default>(&self, interior: &[T]) -> Vec<T> {
        assert_eq!(interior.len(), self.n_interior(), "interior vector length");
        let mut full = vec![T::default(); self.n_dofs()];
        for (&d, &v) in self.interior_dofs.iter().zip(interior) {
            full[d] = v;
        }
        full
    }

    pub fn restrict<T: Copy>(&self, full: &[T]) -> Vec<T> {
        assert_eq!(full.len(), self.n_dofs(), "full vector length");
        self.interior_dofs.iter().map(|&d| full[d]).collect()
    }
}
