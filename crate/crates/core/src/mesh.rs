//! Triangulations of polygonal domains.
//!
//! A [`Mesh`] is immutable once built. Boundary vertices and edges are found
//! from edge incidence (an edge used by exactly one triangle lies on the
//! boundary), so imported meshes of any convex polygon are classified the same
//! way as the structured unit-square grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex_flags: Vec<bool>,
    /// Unique edges `(a, b)` with `a < b`, sorted lexicographically.
    edges: Vec<[usize; 2]>,
    boundary_edge_flags: Vec<bool>,
    /// Edge indices per triangle, local edges ordered (0,1), (1,2), (2,0).
    triangle_edges: Vec<[usize; 3]>,
    h: f64,
}

impl Mesh {
    /// Validates and indexes a triangulation given as raw vertex and
    /// connectivity arrays.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::InvalidTriangle {
                        triangle: t,
                        message: format!("vertex index {v} out of range (nv = {nv})"),
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidTriangle {
                    triangle: t,
                    message: "repeated vertex".into(),
                });
            }
            let area = signed_area(&vertices, tri);
            if !(area > 0.0) {
                return Err(Error::InvalidTriangle {
                    triangle: t,
                    message: format!("non-positive signed area {area:e} (clockwise or degenerate)"),
                });
            }
        }

        let mut incidence: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for tri in &triangles {
            for [a, b] in local_edges(tri) {
                *incidence.entry(edge_key(a, b)).or_insert(0) += 1;
            }
        }
        if let Some((e, &count)) = incidence.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge ({}, {}) is shared by {count} triangles",
                e[0], e[1]
            )));
        }

        let edges: Vec<[usize; 2]> = incidence.keys().copied().collect();
        let boundary_edge_flags: Vec<bool> = incidence.values().map(|&c| c == 1).collect();
        let mut boundary_vertex_flags = vec![false; nv];
        for (e, &on_boundary) in edges.iter().zip(&boundary_edge_flags) {
            if on_boundary {
                boundary_vertex_flags[e[0]] = true;
                boundary_vertex_flags[e[1]] = true;
            }
        }

        let mut used = vec![false; nv];
        for tri in &triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!(
                "vertex {v} belongs to no triangle"
            )));
        }

        let triangle_edges = triangles
            .iter()
            .map(|tri| {
                let le = local_edges(tri);
                let mut out = [0; 3];
                for (k, [a, b]) in le.into_iter().enumerate() {
                    out[k] = edges
                        .binary_search(&edge_key(a, b))
                        .expect("edge collected above");
                }
                out
            })
            .collect();

        let h = triangles
            .iter()
            .map(|tri| diameter(&vertices, tri))
            .fold(0.0, f64::max);

        Ok(Mesh {
            vertices,
            triangles,
            boundary_vertex_flags,
            edges,
            boundary_edge_flags,
            triangle_edges,
            h,
        })
    }

    /// The `n x n` grid of the unit square, each cell cut along the diagonal
    /// from its lower-left to its upper-right corner.
    pub fn structured(n: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "structured mesh needs n >= 1".into(),
            ));
        }
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Mesh::from_parts(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.boundary_vertex_flags
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn boundary_edge_flags(&self) -> &[bool] {
        &self.boundary_edge_flags
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Largest triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    /// Compensated (Neumaier) sum of the triangle areas.
    pub fn total_area(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in 0..self.n_triangles() {
            let a = self.area(t);
            let s = sum + a;
            comp += if sum.abs() >= a.abs() {
                (sum - s) + a
            } else {
                (a - s) + sum
            };
            sum = s;
        }
        sum + comp
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Finds a triangle containing `p` (linear scan).
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        const EPS: f64 = 1e-12;
        (0..self.n_triangles()).find_map(|t| {
            let l = self.barycentric(t, p);
            l.iter().all(|&x| x >= -EPS).then_some((t, l))
        })
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vertices triangles");
        let _ = writeln!(s, "{} {}", self.n_vertices(), self.n_triangles());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_ascii().as_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Mesh> {
        let f = std::fs::File::open(path)?;
        Mesh::parse(BufReader::new(f))
    }

    /// Parses the ASCII `nv nt` / `x y` / `i j k` format.
    pub fn parse(reader: impl BufRead) -> Result<Mesh> {
        let mut header: Option<(usize, usize)> = None;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut last_line = 0;

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            last_line = lineno;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            match header {
                None => {
                    let [nv, nt] = parse_fields::<usize, 2>(&fields).map_err(parse_err)?;
                    header = Some((nv, nt));
                    vertices.reserve(nv);
                    triangles.reserve(nt);
                }
                Some((nv, nt)) => {
                    if vertices.len() < nv {
                        let xy = parse_fields::<f64, 2>(&fields).map_err(parse_err)?;
                        if xy.iter().any(|c| !c.is_finite()) {
                            return Err(parse_err("non-finite coordinate".into()));
                        }
                        vertices.push(xy);
                    } else if triangles.len() < nt {
                        let tri = parse_fields::<usize, 3>(&fields).map_err(parse_err)?;
                        if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                            return Err(parse_err(format!(
                                "vertex index {bad} out of range (nv = {nv})"
                            )));
                        }
                        triangles.push(tri);
                    } else {
                        return Err(parse_err("unexpected trailing data".into()));
                    }
                }
            }
        }

        let Some((nv, nt)) = header else {
            return Err(Error::Parse {
                line: last_line,
                message: "missing `nv nt` header".into(),
            });
        };
        if vertices.len() != nv || triangles.len() != nt {
            return Err(Error::Parse {
                line: last_line,
                message: format!(
                    "expected {nv} vertices and {nt} triangles, found {} and {}",
                    vertices.len(),
                    triangles.len()
                ),
            });
        }
        Mesh::from_parts(vertices, triangles)
    }
}

fn parse_fields<T: std::str::FromStr, const N: usize>(fields: &[&str]) -> Result<[T; N], String>
where
    T::Err: std::fmt::Display,
{
    if fields.len() != N {
        return Err(format!("expected {N} fields, found {}", fields.len()));
    }
    let parsed: Vec<T> = fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|e| format!("`{f}`: {e}")))
        .collect::<Result<_, _>>()?;
    parsed
        .try_into()
        .map_err(|_| unreachable!("length checked above"))
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn local_edges(tri: &[usize; 3]) -> [[usize; 2]; 3] {
    [[tri[0], tri[1]], [tri[1], tri[2]], [tri[2], tri[0]]]
}

fn signed_area(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|v| vertices[v]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn diameter(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    local_edges(tri)
        .iter()
        .map(|[a, b]| {
            let (p, q) = (vertices[*a], vertices[*b]);
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid_is_all_boundary() {
        let m = Mesh::structured(1).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert!(m.boundary_vertex_flags().iter().all(|&b| b));
        // the diagonal is interior even though both ends are boundary vertices
        assert_eq!(m.edges().len(), 5);
        assert_eq!(m.boundary_edge_flags().iter().filter(|&&b| !b).count(), 1);
    }

    #[test]
    fn two_by_two_has_one_interior_vertex() {
        let m = Mesh::structured(2).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        let interior: Vec<usize> = (0..9).filter(|&v| !m.boundary_vertex_flags()[v]).collect();
        assert_eq!(interior, vec![4]);
        assert_eq!(m.vertices()[4], [0.5, 0.5]);
    }

    #[test]
    fn ten_by_ten_geometry() {
        let m = Mesh::structured(10).unwrap();
        assert!((m.h() - 2f64.sqrt() / 10.0).abs() < 1e-15);
        // independent oracle: sum of cell areas computed from coordinates only
        let area: f64 = m
            .triangles()
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| m.vertices()[v]);
                let ab = (b[0] - a[0]).hypot(b[1] - a[1]);
                let bc = (c[0] - b[0]).hypot(c[1] - b[1]);
                let ca = (a[0] - c[0]).hypot(a[1] - c[1]);
                let s = 0.5 * (ab + bc + ca);
                (s * (s - ab) * (s - bc) * (s - ca)).sqrt()
            })
            .sum();
        assert!((area - 1.0).abs() < 1e-14, "{area}");
    }

    #[test]
    fn area_and_boundary_count_up_to_256() {
        for n in [1, 2, 3, 7, 16, 64, 100, 256] {
            let m = Mesh::structured(n).unwrap();
            assert!(
                (m.total_area() - 1.0).abs() <= 1e-13,
                "n = {n}: {}",
                m.total_area()
            );
            let nb = m.boundary_vertex_flags().iter().filter(|&&b| b).count();
            assert_eq!(nb, 4 * n);
            let on_square = |p: Point| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            for (v, &flag) in m.boundary_vertex_flags().iter().enumerate() {
                assert_eq!(flag, on_square(m.vertices()[v]));
            }
        }
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(
            Mesh::structured(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn parse_matches_structured() {
        let text = "# unit square\n4 2\n0 0\n1 0\n0 1\n1 1\n\n0 1 3\n0 3 2\n";
        let m = Mesh::parse(text.as_bytes()).unwrap();
        assert_eq!(m, Mesh::structured(1).unwrap());
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let text = "4 2\n0 0\n1 0\n0 1\n1 1\n0 1 3\n0 2 3\n";
        match Mesh::parse(text.as_bytes()) {
            Err(Error::InvalidTriangle { triangle, .. }) => assert_eq!(triangle, 1),
            other => panic!("expected orientation error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_index_is_parse_error() {
        let text = "4 2\n0 0\n1 0\n0 1\n1 1\n0 1 3\n0 3 7\n";
        match Mesh::parse(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let text = "# header follows\n4 2\n0 0\n1 zero\n";
        match Mesh::parse(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            Mesh::parse("4 2\n0 0\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = Mesh::structured(4).unwrap();
        let (t, l) = m.locate([0.3, 0.1]).unwrap();
        let pts = m.triangle_points(t);
        let x = l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0];
        let y = l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1];
        assert!((x - 0.3).abs() < 1e-14 && (y - 0.1).abs() < 1e-14);
        assert!(m.locate([1.5, 0.5]).is_none());
    }
}
