//! Lowest-order div-conforming (RWG) boundary element spaces and discrete
//! surface differential operators.
//!
//! The basis function of edge `e` with adjacent triangles `T+` (lower index)
//! and `T−` is `f(x) = ±|e|/(2A±) (x − p±)` on `T±`, where `p±` is the vertex
//! opposite `e`. Its surface divergence is `±|e|/A±`.

use faer::Mat;

use crate::geometry::{Edge, SurfaceMesh};
use crate::quadrature::{bary_point, rule3, TriangleRule};
use crate::vec3::{self, CVec3, Vec3};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    Length { expected: usize, got: usize },
    #[error("spaces live on different meshes")]
    MeshMismatch,
    #[error("Gram matrix factorization failed")]
    Factorization,
}

#[derive(Clone, Debug)]
pub struct DivConformingSpace {
    mesh: SurfaceMesh,
    edges: Vec<Edge>,
    /// Per triangle and local vertex `a`: dof of the opposite edge and its sign.
    tri_dofs: Vec<[(usize, f64); 3]>,
    /// `±|e|/(2A)` per triangle and local vertex.
    coeffs: Vec<[f64; 3]>,
    pub level: usize,
}

impl DivConformingSpace {
    pub fn new(mesh: SurfaceMesh) -> Self {
        Self::with_level(mesh, 0)
    }

    pub fn with_level(mesh: SurfaceMesh, level: usize) -> Self {
        let edges = mesh.edges();
        let mut tri_dofs = vec![[(usize::MAX, 0.0); 3]; mesh.num_triangles()];
        for (e, edge) in edges.iter().enumerate() {
            tri_dofs[edge.tris[0]][edge.local[0]] = (e, 1.0);
            tri_dofs[edge.tris[1]][edge.local[1]] = (e, -1.0);
        }
        let coeffs = (0..mesh.num_triangles())
            .map(|t| {
                let v = mesh.triangle_vertices(t);
                let two_a = 2.0 * mesh.areas()[t];
                std::array::from_fn(|a| {
                    let len = vec3::dist(v[(a + 1) % 3], v[(a + 2) % 3]);
                    tri_dofs[t][a].1 * len / two_a
                })
            })
            .collect();
        DivConformingSpace { mesh, edges, tri_dofs, coeffs, level }
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    /// Dof and sign of the basis function opposite local vertex `a` of triangle `t`.
    pub fn local_dof(&self, t: usize, a: usize) -> (usize, f64) {
        self.tri_dofs[t][a]
    }

    pub fn local_dofs(&self, t: usize) -> &[(usize, f64); 3] {
        &self.tri_dofs[t]
    }

    /// Signed `|e|/(2A)` for local vertex `a` of triangle `t`.
    pub fn coefficient(&self, t: usize, a: usize) -> f64 {
        self.coeffs[t][a]
    }

    pub fn coefficients(&self, t: usize) -> &[f64; 3] {
        &self.coeffs[t]
    }

    /// Divergence of the local basis function: `2·coefficient`.
    pub fn divergence(&self, t: usize, a: usize) -> f64 {
        2.0 * self.coeffs[t][a]
    }

    fn check_len(&self, len: usize) -> Result<(), SpaceError> {
        if len != self.dim() {
            return Err(SpaceError::Length { expected: self.dim(), got: len });
        }
        Ok(())
    }

    /// Value of `Σ c_i f_i` at point `x` of triangle `t`.
    pub fn eval_at(&self, c: &[C64], t: usize, x: Vec3) -> CVec3 {
        let v = self.mesh.triangle_vertices(t);
        let mut out = vec3::czero();
        for a in 0..3 {
            let (dof, _) = self.tri_dofs[t][a];
            let s = c[dof] * self.coeffs[t][a];
            out = vec3::cadd(out, vec3::cscale(s, vec3::sub(x, v[a])));
        }
        out
    }

    /// Per-triangle value of `div_Γ Σ c_i f_i`.
    pub fn surface_divergence(&self, c: &[C64]) -> Result<Vec<C64>, SpaceError> {
        self.check_len(c.len())?;
        Ok((0..self.mesh.num_triangles())
            .map(|t| (0..3).map(|a| c[self.tri_dofs[t][a].0] * (2.0 * self.coeffs[t][a])).sum())
            .collect())
    }

    /// `∫_T (x − p_a)·(x − p_b)` and `∫_T (x − p_a)·(n × (x − p_b))` via a
    /// degree-2 rule, exact for these quadratic integrands.
    fn local_products(&self, t: usize) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
        let v = self.mesh.triangle_vertices(t);
        let n = self.mesh.normals()[t];
        let pts = rule3().map(&v, self.mesh.areas()[t]);
        let mut gram = [[0.0; 3]; 3];
        let mut twist = [[0.0; 3]; 3];
        for &(x, w) in &pts {
            for a in 0..3 {
                let xa = vec3::sub(x, v[a]);
                for b in 0..3 {
                    let xb = vec3::sub(x, v[b]);
                    gram[a][b] += w * vec3::dot(xa, xb);
                    if b > a {
                        twist[a][b] += w * vec3::dot(xa, vec3::cross(n, xb));
                    }
                }
            }
        }
        for a in 0..3 {
            for b in 0..a {
                twist[a][b] = -twist[b][a];
            }
        }
        (gram, twist)
    }

    /// `G_mn = ∫ f_m · f_n` (symmetric positive definite).
    pub fn gram_matrix(&self) -> Mat<f64> {
        let n = self.dim();
        let mut g = Mat::<f64>::zeros(n, n);
        for t in 0..self.mesh.num_triangles() {
            let (loc, _) = self.local_products(t);
            self.scatter(&mut g, t, &loc);
        }
        g
    }

    /// `B_mn = ∫ f_m · (n × f_n)` (antisymmetric).
    pub fn twisted_pairing(&self) -> Mat<f64> {
        let n = self.dim();
        let mut b = Mat::<f64>::zeros(n, n);
        for t in 0..self.mesh.num_triangles() {
            let (_, loc) = self.local_products(t);
            self.scatter(&mut b, t, &loc);
        }
        b
    }

    fn scatter(&self, m: &mut Mat<f64>, t: usize, loc: &[[f64; 3]; 3]) {
        for a in 0..3 {
            let (i, _) = self.tri_dofs[t][a];
            for b in 0..3 {
                let (j, _) = self.tri_dofs[t][b];
                m[(i, j)] += self.coeffs[t][a] * self.coeffs[t][b] * loc[a][b];
            }
        }
    }

    /// `⟨f_m, u⟩ = ∫ f_m · u` for a complex vector field given pointwise.
    pub fn project_field(&self, rule: &TriangleRule, u: impl Fn(usize, Vec3) -> CVec3) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for t in 0..self.mesh.num_triangles() {
            let v = self.mesh.triangle_vertices(t);
            let area = self.mesh.areas()[t];
            for (b, &w) in rule.bary.iter().zip(&rule.weights) {
                let x = bary_point(&v, b);
                let ux = u(t, x);
                for a in 0..3 {
                    let (dof, _) = self.tri_dofs[t][a];
                    let f = vec3::scale(self.coeffs[t][a], vec3::sub(x, v[a]));
                    out[dof] += vec3::cdot_r(ux, f) * (w * area);
                }
            }
        }
        out
    }

    /// `∫ div f_m · ψ` for a piecewise-linear scalar field.
    pub fn pair_divergence(&self, psi: &ScalarSurfaceField) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let mean = (psi.values[tri[0]] + psi.values[tri[1]] + psi.values[tri[2]]) / 3.0;
            let area = self.mesh.areas()[t];
            for a in 0..3 {
                let (dof, _) = self.tri_dofs[t][a];
                out[dof] += mean * (2.0 * self.coeffs[t][a] * area);
            }
        }
        out
    }
}

/// Checks that two spaces discretize the same mesh.
pub fn same_mesh(a: &DivConformingSpace, b: &DivConformingSpace) -> Result<(), SpaceError> {
    if a.mesh().triangles() != b.mesh().triangles() || a.mesh().vertices() != b.mesh().vertices() {
        return Err(SpaceError::MeshMismatch);
    }
    Ok(())
}

pub fn build_space(mesh: &SurfaceMesh) -> DivConformingSpace {
    DivConformingSpace::new(mesh.clone())
}

/// Twisted pairing matrix `B_mn = ∫ f_m · (n × f_n)` between two spaces on one mesh.
pub fn pairing_matrix(test: &DivConformingSpace, trial: &DivConformingSpace) -> Result<Mat<f64>, SpaceError> {
    same_mesh(test, trial)?;
    Ok(test.twisted_pairing())
}

/// Continuous piecewise-linear scalar field given by its vertex values.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSurfaceField {
    pub values: Vec<C64>,
}

impl ScalarSurfaceField {
    pub fn zeros(n: usize) -> Self {
        ScalarSurfaceField { values: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn from_real(values: impl IntoIterator<Item = f64>) -> Self {
        ScalarSurfaceField { values: values.into_iter().map(|v| C64::new(v, 0.0)).collect() }
    }

    /// Area-weighted average of per-triangle values onto the vertices.
    pub fn from_triangle_values(mesh: &SurfaceMesh, per_tri: &[C64]) -> Self {
        let mut acc = vec![C64::new(0.0, 0.0); mesh.num_vertices()];
        let mut wsum = vec![0.0; mesh.num_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let a = mesh.areas()[t];
            for &v in tri {
                acc[v] += per_tri[t] * a;
                wsum[v] += a;
            }
        }
        ScalarSurfaceField { values: acc.into_iter().zip(wsum).map(|(s, w)| s / w).collect() }
    }

    /// Pointwise product with another field on the same vertices.
    pub fn mul(&self, other: &ScalarSurfaceField) -> ScalarSurfaceField {
        ScalarSurfaceField { values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() }
    }

    /// Linear interpolant at barycentric point `b` of triangle `tri`.
    pub fn interpolate(&self, tri: &[usize; 3], b: &[f64; 3]) -> C64 {
        self.values[tri[0]] * b[0] + self.values[tri[1]] * b[1] + self.values[tri[2]] * b[2]
    }

    /// Linear interpolant at a point `x` of triangle `t`.
    pub fn eval_at(&self, mesh: &SurfaceMesh, t: usize, x: Vec3) -> C64 {
        let v = mesh.triangle_vertices(t);
        let n = mesh.normals()[t];
        let two_a = 2.0 * mesh.areas()[t];
        let b: [f64; 3] = std::array::from_fn(|a| {
            let (p, q) = (v[(a + 1) % 3], v[(a + 2) % 3]);
            vec3::dot(vec3::cross(vec3::sub(p, x), vec3::sub(q, x)), n) / two_a
        });
        self.interpolate(&mesh.triangles()[t], &b)
    }
}

/// Per-triangle tangential gradient of the piecewise-linear interpolant.
pub fn surface_gradient(mesh: &SurfaceMesh, field: &ScalarSurfaceField) -> Vec<CVec3> {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let v = mesh.triangle_vertices(t);
            let n = mesh.normals()[t];
            let two_a = 2.0 * mesh.areas()[t];
            // ∇λ_a = n × (v_c − v_b) / (2A) for the edge opposite a.
            let mut g = vec3::czero();
            for a in 0..3 {
                let e = vec3::sub(v[(a + 2) % 3], v[(a + 1) % 3]);
                let grad = vec3::scale(1.0 / two_a, vec3::cross(n, e));
                g = vec3::cadd(g, vec3::cscale(field.values[tri[a]], grad));
            }
            g
        })
        .collect()
}
