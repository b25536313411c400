//! Shape derivatives of the scattered field under a normal boundary velocity.
//!
//! For a boundary moved by `t v`, the derivative `E'` is a radiating field whose
//! rotated tangential trace jumps across the nominal surface by
//! `n × [E'] = ∇_Γ(v_n [E_n]) × n − v_n [curl E]_T`, and likewise for `H'`.
//! The jumps are computed from the solved total currents `J = n × H` and
//! `M = −n × E`, using `E_n = div_Γ J / (ik₀)` and `H_n = div_Γ M / (ik₀)`.
//!
//! Conducting scatterers use an indirect single-layer representation
//! `E' = η L J̃` with `⟨f, η L J̃⟩ = ⟨f, E'_T⟩`, so the nominal EFIE matrix is
//! reused. Dielectric scatterers keep the PMCHWT matrix and move the jump data
//! to the right-hand side.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use crate::geometry::SurfaceMesh;
use crate::quadrature::rule7;
use crate::solve::{FarFieldSample, LinearMap, Problem, ScatteringSystem, SolveError, SolverOptions, TraceSolution};
use crate::spaces::{surface_gradient, DivConformingSpace, ScalarSurfaceField};
use crate::vec3::{self, CVec3, Vec3};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum ShapeDerivError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("far-field grids differ")]
    Grid,
    #[error("Gram matrix is not positive definite")]
    Gram,
}

/// Surface quantities of the nominal solution entering the shape derivative.
#[derive(Clone, Debug)]
pub struct SdIngredients {
    pub problem: Problem,
    pub k0: f64,
    /// Exterior total normal electric field per triangle.
    pub e_n: Vec<C64>,
    /// Exterior total normal magnetic field per triangle (dielectric only).
    pub h_n: Option<Vec<C64>>,
    pub j: Vec<C64>,
    pub m: Option<Vec<C64>>,
}

impl SdIngredients {
    pub fn e_n_vertex(&self, mesh: &SurfaceMesh) -> ScalarSurfaceField {
        ScalarSurfaceField::from_triangle_values(mesh, &self.e_n)
    }

    pub fn h_n_vertex(&self, mesh: &SurfaceMesh) -> Option<ScalarSurfaceField> {
        self.h_n.as_ref().map(|h| ScalarSurfaceField::from_triangle_values(mesh, h))
    }

    /// `H_T = −n × J` at `x` in triangle `t`.
    pub fn tangential_h(&self, space: &DivConformingSpace, t: usize, x: Vec3) -> CVec3 {
        let j = space.eval_at(&self.j, t, x);
        vec3::cmul(C64::new(-1.0, 0.0), vec3::rcross_c(space.mesh().normals()[t], j))
    }

    /// `E_T = n × M` at `x` in triangle `t`; zero on a conductor.
    pub fn tangential_e(&self, space: &DivConformingSpace, t: usize, x: Vec3) -> CVec3 {
        match &self.m {
            Some(m) => vec3::rcross_c(space.mesh().normals()[t], space.eval_at(m, t, x)),
            None => vec3::czero(),
        }
    }
}

pub fn compute_ingredients(space: &DivConformingSpace, sol: &TraceSolution, k0: f64) -> Result<SdIngredients, ShapeDerivError> {
    let ik = C64::new(0.0, k0);
    let div = |c: &[C64]| -> Result<Vec<C64>, ShapeDerivError> {
        let d = space
            .surface_divergence(c)
            .map_err(|_| ShapeDerivError::Dimension { what: "solution", expected: space.dim(), got: c.len() })?;
        Ok(d.into_iter().map(|z| z / ik).collect())
    };
    let e_n = div(&sol.j)?;
    let h_n = sol.m.as_deref().map(div).transpose()?;
    Ok(SdIngredients { problem: sol.problem, k0, e_n, h_n, j: sol.j.clone(), m: sol.m.clone() })
}

/// Normal velocity `v(x_i) · n_i` at the vertices, with area-weighted vertex normals.
pub fn normal_velocity(mesh: &SurfaceMesh, displacement: &[Vec3]) -> ScalarSurfaceField {
    let normals = mesh.vertex_normals();
    ScalarSurfaceField::from_real(displacement.iter().zip(&normals).map(|(v, n)| vec3::dot(*v, *n)))
}

/// Cholesky factor of the real Gram matrix, used to project tangential fields.
pub struct GramFactor {
    llt: Llt<f64>,
}

impl GramFactor {
    pub fn new(space: &DivConformingSpace) -> Result<Self, ShapeDerivError> {
        let llt = space.gram_matrix().llt(Side::Lower).map_err(|_| ShapeDerivError::Gram)?;
        Ok(GramFactor { llt })
    }

    /// Coefficients of the L² projection with moments `b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = b.len();
        let mut x = Mat::from_fn(n, 2, |i, j| if j == 0 { b[i].re } else { b[i].im });
        self.llt.solve_in_place(x.as_mut());
        (0..n).map(|i| C64::new(x[(i, 0)], x[(i, 1)])).collect()
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ShapeDerivError> {
    if expected != got {
        return Err(ShapeDerivError::Dimension { what, expected, got });
    }
    Ok(())
}

/// `⟨f, E'_T⟩` with `E'_T = −∇_Γ(v_n E_n) + ik v_n J` on a conductor.
pub fn sd_rhs_pec(space: &DivConformingSpace, ing: &SdIngredients, v_n: &ScalarSurfaceField) -> Result<Vec<C64>, ShapeDerivError> {
    let mesh = space.mesh();
    check_len("normal velocity", mesh.num_vertices(), v_n.values.len())?;
    let psi = v_n.mul(&ing.e_n_vertex(mesh));
    let grad = surface_gradient(mesh, &psi);
    let ik = C64::new(0.0, ing.k0);
    Ok(space.project_field(rule7(), |t, x| {
        let j = space.eval_at(&ing.j, t, x);
        vec3::csub(vec3::cmul(ik * v_n.eval_at(mesh, t, x), j), grad[t])
    }))
}

/// PMCHWT right-hand side for the dielectric shape derivative.
pub fn sd_rhs_de(
    sys: &ScatteringSystem,
    gram: &GramFactor,
    ing: &SdIngredients,
    v_n: &ScalarSurfaceField,
) -> Result<Vec<C64>, ShapeDerivError> {
    let space = &sys.space;
    let mesh = space.mesh();
    check_len("normal velocity", mesh.num_vertices(), v_n.values.len())?;
    let (m, h_n) = match (&ing.m, ing.h_n_vertex(mesh)) {
        (Some(m), Some(h)) => (m, h),
        _ => return Err(ShapeDerivError::Dimension { what: "magnetic current", expected: space.dim(), got: 0 }),
    };
    let p = &sys.params;
    let ik = C64::new(0.0, ing.k0);
    let ca = ik * (1.0 - p.mu_r);
    let cb = ik * (1.0 - p.eps_r);
    let psi_a = v_n.mul(&ing.e_n_vertex(mesh));
    let psi_b = v_n.mul(&h_n);
    let ga: Vec<CVec3> = surface_gradient(mesh, &psi_a).into_iter().map(|g| vec3::cmul(C64::new(1.0 - 1.0 / p.eps_r, 0.0), g)).collect();
    let gb: Vec<CVec3> = surface_gradient(mesh, &psi_b).into_iter().map(|g| vec3::cmul(C64::new(1.0 - 1.0 / p.mu_r, 0.0), g)).collect();
    let neg = C64::new(-1.0, 0.0);
    // a = n × [E'] = ∇ψ_a × n + c_a v_n n × J,  b = n × [H'] = ∇ψ_b × n + c_b v_n n × M.
    let rotated = |g: &[CVec3], c: C64, cur: &[C64]| {
        space.project_field(rule7(), |t, x| {
            let n = mesh.normals()[t];
            let u = space.eval_at(cur, t, x);
            let s = c * v_n.eval_at(mesh, t, x);
            vec3::cadd(vec3::cmul(neg, vec3::rcross_c(n, g[t])), vec3::cmul(s, vec3::rcross_c(n, u)))
        })
    };
    // n × a = ∇ψ_a − c_a v_n J,  n × b = ∇ψ_b − c_b v_n M.
    let twisted = |g: &[CVec3], c: C64, cur: &[C64]| {
        space.project_field(rule7(), |t, x| {
            let u = space.eval_at(cur, t, x);
            vec3::csub(g[t], vec3::cmul(c * v_n.eval_at(mesh, t, x), u))
        })
    };
    let alpha = gram.solve(&rotated(&ga, ca, &ing.j));
    let beta = gram.solve(&rotated(&gb, cb, m));
    let na = twisted(&ga, ca, &ing.j);
    let nb = twisted(&gb, cb, m);
    let inner = &sys.layers[1];
    let k1 = inner.k.as_ref().expect("dielectric layers carry K");
    let eta1 = p.eta(1);
    let (l1a, l1b) = (inner.l.apply(&alpha), inner.l.apply(&beta));
    let (k1a, k1b) = (k1.apply(&alpha), k1.apply(&beta));
    let n = space.dim();
    let mut rhs = Vec::with_capacity(2 * n);
    for i in 0..n {
        rhs.push(l1b[i] * eta1 + k1a[i] - na[i] * 0.5);
    }
    for i in 0..n {
        rhs.push(k1b[i] - nb[i] * 0.5 - l1a[i] / eta1);
    }
    Ok(rhs)
}

/// Dispatches on the problem type; `gram` is only needed for dielectrics.
pub fn sd_rhs(
    sys: &ScatteringSystem,
    gram: Option<&GramFactor>,
    ing: &SdIngredients,
    v_n: &ScalarSurfaceField,
) -> Result<Vec<C64>, ShapeDerivError> {
    match sys.problem {
        Problem::Pec => sd_rhs_pec(&sys.space, ing, v_n),
        Problem::Dielectric => {
            let owned;
            let g = match gram {
                Some(g) => g,
                None => {
                    owned = GramFactor::new(&sys.space)?;
                    &owned
                }
            };
            sd_rhs_de(sys, g, ing, v_n)
        }
    }
}

/// Solves the nominal system with a shape-derivative right-hand side.
pub fn solve_sd(sys: &mut ScatteringSystem, rhs: &[C64], opts: &SolverOptions) -> Result<TraceSolution, ShapeDerivError> {
    let out = sys.solve_rhs(rhs, opts)?;
    Ok(TraceSolution::from_coefficients(sys.problem, sys.space.level, out.x, out.iterations, out.residuals))
}

/// First-order approximation `F + t F'`.
pub fn foa_far_field(f: &FarFieldSample, f_prime: &FarFieldSample, t: f64) -> Result<FarFieldSample, ShapeDerivError> {
    if f.theta != f_prime.theta {
        return Err(ShapeDerivError::Grid);
    }
    let values = f.values.iter().zip(&f_prime.values).map(|(a, b)| vec3::cadd(*a, vec3::cmul(C64::new(t, 0.0), *b))).collect();
    Ok(FarFieldSample { theta: f.theta.clone(), values })
}
