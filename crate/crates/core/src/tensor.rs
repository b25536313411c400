//! Second moments of the shape derivative.
//!
//! For a random velocity with covariance `Σ_r w_r φ_r(x) φ_r(y)` the second
//! moment `Σ` of the shape-derivative coefficients solves the tensor equation
//! `Z Σ Z^H = C` with `C = Σ_r w_r g_r g_r^H`, where `g_r` is the shape
//! derivative right-hand side for `v_n = φ_r`. The combination technique
//! replaces the single fine-level solve by a signed sum of anisotropic
//! level pairs, recombined through the far-field matrices of each level.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatMut, MatRef};
use rand::Rng;
use rayon::prelude::*;

use crate::geometry::{fichera_bumps, sample_field, KiteField, PerturbationField, SplineMode, SurfaceMesh};
use crate::operators::MediumParameters;
use crate::shapederiv::{compute_ingredients, normal_velocity, sd_rhs, GramFactor, ShapeDerivError};
use crate::solve::{gmres, FnMap, GmresOptions, PlaneWave, Problem, ScatteringSystem, SolveError, SolverOptions, TraceSolution};
use crate::spaces::{DivConformingSpace, ScalarSurfaceField};
use crate::vec3::Vec3;
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("level bounds must satisfy 0 <= L0 <= L, got L0 = {l0}, L = {l}")]
    Bounds { l0: usize, l: usize },
    #[error("level {level} requested but only {available} levels are prepared")]
    Level { level: usize, available: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("block ({0}, {1}) missing")]
    MissingBlock(usize, usize),
    #[error("unknown perturbation model '{0}'")]
    UnknownModel(String),
    #[error("block ({l1}, {l2}): {source}")]
    Block { l1: usize, l2: usize, source: SolveError },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    ShapeDeriv(#[from] ShapeDerivError),
}

/// A level pair of the combination technique.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexEntry {
    pub l1: usize,
    pub l2: usize,
    /// `+1` for `Λ+`, `−1` for `Λ−`.
    pub sign: i8,
    /// 2 for an off-diagonal Hermitian representative standing for its mirror as well.
    pub multiplicity: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSets {
    pub l0: usize,
    pub l: usize,
    pub hermitian: bool,
    /// `Λ+ = {l1 + l2 = L + L0}`, ordered by `l1`.
    pub plus: Vec<(usize, usize)>,
    /// `Λ− = {l1 + l2 = L + L0 − 1}`, ordered by `l1`.
    pub minus: Vec<(usize, usize)>,
}

pub fn build_index_sets(l0: usize, l: usize, hermitian: bool) -> Result<IndexSets, TensorError> {
    if l0 > l {
        return Err(TensorError::Bounds { l0, l });
    }
    let diag = |s: usize| -> Vec<(usize, usize)> { (l0..=l).filter(|&a| s >= a && (l0..=l).contains(&(s - a))).map(|a| (a, s - a)).collect() };
    let plus = diag(l + l0);
    let minus = if l + l0 == 0 { Vec::new() } else { diag(l + l0 - 1) };
    Ok(IndexSets { l0, l, hermitian, plus, minus })
}

impl IndexSets {
    /// Blocks to solve: all of `Λ` or, when Hermitian, the `l1 ≥ l2` representatives.
    pub fn entries(&self) -> Vec<IndexEntry> {
        let mut out = Vec::new();
        for (set, sign) in [(&self.plus, 1i8), (&self.minus, -1i8)] {
            let mut part: Vec<IndexEntry> = set
                .iter()
                .filter(|(a, b)| !self.hermitian || a >= b)
                .map(|&(l1, l2)| IndexEntry { l1, l2, sign, multiplicity: if self.hermitian && l1 != l2 { 2 } else { 1 } })
                .collect();
            if self.hermitian {
                part.sort_by(|x, y| y.l1.cmp(&x.l1));
            }
            out.extend(part);
        }
        out
    }
}

/// Velocity field with weight `w` in the covariance expansion.
#[derive(Clone)]
pub struct CovarianceTerm {
    pub weight: f64,
    pub field: Arc<dyn PerturbationField + Send + Sync>,
}

/// `M²[v_n](x, y) = Σ_r w_r φ_r(x) φ_r(y)` with `φ_r = v_r · n`.
#[derive(Clone)]
pub struct CovarianceFactorization {
    pub terms: Vec<CovarianceTerm>,
}

impl std::fmt::Debug for CovarianceFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CovarianceFactorization").field("rank", &self.rank()).finish()
    }
}

impl CovarianceFactorization {
    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    pub fn normal_fields(&self, mesh: &SurfaceMesh) -> Vec<ScalarSurfaceField> {
        self.terms.iter().map(|t| normal_velocity(mesh, &sample_field(mesh, t.field.as_ref()))).collect()
    }

    /// Covariance kernel between vertices `a` and `b`.
    pub fn kernel(&self, mesh: &SurfaceMesh, a: usize, b: usize) -> f64 {
        self.normal_fields(mesh).iter().zip(&self.terms).map(|(f, t)| t.weight * f.values[a].re * f.values[b].re).sum()
    }

    /// Coefficients `√(3 w_r) μ_r` with independent `μ_r ~ U[−1, 1]`, so that
    /// `Σ_r c_r v_r` has the factorized covariance.
    pub fn sample_coefficients<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.terms.iter().map(|t| (3.0 * t.weight).sqrt() * rng.random_range(-1.0..=1.0)).collect()
    }

    /// Vertex displacements `Σ_r c_r v_r(x_i)`.
    pub fn displacement(&self, mesh: &SurfaceMesh, coefficients: &[f64]) -> Vec<Vec3> {
        let mut d = vec![[0.0; 3]; mesh.num_vertices()];
        for (t, &c) in self.terms.iter().zip(coefficients) {
            if c == 0.0 {
                continue;
            }
            for (di, v) in d.iter_mut().zip(sample_field(mesh, t.field.as_ref())) {
                *di = crate::vec3::axpy(*di, c, v);
            }
        }
        d
    }
}

#[derive(Clone)]
pub enum PerturbationModel {
    /// `v = μ v̄` with the kite field and `μ ~ U[−1, 1]`.
    KiteRank1,
    /// `v = Σ_ij μ_ij Υ_i(x) Υ_j(y) ê_z` on the top face of the Fichera surface.
    FicheraSplines,
    Custom(Vec<CovarianceTerm>),
}

impl FromStr for PerturbationModel {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kite-rank1" => Ok(PerturbationModel::KiteRank1),
            "fichera-splines" => Ok(PerturbationModel::FicheraSplines),
            other => Err(TensorError::UnknownModel(other.to_string())),
        }
    }
}

pub fn factorize_covariance(model: &PerturbationModel) -> CovarianceFactorization {
    let w = 1.0 / 3.0;
    let terms = match model {
        PerturbationModel::KiteRank1 => vec![CovarianceTerm { weight: w, field: Arc::new(KiteField) }],
        PerturbationModel::FicheraSplines => {
            let bumps = fichera_bumps();
            let mut terms = Vec::with_capacity(36);
            for i in bumps {
                for j in bumps {
                    terms.push(CovarianceTerm { weight: w, field: Arc::new(SplineMode { i, j }) });
                }
            }
            terms
        }
        PerturbationModel::Custom(terms) => terms.clone(),
    };
    CovarianceFactorization { terms }
}

/// Everything the tensor solves need from one mesh level.
pub struct TensorLevel {
    pub level: usize,
    pub system: ScatteringSystem,
    pub nominal: TraceSolution,
    /// Shape-derivative right-hand sides, one per covariance term.
    pub rhs: Vec<Vec<C64>>,
    /// Far-field matrix on the observation grid (rows `3i + c`).
    pub far_field: Mat<C64>,
    pub setup_seconds: f64,
}

impl TensorLevel {
    #[allow(clippy::too_many_arguments)]
    pub fn prepare(
        mesh: &SurfaceMesh,
        level: usize,
        problem: Problem,
        params: MediumParameters,
        wave: &PlaneWave,
        cov: &CovarianceFactorization,
        dirs: &[Vec3],
        opts: &SolverOptions,
    ) -> Result<Self, TensorError> {
        let start = Instant::now();
        let space = DivConformingSpace::with_level(mesh.clone(), level);
        let mut system = ScatteringSystem::assemble(space, params, problem, &opts.quadrature)?;
        let nominal = system.solve(wave, opts)?;
        system.factorize();
        let ing = compute_ingredients(&system.space, &nominal, system.params.k0)?;
        let gram = match problem {
            Problem::Dielectric => Some(GramFactor::new(&system.space)?),
            Problem::Pec => None,
        };
        let rhs = cov
            .normal_fields(mesh)
            .iter()
            .map(|phi| sd_rhs(&system, gram.as_ref(), &ing, phi))
            .collect::<Result<Vec<_>, _>>()?;
        let far_field = system.far_field_matrix(dirs);
        Ok(TensorLevel { level, system, nominal, rhs, far_field, setup_seconds: start.elapsed().as_secs_f64() })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Nominal far field stacked as `3i + c`.
    pub fn nominal_far_field(&self) -> Vec<C64> {
        crate::solve::LinearMap::apply(&self.far_field, &self.nominal.coefficients())
    }
}

/// Builds all levels of a hierarchy; `meshes[l]` is level `l`.
pub fn prepare_levels(
    meshes: &[SurfaceMesh],
    problem: Problem,
    params: &MediumParameters,
    wave: &PlaneWave,
    cov: &CovarianceFactorization,
    dirs: &[Vec3],
    opts: &SolverOptions,
) -> Result<Vec<TensorLevel>, TensorError> {
    meshes
        .iter()
        .enumerate()
        .map(|(l, m)| TensorLevel::prepare(m, l, problem, *params, wave, cov, dirs, opts))
        .collect()
}

/// `C = Σ_r w_r g_r^{(1)} (g_r^{(2)})^H`.
pub fn assemble_moment_rhs(weights: &[f64], g1: &[Vec<C64>], g2: &[Vec<C64>]) -> Result<Mat<C64>, TensorError> {
    if weights.len() != g1.len() || weights.len() != g2.len() {
        return Err(TensorError::Shape(format!("{} weights, {} and {} factors", weights.len(), g1.len(), g2.len())));
    }
    let n1 = g1.first().map_or(0, Vec::len);
    let n2 = g2.first().map_or(0, Vec::len);
    if g1.iter().any(|g| g.len() != n1) || g2.iter().any(|g| g.len() != n2) {
        return Err(TensorError::Shape("factor lengths differ within a level".into()));
    }
    let a = Mat::from_fn(n1, weights.len(), |i, r| g1[r][i] * weights[r]);
    let b = Mat::from_fn(n2, weights.len(), |i, r| g2[r][i]);
    Ok(&a * b.adjoint())
}

fn to_vec(m: MatRef<'_, C64>) -> Vec<C64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        v.extend(m.col(j).iter().copied());
    }
    v
}

/// `X ↦ A⁻¹ X B^{-H}` in place.
fn apply_inverse_pair(lu1: &PartialPivLu<C64>, lu2: &PartialPivLu<C64>, x: &mut Mat<C64>) {
    lu1.solve_in_place(x.as_mut());
    // W = X B^{-H}  ⇔  B W^H = X^H.
    let mut xh = x.adjoint().to_owned();
    lu2.solve_in_place(xh.as_mut());
    *x = xh.adjoint().to_owned();
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TensorPreconditioner {
    None,
    /// `X ↦ Z₁⁻¹ X Z₂^{-H}` from the stored level factorizations.
    #[default]
    Lu,
}

#[derive(Clone, Debug)]
pub struct MomentSolution {
    pub sigma: Mat<C64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `Z₁ Σ Z₂^H = C` by GMRES on `vec(Σ)` without forming `Z₁ ⊗ Z̄₂`.
pub fn solve_moment_block(
    z1: &Mat<C64>,
    z2: &Mat<C64>,
    c: &Mat<C64>,
    precond: Option<(&PartialPivLu<C64>, &PartialPivLu<C64>)>,
    opts: &GmresOptions,
) -> Result<MomentSolution, SolveError> {
    let (n1, n2) = (z1.nrows(), z2.nrows());
    if c.nrows() != n1 || c.ncols() != n2 || z1.ncols() != n1 || z2.ncols() != n2 {
        return Err(SolveError::Dimension { expected: n1 * n2, got: c.nrows() * c.ncols() });
    }
    let op = FnMap {
        dim: n1 * n2,
        f: |x: &[C64]| {
            let xm = MatRef::from_column_major_slice(x, n1, n2);
            let y = z1 * xm * z2.adjoint();
            to_vec(y.as_ref())
        },
    };
    let pre = precond.map(|(lu1, lu2)| FnMap {
        dim: n1 * n2,
        f: move |x: &[C64]| {
            let mut xm = MatRef::from_column_major_slice(x, n1, n2).to_owned();
            apply_inverse_pair(lu1, lu2, &mut xm);
            to_vec(xm.as_ref())
        },
    });
    let b = to_vec(c.as_ref());
    let out = gmres(&op, &b, pre.as_ref().map(|p| p as &dyn crate::solve::LinearMap), opts)?;
    let residual = out.residuals.last().copied().unwrap_or(0.0);
    let mut sigma = Mat::<C64>::zeros(n1, n2);
    copy_into(&out.x, sigma.as_mut());
    Ok(MomentSolution { sigma, iterations: out.iterations, residual })
}

fn copy_into(x: &[C64], mut m: MatMut<'_, C64>) {
    let n1 = m.nrows();
    for j in 0..m.ncols() {
        for i in 0..n1 {
            m[(i, j)] = x[j * n1 + i];
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentBlock {
    pub entry: IndexEntry,
    pub sigma: Mat<C64>,
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TensorOptions {
    pub gmres: GmresOptions,
    pub preconditioner: TensorPreconditioner,
}

impl Default for TensorOptions {
    fn default() -> Self {
        TensorOptions { gmres: GmresOptions { tol: 1e-8, max_iter: 200 }, preconditioner: TensorPreconditioner::Lu }
    }
}

fn level(levels: &[TensorLevel], l: usize) -> Result<&TensorLevel, TensorError> {
    levels.get(l).ok_or(TensorError::Level { level: l, available: levels.len() })
}

/// Solves one level pair with the factorized right-hand side.
pub fn solve_entry(levels: &[TensorLevel], weights: &[f64], entry: IndexEntry, opts: &TensorOptions) -> Result<MomentBlock, TensorError> {
    let start = Instant::now();
    let (a, b) = (level(levels, entry.l1)?, level(levels, entry.l2)?);
    let c = assemble_moment_rhs(weights, &a.rhs, &b.rhs)?;
    let pre = match opts.preconditioner {
        TensorPreconditioner::Lu => match (a.system.lu(), b.system.lu()) {
            (Some(x), Some(y)) => Some((x, y)),
            _ => return Err(TensorError::Shape("level systems are not factorized".into())),
        },
        TensorPreconditioner::None => None,
    };
    let sol = solve_moment_block(&a.system.matrix, &b.system.matrix, &c, pre, &opts.gmres)
        .map_err(|source| TensorError::Block { l1: entry.l1, l2: entry.l2, source })?;
    Ok(MomentBlock { entry, sigma: sol.sigma, iterations: sol.iterations, residual: sol.residual, seconds: start.elapsed().as_secs_f64() })
}

/// Solves every block of the index sets independently, in parallel.
pub fn solve_ct_blocks(levels: &[TensorLevel], weights: &[f64], sets: &IndexSets, opts: &TensorOptions) -> Result<Vec<MomentBlock>, TensorError> {
    if sets.l >= levels.len() {
        return Err(TensorError::Level { level: sets.l, available: levels.len() });
    }
    sets.entries().into_par_iter().map(|e| solve_entry(levels, weights, e, opts)).collect()
}

/// Full tensor solve at level `l`.
pub fn solve_full_tensor(levels: &[TensorLevel], weights: &[f64], l: usize, opts: &TensorOptions) -> Result<MomentBlock, TensorError> {
    solve_entry(levels, weights, IndexEntry { l1: l, l2: l, sign: 1, multiplicity: 1 }, opts)
}

/// Covariance of the far-field shape derivative over (angle, component) indices.
#[derive(Clone, Debug)]
pub struct ObservableCovariance {
    pub n_angles: usize,
    /// Full matrix, when requested.
    pub matrix: Option<Mat<C64>>,
    /// Diagonal, rows `3i + c`.
    pub diag: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct ComponentVariances {
    /// `V[F'_c](θ_i)` per component.
    pub components: [Vec<f64>; 3],
    /// Largest negative diagonal value clamped to zero.
    pub clamped: f64,
}

impl ObservableCovariance {
    pub fn variances(&self) -> ComponentVariances {
        let mut clamped: f64 = 0.0;
        let components = std::array::from_fn(|c| {
            (0..self.n_angles)
                .map(|i| {
                    let v = self.diag[3 * i + c].re;
                    if v < 0.0 {
                        clamped = clamped.max(-v);
                    }
                    v.max(0.0)
                })
                .collect()
        });
        ComponentVariances { components, clamped }
    }

    /// `‖A − A^H‖_F / ‖A‖_F` of the full matrix.
    pub fn hermitian_defect(&self) -> Option<f64> {
        let a = self.matrix.as_ref()?;
        let d = a - a.adjoint();
        let n = a.norm_l2();
        Some(if n > 0.0 { d.norm_l2() / n } else { 0.0 })
    }

    /// Same covariance scaled by `t²`.
    pub fn scaled(&self, t: f64) -> ObservableCovariance {
        let s = t * t;
        ObservableCovariance {
            n_angles: self.n_angles,
            matrix: self.matrix.as_ref().map(|m| m * faer::Scale(C64::new(s, 0.0))),
            diag: self.diag.iter().map(|z| z * s).collect(),
        }
    }
}

/// Signed sum `Σ_{Λ+} − Σ_{Λ−}` of `P_{l1} Σ_{l1,l2} P_{l2}^H`; Hermitian
/// representatives contribute themselves and their adjoint.
pub fn combine_ct(blocks: &[MomentBlock], levels: &[TensorLevel], full: bool) -> Result<ObservableCovariance, TensorError> {
    let rows = levels.first().map_or(0, |l| l.far_field.nrows());
    if !rows.is_multiple_of(3) || levels.iter().any(|l| l.far_field.nrows() != rows) {
        return Err(TensorError::Shape("far-field grids differ between levels".into()));
    }
    let mut matrix = full.then(|| Mat::<C64>::zeros(rows, rows));
    let mut diag = vec![C64::new(0.0, 0.0); rows];
    for b in blocks {
        let e = b.entry;
        let (p1, p2) = (&level(levels, e.l1)?.far_field, &level(levels, e.l2)?.far_field);
        if p1.ncols() != b.sigma.nrows() || p2.ncols() != b.sigma.ncols() {
            return Err(TensorError::Shape(format!("block ({}, {}) does not match its levels", e.l1, e.l2)));
        }
        let s = C64::new(e.sign as f64, 0.0);
        let ps = p1 * &b.sigma;
        for (i, d) in diag.iter_mut().enumerate() {
            let mut v = C64::new(0.0, 0.0);
            for j in 0..ps.ncols() {
                v += ps[(i, j)] * p2[(i, j)].conj();
            }
            *d += s * if e.multiplicity == 2 { v + v.conj() } else { v };
        }
        if let Some(m) = matrix.as_mut() {
            let obs = &ps * p2.adjoint();
            *m += &obs * faer::Scale(s);
            if e.multiplicity == 2 {
                *m += obs.adjoint() * faer::Scale(s);
            }
        }
    }
    Ok(ObservableCovariance { n_angles: rows / 3, matrix, diag })
}

/// Checks that the blocks cover the index sets exactly once.
pub fn check_coverage(blocks: &[MomentBlock], sets: &IndexSets) -> Result<(), TensorError> {
    for e in sets.entries() {
        if !blocks.iter().any(|b| b.entry == e) {
            return Err(TensorError::MissingBlock(e.l1, e.l2));
        }
    }
    Ok(())
}

/// Block sizes and efficiency of the combination technique, in exact integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EfficiencyReport {
    /// `(l1, l2, N_{l1} N_{l2})` per solved block.
    pub blocks: Vec<(usize, usize, u64)>,
    /// `N_L²`.
    pub full: u64,
    /// Sum over the solved blocks.
    pub n_hat: u64,
    /// Sum over all of `Λ`, including mirrored blocks.
    pub n_hat_all: u64,
    pub n_hat_max: u64,
}

impl EfficiencyReport {
    pub fn efficiency(&self) -> f64 {
        self.full as f64 / self.n_hat as f64
    }

    pub fn efficiency_max(&self) -> f64 {
        self.full as f64 / self.n_hat_max as f64
    }

    /// Efficiency with `N_L²` rounded to two significant digits.
    pub fn efficiency_rounded_numerator(&self) -> f64 {
        round_sig(self.full as f64, 2) / self.n_hat as f64
    }
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let e = x.abs().log10().floor() as i32 - digits + 1;
    (x / 10f64.powi(e)).round() * 10f64.powi(e)
}

pub fn efficiency_metrics(dofs: &[u64], sets: &IndexSets) -> Result<EfficiencyReport, TensorError> {
    if dofs.len() <= sets.l {
        return Err(TensorError::Level { level: sets.l, available: dofs.len() });
    }
    if dofs.contains(&0) {
        return Err(TensorError::Shape("dof counts must be positive".into()));
    }
    let size = |a: usize, b: usize| dofs[a] * dofs[b];
    let blocks: Vec<(usize, usize, u64)> = sets.entries().iter().map(|e| (e.l1, e.l2, size(e.l1, e.l2))).collect();
    let n_hat = blocks.iter().map(|b| b.2).sum();
    let n_hat_all = sets.plus.iter().chain(&sets.minus).map(|&(a, b)| size(a, b)).sum();
    let n_hat_max = blocks.iter().map(|b| b.2).max().unwrap_or(0);
    Ok(EfficiencyReport { blocks, full: size(sets.l, sets.l), n_hat, n_hat_all, n_hat_max })
}
