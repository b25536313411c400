//! Plane-wave excitation, EFIE and PMCHWT solves, far fields and radar cross
//! sections.

pub mod gmres;

use std::io::Write;
use std::time::Instant;

use faer::linalg::solvers::PartialPivLu;
use faer::Mat;

pub use gmres::{gmres, FnMap, GmresError, GmresOptions, GmresOutcome, LinearMap, LuInverse};

use crate::operators::{
    assemble_layers, circle_directions, far_field_matrix, CurrentKind, MediumParameters, OperatorError, QuadratureOptions,
};
use crate::quadrature::rule7;
use crate::spaces::DivConformingSpace;
use crate::vec3::{self, CVec3, Vec3};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Gmres(#[from] GmresError),
    #[error("invalid plane wave: {0}")]
    Wave(String),
    #[error("right-hand side has length {got}, system has {expected}")]
    Dimension { expected: usize, got: usize },
}

/// `E^inc(x) = p e^{ik d·x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneWave {
    pub p: CVec3,
    pub d: Vec3,
    pub k0: f64,
    /// Norm of the longitudinal part `(p·d)d` removed at construction.
    pub removed: f64,
}

impl PlaneWave {
    /// Normalizes `d` and projects `p` onto the plane orthogonal to it.
    pub fn new(p: CVec3, d: Vec3, k0: f64) -> Result<Self, SolveError> {
        let dn = vec3::norm(d);
        if !(dn.is_finite() && dn > 0.0) {
            return Err(SolveError::Wave(format!("direction {d:?} has no length")));
        }
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(SolveError::Wave(format!("wavenumber {k0}")));
        }
        let d = vec3::scale(1.0 / dn, d);
        let pd = vec3::cdot_r(p, d);
        let p = vec3::csub(p, vec3::cscale(pd, d));
        Ok(PlaneWave { p, d, k0, removed: pd.norm() })
    }

    pub fn phase(&self, x: Vec3) -> C64 {
        C64::from_polar(1.0, self.k0 * vec3::dot(self.d, x))
    }

    pub fn e_field(&self, x: Vec3) -> CVec3 {
        vec3::cmul(self.phase(x), self.p)
    }

    /// `H^inc = d × E^inc` in units where the vacuum impedance is one.
    pub fn h_field(&self, x: Vec3) -> CVec3 {
        vec3::rcross_c(self.d, self.e_field(x))
    }

    /// Rotates direction and polarization by the orthogonal matrix `q`.
    pub fn rotated(&self, q: &[[f64; 3]; 3]) -> PlaneWave {
        let rot = |v: Vec3| [vec3::dot(q[0], v), vec3::dot(q[1], v), vec3::dot(q[2], v)];
        let p = std::array::from_fn(|i| (0..3).map(|j| self.p[j] * q[i][j]).sum());
        PlaneWave { p, d: rot(self.d), k0: self.k0, removed: self.removed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Pec,
    Dielectric,
}

/// How the dense system is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Unpreconditioned GMRES.
    #[default]
    Gmres,
    /// GMRES right-preconditioned by the LU factors of the same matrix.
    GmresLu,
    /// Direct LU solve.
    Direct,
}

#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct SolverOptions {
    pub gmres: GmresOptions,
    pub method: SolverMethod,
    pub quadrature: QuadratureOptions,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { gmres: GmresOptions { tol, ..GmresOptions::default() }, ..Default::default() }
    }
}


/// Surface currents solving the EFIE (`m` absent) or PMCHWT.
#[derive(Clone, Debug)]
pub struct TraceSolution {
    pub problem: Problem,
    pub level: usize,
    pub j: Vec<C64>,
    pub m: Option<Vec<C64>>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

impl TraceSolution {
    /// Stacked coefficient vector `(j, m)`.
    pub fn coefficients(&self) -> Vec<C64> {
        let mut v = self.j.clone();
        if let Some(m) = &self.m {
            v.extend_from_slice(m);
        }
        v
    }

    pub fn from_coefficients(problem: Problem, level: usize, x: Vec<C64>, iterations: usize, residuals: Vec<f64>) -> Self {
        match problem {
            Problem::Pec => TraceSolution { problem, level, j: x, m: None, iterations, residuals },
            Problem::Dielectric => {
                let n = x.len() / 2;
                let m = x[n..].to_vec();
                let mut j = x;
                j.truncate(n);
                TraceSolution { problem, level, j, m: Some(m), iterations, residuals }
            }
        }
    }
}

/// Per-medium single- and double-layer matrices.
pub struct MediumLayers {
    pub l: Mat<C64>,
    pub k: Option<Mat<C64>>,
}

/// Assembled EFIE or PMCHWT system on one mesh level.
pub struct ScatteringSystem {
    pub space: DivConformingSpace,
    pub params: MediumParameters,
    pub problem: Problem,
    /// Exterior layers, and interior ones for dielectrics.
    pub layers: Vec<MediumLayers>,
    pub matrix: Mat<C64>,
    lu: Option<PartialPivLu<C64>>,
    pub assembly_seconds: f64,
}

impl ScatteringSystem {
    pub fn assemble(
        space: DivConformingSpace,
        params: MediumParameters,
        problem: Problem,
        quad: &QuadratureOptions,
    ) -> Result<Self, SolveError> {
        let start = Instant::now();
        let (layers, matrix) = match problem {
            Problem::Pec => {
                let lay = assemble_layers(&space, &space, params.k0, quad, false).map_err(OperatorError::from)?;
                let z = lay.l.clone();
                (vec![MediumLayers { l: lay.l, k: None }], z)
            }
            Problem::Dielectric => {
                let n = space.dim();
                let mut z = Mat::<C64>::zeros(2 * n, 2 * n);
                let mut layers = Vec::new();
                for medium in 0..2 {
                    let lay = assemble_layers(&space, &space, params.k(medium), quad, true).map_err(OperatorError::from)?;
                    let eta = params.eta(medium);
                    let kmat = lay.k.expect("requested");
                    for j in 0..n {
                        for i in 0..n {
                            let l = lay.l[(i, j)];
                            let k = kmat[(i, j)];
                            z[(i, j)] += l * eta;
                            z[(i, n + j)] -= k;
                            z[(n + i, j)] += k;
                            z[(n + i, n + j)] += l / eta;
                        }
                    }
                    layers.push(MediumLayers { l: lay.l, k: Some(kmat) });
                }
                (layers, z)
            }
        };
        Ok(ScatteringSystem { space, params, problem, layers, matrix, lu: None, assembly_seconds: start.elapsed().as_secs_f64() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn factorize(&mut self) {
        if self.lu.is_none() {
            self.lu = Some(self.matrix.partial_piv_lu());
        }
    }

    pub fn lu(&self) -> Option<&PartialPivLu<C64>> {
        self.lu.as_ref()
    }

    /// Right-hand side for incidence `wave`: `−⟨f, E^inc⟩` (and `−⟨f, H^inc⟩`).
    pub fn excitation(&self, wave: &PlaneWave) -> Vec<C64> {
        let e = self.space.project_field(rule7(), |_, x| wave.e_field(x));
        let mut rhs: Vec<C64> = e.into_iter().map(|z| -z).collect();
        if self.problem == Problem::Dielectric {
            let h = self.space.project_field(rule7(), |_, x| wave.h_field(x));
            rhs.extend(h.into_iter().map(|z| -z));
        }
        rhs
    }

    /// Solves with the configured method; GMRES failures carry the best iterate.
    pub fn solve_rhs(&mut self, rhs: &[C64], opts: &SolverOptions) -> Result<GmresOutcome, SolveError> {
        if rhs.len() != self.dim() {
            return Err(SolveError::Dimension { expected: self.dim(), got: rhs.len() });
        }
        match opts.method {
            SolverMethod::Gmres => Ok(gmres(&self.matrix, rhs, None, &opts.gmres)?),
            SolverMethod::GmresLu => {
                self.factorize();
                let p = LuInverse(self.lu.as_ref().expect("factorized"));
                Ok(gmres(&self.matrix, rhs, Some(&p), &opts.gmres)?)
            }
            SolverMethod::Direct => {
                self.factorize();
                let x = LuInverse(self.lu.as_ref().expect("factorized")).apply(rhs);
                let r = self.matrix.apply(&x);
                let num: f64 = r.iter().zip(rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let den: f64 = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let res = if den > 0.0 { num / den } else { 0.0 };
                Ok(GmresOutcome { x, iterations: 0, residuals: vec![res] })
            }
        }
    }

    pub fn solve(&mut self, wave: &PlaneWave, opts: &SolverOptions) -> Result<TraceSolution, SolveError> {
        let rhs = self.excitation(wave);
        let out = self.solve_rhs(&rhs, opts)?;
        Ok(TraceSolution::from_coefficients(self.problem, self.space.level, out.x, out.iterations, out.residuals))
    }

    /// Map from stacked coefficients to far-field amplitudes (rows `3i + c`).
    pub fn far_field_matrix(&self, dirs: &[Vec3]) -> Mat<C64> {
        let k0 = self.params.k0;
        let fe = far_field_matrix(&self.space, k0, 1.0, dirs, CurrentKind::Electric);
        match self.problem {
            Problem::Pec => fe,
            Problem::Dielectric => {
                let fm = far_field_matrix(&self.space, k0, 1.0, dirs, CurrentKind::Magnetic);
                let n = self.space.dim();
                Mat::from_fn(fe.nrows(), 2 * n, |i, j| if j < n { fe[(i, j)] } else { fm[(i, j - n)] })
            }
        }
    }

    pub fn far_field(&self, sol: &TraceSolution, n_angles: usize) -> FarFieldSample {
        let dirs = circle_directions(n_angles);
        let a = self.far_field_matrix(&dirs);
        FarFieldSample::from_stacked(&a.apply(&sol.coefficients()), n_angles)
    }
}

/// Solves the EFIE for a perfectly conducting scatterer.
pub fn solve_efie(space: DivConformingSpace, wave: &PlaneWave, k0: f64, opts: &SolverOptions) -> Result<(ScatteringSystem, TraceSolution), SolveError> {
    let mut sys = ScatteringSystem::assemble(space, MediumParameters::vacuum(k0), Problem::Pec, &opts.quadrature)?;
    let sol = sys.solve(wave, opts)?;
    Ok((sys, sol))
}

/// Solves the PMCHWT equations for a homogeneous dielectric scatterer.
pub fn solve_pmchwt(
    space: DivConformingSpace,
    wave: &PlaneWave,
    params: MediumParameters,
    opts: &SolverOptions,
) -> Result<(ScatteringSystem, TraceSolution), SolveError> {
    let mut sys = ScatteringSystem::assemble(space, params, Problem::Dielectric, &opts.quadrature)?;
    let sol = sys.solve(wave, opts)?;
    Ok((sys, sol))
}

/// Far-field amplitudes on the angle grid `θ_i = 2πi/n` in the `z = 0` plane.
#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldSample {
    pub theta: Vec<f64>,
    pub values: Vec<CVec3>,
}

impl FarFieldSample {
    pub fn from_stacked(f: &[C64], n_angles: usize) -> Self {
        let theta = (0..n_angles).map(|i| 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64).collect();
        let values = (0..n_angles).map(|i| [f[3 * i], f[3 * i + 1], f[3 * i + 2]]).collect();
        FarFieldSample { theta, values }
    }

    pub fn component(&self, c: usize) -> Vec<C64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    pub fn stacked(&self) -> Vec<C64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

/// Floor used when a far-field amplitude or its reference vanishes.
pub const RCS_FLOOR_DB: f64 = -300.0;

/// `10 log10(4π |f|² / |reference|²)`; the flag marks clamped values.
pub fn rcs_db(f: f64, reference: f64) -> (f64, bool) {
    if !(reference > 0.0) || !(f > 0.0) {
        return (RCS_FLOOR_DB, true);
    }
    let v = 10.0 * (4.0 * std::f64::consts::PI * f * f / (reference * reference)).log10();
    if v < RCS_FLOOR_DB {
        (RCS_FLOOR_DB, true)
    } else {
        (v, false)
    }
}

/// Component-wise and total radar cross sections.
#[derive(Clone, Debug, PartialEq)]
pub struct Rcs {
    pub theta: Vec<f64>,
    pub components: [Vec<f64>; 3],
    pub total: Vec<f64>,
    pub clamped: Vec<bool>,
}

pub fn rcs(ff: &FarFieldSample, reference: &[f64]) -> Rcs {
    let n = ff.values.len();
    let mut components = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut total = vec![0.0; n];
    let mut clamped = vec![false; n];
    for (i, v) in ff.values.iter().enumerate() {
        for c in 0..3 {
            let (db, flag) = rcs_db(v[c].norm(), reference[i]);
            components[c][i] = db;
            clamped[i] |= flag;
        }
        let (db, flag) = rcs_db(vec3::cnorm(*v), reference[i]);
        total[i] = db;
        clamped[i] |= flag;
    }
    Rcs { theta: ff.theta.clone(), components, total, clamped }
}

/// RCS relative to the incident amplitude `|p|` at every angle.
pub fn rcs_for_wave(ff: &FarFieldSample, wave: &PlaneWave) -> Rcs {
    let r = vec3::cnorm(wave.p);
    rcs(ff, &vec![r; ff.values.len()])
}

/// Writes `theta,rcs_x,rcs_y,rcs_z` rows after `#`-prefixed comment lines.
pub fn write_rcs_csv<W: Write>(mut w: W, comments: &[String], r: &Rcs) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "theta,rcs_x,rcs_y,rcs_z")?;
    for i in 0..r.theta.len() {
        writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e}", r.theta[i], r.components[0][i], r.components[1][i], r.components[2][i])?;
    }
    Ok(())
}

/// Relative `L²` distance of `a` from `b` on `[θ_0, θ_end]` by the trapezoid rule.
pub fn relative_l2(theta: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let trap = |f: &dyn Fn(usize) -> f64| -> f64 {
        (1..theta.len()).map(|i| 0.5 * (f(i) + f(i - 1)) * (theta[i] - theta[i - 1])).sum()
    };
    let num = trap(&|i| (a[i] - b[i]).powi(2));
    let den = trap(&|i| b[i].powi(2));
    (num / den).sqrt()
}

/// Relative `L²` distance on a periodic uniform grid over `[0, 2π)`.
pub fn relative_l2_periodic(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
