//! Monte Carlo reference for random boundary perturbations, variance bands
//! of the radar cross section and variance comparisons.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{perturb_with_displacements, MeshError, SurfaceMesh};
use crate::operators::MediumParameters;
use crate::solve::{rcs_db, relative_l2_periodic, FarFieldSample, PlaneWave, Problem, ScatteringSystem, SolveError, SolverOptions};
use crate::spaces::build_space;
use crate::tensor::{factorize_covariance, CovarianceFactorization, PerturbationModel};
use crate::vec3::{CVec3, Vec3};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum UqError {
    #[error("Monte Carlo needs at least 2 runs, got {0}")]
    Runs(usize),
    #[error("draw {index}: {source}")]
    DrawMesh { index: usize, source: MeshError },
    #[error("draw {index}: {source}")]
    DrawSolve { index: usize, source: SolveError },
    #[error("angle grids differ")]
    Grid,
    #[error("negative variance {0:e}")]
    NegativeVariance(f64),
}

/// Random velocity `t Σ_r c_r v_r` with independent uniform coefficients.
#[derive(Clone, Debug)]
pub struct RandomModel {
    pub cov: CovarianceFactorization,
    pub t: f64,
}

impl RandomModel {
    pub fn new(model: &PerturbationModel, t: f64) -> Self {
        RandomModel { cov: factorize_covariance(model), t }
    }

    /// Independent stream for run `run` of the experiment seeded with `seed`.
    pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        rng
    }

    /// Vertex displacements of one draw, already scaled by `t`.
    pub fn draw(&self, mesh: &SurfaceMesh, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        let c: Vec<f64> = self.cov.sample_coefficients(rng).into_iter().map(|x| self.t * x).collect();
        self.cov.displacement(mesh, &c)
    }
}

#[derive(Clone, Debug)]
pub struct McConfig {
    pub problem: Problem,
    pub params: MediumParameters,
    pub wave: PlaneWave,
    pub runs: usize,
    pub seed: u64,
    pub n_angles: usize,
    pub solver: SolverOptions,
}

/// Per-angle sample moments over the Monte Carlo draws.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub runs: usize,
    pub seed: u64,
    pub t: f64,
    pub theta: Vec<f64>,
    /// Sample mean of the far field.
    pub mean: Vec<CVec3>,
    /// Unbiased sample variance `Σ |F_c − mean|² / (M − 1)` per component.
    pub variance: [Vec<f64>; 3],
    /// Sample mean and variance of the component RCS in dB.
    pub rcs_mean: [Vec<f64>; 3],
    pub rcs_variance: [Vec<f64>; 3],
    /// GMRES iterations per draw.
    pub iterations: Vec<usize>,
}

impl McEstimate {
    pub fn mean_far_field(&self) -> FarFieldSample {
        FarFieldSample { theta: self.theta.clone(), values: self.mean.clone() }
    }
}

/// Count, mean and sum of squared deviations of a group of samples.
#[derive(Clone, Debug)]
struct Moments<T> {
    n: f64,
    mean: Vec<T>,
    m2: Vec<f64>,
}

/// Pairwise merge of ordered leaves; the tree shape depends only on the
/// number of samples, so the result is independent of scheduling.
fn tree_moments<T>(samples: &[Vec<T>], zero: T, norm_sqr: fn(T) -> f64, scale: fn(T, f64) -> T, add: fn(T, T) -> T, sub: fn(T, T) -> T) -> Moments<T>
where
    T: Copy,
{
    if samples.len() == 1 {
        return Moments { n: 1.0, mean: samples[0].clone(), m2: vec![0.0; samples[0].len()] };
    }
    let mid = samples.len() / 2;
    let a = tree_moments(&samples[..mid], zero, norm_sqr, scale, add, sub);
    let b = tree_moments(&samples[mid..], zero, norm_sqr, scale, add, sub);
    let n = a.n + b.n;
    let mut mean = vec![zero; a.mean.len()];
    let mut m2 = vec![0.0; a.mean.len()];
    for i in 0..mean.len() {
        let delta = sub(b.mean[i], a.mean[i]);
        mean[i] = add(a.mean[i], scale(delta, b.n / n));
        m2[i] = a.m2[i] + b.m2[i] + norm_sqr(delta) * a.n * b.n / n;
    }
    Moments { n, mean, m2 }
}

/// Sample mean and unbiased variance of complex samples, entry by entry.
pub fn sample_moments(samples: &[Vec<C64>]) -> (Vec<C64>, Vec<f64>) {
    let m = tree_moments(samples, C64::new(0.0, 0.0), |z| z.norm_sqr(), |z, s| z * s, |a, b| a + b, |a, b| a - b);
    let d = (samples.len() as f64 - 1.0).max(1.0);
    (m.mean, m.m2.into_iter().map(|v| v / d).collect())
}

/// Same for real samples.
pub fn sample_moments_real(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = tree_moments(samples, 0.0, |x| x * x, |x, s| x * s, |a, b| a + b, |a, b| a - b);
    let d = (samples.len() as f64 - 1.0).max(1.0);
    (m.mean, m.m2.into_iter().map(|v| v / d).collect())
}

fn split_components(stacked: &[f64], n: usize) -> [Vec<f64>; 3] {
    std::array::from_fn(|c| (0..n).map(|i| stacked[3 * i + c]).collect())
}

/// One perturbed solve; returns the stacked far field and the iteration count.
fn mc_draw(model: &RandomModel, mesh: &SurfaceMesh, cfg: &McConfig, index: usize) -> Result<(Vec<C64>, usize), UqError> {
    let mut rng = RandomModel::run_rng(cfg.seed, index);
    let disp = model.draw(mesh, &mut rng);
    let moved = perturb_with_displacements(mesh, &disp, 1.0).map_err(|source| UqError::DrawMesh { index, source })?;
    let solve = || -> Result<_, SolveError> {
        let mut sys = ScatteringSystem::assemble(build_space(&moved), cfg.params, cfg.problem, &cfg.solver.quadrature)?;
        let sol = sys.solve(&cfg.wave, &cfg.solver)?;
        Ok((sys.far_field(&sol, cfg.n_angles).stacked(), sol.iterations))
    };
    solve().map_err(|source| UqError::DrawSolve { index, source })
}

/// Monte Carlo estimate of far-field moments on `mesh`; draws run in parallel
/// on the current rayon pool.
pub fn mc_run(model: &RandomModel, mesh: &SurfaceMesh, cfg: &McConfig) -> Result<McEstimate, UqError> {
    if cfg.runs < 2 {
        return Err(UqError::Runs(cfg.runs));
    }
    let draws: Vec<Result<(Vec<C64>, usize), UqError>> = (0..cfg.runs).into_par_iter().map(|i| mc_draw(model, mesh, cfg, i)).collect();
    let mut fields = Vec::with_capacity(cfg.runs);
    let mut iterations = Vec::with_capacity(cfg.runs);
    for d in draws {
        let (f, it) = d?;
        fields.push(f);
        iterations.push(it);
    }
    let n = cfg.n_angles;
    let reference = crate::vec3::cnorm(cfg.wave.p);
    let rcs: Vec<Vec<f64>> = fields.iter().map(|f| f.iter().map(|z| rcs_db(z.norm(), reference).0).collect()).collect();
    let (mean, var) = sample_moments(&fields);
    let (rcs_mean, rcs_var) = sample_moments_real(&rcs);
    let theta = (0..n).map(|i| 2.0 * std::f64::consts::PI * i as f64 / n as f64).collect();
    Ok(McEstimate {
        runs: cfg.runs,
        seed: cfg.seed,
        t: model.t,
        theta,
        mean: (0..n).map(|i| [mean[3 * i], mean[3 * i + 1], mean[3 * i + 2]]).collect(),
        variance: split_components(&var, n),
        rcs_mean: split_components(&rcs_mean, n),
        rcs_variance: split_components(&rcs_var, n),
        iterations,
    })
}

/// RCS band `|F_c| ± 2σ_c` of one component, in dB.
#[derive(Clone, Debug, PartialEq)]
pub struct RcsBand {
    pub theta: Vec<f64>,
    pub mean_rcs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `σ_c²`.
    pub variance: Vec<f64>,
}

impl RcsBand {
    /// Fraction of angles where `curve` lies inside the band.
    pub fn coverage(&self, curve: &[f64]) -> f64 {
        let inside = curve.iter().enumerate().filter(|&(i, &v)| self.lower[i] <= v && v <= self.upper[i]).count();
        inside as f64 / curve.len().max(1) as f64
    }
}

/// Bands for all three components; the lower amplitude is clamped at zero.
pub fn variance_bands(mean: &FarFieldSample, variance: &[Vec<f64>; 3], reference: f64) -> Result<[RcsBand; 3], UqError> {
    let n = mean.values.len();
    if variance.iter().any(|v| v.len() != n) {
        return Err(UqError::Grid);
    }
    if let Some(v) = variance.iter().flatten().find(|v| !(**v >= 0.0)) {
        return Err(UqError::NegativeVariance(*v));
    }
    Ok(std::array::from_fn(|c| {
        let mut band = RcsBand { theta: mean.theta.clone(), mean_rcs: vec![], lower: vec![], upper: vec![], variance: variance[c].clone() };
        for i in 0..n {
            let a = mean.values[i][c].norm();
            let s = variance[c][i].sqrt();
            band.mean_rcs.push(rcs_db(a, reference).0);
            band.lower.push(rcs_db((a - 2.0 * s).max(0.0), reference).0);
            band.upper.push(rcs_db(a + 2.0 * s, reference).0);
        }
        band
    }))
}

/// A real curve on the periodic angle grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleCurve {
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
}

/// `‖a − b‖ / ‖b‖` in `L²([0, 2π))` by the trapezoid rule.
pub fn compare_variances(a: &AngleCurve, b: &AngleCurve) -> Result<f64, UqError> {
    if a.theta != b.theta || a.values.len() != b.values.len() {
        return Err(UqError::Grid);
    }
    Ok(relative_l2_periodic(&a.values, &b.values))
}

/// Writes `theta,mean_rcs_c,lower_c,upper_c,var_c` for `c = x, y, z`.
pub fn write_uq_csv<W: Write>(mut w: W, comments: &[String], bands: &[RcsBand; 3]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let names = ["x", "y", "z"];
    let header: Vec<String> = names.iter().map(|c| format!("mean_rcs_{c},lower_{c},upper_{c},var_{c}")).collect();
    writeln!(w, "theta,{}", header.join(","))?;
    for i in 0..bands[0].theta.len() {
        write!(w, "{:.17e}", bands[0].theta[i])?;
        for b in bands {
            write!(w, ",{:.17e},{:.17e},{:.17e},{:.17e}", b.mean_rcs[i], b.lower[i], b.upper[i], b.variance[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
