//! Experiment drivers. They return plain numbers; writing files is left to
//! [`crate::output`].

use std::path::Path;
use std::time::Instant;

use fosb::geometry::{
    generate_fichera, generate_kite, generate_sphere, inverted_triangles, perturb_with_displacements, sample_field, sphere_refinement_for,
    KiteField, LevelHierarchy, SurfaceMesh,
};
use fosb::mie::{mie_far_field_sample, MieConfig, MieMaterial};
use fosb::operators::{circle_directions, MediumParameters};
use fosb::shapederiv::{compute_ingredients, foa_far_field, normal_velocity, sd_rhs, solve_sd};
use fosb::solve::{rcs_db, rcs_for_wave, relative_l2, FarFieldSample, PlaneWave, Rcs, ScatteringSystem, TraceSolution};
use fosb::spaces::DivConformingSpace;
use fosb::tensor::{
    build_index_sets, check_coverage, combine_ct, efficiency_metrics, factorize_covariance, prepare_levels, solve_ct_blocks, solve_full_tensor,
    ComponentVariances, EfficiencyReport, MomentBlock, PerturbationModel, TensorOptions, TensorPreconditioner,
};
use fosb::uq::{compare_variances, mc_run, variance_bands, AngleCurve, McConfig, McEstimate, RandomModel, RcsBand};
use fosb::vec3;

use crate::config::{ExperimentConfig, GeometryKind, ModelKind, PreconditionerKind, ProblemKind};

pub const MIE_SLOPE_MIN: f64 = 1.6;
pub const ZOA_SLOPE: (f64, f64) = (0.7, 1.3);
pub const FOA_SLOPE: (f64, f64) = (1.7, 2.3);
pub const CT_VS_FULL_MAX: f64 = 5e-2;
pub const MC_VARIANCE_MAX: f64 = 0.25;
pub const BAND_COVERAGE_MIN: f64 = 0.95;
pub const ITERATION_SPREAD_MAX: usize = 3;
/// Component used for the variance comparisons (`y`).
pub const UQ_COMPONENT: usize = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct RunError {
    pub stage: &'static str,
    pub message: String,
}

fn at<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> RunError {
    move |e| RunError { stage, message: e.to_string() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Verdict { name: name.to_string(), pass, detail }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} ({})", self.name, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(xs: &[usize]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

/// Largest deviation of an iteration count from the median.
pub fn iteration_spread(iterations: &[usize]) -> f64 {
    let m = median(iterations);
    iterations.iter().map(|&i| (i as f64 - m).abs()).fold(0.0, f64::max)
}

/// Meshes of levels `0..=l`.
pub fn level_meshes(cfg: &ExperimentConfig) -> Result<Vec<SurfaceMesh>, RunError> {
    if cfg.geometry == GeometryKind::Mesh {
        let path = cfg.mesh_file.as_deref().ok_or_else(|| at("mesh")("no mesh_file"))?;
        let file = std::fs::File::open(path).map_err(|e| at("mesh")(format!("{}: {e}", path.display())))?;
        let mesh = SurfaceMesh::read_emesh(std::io::BufReader::new(file)).map_err(at("mesh"))?;
        return Ok(vec![mesh]);
    }
    let geometry = cfg.geometry;
    let h = LevelHierarchy::from_precisions(&cfg.precisions[..=cfg.l], cfg.k0, cfg.l0, |h| match geometry {
        GeometryKind::Sphere => Ok(generate_sphere(sphere_refinement_for(h))),
        GeometryKind::Kite => generate_kite(h),
        GeometryKind::Fichera => generate_fichera(h),
        GeometryKind::Mesh => unreachable!("handled above"),
    })
    .map_err(at("mesh"))?;
    Ok(h.meshes)
}

struct Setup {
    wave: PlaneWave,
    params: MediumParameters,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, RunError> {
    Ok(Setup { wave: cfg.wave().map_err(at("wave"))?, params: cfg.medium().map_err(at("medium"))? })
}

fn solve_mesh(cfg: &ExperimentConfig, s: &Setup, mesh: &SurfaceMesh, level: usize) -> Result<(ScatteringSystem, TraceSolution), RunError> {
    let opts = cfg.solver_options();
    let space = DivConformingSpace::with_level(mesh.clone(), level);
    let mut sys = ScatteringSystem::assemble(space, s.params, cfg.problem(), &opts.quadrature).map_err(at("assembly"))?;
    let sol = sys.solve(&s.wave, &opts).map_err(at("solve"))?;
    Ok((sys, sol))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub precision: f64,
    pub h: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub seconds: f64,
    /// Relative error of `RCS_z` on `[0, π]` against the series solution,
    /// when the scatterer is the unit sphere.
    pub error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Deterministic {
    pub rows: Vec<LevelRow>,
    pub rcs: Vec<Rcs>,
    pub reference: Option<Rcs>,
    pub slope: Option<f64>,
}

/// Solves every level; on the unit sphere also compares with the Mie series.
pub fn deterministic(cfg: &ExperimentConfig) -> Result<Deterministic, RunError> {
    let s = setup(cfg)?;
    let meshes = level_meshes(cfg)?;
    let reference = if cfg.geometry == GeometryKind::Sphere {
        let material = match cfg.problem {
            ProblemKind::Pec => MieMaterial::Pec,
            ProblemKind::Dielectric => MieMaterial::Dielectric,
        };
        let mie = MieConfig::new(1.0, s.params, material, s.wave.clone()).map_err(at("mie"))?;
        Some(rcs_for_wave(&mie_far_field_sample(&mie, cfg.n_angles).map_err(at("mie"))?, &s.wave))
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut rcs = Vec::new();
    for (l, mesh) in meshes.iter().enumerate() {
        let start = Instant::now();
        let (sys, sol) = solve_mesh(cfg, &s, mesh, l)?;
        let r = rcs_for_wave(&sys.far_field(&sol, cfg.n_angles), &s.wave);
        let error = reference.as_ref().map(|m| {
            let k = r.theta.iter().take_while(|t| **t <= std::f64::consts::PI).count();
            relative_l2(&r.theta[..k], &r.components[2][..k], &m.components[2][..k])
        });
        rows.push(LevelRow {
            level: l,
            precision: cfg.precisions.get(l).copied().unwrap_or(f64::NAN),
            h: fosb::geometry::mesh_width(mesh),
            dofs: sys.dim(),
            iterations: sol.iterations,
            seconds: start.elapsed().as_secs_f64(),
            error,
        });
        rcs.push(r);
    }
    let slope = if rows.iter().all(|r| r.error.is_some()) {
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let e: Vec<f64> = rows.iter().filter_map(|r| r.error).collect();
        loglog_slope(&h, &e)
    } else {
        None
    };
    Ok(Deterministic { rows, rcs, reference, slope })
}

pub fn sphere_verdicts(d: &Deterministic) -> Vec<Verdict> {
    match d.slope {
        Some(s) => vec![Verdict::new("mie-convergence-slope", s >= MIE_SLOPE_MIN, format!("slope {s:.3}, required >= {MIE_SLOPE_MIN}"))],
        None => vec![],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoaRow {
    pub t: f64,
    /// `‖F_t − F‖ / ‖F_t‖`.
    pub zoa: f64,
    /// `‖F_t − F − t F'‖ / ‖F_t‖`.
    pub foa: f64,
    pub inverted: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FoaStudy {
    pub dofs: usize,
    pub rows: Vec<FoaRow>,
    pub zoa_slope: Option<f64>,
    pub foa_slope: Option<f64>,
    pub nominal: Rcs,
}

fn far_distance(a: &FarFieldSample, b: &FarFieldSample) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| vec3::cnorm(vec3::csub(*x, *y)).powi(2)).sum::<f64>().sqrt()
}

/// Zeroth- and first-order approximations of the far field of the surface
/// moved by `t v̄` with the kite field, on the finest level.
pub fn foa_study(cfg: &ExperimentConfig) -> Result<FoaStudy, RunError> {
    let s = setup(cfg)?;
    let meshes = level_meshes(cfg)?;
    let (l, mesh) = (cfg.l, &meshes[cfg.l]);
    let opts = cfg.solver_options();
    let (mut sys, sol) = solve_mesh(cfg, &s, mesh, l)?;
    let ing = compute_ingredients(&sys.space, &sol, cfg.k0).map_err(at("shape derivative"))?;
    let disp = sample_field(mesh, &KiteField);
    let rhs = sd_rhs(&sys, None, &ing, &normal_velocity(mesh, &disp)).map_err(at("shape derivative"))?;
    let sd = solve_sd(&mut sys, &rhs, &opts).map_err(at("shape derivative"))?;
    let f = sys.far_field(&sol, cfg.n_angles);
    let fp = sys.far_field(&sd, cfg.n_angles);
    let nominal = rcs_for_wave(&f, &s.wave);
    let dofs = sys.dim();
    drop(sys);
    let mut rows = Vec::new();
    for &t in &cfg.t_values {
        let start = Instant::now();
        let moved = perturb_with_displacements(mesh, &disp, t).map_err(at("perturbation"))?;
        let inverted = inverted_triangles(mesh, &moved).len();
        let (st, solt) = solve_mesh(cfg, &s, &moved, l)?;
        let ft = st.far_field(&solt, cfg.n_angles);
        let foa = foa_far_field(&f, &fp, t).map_err(at("shape derivative"))?;
        let norm = ft.values.iter().map(|v| vec3::cnorm(*v).powi(2)).sum::<f64>().sqrt();
        rows.push(FoaRow { t, zoa: far_distance(&ft, &f) / norm, foa: far_distance(&ft, &foa) / norm, inverted, seconds: start.elapsed().as_secs_f64() });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let zoa_slope = loglog_slope(&ts, &rows.iter().map(|r| r.zoa).collect::<Vec<_>>());
    let foa_slope = loglog_slope(&ts, &rows.iter().map(|r| r.foa).collect::<Vec<_>>());
    Ok(FoaStudy { dofs, rows, zoa_slope, foa_slope, nominal })
}

pub fn foa_verdicts(st: &FoaStudy) -> Vec<Verdict> {
    let in_range = |s: Option<f64>, (lo, hi): (f64, f64)| s.is_some_and(|s| (lo..=hi).contains(&s));
    let fmt = |s: Option<f64>| s.map_or("n/a".to_string(), |s| format!("{s:.3}"));
    let small: Vec<&FoaRow> = st.rows.iter().filter(|r| r.t <= 0.5).collect();
    let better = small.iter().all(|r| r.foa < r.zoa);
    let detail = small.iter().map(|r| format!("t={}: foa {:.3e} vs zoa {:.3e}", r.t, r.foa, r.zoa)).collect::<Vec<_>>().join("; ");
    vec![
        Verdict::new("zoa-slope", in_range(st.zoa_slope, ZOA_SLOPE), format!("slope {}, required {:?}", fmt(st.zoa_slope), ZOA_SLOPE)),
        Verdict::new("foa-slope", in_range(st.foa_slope, FOA_SLOPE), format!("slope {}, required {:?}", fmt(st.foa_slope), FOA_SLOPE)),
        Verdict::new("foa-beats-zoa", better && !small.is_empty(), detail),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockRow {
    pub l1: usize,
    pub l2: usize,
    pub sign: i8,
    pub multiplicity: u8,
    pub rows: usize,
    pub cols: usize,
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
}

impl From<&MomentBlock> for BlockRow {
    fn from(b: &MomentBlock) -> Self {
        BlockRow {
            l1: b.entry.l1,
            l2: b.entry.l2,
            sign: b.entry.sign,
            multiplicity: b.entry.multiplicity,
            rows: b.sigma.nrows(),
            cols: b.sigma.ncols(),
            iterations: b.iterations,
            residual: b.residual,
            seconds: b.seconds,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UqStudy {
    pub t: f64,
    pub dims: Vec<usize>,
    pub widths: Vec<f64>,
    pub setup_seconds: Vec<f64>,
    pub nominal_iterations: Vec<usize>,
    pub blocks: Vec<BlockRow>,
    pub full_block: Option<BlockRow>,
    pub efficiency: EfficiencyReport,
    /// Nominal far field on the finest level.
    pub nominal: FarFieldSample,
    /// `t² V[F'_c]` from the combination technique.
    pub ct: ComponentVariances,
    pub full: Option<ComponentVariances>,
    pub bands: [RcsBand; 3],
    pub mc: Option<McEstimate>,
    pub mc_seconds: f64,
    pub ct_vs_full: Option<[f64; 3]>,
    pub mc_variance_error: Option<[f64; 3]>,
    /// Fraction of angles where the RCS of the Monte Carlo mean lies in the band.
    pub coverage: Option<[f64; 3]>,
    pub seconds: f64,
}

impl UqStudy {
    /// Iteration counts of every moment block, full tensor included.
    pub fn iterations(&self) -> Vec<usize> {
        self.blocks.iter().chain(&self.full_block).map(|b| b.iterations).collect()
    }
}

pub fn perturbation_model(kind: ModelKind) -> Option<PerturbationModel> {
    match kind {
        ModelKind::None => None,
        ModelKind::KiteRank1 => Some(PerturbationModel::KiteRank1),
        ModelKind::FicheraSplines => Some(PerturbationModel::FicheraSplines),
    }
}

fn curve(theta: &[f64], values: &[f64]) -> AngleCurve {
    AngleCurve { theta: theta.to_vec(), values: values.to_vec() }
}

/// Combination-technique variance, optional full tensor and Monte Carlo reference.
pub fn uq_study(cfg: &ExperimentConfig) -> Result<UqStudy, RunError> {
    let start = Instant::now();
    let model = perturbation_model(cfg.model).ok_or_else(|| at("model")("no perturbation model configured"))?;
    let s = setup(cfg)?;
    let meshes = level_meshes(cfg)?;
    let cov = factorize_covariance(&model);
    let weights = cov.weights();
    let dirs = circle_directions(cfg.n_angles);
    let opts = cfg.solver_options();
    log_progress(&format!("preparing {} levels", meshes.len()));
    let levels = prepare_levels(&meshes, cfg.problem(), &s.params, &s.wave, &cov, &dirs, &opts).map_err(at("levels"))?;
    let dims: Vec<usize> = levels.iter().map(|l| l.dim()).collect();
    log_progress(&format!("level dimensions {dims:?}"));
    let sets = build_index_sets(cfg.l0, cfg.l, cfg.hermitian).map_err(at("index sets"))?;
    let efficiency = efficiency_metrics(&dims.iter().map(|&d| d as u64).collect::<Vec<_>>(), &sets).map_err(at("index sets"))?;
    let topts = TensorOptions {
        gmres: fosb::solve::GmresOptions { tol: cfg.tol, max_iter: cfg.max_iter },
        preconditioner: match cfg.preconditioner {
            PreconditionerKind::Lu => TensorPreconditioner::Lu,
            PreconditionerKind::None => TensorPreconditioner::None,
        },
    };
    let blocks = solve_ct_blocks(&levels, &weights, &sets, &topts).map_err(at("moment blocks"))?;
    check_coverage(&blocks, &sets).map_err(at("moment blocks"))?;
    let ct = combine_ct(&blocks, &levels, false).map_err(at("combination"))?.scaled(cfg.t).variances();
    let block_rows: Vec<BlockRow> = blocks.iter().map(BlockRow::from).collect();
    drop(blocks);
    let (full, full_block) = if cfg.full_tensor {
        log_progress("solving the full tensor");
        let fb = solve_full_tensor(&levels, &weights, cfg.l, &topts).map_err(at("full tensor"))?;
        let v = combine_ct(std::slice::from_ref(&fb), &levels, false).map_err(at("full tensor"))?.scaled(cfg.t).variances();
        (Some(v), Some(BlockRow::from(&fb)))
    } else {
        (None, None)
    };
    let nominal = FarFieldSample::from_stacked(&levels[cfg.l].nominal_far_field(), cfg.n_angles);
    let setup_seconds = levels.iter().map(|l| l.setup_seconds).collect();
    let nominal_iterations = levels.iter().map(|l| l.nominal.iterations).collect();
    drop(levels);
    let reference = vec3::cnorm(s.wave.p);
    let bands = variance_bands(&nominal, &ct.components, reference).map_err(at("bands"))?;
    let theta = nominal.theta.clone();
    let compare = |a: &[Vec<f64>; 3], b: &[Vec<f64>; 3]| -> Result<[f64; 3], RunError> {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = compare_variances(&curve(&theta, &a[c]), &curve(&theta, &b[c])).map_err(at("comparison"))?;
        }
        Ok(out)
    };
    let ct_vs_full = full.as_ref().map(|f| compare(&ct.components, &f.components)).transpose()?;
    let mc_start = Instant::now();
    let mc = if cfg.mc_runs >= 2 {
        log_progress(&format!("running {} Monte Carlo draws", cfg.mc_runs));
        let mc_cfg = McConfig {
            problem: cfg.problem(),
            params: s.params,
            wave: s.wave.clone(),
            runs: cfg.mc_runs,
            seed: cfg.seed,
            n_angles: cfg.n_angles,
            solver: opts.clone(),
        };
        Some(mc_run(&RandomModel::new(&model, cfg.t), &meshes[cfg.l], &mc_cfg).map_err(at("monte carlo"))?)
    } else {
        None
    };
    let mc_seconds = mc_start.elapsed().as_secs_f64();
    let mc_variance_error = mc.as_ref().map(|m| compare(&ct.components, &m.variance)).transpose()?;
    let coverage = mc.as_ref().map(|m| {
        std::array::from_fn(|c| {
            let mean_rcs: Vec<f64> = m.mean.iter().map(|v| rcs_db(v[c].norm(), reference).0).collect();
            bands[c].coverage(&mean_rcs)
        })
    });
    Ok(UqStudy {
        t: cfg.t,
        widths: meshes.iter().map(fosb::geometry::mesh_width).collect(),
        dims,
        setup_seconds,
        nominal_iterations,
        blocks: block_rows,
        full_block,
        efficiency,
        nominal,
        ct,
        full,
        bands,
        mc,
        mc_seconds,
        ct_vs_full,
        mc_variance_error,
        coverage,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn uq_verdicts(st: &UqStudy) -> Vec<Verdict> {
    let c = UQ_COMPONENT;
    let mut v = Vec::new();
    if let Some(e) = st.ct_vs_full {
        v.push(Verdict::new("ct-vs-full-variance", e[c] <= CT_VS_FULL_MAX, format!("relative L2 {:.3e} (y), required <= {CT_VS_FULL_MAX:e}", e[c])));
    }
    if let Some(e) = st.mc_variance_error {
        v.push(Verdict::new("fosb-vs-mc-variance", e[c] <= MC_VARIANCE_MAX, format!("relative L2 {:.3e} (y), required <= {MC_VARIANCE_MAX}", e[c])));
    }
    if let Some(cov) = st.coverage {
        v.push(Verdict::new("fosb-band-coverage", cov[c] >= BAND_COVERAGE_MIN, format!("{:.1}% of angles (y), required >= {:.0}%", 100.0 * cov[c], 100.0 * BAND_COVERAGE_MIN)));
    }
    let its = st.iterations();
    let spread = iteration_spread(&its);
    v.push(Verdict::new(
        "moment-block-iterations",
        spread <= ITERATION_SPREAD_MAX as f64,
        format!("counts {its:?}, median {}, max deviation {spread}, allowed {ITERATION_SPREAD_MAX}", median(&its)),
    ));
    v
}

pub(crate) fn log_progress(msg: &str) {
    if std::env::var_os("FOSB_QUIET").is_none() {
        eprintln!("fosb-em: {msg}");
    }
}

/// Full output of one experiment.
#[derive(Clone, Debug)]
pub enum Results {
    Deterministic(Deterministic),
    Foa(FoaStudy),
    Uq { deterministic: Option<Deterministic>, uq: UqStudy },
}

impl Results {
    pub fn verdicts(&self) -> Vec<Verdict> {
        match self {
            Results::Deterministic(d) => sphere_verdicts(d),
            Results::Foa(f) => foa_verdicts(f),
            Results::Uq { deterministic, uq } => {
                let mut v = deterministic.as_ref().map(sphere_verdicts).unwrap_or_default();
                v.extend(uq_verdicts(uq));
                v
            }
        }
    }
}

/// Runs the configured experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<Results, RunError> {
    use crate::config::Experiment::*;
    match cfg.experiment {
        SphereConvergence => Ok(Results::Deterministic(deterministic(cfg)?)),
        KiteFoa => Ok(Results::Foa(foa_study(cfg)?)),
        KiteUq | FicheraUq => Ok(Results::Uq { deterministic: None, uq: uq_study(cfg)? }),
        Custom => {
            let d = deterministic(cfg)?;
            if cfg.model == ModelKind::None {
                Ok(Results::Deterministic(d))
            } else {
                Ok(Results::Uq { deterministic: Some(d), uq: uq_study(cfg)? })
            }
        }
    }
}

/// Checks that `dir` exists or can be created.
pub fn prepare_out_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| at("output")(format!("{}: {e}", dir.display())))
}
