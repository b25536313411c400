//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Verdicts are reported, not asserted: the process fails only when a
//! criterion cannot be evaluated, or on any FAIL when
//! `FOSB_ACCEPTANCE_STRICT=1`. `FOSB_ACCEPTANCE=1,3,9` selects criteria.

use std::time::Instant;

use faer::Mat;
use fosb_cli::config::{Experiment, ExperimentConfig};
use fosb_cli::experiments::{deterministic, foa_study, foa_verdicts, iteration_spread, uq_study, UqStudy, UQ_COMPONENT};
use fosb_cli::fosb::geometry::{generate_sphere, geodesic_sphere};
use fosb_cli::fosb::operators::{assemble_efio, circle_directions, MediumParameters};
use fosb_cli::fosb::shapederiv::{compute_ingredients, normal_velocity, sd_rhs, solve_sd};
use fosb_cli::fosb::solve::{GmresOptions, PlaneWave, Problem, ScatteringSystem, SolverMethod, SolverOptions};
use fosb_cli::fosb::spaces::{build_space, pairing_matrix};
use fosb_cli::fosb::tensor::{
    build_index_sets, combine_ct, efficiency_metrics, factorize_covariance, prepare_levels, solve_ct_blocks, solve_full_tensor,
    solve_moment_block, PerturbationModel, TensorOptions,
};
use fosb_cli::fosb::uq::{mc_run, McConfig, RandomModel};
use fosb_cli::fosb::vec3;
use fosb_cli::fosb::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn wave(k0: f64) -> PlaneWave {
    PlaneWave::new([c(0.0, 1.0), c(2.0, 0.0), c(-1.0, -1.0 / 3.0)], [1.0, 2.0, 3.0], k0).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn frob_rel(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    (a - b).norm_l2() / b.norm_l2()
}

fn within_budget(start: Instant, minutes: f64) -> (bool, String) {
    let s = start.elapsed().as_secs_f64();
    (s <= 60.0 * minutes, format!("{s:.1} s of {minutes} min"))
}

fn mie_convergence() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(Experiment::SphereConvergence);
    let d = deterministic(&cfg).map_err(err)?;
    let slope = d.slope.ok_or("no slope")?;
    let errors: Vec<String> = d.rows.iter().map(|r| format!("r={} N={} err={:.3e}", r.precision, r.dofs, r.error.unwrap_or(f64::NAN))).collect();
    let decreasing = d.rows.windows(2).all(|w| w[1].error < w[0].error);
    let (in_time, time) = within_budget(start, 15.0);
    Ok((slope >= 1.6 && decreasing && in_time, format!("slope {slope:.3} >= 1.6; {}; {time}", errors.join(", "))))
}

fn rank_one_exactness() -> Outcome {
    let tol = 1e-8;
    let k0 = 3.0;
    let w = wave(k0);
    let params = MediumParameters::new(k0, 2.1, 1.0).map_err(err)?;
    let opts = SolverOptions::with_tol(1e-12);
    let mut sys = ScatteringSystem::assemble(build_space(&generate_sphere(1)), params, Problem::Dielectric, &opts.quadrature).map_err(err)?;
    let f = sys.excitation(&w);
    // ξ from unpreconditioned vector GMRES; Σ from the LU-preconditioned tensor solve.
    let xi = sys.solve_rhs(&f, &opts).map_err(err)?.x;
    sys.factorize();
    let lu = sys.lu().ok_or("no factorization")?;
    let n = f.len();
    let cmat = Mat::from_fn(n, n, |i, j| f[i] * f[j].conj());
    let want = Mat::from_fn(n, n, |i, j| xi[i] * xi[j].conj());
    let sol = solve_moment_block(&sys.matrix, &sys.matrix, &cmat, Some((lu, lu)), &GmresOptions { tol, max_iter: 50 }).map_err(err)?;
    let e = frob_rel(&sol.sigma, &want);
    Ok((e <= 10.0 * tol, format!("relative Frobenius {e:.3e} <= {:.0e}, N = {n}, {} iterations", 10.0 * tol, sol.iterations)))
}

fn fichera_arithmetic() -> Outcome {
    let dofs = [270u64, 792, 3204];
    let sets = build_index_sets(0, 2, true).map_err(err)?;
    let rep = efficiency_metrics(&dofs, &sets).map_err(err)?;
    let want_blocks = [(2, 0, 3204 * 270), (1, 1, 792 * 792), (1, 0, 792 * 270)];
    let sizes_ok = rep.blocks == want_blocks && want_blocks.map(|b| b.2) == [865_080, 627_264, 213_840];
    let totals_ok = rep.full == 10_265_616 && rep.n_hat == 1_706_184;
    let eff = rep.efficiency();
    let eff_ok = (eff * 1000.0).round() == 6017.0;
    Ok((
        sizes_ok && totals_ok && eff_ok,
        format!(
            "blocks {:?}, full {}, N_hat {}, efficiency {eff:.3}, rounded-numerator efficiency {:.3}",
            rep.blocks.iter().map(|b| b.2).collect::<Vec<_>>(),
            rep.full,
            rep.n_hat,
            rep.efficiency_rounded_numerator()
        ),
    ))
}

fn kite_foa() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(Experiment::KiteFoa);
    let st = foa_study(&cfg).map_err(err)?;
    let verdicts = foa_verdicts(&st);
    let rows: Vec<String> = st.rows.iter().map(|r| format!("t={} zoa={:.3e} foa={:.3e}", r.t, r.zoa, r.foa)).collect();
    let (in_time, time) = within_budget(start, 30.0);
    let detail = verdicts.iter().map(|v| v.to_string()).chain(rows).chain([format!("N = {}", st.dofs), time]).collect::<Vec<_>>().join("; ");
    Ok((verdicts.iter().all(|v| v.pass) && in_time, detail))
}

fn translation_error(problem: Problem) -> Result<f64, String> {
    let k0 = 3.0;
    let w = wave(k0);
    let params = match problem {
        Problem::Pec => MediumParameters::vacuum(k0),
        Problem::Dielectric => MediumParameters::new(k0, 2.1, 1.0).map_err(err)?,
    };
    let opts = SolverOptions { method: SolverMethod::Direct, ..SolverOptions::with_tol(1e-10) };
    let mesh = generate_sphere(3);
    let mut sys = ScatteringSystem::assemble(build_space(&mesh), params, problem, &opts.quadrature).map_err(err)?;
    let sol = sys.solve(&w, &opts).map_err(err)?;
    let tau = [0.3, -0.5, 0.2];
    let ing = compute_ingredients(&sys.space, &sol, k0).map_err(err)?;
    let rhs = sd_rhs(&sys, None, &ing, &normal_velocity(&mesh, &vec![tau; mesh.num_vertices()])).map_err(err)?;
    let sd = solve_sd(&mut sys, &rhs, &opts).map_err(err)?;
    let n = 360;
    let f = sys.far_field(&sol, n);
    let fp = sys.far_field(&sd, n);
    let dirs = circle_directions(n);
    // A translated scatterer radiates the same pattern times exp(ik(d − x̂)·τ).
    let want: Vec<_> = f.values.iter().zip(&dirs).map(|(v, x)| vec3::cmul(c(0.0, k0 * vec3::dot(vec3::sub(w.d, *x), tau)), *v)).collect();
    let num: f64 = fp.values.iter().zip(&want).map(|(a, b)| vec3::cnorm(vec3::csub(*a, *b)).powi(2)).sum();
    let den: f64 = want.iter().map(|b| vec3::cnorm(*b).powi(2)).sum();
    Ok((num / den).sqrt())
}

fn translation_identity() -> Outcome {
    let start = Instant::now();
    let de = translation_error(Problem::Dielectric)?;
    let pec = translation_error(Problem::Pec)?;
    let (in_time, time) = within_budget(start, 10.0);
    Ok((de <= 0.05 && pec <= 0.05 && in_time, format!("dielectric {de:.3e}, conductor {pec:.3e}, required <= 5e-2; {time}")))
}

fn ct_vs_full(st: &UqStudy) -> Outcome {
    let e = st.ct_vs_full.ok_or("full tensor not computed")?;
    let c = UQ_COMPONENT;
    let fb = st.full_block.as_ref().ok_or("no full block")?;
    let ct_seconds: f64 = st.setup_seconds.iter().sum::<f64>() + st.blocks.iter().map(|b| b.seconds).sum::<f64>() + fb.seconds;
    let in_time = ct_seconds <= 3600.0;
    Ok((
        e[c] <= 5e-2 && in_time,
        format!(
            "relative L2 of sigma^2_y {:.3e} <= 5e-2 (x {:.3e}, z {:.3e}); dims {:?}; {ct_seconds:.0} s of 60 min",
            e[c], e[0], e[2], st.dims
        ),
    ))
}

fn fosb_vs_mc(st: &UqStudy) -> Outcome {
    let e = st.mc_variance_error.ok_or("Monte Carlo not run")?;
    let cov = st.coverage.ok_or("Monte Carlo not run")?;
    let c = UQ_COMPONENT;
    let in_time = st.seconds <= 5400.0;
    Ok((
        e[c] <= 0.25 && cov[c] >= 0.95 && in_time,
        format!(
            "relative L2 of sigma^2_y {:.3e} <= 0.25 (x {:.3e}, z {:.3e}); band coverage {:.1}% >= 95% (x {:.1}%, z {:.1}%); M = {}; {:.0} s of 90 min",
            e[c],
            e[0],
            e[2],
            100.0 * cov[c],
            100.0 * cov[0],
            100.0 * cov[2],
            st.mc.as_ref().map_or(0, |m| m.runs),
            st.seconds
        ),
    ))
}

fn iteration_robustness(st: &UqStudy) -> Outcome {
    let its = st.iterations();
    let spread = iteration_spread(&its);
    Ok((spread <= 3.0, format!("iterations {its:?}, max deviation from median {spread} <= 3 (LU-preconditioned tensor GMRES)")))
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| c(rng.random_range(-0.5..0.5) + if i == j { shift } else { 0.0 }, rng.random_range(-0.5..0.5)))
}

fn property_suites() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        notes.push(format!("{name} {} ({detail})", if pass { "ok" } else { "FAILED" }));
    };

    let space = build_space(&generate_sphere(1));
    let b = pairing_matrix(&space, &space).map_err(err)?;
    let anti = (&b + b.transpose()).norm_max();
    check("pairing antisymmetry", anti == 0.0, format!("max |B + B^T| = {anti:e}"));

    let efio = assemble_efio(&space, &space, 3.0).map_err(err)?.matrix;
    let sym = (&efio - efio.transpose()).norm_l2() / efio.norm_l2();
    check("EFIO complex symmetry", sym <= 1e-10, format!("{sym:.1e}"));

    // All levels equal: the signed sum collapses to one full-tensor block.
    let k0 = 2.0;
    let w = wave(k0);
    let params = MediumParameters::new(k0, 2.1, 1.0).map_err(err)?;
    let opts = SolverOptions::with_tol(1e-10);
    let cov = factorize_covariance(&PerturbationModel::KiteRank1);
    let mesh = geodesic_sphere(1);
    let dirs = circle_directions(24);
    let levels = prepare_levels(&vec![mesh.clone(); 3], Problem::Dielectric, &params, &w, &cov, &dirs, &opts).map_err(err)?;
    let topts = TensorOptions { gmres: GmresOptions { tol: 1e-12, max_iter: 50 }, ..Default::default() };
    let sets = build_index_sets(0, 2, true).map_err(err)?;
    let blocks = solve_ct_blocks(&levels, &cov.weights(), &sets, &topts).map_err(err)?;
    let ct = combine_ct(&blocks, &levels, true).map_err(err)?;
    let full = combine_ct(&[solve_full_tensor(&levels, &cov.weights(), 2, &topts).map_err(err)?], &levels, true).map_err(err)?;
    let (a, f) = (ct.matrix.as_ref().unwrap(), full.matrix.as_ref().unwrap());
    let tele = frob_rel(a, f);
    check("CT telescoping", tele <= 1e-9, format!("{tele:.1e}"));

    let herm = full.hermitian_defect().unwrap();
    let eig = f.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|e| format!("{e:?}"))?;
    let lam_max = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let lam_min = eig.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    check(
        "covariance Hermitian-PSD",
        herm <= 1e-12 && lam_min >= -1e-10 * lam_max && ct.hermitian_defect().unwrap() <= 1e-12,
        format!("defect {herm:.1e}, min eigenvalue / max {:.1e}", lam_min / lam_max),
    );

    // Explicit Kronecker system (conj(Z2) ⊗ Z1) vec Σ = vec C, column-major.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n1, n2) = (20, 12);
    let (z1, z2) = (random_matrix(&mut rng, n1, 4.0), random_matrix(&mut rng, n2, 4.0));
    let cm = Mat::from_fn(n1, n2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let tol = 1e-10;
    let sol = solve_moment_block(&z1, &z2, &cm, None, &GmresOptions { tol, max_iter: 400 }).map_err(err)?;
    let kron = Mat::from_fn(n1 * n2, n1 * n2, |r, s| z2[(r / n1, s / n1)].conj() * z1[(r % n1, s % n1)]);
    let mut rhs = Mat::from_fn(n1 * n2, 1, |r, _| cm[(r % n1, r / n1)]);
    faer::linalg::solvers::Solve::solve_in_place(&kron.partial_piv_lu(), rhs.as_mut());
    let brute = Mat::from_fn(n1, n2, |i, j| rhs[(i + n1 * j, 0)]);
    let kr = frob_rel(&sol.sigma, &brute);
    check("Kronecker brute force", kr <= 10.0 * tol, format!("{kr:.1e}, {} iterations", sol.iterations));

    let small = geodesic_sphere(1);
    let mc = |t: f64, seed: u64| {
        let cfg = McConfig { problem: Problem::Pec, params: MediumParameters::vacuum(k0), wave: w.clone(), runs: 4, seed, n_angles: 12, solver: opts.clone() };
        mc_run(&RandomModel::new(&PerturbationModel::KiteRank1, t), &small, &cfg).map_err(err)
    };
    let zero = mc(0.0, 3)?;
    let max_var = zero.variance.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    check("t=0 MC variance", max_var == 0.0, format!("max {max_var:e}"));

    let (r1, r2, r3) = (mc(0.1, 3)?, mc(0.1, 3)?, mc(0.1, 4)?);
    check("seeded reproducibility", r1 == r2 && r1 != r3, "same seed equal, different seed differs".into());

    let (in_time, time) = within_budget(start, 5.0);
    Ok((ok && in_time, format!("{}; {time}", notes.join("; "))))
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("FOSB_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("FOSB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |n: usize| selected.as_ref().is_none_or(|s| s.contains(&n));
    // Progress messages of the experiment drivers would interleave with the verdicts.
    std::env::set_var("FOSB_QUIET", "1");

    let mut failed = 0;
    let mut errored = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        match outcome {
            Ok((pass, detail)) => {
                println!("criterion {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
                if !pass {
                    failed += 1;
                }
            }
            Err(e) => {
                println!("criterion {n} {name}: ERROR ({e})");
                errored += 1;
            }
        }
    };

    if wanted(1) {
        report(1, "mie-convergence", mie_convergence());
    }
    if wanted(2) {
        report(2, "rank-one-exactness", rank_one_exactness());
    }
    if wanted(3) {
        report(3, "fichera-arithmetic", fichera_arithmetic());
    }
    if wanted(4) {
        report(4, "kite-foa-order", kite_foa());
    }
    if wanted(5) {
        report(5, "translation-identity", translation_identity());
    }
    if wanted(6) || wanted(7) || wanted(8) {
        let mut cfg = ExperimentConfig::defaults(Experiment::KiteUq);
        cfg.mc_runs = if wanted(7) { 100 } else { 0 };
        cfg.full_tensor = wanted(6);
        match uq_study(&cfg) {
            Ok(st) => {
                if wanted(6) {
                    report(6, "ct-vs-full-tensor", ct_vs_full(&st));
                }
                if wanted(7) {
                    report(7, "fosb-vs-monte-carlo", fosb_vs_mc(&st));
                }
                if wanted(8) {
                    report(8, "moment-block-iterations", iteration_robustness(&st));
                }
            }
            Err(e) => {
                for (n, name) in [(6, "ct-vs-full-tensor"), (7, "fosb-vs-monte-carlo"), (8, "moment-block-iterations")] {
                    if wanted(n) {
                        report(n, name, Err(e.to_string()));
                    }
                }
            }
        }
    }
    if wanted(9) {
        report(9, "property-suites", property_suites());
    }

    println!("acceptance: {failed} failed, {errored} errored");
    if errored > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
