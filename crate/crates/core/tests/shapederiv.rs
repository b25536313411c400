use fosb::geometry::*;
use fosb::mie::{mie_surface_normal_field, MieConfig, MieMaterial};
use fosb::operators::{circle_directions, MediumParameters};
use fosb::shapederiv::*;
use fosb::solve::*;
use fosb::spaces::{build_space, ScalarSurfaceField};
use fosb::vec3::{self, Vec3};
use fosb::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn direct() -> SolverOptions {
    SolverOptions { method: SolverMethod::Direct, ..SolverOptions::with_tol(1e-10) }
}

fn wave(k0: f64) -> PlaneWave {
    PlaneWave::new([c(0.0, 1.0), c(2.0, 0.0), c(-1.0, -1.0 / 3.0)], [1.0, 2.0, 3.0], k0).unwrap()
}

fn far_norm(f: &FarFieldSample) -> f64 {
    f.values.iter().map(|v| vec3::cnorm(*v).powi(2)).sum::<f64>().sqrt()
}

fn far_dist(a: &FarFieldSample, b: &FarFieldSample) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| vec3::cnorm(vec3::csub(*x, *y)).powi(2)).sum::<f64>().sqrt()
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Under a rigid translation `τ` the far field picks up the phase `e^{ik(d − x̂)·τ}`.
fn translation_error(sys: &mut ScatteringSystem, sol: &TraceSolution, k0: f64, w: &PlaneWave) -> f64 {
    let tau: Vec3 = [0.3, -0.5, 0.2];
    let mesh = sys.space.mesh().clone();
    let ing = compute_ingredients(&sys.space, sol, k0).unwrap();
    let vn = normal_velocity(&mesh, &vec![tau; mesh.num_vertices()]);
    let rhs = sd_rhs(sys, None, &ing, &vn).unwrap();
    let sd = solve_sd(sys, &rhs, &direct()).unwrap();
    let n = 180;
    let f = sys.far_field(sol, n);
    let fp = sys.far_field(&sd, n);
    let dirs = circle_directions(n);
    let want = FarFieldSample {
        theta: f.theta.clone(),
        values: f
            .values
            .iter()
            .zip(&dirs)
            .map(|(v, x)| vec3::cmul(c(0.0, k0 * vec3::dot(vec3::sub(w.d, *x), tau)), *v))
            .collect(),
    };
    far_dist(&fp, &want) / far_norm(&want)
}

#[test]
fn translation_identity_conductor() {
    let k0 = 3.0;
    let w = wave(k0);
    let (mut sys, sol) = solve_efie(build_space(&generate_sphere(3)), &w, k0, &direct()).unwrap();
    let e = translation_error(&mut sys, &sol, k0, &w);
    assert!(e <= 5e-2, "{e}");
}

#[test]
fn translation_identity_dielectric() {
    let k0 = 3.0;
    let w = wave(k0);
    let params = MediumParameters::new(k0, 2.1, 1.0).unwrap();
    let (mut sys, sol) = solve_pmchwt(build_space(&generate_sphere(3)), &w, params, &direct()).unwrap();
    let e = translation_error(&mut sys, &sol, k0, &w);
    assert!(e <= 5e-2, "{e}");
}

#[test]
fn normal_field_matches_mie_on_conducting_sphere() {
    let k0 = 3.0;
    let w = wave(k0);
    let errs: Vec<f64> = (1..=3)
        .map(|r| {
            let mesh = generate_sphere(r);
            let (sys, sol) = solve_efie(build_space(&mesh), &w, k0, &direct()).unwrap();
            let ing = compute_ingredients(&sys.space, &sol, k0).unwrap();
            let got = ing.e_n_vertex(&mesh).values;
            let cfg = MieConfig::new(1.0, MediumParameters::vacuum(k0), MieMaterial::Pec, w.clone()).unwrap();
            let want = mie_surface_normal_field(&cfg, mesh.vertices()).unwrap();
            let num: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
            (num / den).sqrt()
        })
        .collect();
    assert!(errs[2] <= 0.1 && errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
}

#[test]
fn zero_velocity_gives_zero_rhs() {
    let k0 = 2.0;
    let w = wave(k0);
    let mesh = generate_sphere(1);
    for dielectric in [false, true] {
        let (sys, sol) = if dielectric {
            solve_pmchwt(build_space(&mesh), &w, MediumParameters::new(k0, 3.0, 1.5).unwrap(), &direct()).unwrap()
        } else {
            solve_efie(build_space(&mesh), &w, k0, &direct()).unwrap()
        };
        let ing = compute_ingredients(&sys.space, &sol, k0).unwrap();
        let rhs = sd_rhs(&sys, None, &ing, &ScalarSurfaceField::zeros(mesh.num_vertices())).unwrap();
        assert_eq!(max_abs(&rhs), 0.0);
    }
}

#[test]
fn rhs_is_linear_in_velocity() {
    let k0 = 2.0;
    let w = wave(k0);
    let mesh = generate_sphere(1);
    let (sys, sol) = solve_pmchwt(build_space(&mesh), &w, MediumParameters::new(k0, 3.0, 1.5).unwrap(), &direct()).unwrap();
    let ing = compute_ingredients(&sys.space, &sol, k0).unwrap();
    let gram = GramFactor::new(&sys.space).unwrap();
    let v1 = normal_velocity(&mesh, &sample_field(&mesh, &KiteField));
    let v2 = normal_velocity(&mesh, &vec![[0.1, 0.7, -0.4]; mesh.num_vertices()]);
    let (a, b) = (1.7, -0.6);
    let combo = ScalarSurfaceField::from_real(v1.values.iter().zip(&v2.values).map(|(x, y)| a * x.re + b * y.re));
    let r1 = sd_rhs(&sys, Some(&gram), &ing, &v1).unwrap();
    let r2 = sd_rhs(&sys, Some(&gram), &ing, &v2).unwrap();
    let r = sd_rhs(&sys, Some(&gram), &ing, &combo).unwrap();
    let want: Vec<C64> = r1.iter().zip(&r2).map(|(x, y)| x * a + y * b).collect();
    let diff: Vec<C64> = r.iter().zip(&want).map(|(x, y)| x - y).collect();
    assert!(max_abs(&diff) <= 1e-12 * max_abs(&want), "{}", max_abs(&diff) / max_abs(&want));
}

#[test]
fn no_contrast_gives_zero_dielectric_rhs() {
    let k0 = 2.0;
    let w = wave(k0);
    let mesh = generate_sphere(1);
    let (sys, sol) = solve_pmchwt(build_space(&mesh), &w, MediumParameters::new(k0, 1.0, 1.0).unwrap(), &direct()).unwrap();
    let ing = compute_ingredients(&sys.space, &sol, k0).unwrap();
    let vn = normal_velocity(&mesh, &sample_field(&mesh, &KiteField));
    let rhs = sd_rhs(&sys, None, &ing, &vn).unwrap();
    assert!(max_abs(&rhs) <= 1e-12 * max_abs(&sol.j), "{}", max_abs(&rhs));
}

#[test]
fn zero_solution_gives_zero_ingredients() {
    let mesh = generate_sphere(1);
    let space = build_space(&mesh);
    let n = space.dim();
    let sol = TraceSolution::from_coefficients(Problem::Dielectric, 0, vec![c(0.0, 0.0); 2 * n], 0, vec![]);
    let ing = compute_ingredients(&space, &sol, 1.0).unwrap();
    assert_eq!(max_abs(&ing.e_n), 0.0);
    assert_eq!(max_abs(ing.h_n.as_ref().unwrap()), 0.0);
}

#[test]
fn tangential_fields_are_tangent() {
    let k0 = 2.0;
    let w = wave(k0);
    let mesh = generate_sphere(1);
    let (sys, sol) = solve_pmchwt(build_space(&mesh), &w, MediumParameters::new(k0, 3.0, 1.0).unwrap(), &direct()).unwrap();
    let ing = compute_ingredients(&sys.space, &sol, k0).unwrap();
    for t in 0..mesh.num_triangles() {
        let x = mesh.centroid(t);
        let n = mesh.normals()[t];
        for f in [ing.tangential_h(&sys.space, t, x), ing.tangential_e(&sys.space, t, x)] {
            let dot: C64 = (0..3).map(|i| f[i] * n[i]).sum();
            assert!(dot.norm() <= 1e-12 * (1.0 + vec3::cnorm(f)));
        }
    }
}

#[test]
fn foa_interpolates_linearly() {
    let f = FarFieldSample { theta: vec![0.0, 1.0], values: vec![[c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)]; 2] };
    let fp = FarFieldSample { theta: vec![0.0, 1.0], values: vec![[c(0.5, 0.5), c(-1.0, 0.0), c(0.0, 3.0)]; 2] };
    assert_eq!(foa_far_field(&f, &fp, 0.0).unwrap().values, f.values);
    let g = foa_far_field(&f, &fp, 0.5).unwrap();
    assert_eq!(g.values[1][2], c(2.0, 0.5));
    let other = FarFieldSample { theta: vec![0.0, 2.0], values: fp.values.clone() };
    assert!(matches!(foa_far_field(&f, &other, 0.1), Err(ShapeDerivError::Grid)));
}

#[test]
fn kite_first_order_beats_zeroth_order_at_quarter_step() {
    let k0 = 5.0;
    let w = wave(k0);
    let params = MediumParameters::new(k0, 1.9, 1.0).unwrap();
    let mesh = geodesic_sphere(4);
    let opts = direct();
    let (mut sys, sol) = solve_pmchwt(build_space(&mesh), &w, params, &opts).unwrap();
    let ing = compute_ingredients(&sys.space, &sol, k0).unwrap();
    let disp = sample_field(&mesh, &KiteField);
    let rhs = sd_rhs(&sys, None, &ing, &normal_velocity(&mesh, &disp)).unwrap();
    let sd = solve_sd(&mut sys, &rhs, &opts).unwrap();
    let n = 360;
    let f = sys.far_field(&sol, n);
    let fp = sys.far_field(&sd, n);
    let t = 0.25;
    let moved = perturb_with_displacements(&mesh, &disp, t).unwrap();
    let (st, solt) = solve_pmchwt(build_space(&moved), &w, params, &opts).unwrap();
    let ft = st.far_field(&solt, n);
    let scale = far_norm(&ft);
    let zoa = far_dist(&ft, &f) / scale;
    let foa = far_dist(&ft, &foa_far_field(&f, &fp, t).unwrap()) / scale;
    assert!(foa < zoa, "foa {foa} zoa {zoa}");
}
