use fosb::geometry::*;
use fosb::quadrature::{bary_point, TriangleRule};
use fosb::spaces::*;
use fosb::vec3;
use fosb::C64;
use proptest::prelude::*;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[test]
fn dimensions_match_edge_counts() {
    assert_eq!(build_space(&generate_sphere(0)).dim(), 30);
    assert_eq!(build_space(&generate_sphere(2)).dim(), 480);
    let m = generate_sphere(1);
    assert_eq!(build_space(&m).dim(), 3 * m.num_triangles() / 2);
}

#[test]
fn single_dof_divergence_pattern() {
    let m = generate_sphere(1);
    let s = build_space(&m);
    for dof in [0, 17, 119] {
        let mut x = vec![c(0.0); s.dim()];
        x[dof] = c(1.0);
        let div = s.surface_divergence(&x).unwrap();
        let e = &s.edges()[dof];
        let len = vec3::dist(m.vertices()[e.v[0]], m.vertices()[e.v[1]]);
        for (t, d) in div.iter().enumerate() {
            let want = if t == e.tris[0] {
                len / m.areas()[t]
            } else if t == e.tris[1] {
                -len / m.areas()[t]
            } else {
                0.0
            };
            assert!((d - c(want)).norm() < 1e-12);
        }
    }
    assert!(s.surface_divergence(&[c(1.0)]).is_err());
    assert!(s.surface_divergence(&vec![c(0.0); s.dim()]).unwrap().iter().all(|d| d.norm() == 0.0));
}

#[test]
fn normal_component_continuous_across_edges() {
    let m = generate_sphere(1);
    let s = build_space(&m);
    for (dof, e) in s.edges().iter().enumerate() {
        let mut x = vec![c(0.0); s.dim()];
        x[dof] = c(1.0);
        let (a, b) = (m.vertices()[e.v[0]], m.vertices()[e.v[1]]);
        let edge = vec3::normalize(vec3::sub(b, a));
        // Flux through the edge leaving triangle t, at both edge endpoints.
        let outflux = |t: usize, opp: usize, p: [f64; 3]| {
            let q = m.triangle_vertices(t)[opp];
            let h = vec3::sub(a, q);
            let nu = vec3::normalize(vec3::sub(h, vec3::scale(vec3::dot(h, edge), edge)));
            vec3::cdot_r(s.eval_at(&x, t, p), nu)
        };
        for p in [a, b, vec3::scale(0.5, vec3::add(a, b))] {
            let plus = outflux(e.tris[0], e.local[0], p);
            let minus = outflux(e.tris[1], e.local[1], p);
            assert!((plus - c(1.0)).norm() < 1e-12, "{plus}");
            assert!((plus + minus).norm() < 1e-12, "{plus} {minus}");
        }
    }
}

fn pairing_oracle(s: &DivConformingSpace, i: usize, j: usize) -> f64 {
    let m = s.mesh();
    let rule = TriangleRule::collapsed_gauss(6);
    let mut sum = 0.0;
    let mut xi = vec![c(0.0); s.dim()];
    let mut xj = vec![c(0.0); s.dim()];
    xi[i] = c(1.0);
    xj[j] = c(1.0);
    for t in 0..m.num_triangles() {
        let v = m.triangle_vertices(t);
        for (b, w) in rule.bary.iter().zip(&rule.weights) {
            let x = bary_point(&v, b);
            let fi = s.eval_at(&xi, t, x);
            let fj = s.eval_at(&xj, t, x);
            let nf: Vec<f64> = vec3::cross(m.normals()[t], [fj[0].re, fj[1].re, fj[2].re]).to_vec();
            sum += w * m.areas()[t] * (fi[0].re * nf[0] + fi[1].re * nf[1] + fi[2].re * nf[2]);
        }
    }
    sum
}

#[test]
fn twisted_pairing_properties() {
    let m = generate_sphere(1);
    let s = build_space(&m);
    let b = pairing_matrix(&s, &s).unwrap();
    let n = s.dim();
    let mut scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            assert_eq!(b[(i, j)], -b[(j, i)]);
            scale = scale.max(b[(i, j)].abs());
        }
    }
    // Edges without a shared triangle have disjoint supports.
    let e = s.edges();
    let shares = |i: usize, j: usize| e[i].tris.iter().any(|t| e[j].tris.contains(t));
    let far = (1..n).find(|&j| !shares(0, j)).unwrap();
    assert_eq!(b[(0, far)], 0.0);
    for (i, j) in [(0, 1), (5, 9), (40, 41), (77, 3)] {
        let want = pairing_oracle(&s, i, j);
        assert!((b[(i, j)] - want).abs() <= 1e-12 * scale, "{i},{j}: {} vs {want}", b[(i, j)]);
    }
    let other = build_space(&generate_sphere(2));
    assert!(pairing_matrix(&s, &other).is_err());
}

#[test]
fn gram_matrix_is_spd() {
    let s = build_space(&generate_sphere(1));
    let g = s.gram_matrix();
    for i in 0..s.dim() {
        assert!(g[(i, i)] > 0.0);
        for j in 0..s.dim() {
            assert_eq!(g[(i, j)], g[(j, i)]);
        }
    }
    assert!(g.llt(faer::Side::Lower).is_ok());
}

#[test]
fn gradient_of_constant_vanishes() {
    let m = generate_sphere(2);
    let f = ScalarSurfaceField::from_real(vec![2.5; m.num_vertices()]);
    for g in surface_gradient(&m, &f) {
        assert!(vec3::cnorm(g) < 1e-12);
    }
}

#[test]
fn gradient_exact_for_linear_on_flat_face() {
    let m = generate_fichera(0.3).unwrap();
    let f = ScalarSurfaceField::from_real(m.vertices().iter().map(|v| v[0]));
    let g = surface_gradient(&m, &f);
    let mut seen = 0;
    for (t, gt) in g.iter().enumerate() {
        if m.normals()[t][2] > 1.0 - 1e-12 && m.centroid(t)[2] > 0.5 - 1e-12 {
            seen += 1;
            assert!((gt[0] - c(1.0)).norm() < 1e-12 && gt[1].norm() < 1e-12 && gt[2].norm() < 1e-12);
        }
    }
    assert!(seen > 0);
}

#[test]
fn gradient_of_height_on_sphere_is_first_order() {
    let mut errs = Vec::new();
    for r in [1, 2, 3] {
        let m = generate_sphere(r);
        let f = ScalarSurfaceField::from_real(m.vertices().iter().map(|v| v[2]));
        let g = surface_gradient(&m, &f);
        let mut worst: f64 = 0.0;
        for (t, gt) in g.iter().enumerate() {
            let n = vec3::normalize(m.centroid(t));
            let want = vec3::sub([0.0, 0.0, 1.0], vec3::scale(n[2], n));
            let d = vec3::csub(*gt, vec3::cscale(c(1.0), want));
            worst = worst.max(vec3::cnorm(d));
            // Tangent to the triangle.
            assert!(vec3::cdot_r(*gt, m.normals()[t]).norm() < 1e-12);
        }
        errs.push((mesh_width(&m), worst));
    }
    assert!(errs.windows(2).all(|w| w[1].1 < w[0].1), "{errs:?}");
    // The coarsest mesh is pre-asymptotic.
    let rate = (errs[1].1 / errs[2].1).ln() / (errs[1].0 / errs[2].0).ln();
    assert!(rate > 0.8, "{errs:?}");
}

#[test]
fn vertex_average_of_constant_is_constant() {
    let m = generate_sphere(1);
    let f = ScalarSurfaceField::from_triangle_values(&m, &vec![C64::new(1.0, -2.0); m.num_triangles()]);
    assert!(f.values.iter().all(|v| (v - C64::new(1.0, -2.0)).norm() < 1e-14));
}

proptest! {
    #[test]
    fn divergence_integrates_to_zero(seed in proptest::collection::vec(-1.0f64..1.0, 240)) {
        let m = generate_sphere(1);
        let s = build_space(&m);
        let x: Vec<C64> = (0..s.dim()).map(|i| C64::new(seed[i], seed[i + 120])).collect();
        let div = s.surface_divergence(&x).unwrap();
        let total: C64 = div.iter().zip(m.areas()).map(|(d, a)| d * a).sum();
        let scale: f64 = div.iter().zip(m.areas()).map(|(d, a)| d.norm() * a).sum();
        prop_assert!(total.norm() <= 1e-12 * scale.max(1.0));
    }
}
