//! Quadrature rules on triangles in barycentric coordinates.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::vec3::Vec3;

/// Points in barycentric coordinates; weights sum to one (multiply by the area).
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub bary: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Symmetric rules of polynomial degree 1, 2, 4 or 5 (1, 3, 6, 7 points).
    pub fn symmetric(degree: usize) -> TriangleRule {
        let mut r = TriangleRule { bary: Vec::new(), weights: Vec::new() };
        match degree {
            0 | 1 => r.push_orbit1(1.0),
            2 => r.push_orbit3(1.0 / 6.0, 1.0 / 3.0),
            3 | 4 => {
                r.push_orbit3(0.445948490915965, 0.223381589678011);
                r.push_orbit3(0.091576213509771, 0.109951743655322);
            }
            5 => {
                r.push_orbit1(0.225);
                r.push_orbit3(0.470142064105115, 0.132394152788506);
                r.push_orbit3(0.101286507323456, 0.125939180544827);
            }
            _ => return TriangleRule::collapsed_gauss(degree / 2 + 1),
        }
        r
    }

    fn push_orbit1(&mut self, w: f64) {
        self.bary.push([1.0 / 3.0; 3]);
        self.weights.push(w);
    }

    fn push_orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.bary.push(p);
            self.weights.push(w);
        }
    }

    /// Conical product of `n`-point Gauss–Legendre rules, exact to degree `2n − 2`.
    pub fn collapsed_gauss(n: usize) -> TriangleRule {
        let gl = gauss_legendre(n);
        let mut r = TriangleRule { bary: Vec::new(), weights: Vec::new() };
        for &(u, wu) in &gl {
            for &(v, wv) in &gl {
                let l1 = u;
                let l2 = v * (1.0 - u);
                r.bary.push([1.0 - l1 - l2, l1, l2]);
                r.weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        r
    }

    /// Composite rule over `4^levels` congruent subtriangles.
    pub fn subdivided(&self, levels: u32) -> TriangleRule {
        let mut tris: Vec<[[f64; 3]; 3]> = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        for _ in 0..levels {
            tris = tris.into_iter().flat_map(split4).collect();
        }
        let scale = 1.0 / tris.len() as f64;
        let mut r = TriangleRule { bary: Vec::new(), weights: Vec::new() };
        for t in &tris {
            for (b, &w) in self.bary.iter().zip(&self.weights) {
                let mut p = [0.0; 3];
                for (k, corner) in t.iter().enumerate() {
                    for c in 0..3 {
                        p[c] += b[k] * corner[c];
                    }
                }
                r.bary.push(p);
                r.weights.push(w * scale);
            }
        }
        r
    }

    /// Physical points and weights (area included) on triangle `v`.
    pub fn map(&self, v: &[Vec3; 3], area: f64) -> Vec<(Vec3, f64)> {
        self.bary
            .iter()
            .zip(&self.weights)
            .map(|(b, &w)| (bary_point(v, b), w * area))
            .collect()
    }
}

/// Barycentric subdivision into four congruent triangles, middle one included.
pub fn split4(t: [[f64; 3]; 3]) -> [[[f64; 3]; 3]; 4] {
    let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
    let (m01, m12, m20) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[2], t[0]));
    [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m12, m20, m01]]
}

#[inline]
pub fn bary_point(v: &[Vec3; 3], b: &[f64; 3]) -> Vec3 {
    [
        b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0],
        b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1],
        b[0] * v[0][2] + b[1] * v[1][2] + b[2] * v[2][2],
    ]
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("at least one node"));
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

macro_rules! cached_rule {
    ($name:ident, $body:expr) => {
        pub fn $name() -> &'static TriangleRule {
            static RULE: OnceLock<TriangleRule> = OnceLock::new();
            RULE.get_or_init(|| $body)
        }
    };
}

cached_rule!(rule3, TriangleRule::symmetric(2));
cached_rule!(rule6, TriangleRule::symmetric(4));
cached_rule!(rule7, TriangleRule::symmetric(5));
cached_rule!(rule7_sub1, TriangleRule::symmetric(5).subdivided(1));
cached_rule!(rule7_sub2, TriangleRule::symmetric(5).subdivided(2));
