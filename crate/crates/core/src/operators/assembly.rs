//! Galerkin assembly of the single-layer (EFIO) and double-layer (MFIO)
//! operators on RWG spaces.
//!
//! Triangle pairs are split by centroid distance `D` relative to the larger
//! diameter `a`: far pairs use a 3×3 point rule, intermediate pairs 6×6, and
//! near pairs subtract the static kernel, integrate it in closed form over the
//! trial triangle and apply a refined outer rule.

use faer::Mat;
use rayon::prelude::*;

use super::kernels::{green, green_regular};
use super::panel::panel_integrals;
use crate::quadrature::{rule3, rule6, rule7, rule7_sub1, rule7_sub2, TriangleRule};
use crate::spaces::DivConformingSpace;
use crate::vec3::{self, CVec3, Vec3};
use crate::C64;

const INV_FOUR_PI: f64 = 0.25 / std::f64::consts::PI;

/// Distance thresholds (in units of the larger triangle diameter) and rules.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub far_ratio: f64,
    pub near_ratio: f64,
    pub far_degree: usize,
    pub medium_degree: usize,
    /// Refinement levels of the 7-point outer rule for near and touching pairs.
    pub near_levels: u32,
    pub touching_levels: u32,
    /// Combine touching pairs at `touching_levels` and one level finer.
    pub extrapolate_touching: bool,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { far_ratio: 3.0, near_ratio: 1.5, far_degree: 2, medium_degree: 4, near_levels: 1, touching_levels: 2, extrapolate_touching: true }
    }
}

impl QuadratureOptions {
    /// High-order settings for reference computations.
    pub fn accurate() -> Self {
        QuadratureOptions { far_ratio: 3.0, near_ratio: 1.5, far_degree: 12, medium_degree: 16, near_levels: 3, touching_levels: 4, extrapolate_touching: true }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("non-finite entry from test triangle {test} and trial triangle {trial}")]
    NonFinite { test: usize, trial: usize },
    #[error("invalid wavenumber {0}")]
    Wavenumber(f64),
}

#[derive(Clone, Copy)]
struct Tri {
    v: [Vec3; 3],
    ids: [usize; 3],
    n: Vec3,
    area: f64,
    centroid: Vec3,
    diam: f64,
}

fn triangles(space: &DivConformingSpace) -> Vec<Tri> {
    let m = space.mesh();
    (0..m.num_triangles())
        .map(|t| Tri {
            v: m.triangle_vertices(t),
            ids: m.triangles()[t],
            n: m.normals()[t],
            area: m.areas()[t],
            centroid: m.centroid(t),
            diam: m.diameter(t),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PairClass {
    Far,
    Medium,
    Near,
    Touching,
}

struct Rules {
    far: TriangleRule,
    medium: TriangleRule,
    near: TriangleRule,
    touching: TriangleRule,
    touching_fine: TriangleRule,
}

impl Rules {
    fn new(opts: &QuadratureOptions) -> Self {
        let sym = |d: usize| match d {
            2 => rule3().clone(),
            4 => rule6().clone(),
            5 => rule7().clone(),
            _ => TriangleRule::symmetric(d),
        };
        let refined = |l: u32| match l {
            1 => rule7_sub1().clone(),
            2 => rule7_sub2().clone(),
            _ => rule7().subdivided(l),
        };
        Rules {
            far: sym(opts.far_degree),
            medium: sym(opts.medium_degree),
            near: refined(opts.near_levels),
            touching: refined(opts.touching_levels),
            touching_fine: refined(opts.touching_levels + 1),
        }
    }
}

struct Context<'a> {
    test: &'a [Tri],
    trial: &'a [Tri],
    k: f64,
    opts: &'a QuadratureOptions,
    rules: Rules,
    same_mesh: bool,
    want_k: bool,
    far_pts: (Vec<Vec<(Vec3, f64)>>, Vec<Vec<(Vec3, f64)>>),
    medium_pts: (Vec<Vec<(Vec3, f64)>>, Vec<Vec<(Vec3, f64)>>),
    inner_pts: Vec<Vec<(Vec3, f64)>>,
}

/// Double integrals over a triangle pair from which the local L and K blocks follow.
#[derive(Default)]
struct Moments {
    s0: C64,
    sx: CVec3,
    sy: CVec3,
    sxy: C64,
    w: CVec3,
    q: CVec3,
}

impl Moments {
    /// Richardson step between an outer rule and its refinement: the
    /// single-layer moments carry an O(h²) error, the double-layer ones O(h)
    /// from the logarithmic edge singularity of the inner gradient integral.
    fn extrapolate(coarse: &Moments, fine: &Moments) -> Moments {
        let two = |c: C64, f: C64| 2.0 * f - c;
        let four = |c: C64, f: C64| (4.0 * f - c) / 3.0;
        Moments {
            s0: four(coarse.s0, fine.s0),
            sx: std::array::from_fn(|i| four(coarse.sx[i], fine.sx[i])),
            sy: std::array::from_fn(|i| four(coarse.sy[i], fine.sy[i])),
            sxy: four(coarse.sxy, fine.sxy),
            w: std::array::from_fn(|i| two(coarse.w[i], fine.w[i])),
            q: std::array::from_fn(|i| two(coarse.q[i], fine.q[i])),
        }
    }

    #[inline]
    fn add_point(&mut self, x: Vec3, y: Vec3, w: f64, g: C64, phi: C64, want_k: bool) {
        let gw = g * w;
        self.s0 += gw;
        for c in 0..3 {
            self.sx[c] += gw * x[c];
            self.sy[c] += gw * y[c];
        }
        self.sxy += gw * vec3::dot(x, y);
        if want_k {
            let pw = phi * w;
            let xy = vec3::cross(x, y);
            for c in 0..3 {
                self.w[c] += pw * xy[c];
                self.q[c] += pw * (x[c] - y[c]);
            }
        }
    }
}

type Local = [[C64; 3]; 3];

impl Context<'_> {
    fn classify(&self, s: usize, t: usize) -> PairClass {
        let a = &self.test[s];
        let b = &self.trial[t];
        let size = a.diam.max(b.diam);
        let d = vec3::dist(a.centroid, b.centroid);
        if d > self.opts.far_ratio * size {
            return PairClass::Far;
        }
        if d > self.opts.near_ratio * size {
            return PairClass::Medium;
        }
        let touching = if self.same_mesh {
            a.ids.iter().any(|i| b.ids.contains(i))
        } else {
            let tol = 1e-9 * size;
            a.v.iter().any(|p| b.v.iter().any(|q| vec3::dist(*p, *q) < tol))
        };
        if touching {
            PairClass::Touching
        } else {
            PairClass::Near
        }
    }

    fn moments(&self, s: usize, t: usize) -> Moments {
        let mut m = Moments::default();
        let k = self.k;
        match self.classify(s, t) {
            class @ (PairClass::Far | PairClass::Medium) => {
                let (xs, ys) = if class == PairClass::Far {
                    (&self.far_pts.0[s], &self.far_pts.1[t])
                } else {
                    (&self.medium_pts.0[s], &self.medium_pts.1[t])
                };
                for &(x, wx) in xs {
                    for &(y, wy) in ys {
                        let (g, phi) = green(k, vec3::dist(x, y));
                        m.add_point(x, y, wx * wy, g, phi, self.want_k);
                    }
                }
            }
            PairClass::Near => self.subtracted(s, t, &self.rules.near, &mut m),
            PairClass::Touching => {
                self.subtracted(s, t, &self.rules.touching, &mut m);
                if self.opts.extrapolate_touching {
                    let mut fine = Moments::default();
                    self.subtracted(s, t, &self.rules.touching_fine, &mut fine);
                    m = Moments::extrapolate(&m, &fine);
                }
            }
        }
        m
    }

    /// Static part in closed form over the trial triangle, regular part by a
    /// 7-point inner rule, both against the outer rule on the test triangle.
    fn subtracted(&self, s: usize, t: usize, outer: &TriangleRule, m: &mut Moments) {
        let a = &self.test[s];
        let b = &self.trial[t];
        let k = self.k;
        for &(x, wx) in &outer.map(&a.v, a.area) {
            for &(y, wy) in &self.inner_pts[t] {
                let (g, phi) = green_regular(k, vec3::dist(x, y));
                m.add_point(x, y, wx * wy, g, phi, self.want_k);
            }
            let p = panel_integrals(&b.v, b.n, x);
            let c = wx * INV_FOUR_PI;
            let i0 = C64::new(c * p.i0, 0.0);
            m.s0 += i0;
            for d in 0..3 {
                m.sx[d] += i0 * x[d];
                m.sy[d] += c * p.iy[d];
            }
            m.sxy += c * vec3::dot(x, p.iy);
            if self.want_k {
                let j = vec3::scale(c, p.grad);
                let xj = vec3::cross(x, j);
                for d in 0..3 {
                    m.q[d] += j[d];
                    m.w[d] -= xj[d];
                }
            }
        }
    }

    /// Local 3×3 blocks indexed by the local vertex opposite each basis function.
    fn local(&self, s: usize, t: usize, cs: &[f64; 3], ct: &[f64; 3]) -> (Local, Local) {
        let m = self.moments(s, t);
        let k = self.k;
        let pa = self.test[s].v;
        let pb = self.trial[t].v;
        let ik = C64::new(0.0, k);
        let div_term = C64::new(0.0, -4.0 / k) * m.s0;
        let mut l = [[C64::new(0.0, 0.0); 3]; 3];
        let mut kk = [[C64::new(0.0, 0.0); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let p_a = pa[a];
                let p_b = pb[b];
                let i_ab = m.sxy - vec3::cdot_r(m.sx, p_b) - vec3::cdot_r(m.sy, p_a) + m.s0 * vec3::dot(p_a, p_b);
                let c = cs[a] * ct[b];
                l[a][b] = (ik * i_ab + div_term) * c;
                if self.want_k {
                    let w = vec3::cdot_r(m.w, vec3::sub(p_b, p_a));
                    let q = vec3::cdot_r(m.q, vec3::cross(p_b, p_a));
                    kk[a][b] = (w + q) * c;
                }
            }
        }
        (l, kk)
    }
}

/// Single-layer and double-layer Galerkin matrices for one wavenumber.
pub struct LayerMatrices {
    pub l: Mat<C64>,
    pub k: Option<Mat<C64>>,
}

/// The self pair is integrated asymmetrically (outer rule against closed forms).
fn symmetrize(b: &mut Local) {
    for a in 0..3 {
        for c in (a + 1)..3 {
            let avg = 0.5 * (b[a][c] + b[c][a]);
            b[a][c] = avg;
            b[c][a] = avg;
        }
    }
}

fn map_all(tris: &[Tri], rule: &TriangleRule) -> Vec<Vec<(Vec3, f64)>> {
    tris.iter().map(|t| rule.map(&t.v, t.area)).collect()
}

/// Assembles `⟨f_m, L_k f_n⟩` and optionally `⟨f_m, K_k f_n⟩`, where
/// `L_k u = ik∫G u − (1/ik)∇∫G div u` and `K_k u = ∇×∫G u`.
///
/// When test and trial spaces coincide only pairs with `s ≤ t` are integrated
/// and mirrored, so both matrices are exactly symmetric.
pub fn assemble_layers(
    test: &DivConformingSpace,
    trial: &DivConformingSpace,
    k: f64,
    opts: &QuadratureOptions,
    want_k: bool,
) -> Result<LayerMatrices, AssemblyError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(AssemblyError::Wavenumber(k));
    }
    let same_mesh = crate::spaces::same_mesh(test, trial).is_ok();
    let tt = triangles(test);
    let tr = if same_mesh { tt.clone() } else { triangles(trial) };
    let rules = Rules::new(opts);
    let ctx = Context {
        far_pts: (map_all(&tt, &rules.far), map_all(&tr, &rules.far)),
        medium_pts: (map_all(&tt, &rules.medium), map_all(&tr, &rules.medium)),
        inner_pts: map_all(&tr, rule7()),
        test: &tt,
        trial: &tr,
        k,
        opts,
        rules,
        same_mesh,
        want_k,
    };

    let (m, n) = (test.dim(), trial.dim());
    let mut l = Mat::<C64>::zeros(m, n);
    let mut kmat = if want_k { Mat::<C64>::zeros(m, n) } else { Mat::<C64>::zeros(0, 0) };
    const CHUNK: usize = 32;
    let rows: Vec<usize> = (0..tt.len()).collect();
    for chunk in rows.chunks(CHUNK) {
        let blocks: Vec<(usize, Vec<(usize, Local, Local)>)> = chunk
            .par_iter()
            .map(|&s| {
                let start = if same_mesh { s } else { 0 };
                let row = (start..tr.len())
                    .map(|t| {
                        let (mut lb, mut kb) = ctx.local(s, t, test.coefficients(s), trial.coefficients(t));
                        if same_mesh && s == t {
                            symmetrize(&mut lb);
                            symmetrize(&mut kb);
                        }
                        (t, lb, kb)
                    })
                    .collect();
                (s, row)
            })
            .collect();
        for (s, row) in blocks {
            for (t, lb, kb) in row {
                if lb.iter().flatten().chain(kb.iter().flatten()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(AssemblyError::NonFinite { test: s, trial: t });
                }
                let ds = test.local_dofs(s);
                let dt = trial.local_dofs(t);
                for a in 0..3 {
                    for b in 0..3 {
                        let (i, j) = (ds[a].0, dt[b].0);
                        l[(i, j)] += lb[a][b];
                        if want_k {
                            kmat[(i, j)] += kb[a][b];
                        }
                        if same_mesh && s != t {
                            l[(j, i)] += lb[a][b];
                            if want_k {
                                kmat[(j, i)] += kb[a][b];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LayerMatrices { l, k: want_k.then_some(kmat) })
}
