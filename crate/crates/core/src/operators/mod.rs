//! Boundary integral operators, multitrace combinations, far-field maps and
//! near-field evaluation.
//!
//! Units: `ε0 = μ0 = 1`, so the exterior impedance is one and the angular
//! frequency equals `k0`. Time dependence is `e^{−iωt}`.
//!
//! Fields radiated by surface currents `J = n×H` and `M = −n×E` in a medium with
//! wavenumber `k` and impedance `η` are `E = η L_k J − K_k M` and
//! `H = K_k J + L_k M / η` outside, with the opposite sign inside.

mod assembly;
pub mod kernels;
pub mod panel;

use std::io::{Read, Write};

use faer::Mat;

pub use assembly::{assemble_layers, AssemblyError, LayerMatrices, QuadratureOptions};

use crate::quadrature::{bary_point, rule7, TriangleRule};
use crate::spaces::{DivConformingSpace, SpaceError};
use crate::vec3::{self, CVec3, Vec3};
use crate::C64;

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("invalid medium parameters: {0}")]
    Medium(String),
    #[error("operator dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Relative material parameters of the scatterer; the exterior is vacuum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediumParameters {
    pub k0: f64,
    pub eps_r: f64,
    pub mu_r: f64,
}

impl MediumParameters {
    pub fn new(k0: f64, eps_r: f64, mu_r: f64) -> Result<Self, OperatorError> {
        for (name, v) in [("k0", k0), ("eps_r", eps_r), ("mu_r", mu_r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(OperatorError::Medium(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(MediumParameters { k0, eps_r, mu_r })
    }

    pub fn vacuum(k0: f64) -> Self {
        MediumParameters { k0, eps_r: 1.0, mu_r: 1.0 }
    }

    /// Wavenumber of medium 0 (exterior) or 1 (interior).
    pub fn k(&self, medium: usize) -> f64 {
        if medium == 0 {
            self.k0
        } else {
            self.k0 * (self.eps_r * self.mu_r).sqrt()
        }
    }

    /// Impedance of medium 0 or 1, relative to vacuum.
    pub fn eta(&self, medium: usize) -> f64 {
        if medium == 0 {
            1.0
        } else {
            (self.mu_r / self.eps_r).sqrt()
        }
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.k0
    }

    /// Frequency in Hz for a free-space wavenumber in rad/m.
    pub fn frequency_hz(&self) -> f64 {
        const C0: f64 = 299_792_458.0;
        self.k0 * C0 / (2.0 * std::f64::consts::PI)
    }

    /// Diagonal of the trace scaling between the interior and exterior:
    /// `(ε_r^{-1/2}, μ_r^{-1/2})`.
    pub fn trace_scaling(&self) -> (f64, f64) {
        (self.eps_r.powf(-0.5), self.mu_r.powf(-0.5))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Identity,
    Efio,
    Mfio,
}

impl KernelKind {
    fn tag(self) -> u8 {
        match self {
            KernelKind::Identity => 0,
            KernelKind::Efio => 1,
            KernelKind::Mfio => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(KernelKind::Identity),
            1 => Some(KernelKind::Efio),
            2 => Some(KernelKind::Mfio),
            _ => None,
        }
    }
}

/// Dense Galerkin matrix; rows are test dofs, columns trial dofs.
#[derive(Clone, Debug)]
pub struct OperatorBlock {
    pub kind: KernelKind,
    pub k: f64,
    pub test_level: usize,
    pub trial_level: usize,
    pub matrix: Mat<C64>,
}

const DUMP_MAGIC: &[u8; 8] = b"OPBLOCK1";

impl OperatorBlock {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Binary dump: magic, kernel tag (u8), k (f64), rows and cols (u64), then
    /// row-major complex64 entries as little-endian `f32` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&[self.kind.tag()])?;
        w.write_all(&self.k.to_le_bytes())?;
        w.write_all(&(self.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.ncols() as u64).to_le_bytes())?;
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                let z = self.matrix[(i, j)];
                w.write_all(&(z.re as f32).to_le_bytes())?;
                w.write_all(&(z.im as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, OperatorError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(OperatorError::Dump("bad magic".into()));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let kind = KernelKind::from_tag(tag[0]).ok_or_else(|| OperatorError::Dump(format!("unknown kernel tag {}", tag[0])))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let k = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut data = vec![0u8; rows * cols * 8];
        r.read_exact(&mut data)?;
        let f = |o: usize| f32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]) as f64;
        let matrix = Mat::from_fn(rows, cols, |i, j| {
            let o = 8 * (i * cols + j);
            C64::new(f(o), f(o + 4))
        });
        Ok(OperatorBlock { kind, k, test_level: 0, trial_level: 0, matrix })
    }
}

/// Twisted identity `∫ f_m · (n × f_n)`.
pub fn assemble_identity(space: &DivConformingSpace) -> OperatorBlock {
    let b = space.twisted_pairing();
    OperatorBlock {
        kind: KernelKind::Identity,
        k: 0.0,
        test_level: space.level,
        trial_level: space.level,
        matrix: Mat::from_fn(b.nrows(), b.ncols(), |i, j| C64::new(b[(i, j)], 0.0)),
    }
}

pub fn assemble_efio(test: &DivConformingSpace, trial: &DivConformingSpace, k: f64) -> Result<OperatorBlock, OperatorError> {
    let m = assemble_layers(test, trial, k, &QuadratureOptions::default(), false)?;
    Ok(OperatorBlock { kind: KernelKind::Efio, k, test_level: test.level, trial_level: trial.level, matrix: m.l })
}

pub fn assemble_mfio(test: &DivConformingSpace, trial: &DivConformingSpace, k: f64) -> Result<OperatorBlock, OperatorError> {
    let m = assemble_layers(test, trial, k, &QuadratureOptions::default(), true)?;
    let matrix = m.k.expect("requested");
    Ok(OperatorBlock { kind: KernelKind::Mfio, k, test_level: test.level, trial_level: trial.level, matrix })
}

/// `A = [ηL, −K; K, L/η]` for one medium, acting on `(J, M)` and tested
/// tangentially against `(E, H)`. The PMCHWT matrix is `A_0 + A_1`.
#[derive(Clone, Debug)]
pub struct MultitraceOperator {
    pub efio: OperatorBlock,
    pub mfio: OperatorBlock,
    pub eta: f64,
}

impl MultitraceOperator {
    pub fn dim(&self) -> usize {
        2 * self.efio.nrows()
    }

    /// Block `(r, c)` of the 2×2 arrangement as a scalar multiple of L or K.
    pub fn block(&self, r: usize, c: usize) -> (C64, &OperatorBlock) {
        let one = C64::new(1.0, 0.0);
        match (r, c) {
            (0, 0) => (one * self.eta, &self.efio),
            (0, 1) => (-one, &self.mfio),
            (1, 0) => (one, &self.mfio),
            _ => (one / self.eta, &self.efio),
        }
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut out = Mat::<C64>::zeros(self.dim(), self.dim());
        self.add_to(&mut out);
        out
    }

    pub fn add_to(&self, out: &mut Mat<C64>) {
        let n = self.efio.nrows();
        for r in 0..2 {
            for c in 0..2 {
                let (s, b) = self.block(r, c);
                for j in 0..n {
                    for i in 0..n {
                        out[(r * n + i, c * n + j)] += s * b.matrix[(i, j)];
                    }
                }
            }
        }
    }
}

pub fn assemble_multitrace(
    space: &DivConformingSpace,
    params: &MediumParameters,
    medium: usize,
    opts: &QuadratureOptions,
) -> Result<MultitraceOperator, OperatorError> {
    let k = params.k(medium);
    let m = assemble_layers(space, space, k, opts, true)?;
    let lvl = space.level;
    Ok(MultitraceOperator {
        efio: OperatorBlock { kind: KernelKind::Efio, k, test_level: lvl, trial_level: lvl, matrix: m.l },
        mfio: OperatorBlock { kind: KernelKind::Mfio, k, test_level: lvl, trial_level: lvl, matrix: m.k.expect("requested") },
        eta: params.eta(medium),
    })
}

/// PMCHWT system matrix `A_0 + A_1` of size `2N`.
pub fn assemble_pmchwt(space: &DivConformingSpace, params: &MediumParameters, opts: &QuadratureOptions) -> Result<Mat<C64>, OperatorError> {
    let mut z = assemble_multitrace(space, params, 0, opts)?.to_dense();
    assemble_multitrace(space, params, 1, opts)?.add_to(&mut z);
    Ok(z)
}

/// Far-field contribution of an electric or magnetic current.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurrentKind {
    Electric,
    Magnetic,
}

/// Maps current coefficients to far-field amplitudes `F` with
/// `E^sc ≈ e^{ik|x|}/(4π|x|) F`. Row `3i + c` holds component `c` at direction `i`.
///
/// Electric currents radiate `ikη (I − x̂x̂) Ĵ`, magnetic ones `−ik x̂ × M̂`, where
/// `Ĵ = ∫ e^{−ik x̂·y} J(y)`.
pub fn far_field_matrix(space: &DivConformingSpace, k: f64, eta: f64, dirs: &[Vec3], kind: CurrentKind) -> Mat<C64> {
    let mesh = space.mesh();
    let rule = rule7();
    let mut out = Mat::<C64>::zeros(3 * dirs.len(), space.dim());
    for t in 0..mesh.num_triangles() {
        let v = mesh.triangle_vertices(t);
        let pts = rule.map(&v, mesh.areas()[t]);
        for (i, xh) in dirs.iter().enumerate() {
            for a in 0..3 {
                let (dof, _) = space.local_dof(t, a);
                let c = space.coefficient(t, a);
                let mut fhat = vec3::czero();
                for &(y, w) in &pts {
                    let ph = C64::from_polar(w * c, -k * vec3::dot(*xh, y));
                    fhat = vec3::cadd(fhat, vec3::cscale(ph, vec3::sub(y, v[a])));
                }
                let col = match kind {
                    CurrentKind::Electric => {
                        let along = vec3::cdot_r(fhat, *xh);
                        let tang = vec3::csub(fhat, vec3::cscale(along, *xh));
                        vec3::cmul(C64::new(0.0, k * eta), tang)
                    }
                    CurrentKind::Magnetic => {
                        let x = vec3::rcross_c(*xh, fhat);
                        vec3::cmul(C64::new(0.0, -k), x)
                    }
                };
                for c3 in 0..3 {
                    out[(3 * i + c3, dof)] += col[c3];
                }
            }
        }
    }
    out
}

/// Unit directions `(cos θ_i, sin θ_i, 0)` with `θ_i = 2πi/n`.
pub fn circle_directions(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [th.cos(), th.sin(), 0.0]
        })
        .collect()
}

/// Field `η L_k J − K_k M` radiated at `x` by surface currents with
/// coefficients `j` and `m`. For exterior total currents this is the scattered
/// field outside and `−E^inc` inside.
///
/// Returns the field and a flag that is set when `x` is closer to the surface
/// than one local mesh width, where the quadrature is unreliable.
pub fn radiate(
    space: &DivConformingSpace,
    k: f64,
    eta: f64,
    j: Option<&[C64]>,
    m: Option<&[C64]>,
    x: Vec3,
) -> (CVec3, bool) {
    let mesh = space.mesh();
    let base = rule7();
    let fine = rule7().subdivided(2);
    let mut e = vec3::czero();
    let mut close = false;
    let ik = C64::new(0.0, k);
    for t in 0..mesh.num_triangles() {
        let v = mesh.triangle_vertices(t);
        let d = vec3::dist(x, mesh.centroid(t));
        let diam = mesh.diameter(t);
        if d < diam {
            close = true;
        }
        let rule: &TriangleRule = if d < 3.0 * diam { &fine } else { base };
        let area = mesh.areas()[t];
        for (b, &w) in rule.bary.iter().zip(&rule.weights) {
            let y = bary_point(&v, b);
            let r = vec3::dist(x, y);
            let (g, phi) = kernels::green(k, r);
            let wa = w * area;
            let grad = vec3::cscale(phi, vec3::sub(x, y));
            if let Some(j) = j {
                let jy = space.eval_at(j, t, y);
                let div: C64 = (0..3).map(|a| j[space.local_dof(t, a).0] * space.divergence(t, a)).sum();
                // ik G J − (1/ik) ∇G div J
                let term = vec3::csub(vec3::cmul(ik * g, jy), vec3::cmul(div / ik, grad));
                e = vec3::cadd(e, vec3::cmul(C64::new(eta * wa, 0.0), term));
            }
            if let Some(m) = m {
                let my = space.eval_at(m, t, y);
                let curl = vec3::ccross(grad, my);
                e = vec3::csub(e, vec3::cmul(C64::new(wa, 0.0), curl));
            }
        }
    }
    (e, close)
}
