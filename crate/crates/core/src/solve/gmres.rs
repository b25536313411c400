//! Unrestarted GMRES with modified Gram–Schmidt and Givens rotations.

use faer::linalg::solvers::{PartialPivLu, ShapeCore, Solve};
use faer::{Mat, MatMut, MatRef};

use crate::C64;

/// A square linear map on complex vectors.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
}

impl LinearMap for Mat<C64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let y = self * MatRef::from_column_major_slice(x, x.len(), 1);
        (0..y.nrows()).map(|i| y[(i, 0)]).collect()
    }
}

/// Applies `A⁻¹` through a stored LU factorization.
pub struct LuInverse<'a>(pub &'a PartialPivLu<C64>);

impl LinearMap for LuInverse<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = x.to_vec();
        let n = y.len();
        self.0.solve_in_place(MatMut::from_column_major_slice_mut(&mut y, n, 1));
        y
    }
}

/// Wraps a closure as a linear map.
pub struct FnMap<F: Fn(&[C64]) -> Vec<C64> + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[C64]) -> Vec<C64> + Sync> LinearMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmresOptions {
    /// Relative residual target `‖b − Ax‖/‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-6, max_iter: 1000 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// Relative residual estimate after each iteration, starting with the initial one.
    pub residuals: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum GmresError {
    #[error("GMRES stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { best: GmresOutcome, iterations: usize, residual: f64 },
    #[error("dimension mismatch: operator {op}, right-hand side {rhs}")]
    Dimension { op: usize, rhs: usize },
    #[error("non-finite value during iteration {0}")]
    NonFinite(usize),
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Inner product `Σ conj(a_i) b_i`.
fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves `A x = b`, optionally right-preconditioned as `A P y = b`, `x = P y`,
/// starting from zero.
pub fn gmres(a: &dyn LinearMap, b: &[C64], precond: Option<&dyn LinearMap>, opts: &GmresOptions) -> Result<GmresOutcome, GmresError> {
    let n = a.dim();
    if b.len() != n {
        return Err(GmresError::Dimension { op: n, rhs: b.len() });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x: vec![C64::new(0.0, 0.0); n], iterations: 0, residuals: vec![0.0] });
    }
    let mut basis: Vec<Vec<C64>> = vec![b.iter().map(|z| z / bnorm).collect()];
    // Column j of the Hessenberg matrix after rotation, stored as rows of R.
    let mut r: Vec<Vec<C64>> = Vec::new();
    let mut rot: Vec<(f64, C64)> = Vec::new();
    let mut g = vec![C64::new(bnorm, 0.0)];
    let mut residuals = vec![1.0];
    let max_iter = opts.max_iter.min(n.max(1));

    let finish = |r: &[Vec<C64>], g: &[C64], basis: &[Vec<C64>]| -> Vec<C64> {
        let m = r.len();
        let mut y = vec![C64::new(0.0, 0.0); m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for j in (i + 1)..m {
                s -= r[j][i] * y[j];
            }
            y[i] = s / r[i][i];
        }
        let mut z = vec![C64::new(0.0, 0.0); n];
        for (v, yi) in basis.iter().zip(&y) {
            for (zk, vk) in z.iter_mut().zip(v) {
                *zk += vk * yi;
            }
        }
        match precond {
            Some(p) => p.apply(&z),
            None => z,
        }
    };

    for j in 0..max_iter {
        let pv = match precond {
            Some(p) => p.apply(&basis[j]),
            None => basis[j].clone(),
        };
        let mut w = a.apply(&pv);
        let mut h = Vec::with_capacity(j + 2);
        for v in &basis {
            let hij = inner(v, &w);
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
            h.push(hij);
        }
        let hnext = norm(&w);
        if !hnext.is_finite() {
            return Err(GmresError::NonFinite(j));
        }
        h.push(C64::new(hnext, 0.0));
        for (i, &(c, s)) in rot.iter().enumerate() {
            let t = c * h[i] + s * h[i + 1];
            h[i + 1] = -s.conj() * h[i] + c * h[i + 1];
            h[i] = t;
        }
        let (a_, b_) = (h[j], h[j + 1]);
        let denom = (a_.norm_sqr() + b_.norm_sqr()).sqrt();
        let (c, s) = if a_.norm() == 0.0 {
            (0.0, C64::new(1.0, 0.0))
        } else {
            let c = a_.norm() / denom;
            (c, (a_ / a_.norm()) * b_.conj() / denom)
        };
        h[j] = c * a_ + s * b_;
        h[j + 1] = C64::new(0.0, 0.0);
        rot.push((c, s));
        let gj = g[j];
        g.push(-s.conj() * gj);
        g[j] = c * gj;
        h.truncate(j + 1);
        r.push(h);
        let res = g[j + 1].norm() / bnorm;
        residuals.push(res);
        let happy = hnext <= 1e-14 * bnorm;
        if res <= opts.tol || happy {
            let x = finish(&r, &g, &basis);
            return Ok(GmresOutcome { x, iterations: j + 1, residuals });
        }
        basis.push(w.iter().map(|z| z / hnext).collect());
    }
    let x = finish(&r, &g, &basis[..r.len()]);
    let residual = *residuals.last().unwrap();
    let iterations = r.len();
    Err(GmresError::NotConverged { best: GmresOutcome { x, iterations, residuals }, iterations, residual })
}
