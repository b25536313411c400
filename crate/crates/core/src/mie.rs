//! Mie series for plane-wave scattering by a homogeneous or perfectly
//! conducting sphere centred at the origin.
//!
//! Far fields use the normalization `E^sc(x) ≈ e^{ik|x|}/(4π|x|) F(x̂)`, so
//! `F = (4πi/k) [S₂ (p·ρ̂) θ̂ + S₁ (p·φ̂) φ̂]` in the frame whose polar axis is
//! the incidence direction.

use crate::operators::MediumParameters;
use crate::solve::{FarFieldSample, PlaneWave};
use crate::vec3::{self, CVec3, Vec3};
use crate::C64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MieError {
    #[error("radius must be positive, got {0}")]
    Radius(f64),
    #[error("truncation order {n_max} is below k·a + 10 = {min}")]
    Truncation { n_max: usize, min: f64 },
    #[error("series terms not decaying: |a_n| + |b_n| = {tail:e} at n = {n}")]
    NotConverged { n: usize, tail: f64 },
    #[error("incidence wavenumber {wave} differs from medium wavenumber {medium}")]
    Wavenumber { wave: f64, medium: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MieMaterial {
    Pec,
    Dielectric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MieConfig {
    pub radius: f64,
    pub params: MediumParameters,
    pub material: MieMaterial,
    pub wave: PlaneWave,
    pub n_max: usize,
}

impl MieConfig {
    /// Uses the truncation `n_max = ⌈x + 4x^{1/3}⌉ + 10` with `x = k₀a`.
    pub fn new(radius: f64, params: MediumParameters, material: MieMaterial, wave: PlaneWave) -> Result<Self, MieError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(MieError::Radius(radius));
        }
        if (wave.k0 - params.k0).abs() > 1e-12 * params.k0 {
            return Err(MieError::Wavenumber { wave: wave.k0, medium: params.k0 });
        }
        let x = params.k0 * radius;
        let n_max = (x + 4.0 * x.cbrt()).ceil() as usize + 10;
        Ok(MieConfig { radius, params, material, wave, n_max })
    }

    pub fn with_n_max(mut self, n_max: usize) -> Result<Self, MieError> {
        let min = self.size_parameter() + 10.0;
        if (n_max as f64) < min {
            return Err(MieError::Truncation { n_max, min });
        }
        self.n_max = n_max;
        Ok(self)
    }

    pub fn size_parameter(&self) -> f64 {
        self.params.k0 * self.radius
    }
}

/// Riccati–Bessel functions `ψ_n(ρ) = ρ j_n(ρ)` for `n = 0..=n`, by downward recurrence.
fn riccati_psi(n: usize, rho: f64) -> Vec<f64> {
    let start = n + 20 + rho.ceil() as usize;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    for m in (1..=start).rev() {
        j[m - 1] = (2 * m + 1) as f64 / rho * j[m] - j[m + 1];
        if j[m - 1].abs() > 1e250 {
            for v in j.iter_mut().skip(m - 1) {
                *v *= 1e-250;
            }
        }
    }
    // Normalize against whichever of j_0, j_1 is better conditioned.
    let (s, c) = rho.sin_cos();
    let j0 = s / rho;
    let j1 = s / (rho * rho) - c / rho;
    let f = if j0.abs() >= j1.abs() { j0 / j[0] } else { j1 / j[1] };
    (0..=n).map(|m| rho * j[m] * f).collect()
}

/// `ξ_n(ρ) = ρ h_n^{(1)}(ρ)` for `n = 0..=n`, with `y_n` by upward recurrence.
fn riccati_xi(n: usize, rho: f64, psi: &[f64]) -> Vec<C64> {
    let (s, c) = rho.sin_cos();
    let mut y = vec![0.0; n + 2];
    y[0] = -c / rho;
    y[1] = -c / (rho * rho) - s / rho;
    for m in 1..n {
        y[m + 1] = (2 * m + 1) as f64 / rho * y[m] - y[m - 1];
    }
    (0..=n).map(|m| C64::new(psi[m], rho * y[m])).collect()
}

/// Mie coefficients `(a_n, b_n)` for `n = 1..=n_max`.
pub fn coefficients(cfg: &MieConfig) -> Vec<(C64, C64)> {
    let n = cfg.n_max;
    let x = cfg.size_parameter();
    let psi = riccati_psi(n, x);
    let xi = riccati_xi(n, x, &psi);
    let dpsi = |f: &[f64], m: usize, r: f64| f[m - 1] - m as f64 * f[m] / r;
    let dxi = |m: usize| xi[m - 1] - xi[m] * (m as f64 / x);
    match cfg.material {
        MieMaterial::Pec => (1..=n).map(|m| (dpsi(&psi, m, x) / dxi(m), psi[m] / xi[m])).collect(),
        MieMaterial::Dielectric => {
            let mu1 = cfg.params.mu_r;
            let ri = (cfg.params.eps_r * cfg.params.mu_r).sqrt();
            let mx = ri * x;
            let psi_in = riccati_psi(n, mx);
            (1..=n)
                .map(|m| {
                    let (pi, dpi) = (psi_in[m], dpsi(&psi_in, m, mx));
                    let (po, dpo) = (psi[m], dpsi(&psi, m, x));
                    let a = (ri * pi * dpo - mu1 * po * dpi) / (ri * pi * dxi(m) - mu1 * xi[m] * dpi);
                    let b = (mu1 * pi * dpo - ri * po * dpi) / (mu1 * pi * dxi(m) - ri * xi[m] * dpi);
                    (a, b)
                })
                .collect()
        }
    }
}

fn check_tail(coef: &[(C64, C64)]) -> Result<(), MieError> {
    let size = |c: &(C64, C64)| c.0.norm() + c.1.norm();
    let head = coef.iter().map(size).fold(0.0, f64::max);
    let n = coef.len();
    let tail = size(&coef[n - 1]);
    if !(tail <= 1e-14 * head.max(1e-300)) && tail != 0.0 {
        return Err(MieError::NotConverged { n, tail });
    }
    Ok(())
}

/// Scattering amplitudes `(S₁, S₂)` at scattering angle `θ` with `cos θ = mu`.
pub fn amplitudes(coef: &[(C64, C64)], mu: f64) -> (C64, C64) {
    let (mut s1, mut s2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let (mut pi_prev, mut pi) = (0.0, 1.0);
    for (i, (a, b)) in coef.iter().enumerate() {
        let n = (i + 1) as f64;
        let tau = n * mu * pi - (n + 1.0) * pi_prev;
        let w = (2.0 * n + 1.0) / (n * (n + 1.0));
        s1 += w * (a * pi + b * tau);
        s2 += w * (a * tau + b * pi);
        let next = ((2.0 * n + 1.0) * mu * pi - (n + 1.0) * pi_prev) / n;
        pi_prev = pi;
        pi = next;
    }
    (s1, s2)
}

/// Scattered far-field amplitude in each unit direction of `dirs`.
pub fn mie_far_field(cfg: &MieConfig, dirs: &[Vec3]) -> Result<Vec<CVec3>, MieError> {
    let coef = coefficients(cfg);
    check_tail(&coef)?;
    let k = cfg.params.k0;
    let d = cfg.wave.d;
    let p = cfg.wave.p;
    // Any unit vector orthogonal to d, used where the scattering plane is undefined.
    let fallback = {
        let a = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        vec3::normalize(vec3::sub(a, vec3::scale(vec3::dot(a, d), d)))
    };
    let pre = C64::new(0.0, 4.0 * std::f64::consts::PI / k);
    Ok(dirs
        .iter()
        .map(|&x| {
            let x = vec3::normalize(x);
            let mu = vec3::dot(x, d).clamp(-1.0, 1.0);
            let perp = vec3::sub(x, vec3::scale(mu, d));
            let rho = if vec3::norm(perp) > 1e-12 { vec3::normalize(perp) } else { fallback };
            let sin = (1.0 - mu * mu).sqrt();
            let theta_hat = vec3::sub(vec3::scale(mu, rho), vec3::scale(sin, d));
            let phi_hat = vec3::cross(d, rho);
            let (s1, s2) = amplitudes(&coef, mu);
            let a = pre * s2 * vec3::cdot_r(p, rho);
            let b = pre * s1 * vec3::cdot_r(p, phi_hat);
            vec3::cadd(vec3::cscale(a, theta_hat), vec3::cscale(b, phi_hat))
        })
        .collect())
}

/// Far field on the grid `θ_i = 2πi/n` in the `z = 0` plane.
pub fn mie_far_field_sample(cfg: &MieConfig, n_angles: usize) -> Result<FarFieldSample, MieError> {
    let dirs = crate::operators::circle_directions(n_angles);
    let values = mie_far_field(cfg, &dirs)?;
    let stacked: Vec<C64> = values.iter().flat_map(|v| v.iter().copied()).collect();
    Ok(FarFieldSample::from_stacked(&stacked, n_angles))
}

/// Extinction cross section from the forward amplitude, `Im(p̄·F(d)) / (k|p|²)`.
pub fn extinction_cross_section(cfg: &MieConfig) -> Result<f64, MieError> {
    let f = mie_far_field(cfg, &[cfg.wave.d])?[0];
    let p = cfg.wave.p;
    let pf: C64 = (0..3).map(|i| p[i].conj() * f[i]).sum();
    Ok(pf.im / (cfg.params.k0 * vec3::cnorm(p).powi(2)))
}

/// Scattering cross section `(2π/k²) Σ (2n+1)(|a_n|² + |b_n|²)`.
pub fn scattering_cross_section(cfg: &MieConfig) -> f64 {
    let k = cfg.params.k0;
    let s: f64 = coefficients(cfg)
        .iter()
        .enumerate()
        .map(|(i, (a, b))| (2 * i + 3) as f64 * (a.norm_sqr() + b.norm_sqr()))
        .sum();
    2.0 * std::f64::consts::PI / (k * k) * s
}

/// Exterior total normal field `E·r̂` on the sphere surface, at the surface
/// points in the directions of `dirs`.
pub fn mie_surface_normal_field(cfg: &MieConfig, dirs: &[Vec3]) -> Result<Vec<C64>, MieError> {
    let coef = coefficients(cfg);
    check_tail(&coef)?;
    let rho = cfg.size_parameter();
    let psi = riccati_psi(cfg.n_max, rho);
    let xi = riccati_xi(cfg.n_max, rho, &psi);
    let d = cfg.wave.d;
    let i = C64::new(0.0, 1.0);
    Ok(dirs
        .iter()
        .map(|&x| {
            let x = vec3::normalize(x);
            let mu = vec3::dot(x, d).clamp(-1.0, 1.0);
            let perp = vec3::sub(x, vec3::scale(mu, d));
            let sin = vec3::norm(perp);
            if sin < 1e-14 {
                return C64::new(0.0, 0.0);
            }
            let proj = vec3::cdot_r(cfg.wave.p, vec3::scale(1.0 / sin, perp));
            let (mut sum, mut pow) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
            let (mut pi_prev, mut pi) = (0.0, 1.0);
            for (k, (a, _)) in coef.iter().enumerate() {
                let n = (k + 1) as f64;
                pow *= i;
                sum += pow * (2.0 * n + 1.0) * pi * (a * xi[k + 1] - psi[k + 1]) / (rho * rho);
                let next = ((2.0 * n + 1.0) * mu * pi - (n + 1.0) * pi_prev) / n;
                pi_prev = pi;
                pi = next;
            }
            i * proj * sin * sum
        })
        .collect())
}
