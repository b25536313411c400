//! Helmholtz Green's function `G(R) = e^{ikR}/(4πR)` and the pieces used for
//! singularity subtraction.

use std::f64::consts::PI;

use crate::C64;

const FOUR_PI: f64 = 4.0 * PI;

/// `G(R)` and `φ(R) = G'(R)/R = G (ikR − 1)/R²`, so that `∇_x G = φ (x − y)`.
#[inline]
pub fn green(k: f64, r: f64) -> (C64, C64) {
    let e = C64::from_polar(1.0, k * r);
    let g = e / (FOUR_PI * r);
    let phi = g * C64::new(-1.0, k * r) / (r * r);
    (g, phi)
}

/// Regular parts `G − 1/(4πR)` and `φ + 1/(4πR³)`.
///
/// Both stay finite as `R → 0` (`φ_reg` grows like `1/R`, but it always
/// multiplies `x − y`); at `R = 0` the limits `ik/(4π)` and `0` are returned.
#[inline]
pub fn green_regular(k: f64, r: f64) -> (C64, C64) {
    let kr = k * r;
    if r == 0.0 {
        return (C64::new(0.0, k / FOUR_PI), C64::new(0.0, 0.0));
    }
    let half = (0.5 * kr).sin();
    let g = C64::new(-2.0 * half * half, kr.sin()) / (FOUR_PI * r);
    let num = if kr < 0.2 {
        // (z − 1)e^z + 1 = Σ_{n≥2} (n − 1) zⁿ / n!, z = ikR.
        let z = C64::new(0.0, kr);
        let mut term = z;
        let mut sum = C64::new(0.0, 0.0);
        for n in 2..=10u32 {
            term = term * z / f64::from(n);
            sum += term * f64::from(n - 1);
        }
        sum
    } else {
        C64::new(-1.0, kr) * C64::from_polar(1.0, kr) + 1.0
    };
    (g, num / (FOUR_PI * r * r * r))
}
