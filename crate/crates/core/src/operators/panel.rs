//! Closed-form integrals of `1/R` and its gradient over a flat triangle.

use crate::vec3::{self, Vec3};

/// Integrals over the source triangle for one observation point `x`:
/// `i0 = ∫ 1/R`, `iy = ∫ y/R` and `grad = ∫ ∇_x (1/R)`, with `R = |x − y|`.
#[derive(Clone, Copy, Debug)]
pub struct PanelIntegrals {
    pub i0: f64,
    pub iy: Vec3,
    pub grad: Vec3,
}

/// Edge-wise closed forms for a triangle with counter-clockwise vertices `v`
/// around the unit normal `n`.
pub fn panel_integrals(v: &[Vec3; 3], n: Vec3, x: Vec3) -> PanelIntegrals {
    let d = vec3::dot(vec3::sub(x, v[0]), n);
    let ad = d.abs();
    let rho = vec3::axpy(x, -d, n);
    let scale = vec3::dist(v[0], v[1]).max(vec3::dist(v[1], v[2])).max(vec3::dist(v[2], v[0]));
    let tiny = 1e-12 * scale;

    let mut sum_pf = 0.0;
    let mut sum_beta = 0.0;
    let mut i1 = [0.0; 3];
    let mut grad_t = [0.0; 3];
    for i in 0..3 {
        let a = v[i];
        let b = v[(i + 1) % 3];
        let len = vec3::dist(a, b);
        let l_hat = vec3::scale(1.0 / len, vec3::sub(b, a));
        let u_hat = vec3::cross(l_hat, n);
        let lp = vec3::dot(vec3::sub(b, rho), l_hat);
        let lm = vec3::dot(vec3::sub(a, rho), l_hat);
        let p0 = vec3::dot(vec3::sub(a, rho), u_hat);
        let r0sq = p0 * p0 + d * d;
        let rp = vec3::dist(x, b);
        let rm = vec3::dist(x, a);
        let r0 = r0sq.sqrt();

        let f = if r0 < tiny && lm < 0.0 && lp > 0.0 {
            // On the edge itself: the logarithm diverges but always enters
            // multiplied by p0 or r0², except in the gradient.
            0.0
        } else if lp < 0.0 {
            ((rm - lm) / (rp - lp)).ln()
        } else {
            ((rp + lp) / (rm + lm)).ln()
        };
        let beta = if r0 < tiny {
            0.0
        } else {
            (p0 * lp / (r0sq + ad * rp)).atan() - (p0 * lm / (r0sq + ad * rm)).atan()
        };

        sum_pf += p0 * f;
        sum_beta += beta;
        let c = r0sq * f + lp * rp - lm * rm;
        i1 = vec3::axpy(i1, 0.5 * c, u_hat);
        grad_t = vec3::axpy(grad_t, -f, u_hat);
    }
    let i0 = sum_pf - ad * sum_beta;
    let sgn = if d > tiny {
        1.0
    } else if d < -tiny {
        -1.0
    } else {
        0.0
    };
    PanelIntegrals {
        i0,
        iy: vec3::axpy(i1, i0, rho),
        grad: vec3::axpy(grad_t, -sgn * sum_beta, n),
    }
}
