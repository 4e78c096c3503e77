//! Upper orthant probabilities of standard normal vectors by quadrature.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

/// `P(Z ≥ t)` for standard normal `Z`.
pub fn upper_tail(t: f64) -> f64 {
    0.5 * erfc(t * FRAC_1_SQRT_2)
}

pub fn density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

const GL_POINTS: usize = 16;
const SEGMENTS: usize = 48;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_POINTS;
        (0..n)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    })
}

/// `∫_a^∞ φ(z) f(z) dz` for bounded `f`, truncating where `φ` is negligible.
fn integrate_tail(a: f64, f: impl Fn(f64) -> f64) -> f64 {
    let lo = a.max(-9.0);
    let hi = lo.max(0.0) + 9.5;
    let h = (hi - lo) / SEGMENTS as f64;
    let nodes = gauss_legendre();
    let mut total = 0.0;
    for s in 0..SEGMENTS {
        let mid = lo + (s as f64 + 0.5) * h;
        for (x, w) in nodes {
            let z = mid + 0.5 * h * x;
            total += 0.5 * h * w * density(z) * f(z);
        }
    }
    total
}

/// `P(Z₁ ≥ a, Z₂ ≥ b)` for standard normals with correlation `rho`.
pub fn bivariate_upper(a: f64, b: f64, rho: f64) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    if rho >= 1.0 - 1e-12 {
        return upper_tail(a.max(b));
    }
    if rho <= -1.0 + 1e-12 {
        // Z₂ = −Z₁: a ≤ Z₁ ≤ −b
        return (upper_tail(a) - upper_tail(-b)).max(0.0);
    }
    let s = (1.0 - rho * rho).sqrt();
    integrate_tail(a, |z| upper_tail((b - rho * z) / s))
}

/// `P(Z₁ ≥ a, Z₂ ≥ b, Z₃ ≥ c)` for a standard normal vector with the given
/// pairwise correlations. `None` when conditioning on `Z₁` is degenerate.
pub fn trivariate_upper(t: [f64; 3], r12: f64, r13: f64, r23: f64) -> Option<f64> {
    let v2 = 1.0 - r12 * r12;
    let v3 = 1.0 - r13 * r13;
    if v2 < 1e-12 || v3 < 1e-12 {
        return None;
    }
    let (s2, s3) = (v2.sqrt(), v3.sqrt());
    let rc = ((r23 - r12 * r13) / (s2 * s3)).clamp(-1.0, 1.0);
    Some(integrate_tail(t[0], |z| {
        bivariate_upper((t[1] - r12 * z) / s2, (t[2] - r13 * z) / s3, rc)
    }))
}
