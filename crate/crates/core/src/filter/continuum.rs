//! Long-wavelength (large correlation length) form of the lattice `K_p`.

use std::f64::consts::PI;

use crate::gaussian::{correlation_length, LatticeParams};

/// Ballistic velocity `c = √(JΓd/2)` of the continuum kernel.
pub fn continuum_velocity(params: &LatticeParams) -> f64 {
    (params.j * params.gamma * params.dim() as f64 / 2.0).sqrt()
}

/// Whether the parameters sit in the regime the continuum form describes
/// (gapped with `ξ ≥ 5` lattice spacings).
pub fn continuum_regime(params: &LatticeParams) -> bool {
    correlation_length(params).map(|xi| xi >= 5.0).unwrap_or(false)
}

/// `K_p(r,T) ≈ (1/2π)[r/(c²T² + (r − cT)²) − r/(c²T² + (r + cT)²)]`, with
/// `c = √(JΓd/2)`. The expression equals `(2cT/π)·r²/(r⁴ + 4c⁴T⁴)`, so it is
/// even in `r`, vanishes at `r = 0`, and peaks at `|r| = √2·cT`.
pub fn continuum_kernel_kp(r: f64, t: f64, params: &LatticeParams) -> f64 {
    let c = continuum_velocity(params);
    let ct = c * t;
    let base = ct * ct;
    (r / (base + (r - ct).powi(2)) - r / (base + (r + ct).powi(2))) / (2.0 * PI)
}

/// Location of the maximum over the integer offsets `0..=r_max` of `f`.
pub fn argmax_offset<F: Fn(i64) -> f64>(f: F, r_max: i64) -> i64 {
    (0..=r_max)
        .max_by(|&a, &b| f(a).total_cmp(&f(b)))
        .unwrap_or(0)
}
