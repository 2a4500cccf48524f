//! Exact record-driven solution `|ψ⟩ ∝ e^{L1} e^{Qt} e^{L2} |ψ0⟩` and the
//! Gaussian state onto which `e^{Qt}` projects.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::ops::{FockOperators, I, ZERO};
use crate::fock::state::{FockState, HEALTH_THRESHOLD};
use crate::gaussian::{memory_time_closed_form, steady_state_single, SingleSiteParams};
use crate::stochastic::MeasurementRecord;

/// `F = 1/τ + iΓh0τ`, the root of `F² = −h0² + 2iΓh0` with positive real
/// part. The closed-form memory time is checked against `1/(2Γv_x)`.
pub fn decay_constant(params: &SingleSiteParams) -> Result<Complex64> {
    let ss = steady_state_single(params)?;
    let tau = memory_time_closed_form(params);
    if ((tau - ss.tau) / ss.tau).abs() > 1e-12 {
        return Err(Error::Instability(format!(
            "memory-time closed forms disagree: {tau} vs {}",
            ss.tau
        )));
    }
    Ok(Complex64::new(1.0 / tau, params.gamma * params.h0 * tau))
}

/// The quadratic generator `Q = −ih0 a†a − Γ x²` (dense).
pub fn quadratic_generator(params: &SingleSiteParams, ops: &FockOperators) -> DMatrix<Complex64> {
    &ops.n * (-I * params.h0) - &ops.x2 * Complex64::new(params.gamma, 0.0)
}

/// Record integrals `(A1, A2) = (Σ_k e^{−F(t−t_k)} dI_k, Σ_k e^{−F t_k} dI_k)`
/// over the first `n` steps (Itô left-point sums, `t = n·dt`).
pub fn record_integrals(record: &[f64], dt: f64, f: Complex64) -> (Complex64, Complex64) {
    let n = record.len();
    let t = n as f64 * dt;
    let mut a1 = ZERO;
    let mut a2 = ZERO;
    for (k, &d_i) in record.iter().enumerate() {
        let tk = k as f64 * dt;
        a1 += (-f * (t - tk)).exp() * d_i;
        a2 += (-f * tk).exp() * d_i;
    }
    (a1, a2)
}

/// Builds `L1 = (√Γ/2)(x + h0 p/F)·A1`, `L2 = (√Γ/2)(x − h0 p/F)·A2`,
/// `Q = −ih0 a†a − Γx²` for the record segment covering `[0, t]` and returns
/// the normalized `e^{L1} e^{Qt} e^{L2}|ψ0⟩`.
pub fn decompose_appendix_b(
    params: &SingleSiteParams,
    record: &MeasurementRecord,
    t: f64,
    psi0: &FockState,
    ops: &FockOperators,
) -> Result<FockState> {
    if record.sites() != 1 {
        return Err(Error::ShapeMismatch("decomposition needs a single-site record".into()));
    }
    if psi0.dim() != ops.dim() {
        return Err(Error::ShapeMismatch("state and operators differ in truncation".into()));
    }
    let grid = record.grid();
    let n = grid.index_of(grid.t0 + t)?;
    if t == 0.0 || n == 0 {
        return Ok(psi0.clone());
    }
    let dt = grid.dt;
    let segment = &record.site(0)[..n];
    let f = decay_constant(params)?;
    let (a1, a2) = record_integrals(segment, dt, f);
    let sg = Complex64::new(params.gamma.sqrt() / 2.0, 0.0);
    let hp = &ops.p * (Complex64::new(params.h0, 0.0) / f);
    let l1 = (&ops.x + &hp) * (sg * a1);
    let l2 = (&ops.x - &hp) * (sg * a2);
    let q = quadratic_generator(params, ops) * Complex64::new(n as f64 * dt, 0.0);
    let psi: DVector<Complex64> = l1.exp() * (q.exp() * (l2.exp() * &psi0.amps));
    let out = FockState::new(psi)?;
    out.check_health(HEALTH_THRESHOLD)?;
    Ok(out)
}

/// Zero-mean pure Gaussian state with the steady covariances. Its
/// wavefunction is `exp(−a x²)` with `a = 1/(4v_x) − iu/(2v_x)`, i.e. the
/// squeezed vacuum annihilated by `(2a+1)â + (2a−1)â†`, whose amplitudes
/// obey `c_{n+1} = ζ √(n/(n+1)) c_{n−1}` with `ζ = −(2a−1)/(2a+1)`.
pub fn gaussian_fixed_point(params: &SingleSiteParams, n_dim: usize) -> Result<FockState> {
    let ss = steady_state_single(params)?;
    let a = Complex64::new(1.0 / (4.0 * ss.v_x), -ss.u / (2.0 * ss.v_x));
    let one = Complex64::new(1.0, 0.0);
    let zeta = -(a * 2.0 - one) / (a * 2.0 + one);
    let mut amps = DVector::from_element(n_dim, ZERO);
    amps[0] = one;
    let mut k = 1;
    while k + 1 < n_dim {
        amps[k + 1] = amps[k - 1] * zeta * (k as f64 / (k + 1) as f64).sqrt();
        k += 2;
    }
    FockState::new(amps)
}
