//! Pure-state stochastic Schrödinger equation under continuous `x`
//! measurement, and the record-driven propagator.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::ops::{FockOperators, I, ZERO};
use crate::fock::state::{FockMoments, FockState, HEALTH_THRESHOLD};
use crate::gaussian::SingleSiteParams;
use crate::stochastic::{wiener_increment, MeasurementRecord, SeedSpec, SiteSeries, TimeGrid};

/// Reusable work vectors for the banded steppers.
#[derive(Debug, Clone)]
pub struct Workspace {
    y: DVector<Complex64>,
    z: DVector<Complex64>,
    w: DVector<Complex64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let zero = DVector::from_element(dim, ZERO);
        Self {
            y: zero.clone(),
            z: zero.clone(),
            w: zero,
        }
    }
}

/// One Itô step of
/// `d|ψ⟩ = [−ih0 a†a − (Γ/2)(x−⟨x⟩)²]|ψ⟩dt + √Γ(x−⟨x⟩)|ψ⟩dW`, renormalized.
/// Returns the emitted increment `dI = 2√Γ⟨x⟩dt + dW`.
pub fn sse_step_pure_in_place(
    state: &mut FockState,
    params: &SingleSiteParams,
    ops: &FockOperators,
    ws: &mut Workspace,
    dw: f64,
    dt: f64,
) -> f64 {
    let psi = &mut state.amps;
    let n2 = psi.norm_squared();
    ops.apply_x(psi, &mut ws.y);
    let m = psi.dotc(&ws.y).re / n2;
    // y = (x − m)ψ, z = (x − m)y
    ws.y.axpy(Complex64::new(-m, 0.0), psi, Complex64::new(1.0, 0.0));
    ops.apply_x(&ws.y, &mut ws.z);
    ws.z.axpy(Complex64::new(-m, 0.0), &ws.y, Complex64::new(1.0, 0.0));
    ops.apply_n(psi, &mut ws.w);
    let g = params.gamma;
    let rot = -I * (params.h0 * dt);
    let damp = Complex64::new(-0.5 * g * dt, 0.0);
    let kick = Complex64::new(g.sqrt() * dw, 0.0);
    for k in 0..psi.len() {
        psi[k] += rot * ws.w[k] + damp * ws.z[k] + kick * ws.y[k];
    }
    let nrm = psi.norm();
    *psi /= Complex64::new(nrm, 0.0);
    2.0 * g.sqrt() * m * dt + dw
}

/// One step of the same equation in exponential form: with
/// `dI = 2√Γ⟨x⟩dt + dW`, applies `exp(−ih0 a†a dt + √Γ dI x − Γ x² dt)` and
/// renormalizes. It agrees with the Itô step to `O(dt)` but, unlike the
/// explicit step, does not amplify the highest levels (whose mean-square
/// growth `∝ Γ²x⁴dt²` per step otherwise outruns the truncation over long
/// runs). Trajectory integrators use this form.
pub fn sse_step_exponential_in_place(
    state: &mut FockState,
    params: &SingleSiteParams,
    ops: &FockOperators,
    ws: &mut Workspace,
    dw: f64,
    dt: f64,
) -> f64 {
    let psi = &mut state.amps;
    ops.apply_x(psi, &mut ws.y);
    let m = psi.dotc(&ws.y).re / psi.norm_squared();
    let g = params.gamma;
    let d_i = 2.0 * g.sqrt() * m * dt + dw;
    let coeff = [
        -I * (params.h0 * dt),
        Complex64::new(g.sqrt() * d_i, 0.0),
        Complex64::new(-g * dt, 0.0),
    ];
    expm_banded_apply(psi, ops, ws, coeff);
    let nrm = psi.norm();
    *psi /= Complex64::new(nrm, 0.0);
    d_i
}

/// Functional form of [`sse_step_pure_in_place`] with the truncation-health check.
pub fn sse_step_pure(
    state: &FockState,
    params: &SingleSiteParams,
    ops: &FockOperators,
    dw: f64,
    dt: f64,
) -> Result<(FockState, f64)> {
    let mut next = state.clone();
    let mut ws = Workspace::new(state.dim());
    let d_i = sse_step_pure_in_place(&mut next, params, ops, &mut ws, dw, dt);
    next.check_health(HEALTH_THRESHOLD)?;
    Ok((next, d_i))
}

/// Output of a Fock-space trajectory.
#[derive(Debug, Clone)]
pub struct FockTrajectory {
    pub final_state: FockState,
    pub record: MeasurementRecord,
    /// `(step, moments)` every `moment_stride` steps (and at the end).
    pub moments: Vec<(usize, FockMoments)>,
}

/// Largest basis the adaptive integrator grows to.
pub const MAX_ADAPTIVE_DIM: usize = 256;

/// Integrates the SSE with noise supplied step by step by `noise`. When the
/// top-decile population crosses `health_threshold`, the basis is enlarged
/// by half (zero-padding the amplitudes) while it stays within `max_dim`;
/// beyond that the health violation is returned.
#[allow(clippy::too_many_arguments)]
fn integrate<F: FnMut(usize) -> f64>(
    params: &SingleSiteParams,
    psi0: &FockState,
    ops: &FockOperators,
    grid: &TimeGrid,
    moment_stride: usize,
    health_threshold: f64,
    max_dim: usize,
    mut noise: F,
) -> Result<FockTrajectory> {
    if psi0.dim() != ops.dim() {
        return Err(Error::ShapeMismatch("state and operators differ in truncation".into()));
    }
    let mut grown: Option<FockOperators> = None;
    let mut state = FockState::new(psi0.amps.clone())?;
    let mut ws = Workspace::new(ops.dim());
    let mut record = SiteSeries::zeros(1, grid.n_steps);
    let mut moments = Vec::new();
    let stride = moment_stride.max(1);
    moments.push((0, state.moments(ops)));
    for k in 0..grid.n_steps {
        let cur = grown.as_ref().unwrap_or(ops);
        let dw = noise(k);
        let d_i = sse_step_exponential_in_place(&mut state, params, cur, &mut ws, dw, grid.dt);
        record.set(0, k, d_i);
        if let Err(e) = state.check_health(health_threshold) {
            let dim = state.dim();
            let next = dim + dim / 2;
            if next > max_dim {
                return Err(e);
            }
            let mut amps = DVector::from_element(next, ZERO);
            amps.rows_mut(0, dim).copy_from(&state.amps);
            state = FockState::new(amps)?;
            ws = Workspace::new(next);
            grown = Some(FockOperators::new(next)?);
        }
        let cur = grown.as_ref().unwrap_or(ops);
        if (k + 1) % stride == 0 || k + 1 == grid.n_steps {
            moments.push((k + 1, state.moments(cur)));
        }
    }
    Ok(FockTrajectory {
        final_state: state,
        record: MeasurementRecord::chain(*grid, record)?,
        moments,
    })
}

/// Seeded SSE trajectory (one `N(0, dt)` draw per step from `seed`) at the
/// fixed truncation of `ops`.
pub fn simulate_fock_trajectory(
    params: &SingleSiteParams,
    psi0: &FockState,
    ops: &FockOperators,
    grid: &TimeGrid,
    seed: &SeedSpec,
    moment_stride: usize,
) -> Result<FockTrajectory> {
    let mut rng = seed.rng();
    let sqrt_dt = grid.dt.sqrt();
    integrate(params, psi0, ops, grid, moment_stride, HEALTH_THRESHOLD, ops.dim(), |_| {
        wiener_increment(&mut rng, sqrt_dt)
    })
}

/// As [`simulate_fock_trajectory`], but the basis grows (up to
/// [`MAX_ADAPTIVE_DIM`]) instead of failing when the state reaches the
/// truncation. The final state may therefore be larger than `ops`; use
/// [`FockTrajectory::final_operators`] for its moments.
pub fn simulate_fock_trajectory_adaptive(
    params: &SingleSiteParams,
    psi0: &FockState,
    ops: &FockOperators,
    grid: &TimeGrid,
    seed: &SeedSpec,
    moment_stride: usize,
) -> Result<FockTrajectory> {
    let mut rng = seed.rng();
    let sqrt_dt = grid.dt.sqrt();
    let max_dim = MAX_ADAPTIVE_DIM.max(ops.dim());
    integrate(params, psi0, ops, grid, moment_stride, HEALTH_THRESHOLD, max_dim, |_| {
        wiener_increment(&mut rng, sqrt_dt)
    })
}

impl FockTrajectory {
    /// Operators matching the final state's truncation.
    pub fn final_operators(&self) -> Result<FockOperators> {
        FockOperators::new(self.final_state.dim())
    }
}

/// SSE trajectory driven by a given Wiener sequence `dw` (one per step).
pub fn simulate_fock_with_noise(
    params: &SingleSiteParams,
    psi0: &FockState,
    ops: &FockOperators,
    grid: &TimeGrid,
    dw: &[f64],
    moment_stride: usize,
) -> Result<FockTrajectory> {
    if dw.len() != grid.n_steps {
        return Err(Error::ShapeMismatch("noise length differs from grid".into()));
    }
    integrate(params, psi0, ops, grid, moment_stride, HEALTH_THRESHOLD, ops.dim(), |k| dw[k])
}

/// `ψ ← exp(G)ψ` for a banded generator `G = a0·n + a1·x + a2·x·x`, by a
/// Taylor series with substeps so that each substep has `‖G‖ ≲ 1/2`.
fn expm_banded_apply(
    psi: &mut DVector<Complex64>,
    ops: &FockOperators,
    ws: &mut Workspace,
    coeff: [Complex64; 3],
) {
    let d = ops.dim() as f64;
    let bound = coeff[0].norm() * d + coeff[1].norm() * (2.0 * d).sqrt() + coeff[2].norm() * 2.0 * d;
    let substeps = (2.0 * bound).ceil().max(1.0) as usize;
    let scale = 1.0 / substeps as f64;
    let c: Vec<Complex64> = coeff.iter().map(|&a| a * scale).collect();
    let mut term = DVector::from_element(psi.len(), ZERO);
    for _ in 0..substeps {
        term.copy_from(psi);
        for order in 1..40 {
            ops.apply_n(&term, &mut ws.w);
            ops.apply_x(&term, &mut ws.y);
            ops.apply_x(&ws.y, &mut ws.z);
            let inv = 1.0 / order as f64;
            for k in 0..term.len() {
                term[k] = (c[0] * ws.w[k] + c[1] * ws.y[k] + c[2] * ws.z[k]) * inv;
            }
            *psi += &term;
            if term.norm() <= 1e-15 * psi.norm() {
                break;
            }
        }
    }
}

/// Time-ordered product of per-step exponentials
/// `exp(−iH dt + √Γ dI x − (Γ/2)(x + x†)x dt)` applied to `psi0`, normalized
/// after every step. The record must be a single-site record.
pub fn propagate_record_driven(
    params: &SingleSiteParams,
    record: &MeasurementRecord,
    psi0: &FockState,
    ops: &FockOperators,
) -> Result<FockState> {
    if record.sites() != 1 {
        return Err(Error::ShapeMismatch("record-driven propagation needs one site".into()));
    }
    if psi0.dim() != ops.dim() {
        return Err(Error::ShapeMismatch("state and operators differ in truncation".into()));
    }
    let dt = record.grid().dt;
    let g = params.gamma;
    let mut psi = psi0.amps.clone();
    let mut ws = Workspace::new(ops.dim());
    for &d_i in record.site(0) {
        let coeff = [
            -I * (params.h0 * dt),
            Complex64::new(g.sqrt() * d_i, 0.0),
            Complex64::new(-g * dt, 0.0),
        ];
        expm_banded_apply(&mut psi, ops, &mut ws, coeff);
        let nrm = psi.norm();
        psi /= Complex64::new(nrm, 0.0);
    }
    let out = FockState::new(psi)?;
    out.check_health(HEALTH_THRESHOLD)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_exponential_matches_dense() {
        let ops = FockOperators::new(16).unwrap();
        let coeff = [Complex64::new(0.0, -0.3), Complex64::new(0.2, 0.0), Complex64::new(-0.05, 0.0)];
        let gen = &ops.n * coeff[0] + &ops.x * coeff[1] + &ops.x2 * coeff[2];
        let psi0 = FockState::superposition(0, 3, 16).unwrap();
        let dense = gen.exp() * &psi0.amps;
        let mut psi = psi0.amps.clone();
        let mut ws = Workspace::new(16);
        expm_banded_apply(&mut psi, &ops, &mut ws, coeff);
        assert!((psi - dense).norm() < 1e-12);
    }

    #[test]
    fn step_preserves_norm() {
        let ops = FockOperators::new(24).unwrap();
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        let s = FockState::superposition(0, 5, 24).unwrap();
        let (next, _) = sse_step_pure(&s, &p, &ops, 0.03, 1e-3).unwrap();
        assert!((next.norm() - 1.0).abs() < 1e-12);
    }
}
