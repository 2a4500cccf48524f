//! Single monitored mode: Riccati covariances, record-driven means,
//! closed-form steady state and unconditional moments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stochastic::{wiener_increment, MeasurementRecord, SeedSpec, SiteSeries, TimeGrid};

/// Onsite energy `h0` and measurement rate `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleSiteParams {
    pub h0: f64,
    pub gamma: f64,
}

impl SingleSiteParams {
    pub fn new(h0: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if !h0.is_finite() {
            return Err(invalid("h0", "must be finite"));
        }
        Ok(Self { h0, gamma })
    }

    /// Parameters without the positivity requirement on `gamma`, for the
    /// unmonitored (`gamma = 0`) limit.
    pub fn unmonitored(h0: f64) -> Self {
        Self { h0, gamma: 0.0 }
    }
}

/// Gaussian state of one mode: quadrature means and covariances, with
/// `u = ⟨{x,p}⟩/2 − ⟨x⟩⟨p⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState1 {
    pub mean_x: f64,
    pub mean_p: f64,
    pub v_x: f64,
    pub v_p: f64,
    pub u: f64,
}

impl GaussianState1 {
    pub fn vacuum() -> Self {
        Self::coherent(0.0, 0.0)
    }

    pub fn coherent(x: f64, p: f64) -> Self {
        Self {
            mean_x: x,
            mean_p: p,
            v_x: 0.5,
            v_p: 0.5,
            u: 0.0,
        }
    }

    /// `v_x·v_p − u²`, which is `1/4` for pure states.
    pub fn uncertainty_product(&self) -> f64 {
        self.v_x * self.v_p - self.u * self.u
    }

    pub fn satisfies_heisenberg(&self, tol: f64) -> bool {
        self.v_x > 0.0 && self.v_p > 0.0 && self.uncertainty_product() >= 0.25 - tol
    }

    pub fn covariances(&self) -> [f64; 3] {
        [self.v_x, self.v_p, self.u]
    }

    pub fn with_covariances(mut self, c: [f64; 3]) -> Self {
        self.v_x = c[0];
        self.v_p = c[1];
        self.u = c[2];
        self
    }
}

/// Steady-state covariances together with the memory time `τ = 1/(2Γ v_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState1 {
    pub v_x: f64,
    pub v_p: f64,
    pub u: f64,
    pub tau: f64,
}

impl SteadyState1 {
    pub fn state(&self) -> GaussianState1 {
        GaussianState1 {
            mean_x: 0.0,
            mean_p: 0.0,
            v_x: self.v_x,
            v_p: self.v_p,
            u: self.u,
        }
    }

    /// Damping rate `1/τ = 2Γ v_x` of the record filters.
    pub fn decay_rate(&self) -> f64 {
        1.0 / self.tau
    }
}

/// Closed-form steady covariances at energy `h` and rate `gamma`, written in
/// terms of `a = h/4Γ`, `s = √(a² + 1/4)`:
/// `v_x = √(h/8Γ)/√(a+s)`, `v_p = √(2Γ/h)·s/√(a+s)`, `u = 1/(4(a+s))`.
///
/// This is the common kernel of the single-site and per-momentum solutions.
pub(crate) fn steady_triple(h: f64, gamma: f64) -> (f64, f64, f64) {
    let a = h / (4.0 * gamma);
    let s = (a * a + 0.25).sqrt();
    let root = (a + s).sqrt();
    let v_x = (h / (8.0 * gamma)).sqrt() / root;
    let v_p = (2.0 * gamma / h).sqrt() * s / root;
    let u = 0.25 / (a + s);
    (v_x, v_p, u)
}

/// Unique stable fixed point of the Riccati flow and the memory time.
pub fn steady_state_single(params: &SingleSiteParams) -> Result<SteadyState1> {
    if !(params.h0 > 0.0) {
        return Err(Error::UnsupportedParameter(format!(
            "steady state requires h0 > 0, got {}",
            params.h0
        )));
    }
    let (v_x, v_p, u) = steady_triple(params.h0, params.gamma);
    Ok(SteadyState1 {
        v_x,
        v_p,
        u,
        tau: 1.0 / (2.0 * params.gamma * v_x),
    })
}

/// Memory time from `1/τ² = h0Γ²/(h0/2 + √(h0²/4 + Γ²))`.
pub fn memory_time_closed_form(params: &SingleSiteParams) -> f64 {
    let h = params.h0;
    let g = params.gamma;
    let inv_tau2 = h * g * g / (h / 2.0 + (h * h / 4.0 + g * g).sqrt());
    1.0 / inv_tau2.sqrt()
}

/// Right-hand side of the covariance equations
/// `v̇_x = 2h u − 4Γv_x²`, `v̇_p = −2h u + Γ − 4Γu²`, `u̇ = h(v_p − v_x) − 4Γ u v_x`.
#[inline]
pub fn riccati_rhs(c: [f64; 3], h: f64, gamma: f64) -> [f64; 3] {
    let [vx, vp, u] = c;
    [
        2.0 * h * u - 4.0 * gamma * vx * vx,
        -2.0 * h * u + gamma - 4.0 * gamma * u * u,
        h * (vp - vx) - 4.0 * gamma * u * vx,
    ]
}

/// One classical RK4 step of the covariance equations (no validation).
#[inline]
pub(crate) fn rk4_covariances(c: [f64; 3], h: f64, gamma: f64, dt: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = riccati_rhs(c, h, gamma);
    let k2 = riccati_rhs(add(c, k1, dt / 2.0), h, gamma);
    let k3 = riccati_rhs(add(c, k2, dt / 2.0), h, gamma);
    let k4 = riccati_rhs(add(c, k3, dt), h, gamma);
    [
        c[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        c[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        c[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// Advances the covariances of `state` by one RK4 step; means are untouched.
pub fn riccati_step_single(
    state: &GaussianState1,
    params: &SingleSiteParams,
    dt: f64,
) -> Result<GaussianState1> {
    let next = rk4_covariances(state.covariances(), params.h0, params.gamma, dt);
    if !(next[0] > 0.0) || !(next[1] > 0.0) || next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Instability(format!(
            "covariance step produced v_x = {}, v_p = {} (dt = {dt} too large?)",
            next[0], next[1]
        )));
    }
    Ok(state.with_covariances(next))
}

/// One step of the means driven by the record increment `d_i`.
///
/// With `dW = dI − 2√Γ x dt` the means obey `dx = h p dt + 2√Γ v_x dW`,
/// `dp = −h x dt + 2√Γ u dW`: additive noise on top of the free rotation.
/// The noise kick is applied at the left point (Itô) and the rotation by
/// `h·dt` is then applied exactly, which avoids the `1 + h²dt²` per-step
/// amplitude growth of the explicit scheme.
#[inline]
pub fn means_step_single(
    state: &GaussianState1,
    params: &SingleSiteParams,
    d_i: f64,
    dt: f64,
) -> (f64, f64) {
    let sg = 2.0 * params.gamma.sqrt();
    let (x, p) = (state.mean_x, state.mean_p);
    let dw = d_i - sg * x * dt;
    let (x, p) = (x + sg * state.v_x * dw, p + sg * state.u * dw);
    let (s, c) = (params.h0 * dt).sin_cos();
    (c * x + s * p, c * p - s * x)
}

/// Deterministic covariance history `[v_x, v_p, u]` at steps `0..=n_steps`,
/// shareable across trajectories (the covariance equations carry no noise).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSchedule {
    pub dt: f64,
    pub values: Vec<[f64; 3]>,
}

impl CovarianceSchedule {
    pub fn new(params: &SingleSiteParams, init: [f64; 3], grid: &TimeGrid) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_steps + 1);
        let mut state = GaussianState1::vacuum().with_covariances(init);
        values.push(init);
        for _ in 0..grid.n_steps {
            state = riccati_step_single(&state, params, grid.dt)?;
            values.push(state.covariances());
        }
        Ok(Self {
            dt: grid.dt,
            values,
        })
    }

    pub fn last(&self) -> [f64; 3] {
        *self.values.last().expect("schedule is never empty")
    }
}

/// States at steps `0..=n_steps` of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySingle {
    pub grid: TimeGrid,
    pub states: Vec<GaussianState1>,
}

impl TrajectorySingle {
    pub fn final_state(&self) -> &GaussianState1 {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Means evolution on a precomputed covariance schedule. The noise stream is
/// `seed`'s, drawn one increment per step; returns the history of states and
/// the record `dI = 2√Γ⟨x⟩dt + dW`.
pub fn simulate_with_schedule(
    params: &SingleSiteParams,
    init: &GaussianState1,
    schedule: &CovarianceSchedule,
    grid: &TimeGrid,
    seed: &SeedSpec,
) -> Result<(TrajectorySingle, MeasurementRecord)> {
    if schedule.values.len() != grid.n_steps + 1 || schedule.dt != grid.dt {
        return Err(Error::ShapeMismatch("covariance schedule does not match grid".into()));
    }
    let mut rng = seed.rng();
    let sqrt_dt = grid.dt.sqrt();
    let sg = 2.0 * params.gamma.sqrt();
    let mut record = SiteSeries::zeros(1, grid.n_steps);
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    let mut state = init.with_covariances(schedule.values[0]);
    states.push(state);
    for k in 0..grid.n_steps {
        let dw = wiener_increment(&mut rng, sqrt_dt);
        let d_i = sg * state.mean_x * grid.dt + dw;
        record.set(0, k, d_i);
        let (x, p) = means_step_single(&state, params, d_i, grid.dt);
        state = GaussianState1 {
            mean_x: x,
            mean_p: p,
            ..state
        }
        .with_covariances(schedule.values[k + 1]);
        states.push(state);
    }
    let record = MeasurementRecord::chain(*grid, record)?;
    Ok((TrajectorySingle { grid: *grid, states }, record))
}

/// Samples `dW`, forms `dI = 2√Γ⟨x⟩dt + dW`, then advances the means
/// (left-point noise kick plus exact free rotation) and covariances (RK4).
pub fn simulate_trajectory_single(
    params: &SingleSiteParams,
    init: &GaussianState1,
    grid: &TimeGrid,
    seed: &SeedSpec,
) -> Result<(TrajectorySingle, MeasurementRecord)> {
    let schedule = CovarianceSchedule::new(params, init.covariances(), grid)?;
    simulate_with_schedule(params, init, &schedule, grid, seed)
}

/// Means driven by a given record (no noise drawn), covariances on `schedule`.
/// Returns the final state.
pub fn filter_record_single(
    params: &SingleSiteParams,
    init: &GaussianState1,
    schedule: &CovarianceSchedule,
    record: &[f64],
) -> GaussianState1 {
    let mut state = init.with_covariances(schedule.values[0]);
    for (k, &d_i) in record.iter().enumerate() {
        let (x, p) = means_step_single(&state, params, d_i, schedule.dt);
        state = GaussianState1 {
            mean_x: x,
            mean_p: p,
            ..state
        }
        .with_covariances(schedule.values[k + 1]);
    }
    state
}

/// Unconditional `⟨x²⟩(t)` from the vacuum: `(1+Γt)/2 − Γ sin(2h0t)/(4h0)`.
pub fn unconditional_variance_single(t: f64, params: &SingleSiteParams) -> f64 {
    unconditional_second_moments(t, params, [0.5, 0.5, 0.0])[0]
}

/// Unconditional second moments `[⟨x²⟩, ⟨p²⟩, ⟨{x,p}⟩/2]` at time `t` from
/// initial second moments `m0` (same layout).
///
/// With `S = ⟨x²+p²⟩`, `D = ⟨x²−p²⟩`, `C = ⟨{x,p}⟩`, the averaged dynamics is
/// `Ṡ = Γ`, `Ḋ = 2h C − Γ`, `Ċ = −2h D`, solved in closed form.
pub fn unconditional_second_moments(t: f64, params: &SingleSiteParams, m0: [f64; 3]) -> [f64; 3] {
    let h = params.h0;
    let g = params.gamma;
    let s = m0[0] + m0[1] + g * t;
    let d0 = m0[0] - m0[1];
    let c0 = 2.0 * m0[2];
    let (d, c) = if h.abs() < 1e-12 {
        (d0 - g * t, c0)
    } else {
        let (sn, cs) = (2.0 * h * t).sin_cos();
        let b = c0 - g / (2.0 * h);
        (d0 * cs + b * sn, -d0 * sn + b * cs + g / (2.0 * h))
    };
    [(s + d) / 2.0, (s - d) / 2.0, c / 2.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_at_unit_ratio() {
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        let s = steady_state_single(&p).unwrap();
        assert!((s.v_x - 0.393_075_688_878_711_7).abs() < 1e-12);
        assert!((s.v_p - 0.878_943_960_6).abs() < 1e-9);
        assert!((s.u - 0.309_016_994_4).abs() < 1e-9);
        assert!((s.v_x * s.v_p - s.u * s.u - 0.25).abs() < 1e-14);
        assert!((s.tau - memory_time_closed_form(&p)).abs() < 1e-12);
        let rhs = riccati_rhs([s.v_x, s.v_p, s.u], 1.0, 1.0);
        assert!(rhs.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn rejects_nonpositive_h0() {
        let p = SingleSiteParams::new(0.0, 1.0).unwrap();
        assert!(matches!(steady_state_single(&p), Err(Error::UnsupportedParameter(_))));
        assert!(SingleSiteParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn unconditional_formula() {
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        assert_eq!(unconditional_variance_single(0.0, &p), 0.5);
        let v = unconditional_variance_single(10.0, &p);
        assert!((v - (5.5 - 20f64.sin() / 4.0)).abs() < 1e-12);
        // S grows linearly regardless of the initial moments.
        let m = unconditional_second_moments(3.0, &p, [3.0, 3.0, 0.0]);
        assert!((m[0] + m[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_step_is_reported() {
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        let s = GaussianState1::vacuum().with_covariances([50.0, 0.5, 0.0]);
        assert!(matches!(riccati_step_single(&s, &p, 1.0), Err(Error::Instability(_))));
    }
}
