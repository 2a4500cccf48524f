//! Momentum-space fast path for translation-invariant states.
//!
//! From a translation-invariant, momentum-diagonal initial state (the
//! vacuum), every plane-wave mode evolves as an independent single mode with
//! `h0 → h_q`. Means are carried as unitary Fourier amplitudes
//! `X_q = V^{-1/2} Σ_j e^{−iq·j} X_j`, which keeps white noise white.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::gaussian::lattice::{GaussianLatticeState, LatticeParams};
use crate::gaussian::single::rk4_covariances;
use crate::gaussian::lattice::inverse_transform_even;
use crate::stochastic::{
    site_coords, site_index, wiener_increment, MeasurementRecord, SeedSpec, SiteSeries, TimeGrid,
};
use crate::gaussian::lattice::LatticeTrajectory;

/// Separable unitary FFT over a hypercubic lattice (first axis fastest).
pub struct LatticeFft {
    lengths: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scale: f64,
}

impl LatticeFft {
    pub fn new(lengths: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = lengths.iter().map(|&l| planner.plan_fft_forward(l)).collect();
        let inverse = lengths.iter().map(|&l| planner.plan_fft_inverse(l)).collect();
        let v: usize = lengths.iter().product();
        Self {
            lengths: lengths.to_vec(),
            forward,
            inverse,
            scale: 1.0 / (v as f64).sqrt(),
        }
    }

    fn apply(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let mut stride = 1;
        let v = data.len();
        for (axis, &l) in self.lengths.iter().enumerate() {
            if l > 1 {
                let mut line = vec![Complex64::new(0.0, 0.0); l];
                let block = stride * l;
                for outer in (0..v).step_by(block) {
                    for inner in 0..stride {
                        let base = outer + inner;
                        for (c, slot) in line.iter_mut().enumerate() {
                            *slot = data[base + c * stride];
                        }
                        plans[axis].process(&mut line);
                        for (c, val) in line.iter().enumerate() {
                            data[base + c * stride] = *val;
                        }
                    }
                }
            }
            stride *= l;
        }
        data.iter_mut().for_each(|z| *z *= self.scale);
    }

    /// `f_q = V^{-1/2} Σ_j e^{−iq·j} f_j`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// `f_j = V^{-1/2} Σ_q e^{iq·j} f_q`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    /// Inverse transform of a conjugate-symmetric spectrum (imaginary parts
    /// of the result are dropped).
    pub fn inverse_real(&self, data: &[Complex64]) -> Vec<f64> {
        let mut c = data.to_vec();
        self.inverse(&mut c);
        c.iter().map(|z| z.re).collect()
    }
}

/// Flat index of `−q` for flat mode index `k`.
pub fn conjugate_mode(lengths: &[usize], k: usize) -> usize {
    let c: Vec<usize> = site_coords(lengths, k)
        .iter()
        .zip(lengths)
        .map(|(&c, &l)| (l - c) % l)
        .collect();
    site_index(lengths, &c)
}

/// Pairing of modes with their conjugates, used to draw conjugate-symmetric
/// Gaussian spectra that are the Fourier images of real white noise.
#[derive(Debug, Clone)]
pub struct ModePairs {
    /// `(k, conj(k))` with `k < conj(k)`.
    pub pairs: Vec<(usize, usize)>,
    /// Self-conjugate modes.
    pub real: Vec<usize>,
}

impl ModePairs {
    pub fn new(lengths: &[usize]) -> Self {
        let v: usize = lengths.iter().product();
        let mut pairs = Vec::new();
        let mut real = Vec::new();
        for k in 0..v {
            let c = conjugate_mode(lengths, k);
            match k.cmp(&c) {
                std::cmp::Ordering::Less => pairs.push((k, c)),
                std::cmp::Ordering::Equal => real.push(k),
                std::cmp::Ordering::Greater => {}
            }
        }
        Self { pairs, real }
    }

    /// Fills `out` with a conjugate-symmetric spectrum whose inverse
    /// transform is i.i.d. `N(0, var)` per site.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, var: f64, out: &mut [Complex64]) {
        let s_real = var.sqrt();
        let s_pair = (var / 2.0).sqrt();
        for &k in &self.real {
            let z: f64 = StandardNormal.sample(rng);
            out[k] = Complex64::new(z * s_real, 0.0);
        }
        for &(a, b) in &self.pairs {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            out[a] = Complex64::new(re * s_pair, im * s_pair);
            out[b] = out[a].conj();
        }
    }
}

/// Vacuum covariance histories of every mode, computed once per distinct
/// mode energy and shared by all trajectories.
#[derive(Debug, Clone)]
pub struct ModeSchedules {
    pub dt: f64,
    /// Mode energies `h_q` in flat mode order.
    pub h: Vec<f64>,
    /// Distinct-energy class of each mode.
    pub class_of: Vec<usize>,
    /// `values[class][step] = [v, w, u]`, steps `0..=n_steps`.
    pub values: Vec<Vec<[f64; 3]>>,
}

impl ModeSchedules {
    pub fn vacuum(params: &LatticeParams, grid: &TimeGrid) -> Result<Self> {
        let h = params.mode_energies();
        let mut distinct: Vec<f64> = Vec::new();
        let mut class_of = Vec::with_capacity(h.len());
        for &hq in &h {
            let tol = 1e-12 * hq.abs().max(1.0);
            match distinct.iter().position(|&d| (d - hq).abs() <= tol) {
                Some(c) => class_of.push(c),
                None => {
                    class_of.push(distinct.len());
                    distinct.push(hq);
                }
            }
        }
        let mut values = Vec::with_capacity(distinct.len());
        for &hq in &distinct {
            let mut c = [0.5, 0.5, 0.0];
            let mut hist = Vec::with_capacity(grid.n_steps + 1);
            hist.push(c);
            for _ in 0..grid.n_steps {
                c = rk4_covariances(c, hq, params.gamma, grid.dt);
                if !(c[0] > 0.0 && c[1] > 0.0) || c.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Instability(format!(
                        "mode covariance diverged at h_q = {hq}, dt = {}",
                        grid.dt
                    )));
                }
                hist.push(c);
            }
            values.push(hist);
        }
        Ok(Self {
            dt: grid.dt,
            h,
            class_of,
            values,
        })
    }

    #[inline]
    pub fn at(&self, mode: usize, step: usize) -> [f64; 3] {
        self.values[self.class_of[mode]][step]
    }

    pub fn n_steps(&self) -> usize {
        self.values[0].len() - 1
    }

    /// Real-space covariance blocks at `step` (translation-invariant, so the
    /// matrices are circulant in the displacement).
    pub fn real_space_state(&self, lengths: &[usize], step: usize) -> GaussianLatticeState {
        let v: usize = lengths.iter().product();
        let col = |idx: usize| -> Vec<f64> {
            let f: Vec<f64> = (0..v).map(|k| self.at(k, step)[idx]).collect();
            inverse_transform_even(lengths, &f)
        };
        let (cx, cp, u) = (col(0), col(1), col(2));
        let mut state = GaussianLatticeState::vacuum(v);
        for i in 0..v {
            let ci = site_coords(lengths, i);
            for j in 0..v {
                let cj = site_coords(lengths, j);
                let d: Vec<usize> = ci
                    .iter()
                    .zip(&cj)
                    .zip(lengths)
                    .map(|((&a, &b), &l)| (a + l - b) % l)
                    .collect();
                let r = site_index(lengths, &d);
                state.cx[(i, j)] = cx[r];
                state.cp[(i, j)] = cp[r];
                state.u[(i, j)] = u[r];
            }
        }
        state
    }
}

/// One step of a mode's complex means: left-point noise kick with
/// `dW = dI − 2√Γ X dt`, then the exact rotation `rot = (cos h dt, sin h dt)`.
#[inline]
pub(crate) fn mode_means_step(
    x: Complex64,
    p: Complex64,
    cov: [f64; 3],
    rot: (f64, f64),
    gamma: f64,
    d_i: Complex64,
    dt: f64,
) -> (Complex64, Complex64) {
    let sg = 2.0 * gamma.sqrt();
    let [v, _, u] = cov;
    let dw = d_i - x * (sg * dt);
    let (x, p) = (x + dw * (sg * v), p + dw * (sg * u));
    let (c, s) = rot;
    (x * c + p * s, p * c - x * s)
}

/// Per-mode `(cos h_q dt, sin h_q dt)`.
pub(crate) fn mode_rotations(h: &[f64], dt: f64) -> Vec<(f64, f64)> {
    h.iter()
        .map(|&hq| {
            let (s, c) = (hq * dt).sin_cos();
            (c, s)
        })
        .collect()
}

/// Same trajectory as [`crate::gaussian::lattice::simulate_trajectory_lattice`]
/// from the vacuum (identical real-space noise stream), advanced mode by
/// mode. Covariances come from `schedules`; snapshot states are rebuilt in
/// real space.
pub fn simulate_trajectory_lattice_fft(
    params: &LatticeParams,
    schedules: &ModeSchedules,
    grid: &TimeGrid,
    seed: &SeedSpec,
    snapshot_steps: &[usize],
) -> Result<(LatticeTrajectory, MeasurementRecord)> {
    if schedules.n_steps() < grid.n_steps || schedules.dt != grid.dt {
        return Err(Error::ShapeMismatch("mode schedules do not cover the grid".into()));
    }
    let v = params.num_sites();
    let fft = LatticeFft::new(&params.lengths);
    let g = params.gamma;
    let sg = 2.0 * g.sqrt();
    let sqrt_dt = grid.dt.sqrt();
    let mut rng = seed.rng();
    let zero = Complex64::new(0.0, 0.0);
    let mut xq = vec![zero; v];
    let mut pq = vec![zero; v];
    let mut x_real = vec![0.0; v];
    let mut dw = vec![0.0; v];
    let mut record = SiteSeries::zeros(v, grid.n_steps);
    let mut mean_x = vec![vec![0.0; v]];
    let mut mean_p = vec![vec![0.0; v]];
    let rot = mode_rotations(&schedules.h, grid.dt);
    let mut snapshots = Vec::new();
    let snap = |k: usize, x: &[f64], p: &[f64]| {
        let mut s = schedules.real_space_state(&params.lengths, k);
        s.x.as_mut_slice().copy_from_slice(x);
        s.p.as_mut_slice().copy_from_slice(p);
        (k, s)
    };
    if snapshot_steps.contains(&0) {
        snapshots.push(snap(0, &mean_x[0], &mean_p[0]));
    }
    for k in 0..grid.n_steps {
        for (i, w) in dw.iter_mut().enumerate() {
            *w = wiener_increment(&mut rng, sqrt_dt);
            record.set(i, k, sg * x_real[i] * grid.dt + *w);
        }
        let dwq = fft.forward_real(&dw);
        for m in 0..v {
            let cov = schedules.at(m, k);
            let d_i = xq[m] * (sg * grid.dt) + dwq[m];
            let (nx, np) = mode_means_step(xq[m], pq[m], cov, rot[m], g, d_i, grid.dt);
            xq[m] = nx;
            pq[m] = np;
        }
        x_real = fft.inverse_real(&xq);
        let p_real = fft.inverse_real(&pq);
        if snapshot_steps.contains(&(k + 1)) {
            snapshots.push(snap(k + 1, &x_real, &p_real));
        }
        mean_x.push(x_real.clone());
        mean_p.push(p_real);
    }
    let record = MeasurementRecord::new(params.lengths.clone(), *grid, record)?;
    Ok((
        LatticeTrajectory {
            grid: *grid,
            mean_x,
            mean_p,
            snapshots,
        },
        record,
    ))
}

/// Unconditional momentum-quadrature second moment of mode `h` at time `t`
/// from the vacuum: `(1+Γt)/2 + Γ sin(2ht)/(4h)`.
pub fn unconditional_mode_p2(h: f64, gamma: f64, t: f64) -> f64 {
    if h.abs() < 1e-12 {
        return 0.5 + gamma * t;
    }
    (1.0 + gamma * t) / 2.0 + gamma * (2.0 * h * t).sin() / (4.0 * h)
}

/// Unconditional position-quadrature second moment of mode `h` at time `t`
/// from the vacuum: `(1+Γt)/2 − Γ sin(2ht)/(4h)`.
pub fn unconditional_mode_x2(h: f64, gamma: f64, t: f64) -> f64 {
    if h.abs() < 1e-12 {
        return 0.5;
    }
    (1.0 + gamma * t) / 2.0 - gamma * (2.0 * h * t).sin() / (4.0 * h)
}

/// Unconditional real-space profiles `(⟨x_0 x_r⟩, ⟨p_0 p_r⟩)` at time `t`
/// from the vacuum, for every flat displacement.
pub fn unconditional_profile(params: &LatticeParams, t: f64) -> (Vec<f64>, Vec<f64>) {
    let h = params.mode_energies();
    let fx: Vec<f64> = h.iter().map(|&hq| unconditional_mode_x2(hq, params.gamma, t)).collect();
    let fp: Vec<f64> = h.iter().map(|&hq| unconditional_mode_p2(hq, params.gamma, t)).collect();
    (
        inverse_transform_even(&params.lengths, &fx),
        inverse_transform_even(&params.lengths, &fp),
    )
}
