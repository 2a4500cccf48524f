//! Momentum-space outcome sampler for translation-invariant lattices.
//!
//! From the vacuum, every mode `q` is an independent single mode with energy
//! `h_q`; the record's Fourier image is `dI_q = 2√Γ X_q dt + dW_q` with
//! conjugate-symmetric white noise. Modes `q` and `−q` are complex
//! conjugates, so only one of each pair is advanced. The steady analytic
//! kernels are damped cosines per mode, so the estimators are accumulated by
//! one-step recursions that reproduce the convolution with the untruncated
//! kernels exactly.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::filter::{KpConvention, ModalFilter, Quadrature};
use crate::gaussian::momentum::{mode_means_step, mode_rotations};
use crate::gaussian::{steady_state_lattice, LatticeFft, LatticeParams, ModePairs, ModeSchedules};
use crate::stochastic::{MeasurementRecord, SeedSpec, SiteSeries, TimeGrid};

/// Output of one sampled trajectory (real space, all sites).
#[derive(Debug, Clone)]
pub struct LatticeSample {
    /// `gain · Σ K·dI` per site at the final time.
    pub estimators: Vec<f64>,
    /// Joint projective measurement of the chosen quadrature.
    pub measured: Vec<f64>,
    /// Conditional means of the chosen quadrature.
    pub means: Vec<f64>,
    pub record: Option<MeasurementRecord>,
}

/// Precomputed schedules, filters and transforms shared by all trajectories.
pub struct LatticeOutcomeSampler {
    params: LatticeParams,
    grid: TimeGrid,
    quadrature: Quadrature,
    schedules: ModeSchedules,
    modal: ModalFilter,
    pairs: ModePairs,
    fft: LatticeFft,
    /// Advanced modes: self-conjugate ones first, then one of each pair.
    evolved: Vec<usize>,
}

impl LatticeOutcomeSampler {
    pub fn new(params: &LatticeParams, grid: &TimeGrid, quadrature: Quadrature, convention: KpConvention) -> Result<Self> {
        if grid.t0 != 0.0 {
            return Err(invalid("grid", "the vacuum sampler starts at t = 0"));
        }
        let ss = steady_state_lattice(params)?;
        let schedules = ModeSchedules::vacuum(params, grid)?;
        let modal = ModalFilter::new(&ss, params.gamma, grid.dt, convention);
        let pairs = ModePairs::new(&params.lengths);
        let evolved = pairs.real.iter().copied().chain(pairs.pairs.iter().map(|p| p.0)).collect();
        Ok(Self {
            params: params.clone(),
            grid: *grid,
            quadrature,
            schedules,
            modal,
            pairs,
            fft: LatticeFft::new(&params.lengths),
            evolved,
        })
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn t_obs(&self) -> f64 {
        self.grid.t_end()
    }

    fn fill_spectrum(&self, half: &[Complex64], out: &mut [Complex64]) {
        let n_real = self.pairs.real.len();
        for (i, &m) in self.pairs.real.iter().enumerate() {
            out[m] = half[i];
        }
        for (i, &(a, b)) in self.pairs.pairs.iter().enumerate() {
            out[a] = half[n_real + i];
            out[b] = half[n_real + i].conj();
        }
    }

    /// Runs one trajectory from the vacuum to the end of the grid.
    pub fn sample(&self, seed: &SeedSpec, keep_record: bool) -> Result<LatticeSample> {
        let v = self.params.num_sites();
        let n_modes = self.evolved.len();
        let n_real = self.pairs.real.len();
        let g = self.params.gamma;
        let sg = 2.0 * g.sqrt();
        let dt = self.grid.dt;
        let s_real = dt.sqrt();
        let s_pair = (dt / 2.0).sqrt();
        let zero = Complex64::new(0.0, 0.0);
        let mut rng = seed.rng();
        let mut x = vec![zero; n_modes];
        let mut p = vec![zero; n_modes];
        let mut a = vec![zero; n_modes];
        let mut b = vec![zero; n_modes];
        let z: Vec<Complex64> = self.evolved.iter().map(|&m| self.modal.z[m]).collect();
        let zc: Vec<Complex64> = z.iter().map(|w| w.conj()).collect();
        let h: Vec<f64> = self.evolved.iter().map(|&m| self.schedules.h[m]).collect();
        let rot = mode_rotations(&h, dt);
        let mut record = keep_record.then(|| SiteSeries::zeros(v, self.grid.n_steps));
        let mut di_half = vec![zero; n_modes];
        let mut di_full = vec![zero; v];
        for k in 0..self.grid.n_steps {
            for i in 0..n_modes {
                let dw = if i < n_real {
                    let r: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(r * s_real, 0.0)
                } else {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re * s_pair, im * s_pair)
                };
                let d_i = x[i] * (sg * dt) + dw;
                di_half[i] = d_i;
                a[i] = z[i] * (a[i] + d_i);
                b[i] = zc[i] * (b[i] + d_i);
                let cov = self.schedules.at(self.evolved[i], k);
                let (nx, np) = mode_means_step(x[i], p[i], cov, rot[i], g, d_i, dt);
                x[i] = nx;
                p[i] = np;
            }
            if let Some(rec) = record.as_mut() {
                self.fill_spectrum(&di_half, &mut di_full);
                let real = self.fft.inverse_real(&di_full);
                for (site, val) in real.into_iter().enumerate() {
                    rec.set(site, k, val);
                }
            }
        }
        let n = self.grid.n_steps;
        let mut est_half = vec![zero; n_modes];
        let mut meas_half = vec![zero; n_modes];
        let mut mean_half = vec![zero; n_modes];
        for i in 0..n_modes {
            let m = self.evolved[i];
            let [vq, wq, _] = self.schedules.at(m, n);
            let (c, mean, var) = match self.quadrature {
                Quadrature::X => (self.modal.c_x[m], x[i], vq),
                Quadrature::P => (self.modal.c_p[m], p[i], wq),
            };
            est_half[i] = (c * a[i] + c.conj() * b[i]) * (sg / 2.0);
            let noise = if i < n_real {
                let r: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(r, 0.0)
            } else {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            };
            meas_half[i] = mean + noise * var.max(0.0).sqrt();
            mean_half[i] = mean;
        }
        let mut full = vec![zero; v];
        let mut to_real = |half: &[Complex64]| {
            self.fill_spectrum(half, &mut full);
            self.fft.inverse_real(&full)
        };
        let estimators = to_real(&est_half);
        let measured = to_real(&meas_half);
        let means = to_real(&mean_half);
        let record = match record {
            Some(r) => Some(MeasurementRecord::new(self.params.lengths.clone(), self.grid, r)?),
            None => None,
        };
        Ok(LatticeSample {
            estimators,
            measured,
            means,
            record,
        })
    }
}
