//! Final projective quadrature measurements and record estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::filter::{FilterKernel, Quadrature};
use crate::fock::FockState;
use crate::gaussian::{GaussianLatticeState, GaussianState1};
use crate::stochastic::{convolve_record, MeasurementRecord};

/// Draw of the measured quadrature from a single-mode Gaussian state.
pub fn sample_measurement_single<R: Rng + ?Sized>(state: &GaussianState1, quadrature: Quadrature, rng: &mut R) -> f64 {
    let (mean, var) = match quadrature {
        Quadrature::X => (state.mean_x, state.v_x),
        Quadrature::P => (state.mean_p, state.v_p),
    };
    let z: f64 = StandardNormal.sample(rng);
    mean + var.max(0.0).sqrt() * z
}

/// Symmetric square root `S = V √Λ Vᵀ` of a covariance matrix, reusable for
/// many draws.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    pub sqrt: DMatrix<f64>,
}

impl CovarianceFactor {
    /// Fails with [`Error::NotPositiveDefinite`] if an eigenvalue is negative
    /// beyond round-off (`−10⁻¹⁰·max(1, λ_max)`); tiny negative ones are set to 0.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::ShapeMismatch("covariance must be square".into()));
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lmin < -1e-10 * lmax.max(1.0) {
            return Err(Error::NotPositiveDefinite(lmin));
        }
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(Self {
            sqrt: &eig.eigenvectors * d * eig.eigenvectors.transpose(),
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, mean: &DVector<f64>, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
        (mean + &self.sqrt * z).iter().copied().collect()
    }
}

/// One joint draw of the commuting quadratures `x_j` (or `p_j`) of a lattice
/// Gaussian state.
pub fn sample_measurement_lattice<R: Rng + ?Sized>(
    state: &GaussianLatticeState,
    quadrature: Quadrature,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mean, cov) = match quadrature {
        Quadrature::X => (&state.x, &state.cx),
        Quadrature::P => (&state.p, &state.cp),
    };
    Ok(CovarianceFactor::new(cov)?.draw(mean, rng))
}

/// Draw from `|ψ(x)|²` (or `|ψ̃(p)|²`) of a number-basis state by inverse
/// transform sampling on a fine grid covering the truncation's support.
pub fn sample_measurement_fock<R: Rng + ?Sized>(state: &FockState, quadrature: Quadrature, rng: &mut R) -> Result<f64> {
    let psi = match quadrature {
        Quadrature::X => state.clone(),
        Quadrature::P => {
            // ψ̃(p) = Σ c_n (−i)^n φ_n(p).
            let mut amps = state.amps.clone();
            let mut phase = Complex64::new(1.0, 0.0);
            for a in amps.iter_mut() {
                *a *= phase;
                phase *= Complex64::new(0.0, -1.0);
            }
            FockState::new(amps)?
        }
    };
    let half = (2.0 * state.dim() as f64 + 1.0).sqrt() + 4.0;
    let n = 4001;
    let dx = 2.0 * half / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| -half + i as f64 * dx).collect();
    let dens: Vec<f64> = xs.iter().map(|&x| psi.position_density(x)).collect();
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * dx;
    }
    let total = cdf[n - 1];
    if !(total > 0.0) || !total.is_finite() {
        return Err(invalid("state", "quadrature density does not normalize"));
    }
    let u: f64 = rng.random::<f64>() * total;
    let k = cdf.partition_point(|&c| c < u).clamp(1, n - 1);
    let (c0, c1) = (cdf[k - 1], cdf[k]);
    let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
    Ok(xs[k - 1] + t * dx)
}

/// Estimators `gain·Σ K·dI` at `sites` and time `t_obs`.
pub fn compute_estimators(
    record: &MeasurementRecord,
    kernel: &FilterKernel,
    sites: &[usize],
    t_obs: f64,
) -> Result<Vec<f64>> {
    sites
        .iter()
        .map(|&s| convolve_record(record, kernel, s, t_obs).map(|c| c.value))
        .collect()
}
