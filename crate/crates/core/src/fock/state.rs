use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::ops::{FockOperators, ZERO};

/// Default truncation-health threshold on the top-decile population.
pub const HEALTH_THRESHOLD: f64 = 1e-6;

/// Pure state in the truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub amps: DVector<Complex64>,
}

/// First and second moments `(⟨x⟩, ⟨p⟩, v_x, v_p, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub v_x: f64,
    pub v_p: f64,
    pub u: f64,
}

impl FockState {
    /// Normalized state from amplitudes.
    pub fn new(amps: DVector<Complex64>) -> Result<Self> {
        let nrm = amps.norm();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(invalid("amps", "state must have finite, nonzero norm"));
        }
        Ok(Self { amps: amps / Complex64::new(nrm, 0.0) })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn number(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(invalid("n", format!("level {n} outside truncation {dim}")));
        }
        let mut v = DVector::from_element(dim, ZERO);
        v[n] = Complex64::new(1.0, 0.0);
        Ok(Self { amps: v })
    }

    /// Equal superposition `(|m⟩ + |n⟩)/√2`.
    pub fn superposition(m: usize, n: usize, dim: usize) -> Result<Self> {
        let a = Self::number(m, dim)?;
        let b = Self::number(n, dim)?;
        Self::new(a.amps + b.amps)
    }

    /// Coherent state `|α⟩` (renormalized within the truncation).
    pub fn coherent(alpha: Complex64, dim: usize) -> Result<Self> {
        let mut v = DVector::from_element(dim, ZERO);
        let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        v[0] = c;
        for k in 1..dim {
            c = c * alpha / (k as f64).sqrt();
            v[k] = c;
        }
        Self::new(v)
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &FockState) -> f64 {
        self.amps.dotc(&other.amps).norm_sqr() / (self.amps.norm_squared() * other.amps.norm_squared())
    }

    /// Population of the top 10% of levels (at least one level).
    pub fn top_population(&self) -> f64 {
        let d = self.dim();
        let top = d.div_ceil(10).max(1);
        let total = self.amps.norm_squared();
        self.amps.iter().skip(d - top).map(|z| z.norm_sqr()).sum::<f64>() / total
    }

    pub fn check_health(&self, threshold: f64) -> Result<()> {
        let pop = self.top_population();
        if pop > threshold || !pop.is_finite() {
            return Err(Error::CutoffTooSmall {
                population: pop,
                threshold,
            });
        }
        Ok(())
    }

    pub fn mean_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(k, z)| k as f64 * z.norm_sqr())
            .sum::<f64>()
            / self.amps.norm_squared()
    }

    /// Means and symmetrized covariances from the operator matrices.
    pub fn moments(&self, ops: &FockOperators) -> FockMoments {
        let d = self.dim();
        let psi = &self.amps;
        let n2 = psi.norm_squared();
        let mut xp = DVector::from_element(d, ZERO);
        let mut pp = DVector::from_element(d, ZERO);
        ops.apply_x(psi, &mut xp);
        ops.apply_p(psi, &mut pp);
        let mx = psi.dotc(&xp).re / n2;
        let mp = psi.dotc(&pp).re / n2;
        let x2 = xp.norm_squared() / n2;
        let p2 = pp.norm_squared() / n2;
        let sym = xp.dotc(&pp).re / n2;
        FockMoments {
            mean_x: mx,
            mean_p: mp,
            v_x: x2 - mx * mx,
            v_p: p2 - mp * mp,
            u: sym - mx * mp,
        }
    }

    /// Third central moment `⟨(x − ⟨x⟩)³⟩`.
    pub fn third_central_moment_x(&self, ops: &FockOperators) -> f64 {
        let d = self.dim();
        let n2 = self.amps.norm_squared();
        let m = self.moments(ops).mean_x;
        let mut y = DVector::from_element(d, ZERO);
        ops.apply_x(&self.amps, &mut y);
        y -= &self.amps * Complex64::new(m, 0.0);
        let mut z = DVector::from_element(d, ZERO);
        ops.apply_x(&y, &mut z);
        z -= &y * Complex64::new(m, 0.0);
        y.dotc(&z).re / n2
    }

    /// Position-space probability density `|ψ(x)|²`, evaluated through the
    /// Hermite-function recursion.
    pub fn position_density(&self, x: f64) -> f64 {
        let n2 = self.amps.norm_squared();
        let mut phi_prev = 0.0;
        let mut phi = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
        let mut acc = self.amps[0] * phi;
        for k in 1..self.dim() {
            let next = (2.0 / k as f64).sqrt() * x * phi - ((k - 1) as f64 / k as f64).sqrt() * phi_prev;
            phi_prev = phi;
            phi = next;
            acc += self.amps[k] * phi;
        }
        acc.norm_sqr() / n2
    }

    /// `(n, Re amp, Im amp)` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "re", "im"])?;
        for (k, z) in self.amps.iter().enumerate() {
            wr.write_record(&[k.to_string(), format!("{:.15e}", z.re), format!("{:.15e}", z.im)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Husimi function on a rectangular `(x_α, p_α)` grid, `α = (x_α + i p_α)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    /// `q[ix * ps.len() + ip] = |⟨α|ψ⟩|²/π`.
    pub q: Vec<f64>,
}

impl HusimiGrid {
    pub fn value(&self, ix: usize, ip: usize) -> f64 {
        self.q[ix * self.ps.len() + ip]
    }

    pub fn max(&self) -> f64 {
        self.q.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// `Σ Q Δ²α` with `d²α = dx_α dp_α / 2`.
    pub fn integral(&self) -> f64 {
        let dx = spacing(&self.xs);
        let dp = spacing(&self.ps);
        self.q.iter().sum::<f64>() * dx * dp / 2.0
    }

    /// Centroid and covariance `(⟨x⟩, ⟨p⟩, σ_xx, σ_pp, σ_xp)` of `Q` as a
    /// density in `(x_α, p_α)`.
    pub fn centroid_and_covariance(&self) -> [f64; 5] {
        let np = self.ps.len();
        let (mut w, mut mx, mut mp) = (0.0, 0.0, 0.0);
        for (ix, &x) in self.xs.iter().enumerate() {
            for (ip, &p) in self.ps.iter().enumerate() {
                let q = self.q[ix * np + ip];
                w += q;
                mx += q * x;
                mp += q * p;
            }
        }
        mx /= w;
        mp /= w;
        let (mut sxx, mut spp, mut sxp) = (0.0, 0.0, 0.0);
        for (ix, &x) in self.xs.iter().enumerate() {
            for (ip, &p) in self.ps.iter().enumerate() {
                let q = self.q[ix * np + ip] / w;
                sxx += q * (x - mx) * (x - mx);
                spp += q * (p - mp) * (p - mp);
                sxp += q * (x - mx) * (p - mp);
            }
        }
        [mx, mp, sxx, spp, sxp]
    }

    /// `x_alpha, p_alpha, Q_normalized` rows (normalized to the maximum).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x_alpha", "p_alpha", "Q_normalized"])?;
        let m = self.max();
        for (ix, &x) in self.xs.iter().enumerate() {
            for (ip, &p) in self.ps.iter().enumerate() {
                let v = if m > 0.0 { self.value(ix, ip) / m } else { 0.0 };
                wr.write_record(&[format!("{x:.6}"), format!("{p:.6}"), format!("{v:.10e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn spacing(v: &[f64]) -> f64 {
    if v.len() < 2 {
        1.0
    } else {
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
    }
}

/// Evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// `Q(α) = |⟨α|ψ⟩|²/π` with `⟨α|n⟩ = e^{−|α|²/2} ᾱⁿ/√n!`.
pub fn husimi(state: &FockState, xs: &[f64], ps: &[f64]) -> HusimiGrid {
    let n2 = state.amps.norm_squared();
    let mut q = Vec::with_capacity(xs.len() * ps.len());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for &x in xs {
        for &p in ps {
            let alpha = Complex64::new(x * s, p * s);
            let ac = alpha.conj();
            let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
            let mut acc = c * state.amps[0];
            for k in 1..state.dim() {
                c = c * ac / (k as f64).sqrt();
                acc += c * state.amps[k];
            }
            q.push(acc.norm_sqr() / n2 / std::f64::consts::PI);
        }
    }
    HusimiGrid {
        xs: xs.to_vec(),
        ps: ps.to_vec(),
        q,
    }
}
