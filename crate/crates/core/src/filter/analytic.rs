//! Closed-form estimator kernels: single site, ODE route, and lattice
//! momentum sums.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Result};
use crate::filter::kernel::{FilterKernel, Generator, Quadrature};
use crate::gaussian::momentum::LatticeFft;
use crate::gaussian::{steady_state_lattice, steady_state_single, LatticeParams, SingleSiteParams, SteadyCovariances};
use crate::stochastic::site_coords;

/// Relative magnitude below which kernel support is cut away.
pub const KERNEL_CUTOFF: f64 = 1e-8;

/// Damping rate and angular frequency of an exponentially damped cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterShape {
    pub decay_rate: f64,
    pub frequency: f64,
}

/// Shape of the single-site filter: rate `1/τ = 2Γv_x`, frequency `h0Γτ`.
pub fn analytic_filter_shape(params: &SingleSiteParams) -> Result<FilterShape> {
    let ss = steady_state_single(params)?;
    Ok(FilterShape {
        decay_rate: 1.0 / ss.tau,
        frequency: params.h0 * params.gamma * ss.tau,
    })
}

/// `f(T) = 2√Γ v_x e^{−2Γv_x T} cos(h0T/(2v_x))` sampled at `T = m·dt` up to
/// `t_max` and cut where `|f| < 10⁻⁸ max|f|`. Stored without the `2√Γ` gain.
pub fn analytic_filter_single(params: &SingleSiteParams, dt: f64, t_max: f64) -> Result<FilterKernel> {
    if !(dt > 0.0) || !(t_max > 0.0) {
        return Err(invalid("dt/t_max", "must be positive"));
    }
    let ss = steady_state_single(params)?;
    let gamma_d = 2.0 * params.gamma * ss.v_x;
    let omega = params.h0 / (2.0 * ss.v_x);
    let n = (t_max / dt).ceil() as usize + 1;
    let samples = (0..n)
        .map(|m| {
            let t = m as f64 * dt;
            ss.v_x * (-gamma_d * t).exp() * (omega * t).cos()
        })
        .collect();
    let k = FilterKernel::single_site(dt, samples, 2.0 * params.gamma.sqrt(), Quadrature::X, Generator::Analytic)?
        .with_params(json!({"h0": params.h0, "gamma": params.gamma, "decay_rate": gamma_d, "frequency": omega}));
    Ok(k.truncate_relative(KERNEL_CUTOFF))
}

/// Single-site filter with support long enough for the `10⁻⁸` cutoff.
pub fn analytic_filter_single_default(params: &SingleSiteParams, dt: f64) -> Result<FilterKernel> {
    let ss = steady_state_single(params)?;
    analytic_filter_single(params, dt, 20.0 * ss.tau)
}

/// The four roots `λ = ±(1/τ ± ih0Γτ)` of `(λ² + h0²)² + 4Γ²h0² = 0`.
pub fn filter_ode_roots(params: &SingleSiteParams) -> Result<[Complex64; 4]> {
    let shape = analytic_filter_shape(params)?;
    let a = shape.decay_rate;
    let b = shape.frequency;
    Ok([
        Complex64::new(a, b),
        Complex64::new(a, -b),
        Complex64::new(-a, b),
        Complex64::new(-a, -b),
    ])
}

/// `|(λ² + h0²)² + 4Γ²h0²|`.
pub fn ode_root_residual(lambda: Complex64, params: &SingleSiteParams) -> f64 {
    let h = params.h0;
    let g = params.gamma;
    let l2 = lambda * lambda + h * h;
    (l2 * l2 + 4.0 * g * g * h * h).norm()
}

/// ODE route: keep the two decaying roots, `f(s) = e^{−s/τ}(a cos ωs + b sin ωs)`,
/// and fix `(a, b)` from `∫f cos(h0 s)ds = 1/(2√Γ)`, `∫f sin(h0 s)ds = 0`
/// (evaluated in closed form). Returns `(a, b)` and the kernel (gain `2√Γ`).
pub fn design_filter_ode(params: &SingleSiteParams, dt: f64, t_max: f64) -> Result<((f64, f64), FilterKernel)> {
    let shape = analytic_filter_shape(params)?;
    let (g, w, h) = (shape.decay_rate, shape.frequency, params.h0);
    // ∫_0^∞ e^{−gs} cos(ws) cos(hs) ds etc.
    let lc = |o: f64| g / (g * g + o * o);
    let ls = |o: f64| o / (g * g + o * o);
    let cc = 0.5 * (lc(w - h) + lc(w + h));
    let sc = 0.5 * (ls(w + h) + ls(w - h));
    let cs = 0.5 * (ls(h + w) + ls(h - w));
    let ss = 0.5 * (lc(w - h) - lc(w + h));
    // [cc sc; cs ss] (a, b) = (1/(2√Γ), 0)
    let rhs = 0.5 / params.gamma.sqrt();
    let det = cc * ss - sc * cs;
    if det.abs() < 1e-300 {
        return Err(invalid("params", "degenerate moment constraints"));
    }
    let a = rhs * ss / det;
    let b = -rhs * cs / det;
    let gain = 2.0 * params.gamma.sqrt();
    let n = (t_max / dt).ceil() as usize + 1;
    let samples = (0..n)
        .map(|m| {
            let s = m as f64 * dt;
            (-g * s).exp() * (a * (w * s).cos() + b * (w * s).sin()) / gain
        })
        .collect();
    let k = FilterKernel::single_site(dt, samples, gain, Quadrature::X, Generator::Designed)?
        .with_params(json!({"route": "ode", "h0": params.h0, "gamma": params.gamma}));
    Ok(((a, b), k.truncate_relative(KERNEL_CUTOFF)))
}

/// Normalization of the momentum-quadrature lattice kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KpConvention {
    /// Impulse response of the steady means equation:
    /// `[u_q cos(ωT) − ½ sin(ωT)] e^{−2Γv_qT}`.
    #[default]
    ImpulseResponse,
    /// `[2u_q cos(ωT) − sin(ωT)] e^{−2Γv_qT}`, twice the impulse response.
    Doubled,
}

/// Per-mode representation `K_q(T) = Re[c_q e^{(iω_q − γ_q)T}]` of the
/// steady lattice kernels, with `γ_q = 2Γv_q`, `ω_q = h_q/(2v_q)`,
/// `c_q = v_q` for `x` and `c_q = u_q + i/2` for `p`.
#[derive(Debug, Clone)]
pub struct ModalFilter {
    pub dt: f64,
    /// One-step propagator `e^{(iω_q − γ_q)dt}`.
    pub z: Vec<Complex64>,
    pub c_x: Vec<Complex64>,
    pub c_p: Vec<Complex64>,
}

impl ModalFilter {
    pub fn new(ss: &SteadyCovariances, gamma: f64, dt: f64, convention: KpConvention) -> Self {
        let scale = match convention {
            KpConvention::ImpulseResponse => 1.0,
            KpConvention::Doubled => 2.0,
        };
        let mut z = Vec::with_capacity(ss.h.len());
        let mut c_x = Vec::with_capacity(ss.h.len());
        let mut c_p = Vec::with_capacity(ss.h.len());
        for q in 0..ss.h.len() {
            let v = ss.v[q];
            let rate = 2.0 * gamma * v;
            let omega = ss.h[q] / (2.0 * v);
            z.push(Complex64::new(-rate * dt, omega * dt).exp());
            c_x.push(Complex64::new(v, 0.0));
            c_p.push(Complex64::new(ss.u[q], 0.5) * scale);
        }
        Self { dt, z, c_x, c_p }
    }

    /// `K_q(m·dt)` for the chosen quadrature.
    pub fn mode_value(&self, q: usize, m: usize, target: Quadrature) -> f64 {
        let c = match target {
            Quadrature::X => self.c_x[q],
            Quadrature::P => self.c_p[q],
        };
        (c * self.z[q].powu(m as u32)).re
    }
}

/// Signed displacement vector of flat index `r` (components in `(−L/2, L/2]`).
pub fn signed_offset(lengths: &[usize], r: usize) -> Vec<i64> {
    site_coords(lengths, r)
        .iter()
        .zip(lengths)
        .map(|(&c, &l)| {
            let c = c as i64;
            let l = l as i64;
            if 2 * c > l {
                c - l
            } else {
                c
            }
        })
        .collect()
}

/// Lattice kernels by inverse transform of the per-mode forms:
/// `K(r,T) = (1/V) Σ_q K_q(T) cos(q·r)` for `T = m·dt ≤ t_max`.
pub fn analytic_kernels_lattice_with(
    params: &LatticeParams,
    dt: f64,
    t_max: f64,
    convention: KpConvention,
) -> Result<(FilterKernel, FilterKernel)> {
    if !(dt > 0.0) || !(t_max > 0.0) {
        return Err(invalid("dt/t_max", "must be positive"));
    }
    let ss = steady_state_lattice(params)?;
    let modal = ModalFilter::new(&ss, params.gamma, dt, convention);
    let v = params.num_sites();
    let n_lags = (t_max / dt).ceil() as usize + 1;
    let fft = LatticeFft::new(&params.lengths);
    let norm = 1.0 / (v as f64).sqrt();
    let mut kx = vec![0.0; v * n_lags];
    let mut kp = vec![0.0; v * n_lags];
    let mut powers: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); v];
    let mut buf = vec![Complex64::new(0.0, 0.0); v];
    for m in 0..n_lags {
        for (target, out) in [(Quadrature::X, &mut kx), (Quadrature::P, &mut kp)] {
            for q in 0..v {
                let c = match target {
                    Quadrature::X => modal.c_x[q],
                    Quadrature::P => modal.c_p[q],
                };
                buf[q] = Complex64::new((c * powers[q]).re, 0.0);
            }
            let real = fft.inverse_real(&buf);
            for r in 0..v {
                out[r * n_lags + m] = real[r] * norm;
            }
        }
        for q in 0..v {
            powers[q] *= modal.z[q];
        }
    }
    let offsets: Vec<Vec<i64>> = (0..v).map(|r| signed_offset(&params.lengths, r)).collect();
    let meta = json!({
        "j0": params.j0, "j": params.j, "lengths": params.lengths, "gamma": params.gamma,
        "kp_convention": convention,
    });
    let gain = 2.0 * params.gamma.sqrt();
    let kx = FilterKernel::new(offsets.clone(), dt, kx, gain, Quadrature::X, Generator::Analytic)?
        .with_params(meta.clone())
        .truncate_relative(KERNEL_CUTOFF);
    let kp = FilterKernel::new(offsets, dt, kp, gain, Quadrature::P, Generator::Analytic)?
        .with_params(meta)
        .truncate_relative(KERNEL_CUTOFF);
    Ok((kx, kp))
}

/// `(K_x, K_p)` with the impulse-response normalization.
pub fn analytic_kernels_lattice(params: &LatticeParams, dt: f64, t_max: f64) -> Result<(FilterKernel, FilterKernel)> {
    analytic_kernels_lattice_with(params, dt, t_max, KpConvention::ImpulseResponse)
}

/// Direct momentum sum `(1/V) Σ_q K_q(T) cos(q·r)` at one `(r, T)`, d = 1.
pub fn lattice_kernel_direct(params: &LatticeParams, r: i64, t: f64, target: Quadrature, convention: KpConvention) -> Result<f64> {
    let ss = steady_state_lattice(params)?;
    let v = params.num_sites() as f64;
    let scale = match convention {
        KpConvention::ImpulseResponse => 1.0,
        KpConvention::Doubled => 2.0,
    };
    let mut acc = 0.0;
    for q in 0..ss.h.len() {
        let vq = ss.v[q];
        let omega = ss.h[q] / (2.0 * vq);
        let damp = (-2.0 * params.gamma * vq * t).exp();
        let phase: f64 = ss.momenta[q][0] * r as f64;
        let val = match target {
            Quadrature::X => vq * (omega * t).cos(),
            Quadrature::P => scale * (ss.u[q] * (omega * t).cos() - 0.5 * (omega * t).sin()),
        };
        acc += val * damp * phase.cos();
    }
    Ok(acc / v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ode_roots_solve_characteristic_polynomial() {
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        for l in filter_ode_roots(&p).unwrap() {
            assert!(ode_root_residual(l, &p) < 1e-10);
        }
    }

    #[test]
    fn ode_route_reproduces_cosine_filter() {
        let p = SingleSiteParams::new(1.3, 0.7).unwrap();
        let ((a, b), k) = design_filter_ode(&p, 1e-3, 30.0).unwrap();
        let ss = steady_state_single(&p).unwrap();
        assert!((a - 2.0 * p.gamma.sqrt() * ss.v_x).abs() < 1e-10);
        assert!(b.abs() < 1e-10);
        let an = analytic_filter_single(&p, 1e-3, 30.0).unwrap();
        for m in 0..k.n_lags().min(an.n_lags()) {
            assert!((k.value(0, m) - an.value(0, m)).abs() < 1e-10);
        }
    }

    #[test]
    fn lattice_fft_kernel_matches_direct_sum() {
        let p = LatticeParams::chain(3.0, 1.0, 16, 1.0).unwrap();
        let (kx, kp) = analytic_kernels_lattice(&p, 0.01, 2.0).unwrap();
        for r in [-3i64, 0, 2, 5] {
            for m in [0usize, 7, 150] {
                let t = m as f64 * 0.01;
                let dx = lattice_kernel_direct(&p, r, t, Quadrature::X, KpConvention::ImpulseResponse).unwrap();
                let dp = lattice_kernel_direct(&p, r, t, Quadrature::P, KpConvention::ImpulseResponse).unwrap();
                let ix = kx.row_for(&[r]).map_or(0.0, |row| row[m]);
                let ip = kp.row_for(&[r]).map_or(0.0, |row| row[m]);
                assert!((dx - ix).abs() < 1e-12, "K_x({r},{t})");
                assert!((dp - ip).abs() < 1e-12, "K_p({r},{t})");
            }
        }
    }
}
