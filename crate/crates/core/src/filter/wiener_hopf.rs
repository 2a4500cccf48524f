//! Discretized linear filter design from correlator tables: the filter
//! minimizing the mean-squared error solves a Wiener–Hopf-type integral
//! equation, optionally subject to the two moment constraints
//! `∫ f cos(h0 s) ds = 1/(2√Γ)` and `∫ f sin(h0 s) ds = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::correlators::{CorrelatorTables, TableStructure};
use crate::filter::fit::{fit_damped_cosine, DampedCosineFit};
use crate::filter::kernel::{FilterKernel, Generator, Quadrature};

/// Relative Tikhonov regularization, scaled by `trace(AᵀA)/M`.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// A filter sampled on design nodes (look-back times).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignedFilter {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `f(s)`: the estimate is `∫ f(s) dI(t − s)`.
    pub values: Vec<f64>,
    pub ridge: f64,
    /// `(∫ f cos h0 s − 1/(2√Γ), ∫ f sin h0 s)` when constraints were imposed.
    pub constraint_residuals: Option<[f64; 2]>,
    /// Measurement gain `2√Γ` when the rate is known (kernel values are `f/gain`).
    pub gain: f64,
}

impl DesignedFilter {
    /// Damped-cosine fit of `f` over look-back times `s ≤ s_max`.
    pub fn fit_shape(&self, s_max: Option<f64>) -> Result<DampedCosineFit> {
        fit_damped_cosine(&self.nodes, &self.values, s_max)
    }

    /// Linear interpolation of `f` (zero outside the node range).
    pub fn value_at(&self, s: f64) -> f64 {
        let n = self.nodes.len();
        if n == 0 || s > self.nodes[n - 1] {
            return 0.0;
        }
        if s <= self.nodes[0] {
            return self.values[0];
        }
        let k = self.nodes.partition_point(|&x| x <= s).min(n - 1);
        let (s0, s1) = (self.nodes[k - 1], self.nodes[k]);
        let t = (s - s0) / (s1 - s0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    /// Resamples onto the simulation step `dt` as a single-site kernel usable
    /// with record convolution.
    pub fn to_kernel(&self, dt: f64, target: Quadrature) -> Result<FilterKernel> {
        let s_end = self.nodes.last().copied().unwrap_or(0.0);
        let n_lags = (s_end / dt).floor() as usize + 1;
        let values: Vec<f64> = (0..n_lags).map(|m| self.value_at(m as f64 * dt) / self.gain).collect();
        let mut k = FilterKernel::single_site(dt, values, self.gain, target, Generator::Designed)?;
        k.params = serde_json::json!({ "ridge": self.ridge, "n_nodes": self.nodes.len() });
        Ok(k)
    }
}

/// Solves the discretized design problem described by `tables`.
///
/// `A f = g` is solved in the least-squares sense with a ridge, and when
/// constraint parameters are present the constraints are appended through a
/// KKT system. Fails with [`Error::InsufficientData`] if the system is
/// singular or the solution is not finite.
pub fn design_filter_wiener_hopf(tables: &CorrelatorTables, ridge: f64) -> Result<DesignedFilter> {
    let (nodes, weights) = tables.nodes_and_weights();
    let m = nodes.len();
    if m < 4 {
        return Err(Error::InsufficientData("need at least 4 design nodes".into()));
    }
    let a = match tables.structure {
        TableStructure::FixedTime => {
            let s = tables
                .fixed_time
                .as_ref()
                .ok_or_else(|| Error::InsufficientData("fixed-time tables lack the two-time matrix".into()))?;
            if s.nrows() != m || s.ncols() != m {
                return Err(Error::ShapeMismatch("two-time matrix does not match the nodes".into()));
            }
            DMatrix::from_fn(m, m, |i, j| s[(i, j)] * weights[j])
        }
        TableStructure::Stationary => {
            if tables.s.len() < m {
                return Err(Error::InsufficientData("lag table shorter than the node grid".into()));
            }
            DMatrix::from_fn(m, m, |i, j| {
                let delta = if i == j { tables.delta_weight } else { 0.0 };
                (tables.s[i.abs_diff(j)] + delta) * weights[j]
            })
        }
        TableStructure::OneSided => {
            if tables.s.len() < m {
                return Err(Error::InsufficientData("kernel table shorter than the node grid".into()));
            }
            DMatrix::from_fn(m, m, |i, j| {
                let diag = if i == j { 1.0 } else { 0.0 };
                let tail = if j > i { tables.s[j - i] * weights[j] } else { 0.0 };
                diag + tail
            })
        }
    };
    let g = DVector::from_column_slice(&tables.g[..m]);
    let ata = a.transpose() * &a;
    let lambda = ridge * ata.trace() / m as f64;
    let normal = &ata + DMatrix::identity(m, m) * lambda;
    let rhs = a.transpose() * &g;

    let (f, residuals, gain) = if let Some(p) = tables.constraints {
        let h0 = p.h0;
        let target = 1.0 / (2.0 * p.gamma.sqrt());
        let c = DMatrix::from_fn(2, m, |r, j| {
            let ph = h0 * nodes[j];
            weights[j] * if r == 0 { ph.cos() } else { ph.sin() }
        });
        let mut kkt = DMatrix::zeros(m + 2, m + 2);
        kkt.view_mut((0, 0), (m, m)).copy_from(&normal);
        kkt.view_mut((0, m), (m, 2)).copy_from(&c.transpose());
        kkt.view_mut((m, 0), (2, m)).copy_from(&c);
        let mut b = DVector::zeros(m + 2);
        b.rows_mut(0, m).copy_from(&rhs);
        b[m] = target;
        let sol = kkt
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InsufficientData("constrained design system is singular".into()))?;
        let f = sol.rows(0, m).into_owned();
        let cf = &c * &f;
        (f, Some([cf[0] - target, cf[1]]), 2.0 * p.gamma.sqrt())
    } else {
        let f = normal
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::InsufficientData("design system is singular".into()))?;
        (f, None, 1.0)
    };
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("design solution is not finite".into()));
    }
    Ok(DesignedFilter {
        nodes,
        weights,
        values: f.iter().copied().collect(),
        ridge,
        constraint_residuals: residuals,
        gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::correlators::appendix_c_tables;
    use crate::gaussian::SingleSiteParams;

    #[test]
    fn analytic_tables_reproduce_filter_shape() {
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        let tables = appendix_c_tables(&p, 0.02, 1001).unwrap();
        let f = design_filter_wiener_hopf(&tables, DEFAULT_RIDGE).unwrap();
        let r = f.constraint_residuals.unwrap();
        assert!(r[0].abs() < 1e-8 && r[1].abs() < 1e-8);
        let fit = f.fit_shape(Some(8.0)).unwrap();
        assert!((fit.decay_rate - 0.78615138).abs() / 0.78615138 < 0.01, "{fit:?}");
        assert!((fit.frequency - 1.2720196).abs() / 1.2720196 < 0.01, "{fit:?}");
    }

    #[test]
    fn too_few_nodes_is_insufficient() {
        let p = SingleSiteParams::new(1.0, 1.0).unwrap();
        let mut t = appendix_c_tables(&p, 0.1, 10).unwrap();
        t.g.truncate(3);
        assert!(matches!(design_filter_wiener_hopf(&t, DEFAULT_RIDGE), Err(Error::InsufficientData(_))));
    }
}
