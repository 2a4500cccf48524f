//! Record-record and record-observable correlators, estimated from an
//! ensemble (or any collection of statistically equivalent samples).

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::SingleSiteParams;

/// Regressors used to remove the secular drift of the record correlator
/// along absolute time, per lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Detrend {
    /// `{1, t}`.
    Linear,
    /// `{1, t, cos 2h0t, sin 2h0t}`, which also absorbs the twice-rotation
    /// oscillation of the unconditional second moments.
    LinearOscillating { h0: f64 },
}

/// How the design step should read the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableStructure {
    /// Full two-time correlator at the fixed observation time
    /// (`fixed_time` holds `E[ΔI_a ΔI_b]/D²`, δ-part on the diagonal).
    FixedTime,
    /// Toeplitz in the lag, from the detrended `s` plus the δ weight.
    Stationary,
    /// One-sided kernel `ρ(ℓ)` on nodes `ℓ = m·D`, entering the equation
    /// `f(s) + ∫_{s'>s} ρ(s' − s) f(s') ds' = g(s)`.
    OneSided,
}

/// Correlator tables over a uniform lag grid of width `lag_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorTables {
    pub lag_step: f64,
    /// `S(ℓ)` at `ℓ = m·lag_step` without the δ-contribution (detrended
    /// for empirical tables; `ρ` for one-sided tables).
    pub s: Vec<f64>,
    pub s_stderr: Vec<f64>,
    /// Cross-correlator `g(s)` on the design nodes.
    pub g: Vec<f64>,
    pub g_stderr: Vec<f64>,
    /// Coefficient of the δ-term: `1/lag_step` for block-averaged records.
    pub delta_weight: f64,
    pub structure: TableStructure,
    #[serde(skip)]
    pub fixed_time: Option<DMatrix<f64>>,
    /// Parameters fixing the two moment constraints, if they are to be enforced.
    pub constraints: Option<SingleSiteParams>,
    pub n_samples: usize,
    pub t_obs: f64,
}

impl CorrelatorTables {
    pub fn n_lags(&self) -> usize {
        self.s.len()
    }

    /// Design nodes and quadrature weights.
    pub fn nodes_and_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.g.len();
        let d = self.lag_step;
        match self.structure {
            TableStructure::OneSided => {
                let nodes = (0..n).map(|i| i as f64 * d).collect();
                let mut w = vec![d; n];
                if n > 0 {
                    w[0] = d / 2.0;
                    w[n - 1] = d / 2.0;
                }
                (nodes, w)
            }
            _ => ((0..n).map(|i| (i as f64 + 0.5) * d).collect(), vec![d; n]),
        }
    }

    /// `lag, S, g` rows (`g` on its design nodes, blank past its length).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lag", "S", "g"])?;
        let (nodes, _) = self.nodes_and_weights();
        let n = self.s.len().max(self.g.len());
        for m in 0..n {
            let lag = m as f64 * self.lag_step;
            let s = self.s.get(m).map(|v| format!("{v:.10e}")).unwrap_or_default();
            let g = self.g.get(m).map(|v| format!("{v:.10e}")).unwrap_or_default();
            let _ = nodes.get(m);
            wr.write_record(&[format!("{lag}"), s, g])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// One-sided kernel of the stationary filter equation at `h0`, `Γ`:
/// `ρ(ℓ) = r_*(−ℓ) = 2(Γ²/h0) sin(h0ℓ) − 2Γ²ℓ cos(h0ℓ)` for `ℓ > 0`,
/// with `g ≡ 0` and the moment constraints carrying the normalization.
pub fn appendix_c_tables(params: &SingleSiteParams, lag_step: f64, n_nodes: usize) -> Result<CorrelatorTables> {
    if !(params.h0 > 0.0) {
        return Err(Error::UnsupportedParameter("h0 must be positive".into()));
    }
    if !(lag_step > 0.0) || n_nodes < 4 {
        return Err(invalid("lag grid", "needs positive step and at least 4 nodes"));
    }
    let (h, g2) = (params.h0, params.gamma * params.gamma);
    let s: Vec<f64> = (0..n_nodes)
        .map(|m| {
            let l = m as f64 * lag_step;
            2.0 * g2 / h * (h * l).sin() - 2.0 * g2 * l * (h * l).cos()
        })
        .collect();
    Ok(CorrelatorTables {
        lag_step,
        s_stderr: vec![0.0; n_nodes],
        s,
        g: vec![0.0; n_nodes],
        g_stderr: vec![0.0; n_nodes],
        delta_weight: 1.0,
        structure: TableStructure::OneSided,
        fixed_time: None,
        constraints: Some(*params),
        n_samples: 0,
        t_obs: f64::INFINITY,
    })
}

/// Streaming, mergeable accumulator of block-averaged record moments.
///
/// The window ends at step `n_obs` and consists of `n_blocks` blocks of
/// `block_steps` steps each, counted backwards: block `b` covers steps
/// `[n_obs − (b+1)·block_steps, n_obs − b·block_steps)`, i.e. look-back
/// times around `(b + ½)·D`.
#[derive(Debug, Clone)]
pub struct CorrelatorAccumulator {
    dt: f64,
    block_steps: usize,
    n_blocks: usize,
    n_obs: usize,
    n: usize,
    sum_outer: DMatrix<f64>,
    sum_outer_sq: DMatrix<f64>,
    sum_g: DVector<f64>,
    sum_g_sq: DVector<f64>,
    blocks: DVector<f64>,
}

impl CorrelatorAccumulator {
    pub fn new(dt: f64, block_steps: usize, n_blocks: usize, n_obs: usize) -> Result<Self> {
        if block_steps == 0 || n_blocks < 2 {
            return Err(invalid("lag window", "needs block_steps ≥ 1 and at least 2 blocks"));
        }
        if n_blocks * block_steps > n_obs {
            return Err(Error::InvalidWindow(format!(
                "window of {} steps exceeds the {n_obs} recorded steps before the observation",
                n_blocks * block_steps
            )));
        }
        Ok(Self {
            dt,
            block_steps,
            n_blocks,
            n_obs,
            n: 0,
            sum_outer: DMatrix::zeros(n_blocks, n_blocks),
            sum_outer_sq: DMatrix::zeros(n_blocks, n_blocks),
            sum_g: DVector::zeros(n_blocks),
            sum_g_sq: DVector::zeros(n_blocks),
            blocks: DVector::zeros(n_blocks),
        })
    }

    pub fn block_width(&self) -> f64 {
        self.dt * self.block_steps as f64
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Adds one sample: the site's increments (at least `n_obs` of them) and
    /// the observable measured at the observation time.
    pub fn push(&mut self, increments: &[f64], measured: f64) -> Result<()> {
        if increments.len() < self.n_obs {
            return Err(Error::InvalidWindow(format!(
                "series of {} steps is shorter than the observation index {}",
                increments.len(),
                self.n_obs
            )));
        }
        for b in 0..self.n_blocks {
            let hi = self.n_obs - b * self.block_steps;
            let lo = hi - self.block_steps;
            self.blocks[b] = increments[lo..hi].iter().sum();
        }
        for a in 0..self.n_blocks {
            let ba = self.blocks[a];
            for b in a..self.n_blocks {
                let prod = ba * self.blocks[b];
                self.sum_outer[(a, b)] += prod;
                self.sum_outer_sq[(a, b)] += prod * prod;
            }
            let gx = measured * ba;
            self.sum_g[a] += gx;
            self.sum_g_sq[a] += gx * gx;
        }
        self.n += 1;
        Ok(())
    }

    /// Associative merge of partial sums over disjoint samples.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.dt != self.dt
            || other.block_steps != self.block_steps
            || other.n_blocks != self.n_blocks
            || other.n_obs != self.n_obs
        {
            return Err(Error::ShapeMismatch("accumulators use different windows".into()));
        }
        self.n += other.n;
        self.sum_outer += &other.sum_outer;
        self.sum_outer_sq += &other.sum_outer_sq;
        self.sum_g += &other.sum_g;
        self.sum_g_sq += &other.sum_g_sq;
        Ok(())
    }

    fn mean_outer(&self, a: usize, b: usize) -> (f64, f64) {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let n = self.n as f64;
        let m = self.sum_outer[(a, b)] / n;
        let var = (self.sum_outer_sq[(a, b)] / n - m * m).max(0.0);
        (m, (var / (n - 1.0).max(1.0)).sqrt())
    }

    /// Tables at the observation time `t_obs` (used for reporting and
    /// bookkeeping only). Detrended `S(ℓ)` is the per-lag regression model
    /// evaluated at the window start.
    pub fn finish(
        &self,
        t_obs: f64,
        detrend: Detrend,
        constraints: Option<SingleSiteParams>,
    ) -> Result<CorrelatorTables> {
        if self.n < 2 {
            return Err(Error::InsufficientData("need at least 2 samples".into()));
        }
        let d = self.block_width();
        let d2 = d * d;
        let nb = self.n_blocks;
        let mut fixed = DMatrix::zeros(nb, nb);
        for a in 0..nb {
            for b in 0..nb {
                fixed[(a, b)] = self.mean_outer(a, b).0 / d2;
            }
        }
        let t_start = t_obs - nb as f64 * d;
        let mut s = Vec::with_capacity(nb);
        let mut s_se = Vec::with_capacity(nb);
        for lag in 0..nb {
            let mut ts = Vec::new();
            let mut ys = Vec::new();
            let mut ses = Vec::new();
            for b in 0..nb - lag {
                let (m, se) = self.mean_outer(b, b + lag);
                let mut y = m / d2;
                if lag == 0 {
                    y -= 1.0 / d;
                }
                ts.push(t_obs - (b as f64 + lag as f64 / 2.0 + 0.5) * d);
                ys.push(y);
                ses.push(se / d2);
            }
            let (val, se) = detrended_value(&ts, &ys, &ses, detrend, t_start);
            s.push(val);
            s_se.push(se);
        }
        let n = self.n as f64;
        let g: Vec<f64> = self.sum_g.iter().map(|x| x / n / d).collect();
        let g_se: Vec<f64> = self
            .sum_g
            .iter()
            .zip(self.sum_g_sq.iter())
            .map(|(&s1, &s2)| {
                let m = s1 / n;
                ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt() / d
            })
            .collect();
        Ok(CorrelatorTables {
            lag_step: d,
            s,
            s_stderr: s_se,
            g,
            g_stderr: g_se,
            delta_weight: 1.0 / d,
            structure: TableStructure::FixedTime,
            fixed_time: Some(fixed),
            constraints,
            n_samples: self.n,
            t_obs,
        })
    }
}

/// Least-squares fit of `ys(ts)` on the detrending basis, evaluated at `t_ref`.
/// Falls back to the plain mean when too few points are available.
fn detrended_value(ts: &[f64], ys: &[f64], ses: &[f64], detrend: Detrend, t_ref: f64) -> (f64, f64) {
    let n = ys.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let mean_se = (ses.iter().map(|s| s * s).sum::<f64>()).sqrt() / n as f64;
    let basis = |t: f64| -> Vec<f64> {
        match detrend {
            Detrend::Linear => vec![1.0, t - t_ref],
            Detrend::LinearOscillating { h0 } => {
                vec![1.0, t - t_ref, (2.0 * h0 * t).cos(), (2.0 * h0 * t).sin()]
            }
        }
    };
    let k = basis(0.0).len();
    if n < k + 2 {
        return (mean, mean_se);
    }
    let x = DMatrix::from_fn(n, k, |i, j| basis(ts[i])[j]);
    let y = DVector::from_column_slice(ys);
    let xtx = x.transpose() * &x;
    let Some(inv) = xtx.clone().try_inverse() else {
        return (mean, mean_se);
    };
    let coef = &inv * x.transpose() * &y;
    let at = DVector::from_vec(basis(t_ref));
    let value = at.dot(&coef);
    let resid = &x * &coef - &y;
    let sigma2 = resid.norm_squared() / (n - k) as f64;
    let var = (at.transpose() * &inv * &at)[(0, 0)] * sigma2;
    (value, var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_validation() {
        assert!(CorrelatorAccumulator::new(1e-3, 10, 20, 100).is_err());
        assert!(CorrelatorAccumulator::new(1e-3, 10, 10, 100).is_ok());
    }

    #[test]
    fn merge_equals_single_pass() {
        let data: Vec<Vec<f64>> = (0..6)
            .map(|s| (0..40).map(|k| ((s * 41 + k) as f64 * 0.37).sin()).collect())
            .collect();
        let mut all = CorrelatorAccumulator::new(0.1, 2, 5, 40).unwrap();
        let mut a = all.clone();
        let mut b = all.clone();
        for (i, d) in data.iter().enumerate() {
            all.push(d, i as f64).unwrap();
            if i < 3 {
                a.push(d, i as f64).unwrap();
            } else {
                b.push(d, i as f64).unwrap();
            }
        }
        a.merge(&b).unwrap();
        let t1 = all.finish(4.0, Detrend::Linear, None).unwrap();
        let t2 = a.finish(4.0, Detrend::Linear, None).unwrap();
        for (x, y) in t1.s.iter().zip(&t2.s) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in t1.g.iter().zip(&t2.g) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
