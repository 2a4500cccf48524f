//! Binning of outcomes by estimator value and pooled recovery of conditional
//! variances and covariances.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::postselect::outcome::{site_columns, TrajectoryOutcome};

/// Bin layout and acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningOptions {
    /// Bins with fewer samples are excluded from the pooled estimate.
    pub min_count: usize,
    /// Bins span `mean ± half_width_sd · sd` of the estimator sample;
    /// samples outside fall into the edge bins.
    pub half_width_sd: f64,
}

impl Default for BinningOptions {
    fn default() -> Self {
        Self {
            min_count: 10,
            half_width_sd: 4.0,
        }
    }
}

/// Equal-width edges over `mean ± half_width·sd` of `key`.
fn edges_for(key: &[f64], n_bins: usize, half_width: f64) -> Vec<f64> {
    let n = key.len() as f64;
    let mean = key.iter().sum::<f64>() / n;
    let var = if key.len() > 1 {
        key.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let half = if var > 0.0 { half_width * var.sqrt() } else { 0.5 };
    let (lo, hi) = (mean - half, mean + half);
    (0..=n_bins)
        .map(|i| lo + (hi - lo) * i as f64 / n_bins as f64)
        .collect()
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    let n = edges.len() - 1;
    let w = (edges[n] - edges[0]) / n as f64;
    let i = ((x - edges[0]) / w).floor();
    if i < 0.0 {
        0
    } else {
        (i as usize).min(n - 1)
    }
}

/// Per-bin counts and (shifted) sums and sums of products of the measured
/// values `a`, `b` (`b = a` for one-dimensional recoveries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedStats {
    pub dims: usize,
    pub edges: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Shift subtracted from `(a, b)` before accumulation.
    pub shift: [f64; 2],
    /// Per bin `[Σa, Σb, Σa², Σb², Σab]` of the shifted values.
    pub sums: Vec<[f64; 5]>,
}

impl BinnedStats {
    /// Bins samples by `keys` (one or two axes) with the given edges.
    pub fn accumulate(edges: Vec<Vec<f64>>, keys: &[&[f64]], a: &[f64], b: &[f64], shift: [f64; 2]) -> Result<Self> {
        let dims = keys.len();
        if !(1..=2).contains(&dims) || edges.len() != dims {
            return Err(invalid("binning", "one or two key axes are supported"));
        }
        let n = a.len();
        if b.len() != n || keys.iter().any(|k| k.len() != n) {
            return Err(Error::ShapeMismatch("keys and values differ in length".into()));
        }
        let nb: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let total: usize = nb.iter().product();
        let mut counts = vec![0usize; total];
        let mut sums = vec![[0.0; 5]; total];
        for s in 0..n {
            let mut idx = bin_of(&edges[0], keys[0][s]);
            if dims == 2 {
                idx = idx * nb[1] + bin_of(&edges[1], keys[1][s]);
            }
            let (x, y) = (a[s] - shift[0], b[s] - shift[1]);
            counts[idx] += 1;
            let t = &mut sums[idx];
            t[0] += x;
            t[1] += y;
            t[2] += x * x;
            t[3] += y * y;
            t[4] += x * y;
        }
        Ok(Self {
            dims,
            edges,
            counts,
            shift,
            sums,
        })
    }

    /// Associative merge of histograms with identical layout.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.edges != other.edges || self.shift != other.shift {
            return Err(Error::ShapeMismatch("histograms use different layouts".into()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        for (s, o) in self.sums.iter_mut().zip(&other.sums) {
            for k in 0..5 {
                s[k] += o[k];
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(mean_a, mean_b, var_a, var_b, cov_ab)` of bin `i` (n−1 denominators).
    pub fn bin_moments(&self, i: usize) -> Option<[f64; 5]> {
        let n = self.counts[i];
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let s = &self.sums[i];
        let (ma, mb) = (s[0] / nf, s[1] / nf);
        let d = nf - 1.0;
        Some([
            ma + self.shift[0],
            mb + self.shift[1],
            (s[2] - nf * ma * ma) / d,
            (s[3] - nf * mb * mb) / d,
            (s[4] - nf * ma * mb) / d,
        ])
    }

    /// Count-weighted pooled within-bin covariance of `(a, b)` over bins with
    /// at least `min_count` samples.
    pub fn pooled(&self, min_count: usize) -> Result<Recovery> {
        let total = self.total();
        let mut used = 0usize;
        let mut acc = 0.0;
        let mut var_acc = 0.0;
        let mut bins = Vec::new();
        let nb1 = if self.dims == 2 { self.edges[1].len() - 1 } else { 1 };
        for i in 0..self.counts.len() {
            let n = self.counts[i];
            if n == 0 {
                continue;
            }
            let included = n >= min_count.max(2);
            let m = self.bin_moments(i);
            if included {
                let [_, _, va, vb, c] = m.expect("n ≥ 2");
                used += n;
                acc += n as f64 * c;
                var_acc += (n as f64).powi(2) * (va * vb + c * c) / (n as f64 - 1.0);
            }
            let index = if self.dims == 2 { vec![i / nb1, i % nb1] } else { vec![i] };
            bins.push(BinSummary {
                index,
                count: n,
                mean: m.map(|m| [m[0], m[1]]),
                value: m.map(|m| m[4]),
                included,
            });
        }
        if used == 0 {
            return Err(Error::AllBinsUnderThreshold { min_count });
        }
        let uf = used as f64;
        Ok(Recovery {
            value: acc / uf,
            stderr: var_acc.sqrt() / uf,
            n_used: used,
            excluded_fraction: 1.0 - uf / total as f64,
            bins,
        })
    }
}

/// One bin's statistics in a recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub index: Vec<usize>,
    pub count: usize,
    /// Means of the measured values `(a, b)`.
    pub mean: Option<[f64; 2]>,
    /// Within-bin variance (1D) or covariance (2D).
    pub value: Option<f64>,
    pub included: bool,
}

/// Result of a pooled recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Pooled conditional variance or covariance.
    pub value: f64,
    pub stderr: f64,
    pub n_used: usize,
    /// Fraction of samples in excluded bins.
    pub excluded_fraction: f64,
    pub bins: Vec<BinSummary>,
}

impl Recovery {
    /// Binned-results CSV: `bin_a[, bin_b], count, mean, value, included`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let two = self.bins.first().map(|b| b.index.len() == 2).unwrap_or(false);
        let mut header = vec!["bin_a"];
        if two {
            header.push("bin_b");
        }
        header.extend(["count", "mean", "value", "included"]);
        wr.write_record(&header)?;
        for b in &self.bins {
            let mut row: Vec<String> = b.index.iter().map(|i| i.to_string()).collect();
            row.push(b.count.to_string());
            row.push(b.mean.map(|m| format!("{:.10e}", m[0])).unwrap_or_default());
            row.push(b.value.map(|v| format!("{v:.10e}")).unwrap_or_default());
            row.push(b.included.to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Conditional-variance recovery from raw columns: bins by `estimator`,
/// pools the per-bin variance of `measured`.
pub fn recover_variance(estimator: &[f64], measured: &[f64], n_bins: usize, opts: &BinningOptions) -> Result<Recovery> {
    if n_bins == 0 {
        return Err(invalid("n_bins", "must be at least 1"));
    }
    if estimator.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let edges = edges_for(estimator, n_bins, opts.half_width_sd);
    let m = mean(measured);
    BinnedStats::accumulate(vec![edges], &[estimator], measured, measured, [m, m])?.pooled(opts.min_count)
}

/// Conditional-covariance recovery from raw columns: two-dimensional bins in
/// `(est_a, est_b)`, pooled per-bin covariance of `(meas_a, meas_b)`.
pub fn recover_covariance(
    est_a: &[f64],
    est_b: &[f64],
    meas_a: &[f64],
    meas_b: &[f64],
    n_bins: usize,
    opts: &BinningOptions,
) -> Result<Recovery> {
    if n_bins == 0 {
        return Err(invalid("n_bins", "must be at least 1"));
    }
    if est_a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ea = edges_for(est_a, n_bins, opts.half_width_sd);
    let eb = edges_for(est_b, n_bins, opts.half_width_sd);
    let shift = [mean(meas_a), mean(meas_b)];
    BinnedStats::accumulate(vec![ea, eb], &[est_a, est_b], meas_a, meas_b, shift)?.pooled(opts.min_count)
}

/// Conditional variance of the measured quadrature at `site`.
pub fn bin_and_recover_variance(outcomes: &[TrajectoryOutcome], site: usize, n_bins: usize) -> Result<Recovery> {
    bin_and_recover_variance_with(outcomes, site, n_bins, &BinningOptions::default())
}

pub fn bin_and_recover_variance_with(
    outcomes: &[TrajectoryOutcome],
    site: usize,
    n_bins: usize,
    opts: &BinningOptions,
) -> Result<Recovery> {
    let (e, m) = site_columns(outcomes, site)?;
    recover_variance(&e, &m, n_bins, opts)
}

/// Conditional covariance between sites `j` and `k`. For `j == k` this is
/// the one-dimensional variance recovery.
pub fn bin2d_and_recover_covariance(
    outcomes: &[TrajectoryOutcome],
    pair: (usize, usize),
    n_bins: usize,
) -> Result<Recovery> {
    bin2d_and_recover_covariance_with(outcomes, pair, n_bins, &BinningOptions::default())
}

pub fn bin2d_and_recover_covariance_with(
    outcomes: &[TrajectoryOutcome],
    (j, k): (usize, usize),
    n_bins: usize,
    opts: &BinningOptions,
) -> Result<Recovery> {
    if j == k {
        return bin_and_recover_variance_with(outcomes, j, n_bins, opts);
    }
    let (ej, mj) = site_columns(outcomes, j)?;
    let (ek, mk) = site_columns(outcomes, k)?;
    recover_covariance(&ej, &ek, &mj, &mk, n_bins, opts)
}

/// Sample moments used to test normality of an estimator histogram:
/// `(mean, variance, skewness, excess kurtosis)`.
pub fn moment_ratios(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let m = mean(x);
    let c = |p: i32| x.iter().map(|v| (v - m).powi(p)).sum::<f64>() / n;
    let var = c(2);
    [m, var, c(3) / var.powf(1.5), c(4) / (var * var) - 3.0]
}
