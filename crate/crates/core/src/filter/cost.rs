//! Fixed-observation-time cost surrogate `mean[(measured − estimate)²]`.
//!
//! For any filter this equals the irreducible conditional variance plus the
//! filter's excess error, so it ranks filters correctly while its absolute
//! value is offset by the conditional variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::kernel::FilterKernel;
use crate::stochastic::{convolve_record, MeasurementRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub n_samples: usize,
}

/// Streaming accumulator of squared residuals; merges associatively.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostAccumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl CostAccumulator {
    pub fn push(&mut self, measured: f64, estimate: f64) {
        let r2 = (measured - estimate).powi(2);
        self.n += 1;
        self.sum += r2;
        self.sum_sq += r2 * r2;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn finish(&self) -> Result<CostEstimate> {
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(CostEstimate {
            mean,
            stderr: (var / n).sqrt(),
            n_samples: self.n,
        })
    }
}

/// Cost of `kernel` over `(record, measured outcome)` pairs, with the
/// estimator evaluated at `site` and time `t_obs` of each record.
pub fn cost_surrogate<'a, I>(kernel: &FilterKernel, dataset: I, site: usize, t_obs: f64) -> Result<CostEstimate>
where
    I: IntoIterator<Item = (&'a MeasurementRecord, f64)>,
{
    let mut acc = CostAccumulator::default();
    for (record, measured) in dataset {
        let est = convolve_record(record, kernel, site, t_obs)?.value;
        acc.push(measured, est);
    }
    acc.finish()
}
