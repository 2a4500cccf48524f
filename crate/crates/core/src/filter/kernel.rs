use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which conditional mean a kernel estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl std::str::FromStr for Quadrature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Quadrature::X),
            "p" => Ok(Quadrature::P),
            other => Err(invalid("quadrature", format!("expected x or p, got `{other}`"))),
        }
    }
}

/// How a kernel was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Analytic,
    Continuum,
    Designed,
}

/// Support that was cut away from a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub description: String,
    /// L1 mass removed relative to the L1 mass before truncation.
    pub dropped_mass_fraction: f64,
}

/// Causal spatio-temporal kernel `K(r, T)` sampled at `T = m·dt`,
/// `m = 0..n_lags`, for a list of lattice displacements `r`.
///
/// Values are stored without the global estimator prefactor; `gain` holds
/// it (the estimator is `gain · Σ K·dI`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterKernel {
    offsets: Vec<Vec<i64>>,
    dt: f64,
    n_lags: usize,
    values: Vec<f64>,
    pub gain: f64,
    pub target: Quadrature,
    pub generator: Generator,
    pub truncations: Vec<Truncation>,
    pub params: serde_json::Value,
}

/// JSON sidecar of a kernel file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelMetadata {
    pub target: Quadrature,
    pub generator: Generator,
    pub gain: f64,
    pub dt: f64,
    pub n_lags: usize,
    pub n_offsets: usize,
    pub truncations: Vec<Truncation>,
    pub params: serde_json::Value,
}

impl FilterKernel {
    /// `values` is offset-major: `values[r_idx * n_lags + m]`.
    pub fn new(
        offsets: Vec<Vec<i64>>,
        dt: f64,
        values: Vec<f64>,
        gain: f64,
        target: Quadrature,
        generator: Generator,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", "kernel time step must be positive"));
        }
        if offsets.is_empty() {
            return Err(invalid("offsets", "kernel needs at least one spatial offset"));
        }
        let dim = offsets[0].len();
        if dim == 0 || offsets.iter().any(|o| o.len() != dim) {
            return Err(invalid("offsets", "all offsets must share one positive dimension"));
        }
        if values.len() % offsets.len() != 0 || values.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not divide into {} offsets",
                values.len(),
                offsets.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || !gain.is_finite() {
            return Err(invalid("values", "kernel values must be finite"));
        }
        let n_lags = values.len() / offsets.len();
        Ok(Self {
            offsets,
            dt,
            n_lags,
            values,
            gain,
            target,
            generator,
            truncations: Vec::new(),
            params: serde_json::Value::Null,
        })
    }

    /// Single-site kernel from samples `f(m·dt)`.
    pub fn single_site(
        dt: f64,
        samples: Vec<f64>,
        gain: f64,
        target: Quadrature,
        generator: Generator,
    ) -> Result<Self> {
        Self::new(vec![vec![0]], dt, samples, gain, target, generator)
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_lags(&self) -> usize {
        self.n_lags
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn dims(&self) -> usize {
        self.offsets[0].len()
    }

    pub fn row(&self, r_idx: usize) -> &[f64] {
        &self.values[r_idx * self.n_lags..(r_idx + 1) * self.n_lags]
    }

    pub fn value(&self, r_idx: usize, m: usize) -> f64 {
        self.values[r_idx * self.n_lags + m]
    }

    /// Row for displacement `r`, if it is in the support.
    pub fn row_for(&self, r: &[i64]) -> Option<&[f64]> {
        self.offsets
            .iter()
            .position(|o| o.as_slice() == r)
            .map(|i| self.row(i))
    }

    pub fn lag_times(&self) -> Vec<f64> {
        (0..self.n_lags).map(|m| m as f64 * self.dt).collect()
    }

    pub(crate) fn check_compatible(&self, dt: f64, dims: usize) -> Result<()> {
        if ((self.dt - dt) / dt).abs() > 1e-9 {
            return Err(invalid(
                "kernel",
                format!("kernel dt {} differs from record dt {dt}", self.dt),
            ));
        }
        if self.dims() != dims {
            return Err(invalid(
                "kernel",
                format!("kernel is {}-dimensional, record {dims}-dimensional", self.dims()),
            ));
        }
        Ok(())
    }

    fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    fn rebuild(&self, keep_offsets: &[usize], n_lags: usize, description: String) -> Self {
        let before = self.l1();
        let mut values = Vec::with_capacity(keep_offsets.len() * n_lags);
        for &r in keep_offsets {
            values.extend_from_slice(&self.row(r)[..n_lags]);
        }
        let offsets = keep_offsets.iter().map(|&r| self.offsets[r].clone()).collect();
        let mut out = Self {
            offsets,
            dt: self.dt,
            n_lags,
            values,
            gain: self.gain,
            target: self.target,
            generator: self.generator,
            truncations: self.truncations.clone(),
            params: self.params.clone(),
        };
        let after = out.l1();
        out.truncations.push(Truncation {
            description,
            dropped_mass_fraction: if before > 0.0 { (before - after) / before } else { 0.0 },
        });
        out
    }

    /// Drops trailing lags and whole offsets where `|K| < rel·max|K|`.
    pub fn truncate_relative(&self, rel: f64) -> Self {
        let max = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max == 0.0 {
            return self.clone();
        }
        let thr = rel * max;
        let keep: Vec<usize> = (0..self.offsets.len())
            .filter(|&r| self.row(r).iter().any(|v| v.abs() >= thr))
            .collect();
        let last = keep
            .iter()
            .filter_map(|&r| self.row(r).iter().rposition(|v| v.abs() >= thr))
            .max()
            .unwrap_or(0);
        self.rebuild(&keep, last + 1, format!("relative cutoff {rel:e}"))
    }

    /// Keeps lags `T ≤ t_max`.
    pub fn truncate_time(&self, t_max: f64) -> Self {
        let n = ((t_max / self.dt).floor() as usize + 1).min(self.n_lags).max(1);
        let keep: Vec<usize> = (0..self.offsets.len()).collect();
        self.rebuild(&keep, n, format!("time support T ≤ {t_max}"))
    }

    /// Keeps displacements with every component `|r_μ| ≤ r_max`.
    pub fn truncate_space(&self, r_max: i64) -> Self {
        let keep: Vec<usize> = (0..self.offsets.len())
            .filter(|&r| self.offsets[r].iter().all(|c| c.abs() <= r_max))
            .collect();
        self.rebuild(&keep, self.n_lags, format!("spatial support |r| ≤ {r_max}"))
    }

    /// Same kernel with values multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn metadata(&self) -> KernelMetadata {
        KernelMetadata {
            target: self.target,
            generator: self.generator,
            gain: self.gain,
            dt: self.dt,
            n_lags: self.n_lags,
            n_offsets: self.offsets.len(),
            truncations: self.truncations.clone(),
            params: self.params.clone(),
        }
    }

    /// CSV with columns `r, T, value` (`r0, r1, …` in more than one dimension).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = if self.dims() == 1 {
            vec!["r".into()]
        } else {
            (0..self.dims()).map(|d| format!("r{d}")).collect()
        };
        header.push("T".into());
        header.push("value".into());
        wr.write_record(&header)?;
        for (ri, off) in self.offsets.iter().enumerate() {
            for m in 0..self.n_lags {
                let mut row: Vec<String> = off.iter().map(|c| c.to_string()).collect();
                row.push(format!("{}", m as f64 * self.dt));
                row.push(format!("{:.12e}", self.value(ri, m)));
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FilterKernel {
        let offsets = vec![vec![-1], vec![0], vec![1]];
        let mut vals = Vec::new();
        for r in [-1.0f64, 0.0, 1.0] {
            for m in 0..10 {
                vals.push((-(m as f64) - r.abs() * 20.0).exp());
            }
        }
        FilterKernel::new(offsets, 0.1, vals, 2.0, Quadrature::P, Generator::Analytic).unwrap()
    }

    #[test]
    fn relative_truncation_drops_small_support() {
        let k = toy();
        let t = k.truncate_relative(1e-3);
        assert_eq!(t.offsets().len(), 1);
        assert_eq!(t.n_lags(), 7);
        assert!(t.truncations[0].dropped_mass_fraction > 0.0);
        assert!(t.truncations[0].dropped_mass_fraction < 1e-3);
    }

    #[test]
    fn time_and_space_truncation() {
        let k = toy();
        assert_eq!(k.truncate_time(0.35).n_lags(), 4);
        assert_eq!(k.truncate_space(0).offsets(), &[vec![0]]);
        assert!(k.row_for(&[1]).is_some());
        assert!(k.row_for(&[2]).is_none());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FilterKernel::new(vec![vec![0]], 0.1, vec![], 1.0, Quadrature::X, Generator::Analytic).is_err());
        assert!(FilterKernel::new(
            vec![vec![0], vec![1, 2]],
            0.1,
            vec![0.0; 4],
            1.0,
            Quadrature::X,
            Generator::Analytic
        )
        .is_err());
    }
}
