//! Time grids, seeded Wiener increments, measurement records and the
//! causal record-kernel convolution shared by every engine.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter::FilterKernel;

/// Uniform discretization of `[t0, t0 + n_steps·dt]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if n_steps < 1 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if !t0.is_finite() {
            return Err(invalid("t0", "must be finite"));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid starting at zero covering `[0, t_final]`; `t_final` is rounded
    /// to the nearest whole number of steps.
    pub fn from_duration(dt: f64, t_final: f64) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(invalid("t_final", format!("must be positive, got {t_final}")));
        }
        let n = (t_final / dt).round();
        Self::new(0.0, dt, n.max(1.0) as usize)
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.duration()
    }

    /// Start of interval `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Index `n` with `t0 + n·dt == t`, if `t` lies on the grid
    /// (including the final endpoint `n == n_steps`).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.dt;
        if !x.is_finite() || x < -1e-9 {
            return Err(Error::InvalidWindow(format!(
                "observation time {t} precedes grid start {}",
                self.t0
            )));
        }
        let n = x.round();
        if (x - n).abs() > 1e-6 {
            return Err(Error::InvalidWindow(format!(
                "observation time {t} is not on the grid (dt = {})",
                self.dt
            )));
        }
        let n = n as usize;
        if n > self.n_steps {
            return Err(Error::InvalidWindow(format!(
                "observation time {t} exceeds grid end {}",
                self.t_end()
            )));
        }
        Ok(n)
    }
}

/// Deterministic per-trajectory random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        Self {
            master_seed,
            trajectory_index,
        }
    }

    /// ChaCha8 keyed by the master seed, with the trajectory index selecting
    /// the stream: distinct indices never share keystream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trajectory_index);
        rng
    }

    /// A derived spec for an auxiliary purpose (e.g. measurement sampling),
    /// independent of the trajectory noise stream.
    pub fn derive(&self, salt: u64) -> SeedSpec {
        SeedSpec {
            master_seed: splitmix64(self.master_seed ^ splitmix64(salt)),
            trajectory_index: self.trajectory_index,
        }
    }
}

/// Per-trajectory seeds `0..n_traj` under one master seed. Streams are
/// disjoint by construction, so results do not depend on scheduling order.
pub fn seed_plan(master_seed: u64, n_traj: usize) -> Result<Vec<SeedSpec>> {
    if n_traj == 0 {
        return Err(invalid("n_traj", "must be at least 1"));
    }
    Ok((0..n_traj as u64).map(|i| SeedSpec::new(master_seed, i)).collect())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One `N(0, dt)` Wiener increment.
#[inline]
pub fn wiener_increment<R: rand::Rng + ?Sized>(rng: &mut R, sqrt_dt: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sqrt_dt
}

/// Real matrix indexed `[site][step]`, stored site-major (each site's time
/// series is contiguous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSeries {
    sites: usize,
    n_steps: usize,
    data: Vec<f64>,
}

impl SiteSeries {
    pub fn zeros(sites: usize, n_steps: usize) -> Self {
        Self {
            sites,
            n_steps,
            data: vec![0.0; sites * n_steps],
        }
    }

    pub fn from_vec(sites: usize, n_steps: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != sites * n_steps {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for {sites} sites × {n_steps} steps, got {}",
                sites * n_steps,
                data.len()
            )));
        }
        Ok(Self {
            sites,
            n_steps,
            data,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_steps..(i + 1) * self.n_steps]
    }

    pub fn site_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_steps..(i + 1) * self.n_steps]
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n_steps + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        self.data[i * self.n_steps + k] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws i.i.d. `N(0, dt)` increments for every site and step.
///
/// Draw order is step-major (all sites of step 0, then step 1, …), which is
/// the order in which the trajectory integrators consume the same stream, so
/// a simulation and `generate_wiener` with the same seed see identical noise.
pub fn generate_wiener(grid: &TimeGrid, sites: usize, seed: &SeedSpec) -> SiteSeries {
    let mut rng = seed.rng();
    let sqrt_dt = grid.dt.sqrt();
    let mut out = SiteSeries::zeros(sites, grid.n_steps);
    for k in 0..grid.n_steps {
        for i in 0..sites {
            out.set(i, k, wiener_increment(&mut rng, sqrt_dt));
        }
    }
    out
}

/// Homodyne increments `dI[site][step]` on a periodic lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    lengths: Vec<usize>,
    grid: TimeGrid,
    increments: SiteSeries,
}

impl MeasurementRecord {
    /// Record on a lattice with the given per-dimension lengths.
    pub fn new(lengths: Vec<usize>, grid: TimeGrid, increments: SiteSeries) -> Result<Self> {
        if lengths.is_empty() || lengths.iter().any(|&l| l == 0) {
            return Err(invalid("lengths", "every lattice length must be at least 1"));
        }
        let v: usize = lengths.iter().product();
        if increments.sites() != v || increments.n_steps() != grid.n_steps {
            return Err(Error::ShapeMismatch(format!(
                "record is {}×{}, expected {v}×{}",
                increments.sites(),
                increments.n_steps(),
                grid.n_steps
            )));
        }
        if let Some(bad) = increments.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(invalid(
                "increments",
                format!("non-finite entry at flat index {bad}"),
            ));
        }
        Ok(Self {
            lengths,
            grid,
            increments,
        })
    }

    /// Record on a ring (or a single site when `sites == 1`).
    pub fn chain(grid: TimeGrid, increments: SiteSeries) -> Result<Self> {
        let v = increments.sites();
        Self::new(vec![v], grid, increments)
    }

    pub fn zeros(lengths: Vec<usize>, grid: TimeGrid) -> Result<Self> {
        let v = lengths.iter().product();
        Self::new(lengths, grid, SiteSeries::zeros(v, grid.n_steps))
    }

    pub fn sites(&self) -> usize {
        self.increments.sites()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn increments(&self) -> &SiteSeries {
        &self.increments
    }

    pub fn site(&self, i: usize) -> &[f64] {
        self.increments.site(i)
    }

    /// `a·self + b·other`, for records on the same lattice and grid.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.lengths != other.lengths || self.grid != other.grid {
            return Err(Error::ShapeMismatch("records differ in lattice or grid".into()));
        }
        let data = self
            .increments
            .as_slice()
            .iter()
            .zip(other.increments.as_slice())
            .map(|(x, y)| a * x + b * y)
            .collect();
        let inc = SiteSeries::from_vec(self.sites(), self.grid.n_steps, data)?;
        Self::new(self.lengths.clone(), self.grid, inc)
    }

    /// Record with sites shifted by `shift` lattice steps along `axis`
    /// (periodically): site `i + shift` of the result holds site `i` here.
    pub fn shifted(&self, axis: usize, shift: i64) -> Result<Self> {
        if axis >= self.lengths.len() {
            return Err(invalid("axis", format!("lattice has {} dimensions", self.lengths.len())));
        }
        let mut out = SiteSeries::zeros(self.sites(), self.grid.n_steps);
        let mut dvec = vec![0i64; self.lengths.len()];
        dvec[axis] = shift;
        for i in 0..self.sites() {
            let j = offset_site(&self.lengths, i, &dvec);
            out.site_mut(j).copy_from_slice(self.site(i));
        }
        Self::new(self.lengths.clone(), self.grid, out)
    }

    /// Binary form: little-endian `u64 V`, `u64 n_steps`, `f64 dt`, then the
    /// `V × n_steps` increments row-major by site.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.sites() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_steps as u64).to_le_bytes())?;
        w.write_all(&self.grid.dt.to_le_bytes())?;
        for x in self.increments.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the binary form; the result is a ring starting at `t = 0`.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)
                .map_err(|e| Error::MalformedRecord(e.to_string()))?;
            Ok(b8)
        };
        let v = u64::from_le_bytes(next(&mut r)?) as usize;
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let len = v
            .checked_mul(n)
            .ok_or_else(|| Error::MalformedRecord("header overflow".into()))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(next(&mut r)?));
        }
        let grid = TimeGrid::new(0.0, dt, n)?;
        Self::chain(grid, SiteSeries::from_vec(v, n, data)?)
    }

    /// CSV export with columns `site, step, dI`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["site", "step", "dI"])?;
        for i in 0..self.sites() {
            for (k, x) in self.site(i).iter().enumerate() {
                wr.write_record(&[i.to_string(), k.to_string(), format!("{x:.17e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Running sum of the increments: `I[i][k] = Σ_{m ≤ k} dI[i][m]`.
pub fn integrated_record(record: &MeasurementRecord) -> SiteSeries {
    let n = record.grid().n_steps;
    let mut out = SiteSeries::zeros(record.sites(), n);
    for i in 0..record.sites() {
        let mut acc = 0.0;
        for (o, x) in out.site_mut(i).iter_mut().zip(record.site(i)) {
            acc += x;
            *o = acc;
        }
    }
    out
}

/// Coordinates of flat site index `i` (first axis fastest).
pub fn site_coords(lengths: &[usize], mut i: usize) -> Vec<usize> {
    let mut c = Vec::with_capacity(lengths.len());
    for &l in lengths {
        c.push(i % l);
        i /= l;
    }
    c
}

/// Flat index of `coords` (first axis fastest).
pub fn site_index(lengths: &[usize], coords: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (&c, &l) in coords.iter().zip(lengths) {
        idx += (c % l) * stride;
        stride *= l;
    }
    idx
}

/// Flat index of site `i` displaced by `d`, periodically.
pub fn offset_site(lengths: &[usize], i: usize, d: &[i64]) -> usize {
    let mut c = site_coords(lengths, i);
    for ((ci, &l), &di) in c.iter_mut().zip(lengths).zip(d) {
        *ci = (*ci as i64 + di).rem_euclid(l as i64) as usize;
    }
    site_index(lengths, &c)
}

/// Result of a record-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convolution {
    /// `gain · Σ_j Σ_k K(site − j, t_obs − t_k)·dI_j[k]`: the estimator value.
    pub value: f64,
    /// L1 mass of the kernel at lags older than the record start, relative
    /// to its total L1 mass (0 when the full support is available).
    pub truncated_mass_fraction: f64,
}

/// Causal Riemann–Itô sum of a kernel against the record.
///
/// Increment `k` covers `[t_k, t_k + dt)` and is weighted by the kernel at
/// lag `T = t_obs − t_k` (left-point rule), so for `t_obs = t0 + n·dt` only
/// steps `k < n` enter, with kernel lag index `n − k ≥ 1`. Site offsets wrap
/// periodically. History the record does not cover is dropped and its mass
/// reported in [`Convolution::truncated_mass_fraction`].
pub fn convolve_record(
    record: &MeasurementRecord,
    kernel: &FilterKernel,
    site: usize,
    t_obs: f64,
) -> Result<Convolution> {
    let grid = record.grid();
    kernel.check_compatible(grid.dt, record.lengths().len())?;
    if site >= record.sites() {
        return Err(invalid("site", format!("{site} ≥ {} sites", record.sites())));
    }
    let n = grid.index_of(t_obs)?;
    let lengths = record.lengths();
    let n_lags = kernel.n_lags();
    let max_m = n.min(n_lags.saturating_sub(1));
    let mut value = 0.0;
    let mut total_mass = 0.0;
    let mut lost_mass = 0.0;
    for (r_idx, offset) in kernel.offsets().iter().enumerate() {
        // K(site − j) with the record site j = site − offset.
        let neg: Vec<i64> = offset.iter().map(|&o| -o).collect();
        let j = offset_site(lengths, site, &neg);
        let series = record.site(j);
        let kv = kernel.row(r_idx);
        for m in 1..=max_m {
            value += kv[m] * series[n - m];
        }
        for (m, k) in kv.iter().enumerate().skip(1) {
            total_mass += k.abs();
            if m > n {
                lost_mass += k.abs();
            }
        }
    }
    let truncated_mass_fraction = if total_mass > 0.0 {
        lost_mass / total_mass
    } else {
        0.0
    };
    Ok(Convolution {
        value: kernel.gain * value,
        truncated_mass_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1e-3, 0).is_err());
        let g = TimeGrid::new(1.0, 0.5, 4).unwrap();
        assert_eq!(g.duration(), 2.0);
        assert_eq!(g.index_of(2.0).unwrap(), 2);
        assert!(g.index_of(0.5).is_err());
        assert!(g.index_of(3.5).is_err());
        assert!(g.index_of(1.25).is_err());
    }

    #[test]
    fn wiener_is_deterministic() {
        let g = TimeGrid::new(0.0, 1e-3, 100).unwrap();
        let s = SeedSpec::new(7, 3);
        assert_eq!(generate_wiener(&g, 4, &s), generate_wiener(&g, 4, &s));
        assert_ne!(
            generate_wiener(&g, 4, &s),
            generate_wiener(&g, 4, &SeedSpec::new(7, 4))
        );
    }

    #[test]
    fn integrated_record_small_example() {
        let g = TimeGrid::new(0.0, 0.1, 3).unwrap();
        let rec = MeasurementRecord::chain(
            g,
            SiteSeries::from_vec(1, 3, vec![0.1, -0.1, 0.2]).unwrap(),
        )
        .unwrap();
        let i = integrated_record(&rec);
        let expect = [0.1, 0.0, 0.2];
        for (a, b) in i.site(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn binary_round_trip() {
        let g = TimeGrid::new(0.0, 1e-2, 17).unwrap();
        let rec = MeasurementRecord::chain(g, generate_wiener(&g, 3, &SeedSpec::new(1, 0))).unwrap();
        let mut buf = Vec::new();
        rec.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * 3 * 17);
        let back = MeasurementRecord::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, rec);
        assert!(MeasurementRecord::read_binary(&buf[..30]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let g = TimeGrid::new(0.0, 1e-2, 2).unwrap();
        let s = SiteSeries::from_vec(1, 2, vec![0.0, f64::NAN]).unwrap();
        assert!(MeasurementRecord::chain(g, s).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let l = [3, 4, 2];
        for i in 0..24 {
            assert_eq!(site_index(&l, &site_coords(&l, i)), i);
        }
        assert_eq!(offset_site(&[5], 0, &[-1]), 4);
        assert_eq!(offset_site(&[5, 3], 0, &[1, -1]), 1 + 5 * 2);
    }
}
