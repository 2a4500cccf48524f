//! Hypercubic periodic lattice: dispersion, per-momentum steady state,
//! real-space correlator profiles and the matrix Riccati / means dynamics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::single::steady_triple;
use crate::stochastic::{
    offset_site, site_coords, wiener_increment, MeasurementRecord, SeedSpec, SiteSeries, TimeGrid,
};

/// Onsite energy `j0`, hopping `j`, per-dimension lengths and rate `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub j0: f64,
    pub j: f64,
    pub lengths: Vec<usize>,
    pub gamma: f64,
}

impl LatticeParams {
    pub fn new(j0: f64, j: f64, lengths: Vec<usize>, gamma: f64) -> Result<Self> {
        if lengths.is_empty() || lengths.iter().any(|&l| l == 0) {
            return Err(invalid("lengths", "every lattice length must be at least 1"));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if !j0.is_finite() || !j.is_finite() {
            return Err(invalid("j0/j", "must be finite"));
        }
        Ok(Self {
            j0,
            j,
            lengths,
            gamma,
        })
    }

    /// Ring of `l` sites.
    pub fn chain(j0: f64, j: f64, l: usize, gamma: f64) -> Result<Self> {
        Self::new(j0, j, vec![l], gamma)
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn num_sites(&self) -> usize {
        self.lengths.iter().product()
    }

    /// Momentum vector of flat mode index `k` (same ordering as sites).
    pub fn momentum(&self, k: usize) -> Vec<f64> {
        site_coords(&self.lengths, k)
            .iter()
            .zip(&self.lengths)
            .map(|(&c, &l)| 2.0 * PI * c as f64 / l as f64)
            .collect()
    }

    pub fn momenta(&self) -> Vec<Vec<f64>> {
        (0..self.num_sites()).map(|k| self.momentum(k)).collect()
    }

    /// Mode energies `h_q` in flat mode order.
    pub fn mode_energies(&self) -> Vec<f64> {
        (0..self.num_sites())
            .map(|k| dispersion(&self.momentum(k), self))
            .collect()
    }

    /// `h_ij = J0 δ_ij − J Σ_μ (δ_{i,j+μ} + δ_{i,j−μ})` with periodic wrap.
    pub fn hopping_matrix(&self) -> DMatrix<f64> {
        let v = self.num_sites();
        let d = self.dim();
        let mut h = DMatrix::<f64>::zeros(v, v);
        for i in 0..v {
            h[(i, i)] += self.j0;
            for mu in 0..d {
                for s in [-1i64, 1] {
                    let mut disp = vec![0i64; d];
                    disp[mu] = s;
                    let jdx = offset_site(&self.lengths, i, &disp);
                    h[(i, jdx)] -= self.j;
                }
            }
        }
        h
    }
}

/// `h_q = J0 − 2J Σ_μ cos q_μ`.
pub fn dispersion(q: &[f64], params: &LatticeParams) -> f64 {
    params.j0 - 2.0 * params.j * q.iter().map(|x| x.cos()).sum::<f64>()
}

/// `ξ = √(J/(J0 − 2dJ))`, defined when the band bottom is gapped.
pub fn correlation_length(params: &LatticeParams) -> Result<f64> {
    let gap = params.j0 - 2.0 * params.dim() as f64 * params.j;
    if !(gap > 0.0) {
        return Err(Error::GaplessParameters(format!(
            "J0 − 2dJ = {gap} is not positive"
        )));
    }
    Ok((params.j / gap).sqrt())
}

/// Per-momentum steady covariances: `v_q = ⟨x_q x_{−q}⟩`, `w_q` (momentum
/// quadrature) and `u_q`, each the single-mode closed form at `h_q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyCovariances {
    pub lengths: Vec<usize>,
    pub momenta: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn steady_state_lattice(params: &LatticeParams) -> Result<SteadyCovariances> {
    let momenta = params.momenta();
    let h: Vec<f64> = momenta.iter().map(|q| dispersion(q, params)).collect();
    if let Some((k, hq)) = h.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::GaplessParameters(format!(
            "h_q = {hq} ≤ 0 at mode {k} (q = {:?})",
            momenta[k]
        )));
    }
    let mut v = Vec::with_capacity(h.len());
    let mut u = Vec::with_capacity(h.len());
    let mut w = Vec::with_capacity(h.len());
    for &hq in &h {
        let (a, b, c) = steady_triple(hq, params.gamma);
        v.push(a);
        w.push(b);
        u.push(c);
    }
    Ok(SteadyCovariances {
        lengths: params.lengths.clone(),
        momenta,
        h,
        v,
        u,
        w,
    })
}

/// Even inverse transform: `f(r) = (1/V) Σ_q f_q cos(q·r)` for every flat
/// displacement `r`, by direct momentum summation.
pub fn inverse_transform_even(lengths: &[usize], f_q: &[f64]) -> Vec<f64> {
    let v: usize = lengths.iter().product();
    let qs: Vec<Vec<f64>> = (0..v)
        .map(|k| {
            site_coords(lengths, k)
                .iter()
                .zip(lengths)
                .map(|(&c, &l)| 2.0 * PI * c as f64 / l as f64)
                .collect()
        })
        .collect();
    (0..v)
        .map(|r| {
            let rc = site_coords(lengths, r);
            let s: f64 = qs
                .iter()
                .zip(f_q)
                .map(|(q, &f)| {
                    let phase: f64 = q.iter().zip(&rc).map(|(a, &b)| a * b as f64).sum();
                    f * phase.cos()
                })
                .sum();
            s / v as f64
        })
        .collect()
}

/// Real-space steady correlators `C^X_r`, `C^P_r`, `U_r` for every flat
/// displacement `r` (1/V-normalized inverse transform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorProfile {
    pub lengths: Vec<usize>,
    pub c_x: Vec<f64>,
    pub c_p: Vec<f64>,
    pub u: Vec<f64>,
}

impl CorrelatorProfile {
    /// `(r, C^X_r, C^P_r)` for displacements `r = 0..=r_max` along `axis`.
    pub fn along_axis(&self, axis: usize, r_max: usize) -> Vec<(usize, f64, f64)> {
        (0..=r_max)
            .map(|r| {
                let mut d = vec![0i64; self.lengths.len()];
                d[axis] = r as i64;
                let idx = offset_site(&self.lengths, 0, &d);
                (r, self.c_x[idx], self.c_p[idx])
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W, r_max: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["r", "c_x", "c_p"])?;
        for (r, cx, cp) in self.along_axis(0, r_max) {
            wr.write_record(&[r.to_string(), format!("{cx:.12e}"), format!("{cp:.12e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn correlator_profile(params: &LatticeParams) -> Result<CorrelatorProfile> {
    let ss = steady_state_lattice(params)?;
    Ok(CorrelatorProfile {
        lengths: params.lengths.clone(),
        c_x: inverse_transform_even(&params.lengths, &ss.v),
        c_p: inverse_transform_even(&params.lengths, &ss.w),
        u: inverse_transform_even(&params.lengths, &ss.u),
    })
}

/// Gaussian lattice state: means `X`, `P` and covariance blocks with
/// `U_ij = ⟨{x_i, p_j}⟩/2 − X_i P_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatticeState {
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub cx: DMatrix<f64>,
    pub cp: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl GaussianLatticeState {
    pub fn vacuum(sites: usize) -> Self {
        Self {
            x: DVector::zeros(sites),
            p: DVector::zeros(sites),
            cx: DMatrix::identity(sites, sites) * 0.5,
            cp: DMatrix::identity(sites, sites) * 0.5,
            u: DMatrix::zeros(sites, sites),
        }
    }

    pub fn sites(&self) -> usize {
        self.x.len()
    }

    /// Full `2V × 2V` covariance `[[C^X, U], [Uᵀ, C^P]]`.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let v = self.sites();
        let mut s = DMatrix::zeros(2 * v, 2 * v);
        s.view_mut((0, 0), (v, v)).copy_from(&self.cx);
        s.view_mut((0, v), (v, v)).copy_from(&self.u);
        s.view_mut((v, 0), (v, v)).copy_from(&self.u.transpose());
        s.view_mut((v, v), (v, v)).copy_from(&self.cp);
        s
    }

    /// Smallest symplectic eigenvalue of the covariance matrix (`≥ 1/2` for
    /// physical states), from the spectrum of `(Σ^{1/2} Ω Σ^{1/2})ᵀ(…)`.
    pub fn smallest_symplectic_eigenvalue(&self) -> Result<f64> {
        let v = self.sites();
        let sigma = self.covariance_matrix();
        let eig = sigma.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite(min));
        }
        let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.sqrt()));
        let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
        let mut omega = DMatrix::zeros(2 * v, 2 * v);
        for i in 0..v {
            omega[(i, v + i)] = 1.0;
            omega[(v + i, i)] = -1.0;
        }
        let a = &root * omega * &root;
        let nu2 = (a.transpose() * &a).symmetric_eigen().eigenvalues;
        Ok(nu2.min().max(0.0).sqrt())
    }
}

/// Covariance right-hand side:
/// `Ċ^X = hUᵀ + Uh − 4Γ(C^X)²`, `Ċ^P = −hU − Uᵀh − 4ΓUᵀU + Γ`,
/// `U̇ = hC^P − C^X h − 4Γ C^X U`.
pub fn riccati_rhs_lattice(
    h: &DMatrix<f64>,
    cx: &DMatrix<f64>,
    cp: &DMatrix<f64>,
    u: &DMatrix<f64>,
    gamma: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let ut = u.transpose();
    let dcx = h * &ut + u * h - cx * cx * (4.0 * gamma);
    let n = cx.nrows();
    let dcp = -(h * u) - &ut * h - &ut * u * (4.0 * gamma) + DMatrix::identity(n, n) * gamma;
    let du = h * cp - cx * h - cx * u * (4.0 * gamma);
    (dcx, dcp, du)
}

/// One RK4 step of the matrix Riccati equations; means are untouched.
pub fn riccati_step_lattice(
    state: &GaussianLatticeState,
    h: &DMatrix<f64>,
    gamma: f64,
    dt: f64,
) -> Result<GaussianLatticeState> {
    let (cx, cp, u) = (&state.cx, &state.cp, &state.u);
    let (a1, b1, c1) = riccati_rhs_lattice(h, cx, cp, u, gamma);
    let half = dt / 2.0;
    let (a2, b2, c2) =
        riccati_rhs_lattice(h, &(cx + &a1 * half), &(cp + &b1 * half), &(u + &c1 * half), gamma);
    let (a3, b3, c3) =
        riccati_rhs_lattice(h, &(cx + &a2 * half), &(cp + &b2 * half), &(u + &c2 * half), gamma);
    let (a4, b4, c4) = riccati_rhs_lattice(h, &(cx + &a3 * dt), &(cp + &b3 * dt), &(u + &c3 * dt), gamma);
    let w = dt / 6.0;
    let ncx = cx + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * w;
    let ncp = cp + (b1 + b2 * 2.0 + b3 * 2.0 + b4) * w;
    let nu = u + (c1 + c2 * 2.0 + c3 * 2.0 + c4) * w;
    if ncx.clone().cholesky().is_none() || ncp.clone().cholesky().is_none() {
        return Err(Error::Instability(format!(
            "covariance blocks lost positive definiteness (dt = {dt} too large?)"
        )));
    }
    Ok(GaussianLatticeState {
        x: state.x.clone(),
        p: state.p.clone(),
        cx: ncx,
        cp: ncp,
        u: nu,
    })
}

/// Exact free evolution `(X,P) ↦ (cos(h dt) X + sin(h dt) P, cos(h dt) P − sin(h dt) X)`
/// for a symmetric hopping matrix `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeRotation {
    pub cos: DMatrix<f64>,
    pub sin: DMatrix<f64>,
}

impl FreeRotation {
    pub fn new(h: &DMatrix<f64>, dt: f64) -> Self {
        let eig = h.clone().symmetric_eigen();
        let q = &eig.eigenvectors;
        let f = |g: fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| g(l * dt)));
            q * d * q.transpose()
        };
        Self {
            cos: f(f64::cos),
            sin: f(f64::sin),
        }
    }
}

/// One step of the means driven by the record `d_i`. With
/// `dW = dI − 2√Γ X dt` the means obey `dX = hP dt + 2√Γ C^X dW`,
/// `dP = −hX dt + 2√Γ Uᵀ dW`; the noise kick is applied at the left point
/// and the free rotation exactly.
pub fn means_step_lattice(
    state: &GaussianLatticeState,
    rot: &FreeRotation,
    gamma: f64,
    d_i: &DVector<f64>,
    dt: f64,
) -> (DVector<f64>, DVector<f64>) {
    let sg = 2.0 * gamma.sqrt();
    let dw = d_i - &state.x * (sg * dt);
    let x = &state.x + &state.cx * &dw * sg;
    let p = &state.p + state.u.tr_mul(&dw) * sg;
    (&rot.cos * &x + &rot.sin * &p, &rot.cos * &p - &rot.sin * &x)
}

/// Means at every step plus covariance snapshots at requested steps.
#[derive(Debug, Clone)]
pub struct LatticeTrajectory {
    pub grid: TimeGrid,
    /// `mean_x[k][i]`, `k = 0..=n_steps`.
    pub mean_x: Vec<Vec<f64>>,
    pub mean_p: Vec<Vec<f64>>,
    /// `(step, state)` for every requested snapshot step.
    pub snapshots: Vec<(usize, GaussianLatticeState)>,
}

impl LatticeTrajectory {
    /// CSV with columns `step, site, mean_x, mean_p` for every `stride`-th step.
    pub fn write_csv<W: std::io::Write>(&self, w: W, stride: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "site", "mean_x", "mean_p"])?;
        for k in (0..self.mean_x.len()).step_by(stride.max(1)) {
            for (i, (x, p)) in self.mean_x[k].iter().zip(&self.mean_p[k]).enumerate() {
                wr.write_record(&[k.to_string(), i.to_string(), format!("{x:.12e}"), format!("{p:.12e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Real-space trajectory: per step, draws `dW_i` (step-major), forms
/// `dI_i = 2√Γ X_i dt + dW_i`, advances the means with the current
/// covariances and then the covariances by RK4.
pub fn simulate_trajectory_lattice(
    params: &LatticeParams,
    init: &GaussianLatticeState,
    grid: &TimeGrid,
    seed: &SeedSpec,
    snapshot_steps: &[usize],
) -> Result<(LatticeTrajectory, MeasurementRecord)> {
    let v = params.num_sites();
    if init.sites() != v {
        return Err(Error::ShapeMismatch(format!(
            "initial state has {} sites, lattice {v}",
            init.sites()
        )));
    }
    let h = params.hopping_matrix();
    let rot = FreeRotation::new(&h, grid.dt);
    let g = params.gamma;
    let sg = 2.0 * g.sqrt();
    let sqrt_dt = grid.dt.sqrt();
    let mut rng = seed.rng();
    let mut state = init.clone();
    let mut record = SiteSeries::zeros(v, grid.n_steps);
    let mut mean_x = vec![state.x.as_slice().to_vec()];
    let mut mean_p = vec![state.p.as_slice().to_vec()];
    let mut snapshots = Vec::new();
    if snapshot_steps.contains(&0) {
        snapshots.push((0, state.clone()));
    }
    let mut d_i = DVector::zeros(v);
    for k in 0..grid.n_steps {
        for i in 0..v {
            let dw = wiener_increment(&mut rng, sqrt_dt);
            d_i[i] = sg * state.x[i] * grid.dt + dw;
            record.set(i, k, d_i[i]);
        }
        let (x, p) = means_step_lattice(&state, &rot, g, &d_i, grid.dt);
        state = riccati_step_lattice(&state, &h, g, grid.dt)?;
        state.x = x;
        state.p = p;
        mean_x.push(state.x.as_slice().to_vec());
        mean_p.push(state.p.as_slice().to_vec());
        if snapshot_steps.contains(&(k + 1)) {
            snapshots.push((k + 1, state.clone()));
        }
    }
    let record = MeasurementRecord::new(params.lengths.clone(), *grid, record)?;
    Ok((
        LatticeTrajectory {
            grid: *grid,
            mean_x,
            mean_p,
            snapshots,
        },
        record,
    ))
}

/// Deterministic covariance history of the real-space matrix Riccati flow at
/// the requested steps (no means, no noise).
pub fn covariance_history_lattice(
    params: &LatticeParams,
    init: &GaussianLatticeState,
    grid: &TimeGrid,
    steps: &[usize],
) -> Result<Vec<(usize, GaussianLatticeState)>> {
    let h = params.hopping_matrix();
    let mut state = init.clone();
    let mut out = Vec::new();
    if steps.contains(&0) {
        out.push((0, state.clone()));
    }
    for k in 0..grid.n_steps {
        state = riccati_step_lattice(&state, &h, params.gamma, grid.dt)?;
        if steps.contains(&(k + 1)) {
            out.push((k + 1, state.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispersion_examples() {
        let p = LatticeParams::chain(3.0, 1.0, 8, 1.0).unwrap();
        assert!((dispersion(&[0.0], &p) - 1.0).abs() < 1e-15);
        assert!((dispersion(&[PI], &p) - 5.0).abs() < 1e-15);
        let p0 = LatticeParams::chain(2.5, 0.0, 8, 1.0).unwrap();
        assert!(p0.mode_energies().iter().all(|&h| h == 2.5));
    }

    #[test]
    fn hopping_matrix_diagonalized_by_plane_waves() {
        for lengths in [vec![1], vec![2], vec![5], vec![3, 4]] {
            let p = LatticeParams::new(3.0, 0.7, lengths, 1.0).unwrap();
            let h = p.hopping_matrix();
            let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
            let mut hq = p.mode_energies();
            ev.sort_by(f64::total_cmp);
            hq.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(&hq) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn correlation_length_convention() {
        let p = LatticeParams::chain(2.0025, 1.0, 8, 1.0).unwrap();
        assert!((correlation_length(&p).unwrap() - 20.0).abs() < 1e-9);
        let p = LatticeParams::chain(2.0005, 1.0, 8, 1.0).unwrap();
        assert!((correlation_length(&p).unwrap() - 44.721_359_5).abs() < 1e-6);
        let p = LatticeParams::chain(2.0, 1.0, 8, 1.0).unwrap();
        assert!(matches!(correlation_length(&p), Err(Error::GaplessParameters(_))));
    }

    #[test]
    fn gapless_steady_state_rejected() {
        let p = LatticeParams::chain(1.5, 1.0, 8, 1.0).unwrap();
        assert!(matches!(steady_state_lattice(&p), Err(Error::GaplessParameters(_))));
    }

    #[test]
    fn vacuum_is_minimum_uncertainty() {
        let s = GaussianLatticeState::vacuum(4);
        assert!((s.smallest_symplectic_eigenvalue().unwrap() - 0.5).abs() < 1e-12);
    }
}
