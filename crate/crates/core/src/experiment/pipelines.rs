//! End-to-end protocols driven by an [`ExperimentConfig`]: simulate →
//! measure → estimate → bin → recover, with every table carrying an
//! independent reference column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, KernelSource, ModelKind};
use crate::experiment::output::{fmt, PipelineReport, RunOutput};
use crate::filter::{
    analytic_filter_shape, analytic_filter_single_default, analytic_kernels_lattice_with, appendix_c_tables,
    continuum_kernel_kp, cost_surrogate, design_filter_ode, design_filter_wiener_hopf, lattice_kernel_direct,
    signed_offset, CorrelatorAccumulator, CorrelatorTables, Detrend, DesignedFilter, FilterKernel, Quadrature,
    DEFAULT_RIDGE,
};
use crate::fock::{gaussian_fixed_point, husimi, linspace, simulate_fock_trajectory_adaptive, FockOperators, FockState};
use crate::gaussian::{
    correlation_length, correlator_profile, simulate_trajectory_lattice_fft, simulate_with_schedule,
    steady_state_lattice, steady_state_single, unconditional_profile, unconditional_second_moments,
    CovarianceSchedule, GaussianState1, LatticeParams, ModeSchedules, SingleSiteParams,
};
use crate::postselect::{
    bin2d_and_recover_covariance_with, bin_and_recover_variance_with, fock_outcomes, lattice_outcomes,
    moment_ratios, sample_measurement_fock, sample_measurement_single, single_site_outcomes, site_columns,
    write_outcomes_csv, BinningOptions, LatticeOutcomeSampler, TrajectoryOutcome,
};
use crate::stochastic::{site_coords, site_index, MeasurementRecord, SeedSpec, TimeGrid};

/// Salt of the measurement draw used by the filter-design datasets.
const DESIGN_SALT: u64 = 0x6465_7369;

/// Block width of empirical correlator tables.
pub const DESIGN_BLOCK: f64 = 0.05;

/// Number of time samples in trajectory and ensemble tables.
const TIME_SAMPLES: usize = 200;

/// Trajectories kept back for the cost comparison of designed filters.
const COST_SAMPLES: usize = 200;

/// Seeds processed by one worker before its partial sums are merged.
const CHUNK: usize = 64;

/// The protocols reachable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Simulate,
    SteadyState,
    FilterAnalytic,
    FilterDesign,
    Postselect,
    Husimi,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Simulate => "simulate",
            Pipeline::SteadyState => "steady-state",
            Pipeline::FilterAnalytic => "filter-analytic",
            Pipeline::FilterDesign => "filter-design",
            Pipeline::Postselect => "postselect",
            Pipeline::Husimi => "husimi",
        }
    }
}

/// Validates `cfg` and runs `pipeline`, writing into `cfg.output.path`.
pub fn run_pipeline(cfg: &ExperimentConfig, pipeline: Pipeline) -> Result<PipelineReport> {
    cfg.validate()?;
    let mut out = RunOutput::create(&cfg.output.path)?;
    let summary = match pipeline {
        Pipeline::Simulate => simulate(cfg, &mut out)?,
        Pipeline::SteadyState => steady_state(cfg, &mut out)?,
        Pipeline::FilterAnalytic => filter_analytic(cfg, &mut out)?,
        Pipeline::FilterDesign => filter_design(cfg, &mut out)?,
        Pipeline::Postselect => postselect(cfg, &mut out)?,
        Pipeline::Husimi => husimi_pipeline(cfg, &mut out)?,
    };
    out.finish(pipeline.name(), cfg, summary)
}

/// Sample steps `0, s, 2s, …, n` with about [`TIME_SAMPLES`] entries.
pub(crate) fn sample_steps(n_steps: usize) -> Vec<usize> {
    let stride = (n_steps / TIME_SAMPLES).max(1);
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *steps.last().unwrap() != n_steps {
        steps.push(n_steps);
    }
    steps
}

/// Mean and standard error of each column of `rows`.
pub(crate) fn column_stats(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = rows.len() as f64;
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    (0..width)
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = if rows.len() > 1 {
                rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, (var / n).sqrt())
        })
        .collect()
}

fn gaussian_init(cfg: &ExperimentConfig) -> Result<GaussianState1> {
    cfg.model.init.gaussian_state().ok_or_else(|| Error::Config {
        line: 0,
        field: "model.init".into(),
        message: "the Gaussian engine needs vacuum or coherent:RE,IM".into(),
    })
}

/// Initial `[⟨x²⟩, ⟨p²⟩, ⟨{x,p}⟩/2]` of a single-mode run.
fn initial_moments(cfg: &ExperimentConfig) -> Result<[f64; 3]> {
    match cfg.model.kind {
        ModelKind::SingleSite => {
            let s = gaussian_init(cfg)?;
            Ok([
                s.v_x + s.mean_x * s.mean_x,
                s.v_p + s.mean_p * s.mean_p,
                s.u + s.mean_x * s.mean_p,
            ])
        }
        _ => cfg.model.init.second_moments(&cfg.fock_operators()?),
    }
}

fn steady_or_nan(params: &SingleSiteParams) -> [f64; 3] {
    match steady_state_single(params) {
        Ok(ss) => [ss.v_x, ss.v_p, ss.u],
        Err(_) => [f64::NAN; 3],
    }
}

// ---------------------------------------------------------------- simulate

fn simulate(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    match cfg.model.kind {
        ModelKind::Lattice => simulate_lattice(cfg, out),
        _ => simulate_single(cfg, out),
    }
}

fn simulate_single(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let params = cfg.single_site_params()?;
    let grid = cfg.time_grid()?;
    let seeds = cfg.seeds()?;
    let steps = sample_steps(grid.n_steps);
    let steady = steady_or_nan(&params);
    // Per trajectory: `[mean_x, mean_p, v_x, v_p, u]` at every sample step.
    let traj: Vec<(Vec<[f64; 5]>, Option<MeasurementRecord>)> = match cfg.model.kind {
        ModelKind::SingleSite => {
            let init = gaussian_init(cfg)?;
            let schedule = CovarianceSchedule::new(&params, init.covariances(), &grid)?;
            seeds
                .par_iter()
                .map(|seed| {
                    let (t, rec) = simulate_with_schedule(&params, &init, &schedule, &grid, seed)?;
                    let rows = steps
                        .iter()
                        .map(|&k| {
                            let s = &t.states[k];
                            [s.mean_x, s.mean_p, s.v_x, s.v_p, s.u]
                        })
                        .collect();
                    Ok((rows, (seed.trajectory_index == 0).then_some(rec)))
                })
                .collect::<Result<_>>()?
        }
        _ => {
            let ops = cfg.fock_operators()?;
            let psi0 = cfg.model.init.fock_state(&ops)?;
            let stride = steps.get(1).copied().unwrap_or(1);
            seeds
                .par_iter()
                .map(|seed| {
                    let t = simulate_fock_trajectory_adaptive(&params, &psi0, &ops, &grid, seed, stride)?;
                    let rows = t
                        .moments
                        .iter()
                        .map(|(_, m)| [m.mean_x, m.mean_p, m.v_x, m.v_p, m.u])
                        .collect();
                    Ok((rows, (seed.trajectory_index == 0).then_some(t.record)))
                })
                .collect::<Result<_>>()?
        }
    };
    let first = &traj[0].0;
    out.table(
        "trajectory.csv",
        &["t", "mean_x", "mean_p", "v_x", "v_p", "u", "steady_v_x", "steady_v_p", "steady_u"],
        steps.iter().zip(first).map(|(&k, r)| {
            vec![grid.time(k), r[0], r[1], r[2], r[3], r[4], steady[0], steady[1], steady[2]]
        }),
    )?;
    if let Some(rec) = &traj[0].1 {
        rec.write_csv(out.file("record.csv")?)?;
    }
    let m0 = initial_moments(cfg)?;
    let mut rows = Vec::with_capacity(steps.len());
    for (i, &k) in steps.iter().enumerate() {
        let per: Vec<Vec<f64>> = traj
            .iter()
            .map(|(r, _)| {
                let s = r[i];
                vec![s[0] * s[0] + s[2], s[1] * s[1] + s[3], s[0] * s[0], s[1] * s[1]]
            })
            .collect();
        let st = column_stats(&per);
        let t = grid.time(k);
        let unc = unconditional_second_moments(t, &params, m0);
        rows.push(vec![
            t, st[0].0, st[0].1, unc[0], st[1].0, st[1].1, unc[1], st[2].0, st[3].0,
        ]);
    }
    let last = rows.last().cloned().unwrap_or_default();
    out.table(
        "ensemble.csv",
        &[
            "t",
            "x2",
            "x2_stderr",
            "unconditional_x2",
            "p2",
            "p2_stderr",
            "unconditional_p2",
            "mean_x_sq",
            "mean_p_sq",
        ],
        rows,
    )?;
    Ok(json!({
        "model": cfg.model.kind.as_str(),
        "n_traj": seeds.len(),
        "t_final": grid.t_end(),
        "final_x2": last.get(1), "final_x2_stderr": last.get(2), "unconditional_x2": last.get(3),
        "final_p2": last.get(4), "final_p2_stderr": last.get(5), "unconditional_p2": last.get(6),
        "steady": {"v_x": steady[0], "v_p": steady[1], "u": steady[2]},
    }))
}

fn simulate_lattice(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let params = cfg.lattice_params()?;
    let grid = cfg.time_grid()?;
    let seeds = cfg.seeds()?;
    let steps = sample_steps(grid.n_steps);
    let schedules = ModeSchedules::vacuum(&params, &grid)?;
    let v = params.num_sites();
    let sites = &cfg.protocol.sites;
    // Per trajectory and sample step: site-averaged `X_i²`, `P_i²`, and the
    // means at the protocol sites.
    let traj: Vec<(Vec<[f64; 2]>, Vec<Vec<(f64, f64)>>)> = seeds
        .par_iter()
        .map(|seed| {
            let (t, _) = simulate_trajectory_lattice_fft(&params, &schedules, &grid, seed, &[])?;
            let sq = steps
                .iter()
                .map(|&k| {
                    let x2 = t.mean_x[k].iter().map(|x| x * x).sum::<f64>() / v as f64;
                    let p2 = t.mean_p[k].iter().map(|p| p * p).sum::<f64>() / v as f64;
                    [x2, p2]
                })
                .collect();
            let keep = if seed.trajectory_index == 0 {
                steps
                    .iter()
                    .map(|&k| sites.iter().map(|&s| (t.mean_x[k][s], t.mean_p[k][s])).collect())
                    .collect()
            } else {
                Vec::new()
            };
            Ok((sq, keep))
        })
        .collect::<Result<_>>()?;
    let mut means = Vec::new();
    for (i, &k) in steps.iter().enumerate() {
        for (j, &s) in sites.iter().enumerate() {
            let (x, p) = traj[0].1[i][j];
            means.push(vec![grid.time(k), s as f64, x, p]);
        }
    }
    out.table("trajectory.csv", &["t", "site", "mean_x", "mean_p"], means)?;
    let mut rows = Vec::new();
    for (i, &k) in steps.iter().enumerate() {
        let per: Vec<Vec<f64>> = traj.iter().map(|(sq, _)| vec![sq[i][0], sq[i][1]]).collect();
        let st = column_stats(&per);
        let cx: f64 = (0..v).map(|q| schedules.at(q, k)[0]).sum::<f64>() / v as f64;
        let cp: f64 = (0..v).map(|q| schedules.at(q, k)[1]).sum::<f64>() / v as f64;
        let t = grid.time(k);
        let (ux, up) = unconditional_profile(&params, t);
        rows.push(vec![
            t,
            st[0].0 + cx,
            st[0].1,
            ux[0],
            st[1].0 + cp,
            st[1].1,
            up[0],
            cx,
            cp,
        ]);
    }
    let last = rows.last().cloned().unwrap_or_default();
    out.table(
        "ensemble.csv",
        &[
            "t",
            "x2",
            "x2_stderr",
            "unconditional_x2",
            "p2",
            "p2_stderr",
            "unconditional_p2",
            "conditional_c_x_00",
            "conditional_c_p_00",
        ],
        rows,
    )?;
    Ok(json!({
        "model": "lattice",
        "lengths": params.lengths,
        "n_traj": seeds.len(),
        "final_x2": last.get(1), "final_x2_stderr": last.get(2), "unconditional_x2": last.get(3),
        "final_p2": last.get(4), "final_p2_stderr": last.get(5), "unconditional_p2": last.get(6),
    }))
}

// ------------------------------------------------------------ steady state

fn steady_state(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    match cfg.model.kind {
        ModelKind::Lattice => steady_state_lattice_tables(cfg, out),
        _ => steady_state_single_tables(cfg, out),
    }
}

/// Covariances integrated from the vacuum for `t` with step `dt`.
fn riccati_from_vacuum(params: &SingleSiteParams, dt: f64, t: f64) -> Result<[f64; 3]> {
    let grid = TimeGrid::from_duration(dt, t)?;
    Ok(CovarianceSchedule::new(params, [0.5, 0.5, 0.0], &grid)?.last())
}

fn steady_state_single_tables(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let params = cfg.single_site_params()?;
    let ss = steady_state_single(&params)?;
    let shape = analytic_filter_shape(&params)?;
    let t_int = 20.0 * ss.tau;
    let num = riccati_from_vacuum(&params, cfg.grid.dt.min(1e-3), t_int)?;
    let rows = vec![
        ("v_x", ss.v_x, num[0]),
        ("v_p", ss.v_p, num[1]),
        ("u", ss.u, num[2]),
        ("purity_product", ss.v_x * ss.v_p - ss.u * ss.u, num[0] * num[1] - num[2] * num[2]),
        ("memory_time", ss.tau, 1.0 / (2.0 * params.gamma * num[0])),
        ("filter_decay_rate", shape.decay_rate, 2.0 * params.gamma * num[0]),
        ("filter_frequency", shape.frequency, params.h0 / (2.0 * num[0])),
    ];
    out.text_table(
        "steady.csv",
        &["quantity", "closed_form", "riccati_integrated"],
        rows.iter().map(|(n, a, b)| vec![n.to_string(), fmt(*a), fmt(*b)]),
    )?;
    let mut summary = json!({
        "h0": params.h0, "gamma": params.gamma,
        "v_x": ss.v_x, "v_p": ss.v_p, "u": ss.u, "tau": ss.tau,
        "decay_rate": shape.decay_rate, "frequency": shape.frequency,
        "riccati_t": t_int, "riccati": num,
    });
    if cfg.model.kind == ModelKind::Fock {
        let fp = gaussian_fixed_point(&params, cfg.model.n_dim)?;
        let ops = cfg.fock_operators()?;
        let m = fp.moments(&ops);
        fp.write_csv(out.file("fixed_point.csv")?)?;
        summary["fixed_point"] = json!({"v_x": m.v_x, "v_p": m.v_p, "u": m.u, "top_population": fp.top_population()});
    }
    Ok(summary)
}

fn steady_state_lattice_tables(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let params = cfg.lattice_params()?;
    let ss = steady_state_lattice(&params)?;
    let grid = cfg.time_grid()?;
    let schedules = ModeSchedules::vacuum(&params, &grid)?;
    let n = grid.n_steps;
    let mut worst = 0.0f64;
    let rows: Vec<Vec<f64>> = (0..ss.h.len())
        .map(|q| {
            let purity = ss.v[q] * ss.w[q] - ss.u[q] * ss.u[q] - 0.25;
            worst = worst.max(purity.abs());
            let c = schedules.at(q, n);
            let mut row = ss.momenta[q].clone();
            row.extend([ss.h[q], ss.v[q], ss.w[q], ss.u[q], purity, c[0], c[1], c[2]]);
            row
        })
        .collect();
    let mut header: Vec<String> = (0..params.dim()).map(|a| format!("q{a}")).collect();
    for h in ["h_q", "v_q", "w_q", "u_q", "purity_residual", "riccati_v_q", "riccati_w_q", "riccati_u_q"] {
        header.push(h.to_string());
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.table("modes.csv", &header, rows)?;
    let profile = correlator_profile(&params)?;
    let r_max = params.lengths[0] / 2;
    let c_num = |idx: usize, r: usize| -> f64 {
        let mut d = vec![0usize; params.dim()];
        d[0] = r;
        let _ = site_index(&params.lengths, &d);
        (0..ss.h.len())
            .map(|q| schedules.at(q, n)[idx] * (ss.momenta[q][0] * r as f64).cos())
            .sum::<f64>()
            / params.num_sites() as f64
    };
    out.table(
        "profile.csv",
        &["r", "c_x", "c_p", "riccati_c_x", "riccati_c_p"],
        profile
            .along_axis(0, r_max)
            .into_iter()
            .map(|(r, cx, cp)| vec![r as f64, cx, cp, c_num(0, r), c_num(1, r)]),
    )?;
    Ok(json!({
        "j0": params.j0, "j": params.j, "lengths": params.lengths, "gamma": params.gamma,
        "correlation_length": correlation_length(&params).ok(),
        "max_purity_residual": worst,
        "riccati_t": grid.t_end(),
        "c_x_0": profile.c_x[0], "c_p_0": profile.c_p[0],
    }))
}

// ---------------------------------------------------------- filter analytic

fn filter_analytic(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    if cfg.model.kind == ModelKind::Lattice {
        return filter_analytic_lattice(cfg, out);
    }
    let params = cfg.single_site_params()?;
    let dt = cfg.grid.dt;
    let ss = steady_state_single(&params)?;
    let k = analytic_filter_single_default(&params, dt)?;
    let (coef, ode) = design_filter_ode(&params, dt, 20.0 * ss.tau)?;
    let times = k.lag_times();
    let n = k.n_lags();
    let stride = (n / 2000).max(1);
    out.table(
        "kernel.csv",
        &["T", "f_analytic", "f_ode"],
        (0..n).step_by(stride).map(|m| {
            let ode_v = if m < ode.n_lags() { ode.gain * ode.value(0, m) } else { 0.0 };
            vec![times[m], k.gain * k.value(0, m), ode_v]
        }),
    )?;
    out.json("kernel_metadata.json", &k.metadata())?;
    let shape = analytic_filter_shape(&params)?;
    Ok(json!({
        "decay_rate": shape.decay_rate, "frequency": shape.frequency,
        "ode_coefficients": coef, "n_lags": n, "tau": ss.tau,
    }))
}

fn filter_analytic_lattice(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let params = cfg.lattice_params()?;
    let conv = cfg.protocol.kp_convention;
    let (kx, kp) = analytic_kernels_lattice_with(&params, cfg.grid.dt, cfg.grid.t_final, conv)?;
    let v = params.num_sites();
    let r_max = (params.lengths[0] / 2).min(20) as i64;
    let n = kp.n_lags();
    let stride = (n / 100).max(1);
    let times = kp.lag_times();
    let mut rows = Vec::new();
    for idx in 0..v {
        let off = signed_offset(&params.lengths, idx);
        if off.iter().skip(1).any(|&c| c != 0) || off[0].abs() > r_max {
            continue;
        }
        let r = off[0];
        let (Some(rx), Some(rp)) = (kx.row_for(&off), kp.row_for(&off)) else {
            continue;
        };
        for m in (0..n).step_by(stride) {
            let t = times[m];
            let direct = if params.dim() == 1 {
                lattice_kernel_direct(&params, r, t, Quadrature::P, conv)?
            } else {
                f64::NAN
            };
            let cont = if params.dim() == 1 { continuum_kernel_kp(r as f64, t, &params) } else { f64::NAN };
            let kx_v = rx.get(m).copied().unwrap_or(0.0);
            let kp_v = rp.get(m).copied().unwrap_or(0.0);
            rows.push(vec![r as f64, t, kx_v, kp_v, direct, cont]);
        }
    }
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    out.table("kernel_slices.csv", &["r", "T", "k_x", "k_p", "k_p_direct", "k_p_continuum"], rows)?;
    kp.write_csv(out.file("kernel_p.csv")?)?;
    kx.write_csv(out.file("kernel_x.csv")?)?;
    out.json("kernel_p_metadata.json", &kp.metadata())?;
    out.json("kernel_x_metadata.json", &kx.metadata())?;
    Ok(json!({
        "kp_convention": conv,
        "correlation_length": correlation_length(&params).ok(),
        "n_lags": n, "n_offsets": kp.offsets().len(),
    }))
}

// ------------------------------------------------------------ filter design

/// One single-site trajectory reduced to its record and a final `x` draw.
fn design_sample(
    cfg: &ExperimentConfig,
    params: &SingleSiteParams,
    grid: &TimeGrid,
    seed: &SeedSpec,
    schedule: Option<&CovarianceSchedule>,
    fock: Option<(&FockState, &FockOperators)>,
) -> Result<(MeasurementRecord, f64)> {
    let mut rng = seed.derive(DESIGN_SALT).rng();
    match (cfg.model.kind, schedule, fock) {
        (ModelKind::Fock, _, Some((psi0, ops))) => {
            let t = simulate_fock_trajectory_adaptive(params, psi0, ops, grid, seed, usize::MAX)?;
            let m = sample_measurement_fock(&t.final_state, Quadrature::X, &mut rng)?;
            Ok((t.record, m))
        }
        (_, Some(schedule), _) => {
            let init = gaussian_init(cfg)?;
            let (t, rec) = simulate_with_schedule(params, &init, schedule, grid, seed)?;
            Ok((rec, sample_measurement_single(t.final_state(), Quadrature::X, &mut rng)))
        }
        _ => Err(Error::UnsupportedParameter("design datasets need a single-mode model".into())),
    }
}

struct DesignContext {
    schedule: Option<CovarianceSchedule>,
    fock: Option<(FockState, FockOperators)>,
}

impl DesignContext {
    fn new(cfg: &ExperimentConfig, params: &SingleSiteParams, grid: &TimeGrid) -> Result<Self> {
        Ok(match cfg.model.kind {
            ModelKind::Fock => {
                let ops = cfg.fock_operators()?;
                let psi0 = cfg.model.init.fock_state(&ops)?;
                Self {
                    schedule: None,
                    fock: Some((psi0, ops)),
                }
            }
            _ => Self {
                schedule: Some(CovarianceSchedule::new(params, gaussian_init(cfg)?.covariances(), grid)?),
                fock: None,
            },
        })
    }

    fn sample(
        &self,
        cfg: &ExperimentConfig,
        params: &SingleSiteParams,
        grid: &TimeGrid,
        seed: &SeedSpec,
    ) -> Result<(MeasurementRecord, f64)> {
        let fock = self.fock.as_ref().map(|(s, o)| (s, o));
        design_sample(cfg, params, grid, seed, self.schedule.as_ref(), fock)
    }
}

/// Correlator tables at the end of the grid estimated over `seeds`, in
/// blocks of [`DESIGN_BLOCK`] covering the whole record.
pub fn empirical_tables(cfg: &ExperimentConfig, seeds: &[SeedSpec]) -> Result<CorrelatorTables> {
    let params = cfg.single_site_params()?;
    let grid = cfg.time_grid()?;
    let ctx = DesignContext::new(cfg, &params, &grid)?;
    let block_steps = ((DESIGN_BLOCK / grid.dt).round() as usize).max(1);
    let n_blocks = grid.n_steps / block_steps;
    let partials: Vec<CorrelatorAccumulator> = seeds
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = CorrelatorAccumulator::new(grid.dt, block_steps, n_blocks, grid.n_steps)?;
            for seed in chunk {
                let (rec, m) = ctx.sample(cfg, &params, &grid, seed)?;
                acc.push(rec.site(0), m)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut it = partials.into_iter();
    let mut acc = it.next().ok_or(Error::EmptyDataset)?;
    for p in it {
        acc.merge(&p)?;
    }
    acc.finish(grid.t_end(), Detrend::LinearOscillating { h0: params.h0 }, Some(params))
}

/// Wiener–Hopf filter from closed-form tables.
pub fn designed_from_closed_form(params: &SingleSiteParams) -> Result<DesignedFilter> {
    design_filter_wiener_hopf(&appendix_c_tables(params, 0.02, 1001)?, DEFAULT_RIDGE)
}

fn filter_design(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    if cfg.model.kind == ModelKind::Lattice {
        return Err(Error::UnsupportedParameter(
            "filter design is implemented for single-mode models".into(),
        ));
    }
    let params = cfg.single_site_params()?;
    let grid = cfg.time_grid()?;
    let seeds = cfg.seeds()?;
    let empirical = cfg.protocol.kernel == KernelSource::Empirical;
    let (tables, designed) = if empirical {
        let t = empirical_tables(cfg, &seeds)?;
        let d = design_filter_wiener_hopf(&t, DEFAULT_RIDGE)?;
        (t, d)
    } else {
        let t = appendix_c_tables(&params, 0.02, 1001)?;
        let d = design_filter_wiener_hopf(&t, DEFAULT_RIDGE)?;
        (t, d)
    };
    tables.write_csv(out.file("tables.csv")?)?;
    let shape = analytic_filter_shape(&params)?;
    let ss = steady_state_single(&params)?;
    let s_max = 8.0f64.min(0.8 * designed.nodes.last().copied().unwrap_or(8.0));
    let fit = designed.fit_shape(Some(s_max))?;
    let analytic_f = |s: f64| {
        2.0 * params.gamma.sqrt() * ss.v_x * (-shape.decay_rate * s).exp() * (shape.frequency * s).cos()
    };
    out.table(
        "filter.csv",
        &["s", "f_designed", "f_analytic"],
        designed.nodes.iter().zip(&designed.values).map(|(&s, &f)| vec![s, f, analytic_f(s)]),
    )?;
    // Cost comparison on a fresh subset of trajectories.
    let designed_kernel = designed.to_kernel(grid.dt, Quadrature::X)?;
    let analytic_kernel = analytic_filter_single_default(&params, grid.dt)?;
    let ctx = DesignContext::new(cfg, &params, &grid)?;
    let n_cost = seeds.len().min(COST_SAMPLES);
    let cost_seeds: Vec<SeedSpec> = seeds[..n_cost].iter().map(|s| s.derive(0x636f_7374)).collect();
    let dataset: Vec<(MeasurementRecord, f64)> = cost_seeds
        .par_iter()
        .map(|s| ctx.sample(cfg, &params, &grid, s))
        .collect::<Result<_>>()?;
    let t_obs = grid.t_end();
    let cost_d = cost_surrogate(&designed_kernel, dataset.iter().map(|(r, m)| (r, *m)), 0, t_obs)?;
    let cost_a = cost_surrogate(&analytic_kernel, dataset.iter().map(|(r, m)| (r, *m)), 0, t_obs)?;
    Ok(json!({
        "source": if empirical { "empirical" } else { "closed-form tables" },
        "n_samples": tables.n_samples,
        "fit": fit,
        "fit_window": s_max,
        "analytic": {"decay_rate": shape.decay_rate, "frequency": shape.frequency},
        "decay_rate_rel_error": (fit.decay_rate - shape.decay_rate).abs() / shape.decay_rate,
        "frequency_rel_error": (fit.frequency - shape.frequency).abs() / shape.frequency,
        "constraint_residuals": designed.constraint_residuals,
        "cost_designed": cost_d,
        "cost_analytic": cost_a,
        "conditional_variance_reference": ss.v_x,
    }))
}

// -------------------------------------------------------------- postselect

/// Estimator kernel for a single-mode run, chosen by `protocol.kernel`.
pub fn single_site_kernel(cfg: &ExperimentConfig, params: &SingleSiteParams, dt: f64) -> Result<FilterKernel> {
    match cfg.protocol.kernel {
        KernelSource::Analytic => analytic_filter_single_default(params, dt),
        KernelSource::Ode => {
            let ss = steady_state_single(params)?;
            Ok(design_filter_ode(params, dt, 20.0 * ss.tau)?.1)
        }
        KernelSource::WienerHopf => designed_from_closed_form(params)?.to_kernel(dt, Quadrature::X),
        KernelSource::Empirical => {
            let seeds: Vec<SeedSpec> = cfg.seeds()?.iter().map(|s| s.derive(0x7461_626c)).collect();
            design_filter_wiener_hopf(&empirical_tables(cfg, &seeds)?, DEFAULT_RIDGE)?.to_kernel(dt, Quadrature::X)
        }
    }
}

/// Outcomes of a single-mode run with its configured kernel.
pub fn single_mode_outcomes(cfg: &ExperimentConfig) -> Result<(FilterKernel, Vec<TrajectoryOutcome>)> {
    let params = cfg.single_site_params()?;
    let grid = cfg.time_grid()?;
    let seeds = cfg.seeds()?;
    let kernel = single_site_kernel(cfg, &params, grid.dt)?;
    let outcomes = match cfg.model.kind {
        ModelKind::Fock => {
            let ops = cfg.fock_operators()?;
            let psi0 = cfg.model.init.fock_state(&ops)?;
            fock_outcomes(&params, &psi0, &ops, &grid, &kernel, Quadrature::X, &seeds)?
        }
        _ => single_site_outcomes(&params, &gaussian_init(cfg)?, &grid, &kernel, Quadrature::X, &seeds)?,
    };
    Ok((kernel, outcomes))
}

fn opts(cfg: &ExperimentConfig) -> BinningOptions {
    BinningOptions {
        min_count: cfg.protocol.min_count,
        ..BinningOptions::default()
    }
}

/// Histogram of `x` over `n` equal bins spanning its range.
pub(crate) fn histogram(x: &[f64], n: usize) -> Vec<Vec<f64>> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = ((hi - lo) / n as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; n];
    for &v in x {
        counts[(((v - lo) / w).floor() as usize).min(n - 1)] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| vec![lo + (i as f64 + 0.5) * w, c as f64, c as f64 / (x.len() as f64 * w)])
        .collect()
}

fn postselect(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    if cfg.model.kind == ModelKind::Lattice {
        return postselect_lattice(cfg, out);
    }
    let params = cfg.single_site_params()?;
    let grid = cfg.time_grid()?;
    let (kernel, outcomes) = single_mode_outcomes(cfg)?;
    write_outcomes_csv(&outcomes, out.file("outcomes.csv")?)?;
    out.json("kernel_metadata.json", &kernel.metadata())?;
    let conditional = steady_or_nan(&params)[0];
    let unconditional = unconditional_second_moments(grid.t_end(), &params, initial_moments(cfg)?)[0];
    let (est, meas) = site_columns(&outcomes, 0)?;
    let o = opts(cfg);
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in &cfg.protocol.n_bins {
        let rec = bin_and_recover_variance_with(&outcomes, 0, n, &o)?;
        rec.write_csv(out.file(&format!("bins_{n}.csv"))?)?;
        rows.push(vec![
            n as f64,
            rec.value,
            rec.stderr,
            rec.n_used as f64,
            rec.excluded_fraction,
            conditional,
            unconditional,
        ]);
        points.push(json!({"n_bins": n, "recovered": rec.value, "stderr": rec.stderr}));
    }
    out.table(
        "recovery.csv",
        &[
            "n_bins",
            "recovered",
            "stderr",
            "n_used",
            "excluded_fraction",
            "conditional_reference",
            "unconditional_reference",
        ],
        rows,
    )?;
    out.table("estimator_histogram.csv", &["center", "count", "density"], histogram(&est, 40))?;
    let [m, var, skew, kurt] = moment_ratios(&est);
    Ok(json!({
        "model": cfg.model.kind.as_str(),
        "n_traj": outcomes.len(),
        "kernel": cfg.protocol.kernel.as_str(),
        "points": points,
        "conditional_reference": conditional,
        "unconditional_reference": unconditional,
        "measured_variance": moment_ratios(&meas)[1],
        "estimator_moments": {"mean": m, "variance": var, "skewness": skew, "excess_kurtosis": kurt},
    }))
}

/// Flat displacement index from site `a` to site `b`.
pub(crate) fn displacement(lengths: &[usize], a: usize, b: usize) -> usize {
    let ca = site_coords(lengths, a);
    let cb = site_coords(lengths, b);
    let d: Vec<usize> = ca.iter().zip(&cb).zip(lengths).map(|((&x, &y), &l)| (y + l - x) % l).collect();
    site_index(lengths, &d)
}

/// Lattice outcomes at `sites` from the fast sampler.
pub fn lattice_run(
    params: &LatticeParams,
    grid: &TimeGrid,
    quadrature: Quadrature,
    cfg: &ExperimentConfig,
    sites: &[usize],
) -> Result<Vec<TrajectoryOutcome>> {
    let sampler = LatticeOutcomeSampler::new(params, grid, quadrature, cfg.protocol.kp_convention)?;
    lattice_outcomes(&sampler, sites, &cfg.seeds()?)
}

fn postselect_lattice(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    let params = cfg.lattice_params()?;
    let grid = cfg.time_grid()?;
    let q = cfg.protocol.quadrature;
    let mut sites: Vec<usize> = cfg.protocol.sites.clone();
    for &(a, b) in &cfg.protocol.pairs {
        sites.push(a);
        sites.push(b);
    }
    sites.sort_unstable();
    sites.dedup();
    let col = |s: usize| sites.iter().position(|&x| x == s).expect("site listed");
    let outcomes = lattice_run(&params, &grid, q, cfg, &sites)?;
    write_outcomes_csv(&outcomes, out.file("outcomes.csv")?)?;
    let profile = correlator_profile(&params)?;
    let (ux, up) = unconditional_profile(&params, grid.t_end());
    let (cond, unc) = match q {
        Quadrature::X => (&profile.c_x, &ux),
        Quadrature::P => (&profile.c_p, &up),
    };
    let o = opts(cfg);
    let mut targets: Vec<(usize, usize)> = cfg.protocol.sites.iter().map(|&s| (s, s)).collect();
    targets.extend(cfg.protocol.pairs.iter().copied());
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &(a, b) in &targets {
        let d = displacement(&params.lengths, a, b);
        for &n in &cfg.protocol.n_bins {
            let rec = bin2d_and_recover_covariance_with(&outcomes, (col(a), col(b)), n, &o)?;
            rows.push(vec![
                a as f64,
                b as f64,
                n as f64,
                rec.value,
                rec.stderr,
                rec.n_used as f64,
                cond[d],
                unc[d],
            ]);
            points.push(json!({"a": a, "b": b, "n_bins": n, "recovered": rec.value, "stderr": rec.stderr, "analytic": cond[d]}));
        }
    }
    out.table(
        "recovery.csv",
        &["site_a", "site_b", "n_bins", "recovered", "stderr", "n_used", "analytic", "unconditional"],
        rows,
    )?;
    Ok(json!({
        "model": "lattice",
        "quadrature": q,
        "n_traj": outcomes.len(),
        "points": points,
        "correlation_length": correlation_length(&params).ok(),
    }))
}

// ------------------------------------------------------------------ husimi

/// Husimi grids of the final states of `seeds` plus centroid tracks.
pub(crate) fn husimi_runs(
    params: &SingleSiteParams,
    psi0: &FockState,
    ops: &FockOperators,
    grid: &TimeGrid,
    seeds: &[SeedSpec],
    out: &mut RunOutput,
    prefix: &str,
) -> Result<Vec<serde_json::Value>> {
    let steps = sample_steps(grid.n_steps);
    let stride = steps.get(1).copied().unwrap_or(1);
    let trajs: Vec<_> = seeds
        .par_iter()
        .map(|s| simulate_fock_trajectory_adaptive(params, psi0, ops, grid, s, stride))
        .collect::<Result<_>>()?;
    let axis = linspace(-6.0, 6.0, 121);
    let mut centroid_rows = Vec::new();
    let mut ellipses = Vec::new();
    for (seed, t) in seeds.iter().zip(&trajs) {
        let q = husimi(&t.final_state, &axis, &axis);
        q.write_csv(out.file(&format!("{prefix}_seed{}.csv", seed.trajectory_index))?)?;
        for (k, m) in &t.moments {
            centroid_rows.push(vec![grid.time(*k), seed.trajectory_index as f64, m.mean_x, m.mean_p]);
        }
        let [cx, cp, sxx, spp, sxp] = q.centroid_and_covariance();
        let m = t.final_state.moments(&t.final_operators()?);
        ellipses.push(json!({
            "seed": seed.trajectory_index,
            "centroid": [cx, cp],
            "husimi_covariance": [sxx, spp, sxp],
            "state_covariance_plus_half": [m.v_x + 0.5, m.v_p + 0.5, m.u],
        }));
    }
    out.table(&format!("{prefix}_centroids.csv"), &["t", "seed", "mean_x", "mean_p"], centroid_rows)?;
    Ok(ellipses)
}

fn husimi_pipeline(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<serde_json::Value> {
    if cfg.model.kind != ModelKind::Fock {
        return Err(Error::UnsupportedParameter("Husimi grids need the fock model".into()));
    }
    let params = cfg.single_site_params()?;
    let grid = cfg.time_grid()?;
    let ops = cfg.fock_operators()?;
    let psi0 = cfg.model.init.fock_state(&ops)?;
    let seeds = cfg.seeds()?;
    let ellipses = husimi_runs(&params, &psi0, &ops, &grid, &seeds, out, "husimi")?;
    let steady = steady_or_nan(&params);
    let rows: Vec<Vec<f64>> = ellipses
        .iter()
        .map(|e| {
            let g = |k: &str, i: usize| e[k][i].as_f64().unwrap_or(f64::NAN);
            vec![
                e["seed"].as_f64().unwrap_or(f64::NAN),
                g("centroid", 0),
                g("centroid", 1),
                g("husimi_covariance", 0),
                g("husimi_covariance", 1),
                g("husimi_covariance", 2),
                steady[0] + 0.5,
                steady[1] + 0.5,
                steady[2],
            ]
        })
        .collect();
    out.table(
        "ellipses.csv",
        &["seed", "centroid_x", "centroid_p", "s_xx", "s_pp", "s_xp", "steady_s_xx", "steady_s_pp", "steady_s_xp"],
        rows,
    )?;
    Ok(json!({ "ellipses": ellipses, "steady_reference": [steady[0] + 0.5, steady[1] + 0.5, steady[2]] }))
}
