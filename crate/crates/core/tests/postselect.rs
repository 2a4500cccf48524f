use std::sync::OnceLock;

use monitor_core::filter::{analytic_filter_single_default, KpConvention, Quadrature};
use monitor_core::fock::FockState;
use monitor_core::gaussian::{
    correlator_profile, steady_state_single, unconditional_variance_single, GaussianLatticeState, GaussianState1,
    LatticeParams, SingleSiteParams,
};
use monitor_core::postselect::*;
use monitor_core::stochastic::{seed_plan, SeedSpec, TimeGrid};
use monitor_core::Error;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn unit() -> SingleSiteParams {
    SingleSiteParams::new(1.0, 1.0).unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Single-site outcomes from the vacuum, observed at `t = 10`.
fn desk_outcomes(n: usize, master: u64) -> Vec<TrajectoryOutcome> {
    let grid = TimeGrid::new(0.0, 5e-3, 2000).unwrap();
    let k = analytic_filter_single_default(&unit(), grid.dt).unwrap();
    let seeds = seed_plan(master, n).unwrap();
    single_site_outcomes(&unit(), &GaussianState1::vacuum(), &grid, &k, Quadrature::X, &seeds).unwrap()
}

/// Shared 2·10⁴-trajectory dataset.
fn large_outcomes() -> &'static [TrajectoryOutcome] {
    static DATA: OnceLock<Vec<TrajectoryOutcome>> = OnceLock::new();
    DATA.get_or_init(|| desk_outcomes(20_000, 11))
}

#[test]
fn single_mode_draws_have_state_moments() {
    let state = GaussianState1::coherent(0.7, -1.2).with_covariances([2.0, 0.3, 0.1]);
    let mut rng = SeedSpec::new(3, 0).rng();
    let xs: Vec<f64> = (0..100_000).map(|_| sample_measurement_single(&state, Quadrature::X, &mut rng)).collect();
    let ps: Vec<f64> = (0..100_000).map(|_| sample_measurement_single(&state, Quadrature::P, &mut rng)).collect();
    let (mx, vx) = mean_var(&xs);
    let (mp, vp) = mean_var(&ps);
    let n = 1e5f64;
    assert!((mx - 0.7).abs() < 4.0 * (2.0 / n).sqrt());
    assert!((mp + 1.2).abs() < 4.0 * (0.3 / n).sqrt());
    assert!((vx - 2.0).abs() < 4.0 * 2.0 * (2.0 / n).sqrt());
    assert!((vp - 0.3).abs() < 4.0 * 0.3 * (2.0 / n).sqrt());

    let sharp = GaussianState1::coherent(0.25, 0.0).with_covariances([0.0, 1.0, 0.0]);
    assert_eq!(sample_measurement_single(&sharp, Quadrature::X, &mut rng), 0.25);
}

#[test]
fn lattice_draws_have_state_covariance() {
    let mut s = GaussianLatticeState::vacuum(3);
    s.cx = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, 0.8, 0.1, -0.2, 0.1, 0.6]);
    s.x = DVector::from_vec(vec![0.5, 0.0, -1.0]);
    let mut rng = SeedSpec::new(9, 2).rng();
    let n = 100_000;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| sample_measurement_lattice(&s, Quadrature::X, &mut rng).unwrap())
        .collect();
    for a in 0..3 {
        let m: f64 = draws.iter().map(|d| d[a]).sum::<f64>() / n as f64;
        assert!((m - s.x[a]).abs() < 4.0 * (s.cx[(a, a)] / n as f64).sqrt());
        for b in 0..3 {
            let mb: f64 = draws.iter().map(|d| d[b]).sum::<f64>() / n as f64;
            let c = draws.iter().map(|d| (d[a] - m) * (d[b] - mb)).sum::<f64>() / (n as f64 - 1.0);
            let se = ((s.cx[(a, a)] * s.cx[(b, b)] + s.cx[(a, b)].powi(2)) / n as f64).sqrt();
            assert!((c - s.cx[(a, b)]).abs() < 4.0 * se, "C[{a},{b}] = {c}");
        }
    }
}

#[test]
fn fock_draws_follow_the_position_density() {
    let vac = FockState::number(0, 12).unwrap();
    let one = FockState::number(1, 12).unwrap();
    let mut rng = SeedSpec::new(4, 0).rng();
    let n = 10_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_measurement_fock(&vac, Quadrature::X, &mut rng).unwrap()).collect();
    let (m, v) = mean_var(&xs);
    assert!(m.abs() < 4.0 * (0.5 / n as f64).sqrt());
    assert!((v - 0.5).abs() < 4.0 * 0.5 * (2.0 / n as f64).sqrt());
    let ps: Vec<f64> = (0..n).map(|_| sample_measurement_fock(&one, Quadrature::P, &mut rng).unwrap()).collect();
    let (_, v1) = mean_var(&ps);
    // ⟨p²⟩ = 3/2 in |1⟩, with fourth moment 15/4.
    assert!((v1 - 1.5).abs() < 4.0 * ((3.75 - 2.25) / n as f64).sqrt(), "{v1}");
    // A coherent state along p shifts the p draws only.
    let c = FockState::coherent(Complex64::new(0.0, 1.0), 24).unwrap();
    let pm = (0..n).map(|_| sample_measurement_fock(&c, Quadrature::P, &mut rng).unwrap()).sum::<f64>() / n as f64;
    let xm = (0..n).map(|_| sample_measurement_fock(&c, Quadrature::X, &mut rng).unwrap()).sum::<f64>() / n as f64;
    let se = (0.5 / n as f64).sqrt();
    assert!((pm - 2f64.sqrt()).abs() < 4.0 * se, "{pm}");
    assert!(xm.abs() < 4.0 * se, "{xm}");
}

#[test]
fn outcome_generation_is_deterministic_and_ordered() {
    let a = desk_outcomes(64, 5);
    let b = desk_outcomes(64, 5);
    assert_eq!(a, b);
    for (i, o) in a.iter().enumerate() {
        assert_eq!(o.trajectory_index, i as u64);
    }
    assert_ne!(a, desk_outcomes(64, 6));
}

#[test]
fn one_bin_recovers_the_unconditional_variance() {
    let out = large_outcomes();
    let r = bin_and_recover_variance(out, 0, 1).unwrap();
    let exact = unconditional_variance_single(10.0, &unit());
    assert!((exact - 5.271_764).abs() < 1e-5);
    assert!((r.value - exact).abs() < 3.0 * r.stderr, "{} ± {} vs {exact}", r.value, r.stderr);
    assert_eq!(r.n_used, 20_000);
    assert_eq!(r.excluded_fraction, 0.0);
}

#[test]
fn finite_bins_recover_conditional_variance_plus_bin_width_term() {
    let out = large_outcomes();
    let (est, _) = site_columns(out, 0).unwrap();
    let (_, var_est) = mean_var(&est);
    let vx = steady_state_single(&unit()).unwrap().v_x;
    let opts = BinningOptions::default();
    let mut last = f64::INFINITY;
    for n_bins in [1usize, 5, 20, 80] {
        let r = bin_and_recover_variance(out, 0, n_bins).unwrap();
        // Within one bin the conditional mean still varies uniformly across
        // the bin, adding δ²/12 to the pooled variance.
        let delta = 2.0 * opts.half_width_sd * var_est.sqrt() / n_bins as f64;
        if n_bins >= 20 {
            let expect = vx + delta * delta / 12.0;
            assert!((r.value - expect).abs() < 3.0 * r.stderr + 0.01, "{n_bins} bins: {} vs {expect}", r.value);
        }
        assert!(r.value < last, "recovery not refining at {n_bins} bins");
        last = r.value;
    }
    let fine = bin_and_recover_variance(out, 0, 80).unwrap();
    assert!((fine.value / vx - 1.0).abs() < 0.05);
}

#[test]
fn estimator_histogram_is_gaussian() {
    let out = large_outcomes();
    let (est, meas) = site_columns(out, 0).unwrap();
    let [m, v, skew, kurt] = moment_ratios(&est);
    let n = est.len() as f64;
    let vx = steady_state_single(&unit()).unwrap().v_x;
    let exact_signal = unconditional_variance_single(10.0, &unit()) - vx;
    assert!(m.abs() < 4.0 * (v / n).sqrt());
    assert!((v / exact_signal - 1.0).abs() < 0.05, "estimator variance {v} vs {exact_signal}");
    assert!(skew.abs() < 4.0 * (6.0 / n).sqrt());
    assert!(kurt.abs() < 4.0 * (24.0 / n).sqrt());
    let [_, vm, ..] = moment_ratios(&meas);
    assert!(vm > v);
}

#[test]
fn estimator_tracks_the_filtered_mean_on_a_lattice() {
    let p = LatticeParams::chain(3.0, 1.0, 16, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 0.01, 1000).unwrap();
    let sampler = LatticeOutcomeSampler::new(&p, &grid, Quadrature::X, KpConvention::ImpulseResponse).unwrap();
    let mut pairs = Vec::new();
    for s in seed_plan(21, 40).unwrap() {
        let out = sampler.sample(&s, false).unwrap();
        pairs.extend(out.estimators.iter().copied().zip(out.means.iter().copied()));
    }
    let (ea, va) = mean_var(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let (eb, vb) = mean_var(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let cov = pairs.iter().map(|(a, b)| (a - ea) * (b - eb)).sum::<f64>() / (pairs.len() as f64 - 1.0);
    let corr = cov / (va * vb).sqrt();
    assert!(corr >= 0.99, "correlation {corr}");
}

#[test]
fn two_dimensional_binning_reduces_to_one_dimension_on_the_diagonal() {
    let p = LatticeParams::chain(3.0, 1.0, 16, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 0.02, 500).unwrap();
    let sampler = LatticeOutcomeSampler::new(&p, &grid, Quadrature::X, KpConvention::ImpulseResponse).unwrap();
    let out = lattice_outcomes(&sampler, &[0, 1, 8], &seed_plan(8, 4000).unwrap()).unwrap();
    let d = bin2d_and_recover_covariance(&out, (1, 1), 10).unwrap();
    let one = bin_and_recover_variance(&out, 1, 10).unwrap();
    assert_eq!(d, one);

    // Far-apart sites: conditional covariance close to the steady profile.
    let prof = correlator_profile(&p).unwrap();
    let c08 = bin2d_and_recover_covariance(&out, (0, 2), 6).unwrap();
    assert!((c08.value - prof.c_x[8]).abs() < 4.0 * c08.stderr + 0.02, "{c08:?}");
    let c01 = bin2d_and_recover_covariance(&out, (0, 1), 6).unwrap();
    assert!(c01.value.is_finite() && c01.bins.iter().any(|b| b.index.len() == 2));
}

#[test]
fn independent_columns_give_zero_covariance() {
    let mut rng = SeedSpec::new(2, 2).rng();
    use rand_distr::{Distribution, StandardNormal};
    let mut col = || -> Vec<f64> { (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let (ea, eb, ma, mb) = (col(), col(), col(), col());
    let r = recover_covariance(&ea, &eb, &ma, &mb, 8, &BinningOptions::default()).unwrap();
    assert!(r.value.abs() < 4.0 * r.stderr, "{r:?}");
    let v = recover_variance(&ea, &ma, 8, &BinningOptions::default()).unwrap();
    assert!((v.value - 1.0).abs() < 4.0 * v.stderr);
}

#[test]
fn sparse_bins_are_excluded_or_reported() {
    let est = [0.0, 0.1, 5.0, 5.1, 5.2];
    let meas = [1.0, 2.0, 3.0, 4.0, 5.0];
    let opts = BinningOptions {
        min_count: 3,
        half_width_sd: 1.0,
    };
    let r = recover_variance(&est, &meas, 2, &opts).unwrap();
    assert_eq!(r.n_used, 3);
    assert!((r.excluded_fraction - 0.4).abs() < 1e-12);
    let strict = BinningOptions { min_count: 10, ..opts };
    assert!(matches!(
        recover_variance(&est, &meas, 2, &strict),
        Err(Error::AllBinsUnderThreshold { .. })
    ));
    assert!(matches!(recover_variance(&[], &[], 2, &opts), Err(Error::EmptyDataset)));
    assert!(recover_variance(&est, &meas, 0, &opts).is_err());
}

#[test]
fn binned_tables_and_outcomes_round_trip_through_csv() {
    let out = desk_outcomes(50, 14);
    let mut buf = Vec::new();
    write_outcomes_csv(&out, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("trajectory,site,estimator,measured"));
    let back = read_outcomes_csv(buf.as_slice(), 10.0).unwrap();
    assert_eq!(back.len(), 50);
    for (a, b) in out.iter().zip(&back) {
        assert_eq!(a.trajectory_index, b.trajectory_index);
        assert!((a.estimators[0] - b.estimators[0]).abs() <= 1e-11 * a.estimators[0].abs().max(1.0));
        assert!((a.measured[0] - b.measured[0]).abs() <= 1e-11 * a.measured[0].abs().max(1.0));
    }
    let r = bin_and_recover_variance(&out, 0, 3).unwrap();
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("bin_a,count,mean,value,included"));
    assert!(TrajectoryOutcome::new(0, vec![1.0], vec![], 1.0).is_err());
    assert!(TrajectoryOutcome::new(0, vec![f64::NAN], vec![0.0], 1.0).is_err());
}

#[test]
fn spatial_averages_over_one_long_chain() {
    let p = LatticeParams::chain(3.0, 1.0, 256, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 0.02, 500).unwrap();
    let sampler = LatticeOutcomeSampler::new(&p, &grid, Quadrature::X, KpConvention::ImpulseResponse).unwrap();
    let s = sampler.sample(&SeedSpec::new(1, 0), true).unwrap();
    let rec = s.record.unwrap();
    let window = LagWindow {
        block_steps: 5,
        n_blocks: 40,
    };
    let avg = spatial_average_correlators(&rec, &s.measured, 8, window, 10.0, monitor_core::filter::Detrend::Linear, None)
        .unwrap();
    assert_eq!(avg.n_windows, 32);
    assert!(avg.doubled.is_some());
    assert!(avg.max_shift_in_stderr.unwrap().is_finite());
    assert_eq!(avg.tables.s.len(), 40);
    // Too few windows at a large spacing.
    assert!(matches!(
        spatial_average_correlators(&rec, &s.measured, 64, window, 10.0, monitor_core::filter::Detrend::Linear, None),
        Err(Error::InsufficientData(_))
    ));
    assert!(spatial_average_correlators(&rec, &s.measured[..10], 8, window, 10.0, monitor_core::filter::Detrend::Linear, None)
        .is_err());
}
