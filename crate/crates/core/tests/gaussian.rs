use std::f64::consts::PI;

use monitor_core::gaussian::*;
use monitor_core::stochastic::{SeedSpec, TimeGrid};
use monitor_core::Error;

fn unit() -> SingleSiteParams {
    SingleSiteParams::new(1.0, 1.0).unwrap()
}

/// Steady covariances by brute-force RK4 integration of the covariance flow.
fn integrate_flow(c0: [f64; 3], h: f64, gamma: f64, dt: f64, t: f64) -> [f64; 3] {
    let mut s = GaussianState1::vacuum().with_covariances(c0);
    let p = if gamma > 0.0 {
        SingleSiteParams::new(h, gamma).unwrap()
    } else {
        SingleSiteParams::unmonitored(h)
    };
    for _ in 0..(t / dt).round() as usize {
        s = riccati_step_single(&s, &p, dt).unwrap();
    }
    s.covariances()
}

#[test]
fn steady_state_at_unit_ratio_matches_long_time_flow() {
    let ss = steady_state_single(&unit()).unwrap();
    assert!((ss.v_x - 0.393_076).abs() < 1e-6);
    assert!((ss.v_p - 0.878_944).abs() < 1e-6);
    assert!((ss.u - 0.309_017).abs() < 1e-6);
    assert!((ss.tau - 1.272_020).abs() < 1e-6);
    for c0 in [[0.5, 0.5, 0.0], [2.0, 0.3, 0.1], [0.2, 4.0, -0.5]] {
        let c = integrate_flow(c0, 1.0, 1.0, 1e-3, 20.0);
        assert!((c[0] - ss.v_x).abs() < 1e-6, "{c:?}");
        assert!((c[1] - ss.v_p).abs() < 1e-6, "{c:?}");
        assert!((c[2] - ss.u).abs() < 1e-6, "{c:?}");
    }
}

#[test]
fn steady_state_limits() {
    let fast = steady_state_single(&SingleSiteParams::new(1e4, 1.0).unwrap()).unwrap();
    assert!((fast.v_x - 0.5).abs() < 1e-3);
    for h in [1e-4, 1e-6] {
        let slow = steady_state_single(&SingleSiteParams::new(h, 1.0).unwrap()).unwrap();
        let expect = (h / 4.0).sqrt();
        assert!((slow.v_x / expect - 1.0).abs() < 1e-3);
    }
    assert!(matches!(
        steady_state_single(&SingleSiteParams::new(-1.0, 1.0).unwrap()),
        Err(Error::UnsupportedParameter(_))
    ));
}

#[test]
fn steady_state_is_pure_across_ratios() {
    for h in [0.01, 0.3, 1.0, 3.0, 50.0] {
        for g in [0.2, 1.0, 7.0] {
            let s = steady_state_single(&SingleSiteParams::new(h, g).unwrap()).unwrap();
            assert!((s.v_x * s.v_p - s.u * s.u - 0.25).abs() < 1e-10);
            assert!(riccati_rhs([s.v_x, s.v_p, s.u], h, g).iter().all(|r| r.abs() < 1e-10));
            let p = SingleSiteParams::new(h, g).unwrap();
            assert!((s.tau - memory_time_closed_form(&p)).abs() < 1e-10 * s.tau);
        }
    }
}

#[test]
fn free_particle_position_variance_follows_separable_solution() {
    // h0 = 0: v̇_x = −4Γv_x², so v_x(t) = v₀/(1 + 4Γv₀t).
    let c = integrate_flow([0.5, 0.5, 0.0], 0.0, 1.0, 1e-3, 1.0);
    assert!((c[0] - 1.0 / 6.0).abs() < 1e-9);
}

#[test]
fn fixed_point_is_stationary_under_stepping() {
    let ss = steady_state_single(&unit()).unwrap();
    let c = integrate_flow([ss.v_x, ss.v_p, ss.u], 1.0, 1.0, 1e-3, 5.0);
    for (a, b) in c.iter().zip([ss.v_x, ss.v_p, ss.u]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn unmonitored_flow_conserves_total_variance() {
    for c0 in [[0.7, 0.5, 0.2], [3.0, 0.1, -0.4]] {
        let c = integrate_flow(c0, 1.3, 0.0, 1e-3, 4.0);
        assert!((c[0] + c[1] - c0[0] - c0[1]).abs() < 1e-10);
    }
}

#[test]
fn perturbations_relax_with_time_constant_half_tau() {
    let p = unit();
    let ss = steady_state_single(&p).unwrap();
    let dt = 1e-3;
    let base = ss.state();
    let mut a = base.with_covariances([ss.v_x * 1.01, ss.v_p, ss.u]);
    // Envelope of the deviation over one oscillation period at two times.
    let period = 2.0 * PI / (1.0 + 4.0 * ss.u - (2.0 * ss.v_x).powi(2)).sqrt() / 2.0;
    let mut history = Vec::new();
    for _ in 0..(16.0 / dt) as usize {
        a = riccati_step_single(&a, &p, dt).unwrap();
        let c = a.covariances();
        let d = ((c[0] - ss.v_x).powi(2) + (c[1] - ss.v_p).powi(2) + (c[2] - ss.u).powi(2)).sqrt();
        history.push(d);
    }
    let envelope = |t: f64| {
        let k0 = (t / dt) as usize;
        let k1 = ((t + 2.0 * period) / dt) as usize;
        history[k0..k1].iter().cloned().fold(0.0, f64::max)
    };
    let (t1, t2) = (2.0, 8.0);
    let rate = (envelope(t1) / envelope(t2)).ln() / (t2 - t1);
    let expect = 2.0 / ss.tau;
    assert!((rate / expect - 1.0).abs() < 0.03, "rate {rate} vs {expect}");
}

#[test]
fn means_step_examples() {
    let unmon = SingleSiteParams::unmonitored(1.0);
    let s = GaussianState1::coherent(0.3, -0.7);
    let dt = 1e-6;
    let (x, p) = means_step_single(&s, &unmon, 0.0, dt);
    assert!((x - (0.3 + (-0.7) * dt)).abs() < 1e-11);
    assert!((p - (-0.7 - 0.3 * dt)).abs() < 1e-11);

    let params = SingleSiteParams::new(1.0, 2.0).unwrap();
    let ss = steady_state_single(&params).unwrap();
    let s = ss.state();
    let delta = 0.05;
    let (x, p) = means_step_single(&s, &params, delta, 1e-9);
    let sg = 2.0 * 2f64.sqrt();
    assert!((x - sg * ss.v_x * delta).abs() < 1e-9);
    assert!((p - sg * ss.u * delta).abs() < 1e-9);
}

#[test]
fn covariances_are_seed_independent_and_means_are_not() {
    let grid = TimeGrid::new(0.0, 1e-3, 2000).unwrap();
    let (a, ra) = simulate_trajectory_single(&unit(), &GaussianState1::vacuum(), &grid, &SeedSpec::new(1, 0)).unwrap();
    let (b, rb) = simulate_trajectory_single(&unit(), &GaussianState1::vacuum(), &grid, &SeedSpec::new(1, 1)).unwrap();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert_eq!(sa.covariances(), sb.covariances());
    }
    assert_ne!(a.final_state().mean_x, b.final_state().mean_x);
    assert_ne!(ra.increments(), rb.increments());
}

#[test]
fn unmonitored_coherent_state_rotates_harmonically() {
    let h = 1.7;
    let params = SingleSiteParams::unmonitored(h);
    let grid = TimeGrid::new(0.0, 1e-3, 3000).unwrap();
    let init = GaussianState1::coherent(0.8, -0.4);
    let (traj, _) = simulate_trajectory_single(&params, &init, &grid, &SeedSpec::new(3, 3)).unwrap();
    for (k, s) in traj.states.iter().enumerate().step_by(250) {
        let t = grid.time(k);
        assert!((s.mean_x - (0.8 * (h * t).cos() - 0.4 * (h * t).sin())).abs() < 1e-10);
    }
}

#[test]
fn conditional_variance_settles_at_steady_value() {
    let grid = TimeGrid::new(0.0, 1e-3, 10_000).unwrap();
    let (traj, _) = simulate_trajectory_single(&unit(), &GaussianState1::vacuum(), &grid, &SeedSpec::new(7, 0)).unwrap();
    assert!((traj.final_state().v_x - 0.393_076).abs() < 1e-4);
}

#[test]
fn heisenberg_bound_holds_along_trajectories() {
    let grid = TimeGrid::new(0.0, 1e-3, 5000).unwrap();
    for init in [GaussianState1::vacuum(), GaussianState1::coherent(1.0, 2.0).with_covariances([2.0, 0.2, 0.3])] {
        let (traj, _) = simulate_trajectory_single(&unit(), &init, &grid, &SeedSpec::new(2, 2)).unwrap();
        assert!(traj.states.iter().all(|s| s.satisfies_heisenberg(1e-9)));
    }
}

/// Ensemble statistics at t = 10 on a shared covariance schedule.
fn ensemble_final_means(n: usize) -> Vec<(f64, f64)> {
    let grid = TimeGrid::new(0.0, 1e-3, 10_000).unwrap();
    let params = unit();
    let sched = CovarianceSchedule::new(&params, [0.5, 0.5, 0.0], &grid).unwrap();
    (0..n as u64)
        .map(|i| {
            let (t, _) =
                simulate_with_schedule(&params, &GaussianState1::vacuum(), &sched, &grid, &SeedSpec::new(11, i)).unwrap();
            let f = t.final_state();
            (f.mean_x, f.v_x)
        })
        .collect()
}

#[test]
fn means_are_unbiased_and_reproduce_unconditional_variance() {
    let n = 10_000;
    let finals = ensemble_final_means(n);
    let nf = n as f64;
    let mean = finals.iter().map(|f| f.0).sum::<f64>() / nf;
    let var = finals.iter().map(|f| (f.0 - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    assert!(mean.abs() < 4.0 * (var / nf).sqrt(), "mean {mean}");

    let second: Vec<f64> = finals.iter().map(|f| f.0 * f.0 + f.1).collect();
    let m2 = second.iter().sum::<f64>() / nf;
    let se = (second.iter().map(|s| (s - m2).powi(2)).sum::<f64>() / (nf - 1.0) / nf).sqrt();
    let exact = 5.5 - 20f64.sin() / 4.0;
    assert!((unconditional_variance_single(10.0, &unit()) - 5.271_764).abs() < 1e-6);
    assert!((m2 - exact).abs() < 4.0 * se, "{m2} ± {se} vs {exact}");
}

#[test]
fn dispersion_and_correlation_length() {
    let p = LatticeParams::chain(3.0, 1.0, 16, 1.0).unwrap();
    assert!((dispersion(&[0.0], &p) - 1.0).abs() < 1e-14);
    assert!((dispersion(&[PI], &p) - 5.0).abs() < 1e-14);
    let p = LatticeParams::chain(2.0025, 1.0, 16, 1.0).unwrap();
    assert!((correlation_length(&p).unwrap() - 20.0).abs() < 1e-9);
    let p = LatticeParams::chain(2.0005, 1.0, 16, 1.0).unwrap();
    assert!((correlation_length(&p).unwrap() - 44.7).abs() < 0.05);
    let p = LatticeParams::chain(2.0, 1.0, 16, 1.0).unwrap();
    assert!(matches!(correlation_length(&p), Err(Error::GaplessParameters(_))));
    assert!(matches!(steady_state_lattice(&p), Err(Error::GaplessParameters(_))));
    let sq = LatticeParams::new(4.5, 1.0, vec![4, 4], 1.0).unwrap();
    assert!((dispersion(&[0.0, 0.0], &sq) - 0.5).abs() < 1e-14);
    assert!((correlation_length(&sq).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    let flat = LatticeParams::chain(2.5, 0.0, 9, 1.0).unwrap();
    assert!(flat.mode_energies().iter().all(|&h| h == 2.5));
}

#[test]
fn lattice_steady_state_is_pure_for_every_mode() {
    let p = LatticeParams::new(5.0, 1.0, vec![6, 5], 0.7).unwrap();
    let ss = steady_state_lattice(&p).unwrap();
    for k in 0..ss.h.len() {
        assert!(ss.v[k] > 0.0 && ss.w[k] > 0.0);
        assert!((ss.v[k] * ss.w[k] - ss.u[k] * ss.u[k] - 0.25).abs() < 1e-10);
    }
}

#[test]
fn decoupled_lattice_reproduces_single_site_profile() {
    let p = LatticeParams::chain(1.5, 0.0, 12, 1.0).unwrap();
    let prof = correlator_profile(&p).unwrap();
    let one = steady_state_single(&SingleSiteParams::new(1.5, 1.0).unwrap()).unwrap();
    assert!((prof.c_x[0] - one.v_x).abs() < 1e-12);
    assert!((prof.c_p[0] - one.v_p).abs() < 1e-12);
    assert!(prof.c_x[1..].iter().chain(&prof.c_p[1..]).all(|c| c.abs() < 1e-12));
}

#[test]
fn correlator_profile_matches_momentum_sum_oracle() {
    let l = 64;
    let p = LatticeParams::chain(3.0, 1.0, l, 1.0).unwrap();
    let prof = correlator_profile(&p).unwrap();
    // Oracle: direct momentum sum of the single-mode closed forms.
    let oracle = |r: usize| {
        let (mut cx, mut cp) = (0.0, 0.0);
        for k in 0..l {
            let q = 2.0 * PI * k as f64 / l as f64;
            let h = 3.0 - 2.0 * q.cos();
            let s = steady_state_single(&SingleSiteParams::new(h, 1.0).unwrap()).unwrap();
            cx += s.v_x * (q * r as f64).cos();
            cp += s.v_p * (q * r as f64).cos();
        }
        (cx / l as f64, cp / l as f64)
    };
    for r in 0..=5 {
        let (ox, op) = oracle(r);
        assert!((prof.c_x[r] - ox).abs() < 1e-13);
        assert!((prof.c_p[r] - op).abs() < 1e-13);
    }
    // Frozen regression values.
    let frozen_x = [0.461_089_707_484, -0.021_096_256_223, -0.008_592_297_578];
    let frozen_p = [0.629_104_074_422, 0.073_408_533_088, 0.032_204_145_036];
    for r in 0..3 {
        assert!((prof.c_x[r] - frozen_x[r]).abs() < 1e-9, "C^X_{r} = {:.12}", prof.c_x[r]);
        assert!((prof.c_p[r] - frozen_p[r]).abs() < 1e-9, "C^P_{r} = {:.12}", prof.c_p[r]);
    }
}

#[test]
fn momentum_correlator_decays_exponentially_on_lattice_scale() {
    let p = LatticeParams::chain(3.0, 1.0, 500, 1.0).unwrap();
    let prof = correlator_profile(&p).unwrap();
    let pts: Vec<(f64, f64)> = (1..=8).map(|r| (r as f64, prof.c_p[r].abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    let length = -1.0 / slope;
    assert!(r2 > 0.99, "log-linear fit R² = {r2}");
    assert!(length > 0.2 && length < 5.0, "decay length {length}");
}

#[test]
fn single_site_lattice_reduces_to_single_mode() {
    let lat = LatticeParams::chain(3.0, 1.0, 1, 1.0).unwrap();
    let h = lat.hopping_matrix();
    assert!((h[(0, 0)] - 1.0).abs() < 1e-15);
    let single = unit();
    let mut a = GaussianLatticeState::vacuum(1);
    a.x[0] = 0.2;
    a.p[0] = -0.1;
    let mut b = GaussianState1::coherent(0.2, -0.1);
    let rot = FreeRotation::new(&h, 1e-3);
    for k in 0..2000 {
        let d_i = 1e-3 * ((k as f64) * 0.1).sin();
        let (x, p) = means_step_lattice(&a, &rot, 1.0, &nalgebra::DVector::from_element(1, d_i), 1e-3);
        a = riccati_step_lattice(&a, &h, 1.0, 1e-3).unwrap();
        a.x = x;
        a.p = p;
        let (bx, bp) = means_step_single(&b, &single, d_i, 1e-3);
        b = riccati_step_single(&b, &single, 1e-3).unwrap();
        b.mean_x = bx;
        b.mean_p = bp;
    }
    assert!((a.cx[(0, 0)] - b.v_x).abs() < 1e-12);
    assert!((a.cp[(0, 0)] - b.v_p).abs() < 1e-12);
    assert!((a.u[(0, 0)] - b.u).abs() < 1e-12);
    assert!((a.x[0] - b.mean_x).abs() < 1e-12);
    assert!((a.p[0] - b.mean_p).abs() < 1e-12);
}

#[test]
fn momentum_modes_decouple() {
    let p = LatticeParams::chain(3.0, 1.0, 8, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1e-3, 3000).unwrap();
    let steps: Vec<usize> = (0..=3000).step_by(500).collect();
    let direct = covariance_history_lattice(&p, &GaussianLatticeState::vacuum(8), &grid, &steps).unwrap();
    let modes = ModeSchedules::vacuum(&p, &grid).unwrap();
    for (k, s) in &direct {
        let m = modes.real_space_state(&p.lengths, *k);
        let err = (&s.cx - &m.cx).amax().max((&s.cp - &m.cp).amax()).max((&s.u - &m.u).amax());
        assert!(err < 1e-8, "step {k}: {err}");
    }
}

#[test]
fn mode_solver_reproduces_real_space_trajectory() {
    let p = LatticeParams::new(4.5, 1.0, vec![4, 3], 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 2e-3, 1500).unwrap();
    let seed = SeedSpec::new(5, 9);
    let (a, ra) = simulate_trajectory_lattice(&p, &GaussianLatticeState::vacuum(12), &grid, &seed, &[1500]).unwrap();
    let modes = ModeSchedules::vacuum(&p, &grid).unwrap();
    let (b, rb) = simulate_trajectory_lattice_fft(&p, &modes, &grid, &seed, &[1500]).unwrap();
    let diff = ra
        .increments()
        .as_slice()
        .iter()
        .zip(rb.increments().as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-9, "record difference {diff}");
    for (xa, xb) in a.mean_x.last().unwrap().iter().zip(b.mean_x.last().unwrap()) {
        assert!((xa - xb).abs() < 1e-8);
    }
    let (sa, sb) = (&a.snapshots[0].1, &b.snapshots[0].1);
    assert!((&sa.cp - &sb.cp).amax() < 1e-6);
}

#[test]
fn lattice_states_respect_uncertainty_bound() {
    let p = LatticeParams::chain(3.0, 1.0, 6, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 2e-3, 2000).unwrap();
    let snaps: Vec<usize> = (0..=2000).step_by(200).collect();
    let (traj, _) = simulate_trajectory_lattice(&p, &GaussianLatticeState::vacuum(6), &grid, &SeedSpec::new(4, 4), &snaps).unwrap();
    for (_, s) in &traj.snapshots {
        assert!(s.smallest_symplectic_eigenvalue().unwrap() >= 0.5 - 1e-8);
        assert!((&s.cx - s.cx.transpose()).amax() < 1e-12);
    }
}

#[test]
fn conditional_momentum_variance_equilibrates_while_unconditional_grows() {
    let p = LatticeParams::chain(3.0, 1.0, 32, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1e-3, 10_000).unwrap();
    let modes = ModeSchedules::vacuum(&p, &grid).unwrap();
    let onsite = |k: usize| modes.real_space_state(&p.lengths, k).cp[(0, 0)];
    let c5 = onsite(5000);
    let c10 = onsite(10_000);
    assert!((c5 - c10).abs() < 1e-3 * c10, "{c5} vs {c10}");
    let steady = correlator_profile(&p).unwrap().c_p[0];
    assert!((c10 - steady).abs() < 1e-5);
    let (_, p5) = unconditional_profile(&p, 5.0);
    let (_, p10) = unconditional_profile(&p, 10.0);
    assert!(p10[0] - p5[0] > 2.0, "unconditional ⟨p²⟩: {} → {}", p5[0], p10[0]);
}
