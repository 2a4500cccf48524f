use std::path::Path;
use std::process::Command;

use monitor_core::experiment::*;
use monitor_core::postselect::bin_and_recover_variance;
use monitor_core::Error;
use proptest::prelude::*;

fn monitor() -> Command {
    Command::new(env!("CARGO_BIN_EXE_monitor"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("grid.dt", "0.01"),
        ("grid.t_final", "10"),
        ("ensemble.n_traj", "400"),
        ("protocol.n_bins", "1, 10"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.set("output.path", dir.to_str().unwrap()).unwrap();
    cfg
}

#[test]
fn text_config_with_sections_comments_and_defaults() {
    let text = "# desk run\n[model]\nkind = fock\nh0 = 0.5\ninit = superposition:0,5  # cat-like\n\n[grid]\ndt = 1e-4\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    assert_eq!(cfg.model.kind, ModelKind::Fock);
    assert_eq!(cfg.model.h0, 0.5);
    assert_eq!(cfg.model.init, InitSpec::Superposition { m: 0, n: 5 });
    assert_eq!(cfg.grid.dt, 1e-4);
    assert_eq!(cfg.grid.t_final, ExperimentConfig::default().grid.t_final);
    assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    assert_eq!(ExperimentConfig::from_str_any(&cfg.to_json().unwrap()).unwrap(), cfg);
    let partial = ExperimentConfig::from_json(r#"{"grid": {"dt": 0.02}}"#).unwrap();
    assert_eq!(partial.grid.dt, 0.02);
    assert_eq!(partial.model, ExperimentConfig::default().model);
}

#[test]
fn config_errors_carry_line_and_field() {
    let cases = [
        ("[model]\ngamma = fast\n", 2, "model.gamma"),
        ("[grid]\ndt = 0.1\n\n[bogus]\n", 4, "bogus"),
        ("[grid]\ndt = 0.1\ndt = 0.2\n", 3, "grid.dt"),
        ("[model]\nspin = 1\n", 2, "model.spin"),
        ("[model]\nkind\n", 2, "kind"),
        ("[protocol]\npairs = 0:1\n", 2, "protocol.pairs"),
    ];
    for (text, want_line, want_field) in cases {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { line, field, .. }) => {
                assert_eq!(line, want_line, "{text:?}");
                assert_eq!(field, want_field, "{text:?}");
            }
            other => panic!("{text:?} gave {other:?}"),
        }
    }
    let bad = ExperimentConfig::parse("[grid]\n\ndt = -1\n").unwrap();
    match bad.validate() {
        Err(Error::Config { line, field, .. }) => assert_eq!((line, field.as_str()), (3, "grid.dt")),
        other => panic!("{other:?}"),
    }
    let mut cfg = ExperimentConfig::default();
    cfg.set("ensemble.n_traj", "0").unwrap();
    assert!(matches!(cfg.validate(), Err(Error::Config { line: 0, .. })));
}

#[test]
fn hash_tracks_content_only() {
    let a = ExperimentConfig::default();
    let b = ExperimentConfig::parse(&a.to_text()).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let mut c = a.clone();
    c.set("model.gamma", "2").unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn every_documented_key_is_settable_with_its_default() {
    let mut cfg = ExperimentConfig::default();
    for (key, default, _) in KEY_REFERENCE {
        cfg.set(key, default).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
    assert_eq!(cfg, ExperimentConfig::default());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_both_formats(
        gamma in 0.0f64..10.0,
        h0 in 0.01f64..5.0,
        dt in 1e-5f64..0.1,
        n_traj in 1usize..100_000,
        seed in any::<u64>(),
        bins in prop::collection::vec(1usize..200, 1..5),
        kind in 0usize..3,
        pair in (0usize..64, 0usize..64),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.set("model.kind", ["single-site", "lattice", "fock"][kind]).unwrap();
        cfg.set("model.gamma", &gamma.to_string()).unwrap();
        cfg.set("model.h0", &h0.to_string()).unwrap();
        cfg.set("grid.dt", &dt.to_string()).unwrap();
        cfg.set("ensemble.n_traj", &n_traj.to_string()).unwrap();
        cfg.set("ensemble.master_seed", &seed.to_string()).unwrap();
        let b: Vec<String> = bins.iter().map(|x| x.to_string()).collect();
        cfg.set("protocol.n_bins", &b.join(",")).unwrap();
        cfg.set("protocol.pairs", &format!("{}-{}", pair.0, pair.1)).unwrap();
        prop_assert_eq!(&ExperimentConfig::parse(&cfg.to_text()).unwrap(), &cfg);
        prop_assert_eq!(&ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), &cfg);
        prop_assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap().hash(), cfg.hash());
    }
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| single_mode_outcomes(&cfg).unwrap());
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| single_mode_outcomes(&cfg).unwrap());
    assert_eq!(serial.1, parallel.1);
    assert_eq!(serial.0, parallel.0);

    let t_serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| empirical_tables(&cfg, &cfg.seeds().unwrap()).unwrap());
    let t_parallel = empirical_tables(&cfg, &cfg.seeds().unwrap()).unwrap();
    for (a, b) in t_serial.g.iter().zip(&t_parallel.g) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn distinct_master_seeds_agree_statistically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.set("ensemble.n_traj", "4000").unwrap();
    let a = single_mode_outcomes(&cfg).unwrap().1;
    cfg.set("ensemble.master_seed", "977").unwrap();
    let b = single_mode_outcomes(&cfg).unwrap().1;
    assert_ne!(a, b);
    let ra = bin_and_recover_variance(&a, 0, 10).unwrap();
    let rb = bin_and_recover_variance(&b, 0, 10).unwrap();
    let se = (ra.stderr.powi(2) + rb.stderr.powi(2)).sqrt();
    assert!((ra.value - rb.value).abs() < 3.0 * se, "{} vs {} (se {se})", ra.value, rb.value);
}

#[test]
fn postselect_pipeline_writes_tables_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let report = run_pipeline(&cfg, Pipeline::Postselect).unwrap();
    assert_eq!(report.pipeline, "postselect");
    for f in ["outcomes.csv", "recovery.csv", "bins_1.csv", "bins_10.csv", "estimator_histogram.csv"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
        assert!(report.files.iter().any(|x| x == f), "{f} not listed");
    }
    let side: Sidecar = serde_json::from_value(read_json(&report.sidecar)).unwrap();
    assert_eq!(side.config_hash, cfg.hash());
    assert_eq!(side.master_seed, 1);
    assert_eq!(side.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(report.summary["n_traj"], 400);
    let header = std::fs::read_to_string(dir.path().join("recovery.csv")).unwrap();
    assert!(header.starts_with("n_bins,recovered,stderr"));
}

#[test]
fn cli_runs_steady_state_and_writes_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = monitor()
        .args(["steady-state", "--gamma", "2", "--out"])
        .arg(dir.path())
        .args(["--set", "grid.t_final=5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("sidecar:"));
    let side = read_json(&dir.path().join("steady-state.json"));
    assert_eq!(side["pipeline"], "steady-state");
    assert_eq!(side["config"]["model"]["gamma"], 2.0);
    assert_eq!(side["config"]["grid"]["t_final"], 5.0);
    assert_eq!(side["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn cli_print_config_round_trips_and_flags_override_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "[model]\ngamma = 3\nh0 = 2\n").unwrap();
    let out = monitor()
        .args(["simulate", "--print-config", "--gamma", "4", "--config"])
        .arg(&file)
        .args(["--set", "model.h0=5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = ExperimentConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.model.gamma, 4.0);
    assert_eq!(cfg.model.h0, 5.0);
}

#[test]
fn cli_reports_configuration_errors_with_exit_code_two() {
    let bad_value = monitor().args(["simulate", "--set", "grid.dt=fast", "--print-config"]).output().unwrap();
    assert_eq!(bad_value.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_value.stderr).contains("grid.dt"));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "[grid]\n\ndt = 0.1\nsteps = 3\n").unwrap();
    let bad_file = monitor().args(["simulate", "--config"]).arg(&file).output().unwrap();
    assert_eq!(bad_file.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_file.stderr).contains("line 4"));

    let fig = monitor().args(["reproduce", "fig99"]).output().unwrap();
    assert_eq!(fig.status.code(), Some(2));

    let negative = monitor()
        .args(["postselect", "--gamma", "-1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(negative.status.code(), Some(2));
}

#[test]
fn cli_help_lists_every_key() {
    let out = monitor().arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for (key, _, _) in KEY_REFERENCE {
        assert!(text.contains(key), "help lacks {key}");
    }
}
