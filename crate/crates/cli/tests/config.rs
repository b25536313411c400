use fosb_cli::config::{parse_config_str, ConfigError, Experiment, ExperimentConfig, GeometryKind, ModelKind, ProblemKind};
use fosb_cli::fosb::C64;
use proptest::prelude::*;

fn line_of(e: &ConfigError) -> Option<usize> {
    match e {
        ConfigError::Line { line, .. } => Some(*line),
        _ => None,
    }
}

#[test]
fn sphere_defaults() {
    let cfg = parse_config_str("experiment = sphere-convergence\n").unwrap();
    assert_eq!(cfg.k0, 3.0);
    assert_eq!(cfg.eps_r, 2.1);
    assert_eq!(cfg.tol, 1e-8);
    assert_eq!(cfg.n_angles, 1801);
    assert_eq!(cfg.precisions, vec![2.0, 5.0, 10.0]);
    assert_eq!(cfg.l, 2);
    assert_eq!(cfg.problem, ProblemKind::Dielectric);
}

#[test]
fn kite_defaults() {
    for exp in ["kite-foa", "kite-uq"] {
        let cfg = parse_config_str(&format!("experiment = {exp}")).unwrap();
        assert_eq!((cfg.k0, cfg.eps_r, cfg.n_angles, cfg.tol), (5.0, 1.9, 400, 1e-6), "{exp}");
        assert_eq!(cfg.geometry, GeometryKind::Kite);
    }
    let uq = parse_config_str("experiment = kite-uq").unwrap();
    assert_eq!((uq.t, uq.mc_runs, uq.model, uq.full_tensor), (0.05, 100, ModelKind::KiteRank1, true));
    let foa = parse_config_str("experiment = kite-foa").unwrap();
    assert_eq!(foa.t_values, vec![1.0, 0.5, 0.25, 0.1]);
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let text = "# header\n\n  experiment = custom   # trailing\nk0 = 4.5 # wavenumber\n   \n";
    let cfg = parse_config_str(text).unwrap();
    assert_eq!(cfg.experiment, Experiment::Custom);
    assert_eq!(cfg.k0, 4.5);
}

#[test]
fn unknown_key_reports_line() {
    let e = parse_config_str("experiment = custom\n# c\nwavenumber = 3\n").unwrap_err();
    assert_eq!(line_of(&e), Some(3));
    assert!(e.to_string().contains("unknown key 'wavenumber'"), "{e}");
}

#[test]
fn empty_experiment_names_the_field() {
    let e = parse_config_str("k0 = 3\nexperiment =\n").unwrap_err();
    assert_eq!(line_of(&e), Some(2));
    assert!(e.to_string().contains("experiment"), "{e}");
    let e = parse_config_str("k0 = 3\n").unwrap_err();
    assert!(e.to_string().contains("experiment"), "{e}");
}

#[test]
fn empty_value_names_the_field() {
    let e = parse_config_str("experiment = custom\ntol =\n").unwrap_err();
    assert_eq!(line_of(&e), Some(2));
    assert!(e.to_string().contains("tol"), "{e}");
}

#[test]
fn repeated_key_is_rejected() {
    let e = parse_config_str("experiment = custom\nk0 = 1\nk0 = 2\n").unwrap_err();
    assert_eq!(line_of(&e), Some(3));
    assert!(e.to_string().contains("line 2"), "{e}");
}

#[test]
fn malformed_values_report_line() {
    for (text, line) in [
        ("experiment = custom\nk0 = three\n", 2),
        ("experiment = custom\n\ndirection = 1, 2\n", 3),
        ("experiment = custom\nhermitian = yes\n", 2),
        ("experiment = custom\nsolver = cg\n", 2),
        ("experiment = custom\njust text\n", 2),
        ("experiment = sphere\n", 1),
    ] {
        let e = parse_config_str(text).unwrap_err();
        assert_eq!(line_of(&e), Some(line), "{text:?}: {e}");
    }
}

#[test]
fn invalid_combinations_are_rejected() {
    for text in [
        "experiment = custom\nprecisions = 2, 5\nl = 2\n",
        "experiment = custom\nprecisions = 5, 2\n",
        "experiment = custom\nmc_runs = 1\n",
        "experiment = custom\nk0 = -1\n",
        "experiment = custom\ntol = 1.5\n",
        "experiment = custom\nn_angles = 1\n",
        "experiment = custom\ngeometry = mesh\n",
        "experiment = sphere-convergence\ngeometry = kite\n",
        "experiment = kite-uq\nmodel = none\n",
        "experiment = kite-foa\nt_values =\n",
        "experiment = custom\npolarization_re = 0, 0, 0\npolarization_im = 0, 0, 0\n",
        "experiment = custom\nl0 = 1\nl = 0\n",
    ] {
        assert!(matches!(parse_config_str(text), Err(ConfigError::Invalid(_))), "{text:?}");
    }
}

#[test]
fn finest_level_follows_precisions() {
    let cfg = parse_config_str("experiment = kite-uq\nprecisions = 3, 6\n").unwrap();
    assert_eq!(cfg.l, 1);
    let cfg = parse_config_str("experiment = kite-uq\nprecisions = 3, 6\nl = 0\n").unwrap();
    assert_eq!(cfg.l, 0);
}

#[test]
fn polarization_parts_override_separately() {
    let cfg = parse_config_str("experiment = custom\npolarization_im = 0, 0, 0\n").unwrap();
    assert_eq!(cfg.polarization, [C64::new(0.0, 0.0), C64::new(2.0, 0.0), C64::new(-1.0, 0.0)]);
}

#[test]
fn defaults_round_trip() {
    for &exp in Experiment::ALL {
        let cfg = ExperimentConfig::defaults(exp);
        let text = cfg.serialize();
        assert_eq!(parse_config_str(&text).unwrap(), cfg, "{exp}");
        assert_eq!(parse_config_str(&text).unwrap().serialize(), text);
    }
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::defaults(Experiment::KiteUq);
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    b.out = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.seed = 1;
    assert_ne!(a.hash(), b.hash());
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![0.01f64..100.0, Just(1e-8), Just(0.1 + 0.2)]
}

proptest! {
    #[test]
    fn round_trip_preserves_config(
        k0 in finite(),
        eps in finite(),
        re in prop::array::uniform3(-3.0f64..3.0),
        im in prop::array::uniform3(-3.0f64..3.0),
        n_prec in 1usize..5,
        start in 0.5f64..4.0,
        t in 0.0f64..1.0,
        seed in any::<u64>(),
        runs in prop_oneof![Just(0usize), 2usize..500],
        hermitian in any::<bool>(),
        n_angles in 2usize..5000,
    ) {
        let mut cfg = ExperimentConfig::defaults(Experiment::Custom);
        cfg.k0 = k0;
        cfg.eps_r = eps;
        cfg.polarization = std::array::from_fn(|i| C64::new(re[i] + 0.5, im[i]));
        cfg.precisions = (0..n_prec).map(|i| start * (1.0 + i as f64) * 1.37).collect();
        cfg.l = n_prec - 1;
        cfg.t = t;
        cfg.seed = seed;
        cfg.mc_runs = runs;
        cfg.hermitian = hermitian;
        cfg.n_angles = n_angles;
        cfg.out = "some dir/out".into();
        cfg.validate().unwrap();
        let back = parse_config_str(&cfg.serialize()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
