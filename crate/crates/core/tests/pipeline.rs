use std::path::PathBuf;

use maghom_core::pipeline::{emit_report, ArtifactStore, CaseSelector, Pipeline, RunConfig, Stage, ARTIFACTS};
use maghom_core::Error;
use proptest::prelude::*;
use serde_json::Value;

fn shipped(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    RunConfig::load(&path).unwrap()
}

/// Example config at desk-test size.
fn small_example() -> RunConfig {
    let mut cfg = shipped("example.json");
    cfg.geometry.n = 16;
    cfg.discretization.modes = 20;
    cfg.discretization.kernel.t_end = 0.2;
    cfg
}

#[test]
fn shipped_configs_validate() {
    for name in ["example.json", "case_i.json"] {
        shipped(name).validate().unwrap();
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v: Value = serde_json::to_value(small_example()).unwrap();
    v["discretization"]["modez"] = 3.into();
    match RunConfig::from_json(&v.to_string()) {
        Err(Error::Config(msg)) => assert!(msg.contains("modez"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn invalid_values_are_rejected() {
    let mut cfg = small_example();
    cfg.discretization.fine.eps = vec![0.3];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = small_example();
    cfg.discretization.kernel.wave_cfl = 1.5;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn fingerprints_follow_stage_dependencies() {
    let base = small_example();
    let mut more_modes = base.clone();
    more_modes.discretization.modes += 1;
    assert_eq!(base.fingerprint(Stage::Cell), more_modes.fingerprint(Stage::Cell));
    assert_eq!(
        base.fingerprint(Stage::Correctors),
        more_modes.fingerprint(Stage::Correctors)
    );
    assert_ne!(base.fingerprint(Stage::Modes), more_modes.fingerprint(Stage::Modes));
    assert_ne!(base.fingerprint(Stage::Kernel), more_modes.fingerprint(Stage::Kernel));
    assert_ne!(base.fingerprint(Stage::Macro), more_modes.fingerprint(Stage::Macro));

    let mut finer = base.clone();
    finer.geometry.n = 24;
    for stage in [
        Stage::Cell,
        Stage::Modes,
        Stage::Correctors,
        Stage::Kernel,
        Stage::Macro,
    ] {
        assert_ne!(base.fingerprint(stage), finer.fingerprint(stage), "{}", stage.name());
    }
}

#[test]
fn empty_store_report_lists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ArtifactStore::open(dir.path()).unwrap();
    match emit_report(&mut store) {
        Err(Error::Missing(names)) => assert_eq!(names, ARTIFACTS.to_vec()),
        other => panic!("expected missing artifacts, got {other:?}"),
    }
}

#[test]
fn stale_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(small_example(), ArtifactStore::open(dir.path()).unwrap(), 0);
    p.run_cell().unwrap();
    p.modes(false).unwrap();

    let mut changed = small_example();
    changed.discretization.modes = 12;
    let mut q = Pipeline::new(changed, ArtifactStore::open(dir.path()).unwrap(), 0);
    match q.modes(false) {
        Err(e @ Error::Fingerprint { .. }) => assert_eq!(e.exit_code(), 4),
        other => panic!("expected a fingerprint error, got {:?}", other.map(|m| m.0.len())),
    }
    // an explicit rebuild replaces the stale artifact
    assert_eq!(q.modes(true).unwrap().0.len(), 12);
}

#[test]
fn modes_json_is_bit_identical_across_runs() {
    let bytes = || {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::new(small_example(), ArtifactStore::open(dir.path()).unwrap(), 0);
        p.modes(true).unwrap();
        let a = std::fs::read(dir.path().join("modes/modes.json")).unwrap();
        let b = std::fs::read(dir.path().join("modes/mode_0007.f64")).unwrap();
        (a, b)
    };
    assert_eq!(bytes(), bytes());
}

#[test]
fn report_contains_example_identities_and_sum_rule() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(small_example(), ArtifactStore::open(dir.path()).unwrap(), 0);
    p.run_cell().unwrap();
    p.run_kernel().unwrap();
    let r = emit_report(&mut p.store).unwrap();
    let id = &r["example_identities"];
    assert!(id["Mstar_minus_1"].as_f64().unwrap() <= 1e-8);
    assert_eq!(id["cstar"].as_f64(), Some(0.0));
    let y1 = r["Y1"].as_f64().unwrap();
    let gap = r["Mstar_minus_K1_0"].as_f64().unwrap() - y1;
    // M* - K1(0) - |Y1| is the truncation defect: nonnegative, below |Y2|
    assert!(gap >= 0.0 && gap < 1.0 - y1, "{gap}");
    assert!(r["remark_identity_defect"].as_f64().unwrap() >= 0.0);
    assert!(r["missing"].as_array().unwrap().iter().any(|m| m == "macro.csv"));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("resolvent.csv").exists());
}

#[test]
fn macro_is_unsupported_in_the_frozen_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shipped("case_i.json");
    cfg.discretization.modes = 5;
    let mut p = Pipeline::new(cfg, ArtifactStore::open(dir.path()).unwrap(), 0);
    assert_eq!(p.run_cell().unwrap().interface_rank, 2);
    match p.run_macro() {
        Err(e @ Error::Unsupported(_)) => assert_eq!(e.exit_code(), 3),
        other => panic!("expected unsupported, got {:?}", other.map(|r| r.len())),
    }
}

#[test]
fn forced_case_must_match_the_field() {
    let mut cfg = shipped("case_i.json");
    cfg.scenario.case = CaseSelector::Ii;
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(cfg, ArtifactStore::open(dir.path()).unwrap(), 0);
    assert!(matches!(p.run_cell(), Err(Error::Config(_))));
}

#[test]
fn raw_and_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ArtifactStore::open(dir.path()).unwrap();
    let v = vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI, 0.1];
    s.write_raw("x/field.f64", &v, &[1, 1, 2], 3, "fp").unwrap();
    let (back, side) = s.read_raw("x/field.f64").unwrap();
    assert_eq!(
        back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(side.dtype, "f64-le");
    let rows = vec![vec!["0.1".to_string(), "a,b".to_string()]];
    s.write_csv("t.csv", &["x", "label"], &rows, "fp").unwrap();
    let (h, r) = s.read_csv("t.csv").unwrap();
    assert_eq!(h, ["x", "label"]);
    assert_eq!(r, rows);
    assert!(s.is_fresh("t.csv", "fp").unwrap());
    assert!(matches!(s.is_fresh("t.csv", "other"), Err(Error::Fingerprint { .. })));
    // the manifest survives reopening
    let s2 = ArtifactStore::open(dir.path()).unwrap();
    assert_eq!(s2.fingerprint_of("x/field.f64"), Some("fp"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // A change of a numeric leaf moves the fingerprint of every stage that
    // depends on it.
    #[test]
    fn mutation_invalidates_downstream(which in 0usize..6, bump in 1usize..4) {
        let base = small_example();
        let mut c = base.clone();
        let first = match which {
            0 => { c.geometry.n += 2 * bump; Stage::Cell }
            1 => { c.geometry.size *= 1.0 - 0.05 * bump as f64; Stage::Cell }
            2 => { c.discretization.modes += bump; Stage::Modes }
            3 => { c.fem.cg_tol *= 0.5f64.powi(bump as i32); Stage::Correctors }
            4 => { c.discretization.kernel.wave_cfl *= 1.0 - 0.1 * bump as f64; Stage::Kernel }
            _ => { c.discretization.macro_.cells += bump; Stage::Macro }
        };
        let downstream: &[Stage] = match first {
            Stage::Cell => &[Stage::Cell, Stage::Modes, Stage::Correctors, Stage::Kernel, Stage::Macro],
            Stage::Modes | Stage::Correctors => &[first, Stage::Kernel, Stage::Macro],
            // the macro stepper works on the modes directly, not on kernel.csv
            Stage::Kernel => &[Stage::Kernel],
            _ => &[Stage::Macro],
        };
        for s in downstream {
            prop_assert_ne!(base.fingerprint(*s), c.fingerprint(*s));
        }
    }
}
