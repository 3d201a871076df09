use std::path::Path;

use covdbm_harness::manifest::MANIFEST_FILE;
use covdbm_harness::{
    emit_summary, load_initial_data, run_experiment, CheckStatus, ExperimentConfig, HarnessError, InitialSource, Pipeline,
    RunManifest, RunStatus,
};

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

const DBM_SMALL: &str = r#"
pipeline = "dbm"
seed = 11
output = "run"
ensemble_size = 2
dims = { m = 4, n = 4 }
initial = { source = "gaussian" }
[time]
t = 0.05
dt = 0.001
record_every = 10
"#;

#[test]
fn small_dbm_run_writes_paths_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), DBM_SMALL);
    let manifest = run_experiment(&cfg).unwrap();
    let out = dir.path().join("run");
    assert!(out.join(MANIFEST_FILE).is_file());
    assert_eq!(manifest.status, RunStatus::Complete);
    assert_eq!(manifest.artifacts.len(), 2);
    for a in &manifest.artifacts {
        assert!(a.path.starts_with("dbm_path_"));
        // initial record plus one every 10 steps
        assert_eq!(a.rows, 6);
        assert!(out.join(&a.path).is_file());
    }
    assert!(manifest.checks.iter().all(|c| c.status == CheckStatus::Pass));
    assert_eq!(RunManifest::read(&out).unwrap(), manifest);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != MANIFEST_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
pipeline = "full"
seed = 3
output = "a"
ensemble_size = 2
dims = { m = 30, n = 24 }
initial = { source = "gaussian" }
[time]
t = 0.1
dt = 0.002
[schedule]
enforce = false
steps = 100
[correlation]
min_count = 1.0
"#;
    let a = config(dir.path(), body);
    let mut b = a.clone();
    b.output = "b".into();
    let ma = run_experiment(&a).unwrap();
    let mb = run_experiment(&b).unwrap();
    let json = |m: &RunManifest| serde_json::to_string(&m.without_timestamps()).unwrap();
    assert_eq!(json(&ma), json(&mb));
    assert_eq!(read_all(&dir.path().join("a")), read_all(&dir.path().join("b")));

    let mut c = a.clone();
    c.output = "c".into();
    c.seed = 4;
    let mc = run_experiment(&c).unwrap();
    assert_ne!(ma.config_hash, mc.config_hash);
    assert_ne!(ma.artifacts, mc.artifacts);
}

#[test]
fn schedule_violation_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        r#"
pipeline = "shortrange"
seed = 1
output = "run"
dims = { m = 20, n = 20 }
initial = { source = "gaussian" }
[schedule]
omega0 = 0.1
omega1 = 0.5
"#,
    );
    match run_experiment(&cfg) {
        Err(HarnessError::Validation { field, .. }) => assert_eq!(field, "schedule"),
        other => panic!("expected a schedule error, got {other:?}"),
    }
    assert!(!dir.path().join("run").exists());
}

#[test]
fn invalid_fields_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("ensemble_size = 0", "ensemble_size"),
        ("[time]\nt = -1.0", "time.t"),
        ("[regularity]\nq = 1.5", "regularity.q"),
    ];
    for (extra, field) in cases {
        let body = format!(
            "pipeline = \"full\"\nseed = 1\ndims = {{ m = 8, n = 8 }}\ninitial = {{ source = \"gaussian\" }}\n{extra}\n"
        );
        let err = config(dir.path(), &body).validate().unwrap_err();
        match err {
            HarnessError::Validation { field: f, .. } => assert_eq!(f, field),
            e => panic!("{e}"),
        }
    }
    let unknown = ExperimentConfig::from_toml_str("pipeline = \"dbm\"\nseed = 1\nbogus = 2\n");
    assert!(matches!(unknown, Err(HarnessError::Parse(_))));
}

#[test]
fn config_roundtrips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), DBM_SMALL);
    let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(ExperimentConfig { base_dir: cfg.base_dir.clone(), ..again }, cfg);
    assert_eq!(Pipeline::Full.stages().len(), 6);
}

#[test]
fn initial_data_from_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.csv"), "3\n2\n1\n").unwrap();
    let mut cfg = config(dir.path(), DBM_SMALL);
    cfg.dims.m = 5;
    cfg.dims.n = 3;
    cfg.initial = InitialSource::File { path: "v.csv".into() };
    let v = load_initial_data(&cfg).unwrap();
    assert_eq!(v.norm_inf(), 3.0);

    // a diagonal block has the diagonal as its singular values
    let rows = ["2,0,0", "0,1,0", "0,0,0.5", "0,0,0", "0,0,0"].join("\n");
    std::fs::write(dir.path().join("x.csv"), rows).unwrap();
    cfg.initial = InitialSource::File { path: "x.csv".into() };
    let w = load_initial_data(&cfg).unwrap();
    assert!((w.norm_inf() - 2.0).abs() < 1e-12);

    cfg.dims.n = 4;
    assert!(load_initial_data(&cfg).is_err());
}

#[test]
fn summary_counts_rows_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), DBM_SMALL);
    cfg.ensemble_size = 1;
    let manifest = run_experiment(&cfg).unwrap();
    let out = dir.path().join("run");
    let summary = emit_summary(&out).unwrap();
    assert_eq!(summary.total_rows, manifest.artifacts.iter().map(|a| a.rows).sum::<usize>());
    assert_eq!(summary.csv.lines().count(), 1 + manifest.checks.len());
    assert!(summary.table.contains("dbm"));

    let victim = out.join(&manifest.artifacts[0].path);
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[5] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    match emit_summary(&out) {
        Err(HarnessError::Artifact { path, .. }) => assert!(path.ends_with(&manifest.artifacts[0].path)),
        other => panic!("expected an artifact error, got {other:?}"),
    }
}

#[test]
fn failed_stage_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), DBM_SMALL);
    cfg.pipeline = Pipeline::Shortrange;
    cfg.dims.m = 30;
    cfg.dims.n = 30;
    cfg.schedule.enforce = false;
    // far outside the spectrum: no bulk index set
    cfg.regularity.energy = 50.0;
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Stage { ref stage, .. } if stage == "shortrange"));
    let m = RunManifest::read(&dir.path().join("run")).unwrap();
    assert!(matches!(m.status, RunStatus::Failed { ref stage, .. } if stage == "shortrange"));
}

#[test]
fn shipped_configs_validate() {
    for name in ["dbm.toml", "full.toml"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
        ExperimentConfig::load(&path).unwrap().validate().unwrap();
    }
}
