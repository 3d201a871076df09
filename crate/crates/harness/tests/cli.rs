use std::process::Command;

fn covdbm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covdbm"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "pipeline = \"dbm\"\nseed = 1\ndims = { m = 4, n = 4 }\ninitial = { source = \"gaussian\" }\n[time]\nt = 0.01\ndt = 0.001\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let ok = covdbm().args(["simulate", "--threads", "1", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("manifest.json").is_file());

    let report = covdbm().args(["report", "--csv", "--out"]).arg(&out).output().unwrap();
    assert_eq!(report.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&report.stdout).starts_with("pipeline,check,statistic,tolerance,status"));

    let missing = covdbm().args(["simulate", "--config"]).arg(dir.path().join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "pipeline = \"dbm\"\nseed = 1\ndims = { m = 4, n = 4 }\ninitial = { source = \"gaussian\" }\n[time]\ndt = -1.0\n").unwrap();
    let invalid = covdbm().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("time.dt"));
}
