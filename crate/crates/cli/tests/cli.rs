use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsevar"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_then_estimate_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(
        dir.path(),
        "sim.cfg",
        "command = simulate\nseed = 3\n[scenario]\ndgp = example2\nd = 4\ns = 2\nrho = 0.6\nn = 200\n",
    );
    let out = bin().arg("--config").arg(&sim).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(series.starts_with("# sparsevar "));
    assert!(series.contains("# config-sha256: "));

    let est = format!(
        "command = estimate\nseed = 1\n[estimate]\nseries = {}\ntruth = {}\np = 1\n[estimator.row]\nmethod = row-lasso\nmodifications = TSA\n[estimator.dz]\nmethod = row-dantzig\n",
        dir.path().join("series.csv").display(),
        dir.path().join("model.txt").display()
    );
    let est = write(dir.path(), "est.cfg", &est);
    let out = bin().arg("--config").arg(&est).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = fs::read_to_string(dir.path().join("model_row.txt")).unwrap();
    assert!(model.contains("# var-model v1") && model.contains("Sigma:"));
    let criteria = fs::read_to_string(dir.path().join("criteria.csv")).unwrap();
    let rows: Vec<&str> = criteria.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "estimator,criterion,value");
    assert_eq!(rows.len(), 7);
    for r in &rows[1..] {
        let v: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.is_finite(), "{r}");
    }
}

#[test]
fn seed_flag_overrides_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.cfg",
        "command = simulate\nseed = 3\n[scenario]\ndgp = example1\nvariant = DM\nn = 50\n",
    );
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let st = bin().arg("simulate").arg("--config").arg(&cfg).arg("--seed").arg(seed).arg("--out").arg(&out_dir).status().unwrap();
        assert!(st.success());
        fs::read(out_dir.join("series.csv")).unwrap()
    };
    assert_eq!(run("8", "a"), run("8", "b"));
    assert_ne!(run("8", "a"), run("9", "c"));
}

#[test]
fn exit_codes_follow_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "a.cfg", "command = benchmark\nseed = 1\n[scenario]\ndgp = example2\nd = 3\ns = 1\nrho = 0.5\n[estimator.x]\nmethod = row-lasso\nlamda = 3\n");
    let out = bin().arg("--config").arg(&bad_key).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_grid"));

    let missing = write(dir.path(), "b.cfg", "command = estimate\n[estimate]\nseries = /nonexistent/series.csv\n[estimator.x]\nmethod = row-lasso\n");
    let out = bin().arg("--config").arg(&missing).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let garbage = write(dir.path(), "s.csv", "t,x1\n1,abc\n");
    let cfg = format!("command = estimate\n[estimate]\nseries = {}\n[estimator.x]\nmethod = row-lasso\n", garbage.display());
    let cfg = write(dir.path(), "c.cfg", &cfg);
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn benchmark_writes_table_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.cfg",
        "command = benchmark\nseed = 4\n[scenario]\ndgp = example2\nd = 4\ns = 1\nrho = 0.6\nn = 60\nreplications = 3\n[estimator.row]\nmethod = row-lasso\nmodifications = SA\n",
    );
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path()).arg("--threads").arg("2").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("benchmark.csv")).unwrap();
    assert!(text.contains("# seed: 4"));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "scenario,estimator,criterion,mean,se,failures,R,seed");
    assert_eq!(body.len(), 5);
    assert!(dir.path().join("failures.csv").exists());
}
