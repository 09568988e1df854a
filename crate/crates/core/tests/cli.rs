//! Command-line behaviour: exit codes, configuration precedence, output shapes.

use std::path::Path;
use std::process::{Command, Output};

fn idid(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_idid"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    // keep the ambient environment from leaking into the checks
    for var in [
        "IDID_SEED",
        "IDID_CONFIG",
        "IDID_OUT",
        "IDID_OUTPUT",
        "IDID_THREADS",
        "IDID_ESTIMATOR",
    ] {
        if !envs.iter().any(|(k, _)| *k == var) {
            cmd.env_remove(var);
        }
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["simulate", "--seed", "3", "--output", &path];
    args.extend(extra);
    stdout(&idid(&args, &[]));
    path
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        idid(&["estimate"], &[]).status.code(),
        Some(2),
        "missing input"
    );
    assert_eq!(idid(&["estimate", "--bogus"], &[]).status.code(), Some(2));
    assert_eq!(
        idid(&["estimate", "--input", "/no/such/file.csv"], &[])
            .status
            .code(),
        Some(3)
    );
    let e1 = simulate(dir.path(), "e1.csv", &["--exp", "1", "--n", "400"]);
    assert_eq!(
        idid(&["estimate", "--input", &e1, "--alpha", "1.5"], &[])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        idid(&["estimate", "--input", &e1, "--outcome", "x9"], &[])
            .status
            .code(),
        Some(3)
    );
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sede = 1\n").unwrap();
    let o = idid(&["--config", bad.to_str().unwrap(), "estimate"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));
}

#[test]
fn flag_beats_env_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "seed = 5\nestimator = \"dml\"\n").unwrap();
    let f = file.to_str().unwrap();
    let get = |o: &Output, key: &str| {
        let text = stdout(o);
        let cfg: toml::Value = toml::from_str(&text).unwrap();
        cfg[key].to_string()
    };
    let o = idid(&["--config", f, "--print-config", "estimate"], &[]);
    assert_eq!(
        (get(&o, "seed"), get(&o, "estimator")),
        ("5".into(), "\"dml\"".into())
    );
    let o = idid(
        &["--config", f, "--print-config", "estimate"],
        &[("IDID_SEED", "6")],
    );
    assert_eq!(get(&o, "seed"), "6");
    let o = idid(
        &["--config", f, "--print-config", "estimate", "--seed", "7"],
        &[("IDID_SEED", "6")],
    );
    assert_eq!(get(&o, "seed"), "7");
    assert_eq!(get(&o, "estimator"), "\"dml\"");
}

#[test]
fn printed_config_reproduces_itself() {
    let dir = tempfile::tempdir().unwrap();
    let first = stdout(&idid(
        &[
            "--print-config",
            "aggregate",
            "--scheme",
            "es:0..2",
            "--bands",
            "--group-col",
            "g",
            "--folds",
            "3",
        ],
        &[],
    ));
    let file = dir.path().join("dump.toml");
    std::fs::write(&file, &first).unwrap();
    let second = stdout(&idid(
        &[
            "--config",
            file.to_str().unwrap(),
            "--print-config",
            "aggregate",
        ],
        &[],
    ));
    assert_eq!(first, second);
}

#[test]
fn simulate_stdout_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), "e2.csv", &["--exp", "2", "--n", "300"]);
    let printed = stdout(&idid(
        &["simulate", "--seed", "3", "--exp", "2", "--n", "300"],
        &[],
    ));
    assert_eq!(printed, std::fs::read_to_string(&path).unwrap());
    assert!(Path::new(&format!("{path}.latent.csv")).exists());
}

#[test]
fn estimate_and_aggregate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let e2 = simulate(dir.path(), "e2.csv", &["--exp", "2", "--n", "2000"]);
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&idid(&["estimate", "--input", &e2], &[]))).unwrap();
    assert_eq!(json["cells"].as_array().unwrap().len(), 10);
    assert_eq!(json["control"], "never-exposed");

    // without never-exposed units the last cohort serves only as a control
    let nye = simulate(
        dir.path(),
        "nye.csv",
        &["--exp", "2", "--n", "2000", "--control", "nye"],
    );
    let csv = stdout(&idid(
        &[
            "estimate",
            "--input",
            &nye,
            "--control",
            "nye",
            "--out",
            "csv",
        ],
        &[],
    ));
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(csv.starts_with("e,t,estimator,control,tau,se"));

    let agg = stdout(&idid(
        &[
            "aggregate",
            "--input",
            &e2,
            "--scheme",
            "es:0..2",
            "--bands",
            "--bootstrap",
            "199",
            "--out",
            "csv",
        ],
        &[],
    ));
    let mut rows = csv::Reader::from_reader(agg.as_bytes());
    let header = rows.headers().unwrap().clone();
    let lo = header.iter().position(|h| h == "band_lo").unwrap();
    let plo = header.iter().position(|h| h == "pointwise_lo").unwrap();
    let recs: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 3);
    for r in recs {
        assert!(r[lo].parse::<f64>().unwrap() <= r[plo].parse::<f64>().unwrap());
    }

    let g = simulate(
        dir.path(),
        "g.csv",
        &["--exp", "2", "--n", "3000", "--group"],
    );
    let out = stdout(&idid(
        &[
            "aggregate",
            "--input",
            &g,
            "--group-col",
            "group",
            "--scheme",
            "es:0",
        ],
        &[],
    ));
    let blocks: serde_json::Value = serde_json::from_str(&out).unwrap();
    let labels: Vec<&str> = blocks
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["0", "1", "0 - 1"]);
}

#[test]
fn montecarlo_tables() {
    let o = stdout(&idid(
        &[
            "montecarlo",
            "--paper",
            "exp1",
            "--Bmc",
            "3",
            "--n",
            "500",
            "--estimators",
            "dr,reg",
            "--out",
            "csv",
        ],
        &[],
    ));
    let mut rdr = csv::Reader::from_reader(o.as_bytes());
    assert!(rdr.headers().unwrap().iter().any(|h| h == "Av. Bias"));
    assert_eq!(rdr.records().count(), 4 * 2);
    let o = stdout(&idid(
        &[
            "montecarlo",
            "--paper",
            "exp3",
            "--Bmc",
            "2",
            "--n",
            "1000",
            "--out",
            "csv",
        ],
        &[],
    ));
    assert!(o.starts_with("e,t,LATT,LATT SD,Oracle"));
    let o = idid(&["montecarlo", "--paper", "exp1", "--group"], &[]);
    assert_eq!(o.status.code(), Some(2));
}
