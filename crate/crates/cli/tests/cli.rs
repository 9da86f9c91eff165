use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn mmrisk(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mmrisk"));
    cmd.args(args).env_remove("MMRISK_WORKERS").env_remove("RUST_LOG");
    if let Some(w) = workers {
        cmd.env("MMRISK_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_model(dir: &tempfile::TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("model.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn rows(csv_text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (head, body)
}

#[test]
fn ruin_golden_model_a() {
    let a = data("model_a.toml");
    let o = mmrisk(&["ruin", "--model", a.to_str().unwrap(), "--x", "0,1,2"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, body) = rows(&stdout(&o));
    assert_eq!(head, ["x", "phi_1"]);
    let expected = [0.5, 0.5 * (-1.0f64).exp(), 0.5 * (-2.0f64).exp()];
    for (row, want) in body.iter().zip(expected) {
        let got: f64 = row[1].parse().unwrap();
        assert!((got - want).abs() < 1e-5, "{got} vs {want}");
    }
}

#[test]
fn asymptotics_model_a_constants() {
    let a = data("model_a.toml");
    let o = mmrisk(&["asymptotics", "--model", a.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, body) = rows(&stdout(&o));
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    let value = |quantity: &str| -> f64 {
        let row = body.iter().find(|r| r[col("quantity")] == quantity).unwrap_or_else(|| panic!("no {quantity}"));
        row[col("value")].parse().unwrap()
    };
    assert!((value("gamma") - 1.0).abs() < 1e-8);
    assert!((value("cramer_constant") - 0.5).abs() < 1e-8);
    assert!((value("m") - 1.0).abs() < 1e-8);
    assert!((value("c2") - 4.0).abs() < 1e-8);
}

#[test]
fn validate_rejects_unprofitable_model() {
    let m = data("unprofitable.toml");
    let o = mmrisk(&["validate", "--model", m.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("net profit violated"), "{}", stderr(&o));
}

#[test]
fn validate_passes_reference_models() {
    for name in ["model_a.toml", "model_b.toml", "pareto.toml"] {
        let m = data(name);
        let o = mmrisk(&["validate", "--model", m.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0), "{name}: {}{}", stdout(&o), stderr(&o));
        assert!(!stdout(&o).contains(",fail,"));
    }
}

#[test]
fn bad_row_sum_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_model(
        &dir,
        r#"states = 2
q_matrix = [[-1.0, 1.0],
            [1.0, -0.5]]
premiums = [2.0, 1.0]
arrival_rates = [1.0, 1.0]

[[state_claims]]
family = "exponential"
params = { rate = 1.0 }

[[state_claims]]
family = "exponential"
params = { rate = 1.0 }
"#,
    );
    let o = mmrisk(&["ruin", "--model", path.to_str().unwrap(), "--x", "1"], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("row 2"), "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_family_lists_supported_ones() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_model(
        &dir,
        r#"states = 1
q_matrix = [[0.0]]
premiums = [1.0]
arrival_rates = [1.0]

[[state_claims]]
family = "cauchy"
params = { scale = 1.0 }
"#,
    );
    let o = mmrisk(&["ruin", "--model", path.to_str().unwrap(), "--x", "1"], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("cauchy"), "{err}");
    for family in ["exponential", "erlang", "pareto"] {
        assert!(err.contains(family), "{err}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let a = data("model_a.toml");
    assert_eq!(mmrisk(&["ruin", "--model", a.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(mmrisk(&["ruin", "--model", "/nonexistent.toml", "--x", "1"], None).status.code(), Some(2));
    assert_eq!(mmrisk(&["ruin", "--model", a.to_str().unwrap(), "--x", "-1"], None).status.code(), Some(2));
    assert_eq!(mmrisk(&["ruin", "--model", a.to_str().unwrap(), "--x", "1"], Some("lots")).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let b = data("model_b.toml");
    let b = b.to_str().unwrap();
    let runs: [&[&str]; 3] = [
        &["simulate", "--model", b, "--functional", "ruin", "--x", "1", "--n", "4000", "--seed", "7"],
        &["parisian", "--model", b, "--x", "0,1,2", "--zeta", "0.5"],
        &["finite-ruin", "--model", b, "--x", "1", "--t", "2", "--method", "mc", "--n", "3000"],
    ];
    for args in runs {
        let one = mmrisk(args, Some("1"));
        let again = mmrisk(args, Some("1"));
        let four = mmrisk(args, Some("4"));
        assert!(one.status.success(), "{}", stderr(&one));
        assert_eq!(one.stdout, again.stdout, "{args:?}");
        assert_eq!(one.stdout, four.stdout, "{args:?}");
    }
}

#[test]
fn out_file_matches_stdout_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let a = data("model_a.toml");
    let args = ["scale", "--model", a.to_str().unwrap(), "--extent", "1", "--step", "0.25"];
    let direct = mmrisk(&args, None);
    let mut with_out = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    let filed = mmrisk(&with_out, None);
    assert!(filed.status.success());
    assert!(filed.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.as_bytes(), direct.stdout.as_slice());
    let (head, body) = rows(&text);
    assert_eq!(head, ["x", "W_11", "Z_11"]);
    for row in body {
        let x: f64 = row[0].parse().unwrap();
        let w: f64 = row[1].parse().unwrap();
        assert!((w - (2.0 - (-x).exp())).abs() < 1e-9);
    }
}

#[test]
fn json_lines_carry_the_same_values() {
    let b = data("model_b.toml");
    let csv_out = mmrisk(&["ruin", "--model", b.to_str().unwrap(), "--x", "0,1"], None);
    let json_out = mmrisk(&["ruin", "--model", b.to_str().unwrap(), "--x", "0,1", "--format", "json-lines"], None);
    let (head, body) = rows(&stdout(&csv_out));
    let text = stdout(&json_out);
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), body.len());
    for (row, obj) in body.iter().zip(&lines) {
        let keys: Vec<&String> = obj.as_object().unwrap().keys().collect();
        assert_eq!(keys, head.iter().collect::<Vec<_>>());
        for (h, cell) in head.iter().zip(row) {
            assert_eq!(obj[h].as_f64().unwrap(), cell.parse::<f64>().unwrap());
        }
    }
}

#[test]
fn histogram_masses_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.csv");
    let a = data("model_a.toml");
    let o = mmrisk(
        &[
            "simulate", "--model", a.to_str().unwrap(), "--functional", "deficit-law", "--n", "3000",
            "--bins", "0,0.5,1,inf", "--histogram", hist.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, body) = rows(&std::fs::read_to_string(&hist).unwrap());
    assert_eq!(head, ["state", "bin_lo", "bin_hi", "mass", "se"]);
    let total: f64 = body.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    // Exp(2) deficit: P(Y ≤ 0.5) = 1 − e^{−1}.
    let first: f64 = body[0][3].parse().unwrap();
    let se: f64 = body[0][4].parse().unwrap();
    assert!((first - (1.0 - (-1.0f64).exp())).abs() < 4.0 * se);
}

#[test]
fn gerber_shiu_table_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("w.csv");
    std::fs::write(&table, "surplus,0,100\n0,1,1\n100,1,1\n").unwrap();
    let a = data("model_a.toml");
    let spec = format!("table:{}", table.display());
    let o = mmrisk(&["gerber-shiu", "--model", a.to_str().unwrap(), "--x", "1", "--penalty", &spec], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, body) = rows(&stdout(&o));
    let v: f64 = body[0][1].parse().unwrap();
    assert!((v - 0.5 * (-1.0f64).exp()).abs() < 1e-5, "{v}");
}
