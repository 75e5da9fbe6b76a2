use std::process::{Command, Output};

fn p2b(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_p2b"))
        .args(args)
        .env_remove("P2B_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn build_encoder_reports_grid_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.json");
    let out = p2b(&["build-encoder", "--d", "3", "--q", "1", "--k", "6", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("n=66\n") && text.contains("k=6\n"), "{text}");
    let json: serde_like::Value = serde_like::parse(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(json.centroid_count, 6);

    let path = dir.path().join("full.json");
    let out = p2b(&["build-encoder", "--d", "2", "--k", "11", "--out", path.to_str().unwrap()]);
    assert!(stdout(&out).contains("min_cluster_size=1\n"));
}

/// Counts centroid rows without pulling in a JSON dependency.
mod serde_like {
    pub struct Value {
        pub centroid_count: usize,
    }

    pub fn parse(text: &str) -> Value {
        let start = text.find("\"centroids\"").expect("centroids field");
        let body = &text[start..];
        let open = body.find('[').unwrap();
        let mut depth = 0;
        let mut rows = 0;
        for ch in body[open..].chars() {
            match ch {
                '[' => {
                    depth += 1;
                    if depth == 2 {
                        rows += 1;
                    }
                }
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                _ => {}
            }
        }
        Value { centroid_count: rows }
    }
}

#[test]
fn build_encoder_rejects_k_above_grid_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.json");
    let out = p2b(&["build-encoder", "--d", "2", "--k", "12", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C(10^q + d - 1, d - 1)"));
}

#[test]
fn privacy_table() {
    let out = p2b(&["privacy", "--p", "0.5,0.25,0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "p,epsilon_bar,epsilon,l,omega_c,delta,delta_ok");
    assert!(rows[1].starts_with("0,0,0,"));
    let eps: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!((eps[1] - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((eps[2] - 2f64.ln()).abs() < 1e-12);

    assert_eq!(p2b(&["privacy", "--p", "0.5,1"]).status.code(), Some(2));
    let with_delta = stdout(&p2b(&["privacy", "--p", "0.5", "--l", "23", "--users", "3000"]));
    assert!(with_delta.lines().nth(1).unwrap().ends_with(",false"));
}

#[test]
fn run_validation_lists_every_field() {
    let out = p2b(&["run", "--k", "99999", "--batch", "0", "--cb-sampling-rate", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["k:", "batch:", "cb_sampling_rate:"] {
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn run_defaults_and_setting_filter() {
    let out = p2b(&["run", "--users", "300", "--k", "12", "--d", "3", "--batch", "100", "--setting", "cold"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("setting,seed,x,metric,value"));
    for line in lines {
        if let Some(privacy) = line.strip_prefix("# privacy ") {
            assert!(privacy.contains("epsilon=0.6931471805599453"));
        } else {
            assert!(line.starts_with("cold,0,"), "{line}");
        }
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "# small run\nd=3\nk=12\nusers=300\nbatch=100\nseed=5\nsetting=cold\n").unwrap();
    let out = p2b(&["run", "--config", config.to_str().unwrap(), "--seed", "6"]);
    assert!(out.status.success());
    assert!(stdout(&out).lines().nth(1).unwrap().starts_with("cold,6,"));

    std::fs::write(&config, "d=3\nbogus=1\n").unwrap();
    assert_eq!(p2b(&["run", "--config", config.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let out = p2b(&["run", "--env", "multilabel", "--data", "/nonexistent/data.csv", "--d", "3", "--k", "12"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn batch_log_records_refined_batches() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("batches.log");
    let out = p2b(&[
        "run", "--users", "300", "--k", "12", "--d", "3", "--batch", "100", "--cb-context-threshold", "2",
        "--setting", "warm-private", "--batch-log", log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(log).unwrap();
    let headers: Vec<&str> = text.lines().filter(|l| l.starts_with("# batch=")).collect();
    assert_eq!(headers.len(), 3);
    assert!(headers[0].starts_with("# batch=1 threshold=2 dropped="));
    assert!(text.lines().filter(|l| !l.starts_with('#')).all(|l| l.split(',').count() == 3));
}
