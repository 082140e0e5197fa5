use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_holistat"));
    cmd.env_remove("HOLISTAT_WORKERS");
    cmd
}

fn run_ok(args: &[&str], workers: Option<&str>) -> serde_json::Value {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("HOLISTAT_WORKERS", w);
    }
    let out = cmd.output().expect("spawn holistat");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary JSON on stdout")
}

fn run_err(args: &[&str]) -> serde_json::Value {
    let out = bin().args(args).output().expect("spawn holistat");
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.lines().last().expect("error line on stderr"))
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {line}"))
}

fn synth_demo(dir: &Path) -> (String, String, String) {
    let data = dir.join("data");
    run_ok(
        &["synth", "--preset", "demo", "--seed", "42", "--out", data.to_str().unwrap()],
        None,
    );
    (
        data.join("metrics.csv").to_str().unwrap().to_string(),
        data.join("jobs.csv").to_str().unwrap().to_string(),
        data.join("inventory.csv").to_str().unwrap().to_string(),
    )
}

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root");
                out.insert(
                    rel.to_str().expect("utf-8 path").to_string(),
                    std::fs::read(&path).expect("readable file"),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn report_is_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (metrics, jobs, inventory) = synth_demo(tmp.path());

    let mut outputs = Vec::new();
    for (label, workers) in [("w1", "1"), ("w8", "8")] {
        let out_dir = tmp.path().join(label);
        run_ok(
            &[
                "report",
                "--metrics",
                &metrics,
                "--jobs",
                &jobs,
                "--inventory",
                &inventory,
                "--seed",
                "7",
                "--epochs",
                "3",
                "--hidden-size",
                "4",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            Some(workers),
        );
        outputs.push(collect_files(&out_dir));
    }
    let (a, b) = (&outputs[0], &outputs[1]);

    let names_a: Vec<&String> = a.keys().collect();
    let names_b: Vec<&String> = b.keys().collect();
    assert_eq!(names_a, names_b, "artifact sets differ between worker counts");
    assert!(a.keys().any(|k| k.ends_with(".csv")));
    assert!(a.keys().any(|k| k.ends_with(".json")));
    assert!(a.keys().any(|k| k.ends_with(".hstrace")));
    assert!(a.contains_key("index.md"));

    for (name, bytes_a) in a {
        let bytes_b = &b[name];
        if name.ends_with(".svg") {
            // Figures are content-checked rather than held to bit-exactness.
            let (text_a, text_b) = (
                std::str::from_utf8(bytes_a).expect("svg utf-8"),
                std::str::from_utf8(bytes_b).expect("svg utf-8"),
            );
            assert!(text_a.starts_with("<svg"), "{name} is not an svg");
            assert_eq!(
                text_a.matches("<rect").count(),
                text_b.matches("<rect").count(),
                "{name}: shape counts differ"
            );
            assert_eq!(
                text_a.matches("<polyline").count(),
                text_b.matches("<polyline").count(),
                "{name}: line counts differ"
            );
        } else {
            assert_eq!(bytes_a, bytes_b, "{name}: bytes differ between worker counts");
        }
    }

    // Every figure ships a CSV twin alongside it.
    for name in a.keys().filter(|n| n.ends_with(".svg")) {
        let dir = Path::new(name).parent().unwrap();
        let has_twin = a
            .keys()
            .any(|k| Path::new(k).parent() == Some(dir) && k.ends_with(".csv"));
        assert!(has_twin, "{name} has no CSV sibling");
    }
}

#[test]
fn synth_then_correlate_recovers_planted_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let (metrics, _, _) = synth_demo(tmp.path());
    let out_dir = tmp.path().join("corr");
    run_ok(
        &["correlate", "--metrics", &metrics, "--out", out_dir.to_str().unwrap()],
        Some("2"),
    );

    let truth: serde_json::Value = serde_json::from_slice(
        &std::fs::read(tmp.path().join("data/ground_truth.json")).unwrap(),
    )
    .unwrap();
    let always_planted: Vec<(String, String, String, String)> = truth["planted_pairs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["active_days"].is_null())
        .map(|p| {
            (
                p["pair"][0]["node_id"].as_str().unwrap().to_string(),
                p["pair"][0]["metric_name"].as_str().unwrap().to_string(),
                p["pair"][1]["node_id"].as_str().unwrap().to_string(),
                p["pair"][1]["metric_name"].as_str().unwrap().to_string(),
            )
        })
        .collect();

    let persistence: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("persistence.json")).unwrap()).unwrap();
    let recovered: Vec<(String, String, String, String)> = persistence["persistent"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            (
                p["node_a"].as_str().unwrap().to_string(),
                p["metric_a"].as_str().unwrap().to_string(),
                p["node_b"].as_str().unwrap().to_string(),
                p["metric_b"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    assert_eq!(recovered, always_planted, "persistence must equal the always-on planted pairs");

    // The day-one-only coupling shows up in that day's strong set but not
    // the intersection.
    let per_day = persistence["per_day"].as_array().unwrap();
    assert_eq!(per_day.len(), 2);
    assert_eq!(per_day[0]["strong_pairs"], 2);
    assert_eq!(per_day[1]["strong_pairs"], 1);
}

#[test]
fn ingest_empty_file_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, b"").unwrap();
    let err = run_err(&[
        "ingest",
        "--metrics",
        empty.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["file"], empty.to_str().unwrap());
    assert_eq!(err["line"], 1);
}

#[test]
fn malformed_row_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.csv");
    std::fs::write(&path, "timestamp,node,metric,value\n0,n1,load1,0.5\n15,n1,load1,oops\n")
        .unwrap();
    let err = run_err(&[
        "ingest",
        "--metrics",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["line"], 3);
    assert_eq!(err["column"], 4);

    std::fs::write(&path, "timestamp,node,metric,value\n0,n1,load1,0.5\n0,n1,load1,0.6\n")
        .unwrap();
    let err = run_err(&[
        "ingest",
        "--metrics",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["line"], 3, "duplicate timestamp blamed on the repeated row");
}

#[test]
fn predict_constant_signal_reports_zero_losses() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("flat.csv");
    let mut text = String::from("timestamp,node,metric,value\n");
    for i in 0..1_200i64 {
        text.push_str(&format!("{},n1,flat,0\n", i * 15));
    }
    std::fs::write(&path, text).unwrap();

    let out_dir = tmp.path().join("study");
    run_ok(
        &[
            "predict",
            "--metrics",
            path.to_str().unwrap(),
            "--granularities",
            "15,600",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        Some("2"),
    );
    let table = std::fs::read_to_string(out_dir.join("study.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "granularity_s,input_steps,windows_used,windows_dropped,eval_loss,best"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row[4], "0", "constant signal must train to zero loss: {row:?}");
    }
    assert_eq!(rows[0][0], "15");
    assert_eq!(rows[1][0], "600");
    assert_eq!(rows.iter().filter(|r| r[5] == "true").count(), 1);
}

#[test]
fn invalid_worker_settings_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.csv");
    std::fs::write(&path, "timestamp,node,metric,value\n0,n1,load1,0.5\n").unwrap();

    let out = bin()
        .args([
            "ingest",
            "--metrics",
            path.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .env("HOLISTAT_WORKERS", "zero")
        .output()
        .expect("spawn holistat");
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap())
            .unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn figure_twin_matches_persistence_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (metrics, _, _) = synth_demo(tmp.path());
    let out_dir = tmp.path().join("corr");
    run_ok(
        &["correlate", "--metrics", &metrics, "--out", out_dir.to_str().unwrap()],
        Some("3"),
    );

    let persistence: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("persistence.json")).unwrap()).unwrap();
    let twin = std::fs::read_to_string(out_dir.join("fig_persistence.csv")).unwrap();
    let rows: Vec<Vec<String>> = twin
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let per_day = persistence["per_day"].as_array().unwrap();
    assert_eq!(rows.len(), per_day.len());
    for (row, day) in rows.iter().zip(per_day) {
        assert_eq!(row[0], day["day"].as_str().unwrap());
        assert_eq!(row[1], day["strong_pairs"].to_string());
        assert_eq!(
            row[2],
            persistence["persistent"].as_array().unwrap().len().to_string()
        );
    }
}

#[test]
fn clean_splits_at_pivot() {
    let tmp = tempfile::tempdir().unwrap();
    let metrics = tmp.path().join("m.csv");
    let mut text = String::from("timestamp,node,metric,value\n");
    for i in 0..200i64 {
        // Smooth ramp plus wiggle so cleanup keeps the series.
        text.push_str(&format!("{},n1,load1,{}\n", i * 60, (i % 7) as f64 * 0.1));
    }
    std::fs::write(&metrics, &text).unwrap();
    let jobs = tmp.path().join("j.csv");
    std::fs::write(
        &jobs,
        "job_id,user_id,submit,start,end,cores,state,is_ml,nodes\n\
         a,u1,0,10,400,4,COMPLETED,false,n1\n\
         b,u1,5000,6000,7000,8,FAILED,false,n1\n",
    )
    .unwrap();
    let inventory = tmp.path().join("i.csv");
    std::fs::write(&inventory, "node,rack,cores,is_ml\nn1,r0,64,false\n").unwrap();

    let out_dir = tmp.path().join("out");
    let summary = run_ok(
        &[
            "clean",
            "--metrics",
            metrics.to_str().unwrap(),
            "--jobs",
            jobs.to_str().unwrap(),
            "--inventory",
            inventory.to_str().unwrap(),
            "--pivot",
            "6000",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        Some("1"),
    );
    assert_eq!(summary["split"]["jobs_before"], 1);
    assert_eq!(summary["split"]["jobs_after"], 1);
    assert!(out_dir.join("before/trace.hstrace").exists());
    assert!(out_dir.join("after/trace.hstrace").exists());
    assert!(out_dir.join("before/jobs.csv").exists());
    assert!(out_dir.join("after/jobs.csv").exists());
}

#[test]
fn anomaly_flags_planted_spike_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (metrics, jobs, inventory) = synth_demo(tmp.path());
    let out_dir = tmp.path().join("anom");
    run_ok(
        &[
            "anomaly",
            "--metrics",
            &metrics,
            "--jobs",
            &jobs,
            "--inventory",
            &inventory,
            "--node",
            "r0-00",
            "--metric",
            "load1",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        Some("2"),
    );
    let truth: serde_json::Value = serde_json::from_slice(
        &std::fs::read(tmp.path().join("data/ground_truth.json")).unwrap(),
    )
    .unwrap();
    let spike_ts = truth["injections"][0]["timestamp"].as_i64().unwrap();
    let table = std::fs::read_to_string(out_dir.join("anomalies.csv")).unwrap();
    assert!(
        table.lines().any(|l| l.starts_with(&format!("r0-00,load1,{spike_ts},"))),
        "planted spike at {spike_ts} not flagged"
    );
}
