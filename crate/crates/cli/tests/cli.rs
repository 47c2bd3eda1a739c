mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

use common::*;
use serde_json::Value;
use tempfile::TempDir;

fn rewrite_args<'a>(input: &'a str, output: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "rewrite",
        "-i",
        input,
        "-o",
        output,
        "--clip-min",
        "0",
        "--clip-max",
        "3",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn fixed_length_rewrite_reports_exact_spend() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    // 7 tokens: the quick farmer walked near a lake
    write_docs(
        &input,
        &["The quick farmer walked near a lake", "A child slept.", ""],
    );
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &["--epsilon", "10", "--workers", "2"],
    ));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let records = read_records(&output);
    assert_eq!(records.len(), 3);
    assert_eq!(records[0]["tokens_in"], 7);
    assert_eq!(records[0]["total_epsilon"], 70.0);
    for r in &records {
        assert_eq!(r["tokens_in"], r["tokens_out"]);
        assert_eq!(r["eps_per_token"], 10.0);
        assert!(r.get("error").is_none());
    }
    assert_eq!(records[2]["private_text"], "");
    assert_eq!(stdout_json(&out)["records"], 3);
}

#[test]
fn repeated_runs_match_except_timestamp() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    write_docs(
        &input,
        &[
            "The old farmer walked near a lake.",
            "The young teacher waited.",
        ],
    );
    let mut manifests = Vec::new();
    let mut outputs = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let output = dir.path().join(name);
        let out = dpmlm(rewrite_args(
            input.to_str().unwrap(),
            output.to_str().unwrap(),
            &[
                "--seed",
                "11",
                "--add-prob",
                "0.2",
                "--del-prob",
                "0.1",
                "--epsilon",
                "25,50",
            ],
        ));
        assert_eq!(code(&out), 0);
        outputs.push(fs::read(&output).unwrap());
        let mut m: Value =
            serde_json::from_slice(&fs::read(manifest_path(&output)).unwrap()).unwrap();
        m.as_object_mut().unwrap().remove("timestamp_unix");
        m["plan"].as_object_mut().unwrap().remove("output");
        manifests.push(m);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[0]["plan"]["seed"], 11);
    assert_eq!(
        manifests[0]["plan"]["epsilons"],
        serde_json::json!([25.0, 50.0])
    );
}

#[test]
fn variable_length_flags_route_to_insertions_and_deletions() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    let lines = dpmlm::scorer::builtin::toy_corpus_lines();
    write_docs(&input, &lines[..40]);
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &["--epsilon", "20", "--add-prob", "0.3", "--del-prob", "0.2"],
    ));
    assert_eq!(code(&out), 0);
    let records = read_records(&output);
    let added: u64 = records
        .iter()
        .map(|r| r["tokens_added"].as_u64().unwrap())
        .sum();
    let deleted: u64 = records
        .iter()
        .map(|r| r["tokens_deleted"].as_u64().unwrap())
        .sum();
    assert!(added > 0 && deleted > 0);
    for r in &records {
        let n = r["tokens_in"].as_u64().unwrap();
        let (a, d) = (
            r["tokens_added"].as_u64().unwrap(),
            r["tokens_deleted"].as_u64().unwrap(),
        );
        assert_eq!(r["tokens_out"].as_u64().unwrap(), n + a - d);
        let replaced = r["tokens_replaced"].as_u64().unwrap();
        assert_eq!(
            r["total_epsilon"].as_f64().unwrap(),
            20.0 * (replaced + a) as f64
        );
        assert!(r["total_epsilon"].as_f64().unwrap() <= 2.0 * 20.0 * n as f64);
    }
}

#[test]
fn stopwords_pass_through() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    write_docs(&input, &["it was the same as they had"]);
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &["--epsilon", "1", "--skip-stopwords"],
    ));
    assert_eq!(code(&out), 0);
    let r = &read_records(&output)[0];
    assert_eq!(r["private_text"], "it was the same as they had");
    assert_eq!(r["total_epsilon"], 0.0);
    assert_eq!(r["tokens_skipped"], 7);

    let words = dir.path().join("stop.txt");
    fs::write(&words, "# custom list\nfarmer lake\n").unwrap();
    write_docs(&input, &["farmer near lake"]);
    let flag = format!("--skip-stopwords={}", words.display());
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &["--epsilon", "1", &flag],
    ));
    assert_eq!(code(&out), 0);
    let r = &read_records(&output)[0];
    let private: Vec<&str> = r["private_text"].as_str().unwrap().split(' ').collect();
    assert_eq!((private[0], private[2]), ("farmer", "lake"));
    assert_eq!(r["total_epsilon"], 1.0);
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    let lines = dpmlm::scorer::builtin::toy_corpus_lines();
    write_docs(&input, &lines[..25]);
    assert_eq!(
        code(&dpmlm(rewrite_args(
            input.to_str().unwrap(),
            output.to_str().unwrap(),
            &["--seed", "3"]
        ))),
        0
    );
    let manifest = manifest_path(&output);
    let replayed = dir.path().join("replayed.jsonl");
    let out = dpmlm([
        "replay",
        manifest.to_str().unwrap(),
        "-o",
        replayed.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(fs::read(&output).unwrap(), fs::read(&replayed).unwrap());

    let mut m: Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    m["plan"]["seed"] = 4.into();
    fs::write(&manifest, m.to_string()).unwrap();
    let out = dpmlm([
        "replay",
        manifest.to_str().unwrap(),
        "-o",
        replayed.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout_json(&out)["output_matches"], false);
}

#[test]
fn calibration_file_drives_rewrite() {
    let dir = TempDir::new().unwrap();
    let cal = dir.path().join("cal.json");
    let out = dpmlm([
        "calibrate",
        "--samples",
        "500",
        "--seed",
        "1",
        "-o",
        cal.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let c: Value = serde_json::from_slice(&fs::read(&cal).unwrap()).unwrap();
    let (mu, sigma) = (c["mu"].as_f64().unwrap(), c["sigma"].as_f64().unwrap());
    assert_eq!(c["c_min"].as_f64().unwrap(), mu);
    assert!((c["c_max"].as_f64().unwrap() - (mu + 4.0 * sigma)).abs() < 1e-12);

    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    write_docs(&input, &["The old farmer walked."]);
    let args = [
        "rewrite",
        "-i",
        input.to_str().unwrap(),
        "-o",
        output.to_str().unwrap(),
    ];
    let out = dpmlm(
        args.iter()
            .copied()
            .chain(["--calibration", cal.to_str().unwrap()]),
    );
    assert_eq!(code(&out), 0);
    let m: Value = serde_json::from_slice(&fs::read(manifest_path(&output)).unwrap()).unwrap();
    assert_eq!(m["plan"]["calibration"]["count"], c["count"]);
    assert_eq!(m["plan"]["clip"]["c_max"], c["c_max"]);
}

#[test]
fn calibrate_gaussian_backend() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for path in [&a, &b] {
        let out = dpmlm([
            "calibrate",
            "--scorer",
            "gaussian:0,1,64,5",
            "--samples",
            "100000",
            "--seed",
            "2",
            "-o",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c: Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert!(c["count"].as_u64().unwrap() >= 100_000);
    let c_max = c["c_max"].as_f64().unwrap();
    assert!((c_max - 4.0).abs() / 4.0 < 0.02, "c_max {c_max}");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    write_docs(&input, &["a b"]);
    let (i, o) = (input.to_str().unwrap(), output.to_str().unwrap());

    let cases: Vec<Vec<&str>> = vec![
        vec![
            "rewrite",
            "-i",
            i,
            "-o",
            o,
            "--clip-min",
            "0",
            "--clip-max",
            "1",
            "--calibration",
            "x.json",
        ],
        vec!["rewrite", "-i", i, "-o", o],
        vec![
            "rewrite",
            "-i",
            i,
            "-o",
            o,
            "--clip-min",
            "1",
            "--clip-max",
            "1",
        ],
        vec![
            "rewrite",
            "-i",
            i,
            "-o",
            o,
            "--clip-min",
            "0",
            "--clip-max",
            "1",
            "--epsilon",
            "0",
        ],
        vec![
            "rewrite",
            "-i",
            i,
            "-o",
            o,
            "--clip-min",
            "0",
            "--clip-max",
            "1",
            "--add-prob",
            "1.5",
        ],
        vec![
            "rewrite",
            "-i",
            i,
            "-o",
            o,
            "--clip-min",
            "0",
            "--clip-max",
            "1",
            "--rerank-alpha",
            "0.003",
        ],
        vec![
            "rewrite",
            "-i",
            "/nonexistent.jsonl",
            "-o",
            o,
            "--clip-min",
            "0",
            "--clip-max",
            "1",
        ],
        vec![
            "calibrate",
            "--scorer",
            "constant:1.5,8",
            "--samples",
            "100",
        ],
        vec!["calibrate", "--scorer", "nonsense"],
        vec!["verify", "--vocab-size", "20", "--context-length", "5"],
        vec!["verify", "--epsilon", "-1"],
    ];
    for args in cases {
        let out = dpmlm(&args);
        assert_eq!(
            code(&out),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = dpmlm([
        "calibrate",
        "--scorer",
        "constant:1.5,8",
        "--samples",
        "100",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("variance"));
}

#[test]
fn malformed_input_is_strict_unless_lenient() {
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    fs::write(
        &input,
        "{\"id\":\"a\",\"text\":\"the farmer\"}\n{\"id\":\"b\"}\n",
    )
    .unwrap();
    let base = [
        "rewrite",
        "-i",
        input.to_str().unwrap(),
        "-o",
        output.to_str().unwrap(),
        "--clip-min",
        "0",
        "--clip-max",
        "2",
    ];
    let out = dpmlm(base);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = dpmlm(base.iter().copied().chain(["--lenient"]));
    assert_eq!(code(&out), 0);
    assert_eq!(read_records(&output).len(), 5);
}

#[test]
fn unreachable_remote_exits_3() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let dir = TempDir::new().unwrap();
    let (input, output) = (dir.path().join("in.jsonl"), dir.path().join("out.jsonl"));
    write_docs(&input, &["a b"]);
    let scorer = format!("remote:127.0.0.1:{port}");
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &["--scorer", &scorer],
    ));
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &["--scorer", "remote:stdio:/nonexistent/scorer"],
    ));
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_outcomes() {
    let out = dpmlm(["verify", "--mc-draws", "20000"]);
    assert_eq!(code(&out), 0);
    let r = stdout_json(&out);
    assert_eq!(r["ldp"]["pass"], true);
    assert_eq!(r["ldp"]["contexts"], 512);
    assert!(r["ldp"]["max_log_ratio"].as_f64().unwrap() <= 5.0 + 1e-9);

    let out = dpmlm([
        "verify",
        "--epsilon",
        "0.001",
        "--clip-min",
        "-50",
        "--clip-max",
        "50",
        "--mc-draws",
        "0",
    ]);
    assert_eq!(code(&out), 0);

    let out = dpmlm(["verify", "--break-clipping", "--mc-draws", "0"]);
    assert_eq!(code(&out), 1);
    let r = stdout_json(&out);
    assert_eq!(r["pass"], false);
    assert!(r["ldp"]["witness"]["context"].is_array());
    assert_eq!(r["witness_log_ratio"], r["ldp"]["max_log_ratio"]);
}

#[test]
fn eval_self_join_and_missing_ids() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_docs(
        &a,
        &[
            "The old farmer walked near a lake.",
            "A child slept.",
            "Good film!",
        ],
    );
    let out = dpmlm([
        "eval",
        "--original",
        a.to_str().unwrap(),
        "--privatized",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let m = stdout_json(&out);
    assert_eq!(m["bleu_mean"], 1.0);
    assert_eq!(m["records"], 3);
    assert!(m["cs_mean"].is_null());

    write_docs(
        &b,
        &["The old farmer walked near a lake.", "A child slept."],
    );
    let out = dpmlm([
        "eval",
        "--original",
        a.to_str().unwrap(),
        "--privatized",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("doc-002"));
}

#[test]
fn eval_groups_sweep_by_epsilon() {
    let dir = TempDir::new().unwrap();
    let (input, output, metrics) = (
        dir.path().join("in.jsonl"),
        dir.path().join("out.jsonl"),
        dir.path().join("m.json"),
    );
    let lines = dpmlm::scorer::builtin::toy_corpus_lines();
    write_docs(&input, &lines[..30]);
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &[],
    ));
    assert_eq!(code(&out), 0);
    assert_eq!(read_records(&output).len(), 150);
    let out = dpmlm([
        "eval",
        "--original",
        input.to_str().unwrap(),
        "--privatized",
        output.to_str().unwrap(),
        "-o",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let m: Value = serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    let eps: Vec<f64> = m["per_epsilon"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["eps_per_token"].as_f64().unwrap())
        .collect();
    assert_eq!(eps, vec![10.0, 25.0, 50.0, 100.0, 250.0]);
    // rewrite's own summary agrees with eval
    let rewrite_summary = stdout_json(&dpmlm(rewrite_args(
        input.to_str().unwrap(),
        output.to_str().unwrap(),
        &[],
    )));
    assert_eq!(rewrite_summary, m);
}

#[test]
fn stdio_server_is_a_drop_in_scorer() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    let lines = dpmlm::scorer::builtin::toy_corpus_lines();
    write_docs(&input, &lines[..20]);
    let (local, remote) = (
        dir.path().join("local.jsonl"),
        dir.path().join("remote.jsonl"),
    );
    let scorer = format!("remote:stdio:{BIN} serve --stdio");
    let flags = [
        "--seed",
        "5",
        "--epsilon",
        "30",
        "--add-prob",
        "0.1",
        "--del-prob",
        "0.1",
    ];
    assert_eq!(
        code(&dpmlm(rewrite_args(
            input.to_str().unwrap(),
            local.to_str().unwrap(),
            &flags
        ))),
        0
    );
    let mut remote_flags = flags.to_vec();
    remote_flags.extend(["--scorer", scorer.as_str()]);
    let out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        remote.to_str().unwrap(),
        &remote_flags,
    ));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&local).unwrap(), fs::read(&remote).unwrap());
}

#[test]
fn tcp_server_is_a_drop_in_scorer() {
    let mut server = Command::new(BIN)
        .args(["serve", "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("listen banner")
        .to_string();

    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    write_docs(&input, &dpmlm::scorer::builtin::toy_corpus_lines()[..20]);
    let (local, remote) = (
        dir.path().join("local.jsonl"),
        dir.path().join("remote.jsonl"),
    );
    let scorer = format!("remote:{addr}");
    let local_out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        local.to_str().unwrap(),
        &["--workers", "4"],
    ));
    let remote_out = dpmlm(rewrite_args(
        input.to_str().unwrap(),
        remote.to_str().unwrap(),
        &["--workers", "4", "--scorer", &scorer],
    ));
    let _ = server.kill();
    let _ = server.wait();
    assert_eq!(code(&local_out), 0);
    assert_eq!(
        code(&remote_out),
        0,
        "{}",
        String::from_utf8_lossy(&remote_out.stderr)
    );
    assert_eq!(fs::read(&local).unwrap(), fs::read(&remote).unwrap());
}
