use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

fn mini(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/mini")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn utilsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_utilsel"))
        .args(args)
        .env_remove("UTILSEL_API_KEY")
        .output()
        .unwrap()
}

fn path(dir: &Path, rest: &str) -> String {
    dir.join(rest).to_string_lossy().into_owned()
}

fn inputs() -> Vec<String> {
    ["--corpus", &mini("corpus.jsonl"), "--queries", &mini("queries.jsonl"), "--run", &mini("run.trec")]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn run_with(cmd: &str, extra: &[&str]) -> Output {
    let mut args: Vec<String> = vec![cmd.into()];
    args.extend(inputs());
    args.extend(extra.iter().map(|s| s.to_string()));
    utilsel(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

/// Chat-completions stand-in: ranks nothing, selects the first passage.
fn mock_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let text = String::from_utf8_lossy(&body);
            let content = if text.contains("Selected:") { "Draft answer.\\nSelected: [1]" } else { "[2] > [1]" };
            let payload = format!(r#"{{"choices":[{{"message":{{"role":"assistant","content":"{content}"}}}}]}}"#);
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    format!("http://{addr}/v1")
}

fn oracle_args(out: &str, parallel: &str) -> Vec<String> {
    [
        "--judge", "oracle", "--qrels", &mini("qrels.txt"), "--depth", "30", "--w", "10", "--s", "5", "--parallel",
        parallel, "--out", out,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn rerank_with_oracle_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (i, par) in ["1", "6"].iter().enumerate() {
        let out = path(tmp.path(), &format!("o{i}"));
        let args = oracle_args(&out, par);
        let res = run_with("rerank", &args.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        runs.push(PathBuf::from(out));
    }
    assert_eq!(read(runs[0].join("run.trec")), read(runs[1].join("run.trec")));
    assert_eq!(read(runs[0].join("trace.jsonl")), read(runs[1].join("trace.jsonl")));
    let run = read(runs[0].join("run.trec"));
    assert_eq!(run.lines().count(), 600);
    assert!(run.lines().next().unwrap().ends_with(" 1 1 utilsel"));

    let manifest: serde_json::Value = serde_json::from_str(&read(runs[0].join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "rerank");
    assert_eq!(manifest["params"]["geometry"]["depth"], 30);
    assert_eq!(manifest["params"]["geometry"]["window"], 10);
    assert_eq!(manifest["params"]["geometry"]["stride"], 5);
    assert_eq!(manifest["inputs"]["run"]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["aborted"].as_array().unwrap().is_empty());
}

#[test]
fn select_with_oracle_matches_positive_qrels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "sel");
    let args = oracle_args(&out, "4");
    let res = run_with("select", &args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(res.status.code(), Some(0));
    let gold: Vec<serde_json::Value> =
        read(mini("evidence.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let lines: Vec<serde_json::Value> =
        read(Path::new(&out).join("selection.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 20);
    for (line, g) in lines.iter().zip(&gold) {
        let mut sel: Vec<&str> = line["selected"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        sel.sort();
        let want: Vec<&str> = g["evidence"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(sel, want);
        let windows = line["windows"].as_u64().unwrap();
        assert!((3..=5).contains(&windows), "windows {windows}");
    }
}

#[test]
fn endpoint_down_is_partial_failure() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "down");
    let url = format!("http://127.0.0.1:{port}/v1");
    let res = run_with(
        "rerank",
        &["--judge", "endpoint", "--endpoint-url", &url, "--model", "m", "--max-retries", "0", "--timeout-secs", "2", "--depth", "20", "--out", &out],
    );
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("aborted 20 queries"), "{stderr}");
    assert!(stderr.contains("q01") && stderr.contains("q20"));
    let manifest: serde_json::Value = serde_json::from_str(&read(Path::new(&out).join("manifest.json"))).unwrap();
    assert_eq!(manifest["aborted"].as_array().unwrap().len(), 20);
    assert_eq!(read(Path::new(&out).join("run.trec")), "");
    let trace = read(Path::new(&out).join("trace.jsonl"));
    assert!(trace.lines().all(|l| l.contains(r#""status":"aborted""#)));
}

#[test]
fn endpoint_transcript_replays_byte_identically() {
    let url = mock_endpoint();
    let tmp = tempfile::tempdir().unwrap();
    let transcript = path(tmp.path(), "transcript.jsonl");
    let live = path(tmp.path(), "live");
    let replay = path(tmp.path(), "replay");
    let geometry = ["--depth", "12", "--w", "6", "--s", "3"];

    let mut args = vec!["--judge", "endpoint", "--endpoint-url", &url, "--model", "m", "--transcript", &transcript, "--out", &live];
    args.extend(geometry);
    let res = run_with("select", &args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(read(&transcript).lines().count() >= 20);

    let mut args = vec!["--judge", "replay", "--transcript", &transcript, "--out", &replay];
    args.extend(geometry);
    let res = run_with("select", &args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["selection.jsonl", "trace.jsonl"] {
        assert_eq!(read(Path::new(&live).join(f)), read(Path::new(&replay).join(f)), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(Path::new(&replay).join("manifest.json"))).unwrap();
    assert_eq!(manifest["inputs"]["transcript"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn replay_miss_aborts_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let transcript = path(tmp.path(), "empty.jsonl");
    std::fs::write(&transcript, "").unwrap();
    let out = path(tmp.path(), "o");
    let res = run_with("rerank", &["--judge", "replay", "--transcript", &transcript, "--out", &out]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn evaluate_names_missing_gold() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "ev");
    let res = utilsel(&["evaluate", "--predictions", &mini("predictions.jsonl"), "--out", &out]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--answers"));

    let res = utilsel(&["evaluate", "--run", &mini("run.trec"), "--ndcg-k", "10", "--out", &out]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--qrels"));

    let res = utilsel(&["evaluate", "--run", &mini("run.trec"), "--k", "5", "--out", &out]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--evidence"));
}

#[test]
fn evaluate_writes_all_metric_families() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "ev");
    let res = utilsel(&[
        "evaluate", "--run", &mini("run.trec"), "--qrels", &mini("qrels.txt"), "--ndcg-k", "10", "--ndcg-k", "5",
        "--k", "10", "--evidence", &mini("evidence.jsonl"), "--predictions", &mini("predictions.jsonl"),
        "--answers", &mini("answers.jsonl"), "--out", &out,
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let tsv = read(Path::new(&out).join("report.tsv"));
    let header = tsv.lines().next().unwrap();
    assert!(header.contains("em") && header.contains("evidence_f1") && header.contains("ndcg@5") && header.contains("ndcg@10"));
    assert_eq!(tsv.lines().count(), 22);
    let report: serde_json::Value = serde_json::from_str(&read(Path::new(&out).join("report.json"))).unwrap();
    assert_eq!(report["ndcg"].as_array().unwrap().len(), 2);
}

#[test]
fn annotate_with_oracle_teacher() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "ann");
    let res = run_with(
        "annotate",
        &["--judge", "oracle", "--qrels", &mini("qrels.txt"), "--kind", "selection", "--depth", "20", "--out", &out],
    );
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let train = read(Path::new(&out).join("train.jsonl"));
    assert_eq!(train.lines().count(), 20);
    let first: serde_json::Value = serde_json::from_str(train.lines().next().unwrap()).unwrap();
    let messages = first["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 3);
    assert_eq!(messages[2]["role"], "assistant");
    assert!(messages[2]["content"].as_str().unwrap().contains("\nSelected: "));
    assert_eq!(read(Path::new(&out).join("rejected.jsonl")), "");
}

#[test]
fn simulate_endpoints() {
    for (profile, mean) in [("never", "mean 5.0000"), ("always", "mean 9.0000")] {
        let res = utilsel(&["simulate", "--profile", profile, "--trials", "500", "--seed", "7"]);
        assert_eq!(res.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&res.stdout).contains(mean));
    }
    let tmp = tempfile::tempdir().unwrap();
    let hist = path(tmp.path(), "hist.json");
    std::fs::write(&hist, r#"{"counts": {"0": 0.5, "2": 0.3, "25": 0.2}}"#).unwrap();
    let res = utilsel(&["simulate", "--profile", &hist]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("exceeds window"));

    std::fs::write(&hist, r#"{"counts": {"0": 0.5, "2": 0.3, "8": 0.2}}"#).unwrap();
    let out = path(tmp.path(), "sim");
    let res = utilsel(&["simulate", "--profile", &hist, "--trials", "10000", "--seed", "7", "--out", &out]);
    assert_eq!(res.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&read(Path::new(&out).join("report.json"))).unwrap();
    let mean = report["mean_windows"].as_f64().unwrap();
    assert!((5.0..=9.0).contains(&mean));
}

#[test]
fn unreadable_inputs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "o");
    let res = utilsel(&[
        "rerank", "--corpus", "/nonexistent/c.jsonl", "--queries", &mini("queries.jsonl"), "--run", &mini("run.trec"),
        "--judge", "oracle", "--qrels", &mini("qrels.txt"), "--out", &out,
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("corpus"));
    let res = utilsel(&["rerank", "--bogus"]);
    assert_eq!(res.status.code(), Some(1));
}
