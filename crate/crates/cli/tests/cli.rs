use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

const BIN: &str = env!("CARGO_BIN_EXE_descshelf");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_corpus_config(dir: &Path, extra: &str) -> PathBuf {
    write_config(
        dir,
        &format!(
            "seed = 7\n\
             [paths]\n\
             items = \"data/items.jsonl\"\n\
             descriptors = \"data/descriptors.jsonl\"\n\
             interactions = \"data/interactions.jsonl\"\n\
             output_dir = \"out\"\n\
             [corpus]\n\
             item_count = 120\n\
             user_count = 6\n\
             {extra}"
        ),
    )
}

fn gen_corpus(config: &Path, dir: &Path) {
    let data = dir.join("data");
    let out = run(config, &["--out-dir", data.to_str().unwrap(), "gen-corpus"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn gen_corpus_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let cfg = small_corpus_config(dir.path(), "");
        gen_corpus(&cfg, dir.path());
    }
    for f in ["items.jsonl", "descriptors.jsonl", "interactions.jsonl", "lexicon.jsonl", "genre_map.json", "templates.json"] {
        let x = fs::read(a.path().join("data").join(f)).unwrap();
        let y = fs::read(b.path().join("data").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
        assert!(!x.is_empty(), "{f} is empty");
    }
}

#[test]
fn gen_corpus_with_no_items_writes_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[corpus]\nitem_count = 0\nuser_count = 3\n");
    let out = run(&cfg, &["gen-corpus"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["items.jsonl", "descriptors.jsonl", "interactions.jsonl"] {
        assert_eq!(fs::read_to_string(dir.path().join("out").join(f)).unwrap(), "", "{f}");
    }
}

fn extract_config(dir: &Path, extra: &str) -> PathBuf {
    let fx = fixtures().join("extract");
    write_config(
        dir,
        &format!(
            "[paths]\n\
             items = {:?}\n\
             lexicon = {:?}\n\
             genre_map = {:?}\n\
             output_dir = \"out\"\n\
             {extra}",
            fx.join("items.jsonl"),
            fx.join("lexicon.jsonl"),
            fx.join("genre_map.json"),
        ),
    )
}

fn expected_descriptors() -> String {
    fs::read_to_string(fixtures().join("extract/expected_descriptors.jsonl")).unwrap()
}

#[test]
fn rule_based_extraction_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extract_config(dir.path(), "");
    let out = run(&cfg, &["extract"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("out/descriptors.jsonl")).unwrap(), expected_descriptors());
    assert_eq!(fs::read_to_string(dir.path().join("out/failures.jsonl")).unwrap(), "");
}

/// Serves `{"text": ...}` replies keyed by a marker found in the prompt.
/// Prompts matching no marker get HTTP 500.
fn stub_server(replies: Vec<(&'static str, &'static str)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        length = value.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
            let prompt = request["prompt"].as_str().unwrap_or_default();
            let reply = replies.iter().find(|(marker, _)| prompt.contains(marker));
            let (status, payload) = match reply {
                Some((_, text)) => ("200 OK", serde_json::json!({ "text": text }).to_string()),
                None => ("500 Internal Server Error", "{}".to_string()),
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    format!("http://{addr}/complete")
}

const REPLIES: [(&str, &str); 5] = [
    (
        "The Quiet Harbor",
        r#"{"Genre":["Romance"],"Setting":["Small Coastal Town"],"PersonalSituation":["Dealing with Loss"]}"#,
    ),
    (
        "Stars Between Us",
        // The named entity does not occur in the item text and is dropped.
        r#"{"Genre":["Science Fiction"],"Setting":["Outer Space"],"StoryTrope":["Enemies to Lovers"],"NamedEntity":["Galactic Senate"]}"#,
    ),
    ("Fog and Gaslight", r#"{"Setting":["Victorian London"],"Genre":["Steampunk Noir"]}"#),
    ("Friendship Weather", r#"{"Theme":["Friendship"]}"#),
    ("Plain Book", r#"{}"#),
];

#[test]
fn remote_extraction_matches_rule_based_golden() {
    let endpoint = stub_server(REPLIES.to_vec());
    let dir = tempfile::tempdir().unwrap();
    let cfg = extract_config(
        dir.path(),
        &format!("[extraction]\nbackend = \"remote_llm\"\nendpoint = {endpoint:?}\nretries = 0\n"),
    );
    let out = run(&cfg, &["extract"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("out/descriptors.jsonl")).unwrap(), expected_descriptors());
    let log = stderr(&out);
    assert!(log.contains("Galactic Senate"), "{log}");
    assert!(log.contains("Steampunk Noir"), "{log}");
}

#[test]
fn failed_remote_items_exit_with_partial_status() {
    let endpoint = stub_server(REPLIES[..4].to_vec());
    let dir = tempfile::tempdir().unwrap();
    let cfg = extract_config(
        dir.path(),
        &format!("[extraction]\nbackend = \"remote_llm\"\nendpoint = {endpoint:?}\nretries = 1\nretry_backoff_ms = 0\n"),
    );
    let out = run(&cfg, &["extract"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let failures = fs::read_to_string(dir.path().join("out/failures.jsonl")).unwrap();
    assert_eq!(failures.lines().count(), 1);
    assert!(failures.contains("\"f5\""), "{failures}");
    assert_eq!(fs::read_to_string(dir.path().join("out/descriptors.jsonl")).unwrap(), expected_descriptors());
}

#[test]
fn missing_catalog_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config(dir.path(), "");
    for cmd in ["shelves", "eval", "extract"] {
        let out = run(&cfg, &[cmd]);
        assert_eq!(out.status.code(), Some(2), "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[shelf]\ntau = 1.5\n");
    assert_eq!(run(&cfg, &["shelves"]).status.code(), Some(1));
    let cfg = write_config(dir.path(), "[shelf]\nunknown_key = 1\n");
    assert_eq!(run(&cfg, &["shelves"]).status.code(), Some(1));
    assert_eq!(run(&cfg, &["no-such-command"]).status.code(), Some(1));
    let cfg = write_config(dir.path(), "");
    assert_eq!(run(&cfg, &["--jobs", "0", "shelves"]).status.code(), Some(1));
    let cfg = write_config(dir.path(), "[extraction]\nbackend = \"remote_llm\"\n[paths]\nitems = \"items.jsonl\"\n");
    fs::write(dir.path().join("items.jsonl"), "").unwrap();
    assert_eq!(run(&cfg, &["extract"]).status.code(), Some(1));
}

#[test]
fn unknown_interaction_item_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config(dir.path(), "");
    gen_corpus(&cfg, dir.path());
    fs::write(
        dir.path().join("data/interactions.jsonl"),
        "{\"user_id\":\"u1\",\"item_id\":\"nope\",\"weight\":1.0}\n",
    )
    .unwrap();
    assert_eq!(run(&cfg, &["shelves"]).status.code(), Some(2));
}

#[test]
fn shelves_match_golden_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config(dir.path(), "");
    gen_corpus(&cfg, dir.path());
    let out = run(&cfg, &["shelves"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = fs::read_to_string(dir.path().join("out/pages.jsonl")).unwrap();
    let golden = fs::read_to_string(fixtures().join("shelves/pages.jsonl")).unwrap();
    assert_eq!(first, golden);
    assert_eq!(first.lines().count(), 6);

    let out = run(&cfg, &["shelves"]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("out/pages.jsonl")).unwrap(), first);
}

#[test]
fn no_users_give_an_empty_page_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config(dir.path(), "");
    gen_corpus(&cfg, dir.path());
    fs::write(dir.path().join("data/interactions.jsonl"), "").unwrap();
    let out = run(&cfg, &["shelves"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("out/pages.jsonl")).unwrap(), "");
}

#[test]
fn baseline_against_itself_gives_unit_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config(dir.path(), "[eval]\ntreatment = \"baseline\"\n");
    gen_corpus(&cfg, dir.path());
    let out = run(&cfg, &["eval"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let deltas = report["deltas"].as_object().unwrap();
    assert_eq!(deltas.len(), 6);
    for (name, value) in deltas {
        assert_eq!(value.as_f64(), Some(1.0), "{name}");
    }
    assert_eq!(report["baseline"]["distinct_titles_global"], 1);
    let table = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(table.contains("n/a offline"));
}

#[test]
fn descriptive_eval_reports_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config(dir.path(), "");
    gen_corpus(&cfg, dir.path());
    let out = run(&cfg, &["eval"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["treatment"]["variant"], "descriptive_shelves");
    assert_eq!(report["baseline"]["variant"], "baseline");
    assert_eq!(report["treatment"]["users"], 6);
    assert_eq!(report["treatment"]["coherence"], 1.0);
}
