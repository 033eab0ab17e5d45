use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

const TABLE_TWO: &str = "Ped v car left frontal depressed fracture, GCS 3, ETOH";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neuroaudit"));
    c.env_remove("AUDIT_CONFIG");
    c
}

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data")
}

fn shipped() -> PathBuf {
    data().join("audit.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn results(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Writes a config pointing at the shipped data, with `rules` swapped in.
fn config_with(dir: &Path, rules: &Path, lexicon: &Path) -> PathBuf {
    let d = data();
    let body = format!(
        "[paths]\nlexicon_dir = {:?}\nrules = {:?}\ncode_table = {:?}\nalternatives = {:?}\nrecode_approvals = {:?}\n",
        lexicon,
        rules,
        d.join("tables/codes.csv"),
        d.join("tables/alternatives.txt"),
        d.join("tables/recode_approvals.txt")
    );
    let path = dir.join("audit.toml");
    fs::write(&path, body).unwrap();
    path
}

fn generate(dir: &Path, seed: u64, size: usize, noise: f64) -> PathBuf {
    let path = dir.join(format!("corpus-{seed}-{size}.csv"));
    let o = run(&["generate", "--seed", &seed.to_string(), "--size", &size.to_string(), "--noise", &noise.to_string(), "--out", s(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn classify(dir: &Path, corpus: &Path) -> PathBuf {
    let out = dir.join("results.jsonl");
    let o = run(&["classify", "--input", s(corpus), "--config", s(&shipped()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn classify_table_two_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.csv");
    fs::write(&input, format!("admission_id,date,diagnosis_code,note\n1,2014-03-01,,\"{TABLE_TWO}\"\n")).unwrap();
    let out = dir.path().join("r.jsonl");
    let o = run(&["classify", "--input", s(&input), "--config", s(&shipped()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("records\t1"));
    assert!(stdout(&o).contains("unresolved\t"));
    let r = results(&out);
    assert_eq!(r[0]["categories"], serde_json::json!(["CRANIAL:TRAUMA:SKULL FRACTURE"]));
    assert_eq!(r[0]["cause_spans"][0]["text"], "Ped v car");

    fs::write(&input, "admission_id,date,diagnosis_code,note\n").unwrap();
    let o = bin()
        .args(["classify", "--input", s(&input), "--out", s(&out)])
        .env("AUDIT_CONFIG", shipped())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn config_and_data_failures_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("gone.rules");
    let cfg = config_with(dir.path(), &missing, &data().join("lexicon"));
    let input = dir.path().join("in.csv");
    fs::write(&input, "admission_id,date,diagnosis_code,note\n").unwrap();
    let out = dir.path().join("r.jsonl");
    let o = run(&["classify", "--input", s(&input), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gone.rules"), "{}", stderr(&o));

    assert_eq!(run(&["classify", "--input", s(&input), "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["generate", "--seed", "1", "--size", "0"]).status.code(), Some(1));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,text\n1,x\n").unwrap();
    let o = run(&["classify", "--input", s(&bad), "--config", s(&shipped()), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["query", "--category", "a::b", "--results", s(&out)]).status.code(), Some(1));
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path, truth: &Path| {
        run(&["generate", "--seed", "1", "--size", "10", "--out", s(out), "--truth", s(truth)])
    };
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let (ta, tb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    assert!(args(&a, &ta).status.success());
    assert!(args(&b, &tb).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 11);
    let piped = run(&["generate", "--seed", "1", "--size", "10"]);
    assert_eq!(piped.stdout, fs::read(&a).unwrap());
}

fn report_json(dir: &Path, results: &Path, corpus: &Path, standard: &str, extra: &[&str]) -> Value {
    let out = dir.join(format!("report-{standard}.json"));
    let mut args = vec!["evaluate", "--results", s(results), "--corpus", s(corpus), "--standard", standard, "--config"];
    let cfg = shipped();
    args.push(s(&cfg));
    args.extend_from_slice(&["--report-out", s(&out)]);
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("EXACT\t"));
    serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap()
}

#[test]
fn evaluate_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 3, 120, 0.0);
    let results = classify(dir.path(), &corpus);
    let a = report_json(dir.path(), &results, &corpus, "A", &[]);
    for key in ["precision", "recall", "f_score"] {
        assert_eq!(a["report"][key], 1.0, "{key}");
    }
    let b = report_json(dir.path(), &results, &corpus, "B", &[]);
    assert!(b["standard_records"].as_u64() <= a["standard_records"].as_u64());

    // results that miss records are an error naming them
    let short = dir.path().join("short.jsonl");
    let first = fs::read_to_string(&results).unwrap().lines().next().unwrap().to_string() + "\n";
    fs::write(&short, first).unwrap();
    let o = run(&["evaluate", "--results", s(&short), "--corpus", s(&corpus), "--config", s(&shipped())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("S000002"), "{}", stderr(&o));
}

#[test]
fn query_descendants_and_linear_scan() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 11, 80, 0.0);
    let results_path = classify(dir.path(), &corpus);
    let rows = results(&results_path);
    let o = run(&["query", "--category", "SPINE", "--results", s(&results_path)]);
    assert!(o.status.success());
    let got: Vec<String> = stdout(&o).lines().map(String::from).collect();
    let expected: Vec<String> = rows
        .iter()
        .filter(|r| {
            r["categories"]
                .as_array()
                .unwrap()
                .iter()
                .any(|c| c.as_str().unwrap() == "SPINE" || c.as_str().unwrap().starts_with("SPINE:"))
        })
        .map(|r| r["admission_id"].as_str().unwrap().to_string())
        .collect();
    assert!(!expected.is_empty());
    assert_eq!(got, expected);

    let one = dir.path().join("one.csv");
    fs::write(&one, format!("admission_id,date,diagnosis_code,note\n7,,,\"{TABLE_TWO}\"\n")).unwrap();
    let o = run(&["query", "--category", "CRANIAL:TRAUMA", "--input", s(&one), "--config", s(&shipped())]);
    assert_eq!(stdout(&o), "7\n");
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(&["query", "--category", "CRANIAL", "--results", s(&empty)]);
    assert!(o.status.success() && o.stdout.is_empty());
}

#[test]
fn validate_reports() {
    let o = run(&["validate", "--config", s(&shipped())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("OK"));

    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("lexicon");
    fs::create_dir(&lex).unwrap();
    for entry in fs::read_dir(data().join("lexicon")).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, lex.join(p.file_name().unwrap())).unwrap();
    }
    let extra = lex.join("zz_extra.lex");
    fs::write(&extra, "# extra\nburr hole | | DOMAIN_CONCEPT | procedure\nburr hole | | DOMAIN_CONCEPT | procedure\n").unwrap();
    let rules = dir.path().join("x.rules");
    let mut text = fs::read_to_string(data().join("rules/starter.rules")).unwrap();
    text.push_str("\n[rule extension]\ncategory=SPINE:DEGENERATIVE:STENOSIS\ntriggers=stenosis\n");
    fs::write(&rules, text).unwrap();
    let cfg = config_with(dir.path(), &rules, &lex);
    let o = run(&["validate", "--config", s(&cfg)]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{out}");
    let dup = out.lines().find(|l| l.contains("duplicate")).unwrap();
    assert!(dup.contains("zz_extra.lex:2") && dup.contains("zz_extra.lex:3"), "{dup}");
    assert!(out.contains("warning: rule extension"), "{out}");

    fs::write(&extra, "burr hole | | DOMAIN_CONCEPT | procedure\n").unwrap();
    let o = run(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("1 warning"));
}

struct Server(Child, u16);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start(state: &Path, corpus: &Path) -> Server {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .args(["serve", "--port", &port.to_string(), "--state", s(state), "--corpus", s(corpus), "--config", s(&shipped())])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.starts_with("listening"), "{line}");
    Server(child, port)
}

fn http(port: u16, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nX-Reviewer-Id: cli-test\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let status = response[9..12].parse().unwrap();
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

fn json_body(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap()
}

#[test]
fn served_metrics_equal_offline_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), 21, 20, 0.2);
    let results = classify(dir.path(), &corpus);
    let state = dir.path().join("state");
    let server = start(&state, &corpus);
    let ids: Vec<String> = results_ids(&results);
    for (i, id) in ids.iter().enumerate() {
        let body = match i % 4 {
            0 => r#"{"action":"OVERRIDE","categories":["SPINE:TRAUMA"]}"#,
            1 => r#"{"action":"DEFER"}"#,
            _ => r#"{"action":"ACCEPT"}"#,
        };
        let (code, _) = http(server.1, "POST", &format!("/records/{id}/decision"), body);
        assert_eq!(code, 200);
    }
    let (code, export) = http(server.1, "GET", "/export/decisions", "");
    assert_eq!(code, 200);
    let decisions = dir.path().join("decisions.jsonl");
    fs::write(&decisions, export).unwrap();
    for standard in ["A", "B", "C"] {
        let (_, served) = http(server.1, "GET", &format!("/metrics?standard={standard}"), "");
        let served = json_body(&served);
        let offline = report_json(dir.path(), &results, &corpus, standard, &["--decisions", s(&decisions)]);
        assert_eq!(served["data"]["report"], offline["report"], "{standard}");
        assert_eq!(served["data"]["decided"], offline["decided"]);
    }
    drop(server);

    // accepting everything drives precision to 100%
    let state2 = dir.path().join("state2");
    let server = start(&state2, &corpus);
    for id in &ids {
        http(server.1, "POST", &format!("/records/{id}/decision"), r#"{"action":"ACCEPT"}"#);
    }
    let (_, m) = http(server.1, "GET", "/metrics?standard=A", "");
    assert_eq!(json_body(&m)["data"]["precision"], 1000);
}

fn results_ids(path: &Path) -> Vec<String> {
    results(path)
        .iter()
        .map(|r| r["admission_id"].as_str().unwrap().to_string())
        .collect()
}
