use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn mcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcr")).args(args).output().unwrap()
}

fn mcr_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_mcr"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    index: PathBuf,
}

impl Fixture {
    fn new(files: &[(&str, &str)]) -> Self {
        let dir = TempDir::new().unwrap();
        let corpus = dir.path().join("corpus");
        fs::create_dir(&corpus).unwrap();
        for (name, body) in files {
            fs::write(corpus.join(format!("{name}.txt")), body).unwrap();
        }
        let index = dir.path().join("index.mcrx");
        let out = mcr(&["build", "--corpus", s(&corpus), "--index", s(&index)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir, index }
    }

    fn overlap_pair() -> Self {
        Self::new(&[("d1", "a b"), ("d2", "b c")])
    }

    fn nested_pair() -> Self {
        Self::new(&[("d1", "a"), ("d2", "a b")])
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn idx(&self) -> &str {
        s(&self.index)
    }
}

#[test]
fn build_prints_summary() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c");
    fs::create_dir(&corpus).unwrap();
    fs::write(corpus.join("d1.txt"), "a b").unwrap();
    fs::write(corpus.join("d2.txt"), "b c").unwrap();
    let index = dir.path().join("i");
    let out = mcr(&["build", "--corpus", s(&corpus), "--index", s(&index)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "2 documents, 3 words, 4 tokens\n");
    assert!(fs::read_to_string(&index).unwrap().starts_with("{\"format\":\"MCRX-1\""));
}

#[test]
fn rebuild_is_byte_identical() {
    let f = Fixture::overlap_pair();
    let first = fs::read(&f.index).unwrap();
    let again = f.dir.path().join("again");
    let out = mcr(&["build", "--corpus", s(&f.dir.path().join("corpus")), "--index", s(&again)]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(&again).unwrap(), first);
}

#[test]
fn build_from_jsonl_and_errors() {
    let dir = TempDir::new().unwrap();
    let index = dir.path().join("i");
    let jsonl = dir.path().join("c.jsonl");
    fs::write(&jsonl, "{\"id\":\"x\",\"title\":\"X\",\"text\":\"one two\"}\n").unwrap();
    assert_eq!(code(&mcr(&["build", "--corpus", s(&jsonl), "--index", s(&index)])), 0);

    fs::write(&jsonl, "{\"id\":\"x\",\"text\":\"one\"}\n{not json\n").unwrap();
    let out = mcr(&["build", "--corpus", s(&jsonl), "--index", s(&index)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&mcr(&["build", "--corpus", s(&empty), "--index", s(&index)])), 3);

    let punct = dir.path().join("punct");
    fs::create_dir(&punct).unwrap();
    fs::write(punct.join("p.txt"), "?!. ,,").unwrap();
    assert_eq!(code(&mcr(&["build", "--corpus", s(&punct), "--index", s(&index)])), 3);

    let missing = dir.path().join("missing");
    assert_eq!(code(&mcr(&["build", "--corpus", s(&missing), "--index", s(&index)])), 1);
}

#[test]
fn query_with_self_on_overlap_pair() {
    let f = Fixture::overlap_pair();
    let doc = f.file("d1.txt", "a b");
    let out = mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--include-self"]);
    assert_eq!(code(&out), 0);
    let rows: Vec<Vec<String>> = stdout(&out)
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect();
    assert_eq!(rows, vec![vec!["1", "d1", "100.0"], vec!["2", "d2", "18.0"]]);
}

#[test]
fn query_excludes_self_by_default() {
    let f = Fixture::overlap_pair();
    let doc = f.file("d1.txt", "a b");
    let out = mcr(&["query", "--index", f.idx(), "--doc", s(&doc)]);
    assert_eq!(code(&out), 0);
    let labels: Vec<String> = stdout(&out)
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().to_string())
        .collect();
    assert_eq!(labels, vec!["d2"]);
}

#[test]
fn query_from_stdin_and_unscorable() {
    let f = Fixture::overlap_pair();
    let out = mcr_stdin(&["query", "--index", f.idx(), "--doc", "-"], "b c");
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).lines().next().unwrap().contains("d2"));

    let punct = f.file("p.txt", "... !!! ,");
    assert_eq!(code(&mcr(&["query", "--index", f.idx(), "--doc", s(&punct)])), 4);

    let unknown = f.file("u.txt", "zebra yak");
    let out = mcr(&["query", "--index", f.idx(), "--doc", s(&unknown)]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains('2'));

    let missing = f.dir.path().join("nope.txt");
    assert_eq!(code(&mcr(&["query", "--index", f.idx(), "--doc", s(&missing)])), 1);
}

#[test]
fn watch_line_reports_word_signal() {
    let f = Fixture::overlap_pair();
    let doc = f.file("d1.txt", "a b");
    let out = mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--include-self", "--watch", "a"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let line = text.lines().find(|l| l.starts_with("watch\t")).unwrap();
    let fields: Vec<&str> = line.split('\t').collect();
    assert_eq!(fields[1], "a");
    let value: f64 = fields[2].parse().unwrap();
    assert!((value - 0.54931).abs() < 5e-6, "{value}");
}

#[test]
fn tsv_round_trips_and_matches_human_order() {
    let f = Fixture::new(&[
        ("alpha", "river stone river light. Stone path."),
        ("beta", "light river garden"),
        ("gamma", "stone stone garden path path"),
        ("delta", "ocean wave"),
    ]);
    let doc = f.file("q.txt", "river stone path garden light");
    let tsv = stdout(&mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--tsv"]));
    let human = stdout(&mcr(&["query", "--index", f.idx(), "--doc", s(&doc)]));
    let tsv_labels: Vec<&str> = tsv.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
    let human_labels: Vec<&str> = human.lines().map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(tsv_labels, human_labels);
    assert_eq!(tsv_labels.len(), 3);

    let kb = mcr::load_index(&f.index).unwrap();
    let source = mcr::Source::from_text("river stone path garden light", &kb).unwrap();
    let ranking = mcr::similarity::rank_source(source, &kb, kb.attention(), &mcr::RankConfig::default()).unwrap();
    for (line, r) in tsv.lines().zip(&ranking.results) {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[3].parse::<f64>().unwrap().to_bits(), r.percent.to_bits());
        assert_eq!(fields[4].parse::<f64>().unwrap().to_bits(), r.pair.s.to_bits());
        assert_eq!(fields[5].parse::<f64>().unwrap().to_bits(), r.pair.t.to_bits());
    }
}

#[test]
fn attention_file_changes_ranking() {
    let f = Fixture::new(&[("x", "apple banana"), ("y", "apple cherry"), ("z", "banana cherry")]);
    let doc = f.file("q.txt", "apple banana cherry");
    let before = stdout(&mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--tsv"]));
    let rules = f.file("att.json", "{\"y\": 5.0, \"nosuch\": 2.0}");
    let out = mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--tsv", "--attention", s(&rules)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nosuch"));
    let after = stdout(&out);
    assert_ne!(before, after);
    assert_eq!(after.lines().next().unwrap().split('\t').nth(1), Some("y"));

    let bad = f.file("bad.json", "[1,2]");
    assert_eq!(
        code(&mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--attention", s(&bad)])),
        2
    );
}

#[test]
fn compare_shows_asymmetry() {
    let f = Fixture::nested_pair();
    let out = mcr(&["compare", "--index", f.idx(), "--a", "d1", "--b", "d2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((value("T(a->b)\t") - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((value("S(b->a)\t") - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);

    let same = stdout(&mcr(&["compare", "--index", f.idx(), "--a", "d1", "--b", "d1"]));
    assert!(same.contains("percent\t100.0"), "{same}");

    assert_eq!(code(&mcr(&["compare", "--index", f.idx(), "--a", "d1", "--b", "nonexistent"])), 5);
}

#[test]
fn compare_accepts_files() {
    let f = Fixture::nested_pair();
    let doc = f.file("other.txt", "a a b");
    let out = mcr(&["compare", "--index", f.idx(), "--a", s(&doc), "--b", "d2"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn trace_rows() {
    let f = Fixture::overlap_pair();
    let out = mcr(&["trace", "--index", f.idx(), "--source", "d1", "--dest", "d1", "--level", "sentence"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split('\t').collect();
    assert_eq!(fields[0], "1");
    assert!((fields[1].parse::<f64>().unwrap() - 0.89588).abs() < 5e-6);
    assert_eq!(fields[2], "a b");

    let none = mcr(&[
        "trace", "--index", f.idx(), "--source", "d1", "--dest", "d1", "--level", "paragraph", "--top", "0",
    ]);
    assert_eq!(code(&none), 0);
    assert!(stdout(&none).is_empty());

    let article = mcr(&["trace", "--index", f.idx(), "--source", "d1", "--dest", "d1", "--level", "article"]);
    assert_eq!(code(&article), 64);
    assert_eq!(
        code(&mcr(&["trace", "--index", f.idx(), "--source", "d1", "--dest", "zz", "--level", "sentence"])),
        5
    );
}

#[test]
fn scl_demo_runs() {
    let dir = TempDir::new().unwrap();
    let kb = dir.path().join("actions.jsonl");
    let out = mcr(&["scl-demo", "--kb", s(&kb), "--start", "0,0", "--target", "0,0"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("sequence: \n") || text.contains("sequence:\n"), "{text}");
    assert!(text.contains("exit: threshold"), "{text}");

    let out = mcr(&["scl-demo", "--kb", s(&kb), "--start", "0,0", "--target", "2,1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let seq = text.lines().find_map(|l| l.strip_prefix("sequence: ")).unwrap();
    assert_eq!(seq.split_whitespace().count(), 3, "{text}");
    assert!(text.contains("exit: threshold"));
    assert!(fs::read_to_string(&kb).unwrap().contains("\"comp\""));

    let out = mcr(&["scl-demo", "--kb", s(&kb), "--start", "-3,-2", "--target", "-1,-1"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("endpoint: -1,-1"));
}

#[test]
fn scl_demo_learns_and_rejects_jumps() {
    let dir = TempDir::new().unwrap();
    let kb = dir.path().join("actions.jsonl");
    fs::write(
        &kb,
        "{\"t\":\"prim\",\"label\":\"U\",\"dx\":0,\"dy\":1}\n{\"t\":\"prim\",\"label\":\"D\",\"dx\":0,\"dy\":-1}\n",
    )
    .unwrap();
    let demo = dir.path().join("demo.txt");
    fs::write(&demo, "0,0\n0,1\n0,2\n-1,2\n").unwrap();
    let out = mcr(&["scl-demo", "--kb", s(&kb), "--learn", s(&demo), "--start", "0,0", "--target", "-1,2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("learned primitive L"), "{text}");
    assert!(text.contains("learned S1 = U U L"), "{text}");

    let jump = dir.path().join("jump.txt");
    fs::write(&jump, "0,0\n0,1\n2,1\n").unwrap();
    let before = fs::read(&kb).unwrap();
    let out = mcr(&["scl-demo", "--kb", s(&kb), "--learn", s(&jump), "--start", "0,0", "--target", "0,0"]);
    assert_eq!(code(&out), 6);
    assert_eq!(fs::read(&kb).unwrap(), before);
}

#[test]
fn stats_on_overlap_pair() {
    let f = Fixture::overlap_pair();
    let out = mcr(&["stats", "--index", f.idx()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let get = |key: &str| -> String {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}\t")))
            .unwrap()
            .to_string()
    };
    assert_eq!(get("documents"), "2");
    assert_eq!(get("words"), "3");
    assert_eq!(get("tokens"), "4");
    assert_eq!(get("weight_min").parse::<f64>().unwrap(), 2f64.ln());
    assert_eq!(get("weight_max").parse::<f64>().unwrap(), 3f64.ln());
    assert_eq!(get("nodes_article"), "2");
    assert_eq!(stdout(&mcr(&["stats", "--index", f.idx()])), text);

    assert_eq!(code(&mcr(&["stats", "--index", ""])), 1);
    assert_eq!(code(&mcr(&["stats", "--index", s(&f.dir.path().join("missing"))])), 1);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&mcr(&[])), 64);
    assert_eq!(code(&mcr(&["frobnicate"])), 64);
    assert_eq!(code(&mcr(&["stats"])), 64);
    assert_eq!(code(&mcr(&["stats", "--index", "x", "--bogus"])), 64);
    assert_eq!(code(&mcr(&["--help"])), 0);
    assert_eq!(code(&mcr(&["--version"])), 0);
    let f = Fixture::overlap_pair();
    let doc = f.file("q.txt", "a");
    assert_eq!(
        code(&mcr(&["query", "--index", f.idx(), "--doc", s(&doc), "--top", "5", "--candidates", "2"])),
        64
    );
}
