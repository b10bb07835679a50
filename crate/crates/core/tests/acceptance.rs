//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails outside the documented known-red list.

use std::collections::{HashMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use mcr::activation::{collect_partitioned, directed, emit, Source, SourceRef};
use mcr::ingest::{build, ingest_document, load_corpus, reconstruct, segment, Build};
use mcr::scl::{ExitCriteria, ExitReason};
use mcr::seqdemo::{learn_demonstration, solve, ActionKb, Demonstration, GridState};
use mcr::similarity::{rank, rank_source, Scorer};
use mcr::{write_index, CombineMode, KnowledgeBase, NodeId, RankConfig, RawDocument, TokenizationRules};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

// Criteria that cannot hold under the scoring formulas. They still print
// FAIL, but only an unexpected failure makes the run exit non-zero.
const KNOWN_RED: &[(usize, &str)] = &[(
    2,
    "self is not always first: collection multiplies by the candidate's raw tf, \
     so a longer document repeating the query's words can exceed self on both T and S",
)];

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("self-similarity", self_similarity),
        ("asymmetry", asymmetry),
        ("zero-overlap nullity", zero_overlap),
        ("replication round-trip", replication),
        ("topical retrieval", topical_retrieval),
        ("determinism", determinism),
        ("scl/seqdemo", seqdemo),
        ("performance", performance),
    ];
    let mut failed = 0;
    let mut known = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => match KNOWN_RED.iter().find(|(n, _)| *n == i + 1) {
                Some((_, why)) => {
                    known += 1;
                    println!("criterion {} {name}: FAIL ({detail}) [known: {why}]", i + 1);
                }
                None => {
                    failed += 1;
                    println!("criterion {} {name}: FAIL ({detail})", i + 1);
                }
            },
        }
    }
    if known > 0 {
        println!("{known} criteria red for documented reasons");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn docs(pairs: &[(&str, &str)]) -> Vec<RawDocument> {
    pairs.iter().map(|(id, body)| RawDocument::new(*id, *body)).collect()
}

fn kb_of(documents: Vec<RawDocument>) -> KnowledgeBase {
    build(documents, TokenizationRules::default()).unwrap().kb
}

fn bundled_corpus() -> Vec<RawDocument> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/corpus100.jsonl");
    load_corpus(&path).unwrap()
}

fn all_results(kb: &KnowledgeBase, query: &SourceRef, exclude_self: bool) -> mcr::Result<Vec<mcr::RankedResult>> {
    let n = kb.article_count();
    let config = RankConfig {
        candidates: n,
        results: n,
        exclude_self,
        ..RankConfig::default()
    };
    rank(query, kb, &config).map(|r| r.results)
}

// Random corpus with explicit token lists so the oracle never has to trust
// the tokenizer.
struct RandomCorpus {
    docs: Vec<RawDocument>,
    tokens: Vec<Vec<String>>,
}

fn random_corpus(rng: &mut ChaCha8Rng) -> RandomCorpus {
    let n_docs = rng.gen_range(1..=50);
    let vocab = rng.gen_range(1..=200);
    let mut docs = Vec::new();
    let mut tokens = Vec::new();
    for i in 0..n_docs {
        let len = rng.gen_range(1..=100);
        // Squaring skews the draw toward low ids so words repeat.
        let toks: Vec<String> = (0..len)
            .map(|_| {
                let u: f64 = rng.gen();
                format!("w{}", (u * u * vocab as f64) as usize)
            })
            .collect();
        let mut body = String::new();
        for (k, t) in toks.iter().enumerate() {
            if k > 0 {
                body.push_str(match rng.gen_range(0..12) {
                    0 => ". ",
                    1 => ".\n\n",
                    2 => ", ",
                    _ => " ",
                });
            }
            body.push_str(t);
        }
        docs.push(RawDocument::new(format!("doc{i:02}"), body));
        tokens.push(toks);
    }
    RandomCorpus { docs, tokens }
}

struct Dense {
    d: usize,
    v: usize,
    tf: Vec<Vec<f64>>,
    len: Vec<f64>,
    wt: Vec<f64>,
    m_word: Vec<f64>,
    m_doc: Vec<f64>,
}

impl Dense {
    fn new(tokens: &[Vec<String>], word_index: &HashMap<String, usize>) -> Self {
        let (d, v) = (tokens.len(), word_index.len());
        let mut tf = vec![vec![0.0; v]; d];
        for (i, toks) in tokens.iter().enumerate() {
            for t in toks {
                tf[i][word_index[t]] += 1.0;
            }
        }
        let wt = (0..v)
            .map(|w| {
                let df = (0..d).filter(|&i| tf[i][w] > 0.0).count() as f64;
                if df == 0.0 {
                    0.0
                } else {
                    (1.0 + d as f64 / df).ln()
                }
            })
            .collect();
        Dense {
            d,
            v,
            len: tokens.iter().map(|t| t.len() as f64).collect(),
            tf,
            wt,
            m_word: vec![1.0; v],
            m_doc: vec![1.0; d],
        }
    }

    fn spread(&self, bag: &[f64], len: f64, onto: &[f64]) -> f64 {
        (0..self.v)
            .map(|w| bag[w] / len * self.m_word[w] * self.wt[w] * onto[w])
            .sum()
    }

    fn forward(&self, bag: &[f64], len: f64) -> Vec<f64> {
        (0..self.d)
            .map(|c| self.m_doc[c] * self.spread(bag, len, &self.tf[c]))
            .collect()
    }

    fn percent(&self, bag: &[f64], len: f64, query_doc: Option<usize>) -> Vec<f64> {
        let self_act = self.spread(bag, len, bag);
        let self_raw = self_act * self_act.ln_1p();
        let t = self.forward(bag, len);
        (0..self.d)
            .map(|c| {
                let m_q = query_doc.map_or(1.0, |q| self.m_doc[q]);
                let s = m_q * self.spread(&self.tf[c], self.len[c], bag);
                s * t[c].ln_1p() / self_raw * 100.0
            })
            .collect()
    }
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut corpora, mut maps, mut scores) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for round in 0..120 {
        let corpus = random_corpus(&mut rng);
        let kb = kb_of(corpus.docs.clone());
        let mut word_index: HashMap<String, usize> = HashMap::new();
        for t in corpus.tokens.iter().flatten() {
            let next = word_index.len();
            word_index.entry(t.clone()).or_insert(next);
        }
        let mut dense = Dense::new(&corpus.tokens, &word_index);
        let article_ids: Vec<NodeId> = corpus.docs.iter().map(|d| kb.article(&d.id).unwrap()).collect();

        if round % 2 == 1 {
            for (t, &w) in &word_index {
                if rng.gen_bool(0.3) {
                    let m = rng.gen_range(0.0..3.0);
                    dense.m_word[w] = m;
                    kb.set_attention(kb.word(t).unwrap(), m).unwrap();
                }
            }
            for (c, &a) in article_ids.iter().enumerate() {
                if rng.gen_bool(0.3) {
                    let m = rng.gen_range(0.0..3.0);
                    dense.m_doc[c] = m;
                    kb.set_attention(a, m).unwrap();
                }
            }
        }
        let attention = kb.attention();

        let mut check = |label: &str, got: f64, want: f64| -> Result<(), String> {
            let err = (got - want).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-9, "round {round} {label}: got {got} want {want}");
            Ok(())
        };

        let mut queries: Vec<(SourceRef, Vec<f64>, f64, Option<usize>)> = (0..dense.d)
            .map(|q| (SourceRef::Article(article_ids[q]), dense.tf[q].clone(), dense.len[q], Some(q)))
            .collect();
        // An external text with unknown words, which count toward its length.
        let mut bag = vec![0.0; dense.v];
        let mut text = Vec::new();
        for _ in 0..rng.gen_range(1..40) {
            if rng.gen_bool(0.2) {
                text.push(format!("unseen{}", rng.gen_range(0..5)));
            } else {
                let t = &corpus.tokens[rng.gen_range(0..dense.d)][0];
                bag[word_index[t]] += 1.0;
                text.push(t.clone());
            }
        }
        queries.push((SourceRef::Text(text.join(" ")), bag, text.len() as f64, None));

        for (query, bag, len, query_doc) in queries {
            let source = Source::resolve(&query, &kb).unwrap();
            let want_map = dense.forward(&bag, len);
            let map = collect_partitioned(&emit(&source), &kb, &attention, 1 + round % 4);
            for (c, &a) in article_ids.iter().enumerate() {
                check("activation", map.get(a), want_map[c])?;
            }
            maps += 1;

            let self_act = dense.spread(&bag, len, &bag);
            let scorer = match Scorer::new(source, &kb, attention.clone(), CombineMode::LogOnePlus) {
                Ok(s) => s,
                Err(mcr::Error::Unscorable { .. }) => {
                    ensure!(self_act == 0.0, "round {round}: unscorable with self activation {self_act}");
                    continue;
                }
                Err(e) => return Err(e.to_string()),
            };
            let want = dense.percent(&bag, len, query_doc);
            for (c, &a) in article_ids.iter().enumerate() {
                check("percent", scorer.score(a).unwrap().percent, want[c])?;
                scores += 1;
            }
            let ranked = all_results(&kb, &query, false).unwrap();
            for r in &ranked {
                let c = article_ids.iter().position(|&a| a == r.article).unwrap();
                check("ranked percent", r.percent, want[c])?;
            }
        }
        corpora += 1;
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{corpora} corpora, {maps} maps, {scores} scores, max error {worst:.1e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn topical_docs() -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let stop = ["the", "of", "and", "a", "to"];
    let mut out = Vec::new();
    for topic in 0..6 {
        let mut vocab: Vec<String> = (0..30).map(|k| format!("t{topic}w{k}")).collect();
        vocab.extend(stop.iter().map(|s| s.to_string()));
        for k in 0..10 {
            let body: Vec<&str> = (0..50).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect();
            out.push(RawDocument::new(format!("topic{topic}_doc{k}"), body.join(" ")));
        }
    }
    out
}

fn self_similarity() -> Outcome {
    let mut checked = 0;
    let mut outranked = Vec::new();
    for (name, corpus) in [("bundled", bundled_corpus()), ("topical", topical_docs())] {
        let kb = kb_of(corpus.clone());
        for doc in &corpus {
            let results = all_results(&kb, &SourceRef::Text(doc.body.clone()), false).unwrap();
            let own = results
                .iter()
                .position(|r| r.label == doc.id)
                .ok_or_else(|| format!("{name} {} missing from its own results", doc.id))?;
            let percent = results[own].percent;
            if (percent - 100.0).abs() > 1e-9 {
                // Not the documented failure mode; report it without the known tag.
                panic!("{name} {} self percent {percent}", doc.id);
            }
            if own != 0 {
                outranked.push(format!(
                    "{name} {} ranked {} behind {} at {:.3}",
                    doc.id,
                    own + 1,
                    results[0].label,
                    results[0].percent
                ));
            }
            checked += 1;
        }
    }
    // Smallest witness: "a a a a b" beats the query "a b" on both T and S.
    let kb = kb_of(docs(&[("q", "a b"), ("r", "a a a a b"), ("z", "c")]));
    let witness = all_results(&kb, &SourceRef::Text("a b".into()), false).unwrap();
    ensure!(
        outranked.is_empty() && witness[0].label == "q",
        "{}/{checked} documents at exactly 100 but outranked, e.g. {}; minimal witness {} at {:.3}",
        outranked.len(),
        outranked.first().map_or("none", String::as_str),
        witness[0].label,
        witness[0].percent
    );
    Ok(format!("{checked} documents ranked first at 100"))
}

fn asymmetry() -> Outcome {
    let kb = kb_of(docs(&[("d1", "a"), ("d2", "a b")]));
    let attention = kb.attention();
    let d1 = Source::from_article(kb.article("d1").unwrap(), &kb).unwrap();
    let d2 = Source::from_article(kb.article("d2").unwrap(), &kb).unwrap();
    let a = directed(&d1, &d2, &kb, &attention);
    let b = directed(&d2, &d1, &kb, &attention);
    ensure!((a - 2f64.ln()).abs() <= 1e-9, "d1->d2 {a}");
    ensure!((b - 2f64.ln() / 2.0).abs() <= 1e-9, "d2->d1 {b}");
    Ok(format!("d1->d2 {a:.5}, d2->d1 {b:.5}"))
}

fn zero_overlap() -> Outcome {
    let kb = kb_of(docs(&[
        ("d1", "red green blue"),
        ("d2", "green yellow"),
        ("d3", "cat dog"),
        ("d4", "dog mouse cat"),
    ]));
    let mut zeros = 0;
    for (query, disjoint) in [("red blue", ["d3", "d4"]), ("mouse", ["d1", "d2"])] {
        let scorer = Scorer::new(
            Source::from_text(query, &kb).unwrap(),
            &kb,
            kb.attention(),
            CombineMode::LogOnePlus,
        )
        .unwrap();
        for id in disjoint {
            let r = scorer.score(kb.article(id).unwrap()).unwrap();
            ensure!(r.percent == 0.0 && r.raw == 0.0, "{query} vs {id}: {}", r.percent);
            zeros += 1;
        }
        let ranked = all_results(&kb, &SourceRef::Text(query.into()), false).unwrap();
        ensure!(
            ranked.iter().all(|r| !disjoint.contains(&r.label.as_str()) || r.percent == 0.0),
            "{query}: disjoint article scored"
        );
    }
    Ok(format!("{zeros} disjoint pairs scored exactly 0"))
}

fn replication() -> Outcome {
    let corpus = bundled_corpus();
    ensure!(corpus.len() == 100, "bundled corpus has {} documents", corpus.len());
    let kb = kb_of(corpus.clone());
    for doc in &corpus {
        let back = reconstruct(kb.article(&doc.id).unwrap(), &kb).unwrap();
        ensure!(back == segment(&doc.body), "{} did not round-trip", doc.id);
    }
    Ok("100/100 documents".into())
}

fn topical_retrieval() -> Outcome {
    let corpus = topical_docs();
    let kb = kb_of(corpus.clone());
    let topic = |id: &str| id.split('_').next().unwrap().to_string();
    let mut hits = 0;
    for doc in &corpus {
        let results = all_results(&kb, &SourceRef::Article(kb.article(&doc.id).unwrap()), true).unwrap();
        if results.first().is_some_and(|r| topic(&r.label) == topic(&doc.id)) {
            hits += 1;
        }
    }
    let rate = hits as f64 / corpus.len() as f64;
    ensure!(rate >= 0.95, "top-1 topic match {hits}/60");
    Ok(format!("top-1 topic match {hits}/60"))
}

fn index_bytes(kb: &KnowledgeBase) -> Vec<u8> {
    let mut out = Vec::new();
    write_index(kb, &mut out).unwrap();
    out
}

fn query_bits(kb: &KnowledgeBase, text: &str, partitions: usize) -> Vec<(String, u64, u64, u64)> {
    let config = RankConfig {
        candidates: kb.article_count(),
        results: kb.article_count(),
        exclude_self: false,
        partitions,
        ..RankConfig::default()
    };
    let source = Source::from_text(text, kb).unwrap();
    rank_source(source, kb, kb.attention(), &config)
        .unwrap()
        .results
        .into_iter()
        .map(|r| (r.label, r.percent.to_bits(), r.pair.s.to_bits(), r.pair.t.to_bits()))
        .collect()
}

fn determinism() -> Outcome {
    let corpus = bundled_corpus();
    let a = index_bytes(&kb_of(corpus.clone()));
    let b = index_bytes(&kb_of(corpus.clone()));
    ensure!(a == b, "two builds differ");
    let mut shuffled = corpus.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    ensure!(index_bytes(&kb_of(shuffled.clone())) == a, "input order changed the file");

    // Incremental ingestion in a different order assigns different node
    // ids, which must not move a single bit of any score.
    let mut incremental = KnowledgeBase::new(TokenizationRules::default());
    for doc in &shuffled {
        ingest_document(doc, &mut incremental).unwrap();
    }
    incremental.compute_weights().unwrap();
    let reloaded = mcr::read_index(a.as_slice()).unwrap();
    let kb = kb_of(corpus.clone());

    let mut queries = 0;
    for doc in corpus.iter().step_by(9) {
        let reference = query_bits(&kb, &doc.body, 1);
        for threads in [1, 3, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            for partitions in [1, 2, 5, 16] {
                let got = pool.install(|| query_bits(&kb, &doc.body, partitions));
                ensure!(got == reference, "{} differs at {threads} threads, {partitions} partitions", doc.id);
            }
        }
        ensure!(query_bits(&incremental, &doc.body, 4) == reference, "{} differs by ingest order", doc.id);
        ensure!(query_bits(&reloaded, &doc.body, 1) == reference, "{} differs after reload", doc.id);
        queries += 1;
    }
    Ok(format!("{} byte files identical; {queries} queries bit-identical", a.len()))
}

fn bfs_distance(kb: &ActionKb, start: GridState, target: GridState, limit: usize) -> Option<usize> {
    let moves: Vec<(i64, i64)> = kb
        .actions()
        .filter(|(_, a)| a.is_primitive())
        .map(|(id, _)| kb.net_effect(id).unwrap())
        .collect();
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0)]);
    while let Some((s, d)) = queue.pop_front() {
        if s == target {
            return Some(d);
        }
        if d == limit {
            continue;
        }
        for &m in &moves {
            let next = s.offset(m);
            if seen.insert(next) {
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}

fn seqdemo() -> Outcome {
    let started = Instant::now();
    let mut kb = ActionKb::with_primitives(&["U", "D"]);
    let demo = Demonstration::parse("0,0\n0,1\n0,2\n-1,2\n").unwrap();
    let learned = learn_demonstration(&demo, &mut kb).unwrap();
    ensure!(
        learned.new_primitives.len() == 1 && learned.created && kb.len() == 4,
        "demo learned {} primitives, created {}, kb size {}",
        learned.new_primitives.len(),
        learned.created,
        kb.len()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut learning = ActionKb::standard();
    let mut restricted = ActionKb::with_primitives(&["U", "R"]);
    let exit = ExitCriteria::iterations(10_000);
    let (mut reached, mut unreachable) = (0, 0);
    for i in 0..200 {
        let start = GridState::new(rng.gen_range(-20..=20), rng.gen_range(-20..=20));
        let dx: i64 = rng.gen_range(-7..=7);
        let rest = 7 - dx.abs();
        let dy = rng.gen_range(-rest..=rest);
        let target = start.offset((dx, dy));
        let kb = if i % 10 == 9 { &mut restricted } else { &mut learning };
        let oracle = bfs_distance(kb, start, target, 14);
        let solution = solve(kb, start, target, &exit).unwrap();
        let executed = kb.execute(&solution.sequence, start).unwrap();
        match oracle {
            Some(_) => {
                ensure!(
                    solution.exit() == ExitReason::Threshold,
                    "instance {i}: {start} -> {target} exited {}",
                    solution.exit()
                );
                reached += 1;
            }
            None => {
                ensure!(
                    solution.exit() != ExitReason::Threshold,
                    "instance {i}: claimed to reach unreachable {target}"
                );
                unreachable += 1;
            }
        }
        if solution.exit() == ExitReason::Threshold {
            ensure!(executed == target, "instance {i}: sequence ends at {executed}, not {target}");
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "demonstration learned; {reached} reached, {unreachable} unreachable confirmed, {} actions learned, {:.2}s",
        learning.len(),
        elapsed.as_secs_f64()
    ))
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vocab: Vec<String> = (0..20_000).map(|k| format!("term{k}")).collect();
    let corpus: Vec<RawDocument> = (0..1000)
        .map(|i| {
            let mut body = String::new();
            for k in 0..200 {
                // Power-law draw for a Zipf-like frequency profile.
                let u: f64 = rng.gen();
                body.push_str(&vocab[(u.powi(3) * vocab.len() as f64) as usize]);
                body.push_str(if k % 17 == 16 { ". " } else { " " });
            }
            RawDocument::new(format!("doc{i:04}"), body)
        })
        .collect();
    let query = corpus[123].body.clone();

    let started = Instant::now();
    let Build { kb, .. } = build(corpus, TokenizationRules::default()).unwrap();
    let build_time = started.elapsed();

    let started = Instant::now();
    let ranking = rank(&SourceRef::Text(query), &kb, &RankConfig::default()).unwrap();
    let query_time = started.elapsed();
    ensure!(!ranking.results.is_empty(), "query returned nothing");
    ensure!(build_time < Duration::from_secs(10), "build took {build_time:?}");
    ensure!(query_time < Duration::from_millis(100), "query took {query_time:?}");
    Ok(format!(
        "build {:.2}s, query {:.1}ms",
        build_time.as_secs_f64(),
        query_time.as_secs_f64() * 1e3
    ))
}
