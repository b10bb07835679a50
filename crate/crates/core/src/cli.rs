//! `mcr` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::activation::{trace, trace_text, Source};
use crate::error::Error;
use crate::format::{load_index, save_index};
use crate::ingest::{build, load_corpus, TokenizationRules};
use crate::kb::{KnowledgeBase, Level};
use crate::num::format_real;
use crate::scl::{apply_rules, watch_read, ExitCriteria, RuleSet};
use crate::seqdemo::{learn_demonstration, solve, ActionKb, Demonstration, GridState};
use crate::similarity::{compare, rank_source, CombineMode, RankConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNREADABLE: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_NO_DOCUMENTS: i32 = 3;
pub const EXIT_UNSCORABLE: i32 = 4;
pub const EXIT_UNKNOWN_ID: i32 = 5;
pub const EXIT_INVALID_DEMO: i32 = 6;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "mcr", version, about = "Compositional knowledge base and bidirectional activation similarity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an index from a directory of .txt files or a JSONL corpus.
    Build {
        #[arg(long, value_parser = path_arg)]
        corpus: PathBuf,
        #[arg(long, value_parser = path_arg)]
        index: PathBuf,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        lowercase: bool,
        #[arg(long, default_value_t = 1)]
        min_token_len: usize,
    },
    /// Rank the articles closest to a document.
    Query {
        #[arg(long, value_parser = path_arg)]
        index: PathBuf,
        /// Document file, or `-` for standard input.
        #[arg(long)]
        doc: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 100)]
        candidates: usize,
        #[arg(long)]
        include_self: bool,
        /// JSON object mapping labels to attention multipliers.
        #[arg(long, value_parser = path_arg)]
        attention: Option<PathBuf>,
        /// Comma-separated word or article labels to monitor.
        #[arg(long, value_delimiter = ',')]
        watch: Vec<String>,
        #[arg(long)]
        tsv: bool,
    },
    /// Show both activation directions between two documents.
    Compare {
        #[arg(long, value_parser = path_arg)]
        index: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// List the nodes of an article that contribute most to a source's activation.
    Trace {
        #[arg(long, value_parser = path_arg)]
        index: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long)]
        dest: String,
        #[arg(long, value_enum)]
        level: TraceLevel,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Learn action demonstrations and compose actions to reach a target.
    SclDemo {
        #[arg(long, value_parser = path_arg)]
        kb: PathBuf,
        #[arg(long, value_parser = path_arg)]
        learn: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        start: GridState,
        #[arg(long, allow_hyphen_values = true)]
        target: GridState,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
    },
    /// Print index statistics.
    Stats {
        #[arg(long, value_parser = path_arg)]
        index: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceLevel {
    Sentence,
    Paragraph,
}

impl From<TraceLevel> for Level {
    fn from(l: TraceLevel) -> Level {
        match l {
            TraceLevel::Sentence => Level::SENTENCE,
            TraceLevel::Paragraph => Level::PARAGRAPH,
        }
    }
}

// Keeps empty paths so they fail as unreadable rather than as usage errors.
fn path_arg(s: &str) -> std::result::Result<PathBuf, std::convert::Infallible> {
    Ok(PathBuf::from(s))
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Build {
            corpus,
            index,
            lowercase,
            min_token_len,
        } => cmd_build(&corpus, &index, TokenizationRules { lowercase, min_token_len }, &mut out),
        Command::Query {
            index,
            doc,
            top,
            candidates,
            include_self,
            attention,
            watch,
            tsv,
        } => cmd_query(
            &index,
            &doc,
            RankConfig {
                candidates,
                results: top,
                exclude_self: !include_self,
                combine: CombineMode::LogOnePlus,
                partitions: 1,
            },
            attention.as_deref(),
            &watch,
            tsv,
            &mut out,
        ),
        Command::Compare { index, a, b } => cmd_compare(&index, &a, &b, &mut out),
        Command::Trace {
            index,
            source,
            dest,
            level,
            top,
        } => cmd_trace(&index, &source, &dest, level.into(), top, &mut out),
        Command::SclDemo {
            kb,
            learn,
            start,
            target,
            max_iter,
        } => cmd_scl_demo(&kb, learn.as_deref(), start, target, max_iter, &mut out),
        Command::Stats { index } => cmd_stats(&index, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("mcr: {}", f.message);
            f.code
        }
    }
}

fn write_err(e: io::Error) -> Failure {
    Failure::new(EXIT_UNREADABLE, format!("write failed: {e}"))
}

fn open_index(path: &Path) -> std::result::Result<KnowledgeBase, Failure> {
    load_index(path).map_err(|e| Failure::new(EXIT_UNREADABLE, format!("cannot load index: {e}")))
}

fn cmd_build(corpus: &Path, index: &Path, rules: TokenizationRules, out: &mut impl Write) -> CliResult {
    let docs = load_corpus(corpus).map_err(|e| match e {
        Error::Malformed { .. } => Failure::new(EXIT_MALFORMED, format!("malformed corpus, {e}")),
        other => Failure::new(EXIT_UNREADABLE, other.to_string()),
    })?;
    let built = build(docs, rules).map_err(|e| match e {
        Error::NoDocuments => Failure::new(EXIT_NO_DOCUMENTS, e.to_string()),
        other => Failure::new(EXIT_MALFORMED, other.to_string()),
    })?;
    for id in &built.skipped {
        eprintln!("mcr: skipped empty document {id:?}");
    }
    let kb = built.kb;
    save_index(&kb, index).map_err(|e| Failure::new(EXIT_UNREADABLE, e.to_string()))?;
    writeln!(
        out,
        "{} documents, {} words, {} tokens",
        kb.article_count(),
        kb.word_count(),
        kb.total_tokens()
    )
    .map_err(write_err)
}

fn read_doc(spec: &str) -> std::result::Result<String, Failure> {
    if spec == "-" {
        let mut text = String::new();
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::new(EXIT_UNREADABLE, format!("stdin: {e}")))?;
        Ok(text)
    } else {
        fs::read_to_string(spec).map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{spec}: {e}")))
    }
}

fn query_failure(e: Error) -> Failure {
    match e {
        Error::Unscorable { .. } | Error::EmptySource => Failure::new(EXIT_UNSCORABLE, e.to_string()),
        Error::InvalidParameters(_) => Failure::new(EXIT_USAGE, e.to_string()),
        other => Failure::new(EXIT_UNREADABLE, other.to_string()),
    }
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[allow(clippy::too_many_arguments)]
fn cmd_query(
    index: &Path,
    doc: &str,
    config: RankConfig,
    attention: Option<&Path>,
    watch: &[String],
    tsv: bool,
    out: &mut impl Write,
) -> CliResult {
    let kb = open_index(index)?;
    if let Some(path) = attention {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{}: {e}", path.display())))?;
        let rules = RuleSet::from_json(&text)
            .map_err(|e| Failure::new(EXIT_MALFORMED, format!("{}: {e}", path.display())))?;
        let outcome = apply_rules(&rules, &kb).map_err(query_failure)?;
        for label in &outcome.unresolved {
            eprintln!("mcr: attention label {label:?} not found");
        }
    }
    let text = read_doc(doc)?;
    let mut source = Source::from_text(&text, &kb).map_err(query_failure)?;
    // A document file named after an indexed article is that article.
    if doc != "-" {
        source.article = Path::new(doc)
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|stem| kb.article(stem));
    }
    let ranking = rank_source(source, &kb, kb.attention(), &config).map_err(query_failure)?;
    let unknown = ranking.scorer.query().unknown_words;
    if unknown > 0 {
        eprintln!("mcr: {unknown} query words not in the index");
    }

    for (i, r) in ranking.results.iter().enumerate() {
        let title = r.title.as_deref().unwrap_or("");
        let line = if tsv {
            format!(
                "{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                tsv_field(&r.label),
                tsv_field(title),
                format_real(r.percent),
                format_real(r.pair.s),
                format_real(r.pair.t)
            )
        } else {
            format!("{:>3}  {:<24} {:>6.1}  {}", i + 1, r.label, r.percent, title)
                .trim_end()
                .to_string()
        };
        writeln!(out, "{line}").map_err(write_err)?;
    }
    if !watch.is_empty() {
        let values = watch_read(watch, ranking.scorer.pass(), &kb)
            .map_err(|e| Failure::new(EXIT_UNKNOWN_ID, e.to_string()))?;
        for (label, value) in values {
            writeln!(out, "watch\t{}\t{}", tsv_field(&label), format_real(value)).map_err(write_err)?;
        }
    }
    Ok(())
}

/// An indexed article id, or else a readable text file.
fn resolve_source(spec: &str, kb: &KnowledgeBase) -> std::result::Result<Source, Failure> {
    if let Some(article) = kb.article(spec) {
        return Source::from_article(article, kb).map_err(|e| Failure::new(EXIT_UNKNOWN_ID, e.to_string()));
    }
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{spec}: {e}")))?;
        return Source::from_text(&text, kb).map_err(query_failure);
    }
    Err(Failure::new(
        EXIT_UNKNOWN_ID,
        format!("{spec:?} is neither an indexed article nor a file"),
    ))
}

fn cmd_compare(index: &Path, a: &str, b: &str, out: &mut impl Write) -> CliResult {
    let kb = open_index(index)?;
    let sa = resolve_source(a, &kb)?;
    let sb = resolve_source(b, &kb)?;
    let c = compare(&sa, &sb, &kb, CombineMode::LogOnePlus).map_err(query_failure)?;
    writeln!(out, "T(a->b)\t{}", format_real(c.a_to_b)).map_err(write_err)?;
    writeln!(out, "S(b->a)\t{}", format_real(c.b_to_a)).map_err(write_err)?;
    writeln!(out, "raw\t{}", format_real(c.raw)).map_err(write_err)?;
    writeln!(out, "percent\t{:.1}", c.percent).map_err(write_err)
}

fn cmd_trace(index: &Path, source: &str, dest: &str, level: Level, top: usize, out: &mut impl Write) -> CliResult {
    let kb = open_index(index)?;
    let src = resolve_source(source, &kb)?;
    let article = kb
        .article(dest)
        .ok_or_else(|| Failure::new(EXIT_UNKNOWN_ID, format!("unknown article {dest:?}")))?;
    let rows = trace(&src, article, level, top, &kb, &kb.attention())
        .map_err(|e| Failure::new(EXIT_UNKNOWN_ID, e.to_string()))?;
    for (i, row) in rows.iter().enumerate() {
        let text = trace_text(row.node, &kb).map_err(|e| Failure::new(EXIT_UNKNOWN_ID, e.to_string()))?;
        writeln!(out, "{}\t{}\t{}", i + 1, format_real(row.contribution), text).map_err(write_err)?;
    }
    Ok(())
}

fn cmd_scl_demo(
    kb_path: &Path,
    learn: Option<&Path>,
    start: GridState,
    target: GridState,
    max_iter: usize,
    out: &mut impl Write,
) -> CliResult {
    let mut kb = if kb_path.exists() {
        let file = fs::File::open(kb_path)
            .map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{}: {e}", kb_path.display())))?;
        ActionKb::read(BufReader::new(file))
            .map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{}: {e}", kb_path.display())))?
    } else {
        ActionKb::standard()
    };
    let mut changed = !kb_path.exists();

    if let Some(path) = learn {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{}: {e}", path.display())))?;
        let demo = Demonstration::parse(&text).map_err(|e| Failure::new(EXIT_INVALID_DEMO, e.to_string()))?;
        let learned = learn_demonstration(&demo, &mut kb).map_err(|e| Failure::new(EXIT_INVALID_DEMO, e.to_string()))?;
        for &p in &learned.new_primitives {
            writeln!(out, "learned primitive {}", kb.label(p)).map_err(write_err)?;
        }
        writeln!(
            out,
            "learned {} = {}{}",
            kb.label(learned.action),
            kb.format_sequence(&learned.parse),
            if learned.created { "" } else { " (already known)" }
        )
        .map_err(write_err)?;
        changed |= learned.created || !learned.new_primitives.is_empty();
    }

    if max_iter == 0 {
        return Err(Failure::new(EXIT_USAGE, "--max-iter must be at least 1"));
    }
    let solution = solve(&mut kb, start, target, &ExitCriteria::iterations(max_iter))
        .map_err(|e| Failure::new(EXIT_UNREADABLE, e.to_string()))?;
    writeln!(out, "sequence: {}", kb.format_sequence(&solution.sequence)).map_err(write_err)?;
    writeln!(out, "endpoint: {}", solution.endpoint).map_err(write_err)?;
    writeln!(out, "iterations: {}", solution.report.iterations).map_err(write_err)?;
    writeln!(out, "exit: {}", solution.exit()).map_err(write_err)?;
    if let Some(node) = solution.node {
        writeln!(
            out,
            "node: {}{}",
            kb.label(node),
            if solution.created { " (new)" } else { "" }
        )
        .map_err(write_err)?;
    }
    changed |= solution.created;

    if changed {
        let mut buf = Vec::new();
        kb.write(&mut buf)
            .map_err(|e| Failure::new(EXIT_UNREADABLE, e.to_string()))?;
        fs::write(kb_path, buf).map_err(|e| Failure::new(EXIT_UNREADABLE, format!("{}: {e}", kb_path.display())))?;
    }
    Ok(())
}

fn cmd_stats(index: &Path, out: &mut impl Write) -> CliResult {
    let kb = open_index(index)?;
    let weights: Vec<f64> = kb.words_sorted().iter().map(|&(_, w)| kb.weight(w)).collect();
    let mut lines = vec![
        format!("documents\t{}", kb.article_count()),
        format!("words\t{}", kb.word_count()),
        format!("tokens\t{}", kb.total_tokens()),
    ];
    if !weights.is_empty() {
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = crate::num::exact_sum(weights.iter().copied()) / weights.len() as f64;
        lines.push(format!("weight_min\t{}", format_real(min)));
        lines.push(format!("weight_max\t{}", format_real(max)));
        lines.push(format!("weight_mean\t{}", format_real(mean)));
    }
    for level in Level::all() {
        let count = kb.nodes().filter(|(_, n)| n.level == level).count();
        lines.push(format!("nodes_{}\t{}", level.name(), count));
    }
    for line in lines {
        writeln!(out, "{line}").map_err(write_err)?;
    }
    Ok(())
}
