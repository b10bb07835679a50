//! MCRX-1 index files.
//!
//! One JSON object per line:
//!
//! ```text
//! {"format":"MCRX-1","levels":["word","sentence","paragraph","article"],"D":2,"total_tokens":4}
//! {"t":"word","tok":"a","df":1,"w":1.0986122886681098}
//! {"t":"article","id":"d1","paragraphs":[[[["a",1],["b",1]]]]}
//! ```
//!
//! Words are sorted by token and articles by label. Each sentence is a list
//! of `[token, count]` runs in surface order. Reals use 17 significant
//! digits, so a save/load cycle preserves every weight bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::TokenizationRules;
use crate::kb::{KnowledgeBase, Level, NodeId, LEVEL_NAMES};
use crate::num::format_real;

pub const FORMAT_VERSION: &str = "MCRX-1";

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

pub fn write_index<W: Write>(kb: &KnowledgeBase, out: &mut W) -> Result<()> {
    if !kb.weights_fresh() {
        return Err(Error::StaleWeights);
    }
    let io = |e| Error::io("<index>", e);
    let levels: Vec<String> = LEVEL_NAMES.iter().map(|l| json_str(l)).collect();
    let mut header = format!(
        "{{\"format\":{},\"levels\":[{}],\"D\":{},\"total_tokens\":{}",
        json_str(FORMAT_VERSION),
        levels.join(","),
        kb.article_count(),
        kb.total_tokens()
    );
    let rules = kb.rules();
    if *rules != TokenizationRules::default() {
        header.push_str(&format!(
            ",\"tokenizer\":{{\"lowercase\":{},\"min_token_len\":{}}}",
            rules.lowercase, rules.min_token_len
        ));
    }
    header.push('}');
    writeln!(out, "{header}").map_err(io)?;

    for (token, id) in kb.words_sorted() {
        writeln!(
            out,
            "{{\"t\":\"word\",\"tok\":{},\"df\":{},\"w\":{}}}",
            json_str(token),
            kb.df(id),
            format_real(kb.weight(id))
        )
        .map_err(io)?;
    }

    for (label, article) in kb.articles() {
        let mut line = format!("{{\"t\":\"article\",\"id\":{}", json_str(label));
        if let Some(title) = kb.title(article) {
            line.push_str(&format!(",\"title\":{}", json_str(title)));
        }
        line.push_str(",\"paragraphs\":[");
        let mut first_p = true;
        for &(p, pm) in &kb.node(article)?.sequence {
            for _ in 0..pm {
                if !first_p {
                    line.push(',');
                }
                first_p = false;
                line.push('[');
                let mut first_s = true;
                for &(s, sm) in &kb.node(p)?.sequence {
                    for _ in 0..sm {
                        if !first_s {
                            line.push(',');
                        }
                        first_s = false;
                        line.push('[');
                        let runs: Vec<String> = kb
                            .node(s)?
                            .sequence
                            .iter()
                            .map(|&(w, c)| format!("[{},{}]", json_str(kb.label(w).unwrap_or_default()), c))
                            .collect();
                        line.push_str(&runs.join(","));
                        line.push(']');
                    }
                }
                line.push(']');
            }
        }
        line.push_str("]}");
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn save_index(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_index(kb, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_index(path: &Path) -> Result<KnowledgeBase> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_index(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn field<'a>(obj: &'a Value, key: &str, line: usize) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::malformed(line, format!("missing field {key:?}")))
}

fn as_u64(v: &Value, key: &str, line: usize) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::malformed(line, format!("{key:?} must be a non-negative integer")))
}

fn as_str<'a>(v: &'a Value, key: &str, line: usize) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::malformed(line, format!("{key:?} must be a string")))
}

fn as_array<'a>(v: &'a Value, what: &str, line: usize) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::malformed(line, format!("{what} must be an array")))
}

pub fn read_index<R: BufRead>(reader: R) -> Result<KnowledgeBase> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::malformed(1, "missing header"))?;
    let header = header.map_err(|e| Error::io("<index>", e))?;
    let header: Value =
        serde_json::from_str(&header).map_err(|e| Error::malformed(1, e.to_string()))?;
    let version = as_str(field(&header, "format", 1)?, "format", 1)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let levels = as_array(field(&header, "levels", 1)?, "levels", 1)?;
    let names: Vec<&str> = levels.iter().filter_map(Value::as_str).collect();
    if names != LEVEL_NAMES {
        return Err(Error::malformed(1, format!("unsupported level set {names:?}")));
    }
    let expected_d = as_u64(field(&header, "D", 1)?, "D", 1)?;
    let expected_tokens = as_u64(field(&header, "total_tokens", 1)?, "total_tokens", 1)?;
    let mut rules = TokenizationRules::default();
    if let Some(tok) = header.get("tokenizer") {
        rules.lowercase = field(tok, "lowercase", 1)?
            .as_bool()
            .ok_or_else(|| Error::malformed(1, "\"lowercase\" must be a boolean"))?;
        rules.min_token_len = as_u64(field(tok, "min_token_len", 1)?, "min_token_len", 1)? as usize;
    }

    let mut kb = KnowledgeBase::new(rules);
    let mut declared: Vec<(NodeId, u64, f64, usize)> = Vec::new();
    let mut seen_article = false;
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| Error::io("<index>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Value =
            serde_json::from_str(&line).map_err(|e| Error::malformed(n, e.to_string()))?;
        match as_str(field(&record, "t", n)?, "t", n)? {
            "word" => {
                if seen_article {
                    return Err(Error::malformed(n, "word record after article records"));
                }
                let tok = as_str(field(&record, "tok", n)?, "tok", n)?;
                if kb.word(tok).is_some() {
                    return Err(Error::malformed(n, format!("duplicate word {tok:?}")));
                }
                let df = as_u64(field(&record, "df", n)?, "df", n)?;
                let w = field(&record, "w", n)?
                    .as_f64()
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .ok_or_else(|| Error::malformed(n, "\"w\" must be a non-negative real"))?;
                let id = kb.add_node(Level::WORD, Some(tok), &[])?;
                declared.push((id, df, w, n));
            }
            "article" => {
                seen_article = true;
                read_article(&record, n, &mut kb)?;
            }
            other => return Err(Error::malformed(n, format!("unknown record type {other:?}"))),
        }
    }

    for &(id, df, w, n) in &declared {
        if kb.df(id) as u64 != df {
            return Err(Error::malformed(
                n,
                format!("df {df} disagrees with {} containing articles", kb.df(id)),
            ));
        }
        kb.set_loaded_weight(id, w);
    }
    if kb.article_count() as u64 != expected_d {
        return Err(Error::malformed(
            1,
            format!("header D={expected_d} but {} articles", kb.article_count()),
        ));
    }
    if kb.total_tokens() != expected_tokens {
        return Err(Error::malformed(
            1,
            format!(
                "header total_tokens={expected_tokens} but articles hold {}",
                kb.total_tokens()
            ),
        ));
    }
    kb.mark_weights_fresh();
    Ok(kb)
}

fn read_article(record: &Value, n: usize, kb: &mut KnowledgeBase) -> Result<()> {
    let id = as_str(field(record, "id", n)?, "id", n)?;
    let title = match record.get("title") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_str(v, "title", n)?.to_string()),
    };
    let mut paragraph_ids = Vec::new();
    for paragraph in as_array(field(record, "paragraphs", n)?, "paragraphs", n)? {
        let mut sentence_ids = Vec::new();
        for sentence in as_array(paragraph, "paragraph", n)? {
            let mut runs = Vec::new();
            for pair in as_array(sentence, "sentence", n)? {
                let pair = as_array(pair, "run", n)?;
                let [tok, count] = pair.as_slice() else {
                    return Err(Error::malformed(n, "run must be [token, count]"));
                };
                let tok = as_str(tok, "token", n)?;
                let count = as_u64(count, "count", n)?;
                let count = u32::try_from(count)
                    .ok()
                    .filter(|c| *c > 0)
                    .ok_or_else(|| Error::malformed(n, "run count must be a positive 32-bit integer"))?;
                let word = kb
                    .word(tok)
                    .ok_or_else(|| Error::malformed(n, format!("token {tok:?} has no word record")))?;
                runs.push((word, count));
            }
            let s = kb
                .add_node(Level::SENTENCE, None, &runs)
                .map_err(|e| Error::malformed(n, e.to_string()))?;
            sentence_ids.push((s, 1));
        }
        let p = kb
            .add_node(Level::PARAGRAPH, None, &sentence_ids)
            .map_err(|e| Error::malformed(n, e.to_string()))?;
        paragraph_ids.push((p, 1));
    }
    let article = kb
        .add_node(Level::ARTICLE, Some(id), &paragraph_ids)
        .map_err(|e| Error::malformed(n, e.to_string()))?;
    kb.set_title(article, title);
    Ok(())
}
