//! C ABI over the `mcr` knowledge base.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns an [`McrStatus`];
//! on failure [`mcr_last_error_message`] describes the error. Strings are
//! NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mcr::activation::Source;
use mcr::similarity::{compare, rank_source};
use mcr::{
    build, load_index, save_index, CombineMode, Error, KnowledgeBase, RankConfig, RawDocument, TokenizationRules,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    NotFound = 5,
    Unscorable = 6,
    InvalidArgument = 7,
    EmptyCorpus = 8,
    Panic = 99,
}

/// Loaded knowledge base.
pub struct McrIndex {
    kb: KnowledgeBase,
}

/// Collects documents before building an index.
pub struct McrBuilder {
    docs: Vec<RawDocument>,
    rules: TokenizationRules,
}

struct Row {
    label: CString,
    title: CString,
    percent: f64,
    s: f64,
    t: f64,
    raw: f64,
}

/// Ranked query results.
pub struct McrResults {
    rows: Vec<Row>,
    unknown_words: usize,
}

/// One ranked result. String pointers borrow from the owning results
/// handle and stay valid until it is freed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McrResult {
    pub rank: usize,
    pub article_id: *const c_char,
    /// Empty string when the article has no title.
    pub title: *const c_char,
    pub percent: f64,
    /// Solution-to-target activation.
    pub s: f64,
    /// Target-to-solution activation.
    pub t: f64,
    pub raw: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McrStats {
    pub documents: u64,
    pub words: u64,
    pub tokens: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McrComparison {
    pub a_to_b: f64,
    pub b_to_a: f64,
    pub raw: f64,
    pub percent: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McrQueryOptions {
    pub top: usize,
    pub candidates: usize,
    pub include_self: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn status_for(e: &Error) -> McrStatus {
    match e {
        Error::Io { .. } => McrStatus::Io,
        Error::Malformed { .. } | Error::VersionMismatch { .. } | Error::StaleWeights => McrStatus::Format,
        Error::UnknownArticle(_) | Error::MissingNode(_) | Error::UnresolvedLabel(_) | Error::WrongLevel { .. } => {
            McrStatus::NotFound
        }
        Error::Unscorable { .. } | Error::EmptySource => McrStatus::Unscorable,
        Error::NoDocuments | Error::EmptyKnowledgeBase => McrStatus::EmptyCorpus,
        _ => McrStatus::InvalidArgument,
    }
}

struct Fail(McrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_for(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> McrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            McrStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("panic inside mcr");
            McrStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(McrStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(McrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null or point to a live value of type `T`.
unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(McrStatus::NullArgument, format!("{what} is null")))
}

fn check_out<T>(out: *mut T) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail(McrStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread; empty after success.
/// Valid until the next `mcr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mcr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn mcr_query_options_default() -> McrQueryOptions {
    let d = RankConfig::default();
    McrQueryOptions {
        top: d.results,
        candidates: d.candidates,
        include_self: !d.exclude_self,
    }
}

#[no_mangle]
pub extern "C" fn mcr_builder_new(lowercase: bool, min_token_len: usize) -> *mut McrBuilder {
    Box::into_raw(Box::new(McrBuilder {
        docs: Vec::new(),
        rules: TokenizationRules {
            lowercase,
            min_token_len,
        },
    }))
}

/// Adds a document. `title` may be null.
///
/// # Safety
/// `builder` must come from [`mcr_builder_new`]; strings must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcr_builder_add(
    builder: *mut McrBuilder,
    id: *const c_char,
    title: *const c_char,
    text: *const c_char,
) -> McrStatus {
    guard(|| {
        let builder = builder
            .as_mut()
            .ok_or_else(|| Fail(McrStatus::NullArgument, "builder is null".into()))?;
        let id = as_str(id, "id")?;
        let title = if title.is_null() {
            None
        } else {
            Some(as_str(title, "title")?.to_string())
        };
        let body = as_str(text, "text")?;
        builder.docs.push(RawDocument {
            id: id.to_string(),
            title,
            body: body.to_string(),
        });
        Ok(())
    })
}

/// Builds the index and frees the builder, whatever the outcome.
///
/// # Safety
/// `builder` must come from [`mcr_builder_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcr_builder_finish(builder: *mut McrBuilder, out: *mut *mut McrIndex) -> McrStatus {
    guard(|| {
        if builder.is_null() {
            return Err(Fail(McrStatus::NullArgument, "builder is null".into()));
        }
        let builder = Box::from_raw(builder);
        check_out(out)?;
        let built = build(builder.docs, builder.rules)?;
        *out = Box::into_raw(Box::new(McrIndex { kb: built.kb }));
        Ok(())
    })
}

/// # Safety
/// `builder` must be null or come from [`mcr_builder_new`].
#[no_mangle]
pub unsafe extern "C" fn mcr_builder_free(builder: *mut McrBuilder) {
    if !builder.is_null() {
        drop(Box::from_raw(builder));
    }
}

/// # Safety
/// `path` must be a valid string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mcr_index_load(path: *const c_char, out: *mut *mut McrIndex) -> McrStatus {
    guard(|| {
        let path = as_str(path, "path")?;
        check_out(out)?;
        let kb = load_index(Path::new(path))?;
        *out = Box::into_raw(Box::new(McrIndex { kb }));
        Ok(())
    })
}

/// # Safety
/// `index` must be a live handle and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn mcr_index_save(index: *const McrIndex, path: *const c_char) -> McrStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        let path = as_str(path, "path")?;
        save_index(&index.kb, Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcr_index_free(index: *mut McrIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// # Safety
/// `index` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcr_index_stats(index: *const McrIndex, out: *mut McrStats) -> McrStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        check_out(out)?;
        *out = McrStats {
            documents: index.kb.article_count() as u64,
            words: index.kb.word_count() as u64,
            tokens: index.kb.total_tokens(),
        };
        Ok(())
    })
}

/// Sets the attention multiplier of a word or article label.
///
/// # Safety
/// `index` must be a live handle and `label` a valid string.
#[no_mangle]
pub unsafe extern "C" fn mcr_index_set_attention(
    index: *const McrIndex,
    label: *const c_char,
    multiplier: f64,
) -> McrStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        let label = as_str(label, "label")?;
        let id = index
            .kb
            .resolve_label(label)
            .ok_or_else(|| Fail(McrStatus::NotFound, format!("unknown label {label:?}")))?;
        index.kb.set_attention(id, multiplier)?;
        Ok(())
    })
}

fn run_query(kb: &KnowledgeBase, source: Source, options: &McrQueryOptions) -> Result<McrResults, Fail> {
    let config = RankConfig {
        candidates: options.candidates,
        results: options.top,
        exclude_self: !options.include_self,
        ..RankConfig::default()
    };
    let ranking = rank_source(source, kb, kb.attention(), &config)?;
    let cstring = |s: &str| CString::new(s.replace('\0', " ")).unwrap_or_default();
    let rows = ranking
        .results
        .iter()
        .map(|r| Row {
            label: cstring(&r.label),
            title: cstring(r.title.as_deref().unwrap_or("")),
            percent: r.percent,
            s: r.pair.s,
            t: r.pair.t,
            raw: r.raw,
        })
        .collect();
    Ok(McrResults {
        rows,
        unknown_words: ranking.scorer.query().unknown_words,
    })
}

/// Ranks articles against external text. `options` may be null for defaults.
///
/// # Safety
/// Pointers must be valid; `out` receives a handle to free with
/// [`mcr_results_free`].
#[no_mangle]
pub unsafe extern "C" fn mcr_index_query_text(
    index: *const McrIndex,
    text: *const c_char,
    options: *const McrQueryOptions,
    out: *mut *mut McrResults,
) -> McrStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        let text = as_str(text, "text")?;
        check_out(out)?;
        let options = options.as_ref().copied().unwrap_or_else(|| mcr_query_options_default());
        let source = Source::from_text(text, &index.kb)?;
        *out = Box::into_raw(Box::new(run_query(&index.kb, source, &options)?));
        Ok(())
    })
}

/// Ranks articles against an indexed article.
///
/// # Safety
/// As for [`mcr_index_query_text`].
#[no_mangle]
pub unsafe extern "C" fn mcr_index_query_article(
    index: *const McrIndex,
    article_id: *const c_char,
    options: *const McrQueryOptions,
    out: *mut *mut McrResults,
) -> McrStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        let id = as_str(article_id, "article_id")?;
        check_out(out)?;
        let options = options.as_ref().copied().unwrap_or_else(|| mcr_query_options_default());
        let article = index
            .kb
            .article(id)
            .ok_or_else(|| Fail(McrStatus::NotFound, format!("unknown article {id:?}")))?;
        let source = Source::from_article(article, &index.kb)?;
        *out = Box::into_raw(Box::new(run_query(&index.kb, source, &options)?));
        Ok(())
    })
}

/// Both activation directions between two indexed articles.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcr_index_compare(
    index: *const McrIndex,
    a: *const c_char,
    b: *const c_char,
    out: *mut McrComparison,
) -> McrStatus {
    guard(|| {
        let index = as_ref(index, "index")?;
        let a = as_str(a, "a")?;
        let b = as_str(b, "b")?;
        check_out(out)?;
        let kb = &index.kb;
        let resolve = |id: &str| {
            kb.article(id)
                .ok_or_else(|| Fail(McrStatus::NotFound, format!("unknown article {id:?}")))
                .and_then(|n| Source::from_article(n, kb).map_err(Fail::from))
        };
        let c = compare(&resolve(a)?, &resolve(b)?, kb, CombineMode::LogOnePlus)?;
        *out = McrComparison {
            a_to_b: c.a_to_b,
            b_to_a: c.b_to_a,
            raw: c.raw,
            percent: c.percent,
        };
        Ok(())
    })
}

/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcr_results_len(results: *const McrResults) -> usize {
    results.as_ref().map_or(0, |r| r.rows.len())
}

/// Distinct query words missing from the index.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcr_results_unknown_words(results: *const McrResults) -> usize {
    results.as_ref().map_or(0, |r| r.unknown_words)
}

/// # Safety
/// `results` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcr_results_get(results: *const McrResults, i: usize, out: *mut McrResult) -> McrStatus {
    guard(|| {
        let results = as_ref(results, "results")?;
        check_out(out)?;
        let row = results.rows.get(i).ok_or_else(|| {
            Fail(
                McrStatus::InvalidArgument,
                format!("index {i} out of range ({} results)", results.rows.len()),
            )
        })?;
        *out = McrResult {
            rank: i + 1,
            article_id: row.label.as_ptr(),
            title: row.title.as_ptr(),
            percent: row.percent,
            s: row.s,
            t: row.t,
            raw: row.raw,
        };
        Ok(())
    })
}

/// # Safety
/// `results` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcr_results_free(results: *mut McrResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}
