//! C ABI for the tag-translation pipeline.
//!
//! The surface covers the deployment path: load a normalizer, a translation
//! table, or a trained model checkpoint, and score annotations. Handles are
//! opaque pointers with paired `*_free` functions; fallible calls either
//! return null (constructors, string getters) or a [`TtStatus`] code, and
//! the failure detail is available from `tt_last_error_message` on the same
//! thread. UTF-8 is required on every string input.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tagtrans::kb::TranslationTable;
use tagtrans::logreg::LogisticModel;
use tagtrans::normalize::{build_trie, AssessConfig, Normalizer, DIRECT_INSERT_LEN};
use tagtrans::ontology::PivotOntology;
use tagtrans::tagsystem::TagSystem;
use tagtrans::util::read_to_string;
use tagtrans::zipf::WordFrequencyTable;
use tagtrans::Error;

/// Result code of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TtStatus {
    /// The call succeeded.
    Ok = 0,
    /// The call was malformed: null handle, wrong buffer size, invalid
    /// argument.
    Usage = 1,
    /// The input data was unreadable or malformed.
    Data = 2,
    /// A numerical failure (non-finite parameters).
    Numeric = 3,
}

/// Canonical-form text normalizer (opaque).
pub struct TtNormalizer {
    inner: Normalizer,
}

/// Source→target translation table (opaque).
pub struct TtTable {
    inner: TranslationTable,
}

/// Trained logistic translation model (opaque).
pub struct TtModel {
    inner: LogisticModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> TtStatus {
    match err.exit_code() {
        3 => TtStatus::Numeric,
        2 => TtStatus::Data,
        _ => TtStatus::Usage,
    }
}

fn fail(err: &Error) -> TtStatus {
    remember_error(&err.to_string());
    status_of(err)
}

fn usage(msg: &str) -> TtStatus {
    remember_error(msg);
    TtStatus::Usage
}

/// The message of the last error on this thread, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// -------------------------------------------------------------- helpers

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn opt_str<'a>(ptr: *const c_char) -> Result<Option<&'a str>, TtStatus> {
    if ptr.is_null() {
        return Ok(None);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Some(s)),
        Err(_) => Err(usage("string argument is not valid UTF-8")),
    }
}

/// # Safety
/// `ptr` must be a non-null NUL-terminated string.
unsafe fn req_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, TtStatus> {
    match opt_str(ptr)? {
        Some(s) => Ok(s),
        None => Err(usage(&format!("{what} must not be null"))),
    }
}

/// # Safety
/// `items` must point to `len` NUL-terminated strings (or be null with
/// `len == 0`).
unsafe fn str_array<'a>(
    items: *const *const c_char,
    len: usize,
    what: &str,
) -> Result<Vec<&'a str>, TtStatus> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if items.is_null() {
        return Err(usage(&format!("{what} is null but its length is {len}")));
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let ptr = *items.add(i);
        out.push(req_str(ptr, what)?);
    }
    Ok(out)
}

fn into_c_string(s: &str) -> *mut c_char {
    match CString::new(s) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            usage("string contains an interior NUL byte");
            std::ptr::null_mut()
        }
    }
}

fn guarded<T>(default: T, body: impl FnOnce() -> T) -> T {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(v) => v,
        Err(_) => {
            remember_error("internal panic");
            default
        }
    }
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from a `tagtrans` call and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn tt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ----------------------------------------------------------- normalizer

/// Builds the word-free normalizer: casefolding, separator cleanup, and
/// connective unification only — no compound splitting.
#[no_mangle]
pub extern "C" fn tt_normalizer_basic() -> *mut TtNormalizer {
    guarded(std::ptr::null_mut(), || {
        Box::into_raw(Box::new(TtNormalizer {
            inner: Normalizer::basic(),
        }))
    })
}

/// Builds a full normalizer from resource files.
///
/// `ontology_path` may be null (no pivot words). `taxonomy_paths` lists
/// `n_taxonomies` tag-system files whose tags seed the splitting trie.
/// `unigrams_path` (word-frequency list) and `assess_path` (split-assessment
/// settings) may be null for defaults. Returns null on error.
///
/// # Safety
/// All pointers must satisfy the conventions above.
#[no_mangle]
pub unsafe extern "C" fn tt_normalizer_load(
    ontology_path: *const c_char,
    taxonomy_paths: *const *const c_char,
    n_taxonomies: usize,
    unigrams_path: *const c_char,
    assess_path: *const c_char,
) -> *mut TtNormalizer {
    guarded(std::ptr::null_mut(), || {
        let build = || -> Result<Normalizer, Error> {
            let ontology = match opt_str(ontology_path).map_err(to_usage_error)? {
                Some(p) => PivotOntology::load(Path::new(p))?,
                None => PivotOntology::empty(),
            };
            let paths =
                str_array(taxonomy_paths, n_taxonomies, "taxonomy path").map_err(to_usage_error)?;
            let mut systems = Vec::new();
            for p in paths {
                systems.push(TagSystem::load(Path::new(p))?);
            }
            let refs: Vec<&TagSystem> = systems.iter().collect();
            let trie = build_trie(&refs, &ontology, DIRECT_INSERT_LEN);
            let freq = match opt_str(unigrams_path).map_err(to_usage_error)? {
                Some(p) => WordFrequencyTable::from_file(Path::new(p))?,
                None => WordFrequencyTable::empty(),
            };
            let assess = match opt_str(assess_path).map_err(to_usage_error)? {
                Some(p) => {
                    let text = read_to_string(Path::new(p))?;
                    AssessConfig::from_key_value_text(&text, p)?
                }
                None => AssessConfig::default(),
            };
            Ok(Normalizer::new(trie, freq, assess))
        };
        match build() {
            Ok(inner) => Box::into_raw(Box::new(TtNormalizer { inner })),
            Err(e) => {
                fail(&e);
                std::ptr::null_mut()
            }
        }
    })
}

fn to_usage_error(_: TtStatus) -> Error {
    // the message was already remembered by the usage() call
    Error::Config(last_error_text())
}

fn last_error_text() -> String {
    LAST_ERROR.with(|slot| slot.borrow().to_string_lossy().into_owned())
}

/// The canonical key of a raw tag: normalized, split, sorted words.
///
/// Returns a string to free with `tt_string_free`, or null on error
/// (degenerate tag, invalid arguments).
///
/// # Safety
/// `normalizer` must be a live handle from this library; `raw` non-null.
#[no_mangle]
pub unsafe extern "C" fn tt_normalizer_canonical_key(
    normalizer: *const TtNormalizer,
    raw: *const c_char,
) -> *mut c_char {
    guarded(std::ptr::null_mut(), || {
        let Some(handle) = normalizer.as_ref() else {
            usage("normalizer handle is null");
            return std::ptr::null_mut();
        };
        let raw = match req_str(raw, "raw tag") {
            Ok(s) => s,
            Err(_) => return std::ptr::null_mut(),
        };
        match handle.inner.normalize_tag(raw) {
            Ok(form) => into_c_string(form.canonical_key()),
            Err(e) => {
                fail(&e);
                std::ptr::null_mut()
            }
        }
    })
}

/// # Safety
/// `normalizer` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn tt_normalizer_free(normalizer: *mut TtNormalizer) {
    if !normalizer.is_null() {
        drop(Box::from_raw(normalizer));
    }
}

// ---------------------------------------------------------------- table

/// Loads a translation table from its TSV export. Returns null on error.
///
/// # Safety
/// `path` must be a non-null NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tt_table_load(path: *const c_char) -> *mut TtTable {
    guarded(std::ptr::null_mut(), || {
        let path = match req_str(path, "table path") {
            Ok(p) => p,
            Err(_) => return std::ptr::null_mut(),
        };
        let load = || -> Result<TranslationTable, Error> {
            let text = read_to_string(Path::new(path))?;
            TranslationTable::parse_tsv(&text, path)
        };
        match load() {
            Ok(inner) => Box::into_raw(Box::new(TtTable { inner })),
            Err(e) => {
                fail(&e);
                std::ptr::null_mut()
            }
        }
    })
}

/// Number of target tags (the length `tt_table_score` expects).
///
/// # Safety
/// `table` must be a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn tt_table_target_count(table: *const TtTable) -> usize {
    table.as_ref().map_or(0, |t| t.inner.targets().len())
}

/// Name of target tag `index`; free with `tt_string_free`. Null if out of
/// range.
///
/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_table_target_name(table: *const TtTable, index: usize) -> *mut c_char {
    guarded(std::ptr::null_mut(), || {
        let Some(handle) = table.as_ref() else {
            usage("table handle is null");
            return std::ptr::null_mut();
        };
        match handle.inner.targets().get(index) {
            Some(name) => into_c_string(name),
            None => {
                usage("target index out of range");
                std::ptr::null_mut()
            }
        }
    })
}

/// Scores one annotation against every target tag: for each target, the sum
/// of the table columns of the annotation's known tags. Unknown tags are
/// skipped, matching the command-line `translate` behavior. `out` must hold
/// exactly `tt_table_target_count` values.
///
/// # Safety
/// Pointer conventions as above; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tt_table_score(
    table: *const TtTable,
    tags: *const *const c_char,
    n_tags: usize,
    out: *mut f64,
    out_len: usize,
) -> TtStatus {
    guarded(TtStatus::Usage, || {
        let Some(handle) = table.as_ref() else {
            return usage("table handle is null");
        };
        let tags = match str_array(tags, n_tags, "tag") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() || out_len != handle.inner.targets().len() {
            return usage(&format!(
                "output buffer must hold {} values, got {out_len}",
                handle.inner.targets().len()
            ));
        }
        let (scores, _unknown) = handle.inner.kb_score(tags.iter().copied());
        for (i, v) in scores.iter().enumerate() {
            *out.add(i) = *v;
        }
        TtStatus::Ok
    })
}

/// # Safety
/// `table` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn tt_table_free(table: *mut TtTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

// ---------------------------------------------------------------- model

/// Loads a trained model checkpoint. Returns null on error.
///
/// # Safety
/// `path` must be a non-null NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tt_model_load(path: *const c_char) -> *mut TtModel {
    guarded(std::ptr::null_mut(), || {
        let path = match req_str(path, "checkpoint path") {
            Ok(p) => p,
            Err(_) => return std::ptr::null_mut(),
        };
        match LogisticModel::load(Path::new(path)) {
            Ok(inner) => Box::into_raw(Box::new(TtModel { inner })),
            Err(e) => {
                fail(&e);
                std::ptr::null_mut()
            }
        }
    })
}

/// Number of target tags (the length `tt_model_score` expects).
///
/// # Safety
/// `model` must be a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn tt_model_target_count(model: *const TtModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.target_vocab().len())
}

/// Name of target tag `index`; free with `tt_string_free`. Null if out of
/// range.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_model_target_name(model: *const TtModel, index: usize) -> *mut c_char {
    guarded(std::ptr::null_mut(), || {
        let Some(handle) = model.as_ref() else {
            usage("model handle is null");
            return std::ptr::null_mut();
        };
        match handle.inner.target_vocab().get(index) {
            Some(name) => into_c_string(name),
            None => {
                usage("target index out of range");
                std::ptr::null_mut()
            }
        }
    })
}

/// Scores one annotation with the model: the per-target probability that the
/// item carries each target tag. Unknown tags are skipped. `out` must hold
/// exactly `tt_model_target_count` values.
///
/// # Safety
/// Pointer conventions as above; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tt_model_score(
    model: *const TtModel,
    tags: *const *const c_char,
    n_tags: usize,
    out: *mut f64,
    out_len: usize,
) -> TtStatus {
    guarded(TtStatus::Usage, || {
        let Some(handle) = model.as_ref() else {
            return usage("model handle is null");
        };
        let tags = match str_array(tags, n_tags, "tag") {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() || out_len != handle.inner.target_vocab().len() {
            return usage(&format!(
                "output buffer must hold {} values, got {out_len}",
                handle.inner.target_vocab().len()
            ));
        }
        let (scores, _unknown) = handle.inner.stat_score(tags.iter().copied());
        for (i, v) in scores.iter().enumerate() {
            *out.add(i) = *v;
        }
        TtStatus::Ok
    })
}

/// # Safety
/// `model` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn tt_model_free(model: *mut TtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
