//! C ABI over the ecta toolkit.
//!
//! Every fallible function returns an [`EctaStatus`]; on failure a message is
//! available from [`ecta_last_error_message`] on the calling thread. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`ecta_string_free`]. Handles are opaque and released with their `_free`
//! function; passing NULL to any `_free` function is a no-op.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ecta::annotate::annotate;
use ecta::codec::{parse_triplets, TripletParse};
use ecta::corpus::{load_corpus, CorpusOptions, Document};
use ecta::lora::{lora_forward, sgd_fit, DenseMatrix, LoraLayer, Vector};
use ecta::metrics::{evaluate, instance_from_output, EvalOptions, MalformedPolicy};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EctaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidData = 4,
    InvalidArgument = 5,
    NotFound = 6,
    Panic = 7,
}

/// A loaded, validated corpus.
pub struct EctaCorpus {
    options: CorpusOptions,
    docs: Vec<Document>,
}

/// Parsed model output.
pub struct EctaTripletParse {
    parse: TripletParse,
}

/// A LoRA layer with frozen `W` and trainable `A`, `B`.
pub struct EctaLoraLayer {
    layer: LoraLayer,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(EctaStatus, String);

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EctaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            EctaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            EctaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(EctaStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EctaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(EctaStatus::InvalidData, "string contains NUL".into()))?;
    write_out(out, c.into_raw(), "out")
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).map_err(|e| Failure(EctaStatus::InvalidData, e.to_string()))
}

/// Message for the last failure on this thread; empty after a success. The
/// pointer stays valid until the next ecta call on the same thread.
#[no_mangle]
pub extern "C" fn ecta_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ecta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer returned through an ecta out-parameter, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ecta_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `2pr / (p + r)`, 0 when `p + r` is 0.
#[no_mangle]
pub extern "C" fn ecta_f1(p: f64, r: f64) -> f64 {
    ecta::metrics::f1(p, r)
}

/// Loads a JSONL corpus with the default delimiters and categories.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_corpus_load(path: *const c_char, out: *mut *mut EctaCorpus) -> EctaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let options = CorpusOptions::default();
        let docs = load_corpus(Path::new(path), &options).map_err(|e| {
            let status = match e {
                ecta::corpus::CorpusError::Io { .. } => EctaStatus::Io,
                _ => EctaStatus::InvalidData,
            };
            Failure(status, e.to_string())
        })?;
        write_out(out, Box::into_raw(Box::new(EctaCorpus { options, docs })), "out")
    })
}

/// Number of documents, 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecta_corpus_len(corpus: *const EctaCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.docs.len())
}

/// Id of the document at `index`.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_corpus_document_id(
    corpus: *const EctaCorpus,
    index: usize,
    out: *mut *mut c_char,
) -> EctaStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        let doc = c
            .docs
            .get(index)
            .ok_or_else(|| Failure(EctaStatus::NotFound, format!("index {index} out of range")))?;
        write_string(out, doc.id.clone())
    })
}

/// # Safety
/// `corpus` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecta_corpus_free(corpus: *mut EctaCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

fn find<'a>(c: &'a EctaCorpus, id: &str) -> Result<&'a Document, Failure> {
    c.docs
        .iter()
        .find(|d| d.id == id)
        .ok_or_else(|| Failure(EctaStatus::NotFound, format!("no document {id:?}")))
}

/// Marker-annotated text of one document, with its triplet appendix.
///
/// # Safety
/// `corpus` must be a live handle, `doc_id` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_annotate_document(
    corpus: *const EctaCorpus,
    doc_id: *const c_char,
    out: *mut *mut c_char,
) -> EctaStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        let doc = find(c, str_arg(doc_id, "doc_id")?)?;
        let text = annotate(doc).map_err(|e| Failure(EctaStatus::InvalidData, e.to_string()))?;
        write_string(out, text)
    })
}

/// Parses model output against the standard categories. Never fails on content.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_parse_triplets(text: *const c_char, out: *mut *mut EctaTripletParse) -> EctaStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let parse = parse_triplets(text, &CorpusOptions::default().categories);
        write_out(out, Box::into_raw(Box::new(EctaTripletParse { parse })), "out")
    })
}

/// # Safety
/// `parse` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecta_triplet_parse_candidate_count(parse: *const EctaTripletParse) -> usize {
    parse.as_ref().map_or(0, |p| p.parse.candidates.len())
}

/// # Safety
/// `parse` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecta_triplet_parse_issue_count(parse: *const EctaTripletParse) -> usize {
    parse.as_ref().map_or(0, |p| p.parse.issues.len())
}

/// Fields of candidate `index`. Each out-pointer may be NULL to skip it.
///
/// # Safety
/// `parse` must be a live handle; non-NULL out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_triplet_parse_candidate(
    parse: *const EctaTripletParse,
    index: usize,
    emotion: *mut *mut c_char,
    cause: *mut *mut c_char,
    category: *mut *mut c_char,
) -> EctaStatus {
    guard(|| {
        let p = handle(parse, "parse")?;
        let c = p
            .parse
            .candidates
            .get(index)
            .ok_or_else(|| Failure(EctaStatus::NotFound, format!("candidate {index} out of range")))?;
        for (out, value) in [(emotion, &c.emotion), (cause, &c.cause), (category, &c.category.as_str().to_string())] {
            if !out.is_null() {
                write_string(out, value.clone())?;
            }
        }
        Ok(())
    })
}

/// The whole parse as JSON: candidates, candidate_lines and issues.
///
/// # Safety
/// `parse` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_triplet_parse_to_json(parse: *const EctaTripletParse, out: *mut *mut c_char) -> EctaStatus {
    guard(|| write_string(out, json(&handle(parse, "parse")?.parse)?))
}

/// # Safety
/// `parse` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecta_triplet_parse_free(parse: *mut EctaTripletParse) {
    if !parse.is_null() {
        drop(Box::from_raw(parse));
    }
}

/// Scores raw model outputs against the corpus gold triplets and writes the
/// metrics report as JSON. `ids[i]` names the document of `outputs[i]`;
/// documents without an output are scored as empty predictions. `policy` is
/// "exclude", "penalize" or NULL for the default.
///
/// # Safety
/// `corpus` must be a live handle; `ids` and `outputs` must each point to `n`
/// NUL-terminated strings (either may be NULL when `n` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_evaluate(
    corpus: *const EctaCorpus,
    ids: *const *const c_char,
    outputs: *const *const c_char,
    n: usize,
    policy: *const c_char,
    out: *mut *mut c_char,
) -> EctaStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        if n > 0 && (ids.is_null() || outputs.is_null()) {
            return Err(null("ids or outputs"));
        }
        let mut options = EvalOptions::default();
        if let Some(p) = opt_str_arg(policy, "policy")? {
            options.policy = p
                .parse::<MalformedPolicy>()
                .map_err(|e| Failure(EctaStatus::InvalidArgument, e.to_string()))?;
        }
        let mut by_id: HashMap<&str, &str> = HashMap::new();
        for i in 0..n {
            let id = str_arg(*ids.add(i), "ids[i]")?;
            let text = str_arg(*outputs.add(i), "outputs[i]")?;
            find(c, id)?;
            if by_id.insert(id, text).is_some() {
                return Err(Failure(EctaStatus::InvalidArgument, format!("duplicate id {id:?}")));
            }
        }
        let instances: Vec<_> = c
            .docs
            .iter()
            .map(|d| instance_from_output(d, by_id.get(d.id.as_str()).copied().unwrap_or(""), &c.options.categories))
            .collect();
        write_string(out, json(&evaluate(&instances, &options))?)
    })
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn lora_err(e: ecta::lora::LoraError) -> Failure {
    Failure(EctaStatus::InvalidArgument, e.to_string())
}

/// Wraps a row-major `d x k` weight matrix with rank-`r` factors: `A` drawn
/// from a seeded uniform distribution, `B` zero.
///
/// # Safety
/// `w` must point to `d * k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecta_lora_layer_new(
    w: *const f64,
    d: usize,
    k: usize,
    r: usize,
    seed: u64,
    out: *mut *mut EctaLoraLayer,
) -> EctaStatus {
    guard(|| {
        let len = d
            .checked_mul(k)
            .ok_or_else(|| Failure(EctaStatus::InvalidArgument, "d * k overflows".into()))?;
        let data = slice(w, len, "w")?.to_vec();
        let w = DenseMatrix::new(d, k, data).map_err(lora_err)?;
        let layer = LoraLayer::init(w, r, seed).map_err(lora_err)?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, Box::into_raw(Box::new(EctaLoraLayer { layer })), "out")
    })
}

/// `y = Wx + BAx`; `x` has `k` entries and `y` receives `d`.
///
/// # Safety
/// `layer` must be a live handle; `x` must hold `x_len` doubles and `y` `y_len`.
#[no_mangle]
pub unsafe extern "C" fn ecta_lora_forward(
    layer: *const EctaLoraLayer,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> EctaStatus {
    guard(|| {
        let l = &handle(layer, "layer")?.layer;
        let x = Vector::new(slice(x, x_len, "x")?.to_vec()).map_err(lora_err)?;
        let out = lora_forward(l, &x).map_err(lora_err)?;
        if y_len != out.len() {
            return Err(Failure(
                EctaStatus::InvalidArgument,
                format!("y holds {y_len} entries, output has {}", out.len()),
            ));
        }
        if y.is_null() && y_len > 0 {
            return Err(null("y"));
        }
        std::ptr::copy_nonoverlapping(out.as_slice().as_ptr(), y, y_len);
        Ok(())
    })
}

/// Per-sample SGD over `n` pairs. `xs` is `n * k` row-major inputs and `ts`
/// is `n * d` targets. Writes the final mean loss to `final_loss` when non-NULL.
///
/// # Safety
/// `layer` must be a live handle; `xs` and `ts` must hold the stated counts.
#[no_mangle]
pub unsafe extern "C" fn ecta_lora_fit(
    layer: *mut EctaLoraLayer,
    xs: *const f64,
    ts: *const f64,
    n: usize,
    learning_rate: f64,
    epochs: usize,
    final_loss: *mut f64,
) -> EctaStatus {
    guard(|| {
        let l = &mut layer.as_mut().ok_or_else(|| null("layer"))?.layer;
        let (d, k) = (l.d(), l.k());
        let xs = slice(xs, n * k, "xs")?;
        let ts = slice(ts, n * d, "ts")?;
        let data = (0..n)
            .map(|i| {
                Ok((
                    Vector::new(xs[i * k..(i + 1) * k].to_vec())?,
                    Vector::new(ts[i * d..(i + 1) * d].to_vec())?,
                ))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(lora_err)?;
        let trace = sgd_fit(l, &data, learning_rate, epochs).map_err(lora_err)?;
        if !final_loss.is_null() {
            final_loss.write(trace.final_loss());
        }
        Ok(())
    })
}

/// # Safety
/// `layer` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecta_lora_layer_free(layer: *mut EctaLoraLayer) {
    if !layer.is_null() {
        drop(Box::from_raw(layer));
    }
}
