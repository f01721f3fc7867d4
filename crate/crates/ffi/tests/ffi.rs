use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use ecta_ffi::*;
use serde_json::Value;

fn fixture_corpus() -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus.jsonl");
    CString::new(p.to_str().unwrap()).unwrap()
}

unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    ecta_string_free(s);
    out
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ecta_last_error_message()).to_str().unwrap().to_string()
}

unsafe fn load() -> *mut EctaCorpus {
    let mut c = ptr::null_mut();
    assert_eq!(ecta_corpus_load(fixture_corpus().as_ptr(), &mut c), EctaStatus::Ok);
    c
}

#[test]
fn f1_and_version() {
    assert!((ecta_f1(0.5268, 0.4963) - 0.5111).abs() < 1e-4);
    assert_eq!(ecta_f1(0.0, 0.0), 0.0);
    let v = unsafe { CStr::from_ptr(ecta_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn corpus_lifecycle_and_annotation() {
    unsafe {
        let c = load();
        assert_eq!(ecta_corpus_len(c), 12);
        let mut id = ptr::null_mut();
        assert_eq!(ecta_corpus_document_id(c, 1, &mut id), EctaStatus::Ok);
        assert_eq!(take(id), "case-2");
        assert_eq!(ecta_corpus_document_id(c, 99, &mut id), EctaStatus::NotFound);
        assert!(last_error().contains("out of range"));

        let doc = CString::new("case-2").unwrap();
        let mut text = ptr::null_mut();
        assert_eq!(ecta_annotate_document(c, doc.as_ptr(), &mut text), EctaStatus::Ok);
        let text = take(text);
        assert!(text.contains("[Emotion 1]{afraid}"));
        assert!(text.ends_with("(afraid, spending the night alone, Fear)"));
        let missing = CString::new("nope").unwrap();
        let mut text = ptr::null_mut();
        assert_eq!(ecta_annotate_document(c, missing.as_ptr(), &mut text), EctaStatus::NotFound);
        assert!(text.is_null());
        ecta_corpus_free(c);
        ecta_corpus_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_are_classified() {
    unsafe {
        let mut c = ptr::null_mut();
        let missing = CString::new("/nonexistent/corpus.jsonl").unwrap();
        assert_eq!(ecta_corpus_load(missing.as_ptr(), &mut c), EctaStatus::Io);
        assert!(c.is_null());
        assert!(!last_error().is_empty());

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{oops\n").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        assert_eq!(ecta_corpus_load(bad.as_ptr(), &mut c), EctaStatus::InvalidData);
        assert_eq!(ecta_corpus_load(ptr::null(), &mut c), EctaStatus::NullPointer);
        assert_eq!(ecta_corpus_load(bad.as_ptr(), ptr::null_mut()), EctaStatus::NullPointer);
        assert_eq!(ecta_corpus_len(ptr::null()), 0);
    }
}

#[test]
fn invalid_utf8_is_reported() {
    unsafe {
        let bytes = [0xffu8, 0xfe, 0];
        let mut p = ptr::null_mut();
        assert_eq!(ecta_parse_triplets(bytes.as_ptr().cast(), &mut p), EctaStatus::InvalidUtf8);
    }
}

#[test]
fn triplet_parse_accessors() {
    unsafe {
        let text = CString::new("Answer:\n1. (afraid, spending the night alone, Fear)\n(a, b, Excited)").unwrap();
        let mut p = ptr::null_mut();
        assert_eq!(ecta_parse_triplets(text.as_ptr(), &mut p), EctaStatus::Ok);
        assert_eq!(ecta_triplet_parse_candidate_count(p), 1);
        assert_eq!(ecta_triplet_parse_issue_count(p), 2);
        let (mut e, mut k) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ecta_triplet_parse_candidate(p, 0, &mut e, ptr::null_mut(), &mut k), EctaStatus::Ok);
        assert_eq!((take(e), take(k)), ("afraid".to_string(), "Fear".to_string()));
        assert_eq!(
            ecta_triplet_parse_candidate(p, 1, &mut e, ptr::null_mut(), ptr::null_mut()),
            EctaStatus::NotFound
        );
        let mut js = ptr::null_mut();
        assert_eq!(ecta_triplet_parse_to_json(p, &mut js), EctaStatus::Ok);
        let v: Value = serde_json::from_str(&take(js)).unwrap();
        assert_eq!(v["issues"][1]["code"], "UnknownCategory");
        assert_eq!(v["candidate_lines"][0], 2);
        ecta_triplet_parse_free(p);
    }
}

#[test]
fn evaluate_outputs() {
    unsafe {
        let c = load();
        let ids = [CString::new("case-2").unwrap(), CString::new("case-3").unwrap()];
        let outs = [
            CString::new("(afraid, spending the night alone, Fear)").unwrap(),
            CString::new("(moved, Jiang Xingbao's act of bravery, Sadness)\nnoise").unwrap(),
        ];
        let id_ptrs: Vec<*const c_char> = ids.iter().map(|s| s.as_ptr()).collect();
        let out_ptrs: Vec<*const c_char> = outs.iter().map(|s| s.as_ptr()).collect();
        let mut js = ptr::null_mut();
        assert_eq!(
            ecta_evaluate(c, id_ptrs.as_ptr(), out_ptrs.as_ptr(), 2, ptr::null(), &mut js),
            EctaStatus::Ok
        );
        let v: Value = serde_json::from_str(&take(js)).unwrap();
        assert_eq!(v["counts"]["triplets"]["ct"], 1);
        assert_eq!(v["counts"]["triplets"]["pt"], 2);
        assert_eq!(v["malformed_lines"], 1);

        let penalize = CString::new("penalize").unwrap();
        assert_eq!(
            ecta_evaluate(c, id_ptrs.as_ptr(), out_ptrs.as_ptr(), 2, penalize.as_ptr(), &mut js),
            EctaStatus::Ok
        );
        let v: Value = serde_json::from_str(&take(js)).unwrap();
        assert_eq!(v["counts"]["triplets"]["pt"], 3);

        let bogus = CString::new("ignore").unwrap();
        assert_eq!(
            ecta_evaluate(c, id_ptrs.as_ptr(), out_ptrs.as_ptr(), 2, bogus.as_ptr(), &mut js),
            EctaStatus::InvalidArgument
        );
        let dup = [id_ptrs[0], id_ptrs[0]];
        assert_eq!(
            ecta_evaluate(c, dup.as_ptr(), out_ptrs.as_ptr(), 2, ptr::null(), &mut js),
            EctaStatus::InvalidArgument
        );
        let unknown = [CString::new("nope").unwrap()];
        let unknown_ptrs: Vec<*const c_char> = unknown.iter().map(|s| s.as_ptr()).collect();
        assert_eq!(
            ecta_evaluate(c, unknown_ptrs.as_ptr(), out_ptrs.as_ptr(), 1, ptr::null(), &mut js),
            EctaStatus::NotFound
        );
        assert_eq!(ecta_evaluate(c, ptr::null(), ptr::null(), 0, ptr::null(), &mut js), EctaStatus::Ok);
        let v: Value = serde_json::from_str(&take(js)).unwrap();
        assert_eq!(v["counts"]["triplets"]["pt"], 0);
        ecta_corpus_free(c);
    }
}

#[test]
fn lora_layer_forward_and_fit() {
    unsafe {
        let (d, k, r) = (3usize, 2usize, 1usize);
        let w = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut layer = ptr::null_mut();
        assert_eq!(ecta_lora_layer_new(w.as_ptr(), d, k, r, 7, &mut layer), EctaStatus::Ok);
        let x = [2.0, 3.0];
        let mut y = [0.0; 3];
        assert_eq!(ecta_lora_forward(layer, x.as_ptr(), 2, y.as_mut_ptr(), 3), EctaStatus::Ok);
        assert_eq!(y, [2.0, 3.0, 5.0]);
        assert_eq!(ecta_lora_forward(layer, x.as_ptr(), 2, y.as_mut_ptr(), 2), EctaStatus::InvalidArgument);
        assert_eq!(ecta_lora_forward(layer, x.as_ptr(), 1, y.as_mut_ptr(), 3), EctaStatus::InvalidArgument);

        let xs = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let ts = [1.5, 0.0, 1.5, 0.0, 1.0, 1.0, 1.5, 1.0, 2.5];
        let mut fin = f64::NAN;
        assert_eq!(ecta_lora_fit(layer, xs.as_ptr(), ts.as_ptr(), 3, 0.05, 400, &mut fin), EctaStatus::Ok);
        assert!(fin < 1e-3, "final loss {fin}");
        ecta_lora_layer_free(layer);

        let mut bad = ptr::null_mut();
        assert_eq!(ecta_lora_layer_new(w.as_ptr(), d, k, 2, 7, &mut bad), EctaStatus::InvalidArgument);
        assert!(bad.is_null());
        assert!(last_error().contains("rank"), "{}", last_error());
        assert_eq!(ecta_lora_layer_new(ptr::null(), d, k, r, 7, &mut bad), EctaStatus::NullPointer);
        ecta_lora_layer_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(ecta_parse_triplets(ptr::null(), &mut p), EctaStatus::NullPointer);
        assert!(!last_error().is_empty());
        let t = CString::new("").unwrap();
        assert_eq!(ecta_parse_triplets(t.as_ptr(), &mut p), EctaStatus::Ok);
        assert!(last_error().is_empty());
        ecta_triplet_parse_free(p);
    }
}

#[test]
fn header_declares_every_export() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/ecta.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for variant in ["ECTA_STATUS_OK = 0", "ECTA_STATUS_NULL_POINTER", "ECTA_STATUS_PANIC"] {
        assert!(header.contains(variant), "{variant}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/ecta.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler on PATH; skipping header compile");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
