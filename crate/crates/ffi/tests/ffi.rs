use std::ffi::{c_char, c_void, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use utilsel_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(utilsel_last_error()) }.to_string_lossy().into_owned()
}

fn config(m: usize, w: usize, s: usize) -> *mut UtilselWindowConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { utilsel_window_config_new(m, w, s, &mut cfg) }, UtilselStatus::Ok);
    cfg
}

#[test]
fn geometry_through_the_abi() {
    let cfg = config(8, 4, 2);
    let mut count = 0;
    let mut ranges = [0usize; 6];
    unsafe {
        assert_eq!(utilsel_ranking_plan(cfg, ptr::null_mut(), 0, &mut count), UtilselStatus::Ok);
        assert_eq!(count, 3);
        assert_eq!(utilsel_ranking_plan(cfg, ranges.as_mut_ptr(), 3, &mut count), UtilselStatus::Ok);
        assert_eq!(ranges, [4, 8, 2, 6, 0, 4]);
        assert_eq!(utilsel_ranking_plan(cfg, ranges.as_mut_ptr(), 2, &mut count), UtilselStatus::InvalidArgument);
        let (mut lo, mut hi) = (0, 0);
        assert_eq!(utilsel_window_count_bounds(cfg, &mut lo, &mut hi), UtilselStatus::Ok);
        assert_eq!((lo, hi), (2, 3));
        utilsel_window_config_free(cfg);
        utilsel_window_config_free(ptr::null_mut());
    }
}

#[test]
fn invalid_config_sets_last_error() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { utilsel_window_config_new(0, 4, 2, &mut cfg) }, UtilselStatus::InvalidArgument);
    assert!(cfg.is_null());
    assert!(last_error().contains("positive"));
    assert_eq!(unsafe { utilsel_window_config_new(8, 4, 2, ptr::null_mut()) }, UtilselStatus::NullPointer);
}

#[test]
fn parsers_and_validation() {
    let mut perm = [0usize; 3];
    let mut repairs = 0;
    let text = c("ranking: 1,3,2");
    unsafe {
        assert_eq!(utilsel_parse_ranking(text.as_ptr(), 3, perm.as_mut_ptr(), &mut repairs), UtilselStatus::Ok);
    }
    assert_eq!(perm, [1, 3, 2]);
    assert_eq!(repairs, UTILSEL_REPAIR_FREE_TEXT_STRIPPED);

    let mut sel = [0usize; 5];
    let (mut len, mut pseudo) = (0, ptr::null_mut());
    let text = c("Napoleon died in 1821.\nSelected: [2], [4]");
    unsafe {
        assert_eq!(
            utilsel_parse_selection(text.as_ptr(), 5, sel.as_mut_ptr(), &mut len, &mut pseudo, &mut repairs),
            UtilselStatus::Ok
        );
        assert_eq!(&sel[..len], &[2, 4]);
        assert_eq!(repairs, 0);
        assert_eq!(CStr::from_ptr(pseudo).to_str().unwrap(), "Napoleon died in 1821.");
        utilsel_string_free(pseudo);
    }

    let (mut passed, mut defects) = (true, 0);
    let text = c("answer text\nSelected: [1], [1]");
    unsafe {
        assert_eq!(
            utilsel_validate_generation(text.as_ptr(), UtilselTaskKind::Selection, 3, &mut passed, &mut defects),
            UtilselStatus::Ok
        );
    }
    assert!(!passed);
    assert_eq!(defects, UTILSEL_DEFECT_REPETITIVE);

    let bad = [0xffu8, 0];
    unsafe {
        assert_eq!(
            utilsel_parse_ranking(bad.as_ptr() as *const c_char, 3, perm.as_mut_ptr(), &mut repairs),
            UtilselStatus::InvalidUtf8
        );
    }
}

#[test]
fn metrics_and_simulation() {
    let pred = c("barack obama.");
    let gold = c("Barack Obama");
    let golds = [gold.as_ptr()];
    let (mut em, mut f1) = (0u8, 0.0);
    unsafe {
        assert_eq!(utilsel_answer_em_f1(pred.as_ptr(), golds.as_ptr(), 1, &mut em, &mut f1), UtilselStatus::Ok);
    }
    assert_eq!((em, f1), (1, 1.0));

    let cfg = config(100, 20, 10);
    let (mut mean, mut lo, mut hi) = (0.0, 0.0, 0.0);
    let always = c("always");
    let nonsense = c("sometimes");
    unsafe {
        assert_eq!(utilsel_simulate(cfg, always.as_ptr(), 100, 1, &mut mean, &mut lo, &mut hi), UtilselStatus::Ok);
        assert_eq!((mean, lo, hi), (9.0, 9.0, 9.0));
        assert_eq!(
            utilsel_simulate(cfg, nonsense.as_ptr(), 100, 1, &mut mean, &mut lo, &mut hi),
            UtilselStatus::InvalidArgument
        );
        utilsel_window_config_free(cfg);
    }
}

/// Ranks by the number embedded in each passage, highest first.
unsafe extern "C" fn by_number(
    user_data: *mut c_void,
    kind: UtilselTaskKind,
    _system: *const c_char,
    user: *const c_char,
    n: usize,
    _window: usize,
) -> *const c_char {
    let buf = &mut *(user_data as *mut CString);
    let user = CStr::from_ptr(user).to_string_lossy();
    let values: Vec<u32> = user
        .lines()
        .filter(|l| l.starts_with('['))
        .filter_map(|l| l.split_once("value "))
        .map(|(_, v)| v.trim().parse().unwrap())
        .collect();
    assert_eq!(values.len(), n);
    let mut order: Vec<usize> = (1..=n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(values[i - 1]));
    let text = match kind {
        UtilselTaskKind::Ranking => order.iter().map(|i| format!("[{i}]")).collect::<Vec<_>>().join(" > "),
        UtilselTaskKind::Selection => {
            let keep: Vec<String> = (1..=n).filter(|&i| values[i - 1] >= 90).map(|i| format!("[{i}]")).collect();
            format!("High values.\nSelected: {}", if keep.is_empty() { "none".into() } else { keep.join(", ") })
        }
    };
    *buf = CString::new(text).unwrap();
    buf.as_ptr()
}

unsafe extern "C" fn unreachable_judge(
    _: *mut c_void,
    _: UtilselTaskKind,
    _: *const c_char,
    _: *const c_char,
    _: usize,
    _: usize,
) -> *const c_char {
    ptr::null()
}

fn corpus_of(values: &[u32]) -> (*mut UtilselCorpus, Vec<CString>) {
    let corpus = utilsel_corpus_new();
    let ids: Vec<CString> = (0..values.len()).map(|i| c(&format!("d{i}"))).collect();
    for (id, v) in ids.iter().zip(values) {
        let text = c(&format!("value {v}"));
        unsafe {
            assert_eq!(utilsel_corpus_add(corpus, id.as_ptr(), ptr::null(), text.as_ptr()), UtilselStatus::Ok);
        }
    }
    (corpus, ids)
}

fn result_ids(res: *const UtilselResult) -> Vec<String> {
    unsafe {
        (0..utilsel_result_len(res))
            .map(|i| CStr::from_ptr(utilsel_result_doc_id(res, i)).to_string_lossy().into_owned())
            .collect()
    }
}

#[test]
fn engines_with_callback_judge() {
    let values = [10, 95, 30, 20, 99, 50, 91, 5];
    let (corpus, ids) = corpus_of(&values);
    let ptrs: Vec<*const c_char> = ids.iter().map(|s| s.as_ptr()).collect();
    let cfg = config(8, 4, 2);
    let query = c("which are high");
    let mut scratch = CString::default();
    let user_data = &mut scratch as *mut CString as *mut c_void;
    unsafe {
        let mut res = ptr::null_mut();
        assert_eq!(
            utilsel_rerank(corpus, cfg, query.as_ptr(), ptrs.as_ptr(), 8, Some(by_number), user_data, &mut res),
            UtilselStatus::Ok
        );
        assert_eq!(utilsel_result_window_count(res), 3);
        assert_eq!(&result_ids(res)[..2], ["d4", "d1"]);
        assert!(utilsel_result_doc_id(res, 8).is_null());
        utilsel_result_free(res);

        let mut res = ptr::null_mut();
        assert_eq!(
            utilsel_select(corpus, cfg, query.as_ptr(), ptrs.as_ptr(), 8, Some(by_number), user_data, &mut res),
            UtilselStatus::Ok
        );
        let mut selected = result_ids(res);
        selected.sort();
        assert_eq!(selected, ["d1", "d4", "d6"]);
        utilsel_result_free(res);

        let mut res = ptr::null_mut();
        assert_eq!(
            utilsel_select(corpus, cfg, query.as_ptr(), ptrs.as_ptr(), 8, Some(unreachable_judge), ptr::null_mut(), &mut res),
            UtilselStatus::Judge
        );
        assert!(res.is_null());
        assert!(last_error().contains("transport"));

        let unknown = c("zzz");
        let bad = [unknown.as_ptr()];
        assert_eq!(
            utilsel_rerank(corpus, cfg, query.as_ptr(), bad.as_ptr(), 1, Some(by_number), user_data, &mut res),
            UtilselStatus::Engine
        );
        assert_eq!(
            utilsel_rerank(corpus, cfg, query.as_ptr(), ptrs.as_ptr(), 8, None, user_data, &mut res),
            UtilselStatus::NullPointer
        );

        let dup = c("d0");
        let text = c("x");
        assert_eq!(utilsel_corpus_add(corpus, dup.as_ptr(), ptr::null(), text.as_ptr()), UtilselStatus::InvalidArgument);
        assert_eq!(utilsel_corpus_len(corpus), 8);
        utilsel_window_config_free(cfg);
        utilsel_corpus_free(corpus);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libutilsel_ffi.a");
    if !lib.exists() {
        panic!("static library not found at {}", lib.display());
    }
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
