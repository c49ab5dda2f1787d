//! C ABI over the wellevent models.
//!
//! Handles are opaque; every fallible call returns a `WeStatus` and leaves
//! a human-readable message retrievable with `we_last_error_message` (valid
//! on the calling thread until the next failing call). Windows are passed
//! as row-major `rows x channels` arrays of raw (unnormalized) sensor
//! values ordered like `we_model_channel_count` / the model's channel list.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use wellevent::stream::{load_any_model, LoadedModel};
use wellevent::WINDOW_LEN;

/// Result code of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    ShapeMismatch = 4,
    InvalidValue = 5,
    ScoreFailed = 6,
    Internal = 7,
}

/// Opaque handle to a loaded model.
#[repr(C)]
pub struct WeModel {
    _private: [u8; 0],
}

/// Opaque handle to a streaming scorer; owns a one-window buffer.
#[repr(C)]
pub struct WeStream {
    _private: [u8; 0],
}

struct ModelHandle {
    model: Arc<LoadedModel>,
}

struct StreamHandle {
    model: Arc<LoadedModel>,
    buffer: Vec<Vec<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: WeStatus, message: &str) -> WeStatus {
    set_error(message);
    status
}

/// Message for the most recent failure on this thread. Never null; owned
/// by the library and overwritten by the next failing call.
#[no_mangle]
pub extern "C" fn we_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Rows per scoring window (one minute of per-second samples).
#[no_mangle]
pub extern "C" fn we_window_len() -> usize {
    WINDOW_LEN
}

unsafe fn model_ref<'a>(model: *const WeModel) -> Option<&'a ModelHandle> {
    (model as *const ModelHandle).as_ref()
}

/// Load a saved model file (forest or TCN; the format is sniffed). On
/// success writes a handle into `out` which must be released with
/// `we_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_model_load(path: *const c_char, out: *mut *mut WeModel) -> WeStatus {
    if path.is_null() || out.is_null() {
        return fail(WeStatus::NullArgument, "null path or out pointer");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => return fail(WeStatus::InvalidUtf8, "path is not valid utf-8"),
    };
    match load_any_model(Path::new(path)) {
        Ok(model) => {
            let handle = Box::new(ModelHandle { model: Arc::new(model) });
            *out = Box::into_raw(handle) as *mut WeModel;
            WeStatus::Ok
        }
        Err(e) => fail(WeStatus::LoadFailed, &e.to_string()),
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from `we_model_load` and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn we_model_free(model: *mut WeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model as *mut ModelHandle));
    }
}

/// Model kind: 0 for the random forest, 1 for the TCN, -1 for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn we_model_kind(model: *const WeModel) -> c_int {
    match model_ref(model) {
        Some(h) => match h.model.as_ref() {
            LoadedModel::Forest(_) => 0,
            LoadedModel::Tcn(_) => 1,
        },
        None => -1,
    }
}

/// Number of sensor channels the model consumes, or -1 for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn we_model_channel_count(model: *const WeModel) -> c_int {
    match model_ref(model) {
        Some(h) => h.model.channel_names().len() as c_int,
        None => -1,
    }
}

/// Name of channel `index`, or null when out of range. The pointer is a
/// thread-local copy overwritten by the next call on the same thread, so
/// copy the string out before calling again.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn we_model_channel_name(
    model: *const WeModel,
    index: usize,
) -> *const c_char {
    thread_local! {
        static NAME: RefCell<CString> = RefCell::new(CString::new("").unwrap());
    }
    match model_ref(model).and_then(|h| h.model.channel_names().get(index)) {
        Some(name) => NAME.with(|slot| {
            *slot.borrow_mut() = CString::new(name.as_str()).unwrap_or_default();
            slot.borrow().as_ptr()
        }),
        None => std::ptr::null(),
    }
}

fn collect_window(
    values: *const f64,
    rows: usize,
    cols: usize,
    channels: usize,
) -> Result<Vec<Vec<f64>>, WeStatus> {
    if rows != WINDOW_LEN {
        set_error(&format!("expected {WINDOW_LEN} rows, got {rows}"));
        return Err(WeStatus::ShapeMismatch);
    }
    if cols != channels {
        set_error(&format!("expected {channels} channels, got {cols}"));
        return Err(WeStatus::ShapeMismatch);
    }
    let flat = unsafe { std::slice::from_raw_parts(values, rows * cols) };
    if flat.iter().any(|v| !v.is_finite()) {
        set_error("window contains non-finite values");
        return Err(WeStatus::InvalidValue);
    }
    Ok(flat.chunks(cols).map(|r| r.to_vec()).collect())
}

/// Score one raw window: `values` is row-major `rows x cols` with
/// `rows == we_window_len()` and `cols == we_model_channel_count(model)`.
///
/// # Safety
/// `model` must be a live handle; `values` must point to `rows * cols`
/// doubles; `out_score` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_model_score_window(
    model: *const WeModel,
    values: *const f64,
    rows: usize,
    cols: usize,
    out_score: *mut f64,
) -> WeStatus {
    let handle = match model_ref(model) {
        Some(h) => h,
        None => return fail(WeStatus::NullArgument, "null model"),
    };
    if values.is_null() || out_score.is_null() {
        return fail(WeStatus::NullArgument, "null values or out pointer");
    }
    let window = match collect_window(values, rows, cols, handle.model.channel_names().len()) {
        Ok(w) => w,
        Err(status) => return status,
    };
    let result = catch_unwind(AssertUnwindSafe(|| handle.model.score(&window)));
    match result {
        Ok(Ok(score)) => {
            *out_score = score;
            WeStatus::Ok
        }
        Ok(Err(e)) => fail(WeStatus::ScoreFailed, &e.to_string()),
        Err(_) => fail(WeStatus::Internal, "panic while scoring"),
    }
}

/// Create a streaming scorer over a loaded model. The stream holds its own
/// reference; the model handle may be freed first.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn we_stream_new(
    model: *const WeModel,
    out: *mut *mut WeStream,
) -> WeStatus {
    let handle = match model_ref(model) {
        Some(h) => h,
        None => return fail(WeStatus::NullArgument, "null model"),
    };
    if out.is_null() {
        return fail(WeStatus::NullArgument, "null out pointer");
    }
    let stream = Box::new(StreamHandle {
        model: Arc::clone(&handle.model),
        buffer: Vec::with_capacity(WINDOW_LEN),
    });
    *out = Box::into_raw(stream) as *mut WeStream;
    WeStatus::Ok
}

/// Push one per-second sample (raw channel values in model order). When the
/// sample completes a window, `*out_ready` is set to 1, `*out_score`
/// receives the window score, and the buffer resets; otherwise `*out_ready`
/// is 0.
///
/// # Safety
/// `stream` must be a live handle; `row` must point to `len` doubles;
/// `out_score` and `out_ready` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn we_stream_push(
    stream: *mut WeStream,
    row: *const f64,
    len: usize,
    out_score: *mut f64,
    out_ready: *mut c_int,
) -> WeStatus {
    let handle = match (stream as *mut StreamHandle).as_mut() {
        Some(h) => h,
        None => return fail(WeStatus::NullArgument, "null stream"),
    };
    if row.is_null() || out_score.is_null() || out_ready.is_null() {
        return fail(WeStatus::NullArgument, "null row or out pointer");
    }
    let channels = handle.model.channel_names().len();
    if len != channels {
        return fail(
            WeStatus::ShapeMismatch,
            &format!("expected {channels} channel values, got {len}"),
        );
    }
    let sample = std::slice::from_raw_parts(row, len);
    if sample.iter().any(|v| !v.is_finite()) {
        return fail(WeStatus::InvalidValue, "sample contains non-finite values");
    }
    *out_ready = 0;
    handle.buffer.push(sample.to_vec());
    if handle.buffer.len() == WINDOW_LEN {
        let result =
            catch_unwind(AssertUnwindSafe(|| handle.model.score(&handle.buffer)));
        handle.buffer.clear();
        match result {
            Ok(Ok(score)) => {
                *out_score = score;
                *out_ready = 1;
            }
            Ok(Err(e)) => return fail(WeStatus::ScoreFailed, &e.to_string()),
            Err(_) => return fail(WeStatus::Internal, "panic while scoring"),
        }
    }
    WeStatus::Ok
}

/// Release a streaming scorer. Null is a no-op.
///
/// # Safety
/// `stream` must have come from `we_stream_new` and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn we_stream_free(stream: *mut WeStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream as *mut StreamHandle));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use wellevent::features::{apply_normalizer, extract_stats, fit_normalizer};
    use wellevent::forest::{fit_forest, ForestParams, Task};
    use wellevent::ingest::FeatureMask;
    use wellevent::label::{segment, WindowParams};
    use wellevent::synth::{generate_episode, SynthSpec};
    use wellevent::EventType;

    fn saved_forest(dir: &Path) -> (PathBuf, Vec<wellevent::Window>) {
        let mut spec = SynthSpec::for_event(EventType::SpuriousDhsvClosure);
        spec.seed = 42;
        let episode = generate_episode(&spec, "ffi-train").unwrap();
        let windows = segment(&episode, WindowParams::default()).unwrap();
        let vectors: Vec<Vec<f64>> =
            windows.iter().map(|w| extract_stats(&w.values)).collect();
        let normalizer = fit_normalizer(&vectors).unwrap();
        let x: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| apply_normalizer(&normalizer, v).unwrap())
            .collect();
        let y: Vec<f64> = windows.iter().map(|w| w.prob_target).collect();
        let params =
            ForestParams { n_trees: 10, seed: 1, ..ForestParams::default_for(Task::Regress) };
        let mask = FeatureMask { kept: episode.channel_names.clone(), dropped: vec![] };
        let model = fit_forest(&x, &y, &params, normalizer, mask).unwrap();
        let path = dir.join("model.json");
        wellevent::forest::save_model(&model, &path).unwrap();
        (path, windows)
    }

    fn c_path(path: &Path) -> CString {
        CString::new(path.to_str().unwrap()).unwrap()
    }

    #[test]
    fn load_score_free_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (path, windows) = saved_forest(dir.path());
        let direct = load_any_model(&path).unwrap();
        unsafe {
            let mut model: *mut WeModel = std::ptr::null_mut();
            assert_eq!(we_model_load(c_path(&path).as_ptr(), &mut model), WeStatus::Ok);
            assert_eq!(we_model_kind(model), 0);
            assert_eq!(we_model_channel_count(model), 5);
            let name = we_model_channel_name(model, 0);
            assert_eq!(CStr::from_ptr(name).to_str().unwrap(), "P1");
            assert!(we_model_channel_name(model, 99).is_null());

            for w in windows.iter().take(3) {
                let flat: Vec<f64> = w.values.iter().flatten().copied().collect();
                let mut score = f64::NAN;
                assert_eq!(
                    we_model_score_window(model, flat.as_ptr(), 60, 5, &mut score),
                    WeStatus::Ok
                );
                assert_eq!(score, direct.score(&w.values).unwrap());
            }
            we_model_free(model);
        }
    }

    #[test]
    fn stream_scores_match_window_scores() {
        let dir = tempfile::tempdir().unwrap();
        let (path, windows) = saved_forest(dir.path());
        unsafe {
            let mut model: *mut WeModel = std::ptr::null_mut();
            assert_eq!(we_model_load(c_path(&path).as_ptr(), &mut model), WeStatus::Ok);
            let mut stream: *mut WeStream = std::ptr::null_mut();
            assert_eq!(we_stream_new(model, &mut stream), WeStatus::Ok);
            // the stream owns its reference: free the model immediately
            we_model_free(model);

            let mut got = Vec::new();
            for w in windows.iter().take(2) {
                for (i, row) in w.values.iter().enumerate() {
                    let mut score = f64::NAN;
                    let mut ready: c_int = -1;
                    assert_eq!(
                        we_stream_push(stream, row.as_ptr(), row.len(), &mut score, &mut ready),
                        WeStatus::Ok
                    );
                    if i < 59 {
                        assert_eq!(ready, 0);
                    } else {
                        assert_eq!(ready, 1);
                        got.push(score);
                    }
                }
            }
            we_stream_free(stream);

            let direct = load_any_model(&path).unwrap();
            for (s, w) in got.iter().zip(&windows) {
                assert_eq!(*s, direct.score(&w.values).unwrap());
            }
        }
    }

    #[test]
    fn error_codes_and_messages() {
        unsafe {
            let mut model: *mut WeModel = std::ptr::null_mut();
            assert_eq!(
                we_model_load(std::ptr::null(), &mut model),
                WeStatus::NullArgument
            );
            let missing = CString::new("/does/not/exist.json").unwrap();
            assert_eq!(
                we_model_load(missing.as_ptr(), &mut model),
                WeStatus::LoadFailed
            );
            let msg = CStr::from_ptr(we_last_error_message());
            assert!(!msg.to_str().unwrap().is_empty());
            assert_eq!(we_model_kind(std::ptr::null()), -1);
            assert_eq!(we_model_channel_count(std::ptr::null()), -1);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (path, windows) = saved_forest(dir.path());
        unsafe {
            let mut model: *mut WeModel = std::ptr::null_mut();
            assert_eq!(we_model_load(c_path(&path).as_ptr(), &mut model), WeStatus::Ok);
            let flat: Vec<f64> = windows[0].values.iter().flatten().copied().collect();
            let mut score = 0.0;
            assert_eq!(
                we_model_score_window(model, flat.as_ptr(), 59, 5, &mut score),
                WeStatus::ShapeMismatch
            );
            assert_eq!(
                we_model_score_window(model, flat.as_ptr(), 60, 4, &mut score),
                WeStatus::ShapeMismatch
            );
            let bad = vec![f64::NAN; 60 * 5];
            assert_eq!(
                we_model_score_window(model, bad.as_ptr(), 60, 5, &mut score),
                WeStatus::InvalidValue
            );
            let mut stream: *mut WeStream = std::ptr::null_mut();
            assert_eq!(we_stream_new(model, &mut stream), WeStatus::Ok);
            let row = [1.0, 2.0];
            let mut ready = 0;
            assert_eq!(
                we_stream_push(stream, row.as_ptr(), 2, &mut score, &mut ready),
                WeStatus::ShapeMismatch
            );
            we_stream_free(stream);
            we_model_free(model);
        }
    }

    #[test]
    fn window_len_matches_core() {
        assert_eq!(we_window_len(), 60);
    }

    #[test]
    fn generated_header_exists_and_declares_the_api() {
        let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/wellevent.h");
        let text = std::fs::read_to_string(header).unwrap();
        for symbol in [
            "we_model_load",
            "we_model_free",
            "we_model_score_window",
            "we_stream_new",
            "we_stream_push",
            "we_stream_free",
            "we_last_error_message",
            "WeStatus",
        ] {
            assert!(text.contains(symbol), "header missing {symbol}");
        }
    }
}
