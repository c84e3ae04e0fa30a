//! C ABI over `cwhom`.
//!
//! Objects are opaque handles created by `cwhom_*_new`/producer calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CwhomStatus`]; the message of the most recent failure on the calling
//! thread is available from [`cwhom_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cwhom::analysis::{fit_hom, FitModel, Freedom, HomFit};
use cwhom::cli::{execute, preset_config, Format, PipelineConfig};
use cwhom::correlator::{correlate, normalize, CoincidenceHistogram, HistogramSpec, NormalizedFringe, Wing};
use cwhom::lasersim::{run_experiment, ExperimentRun};
use cwhom::spectral::{coincidence_probability, g1, FringeModel, Lineshape};
use cwhom::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwhomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NoConvergence = 4,
    Io = 5,
    Format = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Lineshape family selector for [`CwhomLineshape`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwhomLineshapeKind {
    Lorentzian = 0,
    Rectangular = 1,
    Gaussian = 2,
    FmTriangle = 3,
}

/// Plain-data lineshape. `width` is the FWHM (Lorentzian, Gaussian), the
/// full width (rectangular) or the intrinsic FWHM (FM triangle);
/// `mod_rate` and `deviation` are used by the FM triangle only. Hz.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CwhomLineshape {
    pub kind: CwhomLineshapeKind,
    pub width: f64,
    pub mod_rate: f64,
    pub deviation: f64,
}

impl From<CwhomLineshape> for Lineshape {
    fn from(l: CwhomLineshape) -> Self {
        match l.kind {
            CwhomLineshapeKind::Lorentzian => Lineshape::Lorentzian { fwhm: l.width },
            CwhomLineshapeKind::Rectangular => Lineshape::Rectangular { width: l.width },
            CwhomLineshapeKind::Gaussian => Lineshape::Gaussian { fwhm: l.width },
            CwhomLineshapeKind::FmTriangle => {
                Lineshape::FmTriangle { intrinsic_fwhm: l.width, mod_rate: l.mod_rate, deviation: l.deviation }
            }
        }
    }
}

/// Analytic coincidence-probability model.
pub struct CwhomFringeModel(FringeModel);

/// Photon timestamps of a simulated run.
pub struct CwhomRun(ExperimentRun);

/// Coincidence histogram with its wing-normalized fringe.
pub struct CwhomHistogram {
    hist: CoincidenceHistogram,
    fringe: Option<NormalizedFringe>,
}

/// Converged fringe fit.
pub struct CwhomFit(HomFit);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CwhomStatus {
    match err {
        Error::Io(_) => CwhomStatus::Io,
        Error::Format(_) => CwhomStatus::Format,
        Error::Config(_) | Error::SpecMismatch => CwhomStatus::Config,
        e if e.is_convergence() => CwhomStatus::NoConvergence,
        e if e.is_validation() => CwhomStatus::InvalidArgument,
        _ => CwhomStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CwhomStatus, String)>) -> CwhomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CwhomStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CwhomStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (CwhomStatus, String)>;
}

impl<T> IntoFfi<T> for cwhom::Result<T> {
    fn ffi(self) -> Result<T, (CwhomStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (CwhomStatus, String) {
    (CwhomStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CwhomStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CwhomStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (CwhomStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cwhom_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cwhom_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Normalized first-order coherence of a closed-form lineshape at delay `tau` (s).
///
/// # Safety
/// `lineshape` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cwhom_g1(lineshape: *const CwhomLineshape, tau: f64, out: *mut f64) -> CwhomStatus {
    guard(|| {
        let l = lineshape.as_ref().ok_or_else(|| null("lineshape"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = g1(&Lineshape::from(*l), tau).ffi()?;
        Ok(())
    })
}

/// Creates a fringe model. `delta_omega` is in rad/s; `classical` rejects
/// visibilities above 0.5.
///
/// # Safety
/// Pointer arguments must be valid; `*out` receives a handle to free with
/// [`cwhom_fringe_model_free`].
#[no_mangle]
pub unsafe extern "C" fn cwhom_fringe_model_new(
    visibility: f64,
    lineshape_1: *const CwhomLineshape,
    lineshape_2: *const CwhomLineshape,
    delta_omega: f64,
    classical: bool,
    out: *mut *mut CwhomFringeModel,
) -> CwhomStatus {
    guard(|| {
        let l1 = lineshape_1.as_ref().ok_or_else(|| null("lineshape_1"))?;
        let l2 = lineshape_2.as_ref().ok_or_else(|| null("lineshape_2"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = if classical {
            FringeModel::classical(visibility, (*l1).into(), (*l2).into(), delta_omega)
        } else {
            FringeModel::new(visibility, (*l1).into(), (*l2).into(), delta_omega)
        }
        .ffi()?;
        put(out, CwhomFringeModel(model));
        Ok(())
    })
}

/// Coincidence probability at relative delay `delta_t` (s).
///
/// # Safety
/// `model` must come from [`cwhom_fringe_model_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cwhom_fringe_model_eval(model: *const CwhomFringeModel, delta_t: f64, out: *mut f64) -> CwhomStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = coincidence_probability(&m.0, delta_t);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwhom_fringe_model_free(model: *mut CwhomFringeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates the experiment described by the `[experiment]` section of a
/// TOML configuration.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `*out` receives a handle
/// to free with [`cwhom_run_free`].
#[no_mangle]
pub unsafe extern "C" fn cwhom_run_new(config_toml: *const c_char, out: *mut *mut CwhomRun) -> CwhomStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = PipelineConfig::from_toml(text).ffi()?;
        let experiment = config
            .experiment
            .as_ref()
            .ok_or_else(|| (CwhomStatus::Config, "missing [experiment] section".to_string()))?;
        put(out, CwhomRun(run_experiment(experiment).ffi()?));
        Ok(())
    })
}

/// Number of events on channel 0 (A) or 1 (B); 0 for other channels.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwhom_run_event_count(run: *const CwhomRun, channel: u32) -> usize {
    match (run.as_ref(), channel) {
        (Some(r), 0) => r.0.events_a.len(),
        (Some(r), 1) => r.0.events_b.len(),
        _ => 0,
    }
}

/// Copies a channel's picosecond timestamps into `buffer`, which must
/// hold at least [`cwhom_run_event_count`] entries.
///
/// # Safety
/// `buffer` must point to `capacity` writable `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn cwhom_run_copy_events(
    run: *const CwhomRun,
    channel: u32,
    buffer: *mut u64,
    capacity: usize,
) -> CwhomStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let events = match channel {
            0 => &r.0.events_a,
            1 => &r.0.events_b,
            c => return Err((CwhomStatus::InvalidArgument, format!("channel {c} is not 0 or 1"))),
        };
        if capacity < events.len() {
            return Err((CwhomStatus::BufferTooSmall, format!("need {} entries, have {capacity}", events.len())));
        }
        if !events.is_empty() {
            if buffer.is_null() {
                return Err(null("buffer"));
            }
            ptr::copy_nonoverlapping(events.as_ptr(), buffer, events.len());
        }
        Ok(())
    })
}

/// Simulated duration, seconds.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwhom_run_duration(run: *const CwhomRun) -> f64 {
    run.as_ref().map_or(0.0, |r| r.0.metadata.duration)
}

/// # Safety
/// `run` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwhom_run_free(run: *mut CwhomRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Correlates two sorted picosecond timestamp streams. When the histogram
/// allows it, the outer-half wing normalization is computed too.
///
/// # Safety
/// `events_a`/`events_b` must point to `len_a`/`len_b` values; `*out`
/// receives a handle to free with [`cwhom_histogram_free`].
#[no_mangle]
pub unsafe extern "C" fn cwhom_correlate(
    events_a: *const u64,
    len_a: usize,
    events_b: *const u64,
    len_b: usize,
    bin_width_ps: u64,
    window_ps: u64,
    out: *mut *mut CwhomHistogram,
) -> CwhomStatus {
    guard(|| {
        let a = slice_arg(events_a, len_a, "events_a")?;
        let b = slice_arg(events_b, len_b, "events_b")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = HistogramSpec::new(bin_width_ps, window_ps).ffi()?;
        let hist = correlate(a, b, &spec).ffi()?;
        let fringe = normalize(&hist, Wing::outer_half(&spec)).ok();
        put(out, CwhomHistogram { hist, fringe });
        Ok(())
    })
}

/// Number of bins.
///
/// # Safety
/// `hist` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwhom_histogram_bins(hist: *const CwhomHistogram) -> usize {
    hist.as_ref().map_or(0, |h| h.hist.counts.len())
}

/// Copies raw counts, and optionally bin centres (s), into caller buffers
/// of at least [`cwhom_histogram_bins`] entries. Either buffer may be NULL.
///
/// # Safety
/// Non-NULL buffers must hold `capacity` writable elements.
#[no_mangle]
pub unsafe extern "C" fn cwhom_histogram_copy(
    hist: *const CwhomHistogram,
    counts: *mut u64,
    centers: *mut f64,
    capacity: usize,
) -> CwhomStatus {
    guard(|| {
        let h = hist.as_ref().ok_or_else(|| null("hist"))?;
        let n = h.hist.counts.len();
        if capacity < n {
            return Err((CwhomStatus::BufferTooSmall, format!("need {n} entries, have {capacity}")));
        }
        if !counts.is_null() {
            ptr::copy_nonoverlapping(h.hist.counts.as_ptr(), counts, n);
        }
        if !centers.is_null() {
            for (i, c) in h.hist.centers().enumerate() {
                *centers.add(i) = c;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `hist` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwhom_histogram_free(hist: *mut CwhomHistogram) {
    if !hist.is_null() {
        drop(Box::from_raw(hist));
    }
}

/// Fits the normalized fringe with an effective Lorentzian
/// (`V`, `tau_c`, baseline free). `free_delta_omega` also fits the beat
/// frequency.
///
/// # Safety
/// `hist` must be a live handle; `*out` receives a handle to free with
/// [`cwhom_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn cwhom_fit_effective_lorentzian(
    hist: *const CwhomHistogram,
    free_delta_omega: bool,
    out: *mut *mut CwhomFit,
) -> CwhomStatus {
    guard(|| {
        let mut model = FitModel::effective_lorentzian();
        if free_delta_omega {
            model = model.with_delta_omega(Freedom::Free);
        }
        fit_into(hist, &model, out)
    })
}

/// Fits with the physical model built from two fixed lineshapes
/// (`V` and baseline free, `delta_omega` free when requested).
///
/// # Safety
/// As [`cwhom_fit_effective_lorentzian`]; lineshape pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cwhom_fit_physical(
    hist: *const CwhomHistogram,
    lineshape_1: *const CwhomLineshape,
    lineshape_2: *const CwhomLineshape,
    free_delta_omega: bool,
    out: *mut *mut CwhomFit,
) -> CwhomStatus {
    guard(|| {
        let l1 = lineshape_1.as_ref().ok_or_else(|| null("lineshape_1"))?;
        let l2 = lineshape_2.as_ref().ok_or_else(|| null("lineshape_2"))?;
        let mut model = FitModel::physical((*l1).into(), (*l2).into());
        if free_delta_omega {
            model = model.with_delta_omega(Freedom::Free);
        }
        fit_into(hist, &model, out)
    })
}

unsafe fn fit_into(hist: *const CwhomHistogram, model: &FitModel, out: *mut *mut CwhomFit) -> Result<(), (CwhomStatus, String)> {
    let h = hist.as_ref().ok_or_else(|| null("hist"))?;
    if out.is_null() {
        return Err(null("out"));
    }
    let fringe = h
        .fringe
        .as_ref()
        .ok_or_else(|| (CwhomStatus::Numerical, "histogram could not be normalized".to_string()))?;
    put(out, CwhomFit(fit_hom(fringe, model, None).ffi()?));
    Ok(())
}

/// Looks up a fitted parameter by name (`visibility`, `tau_c`,
/// `delta_omega`, `baseline`, `width_1`, `width_2`).
///
/// # Safety
/// `fit` must be a live handle; `name` NUL-terminated; `value`/`sigma`
/// valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn cwhom_fit_parameter(
    fit: *const CwhomFit,
    name: *const c_char,
    value: *mut f64,
    sigma: *mut f64,
) -> CwhomStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let name = str_arg(name, "name")?;
        let p = f.0.get(name).ok_or_else(|| (CwhomStatus::InvalidArgument, format!("no fitted parameter `{name}`")))?;
        if !value.is_null() {
            *value = p.value;
        }
        if !sigma.is_null() {
            *sigma = p.sigma;
        }
        Ok(())
    })
}

/// Reduced chi-square of the fit; NaN for a NULL handle.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cwhom_fit_reduced_chi2(fit: *const CwhomFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.reduced_chi2)
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cwhom_fit_free(fit: *mut CwhomFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Runs a named preset end to end, writing artifacts into `out_dir`.
/// `seed` 0 keeps the preset's seeds; `duration` <= 0 keeps its duration.
///
/// # Safety
/// `name` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cwhom_preset_run(name: *const c_char, seed: u64, duration: f64, out_dir: *const c_char) -> CwhomStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let mut config = preset_config(name).ffi()?;
        if seed != 0 {
            config.reseed(seed);
        }
        if duration > 0.0 {
            if let Some(e) = config.experiment.as_mut() {
                e.duration = duration;
            }
        }
        execute(&config, name, Path::new(dir), Format::Csv).ffi()?;
        Ok(())
    })
}
