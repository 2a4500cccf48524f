//! C ABI over the monitored-boson toolkit.
//!
//! Every entry point returns a [`MonitorStatus`]; on failure the message is
//! kept per thread and read with [`monitor_last_error`]. Objects cross the
//! boundary as opaque handles created by `*_new`/`*_simulate`-style calls
//! and released with the matching `*_free`. Panics never unwind into C: they
//! are caught and reported as [`MonitorStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use monitor_core::experiment::{run_pipeline, ExperimentConfig, Pipeline};
use monitor_core::filter::{analytic_filter_single_default, FilterKernel};
use monitor_core::fock::{simulate_fock_trajectory_adaptive, FockOperators, FockState};
use monitor_core::gaussian::{simulate_trajectory_single, steady_state_single, GaussianState1, SingleSiteParams};
use monitor_core::postselect::{compute_estimators, recover_variance, BinningOptions};
use monitor_core::stochastic::{MeasurementRecord, SeedSpec, SiteSeries, TimeGrid};
use monitor_core::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    Numerical = 4,
    InsufficientData = 5,
    Config = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Measurement record of one site (opaque).
pub struct MonitorRecord {
    inner: MeasurementRecord,
}

/// Estimator kernel (opaque).
pub struct MonitorKernel {
    inner: FilterKernel,
}

/// Number-basis pure state (opaque).
pub struct MonitorFockState {
    inner: FockState,
}

/// Experiment configuration (opaque).
pub struct MonitorConfig {
    inner: ExperimentConfig,
}

/// Single-site steady state and filter constants.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonitorSteadyState {
    pub v_x: f64,
    pub v_p: f64,
    pub u: f64,
    /// Memory time `τ = 1/(2Γ v_x)`.
    pub tau: f64,
    /// Filter damping rate `1/τ`.
    pub decay_rate: f64,
    /// Filter oscillation frequency `Γ h0 τ`.
    pub frequency: f64,
}

/// Means and symmetrized central second moments.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonitorMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub v_x: f64,
    pub v_p: f64,
    pub u: f64,
}

/// Pooled postselected recovery.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonitorRecovery {
    pub value: f64,
    /// Standard error of `value`.
    pub std_error: f64,
    pub n_used: usize,
    pub excluded_fraction: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Failure carried to the boundary.
struct Failure {
    status: MonitorStatus,
    message: String,
}

impl Failure {
    fn new(status: MonitorStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter { .. } | Error::InvalidWindow(_) | Error::ShapeMismatch(_) => {
                MonitorStatus::InvalidArgument
            }
            Error::UnsupportedParameter(_) | Error::GaplessParameters(_) | Error::UnknownFigure(_) => {
                MonitorStatus::Unsupported
            }
            Error::Instability(_) | Error::CutoffTooSmall { .. } | Error::NotPositiveDefinite(_) => {
                MonitorStatus::Numerical
            }
            Error::InsufficientData(_) | Error::EmptyDataset | Error::AllBinsUnderThreshold { .. } => {
                MonitorStatus::InsufficientData
            }
            Error::Config { .. } => MonitorStatus::Config,
            Error::MalformedRecord(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => MonitorStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MonitorStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MonitorStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MonitorStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(MonitorStatus::NullPointer, format!("`{what}` is null"))
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` is null or valid for writing a `T`.
unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(MonitorStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn monitor_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn monitor_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Closed-form single-site steady state at onsite energy `h0 > 0` and
/// measurement rate `gamma > 0`.
///
/// # Safety
/// `out` must be valid for writing one [`MonitorSteadyState`].
#[no_mangle]
pub unsafe extern "C" fn monitor_steady_state_single(h0: f64, gamma: f64, out: *mut MonitorSteadyState) -> MonitorStatus {
    guard(|| {
        let params = SingleSiteParams::new(h0, gamma)?;
        let ss = steady_state_single(&params)?;
        let value = MonitorSteadyState {
            v_x: ss.v_x,
            v_p: ss.v_p,
            u: ss.u,
            tau: ss.tau,
            decay_rate: ss.decay_rate(),
            frequency: gamma * h0 * ss.tau,
        };
        write_out(out, value, "out")
    })
}

/// Simulates one Gaussian single-site trajectory from the vacuum and
/// returns its record. The noise stream is that of trajectory
/// `trajectory_index` under `master_seed`.
///
/// # Safety
/// `out` must be valid for writing one pointer. The returned handle is owned
/// by the caller and must be released with [`monitor_record_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_record_simulate_single(
    h0: f64,
    gamma: f64,
    dt: f64,
    t_final: f64,
    master_seed: u64,
    trajectory_index: u64,
    out: *mut *mut MonitorRecord,
) -> MonitorStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = SingleSiteParams::new(h0, gamma)?;
        let grid = TimeGrid::from_duration(dt, t_final)?;
        let seed = SeedSpec::new(master_seed, trajectory_index);
        let (_, record) = simulate_trajectory_single(&params, &GaussianState1::vacuum(), &grid, &seed)?;
        out.write(Box::into_raw(Box::new(MonitorRecord { inner: record })));
        Ok(())
    })
}

/// Wraps `n_steps` caller-supplied increments on the grid `t = k·dt`.
///
/// # Safety
/// `increments` must be valid for `n_steps` reads; `out` for writing one
/// pointer. Release the handle with [`monitor_record_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_record_from_increments(
    dt: f64,
    increments: *const f64,
    n_steps: usize,
    out: *mut *mut MonitorRecord,
) -> MonitorStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = slice_arg(increments, n_steps, "increments")?.to_vec();
        let grid = TimeGrid::new(0.0, dt, n_steps)?;
        let record = MeasurementRecord::chain(grid, SiteSeries::from_vec(1, n_steps, data)?)?;
        out.write(Box::into_raw(Box::new(MonitorRecord { inner: record })));
        Ok(())
    })
}

/// Number of increments in the record.
///
/// # Safety
/// `record` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn monitor_record_len(record: *const MonitorRecord, out: *mut usize) -> MonitorStatus {
    guard(|| {
        let r = deref(record, "record")?;
        write_out(out, r.inner.grid().n_steps, "out")
    })
}

/// Copies the increments into `buf`, which must hold at least
/// [`monitor_record_len`] values.
///
/// # Safety
/// `record` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn monitor_record_copy(record: *const MonitorRecord, buf: *mut f64, len: usize) -> MonitorStatus {
    guard(|| {
        let r = deref(record, "record")?;
        let data = r.inner.site(0);
        if len < data.len() {
            return Err(Failure::new(
                MonitorStatus::BufferTooSmall,
                format!("buffer holds {len} values, record has {}", data.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// Releases a record. Null is accepted.
///
/// # Safety
/// `record` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn monitor_record_free(record: *mut MonitorRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Closed-form single-site `x` estimator kernel on step `dt`.
///
/// # Safety
/// `out` must be valid for writing one pointer. Release the handle with
/// [`monitor_kernel_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_kernel_analytic_single(
    h0: f64,
    gamma: f64,
    dt: f64,
    out: *mut *mut MonitorKernel,
) -> MonitorStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = SingleSiteParams::new(h0, gamma)?;
        let kernel = analytic_filter_single_default(&params, dt)?;
        out.write(Box::into_raw(Box::new(MonitorKernel { inner: kernel })));
        Ok(())
    })
}

/// Number of lags in the kernel support.
///
/// # Safety
/// `kernel` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn monitor_kernel_len(kernel: *const MonitorKernel, out: *mut usize) -> MonitorStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        write_out(out, k.inner.n_lags(), "out")
    })
}

/// Estimator `gain·Σ K·dI` at time `t_obs` (which must lie on the record
/// grid).
///
/// # Safety
/// `kernel` and `record` must be live handles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn monitor_kernel_estimate(
    kernel: *const MonitorKernel,
    record: *const MonitorRecord,
    t_obs: f64,
    out: *mut f64,
) -> MonitorStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        let r = deref(record, "record")?;
        let est = compute_estimators(&r.inner, &k.inner, &[0], t_obs)?;
        write_out(out, est[0], "out")
    })
}

/// Releases a kernel. Null is accepted.
///
/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn monitor_kernel_free(kernel: *mut MonitorKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Number state `|n⟩` in a basis of `dim` levels.
///
/// # Safety
/// `out` must be valid for writing one pointer. Release the handle with
/// [`monitor_fock_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_fock_number(n: usize, dim: usize, out: *mut *mut MonitorFockState) -> MonitorStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let state = FockState::number(n, dim)?;
        out.write(Box::into_raw(Box::new(MonitorFockState { inner: state })));
        Ok(())
    })
}

/// Equal superposition `(|m⟩ + |n⟩)/√2` in a basis of `dim` levels.
///
/// # Safety
/// `out` must be valid for writing one pointer. Release the handle with
/// [`monitor_fock_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_fock_superposition(
    m: usize,
    n: usize,
    dim: usize,
    out: *mut *mut MonitorFockState,
) -> MonitorStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let state = FockState::superposition(m, n, dim)?;
        out.write(Box::into_raw(Box::new(MonitorFockState { inner: state })));
        Ok(())
    })
}

/// Evolves `state` under continuous `x` measurement for `t_final` and
/// returns the final state and the emitted record. The basis grows when the
/// state reaches the truncation.
///
/// # Safety
/// `state` must be a live handle; `out_state` and `out_record` valid for
/// writing one pointer each (`out_record` may be null to discard the
/// record). Release the results with [`monitor_fock_free`] and
/// [`monitor_record_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn monitor_fock_evolve(
    state: *const MonitorFockState,
    h0: f64,
    gamma: f64,
    dt: f64,
    t_final: f64,
    master_seed: u64,
    trajectory_index: u64,
    out_state: *mut *mut MonitorFockState,
    out_record: *mut *mut MonitorRecord,
) -> MonitorStatus {
    guard(|| {
        let s = deref(state, "state")?;
        if out_state.is_null() {
            return Err(null("out_state"));
        }
        let params = SingleSiteParams::new(h0, gamma)?;
        let grid = TimeGrid::from_duration(dt, t_final)?;
        let ops = FockOperators::new(s.inner.dim())?;
        let seed = SeedSpec::new(master_seed, trajectory_index);
        let traj = simulate_fock_trajectory_adaptive(&params, &s.inner, &ops, &grid, &seed, usize::MAX)?;
        out_state.write(Box::into_raw(Box::new(MonitorFockState { inner: traj.final_state })));
        if !out_record.is_null() {
            out_record.write(Box::into_raw(Box::new(MonitorRecord { inner: traj.record })));
        }
        Ok(())
    })
}

/// Basis size of the state.
///
/// # Safety
/// `state` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn monitor_fock_dim(state: *const MonitorFockState, out: *mut usize) -> MonitorStatus {
    guard(|| {
        let s = deref(state, "state")?;
        write_out(out, s.inner.dim(), "out")
    })
}

/// Quadrature means and central second moments of the state.
///
/// # Safety
/// `state` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn monitor_fock_moments(state: *const MonitorFockState, out: *mut MonitorMoments) -> MonitorStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let m = s.inner.moments(&FockOperators::new(s.inner.dim())?);
        let value = MonitorMoments {
            mean_x: m.mean_x,
            mean_p: m.mean_p,
            v_x: m.v_x,
            v_p: m.v_p,
            u: m.u,
        };
        write_out(out, value, "out")
    })
}

/// Releases a number-basis state. Null is accepted.
///
/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn monitor_fock_free(state: *mut MonitorFockState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Conditional variance recovered from `n` (estimator, measured) pairs with
/// `n_bins` equal-width estimator bins; bins with fewer than `min_count`
/// samples are excluded.
///
/// # Safety
/// `estimators` and `measured` must be valid for `n` reads; `out` for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn monitor_recover_variance(
    estimators: *const f64,
    measured: *const f64,
    n: usize,
    n_bins: usize,
    min_count: usize,
    out: *mut MonitorRecovery,
) -> MonitorStatus {
    guard(|| {
        let est = slice_arg(estimators, n, "estimators")?;
        let meas = slice_arg(measured, n, "measured")?;
        let opts = BinningOptions {
            min_count,
            ..BinningOptions::default()
        };
        let r = recover_variance(est, meas, n_bins, &opts)?;
        let value = MonitorRecovery {
            value: r.value,
            std_error: r.stderr,
            n_used: r.n_used,
            excluded_fraction: r.excluded_fraction,
        };
        write_out(out, value, "out")
    })
}

/// Default experiment configuration.
///
/// # Safety
/// `out` must be valid for writing one pointer. Release the handle with
/// [`monitor_config_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_config_default(out: *mut *mut MonitorConfig) -> MonitorStatus {
    guard(|| {
        write_out(
            out,
            Box::into_raw(Box::new(MonitorConfig {
                inner: ExperimentConfig::default(),
            })),
            "out",
        )
    })
}

/// Parses a configuration from sectioned text or JSON.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` valid for writing one
/// pointer. Release the handle with [`monitor_config_free`].
#[no_mangle]
pub unsafe extern "C" fn monitor_config_parse(text: *const c_char, out: *mut *mut MonitorConfig) -> MonitorStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ExperimentConfig::from_str_any(str_arg(text, "text")?)?;
        out.write(Box::into_raw(Box::new(MonitorConfig { inner: cfg })));
        Ok(())
    })
}

/// Sets `section.key` to `value`.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn monitor_config_set(
    config: *mut MonitorConfig,
    key: *const c_char,
    value: *const c_char,
) -> MonitorStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        cfg.inner.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// Writes the NUL-terminated SHA-256 hex digest of the canonical
/// configuration text (65 bytes) into `buf`.
///
/// # Safety
/// `config` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn monitor_config_hash(config: *const MonitorConfig, buf: *mut c_char, len: usize) -> MonitorStatus {
    guard(|| {
        let cfg = deref(config, "config")?;
        let hash = cfg.inner.hash();
        if len < hash.len() + 1 {
            return Err(Failure::new(
                MonitorStatus::BufferTooSmall,
                format!("hash needs {} bytes", hash.len() + 1),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast::<c_char>(), buf, hash.len());
        buf.add(hash.len()).write(0);
        Ok(())
    })
}

/// Runs a pipeline (`simulate`, `steady-state`, `filter-analytic`,
/// `filter-design`, `postselect` or `husimi`) and writes its tables and
/// sidecar into `out_dir`, or into the configured output path when
/// `out_dir` is null.
///
/// # Safety
/// `config` must be a live handle; `pipeline` a NUL-terminated string;
/// `out_dir` null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn monitor_run_pipeline(
    config: *const MonitorConfig,
    pipeline: *const c_char,
    out_dir: *const c_char,
) -> MonitorStatus {
    guard(|| {
        let cfg = deref(config, "config")?;
        let name = str_arg(pipeline, "pipeline")?;
        let pipeline = [
            Pipeline::Simulate,
            Pipeline::SteadyState,
            Pipeline::FilterAnalytic,
            Pipeline::FilterDesign,
            Pipeline::Postselect,
            Pipeline::Husimi,
        ]
        .into_iter()
        .find(|p| p.name() == name)
        .ok_or_else(|| Failure::new(MonitorStatus::InvalidArgument, format!("unknown pipeline `{name}`")))?;
        let mut cfg = cfg.inner.clone();
        if !out_dir.is_null() {
            cfg.output.path = PathBuf::from(str_arg(out_dir, "out_dir")?);
        }
        run_pipeline(&cfg, pipeline)?;
        Ok(())
    })
}

/// Releases a configuration. Null is accepted.
///
/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn monitor_config_free(config: *mut MonitorConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}
