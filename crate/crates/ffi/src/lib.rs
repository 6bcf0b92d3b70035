//! C ABI over the `uavfedsim` simulator.
//!
//! Every fallible call returns a [`UfsStatus`]; on failure the message is
//! available from [`ufs_last_error_message`] on the same thread. Configs and
//! metric logs are opaque handles released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use uavfedsim::channel::{elevation_angle, per_upper_bound};
use uavfedsim::mission::{per_fit_for, run_mission, MetricsLog, Strategy};
use uavfedsim::scheduling::{solve_schedule, RewardMatrix};
use uavfedsim::world::{load_config, Position, ServiceConfig};
use uavfedsim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Numeric = 5,
    Internal = 6,
}

/// Values accepted by `ufs_run_mission`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UfsStrategy {
    Optimized = 0,
    NoCov = 1,
    Barycenter = 2,
    Rectangular = 3,
    Ideal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UfsLogRow {
    pub round: u64,
    pub community: u64,
    pub mean_val_acc: f64,
    pub cov: f64,
    pub scheduled: u64,
    pub succeeded: u64,
    pub cum_distance: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UfsPerFit {
    pub b1: f64,
    pub b2: f64,
    pub max_abs_error: f64,
}

/// Opaque validated configuration.
pub struct UfsConfig(ServiceConfig);

/// Opaque metrics log of one mission.
pub struct UfsLog(MetricsLog);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> UfsStatus {
    match e {
        Error::Io { .. } => UfsStatus::Io,
        Error::Schema(_) | Error::InvalidConfig { .. } | Error::TaskSetup(_) => UfsStatus::Config,
        Error::DegenerateFit(_) | Error::Divergence(_) => UfsStatus::Numeric,
        Error::Shape(_) | Error::InvalidDataset(_) | Error::InfeasibleSchedule(_) => UfsStatus::InvalidArgument,
        Error::EmptyAggregation | Error::BudgetExhausted { .. } => UfsStatus::Internal,
    }
}

fn fail(status: UfsStatus, msg: impl Into<String>) -> UfsStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `Internal` and clearing the error on success.
fn guard(f: impl FnOnce() -> Result<(), (UfsStatus, String)>) -> UfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            UfsStatus::Ok
        }
        Ok(Err((s, m))) => fail(s, m),
        Err(_) => fail(UfsStatus::Internal, "panic inside uavfedsim"),
    }
}

fn lift(e: Error) -> (UfsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (UfsStatus, String) {
    (UfsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (UfsStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (UfsStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ufs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ufs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn ufs_config_default(out: *mut *mut UfsConfig) -> UfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(UfsConfig(ServiceConfig::default())));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ufs_config_load(path: *const c_char, out: *mut *mut UfsConfig) -> UfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = load_config(path_arg(path)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(UfsConfig(cfg)));
        Ok(())
    })
}

/// Releases a config; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ufs_config_free(cfg: *mut UfsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Elevation angle in degrees of a UAV at `altitude` seen from a device.
#[no_mangle]
pub extern "C" fn ufs_elevation_angle(uav_x: f64, uav_y: f64, altitude: f64, dev_x: f64, dev_y: f64) -> f64 {
    elevation_angle(&Position::new(uav_x, uav_y), altitude, &Position::new(dev_x, dev_y))
}

/// Average packet error rate between the UAV and a device under `cfg`.
#[no_mangle]
pub unsafe extern "C" fn ufs_per_upper_bound(
    cfg: *const UfsConfig,
    uav_x: f64,
    uav_y: f64,
    dev_x: f64,
    dev_y: f64,
    out: *mut f64,
) -> UfsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (u, d) = (Position::new(uav_x, uav_y), Position::new(dev_x, dev_y));
        if !(u.is_finite() && d.is_finite()) {
            return Err((UfsStatus::InvalidArgument, "coordinates must be finite".into()));
        }
        *out = per_upper_bound(&u, &d, cfg.0.uav_altitude, &cfg.0.propagation);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ufs_fit_per(cfg: *const UfsConfig, out: *mut UfsPerFit) -> UfsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let fit = per_fit_for(&cfg.0).map_err(lift)?;
        *out = UfsPerFit {
            b1: fit.b1,
            b2: fit.b2,
            max_abs_error: fit.max_abs_error,
        };
        Ok(())
    })
}

/// Optimal schedule for a row-major `steps x devices` reward matrix.
/// `out_schedule` receives `steps * devices` bytes (1 = served).
#[no_mangle]
pub unsafe extern "C" fn ufs_solve_schedule(
    rewards: *const f64,
    steps: usize,
    devices: usize,
    max_per_step: usize,
    out_schedule: *mut u8,
    out_value: *mut f64,
) -> UfsStatus {
    guard(|| {
        let len = steps
            .checked_mul(devices)
            .ok_or((UfsStatus::InvalidArgument, "matrix size overflows".to_string()))?;
        if len > 0 && (rewards.is_null() || out_schedule.is_null()) {
            return Err(null(if rewards.is_null() { "rewards" } else { "out_schedule" }));
        }
        if out_value.is_null() {
            return Err(null("out_value"));
        }
        let values = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(rewards, len).to_vec()
        };
        let r = RewardMatrix::new(steps, devices, values).map_err(lift)?;
        let (s, v) = solve_schedule(&r, max_per_step);
        if len > 0 {
            let out = std::slice::from_raw_parts_mut(out_schedule, len);
            out.fill(0);
            for a in s.assignments() {
                out[a.step * devices + a.device] = 1;
            }
        }
        *out_value = v;
        Ok(())
    })
}

fn strategy_from(code: i32) -> Option<Strategy> {
    Some(match code {
        0 => Strategy::Optimized,
        1 => Strategy::NoCov,
        2 => Strategy::Barycenter,
        3 => Strategy::Rectangular,
        4 => Strategy::Ideal,
        _ => return None,
    })
}

/// Runs a full mission. `strategy` takes a `UfsStrategy` value.
#[no_mangle]
pub unsafe extern "C" fn ufs_run_mission(cfg: *const UfsConfig, strategy: i32, seed: u64, out: *mut *mut UfsLog) -> UfsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = strategy_from(strategy)
            .ok_or_else(|| (UfsStatus::InvalidArgument, format!("unknown strategy code {strategy}")))?;
        let log = run_mission(&cfg.0, s, seed).map_err(lift)?;
        *out = Box::into_raw(Box::new(UfsLog(log)));
        Ok(())
    })
}

/// Number of rows (rounds x communities); 0 for a null log.
#[no_mangle]
pub unsafe extern "C" fn ufs_log_num_rows(log: *const UfsLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.rows.len())
}

#[no_mangle]
pub unsafe extern "C" fn ufs_log_row(log: *const UfsLog, index: usize, out: *mut UfsLogRow) -> UfsStatus {
    guard(|| {
        let log = log.as_ref().ok_or_else(|| null("log"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = log.0.rows.get(index).ok_or_else(|| {
            (
                UfsStatus::InvalidArgument,
                format!("row {index} out of range ({} rows)", log.0.rows.len()),
            )
        })?;
        *out = UfsLogRow {
            round: r.round as u64,
            community: r.community as u64,
            mean_val_acc: r.mean_val_acc,
            cov: r.cov,
            scheduled: r.scheduled as u64,
            succeeded: r.succeeded as u64,
            cum_distance: r.cum_distance,
        };
        Ok(())
    })
}

/// Writes the log in the CLI's metrics CSV format.
#[no_mangle]
pub unsafe extern "C" fn ufs_log_write_csv(log: *const UfsLog, path: *const c_char) -> UfsStatus {
    guard(|| {
        let log = log.as_ref().ok_or_else(|| null("log"))?;
        log.0.write_csv(path_arg(path)?).map_err(lift)
    })
}

/// Releases a log; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ufs_log_free(log: *mut UfsLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

