//! C ABI over the superatom library.
//!
//! Every fallible function returns an [`SaStatus`]; on failure a message is kept
//! per thread and can be copied out with [`sa_last_error_message`]. Models and
//! click sets are opaque heap handles released with their `_free` function.
//! Panics never cross the boundary; they surface as [`SaStatus::Panic`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use superatom::bethe::{ideal_correlations_at, outgoing_wavefunction, ModeFunction};
use superatom::jacobi::{connected_g3, to_jacobi};
use superatom::master::transmission_trace;
use superatom::regression::{correlator_g, normalized_g};
use superatom::trajectory::{simulate_ensemble, ClickRecord, TrajectoryConfig};
use superatom::{Error, PulseSpec, SystemParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    Integration = 4,
    Accuracy = 5,
    Trajectory = 6,
    Inconsistent = 7,
    Empty = 8,
    UnsupportedOrder = 9,
    Io = 10,
    Parse = 11,
    Panic = 12,
}

fn status_of(err: &Error) -> SaStatus {
    match err {
        Error::InvalidParameter { .. } => SaStatus::InvalidParameter,
        Error::Domain(_) => SaStatus::Domain,
        Error::Integration { .. } => SaStatus::Integration,
        Error::Accuracy { .. } => SaStatus::Accuracy,
        Error::Trajectory { .. } => SaStatus::Trajectory,
        Error::Inconsistent(_) => SaStatus::Inconsistent,
        Error::Empty(_) => SaStatus::Empty,
        Error::UnsupportedOrder(_) => SaStatus::UnsupportedOrder,
        Error::Io(_) => SaStatus::Io,
        Error::Parse { .. } | Error::UnknownKey { .. } | Error::UnknownCommand(_) => SaStatus::Parse,
        Error::Stage { source, .. } => status_of(source),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SaStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SaStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SaStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(what))
}

/// Copies the calling thread's last error message, NUL terminated and truncated
/// to `capacity`. Returns the full message length in bytes without the NUL.
///
/// # Safety
/// `buffer` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sa_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buffer.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            let dst = slice::from_raw_parts_mut(buffer as *mut u8, capacity);
            dst[..n].copy_from_slice(&msg.as_bytes()[..n]);
            dst[n] = 0;
        }
        msg.len()
    })
}

/// Emitter parameters and probe pulse.
pub struct SaModel {
    params: SystemParams,
    pulse: PulseSpec,
}

/// Creates a model. Rates in µs⁻¹ and times in µs.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn sa_model_new(
    kappa: f64,
    gamma_r: f64,
    gamma_d: f64,
    peak_rate: f64,
    t_start: f64,
    t_end: f64,
    ramp: f64,
    out: *mut *mut SaModel,
) -> SaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = std::ptr::null_mut();
        let params = SystemParams::new(kappa, gamma_r, gamma_d)?;
        let pulse = PulseSpec::new(peak_rate, t_start, t_end, ramp)?;
        *out = Box::into_raw(Box::new(SaModel { params, pulse }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`sa_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sa_model_free(model: *mut SaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input and transmitted photon rates at `n` increasing times.
///
/// # Safety
/// `model` must be a live handle; the arrays must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn sa_model_rates(
    model: *const SaModel,
    times: *const f64,
    n: usize,
    input_rate: *mut f64,
    output_rate: *mut f64,
) -> SaStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        let times = input(times, n, "times")?;
        let inp = output(input_rate, n, "input_rate")?;
        let outp = output(output_rate, n, "output_rate")?;
        let trace = transmission_trace(&m.params, &m.pulse, times)?;
        for (k, p) in trace.iter().enumerate() {
            inp[k] = p.input_rate;
            outp[k] = p.output_rate;
        }
        Ok(())
    })
}

/// Unnormalized order-`order` correlator of the outgoing field; `times` holds `order` entries.
///
/// # Safety
/// `model` must be a live handle, `times` must hold `order` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_correlator(
    model: *const SaModel,
    order: usize,
    times: *const f64,
    out: *mut f64,
) -> SaStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        let times = input(times, order, "times")?;
        *out_ref(out, "out")? = correlator_g(order, times, &m.params, &m.pulse)?;
        Ok(())
    })
}

/// Normalized order-`order` correlation g⁽ⁿ⁾.
///
/// # Safety
/// As for [`sa_model_correlator`].
#[no_mangle]
pub unsafe extern "C" fn sa_model_normalized(
    model: *const SaModel,
    order: usize,
    times: *const f64,
    out: *mut f64,
) -> SaStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        let times = input(times, order, "times")?;
        *out_ref(out, "out")? = normalized_g(order, times, &m.params, &m.pulse)?;
        Ok(())
    })
}

/// Detector clicks of a simulated pulse ensemble.
pub struct SaClickSet {
    records: Vec<ClickRecord>,
}

/// Runs `n_pulses` quantum-jump trajectories with round-robin detector assignment
/// and no dead time.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_simulate(
    model: *const SaModel,
    n_pulses: u32,
    seed: u64,
    dt_max: f64,
    detectors: u8,
    out: *mut *mut SaClickSet,
) -> SaStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        let out = out_ref(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = TrajectoryConfig {
            n_pulses,
            seed,
            dt_max,
            detectors,
            ..TrajectoryConfig::default()
        };
        let records = simulate_ensemble(&m.params, &m.pulse, &cfg)?;
        *out = Box::into_raw(Box::new(SaClickSet { records }));
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a handle from [`sa_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sa_click_set_free(set: *mut SaClickSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of clicks in total across all pulses.
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_click_set_total(set: *const SaClickSet, out: *mut usize) -> SaStatus {
    guard(|| {
        let s = set.as_ref().ok_or(Failure::Null("set"))?;
        *out_ref(out, "out")? = s.records.iter().map(|r| r.len()).sum();
        Ok(())
    })
}

/// Copies all clicks in pulse order into caller arrays of length `capacity`,
/// which must be at least [`sa_click_set_total`].
///
/// # Safety
/// `set` must be a live handle; each array must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn sa_click_set_copy(
    set: *const SaClickSet,
    pulse_ids: *mut u32,
    times: *mut f64,
    channels: *mut u8,
    capacity: usize,
) -> SaStatus {
    guard(|| {
        let s = set.as_ref().ok_or(Failure::Null("set"))?;
        let total: usize = s.records.iter().map(|r| r.len()).sum();
        if capacity < total {
            return Err(Error::Inconsistent(format!("capacity {capacity} is below the {total} clicks")).into());
        }
        let ids = output(pulse_ids, total, "pulse_ids")?;
        let ts = output(times, total, "times")?;
        let ch = output(channels, total, "channels")?;
        let mut k = 0;
        for r in &s.records {
            for (t, c) in r.clicks.iter().zip(&r.channels) {
                ids[k] = r.pulse_id;
                ts[k] = *t;
                ch[k] = *c;
                k += 1;
            }
        }
        Ok(())
    })
}

/// n-photon outgoing amplitude of the chiral emitter for a gaussian input mode
/// of unit peak amplitude; `coords` holds `n` detection times.
///
/// # Safety
/// `coords` must hold `n` values; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_bethe_gaussian_wavefunction(
    n: usize,
    center: f64,
    tau: f64,
    kappa: f64,
    coords: *const f64,
    re: *mut f64,
    im: *mut f64,
) -> SaStatus {
    guard(|| {
        let coords = input(coords, n, "coords")?;
        let re = out_ref(re, "re")?;
        let im = out_ref(im, "im")?;
        let v = outgoing_wavefunction(n, &ModeFunction::Gaussian { center, tau }, coords, kappa)?;
        *re = v.re;
        *im = v.im;
        Ok(())
    })
}

/// Asymptotic correlations of the ideal chiral emitter at three times.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaIdealCorrelations {
    /// Pair correlations for (s1, s2), (s1, s3), (s2, s3).
    pub g2: [f64; 3],
    pub g3: f64,
    pub g3_connected: f64,
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_ideal_correlations(
    s1: f64,
    s2: f64,
    s3: f64,
    kappa: f64,
    out: *mut SaIdealCorrelations,
) -> SaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa = {kappa} must be positive")).into());
        }
        let c = ideal_correlations_at(s1, s2, s3, kappa);
        *out = SaIdealCorrelations {
            g2: c.g2,
            g3: c.g3,
            g3_connected: c.g3_connected,
        };
        Ok(())
    })
}

/// Connected part of g3 given the three pair correlations.
///
/// # Safety
/// `g2_pairs` must point to three values.
#[no_mangle]
pub unsafe extern "C" fn sa_connected_g3(g3: f64, g2_pairs: *const f64, out: *mut f64) -> SaStatus {
    guard(|| {
        let p = input(g2_pairs, 3, "g2_pairs")?;
        *out_ref(out, "out")? = connected_g3(g3, [p[0], p[1], p[2]]);
        Ok(())
    })
}

/// Jacobi coordinates (R, η, ζ) of three times.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaJacobi {
    pub r: f64,
    pub eta: f64,
    pub zeta: f64,
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_to_jacobi(s1: f64, s2: f64, s3: f64, out: *mut SaJacobi) -> SaStatus {
    guard(|| {
        let j = to_jacobi(s1, s2, s3);
        *out_ref(out, "out")? = SaJacobi {
            r: j.r,
            eta: j.eta,
            zeta: j.zeta,
        };
        Ok(())
    })
}
