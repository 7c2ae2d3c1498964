//! C ABI for the divprice library.
//!
//! Instances are opaque handles built from the same JSON agent records the
//! experiment configs use. Every function returns a [`DpStatus`]; on any
//! failure a thread-local message is set and can be fetched with
//! [`dp_last_error_message`]. Strings returned by this library must be
//! released with [`dp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use divprice::calibration;
use divprice::experiment::DistConfig;
use divprice::mechanism::Ordering;
use divprice::revenue::{self, PriceGridSpec};
use divprice::valuation::ValuationDistribution;
use divprice::welfare;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DomainError = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn fail(status: DpStatus, message: impl Into<String>) -> DpStatus {
    set_error(message.into());
    status
}

/// Guard against unwinding across the FFI boundary.
fn guarded(body: impl FnOnce() -> DpStatus) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in divprice".into());
            fail(DpStatus::Panic, message)
        }
    }
}

/// Opaque instance handle: one valuation distribution per agent.
pub struct DpInstance {
    dists: Vec<ValuationDistribution>,
}

/// Processing order selector for simulation entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpOrdering {
    Identity = 0,
    Reverse = 1,
    UniformRandom = 2,
}

/// Result of a price calibration.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DpCalibration {
    pub price: f64,
    pub achieved: f64,
    pub target: f64,
    pub residual: f64,
    /// Nonzero when the sold-fraction curve jumps over the target; the
    /// price then sits on the side with achieved >= target.
    pub target_unreachable: bool,
}

/// Welfare-ratio estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DpWelfareRatio {
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub welfare: f64,
    pub optimal_welfare: f64,
}

/// Revenue-gap summary.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DpRevenueGap {
    pub upper_bound: f64,
    pub best_linear_revenue: f64,
    pub best_linear_price: f64,
    pub gap: f64,
    pub kappa: f64,
    pub certificate: f64,
    pub regular: bool,
    /// Meaningful only when `regular` is true.
    pub certificate_holds: bool,
}

/// High-curvature lower-bound instance summary.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DpLowerBound {
    pub kappa: f64,
    pub rho: f64,
    pub best_linear_revenue: f64,
    pub best_linear_price: f64,
    pub nonlinear_revenue: f64,
    pub gap: f64,
    pub floor: f64,
}

/// The library version as a newly allocated string; release with
/// [`dp_string_free`].
#[no_mangle]
pub extern "C" fn dp_version() -> *mut c_char {
    CString::new(env!("CARGO_PKG_VERSION")).map_or(ptr::null_mut(), CString::into_raw)
}

/// The last error message of this thread as a newly allocated string, or
/// null when no error occurred; release with [`dp_string_free`].
#[no_mangle]
pub extern "C" fn dp_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |msg| msg.clone().into_raw())
    })
}

/// Release a string allocated by this library.
///
/// # Safety
/// `s` must come from a divprice function returning `char*` and must not
/// have been freed already. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The welfare guarantee constants.
///
/// # Safety
/// All three output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dp_constants(
    out_beta: *mut f64,
    out_rho1: *mut f64,
    out_rho2: *mut f64,
) -> DpStatus {
    guarded(|| {
        if out_beta.is_null() || out_rho1.is_null() || out_rho2.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        let c = welfare::solve_constants();
        unsafe {
            *out_beta = c.beta;
            *out_rho1 = c.rho1;
            *out_rho2 = c.rho2;
        }
        DpStatus::Ok
    })
}

/// Build an instance from a JSON array of agent distribution records (the
/// `agents` schema of the experiment configs), e.g.
/// `[{"kind":"power","a":1.0,"c":0.5},{"kind":"linear","a":2.0}]`.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` must be a valid
/// pointer. On success `*out` owns the instance; release it with
/// [`dp_instance_free`].
#[no_mangle]
pub unsafe extern "C" fn dp_instance_from_json(
    json: *const c_char,
    out: *mut *mut DpInstance,
) -> DpStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            return fail(DpStatus::NullPointer, "null pointer argument");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => return fail(DpStatus::ParseError, "instance JSON is not valid UTF-8"),
        };
        let configs: Vec<DistConfig> = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(DpStatus::ParseError, format!("instance JSON: {e}")),
        };
        if configs.is_empty() {
            return fail(
                DpStatus::InvalidArgument,
                "instance needs at least one agent",
            );
        }
        let dists: Result<Vec<ValuationDistribution>, _> =
            configs.iter().map(DistConfig::build).collect();
        match dists {
            Ok(dists) => {
                unsafe { *out = Box::into_raw(Box::new(DpInstance { dists })) };
                DpStatus::Ok
            }
            Err(e) => fail(DpStatus::DomainError, e.to_string()),
        }
    })
}

/// Release an instance handle. Null is ignored.
///
/// # Safety
/// `instance` must come from [`dp_instance_from_json`] and must not have
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn dp_instance_free(instance: *mut DpInstance) {
    if !instance.is_null() {
        drop(unsafe { Box::from_raw(instance) });
    }
}

/// Number of agents in the instance.
///
/// # Safety
/// `instance` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dp_instance_agent_count(
    instance: *const DpInstance,
    out: *mut usize,
) -> DpStatus {
    guarded(|| {
        if instance.is_null() || out.is_null() {
            return fail(DpStatus::NullPointer, "null pointer argument");
        }
        unsafe { *out = (*instance).dists.len() };
        DpStatus::Ok
    })
}

unsafe fn instance_ref<'a>(instance: *const DpInstance) -> Option<&'a DpInstance> {
    unsafe { instance.as_ref() }
}

/// Monte Carlo estimate of the expected sold fraction at `price`.
///
/// # Safety
/// `instance` must be a live handle; output pointers must be valid
/// (`out_stderr` may be null when the caller does not need it).
#[no_mangle]
pub unsafe extern "C" fn dp_sold_fraction(
    instance: *const DpInstance,
    price: f64,
    samples: u64,
    seed: u64,
    out_mean: *mut f64,
    out_stderr: *mut f64,
) -> DpStatus {
    guarded(|| {
        let Some(inst) = (unsafe { instance_ref(instance) }) else {
            return fail(DpStatus::NullPointer, "null instance");
        };
        if out_mean.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        if price.is_nan() || price < 0.0 || samples == 0 {
            return fail(
                DpStatus::InvalidArgument,
                "price must be >= 0 and samples >= 1",
            );
        }
        let est = calibration::sold_fraction(&inst.dists, price, samples, seed);
        unsafe {
            *out_mean = est.mean;
            if !out_stderr.is_null() {
                *out_stderr = est.stderr;
            }
        }
        DpStatus::Ok
    })
}

/// Calibrate the price to a target expected sold fraction.
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_calibrate(
    instance: *const DpInstance,
    target: f64,
    samples: u64,
    seed: u64,
    tolerance: f64,
    price_cap: f64,
    out: *mut DpCalibration,
) -> DpStatus {
    guarded(|| {
        let Some(inst) = (unsafe { instance_ref(instance) }) else {
            return fail(DpStatus::NullPointer, "null instance");
        };
        if out.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        if target.is_nan() || target <= 0.0 || target >= 1.0 {
            return fail(DpStatus::InvalidArgument, "target must lie in (0, 1)");
        }
        if samples == 0
            || tolerance.is_nan()
            || tolerance <= 0.0
            || price_cap.is_nan()
            || price_cap <= 0.0
        {
            return fail(DpStatus::InvalidArgument, "invalid sampling parameters");
        }
        let cal = calibration::calibrate(&inst.dists, target, samples, seed, tolerance, price_cap);
        unsafe {
            *out = DpCalibration {
                price: cal.price,
                achieved: cal.achieved,
                target: cal.target,
                residual: cal.residual,
                target_unreachable: cal.target_unreachable,
            };
        }
        DpStatus::Ok
    })
}

/// Estimate the welfare ratio of posted pricing at `price` against the
/// welfare optimum.
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_welfare_ratio(
    instance: *const DpInstance,
    price: f64,
    ordering: DpOrdering,
    samples: u64,
    seed: u64,
    out: *mut DpWelfareRatio,
) -> DpStatus {
    guarded(|| {
        let Some(inst) = (unsafe { instance_ref(instance) }) else {
            return fail(DpStatus::NullPointer, "null instance");
        };
        if out.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        if price.is_nan() || price < 0.0 || samples == 0 {
            return fail(
                DpStatus::InvalidArgument,
                "price must be >= 0 and samples >= 1",
            );
        }
        let n = inst.dists.len();
        let ordering = match ordering {
            DpOrdering::Identity => Ordering::identity(n),
            DpOrdering::Reverse => Ordering::reversed(n),
            DpOrdering::UniformRandom => Ordering::UniformRandom,
        };
        let est = welfare::welfare_ratio(&inst.dists, price, &ordering, samples, seed);
        unsafe {
            *out = DpWelfareRatio {
                ratio: est.ratio,
                ratio_stderr: est.stderr,
                welfare: est.numerator.mean,
                optimal_welfare: est.denominator.mean,
            };
        }
        DpStatus::Ok
    })
}

/// Ex-ante revenue upper bound, best linear revenue and gap certificate.
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_revenue_gap(
    instance: *const DpInstance,
    grid_m: usize,
    samples: u64,
    seed: u64,
    out: *mut DpRevenueGap,
) -> DpStatus {
    guarded(|| {
        let Some(inst) = (unsafe { instance_ref(instance) }) else {
            return fail(DpStatus::NullPointer, "null instance");
        };
        if out.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        if grid_m == 0 || samples == 0 {
            return fail(DpStatus::InvalidArgument, "grid_m and samples must be >= 1");
        }
        match revenue::revenue_gap(
            &inst.dists,
            grid_m,
            &PriceGridSpec::default(),
            samples,
            seed,
        ) {
            Ok(report) => {
                unsafe {
                    *out = DpRevenueGap {
                        upper_bound: report.upper_bound,
                        best_linear_revenue: report.best_linear.revenue,
                        best_linear_price: report.best_linear.price,
                        gap: report.gap,
                        kappa: report.kappa,
                        certificate: report.certificate,
                        regular: report.regular,
                        certificate_holds: report.certificate_holds.unwrap_or(false),
                    };
                }
                DpStatus::Ok
            }
            Err(e) => fail(DpStatus::DomainError, e.to_string()),
        }
    })
}

/// Build and evaluate the high-curvature lower-bound instance.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_lower_bound(kappa: f64, out: *mut DpLowerBound) -> DpStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        match revenue::lower_bound_instance(kappa) {
            Ok(inst) => {
                unsafe {
                    *out = DpLowerBound {
                        kappa: inst.kappa,
                        rho: inst.rho,
                        best_linear_revenue: inst.best_linear.revenue,
                        best_linear_price: inst.best_linear.price,
                        nonlinear_revenue: inst.nonlinear_revenue,
                        gap: inst.gap,
                        floor: inst.floor,
                    };
                }
                DpStatus::Ok
            }
            Err(e) => fail(DpStatus::DomainError, e.to_string()),
        }
    })
}
