//! C ABI for the urn-chain laboratory: opaque handles, status codes, and a
//! cbindgen-generated header (`include/urnmix.h`).
//!
//! Every function returns an [`UrnmixStatus`]; results come back through out
//! pointers. Handles are created and released by the paired `_new`/`_free`
//! functions and must not be shared across threads without external
//! synchronization. Panics are caught at the boundary and reported as
//! `InternalPanic`.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use urnmix::chain::{build_kernel, BandedKernel, ChainParams, StateDistribution};
use urnmix::couplings::CoupledPair;
use urnmix::mixing::StartPolicy;
use urnmix::rng::ChaCha8Rng;

/// Status codes returned by every ABI function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UrnmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonErgodic = 3,
    NumericalFailure = 4,
    InternalPanic = 5,
}

fn status_of(err: &urnmix::Error) -> UrnmixStatus {
    match err {
        urnmix::Error::NonErgodic { .. } => UrnmixStatus::NonErgodic,
        urnmix::Error::InvalidParameter { .. }
        | urnmix::Error::DimensionMismatch { .. }
        | urnmix::Error::DegenerateNormalizer => UrnmixStatus::InvalidArgument,
        _ => UrnmixStatus::NumericalFailure,
    }
}

fn guarded(f: impl FnOnce() -> UrnmixStatus) -> UrnmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => UrnmixStatus::InternalPanic,
    }
}

/// Opaque banded-kernel handle.
pub struct UrnmixKernel {
    kernel: BandedKernel,
}

/// Opaque deterministic random stream (ChaCha8; one stream per handle).
pub struct UrnmixRng {
    rng: ChaCha8Rng,
}

/// Version string of the underlying crate (static, NUL-terminated).
#[no_mangle]
pub extern "C" fn urnmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds the exact banded kernel for (n, k). The handle must be released
/// with `urnmix_kernel_free`.
///
/// # Safety
/// `out` must be a valid pointer to an `UrnmixKernel*` slot.
#[no_mangle]
pub unsafe extern "C" fn urnmix_kernel_new(
    n: u32,
    k: u32,
    out: *mut *mut UrnmixKernel,
) -> UrnmixStatus {
    if out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(|| match ChainParams::new(n, k).and_then(build_kernel) {
        Ok(kernel) => {
            unsafe { *out = Box::into_raw(Box::new(UrnmixKernel { kernel })) };
            UrnmixStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Releases a kernel handle. A null pointer is a no-op.
///
/// # Safety
/// `handle` must have been returned by `urnmix_kernel_new` and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn urnmix_kernel_free(handle: *mut UrnmixKernel) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Urn size of the kernel, or 0 on null.
///
/// # Safety
/// `handle` must be a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn urnmix_kernel_n(handle: *const UrnmixKernel) -> u32 {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.kernel.n()
}

/// Swap size of the kernel, or 0 on null.
///
/// # Safety
/// `handle` must be a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn urnmix_kernel_k(handle: *const UrnmixKernel) -> u32 {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.kernel.params().k
}

/// P(i, j) of the kernel (zero outside the band).
///
/// # Safety
/// `handle` must be a live kernel handle; `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn urnmix_kernel_prob(
    handle: *const UrnmixKernel,
    i: u32,
    j: u32,
    out: *mut f64,
) -> UrnmixStatus {
    if handle.is_null() || out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    let kernel = &unsafe { &*handle }.kernel;
    if i > kernel.n() || j > kernel.n() {
        return UrnmixStatus::InvalidArgument;
    }
    unsafe { *out = kernel.prob(i, j) };
    UrnmixStatus::Ok
}

/// One-shot transition probability without building a kernel.
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn urnmix_transition_prob(
    n: u32,
    k: u32,
    i: u32,
    j: u32,
    out: *mut f64,
) -> UrnmixStatus {
    if out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(
        || match ChainParams::new(n, k).and_then(|p| urnmix::chain::transition_prob(p, i, j)) {
            Ok(p) => {
                unsafe { *out = p };
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// Fills `out[0..=n]` with the stationary law. `len` must be exactly n + 1.
///
/// # Safety
/// `out` must point to `len` writable f64 slots.
#[no_mangle]
pub unsafe extern "C" fn urnmix_stationary(n: u32, out: *mut f64, len: usize) -> UrnmixStatus {
    if out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    if n < 1 || len != n as usize + 1 {
        return UrnmixStatus::InvalidArgument;
    }
    guarded(|| {
        let pi = StateDistribution::stationary(n);
        let slice = unsafe { std::slice::from_raw_parts_mut(out, len) };
        slice.copy_from_slice(pi.weights());
        UrnmixStatus::Ok
    })
}

fn policy_from(raw: u32) -> Option<StartPolicy> {
    match raw {
        0 => Some(StartPolicy::Extremes),
        1 => Some(StartPolicy::AllStates),
        _ => None,
    }
}

/// TV distance between the law after t steps from x0 and stationarity.
///
/// # Safety
/// `handle` must be a live kernel handle; `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn urnmix_distance_from(
    handle: *const UrnmixKernel,
    x0: u32,
    t: u64,
    out: *mut f64,
) -> UrnmixStatus {
    if handle.is_null() || out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(
        || match urnmix::mixing::distance_from(&unsafe { &*handle }.kernel, x0, t) {
            Ok(d) => {
                unsafe { *out = d };
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// Worst-case TV distance at time t; policy 0 = extremes, 1 = all states.
///
/// # Safety
/// `handle` must be a live kernel handle; `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn urnmix_worst_distance(
    handle: *const UrnmixKernel,
    t: u64,
    policy: u32,
    out: *mut f64,
) -> UrnmixStatus {
    if handle.is_null() || out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    let Some(policy) = policy_from(policy) else {
        return UrnmixStatus::InvalidArgument;
    };
    guarded(
        || match urnmix::mixing::worst_distance(&unsafe { &*handle }.kernel, t, policy) {
            Ok(d) => {
                unsafe { *out = d };
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// Least t with the worst-case TV distance at most eps.
///
/// # Safety
/// `handle` must be a live kernel handle; `out` must point to a writable u64.
#[no_mangle]
pub unsafe extern "C" fn urnmix_mixing_time(
    handle: *const UrnmixKernel,
    eps: f64,
    policy: u32,
    out: *mut u64,
) -> UrnmixStatus {
    if handle.is_null() || out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    let Some(policy) = policy_from(policy) else {
        return UrnmixStatus::InvalidArgument;
    };
    guarded(
        || match urnmix::mixing::mixing_time(&unsafe { &*handle }.kernel, eps, policy) {
            Ok(t) => {
                unsafe { *out = t };
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// Creates the deterministic random stream `stream` of the generator keyed
/// by `seed`. Release with `urnmix_rng_free`.
///
/// # Safety
/// `out` must be a valid pointer to an `UrnmixRng*` slot.
#[no_mangle]
pub unsafe extern "C" fn urnmix_rng_new(
    seed: u64,
    stream: u64,
    out: *mut *mut UrnmixRng,
) -> UrnmixStatus {
    if out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    let rng = urnmix::rng::replica_rng(seed, stream);
    unsafe { *out = Box::into_raw(Box::new(UrnmixRng { rng })) };
    UrnmixStatus::Ok
}

/// Releases a random stream. A null pointer is a no-op.
///
/// # Safety
/// `handle` must have been returned by `urnmix_rng_new` and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn urnmix_rng_free(handle: *mut UrnmixRng) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// One step of the chain from state x.
///
/// # Safety
/// `rng` must be a live rng handle; `out` must point to a writable u32.
#[no_mangle]
pub unsafe extern "C" fn urnmix_step_sample(
    n: u32,
    k: u32,
    x: u32,
    rng: *mut UrnmixRng,
    out: *mut u32,
) -> UrnmixStatus {
    if rng.is_null() || out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(|| {
        let source = &mut unsafe { &mut *rng }.rng;
        match ChainParams::new(n, k).and_then(|p| urnmix::chain::step_sample(p, x, source)) {
            Ok(next) => {
                unsafe { *out = next };
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// One step of the monotone coupling from the pair (x, y).
///
/// # Safety
/// `rng` must be a live rng handle; `out_x`/`out_y` must be writable u32.
#[no_mangle]
pub unsafe extern "C" fn urnmix_monotone_step(
    n: u32,
    k: u32,
    x: u32,
    y: u32,
    rng: *mut UrnmixRng,
    out_x: *mut u32,
    out_y: *mut u32,
) -> UrnmixStatus {
    if rng.is_null() || out_x.is_null() || out_y.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(|| {
        let params = match ChainParams::new(n, k) {
            Ok(p) => p,
            Err(e) => return status_of(&e),
        };
        if x > n || y > n {
            return UrnmixStatus::InvalidArgument;
        }
        let source = &mut unsafe { &mut *rng }.rng;
        let next = urnmix::couplings::monotone_step(CoupledPair::new(x, y), params, source);
        unsafe {
            *out_x = next.x;
            *out_y = next.y;
        }
        UrnmixStatus::Ok
    })
}

/// Exact TV between the kernel rows at x0 and y0.
///
/// # Safety
/// `out` must point to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn urnmix_last_step_tv(
    n: u32,
    k: u32,
    x0: u32,
    y0: u32,
    out: *mut f64,
) -> UrnmixStatus {
    if out.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(|| {
        match ChainParams::new(n, k).and_then(|p| urnmix::couplings::last_step_tv(p, x0, y0)) {
            Ok(tv) => {
                unsafe { *out = tv };
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Exact TV between Hyper(N, K, r) and Bin(r, K/N); also returns the 4r/N
/// comparison bound.
///
/// # Safety
/// `out_tv` and `out_bound` must point to writable f64 slots.
#[no_mangle]
pub unsafe extern "C" fn urnmix_hyper_vs_binom_tv(
    population: u64,
    successes: u64,
    draws: u64,
    out_tv: *mut f64,
    out_bound: *mut f64,
) -> UrnmixStatus {
    if out_tv.is_null() || out_bound.is_null() {
        return UrnmixStatus::NullPointer;
    }
    guarded(
        || match urnmix::combinatorics::hyper_vs_binom_tv(population, successes, draws) {
            Ok(r) => {
                unsafe {
                    *out_tv = r.tv;
                    *out_bound = r.bound;
                }
                UrnmixStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// Exact TV between Bin(k, 1/2) and its |g|-shift, with the crossing point.
///
/// # Safety
/// `out_tv` and `out_crossing` must point to writable slots.
#[no_mangle]
pub unsafe extern "C" fn urnmix_shifted_binom_tv(
    k: u64,
    g: i64,
    out_tv: *mut f64,
    out_crossing: *mut i64,
) -> UrnmixStatus {
    if out_tv.is_null() || out_crossing.is_null() {
        return UrnmixStatus::NullPointer;
    }
    if k == 0 {
        return UrnmixStatus::InvalidArgument;
    }
    guarded(|| {
        let r = urnmix::combinatorics::shifted_binom_tv(k, g);
        unsafe {
            *out_tv = r.tv;
            *out_crossing = r.crossing;
        }
        UrnmixStatus::Ok
    })
}
