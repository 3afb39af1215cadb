//! C ABI for the bandit solvers, the regret bounds and static portfolio
//! execution.
//!
//! Every function returns a [`GambletaStatus`] and writes results through
//! out-pointers. Solvers are opaque handles created by `*_new` and released
//! by `*_free`. After a failure, `gambleta_last_error` copies a message
//! describing it (per thread). Panics are caught and reported as
//! `GAMBLETA_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use gambleta::allocators::Share;
use gambleta::bandit::{Exp3Light, Exp3LightA};
use gambleta::bounds::{self, BoundInputs};
use gambleta::exec::{execute_static, AlgorithmRun};
use gambleta::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GambletaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LossAboveBound = 3,
    Unsolvable = 4,
    BufferTooSmall = 5,
    OutOfDomain = 6,
    Internal = 7,
}

/// Exp3Light with a known loss bound.
pub struct GambletaExp3Light(Exp3Light);

/// Exp3Light-A: unknown loss bound, handled by restarts.
pub struct GambletaExp3LightA(Exp3LightA);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> GambletaStatus {
    match err {
        Error::LossAboveBound { .. } => GambletaStatus::LossAboveBound,
        Error::Unsolvable(_) => GambletaStatus::Unsolvable,
        _ => GambletaStatus::InvalidArgument,
    }
}

fn fail(status: GambletaStatus, msg: impl Into<String>) -> GambletaStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> GambletaStatus) -> GambletaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(GambletaStatus::Internal, "internal panic"),
    }
}

fn from_result<T>(r: gambleta::Result<T>, out: impl FnOnce(T)) -> GambletaStatus {
    match r {
        Ok(v) => {
            out(v);
            GambletaStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len` bytes. `*needed` receives the
/// full length including the terminator.
///
/// # Safety
/// `buf` must be valid for `len` writable bytes (or null with `len == 0`);
/// `needed` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> GambletaStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !needed.is_null() {
            *needed = bytes.len() + 1;
        }
        if len == 0 {
            return GambletaStatus::BufferTooSmall;
        }
        if buf.is_null() {
            return GambletaStatus::NullPointer;
        }
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
        if n < bytes.len() {
            GambletaStatus::BufferTooSmall
        } else {
            GambletaStatus::Ok
        }
    })
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(GambletaStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

unsafe fn write_probabilities(probs: &[f64], out: *mut f64, len: usize) -> GambletaStatus {
    if len < probs.len() {
        return fail(
            GambletaStatus::BufferTooSmall,
            format!("need room for {} probabilities, got {len}", probs.len()),
        );
    }
    ptr::copy_nonoverlapping(probs.as_ptr(), out, probs.len());
    GambletaStatus::Ok
}

/// Creates an Exp3Light solver for `n_arms` arms, `horizon` trials and
/// losses in `[0, loss_bound]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3light_new(
    n_arms: usize,
    horizon: usize,
    loss_bound: f64,
    out: *mut *mut GambletaExp3Light,
) -> GambletaStatus {
    guard(|| {
        non_null!(out);
        from_result(Exp3Light::new(n_arms, horizon, loss_bound), |s| {
            *out = Box::into_raw(Box::new(GambletaExp3Light(s)));
        })
    })
}

/// # Safety
/// `solver` must come from `gambleta_exp3light_new` and not be freed yet;
/// null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3light_free(solver: *mut GambletaExp3Light) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Writes the current pull distribution (`n_arms` values) into `out`.
///
/// # Safety
/// `solver` must be live; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3light_probabilities(
    solver: *const GambletaExp3Light,
    out: *mut f64,
    len: usize,
) -> GambletaStatus {
    guard(|| {
        non_null!(solver, out);
        write_probabilities(&(*solver).0.probabilities(), out, len)
    })
}

/// Feeds the loss of the pulled arm.
///
/// # Safety
/// `solver` must be live.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3light_update(solver: *mut GambletaExp3Light, arm: usize, loss: f64) -> GambletaStatus {
    guard(|| {
        non_null!(solver);
        from_result((*solver).0.update(arm, loss), |()| ())
    })
}

/// Current epoch `r` and learning rate.
///
/// # Safety
/// `solver` must be live; `epoch` and `eta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3light_state(
    solver: *const GambletaExp3Light,
    epoch: *mut u32,
    eta: *mut f64,
) -> GambletaStatus {
    guard(|| {
        non_null!(solver, epoch, eta);
        *epoch = (*solver).0.epoch();
        *eta = (*solver).0.eta();
        GambletaStatus::Ok
    })
}

/// Creates an Exp3Light-A solver for `n_arms` arms and `horizon` trials.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3lighta_new(
    n_arms: usize,
    horizon: usize,
    out: *mut *mut GambletaExp3LightA,
) -> GambletaStatus {
    guard(|| {
        non_null!(out);
        from_result(Exp3LightA::new(n_arms, horizon), |s| {
            *out = Box::into_raw(Box::new(GambletaExp3LightA(s)));
        })
    })
}

/// # Safety
/// `solver` must come from `gambleta_exp3lighta_new` and not be freed yet;
/// null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3lighta_free(solver: *mut GambletaExp3LightA) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// # Safety
/// `solver` must be live; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3lighta_probabilities(
    solver: *const GambletaExp3LightA,
    out: *mut f64,
    len: usize,
) -> GambletaStatus {
    guard(|| {
        non_null!(solver, out);
        write_probabilities(&(*solver).0.probabilities(), out, len)
    })
}

/// Feeds the loss of the pulled arm; `*restarted` tells whether the loss
/// exceeded the current bound guess and restarted the inner solver.
///
/// # Safety
/// `solver` must be live; `restarted` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3lighta_step(
    solver: *mut GambletaExp3LightA,
    arm: usize,
    loss: f64,
    restarted: *mut bool,
) -> GambletaStatus {
    guard(|| {
        non_null!(solver);
        from_result((*solver).0.step(arm, loss), |r| {
            if !restarted.is_null() {
                *restarted = r;
            }
        })
    })
}

/// Outer epoch `u`, the bound guess `2^u` and the inner epoch `r`.
///
/// # Safety
/// `solver` must be live; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_exp3lighta_state(
    solver: *const GambletaExp3LightA,
    outer_epoch: *mut u32,
    bound_guess: *mut f64,
    inner_epoch: *mut u32,
) -> GambletaStatus {
    guard(|| {
        non_null!(solver, outer_epoch, bound_guess, inner_epoch);
        let s = &(*solver).0;
        *outer_epoch = s.outer_epoch();
        *bound_guess = s.bound_guess();
        *inner_epoch = s.inner().epoch();
        GambletaStatus::Ok
    })
}

fn bound(
    n_arms: usize,
    horizon: usize,
    loss_bound: f64,
    best_arm_loss: f64,
    out: *mut f64,
    eval: impl FnOnce(&BoundInputs) -> gambleta::Result<f64>,
) -> GambletaStatus {
    guard(|| {
        non_null!(out);
        let inputs = match BoundInputs::new(n_arms, horizon, loss_bound, best_arm_loss) {
            Ok(i) => i,
            Err(e) => return fail(GambletaStatus::InvalidArgument, e.to_string()),
        };
        match eval(&inputs) {
            // SAFETY: checked non-null above; the caller guarantees writability.
            Ok(v) => unsafe {
                *out = v;
                GambletaStatus::Ok
            },
            Err(e) => fail(GambletaStatus::OutOfDomain, e.to_string()),
        }
    })
}

/// Known-bound regret bound.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_bound_theorem1(
    n_arms: usize,
    horizon: usize,
    loss_bound: f64,
    best_arm_loss: f64,
    out: *mut f64,
) -> GambletaStatus {
    bound(n_arms, horizon, loss_bound, best_arm_loss, out, |i| Ok(bounds::theorem1(i)))
}

/// Unknown-bound regret bound; `GAMBLETA_STATUS_OUT_OF_DOMAIN` for
/// `loss_bound <= 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_bound_theorem2(
    n_arms: usize,
    horizon: usize,
    loss_bound: f64,
    best_arm_loss: f64,
    out: *mut f64,
) -> GambletaStatus {
    bound(n_arms, horizon, loss_bound, best_arm_loss, out, bounds::theorem2)
}

/// Regret bound of Exp3Light on unit losses; requires `loss_bound == 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_bound_unit(
    n_arms: usize,
    horizon: usize,
    loss_bound: f64,
    best_arm_loss: f64,
    out: *mut f64,
) -> GambletaStatus {
    bound(n_arms, horizon, loss_bound, best_arm_loss, out, bounds::exp3light_unit)
}

/// Runs `k` algorithms with runtimes `runtimes` (`INFINITY` for never) under
/// the fixed share `share`. Writes the wall-clock time and the winner's
/// index.
///
/// # Safety
/// `runtimes` and `share` must be valid for `k` reads; `wall_clock` and
/// `winner` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gambleta_execute_static(
    runtimes: *const f64,
    share: *const f64,
    k: usize,
    wall_clock: *mut f64,
    winner: *mut usize,
) -> GambletaStatus {
    guard(|| {
        non_null!(runtimes, share, wall_clock, winner);
        let times = slice::from_raw_parts(runtimes, k)
            .iter()
            .map(|&t| (t != f64::INFINITY).then_some(t))
            .collect();
        let share = match Share::new(slice::from_raw_parts(share, k).to_vec(), 0.0) {
            Ok(s) => s,
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        let result = AlgorithmRun::new("ffi", Vec::new(), times).and_then(|run| execute_static(&run, &share));
        from_result(result, |r| {
            *wall_clock = r.wall_clock;
            *winner = r.winner;
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = [0 as c_char; 256];
        let mut needed = 0;
        unsafe { gambleta_last_error(buf.as_mut_ptr(), buf.len(), &mut needed) };
        let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn exp3light_lifecycle() {
        unsafe {
            let mut s = ptr::null_mut();
            assert_eq!(gambleta_exp3light_new(3, 100, 1.0, &mut s), GambletaStatus::Ok);
            let mut p = [0.0; 3];
            assert_eq!(gambleta_exp3light_probabilities(s, p.as_mut_ptr(), 3), GambletaStatus::Ok);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(gambleta_exp3light_probabilities(s, p.as_mut_ptr(), 2), GambletaStatus::BufferTooSmall);
            assert_eq!(gambleta_exp3light_update(s, 0, 0.5), GambletaStatus::Ok);
            assert_eq!(gambleta_exp3light_update(s, 0, 2.0), GambletaStatus::LossAboveBound);
            assert!(last_error().contains("exceeds"));
            assert_eq!(gambleta_exp3light_update(s, 9, 0.5), GambletaStatus::InvalidArgument);
            let (mut r, mut eta) = (99, 0.0);
            assert_eq!(gambleta_exp3light_state(s, &mut r, &mut eta), GambletaStatus::Ok);
            assert_eq!(r, 0);
            assert!(eta > 0.0);
            gambleta_exp3light_free(s);
            gambleta_exp3light_free(ptr::null_mut());
        }
    }

    #[test]
    fn exp3lighta_restarts() {
        unsafe {
            let mut s = ptr::null_mut();
            assert_eq!(gambleta_exp3lighta_new(2, 10, &mut s), GambletaStatus::Ok);
            let mut restarted = false;
            assert_eq!(gambleta_exp3lighta_step(s, 0, 7.3, &mut restarted), GambletaStatus::Ok);
            assert!(restarted);
            let (mut u, mut guess, mut r) = (0, 0.0, 0);
            assert_eq!(gambleta_exp3lighta_state(s, &mut u, &mut guess, &mut r), GambletaStatus::Ok);
            assert_eq!(u, 3);
            assert_eq!(guess, 8.0);
            gambleta_exp3lighta_free(s);
        }
    }

    #[test]
    fn null_and_invalid_inputs() {
        unsafe {
            assert_eq!(gambleta_exp3light_new(1, 10, 1.0, ptr::null_mut()), GambletaStatus::NullPointer);
            let mut s = ptr::null_mut();
            assert_eq!(gambleta_exp3light_new(1, 10, 1.0, &mut s), GambletaStatus::InvalidArgument);
            assert!(s.is_null());
            assert_eq!(gambleta_exp3light_update(ptr::null_mut(), 0, 0.0), GambletaStatus::NullPointer);
            assert!(last_error().contains("solver"));
        }
    }

    #[test]
    fn bounds() {
        unsafe {
            let mut v = 0.0;
            assert_eq!(gambleta_bound_theorem1(2, 100, 1.0, 10.0, &mut v), GambletaStatus::Ok);
            assert!((v - 107.1).abs() < 0.05);
            assert_eq!(gambleta_bound_unit(2, 100, 1.0, 0.0, &mut v), GambletaStatus::Ok);
            assert!((v - 38.17).abs() < 0.01);
            assert_eq!(gambleta_bound_theorem2(2, 100, 1.0, 10.0, &mut v), GambletaStatus::OutOfDomain);
            assert_eq!(gambleta_bound_theorem2(1, 100, 2.0, 10.0, &mut v), GambletaStatus::InvalidArgument);
        }
    }

    #[test]
    fn static_execution() {
        unsafe {
            let (mut wall, mut winner) = (0.0, 9);
            let t = [f64::INFINITY, 8.0];
            let s = [0.5, 0.5];
            assert_eq!(
                gambleta_execute_static(t.as_ptr(), s.as_ptr(), 2, &mut wall, &mut winner),
                GambletaStatus::Ok
            );
            assert_eq!((wall, winner), (16.0, 1));
            let t = [f64::INFINITY, f64::INFINITY];
            assert_eq!(
                gambleta_execute_static(t.as_ptr(), s.as_ptr(), 2, &mut wall, &mut winner),
                GambletaStatus::Unsolvable
            );
        }
    }

    #[test]
    fn error_buffer_truncates() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        let mut needed = 0;
        let st = unsafe { gambleta_last_error(buf.as_mut_ptr(), 4, &mut needed) };
        assert_eq!(st, GambletaStatus::BufferTooSmall);
        assert_eq!(needed, 7);
        assert_eq!(buf[3], 0);
        assert_eq!(buf[2] as u8, b'c');
    }
}
