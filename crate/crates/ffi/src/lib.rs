//! C ABI over the core library: opaque handles, integer error codes, and
//! caller-owned output buffers. The header `include/backstep.h` is generated
//! from this file with cbindgen (see the crate README).

use std::os::raw::c_char;
use std::ptr;

use backstep::grid::GridFunction1D;
use backstep::kernel1d::{residual_1d, solve_kernel, KernelSolveConfig};
use backstep::sim::{simulate_transport, Controller, TrajectoryRecord};
use backstep::Error;

/// Status returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    BsOk = 0,
    /// A pointer argument was null or a size was invalid.
    BsInvalidArgument = 1,
    /// Grid sizes of the arguments do not match.
    BsGridMismatch = 2,
    /// The kernel series did not converge within the term budget.
    BsNoConvergence = 3,
    /// A non-finite value was produced or supplied.
    BsNonFinite = 4,
    /// Any other library error.
    BsInternal = 5,
}

fn status_of(e: &Error) -> BsStatus {
    match e {
        Error::GridMismatch(_, _) | Error::ShapeMismatch(_) => BsStatus::BsGridMismatch,
        Error::NonConvergence { .. } => BsStatus::BsNoConvergence,
        Error::NonFinite(_) => BsStatus::BsNonFinite,
        Error::InvalidConfig(_) | Error::IndexOutOfRange { .. } => BsStatus::BsInvalidArgument,
        _ => BsStatus::BsInternal,
    }
}

/// Static name of a status code, for diagnostics. Never null.
#[no_mangle]
pub extern "C" fn bs_status_name(status: BsStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        BsStatus::BsOk => b"ok\0",
        BsStatus::BsInvalidArgument => b"invalid argument\0",
        BsStatus::BsGridMismatch => b"grid mismatch\0",
        BsStatus::BsNoConvergence => b"no convergence\0",
        BsStatus::BsNonFinite => b"non-finite value\0",
        BsStatus::BsInternal => b"internal error\0",
    };
    name.as_ptr() as *const c_char
}

/// Opaque handle to a function sampled on the uniform grid over [0,1].
pub struct BsGrid {
    inner: GridFunction1D,
}

/// Opaque handle to a recorded closed- or open-loop trajectory.
pub struct BsTrajectory {
    inner: TrajectoryRecord,
}

/// Build a grid function from `n_points = n_cells + 1` samples.
///
/// # Safety
/// `values` must point to `n_points` readable doubles; `out` must be a valid
/// destination pointer. On success the caller owns the handle and must free
/// it with [`bs_grid_free`].
#[no_mangle]
pub unsafe extern "C" fn bs_grid_new(
    values: *const f64,
    n_points: usize,
    out: *mut *mut BsGrid,
) -> BsStatus {
    if values.is_null() || out.is_null() || n_points < 2 {
        return BsStatus::BsInvalidArgument;
    }
    let slice = std::slice::from_raw_parts(values, n_points);
    match GridFunction1D::new(n_points - 1, slice.to_vec()) {
        Ok(g) => {
            *out = Box::into_raw(Box::new(BsGrid { inner: g }));
            BsStatus::BsOk
        }
        Err(e) => {
            *out = ptr::null_mut();
            status_of(&e)
        }
    }
}

/// Build the Chebyshev-family coefficient `amplitude * cos(gamma * acos x)`.
///
/// # Safety
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_grid_chebyshev(
    amplitude: f64,
    gamma: f64,
    n_cells: usize,
    out: *mut *mut BsGrid,
) -> BsStatus {
    if out.is_null() || n_cells == 0 || !amplitude.is_finite() || !(gamma > 0.0) {
        return BsStatus::BsInvalidArgument;
    }
    let g = GridFunction1D::from_fn(n_cells, |x| {
        amplitude * (gamma * x.clamp(-1.0, 1.0).acos()).cos()
    });
    *out = Box::into_raw(Box::new(BsGrid { inner: g }));
    BsStatus::BsOk
}

/// # Safety
/// `grid` must be a handle obtained from this library, or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn bs_grid_free(grid: *mut BsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of sample points (`n_cells + 1`); 0 for null.
///
/// # Safety
/// `grid` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_grid_len(grid: *const BsGrid) -> usize {
    if grid.is_null() {
        return 0;
    }
    (*grid).inner.n_cells() + 1
}

/// Copy the samples into a caller buffer of `buffer_len` doubles.
///
/// # Safety
/// `buffer` must point to at least `buffer_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_grid_values(
    grid: *const BsGrid,
    buffer: *mut f64,
    buffer_len: usize,
) -> BsStatus {
    if grid.is_null() || buffer.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    let values = (*grid).inner.values();
    if buffer_len < values.len() {
        return BsStatus::BsInvalidArgument;
    }
    std::slice::from_raw_parts_mut(buffer, values.len()).copy_from_slice(values);
    BsStatus::BsOk
}

/// Sup-norm of the samples; NaN for null.
///
/// # Safety
/// `grid` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_grid_sup_norm(grid: *const BsGrid) -> f64 {
    if grid.is_null() {
        return f64::NAN;
    }
    (*grid).inner.sup_norm()
}

/// Solve the gain-kernel integral equation for the given coefficient.
/// `tolerance <= 0` or `max_terms == 0` selects the defaults.
///
/// # Safety
/// `beta` must be a valid handle; `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_solve_kernel(
    beta: *const BsGrid,
    tolerance: f64,
    max_terms: usize,
    out: *mut *mut BsGrid,
) -> BsStatus {
    if beta.is_null() || out.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    let defaults = KernelSolveConfig::default();
    let cfg = KernelSolveConfig {
        tolerance: if tolerance > 0.0 {
            tolerance
        } else {
            defaults.tolerance
        },
        max_terms: if max_terms > 0 {
            max_terms
        } else {
            defaults.max_terms
        },
    };
    match solve_kernel(&(*beta).inner, &cfg) {
        Ok(k) => {
            *out = Box::into_raw(Box::new(BsGrid { inner: k }));
            BsStatus::BsOk
        }
        Err(e) => {
            *out = ptr::null_mut();
            status_of(&e)
        }
    }
}

/// Sup-norm defect of the kernel equation, written to `out`.
///
/// # Safety
/// All handles must be valid; `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_kernel_residual(
    beta: *const BsGrid,
    kernel: *const BsGrid,
    out: *mut f64,
) -> BsStatus {
    if beta.is_null() || kernel.is_null() || out.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    match residual_1d(&(*beta).inner, &(*kernel).inner) {
        Ok(r) => {
            *out = r;
            BsStatus::BsOk
        }
        Err(e) => status_of(&e),
    }
}

/// Boundary feedback `U = integral k(1-y) u(y) dy`, written to `out`.
///
/// # Safety
/// All handles must be valid; `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_control(
    kernel: *const BsGrid,
    state: *const BsGrid,
    out: *mut f64,
) -> BsStatus {
    if kernel.is_null() || state.is_null() || out.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    match backstep::control_1d(&(*kernel).inner, &(*state).inner) {
        Ok(v) => {
            *out = v;
            BsStatus::BsOk
        }
        Err(e) => status_of(&e),
    }
}

/// Simulate the transport plant. A null `kernel` runs open loop.
///
/// # Safety
/// `beta` and `u0` must be valid handles; `kernel` valid or null; `out` a
/// valid destination pointer. The caller frees the trajectory with
/// [`bs_trajectory_free`].
#[no_mangle]
pub unsafe extern "C" fn bs_simulate_transport(
    beta: *const BsGrid,
    u0: *const BsGrid,
    kernel: *const BsGrid,
    t_final: f64,
    out: *mut *mut BsTrajectory,
) -> BsStatus {
    if beta.is_null() || u0.is_null() || out.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    let ctrl = if kernel.is_null() {
        Controller::OpenLoopZero
    } else {
        Controller::GainKernel(&(*kernel).inner)
    };
    match simulate_transport(&(*beta).inner, &(*u0).inner, &ctrl, t_final) {
        Ok(traj) => {
            *out = Box::into_raw(Box::new(BsTrajectory { inner: traj }));
            BsStatus::BsOk
        }
        Err(e) => {
            *out = ptr::null_mut();
            status_of(&e)
        }
    }
}

/// # Safety
/// `traj` must be a handle obtained from this library, or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_free(traj: *mut BsTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded time levels (`steps + 1`); 0 for null.
///
/// # Safety
/// `traj` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_len(traj: *const BsTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    (*traj).inner.n_steps() + 1
}

/// Copy the L2-norm series into a caller buffer.
///
/// # Safety
/// `buffer` must point to at least `buffer_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_norms(
    traj: *const BsTrajectory,
    buffer: *mut f64,
    buffer_len: usize,
) -> BsStatus {
    if traj.is_null() || buffer.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    let norms = (*traj).inner.l2_norms();
    if buffer_len < norms.len() {
        return BsStatus::BsInvalidArgument;
    }
    std::slice::from_raw_parts_mut(buffer, norms.len()).copy_from_slice(&norms);
    BsStatus::BsOk
}

/// Copy the boundary-control series into a caller buffer.
///
/// # Safety
/// `buffer` must point to at least `buffer_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_trajectory_controls(
    traj: *const BsTrajectory,
    buffer: *mut f64,
    buffer_len: usize,
) -> BsStatus {
    if traj.is_null() || buffer.is_null() {
        return BsStatus::BsInvalidArgument;
    }
    let controls = (*traj).inner.controls();
    if buffer_len < controls.len() {
        return BsStatus::BsInvalidArgument;
    }
    std::slice::from_raw_parts_mut(buffer, controls.len()).copy_from_slice(controls);
    BsStatus::BsOk
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_solve_and_simulate_round_trip() {
        unsafe {
            let mut beta: *mut BsGrid = ptr::null_mut();
            assert_eq!(bs_grid_chebyshev(6.0, 3.0, 100, &mut beta), BsStatus::BsOk);
            assert_eq!(bs_grid_len(beta), 101);
            assert!((bs_grid_sup_norm(beta) - 6.0).abs() < 1e-9);

            let mut kernel: *mut BsGrid = ptr::null_mut();
            assert_eq!(bs_solve_kernel(beta, 0.0, 0, &mut kernel), BsStatus::BsOk);
            let mut residual = f64::NAN;
            assert_eq!(
                bs_kernel_residual(beta, kernel, &mut residual),
                BsStatus::BsOk
            );
            assert!(residual < 1e-6);

            let u0_values = vec![1.0; 101];
            let mut u0: *mut BsGrid = ptr::null_mut();
            assert_eq!(
                bs_grid_new(u0_values.as_ptr(), u0_values.len(), &mut u0),
                BsStatus::BsOk
            );

            let mut traj: *mut BsTrajectory = ptr::null_mut();
            assert_eq!(
                bs_simulate_transport(beta, u0, kernel, 2.0, &mut traj),
                BsStatus::BsOk
            );
            let len = bs_trajectory_len(traj);
            assert_eq!(len, 201);
            let mut norms = vec![0.0; len];
            assert_eq!(
                bs_trajectory_norms(traj, norms.as_mut_ptr(), len),
                BsStatus::BsOk
            );
            // closed loop with the exact kernel: settled well before the end
            assert!(norms[len - 1] < 1e-3 * norms[0]);
            let mut controls = vec![0.0; len];
            assert_eq!(
                bs_trajectory_controls(traj, controls.as_mut_ptr(), len),
                BsStatus::BsOk
            );

            bs_trajectory_free(traj);
            bs_grid_free(u0);
            bs_grid_free(kernel);
            bs_grid_free(beta);
        }
    }

    #[test]
    fn null_and_size_guards() {
        unsafe {
            let mut out: *mut BsGrid = ptr::null_mut();
            assert_eq!(
                bs_grid_new(ptr::null(), 5, &mut out),
                BsStatus::BsInvalidArgument
            );
            assert_eq!(
                bs_grid_chebyshev(6.0, -1.0, 10, &mut out),
                BsStatus::BsInvalidArgument
            );
            assert_eq!(bs_grid_len(ptr::null()), 0);
            assert!(bs_grid_sup_norm(ptr::null()).is_nan());

            let values = [f64::NAN, 0.0, 1.0];
            assert_eq!(
                bs_grid_new(values.as_ptr(), 3, &mut out),
                BsStatus::BsNonFinite
            );
            assert!(out.is_null());

            bs_grid_free(ptr::null_mut());
            bs_trajectory_free(ptr::null_mut());
        }
    }

    #[test]
    fn mismatched_grids_are_reported() {
        unsafe {
            let mut a: *mut BsGrid = ptr::null_mut();
            let mut b: *mut BsGrid = ptr::null_mut();
            bs_grid_chebyshev(6.0, 3.0, 50, &mut a);
            bs_grid_chebyshev(6.0, 3.0, 60, &mut b);
            let mut value = 0.0;
            assert_eq!(bs_control(a, b, &mut value), BsStatus::BsGridMismatch);
            bs_grid_free(a);
            bs_grid_free(b);
        }
    }

    #[test]
    fn status_names_are_stable() {
        unsafe {
            let name = std::ffi::CStr::from_ptr(bs_status_name(BsStatus::BsOk));
            assert_eq!(name.to_str().unwrap(), "ok");
            let name = std::ffi::CStr::from_ptr(bs_status_name(BsStatus::BsGridMismatch));
            assert_eq!(name.to_str().unwrap(), "grid mismatch");
        }
    }
}
