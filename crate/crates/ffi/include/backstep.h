#ifndef BACKSTEP_H
#define BACKSTEP_H

/* Generated with cbindgen; edit src/lib.rs and regenerate instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status returned by every fallible call.
 */
typedef enum BsStatus {
  BS_OK = 0,
  /**
   * A pointer argument was null or a size was invalid.
   */
  BS_INVALID_ARGUMENT = 1,
  /**
   * Grid sizes of the arguments do not match.
   */
  BS_GRID_MISMATCH = 2,
  /**
   * The kernel series did not converge within the term budget.
   */
  BS_NO_CONVERGENCE = 3,
  /**
   * A non-finite value was produced or supplied.
   */
  BS_NON_FINITE = 4,
  /**
   * Any other library error.
   */
  BS_INTERNAL = 5,
} BsStatus;

/**
 * Opaque handle to a function sampled on the uniform grid over [0,1].
 */
typedef struct BsGrid BsGrid;

/**
 * Opaque handle to a recorded closed- or open-loop trajectory.
 */
typedef struct BsTrajectory BsTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name of a status code, for diagnostics. Never null.
 */
const char *bs_status_name(enum BsStatus status);

/**
 * Build a grid function from `n_points = n_cells + 1` samples.
 *
 * # Safety
 * `values` must point to `n_points` readable doubles; `out` must be a valid
 * destination pointer. On success the caller owns the handle and must free
 * it with [`bs_grid_free`].
 */
enum BsStatus bs_grid_new(const double *values, uintptr_t n_points, struct BsGrid **out);

/**
 * Build the Chebyshev-family coefficient `amplitude * cos(gamma * acos x)`.
 *
 * # Safety
 * `out` must be a valid destination pointer.
 */
enum BsStatus bs_grid_chebyshev(double amplitude,
                                double gamma,
                                uintptr_t n_cells,
                                struct BsGrid **out);

/**
 * # Safety
 * `grid` must be a handle obtained from this library, or null (a no-op).
 */
void bs_grid_free(struct BsGrid *grid);

/**
 * Number of sample points (`n_cells + 1`); 0 for null.
 *
 * # Safety
 * `grid` must be a valid handle or null.
 */
uintptr_t bs_grid_len(const struct BsGrid *grid);

/**
 * Copy the samples into a caller buffer of `buffer_len` doubles.
 *
 * # Safety
 * `buffer` must point to at least `buffer_len` writable doubles.
 */
enum BsStatus bs_grid_values(const struct BsGrid *grid, double *buffer, uintptr_t buffer_len);

/**
 * Sup-norm of the samples; NaN for null.
 *
 * # Safety
 * `grid` must be a valid handle or null.
 */
double bs_grid_sup_norm(const struct BsGrid *grid);

/**
 * Solve the gain-kernel integral equation for the given coefficient.
 * `tolerance <= 0` or `max_terms == 0` selects the defaults.
 *
 * # Safety
 * `beta` must be a valid handle; `out` a valid destination pointer.
 */
enum BsStatus bs_solve_kernel(const struct BsGrid *beta,
                              double tolerance,
                              uintptr_t max_terms,
                              struct BsGrid **out);

/**
 * Sup-norm defect of the kernel equation, written to `out`.
 *
 * # Safety
 * All handles must be valid; `out` must be a valid destination pointer.
 */
enum BsStatus bs_kernel_residual(const struct BsGrid *beta,
                                 const struct BsGrid *kernel,
                                 double *out);

/**
 * Boundary feedback `U = integral k(1-y) u(y) dy`, written to `out`.
 *
 * # Safety
 * All handles must be valid; `out` must be a valid destination pointer.
 */
enum BsStatus bs_control(const struct BsGrid *kernel, const struct BsGrid *state, double *out);

/**
 * Simulate the transport plant. A null `kernel` runs open loop.
 *
 * # Safety
 * `beta` and `u0` must be valid handles; `kernel` valid or null; `out` a
 * valid destination pointer. The caller frees the trajectory with
 * [`bs_trajectory_free`].
 */
enum BsStatus bs_simulate_transport(const struct BsGrid *beta,
                                    const struct BsGrid *u0,
                                    const struct BsGrid *kernel,
                                    double t_final,
                                    struct BsTrajectory **out);

/**
 * # Safety
 * `traj` must be a handle obtained from this library, or null (a no-op).
 */
void bs_trajectory_free(struct BsTrajectory *traj);

/**
 * Number of recorded time levels (`steps + 1`); 0 for null.
 *
 * # Safety
 * `traj` must be a valid handle or null.
 */
uintptr_t bs_trajectory_len(const struct BsTrajectory *traj);

/**
 * Copy the L2-norm series into a caller buffer.
 *
 * # Safety
 * `buffer` must point to at least `buffer_len` writable doubles.
 */
enum BsStatus bs_trajectory_norms(const struct BsTrajectory *traj,
                                  double *buffer,
                                  uintptr_t buffer_len);

/**
 * Copy the boundary-control series into a caller buffer.
 *
 * # Safety
 * `buffer` must point to at least `buffer_len` writable doubles.
 */
enum BsStatus bs_trajectory_controls(const struct BsTrajectory *traj,
                                     double *buffer,
                                     uintptr_t buffer_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BACKSTEP_H */
