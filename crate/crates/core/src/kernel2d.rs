//! Gain-kernel solver for the hyperbolic PIDE plant, where the kernel
//! `k(x,y)` lives on the triangle `T = {0 <= y <= x <= 1}` and satisfies
//! `k = F0 + F(g, f, k)` with
//!
//! ```text
//! F0(x,y)      = -g(x-y) - int_0^y f(x-y+s, s) ds
//! F(g,f,K)(x,y) = int_0^{x-y} g(s) K(x-y, s) ds
//!               + int_0^y int_0^{x-y} f(s+e, e) K(x-y+e, s+e) ds de
//! ```
//!
//! The double integral is evaluated by nested trapezoid sums, inner in `s`
//! (the `xi` variable) and outer in `e` (the `eta` variable).

use crate::error::{Error, Result};
use crate::grid::{check_match, GridFunction1D, TriangularGridFunction};
use crate::kernel1d::KernelSolveConfig;

/// The inhomogeneous part `F0` of the kernel equation.
fn f0_term(g: &GridFunction1D, f: &TriangularGridFunction) -> TriangularGridFunction {
    let n = g.n_cells();
    let h = g.h();
    let mut out = TriangularGridFunction::zeros(n);
    for i in 0..=n {
        for j in 0..=i {
            let d = i - j;
            // int_0^y f(x-y+s, s) ds over s = l*h, l = 0..j
            let mut integral = 0.0;
            if j > 0 {
                let mut sum = 0.5 * (f.get(d, 0) + f.get(d + j, j));
                for l in 1..j {
                    sum += f.get(d + l, l);
                }
                integral = sum * h;
            }
            out.set(i, j, -g.get(d) - integral);
        }
    }
    out
}

/// The part of the fixed-point operator that is linear in the kernel iterate.
///
/// The inner integral of the double term depends only on `(x-y, eta)`, so it
/// is cached per diagonal before the outer sweep.
fn f_linear(
    g: &GridFunction1D,
    f: &TriangularGridFunction,
    kappa: &TriangularGridFunction,
) -> TriangularGridFunction {
    let n = g.n_cells();
    let h = g.h();

    // inner[d][l] = int_0^{d*h} f(s + l*h, l*h) kappa(d*h + l*h, s + l*h) ds
    // defined for d + l <= n
    let mut inner = vec![Vec::new(); n + 1];
    for (d, row) in inner.iter_mut().enumerate() {
        row.reserve(n - d + 1);
        for l in 0..=(n - d) {
            let val = if d == 0 {
                0.0
            } else {
                let mut sum = 0.5 * (f.get(l, l) * kappa.get(d + l, l)
                    + f.get(d + l, l) * kappa.get(d + l, d + l));
                for m in 1..d {
                    sum += f.get(m + l, l) * kappa.get(d + l, m + l);
                }
                sum * h
            };
            row.push(val);
        }
    }

    let mut out = TriangularGridFunction::zeros(n);
    for i in 0..=n {
        for j in 0..=i {
            let d = i - j;
            // int_0^{x-y} g(s) kappa(x-y, s) ds
            let first = if d == 0 {
                0.0
            } else {
                let mut sum = 0.5 * (g.get(0) * kappa.get(d, 0) + g.get(d) * kappa.get(d, d));
                for m in 1..d {
                    sum += g.get(m) * kappa.get(d, m);
                }
                sum * h
            };
            // outer trapezoid over eta = l*h, l = 0..j
            let second = if j == 0 {
                0.0
            } else {
                let row = &inner[d];
                let mut sum = 0.5 * (row[0] + row[j]);
                for l in 1..j {
                    sum += row[l];
                }
                sum * h
            };
            out.set(i, j, first + second);
        }
    }
    out
}

/// Solve `k = F0 + F(g, f, k)` on the triangle by series summation.
pub fn solve_kernel_2d(
    g: &GridFunction1D,
    f: &TriangularGridFunction,
    cfg: &KernelSolveConfig,
) -> Result<TriangularGridFunction> {
    cfg.validate()?;
    check_match(g.n_cells(), f.n_cells())?;
    let mut increment = f0_term(g, f);
    let mut k = increment.clone();
    for _ in 0..cfg.max_terms {
        if increment.sup_norm() < cfg.tolerance {
            return Ok(k);
        }
        increment = f_linear(g, f, &increment);
        k.add_assign(&increment);
    }
    Err(Error::NonConvergence {
        terms: cfg.max_terms,
        increment: increment.sup_norm(),
    })
}

/// Sup-norm defect of the 2D kernel equation over the triangle.
pub fn residual_2d(
    g: &GridFunction1D,
    f: &TriangularGridFunction,
    k: &TriangularGridFunction,
) -> Result<f64> {
    check_match(g.n_cells(), f.n_cells())?;
    check_match(g.n_cells(), k.n_cells())?;
    let rhs_const = f0_term(g, f);
    let rhs_lin = f_linear(g, f, k);
    let mut worst = 0.0f64;
    for ((kv, cv), lv) in k
        .values()
        .iter()
        .zip(rhs_const.values())
        .zip(rhs_lin.values())
    {
        worst = worst.max((kv - cv - lv).abs());
    }
    Ok(worst)
}

/// Finite-difference partial derivatives of a triangular kernel.
///
/// Central differences in the interior of each grid line; second-order
/// one-sided stencils at the edges and on the diagonal, degrading to
/// first-order only where a line holds just two points.
pub fn kernel_partials(
    k: &TriangularGridFunction,
) -> Result<(TriangularGridFunction, TriangularGridFunction)> {
    let n = k.n_cells();
    if n < 2 {
        return Err(Error::GridTooSmall { needed: 2, got: n });
    }
    let h = k.h();
    let mut kx = TriangularGridFunction::zeros(n);
    let mut ky = TriangularGridFunction::zeros(n);
    for i in 0..=n {
        for j in 0..=i {
            // d/dy along fixed i: valid column range is j in [0, i]
            let dy = if j > 0 && j < i {
                (k.get(i, j + 1) - k.get(i, j - 1)) / (2.0 * h)
            } else if j == 0 && j + 2 <= i {
                (-3.0 * k.get(i, j) + 4.0 * k.get(i, j + 1) - k.get(i, j + 2)) / (2.0 * h)
            } else if j == i && j >= 2 {
                (3.0 * k.get(i, j) - 4.0 * k.get(i, j - 1) + k.get(i, j - 2)) / (2.0 * h)
            } else if j + 1 <= i {
                (k.get(i, j + 1) - k.get(i, j)) / h
            } else if j >= 1 {
                (k.get(i, j) - k.get(i, j - 1)) / h
            } else {
                // single-point line (i == j == 0)
                0.0
            };
            ky.set(i, j, dy);

            // d/dx along fixed j: valid row range is i in [j, n]
            let dx = if i > j && i < n {
                (k.get(i + 1, j) - k.get(i - 1, j)) / (2.0 * h)
            } else if i == j && i + 2 <= n {
                (-3.0 * k.get(i, j) + 4.0 * k.get(i + 1, j) - k.get(i + 2, j)) / (2.0 * h)
            } else if i == n && i >= j + 2 {
                (3.0 * k.get(i, j) - 4.0 * k.get(i - 1, j) + k.get(i - 2, j)) / (2.0 * h)
            } else if i == j && i >= 1 && i + 1 <= n {
                // two-point x-line near the corner; recover k_x from the
                // diagonal derivative d/dt k(t,t) = k_x + k_y
                let diag = (k.get(i + 1, j + 1) - k.get(i - 1, j - 1)) / (2.0 * h);
                diag - dy
            } else if i == n && i == j && i >= 2 {
                // single-point x-line at the top corner, same identity with a
                // one-sided diagonal stencil
                let diag = (3.0 * k.get(i, j) - 4.0 * k.get(i - 1, j - 1)
                    + k.get(i - 2, j - 2))
                    / (2.0 * h);
                diag - dy
            } else if i + 1 <= n {
                (k.get(i + 1, j) - k.get(i, j)) / h
            } else {
                (k.get(i, j) - k.get(i - 1, j - 1)) / h - dy
            };
            kx.set(i, j, dx);
        }
    }
    Ok((kx, ky))
}

/// Analytic sup bounds on the 2D kernel and its partials:
/// `k_bar = (g+f)e^{g+f}`, `phi0_bar = g' + (g+f)k_bar`,
/// `kx_bar = (fx + phi0_bar)e^{g+f}`,
/// `ky_bar = fx + f k_bar + phi0_bar + (g+f)kx_bar`.
pub fn bounds_2d(g_bar: f64, gprime_bar: f64, f_bar: f64, fx_bar: f64) -> (f64, f64, f64, f64) {
    let gf = g_bar + f_bar;
    let k_bar = gf * gf.exp();
    let phi0_bar = gprime_bar + gf * k_bar;
    let kx_bar = (fx_bar + phi0_bar) * gf.exp();
    let ky_bar = fx_bar + f_bar * k_bar + phi0_bar + gf * kx_bar;
    (k_bar, kx_bar, ky_bar, phi0_bar)
}

/// Solve the inverse-kernel relationship
/// `l(x,y) = k(x,y) + int_y^x k(x,s) l(s,y) ds` by successive approximation.
pub fn solve_inverse_kernel_2d(
    k_hat: &TriangularGridFunction,
    cfg: &KernelSolveConfig,
) -> Result<TriangularGridFunction> {
    cfg.validate()?;
    let n = k_hat.n_cells();
    let h = k_hat.h();
    let mut increment = k_hat.clone();
    let mut l = increment.clone();
    for _ in 0..cfg.max_terms {
        if increment.sup_norm() < cfg.tolerance {
            return Ok(l);
        }
        let mut next = TriangularGridFunction::zeros(n);
        for i in 0..=n {
            for j in 0..=i {
                if i == j {
                    continue;
                }
                let mut sum = 0.5
                    * (k_hat.get(i, j) * increment.get(j, j)
                        + k_hat.get(i, i) * increment.get(i, j));
                for m in (j + 1)..i {
                    sum += k_hat.get(i, m) * increment.get(m, j);
                }
                next.set(i, j, sum * h);
            }
        }
        increment = next;
        l.add_assign(&increment);
    }
    Err(Error::NonConvergence {
        terms: cfg.max_terms,
        increment: increment.sup_norm(),
    })
}
