//! Gain-kernel solver for the transport plant with recirculation.
//!
//! The backstepping gain kernel `k` solves the Volterra convolution equation
//! `k = -beta + beta * k` on `[0,1]`. It is computed as the series
//! `k = sum_n dk^n` with `dk^0 = -beta` and `dk^{n+1} = beta * dk^n`,
//! whose terms decay factorially. The inverse-transformation kernel
//! `l = -beta + delta + delta * l` is solved by the same machinery.

use crate::error::{Error, Result};
use crate::grid::{check_match, convolve, GridFunction1D};

/// Truncation control for the successive-approximation series.
#[derive(Debug, Clone, Copy)]
pub struct KernelSolveConfig {
    /// Stop once the sup-norm of the latest increment drops below this.
    pub tolerance: f64,
    /// Hard cap on the number of series terms.
    pub max_terms: usize,
}

impl Default for KernelSolveConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_terms: 200,
        }
    }
}

impl KernelSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidConfig("max_terms must be at least 1".into()));
        }
        Ok(())
    }
}

/// Solve `k = -beta + beta * k` by series summation.
pub fn solve_kernel(beta: &GridFunction1D, cfg: &KernelSolveConfig) -> Result<GridFunction1D> {
    cfg.validate()?;
    let mut increment = beta.scale(-1.0);
    let mut k = increment.clone();
    for _ in 0..cfg.max_terms {
        let inc_norm = increment.sup_norm();
        if inc_norm < cfg.tolerance {
            return Ok(k);
        }
        increment = convolve(beta, &increment)?;
        k.add_assign(&increment);
    }
    Err(Error::NonConvergence {
        terms: cfg.max_terms,
        increment: increment.sup_norm(),
    })
}

/// Sup-norm defect of the kernel equation: `|| k + beta - beta * k ||_inf`.
pub fn residual_1d(beta: &GridFunction1D, k: &GridFunction1D) -> Result<f64> {
    check_match(beta.n_cells(), k.n_cells())?;
    let conv = convolve(beta, k)?;
    Ok(k.add(beta)?.sub(&conv)?.sup_norm())
}

/// Pointwise kernel bound `|k(x)| <= b e^{b x}` evaluated at `x = 1`.
pub fn kernel_sup_bound(beta_bar: f64) -> f64 {
    beta_bar * beta_bar.exp()
}

/// Lipschitz constant `e^{3B}` of the kernel operator on `{||beta||_inf <= B}`.
pub fn lipschitz_bound(b: f64) -> f64 {
    (3.0 * b).exp()
}

/// Solve the inverse-transformation kernel equation
/// `l = -beta + delta + delta * l` by successive approximation.
///
/// `delta` is the perturbation induced by the kernel approximation error;
/// for `delta == 0` this returns exactly `-beta`.
pub fn solve_inverse_kernel(
    beta: &GridFunction1D,
    delta: &GridFunction1D,
    cfg: &KernelSolveConfig,
) -> Result<GridFunction1D> {
    cfg.validate()?;
    check_match(beta.n_cells(), delta.n_cells())?;
    let mut increment = delta.sub(beta)?;
    let mut l = increment.clone();
    for _ in 0..cfg.max_terms {
        if increment.sup_norm() < cfg.tolerance {
            return Ok(l);
        }
        increment = convolve(delta, &increment)?;
        l.add_assign(&increment);
    }
    Err(Error::NonConvergence {
        terms: cfg.max_terms,
        increment: increment.sup_norm(),
    })
}

/// Solve both kernels and return the realized perturbation gap together with
/// the analytic Lipschitz bound `e^{3B} ||beta1 - beta2||_inf`.
pub fn perturbation_gap(
    beta1: &GridFunction1D,
    beta2: &GridFunction1D,
    cfg: &KernelSolveConfig,
) -> Result<(f64, f64)> {
    check_match(beta1.n_cells(), beta2.n_cells())?;
    let k1 = solve_kernel(beta1, cfg)?;
    let k2 = solve_kernel(beta2, cfg)?;
    let gap = k1.sub(&k2)?.sup_norm();
    let b = beta1.sup_norm().max(beta2.sup_norm());
    let bound = lipschitz_bound(b) * beta1.sub(beta2)?.sup_norm();
    Ok((gap, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chebyshev(gamma: f64, n: usize) -> GridFunction1D {
        GridFunction1D::from_fn(n, |x| 6.0 * (gamma * x.acos()).cos())
    }

    #[test]
    fn zero_beta_gives_zero_kernel() {
        let beta = GridFunction1D::zeros(100);
        let k = solve_kernel(&beta, &KernelSolveConfig::default()).unwrap();
        assert_eq!(k.sup_norm(), 0.0);
    }

    #[test]
    fn constant_beta_matches_analytic_kernel() {
        // beta == 1 gives k(x) = -e^x
        let beta = GridFunction1D::constant(200, 1.0);
        let k = solve_kernel(&beta, &KernelSolveConfig::default()).unwrap();
        let exact = GridFunction1D::from_fn(200, |x| -x.exp());
        assert!(k.sub(&exact).unwrap().sup_norm() < 1e-4);
        assert!((k.get(200) + std::f64::consts::E).abs() < 1e-4);
    }

    #[test]
    fn chebyshev_kernel_residual_small() {
        let beta = chebyshev(3.0, 200);
        let k = solve_kernel(&beta, &KernelSolveConfig::default()).unwrap();
        assert!(residual_1d(&beta, &k).unwrap() <= 1e-6);
    }

    #[test]
    fn residual_values() {
        let n = 200;
        let zero = GridFunction1D::zeros(n);
        assert_eq!(residual_1d(&zero, &zero).unwrap(), 0.0);

        let one = GridFunction1D::constant(n, 1.0);
        let exact = GridFunction1D::from_fn(n, |x| -x.exp());
        assert!(residual_1d(&one, &exact).unwrap() <= 1e-4);
        // k == 0 leaves exactly ||beta||_inf
        assert!((residual_1d(&one, &zero).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_contract_at_default_tolerance() {
        let beta = chebyshev(5.5, 200);
        let cfg = KernelSolveConfig {
            tolerance: 1e-8,
            max_terms: 200,
        };
        let k = solve_kernel(&beta, &cfg).unwrap();
        assert!(residual_1d(&beta, &k).unwrap() <= 10.0 * cfg.tolerance);
    }

    #[test]
    fn bound_formulas() {
        assert_eq!(kernel_sup_bound(0.0), 0.0);
        assert!((kernel_sup_bound(1.0) - std::f64::consts::E).abs() < 1e-12);
        assert!((kernel_sup_bound(6.0) - 6.0 * 6.0f64.exp()).abs() < 1e-9);
        assert_eq!(lipschitz_bound(0.0), 1.0);
        assert!((lipschitz_bound(1.0) - 3.0f64.exp()).abs() < 1e-12);
        assert!((lipschitz_bound(2.0) - 6.0f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn series_bound_holds_pointwise() {
        let beta = chebyshev(4.2, 200);
        let k = solve_kernel(&beta, &KernelSolveConfig::default()).unwrap();
        let bar = beta.sup_norm();
        for i in 0..=200 {
            let x = k.x(i);
            assert!(k.get(i).abs() <= bar * (bar * x).exp() + 1e-6);
        }
    }

    #[test]
    fn increment_decay_matches_factorial_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let gamma = rng.gen_range(2.0..8.0);
            let beta = chebyshev(gamma, 128);
            let bar = beta.sup_norm();
            let mut increment = beta.scale(-1.0);
            let mut factorial = 1.0;
            for n in 0..=20usize {
                if n > 0 {
                    factorial *= n as f64;
                }
                let bound = bar.powi(n as i32 + 1) / factorial;
                assert!(
                    increment.sup_norm() <= bound * (1.0 + 1e-6) + 1e-9,
                    "term {n}: {} > {bound}",
                    increment.sup_norm()
                );
                increment = convolve(&beta, &increment).unwrap();
            }
        }
    }

    #[test]
    fn inverse_kernel_collapses_without_perturbation() {
        let beta = chebyshev(3.0, 100);
        let delta = GridFunction1D::zeros(100);
        let l = solve_inverse_kernel(&beta, &delta, &KernelSolveConfig::default()).unwrap();
        assert!(l.add(&beta).unwrap().sup_norm() < 1e-15);

        let zero = GridFunction1D::zeros(100);
        let l0 = solve_inverse_kernel(&zero, &delta, &KernelSolveConfig::default()).unwrap();
        assert_eq!(l0.sup_norm(), 0.0);
    }

    #[test]
    fn inverse_kernel_matches_dense_picard_oracle() {
        // independent oracle: Picard iteration on l directly, not the series
        let n = 50;
        let beta = GridFunction1D::constant(n, 1.0);
        let delta = GridFunction1D::constant(n, 0.1);
        let l = solve_inverse_kernel(&beta, &delta, &KernelSolveConfig::default()).unwrap();

        let base = delta.sub(&beta).unwrap();
        let mut oracle = GridFunction1D::zeros(n);
        for _ in 0..200 {
            oracle = base.add(&convolve(&delta, &oracle).unwrap()).unwrap();
        }
        assert!(l.sub(&oracle).unwrap().sup_norm() < 1e-6);
    }

    #[test]
    fn perturbation_gap_trivial_and_analytic() {
        let beta = chebyshev(3.0, 150);
        let cfg = KernelSolveConfig::default();
        let (gap, bound) = perturbation_gap(&beta, &beta, &cfg).unwrap();
        assert_eq!(gap, 0.0);
        assert_eq!(bound, 0.0);

        let one = GridFunction1D::constant(200, 1.0);
        let zero = GridFunction1D::zeros(200);
        let (gap, bound) = perturbation_gap(&one, &zero, &cfg).unwrap();
        assert!((gap - std::f64::consts::E).abs() < 1e-4);
        assert!((bound - 3.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_property_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = KernelSolveConfig::default();
        for _ in 0..50 {
            let g1 = rng.gen_range(2.0..8.0);
            let g2 = rng.gen_range(2.0..8.0);
            let b1 = chebyshev(g1, 128);
            let b2 = chebyshev(g2, 128);
            let (gap, bound) = perturbation_gap(&b1, &b2, &cfg).unwrap();
            assert!(gap <= bound, "gap {gap} > bound {bound}");
        }
    }

    #[test]
    fn grid_refinement_second_order() {
        let cfg = KernelSolveConfig::default();
        let err_at = |n: usize| {
            let beta = GridFunction1D::constant(n, 1.0);
            let k = solve_kernel(&beta, &cfg).unwrap();
            let exact = GridFunction1D::from_fn(n, |x| -x.exp());
            k.sub(&exact).unwrap().sup_norm()
        };
        let ratio = err_at(100) / err_at(200);
        assert!(ratio >= 3.5, "ratio {ratio}");
    }
}
