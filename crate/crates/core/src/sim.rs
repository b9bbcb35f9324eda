//! Simulation of the transport plant `u_t = u_x + beta(x) u(0,t)` and the
//! PIDE plant `u_t = u_x + g(x) u(0,t) + int_0^x f(x,y) u(y,t) dy` with
//! boundary control `u(1,t) = U(t)`.
//!
//! Time stepping is CFL-aligned (`dt = h`), so the unit-speed transport is an
//! exact index shift along characteristics and all discretization error sits
//! in the explicitly-coupled source terms. Controllers are evaluated on the
//! state at the beginning of each step.

use crate::error::{Error, Result};
use crate::grid::{check_match, convolve, GridFunction1D, TriangularGridFunction};

/// Space-time record of one closed- or open-loop run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    n_cells: usize,
    dt: f64,
    states: Vec<GridFunction1D>,
    controls: Vec<f64>,
}

impl TrajectoryRecord {
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    #[inline]
    pub fn state(&self, step: usize) -> &GridFunction1D {
        &self.states[step]
    }

    #[inline]
    pub fn states(&self) -> &[GridFunction1D] {
        &self.states
    }

    #[inline]
    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    /// Outlet history `u(0, t_n)`, the signal a boundary observer measures.
    pub fn outlet_history(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.get(0)).collect()
    }

    pub fn l2_norms(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.l2_norm()).collect()
    }
}

/// Boundary feedback applied at `x = 1`.
pub enum Controller<'a> {
    /// `U == 0`.
    OpenLoopZero,
    /// `U(t) = int_0^1 k(1-y) u(y,t) dy`.
    GainKernel(&'a GridFunction1D),
    /// `U(t) = int_0^1 k(1,y) u(y,t) dy`.
    GainKernel2d(&'a TriangularGridFunction),
    /// Arbitrary state feedback, e.g. a trained feedback-law network.
    NeuralFeedback(&'a dyn Fn(&GridFunction1D) -> f64),
    /// Gain-kernel feedback applied to the explicit-solution observer state
    /// reconstructed from the control and outlet histories.
    ObserverBased {
        kernel: &'a GridFunction1D,
        initial_guess: &'a GridFunction1D,
    },
}

struct StepContext<'a> {
    beta: Option<&'a GridFunction1D>,
    controls: &'a [f64],
    outlets: &'a [f64],
    step: usize,
}

fn evaluate_controller(
    ctrl: &Controller<'_>,
    state: &GridFunction1D,
    ctx: &StepContext<'_>,
) -> Result<f64> {
    match ctrl {
        Controller::OpenLoopZero => Ok(0.0),
        Controller::GainKernel(k) => control_1d(k, state),
        Controller::GainKernel2d(k) => control_2d(k, state),
        Controller::NeuralFeedback(f) => Ok(f(state)),
        Controller::ObserverBased {
            kernel,
            initial_guess,
        } => {
            let beta = ctx.beta.ok_or_else(|| {
                Error::InvalidConfig(
                    "observer-based control is defined for the transport plant".into(),
                )
            })?;
            let observed =
                observer_state(beta, ctx.controls, ctx.outlets, ctx.step, initial_guess)?;
            control_1d(kernel, &observed)
        }
    }
}

/// Advance `u_t = u_x + beta(x) u(0,t)`, `u(1,t) = U(t)` up to `t_final`.
pub fn simulate_transport(
    beta: &GridFunction1D,
    u0: &GridFunction1D,
    ctrl: &Controller<'_>,
    t_final: f64,
) -> Result<TrajectoryRecord> {
    simulate(beta, None, u0, ctrl, t_final)
}

/// Advance the PIDE plant with recirculation `g` and Volterra kernel `f`.
pub fn simulate_pide(
    g: &GridFunction1D,
    f: &TriangularGridFunction,
    u0: &GridFunction1D,
    ctrl: &Controller<'_>,
    t_final: f64,
) -> Result<TrajectoryRecord> {
    check_match(g.n_cells(), f.n_cells())?;
    simulate(g, Some(f), u0, ctrl, t_final)
}

fn simulate(
    recirculation: &GridFunction1D,
    volterra: Option<&TriangularGridFunction>,
    u0: &GridFunction1D,
    ctrl: &Controller<'_>,
    t_final: f64,
) -> Result<TrajectoryRecord> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidConfig("t_final must be positive".into()));
    }
    check_match(recirculation.n_cells(), u0.n_cells())?;
    let n = recirculation.n_cells();
    let h = recirculation.h();
    let dt = h;
    let n_steps = (t_final / dt).round().max(1.0) as usize;

    // only the transport plant supports the explicit-solution observer
    let beta_for_observer = volterra.is_none().then_some(recirculation);

    let mut states: Vec<GridFunction1D> = Vec::with_capacity(n_steps + 1);
    let mut controls: Vec<f64> = Vec::with_capacity(n_steps + 1);
    let mut outlets: Vec<f64> = Vec::with_capacity(n_steps + 1);

    let mut current = u0.values().to_vec();
    for step in 0..=n_steps {
        outlets.push(current[0]);
        let provisional = GridFunction1D::new(n, current.clone())?;
        let ctx = StepContext {
            beta: beta_for_observer,
            controls: &controls,
            outlets: &outlets,
            step,
        };
        let control = evaluate_controller(ctrl, &provisional, &ctx)?;
        if !control.is_finite() {
            return Err(Error::NonFinite("controller output"));
        }
        current[n] = control;
        controls.push(control);
        let state = GridFunction1D::new(n, current.clone())?;

        if step == n_steps {
            states.push(state);
            break;
        }

        let source_at = |state: &[f64], i: usize| -> f64 {
            let mut source = recirculation.get(i) * state[0];
            if let Some(f) = volterra {
                // int_0^{x_i} f(x_i, y) u(y) dy by trapezoid
                if i > 0 {
                    let mut sum = 0.5 * (f.get(i, 0) * state[0] + f.get(i, i) * state[i]);
                    for j in 1..i {
                        sum += f.get(i, j) * state[j];
                    }
                    source += sum * h;
                }
            }
            source
        };

        // Heun step along characteristics: predict with the source at the
        // departure point (x_{i+1}, t_n), then average with the source at the
        // arrival point (x_i, t_{n+1}) evaluated on the predicted state.
        let mut predicted = vec![0.0; n + 1];
        for i in 0..n {
            predicted[i] = current[i + 1] + dt * source_at(&current, i + 1);
        }
        predicted[n] = current[n];
        let mut next = vec![0.0; n + 1];
        for i in 0..n {
            next[i] = current[i + 1]
                + 0.5 * dt * (source_at(&current, i + 1) + source_at(&predicted, i));
        }
        // boundary value is provisional until the next controller evaluation
        next[n] = current[n];
        states.push(state);
        current = next;
    }

    Ok(TrajectoryRecord {
        n_cells: n,
        dt,
        states,
        controls,
    })
}

/// Backstepping boundary feedback `U = int_0^1 k(1-y) u(y) dy`.
pub fn control_1d(k: &GridFunction1D, u: &GridFunction1D) -> Result<f64> {
    check_match(k.n_cells(), u.n_cells())?;
    let n = k.n_cells();
    let h = k.h();
    let mut sum = 0.5 * (k.get(n) * u.get(0) + k.get(0) * u.get(n));
    for j in 1..n {
        sum += k.get(n - j) * u.get(j);
    }
    Ok(sum * h)
}

/// 2D backstepping boundary feedback `U = int_0^1 k(1,y) u(y) dy`.
pub fn control_2d(k: &TriangularGridFunction, u: &GridFunction1D) -> Result<f64> {
    check_match(k.n_cells(), u.n_cells())?;
    let n = k.n_cells();
    let h = k.h();
    let mut sum = 0.5 * (k.get(n, 0) * u.get(0) + k.get(n, n) * u.get(n));
    for j in 1..n {
        sum += k.get(n, j) * u.get(j);
    }
    Ok(sum * h)
}

/// Backstepping transform `w = u - k * u`.
pub fn forward_transform(k: &GridFunction1D, u: &GridFunction1D) -> Result<GridFunction1D> {
    u.sub(&convolve(k, u)?)
}

/// Inverse transform `u = w + l * w`.
pub fn inverse_transform(l: &GridFunction1D, w: &GridFunction1D) -> Result<GridFunction1D> {
    w.add(&convolve(l, w)?)
}

/// Reconstruct the plant state from boundary data only, via the explicit
/// solution `u(x,t) = U(t+x-1) + int_{t+x-1}^t beta(t+x-tau) u(0,tau) dtau`
/// for `t+x >= 1`; where `t+x < 1` the stored initial guess is used.
pub fn observer_state(
    beta: &GridFunction1D,
    control_history: &[f64],
    outlet_history: &[f64],
    t_index: usize,
    initial_guess: &GridFunction1D,
) -> Result<GridFunction1D> {
    let n = beta.n_cells();
    check_match(n, initial_guess.n_cells())?;
    let available = control_history.len().min(outlet_history.len());
    if available < t_index + 1 {
        return Err(Error::InsufficientHistory {
            requested: t_index,
            available,
        });
    }
    let h = beta.h();
    let mut values = vec![0.0; n + 1];
    for (i, value) in values.iter_mut().enumerate() {
        // index of t + x - 1 on the shared time/space grid
        if t_index + i >= n {
            let s = t_index + i - n;
            let mut integral = 0.0;
            if t_index > s {
                // beta argument t + x - tau stays in [x_i, 1]
                let mut sum = 0.5
                    * (beta.get(n) * outlet_history[s] + beta.get(i) * outlet_history[t_index]);
                for q in (s + 1)..t_index {
                    sum += beta.get(t_index + i - q) * outlet_history[q];
                }
                integral = sum * h;
            }
            *value = control_history[s] + integral;
        } else {
            *value = initial_guess.get(i);
        }
    }
    GridFunction1D::new(n, values)
}
