//! Fixed-epsilon inner level: the constrained and free gradient systems for
//! the smallest singular value of `H(p + eps * delta)`, integrated with
//! explicit Euler steps that are rejected whenever `sigma` would increase.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::{apply_weights, project_outer, HankelShape, WeightVector};
use crate::scalar::{norm2, real_inner, Scalar};
use crate::spectral::{smallest_hankel_triplet, smallest_hankel_triplet_near, SingularTriplet};

/// Steps smaller than this count as stagnation.
pub const MIN_STEP: f64 = 1e-16;

/// `||delta_dot|| <= STATIONARY_RATE_TOL * ||g||` is treated as a fixed point.
const STATIONARY_RATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Initial Euler step.
    pub h0: f64,
    /// Step reduction factor on rejection, in (0, 1).
    pub gamma: f64,
    /// Ceiling for step growth after accepted steps.
    pub h_max: f64,
    /// Inner stop: absolute decrease of sigma over one accepted step.
    pub tol_stationary: f64,
    /// Target sigma, relative to `||H(p)||_F` of the unperturbed data.
    pub tol_rank: f64,
    pub max_inner_steps: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            h0: 0.1,
            gamma: 0.5,
            h_max: 1.0,
            tol_stationary: 1e-8,
            tol_rank: 1e-8,
            max_inner_steps: 5000,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !positive(self.h0) || !positive(self.h_max) || self.h0 > self.h_max {
            return Err(Error::InvalidInput(format!(
                "need 0 < h0 <= h_max, got h0 = {}, h_max = {}",
                self.h0, self.h_max
            )));
        }
        if !positive(self.tol_stationary) || !positive(self.tol_rank) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_inner_steps == 0 {
            return Err(Error::InvalidInput(
                "max_inner_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The data held fixed while the inner level runs.
#[derive(Debug, Clone, Copy)]
pub struct FlowProblem<'a, T: Scalar> {
    data: &'a [T],
    shape: HankelShape,
    weights: &'a WeightVector,
    tol_rank: f64,
    scale: f64,
}

impl<'a, T: Scalar> FlowProblem<'a, T> {
    /// `tol_rank` here is absolute.
    pub fn new(
        data: &'a [T],
        shape: HankelShape,
        weights: &'a WeightVector,
        tol_rank: f64,
    ) -> Result<Self> {
        if data.len() != shape.len() || weights.len() != shape.len() {
            return Err(Error::Shape(format!(
                "data ({}) and weights ({}) must both have length {}",
                data.len(),
                weights.len(),
                shape.len()
            )));
        }
        let scale = crate::hankel::frobenius_norm(data, shape);
        Ok(Self {
            data,
            shape,
            weights,
            tol_rank,
            scale,
        })
    }

    pub fn data(&self) -> &'a [T] {
        self.data
    }

    pub fn shape(&self) -> HankelShape {
        self.shape
    }

    pub fn weights(&self) -> &'a WeightVector {
        self.weights
    }

    pub fn tol_rank(&self) -> f64 {
        self.tol_rank
    }

    /// `||H(p)||_F` of the unperturbed data.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `p + eps * delta`.
    pub fn perturbed(&self, delta: &[T], epsilon: f64) -> Vec<T> {
        self.data
            .iter()
            .zip(delta)
            .map(|(p, d)| *p + d.scale(epsilon))
            .collect()
    }

    pub fn triplet_at(&self, delta: &[T], epsilon: f64) -> Result<SingularTriplet<T>> {
        smallest_hankel_triplet(&self.perturbed(delta, epsilon), self.shape)
    }

    /// [`Self::triplet_at`] warm started from the triplet of a nearby point.
    pub fn triplet_near(
        &self,
        delta: &[T],
        epsilon: f64,
        near: &SingularTriplet<T>,
    ) -> Result<SingularTriplet<T>> {
        smallest_hankel_triplet_near(&self.perturbed(delta, epsilon), self.shape, near)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState<T: Scalar> {
    pub delta: Vec<T>,
    pub epsilon: f64,
    /// Triplet of `H(p + epsilon * delta)`.
    pub triplet: SingularTriplet<T>,
    /// Current Euler step.
    pub step: f64,
}

impl<T: Scalar> FlowState<T> {
    pub fn new(
        problem: &FlowProblem<'_, T>,
        delta: Vec<T>,
        epsilon: f64,
        step: f64,
    ) -> Result<Self> {
        if delta.len() != problem.shape().len() {
            return Err(Error::Shape("direction length does not match data".into()));
        }
        let triplet = problem.triplet_at(&delta, epsilon)?;
        Ok(Self {
            delta,
            epsilon,
            triplet,
            step,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.triplet.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Constrained,
    Free,
}

/// One accepted Euler step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Phase,
    pub epsilon: f64,
    pub sigma: f64,
    /// Step size used for the accepted step.
    pub step: f64,
    /// `||delta_dot||` at the base point of the step.
    pub rate_norm: f64,
    /// `||delta||` after the step.
    pub delta_norm: f64,
    /// Set when sigma was numerically multiple at the new point.
    pub near_multiple: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStop {
    /// Flow reached a fixed point or the per-step decrease fell below
    /// `tol_stationary`.
    Stationary,
    /// sigma fell to the rank tolerance.
    RankReached,
    /// Free flow grew `||delta||` to the requested target.
    NormTargetReached,
    /// `max_inner_steps` accepted steps without another stop condition.
    Truncated,
    /// Step control shrank the step below [`MIN_STEP`].
    Stagnated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome<T: Scalar> {
    pub state: FlowState<T>,
    pub steps: Vec<StepRecord>,
    pub rejected: usize,
    pub stop: PhaseStop,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError<T: Scalar> {
    /// Carries the best state reached before the step underflowed.
    #[error("inner flow stagnated after {} accepted steps", .0.steps.len())]
    Stagnated(Box<PhaseOutcome<T>>),
    #[error(transparent)]
    Numerical(#[from] Error),
}

/// `w .* vect(P_H(u v^H))`.
pub fn descent_gradient<T: Scalar>(u: &DVector<T>, v: &DVector<T>, w: &WeightVector) -> Vec<T> {
    apply_weights(&project_outer(u, v), w)
}

/// Right-hand side of the norm-preserving flow: `-g + <delta, g> delta`.
pub fn constrained_rhs<T: Scalar>(delta: &[T], g: &[T]) -> Vec<T> {
    let c = real_inner(delta, g);
    g.iter()
        .zip(delta)
        .map(|(gi, di)| di.scale(c) - *gi)
        .collect()
}

/// Right-hand side of the free flow: `-g`.
pub fn free_rhs<T: Scalar>(g: &[T]) -> Vec<T> {
    g.iter().map(|x| -*x).collect()
}

/// Derivative of sigma along `delta_dot`: `eps * Re(u^H H(delta_dot) v)`.
pub fn sigma_rate<T: Scalar>(u: &DVector<T>, v: &DVector<T>, delta_dot: &[T], epsilon: f64) -> f64 {
    debug_assert_eq!(delta_dot.len() + 1, u.len() + v.len());
    let mut acc = T::zero();
    for (i, ui) in u.iter().enumerate() {
        let ui = ui.conjugate();
        for (j, vj) in v.iter().enumerate() {
            acc += ui * delta_dot[i + j] * *vj;
        }
    }
    epsilon * acc.real()
}

fn axpy<T: Scalar>(x: &[T], h: f64, d: &[T]) -> Vec<T> {
    x.iter().zip(d).map(|(a, b)| *a + b.scale(h)).collect()
}

fn normalized<T: Scalar>(x: Vec<T>) -> Vec<T> {
    let n = norm2(&x);
    x.into_iter().map(|a| a.unscale(n)).collect()
}

struct Stepper<'p, 'a, T: Scalar> {
    problem: &'p FlowProblem<'a, T>,
    params: &'p FlowParams,
    phase: Phase,
    warned: bool,
}

impl<T: Scalar> Stepper<'_, '_, T> {
    fn record(&mut self, state: &FlowState<T>, rate_norm: f64, step: f64) -> StepRecord {
        let near_multiple = state.triplet.is_nearly_multiple(self.problem.scale());
        if near_multiple && !self.warned {
            log::warn!(
                "{:?} flow: smallest singular value {:e} is nearly multiple (gap {:e})",
                self.phase,
                state.sigma(),
                state.triplet.gap
            );
            self.warned = true;
        }
        StepRecord {
            phase: self.phase,
            epsilon: state.epsilon,
            sigma: state.sigma(),
            step,
            rate_norm,
            delta_norm: norm2(&state.delta),
            near_multiple,
        }
    }

    /// Try steps from `state` along `rate`, shrinking `h` on every increase
    /// of sigma. Returns the accepted state and the step used, or `None` on
    /// underflow.
    fn accept_step(
        &self,
        state: &FlowState<T>,
        rate: &[T],
        step_cap: f64,
        rejected: &mut usize,
    ) -> Result<Option<(FlowState<T>, f64)>> {
        let mut h = state.step;
        loop {
            let h_try = h.min(step_cap);
            let mut delta = axpy(&state.delta, h_try, rate);
            if self.phase == Phase::Constrained {
                delta = normalized(delta);
            }
            let triplet = self
                .problem
                .triplet_near(&delta, state.epsilon, &state.triplet)?;
            if triplet.sigma <= state.sigma() {
                let mut triplet = triplet;
                triplet.align_with(&state.triplet);
                let next = FlowState {
                    delta,
                    epsilon: state.epsilon,
                    triplet,
                    step: (h / self.params.gamma).min(self.params.h_max),
                };
                return Ok(Some((next, h_try)));
            }
            *rejected += 1;
            h *= self.params.gamma;
            if h < MIN_STEP {
                return Ok(None);
            }
        }
    }
}

/// Integrate the norm-preserving flow at fixed epsilon until the decrease
/// per accepted step drops below `tol_stationary`, sigma reaches the rank
/// tolerance, or `max_inner_steps` steps are taken.
pub fn integrate_constrained<T: Scalar>(
    problem: &FlowProblem<'_, T>,
    state: FlowState<T>,
    params: &FlowParams,
) -> std::result::Result<PhaseOutcome<T>, FlowError<T>> {
    let mut stepper = Stepper {
        problem,
        params,
        phase: Phase::Constrained,
        warned: false,
    };
    let mut state = state;
    let mut steps = Vec::new();
    let mut rejected = 0;
    let finish = |state, steps, rejected, stop| PhaseOutcome {
        state,
        steps,
        rejected,
        stop,
    };

    if state.sigma() <= problem.tol_rank() {
        return Ok(finish(state, steps, rejected, PhaseStop::RankReached));
    }
    while steps.len() < params.max_inner_steps {
        let g = descent_gradient(&state.triplet.u, &state.triplet.v, problem.weights());
        let rate = constrained_rhs(&state.delta, &g);
        let rate_norm = norm2(&rate);
        if rate_norm <= STATIONARY_RATE_TOL * norm2(&g) || rate_norm == 0.0 {
            return Ok(finish(state, steps, rejected, PhaseStop::Stationary));
        }
        let Some((next, h)) = stepper.accept_step(&state, &rate, f64::INFINITY, &mut rejected)?
        else {
            return Err(FlowError::Stagnated(Box::new(finish(
                state,
                steps,
                rejected,
                PhaseStop::Stagnated,
            ))));
        };
        let decrease = state.sigma() - next.sigma();
        steps.push(stepper.record(&next, rate_norm, h));
        state = next;
        if state.sigma() <= problem.tol_rank() {
            return Ok(finish(state, steps, rejected, PhaseStop::RankReached));
        }
        if decrease < params.tol_stationary {
            return Ok(finish(state, steps, rejected, PhaseStop::Stationary));
        }
    }
    Ok(finish(state, steps, rejected, PhaseStop::Truncated))
}

/// Largest `h` with `||x + h d|| <= target`, for `||x|| < target`.
fn step_to_norm<T: Scalar>(x: &[T], d: &[T], target: f64) -> f64 {
    let a = real_inner(d, d);
    if a == 0.0 {
        return f64::INFINITY;
    }
    let b = 2.0 * real_inner(x, d);
    let c = real_inner(x, x) - target * target;
    let disc = (b * b - 4.0 * a * c).max(0.0);
    (-b + disc.sqrt()) / (2.0 * a)
}

/// Integrate the free flow at fixed epsilon until `||delta|| >= norm_target`
/// or sigma reaches the rank tolerance. The last step is shortened so it
/// lands on the target norm instead of overshooting it.
pub fn integrate_free<T: Scalar>(
    problem: &FlowProblem<'_, T>,
    state: FlowState<T>,
    params: &FlowParams,
    norm_target: f64,
) -> Result<PhaseOutcome<T>> {
    let mut stepper = Stepper {
        problem,
        params,
        phase: Phase::Free,
        warned: false,
    };
    let mut state = state;
    let mut steps = Vec::new();
    let mut rejected = 0;
    let finish = |state, steps, rejected, stop| {
        Ok(PhaseOutcome {
            state,
            steps,
            rejected,
            stop,
        })
    };
    let reached = |s: &FlowState<T>| norm2(&s.delta) >= norm_target * (1.0 - 1e-12);

    if reached(&state) {
        return finish(state, steps, rejected, PhaseStop::NormTargetReached);
    }
    if state.sigma() <= problem.tol_rank() {
        return finish(state, steps, rejected, PhaseStop::RankReached);
    }
    while steps.len() < params.max_inner_steps {
        let g = descent_gradient(&state.triplet.u, &state.triplet.v, problem.weights());
        let rate = free_rhs(&g);
        let rate_norm = norm2(&rate);
        if rate_norm == 0.0 {
            return finish(state, steps, rejected, PhaseStop::Stagnated);
        }
        let cap = step_to_norm(&state.delta, &rate, norm_target);
        let Some((next, h)) = stepper.accept_step(&state, &rate, cap, &mut rejected)? else {
            return finish(state, steps, rejected, PhaseStop::Stagnated);
        };
        steps.push(stepper.record(&next, rate_norm, h));
        state = next;
        if state.sigma() <= problem.tol_rank() {
            return finish(state, steps, rejected, PhaseStop::RankReached);
        }
        if reached(&state) {
            return finish(state, steps, rejected, PhaseStop::NormTargetReached);
        }
    }
    finish(state, steps, rejected, PhaseStop::Truncated)
}
