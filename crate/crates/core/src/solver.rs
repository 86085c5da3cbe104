//! Outer epsilon continuation.
//!
//! The constrained flow first runs at `epsilon0`. Each outer iteration then
//! proposes `eps + Delta`, lets the free flow grow `||delta||` from 1 to
//! `(eps + Delta) / eps` at the old epsilon, adopts the achieved norm as the
//! new epsilon and restarts the constrained flow from the normalized
//! direction. `p + eps * delta` is continuous across the hand-over, so the
//! stored sigma values never increase.
//!
//! Reaching the rank tolerance while `Delta` is still coarse is treated as an
//! overshoot of the minimal epsilon: the iteration rolls back to the last
//! committed state and halves `Delta`. So is a coarse step that collapses
//! sigma by orders of magnitude. `epsilon0` is also halved when the first
//! constrained phase stops on the decrease test while the tangential
//! gradient is still large: past the minimal epsilon the flow creeps along a
//! valley whose curvature grows like `1 / sigma`, and Euler steps zigzag
//! instead of descending.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    constrained_rhs, descent_gradient, integrate_constrained, integrate_free, FlowError,
    FlowParams, FlowProblem, FlowState, Phase, PhaseOutcome, PhaseStop, StepRecord,
};
use crate::hankel::{build_hankel, frobenius_weights, project_hankel, HankelShape, WeightVector};
use crate::scalar::{all_finite, norm2, Scalar};
use crate::spectral::smallest_singular_triplet;

/// Halvings of `epsilon0` allowed while looking for a start below the
/// minimal perturbation.
const MAX_EPSILON0_BACKOFF: usize = 60;

/// Doublings of `Delta` allowed when the free flow cannot grow `||delta||`.
const MAX_STAGNATION_DOUBLINGS: usize = 6;

/// A coarse outer step whose sigma drops below this fraction of the base
/// sigma has landed on the rank-deficient set from past the minimal epsilon
/// rather than approaching it.
const COLLAPSE_RATIO: f64 = 1e-3;

/// `||rhs|| / ||g||` above which a stalled constrained phase counts as
/// having crossed the minimal epsilon. Converged phases below it end near
/// 1e-2, stalled ones above it near 0.5 or more.
const STALL_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Euclidean,
    Weighted,
    Frobenius,
}

/// Weights multiplying the projected gradient in both flows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowWeights {
    /// Anti-diagonal counts, for which the flow is the exact Euclidean
    /// gradient system of sigma.
    #[default]
    Frobenius,
    /// All ones: the averaged projection without the counts.
    Unit,
    Explicit(WeightVector),
}

impl FlowWeights {
    pub fn resolve(&self, shape: HankelShape) -> WeightVector {
        match self {
            FlowWeights::Frobenius => frobenius_weights(shape),
            FlowWeights::Unit => WeightVector::unit(shape.len()),
            FlowWeights::Explicit(w) => w.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub epsilon0: f64,
    /// Outer increment `Delta`.
    pub delta_increment: f64,
    pub flow: FlowParams,
    pub max_outer_iters: usize,
    pub weights: FlowWeights,
    pub distance_mode: DistanceMode,
    /// Weights for [`DistanceMode::Weighted`]; falls back to the flow weights.
    pub distance_weights: Option<WeightVector>,
    /// Overshoot refinement stops once `Delta <= refine_tol * eps`.
    pub refine_tol: f64,
    /// Apply one unstructured truncation + re-projection step after the
    /// flow. Off by default.
    pub cadzow_polish: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            epsilon0: 1e-2,
            delta_increment: 1e-2,
            flow: FlowParams::default(),
            max_outer_iters: 10_000,
            weights: FlowWeights::Frobenius,
            distance_mode: DistanceMode::Euclidean,
            distance_weights: None,
            refine_tol: 1e-4,
            cadzow_polish: false,
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.epsilon0) || !positive(self.delta_increment) {
            return Err(Error::InvalidInput(
                "epsilon0 and delta_increment must be positive".into(),
            ));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidInput(
                "max_outer_iters must be at least 1".into(),
            ));
        }
        if !positive(self.refine_tol) {
            return Err(Error::InvalidInput("refine_tol must be positive".into()));
        }
        Ok(())
    }
}

/// State after one committed outer iteration. Iteration 0 is the
/// unperturbed data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub delta_increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveEvent {
    /// `epsilon0` overshot or worsened sigma and was halved.
    Epsilon0Backoff {
        epsilon: f64,
    },
    /// Rank tolerance reached with a coarse increment; rolled back.
    Overshoot {
        epsilon: f64,
        delta_increment: f64,
    },
    /// Free flow could not grow the direction; increment doubled.
    FreeStagnation {
        epsilon: f64,
        delta_increment: f64,
    },
    /// A constrained phase hit step underflow; its best state was kept.
    InnerStagnation {
        epsilon: f64,
    },
    /// An inner phase used up `max_inner_steps`.
    InnerTruncated {
        phase: Phase,
        epsilon: f64,
    },
    OuterLimit {
        iterations: usize,
    },
    CadzowPolish {
        sigma_before: f64,
        sigma_after: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Solution<T: Scalar> {
    pub rows: usize,
    pub p_tilde: Vec<T>,
    pub epsilon_star: f64,
    pub sigma_initial: f64,
    pub sigma_final: f64,
    /// Absolute rank tolerance the solve targeted.
    pub tol_rank: f64,
    pub distance: f64,
    pub distance_mode: DistanceMode,
    /// Left singular vector at sigma_final (length `rows`).
    pub kernel_left: Vec<T>,
    /// Right singular vector at sigma_final.
    pub kernel_right: Vec<T>,
    pub trace: Vec<OuterRecord>,
    /// Every accepted inner step of the committed phases, in order.
    pub steps: Vec<StepRecord>,
    pub events: Vec<SolveEvent>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> Solution<T> {
    /// `(iteration, sigma)` series over the unperturbed start and every
    /// committed inner step.
    pub fn sigma_series(&self) -> Vec<(usize, f64)> {
        std::iter::once(self.sigma_initial)
            .chain(self.steps.iter().map(|s| s.sigma))
            .enumerate()
            .collect()
    }
}

/// Distance between `p` and `q`. `Weighted` uses `w`; `Frobenius` uses the
/// anti-diagonal counts of `shape` so that it equals `||H(p) - H(q)||_F`.
pub fn distance<T: Scalar>(
    p: &[T],
    q: &[T],
    w: &WeightVector,
    mode: DistanceMode,
    shape: HankelShape,
) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(
            "distance between vectors of different length".into(),
        ));
    }
    let diff = p.iter().zip(q).map(|(a, b)| (*a - *b).modulus_squared());
    let weighted = |w: &[f64]| -> f64 { diff.zip(w).map(|(d, wi)| d * wi).sum::<f64>().sqrt() };
    match mode {
        DistanceMode::Euclidean => Ok(p
            .iter()
            .zip(q)
            .map(|(a, b)| (*a - *b).modulus_squared())
            .sum::<f64>()
            .sqrt()),
        DistanceMode::Weighted => {
            if w.len() != p.len() {
                return Err(Error::Shape("weights do not match data length".into()));
            }
            Ok(weighted(w.as_slice()))
        }
        DistanceMode::Frobenius => {
            if shape.len() != p.len() {
                return Err(Error::Shape("shape does not match data length".into()));
            }
            Ok(weighted(frobenius_weights(shape).as_slice()))
        }
    }
}

/// Fill missing entries from their nearest present neighbours: linear
/// interpolation between bracketing values, constant extension at the ends.
///
/// The returned weights are 1 on present entries and 0 on filled ones, for
/// use as `distance_weights` so invented values do not count as misfit.
pub fn impose_missing<T: Scalar>(raw: &[Option<T>]) -> Result<(Vec<T>, WeightVector)> {
    if raw.iter().all(Option::is_none) {
        return Err(Error::InvalidInput("every entry is missing".into()));
    }
    let mut filled: Vec<T> = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if let Some(x) = raw[i] {
            filled.push(x);
            i += 1;
            continue;
        }
        let start = i;
        while i < raw.len() && raw[i].is_none() {
            i += 1;
        }
        let left = start.checked_sub(1).map(|k| filled[k]);
        let right = raw.get(i).copied().flatten();
        for k in start..i {
            let value = match (left, right) {
                (Some(l), Some(r)) => {
                    let t = (k + 1 - start) as f64 / (i + 1 - start) as f64;
                    l + (r - l).scale(t)
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => unreachable!("at least one entry is present"),
            };
            filled.push(value);
        }
    }
    let weights = raw
        .iter()
        .map(|x| if x.is_some() { 1.0 } else { 0.0 })
        .collect();
    Ok((filled, WeightVector::new(weights)?))
}

/// One Cadzow step: truncate `H(p)` to rank `rows - 1` and average back onto
/// the Hankel subspace.
pub fn cadzow_step<T: Scalar>(p: &[T], shape: HankelShape) -> Result<Vec<T>> {
    let h = build_hankel(p, shape)?;
    let (rows, cols) = h.shape();
    let numerical = |message: &str| Error::Numerical {
        message: message.into(),
        rows,
        cols,
        frobenius_norm: h.norm(),
    };
    let mut svd = nalgebra::SVD::try_new(h.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| numerical("SVD iteration did not converge"))?;
    let idx = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| numerical("empty spectrum"))?;
    svd.singular_values[idx] = 0.0;
    let low: DMatrix<T> = svd
        .recompose()
        .map_err(|_| numerical("recomposition failed"))?;
    Ok(project_hankel(&low))
}

pub fn solve<T: Scalar>(p: &[T], rows: usize, params: &SolveParams) -> Result<Solution<T>> {
    Driver::new(p, rows, params)?.run(None, &mut |_| {})
}

/// [`solve`] started from a caller-supplied direction instead of the
/// steepest-descent direction at `H(p)`. Entries with zero flow weight are
/// cleared before normalizing.
pub fn solve_from<T: Scalar>(
    p: &[T],
    rows: usize,
    params: &SolveParams,
    delta0: &[T],
) -> Result<Solution<T>> {
    Driver::new(p, rows, params)?.run(Some(delta0), &mut |_| {})
}

/// [`solve`] reporting each committed outer iteration to `progress` on the
/// calling thread.
pub fn solve_with_progress<T: Scalar>(
    p: &[T],
    rows: usize,
    params: &SolveParams,
    delta0: Option<&[T]>,
    progress: &mut dyn FnMut(&OuterRecord),
) -> Result<Solution<T>> {
    Driver::new(p, rows, params)?.run(delta0, progress)
}

/// Steepest-descent start direction `-g / ||g||` at `H(p)`.
pub fn default_direction<T: Scalar>(p: &[T], rows: usize, params: &SolveParams) -> Result<Vec<T>> {
    let driver = Driver::new(p, rows, params)?;
    let problem = driver.problem()?;
    let zero = vec![T::zero(); p.len()];
    let t0 = problem.triplet_at(&zero, 0.0)?;
    driver.steepest_direction(&t0.u, &t0.v)
}

struct Driver<'a, T: Scalar> {
    p: &'a [T],
    shape: HankelShape,
    params: &'a SolveParams,
    weights: WeightVector,
    tol: f64,
}

struct Committed<T: Scalar> {
    state: FlowState<T>,
    steps: Vec<StepRecord>,
    events: Vec<SolveEvent>,
    trace: Vec<OuterRecord>,
}

impl<'a, T: Scalar> Driver<'a, T> {
    fn new(p: &'a [T], rows: usize, params: &'a SolveParams) -> Result<Self> {
        params.validate()?;
        if p.len() < 2 {
            return Err(Error::InvalidInput("need at least two data entries".into()));
        }
        if !all_finite(p) {
            return Err(Error::InvalidInput(
                "data contains non-finite entries".into(),
            ));
        }
        let shape = HankelShape::new(rows, p.len())?;
        let weights = params.weights.resolve(shape);
        if weights.len() != p.len() {
            return Err(Error::Shape(format!(
                "{} flow weights for {} data entries",
                weights.len(),
                p.len()
            )));
        }
        if let Some(dw) = &params.distance_weights {
            if dw.len() != p.len() {
                return Err(Error::Shape(
                    "distance weights do not match data length".into(),
                ));
            }
        }
        let tol = params.flow.tol_rank * crate::hankel::frobenius_norm(p, shape);
        Ok(Self {
            p,
            shape,
            params,
            weights,
            tol,
        })
    }

    fn problem(&self) -> Result<FlowProblem<'_, T>> {
        FlowProblem::new(self.p, self.shape, &self.weights, self.tol)
    }

    fn steepest_direction(
        &self,
        u: &nalgebra::DVector<T>,
        v: &nalgebra::DVector<T>,
    ) -> Result<Vec<T>> {
        let g = descent_gradient(u, v, &self.weights);
        let n = norm2(&g);
        if n == 0.0 {
            return Err(Error::InvalidInput(
                "projected gradient vanishes on every free entry".into(),
            ));
        }
        Ok(g.iter().map(|x| -x.unscale(n)).collect())
    }

    fn user_direction(&self, d: &[T]) -> Result<Vec<T>> {
        if d.len() != self.p.len() || !all_finite(d) {
            return Err(Error::InvalidInput(
                "initial direction must be finite and match the data length".into(),
            ));
        }
        let masked: Vec<T> = d
            .iter()
            .zip(self.weights.as_slice())
            .map(|(x, w)| if *w > 0.0 { *x } else { T::zero() })
            .collect();
        let n = norm2(&masked);
        if n == 0.0 {
            return Err(Error::InvalidInput(
                "initial direction is zero on free entries".into(),
            ));
        }
        Ok(masked.into_iter().map(|x| x.unscale(n)).collect())
    }

    fn constrained(
        &self,
        problem: &FlowProblem<'_, T>,
        state: FlowState<T>,
        events: &mut Vec<SolveEvent>,
    ) -> Result<PhaseOutcome<T>> {
        let epsilon = state.epsilon;
        match integrate_constrained(problem, state, &self.params.flow) {
            Ok(out) => {
                if out.stop == PhaseStop::Truncated {
                    events.push(SolveEvent::InnerTruncated {
                        phase: Phase::Constrained,
                        epsilon,
                    });
                }
                Ok(out)
            }
            Err(FlowError::Stagnated(best)) => {
                log::debug!("constrained flow stagnated at epsilon {epsilon:e}");
                events.push(SolveEvent::InnerStagnation { epsilon });
                Ok(*best)
            }
            Err(FlowError::Numerical(e)) => Err(e),
        }
    }

    /// Whether the first constrained phase shows `epsilon0` is past the
    /// minimal epsilon. A false positive only halves `epsilon0` once more.
    fn crossed(&self, out: &PhaseOutcome<T>) -> bool {
        if out.state.sigma() <= self.tol {
            return true;
        }
        if !matches!(out.stop, PhaseStop::Stationary | PhaseStop::Stagnated) {
            return false;
        }
        let t = &out.state.triplet;
        let g = descent_gradient(&t.u, &t.v, &self.weights);
        let g_norm = norm2(&g);
        g_norm > 0.0 && norm2(&constrained_rhs(&out.state.delta, &g)) > STALL_RATIO * g_norm
    }

    /// Whether an outer step from `base_sigma` crossed the minimal epsilon.
    /// The stall test is left out here: below the minimal epsilon it also
    /// fires in stiff valleys, and each false positive halves `Delta` for
    /// the rest of the solve.
    fn overshot(&self, out: &PhaseOutcome<T>, base_sigma: f64) -> bool {
        out.state.sigma() <= self.tol.max(COLLAPSE_RATIO * base_sigma)
    }

    fn run(
        &self,
        delta0: Option<&[T]>,
        progress: &mut dyn FnMut(&OuterRecord),
    ) -> Result<Solution<T>> {
        let problem = self.problem()?;
        let flow = &self.params.flow;
        let n = self.p.len();
        let zero = vec![T::zero(); n];
        let t0 = problem.triplet_at(&zero, 0.0)?;
        let sigma0 = t0.sigma;
        let mut trace = vec![OuterRecord {
            iteration: 0,
            epsilon: 0.0,
            sigma: sigma0,
            delta_increment: self.params.delta_increment,
        }];
        progress(&trace[0]);

        if sigma0 <= self.tol {
            let state = FlowState {
                delta: zero,
                epsilon: 0.0,
                triplet: t0,
                step: flow.h0,
            };
            return self.finish(
                Committed {
                    state,
                    steps: Vec::new(),
                    events: Vec::new(),
                    trace,
                },
                0,
                sigma0,
            );
        }

        let direction = match delta0 {
            Some(d) => self.user_direction(d)?,
            None => self.steepest_direction(&t0.u, &t0.v)?,
        };

        let mut events = Vec::new();
        let mut epsilon = self.params.epsilon0;
        let mut backoffs = 0;
        let first = loop {
            let start = FlowState::new(&problem, direction.clone(), epsilon, flow.h0)?;
            if start.sigma() > sigma0 && backoffs < MAX_EPSILON0_BACKOFF {
                events.push(SolveEvent::Epsilon0Backoff { epsilon });
                epsilon *= 0.5;
                backoffs += 1;
                continue;
            }
            let out = self.constrained(&problem, start, &mut events)?;
            if self.crossed(&out) && backoffs < MAX_EPSILON0_BACKOFF {
                events.push(SolveEvent::Epsilon0Backoff { epsilon });
                epsilon *= 0.5;
                backoffs += 1;
                continue;
            }
            break out;
        };

        let mut delta_inc = self.params.delta_increment.min(epsilon);
        let mut committed = Committed {
            state: first.state,
            steps: first.steps,
            events,
            trace: Vec::new(),
        };
        let record = OuterRecord {
            iteration: 1,
            epsilon,
            sigma: committed.state.sigma(),
            delta_increment: delta_inc,
        };
        progress(&record);
        trace.push(record);
        committed.trace = trace;

        let mut outer = 0;
        let mut doublings = 0;
        while committed.state.sigma() > self.tol {
            if outer >= self.params.max_outer_iters {
                committed
                    .events
                    .push(SolveEvent::OuterLimit { iterations: outer });
                break;
            }
            outer += 1;
            let base = &committed.state;
            let eps = base.epsilon;
            let base_sigma = base.sigma();
            let target = (eps + delta_inc) / eps;
            let free = integrate_free(&problem, base.clone(), flow, target)?;
            let grown = norm2(&free.state.delta);

            if matches!(free.stop, PhaseStop::Stagnated | PhaseStop::Truncated) {
                committed.events.push(SolveEvent::InnerTruncated {
                    phase: Phase::Free,
                    epsilon: eps,
                });
            }
            let arrived = matches!(
                free.stop,
                PhaseStop::NormTargetReached | PhaseStop::RankReached
            );
            if !arrived {
                committed.events.push(SolveEvent::FreeStagnation {
                    epsilon: eps,
                    delta_increment: delta_inc,
                });
                let no_growth = grown <= 1.0 + 1e-12;
                if no_growth {
                    doublings += 1;
                    if doublings > MAX_STAGNATION_DOUBLINGS {
                        break;
                    }
                }
                // Direct jump to the proposed level along the free endpoint;
                // kept only if it does not raise sigma.
                let unit: Vec<T> = free.state.delta.iter().map(|x| x.unscale(grown)).collect();
                let jump = FlowState::new(&problem, unit, eps + delta_inc, free.state.step)?;
                if jump.sigma() > free.state.sigma() {
                    if no_growth {
                        delta_inc *= 2.0;
                        continue;
                    }
                    // Keep what the free flow achieved and propose less next time.
                    let mut phase_events = Vec::new();
                    let out = self.relax_free_endpoint(&problem, &free, &mut phase_events)?;
                    let coarse = delta_inc > self.params.refine_tol * eps;
                    if self.overshot(&out, base_sigma) && coarse {
                        committed.events.push(SolveEvent::Overshoot {
                            epsilon: out.state.epsilon,
                            delta_increment: delta_inc,
                        });
                        delta_inc *= 0.5;
                        continue;
                    }
                    delta_inc *= 0.5;
                    committed.events.extend(phase_events);
                    self.commit(&mut committed, out, free.steps, outer, delta_inc, progress);
                    continue;
                }
                let mut phase_events = Vec::new();
                let out = self.constrained(&problem, jump, &mut phase_events)?;
                let coarse = delta_inc > self.params.refine_tol * eps;
                if self.overshot(&out, base_sigma) && coarse {
                    committed.events.push(SolveEvent::Overshoot {
                        epsilon: eps + delta_inc,
                        delta_increment: delta_inc,
                    });
                    delta_inc *= 0.5;
                    continue;
                }
                committed.events.extend(phase_events);
                self.commit(&mut committed, out, free.steps, outer, delta_inc, progress);
                if no_growth {
                    delta_inc *= 2.0;
                }
                continue;
            }

            let mut phase_events = Vec::new();
            let out = self.relax_free_endpoint(&problem, &free, &mut phase_events)?;
            let new_eps = out.state.epsilon;

            let coarse = delta_inc > self.params.refine_tol * eps;
            if self.overshot(&out, base_sigma) && coarse {
                committed.events.push(SolveEvent::Overshoot {
                    epsilon: new_eps,
                    delta_increment: delta_inc,
                });
                delta_inc *= 0.5;
                continue;
            }
            committed.events.extend(phase_events);
            self.commit(&mut committed, out, free.steps, outer, delta_inc, progress);
        }

        self.finish(committed, outer, sigma0)
    }

    /// Rescale the free endpoint to `epsilon * ||delta^f||` with a unit
    /// direction and run the constrained phase from there.
    fn relax_free_endpoint(
        &self,
        problem: &FlowProblem<'_, T>,
        free: &PhaseOutcome<T>,
        events: &mut Vec<SolveEvent>,
    ) -> Result<PhaseOutcome<T>> {
        let grown = norm2(&free.state.delta);
        let unit: Vec<T> = free.state.delta.iter().map(|x| x.unscale(grown)).collect();
        let mut handover =
            FlowState::new(problem, unit, free.state.epsilon * grown, free.state.step)?;
        handover.triplet.align_with(&free.state.triplet);
        if handover.sigma() <= self.tol {
            return Ok(PhaseOutcome {
                state: handover,
                steps: Vec::new(),
                rejected: 0,
                stop: PhaseStop::RankReached,
            });
        }
        self.constrained(problem, handover, events)
    }

    fn commit(
        &self,
        committed: &mut Committed<T>,
        out: PhaseOutcome<T>,
        free_steps: Vec<StepRecord>,
        outer: usize,
        delta_inc: f64,
        progress: &mut dyn FnMut(&OuterRecord),
    ) {
        committed.steps.extend(free_steps);
        committed.steps.extend(out.steps);
        committed.state = out.state;
        let record = OuterRecord {
            iteration: outer + 1,
            epsilon: committed.state.epsilon,
            sigma: committed.state.sigma(),
            delta_increment: delta_inc,
        };
        progress(&record);
        committed.trace.push(record);
    }

    fn finish(&self, committed: Committed<T>, outer: usize, sigma0: f64) -> Result<Solution<T>> {
        let Committed {
            state,
            steps,
            mut events,
            trace,
        } = committed;
        let mut p_tilde = FlowProblem::new(self.p, self.shape, &self.weights, self.tol)?
            .perturbed(&state.delta, state.epsilon);
        let mut epsilon_star = state.epsilon;
        let mut triplet = smallest_singular_triplet(&build_hankel(&p_tilde, self.shape)?)?;

        if self.params.cadzow_polish && triplet.sigma > 0.0 {
            let polished = cadzow_step(&p_tilde, self.shape)?;
            let t = smallest_singular_triplet(&build_hankel(&polished, self.shape)?)?;
            if t.sigma < triplet.sigma {
                events.push(SolveEvent::CadzowPolish {
                    sigma_before: triplet.sigma,
                    sigma_after: t.sigma,
                });
                epsilon_star = self
                    .p
                    .iter()
                    .zip(&polished)
                    .map(|(a, b)| (*a - *b).modulus_squared())
                    .sum::<f64>()
                    .sqrt();
                p_tilde = polished;
                triplet = t;
            }
        }

        let dist_weights = self
            .params
            .distance_weights
            .as_ref()
            .unwrap_or(&self.weights);
        let distance = distance(
            self.p,
            &p_tilde,
            dist_weights,
            self.params.distance_mode,
            self.shape,
        )?;
        let converged = triplet.sigma <= self.tol;
        Ok(Solution {
            rows: self.shape.rows(),
            p_tilde,
            epsilon_star,
            sigma_initial: sigma0,
            sigma_final: triplet.sigma,
            tol_rank: self.tol,
            distance,
            distance_mode: self.params.distance_mode,
            kernel_left: triplet.u.iter().copied().collect(),
            kernel_right: triplet.v.iter().copied().collect(),
            trace,
            steps,
            events,
            outer_iterations: outer,
            converged,
        })
    }
}
