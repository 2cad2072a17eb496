//! Projected steepest descent with Armijo backtracking, and seeded random
//! multistart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostBreakdown, Objective};
use crate::error::{Error, Result};
use crate::field::{param_name, ControlParams, PARAMS_PER_PULSE};
use crate::quantum::Interval;

/// Maximum number of step reductions per line search.
pub const MAX_BACKTRACKS: usize = 40;

/// Consecutive small relative cost changes that count as stagnation.
pub const STAGNATION_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSettings {
    pub max_iters: usize,
    /// Threshold on the ∞-norm of the projected gradient.
    pub grad_tol: f64,
    pub cost_rel_tol: f64,
    /// Backtracking factor β ∈ (0, 1).
    pub beta: f64,
    /// Armijo constant c₁ ∈ (0, 1).
    pub c1: f64,
    /// Largest ∞-norm displacement of a trial step. Each line search starts
    /// from the last accepted step length divided by β, capped by this.
    pub max_step: f64,
    pub restarts: usize,
    pub rng_seed: u64,
    /// Box bounds per flat control component. `min == max` freezes a component.
    pub b_bounds: Vec<Interval>,
}

impl OptSettings {
    /// Settings with default tolerances and the given bounds.
    pub fn with_bounds(b_bounds: Vec<Interval>) -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-6,
            cost_rel_tol: 1e-10,
            beta: 0.5,
            c1: 1e-4,
            max_step: 0.5,
            restarts: 0,
            rng_seed: 0,
            b_bounds,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::InvalidParameter(format!("c1 must be in (0, 1), got {}", self.c1)));
        }
        if !(self.grad_tol >= 0.0 && self.cost_rel_tol >= 0.0) {
            return Err(Error::InvalidParameter("tolerances must be >= 0".into()));
        }
        if !(self.max_step.is_finite() && self.max_step > 0.0) {
            return Err(Error::InvalidParameter("max_step must be > 0".into()));
        }
        if self.b_bounds.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.b_bounds.len(),
            });
        }
        for (i, iv) in self.b_bounds.iter().enumerate() {
            if !(iv.min.is_finite() && iv.max.is_finite()) || iv.min > iv.max {
                return Err(Error::InvalidParameter(format!("bounds of {} are invalid", param_name(i))));
            }
            if i % PARAMS_PER_PULSE == 2 && iv.min <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "lower bound of {} must be > 0",
                    param_name(i)
                )));
            }
        }
        Ok(())
    }

    fn clip(&self, x: &mut [f64]) {
        for (v, iv) in x.iter_mut().zip(&self.b_bounds) {
            *v = v.clamp(iv.min, iv.max);
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.b_bounds).all(|(v, iv)| iv.contains(*v))
    }

    /// Gradient with components that push against an active bound zeroed.
    fn projected(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .zip(&self.b_bounds)
            .map(|((&v, &gi), iv)| {
                if (v <= iv.min && gi > 0.0) || (v >= iv.max && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    CostStagnation,
    MaxIterations,
    /// Diagnostic: no Armijo step found within [`MAX_BACKTRACKS`] reductions.
    LineSearchFailed,
}

impl StopReason {
    pub fn is_converged(self) -> bool {
        matches!(self, Self::GradientTolerance | Self::CostStagnation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub total: f64,
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub b_opt: ControlParams,
    pub cost: CostBreakdown,
    /// ∞-norm of the projected gradient at `b_opt`.
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// One entry per accepted iterate, starting with the initial point.
    pub trace: Vec<TraceEntry>,
    pub restart_index: usize,
    #[serde(default)]
    pub failed_starts: Vec<usize>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Descends from `b_init` until the projected gradient or the cost
/// stagnates, or the iteration budget runs out.
pub fn optimize(objective: &Objective, b_init: &ControlParams, settings: &OptSettings) -> Result<OptResult> {
    let m = b_init.len();
    settings.validate(m)?;
    let mut x = b_init.to_flat();
    if !settings.contains(&x) {
        return Err(Error::InvalidParameter("initial control lies outside b_bounds".into()));
    }

    let (mut cost, grad) = objective.cost_and_gradient(b_init)?;
    let mut pg = settings.projected(&x, &grad);
    let mut pg_norm = inf_norm(&pg);
    let mut trace = vec![TraceEntry {
        iter: 0,
        total: cost.total,
        grad_inf_norm: pg_norm,
    }];
    let mut step = f64::INFINITY;
    let mut stagnant = 0;
    let mut iterations = 0;

    let stop_reason = loop {
        if pg_norm <= settings.grad_tol {
            break StopReason::GradientTolerance;
        }
        if stagnant >= STAGNATION_WINDOW {
            break StopReason::CostStagnation;
        }
        if iterations >= settings.max_iters {
            break StopReason::MaxIterations;
        }

        let mut accepted = None;
        let mut t = step.min(settings.max_step / pg_norm);
        for _ in 0..=MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&pg).map(|(v, g)| v - t * g).collect();
            settings.clip(&mut trial);
            let decrease: f64 = pg.iter().zip(trial.iter().zip(&x)).map(|(g, (n, o))| g * (o - n)).sum();
            if decrease > 0.0 {
                let b = ControlParams::from_flat(&trial)?;
                let (c, g) = objective.cost_and_gradient(&b)?;
                if c.total <= cost.total - settings.c1 * decrease {
                    accepted = Some((trial, c, g));
                    break;
                }
            }
            t *= settings.beta;
        }

        let Some((trial, c, g)) = accepted else {
            break StopReason::LineSearchFailed;
        };
        iterations += 1;
        let rel = (cost.total - c.total).abs() / cost.total.abs().max(f64::MIN_POSITIVE);
        stagnant = if rel <= settings.cost_rel_tol { stagnant + 1 } else { 0 };
        x = trial;
        cost = c;
        pg = settings.projected(&x, &g);
        pg_norm = inf_norm(&pg);
        trace.push(TraceEntry {
            iter: iterations,
            total: cost.total,
            grad_inf_norm: pg_norm,
        });
        step = t / settings.beta;
    };

    Ok(OptResult {
        b_opt: ControlParams::from_flat(&x)?,
        cost,
        grad_inf_norm: pg_norm,
        iterations,
        converged: stop_reason.is_converged(),
        stop_reason,
        trace,
        restart_index: 0,
        failed_starts: Vec::new(),
    })
}

/// Initial points: `b_init` first, then `settings.restarts` uniform draws
/// inside the bounds from a generator seeded with `settings.rng_seed`.
pub fn start_points(b_init: &ControlParams, settings: &OptSettings) -> Result<Vec<ControlParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.rng_seed);
    let mut starts = vec![b_init.clone()];
    for _ in 0..settings.restarts {
        let flat: Vec<f64> = settings
            .b_bounds
            .iter()
            .map(|iv| if iv.min == iv.max { iv.min } else { rng.gen_range(iv.min..=iv.max) })
            .collect();
        starts.push(ControlParams::from_flat(&flat)?);
    }
    Ok(starts)
}

/// Runs [`optimize`] from every start point and keeps the best result,
/// ordered by (total cost, gradient norm, restart index).
pub fn multistart(objective: &Objective, b_init: &ControlParams, settings: &OptSettings) -> Result<OptResult> {
    settings.validate(b_init.len())?;
    let starts = start_points(b_init, settings)?;
    let outcomes: Vec<Result<OptResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            optimize(objective, b, settings).map(|mut r| {
                r.restart_index = i;
                r
            })
        })
        .collect();

    let mut failed = Vec::new();
    let mut first_error = None;
    let mut best: Option<OptResult> = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => r
                        .cost
                        .total
                        .total_cmp(&b.cost.total)
                        .then(r.grad_inf_norm.total_cmp(&b.grad_inf_norm))
                        .then(r.restart_index.cmp(&b.restart_index))
                        .is_lt(),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                failed.push(i);
                first_error.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut r) => {
            r.failed_starts = failed;
            Ok(r)
        }
        None => Err(Error::AllStartsFailed {
            starts: starts.len(),
            first: first_error.map(|e| e.to_string()).unwrap_or_default(),
        }),
    }
}
