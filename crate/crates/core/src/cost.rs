//! Cost functional and its adjoint gradient.
//!
//! The cost is `K·(⟨Θ⟩_T − Θ_o)² + L·∫₀ᵀ E(t)² dt`. The costate starts from
//! `λ(T) = −2iK·(⟨Θ⟩_T − Θ_o)·Θ|ψ(T)⟩` and is carried back with the adjoint
//! steps. With `H = H_o + s·E·μ`, the continuous gradient reads
//!
//! ```text
//! ∂C/∂b_i = 2L·∫ E·∂E/∂b_i dt − 2s·∫ Re⟨λ(t)|μ|ψ(t)⟩·∂E/∂b_i dt
//! ```
//!
//! The intensity integral uses the trapezoid rule on the grid nodes, as the
//! cost does. The costate integral is realized as the exact derivative of the
//! discrete scheme: step `k` contributes `2·Im⟨λ_{k+1}|∂U_k/∂E|ψ_k⟩` times
//! `∂E/∂b_i` at its midpoint. For small `dt`, `∂U_k/∂E ≈ −i·dt·s·μ·U_k`, which
//! recovers the `Re` form above. The gradient therefore matches finite
//! differences of the computed cost to rounding, at any step count.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ControlParams;
use crate::propagator::{StepPropagators, TimeGrid};
use crate::quantum::{expectation, QuantumModel, QuantumState, SystemParams, C64};

/// Weights of the deviation (K) and intensity (L) terms and the set point Θ_o.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub k: f64,
    pub l: f64,
    pub theta0: f64,
}

impl CostWeights {
    pub fn new(k: f64, l: f64, theta0: f64) -> Result<Self> {
        if !(k.is_finite() && l.is_finite() && theta0.is_finite()) {
            return Err(Error::NonFinite {
                what: "cost weights".into(),
            });
        }
        if k < 0.0 || l < 0.0 {
            return Err(Error::InvalidParameter("cost weights K and L must be >= 0".into()));
        }
        if k == 0.0 && l == 0.0 {
            return Err(Error::InvalidParameter("cost weights K and L cannot both be zero".into()));
        }
        Ok(Self { k, l, theta0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub deviation: f64,
    pub intensity: f64,
    pub total: f64,
    pub theta_t: f64,
}

/// `K·(θ_T − Θ_o)²`.
pub fn deviation_cost(theta_t: f64, w: &CostWeights) -> f64 {
    let d = theta_t - w.theta0;
    w.k * d * d
}

/// `L·∫E² dt` by the trapezoid rule on `grid`.
pub fn intensity_cost(b: &ControlParams, grid: &TimeGrid, w: &CostWeights) -> f64 {
    let integral: f64 = (0..=grid.steps())
        .map(|k| {
            let e = b.field_value(grid.node(k));
            grid.trapezoid_weight(k) * e * e
        })
        .sum();
    w.l * integral
}

/// λ(T) = −2iK·(θ_T − Θ_o)·Θ|ψ(T)⟩.
pub fn terminal_costate(model: &QuantumModel, psi_t: &QuantumState, theta_t: f64, w: &CostWeights) -> DVector<C64> {
    let factor = C64::new(0.0, -2.0 * w.k * (theta_t - w.theta0));
    (model.observable().matrix() * psi_t.amplitudes()) * factor
}

/// Shared count of forward and backward propagations.
#[derive(Debug, Clone, Default)]
pub struct PropagationCounter {
    inner: Arc<Counts>,
}

#[derive(Debug, Default)]
struct Counts {
    forward: AtomicU64,
    backward: AtomicU64,
}

impl PropagationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&self) -> u64 {
        self.inner.forward.load(Ordering::Relaxed)
    }

    pub fn backward(&self) -> u64 {
        self.inner.backward.load(Ordering::Relaxed)
    }

    fn add_forward(&self) {
        self.inner.forward.fetch_add(1, Ordering::Relaxed);
    }

    fn add_backward(&self) {
        self.inner.backward.fetch_add(1, Ordering::Relaxed);
    }
}

fn breakdown(theta_t: f64, b: &ControlParams, grid: &TimeGrid, w: &CostWeights) -> CostBreakdown {
    let deviation = deviation_cost(theta_t, w);
    let intensity = intensity_cost(b, grid, w);
    CostBreakdown {
        deviation,
        intensity,
        total: deviation + intensity,
        theta_t,
    }
}

/// Cost only: one forward propagation.
pub fn evaluate_cost(
    model: &QuantumModel,
    a: &SystemParams,
    b: &ControlParams,
    grid: &TimeGrid,
    w: &CostWeights,
) -> Result<CostBreakdown> {
    let steps = StepPropagators::build(model, a, b, grid)?;
    let traj = steps.forward(model.psi0(), *grid);
    let theta_t = expectation(model.observable(), traj.terminal())?;
    Ok(breakdown(theta_t, b, grid, w))
}

/// Cost and its gradient with respect to the flat control vector.
pub fn cost_and_gradient(
    model: &QuantumModel,
    a: &SystemParams,
    b: &ControlParams,
    grid: &TimeGrid,
    w: &CostWeights,
) -> Result<(CostBreakdown, Vec<f64>)> {
    let steps = StepPropagators::build(model, a, b, grid)?;
    let traj = steps.forward(model.psi0(), *grid);
    let psi_t = traj.terminal();
    let theta_t = expectation(model.observable(), psi_t)?;
    let cost = breakdown(theta_t, b, grid, w);

    let m = b.len();
    let mut grad = vec![0.0; m];
    let mut de = vec![0.0; m];
    let deviation_active = w.k != 0.0 && theta_t != w.theta0;
    let costate = deviation_active.then(|| steps.backward(terminal_costate(model, psi_t, theta_t, w), *grid));

    for k in 0..=grid.steps() {
        let t = grid.node(k);
        b.field_gradient_into(t, &mut de);
        let coeff = grid.trapezoid_weight(k) * 2.0 * w.l * b.field_value(t);
        for (g, d) in grad.iter_mut().zip(&de) {
            *g += coeff * d;
        }
    }
    if let Some(lam) = &costate {
        for k in 0..grid.steps() {
            let sensitivity = steps.field_sensitivity(k, &lam.costates[k + 1], traj.states[k].amplitudes());
            b.field_gradient_into(grid.midpoint(k), &mut de);
            for (g, d) in grad.iter_mut().zip(&de) {
                *g += sensitivity * d;
            }
        }
    }
    Ok((cost, grad))
}

/// A fixed control problem: model at given system parameters, grid and
/// weights. Counts propagations into a shared counter.
#[derive(Debug, Clone)]
pub struct Objective<'m> {
    pub model: &'m QuantumModel,
    pub params: SystemParams,
    pub grid: TimeGrid,
    pub weights: CostWeights,
    pub counter: PropagationCounter,
}

impl<'m> Objective<'m> {
    pub fn new(model: &'m QuantumModel, params: SystemParams, grid: TimeGrid, weights: CostWeights) -> Self {
        Self {
            model,
            params,
            grid,
            weights,
            counter: PropagationCounter::new(),
        }
    }

    pub fn with_counter(mut self, counter: PropagationCounter) -> Self {
        self.counter = counter;
        self
    }

    pub fn cost(&self, b: &ControlParams) -> Result<CostBreakdown> {
        self.counter.add_forward();
        evaluate_cost(self.model, &self.params, b, &self.grid, &self.weights)
    }

    pub fn cost_and_gradient(&self, b: &ControlParams) -> Result<(CostBreakdown, Vec<f64>)> {
        self.counter.add_forward();
        self.counter.add_backward();
        cost_and_gradient(self.model, &self.params, b, &self.grid, &self.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{Interval, ModelKind, ScaleMap};

    fn two_level(observable: &str, sign: f64) -> QuantumModel {
        let kind = ModelKind::TwoLevel;
        QuantumModel::new(
            kind,
            kind.observable(observable).unwrap(),
            QuantumState::basis(2, 0).unwrap(),
            ScaleMap::multiplicative(Interval::new(0.5, 2.0).unwrap(), vec![Interval::new(0.1, 5.0).unwrap()]),
            sign,
        )
        .unwrap()
    }

    fn omega(w: f64) -> SystemParams {
        SystemParams { a: vec![w], c: vec![w] }
    }

    // Central differences of the total cost: independent of the adjoint path.
    fn fd_gradient(model: &QuantumModel, a: &SystemParams, b: &ControlParams, grid: &TimeGrid, w: &CostWeights, h: f64) -> Vec<f64> {
        let flat = b.to_flat();
        (0..flat.len())
            .map(|i| {
                let mut p = flat.clone();
                let mut m = flat.clone();
                p[i] += h;
                m[i] -= h;
                let cp = evaluate_cost(model, a, &ControlParams::from_flat(&p).unwrap(), grid, w).unwrap();
                let cm = evaluate_cost(model, a, &ControlParams::from_flat(&m).unwrap(), grid, w).unwrap();
                (cp.total - cm.total) / (2.0 * h)
            })
            .collect()
    }

    fn assert_matches(adj: &[f64], fd: &[f64], rel: f64, floor: f64) {
        for (i, (x, y)) in adj.iter().zip(fd).enumerate() {
            assert!(
                (x - y).abs() <= (rel * y.abs()).max(floor),
                "component {i}: adjoint {x} vs fd {y}"
            );
        }
    }

    #[test]
    fn weights_validation() {
        assert!(CostWeights::new(0.0, 0.0, 1.0).is_err());
        assert!(CostWeights::new(-1.0, 1.0, 1.0).is_err());
        assert!(CostWeights::new(1.0, f64::NAN, 1.0).is_err());
        assert!(CostWeights::new(0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn deviation_examples() {
        let w = CostWeights::new(10.0, 0.0, 1.0).unwrap();
        assert_eq!(deviation_cost(1.0, &w), 0.0);
        assert!((deviation_cost(0.8, &w) - 0.4).abs() < 1e-14);
        let d1 = deviation_cost(0.9, &w);
        let d2 = deviation_cost(0.8, &w);
        assert!((d2 - 4.0 * d1).abs() < 1e-13);
    }

    #[test]
    fn intensity_examples() {
        let w = CostWeights::new(0.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0, 4000).unwrap();
        let zero = ControlParams::from_flat(&[0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(intensity_cost(&zero, &grid, &w), 0.0);
        let flat = ControlParams::from_flat(&[0.5, 1.0, 1e6, 0.0]).unwrap();
        assert!((intensity_cost(&flat, &grid, &w) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn intensity_converges_at_second_order() {
        let w = CostWeights::new(0.0, 1.0, 0.0).unwrap();
        let b = ControlParams::from_flat(&[0.7, 0.6, 0.3, 4.0]).unwrap();
        let at = |n| intensity_cost(&b, &TimeGrid::new(2.0, n).unwrap(), &w);
        let (c1, c2, c3) = (at(50), at(100), at(200));
        let ratio = (c1 - c2).abs() / (c2 - c3).abs();
        assert!(ratio > 3.0, "ratio {ratio}");
    }

    #[test]
    fn terminal_costate_examples() {
        let model = two_level("sigma_z", 1.0);
        let psi = QuantumState::basis(2, 0).unwrap();
        let w = CostWeights::new(1.0, 0.0, 0.5).unwrap();
        let lam = terminal_costate(&model, &psi, 1.0, &w);
        assert!((lam[0] - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(lam[1], C64::new(0.0, 0.0));
        assert!(terminal_costate(&model, &psi, 0.5, &w).iter().all(|z| z.norm() == 0.0));
        let w0 = CostWeights::new(0.0, 1.0, 0.5).unwrap();
        assert!(terminal_costate(&model, &psi, 1.0, &w0).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn pure_intensity_gradient() {
        let model = two_level("sigma_z", 1.0);
        let w = CostWeights::new(0.0, 0.7, -1.0).unwrap();
        let grid = TimeGrid::new(2.0, 4000).unwrap();
        let b = ControlParams::from_flat(&[0.3, 1.0, 0.4, 1.0]).unwrap();
        let (_, g) = cost_and_gradient(&model, &omega(1.0), &b, &grid, &w).unwrap();
        let fd = fd_gradient(&model, &omega(1.0), &b, &grid, &w, 1e-5);
        assert_matches(&g, &fd, 1e-6, 1e-10);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let model = two_level("sigma_z", 1.0);
        let w = CostWeights::new(10.0, 0.1, -1.0).unwrap();
        let grid = TimeGrid::new(2.0, 4000).unwrap();
        let b = ControlParams::from_flat(&[0.3, 1.0, 0.4, 1.0]).unwrap();
        let (cost, g) = cost_and_gradient(&model, &omega(1.0), &b, &grid, &w).unwrap();
        assert!((cost.total - cost.deviation - cost.intensity).abs() <= 1e-12);
        let fd = fd_gradient(&model, &omega(1.0), &b, &grid, &w, 1e-5);
        assert_matches(&g, &fd, 1e-4, 1e-8);
    }

    #[test]
    fn adjoint_gradient_with_flipped_dipole_and_other_observable() {
        let model = two_level("sigma_x", -1.0);
        let w = CostWeights::new(3.0, 0.05, 0.4).unwrap();
        let grid = TimeGrid::new(3.0, 3000).unwrap();
        let b = ControlParams::from_flat(&[0.8, 1.2, 0.6, 0.9, -0.4, 2.0, 0.5, 1.4]).unwrap();
        let (_, g) = cost_and_gradient(&model, &omega(1.1), &b, &grid, &w).unwrap();
        let fd = fd_gradient(&model, &omega(1.1), &b, &grid, &w, 1e-5);
        assert_matches(&g, &fd, 1e-4, 1e-8);
    }

    #[test]
    fn adjoint_gradient_on_ladder() {
        let kind = ModelKind::ThreeLevelLadder;
        let model = QuantumModel::new(
            kind,
            kind.observable("level_number").unwrap(),
            QuantumState::basis(3, 0).unwrap(),
            ScaleMap::multiplicative(Interval::new(0.5, 2.0).unwrap(), vec![Interval::new(0.0, 5.0).unwrap(); 2]),
            1.0,
        )
        .unwrap();
        let a = SystemParams { a: vec![1.0, 0.9], c: vec![1.0, 0.9] };
        let w = CostWeights::new(5.0, 0.01, 1.5).unwrap();
        let grid = TimeGrid::new(4.0, 4000).unwrap();
        let b = ControlParams::from_flat(&[0.6, 2.0, 0.8, 0.95]).unwrap();
        let (_, g) = cost_and_gradient(&model, &a, &b, &grid, &w).unwrap();
        let fd = fd_gradient(&model, &a, &b, &grid, &w, 1e-5);
        assert_matches(&g, &fd, 1e-4, 1e-8);
    }

    #[test]
    fn objective_counts_propagations() {
        let model = two_level("sigma_z", 1.0);
        let obj = Objective::new(
            &model,
            omega(1.0),
            TimeGrid::new(1.0, 10).unwrap(),
            CostWeights::new(1.0, 0.1, -1.0).unwrap(),
        );
        let b = ControlParams::from_flat(&[0.3, 0.5, 0.4, 1.0]).unwrap();
        obj.cost(&b).unwrap();
        obj.cost_and_gradient(&b).unwrap();
        assert_eq!(obj.counter.forward(), 2);
        assert_eq!(obj.counter.backward(), 1);
    }
}
