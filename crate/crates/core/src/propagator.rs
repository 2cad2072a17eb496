//! Forward (state) and backward (costate) propagation on a uniform grid.
//!
//! Each step applies the exponential midpoint rule
//! `ψ_{k+1} = exp(−i·dt·H(t_k + dt/2)) ψ_k`, with the exponential taken
//! through an eigendecomposition of the midpoint Hamiltonian. The backward
//! pass applies the exact adjoint of every forward step, so the overlap
//! ⟨λ_k|ψ_k⟩ is invariant along the grid.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ControlParams;
use crate::quantum::{expectation, HermitianOperator, QuantumModel, QuantumState, SystemParams, C64};

/// Uniform grid on [0, T] with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be > 0, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!("steps must be >= 2, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// t_k = k·dt.
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    /// Trapezoid weights: dt/2 at the ends, dt inside.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// States at every grid node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<QuantumState>,
    pub grid: TimeGrid,
}

impl Trajectory {
    pub fn terminal(&self) -> &QuantumState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn max_norm_error(&self) -> f64 {
        self.states.iter().map(|s| (1.0 - s.norm()).abs()).fold(0.0, f64::max)
    }

    /// ⟨Θ⟩ at every node.
    pub fn expectations(&self, observable: &HermitianOperator) -> Result<Vec<f64>> {
        self.states.iter().map(|s| expectation(observable, s)).collect()
    }

    /// Columns: `t`, `re_j`, `im_j` for each amplitude, `expectation`.
    pub fn write_csv<W: Write>(&self, mut out: W, observable: &HermitianOperator) -> io::Result<()> {
        let dim = self.states[0].dim();
        let mut header = vec!["t".to_string()];
        for j in 0..dim {
            header.push(format!("re_{j}"));
            header.push(format!("im_{j}"));
        }
        header.push("expectation".into());
        writeln!(out, "{}", header.join(","))?;
        for (k, s) in self.states.iter().enumerate() {
            write!(out, "{}", self.grid.node(k))?;
            for z in s.amplitudes().iter() {
                write!(out, ",{},{}", z.re, z.im)?;
            }
            let e = expectation(observable, s).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            writeln!(out, ",{e}")?;
        }
        Ok(())
    }
}

/// Costate vectors at every grid node (not normalized).
#[derive(Debug, Clone)]
pub struct CostateTrajectory {
    pub costates: Vec<DVector<C64>>,
    pub grid: TimeGrid,
}

/// Step propagators `U_k = exp(−i·dt·H(t_k + dt/2))` for one control.
pub(crate) struct StepPropagators {
    unitaries: Vec<DMatrix<C64>>,
    spectra: Vec<(DMatrix<C64>, DVector<f64>)>,
    coupling: DMatrix<C64>,
    dt: f64,
}

impl StepPropagators {
    pub(crate) fn build(model: &QuantumModel, a: &SystemParams, b: &ControlParams, grid: &TimeGrid) -> Result<Self> {
        let h0 = model.drift(a)?.matrix().clone();
        let coupling = model.dipole().matrix().scale(model.dipole_sign());
        let dt = grid.dt();
        let mut unitaries = Vec::with_capacity(grid.steps());
        let mut spectra = Vec::with_capacity(grid.steps());
        for k in 0..grid.steps() {
            let e = b.field_value(grid.midpoint(k));
            if !e.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("field at t = {}", grid.midpoint(k)),
                });
            }
            let h = &h0 + coupling.scale(e);
            let eig = h.symmetric_eigen();
            unitaries.push(exponentiate(&eig.eigenvectors, &eig.eigenvalues, dt));
            spectra.push((eig.eigenvectors, eig.eigenvalues));
        }
        Ok(Self {
            unitaries,
            spectra,
            coupling,
            dt,
        })
    }

    pub(crate) fn forward(&self, psi0: &QuantumState, grid: TimeGrid) -> Trajectory {
        let mut states = Vec::with_capacity(self.unitaries.len() + 1);
        let mut psi = psi0.amplitudes().clone();
        states.push(psi0.clone());
        for u in &self.unitaries {
            psi = u * psi;
            states.push(QuantumState::from_unitary_image(psi.clone()));
        }
        Trajectory { states, grid }
    }

    pub(crate) fn backward(&self, lambda_t: DVector<C64>, grid: TimeGrid) -> CostateTrajectory {
        let n = self.unitaries.len();
        let mut costates = vec![DVector::zeros(lambda_t.len()); n + 1];
        costates[n] = lambda_t;
        for k in (0..n).rev() {
            costates[k] = self.unitaries[k].ad_mul(&costates[k + 1]);
        }
        CostateTrajectory { costates, grid }
    }

    /// `2·Im⟨λ_{k+1}| ∂U_k/∂E |ψ_k⟩`, the derivative of the pairing through
    /// step `k` with respect to its midpoint field value.
    ///
    /// The Fréchet derivative of the exponential is taken in the eigenbasis
    /// of the step Hamiltonian, where it is the coupling multiplied entrywise
    /// by divided differences of `exp(−i·dt·x)`.
    pub(crate) fn field_sensitivity(&self, k: usize, lambda_next: &DVector<C64>, psi_k: &DVector<C64>) -> f64 {
        let (v, lam) = &self.spectra[k];
        let mut m = v.adjoint() * &self.coupling * v;
        for j in 0..lam.len() {
            for l in 0..lam.len() {
                m[(j, l)] *= divided_exp(lam[j], lam[l], self.dt);
            }
        }
        let left = v.ad_mul(lambda_next);
        let right = v.ad_mul(psi_k);
        2.0 * left.dotc(&(m * right)).im
    }
}

/// `(e^{−iaτ} − e^{−ibτ}) / (a − b)`, continuous at `a = b`.
fn divided_exp(a: f64, b: f64, tau: f64) -> C64 {
    let half = 0.5 * (a - b) * tau;
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    C64::new(0.0, -tau) * C64::from_polar(1.0, -0.5 * (a + b) * tau) * sinc
}

/// exp(−i·dt·H) for Hermitian `h`.
#[cfg(test)]
pub(crate) fn evolution_operator(h: DMatrix<C64>, dt: f64) -> DMatrix<C64> {
    let eig = h.symmetric_eigen();
    exponentiate(&eig.eigenvectors, &eig.eigenvalues, dt)
}

fn exponentiate(v: &DMatrix<C64>, eigenvalues: &DVector<f64>, dt: f64) -> DMatrix<C64> {
    let mut scaled = v.clone();
    for (j, &lam) in eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lam * dt);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    scaled * v.adjoint()
}

fn check_dims(model: &QuantumModel, b: &ControlParams) -> Result<()> {
    if b.is_empty() {
        return Err(Error::InvalidParameter("empty control".into()));
    }
    if model.psi0().dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: model.psi0().dim(),
        });
    }
    Ok(())
}

/// Propagates `model.psi0` from 0 to T.
pub fn propagate_forward(model: &QuantumModel, a: &SystemParams, b: &ControlParams, grid: &TimeGrid) -> Result<Trajectory> {
    check_dims(model, b)?;
    let steps = StepPropagators::build(model, a, b, grid)?;
    Ok(steps.forward(model.psi0(), *grid))
}

/// Propagates the costate from λ(T) = `lambda_t` back to t = 0 using the
/// adjoints of the forward steps.
pub fn propagate_backward(
    model: &QuantumModel,
    a: &SystemParams,
    b: &ControlParams,
    lambda_t: &DVector<C64>,
    grid: &TimeGrid,
) -> Result<CostateTrajectory> {
    check_dims(model, b)?;
    if lambda_t.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: lambda_t.len(),
        });
    }
    if lambda_t.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite {
            what: "terminal costate".into(),
        });
    }
    let steps = StepPropagators::build(model, a, b, grid)?;
    Ok(steps.backward(lambda_t.clone(), *grid))
}
