//! Per-branch tensor-product interpolants over a solution sheet and
//! prediction of controls at unseen (s, c).

use serde::{Deserialize, Serialize};

use super::basis::{AxisBasis, Method};
use super::sheet::SolutionSheet;
use crate::error::{Error, Result};
use crate::field::ControlParams;
use crate::quantum::Interval;

/// Axis count up to which cubic splines are used; linear above.
pub const MAX_SPLINE_AXES: usize = 2;

/// Interpolant of one branch over its own sub-grid.
#[derive(Debug, Clone)]
pub struct BranchInterpolant {
    pub branch: usize,
    axes: Vec<AxisBasis>,
    /// b vectors on the sub-grid, row-major.
    values: Vec<Vec<f64>>,
}

/// Value and per-axis partial derivatives of b at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub b: Vec<f64>,
    /// `partials[k]` = ∂b/∂x_k, axes ordered s first.
    pub partials: Vec<Vec<f64>>,
    pub extrapolated: bool,
}

impl BranchInterpolant {
    fn new(branch: usize, axes: Vec<AxisBasis>, values: Vec<Vec<f64>>) -> Self {
        Self { branch, axes, values }
    }

    pub fn axis_nodes(&self, k: usize) -> &[f64] {
        self.axes[k].nodes()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.axes.len() && self.axes.iter().zip(point).all(|(a, &u)| a.contains(u))
    }

    fn hull_check(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.axes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.axes.len(),
                got: point.len(),
            });
        }
        for (k, (axis, &u)) in self.axes.iter().zip(point).enumerate() {
            if !u.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("query coordinate {k}"),
                });
            }
            if !axis.contains(u) {
                let n = axis.nodes();
                return Err(Error::OutOfHull {
                    axis: k,
                    value: u,
                    min: n[0],
                    max: n[n.len() - 1],
                });
            }
        }
        Ok(())
    }

    /// Evaluates b and its partials at `point` (s coordinates then c).
    pub fn evaluate(&self, point: &[f64], extrapolate: bool) -> Result<Evaluation> {
        let extrapolated = match self.hull_check(point) {
            Ok(()) => false,
            Err(Error::OutOfHull { .. }) if extrapolate => true,
            Err(e) => return Err(e),
        };
        let weights: Vec<(Vec<f64>, Vec<f64>)> = self.axes.iter().zip(point).map(|(a, &u)| a.weights(u)).collect();
        let ndim = self.axes.len();
        let m = self.values[0].len();
        let shape: Vec<usize> = self.axes.iter().map(AxisBasis::len).collect();
        let mut b = vec![0.0; m];
        let mut partials = vec![vec![0.0; m]; ndim];
        let mut idx = vec![0; ndim];
        for value in &self.values {
            let w: f64 = (0..ndim).map(|k| weights[k].0[idx[k]]).product();
            if w != 0.0 {
                for (o, v) in b.iter_mut().zip(value) {
                    *o += w * v;
                }
            }
            for (d, partial) in partials.iter_mut().enumerate() {
                let wd: f64 = (0..ndim)
                    .map(|k| if k == d { weights[k].1[idx[k]] } else { weights[k].0[idx[k]] })
                    .product();
                if wd != 0.0 {
                    for (o, v) in partial.iter_mut().zip(value) {
                        *o += wd * v;
                    }
                }
            }
            // advance the row-major multi-index
            for k in (0..ndim).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Evaluation { b, partials, extrapolated })
    }
}

/// Interpolants for every branch of a sheet.
#[derive(Debug, Clone)]
pub struct SheetInterpolant {
    pub method: Method,
    pub s_dims: usize,
    pub c_dims: usize,
    pub b_bounds: Vec<Interval>,
    pub metric_scale: Option<Vec<f64>>,
    branches: Vec<BranchInterpolant>,
}

/// Predicted control at a query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub b: ControlParams,
    pub branch: usize,
    pub extrapolated: bool,
}

impl SheetInterpolant {
    pub fn branch(&self, id: usize) -> Result<&BranchInterpolant> {
        self.branches.get(id).ok_or(Error::UnknownBranch(id))
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Lowest-numbered branch whose sampled region contains `point`.
    pub fn branch_containing(&self, point: &[f64]) -> Option<usize> {
        self.branches.iter().find(|b| b.contains(point)).map(|b| b.branch)
    }

    /// b at (s, c) on `branch`, clipped to the sheet bounds.
    pub fn evaluate_clipped(&self, s: &[f64], c: &[f64], branch: usize, extrapolate: bool) -> Result<(Vec<f64>, bool)> {
        let point = join(s, c);
        let eval = self.branch(branch)?.evaluate(&point, extrapolate)?;
        let mut b = eval.b;
        if self.b_bounds.len() == b.len() {
            for (v, iv) in b.iter_mut().zip(&self.b_bounds) {
                *v = v.clamp(iv.min, iv.max);
            }
        }
        Ok((b, eval.extrapolated))
    }
}

pub(crate) fn join(s: &[f64], c: &[f64]) -> Vec<f64> {
    s.iter().chain(c).copied().collect()
}

/// Fits one interpolant per branch. Each branch must occupy a complete
/// tensor sub-grid with at least two nodes on every axis that the grid
/// samples at more than one point.
pub fn fit(sheet: &SolutionSheet) -> Result<SheetInterpolant> {
    let ndim = sheet.grid.ndim();
    let method = if ndim <= MAX_SPLINE_AXES {
        Method::CubicSpline
    } else {
        Method::Linear
    };
    let shape = sheet.grid.shape();
    let mut branches = Vec::new();
    for id in 0..sheet.branch_count() {
        let members: Vec<_> = sheet.entries.iter().filter(|e| e.branch == Some(id)).collect();
        let mut used: Vec<Vec<usize>> = vec![Vec::new(); ndim];
        for e in &members {
            for (k, &i) in e.index.iter().enumerate() {
                if !used[k].contains(&i) {
                    used[k].push(i);
                }
            }
        }
        for (k, u) in used.iter_mut().enumerate() {
            u.sort_unstable();
            // A grid axis with one node is pinned; any other axis needs two.
            if u.len() < 2 && shape[k] > 1 {
                return Err(Error::InsufficientNodes {
                    branch: id,
                    axis: k,
                    nodes: u.len(),
                });
            }
        }
        let required: usize = used.iter().map(Vec::len).product();
        if members.len() != required {
            return Err(Error::IncompleteBranch {
                branch: id,
                present: members.len(),
                required,
            });
        }
        let axes_nodes: Vec<&Vec<f64>> = sheet.grid.axes().collect();
        let axes: Vec<AxisBasis> = used
            .iter()
            .enumerate()
            .map(|(k, u)| AxisBasis::new(u.iter().map(|&i| axes_nodes[k][i]).collect(), method))
            .collect();

        // Members come in row-major order of the full grid, which is also
        // row-major order of the sub-grid.
        let mut values = Vec::with_capacity(required);
        for e in &members {
            values.push(e.b.clone().expect("branch members carry b"));
        }
        branches.push(BranchInterpolant::new(id, axes, values));
    }
    Ok(SheetInterpolant {
        method,
        s_dims: sheet.grid.s_axes.len(),
        c_dims: sheet.grid.c_axes.len(),
        b_bounds: sheet.b_bounds.clone(),
        metric_scale: sheet.metric_scale.clone(),
        branches,
    })
}

/// Interpolated control at (s, c), clipped to the bounds.
pub fn predict(interp: &SheetInterpolant, s: &[f64], c: &[f64], branch: usize, extrapolate: bool) -> Result<Prediction> {
    let (b, extrapolated) = interp.evaluate_clipped(s, c, branch, extrapolate)?;
    Ok(Prediction {
        b: ControlParams::from_flat(&b)?,
        branch,
        extrapolated,
    })
}
