//! Level-set geometry in control space: tangent directions ∂b/∂c_j,
//! velocities ∂b/∂s_i, and the normal part of each velocity.
//!
//! Inner products use the Euclidean metric on `b / metric_scale` (plain
//! Euclidean when no scale is configured). Returned vectors are in the
//! original b units.

use serde::{Deserialize, Serialize};

use super::interp::{join, SheetInterpolant};
use crate::error::{Error, Result};

/// Vectors below this norm (relative to the largest tangent) are treated
/// as linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontGeometry {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub branch: usize,
    pub b: Vec<f64>,
    /// ∂b/∂c_j, one per unscaled axis.
    pub tangents: Vec<Vec<f64>>,
    /// Orthonormal basis of the complement of the tangent span.
    pub normal_basis: Vec<Vec<f64>>,
    /// ∂b/∂s_i, one per scale axis.
    pub velocities: Vec<Vec<f64>>,
    /// Velocity minus its projection onto the tangent span.
    pub normal_velocities: Vec<Vec<f64>>,
    /// Norms of the normal velocities.
    pub normal_speeds: Vec<f64>,
    /// max |⟨normal velocity, unit tangent⟩| over all pairs.
    pub orthogonality_residual: f64,
    pub extrapolated: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes from `v` its components along the orthonormal set `basis`,
/// twice over for stability.
fn reject(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let p = dot(v, q);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= p * y;
            }
        }
    }
}

/// Orthonormal basis for the span of `vectors`, dropping dependent ones.
fn orthonormalize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scale = vectors.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        reject(&mut w, &basis);
        let n = norm(&w);
        if n > RANK_TOL * scale && n > 0.0 {
            basis.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Tangent basis, normal velocities and speeds of `branch` at (s, c).
pub fn geometry(interp: &SheetInterpolant, s: &[f64], c: &[f64], branch: usize, extrapolate: bool) -> Result<FrontGeometry> {
    if s.len() != interp.s_dims || c.len() != interp.c_dims {
        return Err(Error::DimensionMismatch {
            expected: interp.s_dims + interp.c_dims,
            got: s.len() + c.len(),
        });
    }
    let eval = interp.branch(branch)?.evaluate(&join(s, c), extrapolate)?;
    let m = eval.b.len();
    let scale = match &interp.metric_scale {
        Some(sc) if sc.len() == m && sc.iter().all(|x| x.is_finite() && *x > 0.0) => sc.clone(),
        Some(_) => return Err(Error::InvalidParameter("metric_scale must have one positive entry per b component".into())),
        None => vec![1.0; m],
    };
    let to_metric = |v: &[f64]| -> Vec<f64> { v.iter().zip(&scale).map(|(x, s)| x / s).collect() };
    let from_metric = |v: &[f64]| -> Vec<f64> { v.iter().zip(&scale).map(|(x, s)| x * s).collect() };

    let velocities: Vec<Vec<f64>> = eval.partials[..interp.s_dims].to_vec();
    let tangents: Vec<Vec<f64>> = eval.partials[interp.s_dims..].to_vec();
    let tangent_basis = orthonormalize(&tangents.iter().map(|t| to_metric(t)).collect::<Vec<_>>());

    let mut normal_velocities = Vec::with_capacity(velocities.len());
    let mut normal_speeds = Vec::with_capacity(velocities.len());
    let mut residual = 0.0_f64;
    for v in &velocities {
        let mut w = to_metric(v);
        reject(&mut w, &tangent_basis);
        for q in &tangent_basis {
            residual = residual.max(dot(&w, q).abs());
        }
        normal_speeds.push(norm(&w));
        normal_velocities.push(from_metric(&w));
    }

    // Complete the tangent basis with standard directions.
    let mut full = tangent_basis.clone();
    let mut normal_basis = Vec::new();
    for i in 0..m {
        if full.len() == m {
            break;
        }
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        reject(&mut e, &full);
        let n = norm(&e);
        if n > 1e-8 {
            let unit: Vec<f64> = e.into_iter().map(|x| x / n).collect();
            normal_basis.push(from_metric(&unit));
            full.push(unit);
        }
    }

    Ok(FrontGeometry {
        s: s.to_vec(),
        c: c.to_vec(),
        branch,
        b: eval.b,
        tangents,
        normal_basis,
        velocities,
        normal_velocities,
        normal_speeds,
        orthogonality_residual: residual,
        extrapolated: eval.extrapolated,
    })
}
