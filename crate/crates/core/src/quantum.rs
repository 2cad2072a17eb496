//! State and operator algebra for finite-dimensional systems, the built-in
//! model library, and the map from scale parameters to system parameters.
//!
//! Units have ħ = 1. The control term enters the Hamiltonian as
//! `H = H_o(a) + sign · E · μ`, with `sign = +1` by default.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const HERMITIAN_TOL: f64 = 1e-12;

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<C64>,
}

impl QuantumState {
    /// Normalizes `amplitudes`. Fails on dimension < 2 or zero/non-finite norm.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState);
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(DVector::from_iterator(
            pairs.len(),
            pairs.iter().map(|&(re, im)| C64::new(re, im)),
        ))
    }

    /// Basis state |k⟩ in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::DimensionMismatch { expected: dim, got: k });
        }
        let mut v = DVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    /// Wraps a vector that is already normalized (used by the propagator,
    /// whose steps are unitary).
    pub(crate) fn from_unitary_image(amplitudes: DVector<C64>) -> Self {
        debug_assert!((amplitudes.norm() - 1.0).abs() < 1e-6);
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }
}

/// A Hermitian matrix (Hamiltonian, dipole or observable).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let residual = hermiticity_residual(&matrix);
        if !residual.is_finite() {
            return Err(Error::NonFinite {
                what: "operator".into(),
            });
        }
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self { matrix })
    }

    /// Real symmetric operator from row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_iterator(
            dim,
            dim,
            entries.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { matrix: m }
    }

    pub fn sigma_x() -> Self {
        Self::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn sigma_y() -> Self {
        let i = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        Self {
            matrix: DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        }
    }

    pub fn sigma_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Largest element of |M − M†|.
    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.matrix)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `self + factor · other`. Stays Hermitian for real `factor`.
    pub(crate) fn add_scaled(&self, factor: f64, other: &Self) -> Self {
        Self {
            matrix: &self.matrix + other.matrix.scale(factor),
        }
    }
}

fn hermiticity_residual(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// ⟨ψ|op|ψ⟩, real part.
pub fn expectation(op: &HermitianOperator, psi: &QuantumState) -> Result<f64> {
    if op.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: psi.dim(),
        });
    }
    let v = psi.amplitudes.dotc(&(&op.matrix * &psi.amplitudes));
    debug_assert!(v.im.abs() <= 1e-12 * (1.0 + v.re.abs()));
    Ok(v.re)
}

/// System parameters `a`, together with the unscaled parameters `c` that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

/// Dimensionless scale vector `s` (p ≥ 1, finite components).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleVector(Vec<f64>);

impl ScaleVector {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidParameter("scale vector must have p >= 1".into()));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "scale vector".into(),
            });
        }
        Ok(Self(s))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One factor of a product term in the scale map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Scale(usize),
    Unscaled(usize),
}

/// `a_j = coeff · Π factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

/// Closed interval used for parameter bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::InvalidParameter(format!("invalid interval [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Deterministic map (s, c) → a as a list of product terms, with bounds on
/// s and c.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMap {
    pub terms: Vec<ProductTerm>,
    pub s_bounds: Vec<Interval>,
    pub c_bounds: Vec<Interval>,
}

impl ScaleMap {
    /// `a_j = c_j · s_1` for every j; c and a have equal length.
    pub fn multiplicative(s_bounds: Interval, c_bounds: Vec<Interval>) -> Self {
        let terms = (0..c_bounds.len())
            .map(|j| ProductTerm {
                coeff: 1.0,
                factors: vec![Factor::Unscaled(j), Factor::Scale(0)],
            })
            .collect();
        Self {
            terms,
            s_bounds: vec![s_bounds],
            c_bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for term in &self.terms {
            if !term.coeff.is_finite() {
                return Err(Error::NonFinite {
                    what: "scale map coefficient".into(),
                });
            }
            for f in &term.factors {
                let ok = match *f {
                    Factor::Scale(i) => i < self.s_bounds.len(),
                    Factor::Unscaled(i) => i < self.c_bounds.len(),
                };
                if !ok {
                    return Err(Error::InvalidParameter(format!(
                        "scale map factor {f:?} refers to a missing parameter"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Built-in Hamiltonian families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `H_o = (ω₀/2) σ_z`, `μ = σ_x`; a = [ω₀].
    TwoLevel,
    /// `H_o = diag(0, ω₁, ω₁ + ω₂)`, nearest-neighbour dipole couplings
    /// (1, √2); a = [ω₁, ω₂].
    ThreeLevelLadder,
}

impl ModelKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "two_level" => Some(Self::TwoLevel),
            "three_level_ladder" => Some(Self::ThreeLevelLadder),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoLevel => "two_level",
            Self::ThreeLevelLadder => "three_level_ladder",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::TwoLevel => 2,
            Self::ThreeLevelLadder => 3,
        }
    }

    pub fn system_param_count(&self) -> usize {
        match self {
            Self::TwoLevel => 1,
            Self::ThreeLevelLadder => 2,
        }
    }

    pub fn drift(&self, a: &[f64]) -> Result<HermitianOperator> {
        if a.len() != self.system_param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.system_param_count(),
                got: a.len(),
            });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "system parameters".into(),
            });
        }
        Ok(match self {
            Self::TwoLevel => HermitianOperator::diagonal(&[a[0] / 2.0, -a[0] / 2.0]),
            Self::ThreeLevelLadder => HermitianOperator::diagonal(&[0.0, a[0], a[0] + a[1]]),
        })
    }

    pub fn dipole(&self) -> HermitianOperator {
        match self {
            Self::TwoLevel => HermitianOperator::sigma_x(),
            Self::ThreeLevelLadder => {
                let r = std::f64::consts::SQRT_2;
                HermitianOperator::from_real(3, &[0.0, 1.0, 0.0, 1.0, 0.0, r, 0.0, r, 0.0]).unwrap()
            }
        }
    }

    pub fn observable_names(&self) -> &'static [&'static str] {
        match self {
            Self::TwoLevel => &["sigma_x", "sigma_y", "sigma_z", "population_0", "population_1"],
            Self::ThreeLevelLadder => &["population_0", "population_1", "population_2", "level_number"],
        }
    }

    pub fn observable(&self, name: &str) -> Option<HermitianOperator> {
        let n = self.dim();
        let population = |k: usize| {
            let mut d = vec![0.0; n];
            d[k] = 1.0;
            HermitianOperator::diagonal(&d)
        };
        match (self, name) {
            (Self::TwoLevel, "sigma_x") => Some(HermitianOperator::sigma_x()),
            (Self::TwoLevel, "sigma_y") => Some(HermitianOperator::sigma_y()),
            (Self::TwoLevel, "sigma_z") => Some(HermitianOperator::sigma_z()),
            (Self::TwoLevel, "population_0") => Some(population(0)),
            (Self::TwoLevel, "population_1") => Some(population(1)),
            (Self::ThreeLevelLadder, "population_0") => Some(population(0)),
            (Self::ThreeLevelLadder, "population_1") => Some(population(1)),
            (Self::ThreeLevelLadder, "population_2") => Some(population(2)),
            (Self::ThreeLevelLadder, "level_number") => Some(HermitianOperator::diagonal(&[0.0, 1.0, 2.0])),
            _ => None,
        }
    }
}

/// A complete model: drift family, dipole, observable, initial state and
/// the scale map.
#[derive(Debug, Clone)]
pub struct QuantumModel {
    kind: ModelKind,
    dipole: HermitianOperator,
    dipole_sign: f64,
    observable: HermitianOperator,
    psi0: QuantumState,
    scale_map: ScaleMap,
}

impl QuantumModel {
    pub fn new(
        kind: ModelKind,
        observable: HermitianOperator,
        psi0: QuantumState,
        scale_map: ScaleMap,
        dipole_sign: f64,
    ) -> Result<Self> {
        let n = kind.dim();
        if observable.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: observable.dim(),
            });
        }
        if psi0.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: psi0.dim(),
            });
        }
        if dipole_sign != 1.0 && dipole_sign != -1.0 {
            return Err(Error::InvalidParameter(format!(
                "dipole_sign must be +1 or -1, got {dipole_sign}"
            )));
        }
        if scale_map.terms.len() != kind.system_param_count() {
            return Err(Error::DimensionMismatch {
                expected: kind.system_param_count(),
                got: scale_map.terms.len(),
            });
        }
        scale_map.validate()?;
        Ok(Self {
            kind,
            dipole: kind.dipole(),
            dipole_sign,
            observable,
            psi0,
            scale_map,
        })
    }

    /// Driven two-level system with `ω₀ = c₁ · s₁`, ψ₀ = |0⟩.
    pub fn two_level(observable: &str, s_bounds: Interval, c_bounds: Interval) -> Result<Self> {
        let kind = ModelKind::TwoLevel;
        let obs = kind
            .observable(observable)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown observable {observable}")))?;
        Self::new(
            kind,
            obs,
            QuantumState::basis(2, 0)?,
            ScaleMap::multiplicative(s_bounds, vec![c_bounds]),
            1.0,
        )
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn dipole(&self) -> &HermitianOperator {
        &self.dipole
    }

    pub fn dipole_sign(&self) -> f64 {
        self.dipole_sign
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn psi0(&self) -> &QuantumState {
        &self.psi0
    }

    pub fn scale_map(&self) -> &ScaleMap {
        &self.scale_map
    }

    pub fn drift(&self, a: &SystemParams) -> Result<HermitianOperator> {
        self.kind.drift(&a.a)
    }
}

/// `H_o(a) + sign · field_value · μ`.
pub fn build_hamiltonian(model: &QuantumModel, a: &SystemParams, field_value: f64) -> Result<HermitianOperator> {
    if !field_value.is_finite() {
        return Err(Error::NonFinite {
            what: "field value".into(),
        });
    }
    let h0 = model.drift(a)?;
    Ok(h0.add_scaled(model.dipole_sign * field_value, &model.dipole))
}

/// Evaluates the scale map at (s, c). Pure; fails on out-of-bounds inputs.
pub fn map_scale(model: &QuantumModel, s: &ScaleVector, c: &[f64]) -> Result<SystemParams> {
    let map = &model.scale_map;
    if s.len() != map.s_bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: map.s_bounds.len(),
            got: s.len(),
        });
    }
    if c.len() != map.c_bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: map.c_bounds.len(),
            got: c.len(),
        });
    }
    for (i, (&x, b)) in s.as_slice().iter().zip(&map.s_bounds).enumerate() {
        if !b.contains(x) {
            return Err(Error::OutOfBounds {
                what: format!("s[{i}]"),
                value: x,
                min: b.min,
                max: b.max,
            });
        }
    }
    for (i, (&x, b)) in c.iter().zip(&map.c_bounds).enumerate() {
        if !x.is_finite() || !b.contains(x) {
            return Err(Error::OutOfBounds {
                what: format!("c[{i}]"),
                value: x,
                min: b.min,
                max: b.max,
            });
        }
    }
    let a = map
        .terms
        .iter()
        .map(|t| {
            t.factors.iter().fold(t.coeff, |acc, f| match *f {
                Factor::Scale(i) => acc * s.as_slice()[i],
                Factor::Unscaled(i) => acc * c[i],
            })
        })
        .collect();
    Ok(SystemParams { a, c: c.to_vec() })
}
