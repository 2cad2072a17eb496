//! Parametric control field: a sum of Gaussian-enveloped cosine pulses.
//!
//! ```text
//! E(t) = Σ_j A_j · exp(−(t − t_c,j)² / (2 σ_j²)) · cos(ω_j t)
//! ```
//!
//! The flat parameter vector `b` holds `(A, t_c, σ, ω)` for each pulse, in
//! declaration order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters per pulse in the flat layout.
pub const PARAMS_PER_PULSE: usize = 4;

/// Names of the four per-pulse parameters, in flat order.
pub const PULSE_PARAM_NAMES: [&str; PARAMS_PER_PULSE] = ["amplitude", "center", "width", "carrier"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub carrier: f64,
}

impl Pulse {
    fn envelope(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.width;
        (-0.5 * u * u).exp()
    }
}

/// Control parameter vector `b` viewed as a pulse list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlParams {
    pulses: Vec<Pulse>,
}

impl ControlParams {
    pub fn new(pulses: Vec<Pulse>) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::InvalidParameter("at least one pulse is required".into()));
        }
        for (j, p) in pulses.iter().enumerate() {
            if ![p.amplitude, p.center, p.width, p.carrier].iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("pulse {j}"),
                });
            }
            if p.width <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "pulse {j} width must be > 0, got {}",
                    p.width
                )));
            }
        }
        Ok(Self { pulses })
    }

    /// Builds from the flat `(A, t_c, σ, ω)*` layout.
    pub fn from_flat(b: &[f64]) -> Result<Self> {
        if b.is_empty() || !b.len().is_multiple_of(PARAMS_PER_PULSE) {
            return Err(Error::InvalidParameter(format!(
                "control vector length {} is not a positive multiple of {PARAMS_PER_PULSE}",
                b.len()
            )));
        }
        Self::new(
            b.chunks_exact(PARAMS_PER_PULSE)
                .map(|c| Pulse {
                    amplitude: c[0],
                    center: c[1],
                    width: c[2],
                    carrier: c[3],
                })
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.pulses
            .iter()
            .flat_map(|p| [p.amplitude, p.center, p.width, p.carrier])
            .collect()
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    /// Total parameter count `m`.
    pub fn len(&self) -> usize {
        self.pulses.len() * PARAMS_PER_PULSE
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Field value E(t).
    pub fn field_value(&self, t: f64) -> f64 {
        self.pulses
            .iter()
            .map(|p| p.amplitude * p.envelope(t) * (p.carrier * t).cos())
            .sum()
    }

    /// ∇_b E(t), in flat order.
    pub fn field_gradient(&self, t: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        self.field_gradient_into(t, &mut g);
        g
    }

    pub(crate) fn field_gradient_into(&self, t: f64, out: &mut [f64]) {
        for (p, g) in self.pulses.iter().zip(out.chunks_exact_mut(PARAMS_PER_PULSE)) {
            let env = p.envelope(t);
            let (sin, cos) = (p.carrier * t).sin_cos();
            let dt = t - p.center;
            let w2 = p.width * p.width;
            let shaped = p.amplitude * env * cos;
            g[0] = env * cos;
            g[1] = shaped * dt / w2;
            g[2] = shaped * dt * dt / (w2 * p.width);
            g[3] = -p.amplitude * env * sin * t;
        }
    }
}

impl TryFrom<Vec<f64>> for ControlParams {
    type Error = Error;

    fn try_from(b: Vec<f64>) -> Result<Self> {
        Self::from_flat(&b)
    }
}

impl From<ControlParams> for Vec<f64> {
    fn from(b: ControlParams) -> Self {
        b.to_flat()
    }
}

/// Name of flat component `i`, e.g. `width[0]`.
pub fn param_name(i: usize) -> String {
    format!("{}[{}]", PULSE_PARAM_NAMES[i % PARAMS_PER_PULSE], i / PARAMS_PER_PULSE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(a: f64, tc: f64, w: f64, om: f64) -> ControlParams {
        ControlParams::from_flat(&[a, tc, w, om]).unwrap()
    }

    // Central differences of field_value: the independent oracle for the
    // closed-form partials.
    fn fd_gradient(b: &ControlParams, t: f64, h: f64) -> Vec<f64> {
        let flat = b.to_flat();
        (0..flat.len())
            .map(|i| {
                let mut p = flat.clone();
                let mut m = flat.clone();
                p[i] += h;
                m[i] -= h;
                let fp = ControlParams::from_flat(&p).unwrap().field_value(t);
                let fm = ControlParams::from_flat(&m).unwrap().field_value(t);
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn field_value_examples() {
        let b = single(1.0, 0.0, 1.0, 0.0);
        assert_eq!(b.field_value(0.0), 1.0);
        assert!((b.field_value(1.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((b.field_value(1.0) - 0.60653).abs() < 1e-5);
        let two = ControlParams::from_flat(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(two.field_value(0.0), 2.0 * b.field_value(0.0));
    }

    #[test]
    fn gradient_at_stationary_peak() {
        let g = single(1.0, 0.0, 1.0, 0.0).field_gradient(0.0);
        assert_eq!(g, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn width_derivative_matches_difference_quotient() {
        let b = single(2.0, 0.0, 1.0, 0.0);
        let fd = fd_gradient(&b, 1.0, 1e-6);
        // Frozen from the difference quotient above.
        assert!((fd[2] - 1.2130613).abs() < 1e-6);
        assert!((b.field_gradient(1.0)[2] - fd[2]).abs() <= 1e-6 * fd[2].abs());
    }

    #[test]
    fn invalid_vectors_rejected() {
        assert!(ControlParams::from_flat(&[]).is_err());
        assert!(ControlParams::from_flat(&[1.0, 0.0, 1.0]).is_err());
        assert!(ControlParams::from_flat(&[1.0, 0.0, 0.0, 1.0]).is_err());
        assert!(ControlParams::from_flat(&[1.0, f64::NAN, 1.0, 1.0]).is_err());
    }

    #[test]
    fn serde_uses_flat_layout() {
        let b = single(0.3, 1.0, 0.4, 1.0);
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, "[0.3,1.0,0.4,1.0]");
        let back: ControlParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<ControlParams>("[1.0,0.0,-1.0,0.0]").is_err());
    }

    fn arb_pulse() -> impl Strategy<Value = [f64; 4]> {
        (-2.0..2.0f64, -3.0..3.0f64, 0.3..3.0f64, -3.0..3.0f64).prop_map(|(a, c, w, o)| [a, c, w, o])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_matches_finite_differences(
            pulses in prop::collection::vec(arb_pulse(), 1..3),
            t in -4.0..4.0f64,
        ) {
            let flat: Vec<f64> = pulses.concat();
            let b = ControlParams::from_flat(&flat).unwrap();
            let g = b.field_gradient(t);
            let fd = fd_gradient(&b, t, 1e-6);
            for (x, y) in g.iter().zip(&fd) {
                prop_assert!((x - y).abs() <= (1e-6 * y.abs()).max(1e-9), "{x} vs {y}");
            }
        }

        #[test]
        fn field_is_linear_in_amplitude(p in arb_pulse(), k in -3.0..3.0f64, t in -4.0..4.0f64) {
            let b1 = ControlParams::from_flat(&p).unwrap();
            let mut q = p;
            q[0] *= k;
            let bk = ControlParams::from_flat(&q).unwrap();
            prop_assert!((bk.field_value(t) - k * b1.field_value(t)).abs() <= 1e-12);
        }
    }
}
