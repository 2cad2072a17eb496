//! One-dimensional interpolation bases used to build tensor-product
//! interpolants. Each basis turns a query coordinate into weights over the
//! axis nodes, so that `f(u) = Σ_j w_j y_j` and `f'(u) = Σ_j w'_j y_j`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Natural cubic spline per axis.
    CubicSpline,
    /// Piecewise linear per axis.
    Linear,
}

/// Interpolation weights along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBasis {
    nodes: Vec<f64>,
    method: Method,
    /// Maps node values to spline second derivatives: `M = moments · y`.
    moments: Vec<Vec<f64>>,
}

impl AxisBasis {
    /// `nodes` must be strictly increasing and non-empty. A single node
    /// gives a pinned axis: constant weight, zero derivative.
    pub fn new(nodes: Vec<f64>, method: Method) -> Self {
        assert!(!nodes.is_empty(), "axis needs at least one node");
        assert!(nodes.windows(2).all(|w| w[0] < w[1]), "axis nodes must increase");
        let moments = match method {
            Method::CubicSpline if nodes.len() >= 2 => natural_moment_matrix(&nodes),
            Method::CubicSpline => Vec::new(),
            Method::Linear => Vec::new(),
        };
        Self { nodes, method, moments }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.nodes[0] && u <= self.nodes[self.nodes.len() - 1]
    }

    fn interval(&self, u: f64) -> usize {
        let n = self.nodes.len();
        self.nodes.partition_point(|&x| x <= u).saturating_sub(1).min(n - 2)
    }

    /// Value and derivative weights at `u`. Outside the node range the
    /// interpolant continues linearly from the end value and slope.
    pub fn weights(&self, u: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes.len();
        if n == 1 {
            return (vec![1.0], vec![0.0]);
        }
        let first = self.nodes[0];
        let last = self.nodes[n - 1];
        if u < first || u > last {
            let end = if u < first { first } else { last };
            let (mut w, dw) = self.interior_weights(end);
            for (wj, dj) in w.iter_mut().zip(&dw) {
                *wj += dj * (u - end);
            }
            return (w, dw);
        }
        self.interior_weights(u)
    }

    fn interior_weights(&self, u: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes.len();
        let i = self.interval(u);
        let h = self.nodes[i + 1] - self.nodes[i];
        let a = (self.nodes[i + 1] - u) / h;
        let b = (u - self.nodes[i]) / h;
        let mut w = vec![0.0; n];
        let mut dw = vec![0.0; n];
        w[i] = a;
        w[i + 1] = b;
        dw[i] = -1.0 / h;
        dw[i + 1] = 1.0 / h;
        if self.method == Method::CubicSpline {
            let ca = (a * a * a - a) * h * h / 6.0;
            let cb = (b * b * b - b) * h * h / 6.0;
            let da = -(3.0 * a * a - 1.0) * h / 6.0;
            let db = (3.0 * b * b - 1.0) * h / 6.0;
            for j in 0..n {
                let mi = self.moments[i][j];
                let mk = self.moments[i + 1][j];
                w[j] += ca * mi + cb * mk;
                dw[j] += da * mi + db * mk;
            }
        }
        (w, dw)
    }
}

/// Rows of the linear map from node values to the second derivatives of
/// the natural cubic spline (zero curvature at both ends).
fn natural_moment_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    if n < 3 {
        return out;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let k = n - 2;
    // Tridiagonal system on the interior moments; solved once per unit
    // right-hand side with the Thomas algorithm.
    let sub: Vec<f64> = (0..k).map(|r| h[r]).collect();
    let diag: Vec<f64> = (0..k).map(|r| 2.0 * (h[r] + h[r + 1])).collect();
    let sup: Vec<f64> = (0..k).map(|r| h[r + 1]).collect();
    for j in 0..n {
        let rhs: Vec<f64> = (0..k)
            .map(|r| {
                let i = r + 1;
                let dy = |p: usize| if p == j { 1.0 } else { 0.0 };
                6.0 * ((dy(i + 1) - dy(i)) / h[i] - (dy(i) - dy(i - 1)) / h[i - 1])
            })
            .collect();
        let m = thomas(&sub, &diag, &sup, &rhs);
        for (row, v) in out[1..].iter_mut().zip(m) {
            row[j] = v;
        }
    }
    out
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
