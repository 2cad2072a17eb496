//! Run configuration: JSON schema, cross-reference validation, and
//! construction of the numerical problem it describes.
//!
//! Validation errors carry the dotted key path of the offending entry and,
//! when it can be found in the source text, its line number.

use std::collections::HashMap;
use std::path::Path;

use evoctl_core::field::{param_name, PARAMS_PER_PULSE};
use evoctl_core::levelset::{SweepGrid, SweepSettings};
use evoctl_core::{
    ControlParams, CostWeights, Factor, Interval, ModelKind, OptSettings, ProductTerm, QuantumModel, QuantumState,
    ScaleMap, ScaleVector, TimeGrid,
};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config is not valid: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config at `{path}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid {
        path: String,
        line: Option<usize>,
        message: String,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub field: FieldSection,
    pub grid: GridSection,
    pub cost: CostSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `two_level` or `three_level_ladder`.
    pub name: String,
    #[serde(default = "one")]
    pub dipole_sign: f64,
    /// Initial amplitudes as `[re, im]` pairs; defaults to the ground state.
    #[serde(default)]
    pub psi0: Option<Vec<[f64; 2]>>,
    /// Scale parameters s, in order.
    pub scales: Vec<ParamSpec>,
    /// Unscaled parameters c, in order.
    #[serde(default)]
    pub unscaled: Vec<ParamSpec>,
    /// System parameters a, each a product of scales and unscaled values.
    pub system: Vec<SystemTerm>,
}

/// A named scalar with its nominal value and admissible range.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

/// `name = coeff · Π factors`, factors naming scales or unscaled parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTerm {
    pub name: String,
    #[serde(default = "one")]
    pub coeff: f64,
    #[serde(default)]
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub pulses: usize,
    /// Flat `(amplitude, center, width, carrier)` per pulse.
    pub b_init: Vec<f64>,
    /// `[min, max]` per flat component.
    pub b_bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub k: f64,
    pub l: f64,
    pub theta0: f64,
    pub observable: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub cost_rel_tol: f64,
    pub beta: f64,
    pub c1: f64,
    pub max_step: f64,
    pub restarts: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptSettings::with_bounds(Vec::new());
        Self {
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            cost_rel_tol: d.cost_rel_tol,
            beta: d.beta,
            c1: d.c1,
            max_step: d.max_step,
            restarts: d.restarts,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub s_axes: Vec<AxisSpec>,
    #[serde(default)]
    pub c_axes: Vec<AxisSpec>,
    #[serde(default)]
    pub continuity_threshold: Option<f64>,
    #[serde(default)]
    pub metric_scale: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

/// Either explicit `nodes` or an evenly spaced `start`/`stop`/`count`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub name: String,
    #[serde(default)]
    pub nodes: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

/// Everything a command needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: QuantumModel,
    pub s_names: Vec<String>,
    pub c_names: Vec<String>,
    /// Nominal scale and unscaled values used by `optimize`.
    pub s: ScaleVector,
    pub c: Vec<f64>,
    pub time_grid: TimeGrid,
    pub weights: CostWeights,
    pub optimizer: OptSettings,
    pub b_init: ControlParams,
    pub sweep: Option<SweepPlan>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub grid: SweepGrid,
    pub settings: SweepSettings,
    pub metric_scale: Option<Vec<f64>>,
}

/// A config as read from disk, keeping the exact source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub text: String,
    pub config: RunConfig,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(text)
    }

    pub fn parse(text: String) -> Result<Self> {
        let config = serde_json::from_str(&text)?;
        Ok(Self { text, config })
    }

    pub fn problem(&self) -> Result<Problem> {
        Validator { text: &self.text }.build(&self.config)
    }
}

struct Validator<'t> {
    text: &'t str,
}

impl Validator<'_> {
    fn fail<T>(&self, path: impl Into<String>, message: impl Into<String>) -> Result<T> {
        let path = path.into();
        Err(ConfigError::Invalid {
            line: locate(self.text, &path),
            path,
            message: message.into(),
        })
    }

    fn finite(&self, path: &str, x: f64) -> Result<()> {
        if x.is_finite() {
            Ok(())
        } else {
            self.fail(path, "value must be finite")
        }
    }

    fn build(&self, cfg: &RunConfig) -> Result<Problem> {
        let m = &cfg.model;
        let Some(kind) = ModelKind::from_name(&m.name) else {
            return self.fail("model.name", format!("unknown model `{}`", m.name));
        };
        if m.dipole_sign != 1.0 && m.dipole_sign != -1.0 {
            return self.fail("model.dipole_sign", "must be 1 or -1");
        }
        if m.scales.is_empty() {
            return self.fail("model.scales", "at least one scale parameter is required");
        }

        // Every name shares one namespace with the control components.
        let mut names: HashMap<String, String> = HashMap::new();
        let b_len = cfg.field.pulses * PARAMS_PER_PULSE;
        for i in 0..b_len {
            names.insert(param_name(i), format!("field.b_init[{i}]"));
        }
        let mut claim = |name: &str, path: String| -> Result<()> {
            if name.is_empty() {
                return self.fail(path, "name must not be empty");
            }
            if let Some(prev) = names.get(name) {
                return self.fail(path, format!("duplicate parameter name `{name}` (also used by `{prev}`)"));
            }
            names.insert(name.to_string(), path);
            Ok(())
        };
        for (group, list) in [("scales", &m.scales), ("unscaled", &m.unscaled)] {
            for (i, p) in list.iter().enumerate() {
                let path = format!("model.{group}[{i}]");
                claim(&p.name, format!("{path}.name"))?;
                for (key, v) in [("value", p.value), ("min", p.min), ("max", p.max)] {
                    self.finite(&format!("{path}.{key}"), v)?;
                }
                if p.min > p.max {
                    return self.fail(format!("{path}.min"), "min exceeds max");
                }
                if p.value < p.min || p.value > p.max {
                    return self.fail(format!("{path}.value"), format!("{} lies outside [{}, {}]", p.value, p.min, p.max));
                }
            }
        }
        for (i, t) in m.system.iter().enumerate() {
            claim(&t.name, format!("model.system[{i}].name"))?;
        }

        let s_index: HashMap<&str, usize> = m.scales.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        let c_index: HashMap<&str, usize> = m.unscaled.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        if m.system.len() != kind.system_param_count() {
            return self.fail(
                "model.system",
                format!("model `{}` takes {} system parameters, got {}", kind.name(), kind.system_param_count(), m.system.len()),
            );
        }
        let mut terms = Vec::with_capacity(m.system.len());
        for (i, t) in m.system.iter().enumerate() {
            self.finite(&format!("model.system[{i}].coeff"), t.coeff)?;
            let mut factors = Vec::with_capacity(t.factors.len());
            for (j, f) in t.factors.iter().enumerate() {
                let factor = match (s_index.get(f.as_str()), c_index.get(f.as_str())) {
                    (Some(&k), _) => Factor::Scale(k),
                    (_, Some(&k)) => Factor::Unscaled(k),
                    _ => {
                        return self.fail(
                            format!("model.system[{i}].factors[{j}]"),
                            format!("`{f}` is not a scale or unscaled parameter"),
                        )
                    }
                };
                factors.push(factor);
            }
            terms.push(ProductTerm { coeff: t.coeff, factors });
        }
        let interval = |p: &ParamSpec| Interval { min: p.min, max: p.max };
        let scale_map = ScaleMap {
            terms,
            s_bounds: m.scales.iter().map(interval).collect(),
            c_bounds: m.unscaled.iter().map(interval).collect(),
        };

        let psi0 = match &m.psi0 {
            None => QuantumState::basis(kind.dim(), 0).expect("ground state exists"),
            Some(pairs) => {
                if pairs.len() != kind.dim() {
                    return self.fail("model.psi0", format!("expected {} amplitudes, got {}", kind.dim(), pairs.len()));
                }
                let pairs: Vec<(f64, f64)> = pairs.iter().map(|p| (p[0], p[1])).collect();
                match QuantumState::from_pairs(&pairs) {
                    Ok(s) => s,
                    Err(e) => return self.fail("model.psi0", e.to_string()),
                }
            }
        };
        let c = &cfg.cost;
        let Some(observable) = kind.observable(&c.observable) else {
            return self.fail(
                "cost.observable",
                format!("unknown observable `{}`; `{}` offers {:?}", c.observable, kind.name(), kind.observable_names()),
            );
        };
        let model = match QuantumModel::new(kind, observable, psi0, scale_map, m.dipole_sign) {
            Ok(model) => model,
            Err(e) => return self.fail("model", e.to_string()),
        };

        let f = &cfg.field;
        if f.pulses == 0 {
            return self.fail("field.pulses", "at least one pulse is required");
        }
        if f.b_init.len() != b_len {
            return self.fail("field.b_init", format!("expected {b_len} values for {} pulses, got {}", f.pulses, f.b_init.len()));
        }
        if f.b_bounds.len() != b_len {
            return self.fail("field.b_bounds", format!("expected {b_len} [min, max] pairs, got {}", f.b_bounds.len()));
        }
        let mut b_bounds = Vec::with_capacity(b_len);
        for (i, &[lo, hi]) in f.b_bounds.iter().enumerate() {
            let path = format!("field.b_bounds[{i}]");
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return self.fail(path, format!("invalid bounds [{lo}, {hi}] for {}", param_name(i)));
            }
            if i % PARAMS_PER_PULSE == 2 && lo <= 0.0 {
                return self.fail(path, format!("lower bound of {} must be > 0, got {lo}", param_name(i)));
            }
            b_bounds.push(Interval { min: lo, max: hi });
        }
        for (i, (&v, iv)) in f.b_init.iter().zip(&b_bounds).enumerate() {
            if !iv.contains(v) {
                return self.fail(format!("field.b_init[{i}]"), format!("{} = {v} lies outside [{}, {}]", param_name(i), iv.min, iv.max));
            }
        }
        let b_init = match ControlParams::from_flat(&f.b_init) {
            Ok(b) => b,
            Err(e) => return self.fail("field.b_init", e.to_string()),
        };

        let time_grid = match TimeGrid::new(cfg.grid.horizon, cfg.grid.steps) {
            Ok(g) => g,
            Err(e) => return self.fail("grid", e.to_string()),
        };
        let weights = match CostWeights::new(c.k, c.l, c.theta0) {
            Ok(w) => w,
            Err(e) => return self.fail("cost", e.to_string()),
        };
        let o = &cfg.optimizer;
        let optimizer = OptSettings {
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            cost_rel_tol: o.cost_rel_tol,
            beta: o.beta,
            c1: o.c1,
            max_step: o.max_step,
            restarts: o.restarts,
            rng_seed: cfg.seed,
            b_bounds,
        };
        if let Err(e) = optimizer.validate(b_len) {
            return self.fail("optimizer", e.to_string());
        }

        let s = ScaleVector::new(m.scales.iter().map(|p| p.value).collect()).expect("scales validated above");
        let sweep = cfg
            .sweep
            .as_ref()
            .map(|sw| self.sweep_plan(sw, m, b_len, time_grid, weights, &optimizer, &b_init))
            .transpose()?;

        Ok(Problem {
            s_names: m.scales.iter().map(|p| p.name.clone()).collect(),
            c_names: m.unscaled.iter().map(|p| p.name.clone()).collect(),
            s,
            c: m.unscaled.iter().map(|p| p.value).collect(),
            model,
            time_grid,
            weights,
            optimizer,
            b_init,
            sweep,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn sweep_plan(
        &self,
        sw: &SweepSection,
        m: &ModelSection,
        b_len: usize,
        time_grid: TimeGrid,
        weights: CostWeights,
        optimizer: &OptSettings,
        b_init: &ControlParams,
    ) -> Result<SweepPlan> {
        let s_axes = self.axes("sweep.s_axes", &sw.s_axes, &m.scales)?;
        let c_axes = self.axes("sweep.c_axes", &sw.c_axes, &m.unscaled)?;
        if let Some(t) = sw.continuity_threshold {
            if !(t.is_finite() && t > 0.0) {
                return self.fail("sweep.continuity_threshold", "must be a positive number");
            }
        }
        if let Some(scale) = &sw.metric_scale {
            if scale.len() != b_len {
                return self.fail("sweep.metric_scale", format!("expected {b_len} entries, got {}", scale.len()));
            }
            if let Some(i) = scale.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return self.fail(format!("sweep.metric_scale[{i}]"), "entries must be positive");
            }
        }
        let grid = match SweepGrid::new(s_axes, c_axes) {
            Ok(g) => g,
            Err(e) => return self.fail("sweep", e.to_string()),
        };
        Ok(SweepPlan {
            grid,
            settings: SweepSettings {
                time_grid,
                weights,
                optimizer: optimizer.clone(),
                b_init: b_init.clone(),
                warm_start: sw.warm_start,
                continuity_threshold: sw.continuity_threshold,
            },
            metric_scale: sw.metric_scale.clone(),
        })
    }

    /// Node lists for each parameter in `params`, in parameter order.
    /// Parameters without an axis stay pinned at their nominal value.
    fn axes(&self, key: &str, specs: &[AxisSpec], params: &[ParamSpec]) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Option<Vec<f64>>> = vec![None; params.len()];
        for (i, spec) in specs.iter().enumerate() {
            let path = format!("{key}[{i}]");
            let Some(k) = params.iter().position(|p| p.name == spec.name) else {
                return self.fail(format!("{path}.name"), format!("`{}` is not a parameter of this kind", spec.name));
            };
            if out[k].is_some() {
                return self.fail(format!("{path}.name"), format!("axis `{}` given twice", spec.name));
            }
            let nodes = match (&spec.nodes, spec.start, spec.stop, spec.count) {
                (Some(nodes), None, None, None) => nodes.clone(),
                (None, Some(a), Some(b), Some(n)) => {
                    if n == 0 {
                        return self.fail(format!("{path}.count"), "count must be >= 1");
                    }
                    if n == 1 {
                        vec![a]
                    } else {
                        (0..n).map(|j| a + (b - a) * j as f64 / (n - 1) as f64).collect()
                    }
                }
                _ => return self.fail(path, "give either `nodes` or all of `start`, `stop`, `count`"),
            };
            if nodes.is_empty() {
                return self.fail(path, "axis has no nodes");
            }
            if !nodes.windows(2).all(|w| w[0] < w[1]) {
                return self.fail(path, "nodes must be strictly increasing");
            }
            let p = &params[k];
            if let Some(x) = nodes.iter().find(|x| !(x.is_finite() && **x >= p.min && **x <= p.max)) {
                return self.fail(path, format!("node {x} lies outside [{}, {}] of `{}`", p.min, p.max, p.name));
            }
            out[k] = Some(nodes);
        }
        Ok(out
            .into_iter()
            .zip(params)
            .map(|(nodes, p)| nodes.unwrap_or_else(|| vec![p.value]))
            .collect())
    }
}

/// Best-effort line number of a dotted key path such as
/// `model.scales[1].name` within JSON text.
pub fn locate(text: &str, path: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    for segment in path.split('.') {
        let (key, indices) = match segment.find('[') {
            Some(i) => (&segment[..i], &segment[i..]),
            None => (segment, ""),
        };
        let needle = format!("\"{key}\"");
        pos += text[pos..].find(&needle)? + needle.len();
        for idx in indices.split('[').filter(|s| !s.is_empty()) {
            let n: usize = idx.trim_end_matches(']').parse().ok()?;
            pos += text[pos..].find('[')? + 1;
            pos = skip_elements(bytes, pos, n)?;
        }
    }
    Some(text[..pos].matches('\n').count() + 1)
}

/// Starting just inside an array, returns the offset of element `n`.
fn skip_elements(bytes: &[u8], mut pos: usize, n: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    let mut seen = 0;
    while pos < bytes.len() {
        let ch = bytes[pos];
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
        } else {
            match ch {
                b'"' => in_string = true,
                b'[' | b'{' => depth += 1,
                b']' | b'}' if depth == 0 => return None,
                b']' | b'}' => depth -= 1,
                b',' if depth == 0 => seen += 1,
                _ => {}
            }
            if seen == n && !ch.is_ascii_whitespace() && ch != b',' {
                return Some(pos);
            }
        }
        pos += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_follows_keys_and_indices() {
        let text = "{\n  \"model\": {\n    \"scales\": [\n      {\"name\": \"a\"},\n      {\"name\": \"b\"}\n    ]\n  }\n}\n";
        assert_eq!(locate(text, "model"), Some(2));
        assert_eq!(locate(text, "model.scales"), Some(3));
        assert_eq!(locate(text, "model.scales[0].name"), Some(4));
        assert_eq!(locate(text, "model.scales[1].name"), Some(5));
        assert_eq!(locate(text, "model.missing"), None);
    }

    #[test]
    fn locate_skips_nested_arrays() {
        let text = "{\"b\": [\n[1, 2],\n[3, 4],\n[5, 6]\n]}";
        assert_eq!(locate(text, "b[0]"), Some(2));
        assert_eq!(locate(text, "b[2]"), Some(4));
    }
}
