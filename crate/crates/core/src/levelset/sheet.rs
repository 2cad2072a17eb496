//! Sweeps over (s, c) grids and the resulting solution sheet.

use serde::{Deserialize, Serialize};

use crate::cost::{CostWeights, Objective, PropagationCounter};
use crate::error::{Error, Result};
use crate::field::ControlParams;
use crate::optimizer::{multistart, OptSettings};
use crate::propagator::TimeGrid;
use crate::quantum::{map_scale, Interval, QuantumModel, ScaleVector};

pub const SHEET_FORMAT_VERSION: u32 = 1;

/// Tensor grid over the scale axes followed by the unscaled-parameter axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub s_axes: Vec<Vec<f64>>,
    #[serde(default)]
    pub c_axes: Vec<Vec<f64>>,
}

impl SweepGrid {
    pub fn new(s_axes: Vec<Vec<f64>>, c_axes: Vec<Vec<f64>>) -> Result<Self> {
        let grid = Self { s_axes, c_axes };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_axes.is_empty() {
            return Err(Error::InvalidParameter("sweep grid needs at least one s axis".into()));
        }
        for (k, axis) in self.axes().enumerate() {
            if axis.is_empty() {
                return Err(Error::InvalidParameter(format!("sweep axis {k} has no nodes")));
            }
            if axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("sweep axis {k}"),
                });
            }
            if !axis.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "sweep axis {k} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    /// All axes, s first.
    pub fn axes(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.s_axes.iter().chain(&self.c_axes)
    }

    pub fn ndim(&self) -> usize {
        self.s_axes.len() + self.c_axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes().map(Vec::len).collect()
    }

    pub fn node_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Row-major (last axis fastest) multi-index of flat node `flat`.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for (k, &n) in shape.iter().enumerate().rev() {
            idx[k] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        self.shape().iter().zip(idx).fold(0, |acc, (&n, &i)| acc * n + i)
    }

    /// (s, c) coordinates of a node.
    pub fn coordinates(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let p = self.s_axes.len();
        let s = self.s_axes.iter().zip(&idx[..p]).map(|(a, &i)| a[i]).collect();
        let c = self.c_axes.iter().zip(&idx[p..]).map(|(a, &i)| a[i]).collect();
        (s, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetEntry {
    pub index: Vec<usize>,
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    /// Optimal control, flat layout. `None` when the node failed outright.
    pub b: Option<Vec<f64>>,
    #[serde(with = "nan_as_null")]
    pub total: f64,
    #[serde(with = "nan_as_null")]
    pub deviation: f64,
    #[serde(with = "nan_as_null")]
    pub intensity: f64,
    pub converged: bool,
    /// `None` for nodes excluded from interpolation.
    pub branch: Option<usize>,
    pub iterations: usize,
    /// Flat index of the node whose optimum seeded this one.
    pub warm_start_from: Option<usize>,
    pub error: Option<String>,
}

/// Costs of failed nodes are NaN; JSON has no NaN, so they travel as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl SheetEntry {
    /// A node is usable when its optimizer returned a finite optimum,
    /// whether or not it met the convergence tolerances.
    pub fn is_valid(&self) -> bool {
        self.b.is_some() && self.total.is_finite()
    }
}

/// Optimal controls over a sweep grid, with branch labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSheet {
    pub format_version: u32,
    pub grid: SweepGrid,
    /// One entry per node, in row-major order.
    pub entries: Vec<SheetEntry>,
    pub b_bounds: Vec<Interval>,
    /// Largest ‖Δb‖∞ between adjacent nodes of one branch.
    pub continuity_threshold: f64,
    #[serde(default)]
    pub metric_scale: Option<Vec<f64>>,
    pub forward_propagations: u64,
}

impl SolutionSheet {
    /// Builds a sheet from externally computed entries and labels branches.
    /// Entries must be in row-major order.
    pub fn from_entries(
        grid: SweepGrid,
        mut entries: Vec<SheetEntry>,
        b_bounds: Vec<Interval>,
        continuity_threshold: Option<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if entries.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count(),
                got: entries.len(),
            });
        }
        let threshold = assign_branches(&grid, &mut entries, continuity_threshold);
        Ok(Self {
            format_version: SHEET_FORMAT_VERSION,
            grid,
            entries,
            b_bounds,
            continuity_threshold: threshold,
            metric_scale: None,
            forward_propagations: 0,
        })
    }

    pub fn failed_nodes(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_valid()).count()
    }

    /// Usable nodes whose optimizer stopped without meeting its tolerances.
    pub fn unconverged_nodes(&self) -> usize {
        self.entries.iter().filter(|e| e.is_valid() && !e.converged).count()
    }

    pub fn branch_count(&self) -> usize {
        self.entries.iter().filter_map(|e| e.branch).max().map_or(0, |b| b + 1)
    }

    /// Largest ‖Δb‖∞ between index-adjacent nodes sharing a branch.
    pub fn max_branch_jump(&self) -> f64 {
        adjacent_pairs(&self.grid)
            .filter_map(|(i, j)| {
                let (a, b) = (&self.entries[i], &self.entries[j]);
                match (a.branch, b.branch, &a.b, &b.b) {
                    (Some(x), Some(y), Some(u), Some(v)) if x == y => Some(gap(u, v)),
                    _ => None,
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Settings shared by every node of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub time_grid: TimeGrid,
    pub weights: CostWeights,
    pub optimizer: OptSettings,
    pub b_init: ControlParams,
    /// Seed each node from the nearest solved node instead of `b_init`.
    pub warm_start: bool,
    /// Overrides the default threshold of 10× the median neighbour gap.
    pub continuity_threshold: Option<f64>,
}

fn gap(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Pairs (i, j), i < j, of nodes differing by one in exactly one index.
fn adjacent_pairs(grid: &SweepGrid) -> impl Iterator<Item = (usize, usize)> + '_ {
    let shape = grid.shape();
    (0..grid.node_count()).flat_map(move |i| {
        let idx = grid.unravel(i);
        let mut pairs = Vec::new();
        for (k, &len) in shape.iter().enumerate() {
            if idx[k] + 1 < len {
                let mut n = idx.clone();
                n[k] += 1;
                pairs.push((i, grid.ravel(&n)));
            }
        }
        pairs
    })
}

/// Labels connected components of the "adjacent and within threshold"
/// graph over valid nodes. Returns the threshold used.
fn assign_branches(grid: &SweepGrid, entries: &mut [SheetEntry], threshold: Option<f64>) -> f64 {
    let edges: Vec<(usize, usize, f64)> = adjacent_pairs(grid)
        .filter_map(|(i, j)| match (&entries[i], &entries[j]) {
            (a, b) if a.is_valid() && b.is_valid() => Some((i, j, gap(a.b.as_ref()?, b.b.as_ref()?))),
            _ => None,
        })
        .collect();
    let threshold = threshold.unwrap_or_else(|| {
        let mut gaps: Vec<f64> = edges.iter().map(|e| e.2).collect();
        if gaps.is_empty() {
            // Nothing to connect; keep the value finite so it serializes.
            return 0.0;
        }
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len();
        let median = if n % 2 == 1 {
            gaps[n / 2]
        } else {
            0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
        };
        10.0 * median
    });

    let mut parent: Vec<usize> = (0..entries.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j, g) in &edges {
        if g <= threshold {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut labels: Vec<Option<usize>> = vec![None; entries.len()];
    let mut next = 0;
    for (i, entry) in entries.iter_mut().enumerate() {
        if !entry.is_valid() {
            entry.branch = None;
            continue;
        }
        let root = find(&mut parent, i);
        let id = *labels[root].get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        entry.branch = Some(id);
    }
    threshold
}

/// Nearest (index-space L1) solved node; ties go to the lowest flat index.
fn nearest_solved(entries: &[SheetEntry], idx: &[usize]) -> Option<usize> {
    entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_valid())
        .map(|(j, e)| {
            let d: usize = e.index.iter().zip(idx).map(|(a, b)| a.abs_diff(*b)).sum();
            (d, j)
        })
        .min()
        .map(|(_, j)| j)
}

/// Solves every node of `grid` in row-major order. Each node runs a
/// multistart; with warm starts enabled its first start is the optimum of
/// the nearest solved node. Nodes that fail are kept but flagged. Fails only
/// when more than half of the nodes fail.
pub fn sweep(
    model: &QuantumModel,
    grid: &SweepGrid,
    settings: &SweepSettings,
    counter: &PropagationCounter,
) -> Result<SolutionSheet> {
    grid.validate()?;
    settings.optimizer.validate(settings.b_init.len())?;
    let map = model.scale_map();
    if grid.s_axes.len() != map.s_bounds.len() || grid.c_axes.len() != map.c_bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: map.s_bounds.len() + map.c_bounds.len(),
            got: grid.ndim(),
        });
    }
    let start_count = counter.forward();
    let mut entries: Vec<SheetEntry> = Vec::with_capacity(grid.node_count());

    for flat in 0..grid.node_count() {
        let index = grid.unravel(flat);
        let (s, c) = grid.coordinates(&index);
        let warm = settings
            .warm_start
            .then(|| nearest_solved(&entries, &index))
            .flatten();
        let b_init = match warm.and_then(|j| entries[j].b.as_ref()) {
            Some(b) => ControlParams::from_flat(b)?,
            None => settings.b_init.clone(),
        };

        let outcome = ScaleVector::new(s.clone())
            .and_then(|sv| map_scale(model, &sv, &c))
            .and_then(|params| {
                let objective = Objective::new(model, params, settings.time_grid, settings.weights)
                    .with_counter(counter.clone());
                multistart(&objective, &b_init, &settings.optimizer)
            });

        let entry = match outcome {
            Ok(r) => SheetEntry {
                index,
                s,
                c,
                b: Some(r.b_opt.to_flat()),
                total: r.cost.total,
                deviation: r.cost.deviation,
                intensity: r.cost.intensity,
                converged: r.converged,
                branch: None,
                iterations: r.iterations,
                warm_start_from: warm,
                error: None,
            },
            Err(e) => SheetEntry {
                index,
                s,
                c,
                b: None,
                total: f64::NAN,
                deviation: f64::NAN,
                intensity: f64::NAN,
                converged: false,
                branch: None,
                iterations: 0,
                warm_start_from: warm,
                error: Some(e.to_string()),
            },
        };
        entries.push(entry);
    }

    let failed = entries.iter().filter(|e| !e.is_valid()).count();
    if 2 * failed > entries.len() {
        return Err(Error::SweepFailed {
            failed,
            total: entries.len(),
        });
    }
    let mut sheet = SolutionSheet::from_entries(
        grid.clone(),
        entries,
        settings.optimizer.b_bounds.clone(),
        settings.continuity_threshold,
    )?;
    sheet.forward_propagations = counter.forward() - start_count;
    Ok(sheet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(index: Vec<usize>, s: f64, b: Option<Vec<f64>>, converged: bool) -> SheetEntry {
        SheetEntry {
            index,
            s: vec![s],
            c: vec![],
            b,
            total: 0.0,
            deviation: 0.0,
            intensity: 0.0,
            converged,
            branch: None,
            iterations: 0,
            warm_start_from: None,
            error: None,
        }
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = SweepGrid::new(vec![vec![0.0, 1.0, 2.0]], vec![vec![5.0, 6.0]]).unwrap();
        assert_eq!(g.node_count(), 6);
        for i in 0..6 {
            assert_eq!(g.ravel(&g.unravel(i)), i);
        }
        assert_eq!(g.unravel(3), vec![1, 1]);
        assert_eq!(g.coordinates(&[2, 0]), (vec![2.0], vec![5.0]));
        assert_eq!(adjacent_pairs(&g).count(), 7);
    }

    #[test]
    fn grid_validation() {
        assert!(SweepGrid::new(vec![], vec![]).is_err());
        assert!(SweepGrid::new(vec![vec![1.0, 1.0]], vec![]).is_err());
        assert!(SweepGrid::new(vec![vec![0.0, f64::NAN]], vec![]).is_err());
        assert!(SweepGrid::new(vec![vec![1.0]], vec![]).is_ok());
    }

    #[test]
    fn jump_splits_branch_and_failures_are_excluded() {
        let g = SweepGrid::new(vec![vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]], vec![]).unwrap();
        let bs = [0.0, 0.1, 0.2, 5.0, 5.1, 5.2];
        let mut entries: Vec<_> = bs
            .iter()
            .enumerate()
            .map(|(i, &b)| entry(vec![i], i as f64, Some(vec![b]), true))
            .collect();
        let sheet = SolutionSheet::from_entries(g.clone(), entries.clone(), vec![], None).unwrap();
        let ids: Vec<_> = sheet.entries.iter().map(|e| e.branch).collect();
        assert_eq!(ids, vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]);
        assert!(sheet.max_branch_jump() <= sheet.continuity_threshold);
        assert_eq!(sheet.branch_count(), 2);

        entries[1].b = None;
        entries[1].converged = false;
        let sheet = SolutionSheet::from_entries(g, entries, vec![], None).unwrap();
        let ids: Vec<_> = sheet.entries.iter().map(|e| e.branch).collect();
        assert_eq!(ids, vec![Some(0), None, Some(1), Some(2), Some(2), Some(2)]);
        assert_eq!(sheet.failed_nodes(), 1);
    }

    #[test]
    fn nearest_solved_prefers_lowest_index_on_ties() {
        let entries = vec![
            entry(vec![0], 0.0, Some(vec![1.0]), true),
            entry(vec![1], 1.0, None, false),
        ];
        assert_eq!(nearest_solved(&entries, &[2]), Some(0));
        assert_eq!(nearest_solved(&[], &[2]), None);
    }
}
