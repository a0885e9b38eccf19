//! Hop costs of the noise-flow-noise splitting and the resulting
//! time-dependent edge weights.
//!
//! One step `k -> k+1` of the virtual walker is: jump within slice `k`
//! from `i` to some `l` (pre-hop, variance share `alpha`), follow `l`'s
//! trajectory to slice `k+1`, jump within slice `k+1` from `l` to `j`
//! (post-hop, share `1 - alpha`). The intermediate `l` must be present at
//! both slices.
//!
//! Costs are in length^2 / time.

use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct HopCostModel<'a> {
    ensemble: &'a TrajectoryEnsemble,
    alpha: f64,
}

/// A minimizing intermediate label and the cost it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub via: usize,
    pub cost: f64,
}

/// A label sequence through consecutive slices with its cost breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Slice of `nodes[0]`.
    pub start_slice: usize,
    pub nodes: Vec<usize>,
    /// Intermediate label chosen on each step.
    pub via: Vec<usize>,
    pub step_costs: Vec<f64>,
    pub total: f64,
}

impl PathRecord {
    pub fn end_slice(&self) -> usize {
        self.start_slice + self.nodes.len() - 1
    }
}

impl<'a> HopCostModel<'a> {
    pub fn new(ensemble: &'a TrajectoryEnsemble, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { ensemble, alpha })
    }

    pub fn ensemble(&self) -> &'a TrajectoryEnsemble {
        self.ensemble
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub(crate) fn pre_denominator(&self, k: usize) -> f64 {
        2.0 * self.alpha * self.ensemble.grid().tau(k)
    }

    #[inline]
    pub(crate) fn post_denominator(&self, k: usize) -> f64 {
        2.0 * (1.0 - self.alpha) * self.ensemble.grid().tau(k)
    }

    /// Pre-hop on step `k`, both labels assumed present at slice `k`.
    #[inline]
    pub(crate) fn pre_unchecked(&self, k: usize, i: usize, l: usize) -> f64 {
        let e = self.ensemble;
        e.geometry().sq_dist(e.position_unchecked(i, k), e.position_unchecked(l, k)) / self.pre_denominator(k)
    }

    /// Post-hop on step `k` (positions at slice `k + 1`).
    #[inline]
    pub(crate) fn post_unchecked(&self, k: usize, l: usize, j: usize) -> f64 {
        let e = self.ensemble;
        e.geometry().sq_dist(e.position_unchecked(j, k + 1), e.position_unchecked(l, k + 1))
            / self.post_denominator(k)
    }

    fn check_step(&self, k: usize) -> Result<()> {
        if k >= self.ensemble.steps() {
            return Err(Error::OutOfRange(format!("step {k} >= K = {}", self.ensemble.steps())));
        }
        Ok(())
    }

    fn check_present(&self, label: usize, slice: usize) -> Result<()> {
        if label >= self.ensemble.len() {
            return Err(Error::OutOfRange(format!("label index {label}")));
        }
        if !self.ensemble.is_present(label, slice) {
            return Err(Error::Absent { label, slice });
        }
        Ok(())
    }

    /// `|x_k(l) - x_k(i)|^2 / (2 alpha tau_k)`.
    pub fn pre_hop_cost(&self, k: usize, i: usize, l: usize) -> Result<f64> {
        if k > self.ensemble.steps() {
            return Err(Error::OutOfRange(format!("slice {k}")));
        }
        self.check_present(i, k)?;
        self.check_present(l, k)?;
        // the last slice has no outgoing step; use the incoming step length
        let step = k.min(self.ensemble.steps() - 1);
        let e = self.ensemble;
        Ok(e.geometry().sq_dist(e.position_unchecked(i, k), e.position_unchecked(l, k))
            / (2.0 * self.alpha * e.grid().tau(step)))
    }

    /// `|x_{k+1}(j) - x_{k+1}(l)|^2 / (2 (1 - alpha) tau_k)`, addressed by the
    /// arrival slice `k + 1`.
    pub fn post_hop_cost(&self, slice: usize, l: usize, j: usize) -> Result<f64> {
        if slice == 0 || slice > self.ensemble.steps() {
            return Err(Error::OutOfRange(format!("arrival slice {slice}")));
        }
        self.check_present(l, slice)?;
        self.check_present(j, slice)?;
        Ok(self.post_unchecked(slice - 1, l, j))
    }

    /// Edge weight `w_k(i, j) = min_l pre(k, i, l) + post(k, l, j)` with the
    /// lowest minimizing `l`.
    ///
    /// Fails with [`Error::Degenerate`] when no trajectory spans the step,
    /// which signals that the step must be skipped.
    pub fn step_cost(&self, k: usize, i: usize, j: usize) -> Result<Hop> {
        self.check_step(k)?;
        self.check_present(i, k)?;
        self.check_present(j, k + 1)?;
        let fp = self.ensemble.flow_pairs(k)?;
        if fp.is_empty() {
            return Err(Error::Degenerate(format!("no trajectory spans step {k}; skip it")));
        }
        Ok(self.min_over(k, i, j, &fp))
    }

    #[inline]
    pub(crate) fn min_over(&self, k: usize, i: usize, j: usize, flow_pairs: &[usize]) -> Hop {
        let mut best = Hop { via: usize::MAX, cost: f64::INFINITY };
        for &l in flow_pairs {
            let c = self.pre_unchecked(k, i, l) + self.post_unchecked(k, l, j);
            if c < best.cost {
                best = Hop { via: l, cost: c };
            }
        }
        best
    }

    /// Cost of a label sequence `i_0 .. i_K` starting at slice 0.
    pub fn path_cost(&self, nodes: &[usize]) -> Result<PathRecord> {
        self.path_cost_from(0, nodes)
    }

    /// Cost of a label sequence whose first node sits at `start_slice`.
    pub fn path_cost_from(&self, start_slice: usize, nodes: &[usize]) -> Result<PathRecord> {
        if nodes.is_empty() || start_slice + nodes.len() - 1 > self.ensemble.steps() {
            return Err(Error::OutOfRange(format!(
                "path of {} nodes from slice {start_slice} exceeds K = {}",
                nodes.len(),
                self.ensemble.steps()
            )));
        }
        self.check_present(nodes[0], start_slice)?;
        let mut via = Vec::with_capacity(nodes.len() - 1);
        let mut step_costs = Vec::with_capacity(nodes.len() - 1);
        let mut total = 0.0;
        for (s, w) in nodes.windows(2).enumerate() {
            let hop = self.step_cost(start_slice + s, w[0], w[1])?;
            via.push(hop.via);
            step_costs.push(hop.cost);
            total += hop.cost;
        }
        Ok(PathRecord { start_slice, nodes: nodes.to_vec(), via, step_costs, total })
    }
}
