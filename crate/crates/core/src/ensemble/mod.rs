//! Trajectory ensembles: positions of `I` floaters sampled on a shared,
//! possibly non-uniform time grid, with missing samples allowed.
//!
//! Trajectories are addressed by a dense index `0..I` (ordered by their
//! external id); the external ids are kept for I/O.

mod io;

pub(crate) use io::fmt_f64;
pub use io::{load_csv, load_json, save_csv, save_json, Sidecar};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Spatial dimension plus optional periods, one per coordinate.
///
/// A periodic coordinate with period `p` lives in `[0, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    periods: Vec<Option<f64>>,
}

impl Geometry {
    pub fn new(periods: Vec<Option<f64>>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::Validation("geometry needs at least one dimension".into()));
        }
        for p in periods.iter().flatten() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::Validation(format!("period must be positive, got {p}")));
            }
        }
        Ok(Self { periods })
    }

    /// Plain Euclidean space of the given dimension.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(vec![None; dim])
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn is_periodic(&self) -> bool {
        self.periods.iter().any(Option::is_some)
    }

    /// Map every periodic coordinate into `[0, p)`.
    pub fn wrap(&self, x: &mut [f64]) {
        for (xi, p) in x.iter_mut().zip(&self.periods) {
            if let Some(p) = *p {
                *xi = wrap_coord(*xi, p);
            }
        }
    }

    /// Squared minimum-image displacement between two points.
    pub fn squared_displacement(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        for v in [a, b] {
            if v.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
            }
        }
        Ok(self.sq_dist(a, b))
    }

    /// Unchecked variant of [`Geometry::squared_displacement`] for hot loops.
    #[inline]
    pub(crate) fn sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((x, y), p) in a.iter().zip(b).zip(&self.periods) {
            let mut d = (x - y).abs();
            if let Some(p) = *p {
                d %= p;
                d = d.min(p - d);
            }
            acc += d * d;
        }
        acc
    }
}

#[inline]
pub(crate) fn wrap_coord(x: f64, p: f64) -> f64 {
    let w = x.rem_euclid(p);
    // rem_euclid can round up to exactly p for tiny negative inputs
    if w >= p {
        0.0
    } else {
        w
    }
}

/// Strictly increasing sampling times `t_0 < ... < t_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Format("time grid needs at least two times".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Format("time grid contains non-finite values".into()));
        }
        if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Format(format!(
                "times must be strictly increasing (t[{}] = {} >= t[{}] = {})",
                w,
                times[w],
                w + 1,
                times[w + 1]
            )));
        }
        Ok(Self { times })
    }

    /// `t_k = t0 + k * tau`, `k = 0..=steps`.
    pub fn uniform(t0: f64, tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Parameter(format!("time step must be positive, got {tau}")));
        }
        Self::new((0..=steps).map(|k| t0 + k as f64 * tau).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Step length `tau_k = t_{k+1} - t_k`.
    pub fn tau(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn mean_tau(&self) -> f64 {
        (self.times[self.steps()] - self.times[0]) / self.steps() as f64
    }

    /// Backward time `-t_K < ... < -t_0`; step lengths are reproduced
    /// bit-exactly in reverse order.
    pub fn reversed(&self) -> Self {
        Self { times: self.times.iter().rev().map(|t| -t).collect() }
    }
}

/// `I` trajectories on a shared time grid with optional missing samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    geometry: Geometry,
    grid: TimeGrid,
    ids: Vec<u64>,
    // slice-major: coords[(k * I + i) * dim ..][..dim]
    coords: Vec<f64>,
    present: Vec<bool>,
}

impl TrajectoryEnsemble {
    /// Build an ensemble without missing data from `trajectories[i][k]`.
    pub fn from_full(
        geometry: Geometry,
        grid: TimeGrid,
        trajectories: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let mut b = EnsembleBuilder::new(geometry, grid);
        for (i, traj) in trajectories.iter().enumerate() {
            for (k, x) in traj.iter().enumerate() {
                b.push(i as u64 + 1, k, x.clone())?;
            }
        }
        b.build()
    }

    pub fn builder(geometry: Geometry, grid: TimeGrid) -> EnsembleBuilder {
        EnsembleBuilder::new(geometry, grid)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    /// Number of trajectories `I`.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    #[inline]
    pub fn is_present(&self, i: usize, k: usize) -> bool {
        self.present[k * self.len() + i]
    }

    #[inline]
    pub fn position(&self, i: usize, k: usize) -> Option<&[f64]> {
        if self.is_present(i, k) {
            Some(self.position_unchecked(i, k))
        } else {
            None
        }
    }

    #[inline]
    pub(crate) fn position_unchecked(&self, i: usize, k: usize) -> &[f64] {
        let d = self.dim();
        let at = (k * self.len() + i) * d;
        &self.coords[at..at + d]
    }

    /// The presence set at slice `k`, in index order.
    pub fn presence(&self, k: usize) -> Result<Vec<usize>> {
        if k > self.steps() {
            return Err(Error::OutOfRange(format!("slice {k} > K = {}", self.steps())));
        }
        Ok((0..self.len()).filter(|&i| self.is_present(i, k)).collect())
    }

    /// Trajectories present at both `k` and `k + 1`; they alone carry
    /// information about the flow over that step. An empty result means
    /// the step has to be skipped.
    pub fn flow_pairs(&self, k: usize) -> Result<Vec<usize>> {
        if k >= self.steps() {
            return Err(Error::OutOfRange(format!("step {k} >= K = {}", self.steps())));
        }
        Ok((0..self.len())
            .filter(|&i| self.is_present(i, k) && self.is_present(i, k + 1))
            .collect())
    }

    pub fn first_present(&self, i: usize) -> Option<usize> {
        (0..=self.steps()).find(|&k| self.is_present(i, k))
    }

    pub fn last_present(&self, i: usize) -> Option<usize> {
        (0..=self.steps()).rev().find(|&k| self.is_present(i, k))
    }

    pub fn has_missing(&self) -> bool {
        self.present.iter().any(|p| !p)
    }

    /// The ensemble with slices in reverse order (time runs backwards).
    pub fn reversed(&self) -> Self {
        let n = self.len();
        let d = self.dim();
        let slices = self.steps() + 1;
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut present = Vec::with_capacity(self.present.len());
        for k in (0..slices).rev() {
            coords.extend_from_slice(&self.coords[k * n * d..(k + 1) * n * d]);
            present.extend_from_slice(&self.present[k * n..(k + 1) * n]);
        }
        Self {
            geometry: self.geometry.clone(),
            grid: self.grid.reversed(),
            ids: self.ids.clone(),
            coords,
            present,
        }
    }

    /// The first `steps + 1` slices.
    pub fn truncated(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.steps() {
            return Err(Error::OutOfRange(format!(
                "cannot truncate to {steps} steps (K = {})",
                self.steps()
            )));
        }
        let n = self.len();
        let grid = TimeGrid::new(self.grid.times[..=steps].to_vec())?;
        let out = Self {
            geometry: self.geometry.clone(),
            grid,
            ids: self.ids.clone(),
            coords: self.coords[..(steps + 1) * n * self.dim()].to_vec(),
            present: self.present[..(steps + 1) * n].to_vec(),
        };
        out.check_slices()?;
        Ok(out)
    }

    /// Copy with the given samples removed, for tests and experiments on
    /// missing data.
    pub fn with_removed(&self, removed: &[(usize, usize)]) -> Result<Self> {
        let mut out = self.clone();
        for &(i, k) in removed {
            if i >= self.len() || k > self.steps() {
                return Err(Error::OutOfRange(format!("sample ({i}, {k})")));
            }
            out.present[k * self.len() + i] = false;
            let d = self.dim();
            let at = (k * self.len() + i) * d;
            out.coords[at..at + d].iter_mut().for_each(|c| *c = 0.0);
        }
        out.check_slices()?;
        Ok(out)
    }

    /// SHA-256 of the canonical content, truncated to 64 bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        for p in self.geometry.periods() {
            h.update(p.unwrap_or(0.0).to_le_bytes());
        }
        for t in self.grid.times() {
            h.update(t.to_le_bytes());
        }
        for id in &self.ids {
            h.update(id.to_le_bytes());
        }
        for (c, chunk) in self.coords.chunks(self.dim()).enumerate() {
            if self.present[c] {
                h.update([1u8]);
                for x in chunk {
                    h.update(x.to_le_bytes());
                }
            } else {
                h.update([0u8]);
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    fn check_slices(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Validation("ensemble has no trajectories".into()));
        }
        for k in 0..=self.steps() {
            if !(0..self.len()).any(|i| self.is_present(i, k)) {
                return Err(Error::Validation(format!("no trajectory present at slice {k}")));
            }
        }
        Ok(())
    }
}

/// Incremental construction from `(id, time_index, coords)` samples.
#[derive(Debug)]
pub struct EnsembleBuilder {
    geometry: Geometry,
    grid: TimeGrid,
    samples: std::collections::BTreeMap<(u64, usize), Vec<f64>>,
}

impl EnsembleBuilder {
    pub fn new(geometry: Geometry, grid: TimeGrid) -> Self {
        Self { geometry, grid, samples: Default::default() }
    }

    pub fn push(&mut self, id: u64, time_index: usize, mut x: Vec<f64>) -> Result<()> {
        if x.len() != self.geometry.dim() {
            return Err(Error::DimensionMismatch { expected: self.geometry.dim(), got: x.len() });
        }
        if time_index > self.grid.steps() {
            return Err(Error::OutOfRange(format!(
                "time index {time_index} > K = {}",
                self.grid.steps()
            )));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite position for trajectory {id} at time index {time_index}"
            )));
        }
        self.geometry.wrap(&mut x);
        if self.samples.insert((id, time_index), x).is_some() {
            return Err(Error::Duplicate { id, time_index });
        }
        Ok(())
    }

    pub fn build(self) -> Result<TrajectoryEnsemble> {
        let mut ids: Vec<u64> = self.samples.keys().map(|&(id, _)| id).collect();
        ids.dedup();
        let n = ids.len();
        let d = self.geometry.dim();
        let slices = self.grid.steps() + 1;
        let mut coords = vec![0.0; n * slices * d];
        let mut present = vec![false; n * slices];
        let mut i = 0;
        let mut last = None;
        for ((id, k), x) in self.samples {
            if let Some(prev) = last {
                if prev != id {
                    i += 1;
                }
            }
            last = Some(id);
            let c = k * n + i;
            present[c] = true;
            coords[c * d..(c + 1) * d].copy_from_slice(&x);
        }
        let e = TrajectoryEnsemble { geometry: self.geometry, grid: self.grid, ids, coords, present };
        e.check_slices()?;
        Ok(e)
    }
}
