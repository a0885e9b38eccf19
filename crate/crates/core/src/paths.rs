//! Shortest paths in the time-layered hop graph.
//!
//! A walker that sits on label `i` at slice `k` pays `w_k(i, j)` to sit on
//! `j` at slice `k + 1`. Staying costs nothing. The one-way rate
//! `nu_K(s -> j)` is the cheapest way from `s` at its first slice to `j`
//! at its last slice.
//!
//! Three solvers are provided. `Dense` splits each step into two
//! relaxation sweeps and never forms `w_k`; for all pairs it becomes a
//! pair of min-plus matrix products per step. `Algorithm1` is the
//! reached-set procedure with max-distance-first processing and explicit
//! edge weights. [`oracle::oracle_rates`] enumerates every path and is
//! meant for tests.
//!
//! The source itself always has rate 0, also when its trajectory has gaps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::rates::RateMatrix;
use crate::transition::{HopCostModel, PathRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Dense,
    Algorithm1,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Dense => "dense",
            Solver::Algorithm1 => "algorithm1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Solver::Dense),
            "algorithm1" => Ok(Solver::Algorithm1),
            _ => Err(Error::Parameter(format!("unknown solver `{s}` (dense, algorithm1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    pub solver: Solver,
    /// Skip intermediates that cannot beat the current bound. Exact; only
    /// affects the single-source dense sweep.
    pub prune: bool,
    /// Thread count for all-pairs runs; 0 uses the global pool.
    pub workers: usize,
}

impl SolveOptions {
    pub fn new(solver: Solver) -> Self {
        Self { solver, ..Self::default() }
    }
}

/// Rates `nu_K(source -> j)` for all `j`; `+inf` where unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector {
    pub source: usize,
    pub dist: Vec<f64>,
}

/// Optimal paths from one source. `paths[j]` is `None` when `j` is
/// unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub rates: RateVector,
    pub paths: Vec<Option<PathRecord>>,
}

/// Per-slice index sets shared by all solvers.
pub(crate) struct Layers {
    pub present: Vec<Vec<usize>>,
    pub flow: Vec<Vec<usize>>,
    /// Labels whose last slice is `k`.
    pub ending: Vec<Vec<usize>>,
    pub first: Vec<usize>,
}

impl Layers {
    pub fn new(e: &TrajectoryEnsemble) -> Result<Self> {
        let k_max = e.steps();
        let present = (0..=k_max).map(|k| e.presence(k)).collect::<Result<Vec<_>>>()?;
        let flow = (0..k_max).map(|k| e.flow_pairs(k)).collect::<Result<Vec<_>>>()?;
        let mut ending = vec![Vec::new(); k_max + 1];
        let mut first = Vec::with_capacity(e.len());
        for i in 0..e.len() {
            let (Some(f), Some(l)) = (e.first_present(i), e.last_present(i)) else {
                return Err(Error::Validation(format!("trajectory index {i} is never present")));
            };
            first.push(f);
            ending[l].push(i);
        }
        Ok(Self { present, flow, ending, first })
    }

    fn steps(&self) -> usize {
        self.flow.len()
    }
}

fn check_source(m: &HopCostModel, s: usize) -> Result<()> {
    if s >= m.ensemble().len() {
        return Err(Error::OutOfRange(format!("source index {s} >= I = {}", m.ensemble().len())));
    }
    Ok(())
}

pub fn single_source_rates(m: &HopCostModel, s: usize, solver: Solver) -> Result<RateVector> {
    single_source_rates_with(m, s, &SolveOptions::new(solver))
}

pub fn single_source_rates_with(m: &HopCostModel, s: usize, opts: &SolveOptions) -> Result<RateVector> {
    check_source(m, s)?;
    let layers = Layers::new(m.ensemble())?;
    let dist = match opts.solver {
        Solver::Dense => dense_source(m, &layers, s, opts.prune),
        Solver::Algorithm1 => reached_set(m, &layers, s, false).0,
    };
    Ok(RateVector { source: s, dist })
}

/// Rates and one optimal path per reachable target. Ties between
/// predecessors go to the lowest label, where staying counts as the
/// label itself.
pub fn single_source_paths(m: &HopCostModel, s: usize) -> Result<PathSet> {
    check_source(m, s)?;
    let layers = Layers::new(m.ensemble())?;
    let (dist, pred) = reached_set(m, &layers, s, true);
    let start = layers.first[s];
    let e = m.ensemble();
    let mut paths = Vec::with_capacity(e.len());
    for (j, d) in dist.iter().enumerate() {
        if !d.is_finite() {
            paths.push(None);
            continue;
        }
        if j == s {
            paths.push(Some(m.path_cost_from(start, &[s])?));
            continue;
        }
        let end = e.last_present(j).expect("present somewhere");
        let mut nodes = vec![j; end - start + 1];
        for k in (start + 1..=end).rev() {
            let p = pred[k][nodes[k - start]];
            debug_assert_ne!(p, NONE);
            nodes[k - 1 - start] = p;
        }
        debug_assert_eq!(nodes[0], s);
        paths.push(Some(m.path_cost_from(start, &nodes)?));
    }
    Ok(PathSet { rates: RateVector { source: s, dist }, paths })
}

/// Full `I x I` rate matrix. Row order and values do not depend on the
/// worker count.
pub fn all_pairs_rates(m: &HopCostModel, opts: &SolveOptions) -> Result<RateMatrix> {
    let e = m.ensemble();
    let layers = Layers::new(e)?;
    let n = e.len();
    let values = with_workers(opts.workers, || match opts.solver {
        Solver::Dense => all_pairs_dense(m, &layers),
        Solver::Algorithm1 => {
            let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| reached_set(m, &layers, s, false).0).collect();
            rows.concat()
        }
    })?;
    RateMatrix::new(n, values, m.alpha(), e.steps(), e.checksum())
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

const NONE: usize = usize::MAX;

fn dense_source(m: &HopCostModel, layers: &Layers, s: usize, prune: bool) -> Vec<f64> {
    let n = m.ensemble().len();
    let mut result = vec![f64::INFINITY; n];
    let mut active = vec![f64::INFINITY; n];
    let mut next = vec![f64::INFINITY; n];
    let mut reach = Vec::new();
    let start = layers.first[s];
    active[s] = 0.0;
    settle(&mut result, &active, &layers.ending[start]);
    for k in start..layers.steps() {
        let fp = &layers.flow[k];
        next.fill(f64::INFINITY);
        if !fp.is_empty() {
            reach.clear();
            let live: Vec<usize> = layers.present[k].iter().copied().filter(|&i| active[i] < f64::INFINITY).collect();
            for &l in fp {
                let mut r = f64::INFINITY;
                for &i in &live {
                    let v = active[i] + m.pre_unchecked(k, i, l);
                    if v < r {
                        r = v;
                    }
                }
                reach.push(r);
            }
            for &j in &layers.present[k + 1] {
                let mut best = f64::INFINITY;
                for (&l, &r) in fp.iter().zip(&reach) {
                    if prune && r >= best {
                        continue;
                    }
                    let v = r + m.post_unchecked(k, l, j);
                    if v < best {
                        best = v;
                    }
                }
                next[j] = best;
            }
        }
        std::mem::swap(&mut active, &mut next);
        settle(&mut result, &active, &layers.ending[k + 1]);
    }
    result[s] = 0.0;
    result
}

fn settle(result: &mut [f64], active: &[f64], ending: &[usize]) {
    for &j in ending {
        result[j] = active[j];
    }
}

/// Reached-set relaxation. Nodes of the current reached set are processed
/// in order of decreasing distance, so a node still waiting cannot be
/// improved within the same step and every edge leaves from a start-of-step
/// value. The reached set accumulates: a reached label stays reached for
/// as long as its trajectory continues.
///
/// With `track`, also returns per-slice predecessors.
fn reached_set(m: &HopCostModel, layers: &Layers, s: usize, track: bool) -> (Vec<f64>, Vec<Vec<usize>>) {
    let e = m.ensemble();
    let n = e.len();
    let steps = layers.steps();
    let mut result = vec![f64::INFINITY; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = if track { vec![Vec::new(); steps + 1] } else { Vec::new() };
    let start = layers.first[s];
    dist[s] = 0.0;
    let mut reached = vec![s];
    settle(&mut result, &dist, &layers.ending[start]);
    let mut pre_row = Vec::new();
    for k in start..steps {
        let fp = &layers.flow[k];
        let targets = &layers.present[k + 1];
        let mut p = if track { vec![NONE; n] } else { Vec::new() };
        if fp.is_empty() {
            dist.fill(f64::INFINITY);
            reached.clear();
        } else {
            if track {
                for &j in fp {
                    if dist[j] < f64::INFINITY {
                        p[j] = j;
                    }
                }
            }
            reached.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
            for &v in &reached {
                let dv = dist[v];
                pre_row.clear();
                pre_row.extend(fp.iter().map(|&l| m.pre_unchecked(k, v, l)));
                for &j in targets {
                    let mut w = f64::INFINITY;
                    for (&l, &a) in fp.iter().zip(&pre_row) {
                        let c = a + m.post_unchecked(k, l, j);
                        if c < w {
                            w = c;
                        }
                    }
                    let cand = dv + w;
                    if cand < dist[j] {
                        dist[j] = cand;
                        if track {
                            p[j] = v;
                        }
                    } else if track && cand == dist[j] && v < p[j] {
                        p[j] = v;
                    }
                }
            }
            for &i in &layers.present[k] {
                if !e.is_present(i, k + 1) {
                    dist[i] = f64::INFINITY;
                }
            }
            reached = targets.iter().copied().filter(|&j| dist[j] < f64::INFINITY).collect();
        }
        if track {
            pred[k + 1] = p;
        }
        settle(&mut result, &dist, &layers.ending[k + 1]);
    }
    result[s] = 0.0;
    (result, pred)
}

/// Batched dense sweep: one row of `D` per source, two min-plus products
/// per step. Rows are bit-identical to [`dense_source`] because every
/// entry is a minimum over the same set of sums.
fn all_pairs_dense(m: &HopCostModel, layers: &Layers) -> Vec<f64> {
    let n = m.ensemble().len();
    let steps = layers.steps();
    let mut result = vec![f64::INFINITY; n * n];
    let mut d = vec![f64::INFINITY; n * n];
    let mut gathered = Vec::new();
    let mut reach = Vec::new();
    let mut fresh = Vec::new();
    for k in 0..=steps {
        for s in (0..n).filter(|&s| layers.first[s] == k) {
            d[s * n + s] = 0.0;
        }
        for &j in &layers.ending[k] {
            for s in 0..n {
                result[s * n + j] = d[s * n + j];
            }
        }
        if k == steps {
            break;
        }
        let fp = &layers.flow[k];
        let (from, to) = (&layers.present[k], &layers.present[k + 1]);
        if fp.is_empty() {
            d.fill(f64::INFINITY);
            continue;
        }
        let pre: Vec<f64> = from.iter().flat_map(|&i| fp.iter().map(move |&l| m.pre_unchecked(k, i, l))).collect();
        let post: Vec<f64> = fp.iter().flat_map(|&l| to.iter().map(move |&j| m.post_unchecked(k, l, j))).collect();

        gathered.clear();
        gathered.extend((0..n).flat_map(|s| from.iter().map(move |&i| (s, i))).map(|(s, i)| d[s * n + i]));
        reach.resize(n * fp.len(), 0.0);
        min_plus(&gathered, &pre, &mut reach, n, from.len(), fp.len());
        fresh.resize(n * to.len(), 0.0);
        min_plus(&reach, &post, &mut fresh, n, fp.len(), to.len());

        d.fill(f64::INFINITY);
        for s in 0..n {
            let row = &fresh[s * to.len()..(s + 1) * to.len()];
            for (&j, &v) in to.iter().zip(row) {
                d[s * n + j] = v;
            }
        }
    }
    for s in 0..n {
        result[s * n + s] = 0.0;
    }
    result
}

const ROW_BLOCK: usize = 32;
const MR: usize = 6;
const NR: usize = 8;

/// `c = a (x) b` in the (min, +) semiring; `a` is `rows x inner`, `b` is
/// `inner x cols`, all row-major. Vector width does not affect the result.
pub(crate) fn min_plus(a: &[f64], b: &[f64], c: &mut [f64], rows: usize, inner: usize, cols: usize) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(c.len(), rows * cols);
    if cols == 0 {
        return;
    }
    let width = Width::detect();
    c.par_chunks_mut(ROW_BLOCK * cols).enumerate().for_each(|(blk, cb)| {
        let a = &a[blk * ROW_BLOCK * inner..];
        match width {
            // SAFETY: the features were detected at runtime
            #[cfg(target_arch = "x86_64")]
            Width::Avx512 => unsafe { row_block_avx512(a, b, cb, inner, cols) },
            #[cfg(target_arch = "x86_64")]
            Width::Avx2 => unsafe { row_block_avx2(a, b, cb, inner, cols) },
            Width::Base => row_block(a, b, cb, inner, cols),
        }
    });
}

#[derive(Clone, Copy)]
enum Width {
    #[cfg(target_arch = "x86_64")]
    Avx512,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    Base,
}

impl Width {
    fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx512f") {
                return Width::Avx512;
            }
            if std::is_x86_feature_detected!("avx2") {
                return Width::Avx2;
            }
        }
        Width::Base
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn row_block_avx512(a: &[f64], b: &[f64], cb: &mut [f64], inner: usize, cols: usize) {
    row_block(a, b, cb, inner, cols)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn row_block_avx2(a: &[f64], b: &[f64], cb: &mut [f64], inner: usize, cols: usize) {
    row_block(a, b, cb, inner, cols)
}

#[inline(always)]
fn row_block(a: &[f64], b: &[f64], cb: &mut [f64], inner: usize, cols: usize) {
    cb.fill(f64::INFINITY);
    let live: Vec<usize> =
        (0..cb.len() / cols).filter(|r| a[r * inner..(r + 1) * inner].iter().any(|v| v.is_finite())).collect();
    for group in live.chunks(MR) {
        let arows: Vec<&[f64]> = group.iter().map(|&r| &a[r * inner..(r + 1) * inner]).collect();
        let mut c0 = 0;
        if group.len() == MR {
            while c0 + NR <= cols {
                let tile = micro_tile(std::array::from_fn(|q| arows[q]), b, cols, c0);
                for (q, &r) in group.iter().enumerate() {
                    cb[r * cols + c0..r * cols + c0 + NR].copy_from_slice(&tile[q]);
                }
                c0 += NR;
            }
        }
        for (q, &r) in group.iter().enumerate() {
            let crow = &mut cb[r * cols..(r + 1) * cols];
            for (t, &av) in arows[q].iter().enumerate() {
                if av == f64::INFINITY {
                    continue;
                }
                for (cv, &bv) in crow[c0..].iter_mut().zip(&b[t * cols + c0..(t + 1) * cols]) {
                    let v = av + bv;
                    *cv = if v < *cv { v } else { *cv };
                }
            }
        }
    }
}

/// `MR x NR` block of the product held in registers across the inner loop.
#[inline(always)]
fn micro_tile(a: [&[f64]; MR], b: &[f64], cols: usize, c0: usize) -> [[f64; NR]; MR] {
    let mut acc = [[f64::INFINITY; NR]; MR];
    for t in 0..a[0].len() {
        let bt: &[f64; NR] = b[t * cols + c0..t * cols + c0 + NR].try_into().unwrap();
        for q in 0..MR {
            let av = a[q][t];
            for n in 0..NR {
                let v = av + bt[n];
                acc[q][n] = if v < acc[q][n] { v } else { acc[q][n] };
            }
        }
    }
    acc
}

/// Exhaustive reference solver.
pub mod oracle {
    use super::RateVector;
    use crate::error::{Error, Result};
    use crate::transition::HopCostModel;

    pub const MAX_LABELS: usize = 8;
    pub const MAX_STEPS: usize = 5;

    /// Exact `nu_K(s -> .)` by enumerating every sequence of intermediate
    /// and arrival labels. Hop costs are recomputed here from positions.
    pub fn oracle_rates(m: &HopCostModel, s: usize) -> Result<RateVector> {
        let e = m.ensemble();
        if e.len() > MAX_LABELS || e.steps() > MAX_STEPS {
            return Err(Error::TooLarge(format!(
                "I = {}, K = {} (limits {MAX_LABELS}, {MAX_STEPS})",
                e.len(),
                e.steps()
            )));
        }
        if s >= e.len() {
            return Err(Error::OutOfRange(format!("source index {s}")));
        }
        let g = e.geometry();
        let a = m.alpha();
        // jump within `slice` on step `step`, carrying variance share `share`
        let hop = |slice: usize, step: usize, p: usize, q: usize, share: f64| -> f64 {
            let x = e.position(p, slice).unwrap();
            let y = e.position(q, slice).unwrap();
            g.squared_displacement(x, y).unwrap() / (2.0 * share * e.grid().tau(step))
        };
        let last: Vec<usize> = (0..e.len()).map(|i| e.last_present(i).unwrap()).collect();
        let mut best = vec![f64::INFINITY; e.len()];

        struct Walk<'a, F: Fn(usize, usize, usize, usize, f64) -> f64> {
            e: &'a crate::ensemble::TrajectoryEnsemble,
            hop: F,
            alpha: f64,
            last: &'a [usize],
            best: &'a mut [f64],
        }
        impl<F: Fn(usize, usize, usize, usize, f64) -> f64> Walk<'_, F> {
            fn go(&mut self, k: usize, i: usize, cost: f64) {
                if self.last[i] == k && cost < self.best[i] {
                    self.best[i] = cost;
                }
                if k == self.e.steps() {
                    return;
                }
                for l in 0..self.e.len() {
                    if !(self.e.is_present(l, k) && self.e.is_present(l, k + 1)) {
                        continue;
                    }
                    let pre = (self.hop)(k, k, i, l, self.alpha);
                    for j in 0..self.e.len() {
                        if self.e.is_present(j, k + 1) {
                            let post = (self.hop)(k + 1, k, l, j, 1.0 - self.alpha);
                            self.go(k + 1, j, cost + (pre + post));
                        }
                    }
                }
            }
        }
        let start = e.first_present(s).unwrap();
        Walk { e, hop, alpha: a, last: &last, best: &mut best }.go(start, s, 0.0);
        best[s] = 0.0;
        Ok(RateVector { source: s, dist: best })
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::oracle_rates;
    use super::*;
    use crate::ensemble::{Geometry, TimeGrid};
    use proptest::prelude::*;

    fn static_line(k: usize) -> TrajectoryEnsemble {
        let g = Geometry::euclidean(1).unwrap();
        let t = TimeGrid::uniform(0.0, 1.0, k).unwrap();
        let traj = |x: f64| vec![vec![x]; k + 1];
        TrajectoryEnsemble::from_full(g, t, &[traj(0.0), traj(0.5), traj(1.0)]).unwrap()
    }

    fn static_grid(n: usize, k: usize, tau: f64) -> TrajectoryEnsemble {
        let g = Geometry::euclidean(1).unwrap();
        let t = TimeGrid::uniform(0.0, tau, k).unwrap();
        let trajs: Vec<_> = (0..n).map(|i| vec![vec![i as f64 / (n - 1) as f64]; k + 1]).collect();
        TrajectoryEnsemble::from_full(g, t, &trajs).unwrap()
    }

    const ALL: [Solver; 2] = [Solver::Dense, Solver::Algorithm1];

    #[test]
    fn static_line_rates() {
        let e = static_line(2);
        let m = HopCostModel::new(&e, 0.5).unwrap();
        for solver in ALL {
            assert_eq!(single_source_rates(&m, 0, solver).unwrap().dist, vec![0.0, 0.25, 0.5]);
        }
        assert_eq!(oracle_rates(&m, 0).unwrap().dist, vec![0.0, 0.25, 0.5]);
        for solver in ALL {
            let r = all_pairs_rates(&m, &SolveOptions::new(solver)).unwrap();
            assert_eq!(r.values(), &[0.0, 0.25, 0.5, 0.25, 0.0, 0.25, 0.5, 0.25, 0.0]);
        }
    }

    #[test]
    fn static_line_paths() {
        let e = static_line(2);
        let m = HopCostModel::new(&e, 0.5).unwrap();
        let ps = single_source_paths(&m, 0).unwrap();
        let p = ps.paths[2].as_ref().unwrap();
        assert_eq!(p.total, 0.5);
        // every optimum costs 0.5; the lowest-label rule prefers staying at 0
        assert_eq!(p.nodes, vec![0, 0, 2]);
        let own = ps.paths[0].as_ref().unwrap();
        assert_eq!((own.nodes.as_slice(), own.total), (&[0][..], 0.0));
    }

    #[test]
    fn single_trajectory() {
        let g = Geometry::euclidean(2).unwrap();
        let t = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let e = TrajectoryEnsemble::from_full(g, t, &[vec![vec![0.1, 0.2]; 4]]).unwrap();
        let m = HopCostModel::new(&e, 0.5).unwrap();
        let r = all_pairs_rates(&m, &SolveOptions::default()).unwrap();
        assert_eq!(r.values(), &[0.0]);
        assert_eq!(single_source_paths(&m, 0).unwrap().paths[0].as_ref().unwrap().total, 0.0);
    }

    #[test]
    fn zero_flow_fine_grid_is_exact() {
        let e = static_grid(101, 10, 0.1);
        let m = HopCostModel::new(&e, 0.5).unwrap();
        let r = single_source_rates(&m, 0, Solver::Dense).unwrap();
        assert!((r.dist[100] - 0.5).abs() < 1e-12, "{}", r.dist[100]);
        // reduced analog checked by enumeration
        let small = static_grid(5, 2, 0.5);
        let ms = HopCostModel::new(&small, 0.5).unwrap();
        let o = oracle_rates(&ms, 0).unwrap();
        assert!((o.dist[4] - 1.0 / (2.0 * 1.0)).abs() < 1e-12);
        assert_eq!(o.dist, single_source_rates(&ms, 0, Solver::Dense).unwrap().dist);
    }

    #[test]
    fn pruning_is_bit_identical() {
        let e = static_grid(40, 6, 0.1);
        let m = HopCostModel::new(&e, 0.4).unwrap();
        for s in [0, 7, 39] {
            let a = single_source_rates_with(&m, s, &SolveOptions::new(Solver::Dense)).unwrap();
            let b = single_source_rates_with(&m, s, &SolveOptions { prune: true, ..SolveOptions::default() }).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_step_is_skipped() {
        let g = Geometry::euclidean(1).unwrap();
        let t = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let mut b = TrajectoryEnsemble::builder(g, t);
        b.push(1, 0, vec![0.0]).unwrap();
        b.push(2, 0, vec![0.5]).unwrap();
        b.push(3, 1, vec![0.2]).unwrap();
        b.push(3, 2, vec![0.2]).unwrap();
        let e = b.build().unwrap();
        let m = HopCostModel::new(&e, 0.5).unwrap();
        let o = oracle_rates(&m, 0).unwrap();
        // labels 0 and 1 end before any step spans the gap
        assert_eq!(o.dist, vec![0.0, f64::INFINITY, f64::INFINITY]);
        for solver in ALL {
            assert_eq!(single_source_rates(&m, 0, solver).unwrap().dist, o.dist);
        }
        // trajectory 3 starts late; its row is computed from slice 1 on
        let r = single_source_rates(&m, 2, Solver::Dense).unwrap();
        assert_eq!(r.dist, vec![f64::INFINITY, f64::INFINITY, 0.0]);
    }

    #[test]
    fn sources_with_gaps_keep_zero_diagonal() {
        let e = static_line(3).with_removed(&[(0, 1), (1, 2)]).unwrap();
        let m = HopCostModel::new(&e, 0.5).unwrap();
        for solver in ALL {
            let r = all_pairs_rates(&m, &SolveOptions::new(solver)).unwrap();
            for i in 0..3 {
                assert_eq!(r.get(i, i), 0.0);
                assert_eq!(r.row(i), oracle_rates(&m, i).unwrap().dist.as_slice());
            }
        }
    }

    #[test]
    fn errors() {
        let e = static_line(2);
        let m = HopCostModel::new(&e, 0.5).unwrap();
        assert!(single_source_rates(&m, 3, Solver::Dense).is_err());
        let big = static_grid(9, 2, 1.0);
        let mb = HopCostModel::new(&big, 0.5).unwrap();
        assert!(matches!(oracle_rates(&mb, 0), Err(Error::TooLarge(_))));
        assert!(Solver::parse("dijkstra").is_err());
    }

    #[test]
    fn min_plus_matches_naive() {
        let (r, p, q) = (37, 13, 70);
        let a: Vec<f64> = (0..r * p).map(|x| if x % 11 == 0 { f64::INFINITY } else { ((x * 7919) % 101) as f64 }).collect();
        let b: Vec<f64> = (0..p * q).map(|x| ((x * 104729) % 97) as f64 / 3.0).collect();
        let mut c = vec![0.0; r * q];
        min_plus(&a, &b, &mut c, r, p, q);
        for i in 0..r {
            for j in 0..q {
                let want = (0..p).map(|t| a[i * p + t] + b[t * q + j]).fold(f64::INFINITY, f64::min);
                assert_eq!(c[i * q + j], want);
            }
        }
    }

    /// Random 2-d instance with optional missing samples.
    fn arb_instance(max_n: usize, max_k: usize, holes: bool) -> impl Strategy<Value = (TrajectoryEnsemble, f64)> {
        (1..=max_n, 1..=max_k).prop_flat_map(move |(n, k)| {
            (
                proptest::collection::vec(0.0f64..1.0, n * (k + 1) * 2),
                proptest::collection::vec(0.1f64..1.0, k),
                proptest::collection::vec(proptest::bool::weighted(if holes { 0.2 } else { 0.0 }), n * (k + 1)),
                prop_oneof![Just(0.3), Just(0.5), Just(0.7)],
            )
                .prop_map(move |(xs, taus, gaps, alpha)| {
                    let mut times = vec![0.0];
                    for t in &taus {
                        times.push(times.last().unwrap() + t);
                    }
                    let g = Geometry::euclidean(2).unwrap();
                    let mut b = TrajectoryEnsemble::builder(g, TimeGrid::new(times).unwrap());
                    for i in 0..n {
                        for kk in 0..=k {
                            if i == 0 || !gaps[kk * n + i] {
                                let at = (kk * n + i) * 2;
                                b.push(i as u64, kk, xs[at..at + 2].to_vec()).unwrap();
                            }
                        }
                    }
                    (b.build().unwrap(), alpha)
                })
        })
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solvers_agree_with_oracle((e, alpha) in arb_instance(5, 3, true)) {
            let m = HopCostModel::new(&e, alpha).unwrap();
            let dense = all_pairs_rates(&m, &SolveOptions::new(Solver::Dense)).unwrap();
            let alg1 = all_pairs_rates(&m, &SolveOptions::new(Solver::Algorithm1)).unwrap();
            for s in 0..e.len() {
                let o = oracle_rates(&m, s).unwrap();
                let single = single_source_rates(&m, s, Solver::Dense).unwrap();
                prop_assert_eq!(single.dist.as_slice(), dense.row(s));
                for j in 0..e.len() {
                    prop_assert!(close(o.dist[j], dense.get(s, j), 1e-12), "dense {} vs oracle {}", dense.get(s, j), o.dist[j]);
                    prop_assert!(close(o.dist[j], alg1.get(s, j), 1e-12), "alg1 {} vs oracle {}", alg1.get(s, j), o.dist[j]);
                }
                let ps = single_source_paths(&m, s).unwrap();
                for (j, p) in ps.paths.iter().enumerate() {
                    match p {
                        Some(p) => {
                            prop_assert_eq!(p.total, ps.rates.dist[j]);
                            prop_assert_eq!(p.nodes[0], s);
                        }
                        None => prop_assert_eq!(ps.rates.dist[j], f64::INFINITY),
                    }
                }
            }
        }

        #[test]
        fn extending_k_never_increases_rates((e, alpha) in arb_instance(6, 4, false)) {
            prop_assume!(e.steps() >= 2);
            let m = HopCostModel::new(&e, alpha).unwrap();
            let full = all_pairs_rates(&m, &SolveOptions::default()).unwrap();
            let short = e.truncated(e.steps() - 1).unwrap();
            let ms = HopCostModel::new(&short, alpha).unwrap();
            let part = all_pairs_rates(&ms, &SolveOptions::default()).unwrap();
            for (a, b) in full.values().iter().zip(part.values()) {
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn worker_count_does_not_change_bits((e, alpha) in arb_instance(6, 3, true)) {
            let m = HopCostModel::new(&e, alpha).unwrap();
            let one = all_pairs_rates(&m, &SolveOptions { workers: 1, ..SolveOptions::default() }).unwrap();
            let three = all_pairs_rates(&m, &SolveOptions { workers: 3, ..SolveOptions::default() }).unwrap();
            prop_assert_eq!(one, three);
        }
    }
}
