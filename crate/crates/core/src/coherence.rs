//! Cornerstone search, hard clusters and fuzzy affiliations on a
//! semidistance matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::SemidistanceMatrix;

pub const DEFAULT_STOP_FACTOR: f64 = 2.0;

/// How the discarded starting trajectory `c_0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartChoice {
    /// Uniform over labels from a seeded generator.
    Random(u64),
    Explicit(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerstoneResult {
    pub c0: usize,
    pub cornerstones: Vec<usize>,
    /// Max-min objective attained by each cornerstone, in search order.
    pub values: Vec<f64>,
    /// Number of cornerstones to keep under the drop rule, if it fired.
    /// The cornerstone at which the value drops is kept: it marks the
    /// transition region between the coherent sets found before it.
    pub suggested: Option<usize>,
    pub stop_factor: f64,
    pub rng_seed: Option<u64>,
}

/// Greedy max-min search. `c_1` is farthest from `c_0`; each further
/// cornerstone maximizes its minimum distance to `c_1, ..., c_q` (`c_0`
/// is not part of the minimum). Ties go to the lowest label.
///
/// The search always runs to `max_q`. The suggestion is the first `q`
/// (counting from 1) whose value falls below the previous value divided by
/// `stop_factor`.
pub fn find_cornerstones(
    d: &SemidistanceMatrix,
    start: StartChoice,
    max_q: usize,
    stop_factor: f64,
) -> Result<CornerstoneResult> {
    let n = d.len();
    check_square_symmetric(d)?;
    if max_q == 0 || max_q > n {
        return Err(Error::Parameter(format!("max_q must lie in 1..={n}, got {max_q}")));
    }
    if !(stop_factor.is_finite() && stop_factor > 0.0) {
        return Err(Error::Parameter(format!("stop factor must be positive, got {stop_factor}")));
    }
    if d.values().iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all semidistances are zero".into()));
    }
    let (c0, rng_seed) = match start {
        StartChoice::Explicit(c) if c < n => (c, None),
        StartChoice::Explicit(c) => return Err(Error::OutOfRange(format!("start label {c} >= I = {n}"))),
        StartChoice::Random(seed) => (ChaCha8Rng::seed_from_u64(seed).gen_range(0..n), Some(seed)),
    };

    let mut chosen = vec![false; n];
    let mut cornerstones = Vec::with_capacity(max_q);
    let mut values = Vec::with_capacity(max_q);
    // objective of every label: distance to c_0 first, then min over cornerstones
    let mut score: Vec<f64> = d.row(c0).to_vec();
    let mut first = true;
    while cornerstones.len() < max_q {
        let mut best = None::<(usize, f64)>;
        for (i, &v) in score.iter().enumerate() {
            if !chosen[i] && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let (c, v) = best.expect("max_q <= I leaves a candidate");
        chosen[c] = true;
        cornerstones.push(c);
        values.push(v);
        let row = d.row(c);
        if first {
            score.copy_from_slice(row);
            first = false;
        } else {
            for (s, &r) in score.iter_mut().zip(row) {
                if r < *s {
                    *s = r;
                }
            }
        }
    }
    let suggested = (1..values.len()).find(|&q| values[q] < values[q - 1] / stop_factor).map(|q| q + 1);
    Ok(CornerstoneResult { c0, cornerstones, values, suggested, stop_factor, rng_seed })
}

fn check_square_symmetric(d: &SemidistanceMatrix) -> Result<()> {
    let n = d.len();
    for i in 0..n {
        if d.get(i, i) != 0.0 {
            return Err(Error::Validation(format!("diagonal entry ({i}, {i}) is not zero")));
        }
        for j in 0..i {
            if d.get(i, j) != d.get(j, i) && !(d.get(i, j).is_nan() && d.get(j, i).is_nan()) {
                return Err(Error::Validation(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn check_cornerstones(d: &SemidistanceMatrix, cornerstones: &[usize]) -> Result<()> {
    if cornerstones.is_empty() {
        return Err(Error::Parameter("at least one cornerstone is required".into()));
    }
    if let Some(c) = cornerstones.iter().find(|&&c| c >= d.len()) {
        return Err(Error::OutOfRange(format!("cornerstone {c} >= I = {}", d.len())));
    }
    Ok(())
}

/// Index into `cornerstones` of the nearest cornerstone of each label;
/// ties go to the lower index.
pub fn hard_clusters(d: &SemidistanceMatrix, cornerstones: &[usize]) -> Result<Vec<usize>> {
    check_cornerstones(d, cornerstones)?;
    Ok((0..d.len())
        .map(|j| {
            let mut best = 0;
            for (q, &c) in cornerstones.iter().enumerate().skip(1) {
                if d.get(c, j) < d.get(cornerstones[best], j) {
                    best = q;
                }
            }
            best
        })
        .collect())
}

/// `Q x I` fuzzy c-means memberships with fixed centers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffiliationMatrix {
    pub m: f64,
    pub cornerstones: Vec<usize>,
    pub n: usize,
    /// Row `q` holds the memberships of all labels to cornerstone `q`.
    pub weights: Vec<f64>,
}

impl AffiliationMatrix {
    pub fn get(&self, q: usize, j: usize) -> f64 {
        self.weights[q * self.n + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.cornerstones.len()).map(|q| self.get(q, j)).collect()
    }

    /// Cornerstone index of the largest membership, lowest on ties.
    pub fn argmax(&self, j: usize) -> usize {
        let mut best = 0;
        for q in 1..self.cornerstones.len() {
            if self.get(q, j) > self.get(best, j) {
                best = q;
            }
        }
        best
    }
}

/// `q_i(j) = 1 / sum_k (d(c_i, j) / d(c_k, j))^(2 / (m - 1))`.
///
/// A zero distance gives membership 1 to the lowest such cornerstone.
/// Labels infinitely far from every cornerstone get uniform weights.
pub fn fuzzy_affiliations(d: &SemidistanceMatrix, cornerstones: &[usize], m: f64) -> Result<AffiliationMatrix> {
    check_cornerstones(d, cornerstones)?;
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::Parameter(format!("fuzziness m must exceed 1, got {m}")));
    }
    let n = d.len();
    let nq = cornerstones.len();
    let p = 2.0 / (m - 1.0);
    let mut weights = vec![0.0; nq * n];
    let mut col = vec![0.0; nq];
    for j in 0..n {
        for (q, &c) in cornerstones.iter().enumerate() {
            col[q] = d.get(c, j);
        }
        if let Some(z) = col.iter().position(|&r| r == 0.0) {
            col.fill(0.0);
            col[z] = 1.0;
        } else if col.iter().all(|r| r.is_infinite()) {
            col.fill(1.0 / nq as f64);
        } else {
            // scale by the nearest distance so the powers stay in [0, 1]
            let r_min = col.iter().copied().fold(f64::INFINITY, f64::min);
            for r in col.iter_mut() {
                *r = (r_min / *r).powf(p);
            }
            let total: f64 = col.iter().sum();
            for r in col.iter_mut() {
                *r /= total;
            }
        }
        for q in 0..nq {
            weights[q * n + j] = col[q];
        }
    }
    Ok(AffiliationMatrix { m, cornerstones: cornerstones.to_vec(), n, weights })
}
