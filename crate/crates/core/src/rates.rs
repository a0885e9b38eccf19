//! One-way rate matrices and the symmetric semidistances built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};

/// `I x I` matrix of one-way rates `nu_K(i -> j)`, row = source.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n: usize,
    values: Vec<f64>,
    alpha: f64,
    steps: usize,
    ensemble_checksum: u64,
}

impl RateMatrix {
    /// Validates shape, zero diagonal and non-negativity (`+inf` allowed).
    pub fn new(n: usize, values: Vec<f64>, alpha: f64, steps: usize, ensemble_checksum: u64) -> Result<Self> {
        check_shape(n, &values)?;
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("rate matrix diagonal ({i}, {i}) is not zero")));
            }
        }
        if let Some(p) = values.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "rate matrix entry ({}, {}) = {} is negative or NaN",
                p / n,
                p % n,
                values[p]
            )));
        }
        Ok(Self { n, values, alpha, steps, ensemble_checksum })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn ensemble_checksum(&self) -> u64 {
        self.ensemble_checksum
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[j * n + i] = self.values[i * n + j];
            }
        }
        Self { values, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemidistanceKind {
    Cross,
    Meet,
    L2,
}

impl SemidistanceKind {
    pub fn name(self) -> &'static str {
        match self {
            SemidistanceKind::Cross => "cross",
            SemidistanceKind::Meet => "meet",
            SemidistanceKind::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(Self::Cross),
            "meet" => Ok(Self::Meet),
            "l2" => Ok(Self::L2),
            _ => Err(Error::Parameter(format!("unknown semidistance kind `{s}` (cross, meet, l2)"))),
        }
    }
}

/// Symmetric `I x I` semidistance. For `meet`, the minimizing meeting
/// label of each pair may be kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SemidistanceMatrix {
    kind: SemidistanceKind,
    n: usize,
    values: Vec<f64>,
    meeting: Option<Vec<usize>>,
}

impl SemidistanceMatrix {
    /// Wraps raw values without checking axioms; see [`axiom_check`].
    pub fn from_values(kind: SemidistanceKind, n: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(n, &values)?;
        Ok(Self { kind, n, values, meeting: None })
    }

    pub fn with_meeting(mut self, meeting: Vec<usize>) -> Result<Self> {
        check_shape(self.n, &meeting)?;
        self.meeting = Some(meeting);
        Ok(self)
    }

    pub fn kind(&self) -> SemidistanceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Minimizing meeting label `l*` of pair `(i, j)`, if recorded.
    pub fn meeting_label(&self, i: usize, j: usize) -> Option<usize> {
        self.meeting.as_ref().map(|m| m[i * self.n + j])
    }

    pub fn meeting(&self) -> Option<&[usize]> {
        self.meeting.as_deref()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect(), ..self.clone() }
    }
}

fn check_shape<T>(n: usize, values: &[T]) -> Result<()> {
    if values.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: values.len() });
    }
    Ok(())
}

/// `nu(i -> j) + nu(j -> i)`.
pub fn cross_from_rates(r: &RateMatrix) -> SemidistanceMatrix {
    let n = r.n;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = r.get(i, j) + r.get(j, i);
        }
    }
    SemidistanceMatrix { kind: SemidistanceKind::Cross, n, values, meeting: None }
}

/// `min_l nu(i -> l) + nu(j -> l)`, lowest `l` on ties.
pub fn meet_from_rates(r: &RateMatrix) -> SemidistanceMatrix {
    let n = r.n;
    let upper: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = r.row(i);
            (i..n)
                .map(|j| {
                    let rj = r.row(j);
                    let mut best = (f64::INFINITY, 0);
                    for l in 0..n {
                        let v = ri[l] + rj[l];
                        if v < best.0 {
                            best = (v, l);
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    let mut meeting = vec![0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, (v, l)) in row.into_iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
            meeting[i * n + j] = l;
            meeting[j * n + i] = l;
        }
    }
    SemidistanceMatrix { kind: SemidistanceKind::Meet, n, values, meeting: Some(meeting) }
}

/// `sum_{k<K} |x_k(i) - x_k(j)|^2 / (2 tau_k)` over slices where both are
/// present; `+inf` if the pair never shares such a slice.
pub fn l2_matrix(e: &TrajectoryEnsemble) -> SemidistanceMatrix {
    let n = e.len();
    let g = e.geometry();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let mut sum = 0.0;
                    let mut shared = false;
                    for k in 0..e.steps() {
                        if let (Some(a), Some(b)) = (e.position(i, k), e.position(j, k)) {
                            shared = true;
                            sum += g.sq_dist(a, b) / (2.0 * e.grid().tau(k));
                        }
                    }
                    if shared {
                        sum
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            values[i * n + i + off] = v;
            values[(i + off) * n + i] = v;
        }
    }
    SemidistanceMatrix { kind: SemidistanceKind::L2, n, values, meeting: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    NonNegative,
    ZeroDiagonal,
    Symmetric,
    /// Distinct labels at positive distance.
    Indiscernible,
    /// `meet <= min(nu_ij, nu_ji) <= max(nu_ij, nu_ji) <= cross`.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub axiom: Axiom,
    pub i: usize,
    pub j: usize,
    pub value: f64,
    /// Amount by which the entry misses the axiom.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub kind: SemidistanceKind,
    pub chain_checked: bool,
    pub total_violations: usize,
    /// Worst violations first, at most [`AxiomReport::MAX_LISTED`].
    pub worst: Vec<Violation>,
}

impl AxiomReport {
    pub const MAX_LISTED: usize = 32;

    pub fn passed(&self) -> bool {
        self.total_violations == 0
    }
}

/// Checks non-negativity, zero diagonal, symmetry, identity of
/// indiscernibles and, for cross and meet given the rates, the chain
/// estimate. Report only; never fails.
pub fn axiom_check(s: &SemidistanceMatrix, r: Option<&RateMatrix>) -> AxiomReport {
    let n = s.n;
    let rates = r.filter(|r| r.n == n && s.kind != SemidistanceKind::L2);
    let mut found = Vec::new();
    let mut push = |axiom, i, j, value: f64, excess: f64| found.push(Violation { axiom, i, j, value, excess });
    for i in 0..n {
        for j in 0..n {
            let v = s.get(i, j);
            if v.is_nan() || v < 0.0 {
                push(Axiom::NonNegative, i, j, v, if v.is_nan() { f64::INFINITY } else { -v });
            }
            if i == j {
                if v != 0.0 {
                    push(Axiom::ZeroDiagonal, i, j, v, v.abs());
                }
                continue;
            }
            let t = s.get(j, i);
            if v != t && i < j {
                push(Axiom::Symmetric, i, j, v, (v - t).abs());
            }
            if v == 0.0 {
                push(Axiom::Indiscernible, i, j, v, 0.0);
            }
            if let Some(r) = rates {
                let (a, b) = (r.get(i, j), r.get(j, i));
                let excess = match s.kind {
                    SemidistanceKind::Cross => a.max(b) - v,
                    SemidistanceKind::Meet => v - a.min(b),
                    SemidistanceKind::L2 => unreachable!(),
                };
                if excess > 0.0 {
                    push(Axiom::Chain, i, j, v, excess);
                }
            }
        }
    }
    let total_violations = found.len();
    found.sort_by(|a, b| b.excess.total_cmp(&a.excess));
    found.truncate(AxiomReport::MAX_LISTED);
    AxiomReport { kind: s.kind, chain_checked: rates.is_some(), total_violations, worst: found }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{Geometry, TimeGrid};
    use proptest::prelude::*;

    fn line_rates() -> RateMatrix {
        RateMatrix::new(3, vec![0.0, 0.25, 0.5, 0.25, 0.0, 0.25, 0.5, 0.25, 0.0], 0.5, 2, 0).unwrap()
    }

    #[test]
    fn rate_matrix_validation() {
        assert!(RateMatrix::new(2, vec![0.0; 3], 0.5, 1, 0).is_err());
        assert!(RateMatrix::new(2, vec![0.0, 1.0, 1.0, 0.1], 0.5, 1, 0).is_err());
        assert!(RateMatrix::new(2, vec![0.0, -1.0, 1.0, 0.0], 0.5, 1, 0).is_err());
        assert!(RateMatrix::new(2, vec![0.0, f64::INFINITY, 1.0, 0.0], 0.5, 1, 0).is_ok());
    }

    #[test]
    fn cross_on_line_and_asymmetric() {
        let c = cross_from_rates(&line_rates());
        assert_eq!(c.get(0, 2), 1.0);
        assert_eq!(c.get(1, 1), 0.0);
        let r = RateMatrix::new(2, vec![0.0, 1.0, 3.0, 0.0], 0.5, 1, 0).unwrap();
        let c = cross_from_rates(&r);
        assert_eq!((c.get(0, 1), c.get(1, 0)), (4.0, 4.0));
    }

    #[test]
    fn meet_on_line() {
        let m = meet_from_rates(&line_rates());
        assert_eq!(m.get(0, 2), 0.5);
        // l = 0, 1, 2 all give 0.5
        assert_eq!(m.meeting_label(0, 2), Some(0));
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.meeting_label(1, 1), Some(1));
        assert_eq!(m.get(0, 1), 0.25);
    }

    fn two_static(d: f64, k: usize) -> TrajectoryEnsemble {
        let g = Geometry::euclidean(1).unwrap();
        let t = TimeGrid::uniform(0.0, 1.0, k).unwrap();
        TrajectoryEnsemble::from_full(g, t, &[vec![vec![0.0]; k + 1], vec![vec![d]; k + 1]]).unwrap()
    }

    #[test]
    fn l2_examples() {
        let l = l2_matrix(&two_static(0.5, 2));
        assert_eq!(l.get(0, 1), 0.25);
        assert_eq!(l.get(1, 0), 0.25);
        assert_eq!(l2_matrix(&two_static(0.0, 2)).get(0, 1), 0.0);
        let e = two_static(0.5, 2).with_removed(&[(1, 0)]).unwrap();
        assert_eq!(l2_matrix(&e).get(0, 1), 0.125);
    }

    #[test]
    fn l2_never_jointly_present_is_infinite() {
        let g = Geometry::euclidean(1).unwrap();
        let t = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let mut b = TrajectoryEnsemble::builder(g, t);
        b.push(1, 0, vec![0.0]).unwrap();
        b.push(1, 1, vec![0.0]).unwrap();
        b.push(2, 2, vec![1.0]).unwrap();
        let l = l2_matrix(&b.build().unwrap());
        assert_eq!(l.get(0, 1), f64::INFINITY);
        assert_eq!(l.get(1, 1), 0.0);
    }

    #[test]
    fn axiom_report_flags_corruption() {
        let r = line_rates();
        let c = cross_from_rates(&r);
        assert!(axiom_check(&c, Some(&r)).passed());
        assert!(axiom_check(&meet_from_rates(&r), Some(&r)).passed());

        let mut v = c.values().to_vec();
        v[1] = -0.5;
        let bad = SemidistanceMatrix::from_values(SemidistanceKind::Cross, 3, v).unwrap();
        let rep = axiom_check(&bad, Some(&r));
        assert!(!rep.passed());
        assert!(rep.worst.iter().any(|w| w.axiom == Axiom::NonNegative && (w.i, w.j) == (0, 1)));
        assert!(rep.worst.iter().any(|w| w.axiom == Axiom::Symmetric));
        assert!(rep.worst.iter().any(|w| w.axiom == Axiom::Chain));
    }

    fn arb_rates() -> impl Strategy<Value = RateMatrix> {
        (1usize..8).prop_flat_map(|n| {
            proptest::collection::vec(prop_oneof![9 => 0.0f64..10.0, 1 => Just(f64::INFINITY)], n * n).prop_map(
                move |mut v| {
                    for i in 0..n {
                        v[i * n + i] = 0.0;
                    }
                    RateMatrix::new(n, v, 0.5, 1, 0).unwrap()
                },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn chain_inequality_on_random_rates(r in arb_rates()) {
            let c = cross_from_rates(&r);
            let m = meet_from_rates(&r);
            for i in 0..r.len() {
                for j in 0..r.len() {
                    let (a, b) = (r.get(i, j), r.get(j, i));
                    prop_assert!(m.get(i, j) <= a.min(b));
                    prop_assert!(a.max(b) <= c.get(i, j));
                    prop_assert_eq!(c.get(i, j).to_bits(), c.get(j, i).to_bits());
                    prop_assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
                }
            }
        }

        #[test]
        fn sqrt_l2_is_a_metric(pts in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 3)) {
            // three 2-d trajectories over 2 steps
            let g = Geometry::euclidean(2).unwrap();
            let t = TimeGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
            let trajs: Vec<Vec<Vec<f64>>> = pts.iter().map(|p| p.chunks(2).map(|c| c.to_vec()).collect()).collect();
            let l = l2_matrix(&TrajectoryEnsemble::from_full(g, t, &trajs).unwrap());
            let d = |i, j| l.get(i, j).sqrt();
            for (a, b, c) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
                prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
            }
        }
    }
}
