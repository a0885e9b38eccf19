//! Acceptance suite. Prints one PASS/FAIL line per criterion followed by
//! the individual checks. Long-running benchmark profiles only run with
//! `--include-ignored` (or `--ignored`).

use std::time::Instant;

use ldcoh_core::coherence::{find_cornerstones, fuzzy_affiliations, StartChoice};
use ldcoh_core::flows::{advect, generate_ensemble, FlowSpec, IntegratorConfig, SeedSpec};
use ldcoh_core::matrix_file::MatrixFile;
use ldcoh_core::paths::{oracle::oracle_rates, single_source_paths, single_source_rates};
use ldcoh_core::presets::{preset, Profile, Units};
use ldcoh_core::rates::{axiom_check, cross_from_rates, l2_matrix, meet_from_rates};
use ldcoh_core::{
    all_pairs_rates, Geometry, HopCostModel, RateMatrix, SemidistanceMatrix, SolveOptions, Solver, TimeGrid,
    TrajectoryEnsemble,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FINE_EXACT_TOL: f64 = 1e-9;
const FINE_REL_TOL: f64 = 0.05;
const COARSE_LINEAR_TOL: f64 = 0.02;
const COARSE_EXACT_TOL: f64 = 1e-9;
const ORACLE_REL_TOL: f64 = 1e-12;
const REVERSAL_REL_TOL: f64 = 1e-9;
const MIXING_CV_MAX: f64 = 0.15;
const GYRE_SPLIT_TOL: f64 = 0.3;
const CORE_MEMBERSHIP: f64 = 0.9;
const ROTATING_VALUES: [f64; 3] = [0.0274, 0.0474, 0.0262];
const ROTATING_REL_TOL: f64 = 0.2;
const ROTATING_DROP: [f64; 2] = [0.45, 0.65];
const BICKLEY_SIMILAR_TOL: f64 = 0.15;
const BICKLEY_DROP_7: [f64; 2] = [0.5, 0.7];
const BICKLEY_DROP_8: [f64; 2] = [0.4, 0.6];
const BICKLEY_PRINTED: [f64; 8] = [2.06, 3.21, 2.45, 2.33, 2.30, 2.14, 1.42, 0.70];
const JET_CORE_HALF_WIDTH: f64 = 0.5;
const VELOCITY_REL_TOL: f64 = 1e-6;
const RK4_MIN_ORDER: f64 = 3.8;

struct Report {
    id: u32,
    title: &'static str,
    started: Instant,
    checks: Vec<(String, bool)>,
    notes: Vec<String>,
}

impl Report {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, started: Instant::now(), checks: vec![], notes: vec![] }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn runtime(&mut self, limit_s: f64) {
        let t = self.started.elapsed().as_secs_f64();
        self.check(format!("runtime {t:.1} s < {limit_s} s"), t < limit_s);
    }

    fn finish(self) -> bool {
        let pass = self.checks.iter().all(|(_, ok)| *ok);
        println!(
            "criterion {}: {} {} ({:.1} s)",
            self.id,
            if pass { "PASS" } else { "FAIL" },
            self.title,
            self.started.elapsed().as_secs_f64()
        );
        for (what, ok) in &self.checks {
            println!("    [{}] {what}", if *ok { "ok" } else { "FAIL" });
        }
        for n in &self.notes {
            println!("    note: {n}");
        }
        pass
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn zero_flow(n: usize, steps: usize, tau: f64) -> TrajectoryEnsemble {
    let grid = TimeGrid::uniform(0.0, tau, steps).unwrap();
    let g = generate_ensemble(
        &FlowSpec::zero_flow_unit_interval(),
        &SeedSpec::Linspace { n },
        &grid,
        &IntegratorConfig::default(),
        0,
    )
    .unwrap();
    g.ensemble
}

fn rates(e: &TrajectoryEnsemble, alpha: f64) -> RateMatrix {
    all_pairs_rates(&HopCostModel::new(e, alpha).unwrap(), &SolveOptions::default()).unwrap()
}

fn generate_preset(name: &str, profile: Profile) -> (TrajectoryEnsemble, ldcoh_core::presets::Preset) {
    let p = preset(name, profile).unwrap();
    let e = generate_ensemble(&p.flow, &p.seeds, &p.grid().unwrap(), &IntegratorConfig::default(), 0)
        .unwrap()
        .ensemble;
    (e, p)
}

fn zero_flow_fine_grid() -> bool {
    let mut r = Report::new(1, "zero-flow fine grid");
    let e = zero_flow(101, 10, 0.1);
    let rm = rates(&e, 0.5);
    let meet = meet_from_rates(&rm);
    let full = rm.get(0, 100);
    let half = rm.get(0, 50);
    r.check(format!("nu(0 -> 1) = {full:.12} vs 0.5 (tol {FINE_EXACT_TOL:e})"), (full - 0.5).abs() <= FINE_EXACT_TOL);
    r.check(format!("nu(0 -> 0.5) = {half:.6} vs 0.125 (rel {:.4})", rel(half, 0.125)), rel(half, 0.125) <= FINE_REL_TOL);
    let m = meet.get(0, 100);
    r.check(format!("meet(0, 1) = {m:.6} vs 0.25 (rel {:.4})", rel(m, 0.25)), rel(m, 0.25) <= FINE_REL_TOL);
    let alt = single_source_rates(&HopCostModel::new(&e, 0.5).unwrap(), 0, Solver::Algorithm1).unwrap();
    let worst = alt.dist.iter().zip(rm.row(0)).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    r.check(format!("reached-set solver agrees with the batched row (rel {worst:.1e})"), worst <= ORACLE_REL_TOL);
    r.runtime(5.0);
    r.finish()
}

fn zero_flow_coarse_grid() -> bool {
    let mut r = Report::new(2, "zero-flow coarse grid");
    let e = zero_flow(11, 100, 0.01);
    let m = HopCostModel::new(&e, 0.5).unwrap();
    let row = single_source_rates(&m, 0, Solver::Dense).unwrap().dist;
    let slopes: Vec<f64> = [2, 4, 6, 8, 10].iter().map(|&j| row[j] / (j as f64 / 10.0)).collect();
    let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().copied().fold(0.0, f64::max);
    r.check(format!("nu(0 -> d)/d in [{lo:.6}, {hi:.6}], spread {:.2e}", hi / lo - 1.0), hi / lo - 1.0 <= COARSE_LINEAR_TOL);
    r.check(format!("nu(0 -> 1) = {:.12} vs 10.0", row[10]), (row[10] - 10.0).abs() <= COARSE_EXACT_TOL);
    // oracle value: ten hops of 0.1 at cost 0.01 / (2 alpha tau)
    let oracle = 10.0 * 0.1f64.powi(2) / (2.0 * 0.5 * 0.01);
    r.check(format!("matches per-hop count {oracle}"), (row[10] - oracle).abs() <= COARSE_EXACT_TOL);
    r.note(format!("heuristic L^2 K / (2 I T) = {:.3}; the computed value is twice that", 1.0 * 100.0 / (2.0 * 10.0 * 1.0)));
    r.runtime(5.0);
    r.finish()
}

/// Random positions and step lengths; with `holes`, some samples are
/// dropped while every trajectory keeps at least one.
fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, steps: usize, dim: usize, holes: bool) -> TrajectoryEnsemble {
    let mut times = vec![0.0];
    for _ in 0..steps {
        let t = times.last().unwrap() + rng.gen_range(0.05..1.0);
        times.push(t);
    }
    let mut b = TrajectoryEnsemble::builder(Geometry::euclidean(dim).unwrap(), TimeGrid::new(times).unwrap());
    for i in 0..n {
        let keep = rng.gen_range(0..=steps);
        for k in 0..=steps {
            if holes && k != keep && rng.gen_bool(0.2) {
                continue;
            }
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            b.push(i as u64, k, x).unwrap();
        }
    }
    b.build().unwrap()
}

fn oracle_equivalence() -> bool {
    let mut r = Report::new(3, "oracle equivalence");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut mismatched, mut path_mismatch, mut compared) = (0.0f64, 0, 0, 0);
    let instances = 200;
    for inst in 0..instances {
        let n = rng.gen_range(2..=6);
        let steps = rng.gen_range(1..=4);
        let alpha = [0.3, 0.5, 0.7][inst % 3];
        let dim = rng.gen_range(1..=2);
        let e = random_ensemble(&mut rng, n, steps, dim, inst % 2 == 1);
        let m = HopCostModel::new(&e, alpha).unwrap();
        let all = all_pairs_rates(&m, &SolveOptions::default()).unwrap();
        for s in 0..n {
            let o = oracle_rates(&m, s).unwrap().dist;
            let dense = single_source_rates(&m, s, Solver::Dense).unwrap().dist;
            let a1 = single_source_rates(&m, s, Solver::Algorithm1).unwrap().dist;
            let ps = single_source_paths(&m, s).unwrap();
            for j in 0..n {
                compared += 1;
                let vals = [dense[j], a1[j], all.get(s, j), ps.rates.dist[j]];
                for v in vals {
                    if v.is_infinite() != o[j].is_infinite() {
                        mismatched += 1;
                    } else if v.is_finite() {
                        worst = worst.max(rel(v, o[j]));
                    }
                }
                match &ps.paths[j] {
                    Some(p) => {
                        let again = m.path_cost_from(p.start_slice, &p.nodes).unwrap().total;
                        if p.total != ps.rates.dist[j] || again != ps.rates.dist[j] {
                            path_mismatch += 1;
                        }
                    }
                    None if ps.rates.dist[j].is_finite() => path_mismatch += 1,
                    None => {}
                }
            }
        }
    }
    r.check(format!("{instances} instances, {compared} pairs: reachability agrees ({mismatched} mismatches)"), mismatched == 0);
    r.check(format!("dense, reached-set, batched vs oracle: worst rel {worst:.2e}"), worst <= ORACLE_REL_TOL);
    r.check(format!("path costs equal reported rates exactly ({path_mismatch} mismatches)"), path_mismatch == 0);
    r.runtime(60.0);
    r.finish()
}

/// Off-diagonal rates are positive or infinite unless `zeros` allows
/// exact zeros, which make distinct labels indiscernible by construction.
fn random_rate_matrix(rng: &mut ChaCha8Rng, zeros: bool) -> RateMatrix {
    let n = rng.gen_range(1..=12);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                v[i * n + j] = match rng.gen_range(0..10) {
                    0 => f64::INFINITY,
                    1 if zeros => 0.0,
                    _ => rng.gen_range(1e-6..5.0),
                };
            }
        }
    }
    RateMatrix::new(n, v, 0.5, 3, 0).unwrap()
}

fn semidistance_axioms() -> bool {
    let mut r = Report::new(4, "semidistance axioms and chain inequality");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..100 {
        let rm = random_rate_matrix(&mut rng, false);
        violations += axiom_check(&cross_from_rates(&rm), Some(&rm)).total_violations;
        violations += axiom_check(&meet_from_rates(&rm), Some(&rm)).total_violations;
    }
    r.check(format!("100 random rate matrices: {violations} violations"), violations == 0);
    let mut other = 0;
    for _ in 0..100 {
        let rm = random_rate_matrix(&mut rng, true);
        let (c, m) = (cross_from_rates(&rm), meet_from_rates(&rm));
        for i in 0..rm.len() {
            for j in 0..rm.len() {
                let (lo, hi) = (rm.get(i, j).min(rm.get(j, i)), rm.get(i, j).max(rm.get(j, i)));
                let ok = m.get(i, j) >= 0.0
                    && m.get(i, j) <= lo
                    && hi <= c.get(i, j)
                    && c.get(i, j) == c.get(j, i)
                    && m.get(i, j) == m.get(j, i)
                    && (i != j || (c.get(i, i) == 0.0 && m.get(i, i) == 0.0));
                other += usize::from(!ok);
            }
        }
    }
    r.check(format!("100 more with zero rates allowed, checked entrywise: {other} chain/symmetry/diagonal violations"), other == 0);

    let mut pipelines: Vec<(String, TrajectoryEnsemble)> = vec![
        ("zero flow I=101".into(), zero_flow(101, 10, 0.1)),
        ("zero flow I=11".into(), zero_flow(11, 100, 0.01)),
    ];
    for (name, flow, seeds, steps, tau) in [
        ("double gyre 16x8", FlowSpec::double_gyre(), SeedSpec::Grid { counts: vec![16, 8] }, 30, 0.2),
        ("rotating gyre 12x12", FlowSpec::RotatingDoubleGyre, SeedSpec::Grid { counts: vec![12, 12] }, 50, 0.02),
        ("bickley 120 random", FlowSpec::bickley_jet(), SeedSpec::Random { n: 120, seed: 3 }, 20, 0.5),
        ("two-mixing map", FlowSpec::MapTwoMixing, SeedSpec::Linspace { n: 100 }, 100, 1.0),
        ("static-mixing-static map", FlowSpec::MapStaticMixingStatic, SeedSpec::Linspace { n: 100 }, 50, 1.0),
    ] {
        let grid = TimeGrid::uniform(0.0, tau, steps).unwrap();
        let e = generate_ensemble(&flow, &seeds, &grid, &IntegratorConfig::default(), 0).unwrap().ensemble;
        pipelines.push((name.into(), e));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for idx in 0..3 {
        pipelines.push((format!("random with gaps #{idx}"), random_ensemble(&mut rng, 40, 8, 2, true)));
    }
    for (name, e) in &pipelines {
        let rm = rates(e, 0.5);
        let c = axiom_check(&cross_from_rates(&rm), Some(&rm));
        let m = axiom_check(&meet_from_rates(&rm), Some(&rm));
        let l = axiom_check(&l2_matrix(e), None);
        let total = c.total_violations + m.total_violations + l.total_violations;
        r.check(format!("{name}: cross/meet/l2 {total} violations"), total == 0 && c.chain_checked && m.chain_checked);
    }
    r.finish()
}

fn time_reversal() -> bool {
    let mut r = Report::new(5, "time reversal");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_rate, mut worst_cross, mut worst_control) = (0.0f64, 0.0f64, 0.0f64);
    let mut reach_mismatch = 0;
    for idx in 0..50 {
        let n = rng.gen_range(3..=25);
        let steps = rng.gen_range(1..=8);
        let e = random_ensemble(&mut rng, n, steps, 2, idx % 2 == 1);
        let back = e.reversed();
        for (alpha, worst) in [(0.5, &mut worst_rate), (0.3, &mut worst_control)] {
            let f = rates(&e, alpha);
            let b = rates(&back, alpha);
            for i in 0..n {
                for j in 0..n {
                    let (x, y) = (b.get(i, j), f.get(j, i));
                    if x.is_finite() != y.is_finite() {
                        reach_mismatch += usize::from(alpha == 0.5);
                    } else if x.is_finite() {
                        *worst = worst.max(rel(x, y));
                    }
                }
            }
            if alpha == 0.5 {
                let (cf, cb) = (cross_from_rates(&f), cross_from_rates(&b));
                for (x, y) in cf.values().iter().zip(cb.values()) {
                    if x.is_finite() && y.is_finite() {
                        worst_cross = worst_cross.max(rel(*x, *y));
                    } else if x != y {
                        reach_mismatch += 1;
                    }
                }
            }
        }
    }
    r.check(format!("alpha 1/2: reversed nu(i->j) vs nu(j->i), worst rel {worst_rate:.2e}"), worst_rate <= REVERSAL_REL_TOL);
    r.check(format!("alpha 1/2: cross matrix invariant, worst rel {worst_cross:.2e}"), worst_cross <= REVERSAL_REL_TOL);
    r.check(format!("reachability preserved ({reach_mismatch} mismatches)"), reach_mismatch == 0);
    r.note(format!("negative control alpha 0.3: worst rel {worst_control:.2e} (invariance not expected)"));
    r.finish()
}

fn half_means(d: &SemidistanceMatrix) -> (f64, f64) {
    let n = d.len();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if (i < n / 2) == (j < n / 2) {
                intra += d.get(i, j);
                ni += 1;
            } else {
                inter += d.get(i, j);
                nx += 1;
            }
        }
    }
    (intra / ni as f64, inter / nx as f64)
}

fn two_mixing_map() -> bool {
    let mut r = Report::new(6, "two-mixing map");
    let (full, _) = generate_preset("map-two-mixing", Profile::Ci);
    let mut series = vec![];
    for k in (10..=100).step_by(10) {
        let e = full.truncated(k).unwrap();
        let rm = rates(&e, 0.5);
        let (mi, mx) = half_means(&meet_from_rates(&rm));
        let (ci, cx) = half_means(&cross_from_rates(&rm));
        series.push((k, mi, mx, ci, cx));
    }
    let &(_, mi, mx, ci, cx) = series.last().unwrap();
    r.check(format!("K=100 meet: intra {mi:.3e} < inter {mx:.3e}"), mi < mx);
    r.check(format!("K=100 cross: intra {ci:.3e} < inter {cx:.3e}"), ci < cx);
    for (name, col) in [("meet intra", 1), ("meet inter", 2), ("cross intra", 3), ("cross inter", 4)] {
        let v: Vec<f64> = series.iter().map(|s| [s.1, s.2, s.3, s.4][col - 1]).collect();
        let ok = v.windows(2).all(|w| w[1] <= w[0]);
        r.check(format!("{name} non-increasing in K: {}", v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")), ok);
    }
    r.runtime(120.0);
    r.finish()
}

fn static_mixing_static_map() -> bool {
    let mut r = Report::new(7, "static-mixing-static map");
    let (e, _) = generate_preset("map-static-mixing-static", Profile::Ci);
    let m = HopCostModel::new(&e, 0.5).unwrap();
    let row = single_source_rates(&m, 0, Solver::Dense).unwrap().dist;
    let mixing: Vec<f64> = (0..e.len())
        .filter(|&j| (0.25..=0.75).contains(&e.position(j, 0).unwrap()[0]))
        .map(|j| row[j])
        .collect();
    let mean = mixing.iter().sum::<f64>() / mixing.len() as f64;
    let sd = (mixing.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mixing.len() as f64).sqrt();
    r.check(format!("{} mixing targets: mean {mean:.4e}, cv {:.4} < {MIXING_CV_MAX}", mixing.len(), sd / mean), sd / mean < MIXING_CV_MAX);
    let first: Vec<f64> = row[..20].to_vec();
    let all_static = (0..20).all(|j| e.position(j, 0).unwrap()[0] < 0.25);
    r.check("first 20 labels lie in the left static region", all_static);
    r.check(
        format!("strictly increasing over the first 20: {:.2e} .. {:.2e}", first[1], first[19]),
        first.windows(2).all(|w| w[1] > w[0]),
    );
    r.finish()
}

fn side(x: f64) -> f64 {
    x - 1.0
}

fn double_gyre(profile: Profile) -> bool {
    let (id_title, limit) = match profile {
        Profile::Ci => ("double gyre (ci 30x15)", 15.0 * 60.0),
        Profile::Full => ("double gyre (full 50x25)", 4.0 * 3600.0),
    };
    let mut r = Report::new(8, id_title);
    let (e, p) = generate_preset("double-gyre", profile);
    let rm = rates(&e, p.alpha);
    let d = meet_from_rates(&rm);
    let res = find_cornerstones(&d, StartChoice::Random(p.start_seed), p.max_q, 2.0).unwrap();
    let scale = Units::TwoTau.factor(e.grid().mean_tau());
    r.note(format!(
        "c0={} values (two-tau units) {}",
        res.c0,
        res.values.iter().map(|v| format!("{:.4}", v * scale)).collect::<Vec<_>>().join(", ")
    ));
    r.check(format!("suggests {:?} cornerstones, want 3", res.suggested), res.suggested == Some(3));
    let pos = |i: usize| e.position(i, 0).unwrap().to_vec();
    let (c1, c2, c3) = (res.cornerstones[0], res.cornerstones[1], res.cornerstones[2]);
    let (x1, x2) = (pos(c1)[0], pos(c2)[0]);
    r.check(format!("c1 x={x1:.3} and c2 x={x2:.3} on opposite sides of x=1"), side(x1) * side(x2) < 0.0);
    let mid = 0.5 * (x1 + x2);
    r.check(format!("their midpoint {mid:.3} within 1 +- {GYRE_SPLIT_TOL}"), (mid - 1.0).abs() <= GYRE_SPLIT_TOL);
    let aff = fuzzy_affiliations(&d, &[c1, c2], 2.0).unwrap();
    let core_sizes: Vec<usize> = (0..2).map(|q| (0..e.len()).filter(|&j| aff.get(q, j) >= CORE_MEMBERSHIP).count()).collect();
    let in_core = (0..2).any(|q| aff.get(q, c3) >= CORE_MEMBERSHIP);
    r.check(
        format!(
            "c3 at ({:.2}, {:.2}) outside both cores (memberships {:.3}/{:.3}, core sizes {:?})",
            pos(c3)[0],
            pos(c3)[1],
            aff.get(0, c3),
            aff.get(1, c3),
            core_sizes
        ),
        !in_core,
    );
    r.runtime(limit);
    r.finish()
}

fn rotating_double_gyre() -> bool {
    let mut r = Report::new(9, "rotating double gyre");
    let (e, p) = generate_preset("rotating-double-gyre", Profile::Full);
    let rm = rates(&e, p.alpha);
    let d = cross_from_rates(&rm);
    let f = Units::TwoTau.factor(e.grid().mean_tau());
    let res = find_cornerstones(&d, StartChoice::Random(p.start_seed), p.max_q, 2.0).unwrap();
    let v: Vec<f64> = res.values.iter().map(|x| x * f).collect();
    for q in 0..3 {
        let e_rel = rel(v[q], ROTATING_VALUES[q]);
        r.check(
            format!("value {} = {:.4} vs {} (rel {:.3})", q + 1, v[q], ROTATING_VALUES[q], e_rel),
            e_rel <= ROTATING_REL_TOL,
        );
    }
    let drop = v[2] / v[1];
    r.check(format!("drop factor {drop:.3} in {ROTATING_DROP:?}"), (ROTATING_DROP[0]..=ROTATING_DROP[1]).contains(&drop));
    r.note(format!("units: raw x 2 mean tau; c0 = {} from seed {}", res.c0, p.start_seed));
    // the first value depends on the discarded start; survey every choice
    let mut within = [0usize; 3];
    for c0 in 0..e.len() {
        let s = find_cornerstones(&d, StartChoice::Explicit(c0), 3, 2.0).unwrap();
        for q in 0..3 {
            within[q] += usize::from(rel(s.values[q] * f, ROTATING_VALUES[q]) <= ROTATING_REL_TOL);
        }
    }
    r.note(format!(
        "over all {} start choices, values within tolerance: {:?}",
        e.len(),
        within.iter().map(|w| format!("{:.0}%", 100.0 * *w as f64 / e.len() as f64)).collect::<Vec<_>>()
    ));
    r.runtime(30.0 * 60.0);
    r.finish()
}

fn periodic_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn bickley_jet() -> bool {
    let mut r = Report::new(10, "Bickley jet (full 60x18)");
    let (e, p) = generate_preset("bickley-jet", Profile::Full);
    let rm = rates(&e, p.alpha);
    let d = cross_from_rates(&rm);
    let f = Units::TwoTau.factor(e.grid().mean_tau());
    let res = find_cornerstones(&d, StartChoice::Random(p.start_seed), p.max_q, 2.0).unwrap();
    let v: Vec<f64> = res.values.iter().map(|x| x * f).collect();
    r.note(format!("values {}", v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")));
    let similar = |vals: &[f64]| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        (lo, hi, lo >= (1.0 - BICKLEY_SIMILAR_TOL) * hi)
    };
    let (lo, hi, ok) = similar(&v[1..6]);
    r.check(format!("values 2-6 within {BICKLEY_SIMILAR_TOL}: range [{lo:.2}, {hi:.2}]"), ok);
    let (plo, phi, pok) = similar(&BICKLEY_PRINTED[1..6]);
    r.note(format!("printed values 2-6 span [{plo:.2}, {phi:.2}] and {} this clause", if pok { "meet" } else { "also miss" }));
    let (slo, shi, sok) = similar(&v[2..6]);
    r.note(format!("values 3-6 span [{slo:.2}, {shi:.2}]: {}", if sok { "within tolerance" } else { "outside tolerance" }));
    let d7 = v[6] / v[5];
    let d8 = v[7] / v[6];
    r.check(format!("value7/value6 = {d7:.3} in {BICKLEY_DROP_7:?}"), (BICKLEY_DROP_7[0]..=BICKLEY_DROP_7[1]).contains(&d7));
    r.check(format!("value8/value7 = {d8:.3} in {BICKLEY_DROP_8:?}"), (BICKLEY_DROP_8[0]..=BICKLEY_DROP_8[1]).contains(&d8));

    let period = ldcoh_core::flows::BickleyJet::default().period();
    let pos: Vec<Vec<f64>> = res.cornerstones[..7].iter().map(|&c| e.position(c, 0).unwrap().to_vec()).collect();
    let core = pos.iter().filter(|x| x[1].abs() < JET_CORE_HALF_WIDTH).count();
    let north: Vec<f64> = pos.iter().filter(|x| x[1] >= JET_CORE_HALF_WIDTH).map(|x| x[0]).collect();
    let south: Vec<f64> = pos.iter().filter(|x| x[1] <= -JET_CORE_HALF_WIDTH).map(|x| x[0]).collect();
    let spread = |xs: &[f64]| {
        xs.iter().enumerate().all(|(a, &x)| xs[a + 1..].iter().all(|&y| periodic_gap(x, y, period) >= period / 6.0))
    };
    r.check(
        format!("one jet-core cornerstone ({core}), three north ({}), three south ({})", north.len(), south.len()),
        core == 1 && north.len() == 3 && south.len() == 3,
    );
    r.check("gyre cornerstones in distinct gyres", spread(&north) && spread(&south));
    r.finish()
}

fn flow_fields() -> bool {
    let mut r = Report::new(11, "flow-field correctness");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (flow, t_range) in [
        (FlowSpec::double_gyre(), 0.0..10.0),
        (FlowSpec::bickley_jet(), 0.0..40.0),
        (FlowSpec::RotatingDoubleGyre, 0.0..1.0),
    ] {
        let dom = flow.domain();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let t = rng.gen_range(t_range.clone());
            let x = [rng.gen_range(dom[0][0]..dom[0][1]), rng.gen_range(dom[1][0]..dom[1][1])];
            let v = flow.velocity(t, &x).unwrap();
            // fourth-order central differences of the stream function
            let h = 1e-3 * (dom[1][1] - dom[1][0]);
            let psi = |dx: f64, dy: f64| flow.stream_function(t, &[x[0] + dx, x[1] + dy]).unwrap();
            let d = |f: &dyn Fn(f64) -> f64| (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
            let dpsi_dx = d(&|s| psi(s, 0.0));
            let dpsi_dy = d(&|s| psi(0.0, s));
            let fd = [-dpsi_dy, dpsi_dx];
            let err = ((fd[0] - v[0]).powi(2) + (fd[1] - v[1]).powi(2)).sqrt();
            let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
            worst = worst.max(err / norm);
        }
        r.check(format!("{}: worst relative velocity error {worst:.2e}", flow.name()), worst < VELOCITY_REL_TOL);
    }
    for flow in [FlowSpec::double_gyre(), FlowSpec::bickley_jet(), FlowSpec::RotatingDoubleGyre] {
        let x0: Vec<f64> = flow.domain().iter().map(|[lo, hi]| lo + 0.37 * (hi - lo)).collect();
        let t1 = if matches!(flow, FlowSpec::BickleyJet(_)) { 2.0 } else { 1.0 };
        let run = |n: usize| advect(&flow, &x0, 0.0, t1, &IntegratorConfig { substeps: n }).unwrap();
        let reference = run(4096);
        let err = |n: usize| {
            let x = run(n);
            x.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let (e1, e2) = (err(16), err(32));
        let order = (e1 / e2).log2();
        r.check(format!("{}: RK4 observed order {order:.2} (errors {e1:.2e}, {e2:.2e})", flow.name()), order >= RK4_MIN_ORDER);
    }
    r.finish()
}

fn determinism() -> bool {
    let mut r = Report::new(12, "determinism across worker counts");
    for (name, profile) in [("double-gyre", Profile::Ci), ("map-two-mixing", Profile::Ci), ("map-static-mixing-static", Profile::Ci)] {
        let (a, p) = generate_preset(name, profile);
        let (b, _) = generate_preset(name, profile);
        r.check(format!("{name}: regenerated ensembles identical"), a == b && a.checksum() == b.checksum());
        let m = HopCostModel::new(&a, p.alpha).unwrap();
        let mut bytes = vec![];
        for workers in [1, 2, 4] {
            let opts = SolveOptions { workers, ..SolveOptions::default() };
            let rm = all_pairs_rates(&m, &opts).unwrap();
            let src = MatrixFile::from_rates(&rm, [0; 32]);
            let s = match p.kind {
                ldcoh_core::SemidistanceKind::Cross => cross_from_rates(&rm),
                _ => meet_from_rates(&rm),
            };
            let c = find_cornerstones(&s, StartChoice::Random(p.start_seed), p.max_q, 2.0).unwrap();
            let mut out = src.to_bytes();
            out.extend(MatrixFile::from_semidistance(&s, &src, [0; 32]).to_bytes());
            out.extend(format!("{c:?}").into_bytes());
            bytes.push(out);
        }
        r.check(format!("{name}: rates, semidistance and cornerstones byte-identical for 1, 2, 4 workers"), bytes.windows(2).all(|w| w[0] == w[1]));
    }
    r.finish()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let ignored_only = args.iter().any(|a| a == "--ignored");
    let with_long = ignored_only || args.iter().any(|a| a == "--include-ignored");

    let default: Vec<(&str, fn() -> bool)> = vec![
        ("1", zero_flow_fine_grid),
        ("2", zero_flow_coarse_grid),
        ("3", oracle_equivalence),
        ("4", semidistance_axioms),
        ("5", time_reversal),
        ("6", two_mixing_map),
        ("7", static_mixing_static_map),
        ("8", || double_gyre(Profile::Ci)),
        ("9", rotating_double_gyre),
        ("11", flow_fields),
        ("12", determinism),
    ];
    let long: Vec<(&str, fn() -> bool)> = vec![("8", || double_gyre(Profile::Full)), ("10", bickley_jet)];

    let mut failed = vec![];
    let mut run = |list: &[(&str, fn() -> bool)]| {
        for (id, f) in list {
            if !f() {
                failed.push(id.to_string());
            }
        }
    };
    if !ignored_only {
        run(&default);
    }
    if with_long {
        run(&long);
    } else {
        println!("criterion 8 (full profile) and criterion 10: skipped, run with --include-ignored");
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
