use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use ldcoh_core::coherence::{find_cornerstones, fuzzy_affiliations, hard_clusters, StartChoice, DEFAULT_STOP_FACTOR};
use ldcoh_core::ensemble::{load_csv, load_json, save_csv, Sidecar};
use ldcoh_core::flows::{generate_ensemble, FlowSpec, IntegratorConfig, SeedSpec};
use ldcoh_core::matrix_file::MatrixFile;
use ldcoh_core::presets::{preset, Profile, Units};
use ldcoh_core::rates::{axiom_check, cross_from_rates, l2_matrix, meet_from_rates};
use ldcoh_core::transition::DEFAULT_ALPHA;
use ldcoh_core::{
    all_pairs_rates, Error, HopCostModel, RateMatrix, SemidistanceKind, SemidistanceMatrix, SolveOptions, Solver,
    TrajectoryEnsemble,
};
use serde::Serialize;
use serde_json::json;
use tracing::{info, warn};

use crate::config::{ClusterParams, CornerstoneParams, ExportParams, Input, RunConfig};
use crate::workdir::{csv_stamp, read_file, Workdir};

const ENSEMBLE_CSV: &str = "ensemble.csv";
const SIDECAR: &str = "ensemble.sidecar.json";
const RATES: &str = "rates.bin";

#[derive(Args, Clone)]
pub struct Common {
    /// Work directory holding all artifacts.
    #[arg(long, visible_alias = "out", default_value = ".")]
    pub dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "LDCOH_WORKERS", default_value_t = 0)]
    pub workers: usize,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Named benchmark configuration; explicit flags override its fields.
    #[arg(long)]
    preset: Option<String>,
    /// Preset size: ci or full.
    #[arg(long, default_value = "ci")]
    profile: String,
    /// double-gyre, bickley, rotating-double-gyre, map-two-mixing,
    /// map-static-mixing-static or zero-flow.
    #[arg(long, conflicts_with = "flow_config")]
    flow: Option<String>,
    /// FlowSpec as a JSON file, for non-default parameters.
    #[arg(long)]
    flow_config: Option<PathBuf>,
    /// Box for zero-flow, e.g. `0:1` or `0:2,0:1`.
    #[arg(long)]
    domain: Option<String>,
    /// Cell-centred seed grid, e.g. `50x25`.
    #[arg(long, group = "seeding")]
    grid: Option<String>,
    /// Equispaced seeds on a 1-D domain, endpoints included.
    #[arg(long, group = "seeding")]
    points: Option<usize>,
    /// Uniform random seeds in the domain box.
    #[arg(long, group = "seeding")]
    random: Option<usize>,
    /// Seed of --random and of the map digit tails.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of sampling intervals K; the ensemble has K+1 slices.
    #[arg(long)]
    steps: Option<usize>,
    /// Sampling interval; defaults to 1 for maps.
    #[arg(long)]
    dt: Option<f64>,
    /// Time of the first slice.
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// RK4 steps per sampling interval.
    #[arg(long, default_value_t = IntegratorConfig::default().substeps)]
    substeps: usize,
}

#[derive(Args)]
pub struct RatesArgs {
    #[command(flatten)]
    common: Common,
    /// Ensemble file (CSV or JSON); defaults to the work directory's.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Sidecar JSON with times and periods for a CSV ensemble.
    #[arg(long, conflicts_with = "times")]
    sidecar: Option<PathBuf>,
    /// Comma-separated sample times for a CSV ensemble.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// dense or algorithm1.
    #[arg(long, default_value = "dense")]
    solver: String,
    /// Also write rates.csv.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
pub struct SemidistArgs {
    #[command(flatten)]
    common: Common,
    /// cross, meet or l2.
    #[arg(long)]
    kind: String,
    /// Also write <kind>.csv.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
pub struct CornerstonesArgs {
    #[command(flatten)]
    common: Common,
    /// cross, meet or l2.
    #[arg(long)]
    kind: String,
    /// RNG seed choosing the discarded start trajectory.
    #[arg(long, conflicts_with = "start")]
    seed: Option<u64>,
    /// Explicit start trajectory id.
    #[arg(long)]
    start: Option<u64>,
    /// Number of cornerstones to compute.
    #[arg(long = "max")]
    max_q: usize,
    #[arg(long, default_value_t = DEFAULT_STOP_FACTOR)]
    stop_factor: f64,
    /// raw, per-tau or two-tau.
    #[arg(long, default_value = "raw")]
    units: String,
}

#[derive(Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kind: String,
    /// Fuzziness exponent.
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    /// Cornerstones to use; defaults to the suggestion, else all.
    #[arg(long)]
    count: Option<usize>,
    /// Time slice of the reported positions.
    #[arg(long, default_value_t = 0)]
    slice: usize,
}

#[derive(Args)]
pub struct ExportArgs {
    #[command(flatten)]
    common: Common,
    /// Semidistance behind distance, affiliation and cluster values.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, default_value_t = 0)]
    slice: usize,
    /// distance, rate, affiliation or cluster.
    #[arg(long, default_value = "distance")]
    value: String,
    /// Reference trajectory id for distance and rate values.
    #[arg(long)]
    from: Option<u64>,
    /// Cornerstone number (from 1) for affiliation values.
    #[arg(long)]
    cornerstone: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value = "raw")]
    units: String,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = ".")]
    dir: PathBuf,
}

fn parse_units(s: &str) -> Result<Units> {
    Ok(Units::parse(&s.replace('_', "-"))?)
}

fn flow_by_name(name: &str, domain: Option<&str>) -> Result<FlowSpec> {
    let flow = match name {
        "double-gyre" => FlowSpec::double_gyre(),
        "bickley" | "bickley-jet" => FlowSpec::bickley_jet(),
        "rotating-double-gyre" => FlowSpec::RotatingDoubleGyre,
        "map-two-mixing" => FlowSpec::MapTwoMixing,
        "map-static-mixing-static" => FlowSpec::MapStaticMixingStatic,
        "zero-flow" => match domain {
            Some(d) => FlowSpec::ZeroFlow { domain: parse_domain(d)? },
            None => FlowSpec::zero_flow_unit_interval(),
        },
        _ => return Err(Error::Parameter(format!("unknown flow `{name}`")).into()),
    };
    if domain.is_some() && !matches!(flow, FlowSpec::ZeroFlow { .. }) {
        return Err(Error::Parameter("--domain only applies to zero-flow".into()).into());
    }
    Ok(flow)
}

fn parse_domain(s: &str) -> Result<Vec<[f64; 2]>> {
    s.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::Parameter(format!("domain interval `{part}` is not lo:hi")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Parameter(format!("`{v}`: {e}")));
            Ok([num(lo)?, num(hi)?])
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|c| c.trim().parse::<usize>().map_err(|e| Error::Parameter(format!("grid `{s}`: {e}")).into()))
        .collect()
}

fn install_pool(workers: usize) {
    if workers > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn ensemble_artifacts(e: &TrajectoryEnsemble, hash: &str) -> Result<Vec<(String, Vec<u8>)>> {
    let mut csv = csv_stamp(hash).into_bytes();
    save_csv(e, &mut csv)?;
    let side = Sidecar::of(e).to_json();
    let side = format!("{},\"config_hash\":\"{hash}\"}}\n", side.trim_end().trim_end_matches('}'));
    Ok(vec![(ENSEMBLE_CSV.into(), csv), (SIDECAR.into(), side.into_bytes())])
}

fn load_workdir_ensemble(wd: &Workdir, config: &mut RunConfig) -> Result<TrajectoryEnsemble> {
    let csv = wd.consume(ENSEMBLE_CSV, config)?;
    let side = wd.consume(SIDECAR, config)?;
    let sidecar: Sidecar = serde_json::from_slice(&side).map_err(|e| Error::Format(format!("{SIDECAR}: {e}")))?;
    Ok(load_csv(&csv[..], &sidecar)?)
}

fn load_external_ensemble(path: &PathBuf, sidecar: Option<&PathBuf>, times: Option<&Vec<f64>>) -> Result<TrajectoryEnsemble> {
    let bytes = read_file(path)?;
    if path.extension().is_some_and(|x| x == "json") {
        return Ok(load_json(&bytes[..])?);
    }
    let sidecar = match (sidecar, times) {
        (Some(p), _) => serde_json::from_slice(&read_file(p)?)
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
        (None, Some(t)) => {
            // dimension from the header; periods default to none
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?;
            let header = text.lines().find(|l| !l.starts_with('#')).unwrap_or_default();
            let dim = header.split(',').count().saturating_sub(2);
            Sidecar { times: t.clone(), periods: vec![None; dim] }
        }
        (None, None) => return Err(Error::Validation("a CSV ensemble needs --sidecar or --times".into()).into()),
    };
    Ok(load_csv(&bytes[..], &sidecar)?)
}

fn read_matrix(wd: &Workdir, name: &str, config: &mut RunConfig) -> Result<MatrixFile> {
    MatrixFile::from_bytes(&wd.consume(name, config)?).with_context(|| format!("reading {name}"))
}

fn check_matches(e: &TrajectoryEnsemble, m: &MatrixFile, name: &str) -> Result<()> {
    if m.ensemble_checksum != e.checksum() || m.n != e.len() {
        return Err(Error::Validation(format!("{name} was computed from a different ensemble")).into());
    }
    Ok(())
}

fn semidistance_file(kind: SemidistanceKind) -> String {
    format!("{}.bin", kind.name())
}

fn cornerstone_file(kind: SemidistanceKind) -> String {
    format!("cornerstones-{}.json", kind.name())
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    install_pool(a.common.workers);
    let base = a.preset.as_deref().map(|n| Ok::<_, Error>((n, preset(n, Profile::parse(&a.profile)?)?))).transpose()?;
    let flow = match (&a.flow, &a.flow_config) {
        (Some(name), _) => flow_by_name(name, a.domain.as_deref())?,
        (None, Some(p)) => serde_json::from_slice(&read_file(p)?)
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
        (None, None) => match &base {
            Some((_, p)) => p.flow.clone(),
            None => return Err(Error::Validation("give --flow, --flow-config or --preset".into()).into()),
        },
    };
    let seeds = if let Some(g) = &a.grid {
        SeedSpec::Grid { counts: parse_grid(g)? }
    } else if let Some(n) = a.points {
        SeedSpec::Linspace { n }
    } else if let Some(n) = a.random {
        SeedSpec::Random { n, seed: a.seed }
    } else {
        match &base {
            Some((_, p)) => p.seeds.clone(),
            None => return Err(Error::Validation("give --grid, --points, --random or --preset".into()).into()),
        }
    };
    let steps = a
        .steps
        .or(base.as_ref().map(|(_, p)| p.steps))
        .ok_or_else(|| Error::Validation("--steps is required".into()))?;
    let dt = match (a.dt, &base) {
        (Some(dt), _) => dt,
        (None, Some((_, p))) => p.tau,
        (None, None) if flow.is_map() => 1.0,
        (None, None) => return Err(Error::Validation("--dt is required for flows".into()).into()),
    };
    let input = Input::Generated {
        preset: base.as_ref().map(|(n, _)| n.to_string()),
        profile: base.as_ref().map(|_| Profile::parse(&a.profile)).transpose()?,
        flow,
        seeds,
        steps,
        dt,
        t0: a.t0,
        integrator: IntegratorConfig { substeps: a.substeps },
        map_tail_seed: a.seed,
    };
    let config = RunConfig::new("generate", input, a.common.dir.clone(), a.common.workers);
    config.validate()?;
    let Input::Generated { flow, seeds, steps, dt, t0, integrator, map_tail_seed, .. } = &config.input else {
        unreachable!()
    };
    let grid = ldcoh_core::TimeGrid::uniform(*t0, *dt, *steps)?;
    let started = Instant::now();
    let g = generate_ensemble(flow, seeds, &grid, integrator, *map_tail_seed)?;
    if g.clamp_events > 0 {
        warn!("{} boundary clamps during integration", g.clamp_events);
    }
    info!("generated {} trajectories in {:.2?}", g.ensemble.len(), started.elapsed());
    let wd = Workdir::open(&a.common.dir)?;
    let artifacts = ensemble_artifacts(&g.ensemble, &config.hash_hex())?;
    wd.commit("generate", &config, &artifacts)?;
    println!("{}: I={} K={} ({})", wd.path(ENSEMBLE_CSV).display(), g.ensemble.len(), g.ensemble.steps(), flow.name());
    Ok(())
}

pub fn rates(a: RatesArgs) -> Result<()> {
    install_pool(a.common.workers);
    let input = match &a.ensemble {
        Some(p) => Input::File { path: p.clone(), sidecar: a.sidecar.clone(), times: a.times.clone() },
        None => Input::Workdir,
    };
    let mut config = RunConfig::new("rates", input, a.common.dir.clone(), a.common.workers);
    config.alpha = Some(a.alpha);
    config.solver = Some(Solver::parse(&a.solver)?);
    config.validate()?;
    let wd = Workdir::open(&a.common.dir)?;
    let e = match &a.ensemble {
        Some(p) => {
            let bytes = read_file(p)?;
            config.inputs.insert(p.display().to_string(), crate::workdir::sha256_hex(&bytes));
            if let Some(s) = &a.sidecar {
                config.inputs.insert(s.display().to_string(), crate::workdir::sha256_hex(&read_file(s)?));
            }
            load_external_ensemble(p, a.sidecar.as_ref(), a.times.as_ref())?
        }
        None => load_workdir_ensemble(&wd, &mut config)?,
    };
    let model = HopCostModel::new(&e, a.alpha)?;
    let opts = SolveOptions { solver: config.solver.unwrap_or_default(), prune: false, workers: a.common.workers };
    let started = Instant::now();
    let r = all_pairs_rates(&model, &opts)?;
    info!("rates for I={} K={} in {:.2?}", e.len(), e.steps(), started.elapsed());
    let file = MatrixFile::from_rates(&r, config.hash());
    let mut artifacts = Vec::new();
    if a.ensemble.is_some() {
        artifacts.extend(ensemble_artifacts(&e, &config.hash_hex())?);
    }
    artifacts.push((RATES.into(), file.to_bytes()));
    if a.csv {
        let mut csv = csv_stamp(&config.hash_hex()).into_bytes();
        file.write_csv(&mut csv)?;
        artifacts.push(("rates.csv".into(), csv));
    }
    wd.commit("rates", &config, &artifacts)?;
    let finite = r.values().iter().filter(|v| v.is_finite()).count();
    println!("{}: I={} finite={finite}/{}", wd.path(RATES).display(), r.len(), r.len() * r.len());
    Ok(())
}

pub fn semidist(a: SemidistArgs) -> Result<()> {
    install_pool(a.common.workers);
    let kind = SemidistanceKind::parse(&a.kind)?;
    let mut config = RunConfig::new(&format!("semidist-{}", kind.name()), Input::Workdir, a.common.dir.clone(), a.common.workers);
    config.kind = Some(kind);
    config.validate()?;
    let wd = Workdir::open(&a.common.dir)?;
    let (s, rates, file) = if kind == SemidistanceKind::L2 {
        let e = load_workdir_ensemble(&wd, &mut config)?;
        let s = l2_matrix(&e);
        let source = MatrixFile {
            kind: ldcoh_core::matrix_file::MatrixKind::Rates,
            n: e.len(),
            steps: e.steps(),
            alpha: 0.0,
            ensemble_checksum: e.checksum(),
            config_hash: [0; 32],
            values: vec![],
            meeting: None,
        };
        let file = MatrixFile::from_semidistance(&s, &source, config.hash());
        (s, None, file)
    } else {
        let rf = read_matrix(&wd, RATES, &mut config)?;
        let r: RateMatrix = rf.to_rates()?;
        let s = match kind {
            SemidistanceKind::Cross => cross_from_rates(&r),
            _ => meet_from_rates(&r),
        };
        let file = MatrixFile::from_semidistance(&s, &rf, config.hash());
        (s, Some(r), file)
    };
    let report = axiom_check(&s, rates.as_ref());
    let hash = config.hash_hex();
    let report_json = json!({
        "config_hash": hash,
        "passed": report.passed(),
        "report": report,
    });
    let mut artifacts = vec![
        (semidistance_file(kind), file.to_bytes()),
        (format!("{}.axioms.json", kind.name()), pretty(&report_json)),
    ];
    if a.csv {
        let mut csv = csv_stamp(&hash).into_bytes();
        file.write_csv(&mut csv)?;
        artifacts.push((format!("{}.csv", kind.name()), csv));
    }
    wd.commit(&config.command.clone(), &config, &artifacts)?;
    println!(
        "{}: I={} axioms {} ({} violations)",
        wd.path(&semidistance_file(kind)).display(),
        s.len(),
        if report.passed() { "pass" } else { "FAIL" },
        report.total_violations
    );
    if !report.passed() {
        return Err(anyhow::anyhow!("semidistance violates its axioms; see {}.axioms.json", kind.name()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Labelled {
    index: usize,
    id: u64,
    position: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct CornerstoneEntry {
    q: usize,
    index: usize,
    id: u64,
    position: Option<Vec<f64>>,
    value: f64,
    raw_value: f64,
    /// Value over the previous value.
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct CornerstoneReport {
    config_hash: String,
    kind: SemidistanceKind,
    units: Units,
    unit_factor: f64,
    c0: Labelled,
    rng_seed: Option<u64>,
    stop_factor: f64,
    suggested: Option<usize>,
    cornerstones: Vec<CornerstoneEntry>,
}

fn load_semidistance(
    wd: &Workdir,
    kind: SemidistanceKind,
    config: &mut RunConfig,
) -> Result<(SemidistanceMatrix, TrajectoryEnsemble)> {
    let f = read_matrix(wd, &semidistance_file(kind), config)?;
    let e = load_workdir_ensemble(wd, config)?;
    check_matches(&e, &f, &semidistance_file(kind))?;
    Ok((f.to_semidistance()?, e))
}

fn labelled(e: &TrajectoryEnsemble, i: usize) -> Labelled {
    let slice = e.first_present(i).unwrap_or(0);
    Labelled { index: i, id: e.ids()[i], position: e.position(i, slice).map(<[f64]>::to_vec) }
}

pub fn cornerstones(a: CornerstonesArgs) -> Result<()> {
    let kind = SemidistanceKind::parse(&a.kind)?;
    let mut config =
        RunConfig::new(&format!("cornerstones-{}", kind.name()), Input::Workdir, a.common.dir.clone(), a.common.workers);
    config.kind = Some(kind);
    config.units = parse_units(&a.units)?;
    config.cornerstones = Some(CornerstoneParams {
        seed: if a.start.is_some() { None } else { Some(a.seed.unwrap_or(1)) },
        start: a.start,
        max_q: a.max_q,
        stop_factor: a.stop_factor,
    });
    config.validate()?;
    let wd = Workdir::open(&a.common.dir)?;
    let (s, e) = load_semidistance(&wd, kind, &mut config)?;
    let params = config.cornerstones.clone().expect("set above");
    let start = match params.start {
        Some(id) => StartChoice::Explicit(
            e.index_of(id).ok_or_else(|| Error::Validation(format!("no trajectory with id {id}")))?,
        ),
        None => StartChoice::Random(params.seed.unwrap_or(1)),
    };
    let res = find_cornerstones(&s, start, params.max_q, params.stop_factor)?;
    let factor = config.units.factor(e.grid().mean_tau());
    let entries: Vec<CornerstoneEntry> = res
        .cornerstones
        .iter()
        .enumerate()
        .map(|(q, &c)| {
            let l = labelled(&e, c);
            CornerstoneEntry {
                q: q + 1,
                index: c,
                id: l.id,
                position: l.position,
                value: res.values[q] * factor,
                raw_value: res.values[q],
                ratio: (q > 0).then(|| res.values[q] / res.values[q - 1]),
            }
        })
        .collect();
    let mut out = String::new();
    for c in &entries {
        let _ = writeln!(
            out,
            "c{:<3} id={:<8} value={:<12.6} {}",
            c.q,
            c.id,
            c.value,
            c.ratio.map(|r| format!("ratio={r:.3}")).unwrap_or_default()
        );
    }
    let report = CornerstoneReport {
        config_hash: config.hash_hex(),
        kind,
        units: config.units,
        unit_factor: factor,
        c0: labelled(&e, res.c0),
        rng_seed: res.rng_seed,
        stop_factor: res.stop_factor,
        suggested: res.suggested,
        cornerstones: entries,
    };
    wd.commit(&config.command.clone(), &config, &[(cornerstone_file(kind), pretty(&report))])?;
    print!("{out}");
    match res.suggested {
        Some(q) => println!("suggested: {q} cornerstones"),
        None => println!("suggested: none (no drop by a factor {})", params.stop_factor),
    }
    Ok(())
}

/// Cornerstone indices recorded by `cornerstones`, trimmed to `count`.
fn chosen_cornerstones(wd: &Workdir, kind: SemidistanceKind, count: Option<usize>, config: &mut RunConfig) -> Result<Vec<usize>> {
    let name = cornerstone_file(kind);
    let v: serde_json::Value = serde_json::from_slice(&wd.consume(&name, config)?)?;
    let all: Vec<usize> = v["cornerstones"]
        .as_array()
        .ok_or_else(|| Error::Format(format!("{name}: no cornerstones array")))?
        .iter()
        .map(|c| c["index"].as_u64().map(|i| i as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Format(format!("{name}: bad cornerstone index")))?;
    let n = count.or(v["suggested"].as_u64().map(|q| q as usize)).unwrap_or(all.len());
    if n > all.len() {
        return Err(Error::Validation(format!("{name} holds {} cornerstones, {n} requested", all.len())).into());
    }
    Ok(all[..n].to_vec())
}

fn check_slice(e: &TrajectoryEnsemble, slice: usize) -> Result<()> {
    if slice > e.steps() {
        return Err(Error::Validation(format!("slice {slice} exceeds K = {}", e.steps())).into());
    }
    Ok(())
}

pub fn cluster(a: ClusterArgs) -> Result<()> {
    install_pool(a.common.workers);
    let kind = SemidistanceKind::parse(&a.kind)?;
    let mut config = RunConfig::new(&format!("cluster-{}", kind.name()), Input::Workdir, a.common.dir.clone(), a.common.workers);
    config.kind = Some(kind);
    config.m = Some(a.m);
    config.cluster = Some(ClusterParams { count: a.count, slice: a.slice });
    config.validate()?;
    let wd = Workdir::open(&a.common.dir)?;
    let (s, e) = load_semidistance(&wd, kind, &mut config)?;
    check_slice(&e, a.slice)?;
    let cs = chosen_cornerstones(&wd, kind, a.count, &mut config)?;
    let hard = hard_clusters(&s, &cs)?;
    let aff = fuzzy_affiliations(&s, &cs, a.m)?;
    let hash = config.hash_hex();
    let mut out = csv_stamp(&hash);
    out.push_str("traj_id");
    for d in 1..=e.dim() {
        let _ = write!(out, ",x{d}");
    }
    out.push_str(",cluster");
    for q in 1..=cs.len() {
        let _ = write!(out, ",u{q}");
    }
    out.push('\n');
    for j in 0..e.len() {
        let _ = write!(out, "{}", e.ids()[j]);
        match e.position(j, a.slice) {
            Some(x) => x.iter().for_each(|c| {
                let _ = write!(out, ",{}", fmt_num(*c));
            }),
            None => (0..e.dim()).for_each(|_| out.push(',')),
        }
        let _ = write!(out, ",{}", hard[j] + 1);
        for u in aff.column(j) {
            let _ = write!(out, ",{}", fmt_num(u));
        }
        out.push('\n');
    }
    let name = format!("clusters-{}.csv", kind.name());
    wd.commit(&config.command.clone(), &config, &[(name.clone(), out.into_bytes())])?;
    let mut sizes = vec![0usize; cs.len()];
    hard.iter().for_each(|&q| sizes[q] += 1);
    println!("{}: {} cornerstones, cluster sizes {:?}", wd.path(&name).display(), cs.len(), sizes);
    Ok(())
}

pub fn export_plot(a: ExportArgs) -> Result<()> {
    install_pool(a.common.workers);
    let kind = a.kind.as_deref().map(SemidistanceKind::parse).transpose()?;
    if !matches!(a.format.as_str(), "csv" | "json") {
        return Err(Error::Parameter(format!("unknown format `{}` (csv, json)", a.format)).into());
    }
    let needs_kind = a.value != "rate";
    if needs_kind && kind.is_none() {
        return Err(Error::Validation(format!("--value {} needs --kind", a.value)).into());
    }
    let mut stem = format!("plot-{}", a.value);
    if let (true, Some(k)) = (needs_kind, kind) {
        let _ = write!(stem, "-{}", k.name());
    }
    match a.value.as_str() {
        "distance" | "rate" => {
            let id = a.from.ok_or_else(|| Error::Validation(format!("--value {} needs --from", a.value)))?;
            let _ = write!(stem, "-from{id}");
        }
        "affiliation" => {
            let q = a.cornerstone.ok_or_else(|| Error::Validation("--value affiliation needs --cornerstone".into()))?;
            let _ = write!(stem, "-q{q}");
        }
        "cluster" => {}
        other => return Err(Error::Parameter(format!("unknown value `{other}` (distance, rate, affiliation, cluster)")).into()),
    }
    let _ = write!(stem, "-k{}", a.slice);
    let mut config = RunConfig::new(&format!("export-{stem}"), Input::Workdir, a.common.dir.clone(), a.common.workers);
    config.kind = if needs_kind { kind } else { None };
    config.units = parse_units(&a.units)?;
    let fuzzy = matches!(a.value.as_str(), "affiliation" | "cluster");
    if fuzzy {
        config.m = Some(a.m);
        config.cluster = Some(ClusterParams { count: a.count, slice: a.slice });
    }
    config.export = Some(ExportParams {
        slice: a.slice,
        value: a.value.clone(),
        from: a.from,
        cornerstone: a.cornerstone,
        format: a.format.clone(),
    });
    config.validate()?;
    let wd = Workdir::open(&a.common.dir)?;

    let (values, e): (Vec<f64>, TrajectoryEnsemble) = if a.value == "rate" {
        let f = read_matrix(&wd, RATES, &mut config)?;
        let e = load_workdir_ensemble(&wd, &mut config)?;
        check_matches(&e, &f, RATES)?;
        let r = f.to_rates()?;
        let from = index_of(&e, a.from)?;
        let factor = config.units.factor(e.grid().mean_tau());
        (r.row(from).iter().map(|v| v * factor).collect(), e)
    } else {
        let kind = kind.expect("checked above");
        let (s, e) = load_semidistance(&wd, kind, &mut config)?;
        let values = match a.value.as_str() {
            "distance" => {
                let from = index_of(&e, a.from)?;
                let factor = config.units.factor(e.grid().mean_tau());
                s.row(from).iter().map(|v| v * factor).collect()
            }
            "affiliation" => {
                let cs = chosen_cornerstones(&wd, kind, a.count, &mut config)?;
                let q = a.cornerstone.expect("checked above");
                if q == 0 || q > cs.len() {
                    return Err(Error::Validation(format!("--cornerstone must lie in 1..={}", cs.len())).into());
                }
                let aff = fuzzy_affiliations(&s, &cs, a.m)?;
                (0..e.len()).map(|j| aff.get(q - 1, j)).collect()
            }
            _ => {
                let cs = chosen_cornerstones(&wd, kind, a.count, &mut config)?;
                hard_clusters(&s, &cs)?.into_iter().map(|q| (q + 1) as f64).collect()
            }
        };
        (values, e)
    };
    check_slice(&e, a.slice)?;
    let hash = config.hash_hex();
    let rows: Vec<(u64, &[f64], f64)> = (0..e.len())
        .filter_map(|j| e.position(j, a.slice).map(|x| (e.ids()[j], x, values[j])))
        .collect();
    let bytes = if a.format == "csv" {
        let mut out = csv_stamp(&hash);
        out.push_str("traj_id");
        for d in 1..=e.dim() {
            let _ = write!(out, ",x{d}");
        }
        out.push_str(",value\n");
        for (id, x, v) in &rows {
            let _ = write!(out, "{id}");
            for c in *x {
                let _ = write!(out, ",{}", fmt_num(*c));
            }
            let _ = writeln!(out, ",{}", fmt_num(*v));
        }
        out.into_bytes()
    } else {
        let points: Vec<_> = rows.iter().map(|(id, x, v)| json!({"id": id, "position": x, "value": v})).collect();
        pretty(&json!({
            "config_hash": hash,
            "slice": a.slice,
            "time": e.grid().times()[a.slice],
            "value": a.value,
            "kind": config.kind,
            "units": config.units,
            "points": points,
        }))
    };
    let name = format!("{stem}.{}", a.format);
    wd.commit(&config.command.clone(), &config, &[(name.clone(), bytes)])?;
    println!("{}: {} points", wd.path(&name).display(), rows.len());
    Ok(())
}

fn index_of(e: &TrajectoryEnsemble, id: Option<u64>) -> Result<usize> {
    let id = id.expect("checked by caller");
    e.index_of(id).ok_or_else(|| Error::Validation(format!("no trajectory with id {id}")).into())
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    if !a.dir.is_dir() {
        return Err(Error::Validation(format!("{} is not a directory", a.dir.display())).into());
    }
    let wd = Workdir::open(&a.dir)?;
    let (n, problems) = wd.verify()?;
    for p in &problems {
        println!("FAIL {p}");
    }
    if problems.is_empty() {
        println!("{n} artifacts verified");
        Ok(())
    } else {
        Err(Error::Checksum(format!("{} of {n} artifacts", problems.len())).into())
    }
}
