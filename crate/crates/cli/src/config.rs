use std::collections::BTreeMap;
use std::path::PathBuf;

use ldcoh_core::flows::{FlowSpec, IntegratorConfig, SeedSpec};
use ldcoh_core::presets::{Profile, Units};
use ldcoh_core::{Error, SemidistanceKind, Solver};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Where the trajectories of a run come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum Input {
    Generated {
        preset: Option<String>,
        profile: Option<Profile>,
        flow: FlowSpec,
        seeds: SeedSpec,
        steps: usize,
        dt: f64,
        t0: f64,
        integrator: IntegratorConfig,
        map_tail_seed: u64,
    },
    File {
        path: PathBuf,
        sidecar: Option<PathBuf>,
        times: Option<Vec<f64>>,
    },
    /// Artifacts already present in the work directory.
    Workdir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerstoneParams {
    pub seed: Option<u64>,
    pub start: Option<u64>,
    pub max_q: usize,
    pub stop_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    pub count: Option<usize>,
    pub slice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportParams {
    pub slice: usize,
    pub value: String,
    pub from: Option<u64>,
    pub cornerstone: Option<usize>,
    pub format: String,
}

/// Complete description of one CLI invocation. Persisted next to its
/// outputs; its hash is embedded in every artifact it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub input: Input,
    /// SHA-256 of every file the command consumed.
    pub inputs: BTreeMap<String, String>,
    pub alpha: Option<f64>,
    pub solver: Option<Solver>,
    pub kind: Option<SemidistanceKind>,
    pub cornerstones: Option<CornerstoneParams>,
    pub m: Option<f64>,
    pub cluster: Option<ClusterParams>,
    pub export: Option<ExportParams>,
    pub units: Units,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl RunConfig {
    pub fn new(command: &str, input: Input, out_dir: PathBuf, workers: usize) -> Self {
        Self {
            command: command.to_string(),
            input,
            inputs: BTreeMap::new(),
            alpha: None,
            solver: None,
            kind: None,
            cornerstones: None,
            m: None,
            cluster: None,
            export: None,
            units: Units::Raw,
            out_dir,
            workers,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("alpha must lie in (0, 1), got {a}"));
            }
        }
        if let Some(m) = self.m {
            if !(m > 1.0 && m.is_finite()) {
                return bad(format!("fuzziness m must exceed 1, got {m}"));
            }
        }
        if let Some(c) = &self.cornerstones {
            if c.max_q == 0 {
                return bad("--max must be at least 1".into());
            }
            if !(c.stop_factor > 0.0 && c.stop_factor.is_finite()) {
                return bad(format!("stop factor must be positive, got {}", c.stop_factor));
            }
        }
        if let Some(c) = &self.cluster {
            if c.count == Some(0) {
                return bad("--count must be at least 1".into());
            }
        }
        match &self.input {
            Input::Generated { flow, seeds, steps, dt, t0, integrator, .. } => {
                flow.validate()?;
                if *steps == 0 {
                    return bad("--steps must be at least 1".into());
                }
                if !(*dt > 0.0 && dt.is_finite() && t0.is_finite()) {
                    return bad(format!("--dt must be positive and finite, got {dt}"));
                }
                if integrator.substeps == 0 {
                    return bad("--substeps must be at least 1".into());
                }
                seeds.points(flow)?;
            }
            Input::File { path, sidecar, times } => {
                // JSON ensembles carry their own times
                let json = path.extension().is_some_and(|x| x == "json");
                if !json && sidecar.is_some() == times.is_some() {
                    return bad("a CSV ensemble needs exactly one of --sidecar and --times".into());
                }
            }
            Input::Workdir => {}
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON with the output directory and the
    /// worker count blanked; neither can change a result.
    pub fn hash(&self) -> [u8; 32] {
        let mut view = self.clone();
        view.out_dir = PathBuf::new();
        view.workers = 0;
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        Sha256::digest(bytes).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
