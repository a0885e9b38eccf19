//! Benchmark experiment configurations, each with a reduced `ci` profile
//! and a `full` profile at the reference resolution.

use serde::{Deserialize, Serialize};

use crate::ensemble::TimeGrid;
use crate::error::{Error, Result};
use crate::flows::{FlowSpec, SeedSpec};
use crate::rates::SemidistanceKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Ci,
    Full,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ci" => Ok(Profile::Ci),
            "full" => Ok(Profile::Full),
            _ => Err(Error::Parameter(format!("unknown profile `{s}` (ci, full)"))),
        }
    }
}

/// How values are reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// length^2 / time, as computed.
    #[default]
    Raw,
    /// Multiplied by the mean step length.
    PerTau,
    /// Multiplied by twice the mean step length, i.e. in units of the
    /// one-step cost `|dx|^2 / tau`.
    TwoTau,
}

impl Units {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Units::Raw),
            "per-tau" => Ok(Units::PerTau),
            "two-tau" => Ok(Units::TwoTau),
            _ => Err(Error::Parameter(format!("unknown units `{s}` (raw, per-tau, two-tau)"))),
        }
    }

    pub fn factor(self, mean_tau: f64) -> f64 {
        match self {
            Units::Raw => 1.0,
            Units::PerTau => mean_tau,
            Units::TwoTau => 2.0 * mean_tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub flow: FlowSpec,
    pub seeds: SeedSpec,
    pub steps: usize,
    pub tau: f64,
    pub alpha: f64,
    pub kind: SemidistanceKind,
    pub max_q: usize,
    pub start_seed: u64,
}

impl Preset {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(0.0, self.tau, self.steps)
    }
}

pub const NAMES: [&str; 5] = ["double-gyre", "rotating-double-gyre", "bickley-jet", "map-two-mixing", "map-static-mixing-static"];

pub fn preset(name: &str, profile: Profile) -> Result<Preset> {
    let full = profile == Profile::Full;
    let grid = |nx: usize, ny: usize| SeedSpec::Grid { counts: vec![nx, ny] };
    let (flow, seeds, steps, tau, kind, max_q) = match name {
        "double-gyre" => {
            let seeds = if full { grid(50, 25) } else { grid(30, 15) };
            (FlowSpec::double_gyre(), seeds, 100, 0.2, SemidistanceKind::Meet, 4)
        }
        "rotating-double-gyre" => (FlowSpec::RotatingDoubleGyre, grid(30, 30), 100, 0.01, SemidistanceKind::Cross, 3),
        "bickley-jet" => {
            let seeds = if full { grid(60, 18) } else { grid(30, 9) };
            (FlowSpec::bickley_jet(), seeds, 80, 0.5, SemidistanceKind::Cross, 8)
        }
        "map-two-mixing" => (FlowSpec::MapTwoMixing, SeedSpec::Linspace { n: 100 }, 100, 1.0, SemidistanceKind::Meet, 2),
        "map-static-mixing-static" => {
            (FlowSpec::MapStaticMixingStatic, SeedSpec::Linspace { n: 100 }, 50, 1.0, SemidistanceKind::Meet, 3)
        }
        _ => return Err(Error::Parameter(format!("unknown preset `{name}` ({})", NAMES.join(", ")))),
    };
    Ok(Preset { name: name.to_string(), flow, seeds, steps, tau, alpha: 0.5, kind, max_q, start_seed: 1 })
}
