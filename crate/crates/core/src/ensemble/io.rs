//! CSV (+ JSON sidecar) and JSON persistence for trajectory ensembles.
//!
//! Missing samples are simply absent rows. Floats are written with 17
//! significant digits, which round-trips every finite `f64`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Geometry, TimeGrid, TrajectoryEnsemble};
use crate::error::{Error, Result};

/// Time table and periods accompanying a CSV ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub times: Vec<f64>,
    pub periods: Vec<Option<f64>>,
}

impl Sidecar {
    pub fn of(e: &TrajectoryEnsemble) -> Self {
        Self { times: e.grid().times().to_vec(), periods: e.geometry().periods().to_vec() }
    }

    pub fn to_json(&self) -> String {
        let times: Vec<String> = self.times.iter().map(|t| fmt_f64(*t)).collect();
        format!("{{\"times\":[{}],\"periods\":[{}]}}\n", times.join(","), fmt_periods(&self.periods))
    }
}

/// 17 significant digits.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_periods(periods: &[Option<f64>]) -> String {
    periods
        .iter()
        .map(|p| p.map(fmt_f64).unwrap_or_else(|| "null".into()))
        .collect::<Vec<_>>()
        .join(",")
}

/// Read `traj_id,time_index,x1,...,xd` rows.
pub fn load_csv<R: Read>(source: R, sidecar: &Sidecar) -> Result<TrajectoryEnsemble> {
    let geometry = Geometry::new(sidecar.periods.clone())?;
    let grid = TimeGrid::new(sidecar.times.clone())?;
    let dim = geometry.dim();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);

    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    let expected: Vec<String> = ["traj_id".to_string(), "time_index".to_string()]
        .into_iter()
        .chain((1..=dim).map(|d| format!("x{d}")))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`, got `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut builder = TrajectoryEnsemble::builder(geometry, grid);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::Parse { line, msg };
        if rec.len() != dim + 2 {
            return Err(bad(format!("expected {} fields, got {}", dim + 2, rec.len())));
        }
        let id: u64 = rec[0].parse().map_err(|e| bad(format!("traj_id `{}`: {e}", &rec[0])))?;
        let k: usize = rec[1].parse().map_err(|e| bad(format!("time_index `{}`: {e}", &rec[1])))?;
        let x = (2..dim + 2)
            .map(|c| rec[c].parse::<f64>().map_err(|e| bad(format!("coordinate `{}`: {e}", &rec[c]))))
            .collect::<Result<Vec<_>>>()?;
        builder.push(id, k, x).map_err(|e| match e {
            Error::Duplicate { .. } => e,
            other => bad(other.to_string()),
        })?;
    }
    builder.build()
}

pub fn save_csv<W: Write>(e: &TrajectoryEnsemble, mut sink: W) -> Result<()> {
    let mut header = String::from("traj_id,time_index");
    for d in 1..=e.dim() {
        header.push_str(&format!(",x{d}"));
    }
    writeln!(sink, "{header}")?;
    for (i, id) in e.ids().iter().enumerate() {
        for k in 0..=e.steps() {
            if let Some(x) = e.position(i, k) {
                write!(sink, "{id},{k}")?;
                for c in x {
                    write!(sink, ",{}", fmt_f64(*c))?;
                }
                writeln!(sink)?;
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonEnsemble {
    dim: usize,
    times: Vec<f64>,
    periods: Vec<Option<f64>>,
    trajectories: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

/// Read `{dim, times, periods, trajectories: {id: {time_index: [coords]}}}`.
pub fn load_json<R: Read>(source: R) -> Result<TrajectoryEnsemble> {
    let raw: JsonEnsemble = serde_json::from_reader(source)?;
    if raw.periods.len() != raw.dim {
        return Err(Error::Format(format!(
            "periods has {} entries for dim {}",
            raw.periods.len(),
            raw.dim
        )));
    }
    let mut builder = TrajectoryEnsemble::builder(Geometry::new(raw.periods)?, TimeGrid::new(raw.times)?);
    for (id, samples) in raw.trajectories {
        let id: u64 = id.parse().map_err(|_| Error::Format(format!("bad trajectory id `{id}`")))?;
        for (k, x) in samples {
            let k: usize = k.parse().map_err(|_| Error::Format(format!("bad time index `{k}`")))?;
            builder.push(id, k, x)?;
        }
    }
    builder.build()
}

pub fn save_json<W: Write>(e: &TrajectoryEnsemble, mut sink: W) -> Result<()> {
    let times: Vec<String> = e.grid().times().iter().map(|t| fmt_f64(*t)).collect();
    write!(
        sink,
        "{{\"dim\":{},\"times\":[{}],\"periods\":[{}],\"trajectories\":{{",
        e.dim(),
        times.join(","),
        fmt_periods(e.geometry().periods())
    )?;
    for (i, id) in e.ids().iter().enumerate() {
        if i > 0 {
            write!(sink, ",")?;
        }
        write!(sink, "\"{id}\":{{")?;
        let mut first = true;
        for k in 0..=e.steps() {
            if let Some(x) = e.position(i, k) {
                if !first {
                    write!(sink, ",")?;
                }
                first = false;
                let c: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
                write!(sink, "\"{k}\":[{}]", c.join(","))?;
            }
        }
        write!(sink, "}}")?;
    }
    writeln!(sink, "}}}}")?;
    Ok(())
}
