//! Dense binary container for rate and semidistance matrices.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "LDCOHMAT"
//! version    u32
//! kind       u8       0 rates, 1 cross, 2 meet, 3 l2
//! flags      u8       bit 0: meeting labels follow the values
//! reserved   u16
//! n          u64
//! steps      u64
//! alpha      f64
//! ensemble   u64      ensemble checksum
//! config     32 bytes hash of the producing run configuration
//! values     n*n f64  row-major
//! meeting    n*n u64  optional
//! sha256     32 bytes over everything above
//! ```

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::ensemble::fmt_f64;
use crate::error::{Error, Result};
use crate::rates::{RateMatrix, SemidistanceKind, SemidistanceMatrix};

const MAGIC: &[u8; 8] = b"LDCOHMAT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 8 + 8 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Rates,
    Semidistance(SemidistanceKind),
}

impl MatrixKind {
    fn code(self) -> u8 {
        match self {
            MatrixKind::Rates => 0,
            MatrixKind::Semidistance(SemidistanceKind::Cross) => 1,
            MatrixKind::Semidistance(SemidistanceKind::Meet) => 2,
            MatrixKind::Semidistance(SemidistanceKind::L2) => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => MatrixKind::Rates,
            1 => MatrixKind::Semidistance(SemidistanceKind::Cross),
            2 => MatrixKind::Semidistance(SemidistanceKind::Meet),
            3 => MatrixKind::Semidistance(SemidistanceKind::L2),
            _ => return Err(Error::Format(format!("unknown matrix kind code {c}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Rates => "rates",
            MatrixKind::Semidistance(k) => k.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub kind: MatrixKind,
    pub n: usize,
    pub steps: usize,
    pub alpha: f64,
    pub ensemble_checksum: u64,
    pub config_hash: [u8; 32],
    pub values: Vec<f64>,
    pub meeting: Option<Vec<usize>>,
}

impl MatrixFile {
    pub fn from_rates(r: &RateMatrix, config_hash: [u8; 32]) -> Self {
        Self {
            kind: MatrixKind::Rates,
            n: r.len(),
            steps: r.steps(),
            alpha: r.alpha(),
            ensemble_checksum: r.ensemble_checksum(),
            config_hash,
            values: r.values().to_vec(),
            meeting: None,
        }
    }

    /// Semidistances inherit the provenance of the rates they came from.
    pub fn from_semidistance(s: &SemidistanceMatrix, source: &MatrixFile, config_hash: [u8; 32]) -> Self {
        Self {
            kind: MatrixKind::Semidistance(s.kind()),
            n: s.len(),
            steps: source.steps,
            alpha: source.alpha,
            ensemble_checksum: source.ensemble_checksum,
            config_hash,
            values: s.values().to_vec(),
            meeting: s.meeting().map(<[usize]>::to_vec),
        }
    }

    pub fn to_rates(&self) -> Result<RateMatrix> {
        if self.kind != MatrixKind::Rates {
            return Err(Error::Format(format!("expected a rate matrix, found {}", self.kind.name())));
        }
        RateMatrix::new(self.n, self.values.clone(), self.alpha, self.steps, self.ensemble_checksum)
    }

    pub fn to_semidistance(&self) -> Result<SemidistanceMatrix> {
        let MatrixKind::Semidistance(kind) = self.kind else {
            return Err(Error::Format("expected a semidistance matrix, found rates".into()));
        };
        let s = SemidistanceMatrix::from_values(kind, self.n, self.values.clone())?;
        match &self.meeting {
            Some(m) => s.with_meeting(m.clone()),
            None => Ok(s),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cells = self.n * self.n;
        let extra = if self.meeting.is_some() { cells * 8 } else { 0 };
        let mut out = Vec::with_capacity(HEADER_LEN + cells * 8 + extra + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.push(u8::from(self.meeting.is_some()));
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.steps as u64).to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&self.ensemble_checksum.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(m) = &self.meeting {
            for l in m {
                out.extend_from_slice(&(*l as u64).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Parses and verifies the trailing checksum.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_LEN + 32 || &buf[..8] != MAGIC {
            return Err(Error::Format("not a matrix file".into()));
        }
        let (body, digest) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum("matrix file".into()));
        }
        let u64_at = |at: usize| u64::from_le_bytes(body[at..at + 8].try_into().unwrap());
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported matrix file version {version}")));
        }
        let kind = MatrixKind::from_code(body[12])?;
        let has_meeting = body[13] & 1 == 1;
        let n = usize::try_from(u64_at(16)).map_err(|_| Error::Format("matrix too large".into()))?;
        let steps = u64_at(24) as usize;
        let alpha = f64::from_bits(u64_at(32));
        let ensemble_checksum = u64_at(40);
        let config_hash: [u8; 32] = body[48..80].try_into().unwrap();
        let cells = n.checked_mul(n).ok_or_else(|| Error::Format("matrix too large".into()))?;
        let want = HEADER_LEN + cells * 8 * if has_meeting { 2 } else { 1 };
        if body.len() != want {
            return Err(Error::Format(format!("matrix body has {} bytes, expected {want}", body.len())));
        }
        let values = (0..cells).map(|c| f64::from_bits(u64_at(HEADER_LEN + 8 * c))).collect();
        let meeting = has_meeting.then(|| (0..cells).map(|c| u64_at(HEADER_LEN + 8 * (cells + c)) as usize).collect());
        Ok(Self { kind, n, steps, alpha, ensemble_checksum, config_hash, values, meeting })
    }

    /// One row per line, `inf` for unreachable pairs.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = self.values[i * self.n..(i + 1) * self.n].iter().map(|v| fmt_f64(*v)).collect();
            writeln!(sink, "{}", row.join(","))?;
        }
        Ok(())
    }
}
