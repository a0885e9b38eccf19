//! Analytic benchmark flows and maps, an RK4 integrator, and ensemble
//! generation.

use std::f64::consts::PI;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{wrap_coord, Geometry, TimeGrid, TrajectoryEnsemble};
use crate::error::{Error, Result};

/// Periodically forced double gyre on `[0,2] x [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleGyre {
    pub amplitude: f64,
    pub beta: f64,
    pub omega: f64,
}

impl Default for DoubleGyre {
    fn default() -> Self {
        Self { amplitude: 0.25, beta: 0.25, omega: 2.0 * PI }
    }
}

/// Perturbed Bickley jet on the cylinder `[0, pi r_e) x [-3, 3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BickleyJet {
    pub u0: f64,
    pub length: f64,
    pub r_e: f64,
    /// Phase speeds as multiples of `u0`.
    pub c: [f64; 3],
    pub amplitudes: [f64; 3],
    pub half_width: f64,
}

impl Default for BickleyJet {
    fn default() -> Self {
        Self {
            u0: 5.414,
            length: 1.77,
            r_e: 6.371,
            c: [0.1446, 0.205, 0.461],
            amplitudes: [0.0075, 0.15, 0.3],
            half_width: 3.0,
        }
    }
}

impl BickleyJet {
    fn wavenumber(&self, n: usize) -> f64 {
        2.0 * (n + 1) as f64 / self.r_e
    }

    pub fn period(&self) -> f64 {
        PI * self.r_e
    }
}

/// Benchmark dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FlowSpec {
    DoubleGyre(DoubleGyre),
    BickleyJet(BickleyJet),
    RotatingDoubleGyre,
    /// Two invariant halves, each carrying the circle-quadrupling map.
    MapTwoMixing,
    /// Identity on the outer quarters, a mixing doubling map in between.
    MapStaticMixingStatic,
    /// `v = 0` on a box; `domain` holds one `[lo, hi]` per dimension.
    ZeroFlow { domain: Vec<[f64; 2]> },
}

impl FlowSpec {
    pub fn double_gyre() -> Self {
        FlowSpec::DoubleGyre(DoubleGyre::default())
    }

    pub fn bickley_jet() -> Self {
        FlowSpec::BickleyJet(BickleyJet::default())
    }

    pub fn zero_flow_unit_interval() -> Self {
        FlowSpec::ZeroFlow { domain: vec![[0.0, 1.0]] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowSpec::DoubleGyre(_) => "double_gyre",
            FlowSpec::BickleyJet(_) => "bickley_jet",
            FlowSpec::RotatingDoubleGyre => "rotating_double_gyre",
            FlowSpec::MapTwoMixing => "map_two_mixing",
            FlowSpec::MapStaticMixingStatic => "map_static_mixing_static",
            FlowSpec::ZeroFlow { .. } => "zero_flow",
        }
    }

    pub fn is_map(&self) -> bool {
        matches!(self, FlowSpec::MapTwoMixing | FlowSpec::MapStaticMixingStatic)
    }

    pub fn domain(&self) -> Vec<[f64; 2]> {
        match self {
            FlowSpec::DoubleGyre(_) => vec![[0.0, 2.0], [0.0, 1.0]],
            FlowSpec::BickleyJet(b) => vec![[0.0, b.period()], [-b.half_width, b.half_width]],
            FlowSpec::RotatingDoubleGyre => vec![[0.0, 1.0], [0.0, 1.0]],
            FlowSpec::MapTwoMixing | FlowSpec::MapStaticMixingStatic => vec![[0.0, 1.0]],
            FlowSpec::ZeroFlow { domain } => domain.clone(),
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        match self {
            FlowSpec::BickleyJet(b) => Geometry::new(vec![Some(b.period()), None]),
            other => Geometry::euclidean(other.domain().len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FlowSpec::ZeroFlow { domain } = self {
            if domain.is_empty() || domain.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(Error::Parameter("zero_flow domain needs lo < hi per dimension".into()));
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let d = self.domain().len();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(())
    }

    /// Stream function `psi` with `v = (-d psi/d x2, d psi/d x1)`, for the
    /// two-dimensional flows.
    pub fn stream_function(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self {
            FlowSpec::DoubleGyre(p) => {
                let (f, _) = gyre_forcing(p, t, x[0]);
                Ok(p.amplitude * (PI * f).sin() * (PI * x[1]).sin())
            }
            FlowSpec::BickleyJet(b) => {
                let ul = b.u0 * b.length;
                let y = x[1] / b.length;
                let sech2 = 1.0 / y.cosh().powi(2);
                let waves: f64 = (0..3)
                    .map(|n| b.amplitudes[n] * (b.wavenumber(n) * (x[0] - b.c[n] * b.u0 * t)).cos())
                    .sum();
                Ok(-ul * y.tanh() + ul * sech2 * waves)
            }
            FlowSpec::RotatingDoubleGyre => {
                let s = t * t * (3.0 - 2.0 * t);
                let pp = (2.0 * PI * x[0]).sin() * (PI * x[1]).sin();
                let pf = (PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
                Ok((1.0 - s) * pp + s * pf)
            }
            _ => Err(Error::UnsupportedVariant(self.name())),
        }
    }

    pub fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut v = vec![0.0; x.len()];
        self.velocity_into(t, x, &mut v)?;
        Ok(v)
    }

    fn velocity_into(&self, t: f64, x: &[f64], v: &mut [f64]) -> Result<()> {
        match self {
            FlowSpec::DoubleGyre(p) => {
                let (f, dfdx) = gyre_forcing(p, t, x[0]);
                let pa = PI * p.amplitude;
                v[0] = -pa * (PI * f).sin() * (PI * x[1]).cos();
                v[1] = pa * (PI * f).cos() * (PI * x[1]).sin() * dfdx;
            }
            FlowSpec::BickleyJet(b) => {
                let y = x[1] / b.length;
                let sech2 = 1.0 / y.cosh().powi(2);
                let tanh = y.tanh();
                let (mut waves, mut dwaves) = (0.0, 0.0);
                for n in 0..3 {
                    let k = b.wavenumber(n);
                    let phase = k * (x[0] - b.c[n] * b.u0 * t);
                    waves += b.amplitudes[n] * phase.cos();
                    dwaves -= b.amplitudes[n] * k * phase.sin();
                }
                // d/dx2 of sech^2(x2/L) is -2 sech^2 tanh / L
                v[0] = b.u0 * sech2 + 2.0 * b.u0 * sech2 * tanh * waves;
                v[1] = b.u0 * b.length * sech2 * dwaves;
            }
            FlowSpec::RotatingDoubleGyre => {
                let s = t * t * (3.0 - 2.0 * t);
                let (sx1, cx1) = (PI * x[0]).sin_cos();
                let (sx2, cx2) = (PI * x[1]).sin_cos();
                let (s2x1, c2x1) = (2.0 * PI * x[0]).sin_cos();
                let (s2x2, c2x2) = (2.0 * PI * x[1]).sin_cos();
                let dpsi_dx1 = (1.0 - s) * 2.0 * PI * c2x1 * sx2 + s * PI * cx1 * s2x2;
                let dpsi_dx2 = (1.0 - s) * PI * s2x1 * cx2 + s * 2.0 * PI * sx1 * c2x2;
                v[0] = -dpsi_dx2;
                v[1] = dpsi_dx1;
            }
            FlowSpec::ZeroFlow { .. } => v.iter_mut().for_each(|c| *c = 0.0),
            FlowSpec::MapTwoMixing | FlowSpec::MapStaticMixingStatic => {
                return Err(Error::UnsupportedVariant(self.name()))
            }
        }
        Ok(())
    }

    /// One application of a discrete map in `f64` arithmetic.
    pub fn map_apply(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Parameter(format!("map argument {x} outside [0, 1]")));
        }
        match self {
            FlowSpec::MapTwoMixing => Ok(if x < 0.5 {
                (4.0 * x) % 0.5
            } else {
                (4.0 * (x - 0.5)) % 0.5 + 0.5
            }),
            FlowSpec::MapStaticMixingStatic => Ok(if (0.25..=0.75).contains(&x) {
                (2.0 * (x - 0.25)) % 0.5 + 0.25
            } else {
                x
            }),
            _ => Err(Error::UnsupportedVariant(self.name())),
        }
    }
}

/// `f(t, z)` and `df/dz` of the double gyre.
fn gyre_forcing(p: &DoubleGyre, t: f64, z: f64) -> (f64, f64) {
    let eps = p.beta * (p.omega * t).sin();
    (eps * z * z + (1.0 - 2.0 * eps) * z, 2.0 * eps * z + 1.0 - 2.0 * eps)
}

/// Fixed-step classical RK4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// RK4 steps per sampling interval.
    pub substeps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { substeps: 10 }
    }
}

/// Keeps points inside the box: wraps periodic coordinates, clamps the
/// others and counts the clamps.
struct Boundary {
    domain: Vec<[f64; 2]>,
    periods: Vec<Option<f64>>,
}

impl Boundary {
    fn of(spec: &FlowSpec) -> Result<Self> {
        Ok(Self { domain: spec.domain(), periods: spec.geometry()?.periods().to_vec() })
    }

    fn apply(&self, x: &mut [f64], clamps: &mut usize) {
        for ((xi, [lo, hi]), p) in x.iter_mut().zip(&self.domain).zip(&self.periods) {
            if let Some(p) = *p {
                *xi = lo + wrap_coord(*xi - lo, p);
            } else if *xi < *lo || *xi > *hi {
                *xi = xi.clamp(*lo, *hi);
                *clamps += 1;
            }
        }
    }
}

/// Integrate `x0` from `t0` to `t1` with `cfg.substeps` RK4 steps.
pub fn advect(spec: &FlowSpec, x0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    let mut clamps = 0;
    let boundary = Boundary::of(spec)?;
    let mut x = x0.to_vec();
    advect_in_place(spec, &boundary, &mut x, t0, t1, cfg, &mut clamps)?;
    Ok(x)
}

fn advect_in_place(
    spec: &FlowSpec,
    boundary: &Boundary,
    x: &mut [f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    clamps: &mut usize,
) -> Result<()> {
    spec.check_dim(x)?;
    if spec.is_map() {
        return Err(Error::UnsupportedVariant(spec.name()));
    }
    if cfg.substeps == 0 {
        return Err(Error::Parameter("substeps must be >= 1".into()));
    }
    if !(t1 >= t0) {
        return Err(Error::Parameter(format!("advect needs t1 >= t0, got {t0} -> {t1}")));
    }
    if t1 == t0 {
        return Ok(());
    }
    let d = x.len();
    let h = (t1 - t0) / cfg.substeps as f64;
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for n in 0..cfg.substeps {
        let t = t0 + n as f64 * h;
        spec.velocity_into(t, x, &mut k1)?;
        for c in 0..d {
            tmp[c] = x[c] + 0.5 * h * k1[c];
        }
        spec.velocity_into(t + 0.5 * h, &tmp, &mut k2)?;
        for c in 0..d {
            tmp[c] = x[c] + 0.5 * h * k2[c];
        }
        spec.velocity_into(t + 0.5 * h, &tmp, &mut k3)?;
        for c in 0..d {
            tmp[c] = x[c] + h * k3[c];
        }
        spec.velocity_into(t + h, &tmp, &mut k4)?;
        for c in 0..d {
            x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at t = {}", t + h)));
        }
        boundary.apply(x, clamps);
    }
    Ok(())
}

/// Initial conditions for [`generate_ensemble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSpec {
    /// Cell-centred uniform grid with `counts[d]` points along dimension `d`.
    Grid { counts: Vec<usize> },
    /// `n` equispaced points on a one-dimensional domain, endpoints included.
    Linspace { n: usize },
    Explicit { points: Vec<Vec<f64>> },
    /// `n` points uniform in the domain box.
    Random { n: usize, seed: u64 },
}

impl SeedSpec {
    pub fn points(&self, spec: &FlowSpec) -> Result<Vec<Vec<f64>>> {
        let domain = spec.domain();
        let pts = match self {
            SeedSpec::Grid { counts } => {
                if counts.len() != domain.len() || counts.iter().any(|&c| c == 0) {
                    return Err(Error::Parameter(format!(
                        "grid needs {} positive counts, got {counts:?}",
                        domain.len()
                    )));
                }
                let axes: Vec<Vec<f64>> = counts
                    .iter()
                    .zip(&domain)
                    .map(|(&n, [lo, hi])| (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect())
                    .collect();
                // first coordinate varies slowest
                let mut pts = vec![vec![]];
                for axis in &axes {
                    pts = pts
                        .into_iter()
                        .flat_map(|p: Vec<f64>| {
                            axis.iter().map(move |&c| {
                                let mut q = p.clone();
                                q.push(c);
                                q
                            })
                        })
                        .collect();
                }
                pts
            }
            SeedSpec::Linspace { n } => {
                if domain.len() != 1 || *n < 2 {
                    return Err(Error::Parameter("linspace seeds need a 1-D domain and n >= 2".into()));
                }
                let [lo, hi] = domain[0];
                (0..*n).map(|i| vec![lo + (hi - lo) * i as f64 / (*n - 1) as f64]).collect()
            }
            SeedSpec::Explicit { points } => points.clone(),
            SeedSpec::Random { n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*n)
                    .map(|_| domain.iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)).collect())
                    .collect()
            }
        };
        if pts.is_empty() {
            return Err(Error::Parameter("no seeds".into()));
        }
        for p in &pts {
            spec.check_dim(p)?;
            if p.iter().zip(&domain).any(|(c, [lo, hi])| !(lo <= c && c <= hi)) {
                return Err(Error::Parameter(format!("seed {p:?} outside domain {domain:?}")));
            }
        }
        Ok(pts)
    }
}

/// Ensemble plus the number of boundary clamps the integrator applied.
#[derive(Debug, Clone)]
pub struct Generated {
    pub ensemble: TrajectoryEnsemble,
    pub clamp_events: usize,
}

/// Extra binary digits carried by discrete-map orbits on top of the two
/// bits per step the maps consume.
const MAP_GUARD_BITS: usize = 128;

/// Orbits of all seeds sampled on `grid`. For discrete maps one step is
/// one application of the map; `map_tail_seed` fills the digits below
/// `f64` resolution (see [`map_orbit`]).
pub fn generate_ensemble(
    spec: &FlowSpec,
    seeds: &SeedSpec,
    grid: &TimeGrid,
    cfg: &IntegratorConfig,
    map_tail_seed: u64,
) -> Result<Generated> {
    spec.validate()?;
    let points = seeds.points(spec)?;
    let boundary = Boundary::of(spec)?;
    let orbits: Vec<Result<(Vec<Vec<f64>>, usize)>> = if spec.is_map() {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = ChaCha8Rng::seed_from_u64(map_tail_seed);
                rng.set_stream(i as u64);
                let orbit = map_orbit(spec, p[0], grid.steps(), rng.next_u64())?;
                Ok((orbit.into_iter().map(|x| vec![x]).collect(), 0))
            })
            .collect()
    } else {
        points
            .par_iter()
            .map(|p| {
                let mut clamps = 0;
                let mut x = p.clone();
                let mut orbit = Vec::with_capacity(grid.steps() + 1);
                orbit.push(x.clone());
                for k in 0..grid.steps() {
                    let (t0, t1) = (grid.times()[k], grid.times()[k + 1]);
                    advect_in_place(spec, &boundary, &mut x, t0, t1, cfg, &mut clamps)?;
                    orbit.push(x.clone());
                }
                Ok((orbit, clamps))
            })
            .collect()
    };
    let mut trajectories = Vec::with_capacity(orbits.len());
    let mut clamp_events = 0;
    for o in orbits {
        let (orbit, c) = o?;
        clamp_events += c;
        trajectories.push(orbit);
    }
    let ensemble = TrajectoryEnsemble::from_full(spec.geometry()?, grid.clone(), &trajectories)?;
    Ok(Generated { ensemble, clamp_events })
}

/// Orbit `x, phi(x), ..., phi^steps(x)` of a discrete map, computed in exact
/// binary fixed point.
///
/// Both maps shift binary digits out at the top, so `f64` orbits collapse
/// onto dyadic fixed points after about 26 steps. The seed is extended
/// below its last `f64` digit with pseudo-random digits derived from
/// `tail`, and the orbit is iterated with enough precision that every
/// reported value is exact to `f64` rounding.
pub fn map_orbit(spec: &FlowSpec, x0: f64, steps: usize, tail: u64) -> Result<Vec<f64>> {
    spec.map_apply(x0)?;
    let prec = 2 * steps + MAP_GUARD_BITS;
    let one = BigUint::one() << prec;
    let half = BigUint::one() << (prec - 1);
    let quarter = BigUint::one() << (prec - 2);
    let three_quarters = &half + &quarter;

    let (mut x, lsb) = to_fixed(x0, prec);
    // random digits below a quarter ulp of the seed, so the seed
    // still rounds to itself; an exact zero stays on its fixed point
    let tail_bits = if x0 == 0.0 { 0 } else { (prec as i64 + lsb - 2).max(0) as usize };
    let mut rng = ChaCha8Rng::seed_from_u64(tail);
    let mut noise = BigUint::zero();
    for _ in 0..tail_bits.div_ceil(64) {
        noise = (noise << 64u32) + BigUint::from(rng.next_u64());
    }
    noise %= BigUint::one() << tail_bits;
    if &x + &noise <= one {
        x += noise;
    } else {
        x -= noise;
    }

    let mut out = Vec::with_capacity(steps + 1);
    out.push(from_fixed(&x, prec));
    for _ in 0..steps {
        x = match spec {
            FlowSpec::MapTwoMixing => {
                if x < half {
                    (&x << 2u32) % &half
                } else {
                    ((&x - &half) << 2u32) % &half + &half
                }
            }
            FlowSpec::MapStaticMixingStatic => {
                if x >= quarter && x <= three_quarters {
                    ((&x - &quarter) << 1u32) % &half + &quarter
                } else {
                    x
                }
            }
            _ => return Err(Error::UnsupportedVariant(spec.name())),
        };
        out.push(from_fixed(&x, prec));
    }
    Ok(out)
}

/// `x * 2^prec` (truncated) and the exponent of the last mantissa digit.
fn to_fixed(x: f64, prec: usize) -> (BigUint, i64) {
    if x == 0.0 {
        return (BigUint::zero(), 0);
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1 << 52), exp - 1075) };
    let shift = prec as i64 + e;
    let fixed = if shift >= 0 {
        BigUint::from(mant) << shift as usize
    } else {
        BigUint::from(mant) >> (-shift) as usize
    };
    (fixed, e)
}

fn from_fixed(x: &BigUint, prec: usize) -> f64 {
    if x.bits() > prec as u64 {
        return 1.0;
    }
    // 64 leading bits plus a sticky bit give correct rounding to 53 bits
    let shift = prec - 64;
    let mut top = (x >> shift).to_u64().expect("at most 64 bits");
    if x.trailing_zeros().is_some_and(|z| z < shift as u64) {
        top |= 1;
    }
    top as f64 * 2f64.powi(-64)
}
