//! Uniform-linear-array geometry, multipath MISO channels and per-beam mean
//! received power.
//!
//! Arm labels are 1-based everywhere in the public API. Codeword positions
//! inside [`Codebook`] are 0-based; [`Codebook::beam`] is the only place the
//! two meet.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Norm below which a summed beam is considered to have cancelled out.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid steering config: {0}")]
    InvalidConfig(String),
    #[error("path list is empty")]
    EmptyPaths,
    #[error("invalid path list: {0}")]
    InvalidPaths(String),
    #[error("invalid arm set {first}..={last} for a codebook of {codebook_size} beams")]
    InvalidArmSet {
        first: usize,
        last: usize,
        codebook_size: usize,
    },
    #[error("grouped beam {first}..={last} cancels out (norm {norm:e})")]
    DegenerateBeam {
        first: usize,
        last: usize,
        norm: f64,
    },
    #[error("channel is degenerate: {0}")]
    DegenerateChannel(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("row count mismatch: expected {expected} antenna rows, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
}

/// Array and codebook dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub num_antennas: usize,
    /// Antenna spacing over wavelength, d/λ.
    #[serde(default = "default_spacing")]
    pub spacing_ratio: f64,
    pub codebook_size: usize,
}

fn default_spacing() -> f64 {
    0.5
}

impl SteeringConfig {
    pub fn new(num_antennas: usize, codebook_size: usize) -> Self {
        Self {
            num_antennas,
            spacing_ratio: default_spacing(),
            codebook_size,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.num_antennas == 0 {
            return Err(ChannelError::InvalidConfig(
                "num_antennas must be >= 1".into(),
            ));
        }
        if self.codebook_size == 0 {
            return Err(ChannelError::InvalidConfig(
                "codebook_size must be >= 1".into(),
            ));
        }
        if !(self.spacing_ratio.is_finite() && self.spacing_ratio > 0.0) {
            return Err(ChannelError::InvalidConfig(format!(
                "spacing_ratio must be positive, got {}",
                self.spacing_ratio
            )));
        }
        Ok(())
    }

    /// Default correlation length 2⌈K/N⌉ − 1.
    pub fn correlation_length(&self) -> usize {
        2 * self.codebook_size.div_ceil(self.num_antennas) - 1
    }
}

/// Array response at spatial frequency `x`:
/// `(1/√N)·[1, e^{j2π(d/λ)x}, …, e^{j2π(d/λ)(N−1)x}]^H`.
///
/// The Hermitian makes element `m` equal to `e^{−j2π(d/λ)mx}/√N`.
pub fn array_response<T: Scalar>(x: T, cfg: &SteeringConfig) -> Vec<Complex<T>> {
    let n = cfg.num_antennas;
    let amp = T::one() / T::from_usize(n).unwrap().sqrt();
    let step = T::two() * T::PI() * T::lit(cfg.spacing_ratio) * x;
    (0..n)
        .map(|m| Complex::from_polar(amp, -(step * T::from_usize(m).unwrap())))
        .collect()
}

/// Hermitian inner product `a^H b`.
pub fn inner<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| {
            acc + x.conj() * y
        })
}

pub fn norm<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
}

/// A consecutive, non-empty run of 1-based base-arm labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArmSet {
    first: usize,
    last: usize,
}

impl ArmSet {
    /// `first..=last`, both 1-based. Returns `None` for `first == 0` or `last < first`.
    pub fn new(first: usize, last: usize) -> Option<Self> {
        (first >= 1 && last >= first).then_some(Self { first, last })
    }

    pub fn single(label: usize) -> Option<Self> {
        Self::new(label, label)
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, label: usize) -> bool {
        (self.first..=self.last).contains(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }
}

/// Ordered set of unit-norm beamforming vectors.
#[derive(Debug, Clone)]
pub struct Codebook<T> {
    beams: Vec<Vec<Complex<T>>>,
    num_antennas: usize,
}

impl<T: Scalar> Codebook<T> {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    /// Beam for 1-based arm `label`.
    pub fn beam(&self, label: usize) -> Option<&[Complex<T>]> {
        label
            .checked_sub(1)
            .and_then(|pos| self.beams.get(pos))
            .map(Vec::as_slice)
    }

    pub fn beams(&self) -> impl Iterator<Item = &[Complex<T>]> {
        self.beams.iter().map(Vec::as_slice)
    }

    /// Spatial frequency `−1 + 2k/K` of the codeword at 0-based position `k`.
    pub fn spatial_frequency(position: usize, codebook_size: usize) -> T {
        -T::one()
            + T::two() * T::from_usize(position).unwrap() / T::from_usize(codebook_size).unwrap()
    }

    /// Unit-norm sum of the beams in `set`.
    pub fn group_beam(&self, set: ArmSet) -> Result<Vec<Complex<T>>, ChannelError> {
        if set.last() > self.len() {
            return Err(ChannelError::InvalidArmSet {
                first: set.first(),
                last: set.last(),
                codebook_size: self.len(),
            });
        }
        let mut sum = vec![Complex::new(T::zero(), T::zero()); self.num_antennas];
        for label in set.labels() {
            for (acc, v) in sum.iter_mut().zip(&self.beams[label - 1]) {
                *acc = *acc + *v;
            }
        }
        let n = norm(&sum);
        if n < T::lit(DEGENERATE_NORM) {
            return Err(ChannelError::DegenerateBeam {
                first: set.first(),
                last: set.last(),
                norm: n.to_f64().unwrap_or(0.0),
            });
        }
        Ok(sum.into_iter().map(|c| c / n).collect())
    }
}

/// Codeword at 0-based position `k` is `a(−1 + 2k/K)`.
pub fn build_codebook<T: Scalar>(cfg: &SteeringConfig) -> Result<Codebook<T>, ChannelError> {
    cfg.validate()?;
    let k = cfg.codebook_size;
    let beams = (0..k)
        .map(|pos| array_response(Codebook::<T>::spatial_frequency(pos, k), cfg))
        .collect();
    Ok(Codebook {
        beams,
        num_antennas: cfg.num_antennas,
    })
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Angle of departure in units of π radians.
    pub aod_fraction_of_pi: f64,
    /// Loss relative to the reference path, in dB (≤ 0).
    pub loss_db: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl PathSpec {
    pub fn new(aod_fraction_of_pi: f64, loss_db: f64) -> Self {
        Self {
            aod_fraction_of_pi,
            loss_db,
            phase_rad: 0.0,
        }
    }
}

pub fn validate_paths(paths: &[PathSpec]) -> Result<(), ChannelError> {
    if paths.is_empty() {
        return Err(ChannelError::EmptyPaths);
    }
    let mut reference = 0;
    for (l, p) in paths.iter().enumerate() {
        if !(p.aod_fraction_of_pi > 0.0 && p.aod_fraction_of_pi < 1.0) {
            return Err(ChannelError::InvalidPaths(format!(
                "path {} AoD {}π outside (0, π)",
                l + 1,
                p.aod_fraction_of_pi
            )));
        }
        if p.loss_db.is_nan() || p.loss_db > 0.0 || !p.phase_rad.is_finite() {
            return Err(ChannelError::InvalidPaths(format!(
                "path {} needs loss_db <= 0 and a finite phase",
                l + 1
            )));
        }
        if p.loss_db == 0.0 {
            reference += 1;
        }
        if paths[..l]
            .iter()
            .any(|q| q.aod_fraction_of_pi == p.aod_fraction_of_pi)
        {
            return Err(ChannelError::InvalidPaths(format!(
                "path {} repeats an earlier AoD",
                l + 1
            )));
        }
    }
    if reference != 1 {
        return Err(ChannelError::InvalidPaths(format!(
            "exactly one path must have loss_db = 0, found {reference}"
        )));
    }
    Ok(())
}

/// Channel vector `h` of a MISO link.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T> {
    h: Vec<Complex<T>>,
}

impl<T: Scalar> Channel<T> {
    pub fn new(h: Vec<Complex<T>>) -> Result<Self, ChannelError> {
        if h.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(ChannelError::DegenerateChannel("non-finite entry".into()));
        }
        if h.is_empty() || norm(&h) <= T::zero() {
            return Err(ChannelError::DegenerateChannel("zero channel".into()));
        }
        Ok(Self { h })
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Multiplies every entry by `sqrt(gain)`, i.e. scales received power by `gain`.
    pub fn scaled_power(&self, gain: T) -> Self {
        let s = gain.sqrt();
        Self {
            h: self.h.iter().map(|c| c * s).collect(),
        }
    }

    /// Text form: one `re,im` row per antenna element.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.h {
            let _ = writeln!(out, "{},{}", c.re, c.im);
        }
        out
    }

    /// Parses the text form. Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, expected_rows: Option<usize>) -> Result<Self, ChannelError> {
        let mut h = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(ChannelError::Parse {
                    line: line_no,
                    msg: format!("expected 2 comma-separated fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<T, ChannelError> {
                let v: f64 = s.parse().map_err(|_| ChannelError::Parse {
                    line: line_no,
                    msg: format!("invalid number {s:?}"),
                })?;
                if !v.is_finite() {
                    return Err(ChannelError::Parse {
                        line: line_no,
                        msg: format!("non-finite value {s:?}"),
                    });
                }
                T::from_f64(v).ok_or_else(|| ChannelError::Parse {
                    line: line_no,
                    msg: format!("value {s:?} not representable"),
                })
            };
            h.push(Complex::new(parse(fields[0])?, parse(fields[1])?));
        }
        if let Some(expected) = expected_rows {
            if h.len() != expected {
                return Err(ChannelError::RowCountMismatch {
                    expected,
                    found: h.len(),
                });
            }
        }
        Self::new(h)
    }
}

/// `h = √(N/L)·Σ_l β_l·a(cos θ_l)` with `|β_l| = 10^(loss_db/20)`.
pub fn synth_channel<T: Scalar>(
    paths: &[PathSpec],
    cfg: &SteeringConfig,
) -> Result<Channel<T>, ChannelError> {
    cfg.validate()?;
    validate_paths(paths)?;
    let n = cfg.num_antennas;
    let scale = (T::from_usize(n).unwrap() / T::from_usize(paths.len()).unwrap()).sqrt();
    let mut h = vec![Complex::new(T::zero(), T::zero()); n];
    for p in paths {
        let beta = Complex::from_polar(T::lit(10f64.powf(p.loss_db / 20.0)), T::lit(p.phase_rad));
        let x = T::lit((p.aod_fraction_of_pi * std::f64::consts::PI).cos());
        for (acc, a) in h.iter_mut().zip(array_response(x, cfg)) {
            *acc = *acc + beta * a * scale;
        }
    }
    Channel::new(h)
}

/// Mean received power `p·|h^H f|²`.
pub fn mean_reward<T: Scalar>(h: &Channel<T>, f: &[Complex<T>], p_mw: T) -> T {
    p_mw * inner(h.as_slice(), f).norm_sqr()
}

/// Per-arm mean received power for a fixed transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmMeans<T> {
    pub mu: Vec<T>,
    pub tx_power_mw: T,
}

impl<T: Scalar> ArmMeans<T> {
    pub fn for_codebook(h: &Channel<T>, cb: &Codebook<T>, p_mw: T) -> Self {
        Self {
            mu: cb.beams().map(|f| mean_reward(h, f, p_mw)).collect(),
            tx_power_mw: p_mw,
        }
    }

    pub fn for_groups(
        h: &Channel<T>,
        cb: &Codebook<T>,
        groups: &[ArmSet],
        p_mw: T,
    ) -> Result<Self, ChannelError> {
        let mu = groups
            .iter()
            .map(|g| cb.group_beam(*g).map(|b| mean_reward(h, &b, p_mw)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            mu,
            tx_power_mw: p_mw,
        })
    }
}

pub fn import_channel<T: Scalar>(
    path: &Path,
    expected_rows: Option<usize>,
) -> Result<Channel<T>, ChannelError> {
    let text = fs::read_to_string(path).map_err(|source| ChannelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Channel::parse(&text, expected_rows)
}

pub fn export_channel<T: Scalar>(h: &Channel<T>, path: &Path) -> Result<(), ChannelError> {
    fs::write(path, h.to_text()).map_err(|source| ChannelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Partition of `1..=k` into `ceil(k/j)` consecutive groups of `j`. When `j`
/// does not divide `k` the final group is shorter.
pub fn partition(k: usize, j: usize) -> Vec<ArmSet> {
    assert!(k >= 1 && j >= 1, "partition needs k, j >= 1");
    (0..k.div_ceil(j))
        .map(|g| ArmSet::new(g * j + 1, ((g + 1) * j).min(k)).unwrap())
        .collect()
}
