//! Squeezed-light measurement model.
//!
//! Each of the `k` principal-component modes is probed by one squeezed
//! source and read out by homodyne detection of the squeezed quadrature
//! (phase locked at θ = 0). The converging beamsplitter undoes the diverging
//! one, so every measured coefficient carries independent Gaussian noise with
//! the source's squeezed variance:
//!
//! ```text
//! ẑ_j = z_j + ξ_j,   ξ_j ~ N(0, σ²(G)),   σ²(G) = 1/(2G)  (quadrature units)
//!                                          σ²(G) = 1/(4G)  (Re â units)
//! ```
//!
//! The conjugate quadrature is anti-squeezed to `G/2` but is never measured,
//! so it does not appear here.
//!
//! Noise draws come from a counter-based ChaCha stream keyed by
//! `(seed, image index)`; channel `j` is the `j`-th standard normal of that
//! stream. Results are therefore independent of evaluation order, and two
//! gains evaluated under one seed share the same standard normals.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::io::{check_version, sha256_hex, LeReader, LeWriter};
use crate::pca::{Coefficients, PcaBasis};

const MEASUREMENT_FILE_VERSION: u32 = 1;

/// Squeezing gain `G = e^{2r} ≥ 1`, or the noiseless limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    Finite(f64),
    Infinite,
}

impl Gain {
    pub fn validate(self) -> Result<Self> {
        match self {
            Gain::Finite(g) if !(g >= 1.0) || !g.is_finite() => Err(Error::Parameter(format!(
                "squeezing gain must satisfy G >= 1, got {g}"
            ))),
            other => Ok(other),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Gain::Infinite)
    }

    /// On-disk encoding: NaN stands for the noiseless limit.
    pub fn to_f64(self) -> f64 {
        match self {
            Gain::Finite(g) => g,
            Gain::Infinite => f64::NAN,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() || v == f64::INFINITY {
            Gain::Infinite
        } else {
            Gain::Finite(v)
        }
    }

    /// Sort key placing the noiseless limit after every finite gain.
    pub fn order_key(self) -> f64 {
        match self {
            Gain::Finite(g) => g,
            Gain::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Gain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gain::Finite(g) => write!(f, "{g}"),
            Gain::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" | "noiseless" => Ok(Gain::Infinite),
            _ => s
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("cannot parse gain '{s}'")))
                .and_then(|g| Gain::Finite(g).validate()),
        }
    }
}

/// Units in which the squeezed variance is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoiseConvention {
    /// `Var q̂ = 1/(2G)`.
    #[default]
    Quadrature,
    /// `Var Re â = 1/(4G)`.
    RealPart,
}

impl NoiseConvention {
    pub fn code(self) -> u8 {
        match self {
            NoiseConvention::Quadrature => 0,
            NoiseConvention::RealPart => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(NoiseConvention::Quadrature),
            1 => Ok(NoiseConvention::RealPart),
            other => Err(Error::Format(format!(
                "unknown noise convention code {other}"
            ))),
        }
    }
}

impl fmt::Display for NoiseConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseConvention::Quadrature => "quadrature",
            NoiseConvention::RealPart => "realpart",
        })
    }
}

impl FromStr for NoiseConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "").as_str() {
            "quadrature" => Ok(NoiseConvention::Quadrature),
            "realpart" => Ok(NoiseConvention::RealPart),
            other => Err(Error::Parameter(format!(
                "unknown noise convention '{other}'"
            ))),
        }
    }
}

/// Beamsplitter ports per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortCount {
    Full,
    Ports(usize),
}

impl PortCount {
    /// Port count as a pixel number for a `d`-pixel image.
    pub fn resolve(self, d: usize) -> usize {
        match self {
            PortCount::Full => d,
            PortCount::Ports(m) => m,
        }
    }
}

impl fmt::Display for PortCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortCount::Full => f.write_str("full"),
            PortCount::Ports(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for PortCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(PortCount::Full);
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(PortCount::Ports(m)),
            _ => Err(Error::Parameter(format!("invalid port count '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingConfig {
    pub k: usize,
    pub m: PortCount,
    pub gain: Gain,
    pub n_s: f64,
    pub convention: NoiseConvention,
    pub seed: u64,
}

impl SensingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if self.m == PortCount::Ports(0) {
            return Err(Error::Parameter("m must be at least 1".into()));
        }
        if !(self.n_s >= 0.0) || !self.n_s.is_finite() {
            return Err(Error::Parameter(format!(
                "invalid photon budget {}",
                self.n_s
            )));
        }
        self.gain.validate().map(|_| ())
    }

    pub fn canonical(&self) -> String {
        format!(
            "k={};m={};G={};n_s={:?};convention={};seed={}",
            self.k, self.m, self.gain, self.n_s, self.convention, self.seed
        )
    }

    /// Stable identifier of this configuration.
    pub fn digest(&self) -> String {
        sha256_hex(self.canonical().as_bytes())[..16].to_string()
    }

    pub fn noise_variance(&self) -> Result<f64> {
        noise_variance(self.gain, self.convention)
    }
}

/// Noisy homodyne estimates `ẑ` for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredCoefficients {
    pub z_hat: Vec<f64>,
    pub config_digest: String,
}

pub fn noise_variance(gain: Gain, convention: NoiseConvention) -> Result<f64> {
    match gain.validate()? {
        Gain::Infinite => Ok(0.0),
        Gain::Finite(g) => Ok(match convention {
            NoiseConvention::Quadrature => 1.0 / (2.0 * g),
            NoiseConvention::RealPart => 1.0 / (4.0 * g),
        }),
    }
}

/// `r = ln(G) / 2`.
pub fn squeezing_parameter(gain: Gain) -> Result<f64> {
    match gain.validate()? {
        Gain::Infinite => Err(Error::Unrepresentable),
        Gain::Finite(g) => Ok(g.ln() / 2.0),
    }
}

/// Deterministic per-image stream of standard normal draws.
pub fn noise_stream(seed: u64, image_index: usize) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(image_index as u64);
    std::iter::repeat_with(move || StandardNormal.sample(&mut rng))
}

/// Add squeezed homodyne noise to the coefficients of image `image_index`.
pub fn measure(
    coeffs: &Coefficients,
    config: &SensingConfig,
    image_index: usize,
) -> Result<MeasuredCoefficients> {
    measure_with_digest(coeffs, config, image_index, config.digest())
}

fn measure_with_digest(
    coeffs: &Coefficients,
    config: &SensingConfig,
    image_index: usize,
    config_digest: String,
) -> Result<MeasuredCoefficients> {
    if coeffs.z.len() != config.k {
        return Err(Error::Dimension(format!(
            "{} coefficients, config expects k = {}",
            coeffs.z.len(),
            config.k
        )));
    }
    let variance = config.noise_variance()?;
    let z_hat = if variance == 0.0 {
        coeffs.z.clone()
    } else {
        let sigma = variance.sqrt();
        coeffs
            .z
            .iter()
            .zip(noise_stream(config.seed, image_index))
            .map(|(z, n)| z + sigma * n)
            .collect()
    };
    Ok(MeasuredCoefficients {
        z_hat,
        config_digest,
    })
}

/// Measure many images in parallel; `indices[i]` keys the noise of `coeffs[i]`.
pub fn measure_batch(
    coeffs: &[Coefficients],
    indices: &[usize],
    config: &SensingConfig,
) -> Result<Vec<MeasuredCoefficients>> {
    if coeffs.len() != indices.len() {
        return Err(Error::Dimension(format!(
            "{} coefficient vectors but {} image indices",
            coeffs.len(),
            indices.len()
        )));
    }
    config.validate()?;
    let digest = config.digest();
    coeffs
        .par_iter()
        .zip(indices.par_iter())
        .map(|(c, &i)| measure_with_digest(c, config, i, digest.clone()))
        .collect()
}

/// Project and measure `records` with their source indices as noise keys.
pub fn measure_records(
    basis: &PcaBasis,
    records: &[ImageRecord],
    config: &SensingConfig,
) -> Result<MeasurementSet> {
    if basis.k() != config.k {
        return Err(Error::Dimension(format!(
            "basis has k = {}, config has k = {}",
            basis.k(),
            config.k
        )));
    }
    let coeffs = basis.project_all(records)?;
    let indices: Vec<usize> = records.iter().map(|r| r.index).collect();
    let measured = measure_batch(&coeffs, &indices, config)?;
    Ok(MeasurementSet {
        k: config.k,
        gain: config.gain,
        convention: config.convention,
        seed: config.seed,
        labels: records.iter().map(|r| r.label).collect(),
        features: measured.into_iter().map(|m| m.z_hat).collect(),
    })
}

/// Per-component signal-to-noise ratio `z_j² / σ²`.
pub fn snr_per_component(coeffs: &Coefficients, config: &SensingConfig) -> Result<Vec<f64>> {
    let variance = config.noise_variance()?;
    if variance == 0.0 {
        return Err(Error::InfiniteSnr);
    }
    Ok(coeffs.z.iter().map(|z| z * z / variance).collect())
}

/// Labelled measurement outcomes for a collection of images, as stored in a
/// measurement file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub k: usize,
    pub gain: Gain,
    pub convention: NoiseConvention,
    pub seed: u64,
    pub labels: Vec<u8>,
    pub features: Vec<Vec<f64>>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Layout: `{version u32, k u32, count u32, G f64 (NaN = inf),
    /// convention u8, seed u64}` then `count × (label u8, k × f32)`.
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.features.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        let mut w = LeWriter::default();
        w.buf.reserve(29 + self.len() * (1 + 4 * self.k));
        w.u32(MEASUREMENT_FILE_VERSION);
        w.u32(self.k as u32);
        w.u32(self.len() as u32);
        w.f64(self.gain.to_f64());
        w.u8(self.convention.code());
        w.u64(self.seed);
        for (label, row) in self.labels.iter().zip(&self.features) {
            if row.len() != self.k {
                return Err(Error::Dimension(format!(
                    "feature row has {} entries, k = {}",
                    row.len(),
                    self.k
                )));
            }
            w.u8(*label);
            row.iter().for_each(|&v| w.f32(v as f32));
        }
        Ok(w.buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "measurement file");
        check_version(r.u32()?, MEASUREMENT_FILE_VERSION, "measurement file")?;
        let k = r.u32()? as usize;
        let count = r.u32()? as usize;
        let gain = Gain::from_f64(r.f64()?);
        let convention = NoiseConvention::from_code(r.u8()?)?;
        let seed = r.u64()?;
        if r.remaining() != count * (1 + 4 * k) {
            return Err(Error::Length(format!(
                "measurement file: header declares {count} rows of k = {k}, payload is {} bytes",
                r.remaining()
            )));
        }
        let mut labels = Vec::with_capacity(count);
        let mut features = Vec::with_capacity(count);
        for _ in 0..count {
            labels.push(r.u8()?);
            features.push(
                (0..k)
                    .map(|_| r.f32().map(f64::from))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            k,
            gain,
            convention,
            seed,
            labels,
            features,
        })
    }
}
