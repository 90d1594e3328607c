//! Inverse-PCA reconstruction of noisy measurements and the linear
//! denoising baseline (MSE / PSNR per sensing configuration).

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{DatasetSplit, ImageRecord};
use crate::error::{Error, Result};
use crate::io::{check_version, read_verified, write_with_checksum, LeReader, LeWriter};
use crate::pca::PcaBasis;
use crate::quantum::{
    measure_batch, Gain, MeasuredCoefficients, MeasurementSet, PortCount, SensingConfig,
};

const TRUTH_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconReport {
    pub config_digest: String,
    pub gain: Gain,
    pub k: usize,
    pub m: PortCount,
    pub n_s: f64,
    pub seed: u64,
    pub per_image_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Largest ground-truth amplitude over the evaluated images.
    pub peak: f64,
    pub mean_psnr: f64,
}

pub fn reconstruct_noisy(basis: &PcaBasis, measured: &MeasuredCoefficients) -> Result<Vec<f64>> {
    basis.reconstruct_z(&measured.z_hat)
}

/// Mean squared error per pixel.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn psnr(peak: f64, mse: f64) -> f64 {
    10.0 * (peak * peak / mse).log10()
}

/// Reconstruct the test split under every configuration.
///
/// Noise is keyed by image index, so configurations sharing a seed see the
/// same standard-normal draws and differ only by their noise scale.
pub fn evaluate_denoising(
    basis: &PcaBasis,
    dataset: &DatasetSplit,
    configs: &[SensingConfig],
) -> Result<Vec<ReconReport>> {
    evaluate_records(basis, &dataset.test, configs)
}

pub fn evaluate_records(
    basis: &PcaBasis,
    truths: &[ImageRecord],
    configs: &[SensingConfig],
) -> Result<Vec<ReconReport>> {
    if truths.is_empty() {
        return Err(Error::Data("no test images to reconstruct".into()));
    }
    let coeffs = basis.project_all(truths)?;
    let indices: Vec<usize> = truths.iter().map(|r| r.index).collect();
    let peak = truths
        .iter()
        .flat_map(|r| r.alpha.iter())
        .fold(0.0f64, |p, a| p.max(a.abs()));

    configs
        .iter()
        .map(|config| {
            if config.k != basis.k() {
                return Err(Error::Dimension(format!(
                    "config k = {} does not match basis k = {}",
                    config.k,
                    basis.k()
                )));
            }
            let measured = measure_batch(&coeffs, &indices, config)?;
            let per_image_mse = measured
                .par_iter()
                .zip(truths.par_iter())
                .map(|(m, t)| Ok(mse(&reconstruct_noisy(basis, m)?, &t.alpha)))
                .collect::<Result<Vec<f64>>>()?;
            let mean_mse = per_image_mse.iter().sum::<f64>() / per_image_mse.len() as f64;
            Ok(ReconReport {
                config_digest: config.digest(),
                gain: config.gain,
                k: config.k,
                m: config.m,
                n_s: config.n_s,
                seed: config.seed,
                per_image_mse,
                mean_mse,
                peak,
                mean_psnr: psnr(peak, mean_mse),
            })
        })
        .collect()
}

/// Write report rows as CSV: `config_digest,G,k,m,n_S,seed,mean_mse,mean_psnr`.
pub fn write_report_csv<W: std::io::Write>(reports: &[ReconReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "config_digest",
        "G",
        "k",
        "m",
        "n_S",
        "seed",
        "mean_mse",
        "mean_psnr",
    ])?;
    for r in reports {
        w.write_record([
            r.config_digest.clone(),
            r.gain.to_string(),
            r.k.to_string(),
            r.m.to_string(),
            format!("{:?}", r.n_s),
            r.seed.to_string(),
            format!("{:?}", r.mean_mse),
            format!("{:?}", r.mean_psnr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ground-truth amplitudes: `{version u32, d u32, count u32}` then
/// `count × d × f32`, little-endian.
pub fn encode_truths(truths: &[ImageRecord]) -> Result<Vec<u8>> {
    let d = truths.first().map_or(0, |t| t.dim());
    let mut w = LeWriter::default();
    w.buf.reserve(12 + truths.len() * d * 4);
    w.u32(TRUTH_FILE_VERSION);
    w.u32(d as u32);
    w.u32(truths.len() as u32);
    for t in truths {
        if t.dim() != d {
            return Err(Error::Dimension(format!(
                "truth {} has dimension {}, expected {d}",
                t.index,
                t.dim()
            )));
        }
        t.alpha.iter().for_each(|&a| w.f32(a as f32));
    }
    Ok(w.buf)
}

pub fn decode_truths(bytes: &[u8]) -> Result<Vec<Vec<f32>>> {
    let mut r = LeReader::new(bytes, "truth file");
    check_version(r.u32()?, TRUTH_FILE_VERSION, "truth file")?;
    let d = r.u32()? as usize;
    let count = r.u32()? as usize;
    if r.remaining() != count * d * 4 {
        return Err(Error::Length(format!(
            "truth file: header declares {count} images of {d} pixels, payload is {} bytes",
            r.remaining()
        )));
    }
    (0..count)
        .map(|_| (0..d).map(|_| r.f32()).collect::<Result<Vec<_>>>())
        .collect()
}

/// Write a measurement file and its parallel truth file, each with a
/// `.sha256` sidecar.
pub fn export_for_neural(
    measured: &MeasurementSet,
    truths: &[ImageRecord],
    measure_path: &Path,
    truth_path: &Path,
) -> Result<()> {
    if measured.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} measurements but {} truth images",
            measured.len(),
            truths.len()
        )));
    }
    if let Some((pos, _)) = measured
        .labels
        .iter()
        .zip(truths)
        .enumerate()
        .find(|(_, (l, t))| **l != t.label)
    {
        return Err(Error::Data(format!("label mismatch at position {pos}")));
    }
    write_with_checksum(measure_path, &measured.encode()?)?;
    write_with_checksum(truth_path, &encode_truths(truths)?)?;
    Ok(())
}

/// Load an exported pair, verifying checksums.
pub fn load_exported(
    measure_path: &Path,
    truth_path: &Path,
) -> Result<(MeasurementSet, Vec<Vec<f32>>)> {
    let measured = MeasurementSet::decode(&read_verified(measure_path)?)?;
    let truths = decode_truths(&read_verified(truth_path)?)?;
    if measured.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} measurements but {} truth images",
            measured.len(),
            truths.len()
        )));
    }
    Ok((measured, truths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::fit_pca;
    use crate::quantum::NoiseConvention;

    fn toy_records() -> Vec<ImageRecord> {
        (0..30)
            .map(|i| {
                let t = i as f64;
                ImageRecord {
                    index: i,
                    alpha: vec![t.sin(), (2.0 * t).cos(), 0.3 * t.sin() * t.cos(), 0.1 * t],
                    label: (i % 3) as u8,
                    photon_budget: 1.0,
                }
            })
            .collect()
    }

    fn cfg(k: usize, gain: Gain) -> SensingConfig {
        SensingConfig {
            k,
            m: PortCount::Full,
            gain,
            n_s: 1.0,
            convention: NoiseConvention::Quadrature,
            seed: 3,
        }
    }

    #[test]
    fn noiseless_complete_basis_is_exact() {
        let recs = toy_records();
        let basis = fit_pca(&recs, 4).unwrap();
        let reports = evaluate_records(&basis, &recs, &[cfg(4, Gain::Infinite)]).unwrap();
        assert!(reports[0].mean_mse < 1e-20);
    }

    #[test]
    fn zero_measurement_gives_mean() {
        let recs = toy_records();
        let basis = fit_pca(&recs, 2).unwrap();
        let m = MeasuredCoefficients {
            z_hat: vec![0.0; 2],
            config_digest: String::new(),
        };
        assert_eq!(reconstruct_noisy(&basis, &m).unwrap(), basis.mean());
    }

    #[test]
    fn report_is_paired_and_consistent() {
        let recs = toy_records();
        let basis = fit_pca(&recs, 2).unwrap();
        let configs = [
            cfg(2, Gain::Finite(1.0)),
            cfg(2, Gain::Finite(10.0)),
            cfg(2, Gain::Infinite),
        ];
        let reports = evaluate_records(&basis, &recs, &configs).unwrap();
        for (c, q) in reports[0]
            .per_image_mse
            .iter()
            .zip(&reports[1].per_image_mse)
        {
            assert!(q <= c);
        }
        assert!(reports[2].mean_mse <= reports[1].mean_mse);
        for r in &reports {
            let mean = r.per_image_mse.iter().sum::<f64>() / r.per_image_mse.len() as f64;
            assert_eq!(mean, r.mean_mse);
            assert!((psnr(r.peak, r.mean_mse) - r.mean_psnr).abs() < 1e-12);
        }
        assert_eq!(reports, evaluate_records(&basis, &recs, &configs).unwrap());
        assert!(evaluate_records(&basis, &[], &configs).is_err());
        assert!(matches!(
            evaluate_records(&basis, &recs, &[cfg(3, Gain::Infinite)]),
            Err(Error::Dimension(_))
        ));
    }
}
