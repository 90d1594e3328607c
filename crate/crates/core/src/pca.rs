//! Principal-component basis: fitting, projection, inverse-PCA
//! reconstruction and m-port cropping.
//!
//! The basis is fit on mean-centred, photon-normalized training images.
//! Optically the projection acts on the raw field; the noise-free offset
//! `f_jᵀ · mean` is removed in software, so [`PcaBasis::project`] returns
//! centred coefficients directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::io::{check_version, LeReader, LeWriter};

const BASIS_FILE_VERSION: u32 = 1;
const COVARIANCE_CHUNK: usize = 512;

/// Noise-free projections `z_j` of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// `d × k`, column `j` is the (possibly cropped) unit-norm component `f_j`.
    components: DMatrix<f64>,
    /// Descending covariance spectrum, `min(d, N)` entries.
    eigenvalues: Vec<f64>,
    mean: Vec<f64>,
    /// Column-major `d × k` port mask, present once the basis is cropped.
    crop_mask: Option<Vec<bool>>,
    /// `(FᵀF)⁺` for least-squares reconstruction from a cropped basis.
    gram_pinv: Option<DMatrix<f64>>,
}

fn fix_sign(col: &mut [f64]) {
    let mut best = 0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Fit a `k`-component basis to the training records.
pub fn fit_pca(train: &[ImageRecord], k: usize) -> Result<PcaBasis> {
    let n = train.len();
    if n < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 training images, got {n}"
        )));
    }
    let d = train[0].dim();
    if d == 0 {
        return Err(Error::Dimension("images have zero pixels".into()));
    }
    if k == 0 || k > d.min(n) {
        return Err(Error::Dimension(format!(
            "k = {k} outside 1..={} (d = {d}, N = {n})",
            d.min(n)
        )));
    }
    for rec in train {
        if rec.dim() != d {
            return Err(Error::Dimension(format!(
                "record {} has dimension {}, expected {d}",
                rec.index,
                rec.dim()
            )));
        }
        if rec.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Data(format!(
                "record {} has non-finite amplitudes",
                rec.index
            )));
        }
    }

    let mut mean = vec![0.0; d];
    for rec in train {
        for (m, a) in mean.iter_mut().zip(&rec.alpha) {
            *m += a;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for chunk in train.chunks(COVARIANCE_CHUNK) {
        let centred = DMatrix::from_fn(d, chunk.len(), |i, j| chunk[j].alpha[i] - mean[i]);
        let centred_t = centred.transpose();
        cov.gemm(1.0, &centred, &centred_t, 1.0);
    }
    cov /= n as f64;
    // gemm accumulation leaves rounding-level asymmetry
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let eigenvalues: Vec<f64> = order
        .iter()
        .take(d.min(n))
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .collect();

    let mut components = DMatrix::<f64>::zeros(d, k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.iter_mut().for_each(|v| *v /= norm);
        fix_sign(&mut col);
        components.set_column(j, &DVector::from_vec(col));
    }

    Ok(PcaBasis {
        components,
        eigenvalues,
        mean,
        crop_mask: None,
        gram_pinv: None,
    })
}

/// Fraction of total variance captured by the first `k` eigenvalues.
pub fn explained_variance(basis: &PcaBasis, k: usize) -> Result<f64> {
    basis.explained_variance(k)
}

/// Keep each component's `m` largest-magnitude weights and renormalize.
pub fn crop_basis(basis: &PcaBasis, m: usize) -> Result<PcaBasis> {
    basis.crop(m)
}

impl PcaBasis {
    /// Assemble a basis from parts, validating shapes. Components are used
    /// as given; a mask marks the basis as cropped.
    pub fn from_parts(
        components: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        mean: Vec<f64>,
        crop_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let (d, k) = components.shape();
        if mean.len() != d {
            return Err(Error::Dimension(format!(
                "mean has {} entries, d = {d}",
                mean.len()
            )));
        }
        if let Some(mask) = &crop_mask {
            if mask.len() != d * k {
                return Err(Error::Dimension(format!(
                    "crop mask has {} entries, expected {}",
                    mask.len(),
                    d * k
                )));
            }
        }
        let mut basis = Self {
            components,
            eigenvalues,
            mean,
            crop_mask,
            gram_pinv: None,
        };
        basis.refresh_gram();
        Ok(basis)
    }

    fn refresh_gram(&mut self) {
        self.gram_pinv = self.crop_mask.as_ref().map(|_| {
            let gram = self.components.tr_mul(&self.components);
            gram.pseudo_inverse(1e-12)
                .expect("pseudo-inverse with non-negative epsilon")
        });
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn crop_mask(&self) -> Option<&[bool]> {
        self.crop_mask.as_deref()
    }

    pub fn is_cropped(&self) -> bool {
        self.crop_mask.is_some()
    }

    pub fn explained_variance(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.eigenvalues.len() {
            return Err(Error::Dimension(format!(
                "k = {k} outside 1..={}",
                self.eigenvalues.len()
            )));
        }
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return Ok(1.0);
        }
        Ok(self.eigenvalues[..k].iter().sum::<f64>() / total)
    }

    /// Tail spectrum sum `Σ_{j>k} λ_j`: the optimal mean squared rank-`k`
    /// reconstruction error per training image.
    pub fn truncation_error(&self, k: usize) -> f64 {
        self.eigenvalues.iter().skip(k).sum()
    }

    /// Keep the leading `k` components. Nested eigenvectors make this exact.
    pub fn truncate(&self, k: usize) -> Result<PcaBasis> {
        if k == 0 || k > self.k() {
            return Err(Error::Dimension(format!(
                "cannot truncate {} components to {k}",
                self.k()
            )));
        }
        let d = self.dim();
        let components = self.components.columns(0, k).into_owned();
        let crop_mask = self.crop_mask.as_ref().map(|m| m[..d * k].to_vec());
        let mut basis = PcaBasis {
            components,
            eigenvalues: self.eigenvalues.clone(),
            mean: self.mean.clone(),
            crop_mask,
            gram_pinv: None,
        };
        basis.refresh_gram();
        Ok(basis)
    }

    pub fn crop(&self, m: usize) -> Result<PcaBasis> {
        let d = self.dim();
        if m == 0 || m > d {
            return Err(Error::Dimension(format!("m = {m} outside 1..={d}")));
        }
        let k = self.k();
        let mut components = self.components.clone();
        let mut mask = vec![false; d * k];
        for j in 0..k {
            let col: Vec<f64> = self.components.column(j).iter().copied().collect();
            let mut ranked: Vec<usize> = (0..d).filter(|&i| col[i] != 0.0).collect();
            ranked.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
            ranked.truncate(m);
            if ranked.is_empty() {
                return Err(Error::DegenerateComponent { component: j });
            }

            let mut kept = vec![0.0; d];
            for &i in &ranked {
                kept[i] = col[i];
                mask[j * d + i] = true;
            }
            let dropped = ranked.len() < col.iter().filter(|v| **v != 0.0).count();
            if dropped {
                let norm = kept.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::DegenerateComponent { component: j });
                }
                kept.iter_mut().for_each(|v| *v /= norm);
            }
            components.set_column(j, &DVector::from_vec(kept));
        }
        let mut basis = PcaBasis {
            components,
            eigenvalues: self.eigenvalues.clone(),
            mean: self.mean.clone(),
            crop_mask: Some(mask),
            gram_pinv: None,
        };
        basis.refresh_gram();
        Ok(basis)
    }

    /// `z_j = f_jᵀ (alpha − mean)`.
    pub fn project(&self, record: &ImageRecord) -> Result<Coefficients> {
        self.project_alpha(&record.alpha)
    }

    pub fn project_alpha(&self, alpha: &[f64]) -> Result<Coefficients> {
        let d = self.dim();
        if alpha.len() != d {
            return Err(Error::Dimension(format!(
                "image has dimension {}, basis expects {d}",
                alpha.len()
            )));
        }
        let z = (0..self.k())
            .map(|j| {
                self.components
                    .column(j)
                    .iter()
                    .zip(alpha.iter().zip(&self.mean))
                    .map(|(f, (a, m))| f * (a - m))
                    .sum()
            })
            .collect();
        Ok(Coefficients { z })
    }

    pub fn project_all(&self, records: &[ImageRecord]) -> Result<Vec<Coefficients>> {
        records.par_iter().map(|r| self.project(r)).collect()
    }

    /// Inverse PCA. Orthonormal bases use `mean + Σ z_j f_j`; cropped bases
    /// use the least-squares form `mean + F (FᵀF)⁺ z`.
    pub fn reconstruct(&self, coeffs: &Coefficients) -> Result<Vec<f64>> {
        self.reconstruct_z(&coeffs.z)
    }

    pub fn reconstruct_z(&self, z: &[f64]) -> Result<Vec<f64>> {
        let k = self.k();
        if z.len() != k {
            return Err(Error::Dimension(format!(
                "{} coefficients supplied, basis has k = {k}",
                z.len()
            )));
        }
        let weights: Vec<f64> = match &self.gram_pinv {
            None => z.to_vec(),
            Some(g) => (0..k)
                .map(|i| (0..k).map(|j| g[(i, j)] * z[j]).sum())
                .collect(),
        };
        let mut out = self.mean.clone();
        for (j, w) in weights.iter().enumerate() {
            for (o, f) in out.iter_mut().zip(self.components.column(j).iter()) {
                *o += f * w;
            }
        }
        Ok(out)
    }

    /// Binary layout: `{version u32, d u32, k u32, has_mask u8}`, mean
    /// `d × f64`, eigenvalues, components column-major `d × k × f64`, then
    /// the mask packed LSB-first when present. The eigenvalue count is
    /// implied by the file length.
    pub fn encode(&self) -> Vec<u8> {
        let (d, k) = (self.dim(), self.k());
        let mut w = LeWriter::default();
        w.u32(BASIS_FILE_VERSION);
        w.u32(d as u32);
        w.u32(k as u32);
        w.u8(self.crop_mask.is_some() as u8);
        self.mean.iter().for_each(|&v| w.f64(v));
        self.eigenvalues.iter().for_each(|&v| w.f64(v));
        self.components.iter().for_each(|&v| w.f64(v));
        if let Some(mask) = &self.crop_mask {
            for byte in mask.chunks(8) {
                w.u8(byte
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (b, &on)| acc | ((on as u8) << b)));
            }
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "basis file");
        check_version(r.u32()?, BASIS_FILE_VERSION, "basis file")?;
        let d = r.u32()? as usize;
        let k = r.u32()? as usize;
        let has_mask = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("basis file: has_mask byte {other}"))),
        };
        let mask_bytes = if has_mask { (d * k).div_ceil(8) } else { 0 };
        let fixed = 8 * d + 8 * d * k + mask_bytes;
        let rem = r.remaining();
        if rem < fixed || (rem - fixed) % 8 != 0 {
            return Err(Error::Length(format!(
                "basis file: {rem} payload bytes inconsistent with d = {d}, k = {k}"
            )));
        }
        let n_eig = (rem - fixed) / 8;
        let mean = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let eigenvalues = (0..n_eig).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let data = (0..d * k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let crop_mask = if has_mask {
            let packed = r.take(mask_bytes)?;
            Some(
                (0..d * k)
                    .map(|i| packed[i / 8] >> (i % 8) & 1 == 1)
                    .collect(),
            )
        } else {
            None
        };
        r.finish()?;
        Self::from_parts(DMatrix::from_vec(d, k, data), eigenvalues, mean, crop_mask)
    }
}
