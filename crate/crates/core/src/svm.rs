//! Soft-margin RBF-kernel SVM solved by sequential minimal optimization,
//! with one-vs-one multiclass voting.
//!
//! The binary solver works on the dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α_i ≤ C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! and at each step updates the maximal KKT-violating pair analytically.
//! Kernel rows are computed on demand and held in an LRU cache.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{check_version, LeReader, LeWriter};

const MODEL_MAGIC: &[u8; 4] = b"SQSV";
const MODEL_FILE_VERSION: u32 = 1;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
    /// Kernel cache budget in bytes.
    pub cache_bytes: usize,
}

impl SvmParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            c: 1.0,
            gamma,
            tol: 1e-3,
            max_passes: 200,
            cache_bytes: 256 << 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.gamma > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Parameter(format!(
                "C, gamma and tol must be positive (C = {}, gamma = {}, tol = {})",
                self.c, self.gamma, self.tol
            )));
        }
        Ok(())
    }
}

pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(−γ ‖x − y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

/// Kernel width `γ = 1 / (k · Var X)` where `Var X` is the population
/// variance of every feature entry pooled together.
pub fn gamma_scale(features: &[Vec<f64>]) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 feature vectors, got {}",
            features.len()
        )));
    }
    let k = features[0].len();
    if k == 0 || features.iter().any(|f| f.len() != k) {
        return Err(Error::Dimension(
            "feature vectors must share a non-zero length".into(),
        ));
    }
    let n = (features.len() * k) as f64;
    let mean = features.iter().flatten().sum::<f64>() / n;
    let var = features
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Data(format!("pooled feature variance is {var}")));
    }
    Ok(1.0 / (k as f64 * var))
}

/// LRU cache of kernel matrix rows.
struct KernelCache<'a> {
    x: &'a [&'a [f64]],
    gamma: f64,
    rows: Vec<Option<Arc<[f64]>>>,
    last_used: Vec<u64>,
    clock: u64,
    cached: usize,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [&'a [f64]], gamma: f64, cache_bytes: usize) -> Self {
        let n = x.len();
        let capacity = (cache_bytes / (8 * n.max(1))).max(2);
        Self {
            x,
            gamma,
            rows: vec![None; n],
            last_used: vec![0; n],
            clock: 0,
            cached: 0,
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if let Some(row) = &self.rows[i] {
            return Arc::clone(row);
        }
        if self.cached >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&t| t != i && self.rows[t].is_some())
                .min_by_key(|&t| self.last_used[t])
                .expect("a full cache holds at least one other row");
            self.rows[victim] = None;
            self.cached -= 1;
        }
        let xi = self.x[i];
        let row: Arc<[f64]> = self
            .x
            .iter()
            .map(|xj| (-self.gamma * squared_distance(xi, xj)).exp())
            .collect();
        self.rows[i] = Some(Arc::clone(&row));
        self.cached += 1;
        row
    }
}

/// A trained binary classifier `f(x) = Σ c_i K(s_i, x) + b` with
/// `c_i = y_i α_i`. Label +1 corresponds to `class_pair.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coeffs: Vec<f64>,
    /// Position of each support vector in the training set it was fit on.
    pub sv_positions: Vec<usize>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub class_pair: (u8, u8),
    pub iterations: u64,
    pub converged: bool,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(s, c)| c * (-self.gamma * squared_distance(s, x)).exp())
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_sign(&self, x: &[f64]) -> i8 {
        if self.decision(x) >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// Dual objective `Σ α_i − ½ Σ_ij α_i α_j y_i y_j K_ij` (to be maximized).
    pub fn dual_objective(&self) -> f64 {
        let linear: f64 = self.dual_coeffs.iter().map(|c| c.abs()).sum();
        let mut quad = 0.0;
        for (i, si) in self.support_vectors.iter().enumerate() {
            for (j, sj) in self.support_vectors.iter().enumerate() {
                quad += self.dual_coeffs[i]
                    * self.dual_coeffs[j]
                    * (-self.gamma * squared_distance(si, sj)).exp();
            }
        }
        linear - 0.5 * quad
    }

    /// Largest KKT violation over the training set, evaluated directly from
    /// the duals and fresh kernel evaluations.
    pub fn max_kkt_violation(&self, features: &[Vec<f64>], labels: &[i8]) -> f64 {
        let mut alpha = vec![0.0; features.len()];
        for (pos, c) in self.sv_positions.iter().zip(&self.dual_coeffs) {
            alpha[*pos] = c.abs();
        }
        features
            .iter()
            .zip(labels)
            .zip(&alpha)
            .map(|((x, &y), &a)| {
                let margin = f64::from(y) * self.decision(x);
                if a <= 0.0 {
                    (1.0 - margin).max(0.0)
                } else if a >= self.c {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `|Σ y_i α_i|`.
    pub fn equality_residual(&self) -> f64 {
        self.dual_coeffs.iter().sum::<f64>().abs()
    }
}

/// Train a binary SVM on labels in {−1, +1}. The returned model's
/// `class_pair` is `(1, 0)` placeholders; multiclass training overwrites it.
pub fn train_binary(features: &[Vec<f64>], labels: &[i8], params: &SvmParams) -> Result<SvmModel> {
    let refs: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    train_binary_refs(&refs, labels, params)
}

fn train_binary_refs(x: &[&[f64]], y: &[i8], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let n = x.len();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{n} feature vectors but {} labels",
            y.len()
        )));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::Class("binary labels must be +1 or -1".into()));
    }
    if !y.contains(&1) || !y.contains(&-1) {
        return Err(Error::Class(
            "binary training needs both classes present".into(),
        ));
    }
    let k = x[0].len();
    if x.iter().any(|v| v.len() != k) {
        return Err(Error::Dimension("feature vectors differ in length".into()));
    }

    let c = params.c;
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = KernelCache::new(x, params.gamma, params.cache_bytes);
    let max_iter = (params.max_passes as u64).saturating_mul(n as u64).max(1);

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut iterations = 0u64;
    let mut converged = false;
    let (mut gmax, mut gmin);
    loop {
        gmax = f64::NEG_INFINITY;
        gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -yf[t] * grad[t];
            if in_up(alpha[t], yf[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], yf[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let row_i = cache.row(i);
        let row_j = cache.row(j);
        let qij = yf[i] * yf[j] * row_i[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);

        if yf[i] != yf[j] {
            let quad = (row_i[i] + row_j[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (row_i[i] + row_j[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * yf[i];
        let dj = (alpha[j] - old_j) * yf[j];
        for t in 0..n {
            grad[t] += yf[t] * (row_i[t] * di + row_j[t] * dj);
        }
    }

    if !converged {
        log::warn!(
            "SMO stopped after {iterations} iterations without reaching tol = {} (gap {})",
            params.tol,
            gmax - gmin
        );
    }

    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += -yf[t] * grad[t];
            free_n += 1;
        }
    }
    let bias = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        0.5 * (gmax + gmin)
    };

    let mut model = SvmModel {
        support_vectors: Vec::new(),
        dual_coeffs: Vec::new(),
        sv_positions: Vec::new(),
        bias,
        gamma: params.gamma,
        c,
        class_pair: (1, 0),
        iterations,
        converged,
    };
    for t in 0..n {
        if alpha[t] > 0.0 {
            model.support_vectors.push(x[t].to_vec());
            model.dual_coeffs.push(yf[t] * alpha[t]);
            model.sv_positions.push(t);
        }
    }
    Ok(model)
}

/// One binary submodel per unordered class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassModel {
    pub submodels: Vec<SvmModel>,
    pub classes: Vec<u8>,
    pool: Vec<Vec<f64>>,
    pool_refs: Vec<Vec<usize>>,
}

impl MulticlassModel {
    /// Assemble a model; support vectors shared between submodels are
    /// evaluated once per prediction.
    pub fn new(submodels: Vec<SvmModel>, classes: Vec<u8>) -> Self {
        let mut pool = Vec::new();
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let pool_refs = submodels
            .iter()
            .map(|m| {
                m.support_vectors
                    .iter()
                    .map(|sv| {
                        let key: Vec<u64> = sv.iter().map(|v| v.to_bits()).collect();
                        *seen.entry(key).or_insert_with(|| {
                            pool.push(sv.clone());
                            pool.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Self {
            submodels,
            classes,
            pool,
            pool_refs,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.pool.first().map_or(0, Vec::len)
    }

    pub fn support_vector_count(&self) -> usize {
        self.pool.len()
    }

    pub fn gamma(&self) -> f64 {
        self.submodels.first().map_or(0.0, |m| m.gamma)
    }

    fn vote(&self, kernel: &[f64]) -> u8 {
        let mut votes: HashMap<u8, (usize, f64)> = HashMap::new();
        for (model, refs) in self.submodels.iter().zip(&self.pool_refs) {
            let d = refs
                .iter()
                .zip(&model.dual_coeffs)
                .map(|(&p, c)| c * kernel[p])
                .sum::<f64>()
                + model.bias;
            let winner = if d >= 0.0 {
                model.class_pair.0
            } else {
                model.class_pair.1
            };
            let e = votes.entry(winner).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d.abs();
        }
        self.classes
            .iter()
            .map(|&c| (c, votes.get(&c).copied().unwrap_or((0, 0.0))))
            .fold(None::<(u8, usize, f64)>, |best, (c, (v, s))| match best {
                Some((_, bv, bs)) if bv > v || (bv == v && bs >= s) => best,
                _ => Some((c, v, s)),
            })
            .map(|(c, _, _)| c)
            .expect("model has at least one class")
    }

    pub fn predict(&self, feature: &[f64]) -> Result<u8> {
        let d = self.feature_dim();
        if feature.len() != d {
            return Err(Error::Dimension(format!(
                "feature has length {}, model expects {d}",
                feature.len()
            )));
        }
        let gamma = self.gamma();
        let kernel: Vec<f64> = self
            .pool
            .iter()
            .map(|s| (-gamma * squared_distance(s, feature)).exp())
            .collect();
        Ok(self.vote(&kernel))
    }

    pub fn predict_batch(&self, features: &[Vec<f64>]) -> Result<Vec<u8>> {
        features.par_iter().map(|f| self.predict(f)).collect()
    }

    /// Largest KKT violation across submodels, recomputing each pair subset
    /// from the training data.
    pub fn max_kkt_violation(&self, features: &[Vec<f64>], labels: &[u8]) -> f64 {
        self.submodels
            .iter()
            .map(|m| {
                let (a, b) = m.class_pair;
                let (xs, ys): (Vec<Vec<f64>>, Vec<i8>) = features
                    .iter()
                    .zip(labels)
                    .filter(|(_, &l)| l == a || l == b)
                    .map(|(x, &l)| (x.clone(), if l == a { 1 } else { -1 }))
                    .unzip();
                m.max_kkt_violation(&xs, &ys)
            })
            .fold(0.0, f64::max)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = LeWriter::default();
        w.buf.extend_from_slice(MODEL_MAGIC);
        w.u32(MODEL_FILE_VERSION);
        let first = self.submodels.first();
        w.f64(self.gamma());
        w.f64(first.map_or(0.0, |m| m.c));
        w.u32(self.feature_dim() as u32);
        w.u32(self.classes.len() as u32);
        self.classes.iter().for_each(|&c| w.u8(c));
        w.u32(self.pool.len() as u32);
        self.pool.iter().flatten().for_each(|&v| w.f64(v));
        w.u32(self.submodels.len() as u32);
        for (m, refs) in self.submodels.iter().zip(&self.pool_refs) {
            w.u8(m.class_pair.0);
            w.u8(m.class_pair.1);
            w.f64(m.bias);
            w.u64(m.iterations);
            w.u8(m.converged as u8);
            w.u32(refs.len() as u32);
            for ((&p, &c), &pos) in refs.iter().zip(&m.dual_coeffs).zip(&m.sv_positions) {
                w.u32(p as u32);
                w.u32(pos as u32);
                w.f64(c);
            }
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "model file");
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("model file: bad magic".into()));
        }
        check_version(r.u32()?, MODEL_FILE_VERSION, "model file")?;
        let gamma = r.f64()?;
        let c = r.f64()?;
        let dim = r.u32()? as usize;
        let n_classes = r.u32()? as usize;
        let classes = (0..n_classes).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
        let pool_len = r.u32()? as usize;
        let mut pool = Vec::with_capacity(pool_len);
        for _ in 0..pool_len {
            pool.push((0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        let n_sub = r.u32()? as usize;
        let mut submodels = Vec::with_capacity(n_sub);
        for _ in 0..n_sub {
            let class_pair = (r.u8()?, r.u8()?);
            let bias = r.f64()?;
            let iterations = r.u64()?;
            let converged = r.u8()? != 0;
            let n_sv = r.u32()? as usize;
            let mut model = SvmModel {
                support_vectors: Vec::with_capacity(n_sv),
                dual_coeffs: Vec::with_capacity(n_sv),
                sv_positions: Vec::with_capacity(n_sv),
                bias,
                gamma,
                c,
                class_pair,
                iterations,
                converged,
            };
            for _ in 0..n_sv {
                let p = r.u32()? as usize;
                let sv = pool.get(p).ok_or_else(|| {
                    Error::Format(format!("model file: pool index {p} out of range"))
                })?;
                model.support_vectors.push(sv.clone());
                model.sv_positions.push(r.u32()? as usize);
                model.dual_coeffs.push(r.f64()?);
            }
            submodels.push(model);
        }
        r.finish()?;
        Ok(Self::new(submodels, classes))
    }
}

pub fn predict(model: &MulticlassModel, feature: &[f64]) -> Result<u8> {
    model.predict(feature)
}

/// One-vs-one training over the classes present in `labels`.
pub fn train_multiclass(
    features: &[Vec<f64>],
    labels: &[u8],
    params: &SvmParams,
) -> Result<MulticlassModel> {
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    train_multiclass_with_classes(features, labels, &classes, params)
}

/// One-vs-one training that requires every class in `classes` to appear.
pub fn train_multiclass_with_classes(
    features: &[Vec<f64>],
    labels: &[u8],
    classes: &[u8],
    params: &SvmParams,
) -> Result<MulticlassModel> {
    if features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if classes.len() < 2 {
        return Err(Error::Class(format!(
            "need at least 2 classes, got {}",
            classes.len()
        )));
    }
    if let Some(missing) = classes.iter().find(|c| !labels.contains(c)) {
        return Err(Error::Class(format!(
            "class {missing} has no training samples"
        )));
    }
    if let Some(stray) = labels.iter().find(|l| !classes.contains(l)) {
        return Err(Error::Class(format!(
            "label {stray} is not among the model classes"
        )));
    }

    let mut pairs = Vec::new();
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            pairs.push((a, b));
        }
    }
    let submodels = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (x, y): (Vec<&[f64]>, Vec<i8>) = features
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == a || l == b)
                .map(|(f, &l)| (f.as_slice(), if l == a { 1 } else { -1 }))
                .unzip();
            let mut model = train_binary_refs(&x, &y, params)?;
            model.class_pair = (a, b);
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassModel::new(submodels, classes.to_vec()))
}

pub fn accuracy(predicted: &[u8], truth: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
