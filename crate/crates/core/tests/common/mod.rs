#![allow(dead_code)]

pub mod jacobi;
pub mod qp_oracle;

use std::path::PathBuf;
use std::sync::OnceLock;

use sqim::dataset::{ingest, DatasetKind, DatasetSplit};

/// `$SQIM_MNIST_DIR`, else `<workspace>/data/mnist`, if the IDX files are there.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SQIM_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let present = ["train-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .all(|f| dir.join(f).is_file() || dir.join(format!("{f}.gz")).is_file());
    present.then_some(dir)
}

/// MNIST normalized to n_S = 10 with split seed 0, loaded once per test binary.
pub fn mnist_split() -> Option<&'static DatasetSplit> {
    static SPLIT: OnceLock<Option<DatasetSplit>> = OnceLock::new();
    SPLIT
        .get_or_init(|| {
            let dir = mnist_dir()?;
            Some(ingest(DatasetKind::Mnist, &dir, 10.0, 0).expect("MNIST ingest"))
        })
        .as_ref()
}

#[macro_export]
macro_rules! require_mnist {
    () => {
        match common::mnist_split() {
            Some(split) => split,
            None => {
                eprintln!("MNIST not found (set SQIM_MNIST_DIR); skipping");
                return;
            }
        }
    };
}

/// Sample covariance `(1/N) Σ (x − μ)(x − μ)ᵀ` as a dense row-major matrix,
/// accumulated one record at a time.
pub fn naive_covariance(rows: &[&[f64]]) -> (Vec<f64>, usize) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    let mut c = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            c[j] = r[j] - mean[j];
        }
        for i in 0..d {
            let ci = c[i];
            let row = &mut cov[i * d..i * d + i + 1];
            for (dst, cj) in row.iter_mut().zip(&c) {
                *dst += ci * cj;
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / n;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (cov, d)
}
