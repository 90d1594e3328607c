mod common;

use std::fs;

use sqim::dataset::{load_mnist_dir, parse_mnist, write_mnist};

/// Labels decoded straight from the IDX bytes, without the library parser.
fn reference_labels(bytes: &[u8]) -> Vec<u8> {
    assert_eq!(&bytes[..4], &[0, 0, 8, 1], "label magic 2049");
    let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 8 + n);
    bytes[8..].to_vec()
}

fn reference_pixel(bytes: &[u8], image: usize, pixel: usize) -> f64 {
    assert_eq!(&bytes[..4], &[0, 0, 8, 3], "image magic 2051");
    let rows = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_be_bytes(bytes[12..16].try_into().unwrap()) as usize;
    f64::from(bytes[16 + image * rows * cols + pixel]) / 255.0
}

#[test]
fn official_test_file_matches_reference_reader() {
    let Some(dir) = common::mnist_dir() else {
        eprintln!("MNIST not found; skipping");
        return;
    };
    let img = fs::read(dir.join("t10k-images-idx3-ubyte")).unwrap();
    let lbl = fs::read(dir.join("t10k-labels-idx1-ubyte")).unwrap();
    let images = parse_mnist(&img, &lbl).unwrap();
    assert_eq!(images.len(), 10_000);

    let labels = reference_labels(&lbl);
    let mut hist = [0usize; 10];
    for (im, &l) in images.iter().zip(&labels) {
        assert_eq!(im.label, l);
        hist[l as usize] += 1;
    }
    assert_eq!(
        hist,
        [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009]
    );

    for &(i, p) in &[(0, 0), (0, 300), (1234, 400), (9999, 783)] {
        assert_eq!(images[i].pixels[p], reference_pixel(&img, i, p));
    }

    let (img_out, lbl_out) = write_mnist(&images).unwrap();
    assert!(
        img_out == img && lbl_out == lbl,
        "round trip must reproduce the official bytes"
    );
}

#[test]
fn splits_follow_policy() {
    let split = require_mnist!();
    assert_eq!(
        (split.train.len(), split.validation.len(), split.test.len()),
        (50_000, 10_000, 10_000)
    );
    let mut seen = vec![false; 70_000];
    for r in split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
    {
        assert!(!seen[r.index], "index {} in two splits", r.index);
        seen[r.index] = true;
    }
    assert!(seen.iter().all(|&s| s));
    assert!(split.test.iter().all(|r| r.index >= 60_000));

    for r in split.train.iter().chain(&split.test) {
        assert!((r.energy() - 10.0).abs() <= 1e-9 * 10.0);
    }
}

#[test]
fn training_source_loads_60000() {
    let Some(dir) = common::mnist_dir() else {
        return;
    };
    let source = load_mnist_dir(&dir).unwrap();
    assert_eq!(source.train.len(), 60_000);
    assert_eq!(source.test.len(), 10_000);
    assert_eq!(source.train[0].pixels.len(), 784);
}
