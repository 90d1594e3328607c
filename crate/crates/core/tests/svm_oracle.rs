mod common;

use common::qp_oracle;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sqim::pca::fit_pca;
use sqim::quantum::{measure_records, Gain, NoiseConvention, PortCount, SensingConfig};
use sqim::svm::{
    accuracy, gamma_scale, rbf_kernel, train_binary, train_multiclass, MulticlassModel, SvmParams,
};

/// Isotropic Gaussian blobs in 2-D, `per_class` points around each center.
fn blobs(
    centers: &[(f64, f64)],
    per_class: usize,
    spread: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..per_class {
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            xs.push(vec![cx + spread * dx, cy + spread * dy]);
            ys.push(c as u8);
        }
    }
    (xs, ys)
}

fn signs(labels: &[u8]) -> Vec<i8> {
    labels
        .iter()
        .map(|&l| if l == 0 { 1 } else { -1 })
        .collect()
}

#[test]
fn dual_objective_matches_qp_oracle() {
    let (xs, ys) = blobs(&[(0.0, 0.0), (1.5, 1.0)], 100, 0.9, 42);
    let y = signs(&ys);
    let gamma = 0.5;
    let params = SvmParams {
        tol: 1e-4,
        ..SvmParams::new(gamma)
    };
    let model = train_binary(&xs, &y, &params).unwrap();
    assert!(model.converged);

    let k = qp_oracle::gram(&xs, gamma);
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let alpha = qp_oracle::solve_dual(&k, &yf, 1.0, 20_000);
    let oracle = qp_oracle::dual_objective(&k, &yf, &alpha);
    let ours = model.dual_objective();
    assert!(
        (ours - oracle).abs() <= 1e-3,
        "dual {ours} vs oracle {oracle}"
    );

    assert!(model.max_kkt_violation(&xs, &y) <= params.tol);
    assert!(model.equality_residual() <= 1e-6 * params.c);
    assert!(model
        .dual_coeffs
        .iter()
        .all(|c| c.abs() <= params.c + 1e-12));
}

#[test]
fn held_out_accuracy_matches_reference_implementation() {
    let centers = [(0.0, 0.0), (2.0, 0.0), (1.0, 1.7)];
    let (xs, ys) = blobs(&centers, 60, 0.8, 7);
    let (tx, ty) = blobs(&centers, 200, 0.8, 8);
    let gamma = gamma_scale(&xs).unwrap();
    let model = train_multiclass(&xs, &ys, &SvmParams::new(gamma)).unwrap();
    let ours = accuracy(&model.predict_batch(&tx).unwrap(), &ty);

    // Reference: oracle duals per pair, majority vote, lowest class on ties.
    let mut pairs = Vec::new();
    for a in 0..3u8 {
        for b in a + 1..3 {
            let idx: Vec<usize> = (0..xs.len())
                .filter(|&i| ys[i] == a || ys[i] == b)
                .collect();
            let px: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
            let py: Vec<f64> = idx
                .iter()
                .map(|&i| if ys[i] == a { 1.0 } else { -1.0 })
                .collect();
            let k = qp_oracle::gram(&px, gamma);
            let alpha = qp_oracle::solve_dual(&k, &py, 1.0, 5_000);
            let b0 = qp_oracle::bias(&k, &py, &alpha, 1.0);
            pairs.push((a, b, px, py, alpha, b0));
        }
    }
    let predicted: Vec<u8> = tx
        .iter()
        .map(|x| {
            let mut votes = [0usize; 3];
            for (a, b, px, py, alpha, b0) in &pairs {
                let f: f64 = px
                    .iter()
                    .zip(py)
                    .zip(alpha)
                    .map(|((s, y), al)| al * y * qp_oracle::rbf(s, x, gamma))
                    .sum::<f64>()
                    + b0;
                votes[if f >= 0.0 { *a } else { *b } as usize] += 1;
            }
            (0..3u8)
                .max_by_key(|&c| (votes[c as usize], std::cmp::Reverse(c)))
                .unwrap()
        })
        .collect();
    let reference = accuracy(&predicted, &ty);
    assert!(
        (ours - reference).abs() <= 0.02,
        "ours {ours} vs reference {reference}"
    );
    assert!(ours > 0.7);
}

#[test]
fn predictions_match_hand_vote_tabulation() {
    let (xs, ys) = blobs(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)], 30, 0.6, 3);
    let model = train_multiclass(&xs, &ys, &SvmParams::new(1.0)).unwrap();
    assert_eq!(model.submodels.len(), 3);
    let (tx, _) = blobs(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)], 50, 0.9, 4);
    for x in &tx {
        let mut votes = [(0usize, 0.0f64); 3];
        for sub in &model.submodels {
            let d = sub.decision(x);
            let w = if d >= 0.0 {
                sub.class_pair.0
            } else {
                sub.class_pair.1
            };
            votes[w as usize].0 += 1;
            votes[w as usize].1 += d.abs();
        }
        let mut best = 0usize;
        for c in 1..3 {
            let (bv, bs) = votes[best];
            let (v, s) = votes[c];
            if v > bv || (v == bv && s > bs) {
                best = c;
            }
        }
        assert_eq!(model.predict(x).unwrap(), best as u8);
    }
}

#[test]
fn ten_classes_give_45_submodels() {
    let centers: Vec<(f64, f64)> = (0..10)
        .map(|c| ((c as f64).cos() * 3.0, (c as f64).sin() * 3.0))
        .collect();
    let (xs, ys) = blobs(&centers, 8, 0.3, 1);
    let model = train_multiclass(&xs, &ys, &SvmParams::new(0.5)).unwrap();
    assert_eq!(model.submodels.len(), 45);
    let mut pairs: Vec<(u8, u8)> = model.submodels.iter().map(|m| m.class_pair).collect();
    pairs.sort_unstable();
    pairs.dedup();
    assert_eq!(pairs.len(), 45);
    assert!(model.max_kkt_violation(&xs, &ys) <= 1e-3);

    let back = MulticlassModel::decode(&model.encode()).unwrap();
    assert_eq!(
        back.predict_batch(&xs).unwrap(),
        model.predict_batch(&xs).unwrap()
    );
}

#[test]
fn two_class_multiclass_equals_binary() {
    let (xs, ys) = blobs(&[(0.0, 0.0), (1.0, 1.0)], 40, 0.7, 9);
    let params = SvmParams::new(0.8);
    let multi = train_multiclass(&xs, &ys, &params).unwrap();
    let binary = train_binary(&xs, &signs(&ys), &params).unwrap();
    assert_eq!(multi.submodels.len(), 1);
    assert_eq!(multi.submodels[0].dual_coeffs, binary.dual_coeffs);
    assert_eq!(multi.submodels[0].bias, binary.bias);
}

#[test]
fn gamma_on_mnist_measurements_matches_direct_formula() {
    let split = require_mnist!();
    let basis = fit_pca(&split.train, 20).unwrap();
    let cfg = SensingConfig {
        k: 20,
        m: PortCount::Full,
        gain: Gain::Finite(10.0),
        n_s: 10.0,
        convention: NoiseConvention::Quadrature,
        seed: 1,
    };
    let set = measure_records(&basis, &split.test, &cfg).unwrap();
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut n = 0.0;
    for f in &set.features {
        for &v in f {
            sum += v;
            sq += v * v;
            n += 1.0;
        }
    }
    let var = sq / n - (sum / n) * (sum / n);
    let want = 1.0 / (20.0 * var);
    let got = gamma_scale(&set.features).unwrap();
    assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_bounded(
        x in prop::collection::vec(-5.0f64..5.0, 1..8),
        shift in prop::collection::vec(-5.0f64..5.0, 8),
        gamma in 1e-3f64..10.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let kxy = rbf_kernel(&x, &y, gamma).unwrap();
        prop_assert_eq!(kxy, rbf_kernel(&y, &x, gamma).unwrap());
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!((0.0..=1.0).contains(&kxy));
        if gamma * d2 < 700.0 {
            prop_assert!(kxy > 0.0);
        }
        prop_assert_eq!(rbf_kernel(&x, &x, gamma).unwrap(), 1.0);
        let naive = (-gamma * d2).exp();
        prop_assert!((kxy - naive).abs() <= 1e-12);
    }

    #[test]
    fn duals_are_feasible(seed in 0u64..1000, c in 0.1f64..10.0, gamma in 0.05f64..5.0) {
        let (xs, ys) = blobs(&[(0.0, 0.0), (1.0, 0.5)], 25, 1.0, seed);
        let y = signs(&ys);
        let params = SvmParams { c, ..SvmParams::new(gamma) };
        let model = train_binary(&xs, &y, &params).unwrap();
        prop_assert!(model.dual_coeffs.iter().all(|a| a.abs() <= c * (1.0 + 1e-12)));
        prop_assert!(model.equality_residual() <= 1e-6 * c);
        prop_assert!(model.max_kkt_violation(&xs, &y) <= params.tol);
        let x0 = &xs[0];
        prop_assert_eq!(model.decision(x0), model.decision(x0));
    }
}

#[test]
fn large_c_separates_separable_data() {
    let (xs, ys) = blobs(&[(0.0, 0.0), (4.0, 4.0)], 30, 0.5, 12);
    let y = signs(&ys);
    let model = train_binary(
        &xs,
        &y,
        &SvmParams {
            c: 1e4,
            ..SvmParams::new(1.0)
        },
    )
    .unwrap();
    assert!(xs.iter().zip(&y).all(|(x, &l)| model.predict_sign(x) == l));
}
