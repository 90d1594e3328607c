//! Reference solver for the soft-margin SVM dual
//! `max Σα − ½ αᵀQα, 0 ≤ α ≤ C, yᵀα = 0` by accelerated projected gradient.

pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

pub fn gram(xs: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|a| xs.iter().map(|b| rbf(a, b, gamma)).collect())
        .collect()
}

pub fn dual_objective(k: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi + lam * yi).clamp(0.0, c))
            .collect()
    };
    let h = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(&at(mid)) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// FISTA with adaptive restart on the negated dual.
pub fn solve_dual(k: &[Vec<f64>], y: &[f64], c: f64, iters: usize) -> Vec<f64> {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    // Lipschitz constant by power iteration, padded.
    let mut v = vec![1.0; n];
    let mut lip = 1.0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q(i, j) * v[j]).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (1.05 * lip);

    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q(i, j) * a[j]).sum::<f64>() - 1.0)
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&z);
        let cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&cand, y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let restart = g
            .iter()
            .zip(next.iter().zip(&x))
            .map(|(gi, (a, b))| gi * (a - b))
            .sum::<f64>()
            > 0.0;
        if restart {
            t = 1.0;
            z = next.clone();
        } else {
            let mom = (t - 1.0) / t_next;
            z = next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + mom * (a - b))
                .collect();
            t = t_next;
        }
        x = next;
    }
    x
}

/// Bias from the oracle duals: average over margin support vectors of
/// `y_i − Σ_j α_j y_j K_ij`.
pub fn bias(k: &[Vec<f64>], y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let f = |i: usize| (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum::<f64>();
    let free: Vec<usize> = (0..n)
        .filter(|&i| alpha[i] > 1e-6 * c && alpha[i] < c * (1.0 - 1e-6))
        .collect();
    if free.is_empty() {
        0.0
    } else {
        free.iter().map(|&i| y[i] - f(i)).sum::<f64>() / free.len() as f64
    }
}
