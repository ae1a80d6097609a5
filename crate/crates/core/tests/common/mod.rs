#![allow(dead_code)]

use drkm::model::{sq_dist, Centroids, DataSet, SoftAssignment};
use drkm::Rng;

pub fn blobs(rng: &mut Rng, centers: &[Vec<f64>], per: usize, spread: f64) -> DataSet {
    let mut rows = Vec::new();
    for c in centers {
        for _ in 0..per {
            rows.push(c.iter().map(|v| v + spread * rng.normal()).collect());
        }
    }
    DataSet::new(&rows).unwrap()
}

pub fn gaussian_data(rng: &mut Rng, n: usize, d: usize, scale: f64) -> DataSet {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| scale * rng.normal()).collect()).collect();
    DataSet::new(&rows).unwrap()
}

pub fn random_centroids(rng: &mut Rng, k: usize, d: usize, scale: f64) -> Centroids {
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| scale * rng.normal()).collect()).collect();
    Centroids::new(&rows).unwrap()
}

/// Dirichlet(1)-style columns with every weight at least `floor`.
pub fn random_soft(rng: &mut Rng, k: usize, n: usize, floor: f64) -> SoftAssignment {
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| -rng.uniform().max(1e-300).ln()).collect();
            let total: f64 = raw.iter().sum();
            let scaled: Vec<f64> = raw.iter().map(|v| floor + (1.0 - k as f64 * floor) * v / total).collect();
            let s: f64 = scaled.iter().sum();
            scaled.iter().map(|v| v / s).collect()
        })
        .collect();
    SoftAssignment::from_columns(&cols).unwrap()
}

/// `Σ_k π_k ||x − μ_k||² + ||x − Mπ||² / (γ − 1)`, written out directly.
pub fn inner_objective(x: &[f64], m: &Centroids, pi: &[f64], gamma: f64) -> f64 {
    let mut mix = vec![0.0; x.len()];
    let mut spread = 0.0;
    for (k, p) in pi.iter().enumerate() {
        let c = m.center(k);
        spread += p * sq_dist(x, c);
        for (j, v) in c.iter().enumerate() {
            mix[j] += p * v;
        }
    }
    spread + sq_dist(x, &mix) / (gamma - 1.0)
}

pub fn inner_gradient(x: &[f64], m: &Centroids, pi: &[f64], gamma: f64) -> Vec<f64> {
    let mut mix = vec![0.0; x.len()];
    for (k, p) in pi.iter().enumerate() {
        for (j, v) in m.center(k).iter().enumerate() {
            mix[j] += p * v;
        }
    }
    (0..m.k())
        .map(|k| {
            let c = m.center(k);
            let cross: f64 = (0..x.len()).map(|j| (x[j] - mix[j]) * c[j]).sum();
            sq_dist(x, c) - 2.0 * cross / (gamma - 1.0)
        })
        .collect()
}

pub fn entropy(pi: &[f64]) -> f64 {
    -pi.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `J_γ(M, Π)` without the `γ r²` constant, as a plain mean.
pub fn surrogate(data: &DataSet, m: &Centroids, pi: &SoftAssignment, gamma: f64) -> f64 {
    data.points().zip(pi.columns()).map(|(x, c)| inner_objective(x, m, c, gamma)).sum::<f64>() / data.n_points() as f64
}

pub fn non_increasing(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + slack)
}

pub fn in_simplex(pi: &[f64], tol: f64) -> bool {
    pi.iter().all(|p| *p >= -tol) && (pi.iter().sum::<f64>() - 1.0).abs() <= tol
}
