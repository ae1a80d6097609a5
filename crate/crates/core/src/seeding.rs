//! k-means++ seeding and the classical Lloyd baseline.

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::model::{empirical_risk, nearest_with_cost, sq_dist, stable_sum, Centroids, DataSet, FitResult, SoftAssignment};
use crate::rng::Rng;

fn check_k(data: &DataSet, k: usize) -> Result<()> {
    ensure(k >= 1, || "k must be >= 1".into())?;
    ensure(k <= data.n_points(), || format!("k={k} exceeds the number of points {}", data.n_points()))
}

/// k-means++ seeding: the first center is a uniform draw, each further center
/// is a data point drawn with probability proportional to its squared distance
/// to the nearest center chosen so far.
pub fn seed_kmeanspp(data: &DataSet, k: usize, rng: &mut Rng) -> Result<Centroids> {
    check_k(data, k)?;
    let n = data.n_points();
    let first = rng.index(n);
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = (0..n).into_par_iter().map(|i| sq_dist(data.point(i), data.point(first))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in dist.iter().enumerate() {
                if *d > 0.0 {
                    acc += d;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Fewer than k distinct points.
            rng.index(n)
        };
        chosen.push(next);
        let c = data.point(next).to_vec();
        dist.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(data.point(i), &c));
        });
    }
    Centroids::new(&data.select(&chosen)?.to_rows())
}

/// k distinct data points drawn uniformly without replacement.
pub fn seed_random(data: &DataSet, k: usize, rng: &mut Rng) -> Result<Centroids> {
    check_k(data, k)?;
    let mut idx: Vec<usize> = (0..data.n_points()).collect();
    for i in 0..k {
        let j = i + rng.index(idx.len() - i);
        idx.swap(i, j);
    }
    Centroids::new(&data.select(&idx[..k])?.to_rows())
}

/// Move centers of empty clusters onto the points with the largest current
/// cost, one distinct point per empty cluster.
pub(crate) fn reseed_empty(data: &DataSet, m: &mut Centroids, empty: &[usize], cost: &[f64]) {
    if empty.is_empty() {
        return;
    }
    let mut order: Vec<usize> = (0..data.n_points()).collect();
    order.sort_by(|&a, &b| cost[b].total_cmp(&cost[a]).then(a.cmp(&b)));
    for (&k, &n) in empty.iter().zip(&order) {
        m.center_mut(k).copy_from_slice(data.point(n));
    }
}

/// Lloyd iterations from `init`. Stops when the relative centroid shift is at
/// most `tol` or after `max_iter` updates.
pub fn lloyd_fit(data: &DataSet, init: &Centroids, tol: f64, max_iter: usize) -> Result<FitResult> {
    init.check_dim(data)?;
    let k = init.k();
    let mut m = init.clone();
    let mut nearest = nearest_with_cost(data, &m);
    let mut trace = vec![empirical_risk(data, &m)?];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut counts = vec![0usize; k];
        for (label, _) in &nearest {
            counts[*label] += 1;
        }
        let mut next = m.clone();
        let mut empty = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                empty.push(c);
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for (j, dst) in next.center_mut(c).iter_mut().enumerate() {
                let members = data.points().zip(&nearest).filter(|(_, (l, _))| *l == c);
                *dst = stable_sum(members.map(|(x, _)| x[j])) * inv;
            }
        }
        let cost: Vec<f64> = nearest.iter().map(|(_, d)| *d).collect();
        reseed_empty(data, &mut next, &empty, &cost);

        let shift = m.relative_shift(&next);
        m = next;
        nearest = nearest_with_cost(data, &m);
        trace.push(stable_sum(nearest.iter().map(|(_, d)| *d)) / data.n_points() as f64);
        iterations += 1;
        if shift <= tol {
            converged = true;
            break;
        }
    }
    let labels: Vec<usize> = nearest.iter().map(|(l, _)| *l).collect();
    Ok(FitResult {
        centroids: m,
        assignment: SoftAssignment::one_hot(&labels, k)?,
        gamma_final: f64::INFINITY,
        objective_trace: trace,
        gamma_trace: Vec::new(),
        worst_case_points: data.clone(),
        iterations,
        converged,
    })
}
