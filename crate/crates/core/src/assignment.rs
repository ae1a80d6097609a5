//! Robust soft assignment: the per-point inner problem
//!
//! ```text
//! min_{π ∈ Δ_K}  f(π) = Σ_k π_k ||x − μ_k||² + ||x − Mπ||² / (γ − 1)
//! ```
//!
//! whose value is the per-point dual term `e(γ, M)` and whose minimizer fixes
//! the worst-case point `x* = x + (x − Mπ) / (γ − 1)`.
//!
//! The quadratic is handled in centered coordinates `a_k = μ_k − μ̄` so the
//! Gram matrix `AᵀA` stays well scaled. For K ≥ 3 the solver runs FISTA with
//! exact simplex projection and adaptive restart, and periodically tries to
//! finish exactly by solving the equality-constrained KKT system on the
//! current support. K ≤ 2 is closed form.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue_psd, solve_dense};
use crate::model::{check_gamma, sq_dist, Centroids, DataSet, SoftAssignment};

/// Saddle point of the inner problem for one data point.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub pi: Vec<f64>,
    pub x_star: Vec<f64>,
    /// `f(π)`; never includes an entropy term.
    pub e_value: f64,
}

/// Euclidean projection onto the probability simplex (sort based).
pub fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// KKT residual of a simplex-constrained minimization: the largest gradient
/// excess over the minimum on the support, relative to `1 + ||g||∞`.
pub fn kkt_residual(pi: &[f64], grad: &[f64]) -> f64 {
    let gmin = grad.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let excess = pi
        .iter()
        .zip(grad)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, g)| g - gmin)
        .fold(0.0f64, f64::max);
    excess / (1.0 + gmax)
}

/// Per-point inner problem in K-dimensional coordinates.
struct PointProblem<'s> {
    dist: Vec<f64>,
    /// `Aᵀ b` with `b = x − μ̄`.
    atb: Vec<f64>,
    bb: f64,
    gram: &'s [f64],
    inv: f64,
    k: usize,
}

impl PointProblem<'_> {
    fn grad_into(&self, pi: &[f64], out: &mut [f64]) {
        let k = self.k;
        for i in 0..k {
            let row = &self.gram[i * k..(i + 1) * k];
            let qpi: f64 = row.iter().zip(pi).map(|(q, p)| q * p).sum();
            out[i] = self.dist[i] + 2.0 * self.inv * (qpi - self.atb[i]);
        }
    }

    /// Absolute rounding level of the gradient entries. Near γ = 1 the factor
    /// `1/(γ − 1)` amplifies cancellation in `Qπ − Aᵀb`, so KKT excesses below
    /// this are indistinguishable from zero.
    fn noise(&self) -> f64 {
        let qmax = self.gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amax = self.atb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dmax = self.dist.iter().fold(0.0f64, |m, v| m.max(*v));
        64.0 * f64::EPSILON * (2.0 * self.inv * (self.k as f64 * qmax + amax) + dmax)
    }

    /// KKT residual within `tol`, or within the gradient's rounding level.
    fn converged(&self, pi: &[f64], grad: &[f64], tol: f64) -> bool {
        let r = kkt_residual(pi, grad);
        r <= tol || r * (1.0 + grad.iter().fold(0.0f64, |m, v| m.max(v.abs()))) <= self.noise()
    }

    fn grad(&self, pi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.k];
        self.grad_into(pi, &mut g);
        g
    }

    fn value(&self, pi: &[f64]) -> f64 {
        let k = self.k;
        let mut quad = 0.0;
        for i in 0..k {
            if pi[i] == 0.0 {
                continue;
            }
            let row = &self.gram[i * k..(i + 1) * k];
            quad += pi[i] * row.iter().zip(pi).map(|(q, p)| q * p).sum::<f64>();
        }
        let lin: f64 = pi.iter().zip(&self.dist).map(|(p, d)| p * d).sum();
        let cross: f64 = pi.iter().zip(&self.atb).map(|(p, a)| p * a).sum();
        lin + self.inv * (quad - 2.0 * cross + self.bb).max(0.0)
    }

    /// Minimize exactly on `support` via the KKT system, dropping the most
    /// negative coordinate until the solution is nonnegative.
    fn solve_on_support(&self, mut support: Vec<usize>) -> Option<Vec<f64>> {
        let k = self.k;
        while !support.is_empty() {
            let s = support.len();
            let n = s + 1;
            let mut a = vec![0.0; n * n];
            let mut rhs = vec![0.0; n];
            for (r, &i) in support.iter().enumerate() {
                for (c, &j) in support.iter().enumerate() {
                    a[r * n + c] = 2.0 * self.inv * self.gram[i * k + j];
                }
                a[r * n + s] = -1.0;
                a[s * n + r] = 1.0;
                rhs[r] = 2.0 * self.inv * self.atb[i] - self.dist[i];
            }
            rhs[s] = 1.0;
            let sol = solve_dense(a, rhs, n, 1e-13)?;
            let (worst, wval) = sol[..s]
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
            if wval < 0.0 {
                support.remove(worst);
                continue;
            }
            let mut pi = vec![0.0; k];
            for (r, &i) in support.iter().enumerate() {
                pi[i] = sol[r];
            }
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            return Some(pi);
        }
        None
    }

    /// Exact candidate from the support of `pi`, accepted only when it meets
    /// the KKT tolerance.
    fn polish(&self, pi: &[f64], tol: f64) -> Option<Vec<f64>> {
        let support: Vec<usize> = (0..self.k).filter(|&i| pi[i] > 0.0).collect();
        let g = self.grad(pi);
        let best = argmin(&g);
        let mut tries = vec![support.clone()];
        if !support.contains(&best) {
            let mut extended = support;
            extended.push(best);
            extended.sort_unstable();
            tries.push(extended);
        }
        for s in tries {
            if let Some(cand) = self.solve_on_support(s) {
                if self.converged(&cand, &self.grad(&cand), tol) {
                    return Some(cand);
                }
            }
        }
        None
    }

    /// Try every support of size at most `max_support` drawn from `pool`,
    /// smallest first, within a budget of linear solves. `f` depends on π
    /// only through `(Aπ, dᵀπ)`, so some minimizer is supported on at most
    /// rank(A) + 1 centers; this finds it when the iterate's own support is
    /// too large for the KKT system to be nonsingular.
    fn polish_subsets(&self, pool: &[usize], max_support: usize, tol: f64) -> Option<Vec<f64>> {
        let mut budget = SUBSET_BUDGET;
        for size in 1..=max_support.min(pool.len()) {
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                if budget == 0 {
                    return None;
                }
                budget -= 1;
                let support: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
                if let Some(cand) = self.solve_on_support(support) {
                    if self.converged(&cand, &self.grad(&cand), tol) {
                        return Some(cand);
                    }
                }
                // Advance to the next combination in lexicographic order.
                let Some(pos) = (0..size).rev().find(|&i| idx[i] < pool.len() - size + i) else {
                    break;
                };
                idx[pos] += 1;
                for j in pos + 1..size {
                    idx[j] = idx[j - 1] + 1;
                }
            }
        }
        None
    }
}

/// Linear solves allowed per subset search.
const SUBSET_BUDGET: usize = 4096;

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Inner solver bound to a fixed `(M, γ)`, reused across all data points.
#[derive(Debug, Clone)]
pub struct AssignmentSolver<'a> {
    m: &'a Centroids,
    gamma: f64,
    inv: f64,
    mean: Vec<f64>,
    centered: Vec<f64>,
    gram: Vec<f64>,
    lipschitz: f64,
}

impl<'a> AssignmentSolver<'a> {
    pub fn new(m: &'a Centroids, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let (k, d) = (m.k(), m.dim());
        let mut mean = vec![0.0; d];
        for c in m.centers() {
            for (a, v) in mean.iter_mut().zip(c) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= k as f64);
        let mut centered = Vec::with_capacity(k * d);
        for c in m.centers() {
            centered.extend(c.iter().zip(&mean).map(|(v, a)| v - a));
        }
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = centered[i * d..(i + 1) * d]
                    .iter()
                    .zip(&centered[j * d..(j + 1) * d])
                    .map(|(a, b)| a * b)
                    .sum();
                gram[i * k + j] = v;
                gram[j * k + i] = v;
            }
        }
        let inv = 1.0 / (gamma - 1.0);
        let lipschitz = 2.0 * inv * max_eigenvalue_psd(&gram, k) * 1.05;
        Ok(Self { m, gamma, inv, mean, centered, gram, lipschitz })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn problem(&self, x: &[f64]) -> PointProblem<'_> {
        let (k, d) = (self.m.k(), self.m.dim());
        let b: Vec<f64> = x.iter().zip(&self.mean).map(|(v, a)| v - a).collect();
        let atb = (0..k)
            .map(|i| self.centered[i * d..(i + 1) * d].iter().zip(&b).map(|(a, v)| a * v).sum())
            .collect();
        PointProblem {
            dist: self.m.centers().map(|c| sq_dist(x, c)).collect(),
            atb,
            bb: b.iter().map(|v| v * v).sum(),
            gram: &self.gram,
            inv: self.inv,
            k,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m.dim() {
            return Err(Error::DimensionMismatch { expected: self.m.dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data point"));
        }
        Ok(())
    }

    /// Assemble `(π, x*, e)` from a feasible `π`, evaluating `f` in R^d.
    pub fn finish(&self, x: &[f64], pi: Vec<f64>) -> InnerSolution {
        let mix = self.m.mix(&pi);
        let spread: f64 = pi
            .iter()
            .zip(self.m.centers())
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, c)| w * sq_dist(x, c))
            .sum();
        let e_value = spread + sq_dist(x, &mix) * self.inv;
        let x_star = x.iter().zip(&mix).map(|(v, p)| v + (v - p) * self.inv).collect();
        InnerSolution { pi, x_star, e_value }
    }

    /// Minimize `f` over the simplex to KKT residual `tol`.
    pub fn solve(&self, x: &[f64], tol: f64, max_iter: usize, warm: Option<&[f64]>) -> Result<InnerSolution> {
        self.check_point(x)?;
        let pi = self.solve_pi(x, tol, max_iter, warm)?;
        Ok(self.finish(x, pi))
    }

    fn solve_pi(&self, x: &[f64], tol: f64, max_iter: usize, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let k = self.m.k();
        match k {
            1 => return Ok(vec![1.0]),
            2 => return Ok(self.solve_pair(x)),
            _ => {}
        }
        let prob = self.problem(x);
        let nearest = argmin(&prob.dist);
        let mut onehot = vec![0.0; k];
        onehot[nearest] = 1.0;
        if let Some(pi) = prob.polish(&onehot, tol) {
            return Ok(pi);
        }
        let mut cur = match warm {
            Some(w) if w.len() == k => {
                let mut w = w.to_vec();
                project_simplex(&mut w);
                if let Some(pi) = prob.polish(&w, tol) {
                    return Ok(pi);
                }
                w
            }
            _ => onehot,
        };

        if self.lipschitz <= 0.0 {
            // Coincident centroids: f is linear in π.
            return Ok(prob.polish(&cur, f64::INFINITY).unwrap_or(cur));
        }
        let step = 1.0 / self.lipschitz;
        let mut y = cur.clone();
        let mut t = 1.0f64;
        let mut g = vec![0.0; k];
        let mut next = vec![0.0; k];
        let mut residual = f64::INFINITY;
        let mut last_support: Vec<bool> = cur.iter().map(|p| *p > 0.0).collect();
        let mut stable = 0usize;
        for it in 0..max_iter {
            prob.grad_into(&y, &mut g);
            for i in 0..k {
                next[i] = y[i] - step * g[i];
            }
            project_simplex(&mut next);

            let restart: f64 = (0..k).map(|i| (y[i] - next[i]) * (next[i] - cur[i])).sum();
            if restart > 0.0 {
                t = 1.0;
                y.copy_from_slice(&next);
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                for i in 0..k {
                    y[i] = next[i] + beta * (next[i] - cur[i]);
                }
                t = t_next;
            }
            std::mem::swap(&mut cur, &mut next);

            prob.grad_into(&cur, &mut g);
            residual = kkt_residual(&cur, &g);
            if prob.converged(&cur, &g, tol) {
                return Ok(cur);
            }
            let support: Vec<bool> = cur.iter().map(|p| *p > 0.0).collect();
            if support == last_support {
                stable += 1;
            } else {
                stable = 0;
                last_support = support;
            }
            if stable == 3 || it % 25 == 24 {
                if let Some(pi) = prob.polish(&cur, tol) {
                    return Ok(pi);
                }
            }
            if it % 500 == 499 {
                if let Some(pi) = self.polish_degenerate(&prob, &cur, tol) {
                    return Ok(pi);
                }
            }
        }
        if let Some(pi) = self.polish_degenerate(&prob, &cur, tol) {
            return Ok(pi);
        }
        Err(Error::QpNotConverged { iterations: max_iter, residual })
    }

    /// Subset search for rank-deficient problems (more centers than
    /// dimensions plus one): the iterate's support plus the steepest
    /// coordinate first, then all centers.
    fn polish_degenerate(&self, prob: &PointProblem<'_>, pi: &[f64], tol: f64) -> Option<Vec<f64>> {
        let k = self.m.k();
        let max_support = self.m.dim().min(k - 1) + 1;
        let mut pool: Vec<usize> = (0..k).filter(|&i| pi[i] > 0.0).collect();
        let best = argmin(&prob.grad(pi));
        if !pool.contains(&best) {
            pool.push(best);
            pool.sort_unstable();
        }
        if pool.len() > max_support {
            if let Some(found) = prob.polish_subsets(&pool, max_support, tol) {
                return Some(found);
            }
        }
        if pool.len() < k {
            let all: Vec<usize> = (0..k).collect();
            return prob.polish_subsets(&all, max_support, tol);
        }
        None
    }

    /// K = 2: minimize the scalar quadratic in `t = π_1` and clamp to [0, 1].
    fn solve_pair(&self, x: &[f64]) -> Vec<f64> {
        let (m1, m2) = (self.m.center(0), self.m.center(1));
        let c1 = sq_dist(x, m1);
        let c2 = sq_dist(x, m2);
        let dd = sq_dist(m1, m2);
        let t = if dd > 0.0 {
            let cross: f64 = m1.iter().zip(m2).zip(x).map(|((a, b), v)| (a - b) * (b - v)).sum();
            (((c2 - c1) * (self.gamma - 1.0) / 2.0 - cross) / dd).clamp(0.0, 1.0)
        } else {
            1.0
        };
        vec![t, 1.0 - t]
    }

    /// Minimize `f(π) − λ H(π)` over the simplex.
    ///
    /// Composite mirror descent in log-weights (the entropy prox is exact)
    /// with an adaptive step, plus damped Newton refinement on the
    /// non-negligible coordinates. The stopping residual is the ℓ1 gradient
    /// mapping `||π − T(π)||₁ / η` at the reference step `η = 1/L`, relative
    /// to `1 + ||∇f||∞`.
    pub fn solve_entropy(
        &self,
        x: &[f64],
        lambda: f64,
        tol: f64,
        max_iter: usize,
        warm: Option<&[f64]>,
    ) -> Result<InnerSolution> {
        self.check_point(x)?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("entropy weight must be positive, got {lambda}")));
        }
        let k = self.m.k();
        if k == 1 {
            return Ok(self.finish(x, vec![1.0]));
        }
        let prob = self.problem(x);
        let objective = |logw: &[f64]| {
            let pi = softmax(logw);
            prob.value(&pi) + lambda * neg_entropy(&pi, logw)
        };

        let mut candidates: Vec<Vec<f64>> = vec![vec![0.0; k]];
        if let Some(w) = warm.filter(|w| w.len() == k) {
            candidates.push(floored_log(w));
        }
        if let Ok(pi) = self.solve_pi(x, 1e-12, 10_000, None) {
            candidates.push(floored_log(&pi));
        }
        let mut logw = candidates
            .into_iter()
            .map(|c| normalize_log(&c))
            .min_by(|a, b| objective(a).total_cmp(&objective(b)))
            .expect("uniform candidate is always present");

        let max_diag = (0..k).map(|i| self.gram[i * k + i]).fold(0.0, f64::max);
        let l_ref = (2.0 * self.inv * max_diag).max(1e-12 * (1.0 + lambda));
        let eta_ref = 1.0 / l_ref;
        let mut eta = eta_ref;
        let mut residual = f64::INFINITY;
        for it in 0..max_iter {
            let pi = softmax(&logw);
            let g = prob.grad(&pi);
            let gscale = 1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mapped = softmax(&md_step(&logw, &g, eta_ref, lambda));
            residual = pi.iter().zip(&mapped).map(|(a, b)| (a - b).abs()).sum::<f64>() * l_ref / gscale;
            if residual <= tol {
                return Ok(self.finish(x, pi));
            }
            if it % 10 == 5 || residual < 1e-3 {
                if let Some(refined) = newton_entropy(&prob, &logw, lambda) {
                    if objective(&refined) < objective(&logw) {
                        logw = refined;
                        continue;
                    }
                }
            }

            let f0 = prob.value(&pi);
            eta = (2.0 * eta).min(1e6 * eta_ref);
            loop {
                let cand = md_step(&logw, &g, eta, lambda);
                let pc = softmax(&cand);
                let lin: f64 = g.iter().zip(pc.iter().zip(&pi)).map(|(gi, (a, b))| gi * (a - b)).sum();
                let kl: f64 = pc.iter().zip(cand.iter().zip(&logw)).map(|(p, (a, b))| p * (a - b)).sum();
                let slack = 1e-15 * (1.0 + f0.abs());
                if eta <= eta_ref || prob.value(&pc) <= f0 + lin + kl / eta + slack {
                    logw = cand;
                    break;
                }
                eta = (0.5 * eta).max(eta_ref);
            }
        }
        Err(Error::QpNotConverged { iterations: max_iter, residual })
    }
}

/// `(ℓ − η g) / (1 + ηλ)`, renormalized so that `logsumexp = 0`.
fn md_step(logw: &[f64], g: &[f64], eta: f64, lambda: f64) -> Vec<f64> {
    let raw: Vec<f64> = logw.iter().zip(g).map(|(l, gi)| (l - eta * gi) / (1.0 + eta * lambda)).collect();
    normalize_log(&raw)
}

fn normalize_log(v: &[f64]) -> Vec<f64> {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

fn softmax(logw: &[f64]) -> Vec<f64> {
    let p: Vec<f64> = logw.iter().map(|l| l.exp()).collect();
    let s: f64 = p.iter().sum();
    p.into_iter().map(|x| x / s).collect()
}

fn floored_log(pi: &[f64]) -> Vec<f64> {
    pi.iter().map(|p| p.max(1e-300).ln()).collect()
}

/// `Σ π log π` evaluated with the log-weights to avoid `0 · ln 0`.
fn neg_entropy(pi: &[f64], logw: &[f64]) -> f64 {
    pi.iter().zip(logw).filter(|(p, _)| **p > 0.0).map(|(p, l)| p * l).sum()
}

/// Damped Newton on coordinates with `π_k > 1e-12`, the rest held fixed.
fn newton_entropy(prob: &PointProblem<'_>, logw: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let k = prob.k;
    let mut pi = softmax(logw);
    let active: Vec<usize> = (0..k).filter(|&i| pi[i] > 1e-12).collect();
    let s = active.len();
    if s < 2 {
        return None;
    }
    let mut logs: Vec<f64> = logw.to_vec();
    let full = |pi: &[f64], logs: &[f64]| prob.value(pi) + lambda * neg_entropy(pi, logs);
    let mut current = full(&pi, &logs);
    for _ in 0..30 {
        let g = prob.grad(&pi);
        let n = s + 1;
        let mut a = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                a[r * n + c] = 2.0 * prob.inv * prob.gram[i * k + j];
            }
            a[r * n + r] += lambda / pi[i];
            a[r * n + s] = 1.0;
            a[s * n + r] = 1.0;
            rhs[r] = -(g[i] + lambda * (1.0 + logs[i]));
        }
        let sol = solve_dense(a, rhs, n, 1e-15)?;
        let dir = &sol[..s];
        let dec: f64 = active
            .iter()
            .zip(dir)
            .map(|(&i, d)| (g[i] + lambda * (1.0 + logs[i])) * d)
            .sum();
        if dec >= 0.0 || dir.iter().all(|d| d.abs() <= 1e-17) {
            break;
        }
        let mut alpha = 1.0;
        for (&i, d) in active.iter().zip(dir) {
            if *d < 0.0 {
                alpha = f64::min(alpha, 0.99 * pi[i] / -d);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = pi.clone();
            let mut tlogs = logs.clone();
            for (&i, d) in active.iter().zip(dir) {
                trial[i] = pi[i] + alpha * d;
                tlogs[i] = trial[i].ln();
            }
            let v = full(&trial, &tlogs);
            if v <= current + 1e-4 * alpha * dec {
                pi = trial;
                logs = tlogs;
                current = v;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        if alpha * dir.iter().fold(0.0f64, |m, d| m.max(d.abs())) < 1e-16 {
            break;
        }
    }
    Some(normalize_log(&logs))
}

/// Solve the inner problem for a single point.
pub fn solve_assignment(
    x: &[f64],
    m: &Centroids,
    gamma: f64,
    qp_tol: f64,
    qp_max_iter: usize,
) -> Result<InnerSolution> {
    AssignmentSolver::new(m, gamma)?.solve(x, qp_tol, qp_max_iter, None)
}

/// Entropy-regularized inner problem for a single point.
pub fn solve_assignment_entropy(
    x: &[f64],
    m: &Centroids,
    gamma: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<InnerSolution> {
    AssignmentSolver::new(m, gamma)?.solve_entropy(x, lambda, tol, max_iter, None)
}

/// Inner solutions for every point of `data`, computed in parallel and
/// returned in point order.
pub fn solve_all(
    data: &DataSet,
    m: &Centroids,
    gamma: f64,
    qp_tol: f64,
    qp_max_iter: usize,
    warm: Option<&SoftAssignment>,
) -> Result<Vec<InnerSolution>> {
    m.check_dim(data)?;
    let solver = AssignmentSolver::new(m, gamma)?;
    (0..data.n_points())
        .into_par_iter()
        .map(|n| solver.solve(data.point(n), qp_tol, qp_max_iter, warm.map(|w| w.column(n))))
        .collect()
}

pub(crate) fn solve_all_entropy(
    data: &DataSet,
    m: &Centroids,
    gamma: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<&SoftAssignment>,
) -> Result<Vec<InnerSolution>> {
    m.check_dim(data)?;
    let solver = AssignmentSolver::new(m, gamma)?;
    (0..data.n_points())
        .into_par_iter()
        .map(|n| solver.solve_entropy(data.point(n), lambda, tol, max_iter, warm.map(|w| w.column(n))))
        .collect()
}

/// `x_n* = x_n + (x_n − Mπ_n) / (γ − 1)` for every point.
pub fn worst_case_points(data: &DataSet, m: &Centroids, pi: &SoftAssignment, gamma: f64) -> Result<DataSet> {
    check_gamma(gamma)?;
    m.check_dim(data)?;
    if pi.n_points() != data.n_points() || pi.k() != m.k() {
        return Err(Error::InvalidInput("assignment shape does not match data and centroids".into()));
    }
    let inv = 1.0 / (gamma - 1.0);
    let mut values = Vec::with_capacity(data.n_points() * data.dim());
    for (x, col) in data.points().zip(pi.columns()) {
        let mix = m.mix(col);
        values.extend(x.iter().zip(&mix).map(|(v, p)| v + (v - p) * inv));
    }
    DataSet::from_flat(data.n_points(), data.dim(), values)
}

/// Closed-form saddle point for scalar data and strictly increasing centers.
///
/// `x` falls either in a cell region around `μ_k`, where the assignment is
/// hard and `x*` is pushed away from `μ_k`, or in a region around the
/// midpoint of two adjacent centers, where `x*` sits at the midpoint and the
/// weight splits linearly. Region boundaries belong to the midpoint region.
pub fn scalar_closed_form(x: f64, mu_sorted: &[f64], gamma: f64) -> Result<InnerSolution> {
    check_gamma(gamma)?;
    if mu_sorted.is_empty() {
        return Err(Error::InvalidInput("need at least one centroid".into()));
    }
    if mu_sorted.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("centroids must be strictly increasing".into()));
    }
    if !x.is_finite() || mu_sorted.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("scalar closed form"));
    }
    let k = mu_sorted.len();
    let mut pi = vec![0.0; k];
    let mut x_star = None;
    for j in 0..k.saturating_sub(1) {
        let half = (mu_sorted[j + 1] - mu_sorted[j]) / 2.0;
        let mid = (mu_sorted[j] + mu_sorted[j + 1]) / 2.0;
        if (x - mid).abs() <= half / gamma {
            let q = (x - mid) / half;
            let p = 0.5 * (1.0 - gamma * q);
            pi[j] = p;
            pi[j + 1] = 1.0 - p;
            x_star = Some(mid);
            break;
        }
    }
    let x_star = match x_star {
        Some(v) => v,
        None => {
            // Outside every midpoint region the cells tile the rest of the line.
            let j = (0..k)
                .find(|&j| {
                    let lo = if j == 0 { f64::NEG_INFINITY } else { mu_sorted[j] + (1.0 - 1.0 / gamma) * (mu_sorted[j - 1] - mu_sorted[j]) / 2.0 };
                    let hi = if j + 1 == k { f64::INFINITY } else { mu_sorted[j] + (1.0 - 1.0 / gamma) * (mu_sorted[j + 1] - mu_sorted[j]) / 2.0 };
                    lo < x && x < hi
                })
                .ok_or_else(|| Error::InvalidInput(format!("could not classify x={x}")))?;
            pi[j] = 1.0;
            x + (x - mu_sorted[j]) / (gamma - 1.0)
        }
    };
    let mix: f64 = pi.iter().zip(mu_sorted).map(|(p, m)| p * m).sum();
    let e_value = pi.iter().zip(mu_sorted).map(|(p, m)| p * (x - m) * (x - m)).sum::<f64>()
        + (x - mix) * (x - mix) / (gamma - 1.0);
    Ok(InnerSolution { pi, x_star: vec![x_star], e_value })
}

/// Default half-width of the brute-force search box around `x*`.
pub fn default_box_halfwidth(x: &[f64], m: &Centroids, pi: &[f64], gamma: f64) -> f64 {
    2.0 * (1.0 + sq_dist(x, &m.mix(pi)).sqrt() / (gamma - 1.0))
}

/// Grid search of `sup_{x'} min_k ||x' − μ_k||² − γ ||x' − x||²` over a box
/// centered at the saddle point `x*`. Test-scale only (d ≤ 2). An even
/// `grid_points_per_dim` is bumped by one so the center lies on the grid.
pub fn e_value_bruteforce(
    x: &[f64],
    m: &Centroids,
    gamma: f64,
    box_halfwidth: f64,
    grid_points_per_dim: usize,
) -> Result<f64> {
    let d = x.len();
    if d == 0 || d > 2 {
        return Err(Error::InvalidInput(format!("brute-force oracle supports d <= 2, got d={d}")));
    }
    let center = solve_assignment(x, m, gamma, 1e-12, 100_000)?.x_star;
    let g = if grid_points_per_dim % 2 == 0 { grid_points_per_dim + 1 } else { grid_points_per_dim.max(3) };
    let coord = |i: usize, c: f64| c + box_halfwidth * (2.0 * i as f64 / (g - 1) as f64 - 1.0);
    let eval = |p: &[f64]| {
        let nearest = m.centers().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min);
        nearest - gamma * sq_dist(p, x)
    };
    let mut best = f64::NEG_INFINITY;
    let mut p = vec![0.0; d];
    if d == 1 {
        for i in 0..g {
            p[0] = coord(i, center[0]);
            best = best.max(eval(&p));
        }
    } else {
        for i in 0..g {
            p[0] = coord(i, center[0]);
            for j in 0..g {
                p[1] = coord(j, center[1]);
                best = best.max(eval(&p));
            }
        }
    }
    Ok(best)
}
