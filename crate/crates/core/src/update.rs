//! Closed-form outer blocks: the centroid update and the γ update.
//!
//! For fixed Π the surrogate is a convex quadratic in M. Setting its gradient
//! `(2/N) Σ_n π_kn [(μ_k − x_n) + (Mπ_n − x_n)/(γ − 1)]` to zero gives the
//! K×K symmetric system
//!
//! ```text
//! M [(γ − 1) diag(s) + G] = γ B,   s_k = Σ_n π_kn,  G = Σ_n π_n π_nᵀ,  B = Σ_n x_n π_nᵀ
//! ```
//!
//! which is positive definite as soon as every cluster mass is positive.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::model::{check_gamma, sq_dist, stable_sum, Centroids, DataSet, SoftAssignment};

/// Default γ ceiling: anything above is treated as the classical limit.
pub const GAMMA_CAP: f64 = 1e8;

/// Sufficient statistics of Π (and the data) entering the M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepSystem {
    pub k: usize,
    pub dim: usize,
    /// Cluster masses.
    pub s: Vec<f64>,
    /// K×K row-major `Σ_n π_n π_nᵀ`.
    pub g: Vec<f64>,
    /// K×d row-major; row k is `Σ_n π_kn x_n`.
    pub b: Vec<f64>,
}

impl MStepSystem {
    /// Every entry is a [`stable_sum`] over points, so the statistics do not
    /// depend on point order or threading.
    pub fn assemble(data: &DataSet, pi: &SoftAssignment) -> Result<Self> {
        if pi.n_points() != data.n_points() {
            return Err(Error::InvalidInput("assignment and data disagree on N".into()));
        }
        let (k, dim) = (pi.k(), data.dim());
        let s = pi.masses();
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = stable_sum(pi.columns().map(|c| c[i] * c[j]));
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        let mut b = vec![0.0; k * dim];
        for i in 0..k {
            for c in 0..dim {
                b[i * dim + c] = stable_sum(data.points().zip(pi.columns()).map(|(x, col)| col[i] * x[c]));
            }
        }
        Ok(Self { k, dim, s, g, b })
    }

    /// `(γ − 1) diag(s) + G` restricted to `rows`.
    fn matrix(&self, gamma: f64, rows: &[usize]) -> Vec<f64> {
        let n = rows.len();
        let mut a = vec![0.0; n * n];
        for (r, &i) in rows.iter().enumerate() {
            for (c, &j) in rows.iter().enumerate() {
                a[r * n + c] = self.g[i * self.k + j];
            }
            a[r * n + r] += (gamma - 1.0) * self.s[i];
        }
        a
    }

    /// Solve for the centers indexed by `rows`; the others are ignored, which
    /// is exact when their masses vanish.
    pub(crate) fn solve_rows(&self, gamma: f64, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        let n = rows.len();
        let mut a = self.matrix(gamma, rows);
        let l = match cholesky(&a, n) {
            Some(l) => l,
            None => {
                let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
                for i in 0..n {
                    a[i * n + i] += 1e-12 * trace / n as f64;
                }
                cholesky(&a, n).ok_or(Error::IllConditioned)?
            }
        };
        let mut out = vec![vec![0.0; self.dim]; n];
        let mut rhs = vec![0.0; n];
        for dcol in 0..self.dim {
            for (r, &i) in rows.iter().enumerate() {
                rhs[r] = gamma * self.b[i * self.dim + dcol];
            }
            cholesky_solve(&l, n, &mut rhs);
            for r in 0..n {
                out[r][dcol] = rhs[r];
            }
        }
        Ok(out)
    }
}

pub fn default_mass_floor(n_points: usize) -> f64 {
    1e-10 * n_points as f64
}

/// Unique minimizer of `J_γ(·, Π)`. Fails with [`Error::EmptyCluster`] when a
/// cluster mass is at or below `1e-10·N`.
pub fn centroid_update(data: &DataSet, pi: &SoftAssignment, gamma: f64) -> Result<Centroids> {
    centroid_update_with_floor(data, pi, gamma, default_mass_floor(data.n_points()))
}

pub fn centroid_update_with_floor(
    data: &DataSet,
    pi: &SoftAssignment,
    gamma: f64,
    mass_floor: f64,
) -> Result<Centroids> {
    check_gamma(gamma)?;
    let sys = MStepSystem::assemble(data, pi)?;
    if let Some((k, &mass)) = sys.s.iter().enumerate().find(|(_, m)| **m <= mass_floor) {
        return Err(Error::EmptyCluster { cluster: k, mass });
    }
    let rows: Vec<usize> = (0..sys.k).collect();
    Centroids::new(&sys.solve_rows(gamma, &rows)?)
}

/// Interior stationary point of `γ ↦ γ r² + (1/N) Σ_n ||x_n − Mπ_n||² / (γ − 1)`:
/// `1 + sqrt(mean residual²) / r`. All-zero residuals give
/// [`Error::GammaBoundary`].
pub fn gamma_update(data: &DataSet, m: &Centroids, pi: &SoftAssignment, radius: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    m.check_dim(data)?;
    let mean_sq =
        stable_sum(data.points().zip(pi.columns()).map(|(x, col)| sq_dist(x, &m.mix(col)))) / data.n_points() as f64;
    if mean_sq == 0.0 {
        return Err(Error::GammaBoundary);
    }
    Ok(1.0 + mean_sq.sqrt() / radius)
}
