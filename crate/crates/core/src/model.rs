//! Domain types shared across the crate and the non-robust risk primitives.
//!
//! Points, centers and assignment columns are stored densely in row-major
//! flat buffers: point `n` occupies `values[n * dim..(n + 1) * dim]`, and the
//! assignment column `π_n` occupies `weights[n * k..(n + 1) * k]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Tolerance on column sums of a [`SoftAssignment`].
pub const SIMPLEX_TOL: f64 = 1e-9;

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum that depends only on the multiset of terms: terms are sorted before
/// accumulation, so reordering the data points cannot change a single bit.
pub fn stable_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = terms.into_iter().collect();
    v.sort_unstable_by(f64::total_cmp);
    v.into_iter().sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// N points in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    n_points: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DataSet {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        ensure(!points.is_empty(), || "dataset has no points".into())?;
        let dim = points[0].len();
        let mut values = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            values.extend_from_slice(p);
        }
        Self::from_flat(points.len(), dim, values)
    }

    pub fn from_flat(n_points: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        ensure(n_points >= 1, || "dataset has no points".into())?;
        ensure(dim >= 1, || "points must have dimension >= 1".into())?;
        ensure(values.len() == n_points * dim, || {
            format!("expected {} values, got {}", n_points * dim, values.len())
        })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { n_points, dim, values })
    }

    /// Dataset of scalars (d = 1).
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::from_flat(xs.len(), 1, xs.to_vec())
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// Points selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            ensure(i < self.n_points, || format!("point index {i} out of range"))?;
            values.extend_from_slice(self.point(i));
        }
        Self::from_flat(indices.len(), self.dim, values)
    }

    /// Concatenation of `self` followed by `other`.
    pub fn concat(&self, other: &DataSet) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::from_flat(self.n_points + other.n_points, self.dim, values)
    }
}

/// K cluster centers in R^d (the columns of M).
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    k: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Centroids {
    pub fn new(centers: &[Vec<f64>]) -> Result<Self> {
        ensure(!centers.is_empty(), || "need at least one centroid".into())?;
        let dim = centers[0].len();
        let mut values = Vec::with_capacity(centers.len() * dim);
        for c in centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            values.extend_from_slice(c);
        }
        Self::from_flat(centers.len(), dim, values)
    }

    pub fn from_flat(k: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        ensure(k >= 1, || "need at least one centroid".into())?;
        ensure(dim >= 1, || "centroids must have dimension >= 1".into())?;
        ensure(values.len() == k * dim, || {
            format!("expected {} values, got {}", k * dim, values.len())
        })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("centroids"));
        }
        Ok(Self { k, dim, values })
    }

    pub fn from_scalars(mus: &[f64]) -> Result<Self> {
        Self::from_flat(mus.len(), 1, mus.to_vec())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub(crate) fn center_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn centers(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.centers().map(<[f64]>::to_vec).collect()
    }

    /// `M π` for a probability vector `pi` of length K.
    pub fn mix(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (w, c) in pi.iter().zip(self.centers()) {
            if *w != 0.0 {
                for (o, v) in out.iter_mut().zip(c) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// Largest center norm, `max_l ||μ_l||`.
    pub fn max_norm(&self) -> f64 {
        self.centers().map(norm).fold(0.0, f64::max)
    }

    /// Relative movement `max_k ||μ_k − ν_k|| / max_l ||μ_l||` used as the
    /// outer stopping rule. `self` is the previous iterate.
    pub fn relative_shift(&self, next: &Centroids) -> f64 {
        let shift = self
            .centers()
            .zip(next.centers())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let scale = self.max_norm();
        if scale > 0.0 {
            shift / scale
        } else {
            shift
        }
    }

    pub(crate) fn check_dim(&self, data: &DataSet) -> Result<()> {
        if self.dim != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), got: self.dim });
        }
        Ok(())
    }
}

/// Column-stochastic K×N matrix Π of per-point cluster probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    k: usize,
    n_points: usize,
    weights: Vec<f64>,
}

impl SoftAssignment {
    /// Build from columns `π_n`, validating nonnegativity and unit sums.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        ensure(!columns.is_empty(), || "assignment has no columns".into())?;
        let k = columns[0].len();
        let mut weights = Vec::with_capacity(columns.len() * k);
        for c in columns {
            if c.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: c.len() });
            }
            weights.extend_from_slice(c);
        }
        Self::from_flat(k, columns.len(), weights)
    }

    pub fn from_flat(k: usize, n_points: usize, weights: Vec<f64>) -> Result<Self> {
        ensure(k >= 1 && n_points >= 1, || "assignment must be non-empty".into())?;
        ensure(weights.len() == k * n_points, || "assignment shape mismatch".into())?;
        for (n, col) in weights.chunks_exact(k).enumerate() {
            if col.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidInput(format!("column {n} has a negative or non-finite entry")));
            }
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidInput(format!("column {n} sums to {s}")));
            }
        }
        Ok(Self { k, n_points, weights })
    }

    /// One-hot columns from hard labels.
    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut weights = vec![0.0; labels.len() * k];
        for (n, &l) in labels.iter().enumerate() {
            ensure(l < k, || format!("label {l} out of range for k={k}"))?;
            weights[n * k + l] = 1.0;
        }
        Self::from_flat(k, labels.len(), weights)
    }

    pub fn uniform(k: usize, n_points: usize) -> Result<Self> {
        Self::from_flat(k, n_points, vec![1.0 / k as f64; k * n_points])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn column(&self, n: usize) -> &[f64] {
        &self.weights[n * self.k..(n + 1) * self.k]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.weights.chunks_exact(self.k)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.weights
    }

    /// Cluster masses `s_k = Σ_n π_kn`, summed in point order.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.k).map(|i| stable_sum(self.columns().map(|c| c[i]))).collect()
    }

    /// Argmax of each column, ties to the lowest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.columns().map(argmax_lowest).collect()
    }

    fn check_shape(&self, data: &DataSet, m: &Centroids) -> Result<()> {
        if self.n_points != data.n_points() {
            return Err(Error::InvalidInput(format!(
                "assignment has {} columns but dataset has {} points",
                self.n_points,
                data.n_points()
            )));
        }
        if self.k != m.k() {
            return Err(Error::InvalidInput(format!(
                "assignment has {} rows but there are {} centroids",
                self.k,
                m.k()
            )));
        }
        Ok(())
    }
}

pub(crate) fn argmax_lowest(col: &[f64]) -> usize {
    let mut best = 0;
    for (k, w) in col.iter().enumerate().skip(1) {
        if *w > col[best] {
            best = k;
        }
    }
    best
}

/// Solver settings for the robust fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Fixed dual variable γ > 1.
    pub gamma: Option<f64>,
    /// Ambiguity radius r > 0.
    pub radius: Option<f64>,
    /// Relative centroid-movement tolerance of the outer loop.
    pub tol: f64,
    pub max_iter: usize,
    /// Entropy weight λ; 0 disables regularization.
    pub entropy_lambda: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub seed: u64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            radius: None,
            tol: 1e-6,
            max_iter: 300,
            entropy_lambda: 0.0,
            qp_tol: 1e-9,
            qp_max_iter: 10_000,
            seed: 0,
        }
    }
}

impl RobustConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self { gamma: Some(gamma), ..Self::default() }
    }

    pub fn with_radius(radius: f64) -> Self {
        Self { radius: Some(radius), ..Self::default() }
    }

    pub(crate) fn check_common(&self) -> Result<()> {
        ensure(self.tol > 0.0 && self.tol.is_finite(), || format!("tol must be positive, got {}", self.tol))?;
        ensure(self.qp_tol > 0.0, || "qp_tol must be positive".into())?;
        ensure(self.entropy_lambda >= 0.0 && self.entropy_lambda.is_finite(), || {
            "entropy_lambda must be >= 0".into()
        })?;
        ensure(self.max_iter >= 1, || "max_iter must be >= 1".into())?;
        if let Some(g) = self.gamma {
            check_gamma(g)?;
        }
        if let Some(r) = self.radius {
            ensure(r > 0.0 && r.is_finite(), || format!("radius must be positive, got {r}"))?;
        }
        Ok(())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 1.0 + 1e-12 {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

/// Output of every fitting routine.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub centroids: Centroids,
    pub assignment: SoftAssignment,
    /// Final γ; `+∞` for the classical baseline.
    pub gamma_final: f64,
    /// One entry per outer iteration plus the value at initialization.
    pub objective_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    pub worst_case_points: DataSet,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn hard_labels(&self) -> Vec<usize> {
        self.assignment.hard_labels()
    }
}

fn nearest(x: &[f64], m: &Centroids) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in m.centers().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Nearest center and its squared distance for every point.
pub(crate) fn nearest_with_cost(data: &DataSet, m: &Centroids) -> Vec<(usize, f64)> {
    (0..data.n_points()).into_par_iter().map(|n| nearest(data.point(n), m)).collect()
}

/// Index of the nearest centroid for each point; ties go to the lowest index.
pub fn nearest_partition(data: &DataSet, m: &Centroids) -> Result<Vec<usize>> {
    m.check_dim(data)?;
    Ok(nearest_with_cost(data, m).into_iter().map(|(k, _)| k).collect())
}

/// `(1/N) Σ_n min_k ||x_n − μ_k||²`.
pub fn empirical_risk(data: &DataSet, m: &Centroids) -> Result<f64> {
    m.check_dim(data)?;
    let total = stable_sum(nearest_with_cost(data, m).into_iter().map(|(_, d)| d));
    Ok(total / data.n_points() as f64)
}

/// Per-point surrogate term `Σ_k π_k ||x − μ_k||² + ||x − Mπ||² / (γ − 1)`.
pub(crate) fn point_surrogate(x: &[f64], m: &Centroids, pi: &[f64], gamma: f64) -> f64 {
    let spread: f64 = pi
        .iter()
        .zip(m.centers())
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, c)| w * sq_dist(x, c))
        .sum();
    spread + sq_dist(x, &m.mix(pi)) / (gamma - 1.0)
}

/// The surrogate `J_γ(M, Π)` plus the constant `γ r²`.
pub fn surrogate_objective(
    data: &DataSet,
    m: &Centroids,
    pi: &SoftAssignment,
    gamma: f64,
    radius: f64,
) -> Result<f64> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidGamma(gamma));
    }
    m.check_dim(data)?;
    pi.check_shape(data, m)?;
    let terms: Vec<f64> = (0..data.n_points())
        .into_par_iter()
        .map(|n| point_surrogate(data.point(n), m, pi.column(n), gamma))
        .collect();
    Ok(gamma * radius * radius + stable_sum(terms) / data.n_points() as f64)
}
