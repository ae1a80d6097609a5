//! Outer block-coordinate loops: fixed γ, joint (Π, γ) for a given radius,
//! and the entropy-regularized variant.
//!
//! Every loop records the objective at the initial centroids first, so traces
//! have `iterations + 1` entries. One outer iteration is an M-step followed by
//! a fresh inner step at the new centroids.

use crate::assignment::{solve_all, solve_all_entropy, worst_case_points, InnerSolution};
use crate::error::{Error, Result};
use crate::model::{
    check_gamma, empirical_risk, nearest_with_cost, point_surrogate, stable_sum, Centroids, DataSet, FitResult,
    RobustConfig, SoftAssignment,
};
use crate::rng::Rng;
use crate::seeding::{reseed_empty, seed_kmeanspp};
use crate::update::{default_mass_floor, gamma_update, MStepSystem, GAMMA_CAP};

/// Lowest γ the joint scheme will use; the dual infimum can sit at γ ↓ 1.
pub const GAMMA_FLOOR: f64 = 1.0 + 1e-9;

/// Relative objective decrease that ends the inner (Π, γ) alternation.
pub const JOINT_INNER_TOL: f64 = 1e-10;
pub const JOINT_INNER_CAP: usize = 100;

/// Which outer loop to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverMode {
    FixedGamma { gamma: f64 },
    JointGamma { radius: f64 },
    Entropy { gamma: f64, lambda: f64 },
}

impl SolverMode {
    /// Mode implied by a config: exactly one of `gamma`/`radius` must be set,
    /// and a positive entropy weight requires `gamma`.
    pub fn from_config(cfg: &RobustConfig) -> Result<Self> {
        cfg.check_common()?;
        match (cfg.gamma, cfg.radius) {
            (Some(_), Some(_)) => Err(Error::InvalidInput("set either gamma or radius, not both".into())),
            (None, None) => Err(Error::InvalidInput("one of gamma or radius is required".into())),
            (Some(gamma), None) if cfg.entropy_lambda > 0.0 => Ok(Self::Entropy { gamma, lambda: cfg.entropy_lambda }),
            (Some(gamma), None) => Ok(Self::FixedGamma { gamma }),
            (None, Some(_)) if cfg.entropy_lambda > 0.0 => {
                Err(Error::InvalidInput("entropy regularization needs a fixed gamma".into()))
            }
            (None, Some(radius)) => Ok(Self::JointGamma { radius }),
        }
    }
}

/// Fit from k-means++ seeds drawn with `cfg.seed`.
pub fn fit(data: &DataSet, k: usize, cfg: &RobustConfig) -> Result<FitResult> {
    let init = seed_kmeanspp(data, k, &mut Rng::seed_from(cfg.seed))?;
    fit_from(data, &init, cfg)
}

/// Dispatch on [`SolverMode::from_config`].
pub fn fit_from(data: &DataSet, init: &Centroids, cfg: &RobustConfig) -> Result<FitResult> {
    match SolverMode::from_config(cfg)? {
        SolverMode::FixedGamma { .. } => fit_fixed_gamma(data, init, cfg),
        SolverMode::JointGamma { .. } => fit_joint(data, init, cfg),
        SolverMode::Entropy { .. } => fit_entropy(data, init, cfg),
    }
}

fn mean(values: &[f64]) -> f64 {
    stable_sum(values.iter().copied()) / values.len() as f64
}

fn sum_p_log_p(pi: &[f64]) -> f64 {
    pi.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum()
}

/// Per-point inner values and the assignment they came from.
struct Inner {
    pi: SoftAssignment,
    /// Per-point objective: `e_n`, or `e_n − λ H(π_n)` when regularized.
    values: Vec<f64>,
}

fn collect(
    data: &DataSet,
    m: &Centroids,
    gamma: f64,
    lambda: f64,
    sols: Vec<InnerSolution>,
    warm: Option<&SoftAssignment>,
) -> Result<Inner> {
    let k = m.k();
    let mut weights = Vec::with_capacity(k * data.n_points());
    let mut values = Vec::with_capacity(data.n_points());
    for (n, sol) in sols.into_iter().enumerate() {
        let mut col = sol.pi;
        let mut v = sol.e_value + lambda * sum_p_log_p(&col);
        // Never accept a column that is worse than the previous one; this keeps
        // the traces monotone even when a solve stops at its tolerance.
        if let Some(w) = warm {
            let old = w.column(n);
            let old_v = point_surrogate(data.point(n), m, old, gamma) + lambda * sum_p_log_p(old);
            if old_v < v {
                col = old.to_vec();
                v = old_v;
            }
        }
        weights.extend_from_slice(&col);
        values.push(v);
    }
    Ok(Inner { pi: SoftAssignment::from_flat(k, data.n_points(), weights)?, values })
}

fn inner_qp(
    data: &DataSet,
    m: &Centroids,
    gamma: f64,
    cfg: &RobustConfig,
    warm: Option<&SoftAssignment>,
) -> Result<Inner> {
    let sols = solve_all(data, m, gamma, cfg.qp_tol, cfg.qp_max_iter, warm)?;
    collect(data, m, gamma, 0.0, sols, warm)
}

fn inner_entropy(
    data: &DataSet,
    m: &Centroids,
    gamma: f64,
    lambda: f64,
    cfg: &RobustConfig,
    warm: Option<&SoftAssignment>,
) -> Result<Inner> {
    let sols = solve_all_entropy(data, m, gamma, lambda, cfg.qp_tol, cfg.qp_max_iter, warm)?;
    collect(data, m, gamma, lambda, sols, warm)
}

/// Closed-form centroid update with the empty-cluster policy applied: the
/// system is solved over clusters with mass above the floor and each empty
/// center moves to a distinct point of largest nearest-center cost under `m`.
fn m_step(data: &DataSet, pi: &SoftAssignment, gamma: f64, m: &Centroids) -> Result<Centroids> {
    let sys = MStepSystem::assemble(data, pi)?;
    let floor = default_mass_floor(data.n_points());
    let (rows, empty): (Vec<usize>, Vec<usize>) = (0..sys.k).partition(|&k| sys.s[k] > floor);
    let solved = sys.solve_rows(gamma, &rows)?;
    let mut next = m.clone();
    for (&k, center) in rows.iter().zip(&solved) {
        next.center_mut(k).copy_from_slice(center);
    }
    if !empty.is_empty() {
        let cost: Vec<f64> = nearest_with_cost(data, m).into_iter().map(|(_, c)| c).collect();
        reseed_empty(data, &mut next, &empty, &cost);
    }
    if next.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("centroid update"));
    }
    Ok(next)
}

fn check_fit_input(data: &DataSet, init: &Centroids, cfg: &RobustConfig) -> Result<()> {
    cfg.check_common()?;
    init.check_dim(data)
}

/// Fixed-γ block coordinate descent on `J_γ`.
///
/// The trace holds `F_γ(M_t)`, plus `γ r²` when `cfg.radius` is also set.
pub fn fit_fixed_gamma(data: &DataSet, init: &Centroids, cfg: &RobustConfig) -> Result<FitResult> {
    check_fit_input(data, init, cfg)?;
    let gamma = cfg.gamma.ok_or_else(|| Error::InvalidInput("fixed-gamma fit needs gamma".into()))?;
    check_gamma(gamma)?;
    let offset = cfg.radius.map_or(0.0, |r| gamma * r * r);

    let mut m = init.clone();
    let mut inner = inner_qp(data, &m, gamma, cfg, None)?;
    let mut trace = vec![offset + mean(&inner.values)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let next = m_step(data, &inner.pi, gamma, &m)?;
        let shift = m.relative_shift(&next);
        inner = inner_qp(data, &next, gamma, cfg, Some(&inner.pi))?;
        m = next;
        trace.push(offset + mean(&inner.values));
        iterations += 1;
        if shift <= cfg.tol {
            converged = true;
            break;
        }
    }
    let worst_case_points = worst_case_points(data, &m, &inner.pi, gamma)?;
    Ok(FitResult {
        centroids: m,
        assignment: inner.pi,
        gamma_final: gamma,
        objective_trace: trace,
        gamma_trace: vec![gamma; iterations + 1],
        worst_case_points,
        iterations,
        converged,
    })
}

struct JointState {
    inner: Inner,
    gamma: f64,
    value: f64,
}

fn clamp_gamma(g: f64) -> f64 {
    g.clamp(GAMMA_FLOOR, GAMMA_CAP)
}

/// Minimize `γ r² + (1/N) Σ_n f_n(π_n; γ)` over (Π, γ) for fixed centroids by
/// alternating the exact Π and γ blocks.
fn joint_inner(
    data: &DataSet,
    m: &Centroids,
    radius: f64,
    gamma_start: f64,
    cfg: &RobustConfig,
    warm: Option<&SoftAssignment>,
) -> Result<JointState> {
    let r2 = radius * radius;
    let mut gamma = gamma_start;
    let mut inner = inner_qp(data, m, gamma, cfg, warm)?;
    let mut value = gamma * r2 + mean(&inner.values);
    for _ in 0..JOINT_INNER_CAP {
        let next_gamma = match gamma_update(data, m, &inner.pi, radius) {
            Ok(g) => clamp_gamma(g),
            Err(Error::GammaBoundary) => GAMMA_FLOOR,
            Err(e) => return Err(e),
        };
        let next = inner_qp(data, m, next_gamma, cfg, Some(&inner.pi))?;
        let next_value = next_gamma * r2 + mean(&next.values);
        if !(next_value <= value) {
            break;
        }
        let decrease = (value - next_value) / value.abs().max(f64::MIN_POSITIVE);
        let moved = (next_gamma - gamma).abs() / gamma;
        gamma = next_gamma;
        inner = next;
        value = next_value;
        if decrease < JOINT_INNER_TOL && moved < JOINT_INNER_TOL {
            break;
        }
    }
    Ok(JointState { inner, gamma, value })
}

/// Joint (Π, γ) scheme for a fixed radius: descends the worst-case risk
/// upper value `γ r² + (1/N) Σ_n e_n`, which is what the trace records.
pub fn fit_joint(data: &DataSet, init: &Centroids, cfg: &RobustConfig) -> Result<FitResult> {
    check_fit_input(data, init, cfg)?;
    let radius = cfg.radius.ok_or_else(|| Error::InvalidInput("joint fit needs a radius".into()))?;
    // The single-cluster optimum 1 + sqrt(Risk)/r is a good starting point.
    let risk = empirical_risk(data, init)?;
    let gamma0 = if risk > 0.0 { clamp_gamma(1.0 + risk.sqrt() / radius) } else { GAMMA_FLOOR };

    let mut m = init.clone();
    let mut state = joint_inner(data, &m, radius, gamma0, cfg, None)?;
    let mut trace = vec![state.value];
    let mut gamma_trace = vec![state.gamma];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let next = m_step(data, &state.inner.pi, state.gamma, &m)?;
        let shift = m.relative_shift(&next);
        state = joint_inner(data, &next, radius, state.gamma, cfg, Some(&state.inner.pi))?;
        m = next;
        trace.push(state.value);
        gamma_trace.push(state.gamma);
        iterations += 1;
        if shift <= cfg.tol {
            converged = true;
            break;
        }
    }
    let worst_case_points = worst_case_points(data, &m, &state.inner.pi, state.gamma)?;
    Ok(FitResult {
        centroids: m,
        assignment: state.inner.pi,
        gamma_final: state.gamma,
        objective_trace: trace,
        gamma_trace,
        worst_case_points,
        iterations,
        converged,
    })
}

/// Fixed-γ loop with an entropy-regularized inner step; the trace holds
/// `J_γ^λ` (plus `γ r²` when a radius is also given).
pub fn fit_entropy(data: &DataSet, init: &Centroids, cfg: &RobustConfig) -> Result<FitResult> {
    check_fit_input(data, init, cfg)?;
    let gamma = cfg.gamma.ok_or_else(|| Error::InvalidInput("entropy fit needs gamma".into()))?;
    check_gamma(gamma)?;
    let lambda = cfg.entropy_lambda;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("entropy fit needs entropy_lambda > 0".into()));
    }
    let offset = cfg.radius.map_or(0.0, |r| gamma * r * r);

    let mut m = init.clone();
    let mut inner = inner_entropy(data, &m, gamma, lambda, cfg, None)?;
    let mut trace = vec![offset + mean(&inner.values)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let next = m_step(data, &inner.pi, gamma, &m)?;
        let shift = m.relative_shift(&next);
        inner = inner_entropy(data, &next, gamma, lambda, cfg, Some(&inner.pi))?;
        m = next;
        trace.push(offset + mean(&inner.values));
        iterations += 1;
        if shift <= cfg.tol {
            converged = true;
            break;
        }
    }
    let worst_case_points = worst_case_points(data, &m, &inner.pi, gamma)?;
    Ok(FitResult {
        centroids: m,
        assignment: inner.pi,
        gamma_final: gamma,
        objective_trace: trace,
        gamma_trace: vec![gamma; iterations + 1],
        worst_case_points,
        iterations,
        converged,
    })
}

/// Envelope `F_γ(M) = min_Π J_γ(M, Π)`, or its regularized counterpart
/// `min_Π J_γ(M, Π) − λ Σ_n H(π_n) / N` when `lambda > 0`.
pub fn envelope(data: &DataSet, m: &Centroids, gamma: f64, lambda: f64, cfg: &RobustConfig) -> Result<f64> {
    m.check_dim(data)?;
    let inner = if lambda > 0.0 {
        inner_entropy(data, m, gamma, lambda, cfg, None)?
    } else {
        inner_qp(data, m, gamma, cfg, None)?
    };
    Ok(mean(&inner.values))
}

/// Per-center distance `||μ_k − Σ_n π_kn x_n* / Σ_n π_kn||` between each
/// center and the assignment-weighted mean of the worst-case points. Zero at
/// an exact M-step; clusters with zero mass report 0.
pub fn centroid_opt_residual(data: &DataSet, m: &Centroids, pi: &SoftAssignment, gamma: f64) -> Result<Vec<f64>> {
    let xs = worst_case_points(data, m, pi, gamma)?;
    let masses = pi.masses();
    let mut out = Vec::with_capacity(m.k());
    for (k, center) in m.centers().enumerate() {
        if masses[k] == 0.0 {
            out.push(0.0);
            continue;
        }
        let sq: f64 = (0..data.dim())
            .map(|j| {
                let target = stable_sum(xs.points().zip(pi.columns()).map(|(x, c)| c[k] * x[j])) / masses[k];
                (center[j] - target).powi(2)
            })
            .sum();
        out.push(sq.sqrt());
    }
    Ok(out)
}

/// `|γ − γ_opt(Π)| / γ` where `γ_opt` is the closed-form γ update.
pub fn gamma_opt_residual(
    data: &DataSet,
    m: &Centroids,
    pi: &SoftAssignment,
    gamma: f64,
    radius: f64,
) -> Result<f64> {
    let opt = gamma_update(data, m, pi, radius)?;
    Ok((gamma - opt).abs() / gamma)
}
