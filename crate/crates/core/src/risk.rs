//! Worst-case risk through its one-dimensional dual, the risk sandwich,
//! ambiguity-radius calibration and an exact 1-D W2 distance.
//!
//! The dual objective is `D(γ) = γ r² + (1/N) Σ_n e_n(γ, M)`, convex on
//! γ > 1; the worst-case risk is its infimum.

use serde::{Deserialize, Serialize};

use crate::assignment::solve_all;
use crate::error::{Error, Result};
use crate::model::{empirical_risk, stable_sum, Centroids, DataSet};

/// Lower edge of the γ search bracket.
pub const GAMMA_LOWER: f64 = 1.0 + 1e-9;
/// Minimizers below this are reported as sitting on the boundary γ ↓ 1.
pub const BOUNDARY_GAMMA: f64 = 1.0 + 1e-6;
const GAMMA_SEARCH_MAX: f64 = 1e15;
const DUAL_QP_TOL: f64 = 1e-10;
const DUAL_QP_MAX_ITER: usize = 100_000;

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("radius must be positive, got {radius}")))
    }
}

/// `D(γ)` for one γ.
pub fn dual_value(data: &DataSet, m: &Centroids, radius: f64, gamma: f64) -> Result<f64> {
    let sols = solve_all(data, m, gamma, DUAL_QP_TOL, DUAL_QP_MAX_ITER, None)?;
    let v = gamma * radius * radius + stable_sum(sols.iter().map(|s| s.e_value)) / data.n_points() as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("dual objective"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcRisk {
    pub value: f64,
    pub gamma_star: f64,
    /// The minimizer hugs γ = 1; `value` is then the infimum approached there.
    pub boundary: bool,
}

/// Worst-case risk of `m` over the W2 ball of the given radius.
///
/// Golden-section search on `t = ln(γ − 1)`, over which `D` stays unimodal,
/// between `1 + 1e-9` and a `γ_max` found by doubling from 2 until `D`
/// increases. Stops once the γ bracket is within `gamma_tol` relative.
pub fn wc_risk(data: &DataSet, m: &Centroids, radius: f64, gamma_tol: f64) -> Result<WcRisk> {
    check_radius(radius)?;
    m.check_dim(data)?;
    if !(gamma_tol > 0.0) {
        return Err(Error::InvalidInput("gamma_tol must be positive".into()));
    }
    let d = |gamma: f64| dual_value(data, m, radius, gamma);

    let mut hi = 2.0;
    let mut d_hi = d(hi)?;
    loop {
        let next = 2.0 * hi;
        let d_next = d(next)?;
        hi = next;
        if d_next > d_hi || hi >= GAMMA_SEARCH_MAX {
            break;
        }
        d_hi = d_next;
    }

    let to_gamma = |t: f64| 1.0 + t.exp();
    let (mut a, mut b) = ((GAMMA_LOWER - 1.0).ln(), (hi - 1.0).ln());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut e = a + inv_phi * (b - a);
    let mut fc = d(to_gamma(c))?;
    let mut fe = d(to_gamma(e))?;
    let mut best = if fc <= fe { (fc, to_gamma(c)) } else { (fe, to_gamma(e)) };
    for _ in 0..500 {
        let (ga, gb) = (to_gamma(a), to_gamma(b));
        if (gb - ga) <= gamma_tol * ga {
            break;
        }
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - inv_phi * (b - a);
            fc = d(to_gamma(c))?;
            if fc < best.0 {
                best = (fc, to_gamma(c));
            }
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + inv_phi * (b - a);
            fe = d(to_gamma(e))?;
            if fe < best.0 {
                best = (fe, to_gamma(e));
            }
        }
    }
    // The lower edge itself is a candidate when the infimum sits at γ ↓ 1.
    let edge = d(GAMMA_LOWER)?;
    if edge < best.0 {
        best = (edge, GAMMA_LOWER);
    }
    Ok(WcRisk { value: best.0, gamma_star: best.1, boundary: best.1 < BOUNDARY_GAMMA })
}

/// Sampled dual objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCurve {
    pub gammas: Vec<f64>,
    pub values: Vec<f64>,
}

impl DualCurve {
    /// Every interior sample lies on or below the chord of its neighbours,
    /// within `rel_tol · max|D|`. The grid must be increasing.
    pub fn is_midpoint_convex(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
        (1..self.values.len().saturating_sub(1)).all(|i| {
            let (g0, g1, g2) = (self.gammas[i - 1], self.gammas[i], self.gammas[i + 1]);
            let chord = ((g2 - g1) * self.values[i - 1] + (g1 - g0) * self.values[i + 1]) / (g2 - g0);
            self.values[i] <= chord + rel_tol * scale
        })
    }
}

pub fn dual_curve(data: &DataSet, m: &Centroids, radius: f64, gammas: &[f64]) -> Result<DualCurve> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!("radius must be nonnegative, got {radius}")));
    }
    m.check_dim(data)?;
    let values = gammas.iter().map(|&g| dual_value(data, m, radius, g)).collect::<Result<Vec<_>>>()?;
    Ok(DualCurve { gammas: gammas.to_vec(), values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSandwich {
    pub lower: f64,
    pub wc: f64,
    pub upper: f64,
}

/// `Risk ≤ WC-Risk ≤ (r + sqrt(Risk))²`, checked within `1e-7 · scale`.
pub fn risk_sandwich_check(data: &DataSet, m: &Centroids, radius: f64) -> Result<RiskSandwich> {
    let lower = empirical_risk(data, m)?;
    let wc = wc_risk(data, m, radius, 1e-8)?.value;
    let upper = (radius + lower.sqrt()).powi(2);
    let slack = 1e-7 * upper.max(1.0);
    if wc < lower - slack {
        return Err(Error::SandwichViolation { side: "lower", lower, wc, upper });
    }
    if wc > upper + slack {
        return Err(Error::SandwichViolation { side: "upper", lower, wc, upper });
    }
    Ok(RiskSandwich { lower, wc, upper })
}

/// Inputs of the high-confidence radius formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusConfig {
    /// Confidence level ε ∈ (0, 1).
    pub confidence_eps: f64,
    pub fg_c_upper: f64,
    pub fg_c_lower: f64,
    /// Moment exponent α > 2.
    pub alpha: f64,
    pub dim: usize,
    /// Outlier fraction in [0, 1).
    pub contamination: f64,
    /// W2 distance between the inlier and outlier populations.
    pub separation_d: f64,
    /// Multiplier applied to every computed radius.
    pub scale: f64,
}

impl RadiusConfig {
    pub fn new(confidence_eps: f64, dim: usize) -> Self {
        Self {
            confidence_eps,
            fg_c_upper: 1.0,
            fg_c_lower: 1.0,
            alpha: 4.0,
            dim,
            contamination: 0.0,
            separation_d: 0.0,
            scale: 1.0,
        }
    }

    /// `r = 10 (1/N)^{1/d}`: unit constants, ε = 1/e and scale 10.
    pub fn experiment_preset(dim: usize) -> Self {
        Self { scale: 10.0, ..Self::new((-1.0f64).exp(), dim) }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::InvalidInput(msg.to_string())) };
        ok(self.confidence_eps > 0.0 && self.confidence_eps < 1.0, "confidence eps must lie in (0, 1)")?;
        ok(self.alpha > 2.0, "alpha must exceed 2")?;
        ok(self.fg_c_upper > 0.0 && self.fg_c_lower > 0.0, "constants C and c must be positive")?;
        ok(self.dim >= 1, "dim must be >= 1")?;
        ok((0.0..1.0).contains(&self.contamination), "contamination must lie in [0, 1)")?;
        ok(self.separation_d >= 0.0 && self.separation_d.is_finite(), "separation must be >= 0")?;
        ok(self.scale > 0.0 && self.scale.is_finite(), "scale must be positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusBranch {
    /// Enough samples: exponent 1/d.
    Dimension,
    /// Below the sample threshold: exponent 1/α.
    Moment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusCalibration {
    pub radius: f64,
    pub branch: RadiusBranch,
    /// Sample count `log(C/ε)/c` at which the exponent switches. The formula
    /// jumps there; no smoothing is applied.
    pub threshold: f64,
    /// Set when d ≤ 4, outside the regime the concentration bound covers.
    pub low_dim_caveat: bool,
}

fn radius_at(n: usize, eps: f64, cfg: &RadiusConfig) -> Result<RadiusCalibration> {
    if n < 1 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("confidence eps must lie in (0, 1), got {eps}")));
    }
    let log_term = (cfg.fg_c_upper / eps).ln();
    let threshold = log_term / cfg.fg_c_lower;
    let base = log_term / (cfg.fg_c_lower * n as f64);
    let (exponent, branch) = if n as f64 >= threshold {
        (1.0 / cfg.dim as f64, RadiusBranch::Dimension)
    } else {
        (1.0 / cfg.alpha, RadiusBranch::Moment)
    };
    Ok(RadiusCalibration {
        radius: cfg.scale * base.max(0.0).powf(exponent),
        branch,
        threshold,
        low_dim_caveat: cfg.dim <= 4,
    })
}

/// Radius with branch and caveat diagnostics.
pub fn calibrate_radius_detail(n: usize, cfg: &RadiusConfig) -> Result<RadiusCalibration> {
    cfg.validate()?;
    radius_at(n, cfg.confidence_eps, cfg)
}

/// `(log(C/ε)/(c n))^{1/d}` when `n ≥ log(C/ε)/c`, exponent `1/α` otherwise,
/// times `cfg.scale`.
pub fn calibrate_radius(n: usize, cfg: &RadiusConfig) -> Result<f64> {
    Ok(calibrate_radius_detail(n, cfg)?.radius)
}

/// Radius covering a sample with `n2` outliers among `n1 + n2` points:
/// `r(n1, ε/2) + sqrt(c) (D + r(n1, ε/2) + r(n2, ε/2))` with `c = n2/(n1+n2)`.
pub fn calibrate_radius_contaminated(n1: usize, n2: usize, cfg: &RadiusConfig) -> Result<f64> {
    cfg.validate()?;
    let half = cfg.confidence_eps / 2.0;
    let r1 = radius_at(n1, half, cfg)?.radius;
    if n2 == 0 {
        return Ok(r1);
    }
    let r2 = radius_at(n2, half, cfg)?.radius;
    let c = n2 as f64 / (n1 + n2) as f64;
    Ok(contaminated_formula(r1, r2, c, cfg.separation_d))
}

pub fn contaminated_formula(r1: f64, r2: f64, fraction: f64, separation: f64) -> f64 {
    r1 + fraction.sqrt() * (separation + r1 + r2)
}

/// Exact W2 between two weighted point sets on the real line, by monotone
/// coupling of their CDFs. Each side is a list of `(location, weight)`.
pub fn w2_empirical_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    let prep = |s: &[(f64, f64)]| -> Result<Vec<(f64, f64)>> {
        if s.iter().any(|(x, w)| !x.is_finite() || !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let total: f64 = s.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
        }
        let mut v: Vec<(f64, f64)> = s.iter().copied().filter(|(_, w)| *w > 0.0).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        Ok(v)
    };
    let (a, b) = (prep(a)?, prep(b)?);
    let cdf = |s: &[(f64, f64)]| -> Vec<f64> {
        let mut acc = 0.0;
        s.iter().map(|(_, w)| { acc += w; acc }).collect()
    };
    let (ca, cb) = (cdf(&a), cdf(&b));
    let mut levels: Vec<f64> = ca.iter().chain(&cb).map(|u| u.min(1.0)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // The quantile functions are constant between consecutive breakpoints;
    // evaluate both at each interval midpoint.
    let quantile = |s: &[(f64, f64)], c: &[f64], u: f64| s[c.partition_point(|v| *v < u).min(s.len() - 1)].0;
    let mut cost = 0.0;
    let mut prev = 0.0;
    for &u in &levels {
        if u > prev {
            let mid = 0.5 * (prev + u);
            cost += (u - prev) * (quantile(&a, &ca, mid) - quantile(&b, &cb, mid)).powi(2);
            prev = u;
        }
    }
    Ok(cost.max(0.0).sqrt())
}
