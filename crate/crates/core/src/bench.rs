//! Synthetic mixtures, outlier injection and scoring, and the desk-scale
//! experiment runners comparing the robust fit against Lloyd.
//!
//! Trials draw from `Rng::stream(seed, trial)` and run in parallel, so results
//! depend only on the seed and the trial count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax_lowest, nearest_partition, sq_dist, Centroids, DataSet, FitResult, RobustConfig};
use crate::risk::{calibrate_radius_contaminated, wc_risk, RadiusConfig};
use crate::rng::Rng;
use crate::seeding::{lloyd_fit, seed_kmeanspp};
use crate::solver::fit_joint;

/// One isotropic Gaussian component: `mean + scale · N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: Vec<f64>,
    pub scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub dim: usize,
    pub components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.components.is_empty() {
            return Err(Error::InvalidInput("mixture needs dim >= 1 and at least one component".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: c.mean.len() });
            }
            if !(c.scale > 0.0) || !c.scale.is_finite() || c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("component {i}: scale must be positive and finite")));
            }
            if !(c.weight >= 0.0) {
                return Err(Error::InvalidInput(format!("component {i}: weight must be >= 0")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Same components with weights rescaled to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("mixture weights must have a positive sum".into()));
        }
        for c in &mut self.components {
            c.weight /= total;
        }
        Ok(self)
    }
}

/// Draws and the component each came from.
pub fn sample_gmm_labeled(spec: &GmmSpec, n: usize, rng: &mut Rng) -> Result<(DataSet, Vec<usize>)> {
    spec.validate()?;
    let last = spec.components.iter().rposition(|c| c.weight > 0.0).expect("weights sum to one");
    let mut values = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut pick = last;
        for (i, c) in spec.components.iter().enumerate() {
            acc += c.weight;
            if c.weight > 0.0 && u < acc {
                pick = i;
                break;
            }
        }
        let c = &spec.components[pick];
        values.extend(c.mean.iter().map(|m| m + c.scale * rng.normal()));
        labels.push(pick);
    }
    Ok((DataSet::from_flat(n, spec.dim, values)?, labels))
}

pub fn sample_gmm(spec: &GmmSpec, n: usize, rng: &mut Rng) -> Result<DataSet> {
    Ok(sample_gmm_labeled(spec, n, rng)?.0)
}

/// Inliers followed by appended outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedSample {
    pub data: DataSet,
    pub inlier_flags: Vec<bool>,
    pub n_inliers: usize,
    pub n_outliers: usize,
}

impl ContaminatedSample {
    pub fn outlier_indices(&self) -> Vec<usize> {
        (self.n_inliers..self.n_inliers + self.n_outliers).collect()
    }
}

/// Append `round(f · N_in / (1 − f))` draws from `spec`, so outliers make up
/// the fraction `f` of the result. The inliers stay untouched as a prefix.
pub fn inject_outliers(data: &DataSet, spec: &GmmSpec, fraction: f64, rng: &mut Rng) -> Result<ContaminatedSample> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("outlier fraction must lie in (0, 1), got {fraction}")));
    }
    if spec.dim != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: spec.dim });
    }
    let n_in = data.n_points();
    let n_out = (fraction * n_in as f64 / (1.0 - fraction)).round() as usize;
    if n_out == 0 {
        return Err(Error::Degenerate(format!("fraction {fraction} of {n_in} inliers yields no outliers")));
    }
    let outliers = sample_gmm(spec, n_out, rng)?;
    let mut inlier_flags = vec![true; n_in];
    inlier_flags.resize(n_in + n_out, false);
    Ok(ContaminatedSample { data: data.concat(&outliers)?, inlier_flags, n_inliers: n_in, n_outliers: n_out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    /// Distance of each point to the center of its largest assignment weight.
    pub scores: Vec<f64>,
    /// The `min(z, N)` highest scores, in decreasing order of score.
    pub flagged: Vec<usize>,
    /// Share of `truth` that was flagged; present when a truth set is given.
    pub recall: Option<f64>,
    pub z: usize,
}

/// Score points by distance to their hard-assigned center and flag the top
/// `z`; score ties go to the lower index.
pub fn outlier_report(data: &DataSet, result: &FitResult, z: usize, truth: Option<&[usize]>) -> Result<OutlierReport> {
    if z < 1 {
        return Err(Error::InvalidInput("z must be >= 1".into()));
    }
    let m = &result.centroids;
    m.check_dim(data)?;
    if result.assignment.n_points() != data.n_points() {
        return Err(Error::InvalidInput("fit result and data disagree on N".into()));
    }
    let scores: Vec<f64> = data
        .points()
        .zip(result.assignment.columns())
        .map(|(x, col)| sq_dist(x, m.center(argmax_lowest(col))).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(z.min(scores.len()));
    let recall = match truth {
        None => None,
        Some([]) => return Err(Error::InvalidInput("recall is undefined for an empty truth set".into())),
        Some(t) => {
            let mut hit = vec![false; scores.len()];
            for &i in &order {
                hit[i] = true;
            }
            let mut unique = t.to_vec();
            unique.sort_unstable();
            unique.dedup();
            if let Some(bad) = unique.iter().find(|&&i| i >= scores.len()) {
                return Err(Error::InvalidInput(format!("truth index {bad} out of range")));
            }
            Some(unique.iter().filter(|&&i| hit[i]).count() as f64 / unique.len() as f64)
        }
    };
    Ok(OutlierReport { scores, flagged: order, recall, z })
}

fn normal_blob(rng: &mut Rng, mean: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| mean.iter().map(|m| m + rng.normal()).collect()).collect()
}

/// Inlier sizes, outlier count and radius of one two-cluster setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp2Setting {
    pub n_a: usize,
    pub n_b: usize,
    pub n_outliers: usize,
    pub radius: f64,
}

impl Exp2Setting {
    pub const LARGE: Self = Self { n_a: 20, n_b: 20, n_outliers: 5, radius: 2.25 };
    pub const SMALL: Self = Self { n_a: 10, n_b: 10, n_outliers: 2, radius: 2.5 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp2Trial {
    pub trial: usize,
    pub accuracy_drkm: f64,
    pub accuracy_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Summary {
    pub setting: Exp2Setting,
    pub trials: Vec<Exp2Trial>,
    pub mean_accuracy_drkm: f64,
    pub mean_accuracy_km: f64,
}

/// Share of inliers whose nearest centroid matches their true cluster, under
/// the better of the two centroid-to-label matchings.
pub fn two_cluster_accuracy(inliers: &DataSet, truth: &[usize], m: &Centroids) -> Result<f64> {
    let labels = nearest_partition(inliers, m)?;
    let same = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
    let n = truth.len();
    Ok(same.max(n - same) as f64 / n as f64)
}

/// Clusters around (−2,−2) and (2,2) plus an outlier clump around (8,8), all
/// with identity covariance. Lloyd and the joint robust fit start from the
/// same k-means++ seeds.
pub fn run_experiment2(setting: Exp2Setting, trials: usize, seed: u64) -> Result<Exp2Summary> {
    if trials < 1 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let rows: Vec<Exp2Trial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = Rng::stream(seed, trial as u64);
            let mut inliers = normal_blob(&mut rng, &[-2.0, -2.0], setting.n_a);
            inliers.extend(normal_blob(&mut rng, &[2.0, 2.0], setting.n_b));
            let truth: Vec<usize> = (0..setting.n_a + setting.n_b).map(|i| usize::from(i >= setting.n_a)).collect();
            let inliers = DataSet::new(&inliers)?;
            let outliers = DataSet::new(&normal_blob(&mut rng, &[8.0, 8.0], setting.n_outliers))?;
            let data = inliers.concat(&outliers)?;

            let init = seed_kmeanspp(&data, 2, &mut rng)?;
            let km = lloyd_fit(&data, &init, 1e-6, 300)?;
            let drkm = fit_joint(&data, &init, &RobustConfig::with_radius(setting.radius))?;
            Ok(Exp2Trial {
                trial,
                accuracy_drkm: two_cluster_accuracy(&inliers, &truth, &drkm.centroids)?,
                accuracy_km: two_cluster_accuracy(&inliers, &truth, &km.centroids)?,
            })
        })
        .collect::<Result<_>>()?;
    let mean = |f: fn(&Exp2Trial) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Ok(Exp2Summary {
        setting,
        mean_accuracy_drkm: mean(|t| t.accuracy_drkm),
        mean_accuracy_km: mean(|t| t.accuracy_km),
        trials: rows,
    })
}

pub const EXP1_DIM: usize = 7;
pub const EXP1_WEIGHTS: [f64; 3] = [0.2, 0.26, 0.53];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp1Trial {
    pub n: usize,
    pub trial: usize,
    pub radius: f64,
    pub wc_drkm: f64,
    pub wc_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp1Point {
    pub n: usize,
    pub radius: f64,
    pub mean_wc_drkm: f64,
    pub mean_wc_km: f64,
}

impl Exp1Point {
    /// Mean worst-case risk of Lloyd minus that of the robust fit.
    pub fn gap(&self) -> f64 {
        self.mean_wc_km - self.mean_wc_drkm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Summary {
    pub trials: Vec<Exp1Trial>,
    pub curve: Vec<Exp1Point>,
}

/// Three-component mixture in 7 dimensions with unit scale, weights
/// proportional to 0.2 : 0.26 : 0.53 and means uniform in `[−5, 5]^7`.
pub fn exp1_mixture(rng: &mut Rng) -> Result<GmmSpec> {
    let components = EXP1_WEIGHTS
        .iter()
        .map(|&weight| GmmComponent {
            mean: (0..EXP1_DIM).map(|_| rng.uniform_in(-5.0, 5.0)).collect(),
            scale: 1.0,
            weight,
        })
        .collect();
    GmmSpec { dim: EXP1_DIM, components }.normalized()
}

/// Each trial draws one mixture, shared across sample sizes so the sizes are
/// compared on the same populations. For each size: draw a sample, fit Lloyd from
/// k-means++ seeds, run the joint robust fit from Lloyd's centroids at
/// `r = 10 (1/n)^{1/7}`, and score both by worst-case risk at that radius.
pub fn run_experiment1(n_values: &[usize], trials: usize, seed: u64) -> Result<Exp1Summary> {
    if trials < 1 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let jobs: Vec<(usize, usize, usize)> = n_values
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..trials).map(move |t| (i, n, t)))
        .collect();
    let preset = RadiusConfig::experiment_preset(EXP1_DIM);
    let rows: Vec<Exp1Trial> = jobs
        .into_par_iter()
        .map(|(i, n, trial)| {
            if n < 3 {
                return Err(Error::InvalidInput(format!("sample size {n} is below K = 3")));
            }
            // One mixture per trial, shared by every sample size.
            let spec = exp1_mixture(&mut Rng::stream(seed, trial as u64))?;
            let mut rng = Rng::stream(seed, (trials + i * trials + trial) as u64);
            let data = sample_gmm(&spec, n, &mut rng)?;
            let radius = crate::risk::calibrate_radius(n, &preset)?;
            let init = seed_kmeanspp(&data, 3, &mut rng)?;
            let km = lloyd_fit(&data, &init, 1e-6, 300)?;
            let drkm = fit_joint(&data, &km.centroids, &RobustConfig::with_radius(radius))?;
            Ok(Exp1Trial {
                n,
                trial,
                radius,
                wc_drkm: wc_risk(&data, &drkm.centroids, radius, 1e-8)?.value,
                wc_km: wc_risk(&data, &km.centroids, radius, 1e-8)?.value,
            })
        })
        .collect::<Result<_>>()?;
    let curve = n_values
        .iter()
        .map(|&n| {
            let sel: Vec<&Exp1Trial> = rows.iter().filter(|t| t.n == n).collect();
            let k = sel.len() as f64;
            Exp1Point {
                n,
                radius: sel[0].radius,
                mean_wc_drkm: sel.iter().map(|t| t.wc_drkm).sum::<f64>() / k,
                mean_wc_km: sel.iter().map(|t| t.wc_km).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(Exp1Summary { trials: rows, curve })
}

/// Blob layout for the outlier-recall benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallSetting {
    pub dim: usize,
    pub clusters: usize,
    pub per_cluster: usize,
    /// Outlier share of the final sample.
    pub fraction: f64,
    /// Outlier spread as a multiple of the unit cluster spread.
    pub separation: f64,
    pub confidence_eps: f64,
}

impl Default for RecallSetting {
    fn default() -> Self {
        Self { dim: 20, clusters: 3, per_cluster: 100, fraction: 0.05, separation: 10.0, confidence_eps: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallTrial {
    pub trial: usize,
    pub radius: f64,
    pub recall_drkm: f64,
    pub recall_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
    pub setting: RecallSetting,
    pub trials: Vec<RecallTrial>,
    pub mean_recall_drkm: f64,
    pub mean_recall_km: f64,
}

/// Unit-spread blobs with means uniform in `[−5, 5]^d`, contaminated by
/// outliers drawn from `N(0, s² I)` with `s` the separation multiple. The
/// robust fit uses the contaminated radius with `D = s·sqrt(d)`, the typical
/// outlier norm. Both methods flag as many points as there are outliers.
pub fn run_recall_benchmark(setting: RecallSetting, trials: usize, seed: u64) -> Result<RecallSummary> {
    if trials < 1 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let rows: Vec<RecallTrial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = Rng::stream(seed, trial as u64);
            let d = setting.dim;
            let components = (0..setting.clusters)
                .map(|_| GmmComponent {
                    mean: (0..d).map(|_| rng.uniform_in(-5.0, 5.0)).collect(),
                    scale: 1.0,
                    weight: 1.0,
                })
                .collect();
            let inlier_spec = GmmSpec { dim: d, components }.normalized()?;
            let inliers = sample_gmm(&inlier_spec, setting.clusters * setting.per_cluster, &mut rng)?;
            let outlier_spec = GmmSpec {
                dim: d,
                components: vec![GmmComponent { mean: vec![0.0; d], scale: setting.separation, weight: 1.0 }],
            };
            let sample = inject_outliers(&inliers, &outlier_spec, setting.fraction, &mut rng)?;
            let truth = sample.outlier_indices();

            let radius_cfg = RadiusConfig {
                separation_d: setting.separation * (d as f64).sqrt(),
                contamination: setting.fraction,
                ..RadiusConfig::new(setting.confidence_eps, d)
            };
            let radius = calibrate_radius_contaminated(sample.n_inliers, sample.n_outliers, &radius_cfg)?;
            let init = seed_kmeanspp(&sample.data, setting.clusters, &mut rng)?;
            let km = lloyd_fit(&sample.data, &init, 1e-6, 300)?;
            let drkm = fit_joint(&sample.data, &init, &RobustConfig::with_radius(radius))?;
            let z = truth.len();
            let recall = |fit: &FitResult| -> Result<f64> {
                Ok(outlier_report(&sample.data, fit, z, Some(&truth))?.recall.unwrap_or(0.0))
            };
            Ok(RecallTrial { trial, radius, recall_drkm: recall(&drkm)?, recall_km: recall(&km)? })
        })
        .collect::<Result<_>>()?;
    let k = rows.len() as f64;
    Ok(RecallSummary {
        setting,
        mean_recall_drkm: rows.iter().map(|t| t.recall_drkm).sum::<f64>() / k,
        mean_recall_km: rows.iter().map(|t| t.recall_km).sum::<f64>() / k,
        trials: rows,
    })
}
