//! Gaussian model of reconstruction errors, Mahalanobis anomaly scores,
//! ranking, thresholding and ROC analysis.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Multivariate normal fitted to error vectors, with a cached Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianErrorModel {
    pub mean: Vec<f64>,
    /// Row-major `C x C`, regularization included.
    pub covariance: Vec<f64>,
    pub lambda: f64,
    /// Lower-triangular factor of `covariance`, row-major.
    chol: Vec<f64>,
}

impl GaussianErrorModel {
    /// Mean and covariance (denominator `N`) of `samples`, plus `lambda * I`.
    ///
    /// With `lambda = None` the regularization is `1e-6 * trace / C`, floored
    /// at `1e-12` so identical samples still factor.
    pub fn fit(samples: &[Vec<f64>], lambda: Option<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::contract("a Gaussian fit needs at least two error vectors"));
        }
        let c = samples[0].len();
        if c == 0 {
            return Err(Error::contract("error vectors are empty"));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != c) {
            return Err(Error::dim("fit_gaussian", &[c], &[bad.len()]));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; c];
        for s in samples {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![0.0; c * c];
        for s in samples {
            for i in 0..c {
                let di = s[i] - mean[i];
                for j in 0..=i {
                    cov[i * c + j] += di * (s[j] - mean[j]);
                }
            }
        }
        for i in 0..c {
            for j in 0..=i {
                cov[i * c + j] /= n;
                cov[j * c + i] = cov[i * c + j];
            }
        }
        let lambda = match lambda {
            Some(l) if l >= 0.0 && l.is_finite() => l,
            Some(l) => return Err(Error::config(format!("regularization {l} must be non-negative"))),
            None => (1e-6 * (0..c).map(|i| cov[i * c + i]).sum::<f64>() / c as f64).max(1e-12),
        };
        for i in 0..c {
            cov[i * c + i] += lambda;
        }
        Self::from_parts(mean, cov, lambda)
    }

    /// A model from stored moments; `covariance` already includes `lambda`.
    pub fn from_parts(mean: Vec<f64>, covariance: Vec<f64>, lambda: f64) -> Result<Self> {
        let c = mean.len();
        if covariance.len() != c * c {
            return Err(Error::dim("gaussian covariance", &[covariance.len()], &[c, c]));
        }
        let chol = cholesky(&covariance, c).ok_or_else(|| {
            Error::Numeric(format!(
                "covariance is not positive definite with regularization {lambda:e}; use a larger lambda"
            ))
        })?;
        Ok(GaussianErrorModel {
            mean,
            covariance,
            lambda,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `sqrt((e - mu)^T Sigma^-1 (e - mu))` by forward substitution.
    pub fn mahalanobis(&self, e: &[f64]) -> Result<f64> {
        let c = self.dim();
        if e.len() != c {
            return Err(Error::dim("mahalanobis", &[e.len()], &[c]));
        }
        let mut y = vec![0.0; c];
        let mut sq = 0.0;
        for i in 0..c {
            let row = &self.chol[i * c..i * c + i];
            let v = e[i] - self.mean[i] - row.iter().zip(&y).map(|(l, y)| l * y).sum::<f64>();
            y[i] = v / self.chol[i * c + i];
            sq += y[i] * y[i];
        }
        Ok(sq.sqrt())
    }

    pub fn score_all(&self, errors: &[Vec<f64>]) -> Result<Vec<f64>> {
        errors.iter().map(|e| self.mahalanobis(e)).collect()
    }
}

/// Lower Cholesky factor of a symmetric positive-definite row-major matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnomalyScore {
    pub window_id: usize,
    pub score: f64,
    /// Ground truth for evaluation: true for anomalous windows.
    pub label: Option<bool>,
}

/// Descending by score; equal scores keep ascending window ids.
pub fn rank_scores(scores: &[AnomalyScore]) -> Vec<AnomalyScore> {
    let mut out = scores.to_vec();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.window_id.cmp(&b.window_id)));
    out
}

/// The `ceil(q * N)` highest-ranked scores.
pub fn top_fraction(scores: &[AnomalyScore], q: f64) -> Result<Vec<AnomalyScore>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::config(format!("fraction {q} must lie in (0, 1]")));
    }
    // the small slack absorbs products such as 1e-4 * 1e4 = 1.0000000000000002
    let k = ((q * scores.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut ranked = rank_scores(scores);
    ranked.truncate(k.min(scores.len()));
    Ok(ranked)
}

/// Flags scores strictly above `tau`.
pub fn detect(scores: &[f64], tau: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > tau).collect()
}

/// Linear-interpolated percentile (`p` in `[0, 100]`) of `values`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::config(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            let _ = writeln!(s, "{f},{t}");
        }
        s
    }
}

/// ROC over every distinct score as a threshold; higher scores mean anomalous.
///
/// The trapezoid area is accumulated in integer units of `1 / (2 P N)`, so it
/// equals the pairwise rank statistic (ties counted one half) exactly.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::dim("roc_auc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN anomaly score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::contract("ROC needs both positive and negative windows"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = twice_area as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// `window_id,score,label` rows; the label column is 1, 0 or empty.
pub fn scores_csv(scores: &[AnomalyScore]) -> String {
    let mut s = String::from("window_id,score,label\n");
    for a in scores {
        let label = match a.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = writeln!(s, "{},{:e},{label}", a.window_id, a.score);
    }
    s
}
