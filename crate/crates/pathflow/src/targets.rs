//! Target densities.
//!
//! Everything here exposes an unnormalized log density and its gradient
//! through [`TargetDensity`]; no normalizing constant is ever computed.
//! Concrete targets: isotropic/diagonal Gaussians, Gaussian mixtures, and
//! Bayesian logistic regression over a CSV dataset.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// An unnormalized log density with gradient.
///
/// Implementations must be finite on all of R^d, and the gradient must be
/// the exact derivative of `log_unnorm` (finite-difference checked in the
/// verification suite). Adding a constant to `log_unnorm` must leave
/// `grad_log_unnorm` unchanged.
pub trait TargetDensity: Send + Sync {
    fn dimension(&self) -> usize;
    fn log_unnorm(&self, x: ArrayView1<f64>) -> f64;
    fn grad_log_unnorm(&self, x: ArrayView1<f64>) -> Array1<f64>;
}

fn check_dim(expected: usize, x: ArrayView1<f64>) {
    assert_eq!(
        expected,
        x.len(),
        "dimension mismatch: expected {expected}, got {}",
        x.len()
    );
}

/// Isotropic Gaussian, used both as the initial distribution (it can be
/// sampled directly) and as a simple target.
#[derive(Debug, Clone)]
pub struct IsotropicGaussian {
    mean: Array1<f64>,
    std: f64,
}

impl IsotropicGaussian {
    pub fn new(mean: Array1<f64>, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Config(format!(
                "initial distribution std must be positive and finite, got {std}"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("initial distribution mean must be finite".into()));
        }
        Ok(Self { mean, std })
    }

    /// 1D convenience constructor.
    pub fn univariate(mean: f64, std: f64) -> Result<Self> {
        Self::new(Array1::from_vec(vec![mean]), std)
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: 1.0,
        }
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Array2<f64> {
        let d = self.mean.len();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                out[[i, j]] = self.mean[j] + self.std * z;
            }
        }
        out
    }

    /// Deterministic sampling: the same `(n, seed)` always yields the same draws.
    pub fn sample_seeded(&self, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(n, &mut rng)
    }
}

impl TargetDensity for IsotropicGaussian {
    fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn log_unnorm(&self, x: ArrayView1<f64>) -> f64 {
        check_dim(self.mean.len(), x);
        let var = self.std * self.std;
        let mut quad = 0.0;
        for (xi, mi) in x.iter().zip(self.mean.iter()) {
            let z = xi - mi;
            quad += z * z;
        }
        -0.5 * quad / var - 0.5 * (self.mean.len() as f64) * (LN_2PI + var.ln())
    }

    fn grad_log_unnorm(&self, x: ArrayView1<f64>) -> Array1<f64> {
        check_dim(self.mean.len(), x);
        let var = self.std * self.std;
        let mut g = Array1::zeros(x.len());
        for j in 0..x.len() {
            g[j] = (self.mean[j] - x[j]) / var;
        }
        g
    }
}

/// Gaussian mixture with diagonal (per-axis) component covariances.
///
/// The log density is the normalized mixture density, evaluated with a
/// log-sum-exp reduction so that points far into the tails do not
/// underflow. A normalized density is a valid unnormalized one.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    means: Vec<Array1<f64>>,
    vars: Vec<Array1<f64>>,
    weights: Vec<f64>,
    dim: usize,
}

impl GaussianMixture {
    /// `components` pairs each mean with a per-axis variance vector.
    pub fn new(components: Vec<(Array1<f64>, Array1<f64>)>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::Config(format!(
                "mixture has {} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let dim = components[0].0.len();
        for (k, (mean, var)) in components.iter().enumerate() {
            if mean.len() != dim || var.len() != dim {
                return Err(Error::Config(format!(
                    "mixture component {k} has inconsistent dimension"
                )));
            }
            if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!(
                    "mixture component {k} must have positive finite variances"
                )));
            }
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Config(format!("mixture component {k} mean must be finite")));
            }
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mixture weights must sum to 1 (got {total})"
            )));
        }
        let (means, vars) = components.into_iter().unzip();
        Ok(Self {
            means,
            vars,
            weights,
            dim,
        })
    }

    /// Isotropic components: one std per component.
    pub fn isotropic(means: Vec<Array1<f64>>, stds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(Error::Config("means/stds length mismatch".into()));
        }
        let comps = means
            .into_iter()
            .zip(stds)
            .map(|(m, s)| {
                let d = m.len();
                (m, Array1::from_elem(d, s * s))
            })
            .collect();
        Self::new(comps, weights)
    }

    /// 1D mixture from scalar means/stds.
    pub fn univariate(means: &[f64], stds: &[f64], weights: &[f64]) -> Result<Self> {
        let ms = means.iter().map(|&m| Array1::from_vec(vec![m])).collect();
        Self::isotropic(ms, stds.to_vec(), weights.to_vec())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component_mean(&self, j: usize) -> ArrayView1<'_, f64> {
        self.means[j].view()
    }

    /// ln w_j + ln N(x; mu_j, Sigma_j); -inf for zero-weight components.
    fn component_term(&self, j: usize, x: ArrayView1<f64>) -> f64 {
        if self.weights[j] == 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for k in 0..self.dim {
            let z = x[k] - self.means[j][k];
            quad += z * z / self.vars[j][k];
            logdet += self.vars[j][k].ln();
        }
        self.weights[j].ln() - 0.5 * (quad + logdet + self.dim as f64 * LN_2PI)
    }

    /// Draw `n` points by direct component selection; used by test oracles.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Array2<f64> {
        let mut out = Array2::zeros((n, self.dim));
        for i in 0..n {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut j = self.weights.len() - 1;
            for (k, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    j = k;
                    break;
                }
            }
            for k in 0..self.dim {
                let z: f64 = rng.sample(StandardNormal);
                out[[i, k]] = self.means[j][k] + self.vars[j][k].sqrt() * z;
            }
        }
        out
    }

    /// Exact P(X > threshold) for 1D mixtures.
    pub fn tail_prob_above(&self, threshold: f64) -> f64 {
        assert_eq!(self.dim, 1, "tail probabilities are defined for 1D mixtures");
        self.weights
            .iter()
            .zip(self.means.iter().zip(self.vars.iter()))
            .map(|(w, (m, v))| w * normal_sf((threshold - m[0]) / v[0].sqrt()))
            .sum()
    }

    /// Exact P(X < threshold) for 1D mixtures.
    pub fn tail_prob_below(&self, threshold: f64) -> f64 {
        assert_eq!(self.dim, 1, "tail probabilities are defined for 1D mixtures");
        self.weights
            .iter()
            .zip(self.means.iter().zip(self.vars.iter()))
            .map(|(w, (m, v))| w * normal_sf((m[0] - threshold) / v[0].sqrt()))
            .sum()
    }

    /// Exact P(||X - center|| < radius) via the noncentral chi-square CDF.
    /// Requires isotropic components.
    pub fn ball_prob(&self, center: ArrayView1<f64>, radius: f64) -> Result<f64> {
        check_dim(self.dim, center);
        let mut p = 0.0;
        for j in 0..self.weights.len() {
            let var0 = self.vars[j][0];
            if self.vars[j].iter().any(|v| (v - var0).abs() > 1e-12 * var0) {
                return Err(Error::Unsupported(
                    "ball probabilities need isotropic mixture components".into(),
                ));
            }
            let mut dist2 = 0.0;
            for k in 0..self.dim {
                let z = self.means[j][k] - center[k];
                dist2 += z * z;
            }
            let lambda = dist2 / var0;
            let y = radius * radius / var0;
            p += self.weights[j] * noncentral_chisq_cdf(self.dim as f64, lambda, y);
        }
        Ok(p)
    }
}

impl TargetDensity for GaussianMixture {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn log_unnorm(&self, x: ArrayView1<f64>) -> f64 {
        check_dim(self.dim, x);
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|j| self.component_term(j, x))
            .collect();
        log_sum_exp(&terms)
    }

    fn grad_log_unnorm(&self, x: ArrayView1<f64>) -> Array1<f64> {
        check_dim(self.dim, x);
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|j| self.component_term(j, x))
            .collect();
        let lse = log_sum_exp(&terms);
        let mut g = Array1::zeros(self.dim);
        for j in 0..self.weights.len() {
            if terms[j] == f64::NEG_INFINITY {
                continue;
            }
            let resp = (terms[j] - lse).exp();
            for k in 0..self.dim {
                g[k] += resp * (self.means[j][k] - x[k]) / self.vars[j][k];
            }
        }
        g
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// P(N(0,1) > z).
fn normal_sf(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().sf(z)
}

/// P(chi'^2_df(lambda) <= y): Poisson mixture of central chi-square CDFs.
fn noncentral_chisq_cdf(df: f64, lambda: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if lambda < 1e-12 {
        return gamma_lr(0.5 * df, 0.5 * y);
    }
    let half = 0.5 * lambda;
    let ln_half = half.ln();
    let max_k = (half + 12.0 * half.sqrt() + 60.0).ceil() as usize;
    let mut acc = 0.0;
    let mut cum = 0.0;
    for k in 0..=max_k {
        let kf = k as f64;
        let w = (-half + kf * ln_half - ln_gamma(kf + 1.0)).exp();
        cum += w;
        acc += w * gamma_lr(0.5 * df + kf, 0.5 * y);
        if cum > 1.0 - 1e-14 && kf > half {
            break;
        }
    }
    acc.min(1.0)
}

/// Bayesian logistic regression: Bernoulli likelihood with a zero-mean
/// isotropic Gaussian prior over weights and bias. The parameter vector is
/// `[w_0 .. w_{d_f-1}, b]`.
#[derive(Debug, Clone)]
pub struct LogisticRegressionTarget {
    features: Array2<f64>,
    labels: Array1<f64>,
    prior_std: f64,
}

impl LogisticRegressionTarget {
    pub fn new(features: Array2<f64>, labels: Array1<f64>, prior_std: f64) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Config(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
            return Err(Error::Config("labels must be 0 or 1".into()));
        }
        if !(prior_std > 0.0) || !prior_std.is_finite() {
            return Err(Error::Config(format!(
                "prior_std must be positive and finite, got {prior_std}"
            )));
        }
        Ok(Self {
            features,
            labels,
            prior_std,
        })
    }

    pub fn n_data(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    /// sigma(w.f_i + b) for every data row, at parameter vector `x`.
    pub fn predict_probs(&self, x: ArrayView1<f64>) -> Array1<f64> {
        check_dim(self.dimension(), x);
        let d_f = self.features.ncols();
        let mut p = Array1::zeros(self.features.nrows());
        for i in 0..self.features.nrows() {
            let mut z = x[d_f];
            for k in 0..d_f {
                z += x[k] * self.features[[i, k]];
            }
            p[i] = sigmoid(z);
        }
        p
    }
}

impl TargetDensity for LogisticRegressionTarget {
    fn dimension(&self) -> usize {
        self.features.ncols() + 1
    }

    fn log_unnorm(&self, x: ArrayView1<f64>) -> f64 {
        check_dim(self.dimension(), x);
        let d_f = self.features.ncols();
        let d = self.dimension() as f64;
        let var = self.prior_std * self.prior_std;
        let mut ll = 0.0;
        for i in 0..self.features.nrows() {
            let mut z = x[d_f];
            for k in 0..d_f {
                z += x[k] * self.features[[i, k]];
            }
            // y*ln(sigma(z)) + (1-y)*ln(1-sigma(z)), kept in softplus form
            ll -= self.labels[i] * softplus(-z) + (1.0 - self.labels[i]) * softplus(z);
        }
        let quad: f64 = x.iter().map(|v| v * v).sum();
        ll - 0.5 * quad / var - 0.5 * d * (LN_2PI + var.ln())
    }

    fn grad_log_unnorm(&self, x: ArrayView1<f64>) -> Array1<f64> {
        check_dim(self.dimension(), x);
        let d_f = self.features.ncols();
        let var = self.prior_std * self.prior_std;
        let mut g = Array1::zeros(self.dimension());
        for i in 0..self.features.nrows() {
            let mut z = x[d_f];
            for k in 0..d_f {
                z += x[k] * self.features[[i, k]];
            }
            let resid = self.labels[i] - sigmoid(z);
            for k in 0..d_f {
                g[k] += resid * self.features[[i, k]];
            }
            g[d_f] += resid;
        }
        for k in 0..self.dimension() {
            g[k] -= x[k] / var;
        }
        g
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow for |z| up to the f64 range.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Load a dataset: UTF-8 CSV with a header row, numeric feature columns,
/// and a final integer label column in {0, 1}.
///
/// With `standardize`, each feature column is shifted and scaled to zero
/// mean and unit variance; constant columns become all zeros. Row/column
/// numbers in errors are 1-based and count the header row.
pub fn load_dataset_csv(path: &Path, standardize: bool) -> Result<(Array2<f64>, Array1<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |row: usize, col: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty dataset", path.display())))?;
    let n_cols = header.split(',').count();
    if n_cols < 2 {
        return Err(Error::Config(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut n_rows = 0;
    for (row, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(parse_err(
                row,
                cells.len().min(n_cols),
                format!("expected {n_cols} columns, found {}", cells.len()),
            ));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(row, c + 1, format!("not a number: {:?}", cell.trim()))
            })?;
            if c + 1 < n_cols {
                features.push(v);
            } else {
                if v != 0.0 && v != 1.0 {
                    return Err(parse_err(row, c + 1, format!("label must be 0 or 1, got {v}")));
                }
                labels.push(v);
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::Config(format!(
            "{}: dataset has a header but no data rows",
            path.display()
        )));
    }

    let mut features = Array2::from_shape_vec((n_rows, n_cols - 1), features)
        .expect("row-major feature buffer matches its dimensions");
    if standardize {
        for mut col in features.columns_mut() {
            let mean = col.sum() / n_rows as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_rows as f64;
            if var > 0.0 {
                let inv = 1.0 / var.sqrt();
                col.mapv_inplace(|v| (v - mean) * inv);
            } else {
                col.fill(0.0);
            }
        }
    }
    Ok((features, Array1::from_vec(labels)))
}
