//! Experiment scoring.
//!
//! Mode-capture scores, count-in-ball weight recovery, the 1D Wasserstein
//! distance through sorted quantiles, a Gaussian KDE for plot emission,
//! binary calibration metrics, and a small energy-distance two-sample test
//! used internally to compare particle clouds.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::Result;
use crate::samplers::particle_rng;
use crate::targets::GaussianMixture;

/// Fraction of samples strictly above `threshold` (mode-discovery score).
pub fn score1(samples: &[f64], threshold: f64) -> f64 {
    assert!(!samples.is_empty(), "score needs at least one sample");
    samples.iter().filter(|x| **x > threshold).count() as f64 / samples.len() as f64
}

/// Fraction of samples strictly below `threshold` (false-mode score).
pub fn score2(samples: &[f64], threshold: f64) -> f64 {
    assert!(!samples.is_empty(), "score needs at least one sample");
    samples.iter().filter(|x| **x < threshold).count() as f64 / samples.len() as f64
}

/// Mode centers with their exact probabilities under the target, used for
/// count-in-ball weight estimation.
#[derive(Debug, Clone)]
pub struct ModeSpec {
    centers: Vec<Array1<f64>>,
    radius: f64,
    true_weights: Vec<f64>,
}

impl ModeSpec {
    pub fn new(centers: Vec<Array1<f64>>, radius: f64, true_weights: Vec<f64>) -> Self {
        assert_eq!(centers.len(), true_weights.len(), "one weight per center");
        assert!(radius > 0.0, "mode radius must be positive");
        let total: f64 = true_weights.iter().sum();
        assert!(
            total <= 1.0 + 1e-9,
            "true mode weights cannot exceed total probability"
        );
        Self {
            centers,
            radius,
            true_weights,
        }
    }

    /// Build the spec from a mixture, computing each true weight as the
    /// exact probability of the radius-ball around the component mean.
    pub fn from_mixture(gmm: &GaussianMixture, radius: f64) -> Result<Self> {
        let mut centers = Vec::new();
        let mut weights = Vec::new();
        for j in 0..gmm.n_components() {
            let c = gmm.component_mean(j).to_owned();
            weights.push(gmm.ball_prob(c.view(), radius)?);
            centers.push(c);
        }
        Ok(Self::new(centers, radius, weights))
    }

    pub fn true_weights(&self) -> &[f64] {
        &self.true_weights
    }

    /// Count-in-ball weight estimates for a sample cloud.
    pub fn estimate_weights(&self, samples: &Array2<f64>) -> Vec<f64> {
        let n = samples.nrows();
        assert!(n > 0, "weight estimation needs samples");
        self.centers
            .iter()
            .map(|c| {
                let mut hits = 0usize;
                for i in 0..n {
                    let mut d2 = 0.0;
                    for k in 0..c.len() {
                        let z = samples[[i, k]] - c[k];
                        d2 += z * z;
                    }
                    if d2.sqrt() < self.radius {
                        hits += 1;
                    }
                }
                hits as f64 / n as f64
            })
            .collect()
    }
}

/// Euclidean norm of the gap between count-in-ball weight estimates and the
/// true mode probabilities.
pub fn weight_mismatch(samples: &Array2<f64>, modes: &ModeSpec) -> f64 {
    let est = modes.estimate_weights(samples);
    est.iter()
        .zip(modes.true_weights())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Empirical q-Wasserstein distance between two 1D samples.
///
/// Equal sizes reduce to the sorted-coupling form
/// `((1/N) sum |a_(i) - b_(i)|^q)^(1/q)`; unequal sizes evaluate linearly
/// interpolated quantile functions at `max(len a, len b)` midpoints, which
/// keeps the result deterministic.
pub fn wasserstein_1d(a: &[f64], b: &[f64], q: f64) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "distance needs samples on both sides");
    assert!(q >= 1.0, "order must satisfy q >= 1");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let m = xs.len().max(ys.len());
    let quantile = |sorted: &[f64], p: f64| -> f64 {
        // Midpoint convention: order statistic i sits at p = (i + 0.5)/n.
        let h = p * sorted.len() as f64 - 0.5;
        if h <= 0.0 {
            return sorted[0];
        }
        let hi = sorted.len() - 1;
        if h >= hi as f64 {
            return sorted[hi];
        }
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    };
    let mut acc = 0.0;
    for k in 0..m {
        let p = (k as f64 + 0.5) / m as f64;
        acc += (quantile(&xs, p) - quantile(&ys, p)).abs().powf(q);
    }
    (acc / m as f64).powf(1.0 / q)
}

/// Gaussian KDE on a fixed grid. `bandwidth = None` applies Silverman's
/// rule `0.9 * min(std, iqr/1.34) * n^(-1/5)`, falling back to 1 when the
/// sample has no spread.
pub fn density_estimate(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Vec<f64> {
    assert!(!samples.is_empty(), "density estimation needs samples");
    let n = samples.len() as f64;
    let h = bandwidth.unwrap_or_else(|| {
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(|u, v| u.partial_cmp(v).unwrap());
        let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
        let iqr = q(0.75) - q(0.25);
        let spread = var.sqrt().min(iqr / 1.34);
        let silverman = 0.9 * spread * n.powf(-0.2);
        if silverman > 0.0 {
            silverman
        } else {
            1.0
        }
    });
    assert!(h > 0.0, "bandwidth must be positive");
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| {
            norm * samples
                .iter()
                .map(|&x| (-0.5 * ((g - x) / h) * ((g - x) / h)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// Binary calibration summary for an ensemble of probabilistic predictors.
#[derive(Debug, Clone, Copy)]
pub struct Calibration {
    pub ece: f64,
    pub acc: f64,
    pub nll: f64,
}

/// `probs` holds one row per data point and one column per ensemble member
/// (posterior particle); the ensemble prediction is the row mean. ECE uses
/// `bins` equal-width confidence bins over max(p, 1-p), accuracy thresholds
/// the mean probability at 0.5, and NLL is the mean negative log predictive
/// probability of the observed label.
pub fn calibration_metrics(probs: &Array2<f64>, labels: ArrayView1<f64>, bins: usize) -> Calibration {
    let n = probs.nrows();
    assert_eq!(n, labels.len(), "one label per prediction row");
    assert!(n > 0, "calibration needs predictions");
    assert!(bins > 0, "calibration needs at least one bin");
    assert!(
        probs.iter().all(|p| (0.0..=1.0).contains(p)),
        "probabilities must lie in [0, 1]"
    );

    let mut bin_count = vec![0usize; bins];
    let mut bin_conf = vec![0.0; bins];
    let mut bin_acc = vec![0.0; bins];
    let mut correct = 0usize;
    let mut nll = 0.0;
    for i in 0..n {
        let p = probs.row(i).sum() / probs.ncols() as f64;
        let predicted = if p >= 0.5 { 1.0 } else { 0.0 };
        let conf = if predicted == 1.0 { p } else { 1.0 - p };
        let hit = predicted == labels[i];
        correct += hit as usize;
        let p_label = if labels[i] == 1.0 { p } else { 1.0 - p };
        nll -= p_label.max(1e-300).ln();
        let b = ((conf * bins as f64) as usize).min(bins - 1);
        bin_count[b] += 1;
        bin_conf[b] += conf;
        bin_acc[b] += hit as usize as f64;
    }
    let mut ece = 0.0;
    for b in 0..bins {
        if bin_count[b] == 0 {
            continue;
        }
        let w = bin_count[b] as f64 / n as f64;
        let conf = bin_conf[b] / bin_count[b] as f64;
        let acc = bin_acc[b] / bin_count[b] as f64;
        ece += w * (acc - conf).abs();
    }
    Calibration {
        ece,
        acc: correct as f64 / n as f64,
        nll: nll / n as f64,
    }
}

/// Energy distance `2 E||X-Y|| - E||X-X'|| - E||Y-Y'||` between two sample
/// clouds of equal dimension.
pub fn energy_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.ncols(), b.ncols(), "clouds must share a dimension");
    let cross = mean_pair_dist(a, b);
    let within_a = mean_self_dist(a);
    let within_b = mean_self_dist(b);
    2.0 * cross - within_a - within_b
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_pair_dist(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            acc += dist(a.row(i), b.row(j));
        }
    }
    acc / (a.nrows() * b.nrows()) as f64
}

fn mean_self_dist(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += dist(a.row(i), a.row(j));
        }
    }
    2.0 * acc / (n * n) as f64
}

/// Permutation p-value for the hypothesis that two clouds share a law,
/// using the energy statistic. Deterministic given the seed.
pub fn energy_distance_pvalue(a: &Array2<f64>, b: &Array2<f64>, permutations: usize, seed: u64) -> f64 {
    let observed = energy_distance(a, b);
    let n_a = a.nrows();
    let mut pool = Vec::with_capacity(n_a + b.nrows());
    for i in 0..a.nrows() {
        pool.push(a.row(i).to_owned());
    }
    for i in 0..b.nrows() {
        pool.push(b.row(i).to_owned());
    }
    let mut at_least = 1usize; // the observed split counts
    for p in 0..permutations {
        let mut rng = particle_rng(seed, p as u64, 0);
        // Fisher-Yates over the pooled indices.
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let left = Array2::from_shape_fn((n_a, a.ncols()), |(i, k)| pool[idx[i]][k]);
        let right =
            Array2::from_shape_fn((pool.len() - n_a, a.ncols()), |(i, k)| pool[idx[n_a + i]][k]);
        if energy_distance(&left, &right) >= observed {
            at_least += 1;
        }
    }
    at_least as f64 / (permutations + 1) as f64
}
