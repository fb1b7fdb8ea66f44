//! Guided density paths.
//!
//! A [`GuidePath`] is a family of unnormalized log densities indexed by
//! t in [0, 1], together with its spatial gradient and time derivative.
//! The concrete implementation here is the log-weighted shrinkage (LwS)
//! path: a log-linear blend of the endpoint densities whose arguments are
//! rescaled over time, spreading the initial distribution (alpha) and
//! shrinking the target toward the origin (beta) so early intermediate
//! distributions already overlap distant target modes.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::targets::{IsotropicGaussian, TargetDensity};

/// A partition-free density path on t in [0, 1].
///
/// `grad_log_t` and `dt_log_t` must be the exact derivatives of `log_t`;
/// the verification suite checks both against finite differences.
pub trait GuidePath: Send + Sync {
    fn dimension(&self) -> usize;
    /// Unnormalized log density at time `t`.
    fn log_t(&self, x: ArrayView1<f64>, t: f64) -> f64;
    /// Spatial gradient of `log_t`.
    fn grad_log_t(&self, x: ArrayView1<f64>, t: f64) -> Array1<f64>;
    /// Time derivative of `log_t`.
    fn dt_log_t(&self, x: ArrayView1<f64>, t: f64) -> f64;
}

fn check_time(t: f64) {
    assert!((0.0..=1.0).contains(&t), "path time must lie in [0, 1], got {t}");
}

/// Log-weighted shrinkage path between an isotropic Gaussian and a target:
///
/// ```text
/// log_t(x) = (1-t) * ln p0((1 - alpha*t) x) + t * ln target(x / (beta + (1-beta) t))
/// ```
///
/// with alpha in [0, 1] and beta in (0, 1]. At t=0 this is exactly ln p0,
/// at t=1 exactly the target's unnormalized log density.
pub struct LwsPath {
    p0: IsotropicGaussian,
    target: Box<dyn TargetDensity>,
    alpha: f64,
    beta: f64,
}

impl LwsPath {
    pub fn new(
        p0: IsotropicGaussian,
        target: Box<dyn TargetDensity>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {beta}")));
        }
        if p0.dimension() != target.dimension() {
            return Err(Error::Config(format!(
                "initial distribution is {}-dimensional but target is {}-dimensional",
                p0.dimension(),
                target.dimension()
            )));
        }
        Ok(Self {
            p0,
            target,
            alpha,
            beta,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn initial(&self) -> &IsotropicGaussian {
        &self.p0
    }

    pub fn target(&self) -> &dyn TargetDensity {
        self.target.as_ref()
    }

    /// Argument scales at time t: `1 - alpha*t` for the initial term and
    /// `beta + (1-beta)*t` for the target term. The latter is monotone
    /// nondecreasing in t and stays inside [beta, 1].
    pub fn scales(&self, t: f64) -> (f64, f64) {
        (1.0 - self.alpha * t, self.beta + (1.0 - self.beta) * t)
    }
}

impl GuidePath for LwsPath {
    fn dimension(&self) -> usize {
        self.p0.dimension()
    }

    fn log_t(&self, x: ArrayView1<f64>, t: f64) -> f64 {
        check_time(t);
        let (sa, sb) = self.scales(t);
        let xa = x.mapv(|v| sa * v);
        let xb = x.mapv(|v| v / sb);
        (1.0 - t) * self.p0.log_unnorm(xa.view()) + t * self.target.log_unnorm(xb.view())
    }

    fn grad_log_t(&self, x: ArrayView1<f64>, t: f64) -> Array1<f64> {
        check_time(t);
        let (sa, sb) = self.scales(t);
        let xa = x.mapv(|v| sa * v);
        let xb = x.mapv(|v| v / sb);
        let ga = self.p0.grad_log_unnorm(xa.view());
        let gb = self.target.grad_log_unnorm(xb.view());
        let ca = (1.0 - t) * sa;
        let cb = t / sb;
        let mut g = Array1::zeros(x.len());
        for k in 0..x.len() {
            g[k] = ca * ga[k] + cb * gb[k];
        }
        g
    }

    fn dt_log_t(&self, x: ArrayView1<f64>, t: f64) -> f64 {
        check_time(t);
        let (sa, sb) = self.scales(t);
        let xa = x.mapv(|v| sa * v);
        let xb = x.mapv(|v| v / sb);
        let ga = self.p0.grad_log_unnorm(xa.view());
        let gb = self.target.grad_log_unnorm(xb.view());
        let x_dot_ga: f64 = x.iter().zip(ga.iter()).map(|(a, b)| a * b).sum();
        let x_dot_gb: f64 = x.iter().zip(gb.iter()).map(|(a, b)| a * b).sum();
        -self.p0.log_unnorm(xa.view()) + self.target.log_unnorm(xb.view())
            - self.alpha * (1.0 - t) * x_dot_ga
            - (1.0 - self.beta) * t * x_dot_gb / (sb * sb)
    }
}

/// Normalized density slices of a 1D path on a regular (x, t) grid. Each
/// time slice is rescaled to unit sum, which is all a plot needs.
pub struct PathGrid {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    /// `densities[i][j]` is the mass at `(ts[i], xs[j])`.
    pub densities: Vec<Vec<f64>>,
}

impl PathGrid {
    /// One row per grid cell: `t,x,density`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,density")?;
        for (i, t) in self.ts.iter().enumerate() {
            for (j, x) in self.xs.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{}",
                    crate::record::fmt_f64(*t),
                    crate::record::fmt_f64(*x),
                    crate::record::fmt_f64(self.densities[i][j])
                )?;
            }
        }
        Ok(())
    }

    /// Fraction of a slice's mass strictly above `threshold`.
    pub fn mass_above(&self, slice: usize, threshold: f64) -> f64 {
        self.xs
            .iter()
            .zip(&self.densities[slice])
            .filter(|(x, _)| **x > threshold)
            .map(|(_, d)| d)
            .sum()
    }

    /// Number of strict interior local maxima in a slice.
    pub fn local_maxima(&self, slice: usize) -> usize {
        let d = &self.densities[slice];
        (1..d.len() - 1)
            .filter(|&j| d[j] > d[j - 1] && d[j] > d[j + 1])
            .count()
    }
}

/// Evaluate exp(log_t) of a 1D path on `nx` equally spaced points over
/// `[x_min, x_max]` at `nt` equally spaced times over [0, 1].
pub fn path_grid(path: &LwsPath, x_min: f64, x_max: f64, nx: usize, nt: usize) -> Result<PathGrid> {
    if path.dimension() != 1 {
        return Err(Error::Unsupported(
            "density grids are only available for 1D paths".into(),
        ));
    }
    if nx < 2 || nt < 2 || !(x_max > x_min) {
        return Err(Error::Config("grid needs nx >= 2, nt >= 2 and x_max > x_min".into()));
    }
    let xs: Vec<f64> = (0..nx)
        .map(|j| x_min + (x_max - x_min) * j as f64 / (nx - 1) as f64)
        .collect();
    let ts: Vec<f64> = (0..nt).map(|i| i as f64 / (nt - 1) as f64).collect();
    let mut densities = Vec::with_capacity(nt);
    for &t in &ts {
        let logs: Vec<f64> = xs
            .iter()
            .map(|&x| path.log_t(ArrayView1::from(&[x]), t))
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut slice: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = slice.iter().sum();
        slice.iter_mut().for_each(|v| *v /= total);
        densities.push(slice);
    }
    Ok(PathGrid { ts, xs, densities })
}
