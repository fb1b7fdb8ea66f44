//! Analytic ground truth for testing the transport machinery.
//!
//! For Gaussian endpoints and the plain log-weighted path (alpha = 0,
//! beta = 1) every intermediate law is Gaussian with closed-form moments,
//! so the exact transport field, the expectation of the path's time
//! derivative, and the flow map are all available in closed form. The
//! module also houses the generic finite-difference comparators used by
//! property tests and the verification battery.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::MlpVectorField;
use crate::lws::GuidePath;

const LN_2PI: f64 = 1.8378770664093453;

/// Gaussian-to-Gaussian log-weighted path (1D, no shrinkage):
/// p0 = N(0, sigma0^2), target = N(mu1, sigma1^2). The time-t law is
/// N(m_t, s_t^2) with precision tau_t = (1-t)/sigma0^2 + t/sigma1^2 and
/// mean m_t = (t * mu1 / sigma1^2) / tau_t.
#[derive(Debug, Clone)]
pub struct GaussianPathOracle {
    sigma0: f64,
    mu1: f64,
    sigma1: f64,
}

impl GaussianPathOracle {
    pub fn new(sigma0: f64, mu1: f64, sigma1: f64) -> Result<Self> {
        if !(sigma0 > 0.0) || !(sigma1 > 0.0) || !mu1.is_finite() {
            return Err(Error::Config(
                "oracle needs positive stds and a finite target mean".into(),
            ));
        }
        Ok(Self { sigma0, mu1, sigma1 })
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    fn tau(&self, t: f64) -> f64 {
        (1.0 - t) / (self.sigma0 * self.sigma0) + t / (self.sigma1 * self.sigma1)
    }

    fn tau_dot(&self) -> f64 {
        1.0 / (self.sigma1 * self.sigma1) - 1.0 / (self.sigma0 * self.sigma0)
    }

    /// Intermediate mean and std at time t.
    pub fn moments(&self, t: f64) -> (f64, f64) {
        let tau = self.tau(t);
        let m = t * self.mu1 / (self.sigma1 * self.sigma1) / tau;
        (m, tau.powf(-0.5))
    }

    fn mean_dot(&self, t: f64) -> f64 {
        let tau = self.tau(t);
        let (m, _) = self.moments(t);
        (self.mu1 / (self.sigma1 * self.sigma1) - m * self.tau_dot()) / tau
    }

    fn std_dot(&self, t: f64) -> f64 {
        let tau = self.tau(t);
        -0.5 * tau.powf(-1.5) * self.tau_dot()
    }

    /// Exact transport field: the affine map whose flow pushes the time-t
    /// law along the path.
    pub fn field(&self, x: f64, t: f64) -> f64 {
        let (m, s) = self.moments(t);
        self.std_dot(t) / s * (x - m) + self.mean_dot(t)
    }

    /// Spatial divergence of the exact field (x-independent).
    pub fn field_div(&self, t: f64) -> f64 {
        let (_, s) = self.moments(t);
        self.std_dot(t) / s
    }

    /// E_{p_t}[dt_log_t]: Gaussian expectation of a quadratic, exact.
    pub fn expected_dt_log(&self, t: f64) -> f64 {
        let v0 = self.sigma0 * self.sigma0;
        let v1 = self.sigma1 * self.sigma1;
        // dt_log_t(x) = -ln p0(x) + ln p1(x) = a x^2 + b x + c
        let a = 0.5 / v0 - 0.5 / v1;
        let b = self.mu1 / v1;
        let c = -0.5 * self.mu1 * self.mu1 / v1 + 0.5 * (v0.ln() - v1.ln());
        let (m, s) = self.moments(t);
        a * (m * m + s * s) + b * m + c
    }

    /// Exact flow map from time 0 to time t.
    pub fn exact_map(&self, x0: f64, t: f64) -> f64 {
        let (m, s) = self.moments(t);
        s / self.sigma0 * x0 + m
    }

    /// Direct draws from the time-t law.
    pub fn sample_pt(&self, t: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let (m, s) = self.moments(t);
        (0..n)
            .map(|_| m + s * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect()
    }
}

impl GuidePath for GaussianPathOracle {
    fn dimension(&self) -> usize {
        1
    }

    fn log_t(&self, x: ArrayView1<f64>, t: f64) -> f64 {
        assert_eq!(x.len(), 1, "oracle path is one-dimensional");
        let v0 = self.sigma0 * self.sigma0;
        let v1 = self.sigma1 * self.sigma1;
        let x = x[0];
        let lp0 = -0.5 * x * x / v0 - 0.5 * (LN_2PI + v0.ln());
        let d = x - self.mu1;
        let lp1 = -0.5 * d * d / v1 - 0.5 * (LN_2PI + v1.ln());
        (1.0 - t) * lp0 + t * lp1
    }

    fn grad_log_t(&self, x: ArrayView1<f64>, t: f64) -> Array1<f64> {
        assert_eq!(x.len(), 1, "oracle path is one-dimensional");
        let x = x[0];
        let g = -self.tau(t) * x + t * self.mu1 / (self.sigma1 * self.sigma1);
        Array1::from_vec(vec![g])
    }

    fn dt_log_t(&self, x: ArrayView1<f64>, t: f64) -> f64 {
        assert_eq!(x.len(), 1, "oracle path is one-dimensional");
        let _ = t;
        let v0 = self.sigma0 * self.sigma0;
        let v1 = self.sigma1 * self.sigma1;
        let x = x[0];
        let d = x - self.mu1;
        (0.5 * x * x / v0 + 0.5 * (LN_2PI + v0.ln())) - (0.5 * d * d / v1 + 0.5 * (LN_2PI + v1.ln()))
    }
}

/// A time-indexed 1D vector field with a known divergence, as needed by
/// the residual identity check.
pub trait FlowField1d {
    fn value(&self, x: f64, t: f64) -> f64;
    fn divergence(&self, x: f64, t: f64) -> f64;
}

/// The oracle's own exact field.
pub struct OracleField<'a>(pub &'a GaussianPathOracle);

impl FlowField1d for OracleField<'_> {
    fn value(&self, x: f64, t: f64) -> f64 {
        self.0.field(x, t)
    }
    fn divergence(&self, _x: f64, t: f64) -> f64 {
        self.0.field_div(t)
    }
}

/// A field plus a constant offset; the divergence is untouched, so this
/// is a pure transport error of known size.
pub struct OffsetField<F: FlowField1d>(pub F, pub f64);

impl<F: FlowField1d> FlowField1d for OffsetField<F> {
    fn value(&self, x: f64, t: f64) -> f64 {
        self.0.value(x, t) + self.1
    }
    fn divergence(&self, x: f64, t: f64) -> f64 {
        self.0.divergence(x, t)
    }
}

pub struct ZeroField;

impl FlowField1d for ZeroField {
    fn value(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn divergence(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// A trained 1D network, viewed as a (time-independent) flow field.
impl FlowField1d for MlpVectorField {
    fn value(&self, x: f64, _t: f64) -> f64 {
        self.evaluate(ArrayView1::from(&[x]))[0]
    }
    fn divergence(&self, x: f64, _t: f64) -> f64 {
        MlpVectorField::divergence(self, ArrayView1::from(&[x]))
    }
}

/// Maximum violation of the pointwise transport identity
/// `residual(x, field) = E_{p_t}[dt_log_t]` over an (x, t) grid with `nx`
/// spatial points and `nt` times. Zero (to machine precision) exactly when
/// the field solves the continuity equation for the oracle path.
pub fn residual_identity_check(
    oracle: &GaussianPathOracle,
    field: &dyn FlowField1d,
    nx: usize,
    nt: usize,
) -> f64 {
    let spread = 4.0 * oracle.sigma0.max(oracle.sigma1);
    let lo = 0.0f64.min(oracle.mu1) - spread;
    let hi = 0.0f64.max(oracle.mu1) + spread;
    let mut worst = 0.0f64;
    for i in 0..nt {
        let t = i as f64 / (nt - 1) as f64;
        let expected = oracle.expected_dt_log(t);
        for j in 0..nx {
            let x = lo + (hi - lo) * j as f64 / (nx - 1) as f64;
            let xs = [x];
            let xv = ArrayView1::from(&xs);
            let r = oracle.dt_log_t(xv, t)
                + oracle.grad_log_t(xv, t)[0] * field.value(x, t)
                + field.divergence(x, t);
            worst = worst.max((r - expected).abs());
        }
    }
    worst
}

/// Relative error between an analytic gradient and central finite
/// differences of `f` at `x`: max over coordinates of
/// |analytic - numeric| / (1 + |analytic|). The step is scaled per
/// coordinate by (1 + |x_i|).
pub fn fd_check(
    f: &dyn Fn(ArrayView1<f64>) -> f64,
    analytic: ArrayView1<f64>,
    x: ArrayView1<f64>,
    step: f64,
) -> f64 {
    assert_eq!(analytic.len(), x.len(), "gradient and point dimensions differ");
    let mut worst = 0.0f64;
    let mut probe = x.to_owned();
    for k in 0..x.len() {
        let h = step * (1.0 + x[k].abs());
        probe[k] = x[k] + h;
        let up = f(probe.view());
        probe[k] = x[k] - h;
        let down = f(probe.view());
        probe[k] = x[k];
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[k] - numeric).abs() / (1.0 + analytic[k].abs());
        worst = worst.max(err);
    }
    worst
}

/// Same comparison for a scalar time derivative on a bounded domain.
/// Interior points use a central stencil; near `lo`/`hi` a second-order
/// one-sided stencil takes over.
pub fn fd_check_time(
    f: &dyn Fn(f64) -> f64,
    analytic: f64,
    t: f64,
    step: f64,
    (lo, hi): (f64, f64),
) -> f64 {
    let numeric = if t - step >= lo && t + step <= hi {
        (f(t + step) - f(t - step)) / (2.0 * step)
    } else if t + 2.0 * step <= hi {
        (-3.0 * f(t) + 4.0 * f(t + step) - f(t + 2.0 * step)) / (2.0 * step)
    } else {
        (3.0 * f(t) - 4.0 * f(t - step) + f(t - 2.0 * step)) / (2.0 * step)
    };
    (analytic - numeric).abs() / (1.0 + analytic.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lws::LwsPath;
    use crate::targets::{IsotropicGaussian, TargetDensity};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moments_hit_both_endpoints() {
        let o = GaussianPathOracle::new(2.0, 3.0, 0.8).unwrap();
        let (m0, s0) = o.moments(0.0);
        assert!((m0, s0) == (0.0, 2.0) || ((m0).abs() < 1e-15 && (s0 - 2.0).abs() < 1e-15));
        let (m1, s1) = o.moments(1.0);
        assert!((m1 - 3.0).abs() < 1e-12);
        assert!((s1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_path_has_zero_field() {
        let o = GaussianPathOracle::new(1.0, 0.0, 1.0).unwrap();
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            for x in [-3.0, 0.0, 1.7] {
                assert!(o.field(x, t).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pure_shift_field_is_constant() {
        let o = GaussianPathOracle::new(1.0, 4.0, 1.0).unwrap();
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            for x in [-2.0, 0.0, 3.5] {
                assert!((o.field(x, t) - 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_identity_holds_for_exact_field() {
        for (s0, m1, s1) in [(2.0, 0.0, 1.0), (1.0, 4.0, 1.0), (1.5, -2.0, 0.6)] {
            let o = GaussianPathOracle::new(s0, m1, s1).unwrap();
            let v = residual_identity_check(&o, &OracleField(&o), 50, 50);
            assert!(v < 1e-8, "({s0},{m1},{s1}): violation {v}");
        }
    }

    #[test]
    fn residual_identity_rejects_perturbed_and_zero_fields() {
        let o = GaussianPathOracle::new(2.0, 1.0, 1.0).unwrap();
        let v = residual_identity_check(&o, &OffsetField(OracleField(&o), 0.1), 50, 50);
        assert!(v >= 0.05, "perturbation not detected: {v}");
        let z = residual_identity_check(&o, &ZeroField, 50, 50);
        assert!(z > 0.0);
    }

    #[test]
    fn oracle_agrees_with_the_generic_path() {
        // The oracle's closed forms and the generic log-weighted path must
        // describe the same object at alpha=0, beta=1.
        let o = GaussianPathOracle::new(2.0, 3.0, 0.8).unwrap();
        let p0 = IsotropicGaussian::univariate(0.0, 2.0).unwrap();
        let target = IsotropicGaussian::univariate(3.0, 0.8).unwrap();
        let path = LwsPath::new(p0, Box::new(target), 0.0, 1.0).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            use rand::Rng;
            let x = array![12.0 * (r.gen::<f64>() - 0.5)];
            let t = r.gen::<f64>();
            assert!((o.log_t(x.view(), t) - path.log_t(x.view(), t)).abs() < 1e-10);
            assert!((o.grad_log_t(x.view(), t)[0] - path.grad_log_t(x.view(), t)[0]).abs() < 1e-10);
            assert!((o.dt_log_t(x.view(), t) - path.dt_log_t(x.view(), t)).abs() < 1e-10);
        }
    }

    #[test]
    fn intermediate_law_matches_its_own_density() {
        // N(m_t, s_t^2) must be (up to a constant in x) what log_t says.
        let o = GaussianPathOracle::new(1.5, -2.0, 0.6).unwrap();
        for t in [0.0, 0.3, 0.71, 1.0] {
            let (m, s) = o.moments(t);
            let g = IsotropicGaussian::univariate(m, s).unwrap();
            let at = |x: f64| o.log_t(array![x].view(), t) - g.log_unnorm(array![x].view());
            let c = at(0.0);
            for x in [-4.0, -1.0, 0.5, 2.0, 6.0] {
                assert!((at(x) - c).abs() < 1e-9, "t={t}, x={x}");
            }
        }
    }

    #[test]
    fn exact_map_transports_samples_to_the_right_moments() {
        let o = GaussianPathOracle::new(2.0, 3.0, 0.8).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let n = 200_000;
        let x0 = o.sample_pt(0.0, n, &mut r);
        for t in [0.25, 0.6, 1.0] {
            let (m, s) = o.moments(t);
            let mapped: Vec<f64> = x0.iter().map(|&x| o.exact_map(x, t)).collect();
            let mean = mapped.iter().sum::<f64>() / n as f64;
            let var = mapped.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            assert!((mean - m).abs() < 4.0 * s / (n as f64).sqrt() + 1e-3);
            assert!((var - s * s).abs() < 0.02 * s * s);
        }
    }

    #[test]
    fn fd_check_on_linear_and_quadratic_functions() {
        let linear = |x: ArrayView1<f64>| 3.0 * x[0] - 2.0 * x[1];
        let g = array![3.0, -2.0];
        let x = array![0.4, -1.1];
        assert!(fd_check(&linear, g.view(), x.view(), 1e-5) < 1e-10);

        let quad = |x: ArrayView1<f64>| x[0] * x[0] + 0.5 * x[1] * x[1];
        let gq = array![2.0 * 0.4, -1.1];
        assert!(fd_check(&quad, gq.view(), x.view(), 1e-5) < 1e-8);
    }

    #[test]
    fn fd_check_detects_a_doubled_gradient() {
        let f = |x: ArrayView1<f64>| 100.0 * x[0];
        let wrong = array![200.0];
        let err = fd_check(&f, wrong.view(), array![0.3].view(), 1e-5);
        assert!((err - 0.5).abs() < 0.01, "got {err}");
    }
}
