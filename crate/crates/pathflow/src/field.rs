//! The learned transport field.
//!
//! One hidden layer, sigmoid activation:
//! `phi(x) = W2 sigmoid(W1 x + b1) + b2`. This shape is fixed because it
//! admits a closed-form divergence, `trace(W2 diag(h*(1-h)) W1)` with
//! `h = sigmoid(W1 x + b1)`, so the training residual never needs
//! autodiff or stochastic divergence estimates. Parameter gradients of the
//! residual loss are likewise written out by hand.
//!
//! The network does not take t as an input: it is a snapshot of the field
//! at one path time, re-trained (warm-started) as time advances.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::lws::GuidePath;
use crate::targets::sigmoid;

/// One-hidden-layer vector field R^d -> R^d with `hidden` sigmoid units.
#[derive(Debug, Clone)]
pub struct MlpVectorField {
    w1: Array2<f64>, // hidden x dim
    b1: Array1<f64>, // hidden
    w2: Array2<f64>, // dim x hidden
    b2: Array1<f64>, // dim
}

impl MlpVectorField {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        assert!(dim > 0 && hidden > 0, "field needs positive dimensions");
        Self {
            w1: Array2::zeros((hidden, dim)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((dim, hidden)),
            b2: Array1::zeros(dim),
        }
    }

    /// All parameters drawn uniformly from [-scale, scale].
    pub fn random(dim: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut f = Self::zeros(dim, hidden);
        let mut draw = |_: &f64| scale * (2.0 * rng.gen::<f64>() - 1.0);
        f.w1.mapv_inplace(|v| draw(&v));
        f.b1.mapv_inplace(|v| draw(&v));
        f.w2.mapv_inplace(|v| draw(&v));
        f.b2.mapv_inplace(|v| draw(&v));
        f
    }

    pub fn from_parts(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Self {
        let (h, d) = w1.dim();
        assert_eq!(b1.len(), h, "b1 length must match the hidden width");
        assert_eq!(w2.dim(), (d, h), "w2 must be dim x hidden");
        assert_eq!(b2.len(), d, "b2 length must match the input dimension");
        Self { w1, b1, w2, b2 }
    }

    pub fn dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    fn check_input(&self, x: ArrayView1<f64>) {
        assert_eq!(
            x.len(),
            self.dim(),
            "dimension mismatch: field is {}-dimensional, input is {}-dimensional",
            self.dim(),
            x.len()
        );
    }

    /// Hidden activations sigmoid(W1 x + b1).
    fn hidden_out(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut a = self.w1.dot(&x);
        a += &self.b1;
        a.mapv_inplace(sigmoid);
        a
    }

    /// Forward pass W2 sigmoid(W1 x + b1) + b2.
    pub fn evaluate(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.check_input(x);
        let h = self.hidden_out(x);
        let mut out = self.w2.dot(&h);
        out += &self.b2;
        out
    }

    /// Closed-form divergence: sum_k h_k (1-h_k) * (W1 row_k . W2 col_k).
    /// Costs O(hidden * dim), no finite differences involved.
    pub fn divergence(&self, x: ArrayView1<f64>) -> f64 {
        self.check_input(x);
        let h = self.hidden_out(x);
        let mut div = 0.0;
        for k in 0..self.hidden() {
            let g = h[k] * (1.0 - h[k]);
            let mut c = 0.0;
            for i in 0..self.dim() {
                c += self.w2[[i, k]] * self.w1[[k, i]];
            }
            div += g * c;
        }
        div
    }

    /// Mean Euclidean norm of the field over a set of particle positions.
    pub fn mean_norm(&self, positions: &Array2<f64>) -> f64 {
        let n = positions.nrows();
        assert!(n > 0, "particle ensemble must be non-empty");
        let mut total = 0.0;
        for i in 0..n {
            let v = self.evaluate(positions.row(i));
            total += v.iter().map(|a| a * a).sum::<f64>().sqrt();
        }
        total / n as f64
    }
}

/// Gradient (or momentum buffer) with the same shape as the parameters.
#[derive(Debug, Clone)]
pub struct FieldGradient {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl FieldGradient {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, dim)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((dim, hidden)),
            b2: Array1::zeros(dim),
        }
    }

    fn scale_then_add(&mut self, factor: f64, other: &FieldGradient) {
        self.w1.mapv_inplace(|v| factor * v);
        self.b1.mapv_inplace(|v| factor * v);
        self.w2.mapv_inplace(|v| factor * v);
        self.b2.mapv_inplace(|v| factor * v);
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }
}

/// Pointwise transport residual
/// `r(x, phi) = dt_log_t(x) + grad_log_t(x) . phi(x) + div phi(x)`.
/// Computable from the path and the field alone; no partition function.
pub fn residual(field: &MlpVectorField, path: &dyn GuidePath, x: ArrayView1<f64>, t: f64) -> f64 {
    let phi = field.evaluate(x);
    let grad = path.grad_log_t(x, t);
    let dot: f64 = grad.iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
    path.dt_log_t(x, t) + dot + field.divergence(x)
}

/// Path quantities that stay fixed while the field trains at one time:
/// per-particle grad_log_t rows, dt_log_t values, and their mean.
struct PathTerms {
    grads: Array2<f64>,
    dts: Array1<f64>,
    dt_mean: f64,
}

fn path_terms(path: &dyn GuidePath, positions: &Array2<f64>, t: f64) -> PathTerms {
    let n = positions.nrows();
    assert!(n > 0, "particle ensemble must be non-empty");
    let d = positions.ncols();
    let mut grads = Array2::zeros((n, d));
    let mut dts = Array1::zeros(n);
    for i in 0..n {
        let x = positions.row(i);
        grads.row_mut(i).assign(&path.grad_log_t(x, t));
        dts[i] = path.dt_log_t(x, t);
    }
    // Fixed particle-index summation order keeps the loss reproducible.
    let dt_mean = dts.iter().sum::<f64>() / n as f64;
    PathTerms { grads, dts, dt_mean }
}

fn loss_given_terms(field: &MlpVectorField, positions: &Array2<f64>, terms: &PathTerms) -> f64 {
    let mut total = 0.0;
    for i in 0..positions.nrows() {
        let x = positions.row(i);
        let phi = field.evaluate(x);
        let dot: f64 = terms.grads.row(i).iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
        let rho = terms.dts[i] + dot + field.divergence(x) - terms.dt_mean;
        total += rho * rho;
    }
    total
}

/// Loss and its exact parameter gradient in one pass. The centering term
/// is independent of the parameters, so it only enters through the
/// residual factor.
fn loss_and_grad_given_terms(
    field: &MlpVectorField,
    positions: &Array2<f64>,
    terms: &PathTerms,
) -> (f64, FieldGradient) {
    let n = positions.nrows();
    let d = field.dim();
    let hh = field.hidden();
    let mut grad = FieldGradient::zeros(d, hh);
    let mut total = 0.0;

    // c_k = W1 row_k . W2 col_k is shared by every particle.
    let mut c = Array1::zeros(hh);
    for k in 0..hh {
        let mut acc = 0.0;
        for i in 0..d {
            acc += field.w2[[i, k]] * field.w1[[k, i]];
        }
        c[k] = acc;
    }

    for p in 0..n {
        let x = positions.row(p);
        let s = terms.grads.row(p);

        let mut a = field.w1.dot(&x);
        a += &field.b1;
        let h = a.mapv(sigmoid);
        let g = h.mapv(|v| v * (1.0 - v));

        let mut phi = field.w2.dot(&h);
        phi += &field.b2;

        let s_dot_phi: f64 = s.iter().zip(phi.iter()).map(|(u, v)| u * v).sum();
        let div: f64 = (0..hh).map(|k| g[k] * c[k]).sum();
        let rho = terms.dts[p] + s_dot_phi + div - terms.dt_mean;
        total += rho * rho;
        let coef = 2.0 * rho;

        // v = W2^T s feeds the hidden-layer chain.
        let v = field.w2.t().dot(&s);
        for k in 0..hh {
            let gp = g[k] * (1.0 - 2.0 * h[k]); // d/da of h(1-h)
            let back = coef * (v[k] * g[k] + c[k] * gp);
            grad.b1[k] += back;
            for j in 0..d {
                grad.w1[[k, j]] += back * x[j] + coef * g[k] * field.w2[[j, k]];
            }
        }
        for i in 0..d {
            grad.b2[i] += coef * s[i];
            for k in 0..hh {
                grad.w2[[i, k]] += coef * (s[i] * h[k] + g[k] * field.w1[[k, i]]);
            }
        }
    }
    (total, grad)
}

/// Training loss at time `t`: the sum over particles of the squared
/// residual, centered by the ensemble mean of dt_log_t. The centering
/// cancels any time-dependent normalization drift of the path, so the
/// loss is partition-free.
pub fn loss(field: &MlpVectorField, path: &dyn GuidePath, positions: &Array2<f64>, t: f64) -> f64 {
    let terms = path_terms(path, positions, t);
    loss_given_terms(field, positions, &terms)
}

/// Exact gradient of [`loss`] with respect to every parameter entry.
pub fn loss_gradient(
    field: &MlpVectorField,
    path: &dyn GuidePath,
    positions: &Array2<f64>,
    t: f64,
) -> FieldGradient {
    let terms = path_terms(path, positions, t);
    loss_and_grad_given_terms(field, positions, &terms).1
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Learning rate.
    pub eta: f64,
    /// Maximum number of full-batch gradient-descent steps.
    pub max_steps: usize,
    /// Early-stop threshold on the loss.
    pub tol: f64,
    /// Momentum coefficient; 0 disables it and leaves plain descent.
    pub momentum: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            max_steps: 100,
            tol: 1e-4,
            momentum: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOutcome {
    /// Loss at exit (after the last applied update).
    pub loss: f64,
    /// Gradient steps actually taken.
    pub steps: usize,
}

/// Full-batch gradient descent on [`loss`] at a fixed time, mutating the
/// field in place (the warm start for the next path time). Runs at most
/// `max_steps` updates and stops early once the loss drops below `tol`;
/// a field that is already converged takes zero steps.
pub fn train_at_time(
    field: &mut MlpVectorField,
    path: &dyn GuidePath,
    positions: &Array2<f64>,
    t: f64,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    assert!(opts.eta > 0.0, "learning rate must be positive");
    assert!(opts.max_steps >= 1, "training needs at least one permitted step");
    assert!(opts.tol >= 0.0, "loss threshold must be nonnegative");

    let terms = path_terms(path, positions, t);
    let mut velocity: Option<FieldGradient> = None;
    let mut steps = 0;
    loop {
        let (l, grad) = loss_and_grad_given_terms(field, positions, &terms);
        if !l.is_finite() {
            return Err(Error::TrainingDivergence {
                t,
                step: steps,
                loss: l,
            });
        }
        if l < opts.tol || steps >= opts.max_steps {
            return Ok(TrainOutcome { loss: l, steps });
        }
        let update = match velocity.take() {
            Some(mut v) if opts.momentum > 0.0 => {
                v.scale_then_add(opts.momentum, &grad);
                v
            }
            _ => grad,
        };
        field.w1.scaled_add(-opts.eta, &update.w1);
        field.b1.scaled_add(-opts.eta, &update.b1);
        field.w2.scaled_add(-opts.eta, &update.w2);
        field.b2.scaled_add(-opts.eta, &update.b2);
        velocity = Some(update);
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lws::LwsPath;
    use crate::targets::{GaussianMixture, IsotropicGaussian};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_field(dim: usize, hidden: usize, r: &mut ChaCha8Rng) -> MlpVectorField {
        MlpVectorField::random(dim, hidden, 0.8, r)
    }

    fn mixture_path(alpha: f64, beta: f64) -> LwsPath {
        let p0 = IsotropicGaussian::univariate(0.0, 3.0).unwrap();
        let target = GaussianMixture::univariate(&[0.0, 8.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        LwsPath::new(p0, Box::new(target), alpha, beta).unwrap()
    }

    #[test]
    fn bias_only_network_is_constant() {
        let mut f = MlpVectorField::zeros(3, 4);
        f.b2 = array![1.0, -2.0, 0.5];
        let mut r = rng(1);
        for _ in 0..10 {
            let x = Array1::from_shape_fn(3, |_| 10.0 * (r.gen::<f64>() - 0.5));
            assert_eq!(f.evaluate(x.view()), f.b2);
        }
    }

    #[test]
    fn single_unit_forward_and_divergence() {
        let f = MlpVectorField::from_parts(
            array![[1.0]],
            array![0.0],
            array![[1.0]],
            array![0.0],
        );
        let out = f.evaluate(array![0.0].view());
        assert!((out[0] - 0.5).abs() < 1e-15);
        // d/dx sigmoid(x) at 0 = 1/4
        assert!((f.divergence(array![0.0].view()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_output_layer_has_zero_divergence() {
        let mut r = rng(2);
        let mut f = random_field(4, 6, &mut r);
        f.w2.fill(0.0);
        for _ in 0..10 {
            let x = Array1::from_shape_fn(4, |_| 6.0 * (r.gen::<f64>() - 0.5));
            assert_eq!(f.divergence(x.view()), 0.0);
        }
    }

    #[test]
    fn forward_pass_matches_independent_reimplementation() {
        let mut r = rng(3);
        for _ in 0..30 {
            let d = 1 + r.gen_range(0..4usize);
            let h = 1 + r.gen_range(0..6usize);
            let f = random_field(d, h, &mut r);
            let x = Array1::from_shape_fn(d, |_| 4.0 * (r.gen::<f64>() - 0.5));
            // Scalar re-implementation, no ndarray ops.
            let mut expect = vec![0.0; d];
            for i in 0..d {
                let mut acc = f.b2[i];
                for k in 0..h {
                    let mut a = f.b1[k];
                    for j in 0..d {
                        a += f.w1[[k, j]] * x[j];
                    }
                    acc += f.w2[[i, k]] / (1.0 + (-a).exp());
                }
                expect[i] = acc;
            }
            let got = f.evaluate(x.view());
            for i in 0..d {
                assert!((got[i] - expect[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let mut r = rng(4);
        for trial in 0..120 {
            let d = 1 + trial % 8;
            let h = 1 + r.gen_range(0..8usize);
            let f = random_field(d, h, &mut r);
            let x = Array1::from_shape_fn(d, |_| 4.0 * (r.gen::<f64>() - 0.5));
            let analytic = f.divergence(x.view());
            let mut numeric = 0.0;
            let step = 1e-6;
            for i in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                let hstep = step * (1.0 + x[i].abs());
                xp[i] += hstep;
                xm[i] -= hstep;
                numeric += (f.evaluate(xp.view())[i] - f.evaluate(xm.view())[i]) / (2.0 * hstep);
            }
            let err = (analytic - numeric).abs() / (1.0 + analytic.abs());
            assert!(err < 1e-6, "trial {trial}: divergence fd error {err}");
        }
    }

    #[test]
    fn zero_field_residual_is_the_time_derivative() {
        let path = mixture_path(1.0, 0.8);
        let f = MlpVectorField::zeros(1, 8);
        let mut r = rng(5);
        for _ in 0..20 {
            let x = array![8.0 * (r.gen::<f64>() - 0.5)];
            let t = r.gen::<f64>();
            let res = residual(&f, &path, x.view(), t);
            assert!((res - path.dt_log_t(x.view(), t)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_path_zero_field_residual_vanishes() {
        let p0 = IsotropicGaussian::univariate(0.0, 1.0).unwrap();
        let same = p0.clone();
        let path = LwsPath::new(p0, Box::new(same), 0.0, 1.0).unwrap();
        let f = MlpVectorField::zeros(1, 4);
        assert_eq!(residual(&f, &path, array![0.7].view(), 0.4), 0.0);
    }

    #[test]
    fn single_particle_loss_drops_the_time_terms() {
        let path = mixture_path(1.0, 0.8);
        let mut r = rng(6);
        let f = random_field(1, 8, &mut r);
        let positions = Array2::from_shape_vec((1, 1), vec![1.3]).unwrap();
        let t = 0.37;
        let x = positions.row(0);
        let phi = f.evaluate(x);
        let grad = path.grad_log_t(x, t);
        let expected = (grad[0] * phi[0] + f.divergence(x)).powi(2);
        assert!((loss(&f, &path, &positions, t) - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_time_derivatives_and_zero_field_give_zero_loss() {
        // A pure-shift Gaussian pair: dt_log_t depends on x, but two
        // symmetric particles see the same value.
        let o = crate::oracle::GaussianPathOracle::new(1.0, 4.0, 1.0).unwrap();
        let f = MlpVectorField::zeros(1, 4);
        let positions = Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
        assert!(loss(&f, &o, &positions, 0.5).abs() < 1e-20);
    }

    #[test]
    fn small_fixed_instance_matches_scalar_recomputation() {
        let path = mixture_path(1.0, 0.8);
        let f = MlpVectorField::from_parts(
            array![[0.3], [-0.2]],
            array![0.1, 0.4],
            array![[0.7, -0.5]],
            array![0.2],
        );
        let positions = Array2::from_shape_vec((3, 1), vec![-1.0, 0.5, 2.0]).unwrap();
        let t = 0.6;
        // Fully independent scalar route.
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let phi = |x: f64| 0.7 * sig(0.3 * x + 0.1) - 0.5 * sig(-0.2 * x + 0.4) + 0.2;
        let div = |x: f64| {
            let h1 = sig(0.3 * x + 0.1);
            let h2 = sig(-0.2 * x + 0.4);
            0.7 * h1 * (1.0 - h1) * 0.3 + (-0.5) * h2 * (1.0 - h2) * (-0.2)
        };
        let xs = [-1.0, 0.5, 2.0];
        let dts: Vec<f64> = xs.iter().map(|&x| path.dt_log_t(array![x].view(), t)).collect();
        let mean = dts.iter().sum::<f64>() / 3.0;
        let mut expected = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let s = path.grad_log_t(array![x].view(), t)[0];
            let rho = dts[i] + s * phi(x) + div(x) - mean;
            expected += rho * rho;
        }
        assert!((loss(&f, &path, &positions, t) - expected).abs() < 1e-10);
    }

    #[test]
    fn loss_is_invariant_under_particle_permutation_and_nonnegative() {
        let path = mixture_path(1.0, 0.8);
        let mut r = rng(7);
        let f = random_field(1, 8, &mut r);
        let positions = Array2::from_shape_fn((6, 1), |_| 6.0 * (r.gen::<f64>() - 0.5));
        let mut reversed = positions.clone();
        for i in 0..6 {
            reversed.row_mut(i).assign(&positions.row(5 - i));
        }
        let a = loss(&f, &path, &positions, 0.3);
        let b = loss(&f, &path, &reversed, 0.3);
        assert!(a >= 0.0);
        assert!((a - b).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn loss_is_deterministic_bitwise() {
        let path = mixture_path(1.0, 0.8);
        let mut r = rng(8);
        let f = random_field(1, 16, &mut r);
        let positions = Array2::from_shape_fn((32, 1), |_| 6.0 * (r.gen::<f64>() - 0.5));
        let a = loss(&f, &path, &positions, 0.42);
        let b = loss(&f, &path, &positions, 0.42);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut r = rng(9);
        for trial in 0..60 {
            let d = 1 + trial % 4;
            let h = 1 + r.gen_range(0..8usize);
            let p0 = IsotropicGaussian::new(Array1::zeros(d), 2.0).unwrap();
            let target = IsotropicGaussian::new(
                Array1::from_shape_fn(d, |_| 3.0 * (r.gen::<f64>() - 0.5)),
                0.8,
            )
            .unwrap();
            let path = LwsPath::new(p0, Box::new(target), r.gen::<f64>(), 0.3 + 0.7 * r.gen::<f64>()).unwrap();
            let f = random_field(d, h, &mut r);
            let n = 1 + r.gen_range(0..5usize);
            let positions = Array2::from_shape_fn((n, d), |_| 4.0 * (r.gen::<f64>() - 0.5));
            let t = r.gen::<f64>();
            let grad = loss_gradient(&f, &path, &positions, t);

            let fd = 1e-6;
            let check = |set: &dyn Fn(&mut MlpVectorField, f64), base: f64, analytic: f64| {
                let h_step = fd * (1.0 + base.abs());
                let mut fp = f.clone();
                set(&mut fp, base + h_step);
                let up = loss(&fp, &path, &positions, t);
                set(&mut fp, base - h_step);
                let down = loss(&fp, &path, &positions, t);
                let numeric = (up - down) / (2.0 * h_step);
                let err = (analytic - numeric).abs() / (1.0 + analytic.abs());
                assert!(err < 1e-5, "trial {trial}: parameter fd error {err}");
            };

            for k in 0..h {
                for j in 0..d {
                    check(&|f, v| f.w1[[k, j]] = v, f.w1[[k, j]], grad.w1[[k, j]]);
                }
                check(&|f, v| f.b1[k] = v, f.b1[k], grad.b1[k]);
            }
            for i in 0..d {
                for k in 0..h {
                    check(&|f, v| f.w2[[i, k]] = v, f.w2[[i, k]], grad.w2[[i, k]]);
                }
                check(&|f, v| f.b2[i] = v, f.b2[i], grad.b2[i]);
            }
        }
    }

    #[test]
    fn bias_gradient_formula_at_zero_parameters() {
        // At theta = 0 the b2 slot must hold 2 * rho_i * grad_log_t(x_i),
        // summed over particles, with rho evaluated at the zero field.
        let path = mixture_path(1.0, 0.8);
        let f = MlpVectorField::zeros(1, 8);
        let positions = Array2::from_shape_vec((2, 1), vec![-0.8, 1.7]).unwrap();
        let t = 0.25;
        let dts: Vec<f64> = (0..2).map(|i| path.dt_log_t(positions.row(i), t)).collect();
        let mean = 0.5 * (dts[0] + dts[1]);
        let mut expected = 0.0;
        for i in 0..2 {
            let rho = dts[i] - mean; // phi and div vanish at theta = 0
            expected += 2.0 * rho * path.grad_log_t(positions.row(i), t)[0];
        }
        let grad = loss_gradient(&f, &path, &positions, t);
        assert!((grad.b2[0] - expected).abs() < 1e-12);

        // With a single particle the loss is |(s + d/dx).phi|^2, which is
        // flat in b2 at the zero field.
        let single = Array2::from_shape_vec((1, 1), vec![0.9]).unwrap();
        let g1 = loss_gradient(&f, &path, &single, t);
        assert!(g1.b2[0].abs() < 1e-14);
    }

    #[test]
    fn descent_step_decreases_the_loss() {
        let path = mixture_path(1.0, 0.8);
        let mut r = rng(10);
        let f = random_field(1, 8, &mut r);
        let positions = Array2::from_shape_fn((8, 1), |_| 5.0 * (r.gen::<f64>() - 0.5));
        let t = 0.4;
        let before = loss(&f, &path, &positions, t);
        let grad = loss_gradient(&f, &path, &positions, t);
        let mut stepped = f.clone();
        let eta = 1e-5;
        stepped.w1.scaled_add(-eta, &grad.w1);
        stepped.b1.scaled_add(-eta, &grad.b1);
        stepped.w2.scaled_add(-eta, &grad.w2);
        stepped.b2.scaled_add(-eta, &grad.b2);
        let after = loss(&stepped, &path, &positions, t);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn training_is_partition_free() {
        let c = 7.5;
        let p0 = IsotropicGaussian::univariate(0.0, 3.0).unwrap();
        let base = GaussianMixture::univariate(&[0.0, 8.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let shifted = crate::targets::tests::OffsetTarget(base.clone(), c);
        let path_a = LwsPath::new(p0.clone(), Box::new(base), 1.0, 0.8).unwrap();
        let path_b = LwsPath::new(p0, Box::new(shifted), 1.0, 0.8).unwrap();
        let mut r = rng(11);
        let f = random_field(1, 8, &mut r);
        let positions = Array2::from_shape_fn((16, 1), |_| 6.0 * (r.gen::<f64>() - 0.5));
        let t = 0.55;
        let la = loss(&f, &path_a, &positions, t);
        let lb = loss(&f, &path_b, &positions, t);
        assert!((la - lb).abs() < 1e-9 * (1.0 + la.abs()));
        let ga = loss_gradient(&f, &path_a, &positions, t);
        let gb = loss_gradient(&f, &path_b, &positions, t);
        let diff = (&ga.b2 - &gb.b2).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn already_converged_field_takes_zero_steps() {
        let p0 = IsotropicGaussian::univariate(0.0, 1.0).unwrap();
        let same = p0.clone();
        let path = LwsPath::new(p0, Box::new(same), 0.0, 1.0).unwrap();
        let mut f = MlpVectorField::zeros(1, 4);
        let positions = Array2::from_shape_vec((4, 1), vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        let out = train_at_time(
            &mut f,
            &path,
            &positions,
            0.0,
            &TrainOptions {
                eta: 1e-3,
                max_steps: 50,
                tol: 1e-4,
                momentum: 0.0,
            },
        )
        .unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn training_on_the_oracle_path_recovers_the_exact_field() {
        let o = crate::oracle::GaussianPathOracle::new(1.5, 3.0, 0.8).unwrap();
        let mut r = rng(12);
        let t = 0.5;
        let samples = o.sample_pt(t, 256, &mut r);
        let positions = Array2::from_shape_vec((256, 1), samples.clone()).unwrap();
        let mut f = MlpVectorField::random(1, 64, 0.05, &mut r);
        let opts = TrainOptions {
            eta: 2e-5,
            max_steps: 4000,
            tol: 1e-8,
            momentum: 0.9,
        };
        let out = train_at_time(&mut f, &o, &positions, t, &opts).unwrap();
        assert!(out.loss.is_finite());
        let mut sq = 0.0;
        for &x in &samples {
            let got = f.evaluate(array![x].view())[0];
            let want = o.field(x, t);
            sq += (got - want) * (got - want);
        }
        let rms = (sq / samples.len() as f64).sqrt();
        assert!(rms < 0.05, "rms field error {rms}, final loss {}", out.loss);
    }

    #[test]
    fn divergent_training_is_reported() {
        let path = mixture_path(1.0, 0.8);
        let mut r = rng(13);
        let mut f = random_field(1, 8, &mut r);
        let positions = Array2::from_shape_fn((64, 1), |_| 8.0 * (r.gen::<f64>() - 0.5));
        let opts = TrainOptions {
            eta: 10.0, // wildly unstable on purpose
            max_steps: 500,
            tol: 0.0,
            momentum: 0.0,
        };
        match train_at_time(&mut f, &path, &positions, 0.1, &opts) {
            Err(crate::error::Error::TrainingDivergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
