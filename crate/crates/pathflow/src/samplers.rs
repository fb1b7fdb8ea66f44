//! Particle drivers.
//!
//! `pgps_run` trains the transport field at the current path time, takes an
//! adaptive Euler step, and optionally applies a few Langevin steps against
//! the intermediate density, repeating until t reaches 1. `tf_pgps_run` is
//! the training-free variant (Langevin adjustment only, on a fixed time
//! grid). `ld_run` and `svgd_run` are the baselines.
//!
//! Iteration accounting: one iteration is one particle-position update —
//! either an Euler move or a single Langevin step — so Langevin adjustment
//! steps count toward any iteration budget. Training gradient steps are
//! reported separately in the trace.
//!
//! Noise streams are derived per (iteration, particle) from the master
//! seed, so a parallel implementation of the per-particle loops would
//! reproduce the serial streams bit for bit.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{train_at_time, MlpVectorField, TrainOptions};
use crate::lws::GuidePath;
use crate::record::RunRecord;
use crate::targets::TargetDensity;

/// N particles in R^d plus the seed that produced them.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Array2<f64>,
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn new(positions: Array2<f64>, seed: u64) -> Self {
        Self { positions, seed }
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    /// First coordinate of every particle; the 1D experiment metrics read this.
    pub fn first_coordinate(&self) -> Vec<f64> {
        self.positions.column(0).to_vec()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one particle in one iteration.
pub(crate) fn particle_rng(seed: u64, iteration: u64, particle: u64) -> ChaCha8Rng {
    let a = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    let b = splitmix64(a ^ iteration);
    ChaCha8Rng::seed_from_u64(splitmix64(b ^ particle))
}

/// Stream used once per run to initialize network parameters.
fn field_init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xE703_7ED1_A0B4_28DB))
}

/// PGPS driver knobs. `hidden = 0` picks the default width for the
/// dimension (64 for d <= 2, 128 above).
#[derive(Debug, Clone)]
pub struct PgpsConfig {
    /// Mean particle displacement per Euler step.
    pub psi: f64,
    /// Upper bound on the adaptive time step.
    pub dt_max: f64,
    /// Learning rate for field training.
    pub eta: f64,
    /// Maximum training steps per path time.
    pub train_steps: usize,
    /// Early-stop loss threshold.
    pub train_tol: f64,
    /// Momentum coefficient for training (0 = plain descent).
    pub momentum: f64,
    /// Langevin adjustment steps per path time (0 disables adjustment).
    pub adjust_steps: usize,
    /// Langevin adjustment step size.
    pub adjust_delta: f64,
    /// Hidden width of the field network; 0 = dimension default.
    pub hidden: usize,
    /// Uniform init scale for network parameters.
    pub init_scale: f64,
    pub seed: u64,
    /// Hard cap on particle-moving iterations; exceeding it is an error.
    pub max_iterations: u64,
}

impl Default for PgpsConfig {
    fn default() -> Self {
        Self {
            psi: 0.1,
            dt_max: 0.1,
            eta: 1e-3,
            train_steps: 100,
            train_tol: 1e-4,
            momentum: 0.0,
            adjust_steps: 0,
            adjust_delta: 1e-2,
            hidden: 0,
            init_scale: 0.05,
            seed: 0,
            max_iterations: 1_000_000,
        }
    }
}

impl PgpsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("psi", self.psi),
            ("dt_max", self.dt_max),
            ("eta", self.eta),
            ("init_scale", self.init_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.train_steps == 0 {
            return Err(Error::Config("train_steps must be at least 1".into()));
        }
        if !(self.train_tol >= 0.0) {
            return Err(Error::Config(format!(
                "train_tol must be nonnegative, got {}",
                self.train_tol
            )));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.adjust_steps > 0 && (!(self.adjust_delta > 0.0) || !self.adjust_delta.is_finite()) {
            return Err(Error::Config(format!(
                "adjust_delta must be positive, got {}",
                self.adjust_delta
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn hidden_for(&self, dim: usize) -> usize {
        if self.hidden > 0 {
            self.hidden
        } else if dim <= 2 {
            64
        } else {
            128
        }
    }
}

/// Time step from the current field magnitude: `N*psi / sum_i ||phi(x_i)||`,
/// clamped by the remaining time and `dt_max`. Before clamping, the mean
/// particle displacement of the Euler step is exactly `psi`. A vanishing
/// field skips the ratio and yields `min(1 - t, dt_max)`.
pub fn adaptive_time_step(
    t: f64,
    positions: &Array2<f64>,
    field: &MlpVectorField,
    psi: f64,
    dt_max: f64,
) -> f64 {
    assert!((0.0..1.0).contains(&t), "time step requested at t={t}");
    let n = positions.nrows();
    let mut total_norm = 0.0;
    for i in 0..n {
        let v = field.evaluate(positions.row(i));
        total_norm += v.iter().map(|a| a * a).sum::<f64>().sqrt();
    }
    let remaining = 1.0 - t;
    if total_norm < 1e-12 {
        return remaining.min(dt_max);
    }
    let raw = n as f64 * psi / total_norm;
    raw.min(remaining).min(dt_max)
}

/// Langevin adjustment with a noise hook; the public entry point fixes the
/// scale at 1. `iter_base` is the number of particle-moving iterations the
/// run has already consumed, so error reports and noise streams line up
/// with the global iteration count.
pub(crate) fn langevin_adjust_scaled(
    positions: &mut Array2<f64>,
    grad_log: &dyn Fn(ArrayView1<f64>) -> Array1<f64>,
    delta: f64,
    steps: usize,
    seed: u64,
    iter_base: u64,
    noise_scale: f64,
) -> Result<u64> {
    assert!(delta >= 0.0, "adjustment step size must be nonnegative");
    if delta == 0.0 || steps == 0 {
        return Ok(0);
    }
    let n = positions.nrows();
    let d = positions.ncols();
    let noise = (2.0 * delta).sqrt() * noise_scale;
    for k in 0..steps {
        let iteration = iter_base + k as u64 + 1;
        for i in 0..n {
            let mut rng = particle_rng(seed, iteration, i as u64);
            let g = grad_log(positions.row(i));
            let mut finite = true;
            for j in 0..d {
                let xi: f64 = rng.sample(StandardNormal);
                let v = positions[[i, j]] + delta * g[j] + noise * xi;
                finite &= v.is_finite();
                positions[[i, j]] = v;
            }
            if !finite {
                return Err(Error::Sampler {
                    iteration,
                    msg: format!("particle {i} left the finite domain during Langevin adjustment"),
                });
            }
        }
    }
    Ok(steps as u64)
}

/// `steps` rounds of `x <- x + delta * grad_log(x) + sqrt(2 delta) xi` with
/// fresh standard-normal noise per particle per step.
pub fn langevin_adjust(
    positions: &mut Array2<f64>,
    grad_log: &dyn Fn(ArrayView1<f64>) -> Array1<f64>,
    delta: f64,
    steps: usize,
    seed: u64,
    iter_base: u64,
) -> Result<u64> {
    langevin_adjust_scaled(positions, grad_log, delta, steps, seed, iter_base, 1.0)
}

/// Transport run: train the field at t, step the particles, adjust,
/// repeat until t = 1. Rows pushed to `record` carry the training-step
/// count as the first metric column, then the observer's metrics.
pub fn pgps_run(
    path: &dyn GuidePath,
    cfg: &PgpsConfig,
    init: ParticleEnsemble,
    observer: &Observer,
    record: &mut RunRecord,
) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    assert!(!init.is_empty(), "particle ensemble must be non-empty");
    assert_eq!(init.dim(), path.dimension(), "particles and path dimensions differ");

    let d = path.dimension();
    let mut field = MlpVectorField::random(d, cfg.hidden_for(d), cfg.init_scale, &mut field_init_rng(cfg.seed));
    let opts = TrainOptions {
        eta: cfg.eta,
        max_steps: cfg.train_steps,
        tol: cfg.train_tol,
        momentum: cfg.momentum,
    };

    let mut positions = init.positions;
    let seed = init.seed;
    let mut t = 0.0;
    let mut iterations: u64 = 0;
    loop {
        let outcome = train_at_time(&mut field, path, &positions, t, &opts)?;

        let dt = adaptive_time_step(t, &positions, &field, cfg.psi, cfg.dt_max);
        for i in 0..positions.nrows() {
            let v = field.evaluate(positions.row(i));
            for j in 0..d {
                positions[[i, j]] += dt * v[j];
            }
            if positions.row(i).iter().any(|x| !x.is_finite()) {
                return Err(Error::Sampler {
                    iteration: iterations + 1,
                    msg: format!("particle {i} left the finite domain during the Euler update"),
                });
            }
        }
        iterations += 1;
        // Clamping used the exact value 1 - t, so equality means we landed on 1.
        t = if dt >= 1.0 - t { 1.0 } else { t + dt };

        if cfg.adjust_steps > 0 {
            let grad = |x: ArrayView1<f64>| path.grad_log_t(x, t);
            iterations += langevin_adjust(
                &mut positions,
                &grad,
                cfg.adjust_delta,
                cfg.adjust_steps,
                seed,
                iterations,
            )?;
        }

        let mut metrics = vec![outcome.steps as f64];
        metrics.extend(observer.eval(&positions));
        record.push(iterations, t, dt, outcome.loss, metrics);

        if t >= 1.0 {
            return Ok(ParticleEnsemble::new(positions, seed));
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::Sampler {
                iteration: iterations,
                msg: format!("iteration cap {} reached at t={t}", cfg.max_iterations),
            });
        }
    }
}

/// Training-free PGPS configuration: a uniform time grid t_k = k/grid_steps
/// for k = 1..=grid_steps (the final point is the target itself) with
/// `adjust_steps` Langevin steps against each intermediate density.
#[derive(Debug, Clone)]
pub struct TfPgpsConfig {
    pub grid_steps: usize,
    pub adjust_steps: usize,
    pub adjust_delta: f64,
}

impl TfPgpsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_steps == 0 {
            return Err(Error::Config("tf-pgps needs at least one grid step".into()));
        }
        if self.adjust_steps == 0 {
            return Err(Error::Config("tf-pgps needs adjust_steps >= 1".into()));
        }
        if !(self.adjust_delta > 0.0) || !self.adjust_delta.is_finite() {
            return Err(Error::Config(format!(
                "adjust_delta must be positive, got {}",
                self.adjust_delta
            )));
        }
        Ok(())
    }
}

/// Training-free transport: Langevin adjustment alone against each grid
/// density in turn. With a single grid step this is plain ULA on the target.
pub fn tf_pgps_run(
    path: &dyn GuidePath,
    cfg: &TfPgpsConfig,
    init: ParticleEnsemble,
    observer: &Observer,
    record: &mut RunRecord,
) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    assert!(!init.is_empty(), "particle ensemble must be non-empty");
    assert_eq!(init.dim(), path.dimension(), "particles and path dimensions differ");

    let mut positions = init.positions;
    let seed = init.seed;
    let h = 1.0 / cfg.grid_steps as f64;
    let mut iterations: u64 = 0;
    for k in 1..=cfg.grid_steps {
        let t = if k == cfg.grid_steps { 1.0 } else { k as f64 * h };
        let grad = |x: ArrayView1<f64>| path.grad_log_t(x, t);
        iterations += langevin_adjust(
            &mut positions,
            &grad,
            cfg.adjust_delta,
            cfg.adjust_steps,
            seed,
            iterations,
        )?;
        let metrics = observer.eval(&positions);
        record.push(iterations, t, h, f64::NAN, metrics);
    }
    Ok(ParticleEnsemble::new(positions, seed))
}

/// Unadjusted Langevin dynamics on a fixed target for a fixed budget.
pub fn ld_run(
    target: &dyn TargetDensity,
    delta: f64,
    iterations: u64,
    init: ParticleEnsemble,
    observer: &Observer,
    record: &mut RunRecord,
) -> Result<ParticleEnsemble> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("ld step size must be positive, got {delta}")));
    }
    assert!(!init.is_empty(), "particle ensemble must be non-empty");
    assert_eq!(init.dim(), target.dimension(), "particles and target dimensions differ");

    let mut positions = init.positions;
    let seed = init.seed;
    let grad = |x: ArrayView1<f64>| target.grad_log_unnorm(x);
    for k in 1..=iterations {
        langevin_adjust(&mut positions, &grad, delta, 1, seed, k - 1)?;
        let frac = k as f64 / iterations as f64;
        record.push(k, frac, delta, f64::NAN, observer.eval(&positions));
    }
    Ok(ParticleEnsemble::new(positions, seed))
}

/// Stein variational gradient descent with an RBF kernel and the median
/// heuristic bandwidth `h = median(pairwise dist)^2 / ln(N+1)`, recomputed
/// every iteration. Deterministic: the only randomness is in the initial
/// ensemble.
pub fn svgd_run(
    target: &dyn TargetDensity,
    delta: f64,
    iterations: u64,
    init: ParticleEnsemble,
    observer: &Observer,
    record: &mut RunRecord,
) -> Result<ParticleEnsemble> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("svgd step size must be positive, got {delta}")));
    }
    assert!(!init.is_empty(), "particle ensemble must be non-empty");
    assert_eq!(init.dim(), target.dimension(), "particles and target dimensions differ");

    let mut positions = init.positions;
    let seed = init.seed;
    let n = positions.nrows();
    let d = positions.ncols();
    for k in 1..=iterations {
        let grads: Vec<Array1<f64>> = (0..n).map(|i| target.grad_log_unnorm(positions.row(i))).collect();
        let h = median_bandwidth(&positions);
        let mut updates: Array2<f64> = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..n {
                let mut sq = 0.0;
                for c in 0..d {
                    let z = positions[[j, c]] - positions[[i, c]];
                    sq += z * z;
                }
                let kernel = (-sq / h).exp();
                for c in 0..d {
                    // k(x_j, x_i) grad_j log p + grad_{x_j} k(x_j, x_i)
                    updates[[i, c]] += kernel * grads[j][c]
                        - 2.0 / h * (positions[[j, c]] - positions[[i, c]]) * kernel;
                }
            }
        }
        let scale = delta / n as f64;
        for i in 0..n {
            for c in 0..d {
                positions[[i, c]] += scale * updates[[i, c]];
            }
            if positions.row(i).iter().any(|x| !x.is_finite()) {
                return Err(Error::Sampler {
                    iteration: k,
                    msg: format!("particle {i} left the finite domain during the SVGD update"),
                });
            }
        }
        let frac = k as f64 / iterations as f64;
        record.push(k, frac, delta, f64::NAN, observer.eval(&positions));
    }
    Ok(ParticleEnsemble::new(positions, seed))
}

/// Squared median pairwise distance over ln(N+1), floored away from zero so
/// coincident ensembles stay finite.
fn median_bandwidth(positions: &Array2<f64>) -> f64 {
    let n = positions.nrows();
    if n < 2 {
        return 1.0;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for c in 0..positions.ncols() {
                let z = positions[[i, c]] - positions[[j, c]];
                sq += z * z;
            }
            dists.push(sq.sqrt());
        }
    }
    let mid = dists.len() / 2;
    let (_, med, _) = dists.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let h = *med * *med / ((n as f64) + 1.0).ln();
    if h > 1e-12 {
        h
    } else {
        1.0
    }
}

/// Per-iteration metrics computed on the particle positions.
pub struct Observer {
    names: Vec<String>,
    fns: Vec<Box<dyn Fn(&Array2<f64>) -> f64>>,
}

impl Observer {
    pub fn none() -> Self {
        Self {
            names: Vec::new(),
            fns: Vec::new(),
        }
    }

    pub fn new(metrics: Vec<(String, Box<dyn Fn(&Array2<f64>) -> f64>)>) -> Self {
        let (names, fns) = metrics.into_iter().unzip();
        Self { names, fns }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn eval(&self, positions: &Array2<f64>) -> Vec<f64> {
        self.fns.iter().map(|f| f(positions)).collect()
    }
}
