// Timing probe for one PGPS mode-seeking run.
use pathflow::lws::LwsPath;
use pathflow::metrics::score1;
use pathflow::record::RunRecord;
use pathflow::samplers::{pgps_run, Observer, ParticleEnsemble, PgpsConfig};
use pathflow::targets::{GaussianMixture, IsotropicGaussian};
use std::time::Instant;

fn main() {
    let cap: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(23);
    let eta: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-5);
    let steps: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let momentum: f64 = std::env::args()
        .nth(4)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let psi: f64 = std::env::args()
        .nth(5)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.1);
    let dt_max: f64 = std::env::args()
        .nth(6)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.1);
    let delta: f64 = std::env::args()
        .nth(7)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-2);
    let seed: u64 = std::env::args()
        .nth(8)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let target = GaussianMixture::univariate(&[0.0, 8.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let p0 = IsotropicGaussian::univariate(0.0, 3.0).unwrap();
    let path = LwsPath::new(p0.clone(), Box::new(target), 1.0, 0.8).unwrap();
    let cfg = PgpsConfig {
        psi,
        dt_max,
        eta,
        train_steps: steps,
        train_tol: 1e-4,
        momentum,
        adjust_steps: 10,
        adjust_delta: delta,
        hidden: 64,
        seed,
        max_iterations: cap,
        ..Default::default()
    };
    let start = Instant::now();
    let mut rec = RunRecord::new(seed, vec!["train_steps".into(), "m32".into(), "m40".into()]);
    let init = ParticleEnsemble::new(p0.sample_seeded(500, seed), seed);
    let obs = Observer::new(vec![
        ("m32".to_string(), Box::new(|p: &ndarray::Array2<f64>| {
            p.column(0).iter().filter(|x| **x > 3.2).count() as f64 / p.nrows() as f64
        }) as Box<dyn Fn(&ndarray::Array2<f64>) -> f64>),
        ("m40".to_string(), Box::new(|p: &ndarray::Array2<f64>| {
            p.column(0).iter().filter(|x| **x > 4.0).count() as f64 / p.nrows() as f64
        })),
    ]);
    match pgps_run(&path, &cfg, init, &obs, &mut rec) {
        Ok(out) => {
            println!(
                "ok in {:?}: outer {} iters {} score1 {:.3}",
                start.elapsed(),
                rec.rows.len(),
                rec.iterations(),
                score1(&out.first_coordinate(), 5.0)
            );
        }
        Err(e) => println!("error after {:?} ({} rows): {e}", start.elapsed(), rec.rows.len()),
    }
    let stride = (rec.rows.len() / 14).max(1);
    for (i, row) in rec.rows.iter().enumerate() {
        if i % stride == 0 || i + 1 == rec.rows.len() {
            println!(
                "  iter {} t={:.4} dt={:.5} loss={:.3e} steps={} m32={:.3} m40={:.3}",
                row.iter, row.t, row.dt, row.loss, row.metrics[0], row.metrics[1], row.metrics[2]
            );
        }
    }
}
