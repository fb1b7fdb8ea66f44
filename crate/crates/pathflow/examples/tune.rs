// Scratch harness for choosing experiment defaults; not part of the library.
use ndarray::Array1;
use pathflow::field::MlpVectorField;
use pathflow::lws::LwsPath;
use pathflow::metrics::{score1, score2, weight_mismatch, ModeSpec};
use pathflow::record::RunRecord;
use pathflow::samplers::{ld_run, pgps_run, Observer, ParticleEnsemble, PgpsConfig};
use pathflow::targets::{GaussianMixture, IsotropicGaussian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode_seeking_target() -> GaussianMixture {
    GaussianMixture::univariate(&[0.0, 8.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap()
}

fn sensitivity_target() -> GaussianMixture {
    GaussianMixture::univariate(&[-5.0, 5.0], &[1.0, 1.0], &[0.001, 0.999]).unwrap()
}

fn weight_recovery_target(seed: u64) -> (GaussianMixture, Vec<Array1<f64>>) {
    let mut centers = Vec::new();
    for (axis, sign) in [(0usize, 1.0), (1, -1.0), (2, 1.0), (3, -1.0)] {
        let mut c = Array1::zeros(8);
        c[axis] = sign;
        centers.push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let raw: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let m = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|v| v / total).collect();
    (
        GaussianMixture::isotropic(centers.clone(), vec![0.15; 4], weights).unwrap(),
        centers,
    )
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "mode".into());
    match which.as_str() {
        "mode" => mode_scan(),
        "sens" => sens_scan(),
        "weight" => weight_scan(),
        _ => eprintln!("unknown scan"),
    }
}

fn mode_scan() {
    let target = mode_seeking_target();
    let p0 = IsotropicGaussian::univariate(0.0, 3.0).unwrap();
    for psi in [0.1, 0.05] {
        for eta in [1e-5, 3e-5, 1e-4] {
            for (mom, steps) in [(0.0, 100), (0.9, 100), (0.9, 300)] {
                let mut scores = Vec::new();
                let mut iters = Vec::new();
                let mut failed = false;
                for seed in 0..5u64 {
                    let path = LwsPath::new(p0.clone(), Box::new(target.clone()), 1.0, 0.8).unwrap();
                    let cfg = PgpsConfig {
                        psi,
                        dt_max: 0.1,
                        eta,
                        train_steps: steps,
                        train_tol: 1e-4,
                        momentum: mom,
                        adjust_steps: 10,
                        adjust_delta: 1e-2,
                        hidden: 64,
                        seed,
                        ..Default::default()
                    };
                    let mut rec = RunRecord::new(seed, vec!["train_steps".into()]);
                    let init = ParticleEnsemble::new(p0.sample_seeded(500, seed), seed);
                    match pgps_run(&path, &cfg, init, &Observer::none(), &mut rec) {
                        Ok(out) => {
                            scores.push(score1(&out.first_coordinate(), 5.0));
                            iters.push(rec.iterations());
                        }
                        Err(e) => {
                            failed = true;
                            eprintln!("psi={psi} eta={eta} mom={mom} M={steps} seed={seed}: {e}");
                        }
                    }
                }
                if !failed {
                    println!(
                        "psi={psi} eta={eta:.0e} mom={mom} M={steps}: scores {scores:?} iters {iters:?}"
                    );
                }
            }
        }
    }
}

fn sens_scan() {
    let target = sensitivity_target();
    let p0 = IsotropicGaussian::univariate(0.0, 2.0).unwrap();
    for beta in [0.8, 0.5] {
        for eta in [3e-5, 1e-4] {
            let mut scores = Vec::new();
            let mut iters = Vec::new();
            for seed in 0..5u64 {
                let path = LwsPath::new(p0.clone(), Box::new(target.clone()), 1.0, beta).unwrap();
                let cfg = PgpsConfig {
                    psi: 0.1,
                    dt_max: 0.1,
                    eta,
                    train_steps: 300,
                    train_tol: 1e-4,
                    momentum: 0.9,
                    adjust_steps: 10,
                    adjust_delta: 1e-2,
                    hidden: 64,
                    seed,
                    ..Default::default()
                };
                let mut rec = RunRecord::new(seed, vec!["train_steps".into()]);
                let init = ParticleEnsemble::new(p0.sample_seeded(500, seed), seed);
                match pgps_run(&path, &cfg, init, &Observer::none(), &mut rec) {
                    Ok(out) => {
                        scores.push(score2(&out.first_coordinate(), 0.0));
                        iters.push(rec.iterations());
                    }
                    Err(e) => eprintln!("beta={beta} eta={eta} seed={seed}: {e}"),
                }
            }
            println!("beta={beta} eta={eta:.0e}: score2 {scores:?} iters {iters:?}");
        }
    }
}

fn weight_scan() {
    let p0 = IsotropicGaussian::new(Array1::zeros(8), 1.0).unwrap();
    for (beta, adjust) in [(0.5, 100), (0.5, 0), (1.0, 100)] {
        for eta in [1e-5, 3e-5] {
            let mut e_pgps = Vec::new();
            let mut e_ld = Vec::new();
            let mut iters = Vec::new();
            for seed in 0..5u64 {
                let (target, _) = weight_recovery_target(seed);
                let modes = ModeSpec::from_mixture(&target, 1.0).unwrap();
                let path = LwsPath::new(p0.clone(), Box::new(target.clone()), 0.0, beta).unwrap();
                let cfg = PgpsConfig {
                    psi: 0.05,
                    dt_max: 0.05,
                    eta,
                    train_steps: 200,
                    train_tol: 1e-4,
                    momentum: 0.9,
                    adjust_steps: adjust,
                    adjust_delta: 1e-4,
                    hidden: 128,
                    seed,
                    ..Default::default()
                };
                let mut rec = RunRecord::new(seed, vec!["train_steps".into()]);
                let init = ParticleEnsemble::new(p0.sample_seeded(500, seed), seed);
                match pgps_run(&path, &cfg, init, &Observer::none(), &mut rec) {
                    Ok(out) => {
                        e_pgps.push((weight_mismatch(&out.positions, &modes) * 1000.0).round() / 1000.0);
                        iters.push(rec.iterations());
                    }
                    Err(e) => eprintln!("beta={beta} adj={adjust} eta={eta} seed={seed}: {e}"),
                }
                let mut rec2 = RunRecord::new(seed, vec![]);
                let ld = ld_run(
                    &target,
                    1e-4,
                    2000,
                    ParticleEnsemble::new(p0.sample_seeded(500, seed), seed),
                    &Observer::none(),
                    &mut rec2,
                )
                .unwrap();
                e_ld.push((weight_mismatch(&ld.positions, &modes) * 1000.0).round() / 1000.0);
            }
            println!("beta={beta} adj={adjust} eta={eta:.0e}: e_pgps {e_pgps:?} iters {iters:?} e_ld {e_ld:?}");
        }
    }
    let _ = MlpVectorField::zeros(1, 1);
}
