// Temporary calibration harness for the acceptance-suite constants.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weightvol::data::synth_blobs;
use weightvol::nn::{mlp_layers, train, Activation, TrainConfig};
use weightvol::volume::{
    collect_posterior_samples, kfac_factors, laplace_volume, sampling_volume, PosteriorConfig,
    SamplingVolumeConfig,
};

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("c6");
    let spread: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.1);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    match mode {
        "c6" => c6(spread, lr),
        "c6e" => c6_eval_mode(),
        "c8" => c8(),
        "c9" => c9(spread, lr),
        "c9s" => c9_sampling(),
        "c9n" => c9_node_noise(),
        "walk" => walk(spread, lr),
        other => eprintln!("unknown mode {other}"),
    }
}

/// Does the dropout net's volume expansion survive mask-free measurement?
fn c6_eval_mode() {
    let ds = synth_blobs(10, 24, 400, 1.1, 1234).unwrap();
    let (train_set, test_set) = ds.split_at(1500);
    for seed in 0..3u64 {
        for dropout in [0.0, 0.3] {
            let layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, dropout);
            let config = TrainConfig {
                epochs: 30,
                batch_size: 64,
                learning_rate: 0.1,
                lr_halve_every: None,
                momentum: 0.9,
                weight_decay: 0.0,
                seed,
                dropout_enabled: dropout > 0.0,
            };
            let out = train(&config, &train_set, &test_set, &layers).unwrap();
            let mut rng = rng_for(seed, 100);
            let masked = kfac_factors(&out.final_params, &train_set, dropout > 0.0, 4, 1e-4, &mut rng).unwrap();
            let mut rng = rng_for(seed, 100);
            let evalmode = kfac_factors(&out.final_params, &train_set, false, 1, 1e-4, &mut rng).unwrap();
            println!(
                "seed {seed} q={dropout}: masked {:.4} evalmode {:.4}",
                laplace_volume(&masked).unwrap().mean_per_dim_log_vol(),
                laplace_volume(&evalmode).unwrap().mean_per_dim_log_vol()
            );
        }
    }
}

/// Node-loss-only disentanglement noise: does it expand eval-mode volume?
fn c9_node_noise() {
    use weightvol::noise::{classify_volume_effect, train_with_noise, NoiseConfig, NoiseMode};
    use weightvol::volume::{track_volume, TrackSettings};
    let ds = synth_blobs(10, 24, 400, 1.1, 1234).unwrap();
    let (train_set, test_set) = ds.split_at(1500);
    let layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, 0.0);
    let track = TrackSettings { every_k_epochs: 100, mask_draws: 1, damping_scale: 1e-4, sample_limit: None };
    for seed in 0..5u64 {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed,
            dropout_enabled: false,
        };
        let (plain, plain_trail) = track_volume(&config, &train_set, &test_set, &layers, &track).unwrap();
        let plain_vol = plain_trail.final_report().unwrap().clone();
        let plain_test = plain.history.final_stats().unwrap().test_loss;
        println!("seed {seed}: plain test {plain_test:.3} vol {:.4}", plain_vol.mean_per_dim_log_vol());
        for lambda2 in [0.02, 0.05, 0.1] {
            let noise = NoiseConfig { mode: NoiseMode::Disentangle, lambda1: 0.0, lambda2, lambda3: 0.0, refresh_every: 5 };
            let run = match train_with_noise(&config, &noise, &train_set, &test_set, &layers, &track) {
                Ok(r) if r.outcome.divergence.is_none() => r,
                Ok(_) => {
                    println!("  l2={lambda2}: DIVERGED");
                    continue;
                }
                Err(e) => {
                    println!("  l2={lambda2}: ERROR {e}");
                    continue;
                }
            };
            let vol = run.trail.final_report().unwrap();
            let effect = classify_volume_effect(vol, &plain_vol, 0.01).unwrap();
            let test = run.outcome.history.final_stats().unwrap().test_loss;
            println!(
                "  l2={lambda2}: {effect:?} vol {:.4} delta_vol {:+.4} delta_test {:+.3}",
                vol.mean_per_dim_log_vol(),
                vol.mean_per_dim_log_vol() - plain_vol.mean_per_dim_log_vol(),
                test - plain_test
            );
        }
    }
}

fn sampling_vol_of(
    params: &weightvol::nn::NetworkParams,
    train_set: &weightvol::data::Dataset,
    dropout_ft: bool,
    seed: u64,
) -> Result<weightvol::volume::VolumeReport, weightvol::Error> {
    let posterior = PosteriorConfig {
        n_iters: 150,
        epsilon: 0.05,
        perturb_std: 0.008,
        fine_tune_lr: 0.03,
        fine_tune_batch: 128,
        fine_tune_dropout: dropout_ft,
        min_samples: 48,
    };
    let mut prng = rng_for(seed, 101);
    let samples = collect_posterior_samples(params, train_set, &posterior, &mut prng)?;
    let cfg = SamplingVolumeConfig { subset_size: 16, subset_count: 12, shrinkage: 0.1 };
    sampling_volume(&samples, &cfg, &mut prng)
}

fn c9_sampling() {
    use weightvol::noise::{classify_volume_effect, train_with_noise, NoiseConfig, NoiseMode};
    use weightvol::volume::{track_volume, TrackSettings};
    let ds = synth_blobs(10, 24, 400, 1.1, 1234).unwrap();
    let (train_set, test_set) = ds.split_at(1500);
    let layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, 0.0);
    let track = TrackSettings { every_k_epochs: 100, mask_draws: 1, damping_scale: 1e-4, sample_limit: None };
    for seed in 0..5u64 {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed,
            dropout_enabled: false,
        };
        let (plain, _) = track_volume(&config, &train_set, &test_set, &layers, &track).unwrap();
        let plain_test = plain.history.final_stats().unwrap().test_loss;
        let plain_vol = match sampling_vol_of(&plain.final_params, &train_set, false, seed) {
            Ok(v) => v,
            Err(e) => {
                println!("seed {seed}: plain sampling ERROR {e}");
                continue;
            }
        };
        println!("seed {seed}: plain test {plain_test:.3} samplingvol {:.4}", plain_vol.mean_per_dim_log_vol());

        for (tag, noise) in [
            ("dis 0.4/0.02", NoiseConfig { mode: NoiseMode::Disentangle, lambda1: 0.4, lambda2: 0.02, lambda3: 0.0, refresh_every: 5 }),
            ("dis 0.7/0.04", NoiseConfig { mode: NoiseMode::Disentangle, lambda1: 0.7, lambda2: 0.04, lambda3: 0.0, refresh_every: 5 }),
            ("wn 0.004", NoiseConfig { mode: NoiseMode::WeightNoise, lambda1: 0.0, lambda2: 0.0, lambda3: 0.004, refresh_every: 5 }),
            ("wn 0.006", NoiseConfig { mode: NoiseMode::WeightNoise, lambda1: 0.0, lambda2: 0.0, lambda3: 0.006, refresh_every: 5 }),
            ("wn 0.01", NoiseConfig { mode: NoiseMode::WeightNoise, lambda1: 0.0, lambda2: 0.0, lambda3: 0.01, refresh_every: 5 }),
        ] {
            let run = match train_with_noise(&config, &noise, &train_set, &test_set, &layers, &track) {
                Ok(r) if r.outcome.divergence.is_none() => r,
                Ok(_) => {
                    println!("  {tag}: DIVERGED");
                    continue;
                }
                Err(e) => {
                    println!("  {tag}: ERROR {e}");
                    continue;
                }
            };
            let test = run.outcome.history.final_stats().unwrap().test_loss;
            match sampling_vol_of(&run.outcome.final_params, &train_set, false, seed) {
                Ok(vol) => {
                    let effect = classify_volume_effect(&vol, &plain_vol, 0.01).unwrap();
                    println!(
                        "  {tag}: {effect:?} samplingvol {:.4} delta_vol {:+.4} delta_test {:+.3}",
                        vol.mean_per_dim_log_vol(),
                        vol.mean_per_dim_log_vol() - plain_vol.mean_per_dim_log_vol(),
                        test - plain_test
                    );
                }
                Err(e) => println!("  {tag}: sampling ERROR {e} (test delta {:+.3})", test - plain_test),
            }
        }
    }
}

fn c8() {
    use weightvol::analysis::{gradient_update_correlation, ProbeSettings};
    let ds = synth_blobs(10, 24, 400, 1.1, 1234).unwrap();
    let (train_set, test_set) = ds.split_at(1500);
    let mut all_lower = 0;
    for seed in 0..5u64 {
        let plain_layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, 0.0);
        let dropout_layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, 0.3);
        let mk = |dropout: bool| TrainConfig {
            epochs: 8,
            batch_size: 64,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed,
            dropout_enabled: dropout,
        };
        let settings = ProbeSettings {
            checkpoints: vec![2, 4, 6, 8],
            probe_layer: 1,
            probe_units: 64,
            batches_per_probe: 50,
            batch_size: 32,
            probe_seed: 0x5eed ^ seed,
        };
        let t0 = std::time::Instant::now();
        let report = gradient_update_correlation(
            &mk(false),
            &mk(true),
            &train_set,
            &test_set,
            &plain_layers,
            &dropout_layers,
            &settings,
        )
        .unwrap();
        let pairs: Vec<(f64, f64)> = report
            .plain
            .iter()
            .zip(&report.dropout)
            .map(|(p, d)| (p.mean_abs_off_diag, d.mean_abs_off_diag))
            .collect();
        let lower = pairs.iter().all(|(p, d)| d < p);
        if lower {
            all_lower += 1;
        }
        println!(
            "seed {seed}: {:?} all_lower={lower} ({:.1}s)",
            pairs
                .iter()
                .map(|(p, d)| format!("{p:.3}>{d:.3}"))
                .collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        );
    }
    println!("all-checkpoints-lower in {all_lower}/5 seeds");
}

fn c9(_a: f64, _b: f64) {
    use weightvol::noise::{classify_volume_effect, train_with_noise, NoiseConfig, NoiseMode};
    use weightvol::volume::{track_volume, TrackSettings};
    let ds = synth_blobs(10, 24, 400, 1.1, 1234).unwrap();
    let (train_set, test_set) = ds.split_at(1500);
    let layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, 0.0);
    let track = TrackSettings { every_k_epochs: 100, mask_draws: 1, damping_scale: 1e-4, sample_limit: None };
    for seed in 0..5u64 {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed,
            dropout_enabled: false,
        };
        let (plain, plain_trail) = track_volume(&config, &train_set, &test_set, &layers, &track).unwrap();
        let plain_vol = plain_trail.final_report().unwrap().clone();
        let plain_test = plain.history.final_stats().unwrap().test_loss;
        let plain_mean = plain_vol.per_layer.iter().map(|l| l.log_vol).sum::<f64>()
            / plain_vol.per_layer.len() as f64;
        println!("seed {seed}: plain test {plain_test:.3} meanlogvol {plain_mean:.2}");

        for (lambda1, lambda2) in [(0.4, 0.1), (0.6, 0.2), (0.8, 0.3)] {
            let result = train_with_noise(
                &config,
                &NoiseConfig { mode: NoiseMode::Disentangle, lambda1, lambda2, lambda3: 0.0, refresh_every: 5 },
                &train_set,
                &test_set,
                &layers,
                &track,
            );
            report_case("dis", lambda1 + lambda2, result, &plain_vol, plain_test, &classify_volume_effect);
        }
        for lambda3 in [0.002, 0.004, 0.006, 0.01, 0.02, 0.04] {
            let result = train_with_noise(
                &config,
                &NoiseConfig { mode: NoiseMode::WeightNoise, lambda1: 0.0, lambda2: 0.0, lambda3, refresh_every: 5 },
                &train_set,
                &test_set,
                &layers,
                &track,
            );
            report_case("wn ", lambda3, result, &plain_vol, plain_test, &classify_volume_effect);
        }
    }
}

fn report_case(
    tag: &str,
    lambda: f64,
    result: weightvol::Result<weightvol::noise::NoiseTrainOutcome>,
    plain_vol: &weightvol::volume::VolumeReport,
    plain_test: f64,
    classify: &dyn Fn(
        &weightvol::volume::VolumeReport,
        &weightvol::volume::VolumeReport,
        f64,
    ) -> weightvol::Result<weightvol::noise::VolumeEffect>,
) {
    match result {
        Ok(run) => {
            if run.outcome.divergence.is_some() {
                println!("  {tag} {lambda}: DIVERGED");
                return;
            }
            let vol = run.trail.final_report().unwrap();
            let effect = classify(vol, plain_vol, 0.01).unwrap();
            let test = run.outcome.history.final_stats().unwrap().test_loss;
            let mean = vol.mean_per_dim_log_vol();
            println!(
                "  {tag} {lambda}: {effect:?} test {test:.3} (plain {plain_test:.3}) meanlogvol {mean:.2} delta_test {:+.3}",
                test - plain_test
            );
        }
        Err(e) => println!("  {tag} {lambda}: ERROR {e}"),
    }
}

/// Prints the walker loss trajectory to diagnose acceptance rates.
fn walk(perturb_std: f64, ft_lr: f64) {
    use weightvol::data::{batches, BatchPlan};
    use weightvol::nn::{backward, evaluate, forward, gather_batch, sgd_step, MomentumState};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    let ds = synth_blobs(10, 24, 400, 1.1, 1234).unwrap();
    let (train_set, test_set) = ds.split_at(1500);
    for dropout in [0.0, 0.3] {
        let layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, dropout);
        let config = TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
            dropout_enabled: dropout > 0.0,
        };
        let out = train(&config, &train_set, &test_set, &layers).unwrap();
        let (base, _) = evaluate(&out.final_params, &train_set).unwrap();
        println!("q={dropout} base loss {base:.4}");
        let mut walker = out.final_params.clone();
        let mut rng = rng_for(0, 55);
        for iter in 0..10 {
            let noise: Vec<f64> = (0..walker.weight_count())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    perturb_std * z
                })
                .collect();
            walker.add_flat(&noise);
            let (kicked, _) = evaluate(&walker, &train_set).unwrap();
            // one fine-tune epoch
            let mut momentum = MomentumState::zeros(&walker);
            let plan = BatchPlan::new(64, rng.gen(), 0);
            let use_masks = dropout > 0.0;
            for indices in batches(&train_set, &plan) {
                let (inputs, labels) = gather_batch(&train_set, &indices);
                let masks = use_masks.then(|| {
                    weightvol::nn::sample_dropout_masks(&layers, indices.len(), &mut rng)
                });
                let trace = forward(&walker, &inputs, &labels, masks.as_ref()).unwrap();
                let grads = backward(&walker, &trace, &labels).unwrap();
                sgd_step(&mut walker, &grads, ft_lr, &mut momentum, 0.0, 0.0).unwrap();
            }
            let (settled, _) = evaluate(&walker, &train_set).unwrap();
            println!("  iter {iter}: kicked {kicked:.4} settled {settled:.4} delta {:+.4}", settled - base);
        }
    }
}

fn c6(spread: f64, lr: f64) {
    println!("spread={spread} lr={lr}");
    let data_seed = 1234u64;
    let ds = synth_blobs(10, 24, 150 + 250, spread, data_seed).unwrap();
    let (train_set, test_set) = ds.split_at(10 * 150);
    let mut wins_vol_lap = 0;
    let mut wins_vol_samp = 0;
    let mut wins_gg = 0;
    for seed in 0..5u64 {
        let mut row = format!("seed {seed}:");
        let mut by_dropout = Vec::new();
        for dropout in [0.0, 0.3] {
            let layers = mlp_layers(&[24, 64, 32, 16, 10], Activation::Relu, dropout);
            let config = TrainConfig {
                epochs: 30,
                batch_size: 64,
                learning_rate: lr,
                lr_halve_every: None,
                momentum: 0.9,
                weight_decay: 0.0,
                seed,
                dropout_enabled: dropout > 0.0,
            };
            let t0 = std::time::Instant::now();
            let out = train(&config, &train_set, &test_set, &layers).unwrap();
            let stats = *out.history.final_stats().unwrap();
            let gg = stats.test_loss - stats.train_loss;

            let mut kfac_rng = rng_for(seed, 100);
            let factors = kfac_factors(
                &out.final_params,
                &train_set,
                dropout > 0.0,
                4,
                1e-4,
                &mut kfac_rng,
            )
            .unwrap();
            let lap = laplace_volume(&factors).unwrap();

            let posterior = PosteriorConfig {
                n_iters: 150,
                epsilon: 0.05,
                perturb_std: 0.008,
                fine_tune_lr: 0.03,
                fine_tune_batch: 128,
                fine_tune_dropout: dropout > 0.0,
                min_samples: 48,
            };
            let mut prng = rng_for(seed, 101);
            let samp_result = collect_posterior_samples(&out.final_params, &train_set, &posterior, &mut prng)
                .and_then(|samples| {
                    let cfg = SamplingVolumeConfig { subset_size: 16, subset_count: 12, shrinkage: 0.1 };
                    sampling_volume(&samples, &cfg, &mut prng).map(|r| (samples.accepted, r))
                });
            let elapsed = t0.elapsed().as_secs_f64();
            match samp_result {
                Ok((accepted, samp)) => {
                    row.push_str(&format!(
                        " [q={dropout}: tracc {:.3} teacc {:.3} gg {:.3} lap {:.4} samp {:.4} acc#{accepted} {elapsed:.1}s]",
                        stats.train_acc,
                        stats.test_acc,
                        gg,
                        lap.mean_per_dim_log_vol(),
                        samp.mean_per_dim_log_vol(),
                    ));
                    by_dropout.push((gg, lap.mean_per_dim_log_vol(), samp.mean_per_dim_log_vol()));
                }
                Err(e) => {
                    row.push_str(&format!(" [q={dropout}: ERROR {e}]"));
                    by_dropout.push((gg, f64::NAN, f64::NAN));
                }
            }
        }
        let (gg0, lap0, samp0) = by_dropout[0];
        let (gg1, lap1, samp1) = by_dropout[1];
        if lap1 > lap0 {
            wins_vol_lap += 1;
        }
        if samp1 > samp0 {
            wins_vol_samp += 1;
        }
        if gg1 < gg0 {
            wins_gg += 1;
        }
        println!("{row}");
    }
    println!("laplace wins {wins_vol_lap}/5, sampling wins {wins_vol_samp}/5, gg wins {wins_gg}/5");
}
