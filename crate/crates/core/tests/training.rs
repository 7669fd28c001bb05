//! Learning properties of the trainers on small synthetic problems.

use dualspace::autoencoder::{encode, reconstruction_error, train_autoencoder, AeConfig};
use dualspace::data::{gen_gaussian_ring, gen_shapes_dataset, Dataset, RingParams, ShapeRanges};
use dualspace::gan::{discriminator_score, sample_generator, train_gan, GanConfig};
use dualspace::nn::{adam_step, chain, init_params, Activation, AdamConfig, AdamState};
use dualspace::{seed, Tape, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn one_mode(mu: [f64; 2], n: usize, s: u64) -> Tensor {
    let mut rng = seed::stream(s, "one-mode");
    let v: Vec<f64> = (0..n)
        .flat_map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [mu[0] + 0.1 * a, mu[1] + 0.1 * b]
        })
        .collect();
    Tensor::matrix(n, 2, v).unwrap()
}

fn column_means(x: &Tensor) -> Vec<f64> {
    let mut m = vec![0.0; x.ncols()];
    for r in x.rows().take(x.nrows()) {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    m.iter().map(|v| v / x.nrows() as f64).collect()
}

#[test]
fn gan_matches_one_mode_mean_on_most_seeds() {
    let mu = [1.5, -0.5];
    let mut passes = 0;
    for s in 0..3 {
        let real = one_mode(mu, 1024, s);
        let cfg = GanConfig {
            seed: s,
            epochs: 30,
            ..GanConfig::ring_default()
        };
        let m = train_gan(&real, &cfg).unwrap();
        let g = sample_generator(&m, 1000, 100 + s).unwrap();
        let mean = column_means(&g);
        let dist = ((mean[0] - mu[0]).powi(2) + (mean[1] - mu[1]).powi(2)).sqrt();

        let mut rng = seed::stream(s, "uniform");
        let noise: Vec<f64> = (0..2000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let noise = Tensor::matrix(1000, 2, noise).unwrap();
        let avg = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let real_score = avg(discriminator_score(&m, &real).unwrap());
        let noise_score = avg(discriminator_score(&m, &noise).unwrap());
        println!("seed {s}: |mean - mu| = {dist:.4}, D(real) = {real_score:.3}, D(noise) = {noise_score:.3}");

        for e in &m.report.epochs {
            assert!(e.d_loss.is_finite() && e.g_loss.is_finite());
        }
        if dist < 0.3 && real_score > noise_score {
            passes += 1;
        }
    }
    assert!(passes >= 2, "only {passes}/3 seeds passed");
}

#[test]
fn gan_trainer_is_space_agnostic() {
    // Same entry point for a 256-wide "pixel" matrix and a 16-wide "latent"
    // one; only the layer shapes differ.
    let mut rng = seed::rng(4);
    let wide = Tensor::matrix(64, 256, (0..64 * 256).map(|_| rng.random::<f64>()).collect()).unwrap();
    let narrow = Tensor::matrix(64, 16, (0..64 * 16).map(|_| rng.random::<f64>()).collect()).unwrap();
    let cfg = GanConfig {
        epochs: 1,
        batch_size: 32,
        ..GanConfig::shapes_default()
    };
    let a = train_gan(&wide, &cfg).unwrap();
    let b = train_gan(&narrow, &cfg).unwrap();
    assert_eq!((a.space_dim, b.space_dim), (256, 16));
    assert_eq!(a.report.steps, b.report.steps);
    assert_eq!(a.generator.layers().len(), b.generator.layers().len());
    assert_eq!(a.generator.in_dim(), b.generator.in_dim());
}

#[test]
fn adam_fits_linear_regression_within_200_steps() {
    let mut rng = seed::rng(9);
    let w_true = [0.7, -1.3, 0.4];
    let rows: Vec<Vec<f64>> = (0..32).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let x = Tensor::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows.iter().map(|r| r.iter().zip(w_true).map(|(a, b)| a * b).sum::<f64>() + 0.2).collect();
    let y = Tensor::matrix(32, 1, y).unwrap();

    let mut model = init_params(&chain(&[3, 1], Activation::Identity, Activation::Identity), 1).unwrap();
    let mut opt = AdamState::new(
        &model.params,
        AdamConfig {
            lr: 0.05,
            beta1: 0.9,
            ..AdamConfig::default()
        },
    );
    let mut losses = Vec::new();
    for _ in 0..200 {
        let mut t = Tape::new();
        let vars = model.params.bind(&mut t).unwrap();
        let xv = t.constant(x.clone()).unwrap();
        let yv = t.constant(y.clone()).unwrap();
        let out = model.forward(&mut t, &vars, xv).unwrap();
        let loss = t.mse_loss(out, yv).unwrap();
        losses.push(t.value(loss).unwrap().item());
        let g = t.backward(loss).unwrap();
        model.params.zero_grad();
        model.params.accumulate(&g, &vars).unwrap();
        adam_step(&mut model.params, &mut opt).unwrap();
    }
    let last = *losses.last().unwrap();
    println!("regression loss {:.3e} -> {last:.3e}", losses[0]);
    assert!(last < 1e-3 * losses[0]);
}

fn total_variance(d: &Dataset) -> f64 {
    d.samples.total_column_variance() / d.dim() as f64
}

fn moving_average_non_increasing(losses: &[f64], window: usize) -> bool {
    let ma: Vec<f64> = losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    let start = losses.len() / 2;
    // Windows that end in the final half.
    let tail = &ma[start.saturating_sub(window - 1)..];
    tail.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn shapes_autoencoder_reconstructs_held_in_data() {
    let d = gen_shapes_dataset(&ShapeRanges::default_for_side(16), 4096, 11).unwrap();
    let cfg = AeConfig::shapes_default();
    let m = train_autoencoder(&d, &cfg).unwrap();
    let err = reconstruction_error(&m, &d).unwrap();
    let var = total_variance(&d);
    let losses: Vec<f64> = m.report.epochs.iter().map(|e| e.loss).collect();
    println!("shapes ae: mse {:.5}, per-pixel variance {var:.5}, ratio {:.4}", err.mse_heldin, err.mse_heldin / var);
    assert!(losses.iter().all(|l| l.is_finite()));
    assert!(err.mse_heldin < 0.05 * var);
    assert!(moving_average_non_increasing(&losses, 10), "{losses:?}");
}

#[test]
fn ring_autoencoder_loss_settles() {
    let d = gen_gaussian_ring(&RingParams::new(8, 2.0, 0.1), 4096, 2).unwrap();
    let m = train_autoencoder(&d, &AeConfig::ring_default()).unwrap();
    let losses: Vec<f64> = m.report.epochs.iter().map(|e| e.loss).collect();
    println!("ring ae losses: first {:.4}, last {:.4}", losses[0], losses[losses.len() - 1]);
    assert!(losses.iter().all(|l| l.is_finite()));
    assert!(moving_average_non_increasing(&losses, 10), "{losses:?}");
}

#[test]
fn frozen_stats_survive_unrelated_calls() {
    let d = gen_gaussian_ring(&RingParams::new(8, 2.0, 0.1), 512, 5).unwrap();
    let cfg = AeConfig {
        epochs: 3,
        ..AeConfig::ring_default()
    };
    let m = train_autoencoder(&d, &cfg).unwrap();
    let before = encode(&m, &d.samples).unwrap().codes;
    reconstruction_error(&m, &d).unwrap();
    encode(&m, &d.samples.map(|v| v * 10.0)).unwrap();
    assert_eq!(encode(&m, &d.samples).unwrap().codes, before);
}
