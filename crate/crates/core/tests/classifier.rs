//! Network evaluation, SCG training and metrics on synthetic data.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vhed_eit::classifier::{evaluate, forward, loss, predict, train_scg, MlpParams, Standardizer, TrainConfig};

/// Two Gaussian clouds in `dim` dimensions whose means differ along a few coordinates.
fn clouds(n: usize, dim: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let x = DMatrix::from_fn(n, dim, |i, j| {
        let shift = if j < 4 { 1.2 * (2.0 * y[i] - 1.0) } else { 0.0 };
        shift + rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0)
    });
    (x, y)
}

/// Plain loop implementation of the network output.
fn reference_forward(p: &MlpParams, x: &[f64]) -> f64 {
    let s = |t: f64| 1.0 / (1.0 + (-t).exp());
    let mut out = p.b2;
    for h in 0..p.w1.nrows() {
        let mut a = p.b1[h];
        for (j, xj) in x.iter().enumerate() {
            a += p.w1[(h, j)] * xj;
        }
        out += p.w2[h] * s(a);
    }
    s(out)
}

#[test]
fn forward_matches_loop_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n_in, seed) in [(4160, 1), (3072, 2), (7, 3)] {
        let mut p = MlpParams::random(n_in, 1.0, seed);
        p.b1.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        p.b2 = rng.random_range(-1.0..1.0);
        let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (a, b) = (forward(&p, &x).unwrap(), reference_forward(&p, &x));
        assert!((a - b).abs() < 1e-12, "n_in {n_in}: {a} vs {b}");
    }
    assert!(forward(&MlpParams::zeros(3), &[1.0, 2.0]).is_err());
}

#[test]
fn training_is_deterministic_and_monotone() {
    let (x, y) = clouds(120, 40, 1);
    let cfg = TrainConfig { max_epochs: 150, ..TrainConfig::default() };
    let init = MlpParams::random(40, 1.0, 3);
    let a = train_scg(&init, &x, &y, &cfg).unwrap();
    let b = train_scg(&init, &x, &y, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.log.windows(2).all(|w| w[1].loss <= w[0].loss), "training loss increased");
    assert!(loss(&a.params, &x, &y).unwrap() < loss(&init, &x, &y).unwrap());
}

#[test]
fn different_seeds_give_different_weights_and_similar_accuracy() {
    let (x, y) = clouds(200, 60, 2);
    let (xt, yt) = clouds(400, 60, 3);
    let std = Standardizer::fit(&x).unwrap();
    let (x, xt) = (std.apply(&x).unwrap(), std.apply(&xt).unwrap());
    let cfg = TrainConfig { max_epochs: 200, ..TrainConfig::default() };
    let runs: Vec<_> = [5u64, 6]
        .iter()
        .map(|&seed| train_scg(&MlpParams::random(60, 1.0, seed), &x, &y, &TrainConfig { seed, ..cfg }).unwrap())
        .collect();
    assert_ne!(runs[0].params, runs[1].params);
    let acc: Vec<f64> = runs.iter().map(|r| evaluate(&r.params, &xt, &yt, 0.5).unwrap().accuracy).collect();
    assert!(acc.iter().all(|&a| a > 0.8), "accuracies {acc:?}");
    assert!((acc[0] - acc[1]).abs() < 0.05, "accuracies {acc:?}");
}

#[test]
fn shuffled_labels_do_not_generalise() {
    let (x, y) = clouds(200, 60, 4);
    let (xt, yt) = clouds(400, 60, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut permuted = y.clone();
    for i in (1..permuted.len()).rev() {
        permuted.swap(i, rng.random_range(0..=i));
    }
    let cfg = TrainConfig { max_epochs: 200, ..TrainConfig::default() };
    let fit = train_scg(&MlpParams::random(60, 1.0, 1), &x, &permuted, &cfg).unwrap();
    let m = evaluate(&fit.params, &xt, &yt, 0.5).unwrap();
    assert!((m.accuracy - 0.5).abs() < 0.12, "accuracy {} with shuffled labels", m.accuracy);
}

#[test]
fn validation_split_returns_the_best_checkpoint() {
    let (x, y) = clouds(150, 30, 6);
    let cfg = TrainConfig { max_epochs: 120, validation_fraction: 0.2, ..TrainConfig::default() };
    let fit = train_scg(&MlpParams::random(30, 1.0, 2), &x, &y, &cfg).unwrap();
    let best = fit.log.iter().filter_map(|r| r.validation_loss).fold(f64::INFINITY, f64::min);
    assert!(best.is_finite());
    let preds = predict(&fit.params, &x).unwrap();
    assert!(preds.iter().all(|p| *p > 0.0 && *p < 1.0));
}
