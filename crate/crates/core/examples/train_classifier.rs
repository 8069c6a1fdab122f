//! Train the one-hidden-layer network with scaled conjugate gradient on a
//! synthetic two-class problem and report the test metrics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vhed_eit::classifier::{evaluate, train_scg, MlpParams, Standardizer, TrainConfig};

/// Two Gaussian clouds in `dim` dimensions whose means differ along a few axes.
fn clouds(n: usize, dim: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let x = DMatrix::from_fn(n, dim, |i, j| {
        let shift = if j < 4 { 1.2 * (2.0 * y[i] - 1.0) } else { 0.0 };
        shift + rng.random_range(-1.0..1.0) * 2.0
    });
    (x, y)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dim = 64;
    let (x_train, y_train) = clouds(400, dim, 1);
    let (x_test, y_test) = clouds(200, dim, 2);
    let scaler = Standardizer::fit(&x_train)?;
    let (x_train, x_test) = (scaler.apply(&x_train)?, scaler.apply(&x_test)?);

    let cfg = TrainConfig { max_epochs: 200, ..TrainConfig::default() };
    for seed in 0..3 {
        let init = MlpParams::random(dim, cfg.init_scale, seed);
        let trained = train_scg(&init, &x_train, &y_train, &TrainConfig { seed, ..cfg })?;
        let last = trained.log.last().unwrap();
        let m = evaluate(&trained.params, &x_test, &y_test, 0.5)?;
        println!(
            "seed {seed}: {} iterations, final loss {:.4}, test accuracy {:.3}, sensitivity {:.3}, specificity {:.3}",
            trained.log.len(),
            last.loss,
            m.accuracy,
            m.sensitivity,
            m.specificity
        );
    }
    Ok(())
}
