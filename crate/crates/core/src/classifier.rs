//! One-hidden-layer sigmoid network for ischemic/hemorrhagic classification.
//!
//! `F_θ(x) = f(W² f(W¹x + b¹) + b²)` with the logistic sigmoid `f`, trained
//! on the binary cross entropy by Møller's scaled conjugate gradient on the
//! full batch. Hemorrhagic is the positive class (label 1).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io;

pub const HIDDEN: usize = 30;
/// Outputs are clamped to `[ε, 1 − ε]` inside the logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("expected {expected} inputs, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("{0} labels for {1} samples")]
    Labels(usize, usize),
    #[error("label {0} is not 0 or 1")]
    BadLabel(f64),
    #[error("empty data set")]
    Empty,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("threshold {0} is outside (0, 1)")]
    Threshold(f64),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize, last: Box<MlpParams> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Network weights. `w1` is `HIDDEN × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn zeros(n_in: usize) -> Self {
        Self { w1: DMatrix::zeros(HIDDEN, n_in), b1: DVector::zeros(HIDDEN), w2: DVector::zeros(HIDDEN), b2: 0.0 }
    }

    /// Weights `U(−r, r)` with `r = scale/√fan_in`, biases zero.
    pub fn random(n_in: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = scale / (n_in as f64).sqrt();
        let r2 = scale / (HIDDEN as f64).sqrt();
        let w1 = DMatrix::from_fn(HIDDEN, n_in, |_, _| rng.random_range(-r1..r1));
        let w2 = DVector::from_fn(HIDDEN, |_, _| rng.random_range(-r2..r2));
        Self { w1, b1: DVector::zeros(HIDDEN), w2, b2: 0.0 }
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn n_params(&self) -> usize {
        HIDDEN * self.n_inputs() + 2 * HIDDEN + 1
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// `[W¹ row-major, b¹, W², b²]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for i in 0..HIDDEN {
            out.extend(self.w1.row(i).iter());
        }
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.push(self.b2);
        out
    }

    pub fn from_flat(n_in: usize, flat: &[f64]) -> Result<Self, ClassifierError> {
        let expected = HIDDEN * n_in + 2 * HIDDEN + 1;
        if flat.len() != expected {
            return Err(ClassifierError::Shape { expected, got: flat.len() });
        }
        let (w1, rest) = flat.split_at(HIDDEN * n_in);
        let (b1, rest) = rest.split_at(HIDDEN);
        let (w2, rest) = rest.split_at(HIDDEN);
        Ok(Self {
            w1: DMatrix::from_row_slice(HIDDEN, n_in, w1),
            b1: DVector::from_column_slice(b1),
            w2: DVector::from_column_slice(w2),
            b2: rest[0],
        })
    }
}

/// `y^p` for one input vector.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<f64, ClassifierError> {
    if x.len() != params.n_inputs() {
        return Err(ClassifierError::Shape { expected: params.n_inputs(), got: x.len() });
    }
    let h = (&params.w1 * DVector::from_column_slice(x) + &params.b1).map(sigmoid);
    Ok(sigmoid(params.w2.dot(&h) + params.b2))
}

/// `y^p` for every row of `x` (samples × features).
pub fn predict(params: &MlpParams, x: &DMatrix<f64>) -> Result<Vec<f64>, ClassifierError> {
    check_inputs(params, x)?;
    let (_, out) = hidden_and_output(params, x);
    Ok(out)
}

fn check_inputs(params: &MlpParams, x: &DMatrix<f64>) -> Result<(), ClassifierError> {
    if x.ncols() != params.n_inputs() {
        return Err(ClassifierError::Shape { expected: params.n_inputs(), got: x.ncols() });
    }
    Ok(())
}

/// Hidden activations (samples × HIDDEN) and outputs.
fn hidden_and_output(params: &MlpParams, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut h = x * params.w1.transpose();
    for mut row in h.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sigmoid(*v + params.b1[j]);
        }
    }
    let out = (&h * &params.w2).iter().map(|a| sigmoid(a + params.b2)).collect();
    (h, out)
}

fn bce(p: f64, y: f64) -> f64 {
    let pc = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
    -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln()
}

/// Summed binary cross entropy over the batch.
pub fn loss(params: &MlpParams, x: &DMatrix<f64>, y: &[f64]) -> Result<f64, ClassifierError> {
    check_batch(params, x, y)?;
    let (_, out) = hidden_and_output(params, x);
    Ok(out.iter().zip(y).map(|(&p, &t)| bce(p, t)).sum())
}

fn check_batch(params: &MlpParams, x: &DMatrix<f64>, y: &[f64]) -> Result<(), ClassifierError> {
    check_inputs(params, x)?;
    if x.nrows() == 0 {
        return Err(ClassifierError::Empty);
    }
    if y.len() != x.nrows() {
        return Err(ClassifierError::Labels(y.len(), x.nrows()));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(ClassifierError::BadLabel(bad));
    }
    Ok(())
}

/// Loss and its exact gradient by backpropagation.
pub fn loss_and_grad(params: &MlpParams, x: &DMatrix<f64>, y: &[f64]) -> Result<(f64, MlpParams), ClassifierError> {
    check_batch(params, x, y)?;
    let (h, out) = hidden_and_output(params, x);
    let n = x.nrows();
    let mut value = 0.0;
    // ∂ℒ/∂(output pre-activation); zero where the clamp is active
    let mut d_out = DVector::zeros(n);
    for j in 0..n {
        let (p, t) = (out[j], y[j]);
        value += bce(p, t);
        d_out[j] = if (LOG_CLAMP..=1.0 - LOG_CLAMP).contains(&p) { p - t } else { 0.0 };
    }
    let g_w2 = h.transpose() * &d_out;
    let g_b2 = d_out.sum();
    // ∂ℒ/∂(hidden pre-activation)
    let mut d_hidden = &d_out * params.w2.transpose();
    for ((i, j), v) in d_hidden.iter_mut().enumerate().map(|(k, v)| ((k % n, k / n), v)) {
        let a = h[(i, j)];
        *v *= a * (1.0 - a);
    }
    let g_w1 = d_hidden.transpose() * x;
    let g_b1 = DVector::from_iterator(HIDDEN, d_hidden.column_iter().map(|c| c.sum()));
    Ok((value, MlpParams { w1: g_w1, b1: g_b1, w2: g_w2, b2: g_b2 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Stop when the loss decreases by less than this fraction over `window` epochs.
    pub tolerance: f64,
    pub window: usize,
    pub validation_fraction: f64,
    /// Multiplier on `1/√fan_in` for the initial weight range.
    pub init_scale: f64,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_epochs: 500, tolerance: 1e-8, window: 10, validation_fraction: 0.0, init_scale: 1.0, seed: 0, repetitions: 5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.repetitions == 0 {
            return Err(ClassifierError::Config("repetitions must be at least 1".into()));
        }
        if !(0.0..=0.3).contains(&self.validation_fraction) {
            return Err(ClassifierError::Config(format!("validation fraction {} not in [0, 0.3]", self.validation_fraction)));
        }
        if self.max_epochs == 0 || self.window == 0 {
            return Err(ClassifierError::Config("max_epochs and window must be positive".into()));
        }
        if !(self.init_scale > 0.0) || !(self.tolerance >= 0.0) {
            return Err(ClassifierError::Config("init_scale must be positive and tolerance non-negative".into()));
        }
        Ok(())
    }
}

/// One SCG iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    /// Training loss after the iteration.
    pub loss: f64,
    /// Scale parameter λ after the iteration.
    pub lambda: f64,
    pub accepted: bool,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: MlpParams,
    pub log: Vec<LogRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

/// Minimise the training BCE from `init` by scaled conjugate gradient.
///
/// The rows of `x` are shuffled with `cfg.seed` first; with a validation
/// fraction the tail of the shuffled set is held out and the parameters with
/// the lowest validation loss are returned.
pub fn train_scg(init: &MlpParams, x: &DMatrix<f64>, y: &[f64], cfg: &TrainConfig) -> Result<Trained, ClassifierError> {
    cfg.validate()?;
    check_batch(init, x, y)?;
    let n_in = init.n_inputs();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_val = (cfg.validation_fraction * x.nrows() as f64).floor() as usize;
    let n_train = x.nrows() - n_val;
    if n_train == 0 {
        return Err(ClassifierError::Empty);
    }
    let xt = x.select_rows(&order[..n_train]);
    let yt: Vec<f64> = order[..n_train].iter().map(|&i| y[i]).collect();
    let xv = x.select_rows(&order[n_train..]);
    let yv: Vec<f64> = order[n_train..].iter().map(|&i| y[i]).collect();

    let eval = |w: &[f64]| -> (f64, Vec<f64>) {
        let p = MlpParams::from_flat(n_in, w).expect("flat length is fixed");
        let (l, g) = loss_and_grad(&p, &xt, &yt).expect("batch validated");
        (l, g.to_flat())
    };
    let val_loss = |w: &[f64]| -> Option<f64> {
        (n_val > 0).then(|| loss(&MlpParams::from_flat(n_in, w).expect("flat length is fixed"), &xv, &yv).expect("batch validated"))
    };

    // Møller (1993), with the usual constants
    const SIGMA: f64 = 5e-5;
    let mut lambda = 5e-7;
    let mut lambda_bar = 0.0;
    let n_w = init.n_params();
    let mut w = init.to_flat();
    let (mut e_w, g) = eval(&w);
    if !e_w.is_finite() {
        return Err(ClassifierError::Divergence { epoch: 0, last: Box::new(init.clone()) });
    }
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut success = true;
    let mut delta = 0.0;
    let mut since_restart = 0;
    let mut log = Vec::with_capacity(cfg.max_epochs);
    let mut history = vec![e_w];
    let mut best = (val_loss(&w).unwrap_or(f64::INFINITY), w.clone());

    for epoch in 1..=cfg.max_epochs {
        let p_sq = dot(&p, &p);
        if p_sq == 0.0 {
            break;
        }
        if success {
            let sigma_k = SIGMA / p_sq.sqrt();
            let (_, g_shift) = eval(&axpy(sigma_k, &p, &w));
            // s = (E'(w + σp) − E'(w))/σ, with E'(w) = −r
            let s: Vec<f64> = g_shift.iter().zip(&r).map(|(gs, ri)| (gs + ri) / sigma_k).collect();
            delta = dot(&p, &s);
        }
        delta += (lambda - lambda_bar) * p_sq;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / p_sq);
            delta = -delta + lambda * p_sq;
            lambda = lambda_bar;
        }
        let mu = dot(&p, &r);
        let alpha = mu / delta;
        let w_new = axpy(alpha, &p, &w);
        let (e_new, g_new) = eval(&w_new);
        if !e_new.is_finite() {
            let last = MlpParams::from_flat(n_in, &w).expect("flat length is fixed");
            return Err(ClassifierError::Divergence { epoch, last: Box::new(last) });
        }
        let comparison = 2.0 * delta * (e_w - e_new) / (mu * mu);
        let accepted = comparison >= 0.0 && e_new <= e_w;
        if accepted {
            w = w_new;
            e_w = e_new;
            let r_new: Vec<f64> = g_new.iter().map(|v| -v).collect();
            lambda_bar = 0.0;
            success = true;
            since_restart += 1;
            if since_restart == n_w {
                p = r_new.clone();
                since_restart = 0;
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                p = axpy(beta, &p, &r_new);
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / p_sq;
        }
        let v = if accepted { val_loss(&w) } else { None };
        if let Some(v) = v {
            if v < best.0 {
                best = (v, w.clone());
            }
        }
        log.push(LogRow { epoch, loss: e_w, lambda, accepted, validation_loss: v });
        history.push(e_w);
        if history.len() > cfg.window {
            let old = history[history.len() - 1 - cfg.window];
            if old - e_w <= cfg.tolerance * old.abs() {
                break;
            }
        }
        if r.iter().all(|v| *v == 0.0) {
            break;
        }
    }
    let final_w = if n_val > 0 { best.1 } else { w };
    Ok(Trained { params: MlpParams::from_flat(n_in, &final_w)?, log })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl Metrics {
    /// Metrics from predicted outputs; `y^p ≥ threshold` counts as hemorrhagic.
    pub fn from_predictions(pred: &[f64], y: &[f64], threshold: f64) -> Result<Self, ClassifierError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ClassifierError::Threshold(threshold));
        }
        if pred.is_empty() {
            return Err(ClassifierError::Empty);
        }
        if pred.len() != y.len() {
            return Err(ClassifierError::Labels(y.len(), pred.len()));
        }
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for (&p, &t) in pred.iter().zip(y) {
            match (p >= threshold, t == 1.0) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if a + b == 0 { f64::NAN } else { a as f64 / (a + b) as f64 };
        Ok(Self {
            tp,
            tn,
            fp,
            fn_,
            accuracy: (tp + tn) as f64 / pred.len() as f64,
            sensitivity: ratio(tp, fn_),
            specificity: ratio(tn, fp),
        })
    }
}

pub fn evaluate(params: &MlpParams, x: &DMatrix<f64>, y: &[f64], threshold: f64) -> Result<Metrics, ClassifierError> {
    if x.nrows() == 0 {
        return Err(ClassifierError::Empty);
    }
    Metrics::from_predictions(&predict(params, x)?, y, threshold)
}

/// Per-feature z-score with training-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Constant features get scale 1 so they map to zero.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self, ClassifierError> {
        let n = x.nrows();
        if n == 0 {
            return Err(ClassifierError::Empty);
        }
        let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n as f64).collect();
        let scale = x
            .column_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ClassifierError> {
        if x.ncols() != self.mean.len() {
            return Err(ClassifierError::Shape { expected: self.mean.len(), got: x.ncols() });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.scale[j]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n_inputs: usize,
    pub hidden: usize,
    pub layout: String,
}

/// Flat parameters as little-endian `f64` with a shape sidecar.
pub fn write_checkpoint(path: &Path, params: &MlpParams) -> std::io::Result<()> {
    io::write_f64(path, &params.to_flat())?;
    io::write_json(
        &io::sidecar(path),
        &CheckpointMeta { n_inputs: params.n_inputs(), hidden: HIDDEN, layout: "W1 row-major, b1, W2, b2".into() },
    )
}

pub fn read_checkpoint(path: &Path) -> Result<MlpParams, ClassifierError> {
    let meta: CheckpointMeta = io::read_json(&io::sidecar(path))?;
    if meta.hidden != HIDDEN {
        return Err(ClassifierError::Shape { expected: HIDDEN, got: meta.hidden });
    }
    MlpParams::from_flat(meta.n_inputs, &io::read_f64(path)?)
}

/// Training log as comma-separated rows.
pub fn write_log(path: &Path, log: &[LogRow]) -> std::io::Result<()> {
    let mut s = String::from("epoch,loss,lambda,accepted,validation_loss\n");
    for r in log {
        let v = r.validation_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        s.push_str(&format!("{},{:e},{:e},{},{}\n", r.epoch, r.loss, r.lambda, r.accepted, v));
    }
    io::write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..n).map(|i| if x[(i, 0)] + 0.5 * x[(i, 1)] > 0.1 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn zero_params_give_one_half() {
        let p = MlpParams::zeros(5);
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0, 0.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_sample_loss_is_ln2() {
        let p = MlpParams::zeros(3);
        let x = DMatrix::from_row_slice(1, 3, &[0.2, 0.1, -0.4]);
        assert!((loss(&p, &x, &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn flat_round_trip() {
        let p = MlpParams::random(7, 1.0, 3);
        assert_eq!(MlpParams::from_flat(7, &p.to_flat()).unwrap(), p);
        assert!(MlpParams::from_flat(6, &p.to_flat()).is_err());
    }

    #[test]
    fn separable_toy_is_learned() {
        let (x, y) = toy(200, 1);
        let init = MlpParams::random(2, 1.0, 2);
        let cfg = TrainConfig { max_epochs: 200, ..TrainConfig::default() };
        let out = train_scg(&init, &x, &y, &cfg).unwrap();
        let m = evaluate(&out.params, &x, &y, 0.5).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(out.log.windows(2).all(|w| w[1].loss <= w[0].loss));
    }

    #[test]
    fn constant_predictor_ties_are_positive() {
        let y = [1.0, 0.0, 1.0, 0.0];
        let m = Metrics::from_predictions(&[0.5; 4], &y, 0.5).unwrap();
        assert_eq!((m.accuracy, m.sensitivity, m.specificity), (0.5, 1.0, 0.0));
        assert!(Metrics::from_predictions(&[], &[], 0.5).is_err());
        assert!(Metrics::from_predictions(&[0.3], &[1.0], 1.0).is_err());
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let s = Standardizer::fit(&x).unwrap();
        let z = s.apply(&x).unwrap();
        assert!((z.column(0).sum()).abs() < 1e-15);
        assert!((z.column(0).norm_squared() / 3.0 - 1.0).abs() < 1e-12);
        assert!(z.column(1).iter().all(|v| *v == 0.0));
    }
}
