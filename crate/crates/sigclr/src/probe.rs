//! Linear evaluation: multinomial logistic regression on frozen encoder
//! embeddings, trained by full-batch gradient descent with momentum,
//! reported as top-1 accuracy. The probe consumes plain feature matrices,
//! so it cannot backpropagate into the encoder by construction.

use crate::error::{Error, Result};
use crate::kernel::{matmul, Matrix};

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub max_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Stop when the epoch-to-epoch loss change falls below this.
    pub tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            max_epochs: 200,
            lr: 0.1,
            momentum: 0.9,
            tol: 1e-6,
        }
    }
}

/// Learned probe parameters: logits are `features * weight + bias`.
#[derive(Debug, Clone)]
pub struct ProbeWeights {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ProbeWeights {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        ProbeWeights {
            weight: Matrix::zeros(dim, classes),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }
}

/// Fit outcome: weights plus the training trace.
#[derive(Debug, Clone)]
pub struct ProbeFit {
    pub weights: ProbeWeights,
    pub epochs_run: usize,
    pub loss_curve: Vec<f64>,
}

/// Evaluation result.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub top1: f64,
    pub per_class: Vec<f64>,
    pub epochs_run: usize,
    pub train_loss_curve: Vec<f64>,
}

impl ProbeResult {
    /// JSON form emitted by the CLI: keys `top1`, `per_class`, `epochs_run`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "top1": self.top1,
            "per_class": self.per_class,
            "epochs_run": self.epochs_run,
        })
    }
}

fn validate_inputs(features: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "probe needs at least 2 classes, got {classes}"
        )));
    }
    if features.rows() == 0 {
        return Err(Error::InvalidArgument("probe features are empty".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside 0..{classes}"
        )));
    }
    Ok(())
}

fn logits_of(weights: &ProbeWeights, features: &Matrix) -> Result<Matrix> {
    let mut logits = matmul(features, &weights.weight)?;
    for r in 0..logits.rows() {
        for (v, b) in logits.row_mut(r).iter_mut().zip(weights.bias.iter()) {
            *v += *b;
        }
    }
    Ok(logits)
}

/// Mean softmax cross entropy of the probe on the given data.
pub fn softmax_xent(weights: &ProbeWeights, features: &Matrix, labels: &[usize]) -> Result<f64> {
    validate_inputs(features, labels, weights.classes())?;
    let logits = logits_of(weights, features)?;
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for &v in row {
            sum += (v - m).exp();
        }
        loss += m + sum.ln() - row[labels[r]];
    }
    Ok(loss / logits.rows() as f64)
}

/// Train the probe with full-batch momentum gradient descent until the
/// loss change drops below `tol` or `max_epochs` is reached. Zero
/// initialization makes the fit deterministic.
pub fn fit_linear_probe(
    features: &Matrix,
    labels: &[usize],
    classes: usize,
    config: &ProbeConfig,
) -> Result<ProbeFit> {
    validate_inputs(features, labels, classes)?;
    let rows = features.rows() as f64;
    let mut weights = ProbeWeights::zeros(features.cols(), classes);
    let mut vel_w = Matrix::zeros(features.cols(), classes);
    let mut vel_b = vec![0.0; classes];
    let mut curve = Vec::new();
    let mut epochs_run = 0;

    for _ in 0..config.max_epochs {
        let logits = logits_of(&weights, features)?;
        // Softmax probabilities minus the one-hot targets, scaled by 1/R.
        let mut delta = Matrix::zeros(logits.rows(), classes);
        let mut loss = 0.0;
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            for &v in row {
                sum += (v - m).exp();
            }
            let lse = m + sum.ln();
            loss += lse - row[labels[r]];
            let drow = delta.row_mut(r);
            for j in 0..classes {
                drow[j] = (row[j] - lse).exp() / rows;
            }
            drow[labels[r]] -= 1.0 / rows;
        }
        loss /= rows;

        let grad_w = matmul(&features.transpose(), &delta)?;
        let mut grad_b = vec![0.0; classes];
        for r in 0..delta.rows() {
            for (acc, v) in grad_b.iter_mut().zip(delta.row(r).iter()) {
                *acc += *v;
            }
        }
        for (v, g) in vel_w.data_mut().iter_mut().zip(grad_w.data().iter()) {
            *v = config.momentum * *v + *g;
        }
        for (w, v) in weights.weight.data_mut().iter_mut().zip(vel_w.data().iter()) {
            *w -= config.lr * *v;
        }
        for k in 0..classes {
            vel_b[k] = config.momentum * vel_b[k] + grad_b[k];
            weights.bias[k] -= config.lr * vel_b[k];
        }

        epochs_run += 1;
        let converged = curve
            .last()
            .map(|prev: &f64| (prev - loss).abs() < config.tol)
            .unwrap_or(false);
        curve.push(loss);
        if converged {
            break;
        }
    }

    Ok(ProbeFit {
        weights,
        epochs_run,
        loss_curve: curve,
    })
}

/// Top-1 accuracy with ties broken toward the lowest class index.
pub fn top1(weights: &ProbeWeights, features: &Matrix, labels: &[usize]) -> Result<ProbeResult> {
    validate_inputs(features, labels, weights.classes())?;
    let logits = logits_of(weights, features)?;
    let classes = weights.classes();
    let mut correct = 0usize;
    let mut class_correct = vec![0usize; classes];
    let mut class_total = vec![0usize; classes];
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let mut best = 0;
        for j in 1..classes {
            if row[j] > row[best] {
                best = j;
            }
        }
        class_total[labels[r]] += 1;
        if best == labels[r] {
            correct += 1;
            class_correct[labels[r]] += 1;
        }
    }
    let per_class = class_correct
        .iter()
        .zip(class_total.iter())
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect();
    Ok(ProbeResult {
        top1: correct as f64 / logits.rows() as f64,
        per_class,
        epochs_run: 0,
        train_loss_curve: Vec::new(),
    })
}
