//! Softmax + cross-entropy loss with the numerically stable max-subtraction
//! form, plus the small label helpers the trainer uses.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Row-wise softmax over a [N, Z] logits tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(Error::usage(format!("softmax expects [N, Z] logits, got {shape:?}")));
    }
    let (n, z) = (shape[0], shape[1]);
    let mut out = Tensor::zeros(shape);
    let x = logits.data();
    let o = out.data_mut();
    for bi in 0..n {
        let row = &x[bi * z..(bi + 1) * z];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut o[bi * z..(bi + 1) * z];
        let mut sum = 0.0;
        for (ov, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *ov = e;
            sum += e;
        }
        for ov in orow.iter_mut() {
            *ov /= sum;
        }
    }
    Ok(out)
}

/// Mean cross-entropy between softmax probabilities and one-hot targets,
/// together with the gradient of that mean loss with respect to the logits:
/// (probs - targets) / N.
pub fn cross_entropy_with_grad(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() {
        return Err(Error::usage(format!(
            "loss expects matching shapes, got {:?} vs {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let probs = softmax(logits)?;
    let (n, z) = (logits.dim(0), logits.dim(1));
    let mut grad = Tensor::zeros(logits.shape());
    let p = probs.data();
    let t = targets.data();
    let g = grad.data_mut();
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for i in 0..n * z {
        if t[i] != 0.0 {
            // ln of a clamped probability keeps an all-wrong prediction finite.
            loss -= t[i] * p[i].max(1e-300).ln();
        }
        g[i] = (p[i] - t[i]) * inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// Expands class indices into a [N, Z] one-hot tensor.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[labels.len(), num_classes]);
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::data(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        out.data_mut()[i * num_classes + label] = 1.0;
    }
    Ok(out)
}

/// Predicted class per row: argmax, ties resolved to the lowest index.
pub fn argmax_rows(scores: &Tensor) -> Result<Vec<usize>> {
    let shape = scores.shape();
    if shape.len() != 2 {
        return Err(Error::usage(format!("argmax expects [N, Z], got {shape:?}")));
    }
    let (n, z) = (shape[0], shape[1]);
    let data = scores.data();
    let mut out = Vec::with_capacity(n);
    for bi in 0..n {
        let row = &data[bi * z..(bi + 1) * z];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        out.push(best);
    }
    Ok(out)
}
