use super::{Matrix, NeuralError};
use crate::math::{exp, log_sum_exp};

/// Weighted-mean softmax cross-entropy.
///
/// Each row contributes `w_i * class_weights[y_i] * (-log softmax(z_i)[y_i])`
/// and the sum is divided by the total effective weight. Returns the loss
/// and its gradient with respect to the logits.
pub fn cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    sample_weights: &[f64],
    class_weights: &[f64],
) -> Result<(f64, Matrix), NeuralError> {
    let (n, c) = (logits.rows, logits.cols);
    if labels.len() != n {
        return Err(NeuralError::LengthMismatch { what: "labels", expected: n, got: labels.len() });
    }
    if sample_weights.len() != n {
        return Err(NeuralError::LengthMismatch { what: "sample weights", expected: n, got: sample_weights.len() });
    }
    if class_weights.len() != c {
        return Err(NeuralError::LengthMismatch { what: "class weights", expected: c, got: class_weights.len() });
    }
    for &w in sample_weights.iter().chain(class_weights) {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(NeuralError::InvalidWeight(w));
        }
    }
    let mut total_w = 0.0;
    for (&y, &w) in labels.iter().zip(sample_weights) {
        if y >= c {
            return Err(NeuralError::LabelOutOfRange { label: y, classes: c });
        }
        total_w += w * class_weights[y];
    }
    if total_w <= 0.0 {
        return Err(NeuralError::AllWeightsZero);
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, c);
    for i in 0..n {
        let z = logits.row(i);
        let y = labels[i];
        let lse = log_sum_exp(z);
        let w = sample_weights[i] * class_weights[y] / total_w;
        loss += w * (lse - z[y]);
        let g = grad.row_mut(i);
        for j in 0..c {
            let p = exp(z[j] - lse);
            g[j] = w * (p - if j == y { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}
