use ndarray::ArrayView3;

use super::PolicyError;

/// Mean of the squared elementwise differences.
pub fn mse_loss(pred: ArrayView3<f64>, target: ArrayView3<f64>) -> Result<f64, PolicyError> {
    if pred.dim() != target.dim() {
        return Err(PolicyError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / pred.len() as f64)
}
