//! Mean binary cross-entropy between predicted occupancy and ground truth.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Predictions are clamped into `[BCE_EPSILON, 1 - BCE_EPSILON]`.
pub const BCE_EPSILON: f64 = 1e-7;

fn check<T: Scalar>(q: &Tensor<T>, c: &Tensor<T>) -> Result<()> {
    if q.shape() != c.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and target {:?} differ",
            q.shape(),
            c.shape()
        )));
    }
    if q.is_empty() {
        return Err(Error::Shape("empty prediction".into()));
    }
    Ok(())
}

/// `-(1/N) * sum(c ln q + (1 - c) ln(1 - q))`, accumulated in `f64`.
pub fn bce_loss<T: Scalar>(q: &Tensor<T>, c: &Tensor<T>) -> Result<f64> {
    check(q, c)?;
    let sum: f64 = q
        .data()
        .iter()
        .zip(c.data())
        .map(|(&q, &c)| {
            let q = q.as_f64().clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            let c = c.as_f64();
            c * q.ln() + (1.0 - c) * (1.0 - q).ln()
        })
        .sum();
    Ok(-sum / q.len() as f64)
}

/// `dL/dq`; zero where the clamp is active.
pub fn bce_loss_backward<T: Scalar>(q: &Tensor<T>, c: &Tensor<T>) -> Result<Tensor<T>> {
    check(q, c)?;
    let n = q.len() as f64;
    let data = q
        .data()
        .iter()
        .zip(c.data())
        .map(|(&q, &c)| {
            let (q, c) = (q.as_f64(), c.as_f64());
            if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&q) {
                return T::zero();
            }
            T::of(-(c / q - (1.0 - c) / (1.0 - q)) / n)
        })
        .collect();
    Tensor::from_vec(q.shape(), data)
}

/// `dL/dz` for `q = sigmoid(z)`, i.e. `(q - c) / N`. Equal to chaining
/// [`bce_loss_backward`] through the sigmoid wherever the clamp is inactive,
/// and still nonzero on saturated wrong voxels.
pub fn bce_logit_grad<T: Scalar>(q: &Tensor<T>, c: &Tensor<T>) -> Result<Tensor<T>> {
    check(q, c)?;
    let n = T::of(q.len() as f64);
    let data = q.data().iter().zip(c.data()).map(|(&q, &c)| (q - c) / n).collect();
    Tensor::from_vec(q.shape(), data)
}
