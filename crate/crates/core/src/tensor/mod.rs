//! A small dense tensor engine with hand-written backward passes.
//!
//! Tensors are row-major with the last axis fastest; feature maps are
//! `[channels, depth, height, width]` with width running along x. Every
//! operation is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod elementwise;
pub mod gradcheck;
pub mod loss;

pub use adam::{adam_step, AdamConfig, Parameter};
pub use conv::{conv3d, conv3d_backward, conv3d_transpose, conv3d_transpose_backward};
pub use elementwise::{
    concat_channels, nearest_upsample, nearest_upsample_backward, relu, relu_backward, sigmoid,
    sigmoid_backward, split_channels, SIGMOID_CLAMP,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{bce_logit_grad, bce_loss, bce_loss_backward, BCE_EPSILON};

use std::fmt::Debug;

use crate::error::{Error, Result};

/// Element type of a tensor.
pub trait Scalar:
    num_traits::Float + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha * A * B + beta * C` over strided row/column views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );
}

fn check_gemm_bounds(rows: usize, cols: usize, rs: usize, cs: usize, len: usize) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) * rs + (cols - 1) * cs;
        assert!(last < len, "gemm operand view exceeds its buffer");
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                check_gemm_bounds(m, k, rsa, csa, a.len());
                check_gemm_bounds(k, n, rsb, csb, b.len());
                check_gemm_bounds(m, n, rsc, csc, c.len());
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every view was bounds-checked against its slice above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The shape as `[C, D, H, W]`, or a shape error naming `what`.
    pub fn dims4(&self, what: &str) -> Result<[usize; 4]> {
        self.shape
            .as_slice()
            .try_into()
            .map_err(|_| Error::Shape(format!("{what} must be rank 4, got shape {:?}", self.shape)))
    }

    pub fn dims5(&self, what: &str) -> Result<[usize; 5]> {
        self.shape
            .as_slice()
            .try_into()
            .map_err(|_| Error::Shape(format!("{what} must be rank 5, got shape {:?}", self.shape)))
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Domain(format!("{what} has non-finite value at {i}"))),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.as_f64() * b.as_f64())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Tensor::<f32>::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        let t = Tensor::<f32>::zeros(&[1, 2, 3, 4]);
        assert_eq!(t.dims4("t").unwrap(), [1, 2, 3, 4]);
        assert!(t.dims5("t").is_err());
        let mut bad = t.clone();
        bad.data_mut()[5] = f32::NAN;
        assert!(bad.check_finite("bad").is_err());
        assert!(t.check_finite("t").is_ok());
    }

    #[test]
    fn gemm_strided() {
        // [1 2; 3 4] * [5 6; 7 8]^T with B given transposed via strides
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 2, 2, &a, 2, 1, &b, 1, 2, 0.0, &mut c, 2, 1);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}
