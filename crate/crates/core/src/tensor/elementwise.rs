use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Sigmoid inputs are clamped to `[-SIGMOID_CLAMP, SIGMOID_CLAMP]`, which
/// keeps `f32` outputs strictly inside `(0, 1)`.
pub const SIGMOID_CLAMP: f64 = 15.0;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of ReLU, using the forward output as the mask.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(output.shape(), data).expect("matching shapes")
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c = T::of(SIGMOID_CLAMP);
    x.map(|v| T::one() / (T::one() + (-v.max(-c).min(c)).exp()))
}

pub fn sigmoid_backward<T: Scalar>(
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let c = T::of(SIGMOID_CLAMP);
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .zip(grad.data())
        .map(|((&x, &q), &g)| {
            if x.abs() > c {
                T::zero()
            } else {
                g * q * (T::one() - q)
            }
        })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("matching shapes")
}

/// Replicates each voxel into a `factor^3` block.
pub fn nearest_upsample<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let [c, d, h, w] = x.dims4("upsample input")?;
    if factor == 0 {
        return Err(Error::Input("upsample factor must be at least 1".into()));
    }
    let f = factor;
    let (od, oh, ow) = (d * f, h * f, w * f);
    let mut out = Tensor::zeros(&[c, od, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                let row_in = ((ch * d + z / f) * h + y / f) * w;
                let row_out = ((ch * od + z) * oh + y) * ow;
                for xx in 0..ow {
                    dst[row_out + xx] = src[row_in + xx / f];
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`nearest_upsample`]: sums the gradient over each block.
pub fn nearest_upsample_backward<T: Scalar>(grad: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let [c, od, oh, ow] = grad.dims4("upsample gradient")?;
    let f = factor;
    if f == 0 || od % f != 0 || oh % f != 0 || ow % f != 0 {
        return Err(Error::Shape(format!(
            "gradient shape {:?} is not divisible by factor {f}",
            grad.shape()
        )));
    }
    let (d, h, w) = (od / f, oh / f, ow / f);
    let mut out = Tensor::zeros(&[c, d, h, w]);
    let src = grad.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                let row_in = ((ch * d + z / f) * h + y / f) * w;
                let row_out = ((ch * od + z) * oh + y) * ow;
                for xx in 0..ow {
                    dst[row_in + xx / f] = dst[row_in + xx / f] + src[row_out + xx];
                }
            }
        }
    }
    Ok(out)
}

/// Stacks two feature maps along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [ca, d, h, w] = a.dims4("concat lhs")?;
    let [cb, db, hb, wb] = b.dims4("concat rhs")?;
    if [d, h, w] != [db, hb, wb] {
        return Err(Error::Shape(format!(
            "cannot concatenate spatial shapes {:?} and {:?}",
            [d, h, w],
            [db, hb, wb]
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, d, h, w], data)
}

/// Splits a gradient of [`concat_channels`] back into its two halves.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [c, d, h, w] = x.dims4("split input")?;
    if first > c {
        return Err(Error::Shape(format!("cannot split {first} of {c} channels")));
    }
    let at = first * d * h * w;
    Ok((
        Tensor::from_vec(&[first, d, h, w], x.data()[..at].to_vec())?,
        Tensor::from_vec(&[c - first, d, h, w], x.data()[at..].to_vec())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations() {
        let x = Tensor::<f64>::from_vec(&[3], vec![-3.0, 0.0, 3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.0]);
        assert_eq!(sigmoid(&x).data()[1], 0.5);
        let huge = Tensor::<f32>::from_vec(&[2], vec![1e4, -1e4]).unwrap();
        let q = sigmoid(&huge);
        assert!(q.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn sigmoid_slope_at_zero_matches_central_difference() {
        let h = 1e-5;
        let f = |v: f64| sigmoid(&Tensor::from_vec(&[1], vec![v]).unwrap()).data()[0];
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let g = sigmoid_backward(&x, &sigmoid(&x), &Tensor::full(&[1], 1.0));
        assert_eq!(g.data()[0], 0.25);
        assert!((fd - 0.25).abs() < 1e-9);
    }

    #[test]
    fn upsample_identity_and_replication() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(nearest_upsample(&x, 1).unwrap(), x);
        let seven = Tensor::<f32>::full(&[1, 1, 1, 1], 7.0);
        let up = nearest_upsample(&seven, 2).unwrap();
        assert_eq!(up.shape(), &[1, 2, 2, 2]);
        assert!(up.data().iter().all(|&v| v == 7.0));
        let up = nearest_upsample(&x, 2).unwrap();
        assert_eq!(&up.data()[..4], &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let g = Tensor::<f64>::full(&[2, 4, 2, 6], 1.0);
        let back = nearest_upsample_backward(&g, 2).unwrap();
        assert_eq!(back.shape(), &[2, 2, 1, 3]);
        assert!(back.data().iter().all(|&v| v == 8.0));
        assert!(nearest_upsample_backward(&Tensor::<f64>::zeros(&[1, 3, 2, 2]), 2).is_err());
    }

    #[test]
    fn concat_then_split() {
        let a = Tensor::<f32>::full(&[1, 2, 2, 2], 1.0);
        let b = Tensor::<f32>::full(&[2, 2, 2, 2], 2.0);
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), &[3, 2, 2, 2]);
        let (a2, b2) = split_channels(&ab, 1).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(concat_channels(&ab, &Tensor::zeros(&[1, 2, 2, 1])).is_err());
    }
}
