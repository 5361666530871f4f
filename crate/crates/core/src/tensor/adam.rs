use super::{Scalar, Tensor};

/// A learnable tensor with its gradient and Adam moment estimates.
///
/// Moments are kept in `f64` regardless of the value type.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<f64>,
    pub adam_v: Tensor<f64>,
    pub step_count: u64,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
            value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter; gradients are zeroed
/// afterwards.
pub fn adam_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Parameter<T>>,
    config: &AdamConfig,
) {
    for p in params {
        p.step_count += 1;
        let t = p.step_count as i32;
        let correct1 = 1.0 - config.beta1.powi(t);
        let correct2 = 1.0 - config.beta2.powi(t);
        let values = p.value.data_mut();
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        for (i, g) in p.grad.data().iter().enumerate() {
            let g = g.as_f64();
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            let update = config.lr * m_hat / (v_hat.sqrt() + config.eps);
            values[i] = T::of(values[i].as_f64() - update);
        }
        p.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64, g: f64) -> Parameter<f64> {
        let mut p = Parameter::new(Tensor::from_vec(&[1], vec![v]).unwrap());
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0, 1.0);
        adam_step([&mut p], &AdamConfig::default());
        assert!((p.value.data()[0] + 0.001).abs() < 1e-6);
        assert_eq!(p.step_count, 1);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = scalar(0.25, 0.0);
        adam_step([&mut p], &AdamConfig::default());
        assert_eq!(p.value.data()[0], 0.25);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn identical_parameters_stay_identical() {
        let mut a = scalar(0.3, 0.0);
        let mut b = scalar(0.3, 0.0);
        for step in 0..50 {
            let g = (step as f64 * 0.7).sin();
            a.grad.data_mut()[0] = g;
            b.grad.data_mut()[0] = g;
            adam_step([&mut a, &mut b], &AdamConfig::default());
        }
        assert_eq!(a.value, b.value);
    }
}
