//! The coarse-to-fine U-Net with an explicit backward pass.
//!
//! Level 0 is full resolution. A stem convolution lifts the occupancy cube
//! to `base` channels; encoder block `i` halves the resolution with a
//! stride-2 convolution and refines with a second convolution. Decoder
//! block `i` doubles the resolution with a kernel-2 transposed convolution,
//! concatenates the level `i - 1` skip features and fuses them. Each
//! decoder scale owns a 1x1x1 head producing logits; heads are summed
//! coarse-to-fine after nearest-neighbour upsampling and a single sigmoid
//! turns the full-resolution sum into occupancy probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::UNetConfig;
use crate::error::{Error, Result};
use crate::partition::{CubeIndex, CubeSize, OccupancyCube};
use crate::tensor::checkpoint::{read_checkpoint, write_checkpoint};
use crate::tensor::{
    bce_logit_grad, bce_loss, concat_channels, conv3d, conv3d_backward, conv3d_transpose,
    conv3d_transpose_backward, nearest_upsample, nearest_upsample_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, split_channels, Parameter, Scalar, Tensor,
};

/// Per-voxel occupancy probabilities in the cube's linear voxel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityCube {
    pub index: CubeIndex,
    pub size: CubeSize,
    pub probs: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    weight: usize,
    bias: usize,
    stride: usize,
    padding: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: Conv,
    down: Vec<Conv>,
    conv: Vec<Conv>,
    up: Vec<Conv>,
    fuse: Vec<Conv>,
    /// `(level, conv)`, ascending by level.
    heads: Vec<(usize, Conv)>,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    fan_in: usize,
    is_weight: bool,
}

fn build_layout(c: &UNetConfig) -> (Layout, Vec<ParamSpec>) {
    let k = c.kernel;
    let pad = k / 2;
    let levels = c.levels as usize;
    let mut specs = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, fan_in: usize, stride: usize, padding: usize| {
        let cout = if name.ends_with(".up") { shape[1] } else { shape[0] };
        specs.push(ParamSpec {
            name: format!("{name}.weight"),
            shape,
            fan_in,
            is_weight: true,
        });
        specs.push(ParamSpec {
            name: format!("{name}.bias"),
            shape: vec![cout],
            fan_in,
            is_weight: false,
        });
        Conv {
            weight: specs.len() - 2,
            bias: specs.len() - 1,
            stride,
            padding,
        }
    };
    let k3 = k * k * k;
    let ch = |l: usize| c.channels(l);

    let stem = add("stem".into(), vec![ch(0), 1, k, k, k], k3, 1, pad);
    let mut down = Vec::new();
    let mut conv = Vec::new();
    for i in 1..=levels {
        down.push(add(format!("enc{i}.down"), vec![ch(i), ch(i - 1), k, k, k], ch(i - 1) * k3, 2, pad));
        conv.push(add(format!("enc{i}.conv"), vec![ch(i), ch(i), k, k, k], ch(i) * k3, 1, pad));
    }
    let mut up = vec![None; levels];
    let mut fuse = vec![None; levels];
    for i in (1..=levels).rev() {
        up[i - 1] = Some(add(format!("dec{i}.up"), vec![ch(i), ch(i - 1), 2, 2, 2], ch(i), 2, 0));
        fuse[i - 1] = Some(add(
            format!("dec{i}.fuse"),
            vec![ch(i - 1), 2 * ch(i - 1), k, k, k],
            2 * ch(i - 1) * k3,
            1,
            pad,
        ));
    }
    let head_levels: Vec<usize> = if c.multiscale { (0..levels).collect() } else { vec![0] };
    let heads = head_levels
        .into_iter()
        .map(|j| (j, add(format!("head{j}"), vec![1, ch(j), 1, 1, 1], ch(j), 1, 0)))
        .collect();
    let layout = Layout {
        stem,
        down,
        conv,
        up: up.into_iter().map(Option::unwrap).collect(),
        fuse: fuse.into_iter().map(Option::unwrap).collect(),
        heads,
    };
    (layout, specs)
}

/// Learnable parameters of the network together with its architecture.
#[derive(Debug, Clone)]
pub struct ModelWeights<T = f32> {
    config: UNetConfig,
    names: Vec<String>,
    params: Vec<Parameter<T>>,
    layout: Layout,
}

/// Activations kept from a forward pass for the backward pass.
pub struct Trace<T> {
    input: Tensor<T>,
    f: Vec<Tensor<T>>,
    a: Vec<Tensor<T>>,
    u: Vec<Tensor<T>>,
    cat: Vec<Tensor<T>>,
    g: Vec<Tensor<T>>,
    logits: Tensor<T>,
    pub probs: Tensor<T>,
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, t: Tensor<T>) -> Result<()> {
    match slot {
        Some(s) => s.add_assign(&t),
        None => {
            *slot = Some(t);
            Ok(())
        }
    }
}

impl<T: Scalar> ModelWeights<T> {
    fn from_fn(config: UNetConfig, mut init: impl FnMut(&ParamSpec) -> Tensor<T>) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(&config);
        Ok(ModelWeights {
            config,
            names: specs.iter().map(|s| s.name.clone()).collect(),
            params: specs.iter().map(|s| Parameter::new(init(s))).collect(),
            layout,
        })
    }

    /// He-uniform weights drawn from a generator seeded by `config.seed`.
    /// Biases and the coarse heads (`head1..`) start at zero, so a
    /// multiscale model starts out computing the same function as the
    /// single-head model with the same seed.
    pub fn init(config: UNetConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::from_fn(config, |s| {
            if !s.is_weight || (s.name.starts_with("head") && s.name != "head0.weight") {
                return Tensor::zeros(&s.shape);
            }
            let bound = (6.0 / s.fan_in as f64).sqrt();
            let n = s.shape.iter().product();
            let data = (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect();
            Tensor::from_vec(&s.shape, data).expect("shape matches count")
        })
    }

    /// All parameters zero, so every logit is zero and every probability 0.5.
    pub fn zeros(config: UNetConfig) -> Result<Self> {
        Self::from_fn(config, |s| Tensor::zeros(&s.shape))
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            config: self.config,
            names: self.names.clone(),
            params: self.params.iter().map(|p| Parameter::new(p.value.cast())).collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.scalar_count());
        let mut it = values.iter();
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = T::of(*it.next().unwrap());
            }
        }
    }

    fn input_shape(&self) -> [usize; 4] {
        let [l, w, h] = self.config.cube_size.0.map(|s| s as usize);
        [1, h, w, l]
    }

    /// Cube as a `[1, h, w, l]` tensor of zeros and ones.
    pub fn cube_tensor(&self, cube: &OccupancyCube) -> Result<Tensor<T>> {
        if cube.size() != self.config.cube_size {
            return Err(Error::Shape(format!(
                "cube size {:?} does not match model cube size {:?}",
                cube.size().0,
                self.config.cube_size.0
            )));
        }
        let mut t = Tensor::zeros(&self.input_shape());
        let data = t.data_mut();
        for i in cube.voxels.occupied() {
            data[i] = T::one();
        }
        Ok(t)
    }

    fn conv(&self, c: Conv, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv3d(x, &self.params[c.weight].value, &self.params[c.bias].value, c.stride, c.padding)
    }

    fn tconv(&self, c: Conv, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv3d_transpose(x, &self.params[c.weight].value, &self.params[c.bias].value, c.stride)
    }

    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        if input.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "model input must be {:?}, got {:?}",
                self.input_shape(),
                input.shape()
            )));
        }
        input.check_finite("model input")?;
        let ly = &self.layout;
        let levels = self.config.levels as usize;

        let mut f = vec![relu(&self.conv(ly.stem, input)?)];
        let mut a = Vec::with_capacity(levels);
        for i in 1..=levels {
            let ai = relu(&self.conv(ly.down[i - 1], &f[i - 1])?);
            f.push(relu(&self.conv(ly.conv[i - 1], &ai)?));
            a.push(ai);
        }

        let mut u = vec![None; levels];
        let mut cat = vec![None; levels];
        let mut g: Vec<Option<Tensor<T>>> = vec![None; levels];
        for i in (1..=levels).rev() {
            let src = if i == levels { &f[levels] } else { g[i].as_ref().unwrap() };
            let ui = relu(&self.tconv(ly.up[i - 1], src)?);
            let ci = concat_channels(&ui, &f[i - 1])?;
            g[i - 1] = Some(relu(&self.conv(ly.fuse[i - 1], &ci)?));
            u[i - 1] = Some(ui);
            cat[i - 1] = Some(ci);
        }
        let g: Vec<Tensor<T>> = g.into_iter().map(Option::unwrap).collect();

        let mut sum: Option<(usize, Tensor<T>)> = None;
        for &(j, head) in ly.heads.iter().rev() {
            let hj = self.conv(head, &g[j])?;
            sum = Some(match sum {
                None => (j, hj),
                Some((level, s)) => {
                    let mut up = nearest_upsample(&s, 1 << (level - j))?;
                    up.add_assign(&hj)?;
                    (j, up)
                }
            });
        }
        let (_, logits) = sum.expect("at least one head");
        let probs = sigmoid(&logits);
        Ok(Trace {
            input: input.clone(),
            f,
            a,
            u: u.into_iter().map(Option::unwrap).collect(),
            cat: cat.into_iter().map(Option::unwrap).collect(),
            g,
            logits,
            probs,
        })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(input)?.probs)
    }

    pub fn predict(&self, cube: &OccupancyCube) -> Result<ProbabilityCube> {
        let q = self.forward(&self.cube_tensor(cube)?)?;
        Ok(ProbabilityCube {
            index: cube.index,
            size: cube.size(),
            probs: q.data().iter().map(|v| v.as_f64() as f32).collect(),
        })
    }

    /// Parameter gradients given `dL/dq`, one tensor per parameter.
    pub fn backward(&self, trace: &Trace<T>, grad_probs: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.backward_logits(trace, sigmoid_backward(&trace.logits, &trace.probs, grad_probs))
    }

    /// Parameter gradients given the gradient with respect to the summed logits.
    pub fn backward_logits(&self, trace: &Trace<T>, grad_logits: Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let ly = &self.layout;
        let levels = self.config.levels as usize;
        let mut grads: Vec<Tensor<T>> =
            self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let put = |grads: &mut Vec<Tensor<T>>, c: Conv, w: Tensor<T>, b: Tensor<T>| {
            grads[c.weight] = w;
            grads[c.bias] = b;
        };

        let mut ds = grad_logits;
        let mut ds_level = 0;
        let mut dg: Vec<Option<Tensor<T>>> = vec![None; levels + 1];
        for &(j, head) in &ly.heads {
            if j != ds_level {
                ds = nearest_upsample_backward(&ds, 1 << (j - ds_level))?;
                ds_level = j;
            }
            let cg = conv3d_backward(&trace.g[j], &self.params[head.weight].value, &ds, 1, 0, true)?;
            put(&mut grads, head, cg.weight, cg.bias);
            dg[j] = cg.input;
        }

        let mut df: Vec<Option<Tensor<T>>> = vec![None; levels + 1];
        for i in 1..=levels {
            let dgi = dg[i - 1].take().expect("every decoder output feeds a consumer");
            let d = relu_backward(&trace.g[i - 1], &dgi);
            let fuse = ly.fuse[i - 1];
            let cg = conv3d_backward(
                &trace.cat[i - 1],
                &self.params[fuse.weight].value,
                &d,
                1,
                fuse.padding,
                true,
            )?;
            put(&mut grads, fuse, cg.weight, cg.bias);
            let (du, dskip) = split_channels(&cg.input.unwrap(), self.config.channels(i - 1))?;
            accumulate(&mut df[i - 1], dskip)?;

            let d = relu_backward(&trace.u[i - 1], &du);
            let up = ly.up[i - 1];
            let src = if i == levels { &trace.f[levels] } else { &trace.g[i] };
            let tg = conv3d_transpose_backward(src, &self.params[up.weight].value, &d, up.stride)?;
            put(&mut grads, up, tg.weight, tg.bias);
            let slot = if i == levels { &mut df[levels] } else { &mut dg[i] };
            accumulate(slot, tg.input.unwrap())?;
        }

        for i in (1..=levels).rev() {
            let dfi = df[i].take().expect("encoder output gradient");
            let d = relu_backward(&trace.f[i], &dfi);
            let conv = ly.conv[i - 1];
            let cg = conv3d_backward(&trace.a[i - 1], &self.params[conv.weight].value, &d, 1, conv.padding, true)?;
            put(&mut grads, conv, cg.weight, cg.bias);
            let d = relu_backward(&trace.a[i - 1], &cg.input.unwrap());
            let down = ly.down[i - 1];
            let cg = conv3d_backward(
                &trace.f[i - 1],
                &self.params[down.weight].value,
                &d,
                down.stride,
                down.padding,
                true,
            )?;
            put(&mut grads, down, cg.weight, cg.bias);
            accumulate(&mut df[i - 1], cg.input.unwrap())?;
        }

        let d = relu_backward(&trace.f[0], &df[0].take().expect("stem gradient"));
        let stem = ly.stem;
        let cg = conv3d_backward(&trace.input, &self.params[stem.weight].value, &d, 1, stem.padding, false)?;
        put(&mut grads, stem, cg.weight, cg.bias);
        Ok(grads)
    }

    /// BCE of the prediction for `input` against `target` and its gradient
    /// with respect to every parameter.
    pub fn loss_and_grads(&self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Vec<Tensor<T>>)> {
        let trace = self.forward_trace(input)?;
        let loss = bce_loss(&trace.probs, target)?;
        let dz = bce_logit_grad(&trace.probs, target)?;
        Ok((loss, self.backward_logits(&trace, dz)?))
    }
}

impl ModelWeights<f32> {
    pub fn to_checkpoint(&self) -> Vec<u8> {
        write_checkpoint(
            &self.config.to_text(),
            self.names.iter().map(String::as_str).zip(self.params.iter().map(|p| &p.value)),
        )
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let (text, tensors) = read_checkpoint(bytes)?;
        let config = UNetConfig::from_text(&text)?;
        let (layout, specs) = build_layout(&config);
        if specs.len() != tensors.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} parameters, config needs {}",
                tensors.len(),
                specs.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.iter().zip(tensors) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Schema(format!(
                    "checkpoint parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            t.check_finite(&name)?;
            names.push(name);
            params.push(Parameter::new(t));
        }
        Ok(ModelWeights {
            config,
            names,
            params,
            layout,
        })
    }
}
