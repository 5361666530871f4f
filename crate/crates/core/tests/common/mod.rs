#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voxrefine::net::{ModelWeights, UNetConfig};
use voxrefine::partition::{CubeSize, OccupancyCube, VoxelGrid};
use voxrefine::tensor::*;
use voxrefine::{Point, PointCloud};

pub const GRAD_TOL: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut impl Rng, depth: u32, max_points: usize) -> PointCloud {
    let side = 1u32 << depth;
    let n = rng.random_range(1..=max_points);
    let points: Vec<Point> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(0..side)))
        .collect();
    PointCloud::new(points, depth).unwrap()
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values with magnitude in `[0.1, 1)` so a finite-difference step never
/// crosses a ReLU kink.
pub fn off_kink(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = random_tensor(rng, shape, 0.1, 1.0);
    t.data_mut().iter_mut().for_each(|v| {
        if rng.random_bool(0.5) {
            *v = -*v
        }
    });
    t
}

pub fn random_cube(rng: &mut impl Rng, size: CubeSize, density: f64) -> OccupancyCube {
    let mut voxels = VoxelGrid::new(size);
    for i in 0..voxels.len() {
        voxels.set_linear(i, rng.random_bool(density));
    }
    OccupancyCube { index: [0, 0, 0], voxels }
}

fn flat(ts: &[&Tensor<f64>]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().to_vec()).collect()
}

fn unflat(template: &[&Tensor<f64>], v: &[f64]) -> Vec<Tensor<f64>> {
    let mut at = 0;
    template
        .iter()
        .map(|t| {
            let n = t.len();
            at += n;
            Tensor::from_vec(t.shape(), v[at - n..at].to_vec()).unwrap()
        })
        .collect()
}

/// Checks `d<op(args), r>/d args` for a random projection `r`.
fn check_op(
    args: &[&Tensor<f64>],
    r: &Tensor<f64>,
    op: impl Fn(&[Tensor<f64>]) -> Tensor<f64>,
    analytic: Vec<f64>,
) -> GradCheckReport {
    grad_check(
        |v| op(&unflat(args, v)).dot(r),
        &flat(args),
        &analytic,
        FD_STEP,
        FD_FLOOR,
    )
}

/// Finite-difference report for every tensor op with a backward pass.
pub fn op_grad_checks(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut g = rng(seed);
    let mut out = Vec::new();

    for (name, stride, pad, k, dims) in [
        ("conv3d k3 s1", 1, 1, 3, [2, 5, 4, 3]),
        ("conv3d k3 s2", 2, 1, 3, [2, 6, 5, 4]),
        ("conv3d k1", 1, 0, 1, [3, 3, 3, 3]),
    ] {
        let x = random_tensor(&mut g, &dims, -1.0, 1.0);
        let w = random_tensor(&mut g, &[3, dims[0], k, k, k], -0.5, 0.5);
        let b = random_tensor(&mut g, &[3], -0.5, 0.5);
        let y = conv3d(&x, &w, &b, stride, pad).unwrap();
        let r = random_tensor(&mut g, y.shape(), -1.0, 1.0);
        let grads = conv3d_backward(&x, &w, &r, stride, pad, true).unwrap();
        let analytic = flat(&[grads.input.as_ref().unwrap(), &grads.weight, &grads.bias]);
        let rep = check_op(&[&x, &w, &b], &r, |a| conv3d(&a[0], &a[1], &a[2], stride, pad).unwrap(), analytic);
        out.push((name, rep));
    }

    let x = random_tensor(&mut g, &[3, 2, 3, 2], -1.0, 1.0);
    let w = random_tensor(&mut g, &[3, 2, 2, 2, 2], -0.5, 0.5);
    let b = random_tensor(&mut g, &[2], -0.5, 0.5);
    let y = conv3d_transpose(&x, &w, &b, 2).unwrap();
    let r = random_tensor(&mut g, y.shape(), -1.0, 1.0);
    let grads = conv3d_transpose_backward(&x, &w, &r, 2).unwrap();
    let analytic = flat(&[grads.input.as_ref().unwrap(), &grads.weight, &grads.bias]);
    out.push((
        "conv3d_transpose",
        check_op(&[&x, &w, &b], &r, |a| conv3d_transpose(&a[0], &a[1], &a[2], 2).unwrap(), analytic),
    ));

    let x = off_kink(&mut g, &[2, 3, 3, 3]);
    let r = random_tensor(&mut g, x.shape(), -1.0, 1.0);
    let analytic = relu_backward(&relu(&x), &r).into_data();
    out.push(("relu", check_op(&[&x], &r, |a| relu(&a[0]), analytic)));

    let x = random_tensor(&mut g, &[2, 3, 3, 3], -4.0, 4.0);
    let r = random_tensor(&mut g, x.shape(), -1.0, 1.0);
    let analytic = sigmoid_backward(&x, &sigmoid(&x), &r).into_data();
    out.push(("sigmoid", check_op(&[&x], &r, |a| sigmoid(&a[0]), analytic)));

    let x = random_tensor(&mut g, &[2, 2, 3, 2], -1.0, 1.0);
    let y = nearest_upsample(&x, 2).unwrap();
    let r = random_tensor(&mut g, y.shape(), -1.0, 1.0);
    let analytic = nearest_upsample_backward(&r, 2).unwrap().into_data();
    out.push(("nearest_upsample", check_op(&[&x], &r, |a| nearest_upsample(&a[0], 2).unwrap(), analytic)));

    let a = random_tensor(&mut g, &[2, 2, 2, 3], -1.0, 1.0);
    let b = random_tensor(&mut g, &[1, 2, 2, 3], -1.0, 1.0);
    let r = random_tensor(&mut g, &[3, 2, 2, 3], -1.0, 1.0);
    let (ga, gb) = split_channels(&r, 2).unwrap();
    out.push((
        "concat_channels",
        check_op(&[&a, &b], &r, |t| concat_channels(&t[0], &t[1]).unwrap(), flat(&[&ga, &gb])),
    ));

    let q = random_tensor(&mut g, &[1, 3, 3, 3], 0.05, 0.95);
    let mut c = Tensor::<f64>::zeros(q.shape());
    c.data_mut().iter_mut().for_each(|v| *v = if g.random_bool(0.4) { 1.0 } else { 0.0 });
    let analytic = bce_loss_backward(&q, &c).unwrap().into_data();
    let rep = grad_check(
        |v| bce_loss(&Tensor::from_vec(q.shape(), v.to_vec()).unwrap(), &c).unwrap(),
        q.data(),
        &analytic,
        FD_STEP,
        FD_FLOOR,
    );
    out.push(("bce_loss", rep));
    out
}

/// Full-network check over every parameter, with biases drawn away from
/// zero so pre-activations avoid the ReLU kink and the zero-initialized
/// coarse heads replaced by random weights.
pub fn unet_grad_check(config: UNetConfig, seed: u64) -> GradCheckReport {
    let mut m = ModelWeights::<f64>::init(config).unwrap();
    let mut g = rng(seed);
    let names = m.names().to_vec();
    for (name, p) in names.iter().zip(m.params_mut()) {
        if name.ends_with(".bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v = g.random_range(-0.2..0.2));
        } else if name.starts_with("head") && name != "head0.weight" {
            p.value.data_mut().iter_mut().for_each(|v| *v = g.random_range(-0.5..0.5));
        }
    }
    let x = m.cube_tensor(&random_cube(&mut g, config.cube_size, 0.1)).unwrap();
    let t = m.cube_tensor(&random_cube(&mut g, config.cube_size, 0.2)).unwrap();
    let (_, grads) = m.loss_and_grads(&x, &t).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let x0 = m.flat_values();
    let mut probe = m.clone();
    grad_check(
        |v| {
            probe.set_flat_values(v);
            bce_loss(&probe.forward(&x).unwrap(), &t).unwrap()
        },
        &x0,
        &analytic,
        FD_STEP,
        FD_FLOOR,
    )
}
