//! 3D convolution and its transpose.
//!
//! Stride-1 `conv3d` runs as a direct row-wise loop nest, and so do its
//! input and weight gradients. Strided convs lower one output depth slice
//! at a time to a matrix product (`im2col`). In both the accumulation order
//! is fixed by the loop nest.
//!
//! `conv3d_transpose` only supports kernel size equal to stride. Output
//! blocks then never overlap and the operator is exactly the adjoint of a
//! stride-`k`, unpadded `conv3d` using the same weight array.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Output extent of one convolved axis.
fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvGeometry {
    cin: usize,
    cout: usize,
    input: [usize; 3],
    output: [usize; 3],
    kernel: [usize; 3],
    stride: usize,
    padding: usize,
}

const DIRECT_MIN_PLANE: usize = 64;

impl ConvGeometry {
    fn new<T: Scalar>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [cin, d, h, w] = input.dims4("conv3d input")?;
        let [cout, wcin, kd, kh, kw] = weight.dims5("conv3d weight")?;
        if wcin != cin {
            return Err(Error::Shape(format!(
                "conv3d weight expects {wcin} input channels, input has {cin}"
            )));
        }
        let mut output = [0; 3];
        for (axis, (&n, &k)) in [d, h, w].iter().zip(&[kd, kh, kw]).enumerate() {
            output[axis] = out_extent(n, k, stride, padding).ok_or_else(|| {
                Error::Shape(format!(
                    "conv3d axis {axis}: extent {n}, kernel {k}, stride {stride}, padding {padding} gives no output"
                ))
            })?;
        }
        Ok(ConvGeometry {
            cin,
            cout,
            input: [d, h, w],
            output,
            kernel: [kd, kh, kw],
            stride,
            padding,
        })
    }

    fn rows(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn slice_len(&self) -> usize {
        self.output[1] * self.output[2]
    }

    /// Whether the direct stride-1 kernels apply. On small planes the
    /// per-row overhead loses to one matrix product per slice.
    fn direct(&self) -> bool {
        self.stride == 1 && self.kernel.iter().all(|&k| k > self.padding) && self.slice_len() >= DIRECT_MIN_PLANE
    }

    /// Output x range `[lo, hi)` whose tap at kernel offset `c` is in bounds.
    fn valid_range(&self, tap: usize, extent: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let tap = tap as isize;
        // need 0 <= o*s + tap - p < extent
        let lo = ((p - tap).max(0) + s - 1) / s;
        let last = extent as isize - 1 + p - tap;
        let hi = if last < 0 { 0 } else { (last / s + 1).min(out as isize) };
        let lo = lo.min(hi);
        (lo as usize, hi as usize)
    }

    /// Fills `cols` (`rows x H'W'`) for output depth slice `oz`.
    fn im2col<T: Scalar>(&self, input: &[T], oz: usize, cols: &mut [T]) {
        let [d, h, w] = self.input;
        let [_, oh, ow] = self.output;
        let [kd, kh, kw] = self.kernel;
        let n = self.slice_len();
        let (s, p) = (self.stride, self.padding);
        for ci in 0..self.cin {
            for a in 0..kd {
                let zi = (oz * s + a) as isize - p as isize;
                for b in 0..kh {
                    let (ylo, yhi) = self.valid_range(b, h, oh);
                    for c in 0..kw {
                        let row = ((ci * kd + a) * kh + b) * kw + c;
                        let dst = &mut cols[row * n..(row + 1) * n];
                        if zi < 0 || zi >= d as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let (xlo, xhi) = self.valid_range(c, w, ow);
                        for oy in 0..oh {
                            let line = &mut dst[oy * ow..(oy + 1) * ow];
                            if oy < ylo || oy >= yhi {
                                line.fill(T::zero());
                                continue;
                            }
                            let yi = oy * s + b - p;
                            let base = ((ci * d + zi as usize) * h + yi) * w;
                            line[..xlo].fill(T::zero());
                            line[xhi..].fill(T::zero());
                            for ox in xlo..xhi {
                                line[ox] = input[base + ox * s + c - p];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`]: scatter-adds `cols` into `grad_input`.
    fn col2im<T: Scalar>(&self, cols: &[T], oz: usize, grad_input: &mut [T]) {
        let [d, h, w] = self.input;
        let [_, oh, ow] = self.output;
        let [kd, kh, kw] = self.kernel;
        let n = self.slice_len();
        let (s, p) = (self.stride, self.padding);
        for ci in 0..self.cin {
            for a in 0..kd {
                let zi = (oz * s + a) as isize - p as isize;
                if zi < 0 || zi >= d as isize {
                    continue;
                }
                for b in 0..kh {
                    let (ylo, yhi) = self.valid_range(b, h, oh);
                    for c in 0..kw {
                        let row = ((ci * kd + a) * kh + b) * kw + c;
                        let src = &cols[row * n..(row + 1) * n];
                        let (xlo, xhi) = self.valid_range(c, w, ow);
                        for oy in ylo..yhi {
                            let yi = oy * s + b - p;
                            let base = ((ci * d + zi as usize) * h + yi) * w;
                            let line = &src[oy * ow..(oy + 1) * ow];
                            for ox in xlo..xhi {
                                let g = &mut grad_input[base + ox * s + c - p];
                                *g = *g + line[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Copy of `input` with zero borders of `pad` on every axis.
fn zero_pad<T: Scalar>(input: &[T], c: usize, [d, h, w]: [usize; 3], [pz, py, px]: [usize; 3]) -> Vec<T> {
    let (dp, hp, wp) = (d + 2 * pz, h + 2 * py, w + 2 * px);
    let mut out = vec![T::zero(); c * dp * hp * wp];
    for ci in 0..c {
        for z in 0..d {
            for y in 0..h {
                let src = &input[((ci * d + z) * h + y) * w..][..w];
                out[((ci * dp + z + pz) * hp + y + py) * wp + px..][..w].copy_from_slice(src);
            }
        }
    }
    out
}

/// `dst += a * src`.
#[inline(always)]
fn axpy<T: Scalar>(dst: &mut [T], src: &[T], a: T) {
    for (o, &x) in dst.iter_mut().zip(src) {
        *o = *o + a * x;
    }
}

/// Eight-lane dot product with a fixed reduction order.
#[inline(always)]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ha, ta) = a.split_at(a.len() / 8 * 8);
    let (hb, tb) = b.split_at(ha.len());
    for (x, y) in ha.chunks_exact(8).zip(hb.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let tail = ta.iter().zip(tb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    acc.iter().fold(tail, |s, &v| s + v)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn axpy_avx2<T: Scalar>(dst: &mut [T], src: &[T], a: T) {
    axpy(dst, src, a)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2<T: Scalar>(a: &[T], b: &[T]) -> T {
    dot(a, b)
}

/// Row kernels for the direct path. Wider registers only change how many
/// lanes run at once, never the order of operations (no FMA), so both
/// variants give bit-identical results.
struct RowKernels<T> {
    axpy: fn(&mut [T], &[T], T),
    dot: fn(&[T], &[T]) -> T,
}

fn row_kernels<T: Scalar>() -> RowKernels<T> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return RowKernels {
            axpy: |d, s, a| unsafe { axpy_avx2(d, s, a) },
            dot: |a, b| unsafe { dot_avx2(a, b) },
        };
    }
    RowKernels { axpy, dot }
}

/// Stride-1 correlation over a padded input. Output rows are computed with
/// the padded row stride, so every tap is one contiguous multiply-add over
/// a whole output plane; the extra columns are dropped when copying out.
#[allow(clippy::too_many_arguments)]
fn direct_s1<T: Scalar>(
    input: &[T],
    cin: usize,
    dims: [usize; 3],
    weight: &[T],
    cout: usize,
    [kd, kh, kw]: [usize; 3],
    pad: [usize; 3],
    out: &mut [T],
    [od, oh, ow]: [usize; 3],
) {
    let padded = zero_pad(input, cin, dims, pad);
    let (dp, hp, wp) = (dims[0] + 2 * pad[0], dims[1] + 2 * pad[1], dims[2] + 2 * pad[2]);
    let span = (oh - 1) * wp + ow;
    let mut wide = vec![T::zero(); span];
    let k = row_kernels::<T>();
    for co in 0..cout {
        for oz in 0..od {
            wide.fill(T::zero());
            for ci in 0..cin {
                for a in 0..kd {
                    let plane = &padded[(ci * dp + oz + a) * hp * wp..][..hp * wp];
                    for b in 0..kh {
                        for c in 0..kw {
                            let wv = weight[((co * cin + ci) * kd + a) * kh * kw + b * kw + c];
                            (k.axpy)(&mut wide, &plane[b * wp + c..][..span], wv);
                        }
                    }
                }
            }
            let dst = &mut out[(co * od + oz) * oh * ow..][..oh * ow];
            for oy in 0..oh {
                dst[oy * ow..][..ow].copy_from_slice(&wide[oy * wp..][..ow]);
            }
        }
    }
}

/// `dW[co, ci, a, b, c] = sum dY[co, o] * X[ci, o + tap - pad]`, with `dY`
/// spread to the padded row stride (zeros in the extra columns) so each
/// tap is a dot product over whole planes.
fn direct_s1_weight_grad<T: Scalar>(input: &[T], g: &ConvGeometry, grad_out: &[T], grad_w: &mut [T]) {
    let pad = [g.padding; 3];
    let padded = zero_pad(input, g.cin, g.input, pad);
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let (hp, wp) = (g.input[1] + 2 * g.padding, g.input[2] + 2 * g.padding);
    let dp = g.input[0] + 2 * g.padding;
    let span = (oh - 1) * wp + ow;
    let mut wide = vec![T::zero(); od * span];
    let k = row_kernels::<T>();
    for co in 0..g.cout {
        wide.fill(T::zero());
        for oz in 0..od {
            for oy in 0..oh {
                let src = &grad_out[((co * od + oz) * oh + oy) * ow..][..ow];
                wide[oz * span + oy * wp..][..ow].copy_from_slice(src);
            }
        }
        for ci in 0..g.cin {
            for a in 0..kd {
                for b in 0..kh {
                    for c in 0..kw {
                        let mut sum = T::zero();
                        for oz in 0..od {
                            let plane = &padded[(ci * dp + oz + a) * hp * wp..];
                            sum = sum + (k.dot)(&wide[oz * span..][..span], &plane[b * wp + c..][..span]);
                        }
                        grad_w[(((co * g.cin + ci) * kd + a) * kh + b) * kw + c] = sum;
                    }
                }
            }
        }
    }
}

/// `[Cout, Cin, k..]` to `[Cin, Cout, k..]` with every spatial axis reversed.
fn flip_kernel<T: Scalar>(weight: &Tensor<T>, cout: usize, cin: usize, [kd, kh, kw]: [usize; 3]) -> Vec<T> {
    let taps = kd * kh * kw;
    let src = weight.data();
    let mut out = vec![T::zero(); src.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for t in 0..taps {
                out[(ci * cout + co) * taps + (taps - 1 - t)] = src[(co * cin + ci) * taps + t];
            }
        }
    }
    out
}

/// Zero-padded 3D cross-correlation.
///
/// `input` is `[Cin, D, H, W]`, `weight` `[Cout, Cin, kd, kh, kw]`, `bias`
/// `[Cout]`.
pub fn conv3d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, weight, stride, padding)?;
    if bias.shape() != [g.cout] {
        return Err(Error::Shape(format!(
            "conv3d bias must be [{}], got {:?}",
            g.cout,
            bias.shape()
        )));
    }
    let [od, oh, ow] = g.output;
    let n = g.slice_len();
    let plane = od * n;
    let mut out = Tensor::zeros(&[g.cout, od, oh, ow]);
    if g.direct() {
        let pad = [padding; 3];
        direct_s1(input.data(), g.cin, g.input, weight.data(), g.cout, g.kernel, pad, out.data_mut(), g.output);
    } else {
        let k = g.rows();
        let mut cols = vec![T::zero(); k * n];
        for oz in 0..od {
            g.im2col(input.data(), oz, &mut cols);
            let c = &mut out.data_mut()[oz * n..];
            T::gemm(g.cout, k, n, weight.data(), k, 1, &cols, n, 1, T::zero(), c, plane, 1);
        }
    }
    for (co, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let b = bias.data()[co];
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of [`conv3d`] given the upstream gradient of its output.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
    want_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input, weight, stride, padding)?;
    let [od, oh, ow] = g.output;
    if grad_out.shape() != [g.cout, od, oh, ow] {
        return Err(Error::Shape(format!(
            "conv3d output gradient must be {:?}, got {:?}",
            [g.cout, od, oh, ow],
            grad_out.shape()
        )));
    }
    let n = g.slice_len();
    let k = g.rows();
    let plane = od * n;
    let mut grad_w = Tensor::zeros(weight.shape());
    let mut grad_in = want_input_grad.then(|| Tensor::zeros(input.shape()));
    if g.direct() {
        direct_s1_weight_grad(input.data(), &g, grad_out.data(), grad_w.data_mut());
        if let Some(gi) = grad_in.as_mut() {
            // the input gradient is a full correlation of the output
            // gradient with the flipped, channel-swapped kernel
            let flipped = flip_kernel(weight, g.cout, g.cin, g.kernel);
            let pad = g.kernel.map(|k| k - 1 - padding);
            direct_s1(grad_out.data(), g.cout, g.output, &flipped, g.cin, g.kernel, pad, gi.data_mut(), g.input);
        }
    } else {
        let mut cols = vec![T::zero(); k * n];
        let mut grad_cols = vec![T::zero(); if want_input_grad { k * n } else { 0 }];
        for oz in 0..od {
            let go = &grad_out.data()[oz * n..];
            g.im2col(input.data(), oz, &mut cols);
            // dW[Cout, K] += G[Cout, N] * cols^T
            T::gemm(g.cout, n, k, go, plane, 1, &cols, 1, n, T::one(), grad_w.data_mut(), k, 1);
            if let Some(gi) = grad_in.as_mut() {
                // dcols[K, N] = W^T * G
                T::gemm(k, g.cout, n, weight.data(), 1, k, go, plane, 1, T::zero(), &mut grad_cols, n, 1);
                g.col2im(&grad_cols, oz, gi.data_mut());
            }
        }
    }
    let grad_b = grad_out
        .data()
        .chunks(plane)
        .map(|c| T::of(c.iter().map(|v| v.as_f64()).sum::<f64>()))
        .collect();
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: Tensor::from_vec(&[g.cout], grad_b)?,
    })
}

struct TransposeGeometry {
    cin: usize,
    cout: usize,
    factor: usize,
    input: [usize; 3],
}

impl TransposeGeometry {
    fn new<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, stride: usize) -> Result<Self> {
        let [cin, d, h, w] = input.dims4("conv3d_transpose input")?;
        let [wcin, cout, kd, kh, kw] = weight.dims5("conv3d_transpose weight")?;
        if wcin != cin {
            return Err(Error::Shape(format!(
                "conv3d_transpose weight expects {wcin} input channels, input has {cin}"
            )));
        }
        if kd != stride || kh != stride || kw != stride || stride == 0 {
            return Err(Error::Shape(format!(
                "conv3d_transpose needs kernel == stride, got kernel {:?} stride {stride}",
                [kd, kh, kw]
            )));
        }
        Ok(TransposeGeometry {
            cin,
            cout,
            factor: stride,
            input: [d, h, w],
        })
    }

    fn taps(&self) -> usize {
        self.factor.pow(3)
    }

    fn output_shape(&self) -> [usize; 4] {
        let f = self.factor;
        let [d, h, w] = self.input;
        [self.cout, d * f, h * f, w * f]
    }

    /// Calls `visit(block_index, out_index)` pairing each entry of the
    /// `[(co, a, b, c), voxel]` block matrix with its output location.
    fn for_each_tap(&self, mut visit: impl FnMut(usize, usize)) {
        let f = self.factor;
        let [d, h, w] = self.input;
        let [_, od, oh, ow] = self.output_shape();
        let nvox = d * h * w;
        let taps = self.taps();
        for co in 0..self.cout {
            for t in 0..taps {
                let (a, b, c) = (t / (f * f), (t / f) % f, t % f);
                let j = co * taps + t;
                for z in 0..d {
                    for y in 0..h {
                        let n0 = (z * h + y) * w;
                        let o0 = ((co * od + z * f + a) * oh + y * f + b) * ow + c;
                        for x in 0..w {
                            visit(j * nvox + n0 + x, o0 + x * f);
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution with kernel size equal to `stride`; each input
/// voxel expands into a `stride^3` output block.
///
/// `weight` is `[Cin, Cout, k, k, k]`.
pub fn conv3d_transpose<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = TransposeGeometry::new(input, weight, stride)?;
    if bias.shape() != [g.cout] {
        return Err(Error::Shape(format!(
            "conv3d_transpose bias must be [{}], got {:?}",
            g.cout,
            bias.shape()
        )));
    }
    let nvox: usize = g.input.iter().product();
    let rows = g.cout * g.taps();
    // Y[(co,t), n] = sum_ci W[ci, (co,t)] * X[ci, n]
    let mut y = vec![T::zero(); rows * nvox];
    T::gemm(rows, g.cin, nvox, weight.data(), 1, rows, input.data(), nvox, 1, T::zero(), &mut y, nvox, 1);
    let mut out = Tensor::zeros(&g.output_shape());
    let per_channel = g.taps() * nvox;
    let od = out.data_mut();
    g.for_each_tap(|src, dst| {
        od[dst] = y[src] + bias.data()[src / per_channel];
    });
    Ok(out)
}

/// Gradients of [`conv3d_transpose`] given the upstream gradient.
pub fn conv3d_transpose_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<ConvGrads<T>> {
    let g = TransposeGeometry::new(input, weight, stride)?;
    if grad_out.shape() != g.output_shape() {
        return Err(Error::Shape(format!(
            "conv3d_transpose output gradient must be {:?}, got {:?}",
            g.output_shape(),
            grad_out.shape()
        )));
    }
    let nvox: usize = g.input.iter().product();
    let rows = g.cout * g.taps();
    let mut gy = vec![T::zero(); rows * nvox];
    let go = grad_out.data();
    g.for_each_tap(|src, dst| gy[src] = go[dst]);

    let mut grad_w = Tensor::zeros(weight.shape());
    // dW[ci, j] = sum_n X[ci, n] * GY[j, n]
    T::gemm(g.cin, nvox, rows, input.data(), nvox, 1, &gy, 1, nvox, T::zero(), grad_w.data_mut(), rows, 1);
    let mut grad_in = Tensor::zeros(input.shape());
    // dX[ci, n] = sum_j W[ci, j] * GY[j, n]
    T::gemm(g.cin, rows, nvox, weight.data(), rows, 1, &gy, nvox, 1, T::zero(), grad_in.data_mut(), nvox, 1);
    let per_channel = g.taps() * nvox;
    let grad_b = gy
        .chunks(per_channel)
        .map(|c| T::of(c.iter().map(|v| v.as_f64()).sum::<f64>()))
        .collect();
    Ok(ConvGrads {
        input: Some(grad_in),
        weight: grad_w,
        bias: Tensor::from_vec(&[g.cout], grad_b)?,
    })
}
