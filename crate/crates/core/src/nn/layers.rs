//! Layer primitives with explicit forward/backward passes.
//!
//! Activations are `(batch, channels, length)` arrays. Pointwise
//! convolutions are the dominant cost and go through `general_mat_mul`;
//! the small dense and depthwise kernels use direct loops.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

use crate::nn::scalar::Scalar;

pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

fn pad_input<F: Scalar>(x: &Array3<F>, pad: usize) -> Array3<F> {
    if pad == 0 {
        return x.clone();
    }
    let (b, c, l) = x.dim();
    let mut out = Array3::zeros((b, c, l + 2 * pad));
    out.slice_mut(ndarray::s![.., .., pad..pad + l]).assign(x);
    out
}

/// Dense 1-D convolution, weights `(out_ch, in_ch, kernel)`.
pub fn conv1d_forward<F: Scalar>(
    x: &Array3<F>,
    w: &ArrayView3<F>,
    stride: usize,
    pad: usize,
) -> Array3<F> {
    let (bsz, in_ch, len) = x.dim();
    let (out_ch, w_in, kernel) = w.dim();
    assert_eq!(in_ch, w_in, "conv1d channel mismatch");
    let lo = conv_out_len(len, kernel, stride, pad);
    let xp = pad_input(x, pad);
    let mut y = Array3::zeros((bsz, out_ch, lo));
    for b in 0..bsz {
        let xb = xp.index_axis(Axis(0), b);
        let mut yb = y.index_axis_mut(Axis(0), b);
        for o in 0..out_ch {
            let mut yrow = yb.index_axis_mut(Axis(0), o);
            let yrow = yrow.as_slice_mut().expect("contiguous");
            for i in 0..in_ch {
                let xrow = xb.index_axis(Axis(0), i);
                let xrow = xrow.as_slice().expect("contiguous");
                for k in 0..kernel {
                    let wv = w[[o, i, k]];
                    for (t, yt) in yrow.iter_mut().enumerate() {
                        *yt = *yt + wv * xrow[t * stride + k];
                    }
                }
            }
        }
    }
    y
}

/// Gradients of [`conv1d_forward`]. Returns `(dx, dw)`; `dx` is skipped
/// when the input is a network boundary.
pub fn conv1d_backward<F: Scalar>(
    x: &Array3<F>,
    w: &ArrayView3<F>,
    stride: usize,
    pad: usize,
    dy: &Array3<F>,
    need_dx: bool,
) -> (Option<Array3<F>>, Array3<F>) {
    let (bsz, in_ch, len) = x.dim();
    let (out_ch, _, kernel) = w.dim();
    let lo = dy.dim().2;
    let xp = pad_input(x, pad);
    let mut dw = Array3::zeros((out_ch, in_ch, kernel));
    let mut dxp = Array3::zeros((bsz, in_ch, len + 2 * pad));
    for b in 0..bsz {
        let xb = xp.index_axis(Axis(0), b);
        let dyb = dy.index_axis(Axis(0), b);
        let mut dxb = dxp.index_axis_mut(Axis(0), b);
        for o in 0..out_ch {
            let dyrow = dyb.index_axis(Axis(0), o);
            let dyrow = dyrow.as_slice().expect("contiguous");
            for i in 0..in_ch {
                let xrow = xb.index_axis(Axis(0), i);
                let xrow = xrow.as_slice().expect("contiguous");
                let mut dxrow = dxb.index_axis_mut(Axis(0), i);
                let dxrow = dxrow.as_slice_mut().expect("contiguous");
                for k in 0..kernel {
                    let wv = w[[o, i, k]];
                    let mut acc = F::zero();
                    for t in 0..lo {
                        let g = dyrow[t];
                        acc = acc + g * xrow[t * stride + k];
                        if need_dx {
                            dxrow[t * stride + k] = dxrow[t * stride + k] + g * wv;
                        }
                    }
                    dw[[o, i, k]] = dw[[o, i, k]] + acc;
                }
            }
        }
    }
    let dx = need_dx.then(|| dxp.slice(ndarray::s![.., .., pad..pad + len]).to_owned());
    (dx, dw)
}

/// Per-channel (depthwise) convolution, weights `(channels, kernel)`.
pub fn depthwise_forward<F: Scalar>(
    x: &Array3<F>,
    w: &ArrayView2<F>,
    stride: usize,
    pad: usize,
) -> Array3<F> {
    let (bsz, ch, len) = x.dim();
    let kernel = w.dim().1;
    let lo = conv_out_len(len, kernel, stride, pad);
    let xp = pad_input(x, pad);
    let mut y = Array3::zeros((bsz, ch, lo));
    for b in 0..bsz {
        let xb = xp.index_axis(Axis(0), b);
        let mut yb = y.index_axis_mut(Axis(0), b);
        for c in 0..ch {
            let xrow = xb.index_axis(Axis(0), c);
            let xrow = xrow.as_slice().expect("contiguous");
            let mut yrow = yb.index_axis_mut(Axis(0), c);
            let yrow = yrow.as_slice_mut().expect("contiguous");
            for (t, yt) in yrow.iter_mut().enumerate() {
                let base = t * stride;
                let mut acc = F::zero();
                for k in 0..kernel {
                    acc = acc + w[[c, k]] * xrow[base + k];
                }
                *yt = acc;
            }
        }
    }
    y
}

pub fn depthwise_backward<F: Scalar>(
    x: &Array3<F>,
    w: &ArrayView2<F>,
    stride: usize,
    pad: usize,
    dy: &Array3<F>,
) -> (Array3<F>, Array2<F>) {
    let (bsz, ch, len) = x.dim();
    let kernel = w.dim().1;
    let lo = dy.dim().2;
    let xp = pad_input(x, pad);
    let mut dw = Array2::zeros((ch, kernel));
    let mut dxp = Array3::zeros((bsz, ch, len + 2 * pad));
    for b in 0..bsz {
        let xb = xp.index_axis(Axis(0), b);
        let dyb = dy.index_axis(Axis(0), b);
        let mut dxb = dxp.index_axis_mut(Axis(0), b);
        for c in 0..ch {
            let xrow = xb.index_axis(Axis(0), c);
            let xrow = xrow.as_slice().expect("contiguous");
            let dyrow = dyb.index_axis(Axis(0), c);
            let dyrow = dyrow.as_slice().expect("contiguous");
            let mut dxrow = dxb.index_axis_mut(Axis(0), c);
            let dxrow = dxrow.as_slice_mut().expect("contiguous");
            for k in 0..kernel {
                let wv = w[[c, k]];
                let mut acc = F::zero();
                for t in 0..lo {
                    let g = dyrow[t];
                    acc = acc + g * xrow[t * stride + k];
                    dxrow[t * stride + k] = dxrow[t * stride + k] + g * wv;
                }
                dw[[c, k]] = dw[[c, k]] + acc;
            }
        }
    }
    (dxp.slice(ndarray::s![.., .., pad..pad + len]).to_owned(), dw)
}

/// 1x1 convolution over channels, weights `(out_ch, in_ch)`.
pub fn pointwise_forward<F: Scalar>(x: &Array3<F>, w: &ArrayView2<F>) -> Array3<F> {
    let (bsz, in_ch, len) = x.dim();
    let out_ch = w.dim().0;
    assert_eq!(in_ch, w.dim().1, "pointwise channel mismatch");
    let mut y = Array3::zeros((bsz, out_ch, len));
    for b in 0..bsz {
        let xb = x.index_axis(Axis(0), b);
        let mut yb = y.index_axis_mut(Axis(0), b);
        general_mat_mul(F::one(), w, &xb, F::zero(), &mut yb);
    }
    y
}

pub fn pointwise_backward<F: Scalar>(
    x: &Array3<F>,
    w: &ArrayView2<F>,
    dy: &Array3<F>,
) -> (Array3<F>, Array2<F>) {
    let (bsz, in_ch, len) = x.dim();
    let out_ch = w.dim().0;
    let mut dx = Array3::zeros((bsz, in_ch, len));
    let mut dw = Array2::zeros((out_ch, in_ch));
    let wt = w.t();
    for b in 0..bsz {
        let xb = x.index_axis(Axis(0), b);
        let dyb = dy.index_axis(Axis(0), b);
        let mut dxb = dx.index_axis_mut(Axis(0), b);
        general_mat_mul(F::one(), &wt, &dyb, F::zero(), &mut dxb);
        general_mat_mul(F::one(), &dyb, &xb.t(), F::one(), &mut dw);
    }
    (dx, dw)
}

/// Everything batch-norm backward needs from the forward pass, plus the
/// batch statistics for the running-average update.
#[derive(Debug, Clone)]
pub struct BnCache<F> {
    pub x_hat: Array3<F>,
    pub inv_std: Array1<F>,
    pub batch_mean: Array1<F>,
    pub batch_var: Array1<F>,
}

/// Training-mode batch norm over `(batch, length)` per channel.
pub fn bn_forward_train<F: Scalar>(
    x: &Array3<F>,
    gamma: &ArrayView1<F>,
    beta: &ArrayView1<F>,
    eps: f64,
) -> (Array3<F>, BnCache<F>) {
    let (bsz, ch, len) = x.dim();
    let n = F::from_f64((bsz * len) as f64);
    let eps = F::from_f64(eps);
    let mut mean = Array1::zeros(ch);
    let mut var = Array1::zeros(ch);
    for c in 0..ch {
        let mut acc = F::zero();
        for b in 0..bsz {
            let row = x.index_axis(Axis(0), b);
            let row = row.index_axis(Axis(0), c);
            let row = row.as_slice().expect("contiguous");
            for &v in row {
                acc = acc + v;
            }
        }
        let mu = acc / n;
        let mut sq = F::zero();
        for b in 0..bsz {
            let row = x.index_axis(Axis(0), b);
            let row = row.index_axis(Axis(0), c);
            let row = row.as_slice().expect("contiguous");
            for &v in row {
                let d = v - mu;
                sq = sq + d * d;
            }
        }
        mean[c] = mu;
        var[c] = sq / n;
    }
    let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
    let mut x_hat = Array3::zeros((bsz, ch, len));
    let mut y = Array3::zeros((bsz, ch, len));
    for b in 0..bsz {
        for c in 0..ch {
            let (mu, is, g, be) = (mean[c], inv_std[c], gamma[c], beta[c]);
            let row = x.index_axis(Axis(0), b);
            let row = row.index_axis(Axis(0), c);
            let row = row.as_slice().expect("contiguous");
            let mut xh = x_hat.index_axis_mut(Axis(0), b);
            let mut xh = xh.index_axis_mut(Axis(0), c);
            let xh = xh.as_slice_mut().expect("contiguous");
            let mut yr = y.index_axis_mut(Axis(0), b);
            let mut yr = yr.index_axis_mut(Axis(0), c);
            let yr = yr.as_slice_mut().expect("contiguous");
            for t in 0..len {
                let h = (row[t] - mu) * is;
                xh[t] = h;
                yr[t] = g * h + be;
            }
        }
    }
    (
        y,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    )
}

/// Inference-mode batch norm using running statistics.
pub fn bn_forward_infer<F: Scalar>(
    x: &Array3<F>,
    gamma: &ArrayView1<F>,
    beta: &ArrayView1<F>,
    running_mean: &ArrayView1<F>,
    running_var: &ArrayView1<F>,
    eps: f64,
) -> Array3<F> {
    let (bsz, ch, len) = x.dim();
    let eps = F::from_f64(eps);
    let mut y = Array3::zeros((bsz, ch, len));
    for c in 0..ch {
        let is = F::one() / (running_var[c] + eps).sqrt();
        let scale = gamma[c] * is;
        let shift = beta[c] - running_mean[c] * scale;
        for b in 0..bsz {
            let row = x.index_axis(Axis(0), b);
            let row = row.index_axis(Axis(0), c);
            let row = row.as_slice().expect("contiguous");
            let mut yr = y.index_axis_mut(Axis(0), b);
            let mut yr = yr.index_axis_mut(Axis(0), c);
            let yr = yr.as_slice_mut().expect("contiguous");
            for t in 0..len {
                yr[t] = scale * row[t] + shift;
            }
        }
    }
    y
}

pub fn bn_backward<F: Scalar>(
    cache: &BnCache<F>,
    gamma: &ArrayView1<F>,
    dy: &Array3<F>,
) -> (Array3<F>, Array1<F>, Array1<F>) {
    let (bsz, ch, len) = dy.dim();
    let n = F::from_f64((bsz * len) as f64);
    let mut dgamma = Array1::zeros(ch);
    let mut dbeta = Array1::zeros(ch);
    for c in 0..ch {
        let mut sg = F::zero();
        let mut sb = F::zero();
        for b in 0..bsz {
            let dyr = dy.index_axis(Axis(0), b);
            let dyr = dyr.index_axis(Axis(0), c);
            let dyr = dyr.as_slice().expect("contiguous");
            let xh = cache.x_hat.index_axis(Axis(0), b);
            let xh = xh.index_axis(Axis(0), c);
            let xh = xh.as_slice().expect("contiguous");
            for t in 0..len {
                sg = sg + dyr[t] * xh[t];
                sb = sb + dyr[t];
            }
        }
        dgamma[c] = sg;
        dbeta[c] = sb;
    }
    let mut dx = Array3::zeros((bsz, ch, len));
    for c in 0..ch {
        let k = gamma[c] * cache.inv_std[c] / n;
        let (sg, sb) = (dgamma[c], dbeta[c]);
        for b in 0..bsz {
            let dyr = dy.index_axis(Axis(0), b);
            let dyr = dyr.index_axis(Axis(0), c);
            let dyr = dyr.as_slice().expect("contiguous");
            let xh = cache.x_hat.index_axis(Axis(0), b);
            let xh = xh.index_axis(Axis(0), c);
            let xh = xh.as_slice().expect("contiguous");
            let mut dxr = dx.index_axis_mut(Axis(0), b);
            let mut dxr = dxr.index_axis_mut(Axis(0), c);
            let dxr = dxr.as_slice_mut().expect("contiguous");
            for t in 0..len {
                dxr[t] = k * (n * dyr[t] - sb - xh[t] * sg);
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn relu<F: Scalar>(x: &Array3<F>) -> Array3<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// `dx = dy` where the forward output was positive, else 0.
pub fn relu_backward<F: Scalar>(dy: &Array3<F>, y: &Array3<F>) -> Array3<F> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|g, &v| {
        if v <= F::zero() {
            *g = F::zero();
        }
    });
    dx
}

/// Average pooling with window 2, stride 2 (used on the downsampling
/// shortcut). Input length must be even.
pub fn avgpool2_forward<F: Scalar>(x: &Array3<F>) -> Array3<F> {
    let (bsz, ch, len) = x.dim();
    assert!(len % 2 == 0, "avgpool2 needs even length");
    let half = F::from_f64(0.5);
    let mut y = Array3::zeros((bsz, ch, len / 2));
    for b in 0..bsz {
        for c in 0..ch {
            let row = x.index_axis(Axis(0), b);
            let row = row.index_axis(Axis(0), c);
            let row = row.as_slice().expect("contiguous");
            let mut yr = y.index_axis_mut(Axis(0), b);
            let mut yr = yr.index_axis_mut(Axis(0), c);
            let yr = yr.as_slice_mut().expect("contiguous");
            for (t, yt) in yr.iter_mut().enumerate() {
                *yt = (row[2 * t] + row[2 * t + 1]) * half;
            }
        }
    }
    y
}

pub fn avgpool2_backward<F: Scalar>(dy: &Array3<F>) -> Array3<F> {
    let (bsz, ch, lo) = dy.dim();
    let half = F::from_f64(0.5);
    let mut dx = Array3::zeros((bsz, ch, lo * 2));
    for b in 0..bsz {
        for c in 0..ch {
            for t in 0..lo {
                let g = dy[[b, c, t]] * half;
                dx[[b, c, 2 * t]] = g;
                dx[[b, c, 2 * t + 1]] = g;
            }
        }
    }
    dx
}

/// Global average pooling over the temporal axis.
pub fn gap_forward<F: Scalar>(x: &Array3<F>) -> Array2<F> {
    let (bsz, ch, len) = x.dim();
    let inv = F::one() / F::from_f64(len as f64);
    let mut y = Array2::zeros((bsz, ch));
    for b in 0..bsz {
        for c in 0..ch {
            let row = x.index_axis(Axis(0), b);
            let row = row.index_axis(Axis(0), c);
            let row = row.as_slice().expect("contiguous");
            let mut acc = F::zero();
            for &v in row {
                acc = acc + v;
            }
            y[[b, c]] = acc * inv;
        }
    }
    y
}

pub fn gap_backward<F: Scalar>(dy: &Array2<F>, len: usize) -> Array3<F> {
    let (bsz, ch) = dy.dim();
    let inv = F::one() / F::from_f64(len as f64);
    let mut dx = Array3::zeros((bsz, ch, len));
    for b in 0..bsz {
        for c in 0..ch {
            let g = dy[[b, c]] * inv;
            let mut row = dx.index_axis_mut(Axis(0), b);
            let mut row = row.index_axis_mut(Axis(0), c);
            let row = row.as_slice_mut().expect("contiguous");
            for v in row.iter_mut() {
                *v = g;
            }
        }
    }
    dx
}

/// Fully-connected head: `logits = x w^T + b`, weights `(classes, features)`.
pub fn dense_forward<F: Scalar>(
    x: &Array2<F>,
    w: &ArrayView2<F>,
    b: &ArrayView1<F>,
) -> Array2<F> {
    let (bsz, _) = x.dim();
    let classes = w.dim().0;
    let mut y = Array2::zeros((bsz, classes));
    general_mat_mul(F::one(), x, &w.t(), F::zero(), &mut y);
    for r in 0..bsz {
        for c in 0..classes {
            y[[r, c]] = y[[r, c]] + b[c];
        }
    }
    y
}

pub fn dense_backward<F: Scalar>(
    x: &Array2<F>,
    w: &ArrayView2<F>,
    dy: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array1<F>) {
    let (bsz, feat) = x.dim();
    let classes = w.dim().0;
    let mut dx = Array2::zeros((bsz, feat));
    let mut dw = Array2::zeros((classes, feat));
    general_mat_mul(F::one(), dy, w, F::zero(), &mut dx);
    general_mat_mul(F::one(), &dy.t(), x, F::zero(), &mut dw);
    let mut db = Array1::zeros(classes);
    for r in 0..bsz {
        for c in 0..classes {
            db[c] = db[c] + dy[[r, c]];
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;
    use ndarray::{Array, IxDyn};

    fn randn3(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
        let mut rng = derive_rng(seed, 0);
        Array::from_shape_simple_fn(shape, || f64::randn(&mut rng))
    }

    /// Central-difference gradient of `f` with respect to `x`, one element
    /// at a time.
    fn fd_grad<D: ndarray::Dimension>(
        x: &Array<f64, D>,
        mut f: impl FnMut(&Array<f64, D>) -> f64,
    ) -> Array<f64, D> {
        let eps = 1e-5;
        let mut g = Array::zeros(x.raw_dim());
        let mut probe = x.clone();
        for idx in 0..x.len() {
            let flat = probe.as_slice_mut().unwrap();
            let orig = flat[idx];
            flat[idx] = orig + eps;
            let up = f(&probe);
            probe.as_slice_mut().unwrap()[idx] = orig - eps;
            let down = f(&probe);
            probe.as_slice_mut().unwrap()[idx] = orig;
            g.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * eps);
        }
        g
    }

    fn max_rel_err(a: &Array<f64, IxDyn>, b: &Array<f64, IxDyn>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let x = randn3((2, 2, 12), 100);
        let mut rng = derive_rng(100, 1);
        let w = Array::from_shape_simple_fn((3, 2, 5), || f64::randn(&mut rng));
        // Scalar objective: weighted sum of outputs, so dL/dy is the weight
        // pattern itself.
        let probe = randn3((2, 3, conv_out_len(12, 5, 2, 2)), 101);
        let loss = |xx: &Array3<f64>, ww: &Array3<f64>| {
            (&conv1d_forward(xx, &ww.view(), 2, 2) * &probe).sum()
        };
        let (dx, dw) = conv1d_backward(&x, &w.view(), 2, 2, &probe, true);
        let fd_x = fd_grad(&x, |xx| loss(xx, &w));
        let fd_w = fd_grad(&w, |ww| loss(&x, ww));
        assert!(max_rel_err(&dx.unwrap().into_dyn(), &fd_x.into_dyn()) < 1e-7);
        assert!(max_rel_err(&dw.into_dyn(), &fd_w.into_dyn()) < 1e-7);
    }

    #[test]
    fn depthwise_gradients_match_finite_differences() {
        let x = randn3((2, 3, 10), 102);
        let mut rng = derive_rng(102, 1);
        let w = Array::from_shape_simple_fn((3, 3), || f64::randn(&mut rng));
        let probe = randn3((2, 3, conv_out_len(10, 3, 2, 1)), 103);
        let loss = |xx: &Array3<f64>, ww: &Array2<f64>| {
            (&depthwise_forward(xx, &ww.view(), 2, 1) * &probe).sum()
        };
        let (dx, dw) = depthwise_backward(&x, &w.view(), 2, 1, &probe);
        let fd_x = fd_grad(&x, |xx| loss(xx, &w));
        let fd_w = fd_grad(&w, |ww| loss(&x, ww));
        assert!(max_rel_err(&dx.into_dyn(), &fd_x.into_dyn()) < 1e-7);
        assert!(max_rel_err(&dw.into_dyn(), &fd_w.into_dyn()) < 1e-7);
    }

    #[test]
    fn pointwise_gradients_match_finite_differences() {
        let x = randn3((2, 4, 6), 104);
        let mut rng = derive_rng(104, 1);
        let w = Array::from_shape_simple_fn((3, 4), || f64::randn(&mut rng));
        let probe = randn3((2, 3, 6), 105);
        let loss = |xx: &Array3<f64>, ww: &Array2<f64>| {
            (&pointwise_forward(xx, &ww.view()) * &probe).sum()
        };
        let (dx, dw) = pointwise_backward(&x, &w.view(), &probe);
        let fd_x = fd_grad(&x, |xx| loss(xx, &w));
        let fd_w = fd_grad(&w, |ww| loss(&x, ww));
        assert!(max_rel_err(&dx.into_dyn(), &fd_x.into_dyn()) < 1e-7);
        assert!(max_rel_err(&dw.into_dyn(), &fd_w.into_dyn()) < 1e-7);
    }

    #[test]
    fn separable_equals_equivalent_dense_convolution() {
        // A depthwise(3) + pointwise pair reproduces the dense conv whose
        // kernel is w_dense[o, i, k] = pw[o, i] * dw[i, k].
        let x = randn3((2, 3, 16), 106);
        let mut rng = derive_rng(106, 1);
        let dw = Array::from_shape_simple_fn((3, 3), || f64::randn(&mut rng));
        let pw = Array::from_shape_simple_fn((4, 3), || f64::randn(&mut rng));
        let sep = pointwise_forward(&depthwise_forward(&x, &dw.view(), 1, 1), &pw.view());
        let mut dense = Array3::zeros((4, 3, 3));
        for o in 0..4 {
            for i in 0..3 {
                for k in 0..3 {
                    dense[[o, i, k]] = pw[[o, i]] * dw[[i, k]];
                }
            }
        }
        let full = conv1d_forward(&x, &dense.view(), 1, 1);
        let diff = (&sep - &full).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        assert!(diff < 1e-12, "max diff {diff}");
    }

    #[test]
    fn bn_train_normalizes_and_matches_finite_differences() {
        let x = randn3((3, 2, 8), 107);
        let mut rng = derive_rng(107, 1);
        let gamma = Array1::from_shape_simple_fn(2, || 1.0 + 0.1 * f64::randn(&mut rng));
        let beta = Array1::from_shape_simple_fn(2, || 0.1 * f64::randn(&mut rng));
        let (_y, cache) = bn_forward_train(&x, &gamma.view(), &beta.view(), 1e-5);

        // Per-channel output statistics (pre gamma/beta they are 0/1).
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| (0..8).map(move |t| (b, t)))
                .map(|(b, t)| cache.x_hat[[b, c, t]])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-10);
        }

        let probe = randn3((3, 2, 8), 108);
        let loss = |xx: &Array3<f64>, g: &Array1<f64>, be: &Array1<f64>| {
            (&bn_forward_train(xx, &g.view(), &be.view(), 1e-5).0 * &probe).sum()
        };
        let (dx, dgamma, dbeta) = bn_backward(&cache, &gamma.view(), &probe);
        let fd_x = fd_grad(&x, |xx| loss(xx, &gamma, &beta));
        let fd_g = fd_grad(&gamma, |g| loss(&x, g, &beta));
        let fd_b = fd_grad(&beta, |be| loss(&x, &gamma, be));
        assert!(max_rel_err(&dx.into_dyn(), &fd_x.into_dyn()) < 1e-6);
        assert!(max_rel_err(&dgamma.into_dyn(), &fd_g.into_dyn()) < 1e-7);
        assert!(max_rel_err(&dbeta.into_dyn(), &fd_b.into_dyn()) < 1e-7);
    }

    #[test]
    fn pooling_and_dense_gradients() {
        let x = randn3((2, 3, 8), 109);
        let probe = randn3((2, 3, 4), 110);
        let (dxp,) = (avgpool2_backward(&probe),);
        let fd = fd_grad(&x, |xx| (&avgpool2_forward(xx) * &probe).sum());
        assert!(max_rel_err(&dxp.into_dyn(), &fd.into_dyn()) < 1e-7);

        let probe2 = {
            let mut rng = derive_rng(111, 0);
            Array2::from_shape_simple_fn((2, 3), || f64::randn(&mut rng))
        };
        let dxg = gap_backward(&probe2, 8);
        let fd = fd_grad(&x, |xx| (&gap_forward(xx) * &probe2).sum());
        assert!(max_rel_err(&dxg.into_dyn(), &fd.into_dyn()) < 1e-7);

        let mut rng = derive_rng(112, 0);
        let feat = Array2::from_shape_simple_fn((4, 5), || f64::randn(&mut rng));
        let w = Array2::from_shape_simple_fn((3, 5), || f64::randn(&mut rng));
        let b = Array1::from_shape_simple_fn(3, || f64::randn(&mut rng));
        let probe3 = Array2::from_shape_simple_fn((4, 3), || f64::randn(&mut rng));
        let (dx, dw, db) = dense_backward(&feat, &w.view(), &probe3);
        let fd_x = fd_grad(&feat, |xx| {
            (&dense_forward(xx, &w.view(), &b.view()) * &probe3).sum()
        });
        let fd_w = fd_grad(&w, |ww| {
            (&dense_forward(&feat, &ww.view(), &b.view()) * &probe3).sum()
        });
        let fd_b = fd_grad(&b, |bb| {
            (&dense_forward(&feat, &w.view(), &bb.view()) * &probe3).sum()
        });
        assert!(max_rel_err(&dx.into_dyn(), &fd_x.into_dyn()) < 1e-7);
        assert!(max_rel_err(&dw.into_dyn(), &fd_w.into_dyn()) < 1e-7);
        assert!(max_rel_err(&db.into_dyn(), &fd_b.into_dyn()) < 1e-7);
    }

    #[test]
    fn relu_masks_gradient() {
        let x = randn3((1, 2, 6), 113);
        let y = relu(&x);
        let dy = Array3::ones((1, 2, 6));
        let dx = relu_backward(&dy, &y);
        for (v, g) in x.iter().zip(dx.iter()) {
            assert_eq!(*g, if *v > 0.0 { 1.0 } else { 0.0 });
        }
    }
}
