//! Operand-generic loop kernels shared by the float and integer passes.
//! Each kernel accumulates into a caller-initialized output buffer.

use std::ops::AddAssign;

use crate::graph::{LayerSpec, TensorShape};

/// Output columns `ox` whose input column `ox * stride + k - pad` lies in
/// `[0, extent)`.
fn valid_range(out: usize, extent: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    let hi = if extent + pad > k {
        ((extent + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// 2-D convolution, weights laid out `[out][in][kh][kw]`.
///
/// The input is first unfolded into a `(in * kh * kw) x (oh * ow)` column
/// matrix (zeros at padded taps), so the inner loop runs over a whole
/// output plane.
pub(crate) fn conv2d<X, A>(
    layer: &LayerSpec,
    input: &[X],
    in_shape: TensorShape,
    weights: &[X],
    out_shape: TensorShape,
    out: &mut [A],
    mul: impl Fn(X, X) -> A,
) where
    X: Copy + Default,
    A: Copy + AddAssign,
{
    let (ih, iw) = (in_shape.height, in_shape.width);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let (kh, kw, s, p) = (layer.kernel_h, layer.kernel_w, layer.stride, layer.padding);
    let plane = oh * ow;
    let taps = layer.in_channels * kh * kw;

    let mut cols = vec![X::default(); taps * plane];
    for ic in 0..layer.in_channels {
        let in_plane = &input[ic * ih * iw..(ic + 1) * ih * iw];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(oh, ih, ky, p, s);
            for kx in 0..kw {
                let (ox_lo, ox_hi) = valid_range(ow, iw, kx, p, s);
                let row = &mut cols[((ic * kh + ky) * kw + kx) * plane..][..plane];
                for oy in oy_lo..oy_hi {
                    let in_row = &in_plane[(oy * s + ky - p) * iw..][..iw];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    for ox in ox_lo..ox_hi {
                        dst[ox] = in_row[ox * s + kx - p];
                    }
                }
            }
        }
    }

    for (oc, out_plane) in out
        .chunks_exact_mut(plane)
        .enumerate()
        .take(layer.out_channels)
    {
        let w_row = &weights[oc * taps..(oc + 1) * taps];
        for (&w, col) in w_row.iter().zip(cols.chunks_exact(plane)) {
            for (o, &x) in out_plane.iter_mut().zip(col) {
                *o += mul(x, w);
            }
        }
    }
}

/// Window sums for average pooling (zero padding counted in the window).
pub(crate) fn pool_sum<X, A>(
    layer: &LayerSpec,
    input: &[X],
    in_shape: TensorShape,
    out_shape: TensorShape,
    out: &mut [A],
    widen: impl Fn(X) -> A,
) where
    X: Copy,
    A: Copy + AddAssign,
{
    let (ih, iw) = (in_shape.height, in_shape.width);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let (kh, kw, s, p) = (layer.kernel_h, layer.kernel_w, layer.stride, layer.padding);
    for c in 0..in_shape.channels {
        let in_plane = &input[c * ih * iw..(c + 1) * ih * iw];
        let out_plane = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(oh, ih, ky, p, s);
            for kx in 0..kw {
                let (ox_lo, ox_hi) = valid_range(ow, iw, kx, p, s);
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    for ox in ox_lo..ox_hi {
                        out_plane[oy * ow + ox] += widen(in_plane[iy * iw + ox * s + kx - p]);
                    }
                }
            }
        }
    }
}

/// Dense layer, weights laid out `[out][in]`.
pub(crate) fn fully_connected<X, A>(
    input: &[X],
    weights: &[X],
    out: &mut [A],
    mul: impl Fn(X, X) -> A,
) where
    X: Copy,
    A: Copy + AddAssign,
{
    let n_in = input.len();
    for (o, acc) in out.iter_mut().enumerate() {
        let row = &weights[o * n_in..(o + 1) * n_in];
        for (&w, &x) in row.iter().zip(input) {
            *acc += mul(x, w);
        }
    }
}
