//! Channel-major (`[c][h][w]`) building blocks with explicit backward passes.

use crate::scalar::{gemm, Scalar};

/// Unfolds `input` into a `(c * k * k) x (h * w)` patch matrix for a
/// same-padded `k x k` convolution.
pub fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    debug_assert_eq!(col.len(), c * k * k * hw);
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let iy = y + ky;
                    if iy < p || iy - p >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(iy - p) * w..(iy - p + 1) * w];
                    dst[..x0].fill(T::zero());
                    dst[x1..].fill(T::zero());
                    dst[x0..x1].copy_from_slice(&src[x0 + kx - p..x1 + kx - p]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the input.
pub fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, out: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    out.fill(T::zero());
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                for y in 0..h {
                    let iy = y + ky;
                    if iy < p || iy - p >= h {
                        continue;
                    }
                    let dst = &mut plane[(iy - p) * w..(iy - p + 1) * w];
                    for (d, &s) in dst[x0 + kx - p..x1 + kx - p].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Same-padded convolution: `out = W * im2col(input) + b`, optional ReLU.
/// `weights` is `[c_out][c_in * k * k]`, `bias` is `[c_out]`. The patch
/// matrix is left in `col` for the backward pass.
#[allow(clippy::too_many_arguments)]
pub fn conv_forward<T: Scalar>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    weights: &[T],
    bias: &[T],
    relu: bool,
    col: &mut Vec<T>,
    out: &mut Vec<T>,
) {
    let c_out = bias.len();
    let hw = h * w;
    let ckk = c_in * k * k;
    if k == 1 {
        col.clear();
        col.extend_from_slice(&input[..ckk * hw]);
    } else {
        col.resize(ckk * hw, T::zero());
        im2col(input, c_in, h, w, k, col);
    }
    out.resize(c_out * hw, T::zero());
    for (o, row) in out.chunks_exact_mut(hw).enumerate() {
        row.fill(bias[o]);
    }
    gemm(false, false, c_out, hw, ckk, T::one(), weights, col, T::one(), out);
    if relu {
        for v in out.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

/// Backward of [`conv_forward`]. `grad_out` holds the gradient w.r.t. the
/// post-activation output and is masked in place by the ReLU. Weight and
/// bias gradients are accumulated; the input gradient is written only when
/// `grad_in` is given.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    col: &[T],
    out: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    weights: &[T],
    relu: bool,
    grad_out: &mut [T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    grad_in: Option<(&mut Vec<T>, &mut Vec<T>)>,
) {
    let c_out = grad_b.len();
    let hw = h * w;
    let ckk = c_in * k * k;
    if relu {
        for (g, &o) in grad_out.iter_mut().zip(out) {
            if o <= T::zero() {
                *g = T::zero();
            }
        }
    }
    for (gb, row) in grad_b.iter_mut().zip(grad_out.chunks_exact(hw)) {
        *gb += row.iter().copied().sum::<T>();
    }
    gemm(false, true, c_out, ckk, hw, T::one(), grad_out, col, T::one(), grad_w);
    if let Some((grad_col, grad_input)) = grad_in {
        grad_input.resize(c_in * hw, T::zero());
        if k == 1 {
            gemm(true, false, ckk, hw, c_out, T::one(), weights, grad_out, T::zero(), grad_input);
        } else {
            grad_col.resize(ckk * hw, T::zero());
            gemm(true, false, ckk, hw, c_out, T::one(), weights, grad_out, T::zero(), grad_col);
            col2im(grad_col, c_in, h, w, k, grad_input);
        }
    }
}

/// 2 x 2 max pool with stride 2. `argmax` receives the flat input index of
/// each selected element (first maximum on ties).
pub fn maxpool_forward<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, out: &mut Vec<T>, argmax: &mut Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    out.clear();
    argmax.clear();
    for ci in 0..c {
        let base = ci * h * w;
        for y in 0..ho {
            for x in 0..wo {
                let i0 = base + 2 * y * w + 2 * x;
                let mut best = i0;
                for i in [i0 + 1, i0 + w, i0 + w + 1] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                argmax.push(best as u32);
            }
        }
    }
}

pub fn maxpool_backward<T: Scalar>(grad_out: &[T], argmax: &[u32], grad_in: &mut [T]) {
    grad_in.fill(T::zero());
    for (&g, &i) in grad_out.iter().zip(argmax) {
        grad_in[i as usize] += g;
    }
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample_forward<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, out: &mut Vec<T>) {
    let w2 = 2 * w;
    out.clear();
    out.reserve(c * 4 * h * w);
    for ci in 0..c {
        for y in 0..2 * h {
            let src = &input[(ci * h + y / 2) * w..][..w];
            out.extend((0..w2).map(|x| src[x / 2]));
        }
    }
}

pub fn upsample_backward<T: Scalar>(grad_out: &[T], c: usize, h: usize, w: usize, grad_in: &mut Vec<T>) {
    let w2 = 2 * w;
    grad_in.clear();
    grad_in.resize(c * h * w, T::zero());
    for ci in 0..c {
        for y in 0..2 * h {
            let row = &grad_out[(ci * 2 * h + y) * w2..][..w2];
            let dst = &mut grad_in[(ci * h + y / 2) * w..][..w];
            for (x, &g) in row.iter().enumerate() {
                dst[x / 2] += g;
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
