//! Forward and backward kernels over flat row-major slices.

use super::real::{matmul, matmul_to_transposed, Real};

/// Geometry of one "same"-padded square convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_size: usize,
}

impl ConvShape {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_size(&self) -> usize {
        (self.in_size + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    /// Rows of the unfolded input (= weight row length).
    pub fn patch_len(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn out_plane(&self) -> usize {
        self.out_size() * self.out_size()
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.in_size * self.in_size
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.out_plane()
    }
}

/// Output columns `ox` whose input column `ox * stride + kx - pad` lies
/// inside `0..n`.
fn valid_range(o: usize, st: usize, kx: usize, pad: usize, n: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).div_ceil(st).min(o);
    // largest ox with ox * st + kx - pad <= n - 1
    let hi = if n + pad > kx { ((n + pad - kx - 1) / st + 1).min(o) } else { 0 };
    (lo, hi.max(lo))
}

/// Unfolds `input` (cin x in x in) into `cols` (patch_len x out_plane).
#[cfg(test)]
fn im2col<T: Real>(s: &ConvShape, input: &[T], cols: &mut [T]) {
    im2col_at(s, input, cols, s.out_plane(), 0);
}

/// [`im2col`] into the column block starting at `off` of a matrix with row
/// length `ld`, so several samples can share one unfolded buffer.
fn im2col_at<T: Real>(s: &ConvShape, input: &[T], cols: &mut [T], ld: usize, off: usize) {
    let (k, st, pad, n, o) = (s.kernel, s.stride, s.pad(), s.in_size, s.out_size());
    debug_assert!(cols.len() >= s.patch_len() * ld);
    for c in 0..s.cin {
        let plane = &input[c * n * n..(c + 1) * n * n];
        for ky in 0..k {
            let (y_lo, y_hi) = valid_range(o, st, ky, pad, n);
            for kx in 0..k {
                let (x_lo, x_hi) = valid_range(o, st, kx, pad, n);
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * ld + off..row * ld + off + o * o];
                dst[..y_lo * o].fill(T::zero());
                dst[y_hi * o..].fill(T::zero());
                for oy in y_lo..y_hi {
                    let iy = oy * st + ky - pad;
                    let line = &mut dst[oy * o..(oy + 1) * o];
                    line[..x_lo].fill(T::zero());
                    line[x_hi..].fill(T::zero());
                    if x_hi == x_lo {
                        continue;
                    }
                    let start = iy * n + x_lo * st + kx - pad;
                    let src = &plane[start..];
                    if st == 1 {
                        line[x_lo..x_hi].copy_from_slice(&src[..x_hi - x_lo]);
                    } else {
                        for (v, &x) in line[x_lo..x_hi].iter_mut().zip(src.iter().step_by(st)) {
                            *v = x;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `dx`.
#[cfg(test)]
fn col2im_add<T: Real>(s: &ConvShape, cols: &[T], dx: &mut [T]) {
    col2im_add_at(s, cols, s.out_plane(), 0, dx);
}

fn col2im_add_at<T: Real>(s: &ConvShape, cols: &[T], ld: usize, off: usize, dx: &mut [T]) {
    let (k, st, pad, n, o) = (s.kernel, s.stride, s.pad(), s.in_size, s.out_size());
    for c in 0..s.cin {
        let plane = &mut dx[c * n * n..(c + 1) * n * n];
        for ky in 0..k {
            let (y_lo, y_hi) = valid_range(o, st, ky, pad, n);
            for kx in 0..k {
                let (x_lo, x_hi) = valid_range(o, st, kx, pad, n);
                if x_hi == x_lo {
                    continue;
                }
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ld + off..row * ld + off + o * o];
                for oy in y_lo..y_hi {
                    let iy = oy * st + ky - pad;
                    let start = iy * n + x_lo * st + kx - pad;
                    let line = &src[oy * o + x_lo..oy * o + x_hi];
                    for (d, &v) in plane[start..].iter_mut().step_by(st).zip(line) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Upper bound on unfolded elements per GEMM; batches are split to fit.
const COLS_BUDGET: usize = 1 << 22;

/// Reusable buffers for the batched convolution kernels.
#[derive(Debug, Default)]
pub(crate) struct ConvScratch<T> {
    cols: Vec<T>,
    out: Vec<T>,
}

fn chunk_len(s: &ConvShape) -> usize {
    (COLS_BUDGET / (s.patch_len() * s.out_plane()).max(1)).max(1)
}

/// `out = W * im2col(input) + b` for a batch laid out sample-major.
pub(crate) fn conv_forward<T: Real>(
    s: &ConvShape,
    weight: &[T],
    bias: &[T],
    input: &[T],
    out: &mut [T],
    ws: &mut ConvScratch<T>,
) {
    let plane = s.out_plane();
    let batch = input.len() / s.in_len();
    for start in (0..batch).step_by(chunk_len(s)) {
        let m = chunk_len(s).min(batch - start);
        let ld = m * plane;
        ws.cols.resize(s.patch_len() * ld, T::zero());
        for j in 0..m {
            let x = &input[(start + j) * s.in_len()..(start + j + 1) * s.in_len()];
            im2col_at(s, x, &mut ws.cols, ld, j * plane);
        }
        ws.out.resize(s.cout * ld, T::zero());
        matmul(s.cout, s.patch_len(), ld, weight, false, &ws.cols, false, T::zero(), &mut ws.out);
        for j in 0..m {
            let y = &mut out[(start + j) * s.out_len()..(start + j + 1) * s.out_len()];
            for (c, dst) in y.chunks_exact_mut(plane).enumerate() {
                let src = &ws.out[c * ld + j * plane..c * ld + (j + 1) * plane];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + bias[c];
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients over a batch and, when `dx` is
/// given, writes the input gradient into it (overwriting).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    s: &ConvShape,
    weight: &[T],
    input: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dx: Option<&mut [T]>,
    ws: &mut ConvScratch<T>,
) {
    let plane = s.out_plane();
    let batch = input.len() / s.in_len();
    for start in (0..batch).step_by(chunk_len(s)) {
        let m = chunk_len(s).min(batch - start);
        let ld = m * plane;
        ws.cols.resize(s.patch_len() * ld, T::zero());
        ws.out.resize(s.cout * ld, T::zero());
        for j in 0..m {
            let x = &input[(start + j) * s.in_len()..(start + j + 1) * s.in_len()];
            im2col_at(s, x, &mut ws.cols, ld, j * plane);
            let g = &dout[(start + j) * s.out_len()..(start + j + 1) * s.out_len()];
            for (c, src) in g.chunks_exact(plane).enumerate() {
                ws.out[c * ld + j * plane..c * ld + (j + 1) * plane].copy_from_slice(src);
            }
        }
        matmul(s.cout, ld, s.patch_len(), &ws.out, false, &ws.cols, true, T::one(), dweight);
        for (c, row) in ws.out.chunks_exact(ld).enumerate() {
            dbias[c] += row.iter().copied().sum::<T>();
        }
        if let Some(dx) = dx.as_deref_mut() {
            matmul(s.patch_len(), s.cout, ld, weight, true, &ws.out, false, T::zero(), &mut ws.cols);
            for j in 0..m {
                let d = &mut dx[(start + j) * s.in_len()..(start + j + 1) * s.in_len()];
                d.fill(T::zero());
                col2im_add_at(s, &ws.cols, ld, j * plane, d);
            }
        }
    }
}

/// `y = x W^T + b` over a batch: x is (B x in), W is (out x in).
pub(crate) fn linear_forward<T: Real>(
    batch: usize,
    n_in: usize,
    n_out: usize,
    weight: &[T],
    bias: &[T],
    x: &[T],
    y: &mut [T],
) {
    for row in y.chunks_exact_mut(n_out) {
        row.copy_from_slice(bias);
    }
    if batch <= SMALL_BATCH {
        // Streams the weights once; a K block of the inputs stays in cache.
        for k0 in (0..n_in).step_by(K_BLOCK) {
            let k1 = (k0 + K_BLOCK).min(n_in);
            for (o, w) in weight.chunks_exact(n_in).enumerate() {
                let w = &w[k0..k1];
                for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
                    yr[o] += dot(w, &xr[k0..k1]);
                }
            }
        }
        return;
    }
    // y^T = W x^T keeps the large weight matrix in row-major order
    matmul_to_transposed(n_out, n_in, batch, weight, false, x, true, T::one(), y);
}

/// Batches up to this size use the streaming kernels instead of gemm.
const SMALL_BATCH: usize = 16;
const K_BLOCK: usize = 1024;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&p, &q)| p * q).sum();
    for (pa, pb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += pa[l] * pb[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Accumulates dW and db; returns dx when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Real>(
    batch: usize,
    n_in: usize,
    n_out: usize,
    weight: &[T],
    x: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    for row in dy.chunks_exact(n_out) {
        for (b, &g) in dbias.iter_mut().zip(row) {
            *b += g;
        }
    }
    matmul(n_out, batch, n_in, dy, true, x, false, T::one(), dweight);
    want_dx.then(|| {
        let mut dx = vec![T::zero(); batch * n_in];
        matmul(batch, n_out, n_in, dy, false, weight, false, T::zero(), &mut dx);
        dx
    })
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub(crate) fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub(crate) fn relu_backward_inplace<T: Real>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch statistics of a (B x C x HW) activation.
pub(crate) struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance, used for normalisation.
    pub var: Vec<T>,
    /// Number of values per channel.
    pub count: usize,
}

pub(crate) fn batch_stats<T: Real>(x: &[T], channels: usize, plane: usize) -> BatchStats<T> {
    let batch = x.len() / (channels * plane);
    let count = batch * plane;
    let n = T::from_f64(count as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for c in 0..channels {
        let chan = (0..batch).flat_map(|b| x[(b * channels + c) * plane..][..plane].iter());
        let m = chan.clone().copied().sum::<T>() / n;
        let v = chan.map(|&v| (v - m) * (v - m)).sum::<T>() / n;
        mean[c] = m;
        var[c] = v;
    }
    BatchStats { mean, var, count }
}

/// Normalises `x` with the given per-channel statistics and affine
/// parameters; returns `x_hat` (before the affine map) and writes `y`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_apply<T: Real>(
    x: &[T],
    channels: usize,
    plane: usize,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    y: &mut [T],
) -> Vec<T> {
    let eps = T::from_f64(BN_EPS);
    let mut xhat = vec![T::zero(); x.len()];
    for (i, (chunk_x, (chunk_h, chunk_y))) in x
        .chunks_exact(plane)
        .zip(xhat.chunks_exact_mut(plane).zip(y.chunks_exact_mut(plane)))
        .enumerate()
    {
        let c = i % channels;
        let inv = T::one() / (var[c] + eps).sqrt();
        for ((&xv, h), yv) in chunk_x.iter().zip(chunk_h.iter_mut()).zip(chunk_y.iter_mut()) {
            *h = (xv - mean[c]) * inv;
            *yv = gamma[c] * *h + beta[c];
        }
    }
    xhat
}

/// Backward through training-mode batch normalisation. Accumulates dgamma
/// and dbeta and returns dx.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    channels: usize,
    plane: usize,
    var: &[T],
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let eps = T::from_f64(BN_EPS);
    let batch = dy.len() / (channels * plane);
    let n = T::from_f64((batch * plane) as f64);
    let mut sum_dy = vec![T::zero(); channels];
    let mut sum_dy_xhat = vec![T::zero(); channels];
    for (i, (g, h)) in dy.chunks_exact(plane).zip(xhat.chunks_exact(plane)).enumerate() {
        let c = i % channels;
        for (&gv, &hv) in g.iter().zip(h) {
            sum_dy[c] += gv;
            sum_dy_xhat[c] += gv * hv;
        }
    }
    for c in 0..channels {
        dgamma[c] += sum_dy_xhat[c];
        dbeta[c] += sum_dy[c];
    }
    let mut dx = vec![T::zero(); dy.len()];
    for (i, ((g, h), d)) in dy
        .chunks_exact(plane)
        .zip(xhat.chunks_exact(plane))
        .zip(dx.chunks_exact_mut(plane))
        .enumerate()
    {
        let c = i % channels;
        let scale = gamma[c] / ((var[c] + eps).sqrt() * n);
        for ((&gv, &hv), dv) in g.iter().zip(h).zip(d.iter_mut()) {
            *dv = scale * (n * gv - sum_dy[c] - hv * sum_dy_xhat[c]);
        }
    }
    dx
}
