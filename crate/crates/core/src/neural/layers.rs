//! Batched layer kernels with explicit backward passes.
//!
//! Matrices are row-major with one row per sample unless stated otherwise.

use super::params::{Dense, GruParams};
use super::real::{matmul, Real};

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes `grad` where the (post-)activation is not positive.
pub fn relu_backward_inplace<T: Real>(grad: &mut [T], activation: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// `y[rows x out] = x W^T + b`.
pub fn linear_forward<T: Real>(layer: &Dense<T>, x: &[T], rows: usize, y: &mut [T]) {
    let out = layer.weight.shape()[0];
    let inp = layer.weight.len() / out;
    matmul(y, x, layer.weight.data(), rows, inp, out, false, true, T::zero());
    let b = layer.bias.data();
    for row in y[..rows * out].chunks_exact_mut(out) {
        for (v, &bi) in row.iter_mut().zip(b) {
            *v += bi;
        }
    }
}

/// Accumulates weight/bias gradients into `grad`; writes (or adds, with
/// `accumulate_dx`) the input gradient into `dx` when given.
pub fn linear_backward<T: Real>(
    layer: &Dense<T>,
    grad: &mut Dense<T>,
    x: &[T],
    dy: &[T],
    rows: usize,
    dx: Option<&mut [T]>,
    accumulate_dx: bool,
) {
    let out = layer.weight.shape()[0];
    let inp = layer.weight.len() / out;
    matmul(grad.weight.data_mut(), dy, x, out, rows, inp, true, false, T::one());
    let db = grad.bias.data_mut();
    for row in dy[..rows * out].chunks_exact(out) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    if let Some(dx) = dx {
        let beta = if accumulate_dx { T::one() } else { T::zero() };
        matmul(dx, dy, layer.weight.data(), rows, out, inp, false, false, beta);
    }
}

/// Saved activations of one batched GRU application.
#[derive(Debug, Clone, Default)]
pub struct GruCache<T> {
    pub x: Vec<T>,
    pub h: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub n: Vec<T>,
    pub rh: Vec<T>,
}

/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `n = tanh(W_n x + U_n (r∘h) + b_n)`, `h' = (1-z)∘n + z∘h`.
pub fn gru_forward<T: Real>(
    p: &GruParams<T>,
    x: &[T],
    h: &[T],
    rows: usize,
    out: &mut [T],
    cache: Option<&mut GruCache<T>>,
) {
    let d = p.w_hidden.shape()[1];
    let inp = p.w_input.shape()[1];
    let mut gx = vec![T::zero(); rows * 3 * d];
    matmul(&mut gx, x, p.w_input.data(), rows, inp, 3 * d, false, true, T::zero());
    let mut gh = vec![T::zero(); rows * 2 * d];
    matmul(&mut gh, h, &p.w_hidden.data()[..2 * d * d], rows, d, 2 * d, false, true, T::zero());
    let b = p.bias.data();
    let mut z = vec![T::zero(); rows * d];
    let mut r = vec![T::zero(); rows * d];
    let mut rh = vec![T::zero(); rows * d];
    for i in 0..rows {
        for k in 0..d {
            z[i * d + k] = sigmoid(gx[i * 3 * d + k] + gh[i * 2 * d + k] + b[k]);
            let rv = sigmoid(gx[i * 3 * d + d + k] + gh[i * 2 * d + d + k] + b[d + k]);
            r[i * d + k] = rv;
            rh[i * d + k] = rv * h[i * d + k];
        }
    }
    let mut gn = vec![T::zero(); rows * d];
    matmul(&mut gn, &rh, &p.w_hidden.data()[2 * d * d..], rows, d, d, false, true, T::zero());
    let mut n = vec![T::zero(); rows * d];
    for i in 0..rows {
        for k in 0..d {
            let nv = (gx[i * 3 * d + 2 * d + k] + gn[i * d + k] + b[2 * d + k]).tanh();
            n[i * d + k] = nv;
            let zv = z[i * d + k];
            out[i * d + k] = (T::one() - zv) * nv + zv * h[i * d + k];
        }
    }
    if let Some(c) = cache {
        c.x = x[..rows * inp].to_vec();
        c.h = h[..rows * d].to_vec();
        c.z = z;
        c.r = r;
        c.n = n;
        c.rh = rh;
    }
}

/// Backward through one GRU application. Returns `(dx, dh)`.
pub fn gru_backward<T: Real>(p: &GruParams<T>, g: &mut GruParams<T>, c: &GruCache<T>, dout: &[T]) -> (Vec<T>, Vec<T>) {
    let d = p.w_hidden.shape()[1];
    let inp = p.w_input.shape()[1];
    let rows = c.h.len() / d;
    let mut dgates = vec![T::zero(); rows * 3 * d];
    let mut dh = vec![T::zero(); rows * d];
    let mut dan = vec![T::zero(); rows * d];
    for i in 0..rows {
        for k in 0..d {
            let j = i * d + k;
            let (zv, nv, hv, go) = (c.z[j], c.n[j], c.h[j], dout[j]);
            let dn = go * (T::one() - zv);
            let dz = go * (hv - nv);
            dh[j] = go * zv;
            let a = dn * (T::one() - nv * nv);
            dan[j] = a;
            dgates[i * 3 * d + k] = dz * zv * (T::one() - zv);
            dgates[i * 3 * d + 2 * d + k] = a;
        }
    }
    // d(r∘h) = dan U_n
    let mut drh = vec![T::zero(); rows * d];
    matmul(&mut drh, &dan, &p.w_hidden.data()[2 * d * d..], rows, d, d, false, false, T::zero());
    for i in 0..rows {
        for k in 0..d {
            let j = i * d + k;
            let rv = c.r[j];
            let dr = drh[j] * c.h[j];
            dh[j] += drh[j] * rv;
            dgates[i * 3 * d + d + k] = dr * rv * (T::one() - rv);
        }
    }
    // Recurrent weight gradients: U_z, U_r from h; U_n from r∘h.
    let mut dzr = vec![T::zero(); rows * 2 * d];
    for i in 0..rows {
        dzr[i * 2 * d..(i + 1) * 2 * d].copy_from_slice(&dgates[i * 3 * d..i * 3 * d + 2 * d]);
    }
    {
        let gw = g.w_hidden.data_mut();
        let (gzr, gn) = gw.split_at_mut(2 * d * d);
        matmul(gzr, &dzr, &c.h, 2 * d, rows, d, true, false, T::one());
        matmul(gn, &dan, &c.rh, d, rows, d, true, false, T::one());
    }
    matmul(&mut dh, &dzr, &p.w_hidden.data()[..2 * d * d], rows, 2 * d, d, false, false, T::one());
    matmul(g.w_input.data_mut(), &dgates, &c.x, 3 * d, rows, inp, true, false, T::one());
    let gb = g.bias.data_mut();
    for row in dgates.chunks_exact(3 * d) {
        for (b, &v) in gb.iter_mut().zip(row) {
            *b += v;
        }
    }
    let mut dx = vec![T::zero(); rows * inp];
    matmul(&mut dx, &dgates, p.w_input.data(), rows, 3 * d, inp, false, false, T::zero());
    (dx, dh)
}

/// Spatial geometry of a batch of square feature maps stored channel-major:
/// element `(c, frame, y, x)` lives at `c * frames * side² + frame * side² + y * side + x`.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub side: usize,
    pub frames: usize,
}

impl ConvGeometry {
    pub fn area(&self) -> usize {
        self.side * self.side
    }

    pub fn columns(&self) -> usize {
        self.frames * self.area()
    }
}

/// Output columns `x` whose source column `x + kx - 1` is inside the map.
fn valid_span(s: usize, k: usize) -> (usize, usize) {
    match k {
        0 => (1, s),
        1 => (0, s),
        _ => (0, s - 1),
    }
}

/// Frames per im2col block; keeps the column buffer cache-sized.
const CONV_BLOCK_COLUMNS: usize = 4096;

/// Column matrix for frames `f0..f1`: rows `(c, ky, kx)`, `(f1 - f0) * area` columns.
fn im2col<T: Real>(input: &[T], channels: usize, g: ConvGeometry, f0: usize, f1: usize, col: &mut [T]) {
    let (s, area, ncols) = (g.side, g.area(), g.columns());
    let width = (f1 - f0) * area;
    for c in 0..channels {
        for ky in 0..3 {
            let (y0, y1) = valid_span(s, ky);
            for kx in 0..3 {
                let (x0, x1) = valid_span(s, kx);
                let row = &mut col[(c * 9 + ky * 3 + kx) * width..][..width];
                for f in f0..f1 {
                    let src = &input[c * ncols + f * area..][..area];
                    let dst = &mut row[(f - f0) * area..][..area];
                    for y in 0..s {
                        let d = &mut dst[y * s..][..s];
                        if y < y0 || y >= y1 {
                            d.fill(T::zero());
                            continue;
                        }
                        let sy = y + ky - 1;
                        d[..x0].fill(T::zero());
                        d[x1..].fill(T::zero());
                        d[x0..x1].copy_from_slice(&src[sy * s + x0 + kx - 1..][..x1 - x0]);
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(col: &[T], channels: usize, g: ConvGeometry, f0: usize, f1: usize, dinput: &mut [T]) {
    let (s, area, ncols) = (g.side, g.area(), g.columns());
    let width = (f1 - f0) * area;
    for c in 0..channels {
        for ky in 0..3 {
            let (y0, y1) = valid_span(s, ky);
            for kx in 0..3 {
                let (x0, x1) = valid_span(s, kx);
                let row = &col[(c * 9 + ky * 3 + kx) * width..][..width];
                for f in f0..f1 {
                    let src = &row[(f - f0) * area..][..area];
                    let dst = &mut dinput[c * ncols + f * area..][..area];
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let d = &mut dst[sy * s + x0 + kx - 1..][..x1 - x0];
                        for (o, &v) in d.iter_mut().zip(&src[y * s + x0..][..x1 - x0]) {
                            *o += v;
                        }
                    }
                }
            }
        }
    }
}

fn frame_blocks(g: ConvGeometry) -> impl Iterator<Item = (usize, usize)> {
    let per = (CONV_BLOCK_COLUMNS / g.area()).max(1);
    (0..g.frames).step_by(per).map(move |f0| (f0, (f0 + per).min(g.frames)))
}

/// 3x3 same-padded stride-1 convolution plus bias, no activation.
pub fn conv_forward<T: Real>(layer: &Dense<T>, input: &[T], g: ConvGeometry, out: &mut [T]) {
    let cout = layer.weight.shape()[0];
    let k = layer.weight.shape()[1] * 9;
    let (area, ncols) = (g.area(), g.columns());
    assert!(out.len() >= cout * ncols && input.len() >= k / 9 * ncols);
    let mut col = Vec::new();
    for (f0, f1) in frame_blocks(g) {
        let width = (f1 - f0) * area;
        col.resize(k * width, T::zero());
        im2col(input, k / 9, g, f0, f1, &mut col);
        // SAFETY: `out` holds `cout` rows of `ncols`; this block writes columns
        // `f0 * area .. f0 * area + width` of each row.
        unsafe {
            T::gemm_raw(
                cout,
                k,
                width,
                T::one(),
                layer.weight.data().as_ptr(),
                k as isize,
                1,
                col.as_ptr(),
                width as isize,
                1,
                T::zero(),
                out.as_mut_ptr().add(f0 * area),
                ncols as isize,
                1,
            );
        }
    }
    for (o, &b) in out.chunks_exact_mut(ncols).zip(layer.bias.data()) {
        for v in o {
            *v += b;
        }
    }
}

/// Gradient of a convolution given the output gradient; accumulates parameter
/// gradients and returns the input gradient when `want_dinput`.
pub fn conv_backward<T: Real>(
    layer: &Dense<T>,
    grad: &mut Dense<T>,
    input: &[T],
    dout: &[T],
    g: ConvGeometry,
    want_dinput: bool,
) -> Option<Vec<T>> {
    let cout = layer.weight.shape()[0];
    let cin = layer.weight.shape()[1];
    let k = cin * 9;
    let (area, ncols) = (g.area(), g.columns());
    assert!(dout.len() >= cout * ncols && input.len() >= cin * ncols);
    for (gb, row) in grad.bias.data_mut().iter_mut().zip(dout.chunks_exact(ncols)) {
        *gb += row.iter().copied().sum::<T>();
    }
    let mut din = if want_dinput { vec![T::zero(); cin * ncols] } else { Vec::new() };
    let mut col = Vec::new();
    let mut dcol = Vec::new();
    for (f0, f1) in frame_blocks(g) {
        let width = (f1 - f0) * area;
        let lo = f0 * area;
        col.resize(k * width, T::zero());
        im2col(input, cin, g, f0, f1, &mut col);
        let gw = grad.weight.data_mut();
        for o in 0..cout {
            let d = &dout[o * ncols + lo..][..width];
            for r in 0..k {
                gw[o * k + r] += super::real::dot(d, &col[r * width..][..width]);
            }
        }
        if want_dinput {
            dcol.resize(k * width, T::zero());
            // SAFETY: `weight` is `cout x k` (read transposed), `dout` rows have
            // stride `ncols`, `dcol` is `k x width`.
            unsafe {
                T::gemm_raw(
                    k,
                    cout,
                    width,
                    T::one(),
                    layer.weight.data().as_ptr(),
                    1,
                    k as isize,
                    dout.as_ptr().add(lo),
                    ncols as isize,
                    1,
                    T::zero(),
                    dcol.as_mut_ptr(),
                    width as isize,
                    1,
                );
            }
            col2im_add(&dcol, cin, g, f0, f1, &mut din);
        }
    }
    want_dinput.then_some(din)
}
