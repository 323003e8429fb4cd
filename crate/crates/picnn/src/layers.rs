//! Forward and backward kernels on single CHW images.

use crate::real::{gemm, Real};

pub const NORM_EPS: f64 = 1e-5;

/// `(C*9) x (H*W)` patch matrix of a 3x3, padding-1 convolution.
pub fn im2col<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); c * 9 * hw];
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    let (x0, x1) = match kx {
                        0 => (1, w),
                        1 => (0, w),
                        _ => (0, w.saturating_sub(1)),
                    };
                    for x in x0..x1 {
                        dst[x] = src[x + kx - 1];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..][..w];
                    let dst = &mut plane[sy as usize * w..][..w];
                    let (x0, x1) = match kx {
                        0 => (1, w),
                        1 => (0, w),
                        _ => (0, w.saturating_sub(1)),
                    };
                    for x in x0..x1 {
                        dst[x + kx - 1] += src[x];
                    }
                }
            }
        }
    }
    out
}

/// Per-channel normalisation over the spatial extent, returning `(xhat, inv_std)`.
pub fn normalize<T: Real>(x: &[T], c: usize, hw: usize) -> (Vec<T>, Vec<T>) {
    let n = T::of(hw as f64);
    let eps = T::of(NORM_EPS);
    let mut xhat = vec![T::zero(); c * hw];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let src = &x[ch * hw..(ch + 1) * hw];
        let mean = src.iter().fold(T::zero(), |a, &v| a + v) / n;
        let var = src.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        let inv = T::one() / (var + eps).sqrt();
        inv_std[ch] = inv;
        for (d, &v) in xhat[ch * hw..(ch + 1) * hw].iter_mut().zip(src) {
            *d = (v - mean) * inv;
        }
    }
    (xhat, inv_std)
}

/// Gradient of the normalisation given `d xhat`.
pub fn normalize_backward<T: Real>(dxhat: &[T], xhat: &[T], inv_std: &[T], c: usize, hw: usize) -> Vec<T> {
    let n = T::of(hw as f64);
    let mut dx = vec![T::zero(); c * hw];
    for ch in 0..c {
        let g = &dxhat[ch * hw..(ch + 1) * hw];
        let xh = &xhat[ch * hw..(ch + 1) * hw];
        let sum_g = g.iter().fold(T::zero(), |a, &v| a + v);
        let sum_gx = g.iter().zip(xh).fold(T::zero(), |a, (&u, &v)| a + u * v);
        let scale = inv_std[ch] / n;
        for ((d, &gi), &xi) in dx[ch * hw..(ch + 1) * hw].iter_mut().zip(g).zip(xh) {
            *d = scale * (n * gi - sum_g - xi * sum_gx);
        }
    }
    dx
}

#[inline]
pub fn gelu<T: Real>(u: T) -> T {
    let half = T::of(0.5);
    half * u * (T::one() + (u * T::of(std::f64::consts::FRAC_1_SQRT_2)).gauss_erf())
}

#[inline]
pub fn gelu_grad<T: Real>(u: T) -> T {
    let cdf = T::of(0.5) * (T::one() + (u * T::of(std::f64::consts::FRAC_1_SQRT_2)).gauss_erf());
    let pdf = (-(u * u) * T::of(0.5)).exp() * T::of(0.398_942_280_401_432_7);
    cdf + u * pdf
}

#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// 3x3 convolution without bias: `out (cout x hw) = W (cout x cin*9) cols`.
pub fn conv3x3<T: Real>(weight: &[T], cols: &[T], cin: usize, cout: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cout * hw];
    gemm(false, false, cout, hw, cin * 9, weight, cols, &mut out, false);
    out
}

/// Accumulates `dW` and returns `d cols`.
pub fn conv3x3_backward<T: Real>(
    weight: &[T],
    cols: &[T],
    dout: &[T],
    dweight: &mut [T],
    cin: usize,
    cout: usize,
    hw: usize,
    need_input_grad: bool,
) -> Option<Vec<T>> {
    gemm(false, true, cout, cin * 9, hw, dout, cols, dweight, true);
    need_input_grad.then(|| {
        let mut dcols = vec![T::zero(); cin * 9 * hw];
        gemm(true, false, cin * 9, hw, cout, weight, dout, &mut dcols, false);
        dcols
    })
}

/// 2x2 max-pool with stride 2; returns the pooled map and argmax indices.
pub fn maxpool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut idx = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = base + 2 * y * w + 2 * xo;
                for k in [base + 2 * y * w + 2 * xo + 1, base + (2 * y + 1) * w + 2 * xo, base + (2 * y + 1) * w + 2 * xo + 1] {
                    if x[k] > x[best] {
                        best = k;
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

pub fn maxpool2_backward<T: Real>(dout: &[T], idx: &[usize], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &k) in dout.iter().zip(idx) {
        dx[k] += g;
    }
    dx
}

/// Transposed 2x2 stride-2 convolution with bias. `weight` is `(cout*4) x cin`.
pub fn upconv2<T: Real>(weight: &[T], bias: &[T], x: &[T], cin: usize, cout: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut tmp = vec![T::zero(); cout * 4 * hw];
    gemm(false, false, cout * 4, hw, cin, weight, x, &mut tmp, false);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); cout * h2 * w2];
    for co in 0..cout {
        for d in 0..4 {
            let (dy, dx) = (d / 2, d % 2);
            let row = &tmp[(co * 4 + d) * hw..][..hw];
            for y in 0..h {
                for xx in 0..w {
                    out[co * h2 * w2 + (2 * y + dy) * w2 + 2 * xx + dx] = row[y * w + xx] + bias[co];
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn upconv2_backward<T: Real>(
    weight: &[T],
    x: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let hw = h * w;
    let (h2, w2) = (2 * h, 2 * w);
    let mut dtmp = vec![T::zero(); cout * 4 * hw];
    for co in 0..cout {
        let plane = &dout[co * h2 * w2..(co + 1) * h2 * w2];
        dbias[co] += plane.iter().fold(T::zero(), |a, &v| a + v);
        for d in 0..4 {
            let (dy, dx) = (d / 2, d % 2);
            let row = &mut dtmp[(co * 4 + d) * hw..][..hw];
            for y in 0..h {
                for xx in 0..w {
                    row[y * w + xx] = plane[(2 * y + dy) * w2 + 2 * xx + dx];
                }
            }
        }
    }
    gemm(false, true, cout * 4, cin, hw, &dtmp, x, dweight, true);
    let mut dx = vec![T::zero(); cin * hw];
    gemm(true, false, cin, hw, cout * 4, weight, &dtmp, &mut dx, false);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w) = (2, 4, 3);
        let mut r = lcg(1);
        let x: Vec<f64> = (0..c * h * w).map(|_| r()).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|_| r()).collect();
        let lhs = dot(&im2col(&x, c, h, w), &y);
        let rhs = dot(&x, &col2im(&y, c, h, w));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let (cin, cout, h, w) = (2, 3, 3, 4);
        let mut r = lcg(2);
        let x: Vec<f64> = (0..cin * h * w).map(|_| r()).collect();
        let wt: Vec<f64> = (0..cout * cin * 9).map(|_| r()).collect();
        let out = conv3x3(&wt, &im2col(&x, cin, h, w), cin, cout, h * w);
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut s = 0.0;
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    s += wt[(co * cin + ci) * 9 + ky * 3 + kx] * x[ci * h * w + sy as usize * w + sx as usize];
                                }
                            }
                        }
                    }
                    assert!((out[co * h * w + y * w + xx] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalisation_backward_matches_fd() {
        let (c, hw) = (2, 6);
        let mut r = lcg(3);
        let x: Vec<f64> = (0..c * hw).map(|_| r()).collect();
        let g: Vec<f64> = (0..c * hw).map(|_| r()).collect();
        let (xhat, inv) = normalize(&x, c, hw);
        let dx = normalize_backward(&g, &xhat, &inv, c, hw);
        for k in 0..c * hw {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (dot(&normalize(&xp, c, hw).0, &g) - dot(&normalize(&xm, c, hw).0, &g)) / (2.0 * h);
            assert!((fd - dx[k]).abs() < 1e-6, "{k}: {fd} vs {}", dx[k]);
        }
    }

    #[test]
    fn gelu_values_and_slope() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-14);
        for u in [-3.0, -0.7, 0.0, 0.4, 2.5f64] {
            let fd = (gelu(u + 1e-6) - gelu(u - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = [1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0f64];
        let (out, idx) = maxpool2(&x, 1, 2, 4);
        assert_eq!(out, vec![5.0, 9.0]);
        assert_eq!(maxpool2_backward(&[1.0, 2.0], &idx, 8), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn upconv_backward_is_adjoint() {
        let (cin, cout, h, w) = (3, 2, 2, 3);
        let mut r = lcg(4);
        let wt: Vec<f64> = (0..cout * 4 * cin).map(|_| r()).collect();
        let x: Vec<f64> = (0..cin * h * w).map(|_| r()).collect();
        let g: Vec<f64> = (0..cout * 4 * h * w).map(|_| r()).collect();
        let zero = vec![0.0; cout];
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; cout];
        let dx = upconv2_backward(&wt, &x, &g, &mut dw, &mut db, cin, cout, h, w);
        let base = dot(&upconv2(&wt, &zero, &x, cin, cout, h, w), &g);
        assert!((dot(&dx, &x) - base).abs() < 1e-12);
        assert!((dot(&dw, &wt) - base).abs() < 1e-12);
        let ones = vec![1.0; cout];
        let shifted = dot(&upconv2(&wt, &ones, &x, cin, cout, h, w), &g);
        assert!((shifted - base - db.iter().sum::<f64>()).abs() < 1e-12);
    }
}
