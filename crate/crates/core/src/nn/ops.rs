//! Low-level kernels: padding, im2col/col2im and a safe GEMM wrapper.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zero,
    Reflect,
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r), "reflection out of range");
    r as usize
}

/// Pads every channel by `p` on all four sides.
pub fn pad(x: &Tensor, p: usize, mode: PadMode) -> Tensor {
    if p == 0 {
        return x.clone();
    }
    let (c, h, w) = x.shape();
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = Tensor::zeros(c, hp, wp);
    for ch in 0..c {
        let src = x.channel(ch);
        let dst = out.channel_mut(ch);
        match mode {
            PadMode::Zero => {
                for i in 0..h {
                    dst[(i + p) * wp + p..(i + p) * wp + p + w]
                        .copy_from_slice(&src[i * w..(i + 1) * w]);
                }
            }
            PadMode::Reflect => {
                for i in 0..hp {
                    let si = reflect(i as isize - p as isize, h);
                    for j in 0..wp {
                        let sj = reflect(j as isize - p as isize, w);
                        dst[i * wp + j] = src[si * w + sj];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: folds a gradient on the padded grid back onto the original grid.
pub fn unpad_grad(g: &Tensor, p: usize, mode: PadMode) -> Tensor {
    if p == 0 {
        return g.clone();
    }
    let (c, hp, wp) = g.shape();
    let (h, w) = (hp - 2 * p, wp - 2 * p);
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let src = g.channel(ch);
        let dst = out.channel_mut(ch);
        match mode {
            PadMode::Zero => {
                for i in 0..h {
                    dst[i * w..(i + 1) * w]
                        .copy_from_slice(&src[(i + p) * wp + p..(i + p) * wp + p + w]);
                }
            }
            PadMode::Reflect => {
                for i in 0..hp {
                    let si = reflect(i as isize - p as isize, h);
                    for j in 0..wp {
                        let sj = reflect(j as isize - p as isize, w);
                        dst[si * w + sj] += src[i * wp + j];
                    }
                }
            }
        }
    }
    out
}

/// Unfolds `x` into a `(c*k*k) x (oh*ow)` row-major matrix for a stride-`s` correlation.
pub fn im2col(x: &Tensor, k: usize, s: usize, oh: usize, ow: usize) -> Vec<f64> {
    let (c, h, w) = x.shape();
    debug_assert!((oh - 1) * s + k <= h && (ow - 1) * s + k <= w);
    let ncol = oh * ow;
    let mut cols = vec![0.0; c * k * k * ncol];
    for ch in 0..c {
        let src = x.channel(ch);
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * ncol..(row + 1) * ncol];
                for oi in 0..oh {
                    let base = (oi * s + ki) * w + kj;
                    let drow = &mut dst[oi * ow..(oi + 1) * ow];
                    if s == 1 {
                        drow.copy_from_slice(&src[base..base + ow]);
                    } else {
                        for (oj, d) in drow.iter_mut().enumerate() {
                            *d = src[base + oj * s];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns into a `(c, h, w)` tensor.
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    oh: usize,
    ow: usize,
) -> Tensor {
    let ncol = oh * ow;
    debug_assert_eq!(cols.len(), c * k * k * ncol);
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let dst = out.channel_mut(ch);
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * ncol..(row + 1) * ncol];
                for oi in 0..oh {
                    let base = (oi * s + ki) * w + kj;
                    let srow = &src[oi * ow..(oi + 1) * ow];
                    if s == 1 {
                        for (d, v) in dst[base..base + ow].iter_mut().zip(srow) {
                            *d += v;
                        }
                    } else {
                        for (oj, v) in srow.iter().enumerate() {
                            dst[base + oj * s] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row-major `C = alpha * op(A) * op(B) + beta * C` with `op(A)` of size m x k and `op(B)` of size k x n.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm lhs size");
    assert_eq!(b.len(), k * n, "gemm rhs size");
    assert_eq!(c.len(), m * n, "gemm out size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: slice lengths were checked against the (m, k, n) extents and strides above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
