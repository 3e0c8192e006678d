//! Differentiable layers with explicit per-call caches.
//!
//! Every forward returns its output together with a [`Cache`]; the matching
//! backward consumes that cache, accumulates parameter gradients into a
//! [`Grads`] buffer and returns the gradient with respect to the input. Layers
//! never hold mutable state, so one network can be evaluated several times
//! within a step (the decoder runs on both `t` and `t̃`).

use super::ops::{col2im, gemm, im2col, pad, unpad_grad, PadMode};
use super::params::{Grads, Initializer, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub pad_mode: PadMode,
    w: ParamId,
    b: ParamId,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        pad_mode: PadMode,
    ) -> Self {
        let n = cout * cin * k * k;
        let w = store.push(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            init.normal(n),
        );
        let b = store.push(format!("{name}.bias"), vec![cout], vec![0.0; cout]);
        Conv2d {
            cin,
            cout,
            k,
            stride,
            pad,
            pad_mode,
            w,
            b,
        }
    }

    /// Same as [`Conv2d::new`] but with fan-in scaled weights.
    #[allow(clippy::too_many_arguments)]
    pub fn new_scaled(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let n = cout * cin * k * k;
        let w = store.push(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            init.scaled_normal(n, cin * k * k),
        );
        let b = store.push(format!("{name}.bias"), vec![cout], vec![0.0; cout]);
        Conv2d {
            cin,
            cout,
            k,
            stride,
            pad,
            pad_mode: PadMode::Zero,
            w,
            b,
        }
    }

    pub fn out_size(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.pad;
        (padded >= self.k).then(|| (padded - self.k) / self.stride + 1)
    }

    fn forward(&self, p: &ParamStore, x: &Tensor) -> (Tensor, Cache) {
        assert_eq!(x.channels(), self.cin, "conv input channels");
        let xp = pad(x, self.pad, self.pad_mode);
        let oh = (xp.height() - self.k) / self.stride + 1;
        let ow = (xp.width() - self.k) / self.stride + 1;
        let cols = im2col(&xp, self.k, self.stride, oh, ow);
        let npix = oh * ow;
        let kk = self.cin * self.k * self.k;
        let bias = p.get(self.b);
        let mut out = vec![0.0; self.cout * npix];
        for (o, row) in out.chunks_mut(npix).enumerate() {
            row.fill(bias[o]);
        }
        gemm(
            self.cout,
            kk,
            npix,
            1.0,
            p.get(self.w),
            false,
            &cols,
            false,
            1.0,
            &mut out,
        );
        (Tensor::from_vec(self.cout, oh, ow, out), Cache::Input(xp))
    }

    fn backward(&self, p: &ParamStore, xp: &Tensor, g: &Tensor, grads: &mut Grads) -> Tensor {
        let (_, oh, ow) = g.shape();
        let npix = oh * ow;
        let kk = self.cin * self.k * self.k;
        let cols = im2col(xp, self.k, self.stride, oh, ow);
        gemm(
            self.cout,
            npix,
            kk,
            1.0,
            g.data(),
            false,
            &cols,
            true,
            1.0,
            grads.get_mut(self.w),
        );
        for (o, gb) in grads.get_mut(self.b).iter_mut().enumerate() {
            *gb += g.channel(o).iter().sum::<f64>();
        }
        let mut dcols = vec![0.0; kk * npix];
        gemm(
            kk,
            self.cout,
            npix,
            1.0,
            p.get(self.w),
            true,
            g.data(),
            false,
            0.0,
            &mut dcols,
        );
        let dxp = col2im(
            &dcols,
            self.cin,
            xp.height(),
            xp.width(),
            self.k,
            self.stride,
            oh,
            ow,
        );
        unpad_grad(&dxp, self.pad, self.pad_mode)
    }
}

/// Fractionally strided convolution; output side is `(n-1)*stride - 2*pad + k + out_pad`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
    w: ParamId,
    b: ParamId,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Self {
        assert!(out_pad <= pad, "output padding beyond the canvas");
        let n = cin * cout * k * k;
        let w = store.push(
            format!("{name}.weight"),
            vec![cin, cout, k, k],
            init.normal(n),
        );
        let b = store.push(format!("{name}.bias"), vec![cout], vec![0.0; cout]);
        ConvTranspose2d {
            cin,
            cout,
            k,
            stride,
            pad,
            out_pad,
            w,
            b,
        }
    }

    pub fn out_size(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.k + self.out_pad - 2 * self.pad
    }

    fn canvas(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.k
    }

    fn forward(&self, p: &ParamStore, x: &Tensor) -> (Tensor, Cache) {
        assert_eq!(x.channels(), self.cin, "conv-transpose input channels");
        let (_, h, w) = x.shape();
        let npix = h * w;
        let rows = self.cout * self.k * self.k;
        let mut cols = vec![0.0; rows * npix];
        gemm(
            rows,
            self.cin,
            npix,
            1.0,
            p.get(self.w),
            true,
            x.data(),
            false,
            0.0,
            &mut cols,
        );
        let (ch, cw) = (self.canvas(h), self.canvas(w));
        let canvas = col2im(&cols, self.cout, ch, cw, self.k, self.stride, h, w);
        let (oh, ow) = (self.out_size(h), self.out_size(w));
        let bias = p.get(self.b);
        let mut out = Tensor::zeros(self.cout, oh, ow);
        for (c, &b) in bias.iter().enumerate().take(self.cout) {
            let src = canvas.channel(c);
            let dst = out.channel_mut(c);
            for i in 0..oh {
                for j in 0..ow {
                    dst[i * ow + j] = src[(i + self.pad) * cw + j + self.pad] + b;
                }
            }
        }
        (out, Cache::Input(x.clone()))
    }

    fn backward(&self, p: &ParamStore, x: &Tensor, g: &Tensor, grads: &mut Grads) -> Tensor {
        let (_, h, w) = x.shape();
        let (_, oh, ow) = g.shape();
        let (ch, cw) = (self.canvas(h), self.canvas(w));
        let mut gc = Tensor::zeros(self.cout, ch, cw);
        for c in 0..self.cout {
            let src = g.channel(c);
            grads.get_mut(self.b)[c] += src.iter().sum::<f64>();
            let dst = gc.channel_mut(c);
            for i in 0..oh {
                for j in 0..ow {
                    dst[(i + self.pad) * cw + j + self.pad] = src[i * ow + j];
                }
            }
        }
        let npix = h * w;
        let rows = self.cout * self.k * self.k;
        let dcols = im2col(&gc, self.k, self.stride, h, w);
        gemm(
            self.cin,
            npix,
            rows,
            1.0,
            x.data(),
            false,
            &dcols,
            true,
            1.0,
            grads.get_mut(self.w),
        );
        let mut dx = vec![0.0; self.cin * npix];
        gemm(
            self.cin,
            rows,
            npix,
            1.0,
            p.get(self.w),
            false,
            &dcols,
            false,
            0.0,
            &mut dx,
        );
        Tensor::from_vec(self.cin, h, w, dx)
    }
}

/// Per-sample, per-channel normalization without affine parameters.
#[derive(Clone, Debug)]
pub struct InstanceNorm {
    pub channels: usize,
}

/// Normalizes each channel of `x`; returns `(xhat, inv_std per channel)`.
pub fn instance_normalize(x: &Tensor) -> (Tensor, Vec<f64>) {
    let mut out = x.clone();
    let n = x.plane() as f64;
    let mut inv = Vec::with_capacity(x.channels());
    for c in 0..x.channels() {
        let v = out.channel_mut(c);
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        for a in v.iter_mut() {
            *a = (*a - mean) * is;
        }
        inv.push(is);
    }
    (out, inv)
}

impl InstanceNorm {
    fn backward(xhat: &Tensor, inv: &[f64], g: &Tensor) -> Tensor {
        let n = g.plane() as f64;
        let mut dx = g.clone();
        for (c, is) in inv.iter().enumerate() {
            let xh = xhat.channel(c);
            let d = dx.channel_mut(c);
            let mean_g = d.iter().sum::<f64>() / n;
            let mean_gx = d.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
            for (di, xi) in d.iter_mut().zip(xh) {
                *di = is * (*di - mean_g - xi * mean_gx);
            }
        }
        dx
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    /// `(tanh(x) + 1) / 2`, mapping onto [0, 1].
    TanhRescaled,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    s * v
                }
            }
            Activation::Sigmoid => sigmoid(v),
            Activation::TanhRescaled => 0.5 * (v.tanh() + 1.0),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::TanhRescaled => {
                let t = 2.0 * y - 1.0;
                0.5 * (1.0 - t * t)
            }
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Fully connected head on the flattened input, output shaped `(out, 1, 1)`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub nin: usize,
    pub nout: usize,
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        nin: usize,
        nout: usize,
    ) -> Self {
        let w = store.push(
            format!("{name}.weight"),
            vec![nout, nin],
            init.scaled_normal(nin * nout, nin),
        );
        let b = store.push(format!("{name}.bias"), vec![nout], vec![0.0; nout]);
        Dense { nin, nout, w, b }
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv(Conv2d),
    ConvT(ConvTranspose2d),
    Norm(InstanceNorm),
    Act(Activation),
    AvgPool2,
    GlobalAvgPool,
    Dense(Dense),
    /// `x + body(x)`.
    Residual(Vec<Layer>),
    /// `main(x) + skip(x)`.
    Branch {
        main: Vec<Layer>,
        skip: Vec<Layer>,
    },
}

#[derive(Clone, Debug)]
pub enum Cache {
    Input(Tensor),
    Norm { xhat: Tensor, inv: Vec<f64> },
    Act { x: Tensor, y: Tensor },
    Shape(usize, usize, usize),
    Seq(Vec<Cache>),
    Branch { main: Vec<Cache>, skip: Vec<Cache> },
}

impl Layer {
    pub fn forward(&self, p: &ParamStore, x: &Tensor) -> (Tensor, Cache) {
        match self {
            Layer::Conv(c) => c.forward(p, x),
            Layer::ConvT(c) => c.forward(p, x),
            Layer::Norm(n) => {
                debug_assert_eq!(x.channels(), n.channels);
                let (xhat, inv) = instance_normalize(x);
                (xhat.clone(), Cache::Norm { xhat, inv })
            }
            Layer::Act(a) => {
                let y = x.map(|v| a.apply(v));
                (y.clone(), Cache::Act { x: x.clone(), y })
            }
            Layer::AvgPool2 => {
                let (c, h, w) = x.shape();
                let (oh, ow) = (h / 2, w / 2);
                let mut out = Tensor::zeros(c, oh, ow);
                for ch in 0..c {
                    for i in 0..oh {
                        for j in 0..ow {
                            let s = x.at(ch, 2 * i, 2 * j)
                                + x.at(ch, 2 * i + 1, 2 * j)
                                + x.at(ch, 2 * i, 2 * j + 1)
                                + x.at(ch, 2 * i + 1, 2 * j + 1);
                            *out.at_mut(ch, i, j) = 0.25 * s;
                        }
                    }
                }
                (out, Cache::Shape(c, h, w))
            }
            Layer::GlobalAvgPool => {
                let (c, h, w) = x.shape();
                let data = (0..c)
                    .map(|ch| x.channel(ch).iter().sum::<f64>() / (h * w) as f64)
                    .collect();
                (Tensor::from_vec(c, 1, 1, data), Cache::Shape(c, h, w))
            }
            Layer::Dense(d) => {
                assert_eq!(x.len(), d.nin, "dense input size");
                let mut out = p.get(d.b).to_vec();
                gemm(
                    d.nout,
                    d.nin,
                    1,
                    1.0,
                    p.get(d.w),
                    false,
                    x.data(),
                    false,
                    1.0,
                    &mut out,
                );
                (Tensor::from_vec(d.nout, 1, 1, out), Cache::Input(x.clone()))
            }
            Layer::Residual(body) => {
                let (mut y, caches) = forward_seq(body, p, x);
                y.add_assign(x);
                (y, Cache::Seq(caches))
            }
            Layer::Branch { main, skip } => {
                let (mut y, mc) = forward_seq(main, p, x);
                let (s, sc) = forward_seq(skip, p, x);
                y.add_assign(&s);
                (y, Cache::Branch { main: mc, skip: sc })
            }
        }
    }

    pub fn backward(&self, p: &ParamStore, cache: &Cache, g: &Tensor, grads: &mut Grads) -> Tensor {
        match (self, cache) {
            (Layer::Conv(c), Cache::Input(xp)) => c.backward(p, xp, g, grads),
            (Layer::ConvT(c), Cache::Input(x)) => c.backward(p, x, g, grads),
            (Layer::Norm(_), Cache::Norm { xhat, inv }) => InstanceNorm::backward(xhat, inv, g),
            (Layer::Act(a), Cache::Act { x, y }) => {
                let mut dx = g.clone();
                for ((d, xi), yi) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                    *d *= a.deriv(*xi, *yi);
                }
                dx
            }
            (Layer::AvgPool2, Cache::Shape(c, h, w)) => {
                let mut dx = Tensor::zeros(*c, *h, *w);
                for ch in 0..*c {
                    for i in 0..h / 2 {
                        for j in 0..w / 2 {
                            let v = 0.25 * g.at(ch, i, j);
                            *dx.at_mut(ch, 2 * i, 2 * j) += v;
                            *dx.at_mut(ch, 2 * i + 1, 2 * j) += v;
                            *dx.at_mut(ch, 2 * i, 2 * j + 1) += v;
                            *dx.at_mut(ch, 2 * i + 1, 2 * j + 1) += v;
                        }
                    }
                }
                dx
            }
            (Layer::GlobalAvgPool, Cache::Shape(c, h, w)) => {
                let mut dx = Tensor::zeros(*c, *h, *w);
                let n = (h * w) as f64;
                for ch in 0..*c {
                    let v = g.data()[ch] / n;
                    dx.channel_mut(ch).fill(v);
                }
                dx
            }
            (Layer::Dense(d), Cache::Input(x)) => {
                gemm(
                    d.nout,
                    1,
                    d.nin,
                    1.0,
                    g.data(),
                    false,
                    x.data(),
                    false,
                    1.0,
                    grads.get_mut(d.w),
                );
                for (gb, gv) in grads.get_mut(d.b).iter_mut().zip(g.data()) {
                    *gb += gv;
                }
                let mut dx = vec![0.0; d.nin];
                gemm(
                    d.nin,
                    d.nout,
                    1,
                    1.0,
                    p.get(d.w),
                    true,
                    g.data(),
                    false,
                    0.0,
                    &mut dx,
                );
                let (c, h, w) = x.shape();
                Tensor::from_vec(c, h, w, dx)
            }
            (Layer::Residual(body), Cache::Seq(caches)) => {
                let mut dx = backward_seq(body, p, caches, g, grads);
                dx.add_assign(g);
                dx
            }
            (Layer::Branch { main, skip }, Cache::Branch { main: mc, skip: sc }) => {
                let mut dx = backward_seq(main, p, mc, g, grads);
                let ds = backward_seq(skip, p, sc, g, grads);
                dx.add_assign(&ds);
                dx
            }
            _ => panic!("cache does not belong to this layer"),
        }
    }
}

pub fn forward_seq(layers: &[Layer], p: &ParamStore, x: &Tensor) -> (Tensor, Vec<Cache>) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for l in layers {
        let (y, c) = l.forward(p, &cur);
        caches.push(c);
        cur = y;
    }
    (cur, caches)
}

pub fn backward_seq(
    layers: &[Layer],
    p: &ParamStore,
    caches: &[Cache],
    g: &Tensor,
    grads: &mut Grads,
) -> Tensor {
    let mut cur = g.clone();
    for (l, c) in layers.iter().zip(caches).rev() {
        cur = l.backward(p, c, &cur, grads);
    }
    cur
}
