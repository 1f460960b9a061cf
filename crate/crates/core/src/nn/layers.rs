//! Forward and backward passes for every layer the column template needs.
//!
//! Layers own their parameters, parameter gradients, and the forward
//! intermediates their backward pass requires. Backward consumes the gradient
//! of the loss with respect to the layer output and returns the gradient with
//! respect to the layer input, accumulating parameter gradients internally.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::shapes::{conv_out_side, pool_out_side};
use crate::nn::tensor::Tensor;

/// Train mode uses batch statistics and dropout; eval mode neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn normal_fill(tensor: &mut Tensor, std: f64, rng: &mut ChaCha8Rng) {
    let dist = Normal::new(0.0, std).expect("valid stddev");
    for v in tensor.data_mut() {
        *v = dist.sample(rng);
    }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Square 2-D convolution over NCHW input with same-style padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// [out_channels, in_channels, kernel, kernel]
    pub weights: Tensor,
    /// [out_channels]
    pub bias: Tensor,
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl Conv2d {
    /// Weights from N(0, sqrt(2 / fan_in)), biases zero.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Conv2d {
        let mut weights = Tensor::zeros(&[out_channels, in_channels, kernel, kernel]);
        let fan_in = (in_channels * kernel * kernel) as f64;
        normal_fill(&mut weights, (2.0 / fan_in).sqrt(), rng);
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weights,
            bias: Tensor::zeros(&[out_channels]),
            grad_weights: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            grad_bias: Tensor::zeros(&[out_channels]),
            cached_input: None,
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let shape = input.shape();
        if shape.len() != 4 {
            return Err(Error::usage(format!("conv2d expects NCHW input, got {shape:?}")));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if c != self.in_channels {
            return Err(Error::usage(format!(
                "conv2d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        if h != w {
            return Err(Error::usage(format!("conv2d expects square input, got {h}x{w}")));
        }
        Ok((n, c, h, w))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n, cin, h, _w) = self.check_input(input)?;
        let out_side = conv_out_side(h, self.kernel, self.stride, self.pad);
        if out_side < 1 {
            return Err(Error::infeasible(format!(
                "conv kernel {} maps side {h} below 1 pixel",
                self.kernel
            )));
        }
        let cout = self.out_channels;
        let k = self.kernel;
        let mut out = Tensor::zeros(&[n, cout, out_side, out_side]);
        let x = input.data();
        let wts = self.weights.data();
        let bias = self.bias.data();
        let o = out.data_mut();
        let (ih, iw) = (h, h);
        for bi in 0..n {
            let xb = &x[bi * cin * ih * iw..(bi + 1) * cin * ih * iw];
            let ob = &mut o[bi * cout * out_side * out_side..(bi + 1) * cout * out_side * out_side];
            for oc in 0..cout {
                let w_oc = &wts[oc * cin * k * k..(oc + 1) * cin * k * k];
                let ob_oc = &mut ob[oc * out_side * out_side..(oc + 1) * out_side * out_side];
                for oy in 0..out_side {
                    let iy0 = (oy * self.stride) as isize - self.pad as isize;
                    for ox in 0..out_side {
                        let ix0 = (ox * self.stride) as isize - self.pad as isize;
                        let mut acc = bias[oc];
                        for ic in 0..cin {
                            let xp = &xb[ic * ih * iw..(ic + 1) * ih * iw];
                            let wp = &w_oc[ic * k * k..(ic + 1) * k * k];
                            for ky in 0..k {
                                let iy = iy0 + ky as isize;
                                if iy < 0 || iy >= ih as isize {
                                    continue;
                                }
                                let row = &xp[iy as usize * iw..(iy as usize + 1) * iw];
                                let wrow = &wp[ky * k..(ky + 1) * k];
                                for (kx, &wv) in wrow.iter().enumerate() {
                                    let ix = ix0 + kx as isize;
                                    if ix >= 0 && ix < iw as isize {
                                        acc += wv * row[ix as usize];
                                    }
                                }
                            }
                        }
                        ob_oc[oy * out_side + ox] = acc;
                    }
                }
            }
        }
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    /// Returns grad wrt input; accumulates `grad_weights`/`grad_bias` (overwritten each call).
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::state("conv2d backward before forward"))?;
        let (n, cin, h, _) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
        let out_side = conv_out_side(h, self.kernel, self.stride, self.pad);
        let expected = [n, self.out_channels, out_side, out_side];
        if grad_out.shape() != expected {
            return Err(Error::usage(format!(
                "conv2d backward expects grad shape {expected:?}, got {:?}",
                grad_out.shape()
            )));
        }
        let k = self.kernel;
        let cout = self.out_channels;
        let (ih, iw) = (h, h);
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
        let mut grad_in = Tensor::zeros(input.shape());
        let x = input.data();
        let go = grad_out.data();
        let wts = self.weights.data();
        {
            let gw = self.grad_weights.data_mut();
            let gb = self.grad_bias.data_mut();
            let gi = grad_in.data_mut();
            for bi in 0..n {
                let xb = &x[bi * cin * ih * iw..(bi + 1) * cin * ih * iw];
                let gb_in = &mut gi[bi * cin * ih * iw..(bi + 1) * cin * ih * iw];
                let gob = &go[bi * cout * out_side * out_side..(bi + 1) * cout * out_side * out_side];
                for oc in 0..cout {
                    let go_oc = &gob[oc * out_side * out_side..(oc + 1) * out_side * out_side];
                    let w_oc = &wts[oc * cin * k * k..(oc + 1) * cin * k * k];
                    let gw_oc = &mut gw[oc * cin * k * k..(oc + 1) * cin * k * k];
                    for oy in 0..out_side {
                        let iy0 = (oy * self.stride) as isize - self.pad as isize;
                        for ox in 0..out_side {
                            let g = go_oc[oy * out_side + ox];
                            if g == 0.0 {
                                continue;
                            }
                            gb[oc] += g;
                            let ix0 = (ox * self.stride) as isize - self.pad as isize;
                            for ic in 0..cin {
                                let xp = &xb[ic * ih * iw..(ic + 1) * ih * iw];
                                let gp = &mut gb_in[ic * ih * iw..(ic + 1) * ih * iw];
                                let wp = &w_oc[ic * k * k..(ic + 1) * k * k];
                                let gwp = &mut gw_oc[ic * k * k..(ic + 1) * k * k];
                                for ky in 0..k {
                                    let iy = iy0 + ky as isize;
                                    if iy < 0 || iy >= ih as isize {
                                        continue;
                                    }
                                    let row_off = iy as usize * iw;
                                    for kx in 0..k {
                                        let ix = ix0 + kx as isize;
                                        if ix >= 0 && ix < iw as isize {
                                            let idx = row_off + ix as usize;
                                            gwp[ky * k + kx] += g * xp[idx];
                                            gp[idx] += g * wp[ky * k + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

/// 2x2 max-pool with stride 2; the only pooling the template uses.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    /// Flat argmax index into the input buffer for every output element.
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn new() -> MaxPool2 {
        MaxPool2::default()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let shape = input.shape();
        if shape.len() != 4 {
            return Err(Error::usage(format!("maxpool expects NCHW input, got {shape:?}")));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if h < 2 || w < 2 {
            return Err(Error::usage(format!("maxpool needs side >= 2, got {h}x{w}")));
        }
        let (oh, ow) = (pool_out_side(h), pool_out_side(w));
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        self.argmax.clear();
        self.argmax.resize(n * c * oh * ow, 0);
        self.input_shape = shape.to_vec();
        let x = input.data();
        let o = out.data_mut();
        for bi in 0..n {
            for ci in 0..c {
                let plane = (bi * c + ci) * h * w;
                let oplane = (bi * c + ci) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let base = plane + (oy * 2) * w + ox * 2;
                        // Ties pick the first element in row-major scan order.
                        let candidates = [base, base + 1, base + w, base + w + 1];
                        let mut best = candidates[0];
                        for &idx in &candidates[1..] {
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                        o[oplane + oy * ow + ox] = x[best];
                        self.argmax[oplane + oy * ow + ox] = best;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Routes each output gradient to the argmax position of its window.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if self.input_shape.is_empty() {
            return Err(Error::state("maxpool backward before forward"));
        }
        if grad_out.len() != self.argmax.len() {
            return Err(Error::usage("maxpool backward grad shape mismatch"));
        }
        let mut grad_in = Tensor::zeros(&self.input_shape);
        let gi = grad_in.data_mut();
        for (slot, &src) in self.argmax.iter().enumerate() {
            gi[src] += grad_out.data()[slot];
        }
        Ok(grad_in)
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-channel batch normalization over NCHW, eps 1e-5, running-stat momentum 0.1.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    /// [channels] learnable scale.
    pub scale: Tensor,
    /// [channels] learnable shift.
    pub shift: Tensor,
    pub grad_scale: Tensor,
    pub grad_shift: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    cached_normalized: Option<Tensor>,
    cached_inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> BatchNorm2d {
        BatchNorm2d {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            scale: Tensor::filled(&[channels], 1.0),
            shift: Tensor::zeros(&[channels]),
            grad_scale: Tensor::zeros(&[channels]),
            grad_shift: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            cached_normalized: None,
            cached_inv_std: Vec::new(),
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let shape = input.shape();
        if shape.len() != 4 {
            return Err(Error::usage(format!("batchnorm expects NCHW input, got {shape:?}")));
        }
        if shape[1] != self.channels {
            return Err(Error::usage(format!(
                "batchnorm expects {} channels, got {}",
                self.channels, shape[1]
            )));
        }
        Ok((shape[0], shape[1], shape[2], shape[3]))
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, h, w) = self.check_input(input)?;
        if mode == Mode::Train && n < 2 {
            return Err(Error::usage("batchnorm train mode needs batch size >= 2"));
        }
        let plane = h * w;
        let m = (n * plane) as f64;
        let mut out = Tensor::zeros(input.shape());
        let x = input.data();
        match mode {
            Mode::Train => {
                let mut normalized = Tensor::zeros(input.shape());
                self.cached_inv_std = vec![0.0; c];
                for ci in 0..c {
                    let mut sum = 0.0;
                    let mut sumsq = 0.0;
                    for bi in 0..n {
                        let p = &x[(bi * c + ci) * plane..(bi * c + ci + 1) * plane];
                        for &v in p {
                            sum += v;
                            sumsq += v * v;
                        }
                    }
                    let mean = sum / m;
                    let var = (sumsq / m - mean * mean).max(0.0);
                    let inv_std = 1.0 / (var + self.eps).sqrt();
                    self.cached_inv_std[ci] = inv_std;
                    self.running_mean.data_mut()[ci] =
                        (1.0 - self.momentum) * self.running_mean.data()[ci] + self.momentum * mean;
                    self.running_var.data_mut()[ci] =
                        (1.0 - self.momentum) * self.running_var.data()[ci] + self.momentum * var;
                    let g = self.scale.data()[ci];
                    let b = self.shift.data()[ci];
                    for bi in 0..n {
                        let off = (bi * c + ci) * plane;
                        for i in 0..plane {
                            let xn = (x[off + i] - mean) * inv_std;
                            normalized.data_mut()[off + i] = xn;
                            out.data_mut()[off + i] = g * xn + b;
                        }
                    }
                }
                self.cached_normalized = Some(normalized);
            }
            Mode::Eval => {
                for ci in 0..c {
                    let mean = self.running_mean.data()[ci];
                    let inv_std = 1.0 / (self.running_var.data()[ci] + self.eps).sqrt();
                    let g = self.scale.data()[ci];
                    let b = self.shift.data()[ci];
                    for bi in 0..n {
                        let off = (bi * c + ci) * plane;
                        for i in 0..plane {
                            out.data_mut()[off + i] = g * (x[off + i] - mean) * inv_std + b;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Train-mode backward through the batch statistics.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let normalized = self
            .cached_normalized
            .take()
            .ok_or_else(|| Error::state("batchnorm backward before train-mode forward"))?;
        if grad_out.shape() != normalized.shape() {
            return Err(Error::usage("batchnorm backward grad shape mismatch"));
        }
        let (n, c, h, w) = (
            normalized.dim(0),
            normalized.dim(1),
            normalized.dim(2),
            normalized.dim(3),
        );
        let plane = h * w;
        let m = (n * plane) as f64;
        let mut grad_in = Tensor::zeros(normalized.shape());
        let go = grad_out.data();
        let xn = normalized.data();
        for ci in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gxn = 0.0;
            for bi in 0..n {
                let off = (bi * c + ci) * plane;
                for i in 0..plane {
                    sum_g += go[off + i];
                    sum_gxn += go[off + i] * xn[off + i];
                }
            }
            self.grad_shift.data_mut()[ci] = sum_g;
            self.grad_scale.data_mut()[ci] = sum_gxn;
            let scale = self.scale.data()[ci];
            let inv_std = self.cached_inv_std[ci];
            let mean_g = sum_g / m;
            let mean_gxn = sum_gxn / m;
            for bi in 0..n {
                let off = (bi * c + ci) * plane;
                for i in 0..plane {
                    grad_in.data_mut()[off + i] =
                        scale * inv_std * (go[off + i] - mean_g - xn[off + i] * mean_gxn);
                }
            }
        }
        Ok(grad_in)
    }
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

/// Elementwise max(0, x); backward masks positions where the input was <= 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn new() -> Relu {
        Relu::default()
    }

    pub fn forward(&mut self, input: &Tensor) -> Tensor {
        let mut out = input.clone();
        self.mask.clear();
        self.mask.reserve(input.len());
        for v in out.data_mut() {
            let pass = *v > 0.0;
            self.mask.push(pass);
            if !pass {
                *v = 0.0;
            }
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != self.mask.len() {
            return Err(Error::usage("relu backward grad shape mismatch"));
        }
        let mut grad_in = grad_out.clone();
        for (v, &pass) in grad_in.data_mut().iter_mut().zip(&self.mask) {
            if !pass {
                *v = 0.0;
            }
        }
        Ok(grad_in)
    }
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

/// Dense layer y = Wx + b over row vectors.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_width: usize,
    pub out_width: usize,
    /// [out_width, in_width]
    pub weights: Tensor,
    /// [out_width]
    pub bias: Tensor,
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl Dense {
    pub fn new(in_width: usize, out_width: usize, rng: &mut ChaCha8Rng) -> Dense {
        let mut weights = Tensor::zeros(&[out_width, in_width]);
        normal_fill(&mut weights, (2.0 / in_width as f64).sqrt(), rng);
        Dense {
            in_width,
            out_width,
            weights,
            bias: Tensor::zeros(&[out_width]),
            grad_weights: Tensor::zeros(&[out_width, in_width]),
            grad_bias: Tensor::zeros(&[out_width]),
            cached_input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let shape = input.shape();
        if shape.len() != 2 || shape[1] != self.in_width {
            return Err(Error::usage(format!(
                "dense expects [N, {}], got {shape:?}",
                self.in_width
            )));
        }
        let n = shape[0];
        let mut out = Tensor::zeros(&[n, self.out_width]);
        let x = input.data();
        let w = self.weights.data();
        let b = self.bias.data();
        let o = out.data_mut();
        for bi in 0..n {
            let xr = &x[bi * self.in_width..(bi + 1) * self.in_width];
            let or = &mut o[bi * self.out_width..(bi + 1) * self.out_width];
            for (oi, ov) in or.iter_mut().enumerate() {
                let wr = &w[oi * self.in_width..(oi + 1) * self.in_width];
                let mut acc = b[oi];
                for (wv, xv) in wr.iter().zip(xr) {
                    acc += wv * xv;
                }
                *ov = acc;
            }
        }
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::state("dense backward before forward"))?;
        let n = input.dim(0);
        if grad_out.shape() != [n, self.out_width] {
            return Err(Error::usage("dense backward grad shape mismatch"));
        }
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
        let mut grad_in = Tensor::zeros(input.shape());
        let x = input.data();
        let go = grad_out.data();
        let w = self.weights.data();
        let gw = self.grad_weights.data_mut();
        let gb = self.grad_bias.data_mut();
        let gi = grad_in.data_mut();
        for bi in 0..n {
            let xr = &x[bi * self.in_width..(bi + 1) * self.in_width];
            let gr = &go[bi * self.out_width..(bi + 1) * self.out_width];
            let gir = &mut gi[bi * self.in_width..(bi + 1) * self.in_width];
            for (oi, &g) in gr.iter().enumerate() {
                gb[oi] += g;
                let wr = &w[oi * self.in_width..(oi + 1) * self.in_width];
                let gwr = &mut gw[oi * self.in_width..(oi + 1) * self.in_width];
                for i in 0..self.in_width {
                    gwr[i] += g * xr[i];
                    gir[i] += g * wr[i];
                }
            }
        }
        Ok(grad_in)
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout: train mode zeros with probability `rate` and rescales
/// survivors by 1/(1-rate); eval mode is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    mask: Vec<f64>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Dropout> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} must be in [0, 1)")));
        }
        Ok(Dropout { rate, mask: Vec::new() })
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask.clear();
            return input.clone();
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mut out = input.clone();
        self.mask.clear();
        self.mask.reserve(input.len());
        for v in out.data_mut() {
            let factor = if rng.random::<f64>() < self.rate { 0.0 } else { scale };
            self.mask.push(factor);
            *v *= factor;
        }
        out
    }

    /// Replays the cached mask on an arbitrary tensor; used by backward and by
    /// the gradient-check oracle, which must differentiate the realized mask
    /// rather than the stochastic layer.
    pub fn apply_mask(&self, input: &Tensor) -> Result<Tensor> {
        if self.mask.is_empty() {
            // Identity path (eval or rate 0).
            return Ok(input.clone());
        }
        if input.len() != self.mask.len() {
            return Err(Error::usage("dropout mask shape mismatch"));
        }
        let mut out = input.clone();
        for (v, &factor) in out.data_mut().iter_mut().zip(&self.mask) {
            *v *= factor;
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        self.apply_mask(grad_out)
    }
}
