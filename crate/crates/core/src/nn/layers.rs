use rand::Rng;

use super::{NnError, Real, Tensor};
use super::real::{matmul, matmul_nt, matmul_tn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output size `ceil(in / stride)`, zero padding split evenly with the
    /// extra row/column at the bottom/right.
    Same,
    Valid,
}

/// Spatial bookkeeping for a 2-D convolution over an HWC image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        in_h: usize,
        in_w: usize,
        in_c: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self, NnError> {
        if kernel == 0 || stride == 0 || in_h == 0 || in_w == 0 || in_c == 0 {
            return Err(NnError::Architecture(
                "convolution needs positive kernel, stride and input size".into(),
            ));
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                let out_h = in_h.div_ceil(stride);
                let out_w = in_w.div_ceil(stride);
                let pad_h = ((out_h - 1) * stride + kernel).saturating_sub(in_h);
                let pad_w = ((out_w - 1) * stride + kernel).saturating_sub(in_w);
                (out_h, out_w, pad_h / 2, pad_w / 2)
            }
            Padding::Valid => {
                if in_h < kernel || in_w < kernel {
                    return Err(NnError::Architecture(format!(
                        "{in_h}x{in_w} input smaller than {kernel}x{kernel} kernel"
                    )));
                }
                ((in_h - kernel) / stride + 1, (in_w - kernel) / stride + 1, 0, 0)
            }
        };
        Ok(Self {
            in_h,
            in_w,
            in_c,
            kernel,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn input_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    /// Input pixel read by tap `(ky, kx)` of output position `(oy, ox)`, or
    /// `None` when the tap falls into padding.
    #[inline]
    pub fn input_at(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (iy < self.in_h && ix < self.in_w).then_some((iy, ix))
    }

    /// Unrolls one HWC image into a `positions × patch_len` matrix whose
    /// columns are ordered `(ky, kx, c)`.
    pub fn im2col<F: Real>(&self, input: &[F], cols: &mut [F]) {
        let k = self.kernel;
        let c = self.in_c;
        let patch = self.patch_len();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &mut cols[(oy * self.out_w + ox) * patch..][..patch];
                for ky in 0..k {
                    for kx in 0..k {
                        let dst = &mut row[(ky * k + kx) * c..][..c];
                        match self.input_at(oy, ox, ky, kx) {
                            Some((iy, ix)) => {
                                dst.copy_from_slice(&input[(iy * self.in_w + ix) * c..][..c])
                            }
                            None => dst.fill(F::zero()),
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters columns back onto the
    /// image, summing overlapping taps.
    pub fn col2im<F: Real>(&self, cols: &[F], out: &mut [F]) {
        let k = self.kernel;
        let c = self.in_c;
        let patch = self.patch_len();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &cols[(oy * self.out_w + ox) * patch..][..patch];
                for ky in 0..k {
                    for kx in 0..k {
                        if let Some((iy, ix)) = self.input_at(oy, ox, ky, kx) {
                            let src = &row[(ky * k + kx) * c..][..c];
                            let dst = &mut out[(iy * self.in_w + ix) * c..][..c];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution of one HWC image; weights are `(ky, kx, c_in) × c_out`.
pub fn conv2d_image<F: Real>(
    geometry: &ConvGeometry,
    weights: &[F],
    bias: &[F],
    input: &[F],
    cols: &mut Vec<F>,
    out: &mut [F],
) {
    let out_c = bias.len();
    let patch = geometry.patch_len();
    let positions = geometry.positions();
    cols.resize(positions * patch, F::zero());
    geometry.im2col(input, cols);
    matmul(positions, patch, out_c, cols, weights, out, false);
    for row in out.chunks_exact_mut(out_c) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn he_uniform<F: Real, R: Rng + ?Sized>(values: &mut [F], fan_in: usize, rng: &mut R) {
    let limit = (6.0 / fan_in as f64).sqrt();
    for v in values {
        *v = F::from_f64_lossy(rng.gen_range(-limit..limit));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<F> {
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(ky, kx, c_in, c_out)` row-major.
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Real> Conv2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Self {
        Self {
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            weights: vec![F::zero(); kernel * kernel * in_channels * out_channels],
            bias: vec![F::zero(); out_channels],
        }
    }

    pub fn init_he<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = self.kernel * self.kernel * self.in_channels;
        he_uniform(&mut self.weights, fan_in, rng);
        self.bias.fill(F::zero());
    }

    pub fn geometry(&self, item_shape: &[usize]) -> Result<ConvGeometry, NnError> {
        match *item_shape {
            [h, w, c] if c == self.in_channels => {
                ConvGeometry::new(h, w, c, self.kernel, self.stride, self.padding)
            }
            _ => Err(NnError::Architecture(format!(
                "conv expects HxWx{} input, got {item_shape:?}",
                self.in_channels
            ))),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        let g = self.geometry(&x.shape()[1..])?;
        let n = x.batch();
        let out_len = g.positions() * self.out_channels;
        let mut out = Tensor::zeros(&[n, g.out_h, g.out_w, self.out_channels]);
        let mut cols = Vec::new();
        for (i, dst) in out.data_mut().chunks_exact_mut(out_len).enumerate() {
            conv2d_image(&g, &self.weights, &self.bias, x.item(i), &mut cols, dst);
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &self,
        x: &Tensor<F>,
        dy: &Tensor<F>,
        dw: &mut [F],
        db: &mut [F],
    ) -> Result<Tensor<F>, NnError> {
        let g = self.geometry(&x.shape()[1..])?;
        let patch = g.patch_len();
        let positions = g.positions();
        let out_c = self.out_channels;
        let mut dx = Tensor::zeros(x.shape());
        let in_len = g.input_len();
        let mut cols = vec![F::zero(); positions * patch];
        let mut dcols = vec![F::zero(); positions * patch];
        for i in 0..x.batch() {
            let dyi = dy.item(i);
            g.im2col(x.item(i), &mut cols);
            matmul_tn(patch, positions, out_c, &cols, dyi, dw, true);
            for row in dyi.chunks_exact(out_c) {
                for (b, &d) in db.iter_mut().zip(row) {
                    *b += d;
                }
            }
            matmul_nt(positions, out_c, patch, dyi, &self.weights, &mut dcols, false);
            g.col2im(&dcols, &mut dx.data_mut()[i * in_len..(i + 1) * in_len]);
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub channels: usize,
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    pub momentum: f32,
    pub eps: f32,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<F> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
}

impl<F: Real> BatchNorm<F> {
    pub const DEFAULT_MOMENTUM: f32 = 0.99;
    pub const DEFAULT_EPS: f32 = 1e-3;

    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![F::one(); channels],
            beta: vec![F::zero(); channels],
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    fn check(&self, x: &Tensor<F>) -> Result<(), NnError> {
        if x.shape().last() != Some(&self.channels) {
            return Err(NnError::Architecture(format!(
                "batch norm over {} channels got {:?}",
                self.channels,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward_infer(&self, x: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        self.check(x)?;
        let eps = F::from_f64_lossy(self.eps as f64);
        let (scale, shift): (Vec<F>, Vec<F>) = (0..self.channels)
            .map(|c| {
                let s = self.gamma[c] / (self.running_var[c] + eps).sqrt();
                (s, self.beta[c] - self.running_mean[c] * s)
            })
            .unzip();
        let mut y = x.clone();
        for row in y.data_mut().chunks_exact_mut(self.channels) {
            for c in 0..self.channels {
                row[c] = row[c] * scale[c] + shift[c];
            }
        }
        Ok(y)
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<F>,
        update_stats: bool,
    ) -> Result<(Tensor<F>, BatchNormCache<F>), NnError> {
        self.check(x)?;
        let ch = self.channels;
        let rows = x.len() / ch;
        let count = F::from_usize(rows).unwrap();
        let mut mean = vec![F::zero(); ch];
        for row in x.data().chunks_exact(ch) {
            for c in 0..ch {
                mean[c] += row[c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![F::zero(); ch];
        for row in x.data().chunks_exact(ch) {
            for c in 0..ch {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= count);

        let eps = F::from_f64_lossy(self.eps as f64);
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut xhat = x.data().to_vec();
        let mut y = x.clone();
        for (xr, yr) in xhat
            .chunks_exact_mut(ch)
            .zip(y.data_mut().chunks_exact_mut(ch))
        {
            for c in 0..ch {
                xr[c] = (xr[c] - mean[c]) * inv_std[c];
                yr[c] = self.gamma[c] * xr[c] + self.beta[c];
            }
        }
        if update_stats {
            let m = F::from_f64_lossy(self.momentum as f64);
            for c in 0..ch {
                self.running_mean[c] = m * self.running_mean[c] + (F::one() - m) * mean[c];
                self.running_var[c] = m * self.running_var[c] + (F::one() - m) * var[c];
            }
        }
        Ok((y, BatchNormCache { xhat, inv_std }))
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<F>,
        dy: &Tensor<F>,
        dgamma: &mut [F],
        dbeta: &mut [F],
    ) -> Tensor<F> {
        let ch = self.channels;
        let rows = dy.len() / ch;
        let count = F::from_usize(rows).unwrap();
        let mut sum_dxhat = vec![F::zero(); ch];
        let mut sum_dxhat_xhat = vec![F::zero(); ch];
        for (dr, xr) in dy.data().chunks_exact(ch).zip(cache.xhat.chunks_exact(ch)) {
            for c in 0..ch {
                dgamma[c] += dr[c] * xr[c];
                dbeta[c] += dr[c];
                let dxhat = dr[c] * self.gamma[c];
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * xr[c];
            }
        }
        let mut dx = dy.clone();
        for (dr, xr) in dx
            .data_mut()
            .chunks_exact_mut(ch)
            .zip(cache.xhat.chunks_exact(ch))
        {
            for c in 0..ch {
                let dxhat = dr[c] * self.gamma[c];
                dr[c] = cache.inv_std[c] / count
                    * (count * dxhat - sum_dxhat[c] - xr[c] * sum_dxhat_xhat[c]);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub size: usize,
    pub stride: usize,
}

impl MaxPool {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        if self.size == 0 || self.stride == 0 || h < self.size || w < self.size {
            return Err(NnError::Architecture(format!(
                "{}x{} pool with stride {} does not fit a {h}x{w} input",
                self.size, self.size, self.stride
            )));
        }
        Ok(((h - self.size) / self.stride + 1, (w - self.size) / self.stride + 1))
    }

    /// Pools one HWC image. `argmax[o]` is the flat input index that won
    /// output `o`; ties go to the first position in row-major window order.
    pub fn pool_image<F: Real>(
        &self,
        input: &[F],
        (h, w, c): (usize, usize, usize),
        out: &mut [F],
        argmax: &mut [usize],
    ) {
        let (oh, ow) = self.output_hw(h, w).expect("validated pool geometry");
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_val = F::neg_infinity();
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let idx = ((oy * self.stride + dy) * w + ox * self.stride + dx) * c + ch;
                            if best == usize::MAX || input[idx] > best_val {
                                best = idx;
                                best_val = input[idx];
                            }
                        }
                    }
                    let o = (oy * ow + ox) * c + ch;
                    out[o] = best_val;
                    argmax[o] = best;
                }
            }
        }
    }

    pub fn forward<F: Real>(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>), NnError> {
        let [_, h, w, c] = *x.shape() else {
            return Err(NnError::Architecture(format!(
                "max-pool expects NxHxWxC input, got {:?}",
                x.shape()
            )));
        };
        let (oh, ow) = self.output_hw(h, w)?;
        let n = x.batch();
        let mut out = Tensor::zeros(&[n, oh, ow, c]);
        let mut argmax = vec![0; out.len()];
        let out_len = oh * ow * c;
        for i in 0..n {
            self.pool_image(
                x.item(i),
                (h, w, c),
                &mut out.data_mut()[i * out_len..(i + 1) * out_len],
                &mut argmax[i * out_len..(i + 1) * out_len],
            );
        }
        Ok((out, argmax))
    }

    pub fn backward<F: Real>(
        in_shape: &[usize],
        argmax: &[usize],
        dy: &Tensor<F>,
    ) -> Tensor<F> {
        let mut dx = Tensor::zeros(in_shape);
        let in_len = dx.item_len();
        let out_len = dy.item_len();
        for i in 0..dy.batch() {
            let dxi = &mut dx.data_mut()[i * in_len..(i + 1) * in_len];
            for (o, &g) in dy.item(i).iter().enumerate() {
                dxi[argmax[i * out_len + o]] += g;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub inputs: usize,
    pub units: usize,
    /// `inputs × units` row-major.
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Real> Dense<F> {
    pub fn new(inputs: usize, units: usize) -> Self {
        Self {
            inputs,
            units,
            weights: vec![F::zero(); inputs * units],
            bias: vec![F::zero(); units],
        }
    }

    pub fn init_he<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        he_uniform(&mut self.weights, self.inputs, rng);
        self.bias.fill(F::zero());
    }

    fn check(&self, x: &Tensor<F>) -> Result<(), NnError> {
        if x.item_len() != self.inputs {
            return Err(NnError::Architecture(format!(
                "dense layer expects {} inputs, got {:?}",
                self.inputs,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Flattens everything but the batch axis.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        self.check(x)?;
        let n = x.batch();
        let mut out = Tensor::zeros(&[n, self.units]);
        matmul(n, self.inputs, self.units, x.data(), &self.weights, out.data_mut(), false);
        for row in out.data_mut().chunks_exact_mut(self.units) {
            for (o, &b) in row.iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        x: &Tensor<F>,
        dy: &Tensor<F>,
        dw: &mut [F],
        db: &mut [F],
    ) -> Result<Tensor<F>, NnError> {
        self.check(x)?;
        let n = x.batch();
        matmul_tn(self.inputs, n, self.units, x.data(), dy.data(), dw, true);
        for row in dy.data().chunks_exact(self.units) {
            for (b, &d) in db.iter_mut().zip(row) {
                *b += d;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        matmul_nt(n, self.units, self.inputs, dy.data(), &self.weights, dx.data_mut(), false);
        Ok(dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f32,
}

impl Dropout {
    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. Returns
    /// the output and the per-element multiplier.
    pub fn forward_train<F: Real, R: Rng + ?Sized>(
        &self,
        x: &Tensor<F>,
        rng: &mut R,
    ) -> (Tensor<F>, Vec<F>) {
        let keep = F::from_f64_lossy(1.0 / (1.0 - self.rate as f64));
        let rate = self.rate as f64;
        let mask: Vec<F> = (0..x.len())
            .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        (y, mask)
    }
}

pub fn relu<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if !(*v > F::zero()) {
            *v = F::zero();
        }
    }
    y
}

pub fn relu_backward<F: Real>(x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if !(v > F::zero()) {
            *d = F::zero();
        }
    }
    dx
}

/// Softmax along the last axis.
pub fn softmax<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let classes = *x.shape().last().expect("non-scalar tensor");
    let mut y = x.clone();
    for row in y.data_mut().chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

pub fn softmax_backward<F: Real>(y: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let classes = *y.shape().last().expect("non-scalar tensor");
    let mut dx = dy.clone();
    for (dr, yr) in dx
        .data_mut()
        .chunks_exact_mut(classes)
        .zip(y.data().chunks_exact(classes))
    {
        let dot: F = dr.iter().zip(yr).map(|(&d, &p)| d * p).sum();
        for (d, &p) in dr.iter_mut().zip(yr) {
            *d = p * (*d - dot);
        }
    }
    dx
}
