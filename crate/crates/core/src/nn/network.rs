use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::layers::{
    relu, relu_backward, softmax, softmax_backward, BatchNorm, BatchNormCache, Conv2d, Dense,
    Dropout, MaxPool, Padding,
};
use super::{NnError, Real, Tensor};

/// Guard added to the target probability inside the cross-entropy log.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    Relu,
    MaxPool,
    Dropout,
    Dense,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<F> {
    Conv2d(Conv2d<F>),
    BatchNorm(BatchNorm<F>),
    Relu,
    MaxPool(MaxPool),
    Dropout(Dropout),
    Dense(Dense<F>),
    Softmax,
}

impl<F: Real> Layer<F> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Softmax => LayerKind::Softmax,
        }
    }

    /// Output shape of one item (no batch axis).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        match self {
            Layer::Conv2d(conv) => {
                let g = conv.geometry(input)?;
                Ok(vec![g.out_h, g.out_w, conv.out_channels])
            }
            Layer::BatchNorm(bn) => {
                if input.last() != Some(&bn.channels) {
                    return Err(NnError::Architecture(format!(
                        "batch norm over {} channels after {input:?}",
                        bn.channels
                    )));
                }
                Ok(input.to_vec())
            }
            Layer::MaxPool(pool) => match *input {
                [h, w, c] => {
                    let (oh, ow) = pool.output_hw(h, w)?;
                    Ok(vec![oh, ow, c])
                }
                _ => Err(NnError::Architecture(format!(
                    "max-pool needs HxWxC input, got {input:?}"
                ))),
            },
            Layer::Dropout(d) => {
                if !(0.0..1.0).contains(&d.rate) {
                    return Err(NnError::Architecture(format!(
                        "dropout rate {} outside [0, 1)",
                        d.rate
                    )));
                }
                Ok(input.to_vec())
            }
            Layer::Dense(dense) => {
                let n: usize = input.iter().product();
                if n != dense.inputs || dense.units == 0 {
                    return Err(NnError::Architecture(format!(
                        "dense layer {}→{} after {input:?}",
                        dense.inputs, dense.units
                    )));
                }
                Ok(vec![dense.units])
            }
            Layer::Relu | Layer::Softmax => Ok(input.to_vec()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            Layer::BatchNorm(b) => 2 * b.channels,
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }
}

/// Builder parameters for the conv-block / dense-head family of networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_size: usize,
    pub input_channels: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub dense_units: Vec<usize>,
    pub dropout: f32,
    pub num_classes: usize,
}

impl Architecture {
    /// 220×220×3 input, five conv blocks (32, 32, 64, 64, 128), two 512-unit
    /// dense layers, ten classes.
    pub fn canonical() -> Self {
        Self {
            input_size: 220,
            input_channels: 3,
            conv_channels: vec![32, 32, 64, 64, 128],
            kernel: 3,
            dense_units: vec![512, 512],
            dropout: 0.4,
            num_classes: 10,
        }
    }

    /// Three conv blocks over 64×64 input.
    pub fn reduced(num_classes: usize) -> Self {
        Self {
            input_size: 64,
            input_channels: 3,
            conv_channels: vec![16, 16, 32],
            kernel: 3,
            dense_units: vec![128, 128],
            dropout: 0.4,
            num_classes,
        }
    }

    /// Each block is conv (same padding, stride 1) → batch norm → ReLU →
    /// 2×2/2 max-pool; the head is dense → ReLU → dropout per hidden layer,
    /// then the class layer and softmax.
    pub fn layers<F: Real>(&self) -> Vec<Layer<F>> {
        let mut layers = Vec::new();
        let mut channels = self.input_channels;
        let mut side = self.input_size;
        for &out in &self.conv_channels {
            layers.push(Layer::Conv2d(Conv2d::new(channels, out, self.kernel, 1, Padding::Same)));
            layers.push(Layer::BatchNorm(BatchNorm::new(out)));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool(MaxPool { size: 2, stride: 2 }));
            channels = out;
            side /= 2;
        }
        let mut inputs = side * side * channels;
        for &units in &self.dense_units {
            layers.push(Layer::Dense(Dense::new(inputs, units)));
            layers.push(Layer::Relu);
            layers.push(Layer::Dropout(Dropout { rate: self.dropout }));
            inputs = units;
        }
        layers.push(Layer::Dense(Dense::new(inputs, self.num_classes)));
        layers.push(Layer::Softmax);
        layers
    }
}

/// Per-layer state saved by a training forward pass.
#[derive(Debug, Clone)]
pub enum Cache<F> {
    Input(Tensor<F>),
    BatchNorm(BatchNormCache<F>),
    MaxPool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Dropout(Vec<F>),
    Output(Tensor<F>),
}

/// Gradients aligned with [`Network::params_mut`].
pub type Gradients<F> = Vec<Vec<F>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    input_shape: [usize; 3],
    layers: Vec<Layer<F>>,
}

impl<F: Real> Network<F> {
    /// Validates that consecutive layer shapes compose.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer<F>>) -> Result<Self, NnError> {
        let net = Self { input_shape, layers };
        net.layer_shapes()?;
        Ok(net)
    }

    /// Builds `arch` with He-uniform weights drawn from a xoshiro256** stream
    /// seeded with `seed`; biases zero, batch-norm scale 1 and shift 0.
    pub fn build(arch: &Architecture, seed: u64) -> Result<Self, NnError> {
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let mut layers = arch.layers();
        for layer in &mut layers {
            match layer {
                Layer::Conv2d(c) => c.init_he(&mut rng),
                Layer::Dense(d) => d.init_he(&mut rng),
                _ => {}
            }
        }
        Self::new([arch.input_size, arch.input_size, arch.input_channels], layers)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    /// Item shape entering each layer, followed by the final output shape.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = vec![self.input_shape.to_vec()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn num_outputs(&self) -> usize {
        self.layer_shapes()
            .ok()
            .and_then(|s| s.last().map(|s| s.iter().product()))
            .unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax))
    }

    pub fn cast<G: Real>(&self) -> Network<G> {
        let cv = |v: &[F]| -> Vec<G> { v.iter().map(|&x| G::from_f64_lossy(x.to_f64_lossy())).collect() };
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                    kernel: c.kernel,
                    stride: c.stride,
                    padding: c.padding,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    weights: cv(&c.weights),
                    bias: cv(&c.bias),
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
                    channels: b.channels,
                    gamma: cv(&b.gamma),
                    beta: cv(&b.beta),
                    running_mean: cv(&b.running_mean),
                    running_var: cv(&b.running_var),
                    momentum: b.momentum,
                    eps: b.eps,
                }),
                Layer::Relu => Layer::Relu,
                Layer::MaxPool(p) => Layer::MaxPool(*p),
                Layer::Dropout(d) => Layer::Dropout(*d),
                Layer::Dense(d) => Layer::Dense(Dense {
                    inputs: d.inputs,
                    units: d.units,
                    weights: cv(&d.weights),
                    bias: cv(&d.bias),
                }),
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        Network {
            input_shape: self.input_shape,
            layers,
        }
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(), NnError> {
        if x.shape().len() != 4 || x.shape()[1..] != self.input_shape {
            return Err(NnError::Architecture(format!(
                "network expects Nx{:?} input, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    fn infer_layers(&self, x: &Tensor<F>, layers: &[Layer<F>]) -> Result<Tensor<F>, NnError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in layers {
            h = match layer {
                Layer::Conv2d(c) => c.forward(&h)?,
                Layer::BatchNorm(b) => b.forward_infer(&h)?,
                Layer::Relu => relu(&h),
                Layer::MaxPool(p) => p.forward(&h)?.0,
                Layer::Dropout(_) => h,
                Layer::Dense(d) => d.forward(&h)?,
                Layer::Softmax => softmax(&h),
            };
        }
        Ok(h)
    }

    /// Inference-mode forward pass: batch-norm running statistics, identity
    /// dropout. Returns `N × outputs`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        self.infer_layers(x, &self.layers)
    }

    /// Inference-mode forward pass stopping before a trailing softmax.
    pub fn logits(&self, x: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        let end = if self.ends_with_softmax() {
            self.layers.len() - 1
        } else {
            self.layers.len()
        };
        self.infer_layers(x, &self.layers[..end])
    }

    /// Class probabilities for a single HWC image.
    pub fn predict(&self, image: &[F]) -> Result<Vec<F>, NnError> {
        let x = Tensor::stack(&[image], &self.input_shape)?;
        Ok(self.forward(&x)?.into_data())
    }

    /// Training-mode forward pass. Batch norm normalizes with batch
    /// statistics (updating running statistics when `update_stats`), dropout
    /// draws masks from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor<F>,
        rng: &mut R,
        update_stats: bool,
    ) -> Result<(Tensor<F>, Vec<Cache<F>>), NnError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Conv2d(c) => {
                    let y = c.forward(&h)?;
                    caches.push(Cache::Input(h));
                    y
                }
                Layer::BatchNorm(b) => {
                    let (y, cache) = b.forward_train(&h, update_stats)?;
                    caches.push(Cache::BatchNorm(cache));
                    y
                }
                Layer::Relu => {
                    let y = relu(&h);
                    caches.push(Cache::Input(h));
                    y
                }
                Layer::MaxPool(p) => {
                    let (y, argmax) = p.forward(&h)?;
                    caches.push(Cache::MaxPool {
                        in_shape: h.shape().to_vec(),
                        argmax,
                    });
                    y
                }
                Layer::Dropout(d) => {
                    let (y, mask) = d.forward_train(&h, rng);
                    caches.push(Cache::Dropout(mask));
                    y
                }
                Layer::Dense(d) => {
                    let y = d.forward(&h)?;
                    caches.push(Cache::Input(h));
                    y
                }
                Layer::Softmax => {
                    let y = softmax(&h);
                    caches.push(Cache::Output(y.clone()));
                    y
                }
            };
        }
        Ok((h, caches))
    }

    /// Reverse-mode pass from the gradient of the network output. Returns
    /// parameter gradients and the input gradient.
    pub fn backward(
        &self,
        caches: &[Cache<F>],
        grad_output: Tensor<F>,
    ) -> Result<(Gradients<F>, Tensor<F>), NnError> {
        if caches.len() != self.layers.len() {
            return Err(NnError::Architecture("cache does not match layers".into()));
        }
        let mut grads = self.zero_gradients();
        let mut slot = grads.len();
        let mut dy = grad_output;
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            dy = match (layer, cache) {
                (Layer::Conv2d(c), Cache::Input(x)) => {
                    slot -= 2;
                    let (dw, db) = two_slots(&mut grads, slot);
                    c.backward(x, &dy, dw, db)?
                }
                (Layer::BatchNorm(b), Cache::BatchNorm(cache)) => {
                    slot -= 2;
                    let (dg, dbeta) = two_slots(&mut grads, slot);
                    b.backward(cache, &dy, dg, dbeta)
                }
                (Layer::Relu, Cache::Input(x)) => relu_backward(x, &dy),
                (Layer::MaxPool(_), Cache::MaxPool { in_shape, argmax }) => {
                    MaxPool::backward(in_shape, argmax, &dy)
                }
                (Layer::Dropout(_), Cache::Dropout(mask)) => {
                    let mut dx = dy;
                    for (d, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *d *= m;
                    }
                    dx
                }
                (Layer::Dense(d), Cache::Input(x)) => {
                    slot -= 2;
                    let (dw, db) = two_slots(&mut grads, slot);
                    let dx = d.backward(x, &dy, dw, db)?;
                    dx.reshaped(x.shape())?
                }
                (Layer::Softmax, Cache::Output(y)) => softmax_backward(y, &dy),
                _ => return Err(NnError::Architecture("cache kind mismatch".into())),
            };
        }
        Ok((grads, dy))
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        self.params().iter().map(|p| vec![F::zero(); p.len()]).collect()
    }

    /// Trainable parameter tensors in layer order: conv/dense weights then
    /// bias, batch-norm scale then shift.
    pub fn params(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&c.weights);
                    out.push(&c.bias);
                }
                Layer::BatchNorm(b) => {
                    out.push(&b.gamma);
                    out.push(&b.beta);
                }
                Layer::Dense(d) => {
                    out.push(&d.weights);
                    out.push(&d.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push(&mut c.weights);
                    out.push(&mut c.bias);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                _ => {}
            }
        }
        out
    }
}

fn two_slots<F>(grads: &mut [Vec<F>], slot: usize) -> (&mut [F], &mut [F]) {
    let (a, b) = grads[slot..slot + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Mean over the batch of `−w·ln(p_label + ε)`, and its gradient with
/// respect to the probabilities.
pub fn weighted_cross_entropy<F: Real>(
    probs: &Tensor<F>,
    labels: &[usize],
    weights: &[F],
) -> Result<(F, Tensor<F>), NnError> {
    let n = probs.batch();
    let classes = probs.item_len();
    if labels.len() != n || weights.len() != n {
        return Err(NnError::Shape("labels/weights do not match batch".into()));
    }
    let eps = F::from_f64_lossy(LOSS_EPS);
    let count = F::from_usize(n).unwrap();
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = F::zero();
    for i in 0..n {
        let label = labels[i];
        if label >= classes {
            return Err(NnError::Shape(format!("label {label} outside {classes} classes")));
        }
        let p = probs.item(i)[label] + eps;
        loss -= weights[i] * p.ln();
        grad.data_mut()[i * classes + label] = -weights[i] / (count * p);
    }
    Ok((loss / count, grad))
}

/// Loss and gradients for a single weighted example, using batch statistics
/// in batch norm. Dropout masks come from `rng`.
pub fn example_gradients<F: Real, R: Rng + ?Sized>(
    model: &mut Network<F>,
    image: &[F],
    label: usize,
    weight: F,
    rng: &mut R,
) -> Result<(F, Gradients<F>), NnError> {
    let x = Tensor::stack(&[image], &model.input_shape())?;
    let (probs, caches) = model.forward_train(&x, rng, false)?;
    let (loss, grad) = weighted_cross_entropy(&probs, &[label], &[weight])?;
    let (grads, _) = model.backward(&caches, grad)?;
    Ok((loss, grads))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<F: Real>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_architecture_shapes() {
        let arch = Architecture::canonical();
        let layers: Vec<Layer<f32>> = arch.layers();
        let net = Network::new([220, 220, 3], layers).unwrap();
        let shapes = net.layer_shapes().unwrap();
        let pooled: Vec<usize> = net
            .layers()
            .iter()
            .zip(shapes.iter().skip(1))
            .filter(|(l, _)| l.kind() == LayerKind::MaxPool)
            .map(|(_, s)| s[0])
            .collect();
        assert_eq!(pooled, vec![110, 55, 27, 13, 6]);
        let convs: Vec<usize> = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Conv2d(c) => Some(c.out_channels),
                _ => None,
            })
            .collect();
        assert_eq!(convs, vec![32, 32, 64, 64, 128]);
        let dense: Vec<usize> = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some(d.units),
                _ => None,
            })
            .collect();
        assert_eq!(dense, vec![512, 512, 10]);
        assert_eq!(shapes.last().unwrap(), &vec![10]);
        assert!(net.ends_with_softmax());
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let layers: Vec<Layer<f32>> = vec![
            Layer::Conv2d(Conv2d::new(3, 4, 3, 1, Padding::Same)),
            Layer::BatchNorm(BatchNorm::new(5)),
        ];
        assert!(matches!(
            Network::new([8, 8, 3], layers),
            Err(NnError::Architecture(_))
        ));
        let layers: Vec<Layer<f32>> = vec![Layer::Dense(Dense::new(10, 2))];
        assert!(Network::new([8, 8, 3], layers).is_err());
    }

    #[test]
    fn zero_dense_stub_is_exactly_uniform() {
        let layers: Vec<Layer<f64>> = vec![Layer::Dense(Dense::new(12, 10)), Layer::Softmax];
        let net = Network::new([2, 2, 3], layers).unwrap();
        let probs = net.predict(&[0.0; 12]).unwrap();
        assert!(probs.iter().all(|&p| p == 0.1));
        assert_eq!(argmax(&probs), 0);
    }

    #[test]
    fn wrong_input_shape_is_an_architecture_error() {
        let net: Network<f32> = Network::build(&Architecture::reduced(4), 1).unwrap();
        assert!(matches!(
            net.predict(&[0.0; 10]),
            Err(NnError::Shape(_)) | Err(NnError::Architecture(_))
        ));
    }

    #[test]
    fn weight_scales_loss_and_gradients_linearly() {
        let arch = Architecture {
            input_size: 8,
            input_channels: 1,
            conv_channels: vec![2],
            kernel: 3,
            dense_units: vec![4],
            dropout: 0.0,
            num_classes: 3,
        };
        let mut net: Network<f64> = Network::build(&arch, 3).unwrap();
        let image: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut rng = Xoshiro256StarStar::seed_from_u64(0);
        let (l1, g1) = example_gradients(&mut net, &image, 1, 1.0, &mut rng).unwrap();
        let (l2, g2) = example_gradients(&mut net, &image, 1, 2.0, &mut rng).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        for (a, b) in g1.iter().flatten().zip(g2.iter().flatten()) {
            assert!((b - 2.0 * a).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let probs = Tensor::from_vec(&[1, 3], vec![0.0f64, 1.0, 0.0]).unwrap();
        let (loss, grad) = weighted_cross_entropy(&probs, &[1], &[1.0]).unwrap();
        assert!(loss.abs() < 1e-11);
        let dlogits = softmax_backward(&probs, &grad);
        assert!(dlogits.data().iter().all(|g| g.abs() < 1e-11));
    }
}
