use crate::nn::{conv2d_image, Conv2d, ConvGeometry, Dense, Layer, MaxPool, Network, Real};

use super::LrpError;

/// One step of an analyzable network. Dropout and softmax have no
/// counterpart: the former is the identity at inference, the latter is
/// never part of the analyzed graph.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyzedLayer {
    Conv(Conv2d<f64>),
    Relu,
    MaxPool(MaxPool),
    Dense(Dense<f64>),
}

impl AnalyzedLayer {
    pub fn is_linear(&self) -> bool {
        matches!(self, AnalyzedLayer::Conv(_) | AnalyzedLayer::Dense(_))
    }
}

/// Linearized network in `f64` with batch norm folded into the preceding
/// convolutions. Its output is the logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzableNetwork {
    input_shape: [usize; 3],
    layers: Vec<AnalyzedLayer>,
    /// `shapes[k]` is the item shape entering layer `k`; the last entry is
    /// the logit shape.
    shapes: Vec<Vec<usize>>,
}

/// Values cached by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// `values[k]` enters layer `k`; the last entry holds the logits.
    pub values: Vec<Vec<f64>>,
    /// Winning input index per pooled output, for each max-pool layer.
    pub argmax: Vec<Option<Vec<usize>>>,
}

impl Activations {
    pub fn logits(&self) -> &[f64] {
        self.values.last().expect("at least the input")
    }
}

/// Folds every Conv → BatchNorm pair into one convolution:
/// `w' = w·γ/√(σ²+ε)`, `b' = (b−μ)·γ/√(σ²+ε) + β`.
pub fn fold_batchnorm<F: Real>(model: &Network<F>) -> Result<AnalyzableNetwork, LrpError> {
    let cast = |v: &[F]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let source = model.layers();
    let mut layers = Vec::new();
    let mut k = 0;
    while k < source.len() {
        match &source[k] {
            Layer::Conv2d(c) => {
                let mut conv = Conv2d {
                    kernel: c.kernel,
                    stride: c.stride,
                    padding: c.padding,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    weights: cast(&c.weights),
                    bias: cast(&c.bias),
                };
                if let Some(Layer::BatchNorm(bn)) = source.get(k + 1) {
                    let eps = bn.eps as f64;
                    let cout = conv.out_channels;
                    let scale: Vec<f64> = (0..cout)
                        .map(|o| bn.gamma[o].to_f64_lossy() / (bn.running_var[o].to_f64_lossy() + eps).sqrt())
                        .collect();
                    for row in conv.weights.chunks_exact_mut(cout) {
                        for (w, s) in row.iter_mut().zip(&scale) {
                            *w *= s;
                        }
                    }
                    for o in 0..cout {
                        conv.bias[o] = (conv.bias[o] - bn.running_mean[o].to_f64_lossy()) * scale[o]
                            + bn.beta[o].to_f64_lossy();
                    }
                    k += 1;
                }
                layers.push(AnalyzedLayer::Conv(conv));
            }
            Layer::BatchNorm(_) => {
                return Err(LrpError::Structure(format!(
                    "batch norm at layer {k} does not follow a convolution"
                )))
            }
            Layer::Relu => layers.push(AnalyzedLayer::Relu),
            Layer::MaxPool(p) => layers.push(AnalyzedLayer::MaxPool(*p)),
            Layer::Dropout(_) => {}
            Layer::Dense(d) => layers.push(AnalyzedLayer::Dense(Dense {
                inputs: d.inputs,
                units: d.units,
                weights: cast(&d.weights),
                bias: cast(&d.bias),
            })),
            Layer::Softmax if k + 1 == source.len() => {}
            Layer::Softmax => {
                return Err(LrpError::Structure(format!("softmax at inner layer {k}")))
            }
        }
        k += 1;
    }
    AnalyzableNetwork::new(model.input_shape(), layers)
}

impl AnalyzableNetwork {
    pub fn new(input_shape: [usize; 3], layers: Vec<AnalyzedLayer>) -> Result<Self, LrpError> {
        let mut shapes = vec![input_shape.to_vec()];
        for layer in &layers {
            let cur = shapes.last().unwrap();
            let next = match layer {
                AnalyzedLayer::Conv(c) => {
                    let g = c.geometry(cur)?;
                    vec![g.out_h, g.out_w, c.out_channels]
                }
                AnalyzedLayer::Relu => cur.clone(),
                AnalyzedLayer::MaxPool(p) => {
                    if cur.len() != 3 {
                        return Err(LrpError::Structure(format!("max-pool over {cur:?}")));
                    }
                    let (h, w) = p.output_hw(cur[0], cur[1])?;
                    vec![h, w, cur[2]]
                }
                AnalyzedLayer::Dense(d) => {
                    let n: usize = cur.iter().product();
                    if n != d.inputs {
                        return Err(LrpError::Structure(format!(
                            "dense layer expects {} inputs, receives {n}",
                            d.inputs
                        )));
                    }
                    vec![d.units]
                }
            };
            shapes.push(next);
        }
        if !layers.last().map_or(false, AnalyzedLayer::is_linear) {
            return Err(LrpError::Structure("the logit layer must be linear".into()));
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[AnalyzedLayer] {
        &self.layers
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn num_outputs(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn linear_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_linear()).count()
    }

    pub(crate) fn conv_geometry(&self, k: usize) -> ConvGeometry {
        match &self.layers[k] {
            AnalyzedLayer::Conv(c) => c.geometry(&self.shapes[k]).expect("validated at construction"),
            _ => panic!("layer {k} is not a convolution"),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Activations, LrpError> {
        let expected: usize = self.input_shape.iter().product();
        if input.len() != expected {
            return Err(LrpError::Parameter(format!(
                "input has {} values, network expects {expected}",
                input.len()
            )));
        }
        let mut values = vec![input.to_vec()];
        let mut argmax = Vec::with_capacity(self.layers.len());
        let mut cols = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let x = values.last().unwrap();
            let out_len: usize = self.shapes[k + 1].iter().product();
            let mut out = vec![0.0; out_len];
            let mut winners = None;
            match layer {
                AnalyzedLayer::Conv(c) => {
                    let g = self.conv_geometry(k);
                    conv2d_image(&g, &c.weights, &c.bias, x, &mut cols, &mut out);
                }
                AnalyzedLayer::Relu => {
                    for (o, &v) in out.iter_mut().zip(x) {
                        *o = v.max(0.0);
                    }
                }
                AnalyzedLayer::MaxPool(p) => {
                    let s = &self.shapes[k];
                    let mut idx = vec![0; out_len];
                    p.pool_image(x, (s[0], s[1], s[2]), &mut out, &mut idx);
                    winners = Some(idx);
                }
                AnalyzedLayer::Dense(d) => {
                    out.copy_from_slice(&d.bias);
                    for (xi, row) in x.iter().zip(d.weights.chunks_exact(d.units)) {
                        if *xi != 0.0 {
                            for (o, w) in out.iter_mut().zip(row) {
                                *o += xi * w;
                            }
                        }
                    }
                }
            }
            argmax.push(winners);
            values.push(out);
        }
        Ok(Activations { values, argmax })
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>, LrpError> {
        Ok(self.forward(input)?.values.pop().unwrap())
    }
}
