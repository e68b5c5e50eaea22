#![allow(dead_code)]

use rand::Rng;
use urban_lrp::lrp::{explain, AnalyzableNetwork, AnalyzedLayer, RelevanceMap, Rule, RulePlan};
use urban_lrp::nn::{
    example_gradients, Architecture, BatchNorm, Cache, Conv2d, Dense, Dropout, Layer, MaxPool, Network,
    Padding, Tensor,
};
use urban_lrp::dataset::AudioClip;
use urban_lrp::dsp::{cqt_center_frequencies, hann_window, stft_power, CqtConfig};
use urban_lrp::rng::seeded;

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-6;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-4;

pub fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = seeded(seed);
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Relative disagreement between an analytic and a numeric derivative.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Scalar objective `Σ r ⊙ net(x)` in training mode with a fixed dropout
/// stream, so repeated evaluations see the same masks.
pub fn projected_output(net: &Network<f64>, x: &Tensor<f64>, r: &[f64], mask_seed: u64) -> f64 {
    let mut net = net.clone();
    let (y, _) = net.forward_train(x, &mut seeded(mask_seed), false).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

pub struct GradCheck {
    pub worst_param: f64,
    pub worst_input: f64,
    pub checked: usize,
}

/// Compares every parameter and input derivative of `Σ r ⊙ net(x)` with
/// central differences.
pub fn check_network(net: &Network<f64>, x: &Tensor<f64>, r_seed: u64, mask_seed: u64) -> GradCheck {
    let mut probe = net.clone();
    let (y, caches): (Tensor<f64>, Vec<Cache<f64>>) =
        probe.forward_train(x, &mut seeded(mask_seed), false).unwrap();
    let r = random_tensor(y.shape(), r_seed, -1.0, 1.0);
    let (grads, dx) = net.backward(&caches, r.clone()).unwrap();
    let r = r.into_data();

    let mut worst_param: f64 = 0.0;
    let mut checked = 0;
    let tensors = net.params().len();
    for t in 0..tensors {
        let len = net.params()[t].len();
        for i in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[t][i] += FD_STEP;
            let mut minus = net.clone();
            minus.params_mut()[t][i] -= FD_STEP;
            let numeric = (projected_output(&plus, x, &r, mask_seed)
                - projected_output(&minus, x, &r, mask_seed))
                / (2.0 * FD_STEP);
            worst_param = worst_param.max(grad_error(grads[t][i], numeric));
            checked += 1;
        }
    }
    let mut worst_input: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP;
        let numeric = (projected_output(net, &plus, &r, mask_seed)
            - projected_output(net, &minus, &r, mask_seed))
            / (2.0 * FD_STEP);
        worst_input = worst_input.max(grad_error(dx.data()[i], numeric));
        checked += 1;
    }
    GradCheck {
        worst_param,
        worst_input,
        checked,
    }
}

pub fn single_layer(input: [usize; 3], layer: Layer<f64>) -> Network<f64> {
    Network::new(input, vec![layer]).unwrap()
}

pub fn sine(freq: f64, rate: u32, len: usize, amp: f64) -> Vec<f32> {
    (0..len)
        .map(|n| (amp * (2.0 * std::f64::consts::PI * freq * n as f64 / rate as f64).sin()) as f32)
        .collect()
}

/// Direct O(N²) DFT power at bin `k`.
pub fn dft_power(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let ph = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n;
        re += v * ph.cos();
        im += v * ph.sin();
    }
    re * re + im * im
}

/// Random analyzable network with 2 to 5 conv/pool/dense layers (ReLU
/// interleaved at random), ending in a dense logit layer.
pub fn random_analyzable(seed: u64) -> AnalyzableNetwork {
    let mut rng = seeded(seed);
    let side = rng.gen_range(4..=9);
    let input = [side, side, rng.gen_range(1..=3)];
    let body = rng.gen_range(1..=4);
    let mut layers = Vec::new();
    let mut shape = input.to_vec();
    for _ in 0..body {
        let spatial = shape.len() == 3;
        let choice = rng.gen_range(0..3);
        if spatial && choice == 0 {
            let kernel = rng.gen_range(1..=3.min(shape[0]).min(shape[1]));
            let padding = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
            let mut conv = Conv2d::new(shape[2], rng.gen_range(1..=4), kernel, rng.gen_range(1..=2), padding);
            for w in conv.weights.iter_mut().chain(conv.bias.iter_mut()) {
                *w = rng.gen_range(-1.0..1.0);
            }
            let g = conv.geometry(&shape).unwrap();
            shape = vec![g.out_h, g.out_w, conv.out_channels];
            layers.push(AnalyzedLayer::Conv(conv));
        } else if spatial && choice == 1 && shape[0] >= 2 && shape[1] >= 2 {
            let pool = MaxPool { size: 2, stride: 2 };
            let (h, w) = pool.output_hw(shape[0], shape[1]).unwrap();
            shape = vec![h, w, shape[2]];
            layers.push(AnalyzedLayer::MaxPool(pool));
        } else {
            let units = rng.gen_range(2..=6);
            layers.push(AnalyzedLayer::Dense(random_dense(&mut rng, shape.iter().product(), units)));
            shape = vec![units];
        }
        if rng.gen_bool(0.7) {
            layers.push(AnalyzedLayer::Relu);
        }
    }
    let classes = rng.gen_range(2..=5);
    layers.push(AnalyzedLayer::Dense(random_dense(&mut rng, shape.iter().product(), classes)));
    AnalyzableNetwork::new(input, layers).unwrap()
}

fn random_dense(rng: &mut impl Rng, inputs: usize, units: usize) -> Dense<f64> {
    let mut d = Dense::new(inputs, units);
    for w in d.weights.iter_mut().chain(d.bias.iter_mut()) {
        *w = rng.gen_range(-1.0..1.0);
    }
    d
}

pub fn random_input(net: &AnalyzableNetwork, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let n: usize = net.input_shape().iter().product();
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Tolerance for linear-rule steps whose arithmetic is a sum of shares.
pub const FLAT_REL_TOL: f64 = 1e-12;
pub const WSQUARE_LAYER_TOL: f64 = 1e-10;
pub const WSQUARE_TOTAL_TOL: f64 = 1e-6;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn sorted_nonzero(v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().copied().filter(|x| *x != 0.0).collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

pub struct Conservation {
    /// Worst relative gap across conv and dense steps.
    pub worst_linear: f64,
    /// Every pooling step moved its relevance values without alteration.
    pub pool_exact: bool,
    /// Every ReLU step passed relevance through unchanged.
    pub relu_exact: bool,
    /// Relative gap between input total and target logit.
    pub end_to_end: f64,
}

/// Brute-force sums over every layer boundary of one explanation.
pub fn conservation(net: &AnalyzableNetwork, input: &[f64], target: usize, rule: Rule) -> Conservation {
    let e = explain(net, input, target, &RulePlan::Uniform(rule)).unwrap();
    let mut out = Conservation { worst_linear: 0.0, pool_exact: true, relu_exact: true, end_to_end: 0.0 };
    for (k, layer) in net.layers().iter().enumerate() {
        let lower = &e.relevance[k];
        let upper = &e.relevance[k + 1];
        match layer {
            AnalyzedLayer::Relu => out.relu_exact &= lower == upper,
            AnalyzedLayer::MaxPool(_) => out.pool_exact &= sorted_nonzero(lower) == sorted_nonzero(upper),
            _ => {
                let gap = rel(lower.iter().sum(), upper.iter().sum());
                out.worst_linear = out.worst_linear.max(gap);
            }
        }
    }
    out.end_to_end = rel(e.input().iter().sum(), e.logits[target]);
    out
}

/// Small conv/BN model with ten outputs and non-trivial batch-norm
/// statistics.
pub fn random_bn_model(seed: u64) -> Network<f32> {
    let arch = Architecture {
        input_size: 12,
        input_channels: 3,
        conv_channels: vec![4, 6],
        kernel: 3,
        dense_units: vec![16],
        dropout: 0.4,
        num_classes: 10,
    };
    let mut net = Network::<f32>::build(&arch, seed).unwrap();
    let mut rng = seeded(seed ^ 0xB17);
    for layer in net.layers_mut() {
        if let Layer::BatchNorm(bn) = layer {
            for c in 0..bn.channels {
                bn.gamma[c] = rng.gen_range(0.5..1.5);
                bn.beta[c] = rng.gen_range(-0.3..0.3);
                bn.running_mean[c] = rng.gen_range(-0.2..0.2);
                bn.running_var[c] = rng.gen_range(0.5..2.0);
            }
        }
    }
    net
}

/// Frame `t` of a reflect-padded signal, by direct index arithmetic.
pub fn reflect_frame(samples: &[f32], fft: usize, hop: usize, t: usize) -> Vec<f64> {
    let pad = (fft / 2) as i64;
    let n = samples.len() as i64;
    (0..fft as i64)
        .map(|j| {
            let mut i = (t * hop) as i64 + j - pad;
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
            samples[i as usize] as f64
        })
        .collect()
}

/// Worst per-frame relative Parseval gap of the STFT on seeded noise:
/// windowed frame energy against the one-sided power spectrum.
pub fn parseval_worst(rate: u32, fft: usize, hop: usize, len: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
    let clip = AudioClip::new(samples.clone(), rate).unwrap();
    let power = stft_power(&clip, fft, hop).unwrap();
    let window = hann_window(fft);
    let mut worst: f64 = 0.0;
    for t in 0..power.cols {
        let energy: f64 = reflect_frame(&samples, fft, hop, t)
            .iter()
            .zip(&window)
            .map(|(x, w)| (x * w).powi(2))
            .sum();
        let half = fft / 2;
        let spectral = power.get(0, t)
            + power.get(half, t)
            + 2.0 * (1..half).map(|k| power.get(k, t)).sum::<f64>();
        worst = worst.max((spectral / fft as f64 - energy).abs() / energy);
    }
    worst
}

/// Largest deviation of adjacent CQT centre-frequency ratios from 2^(1/12).
pub fn cqt_ratio_worst() -> f64 {
    let f = cqt_center_frequencies(&CqtConfig::default());
    let semitone = 2f64.powf(1.0 / 12.0);
    f.windows(2).map(|w| (w[1] / w[0] - semitone).abs()).fold(0.0, f64::max)
}

/// One single-layer finite-difference check.
pub struct GradCase {
    pub name: &'static str,
    pub net: Network<f64>,
    pub x: Tensor<f64>,
    pub r_seed: u64,
    pub mask_seed: u64,
}

fn randomize(net: &mut Network<f64>, seed: u64) {
    let mut s = seed;
    for p in net.params_mut() {
        let r = random_tensor(&[p.len()], s, -0.8, 0.8);
        p.copy_from_slice(r.data());
        s += 1;
    }
}

/// A miniature case for every layer kind.
pub fn gradient_cases() -> Vec<GradCase> {
    let case = |name, input, layer, params_seed: u64, x_shape: &[usize], lo, hi, mask_seed| {
        let mut net = single_layer(input, layer);
        randomize(&mut net, params_seed);
        GradCase { name, net, x: random_tensor(x_shape, params_seed + 1, lo, hi), r_seed: params_seed + 2, mask_seed }
    };
    vec![
        case("conv same", [5, 5, 2], Layer::Conv2d(Conv2d::new(2, 3, 3, 1, Padding::Same)), 10, &[2, 5, 5, 2], -1.0, 1.0, 0),
        case("conv strided", [7, 7, 2], Layer::Conv2d(Conv2d::new(2, 2, 3, 2, Padding::Valid)), 20, &[1, 7, 7, 2], -1.0, 1.0, 0),
        case("batch norm", [3, 3, 4], Layer::BatchNorm(BatchNorm::new(4)), 30, &[3, 3, 3, 4], -2.0, 2.0, 0),
        case("relu", [4, 4, 2], Layer::Relu, 40, &[2, 4, 4, 2], -1.0, 1.0, 0),
        case("max pool", [5, 5, 3], Layer::MaxPool(MaxPool { size: 2, stride: 2 }), 50, &[2, 5, 5, 3], -1.0, 1.0, 0),
        case("dropout", [4, 4, 2], Layer::Dropout(Dropout { rate: 0.4 }), 60, &[2, 4, 4, 2], -1.0, 1.0, 63),
        case("dense", [2, 3, 2], Layer::Dense(Dense::new(12, 5)), 70, &[3, 2, 3, 2], -1.0, 1.0, 0),
        case("softmax", [1, 1, 6], Layer::Softmax, 80, &[2, 1, 1, 6], -2.0, 2.0, 0),
    ]
}

pub fn run_case(case: &GradCase) -> GradCheck {
    check_network(&case.net, &case.x, case.r_seed, case.mask_seed)
}

/// Worst relative error of every parameter derivative of the weighted
/// loss of an 8×8-input conv/BN/dense model.
pub fn miniature_model_error() -> f64 {
    let arch = Architecture {
        input_size: 8,
        input_channels: 3,
        conv_channels: vec![3, 4],
        kernel: 3,
        dense_units: vec![6],
        dropout: 0.3,
        num_classes: 4,
    };
    let net: Network<f64> = Network::build(&arch, 5).unwrap();
    let image = random_tensor(&[8 * 8 * 3], 91, 0.0, 1.0).into_data();
    let (label, weight, mask_seed) = (2, 1.7, 93);

    let loss_at = |net: &Network<f64>| {
        let mut n = net.clone();
        example_gradients(&mut n, &image, label, weight, &mut seeded(mask_seed)).unwrap().0
    };
    let mut probe = net.clone();
    let (_, grads) = example_gradients(&mut probe, &image, label, weight, &mut seeded(mask_seed)).unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..net.params().len() {
        for i in 0..net.params()[t].len() {
            let mut plus = net.clone();
            plus.params_mut()[t][i] += FD_STEP;
            let mut minus = net.clone();
            minus.params_mut()[t][i] -= FD_STEP;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(grad_error(grads[t][i], numeric));
        }
    }
    worst
}

/// Input 2×2×1 → 1×1 conv into channels (x, −x) → ReLU → 2×2 max-pool →
/// dense 2 → 2. For input (0.1, 0.4, 0.3, 0.2) the first channel pools to
/// 0.4 at pixel 1 and the second, all zero after ReLU, ties to pixel 0.
/// The target logit is 2·0.4 + 3·0 + 0.5 = 1.3. The flat rule splits it
/// evenly across both dense inputs, and each half travels to its pooled
/// winner, so pixels 0 and 1 receive 0.65 each.
pub fn toy_network() -> AnalyzableNetwork {
    let conv = Conv2d { kernel: 1, stride: 1, padding: Padding::Valid, in_channels: 1, out_channels: 2, weights: vec![1.0, -1.0], bias: vec![0.0, 0.0] };
    let head = Dense { inputs: 2, units: 2, weights: vec![2.0, -1.0, 3.0, 1.0], bias: vec![0.5, 0.0] };
    AnalyzableNetwork::new(
        [2, 2, 1],
        vec![AnalyzedLayer::Conv(conv), AnalyzedLayer::Relu, AnalyzedLayer::MaxPool(MaxPool { size: 2, stride: 2 }), AnalyzedLayer::Dense(head)],
    )
    .unwrap()
}

pub const TOY_INPUT: [f64; 4] = [0.1, 0.4, 0.3, 0.2];
/// Hand-derived back-projection of the toy network, before and after
/// normalization.
pub const TOY_RAW: [f64; 4] = [0.65, 0.65, 0.0, 0.0];
pub const TOY_NORMALIZED: [f64; 4] = [1.0, 1.0, 0.0, 0.0];

/// Flat-rule input relevance and normalized map of the toy network for
/// target 0.
pub fn toy_flat_relevance() -> (Vec<f64>, RelevanceMap) {
    let net = toy_network();
    let e = explain(&net, &TOY_INPUT, 0, &Rule::Flat.into()).unwrap();
    assert_eq!(e.logits[0], 1.3);
    let map = RelevanceMap::from_input_relevance([2, 2, 1], e.input(), 0, Rule::Flat.into(), "toy").unwrap();
    (e.input().to_vec(), map)
}
