//! Layer-wise relevance propagation with the `w²` and flat rules.

mod analyzable;
mod rules;

pub use analyzable::{fold_batchnorm, Activations, AnalyzableNetwork, AnalyzedLayer};
pub use rules::{
    relevance_conv, relevance_dense_flat, relevance_dense_wsquare, relevance_maxpool, Rule,
    RulePlan,
};

use thiserror::Error;

use crate::dsp::FeatureImage;
use crate::nn::NnError;

pub const CLASS_AVERAGE: &str = "class-average";
pub const DEFAULT_ALPHA: f64 = 0.6;

#[derive(Debug, Error)]
pub enum LrpError {
    #[error("network structure error: {0}")]
    Structure(String),
    #[error("all-zero weights for unit {unit} carrying nonzero relevance")]
    Degenerate { unit: usize },
    #[error("invalid argument: {0}")]
    Parameter(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Relevance at every layer boundary for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub target: usize,
    pub logits: Vec<f64>,
    /// `relevance[k]` enters layer `k`; the last entry is the output seed.
    pub relevance: Vec<Vec<f64>>,
}

impl Explanation {
    pub fn input(&self) -> &[f64] {
        &self.relevance[0]
    }
}

/// Propagates `seed` (one value per logit) from the output down to the
/// input using cached activations.
pub fn propagate(
    net: &AnalyzableNetwork,
    activations: &Activations,
    seed: Vec<f64>,
    plan: &RulePlan,
) -> Result<Vec<Vec<f64>>, LrpError> {
    plan.check(net.linear_layer_count())?;
    if seed.len() != net.num_outputs() {
        return Err(LrpError::Parameter(format!(
            "seed has {} values for {} outputs",
            seed.len(),
            net.num_outputs()
        )));
    }
    let layers = net.layers();
    let mut relevance = vec![Vec::new(); layers.len() + 1];
    relevance[layers.len()] = seed;
    let mut linear_index = net.linear_layer_count();
    for k in (0..layers.len()).rev() {
        let upper = &relevance[k + 1];
        let lower = match &layers[k] {
            AnalyzedLayer::Relu => upper.clone(),
            AnalyzedLayer::MaxPool(p) => {
                let winners = activations.argmax[k].as_deref().ok_or_else(|| {
                    LrpError::Parameter(format!("no cached pooling winners for layer {k}"))
                })?;
                relevance_maxpool(p, activations.values[k].len(), winners, upper)?
            }
            AnalyzedLayer::Conv(c) => {
                linear_index -= 1;
                let g = net.conv_geometry(k);
                relevance_conv(&g, &c.weights, c.out_channels, upper, plan.rule_for(linear_index))?
            }
            AnalyzedLayer::Dense(d) => {
                linear_index -= 1;
                match plan.rule_for(linear_index) {
                    Rule::Flat => relevance_dense_flat(d.inputs, upper)?,
                    Rule::WSquare => relevance_dense_wsquare(&d.weights, d.inputs, d.units, upper)?,
                }
            }
        };
        relevance[k] = lower;
    }
    Ok(relevance)
}

/// Seeds the output with the target logit (one-hot) and propagates it to
/// the input. Softmax is not part of the analyzed network.
pub fn explain(
    net: &AnalyzableNetwork,
    input: &[f64],
    target: usize,
    plan: &RulePlan,
) -> Result<Explanation, LrpError> {
    if target >= net.num_outputs() {
        return Err(LrpError::Parameter(format!(
            "target {target} out of range for {} outputs",
            net.num_outputs()
        )));
    }
    let acts = net.forward(input)?;
    let logits = acts.logits().to_vec();
    let mut seed = vec![0.0; logits.len()];
    seed[target] = logits[target];
    let relevance = propagate(net, &acts, seed, plan)?;
    Ok(Explanation {
        target,
        logits,
        relevance,
    })
}

/// Channel-summed input relevance, normalized by its maximum magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, max |value| = 1 unless the map is identically zero.
    pub values: Vec<f64>,
    /// Divisor applied during normalization; 0 for a zero map.
    pub scale: f64,
    pub target: usize,
    pub rule: RulePlan,
    pub source: String,
}

impl RelevanceMap {
    /// Sums the channels of an HWC relevance tensor and normalizes.
    pub fn from_input_relevance(
        shape: [usize; 3],
        relevance: &[f64],
        target: usize,
        rule: RulePlan,
        source: impl Into<String>,
    ) -> Result<Self, LrpError> {
        let [h, w, c] = shape;
        if relevance.len() != h * w * c {
            return Err(LrpError::Parameter("relevance does not match the input shape".into()));
        }
        let summed = relevance.chunks_exact(c).map(|px| px.iter().sum()).collect();
        Self::normalized(h, w, summed, target, rule, source.into())
    }

    fn normalized(
        height: usize,
        width: usize,
        mut values: Vec<f64>,
        target: usize,
        rule: RulePlan,
        source: String,
    ) -> Result<Self, LrpError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LrpError::Parameter("relevance contains non-finite values".into()));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            for v in &mut values {
                *v /= scale;
            }
        }
        Ok(Self {
            height,
            width,
            values,
            scale,
            target,
            rule,
            source,
        })
    }

    /// Values before normalization.
    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.scale).collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
    }
}

/// Relevance map of one feature image for class `target`.
pub fn analyze(
    net: &AnalyzableNetwork,
    image: &FeatureImage,
    target: usize,
    plan: &RulePlan,
) -> Result<RelevanceMap, LrpError> {
    if image.shape() != net.input_shape() {
        return Err(LrpError::Parameter(format!(
            "image {:?} does not fit network input {:?}",
            image.shape(),
            net.input_shape()
        )));
    }
    let input: Vec<f64> = image.pixels().iter().map(|&p| p as f64).collect();
    let e = explain(net, &input, target, plan)?;
    RelevanceMap::from_input_relevance(net.input_shape(), e.input(), target, plan.clone(), "sample")
}

/// Pixel-wise mean of the unnormalized maps, normalized again.
pub fn average_maps(maps: &[RelevanceMap], class: usize) -> Result<RelevanceMap, LrpError> {
    let first = maps
        .first()
        .ok_or_else(|| LrpError::Parameter("no maps to average".into()))?;
    for m in maps {
        if m.target != class {
            return Err(LrpError::Parameter(format!(
                "map for class {} in an average for class {class}",
                m.target
            )));
        }
        if m.rule != first.rule {
            return Err(LrpError::Parameter(format!("mixed rules {} and {}", first.rule, m.rule)));
        }
        if (m.height, m.width) != (first.height, first.width) {
            return Err(LrpError::Parameter("maps differ in size".into()));
        }
    }
    let mut sum = vec![0.0; first.values.len()];
    for m in maps {
        for (s, v) in sum.iter_mut().zip(&m.values) {
            *s += v * m.scale;
        }
    }
    let n = maps.len() as f64;
    for s in &mut sum {
        *s /= n;
    }
    RelevanceMap::normalized(
        first.height,
        first.width,
        sum,
        class,
        first.rule.clone(),
        CLASS_AVERAGE.into(),
    )
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Diverging palette: −1 blue, 0 white, +1 red, linear in between.
pub fn diverging_color(v: f64) -> [f64; 3] {
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        [1.0, 1.0 - v, 1.0 - v]
    } else {
        [1.0 + v, 1.0 + v, 1.0]
    }
}

/// Alpha-blends the colored map over the grayscale spectrogram.
pub fn overlay(map: &RelevanceMap, image: &FeatureImage, alpha: f64) -> Result<RgbImage, LrpError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LrpError::Parameter(format!("alpha {alpha} outside [0, 1]")));
    }
    if (map.height, map.width) != (image.side(), image.side()) {
        return Err(LrpError::Parameter("map and image differ in size".into()));
    }
    let gray = image.gray();
    let mut pixels = Vec::with_capacity(gray.len() * 3);
    for (&g, &v) in gray.iter().zip(&map.values) {
        let color = diverging_color(v);
        for c in color {
            let blended = alpha * c + (1.0 - alpha) * g as f64;
            pixels.push((blended * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(RgbImage {
        width: map.width,
        height: map.height,
        pixels,
    })
}
