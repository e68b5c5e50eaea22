use std::fmt;
use std::str::FromStr;

use crate::nn::{ConvGeometry, MaxPool};

use super::LrpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Redistribution proportional to `w²`.
    WSquare,
    /// Uniform redistribution over the contributing inputs.
    Flat,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::WSquare => "wsquare",
            Rule::Flat => "flat",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = LrpError;

    fn from_str(s: &str) -> Result<Self, LrpError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wsquare" | "w2" | "w^2" => Ok(Rule::WSquare),
            "flat" => Ok(Rule::Flat),
            other => Err(LrpError::Parameter(format!("unknown rule {other:?}"))),
        }
    }
}

/// Rule assignment across the linear layers of a network.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RulePlan {
    Uniform(Rule),
    /// One rule per conv/dense layer, in forward order.
    PerLayer(Vec<Rule>),
}

impl RulePlan {
    pub fn rule_for(&self, linear_index: usize) -> Rule {
        match self {
            RulePlan::Uniform(r) => *r,
            RulePlan::PerLayer(rules) => rules[linear_index],
        }
    }

    pub(crate) fn check(&self, linear_layers: usize) -> Result<(), LrpError> {
        match self {
            RulePlan::PerLayer(rules) if rules.len() != linear_layers => Err(LrpError::Parameter(
                format!("{} rules for {linear_layers} linear layers", rules.len()),
            )),
            _ => Ok(()),
        }
    }
}

impl From<Rule> for RulePlan {
    fn from(rule: Rule) -> Self {
        RulePlan::Uniform(rule)
    }
}

impl fmt::Display for RulePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RulePlan::Uniform(r) => f.write_str(r.as_str()),
            RulePlan::PerLayer(rules) => {
                let names: Vec<_> = rules.iter().map(|r| r.as_str()).collect();
                f.write_str(&names.join("+"))
            }
        }
    }
}

/// `"flat"`, `"wsquare"`, or a `+`-separated list of per-layer rules.
impl FromStr for RulePlan {
    type Err = LrpError;

    fn from_str(s: &str) -> Result<Self, LrpError> {
        if s.contains('+') {
            Ok(RulePlan::PerLayer(s.split('+').map(str::parse).collect::<Result<_, _>>()?))
        } else {
            Ok(RulePlan::Uniform(s.parse()?))
        }
    }
}

/// `R_i = Σ_j (w_ij² / Σ_i' w_i'j²) · R_j` for weights stored `inputs × units`.
pub fn relevance_dense_wsquare(
    weights: &[f64],
    inputs: usize,
    units: usize,
    upper: &[f64],
) -> Result<Vec<f64>, LrpError> {
    if weights.len() != inputs * units || upper.len() != units {
        return Err(LrpError::Parameter(format!(
            "{} weights and {} relevances for a {inputs}×{units} layer",
            weights.len(),
            upper.len()
        )));
    }
    let mut column = vec![0.0; units];
    for row in weights.chunks_exact(units) {
        for (s, w) in column.iter_mut().zip(row) {
            *s += w * w;
        }
    }
    let mut ratio = vec![0.0; units];
    for j in 0..units {
        if upper[j] != 0.0 {
            if !(column[j] > 0.0) {
                return Err(LrpError::Degenerate { unit: j });
            }
            ratio[j] = upper[j] / column[j];
        }
    }
    Ok(weights
        .chunks_exact(units)
        .map(|row| row.iter().zip(&ratio).map(|(w, r)| w * w * r).sum())
        .collect())
}

/// Every input of a fully connected layer receives `Σ_j R_j / fan_in`.
pub fn relevance_dense_flat(fan_in: usize, upper: &[f64]) -> Result<Vec<f64>, LrpError> {
    if fan_in == 0 {
        return Err(LrpError::Parameter("fan_in must be positive".into()));
    }
    let share = upper.iter().sum::<f64>() / fan_in as f64;
    Ok(vec![share; fan_in])
}

/// Relevance through a convolution viewed as its unrolled linear map.
/// Only in-bounds taps are connections; zero padding receives nothing.
/// `weights` is `(ky, kx, c_in, c_out)` row-major.
pub fn relevance_conv(
    geometry: &ConvGeometry,
    weights: &[f64],
    out_channels: usize,
    upper: &[f64],
    rule: Rule,
) -> Result<Vec<f64>, LrpError> {
    let g = geometry;
    let cin = g.in_c;
    if weights.len() != g.patch_len() * out_channels || upper.len() != g.positions() * out_channels {
        return Err(LrpError::Parameter("convolution relevance shape mismatch".into()));
    }
    let squared: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let mut lower = vec![0.0; g.input_len()];
    let mut taps: Vec<(usize, usize)> = Vec::with_capacity(g.kernel * g.kernel);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            taps.clear();
            for ky in 0..g.kernel {
                for kx in 0..g.kernel {
                    if let Some((iy, ix)) = g.input_at(oy, ox, ky, kx) {
                        taps.push((ky * g.kernel + kx, (iy * g.in_w + ix) * cin));
                    }
                }
            }
            let pos = oy * g.out_w + ox;
            for co in 0..out_channels {
                let r = upper[pos * out_channels + co];
                if r == 0.0 {
                    continue;
                }
                match rule {
                    Rule::Flat => {
                        let share = r / (taps.len() * cin) as f64;
                        for &(_, base) in &taps {
                            for v in &mut lower[base..base + cin] {
                                *v += share;
                            }
                        }
                    }
                    Rule::WSquare => {
                        let w2 = |k: usize, ci: usize| squared[(k * cin + ci) * out_channels + co];
                        let total: f64 = taps
                            .iter()
                            .map(|&(k, _)| (0..cin).map(|ci| w2(k, ci)).sum::<f64>())
                            .sum();
                        if !(total > 0.0) {
                            return Err(LrpError::Degenerate { unit: pos * out_channels + co });
                        }
                        let ratio = r / total;
                        for &(k, base) in &taps {
                            for ci in 0..cin {
                                lower[base + ci] += w2(k, ci) * ratio;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(lower)
}

/// Winner-take-all: each pooled relevance goes to the input that won its
/// window in the cached forward pass.
pub fn relevance_maxpool(
    _pool: &MaxPool,
    input_len: usize,
    argmax: &[usize],
    upper: &[f64],
) -> Result<Vec<f64>, LrpError> {
    if argmax.len() != upper.len() || argmax.iter().any(|&i| i >= input_len) {
        return Err(LrpError::Parameter("pooling relevance shape mismatch".into()));
    }
    let mut lower = vec![0.0; input_len];
    for (&i, &r) in argmax.iter().zip(upper) {
        lower[i] += r;
    }
    Ok(lower)
}
