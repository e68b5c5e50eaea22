pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod formats;
pub mod lrp;
pub mod nn;
pub mod rng;
pub mod synth;
