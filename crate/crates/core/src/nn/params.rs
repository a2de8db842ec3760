use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelRng};
use crate::error::{Error, Result};

const INIT_SCALE: f64 = 0.05;

/// A named, shaped parameter tensor stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

impl Block {
    fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Block { name: name.into(), shape, data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All learned tensors, in a fixed order:
/// embedding, then `(weights, bias)` per LSTM layer, attention projection,
/// output weights, output bias.
///
/// LSTM weights are `(input + hidden) x 4·hidden` with gate columns ordered
/// input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub blocks: Vec<Block>,
}

impl Parameters {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (v, e, h) = (config.vocab_size, config.embedding_size, config.layer_size);
        let mut blocks = vec![Block::zeros("embedding", vec![v, e])];
        for l in 0..config.n_layers {
            let input = if l == 0 { e } else { h };
            blocks.push(Block::zeros(format!("lstm{l}.weight"), vec![input + h, 4 * h]));
            blocks.push(Block::zeros(format!("lstm{l}.bias"), vec![4 * h]));
        }
        let c = config.concat_size();
        blocks.push(Block::zeros("attention", vec![c]));
        blocks.push(Block::zeros("output.weight", vec![c, v]));
        blocks.push(Block::zeros("output.bias", vec![v]));
        Ok(Parameters { config: config.clone(), blocks })
    }

    /// Uniform(-0.05, 0.05) weights, zero biases, forget-gate bias 1.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ModelRng::seed_from_u64(config.seed);
        let h = config.layer_size;
        for block in &mut params.blocks {
            if block.name.ends_with("bias") {
                if block.name.starts_with("lstm") {
                    block.data[h..2 * h].fill(1.0);
                }
            } else {
                for w in &mut block.data {
                    *w = rng.gen_range(-INIT_SCALE..INIT_SCALE);
                }
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block { name: b.name.clone(), shape: b.shape.clone(), data: vec![0.0; b.len()] })
            .collect();
        Parameters { config: self.config.clone(), blocks }
    }

    pub fn embedding(&self) -> &[f64] {
        &self.blocks[0].data
    }

    pub fn lstm_weight(&self, layer: usize) -> &[f64] {
        &self.blocks[1 + 2 * layer].data
    }

    pub fn lstm_bias(&self, layer: usize) -> &[f64] {
        &self.blocks[2 + 2 * layer].data
    }

    pub fn attention(&self) -> &[f64] {
        &self.blocks[1 + 2 * self.config.n_layers].data
    }

    pub fn output_weight(&self) -> &[f64] {
        &self.blocks[2 + 2 * self.config.n_layers].data
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.blocks[3 + 2 * self.config.n_layers].data
    }

    pub fn output_weight_mut(&mut self) -> &mut [f64] {
        let idx = 2 + 2 * self.config.n_layers;
        &mut self.blocks[idx].data
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let idx = 3 + 2 * self.config.n_layers;
        &mut self.blocks[idx].data
    }

    pub fn n_values(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    pub fn fill(&mut self, value: f64) {
        for b in &mut self.blocks {
            b.data.fill(value);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            axpy(&mut a.data, scale, &b.data);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_compatible(&self, other: &Parameters) -> Result<()> {
        let same = self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| a.shape == b.shape);
        if same {
            Ok(())
        } else {
            Err(Error::Domain("parameter shapes do not match".into()))
        }
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            embedding_size: 4,
            layer_size: 8,
            n_layers: 2,
            dropout: 0.0,
            max_length: 5,
            context: Default::default(),
            seed: 3,
        }
    }

    #[test]
    fn shapes_follow_config() {
        let p = Parameters::init(&tiny()).unwrap();
        let shapes: Vec<_> = p.blocks.iter().map(|b| (b.name.as_str(), b.shape.clone())).collect();
        assert_eq!(shapes[0], ("embedding", vec![10, 4]));
        assert_eq!(shapes[1], ("lstm0.weight", vec![12, 32]));
        assert_eq!(shapes[3], ("lstm1.weight", vec![16, 32]));
        assert_eq!(shapes[5], ("attention", vec![20]));
        assert_eq!(shapes[6], ("output.weight", vec![20, 10]));
        assert_eq!(shapes[7], ("output.bias", vec![10]));
    }

    #[test]
    fn init_ranges() {
        let p = Parameters::init(&tiny()).unwrap();
        assert!(p.embedding().iter().all(|v| v.abs() < INIT_SCALE));
        let b = p.lstm_bias(0);
        assert!(b[..8].iter().all(|&v| v == 0.0));
        assert!(b[8..16].iter().all(|&v| v == 1.0));
        assert!(p.output_bias().iter().all(|&v| v == 0.0));
        assert_eq!(p, Parameters::init(&tiny()).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let mut c = tiny();
        c.dropout = 1.0;
        assert!(Parameters::zeros(&c).is_err());
        c = tiny();
        c.max_length = 0;
        assert!(Parameters::zeros(&c).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
