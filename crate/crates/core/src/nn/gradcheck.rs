use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{loss_and_gradients_runs, ContextMode, Mode, ModelConfig, ModelRng, Parameters, Run};
use crate::error::Result;
use crate::trajectory::Token;

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub epsilon: f64,
    /// Number of independent windows in the batch.
    pub n_windows: usize,
    /// Length of the extra long run whose attention span is limited to
    /// `model.max_length`; 0 disables it.
    pub long_run: usize,
    /// Half-width of the uniform distribution parameters are drawn from.
    pub param_scale: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            model: ModelConfig {
                vocab_size: 10,
                embedding_size: 4,
                layer_size: 8,
                n_layers: 2,
                dropout: 0.0,
                max_length: 6,
                context: ContextMode::Windowed,
                seed: 5,
            },
            epsilon: 1e-4,
            n_windows: 4,
            long_run: 10,
            param_scale: 0.5,
            seed: 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub name: String,
    pub max_relative_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_relative_error).fold(0.0, f64::max)
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares backpropagated gradients with central finite differences on a
/// randomized model and batch. Dropout, if configured, uses the same masks
/// for every loss evaluation.
pub fn gradient_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ModelRng::seed_from_u64(config.seed);
    let mut params = Parameters::zeros(&config.model)?;
    for block in &mut params.blocks {
        for v in &mut block.data {
            *v = rng.gen_range(-config.param_scale..config.param_scale);
        }
    }
    let v = config.model.vocab_size as Token;
    let max_len = config.model.max_length;
    let mut sequences: Vec<(Vec<Token>, Vec<(usize, Token)>, usize)> = Vec::new();
    for _ in 0..config.n_windows {
        let len = rng.gen_range(1..=max_len);
        let tokens = (0..len).map(|_| rng.gen_range(0..v)).collect();
        sequences.push((tokens, vec![(len - 1, rng.gen_range(0..v))], len));
    }
    if config.long_run > 0 {
        let tokens: Vec<Token> = (0..config.long_run).map(|_| rng.gen_range(0..v)).collect();
        let targets = (0..config.long_run).map(|t| (t, rng.gen_range(0..v))).collect();
        sequences.push((tokens, targets, max_len));
    }
    let runs: Vec<Run<'_>> = sequences
        .iter()
        .map(|(tokens, targets, span)| Run { tokens, targets: targets.clone(), span: *span })
        .collect();
    let dropout_seed = rng.r#gen::<u64>();
    let evaluate = |p: &Parameters| -> Result<(f64, Parameters)> {
        if p.config.dropout > 0.0 {
            let mut mask_rng = ModelRng::seed_from_u64(dropout_seed);
            loss_and_gradients_runs(p, &runs, Mode::Train(&mut mask_rng))
        } else {
            loss_and_gradients_runs(p, &runs, Mode::Eval)
        }
    };

    let (_, analytic) = evaluate(&params)?;
    let mut report = GradCheckReport { blocks: Vec::new() };
    for b in 0..params.blocks.len() {
        let mut worst: f64 = 0.0;
        for i in 0..params.blocks[b].len() {
            let original = params.blocks[b].data[i];
            params.blocks[b].data[i] = original + config.epsilon;
            let (plus, _) = evaluate(&params)?;
            params.blocks[b].data[i] = original - config.epsilon;
            let (minus, _) = evaluate(&params)?;
            params.blocks[b].data[i] = original;
            let numeric = (plus - minus) / (2.0 * config.epsilon);
            worst = worst.max(relative_error(analytic.blocks[b].data[i], numeric));
        }
        report.blocks.push(BlockError {
            name: params.blocks[b].name.clone(),
            max_relative_error: worst,
            checked: params.blocks[b].len(),
        });
    }
    Ok(report)
}
