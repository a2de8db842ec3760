//! Training over prefixed sequences and label-conditioned generation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    forward_logits, loss_and_gradients_runs, AdamConfig, AdamState, ContextMode, Mode, ModelCheckpoint,
    ModelConfig, ModelRng, Parameters, Run, StreamState, TrainingMeta,
};
use crate::trajectory::{LabeledTrajectory, PrefixedSequence, Token, NULL_TOKEN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Prediction targets per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Call the checkpoint hook every this many epochs.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Rescale the batch gradient to at most this global L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 1024,
            learning_rate: 1e-3,
            seed: 0,
            checkpoint_every: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// A group of prediction targets that share one forward run.
struct RunSpec {
    seq: usize,
    start: usize,
    targets: Vec<usize>,
}

/// Splits an epoch into batches of runs.
///
/// Windowed: every position `p >= 1` of every sequence is one example whose
/// window is the up-to-`max_length` tokens before it; examples are shuffled
/// individually and examples sharing a window start within a batch share a run.
/// Streaming: whole sequences are shuffled and each one is a single run.
fn epoch_batches(
    sequences: &[PrefixedSequence],
    cfg: &ModelConfig,
    batch_size: usize,
    rng: &mut ModelRng,
) -> Vec<Vec<RunSpec>> {
    let len = sequences[0].len();
    match cfg.context {
        ContextMode::Windowed => {
            let mut examples: Vec<(usize, usize)> = (0..sequences.len())
                .flat_map(|s| (1..len).map(move |p| (s, p)))
                .collect();
            examples.shuffle(rng);
            examples
                .chunks(batch_size)
                .map(|chunk| {
                    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
                    for &(s, p) in chunk {
                        groups.entry((s, p.saturating_sub(cfg.max_length))).or_default().push(p);
                    }
                    groups
                        .into_iter()
                        .map(|((seq, start), targets)| RunSpec { seq, start, targets })
                        .collect()
                })
                .collect()
        }
        ContextMode::Streaming => {
            let mut order: Vec<usize> = (0..sequences.len()).collect();
            order.shuffle(rng);
            let per_batch = ((batch_size as f64 / (len - 1) as f64).round() as usize).max(1);
            order
                .chunks(per_batch)
                .map(|chunk| {
                    chunk
                        .iter()
                        .map(|&seq| RunSpec { seq, start: 0, targets: (1..len).collect() })
                        .collect()
                })
                .collect()
        }
    }
}

fn validate_sequences(sequences: &[PrefixedSequence], cfg: &ModelConfig) -> Result<usize> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::Config("training needs at least one sequence".into()))?;
    let len = first.len();
    if len < 2 {
        return Err(Error::Config("sequences need at least two tokens".into()));
    }
    if let Some(bad) = sequences.iter().find(|s| s.len() != len) {
        return Err(Error::Config(format!("sequence lengths differ: {} vs {len}", bad.len())));
    }
    if let Some(t) = sequences
        .iter()
        .flat_map(|s| s.tokens())
        .find(|&&t| t as usize >= cfg.vocab_size)
    {
        return Err(Error::Vocabulary(format!("token {t} outside vocabulary of {}", cfg.vocab_size)));
    }
    Ok(len)
}

pub fn train(
    sequences: &[PrefixedSequence],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<ModelCheckpoint> {
    train_with_hook(sequences, model_config, train_config, |_| Ok(()))
}

/// Trains from a fresh initialization. `hook` receives the intermediate
/// checkpoint every `checkpoint_every` epochs.
pub fn train_with_hook(
    sequences: &[PrefixedSequence],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut hook: impl FnMut(&ModelCheckpoint) -> Result<()>,
) -> Result<ModelCheckpoint> {
    train_config.validate()?;
    let mut params = Parameters::init(model_config)?;
    let len = validate_sequences(sequences, model_config)?;
    let adam_cfg = AdamConfig::with_learning_rate(train_config.learning_rate);
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = ModelRng::seed_from_u64(train_config.seed);
    let mut dropout_rng = ModelRng::seed_from_u64(train_config.seed);
    dropout_rng.set_stream(1);
    let mut meta = TrainingMeta {
        epochs_run: 0,
        final_loss: None,
        epoch_losses: Vec::new(),
        seed: train_config.seed,
        sequence_length: len,
    };

    for epoch in 0..train_config.epochs {
        let batches = epoch_batches(sequences, model_config, train_config.batch_size, &mut shuffle_rng);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for batch in &batches {
            let runs: Vec<Run<'_>> = batch
                .iter()
                .map(|spec| {
                    let seq = sequences[spec.seq].tokens();
                    let end = *spec.targets.iter().max().expect("non-empty group");
                    Run {
                        tokens: &seq[spec.start..end],
                        targets: spec.targets.iter().map(|&p| (p - 1 - spec.start, seq[p])).collect(),
                        span: model_config.max_length,
                    }
                })
                .collect();
            let n_targets: usize = runs.iter().map(|r| r.targets.len()).sum();
            let mode = if model_config.dropout > 0.0 { Mode::Train(&mut dropout_rng) } else { Mode::Eval };
            let (loss, mut grads) = loss_and_gradients_runs(&params, &runs, mode)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss became {loss} in epoch {}", epoch + 1)));
            }
            if let Some(max_norm) = train_config.clip_norm {
                let norm = grads.l2_norm();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            adam.step(&mut params, &grads, &adam_cfg)?;
            loss_sum += loss * n_targets as f64;
            count += n_targets;
        }
        let epoch_loss = loss_sum / count as f64;
        log::info!("epoch {}/{}: mean loss {epoch_loss:.5}", epoch + 1, train_config.epochs);
        meta.epochs_run = epoch + 1;
        meta.final_loss = Some(epoch_loss);
        meta.epoch_losses.push(epoch_loss);
        if train_config.checkpoint_every.is_some_and(|k| (epoch + 1) % k == 0) {
            hook(&ModelCheckpoint { params: params.clone(), meta: meta.clone() })?;
        }
    }
    Ok(ModelCheckpoint { params, meta })
}

/// Samples from `softmax(logits / temperature)`; a temperature of 0 means greedy.
pub fn sample_token(logits: &[f64], temperature: f64, rng: &mut ModelRng) -> Token {
    if temperature == 0.0 {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return best as Token;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.r#gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as Token;
        }
        u -= w;
    }
    (weights.len() - 1) as Token
}

fn check_label(cfg: &ModelConfig, token: Token) -> Result<()> {
    if token == NULL_TOKEN || token as usize >= cfg.vocab_size {
        return Err(Error::Vocabulary(format!("label token {token} is null or outside the vocabulary")));
    }
    Ok(())
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature {temperature} must be finite and non-negative")))
    }
}

/// Completes `[home, work]` into a trajectory of the checkpoint's length.
pub fn generate_trajectory(
    checkpoint: &ModelCheckpoint,
    home: Token,
    work: Token,
    temperature: f64,
    rng: &mut ModelRng,
) -> Result<Vec<Token>> {
    let params = &checkpoint.params;
    let cfg = &params.config;
    check_label(cfg, home)?;
    check_label(cfg, work)?;
    check_temperature(temperature)?;
    let length = checkpoint.meta.trajectory_length();
    let mut body = Vec::with_capacity(length);
    match cfg.context {
        ContextMode::Windowed => {
            let mut context = vec![home, work];
            while body.len() < length {
                let from = context.len().saturating_sub(cfg.max_length);
                let logits = forward_logits(params, &context[from..], Mode::Eval)?;
                let next = sample_token(&logits, temperature, rng);
                context.push(next);
                body.push(next);
            }
        }
        ContextMode::Streaming => {
            let mut state = StreamState::new(cfg);
            state.push(params, home)?;
            state.push(params, work)?;
            while body.len() < length {
                let next = sample_token(&state.logits(params)?, temperature, rng);
                body.push(next);
                if body.len() < length {
                    state.push(params, next)?;
                }
            }
        }
    }
    Ok(body)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub pairs: Vec<(Token, Token)>,
    pub temperature: f64,
    pub seed: u64,
}

/// One trajectory per requested label pair, in request order. Trajectory `i`
/// draws from its own RNG stream derived from the request seed.
pub fn generate_sample(checkpoint: &ModelCheckpoint, request: &GenerationRequest) -> Result<Vec<LabeledTrajectory>> {
    check_temperature(request.temperature)?;
    for &(h, w) in &request.pairs {
        check_label(checkpoint.config(), h)?;
        check_label(checkpoint.config(), w)?;
    }
    request
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(home, work))| {
            let mut rng = ModelRng::seed_from_u64(request.seed);
            rng.set_stream(i as u64);
            let body = generate_trajectory(checkpoint, home, work, request.temperature, &mut rng)?;
            Ok(LabeledTrajectory { device_id: format!("syn{i:06}"), home, work, body })
        })
        .collect()
}

/// Draws `n` distinct trajectories from `population`, keeping population order.
pub fn draw_sample(population: &[LabeledTrajectory], n: usize, seed: u64) -> Result<Vec<LabeledTrajectory>> {
    if n > population.len() {
        return Err(Error::Config(format!("cannot draw {n} trajectories from {}", population.len())));
    }
    let mut rng = ModelRng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, population.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| population[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(context: ContextMode) -> ModelConfig {
        ModelConfig {
            vocab_size: 6,
            embedding_size: 8,
            layer_size: 16,
            n_layers: 1,
            dropout: 0.0,
            max_length: 8,
            context,
            seed: 1,
        }
    }

    fn corpus() -> Vec<PrefixedSequence> {
        vec![PrefixedSequence(vec![1, 2, 1, 1, 2, 2, 3, 0, 4, 5, 1, 1]); 3]
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = tiny(ContextMode::Windowed);
        let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let ckpt = train(&corpus(), &cfg, &tc).unwrap();
        assert_eq!(ckpt.params, Parameters::init(&cfg).unwrap());
        assert_eq!(ckpt.meta.final_loss, None);
        assert_eq!(ckpt.meta.trajectory_length(), 10);
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        for context in [ContextMode::Windowed, ContextMode::Streaming] {
            let cfg = ModelConfig { dropout: 0.1, ..tiny(context) };
            let tc = TrainConfig { epochs: 15, batch_size: 8, learning_rate: 0.01, seed: 4, ..TrainConfig::default() };
            let a = train(&corpus(), &cfg, &tc).unwrap();
            let b = train(&corpus(), &cfg, &tc).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
            let losses = &a.meta.epoch_losses;
            assert!(losses.last().unwrap() < &losses[0], "{context:?} {losses:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = tiny(ContextMode::Windowed);
        assert!(train(&[], &cfg, &TrainConfig::default()).is_err());
        let ragged = vec![PrefixedSequence(vec![1, 2, 3]), PrefixedSequence(vec![1, 2])];
        assert!(train(&ragged, &cfg, &TrainConfig::default()).is_err());
        let oov = vec![PrefixedSequence(vec![1, 2, 9])];
        assert!(matches!(train(&oov, &cfg, &TrainConfig::default()), Err(Error::Vocabulary(_))));
        let tc = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(train(&corpus(), &cfg, &tc).is_err());
    }

    #[test]
    fn checkpoint_hook_cadence() {
        let cfg = tiny(ContextMode::Streaming);
        let tc = TrainConfig { epochs: 6, batch_size: 16, checkpoint_every: Some(2), ..TrainConfig::default() };
        let mut seen = Vec::new();
        train_with_hook(&corpus(), &cfg, &tc, |c| {
            seen.push(c.meta.epochs_run);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![2, 4, 6]);
    }

    #[test]
    fn generation_contract() {
        for context in [ContextMode::Windowed, ContextMode::Streaming] {
            let cfg = tiny(context);
            let tc = TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() };
            let ckpt = train(&corpus(), &cfg, &tc).unwrap();
            let mut rng = ModelRng::seed_from_u64(3);
            let body = generate_trajectory(&ckpt, 1, 2, 1.0, &mut rng).unwrap();
            assert_eq!(body.len(), 10);
            assert!(body.iter().all(|&t| (t as usize) < 6));
            let g1 = generate_trajectory(&ckpt, 1, 2, 0.0, &mut ModelRng::seed_from_u64(1)).unwrap();
            let g2 = generate_trajectory(&ckpt, 1, 2, 0.0, &mut ModelRng::seed_from_u64(2)).unwrap();
            assert_eq!(g1, g2);
            assert!(generate_trajectory(&ckpt, 0, 2, 1.0, &mut rng).is_err());
            assert!(generate_trajectory(&ckpt, 1, 6, 1.0, &mut rng).is_err());
            assert!(generate_trajectory(&ckpt, 1, 2, -1.0, &mut rng).is_err());
        }
    }

    #[test]
    fn sample_generation_preserves_labels() {
        let cfg = tiny(ContextMode::Streaming);
        let ckpt = train(&corpus(), &cfg, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap();
        let empty = GenerationRequest { pairs: vec![], temperature: 1.0, seed: 0 };
        assert!(generate_sample(&ckpt, &empty).unwrap().is_empty());
        let pairs = vec![(1, 2), (3, 3), (5, 1)];
        let req = GenerationRequest { pairs: pairs.clone(), temperature: 1.0, seed: 8 };
        let s1 = generate_sample(&ckpt, &req).unwrap();
        assert_eq!(s1.iter().map(LabeledTrajectory::label).collect::<Vec<_>>(), pairs);
        assert_eq!(s1, generate_sample(&ckpt, &req).unwrap());
        let s2 = generate_sample(&ckpt, &GenerationRequest { seed: 9, ..req }).unwrap();
        assert_ne!(s1, s2);
    }

    #[test]
    fn greedy_sampling_picks_argmax() {
        let mut rng = ModelRng::seed_from_u64(0);
        assert_eq!(sample_token(&[0.1, 2.0, 2.0, -1.0], 0.0, &mut rng), 1);
        let draws: Vec<Token> = (0..200).map(|_| sample_token(&[0.0, 50.0, 0.0], 1.0, &mut rng)).collect();
        assert!(draws.iter().all(|&t| t == 1));
    }

    #[test]
    fn drawn_sample_is_distinct_subset() {
        let pop: Vec<LabeledTrajectory> = (0..20)
            .map(|i| LabeledTrajectory { device_id: format!("d{i:02}"), home: 1, work: 1, body: vec![1] })
            .collect();
        let s = draw_sample(&pop, 5, 3).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.windows(2).all(|w| w[0].device_id < w[1].device_id));
        assert_eq!(s, draw_sample(&pop, 5, 3).unwrap());
        assert!(draw_sample(&pop, 21, 3).is_err());
    }
}
