//! Trains a small model on one repeated 30-token sequence and checks that
//! greedy generation reproduces it from its two-token prefix.

use std::time::Instant;

use staysynth::nn::{ContextMode, ModelConfig, ModelRng};
use staysynth::runtime::{generate_trajectory, train, TrainConfig};
use staysynth::trajectory::PrefixedSequence;

use rand::SeedableRng;

fn main() -> staysynth::Result<()> {
    let tokens: Vec<u32> = (0..30u32).map(|i| 1 + (i * 7 + i / 4) % 9).collect();
    let corpus = vec![PrefixedSequence(tokens.clone()); 4];
    let model = ModelConfig {
        vocab_size: 10,
        embedding_size: 16,
        layer_size: 32,
        n_layers: 1,
        dropout: 0.0,
        max_length: 30,
        context: ContextMode::Windowed,
        seed: 3,
    };
    let tc = TrainConfig { epochs: 200, batch_size: 32, learning_rate: 1e-2, seed: 9, ..TrainConfig::default() };

    let t0 = Instant::now();
    let ckpt = train(&corpus, &model, &tc)?;
    let losses = &ckpt.meta.epoch_losses;
    for e in (0..losses.len()).step_by(25).chain([losses.len() - 1]) {
        println!("epoch {:>3}  loss {:.5}", e + 1, losses[e]);
    }
    let body = generate_trajectory(&ckpt, tokens[0], tokens[1], 0.0, &mut ModelRng::seed_from_u64(0))?;
    println!("target    {:?}", &tokens[2..]);
    println!("generated {body:?}");
    println!("reproduced: {}  ({:.1?})", body == tokens[2..], t0.elapsed());
    Ok(())
}
