//! Desk-scale end-to-end experiment: simulate a world, train one model on
//! its stay trajectories, then for several seeds draw a real sample S,
//! generate S′ and S″ for S's labels and score utility and privacy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{build_panel, PanelFilter, StudyWindow};
use crate::metrics::privacy::{min_dist_distribution, privacy_criterion_check, MinDistMode, PrivacyReport, DEFAULT_DELTAS};
use crate::metrics::utility::{evaluate_utility, make_baselines, UtilityOptions, UtilityReport};
use crate::nn::{ContextMode, ModelCheckpoint};
use crate::pipeline::ModelSpec;
use crate::runtime::{draw_sample, generate_sample, train, GenerationRequest, TrainConfig};
use crate::trajectory::{build_stay_trajectories, label_trajectories, LabeledTrajectory, TokenVocab};
use crate::worldsim::{simulate_world, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub world: WorldConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub sample_size: usize,
    pub n_seeds: usize,
    pub temperature: f64,
    pub utility: UtilityOptions,
    pub deltas: Vec<f64>,
}

impl Default for DeskConfig {
    fn default() -> Self {
        DeskConfig {
            world: WorldConfig { n_agents: 2000, ..WorldConfig::default() },
            model: ModelSpec {
                embedding_size: 128,
                layer_size: 64,
                n_layers: 2,
                dropout: 0.0,
                max_length: 60,
                context: ContextMode::Streaming,
                seed: 11,
            },
            train: TrainConfig { epochs: 20, batch_size: 128, learning_rate: 2e-3, seed: 12, ..TrainConfig::default() },
            sample_size: 500,
            n_seeds: 10,
            temperature: 1.0,
            utility: UtilityOptions::default(),
            deltas: DEFAULT_DELTAS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub utility: UtilityReport,
    pub privacy: PrivacyReport,
}

#[derive(Clone, Debug)]
pub struct DeskWorld {
    pub vocab: TokenVocab,
    pub map: crate::geo::AreaMap,
    /// Labelled real trajectories D.
    pub data: Vec<LabeledTrajectory>,
}

/// Simulates the world and builds D.
pub fn build_desk_world(world: &WorldConfig) -> Result<DeskWorld> {
    let sim = simulate_world(world)?;
    let window = StudyWindow::new(world.window_start, world.n_days * 24)?;
    let panel = build_panel(&sim.records, window, &sim.map, PanelFilter::default())?;
    let vocab = TokenVocab::from_map(&sim.map);
    let set = label_trajectories(&build_stay_trajectories(&panel, &sim.map), &vocab)?;
    Ok(DeskWorld { vocab, map: sim.map, data: set.trajectories })
}

pub fn train_desk_model(world: &DeskWorld, config: &DeskConfig) -> Result<ModelCheckpoint> {
    let sequences: Vec<_> = world.data.iter().map(LabeledTrajectory::prefixed).collect();
    train(&sequences, &config.model.with_vocab(world.vocab.size()), &config.train)
}

/// Utility and privacy scores of one sampling seed against a trained model.
pub fn evaluate_seed(world: &DeskWorld, ckpt: &ModelCheckpoint, config: &DeskConfig, seed: u64) -> Result<SeedOutcome> {
    let d = &world.data;
    if d.len() < config.sample_size {
        return Err(Error::Config(format!("D has {} trajectories, sample needs {}", d.len(), config.sample_size)));
    }
    let s = draw_sample(d, config.sample_size, seed)?;
    let pairs: Vec<_> = s.iter().map(LabeledTrajectory::label).collect();
    let request = |stream: u64| GenerationRequest {
        pairs: pairs.clone(),
        temperature: config.temperature,
        seed: seed.wrapping_mul(1000).wrapping_add(stream),
    };
    let first = generate_sample(ckpt, &request(1))?;
    let second = generate_sample(ckpt, &request(2))?;
    let baselines = make_baselines(d, &pairs, world.vocab.size(), ckpt.meta.trajectory_length(), seed)?;
    let samples: [(&str, &[LabeledTrajectory]); 3] =
        [("synthetic", &first), ("secondary_real", &baselines.secondary), ("random", &baselines.random)];
    let utility = evaluate_utility(d, &s, &samples, &world.map, &world.vocab, &config.utility)?;
    let privacy = privacy_criterion_check(
        min_dist_distribution(&s, d, MinDistMode::SVsD)?,
        min_dist_distribution(&first, d, MinDistMode::SprimeVsD)?,
        min_dist_distribution(&second, &first, MinDistMode::SdoubleprimeVsSprime)?,
        &config.deltas,
    )?;
    Ok(SeedOutcome { seed, utility, privacy })
}

#[derive(Clone, Debug)]
pub struct DeskExperiment {
    pub world: DeskWorld,
    pub checkpoint: ModelCheckpoint,
    pub outcomes: Vec<SeedOutcome>,
}

pub fn run_desk_experiment(config: &DeskConfig) -> Result<DeskExperiment> {
    let world = build_desk_world(&config.world)?;
    log::info!("D holds {} labelled trajectories", world.data.len());
    let checkpoint = train_desk_model(&world, config)?;
    let outcomes = (0..config.n_seeds as u64)
        .map(|seed| evaluate_seed(&world, &checkpoint, config, seed + 1))
        .collect::<Result<_>>()?;
    Ok(DeskExperiment { world, checkpoint, outcomes })
}
