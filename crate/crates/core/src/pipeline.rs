//! File-based pipeline stages behind the command-line tool. Every stage
//! reads its inputs from the output directory (or configured paths), writes
//! its artifacts atomically and records a manifest of content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::AreaMap;
use crate::ingest::{build_panel, parse_lbs_csv, write_lbs_csv, PanelFilter, PanelSidecar, StudyWindow};
use crate::metrics::privacy::{
    min_dist_distribution, privacy_criterion_check, write_cutoff_table, write_qq, MinDistMode, DEFAULT_DELTAS,
};
use crate::metrics::utility::{
    evaluate_utility, make_baselines, week_change_baseline, write_pmfs, write_utility_table, UtilityOptions,
};
use crate::nn::{ContextMode, ModelCheckpoint, ModelConfig};
use crate::runtime::{draw_sample, generate_sample, train_with_hook, GenerationRequest, TrainConfig};
use crate::trajectory::{
    build_stay_trajectories, label_trajectories, read_trajectories, write_trajectories, LabeledTrajectory, Token,
    TokenVocab,
};
use crate::worldsim::{simulate_world, write_ground_truth, WorldConfig};

pub const RECORDS: &str = "records.csv";
pub const AREA_MAP: &str = "area_map.json";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const PANEL_RECORDS: &str = "panel_records.csv";
pub const PANEL_SIDECAR: &str = "panel.json";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const VOCAB: &str = "vocab.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const REAL_SAMPLE: &str = "sample_s.csv";
pub const SYNTHETIC: &str = "synthetic_s1.csv";
pub const SYNTHETIC_SECOND: &str = "synthetic_s2.csv";
pub const GENERATION_META: &str = "generation.json";
pub const UTILITY_REPORT: &str = "utility_report.json";
pub const UTILITY_TABLE: &str = "utility_table.csv";
pub const TRIP_PMFS: &str = "pmf_trip_distance.csv";
pub const LOCATION_PMFS: &str = "pmf_locations_per_user.csv";
pub const PRIVACY_REPORT: &str = "privacy_report.json";
pub const PRIVACY_CUTOFFS: &str = "privacy_cutoffs.csv";
pub const QQ_SYNTHETIC: &str = "qq_synthetic.csv";
pub const QQ_SECOND: &str = "qq_synthetic_self.csv";
pub const PLOTS_DIR: &str = "plots";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Ingest,
    Build,
    Train,
    Generate,
    EvalUtility,
    EvalPrivacy,
    ExportPlots,
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ingest => "ingest",
            Command::Build => "build",
            Command::Train => "train",
            Command::Generate => "generate",
            Command::EvalUtility => "eval-utility",
            Command::EvalPrivacy => "eval-privacy",
            Command::ExportPlots => "export-plots",
            Command::Pipeline => "pipeline",
        }
    }
}

/// Model hyperparameters; the vocabulary size comes from the built vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub embedding_size: usize,
    pub layer_size: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub max_length: usize,
    pub context: ContextMode,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let c = ModelConfig::with_vocab(1);
        ModelSpec {
            embedding_size: c.embedding_size,
            layer_size: c.layer_size,
            n_layers: c.n_layers,
            dropout: c.dropout,
            max_length: c.max_length,
            context: c.context,
            seed: c.seed,
        }
    }
}

impl ModelSpec {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embedding_size: self.embedding_size,
            layer_size: self.layer_size,
            n_layers: self.n_layers,
            dropout: self.dropout,
            max_length: self.max_length,
            context: self.context,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Reuse the label pairs of a real sample drawn from the built trajectories.
    MatchSample,
    /// CSV with a `home,work` header and one token pair per line.
    PairsFile(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub source: PairSource,
    /// Size of the real sample S.
    pub sample_size: usize,
    pub sample_seed: u64,
    pub temperature: f64,
    /// Seed of the first synthetic sample S′.
    pub seed: u64,
    /// Seed of the second synthetic sample S″.
    pub second_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            source: PairSource::MatchSample,
            sample_size: 500,
            sample_seed: 1,
            temperature: 1.0,
            seed: 2,
            second_seed: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub deltas: Vec<f64>,
    pub trip_bins: usize,
    pub quantiles: usize,
    pub alpha: f64,
    pub baseline_seed: u64,
    /// Start of a second study window over the same records, for the
    /// week-to-week label change baseline.
    pub second_week_start: Option<NaiveDateTime>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let u = UtilityOptions::default();
        EvaluationConfig {
            deltas: DEFAULT_DELTAS.to_vec(),
            trip_bins: u.trip_bins,
            quantiles: u.quantiles,
            alpha: u.alpha,
            baseline_seed: 4,
            second_week_start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotSource {
    Real,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotConfig {
    pub source: PlotSource,
    pub indices: Vec<usize>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig { source: PlotSource::Real, indices: vec![0, 1, 2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Input LBS CSV; defaults to the simulated records in `out_dir`.
    pub records: Option<PathBuf>,
    /// Area map JSON; defaults to the simulated map in `out_dir`.
    pub area_map: Option<PathBuf>,
    pub world: WorldConfig,
    pub window: StudyWindow,
    pub filter: PanelFilter,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub generation: GenerationConfig,
    pub evaluation: EvaluationConfig,
    pub plots: PlotConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            records: None,
            area_map: None,
            window: StudyWindow::work_week(NaiveDate::from_ymd_opt(2018, 5, 7).expect("valid date")),
            world,
            filter: PanelFilter::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            generation: GenerationConfig::default(),
            evaluation: EvaluationConfig::default(),
            plots: PlotConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.train.validate()?;
        self.model.with_vocab(2).validate()?;
        let g = &self.generation;
        if !(g.temperature.is_finite() && g.temperature >= 0.0) {
            return Err(Error::Config(format!("temperature {} must be finite and non-negative", g.temperature)));
        }
        if let Some(d) = self.evaluation.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(Error::Config(format!("delta {d} outside (0, 1)")));
        }
        Ok(())
    }

    fn records_path(&self) -> PathBuf {
        self.records.clone().unwrap_or_else(|| self.out_dir.join(RECORDS))
    }

    fn area_map_path(&self) -> PathBuf {
        self.area_map.clone().unwrap_or_else(|| self.out_dir.join(AREA_MAP))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Provenance of one command run. Contains no wall-clock data, so identical
/// runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn render(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Collects inputs and outputs of a stage while it runs.
struct Stage<'a> {
    config: &'a PipelineConfig,
    manifest: Manifest,
}

impl<'a> Stage<'a> {
    fn new(command: Command, config: &'a PipelineConfig) -> Result<Self> {
        Ok(Stage {
            config,
            manifest: Manifest {
                command: command.name().to_owned(),
                version: env!("CARGO_PKG_VERSION").to_owned(),
                config_sha256: sha256_hex(&serde_json::to_vec(config)?),
                seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_owned(), seed);
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.manifest.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.config.path(name), bytes)?;
        self.manifest.outputs.insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    fn read_trajectories(&mut self, name: &str) -> Result<Vec<LabeledTrajectory>> {
        let bytes = self.read(&self.config.path(name))?;
        read_trajectories(bytes.as_slice())
    }

    fn read_vocab(&mut self) -> Result<TokenVocab> {
        let bytes = self.read(&self.config.path(VOCAB))?;
        TokenVocab::from_json(&String::from_utf8_lossy(&bytes))
    }

    fn read_map(&mut self) -> Result<AreaMap> {
        let bytes = self.read(&self.config.area_map_path())?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn finish(self, command: Command) -> Result<Manifest> {
        let name = format!("manifest_{}.json", command.name());
        write_atomic(&self.config.path(&name), &json_bytes(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

pub fn simulate(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::Simulate, config)?;
    stage.seed("world", config.world.seed);
    let world = simulate_world(&config.world)?;
    stage.write(RECORDS, &render(|b| write_lbs_csv(b, &world.records))?)?;
    stage.write(AREA_MAP, &json_bytes(&world.map)?)?;
    stage.write(GROUND_TRUTH, &render(|b| write_ground_truth(b, &world.agents))?)?;
    stage.finish(Command::Simulate)
}

pub fn ingest(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::Ingest, config)?;
    let map = stage.read_map()?;
    let raw = stage.read(&config.records_path())?;
    let parsed = parse_lbs_csv(raw.as_slice())?;
    if parsed.skipped > 0 {
        log::warn!("skipped {} malformed record rows", parsed.skipped);
    }
    let panel = build_panel(&parsed.records, config.window, &map, config.filter)?;
    log::info!("panel keeps {} of {} devices", panel.device_count(), panel.stats.devices_seen);
    let records: Vec<_> = panel.records().cloned().collect();
    stage.write(PANEL_RECORDS, &render(|b| write_lbs_csv(b, &records))?)?;
    stage.write(PANEL_SIDECAR, &json_bytes(&PanelSidecar::of(&panel, parsed.skipped))?)?;
    stage.finish(Command::Ingest)
}

pub fn build(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::Build, config)?;
    let map = stage.read_map()?;
    let sidecar: PanelSidecar = serde_json::from_slice(&stage.read(&config.path(PANEL_SIDECAR))?)?;
    let records = parse_lbs_csv(stage.read(&config.path(PANEL_RECORDS))?.as_slice())?.records;
    let panel = sidecar.restore(records);
    let vocab = TokenVocab::from_map(&map);
    let set = label_trajectories(&build_stay_trajectories(&panel, &map), &vocab)?;
    log::info!(
        "{} labelled trajectories ({} without home, {} without work)",
        set.trajectories.len(),
        set.dropped_no_home,
        set.dropped_no_work
    );
    stage.write(TRAJECTORIES, &render(|b| write_trajectories(b, &set.trajectories))?)?;
    stage.write(VOCAB, format!("{}\n", vocab.to_json()?).as_bytes())?;
    stage.finish(Command::Build)
}

pub fn train(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::Train, config)?;
    stage.seed("model_init", config.model.seed);
    stage.seed("training", config.train.seed);
    let vocab = stage.read_vocab()?;
    let data = stage.read_trajectories(TRAJECTORIES)?;
    let sequences: Vec<_> = data.iter().map(LabeledTrajectory::prefixed).collect();
    let model = config.model.with_vocab(vocab.size());
    let ckpt = train_with_hook(&sequences, &model, &config.train, |partial| {
        let name = format!("model_epoch{:04}.ckpt", partial.meta.epochs_run);
        write_atomic(&config.path(&name), &partial.to_bytes())
    })?;
    stage.write(CHECKPOINT, &ckpt.to_bytes())?;
    stage.finish(Command::Train)
}

pub fn read_pairs(bytes: &[u8]) -> Result<Vec<(Token, Token)>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let mut pairs = Vec::new();
    for row in reader.deserialize::<(Token, Token)>() {
        pairs.push(row?);
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub checkpoint_sha256: String,
    pub temperature: f64,
    pub seed: u64,
    pub second_seed: u64,
    pub n_pairs: usize,
}

pub fn generate(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::Generate, config)?;
    let g = &config.generation;
    stage.seed("generation", g.seed);
    stage.seed("generation_second", g.second_seed);
    let ckpt_bytes = stage.read(&config.path(CHECKPOINT))?;
    let ckpt = ModelCheckpoint::read_from(ckpt_bytes.as_slice())?;
    let pairs = match &g.source {
        PairSource::MatchSample => {
            stage.seed("sample", g.sample_seed);
            let data = stage.read_trajectories(TRAJECTORIES)?;
            let s = draw_sample(&data, g.sample_size.min(data.len()), g.sample_seed)?;
            stage.write(REAL_SAMPLE, &render(|b| write_trajectories(b, &s))?)?;
            s.iter().map(LabeledTrajectory::label).collect()
        }
        PairSource::PairsFile(path) => read_pairs(&stage.read(path)?)?,
    };
    let request = |seed| GenerationRequest { pairs: pairs.clone(), temperature: g.temperature, seed };
    let first = generate_sample(&ckpt, &request(g.seed))?;
    stage.write(SYNTHETIC, &render(|b| write_trajectories(b, &first))?)?;
    let second = generate_sample(&ckpt, &request(g.second_seed))?;
    stage.write(SYNTHETIC_SECOND, &render(|b| write_trajectories(b, &second))?)?;
    let meta = GenerationMeta {
        checkpoint_sha256: sha256_hex(&ckpt_bytes),
        temperature: g.temperature,
        seed: g.seed,
        second_seed: g.second_seed,
        n_pairs: pairs.len(),
    };
    stage.write(GENERATION_META, &json_bytes(&meta)?)?;
    stage.finish(Command::Generate)
}

pub fn eval_utility(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::EvalUtility, config)?;
    let e = &config.evaluation;
    stage.seed("baselines", e.baseline_seed);
    let map = stage.read_map()?;
    let vocab = stage.read_vocab()?;
    let d = stage.read_trajectories(TRAJECTORIES)?;
    let s = stage.read_trajectories(REAL_SAMPLE)?;
    let synthetic = stage.read_trajectories(SYNTHETIC)?;
    let labels: Vec<_> = s.iter().map(LabeledTrajectory::label).collect();
    let length = d.first().map_or(config.window.n_hours, |t| t.body.len());
    let baselines = make_baselines(&d, &labels, vocab.size(), length, e.baseline_seed)?;
    let options = UtilityOptions {
        trip_bins: e.trip_bins,
        quantiles: e.quantiles,
        alpha: e.alpha,
        first_hour: config.window.first_hour_of_day(),
    };
    let samples: [(&str, &[LabeledTrajectory]); 3] =
        [("synthetic", &synthetic), ("secondary_real", &baselines.secondary), ("random", &baselines.random)];
    let mut report = evaluate_utility(&d, &s, &samples, &map, &vocab, &options)?;
    if let Some(start) = e.second_week_start {
        let window = StudyWindow::new(start, config.window.n_hours)?;
        let raw = stage.read(&config.records_path())?;
        let records = parse_lbs_csv(raw.as_slice())?.records;
        let panel = build_panel(&records, window, &map, config.filter)?;
        let week2 = label_trajectories(&build_stay_trajectories(&panel, &map), &vocab)?;
        report.week_change = Some(week_change_baseline(&d, &week2.trajectories)?);
    }
    stage.write(UTILITY_REPORT, &json_bytes(&report)?)?;
    stage.write(UTILITY_TABLE, &render(|b| write_utility_table(b, &report))?)?;
    stage.write(TRIP_PMFS, &render(|b| write_pmfs(b, &report.trip_distance_pmfs))?)?;
    stage.write(LOCATION_PMFS, &render(|b| write_pmfs(b, &report.locations_per_user_pmfs))?)?;
    stage.finish(Command::EvalUtility)
}

pub fn eval_privacy(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::EvalPrivacy, config)?;
    let d = stage.read_trajectories(TRAJECTORIES)?;
    let s = stage.read_trajectories(REAL_SAMPLE)?;
    let first = stage.read_trajectories(SYNTHETIC)?;
    let second = stage.read_trajectories(SYNTHETIC_SECOND)?;
    let report = privacy_criterion_check(
        min_dist_distribution(&s, &d, MinDistMode::SVsD)?,
        min_dist_distribution(&first, &d, MinDistMode::SprimeVsD)?,
        min_dist_distribution(&second, &first, MinDistMode::SdoubleprimeVsSprime)?,
        &config.evaluation.deltas,
    )?;
    for mode in &report.zero_distance_alarms {
        log::warn!("{}: some trajectory has an exact copy (min-dist 0)", mode.name());
    }
    stage.write(PRIVACY_REPORT, &json_bytes(&report)?)?;
    stage.write(PRIVACY_CUTOFFS, &render(|b| write_cutoff_table(b, &report))?)?;
    stage.write(QQ_SYNTHETIC, &render(|b| write_qq(b, &report.qq_sprime))?)?;
    stage.write(QQ_SECOND, &render(|b| write_qq(b, &report.qq_sdoubleprime))?)?;
    stage.finish(Command::EvalPrivacy)
}

/// One plot row: an hour with data, its area token and the share of the
/// device's non-null hours spent in that area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub hour: usize,
    pub token: Token,
    pub share: f64,
}

pub fn plot_rows(body: &[Token]) -> Vec<PlotRow> {
    let mut counts: BTreeMap<Token, usize> = BTreeMap::new();
    for &t in body.iter().filter(|t| **t != crate::trajectory::NULL_TOKEN) {
        *counts.entry(t).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    body.iter()
        .enumerate()
        .filter(|(_, t)| **t != crate::trajectory::NULL_TOKEN)
        .map(|(hour, &token)| PlotRow { hour, token, share: counts[&token] as f64 / total as f64 })
        .collect()
}

/// Writes `traj_<index>.csv` per selected trajectory; returns the file names.
pub fn export_plot_data(trajectories: &[LabeledTrajectory], selection: &[usize], out_dir: &Path) -> Result<Vec<String>> {
    if let Some(i) = selection.iter().find(|&&i| i >= trajectories.len()) {
        return Err(Error::Config(format!("trajectory {i} selected but only {} exist", trajectories.len())));
    }
    let mut names = Vec::with_capacity(selection.len());
    for &i in selection {
        let bytes = render(|b| {
            let mut w = csv::Writer::from_writer(b);
            for row in plot_rows(&trajectories[i].body) {
                w.serialize(row)?;
            }
            w.flush()?;
            Ok(())
        })?;
        let name = format!("traj_{i:06}.csv");
        write_atomic(&out_dir.join(&name), &bytes)?;
        names.push(name);
    }
    Ok(names)
}

pub fn export_plots(config: &PipelineConfig) -> Result<Manifest> {
    let mut stage = Stage::new(Command::ExportPlots, config)?;
    let name = match config.plots.source {
        PlotSource::Real => TRAJECTORIES,
        PlotSource::Synthetic => SYNTHETIC,
    };
    let trajectories = stage.read_trajectories(name)?;
    let dir = config.path(PLOTS_DIR);
    for file in export_plot_data(&trajectories, &config.plots.indices, &dir)? {
        let rel = format!("{PLOTS_DIR}/{file}");
        let hash = sha256_file(&config.path(&rel))?;
        stage.manifest.outputs.insert(rel, hash);
    }
    stage.finish(Command::ExportPlots)
}

/// Runs one command; `Pipeline` chains every stage in order, simulating the
/// world only when no input records are configured.
pub fn run(command: Command, config: &PipelineConfig) -> Result<Vec<Manifest>> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let one = |m: Result<Manifest>| m.map(|m| vec![m]);
    match command {
        Command::Simulate => one(simulate(config)),
        Command::Ingest => one(ingest(config)),
        Command::Build => one(build(config)),
        Command::Train => one(train(config)),
        Command::Generate => one(generate(config)),
        Command::EvalUtility => one(eval_utility(config)),
        Command::EvalPrivacy => one(eval_privacy(config)),
        Command::ExportPlots => one(export_plots(config)),
        Command::Pipeline => {
            let mut out = Vec::new();
            if config.records.is_none() {
                out.push(simulate(config)?);
            }
            for stage in [ingest, build, train, generate, eval_utility, eval_privacy, export_plots] {
                out.push(stage(config)?);
            }
            Ok(out)
        }
    }
}

/// Reads a JSON config file; a missing path yields the defaults.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))?;
            Ok(serde_json::from_reader(BufReader::new(file))?)
        }
    }
}
