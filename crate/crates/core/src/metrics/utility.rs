//! Distributional utility metrics comparing a sample against real data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::AreaMap;
use crate::stats::{chi2_sf, pearson};
use crate::trajectory::{infer_home_tokens, infer_work_tokens, LabeledTrajectory, Token, TokenVocab, NULL_TOKEN};

/// Added to every bin of both distributions before taking a KL divergence.
pub const KL_SMOOTHING: f64 = 1e-9;
pub const DEFAULT_TRIP_BINS: usize = 20;
pub const DEFAULT_QUANTILES: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Discrete probability distribution over labelled bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn from_counts(labels: Vec<String>, counts: &[f64]) -> Result<Self> {
        if labels.len() != counts.len() || counts.is_empty() {
            return Err(Error::Domain(format!("{} labels for {} counts", labels.len(), counts.len())));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Domain("histogram counts must be finite and non-negative".into()));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("histogram is empty".into()));
        }
        Ok(Pmf { labels, probs: counts.iter().map(|c| c / total).collect() })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `Σ p ln(p/q)` in nats after adding `epsilon` to every bin of both and renormalizing.
pub fn kl_divergence_smoothed(p: &Pmf, q: &Pmf, epsilon: f64) -> Result<f64> {
    if p.labels != q.labels {
        return Err(Error::Domain("KL divergence needs identical bins".into()));
    }
    let smooth = |v: &[f64]| -> Vec<f64> {
        let total: f64 = v.iter().map(|x| x + epsilon).sum();
        v.iter().map(|x| (x + epsilon) / total).collect()
    };
    let (ps, qs) = (smooth(&p.probs), smooth(&q.probs));
    let kl: f64 = ps.iter().zip(&qs).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi / qi).ln()).sum();
    Ok(kl.max(0.0))
}

pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    kl_divergence_smoothed(p, q, KL_SMOOTHING)
}

/// Centroid distances between every pair of area tokens.
#[derive(Clone, Debug)]
pub struct DistanceTable {
    size: usize,
    km: Vec<f64>,
}

impl DistanceTable {
    pub fn new(map: &AreaMap, vocab: &TokenVocab) -> Result<Self> {
        let size = vocab.size();
        let mut centroids = vec![(0.0, 0.0); size];
        for (t, c) in centroids.iter_mut().enumerate().skip(1) {
            *c = map.centroid(&vocab.area(t as Token)?)?;
        }
        let mut km = vec![f64::NAN; size * size];
        for a in 1..size {
            for b in 1..size {
                let ((la, oa), (lb, ob)) = (centroids[a], centroids[b]);
                km[a * size + b] = if a == b { 0.0 } else { crate::geo::haversine_km(la, oa, lb, ob) };
            }
        }
        Ok(DistanceTable { size, km })
    }

    pub fn km(&self, a: Token, b: Token) -> Result<f64> {
        let (a, b) = (a as usize, b as usize);
        if a == 0 || b == 0 || a >= self.size || b >= self.size {
            return Err(Error::Domain(format!("no distance between tokens {a} and {b}")));
        }
        Ok(self.km[a * self.size + b])
    }
}

/// Distances of every trip: adjacent, differing, non-null slots.
pub fn trip_distances(body: &[Token], table: &DistanceTable) -> Result<Vec<f64>> {
    body.windows(2)
        .filter(|w| w[0] != w[1] && w[0] != NULL_TOKEN && w[1] != NULL_TOKEN)
        .map(|w| table.km(w[0], w[1]))
        .collect()
}

/// Equal-width histogram over `[0, max_km]`; larger values land in the last bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBins {
    pub n_bins: usize,
    pub max_km: f64,
}

impl DistanceBins {
    /// Range anchored to the longest trip in the reference data.
    pub fn from_reference(reference: &[LabeledTrajectory], table: &DistanceTable, n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let mut max_km: f64 = 0.0;
        for t in reference {
            for d in trip_distances(&t.body, table)? {
                max_km = max_km.max(d);
            }
        }
        Ok(DistanceBins { n_bins, max_km })
    }

    pub fn bin(&self, km: f64) -> usize {
        if self.max_km <= 0.0 {
            return 0;
        }
        ((km / self.max_km * self.n_bins as f64) as usize).min(self.n_bins - 1)
    }

    pub fn labels(&self) -> Vec<String> {
        let w = self.max_km / self.n_bins as f64;
        (0..self.n_bins).map(|i| format!("{:.3}-{:.3}", i as f64 * w, (i + 1) as f64 * w)).collect()
    }
}

pub fn trip_distance_pmf(sample: &[LabeledTrajectory], table: &DistanceTable, bins: &DistanceBins) -> Result<Pmf> {
    let mut counts = vec![0.0; bins.n_bins];
    for t in sample {
        for d in trip_distances(&t.body, table)? {
            counts[bins.bin(d)] += 1.0;
        }
    }
    if counts.iter().all(|c| *c == 0.0) {
        return Err(Error::Degenerate("sample contains no trips".into()));
    }
    Pmf::from_counts(bins.labels(), &counts)
}

/// Number of distinct non-null areas visited.
pub fn locations_per_user(body: &[Token]) -> usize {
    body.iter().filter(|t| **t != NULL_TOKEN).collect::<BTreeSet<_>>().len()
}

pub fn max_locations(reference: &[LabeledTrajectory]) -> usize {
    reference.iter().map(|t| locations_per_user(&t.body)).max().unwrap_or(0).max(1)
}

/// PMF over `1..=max_l`; counts outside the range are clamped to its ends.
pub fn locations_per_user_pmf(sample: &[LabeledTrajectory], max_l: usize) -> Result<Pmf> {
    let max_l = max_l.max(1);
    let mut counts = vec![0.0; max_l];
    for t in sample {
        counts[locations_per_user(&t.body).clamp(1, max_l) - 1] += 1.0;
    }
    Pmf::from_counts((1..=max_l).map(|l| l.to_string()).collect(), &counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileBin {
    /// Inclusive upper bound on L; `None` for the open last bin.
    pub upper: Option<usize>,
    pub expected: f64,
    pub observed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Some expected count fell below 5.
    pub low_expected: bool,
    pub bins: Vec<QuantileBin>,
}

/// Cut points at the nearest-rank quantiles `k/n` of the reference values,
/// deduplicated and excluding the maximum so no bin is empty in the reference.
pub fn quantile_cuts(reference: &[usize], n_quantiles: usize) -> Vec<usize> {
    let mut sorted = reference.to_vec();
    sorted.sort_unstable();
    let Some(&max) = sorted.last() else { return Vec::new() };
    let n = sorted.len();
    let mut cuts: Vec<usize> = (1..n_quantiles)
        .map(|k| sorted[(k * n).div_ceil(n_quantiles).max(1) - 1])
        .filter(|&c| c < max)
        .collect();
    cuts.dedup();
    cuts
}

fn bin_of(cuts: &[usize], value: usize) -> usize {
    cuts.partition_point(|&c| c < value)
}

/// Chi-squared homogeneity of the sample's locations-per-user against bin
/// proportions taken from the reference quantiles.
pub fn chi_squared_homogeneity(
    sample: &[LabeledTrajectory],
    reference: &[LabeledTrajectory],
    n_quantiles: usize,
    alpha: f64,
) -> Result<ChiSquared> {
    let observed: Vec<usize> = sample.iter().map(|t| locations_per_user(&t.body)).collect();
    let reference: Vec<usize> = reference.iter().map(|t| locations_per_user(&t.body)).collect();
    chi_squared_from_values(&observed, &reference, n_quantiles, alpha)
}

pub fn chi_squared_from_values(
    sample: &[usize],
    reference: &[usize],
    n_quantiles: usize,
    alpha: f64,
) -> Result<ChiSquared> {
    if sample.len() < 30 {
        return Err(Error::Domain(format!("chi-squared test needs at least 30 samples, got {}", sample.len())));
    }
    let cuts = quantile_cuts(reference, n_quantiles);
    let n_bins = cuts.len() + 1;
    if n_bins < 2 {
        return Err(Error::Degenerate("reference has a single quantile bin".into()));
    }
    let mut ref_counts = vec![0usize; n_bins];
    reference.iter().for_each(|&v| ref_counts[bin_of(&cuts, v)] += 1);
    let mut obs = vec![0usize; n_bins];
    sample.iter().for_each(|&v| obs[bin_of(&cuts, v)] += 1);
    let (n_ref, n) = (reference.len() as f64, sample.len() as f64);
    let mut statistic = 0.0;
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let expected = n * ref_counts[b] as f64 / n_ref;
        statistic += (obs[b] as f64 - expected).powi(2) / expected;
        bins.push(QuantileBin { upper: cuts.get(b).copied(), expected, observed: obs[b] });
    }
    let df = n_bins - 1;
    let p_value = chi2_sf(statistic, df);
    Ok(ChiSquared {
        statistic,
        df,
        p_value,
        alpha,
        reject: p_value < alpha,
        low_expected: bins.iter().any(|b| b.expected < 5.0),
        bins,
    })
}

/// Fraction of non-null slots spent in each area token `1..V`.
pub fn aggregate_time_share(sample: &[LabeledTrajectory], vocab_size: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; vocab_size.saturating_sub(1)];
    for t in sample {
        for &tok in t.body.iter().filter(|t| **t != NULL_TOKEN) {
            let slot = counts
                .get_mut(tok as usize - 1)
                .ok_or_else(|| Error::Vocabulary(format!("token {tok} outside vocabulary of {vocab_size}")))?;
            *slot += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::Degenerate("sample has no non-null slots".into()));
    }
    Ok(counts.iter().map(|c| c / total).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateTime {
    pub pearson: f64,
    pub p_value: f64,
    pub kl: f64,
}

pub fn compare_aggregate_time(
    sample: &[LabeledTrajectory],
    reference: &[LabeledTrajectory],
    vocab_size: usize,
) -> Result<AggregateTime> {
    let a = aggregate_time_share(sample, vocab_size)?;
    let b = aggregate_time_share(reference, vocab_size)?;
    let corr = pearson(&a, &b)?;
    let labels: Vec<String> = (1..vocab_size).map(|t| t.to_string()).collect();
    let kl = kl_divergence(&Pmf::from_counts(labels.clone(), &a)?, &Pmf::from_counts(labels, &b)?)?;
    Ok(AggregateTime { pearson: corr.r, p_value: corr.p_value, kl })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelErrors {
    pub home: f64,
    pub work: f64,
}

/// Rate at which labels inferred from each body disagree with its carried label.
pub fn label_error_rate(sample: &[LabeledTrajectory], first_hour: u32) -> LabelErrors {
    if sample.is_empty() {
        return LabelErrors { home: 0.0, work: 0.0 };
    }
    let (mut home, mut work) = (0usize, 0usize);
    for t in sample {
        if infer_home_tokens(&t.body, first_hour).ok() != Some(t.home) {
            home += 1;
        }
        if infer_work_tokens(&t.body, first_hour).ok() != Some(t.work) {
            work += 1;
        }
    }
    let n = sample.len() as f64;
    LabelErrors { home: home as f64 / n, work: work as f64 / n }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeekChange {
    pub home_change_rate: f64,
    pub work_change_rate: f64,
    pub overlap_fraction: f64,
    pub common_devices: usize,
}

/// How often inferred labels change for devices labelled in both weeks.
pub fn week_change_baseline(week1: &[LabeledTrajectory], week2: &[LabeledTrajectory]) -> Result<WeekChange> {
    let second: HashMap<&str, (Token, Token)> = week2.iter().map(|t| (t.device_id.as_str(), t.label())).collect();
    let (mut common, mut home, mut work) = (0usize, 0usize, 0usize);
    for t in week1 {
        if let Some(&(h, w)) = second.get(t.device_id.as_str()) {
            common += 1;
            home += usize::from(h != t.home);
            work += usize::from(w != t.work);
        }
    }
    if common == 0 {
        return Err(Error::Degenerate("no device is labelled in both weeks".into()));
    }
    let c = common as f64;
    Ok(WeekChange {
        home_change_rate: home as f64 / c,
        work_change_rate: work as f64 / c,
        overlap_fraction: c / week1.len() as f64,
        common_devices: common,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Baselines {
    /// Real trajectories drawn with replacement to match the label pairs.
    pub secondary: Vec<LabeledTrajectory>,
    /// Bodies of i.i.d. uniform tokens (null included) with copied labels.
    pub random: Vec<LabeledTrajectory>,
}

pub fn make_baselines(
    reference: &[LabeledTrajectory],
    labels: &[(Token, Token)],
    vocab_size: usize,
    length: usize,
    seed: u64,
) -> Result<Baselines> {
    let mut by_pair: BTreeMap<(Token, Token), Vec<usize>> = BTreeMap::new();
    for (i, t) in reference.iter().enumerate() {
        by_pair.entry(t.label()).or_default().push(i);
    }
    let missing: BTreeSet<(Token, Token)> = labels.iter().filter(|p| !by_pair.contains_key(p)).copied().collect();
    if !missing.is_empty() {
        return Err(Error::MissingPairs(missing.into_iter().collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let secondary = labels
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let pool = &by_pair[pair];
            let mut t = reference[pool[rng.gen_range(0..pool.len())]].clone();
            t.device_id = format!("sec{i:06}");
            t
        })
        .collect();
    rng.set_stream(1);
    let random = labels
        .iter()
        .enumerate()
        .map(|(i, &(home, work))| LabeledTrajectory {
            device_id: format!("rnd{i:06}"),
            home,
            work,
            body: (0..length).map(|_| rng.gen_range(0..vocab_size as Token)).collect(),
        })
        .collect();
    Ok(Baselines { secondary, random })
}

/// Metrics of one evaluated sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityColumn {
    pub name: String,
    pub kl_trip_distance: f64,
    pub kl_locations_per_user: f64,
    pub chi_squared: ChiSquared,
    pub aggregate_time: AggregateTime,
    pub label_errors: LabelErrors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedPmf {
    pub name: String,
    pub pmf: Pmf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub columns: Vec<UtilityColumn>,
    pub week_change: Option<WeekChange>,
    pub trip_distance_bins: DistanceBins,
    pub trip_distance_pmfs: Vec<NamedPmf>,
    pub locations_per_user_pmfs: Vec<NamedPmf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityOptions {
    pub trip_bins: usize,
    pub quantiles: usize,
    pub alpha: f64,
    pub first_hour: u32,
}

impl Default for UtilityOptions {
    fn default() -> Self {
        UtilityOptions { trip_bins: DEFAULT_TRIP_BINS, quantiles: DEFAULT_QUANTILES, alpha: DEFAULT_ALPHA, first_hour: 0 }
    }
}

/// Scores each named sample against the real data `d` (distributions, chi-squared)
/// and the real sample `s` (aggregate time share).
pub fn evaluate_utility(
    d: &[LabeledTrajectory],
    s: &[LabeledTrajectory],
    samples: &[(&str, &[LabeledTrajectory])],
    map: &AreaMap,
    vocab: &TokenVocab,
    options: &UtilityOptions,
) -> Result<UtilityReport> {
    let table = DistanceTable::new(map, vocab)?;
    let bins = DistanceBins::from_reference(d, &table, options.trip_bins)?;
    let max_l = max_locations(d);
    let trip_d = trip_distance_pmf(d, &table, &bins)?;
    let loc_d = locations_per_user_pmf(d, max_l)?;
    let mut report = UtilityReport {
        columns: Vec::new(),
        week_change: None,
        trip_distance_bins: bins,
        trip_distance_pmfs: vec![NamedPmf { name: "D".into(), pmf: trip_d.clone() }],
        locations_per_user_pmfs: vec![NamedPmf { name: "D".into(), pmf: loc_d.clone() }],
    };
    for &(name, sample) in samples {
        let trip = trip_distance_pmf(sample, &table, &bins)?;
        let loc = locations_per_user_pmf(sample, max_l)?;
        report.columns.push(UtilityColumn {
            name: name.to_owned(),
            kl_trip_distance: kl_divergence(&trip, &trip_d)?,
            kl_locations_per_user: kl_divergence(&loc, &loc_d)?,
            chi_squared: chi_squared_homogeneity(sample, d, options.quantiles, options.alpha)?,
            aggregate_time: compare_aggregate_time(sample, s, vocab.size())?,
            label_errors: label_error_rate(sample, options.first_hour),
        });
        report.trip_distance_pmfs.push(NamedPmf { name: name.to_owned(), pmf: trip });
        report.locations_per_user_pmfs.push(NamedPmf { name: name.to_owned(), pmf: loc });
    }
    Ok(report)
}

/// Metric rows by sample columns.
pub fn write_utility_table<W: Write>(out: W, report: &UtilityReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string()];
    header.extend(report.columns.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    type Getter = fn(&UtilityColumn) -> f64;
    let rows: [(&str, Getter); 10] = [
        ("kl_trip_distance", |c| c.kl_trip_distance),
        ("kl_locations_per_user", |c| c.kl_locations_per_user),
        ("chi_squared_statistic", |c| c.chi_squared.statistic),
        ("chi_squared_p_value", |c| c.chi_squared.p_value),
        ("kl_aggregate_time", |c| c.aggregate_time.kl),
        ("pearson_aggregate_time", |c| c.aggregate_time.pearson),
        ("pearson_p_value", |c| c.aggregate_time.p_value),
        ("home_label_error_rate", |c| c.label_errors.home),
        ("work_label_error_rate", |c| c.label_errors.work),
        ("chi_squared_df", |c| c.chi_squared.df as f64),
    ];
    for (name, get) in rows {
        let mut row = vec![name.to_string()];
        row.extend(report.columns.iter().map(|c| get(c).to_string()));
        w.write_record(&row)?;
    }
    if let Some(wc) = &report.week_change {
        for (name, v) in [("week_home_change_rate", wc.home_change_rate), ("week_work_change_rate", wc.work_change_rate)] {
            let mut row = vec![name.to_string(), v.to_string()];
            row.resize(header.len(), String::new());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per bin, one column per distribution.
pub fn write_pmfs<W: Write>(out: W, pmfs: &[NamedPmf]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = pmfs.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["bin".to_string()];
    header.extend(pmfs.iter().map(|p| p.name.clone()));
    w.write_record(&header)?;
    for (i, label) in first.pmf.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(pmfs.iter().map(|p| p.pmf.probs.get(i).copied().unwrap_or(0.0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::BoundingBox;

    fn lt(body: Vec<Token>) -> LabeledTrajectory {
        LabeledTrajectory { device_id: "x".into(), home: 1, work: 1, body }
    }

    fn setup() -> (AreaMap, TokenVocab, DistanceTable) {
        let bbox = BoundingBox { min_lat: 0.0, max_lat: 1.0, min_lon: 0.0, max_lon: 3.0 };
        let map = AreaMap::grid(bbox, 1, 3).unwrap();
        let vocab = TokenVocab::from_map(&map);
        let table = DistanceTable::new(&map, &vocab).unwrap();
        (map, vocab, table)
    }

    fn pmf(p: &[f64]) -> Pmf {
        Pmf::from_counts((0..p.len()).map(|i| i.to_string()).collect(), p).unwrap()
    }

    #[test]
    fn kl_worked_example_and_asymmetry() {
        let (p, q) = (pmf(&[0.5, 0.5]), pmf(&[0.25, 0.75]));
        let oracle = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&p, &q).unwrap() - oracle).abs() < 1e-6);
        let reverse = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
        assert!((kl_divergence(&q, &p).unwrap() - reverse).abs() < 1e-6);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert!(kl_divergence(&p, &pmf(&[1.0, 0.0])).unwrap().is_finite());
        assert!(kl_divergence(&p, &pmf(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn trips_skip_nulls_and_repeats() {
        let (_, _, table) = setup();
        assert!(trip_distances(&[1, 1, 0, 2], &table).unwrap().is_empty());
        let d12 = table.km(1, 2).unwrap();
        assert_eq!(trip_distances(&[1, 2], &table).unwrap(), vec![d12]);
        assert_eq!(trip_distances(&[1, 2, 1], &table).unwrap(), vec![d12, d12]);
        assert!(trip_distance_pmf(&[lt(vec![1, 1, 0])], &table, &DistanceBins { n_bins: 4, max_km: 1.0 }).is_err());
    }

    #[test]
    fn distance_bins_clamp() {
        let bins = DistanceBins { n_bins: 20, max_km: 10.0 };
        assert_eq!(bins.bin(0.0), 0);
        assert_eq!(bins.bin(10.0), 19);
        assert_eq!(bins.bin(55.0), 19);
        assert_eq!(bins.bin(4.99), 9);
    }

    #[test]
    fn locations_counting() {
        assert_eq!(locations_per_user(&[1; 120]), 1);
        assert_eq!(locations_per_user(&[1, 2, 1, 0, 3]), 3);
        let p = locations_per_user_pmf(&[lt(vec![1, 2]), lt(vec![1]), lt(vec![1, 2, 3, 4])], 3).unwrap();
        assert_eq!(p.probs, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn quantile_cuts_dedup_and_drop_max() {
        let values: Vec<usize> = (1..=12).collect();
        assert_eq!(quantile_cuts(&values, 6), vec![2, 4, 6, 8, 10]);
        let lumpy = [1, 1, 1, 1, 1, 1, 2, 2, 3, 3];
        assert_eq!(quantile_cuts(&lumpy, 6), vec![1, 2]);
        assert!(quantile_cuts(&[4; 10], 6).is_empty());
    }

    #[test]
    fn chi_squared_exact_match_has_unit_p() {
        let reference: Vec<usize> = (1..=60).map(|v| v % 6 + 1).collect();
        let r = chi_squared_from_values(&reference, &reference, 6, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
        assert_eq!(r.df, 5);
        assert!(chi_squared_from_values(&reference[..10], &reference, 6, 0.05).is_err());
        let shifted: Vec<usize> = reference.iter().map(|v| v + 3).collect();
        assert!(chi_squared_from_values(&shifted, &reference, 6, 0.05).unwrap().reject);
    }

    #[test]
    fn aggregate_share_and_self_correlation() {
        let s = [lt(vec![1; 10])];
        assert_eq!(aggregate_time_share(&s, 4).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(aggregate_time_share(&[lt(vec![0; 5])], 4).is_err());
        let mixed = [lt(vec![1, 2, 2, 3, 3, 3, 0])];
        let a = compare_aggregate_time(&mixed, &mixed, 4).unwrap();
        assert!((a.pearson - 1.0).abs() < 1e-12);
        assert_eq!(a.kl, 0.0);
    }

    #[test]
    fn label_errors_by_hand() {
        let mut t = lt(vec![2; 120]);
        t.home = 2;
        t.work = 2;
        assert_eq!(label_error_rate(&[t.clone()], 0), LabelErrors { home: 0.0, work: 0.0 });
        t.work = 3;
        assert_eq!(label_error_rate(&[t], 0), LabelErrors { home: 0.0, work: 1.0 });
        let empty = LabeledTrajectory { device_id: "e".into(), home: 1, work: 1, body: vec![0; 120] };
        assert_eq!(label_error_rate(&[empty], 0), LabelErrors { home: 1.0, work: 1.0 });
    }

    #[test]
    fn week_change_identical_and_perturbed() {
        let week: Vec<LabeledTrajectory> = (0..4)
            .map(|i| LabeledTrajectory { device_id: format!("d{i}"), home: 1, work: 2, body: vec![1; 4] })
            .collect();
        let same = week_change_baseline(&week, &week).unwrap();
        assert_eq!((same.home_change_rate, same.work_change_rate, same.overlap_fraction), (0.0, 0.0, 1.0));
        let mut moved = week.clone();
        moved[2].home = 3;
        assert_eq!(week_change_baseline(&week, &moved).unwrap().home_change_rate, 0.25);
        assert!(week_change_baseline(&week, &[]).is_err());
    }

    #[test]
    fn baselines_match_labels() {
        let d = vec![
            LabeledTrajectory { device_id: "a".into(), home: 1, work: 2, body: vec![1, 2, 1] },
            LabeledTrajectory { device_id: "b".into(), home: 2, work: 2, body: vec![2, 2, 2] },
        ];
        let labels = vec![(1, 2), (1, 2), (2, 2)];
        let b = make_baselines(&d, &labels, 4, 3, 9).unwrap();
        assert_eq!(b.secondary.iter().map(|t| t.body.clone()).collect::<Vec<_>>(), vec![
            vec![1, 2, 1],
            vec![1, 2, 1],
            vec![2, 2, 2]
        ]);
        assert_eq!(b.random.iter().map(LabeledTrajectory::label).collect::<Vec<_>>(), labels);
        assert!(b.random.iter().all(|t| t.body.len() == 3 && t.body.iter().all(|&x| x < 4)));
        assert_eq!(make_baselines(&d, &labels, 4, 3, 9).unwrap(), b);
        match make_baselines(&d, &[(3, 3)], 4, 3, 9) {
            Err(Error::MissingPairs(p)) => assert_eq!(p, vec![(3, 3)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_tables_render() {
        let (map, vocab, _) = setup();
        let d: Vec<LabeledTrajectory> = (0..40)
            .map(|i| match i % 3 {
                0 => lt(vec![1, 1, 1, 2, 2, 1]),
                1 => lt(vec![1, 2, 3, 3, 0, 1]),
                _ => lt(vec![1; 6]),
            })
            .collect();
        let report = evaluate_utility(&d, &d, &[("S", &d)], &map, &vocab, &UtilityOptions::default()).unwrap();
        assert_eq!(report.columns[0].kl_trip_distance, 0.0);
        let mut buf = Vec::new();
        write_utility_table(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,S\nkl_trip_distance,0\n"));
        let mut buf = Vec::new();
        write_pmfs(&mut buf, &report.trip_distance_pmfs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 21);
    }
}
