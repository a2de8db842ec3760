//! Hourly stay trajectories, home/work labels and the token vocabulary.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AreaId, AreaMap};
use crate::ingest::Panel;

/// Dense integer token. `0` is reserved for the null area.
pub type Token = u32;

pub const NULL_TOKEN: Token = 0;

/// Night hours run 20:00 to 09:00; everything else counts as daytime.
pub fn is_night_hour(hour_of_day: u32) -> bool {
    !(9..20).contains(&hour_of_day)
}

/// Area a device spent the most time in for each hour of the study window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StayTrajectory {
    pub device_id: String,
    /// Hour of day of slot 0.
    pub first_hour: u32,
    pub areas: Vec<AreaId>,
}

impl StayTrajectory {
    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HomeWorkLabel<A> {
    pub home: A,
    pub work: A,
}

/// Majority vote over the slots selected by `keep`; ties go to the smaller key.
fn most_frequent<'a, K, I>(items: I, first_hour: u32, keep: impl Fn(u32) -> bool) -> Option<K>
where
    K: Ord + Clone + 'a,
    I: IntoIterator<Item = Option<&'a K>>,
{
    let mut counts: BTreeMap<&K, usize> = BTreeMap::new();
    for (t, item) in items.into_iter().enumerate() {
        let hour = (first_hour + t as u32) % 24;
        if let Some(key) = item.filter(|_| keep(hour)) {
            *counts.entry(key).or_default() += 1;
        }
    }
    let mut best: Option<(&K, usize)> = None;
    for (key, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((key, count));
        }
    }
    best.map(|(k, _)| k.clone())
}

fn non_null_areas(traj: &StayTrajectory) -> impl Iterator<Item = Option<&AreaId>> {
    traj.areas.iter().map(|a| (!a.is_null()).then_some(a))
}

fn non_null_tokens(tokens: &[Token]) -> impl Iterator<Item = Option<&Token>> {
    tokens.iter().map(|t| (*t != NULL_TOKEN).then_some(t))
}

/// Area occupied most often during night hours.
pub fn infer_home(traj: &StayTrajectory) -> Result<AreaId> {
    most_frequent(non_null_areas(traj), traj.first_hour, is_night_hour).ok_or(Error::NoHomeInferable)
}

/// Area occupied most often during daytime hours.
pub fn infer_work(traj: &StayTrajectory) -> Result<AreaId> {
    most_frequent(non_null_areas(traj), traj.first_hour, |h| !is_night_hour(h))
        .ok_or(Error::NoWorkInferable)
}

pub fn infer_home_tokens(tokens: &[Token], first_hour: u32) -> Result<Token> {
    most_frequent(non_null_tokens(tokens), first_hour, is_night_hour).ok_or(Error::NoHomeInferable)
}

pub fn infer_work_tokens(tokens: &[Token], first_hour: u32) -> Result<Token> {
    most_frequent(non_null_tokens(tokens), first_hour, |h| !is_night_hour(h))
        .ok_or(Error::NoWorkInferable)
}

/// Attributes each record's dwell span to the hourly slots it overlaps and
/// keeps, per slot, the area with the most attributed minutes.
pub fn build_stay_trajectories(panel: &Panel, map: &AreaMap) -> Vec<StayTrajectory> {
    let n_hours = panel.window.n_hours;
    let window_minutes = n_hours as f64 * 60.0;
    panel
        .devices
        .iter()
        .map(|(device_id, records)| {
            let mut minutes: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_hours];
            for record in records {
                let Ok(area) = map.area_index_of_point(record.lat, record.lon) else {
                    continue;
                };
                let offset = (record.timestamp - panel.window.start).num_milliseconds() as f64 / 60_000.0;
                let start = offset.max(0.0);
                let end = (offset + record.dwell_minutes).min(window_minutes);
                if end <= start {
                    continue;
                }
                let first = (start / 60.0).floor() as usize;
                let last = ((end / 60.0).ceil() as usize).min(n_hours);
                for (hour, slot) in minutes.iter_mut().enumerate().take(last).skip(first) {
                    let lo = start.max(hour as f64 * 60.0);
                    let hi = end.min((hour + 1) as f64 * 60.0);
                    if hi > lo {
                        *slot.entry(area).or_default() += hi - lo;
                    }
                }
            }
            let areas = minutes
                .iter()
                .map(|slot| {
                    let mut best: Option<(usize, f64)> = None;
                    for (&area, &m) in slot {
                        if best.is_none_or(|(_, bm)| m > bm) {
                            best = Some((area, m));
                        }
                    }
                    match best {
                        Some((area, m)) if m > 0.0 => map.area(area).id.clone(),
                        _ => AreaId::null(),
                    }
                })
                .collect();
            StayTrajectory {
                device_id: device_id.clone(),
                first_hour: panel.window.first_hour_of_day(),
                areas,
            }
        })
        .collect()
}

/// Bijection between area ids and dense tokens `1..V`; token 0 is null.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    areas: Vec<AreaId>,
    index: BTreeMap<AreaId, Token>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    null_token: Token,
    size: usize,
    tokens: BTreeMap<AreaId, Token>,
}

impl TokenVocab {
    /// Tokens are assigned in ascending area-id order.
    pub fn from_areas<I: IntoIterator<Item = AreaId>>(areas: I) -> Result<Self> {
        let mut areas: Vec<AreaId> = areas.into_iter().collect();
        areas.sort();
        areas.dedup();
        if areas.iter().any(AreaId::is_null) {
            return Err(Error::Vocabulary("the null area cannot be a vocabulary entry".into()));
        }
        let index = areas
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i as Token + 1))
            .collect();
        Ok(TokenVocab { areas, index })
    }

    pub fn from_map(map: &AreaMap) -> Self {
        Self::from_areas(map.areas().iter().map(|a| a.id.clone())).expect("map ids are never null")
    }

    /// Vocabulary size including the null token.
    pub fn size(&self) -> usize {
        self.areas.len() + 1
    }

    pub fn token(&self, area: &AreaId) -> Result<Token> {
        if area.is_null() {
            return Ok(NULL_TOKEN);
        }
        self.index
            .get(area)
            .copied()
            .ok_or_else(|| Error::Vocabulary(format!("area {area} is not in the vocabulary")))
    }

    pub fn area(&self, token: Token) -> Result<AreaId> {
        match token {
            NULL_TOKEN => Ok(AreaId::null()),
            t => self
                .areas
                .get(t as usize - 1)
                .cloned()
                .ok_or_else(|| Error::Vocabulary(format!("token {t} is out of range"))),
        }
    }

    pub fn tokenize(&self, areas: &[AreaId]) -> Result<Vec<Token>> {
        areas.iter().map(|a| self.token(a)).collect()
    }

    pub fn detokenize(&self, tokens: &[Token]) -> Result<Vec<AreaId>> {
        tokens.iter().map(|&t| self.area(t)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = VocabRepr { null_token: NULL_TOKEN, size: self.size(), tokens: self.index.clone() };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let repr: VocabRepr = serde_json::from_str(json)?;
        let vocab = Self::from_areas(repr.tokens.keys().cloned())?;
        if repr.null_token != NULL_TOKEN || vocab.index != repr.tokens || vocab.size() != repr.size {
            return Err(Error::Vocabulary("vocabulary file is not a dense sorted token map".into()));
        }
        Ok(vocab)
    }
}

/// A tokenized trajectory body with its ⟨home, work⟩ label.
///
/// Real trajectories carry inferred labels; synthetic ones carry the labels
/// they were generated from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledTrajectory {
    pub device_id: String,
    pub home: Token,
    pub work: Token,
    pub body: Vec<Token>,
}

impl LabeledTrajectory {
    pub fn label(&self) -> (Token, Token) {
        (self.home, self.work)
    }

    pub fn prefixed(&self) -> PrefixedSequence {
        let mut tokens = Vec::with_capacity(self.body.len() + 2);
        tokens.push(self.home);
        tokens.push(self.work);
        tokens.extend_from_slice(&self.body);
        PrefixedSequence(tokens)
    }
}

/// `[home, work, s1, .., sT]` as fed to the sequence model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixedSequence(pub Vec<Token>);

impl PrefixedSequence {
    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelledSet {
    pub trajectories: Vec<LabeledTrajectory>,
    pub dropped_no_home: usize,
    pub dropped_no_work: usize,
}

/// Tokenizes trajectories and attaches inferred labels. Devices without an
/// inferable home or work are dropped and counted.
pub fn label_trajectories(trajs: &[StayTrajectory], vocab: &TokenVocab) -> Result<LabelledSet> {
    let mut set = LabelledSet::default();
    for traj in trajs {
        let body = vocab.tokenize(&traj.areas)?;
        let Ok(home) = infer_home_tokens(&body, traj.first_hour) else {
            set.dropped_no_home += 1;
            continue;
        };
        let Ok(work) = infer_work_tokens(&body, traj.first_hour) else {
            set.dropped_no_work += 1;
            continue;
        };
        set.trajectories.push(LabeledTrajectory { device_id: traj.device_id.clone(), home, work, body });
    }
    Ok(set)
}

pub fn make_training_sequences(trajs: &[StayTrajectory], vocab: &TokenVocab) -> Result<Vec<PrefixedSequence>> {
    Ok(label_trajectories(trajs, vocab)?
        .trajectories
        .iter()
        .map(LabeledTrajectory::prefixed)
        .collect())
}

/// Writes `device_id,home,work,t1,..,tT` lines, no header.
pub fn write_trajectories<W: Write>(out: W, trajs: &[LabeledTrajectory]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for t in trajs {
        let mut row = Vec::with_capacity(t.body.len() + 3);
        row.push(t.device_id.clone());
        row.push(t.home.to_string());
        row.push(t.work.to_string());
        row.extend(t.body.iter().map(Token::to_string));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trajectories<R: Read>(input: R) -> Result<Vec<LabeledTrajectory>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() < 3 {
            return Err(Error::Format(format!("trajectory line {} has {} fields", line + 1, row.len())));
        }
        let tok = |s: &str| -> Result<Token> {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad token `{s}` on trajectory line {}", line + 1)))
        };
        out.push(LabeledTrajectory {
            device_id: row[0].to_owned(),
            home: tok(&row[1])?,
            work: tok(&row[2])?,
            body: row.iter().skip(3).map(tok).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}
