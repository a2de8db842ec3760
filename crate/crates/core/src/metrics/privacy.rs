//! Minimum edit-distance privacy audit.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{LabeledTrajectory, Token};

pub const DEFAULT_DELTAS: [f64; 4] = [0.01, 0.05, 0.10, 0.25];

/// Levenshtein distance by the full dynamic-programming table.
pub fn edit_distance_naive(a: &[Token], b: &[Token]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance. With a cutoff `k`, only the diagonal band of
/// width `k` is computed and any distance above `k` is reported as `k + 1`.
pub fn edit_distance(a: &[Token], b: &[Token], cutoff: Option<usize>) -> usize {
    let Some(k) = cutoff else { return edit_distance_naive(a, b) };
    let mut buf = Vec::new();
    banded(a, b, k, &mut buf)
}

fn banded(a: &[Token], b: &[Token], k: usize, buf: &mut Vec<u32>) -> usize {
    let (n, m) = (a.len(), b.len());
    if n.abs_diff(m) > k {
        return k + 1;
    }
    let big = (k + 1) as u32;
    buf.clear();
    buf.resize(2 * (m + 1), big);
    let (prev, cur) = buf.split_at_mut(m + 1);
    let (mut prev, mut cur) = (prev, cur);
    for (j, p) in prev.iter_mut().enumerate().take(m.min(k) + 1) {
        *p = j as u32;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(k).max(1);
        let hi = (i + k).min(m);
        cur[lo - 1] = if lo == 1 && i <= k { i as u32 } else { big };
        let mut row_min = cur[lo - 1];
        let x = a[i - 1];
        for j in lo..=hi {
            let sub = prev[j - 1] + u32::from(x != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(big);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if hi < m {
            cur[hi + 1] = big;
        }
        if row_min >= big {
            return k + 1;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m] as usize
}

/// Smallest distance from `query` to any corpus member, pruning each
/// comparison with the best distance found so far.
pub fn min_distance<'a, I>(query: &[Token], corpus: I) -> Option<usize>
where
    I: IntoIterator<Item = &'a [Token]>,
{
    let mut buf = Vec::new();
    let mut best: Option<usize> = None;
    for c in corpus {
        let d = match best {
            None => edit_distance_naive(query, c),
            Some(0) => break,
            Some(b) => banded(query, c, b - 1, &mut buf),
        };
        if best.is_none_or(|b| d < b) {
            best = Some(d);
        }
    }
    best
}

/// Corpus prepared for repeated minimum-distance queries.
///
/// Every edit operation removes at most one unit of surplus from either
/// sequence's token histogram, so the larger histogram surplus bounds the
/// distance from below. Candidates are visited in ascending bound order and
/// the scan stops once the bound reaches the best distance found.
pub struct MinDistIndex<'a> {
    bodies: Vec<&'a [Token]>,
    dim: usize,
    hists: Vec<u16>,
}

fn histogram(seq: &[Token], dim: usize, out: &mut [u16]) {
    out.iter_mut().for_each(|c| *c = 0);
    for &t in seq {
        let slot = (t as usize).min(dim - 1);
        out[slot] = out[slot].saturating_add(1);
    }
}

impl<'a> MinDistIndex<'a> {
    pub fn new(bodies: Vec<&'a [Token]>) -> Self {
        let dim = bodies.iter().flat_map(|b| b.iter()).max().map_or(1, |&m| m as usize + 2);
        let mut hists = vec![0u16; bodies.len() * dim];
        for (b, h) in bodies.iter().zip(hists.chunks_exact_mut(dim)) {
            histogram(b, dim, h);
        }
        MinDistIndex { bodies, dim, hists }
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    /// Histogram lower bound on the distance between `query` and corpus entry `j`.
    fn lower_bound(&self, qh: &[u16], j: usize) -> usize {
        let h = &self.hists[j * self.dim..(j + 1) * self.dim];
        let (mut surplus, mut deficit) = (0usize, 0usize);
        for (&a, &b) in qh.iter().zip(h) {
            if a > b {
                surplus += (a - b) as usize;
            } else {
                deficit += (b - a) as usize;
            }
        }
        surplus.max(deficit)
    }

    pub fn min_distance(&self, query: &[Token]) -> Option<usize> {
        if self.bodies.is_empty() {
            return None;
        }
        // tokens beyond the corpus range share the overflow slot, which keeps the bound valid
        let mut qh = vec![0u16; self.dim];
        histogram(query, self.dim, &mut qh);
        let mut order: Vec<(usize, usize)> = (0..self.bodies.len()).map(|j| (self.lower_bound(&qh, j), j)).collect();
        order.sort_unstable();
        let mut buf = Vec::new();
        let mut best = usize::MAX;
        for (bound, j) in order {
            if bound >= best {
                break;
            }
            let d = if best == usize::MAX {
                edit_distance_naive(query, self.bodies[j])
            } else {
                banded(query, self.bodies[j], best - 1, &mut buf)
            };
            best = best.min(d);
        }
        Some(best)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MinDistMode {
    /// Real sample S against the rest of the real data.
    #[serde(rename = "S_vs_D")]
    SVsD,
    /// Synthetic sample S′ against the real data.
    #[serde(rename = "Sprime_vs_D")]
    SprimeVsD,
    /// Second synthetic sample S″ against S′.
    #[serde(rename = "Sdoubleprime_vs_Sprime")]
    SdoubleprimeVsSprime,
}

impl MinDistMode {
    pub fn name(self) -> &'static str {
        match self {
            MinDistMode::SVsD => "S_vs_D",
            MinDistMode::SprimeVsD => "Sprime_vs_D",
            MinDistMode::SdoubleprimeVsSprime => "Sdoubleprime_vs_Sprime",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinDistDistribution {
    pub mode: MinDistMode,
    /// Sorted ascending.
    pub values: Vec<usize>,
    /// Queries dropped because their label pair is unique in the query sample.
    pub dropped_unique_pairs: usize,
}

impl MinDistDistribution {
    pub fn min(&self) -> Option<usize> {
        self.values.first().copied()
    }
}

/// Query trajectories whose label pair occurs more than once in the sample.
fn shared_pairs(sample: &[LabeledTrajectory]) -> Vec<&LabeledTrajectory> {
    let mut counts: HashMap<(Token, Token), usize> = HashMap::new();
    for t in sample {
        *counts.entry(t.label()).or_default() += 1;
    }
    sample.iter().filter(|t| counts[&t.label()] > 1).collect()
}

/// Distribution of each query's minimum distance to the corpus for one of
/// the three audit comparisons. Distances are over trajectory bodies.
///
/// In `SVsD` each query is removed from the corpus once (matched by device id
/// and body), so a duplicate left elsewhere in the corpus still yields 0.
pub fn min_dist_distribution(
    query: &[LabeledTrajectory],
    corpus: &[LabeledTrajectory],
    mode: MinDistMode,
) -> Result<MinDistDistribution> {
    let queries: Vec<&LabeledTrajectory> = match mode {
        MinDistMode::SVsD | MinDistMode::SprimeVsD => shared_pairs(query),
        MinDistMode::SdoubleprimeVsSprime => query.iter().collect(),
    };
    let dropped_unique_pairs = query.len() - queries.len();
    let mut pool: Vec<&[Token]> = Vec::with_capacity(corpus.len());
    if mode == MinDistMode::SVsD {
        let mut pending: HashMap<(&str, &[Token]), usize> = HashMap::new();
        for q in query {
            *pending.entry((q.device_id.as_str(), q.body.as_slice())).or_default() += 1;
        }
        for c in corpus {
            match pending.get_mut(&(c.device_id.as_str(), c.body.as_slice())) {
                Some(left) if *left > 0 => *left -= 1,
                _ => pool.push(&c.body),
            }
        }
    } else {
        pool.extend(corpus.iter().map(|c| c.body.as_slice()));
    }
    if pool.is_empty() {
        return Err(Error::Degenerate(format!("{} corpus is empty after exclusion", mode.name())));
    }
    let index = MinDistIndex::new(pool);
    let mut values: Vec<usize> = queries
        .par_iter()
        .map(|q| index.min_distance(&q.body).expect("corpus is non-empty"))
        .collect();
    values.sort_unstable();
    Ok(MinDistDistribution { mode, values, dropped_unique_pairs })
}

/// Largest `m` with `Pr[min-dist ≤ m] ≤ δ` over the sorted values; −1 when
/// even `m = 0` exceeds δ.
pub fn delta_cutoff(sorted: &[usize], delta: f64) -> i64 {
    let n = sorted.len() as f64;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        if j as f64 / n > delta {
            return v as i64 - 1;
        }
        i = j;
    }
    sorted.last().map_or(-1, |&v| v as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QqPoint {
    pub real: usize,
    pub evaluated: usize,
}

/// Nearest-rank quantile pairs at `i/n` for `n` the shorter length.
pub fn qq_points(real: &[usize], evaluated: &[usize]) -> Vec<QqPoint> {
    let (mut a, mut b) = (real.to_vec(), evaluated.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    let n = a.len().min(b.len());
    let rank = |v: &[usize], i: usize| v[((i + 1) * v.len()).div_ceil(n) - 1];
    (0..n).map(|i| QqPoint { real: rank(&a, i), evaluated: rank(&b, i) }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub delta: f64,
    pub s_vs_d: i64,
    pub sprime_vs_d: i64,
    pub sdoubleprime_vs_sprime: i64,
    /// Synthetic-to-real distances are no closer than real-to-real ones.
    pub synthetic_criterion: bool,
    pub self_variation_criterion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub s_vs_d: MinDistDistribution,
    pub sprime_vs_d: MinDistDistribution,
    pub sdoubleprime_vs_sprime: MinDistDistribution,
    pub cutoffs: Vec<CutoffRow>,
    /// Comparisons whose minimum distance is 0: some trajectory is an exact copy.
    pub zero_distance_alarms: Vec<MinDistMode>,
    pub qq_sprime: Vec<QqPoint>,
    pub qq_sdoubleprime: Vec<QqPoint>,
}

impl PrivacyReport {
    pub fn criterion_met(&self) -> bool {
        self.cutoffs.iter().all(|r| r.synthetic_criterion)
    }
}

pub fn privacy_criterion_check(
    s_vs_d: MinDistDistribution,
    sprime_vs_d: MinDistDistribution,
    sdoubleprime_vs_sprime: MinDistDistribution,
    deltas: &[f64],
) -> Result<PrivacyReport> {
    let dists = [&s_vs_d, &sprime_vs_d, &sdoubleprime_vs_sprime];
    if let Some(d) = dists.iter().find(|d| d.values.is_empty()) {
        return Err(Error::Degenerate(format!("{} distribution is empty", d.mode.name())));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::Config(format!("delta {d} outside (0, 1)")));
    }
    let cutoffs = deltas
        .iter()
        .map(|&delta| {
            let real = delta_cutoff(&s_vs_d.values, delta);
            let synth = delta_cutoff(&sprime_vs_d.values, delta);
            let own = delta_cutoff(&sdoubleprime_vs_sprime.values, delta);
            CutoffRow {
                delta,
                s_vs_d: real,
                sprime_vs_d: synth,
                sdoubleprime_vs_sprime: own,
                synthetic_criterion: synth >= real,
                self_variation_criterion: own >= real,
            }
        })
        .collect();
    Ok(PrivacyReport {
        zero_distance_alarms: dists.iter().filter(|d| d.min() == Some(0)).map(|d| d.mode).collect(),
        qq_sprime: qq_points(&s_vs_d.values, &sprime_vs_d.values),
        qq_sdoubleprime: qq_points(&s_vs_d.values, &sdoubleprime_vs_sprime.values),
        cutoffs,
        s_vs_d,
        sprime_vs_d,
        sdoubleprime_vs_sprime,
    })
}

/// Minimum row then one row per δ; one column per comparison.
pub fn write_cutoff_table<W: Write>(out: W, report: &PrivacyReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "S_vs_D", "Sprime_vs_D", "Sdoubleprime_vs_Sprime", "synthetic_criterion"])?;
    let min = |d: &MinDistDistribution| d.min().map_or(String::new(), |v| v.to_string());
    w.write_record([
        "min".to_string(),
        min(&report.s_vs_d),
        min(&report.sprime_vs_d),
        min(&report.sdoubleprime_vs_sprime),
        String::new(),
    ])?;
    for r in &report.cutoffs {
        w.write_record([
            format!("delta={}", r.delta),
            r.s_vs_d.to_string(),
            r.sprime_vs_d.to_string(),
            r.sdoubleprime_vs_sprime.to_string(),
            r.synthetic_criterion.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qq<W: Write>(out: W, points: &[QqPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["real_quantile", "evaluated_quantile"])?;
    for p in points {
        w.write_record([p.real.to_string(), p.evaluated.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn lt(id: &str, pair: (Token, Token), body: Vec<Token>) -> LabeledTrajectory {
        LabeledTrajectory { device_id: id.into(), home: pair.0, work: pair.1, body }
    }

    #[test]
    fn hand_tables() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3], None), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3], None), 1);
        assert_eq!(edit_distance(&[1, 1, 1], &[2, 2], None), 3);
        assert_eq!(edit_distance(&[], &[4, 5], None), 2);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3], Some(1)), 1);
        assert_eq!(edit_distance(&[1, 1, 1], &[2, 2], Some(1)), 2);
        assert_eq!(edit_distance(&[1, 1, 1], &[2, 2], Some(0)), 1);
    }

    #[test]
    fn delta_cutoff_counting() {
        let values: Vec<usize> = (0..100).collect();
        assert_eq!(delta_cutoff(&values, 0.05), 4);
        assert_eq!(delta_cutoff(&[7; 10], 0.5), 6);
        assert_eq!(delta_cutoff(&[0, 0, 5], 0.1), -1);
        assert_eq!(delta_cutoff(&[0, 3, 5, 9], 0.25), 2);
    }

    #[test]
    fn qq_lines() {
        let a = [3, 1, 2, 5];
        assert!(qq_points(&a, &a).iter().all(|p| p.real == p.evaluated));
        let shifted: Vec<usize> = a.iter().map(|v| v + 1).collect();
        assert!(qq_points(&a, &shifted).iter().all(|p| p.evaluated == p.real + 1));
        let long: Vec<usize> = (0..8).collect();
        let pts = qq_points(&[10, 20], &long);
        assert_eq!(pts, vec![QqPoint { real: 10, evaluated: 3 }, QqPoint { real: 20, evaluated: 7 }]);
    }

    #[test]
    fn single_candidate_and_duplicates() {
        let s = lt("s", (1, 2), vec![1, 2, 3]);
        let s2 = lt("s2", (1, 2), vec![1, 2, 2]);
        let t = lt("t", (5, 5), vec![3, 3, 3]);
        let d = vec![s.clone(), s2.clone(), t.clone()];
        let dist = min_dist_distribution(&[s.clone(), s2.clone()], &d, MinDistMode::SVsD).unwrap();
        assert_eq!(dist.values, vec![2, 3]);
        let mut planted = d.clone();
        planted.push(lt("copy", (1, 2), vec![1, 2, 3]));
        let dist = min_dist_distribution(&[s.clone(), s2.clone()], &planted, MinDistMode::SVsD).unwrap();
        assert_eq!(dist.min(), Some(0));
        let own = min_dist_distribution(&d, &d, MinDistMode::SdoubleprimeVsSprime).unwrap();
        assert_eq!(own.values, vec![0, 0, 0]);
    }

    #[test]
    fn unique_pairs_are_dropped() {
        let d = vec![lt("a", (1, 1), vec![1]), lt("b", (1, 1), vec![2]), lt("c", (2, 2), vec![3])];
        let dist = min_dist_distribution(&d, &d, MinDistMode::SprimeVsD).unwrap();
        assert_eq!(dist.dropped_unique_pairs, 1);
        assert_eq!(dist.values, vec![0, 0]);
        assert!(min_dist_distribution(&d, &d[..2], MinDistMode::SVsD).is_err());
    }

    #[test]
    fn report_flags_copies() {
        let dist = |mode, values: Vec<usize>| MinDistDistribution { mode, values, dropped_unique_pairs: 0 };
        let real = dist(MinDistMode::SVsD, vec![4, 5, 6, 7]);
        let report = privacy_criterion_check(
            real.clone(),
            dist(MinDistMode::SprimeVsD, vec![4, 5, 6, 7]),
            dist(MinDistMode::SdoubleprimeVsSprime, vec![0, 8, 9, 9]),
            &DEFAULT_DELTAS,
        )
        .unwrap();
        assert!(report.criterion_met());
        assert_eq!(report.zero_distance_alarms, vec![MinDistMode::SdoubleprimeVsSprime]);
        let mut buf = Vec::new();
        write_cutoff_table(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "min,4,4,0,");
        assert_eq!(text.lines().count(), 6);
    }

    fn seq() -> impl Strategy<Value = Vec<Token>> {
        prop::collection::vec(0u32..6, 0..20)
    }

    proptest! {
        #[test]
        fn banded_agrees_with_naive(a in seq(), b in seq(), k in 0usize..25) {
            let exact = edit_distance_naive(&a, &b);
            let banded = edit_distance(&a, &b, Some(k));
            if exact <= k {
                prop_assert_eq!(banded, exact);
            } else {
                prop_assert!(banded > k);
            }
        }

        #[test]
        fn index_matches_exhaustive_scan(
            q in seq(),
            corpus in prop::collection::vec(seq(), 1..12),
        ) {
            let exhaustive = corpus.iter().map(|c| edit_distance_naive(&q, c)).min();
            let index = MinDistIndex::new(corpus.iter().map(Vec::as_slice).collect());
            prop_assert_eq!(index.min_distance(&q), exhaustive);
            prop_assert_eq!(min_distance(&q, corpus.iter().map(Vec::as_slice)), exhaustive);
        }

        #[test]
        fn metric_axioms(a in seq(), b in seq(), c in seq()) {
            let d = edit_distance_naive;
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &b) == 0, a == b);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn cutoff_respects_delta(mut v in prop::collection::vec(0usize..15, 1..60), delta in 0.01f64..0.99) {
            v.sort_unstable();
            let m = delta_cutoff(&v, delta);
            let frac = v.iter().filter(|&&x| (x as i64) <= m).count() as f64 / v.len() as f64;
            prop_assert!(frac <= delta);
            prop_assert!(m >= delta_cutoff(&v, delta / 2.0));
        }
    }
}
