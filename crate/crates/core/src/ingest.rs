//! Raw location records and the device panel built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::AreaMap;

/// Accepted timestamp layouts; the first matches `2018-05-06-18:11:1`.
const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%d-%H:%M:%S",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
];

/// One observation of a device: where it was, when, and for how long.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbsRecord {
    pub device_id: String,
    pub lat: f64,
    pub lon: f64,
    /// UTC instant.
    pub timestamp: NaiveDateTime,
    pub dwell_minutes: f64,
}

impl LbsRecord {
    pub fn is_valid(&self) -> bool {
        self.dwell_minutes.is_finite()
            && self.dwell_minutes >= 0.0
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp + Duration::milliseconds((self.dwell_minutes * 60_000.0).round() as i64)
    }
}

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.naive_utc());
    }
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedRecords {
    pub records: Vec<LbsRecord>,
    /// Data rows dropped because a field failed to parse or was out of range.
    pub skipped: usize,
}

fn looks_like_header(row: &csv::StringRecord) -> bool {
    const EXPECTED: [&[&str]; 5] = [&["device", "id"], &["lat"], &["lon", "lng"], &["time"], &["dwell"]];
    row.len() >= 5
        && EXPECTED.iter().zip(row.iter()).all(|(keys, field)| {
            let field = field.to_ascii_lowercase();
            keys.iter().any(|k| field.contains(k))
        })
}

fn parse_row(row: &csv::StringRecord) -> Option<LbsRecord> {
    if row.len() < 5 {
        return None;
    }
    let record = LbsRecord {
        device_id: row.get(0)?.to_owned(),
        lat: row.get(1)?.parse().ok()?,
        lon: row.get(2)?.parse().ok()?,
        timestamp: parse_timestamp(row.get(3)?)?,
        dwell_minutes: row.get(4)?.parse().ok()?,
    };
    (!record.device_id.is_empty() && record.is_valid()).then_some(record)
}

/// Reads header-bearing CSV with columns device id, latitude, longitude,
/// timestamp and dwell time (minutes). Malformed rows are skipped and counted.
pub fn parse_lbs_csv<R: Read>(input: R) -> Result<ParsedRecords> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = reader.records();
    let header = match rows.next() {
        None => return Ok(ParsedRecords::default()),
        Some(row) => row?,
    };
    if !looks_like_header(&header) {
        return Err(Error::Format(format!(
            "expected header `device ID, latitude, longitude, timestamp, dwelltime`, found {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut parsed = ParsedRecords::default();
    for row in rows {
        match row.ok().as_ref().and_then(parse_row) {
            Some(record) => parsed.records.push(record),
            None => parsed.skipped += 1,
        }
    }
    if parsed.skipped > 0 {
        log::warn!("skipped {} malformed LBS rows", parsed.skipped);
    }
    Ok(parsed)
}

pub fn write_lbs_csv<W: Write>(out: W, records: &[LbsRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["device_id", "latitude", "longitude", "timestamp", "dwelltime"])?;
    for r in records {
        writer.write_record([
            r.device_id.clone(),
            r.lat.to_string(),
            r.lon.to_string(),
            format_timestamp(&r.timestamp),
            r.dwell_minutes.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Hour-aligned study window `[start, start + n_hours)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDateTime,
    pub n_hours: usize,
}

impl StudyWindow {
    pub fn new(start: NaiveDateTime, n_hours: usize) -> Result<Self> {
        let window = StudyWindow { start, n_hours };
        window.validate()?;
        Ok(window)
    }

    /// Five days of hourly slots starting at midnight of `monday`.
    pub fn work_week(monday: NaiveDate) -> Self {
        StudyWindow { start: monday.and_hms_opt(0, 0, 0).expect("midnight"), n_hours: 120 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start.minute() != 0 || self.start.second() != 0 || self.start.nanosecond() != 0 {
            return Err(Error::Config(format!("window start {} is not hour-aligned", self.start)));
        }
        if self.n_hours == 0 {
            return Err(Error::Config("window must span at least one hour".into()));
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(self.n_hours as i64)
    }

    pub fn contains(&self, ts: &NaiveDateTime) -> bool {
        *ts >= self.start && *ts < self.end()
    }

    pub fn hour_start(&self, idx: usize) -> NaiveDateTime {
        self.start + Duration::hours(idx as i64)
    }

    /// Hour of day (0..24) of the first slot.
    pub fn first_hour_of_day(&self) -> u32 {
        self.start.hour()
    }
}

/// Device filters applied when building a panel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelFilter {
    pub max_dwell_hours: f64,
    pub min_unique_days: usize,
    pub min_unique_nights: usize,
}

impl Default for PanelFilter {
    fn default() -> Self {
        PanelFilter { max_dwell_hours: 24.0, min_unique_days: 3, min_unique_nights: 3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelStats {
    pub input_records: usize,
    pub dropped_outside_window: usize,
    pub dropped_outside_region: usize,
    pub dropped_long_dwell: usize,
    pub devices_seen: usize,
    pub devices_kept: usize,
}

/// Filtered per-device records over the study window.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub window: StudyWindow,
    pub filter: PanelFilter,
    /// Device id -> records sorted by timestamp.
    pub devices: BTreeMap<String, Vec<LbsRecord>>,
    pub stats: PanelStats,
}

impl Panel {
    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &LbsRecord> {
        self.devices.values().flatten()
    }
}

/// Night label: the 20:00-09:00 span is named after the date it starts on.
fn night_of(ts: &NaiveDateTime) -> Option<NaiveDate> {
    match ts.hour() {
        h if h >= 20 => Some(ts.date()),
        h if h < 9 => ts.date().pred_opt(),
        _ => None,
    }
}

fn record_order(a: &LbsRecord, b: &LbsRecord) -> std::cmp::Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then(a.dwell_minutes.total_cmp(&b.dwell_minutes))
        .then(a.lat.total_cmp(&b.lat))
        .then(a.lon.total_cmp(&b.lon))
}

pub fn build_panel(
    records: &[LbsRecord],
    window: StudyWindow,
    map: &AreaMap,
    filter: PanelFilter,
) -> Result<Panel> {
    window.validate()?;
    let mut stats = PanelStats { input_records: records.len(), ..PanelStats::default() };
    let mut by_device: BTreeMap<String, Vec<LbsRecord>> = BTreeMap::new();
    for record in records {
        if !window.contains(&record.timestamp) {
            stats.dropped_outside_window += 1;
        } else if map.area_index_of_point(record.lat, record.lon).is_err() {
            stats.dropped_outside_region += 1;
        } else if record.dwell_minutes > filter.max_dwell_hours * 60.0 {
            stats.dropped_long_dwell += 1;
        } else {
            by_device.entry(record.device_id.clone()).or_default().push(record.clone());
        }
    }
    stats.devices_seen = by_device.len();
    by_device.retain(|_, recs| {
        let days: BTreeSet<NaiveDate> = recs.iter().map(|r| r.timestamp.date()).collect();
        let nights: BTreeSet<NaiveDate> = recs.iter().filter_map(|r| night_of(&r.timestamp)).collect();
        days.len() >= filter.min_unique_days && nights.len() >= filter.min_unique_nights
    });
    for recs in by_device.values_mut() {
        recs.sort_by(record_order);
    }
    stats.devices_kept = by_device.len();
    Ok(Panel { window, filter, devices: by_device, stats })
}

/// JSON sidecar stored next to the filtered-record CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSidecar {
    pub window: StudyWindow,
    pub filter: PanelFilter,
    pub device_count: usize,
    pub parse_skipped: usize,
    pub stats: PanelStats,
}

impl PanelSidecar {
    pub fn of(panel: &Panel, parse_skipped: usize) -> Self {
        PanelSidecar {
            window: panel.window,
            filter: panel.filter,
            device_count: panel.device_count(),
            parse_skipped,
            stats: panel.stats.clone(),
        }
    }

    /// Rebuilds a panel from its persisted records; records are trusted as filtered.
    pub fn restore(&self, records: Vec<LbsRecord>) -> Panel {
        let mut devices: BTreeMap<String, Vec<LbsRecord>> = BTreeMap::new();
        for r in records {
            devices.entry(r.device_id.clone()).or_default().push(r);
        }
        for recs in devices.values_mut() {
            recs.sort_by(record_order);
        }
        Panel { window: self.window, filter: self.filter, devices, stats: self.stats.clone() }
    }
}
