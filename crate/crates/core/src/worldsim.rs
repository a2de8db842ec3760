//! Synthetic ground-truth world: agents with fixed home/work areas follow a
//! weekly routine and are observed sparsely as LBS-style point records.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AreaId, AreaMap, BoundingBox};
use crate::ingest::LbsRecord;

pub const HOURS_PER_WEEK: usize = 168;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub bbox: BoundingBox,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub n_agents: usize,
    /// Must be a Monday at 00:00.
    pub window_start: NaiveDateTime,
    pub n_days: usize,
    /// Probability that a device reports during any given hour.
    pub report_prob: f64,
    /// Probability of visiting a non-routine area during a free hour.
    pub explore_prob: f64,
    /// Work lies within this many grid steps (rows and columns) of home;
    /// `None` allows any area.
    #[serde(default)]
    pub commute_radius: Option<usize>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 7,
            bbox: BoundingBox { min_lat: 42.2, max_lat: 42.5, min_lon: -71.3, max_lon: -70.9 },
            grid_rows: 5,
            grid_cols: 10,
            n_agents: 200,
            window_start: NaiveDate::from_ymd_opt(2018, 5, 7)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            n_days: 5,
            report_prob: 0.7,
            explore_prob: 0.1,
            commute_radius: Some(1),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} is not a probability")))
            }
        };
        prob("report_prob", self.report_prob)?;
        prob("explore_prob", self.explore_prob)?;
        if self.grid_rows * self.grid_cols < 2 {
            return Err(Error::Config("the world needs at least two areas".into()));
        }
        if self.commute_radius == Some(0) {
            return Err(Error::Config("commute_radius must be at least 1".into()));
        }
        if self.n_days == 0 {
            return Err(Error::Config("n_days must be positive".into()));
        }
        let ws = self.window_start;
        if ws.weekday() != Weekday::Mon || ws.time() != chrono::NaiveTime::MIN {
            return Err(Error::Config(format!("window start {ws} is not Monday 00:00")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoutineSlot {
    Home,
    Work,
    Free,
}

impl RoutineSlot {
    /// Home 20:00-09:00, work 09:00-17:00 on weekdays, free otherwise.
    pub fn at(hour_of_week: usize) -> Self {
        let (day, hour) = (hour_of_week / 24 % 7, hour_of_week % 24);
        if !(9..20).contains(&hour) {
            RoutineSlot::Home
        } else if day < 5 && hour < 17 {
            RoutineSlot::Work
        } else {
            RoutineSlot::Free
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub agent_id: String,
    pub home_area: AreaId,
    pub work_area: AreaId,
    /// Intended slot for every hour of the week, Monday 00:00 first.
    pub routine: Vec<RoutineSlot>,
}

impl Agent {
    /// Routine area for an hour; free hours default to home.
    pub fn routine_area(&self, hour_of_week: usize) -> &AreaId {
        match self.routine[hour_of_week % HOURS_PER_WEEK] {
            RoutineSlot::Work => &self.work_area,
            RoutineSlot::Home | RoutineSlot::Free => &self.home_area,
        }
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub map: AreaMap,
    pub records: Vec<LbsRecord>,
    pub agents: Vec<Agent>,
}

fn pick_other(rng: &mut ChaCha8Rng, n: usize, exclude: &[usize]) -> Option<usize> {
    let choices = n - exclude.iter().filter(|&&e| e < n).count();
    if choices == 0 {
        return None;
    }
    let mut k = rng.gen_range(0..choices);
    (0..n).find(|i| {
        if exclude.contains(i) {
            return false;
        }
        if k == 0 {
            return true;
        }
        k -= 1;
        false
    })
}

/// Areas other than `home` within `radius` grid steps of it.
fn commute_candidates(map: &AreaMap, home: usize, radius: usize) -> Vec<usize> {
    let cols = map.grid_cols();
    let (hr, hc) = (home / cols, home % cols);
    (0..map.len())
        .filter(|&i| i != home && (i / cols).abs_diff(hr) <= radius && (i % cols).abs_diff(hc) <= radius)
        .collect()
}

pub fn simulate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let map = AreaMap::grid(config.bbox, config.grid_rows, config.grid_cols)?;
    let n_areas = map.len();
    let n_hours = config.n_days * 24;
    let routine: Vec<RoutineSlot> = (0..HOURS_PER_WEEK).map(RoutineSlot::at).collect();

    let mut agents = Vec::with_capacity(config.n_agents);
    let mut records = Vec::new();
    for agent_idx in 0..config.n_agents {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(agent_idx as u64);
        let home = rng.gen_range(0..n_areas);
        let work = match config.commute_radius {
            None => pick_other(&mut rng, n_areas, &[home]).expect("at least two areas"),
            Some(r) => {
                let nearby = commute_candidates(&map, home, r);
                nearby[rng.gen_range(0..nearby.len())]
            }
        };
        let agent = Agent {
            agent_id: format!("dev{agent_idx:06}"),
            home_area: map.area(home).id.clone(),
            work_area: map.area(work).id.clone(),
            routine: routine.clone(),
        };
        for hour in 0..n_hours {
            let area = match routine[hour % HOURS_PER_WEEK] {
                RoutineSlot::Home => home,
                RoutineSlot::Work => work,
                RoutineSlot::Free if rng.gen_bool(config.explore_prob) => {
                    pick_other(&mut rng, n_areas, &[home, work]).unwrap_or(home)
                }
                RoutineSlot::Free => home,
            };
            if !rng.gen_bool(config.report_prob) {
                continue;
            }
            // the whole stay lies inside its hour, away from the cell border
            let offset_secs: i64 = rng.gen_range(0..1800);
            let max_dwell = (3600 - offset_secs) as f64 / 60.0;
            let dwell = (rng.gen_range(1.0..max_dwell) * 100.0).floor() / 100.0;
            let (lat_lo, lat_hi, lon_lo, lon_hi) = map.cell_bounds(area);
            let lat = lat_lo + (0.01 + 0.98 * rng.r#gen::<f64>()) * (lat_hi - lat_lo);
            let lon = lon_lo + (0.01 + 0.98 * rng.r#gen::<f64>()) * (lon_hi - lon_lo);
            records.push(LbsRecord {
                device_id: agent.agent_id.clone(),
                lat,
                lon,
                timestamp: config.window_start + Duration::hours(hour as i64) + Duration::seconds(offset_secs),
                dwell_minutes: dwell,
            });
        }
        agents.push(agent);
    }
    debug_assert!(records.iter().all(|r| r.timestamp.minute() < 30));
    Ok(World { map, records, agents })
}

pub fn write_ground_truth<W: Write>(out: W, agents: &[Agent]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["agent_id", "home_area", "work_area"])?;
    for a in agents {
        writer.write_record([a.agent_id.as_str(), a.home_area.as_str(), a.work_area.as_str()])?;
    }
    writer.flush()?;
    Ok(())
}
