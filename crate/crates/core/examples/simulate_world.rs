//! Simulates a small synthetic city, writes its LBS records and ground truth
//! as CSV, then reads the records back through the parser.
//!
//! Usage: cargo run --example simulate_world -- [out_dir] [agents]

use std::fs::File;
use std::path::PathBuf;

use staysynth::ingest::{parse_lbs_csv, write_lbs_csv};
use staysynth::worldsim::{simulate_world, write_ground_truth, WorldConfig};

fn main() -> staysynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("staysynth_world"));
    let n_agents = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    std::fs::create_dir_all(&out)?;

    let config = WorldConfig { n_agents, ..WorldConfig::default() };
    let world = simulate_world(&config)?;
    println!("{} areas on a {}x{} grid", world.map.len(), world.map.grid_rows(), world.map.grid_cols());
    println!("{} agents, {} records over {} days", world.agents.len(), world.records.len(), config.n_days);
    for a in world.agents.iter().take(3) {
        println!("  {}: home {} work {}", a.agent_id, a.home_area.as_str(), a.work_area.as_str());
    }

    let records = out.join("records.csv");
    write_lbs_csv(File::create(&records)?, &world.records)?;
    write_ground_truth(File::create(out.join("ground_truth.csv"))?, &world.agents)?;
    let parsed = parse_lbs_csv(File::open(&records)?)?;
    println!("read back {} records ({} skipped) from {}", parsed.records.len(), parsed.skipped, records.display());
    Ok(())
}
