//! Filters simulated records into a panel, builds hourly stay trajectories
//! and compares inferred home/work labels with each agent's assignment.
//!
//! Usage: cargo run --example stay_trajectories -- [report_prob] [explore_prob]

use staysynth::ingest::{build_panel, PanelFilter, StudyWindow};
use staysynth::trajectory::{build_stay_trajectories, infer_home, infer_work, label_trajectories, TokenVocab};
use staysynth::worldsim::{simulate_world, WorldConfig};

fn main() -> staysynth::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let config = WorldConfig {
        n_agents: 500,
        report_prob: args.first().copied().unwrap_or(0.6),
        explore_prob: args.get(1).copied().unwrap_or(0.1),
        ..WorldConfig::default()
    };
    let world = simulate_world(&config)?;
    let window = StudyWindow::new(config.window_start, config.n_days * 24)?;
    let panel = build_panel(&world.records, window, &world.map, PanelFilter::default())?;
    println!("panel: {:?}", panel.stats);

    let trajs = build_stay_trajectories(&panel, &world.map);
    let (mut home_ok, mut work_ok) = (0, 0);
    for t in &trajs {
        let agent = world.agents.iter().find(|a| a.agent_id == t.device_id).expect("panel device is an agent");
        home_ok += usize::from(infer_home(t).ok().as_ref() == Some(&agent.home_area));
        work_ok += usize::from(infer_work(t).ok().as_ref() == Some(&agent.work_area));
    }
    let n = trajs.len().max(1) as f64;
    println!("{} trajectories of {} hours", trajs.len(), trajs.first().map_or(0, |t| t.len()));
    println!("home match {:.3}, work match {:.3}", home_ok as f64 / n, work_ok as f64 / n);

    let vocab = TokenVocab::from_map(&world.map);
    let set = label_trajectories(&trajs, &vocab)?;
    if let Some(first) = set.trajectories.first() {
        println!("{} labelled as {:?}; first day {:?}", first.device_id, first.label(), &first.body[..24]);
    }
    println!("dropped: {} without home, {} without work", set.dropped_no_home, set.dropped_no_work);
    Ok(())
}
