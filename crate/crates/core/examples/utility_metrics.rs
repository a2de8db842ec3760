//! Utility table for two reference samples drawn without a model: a second
//! real sample with the same labels, and uniformly random trajectories.
//! Any synthetic sample can be scored the same way.

use staysynth::experiment::build_desk_world;
use staysynth::metrics::utility::{evaluate_utility, make_baselines, write_utility_table, UtilityOptions};
use staysynth::runtime::draw_sample;
use staysynth::trajectory::LabeledTrajectory;
use staysynth::worldsim::WorldConfig;

fn main() -> staysynth::Result<()> {
    let world = build_desk_world(&WorldConfig { n_agents: 1000, ..WorldConfig::default() })?;
    let d = &world.data;
    let s = draw_sample(d, 250, 1)?;
    let labels: Vec<_> = s.iter().map(LabeledTrajectory::label).collect();
    let baselines = make_baselines(d, &labels, world.vocab.size(), s[0].body.len(), 1)?;
    let samples: [(&str, &[LabeledTrajectory]); 2] =
        [("secondary_real", &baselines.secondary), ("random", &baselines.random)];
    let report = evaluate_utility(d, &s, &samples, &world.map, &world.vocab, &UtilityOptions::default())?;

    write_utility_table(std::io::stdout(), &report)?;
    if let Some(w) = &report.week_change {
        println!("week change: home {:.3} work {:.3}", w.home_change_rate, w.work_change_rate);
    }
    for c in &report.columns {
        let chi = &c.chi_squared;
        println!("{}: chi2 {:.1} on {} df, p {:.3}, reject {}", c.name, chi.statistic, chi.df, chi.p_value, chi.reject);
    }
    Ok(())
}
