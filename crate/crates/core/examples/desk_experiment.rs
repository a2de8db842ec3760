//! Desk-scale experiment: 2,000 simulated devices, one trained model and
//! ten sampling seeds. Prints a utility and privacy summary per seed.
//!
//! Usage: cargo run --release --example desk_experiment -- [agents] [epochs] [seeds]

use std::time::Instant;

use staysynth::experiment::{build_desk_world, evaluate_seed, train_desk_model, DeskConfig};

fn main() -> staysynth::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut config = DeskConfig::default();
    if let Some(&n) = args.first() {
        config.world.n_agents = n;
    }
    if let Some(&e) = args.get(1) {
        config.train.epochs = e;
    }
    if let Some(&s) = args.get(2) {
        config.n_seeds = s;
    }
    config.sample_size = config.sample_size.min(config.world.n_agents / 4);

    let t0 = Instant::now();
    let world = build_desk_world(&config.world)?;
    println!("D: {} trajectories, vocabulary {}", world.data.len(), world.vocab.size());
    let ckpt = train_desk_model(&world, &config)?;
    println!("trained in {:.1?}, final loss {:.4}", t0.elapsed(), ckpt.meta.final_loss.unwrap_or(f64::NAN));

    println!("seed  kl_trip(syn/rnd)   chi2_p  rho(syn/rnd)    home_err  cutoffs S|S'|S'' at 0.01/0.05/0.10/0.25");
    for seed in 1..=config.n_seeds as u64 {
        let out = evaluate_seed(&world, &ckpt, &config, seed)?;
        let (syn, rnd) = (&out.utility.columns[0], &out.utility.columns[2]);
        let cut: Vec<String> = out
            .privacy
            .cutoffs
            .iter()
            .map(|r| format!("{}|{}|{}", r.s_vs_d, r.sprime_vs_d, r.sdoubleprime_vs_sprime))
            .collect();
        println!(
            "{seed:>4}  {:.4}/{:.4}  {:.3}   {:.3}/{:+.3}   {:.3}     {}",
            syn.kl_trip_distance,
            rnd.kl_trip_distance,
            syn.chi_squared.p_value,
            syn.aggregate_time.pearson,
            rnd.aggregate_time.pearson,
            syn.label_errors.home,
            cut.join("  ")
        );
    }
    println!("total {:.1?}", t0.elapsed());
    Ok(())
}
