//! Finite-difference check of the backpropagated gradients, with and without
//! dropout, on a randomized two-layer model.

use staysynth::nn::{gradient_check, GradCheckConfig, ModelConfig};

fn main() -> staysynth::Result<()> {
    let base = GradCheckConfig::default();
    for dropout in [0.0, 0.3] {
        let config = GradCheckConfig { model: ModelConfig { dropout, ..base.model.clone() }, ..base.clone() };
        let report = gradient_check(&config)?;
        println!("dropout {dropout}:");
        for b in &report.blocks {
            println!("  {:<16} {:>4} checked  max rel err {:.2e}", b.name, b.checked, b.max_relative_error);
        }
        println!("  overall {:.2e} (pass at < 1e-3: {})", report.max_relative_error(), report.max_relative_error() < 1e-3);
    }
    Ok(())
}
