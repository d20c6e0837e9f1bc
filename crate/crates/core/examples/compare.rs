//! Cycle-averaged work and efficiency of optimal and naive driving.
//!
//! cargo run --release -p szilard-core --example compare

use szilard_core::analysis::{log_grid, sweep, SweepOptions};

fn main() -> szilard_core::Result<()> {
    let rows = sweep(&log_grid(0.1, 10.0, 7), &SweepOptions::default())?;
    println!(
        "{:>8} {:>9} {:>9} {:>7} {:>7}",
        "γτ", "βW opt", "βW naive", "η opt", "η naive"
    );
    for r in rows {
        let (Some(o), Some(n)) = (r.optimal, r.naive) else {
            eprintln!("γτ = {}: {}", r.gamma_tau, r.error.unwrap_or_default());
            continue;
        };
        println!(
            "{:>8.3} {:>9.5} {:>9.5} {:>7.4} {:>7.4}",
            r.gamma_tau, o.cycle.work, n.cycle.work, o.cycle.efficiency, n.cycle.efficiency
        );
    }
    Ok(())
}
