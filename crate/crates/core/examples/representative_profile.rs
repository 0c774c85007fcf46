//! Representative profiles: optimize a scaled random subset of the fleet and
//! extrapolate its cost. Shows how the estimate converges with sample size
//! and how much it moves between draws.
//!
//! cargo run --release --example representative_profile -- [n_evs] [sin|future]

use flexbench::bench::{BenchConfig, Instance};
use flexbench::domain::{gap, TimeGrid};
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;
use flexbench::rep::{rep_pipeline, RepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs: usize = args.first().map_or(Ok(2000), |s| s.parse())?;
    let price = match args.get(1).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let grid = TimeGrid::default();
    let cfg = BenchConfig { price, fleet: ProfileGenConfig { n_evs, ..Default::default() }, ..Default::default() };
    let inst = Instance::build(&cfg, 0, &grid)?;
    let fleet_params = vec![inst.scenario.ev; inst.fleet.len()];
    println!("fleet of {n_evs}, true optimum {:.4}", inst.cost_optimal);
    println!("{:>9} {:>10} {:>10} {:>10}", "profiles", "min gap", "max gap", "signed");
    for n_profiles in [10, 50, 100, 250, 500, 1000].into_iter().filter(|n| *n <= n_evs) {
        let mut gaps = Vec::new();
        let mut signed = 0.0;
        for draw in 0..10 {
            let rep = rep_pipeline(
                &inst.uncontrolled.events,
                &fleet_params,
                &RepConfig { n_profiles, seed: draw },
                &inst.price,
                &grid,
            )?;
            gaps.push(gap(rep.estimated_cost, inst.cost_optimal)?);
            signed += (rep.estimated_cost - inst.cost_optimal) / inst.cost_optimal.abs() / 10.0;
        }
        let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = gaps.iter().cloned().fold(0.0, f64::max);
        println!("{n_profiles:>9} {lo:>10.4} {hi:>10.4} {signed:>+10.4}");
    }
    println!("\nThe estimate can land on either side of the optimum: it is an extrapolation, not a fleet schedule.");
    Ok(())
}
