//! Uncontrolled charging against the per-vehicle optimum, solved both by the
//! greedy cheapest-steps rule and by the LP oracle over battery energy states.
//!
//! cargo run --release --example optimal_baseline -- [n_evs] [seed] [sin|future]

use std::time::Instant;

use flexbench::baseline::{lp_optimal_oracle, optimize_fleet_optimal};
use flexbench::bench::{BenchConfig, Instance};
use flexbench::domain::{gap, total_cost, TimeGrid};
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(100), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let price = match args.get(2).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let grid = TimeGrid::default();
    let cfg = BenchConfig { price, fleet: ProfileGenConfig { n_evs, ..Default::default() }, ..Default::default() };
    let inst = Instance::build(&cfg, seed, &grid)?;
    let events = &inst.uncontrolled.events;

    let t = Instant::now();
    let greedy = optimize_fleet_optimal(events, &inst.price, &grid)?;
    let greedy_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let lp = lp_optimal_oracle(events, &inst.uncontrolled.soc_records, &inst.scenario.ev, &inst.price, &grid)?;
    let lp_ms = t.elapsed().as_secs_f64() * 1e3;

    let c_greedy = total_cost(&greedy, &inst.price, &grid)?;
    let c_lp = total_cost(&lp, &inst.price, &grid)?;
    println!("{n_evs} vehicles, {} events, {} price", events.len(), inst.price.label);
    println!("uncontrolled cost {:>12.4}  gap {:.4}", inst.cost_uncontrolled, gap(inst.cost_uncontrolled, c_greedy)?);
    println!("greedy optimum    {c_greedy:>12.4}  {greedy_ms:.1} ms");
    println!("LP oracle         {c_lp:>12.4}  {lp_ms:.1} ms");
    println!("relative difference {:.2e}", (c_greedy - c_lp).abs() / c_lp.abs().max(1e-12));

    // Where the optimum moves load: aggregate power by hour of day.
    let dt = grid.step_duration_h();
    let un = inst.uncontrolled.schedule.aggregate(grid.n_steps())?;
    let opt = greedy.aggregate(grid.n_steps())?;
    let per_hour = (1.0 / dt).round() as usize;
    println!("\nhour  uncontrolled kWh  optimal kWh  (summed over the week)");
    for h in 0..24 {
        let sum = |s: &[f64]| (0..s.len()).filter(|t| (t / per_hour) % 24 == h).map(|t| s[t] * dt).sum::<f64>();
        println!("{h:02}   {:>16.1} {:>12.1}", sum(&un), sum(&opt));
    }
    Ok(())
}
