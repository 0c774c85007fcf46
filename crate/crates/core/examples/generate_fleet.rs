//! Generates a synthetic week of driving, simulates uncontrolled home
//! charging and prints what the charging events look like.
//!
//! cargo run --release --example generate_fleet -- [n_evs] [seed] [out.json]

use flexbench::baseline::simulate_uncontrolled;
use flexbench::domain::{EvParams, Location, TimeGrid};
use flexbench::profiles::{export_profiles, generate_fleet, ProfileGenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(1000), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(1), |s| s.parse())?;
    let grid = TimeGrid::default();
    let fleet = generate_fleet(&ProfileGenConfig { n_evs, seed, ..Default::default() }, &grid)?;
    if let Some(path) = args.get(2) {
        export_profiles(&fleet, path)?;
        println!("wrote {path}");
    }

    let trips: usize = fleet.iter().map(|p| p.events.iter().filter(|e| e.is_trip()).count()).sum();
    let un = simulate_uncontrolled(&fleet, &EvParams::default(), &grid, &[Location::Home])?;
    let dt = grid.step_duration_h();
    let n = un.events.len().max(1) as f64;
    let window_h: f64 = un.events.iter().map(|e| e.window_len() as f64 * dt).sum::<f64>() / n;
    let energy: f64 = un.events.iter().map(|e| e.required_grid_energy_kwh).sum();
    let flex_h: f64 = un.events.iter().map(|e| e.time_flexibility(&grid) as f64 * dt).sum::<f64>() / n;

    println!("{} vehicles, {trips} trips, {} home charging events", fleet.len(), un.events.len());
    println!("mean plug-in window {window_h:.1} h, mean time flexibility {flex_h:.1} h");
    println!("grid energy over the week {energy:.0} kWh ({:.1} kWh per vehicle)", energy / fleet.len().max(1) as f64);
    println!("trips that drained the battery: {}", un.depleted_trips.len());

    // Hourly plug-in histogram, the shape every aggregation method works with.
    let mut hist = [0usize; 24];
    for e in &un.events {
        hist[((e.plug_in as f64 * dt) as usize) % 24] += 1;
    }
    let max = *hist.iter().max().unwrap_or(&1).max(&1);
    for (h, c) in hist.iter().enumerate() {
        println!("{h:02}h {:>6} {}", c, "#".repeat(c * 50 / max));
    }
    Ok(())
}
