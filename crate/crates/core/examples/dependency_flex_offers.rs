//! Dependency-based FlexOffers: slices whose power range depends on the energy
//! already charged. Prints one vehicle's offer, then the fleet cost for
//! several sample counts.
//!
//! cargo run --release --example dependency_flex_offers -- [n_evs] [sin|future]

use flexbench::bench::{BenchConfig, Instance};
use flexbench::dfo::{dfo_pipeline, event_to_dfo};
use flexbench::domain::{gap, total_cost, ChargingEvent, TimeGrid};
use flexbench::grouping::{compression, GroupingSpec};
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::default();
    // 20 kWh over two hours at 11 kW: the first steps are free, the last
    // ones are forced by whatever was not charged before.
    let ev = ChargingEvent { ev_id: 0, plug_in: 0, plug_out: 8, required_grid_energy_kwh: 20.0, max_power_kw: 11.0 };
    let dfo = event_to_dfo(&ev, &grid)?;
    println!("single event, {} slices:", dfo.len());
    for (k, s) in dfo.slices.iter().enumerate() {
        let y: Vec<String> = s.columns.iter().map(|c| format!("x={:.2}:[{:.2},{:.2}]", c.x, c.y_min, c.y_max)).collect();
        println!("  step {k}: energy so far in [{:.2}, {:.2}]  {}", s.x_lo, s.x_hi, y.join(" "));
    }

    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(1000), |s| s.parse())?;
    let price = match args.get(1).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let cfg = BenchConfig { price, fleet: ProfileGenConfig { n_evs, ..Default::default() }, ..Default::default() };
    let inst = Instance::build(&cfg, 0, &grid)?;
    let events = &inst.uncontrolled.events;
    println!("\n{n_evs} vehicles, {} events, {} price", events.len(), inst.price.label);
    println!("{:>8} {:>8} {:>12} {:>8}", "samples", "offers", "compression", "gap");
    for num_samples in [2, 4, 8] {
        let out = dfo_pipeline(events, &inst.price, &grid, &GroupingSpec::dfo_default(), num_samples)?;
        let g = gap(total_cost(&out.schedule, &inst.price, &grid)?, inst.cost_optimal)?;
        let c = compression(out.n_aggregated, events.len())?;
        println!("{num_samples:>8} {:>8} {c:>12.4} {g:>8.4}", out.n_aggregated);
    }
    Ok(())
}
