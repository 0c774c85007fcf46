//! FlexObjects: each event keeps its uncontrolled slice profile and may only
//! shift it in time. Grouping thresholds trade compression for cost.
//!
//! cargo run --release --example flex_objects -- [n_evs] [sin|future]

use flexbench::bench::{BenchConfig, Instance};
use flexbench::domain::{gap, total_cost, TimeGrid};
use flexbench::fo::{aggregate_fos, event_to_fo, fo_pipeline};
use flexbench::grouping::{compression, Attribute, GroupingSpec};
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(1000), |s| s.parse())?;
    let price = match args.get(1).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let grid = TimeGrid::default();
    let cfg = BenchConfig { price, fleet: ProfileGenConfig { n_evs, ..Default::default() }, ..Default::default() };
    let inst = Instance::build(&cfg, 0, &grid)?;
    let events = &inst.uncontrolled.events;
    let energies: Vec<Vec<f64>> = (0..events.len()).map(|i| inst.uncontrolled.step_energies(i, &grid)).collect();

    // The two earliest objects by hand: the aggregate starts with the earlier
    // one, keeps the shorter flexibility, and its profile is the offset sum.
    let mut order: Vec<usize> = (0..events.len()).filter(|&i| events[i].required_grid_energy_kwh > 0.0).collect();
    order.sort_by_key(|&i| (events[i].plug_in, i));
    if let [i, j, ..] = order[..] {
        let (a, b) = (event_to_fo(&events[i], &energies[i])?.unwrap(), event_to_fo(&events[j], &energies[j])?.unwrap());
        let agg = aggregate_fos(&[(0, a.clone()), (1, b.clone())])?;
        for (name, fo) in [("object 0", &a), ("object 1", &b), ("aggregate", &agg.fo)] {
            println!(
                "{name:<9}: earliest start {:>3}, flexibility {:>3} steps, {:>2} slices, {:.2} kWh",
                fo.t_es,
                fo.time_flexibility(),
                fo.profile.len(),
                fo.energy()
            );
        }
        println!();
    }

    println!("{:>8} {:>6} {:>8} {:>12} {:>8}", "t_es h", "tf h", "objects", "compression", "gap");
    for (t_es, tf) in [(0.0, 0.0), (1.0, 0.5), (3.75, 1.75), (8.0, 4.0), (24.0, 24.0)] {
        let spec = GroupingSpec::new(&[(Attribute::EarliestStart, t_es), (Attribute::TimeFlexibility, tf)]);
        let out = fo_pipeline(events, &energies, &inst.price, &grid, &spec)?;
        let g = gap(total_cost(&out.schedule, &inst.price, &grid)?, inst.cost_optimal)?;
        let c = compression(out.n_aggregated, events.len())?;
        println!("{t_es:>8} {tf:>6} {:>8} {c:>12.4} {g:>8.4}", out.n_aggregated);
    }
    Ok(())
}
