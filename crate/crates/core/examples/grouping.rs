//! Threshold grouping with the tuned thresholds of each method, and how the
//! number of groups grows with the fleet.
//!
//! cargo run --release --example grouping

use flexbench::bench::{BenchConfig, Instance};
use flexbench::domain::TimeGrid;
use flexbench::grouping::{compression, group_events, group_spread, GroupingSpec};
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::default();
    let specs = [
        ("FO (earliest start, flexibility)", GroupingSpec::fo_default()),
        ("DFO (plug-in, plug-out)", GroupingSpec::dfo_default()),
        ("VB-LL-Grpd (plug-in, plug-out)", GroupingSpec::vb_default()),
    ];
    for n_evs in [100, 1000, 10_000] {
        let cfg = BenchConfig { fleet: ProfileGenConfig { n_evs, ..Default::default() }, ..Default::default() };
        let events = Instance::build(&cfg, 0, &grid)?.uncontrolled.events;
        println!("{n_evs} vehicles, {} events", events.len());
        for (name, spec) in &specs {
            let groups = group_events(&events, spec, &grid)?;
            let largest = groups.iter().map(Vec::len).max().unwrap_or(0);
            let mut widest = vec![0; spec.criteria.len()];
            for g in &groups {
                for (w, s) in widest.iter_mut().zip(group_spread(&events, g, spec, &grid)) {
                    *w = (*w).max(s);
                }
            }
            println!(
                "  {name:<33} {:>5} groups, compression {:.4}, largest {largest:>4}, widest spread {widest:?} steps (limit {:?})",
                groups.len(),
                compression(groups.len(), events.len())?,
                spec.thresholds_steps(&grid)
            );
        }
    }
    Ok(())
}
