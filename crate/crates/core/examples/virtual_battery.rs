//! The virtual battery: first the two-vehicle witness where the aggregate
//! admits a load the fleet cannot follow, then all four variants on a fleet.
//!
//! cargo run --release --example virtual_battery -- [n_evs] [sin|future]

use flexbench::bench::{BenchConfig, Instance};
use flexbench::domain::{gap, total_cost, PriceLabel, PriceSignal, TimeGrid};
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;
use flexbench::vb::{
    aggregate_envelopes, disaggregate, optimize_vb, vb_pipeline, DisaggPolicy, DisaggUnit, EvEnvelope, FpcShape, VbVariant,
};
use flexbench::grouping::GroupingSpec;

fn witness() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::new(1.0, 4)?;
    let env = |id, e_max: Vec<f64>| EvEnvelope {
        id,
        plug_in: 0,
        plug_out: 4,
        max_power_kw: 1.0,
        e_min: vec![0.0; 5],
        e_max,
        departure_kwh: 0.0,
        avg_power_kw: 0.0,
    };
    // A may take 1 kWh in the first hour only, B one per hour for three hours.
    let envs = vec![env(0, vec![0.0, 1.0, 1.0, 1.0, 1.0]), env(1, vec![0.0, 1.0, 2.0, 3.0, 3.0])];
    let vb = aggregate_envelopes(&envs, 1.0, None)?;
    let price = PriceSignal { values: vec![1.0, -1.0, -1.0, 1.0], label: PriceLabel::Custom };
    let target = optimize_vb(&vb, &price, &grid, None)?;
    let units: Vec<DisaggUnit> = envs.iter().map(|e| DisaggUnit::from_envelope(e, 1.0)).collect();
    let d = disaggregate(&target, 0, &units, DisaggPolicy::LeastLaxityFirst, &grid)?;
    println!("witness: VB optimum {target:?}, fleet realizes {:?}, shortfall {} kWh", d.realized_kw, d.violations.shortfall_kwh);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    witness()?;
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(1000), |s| s.parse())?;
    let price = match args.get(1).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let grid = TimeGrid::default();
    let cfg = BenchConfig { price, fleet: ProfileGenConfig { n_evs, ..Default::default() }, ..Default::default() };
    let inst = Instance::build(&cfg, 0, &grid)?;
    let eta = inst.scenario.ev.charge_efficiency;
    println!("\n{n_evs} vehicles, {} events, {} price", inst.n_events(), inst.price.label);
    println!("{:<11} {:>4} {:>8} {:>13} {:>13} {:>10}", "variant", "VBs", "gap", "shortfall kWh", "overshoot kWh", "unmet kWh");
    for variant in [
        VbVariant::Ll {},
        VbVariant::Ed {},
        VbVariant::LlFpc { shape: FpcShape::default() },
        VbVariant::LlGrpd { grouping: GroupingSpec::vb_default() },
    ] {
        let out = vb_pipeline(&inst.uncontrolled.events, &inst.price, &grid, eta, &variant)?;
        let g = gap(total_cost(&out.schedule, &inst.price, &grid)?, inst.cost_optimal)?;
        let v = out.violations;
        println!(
            "{:<11} {:>4} {g:>8.4} {:>13.1} {:>13.1} {:>10.3}",
            variant.name(),
            out.n_aggregated,
            v.shortfall_kwh,
            v.overshoot_kwh,
            v.unmet_kwh
        );
    }
    Ok(())
}
