//! Sensitivity scenarios: work charging, winter consumption and high or low
//! charging power, each compared with the base case.
//!
//! cargo run --release --example sensitivity -- [n_evs] [n_seeds] [sin|future]

use flexbench::bench::{run_benchmark, summarize, BenchConfig, Method, Scenario};
use flexbench::domain::TimeGrid;
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(1000), |s| s.parse())?;
    let n_seeds: u64 = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let price = match args.get(2).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let methods = vec![Method::Uncontrolled, Method::Rep, Method::VbLl, Method::VbLlGrpd, Method::Fo, Method::Dfo];
    let grid = TimeGrid::default();
    print!("{:<8}", "scenario");
    for m in &methods {
        print!(" {:>12}", m.id());
    }
    println!();
    for scenario in Scenario::ALL {
        let cfg = BenchConfig {
            methods: methods.clone(),
            price: price.clone(),
            fleet: ProfileGenConfig { n_evs, ..Default::default() },
            scenario,
            seeds: (0..n_seeds).collect(),
            ..Default::default()
        };
        let summary = summarize(&cfg, &run_benchmark(&cfg, &grid)?);
        print!("{:<8}", scenario.name());
        for m in &methods {
            print!(" {:>12.4}", summary.median_gap.get(m).copied().unwrap_or(f64::NAN));
        }
        println!();
    }
    println!("\nmedian gap over {n_seeds} seeds, {n_evs} vehicles");
    Ok(())
}
