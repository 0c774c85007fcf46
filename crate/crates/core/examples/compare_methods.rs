//! Runs every method on a seeded fleet and prints the median gap per method.
//!
//! cargo run --release --example compare_methods -- [n_evs] [n_seeds] [sin|future]

use flexbench::bench::{run_benchmark, summarize, BenchConfig, Method};
use flexbench::domain::TimeGrid;
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_evs = args.first().map_or(Ok(200), |s| s.parse())?;
    let n_seeds: u64 = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let price = match args.get(2).map(String::as_str) {
        Some("future") => PriceConfig::SynthFuture { seed: None, params: Default::default() },
        _ => PriceConfig::Sin {},
    };
    let cfg = BenchConfig {
        methods: Method::ALL.iter().copied().filter(|m| *m != Method::OptimalLp).collect(),
        price,
        fleet: ProfileGenConfig { n_evs, ..Default::default() },
        seeds: (0..n_seeds).collect(),
        record_runtime: true,
        ..Default::default()
    };
    let records = run_benchmark(&cfg, &TimeGrid::default())?;
    println!("{:<14} {:>6} {:>10} {:>8} {:>11} {:>10} {:>10}", "method", "seed", "gap", "compr", "runtime_ms", "shortfall", "unmet");
    for r in &records {
        match &r.error {
            Some(e) => println!("{:<14} {:>6} failed: {e}", r.method.id(), r.seed),
            None => println!(
                "{:<14} {:>6} {:>10.4} {:>8.4} {:>11.1} {:>10.2} {:>10.2}",
                r.method.id(),
                r.seed,
                r.gap.unwrap_or(f64::NAN),
                r.compression.unwrap_or(f64::NAN),
                r.runtime_ms.unwrap_or(f64::NAN),
                r.shortfall_kwh.unwrap_or(f64::NAN),
                r.unmet_kwh.unwrap_or(f64::NAN),
            ),
        }
    }
    println!();
    for (m, g) in summarize(&cfg, &records).median_gap {
        println!("median gap {:<14} {g:.4}", m.id());
    }
    Ok(())
}
