//! Grid-search tuning of one method's parameters, reporting mean gap and
//! compression per point and the best point with compression of at least 95%.
//!
//! cargo run --release --example grid_search -- [method] [grid] [n_evs] [repetitions]
//! e.g. grid_search fo "t_es=0:8:1;tf=0:4:0.5" 500 2

use flexbench::bench::{grid_search, BenchConfig, Method, TuningGrid};
use flexbench::domain::TimeGrid;
use flexbench::profiles::ProfileGenConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let method: Method = args.first().map_or("fo", String::as_str).parse()?;
    let grid_def = TuningGrid::parse(args.get(1).map_or("t_es=0:8:1;tf=0:4:0.5", String::as_str))?;
    let n_evs = args.get(2).map_or(Ok(300), |s| s.parse())?;
    let reps: u64 = args.get(3).map_or(Ok(2), |s| s.parse())?;
    let cfg = BenchConfig {
        methods: vec![method],
        fleet: ProfileGenConfig { n_evs, ..Default::default() },
        seeds: (0..reps).collect(),
        ..Default::default()
    };
    let rows = grid_search(method, &grid_def, &cfg, &TimeGrid::default())?;
    let names: Vec<&str> = grid_def.axes.iter().map(|(n, _)| n.as_str()).collect();
    println!("{}  mean_gap  mean_compression", names.join("  "));
    for r in &rows {
        let point: Vec<String> = r.point.iter().map(|v| format!("{v:>5}")).collect();
        match (&r.error, r.mean_gap, r.mean_compression) {
            (Some(e), _, _) => println!("{}  failed: {e}", point.join("  ")),
            (None, Some(g), Some(c)) => println!("{}  {g:.4}  {c:.4}", point.join("  ")),
            _ => println!("{}  skipped", point.join("  ")),
        }
    }
    let best = rows
        .iter()
        .filter(|r| r.mean_compression.is_some_and(|c| c >= 0.95))
        .filter_map(|r| r.mean_gap.map(|g| (g, r)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((g, r)) => println!("\nbest with compression >= 0.95: {:?} (gap {g:.4})", r.point),
        None => println!("\nno point reaches compression 0.95"),
    }
    Ok(())
}
