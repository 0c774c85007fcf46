//! Builds the price signals and prints how irregular each day is.
//!
//! cargo run --release --example price_signals -- [seed] [prices.csv]
//!
//! With a CSV path the real-price path is exercised too: a day-aligned week
//! is drawn from the file using the seed.

use flexbench::domain::TimeGrid;
use flexbench::prices::PriceConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.first().map_or(Ok(0), |s| s.parse())?;
    let grid = TimeGrid::default();
    let mut configs = vec![PriceConfig::Sin {}, PriceConfig::SynthFuture { seed: None, params: Default::default() }];
    if let Some(path) = args.get(1) {
        configs.push(PriceConfig::Csv { path: path.into(), offset: None, seed: None });
    }
    for cfg in configs {
        let price = cfg.build(&grid, seed)?;
        let min = price.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let negative = price.values.iter().filter(|v| **v < 0.0).count();
        let per_day = grid.steps_per_day()?;
        let std: Vec<String> = price
            .values
            .chunks(per_day)
            .map(|d| {
                let mean = d.iter().sum::<f64>() / d.len() as f64;
                format!("{:.2}", (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt())
            })
            .collect();
        println!("{:<7} min {min:>6.2}  max 1.00  negative steps {negative:>3}  daily std [{}]", price.label, std.join(" "));
        // One sparkline row per day, 2-hour resolution.
        for day in price.values.chunks(per_day) {
            let line: String = day
                .chunks(8)
                .map(|c| {
                    let v = c.iter().sum::<f64>() / c.len() as f64;
                    [' ', '.', ':', '-', '=', '+', '*', '#'][(((v - min) / (1.0 - min).max(1e-9)) * 7.0).round() as usize]
                })
                .collect();
            println!("        |{line}|");
        }
    }
    Ok(())
}
