//! Command-line front end. `run` returns the process exit code:
//! 0 success, 2 configuration error, 3 a benchmark record failed, 4 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    grid_search, run_benchmark, save_results_csv, save_summary_json, save_tuning_csv, summarize, BenchConfig, Method,
    Scenario, TuningGrid,
};
use crate::domain::TimeGrid;
use crate::error::Error;
use crate::prices::{export_prices, PriceConfig};
use crate::profiles::{export_profiles, generate_fleet, ProfileGenConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILED_RECORD: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FLEXBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "flexbench", version, about = "Benchmark of EV charging flexibility aggregation methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run methods over seeded repetitions; writes results.csv and summary.json.
    Bench(BenchArgs),
    /// Grid-search one method's parameters; writes tuning_<method>.csv.
    Tune(TuneArgs),
    /// Write a generated fleet as JSON.
    ExportProfiles(ExportProfilesArgs),
    /// Write one week of prices as CSV.
    ExportPrices(ExportPricesArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sin, future or csv:<path>.
    #[arg(long)]
    price: Option<String>,
    #[arg(long)]
    n_evs: Option<usize>,
    /// Comma-separated seeds or a range such as 0..10.
    #[arg(long)]
    seeds: Option<String>,
    /// BASE, WORK, WINTER, PHIGH or PLOW.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated method ids, e.g. optimal,vb_ll,dfo.
    #[arg(long)]
    methods: Option<String>,
    /// Record wall-clock runtimes (output is then no longer reproducible).
    #[arg(long)]
    record_runtime: bool,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    method: String,
    /// Preset (fo, dfo-paper, vb-grpd, fpc) or axes like "t_es=0:24:0.25;tf=1.75".
    #[arg(long)]
    grid: String,
    /// Repetitions when --seeds is not given.
    #[arg(long, default_value_t = 5)]
    repetitions: u64,
}

#[derive(Debug, Args)]
struct ExportProfilesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_evs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExportPricesArgs {
    /// sin, future or csv:<path>.
    #[arg(long, default_value = "sin")]
    price: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

/// Full configuration as read from a file: the benchmark fields plus `out_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub bench: BenchConfig,
    pub out_dir: Option<PathBuf>,
}

/// Parses and validates a config document. Unknown fields are rejected.
pub fn parse_config(text: &str) -> Result<CliConfig, Error> {
    let bad = |m: String| Error::Config(format!("config: {m}"));
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| bad("top level must be an object".into()))?;
    let out_dir = match obj.remove("out_dir") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(PathBuf::from(s)),
        Some(other) => return Err(bad(format!("out_dir must be a string, got {other}"))),
    };
    let bench: BenchConfig = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
    bench.validate()?;
    Ok(CliConfig { bench, out_dir })
}

pub fn load_config(path: &Path) -> Result<CliConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_price(s: &str) -> Result<PriceConfig, Error> {
    let s = s.trim();
    if let Some(path) = s.strip_prefix("csv:") {
        return Ok(PriceConfig::Csv { path: path.into(), offset: None, seed: None });
    }
    match s.to_ascii_lowercase().as_str() {
        "sin" => Ok(PriceConfig::Sin {}),
        "future" | "synth_future" | "synth-future" => {
            Ok(PriceConfig::SynthFuture { seed: None, params: Default::default() })
        }
        _ => Err(Error::Config(format!("unknown price '{s}'; use sin, future or csv:<path>"))),
    }
}

/// `3`, `0,4,7` or `0..10` (exclusive end).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Config(format!("bad seed list '{s}'"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn base_config(common: &CommonArgs) -> Result<(BenchConfig, Option<PathBuf>), Failure> {
    let (mut cfg, out_dir) = match &common.config {
        Some(path) => {
            let c = load_config(path).map_err(|e| Failure::Config(e.to_string()))?;
            (c.bench, c.out_dir)
        }
        None => (BenchConfig::default(), None),
    };
    if let Some(p) = &common.price {
        cfg.price = parse_price(p)?;
    }
    if let Some(n) = common.n_evs {
        cfg.fleet.n_evs = n;
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(s) = &common.scenario {
        cfg.scenario = s.parse::<Scenario>()?;
    }
    Ok((cfg, common.out.clone().or(out_dir)))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // A pool built earlier in this process (tests, repeated calls) stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<i32, Failure> {
    let (mut cfg, out) = base_config(&args.common)?;
    if let Some(m) = &args.methods {
        cfg.methods = m.split(',').map(str::parse::<Method>).collect::<Result<_, _>>()?;
    }
    cfg.record_runtime |= args.record_runtime;
    cfg.validate()?;
    let out = out.unwrap_or_else(|| PathBuf::from("."));
    let grid = TimeGrid::default();
    let records = run_benchmark(&cfg, &grid)?;
    ensure_dir(&out)?;
    save_results_csv(&records, &out.join("results.csv"))?;
    let summary = summarize(&cfg, &records);
    save_summary_json(&summary, &out.join("summary.json"))?;
    for (m, g) in &summary.median_gap {
        println!("{:<14} median gap {g:.4}", m.id());
    }
    for f in &summary.failures {
        eprintln!("failed: {} seed {}: {}", f.method, f.seed, f.error);
    }
    Ok(if summary.failures.is_empty() { EXIT_OK } else { EXIT_FAILED_RECORD })
}

fn cmd_tune(args: TuneArgs) -> Result<i32, Failure> {
    let (mut cfg, out) = base_config(&args.common)?;
    let method: Method = args.method.parse()?;
    if args.common.seeds.is_none() {
        cfg.seeds = (0..args.repetitions).collect();
    }
    if args.common.n_evs.is_none() && args.common.config.is_none() {
        cfg.fleet.n_evs = 1000;
    }
    cfg.methods = vec![method];
    let grid_def = TuningGrid::parse(&args.grid)?;
    let out = out.unwrap_or_else(|| PathBuf::from("."));
    let rows = grid_search(method, &grid_def, &cfg, &TimeGrid::default())?;
    ensure_dir(&out)?;
    let names: Vec<String> = grid_def.axes.iter().map(|(n, _)| n.clone()).collect();
    let path = out.join(format!("tuning_{}.csv", method.id()));
    save_tuning_csv(&names, &rows, &path)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    for r in rows.iter().filter_map(|r| r.error.as_ref()).take(5) {
        eprintln!("failed point: {r}");
    }
    println!("{} points written to {}", rows.len(), path.display());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILED_RECORD })
}

fn cmd_export_profiles(args: ExportProfilesArgs) -> Result<i32, Failure> {
    let mut fleet_cfg = match &args.config {
        Some(p) => load_config(p).map_err(|e| Failure::Config(e.to_string()))?.bench.fleet,
        None => ProfileGenConfig::default(),
    };
    if let Some(n) = args.n_evs {
        fleet_cfg.n_evs = n;
    }
    if let Some(s) = args.seed {
        fleet_cfg.seed = s;
    }
    fleet_cfg.validate()?;
    let fleet = generate_fleet(&fleet_cfg, &TimeGrid::default())?;
    export_profiles(&fleet, &args.out)?;
    Ok(EXIT_OK)
}

fn cmd_export_prices(args: ExportPricesArgs) -> Result<i32, Failure> {
    let cfg = parse_price(&args.price)?;
    let price = cfg.build(&TimeGrid::default(), args.seed)?;
    export_prices(&price, &args.out)?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Bench(a) => cmd_bench(a),
        Command::Tune(a) => cmd_tune(a),
        Command::ExportProfiles(a) => cmd_export_profiles(a),
        Command::ExportPrices(a) => cmd_export_prices(a),
    });
    match result {
        Ok(code) => code,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            EXIT_IO
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_and_prices_parse() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0, 4,7").unwrap(), vec![0, 4, 7]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x").is_err());
        assert_eq!(parse_price("SIN").unwrap(), PriceConfig::Sin {});
        assert!(matches!(parse_price("csv:/a/b.csv").unwrap(), PriceConfig::Csv { .. }));
        assert!(parse_price("real").is_err());
    }

    #[test]
    fn config_accepts_out_dir_and_rejects_unknown_fields() {
        let c = parse_config(r#"{"methods": ["optimal", "vb_ll"], "seeds": [1, 2], "out_dir": "x",
                                "price": {"kind": "synth_future"}, "fleet": {"n_evs": 20}}"#)
            .unwrap();
        assert_eq!(c.out_dir, Some(PathBuf::from("x")));
        assert_eq!(c.bench.methods, vec![Method::Optimal, Method::VbLl]);
        assert_eq!(c.bench.fleet.n_evs, 20);
        assert!(parse_config(r#"{"method": ["optimal"]}"#).is_err());
        assert!(parse_config(r#"{"params": {"dfo_num_samples": 1}}"#).is_err());
        assert!(parse_config("[]").is_err());
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(run(["flexbench", "bench", "--bogus"]), EXIT_CONFIG);
        assert_eq!(run(["flexbench", "bench", "--methods", "nope"]), EXIT_CONFIG);
        assert_eq!(run(["flexbench", "--help"]), EXIT_OK);
    }
}
