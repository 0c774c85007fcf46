//! Benchmark harness: seeded fleets and prices, every method against the
//! per-vehicle optimum, grid-search tuning and result files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{lp_optimal_oracle, optimize_fleet_optimal, simulate_uncontrolled, UncontrolledResult};
use crate::dfo::dfo_pipeline;
use crate::domain::{gap, total_cost, DrivingProfile, EvParams, Location, PriceLabel, PriceSignal, TimeGrid};
use crate::error::{Error, Result};
use crate::fo::fo_pipeline;
use crate::grouping::{compression, Attribute, GroupingSpec};
use crate::prices::PriceConfig;
use crate::profiles::{generate_fleet, ingest_profiles, ProfileGenConfig};
use crate::rep::{rep_pipeline, RepConfig};
use crate::vb::{vb_pipeline, FpcShape, VbVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Uncontrolled,
    Optimal,
    /// The LP formulation of the optimum; same cost as `Optimal`, much slower.
    OptimalLp,
    Rep,
    VbLl,
    VbEd,
    VbLlFpc,
    VbLlGrpd,
    Fo,
    Dfo,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Uncontrolled,
        Method::Optimal,
        Method::OptimalLp,
        Method::Rep,
        Method::VbLl,
        Method::VbEd,
        Method::VbLlFpc,
        Method::VbLlGrpd,
        Method::Fo,
        Method::Dfo,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Uncontrolled => "uncontrolled",
            Method::Optimal => "optimal",
            Method::OptimalLp => "optimal_lp",
            Method::Rep => "rep",
            Method::VbLl => "vb_ll",
            Method::VbEd => "vb_ed",
            Method::VbLlFpc => "vb_ll_fpc",
            Method::VbLlGrpd => "vb_ll_grpd",
            Method::Fo => "fo",
            Method::Dfo => "dfo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `vb_ll_fpc`, `vb-ll-fpc` and `VB-LL-FPC` alike.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.id() == norm)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scenario {
    #[default]
    Base,
    /// Workplace charging at 11 kW.
    Work,
    /// 22 kWh/100km.
    Winter,
    /// 22 kW chargers.
    Phigh,
    /// 4.7 kW chargers.
    Plow,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::Base, Scenario::Work, Scenario::Winter, Scenario::Phigh, Scenario::Plow];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Base => "BASE",
            Scenario::Work => "WORK",
            Scenario::Winter => "WINTER",
            Scenario::Phigh => "PHIGH",
            Scenario::Plow => "PLOW",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// Vehicle parameters and charging locations of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: Scenario,
    pub ev: EvParams,
    pub locations: Vec<Location>,
}

impl ScenarioConfig {
    pub fn preset(name: Scenario) -> Self {
        let mut ev = EvParams::default();
        let mut locations = vec![Location::Home];
        match name {
            Scenario::Base => {}
            // Same rating as at home, so one power figure serves both.
            Scenario::Work => locations.push(Location::Work),
            Scenario::Winter => ev.consumption_kwh_per_100km = 22.0,
            Scenario::Phigh => ev.max_charge_power_kw = 22.0,
            Scenario::Plow => ev.max_charge_power_kw = 4.7,
        }
        ScenarioConfig { name, ev, locations }
    }
}

/// Tunable parameters of the aggregation methods; defaults are the tuned values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    pub rep_profiles: usize,
    pub fo_grouping: GroupingSpec,
    pub dfo_grouping: GroupingSpec,
    pub dfo_num_samples: usize,
    pub vb_fpc: FpcShape,
    pub vb_grouping: GroupingSpec,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            rep_profiles: 500,
            fo_grouping: GroupingSpec::fo_default(),
            dfo_grouping: GroupingSpec::dfo_default(),
            dfo_num_samples: 4,
            vb_fpc: FpcShape::default(),
            vb_grouping: GroupingSpec::vb_default(),
        }
    }
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        if self.rep_profiles == 0 {
            return Err(Error::Config("rep_profiles must be positive".into()));
        }
        if self.dfo_num_samples < 2 {
            return Err(Error::Config(format!("dfo_num_samples must be at least 2, got {}", self.dfo_num_samples)));
        }
        self.fo_grouping.validate()?;
        self.dfo_grouping.validate()?;
        self.vb_grouping.validate()?;
        self.vb_fpc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub price: PriceConfig,
    /// Its `seed` is replaced by each repetition's seed.
    pub fleet: ProfileGenConfig,
    /// Fleet file used for every repetition instead of generated fleets.
    pub profiles: Option<PathBuf>,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub params: MethodParams,
    /// Wall-clock times make output non-reproducible, so they are opt-in.
    pub record_runtime: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::Uncontrolled, Method::Optimal],
            price: PriceConfig::Sin {},
            fleet: ProfileGenConfig::default(),
            profiles: None,
            scenario: Scenario::Base,
            seeds: vec![0],
            params: MethodParams::default(),
            record_runtime: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.profiles.is_none() {
            self.fleet.validate()?;
        }
        self.price.validate()?;
        self.params.validate()
    }
}

/// Independent stream for one consumer of a repetition seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PRICE_STREAM: u64 = 1;
const REP_STREAM: u64 = 2;

/// Everything the methods of one repetition share.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub grid: TimeGrid,
    pub scenario: ScenarioConfig,
    pub fleet: Vec<DrivingProfile>,
    pub price: PriceSignal,
    pub uncontrolled: UncontrolledResult,
    pub cost_uncontrolled: f64,
    pub cost_optimal: f64,
}

impl Instance {
    pub fn build(cfg: &BenchConfig, seed: u64, grid: &TimeGrid) -> Result<Instance> {
        let fleet = match &cfg.profiles {
            Some(path) => ingest_profiles(path, grid)?,
            None => generate_fleet(&ProfileGenConfig { seed, ..cfg.fleet.clone() }, grid)?,
        };
        let price = cfg.price.build(grid, derive_seed(seed, PRICE_STREAM))?;
        Self::from_parts(seed, grid, ScenarioConfig::preset(cfg.scenario), fleet, price)
    }

    pub fn from_parts(
        seed: u64,
        grid: &TimeGrid,
        scenario: ScenarioConfig,
        fleet: Vec<DrivingProfile>,
        price: PriceSignal,
    ) -> Result<Instance> {
        let uncontrolled = simulate_uncontrolled(&fleet, &scenario.ev, grid, &scenario.locations)?;
        let cost_uncontrolled = total_cost(&uncontrolled.schedule, &price, grid)?;
        let optimal = optimize_fleet_optimal(&uncontrolled.events, &price, grid)?;
        let cost_optimal = total_cost(&optimal, &price, grid)?;
        Ok(Instance {
            seed,
            grid: *grid,
            scenario,
            fleet,
            price,
            uncontrolled,
            cost_uncontrolled,
            cost_optimal,
        })
    }

    pub fn n_events(&self) -> usize {
        self.uncontrolled.events.len()
    }
}

/// What one method produced on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodRun {
    pub cost: f64,
    pub n_aggregated: usize,
    pub shortfall_kwh: f64,
    pub overshoot_kwh: f64,
    pub unmet_kwh: f64,
    pub runtime_ms: f64,
}

/// Runs one method end to end. The runtime covers object creation,
/// aggregation, optimization and disaggregation.
pub fn run_method(inst: &Instance, method: Method, params: &MethodParams) -> Result<MethodRun> {
    let grid = &inst.grid;
    let events = &inst.uncontrolled.events;
    let price = &inst.price;
    let eta = inst.scenario.ev.charge_efficiency;
    let n = events.len();
    let t0 = Instant::now();
    let plain = |cost: f64, n_aggregated: usize| MethodRun {
        cost,
        n_aggregated,
        shortfall_kwh: 0.0,
        overshoot_kwh: 0.0,
        unmet_kwh: 0.0,
        runtime_ms: 0.0,
    };
    let vb = |variant: VbVariant| -> Result<MethodRun> {
        let out = vb_pipeline(events, price, grid, eta, &variant)?;
        Ok(MethodRun {
            shortfall_kwh: out.violations.shortfall_kwh,
            overshoot_kwh: out.violations.overshoot_kwh,
            unmet_kwh: out.violations.unmet_kwh,
            ..plain(total_cost(&out.schedule, price, grid)?, out.n_aggregated)
        })
    };
    let mut run = match method {
        Method::Uncontrolled => plain(total_cost(&inst.uncontrolled.schedule, price, grid)?, n),
        Method::Optimal => plain(total_cost(&optimize_fleet_optimal(events, price, grid)?, price, grid)?, n),
        Method::OptimalLp => {
            let params = &inst.scenario.ev;
            let s = lp_optimal_oracle(events, &inst.uncontrolled.soc_records, params, price, grid)?;
            plain(total_cost(&s, price, grid)?, n)
        }
        Method::Rep => {
            let fleet_params = vec![inst.scenario.ev; inst.fleet.len()];
            let cfg = RepConfig {
                n_profiles: params.rep_profiles.min(inst.fleet.len()),
                seed: derive_seed(inst.seed, REP_STREAM),
            };
            let out = rep_pipeline(events, &fleet_params, &cfg, price, grid)?;
            plain(out.estimated_cost, out.scaled_events.len())
        }
        Method::VbLl => vb(VbVariant::Ll {})?,
        Method::VbEd => vb(VbVariant::Ed {})?,
        Method::VbLlFpc => vb(VbVariant::LlFpc { shape: params.vb_fpc })?,
        Method::VbLlGrpd => vb(VbVariant::LlGrpd { grouping: params.vb_grouping.clone() })?,
        Method::Fo => {
            let energies: Vec<Vec<f64>> = (0..n).map(|i| inst.uncontrolled.step_energies(i, grid)).collect();
            let out = fo_pipeline(events, &energies, price, grid, &params.fo_grouping)?;
            plain(total_cost(&out.schedule, price, grid)?, out.n_aggregated)
        }
        Method::Dfo => {
            let out = dfo_pipeline(events, price, grid, &params.dfo_grouping, params.dfo_num_samples)?;
            plain(total_cost(&out.schedule, price, grid)?, out.n_aggregated)
        }
    };
    run.runtime_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub method: Method,
    pub price: PriceLabel,
    pub scenario: Scenario,
    pub seed: u64,
    pub n_evs: usize,
    pub cost: Option<f64>,
    pub cost_optimal: Option<f64>,
    pub cost_uncontrolled: Option<f64>,
    pub gap: Option<f64>,
    pub compression: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub shortfall_kwh: Option<f64>,
    pub overshoot_kwh: Option<f64>,
    pub unmet_kwh: Option<f64>,
    /// Set when the record failed; the numeric fields are then empty.
    pub error: Option<String>,
}

impl BenchmarkRecord {
    fn failed(method: Method, cfg: &BenchConfig, seed: u64, n_evs: usize, err: &Error) -> Self {
        BenchmarkRecord {
            method,
            price: cfg.price.label(),
            scenario: cfg.scenario,
            seed,
            n_evs,
            cost: None,
            cost_optimal: None,
            cost_uncontrolled: None,
            gap: None,
            compression: None,
            runtime_ms: None,
            shortfall_kwh: None,
            overshoot_kwh: None,
            unmet_kwh: None,
            error: Some(err.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

fn record(inst: &Instance, cfg: &BenchConfig, method: Method) -> Result<BenchmarkRecord> {
    let run = run_method(inst, method, &cfg.params)?;
    let n_events = inst.n_events();
    Ok(BenchmarkRecord {
        method,
        price: inst.price.label,
        scenario: cfg.scenario,
        seed: inst.seed,
        n_evs: inst.fleet.len(),
        cost: Some(run.cost),
        cost_optimal: Some(inst.cost_optimal),
        cost_uncontrolled: Some(inst.cost_uncontrolled),
        gap: Some(gap(run.cost, inst.cost_optimal)?),
        compression: Some(if n_events == 0 { 0.0 } else { compression(run.n_aggregated, n_events)? }),
        runtime_ms: cfg.record_runtime.then_some(run.runtime_ms),
        shortfall_kwh: Some(run.shortfall_kwh),
        overshoot_kwh: Some(run.overshoot_kwh),
        unmet_kwh: Some(run.unmet_kwh),
        error: None,
    })
}

/// One record per (method, seed), sorted by method then seed. Failures are
/// recorded, not propagated; only an invalid configuration is an error.
pub fn run_benchmark(cfg: &BenchConfig, grid: &TimeGrid) -> Result<Vec<BenchmarkRecord>> {
    cfg.validate()?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut out = Vec::with_capacity(methods.len() * seeds.len());
    for &seed in &seeds {
        match Instance::build(cfg, seed, grid) {
            Ok(inst) => {
                for &m in &methods {
                    out.push(record(&inst, cfg, m).unwrap_or_else(|e| {
                        BenchmarkRecord::failed(m, cfg, seed, inst.fleet.len(), &e)
                    }));
                }
            }
            Err(e) => {
                let n = if cfg.profiles.is_some() { 0 } else { cfg.fleet.n_evs };
                out.extend(methods.iter().map(|&m| BenchmarkRecord::failed(m, cfg, seed, n, &e)));
            }
        }
    }
    out.sort_by_key(|r| (r.method, r.seed));
    Ok(out)
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "method",
    "price",
    "scenario",
    "seed",
    "n_evs",
    "cost",
    "cost_optimal",
    "cost_uncontrolled",
    "gap",
    "compression",
    "runtime_ms",
    "shortfall_kwh",
    "overshoot_kwh",
    "unmet_kwh",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Parse { context: path.display().to_string(), message: format!("{other:?}") },
    }
}

pub fn write_results_csv(records: &[BenchmarkRecord], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in records {
        w.write_record([
            r.method.id().to_string(),
            r.price.to_string(),
            r.scenario.name().to_string(),
            r.seed.to_string(),
            r.n_evs.to_string(),
            opt(r.cost),
            opt(r.cost_optimal),
            opt(r.cost_uncontrolled),
            opt(r.gap),
            opt(r.compression),
            opt(r.runtime_ms),
            opt(r.shortfall_kwh),
            opt(r.overshoot_kwh),
            opt(r.unmet_kwh),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_results_csv(records: &[BenchmarkRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_results_csv(records, file).map_err(csv_err(path))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub price: PriceLabel,
    pub scenario: Scenario,
    pub n_records: usize,
    /// Over the successful records of each method.
    pub median_gap: BTreeMap<Method, f64>,
    pub failures: Vec<FailureNote>,
}

pub fn summarize(cfg: &BenchConfig, records: &[BenchmarkRecord]) -> BenchSummary {
    let mut gaps: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut failures = Vec::new();
    for r in records {
        match (&r.error, r.gap) {
            (Some(e), _) => failures.push(FailureNote { method: r.method, seed: r.seed, error: e.clone() }),
            (None, Some(g)) => gaps.entry(r.method).or_default().push(g),
            (None, None) => {}
        }
    }
    BenchSummary {
        price: cfg.price.label(),
        scenario: cfg.scenario,
        n_records: records.len(),
        median_gap: gaps.into_iter().filter_map(|(m, mut g)| Some((m, median(&mut g)?))).collect(),
        failures,
    }
}

pub fn save_summary_json(summary: &BenchSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::parse("benchmark summary", e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Named axes; the sweep is their Cartesian product (first axis slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub axes: Vec<(String, Vec<f64>)>,
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect()
}

impl TuningGrid {
    /// Presets: `fo`, `dfo-paper`, `vb-grpd`, `fpc`.
    pub fn preset(name: &str) -> Option<TuningGrid> {
        let quarter_day = || range(0.0, 24.0, 0.25);
        let axes = match name {
            "fo" => vec![("t_es".into(), quarter_day()), ("tf".into(), quarter_day())],
            "dfo-paper" => {
                let mut h = range(0.0, 1.0, 0.25);
                h.extend(range(2.0, 8.0, 1.0));
                h.extend(range(10.0, 24.0, 2.0));
                vec![("plug_in".into(), h.clone()), ("plug_out".into(), h)]
            }
            "vb-grpd" => vec![("plug_in".into(), quarter_day()), ("plug_out".into(), quarter_day())],
            "fpc" => {
                let unit = range(0.0, 1.0, 0.05);
                vec![("mid_x".into(), unit.clone()), ("mid_y".into(), unit.clone()), ("y_offset".into(), unit)]
            }
            _ => return None,
        };
        Some(TuningGrid { axes })
    }

    /// A preset name or explicit axes: `name=v1,v2;name=lo:hi:step`.
    pub fn parse(s: &str) -> Result<TuningGrid> {
        if let Some(g) = Self::preset(s.trim()) {
            return Ok(g);
        }
        let bad = |m: String| Error::Config(format!("grid '{s}': {m}"));
        let mut axes = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, vals) = part.split_once('=').ok_or_else(|| bad(format!("'{part}' is not name=values")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(format!("'{v}' is not a number")));
            let values = match vals.split(':').collect::<Vec<_>>()[..] {
                [lo, hi, step] => {
                    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                    if !(step > 0.0) || hi < lo {
                        return Err(bad(format!("bad range '{vals}'")));
                    }
                    range(lo, hi, step)
                }
                _ => vals.split(',').map(num).collect::<Result<Vec<_>>>()?,
            };
            if values.is_empty() {
                return Err(bad(format!("axis '{name}' has no values")));
            }
            axes.push((name.trim().to_string(), values));
        }
        if axes.is_empty() {
            return Err(bad("no axes".into()));
        }
        Ok(TuningGrid { axes })
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.axes.iter().fold(vec![Vec::new()], |acc, (_, vals)| {
            acc.iter()
                .flat_map(|p| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect()
        })
    }
}

/// Parameters of `method` at one grid point; `Ok(None)` marks a point the
/// sweep skips (an FPC middle point below the chord).
pub fn apply_point(method: Method, names: &[String], point: &[f64], base: &MethodParams) -> Result<Option<MethodParams>> {
    let mut p = base.clone();
    let two = |a: Attribute, b: Attribute, na: &str, nb: &str| -> Result<GroupingSpec> {
        let get = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .map(|i| point[i])
                .ok_or_else(|| Error::Config(format!("{method} grid needs axes {na} and {nb}")))
        };
        Ok(GroupingSpec::new(&[(a, get(na)?), (b, get(nb)?)]))
    };
    let expect = |allowed: &[&str]| -> Result<()> {
        match names.iter().find(|n| !allowed.contains(&n.as_str())) {
            Some(n) => Err(Error::Config(format!("{method} has no tunable '{n}'; use {allowed:?}"))),
            None => Ok(()),
        }
    };
    match method {
        Method::Fo => {
            expect(&["t_es", "tf"])?;
            p.fo_grouping = two(Attribute::EarliestStart, Attribute::TimeFlexibility, "t_es", "tf")?;
        }
        Method::Dfo => {
            expect(&["plug_in", "plug_out", "num_samples"])?;
            p.dfo_grouping = two(Attribute::PlugIn, Attribute::PlugOut, "plug_in", "plug_out")?;
            if let Some(i) = names.iter().position(|n| n == "num_samples") {
                p.dfo_num_samples = point[i].round().max(0.0) as usize;
            }
        }
        Method::VbLlGrpd => {
            expect(&["plug_in", "plug_out"])?;
            p.vb_grouping = two(Attribute::PlugIn, Attribute::PlugOut, "plug_in", "plug_out")?;
        }
        Method::VbLlFpc => {
            expect(&["mid_x", "mid_y", "y_offset"])?;
            let mut s = base.vb_fpc;
            for (n, v) in names.iter().zip(point) {
                match n.as_str() {
                    "mid_x" => s.mid_x = *v,
                    "mid_y" => s.mid_y = *v,
                    _ => s.y_offset = *v,
                }
            }
            if !s.is_concave() {
                return Ok(None);
            }
            p.vb_fpc = s;
        }
        Method::Rep => {
            expect(&["n_profiles"])?;
            p.rep_profiles = point[0].round().max(0.0) as usize;
        }
        _ => return Err(Error::Config(format!("{method} has no tunable parameters"))),
    }
    p.validate()?;
    Ok(Some(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningRow {
    pub point: Vec<f64>,
    pub mean_gap: Option<f64>,
    pub mean_compression: Option<f64>,
    pub error: Option<String>,
}

/// Full sweep with `cfg.seeds` as the repetitions. Points the method skips
/// are absent from the table; failing points keep empty means.
pub fn grid_search(method: Method, grid_def: &TuningGrid, cfg: &BenchConfig, grid: &TimeGrid) -> Result<Vec<TuningRow>> {
    cfg.validate()?;
    let names: Vec<String> = grid_def.axes.iter().map(|(n, _)| n.clone()).collect();
    let points = grid_def.points();
    if points.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    // Validate the axis names once before the expensive part.
    apply_point(method, &names, &points[0], &cfg.params).map(|_| ())?;
    let instances = cfg
        .seeds
        .iter()
        .map(|&s| Instance::build(cfg, s, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for point in points {
        let params = match apply_point(method, &names, &point, &cfg.params) {
            Ok(Some(p)) => p,
            Ok(None) => continue,
            Err(e) => {
                rows.push(TuningRow { point, mean_gap: None, mean_compression: None, error: Some(e.to_string()) });
                continue;
            }
        };
        let runs = instances
            .iter()
            .map(|inst| {
                let r = run_method(inst, method, &params)?;
                let c = if inst.n_events() == 0 { 0.0 } else { compression(r.n_aggregated, inst.n_events())? };
                Ok((gap(r.cost, inst.cost_optimal)?, c))
            })
            .collect::<Result<Vec<_>>>();
        rows.push(match runs {
            Ok(v) => {
                let n = v.len() as f64;
                TuningRow {
                    point,
                    mean_gap: Some(v.iter().map(|x| x.0).sum::<f64>() / n),
                    mean_compression: Some(v.iter().map(|x| x.1).sum::<f64>() / n),
                    error: None,
                }
            }
            Err(e) => TuningRow { point, mean_gap: None, mean_compression: None, error: Some(e.to_string()) },
        });
    }
    Ok(rows)
}

pub fn write_tuning_csv(names: &[String], rows: &[TuningRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names.iter().map(String::as_str).chain(["mean_gap", "mean_compression"]))?;
    for r in rows {
        w.write_record(
            r.point
                .iter()
                .map(|v| v.to_string())
                .chain([opt(r.mean_gap), opt(r.mean_compression)]),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_tuning_csv(names: &[String], rows: &[TuningRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_tuning_csv(names, rows, file).map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>, n_evs: usize, seeds: Vec<u64>) -> BenchConfig {
        BenchConfig {
            methods,
            fleet: ProfileGenConfig { n_evs, ..Default::default() },
            seeds,
            ..Default::default()
        }
    }

    #[test]
    fn method_and_scenario_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
            assert_eq!(m.id().replace('_', "-").to_uppercase().parse::<Method>().unwrap(), m);
        }
        for s in Scenario::ALL {
            assert_eq!(s.name().to_lowercase().parse::<Scenario>().unwrap(), s);
        }
        assert!("vb".parse::<Method>().is_err());
    }

    #[test]
    fn scenario_presets() {
        assert_eq!(ScenarioConfig::preset(Scenario::Phigh).ev.max_charge_power_kw, 22.0);
        assert_eq!(ScenarioConfig::preset(Scenario::Plow).ev.max_charge_power_kw, 4.7);
        assert_eq!(ScenarioConfig::preset(Scenario::Winter).ev.consumption_kwh_per_100km, 22.0);
        assert_eq!(ScenarioConfig::preset(Scenario::Work).locations, vec![Location::Home, Location::Work]);
        assert_eq!(ScenarioConfig::preset(Scenario::Base).ev, EvParams::default());
    }

    #[test]
    fn optimal_has_zero_gap() {
        let grid = TimeGrid::default();
        let recs = run_benchmark(&small(vec![Method::Optimal], 30, vec![1, 2]), &grid).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.gap == Some(0.0) && r.compression == Some(0.0)));
    }

    #[test]
    fn every_method_runs_and_shares_baselines() {
        let grid = TimeGrid::default();
        let recs = run_benchmark(&small(Method::ALL.to_vec(), 40, vec![4]), &grid).unwrap();
        assert_eq!(recs.len(), Method::ALL.len());
        let base = (recs[0].cost_optimal, recs[0].cost_uncontrolled);
        for r in &recs {
            assert!(r.error.is_none(), "{r:?}");
            assert_eq!((r.cost_optimal, r.cost_uncontrolled), base);
            assert_eq!(r.gap.unwrap(), gap(r.cost.unwrap(), r.cost_optimal.unwrap()).unwrap());
            assert!(r.runtime_ms.is_none());
        }
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let grid = TimeGrid::default();
        let mut cfg = small(vec![Method::Optimal], 5, vec![0]);
        cfg.price = PriceConfig::Csv { path: "/nonexistent/prices.csv".into(), offset: None, seed: None };
        let recs = run_benchmark(&cfg, &grid).unwrap();
        assert!(recs[0].is_failed() && recs[0].cost.is_none());
        let s = summarize(&cfg, &recs);
        assert_eq!(s.failures.len(), 1);
        assert!(s.median_gap.is_empty());
    }

    #[test]
    fn csv_has_fixed_columns_and_empty_failures() {
        let grid = TimeGrid::default();
        let recs = run_benchmark(&small(vec![Method::Optimal], 10, vec![1]), &grid).unwrap();
        let mut buf = Vec::new();
        write_results_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RESULT_COLUMNS.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 15);
        assert_eq!(&row[..5], ["optimal", "SIN", "BASE", "1", "10"]);
        assert_eq!(row[14], "");
        assert_eq!(row[10], "");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn grids() {
        assert_eq!(TuningGrid::preset("fo").unwrap().points().len(), 97 * 97);
        let dfo = TuningGrid::preset("dfo-paper").unwrap();
        assert_eq!(dfo.axes[0].1, vec![0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0]);
        let g = TuningGrid::parse("t_es=3.75; tf=0:1:0.5").unwrap();
        assert_eq!(g.points(), vec![vec![3.75, 0.0], vec![3.75, 0.5], vec![3.75, 1.0]]);
        assert!(TuningGrid::parse("t_es").is_err());
        assert!(TuningGrid::parse("t_es=a").is_err());
    }

    #[test]
    fn fpc_grid_skips_points_below_the_chord() {
        let names: Vec<String> = ["mid_x", "mid_y", "y_offset"].map(String::from).to_vec();
        let base = MethodParams::default();
        let mut kept = 0;
        for p in TuningGrid::preset("fpc").unwrap().points() {
            match apply_point(Method::VbLlFpc, &names, &p, &base).unwrap() {
                Some(mp) => {
                    assert!(mp.vb_fpc.is_concave());
                    kept += 1;
                }
                None => assert!(p[1] < 1.0 + (p[2] - 1.0) * p[0]),
            }
        }
        assert!(kept > 0 && kept < 21 * 21 * 21);
    }

    #[test]
    fn single_point_grid_gives_one_row() {
        let grid = TimeGrid::default();
        let cfg = small(vec![Method::Fo], 30, vec![0, 1]);
        let g = TuningGrid::parse("t_es=3.75;tf=1.75").unwrap();
        let rows = grid_search(Method::Fo, &g, &cfg, &grid).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].mean_gap.unwrap() >= 0.0);
        assert!(grid_search(Method::Fo, &TuningGrid::parse("x=1").unwrap(), &cfg, &grid).is_err());
        assert!(grid_search(Method::Optimal, &g, &cfg, &grid).is_err());
    }

    #[test]
    fn zero_fo_thresholds_merge_only_identical_attributes() {
        let grid = TimeGrid::default();
        let cfg = small(vec![Method::Fo], 40, vec![2]);
        let rows = grid_search(Method::Fo, &TuningGrid::parse("t_es=0;tf=0").unwrap(), &cfg, &grid).unwrap();
        let inst = Instance::build(&cfg, 2, &grid).unwrap();
        let mut keys: Vec<(usize, usize)> = inst
            .uncontrolled
            .events
            .iter()
            .map(|e| (e.plug_in, e.time_flexibility(&grid)))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let expected = compression(keys.len(), inst.n_events()).unwrap();
        assert_eq!(rows[0].mean_compression, Some(expected));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, PRICE_STREAM), derive_seed(1, REP_STREAM));
        assert_ne!(derive_seed(1, PRICE_STREAM), derive_seed(2, PRICE_STREAM));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
