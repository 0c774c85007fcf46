//! Price signals: a daily sine, ingested spot prices, and a synthetic
//! residual-load signal with irregular days.
//!
//! Every constructor returns a signal normalized so that its maximum is
//! exactly one.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{PriceLabel, PriceSignal, TimeGrid};
use crate::error::{Error, Result};

/// `c_t = sin(2 pi t dt / 24h)`, zero at midnight and peaking at 06:00.
pub fn make_sin(grid: &TimeGrid) -> PriceSignal {
    let dt = grid.step_duration_h();
    let values: Vec<f64> = (0..grid.n_steps())
        .map(|t| (2.0 * PI * t as f64 * dt / 24.0).sin())
        .collect();
    // A grid that never hits 06:00 has max < 1; short grids may have max <= 0.
    PriceSignal::normalized(values.clone(), PriceLabel::Sin).unwrap_or(PriceSignal {
        values,
        label: PriceLabel::Sin,
    })
}

/// Which contiguous block of a long price file becomes the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekSelection {
    /// The first `n_steps` rows.
    First,
    /// Start at this row (0-based, header excluded).
    Offset(usize),
    /// A day-aligned start drawn uniformly from all that fit.
    Seeded(u64),
}

/// Parses a single-column price CSV. A header row reading `price` is optional.
pub fn parse_price_csv(text: &str) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::parse(format!("price CSV row {row}"), e.to_string()))?;
        if record.len() != 1 {
            return Err(Error::parse(
                format!("price CSV row {row}"),
                format!("expected one column, found {}", record.len()),
            ));
        }
        let cell = &record[0];
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if row == 1 && cell.eq_ignore_ascii_case("price") => {}
            _ => {
                return Err(Error::parse(
                    format!("price CSV row {row}"),
                    format!("'{cell}' is not a finite number"),
                ))
            }
        }
    }
    Ok(values)
}

/// Cuts `n_steps` values out of `values` according to `selection` and normalizes them.
pub fn select_week(values: &[f64], grid: &TimeGrid, selection: WeekSelection) -> Result<PriceSignal> {
    let n = grid.n_steps();
    if values.len() < n {
        return Err(Error::parse(
            "price CSV",
            format!("expected >= {n} rows, found {}", values.len()),
        ));
    }
    let offset = match selection {
        WeekSelection::First => 0,
        WeekSelection::Offset(o) => {
            if o + n > values.len() {
                return Err(Error::Config(format!(
                    "offset {o} + {n} steps exceeds the {} rows of the price file",
                    values.len()
                )));
            }
            o
        }
        WeekSelection::Seeded(seed) => {
            let per_day = grid.steps_per_day()?;
            let choices = (values.len() - n) / per_day + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.random_range(0..choices) * per_day
        }
    };
    PriceSignal::normalized(values[offset..offset + n].to_vec(), PriceLabel::Real)
}

pub fn ingest_csv(path: impl AsRef<Path>, grid: &TimeGrid, selection: WeekSelection) -> Result<PriceSignal> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let values = parse_price_csv(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    select_week(&values, grid, selection)
}

pub fn export_prices(price: &PriceSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "price")?;
        for v in &price.values {
            writeln!(w, "{v}")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Residual load = demand - solar - wind, shifted and scaled to max one.
///
/// Demand has a morning and an evening hump and drops on weekends. Solar is
/// a midday bell scaled by a per-day sunshine draw, so sunny days get a deep
/// trough and overcast days stay flat. Wind is an AR(1) process with hourly
/// correlation, giving multi-day lulls and storms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFutureConfig {
    pub base_demand: f64,
    pub morning_peak: f64,
    pub evening_peak: f64,
    pub weekend_factor: f64,
    pub solar_peak: f64,
    /// Per-day sunshine factor is uniform in `[sunshine_min, 1]`.
    pub sunshine_min: f64,
    pub solar_width_h: f64,
    pub wind_mean: f64,
    pub wind_std: f64,
    /// AR(1) coefficient per hour, in `[0, 1)`.
    pub wind_autocorrelation: f64,
    /// Floor of the residual load before normalization, as a share of `base_demand`.
    pub floor: f64,
}

impl Default for SynthFutureConfig {
    fn default() -> Self {
        SynthFutureConfig {
            base_demand: 1.0,
            morning_peak: 0.25,
            evening_peak: 0.45,
            weekend_factor: 0.85,
            solar_peak: 1.2,
            sunshine_min: 0.05,
            solar_width_h: 2.5,
            wind_mean: 0.35,
            wind_std: 0.3,
            wind_autocorrelation: 0.95,
            floor: -0.5,
        }
    }
}

impl SynthFutureConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.base_demand,
            self.morning_peak,
            self.evening_peak,
            self.weekend_factor,
            self.solar_peak,
            self.sunshine_min,
            self.solar_width_h,
            self.wind_mean,
            self.wind_std,
            self.wind_autocorrelation,
            self.floor,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("synthetic price parameters must be finite".into()));
        }
        if self.base_demand <= 0.0 || self.solar_width_h <= 0.0 || self.wind_std < 0.0 {
            return Err(Error::Config(
                "base_demand and solar_width_h must be positive, wind_std non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sunshine_min) || !(0.0..1.0).contains(&self.wind_autocorrelation) {
            return Err(Error::Config(
                "sunshine_min must be in [0, 1] and wind_autocorrelation in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let d = (hour - center) / width;
    (-0.5 * d * d).exp()
}

pub fn make_synth_future(grid: &TimeGrid, seed: u64, cfg: &SynthFutureConfig) -> Result<PriceSignal> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = grid.step_duration_h();
    let n = grid.n_steps();
    let n_days = ((n as f64 * dt) / 24.0).ceil() as usize;
    let sunshine: Vec<f64> = (0..n_days)
        .map(|_| rng.random_range(cfg.sunshine_min..=1.0))
        .collect();

    // AR(1) on an hourly clock, interpolated to the grid.
    let rho = cfg.wind_autocorrelation.powf(dt);
    let innovation = Normal::new(0.0, cfg.wind_std * (1.0 - rho * rho).sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let stationary = Normal::new(0.0, cfg.wind_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut wind_dev = stationary.sample(&mut rng);

    let mut values = Vec::with_capacity(n);
    for t in 0..n {
        let hour_abs = t as f64 * dt;
        let day = (hour_abs / 24.0) as usize;
        let hour = hour_abs - 24.0 * day as f64;
        let weekday = day % 7;
        let weekly = if weekday >= 5 { cfg.weekend_factor } else { 1.0 };
        let demand = cfg.base_demand * weekly
            * (1.0 + cfg.morning_peak * bump(hour, 8.0, 1.5) + cfg.evening_peak * bump(hour, 18.5, 2.0)
                - 0.2 * bump(hour, 3.5, 2.5));
        let solar = cfg.solar_peak * sunshine[day] * bump(hour, 13.0, cfg.solar_width_h);
        let wind = (cfg.wind_mean + wind_dev).max(0.0);
        let residual = (demand - solar - wind).max(cfg.floor * cfg.base_demand);
        values.push(residual);
        wind_dev = rho * wind_dev + innovation.sample(&mut rng);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        // Everything is surplus; lift so the least negative step becomes the maximum.
        let shift = 1.0 - max;
        values.iter_mut().for_each(|v| *v += shift);
    }
    PriceSignal::normalized(values, PriceLabel::Future)
}

/// Coefficient of variation (std / |mean|) of each whole day of a signal.
pub fn daily_cv(price: &PriceSignal, grid: &TimeGrid) -> Result<Vec<f64>> {
    let per_day = grid.steps_per_day()?;
    Ok(price
        .values
        .chunks_exact(per_day)
        .map(|day| {
            let mean = day.iter().sum::<f64>() / day.len() as f64;
            let var = day.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / day.len() as f64;
            var.sqrt() / mean.abs().max(1e-12)
        })
        .collect())
}

/// Selects one of the three signal families. `seed` fields are optional; a
/// missing seed is taken from the benchmark repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceConfig {
    Sin {},
    Csv {
        path: PathBuf,
        #[serde(default)]
        offset: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
    SynthFuture {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        params: SynthFutureConfig,
    },
}

impl PriceConfig {
    pub fn label(&self) -> PriceLabel {
        match self {
            PriceConfig::Sin {} => PriceLabel::Sin,
            PriceConfig::Csv { .. } => PriceLabel::Real,
            PriceConfig::SynthFuture { .. } => PriceLabel::Future,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriceConfig::Sin {} => Ok(()),
            PriceConfig::Csv { offset: Some(_), seed: Some(_), .. } => Err(Error::Config(
                "price csv takes either offset or seed, not both".into(),
            )),
            PriceConfig::Csv { .. } => Ok(()),
            PriceConfig::SynthFuture { params, .. } => params.validate(),
        }
    }

    /// Builds the signal for one benchmark repetition.
    pub fn build(&self, grid: &TimeGrid, run_seed: u64) -> Result<PriceSignal> {
        self.validate()?;
        match self {
            PriceConfig::Sin {} => Ok(make_sin(grid)),
            PriceConfig::Csv { path, offset, seed } => {
                let selection = match (offset, seed) {
                    (Some(o), _) => WeekSelection::Offset(*o),
                    (None, Some(s)) => WeekSelection::Seeded(*s),
                    (None, None) => WeekSelection::Seeded(run_seed),
                };
                ingest_csv(path, grid, selection)
            }
            PriceConfig::SynthFuture { seed, params } => {
                make_synth_future(grid, seed.unwrap_or(run_seed), params)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_peaks_at_six() {
        let grid = TimeGrid::default();
        let p = make_sin(&grid);
        assert_eq!(p.label, PriceLabel::Sin);
        assert_eq!(p.len(), 672);
        assert_eq!(p.values[24], 1.0);
        assert_eq!(p.values[24 + 96 * 3], 1.0);
        assert_eq!(p.values.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        assert_eq!(p.values[0], 0.0);
        assert!(p.values[72] < -0.999);
    }

    #[test]
    fn sine_has_daily_period() {
        let grid = TimeGrid::default();
        let p = make_sin(&grid);
        for t in 0..672 - 96 {
            assert!((p.values[t] - p.values[t + 96]).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn constant_csv_normalizes_to_one() {
        let grid = TimeGrid::default();
        let text = "5.0\n".repeat(672);
        let p = select_week(&parse_price_csv(&text).unwrap(), &grid, WeekSelection::First).unwrap();
        assert!(p.values.iter().all(|&v| v == 1.0));
        assert_eq!(p.label, PriceLabel::Real);
    }

    #[test]
    fn header_is_optional() {
        let with = parse_price_csv("price\n1\n2\n").unwrap();
        let without = parse_price_csv("1\n2\n").unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn short_file_is_rejected() {
        let grid = TimeGrid::default();
        let text = "1.0\n".repeat(671);
        let err = select_week(&parse_price_csv(&text).unwrap(), &grid, WeekSelection::First)
            .unwrap_err()
            .to_string();
        assert!(err.contains("expected >= 672"), "{err}");
    }

    #[test]
    fn bad_cell_names_row() {
        let err = parse_price_csv("price\n1.0\nabc\n").unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(parse_price_csv("1.0\nprice\n").is_err());
        assert!(parse_price_csv("1.0,2.0\n").is_err());
    }

    #[test]
    fn seeded_week_is_stable_and_day_aligned() {
        let grid = TimeGrid::default();
        let year: Vec<f64> = (0..96 * 365).map(|t| 1.0 + (t / 96) as f64).collect();
        let a = select_week(&year, &grid, WeekSelection::Seeded(7)).unwrap();
        let b = select_week(&year, &grid, WeekSelection::Seeded(7)).unwrap();
        assert_eq!(a, b);
        // Day-aligned: each chunk of 96 steps is constant.
        for day in a.values.chunks(96) {
            assert!(day.iter().all(|&v| v == day[0]));
        }
        let picks: std::collections::BTreeSet<u64> = (0..20)
            .map(|s| select_week(&year, &grid, WeekSelection::Seeded(s)).unwrap().values[0].to_bits())
            .collect();
        assert!(picks.len() > 10);
    }

    #[test]
    fn csv_file_round_trip() {
        let grid = TimeGrid::default();
        let p = make_synth_future(&grid, 3, &SynthFutureConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        export_prices(&p, &path).unwrap();
        let q = ingest_csv(&path, &grid, WeekSelection::First).unwrap();
        assert_eq!(p.values, q.values);
        let missing = ingest_csv(dir.path().join("nope.csv"), &grid, WeekSelection::First);
        assert!(matches!(missing, Err(Error::Io { .. })));
    }

    #[test]
    fn synth_is_deterministic_and_normalized() {
        let grid = TimeGrid::default();
        let cfg = SynthFutureConfig::default();
        let a = make_synth_future(&grid, 11, &cfg).unwrap();
        let b = make_synth_future(&grid, 11, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        assert_ne!(a, make_synth_future(&grid, 12, &cfg).unwrap());
    }

    #[test]
    fn synth_days_differ_in_shape() {
        let grid = TimeGrid::default();
        for seed in 0..10 {
            let p = make_synth_future(&grid, seed, &SynthFutureConfig::default()).unwrap();
            let cv = daily_cv(&p, &grid).unwrap();
            let lo = cv.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = cv.iter().cloned().fold(0.0, f64::max);
            assert!(hi >= 2.0 * lo, "seed {seed}: cv {cv:?}");
        }
    }

    #[test]
    fn price_config_json() {
        let c: PriceConfig = serde_json::from_str(r#"{"kind": "sin"}"#).unwrap();
        assert_eq!(c, PriceConfig::Sin {});
        let c: PriceConfig = serde_json::from_str(r#"{"kind": "synth_future", "seed": 4}"#).unwrap();
        assert_eq!(c.label(), PriceLabel::Future);
        assert!(serde_json::from_str::<PriceConfig>(r#"{"kind": "csv"}"#).is_err());
        assert!(serde_json::from_str::<PriceConfig>(r#"{"kind": "sin", "x": 1}"#).is_err());
    }
}
