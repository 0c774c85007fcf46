//! Representative profiles: optimize a random subset of vehicles whose
//! parameters are scaled so the subset stands in for the whole fleet.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::optimize_fleet_optimal;
use crate::domain::{total_cost, ChargingEvent, EvParams, LoadSchedule, PriceSignal, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepConfig {
    pub n_profiles: usize,
    pub seed: u64,
}

impl Default for RepConfig {
    fn default() -> Self {
        RepConfig { n_profiles: 500, seed: 0 }
    }
}

/// Fleet total over sample total, per parameter category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactors {
    pub capacity: f64,
    pub power: f64,
    pub consumption: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub estimated_cost: f64,
    /// Sorted ids of the sampled vehicles.
    pub sampled_ev_ids: Vec<usize>,
    pub scale: ScaleFactors,
    /// Scaled events of the sample and their optimized schedule (row `id` indexes `scaled_events`).
    pub scaled_events: Vec<ChargingEvent>,
    pub schedule: LoadSchedule,
}

fn ratio(fleet: f64, sample: f64, what: &str) -> Result<f64> {
    if sample <= 0.0 {
        return Err(Error::DivisionByZero(format!("sampled {what} total is zero")));
    }
    Ok(fleet / sample)
}

/// Draws `cfg.n_profiles` of the vehicles described by `fleet_params`
/// (indexed by `ev_id`) without replacement, scales their events' power by
/// the power factor and their energy by the consumption factor, and
/// optimizes them exactly.
pub fn rep_pipeline(
    events: &[ChargingEvent],
    fleet_params: &[EvParams],
    cfg: &RepConfig,
    price: &PriceSignal,
    grid: &TimeGrid,
) -> Result<RepResult> {
    let n_fleet = fleet_params.len();
    if cfg.n_profiles == 0 || cfg.n_profiles > n_fleet {
        return Err(Error::Config(format!(
            "n_profiles must be in 1..={n_fleet}, got {}",
            cfg.n_profiles
        )));
    }
    if let Some(e) = events.iter().find(|e| e.ev_id >= n_fleet) {
        return Err(Error::Config(format!("event of ev {} has no parameters", e.ev_id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ids = sample(&mut rng, n_fleet, cfg.n_profiles).into_vec();
    ids.sort_unstable();
    let mut in_sample = vec![false; n_fleet];
    for &i in &ids {
        in_sample[i] = true;
    }

    let total = |f: &dyn Fn(&EvParams) -> f64, only_sample: bool| -> f64 {
        fleet_params
            .iter()
            .enumerate()
            .filter(|(i, _)| !only_sample || in_sample[*i])
            .map(|(_, p)| f(p))
            .sum()
    };
    let cap = |p: &EvParams| p.battery_capacity_kwh;
    let pow = |p: &EvParams| p.max_charge_power_kw;
    let cons = |p: &EvParams| p.consumption_kwh_per_100km;
    let scale = ScaleFactors {
        capacity: ratio(total(&cap, false), total(&cap, true), "capacity")?,
        power: ratio(total(&pow, false), total(&pow, true), "power")?,
        consumption: ratio(total(&cons, false), total(&cons, true), "consumption")?,
    };

    let scaled_events: Vec<ChargingEvent> = events
        .iter()
        .filter(|e| in_sample[e.ev_id])
        .map(|e| ChargingEvent {
            max_power_kw: e.max_power_kw * scale.power,
            required_grid_energy_kwh: e.required_grid_energy_kwh * scale.consumption,
            ..*e
        })
        .collect();
    let schedule = optimize_fleet_optimal(&scaled_events, price, grid)?;
    let estimated_cost = total_cost(&schedule, price, grid)?;
    Ok(RepResult { estimated_cost, sampled_ev_ids: ids, scale, scaled_events, schedule })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::simulate_uncontrolled;
    use crate::domain::Location;
    use crate::prices::make_sin;
    use crate::profiles::{generate_fleet, ProfileGenConfig};

    fn instance(n: usize) -> (Vec<ChargingEvent>, Vec<EvParams>, TimeGrid) {
        let grid = TimeGrid::default();
        let fleet = generate_fleet(&ProfileGenConfig { n_evs: n, seed: 8, ..Default::default() }, &grid).unwrap();
        let params = EvParams::default();
        let unc = simulate_uncontrolled(&fleet, &params, &grid, &[Location::Home]).unwrap();
        (unc.events, vec![params; n], grid)
    }

    #[test]
    fn full_sample_equals_optimal() {
        let (events, params, grid) = instance(80);
        let price = make_sin(&grid);
        let r = rep_pipeline(&events, &params, &RepConfig { n_profiles: 80, seed: 3 }, &price, &grid).unwrap();
        let opt = total_cost(&optimize_fleet_optimal(&events, &price, &grid).unwrap(), &price, &grid).unwrap();
        assert_eq!(r.estimated_cost, opt);
        assert_eq!(r.scale, ScaleFactors { capacity: 1.0, power: 1.0, consumption: 1.0 });
    }

    #[test]
    fn homogeneous_factors_are_fleet_ratio() {
        let (events, params, grid) = instance(100);
        let price = make_sin(&grid);
        let r = rep_pipeline(&events, &params, &RepConfig { n_profiles: 40, seed: 1 }, &price, &grid).unwrap();
        for f in [r.scale.capacity, r.scale.power, r.scale.consumption] {
            assert!((f - 2.5).abs() < 1e-12, "{f}");
        }
        assert_eq!(r.sampled_ev_ids.len(), 40);
        assert!(r.sampled_ev_ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sample_size_is_checked() {
        let (events, params, grid) = instance(10);
        let price = make_sin(&grid);
        for n in [0, 11] {
            let cfg = RepConfig { n_profiles: n, seed: 0 };
            assert!(matches!(rep_pipeline(&events, &params, &cfg, &price, &grid), Err(Error::Config(_))));
        }
    }

    #[test]
    fn seed_determines_sample() {
        let (events, params, grid) = instance(60);
        let price = make_sin(&grid);
        let run = |seed| rep_pipeline(&events, &params, &RepConfig { n_profiles: 20, seed }, &price, &grid).unwrap();
        assert_eq!(run(5), run(5));
        assert_ne!(run(5).sampled_ev_ids, run(6).sampled_ev_ids);
    }
}
