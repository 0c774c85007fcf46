//! FlexObjects with fixed slice energies: the only freedom is the start step.
//!
//! Constituents of an aggregate keep their start offsets relative to the
//! earliest of them, so the aggregate can start anywhere up to the least
//! flexible constituent's latest start and disaggregation is a plain copy.

use rayon::prelude::*;

use crate::domain::{ChargingEvent, LoadSchedule, PriceSignal, ScheduleRow, TimeGrid, ENERGY_EPS};
use crate::error::{Error, Result};
use crate::grouping::{group_events, GroupingSpec};

/// `profile[k]` is the grid energy (kWh) of the k-th slice; slice minimum and
/// maximum coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexObject {
    pub t_es: usize,
    pub t_ls: usize,
    pub profile: Vec<f64>,
}

impl FlexObject {
    pub fn time_flexibility(&self) -> usize {
        self.t_ls - self.t_es
    }

    pub fn energy(&self) -> f64 {
        self.profile.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constituent {
    /// Index of the event this object came from.
    pub event: usize,
    pub offset: usize,
    pub fo: FlexObject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFo {
    pub fo: FlexObject,
    pub constituents: Vec<Constituent>,
}

/// Slices are the uncontrolled per-step energies of the event (trailing
/// zeros dropped); the object may start anywhere that still finishes by
/// plug-out. Zero-energy events give no object.
pub fn event_to_fo(event: &ChargingEvent, step_energies: &[f64]) -> Result<Option<FlexObject>> {
    if step_energies.len() > event.window_len() {
        return Err(Error::Dimension(format!(
            "{} slice energies for a window of {} steps",
            step_energies.len(),
            event.window_len()
        )));
    }
    let len = step_energies
        .iter()
        .rposition(|&e| e > 0.0)
        .map_or(0, |i| i + 1);
    if len == 0 {
        return Ok(None);
    }
    Ok(Some(FlexObject {
        t_es: event.plug_in,
        t_ls: event.plug_out - len,
        profile: step_energies[..len].to_vec(),
    }))
}

/// Aligns every constituent at its earliest start relative to the group's
/// earliest start and sums the coinciding slices.
pub fn aggregate_fos(group: &[(usize, FlexObject)]) -> Result<AggregatedFo> {
    let t_es = group
        .iter()
        .map(|(_, f)| f.t_es)
        .min()
        .ok_or_else(|| Error::Aggregation("empty FlexObject group".into()))?;
    if let Some((i, _)) = group.iter().find(|(_, f)| f.t_ls < f.t_es) {
        return Err(Error::Aggregation(format!("FlexObject of event {i} has t_ls < t_es")));
    }
    let constituents: Vec<Constituent> = group
        .iter()
        .map(|(i, f)| Constituent { event: *i, offset: f.t_es - t_es, fo: f.clone() })
        .collect();
    // t_ls,i - offset_i = t_es + flexibility_i, so this is never below t_es.
    let t_ls = constituents
        .iter()
        .map(|c| c.fo.t_ls - c.offset)
        .min()
        .unwrap_or(t_es);
    let len = constituents
        .iter()
        .map(|c| c.offset + c.fo.profile.len())
        .max()
        .unwrap_or(0);
    let mut profile = vec![0.0; len];
    for c in &constituents {
        for (k, e) in c.fo.profile.iter().enumerate() {
            profile[c.offset + k] += e;
        }
    }
    Ok(AggregatedFo { fo: FlexObject { t_es, t_ls, profile }, constituents })
}

/// Cheapest start in `[t_es, t_ls]`; ties go to the earliest.
pub fn instantiate_fo_min_cost(fo: &FlexObject, price: &PriceSignal) -> Result<usize> {
    if fo.t_ls + fo.profile.len() > price.len() {
        return Err(Error::Dimension(format!(
            "FlexObject may end at {} beyond the {} price steps",
            fo.t_ls + fo.profile.len(),
            price.len()
        )));
    }
    let mut best = (fo.t_es, f64::INFINITY);
    for s in fo.t_es..=fo.t_ls {
        let cost: f64 = fo
            .profile
            .iter()
            .enumerate()
            .map(|(k, e)| e * price.values[s + k])
            .sum();
        if cost < best.1 {
            best = (s, cost);
        }
    }
    Ok(best.0)
}

/// Each constituent starts at `start + offset` and keeps its own slices.
pub fn disaggregate_fo(agg: &AggregatedFo, start: usize, grid: &TimeGrid) -> Result<Vec<ScheduleRow>> {
    if start < agg.fo.t_es || start > agg.fo.t_ls {
        return Err(Error::Aggregation(format!(
            "start {start} outside [{}, {}]",
            agg.fo.t_es, agg.fo.t_ls
        )));
    }
    let dt = grid.step_duration_h();
    Ok(agg
        .constituents
        .iter()
        .map(|c| ScheduleRow {
            id: c.event,
            start: start + c.offset,
            power_kw: c.fo.profile.iter().map(|e| e / dt).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoOutcome {
    /// Row `id` indexes the input events; zero-energy events have no row.
    pub schedule: LoadSchedule,
    pub n_aggregated: usize,
    /// Per-step grid energy of all instantiated aggregates.
    pub aggregate_kwh: Vec<f64>,
}

/// Builds one object per event from its uncontrolled slice energies, groups
/// by `grouping`, aggregates, instantiates each aggregate at its cheapest
/// start and disaggregates.
pub fn fo_pipeline(
    events: &[ChargingEvent],
    step_energies: &[Vec<f64>],
    price: &PriceSignal,
    grid: &TimeGrid,
    grouping: &GroupingSpec,
) -> Result<FoOutcome> {
    if events.len() != step_energies.len() {
        return Err(Error::Dimension(format!(
            "{} events but {} slice profiles",
            events.len(),
            step_energies.len()
        )));
    }
    let fos = events
        .iter()
        .zip(step_energies)
        .map(|(e, s)| event_to_fo(e, s))
        .collect::<Result<Vec<_>>>()?;
    let groups = group_events(events, grouping, grid)?;
    let instantiated = groups
        .par_iter()
        .filter_map(|g| {
            let members: Vec<(usize, FlexObject)> = g
                .iter()
                .filter_map(|&i| fos[i].clone().map(|f| (i, f)))
                .collect();
            if members.is_empty() {
                return None;
            }
            Some(aggregate_fos(&members).and_then(|agg| {
                let start = instantiate_fo_min_cost(&agg.fo, price)?;
                let rows = disaggregate_fo(&agg, start, grid)?;
                Ok((agg.fo.profile.clone(), start, rows))
            }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut aggregate_kwh = vec![0.0; grid.n_steps()];
    let mut rows = Vec::with_capacity(events.len());
    let n_aggregated = instantiated.len();
    for (profile, start, r) in instantiated {
        for (k, e) in profile.iter().enumerate() {
            aggregate_kwh[start + k] += e;
        }
        rows.extend(r);
    }
    rows.sort_by_key(|r| r.id);
    debug_assert!(rows.iter().all(|r| r.energy_kwh(grid) > ENERGY_EPS));
    Ok(FoOutcome { schedule: LoadSchedule::new(rows), n_aggregated, aggregate_kwh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PriceLabel;
    use proptest::prelude::*;

    fn fo(t_es: usize, t_ls: usize, profile: &[f64]) -> FlexObject {
        FlexObject { t_es, t_ls, profile: profile.to_vec() }
    }

    #[test]
    fn event_conversion() {
        let ev = ChargingEvent { ev_id: 0, plug_in: 40, plug_out: 48, required_grid_energy_kwh: 6.5, max_power_kw: 11.0 };
        let mut slices = vec![2.75, 2.75, 1.0];
        slices.extend([0.0; 5]);
        let f = event_to_fo(&ev, &slices).unwrap().unwrap();
        assert_eq!(f.profile.len(), 3);
        assert_eq!(f.t_ls - f.t_es, 5);
        assert!((f.energy() - 6.5).abs() < 1e-12);
        let zero = event_to_fo(&ev, &[0.0; 8]).unwrap();
        assert!(zero.is_none());
    }

    #[test]
    fn full_window_has_no_flexibility() {
        let ev = ChargingEvent { ev_id: 0, plug_in: 2, plug_out: 4, required_grid_energy_kwh: 5.5, max_power_kw: 11.0 };
        let f = event_to_fo(&ev, &[2.75, 2.75]).unwrap().unwrap();
        assert_eq!(f.t_es, f.t_ls);
    }

    #[test]
    fn singleton_aggregate_is_itself() {
        let a = fo(3, 9, &[1.0, 0.5]);
        let agg = aggregate_fos(&[(0, a.clone())]).unwrap();
        assert_eq!(agg.fo, a);
    }

    #[test]
    fn identical_objects_double() {
        let a = fo(3, 9, &[1.0, 0.5]);
        let agg = aggregate_fos(&[(0, a.clone()), (1, a)]).unwrap();
        assert_eq!(agg.fo, fo(3, 9, &[2.0, 1.0]));
    }

    #[test]
    fn offsets_and_least_flexibility() {
        let a = fo(10, 18, &[1.0]);
        let b = fo(12, 18, &[1.0]);
        let agg = aggregate_fos(&[(0, a), (1, b)]).unwrap();
        let offsets: Vec<_> = agg.constituents.iter().map(|c| c.offset).collect();
        assert_eq!(offsets, vec![0, 2]);
        assert_eq!(agg.fo.time_flexibility(), 6);
        assert_eq!(agg.fo.profile, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn instantiation_by_enumeration() {
        let price = PriceSignal { values: vec![5.0, 1.0, 1.0, 5.0], label: PriceLabel::Custom };
        assert_eq!(instantiate_fo_min_cost(&fo(0, 2, &[1.0, 1.0]), &price).unwrap(), 1);
        assert_eq!(instantiate_fo_min_cost(&fo(2, 2, &[1.0]), &price).unwrap(), 2);
        let flat = PriceSignal { values: vec![1.0; 4], label: PriceLabel::Custom };
        assert_eq!(instantiate_fo_min_cost(&fo(0, 3, &[1.0]), &flat).unwrap(), 0);
    }

    #[test]
    fn start_outside_window_is_rejected() {
        let grid = TimeGrid::default();
        let agg = aggregate_fos(&[(0, fo(5, 7, &[1.0]))]).unwrap();
        assert!(disaggregate_fo(&agg, 8, &grid).is_err());
        assert!(disaggregate_fo(&agg, 4, &grid).is_err());
    }

    fn random_event(seed: u64) -> (ChargingEvent, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(0..660usize);
        let b = rng.random_range(a + 1..=672);
        let cap = 2.75;
        let e = rng.random_range(0.01..=(cap * (b - a) as f64).min(40.0));
        let mut slices = vec![0.0; b - a];
        let mut left = e;
        for s in slices.iter_mut() {
            *s = left.min(cap);
            left -= *s;
            if left <= 0.0 {
                break;
            }
        }
        (ChargingEvent { ev_id: seed as usize, plug_in: a, plug_out: b, required_grid_energy_kwh: e, max_power_kw: 11.0 }, slices)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pipeline_is_lossless(seed in 0u64..10_000, n in 1usize..200) {
            let grid = TimeGrid::default();
            let (events, slices): (Vec<_>, Vec<_>) = (0..n as u64).map(|i| random_event(seed * 1000 + i)).unzip();
            let price = crate::prices::make_sin(&grid);
            let out = fo_pipeline(&events, &slices, &price, &grid, &GroupingSpec::fo_default()).unwrap();
            prop_assert!(out.schedule.check_against(&events, &grid, 1e-9).is_ok());
            prop_assert_eq!(out.schedule.rows.len(), n);
            let sum = out.schedule.aggregate(grid.n_steps()).unwrap();
            for t in 0..grid.n_steps() {
                prop_assert!((sum[t] * grid.step_duration_h() - out.aggregate_kwh[t]).abs() <= 1e-9);
            }
        }
    }
}
