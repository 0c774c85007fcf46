//! Threshold grouping of charging events.
//!
//! Events are sorted by their attribute vector and assigned first-fit to the
//! open groups; a group accepts an event only if every attribute's max - min
//! stays within its threshold. Groups whose first attribute can no longer
//! accept anything (the sort order guarantees it) are closed.

use serde::{Deserialize, Serialize};

use crate::domain::{ChargingEvent, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    /// Start of uncontrolled charging, i.e. the plug-in step.
    EarliestStart,
    TimeFlexibility,
    PlugIn,
    PlugOut,
}

impl Attribute {
    pub fn value(self, event: &ChargingEvent, grid: &TimeGrid) -> usize {
        match self {
            Attribute::EarliestStart | Attribute::PlugIn => event.plug_in,
            Attribute::PlugOut => event.plug_out,
            Attribute::TimeFlexibility => event.time_flexibility(grid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criterion {
    pub attribute: Attribute,
    pub threshold_h: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupingSpec {
    pub criteria: Vec<Criterion>,
}

impl GroupingSpec {
    pub fn new(criteria: &[(Attribute, f64)]) -> Self {
        GroupingSpec {
            criteria: criteria
                .iter()
                .map(|&(attribute, threshold_h)| Criterion { attribute, threshold_h })
                .collect(),
        }
    }

    /// FlexObject defaults: earliest start 3h45, time flexibility 1h45.
    pub fn fo_default() -> Self {
        Self::new(&[(Attribute::EarliestStart, 3.75), (Attribute::TimeFlexibility, 1.75)])
    }

    /// DFO defaults: plug-in 45 min, plug-out 12 h.
    pub fn dfo_default() -> Self {
        Self::new(&[(Attribute::PlugIn, 0.75), (Attribute::PlugOut, 12.0)])
    }

    /// Grouped virtual battery defaults: plug-in 8h15, plug-out 2 h.
    pub fn vb_default() -> Self {
        Self::new(&[(Attribute::PlugIn, 8.25), (Attribute::PlugOut, 2.0)])
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.criteria {
            if !(c.threshold_h.is_finite() && c.threshold_h >= 0.0) {
                return Err(Error::Config(format!(
                    "threshold for {:?} must be a non-negative number of hours, got {}",
                    c.attribute, c.threshold_h
                )));
            }
        }
        Ok(())
    }

    /// Thresholds in whole steps.
    pub fn thresholds_steps(&self, grid: &TimeGrid) -> Vec<usize> {
        self.criteria.iter().map(|c| grid.hours_to_steps(c.threshold_h)).collect()
    }
}

struct OpenGroup {
    created: usize,
    min: Vec<usize>,
    max: Vec<usize>,
    members: Vec<usize>,
}

/// Partitions `events` into groups (lists of indices into `events`). Within a
/// group every attribute spans at most its threshold. With no criteria
/// everything lands in one group.
pub fn group_events(events: &[ChargingEvent], spec: &GroupingSpec, grid: &TimeGrid) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let thr = spec.thresholds_steps(grid);
    let attrs: Vec<Vec<usize>> = events
        .iter()
        .map(|e| spec.criteria.iter().map(|c| c.attribute.value(e, grid)).collect())
        .collect();
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&events[a], &events[b]);
        attrs[a]
            .cmp(&attrs[b])
            .then(ea.plug_in.cmp(&eb.plug_in))
            .then(ea.plug_out.cmp(&eb.plug_out))
            .then(ea.ev_id.cmp(&eb.ev_id))
            .then(ea.required_grid_energy_kwh.total_cmp(&eb.required_grid_energy_kwh))
            .then(ea.max_power_kw.total_cmp(&eb.max_power_kw))
            .then(a.cmp(&b))
    });

    let mut closed: Vec<OpenGroup> = Vec::new();
    let mut open: Vec<OpenGroup> = Vec::new();
    for i in order {
        let a = &attrs[i];
        if !a.is_empty() {
            // Sorted by the first attribute: groups that are already too far behind stay closed.
            let mut k = 0;
            while k < open.len() {
                if a[0] > open[k].min[0] + thr[0] {
                    closed.push(open.remove(k));
                } else {
                    k += 1;
                }
            }
        }
        let fits = |g: &OpenGroup| {
            (0..a.len()).all(|j| a[j].max(g.max[j]) - a[j].min(g.min[j]) <= thr[j])
        };
        match open.iter_mut().find(|g| fits(g)) {
            Some(g) => {
                for j in 0..a.len() {
                    g.min[j] = g.min[j].min(a[j]);
                    g.max[j] = g.max[j].max(a[j]);
                }
                g.members.push(i);
            }
            None => {
                let created = open.len() + closed.len();
                open.push(OpenGroup { created, min: a.clone(), max: a.clone(), members: vec![i] });
            }
        }
    }
    closed.extend(open);
    closed.sort_by_key(|g| g.created);
    Ok(closed.into_iter().map(|g| g.members).collect())
}

/// `1 - n_aggregated / n_events`: 0.95 means 95 % fewer objects than events.
pub fn compression(n_aggregated: usize, n_events: usize) -> Result<f64> {
    if n_events == 0 {
        return Err(Error::DivisionByZero("compression of an empty event set".into()));
    }
    Ok(1.0 - n_aggregated as f64 / n_events as f64)
}

/// Largest max - min of each attribute over the group, in steps.
pub fn group_spread(events: &[ChargingEvent], group: &[usize], spec: &GroupingSpec, grid: &TimeGrid) -> Vec<usize> {
    spec.criteria
        .iter()
        .map(|c| {
            let vals = group.iter().map(|&i| c.attribute.value(&events[i], grid));
            let lo = vals.clone().min().unwrap_or(0);
            let hi = vals.max().unwrap_or(0);
            hi - lo
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(plug_in: usize, plug_out: usize, e: f64) -> ChargingEvent {
        ChargingEvent { ev_id: plug_in, plug_in, plug_out, required_grid_energy_kwh: e, max_power_kw: 11.0 }
    }

    fn random_events(seed: u64, n: usize) -> Vec<ChargingEvent> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let a = rng.random_range(0..600);
                let b = rng.random_range(a + 1..=672);
                let cap = 2.75 * (b - a) as f64;
                ChargingEvent {
                    ev_id: i,
                    plug_in: a,
                    plug_out: b,
                    required_grid_energy_kwh: rng.random_range(0.0..=cap.min(30.0)),
                    max_power_kw: 11.0,
                }
            })
            .collect()
    }

    #[test]
    fn zero_thresholds_group_identical_vectors() {
        let grid = TimeGrid::default();
        let events = vec![ev(10, 20, 2.0), ev(10, 20, 2.0), ev(10, 21, 2.0), ev(11, 20, 2.0)];
        let spec = GroupingSpec::new(&[(Attribute::PlugIn, 0.0), (Attribute::PlugOut, 0.0)]);
        let groups = group_events(&events, &spec, &grid).unwrap();
        assert_eq!(groups, vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn huge_thresholds_give_one_group() {
        let grid = TimeGrid::default();
        let events = random_events(1, 200);
        let spec = GroupingSpec::new(&[(Attribute::EarliestStart, 168.0), (Attribute::TimeFlexibility, 168.0)]);
        let groups = group_events(&events, &spec, &grid).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 200);
    }

    #[test]
    fn empty_input() {
        let grid = TimeGrid::default();
        assert!(group_events(&[], &GroupingSpec::fo_default(), &grid).unwrap().is_empty());
    }

    #[test]
    fn negative_threshold_rejected() {
        let grid = TimeGrid::default();
        let spec = GroupingSpec::new(&[(Attribute::PlugIn, -1.0)]);
        assert!(group_events(&[ev(0, 2, 1.0)], &spec, &grid).is_err());
    }

    #[test]
    fn compression_examples() {
        assert!((compression(500, 10000).unwrap() - 0.95).abs() < 1e-12);
        assert_eq!(compression(7, 7).unwrap(), 0.0);
        assert_eq!(compression(1, 2).unwrap(), 0.5);
        assert!(compression(0, 0).is_err());
    }

    #[test]
    fn default_thresholds_in_steps() {
        let grid = TimeGrid::default();
        assert_eq!(GroupingSpec::fo_default().thresholds_steps(&grid), vec![15, 7]);
        assert_eq!(GroupingSpec::vb_default().thresholds_steps(&grid), vec![33, 8]);
        assert_eq!(GroupingSpec::dfo_default().thresholds_steps(&grid), vec![3, 48]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn groups_partition_and_respect_thresholds(seed in 0u64..1000, n in 1usize..300,
                                                   t0 in 0.0f64..12.0, t1 in 0.0f64..12.0) {
            let grid = TimeGrid::default();
            let events = random_events(seed, n);
            let spec = GroupingSpec::new(&[(Attribute::EarliestStart, t0), (Attribute::TimeFlexibility, t1)]);
            let groups = group_events(&events, &spec, &grid).unwrap();
            let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let thr = spec.thresholds_steps(&grid);
            for g in &groups {
                let spread = group_spread(&events, g, &spec, &grid);
                prop_assert!(spread.iter().zip(&thr).all(|(s, t)| s <= t));
            }
        }

        #[test]
        fn partition_ignores_input_order(seed in 0u64..1000, n in 1usize..100) {
            let grid = TimeGrid::default();
            let events = random_events(seed, n);
            let spec = GroupingSpec::fo_default();
            let canon = |evs: &[ChargingEvent]| {
                let mut gs: Vec<Vec<(usize, usize, usize)>> = group_events(evs, &spec, &grid)
                    .unwrap()
                    .into_iter()
                    .map(|g| {
                        let mut v: Vec<_> = g.iter().map(|&i| (evs[i].ev_id, evs[i].plug_in, evs[i].plug_out)).collect();
                        v.sort();
                        v
                    })
                    .collect();
                gs.sort();
                gs
            };
            let mut rev = events.clone();
            rev.reverse();
            prop_assert_eq!(canon(&events), canon(&rev));
        }
    }
}
