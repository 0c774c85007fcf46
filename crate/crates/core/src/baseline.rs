//! Uncontrolled charging (defines the events and the cost ceiling) and the
//! per-event optimum (the cost floor), plus an LP formulation of the same
//! optimum used as an oracle.

use rayon::prelude::*;

use crate::domain::{
    ChargingEvent, DrivingProfile, EvParams, LoadSchedule, Location, PriceSignal, ProfileEvent,
    ScheduleRow, TimeGrid, ENERGY_EPS,
};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};

/// Battery energy at plug-in and plug-out of one uncontrolled event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocRecord {
    pub start_kwh: f64,
    pub end_kwh: f64,
}

/// A trip that needed more energy than the battery held. The SOC was floored at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepletedTrip {
    pub ev_id: usize,
    pub start: usize,
    pub deficit_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncontrolledResult {
    /// One row per event; row `id` indexes `events`.
    pub schedule: LoadSchedule,
    pub events: Vec<ChargingEvent>,
    /// Parallel to `events`.
    pub soc_records: Vec<SocRecord>,
    pub depleted_trips: Vec<DepletedTrip>,
}

impl UncontrolledResult {
    /// Grid energy delivered in each step of event `i`'s window.
    pub fn step_energies(&self, i: usize, grid: &TimeGrid) -> Vec<f64> {
        self.schedule.rows[i]
            .power_kw
            .iter()
            .map(|p| p * grid.step_duration_h())
            .collect()
    }
}

struct EvOutcome {
    events: Vec<(ChargingEvent, Vec<f64>, SocRecord)>,
    depleted: Vec<DepletedTrip>,
}

fn simulate_one(profile: &DrivingProfile, params: &EvParams, grid: &TimeGrid, locations: &[Location]) -> EvOutcome {
    let dt = grid.step_duration_h();
    let cap = params.battery_capacity_kwh;
    let target = params.soc_target * cap;
    let step_battery = params.max_charge_power_kw * dt * params.charge_efficiency;
    let mut energy = params.soc_start * cap;
    let mut out = EvOutcome { events: Vec::new(), depleted: Vec::new() };

    for ev in &profile.events {
        match *ev {
            ProfileEvent::Trip { start, distance_km, .. } => {
                energy -= distance_km * params.consumption_kwh_per_100km / 100.0;
                if energy < 0.0 {
                    out.depleted.push(DepletedTrip { ev_id: profile.ev_id, start, deficit_kwh: -energy });
                    energy = 0.0;
                }
            }
            ProfileEvent::Park { start, end, location } => {
                if !locations.contains(&location) || energy >= target - ENERGY_EPS {
                    continue;
                }
                let start_kwh = energy;
                let mut powers = Vec::with_capacity(end - start);
                for _ in start..end {
                    let need = (target - energy).max(0.0);
                    let gain = need.min(step_battery);
                    if gain <= ENERGY_EPS {
                        powers.push(0.0);
                        continue;
                    }
                    energy += gain;
                    if target - energy <= ENERGY_EPS {
                        energy = target;
                    }
                    powers.push(gain / (params.charge_efficiency * dt));
                }
                let delivered: f64 = powers.iter().map(|p| p * dt).sum();
                if delivered <= ENERGY_EPS {
                    continue;
                }
                let event = ChargingEvent {
                    ev_id: profile.ev_id,
                    plug_in: start,
                    plug_out: end,
                    required_grid_energy_kwh: delivered,
                    max_power_kw: params.max_charge_power_kw,
                };
                out.events.push((event, powers, SocRecord { start_kwh, end_kwh: energy }));
            }
        }
    }
    out
}

/// Charges at full power from arrival at every park whose location is in
/// `locations`, until the target SOC or departure. Events with no delivered
/// energy are omitted.
pub fn simulate_uncontrolled(
    fleet: &[DrivingProfile],
    params: &EvParams,
    grid: &TimeGrid,
    locations: &[Location],
) -> Result<UncontrolledResult> {
    params.validate()?;
    for p in fleet {
        p.validate(grid)
            .map_err(|m| Error::parse(format!("profile of ev {}", p.ev_id), m))?;
    }
    let outcomes: Vec<EvOutcome> = fleet
        .par_iter()
        .map(|p| simulate_one(p, params, grid, locations))
        .collect();

    let mut result = UncontrolledResult {
        schedule: LoadSchedule::default(),
        events: Vec::new(),
        soc_records: Vec::new(),
        depleted_trips: Vec::new(),
    };
    for o in outcomes {
        for (event, power_kw, soc) in o.events {
            result.schedule.rows.push(ScheduleRow {
                id: result.events.len(),
                start: event.plug_in,
                power_kw,
            });
            result.events.push(event);
            result.soc_records.push(soc);
        }
        result.depleted_trips.extend(o.depleted);
    }
    Ok(result)
}

/// Cheapest-steps allocation of one event's energy. Ties go to the earlier step.
pub fn optimize_event(event: &ChargingEvent, price: &PriceSignal, grid: &TimeGrid) -> Result<Vec<f64>> {
    event.validate(grid)?;
    let dt = grid.step_duration_h();
    let cap = event.step_capacity_kwh(grid);
    let mut order: Vec<usize> = (event.plug_in..event.plug_out).collect();
    order.sort_by(|&a, &b| price.values[a].total_cmp(&price.values[b]).then(a.cmp(&b)));
    let mut power = vec![0.0; event.window_len()];
    let mut remaining = event.required_grid_energy_kwh;
    for t in order {
        if remaining <= 0.0 {
            break;
        }
        let e = remaining.min(cap);
        power[t - event.plug_in] = e / dt;
        remaining -= e;
    }
    if remaining > ENERGY_EPS {
        return Err(Error::InfeasibleEvent {
            event: event.ev_id,
            message: format!("{remaining} kWh left after filling the window"),
        });
    }
    Ok(power)
}

fn check_price(price: &PriceSignal, grid: &TimeGrid) -> Result<()> {
    if price.len() != grid.n_steps() {
        return Err(Error::Dimension(format!(
            "price has {} steps, grid has {}",
            price.len(),
            grid.n_steps()
        )));
    }
    Ok(())
}

/// Exact per-event optimum; row `i` serves `events[i]`.
pub fn optimize_fleet_optimal(events: &[ChargingEvent], price: &PriceSignal, grid: &TimeGrid) -> Result<LoadSchedule> {
    check_price(price, grid)?;
    let rows = events
        .par_iter()
        .enumerate()
        .map(|(i, ev)| {
            Ok(ScheduleRow { id: i, start: ev.plug_in, power_kw: optimize_event(ev, price, grid)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadSchedule::new(rows))
}

/// The per-vehicle LP: power bounds, battery bounds `[0, capacity]`, SOC
/// anchored at every event boundary to the uncontrolled record, and
/// `e_{t+1} = e_t + p_t dt eta` inside each window. Consumption happens only
/// between events, so it drops out once the boundaries are anchored, and the
/// anchors decouple the events: each window is its own LP.
pub fn lp_optimal_oracle(
    events: &[ChargingEvent],
    soc_records: &[SocRecord],
    params: &EvParams,
    price: &PriceSignal,
    grid: &TimeGrid,
) -> Result<LoadSchedule> {
    check_price(price, grid)?;
    params.validate()?;
    if events.len() != soc_records.len() {
        return Err(Error::Dimension(format!(
            "{} events but {} SOC records",
            events.len(),
            soc_records.len()
        )));
    }
    let rows = events
        .par_iter()
        .zip(soc_records)
        .enumerate()
        .map(|(i, (ev, soc))| solve_window(i, ev, soc, params, price, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadSchedule::new(rows))
}

/// Variables are the stored energies `e_1 .. e_{L-1}` (the ends are the
/// anchors); `p_k = (e_{k+1} - e_k) / (dt eta)` is substituted, so power
/// bounds become difference constraints and no equality rows remain.
fn solve_window(
    id: usize,
    ev: &ChargingEvent,
    soc: &SocRecord,
    params: &EvParams,
    price: &PriceSignal,
    grid: &TimeGrid,
) -> Result<ScheduleRow> {
    ev.validate(grid)?;
    let infeasible = |message: String| Error::InfeasibleEvent { event: id, message };
    let dt = grid.step_duration_h();
    let scale = dt * params.charge_efficiency;
    let cap = params.battery_capacity_kwh;
    let len = ev.window_len();
    let step_max = ev.max_power_kw * scale;
    let c = |k: usize| price.values[ev.plug_in + k] * dt / scale;
    let mut lp = LinearProgram::new();
    // e_k for k in 0..=len: a constant at the ends, a variable inside.
    let mut e: Vec<std::result::Result<crate::lp::VarId, f64>> = Vec::with_capacity(len + 1);
    e.push(Err(soc.start_kwh));
    for k in 1..len {
        // Cost of p_{k-1} puts +c(k-1) on e_k, cost of p_k puts -c(k).
        e.push(Ok(lp.add_var(0.0, cap, c(k - 1) - c(k))));
    }
    e.push(Err(soc.end_kwh));
    for k in 0..len {
        let mut terms = Vec::with_capacity(2);
        let mut offset = 0.0;
        match e[k + 1] {
            Ok(v) => terms.push((v, 1.0)),
            Err(x) => offset += x,
        }
        match e[k] {
            Ok(v) => terms.push((v, -1.0)),
            Err(x) => offset -= x,
        }
        if terms.is_empty() {
            // Single-step window: the increment is fixed.
            if offset < -1e-9 || offset > step_max + 1e-9 {
                return Err(infeasible(format!("step needs {offset} kWh, at most {step_max}")));
            }
            continue;
        }
        lp.add_constraint(&terms, Relation::Ge, -offset);
        lp.add_constraint(&terms, Relation::Le, step_max - offset);
    }
    let values: Vec<f64> = if lp.num_vars() == 0 {
        Vec::new()
    } else {
        let sol = lp.solve().map_err(|e| infeasible(e.to_string()))?;
        if !sol.is_optimal() {
            return Err(infeasible(format!("oracle LP is {:?}", sol.status)));
        }
        sol.values
    };
    let level = |k: usize| match e[k] {
        Ok(v) => values[v.index()],
        Err(x) => x,
    };
    Ok(ScheduleRow {
        id,
        start: ev.plug_in,
        power_kw: (0..len)
            .map(|k| ((level(k + 1) - level(k)) / scale).clamp(0.0, ev.max_power_kw))
            .collect(),
    })
}
