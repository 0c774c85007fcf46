//! Domain types shared by every pipeline: the time grid, vehicle parameters,
//! driving profiles, charging events, load schedules and price signals.
//!
//! Power is always grid-side (kW). Battery-side energy of one step is
//! `power * step_duration_h * charge_efficiency`. Steps are 0-based and
//! windows are half-open `[start, end)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used when comparing energies in kWh.
pub const ENERGY_EPS: f64 = 1e-9;

/// Uniform discretization of the planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step_duration_h: f64,
    n_steps: usize,
}

impl Default for TimeGrid {
    /// One week at 15-minute resolution.
    fn default() -> Self {
        TimeGrid {
            step_duration_h: 0.25,
            n_steps: 672,
        }
    }
}

impl TimeGrid {
    pub fn new(step_duration_h: f64, n_steps: usize) -> Result<Self> {
        if !(step_duration_h.is_finite() && step_duration_h > 0.0) {
            return Err(Error::Config(format!(
                "step duration must be positive, got {step_duration_h}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(TimeGrid {
            step_duration_h,
            n_steps,
        })
    }

    pub fn step_duration_h(&self) -> f64 {
        self.step_duration_h
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon_h(&self) -> f64 {
        self.step_duration_h * self.n_steps as f64
    }

    /// Number of steps in 24 hours, if the step duration divides a day.
    pub fn steps_per_day(&self) -> Result<usize> {
        let per_day = 24.0 / self.step_duration_h;
        let rounded = per_day.round();
        if (per_day - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(Error::Config(format!(
                "step duration {} h does not divide a day",
                self.step_duration_h
            )));
        }
        Ok(rounded as usize)
    }

    /// Whole number of steps not exceeding `hours`.
    pub fn hours_to_steps(&self, hours: f64) -> usize {
        (hours / self.step_duration_h + 1e-9).floor().max(0.0) as usize
    }
}

/// Vehicle parameters. Defaults describe a medium-sized EV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvParams {
    pub battery_capacity_kwh: f64,
    pub max_charge_power_kw: f64,
    pub consumption_kwh_per_100km: f64,
    pub charge_efficiency: f64,
    pub soc_start: f64,
    pub soc_target: f64,
}

impl Default for EvParams {
    fn default() -> Self {
        EvParams {
            battery_capacity_kwh: 72.0,
            max_charge_power_kw: 11.0,
            consumption_kwh_per_100km: 14.5,
            charge_efficiency: 0.9,
            soc_start: 0.9,
            soc_target: 0.9,
        }
    }
}

impl EvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("battery_capacity_kwh", self.battery_capacity_kwh),
            ("max_charge_power_kw", self.max_charge_power_kw),
            ("consumption_kwh_per_100km", self.consumption_kwh_per_100km),
            ("charge_efficiency", self.charge_efficiency),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.charge_efficiency > 1.0 {
            return Err(Error::Config(format!(
                "charge_efficiency must be in (0, 1], got {}",
                self.charge_efficiency
            )));
        }
        for (name, v) in [("soc_start", self.soc_start), ("soc_target", self.soc_target)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Home,
    Work,
    Other,
}

/// One element of a driving profile. A trip's `destination` is the purpose
/// of the trip and becomes the location of the following park.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileEvent {
    Trip {
        start: usize,
        end: usize,
        distance_km: f64,
        destination: Location,
    },
    Park {
        start: usize,
        end: usize,
        location: Location,
    },
}

impl ProfileEvent {
    pub fn start(&self) -> usize {
        match *self {
            ProfileEvent::Trip { start, .. } | ProfileEvent::Park { start, .. } => start,
        }
    }

    pub fn end(&self) -> usize {
        match *self {
            ProfileEvent::Trip { end, .. } | ProfileEvent::Park { end, .. } => end,
        }
    }

    pub fn is_trip(&self) -> bool {
        matches!(self, ProfileEvent::Trip { .. })
    }
}

/// Week-long chain of alternating trips and parks for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingProfile {
    pub ev_id: usize,
    pub events: Vec<ProfileEvent>,
}

impl DrivingProfile {
    /// Checks that the events tile `[0, n_steps)` exactly, alternate between
    /// trips and parks, and carry sane payloads. The error names the index of
    /// the first offending event.
    pub fn validate(&self, grid: &TimeGrid) -> std::result::Result<(), String> {
        if self.events.is_empty() {
            return Err("profile has no events".into());
        }
        let mut cursor = 0;
        for (i, ev) in self.events.iter().enumerate() {
            if ev.start() != cursor {
                return Err(format!(
                    "event {i} starts at step {} but previous event ended at {cursor} (gap or overlap)",
                    ev.start()
                ));
            }
            if ev.end() <= ev.start() {
                return Err(format!("event {i} is empty or reversed ({}..{})", ev.start(), ev.end()));
            }
            if ev.end() > grid.n_steps() {
                return Err(format!(
                    "event {i} ends at step {} beyond the grid ({} steps)",
                    ev.end(),
                    grid.n_steps()
                ));
            }
            if i > 0 && ev.is_trip() == self.events[i - 1].is_trip() {
                return Err(format!("event {i} does not alternate trip/park"));
            }
            if let ProfileEvent::Trip { distance_km, .. } = ev {
                if !(distance_km.is_finite() && *distance_km > 0.0) {
                    return Err(format!("trip {i} has non-positive distance {distance_km}"));
                }
            }
            cursor = ev.end();
        }
        if cursor != grid.n_steps() {
            return Err(format!(
                "profile ends at step {cursor}, expected {}",
                grid.n_steps()
            ));
        }
        Ok(())
    }
}

/// One plug-in window with a fixed grid-side energy requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingEvent {
    pub ev_id: usize,
    pub plug_in: usize,
    pub plug_out: usize,
    pub required_grid_energy_kwh: f64,
    pub max_power_kw: f64,
}

impl ChargingEvent {
    pub fn window_len(&self) -> usize {
        self.plug_out - self.plug_in
    }

    /// Largest grid energy a single step can deliver.
    pub fn step_capacity_kwh(&self, grid: &TimeGrid) -> f64 {
        self.max_power_kw * grid.step_duration_h()
    }

    pub fn window_capacity_kwh(&self, grid: &TimeGrid) -> f64 {
        self.step_capacity_kwh(grid) * self.window_len() as f64
    }

    /// Steps used by charging at full power from plug-in (last one possibly
    /// partial).
    pub fn full_power_steps(&self, grid: &TimeGrid) -> usize {
        let cap = self.step_capacity_kwh(grid);
        if self.required_grid_energy_kwh <= ENERGY_EPS || cap <= 0.0 {
            return 0;
        }
        let steps = (self.required_grid_energy_kwh / cap - 1e-9).ceil().max(1.0) as usize;
        steps.min(self.window_len())
    }

    /// Steps the event can wait if it were charged at full power.
    pub fn time_flexibility(&self, grid: &TimeGrid) -> usize {
        self.window_len() - self.full_power_steps(grid)
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.plug_in >= self.plug_out {
            return Err(Error::InfeasibleEvent {
                event: self.ev_id,
                message: format!("empty window {}..{}", self.plug_in, self.plug_out),
            });
        }
        if self.plug_out > grid.n_steps() {
            return Err(Error::InfeasibleEvent {
                event: self.ev_id,
                message: format!("window ends at {} beyond the grid", self.plug_out),
            });
        }
        if !(self.max_power_kw.is_finite() && self.max_power_kw > 0.0) {
            return Err(Error::InfeasibleEvent {
                event: self.ev_id,
                message: format!("max power {} is not positive", self.max_power_kw),
            });
        }
        let cap = self.window_capacity_kwh(grid);
        let e = self.required_grid_energy_kwh;
        if !(e.is_finite() && e >= 0.0) || e > cap * (1.0 + 1e-12) + ENERGY_EPS {
            return Err(Error::InfeasibleEvent {
                event: self.ev_id,
                message: format!("required energy {e} kWh outside [0, {cap}] kWh"),
            });
        }
        Ok(())
    }
}

/// Grid power of one schedulable unit over a contiguous run of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    /// Index of the charging event (or aggregated object) this row belongs to.
    pub id: usize,
    pub start: usize,
    pub power_kw: Vec<f64>,
}

impl ScheduleRow {
    pub fn end(&self) -> usize {
        self.start + self.power_kw.len()
    }

    pub fn energy_kwh(&self, grid: &TimeGrid) -> f64 {
        self.power_kw.iter().sum::<f64>() * grid.step_duration_h()
    }
}

/// Per-unit grid power. Rows are sparse windows; steps outside a row carry
/// zero power.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadSchedule {
    pub rows: Vec<ScheduleRow>,
}

impl LoadSchedule {
    pub fn new(rows: Vec<ScheduleRow>) -> Self {
        LoadSchedule { rows }
    }

    /// Sum of all rows, per step.
    pub fn aggregate(&self, n_steps: usize) -> Result<Vec<f64>> {
        let mut total = vec![0.0; n_steps];
        for row in &self.rows {
            if row.end() > n_steps {
                return Err(Error::Dimension(format!(
                    "row {} ends at step {} beyond {n_steps} steps",
                    row.id,
                    row.end()
                )));
            }
            for (t, p) in row.power_kw.iter().enumerate() {
                total[row.start + t] += p;
            }
        }
        Ok(total)
    }

    /// Checks the schedule against the events it claims to serve (row `id`
    /// indexes `events`): no negative power, no power above the rating, no
    /// power outside the plug-in window. Energy is checked within `energy_tol`.
    pub fn check_against(
        &self,
        events: &[ChargingEvent],
        grid: &TimeGrid,
        energy_tol: f64,
    ) -> std::result::Result<(), String> {
        for row in &self.rows {
            let ev = events
                .get(row.id)
                .ok_or_else(|| format!("row id {} has no event", row.id))?;
            for (k, &p) in row.power_kw.iter().enumerate() {
                let t = row.start + k;
                let inside = t >= ev.plug_in && t < ev.plug_out;
                if p < -1e-9 {
                    return Err(format!("row {} step {t}: negative power {p}", row.id));
                }
                if !inside && p.abs() > 1e-9 {
                    return Err(format!("row {} step {t}: power {p} outside window", row.id));
                }
                if p > ev.max_power_kw * (1.0 + 1e-9) + 1e-9 {
                    return Err(format!(
                        "row {} step {t}: power {p} above rating {}",
                        row.id, ev.max_power_kw
                    ));
                }
            }
            let delivered = row.energy_kwh(grid);
            if (delivered - ev.required_grid_energy_kwh).abs() > energy_tol {
                return Err(format!(
                    "row {}: delivered {delivered} kWh, required {} kWh",
                    row.id, ev.required_grid_energy_kwh
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PriceLabel {
    Sin,
    Real,
    Future,
    Custom,
}

impl std::fmt::Display for PriceLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PriceLabel::Sin => "SIN",
            PriceLabel::Real => "REAL",
            PriceLabel::Future => "FUTURE",
            PriceLabel::Custom => "CUSTOM",
        };
        f.write_str(s)
    }
}

/// Per-step cost of grid energy. Values may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSignal {
    pub values: Vec<f64>,
    pub label: PriceLabel,
}

impl PriceSignal {
    /// Scales the values so that their maximum is exactly one.
    pub fn normalized(values: Vec<f64>, label: PriceLabel) -> Result<Self> {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max.is_finite() && max > 0.0) {
            return Err(Error::Config(format!(
                "price signal cannot be normalized to max 1 (max = {max})"
            )));
        }
        let mut values: Vec<f64> = values.into_iter().map(|v| v / max).collect();
        // Division can land one ulp off at the arg-max.
        for v in values.iter_mut() {
            if (*v - 1.0).abs() < 1e-12 {
                *v = 1.0;
            }
        }
        Ok(PriceSignal { values, label })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Total charging cost `sum_t sum_v p[t,v] * dt * c[t]`.
pub fn total_cost(schedule: &LoadSchedule, price: &PriceSignal, grid: &TimeGrid) -> Result<f64> {
    if price.len() != grid.n_steps() {
        return Err(Error::Dimension(format!(
            "price has {} steps, grid has {}",
            price.len(),
            grid.n_steps()
        )));
    }
    let dt = grid.step_duration_h();
    let mut cost = 0.0;
    for row in &schedule.rows {
        if row.end() > grid.n_steps() {
            return Err(Error::Dimension(format!(
                "schedule row {} ends at step {} beyond {} steps",
                row.id,
                row.end(),
                grid.n_steps()
            )));
        }
        let prices = &price.values[row.start..row.end()];
        cost += row
            .power_kw
            .iter()
            .zip(prices)
            .map(|(p, c)| p * dt * c)
            .sum::<f64>();
    }
    Ok(cost)
}

/// Relative extra cost of a method against the optimum.
pub fn gap(cost_method: f64, cost_optimal: f64) -> Result<f64> {
    if cost_optimal == 0.0 {
        return Err(Error::DivisionByZero(
            "gap is undefined for an optimal cost of zero".into(),
        ));
    }
    Ok((cost_method - cost_optimal).abs() / cost_optimal.abs())
}
