//! Synthetic week-long driving profiles and the JSON profile file format.
//!
//! Every day is sampled independently (Monday first): the car leaves home in
//! the morning, visits a few stops and comes back home before the evening
//! cut-off. Consecutive home parks across midnight are merged, so a profile
//! is always an alternating park/trip chain that tiles the horizon.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{DrivingProfile, Location, ProfileEvent, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileGenConfig {
    pub seed: u64,
    pub n_evs: usize,
    /// Per weekday (Monday first), weights for 0, 1, 2, ... out-of-home stops.
    /// A day with `k > 0` stops has `k + 1` trips, the last one back home.
    pub stop_count_weights: Vec<Vec<f64>>,
    /// Per weekday, mean and standard deviation of the home departure time in hours.
    pub departure_mean_h: Vec<f64>,
    pub departure_std_h: Vec<f64>,
    pub earliest_departure_h: f64,
    /// All cars are back home by this hour of the day.
    pub latest_return_h: f64,
    /// Trip distances are log-normal, truncated to `[min_distance_km, max_distance_km]`.
    pub distance_log_mean: f64,
    pub distance_log_std: f64,
    pub min_distance_km: f64,
    pub max_distance_km: f64,
    /// Average trip speed is uniform in this range; trip duration follows from distance.
    pub speed_kmh_min: f64,
    pub speed_kmh_max: f64,
    /// Probability that the first stop of a weekday (Mon-Fri) is work.
    pub work_share: f64,
    pub work_duration_mean_h: f64,
    pub work_duration_std_h: f64,
    /// Non-work stop durations are log-normal (hours), truncated to `[0, 8]`.
    pub other_duration_log_mean: f64,
    pub other_duration_log_std: f64,
}

impl Default for ProfileGenConfig {
    fn default() -> Self {
        let weekday = vec![0.10, 0.45, 0.33, 0.12];
        let saturday = vec![0.25, 0.45, 0.22, 0.08];
        let sunday = vec![0.40, 0.40, 0.15, 0.05];
        ProfileGenConfig {
            seed: 1,
            n_evs: 1000,
            stop_count_weights: vec![
                weekday.clone(),
                weekday.clone(),
                weekday.clone(),
                weekday.clone(),
                weekday,
                saturday,
                sunday,
            ],
            departure_mean_h: vec![7.5, 7.5, 7.5, 7.5, 7.5, 9.5, 10.5],
            departure_std_h: vec![1.5, 1.5, 1.5, 1.5, 1.5, 2.0, 2.0],
            earliest_departure_h: 4.0,
            latest_return_h: 23.0,
            // exp(2.39 + 0.8^2 / 2) is about 15 km.
            distance_log_mean: 2.39,
            distance_log_std: 0.8,
            min_distance_km: 0.5,
            max_distance_km: 80.0,
            speed_kmh_min: 20.0,
            speed_kmh_max: 60.0,
            work_share: 0.55,
            work_duration_mean_h: 8.5,
            work_duration_std_h: 1.0,
            other_duration_log_mean: 0.0,
            other_duration_log_std: 0.7,
        }
    }
}

impl ProfileGenConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.stop_count_weights.len() != 7
            || self.departure_mean_h.len() != 7
            || self.departure_std_h.len() != 7
        {
            return err("per-weekday parameters need exactly 7 entries".into());
        }
        for (d, w) in self.stop_count_weights.iter().enumerate() {
            if w.is_empty() || w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return err(format!("stop weights of weekday {d} must be non-negative with a positive sum"));
            }
        }
        let finite = [
            self.earliest_departure_h,
            self.latest_return_h,
            self.distance_log_mean,
            self.distance_log_std,
            self.min_distance_km,
            self.max_distance_km,
            self.speed_kmh_min,
            self.speed_kmh_max,
            self.work_share,
            self.work_duration_mean_h,
            self.work_duration_std_h,
            self.other_duration_log_mean,
            self.other_duration_log_std,
        ];
        if finite.iter().chain(&self.departure_mean_h).chain(&self.departure_std_h).any(|x| !x.is_finite()) {
            return err("all distribution parameters must be finite".into());
        }
        if self.departure_std_h.iter().any(|s| *s < 0.0)
            || self.distance_log_std < 0.0
            || self.work_duration_std_h < 0.0
            || self.other_duration_log_std < 0.0
        {
            return err("standard deviations must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.work_share) {
            return err(format!("work_share must be a probability, got {}", self.work_share));
        }
        if !(0.0 < self.earliest_departure_h && self.earliest_departure_h < self.latest_return_h && self.latest_return_h < 24.0) {
            return err("need 0 < earliest_departure_h < latest_return_h < 24".into());
        }
        if !(0.0 < self.min_distance_km && self.min_distance_km <= self.max_distance_km) {
            return err("need 0 < min_distance_km <= max_distance_km".into());
        }
        if !(0.0 < self.speed_kmh_min && self.speed_kmh_min <= self.speed_kmh_max) {
            return err("need 0 < speed_kmh_min <= speed_kmh_max".into());
        }
        let longest_trip_h = self.max_distance_km / self.speed_kmh_min;
        if 2.0 * longest_trip_h >= self.latest_return_h - self.earliest_departure_h {
            return err(format!(
                "a round trip of {:.1} h does not fit between departure and return limits",
                2.0 * longest_trip_h
            ));
        }
        Ok(())
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    distance: LogNormal<f64>,
    other_stay: LogNormal<f64>,
}

impl Sampler {
    fn new(cfg: &ProfileGenConfig) -> Result<Self> {
        let bad = |e: rand_distr::NormalError| Error::Config(e.to_string());
        Ok(Sampler {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            distance: LogNormal::new(cfg.distance_log_mean, cfg.distance_log_std).map_err(bad)?,
            other_stay: LogNormal::new(cfg.other_duration_log_mean, cfg.other_duration_log_std).map_err(bad)?,
        })
    }

    fn normal(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            return mean;
        }
        Normal::new(mean, std).map(|d| d.sample(&mut self.rng)).unwrap_or(mean)
    }

    fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    }

    /// Distance in km and duration in steps of one trip.
    fn trip(&mut self, cfg: &ProfileGenConfig, dt: f64) -> (f64, usize) {
        let d = self
            .distance
            .sample(&mut self.rng)
            .clamp(cfg.min_distance_km, cfg.max_distance_km);
        let speed = self.rng.random_range(cfg.speed_kmh_min..=cfg.speed_kmh_max);
        let steps = ((d / speed) / dt).ceil().max(1.0) as usize;
        (d, steps)
    }
}

/// Generates `cfg.n_evs` week-long profiles. Identical configs give identical fleets.
pub fn generate_fleet(cfg: &ProfileGenConfig, grid: &TimeGrid) -> Result<Vec<DrivingProfile>> {
    cfg.validate()?;
    let per_day = grid.steps_per_day()?;
    if grid.n_steps() % per_day != 0 {
        return Err(Error::Config(format!(
            "grid of {} steps is not a whole number of days",
            grid.n_steps()
        )));
    }
    let n_days = grid.n_steps() / per_day;
    let dt = grid.step_duration_h();
    let mut s = Sampler::new(cfg)?;

    let mut fleet = Vec::with_capacity(cfg.n_evs);
    for ev_id in 0..cfg.n_evs {
        let mut events: Vec<ProfileEvent> = Vec::new();
        for day in 0..n_days {
            let weekday = day % 7;
            let day_start = day * per_day;
            let day_end = day_start + per_day;
            let tour = sample_tour(cfg, &mut s, weekday, dt, day_start);
            let mut cursor = day_start;
            for leg in tour {
                push_park(&mut events, cursor, leg.depart, leg.from);
                events.push(ProfileEvent::Trip {
                    start: leg.depart,
                    end: leg.arrive,
                    distance_km: leg.distance_km,
                    destination: leg.to,
                });
                cursor = leg.arrive;
            }
            push_park(&mut events, cursor, day_end, Location::Home);
        }
        fleet.push(DrivingProfile { ev_id, events });
    }
    Ok(fleet)
}

struct Leg {
    from: Location,
    to: Location,
    depart: usize,
    arrive: usize,
    distance_km: f64,
}

fn push_park(events: &mut Vec<ProfileEvent>, start: usize, end: usize, location: Location) {
    if let Some(ProfileEvent::Park { end: prev_end, location: prev_loc, .. }) = events.last_mut() {
        if *prev_loc == location && *prev_end == start {
            *prev_end = end;
            return;
        }
    }
    events.push(ProfileEvent::Park { start, end, location });
}

/// One day's home-based tour. Stops that would push the return past the
/// cut-off are dropped from the end.
fn sample_tour(cfg: &ProfileGenConfig, s: &mut Sampler, weekday: usize, dt: f64, day_start: usize) -> Vec<Leg> {
    let n_stops = s.weighted(&cfg.stop_count_weights[weekday]);
    if n_stops == 0 {
        return Vec::new();
    }
    let latest_dep = cfg.latest_return_h - 1.0;
    let dep_h = s
        .normal(cfg.departure_mean_h[weekday], cfg.departure_std_h[weekday])
        .clamp(cfg.earliest_departure_h, latest_dep.max(cfg.earliest_departure_h));
    let limit = day_start + (cfg.latest_return_h / dt).floor() as usize;

    // Sample everything up front so the random stream does not depend on truncation.
    let mut stops = Vec::with_capacity(n_stops);
    for i in 0..n_stops {
        let location = if i == 0 && weekday < 5 && s.rng.random::<f64>() < cfg.work_share {
            Location::Work
        } else {
            Location::Other
        };
        let stay_h = match location {
            Location::Work => s
                .normal(cfg.work_duration_mean_h, cfg.work_duration_std_h)
                .clamp(2.0, 12.0),
            _ => s.other_stay.sample(&mut s.rng).clamp(0.0, 8.0),
        };
        let stay_steps = ((stay_h / dt).round() as usize).max(1);
        let (distance_km, trip_steps) = s.trip(cfg, dt);
        stops.push((location, stay_steps, distance_km, trip_steps));
    }
    let (home_km, home_steps) = s.trip(cfg, dt);

    let depart = day_start + ((dep_h / dt).round() as usize).max(1);
    let mut kept = n_stops;
    loop {
        if kept == 0 {
            return Vec::new();
        }
        let mut legs = Vec::with_capacity(kept + 1);
        let mut t = depart;
        let mut from = Location::Home;
        for &(to, stay, km, steps) in &stops[..kept] {
            legs.push(Leg { from, to, depart: t, arrive: t + steps, distance_km: km });
            t += steps + stay;
            from = to;
        }
        legs.push(Leg {
            from,
            to: Location::Home,
            depart: t,
            arrive: t + home_steps,
            distance_km: home_km,
        });
        if t + home_steps <= limit {
            return legs;
        }
        kept -= 1;
    }
}

/// On-disk event record: `{kind, start, end, distance_km?, location?}`.
/// For trips `location` is the destination.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    kind: EventKind,
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<Location>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EventKind {
    Trip,
    Park,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRecord {
    ev_id: usize,
    events: Vec<EventRecord>,
}

impl From<&DrivingProfile> for ProfileRecord {
    fn from(p: &DrivingProfile) -> Self {
        let events = p
            .events
            .iter()
            .map(|e| match *e {
                ProfileEvent::Trip { start, end, distance_km, destination } => EventRecord {
                    kind: EventKind::Trip,
                    start,
                    end,
                    distance_km: Some(distance_km),
                    location: Some(destination),
                },
                ProfileEvent::Park { start, end, location } => EventRecord {
                    kind: EventKind::Park,
                    start,
                    end,
                    distance_km: None,
                    location: Some(location),
                },
            })
            .collect();
        ProfileRecord { ev_id: p.ev_id, events }
    }
}

fn record_to_profile(idx: usize, rec: ProfileRecord) -> Result<DrivingProfile> {
    let ctx = format!("profile record {idx} (ev_id {})", rec.ev_id);
    let mut events = Vec::with_capacity(rec.events.len());
    for (j, e) in rec.events.into_iter().enumerate() {
        let ev = match e.kind {
            EventKind::Trip => ProfileEvent::Trip {
                start: e.start,
                end: e.end,
                distance_km: e
                    .distance_km
                    .ok_or_else(|| Error::parse(&ctx, format!("trip {j} lacks distance_km")))?,
                destination: e.location.unwrap_or(Location::Other),
            },
            EventKind::Park => ProfileEvent::Park {
                start: e.start,
                end: e.end,
                location: e
                    .location
                    .ok_or_else(|| Error::parse(&ctx, format!("park {j} lacks location")))?,
            },
        };
        events.push(ev);
    }
    Ok(DrivingProfile { ev_id: rec.ev_id, events })
}

/// Parses and validates a profile file held in memory.
pub fn parse_profiles(json: &str, grid: &TimeGrid) -> Result<Vec<DrivingProfile>> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(json).map_err(|e| Error::parse("profile file", e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, value)| {
            let rec: ProfileRecord = serde_json::from_value(value)
                .map_err(|e| Error::parse(format!("profile record {i}"), e.to_string()))?;
            let profile = record_to_profile(i, rec)?;
            profile
                .validate(grid)
                .map_err(|m| Error::parse(format!("profile record {i} (ev_id {})", profile.ev_id), m))?;
            Ok(profile)
        })
        .collect()
}

pub fn ingest_profiles(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<Vec<DrivingProfile>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text, grid)
}

pub fn profiles_to_json(fleet: &[DrivingProfile]) -> Result<String> {
    let records: Vec<ProfileRecord> = fleet.iter().map(ProfileRecord::from).collect();
    serde_json::to_string_pretty(&records).map_err(|e| Error::parse("profile export", e.to_string()))
}

pub fn export_profiles(fleet: &[DrivingProfile], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = profiles_to_json(fleet)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(json.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
