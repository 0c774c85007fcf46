//! Dependency-based FlexOffers: per step, a convex polygon over
//! (energy so far `x`, energy this step `y`).
//!
//! Every slice keeps its reachable range `[x_lo, x_hi]`. Inside an aggregate
//! all constituents sit at the same relative position `beta` of their own
//! ranges, so the aggregate's `x` fixes every constituent's `x`. The
//! aggregate polygon at `beta` is the set of `y` that moves every
//! constituent to a common relative position of its next range while
//! staying inside its own polygon; it is sampled at `num_samples` points and
//! interpolated, which can only shrink it (lower bound convex, upper bound
//! concave). Any aggregate trajectory therefore disaggregates exactly.

use rayon::prelude::*;

use crate::domain::{ChargingEvent, LoadSchedule, PriceSignal, ScheduleRow, TimeGrid};
use crate::error::{Error, Result};
use crate::grouping::{group_events, GroupingSpec};
use crate::lp::{LinearProgram, Relation};

/// Widths below this are treated as a single point.
const WIDTH_EPS: f64 = 1e-9;
/// Slack when intersecting constituent ranges.
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    /// Relative position in `[x_lo, x_hi]` of the slice.
    pub beta: f64,
    pub x: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Columns are sorted by `beta`; the polygon is their piece-wise linear
/// interpolation and is empty outside `[first.beta, last.beta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DfoSlice {
    pub x_lo: f64,
    pub x_hi: f64,
    pub columns: Vec<Column>,
}

impl DfoSlice {
    fn beta_range(&self) -> (f64, f64) {
        (self.columns[0].beta, self.columns[self.columns.len() - 1].beta)
    }

    /// `(y_min, y_max)` at relative position `beta`, if inside the polygon.
    fn bounds_at(&self, beta: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.beta_range();
        if beta < lo - FEAS_EPS || beta > hi + FEAS_EPS {
            return None;
        }
        let beta = beta.clamp(lo, hi);
        let j = self.columns.partition_point(|c| c.beta < beta);
        if j == 0 {
            let c = &self.columns[0];
            return Some((c.y_min, c.y_max));
        }
        if j == self.columns.len() {
            let c = &self.columns[j - 1];
            return Some((c.y_min, c.y_max));
        }
        let (a, b) = (&self.columns[j - 1], &self.columns[j]);
        let w = b.beta - a.beta;
        if w <= 0.0 {
            return Some((b.y_min, b.y_max));
        }
        let s = (beta - a.beta) / w;
        Some((a.y_min + s * (b.y_min - a.y_min), a.y_max + s * (b.y_max - a.y_max)))
    }

    fn x_at(&self, beta: f64) -> f64 {
        self.x_lo + beta * (self.x_hi - self.x_lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyFlexOffer {
    pub start: usize,
    pub slices: Vec<DfoSlice>,
    pub total_kwh: f64,
}

impl DependencyFlexOffer {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Reachable `x` range at boundary `k` (`k == len` is the end).
    fn range(&self, k: usize) -> (f64, f64) {
        match self.slices.get(k) {
            Some(s) => (s.x_lo, s.x_hi),
            None => (self.total_kwh, self.total_kwh),
        }
    }

    /// Checks that `y` (one value per slice, starting from `x = 0`) stays in
    /// every polygon and ends at the total.
    pub fn admits(&self, y: &[f64], tol: f64) -> std::result::Result<(), String> {
        if y.len() != self.len() {
            return Err(format!("{} values for {} slices", y.len(), self.len()));
        }
        let mut x = 0.0;
        for (k, s) in self.slices.iter().enumerate() {
            let w = s.x_hi - s.x_lo;
            let beta = if w > WIDTH_EPS { (x - s.x_lo) / w } else { 0.0 };
            if x < s.x_lo - tol || x > s.x_hi + tol {
                return Err(format!("slice {k}: x = {x} outside [{}, {}]", s.x_lo, s.x_hi));
            }
            let (lo, hi) = s
                .bounds_at(beta.clamp(0.0, 1.0))
                .ok_or_else(|| format!("slice {k}: x = {x} outside the polygon"))?;
            if y[k] < lo - tol || y[k] > hi + tol {
                return Err(format!("slice {k}: y = {} outside [{lo}, {hi}] at x = {x}", y[k]));
            }
            x += y[k];
        }
        if (x - self.total_kwh).abs() > tol {
            return Err(format!("ends at {x}, total is {}", self.total_kwh));
        }
        Ok(())
    }
}

fn point_slice(x: f64) -> DfoSlice {
    let col = |beta| Column { beta, x, y_min: 0.0, y_max: 0.0 };
    DfoSlice { x_lo: x, x_hi: x, columns: vec![col(0.0), col(1.0)] }
}

/// Exact polygons of one event over `[start, end)`, which must contain the
/// window; steps outside the window are zero-energy points.
pub fn event_to_dfo_padded(event: &ChargingEvent, grid: &TimeGrid, start: usize, end: usize) -> Result<DependencyFlexOffer> {
    event.validate(grid)?;
    if start > event.plug_in || end < event.plug_out {
        return Err(Error::Dimension(format!(
            "span {start}..{end} does not cover window {}..{}",
            event.plug_in, event.plug_out
        )));
    }
    let total = event.required_grid_energy_kwh;
    let c = event.step_capacity_kwh(grid);
    let n = event.window_len();
    let mut slices = Vec::with_capacity(end - start);
    slices.extend((start..event.plug_in).map(|_| point_slice(0.0)));
    for k in 0..n {
        let lo = (total - (n - k) as f64 * c).max(0.0);
        let hi = (k as f64 * c).min(total).max(lo);
        let after = (n - k - 1) as f64;
        let y_min = |x: f64| (total - x - after * c).max(0.0);
        let y_max = |x: f64| c.min(total - x).max(y_min(x));
        let w = hi - lo;
        let mut betas = vec![0.0, 1.0];
        if w > WIDTH_EPS {
            for kink in [total - after * c, total - c] {
                let b = (kink - lo) / w;
                if b > 1e-12 && b < 1.0 - 1e-12 {
                    betas.push(b);
                }
            }
        }
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        let columns = betas
            .into_iter()
            .map(|beta| {
                let x = lo + beta * w;
                Column { beta, x, y_min: y_min(x), y_max: y_max(x) }
            })
            .collect();
        slices.push(DfoSlice { x_lo: lo, x_hi: hi, columns });
    }
    slices.extend((event.plug_out..end).map(|_| point_slice(total)));
    Ok(DependencyFlexOffer { start, slices, total_kwh: total })
}

pub fn event_to_dfo(event: &ChargingEvent, grid: &TimeGrid) -> Result<DependencyFlexOffer> {
    event_to_dfo_padded(event, grid, event.plug_in, event.plug_out)
}

/// Common relative position of the next range each child can move to from
/// relative position `beta`: `(lower, upper)`, or `None` if some child's
/// polygon is empty there. Children with a point-like next range impose nothing.
fn next_beta_bounds(children: &[&DependencyFlexOffer], k: usize, beta: f64) -> Option<(f64, f64)> {
    let mut h = (0.0f64, 1.0f64);
    for d in children {
        let s = &d.slices[k];
        let (y_lo, y_hi) = s.bounds_at(beta)?;
        let (n_lo, n_hi) = d.range(k + 1);
        let w = n_hi - n_lo;
        if w <= WIDTH_EPS {
            continue;
        }
        let x = s.x_at(beta);
        h.0 = h.0.max((x + y_lo - n_lo) / w);
        h.1 = h.1.min((x + y_hi - n_lo) / w);
    }
    Some(h)
}

/// Aggregates DFOs with identical start and length.
pub fn aggregate_dfos(children: &[&DependencyFlexOffer], num_samples: usize) -> Result<DependencyFlexOffer> {
    if num_samples < 2 {
        return Err(Error::Config(format!("num_samples must be at least 2, got {num_samples}")));
    }
    let first = children
        .first()
        .ok_or_else(|| Error::Aggregation("no DFOs to aggregate".into()))?;
    if children.iter().any(|d| d.start != first.start || d.len() != first.len()) {
        return Err(Error::Aggregation("DFOs must share start and length; pad them first".into()));
    }
    let total: f64 = children.iter().map(|d| d.total_kwh).sum();
    let mut slices = Vec::with_capacity(first.len());
    for k in 0..first.len() {
        let x_lo: f64 = children.iter().map(|d| d.slices[k].x_lo).sum();
        let x_hi: f64 = children.iter().map(|d| d.slices[k].x_hi).sum();
        let (nx_lo, nx_hi) = children
            .iter()
            .map(|d| d.range(k + 1))
            .fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1));
        let nw = nx_hi - nx_lo;

        let (b_lo, b_hi) = children.iter().map(|d| d.slices[k].beta_range()).fold(
            (0.0f64, 1.0f64),
            |a, r| (a.0.max(r.0), a.1.min(r.1)),
        );
        if b_lo > b_hi + FEAS_EPS {
            return Err(Error::Aggregation(format!("slice {k}: constituent polygons do not overlap")));
        }
        // Slack of the common next position, concave in beta: find where it is non-negative.
        let mut breaks: Vec<f64> = children
            .iter()
            .flat_map(|d| d.slices[k].columns.iter().map(|c| c.beta))
            .filter(|b| *b >= b_lo && *b <= b_hi)
            .chain([b_lo, b_hi.max(b_lo)])
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
        let slack: Vec<f64> = breaks
            .iter()
            .map(|&b| next_beta_bounds(children, k, b).map_or(f64::NEG_INFINITY, |(l, h)| h - l))
            .collect();
        let (f_lo, f_hi) = feasible_interval(&breaks, &slack).ok_or_else(|| {
            Error::Aggregation(format!("slice {k}: no common relative position is feasible"))
        })?;

        let mut columns = Vec::with_capacity(num_samples);
        for j in 0..num_samples {
            let beta = if f_hi - f_lo <= 1e-15 {
                f_lo
            } else {
                f_lo + (f_hi - f_lo) * j as f64 / (num_samples - 1) as f64
            };
            let x = x_lo + beta * (x_hi - x_lo);
            let (h_lo, h_hi) = next_beta_bounds(children, k, beta)
                .map(|(l, h)| (l.clamp(0.0, 1.0), h.clamp(0.0, 1.0)))
                .unwrap_or((1.0, 1.0));
            let (y_min, y_max) = if nw <= WIDTH_EPS {
                let y = nx_lo - x;
                (y, y)
            } else {
                let h_hi = h_hi.max(h_lo);
                (nx_lo + nw * h_lo - x, nx_lo + nw * h_hi - x)
            };
            if columns.last().is_some_and(|c: &Column| c.beta >= beta) {
                continue;
            }
            columns.push(Column { beta, x, y_min, y_max });
        }
        slices.push(DfoSlice { x_lo, x_hi, columns });
    }
    Ok(DependencyFlexOffer { start: first.start, slices, total_kwh: total })
}

/// Interval where the piece-wise linear concave `g` (sampled at sorted
/// `xs`) is non-negative, allowing a small slack.
fn feasible_interval(xs: &[f64], g: &[f64]) -> Option<(f64, f64)> {
    let ok = |v: f64| v >= -FEAS_EPS;
    let first = g.iter().position(|&v| ok(v))?;
    let last = g.iter().rposition(|&v| ok(v))?;
    let cross = |i: usize, j: usize| -> f64 {
        // Root of g between xs[i] (infeasible) and xs[j] (feasible).
        if !g[i].is_finite() {
            return xs[j];
        }
        let t = g[j] / (g[j] - g[i]);
        xs[j] + t * (xs[i] - xs[j])
    };
    let lo = if first > 0 { cross(first - 1, first) } else { xs[first] };
    let hi = if last + 1 < xs.len() { cross(last + 1, last) } else { xs[last] };
    Some((lo.min(xs[first]), hi.max(xs[last])))
}

/// A group's aggregate and its padded constituents (`event` indexes the input).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDfo {
    pub dfo: DependencyFlexOffer,
    pub members: Vec<(usize, DependencyFlexOffer)>,
}

/// Pads the events to their joint window and folds them pairwise in
/// plug-in order.
pub fn aggregate_group(events: &[ChargingEvent], members: &[usize], grid: &TimeGrid, num_samples: usize) -> Result<AggregatedDfo> {
    let mut order = members.to_vec();
    order.sort_by_key(|&i| (events[i].plug_in, i));
    let start = order.iter().map(|&i| events[i].plug_in).min().unwrap_or(0);
    let end = order.iter().map(|&i| events[i].plug_out).max().unwrap_or(0);
    let leaves = order
        .iter()
        .map(|&i| Ok((i, event_to_dfo_padded(&events[i], grid, start, end)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = leaves
        .first()
        .map(|(_, d)| d.clone())
        .ok_or_else(|| Error::Aggregation("empty DFO group".into()))?;
    for (_, leaf) in &leaves[1..] {
        acc = aggregate_dfos(&[&acc, leaf], num_samples)?;
    }
    Ok(AggregatedDfo { dfo: acc, members: leaves })
}

/// Cheapest trajectory through the polygons: returns `x` at every boundary
/// (`len + 1` values). Each polygon becomes one inequality per boundary
/// segment. `y_k = x_{k+1} - x_k` is substituted and boundaries with a
/// single reachable value are constants, which keeps the LP free of
/// equality chains the simplex handles poorly.
pub fn optimize_dfo(dfo: &DependencyFlexOffer, price: &PriceSignal) -> Result<Vec<f64>> {
    if dfo.start + dfo.len() > price.len() {
        return Err(Error::Dimension("DFO extends beyond the price signal".into()));
    }
    let n = dfo.len();
    let c = |k: usize| price.values[dfo.start + k];
    let mut lp = LinearProgram::new();
    // Per boundary: a variable, or a fixed value.
    let mut xs: Vec<std::result::Result<crate::lp::VarId, f64>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (lo, hi) = match dfo.slices.get(k) {
            Some(s) => {
                let (a, b) = (s.columns[0].x, s.columns[s.columns.len() - 1].x);
                (a.min(b), a.max(b))
            }
            None => (dfo.total_kwh, dfo.total_kwh),
        };
        if k == 0 || hi - lo <= WIDTH_EPS {
            xs.push(Err(if k == 0 { 0.0 } else { lo }));
        } else {
            // Objective sum c_k (x_{k+1} - x_k) puts c_{k-1} - c_k on x_k.
            let cost = c(k - 1) - if k < n { c(k) } else { 0.0 };
            xs.push(Ok(lp.add_var(lo, hi, cost)));
        }
    }
    let mut fixed_violation: Option<String> = None;
    for (k, s) in dfo.slices.iter().enumerate() {
        for (rel, pts) in [(Relation::Ge, lower_chain(s)), (Relation::Le, upper_chain(s))] {
            let mut lines: Vec<(f64, f64)> = Vec::new();
            if pts.len() == 1 {
                lines.push((0.0, pts[0].1));
            }
            for w in pts.windows(2) {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                lines.push((slope, w[0].1 - slope * w[0].0));
            }
            // x_{k+1} - x_k (rel) slope x_k + icept
            for (slope, icept) in lines {
                let mut terms = Vec::with_capacity(2);
                let mut rhs = icept;
                match xs[k + 1] {
                    Ok(v) => terms.push((v, 1.0)),
                    Err(x) => rhs -= x,
                }
                // Slopes of -1 (the `y = total - x` edges) must cancel exactly;
                // residue like 1e-16 derails the simplex.
                let coef = if (1.0 + slope).abs() < 1e-12 { 0.0 } else { -1.0 - slope };
                match xs[k] {
                    Ok(v) if coef != 0.0 => terms.push((v, coef)),
                    Ok(_) => {}
                    Err(x) => rhs -= coef * x,
                }
                if terms.is_empty() {
                    let ok = match rel {
                        Relation::Ge => rhs <= 1e-7,
                        _ => rhs >= -1e-7,
                    };
                    if !ok && fixed_violation.is_none() {
                        fixed_violation = Some(format!("slice {k} has no feasible energy ({rhs})"));
                    }
                    continue;
                }
                lp.add_constraint(&terms, rel, rhs);
            }
        }
    }
    if let Some(m) = fixed_violation {
        return Err(Error::Aggregation(m));
    }
    let sol = if lp.num_vars() == 0 {
        None
    } else {
        Some(lp.solve_optimal("DFO").map_err(|e| Error::Aggregation(format!("DFO LP failed: {e}")))?)
    };
    Ok(xs
        .iter()
        .map(|x| match (x, &sol) {
            (Ok(v), Some(sol)) => sol.value(*v),
            (Err(x), _) => *x,
            (Ok(_), None) => unreachable!("variables imply a solution"),
        })
        .collect())
}

/// `(x, bound)` points with distinct `x`; coinciding columns keep the tighter bound.
fn chain(s: &DfoSlice, lower: bool) -> Vec<(f64, f64)> {
    let scale = s.x_hi.abs().max(1.0);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(s.columns.len());
    for c in &s.columns {
        let v = if lower { c.y_min } else { c.y_max };
        match pts.last_mut() {
            Some(last) if c.x - last.0 <= 1e-9 * scale => {
                last.1 = if lower { last.1.max(v) } else { last.1.min(v) };
            }
            _ => pts.push((c.x, v)),
        }
    }
    pts
}

fn lower_chain(s: &DfoSlice) -> Vec<(f64, f64)> {
    chain(s, true)
}

fn upper_chain(s: &DfoSlice) -> Vec<(f64, f64)> {
    chain(s, false)
}

/// Splits an aggregate trajectory (`x` at every boundary) over the members:
/// each takes the same relative position of its own range. Returns per
/// member the energy of every slice.
pub fn disaggregate_dfo(agg: &AggregatedDfo, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = agg.dfo.len();
    if x.len() != n + 1 {
        return Err(Error::Dimension(format!("{} boundary values for {n} slices", x.len())));
    }
    let betas: Vec<f64> = (0..n)
        .map(|k| {
            let s = &agg.dfo.slices[k];
            let w = s.x_hi - s.x_lo;
            let (lo, hi) = s.beta_range();
            if w > WIDTH_EPS {
                ((x[k] - s.x_lo) / w).clamp(lo, hi)
            } else {
                lo
            }
        })
        .collect();
    Ok(agg
        .members
        .iter()
        .map(|(_, d)| {
            let pos = |k: usize| -> f64 {
                if k == n {
                    d.total_kwh
                } else {
                    let s = &d.slices[k];
                    s.x_lo + betas[k] * (s.x_hi - s.x_lo)
                }
            };
            (0..n).map(|k| pos(k + 1) - pos(k)).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfoOutcome {
    /// Row `id` indexes the input events.
    pub schedule: LoadSchedule,
    pub n_aggregated: usize,
    /// Per-step grid energy of the optimized aggregates.
    pub aggregate_kwh: Vec<f64>,
}

pub fn dfo_pipeline(
    events: &[ChargingEvent],
    price: &PriceSignal,
    grid: &TimeGrid,
    grouping: &GroupingSpec,
    num_samples: usize,
) -> Result<DfoOutcome> {
    let groups = group_events(events, grouping, grid)?;
    let dt = grid.step_duration_h();
    let parts = groups
        .par_iter()
        .map(|g| {
            let agg = aggregate_group(events, g, grid, num_samples)?;
            let x = optimize_dfo(&agg.dfo, price)?;
            let ys = disaggregate_dfo(&agg, &x)?;
            let agg_y: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let rows: Vec<ScheduleRow> = agg
                .members
                .iter()
                .zip(ys)
                .map(|((i, _), y)| {
                    let ev = &events[*i];
                    let a = ev.plug_in - agg.dfo.start;
                    ScheduleRow {
                        id: *i,
                        start: ev.plug_in,
                        power_kw: y[a..a + ev.window_len()].iter().map(|e| e / dt).collect(),
                    }
                })
                .collect();
            Ok((agg.dfo.start, agg_y, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut aggregate_kwh = vec![0.0; grid.n_steps()];
    let mut rows = Vec::with_capacity(events.len());
    for (start, y, r) in parts {
        for (k, e) in y.iter().enumerate() {
            aggregate_kwh[start + k] += e;
        }
        rows.extend(r);
    }
    rows.sort_by_key(|r| r.id);
    Ok(DfoOutcome { schedule: LoadSchedule::new(rows), n_aggregated: groups.len(), aggregate_kwh })
}
