//! Discrete-time simulation of the load / carry / offload relay loop.
//!
//! States:
//!
//! | id | activity                                   |
//! |----|--------------------------------------------|
//! | 1  | hover at the loading point, loading        |
//! | 2  | fly towards the GS while still loading     |
//! | 3  | fly towards the GS with no link            |
//! | 4  | fly towards the GS while offloading        |
//! | 5  | hover at the offloading point, offloading  |
//! | 6  | fly back while still offloading            |
//! | 7  | fly back with no link                      |
//! | 8  | fly back while loading                     |
//!
//! Each step first moves the relay, then evaluates both links at the new
//! position, moves data, and finally applies every exit condition that is
//! already satisfied (so zero-length states are passed through in the same
//! step). Positions live on the lattice `d_load + n * V * dt`.
//!
//! A node exactly at the maximum range counts as in range for the state
//! transitions, although the ACM table gives it zero rate.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acm::{AcmError, AcmTable};
use crate::staticrelay::{self, StaticError};

const POSITION_TOL_M: f64 = 1e-6;
const MAX_TRANSITIONS_PER_STEP: usize = 8;

#[derive(Debug, Error)]
pub enum FerryError {
    #[error("invalid ferry parameter `{field}`: {reason}")]
    ConfigInvalid { field: &'static str, reason: String },
    #[error(transparent)]
    Acm(#[from] AcmError),
    #[error(transparent)]
    Static(#[from] StaticError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// How the direct DCDS-to-GS flow that exists while both links are up is
/// booked against the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassthroughAccounting {
    /// The buffer still exchanges data at the full rate of the state's
    /// primary link and the direct flow is delivered on top.
    #[default]
    Additive,
    /// The buffer only sees what is left of the primary link after the direct flow.
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerryParams {
    /// DCDS to GS distance.
    pub d_total_m: f64,
    pub speed_mps: f64,
    pub dt_s: f64,
    pub buffer_bits: f64,
    /// Hover distance from the DCDS while loading.
    pub d_load_m: f64,
    /// Hover distance from the GS while offloading.
    pub d_offload_m: f64,
    /// Caching factor: loading ends at `alpha * buffer_bits`.
    pub alpha: f64,
    /// Offloading factor: offloading ends at `beta * buffer_bits`.
    pub beta: f64,
    pub streams: usize,
    pub table: AcmTable,
    pub t_total_s: f64,
    /// Required effective rate for the delay metric, bit/s.
    pub re_star_bps: f64,
    pub passthrough: bool,
    #[serde(default)]
    pub accounting: PassthroughAccounting,
}

impl FerryParams {
    /// Scenario I geometry with a 32 Gbit buffer and the benchmark hover vector.
    pub fn scenario1_default() -> Self {
        Self {
            d_total_m: 8500.0,
            speed_mps: 50.0,
            dt_s: 1.0,
            buffer_bits: 32e9,
            d_load_m: 500.0,
            d_offload_m: 500.0,
            alpha: 1.0,
            beta: 0.0,
            streams: 8,
            table: AcmTable::standard(),
            t_total_s: 3000.0,
            re_star_bps: 0.0,
            passthrough: true,
            accounting: PassthroughAccounting::Additive,
        }
    }

    fn step_m(&self) -> f64 {
        self.speed_mps * self.dt_s
    }

    pub fn validate(&self) -> Result<(), FerryError> {
        let bad = |field: &'static str, reason: String| Err(FerryError::ConfigInvalid { field, reason });
        let (d_min, d_max) = (self.table.d_min(), self.table.d_max());
        if !(self.d_total_m > 0.0 && self.d_total_m.is_finite()) {
            return bad("d_total_m", "must be positive".into());
        }
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return bad("speed_mps", "must be positive".into());
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return bad("dt_s", "must be positive".into());
        }
        if !(self.buffer_bits > 0.0 && self.buffer_bits.is_finite()) {
            return bad("buffer_bits", "must be positive".into());
        }
        for (field, d) in [("d_load_m", self.d_load_m), ("d_offload_m", self.d_offload_m)] {
            if !(d >= d_min && d <= d_max) {
                return bad(field, format!("{d} m outside [d_min = {d_min} m, d_max = {d_max} m]"));
            }
        }
        if !(self.d_load_m + self.d_offload_m < self.d_total_m) {
            return bad(
                "d_offload_m",
                format!(
                    "hover points overlap: d_load + d_offload = {} m must be below D = {} m",
                    self.d_load_m + self.d_offload_m,
                    self.d_total_m
                ),
            );
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("{} outside (0, 1]", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return bad("beta", format!("{} outside [0, 1)", self.beta));
        }
        if !(self.beta < self.alpha) {
            return bad("beta", format!("beta {} must be below alpha {}", self.beta, self.alpha));
        }
        if self.streams == 0 {
            return bad("streams", "must be at least 1".into());
        }
        if !(self.t_total_s >= 0.0 && self.t_total_s.is_finite()) {
            return bad("t_total_s", "must be non-negative".into());
        }
        if !(self.re_star_bps >= 0.0) {
            return bad("re_star_bps", "must be non-negative".into());
        }
        Ok(())
    }

    /// Moves the offloading point to the nearest position reachable on the
    /// motion lattice that stays inside `[d_min, d_max]`, with a warning if it moved.
    pub fn snapped(&self) -> Self {
        let out = self.snap_quiet();
        if out.d_offload_m != self.d_offload_m {
            log::warn!(
                "offloading point {} m is off the {} m motion lattice; using {} m",
                self.d_offload_m,
                self.step_m(),
                out.d_offload_m
            );
        }
        out
    }

    fn snap_quiet(&self) -> Self {
        let step = self.step_m();
        let span = self.d_total_m - self.d_offload_m - self.d_load_m;
        let n0 = (span / step).round() as i64;
        let offload_at = |n: i64| self.d_total_m - self.d_load_m - n as f64 * step;
        let fits = |n: i64| {
            let d = offload_at(n);
            n >= 1 && d >= self.table.d_min() && d <= self.table.d_max()
        };
        let mut out = self.clone();
        if let Some(n) = [n0, n0 + 1, n0 - 1, n0 + 2, n0 - 2].into_iter().find(|&n| fits(n)) {
            let d = offload_at(n);
            if (d - self.d_offload_m).abs() > 1e-9 {
                out.d_offload_m = d;
            }
        }
        out
    }

    fn offload_index(&self) -> i64 {
        ((self.d_total_m - self.d_offload_m - self.d_load_m) / self.step_m()).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub step: u64,
    pub t_s: f64,
    /// Lattice index; the position is `d_load + lattice * V * dt`.
    pub lattice: i64,
    pub x_m: f64,
    pub state: u8,
    pub t_d_bits: f64,
    pub t_r_bits: f64,
    /// Everything taken from the DCDS, buffered or passed through.
    pub loaded_bits: f64,
    pub loop_index: u32,
    pub hover_elapsed_steps: u64,
    /// `None` means the hover never ends on its own (no usable link).
    pub hover_target_steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub state: u8,
    pub x_m: f64,
    pub d_rg_m: f64,
    #[serde(rename = "T_d_bits")]
    pub t_d_bits: f64,
    #[serde(rename = "T_r_bits")]
    pub t_r_bits: f64,
    #[serde(rename = "R_e_bps")]
    pub r_e_bps: f64,
    pub load_bps: f64,
    pub offload_bps: f64,
    pub passthrough_bps: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TStar {
    Reached(f64),
    Unreached,
}

impl TStar {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            TStar::Reached(t) => Some(*t),
            TStar::Unreached => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub t_s: f64,
    pub state: u8,
    pub loop_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerryMetrics {
    pub delivered_total_bits: f64,
    pub loaded_total_bits: f64,
    pub passthrough_total_bits: f64,
    /// First entry into state 4 (first GS contact).
    pub tau0_s: Option<f64>,
    pub t_star: TStar,
    pub final_effective_rate_bps: f64,
    /// Time between consecutive entries into the loading hover.
    pub loop_durations_s: Vec<f64>,
    /// Planned hover durations at each loading / offloading entry (`None` = unbounded).
    pub loading_durations_s: Vec<Option<f64>>,
    pub offloading_durations_s: Vec<Option<f64>>,
    pub state_entries: Vec<StateEntry>,
}

/// Rates of the two links at relay position `x`, bit/s.
fn link_rates(p: &FerryParams, x: f64) -> Result<(f64, f64), FerryError> {
    let load = p.table.link_rate(x, p.streams)?;
    let offload = p.table.link_rate(p.d_total_m - x, p.streams)?;
    Ok((load, offload))
}

fn passthrough_rate(p: &FerryParams, load: f64, offload: f64) -> f64 {
    if p.passthrough && load > 0.0 && offload > 0.0 {
        load.min(offload)
    } else {
        0.0
    }
}

fn buffer_rate(p: &FerryParams, link: f64, passthrough: f64) -> f64 {
    match p.accounting {
        PassthroughAccounting::Additive => link,
        PassthroughAccounting::Residual => link - passthrough,
    }
}

fn hover_seconds(amount_bits: f64, rate_bps: f64) -> Option<f64> {
    if amount_bits <= 0.0 {
        Some(0.0)
    } else if rate_bps > 0.0 {
        Some((amount_bits / rate_bps).floor())
    } else {
        None
    }
}

fn position(p: &FerryParams, lattice: i64) -> f64 {
    p.d_load_m + lattice as f64 * p.step_m()
}

struct Recorder<'a> {
    entries: &'a mut Vec<StateEntry>,
    loading: &'a mut Vec<Option<f64>>,
    offloading: &'a mut Vec<Option<f64>>,
}

fn enter(s: &mut SimState, p: &FerryParams, next: u8, rec: &mut Option<Recorder<'_>>) -> Result<(), FerryError> {
    s.state = next;
    let (load, offload) = link_rates(p, s.x_m)?;
    let m = passthrough_rate(p, load, offload);
    let planned = match next {
        1 => {
            let secs = hover_seconds(p.alpha * p.buffer_bits - s.t_d_bits, buffer_rate(p, load, m));
            if let Some(r) = rec.as_mut() {
                r.loading.push(secs);
            }
            Some(secs)
        }
        5 => {
            let secs = hover_seconds(s.t_d_bits - p.beta * p.buffer_bits, buffer_rate(p, offload, m));
            if let Some(r) = rec.as_mut() {
                r.offloading.push(secs);
            }
            Some(secs)
        }
        _ => None,
    };
    if let Some(secs) = planned {
        s.hover_elapsed_steps = 0;
        s.hover_target_steps = secs.map(|v| (v / p.dt_s).ceil() as u64);
    }
    if let Some(r) = rec.as_mut() {
        r.entries.push(StateEntry {
            t_s: s.t_s,
            state: next,
            loop_index: s.loop_index,
        });
    }
    Ok(())
}

fn hover_done(s: &SimState) -> bool {
    s.hover_target_steps.is_some_and(|n| s.hover_elapsed_steps >= n)
}

/// Applies every exit condition that holds at the current position and buffer level.
fn settle(s: &mut SimState, p: &FerryParams, mut rec: Option<Recorder<'_>>) -> Result<(), FerryError> {
    let d_max = p.table.d_max();
    for _ in 0..MAX_TRANSITIONS_PER_STEP {
        let x = s.x_m;
        let d_rg = p.d_total_m - x;
        let next = match s.state {
            1 if hover_done(s) => 2,
            2 if d_rg <= d_max => 4,
            2 if x > d_max => 3,
            3 if d_rg <= d_max => 4,
            4 if d_rg <= p.d_offload_m + POSITION_TOL_M => 5,
            5 if hover_done(s) => 6,
            6 if x <= d_max => 8,
            6 if d_rg > d_max => 7,
            7 if x <= d_max => 8,
            8 if x <= p.d_load_m + POSITION_TOL_M => {
                s.loop_index += 1;
                1
            }
            _ => break,
        };
        enter(s, p, next, &mut rec)?;
    }
    Ok(())
}

/// Initial state: hovering at the loading point with an empty buffer.
pub fn initial_state(p: &FerryParams) -> Result<SimState, FerryError> {
    let mut s = SimState {
        step: 0,
        t_s: 0.0,
        lattice: 0,
        x_m: p.d_load_m,
        state: 1,
        t_d_bits: 0.0,
        t_r_bits: 0.0,
        loaded_bits: 0.0,
        loop_index: 0,
        hover_elapsed_steps: 0,
        hover_target_steps: None,
    };
    enter(&mut s, p, 1, &mut None)?;
    settle(&mut s, p, None)?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Flows {
    load: f64,
    offload: f64,
    passthrough: f64,
}

fn advance(s: &mut SimState, p: &FerryParams, rec: Option<Recorder<'_>>) -> Result<Flows, FerryError> {
    s.step += 1;
    s.t_s = s.step as f64 * p.dt_s;
    match s.state {
        2..=4 => s.lattice += 1,
        6..=8 => s.lattice -= 1,
        _ => {}
    }
    // the lattice never leaves the segment between the two hover points
    s.lattice = s.lattice.clamp(0, p.offload_index());
    s.x_m = position(p, s.lattice);

    let (load, offload) = link_rates(p, s.x_m)?;
    let m = passthrough_rate(p, load, offload);
    let dt = p.dt_s;
    s.t_r_bits += m * dt;
    s.loaded_bits += m * dt;

    let mut flows = Flows {
        load: 0.0,
        offload: 0.0,
        passthrough: m,
    };
    match s.state {
        1 | 2 | 8 => {
            let add = (buffer_rate(p, load, m) * dt).min(p.buffer_bits - s.t_d_bits).max(0.0);
            s.t_d_bits += add;
            s.loaded_bits += add;
            flows.load = add / dt;
        }
        4..=6 => {
            let take = (buffer_rate(p, offload, m) * dt).min(s.t_d_bits).max(0.0);
            s.t_d_bits -= take;
            s.t_r_bits += take;
            flows.offload = take / dt;
        }
        _ => {}
    }
    if matches!(s.state, 1 | 5) {
        s.hover_elapsed_steps += 1;
    }
    settle(s, p, rec)?;
    Ok(flows)
}

/// Advances the simulation by one time step.
pub fn step(s: &SimState, p: &FerryParams) -> Result<SimState, FerryError> {
    let mut next = s.clone();
    advance(&mut next, p, None)?;
    Ok(next)
}

fn effective_rate(t_r: f64, t: f64) -> f64 {
    if t > 0.0 {
        t_r / t
    } else {
        0.0
    }
}

fn row(s: &SimState, p: &FerryParams, state: u8, flows: Flows) -> TraceRow {
    TraceRow {
        t_s: s.t_s,
        state,
        x_m: s.x_m,
        d_rg_m: p.d_total_m - s.x_m,
        t_d_bits: s.t_d_bits,
        t_r_bits: s.t_r_bits,
        r_e_bps: effective_rate(s.t_r_bits, s.t_s),
        load_bps: flows.load,
        offload_bps: flows.offload,
        passthrough_bps: flows.passthrough,
    }
}

fn reaches(t_r: f64, t: f64, re_star: f64) -> bool {
    t > 0.0 && t_r > 0.0 && t_r / t >= re_star
}

fn step_count(p: &FerryParams) -> u64 {
    (p.t_total_s / p.dt_s - 1e-9).ceil().max(0.0) as u64
}

/// Runs the loop from an empty buffer at the loading point until `t_total_s`.
/// The offloading point is first snapped onto the motion lattice.
pub fn run(params: &FerryParams) -> Result<(Trace, FerryMetrics), FerryError> {
    params.validate()?;
    let p = params.snap_quiet();
    p.validate()?;
    if p.offload_index() < 1 {
        return Err(FerryError::ConfigInvalid {
            field: "d_offload_m",
            reason: format!(
                "hover points are less than one motion step ({} m) apart",
                p.step_m()
            ),
        });
    }

    let mut entries = Vec::new();
    let mut loading = Vec::new();
    let mut offloading = Vec::new();
    let mut s = SimState {
        step: 0,
        t_s: 0.0,
        lattice: 0,
        x_m: p.d_load_m,
        state: 1,
        t_d_bits: 0.0,
        t_r_bits: 0.0,
        loaded_bits: 0.0,
        loop_index: 0,
        hover_elapsed_steps: 0,
        hover_target_steps: None,
    };
    {
        let mut rec = Some(Recorder {
            entries: &mut entries,
            loading: &mut loading,
            offloading: &mut offloading,
        });
        enter(&mut s, &p, 1, &mut rec)?;
        settle(&mut s, &p, rec)?;
    }

    let n = step_count(&p);
    let mut rows = Vec::with_capacity(n as usize + 1);
    rows.push(row(&s, &p, s.state, Flows { load: 0.0, offload: 0.0, passthrough: 0.0 }));
    let mut passthrough_total = 0.0;
    let mut t_star = TStar::Unreached;
    for _ in 0..n {
        let active = s.state;
        let flows = advance(
            &mut s,
            &p,
            Some(Recorder {
                entries: &mut entries,
                loading: &mut loading,
                offloading: &mut offloading,
            }),
        )?;
        passthrough_total += flows.passthrough * p.dt_s;
        if t_star == TStar::Unreached && reaches(s.t_r_bits, s.t_s, p.re_star_bps) {
            t_star = TStar::Reached(s.t_s);
        }
        rows.push(row(&s, &p, active, flows));
    }

    let tau0 = entries.iter().find(|e| e.state == 4).map(|e| e.t_s);
    let starts: Vec<f64> = entries.iter().filter(|e| e.state == 1).map(|e| e.t_s).collect();
    let metrics = FerryMetrics {
        delivered_total_bits: s.t_r_bits,
        loaded_total_bits: s.loaded_bits,
        passthrough_total_bits: passthrough_total,
        tau0_s: tau0,
        t_star,
        final_effective_rate_bps: effective_rate(s.t_r_bits, s.t_s),
        loop_durations_s: starts.windows(2).map(|w| w[1] - w[0]).collect(),
        loading_durations_s: loading,
        offloading_durations_s: offloading,
        state_entries: entries,
    };
    Ok((Trace { rows }, metrics))
}

/// Stationary relay baseline: constant delivery at the end-to-end ACM rate
/// of a relay hovering `d_rg_m` from the GS, nothing buffered.
pub fn run_stationary(p: &FerryParams, d_rg_m: f64) -> Result<(Trace, FerryMetrics), FerryError> {
    if !(p.dt_s > 0.0 && p.t_total_s >= 0.0) {
        return Err(FerryError::ConfigInvalid {
            field: "dt_s",
            reason: "time grid must be positive".into(),
        });
    }
    if p.streams == 0 {
        return Err(FerryError::ConfigInvalid {
            field: "streams",
            reason: "must be at least 1".into(),
        });
    }
    let se = staticrelay::e2e_se(&p.table, p.d_total_m, d_rg_m)?;
    let rate = p.streams as f64 * p.table.bandwidth_hz() * se * p.table.cp_factor();
    let x = p.d_total_m - d_rg_m;
    let n = step_count(p);
    let mut t_star = TStar::Unreached;
    let rows: Vec<TraceRow> = (0..=n)
        .map(|i| {
            let t = i as f64 * p.dt_s;
            let t_r = rate * t;
            if t_star == TStar::Unreached && reaches(t_r, t, p.re_star_bps) {
                t_star = TStar::Reached(t);
            }
            TraceRow {
                t_s: t,
                state: 0,
                x_m: x,
                d_rg_m,
                t_d_bits: 0.0,
                t_r_bits: t_r,
                r_e_bps: if i == 0 { 0.0 } else { rate },
                load_bps: 0.0,
                offload_bps: 0.0,
                passthrough_bps: if i == 0 { 0.0 } else { rate },
            }
        })
        .collect();
    let last = rows.last().expect("at least the initial row");
    let metrics = FerryMetrics {
        delivered_total_bits: last.t_r_bits,
        loaded_total_bits: last.t_r_bits,
        passthrough_total_bits: last.t_r_bits,
        tau0_s: Some(0.0),
        t_star,
        final_effective_rate_bps: effective_rate(last.t_r_bits, last.t_s),
        loop_durations_s: Vec::new(),
        loading_durations_s: Vec::new(),
        offloading_durations_s: Vec::new(),
        state_entries: Vec::new(),
    };
    Ok((Trace { rows }, metrics))
}
