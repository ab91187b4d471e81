//! Hover placement for a relay that can serve both links at once.
//!
//! The end-to-end efficiency `min(SE(d_rg), SE(D - d_rg))` is a step function
//! whose jumps sit only at the ACM thresholds of either link, so evaluating
//! every threshold plus one probe inside each gap between them finds the exact
//! optimum and the full set of positions achieving it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acm::{AcmError, AcmTable};

#[derive(Debug, Error)]
pub enum StaticError {
    #[error("relay position d_rg = {d_rg_m} m is outside the feasible box [{lo_m}, {hi_m}] for D = {d_total_m} m")]
    InfeasiblePlacement {
        d_rg_m: f64,
        d_total_m: f64,
        lo_m: f64,
        hi_m: f64,
    },
    #[error("D = {d_total_m} m exceeds the combined range {reach_m} m; a mobile relay is required")]
    MobileRelayRequired { d_total_m: f64, reach_m: f64 },
    #[error("D = {d_total_m} m is within direct range {d_max_m} m; no relay is needed")]
    DirectLinkPossible { d_total_m: f64, d_max_m: f64 },
    #[error(transparent)]
    Acm(#[from] AcmError),
}

/// A maximal run of relay positions (in relay-to-ground distance) sharing the best efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalInterval {
    pub lo_m: f64,
    pub hi_m: f64,
    pub lo_inclusive: bool,
    pub hi_inclusive: bool,
}

impl OptimalInterval {
    pub fn contains(&self, d: f64) -> bool {
        let above = if self.lo_inclusive { d >= self.lo_m } else { d > self.lo_m };
        let below = if self.hi_inclusive { d <= self.hi_m } else { d < self.hi_m };
        above && below
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub d_rg_m: f64,
    pub d_dr_m: f64,
    pub e2e_se: f64,
    /// True for the interior probes between consecutive thresholds.
    pub probe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPlacementResult {
    pub d_total_m: f64,
    pub max_per_ta_se: f64,
    pub optimal_intervals: Vec<OptimalInterval>,
    pub critical_points: Vec<CriticalPoint>,
    /// Set when the best achievable efficiency is zero.
    pub empty_positive_rate: bool,
}

/// Feasible relay-to-ground distances for a DCDS-GS separation `d_total_m`.
pub fn feasible_box(table: &AcmTable, d_total_m: f64) -> (f64, f64) {
    let lo = table.d_min().max(d_total_m - table.d_max());
    let hi = table.d_max().min(d_total_m - table.d_min());
    (lo, hi)
}

/// Efficiency of one hop inside the feasible box. The box is closed at the
/// maximum range, and a hop at exactly that range runs in mode 1.
fn hop_se(table: &AcmTable, d: f64) -> Result<f64, AcmError> {
    if d == table.d_max() {
        return Ok(table.modes()[1].spectral_efficiency);
    }
    table.spectral_efficiency(d)
}

/// End-to-end spectral efficiency per transmit antenna for a relay at
/// `d_rg_m` from the ground station.
pub fn e2e_se(table: &AcmTable, d_total_m: f64, d_rg_m: f64) -> Result<f64, StaticError> {
    let (lo, hi) = feasible_box(table, d_total_m);
    if !(d_rg_m >= lo && d_rg_m <= hi) {
        return Err(StaticError::InfeasiblePlacement {
            d_rg_m,
            d_total_m,
            lo_m: lo,
            hi_m: hi,
        });
    }
    let rg = hop_se(table, d_rg_m)?;
    let dr = hop_se(table, d_total_m - d_rg_m)?;
    Ok(rg.min(dr))
}

pub fn optimize(table: &AcmTable, d_total_m: f64) -> Result<StaticPlacementResult, StaticError> {
    let reach = 2.0 * table.d_max();
    if d_total_m > reach {
        return Err(StaticError::MobileRelayRequired {
            d_total_m,
            reach_m: reach,
        });
    }
    if d_total_m <= table.d_max() {
        return Err(StaticError::DirectLinkPossible {
            d_total_m,
            d_max_m: table.d_max(),
        });
    }
    let (lo, hi) = feasible_box(table, d_total_m);

    let mut cuts: Vec<f64> = table
        .thresholds()
        .flat_map(|t| [t, d_total_m - t])
        .chain([lo, hi])
        .filter(|&c| c >= lo && c <= hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    // Alternating point / open-gap atoms in ascending order.
    let mut atoms = Vec::with_capacity(2 * cuts.len());
    for (i, &c) in cuts.iter().enumerate() {
        atoms.push(CriticalPoint {
            d_rg_m: c,
            d_dr_m: d_total_m - c,
            e2e_se: e2e_se(table, d_total_m, c)?,
            probe: false,
        });
        if let Some(&next) = cuts.get(i + 1) {
            let mid = 0.5 * (c + next);
            atoms.push(CriticalPoint {
                d_rg_m: mid,
                d_dr_m: d_total_m - mid,
                e2e_se: e2e_se(table, d_total_m, mid)?,
                probe: true,
            });
        }
    }

    let max = atoms.iter().map(|a| a.e2e_se).fold(f64::NEG_INFINITY, f64::max);
    let mut intervals: Vec<OptimalInterval> = Vec::new();
    let mut open_run: Option<OptimalInterval> = None;
    for (i, atom) in atoms.iter().enumerate() {
        let (lo_edge, hi_edge) = if atom.probe {
            (cuts[i / 2], cuts[i / 2 + 1])
        } else {
            (atom.d_rg_m, atom.d_rg_m)
        };
        if atom.e2e_se == max {
            let run = open_run.get_or_insert(OptimalInterval {
                lo_m: lo_edge,
                hi_m: hi_edge,
                lo_inclusive: !atom.probe,
                hi_inclusive: !atom.probe,
            });
            run.hi_m = hi_edge;
            run.hi_inclusive = !atom.probe;
        } else if let Some(run) = open_run.take() {
            intervals.push(run);
        }
    }
    intervals.extend(open_run);

    Ok(StaticPlacementResult {
        d_total_m,
        max_per_ta_se: max,
        optimal_intervals: intervals,
        critical_points: atoms,
        empty_positive_rate: max <= 0.0,
    })
}
