use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    column_blocks, deterministic_component, interferer_deterministic_component, CMatrix, Complex,
    LinkConfig, LinkError,
};

/// Intermediate quantities of the matched-filter SINR approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrBreakdown {
    pub lambda: f64,
    pub signal: f64,
    pub interference_noise: f64,
}

impl SinrBreakdown {
    pub fn sinr(&self) -> f64 {
        self.signal / self.interference_noise
    }

    pub fn capacity(&self) -> f64 {
        (1.0 + self.sinr()).log2()
    }
}

/// `Tr(A B)` for Hermitian `B`, in O(n^2).
fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

fn trace(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

fn outer(col: nalgebra::DVectorView<'_, Complex>) -> CMatrix {
    col * col.adjoint()
}

fn real(v: f64) -> Complex {
    Complex::new(v, 0.0)
}

pub(crate) fn sinr_breakdown(
    cfg: &LinkConfig,
    distance_m: f64,
    k_star: usize,
) -> Result<SinrBreakdown, LinkError> {
    if k_star == 0 || k_star > cfg.n_tx {
        return Err(LinkError::InvalidStream {
            k_star,
            streams: cfg.n_tx,
        });
    }
    let blocks = column_blocks(cfg, distance_m)?;
    let hd = deterministic_component(cfg);
    let nu2 = real(cfg.rician.nu().powi(2));
    let zeta2 = real(cfg.rician.zeta().powi(2));
    let r = &blocks.psi;
    let p = blocks.rx_power_w;
    let ks = k_star - 1;

    let los: Vec<CMatrix> = (0..cfg.n_tx).map(|k| outer(hd.column(k)) * nu2).collect();
    let c_hat: Vec<CMatrix> = los
        .iter()
        .zip(&blocks.columns)
        .map(|(b, col)| b + &col.psi_hat * zeta2)
        .collect();
    let lambda = c_hat.iter().map(trace).sum::<f64>() / cfg.n_tx as f64;

    let star = &blocks.columns[ks];
    let c_hat_star = &c_hat[ks];
    let c_true = |k: usize| &los[k] + r * zeta2;

    let signal_trace = trace(c_hat_star) + zeta2.re * trace_product(&star.psi_hat, &star.psi_tilde);
    let signal = lambda * p * signal_trace.powi(2);

    let noise = lambda * cfg.noise_power_w * trace(c_hat_star);
    let self_interference = lambda * p * trace_product(&star.psi_tilde, &c_true(ks));
    let intra: f64 = (0..cfg.n_tx)
        .filter(|&k| k != ks)
        .map(|k| lambda * p * trace_product(c_hat_star, &c_true(k)))
        .sum();
    let mut inter = 0.0;
    for (a, (intf, &pa)) in cfg
        .interferers
        .iter()
        .zip(&blocks.interferer_rx_power_w)
        .enumerate()
    {
        let gd = interferer_deterministic_component(cfg, a);
        for k in 0..intf.n_tx {
            let c_a = outer(gd.column(k)) * nu2 + r * zeta2;
            inter += lambda * pa * trace_product(c_hat_star, &c_a);
        }
    }

    Ok(SinrBreakdown {
        lambda,
        signal,
        interference_noise: noise + self_interference + intra + inter,
    })
}

/// Approximate ergodic capacity of stream `k_star` (1-based), bit/s/Hz.
pub fn expected_throughput(cfg: &LinkConfig, distance_m: f64, k_star: usize) -> Result<f64, LinkError> {
    Ok(sinr_breakdown(cfg, distance_m, k_star)?.capacity())
}

fn mean_stream_throughput(cfg: &LinkConfig, distance_m: f64) -> Result<f64, LinkError> {
    let total = (1..=cfg.n_tx)
        .map(|k| expected_throughput(cfg, distance_m, k))
        .sum::<Result<f64, _>>()?;
    Ok(total / cfg.n_tx as f64)
}

/// Achievable rate per transmit antenna against distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputCurve {
    pub distances_m: Vec<f64>,
    /// Stream-averaged capacity, bit/s/Hz.
    pub per_ta_capacity: Vec<f64>,
}

#[derive(Serialize)]
struct CurveRow {
    distance_m: f64,
    capacity_bps_hz: f64,
}

impl ThroughputCurve {
    pub fn new(distances_m: Vec<f64>, per_ta_capacity: Vec<f64>) -> Result<Self, LinkError> {
        if distances_m.len() != per_ta_capacity.len() {
            return Err(LinkError::InvalidCurve("length mismatch".into()));
        }
        if distances_m.is_empty() {
            return Err(LinkError::InvalidCurve("empty grid".into()));
        }
        if distances_m.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LinkError::InvalidCurve("grid must be strictly ascending".into()));
        }
        if per_ta_capacity.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(LinkError::InvalidCurve("capacity must be non-negative".into()));
        }
        Ok(Self {
            distances_m,
            per_ta_capacity,
        })
    }

    pub fn is_non_increasing(&self) -> bool {
        self.per_ta_capacity.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (&distance_m, &capacity_bps_hz) in self.distances_m.iter().zip(&self.per_ta_capacity) {
            wtr.serialize(CurveRow {
                distance_m,
                capacity_bps_hz,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evaluates the stream-averaged closed form on every grid point (no shadowing).
pub fn throughput_curve(cfg: &LinkConfig, d_grid: &[f64]) -> Result<ThroughputCurve, LinkError> {
    cfg.validate()?;
    let caps = d_grid
        .par_iter()
        .map(|&d| mean_stream_throughput(cfg, d))
        .collect::<Result<Vec<_>, _>>()?;
    ThroughputCurve::new(d_grid.to_vec(), caps)
}

/// For each mode efficiency, the largest grid distance whose capacity still
/// reaches it, i.e. the outer edge of the band where that mode is safe.
pub fn derive_thresholds(curve: &ThroughputCurve, mode_ses: &[f64]) -> Result<Vec<f64>, LinkError> {
    if mode_ses.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LinkError::InvalidCurve("mode efficiencies must strictly increase".into()));
    }
    if !curve.is_non_increasing() {
        return Err(LinkError::InvalidCurve("curve must be non-increasing".into()));
    }
    let max = curve.per_ta_capacity[0];
    mode_ses
        .iter()
        .map(|&se| {
            curve
                .per_ta_capacity
                .iter()
                .rposition(|&c| c >= se)
                .map(|i| curve.distances_m[i])
                .ok_or(LinkError::ModeUnreachable { se, max })
        })
        .collect()
}

/// Noise power at which the stream-averaged capacity at `distance_m` equals
/// `target_se`. Bisects in log-power.
pub fn calibrate_noise_power(cfg: &LinkConfig, distance_m: f64, target_se: f64) -> Result<f64, LinkError> {
    let eval = |log_noise: f64| {
        let trial = LinkConfig {
            noise_power_w: 10f64.powf(log_noise),
            ..cfg.clone()
        };
        mean_stream_throughput(&trial, distance_m)
    };
    let (mut lo, mut hi) = (-40.0_f64, 10.0_f64);
    if eval(lo)? < target_se || eval(hi)? > target_se {
        return Err(LinkError::NotAttainable {
            target: target_se,
            distance_m,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? >= target_se {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(10f64.powf(lo))
}
