//! Physical-layer model of the two relay hops.
//!
//! Both hops (drone swarm to relay, relay to ground station) share one shape:
//! a correlated Rician MIMO channel whose scattered part is estimated with an
//! MMSE estimator from orthogonal pilots, followed by matched-filter combining.
//! The closed-form throughput here is the deterministic large-array
//! approximation; [`montecarlo`] provides a sampled check of it.

mod channel;
mod covariance;
pub mod montecarlo;
mod pathloss;
mod throughput;

pub use channel::{
    build_channel_sample, build_correlation, correlation_sqrt, deterministic_component,
    interferer_deterministic_component, steering_matrix,
};
pub use covariance::{column_blocks, estimation_covariances, ColumnBlocks, EstimationCovariances};
pub use pathloss::{
    friis_reference_db, path_loss_db, received_power, received_power_shadowed, thermal_noise_w,
};
pub use throughput::{
    calibrate_noise_power, derive_thresholds, expected_throughput, throughput_curve,
    SinrBreakdown, ThroughputCurve,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Complex = num_complex::Complex64;
pub type CMatrix = nalgebra::DMatrix<Complex>;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("distance {distance_m} m is below the reference distance {reference_m} m")]
    DistanceBelowReference { distance_m: f64, reference_m: f64 },
    #[error("matrix inversion failed: {0}")]
    SingularMatrix(&'static str),
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
    #[error("stream index {k_star} outside 1..={streams}")]
    InvalidStream { k_star: usize, streams: usize },
    #[error("mode with spectral efficiency {se} bps/Hz is never reached (curve max {max})")]
    ModeUnreachable { se: f64, max: f64 },
    #[error("invalid throughput curve: {0}")]
    InvalidCurve(String),
    #[error("target {target} bps/Hz not attainable at {distance_m} m for any noise power")]
    NotAttainable { target: f64, distance_m: f64 },
}

/// Log-distance path loss anchored at a reference distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Loss at the reference distance, dB.
    pub alpha_db: f64,
    /// Path-loss exponent.
    pub beta: f64,
    /// Standard deviation of log-normal shadowing, dB.
    pub sigma_shadow_db: f64,
    pub reference_distance_m: f64,
}

impl PathLossParams {
    /// Free-space anchor at `reference_distance_m` with exponent 2 and no shadowing.
    pub fn friis(carrier_frequency_hz: f64, reference_distance_m: f64) -> Self {
        Self {
            alpha_db: friis_reference_db(carrier_frequency_hz, reference_distance_m),
            beta: 2.0,
            sigma_shadow_db: 0.0,
            reference_distance_m,
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.beta > 0.0) {
            return Err(LinkError::InvalidConfig(format!("beta {} must be > 0", self.beta)));
        }
        if !(self.sigma_shadow_db >= 0.0) {
            return Err(LinkError::InvalidConfig("shadowing sigma must be >= 0".into()));
        }
        if !(self.reference_distance_m > 0.0) {
            return Err(LinkError::InvalidConfig("reference distance must be > 0".into()));
        }
        if !self.alpha_db.is_finite() {
            return Err(LinkError::InvalidConfig("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// Rician fading parameters. The LoS and scattered weights are always derived
/// from the K-factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianParams {
    /// K-factor in dB; `f64::INFINITY` gives a pure LoS channel.
    pub k_factor_db: f64,
    /// Receive-side exponential correlation coefficient.
    pub correlation_rho: f64,
    /// Use the power-normalised weight sqrt(1/(1+K)) for the scattered part
    /// instead of 1/(1+K).
    #[serde(default)]
    pub normalized: bool,
}

impl RicianParams {
    pub fn new(k_factor_db: f64, correlation_rho: f64) -> Self {
        Self {
            k_factor_db,
            correlation_rho,
            normalized: false,
        }
    }

    fn k_linear(&self) -> f64 {
        10f64.powf(self.k_factor_db / 10.0)
    }

    /// Weight of the deterministic component.
    pub fn nu(&self) -> f64 {
        let k = self.k_linear();
        if k.is_infinite() {
            1.0
        } else {
            (k / (1.0 + k)).sqrt()
        }
    }

    /// Weight of the scattered component.
    pub fn zeta(&self) -> f64 {
        let k = self.k_linear();
        if k.is_infinite() {
            return 0.0;
        }
        let z = 1.0 / (1.0 + k);
        if self.normalized {
            z.sqrt()
        } else {
            z
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if self.k_factor_db.is_nan() || self.k_factor_db == f64::NEG_INFINITY {
            return Err(LinkError::InvalidConfig("K-factor must be a number".into()));
        }
        if !(0.0..1.0).contains(&self.correlation_rho) {
            return Err(LinkError::InvalidConfig(format!(
                "correlation rho {} outside [0, 1)",
                self.correlation_rho
            )));
        }
        Ok(())
    }
}

/// Construction rule for the deterministic (LoS) channel component: uniform
/// linear array steering vectors, one per transmitting antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosGeometry {
    pub spacing_wavelengths: f64,
    /// Azimuths are drawn uniformly from `[-spread/2, spread/2]`.
    pub spread_rad: f64,
    pub seed: u64,
    /// Fixed azimuths for the desired transmitters (overrides the draw).
    #[serde(default)]
    pub desired_angles_rad: Option<Vec<f64>>,
}

impl Default for LosGeometry {
    fn default() -> Self {
        Self {
            spacing_wavelengths: 0.5,
            spread_rad: std::f64::consts::FRAC_PI_2 * 4.0 / 3.0,
            seed: 7,
            desired_angles_rad: None,
        }
    }
}

/// A co-channel transmitter group (another swarm or another relay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub distance_m: f64,
    pub n_tx: usize,
}

/// Everything needed to evaluate one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub carrier_frequency_hz: f64,
    pub path_loss: PathLossParams,
    pub rician: RicianParams,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    #[serde(default)]
    pub interferers: Vec<Interferer>,
    #[serde(default)]
    pub los: LosGeometry,
}

impl LinkConfig {
    /// 64 receive antennas, 8 streams at 60 GHz, 78 mW per antenna, 5 dB
    /// K-factor and thermal noise over 6 MHz.
    pub fn standard() -> Self {
        let carrier = 60.0e9;
        Self {
            n_rx: 64,
            n_tx: 8,
            carrier_frequency_hz: carrier,
            path_loss: PathLossParams::friis(carrier, 1.0),
            rician: RicianParams::new(5.0, 0.5),
            tx_power_w: 78.0e-3,
            noise_power_w: thermal_noise_w(6.0e6),
            interferers: Vec::new(),
            los: LosGeometry::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: String| Err(LinkError::InvalidConfig(m));
        self.path_loss.validate()?;
        self.rician.validate()?;
        if self.n_tx == 0 || self.n_rx == 0 {
            return bad("antenna counts must be positive".into());
        }
        if self.n_tx > self.n_rx {
            return bad(format!("n_tx {} exceeds n_rx {}", self.n_tx, self.n_rx));
        }
        if !(self.tx_power_w > 0.0 && self.tx_power_w.is_finite()) {
            return bad("tx power must be > 0".into());
        }
        if !(self.noise_power_w >= 0.0 && self.noise_power_w.is_finite()) {
            return bad("noise power must be >= 0".into());
        }
        if !(self.carrier_frequency_hz > 0.0) {
            return bad("carrier frequency must be > 0".into());
        }
        if !(self.los.spacing_wavelengths > 0.0) {
            return bad("antenna spacing must be > 0".into());
        }
        if let Some(angles) = &self.los.desired_angles_rad {
            if angles.len() != self.n_tx {
                return bad(format!(
                    "{} explicit angles for {} transmitters",
                    angles.len(),
                    self.n_tx
                ));
            }
        }
        for (i, intf) in self.interferers.iter().enumerate() {
            if intf.n_tx == 0 {
                return bad(format!("interferer {i} has no transmitters"));
            }
            if intf.distance_m < self.path_loss.reference_distance_m {
                return bad(format!("interferer {i} closer than the reference distance"));
            }
        }
        Ok(())
    }
}
