//! Distance-switched adaptive coding and modulation.
//!
//! Every link picks its mode from the current transmitter/receiver separation
//! alone: mode `q` (for `q >= 1`) is used on the half-open band
//! `threshold[q] <= d < threshold[q - 1]`, and mode 0 (no link) covers
//! everything at or beyond `threshold[0]`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The default mode table, stored in the same CSV layout `AcmTable::write_csv` emits.
pub const DEFAULT_TABLE_CSV: &str = include_str!("../data/acm_modes.csv");

/// Default system bandwidth in Hz.
pub const DEFAULT_BANDWIDTH_HZ: f64 = 6.0e6;

#[derive(Debug, Error)]
pub enum AcmError {
    #[error("distance {distance_m} m is below the minimum separation {d_min_m} m")]
    DistanceBelowMinimum { distance_m: f64, d_min_m: f64 },
    #[error("invalid ACM table: {0}")]
    InvalidTable(String),
    #[error("stream count must be at least 1")]
    NoStreams,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of the mode table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcmMode {
    #[serde(rename = "q")]
    pub index: usize,
    pub modulation: String,
    pub code_rate: f64,
    pub bits_per_symbol: u32,
    /// Net spectral efficiency in bit/s/Hz.
    pub spectral_efficiency: f64,
    /// Lower edge of this mode's distance band (for mode 0, the maximum range).
    #[serde(rename = "threshold_m")]
    pub switch_threshold_m: f64,
}

impl AcmMode {
    /// Raw `code_rate * log2(M)`, before any framing overhead.
    pub fn coded_bits_per_symbol(&self) -> f64 {
        self.code_rate * f64::from(self.bits_per_symbol)
    }
}

/// Immutable, validated ACM table plus the OFDM framing constants that turn
/// spectral efficiency into a bit rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcmTable {
    modes: Vec<AcmMode>,
    bandwidth_hz: f64,
    cp_factor: f64,
}

impl AcmTable {
    pub fn new(modes: Vec<AcmMode>, bandwidth_hz: f64, cp_factor: f64) -> Result<Self, AcmError> {
        let table = Self {
            modes,
            bandwidth_hz,
            cp_factor,
        };
        table.validate()?;
        Ok(table)
    }

    /// The bundled eight-mode table at 6 MHz with no cyclic-prefix discount.
    pub fn standard() -> Self {
        Self::from_csv_reader(DEFAULT_TABLE_CSV.as_bytes(), DEFAULT_BANDWIDTH_HZ, 1.0)
            .expect("embedded ACM table is valid")
    }

    pub fn from_csv_reader<R: Read>(
        reader: R,
        bandwidth_hz: f64,
        cp_factor: f64,
    ) -> Result<Self, AcmError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let modes = rdr
            .deserialize::<AcmMode>()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(modes, bandwidth_hz, cp_factor)
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        bandwidth_hz: f64,
        cp_factor: f64,
    ) -> Result<Self, AcmError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, bandwidth_hz, cp_factor)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AcmError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for mode in &self.modes {
            wtr.serialize(mode)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    fn validate(&self) -> Result<(), AcmError> {
        let bad = |msg: String| Err(AcmError::InvalidTable(msg));
        if self.modes.len() < 2 {
            return bad("need mode 0 and at least one active mode".into());
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return bad(format!("bandwidth {} Hz must be positive", self.bandwidth_hz));
        }
        if !(self.cp_factor > 0.0 && self.cp_factor <= 1.0) {
            return bad(format!("cp_factor {} must lie in (0, 1]", self.cp_factor));
        }
        for (q, mode) in self.modes.iter().enumerate() {
            if mode.index != q {
                return bad(format!("row {q} carries mode index {}", mode.index));
            }
            if !(0.0..=1.0).contains(&mode.code_rate) {
                return bad(format!("mode {q}: code rate {} outside [0, 1]", mode.code_rate));
            }
            if !(mode.switch_threshold_m > 0.0 && mode.switch_threshold_m.is_finite()) {
                return bad(format!("mode {q}: threshold must be positive"));
            }
            // Tabulated efficiencies are net of framing overhead, so they may sit
            // below code_rate * log2(M) but never above it.
            if mode.spectral_efficiency < 0.0
                || mode.spectral_efficiency > mode.coded_bits_per_symbol() + 1e-3
            {
                return bad(format!(
                    "mode {q}: spectral efficiency {} inconsistent with {} x {}",
                    mode.spectral_efficiency, mode.code_rate, mode.bits_per_symbol
                ));
            }
        }
        if self.modes[0].spectral_efficiency != 0.0 {
            return bad("mode 0 must have zero spectral efficiency".into());
        }
        for pair in self.modes.windows(2) {
            if pair[1].switch_threshold_m >= pair[0].switch_threshold_m {
                return bad(format!(
                    "thresholds must strictly decrease (mode {} -> {})",
                    pair[0].index, pair[1].index
                ));
            }
        }
        for pair in self.modes[1..].windows(2) {
            if pair[1].spectral_efficiency <= pair[0].spectral_efficiency {
                return bad(format!(
                    "spectral efficiency must strictly increase (mode {} -> {})",
                    pair[0].index, pair[1].index
                ));
            }
        }
        if self.modes[1].spectral_efficiency <= 0.0 {
            return bad("mode 1 must carry a positive rate".into());
        }
        Ok(())
    }

    pub fn modes(&self) -> &[AcmMode] {
        &self.modes
    }

    /// Highest mode index `Q`.
    pub fn top_mode(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn cp_factor(&self) -> f64 {
        self.cp_factor
    }

    /// Minimum safe separation (threshold of the top mode).
    pub fn d_min(&self) -> f64 {
        self.modes[self.top_mode()].switch_threshold_m
    }

    /// Maximum communication range (threshold of mode 0).
    pub fn d_max(&self) -> f64 {
        self.modes[0].switch_threshold_m
    }

    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.switch_threshold_m)
    }

    pub fn with_bandwidth(mut self, bandwidth_hz: f64) -> Result<Self, AcmError> {
        self.bandwidth_hz = bandwidth_hz;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cp_factor(mut self, cp_factor: f64) -> Result<Self, AcmError> {
        self.cp_factor = cp_factor;
        self.validate()?;
        Ok(self)
    }

    pub fn select_mode(&self, distance_m: f64) -> Result<usize, AcmError> {
        if distance_m.is_nan() || distance_m < self.d_min() {
            return Err(AcmError::DistanceBelowMinimum {
                distance_m,
                d_min_m: self.d_min(),
            });
        }
        if distance_m >= self.d_max() {
            return Ok(0);
        }
        // Thresholds decrease with q, so the first q whose lower edge is <= d wins.
        let q = (1..=self.top_mode())
            .find(|&q| self.modes[q].switch_threshold_m <= distance_m)
            .expect("d >= d_min guarantees a match");
        Ok(q)
    }

    pub fn spectral_efficiency(&self, distance_m: f64) -> Result<f64, AcmError> {
        Ok(self.modes[self.select_mode(distance_m)?].spectral_efficiency)
    }

    /// Rate of one transmit antenna at the given distance, bit/s.
    pub fn per_ta_rate(&self, distance_m: f64) -> Result<f64, AcmError> {
        let se = self.spectral_efficiency(distance_m)?;
        Ok(self.bandwidth_hz * se * self.cp_factor)
    }

    /// Rate of `streams` simultaneous transmit antennas, bit/s.
    pub fn aggregate_rate(&self, distance_m: f64, streams: usize) -> Result<f64, AcmError> {
        if streams == 0 {
            return Err(AcmError::NoStreams);
        }
        Ok(streams as f64 * self.per_ta_rate(distance_m)?)
    }

    /// Like [`aggregate_rate`](Self::aggregate_rate) but treats any distance at
    /// or past the maximum range as "no link" without consulting the floor.
    pub fn link_rate(&self, distance_m: f64, streams: usize) -> Result<f64, AcmError> {
        if distance_m >= self.d_max() {
            return Ok(0.0);
        }
        self.aggregate_rate(distance_m, streams)
    }
}

impl Default for AcmTable {
    fn default() -> Self {
        Self::standard()
    }
}
