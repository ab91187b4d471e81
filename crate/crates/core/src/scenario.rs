//! Scenario files: a strict TOML schema with unit-suffixed keys, defaults and
//! the embedded presets.
//!
//! An empty file describes Scenario I (D = 8.5 km, 8 streams, 50 m/s, 6 MHz,
//! 32 Gbit buffer). Every section is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acm::{AcmTable, DEFAULT_BANDWIDTH_HZ};
use crate::ferrysim::{FerryError, FerryParams, PassthroughAccounting};
use crate::linkmodel::{
    thermal_noise_w, Interferer, LinkConfig, LinkError, LosGeometry, PathLossParams, RicianParams,
};
use crate::moga::{Bounds, MogaError, MogaParams};
use crate::staticrelay;

/// Delay target used when no stationary baseline exists.
pub const FALLBACK_RE_STAR_BPS: f64 = 1e7;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            Self::Validation { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Static,
    Ferry,
    Pareto,
    LinkCurve,
    AcmTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub d_total_m: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { d_total_m: 8500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcmSection {
    /// CSV table path, relative to the scenario file. Omitted: built-in table.
    pub table_csv: Option<PathBuf>,
    pub bandwidth_hz: f64,
    pub cp_factor: f64,
}

impl Default for AcmSection {
    fn default() -> Self {
        Self {
            table_csv: None,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            cp_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FerrySection {
    pub speed_mps: f64,
    pub dt_s: f64,
    pub buffer_gbit: f64,
    pub d_load_m: f64,
    pub d_offload_m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub streams: usize,
    pub t_total_s: f64,
    /// Omitted: the stationary minimum end-to-end rate when a static relay
    /// is possible, otherwise [`FALLBACK_RE_STAR_BPS`].
    pub re_star_bps: Option<f64>,
    pub passthrough: bool,
    pub accounting: PassthroughAccounting,
    /// Hover statically at this relay-to-GS distance instead of ferrying.
    pub stationary_d_rg_m: Option<f64>,
}

impl Default for FerrySection {
    fn default() -> Self {
        Self {
            speed_mps: 50.0,
            dt_s: 1.0,
            buffer_gbit: 32.0,
            d_load_m: 505.5,
            d_offload_m: 576.0,
            alpha: 0.88,
            beta: 0.12,
            streams: 8,
            t_total_s: 3000.0,
            re_star_bps: None,
            passthrough: true,
            accounting: PassthroughAccounting::Additive,
            stationary_d_rg_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MogaSection {
    pub population: usize,
    pub generations: usize,
    pub offspring: usize,
    pub p_cm: f64,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub mutation_sigma: f64,
    pub n_box: usize,
    pub freeze_ranges: bool,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for MogaSection {
    fn default() -> Self {
        let p = MogaParams::default();
        Self {
            population: p.population,
            generations: p.generations,
            offspring: p.offspring,
            p_cm: p.p_cm,
            omega_lo: p.omega_range.0,
            omega_hi: p.omega_range.1,
            mutation_sigma: p.mutation_sigma,
            n_box: p.n_box,
            freeze_ranges: false,
            alpha_min: 0.01,
            alpha_max: 1.0,
            beta_min: 0.0,
            beta_max: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererEntry {
    pub distance_m: f64,
    pub n_tx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub n_rx: usize,
    pub n_tx: usize,
    pub carrier_frequency_hz: f64,
    pub tx_power_w: f64,
    /// Omitted: thermal noise over the ACM bandwidth.
    pub noise_power_w: Option<f64>,
    /// Omitted: free-space loss at the reference distance.
    pub alpha_db: Option<f64>,
    pub path_loss_exponent: f64,
    pub sigma_shadow_db: f64,
    pub reference_distance_m: f64,
    pub k_factor_db: f64,
    pub correlation_rho: f64,
    pub normalized_rician: bool,
    pub spacing_wavelengths: f64,
    pub spread_rad: f64,
    pub los_seed: u64,
    pub interferers: Vec<InterfererEntry>,
}

impl Default for LinkSection {
    fn default() -> Self {
        let d = LinkConfig::standard();
        Self {
            n_rx: d.n_rx,
            n_tx: d.n_tx,
            carrier_frequency_hz: d.carrier_frequency_hz,
            tx_power_w: d.tx_power_w,
            noise_power_w: None,
            alpha_db: None,
            path_loss_exponent: d.path_loss.beta,
            sigma_shadow_db: d.path_loss.sigma_shadow_db,
            reference_distance_m: d.path_loss.reference_distance_m,
            k_factor_db: d.rician.k_factor_db,
            correlation_rho: d.rician.correlation_rho,
            normalized_rician: false,
            spacing_wavelengths: d.los.spacing_wavelengths,
            spread_rad: d.los.spread_rad,
            los_seed: d.los.seed,
            interferers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub start_m: f64,
    pub stop_m: f64,
    pub step_m: f64,
}

impl Default for CurveSection {
    fn default() -> Self {
        Self {
            start_m: 100.0,
            stop_m: 10000.0,
            step_m: 100.0,
        }
    }
}

/// Parsed scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: Option<ScenarioKind>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub geometry: GeometrySection,
    pub acm: AcmSection,
    pub ferry: FerrySection,
    pub moga: MogaSection,
    pub link: LinkSection,
    pub curve: CurveSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

const PRESETS: &[(&str, &str)] = &[
    ("scenario1-max-be", include_str!("../presets/scenario1-max-be.toml")),
    ("scenario1-min-be", include_str!("../presets/scenario1-min-be.toml")),
    ("scenario1-32g-opt1", include_str!("../presets/scenario1-32g-opt1.toml")),
    ("scenario1-32g-opt2", include_str!("../presets/scenario1-32g-opt2.toml")),
    ("scenario1-64g-opt1", include_str!("../presets/scenario1-64g-opt1.toml")),
    ("scenario1-64g-opt2", include_str!("../presets/scenario1-64g-opt2.toml")),
    ("scenario2-bench1-32g", include_str!("../presets/scenario2-bench1-32g.toml")),
    ("scenario2-bench1-64g", include_str!("../presets/scenario2-bench1-64g.toml")),
    ("scenario2-bench2-32g", include_str!("../presets/scenario2-bench2-32g.toml")),
    ("scenario2-bench2-64g", include_str!("../presets/scenario2-bench2-64g.toml")),
    ("scenario2-32g-opt1", include_str!("../presets/scenario2-32g-opt1.toml")),
    ("scenario2-32g-opt2", include_str!("../presets/scenario2-32g-opt2.toml")),
    ("scenario2-64g-opt1", include_str!("../presets/scenario2-64g-opt1.toml")),
    ("scenario2-64g-opt2", include_str!("../presets/scenario2-64g-opt2.toml")),
    ("scenario2-pareto-32g", include_str!("../presets/scenario2-pareto-32g.toml")),
    ("scenario2-pareto-64g", include_str!("../presets/scenario2-pareto-64g.toml")),
    ("static-8500", include_str!("../presets/static-8500.toml")),
    ("link-curve", include_str!("../presets/link-curve.toml")),
    ("acm-table", include_str!("../presets/acm-table.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let src = preset_source(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    parse_config(src)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf);
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn ferry_key(field: &str) -> String {
    match field {
        "buffer_bits" => "ferry.buffer_gbit".into(),
        "d_total_m" => "geometry.d_total_m".into(),
        other => format!("ferry.{other}"),
    }
}

fn link_key(err: &LinkError) -> &'static str {
    let text = err.to_string();
    if text.contains("rho") {
        "link.correlation_rho"
    } else if text.contains("n_tx") || text.contains("antenna") {
        "link.n_tx"
    } else if text.contains("noise") {
        "link.noise_power_w"
    } else if text.contains("tx power") {
        "link.tx_power_w"
    } else if text.contains("interferer") {
        "link.interferers"
    } else {
        "link"
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let table = self.acm_table()?;
        if !(self.geometry.d_total_m > 0.0) {
            return Err(ConfigError::invalid("geometry.d_total_m", "must be positive"));
        }
        self.ferry_params_with(&table)?;
        if let Some(d_rg) = self.ferry.stationary_d_rg_m {
            staticrelay::e2e_se(&table, self.geometry.d_total_m, d_rg)
                .map_err(|e| ConfigError::invalid("ferry.stationary_d_rg_m", e.to_string()))?;
        }
        self.moga_params()?;
        self.bounds_with(&table)?;
        self.link_config()?;
        self.curve_grid()?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn acm_table(&self) -> Result<AcmTable, ConfigError> {
        let base = match &self.acm.table_csv {
            Some(p) => AcmTable::from_csv_path(self.resolve(p), self.acm.bandwidth_hz, self.acm.cp_factor)
                .map_err(|e| ConfigError::invalid("acm.table_csv", e.to_string()))?,
            None => AcmTable::standard(),
        };
        let t = base
            .with_bandwidth(self.acm.bandwidth_hz)
            .map_err(|e| ConfigError::invalid("acm.bandwidth_hz", e.to_string()))?;
        t.with_cp_factor(self.acm.cp_factor)
            .map_err(|e| ConfigError::invalid("acm.cp_factor", e.to_string()))
    }

    /// Stationary minimum end-to-end rate when a static relay can serve D,
    /// otherwise the fallback constant.
    pub fn default_re_star(table: &AcmTable, d_total_m: f64, streams: usize) -> f64 {
        match staticrelay::optimize(table, d_total_m) {
            Ok(r) if !r.empty_positive_rate => {
                let min_se = r
                    .critical_points
                    .iter()
                    .map(|c| c.e2e_se)
                    .fold(f64::INFINITY, f64::min);
                if min_se > 0.0 {
                    streams as f64 * table.bandwidth_hz() * table.cp_factor() * min_se
                } else {
                    FALLBACK_RE_STAR_BPS
                }
            }
            _ => FALLBACK_RE_STAR_BPS,
        }
    }

    fn ferry_params_with(&self, table: &AcmTable) -> Result<FerryParams, ConfigError> {
        let f = &self.ferry;
        let re_star = f
            .re_star_bps
            .unwrap_or_else(|| Self::default_re_star(table, self.geometry.d_total_m, f.streams.max(1)));
        let p = FerryParams {
            d_total_m: self.geometry.d_total_m,
            speed_mps: f.speed_mps,
            dt_s: f.dt_s,
            buffer_bits: f.buffer_gbit * 1e9,
            d_load_m: f.d_load_m,
            d_offload_m: f.d_offload_m,
            alpha: f.alpha,
            beta: f.beta,
            streams: f.streams,
            table: table.clone(),
            t_total_s: f.t_total_s,
            re_star_bps: re_star,
            passthrough: f.passthrough,
            accounting: f.accounting,
        };
        p.validate().map_err(|e| match e {
            FerryError::ConfigInvalid { field, reason } => ConfigError::invalid(ferry_key(field), reason),
            other => ConfigError::invalid("ferry", other.to_string()),
        })?;
        Ok(p)
    }

    /// Ferry parameters with the offloading point snapped to the motion lattice.
    pub fn ferry_params(&self) -> Result<FerryParams, ConfigError> {
        Ok(self.ferry_params_with(&self.acm_table()?)?.snapped())
    }

    pub fn moga_params(&self) -> Result<MogaParams, ConfigError> {
        let m = &self.moga;
        let p = MogaParams {
            population: m.population,
            generations: m.generations,
            offspring: m.offspring,
            p_cm: m.p_cm,
            omega_range: (m.omega_lo, m.omega_hi),
            mutation_sigma: m.mutation_sigma,
            n_box: m.n_box,
            seed: self.seed,
            freeze_ranges: m.freeze_ranges,
        };
        p.validate().map_err(|e| match e {
            MogaError::InvalidParams { field, reason } => {
                let key = match field {
                    "omega_range" => "moga.omega_lo".to_string(),
                    f => format!("moga.{f}"),
                };
                ConfigError::invalid(key, reason)
            }
            other => ConfigError::invalid("moga", other.to_string()),
        })?;
        Ok(p)
    }

    fn bounds_with(&self, table: &AcmTable) -> Result<Bounds, ConfigError> {
        let m = &self.moga;
        if !(0.0 < m.alpha_min && m.alpha_min <= m.alpha_max && m.alpha_max <= 1.0) {
            return Err(ConfigError::invalid("moga.alpha_min", "need 0 < alpha_min <= alpha_max <= 1"));
        }
        if !(0.0 <= m.beta_min && m.beta_min <= m.beta_max && m.beta_max < 1.0) {
            return Err(ConfigError::invalid("moga.beta_min", "need 0 <= beta_min <= beta_max < 1"));
        }
        if !(m.beta_min < m.alpha_max) {
            return Err(ConfigError::invalid("moga.beta_min", "must be below alpha_max"));
        }
        Ok(Bounds {
            d_min_m: table.d_min(),
            d_max_m: table.d_max(),
            alpha: (m.alpha_min, m.alpha_max),
            beta: (m.beta_min, m.beta_max),
        })
    }

    pub fn bounds(&self) -> Result<Bounds, ConfigError> {
        self.bounds_with(&self.acm_table()?)
    }

    pub fn link_config(&self) -> Result<LinkConfig, ConfigError> {
        let l = &self.link;
        if !(l.carrier_frequency_hz > 0.0) {
            return Err(ConfigError::invalid("link.carrier_frequency_hz", "must be positive"));
        }
        if !(l.reference_distance_m > 0.0) {
            return Err(ConfigError::invalid("link.reference_distance_m", "must be positive"));
        }
        let alpha_db = l.alpha_db.unwrap_or_else(|| {
            PathLossParams::friis(l.carrier_frequency_hz, l.reference_distance_m).alpha_db
        });
        let cfg = LinkConfig {
            n_rx: l.n_rx,
            n_tx: l.n_tx,
            carrier_frequency_hz: l.carrier_frequency_hz,
            path_loss: PathLossParams {
                alpha_db,
                beta: l.path_loss_exponent,
                sigma_shadow_db: l.sigma_shadow_db,
                reference_distance_m: l.reference_distance_m,
            },
            rician: RicianParams {
                k_factor_db: l.k_factor_db,
                correlation_rho: l.correlation_rho,
                normalized: l.normalized_rician,
            },
            tx_power_w: l.tx_power_w,
            noise_power_w: l.noise_power_w.unwrap_or_else(|| thermal_noise_w(self.acm.bandwidth_hz)),
            interferers: l
                .interferers
                .iter()
                .map(|i| Interferer {
                    distance_m: i.distance_m,
                    n_tx: i.n_tx,
                })
                .collect(),
            los: LosGeometry {
                spacing_wavelengths: l.spacing_wavelengths,
                spread_rad: l.spread_rad,
                seed: l.los_seed,
                desired_angles_rad: None,
            },
        };
        cfg.validate()
            .map_err(|e| ConfigError::invalid(link_key(&e), e.to_string()))?;
        Ok(cfg)
    }

    pub fn curve_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let c = &self.curve;
        if !(c.step_m > 0.0) {
            return Err(ConfigError::invalid("curve.step_m", "must be positive"));
        }
        if !(c.start_m >= self.link.reference_distance_m) {
            return Err(ConfigError::invalid("curve.start_m", "must be at least the reference distance"));
        }
        if !(c.stop_m >= c.start_m) {
            return Err(ConfigError::invalid("curve.stop_m", "must not be below curve.start_m"));
        }
        let n = ((c.stop_m - c.start_m) / c.step_m + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| c.start_m + i as f64 * c.step_m).collect())
    }
}
