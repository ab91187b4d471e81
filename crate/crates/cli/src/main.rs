use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ferrylink::acm::AcmTable;
use ferrylink::ferrysim;
use ferrylink::linkmodel::{derive_thresholds, throughput_curve};
use ferrylink::moga::{self, ferry_objectives, Individual};
use ferrylink::scenario::{self, ConfigError, ScenarioConfig, ScenarioKind};
use ferrylink::staticrelay;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "uav-ferry", version, about = "Buffer-aided UAV relay modelling and optimisation")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "UAV_FERRY_OUT")]
    out: Option<PathBuf>,
    /// Format of the result printed on stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the ACM mode table.
    AcmTable,
    /// Closed-form per-antenna throughput against distance and the derived thresholds.
    LinkCurve,
    /// Best static relay position for a DCDS-GS distance.
    StaticOpt {
        #[arg(long = "distance", alias = "D")]
        distance: Option<f64>,
    },
    /// Simulate the ferry loop (or a stationary relay).
    #[command(alias = "ferry")]
    FerrySim,
    /// Epsilon-MOGA search over hover points and buffer thresholds.
    Pareto,
    /// List the built-in presets.
    Presets,
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    key: Option<String>,
    message: String,
    code: u8,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let kind = match e {
            ConfigError::Parse(_) => "parse",
            ConfigError::Validation { .. } => "validation",
            ConfigError::UnknownPreset(_) => "unknown-preset",
            ConfigError::Io { .. } => "io",
        };
        Failure {
            kind,
            key: e.key().map(str::to_string),
            message: e.to_string(),
            code: 2,
        }
    }
}

fn runtime(kind: &'static str, e: impl std::fmt::Display) -> Failure {
    Failure {
        kind,
        key: None,
        message: e.to_string(),
        code: 1,
    }
}

fn io_failure(e: io::Error) -> Failure {
    runtime("io", e)
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        fs::create_dir_all(&self.dir).map_err(io_failure)?;
        fs::write(self.dir.join(name), bytes).map_err(io_failure)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime("serialize", e))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| runtime("serialize", e))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| runtime("csv", e))?;
    Ok(buf)
}

fn expected_kind(cmd: &Command) -> Option<ScenarioKind> {
    match cmd {
        Command::AcmTable => Some(ScenarioKind::AcmTable),
        Command::LinkCurve => Some(ScenarioKind::LinkCurve),
        Command::StaticOpt { .. } => Some(ScenarioKind::Static),
        Command::FerrySim => Some(ScenarioKind::Ferry),
        Command::Pareto => Some(ScenarioKind::Pareto),
        Command::Presets => None,
    }
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::AcmTable => "acm-table",
        Command::LinkCurve => "link-curve",
        Command::StaticOpt { .. } => "static-opt",
        Command::FerrySim => "ferry-sim",
        Command::Pareto => "pareto",
        Command::Presets => "presets",
    }
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => scenario::load_config(path)?,
        (None, Some(name)) => scenario::load_preset(name)?,
        (None, None) => scenario::parse_config("")?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let (Some(kind), Some(expected)) = (cfg.kind, expected_kind(&cli.command)) {
        if kind != expected {
            return Err(ConfigError::Validation {
                key: "kind".into(),
                reason: format!(
                    "scenario is {kind:?} but the `{}` subcommand was requested",
                    subcommand_name(&cli.command)
                ),
            }
            .into());
        }
    }
    Ok(cfg)
}

fn acm_table(table: &AcmTable, out: &mut Output, format: Format) -> Result<String, Failure> {
    let csv = table.to_csv_string();
    out.write("acm_table.csv", csv.as_bytes())?;
    match format {
        Format::Csv => Ok(csv),
        Format::Json => json_string(table.modes()),
    }
}

fn link_curve(cfg: &ScenarioConfig, out: &mut Output, format: Format) -> Result<String, Failure> {
    let link = cfg.link_config()?;
    let grid = cfg.curve_grid()?;
    let table = cfg.acm_table()?;
    let curve = throughput_curve(&link, &grid).map_err(|e| runtime("link", e))?;
    let bytes = csv_bytes(|b| curve.write_csv(b).map_err(|e| e.to_string()))?;
    out.write("curve.csv", &bytes)?;

    let ses: Vec<f64> = table.modes()[1..].iter().map(|m| m.spectral_efficiency).collect();
    let derived = derive_thresholds(&curve, &ses);
    let report = json!({
        "mode_spectral_efficiency": ses,
        "table_upper_edges_m": table.modes()[..table.top_mode()].iter().map(|m| m.switch_threshold_m).collect::<Vec<_>>(),
        "derived_upper_edges_m": derived.as_ref().ok(),
        "error": derived.as_ref().err().map(|e| e.to_string()),
    });
    out.write_json("thresholds.json", &report)?;
    match format {
        Format::Csv => Ok(String::from_utf8_lossy(&bytes).into_owned()),
        Format::Json => json_string(&curve),
    }
}

fn static_opt(
    cfg: &ScenarioConfig,
    distance: Option<f64>,
    out: &mut Output,
    format: Format,
) -> Result<String, Failure> {
    let table = cfg.acm_table()?;
    let d = distance.unwrap_or(cfg.geometry.d_total_m);
    let result = staticrelay::optimize(&table, d).map_err(|e| match e {
        staticrelay::StaticError::MobileRelayRequired { .. } => runtime("mobile-relay-required", e),
        staticrelay::StaticError::DirectLinkPossible { .. } => runtime("direct-link-possible", e),
        other => runtime("static", other),
    })?;
    out.write_json("static.json", &result)?;
    match format {
        Format::Json => json_string(&result),
        Format::Csv => {
            let bytes = csv_bytes(|b| {
                let mut w = csv_writer(b);
                for p in &result.critical_points {
                    w.serialize(p).map_err(|e| e.to_string())?;
                }
                w.flush().map_err(|e| e.to_string())
            })?;
            Ok(String::from_utf8_lossy(&bytes).into_owned())
        }
    }
}

fn csv_writer(b: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(b)
}

fn ferry_sim(cfg: &ScenarioConfig, out: &mut Output, format: Format) -> Result<String, Failure> {
    let params = cfg.ferry_params()?;
    let (trace, metrics) = match cfg.ferry.stationary_d_rg_m {
        Some(d_rg) => ferrysim::run_stationary(&params, d_rg),
        None => ferrysim::run(&params),
    }
    .map_err(|e| runtime("ferry", e))?;
    let bytes = csv_bytes(|b| trace.write_csv(b).map_err(|e| e.to_string()))?;
    out.write("trace.csv", &bytes)?;
    out.write_json("metrics.json", &metrics)?;
    match format {
        Format::Json => json_string(&metrics),
        Format::Csv => Ok(String::from_utf8_lossy(&bytes).into_owned()),
    }
}

fn pareto(cfg: &ScenarioConfig, out: &mut Output, format: Format) -> Result<String, Failure> {
    let base = cfg.ferry_params()?;
    let bounds = cfg.bounds()?;
    let params = cfg.moga_params()?;
    let result = moga::run(&bounds, &params, |ind: &Individual| ferry_objectives(&base, ind))
        .map_err(|e| runtime("optimizer", e))?;
    let front = moga::pareto_front(&result.archive);
    out.write_json("pareto.json", &front)?;
    let bytes = csv_bytes(|b| moga::write_history_csv(&result.history, b).map_err(|e| e.to_string()))?;
    out.write("pareto_history.csv", &bytes)?;
    match format {
        Format::Json => json_string(&front),
        Format::Csv => {
            let bytes = csv_bytes(|b| {
                let mut w = csv_writer(b);
                for p in &front {
                    w.serialize(p).map_err(|e| e.to_string())?;
                }
                w.flush().map_err(|e| e.to_string())
            })?;
            Ok(String::from_utf8_lossy(&bytes).into_owned())
        }
    }
}

fn output_dir(cli: &Cli, cfg: &ScenarioConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| {
            cfg.output_dir.as_ref().map(|p| match &cfg.base_dir {
                Some(base) if p.is_relative() => base.join(p),
                _ => p.clone(),
            })
        })
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    if let Command::Presets = cli.command {
        let names: Vec<&str> = scenario::preset_names().collect();
        return Ok(names.join("\n"));
    }
    let cfg = load(cli)?;
    let mut out = Output {
        dir: output_dir(cli, &cfg),
        files: Vec::new(),
    };
    let default_format = match cli.command {
        Command::AcmTable | Command::LinkCurve => Format::Csv,
        _ => Format::Json,
    };
    let format = cli.format.unwrap_or(default_format);
    let printed = match &cli.command {
        Command::AcmTable => acm_table(&cfg.acm_table()?, &mut out, format)?,
        Command::LinkCurve => link_curve(&cfg, &mut out, format)?,
        Command::StaticOpt { distance } => static_opt(&cfg, *distance, &mut out, format)?,
        Command::FerrySim => ferry_sim(&cfg, &mut out, format)?,
        Command::Pareto => pareto(&cfg, &mut out, format)?,
        Command::Presets => unreachable!(),
    };
    let manifest = json!({
        "tool": "uav-ferry",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand_name(&cli.command),
        "preset": cli.preset,
        "config_path": cli.config.as_deref().map(Path::display).map(|d| d.to_string()),
        "seed": cfg.seed,
        "scenario": cfg,
        "files": out.files,
    });
    out.write_json("manifest.json", &manifest)?;
    Ok(printed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            let mut stdout = io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            if !text.ends_with('\n') {
                let _ = stdout.write_all(b"\n");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            log::debug!("{f:?}");
            let record = json!({
                "error": {
                    "kind": f.kind,
                    "key": f.key,
                    "message": f.message,
                }
            });
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
