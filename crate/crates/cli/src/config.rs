//! Settings resolution. A value comes from, in decreasing priority: a
//! command-line flag, an environment variable (port and data directory
//! only), the `key = value` config file, the built-in default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chartsel_core::{RenderConfig, Scoring, TrainConfig};
use clap::Args;

use crate::CliError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_LOG: &str = "judgments.jsonl";

/// Parsed `key = value` file. Blank lines and `#` comments are skipped;
/// dashes in keys are read as underscores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "data_dir",
    "models",
    "host",
    "port",
    "judgments",
    "scoring",
    "epochs",
    "seed",
    "learning_rate",
    "momentum",
    "batch_size",
    "weight_epsilon",
    "smooth_l1_beta",
    "width",
    "height",
    "marker_radius",
    "line_thickness",
    "density_bins",
    "density_sigma",
];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value", i + 1)));
            };
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key {key:?}", i + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Config(format!("{key} = {v}: {e}")))
            })
            .transpose()
    }
}

/// Flags shared by the pipeline commands. Every field mirrors a config file
/// key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Directory holding `tables/` (and `gold.json`, judgment log).
    #[arg(long, env = "CHARTSEL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Model bundle file.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long, env = "CHARTSEL_PORT", value_parser = clap::value_parser!(u16).range(1..))]
    pub port: Option<u16>,
    /// Judgment log, default `<data-dir>/judgments.jsonl`.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// `l1`, or `topK` with K in 1..=26.
    #[arg(long)]
    pub scoring: Option<Scoring>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_epsilon: Option<f64>,
    #[arg(long)]
    pub smooth_l1_beta: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub marker_radius: Option<f64>,
    #[arg(long)]
    pub line_thickness: Option<usize>,
    #[arg(long)]
    pub density_bins: Option<usize>,
    #[arg(long)]
    pub density_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub models: Option<PathBuf>,
    pub render: RenderConfig,
    pub train: TrainConfig,
    pub scoring: Scoring,
    pub host: String,
    pub port: u16,
    pub judgments: PathBuf,
}

impl PipelineConfig {
    pub fn resolve(flags: &Settings, file: &ConfigFile) -> Result<Self, CliError> {
        macro_rules! pick {
            ($field:ident, $default:expr) => {
                match flags.$field.clone() {
                    Some(v) => v,
                    None => file.get(stringify!($field))?.unwrap_or($default),
                }
            };
        }
        let data_dir: PathBuf = pick!(data_dir, PathBuf::from("."));
        let models = match flags.models.clone() {
            Some(m) => Some(m),
            None => file.get("models")?,
        };
        let judgments = pick!(judgments, data_dir.join(DEFAULT_LOG));
        let t = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: pick!(learning_rate, t.learning_rate),
            momentum: pick!(momentum, t.momentum),
            batch_size: pick!(batch_size, t.batch_size),
            epochs: pick!(epochs, t.epochs),
            seed: pick!(seed, t.seed),
            smooth_l1_beta: pick!(smooth_l1_beta, t.smooth_l1_beta),
            weight_epsilon: pick!(weight_epsilon, t.weight_epsilon),
        };
        train.validate()?;
        let r = RenderConfig::default();
        let render = RenderConfig {
            width: pick!(width, r.width),
            height: pick!(height, r.height),
            marker_radius: pick!(marker_radius, r.marker_radius),
            line_thickness: pick!(line_thickness, r.line_thickness),
            density_bins: pick!(density_bins, r.density_bins),
            density_sigma: pick!(density_sigma, r.density_sigma),
        };
        render.validate()?;
        let port: u16 = pick!(port, DEFAULT_PORT);
        if port == 0 {
            return Err(CliError::Config("port must lie in 1..=65535".into()));
        }
        Ok(PipelineConfig {
            data_dir,
            models,
            render,
            train,
            scoring: pick!(scoring, Scoring::default()),
            host: pick!(host, "127.0.0.1".to_string()),
            port,
            judgments,
        })
    }

    pub fn require_models(&self) -> Result<&Path, CliError> {
        self.models
            .as_deref()
            .ok_or_else(|| CliError::Config("no model bundle given (--models or `models =` in the config file)".into()))
    }
}
