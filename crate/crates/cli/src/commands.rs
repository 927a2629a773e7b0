use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chartsel_core::eval::{aggregate_tally, crowd_gold, generate_tasks, read_judgment_log, Report, TaskPlan};
use chartsel_core::pipeline::{prepare_all, training_data};
use chartsel_core::regressor::{load_bundle, save_bundle, train};
use chartsel_core::render::render_candidates;
use chartsel_core::select::{predict_candidates, select, Candidates, Ensemble, Predictor};
use chartsel_core::stats::true_features;
use chartsel_core::synth::{generate, Archetype, SyntheticSpec};
use chartsel_core::table::{normalize, split_dataset};
use chartsel_core::{DataTable, Error, ModelBundle, Scoring};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{ConfigFile, PipelineConfig, Settings};
use crate::data::{load_table, load_tables, read_gold, write_file, GOLD_FILE, TABLES_DIR};
use crate::{service, CliError};

#[derive(Debug, Parser)]
#[command(name = "chartsel", version, about = "Recommends scatter, line or density charts for numeric tables")]
pub struct Cli {
    /// `key = value` settings file; flags take precedence over it.
    #[arg(long, global = true, env = "CHARTSEL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Png,
    Pgm,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the 26 statistical features of a table as JSON.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Render scatter, line and density images of a table.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "png")]
        format: ImageFormat,
        #[command(flatten)]
        settings: Settings,
    },
    /// Write a seeded synthetic corpus with archetype gold labels.
    Synth {
        /// Tables per archetype.
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Comma-separated subset of cloud, series, sparse.
        #[arg(long, value_delimiter = ',')]
        archetypes: Vec<Archetype>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one regressor per plot type and write a model bundle.
    Train {
        /// Output bundle, default the configured `models` path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the train/validation/test split, default the training seed.
        #[arg(long)]
        split_seed: Option<u64>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Recommend a chart for a table file or every table in a directory.
    Recommend {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Score recommendations against gold labels.
    Eval {
        /// Gold labels (`{"table": "density", ..}`); default `<data-dir>/gold.json`,
        /// or crowd gold from the judgment log with --crowd.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Use gold labels tallied from the judgment log.
        #[arg(long, conflicts_with = "gold")]
        crowd: bool,
        /// Additional bundles; with several, their ensemble is scored too.
        #[arg(long = "model")]
        extra_models: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "l1,top5,top10")]
        scorings: Vec<Scoring>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Serve judging tasks, plot images, tallies and the metrics report.
    Serve {
        #[command(flatten)]
        settings: Settings,
    },
}

fn resolve(config: &Option<PathBuf>, settings: &Settings) -> Result<PipelineConfig, CliError> {
    let file = match config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    PipelineConfig::resolve(settings, &file)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats { input } => {
            let series = load_table(&input)?;
            if let [t] = series.as_slice() {
                print_json(&true_features(&normalize(t))?);
            } else {
                let all = series
                    .iter()
                    .map(|t| Ok((t.id.clone(), true_features(&normalize(t))?)))
                    .collect::<Result<BTreeMap<_, _>, Error>>()?;
                print_json(&all);
            }
        }
        Command::Render { input, out, format, settings } => {
            let cfg = resolve(&cli.config, &settings)?;
            for t in load_table(&input)? {
                for img in render_candidates(&normalize(&t), &cfg.render)?.values() {
                    let base = out.join(img.image_id());
                    if format != ImageFormat::Pgm {
                        write_file(&base.with_extension("png"), &img.to_png())?;
                    }
                    if format != ImageFormat::Png {
                        write_file(&base.with_extension("pgm"), &img.to_pgm())?;
                    }
                }
            }
        }
        Command::Synth { count, seed, noise, archetypes, out } => {
            let spec = SyntheticSpec {
                archetypes: if archetypes.is_empty() { Archetype::ALL.to_vec() } else { archetypes },
                count,
                noise,
                seed,
            };
            let corpus = generate(&spec)?;
            let mut gold = BTreeMap::new();
            for s in &corpus {
                write_file(&out.join(TABLES_DIR).join(format!("{}.csv", s.table.id)), s.table.to_csv().as_bytes())?;
                gold.insert(s.table.id.clone(), s.gold());
            }
            let mut json = serde_json::to_string_pretty(&gold).expect("serializable");
            json.push('\n');
            write_file(&out.join(GOLD_FILE), json.as_bytes())?;
            log::info!("wrote {} tables to {}", corpus.len(), out.display());
        }
        Command::Train { out, split_seed, settings } => {
            let cfg = resolve(&cli.config, &settings)?;
            let out = out
                .or_else(|| cfg.models.clone())
                .ok_or_else(|| CliError::Config("no output path (--out or --models)".into()))?;
            let bundle = train_bundle(&cfg, split_seed.unwrap_or(cfg.train.seed))?;
            save_bundle(&bundle, &out)?;
            for (p, h) in &bundle.metadata.history {
                match (h.initial_validation_loss, h.final_validation_loss()) {
                    (Some(a), Some(b)) => println!("{p}: validation loss {a:.4} -> {b:.4}"),
                    _ => println!("{p}: training loss {:.4} -> {:.4}", h.initial_train_loss, h.final_train_loss()),
                }
            }
        }
        Command::Recommend { input, settings } => {
            let cfg = resolve(&cli.config, &settings)?;
            let bundle = load_bundle(cfg.require_models()?)?;
            let tables = if input.is_dir() {
                load_tables(&input)?
            } else {
                load_table(&input)?
            };
            let recs = tables
                .iter()
                .map(|t| select(t, &bundle, cfg.scoring, &cfg.render))
                .collect::<Result<Vec<_>, _>>()?;
            if input.is_dir() || recs.len() > 1 {
                print_json(&recs);
            } else {
                print_json(&recs[0]);
            }
        }
        Command::Eval { gold, crowd, extra_models, scorings, out, settings } => {
            let cfg = resolve(&cli.config, &settings)?;
            let tables = load_tables(&cfg.data_dir)?;
            let golds = if crowd {
                let normalized: Vec<DataTable> = tables.iter().map(normalize).collect();
                let tasks = generate_tasks(&normalized, &TaskPlan::default())?;
                crowd_gold(&aggregate_tally(&read_judgment_log(&cfg.judgments)?, &tasks)?)
            } else {
                read_gold(&gold.unwrap_or_else(|| cfg.data_dir.join(GOLD_FILE)))?
            };
            let paths: Vec<PathBuf> = cfg.models.iter().cloned().chain(extra_models).collect();
            if paths.is_empty() {
                return Err(CliError::Config("no model bundle given (--models or --model)".into()));
            }
            let report = evaluate(&paths, &tables, &golds, &scorings, &cfg)?;
            print!("{}", report.to_text());
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&report).expect("serializable");
                write_file(&out, json.as_bytes())?;
            }
        }
        Command::Serve { settings } => {
            let cfg = resolve(&cli.config, &settings)?;
            service::run_blocking(&cfg)?;
        }
    }
    Ok(())
}

/// Prepares every table under the data directory and trains on the
/// training part of a seeded split.
pub fn train_bundle(cfg: &PipelineConfig, split_seed: u64) -> Result<ModelBundle, CliError> {
    let tables = load_tables(&cfg.data_dir)?;
    let prepared = prepare_all(&tables, &cfg.render)?;
    let ids: Vec<String> = tables.iter().map(|t| t.id.clone()).collect();
    let split = split_dataset(&ids, split_seed)?;
    log::info!(
        "training on {} tables, validating on {}",
        split.train.len(),
        split.validation.len()
    );
    Ok(train(&training_data(&prepared, &split), &cfg.train)?)
}

fn model_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn evaluate(
    paths: &[PathBuf],
    tables: &[DataTable],
    golds: &BTreeMap<String, std::collections::BTreeSet<chartsel_core::PlotType>>,
    scorings: &[Scoring],
    cfg: &PipelineConfig,
) -> Result<Report, CliError> {
    let bundles = paths.iter().map(load_bundle).collect::<Result<Vec<_>, _>>()?;
    let scored: Vec<&DataTable> = tables.iter().filter(|t| golds.contains_key(&t.id)).collect();
    let candidates = |p: &dyn Predictor| {
        scored
            .iter()
            .map(|t| predict_candidates(t, p, &cfg.render))
            .collect::<Result<Vec<Candidates>, _>>()
    };
    let mut runs = Vec::new();
    for (path, b) in paths.iter().zip(&bundles) {
        runs.push((model_name(path), b.t_bar, candidates(b)?));
    }
    if bundles.len() > 1 {
        let ensemble = Ensemble::new(bundles.iter().collect())?;
        runs.push(("ensemble".to_string(), *ensemble.t_bar(), candidates(&ensemble)?));
    }
    let models: Vec<_> = runs.iter().map(|(n, t, c)| (n.clone(), t, c.as_slice())).collect();
    Ok(Report::evaluate(&models, golds, scorings)?)
}
