//! Command-line surface tying the pipeline together.
//!
//! Subcommands cover the full workflow: generate or ingest basin data,
//! train the forecaster, write forecasts, fit return-period thresholds,
//! score flood events and hydrographs, compare two models, emit
//! leakage-safe split plans, fit and apply the attribute-based skill
//! predictor, and aggregate scores into report tables and SVG box
//! plots. Every command resolves one [`RunConfig`], writes its outputs
//! into a dedicated directory along with the config echo and a manifest,
//! and never mutates its inputs. Given the same config, seed, and
//! inputs, outputs are reproducible byte for byte (manifests carry the
//! only timestamp). Failures print a machine-readable JSON object on
//! stderr and exit nonzero.

pub mod commands;
pub mod formats;

use crate::cv::{SplitScheme, TEMPORAL_BUFFER_DAYS};
use crate::data::{DataError, DateRange};
use crate::evaluation::Grouping;
use crate::frequency::{FrequencyConfig, FrequencyError};
use crate::model::{ModelConfig, ModelError, CHECKPOINT_FORMAT_VERSION};
use crate::skill::{SkillError, SIMILAR_BAND};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

/// Environment variable that overrides the configured data root.
pub const DATA_ROOT_ENV: &str = "HYDROCAST_DATA_ROOT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error(transparent)]
    Cv(#[from] crate::cv::CvError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Data(_) => "data",
            CliError::Model(_) => "model",
            CliError::Frequency(_) => "frequency",
            CliError::Cv(_) => "cv",
            CliError::Skill(_) => "skill",
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
        }
    }
}

/// The machine-readable failure object printed on stderr.
pub fn error_json(error: &CliError) -> String {
    serde_json::json!({ "error": { "kind": error.kind(), "message": error.to_string() } })
        .to_string()
}

/// One run's settings. Unknown keys are rejected; omitted keys take the
/// defaults below, which are sized for the bundled synthetic fixture
/// (the full-scale model configuration is opt-in via the `model` block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub output_root: PathBuf,
    /// Name stamped on this run's predictions and scores.
    pub model_name: String,
    pub model: ModelConfig,
    /// Sources whose forcings feed the decoder as future inputs.
    pub forecast_sources: Vec<String>,
    /// Drop gauges whose reported and polygon areas disagree by more.
    pub area_tolerance: f64,
    pub split_scheme: SplitScheme,
    pub k_folds: usize,
    pub temporal_folds: usize,
    pub temporal_buffer_days: i64,
    pub return_periods: Vec<f64>,
    /// Fraction of a hydrological year that must be observed for its
    /// maximum to qualify.
    pub frequency_coverage: f64,
    pub frequency_min_years: usize,
    pub year_start_month: u32,
    /// Predicted and observed events match within this many days.
    pub match_window_days: i64,
    pub grouping: Grouping,
    /// Training window; omitted means the full span of the data.
    pub train_range: Option<DateRange>,
    /// Issue dates to forecast; omitted means every feasible day.
    pub forecast_range: Option<DateRange>,
    pub hydro_eval_range: DateRange,
    pub event_eval_range: DateRange,
    /// Half-width of the "similar" band of the which-model classifier.
    pub skill_band: f64,
    pub skill_folds: usize,
    pub forest: crate::skill::ForestConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_root: PathBuf::from("data"),
            output_root: PathBuf::from("out"),
            model_name: "hydrocast".to_owned(),
            model: ModelConfig::desk_scale(),
            forecast_sources: vec!["forecast".to_owned()],
            area_tolerance: 0.2,
            split_scheme: SplitScheme::Random,
            k_folds: 10,
            temporal_folds: 2,
            temporal_buffer_days: TEMPORAL_BUFFER_DAYS,
            return_periods: vec![1.0, 2.0, 5.0, 10.0],
            frequency_coverage: 0.8,
            frequency_min_years: 10,
            year_start_month: 1,
            match_window_days: 2,
            grouping: Grouping::All,
            train_range: None,
            forecast_range: None,
            hydro_eval_range: crate::cv::default_hydro_eval_range(),
            event_eval_range: crate::cv::default_event_eval_range(),
            skill_band: SIMILAR_BAND,
            skill_folds: 5,
            forest: crate::skill::ForestConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.forest.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.area_tolerance.is_finite() && self.area_tolerance >= 0.0) {
            return bad(format!("area_tolerance must be nonnegative, got {}", self.area_tolerance));
        }
        if self.return_periods.is_empty() {
            return bad("return_periods must list at least one period".to_owned());
        }
        if let Some(t) = self.return_periods.iter().find(|t| !(t.is_finite() && **t >= 1.0)) {
            return bad(format!("return periods must be finite and at least 1, got {t}"));
        }
        if !(0.0..=1.0).contains(&self.frequency_coverage) {
            return bad(format!("frequency_coverage must lie in [0, 1], got {}", self.frequency_coverage));
        }
        if !(1..=12).contains(&self.year_start_month) {
            return bad(format!("year_start_month must be a month number, got {}", self.year_start_month));
        }
        if self.match_window_days < 0 {
            return bad(format!("match_window_days must be nonnegative, got {}", self.match_window_days));
        }
        if self.temporal_buffer_days < 0 {
            return bad(format!("temporal_buffer_days must be nonnegative, got {}", self.temporal_buffer_days));
        }
        if self.k_folds == 0 || self.temporal_folds == 0 || self.skill_folds == 0 {
            return bad("fold counts must be positive".to_owned());
        }
        if !(self.skill_band.is_finite() && self.skill_band >= 0.0) {
            return bad(format!("skill_band must be nonnegative, got {}", self.skill_band));
        }
        if self.model_name.is_empty() || self.model_name.contains(',') {
            return bad("model_name must be nonempty and comma-free".to_owned());
        }
        Ok(())
    }

    pub fn frequency_config(&self) -> FrequencyConfig {
        FrequencyConfig {
            coverage: self.frequency_coverage,
            min_years: self.frequency_min_years,
            return_periods: self.return_periods.clone(),
            year_start_month: self.year_start_month,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hydrocast", version, about = "Streamflow forecasting and flood-event evaluation")]
pub struct Cli {
    /// JSON run configuration; omitted keys take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic basin fixture.
    Synth {
        /// Directory to create the per-basin subdirectories in.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        basins: usize,
        #[arg(long, default_value_t = 5)]
        years: usize,
    },
    /// Train an ensemble and save a checkpoint.
    Train {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Split plan to restrict training to one fold's training side.
        #[arg(long, requires = "fold")]
        plan: Option<PathBuf>,
        /// Fold id inside --plan.
        #[arg(long, requires = "plan")]
        fold: Option<String>,
    },
    /// Forecast with a trained checkpoint and write predictions.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Split plan to restrict forecasting to one fold's test side.
        #[arg(long, requires = "fold")]
        plan: Option<PathBuf>,
        #[arg(long, requires = "plan")]
        fold: Option<String>,
    },
    /// Fit return-period thresholds on observed or predicted discharge.
    ReturnPeriods {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit on this prediction archive (per lead) instead of
        /// observations.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score predicted flood events against observed ones.
    EvalEvents {
        #[arg(long)]
        predictions: PathBuf,
        /// return_periods.csv fitted on observations.
        #[arg(long)]
        observed_thresholds: PathBuf,
        /// return_periods.csv fitted on the prediction archive.
        #[arg(long)]
        model_thresholds: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hydrograph metrics per gauge and lead.
    EvalHydro {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired comparison of two score files.
    Compare {
        /// Score file of model A (event or hydrograph rows).
        #[arg(long)]
        a: PathBuf,
        /// Score file of model B with the same schema.
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "f1")]
        metric: String,
        /// all | continent | T | lead (default from config).
        #[arg(long)]
        grouping: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a leakage-safe spatial x temporal split plan.
    CvSplit {
        /// random | continent | climate | terminal-basin (default from
        /// config).
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the attribute-based skill predictor on score files.
    SkillFit {
        /// Event scores of the model under study.
        #[arg(long)]
        scores: PathBuf,
        /// Second model's scores; switches to which-model-wins labels.
        #[arg(long)]
        scores_b: Option<PathBuf>,
        /// Score column to learn: f1 | precision | recall.
        #[arg(long, default_value = "f1")]
        target: String,
        /// Return period to select (default: smallest in the file).
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 0)]
        lead: usize,
        /// Learn a value instead of a class (ignored with --scores-b).
        #[arg(long)]
        regress: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a saved skill model to every basin's attributes.
    SkillPredict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate event scores into box-plot tables and SVG charts.
    Report {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Forecast { .. } => "forecast",
            Command::ReturnPeriods { .. } => "return-periods",
            Command::EvalEvents { .. } => "eval-events",
            Command::EvalHydro { .. } => "eval-hydro",
            Command::Compare { .. } => "compare",
            Command::CvSplit { .. } => "cv-split",
            Command::SkillFit { .. } => "skill-fit",
            Command::SkillPredict { .. } => "skill-predict",
            Command::Report { .. } => "report",
        }
    }
}

/// Resolved invocation state: the validated config, the raw config text
/// echoed into outputs, and the effective overrides.
pub struct RunContext {
    pub config: RunConfig,
    pub raw_config: String,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub data_root: PathBuf,
}

impl RunContext {
    pub fn load(cli: &Cli) -> Result<Self, CliError> {
        let raw_config = match &cli.config {
            Some(path) => fs::read_to_string(path)
                .map_err(|source| CliError::Io { path: path.display().to_string(), source })?,
            None => {
                let mut text = serde_json::to_string_pretty(&RunConfig::default()).unwrap();
                text.push('\n');
                text
            }
        };
        let config: RunConfig =
            serde_json::from_str(&raw_config).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        let data_root = match std::env::var_os(DATA_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => config.data_root.clone(),
        };
        Ok(RunContext {
            seed: cli.seed.unwrap_or(config.seed),
            jobs: cli.jobs,
            raw_config,
            config,
            data_root,
        })
    }

    pub fn out_dir(&self, explicit: Option<PathBuf>, command: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.config.output_root.join(command))
    }

    /// Create the output directory, echo the config into it verbatim,
    /// and write the run manifest.
    pub fn finish(&self, out: &Path, command: &str) -> Result<(), CliError> {
        fs::create_dir_all(out)
            .map_err(|source| CliError::Io { path: out.display().to_string(), source })?;
        let echo = out.join("run_config.json");
        fs::write(&echo, &self.raw_config)
            .map_err(|source| CliError::Io { path: echo.display().to_string(), source })?;
        let manifest = Manifest {
            command: command.to_owned(),
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
            checkpoint_format_version: CHECKPOINT_FORMAT_VERSION,
            config_sha256: hex_sha256(self.raw_config.as_bytes()),
            seed: self.seed,
            jobs: self.jobs,
            data_root: self.data_root.display().to_string(),
            generated_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        formats::write_json(&out.join("manifest.json"), &manifest)
    }

    pub fn ensure_out(&self, out: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out)
            .map_err(|source| CliError::Io { path: out.display().to_string(), source })
    }
}

/// Provenance record written next to every command's outputs. The
/// timestamp is the one field allowed to differ between identical runs.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub checkpoint_format_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub data_root: String,
    pub generated_unix: u64,
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        // Build the global pool once; later calls in the same process
        // keep the first pool, which is fine for identical settings.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let ctx = RunContext::load(&cli)?;
    let name = cli.command.name();
    match cli.command {
        Command::Synth { out, basins, years } => commands::synth(&ctx, &out, basins, years),
        Command::Train { out, plan, fold } => {
            let out = ctx.out_dir(out, name);
            commands::train(&ctx, &out, plan.as_deref(), fold.as_deref())
        }
        Command::Forecast { checkpoint, out, plan, fold } => {
            let out = ctx.out_dir(out, name);
            commands::forecast(&ctx, &out, &checkpoint, plan.as_deref(), fold.as_deref())
        }
        Command::ReturnPeriods { out, predictions } => {
            let out = ctx.out_dir(out, name);
            commands::return_periods(&ctx, &out, predictions.as_deref())
        }
        Command::EvalEvents { predictions, observed_thresholds, model_thresholds, out } => {
            let out = ctx.out_dir(out, name);
            commands::eval_events(&ctx, &out, &predictions, &observed_thresholds, &model_thresholds)
        }
        Command::EvalHydro { predictions, out } => {
            let out = ctx.out_dir(out, name);
            commands::eval_hydro(&ctx, &out, &predictions)
        }
        Command::Compare { a, b, metric, grouping, out } => {
            let out = ctx.out_dir(out, name);
            commands::compare(&ctx, &out, &a, &b, &metric, grouping.as_deref())
        }
        Command::CvSplit { scheme, k, out } => {
            let out = ctx.out_dir(out, name);
            commands::cv_split(&ctx, &out, scheme.as_deref(), k)
        }
        Command::SkillFit { scores, scores_b, target, t, lead, regress, out } => {
            let out = ctx.out_dir(out, name);
            commands::skill_fit(
                &ctx,
                &out,
                &scores,
                scores_b.as_deref(),
                &target,
                t,
                lead,
                regress,
            )
        }
        Command::SkillPredict { model, out } => {
            let out = ctx.out_dir(out, name);
            commands::skill_predict(&ctx, &out, &model)
        }
        Command::Report { scores, out } => {
            let out = ctx.out_dir(out, name);
            commands::report(&ctx, &out, &scores)
        }
    }
}

/// Parse the process arguments, run, and map failures to a JSON line on
/// stderr with a nonzero exit code.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("{}", error_json(&error));
            ExitCode::FAILURE
        }
    }
}
