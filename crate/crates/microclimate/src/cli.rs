//! Subcommand dispatch for the `microclimate` binary. Every subcommand is a
//! thin wrapper over the library: parse flags, resolve configuration
//! (flags beat environment beats config file), call in, print a summary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::decompose::{decompose_causal, warmup_len};
use crate::error::{Error, Result};
use crate::evaluation::{
    rolling_backtest, write_figure_csv, FoldSpec, MetricSet, DEFAULT_MAPE_EPSILON,
};
use crate::forecaster::{train, Architecture, ForecastResult, ModelBundle, ModelConfig};
use crate::pipeline::{align_readings, build_series, grid_bounds, predict_latest, DatasetParams};
use crate::service::{AppConfig, ProviderChoice};
use crate::synthgen::generate;
use crate::timeseries::{ChannelSpec, SensorReading, Timestamp};
use crate::transfer::{adapt, AdaptConfig};

#[derive(Parser)]
#[command(
    name = "microclimate",
    version,
    about = "Micro-climate forecasting: station forecast + learned local error"
)]
pub struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Override the model directory.
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic farm scenario: sensor CSV, forecast CSV and the
    /// test-only hidden trace.
    Simulate(SimulateArgs),
    /// Validate a sensor CSV and append it to the readings store.
    Ingest(IngestArgs),
    /// Emit the causal multi-scale decomposition of one channel as CSV.
    Decompose(DecomposeArgs),
    /// Train a residual model bundle from sensor and forecast CSVs.
    Train(TrainArgs),
    /// Adapt an existing bundle to a new site from scarce data.
    Adapt(AdaptArgs),
    /// Predict at an issue time; output CSV or JSON.
    Predict(PredictArgs),
    /// Rolling-origin backtest with station and persistence baselines.
    Backtest(BacktestArgs),
    /// Run the HTTP/JSON forecast service.
    Serve(ServeArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ArchChoice {
    Linear,
    ScaleMlp,
}

impl From<ArchChoice> for Architecture {
    fn from(a: ArchChoice) -> Architecture {
        match a {
            ArchChoice::Linear => Architecture::Linear,
            ArchChoice::ScaleMlp => Architecture::ScaleMlp,
        }
    }
}

/// Scenario selection flags shared by train and backtest.
#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Shipped preset name (temperature-6h, soil-moisture-6h, humidity-1h).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated predictor channels.
    #[arg(long, value_delimiter = ',')]
    predictors: Vec<String>,
    #[arg(long)]
    resolution: Option<u64>,
    /// Comma-separated horizon steps.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    /// Feature window (trailing steps per band).
    #[arg(long)]
    window: Option<usize>,
    /// Decomposition levels.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long, value_enum)]
    arch: Option<ArchChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<u32>,
    /// Output directory (defaults to the data directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// Sensor CSV to validate and append.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Sensor CSV with the channel to decompose.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    channel: String,
    /// Grid step in seconds.
    #[arg(long)]
    step: u64,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    max_gap: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    model: ModelFlags,
    /// Sensor CSV (default <data_dir>/sensors.csv).
    #[arg(long)]
    sensors: Option<PathBuf>,
    /// Forecast CSV (default <data_dir>/forecasts.csv).
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// Bundle output path (default <model_dir>/<target>.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdaptArgs {
    /// Source bundle path.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    sensors: Option<PathBuf>,
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Also fine-tune encoder and hidden matrices (default: frozen).
    #[arg(long)]
    no_freeze: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Adapted bundle output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PredictFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    sensors: Option<PathBuf>,
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// RFC 3339 issue time (default: newest admissible).
    #[arg(long)]
    issue: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: PredictFormat,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    sensors: Option<PathBuf>,
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    /// Near-zero MAPE guard in channel units.
    #[arg(long, default_value_t = DEFAULT_MAPE_EPSILON)]
    epsilon: f64,
    /// Report JSON output (default <data_dir>/report.json).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the plotting CSV here.
    #[arg(long)]
    figure: Option<PathBuf>,
    /// Restrict the plotting CSV to one horizon step.
    #[arg(long)]
    figure_horizon: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    /// Bind address, e.g. 127.0.0.1:8337.
    #[arg(long)]
    bind: Option<String>,
}

/// Resolve configuration: defaults < config file < environment < flags.
fn resolve_config(cli: &Cli) -> Result<AppConfig> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    config.apply_env();
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(dir) = &cli.model_dir {
        config.model_dir = dir.clone();
    }
    Ok(config)
}

fn apply_scenario_flags(config: &mut AppConfig, args: &ScenarioArgs) {
    if let Some(p) = &args.preset {
        config.preset = Some(p.clone());
    }
    if let Some(t) = &args.target {
        config.target = Some(t.clone());
        // An explicit target overrides any preset from the config file.
        if args.preset.is_none() {
            config.preset = None;
        }
    }
    if !args.predictors.is_empty() {
        config.predictors = args.predictors.clone();
    }
    if let Some(r) = args.resolution {
        config.resolution_seconds = Some(r);
    }
    if !args.horizons.is_empty() {
        config.horizons = args.horizons.clone();
    }
    if let Some(w) = args.window {
        config.window = Some(w);
    }
    if let Some(l) = args.levels {
        config.levels = Some(l);
    }
}

fn apply_model_flags(model: &mut ModelConfig, flags: &ModelFlags) {
    if let Some(arch) = flags.arch {
        let arch: Architecture = arch.into();
        if arch != model.architecture {
            let base = match arch {
                Architecture::Linear => {
                    ModelConfig::linear(model.window, model.horizons.clone(), model.levels)
                }
                Architecture::ScaleMlp => {
                    ModelConfig::scale_mlp(model.window, model.horizons.clone(), model.levels)
                }
            };
            *model = ModelConfig { seed: model.seed, ..base };
        }
    }
    if let Some(seed) = flags.seed {
        model.seed = seed;
    }
    if let Some(lr) = flags.learning_rate {
        model.learning_rate = lr;
    }
    if let Some(e) = flags.max_epochs {
        model.max_epochs = e;
    }
    if let Some(h) = flags.hidden_units {
        model.hidden_units = h;
    }
}

fn load_inputs(
    config: &AppConfig,
    sensors: &Option<PathBuf>,
    forecasts: &Option<PathBuf>,
) -> Result<(Vec<SensorReading>, Vec<crate::timeseries::StationForecastRecord>)> {
    let sensors_path = sensors
        .clone()
        .unwrap_or_else(|| config.data_dir.join("sensors.csv"));
    let forecasts_path = forecasts
        .clone()
        .unwrap_or_else(|| config.forecast_csv_path());
    Ok((
        crate::csvio::read_sensor_csv(sensors_path)?,
        crate::csvio::read_forecast_csv(forecasts_path)?,
    ))
}

fn print_metric_set(label: &str, set: &MetricSet) {
    println!(
        "{label:12} rmse={:8.4}  mape={:7.3}%  accuracy={:7.3}%  points={}  excluded={}",
        set.overall.rmse, set.overall.mape, set.overall.accuracy, set.overall.points, set.overall.excluded
    );
}

fn forecast_csv(result: &ForecastResult) -> String {
    let mut out = String::from("issue_time,horizon_steps,valid_time,station_value,predicted_error,predicted_value\n");
    for h in &result.horizons {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            result.issue_time.to_rfc3339(),
            h.horizon_steps,
            h.valid_time.to_rfc3339(),
            crate::csvio::format_value(h.station_value),
            crate::csvio::format_value(h.predicted_error),
            crate::csvio::format_value(h.predicted_value),
        ));
    }
    out
}

pub fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    match cli.command {
        Command::Simulate(args) => {
            let mut scenario = crate::presets::scenario(&args.preset)?;
            if let Some(seed) = args.seed {
                scenario.seed = seed;
            }
            if let Some(days) = args.days {
                scenario.days = days;
            }
            let generated = generate(&scenario)?;
            let out = args.out.unwrap_or_else(|| config.data_dir.clone());
            generated.write_csvs(&out)?;
            println!(
                "wrote {} readings, {} forecast records, {} trace points to {}",
                generated.readings.len(),
                generated.forecasts.len(),
                generated.trace.len(),
                out.display()
            );
            Ok(())
        }
        Command::Ingest(args) => {
            let readings = crate::csvio::read_sensor_csv(&args.input)?;
            let mut accepted = Vec::new();
            let mut rejected = 0usize;
            for r in readings {
                match ChannelSpec::builtin(&r.channel) {
                    Some(spec) if spec.contains(r.value) => accepted.push(r),
                    _ => rejected += 1,
                }
            }
            let store = crate::service::store::ReadingStore::open(config.data_dir.join("readings"))?;
            store.append(&accepted)?;
            println!(
                "accepted {} readings into {} ({} rejected)",
                accepted.len(),
                config.data_dir.join("readings").display(),
                rejected
            );
            Ok(())
        }
        Command::Decompose(args) => {
            let readings = crate::csvio::read_sensor_csv(&args.input)?;
            let (start, end) = grid_bounds(&readings, args.step)?;
            let levels = args
                .levels
                .unwrap_or_else(|| AppConfig::default_levels(args.step));
            let max_gap = args.max_gap.unwrap_or(config.max_gap_steps);
            let series = build_series(&readings, &[args.channel.clone()], start, args.step, end, max_gap)?
                .remove(0);
            if let Some(first_invalid) = series.valid.iter().position(|v| !v) {
                return Err(Error::InvalidArgument(format!(
                    "channel {} has an unfilled gap at {}; shorten the span or raise --max-gap",
                    args.channel,
                    series.time_at(first_invalid)
                )));
            }
            let stack = decompose_causal(&series.values, levels)?;
            let mut text = String::from("t,x");
            for j in 1..=levels {
                text.push_str(&format!(",d_{j}"));
            }
            text.push_str(",a_L\n");
            for t in 0..series.len() {
                text.push_str(&series.time_at(t).to_rfc3339());
                text.push_str(&format!(",{}", crate::csvio::format_value(series.values[t])));
                for d in &stack.details {
                    text.push_str(&format!(",{}", crate::csvio::format_value(d[t])));
                }
                text.push_str(&format!(",{}\n", crate::csvio::format_value(stack.approx[t])));
            }
            std::fs::write(&args.out, text).map_err(|e| Error::io(&args.out, e))?;
            println!(
                "wrote {} rows x {} bands (warm-up {}) to {}",
                series.len(),
                levels + 1,
                stack.warmup,
                args.out.display()
            );
            Ok(())
        }
        Command::Train(args) => {
            let mut config = config;
            apply_scenario_flags(&mut config, &args.scenario);
            let (params, mut model) = config.resolve_pipeline()?;
            apply_model_flags(&mut model, &args.model);
            let (readings, forecasts) = load_inputs(&config, &args.sensors, &args.forecasts)?;
            let dataset = align_readings(&readings, &forecasts, &params)?;
            let bundle = train(&dataset, &model)?;
            let out = args
                .out
                .unwrap_or_else(|| config.model_dir.join(format!("{}.json", params.target)));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            bundle.save(&out)?;
            println!(
                "trained {} on {} rows ({} skipped): epochs={} val_loss={:.6}",
                params.target,
                dataset.rows.len(),
                dataset.skipped.total(),
                bundle.train_summary.epochs_run,
                bundle.train_summary.best_validation_loss
            );
            println!("bundle {} -> {}", &bundle.content_hash()[..12], out.display());
            Ok(())
        }
        Command::Adapt(args) => {
            let source = ModelBundle::load(&args.source)?;
            let params = DatasetParams {
                target: source.target.clone(),
                predictors: source.predictor_channels.clone(),
                resolution_seconds: source.resolution_seconds,
                window: source.config.window + warmup_len(source.config.levels),
                horizons: source.config.horizons.clone(),
                max_gap_steps: config.max_gap_steps,
            };
            let (readings, forecasts) = load_inputs(&config, &args.sensors, &args.forecasts)?;
            let dataset = align_readings(&readings, &forecasts, &params)?;
            let mut adapt_config = AdaptConfig::default();
            if let Some(e) = args.epochs {
                adapt_config.adapt_epochs = e;
            }
            adapt_config.adapt_learning_rate = args.learning_rate;
            adapt_config.freeze_encoders = !args.no_freeze;
            if let Some(seed) = args.seed {
                adapt_config.seed = seed;
            }
            let adapted = adapt(&source, &dataset, &adapt_config)?;
            if let Some(parent) = args.out.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            adapted.save(&args.out)?;
            println!(
                "adapted {} on {} target rows: epochs={} val_loss={:.6}",
                source.target,
                dataset.rows.len(),
                adapted.train_summary.epochs_run,
                adapted.train_summary.best_validation_loss
            );
            println!("bundle {} -> {}", &adapted.content_hash()[..12], args.out.display());
            Ok(())
        }
        Command::Predict(args) => {
            let bundle = ModelBundle::load(&args.bundle)?;
            let (readings, forecasts) = load_inputs(&config, &args.sensors, &args.forecasts)?;
            let result = match &args.issue {
                Some(text) => {
                    let issue = Timestamp::parse_rfc3339(text)?;
                    let (start, end) = grid_bounds(&readings, bundle.resolution_seconds)?;
                    let series = build_series(
                        &readings,
                        &bundle.predictor_channels,
                        start,
                        bundle.resolution_seconds,
                        end,
                        config.max_gap_steps,
                    )?;
                    crate::forecaster::predict(&bundle, &series, issue, &forecasts)?
                }
                None => predict_latest(&bundle, &readings, &forecasts, config.max_gap_steps, 8)?,
            };
            let rendered = match args.format {
                PredictFormat::Csv => forecast_csv(&result),
                PredictFormat::Json => {
                    serde_json::to_string_pretty(&result).expect("forecast serializes")
                }
            };
            match &args.out {
                Some(path) => std::fs::write(path, rendered).map_err(|e| Error::io(path, e))?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
        Command::Backtest(args) => {
            let mut config = config;
            apply_scenario_flags(&mut config, &args.scenario);
            let (params, mut model) = config.resolve_pipeline()?;
            apply_model_flags(&mut model, &args.model);
            let (readings, forecasts) = load_inputs(&config, &args.sensors, &args.forecasts)?;
            let dataset = align_readings(&readings, &forecasts, &params)?;
            let spec = FoldSpec {
                folds: args.folds,
                initial_train_fraction: args.train_fraction,
            };
            let outcome = rolling_backtest(&model, &dataset, spec, args.epsilon)?;
            let report_path = args
                .report
                .unwrap_or_else(|| config.data_dir.join("report.json"));
            if let Some(parent) = report_path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            outcome.report.save(&report_path)?;
            println!(
                "backtested {}: {} folds, {} rows, period {} .. {}",
                params.target,
                outcome.report.folds,
                outcome.report.rows_evaluated,
                outcome.report.period_start,
                outcome.report.period_end
            );
            print_metric_set("model", &outcome.report.model);
            print_metric_set("station", &outcome.report.station);
            print_metric_set("persistence", &outcome.report.persistence);
            println!("report -> {}", report_path.display());
            if let Some(figure) = &args.figure {
                let points: Vec<_> = match args.figure_horizon {
                    Some(h) => outcome
                        .points
                        .iter()
                        .filter(|p| p.horizon_steps == h)
                        .cloned()
                        .collect(),
                    None => outcome.points.clone(),
                };
                write_figure_csv(figure, &points)?;
                println!("figure data ({} rows) -> {}", points.len(), figure.display());
            }
            Ok(())
        }
        Command::Serve(args) => {
            let mut config = config;
            if matches!(config.provider, ProviderChoice::File) && !config.forecast_csv_path().exists() {
                return Err(Error::Config(format!(
                    "forecast CSV {} not found; run `simulate` first or set provider=simulated:<preset>",
                    config.forecast_csv_path().display()
                )));
            }
            if let Some(bind) = args.bind {
                config.bind = bind;
            }
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::Config(format!("tokio runtime: {e}")))?;
            runtime.block_on(crate::service::http::serve(config))
        }
    }
}
