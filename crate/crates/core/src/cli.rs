//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or model-file error, 2 data
//! error, 3 numeric error. Every failure prints exactly one line to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{climate_to_csv, wells_to_csv};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model_file::ModelFile;
use crate::pipeline::{
    check_model_matches, forecast, forecast_csv, plot_csv, plot_rows, prepare, train_run,
};
use crate::synth;

#[derive(Debug, Parser)]
#[command(
    name = "gwmlp",
    version,
    about = "MLP + Adam groundwater level forecasting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration file (`key = value`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Model file to read (evaluate/predict/export-plot) or write (train).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Months to forecast.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,

    /// Output path overriding the config (report, predictions, plot, or synthetic data dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the model file and metrics report.
    Train {
        /// Continue from a model file carrying an optimizer checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Recompute the metrics report for an existing model.
    Evaluate,
    /// Recursive multi-month forecast past the last observed month.
    Predict,
    /// Observed vs. predicted series for plotting.
    ExportPlot,
    /// Write a seeded synthetic wells/climate pair and a config to a directory.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 175)]
        months: usize,
        #[arg(long, default_value_t = 12)]
        future_months: usize,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return 1;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Command::Synth {
        seed,
        months,
        future_months,
    } = &cli.command
    {
        let dir = cli
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("synth needs --out <dir>".into()))?;
        return cmd_synth(dir, *seed, *months, *future_months);
    }

    let config = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("missing --config <path>".into()))?;
    match &cli.command {
        Command::Train { resume } => {
            let summary = cmd_train(config, cli.model.as_deref(), resume.as_deref(), true)?;
            println!("{summary}");
        }
        Command::Evaluate => {
            let report = cmd_evaluate(config, require_model(cli)?, cli.out.as_deref())?;
            print!("{}", report.render_table());
        }
        Command::Predict => {
            let horizon = cli
                .horizon
                .ok_or_else(|| Error::Config("predict needs --horizon <n>".into()))?;
            let csv = cmd_predict(config, require_model(cli)?, horizon, cli.out.as_deref())?;
            if cli.out.is_none() {
                print!("{csv}");
            }
        }
        Command::ExportPlot => {
            let path = cmd_export_plot(config, require_model(cli)?, cli.out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn require_model(cli: &Cli) -> Result<&Path> {
    cli.model
        .as_deref()
        .ok_or_else(|| Error::Config("missing --model <path>".into()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::model_format("MLPV1", format!("cannot read {}: {e}", path.display()))
    })?;
    ModelFile::parse(&text)
}

/// Trains per the config, writes model and report, returns the summary line.
///
/// `model_out` overrides the config's `model_out`. With `log`, the loss is
/// printed to stdout every 100 epochs.
pub fn cmd_train(
    config_path: &Path,
    model_out: Option<&Path>,
    resume: Option<&Path>,
    log: bool,
) -> Result<String> {
    let cfg = RunConfig::load(config_path)?;
    let data = prepare(&cfg)?;
    let resume_file = resume.map(load_model).transpose()?;
    let run = train_run(&cfg, &data, resume_file.as_ref(), |epoch, loss| {
        if log {
            println!("epoch {epoch:>6} loss {loss:.6e}");
        }
    })?;
    let model_path = model_out
        .map(Path::to_path_buf)
        .unwrap_or(cfg.model_out.clone());
    write_file(&model_path, &run.model_text)?;
    write_file(&cfg.report_out, &run.report.to_csv())?;
    let sizes: Vec<String> = cfg.layer_sizes().iter().map(usize::to_string).collect();
    Ok(format!(
        "trained {} {} epochs={} final_loss={:.6e} train_r2={:.4} test_r2={:.4} total_r2={:.4} total_rmse={:.4} model={} report={}",
        sizes.join("-"),
        cfg.optimizer,
        run.outcome.epochs_done,
        run.outcome.final_loss,
        run.report.train().r2,
        run.report.test().r2,
        run.report.total().r2,
        run.report.total().rmse,
        model_path.display(),
        cfg.report_out.display()
    ))
}

pub fn cmd_evaluate(
    config_path: &Path,
    model_path: &Path,
    out: Option<&Path>,
) -> Result<MetricsReport> {
    let cfg = RunConfig::load(config_path)?;
    let text = std::fs::read_to_string(model_path).map_err(|e| {
        Error::model_format(
            "MLPV1",
            format!("cannot read {}: {e}", model_path.display()),
        )
    })?;
    let file = ModelFile::parse(&text)?;
    check_model_matches(&cfg, &file.model)?;
    let data = prepare(&cfg)?;
    let report = data.report(&cfg, &file.model, &text)?;
    write_file(out.unwrap_or(&cfg.report_out), &report.to_csv())?;
    Ok(report)
}

/// Returns the forecast CSV; also writes it to `out` when given.
pub fn cmd_predict(
    config_path: &Path,
    model_path: &Path,
    horizon: usize,
    out: Option<&Path>,
) -> Result<String> {
    let cfg = RunConfig::load(config_path)?;
    let file = load_model(model_path)?;
    check_model_matches(&cfg, &file.model)?;
    let data = prepare(&cfg)?;
    let csv = forecast_csv(&forecast(&cfg, &data, &file.model, horizon)?);
    if let Some(path) = out {
        write_file(path, &csv)?;
    }
    Ok(csv)
}

pub fn cmd_export_plot(
    config_path: &Path,
    model_path: &Path,
    out: Option<&Path>,
) -> Result<PathBuf> {
    let cfg = RunConfig::load(config_path)?;
    let file = load_model(model_path)?;
    check_model_matches(&cfg, &file.model)?;
    let data = prepare(&cfg)?;
    let path = out.map(Path::to_path_buf).unwrap_or(cfg.plot_out.clone());
    write_file(&path, &plot_csv(&plot_rows(&data, &file.model)?))?;
    Ok(path)
}

pub fn cmd_synth(dir: &Path, seed: u64, months: usize, future_months: usize) -> Result<()> {
    if months < 3 {
        return Err(Error::Config("synth needs at least 3 months".into()));
    }
    let s = synth::generate(seed, months, future_months);
    write_file(&dir.join("wells.csv"), &wells_to_csv(&s.wells))?;
    write_file(&dir.join("climate.csv"), &climate_to_csv(&s.climate))?;
    write_file(
        &dir.join("run.cfg"),
        &format!("wells_csv = wells.csv\nclimate_csv = climate.csv\nseed = {seed}\n"),
    )?;
    println!("wrote {}/{{wells.csv,climate.csv,run.cfg}}", dir.display());
    Ok(())
}
