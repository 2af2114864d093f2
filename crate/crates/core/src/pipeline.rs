//! End-to-end stages shared by the CLI commands: ingest, aggregate, window,
//! split, scale, train, evaluate, forecast.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::{
    aggregate_weighted, build_supervised, fit_scaler, lag_row, parse_climate_csv, parse_wells_csv,
    split_indices, ClimateSeries, Dataset, Scaler, YearMonth,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_model, predict_original, MetricsReport, Partition};
use crate::model_file::{Checkpoint, ModelFile};
use crate::network::{init_mlp, mlp_predict, MlpModel};
use crate::numerics::{Matrix, RngState};
use crate::optim::{Optimizer, OptimizerKind};
use crate::train::{train, TrainOutcome, TrainSettings};

pub const LOG_EVERY: u64 = 100;

fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Everything derived from the input files and the data settings of a config.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// The full climate file, possibly extending past the well record.
    pub climate: ClimateSeries,
    pub months: Vec<YearMonth>,
    /// Weighted-mean level per month, original units.
    pub levels: Vec<f64>,
    /// Supervised examples in original units.
    pub dataset: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
    wells_hash: String,
    climate_hash: String,
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    let wells_bytes = read_bytes(&cfg.wells_csv)?;
    let climate_bytes = read_bytes(&cfg.climate_csv)?;
    let wells = parse_wells_csv(wells_bytes.as_slice(), &cfg.wells_csv.display().to_string())?;
    let climate = parse_climate_csv(
        climate_bytes.as_slice(),
        &cfg.climate_csv.display().to_string(),
    )?;
    let (months, levels) = aggregate_weighted(&wells)?;
    let aligned = climate.restrict_to(&months)?;
    let dataset = build_supervised(&aligned, &months, &levels, cfg.lags)?;
    let (train_rows, test_rows) =
        split_indices(dataset.len(), cfg.split_fraction, cfg.split_mode, cfg.seed)?;
    let train = dataset.select(&train_rows)?;
    let test = dataset.select(&test_rows)?;
    let scaler = fit_scaler(&train, cfg.scaling)?;
    Ok(PreparedData {
        climate,
        months,
        levels,
        dataset,
        train_rows,
        test_rows,
        train,
        test,
        scaler,
        wells_hash: short_hash(&wells_bytes),
        climate_hash: short_hash(&climate_bytes),
    })
}

impl PreparedData {
    /// Identifies a report: config settings, seed, input contents, model
    /// contents, and the metric units.
    pub fn fingerprint(&self, cfg: &RunConfig, model_text: &str) -> String {
        format!(
            "cfg={};seed={};wells={};climate={};model={};units=m",
            short_hash(cfg.canonical().as_bytes()),
            cfg.seed,
            self.wells_hash,
            self.climate_hash,
            short_hash(model_text.as_bytes()),
        )
    }

    pub fn report(
        &self,
        cfg: &RunConfig,
        model: &MlpModel,
        model_text: &str,
    ) -> Result<MetricsReport> {
        let mut report = evaluate_model(model, &self.scaler, &self.train, &self.test)?;
        report.fingerprint = self.fingerprint(cfg, model_text);
        Ok(report)
    }

    pub fn scaled_train(&self) -> Result<(Matrix, Matrix)> {
        Ok((
            self.scaler.scale_features(&self.train.x)?,
            self.scaler.scale_target(&self.train.y)?,
        ))
    }
}

/// Rejects a model whose architecture disagrees with the config.
pub fn check_model_matches(cfg: &RunConfig, model: &MlpModel) -> Result<()> {
    if model.layer_sizes() != cfg.layer_sizes().as_slice() {
        return Err(Error::Config(format!(
            "model layer sizes {:?} do not match config (lags = {}, hidden_size = {}) -> {:?}",
            model.layer_sizes(),
            cfg.lags,
            cfg.hidden_size,
            cfg.layer_sizes()
        )));
    }
    if model.output_activation() != cfg.output_activation {
        return Err(Error::Config(format!(
            "model output activation {} does not match config {}",
            model.output_activation(),
            cfg.output_activation
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub file: ModelFile,
    pub model_text: String,
    pub report: MetricsReport,
    pub outcome: TrainOutcome,
}

/// Trains from scratch, or continues from `resume` when given.
pub fn train_run(
    cfg: &RunConfig,
    data: &PreparedData,
    resume: Option<&ModelFile>,
    on_log: impl FnMut(u64, f64),
) -> Result<TrainedRun> {
    let (x, y) = data.scaled_train()?;
    let (mut model, mut optimizer, start_epoch) = match resume {
        None => {
            let model = init_mlp(
                &cfg.layer_sizes(),
                cfg.output_activation,
                &mut RngState::new(cfg.seed),
            )?;
            let opt = Optimizer::new(cfg.optimizer, cfg.hyper, &model)?;
            (model, opt, 0)
        }
        Some(file) => {
            check_model_matches(cfg, &file.model)?;
            let ck = file.checkpoint.as_ref().ok_or_else(|| {
                Error::Config("resume model has no ADAMV1 optimizer checkpoint".into())
            })?;
            if cfg.optimizer != OptimizerKind::Adam {
                return Err(Error::Config("resuming requires optimizer = adam".into()));
            }
            let opt = Optimizer::Adam {
                hyper: cfg.hyper,
                state: ck.adam.clone(),
            };
            (file.model.clone(), opt, ck.epoch)
        }
    };
    let settings = TrainSettings {
        epochs: cfg.epochs,
        batch: cfg.batch,
        seed: cfg.seed,
        log_every: LOG_EVERY,
    };
    let outcome = train(
        &mut model,
        &mut optimizer,
        &x,
        &y,
        &settings,
        start_epoch,
        on_log,
    )?;
    let checkpoint = optimizer.adam_state().map(|adam| Checkpoint {
        adam: adam.clone(),
        epoch: outcome.epochs_done,
    });
    let file = ModelFile { model, checkpoint };
    let model_text = file.to_text();
    let report = data.report(cfg, &file.model, &model_text)?;
    Ok(TrainedRun {
        file,
        model_text,
        report,
        outcome,
    })
}

/// Recursive forecast of `horizon` months after the last observed month.
///
/// Each predicted level becomes the first lag feature of the next month.
/// Future temperature and precipitation come from the climate file.
pub fn forecast(
    cfg: &RunConfig,
    data: &PreparedData,
    model: &MlpModel,
    horizon: usize,
) -> Result<Vec<(YearMonth, f64)>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    let last = *data.months.last().expect("prepared data is non-empty");
    let start = data
        .climate
        .position(last)
        .expect("climate covers the well grid after preparation");
    let available = data.climate.len() - start - 1;
    if available < horizon {
        return Err(Error::Alignment(format!(
            "forecast of {horizon} month(s) after {last} needs {horizon} future climate month(s), {available} available"
        )));
    }
    let mut history: Vec<f64> = data.levels[data.levels.len() - cfg.lags..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let idx = start + k;
        let row = lag_row(
            data.climate.temperature[idx],
            data.climate.precipitation[idx],
            &history,
            cfg.lags,
        );
        let x = data
            .scaler
            .scale_features(&Matrix::new(1, row.len(), row)?)?;
        let y = data.scaler.invert_target(&mlp_predict(model, &x)?)?.data()[0];
        out.push((data.climate.timestamps[idx], y));
        history.push(y);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub date: YearMonth,
    pub observed: f64,
    pub predicted: f64,
    pub partition: Partition,
}

/// Observed vs. simulated level for every supervised month, in date order.
pub fn plot_rows(data: &PreparedData, model: &MlpModel) -> Result<Vec<PlotRow>> {
    let predicted = predict_original(model, &data.scaler, &data.dataset)?;
    let mut partition = vec![Partition::Train; data.dataset.len()];
    for &i in &data.test_rows {
        partition[i] = Partition::Test;
    }
    Ok((0..data.dataset.len())
        .map(|i| PlotRow {
            date: data.dataset.timestamps[i],
            observed: data.dataset.targets()[i],
            predicted: predicted[i],
            partition: partition[i],
        })
        .collect())
}

pub fn plot_csv(rows: &[PlotRow]) -> String {
    let mut out = String::from("date,observed,predicted,partition\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{:?},{}\n",
            r.date, r.observed, r.predicted, r.partition
        ));
    }
    out
}

pub fn forecast_csv(rows: &[(YearMonth, f64)]) -> String {
    let mut out = String::from("date,predicted_level_masl\n");
    for (d, v) in rows {
        out.push_str(&format!("{d},{v:?}\n"));
    }
    out
}
