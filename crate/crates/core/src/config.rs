//! Run configuration: a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! one of [`KEYS`]; unknown or repeated keys are rejected. Relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use crate::data::{ScalerKind, SplitMode};
use crate::error::{Error, Result};
use crate::network::Activation;
use crate::optim::{AdamHyper, OptimizerKind};
use crate::train::BatchSize;

pub const KEYS: [&str; 19] = [
    "wells_csv",
    "climate_csv",
    "hidden_size",
    "output_activation",
    "lags",
    "optimizer",
    "eta",
    "beta1",
    "beta2",
    "epsilon",
    "epochs",
    "batch",
    "seed",
    "split_fraction",
    "split_mode",
    "scaling",
    "model_out",
    "report_out",
    "plot_out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub wells_csv: PathBuf,
    pub climate_csv: PathBuf,
    pub hidden_size: usize,
    pub output_activation: Activation,
    pub lags: usize,
    pub optimizer: OptimizerKind,
    pub hyper: AdamHyper,
    pub epochs: u64,
    pub batch: BatchSize,
    pub seed: u64,
    pub split_fraction: f64,
    pub split_mode: SplitMode,
    pub scaling: ScalerKind,
    pub model_out: PathBuf,
    pub report_out: PathBuf,
    pub plot_out: PathBuf,
}

impl RunConfig {
    /// Defaults for everything except the two input paths.
    pub fn with_inputs(wells_csv: impl Into<PathBuf>, climate_csv: impl Into<PathBuf>) -> Self {
        RunConfig {
            wells_csv: wells_csv.into(),
            climate_csv: climate_csv.into(),
            hidden_size: 500,
            output_activation: Activation::Linear,
            lags: 1,
            optimizer: OptimizerKind::Adam,
            hyper: AdamHyper::default(),
            epochs: 2000,
            batch: BatchSize::Full,
            seed: 42,
            split_fraction: 0.8,
            split_mode: SplitMode::Chronological,
            scaling: ScalerKind::ZScore,
            model_out: PathBuf::from("model.mlp"),
            report_out: PathBuf::from("report.csv"),
            plot_out: PathBuf::from("plot.csv"),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        RunConfig::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut seen: Vec<&str> = Vec::new();
        let mut wells = None;
        let mut climate = None;
        let mut cfg = RunConfig::with_inputs("", "");
        let mut model_out = None;
        let mut report_out = None;
        let mut plot_out = None;

        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {lineno}: expected 'key = value', got '{line}'"
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let key = *KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| Error::Config(format!("line {lineno}: unknown key '{key}'")))?;
            if seen.contains(&key) {
                return Err(Error::Config(format!(
                    "line {lineno}: duplicate key '{key}'"
                )));
            }
            seen.push(key);
            if value.is_empty() {
                return Err(Error::Config(format!(
                    "line {lineno}: empty value for '{key}'"
                )));
            }
            let ctx = |e: Error| match e {
                Error::Config(msg) => Error::Config(format!("line {lineno}: {msg}")),
                other => other,
            };
            match key {
                "wells_csv" => wells = Some(base_dir.join(value)),
                "climate_csv" => climate = Some(base_dir.join(value)),
                "model_out" => model_out = Some(base_dir.join(value)),
                "report_out" => report_out = Some(base_dir.join(value)),
                "plot_out" => plot_out = Some(base_dir.join(value)),
                "hidden_size" => cfg.hidden_size = num(key, value).map_err(ctx)?,
                "lags" => cfg.lags = num(key, value).map_err(ctx)?,
                "epochs" => cfg.epochs = num(key, value).map_err(ctx)?,
                "seed" => cfg.seed = num(key, value).map_err(ctx)?,
                "eta" => cfg.hyper.eta = num(key, value).map_err(ctx)?,
                "beta1" => cfg.hyper.beta1 = num(key, value).map_err(ctx)?,
                "beta2" => cfg.hyper.beta2 = num(key, value).map_err(ctx)?,
                "epsilon" => cfg.hyper.epsilon = num(key, value).map_err(ctx)?,
                "split_fraction" => cfg.split_fraction = num(key, value).map_err(ctx)?,
                "output_activation" => cfg.output_activation = value.parse().map_err(ctx)?,
                "optimizer" => cfg.optimizer = value.parse().map_err(ctx)?,
                "batch" => cfg.batch = value.parse().map_err(ctx)?,
                "split_mode" => cfg.split_mode = value.parse().map_err(ctx)?,
                "scaling" => cfg.scaling = value.parse().map_err(ctx)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }

        cfg.wells_csv = wells.ok_or_else(|| Error::Config("missing key 'wells_csv'".into()))?;
        cfg.climate_csv =
            climate.ok_or_else(|| Error::Config("missing key 'climate_csv'".into()))?;
        cfg.model_out = model_out.unwrap_or_else(|| base_dir.join(&cfg.model_out));
        cfg.report_out = report_out.unwrap_or_else(|| base_dir.join(&cfg.report_out));
        cfg.plot_out = plot_out.unwrap_or_else(|| base_dir.join(&cfg.plot_out));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be >= 1".into()));
        }
        if self.lags == 0 {
            return Err(Error::Config("lags must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        self.hyper.validate()?;
        if self.output_activation == Activation::Relu && self.scaling != ScalerKind::MinMax {
            return Err(Error::Config(
                "output_activation = relu requires scaling = minmax".into(),
            ));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        vec![2 + self.lags, self.hidden_size, 1]
    }

    /// Model, data and training settings in a fixed textual form. Paths are
    /// left out; input files enter fingerprints through their contents.
    pub fn canonical(&self) -> String {
        format!(
            "hidden_size={}\noutput_activation={}\nlags={}\noptimizer={}\neta={:?}\nbeta1={:?}\n\
             beta2={:?}\nepsilon={:?}\nepochs={}\nbatch={}\nseed={}\nsplit_fraction={:?}\n\
             split_mode={}\nscaling={}\n",
            self.hidden_size,
            self.output_activation,
            self.lags,
            self.optimizer,
            self.hyper.eta,
            self.hyper.beta1,
            self.hyper.beta2,
            self.hyper.epsilon,
            self.epochs,
            self.batch,
            self.seed,
            self.split_fraction,
            self.split_mode.as_str(),
            self.scaling.as_str(),
        )
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "wells_csv = w.csv\nclimate_csv = c.csv\n";

    #[test]
    fn defaults() {
        let c = RunConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.wells_csv, PathBuf::from("/data/w.csv"));
        assert_eq!(c.hidden_size, 500);
        assert_eq!(c.output_activation, Activation::Linear);
        assert_eq!(c.lags, 1);
        assert_eq!(c.optimizer, OptimizerKind::Adam);
        assert_eq!(c.hyper, AdamHyper::default());
        assert_eq!(c.epochs, 2000);
        assert_eq!(c.batch, BatchSize::Full);
        assert_eq!(c.seed, 42);
        assert_eq!(c.split_fraction, 0.8);
        assert_eq!(c.split_mode, SplitMode::Chronological);
        assert_eq!(c.scaling, ScalerKind::ZScore);
        assert_eq!(c.model_out, PathBuf::from("/data/model.mlp"));
        assert_eq!(c.layer_sizes(), vec![3, 500, 1]);
    }

    #[test]
    fn full_config() {
        let text = "# experiment\nwells_csv=/abs/w.csv\nclimate_csv = c.csv\nhidden_size = 8\n\
                    output_activation = relu\nscaling = minmax\nlags = 3\noptimizer = sgd\n\
                    eta = 0.01\nbeta1 = 0.8\nbeta2 = 0.99\nepsilon = 1e-7\nepochs = 10\nbatch = 16\n\
                    seed = 7\nsplit_fraction = 0.75\nsplit_mode = random\nmodel_out = m.txt\n\
                    report_out = r.csv\nplot_out = p.csv\n";
        let c = RunConfig::parse(text, Path::new("base")).unwrap();
        assert_eq!(c.wells_csv, PathBuf::from("/abs/w.csv"));
        assert_eq!(c.layer_sizes(), vec![5, 8, 1]);
        assert_eq!(c.batch, BatchSize::Mini(16));
        assert_eq!(c.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.hyper.epsilon, 1e-7);
        assert_eq!(c.split_mode, SplitMode::Random);
        assert_eq!(c.plot_out, PathBuf::from("base/p.csv"));
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        for bad in [
            "hiden_size = 5",
            "hidden_size = 0",
            "hidden_size = five",
            "eta = -1",
            "beta1 = 1.0",
            "split_fraction = 1",
            "optimizer = rmsprop",
            "output_activation = relu",
            "batch = 0",
            "lags",
            "seed = -1",
            "wells_csv = again.csv",
        ] {
            let text = format!("{MINIMAL}{bad}\n");
            let err = RunConfig::parse(&text, Path::new(".")).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
        }
        assert!(RunConfig::parse("wells_csv = w.csv\n", Path::new(".")).is_err());
    }

    #[test]
    fn canonical_tracks_settings() {
        let a = RunConfig::parse(MINIMAL, Path::new("x")).unwrap();
        let b = RunConfig::parse(MINIMAL, Path::new("y")).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        let c = RunConfig::parse(&format!("{MINIMAL}seed = 1\n"), Path::new("x")).unwrap();
        assert_ne!(a.canonical(), c.canonical());
    }
}
