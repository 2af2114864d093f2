//! Regression metrics and the train/test/total report.

use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, Scaler};
use crate::error::{Error, Result};
use crate::network::{mlp_predict, MlpModel};

fn check_pair(pred: &[f64], obs: &[f64]) -> Result<()> {
    if pred.len() != obs.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} predictions", pred.len()),
            format!("{} observations", obs.len()),
        ));
    }
    if obs.is_empty() {
        return Err(Error::EmptyData("metrics on zero samples".into()));
    }
    if pred.iter().chain(obs).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("metrics on non-finite values".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let ss: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok(ss / obs.len() as f64)
}

pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    mse(pred, obs).map(f64::sqrt)
}

pub fn mae(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let s: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum();
    Ok(s / obs.len() as f64)
}

/// Coefficient of determination, `1 - SS_res / SS_tot`, with `SS_tot`
/// taken about the mean of `obs`.
pub fn r2(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let ss_tot: f64 = obs.iter().map(|o| (o - mean) * (o - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::Degenerate {
            column: "observed".into(),
            msg: "zero variance, R^2 undefined".into(),
        });
    }
    let ss_res: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Test,
    Total,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
            Partition::Total => "total",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Partition::Train => "Train",
            Partition::Test => "Test",
            Partition::Total => "Total",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Partition::Train),
            "test" => Ok(Partition::Test),
            "total" => Ok(Partition::Total),
            other => Err(format!("unknown partition '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub label: Partition,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
}

impl MetricsRow {
    pub fn compute(label: Partition, pred: &[f64], obs: &[f64]) -> Result<Self> {
        let mse = mse(pred, obs)?;
        Ok(MetricsRow {
            label,
            n: obs.len(),
            rmse: mse.sqrt(),
            mae: mae(pred, obs)?,
            mse,
            r2: r2(pred, obs)?,
        })
    }
}

pub const REPORT_HEADER: &str = "label,n,rmse,mae,mse,r2";
const FINGERPRINT_PREFIX: &str = "# fingerprint=";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Train, test, total, in that order.
    pub rows: [MetricsRow; 3],
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn row(&self, label: Partition) -> &MetricsRow {
        self.rows
            .iter()
            .find(|r| r.label == label)
            .expect("report holds all partitions")
    }

    pub fn train(&self) -> &MetricsRow {
        &self.rows[0]
    }

    pub fn test(&self) -> &MetricsRow {
        &self.rows[1]
    }

    pub fn total(&self) -> &MetricsRow {
        &self.rows[2]
    }

    /// CSV form: header, three rows, then a `# fingerprint=` trailer line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?}\n",
                r.label, r.n, r.rmse, r.mae, r.mse, r.r2
            ));
        }
        out.push_str(FINGERPRINT_PREFIX);
        out.push_str(&self.fingerprint);
        out.push('\n');
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |row: usize, msg: String| Error::Parse { row, msg };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == REPORT_HEADER => {}
            _ => return Err(bad(1, format!("expected header '{REPORT_HEADER}'"))),
        }
        let mut rows = Vec::with_capacity(3);
        let mut fingerprint = None;
        for (i, line) in lines {
            let row = i + 1;
            if let Some(fp) = line.strip_prefix(FINGERPRINT_PREFIX) {
                fingerprint = Some(fp.to_owned());
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 6 {
                return Err(bad(row, format!("expected 6 fields, got {}", cells.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| bad(row, format!("'{s}': {e}")))
            };
            rows.push(MetricsRow {
                label: cells[0].parse().map_err(|e| bad(row, e))?,
                n: cells[1].parse().map_err(|e| bad(row, format!("n: {e}")))?,
                rmse: num(cells[2])?,
                mae: num(cells[3])?,
                mse: num(cells[4])?,
                r2: num(cells[5])?,
            });
        }
        let labels: Vec<Partition> = rows.iter().map(|r| r.label).collect();
        if labels != [Partition::Train, Partition::Test, Partition::Total] {
            return Err(bad(
                0,
                format!("expected train, test, total rows, got {labels:?}"),
            ));
        }
        let rows: [MetricsRow; 3] = rows.try_into().expect("length checked");
        Ok(MetricsReport {
            rows,
            fingerprint: fingerprint.ok_or_else(|| bad(0, "missing fingerprint line".into()))?,
        })
    }

    /// Fixed-width table in the column order RMSE, MAE, MSE, R^2, Amount, Model.
    pub fn render_table(&self) -> String {
        let total_n = self.total().n.max(1);
        let mut out = format!(
            "{:>10} {:>10} {:>10} {:>8} {:>7}  {}\n",
            "RMSE", "MAE", "MSE", "R^2", "Amount", "Model"
        );
        for r in &self.rows {
            let pct = (100.0 * r.n as f64 / total_n as f64).round();
            out.push_str(&format!(
                "{:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>6}%  {}\n",
                r.rmse,
                r.mae,
                r.mse,
                r.r2,
                pct,
                r.label.title()
            ));
        }
        out
    }
}

/// Predictions in original units for an unscaled dataset.
pub fn predict_original(model: &MlpModel, scaler: &Scaler, ds: &Dataset) -> Result<Vec<f64>> {
    let x = scaler.scale_features(&ds.x)?;
    let pred = mlp_predict(model, &x)?;
    Ok(scaler.invert_target(&pred)?.into_data())
}

/// Train/test/total metrics in original units.
///
/// `train` and `test` hold original-unit features and targets; features are
/// scaled with `scaler` before prediction and predictions are mapped back
/// through the inverse target scaling. The total row covers train followed
/// by test with a single observed mean.
pub fn evaluate_model(
    model: &MlpModel,
    scaler: &Scaler,
    train: &Dataset,
    test: &Dataset,
) -> Result<MetricsReport> {
    let p_train = predict_original(model, scaler, train)?;
    let p_test = predict_original(model, scaler, test)?;
    let p_all: Vec<f64> = p_train.iter().chain(&p_test).copied().collect();
    let o_all: Vec<f64> = train
        .targets()
        .iter()
        .chain(test.targets())
        .copied()
        .collect();
    Ok(MetricsReport {
        rows: [
            MetricsRow::compute(Partition::Train, &p_train, train.targets())?,
            MetricsRow::compute(Partition::Test, &p_test, test.targets())?,
            MetricsRow::compute(Partition::Total, &p_all, &o_all)?,
        ],
        fingerprint: String::new(),
    })
}
