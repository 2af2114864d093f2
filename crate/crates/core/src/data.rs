//! Ingestion of well and climate series, well aggregation, lag windowing,
//! train/test splitting and feature/target scaling.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// A calendar month, `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn next(self) -> Self {
        self.add_months(1)
    }

    pub fn add_months(self, n: i64) -> Self {
        let idx = self.index() + n;
        YearMonth {
            year: idx.div_euclid(12) as i32,
            month: idx.rem_euclid(12) as u32 + 1,
        }
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    /// Whole months from `self` to `later`.
    pub fn months_until(self, later: YearMonth) -> i64 {
        later.index() - self.index()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid date '{s}' (expected YYYY-MM)");
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellSeries {
    pub well_id: String,
    pub timestamps: Vec<YearMonth>,
    /// Meters above sea level.
    pub levels: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimateSeries {
    pub timestamps: Vec<YearMonth>,
    /// °C
    pub temperature: Vec<f64>,
    /// mm/month
    pub precipitation: Vec<f64>,
}

impl ClimateSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn position(&self, month: YearMonth) -> Option<usize> {
        self.timestamps.binary_search(&month).ok()
    }

    /// The contiguous sub-series covering exactly `grid`.
    pub fn restrict_to(&self, grid: &[YearMonth]) -> Result<ClimateSeries> {
        let (first, last) = match (grid.first(), grid.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(Error::EmptyData("empty timestamp grid".into())),
        };
        let (start, end) = match (self.position(first), self.position(last)) {
            (Some(s), Some(e)) => (s, e + 1),
            _ => {
                return Err(Error::Alignment(format!(
                    "climate series does not cover {first}..{last}"
                )))
            }
        };
        if self.timestamps[start..end] != *grid {
            return Err(Error::Alignment(format!(
                "climate months differ from the well grid within {first}..{last}"
            )));
        }
        Ok(ClimateSeries {
            timestamps: grid.to_vec(),
            temperature: self.temperature[start..end].to_vec(),
            precipitation: self.precipitation[start..end].to_vec(),
        })
    }
}

pub const WELLS_COLUMNS: [&str; 4] = ["well_id", "date", "level_masl", "weight"];
pub const CLIMATE_COLUMNS: [&str; 3] = ["date", "temp_c", "precip_mm"];
pub const TARGET_NAME: &str = "level_masl";

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn column_indices<const N: usize>(
    headers: &csv::StringRecord,
    wanted: [&str; N],
    source: &str,
) -> Result<[usize; N]> {
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(wanted) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_owned(),
                path: source.to_owned(),
            })?;
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        row,
        msg: e.to_string(),
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<&'a str> {
    rec.get(idx).ok_or_else(|| Error::Parse {
        row,
        msg: format!("missing value for '{name}'"),
    })
}

fn parse_num(s: &str, row: usize, name: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("non-numeric {name} '{s}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            msg: format!("non-finite {name} '{s}'"),
        });
    }
    Ok(v)
}

fn parse_date(s: &str, row: usize) -> Result<YearMonth> {
    s.parse().map_err(|msg| Error::Parse { row, msg })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Checks strictly increasing, gap-free monthly spacing.
fn check_monthly(series: &str, timestamps: &[YearMonth]) -> Result<()> {
    for pair in timestamps.windows(2) {
        let step = pair[0].months_until(pair[1]);
        if step == 0 {
            return Err(Error::Temporal {
                series: series.to_owned(),
                date: pair[1].to_string(),
                msg: "duplicate month".into(),
            });
        }
        if step != 1 {
            return Err(Error::Temporal {
                series: series.to_owned(),
                date: pair[1].to_string(),
                msg: format!("gap after {} (months must be consecutive)", pair[0]),
            });
        }
    }
    Ok(())
}

pub fn load_wells_csv(path: impl AsRef<Path>) -> Result<Vec<WellSeries>> {
    let path = path.as_ref();
    parse_wells_csv(open(path)?, &path.display().to_string())
}

/// Parses the wells CSV; `source` names the input in diagnostics.
///
/// Wells keep the order of their first appearance. Rows of one well may be
/// interleaved with others and need not be sorted.
pub fn parse_wells_csv<R: Read>(input: R, source: &str) -> Result<Vec<WellSeries>> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let [id_i, date_i, level_i, weight_i] = column_indices(&headers, WELLS_COLUMNS, source)?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<(YearMonth, f64)>, f64)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let id = field(&rec, id_i, row, "well_id")?;
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                msg: "empty well_id".into(),
            });
        }
        let date = parse_date(field(&rec, date_i, row, "date")?, row)?;
        let level = parse_num(field(&rec, level_i, row, "level_masl")?, row, "level")?;
        let weight = parse_num(field(&rec, weight_i, row, "weight")?, row, "weight")?;
        if weight < 0.0 {
            return Err(Error::Parse {
                row,
                msg: format!("negative weight {weight} for well '{id}'"),
            });
        }
        match rows.get_mut(id) {
            Some((points, w)) => {
                if *w != weight {
                    return Err(Error::Parse {
                        row,
                        msg: format!("weight {weight} for well '{id}' differs from earlier {w}"),
                    });
                }
                points.push((date, level));
            }
            None => {
                order.push(id.to_owned());
                rows.insert(id.to_owned(), (vec![(date, level)], weight));
            }
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyData(format!("no well rows in {source}")));
    }

    order
        .into_iter()
        .map(|id| {
            let (mut points, weight) = rows.remove(&id).expect("id recorded on insert");
            points.sort_by_key(|&(d, _)| d);
            let timestamps: Vec<YearMonth> = points.iter().map(|&(d, _)| d).collect();
            check_monthly(&id, &timestamps)?;
            Ok(WellSeries {
                well_id: id,
                timestamps,
                levels: points.into_iter().map(|(_, l)| l).collect(),
                weight,
            })
        })
        .collect()
}

pub fn load_climate_csv(path: impl AsRef<Path>) -> Result<ClimateSeries> {
    let path = path.as_ref();
    parse_climate_csv(open(path)?, &path.display().to_string())
}

/// Parses the climate CSV. Rows must already be in chronological order.
pub fn parse_climate_csv<R: Read>(input: R, source: &str) -> Result<ClimateSeries> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let [date_i, temp_i, precip_i] = column_indices(&headers, CLIMATE_COLUMNS, source)?;
    let mut series = ClimateSeries {
        timestamps: Vec::new(),
        temperature: Vec::new(),
        precipitation: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        series
            .timestamps
            .push(parse_date(field(&rec, date_i, row, "date")?, row)?);
        series.temperature.push(parse_num(
            field(&rec, temp_i, row, "temp_c")?,
            row,
            "temperature",
        )?);
        series.precipitation.push(parse_num(
            field(&rec, precip_i, row, "precip_mm")?,
            row,
            "precipitation",
        )?);
    }
    if series.is_empty() {
        return Err(Error::EmptyData(format!("no climate rows in {source}")));
    }
    check_monthly("climate", &series.timestamps)?;
    Ok(series)
}

/// Wells CSV text with the standard header; values round-trip exactly.
pub fn wells_to_csv(wells: &[WellSeries]) -> String {
    let mut out = WELLS_COLUMNS.join(",");
    out.push('\n');
    for w in wells {
        for (d, l) in w.timestamps.iter().zip(&w.levels) {
            out.push_str(&format!("{},{d},{l:?},{:?}\n", w.well_id, w.weight));
        }
    }
    out
}

pub fn climate_to_csv(climate: &ClimateSeries) -> String {
    let mut out = CLIMATE_COLUMNS.join(",");
    out.push('\n');
    for i in 0..climate.len() {
        out.push_str(&format!(
            "{},{:?},{:?}\n",
            climate.timestamps[i], climate.temperature[i], climate.precipitation[i]
        ));
    }
    out
}

/// Weighted mean level per month: `Σ wᵢ levelᵢ / Σ wᵢ`.
pub fn aggregate_weighted(wells: &[WellSeries]) -> Result<(Vec<YearMonth>, Vec<f64>)> {
    let first = wells
        .first()
        .ok_or_else(|| Error::EmptyData("no wells to aggregate".into()))?;
    for w in wells {
        if w.levels.len() != w.timestamps.len() {
            return Err(Error::Alignment(format!(
                "well '{}' has {} levels for {} months",
                w.well_id,
                w.levels.len(),
                w.timestamps.len()
            )));
        }
        if w.timestamps != first.timestamps {
            return Err(Error::Alignment(format!(
                "well '{}' does not share the month grid of well '{}'",
                w.well_id, first.well_id
            )));
        }
    }
    let total: f64 = wells.iter().map(|w| w.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Config("well weights sum to zero".into()));
    }
    let levels = (0..first.timestamps.len())
        .map(|t| wells.iter().map(|w| w.weight * w.levels[t]).sum::<f64>() / total)
        .collect();
    Ok((first.timestamps.clone(), levels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub timestamps: Vec<YearMonth>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        y: Matrix,
        timestamps: Vec<YearMonth>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if y.cols() != 1 || y.rows() != x.rows() || timestamps.len() != x.rows() {
            return Err(Error::shape(
                "Dataset",
                format!("x {} with {} timestamps", x.shape_str(), timestamps.len()),
                format!("y {}", y.shape_str()),
            ));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::shape(
                "Dataset",
                format!("{} feature columns", x.cols()),
                format!("{} feature names", feature_names.len()),
            ));
        }
        Ok(Dataset {
            x,
            y,
            timestamps,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn targets(&self) -> &[f64] {
        self.y.data()
    }

    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::EmptyData("selection of zero rows".into()));
        }
        Ok(Dataset {
            x: self.x.select_rows(rows)?,
            y: self.y.select_rows(rows)?,
            timestamps: rows.iter().map(|&i| self.timestamps[i]).collect(),
            feature_names: self.feature_names.clone(),
        })
    }
}

pub fn lag_feature_names(lags: usize) -> Vec<String> {
    let mut names = vec!["temp_c".to_owned(), "precip_mm".to_owned()];
    names.extend((1..=lags).map(|k| format!("level_lag{k}")));
    names
}

/// One feature row: `[temp, precip, level_{t-1}, ..., level_{t-lags}]`.
///
/// `history` ends with the most recent level.
pub fn lag_row(temp: f64, precip: f64, history: &[f64], lags: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + lags);
    row.push(temp);
    row.push(precip);
    row.extend(history.iter().rev().take(lags));
    row
}

/// Lagged supervised examples: for each month `t >= lags`, features
/// `[temp_t, precip_t, level_{t-1}, ..., level_{t-lags}]` and target `level_t`.
pub fn build_supervised(
    climate: &ClimateSeries,
    agg_timestamps: &[YearMonth],
    agg_levels: &[f64],
    lags: usize,
) -> Result<Dataset> {
    if lags == 0 {
        return Err(Error::Config("lags must be >= 1".into()));
    }
    if agg_levels.len() != agg_timestamps.len() {
        return Err(Error::Alignment(format!(
            "{} levels for {} months",
            agg_levels.len(),
            agg_timestamps.len()
        )));
    }
    if climate.timestamps != agg_timestamps
        || climate.temperature.len() != climate.len()
        || climate.precipitation.len() != climate.len()
    {
        return Err(Error::Alignment(
            "climate and aggregated level series do not share a month grid".into(),
        ));
    }
    let n = agg_levels.len();
    if n <= lags {
        return Err(Error::EmptyData(format!(
            "series of {n} months is too short for {lags} lag(s)"
        )));
    }
    let width = 2 + lags;
    let mut x = Vec::with_capacity((n - lags) * width);
    for t in lags..n {
        x.extend(lag_row(
            climate.temperature[t],
            climate.precipitation[t],
            &agg_levels[t - lags..t],
            lags,
        ));
    }
    Dataset::new(
        Matrix::new(n - lags, width, x)?,
        Matrix::column(&agg_levels[lags..])?,
        agg_timestamps[lags..].to_vec(),
        lag_feature_names(lags),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Chronological,
    Random,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Chronological => "chronological",
            SplitMode::Random => "random",
        }
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chronological" => Ok(SplitMode::Chronological),
            "random" => Ok(SplitMode::Random),
            other => Err(Error::Config(format!(
                "unknown split mode '{other}' (expected chronological or random)"
            ))),
        }
    }
}

/// Row indices of the train and test partitions.
///
/// The train partition holds `floor(fraction · N)` rows. In random mode the
/// rows are drawn by a seeded shuffle; both partitions are then listed in
/// chronological order.
pub fn split_indices(
    n: usize,
    fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_train = (fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "split fraction {fraction} of {n} rows leaves an empty partition"
        )));
    }
    match mode {
        SplitMode::Chronological => Ok(((0..n_train).collect(), (n_train..n).collect())),
        SplitMode::Random => {
            let mut perm: Vec<usize> = (0..n).collect();
            RngState::new(seed).shuffle(&mut perm);
            let mut train = perm[..n_train].to_vec();
            let mut test = perm[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Ok((train, test))
        }
    }
}

pub fn split_dataset(
    ds: &Dataset,
    fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), fraction, mode, seed)?;
    Ok((ds.select(&train)?, ds.select(&test)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerKind {
    ZScore,
    MinMax,
}

impl ScalerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalerKind::ZScore => "zscore",
            ScalerKind::MinMax => "minmax",
        }
    }
}

impl FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(ScalerKind::ZScore),
            "minmax" => Ok(ScalerKind::MinMax),
            other => Err(Error::Config(format!(
                "unknown scaling '{other}' (expected zscore or minmax)"
            ))),
        }
    }
}

/// Per-column affine map `(x - offset) / spread`.
///
/// For `zscore`, offset is the mean and spread the population standard
/// deviation. For `minmax`, offset is the minimum and spread `max - min`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub feature_offset: Vec<f64>,
    pub feature_spread: Vec<f64>,
    pub target_offset: f64,
    pub target_spread: f64,
}

fn column_stats(kind: ScalerKind, values: &[f64], name: &str) -> Result<(f64, f64)> {
    let n = values.len() as f64;
    match kind {
        ScalerKind::ZScore => {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) {
                return Err(Error::Degenerate {
                    column: name.to_owned(),
                    msg: "zero variance under zscore scaling".into(),
                });
            }
            Ok((mean, std))
        }
        ScalerKind::MinMax => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(max > min) {
                return Err(Error::Degenerate {
                    column: name.to_owned(),
                    msg: "constant column under minmax scaling".into(),
                });
            }
            Ok((min, max - min))
        }
    }
}

/// Fits column statistics on the training partition only.
pub fn fit_scaler(train: &Dataset, kind: ScalerKind) -> Result<Scaler> {
    if train.is_empty() {
        return Err(Error::EmptyData("cannot fit a scaler on zero rows".into()));
    }
    let mut feature_offset = Vec::with_capacity(train.num_features());
    let mut feature_spread = Vec::with_capacity(train.num_features());
    for (j, name) in train.feature_names.iter().enumerate() {
        let col: Vec<f64> = (0..train.len()).map(|i| train.x.get(i, j)).collect();
        let (o, s) = column_stats(kind, &col, name)?;
        feature_offset.push(o);
        feature_spread.push(s);
    }
    let (target_offset, target_spread) = column_stats(kind, train.y.data(), TARGET_NAME)?;
    Ok(Scaler {
        kind,
        feature_offset,
        feature_spread,
        target_offset,
        target_spread,
    })
}

impl Scaler {
    pub fn num_features(&self) -> usize {
        self.feature_offset.len()
    }

    pub fn scale_features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.num_features() {
            return Err(Error::shape(
                "apply_scaler",
                format!("{} fitted columns", self.num_features()),
                x.shape_str(),
            ));
        }
        let cols = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| (v - self.feature_offset[k % cols]) / self.feature_spread[k % cols])
            .collect();
        Matrix::new(x.rows(), cols, data)
    }

    pub fn scale_target(&self, y: &Matrix) -> Result<Matrix> {
        self.check_target(y)?;
        Ok(y.map(|v| (v - self.target_offset) / self.target_spread))
    }

    /// Maps scaled targets back to original units.
    pub fn invert_target(&self, y_scaled: &Matrix) -> Result<Matrix> {
        self.check_target(y_scaled)?;
        Ok(y_scaled.map(|v| v * self.target_spread + self.target_offset))
    }

    fn check_target(&self, y: &Matrix) -> Result<()> {
        if y.cols() != 1 {
            return Err(Error::shape("scaler target", "Nx1", y.shape_str()));
        }
        Ok(())
    }
}

pub fn apply_scaler(s: &Scaler, ds: &Dataset) -> Result<Dataset> {
    Ok(Dataset {
        x: s.scale_features(&ds.x)?,
        y: s.scale_target(&ds.y)?,
        timestamps: ds.timestamps.clone(),
        feature_names: ds.feature_names.clone(),
    })
}

pub fn invert_scaler(s: &Scaler, y_scaled: &Matrix) -> Result<Matrix> {
    s.invert_target(y_scaled)
}
