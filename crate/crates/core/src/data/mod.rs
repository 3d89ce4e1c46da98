//! Dataset ingestion, chronological splits, z-scoring and window construction.

mod synthetic;

pub use synthetic::{synthetic_band_dataset, SyntheticSeries, SyntheticSpec, Tone};

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealTensor;
use crate::spectral::{self, BandSpec};

/// A multivariate series, rows in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub timestamps: Option<Vec<String>>,
    /// `rows x C`
    pub values: RealTensor,
    pub channels: Vec<String>,
    /// Row index of the first row within the source file.
    pub start_row: usize,
}

impl SeriesTable {
    pub fn new(values: RealTensor, channels: Vec<String>) -> Result<Self> {
        if values.shape().len() != 2 || values.cols() != channels.len() {
            return Err(Error::shape(
                "series",
                format!("{:?} values with {} channel names", values.shape(), channels.len()),
            ));
        }
        Ok(Self {
            timestamps: None,
            values,
            channels,
            start_row: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    /// Rows `start..end` as a new table.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Ok(Self {
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
            values: self.values.slice_rows(start, end)?,
            channels: self.channels.clone(),
            start_row: self.start_row + start,
        })
    }
}

/// Contiguous train / validation / test row counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSpec {
    /// Standard split sizes of the standard long-horizon benchmarks.
    pub fn for_dataset(name: &str) -> Option<SplitSpec> {
        let s = |train, val, test| Some(SplitSpec { train, val, test });
        match name.to_ascii_lowercase().as_str() {
            "etth1" | "etth2" => s(8545, 2881, 2881),
            "ettm1" | "ettm2" => s(34465, 11521, 11521),
            "exchange" | "exchange_rate" => s(5120, 665, 1422),
            "weather" => s(36792, 5271, 10540),
            "ecl" | "electricity" => s(18317, 2633, 5261),
            "solar" | "solar-energy" | "solar_al" => s(36601, 5161, 10417),
            _ => None,
        }
    }

    /// 70 / 10 / 20 split of `rows`.
    pub fn fractional(rows: usize) -> SplitSpec {
        let train = rows * 7 / 10;
        let test = rows * 2 / 10;
        SplitSpec {
            train,
            val: rows - train - test,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// One training example: `T x C` input and the `S x C` rows that follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub x: RealTensor,
    pub y: RealTensor,
    /// Source row of `x`'s first row.
    pub origin: usize,
}

/// Reads a comma-separated file; see [`parse_csv`].
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_csv(file)
}

/// Parses a header row followed by numeric rows. A first column named `date`
/// (any case), or whose first cell is not numeric, is kept as timestamps.
pub fn parse_csv<R: Read>(reader: R) -> Result<SeriesTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::Empty("CSV has no header".into()));
    }
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(Error::Empty("CSV has a header but no data rows".into()));
    }
    let has_time = headers[0].eq_ignore_ascii_case("date")
        || records[0].get(0).is_some_and(|c| c.parse::<f64>().is_err());
    let first = usize::from(has_time);
    let channels: Vec<String> = headers[first..].to_vec();
    if channels.is_empty() {
        return Err(Error::Empty("CSV has no value columns".into()));
    }
    let mut values = Vec::with_capacity(records.len() * channels.len());
    let mut stamps = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        // row numbers are 1-based data rows, header excluded
        let row = i + 1;
        if rec.len() != headers.len() {
            return Err(Error::Ingest {
                row,
                column: rec.len().min(headers.len()),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        if has_time {
            stamps.push(rec[0].to_string());
        }
        for (j, cell) in rec.iter().enumerate().skip(first) {
            let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                row,
                column: j,
                message: if cell.is_empty() {
                    "missing value".into()
                } else {
                    format!("non-numeric cell `{cell}`")
                },
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row,
                    column: j,
                    message: format!("non-finite value `{cell}`"),
                });
            }
            values.push(v);
        }
    }
    let mut table = SeriesTable::new(
        RealTensor::new(vec![records.len(), channels.len()], values)?,
        channels,
    )?;
    if has_time {
        table.timestamps = Some(stamps);
    }
    Ok(table)
}

/// Writes a table as CSV (with a `date` column when timestamps exist).
pub fn write_csv(table: &SeriesTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = Vec::new();
    if table.timestamps.is_some() {
        header.push("date".to_string());
    }
    header.extend(table.channels.iter().cloned());
    w.write_record(&header)?;
    for r in 0..table.rows() {
        let mut rec = Vec::new();
        if let Some(ts) = &table.timestamps {
            rec.push(ts[r].clone());
        }
        rec.extend(table.values.row(r).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Three contiguous, non-overlapping segments in time order.
pub fn chronological_split(t: &SeriesTable, s: SplitSpec) -> Result<(SeriesTable, SeriesTable, SeriesTable)> {
    if s.total() > t.rows() {
        return Err(Error::Config(format!(
            "split {}+{}+{} exceeds {} rows",
            s.train,
            s.val,
            s.test,
            t.rows()
        )));
    }
    let a = s.train;
    let b = a + s.val;
    let c = b + s.test;
    Ok((t.slice(0, a)?, t.slice(a, b)?, t.slice(b, c)?))
}

pub fn fit_zscore(train: &SeriesTable) -> Result<NormStats> {
    let (n, c) = (train.rows(), train.channels());
    if n == 0 {
        return Err(Error::Empty("cannot fit normalization on zero rows".into()));
    }
    let mut mean = vec![0.0; c];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(train.values.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; c];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(train.values.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();
    if let Some(j) = std.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Numeric(format!(
            "channel `{}` has zero variance on the training split",
            train.channels[j]
        )));
    }
    Ok(NormStats { mean, std })
}

impl NormStats {
    fn check(&self, c: usize) -> Result<()> {
        if self.mean.len() != c || self.std.len() != c {
            return Err(Error::shape("zscore", format!("{} stats for {} channels", self.mean.len(), c)));
        }
        Ok(())
    }

    /// `(x - mean) / std` per column of an `N x C` matrix.
    pub fn normalize(&self, x: &RealTensor) -> Result<RealTensor> {
        self.check(x.cols())?;
        self.columnwise(x, |v, m, s| (v - m) / s)
    }

    /// `x * std + mean` per column of an `N x C` matrix.
    pub fn denormalize(&self, x: &RealTensor) -> Result<RealTensor> {
        self.check(x.cols())?;
        self.columnwise(x, |v, m, s| v * s + m)
    }

    fn columnwise(&self, x: &RealTensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<RealTensor> {
        let c = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % c], self.std[i % c]))
            .collect();
        RealTensor::new(x.shape().to_vec(), data)
    }
}

pub fn apply_zscore(t: &SeriesTable, stats: &NormStats) -> Result<SeriesTable> {
    Ok(SeriesTable {
        values: stats.normalize(&t.values)?,
        ..t.clone()
    })
}

pub fn invert_zscore(t: &SeriesTable, stats: &NormStats) -> Result<SeriesTable> {
    Ok(SeriesTable {
        values: stats.denormalize(&t.values)?,
        ..t.clone()
    })
}

/// Number of windows a table of `rows` yields.
pub fn window_count(rows: usize, lookback: usize, horizon: usize) -> usize {
    (rows + 1).saturating_sub(lookback + horizon)
}

/// Every `(T, S)` window, one per start row, in time order.
pub fn make_windows(t: &SeriesTable, lookback: usize, horizon: usize) -> Result<Vec<WindowPair>> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::Config("lookback and horizon must be positive".into()));
    }
    if t.rows() < lookback + horizon {
        return Err(Error::Empty(format!(
            "{} rows cannot hold a window of {} + {}",
            t.rows(),
            lookback,
            horizon
        )));
    }
    (0..window_count(t.rows(), lookback, horizon))
        .map(|i| {
            Ok(WindowPair {
                x: t.values.slice_rows(i, i + lookback)?,
                y: t.values.slice_rows(i + lookback, i + lookback + horizon)?,
                origin: t.start_row + i,
            })
        })
        .collect()
}

/// Normalized windows of all three splits plus the statistics fitted on train.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Vec<WindowPair>,
    pub val: Vec<WindowPair>,
    pub test: Vec<WindowPair>,
    pub stats: NormStats,
}

/// Split, fit z-scoring on the training rows only, normalize, then window each
/// split on its own.
pub fn prepare(t: &SeriesTable, split: SplitSpec, lookback: usize, horizon: usize) -> Result<Prepared> {
    let (tr, va, te) = chronological_split(t, split)?;
    let stats = fit_zscore(&tr)?;
    let w = |s: &SeriesTable| make_windows(&apply_zscore(s, &stats)?, lookback, horizon);
    Ok(Prepared {
        train: w(&tr)?,
        val: w(&va)?,
        test: w(&te)?,
        stats,
    })
}

/// Replaces every input window by its inverse transform after zeroing `band`
/// of its own `T/2 + 1` bins. Targets are left alone.
pub fn mask_band_inputs(pairs: &[WindowPair], band: BandSpec) -> Result<Vec<WindowPair>> {
    pairs
        .iter()
        .map(|p| {
            let s = spectral::rdft(&p.x)?;
            let masked = spectral::band_zero(&s, band)?;
            Ok(WindowPair {
                x: spectral::irdft(&masked),
                y: p.y.clone(),
                origin: p.origin,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn table(rows: usize, c: usize, seed: u64) -> SeriesTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SeriesTable::new(
            RealTensor::new(vec![rows, c], (0..rows * c).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap(),
            (0..c).map(|i| format!("c{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn csv_toy_and_errors() {
        let t = parse_csv("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6\n".as_bytes()).unwrap();
        assert_eq!(t.values.shape(), &[3, 2]);
        assert_eq!(t.timestamps.as_ref().unwrap()[2], "2020-01-03");
        assert_eq!(t.channels, vec!["a", "b"]);

        let t = parse_csv("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert!(t.timestamps.is_none());
        assert_eq!(t.values.data(), &[1.0, 2.0, 3.0, 4.0]);

        assert!(matches!(parse_csv("date,a,b\n".as_bytes()), Err(Error::Empty(_))));
        let e = parse_csv("a,b\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Ingest { row: 2, column: 1, .. }), "{e}");
        let e = parse_csv("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Ingest { row: 2, .. }), "{e}");
        let e = parse_csv("a,b\n1,\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("missing"));
    }

    #[test]
    fn seven_channel_file() {
        let mut s = String::from("date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n");
        for i in 0..5 {
            s.push_str(&format!("2016-07-01 0{i}:00:00,1,2,3,4,5,6,{i}\n"));
        }
        assert_eq!(parse_csv(s.as_bytes()).unwrap().channels(), 7);
    }

    #[test]
    fn split_examples() {
        let t = table(10, 1, 0);
        let (a, b, c) = chronological_split(&t, SplitSpec { train: 6, val: 2, test: 2 }).unwrap();
        assert_eq!((a.rows(), b.rows(), c.rows()), (6, 2, 2));
        assert_eq!((a.start_row, b.start_row, c.start_row), (0, 6, 8));
        assert_eq!(b.values.row(0), t.values.row(6));
        assert!(chronological_split(&t, SplitSpec { train: 11, val: 0, test: 0 }).is_err());
        assert_eq!(SplitSpec::for_dataset("ETTh1"), Some(SplitSpec { train: 8545, val: 2881, test: 2881 }));
    }

    #[test]
    fn zscore_examples() {
        let t = SeriesTable::new(RealTensor::new(vec![2, 1], vec![0.0, 2.0]).unwrap(), vec!["a".into()]).unwrap();
        let st = fit_zscore(&t).unwrap();
        assert_eq!((st.mean[0], st.std[0]), (1.0, 1.0));
        assert_eq!(apply_zscore(&t, &st).unwrap().values.data(), &[-1.0, 1.0]);

        let t = table(50, 3, 1);
        let st = fit_zscore(&t).unwrap();
        let back = invert_zscore(&apply_zscore(&t, &st).unwrap(), &st).unwrap();
        assert!(back.values.max_abs_diff(&t.values) < 1e-12);

        let c = SeriesTable::new(RealTensor::filled(&[4, 1], 3.0), vec!["flat".into()]).unwrap();
        assert!(matches!(fit_zscore(&c), Err(Error::Numeric(_))));
    }

    #[test]
    fn window_examples() {
        let t = table(24, 2, 2);
        assert_eq!(make_windows(&t, 16, 8).unwrap().len(), 1);
        assert!(make_windows(&table(23, 2, 2), 16, 8).is_err());
        assert_eq!(window_count(8545, 96, 96), 8354);
        let w = make_windows(&t, 4, 2).unwrap();
        assert_eq!(w.len(), 19);
        assert_eq!(w[3].x.row(0), t.values.row(3));
        assert_eq!(w[3].y.row(0), t.values.row(7));
    }

    #[test]
    fn windows_never_leak_across_splits() {
        let t = table(60, 1, 3);
        let (a, b, c) = chronological_split(&t, SplitSpec { train: 30, val: 12, test: 12 }).unwrap();
        let (wa, wb, wc) = (make_windows(&a, 4, 4).unwrap(), make_windows(&b, 4, 4).unwrap(), make_windows(&c, 4, 4).unwrap());
        let last = |w: &[WindowPair]| w.iter().map(|p| p.origin + 7).max().unwrap();
        let first = |w: &[WindowPair]| w.iter().map(|p| p.origin).min().unwrap();
        assert!(last(&wa) < first(&wb));
        assert!(last(&wb) < first(&wc));
    }

    #[test]
    fn masking_examples() {
        let t = table(20, 2, 4);
        let w = make_windows(&t, 8, 4).unwrap();
        let all = mask_band_inputs(&w, BandSpec { lo: 0, hi: 5 }).unwrap();
        assert!(all.iter().all(|p| p.x.max_abs() < 1e-12));
        assert_eq!(all[0].y, w[0].y);
        assert!(mask_band_inputs(&make_windows(&t, 7, 4).unwrap(), BandSpec { lo: 0, hi: 1 }).is_err());

        // a pure high-frequency input is untouched by zeroing the low band
        let n = 12;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * 5.0 * t as f64 / n as f64).cos()).collect();
        let pair = WindowPair { x: RealTensor::new(vec![n, 1], x.clone()).unwrap(), y: RealTensor::zeros(&[1, 1]), origin: 0 };
        let out = mask_band_inputs(&[pair], BandSpec { lo: 0, hi: 2 }).unwrap();
        assert!(out[0].x.max_abs_diff(&RealTensor::new(vec![n, 1], x).unwrap()) < 1e-10);
    }

    #[test]
    fn masking_high_band_recovers_low_component() {
        let n = 48;
        let low: Vec<f64> = (0..n).map(|t| 1.5 * (2.0 * PI * 2.0 * t as f64 / n as f64 + 0.3).sin()).collect();
        let high: Vec<f64> = (0..n).map(|t| 0.8 * (2.0 * PI * 20.0 * t as f64 / n as f64 - 1.1).cos()).collect();
        let x: Vec<f64> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
        let pair = WindowPair { x: RealTensor::new(vec![n, 1], x).unwrap(), y: RealTensor::zeros(&[1, 1]), origin: 0 };
        let part = spectral::band_partition(n / 2 + 1).unwrap();
        let out = mask_band_inputs(&[pair], part.high).unwrap();
        assert!(out[0].x.max_abs_diff(&RealTensor::new(vec![n, 1], low).unwrap()) < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn masking_is_idempotent(seed in 0u64..500, which in 0usize..3) {
            let t = table(40, 2, seed);
            let w = make_windows(&t, 16, 4).unwrap();
            let part = spectral::band_partition(9).unwrap();
            let band = [part.low, part.mid, part.high][which];
            let once = mask_band_inputs(&w, band).unwrap();
            let twice = mask_band_inputs(&once, band).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                proptest::prop_assert!(a.x.max_abs_diff(&b.x) < 1e-12);
            }
        }

        #[test]
        fn window_count_formula(rows in 1usize..200, t in 1usize..50, s in 1usize..50) {
            let tab = table(rows, 1, 0);
            match make_windows(&tab, t, s) {
                Ok(w) => proptest::prop_assert_eq!(w.len(), rows - t - s + 1),
                Err(_) => proptest::prop_assert!(rows < t + s),
            }
        }
    }
}
