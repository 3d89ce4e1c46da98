//! Python bindings. Matrices cross the boundary as lists of rows, spectra as
//! lists of complex numbers, configs and reports as dicts.

use std::path::PathBuf;

use fredf::data::{self, NormStats, SeriesTable, SplitSpec, SyntheticSpec};
use fredf::eval;
use fredf::model::{self, Checkpoint, ExecMode, ModelConfig, ParameterSet};
use fredf::numerics::{ComplexTensor, RealTensor};
use fredf::spectral::{self, Spectrum};
use fredf::training::{self, TrainConfig};
use fredf::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) | Error::Divergence { .. } => PyArithmeticError::new_err(e.to_string()),
        Error::Checkpoint(_) | Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_dict<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<RealTensor> {
    RealTensor::from_rows(&rows).map_err(to_py)
}

fn rows_of(t: &RealTensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn mode(naive: bool) -> ExecMode {
    if naive {
        ExecMode::Naive
    } else {
        ExecMode::Fast
    }
}

/// Unnormalized real DFT of a sequence of even length; returns `n/2 + 1` bins.
#[pyfunction]
fn rdft(x: Vec<f64>) -> PyResult<Vec<Complex64>> {
    let n = x.len();
    let s = spectral::rdft(&RealTensor::new(vec![n, 1], x).map_err(to_py)?).map_err(to_py)?;
    Ok((0..s.bins()).map(|k| Complex64::new(s.coeffs.re.get(k, 0), s.coeffs.im.get(k, 0))).collect())
}

/// Inverse of `rdft` for a length-`n` sequence.
#[pyfunction]
fn irdft(coeffs: Vec<Complex64>, n: usize) -> PyResult<Vec<f64>> {
    let k = coeffs.len();
    let re = RealTensor::new(vec![k, 1], coeffs.iter().map(|c| c.re).collect()).map_err(to_py)?;
    let im = RealTensor::new(vec![k, 1], coeffs.iter().map(|c| c.im).collect()).map_err(to_py)?;
    let s = Spectrum::new(ComplexTensor::new(re, im).map_err(to_py)?, n).map_err(to_py)?;
    Ok(spectral::irdft(&s).into_data())
}

/// Low, mid and high bin ranges `(lo, hi)` of a spectrum with `bins` bins.
#[pyfunction]
fn band_partition(bins: usize) -> PyResult<[(usize, usize); 3]> {
    let p = spectral::band_partition(bins).map_err(to_py)?;
    Ok([(p.low.lo, p.low.hi), (p.mid.lo, p.mid.hi), (p.high.lo, p.high.hi)])
}

/// Sinusoids plus band-limited noise as a list of rows. `spec` overrides the
/// default (keys: rows, channels, tones, noise_band, snr).
#[pyfunction]
#[pyo3(signature = (seed = 7, spec = None))]
fn synthetic_series(seed: u64, spec: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<Vec<f64>>> {
    let spec = match spec {
        Some(d) => {
            let mut base = serde_json::to_value(SyntheticSpec::noise_band_default()).unwrap();
            let over: serde_json::Value = from_dict(d)?;
            if let (Some(b), Some(o)) = (base.as_object_mut(), over.as_object()) {
                b.extend(o.clone());
            }
            serde_json::from_value(base).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => SyntheticSpec::noise_band_default(),
    };
    let s = data::synthetic_band_dataset(seed, &spec).map_err(to_py)?;
    Ok(rows_of(&s.table.values))
}

/// A forecaster: configuration, parameters and (after `fit`) normalization stats.
#[pyclass(module = "fredf_py")]
struct Model {
    config: ModelConfig,
    params: ParameterSet,
    stats: Option<NormStats>,
}

#[pymethods]
impl Model {
    /// `config` is a dict of model fields; missing keys take their defaults.
    #[new]
    #[pyo3(signature = (config = None, seed = 0))]
    fn new(config: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<Self> {
        let config: ModelConfig = match config {
            Some(c) => from_dict(c)?,
            None => ModelConfig::default(),
        };
        let params = model::init_parameters(&config, seed).map_err(to_py)?;
        Ok(Self {
            config,
            params,
            stats: None,
        })
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.config)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Fusion weights of one block, one per frequency bin.
    fn fusion_weights(&self, layer: usize) -> PyResult<Vec<f64>> {
        self.params
            .fusion
            .layers
            .get(layer)
            .map(|w| w.data().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("layer {layer} out of range")))
    }

    /// Forecast `horizon` rows from a `lookback x channels` window (inference mode).
    #[pyo3(signature = (x, naive = false))]
    fn forward(&self, py: Python<'_>, x: Vec<Vec<f64>>, naive: bool) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x)?;
        let y = py
            .detach(|| model::forward(&x, &self.params, &self.config, mode(naive), None))
            .map_err(to_py)?;
        Ok(rows_of(&y))
    }

    /// Splits `series` (rows x channels) chronologically, z-scores on the training
    /// part, trains in place and returns the training report with test metrics.
    /// `split` is `(train, val, test)` row counts; default 70/10/20.
    #[pyo3(signature = (series, train_config = None, split = None))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        series: Vec<Vec<f64>>,
        train_config: Option<&Bound<'py, PyAny>>,
        split: Option<(usize, usize, usize)>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg: TrainConfig = match train_config {
            Some(c) => from_dict(c)?,
            None => TrainConfig::default(),
        };
        let values = matrix(series)?;
        let names = (0..values.cols()).map(|i| format!("ch{i}")).collect();
        let table = SeriesTable::new(values, names).map_err(to_py)?;
        let split = match split {
            Some((train, val, test)) => SplitSpec { train, val, test },
            None => SplitSpec::fractional(table.rows()),
        };
        let mcfg = self.config.clone();
        let params = self.params.clone();
        let (params, report, prepared, test) = py
            .detach(|| -> fredf::Result<_> {
                let p = data::prepare(&table, split, mcfg.lookback, mcfg.horizon)?;
                let (params, report) = training::train_from(params, &p.train, &p.val, &cfg, &mcfg, false)?;
                let test = eval::evaluate(&params, &p.test, &mcfg, cfg.mode)?;
                Ok((params, report, p, test))
            })
            .map_err(to_py)?;
        self.params = params;
        self.stats = Some(prepared.stats);
        let out = to_dict(py, &serde_json::json!({ "report": report, "test": test }))?;
        Ok(out)
    }

    /// Mean and standard deviation per channel fitted by the last `fit`.
    #[getter]
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.stats)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
            stats: self.stats.clone(),
        }
        .save(path)
        .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(path).map_err(to_py)?;
        Ok(Self {
            config: ck.config,
            params: ck.params,
            stats: ck.stats,
        })
    }

    fn __repr__(&self) -> String {
        let c = &self.config;
        format!(
            "Model(lookback={}, horizon={}, channels={}, dim={}, layers={}, params={})",
            c.lookback,
            c.horizon,
            c.channels,
            c.dim,
            c.layers,
            self.params.num_params()
        )
    }
}

#[pymodule]
fn fredf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(rdft, m)?)?;
    m.add_function(wrap_pyfunction!(irdft, m)?)?;
    m.add_function(wrap_pyfunction!(band_partition, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_series, m)?)?;
    Ok(())
}
