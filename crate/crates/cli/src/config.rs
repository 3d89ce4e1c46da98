use std::path::{Path, PathBuf};

use fredf::data::{self, Prepared, SeriesTable, SplitSpec, SyntheticSpec};
use fredf::eval::Variant;
use fredf::model::ModelConfig;
use fredf::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::Common;

pub const SYNTHETIC: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV path, or `synthetic` for the generated noise-band series.
    pub path: String,
    /// Benchmark name used to pick the standard split; defaults to the file stem.
    pub name: Option<String>,
    pub split: Option<SplitSpec>,
    pub synthetic: Option<SyntheticSpec>,
    pub synthetic_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: SYNTHETIC.into(),
            name: None,
            split: None,
            synthetic: None,
            synthetic_seed: 7,
        }
    }
}

/// Everything a command needs; read from a TOML file, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub variant: Variant,
    pub out: PathBuf,
    /// Explicit seeds; when empty, `train.repeats` consecutive seeds from `train.seed`.
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            variant: Variant::Full,
            out: PathBuf::from("runs"),
            seeds: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn resolve(c: &Common) -> CliResult<Self> {
        let mut cfg = match &c.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(d) = &c.dataset {
            cfg.dataset.path = d.clone();
        }
        if let Some(v) = c.horizon {
            cfg.model.horizon = v;
        }
        if let Some(v) = c.lookback {
            cfg.model.lookback = v;
        }
        if let Some(v) = c.dim {
            cfg.model.dim = v;
        }
        if let Some(v) = c.layers {
            cfg.model.layers = v;
        }
        if let Some(v) = c.dropout {
            cfg.model.dropout = v;
        }
        if let Some(v) = c.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = c.epochs {
            cfg.train.max_epochs = v;
        }
        if !c.seeds.is_empty() {
            cfg.seeds = c.seeds.clone();
        }
        if let Some(v) = &c.variant {
            cfg.variant = v.parse()?;
        }
        if let Some(o) = &c.out {
            cfg.out = o.clone();
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.train.repeats.max(1) as u64).map(|i| self.train.seed + i).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.dataset.path == SYNTHETIC
    }

    /// Dataset identifier used in reports.
    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.dataset.name {
            return n.clone();
        }
        if self.is_synthetic() {
            return SYNTHETIC.into();
        }
        Path::new(&self.dataset.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.dataset.path.clone())
    }

    pub fn load_table(&self) -> CliResult<SeriesTable> {
        if self.is_synthetic() {
            let spec = self.dataset.synthetic.clone().unwrap_or_else(SyntheticSpec::noise_band_default);
            return Ok(data::synthetic_band_dataset(self.dataset.synthetic_seed, &spec)?.table);
        }
        let path = Path::new(&self.dataset.path);
        if !path.is_file() {
            return Err(CliError::Data(format!("dataset file not found: {}", path.display())));
        }
        Ok(data::load_csv(path)?)
    }

    pub fn split_for(&self, rows: usize) -> SplitSpec {
        self.dataset
            .split
            .or_else(|| SplitSpec::for_dataset(&self.dataset_name()).filter(|s| s.total() <= rows))
            .unwrap_or_else(|| SplitSpec::fractional(rows))
    }

    /// Loads, splits, normalizes and windows the dataset. The channel count is
    /// taken from the data.
    pub fn prepare(&mut self) -> CliResult<Prepared> {
        let table = self.load_table()?;
        self.model.channels = table.channels();
        self.model.validate()?;
        let split = self.split_for(table.rows());
        Ok(data::prepare(&table, split, self.model.lookback, self.model.horizon)?)
    }

    pub fn ensure_out(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::output(&self.out, e))
    }
}
