use fredf::data::{self, prepare, synthetic_band_dataset, SplitSpec, SyntheticSpec};
use fredf::eval;
use fredf::model::{self, Checkpoint, ExecMode, ModelConfig};
use fredf::training::{self, TrainConfig};
use fredf::Error;

fn small() -> (ModelConfig, TrainConfig) {
    (
        ModelConfig {
            lookback: 24,
            horizon: 12,
            channels: 2,
            dim: 4,
            layers: 1,
            dropout: 0.0,
            hidden: None,
        },
        TrainConfig {
            max_epochs: 2,
            lr: 1e-3,
            ..TrainConfig::default()
        },
    )
}

#[test]
fn csv_to_checkpoint_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        rows: 600,
        ..SyntheticSpec::noise_band_default()
    };
    let series = synthetic_band_dataset(11, &spec).unwrap();
    let csv = dir.path().join("series.csv");
    data::write_csv(&series.table, &csv).unwrap();

    let table = data::load_csv(&csv).unwrap();
    assert_eq!(table.values, series.table.values);
    let (mcfg, tcfg) = small();
    let d = prepare(&table, SplitSpec::fractional(table.rows()), 24, 12).unwrap();
    let (params, report) = training::train(&d.train, &d.val, &tcfg, &mcfg).unwrap();
    assert_eq!(report.epochs.len(), 2);

    let ck = Checkpoint {
        config: mcfg.clone(),
        params: params.clone(),
        stats: Some(d.stats.clone()),
    };
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);

    let a = eval::evaluate(&params, &d.test, &mcfg, ExecMode::Fast).unwrap();
    let b = eval::evaluate(&back.params, &d.test, &back.config, ExecMode::Fast).unwrap();
    assert_eq!(a, b);
    let raw = eval::evaluate_scaled(&back.params, &d.test, &back.config, ExecMode::Fast, back.stats.as_ref()).unwrap();
    assert!(raw.mse > 0.0 && raw.mse.is_finite());
}

#[test]
fn windows_never_cross_split_boundaries() {
    let spec = SyntheticSpec {
        rows: 200,
        ..SyntheticSpec::noise_band_default()
    };
    let s = synthetic_band_dataset(1, &spec).unwrap();
    let split = SplitSpec {
        train: 120,
        val: 40,
        test: 40,
    };
    let d = prepare(&s.table, split, 16, 8).unwrap();
    assert_eq!(d.train.len(), data::window_count(120, 16, 8));
    assert!(d.train.iter().all(|w| w.origin + 24 <= 120));
    assert!(d.val.iter().all(|w| w.origin >= 120 && w.origin + 24 <= 160));
    assert!(d.test.iter().all(|w| w.origin >= 160 && w.origin + 24 <= 200));
}

#[test]
fn mismatched_checkpoint_config_is_rejected() {
    let (mcfg, _) = small();
    let params = model::init_parameters(&mcfg, 0).unwrap();
    let other = ModelConfig {
        dim: 5,
        ..mcfg.clone()
    };
    let ck = Checkpoint {
        config: other,
        params,
        stats: None,
    };
    let mut buf = Vec::new();
    assert!(matches!(ck.write_to(&mut buf), Err(Error::Config(_))));
}

#[test]
fn predictions_are_reproducible_across_runs() {
    let spec = SyntheticSpec {
        rows: 500,
        ..SyntheticSpec::noise_band_default()
    };
    let s = synthetic_band_dataset(3, &spec).unwrap();
    let (mcfg, tcfg) = small();
    let d = prepare(&s.table, SplitSpec::fractional(500), 24, 12).unwrap();
    let (p1, _) = training::train(&d.train, &d.val, &tcfg, &mcfg).unwrap();
    let (p2, _) = training::train(&d.train, &d.val, &tcfg, &mcfg).unwrap();
    let a = eval::predict(&p1, &d.test, &mcfg, ExecMode::Fast).unwrap();
    let b = eval::predict(&p2, &d.test, &mcfg, ExecMode::Fast).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), d.test.len());
}
