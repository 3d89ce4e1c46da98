use super::*;
use crate::data::{make_windows, synthetic_band_dataset, SyntheticSpec};
use crate::model::ModelConfig;

fn t(rows: usize, cols: usize, v: &[f64]) -> RealTensor {
    RealTensor::new(vec![rows, cols], v.to_vec()).unwrap()
}

#[test]
fn loss_examples() {
    let p = t(1, 2, &[1.0, 2.0]);
    let z = t(1, 2, &[0.0, 0.0]);
    assert_eq!(mse_loss(&p, &z).unwrap(), 2.5);
    assert_eq!(mae(&p, &z).unwrap(), 1.5);
    assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
    assert!(mse_loss(&p, &t(2, 1, &[0.0, 0.0])).is_err());
}

#[test]
fn loss_matches_elementwise_oracle() {
    let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
    let b: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).cos()).collect();
    let mut se = 0.0;
    let mut ae = 0.0;
    for i in 0..12 {
        se += (a[i] - b[i]).powi(2);
        ae += (a[i] - b[i]).abs();
    }
    let (pa, pb) = (t(4, 3, &a), t(4, 3, &b));
    assert!((mse_loss(&pa, &pb).unwrap() - se / 12.0).abs() < 1e-15);
    assert!((mae(&pa, &pb).unwrap() - ae / 12.0).abs() < 1e-15);
}

#[test]
fn early_stopping_counts_validations_since_best() {
    let mut es = EarlyStopping::new(3);
    assert_eq!(es.observe(1.0), StopDecision::Improved);
    assert_eq!(es.observe(1.1), StopDecision::Continue);
    assert_eq!(es.observe(0.9), StopDecision::Improved);
    assert_eq!(es.observe(0.9), StopDecision::Continue);
    assert_eq!(es.observe(1.0), StopDecision::Continue);
    assert_eq!(es.observe(2.0), StopDecision::Stop);
    assert_eq!(es.best(), 0.9);
    assert_eq!(es.best_epoch(), Some(2));
}

fn tiny() -> (ModelConfig, Vec<WindowPair>) {
    let mcfg = ModelConfig {
        lookback: 16,
        horizon: 8,
        channels: 2,
        dim: 4,
        layers: 1,
        dropout: 0.0,
        hidden: None,
    };
    let spec = SyntheticSpec {
        rows: 64,
        ..SyntheticSpec::noise_band_default()
    };
    let s = synthetic_band_dataset(1, &spec).unwrap();
    (mcfg, make_windows(&s.table, 16, 8).unwrap())
}

#[test]
fn training_is_deterministic() {
    let (mcfg, w) = tiny();
    let cfg = TrainConfig {
        max_epochs: 2,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let a = train(&w[..20], &w[20..], &cfg, &mcfg).unwrap();
    let b = train(&w[..20], &w[20..], &cfg, &mcfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert!(a.1.wall_clock_secs.is_none());
    assert_eq!(a.1.total_steps, 10);
}

#[test]
fn dropout_training_is_deterministic() {
    let (mut mcfg, w) = tiny();
    mcfg.dropout = 0.2;
    let cfg = TrainConfig {
        max_epochs: 1,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    assert_eq!(train(&w[..20], &w[20..], &cfg, &mcfg).unwrap().0, train(&w[..20], &w[20..], &cfg, &mcfg).unwrap().0);
}

#[test]
fn frozen_groups_do_not_move() {
    let (mcfg, w) = tiny();
    let cfg = TrainConfig {
        max_epochs: 2,
        lr: 1e-2,
        freeze: Freeze {
            fusion: true,
            transfer: true,
        },
        ..TrainConfig::default()
    };
    let (p, _) = train(&w[..20], &w[20..], &cfg, &mcfg).unwrap();
    assert!(p.fusion.layers[0].data().iter().all(|&v| v == 1.0));
    assert_eq!(p.bank, TransferBank::identity(1, mcfg.bins(), mcfg.dim));
    let init = model::init_parameters(&mcfg, cfg.seed).unwrap();
    assert_ne!(p.embed, init.embed);
}

#[test]
fn returns_best_validation_parameters() {
    let (mcfg, w) = tiny();
    // a large step size makes validation loss oscillate
    let cfg = TrainConfig {
        max_epochs: 8,
        lr: 0.3,
        patience: 8,
        ..TrainConfig::default()
    };
    let (p, report) = train(&w[..20], &w[20..], &cfg, &mcfg).unwrap();
    let best = report.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_loss, best);
    assert_eq!(report.epochs[report.best_epoch].val_loss, best);
    let again = eval::evaluate(&p, &w[20..], &mcfg, ExecMode::Fast).unwrap().mse;
    assert_eq!(again, best);
}

#[test]
fn worsening_validation_stops_after_patience_plus_one() {
    let mut es = EarlyStopping::new(3);
    let decisions: Vec<_> = (0..10).map(|i| es.observe(i as f64)).take_while(|d| *d != StopDecision::Stop).collect();
    assert_eq!(decisions.len() + 1, 4);
}

#[test]
fn step_cap_and_empty_sets() {
    let (mcfg, w) = tiny();
    let cfg = TrainConfig {
        max_steps: Some(3),
        ..TrainConfig::default()
    };
    let (_, r) = train(&w[..20], &w[20..], &cfg, &mcfg).unwrap();
    assert_eq!(r.total_steps, 3);
    assert!(train(&[], &w, &cfg, &mcfg).is_err());
    assert!(train(&w, &[], &cfg, &mcfg).is_err());
    let bad = TrainConfig {
        lr: 0.0,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&w, &w, &bad, &mcfg), Err(Error::Config(_))));
}

#[test]
fn diverging_run_is_reported() {
    let (mcfg, w) = tiny();
    let mut p = model::init_parameters(&mcfg, 0).unwrap();
    for v in p.project.layers[0].weight.data_mut() {
        *v = 1e300;
    }
    let cfg = TrainConfig::default();
    let e = train_from(p, &w[..20], &w[20..], &cfg, &mcfg, false);
    assert!(matches!(e, Err(Error::Divergence { .. }) | Err(Error::Numeric(_))), "{e:?}");
}

#[test]
fn records_frequency_losses_and_fusion() {
    let (mcfg, w) = tiny();
    let cfg = TrainConfig {
        max_epochs: 2,
        freq_loss_windows: 4,
        ..TrainConfig::default()
    };
    let (_, r) = train(&w[..20], &w[20..], &cfg, &mcfg).unwrap();
    for e in &r.epochs {
        assert_eq!(e.fusion.len(), 1);
        assert_eq!(e.fusion[0].len(), mcfg.bins());
        assert_eq!(e.frequency_losses.as_ref().unwrap().len(), mcfg.bins());
    }
}
