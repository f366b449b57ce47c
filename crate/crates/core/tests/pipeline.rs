//! Library-level runs of the training loop on the synthetic fixture.

mod common;

use cyclegan_sn::trainer::{fit, read_log, TrainState};
use cyclegan_sn::Error;

#[test]
fn zero_epochs_yields_empty_fid_log() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::Fixture::build(&dir.path().join("fx"));
    let mut config = fx.toy_config();
    config.epochs = 0;
    let outcome = fit(&config, &dir.path().join("run"), None).unwrap();
    assert!(outcome.fid_log.is_empty());
    assert_eq!(outcome.state.step, 0);
}

#[test]
fn fid_interval_sets_evaluation_count() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::Fixture::build(&dir.path().join("fx"));
    let mut config = fx.toy_config();
    config.epochs = 20;
    config.fid_interval = 5;
    config.max_steps_per_epoch = Some(1);
    let outcome = fit(&config, &dir.path().join("run"), None).unwrap();
    let epochs: Vec<u64> = outcome.fid_log.iter().map(|(e, _)| *e).collect();
    assert_eq!(epochs, vec![5, 10, 15, 20]);
    let logged = read_log(&outcome.log_path).unwrap();
    assert_eq!(logged.len(), 20);
    assert_eq!(logged.iter().filter(|e| e.fid.is_some()).count(), 4);
}

#[test]
fn resume_rejects_changed_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::Fixture::build(&dir.path().join("fx"));
    let mut config = fx.toy_config();
    config.epochs = 1;
    config.max_steps_per_epoch = Some(2);
    let out = dir.path().join("run");
    fit(&config, &out, None).unwrap();
    config.lr *= 2.0;
    let err = fit(&config, &out, Some(&out.join("checkpoints/latest"))).unwrap_err();
    assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
    assert!(err.to_string().contains("config hash mismatch"));
}

#[test]
fn checkpoint_round_trips_state() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::Fixture::build(&dir.path().join("fx"));
    let mut config = fx.toy_config();
    config.epochs = 1;
    config.max_steps_per_epoch = Some(2);
    config.replay_buffer = true;
    let out = dir.path().join("run");
    let outcome = fit(&config, &out, None).unwrap();
    let loaded = TrainState::load(&out.join("checkpoints/latest"), &config).unwrap();
    assert_eq!(loaded.step, outcome.state.step);
    assert_eq!(loaded.epoch, outcome.state.epoch);
    assert_eq!(loaded.config_hash(), outcome.state.config_hash());
}
