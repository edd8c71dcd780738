mod common;

use crwn::model::{CrwnModel, ModelDims};
use crwn::tasks::{build_suite, SuiteName, Transform, TaskSuite};
use crwn::dataset::Split;
use crwn::train::{records_to_csv, run_continual, TrainConfig};

fn small_suite() -> TaskSuite {
    let base = common::synthetic_mnist(300, 100, 4);
    TaskSuite::custom(
        vec![
            Transform::Identity,
            Transform::Rotate { degrees: 90.0 },
            Transform::Invert,
            Transform::RandomErasing { scale: (0.02, 0.33), ratio: (0.3, 3.3) },
        ],
        base,
        7,
    )
    .unwrap()
}

fn run_once() -> (String, String, String) {
    let suite = small_suite();
    let mut model = CrwnModel::init(ModelDims::mnist(96), 1).unwrap();
    let cfg = TrainConfig { epochs: 3, shuffle_seed: 2, ..Default::default() };
    let out = run_continual(&mut model, &suite, &cfg, 3).unwrap();
    assert!(out.accuracy.forgetting_violations().is_empty());
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.json");
    model.save_checkpoint(&ck).unwrap();
    (
        records_to_csv(&out.records),
        out.accuracy.to_csv(),
        std::fs::read_to_string(ck).unwrap(),
    )
}

#[test]
fn identical_seeds_give_identical_outputs() {
    assert_eq!(run_once(), run_once());
}

#[test]
fn synthetic_tasks_are_learned() {
    let suite = small_suite();
    let mut model = CrwnModel::init(ModelDims::mnist(256), 1).unwrap();
    let out = run_continual(&mut model, &suite, &TrainConfig { epochs: 40, batch_size: 32, ..Default::default() }, 3).unwrap();
    assert!(out.accuracy.final_mean() > 0.9, "{:?}", out.accuracy.values.last());
}

#[test]
fn run_continual_needs_fresh_contexts() {
    let suite = small_suite();
    let mut model = CrwnModel::init(ModelDims::mnist(16), 1).unwrap();
    model.init_context(0, 1).unwrap();
    assert!(matches!(
        run_continual(&mut model, &suite, &TrainConfig::default(), 3),
        Err(crwn::Error::State(_))
    ));
}

#[test]
fn two_pixel_suite_is_every_other_one_pixel_task() {
    let base = common::synthetic_mnist(20, 10, 2);
    let one = build_suite(SuiteName::ShiftMnist1px, base.clone(), 0).unwrap();
    let two = build_suite(SuiteName::ShiftMnist2px, base, 99).unwrap();
    for i in 0..two.len() {
        assert_eq!(
            two.task_images(i, Split::Test).unwrap(),
            one.task_images(2 * i, Split::Test).unwrap()
        );
    }
}

#[test]
fn suite_manifest_rebuilds_identical_images() {
    let suite = small_suite();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("suite.json");
    suite.manifest().write(&p).unwrap();
    let back = crwn::tasks::SuiteManifest::read(&p).unwrap().rebuild(suite.base().clone()).unwrap();
    for t in 0..suite.len() {
        assert_eq!(back.task_images(t, Split::Train).unwrap(), suite.task_images(t, Split::Train).unwrap());
    }
}
