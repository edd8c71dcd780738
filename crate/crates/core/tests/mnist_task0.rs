//! Single-task checks on real MNIST. Skipped when the data is absent.

mod common;

use std::sync::Arc;

use crwn::dataset::{Mnist, Split};
use crwn::tasks::{build_suite, SuiteName};
use crwn::train::{fit_context, TaskFeatures, TrainConfig};
use crwn::{CrwnModel, ModelDims};

#[test]
fn first_rotation_task_learns_with_falling_loss() {
    let Some(dir) = common::mnist_dir() else {
        eprintln!("skipping: MNIST not found (set CRWN_DATA_DIR or run `crwn fetch-mnist`)");
        return;
    };
    let base = Arc::new(Mnist::load_dir(&dir).unwrap());
    let suite = build_suite(SuiteName::RotationMnist, base, 0).unwrap();
    let mut model = CrwnModel::init(ModelDims::mnist(2000), 0).unwrap();
    model.init_context(0, 0).unwrap();

    let train = TaskFeatures::compute(&model, &suite, 0, Split::Train, true).unwrap();
    let test = TaskFeatures::compute(&model, &suite, 0, Split::Test, true).unwrap();
    drop(suite);

    let cfg = TrainConfig { epochs: 6, ..Default::default() };
    let stats = fit_context(&mut model, 0, &train, &cfg).unwrap();
    let losses: Vec<f64> = stats.iter().map(|s| s.loss).collect();
    let falling = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(falling >= 4, "loss fell in only {falling} of 5 steps: {losses:?}");

    let acc = test.accuracy(&model).unwrap();
    assert!(acc >= 0.90, "task 0 test accuracy {acc}");
}
