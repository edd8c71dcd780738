mod common;

use crwn::dataset::Split;
use crwn::geometry::*;
use crwn::linalg::{matmul, DenseVector};
use crwn::model::{CrwnModel, ModelDims, Phase, TaskContext};
use crwn::tasks::{TaskSuite, Transform};
use crwn::train::{run_continual, TrainConfig};

fn trained(transforms: Vec<Transform>) -> (CrwnModel, TaskSuite) {
    let base = common::synthetic_mnist(300, 100, 6);
    let suite = TaskSuite::custom(transforms, base, 0).unwrap();
    let mut model = CrwnModel::init(ModelDims::mnist(128), 1).unwrap();
    run_continual(&mut model, &suite, &TrainConfig { epochs: 4, ..Default::default() }, 2).unwrap();
    (model, suite)
}

#[test]
fn context_matrices_are_symmetric_with_unit_diagonal() {
    let (model, suite) = trained(vec![Transform::Identity, Transform::HFlip, Transform::VFlip]);
    for phase in [Phase::Initial, Phase::Trained] {
        let r = suite_context_similarity(&model, &suite, phase).unwrap();
        for i in 0..r.len() {
            assert_eq!(r.matrix[i][i], 1.0);
            for j in 0..r.len() {
                assert!((r.matrix[i][j] - r.matrix[j][i]).abs() <= 1e-12);
                assert!((-1.0..=1.0).contains(&r.matrix[i][j]));
            }
        }
    }
    let missing = CrwnModel::init(ModelDims::mnist(8), 0).unwrap();
    let mut missing = missing;
    missing.init_context(0, 1).unwrap();
    assert!(matches!(
        context_similarity_matrix(&missing, Phase::Trained),
        Err(crwn::Error::State(_))
    ));
}

#[test]
fn cosine_reports_ignore_alpha_v_rescaling() {
    let (model, suite) = trained(vec![Transform::Identity, Transform::Invert]);
    let mut scaled = model.clone();
    for t in 0..2 {
        let ctx = model.context(t).unwrap().clone();
        scaled
            .set_context(TaskContext { alpha: ctx.alpha * 4.0, v: ctx.v.scaled(0.25), ..ctx })
            .unwrap();
    }
    let a = suite_context_similarity(&model, &suite, Phase::Trained).unwrap();
    let b = suite_context_similarity(&scaled, &suite, Phase::Trained).unwrap();
    assert_eq!(a.matrix, b.matrix);
    let ia = intra_inter_similarity(&model, &suite, 5).unwrap();
    let ib = intra_inter_similarity(&scaled, &suite, 5).unwrap();
    assert_eq!(ia, ib);
}

#[test]
fn intra_inter_on_one_task_has_no_inter() {
    let (model, suite) = trained(vec![Transform::Identity]);
    let s = intra_inter_similarity(&model, &suite, 10).unwrap();
    assert_eq!(s.mean_inter, None);
    assert_eq!(s.intra.len(), 1);
    assert!(s.intra_pairs[0] > 0);
}

#[test]
fn bank_self_similarity_and_exact_means() {
    let (model, suite) = trained(vec![Transform::Identity, Transform::VFlip]);
    let bank = RepresentationBank::collect(&model, &suite, 4, Split::Test, true, 0).unwrap();
    assert!((bank.cosine(3, 3) - 1.0).abs() < 1e-6);
    // Brute-force the pair means from the stored vectors.
    let s = bank.summary(10).unwrap();
    let per_task = bank.len() / 2;
    let class = |i: usize| (i % per_task) / 4;
    let task = |i: usize| i / per_task;
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..bank.len() {
        for j in i + 1..bank.len() {
            if task(i) == task(j) && class(i) != class(j) {
                intra += bank.cosine(i, j);
                ni += 1;
            } else if task(i) != task(j) && class(i) == class(j) {
                inter += bank.cosine(i, j);
                nx += 1;
            }
        }
    }
    assert_eq!(bank.excluded_zero, 0);
    assert!((s.mean_intra - intra / ni as f64).abs() < 1e-6);
    assert!((s.mean_inter.unwrap() - inter / nx as f64).abs() < 1e-6);
    let ci = bank.bootstrap_intra_minus_inter(500, 200, 0.95, 1).unwrap();
    assert!(ci.low <= ci.high);
}

#[test]
fn probe_in_sample_is_at_least_held_out() {
    let (model, suite) = trained(vec![Transform::Identity, Transform::Invert, Transform::HFlip]);
    let cfg = ProbeConfig { samples_per_task: 100, ..Default::default() };
    let r = recoverability_probe(&model, &suite, &cfg).unwrap();
    assert!(r.in_sample_accuracy >= r.held_out_accuracy);
    assert!(r.held_out_accuracy > r.chance);
    let (one, one_suite) = trained(vec![Transform::Identity]);
    assert!(recoverability_probe(&one, &one_suite, &cfg).is_err());
}

#[test]
fn zero_sigma_reconstruction_is_the_pseudo_inverse_of_the_mean() {
    let (model, _) = trained(vec![Transform::Identity]);
    let cfg = ReconstructConfig { sigma_scale: 0.0, samples: 3, ..Default::default() };
    let r = reconstruct_digit(&model, 3, 0, 11, &cfg).unwrap();
    let c = model.context(0).unwrap().context_vector();
    let mean = DenseVector::from_vec(model.readout().anchor(3).to_vec()).unwrap().hadamard(&c).unwrap();
    let pinv = model.encoder().pseudo_inverse().unwrap();
    let want = pinv.matvec(&mean).unwrap();
    for (a, b) in r.raw.iter().zip(want.as_slice()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    let c_mat = &model.encoder().weights;
    let cpc = matmul(&matmul(c_mat, pinv).unwrap(), c_mat).unwrap();
    assert!(cpc.sub(c_mat).unwrap().frobenius_norm() / c_mat.frobenius_norm() < 1e-8);
}

#[test]
fn reconstruction_errors_and_grid_shape() {
    let (model, _) = trained(vec![Transform::Identity]);
    let cfg = ReconstructConfig::default();
    assert!(matches!(reconstruct_digit(&model, 10, 0, 0, &cfg), Err(crwn::Error::Domain(_))));
    assert!(reconstruction_cells(&model, &[], &[0], 0, &cfg).is_err());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.pgm");
    let cells = reconstruction_grid(&model, &[3, 1], &[0], 5, &cfg, &p).unwrap();
    assert_eq!((cells.len(), cells[0].len()), (2, 1));
    let again = reconstruction_cells(&model, &[3, 1], &[0], 5, &cfg).unwrap();
    assert_eq!(cells, again);
    assert!(std::fs::read(&p).unwrap().starts_with(b"P5\n30 59\n255\n"));
}

#[test]
fn dendrogram_covers_every_task() {
    let (model, suite) = trained(vec![
        Transform::Identity,
        Transform::HFlip,
        Transform::VFlip,
        Transform::Invert,
    ]);
    let r = suite_context_similarity(&model, &suite, Phase::Trained).unwrap();
    let d = hierarchical_cluster(&r).unwrap();
    assert!(d.heights_monotone());
    assert_eq!(d.merges.len(), 3);
    let mut leaves = d.leaf_order.clone();
    leaves.sort_unstable();
    assert_eq!(leaves, vec![0, 1, 2, 3]);
}
