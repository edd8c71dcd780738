//! End-to-end acceptance checks on real MNIST. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.
//!
//! Runs several full continual-learning jobs at D = 2000; expect ~30-45 min
//! on one core.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use crwn::dataset::{Mnist, Split};
use crwn::geometry::*;
use crwn::linalg::{matmul, pseudo_inverse, DenseMatrix, DenseVector, DEFAULT_RANK_TOL};
use crwn::model::{argmax, CrwnModel, ModelDims, Phase, TaskContext};
use crwn::tasks::transforms::{circular_shift, hflip, invert};
use crwn::tasks::{build_suite, SuiteName, TaskSuite};
use crwn::train::{loss_and_grads, run_continual, ContinualOutcome, TrainConfig};

const WIDTH: usize = 2000;

struct Verdicts {
    failed: usize,
    total: usize,
}

impl Verdicts {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failed += 1;
        }
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn train_suite(suite: &TaskSuite, seed: u64) -> (CrwnModel, ContinualOutcome, f64) {
    let start = Instant::now();
    let mut model = CrwnModel::init(ModelDims::mnist(WIDTH), seed).unwrap();
    let cfg = TrainConfig { shuffle_seed: seed, ..Default::default() };
    let out = run_continual(&mut model, suite, &cfg, seed).unwrap();
    (model, out, start.elapsed().as_secs_f64())
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

/// Criterion 8: numerical properties, no MNIST training involved.
fn numerical_properties(base: &Arc<Mnist>, v: &mut Verdicts) {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    let mut worst = 0.0f64;
    for (k, &(r, c)) in [(5, 3), (3, 5), (20, 20), (64, 17), (17, 64)].iter().enumerate() {
        let a = common::random_matrix(r, c, 100 + k as u64);
        let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        let ap = matmul(&a, &p).unwrap();
        let pa = matmul(&p, &a).unwrap();
        for res in [
            rel(&matmul(&ap, &a).unwrap(), &a),
            rel(&matmul(&pa, &p).unwrap(), &p),
            rel(&ap.transpose(), &ap),
            rel(&pa.transpose(), &pa),
        ] {
            worst = worst.max(res);
        }
    }
    ok &= worst < 1e-8;
    notes.push(format!("penrose max {worst:.1e}"));

    let mut worst_grad = 0.0f64;
    for seed in 0..5u64 {
        let mut m = CrwnModel::init(ModelDims { input: 6, width: 8, classes: 3 }, seed).unwrap();
        m.init_context(0, seed + 50).unwrap();
        let x = common::random_matrix(4, 6, seed + 7);
        let y = [0u8, 2, 1, 2];
        let g = loss_and_grads(&m, 0, &x, &y, 0.0).unwrap();
        let ctx = m.context(0).unwrap().clone();
        let loss = |c: TaskContext| {
            let mut mm = m.clone();
            mm.set_context(c).unwrap();
            loss_and_grads(&mm, 0, &x, &y, 0.0).unwrap().loss
        };
        let h = 1e-5;
        let err = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-6);
        let fd_alpha = (loss(TaskContext { alpha: ctx.alpha + h, ..ctx.clone() })
            - loss(TaskContext { alpha: ctx.alpha - h, ..ctx.clone() }))
            / (2.0 * h);
        worst_grad = worst_grad.max(err(g.grad_alpha, fd_alpha));
        for j in 0..8 {
            let bump = |d: f64| {
                let mut vv = ctx.v.clone().into_vec();
                vv[j] += d;
                TaskContext { v: DenseVector::from_vec(vv).unwrap(), ..ctx.clone() }
            };
            let fd = (loss(bump(h)) - loss(bump(-h))) / (2.0 * h);
            worst_grad = worst_grad.max(err(g.grad_v[j], fd));
        }
    }
    ok &= worst_grad < 1e-4;
    notes.push(format!("grad rel err max {worst_grad:.1e}"));

    let mut m = CrwnModel::init(ModelDims::mnist(WIDTH), 1).unwrap();
    m.init_context(0, 2).unwrap();
    let mut worst_fwd = 0.0f64;
    let mut worst_scale = 0.0f64;
    let ctx = m.context(0).unwrap().clone();
    let mut scaled = m.clone();
    scaled
        .set_context(TaskContext { alpha: ctx.alpha * -3.7, v: ctx.v.scaled(1.0 / -3.7), ..ctx.clone() })
        .unwrap();
    for i in 0..100 {
        let x = DenseVector::from_vec(base.test.images[i].pixels().to_vec()).unwrap();
        let a = m.forward(0, &x).unwrap();
        let b = m.forward_tgsh_form(0, &x).unwrap();
        let s = scaled.forward(0, &x).unwrap();
        let diff = |p: &DenseVector| {
            p.as_slice().iter().zip(a.as_slice()).map(|(u, w)| (u - w).powi(2)).sum::<f64>().sqrt() / a.norm()
        };
        worst_fwd = worst_fwd.max(diff(&b));
        worst_scale = worst_scale.max(diff(&s));
    }
    ok &= worst_fwd < 1e-10 && worst_scale < 1e-12;
    notes.push(format!("diag form {worst_fwd:.1e}, rescale {worst_scale:.1e}"));

    let involutions = base.test.images[..1000].iter().all(|img| {
        invert(&invert(img)) == *img
            && hflip(&hflip(img)) == *img
            && circular_shift(img, 28) == *img
            && circular_shift(&circular_shift(img, 1), 1) == circular_shift(img, 2)
    });
    ok &= involutions;
    notes.push(format!("involutions/periodicity {}", if involutions { "exact" } else { "BROKEN" }));

    let small = build_suite(SuiteName::AugmentMnist, base.clone(), 3)
        .unwrap()
        .with_base_limit(600, 200);
    let run = || {
        let mut mm = CrwnModel::init(ModelDims::mnist(64), 4).unwrap();
        let out = run_continual(&mut mm, &small, &TrainConfig { epochs: 1, ..Default::default() }, 5).unwrap();
        (crwn::train::records_to_csv(&out.records), out.accuracy, mm.snapshot_contexts())
    };
    let deterministic = run() == run();
    ok &= deterministic;
    notes.push(format!("determinism {}", if deterministic { "exact" } else { "BROKEN" }));

    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 120.0;
    v.record("C8 numerical properties", ok, format!("{} ({secs:.0} s <= 120 s)", notes.join("; ")));
}

fn main() -> ExitCode {
    let mut v = Verdicts { failed: 0, total: 0 };
    let Some(dir) = common::mnist_dir() else {
        v.record(
            "C0 data",
            false,
            "MNIST not found; run `crwn fetch-mnist` or set CRWN_DATA_DIR".into(),
        );
        return ExitCode::FAILURE;
    };
    let base = Arc::new(Mnist::load_dir(&dir).unwrap());

    numerical_properties(&base, &mut v);

    // Fast gate: every 60 degrees.
    {
        let suite = build_suite(SuiteName::RotationMnist, base.clone(), 0).unwrap().subsample(6).unwrap();
        let (_, out, secs) = train_suite(&suite, 0);
        let mean = out.accuracy.final_mean();
        v.record(
            "C1a rotation-mnist 6-task gate",
            mean >= 0.92 && secs <= 900.0,
            format!("mean final accuracy {mean:.4} >= 0.92 in {secs:.0} s <= 900 s"),
        );
    }

    // Headline run and everything measured on it.
    {
        let suite = build_suite(SuiteName::RotationMnist, base.clone(), 0).unwrap();
        let (model, out, secs) = train_suite(&suite, 0);
        let mean = out.accuracy.final_mean();
        v.record(
            "C1 rotation-mnist 36 tasks",
            mean >= 0.90 && secs <= 7200.0,
            format!("mean final accuracy {mean:.4} >= 0.90 (reference ~0.95) in {secs:.0} s <= 7200 s"),
        );
        let violations = out.accuracy.forgetting_violations();
        v.record(
            "C2 zero forgetting",
            violations.is_empty(),
            format!("{} of {} pairs with A[i][j] != A[j][j] bitwise", violations.len(), 36 * 35 / 2),
        );

        let bank = RepresentationBank::collect(&model, &suite, 200, Split::Test, true, 0).unwrap();
        let s = bank.summary(10).unwrap();
        let ci = bank.bootstrap_intra_minus_inter(10_000, 2_000, 0.95, 0).unwrap();
        drop(bank);
        let inter = s.mean_inter.unwrap_or(f64::NAN);
        v.record(
            "C3 intra > inter similarity",
            ci.low > 0.0,
            format!(
                "intra {:.4} vs inter {inter:.4}; 95% bootstrap CI of difference [{:.4}, {:.4}] over 10000 pairs",
                s.mean_intra, ci.low, ci.high
            ),
        );

        let before = suite_context_similarity(&model, &suite, Phase::Initial).unwrap();
        let after = suite_context_similarity(&model, &suite, Phase::Trained).unwrap();
        let near = after.mean_at_circular_offsets(|o| o == 1).unwrap();
        let far = after.mean_at_circular_offsets(|o| o >= 9).unwrap();
        let untrained = before.mean_abs_off_diagonal();
        v.record(
            "C4 adjacency band",
            near > far && untrained < 0.1,
            format!("offset 1 mean {near:.4} > offset >= 9 mean {far:.4}; before-training mean |off-diag| {untrained:.4} < 0.1"),
        );

        let cfg = ReconstructConfig::default();
        let mut hits = 0;
        let mut picks = Vec::new();
        for task in [0usize, 4, 9] {
            let means = class_mean_images(&suite, task, Split::Train, 10).unwrap();
            for class in [1usize, 3] {
                let r = reconstruct_digit(&model, class, task, 0, &cfg).unwrap();
                let corr: Vec<f64> = means.iter().map(|mu| pearson(&r.raw, mu).unwrap()).collect();
                let best = argmax(&corr);
                hits += usize::from(best == class);
                picks.push(format!("{}deg/{class}->{best}", task * 10));
            }
        }
        v.record(
            "C7 reconstruction nearest class mean",
            hits == 6,
            format!("{hits}/6 ({})", picks.join(" ")),
        );
    }

    // AugmentMNIST outgroup.
    {
        let suite = build_suite(SuiteName::AugmentMnist, base.clone(), 0).unwrap();
        let (model, _, secs) = train_suite(&suite, 0);
        let after = suite_context_similarity(&model, &suite, Phase::Trained).unwrap();
        // Seventh task, counting from one.
        let inv = after.labels.iter().position(|l| l == "invert").unwrap();
        let negatives = (0..after.len()).filter(|&j| j != inv && after.matrix[inv][j] < 0.0).count();
        let d = hierarchical_cluster(&after).unwrap();
        let outgroup = d.final_outgroup();
        v.record(
            "C6 augment-mnist invert outgroup",
            negatives >= 6 && outgroup == Some(inv) && secs <= 1200.0,
            format!(
                "invert (T{}) has negative cosine with {negatives}/7 tasks (>= 6); final merge outgroup {:?}; {secs:.0} s <= 1200 s",
                inv + 1,
                outgroup.map(|i| d.labels[i].clone())
            ),
        );
    }

    // ShiftMNIST: 1px matrix subsampled at even indices vs the 2px matrix.
    {
        let start = Instant::now();
        let fine = build_suite(SuiteName::ShiftMnist1px, base.clone(), 0).unwrap();
        let (m1, _, _) = train_suite(&fine, 1);
        let fine_sim = suite_context_similarity(&m1, &fine, Phase::Trained).unwrap().subsampled(2).unwrap();
        drop(m1);
        let coarse = build_suite(SuiteName::ShiftMnist2px, base.clone(), 0).unwrap();
        let (m2, _, _) = train_suite(&coarse, 2);
        let coarse_sim = suite_context_similarity(&m2, &coarse, Phase::Trained).unwrap();
        let c = spearman(&fine_sim.upper_triangle(), &coarse_sim.upper_triangle()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        v.record(
            "C5 shift-mnist subsampling consistency",
            c.rho > 0.0 && c.p_value < 0.05 && secs <= 5400.0,
            format!("Spearman rho {:.4} (p = {:.2e}, n = {}) over off-diagonals; seeds 1 and 2; {secs:.0} s <= 5400 s", c.rho, c.p_value, c.n),
        );
    }

    println!("acceptance: {}/{} criteria passed", v.total - v.failed, v.total);
    if v.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
