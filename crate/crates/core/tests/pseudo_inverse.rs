mod common;

use common::random_matrix;
use crwn::linalg::{matmul, pseudo_inverse, DenseMatrix, DEFAULT_RANK_TOL};
use proptest::prelude::*;

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// The four Penrose residuals, each relative to the matrix it should equal.
fn penrose(a: &DenseMatrix, p: &DenseMatrix) -> [f64; 4] {
    let ap = matmul(a, p).unwrap();
    let pa = matmul(p, a).unwrap();
    [
        rel(&matmul(&ap, a).unwrap(), a),
        rel(&matmul(&pa, p).unwrap(), p),
        rel(&ap.transpose(), &ap),
        rel(&pa.transpose(), &pa),
    ]
}

#[test]
fn random_5x3_reconstructs_below_1e9() {
    let a = random_matrix(5, 3, 11);
    let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(p.shape(), (3, 5));
    let r = penrose(&a, &p);
    assert!(r[0] < 1e-9, "{r:?}");
}

#[test]
fn square_invertible_matches_inverse() {
    // [[2, 1], [1, 1]]^-1 = [[1, -1], [-1, 2]].
    let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
    let want = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 2.0]]).unwrap();
    assert!(rel(&p, &want) < 1e-14);
}

#[test]
fn rank_one_outer_product() {
    // u vᵀ with u = [1, 2], v = [3, 4]: pinv = v uᵀ / (|u|² |v|²) = v uᵀ / 125.
    let a = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![6.0, 8.0]]).unwrap();
    let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
    let want = DenseMatrix::from_rows(&[vec![3.0 / 125.0, 6.0 / 125.0], vec![4.0 / 125.0, 8.0 / 125.0]]).unwrap();
    assert!(rel(&p, &want) < 1e-13);
    assert!(penrose(&a, &p).iter().all(|&r| r < 1e-8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn penrose_conditions_hold(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
        let a = random_matrix(rows, cols, seed);
        let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(p.shape(), (cols, rows));
        for (i, r) in penrose(&a, &p).iter().enumerate() {
            prop_assert!(*r < 1e-8, "condition {} residual {}", i + 1, r);
        }
    }

    #[test]
    fn pinv_of_pinv_is_original(rows in 2usize..12, cols in 2usize..12, seed in any::<u64>()) {
        let a = random_matrix(rows, cols, seed);
        let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        let back = pseudo_inverse(&p, DEFAULT_RANK_TOL).unwrap();
        prop_assert!(rel(&back, &a) < 1e-8);
    }
}
