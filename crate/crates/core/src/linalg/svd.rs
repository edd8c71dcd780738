//! Thin SVD by one-sided Jacobi and the Moore–Penrose pseudo-inverse.
//!
//! Tall inputs are first reduced with a Householder QR so the Jacobi sweeps
//! run on the small square factor `R`; wide inputs are handled through their
//! transpose.

use super::{matmul, DenseMatrix};
use crate::error::{Error, Result};

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 60;
/// Convergence threshold: the off-diagonal Frobenius norm of the column Gram
/// matrix, relative to `‖A‖_F²`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Thin singular value decomposition `A = U · diag(s) · Vᵀ`, singular values
/// sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
    pub sweeps: usize,
}

pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Degenerate("svd of an empty matrix".into()));
    }
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
            sweeps: t.sweeps,
        });
    }
    let (q, r) = householder_qr(a);
    let inner = jacobi_svd(&r)?;
    let u = matmul(&q, &inner.u)?;
    Ok(Svd { u, ..inner })
}

/// Moore–Penrose pseudo-inverse. Singular values below `rank_tol · σ_max`
/// are treated as zero.
pub fn pseudo_inverse(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    if !(rank_tol > 0.0) {
        return Err(Error::Domain(format!("rank_tol must be positive, got {rank_tol}")));
    }
    let Svd {
        u,
        singular_values,
        v,
        ..
    } = svd(a)?;
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * sigma_max;
    // V · diag(1/σ) · Uᵀ
    let mut v_scaled = v;
    let k = singular_values.len();
    for row in v_scaled.as_mut_slice().chunks_exact_mut(k) {
        for (x, &s) in row.iter_mut().zip(&singular_values) {
            *x = if s > cutoff && s > 0.0 { *x / s } else { 0.0 };
        }
    }
    matmul(&v_scaled, &u.transpose())
}

/// Thin Householder QR of an `m × n` matrix with `m ≥ n`.
/// Returns `Q` (`m × n`, orthonormal columns) and upper-triangular `R`.
fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = a.shape();
    // Column-major working copy so reflector updates touch contiguous memory.
    let mut w = a.transpose().into_vec();
    let col = |j: usize| j * m;
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];

    for k in 0..n {
        let x = &w[col(k) + k..col(k) + m];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x.to_vec();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            diag[k] = 0.0;
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for j in k + 1..n {
            let cj = &mut w[col(j) + k..col(j) + m];
            let s = 2.0 * v.iter().zip(cj.iter()).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            for (c, vi) in cj.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        let scale = vnorm2.sqrt();
        v.iter_mut().for_each(|t| *t /= scale);
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(n, n);
    {
        let rs = r.as_mut_slice();
        for i in 0..n {
            rs[i * n + i] = diag[i];
            for j in i + 1..n {
                rs[i * n + j] = w[col(j) + i];
            }
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity,
    // built column-major.
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * m + j] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for j in 0..n {
            let qj = &mut q[j * m + k..j * m + m];
            let s = 2.0 * v.iter().zip(qj.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (c, vi) in qj.iter_mut().zip(v) {
                *c -= s * vi;
            }
        }
    }
    let q_cm = DenseMatrix::from_vec(n, m, q).expect("finite by construction");
    (q_cm.transpose(), r)
}

/// One-sided Jacobi on a matrix with at least as many rows as columns.
fn jacobi_svd(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    let norm_f = a.frobenius_norm();
    let mut cols = a.transpose().into_vec();
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }
    let threshold = OFF_DIAGONAL_TOL * norm_f * norm_f;
    let mut sweeps = 0;
    let mut converged = norm_f == 0.0;

    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "one-sided Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        let mut off2 = 0.0;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (cp, cq) = column_pair(&mut cols, m, p, q);
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for (x, y) in cp.iter().zip(cq.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                off2 += gamma * gamma;
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cp, cq, c, s);
                let (vp, vq) = column_pair(&mut v, n, p, q);
                rotate(vp, vq, c, s);
            }
        }
        converged = !rotated || (2.0 * off2).sqrt() < threshold;
    }

    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|j| {
            let c = &cols[j * m..(j + 1) * m];
            (j, c.iter().map(|x| x * x).sum::<f64>().sqrt())
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut u = vec![0.0; m * n];
    let mut vv = vec![0.0; n * n];
    let mut singular_values = Vec::with_capacity(n);
    for (k, &(j, s)) in order.iter().enumerate() {
        singular_values.push(s);
        let c = &cols[j * m..(j + 1) * m];
        for i in 0..m {
            u[i * n + k] = if s > 0.0 { c[i] / s } else { 0.0 };
        }
        for i in 0..n {
            vv[i * n + k] = v[j * n + i];
        }
    }
    Ok(Svd {
        u: DenseMatrix::from_vec(m, n, u)?,
        singular_values,
        v: DenseMatrix::from_vec(n, n, vv)?,
        sweeps,
    })
}

fn column_pair(buf: &mut [f64], len: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = buf.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}
