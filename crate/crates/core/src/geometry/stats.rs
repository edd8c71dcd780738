//! Rank correlation, Pearson correlation and a percentile bootstrap.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::SeededRng;

/// Pearson correlation of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Analysis(format!(
            "pearson needs two samples of equal length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("pearson of a constant sample".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n − 2` degrees of
    /// freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Spearman rank correlation with a two-sided p-value.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::Analysis(format!(
            "spearman needs two samples of equal length >= 3, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let rho = pearson(&ranks(a), &ranks(b))?;
    let n = a.len();
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::Analysis(format!("t distribution: {e}")))?;
        2.0 * dist.sf(t.abs())
    };
    Ok(Correlation { rho, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub resamples: usize,
}

/// Percentile bootstrap interval for `mean(a) − mean(b)`, resampling each
/// sample independently with replacement.
pub fn bootstrap_mean_difference(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut SeededRng,
) -> Result<BootstrapInterval> {
    if a.is_empty() || b.is_empty() || resamples == 0 || !(0.0 < level && level < 1.0) {
        return Err(Error::Analysis(
            "bootstrap needs non-empty samples, resamples > 0 and level in (0, 1)".into(),
        ));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mut resample_mean = |s: &[f64]| {
        let mut total = 0.0;
        for _ in 0..s.len() {
            total += s[rng.below(s.len())];
        }
        total / s.len() as f64
    };
    let mut diffs: Vec<f64> = (0..resamples)
        .map(|_| resample_mean(a) - resample_mean(b))
        .collect();
    diffs.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| diffs[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok(BootstrapInterval {
        estimate: mean(a) - mean(b),
        low: at(tail),
        high: at(1.0 - tail),
        level,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_monotone_is_one() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [1.0, 4.0, 9.0, 16.0, 100.0];
        let c = spearman(&a, &b).unwrap();
        assert_eq!(c.rho, 1.0);
        assert_eq!(c.p_value, 0.0);
        let r: Vec<f64> = b.iter().rev().copied().collect();
        assert_eq!(spearman(&a, &r).unwrap().rho, -1.0);
    }

    #[test]
    fn spearman_reference_value() {
        // Hand-ranked: d = [0, -1, 1, 0, 0, 0], rho = 1 - 6*2/(6*35) = 0.942857...
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 3.0, 2.0, 4.0, 5.0, 6.0];
        let c = spearman(&a, &b).unwrap();
        assert!((c.rho - (1.0 - 12.0 / 210.0)).abs() < 1e-12);
        // t = rho*sqrt(4/(1-rho^2)) = 5.6569; two-sided p with 4 df.
        assert!((c.p_value - 0.004_804).abs() < 1e-5, "{}", c.p_value);
    }

    #[test]
    fn pearson_constant_is_degenerate() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_separates_shifted_samples() {
        let mut rng = SeededRng::new(5);
        let a: Vec<f64> = (0..500).map(|_| 1.0 + rng.standard_normal()).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
        let ci = bootstrap_mean_difference(&a, &b, 2000, 0.95, &mut SeededRng::new(1)).unwrap();
        assert!(ci.low > 0.7 && ci.high < 1.3, "{ci:?}");
        assert!(ci.low <= ci.estimate && ci.estimate <= ci.high);
    }
}
