//! Average-linkage agglomerative clustering on `1 − cosine`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::similarity::SimilarityReport;
use crate::error::{Error, Result};

/// One agglomeration step. Leaves are `0..n`; the cluster created by merge
/// `k` has id `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

/// Clusters the tasks of a similarity report. Ties are broken by the lowest
/// pair of cluster ids so the result is deterministic.
pub fn hierarchical_cluster(report: &SimilarityReport) -> Result<Dendrogram> {
    let n = report.len();
    for (i, row) in report.matrix.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Analysis("similarity matrix is not square".into()));
        }
        for j in 0..i {
            if (row[j] - report.matrix[j][i]).abs() > 1e-12 {
                return Err(Error::Analysis(format!(
                    "similarity matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let dist = |i: usize, j: usize| 1.0 - report.matrix[i][j];

    // Active clusters: (id, members).
    let mut active: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut last_height = f64::NEG_INFINITY;
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let (ma, mb) = (&active[a].1, &active[b].1);
                let total: f64 = ma
                    .iter()
                    .flat_map(|&i| mb.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| dist(i, j))
                    .sum();
                let d = total / (ma.len() * mb.len()) as f64;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (d, a, b) = best.expect("at least two clusters");
        let (id_b, members_b) = active.remove(b);
        let (id_a, mut members_a) = active.remove(a);
        members_a.extend(members_b);
        // Guards against a last-ulp dip when averaging equal distances.
        let height = d.max(last_height);
        last_height = height;
        merges.push(Merge {
            left: id_a,
            right: id_b,
            height,
            size: members_a.len(),
        });
        active.push((n + merges.len() - 1, members_a));
    }

    let mut leaf_order = Vec::with_capacity(n);
    if n > 0 {
        let mut stack = vec![if merges.is_empty() { 0 } else { n + merges.len() - 1 }];
        while let Some(node) = stack.pop() {
            if node < n {
                leaf_order.push(node);
            } else {
                let m = &merges[node - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
    }
    Ok(Dendrogram {
        labels: report.labels.clone(),
        merges,
        leaf_order,
    })
}

impl Dendrogram {
    /// If the final merge joins a single leaf to everything else, that leaf.
    pub fn final_outgroup(&self) -> Option<usize> {
        let n = self.labels.len();
        let last = self.merges.last()?;
        match (last.left < n, last.right < n) {
            (true, false) => Some(last.left),
            (false, true) => Some(last.right),
            (true, true) if n == 2 => None,
            _ => None,
        }
    }

    pub fn heights_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    fn node_label(&self, id: usize) -> String {
        let n = self.labels.len();
        if id < n {
            self.labels[id].clone()
        } else {
            format!("#{}", id - n)
        }
    }

    /// Indented tree, root first; each internal node shows its height.
    pub fn to_text(&self) -> String {
        let n = self.labels.len();
        let mut out = String::new();
        if n == 0 {
            return out;
        }
        let root = if self.merges.is_empty() { 0 } else { n + self.merges.len() - 1 };
        let mut stack = vec![(root, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            let pad = "  ".repeat(depth);
            if node < n {
                let _ = writeln!(out, "{pad}{}", self.labels[node]);
            } else {
                let m = &self.merges[node - n];
                let _ = writeln!(out, "{pad}+ {} h={:.4}", self.node_label(node), m.height);
                stack.push((m.right, depth + 1));
                stack.push((m.left, depth + 1));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::similarity::SimilarityKind;
    use crate::model::Phase;

    fn report(m: Vec<Vec<f64>>) -> SimilarityReport {
        SimilarityReport {
            labels: (0..m.len()).map(|i| ["A", "B", "C", "D"][i].to_string()).collect(),
            matrix: m,
            phase: Phase::Trained,
            kind: SimilarityKind::Context,
        }
    }

    #[test]
    fn three_point_hand_run() {
        // d(A,B) = 0.1, d(A,C) = d(B,C) = 0.9.
        let d = hierarchical_cluster(&report(vec![
            vec![1.0, 0.9, 0.1],
            vec![0.9, 1.0, 0.1],
            vec![0.1, 0.1, 1.0],
        ]))
        .unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert!((d.merges[0].height - 0.1).abs() < 1e-12);
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        assert!((d.merges[1].height - 0.9).abs() < 1e-12);
        assert_eq!(d.final_outgroup(), Some(2));
        assert_eq!(d.leaf_order, vec![2, 0, 1]);
    }

    #[test]
    fn identical_vectors_merge_first_at_zero() {
        let d = hierarchical_cluster(&report(vec![
            vec![1.0, 0.2, 1.0],
            vec![0.2, 1.0, 0.2],
            vec![1.0, 0.2, 1.0],
        ]))
        .unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right, d.merges[0].height), (0, 2, 0.0));
    }

    #[test]
    fn average_linkage_uses_mean_distance() {
        // After (A,B) at 0.1: d({A,B}, C) = (0.5 + 0.7)/2 = 0.6 beats d(C, D) = 0.65,
        // then D joins at (0.8 + 0.8 + 0.65)/3.
        let s = |d: f64| 1.0 - d;
        let d = hierarchical_cluster(&report(vec![
            vec![1.0, s(0.1), s(0.5), s(0.8)],
            vec![s(0.1), 1.0, s(0.7), s(0.8)],
            vec![s(0.5), s(0.7), 1.0, s(0.65)],
            vec![s(0.8), s(0.8), s(0.65), 1.0],
        ]))
        .unwrap();
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 4));
        assert!((d.merges[1].height - 0.6).abs() < 1e-12);
        let root = (0.8 + 0.8 + 0.65) / 3.0;
        assert!((d.merges[2].height - root).abs() < 1e-12);
        assert!(d.heights_monotone());
        assert_eq!(d.final_outgroup(), Some(3));
        assert!(d.to_text().starts_with("+ #2 h="));
    }

    #[test]
    fn asymmetric_input_rejected() {
        assert!(hierarchical_cluster(&report(vec![vec![1.0, 0.2], vec![0.3, 1.0]])).is_err());
    }

    #[test]
    fn single_task_has_no_merges() {
        let d = hierarchical_cluster(&report(vec![vec![1.0]])).unwrap();
        assert!(d.merges.is_empty());
        assert_eq!(d.leaf_order, vec![0]);
        assert_eq!(d.final_outgroup(), None);
    }
}
