//! Score-distribution diagnostics: empirical CDFs, relevant/non-relevant
//! separation, and the query/video prior variance decomposition.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{PairScore, Qrels};
use crate::error::{Error, Result};

/// Above this many relevant × non-relevant pairs AUC switches to the rank-sum form.
pub const EXACT_AUC_PAIR_LIMIT: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EcdfCurve {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl EcdfCurve {
    /// F(x): fraction of samples ≤ x.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v <= x);
        if idx == 0 {
            0.0
        } else {
            self.probabilities[idx - 1]
        }
    }

    /// Two-column `value probability` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (v, p) in self.values.iter().zip(&self.probabilities) {
            let _ = writeln!(out, "{v:?} {p:?}");
        }
        out
    }
}

fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains {bad}")));
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Right-continuous ECDF evaluated at each distinct sample value.
pub fn ecdf(scores: &[f64]) -> Result<EcdfCurve> {
    check_scores(scores, "score list")?;
    let s = sorted(scores);
    let n = s.len() as f64;
    let mut values = Vec::new();
    let mut probabilities = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        if s.get(i + 1) == Some(&v) {
            continue;
        }
        values.push(v);
        probabilities.push((i + 1) as f64 / n);
    }
    Ok(EcdfCurve { values, probabilities })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeparationStats {
    pub mean_gap: f64,
    pub overlap: f64,
    pub auc: f64,
    pub relevant_count: usize,
    pub nonrelevant_count: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn auc_pairs(rel: &[f64], non: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &r in rel {
        for &n in non {
            wins += match r.partial_cmp(&n) {
                Some(Ordering::Greater) => 1.0,
                Some(Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    wins / (rel.len() * non.len()) as f64
}

fn auc_rank_sum(rel: &[f64], non: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> =
        rel.iter().map(|&s| (s, true)).chain(non.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // midrank of the tie block, 1-based
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let n_rel = rel.len() as f64;
    (rank_sum - n_rel * (n_rel + 1.0) / 2.0) / (n_rel * non.len() as f64)
}

/// Largest vertical distance between the two ECDFs.
fn ks_statistic(rel: &[f64], non: &[f64]) -> f64 {
    let (a, b) = (sorted(rel), sorted(non));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn separation_stats(relevant: &[f64], nonrelevant: &[f64]) -> Result<SeparationStats> {
    check_scores(relevant, "relevant scores")?;
    check_scores(nonrelevant, "non-relevant scores")?;
    let auc = if relevant.len() * nonrelevant.len() <= EXACT_AUC_PAIR_LIMIT {
        auc_pairs(relevant, nonrelevant)
    } else {
        auc_rank_sum(relevant, nonrelevant)
    };
    Ok(SeparationStats {
        mean_gap: mean(relevant) - mean(nonrelevant),
        overlap: 1.0 - ks_statistic(relevant, nonrelevant),
        auc,
        relevant_count: relevant.len(),
        nonrelevant_count: nonrelevant.len(),
    })
}

/// Splits scored pairs into relevant and non-relevant pools. Pairs without a
/// qrels entry count as non-relevant, since scores come from candidate pools.
pub fn split_by_relevance(scores: &[PairScore], qrels: &Qrels) -> (Vec<f64>, Vec<f64>) {
    let mut rel = Vec::new();
    let mut non = Vec::new();
    for p in scores {
        if qrels.is_relevant(&p.query_id, &p.video_id) {
            rel.push(p.score);
        } else {
            non.push(p.score);
        }
    }
    (rel, non)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    /// `None` when all scores are equal.
    pub r2_query_only: Option<f64>,
    pub r2_video_only: Option<f64>,
    pub r2_additive: Option<f64>,
    pub global_mean: f64,
    pub pair_count: usize,
    pub query_count: usize,
    pub video_count: usize,
}

fn group_means<'a>(pairs: impl Iterator<Item = (&'a str, f64)>) -> BTreeMap<&'a str, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (k, s) in pairs {
        let e = acc.entry(k).or_default();
        e.0 += s;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect()
}

pub fn variance_decomposition(scores: &[PairScore]) -> Result<DecompositionReport> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "variance decomposition needs at least 2 scored pairs, got {}",
            scores.len()
        )));
    }
    check_scores(&scores.iter().map(|p| p.score).collect::<Vec<_>>(), "score table")?;
    let mu = mean(&scores.iter().map(|p| p.score).collect::<Vec<_>>());
    let mu_q = group_means(scores.iter().map(|p| (p.query_id.as_str(), p.score)));
    let mu_v = group_means(scores.iter().map(|p| (p.video_id.as_str(), p.score)));
    let ss_tot: f64 = scores.iter().map(|p| (p.score - mu).powi(2)).sum();
    let r2 = |predict: &dyn Fn(&PairScore) -> f64| {
        if ss_tot == 0.0 {
            return None;
        }
        let ss_res: f64 = scores.iter().map(|p| (p.score - predict(p)).powi(2)).sum();
        Some(1.0 - ss_res / ss_tot)
    };
    let q = |p: &PairScore| mu_q[p.query_id.as_str()];
    let v = |p: &PairScore| mu_v[p.video_id.as_str()];
    let report = DecompositionReport {
        r2_query_only: r2(&q),
        r2_video_only: r2(&v),
        r2_additive: r2(&|p| q(p) + v(p) - mu),
        global_mean: mu,
        pair_count: scores.len(),
        query_count: mu_q.len(),
        video_count: mu_v.len(),
    };
    if ss_tot == 0.0 {
        log::warn!("all {} scores are equal; R² is undefined", scores.len());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(q: &str, v: &str, s: f64) -> PairScore {
        PairScore { query_id: q.into(), video_id: v.into(), score: s }
    }

    #[test]
    fn ecdf_small_cases() {
        let c = ecdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.probabilities, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let flat = ecdf(&[4.0; 5]).unwrap();
        assert_eq!(flat.values, vec![4.0]);
        assert_eq!(flat.probabilities, vec![1.0]);
        assert!(ecdf(&[]).is_err());
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(2.5), 2.0 / 3.0);
    }

    #[test]
    fn separation_cases() {
        let s = separation_stats(&[2.0, 0.0], &[1.0, -1.0]).unwrap();
        assert_eq!(s.auc, 0.75);
        assert_eq!(s.mean_gap, 1.0);
        let sep = separation_stats(&[5.0, 6.0], &[1.0, 2.0]).unwrap();
        assert_eq!((sep.auc, sep.overlap), (1.0, 0.0));
        let same = separation_stats(&[1.0; 3], &[1.0; 4]).unwrap();
        assert_eq!((same.auc, same.overlap), (0.5, 1.0));
        assert!(separation_stats(&[], &[1.0]).is_err());
        assert!(separation_stats(&[1.0], &[]).is_err());
    }

    #[test]
    fn rank_sum_matches_pair_count_with_ties() {
        let rel = [1.0, 2.0, 2.0, 3.0, 0.5];
        let non = [2.0, 0.5, 0.5, -1.0];
        assert!((auc_rank_sum(&rel, &non) - auc_pairs(&rel, &non)).abs() < 1e-15);
    }

    #[test]
    fn grid_decomposition() {
        let grid = [ps("q1", "v1", 1.0), ps("q1", "v2", 3.0), ps("q2", "v1", 5.0), ps("q2", "v2", 7.0)];
        let r = variance_decomposition(&grid).unwrap();
        assert_eq!(r.global_mean, 4.0);
        assert!((r.r2_query_only.unwrap() - 0.8).abs() < 1e-12);
        assert!((r.r2_video_only.unwrap() - 0.2).abs() < 1e-12);
        assert!((r.r2_additive.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_edge_cases() {
        assert!(variance_decomposition(&[ps("q", "v", 1.0)]).is_err());
        let flat = variance_decomposition(&[ps("a", "x", 2.0), ps("b", "y", 2.0)]).unwrap();
        assert_eq!(flat.r2_query_only, None);
        let per_query = [ps("a", "x", 1.0), ps("a", "y", 1.0), ps("b", "x", 4.0), ps("b", "z", 4.0)];
        assert_eq!(variance_decomposition(&per_query).unwrap().r2_query_only, Some(1.0));
        let singletons = [ps("a", "x", 0.3), ps("b", "y", -1.2), ps("c", "z", 2.5)];
        assert_eq!(variance_decomposition(&singletons).unwrap().r2_query_only, Some(1.0));
    }
}
