//! Teacher-guided negative mining, training-group assembly and query filtering.
//!
//! Non-positive candidates of a query are split by the teacher's verdict:
//!
//! | class | rule |
//! |-------|------|
//! | trusted negative | `label = 0 ∧ margin ≤ α₁` |
//! | suspected positive | `label = 1 ∧ margin > α₂` (dropped) |
//! | hard negative | everything else |

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::jsonl;
use crate::corpus::{Qrels, RankedRun, TeacherIndex};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Negatives per training group (K).
    pub negatives_per_query: usize,
    pub require_trusted: bool,
    pub positive_score_ratio: f64,
    pub first_stage_depth: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            alpha1: -6.0,
            alpha2: -8.0,
            negatives_per_query: 2,
            require_trusted: true,
            positive_score_ratio: 2.0,
            first_stage_depth: 1000,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives_per_query == 0 {
            return Err(Error::Config("negatives_per_query must be at least 1".into()));
        }
        if !(self.positive_score_ratio > 0.0 && self.positive_score_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "positive_score_ratio must be positive, got {}",
                self.positive_score_ratio
            )));
        }
        if !self.alpha1.is_finite() || !self.alpha2.is_finite() {
            return Err(Error::Config("alpha thresholds must be finite".into()));
        }
        if self.first_stage_depth == 0 {
            return Err(Error::Config("first_stage_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CandidateClass {
    TrustedNegative,
    SuspectedPositive,
    HardNegative,
}

/// Classifies a single non-positive candidate from the teacher's label and margin.
pub fn classify(label: u8, margin: f64, config: &MiningConfig) -> CandidateClass {
    if label == 0 && margin <= config.alpha1 {
        CandidateClass::TrustedNegative
    } else if label == 1 && margin > config.alpha2 {
        CandidateClass::SuspectedPositive
    } else {
        CandidateClass::HardNegative
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    pub query_id: String,
    pub trusted_negatives: Vec<String>,
    pub suspected_positives: Vec<String>,
    pub hard_negatives: Vec<String>,
}

/// Splits the non-positive candidates of one query into the three classes.
/// Candidates judged relevant in `qrels` are left out of every list.
pub fn partition_candidates<S: AsRef<str>>(
    query_id: &str,
    candidate_ids: &[S],
    qrels: &Qrels,
    judgments: &TeacherIndex,
    config: &MiningConfig,
) -> Result<Partition> {
    let mut p = Partition { query_id: query_id.to_string(), ..Default::default() };
    for vid in candidate_ids {
        let vid = vid.as_ref();
        if qrels.is_relevant(query_id, vid) {
            continue;
        }
        let j = judgments.require(query_id, vid)?;
        let list = match classify(j.label, j.margin, config) {
            CandidateClass::TrustedNegative => &mut p.trusted_negatives,
            CandidateClass::SuspectedPositive => &mut p.suspected_positives,
            CandidateClass::HardNegative => &mut p.hard_negatives,
        };
        list.push(vid.to_string());
    }
    Ok(p)
}

/// One positive and up to K negatives of a single query.
///
/// `teacher_probs` and `labels` are aligned with [`TrainingGroup::member_ids`],
/// which lists the positive first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingGroup {
    pub query_id: String,
    pub positive_id: String,
    pub negative_ids: Vec<String>,
    pub teacher_probs: Vec<f64>,
    pub labels: Vec<u8>,
}

impl TrainingGroup {
    pub fn member_ids(&self) -> Vec<&str> {
        std::iter::once(self.positive_id.as_str())
            .chain(self.negative_ids.iter().map(String::as_str))
            .collect()
    }

    pub fn size(&self) -> usize {
        1 + self.negative_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        if self.teacher_probs.len() != n || self.labels.len() != n {
            return Err(Error::Validation(format!(
                "group `{}`: {n} members but {} teacher probs and {} labels",
                self.query_id,
                self.teacher_probs.len(),
                self.labels.len()
            )));
        }
        if self.negative_ids.contains(&self.positive_id) {
            return Err(Error::Validation(format!(
                "group `{}`: positive `{}` also listed as negative",
                self.query_id, self.positive_id
            )));
        }
        if self.labels[0] != 1 || self.labels[1..].iter().any(|&l| l != 0) {
            return Err(Error::Validation(format!(
                "group `{}`: labels must be 1 for the positive and 0 otherwise",
                self.query_id
            )));
        }
        if let Some(p) = self.teacher_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!(
                "group `{}`: teacher probability {p} outside [0, 1]",
                self.query_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// No judgment with relevance > 0.
    NoPositive,
    /// Labeled positive absent from the candidate pool.
    PositiveNotInPool,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::NoPositive => "no_positive",
            SkipReason::PositiveNotInPool => "positive_not_in_pool",
        })
    }
}

/// Counts and per-query notes from [`assemble_groups`].
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MiningReport {
    pub queries_seen: usize,
    pub groups_emitted: usize,
    pub trusted_negatives: usize,
    pub suspected_positives: usize,
    pub hard_negatives: usize,
    /// Groups holding only the positive.
    pub positive_only_groups: Vec<String>,
    /// Groups emitted without a trusted negative because none existed.
    pub groups_without_trusted: Vec<String>,
    pub skipped: BTreeMap<String, SkipReason>,
}

/// The labeled positive used for a query: the best-ranked relevant candidate.
fn pool_positive<'a>(
    query_id: &str,
    pool: &'a [crate::corpus::RunEntry],
    qrels: &Qrels,
) -> Option<&'a crate::corpus::RunEntry> {
    pool.iter().find(|e| qrels.is_relevant(query_id, &e.video_id))
}

/// Builds one training group per query with a positive in its candidate pool.
///
/// Negatives are drawn from the top `first_stage_depth` candidates. Hard
/// negatives fill the K slots first; one slot goes to a trusted negative when
/// `require_trusted` holds and one exists; any remaining slots fall back to
/// trusted negatives. Order within a class is a seeded shuffle, and queries
/// are visited in id order so the output depends only on the inputs and seed.
pub fn assemble_groups(
    run: &RankedRun,
    qrels: &Qrels,
    judgments: &TeacherIndex,
    config: &MiningConfig,
    seed: u64,
) -> Result<(Vec<TrainingGroup>, MiningReport)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    let mut report = MiningReport::default();
    let k = config.negatives_per_query;

    for (qid, list) in run.iter() {
        report.queries_seen += 1;
        if !qrels.has_positive(qid) {
            report.skipped.insert(qid.to_string(), SkipReason::NoPositive);
            continue;
        }
        let pool = &list[..list.len().min(config.first_stage_depth)];
        let Some(positive) = pool_positive(qid, pool, qrels) else {
            report.skipped.insert(qid.to_string(), SkipReason::PositiveNotInPool);
            continue;
        };
        let ids: Vec<&str> = pool.iter().map(|e| e.video_id.as_str()).collect();
        let mut part = partition_candidates(qid, &ids, qrels, judgments, config)?;
        report.trusted_negatives += part.trusted_negatives.len();
        report.suspected_positives += part.suspected_positives.len();
        report.hard_negatives += part.hard_negatives.len();

        part.hard_negatives.shuffle(&mut rng);
        part.trusted_negatives.shuffle(&mut rng);

        let reserved = usize::from(config.require_trusted && !part.trusted_negatives.is_empty());
        let n_hard = part.hard_negatives.len().min(k - reserved.min(k));
        let mut negatives: Vec<String> = part.hard_negatives[..n_hard].to_vec();
        let n_trusted = part.trusted_negatives.len().min(k - n_hard);
        negatives.extend_from_slice(&part.trusted_negatives[..n_trusted]);

        if negatives.is_empty() {
            warn!("query `{qid}`: no usable negatives, emitting positive-only group");
            report.positive_only_groups.push(qid.to_string());
        }
        if config.require_trusted && part.trusted_negatives.is_empty() {
            report.groups_without_trusted.push(qid.to_string());
        }

        let mut teacher_probs = Vec::with_capacity(1 + negatives.len());
        teacher_probs.push(judgments.require(qid, &positive.video_id)?.p_yes);
        for vid in &negatives {
            teacher_probs.push(judgments.require(qid, vid)?.p_yes);
        }
        let mut labels = vec![0u8; 1 + negatives.len()];
        labels[0] = 1;
        groups.push(TrainingGroup {
            query_id: qid.to_string(),
            positive_id: positive.video_id.clone(),
            negative_ids: negatives,
            teacher_probs,
            labels,
        });
    }
    report.groups_emitted = groups.len();
    Ok((groups, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The query has no judgment with relevance > 0.
    NoPositive,
    /// Rule (a): positive not within the first-stage depth.
    PositiveBeyondDepth,
    /// Rule (b): top non-positive scores more than `ratio ×` the positive.
    NegativeDominates,
    /// Rule (c): the teacher judged the positive non-relevant.
    TeacherRejectsPositive,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoPositive => "no_positive",
            RejectReason::PositiveBeyondDepth => "positive_beyond_depth",
            RejectReason::NegativeDominates => "negative_dominates",
            RejectReason::TeacherRejectsPositive => "teacher_rejects_positive",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    pub rejected: BTreeMap<String, RejectReason>,
    /// Queries where the ratio rule was skipped because the positive scored ≤ 0.
    pub ratio_rule_disabled: Vec<String>,
}

impl FilterReport {
    pub fn histogram(&self) -> BTreeMap<RejectReason, usize> {
        let mut h = BTreeMap::new();
        for r in self.rejected.values() {
            *h.entry(*r).or_insert(0) += 1;
        }
        h
    }
}

/// Keeps queries whose positive is retrievable, not dominated by a negative
/// and accepted by the teacher; rules are checked in that order and the first
/// failing one is reported.
///
/// Every query of `qrels` that has a positive must be present in `run`;
/// queries of `run` without a positive are rejected.
pub fn filter_queries(
    run: &RankedRun,
    qrels: &Qrels,
    judgments: &TeacherIndex,
    config: &MiningConfig,
) -> Result<FilterReport> {
    config.validate()?;
    if let Some(q) = qrels.query_ids().find(|q| qrels.has_positive(q) && run.get(q).is_none()) {
        return Err(Error::Validation(format!("query `{q}` is absent from the run")));
    }
    let mut report = FilterReport::default();
    for (qid, list) in run.iter() {
        if !qrels.has_positive(qid) {
            report.rejected.insert(qid.to_string(), RejectReason::NoPositive);
            continue;
        }
        let positive = list
            .iter()
            .find(|e| qrels.is_relevant(qid, &e.video_id))
            .filter(|e| e.rank <= config.first_stage_depth);
        let Some(positive) = positive else {
            report.rejected.insert(qid.to_string(), RejectReason::PositiveBeyondDepth);
            continue;
        };
        if positive.score > 0.0 {
            let top_negative = list.iter().find(|e| !qrels.is_relevant(qid, &e.video_id));
            if let Some(neg) = top_negative {
                if neg.score > config.positive_score_ratio * positive.score {
                    report.rejected.insert(qid.to_string(), RejectReason::NegativeDominates);
                    continue;
                }
            }
        } else {
            warn!("query `{qid}`: positive first-stage score {} ≤ 0, ratio rule skipped", positive.score);
            report.ratio_rule_disabled.push(qid.to_string());
        }
        if judgments.require(qid, &positive.video_id)?.label == 0 {
            report.rejected.insert(qid.to_string(), RejectReason::TeacherRejectsPositive);
            continue;
        }
        report.kept.push(qid.to_string());
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub groups: usize,
    pub total_records: usize,
    pub positive_pairs: usize,
    pub negative_pairs: usize,
    /// Number of groups by negative count.
    pub negatives_histogram: BTreeMap<usize, usize>,
    pub mean_candidates_per_query: f64,
}

pub fn dataset_summary(groups: &[TrainingGroup]) -> DatasetSummary {
    let mut s = DatasetSummary { groups: groups.len(), ..Default::default() };
    for g in groups {
        s.total_records += g.size();
        s.positive_pairs += 1;
        s.negative_pairs += g.negative_ids.len();
        *s.negatives_histogram.entry(g.negative_ids.len()).or_insert(0) += 1;
    }
    if !groups.is_empty() {
        s.mean_candidates_per_query = s.total_records as f64 / groups.len() as f64;
    }
    s
}

pub fn parse_groups(text: &str, source_name: &str) -> Result<Vec<TrainingGroup>> {
    jsonl::parse_lines::<TrainingGroup>(text, source_name)?
        .into_iter()
        .map(|(line, g)| {
            g.validate().map_err(|e| Error::parse(source_name, line, e.to_string()))?;
            Ok(g)
        })
        .collect()
}

pub fn load_groups(path: impl AsRef<Path>) -> Result<Vec<TrainingGroup>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_groups(&text, &path.display().to_string())
}

pub fn format_groups(groups: &[TrainingGroup]) -> String {
    jsonl::format_lines(groups)
}

pub fn write_groups(groups: &[TrainingGroup], path: impl AsRef<Path>) -> Result<()> {
    jsonl::write_lines(path.as_ref(), groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{RunEntry, TeacherJudgment};

    fn judge(q: &str, v: &str, label: u8, margin: f64, p_yes: f64) -> TeacherJudgment {
        TeacherJudgment { query_id: q.into(), video_id: v.into(), label, margin, p_yes }
    }

    #[test]
    fn worked_classification_examples() {
        let c = MiningConfig::default();
        assert_eq!(classify(0, -7.0, &c), CandidateClass::TrustedNegative);
        assert_eq!(classify(1, 0.0, &c), CandidateClass::SuspectedPositive);
        assert_eq!(classify(0, -3.0, &c), CandidateClass::HardNegative);
    }

    #[test]
    fn threshold_boundaries() {
        let c = MiningConfig::default();
        assert_eq!(classify(0, -6.0, &c), CandidateClass::TrustedNegative);
        assert_eq!(classify(1, -8.0, &c), CandidateClass::HardNegative);
        assert_eq!(classify(1, -7.999, &c), CandidateClass::SuspectedPositive);
        // A yes-verdict with a strongly negative margin falls through to hard.
        assert_eq!(classify(1, -20.0, &c), CandidateClass::HardNegative);
    }

    #[test]
    fn partition_skips_positives_and_requires_judgments() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "pos", 1).unwrap();
        let idx = TeacherIndex::new(vec![
            judge("q", "t", 0, -7.0, 0.01),
            judge("q", "s", 1, 0.0, 0.6),
            judge("q", "h", 0, -3.0, 0.1),
        ])
        .unwrap();
        let c = MiningConfig::default();
        let p = partition_candidates("q", &["pos", "t", "s", "h"], &qrels, &idx, &c).unwrap();
        assert_eq!(p.trusted_negatives, ["t"]);
        assert_eq!(p.suspected_positives, ["s"]);
        assert_eq!(p.hard_negatives, ["h"]);
        let err = partition_candidates("q", &["pos", "x"], &qrels, &idx, &c).unwrap_err();
        assert!(err.to_string().contains("x"));
    }

    fn run_of(q: &str, ids: &[&str]) -> RankedRun {
        RankedRun::from_entries(ids.iter().enumerate().map(|(i, v)| {
            (
                q.to_string(),
                RunEntry { video_id: v.to_string(), rank: i + 1, score: 100.0 - i as f64, tag: "fs".into() },
            )
        }))
        .unwrap()
    }

    #[test]
    fn prefers_one_hard_and_one_trusted() {
        let run = run_of("q", &["h1", "pos", "h2", "t1", "h3", "t2"]);
        let mut qrels = Qrels::new();
        qrels.insert("q", "pos", 1).unwrap();
        let idx = TeacherIndex::new(vec![
            judge("q", "pos", 1, 3.0, 0.9),
            judge("q", "h1", 0, -1.0, 0.3),
            judge("q", "h2", 0, -2.0, 0.2),
            judge("q", "h3", 1, -9.0, 0.4),
            judge("q", "t1", 0, -7.0, 0.01),
            judge("q", "t2", 0, -9.0, 0.02),
        ])
        .unwrap();
        let (groups, report) = assemble_groups(&run, &qrels, &idx, &MiningConfig::default(), 3).unwrap();
        assert_eq!(groups.len(), 1);
        let g = &groups[0];
        assert_eq!(g.size(), 3);
        assert!(g.negative_ids[0].starts_with('h'));
        assert!(g.negative_ids[1].starts_with('t'));
        assert_eq!(g.labels, [1, 0, 0]);
        assert_eq!(g.teacher_probs[0], 0.9);
        assert_eq!((report.hard_negatives, report.trusted_negatives), (3, 2));
    }

    #[test]
    fn without_require_trusted_only_hard_negatives_are_used() {
        let run = run_of("q", &["pos", "h1", "h2", "t1"]);
        let mut qrels = Qrels::new();
        qrels.insert("q", "pos", 1).unwrap();
        let idx = TeacherIndex::new(vec![
            judge("q", "pos", 1, 3.0, 0.9),
            judge("q", "h1", 0, -1.0, 0.3),
            judge("q", "h2", 0, -2.0, 0.2),
            judge("q", "t1", 0, -7.0, 0.01),
        ])
        .unwrap();
        let cfg = MiningConfig { require_trusted: false, ..Default::default() };
        let (groups, _) = assemble_groups(&run, &qrels, &idx, &cfg, 1).unwrap();
        let mut negs = groups[0].negative_ids.clone();
        negs.sort();
        assert_eq!(negs, ["h1", "h2"]);
    }

    #[test]
    fn all_suspected_gives_positive_only_group() {
        let run = run_of("q", &["pos", "s1", "s2"]);
        let mut qrels = Qrels::new();
        qrels.insert("q", "pos", 1).unwrap();
        let idx = TeacherIndex::new(vec![
            judge("q", "pos", 1, 3.0, 0.9),
            judge("q", "s1", 1, 1.0, 0.7),
            judge("q", "s2", 1, -2.0, 0.6),
        ])
        .unwrap();
        let (groups, report) = assemble_groups(&run, &qrels, &idx, &MiningConfig::default(), 0).unwrap();
        assert_eq!(groups[0].size(), 1);
        assert_eq!(report.positive_only_groups, ["q"]);
    }

    #[test]
    fn skips_are_reported() {
        let run = RankedRun::from_entries([("a", "x"), ("b", "y")].iter().map(|(q, v)| {
            (q.to_string(), RunEntry { video_id: v.to_string(), rank: 1, score: 1.0, tag: "t".into() })
        }))
        .unwrap();
        let mut qrels = Qrels::new();
        qrels.insert("b", "elsewhere", 1).unwrap();
        let (groups, report) =
            assemble_groups(&run, &qrels, &TeacherIndex::default(), &MiningConfig::default(), 0).unwrap();
        assert!(groups.is_empty());
        assert_eq!(report.skipped["a"], SkipReason::NoPositive);
        assert_eq!(report.skipped["b"], SkipReason::PositiveNotInPool);
    }

    #[test]
    fn summary_counts() {
        let g = |n: usize| TrainingGroup {
            query_id: format!("q{n}"),
            positive_id: "p".into(),
            negative_ids: (0..n).map(|i| format!("n{i}")).collect(),
            teacher_probs: vec![0.5; n + 1],
            labels: std::iter::once(1).chain(std::iter::repeat_n(0, n)).collect(),
        };
        let s = dataset_summary(&[g(2), g(1)]);
        assert_eq!((s.total_records, s.positive_pairs, s.negative_pairs), (5, 2, 3));
        assert_eq!(s.mean_candidates_per_query, 2.5);
        let e = dataset_summary(&[]);
        assert_eq!((e.total_records, e.groups, e.mean_candidates_per_query), (0, 0, 0.0));
        let mixed = dataset_summary(&[g(3), g(3), g(2), g(1), g(0), g(2)]);
        assert_eq!(mixed.negatives_histogram, BTreeMap::from([(0, 1), (1, 1), (2, 2), (3, 2)]));
        assert_eq!(mixed.total_records, 4 + 4 + 3 + 2 + 1 + 3);
    }

    #[test]
    fn group_file_validation() {
        let bad = r#"{"query_id":"q","positive_id":"p","negative_ids":["p"],"teacher_probs":[0.5,0.5],"labels":[1,0]}"#;
        assert!(parse_groups(bad, "g").is_err());
        let bad =
            r#"{"query_id":"q","positive_id":"p","negative_ids":["n"],"teacher_probs":[0.5],"labels":[1,0]}"#;
        assert!(parse_groups(bad, "g").is_err());
        let ok = r#"{"query_id":"q","positive_id":"p","negative_ids":["n"],"teacher_probs":[0.5,0.1],"labels":[1,0]}"#;
        assert_eq!(parse_groups(ok, "g").unwrap().len(), 1);
    }
}
