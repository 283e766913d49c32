use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Graded relevance judgments keyed by query, then video.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

/// Non-fatal findings reported alongside loaded qrels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QrelsWarning {
    /// The query has judgments but none with relevance > 0.
    NoPositive { query_id: String },
    /// The same judgment appeared more than once with an identical value.
    RepeatedJudgment { query_id: String, video_id: String, line: usize },
}

impl fmt::Display for QrelsWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QrelsWarning::NoPositive { query_id } => {
                write!(f, "query `{query_id}` has no positive judgment")
            }
            QrelsWarning::RepeatedJudgment { query_id, video_id, line } => {
                write!(f, "line {line}: repeated judgment ({query_id}, {video_id})")
            }
        }
    }
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment; conflicting re-insertion is an error.
    pub fn insert(&mut self, query_id: &str, video_id: &str, relevance: u32) -> Result<bool> {
        let per_query = self.judgments.entry(query_id.to_string()).or_default();
        match per_query.get(video_id) {
            Some(&old) if old != relevance => Err(Error::Validation(format!(
                "conflicting judgments for ({query_id}, {video_id}): {old} vs {relevance}"
            ))),
            Some(_) => Ok(false),
            None => {
                per_query.insert(video_id.to_string(), relevance);
                Ok(true)
            }
        }
    }

    pub fn relevance(&self, query_id: &str, video_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(video_id).copied()
    }

    /// Relevance with unjudged pairs treated as 0.
    pub fn grade(&self, query_id: &str, video_id: &str) -> u32 {
        self.relevance(query_id, video_id).unwrap_or(0)
    }

    pub fn is_relevant(&self, query_id: &str, video_id: &str) -> bool {
        self.grade(query_id, video_id) > 0
    }

    pub fn query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Videos with relevance > 0 for the query, in id order.
    pub fn positives(&self, query_id: &str) -> Vec<&str> {
        self.judgments
            .get(query_id)
            .map(|m| m.iter().filter(|(_, &r)| r > 0).map(|(v, _)| v.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn has_positive(&self, query_id: &str) -> bool {
        !self.positives(query_id).is_empty()
    }

    pub fn num_queries(&self) -> usize {
        self.judgments.len()
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments.iter().flat_map(|(q, m)| m.iter().map(move |(v, &r)| (q.as_str(), v.as_str(), r)))
    }

    fn positive_free_queries(&self) -> Vec<QrelsWarning> {
        self.judgments
            .iter()
            .filter(|(_, m)| m.values().all(|&r| r == 0))
            .map(|(q, _)| QrelsWarning::NoPositive { query_id: q.clone() })
            .collect()
    }
}

/// Parses four-column qrels: `<query> 0 <video> <relevance>`.
pub fn parse_qrels(text: &str, source_name: &str) -> Result<(Qrels, Vec<QrelsWarning>)> {
    let mut qrels = Qrels::new();
    let mut warnings = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let rel: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad relevance `{}`", cols[3])))?;
        if rel < 0 {
            return Err(Error::parse(source_name, lineno, format!("negative relevance {rel}")));
        }
        let rel =
            u32::try_from(rel).map_err(|_| Error::parse(source_name, lineno, "relevance out of range"))?;
        let fresh = qrels
            .insert(cols[0], cols[2], rel)
            .map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        if !fresh {
            warnings.push(QrelsWarning::RepeatedJudgment {
                query_id: cols[0].to_string(),
                video_id: cols[2].to_string(),
                line: lineno,
            });
        }
    }
    warnings.extend(qrels.positive_free_queries());
    Ok((qrels, warnings))
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<(Qrels, Vec<QrelsWarning>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text, &path.display().to_string())
}

pub fn format_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (q, v, r) in qrels.iter() {
        let _ = writeln!(out, "{q} 0 {v} {r}");
    }
    out
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_qrels(qrels)).map_err(|e| Error::io(path, e))
}
