use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl;
use crate::error::{Error, Result};

/// A teacher reranker's verdict on one (query, video) pair.
///
/// `margin` is the teacher's yes-logit minus no-logit; `label` is its binary
/// answer. The two are kept as independent fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherJudgment {
    pub query_id: String,
    pub video_id: String,
    pub label: u8,
    pub margin: f64,
    pub p_yes: f64,
}

impl TeacherJudgment {
    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Validation(format!("label {} is not 0 or 1", self.label)));
        }
        if !self.margin.is_finite() {
            return Err(Error::NonFinite(format!("margin {}", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.p_yes) {
            return Err(Error::Validation(format!("p_yes {} outside [0, 1]", self.p_yes)));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJudgment {
    query_id: String,
    video_id: String,
    label: i64,
    margin: f64,
    p_yes: f64,
}

pub fn parse_teacher(text: &str, source_name: &str) -> Result<Vec<TeacherJudgment>> {
    convert(jsonl::parse_lines(text, source_name)?, source_name)
}

pub fn load_teacher(path: impl AsRef<Path>) -> Result<Vec<TeacherJudgment>> {
    let path = path.as_ref();
    convert(jsonl::read_lines(path)?, &path.display().to_string())
}

fn convert(raw: Vec<(usize, RawJudgment)>, source_name: &str) -> Result<Vec<TeacherJudgment>> {
    raw.into_iter()
        .map(|(line, r)| {
            let label = u8::try_from(r.label)
                .ok()
                .filter(|l| *l <= 1)
                .ok_or_else(|| Error::parse(source_name, line, format!("label {} is not 0 or 1", r.label)))?;
            let j = TeacherJudgment {
                query_id: r.query_id,
                video_id: r.video_id,
                label,
                margin: r.margin,
                p_yes: r.p_yes,
            };
            j.validate().map_err(|e| Error::parse(source_name, line, e.to_string()))?;
            Ok(j)
        })
        .collect()
}

pub fn write_teacher(judgments: &[TeacherJudgment], path: impl AsRef<Path>) -> Result<()> {
    jsonl::write_lines(path.as_ref(), judgments)
}

/// Lookup of judgments by `(query, video)`.
#[derive(Clone, Debug, Default)]
pub struct TeacherIndex {
    by_pair: BTreeMap<(String, String), TeacherJudgment>,
}

impl TeacherIndex {
    pub fn new(judgments: impl IntoIterator<Item = TeacherJudgment>) -> Result<Self> {
        let mut by_pair = BTreeMap::new();
        for j in judgments {
            j.validate()?;
            let key = (j.query_id.clone(), j.video_id.clone());
            if by_pair.contains_key(&key) {
                return Err(Error::Validation(format!(
                    "duplicate teacher judgment for ({}, {})",
                    key.0, key.1
                )));
            }
            by_pair.insert(key, j);
        }
        Ok(TeacherIndex { by_pair })
    }

    pub fn get(&self, query_id: &str, video_id: &str) -> Option<&TeacherJudgment> {
        self.by_pair.get(&(query_id.to_string(), video_id.to_string()))
    }

    pub fn require(&self, query_id: &str, video_id: &str) -> Result<&TeacherJudgment> {
        self.get(query_id, video_id).ok_or_else(|| Error::MissingJudgment {
            query_id: query_id.to_string(),
            video_id: video_id.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.by_pair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_pair.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_record() {
        let js =
            parse_teacher(r#"{"query_id":"q1","video_id":"v2","label":0,"margin":-7.0,"p_yes":0.02}"#, "t")
                .unwrap();
        assert_eq!(js[0].label, 0);
        assert_eq!(js[0].margin, -7.0);
        assert_eq!(js[0].p_yes, 0.02);
    }

    #[test]
    fn p_yes_out_of_range() {
        let err =
            parse_teacher(r#"{"query_id":"q1","video_id":"v2","label":0,"margin":-7.0,"p_yes":1.3}"#, "t")
                .unwrap_err();
        assert!(err.to_string().contains("p_yes"), "{err}");
    }

    #[test]
    fn bad_label() {
        let err =
            parse_teacher(r#"{"query_id":"q1","video_id":"v2","label":2,"margin":-7.0,"p_yes":0.5}"#, "t")
                .unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn duplicate_pair_rejected_by_index() {
        let j =
            TeacherJudgment { query_id: "q".into(), video_id: "v".into(), label: 1, margin: 1.0, p_yes: 0.7 };
        assert!(TeacherIndex::new(vec![j.clone(), j]).is_err());
    }
}
