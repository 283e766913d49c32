use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::RankedRun;
use crate::error::{Error, Result};

/// A scored `(query, video)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScore {
    pub query_id: String,
    pub video_id: String,
    pub score: f64,
}

/// Parses pair scores. Lines are either `<query> <video> <score>` or
/// six-column run lines, whose rank and tag are ignored.
pub fn parse_scores(text: &str, source_name: &str) -> Result<Vec<PairScore>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (q, v, s) = match cols.len() {
            3 => (cols[0], cols[1], cols[2]),
            6 => (cols[0], cols[2], cols[4]),
            n => {
                return Err(Error::parse(source_name, lineno, format!("expected 3 or 6 columns, found {n}")))
            }
        };
        let score: f64 =
            s.parse().map_err(|_| Error::parse(source_name, lineno, format!("bad score `{s}`")))?;
        if !score.is_finite() {
            return Err(Error::parse(source_name, lineno, "non-finite score"));
        }
        if !seen.insert((q.to_string(), v.to_string())) {
            return Err(Error::parse(source_name, lineno, format!("duplicate pair ({q}, {v})")));
        }
        out.push(PairScore { query_id: q.to_string(), video_id: v.to_string(), score });
    }
    Ok(out)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<PairScore>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text, &path.display().to_string())
}

pub fn format_scores(scores: &[PairScore]) -> String {
    let mut out = String::new();
    for p in scores {
        let _ = writeln!(out, "{} {} {:?}", p.query_id, p.video_id, p.score);
    }
    out
}

pub fn write_scores(scores: &[PairScore], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_scores(scores)).map_err(|e| Error::io(path, e))
}

/// Flattens a run into pair scores in canonical order.
pub fn run_scores(run: &RankedRun) -> Vec<PairScore> {
    run.iter()
        .flat_map(|(q, list)| {
            list.iter().map(move |e| PairScore {
                query_id: q.to_string(),
                video_id: e.video_id.clone(),
                score: e.score,
            })
        })
        .collect()
}
