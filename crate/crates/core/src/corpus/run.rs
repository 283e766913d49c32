use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One line of a ranked run, minus the query id.
#[derive(Clone, Debug, PartialEq)]
pub struct RunEntry {
    pub video_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Per-query ranked candidate lists. Scores are higher-is-better.
///
/// Construction always goes through validation: ranks are `1..=N` per query,
/// scores are non-increasing with rank and no `(query, video)` pair repeats.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedRun {
    queries: BTreeMap<String, Vec<RunEntry>>,
}

impl RankedRun {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a run from flat `(query, entry)` pairs in any order.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, RunEntry)>,
    {
        let mut queries: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        for (qid, entry) in entries {
            queries.entry(qid).or_default().push(entry);
        }
        for list in queries.values_mut() {
            list.sort_by_key(|e| e.rank);
        }
        let run = RankedRun { queries };
        run.validate()?;
        Ok(run)
    }

    /// Builds a run from already-ordered `(video, score)` lists, assigning ranks `1..=N`.
    pub fn from_ordered<I, L>(lists: I, tag: &str) -> Result<Self>
    where
        I: IntoIterator<Item = (String, L)>,
        L: IntoIterator<Item = (String, f64)>,
    {
        let mut queries = BTreeMap::new();
        for (qid, list) in lists {
            let entries: Vec<RunEntry> = list
                .into_iter()
                .enumerate()
                .map(|(i, (video_id, score))| RunEntry { video_id, rank: i + 1, score, tag: tag.to_string() })
                .collect();
            if queries.insert(qid.clone(), entries).is_some() {
                return Err(Error::Validation(format!("query `{qid}` listed twice")));
            }
        }
        let run = RankedRun { queries };
        run.validate()?;
        Ok(run)
    }

    pub(crate) fn from_validated(queries: BTreeMap<String, Vec<RunEntry>>) -> Result<Self> {
        let run = RankedRun { queries };
        run.validate()?;
        Ok(run)
    }

    fn validate(&self) -> Result<()> {
        for (qid, list) in &self.queries {
            let mut seen = HashSet::with_capacity(list.len());
            for (i, e) in list.iter().enumerate() {
                if e.rank != i + 1 {
                    return Err(Error::Validation(format!(
                        "rank gap for query `{qid}`: expected rank {}, found {}",
                        i + 1,
                        e.rank
                    )));
                }
                if !e.score.is_finite() {
                    return Err(Error::NonFinite(format!("score of ({qid}, {}) is {}", e.video_id, e.score)));
                }
                if !seen.insert(e.video_id.as_str()) {
                    return Err(Error::Validation(format!("duplicate pair ({qid}, {})", e.video_id)));
                }
                if i > 0 && e.score > list[i - 1].score {
                    return Err(Error::Validation(format!(
                        "score increases with rank for query `{qid}` at rank {}",
                        e.rank
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn len(&self) -> usize {
        self.queries.values().map(Vec::len).sum()
    }

    /// Query ids in canonical (sorted) order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    /// The rank-ordered entries of one query.
    pub fn get(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.queries.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.queries.iter().map(|(q, l)| (q.as_str(), l.as_slice()))
    }

    /// Largest per-query list length.
    pub fn max_depth(&self) -> usize {
        self.queries.values().map(Vec::len).max().unwrap_or(0)
    }

    /// Keeps only the listed queries.
    pub fn restrict_to<'a>(&self, query_ids: impl IntoIterator<Item = &'a str>) -> RankedRun {
        let mut queries = BTreeMap::new();
        for q in query_ids {
            if let Some(list) = self.queries.get(q) {
                queries.insert(q.to_string(), list.clone());
            }
        }
        RankedRun { queries }
    }

    /// Keeps at most `depth` entries per query.
    pub fn truncated(&self, depth: usize) -> RankedRun {
        let queries =
            self.queries.iter().map(|(q, l)| (q.clone(), l[..l.len().min(depth)].to_vec())).collect();
        RankedRun { queries }
    }
}

/// Parses a six-column run: `<query> Q0 <video> <rank> <score> <tag>`.
pub fn parse_run(text: &str, source_name: &str) -> Result<RankedRun> {
    let mut entries = Vec::new();
    let mut seen_pairs = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad rank `{}`", cols[3])))?;
        if rank == 0 {
            return Err(Error::parse(source_name, lineno, "rank must be positive"));
        }
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad score `{}`", cols[4])))?;
        if !score.is_finite() {
            return Err(Error::parse(source_name, lineno, "non-finite score"));
        }
        if !seen_pairs.insert((cols[0].to_string(), cols[2].to_string())) {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("duplicate pair ({}, {})", cols[0], cols[2]),
            ));
        }
        entries.push((
            cols[0].to_string(),
            RunEntry { video_id: cols[2].to_string(), rank, score, tag: cols[5].to_string() },
        ));
    }
    // Rank duplicates collapse into a gap after sorting, which validate reports.
    RankedRun::from_entries(entries)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RankedRun> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, &path.display().to_string())
}

/// Renders a run with every line tagged `tag`. Scores use the shortest
/// representation that parses back to the same value.
pub fn format_run(run: &RankedRun, tag: &str) -> String {
    let mut out = String::with_capacity(run.len() * 32);
    for (qid, list) in run.iter() {
        for e in list {
            let _ = writeln!(out, "{qid} Q0 {} {} {:?} {tag}", e.video_id, e.rank, e.score);
        }
    }
    out
}

pub fn write_run(run: &RankedRun, path: impl AsRef<Path>, tag: &str) -> Result<()> {
    let path = path.as_ref();
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!("run tag `{tag}` must be a single token")));
    }
    fs::write(path, format_run(run, tag)).map_err(|e| Error::io(path, e))
}
