//! Toy yes/no-logit scorer.
//!
//! Two independent bilinear heads read a query vector `q` and a video vector `v`:
//!
//! ```text
//! logit_yes = qᵀ W_yes v + b_yes
//! logit_no  = qᵀ W_no  v + b_no
//! score     = logit_yes − logit_no
//! ```
//!
//! Ranking uses only `score`, so shifting both logits by a constant never
//! changes an ordering.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{FeatureStore, RankedRun, RunEntry};
use crate::error::{Error, Result};

/// Scorer parameters in one flat buffer laid out as
/// `[W_yes (row-major, dim²), b_yes, W_no (row-major, dim²), b_no]`.
///
/// Parameter gradients use the same type and layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    dim: usize,
    values: Vec<f64>,
}

impl ScorerParams {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("scorer dimension must be positive".into()));
        }
        Ok(ScorerParams { dim, values: vec![0.0; Self::len_for(dim)] })
    }

    pub fn from_parts(dim: usize, w_yes: Vec<f64>, b_yes: f64, w_no: Vec<f64>, b_no: f64) -> Result<Self> {
        let mut p = Self::zeros(dim)?;
        for w in [&w_yes, &w_no] {
            if w.len() != dim * dim {
                return Err(Error::DimensionMismatch { expected: dim * dim, found: w.len() });
            }
        }
        p.w_yes_mut().copy_from_slice(&w_yes);
        *p.b_yes_mut() = b_yes;
        p.w_no_mut().copy_from_slice(&w_no);
        *p.b_no_mut() = b_no;
        p.check_finite()?;
        Ok(p)
    }

    /// Total number of scalars for a given dimension.
    pub fn len_for(dim: usize) -> usize {
        2 * dim * dim + 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn d2(&self) -> usize {
        self.dim * self.dim
    }

    pub fn w_yes(&self) -> &[f64] {
        &self.values[..self.d2()]
    }

    pub fn b_yes(&self) -> f64 {
        self.values[self.d2()]
    }

    pub fn w_no(&self) -> &[f64] {
        let d2 = self.d2();
        &self.values[d2 + 1..2 * d2 + 1]
    }

    pub fn b_no(&self) -> f64 {
        self.values[2 * self.d2() + 1]
    }

    pub fn w_yes_mut(&mut self) -> &mut [f64] {
        let d2 = self.d2();
        &mut self.values[..d2]
    }

    pub fn b_yes_mut(&mut self) -> &mut f64 {
        let d2 = self.d2();
        &mut self.values[d2]
    }

    pub fn w_no_mut(&mut self) -> &mut [f64] {
        let d2 = self.d2();
        &mut self.values[d2 + 1..2 * d2 + 1]
    }

    pub fn b_no_mut(&mut self) -> &mut f64 {
        let d2 = self.d2();
        &mut self.values[2 * d2 + 1]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("scorer parameter #{i}"))),
            None => Ok(()),
        }
    }

    /// Euclidean norm of all entries.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Draws parameters from `N(0, 1/dim)` with a seeded ChaCha stream.
pub fn init_params(dim: usize, seed: u64) -> Result<ScorerParams> {
    let mut p = ScorerParams::zeros(dim)?;
    let std = 1.0 / (dim as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in p.as_mut_slice() {
        *x = normal.sample(&mut rng);
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub query_id: String,
    pub video_id: String,
    pub logit_yes: f64,
    pub logit_no: f64,
    pub score: f64,
}

/// `qᵀ W v` for a row-major square matrix.
pub(crate) fn bilinear(q: &[f64], w: &[f64], v: &[f64]) -> f64 {
    let dim = q.len();
    q.iter()
        .zip(w.chunks_exact(dim))
        .map(|(&qa, row)| qa * row.iter().zip(v).map(|(w, v)| w * v).sum::<f64>())
        .sum()
}

/// Yes/no logits for one pair.
pub fn logits(params: &ScorerParams, q: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    for len in [q.len(), v.len()] {
        if len != params.dim {
            return Err(Error::DimensionMismatch { expected: params.dim, found: len });
        }
    }
    let yes = bilinear(q, params.w_yes(), v) + params.b_yes();
    let no = bilinear(q, params.w_no(), v) + params.b_no();
    if !yes.is_finite() || !no.is_finite() {
        return Err(Error::NonFinite(format!("logits ({yes}, {no})")));
    }
    Ok((yes, no))
}

pub fn score_pair(params: &ScorerParams, q: &[f64], v: &[f64]) -> Result<ScoreRecord> {
    let (logit_yes, logit_no) = logits(params, q, v)?;
    let score = logit_yes - logit_no;
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("score {score}")));
    }
    Ok(ScoreRecord { query_id: String::new(), video_id: String::new(), logit_yes, logit_no, score })
}

/// Scores every candidate of one query, preserving input order.
pub fn score_candidates<S: AsRef<str>>(
    params: &ScorerParams,
    query_id: &str,
    candidate_ids: &[S],
    store: &FeatureStore,
) -> Result<Vec<ScoreRecord>> {
    let q = store.query(query_id)?;
    candidate_ids
        .iter()
        .map(|vid| {
            let vid = vid.as_ref();
            let v = store.video(vid)?;
            let mut rec = score_pair(params, q, v)?;
            rec.query_id = query_id.to_string();
            rec.video_id = vid.to_string();
            Ok(rec)
        })
        .collect()
}

/// Reorders the top `cutoff` candidates of every query by descending score.
///
/// Ties keep first-stage order. Candidates past the cutoff keep their
/// relative order and are appended below the head; their scores are shifted
/// so that the list stays non-increasing while first-stage gaps are kept.
/// Queries shorter than `cutoff` are reranked in full.
pub fn rerank(
    run: &RankedRun,
    params: &ScorerParams,
    store: &FeatureStore,
    cutoff: usize,
) -> Result<RankedRun> {
    if cutoff == 0 {
        return Ok(run.clone());
    }
    let mut out = std::collections::BTreeMap::new();
    for (qid, list) in run.iter() {
        let head_len = cutoff.min(list.len());
        let (head, tail) = list.split_at(head_len);
        let ids: Vec<&str> = head.iter().map(|e| e.video_id.as_str()).collect();
        let records = score_candidates(params, qid, &ids, store)?;

        let mut order: Vec<usize> = (0..head_len).collect();
        order.sort_by(|&a, &b| {
            records[b]
                .score
                .partial_cmp(&records[a].score)
                .unwrap_or(Ordering::Equal)
                .then(head[a].rank.cmp(&head[b].rank))
        });

        let mut entries: Vec<RunEntry> = order
            .iter()
            .enumerate()
            .map(|(i, &j)| RunEntry {
                video_id: head[j].video_id.clone(),
                rank: i + 1,
                score: records[j].score,
                tag: head[j].tag.clone(),
            })
            .collect();

        if let Some(first_tail) = tail.first() {
            let floor = entries.last().map(|e| e.score).unwrap_or(0.0) - 1.0;
            for (i, e) in tail.iter().enumerate() {
                entries.push(RunEntry {
                    video_id: e.video_id.clone(),
                    rank: head_len + i + 1,
                    score: floor - (first_tail.score - e.score),
                    tag: e.tag.clone(),
                });
            }
        }
        out.insert(qid.to_string(), entries);
    }
    RankedRun::from_validated(out)
}

/// Renders a checkpoint: header, then each matrix row-major with 17 significant digits.
pub fn format_checkpoint(params: &ScorerParams, comments: &[String]) -> String {
    let dim = params.dim;
    let mut out = String::new();
    out.push_str("rerankit-scorer v1\n");
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "dim {dim} matrices 2 entries {}", ScorerParams::len_for(dim));
    let fmt_row = |row: &[f64]| row.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
    out.push_str("w_yes\n");
    for row in params.w_yes().chunks_exact(dim) {
        let _ = writeln!(out, "{}", fmt_row(row));
    }
    let _ = writeln!(out, "b_yes {:.16e}", params.b_yes());
    out.push_str("w_no\n");
    for row in params.w_no().chunks_exact(dim) {
        let _ = writeln!(out, "{}", fmt_row(row));
    }
    let _ = writeln!(out, "b_no {:.16e}", params.b_no());
    out
}

struct LineCursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    source_name: &'a str,
}

impl<'a> LineCursor<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self.lines.get(self.pos).copied().ok_or_else(|| {
            Error::parse(
                self.source_name,
                self.lines.last().map_or(0, |l| l.0),
                format!("unexpected end of file, expected {what}"),
            )
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.source_name, line, msg)
    }

    fn number(&self, line: usize, s: &str) -> Result<f64> {
        let x: f64 = s.parse().map_err(|_| self.err(line, format!("bad number `{s}`")))?;
        if !x.is_finite() {
            return Err(self.err(line, format!("non-finite entry `{s}`")));
        }
        Ok(x)
    }

    fn matrix(&mut self, name: &str, dim: usize) -> Result<Vec<f64>> {
        let (n, label) = self.next(name)?;
        if label != name {
            return Err(self.err(n, format!("expected `{name}`, found `{label}`")));
        }
        let mut m = Vec::with_capacity(dim * dim);
        for _ in 0..dim {
            let (n, row) = self.next("matrix row")?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != dim {
                return Err(self.err(n, format!("expected {dim} entries, found {}", vals.len())));
            }
            for s in vals {
                m.push(self.number(n, s)?);
            }
        }
        Ok(m)
    }

    fn bias(&mut self, name: &str) -> Result<f64> {
        let (n, line) = self.next(name)?;
        match line.split_whitespace().collect::<Vec<_>>().as_slice() {
            [label, value] if *label == name => self.number(n, value),
            _ => Err(self.err(n, format!("expected `{name} <value>`"))),
        }
    }
}

pub fn parse_checkpoint(text: &str, source_name: &str) -> Result<ScorerParams> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let mut cur = LineCursor { lines, pos: 0, source_name };

    let (n, magic) = cur.next("header")?;
    if magic != "rerankit-scorer v1" {
        return Err(cur.err(n, format!("unknown checkpoint header `{magic}`")));
    }
    let (n, shape) = cur.next("shape line")?;
    let tok: Vec<&str> = shape.split_whitespace().collect();
    let dim: usize = match tok.as_slice() {
        ["dim", d, "matrices", "2", "entries", e] => {
            let d: usize = d.parse().map_err(|_| cur.err(n, format!("bad dim `{d}`")))?;
            let e: usize = e.parse().map_err(|_| cur.err(n, format!("bad entry count `{e}`")))?;
            if d == 0 || e != ScorerParams::len_for(d) {
                return Err(cur.err(n, format!("entry count {e} does not match dim {d}")));
            }
            d
        }
        _ => return Err(cur.err(n, format!("malformed shape line `{shape}`"))),
    };

    let w_yes = cur.matrix("w_yes", dim)?;
    let b_yes = cur.bias("b_yes")?;
    let w_no = cur.matrix("w_no", dim)?;
    let b_no = cur.bias("b_no")?;
    if let Some(&(n, extra)) = cur.lines.get(cur.pos) {
        return Err(cur.err(n, format!("trailing content `{extra}`")));
    }
    ScorerParams::from_parts(dim, w_yes, b_yes, w_no, b_no)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ScorerParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}

pub fn write_checkpoint(params: &ScorerParams, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_checkpoint(params, comments)).map_err(|e| Error::io(path, e))
}
