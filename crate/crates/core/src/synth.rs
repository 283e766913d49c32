//! Seeded synthetic corpora with a planted bilinear relevance signal.
//!
//! A hidden matrix `H` defines the true score `qᵀHv`. For each query the
//! direction `u = Hᵀq/|Hᵀq|` separates its candidates: the positive carries
//! `+signal·u` and each negative `−signal·u`, on top of unit-norm noise
//! orthogonal to `u`. The data is therefore linearly separable by a bilinear
//! scorer, while a randomly initialised scorer ranks it at chance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureKind, FeatureStore, Qrels, RankedRun, TeacherIndex, TeacherJudgment};
use crate::error::{Error, Result};
use crate::mining::TrainingGroup;

const SYNTH_STREAM: u64 = 0x5e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    pub queries: usize,
    pub negatives_per_query: usize,
    /// Fraction of queries in the training split.
    pub train_fraction: f64,
    /// Length of the separating component.
    pub signal: f64,
    /// Teacher margin is `teacher_scale · qᵀHv`.
    pub teacher_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 8,
            queries: 200,
            negatives_per_query: 2,
            train_fraction: 0.64,
            signal: 0.5,
            teacher_scale: 4.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub store: FeatureStore,
    pub qrels: Qrels,
    pub judgments: Vec<TeacherJudgment>,
    /// First-stage run over every query, candidates in random order.
    pub first_stage: RankedRun,
    pub train_queries: Vec<String>,
    pub heldout_queries: Vec<String>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Unit vector orthogonal to the unit vector `u`.
fn orthogonal_noise(rng: &mut ChaCha8Rng, u: &[f64]) -> Vec<f64> {
    loop {
        let mut r = gaussian(rng, u.len());
        let proj = dot(&r, u);
        r.iter_mut().zip(u).for_each(|(x, ui)| *x -= proj * ui);
        if dot(&r, &r) > 1e-12 {
            normalize(&mut r);
            return r;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn generate(config: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    if config.dim < 2 || config.queries == 0 || config.negatives_per_query == 0 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs dim ≥ 2, queries ≥ 1 and negatives ≥ 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(Error::InvalidArgument("train_fraction must lie in [0, 1]".into()));
    }
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Keep clear of the stream scorer initialisation draws from the same seed.
    rng.set_stream(SYNTH_STREAM);
    let scale = 1.0 / (d as f64).sqrt();
    let hidden: Vec<f64> = gaussian(&mut rng, d * d).into_iter().map(|x| x * scale).collect();

    let mut store = FeatureStore::new(d)?;
    let mut qrels = Qrels::default();
    let mut judgments = Vec::new();
    let mut lists = Vec::new();
    let width = config.queries.to_string().len();

    for qi in 0..config.queries {
        let qid = format!("q{qi:0width$}");
        let mut q = gaussian(&mut rng, d);
        normalize(&mut q);
        // u ∝ Hᵀq
        let mut u: Vec<f64> = (0..d).map(|j| (0..d).map(|i| q[i] * hidden[i * d + j]).sum()).collect();
        let strength = dot(&u, &u).sqrt();
        normalize(&mut u);
        store.insert(FeatureKind::Query, &qid, q)?;

        let mut candidates = Vec::new();
        for ci in 0..=config.negatives_per_query {
            let sign = if ci == 0 { 1.0 } else { -1.0 };
            let vid = format!("{qid}_v{ci}");
            let mut v = orthogonal_noise(&mut rng, &u);
            v.iter_mut().zip(&u).for_each(|(x, ui)| *x += sign * config.signal * ui);
            store.insert(FeatureKind::Video, &vid, v)?;
            let margin = config.teacher_scale * sign * config.signal * strength;
            judgments.push(TeacherJudgment {
                query_id: qid.clone(),
                video_id: vid.clone(),
                label: u8::from(margin > 0.0),
                margin,
                p_yes: sigmoid(margin),
            });
            qrels.insert(&qid, &vid, u32::from(ci == 0))?;
            candidates.push(vid);
        }
        candidates.shuffle(&mut rng);
        let scores: Vec<f64> = (0..candidates.len()).map(|_| rng.random::<f64>()).collect();
        let mut scored: Vec<(String, f64)> = candidates.into_iter().zip(scores).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        lists.push((qid, scored));
    }

    let mut ids: Vec<String> = lists.iter().map(|(q, _)| q.clone()).collect();
    ids.shuffle(&mut rng);
    let n_train = (config.train_fraction * config.queries as f64).round() as usize;
    let mut heldout_queries = ids.split_off(n_train);
    let mut train_queries = ids;
    train_queries.sort();
    heldout_queries.sort();

    Ok(SynthDataset {
        store,
        qrels,
        judgments,
        first_stage: RankedRun::from_ordered(lists, "synth")?,
        train_queries,
        heldout_queries,
    })
}

impl SynthDataset {
    pub fn teacher_index(&self) -> Result<TeacherIndex> {
        TeacherIndex::new(self.judgments.clone())
    }

    /// One group per query holding the positive and every negative.
    pub fn training_groups(&self, query_ids: &[String]) -> Result<Vec<TrainingGroup>> {
        let teacher = self.teacher_index()?;
        query_ids
            .iter()
            .map(|qid| {
                let list = self
                    .first_stage
                    .get(qid)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown query `{qid}`")))?;
                let positive = list
                    .iter()
                    .find(|e| self.qrels.is_relevant(qid, &e.video_id))
                    .expect("every synthetic query has a positive");
                let negative_ids: Vec<String> = list
                    .iter()
                    .filter(|e| e.video_id != positive.video_id)
                    .map(|e| e.video_id.clone())
                    .collect();
                let mut teacher_probs = vec![teacher.require(qid, &positive.video_id)?.p_yes];
                for v in &negative_ids {
                    teacher_probs.push(teacher.require(qid, v)?.p_yes);
                }
                let mut labels = vec![0; 1 + negative_ids.len()];
                labels[0] = 1;
                Ok(TrainingGroup {
                    query_id: qid.clone(),
                    positive_id: positive.video_id.clone(),
                    negative_ids,
                    teacher_probs,
                    labels,
                })
            })
            .collect()
    }

    pub fn run_for(&self, query_ids: &[String]) -> RankedRun {
        self.first_stage.restrict_to(query_ids.iter().map(String::as_str))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_split() {
        let ds = generate(&SynthConfig::default(), 1).unwrap();
        assert_eq!(ds.store.num_queries(), 200);
        assert_eq!(ds.store.num_videos(), 600);
        assert_eq!(ds.train_queries.len(), 128);
        assert_eq!(ds.heldout_queries.len(), 72);
        assert_eq!(ds.first_stage.len(), 600);
        let groups = ds.training_groups(&ds.train_queries).unwrap();
        assert!(groups.iter().all(|g| g.size() == 3 && g.validate().is_ok()));
    }

    #[test]
    fn seeded() {
        let a = generate(&SynthConfig::default(), 9).unwrap();
        let b = generate(&SynthConfig::default(), 9).unwrap();
        assert_eq!(a.store, b.store);
        assert_eq!(a.train_queries, b.train_queries);
    }

    #[test]
    fn teacher_agrees_with_qrels() {
        let ds = generate(&SynthConfig::default(), 2).unwrap();
        for j in &ds.judgments {
            assert_eq!(j.label == 1, ds.qrels.is_relevant(&j.query_id, &j.video_id));
        }
    }
}
