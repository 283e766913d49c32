//! Training losses over logit-delta scores and their analytic gradients.
//!
//! A query group holds one positive and its negatives. The composite loss is
//!
//! ```text
//! total = [pair]·L_pair + λ_teacher·[teacher]·L_teacher + λ_point·[point]·L_point
//! ```
//!
//! where `L_pair = −log softmax(s/τ_pair)[positive]`, and `L_teacher` and
//! `L_point` are per-candidate binary cross-entropies with logits, averaged
//! over the group. Brackets are the ablation switches.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaptionSample, FeatureStore};
use crate::error::{Error, Result};
use crate::mining::TrainingGroup;
use crate::scorer::{self, ScorerParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub tau_pair: f64,
    pub tau_teacher: f64,
    pub tau_point: f64,
    pub lambda_teacher: f64,
    pub lambda_point: f64,
    /// Pointwise target for negatives.
    pub soft_negative_target: f64,
    /// Pointwise weight for negatives.
    pub negative_weight: f64,
    pub enable_pair: bool,
    pub enable_teacher: bool,
    pub enable_point: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            tau_pair: 10.0,
            tau_teacher: 1.0,
            tau_point: 1.0,
            lambda_teacher: 5.0,
            lambda_point: 0.5,
            soft_negative_target: 0.1,
            negative_weight: 0.5,
            enable_pair: true,
            enable_teacher: true,
            enable_point: true,
        }
    }
}

impl ObjectiveConfig {
    /// Pairwise term only.
    pub fn pairwise_only() -> Self {
        ObjectiveConfig { enable_teacher: false, enable_point: false, ..Self::default() }
    }

    /// The term combinations compared in loss ablations: P, P+PT, P+T and
    /// P+PT+T, each derived from `self`.
    pub fn ablations(&self) -> Vec<ObjectiveConfig> {
        [(false, false), (false, true), (true, false), (true, true)]
            .into_iter()
            .map(|(teacher, point)| ObjectiveConfig {
                enable_pair: true,
                enable_teacher: teacher,
                enable_point: point,
                ..self.clone()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in
            [("tau_pair", self.tau_pair), ("tau_teacher", self.tau_teacher), ("tau_point", self.tau_point)]
        {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {t}")));
            }
        }
        for (name, l) in [("lambda_teacher", self.lambda_teacher), ("lambda_point", self.lambda_point)] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {l}")));
            }
        }
        if !(0.0..1.0).contains(&self.soft_negative_target) {
            return Err(Error::Config(format!(
                "soft_negative_target must lie in [0, 1), got {}",
                self.soft_negative_target
            )));
        }
        if !(self.negative_weight > 0.0 && self.negative_weight.is_finite()) {
            return Err(Error::Config(format!(
                "negative_weight must be positive, got {}",
                self.negative_weight
            )));
        }
        Ok(())
    }

    /// Short label of the enabled terms, e.g. `P,PT,T`.
    pub fn ablation_label(&self) -> String {
        let mut parts = Vec::new();
        if self.enable_pair {
            parts.push("P");
        }
        if self.enable_point {
            parts.push("PT");
        }
        if self.enable_teacher {
            parts.push("T");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join(",")
        }
    }
}

/// Loss components of one group and the gradient of `total` w.r.t. each score.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupLossBreakdown {
    pub l_pair: f64,
    pub l_teacher: f64,
    pub l_point: f64,
    pub total: f64,
    pub per_candidate_score_grads: Vec<f64>,
}

/// Negative log-likelihood of a caption: `−Σ_t log p(c_t)`.
pub fn caption_nll(sample: &CaptionSample) -> Result<f64> {
    sample.validate()?;
    Ok(-sample.token_logprobs.iter().sum::<f64>())
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("empty score vector".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    Ok(())
}

/// Temperature-scaled softmax with max subtraction.
pub fn group_softmax(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_scores(scores)?;
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// `−log p_+` under [`group_softmax`] and its gradient `(p_i − 1[i=+]) / τ`.
pub fn pairwise_loss(scores: &[f64], positive_index: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument("pairwise loss needs at least two candidates".into()));
    }
    if positive_index >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "positive index {positive_index} out of range for {} candidates",
            scores.len()
        )));
    }
    let p = group_softmax(scores, tau)?;
    // log-sum-exp form keeps the loss accurate when p_+ is close to 1.
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = scores.iter().map(|s| ((s - max) / tau).exp()).sum::<f64>().ln() + max / tau;
    let loss = (lse - scores[positive_index] / tau).max(0.0);
    let grad = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| (pi - if i == positive_index { 1.0 } else { 0.0 }) / tau)
        .collect();
    Ok((loss, grad))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy with logits, `−[y ln σ(x) + (1−y) ln(1−σ(x))]`,
/// and its derivative `σ(x) − y`.
pub fn bce_with_logits(x: f64, target: f64) -> (f64, f64) {
    // −y ln σ(x) − (1−y) ln σ(−x) = softplus(x) − y·x
    let loss = softplus(x) - target * x;
    (loss.max(0.0), sigmoid(x) - target)
}

fn check_target(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("target probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Distillation toward the teacher's yes-probability.
pub fn teacher_loss(score: f64, p_yes_teacher: f64, tau: f64) -> Result<(f64, f64)> {
    check_target(p_yes_teacher)?;
    let (loss, g) = bce_with_logits(score / tau, p_yes_teacher);
    Ok((loss, g / tau))
}

/// Target and weight of the pointwise term for a binary label.
pub fn pointwise_target(label: u8, config: &ObjectiveConfig) -> (f64, f64) {
    if label == 1 {
        (1.0, 1.0)
    } else {
        (config.soft_negative_target, config.negative_weight)
    }
}

/// Weighted calibration loss with softened negative targets.
pub fn pointwise_loss(score: f64, label: u8, config: &ObjectiveConfig) -> Result<(f64, f64)> {
    if label > 1 {
        return Err(Error::InvalidArgument(format!("label {label} is not 0 or 1")));
    }
    let (target, weight) = pointwise_target(label, config);
    let (loss, g) = bce_with_logits(score / config.tau_point, target);
    Ok((weight * loss, weight * g / config.tau_point))
}

/// Composite loss of one query group.
pub fn group_loss(
    scores: &[f64],
    positive_index: usize,
    teacher_probs: &[f64],
    labels: &[u8],
    config: &ObjectiveConfig,
) -> Result<GroupLossBreakdown> {
    let n = scores.len();
    check_scores(scores)?;
    if teacher_probs.len() != n || labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "inconsistent lengths: {n} scores, {} teacher probs, {} labels",
            teacher_probs.len(),
            labels.len()
        )));
    }
    if positive_index >= n {
        return Err(Error::InvalidArgument(format!("positive index {positive_index} out of range")));
    }
    let ones: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i).collect();
    if ones != [positive_index] {
        return Err(Error::InvalidArgument(format!(
            "labels must hold exactly one 1 at the positive index {positive_index}"
        )));
    }

    let mut grads = vec![0.0; n];
    let mut out = GroupLossBreakdown::default();

    if config.enable_pair {
        if n >= 2 {
            let (l, g) = pairwise_loss(scores, positive_index, config.tau_pair)?;
            out.l_pair = l;
            for (acc, gi) in grads.iter_mut().zip(g) {
                *acc += gi;
            }
        } else {
            warn!("single-candidate group: pairwise term skipped");
        }
    }

    let inv_n = 1.0 / n as f64;
    if config.enable_teacher {
        let w = config.lambda_teacher * inv_n;
        for i in 0..n {
            let (l, g) = teacher_loss(scores[i], teacher_probs[i], config.tau_teacher)?;
            out.l_teacher += l * inv_n;
            grads[i] += w * g;
        }
    }
    if config.enable_point {
        let w = config.lambda_point * inv_n;
        for i in 0..n {
            let (l, g) = pointwise_loss(scores[i], labels[i], config)?;
            out.l_point += l * inv_n;
            grads[i] += w * g;
        }
    }

    out.total = out.l_pair + config.lambda_teacher * out.l_teacher + config.lambda_point * out.l_point;
    out.per_candidate_score_grads = grads;
    Ok(out)
}

/// Chain rule from per-candidate score gradients to parameter gradients.
///
/// `vs` are the candidate video vectors, all paired with query vector `q`.
pub fn params_gradient_from_scores(
    dim: usize,
    q: &[f64],
    vs: &[&[f64]],
    score_grads: &[f64],
) -> Result<ScorerParams> {
    let mut grad = ScorerParams::zeros(dim)?;
    if q.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: q.len() });
    }
    if vs.len() != score_grads.len() {
        return Err(Error::InvalidArgument("one score gradient per candidate required".into()));
    }
    for (v, &g) in vs.iter().zip(score_grads) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
        }
        let w = grad.w_yes_mut();
        for a in 0..dim {
            let ga = g * q[a];
            for b in 0..dim {
                w[a * dim + b] += ga * v[b];
            }
        }
        *grad.b_yes_mut() += g;
    }
    // s = ℓ_yes − ℓ_no, so the no-head receives the negated gradient.
    let neg: Vec<f64> = grad.w_yes().iter().map(|x| -x).collect();
    grad.w_no_mut().copy_from_slice(&neg);
    *grad.b_no_mut() = -grad.b_yes();
    Ok(grad)
}

/// Scores the group's members, evaluates [`group_loss`] and back-propagates to
/// the scorer parameters.
pub fn param_gradients(
    group: &TrainingGroup,
    params: &ScorerParams,
    store: &FeatureStore,
    config: &ObjectiveConfig,
) -> Result<(GroupLossBreakdown, ScorerParams)> {
    let q = store.query(&group.query_id)?;
    let ids = group.member_ids();
    let vs: Vec<&[f64]> = ids.iter().map(|id| store.video(id)).collect::<Result<_>>()?;
    let scores: Vec<f64> =
        vs.iter().map(|v| scorer::score_pair(params, q, v).map(|r| r.score)).collect::<Result<_>>()?;
    let breakdown = group_loss(&scores, 0, &group.teacher_probs, &group.labels, config)?;
    let grad = params_gradient_from_scores(params.dim(), q, &vs, &breakdown.per_candidate_score_grads)?;
    Ok((breakdown, grad))
}
