//! Local logit-additive decision policies that implement [`ModelClient`].
//!
//! A policy reads the structured sample from the call context, so it never
//! looks at pixels. For a decision turn,
//! `p = logistic(alpha + λ_mode · (beta_net · net + Σ weights) + noise)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{CallContext, Capabilities, ClientError, EvalMode, Message, ModelClient, Step};
use crate::rng::stream_for;
use crate::scenario::{CharacterProfile, ConceptualConfig, QuantityRatio, ScenarioSample};

pub const REFUSAL_TEXT: &str = "I'm sorry, but I can't help with that.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSlot {
    Agent,
    Saved,
    Sacrificed,
}

/// Extra logit when one character in `slot` carries both attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointWeight {
    pub slot: WeightSlot,
    pub a: String,
    pub b: String,
    pub weight: f64,
}

fn unit_modes() -> BTreeMap<EvalMode, f64> {
    EvalMode::ALL.into_iter().map(|m| (m, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta_net: f64,
    /// `slot -> "category=value" -> logit`. A weight applies once when any
    /// character in the slot has the value. `status=<class>` is also accepted.
    #[serde(default)]
    pub feature_weights: BTreeMap<WeightSlot, BTreeMap<String, f64>>,
    #[serde(default)]
    pub joint_weights: Vec<JointWeight>,
    /// `personal_force`, `intention_of_harm`, `self_benefit` -> logit when set.
    #[serde(default)]
    pub conceptual_weights: BTreeMap<String, f64>,
    /// When set, character weights apply only at this base ratio (saved, sacrificed).
    #[serde(default)]
    pub weights_only_at_ratio: Option<(u32, u32)>,
    #[serde(default = "unit_modes")]
    pub modality_attenuation: BTreeMap<EvalMode, f64>,
    #[serde(default)]
    pub refusal_rate: BTreeMap<EvalMode, f64>,
    /// Probability that an extraction call comes back as a refusal.
    #[serde(default)]
    pub ocr_refusal_rate: f64,
    /// Logit noise, fixed per (sample, mode) so repeats see the same p.
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("unknown preset `{0}`; expected utilitarian, biased, distracted or refuser")]
    UnknownPreset(String),
    #[error("invalid policy: {0}")]
    Invalid(String),
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let finite = [self.alpha, self.beta_net, self.noise_sd].iter().all(|v| v.is_finite());
        if !finite || self.noise_sd < 0.0 {
            return Err(PolicyError::Invalid("alpha, beta_net and noise_sd must be finite, noise_sd ≥ 0".into()));
        }
        if self.modality_attenuation.values().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(PolicyError::Invalid("attenuation must be ≥ 0".into()));
        }
        let rates = self.refusal_rate.values().chain(std::iter::once(&self.ocr_refusal_rate));
        if rates.clone().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(PolicyError::Invalid("refusal rates must lie in [0, 1]".into()));
        }
        for key in self.feature_weights.values().flat_map(|m| m.keys()).chain(self.joint_weights.iter().flat_map(|j| [&j.a, &j.b])) {
            if !key.contains('=') {
                return Err(PolicyError::Invalid(format!("weight key `{key}` is not category=value")));
            }
        }
        Ok(())
    }

    pub fn lambda(&self, mode: EvalMode) -> f64 {
        self.modality_attenuation.get(&mode).copied().unwrap_or(1.0)
    }
}

/// Documented presets.
pub fn make_policy(name: &str) -> Result<PolicyParams, PolicyError> {
    let mut p = PolicyParams { beta_net: 0.3, ..PolicyParams::default() };
    match name {
        "utilitarian" => {}
        "biased" => {
            let saved = BTreeMap::from([
                ("gender=female".to_string(), 1.0),
                ("age=child".to_string(), 1.2),
                ("species=human".to_string(), 1.5),
            ]);
            let sacrificed = BTreeMap::from([("profession=thief".to_string(), 0.8)]);
            p.feature_weights = BTreeMap::from([(WeightSlot::Saved, saved), (WeightSlot::Sacrificed, sacrificed)]);
        }
        "distracted" => {
            p.alpha = -2.0;
            p.modality_attenuation =
                BTreeMap::from([(EvalMode::Text, 1.0), (EvalMode::Caption, 0.6), (EvalMode::Image, 0.2)]);
        }
        "refuser" => {
            p.refusal_rate = BTreeMap::from([(EvalMode::Text, 0.01), (EvalMode::Caption, 0.005), (EvalMode::Image, 0.0)]);
        }
        other => return Err(PolicyError::UnknownPreset(other.into())),
    }
    Ok(p)
}

fn members(sample: &ScenarioSample, slot: WeightSlot) -> &[CharacterProfile] {
    match slot {
        WeightSlot::Agent => std::slice::from_ref(&sample.agent),
        WeightSlot::Saved => &sample.group_a,
        WeightSlot::Sacrificed => &sample.group_b,
    }
}

fn conceptual_value(c: ConceptualConfig, key: &str) -> bool {
    match key {
        "personal_force" => c.personal_force,
        "intention_of_harm" => c.intention_of_harm,
        "self_benefit" => c.self_benefit,
        _ => false,
    }
}

/// Deterministic logit before noise, outside the intercept:
/// `beta_net · net + Σ weights`.
pub fn signal(params: &PolicyParams, sample: &ScenarioSample) -> f64 {
    let mut z = params.beta_net * sample.ratio.net_benefit() as f64;
    for (k, w) in &params.conceptual_weights {
        if conceptual_value(sample.conceptual, k) {
            z += w;
        }
    }
    let gated = params
        .weights_only_at_ratio
        .is_some_and(|(s, c)| QuantityRatio { saved: s, sacrificed: c }.base() != sample.ratio.base());
    if gated {
        return z;
    }
    for (slot, weights) in &params.feature_weights {
        let group = members(sample, *slot);
        for (key, w) in weights {
            if group.iter().any(|p| p.has(key)) {
                z += w;
            }
        }
    }
    for j in &params.joint_weights {
        if members(sample, j.slot).iter().any(|p| p.has(&j.a) && p.has(&j.b)) {
            z += j.weight;
        }
    }
    z
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Probability of answering yes, given no refusal.
pub fn act_probability(params: &PolicyParams, sample: &ScenarioSample, mode: EvalMode) -> f64 {
    let noise = if params.noise_sd > 0.0 {
        let mut rng = stream_for(params.seed, &["agent-noise", &sample.uid, mode.as_str()]);
        Normal::new(0.0, params.noise_sd).expect("validated sd").sample(&mut rng)
    } else {
        0.0
    };
    logistic(params.alpha + params.lambda(mode) * signal(params, sample) + noise)
}

/// Response text for one decision draw.
pub fn agent_respond(params: &PolicyParams, sample: &ScenarioSample, mode: EvalMode, draw: u32) -> String {
    let mut rng = stream_for(params.seed, &["agent", &sample.uid, mode.as_str(), &draw.to_string()]);
    let refuse: f64 = rng.random();
    let act: f64 = rng.random();
    if refuse < params.refusal_rate.get(&mode).copied().unwrap_or(0.0) {
        return REFUSAL_TEXT.into();
    }
    if act < act_probability(params, sample, mode) { "Yes" } else { "No" }.into()
}

/// A named policy serving every step of every mode.
#[derive(Debug, Clone)]
pub struct SyntheticAgent {
    pub name: String,
    pub params: PolicyParams,
}

impl SyntheticAgent {
    pub fn new(name: impl Into<String>, params: PolicyParams) -> Result<Self, PolicyError> {
        params.validate()?;
        Ok(SyntheticAgent { name: name.into(), params })
    }

    pub fn preset(name: &str) -> Result<Self, PolicyError> {
        SyntheticAgent::new(name, make_policy(name)?)
    }
}

impl ModelClient for SyntheticAgent {
    fn model_id(&self) -> String {
        format!("synthetic:{}", self.name)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { text: true, image: true }
    }

    fn complete(&self, _messages: &[Message], ctx: &CallContext<'_>) -> Result<String, ClientError> {
        let s = ctx.sample;
        Ok(match ctx.step {
            Step::Caption => format!(
                "A {} scene: one agent, {} characters on the current path and {} on the other.",
                s.dilemma_id.replace('_', " "),
                s.group_a.len(),
                s.group_b.len()
            ),
            Step::Ocr => {
                let mut rng = stream_for(self.params.seed, &["agent-ocr", &s.uid, ctx.mode.as_str(), &ctx.repeat.to_string()]);
                if rng.random::<f64>() < self.params.ocr_refusal_rate {
                    REFUSAL_TEXT.into()
                } else {
                    s.description.clone()
                }
            }
            Step::Decision => agent_respond(&self.params, s, ctx.mode, ctx.repeat),
        })
    }
}

/// Decision-only records for `repeats` draws per sample in `mode`, without
/// images or extraction calls. Matches the decision field a batch run would
/// log for the same agent.
pub fn decision_records(
    agent: &SyntheticAgent,
    samples: &[ScenarioSample],
    mode: EvalMode,
    repeats: u32,
) -> Vec<crate::eval::TrialRecord> {
    let model = agent.model_id();
    samples
        .iter()
        .flat_map(|s| (0..repeats).map(move |r| (s, r)))
        .map(|(s, repeat)| {
            let raw = agent_respond(&agent.params, s, mode, repeat);
            crate::eval::TrialRecord {
                schema: crate::eval::LOG_SCHEMA_VERSION,
                uid: s.uid.clone(),
                subset: s.subset,
                dilemma_id: s.dilemma_id.clone(),
                mode,
                model: model.clone(),
                repeat,
                decision: Some(crate::eval::parse_decision(&raw)),
                raw_response: Some(raw),
                caption: None,
                ocr: None,
                ocr_similarity: None,
                substituted_ground_truth: false,
                started_at: None,
                finished_at: None,
                error: None,
            }
        })
        .collect()
}
