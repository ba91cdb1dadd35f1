//! Tree surrogate attribution for interaction-subset decision logs.

mod gbdt;
mod shap;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalMode;
use crate::generate::INTERACTION_RATIOS;
use crate::rng::stream_for;
use crate::scenario::{CharacterProfile, ScenarioSample, Subset};
use crate::stats::{by_model_mode, Trial};

pub use gbdt::{fit_gbdt, GbdtParams, Node, Tree, TreeEnsemble, ENSEMBLE_VERSION};
pub use shap::{brute_force_shap, shap_interactions, Explainer, ShapMatrix, BRUTE_FORCE_MAX_FEATURES};

#[derive(Debug, Error)]
pub enum AttribError {
    #[error("attribution supports the interaction subset only, got {0}")]
    Unsupported(String),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("need at least one matrix")]
    NoMatrices,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Agent,
    Saved,
    Sacrificed,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Agent, Slot::Saved, Slot::Sacrificed];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Agent => "agent",
            Slot::Saved => "saved",
            Slot::Sacrificed => "sacrificed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureCategory {
    Quantity,
    Character { slot: Slot, attribute: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub category: FeatureCategory,
}

/// Binary attributes of an interaction profile, with the value coded 1.
const PROFILE_BITS: [(&str, &str); 3] = [("color", "color=black"), ("status", "status=high"), ("gender", "gender=female")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub features: Vec<Feature>,
}

impl FeatureRegistry {
    /// Ratio indicators, then agent, saved and sacrificed profile bits.
    pub fn interaction() -> Self {
        let mut features: Vec<Feature> = INTERACTION_RATIOS
            .iter()
            .map(|(alt, on)| Feature { name: format!("ratio={alt}:{on}"), category: FeatureCategory::Quantity })
            .collect();
        for slot in Slot::ALL {
            for (attr, _) in PROFILE_BITS {
                features.push(Feature {
                    name: format!("{}.{attr}", slot.as_str()),
                    category: FeatureCategory::Character { slot, attribute: attr.to_string() },
                });
            }
        }
        FeatureRegistry { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn category(&self, name: &str) -> Option<&FeatureCategory> {
        self.index(name).map(|i| &self.features[i].category)
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

fn profile_bits(group: &[CharacterProfile]) -> [u8; 3] {
    PROFILE_BITS.map(|(_, key)| (!group.is_empty() && group.iter().all(|p| p.has(key))) as u8)
}

fn encode_one(s: &ScenarioSample) -> Result<Vec<u8>, AttribError> {
    if s.subset != Subset::Interaction {
        return Err(AttribError::Unsupported(s.subset.as_str().to_string()));
    }
    let (on, alt) = (s.ratio.saved, s.ratio.sacrificed);
    let mut row: Vec<u8> = INTERACTION_RATIOS.iter().map(|&r| (r == (alt, on)) as u8).collect();
    if row.iter().all(|&b| b == 0) {
        return Err(AttribError::Invalid(format!("{}: ratio {alt}:{on} is not an interaction level", s.uid)));
    }
    for group in [std::slice::from_ref(&s.agent), &s.group_a[..], &s.group_b[..]] {
        row.extend(profile_bits(group));
    }
    Ok(row)
}

/// Encodes interaction samples into binary rows.
pub fn one_hot_encode(samples: &[&ScenarioSample]) -> Result<(Vec<Vec<u8>>, FeatureRegistry), AttribError> {
    let rows = samples.iter().map(|s| encode_one(s)).collect::<Result<_, _>>()?;
    Ok((rows, FeatureRegistry::interaction()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub quantity: f64,
    pub character: f64,
    pub action_bias: f64,
}

/// Mean |Φ| mass per category plus |base|, normalized to shares.
pub fn effect_composition(matrices: &[ShapMatrix], registry: &FeatureRegistry) -> Result<Composition, AttribError> {
    if matrices.is_empty() {
        return Err(AttribError::NoMatrices);
    }
    let n = registry.len();
    let quant: Vec<bool> = registry.features.iter().map(|f| f.category == FeatureCategory::Quantity).collect();
    let (mut q, mut c, mut b) = (0.0, 0.0, 0.0);
    for m in matrices {
        if m.n != n {
            return Err(AttribError::Invalid("matrix size differs from the registry".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j).abs();
                match (quant[i], quant[j]) {
                    (true, true) => q += v,
                    (false, false) => c += v,
                    _ => {
                        q += v / 2.0;
                        c += v / 2.0;
                    }
                }
            }
        }
        b += m.base.abs();
    }
    let k = matrices.len() as f64;
    let (q, c, b) = (q / k, c / k, b / k);
    let total = q + c + b;
    if total == 0.0 {
        return Ok(Composition { quantity: 0.0, character: 0.0, action_bias: 1.0 });
    }
    Ok(Composition { quantity: q / total, character: c / total, action_bias: b / total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub quant1v1_x_char: f64,
    pub intra_char: f64,
    pub inter_char: f64,
    pub quant1v1_x_char_signed: f64,
    pub intra_char_signed: f64,
    pub inter_char_signed: f64,
}

/// Mean |Φᵢⱼ| (and mean Φᵢⱼ) over three classes of feature pairs.
pub fn interaction_intensity(matrices: &[ShapMatrix], registry: &FeatureRegistry) -> Result<Intensity, AttribError> {
    if matrices.is_empty() {
        return Err(AttribError::NoMatrices);
    }
    let one = registry.index("ratio=1:1").ok_or_else(|| AttribError::Unsupported("registry without ratio=1:1".into()))?;
    let slots: Vec<Option<Slot>> = registry
        .features
        .iter()
        .map(|f| match &f.category {
            FeatureCategory::Character { slot, .. } => Some(*slot),
            FeatureCategory::Quantity => None,
        })
        .collect();
    let chars: Vec<usize> = (0..registry.len()).filter(|&i| slots[i].is_some()).collect();
    let mut quant = Vec::new();
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for (a, &i) in chars.iter().enumerate() {
        quant.push((one, i));
        for &j in &chars[a + 1..] {
            if slots[i] == slots[j] { intra.push((i, j)) } else { inter.push((i, j)) }
        }
    }
    let mean = |pairs: &[(usize, usize)], f: fn(f64) -> f64| -> f64 {
        let total: f64 = matrices.iter().flat_map(|m| pairs.iter().map(move |&(i, j)| f(m.get(i, j)))).sum();
        total / (pairs.len() * matrices.len()) as f64
    };
    Ok(Intensity {
        quant1v1_x_char: mean(&quant, f64::abs),
        intra_char: mean(&intra, f64::abs),
        inter_char: mean(&inter, f64::abs),
        quant1v1_x_char_signed: mean(&quant, |v| v),
        intra_char_signed: mean(&intra, |v| v),
        inter_char_signed: mean(&inter, |v| v),
    })
}

/// Sign of corr(feature value, its Shapley value) over the instances; 0 when
/// either side is constant.
pub fn main_effect_directions(matrices: &[ShapMatrix]) -> Vec<i8> {
    let Some(first) = matrices.first() else { return Vec::new() };
    (0..first.n)
        .map(|i| {
            let xs: Vec<f64> = matrices.iter().map(|m| m.instance[i] as f64).collect();
            let ys: Vec<f64> = matrices.iter().map(|m| m.shapley()[i]).collect();
            let k = xs.len() as f64;
            let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
            let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            if cov.abs() < 1e-12 { 0 } else { cov.signum() as i8 }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttribParams {
    pub gbdt: GbdtParams,
    pub test_fraction: f64,
    /// Background rows drawn from the training split.
    pub background_size: usize,
    pub seed: u64,
}

impl Default for AttribParams {
    fn default() -> Self {
        AttribParams { gbdt: GbdtParams::default(), test_fraction: 0.2, background_size: 512, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub model: String,
    pub mode: EvalMode,
    pub registry: FeatureRegistry,
    pub ensemble: TreeEnsemble,
    pub n_train: usize,
    pub n_test: usize,
    pub test_accuracy: f64,
    pub base: f64,
    pub composition: Composition,
    pub intensity: Intensity,
    /// Mean |Φ| and mean Φ over the test set, row-major.
    pub mean_abs: Vec<f64>,
    pub mean_signed: Vec<f64>,
    pub directions: Vec<i8>,
}

/// Surrogate fit and attribution for one (model, mode) group of decided
/// interaction trials.
pub fn attribute(trials: &[Trial<'_>], params: &AttribParams) -> Result<AttributionReport, AttribError> {
    let decided: Vec<(&ScenarioSample, f64)> = trials.iter().filter_map(|t| t.outcome().map(|y| (t.sample, y))).collect();
    if decided.len() < 2 {
        return Err(AttribError::Invalid(format!("{} decided trials", decided.len())));
    }
    if !(params.test_fraction > 0.0 && params.test_fraction < 1.0) {
        return Err(AttribError::Invalid("test_fraction must be in (0, 1)".into()));
    }
    let samples: Vec<&ScenarioSample> = decided.iter().map(|d| d.0).collect();
    let (x, registry) = one_hot_encode(&samples)?;
    let y: Vec<f64> = decided.iter().map(|d| d.1).collect();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut stream_for(params.seed, &["attrib", "split"]));
    let n_test = ((x.len() as f64 * params.test_fraction).round() as usize).clamp(1, x.len() - 1);
    let (test_idx, train_idx) = order.split_at(n_test);
    let pick = |idx: &[usize]| -> (Vec<Vec<u8>>, Vec<f64>) { (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect()) };
    let (train_x, train_y) = pick(train_idx);
    let (test_x, test_y) = pick(test_idx);
    let ensemble = fit_gbdt(&train_x, &train_y, &params.gbdt)?;
    let background: Vec<Vec<u8>> = train_x.iter().take(params.background_size.max(1)).cloned().collect();
    let explainer = Explainer::new(&ensemble, &background)?;
    let matrices = explainer.explain_all(&test_x);
    let correct = test_x.iter().zip(&test_y).filter(|(r, &t)| (ensemble.predict(r) > 0.0) == (t == 1.0)).count();
    let n = registry.len();
    let k = matrices.len() as f64;
    let mean_abs = (0..n * n).map(|c| matrices.iter().map(|m| m.phi[c].abs()).sum::<f64>() / k).collect();
    let mean_signed = (0..n * n).map(|c| matrices.iter().map(|m| m.phi[c]).sum::<f64>() / k).collect();
    let t0 = &trials[0];
    Ok(AttributionReport {
        model: t0.record.model.clone(),
        mode: t0.record.mode,
        composition: effect_composition(&matrices, &registry)?,
        intensity: interaction_intensity(&matrices, &registry)?,
        directions: main_effect_directions(&matrices),
        registry,
        n_train: train_x.len(),
        n_test: test_x.len(),
        test_accuracy: correct as f64 / test_x.len() as f64,
        base: explainer.base(),
        ensemble,
        mean_abs,
        mean_signed,
    })
}

/// Runs [`attribute`] per (model, mode) over interaction trials.
pub fn attribute_all(trials: &[Trial<'_>], params: &AttribParams) -> Result<Vec<AttributionReport>, AttribError> {
    let interaction: Vec<Trial<'_>> = trials.iter().filter(|t| t.sample.subset == Subset::Interaction).cloned().collect();
    let groups: BTreeMap<_, _> = by_model_mode(&interaction);
    groups.values().map(|g| attribute(g, params)).collect()
}

/// Φ matrix as CSV with a header row and a leading name column.
pub fn matrix_csv(values: &[f64], registry: &FeatureRegistry) -> String {
    let names = registry.names();
    let mut out = format!("feature,{}\n", names.join(","));
    for (i, name) in names.iter().enumerate() {
        let row: Vec<String> = (0..names.len()).map(|j| format!("{}", values[i * names.len() + j])).collect();
        out.push_str(&format!("{name},{}\n", row.join(",")));
    }
    out
}
