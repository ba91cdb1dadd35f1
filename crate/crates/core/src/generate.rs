//! Subset samplers: quantity, single feature and interaction.
//!
//! All three are pure functions of the parameters and the fixtures. Each sample
//! gets its own seed derived from the root seed and its configuration, and the
//! returned list is sorted by uid.

use log::info;
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, stream};
use crate::scenario::registry::{is_adult_age, COLORS, HUMAN};
use crate::scenario::{
    enumerate_conceptual_variants, Category, CharacterProfile, ConceptualConfig, DilemmaSpec, QuantityRatio,
    ScenarioError, ScenarioSample, SlotRole, SlotSpec, StatusClass, Subset,
};
use crate::text::{realize_description, TextError};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unknown dilemma `{0}`")]
    UnknownDilemma(String),
    #[error(transparent)]
    Fixture(#[from] ScenarioError),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub subset: Subset,
    pub seed: u64,
    pub samples_per_config: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilemmas: Option<Vec<String>>,
}

impl GenParams {
    pub fn new(subset: Subset, seed: u64) -> Self {
        GenParams { subset, seed, samples_per_config: 5, dilemmas: None }
    }

    fn check(&self) -> Result<(), GenError> {
        if self.samples_per_config == 0 {
            return Err(GenError::Params("samples_per_config must be at least 1".into()));
        }
        Ok(())
    }

    fn select<'a>(&self, specs: &'a [DilemmaSpec]) -> Result<Vec<&'a DilemmaSpec>, GenError> {
        match &self.dilemmas {
            None => Ok(specs.iter().collect()),
            Some(ids) => {
                if let Some(missing) = ids.iter().find(|id| !specs.iter().any(|s| &s.id == *id)) {
                    return Err(GenError::UnknownDilemma(missing.clone()));
                }
                Ok(specs.iter().filter(|s| ids.contains(&s.id)).collect())
            }
        }
    }
}

/// Per-dilemma counts for the summary table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dilemma: String,
    pub subset: Subset,
    pub configs: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Generated {
    pub samples: Vec<ScenarioSample>,
    pub summary: Vec<SummaryRow>,
}

impl Generated {
    fn collect(parts: Vec<(Vec<ScenarioSample>, SummaryRow)>) -> Self {
        let mut out = Generated::default();
        for (samples, row) in parts {
            out.samples.extend(samples);
            out.summary.push(row);
        }
        out.samples.sort_by(|a, b| a.uid.cmp(&b.uid));
        out
    }
}

/// Dispatches on `params.subset`.
pub fn generate(params: &GenParams, specs: &[DilemmaSpec]) -> Result<Generated, GenError> {
    match params.subset {
        Subset::Quantity => gen_quantity(params, specs),
        Subset::SingleFeature => gen_single_feature(params, specs),
        Subset::Interaction => {
            let trolley = specs
                .iter()
                .find(|s| s.id == "trolley")
                .ok_or_else(|| GenError::UnknownDilemma("trolley".into()))?;
            gen_interaction(params, trolley)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &DilemmaSpec,
    subset: Subset,
    conceptual: ConceptualConfig,
    seed: u64,
    agent: CharacterProfile,
    group_a: Vec<CharacterProfile>,
    group_b: Vec<CharacterProfile>,
    bystanders: Vec<CharacterProfile>,
    ratio: QuantityRatio,
    varied_feature: Option<Category>,
) -> Result<ScenarioSample, GenError> {
    let mut s = ScenarioSample {
        uid: String::new(),
        subset,
        dilemma_id: spec.id.clone(),
        conceptual,
        agent,
        group_a,
        group_b,
        bystanders,
        ratio,
        varied_feature,
        seed,
        description: String::new(),
        layout_ref: None,
        image_ref: None,
    };
    s.uid = s.compute_uid();
    s.description = realize_description(&s, spec)?.full();
    Ok(s)
}

fn slot(spec: &DilemmaSpec, role: SlotRole) -> &SlotSpec {
    spec.slot(role).expect("validated fixtures have agent and group slots")
}

/// Quantity subset: the within-Care dilemmas flagged in their fixtures.
pub fn gen_quantity(params: &GenParams, specs: &[DilemmaSpec]) -> Result<Generated, GenError> {
    params.check()?;
    let chosen: Vec<_> = params.select(specs)?.into_iter().filter(|s| s.quantity).collect();
    let parts = chosen
        .par_iter()
        .map(|spec| quantity_for(params, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Generated::collect(parts))
}

fn quantity_for(params: &GenParams, spec: &DilemmaSpec) -> Result<(Vec<ScenarioSample>, SummaryRow), GenError> {
    let ratios = spec.ratios.base_ratios();
    if ratios.is_empty() {
        return Err(ScenarioError::Fixture { id: spec.id.clone(), reason: "no admissible ratios".into() }.into());
    }
    let variants = enumerate_conceptual_variants(spec)?;
    let bystander_slot = spec.slot(SlotRole::Bystanders);
    let mut out = Vec::new();
    for base in &ratios {
        let kmax = spec.ratios.cap / base.saved.max(base.sacrificed);
        for &variant in &variants {
            for rep in 0..params.samples_per_config {
                let seed = derive_seed(
                    params.seed,
                    &["quantity", &spec.id, &base.label(), &variant.code(), &rep.to_string()],
                );
                let mut rng = stream(seed);
                let k = rng.random_range(1..=kmax);
                let color = *COLORS.choose(&mut rng).expect("colors are non-empty");
                let dress = |s: &SlotSpec| s.fixed.clone().with(Category::Color, color);
                let member = dress(slot(spec, SlotRole::GroupA));
                let victim = dress(slot(spec, SlotRole::GroupB));
                let bystanders = bystander_slot.map(|b| vec![dress(b); b.count as usize]).unwrap_or_default();
                out.push(finish(
                    spec,
                    Subset::Quantity,
                    variant,
                    seed,
                    dress(slot(spec, SlotRole::Agent)),
                    vec![member; (k * base.saved) as usize],
                    vec![victim; (k * base.sacrificed) as usize],
                    bystanders,
                    QuantityRatio { saved: k * base.saved, sacrificed: k * base.sacrificed },
                    None,
                )?);
            }
        }
    }
    let row = SummaryRow { dilemma: spec.id.clone(), subset: Subset::Quantity, configs: ratios.len(), samples: out.len() };
    Ok((out, row))
}

/// Whether a profile combines attributes that read naturally together:
/// profession, wealth, education and age only for humans; profession and
/// education only for adults.
pub fn coherent(p: &CharacterProfile) -> bool {
    let human = p.is_human();
    let adult = p.age.as_deref().is_none_or(is_adult_age);
    let human_only = [Category::Profession, Category::Wealth, Category::Education, Category::Age];
    if !human && human_only.iter().any(|&c| p.get(c).is_some()) {
        return false;
    }
    adult || (p.profession.is_none() && p.education.is_none())
}

const DRAW_ORDER: [Category; 8] = [
    Category::Species,
    Category::Age,
    Category::Color,
    Category::Gender,
    Category::Profession,
    Category::Wealth,
    Category::Fitness,
    Category::Education,
];

/// Values of `category` applicable to every slot in `slots`.
fn shared_values<'a>(slots: &[&'a SlotSpec], category: Category) -> Vec<&'a str> {
    let mut vals = slots[0].applicable_values(category);
    for s in &slots[1..] {
        let other = s.applicable_values(category);
        vals.retain(|v| other.contains(v));
    }
    vals
}

/// One random profile valid for every slot in `slots`. When `varied` is given,
/// that category is left unset and the profile stays coherent under each of
/// the varied values. Each other category is left unset with probability 1/2.
fn draw_profile<R: Rng>(slots: &[&SlotSpec], varied: Option<(Category, [&str; 2])>, rng: &mut R) -> CharacterProfile {
    let mut p = slots[0].fixed.clone();
    for c in DRAW_ORDER {
        if varied.is_some_and(|(vc, _)| vc == c) || p.get(c).is_some() {
            continue;
        }
        let candidates: Vec<&str> = shared_values(slots, c)
            .into_iter()
            // unset species already reads as human
            .filter(|v| !(c == Category::Species && *v == HUMAN))
            .filter(|v| {
                let trial = p.clone().with(c, v);
                match varied {
                    Some((vc, vals)) => vals.iter().all(|x| coherent(&trial.clone().with(vc, x))),
                    None => coherent(&trial),
                }
            })
            .collect();
        if candidates.is_empty() || rng.random_bool(0.5) {
            continue;
        }
        p.set(c, Some(candidates.choose(rng).expect("non-empty")));
    }
    p
}

/// Value pairs varied for one category of a dilemma. Species pairs the human
/// default against each other species; every other category uses all
/// unordered pairs.
pub fn feature_pairs(spec: &DilemmaSpec, category: Category) -> Vec<(&str, &str)> {
    let a = slot(spec, SlotRole::GroupA);
    let b = slot(spec, SlotRole::GroupB);
    if a.fixed != b.fixed {
        return Vec::new();
    }
    let vals: Vec<&str> = shared_values(&[a, b], category)
        .into_iter()
        .filter(|v| coherent(&a.fixed.clone().with(category, v)))
        .collect();
    if category == Category::Species {
        if !vals.contains(&HUMAN) {
            return Vec::new();
        }
        return vals.iter().filter(|v| **v != HUMAN).map(|v| (HUMAN, *v)).collect();
    }
    let mut out = Vec::new();
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            out.push((vals[i], vals[j]));
        }
    }
    out
}

/// Categories varied for a dilemma, with their pairs. Categories with fewer
/// than two shared values are skipped.
pub fn varied_categories(spec: &DilemmaSpec) -> Vec<(Category, Vec<(&str, &str)>)> {
    Category::ALL
        .into_iter()
        .filter(|c| slot(spec, SlotRole::GroupA).categories.contains(c))
        .filter_map(|c| {
            let pairs = feature_pairs(spec, c);
            if pairs.is_empty() {
                info!("{}: skipping {c}, fewer than two applicable values", spec.id);
                None
            } else {
                Some((c, pairs))
            }
        })
        .collect()
}

/// Number of (dilemma, conceptual variant) tasks.
pub fn task_count(specs: &[DilemmaSpec]) -> Result<usize, ScenarioError> {
    specs.iter().map(|s| enumerate_conceptual_variants(s).map(|v| v.len())).sum()
}

/// Single feature subset. Every unordered pair is emitted in both orientations,
/// `samples_per_config` samples each.
pub fn gen_single_feature(params: &GenParams, specs: &[DilemmaSpec]) -> Result<Generated, GenError> {
    params.check()?;
    let chosen = params.select(specs)?;
    let parts = chosen
        .par_iter()
        .map(|spec| single_feature_for(params, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Generated::collect(parts))
}

fn single_feature_for(
    params: &GenParams,
    spec: &DilemmaSpec,
) -> Result<(Vec<ScenarioSample>, SummaryRow), GenError> {
    let agent_slot = slot(spec, SlotRole::Agent);
    let (sa, sb) = (slot(spec, SlotRole::GroupA), slot(spec, SlotRole::GroupB));
    let bystander_slot = spec.slot(SlotRole::Bystanders);
    let max_n = sa.max.min(sb.max);
    let categories = varied_categories(spec);
    let mut out = Vec::new();
    let mut configs = 0;
    for variant in enumerate_conceptual_variants(spec)? {
        for (category, pairs) in &categories {
            for &(x, y) in pairs {
                for (va, vb) in [(x, y), (y, x)] {
                    configs += 1;
                    for rep in 0..params.samples_per_config {
                        let seed = derive_seed(
                            params.seed,
                            &["single_feature", &spec.id, &variant.code(), category.as_str(), va, vb, &rep.to_string()],
                        );
                        let mut rng = stream(seed);
                        let n = rng.random_range(1..=max_n);
                        let agent = draw_profile(&[agent_slot], None, &mut rng);
                        let mut group_a = Vec::new();
                        let mut group_b = Vec::new();
                        for _ in 0..n {
                            let base = draw_profile(&[sa, sb], Some((*category, [va, vb])), &mut rng);
                            group_a.push(base.clone().with(*category, va));
                            group_b.push(base.with(*category, vb));
                        }
                        let bystanders = bystander_slot
                            .map(|b| (0..b.count).map(|_| draw_profile(&[b], None, &mut rng)).collect())
                            .unwrap_or_default();
                        let ratio = QuantityRatio { saved: n, sacrificed: n };
                        out.push(finish(
                            spec,
                            Subset::SingleFeature,
                            variant,
                            seed,
                            agent,
                            group_a,
                            group_b,
                            bystanders,
                            ratio,
                            Some(*category),
                        )?);
                    }
                }
            }
        }
    }
    let row = SummaryRow { dilemma: spec.id.clone(), subset: Subset::SingleFeature, configs, samples: out.len() };
    Ok((out, row))
}

/// Character profile of the interaction subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct InteractionProfile {
    pub color: &'static str,
    pub status: StatusClass,
    pub gender: &'static str,
}

impl InteractionProfile {
    /// The eight profiles: color × status class × gender.
    pub fn all() -> Vec<InteractionProfile> {
        let mut out = Vec::with_capacity(8);
        for color in ["black", "white"] {
            for status in [StatusClass::Low, StatusClass::High] {
                for gender in ["male", "female"] {
                    out.push(InteractionProfile { color, status, gender });
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.color, self.status.as_str(), self.gender)
    }

    /// A concrete character with a profession drawn from the status class.
    pub fn realize<R: Rng>(&self, rng: &mut R) -> CharacterProfile {
        let profession = self.status.professions().choose(rng).expect("status classes are non-empty");
        CharacterProfile::default()
            .with(Category::Color, self.color)
            .with(Category::Gender, self.gender)
            .with(Category::Profession, profession)
    }
}

/// Interaction ratios written alternate:on-path. The on-path group is the one
/// saved by acting.
pub const INTERACTION_RATIOS: [(u32, u32); 4] = [(1, 1), (1, 2), (1, 5), (1, 10)];

/// Interaction subset over the trolley fixture: 4 ratios × 8³ profiles.
pub fn gen_interaction(params: &GenParams, trolley: &DilemmaSpec) -> Result<Generated, GenError> {
    params.check()?;
    let profiles = InteractionProfile::all();
    let variant = ConceptualConfig::default();
    let mut jobs = Vec::new();
    for (alt, on) in INTERACTION_RATIOS {
        for agent in &profiles {
            for on_path in &profiles {
                for alternate in &profiles {
                    jobs.push((alt, on, agent, on_path, alternate));
                }
            }
        }
    }
    let samples = jobs
        .par_iter()
        .map(|&(alt, on, agent, on_path, alternate)| {
            (0..params.samples_per_config)
                .map(|rep| {
                    let seed = derive_seed(
                        params.seed,
                        &[
                            "interaction",
                            &format!("{alt}:{on}"),
                            &agent.label(),
                            &on_path.label(),
                            &alternate.label(),
                            &rep.to_string(),
                        ],
                    );
                    let mut rng = stream(seed);
                    let agent = agent.realize(&mut rng);
                    let group_a: Vec<_> = (0..on).map(|_| on_path.realize(&mut rng)).collect();
                    let group_b: Vec<_> = (0..alt).map(|_| alternate.realize(&mut rng)).collect();
                    finish(
                        trolley,
                        Subset::Interaction,
                        variant,
                        seed,
                        agent,
                        group_a,
                        group_b,
                        Vec::new(),
                        QuantityRatio { saved: on, sacrificed: alt },
                        None,
                    )
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let samples: Vec<_> = samples.into_iter().flatten().collect();
    let row = SummaryRow {
        dilemma: trolley.id.clone(),
        subset: Subset::Interaction,
        configs: jobs.len(),
        samples: samples.len(),
    };
    Ok(Generated::collect(vec![(samples, row)]))
}
