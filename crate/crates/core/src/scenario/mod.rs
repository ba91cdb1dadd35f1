//! Domain types shared by the generators, the harness and the analyses.

mod fixture;
pub mod registry;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixture::{
    builtin_fixtures, load_fixture_dir, AdmissibleRatios, BackgroundFamily, DilemmaSpec, SlotRole, SlotSpec,
};
pub use registry::{Category, StatusClass};
pub use template::{Placeholder, Segment, Switch, Template};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid quantity {saved}:{sacrificed}; both counts must be at least 1")]
    InvalidQuantity { saved: i64, sacrificed: i64 },
    #[error("fixture `{id}`: {reason}")]
    Fixture { id: String, reason: String },
    #[error("template error: {0}")]
    Template(String),
}

/// The five moral foundations, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MftDimension {
    Care,
    Fairness,
    Loyalty,
    Authority,
    Purity,
}

impl MftDimension {
    pub const ALL: [MftDimension; 5] = [
        MftDimension::Care,
        MftDimension::Fairness,
        MftDimension::Loyalty,
        MftDimension::Authority,
        MftDimension::Purity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MftDimension::Care => "Care",
            MftDimension::Fairness => "Fairness",
            MftDimension::Loyalty => "Loyalty",
            MftDimension::Authority => "Authority",
            MftDimension::Purity => "Purity",
        }
    }
}

impl fmt::Display for MftDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three binary situation factors of a dilemma variant.
///
/// Serialized as the code `A_B_C` (personal force, intention of harm, self-benefit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptualConfig {
    pub personal_force: bool,
    pub intention_of_harm: bool,
    pub self_benefit: bool,
}

impl ConceptualConfig {
    /// All eight variants in canonical order, `0_0_0` first.
    pub fn all() -> [ConceptualConfig; 8] {
        std::array::from_fn(|i| ConceptualConfig::from_index(i as u8))
    }

    pub fn from_index(i: u8) -> Self {
        ConceptualConfig {
            personal_force: i & 0b100 != 0,
            intention_of_harm: i & 0b010 != 0,
            self_benefit: i & 0b001 != 0,
        }
    }

    pub fn index(self) -> u8 {
        (self.personal_force as u8) << 2 | (self.intention_of_harm as u8) << 1 | self.self_benefit as u8
    }

    pub fn code(self) -> String {
        format!(
            "{}_{}_{}",
            self.personal_force as u8, self.intention_of_harm as u8, self.self_benefit as u8
        )
    }
}

impl fmt::Display for ConceptualConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for ConceptualConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: Vec<&str> = s.split('_').collect();
        let flag = |b: &str| match b {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(format!("invalid conceptual code `{s}`")),
        };
        match bits.as_slice() {
            [a, b, c] => Ok(ConceptualConfig {
                personal_force: flag(a)?,
                intention_of_harm: flag(b)?,
                self_benefit: flag(c)?,
            }),
            _ => Err(format!("invalid conceptual code `{s}`")),
        }
    }
}

impl TryFrom<String> for ConceptualConfig {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ConceptualConfig> for String {
    fn from(c: ConceptualConfig) -> String {
        c.code()
    }
}

/// One character. Unset fields are omitted from text, sprites and serialization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct CharacterProfile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profession: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education: Option<String>,
}

impl CharacterProfile {
    fn slot(&self, c: Category) -> &Option<String> {
        match c {
            Category::Species => &self.species,
            Category::Color => &self.color,
            Category::Gender => &self.gender,
            Category::Age => &self.age,
            Category::Profession => &self.profession,
            Category::Wealth => &self.wealth,
            Category::Fitness => &self.fitness,
            Category::Education => &self.education,
        }
    }

    fn slot_mut(&mut self, c: Category) -> &mut Option<String> {
        match c {
            Category::Species => &mut self.species,
            Category::Color => &mut self.color,
            Category::Gender => &mut self.gender,
            Category::Age => &mut self.age,
            Category::Profession => &mut self.profession,
            Category::Wealth => &mut self.wealth,
            Category::Fitness => &mut self.fitness,
            Category::Education => &mut self.education,
        }
    }

    pub fn get(&self, c: Category) -> Option<&str> {
        self.slot(c).as_deref()
    }

    pub fn set(&mut self, c: Category, value: Option<&str>) {
        *self.slot_mut(c) = value.map(str::to_owned);
    }

    pub fn with(mut self, c: Category, value: &str) -> Self {
        self.set(c, Some(value));
        self
    }

    /// Set attributes in category order.
    pub fn attributes(&self) -> impl Iterator<Item = (Category, &str)> + '_ {
        Category::ALL.into_iter().filter_map(|c| self.get(c).map(|v| (c, v)))
    }

    /// Unset species counts as human.
    pub fn is_human(&self) -> bool {
        self.species.as_deref().is_none_or(|s| s == registry::HUMAN)
    }

    /// Whether the profile carries `key`, written `category=value` or
    /// `status=<class>`. An unset species reads as human.
    pub fn has(&self, key: &str) -> bool {
        let Some((cat, value)) = key.split_once('=') else { return false };
        match cat {
            "status" => self.profession.as_deref().and_then(StatusClass::of).is_some_and(|c| c.as_str() == value),
            "species" => self.species.as_deref().unwrap_or(registry::HUMAN) == value,
            _ => self.attributes().any(|(c, v)| c.as_str() == cat && v == value),
        }
    }

    /// Categories whose values differ between the two profiles.
    pub fn diff(&self, other: &CharacterProfile) -> Vec<Category> {
        Category::ALL.into_iter().filter(|&c| self.get(c) != other.get(c)).collect()
    }
}

/// A structured reason a character does not fit its slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownValue { category: Category, value: String },
    InapplicableCategory { category: Category },
    DisallowedValue { category: Category, value: String },
    NonHumanAttribute { category: Category },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownValue { category, value } => write!(f, "unknown {category} value `{value}`"),
            Violation::InapplicableCategory { category } => write!(f, "{category} does not apply to this slot"),
            Violation::DisallowedValue { category, value } => {
                write!(f, "{category} value `{value}` is not allowed in this slot")
            }
            Violation::NonHumanAttribute { category } => write!(f, "non-human character with {category}"),
        }
    }
}

/// Checks every set attribute against the registry, the slot and the non-human rule.
pub fn validate_character(profile: &CharacterProfile, slot: &SlotSpec) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for (category, value) in profile.attributes() {
        if !category.contains(value) {
            out.push(Violation::UnknownValue { category, value: value.to_owned() });
            continue;
        }
        if slot.fixed.get(category) == Some(value) {
            // fixed attributes are always applicable
        } else if !slot.categories.contains(&category) {
            out.push(Violation::InapplicableCategory { category });
        } else if let Some(allowed) = slot.allowed.get(&category) {
            if !allowed.iter().any(|a| a == value) {
                out.push(Violation::DisallowedValue { category, value: value.to_owned() });
            }
        }
        if category.human_only() && !profile.is_human() {
            out.push(Violation::NonHumanAttribute { category });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reduces a saved:sacrificed pair to its coprime base.
pub fn reduce_ratio(saved: i64, sacrificed: i64) -> Result<(u32, u32), ScenarioError> {
    if saved < 1 || sacrificed < 1 || saved > u32::MAX as i64 || sacrificed > u32::MAX as i64 {
        return Err(ScenarioError::InvalidQuantity { saved, sacrificed });
    }
    let (s, c) = (saved as u32, sacrificed as u32);
    let g = gcd(s, c);
    Ok((s / g, c / g))
}

/// Lives saved versus lives sacrificed by acting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuantityRatio {
    pub saved: u32,
    pub sacrificed: u32,
}

impl QuantityRatio {
    pub fn new(saved: u32, sacrificed: u32) -> Result<Self, ScenarioError> {
        reduce_ratio(saved as i64, sacrificed as i64)?;
        Ok(QuantityRatio { saved, sacrificed })
    }

    pub fn base(self) -> QuantityRatio {
        let g = gcd(self.saved, self.sacrificed).max(1);
        QuantityRatio { saved: self.saved / g, sacrificed: self.sacrificed / g }
    }

    /// Saved minus sacrificed of the reduced ratio.
    pub fn net_benefit(self) -> i64 {
        let b = self.base();
        b.saved as i64 - b.sacrificed as i64
    }

    pub fn label(self) -> String {
        format!("{}:{}", self.saved, self.sacrificed)
    }
}

impl fmt::Display for QuantityRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.saved, self.sacrificed)
    }
}

pub fn net_benefit(ratio: QuantityRatio) -> i64 {
    ratio.net_benefit()
}

/// The base ratios every admissible ratio must reduce to.
pub const BASE_RATIOS: [(u32, u32); 7] = [(1, 10), (1, 5), (1, 2), (1, 1), (2, 1), (5, 1), (10, 1)];

/// Conceptual variants of `spec` in canonical order.
pub fn enumerate_conceptual_variants(spec: &DilemmaSpec) -> Result<Vec<ConceptualConfig>, ScenarioError> {
    let out: Vec<_> = ConceptualConfig::all()
        .into_iter()
        .filter(|c| spec.variant_mask.contains(c))
        .collect();
    if out.is_empty() {
        return Err(ScenarioError::Fixture { id: spec.id.clone(), reason: "empty variant mask".into() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Quantity,
    SingleFeature,
    Interaction,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Quantity, Subset::SingleFeature, Subset::Interaction];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Quantity => "quantity",
            Subset::SingleFeature => "single_feature",
            Subset::Interaction => "interaction",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "quantity" => Ok(Subset::Quantity),
            "single_feature" => Ok(Subset::SingleFeature),
            "interaction" => Ok(Subset::Interaction),
            _ => Err(format!("unknown subset `{s}`")),
        }
    }
}

/// One generated dilemma instance.
///
/// `group_a` is saved by acting; `group_b` is harmed by acting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub uid: String,
    pub subset: Subset,
    pub dilemma_id: String,
    pub conceptual: ConceptualConfig,
    pub agent: CharacterProfile,
    pub group_a: Vec<CharacterProfile>,
    pub group_b: Vec<CharacterProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bystanders: Vec<CharacterProfile>,
    pub ratio: QuantityRatio,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varied_feature: Option<Category>,
    pub seed: u64,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

#[derive(Serialize)]
struct UidKey<'a> {
    subset: Subset,
    dilemma_id: &'a str,
    conceptual: ConceptualConfig,
    agent: &'a CharacterProfile,
    group_a: &'a [CharacterProfile],
    group_b: &'a [CharacterProfile],
    bystanders: &'a [CharacterProfile],
    ratio: QuantityRatio,
    seed: u64,
}

impl ScenarioSample {
    /// Content hash over the identifying fields; 16 hex digits.
    pub fn compute_uid(&self) -> String {
        let key = UidKey {
            subset: self.subset,
            dilemma_id: &self.dilemma_id,
            conceptual: self.conceptual,
            agent: &self.agent,
            group_a: &self.group_a,
            group_b: &self.group_b,
            bystanders: &self.bystanders,
            ratio: self.ratio,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&key).expect("uid key serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// Every character in the scene: agent, then both groups, then bystanders.
    pub fn characters(&self) -> impl Iterator<Item = &CharacterProfile> {
        std::iter::once(&self.agent)
            .chain(&self.group_a)
            .chain(&self.group_b)
            .chain(&self.bystanders)
    }
}

/// Lookup of samples by uid.
#[derive(Debug, Default, Clone)]
pub struct SampleIndex<'a> {
    by_uid: BTreeMap<&'a str, &'a ScenarioSample>,
}

impl<'a> SampleIndex<'a> {
    pub fn new(samples: &'a [ScenarioSample]) -> Self {
        SampleIndex { by_uid: samples.iter().map(|s| (s.uid.as_str(), s)).collect() }
    }

    pub fn get(&self, uid: &str) -> Option<&'a ScenarioSample> {
        self.by_uid.get(uid).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reduce_examples() {
        assert_eq!(reduce_ratio(4, 2), Ok((2, 1)));
        assert_eq!(reduce_ratio(1, 1), Ok((1, 1)));
        assert_eq!(reduce_ratio(10, 4), Ok((5, 2)));
        assert!(matches!(reduce_ratio(0, 3), Err(ScenarioError::InvalidQuantity { .. })));
        assert!(matches!(reduce_ratio(2, -1), Err(ScenarioError::InvalidQuantity { .. })));
    }

    #[test]
    fn net_benefit_examples() {
        assert_eq!(QuantityRatio { saved: 2, sacrificed: 1 }.net_benefit(), 1);
        assert_eq!(QuantityRatio { saved: 4, sacrificed: 2 }.net_benefit(), 1);
        assert_eq!(QuantityRatio { saved: 1, sacrificed: 1 }.net_benefit(), 0);
        assert_eq!(QuantityRatio { saved: 1, sacrificed: 10 }.net_benefit(), -9);
    }

    #[test]
    fn conceptual_codes() {
        let all = ConceptualConfig::all();
        let codes: Vec<String> = all.iter().map(|c| c.code()).collect();
        assert_eq!(codes[0], "0_0_0");
        assert_eq!(codes[1], "0_0_1");
        assert_eq!(codes[4], "1_0_0");
        assert_eq!(codes[7], "1_1_1");
        for c in all {
            assert_eq!(c.code().parse::<ConceptualConfig>().unwrap(), c);
        }
        assert!("1_0".parse::<ConceptualConfig>().is_err());
        assert_eq!(serde_json::to_string(&all[3]).unwrap(), "\"0_1_1\"");
    }

    #[test]
    fn validate_examples() {
        let slot = SlotSpec::open(SlotRole::GroupA);
        let doctor = CharacterProfile::default()
            .with(Category::Species, "human")
            .with(Category::Profession, "doctor");
        assert_eq!(validate_character(&doctor, &slot), Ok(()));

        let chicken = CharacterProfile::default()
            .with(Category::Species, "chicken")
            .with(Category::Profession, "doctor");
        assert_eq!(
            validate_character(&chicken, &slot),
            Err(vec![Violation::NonHumanAttribute { category: Category::Profession }])
        );

        let green = CharacterProfile::default().with(Category::Color, "green");
        assert_eq!(
            validate_character(&green, &slot),
            Err(vec![Violation::UnknownValue { category: Category::Color, value: "green".into() }])
        );

        let mut narrow = SlotSpec::open(SlotRole::Agent);
        narrow.categories = vec![Category::Gender];
        assert_eq!(
            validate_character(&doctor, &narrow),
            Err(vec![
                Violation::InapplicableCategory { category: Category::Species },
                Violation::InapplicableCategory { category: Category::Profession },
            ])
        );
    }

    proptest! {
        #[test]
        fn reduce_scale_invariant(a in 1i64..200, b in 1i64..200, k in 1i64..50) {
            let base = reduce_ratio(a, b).unwrap();
            prop_assert_eq!(reduce_ratio(k * a, k * b).unwrap(), base);
            prop_assert_eq!(reduce_ratio(base.0 as i64, base.1 as i64).unwrap(), base);
            prop_assert_eq!(gcd(base.0, base.1), 1);
        }

        #[test]
        fn net_benefit_antisymmetric(i in 0usize..7, k in 1u32..10) {
            let (s, c) = BASE_RATIOS[i];
            let fwd = QuantityRatio { saved: s * k, sacrificed: c * k };
            let rev = QuantityRatio { saved: c * k, sacrificed: s * k };
            prop_assert_eq!(fwd.net_benefit(), -rev.net_benefit());
        }
    }
}
