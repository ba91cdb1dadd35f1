//! Dilemma fixtures: one JSON document per dilemma.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::registry::Category;
use super::template::{Placeholder, Switch, Template};
use super::{reduce_ratio, CharacterProfile, ConceptualConfig, MftDimension, QuantityRatio, ScenarioError, BASE_RATIOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Agent,
    GroupA,
    GroupB,
    Bystanders,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundFamily {
    Train,
    School,
    Road,
    Hospital,
}

impl BackgroundFamily {
    pub const ALL: [BackgroundFamily; 4] =
        [BackgroundFamily::Train, BackgroundFamily::School, BackgroundFamily::Road, BackgroundFamily::Hospital];

    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundFamily::Train => "train",
            BackgroundFamily::School => "school",
            BackgroundFamily::Road => "road",
            BackgroundFamily::Hospital => "hospital",
        }
    }
}

/// Which attributes a character slot may carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub role: SlotRole,
    /// Categories that may be set (and varied) on characters in this slot.
    #[serde(default)]
    pub categories: Vec<Category>,
    /// Optional per-category restriction of the registry values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub allowed: BTreeMap<Category, Vec<String>>,
    /// Attributes every character in this slot carries.
    #[serde(default)]
    pub fixed: CharacterProfile,
    /// Largest group drawn for the single-feature subset.
    #[serde(default = "one")]
    pub max: u32,
    /// Exact size of a bystander slot.
    #[serde(default)]
    pub count: u32,
}

fn one() -> u32 {
    1
}

impl SlotSpec {
    /// A slot accepting every registry value.
    pub fn open(role: SlotRole) -> Self {
        SlotSpec {
            role,
            categories: Category::ALL.to_vec(),
            allowed: BTreeMap::new(),
            fixed: CharacterProfile::default(),
            max: 1,
            count: 0,
        }
    }

    /// Values a character in this slot may take for `category`.
    pub fn applicable_values(&self, category: Category) -> Vec<&str> {
        if !self.categories.contains(&category) || self.fixed.get(category).is_some() {
            return Vec::new();
        }
        if category.human_only() && !self.fixed.is_human() {
            return Vec::new();
        }
        match self.allowed.get(&category) {
            Some(list) => list.iter().map(String::as_str).collect(),
            None => category.values().to_vec(),
        }
    }
}

/// Base ratios a dilemma admits, and the per-group character cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRatios {
    pub cap: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<[u32; 2]>>,
}

impl AdmissibleRatios {
    /// Base ratios in canonical order (1:10 first).
    pub fn base_ratios(&self) -> Vec<QuantityRatio> {
        BASE_RATIOS
            .iter()
            .filter(|&&(s, c)| match &self.explicit {
                Some(list) => list.iter().any(|r| r[0] == s && r[1] == c),
                None => s.max(c) <= self.cap,
            })
            .map(|&(saved, sacrificed)| QuantityRatio { saved, sacrificed })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilemmaSpec {
    pub id: String,
    pub title: String,
    pub conflict: [MftDimension; 2],
    pub yes_priority: MftDimension,
    pub background_family: BackgroundFamily,
    pub slots: Vec<SlotSpec>,
    pub ratios: AdmissibleRatios,
    /// Member of the quantity subset.
    #[serde(default)]
    pub quantity: bool,
    #[serde(default = "full_mask")]
    pub variant_mask: Vec<ConceptualConfig>,
    pub description_template: String,
    pub question_text: String,
}

fn full_mask() -> Vec<ConceptualConfig> {
    ConceptualConfig::all().to_vec()
}

impl DilemmaSpec {
    pub fn slot(&self, role: SlotRole) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.role == role)
    }

    /// The dimension a "no" answer favors.
    pub fn no_priority(&self) -> MftDimension {
        if self.conflict[0] == self.yes_priority {
            self.conflict[1]
        } else {
            self.conflict[0]
        }
    }

    pub fn inter_dimensional(&self) -> bool {
        self.conflict[0] != self.conflict[1]
    }

    pub fn body_template(&self) -> Result<Template, ScenarioError> {
        Template::parse(&self.description_template)
    }

    pub fn question_template(&self) -> Result<Template, ScenarioError> {
        Template::parse(&self.question_text)
    }

    fn err(&self, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::Fixture { id: self.id.clone(), reason: reason.into() }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.conflict.contains(&self.yes_priority) {
            return Err(self.err("yes_priority is not one of the conflicting dimensions"));
        }
        if self.variant_mask.is_empty() {
            return Err(self.err("empty variant mask"));
        }
        for role in [SlotRole::Agent, SlotRole::GroupA, SlotRole::GroupB] {
            match self.slots.iter().filter(|s| s.role == role).count() {
                1 => {}
                n => return Err(self.err(format!("expected exactly one {role:?} slot, found {n}"))),
            }
        }
        if self.slots.iter().filter(|s| s.role == SlotRole::Bystanders).count() > 1 {
            return Err(self.err("more than one bystander slot"));
        }
        for slot in &self.slots {
            for (c, v) in slot.fixed.attributes() {
                if !c.contains(v) {
                    return Err(self.err(format!("fixed {c} value `{v}` is not in the registry")));
                }
            }
            if slot.fixed.attributes().any(|(c, _)| c.human_only()) && !slot.fixed.is_human() {
                return Err(self.err("non-human slot with a human-only fixed attribute"));
            }
            for (c, values) in &slot.allowed {
                if let Some(v) = values.iter().find(|v| !c.contains(v)) {
                    return Err(self.err(format!("allowed {c} value `{v}` is not in the registry")));
                }
            }
            if slot.role == SlotRole::Bystanders && slot.count == 0 {
                return Err(self.err("bystander slot needs a positive count"));
            }
            if matches!(slot.role, SlotRole::GroupA | SlotRole::GroupB) && slot.max == 0 {
                return Err(self.err("group slot with max 0"));
            }
        }
        if self.ratios.cap == 0 {
            return Err(self.err("ratio cap must be positive"));
        }
        if let Some(list) = &self.ratios.explicit {
            for r in list {
                let base = reduce_ratio(r[0] as i64, r[1] as i64).map_err(|e| self.err(e.to_string()))?;
                if base != (r[0], r[1]) || !BASE_RATIOS.contains(&base) {
                    return Err(self.err(format!("ratio {}:{} is not an admissible base ratio", r[0], r[1])));
                }
                if r[0].max(r[1]) > self.ratios.cap {
                    return Err(self.err(format!("ratio {}:{} exceeds the cap", r[0], r[1])));
                }
            }
        }
        let body = self.body_template().map_err(|e| self.err(e.to_string()))?;
        let question = self.question_template().map_err(|e| self.err(e.to_string()))?;
        if !question.always_ends_with('?') {
            return Err(self.err("question must end with `?`"));
        }
        for t in [&body, &question] {
            for p in t.placeholders() {
                let role = match p {
                    Placeholder::Agent => SlotRole::Agent,
                    Placeholder::GroupA | Placeholder::CountA => SlotRole::GroupA,
                    Placeholder::GroupB | Placeholder::CountB => SlotRole::GroupB,
                    Placeholder::Bystanders => SlotRole::Bystanders,
                };
                if self.slot(role).is_none() {
                    return Err(self.err(format!("placeholder {p:?} has no {role:?} slot")));
                }
            }
            if t.switches().contains(&Switch::PluralBystanders) && self.slot(SlotRole::Bystanders).is_none() {
                return Err(self.err("bystander switch without a bystander slot"));
            }
        }
        Ok(())
    }
}

macro_rules! fixtures {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../fixtures/", $name, ".json")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = fixtures![
    "dirty",
    "guarded_speedboat",
    "save_dying",
    "crying_baby",
    "environmental_policy",
    "footbridge",
    "lifeboat",
    "prevent_spread",
    "shark_attack",
    "terrorist",
    "transplant",
    "trolley",
    "vaccine_policy",
    "bonus_allocation",
    "self_harming",
    "party",
    "hiring",
    "report_cheating",
    "resume",
    "inpurity",
    "feed",
    "report_stealing",
    "ceremony",
];

fn parse_fixture(name: &str, text: &str) -> Result<DilemmaSpec, ScenarioError> {
    let spec: DilemmaSpec = serde_json::from_str(text)
        .map_err(|e| ScenarioError::Fixture { id: name.to_owned(), reason: e.to_string() })?;
    spec.validate()?;
    Ok(spec)
}

/// The 23 shipped dilemmas.
pub fn builtin_fixtures() -> Vec<DilemmaSpec> {
    BUILTIN
        .iter()
        .map(|(name, text)| parse_fixture(name, text).expect("shipped fixtures are valid"))
        .collect()
}

/// Loads every `*.json` file in `dir`, sorted by file name.
pub fn load_fixture_dir(dir: &Path) -> Result<Vec<DilemmaSpec>, ScenarioError> {
    let io_err = |e: std::io::Error| ScenarioError::Fixture { id: dir.display().to_string(), reason: e.to_string() };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io_err)?;
            parse_fixture(&p.display().to_string(), &text)
        })
        .collect()
}
