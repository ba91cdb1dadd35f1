//! Character attribute registry.
//!
//! Every value a [`CharacterProfile`](super::CharacterProfile) may hold is listed
//! here, grouped by [`Category`]. Profession, wealth and education only apply to
//! human characters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Attribute categories in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Species,
    Color,
    Gender,
    Age,
    Profession,
    Wealth,
    Fitness,
    Education,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Species,
        Category::Color,
        Category::Gender,
        Category::Age,
        Category::Profession,
        Category::Wealth,
        Category::Fitness,
        Category::Education,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Species => "species",
            Category::Color => "color",
            Category::Gender => "gender",
            Category::Age => "age",
            Category::Profession => "profession",
            Category::Wealth => "wealth",
            Category::Fitness => "fitness",
            Category::Education => "education",
        }
    }

    /// Registry values for this category, in registry order.
    pub fn values(self) -> &'static [&'static str] {
        match self {
            Category::Species => SPECIES,
            Category::Color => COLORS,
            Category::Gender => GENDERS,
            Category::Age => AGES,
            Category::Profession => PROFESSIONS,
            Category::Wealth => WEALTH,
            Category::Fitness => FITNESS,
            Category::Education => EDUCATION,
        }
    }

    pub fn contains(self, value: &str) -> bool {
        self.values().contains(&value)
    }

    /// Position of `value` in the registry, if it belongs to this category.
    pub fn index_of(self, value: &str) -> Option<usize> {
        self.values().iter().position(|v| *v == value)
    }

    /// Categories that only make sense for human characters.
    pub fn human_only(self) -> bool {
        matches!(self, Category::Profession | Category::Wealth | Category::Education)
    }

    /// Whether the attribute is drawn on the avatar (the rest are text-only).
    pub fn visual(self) -> bool {
        matches!(
            self,
            Category::Species | Category::Color | Category::Gender | Category::Age | Category::Profession
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown attribute category `{s}`"))
    }
}

pub const HUMAN: &str = "human";

pub const SPECIES: &[&str] = &[
    HUMAN, "chick", "chicken", "goose", "pig", "sheep", "skunk", "porcupine", "boar", "fox", "wolf",
    "turtle", "frog", "toad", "crab", "cat",
];
pub const COLORS: &[&str] = &["black", "white", "yellow"];
pub const GENDERS: &[&str] = &["male", "female"];
pub const AGES: &[&str] = &["infant", "child", "teenager", "middle-age", "elderly"];
pub const PROFESSIONS: &[&str] = &[
    "thief",
    "blue-collar",
    "chef",
    "unemployed",
    "police",
    "doctor",
    "teacher",
    "white-collar",
    "boss",
    "soldier",
    "artist",
];
pub const WEALTH: &[&str] = &["normal", "poor", "rich"];
pub const FITNESS: &[&str] = &["normal", "unhealthy"];
pub const EDUCATION: &[&str] = &["low-educated", "well-educated"];

/// Social standing implied by a profession.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusClass {
    Criminal,
    Low,
    High,
}

impl StatusClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StatusClass::Criminal => "criminal",
            StatusClass::Low => "low",
            StatusClass::High => "high",
        }
    }

    pub fn professions(self) -> &'static [&'static str] {
        match self {
            StatusClass::Criminal => &PROFESSIONS[..1],
            StatusClass::Low => &PROFESSIONS[1..4],
            StatusClass::High => &PROFESSIONS[4..],
        }
    }

    pub fn of(profession: &str) -> Option<StatusClass> {
        [StatusClass::Criminal, StatusClass::Low, StatusClass::High]
            .into_iter()
            .find(|c| c.professions().contains(&profession))
    }
}

/// Ages for which a profession, wealth level or degree reads naturally.
pub fn is_adult_age(age: &str) -> bool {
    matches!(age, "middle-age" | "elderly")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_sizes() {
        assert_eq!(SPECIES.len(), 16);
        assert_eq!(COLORS, &["black", "white", "yellow"]);
        assert_eq!(PROFESSIONS.len(), 11);
        assert_eq!(StatusClass::Low.professions(), &["blue-collar", "chef", "unemployed"]);
        assert_eq!(StatusClass::High.professions().len(), 7);
        assert_eq!(StatusClass::of("thief"), Some(StatusClass::Criminal));
    }

    #[test]
    fn category_roundtrip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert!("race".parse::<Category>().is_err());
    }
}
