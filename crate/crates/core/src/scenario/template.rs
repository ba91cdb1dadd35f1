//! Description templates.
//!
//! Syntax: literal text with `{name}` placeholders and two-way switches
//! `{tag:when false|when true}`. Switch branches may contain placeholders and
//! nested switches.
//!
//! | placeholder | bound to |
//! |---|---|
//! | `agent`, `group_a`, `group_b`, `bystanders` | character phrases |
//! | `n_a`, `n_b` | group sizes as words |
//!
//! | switch | selects on |
//! |---|---|
//! | `pf`, `ih`, `sb` | personal force, intention of harm, self-benefit |
//! | `s_a`, `s_b`, `s_y` | group size is singular / plural (a, b, bystanders) |

use serde::{Deserialize, Serialize};

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placeholder {
    Agent,
    GroupA,
    GroupB,
    Bystanders,
    CountA,
    CountB,
}

impl Placeholder {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "agent" => Placeholder::Agent,
            "group_a" => Placeholder::GroupA,
            "group_b" => Placeholder::GroupB,
            "bystanders" => Placeholder::Bystanders,
            "n_a" => Placeholder::CountA,
            "n_b" => Placeholder::CountB,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    PersonalForce,
    IntentionOfHarm,
    SelfBenefit,
    PluralA,
    PluralB,
    PluralBystanders,
}

impl Switch {
    fn parse(tag: &str) -> Option<Self> {
        Some(match tag {
            "pf" => Switch::PersonalForce,
            "ih" => Switch::IntentionOfHarm,
            "sb" => Switch::SelfBenefit,
            "s_a" => Switch::PluralA,
            "s_b" => Switch::PluralB,
            "s_y" => Switch::PluralBystanders,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Text(String),
    Slot(Placeholder),
    Choice { on: Switch, when_false: Vec<Segment>, when_true: Vec<Segment> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub segments: Vec<Segment>,
}

impl Template {
    pub fn parse(src: &str) -> Result<Template, ScenarioError> {
        let chars: Vec<char> = src.chars().collect();
        let mut pos = 0;
        let segments = parse_seq(&chars, &mut pos, false)?;
        if pos != chars.len() {
            return Err(ScenarioError::Template(format!("unbalanced `}}` at offset {pos} in `{src}`")));
        }
        Ok(Template { segments })
    }

    /// Every placeholder referenced anywhere in the template.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        fn walk(segs: &[Segment], out: &mut Vec<Placeholder>) {
            for s in segs {
                match s {
                    Segment::Text(_) => {}
                    Segment::Slot(p) => out.push(*p),
                    Segment::Choice { when_false, when_true, .. } => {
                        walk(when_false, out);
                        walk(when_true, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.segments, &mut out);
        out
    }

    /// True when every rendering of the template ends with `c`.
    pub fn always_ends_with(&self, c: char) -> bool {
        fn ends(segs: &[Segment], c: char) -> bool {
            match segs.last() {
                Some(Segment::Text(t)) => t.trim_end().ends_with(c),
                Some(Segment::Choice { when_false, when_true, .. }) => ends(when_false, c) && ends(when_true, c),
                _ => false,
            }
        }
        ends(&self.segments, c)
    }

    pub fn switches(&self) -> Vec<Switch> {
        fn walk(segs: &[Segment], out: &mut Vec<Switch>) {
            for s in segs {
                if let Segment::Choice { on, when_false, when_true } = s {
                    out.push(*on);
                    walk(when_false, out);
                    walk(when_true, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.segments, &mut out);
        out
    }
}

/// Parses until end of input, or until a `|`/`}` when inside a switch branch.
fn parse_seq(chars: &[char], pos: &mut usize, nested: bool) -> Result<Vec<Segment>, ScenarioError> {
    let mut out = Vec::new();
    let mut text = String::new();
    while *pos < chars.len() {
        let c = chars[*pos];
        match c {
            '{' => {
                if !text.is_empty() {
                    out.push(Segment::Text(std::mem::take(&mut text)));
                }
                *pos += 1;
                out.push(parse_brace(chars, pos)?);
            }
            '|' | '}' if nested => break,
            '}' => return Err(ScenarioError::Template(format!("stray `}}` at offset {}", *pos))),
            _ => {
                text.push(c);
                *pos += 1;
            }
        }
    }
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    Ok(out)
}

fn parse_brace(chars: &[char], pos: &mut usize) -> Result<Segment, ScenarioError> {
    let start = *pos;
    while *pos < chars.len() && (chars[*pos].is_ascii_alphanumeric() || chars[*pos] == '_') {
        *pos += 1;
    }
    let name: String = chars[start..*pos].iter().collect();
    match chars.get(*pos) {
        Some('}') => {
            *pos += 1;
            Placeholder::parse(&name)
                .map(Segment::Slot)
                .ok_or_else(|| ScenarioError::Template(format!("unknown placeholder `{{{name}}}`")))
        }
        Some(':') => {
            *pos += 1;
            let on = Switch::parse(&name)
                .ok_or_else(|| ScenarioError::Template(format!("unknown switch `{name}`")))?;
            let when_false = parse_seq(chars, pos, true)?;
            if chars.get(*pos) != Some(&'|') {
                return Err(ScenarioError::Template(format!("switch `{name}` needs two branches")));
            }
            *pos += 1;
            let when_true = parse_seq(chars, pos, true)?;
            if chars.get(*pos) != Some(&'}') {
                return Err(ScenarioError::Template(format!("switch `{name}` is not closed")));
            }
            *pos += 1;
            Ok(Segment::Choice { on, when_false, when_true })
        }
        _ => Err(ScenarioError::Template(format!("malformed placeholder near `{{{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_switches() {
        let t = Template::parse("You are {agent}. {pf:Press|Push {ih:it|{group_b}}} now.").unwrap();
        assert_eq!(t.placeholders(), vec![Placeholder::Agent, Placeholder::GroupB]);
        assert_eq!(t.switches(), vec![Switch::PersonalForce, Switch::IntentionOfHarm]);
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(Template::parse("{victims}").is_err());
        assert!(Template::parse("{pf:only one}").is_err());
        assert!(Template::parse("{pf:a|b").is_err());
        assert!(Template::parse("oops }").is_err());
        assert!(Template::parse("{zz:a|b}").is_err());
    }

    #[test]
    fn question_endings() {
        assert!(Template::parse("{pf:Go?|Push {ih:it|them}?}").unwrap().always_ends_with('?'));
        assert!(!Template::parse("{pf:Go?|Push}").unwrap().always_ends_with('?'));
        assert!(!Template::parse("Will you save {group_a}").unwrap().always_ends_with('?'));
    }
}
