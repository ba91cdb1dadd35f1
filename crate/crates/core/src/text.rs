//! Description realization from fixture templates, plus the optional rewriter hook.

use std::ops::Range;

use log::warn;
use thiserror::Error;

use crate::scenario::registry::{Category, HUMAN};
use crate::scenario::{CharacterProfile, DilemmaSpec, Placeholder, ScenarioSample, Segment};

/// Prompt for an external fluency rewriter. `[formatted_description]` is replaced
/// by the marked-up description.
pub const REWRITE_PROMPT: &str = "This is a description of a moral dilemma:\n[formatted_description]\nRewrite this description as one paragraph to make it more fluent, natural, concise and understandable. Merge and arrange the lists of characters in the parentheses (for example, 'female doctor, female doctor, sheep, female child human' into 'two female doctor, a girl and a sheep'), adapt characteristics of each character (for example, 'yellow male elderly eastern' into 'an old yellow male from the east'), delete something like 0 species, but do not remove the given characteristics. If the merged list exceeds five entries, only list five and add an ellipsis. The last sentence should maintain the form of yes or not question. Keep every '|| ||' in the original position, do not add any, and do not change the content in '|| ||'. Provide the modified description directly:";

const MARK: &str = "||";
const MAX_ENTRIES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("template for `{dilemma}` uses {placeholder:?} but the sample has no such characters")]
    Unbound { dilemma: String, placeholder: Placeholder },
    #[error(transparent)]
    Template(#[from] crate::scenario::ScenarioError),
}

/// A realized description: body paragraph and the closing yes/no question.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedText {
    pub body: String,
    pub question: String,
    /// Byte ranges of `body` that a rewriter must keep verbatim. The question is
    /// always protected as a whole.
    pub protected_spans: Vec<Range<usize>>,
}

impl RealizedText {
    /// The text shown to models.
    pub fn full(&self) -> String {
        format!("{} {}", self.body, self.question)
    }

    /// The text with protected spans wrapped in `||` markers.
    pub fn marked(&self) -> String {
        let mut out = String::new();
        let mut at = 0;
        for r in &self.protected_spans {
            out.push_str(&self.body[at..r.start]);
            out.push_str(MARK);
            out.push_str(&self.body[r.clone()]);
            out.push_str(MARK);
            at = r.end;
        }
        out.push_str(&self.body[at..]);
        out.push(' ');
        out.push_str(MARK);
        out.push_str(&self.question);
        out.push_str(MARK);
        out
    }

    fn protected_texts(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.protected_spans.iter().map(|r| &self.body[r.clone()]).collect();
        v.push(&self.question);
        v
    }
}

/// Surface word for an attribute value.
pub fn surface(category: Category, value: &str) -> &str {
    match (category, value) {
        (Category::Age, "middle-age") => "middle-aged",
        (Category::Profession, "blue-collar") => "blue-collar worker",
        (Category::Profession, "white-collar") => "white-collar worker",
        (Category::Profession, "police") => "police officer",
        (Category::Wealth, "normal") => "middle-class",
        (Category::Fitness, "normal") => "fit",
        _ => value,
    }
}

fn plural(noun: &str) -> String {
    match noun {
        "child" => "children".into(),
        "goose" => "geese".into(),
        "sheep" => "sheep".into(),
        "thief" => "thieves".into(),
        "wolf" => "wolves".into(),
        _ if noun.ends_with('s') || noun.ends_with('x') || noun.ends_with("ch") || noun.ends_with("sh") => {
            format!("{noun}es")
        }
        _ => format!("{noun}s"),
    }
}

const NUMBER_WORDS: [&str; 13] =
    ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"];

/// Number words up to twelve, digits beyond.
pub fn count_word(n: usize) -> String {
    NUMBER_WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn young(age: &str) -> bool {
    matches!(age, "infant" | "child" | "teenager")
}

/// Phrase for `n` copies of one profile, e.g. "two male doctors".
pub fn character_phrase(p: &CharacterProfile, n: usize) -> String {
    let mut words: Vec<&str> = Vec::new();
    for c in [Category::Wealth, Category::Fitness, Category::Education] {
        if let Some(v) = p.get(c) {
            words.push(surface(c, v));
        }
    }
    let human = p.is_human();
    let age = p.get(Category::Age);
    let young_head = human && age.is_some_and(young);
    if let Some(a) = age.filter(|_| !young_head) {
        words.push(surface(Category::Age, a));
    }
    if p.get(Category::Profession) == Some("unemployed") {
        words.push("unemployed");
    }
    if let Some(c) = p.get(Category::Color) {
        words.push(c);
    }
    let gender = p.get(Category::Gender);
    let profession = p.get(Category::Profession).filter(|v| *v != "unemployed");
    let head = if let Some(prof) = profession {
        words.extend(gender);
        if p.species.is_some() {
            words.push(HUMAN);
        }
        surface(Category::Profession, prof)
    } else if young_head {
        words.extend(gender);
        if p.species.is_some() {
            words.push(HUMAN);
        }
        age.expect("young head has an age")
    } else if let Some(s) = p.get(Category::Species) {
        words.extend(gender);
        s
    } else if let Some(g) = gender {
        g
    } else {
        HUMAN
    };
    let head = if n == 1 { head.to_string() } else { plural(head) };
    let mut out = String::new();
    if n == 1 {
        let first = words.first().copied().unwrap_or(&head);
        out.push_str(article(first));
    } else {
        out.push_str(&count_word(n));
    }
    for w in words {
        out.push(' ');
        out.push_str(w);
    }
    out.push(' ');
    out.push_str(&head);
    out
}

/// Identical profiles merged with counts, most frequent first, ties in order of appearance.
pub fn aggregate(members: &[CharacterProfile]) -> Vec<(&CharacterProfile, usize)> {
    let mut entries: Vec<(&CharacterProfile, usize)> = Vec::new();
    for m in members {
        match entries.iter_mut().find(|(p, _)| *p == m) {
            Some(e) => e.1 += 1,
            None => entries.push((m, 1)),
        }
    }
    entries.sort_by_key(|e| std::cmp::Reverse(e.1));
    entries
}

/// The written list for a group; more than five distinct entries end in an ellipsis.
pub fn group_phrase(members: &[CharacterProfile]) -> String {
    let entries = aggregate(members);
    let parts: Vec<String> = entries.iter().map(|(p, n)| character_phrase(p, *n)).collect();
    match parts.len() {
        0 => "no one".into(),
        1 => parts[0].clone(),
        n if n > MAX_ENTRIES => format!("{}, ...", parts[..MAX_ENTRIES].join(", ")),
        n => format!("{} and {}", parts[..n - 1].join(", "), parts[n - 1]),
    }
}

struct Bindings<'a> {
    sample: &'a ScenarioSample,
    agent: String,
    group_a: String,
    group_b: String,
    bystanders: String,
}

impl Bindings<'_> {
    fn switch(&self, on: crate::scenario::Switch) -> bool {
        use crate::scenario::Switch::*;
        let c = self.sample.conceptual;
        match on {
            PersonalForce => c.personal_force,
            IntentionOfHarm => c.intention_of_harm,
            SelfBenefit => c.self_benefit,
            PluralA => self.sample.group_a.len() > 1,
            PluralB => self.sample.group_b.len() > 1,
            PluralBystanders => self.sample.bystanders.len() > 1,
        }
    }
}

/// Appends text while collapsing runs of spaces, so empty switch branches leave no gaps.
fn push_text(out: &mut String, text: &str) {
    for ch in text.chars() {
        if ch == ' ' && (out.is_empty() || out.ends_with(' ')) {
            continue;
        }
        out.push(ch);
    }
}

fn render(
    segs: &[Segment],
    b: &Bindings<'_>,
    out: &mut String,
    spans: &mut Vec<Range<usize>>,
) -> Result<(), TextError> {
    for seg in segs {
        match seg {
            Segment::Text(t) => push_text(out, t),
            Segment::Choice { on, when_false, when_true } => {
                render(if b.switch(*on) { when_true } else { when_false }, b, out, spans)?
            }
            Segment::Slot(p) => {
                let s = b.sample;
                let unbound = |group: &[CharacterProfile]| group.is_empty();
                let (text, protect) = match p {
                    Placeholder::Agent => (b.agent.as_str(), false),
                    Placeholder::GroupA if !unbound(&s.group_a) => (b.group_a.as_str(), true),
                    Placeholder::GroupB if !unbound(&s.group_b) => (b.group_b.as_str(), true),
                    Placeholder::Bystanders if !unbound(&s.bystanders) => (b.bystanders.as_str(), true),
                    Placeholder::CountA if !unbound(&s.group_a) => {
                        push_text(out, &count_word(s.group_a.len()));
                        continue;
                    }
                    Placeholder::CountB if !unbound(&s.group_b) => {
                        push_text(out, &count_word(s.group_b.len()));
                        continue;
                    }
                    _ => return Err(TextError::Unbound { dilemma: s.dilemma_id.clone(), placeholder: *p }),
                };
                let start = out.len();
                out.push_str(text);
                if protect {
                    spans.push(start..out.len());
                }
            }
        }
    }
    Ok(())
}

/// Binds the fixture templates to a sample. Pure in (sample, spec).
pub fn realize_description(sample: &ScenarioSample, spec: &DilemmaSpec) -> Result<RealizedText, TextError> {
    let b = Bindings {
        sample,
        agent: character_phrase(&sample.agent, 1),
        group_a: group_phrase(&sample.group_a),
        group_b: group_phrase(&sample.group_b),
        bystanders: group_phrase(&sample.bystanders),
    };
    let mut body = String::new();
    let mut spans = Vec::new();
    render(&spec.body_template()?.segments, &b, &mut body, &mut spans)?;
    let mut question = String::new();
    render(&spec.question_template()?.segments, &b, &mut question, &mut Vec::new())?;
    let trimmed = body.trim_end().len();
    body.truncate(trimmed);
    let trimmed = question.trim_end().len();
    question.truncate(trimmed);
    Ok(RealizedText { body, question, protected_spans: spans })
}

fn contains_word(hay: &str, needle: &str) -> bool {
    let boundary = |c: Option<char>| c.is_none_or(|c| !(c.is_alphanumeric() || c == '-'));
    hay.match_indices(needle).any(|(i, _)| {
        boundary(hay[..i].chars().next_back()) && boundary(hay[i + needle.len()..].chars().next())
    })
}

/// Attributes of the sample's characters whose surface word is missing from `text`.
/// Groups cut short by the ellipsis rule are not audited.
pub fn missing_attributes(sample: &ScenarioSample, text: &str) -> Vec<(Category, String)> {
    let text = text.to_lowercase();
    let mut missing = Vec::new();
    let groups: [&[CharacterProfile]; 4] =
        [std::slice::from_ref(&sample.agent), &sample.group_a, &sample.group_b, &sample.bystanders];
    for group in groups {
        if aggregate(group).len() > MAX_ENTRIES {
            continue;
        }
        for p in group {
            for (c, v) in p.attributes() {
                let w = surface(c, v);
                if !contains_word(&text, w) && !contains_word(&text, &plural(w)) {
                    missing.push((c, v.to_owned()));
                }
            }
        }
    }
    missing.sort();
    missing.dedup();
    missing
}

/// Whether a sentence reads as a yes/no question.
pub fn is_yes_no_question(s: &str) -> bool {
    const AUX: [&str; 11] = ["Will", "Would", "Do", "Does", "Did", "Should", "Shall", "Can", "Could", "Is", "Are"];
    let s = s.trim();
    s.ends_with('?') && AUX.iter().any(|a| s.strip_prefix(a).is_some_and(|r| r.starts_with(' ')))
}

/// An external fluency service. Receives the full rewrite prompt.
pub trait Rewriter {
    fn rewrite(&self, prompt: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteOutcome {
    pub text: RealizedText,
    pub warning: Option<String>,
}

/// Runs the rewriter, keeping the original text unless the result preserves every
/// protected span and still ends in a yes/no question.
pub fn rewrite_hook(text: &RealizedText, rewriter: Option<&dyn Rewriter>) -> RewriteOutcome {
    let Some(rw) = rewriter else {
        return RewriteOutcome { text: text.clone(), warning: None };
    };
    let keep = |why: String| {
        warn!("rewrite rejected: {why}");
        RewriteOutcome { text: text.clone(), warning: Some(why) }
    };
    let prompt = REWRITE_PROMPT.replace("[formatted_description]", &text.marked());
    let out = match rw.rewrite(&prompt) {
        Ok(o) => o,
        Err(e) => return keep(format!("rewriter failed: {e}")),
    };
    match parse_rewrite(out.trim(), text) {
        Ok(t) => RewriteOutcome { text: t, warning: None },
        Err(why) => keep(why),
    }
}

fn parse_rewrite(out: &str, original: &RealizedText) -> Result<RealizedText, String> {
    let pieces: Vec<&str> = out.split(MARK).collect();
    if pieces.len().is_multiple_of(2) {
        return Err("unbalanced protection markers".into());
    }
    let kept: Vec<&str> = pieces.iter().skip(1).step_by(2).copied().collect();
    if kept != original.protected_texts() {
        return Err("protected spans were altered, added or removed".into());
    }
    if !pieces.last().is_some_and(|tail| tail.trim().is_empty()) {
        return Err("text continues after the question".into());
    }
    let question = kept.last().expect("question is always protected").to_string();
    if !is_yes_no_question(&question) {
        return Err("final sentence is not a yes/no question".into());
    }
    let mut body = String::new();
    let mut spans = Vec::new();
    let n = pieces.len();
    for (i, piece) in pieces[..n - 2].iter().enumerate() {
        if i % 2 == 1 {
            spans.push(body.len()..body.len() + piece.len());
        }
        body.push_str(piece);
    }
    let trimmed = body.trim_end().len();
    body.truncate(trimmed);
    Ok(RealizedText { body, question, protected_spans: spans })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prof(pairs: &[(Category, &str)]) -> CharacterProfile {
        pairs.iter().fold(CharacterProfile::default(), |p, (c, v)| p.with(*c, v))
    }

    #[test]
    fn counting_aggregation() {
        let doc = prof(&[(Category::Gender, "male"), (Category::Profession, "doctor")]);
        assert_eq!(group_phrase(&[doc.clone(), doc]), "two male doctors");
    }

    #[test]
    fn mixed_group_style() {
        let unemployed = prof(&[
            (Category::Color, "white"),
            (Category::Gender, "female"),
            (Category::Profession, "unemployed"),
        ]);
        let chef = unemployed.clone().with(Category::Profession, "chef");
        let worker = unemployed.clone().with(Category::Profession, "blue-collar");
        let group = [chef, unemployed.clone(), worker, unemployed.clone(), unemployed];
        assert_eq!(
            group_phrase(&group),
            "three unemployed white females, a white female chef and a white female blue-collar worker"
        );
    }

    #[test]
    fn ellipsis_after_five_entries() {
        let group: Vec<_> = ["thief", "chef", "doctor", "teacher", "boss", "artist"]
            .iter()
            .map(|p| prof(&[(Category::Profession, p)]))
            .collect();
        let s = group_phrase(&group);
        assert!(s.ends_with(", ..."), "{s}");
        assert!(!s.contains("artist"));
        assert_eq!(group_phrase(&group[..5]), "a thief, a chef, a doctor, a teacher and a boss");
    }

    #[test]
    fn numbers_and_heads() {
        assert_eq!(count_word(12), "twelve");
        assert_eq!(count_word(13), "13");
        let w = prof(&[(Category::Color, "white")]);
        assert_eq!(character_phrase(&w, 6), "six white humans");
        let goose = prof(&[(Category::Species, "goose"), (Category::Gender, "female")]);
        assert_eq!(character_phrase(&goose, 2), "two female geese");
        let kid = prof(&[(Category::Age, "infant"), (Category::Gender, "male")]);
        assert_eq!(character_phrase(&kid, 1), "a male infant");
        let old = prof(&[(Category::Age, "elderly"), (Category::Wealth, "poor")]);
        assert_eq!(character_phrase(&old, 1), "a poor elderly human");
        assert_eq!(character_phrase(&prof(&[(Category::Profession, "unemployed")]), 1), "an unemployed human");
    }

    #[test]
    fn word_boundaries() {
        assert!(!contains_word("two females", "male"));
        assert!(contains_word("a male, and", "male"));
        assert!(!contains_word("an unhealthy cat", "healthy"));
    }

    #[test]
    fn yes_no_questions() {
        assert!(is_yes_no_question("Will you press the button?"));
        assert!(!is_yes_no_question("Will you press the button."));
        assert!(!is_yes_no_question("Why would you?"));
    }

    struct Fixed(Result<String, String>);
    impl Rewriter for Fixed {
        fn rewrite(&self, _: &str) -> Result<String, String> {
            self.0.clone()
        }
    }

    fn sample_text() -> RealizedText {
        let body = "You see two pigs near a cat.".to_string();
        RealizedText { protected_spans: vec![8..16, 22..27], body, question: "Will you act?".into() }
    }

    #[test]
    fn rewrite_identity_without_service() {
        let t = sample_text();
        assert_eq!(rewrite_hook(&t, None), RewriteOutcome { text: t, warning: None });
    }

    #[test]
    fn rewrite_accepts_faithful_output() {
        let t = sample_text();
        assert_eq!(t.marked(), "You see ||two pigs|| near ||a cat||. ||Will you act?||");
        let rw = Fixed(Ok("Standing there, you notice ||two pigs|| beside ||a cat||. ||Will you act?||".into()));
        let out = rewrite_hook(&t, Some(&rw));
        assert_eq!(out.warning, None);
        assert_eq!(out.text.body, "Standing there, you notice two pigs beside a cat.");
        assert_eq!(&out.text.body[out.text.protected_spans[1].clone()], "a cat");
    }

    #[test]
    fn rewrite_rejections() {
        let t = sample_text();
        for bad in [
            "You see ||two pigs|| near ||a cat||. ||Will you act||",
            "You see ||three pigs|| near ||a cat||. ||Will you act?||",
            "You see two pigs near a cat. Will you act?",
            "You see ||two pigs|| near ||a cat||. ||Will you act?|| Think.",
        ] {
            let out = rewrite_hook(&t, Some(&Fixed(Ok(bad.into()))));
            assert_eq!(out.text, t, "{bad}");
            assert!(out.warning.is_some());
        }
        let out = rewrite_hook(&t, Some(&Fixed(Err("timeout".into()))));
        assert_eq!(out.text, t);
    }
}
