//! Stepwise Firth models: main effects first, then interactions.
//!
//! Columns that are constant zero or linear combinations of earlier columns
//! are set aside as aliased instead of failing the fit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{fit_firth, FirthFit, StatsError, Trial};
use crate::scenario::{Category, ScenarioSample};

/// Baseline level per category for character effects; each effect is read
/// against it.
pub const REFERENCE_LEVELS: [(Category, &str); 8] = [
    (Category::Species, "human"),
    (Category::Color, "white"),
    (Category::Gender, "male"),
    (Category::Age, "middle-age"),
    (Category::Profession, "blue-collar"),
    (Category::Wealth, "normal"),
    (Category::Fitness, "normal"),
    (Category::Education, "low-educated"),
];

const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Personal force, intention, self-benefit; then two-way, then three-way.
    Conceptual,
    /// Saved-minus-sacrificed attribute contrasts; then agent × contrast.
    Character,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub term: String,
    /// 1-based step at which the term entered.
    pub step: usize,
    pub beta: f64,
    pub se: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierFit {
    pub scheme: Scheme,
    pub n: usize,
    pub steps: Vec<FirthFit>,
    pub effects: Vec<EffectRow>,
    pub aliased: Vec<String>,
}

impl HierFit {
    pub fn effect(&self, term: &str) -> Option<&EffectRow> {
        self.effects.iter().find(|e| e.term == term)
    }

    /// Effects with p below 0.05.
    pub fn selected(&self) -> impl Iterator<Item = &EffectRow> {
        self.effects.iter().filter(|e| e.significant)
    }
}

/// Saved-minus-sacrificed presence contrast for each non-reference value.
pub fn character_terms(sample: &ScenarioSample) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (cat, reference) in REFERENCE_LEVELS {
        for v in cat.values() {
            if *v == reference {
                continue;
            }
            let key = format!("{}={v}", cat.as_str());
            let a = sample.group_a.iter().any(|p| p.has(&key)) as i32;
            let b = sample.group_b.iter().any(|p| p.has(&key)) as i32;
            out.push((key, (a - b) as f64));
        }
    }
    out
}

fn agent_terms(sample: &ScenarioSample) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (cat, reference) in REFERENCE_LEVELS {
        for v in cat.values() {
            if *v != reference {
                let key = format!("{}={v}", cat.as_str());
                out.push((format!("agent.{key}"), sample.agent.has(&key) as u8 as f64));
            }
        }
    }
    out
}

/// Orthogonal basis of accepted columns, for aliasing checks.
struct Basis(Vec<Vec<f64>>);

impl Basis {
    fn try_add(&mut self, col: &[f64]) -> bool {
        let norm0: f64 = col.iter().map(|v| v * v).sum();
        if norm0 == 0.0 {
            return false;
        }
        let mut r = col.to_vec();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &self.0 {
                let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm: f64 = r.iter().map(|v| v * v).sum();
        if norm <= 1e-10 * norm0 {
            return false;
        }
        let s = norm.sqrt();
        self.0.push(r.into_iter().map(|v| v / s).collect());
        true
    }
}

/// Fits the scheme's steps on decided trials (refusals dropped).
pub fn hierarchical_fit(trials: &[Trial<'_>], scheme: Scheme) -> Result<HierFit, StatsError> {
    let rows: Vec<(&ScenarioSample, f64)> = trials.iter().filter_map(|t| t.outcome().map(|y| (t.sample, y))).collect();
    if rows.is_empty() {
        return Err(StatsError::Design("no decided trials".into()));
    }
    let n = rows.len();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut basis = Basis(Vec::new());
    basis.try_add(&vec![1.0; n]);
    let mut names = vec!["intercept".to_string()];
    let mut cols = vec![vec![1.0; n]];
    let mut aliased = Vec::new();
    let mut steps = Vec::new();
    let mut effects: Vec<EffectRow> = Vec::new();

    let mut run_step = |cands: Vec<(String, Vec<f64>)>,
                        names: &mut Vec<String>,
                        cols: &mut Vec<Vec<f64>>,
                        steps: &mut Vec<FirthFit>,
                        effects: &mut Vec<EffectRow>|
     -> Result<(), StatsError> {
        for (name, col) in cands {
            if basis.try_add(&col) {
                names.push(name);
                cols.push(col);
            } else {
                aliased.push(name);
            }
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let fit = fit_firth(&x, &y, names.clone())?;
        let step = steps.len() + 1;
        for (i, term) in names.iter().enumerate().skip(1) {
            if effects.iter().any(|e| &e.term == term) {
                continue;
            }
            effects.push(EffectRow {
                term: term.clone(),
                step,
                beta: fit.beta[i],
                se: fit.se[i],
                p: fit.p[i],
                significant: fit.p[i] < SIGNIFICANCE,
            });
        }
        steps.push(fit);
        Ok(())
    };

    match scheme {
        Scheme::Conceptual => {
            let factor = |k: usize| -> Vec<f64> {
                rows.iter()
                    .map(|(s, _)| {
                        let c = s.conceptual;
                        [c.personal_force, c.intention_of_harm, c.self_benefit][k] as u8 as f64
                    })
                    .collect()
            };
            let f = [factor(0), factor(1), factor(2)];
            let label = ["personal_force", "intention_of_harm", "self_benefit"];
            let prod = |ks: &[usize]| -> Vec<f64> { (0..n).map(|i| ks.iter().map(|&k| f[k][i]).product()).collect() };
            let main = (0..3).map(|k| (label[k].to_string(), f[k].clone())).collect();
            run_step(main, &mut names, &mut cols, &mut steps, &mut effects)?;
            let two = [(0, 1), (0, 2), (1, 2)]
                .iter()
                .map(|&(a, b)| (format!("{}:{}", label[a], label[b]), prod(&[a, b])))
                .collect();
            run_step(two, &mut names, &mut cols, &mut steps, &mut effects)?;
            run_step(vec![(label.join(":"), prod(&[0, 1, 2]))], &mut names, &mut cols, &mut steps, &mut effects)?;
        }
        Scheme::Character => {
            let per_row: Vec<Vec<(String, f64)>> = rows.iter().map(|(s, _)| character_terms(s)).collect();
            let main: Vec<(String, Vec<f64>)> = (0..per_row[0].len())
                .map(|j| (per_row[0][j].0.clone(), per_row.iter().map(|r| r[j].1).collect()))
                .collect();
            let main_cols: std::collections::BTreeMap<String, Vec<f64>> = main.iter().cloned().collect();
            run_step(main, &mut names, &mut cols, &mut steps, &mut effects)?;
            let kept: Vec<String> = effects.iter().filter(|e| e.significant).map(|e| e.term.clone()).collect();
            let agent_rows: Vec<Vec<(String, f64)>> = rows.iter().map(|(s, _)| agent_terms(s)).collect();
            let mut two = Vec::new();
            for j in 0..agent_rows[0].len() {
                let a: Vec<f64> = agent_rows.iter().map(|r| r[j].1).collect();
                for term in &kept {
                    let col: Vec<f64> = a.iter().zip(&main_cols[term]).map(|(x, y)| x * y).collect();
                    two.push((format!("{}:{term}", agent_rows[0][j].0), col));
                }
            }
            run_step(two, &mut names, &mut cols, &mut steps, &mut effects)?;
        }
    }
    Ok(HierFit { scheme, n, steps, effects, aliased })
}
