//! Diagnostics computed from result logs joined with their samples.

mod firth;
mod hier;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{Decision, EvalMode, TrialRecord};
use crate::scenario::{Category, DilemmaSpec, MftDimension, SampleIndex, ScenarioSample, Subset};

pub use firth::{fit_firth, half_cell_log_odds, FirthFit};
pub use hier::{character_terms, hierarchical_fit, EffectRow, HierFit, Scheme, REFERENCE_LEVELS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("log references unknown sample {0}")]
    UnknownUid(String),
    #[error("slope undefined: all points share one net benefit")]
    UndefinedSlope,
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("design: {0}")]
    Design(String),
}

/// A decided trial and the sample it answered.
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub record: &'a TrialRecord,
    pub sample: &'a ScenarioSample,
}

impl Trial<'_> {
    pub fn decision(&self) -> Decision {
        self.record.decision.expect("joined trials carry decisions")
    }

    /// 1 for act, 0 for decline, None for refusal.
    pub fn outcome(&self) -> Option<f64> {
        match self.decision() {
            Decision::Act => Some(1.0),
            Decision::Decline => Some(0.0),
            Decision::Refusal => None,
        }
    }
}

/// Pairs each record with its sample. Records without a decision (transport
/// failures) are left out.
pub fn join<'a>(records: &'a [TrialRecord], index: &SampleIndex<'a>) -> Result<Vec<Trial<'a>>, StatsError> {
    records
        .iter()
        .filter(|r| r.decision.is_some())
        .map(|r| {
            let sample = index.get(&r.uid).ok_or_else(|| StatsError::UnknownUid(r.uid.clone()))?;
            Ok(Trial { record: r, sample })
        })
        .collect()
}

/// Groups trials by (model, mode).
pub fn by_model_mode<'a, 'b>(trials: &'b [Trial<'a>]) -> BTreeMap<(String, EvalMode), Vec<Trial<'a>>> {
    let mut out: BTreeMap<(String, EvalMode), Vec<Trial<'a>>> = BTreeMap::new();
    for t in trials {
        out.entry((t.record.model.clone(), t.record.mode)).or_default().push(*t);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub net_benefit: i64,
    pub p_act: f64,
    /// Act plus decline trials.
    pub n: usize,
    pub refusals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub model: String,
    pub mode: EvalMode,
    pub points: Vec<CurvePoint>,
}

/// Action probability by standardized net benefit, per (model, mode), over
/// quantity trials. Ratios with the same reduced form pool together.
pub fn action_curve(trials: &[Trial<'_>]) -> Vec<Curve> {
    let quantity: Vec<_> = trials.iter().copied().filter(|t| t.sample.subset == Subset::Quantity).collect();
    by_model_mode(&quantity)
        .into_iter()
        .map(|((model, mode), group)| {
            let mut acc: BTreeMap<i64, (usize, usize, usize)> = BTreeMap::new();
            for t in group {
                let e = acc.entry(t.sample.ratio.net_benefit()).or_default();
                match t.decision() {
                    Decision::Act => e.0 += 1,
                    Decision::Decline => e.1 += 1,
                    Decision::Refusal => e.2 += 1,
                }
            }
            let points = acc
                .into_iter()
                .filter(|(_, (a, d, _))| a + d > 0)
                .map(|(net, (a, d, r))| CurvePoint {
                    net_benefit: net,
                    p_act: a as f64 / (a + d) as f64,
                    n: a + d,
                    refusals: r,
                })
                .collect();
            Curve { model, mode, points }
        })
        .collect()
}

/// Weighted least-squares slope of p_act on net benefit, weights n.
pub fn marginal_sensitivity(points: &[CurvePoint]) -> Result<f64, StatsError> {
    let pts: Vec<_> = points.iter().filter(|p| p.n > 0).collect();
    if pts.len() < 2 {
        return Err(StatsError::TooFewPoints(pts.len()));
    }
    let w: f64 = pts.iter().map(|p| p.n as f64).sum();
    let mx = pts.iter().map(|p| p.n as f64 * p.net_benefit as f64).sum::<f64>() / w;
    let my = pts.iter().map(|p| p.n as f64 * p.p_act).sum::<f64>() / w;
    let sxx: f64 = pts.iter().map(|p| p.n as f64 * (p.net_benefit as f64 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::UndefinedSlope);
    }
    let sxy: f64 = pts.iter().map(|p| p.n as f64 * (p.net_benefit as f64 - mx) * (p.p_act - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub model: String,
    pub mode: EvalMode,
    pub dimension: MftDimension,
    pub wins: usize,
    pub n: usize,
    pub rate: f64,
}

/// Share of decided trials in which each dimension's side was chosen, over
/// inter-dimensional dilemmas featuring it.
pub fn mft_win_rates(trials: &[Trial<'_>], specs: &[DilemmaSpec]) -> Vec<WinRate> {
    let specs: BTreeMap<&str, &DilemmaSpec> = specs.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut acc: BTreeMap<(String, EvalMode, MftDimension), (usize, usize)> = BTreeMap::new();
    for t in trials {
        let Some(spec) = specs.get(t.sample.dilemma_id.as_str()) else { continue };
        if !spec.inter_dimensional() {
            continue;
        }
        let winner = match t.decision() {
            Decision::Act => spec.yes_priority,
            Decision::Decline => spec.no_priority(),
            Decision::Refusal => continue,
        };
        for dim in spec.conflict {
            let e = acc.entry((t.record.model.clone(), t.record.mode, dim)).or_default();
            e.1 += 1;
            if dim == winner {
                e.0 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|((model, mode, dimension), (wins, n))| WinRate { model, mode, dimension, wins, n, rate: wins as f64 / n as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceStrength {
    pub first: String,
    pub second: String,
    /// 2·p(save first) − 1.
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

fn group_has(group: &[crate::scenario::CharacterProfile], key: &str) -> bool {
    group.iter().any(|p| p.has(key))
}

/// Preference for the group carrying `first` over the one carrying `second`
/// (`category=value` keys) in single-feature trials that pit them.
pub fn preference_strength(trials: &[Trial<'_>], first: &str, second: &str) -> Option<PreferenceStrength> {
    let (mut chose_first, mut n) = (0usize, 0usize);
    for t in trials {
        let s = t.sample;
        if s.subset != Subset::SingleFeature {
            continue;
        }
        let a_first = group_has(&s.group_a, first) && !group_has(&s.group_a, second) && group_has(&s.group_b, second);
        let b_first = group_has(&s.group_b, first) && !group_has(&s.group_b, second) && group_has(&s.group_a, second);
        if !(a_first || b_first) {
            continue;
        }
        let saved_a = match t.decision() {
            Decision::Act => true,
            Decision::Decline => false,
            Decision::Refusal => continue,
        };
        n += 1;
        if saved_a == a_first {
            chose_first += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let p = chose_first as f64 / n as f64;
    Some(PreferenceStrength {
        first: first.into(),
        second: second.into(),
        value: 2.0 * p - 1.0,
        se: 2.0 * (p * (1.0 - p) / n as f64).sqrt(),
        n,
    })
}

/// Value pairs pitted against each other in single-feature trials, each
/// unordered pair once in registry order.
pub fn pitted_pairs(trials: &[Trial<'_>]) -> Vec<(String, String)> {
    let mut pairs = std::collections::BTreeSet::new();
    for t in trials {
        let s = t.sample;
        let Some(cat) = s.varied_feature else { continue };
        let value = |g: &[crate::scenario::CharacterProfile]| g.first().and_then(|p| p.get(cat)).map(str::to_owned);
        let (Some(a), Some(b)) = (value(&s.group_a), value(&s.group_b)) else { continue };
        let (ia, ib) = (cat.index_of(&a), cat.index_of(&b));
        let (x, y) = if ia <= ib { (a, b) } else { (b, a) };
        pairs.insert((Category::ALL.iter().position(|c| *c == cat), format!("{}={x}", cat.as_str()), format!("{}={y}", cat.as_str())));
    }
    pairs.into_iter().map(|(_, a, b)| (a, b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub model: String,
    pub mode: EvalMode,
    /// Mean modal-answer fraction over samples answered at least twice.
    pub iterative_robustness: Option<f64>,
    /// Mean over (subset, dilemma) of the SD of per-variant p_act.
    pub context_sensitivity: Option<f64>,
    pub repeated_samples: usize,
    pub tasks: usize,
}

pub fn robustness_metrics(trials: &[Trial<'_>]) -> Vec<RobustnessPoint> {
    by_model_mode(trials)
        .into_iter()
        .map(|((model, mode), group)| {
            let mut per_uid: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
            let mut per_task: BTreeMap<(Subset, &str), BTreeMap<u8, (usize, usize)>> = BTreeMap::new();
            for t in &group {
                let Some(y) = t.outcome() else { continue };
                let u = per_uid.entry(&t.record.uid).or_default();
                let v = per_task
                    .entry((t.sample.subset, &t.sample.dilemma_id))
                    .or_default()
                    .entry(t.sample.conceptual.index())
                    .or_default();
                if y == 1.0 {
                    u.0 += 1;
                    v.0 += 1;
                }
                u.1 += 1;
                v.1 += 1;
            }
            let modal: Vec<f64> =
                per_uid.values().filter(|(_, n)| *n >= 2).map(|&(a, n)| a.max(n - a) as f64 / n as f64).collect();
            let spreads: Vec<f64> = per_task
                .values()
                .filter(|v| v.len() >= 2)
                .map(|v| {
                    let ps: Vec<f64> = v.values().map(|&(a, n)| a as f64 / n as f64).collect();
                    let m = ps.iter().sum::<f64>() / ps.len() as f64;
                    (ps.iter().map(|p| (p - m).powi(2)).sum::<f64>() / ps.len() as f64).sqrt()
                })
                .collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            RobustnessPoint {
                model,
                mode,
                iterative_robustness: mean(&modal),
                context_sensitivity: mean(&spreads),
                repeated_samples: modal.len(),
                tasks: spreads.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefusalRate {
    pub model: String,
    pub subset: Subset,
    pub mode: EvalMode,
    pub refusals: usize,
    pub n: usize,
    pub rate: f64,
}

pub fn refusal_rates(trials: &[Trial<'_>]) -> Vec<RefusalRate> {
    let mut acc: BTreeMap<(String, Subset, EvalMode), (usize, usize)> = BTreeMap::new();
    for t in trials {
        let e = acc.entry((t.record.model.clone(), t.sample.subset, t.record.mode)).or_default();
        e.1 += 1;
        if t.decision() == Decision::Refusal {
            e.0 += 1;
        }
    }
    acc.into_iter()
        .map(|((model, subset, mode), (refusals, n))| RefusalRate {
            model,
            subset,
            mode,
            refusals,
            n,
            rate: refusals as f64 / n as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: i64, p: f64, n: usize) -> CurvePoint {
        CurvePoint { net_benefit: x, p_act: p, n, refusals: 0 }
    }

    #[test]
    fn sensitivity_examples() {
        let s = marginal_sensitivity(&[pt(-9, 0.1, 10), pt(0, 0.35, 10), pt(9, 0.6, 10)]).unwrap();
        assert!((s - 4.5 / 162.0).abs() < 1e-15);
        assert_eq!(marginal_sensitivity(&[pt(-1, 0.4, 3), pt(4, 0.4, 8)]).unwrap(), 0.0);
        let lin: Vec<_> = [-9, -4, -1, 0, 1, 4, 9].iter().map(|&x| pt(x, 0.5 + 0.03 * x as f64, 7 + x.unsigned_abs() as usize)).collect();
        assert!((marginal_sensitivity(&lin).unwrap() - 0.03).abs() < 1e-12);
        assert_eq!(marginal_sensitivity(&[pt(2, 0.1, 1), pt(2, 0.9, 1)]), Err(StatsError::UndefinedSlope));
        assert_eq!(marginal_sensitivity(&[pt(2, 0.1, 1)]), Err(StatsError::TooFewPoints(1)));
    }
}
