//! Gradient-boosted trees with logistic loss over binary features.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::AttribError;
use crate::rng::stream_for;

pub const ENSEMBLE_VERSION: u32 = 1;

/// Prevalence is clipped to this band before taking the base logit.
const PREVALENCE_CLIP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub min_child_weight: f64,
    /// Splits whose children are leaves are collapsed when their gain
    /// (score-statistic scale) falls below this.
    pub min_split_gain: f64,
    /// Fraction of rows drawn (without replacement) per round.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams { rounds: 100, max_depth: 4, learning_rate: 0.1, l2: 1.0, min_child_weight: 1.0, min_split_gain: 10.0, subsample: 1.0, seed: 0 }
    }
}

/// Split nodes send `x[feature] == 0` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Node 0 is the root. Leaf values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[u8]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, left, right } => i = if x[feature] == 0 { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Root-to-leaf paths as (feature, required value) lists with leaf values.
    pub fn paths(&self) -> Vec<(Vec<(usize, u8)>, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((i, path)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { value } => out.push((path, value)),
                Node::Split { feature, left, right } => {
                    let mut l = path.clone();
                    l.push((feature, 0));
                    let mut r = path;
                    r.push((feature, 1));
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub version: u32,
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Set when the training labels had a single class.
    pub degenerate: bool,
    pub train_accuracy: f64,
    pub train_logloss: f64,
}

impl TreeEnsemble {
    /// Logit-scale prediction.
    pub fn predict(&self, x: &[u8]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AttribError> {
        let e: TreeEnsemble = serde_json::from_str(s).map_err(|e| AttribError::Invalid(e.to_string()))?;
        if e.version != ENSEMBLE_VERSION {
            return Err(AttribError::Invalid(format!("ensemble version {} (expected {ENSEMBLE_VERSION})", e.version)));
        }
        e.check()?;
        Ok(e)
    }

    fn check(&self) -> Result<(), AttribError> {
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, left, right } = *n {
                    if feature >= self.n_features || left >= t.nodes.len() || right >= t.nodes.len() {
                        return Err(AttribError::Invalid("split refers outside the tree or registry".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Grower<'a> {
    x: &'a [Vec<u8>],
    g: &'a [f64],
    h: &'a [f64],
    p: &'a GbdtParams,
    n_features: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]));
        self.nodes.push(Node::Leaf { value: -self.p.learning_rate * g / (h + self.p.l2) });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        if depth == self.p.max_depth {
            return self.leaf(&rows);
        }
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]));
        let lam = self.p.l2;
        let parent = g * g / (h + lam);
        let mut best: Option<(f64, usize)> = None;
        for f in 0..self.n_features {
            let (mut g1, mut h1) = (0.0, 0.0);
            for &i in &rows {
                if self.x[i][f] != 0 {
                    g1 += self.g[i];
                    h1 += self.h[i];
                }
            }
            let (g0, h0) = (g - g1, h - h1);
            if h1 < self.p.min_child_weight || h0 < self.p.min_child_weight {
                continue;
            }
            let gain = g0 * g0 / (h0 + lam) + g1 * g1 / (h1 + lam) - parent;
            if best.is_none_or(|(b, _)| gain > b + 1e-12) {
                best = Some((gain, f));
            }
        }
        let Some((gain, f)) = best else { return self.leaf(&rows) };
        let (right_rows, left_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][f] != 0);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        let is_leaf = |n: &Node| matches!(n, Node::Leaf { .. });
        if gain < self.p.min_split_gain && is_leaf(&self.nodes[left]) && is_leaf(&self.nodes[right]) {
            self.nodes.truncate(id);
            return self.leaf(&rows);
        }
        self.nodes[id] = Node::Split { feature: f, left, right };
        id
    }
}

/// Fits a boosted ensemble to binary labels (1 = act). Rows must all have the
/// same width.
pub fn fit_gbdt(x: &[Vec<u8>], y: &[f64], params: &GbdtParams) -> Result<TreeEnsemble, AttribError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AttribError::Invalid(format!("{} rows and {} labels", x.len(), y.len())));
    }
    let n_features = x[0].len();
    if x.iter().any(|r| r.len() != n_features) {
        return Err(AttribError::Invalid("ragged feature matrix".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(AttribError::Invalid("labels must be 0 or 1".into()));
    }
    if params.max_depth == 0 || params.max_depth > 4 {
        return Err(AttribError::Invalid("max_depth must be in 1..=4".into()));
    }
    if !(params.min_split_gain >= 0.0) {
        return Err(AttribError::Invalid("min_split_gain must be ≥ 0".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) || !(params.learning_rate > 0.0) || params.l2 < 0.0 {
        return Err(AttribError::Invalid("subsample in (0, 1], learning_rate > 0, l2 ≥ 0".into()));
    }
    let n = y.len();
    let prevalence = y.iter().sum::<f64>() / n as f64;
    let base_score = logit(prevalence.clamp(PREVALENCE_CLIP, 1.0 - PREVALENCE_CLIP));
    let degenerate = prevalence == 0.0 || prevalence == 1.0;
    let mut margin = vec![base_score; n];
    let mut trees = Vec::new();
    if !degenerate {
        let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
        for round in 0..params.rounds {
            let g: Vec<f64> = margin.iter().zip(y).map(|(&m, &yi)| sigmoid(m) - yi).collect();
            let h: Vec<f64> = margin.iter().map(|&m| (sigmoid(m) * (1.0 - sigmoid(m))).max(1e-16)).collect();
            let mut rows: Vec<usize> = if take == n {
                (0..n).collect()
            } else {
                let mut rng = stream_for(params.seed, &["gbdt", &round.to_string()]);
                sample(&mut rng, n, take).into_vec()
            };
            rows.sort_unstable();
            let mut grower = Grower { x, g: &g, h: &h, p: params, n_features, nodes: Vec::new() };
            grower.grow(rows, 0);
            let tree = Tree { nodes: grower.nodes };
            for (m, r) in margin.iter_mut().zip(x) {
                *m += tree.predict(r);
            }
            trees.push(tree);
        }
    }
    let correct = margin.iter().zip(y).filter(|(&m, &yi)| (m > 0.0) == (yi == 1.0)).count();
    let logloss = margin
        .iter()
        .zip(y)
        .map(|(&m, &yi)| {
            let p = sigmoid(m).clamp(1e-15, 1.0 - 1e-15);
            -(yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n as f64;
    Ok(TreeEnsemble {
        version: ENSEMBLE_VERSION,
        n_features,
        base_score,
        learning_rate: params.learning_rate,
        trees,
        degenerate,
        train_accuracy: correct as f64 / n as f64,
        train_logloss: logloss,
    })
}
