//! Interventional Shapley interaction values for tree ensembles.
//!
//! Each leaf is its own small game: the leaf pays out when the hybrid row
//! (instance on S, background elsewhere) follows its path. Features off the
//! path are null players, so the game only needs the path's features, and the
//! ensemble's values are the sum over leaves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::TreeEnsemble;
use super::AttribError;

/// Limit for the whole-ensemble enumeration.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    /// Row-major n × n, main effects on the diagonal.
    pub phi: Vec<f64>,
    pub n: usize,
    /// Mean ensemble output over the background.
    pub base: f64,
    /// Ensemble output at the instance.
    pub value: f64,
    pub instance: Vec<u8>,
}

impl ShapMatrix {
    fn zeros(n: usize, base: f64, value: f64, instance: &[u8]) -> Self {
        ShapMatrix { phi: vec![0.0; n * n], n, base, value, instance: instance.to_vec() }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.phi[i * self.n + j]
    }

    /// Per-feature Shapley values (row sums).
    pub fn shapley(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.phi[i * self.n..(i + 1) * self.n].iter().sum()).collect()
    }

    /// base + ΣΦ − f(x); zero up to rounding.
    pub fn efficiency_gap(&self) -> f64 {
        self.base + self.phi.iter().sum::<f64>() - self.value
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

/// A leaf with its path merged per feature; `q[mask]` is the share of
/// background rows that satisfy the path on the features outside `mask`.
struct LeafGame {
    feats: Vec<usize>,
    req: Vec<u8>,
    value: f64,
    q: Vec<f64>,
}

pub struct Explainer<'a> {
    ensemble: &'a TreeEnsemble,
    leaves: Vec<LeafGame>,
    base: f64,
    fact: Vec<f64>,
}

impl<'a> Explainer<'a> {
    pub fn new(ensemble: &'a TreeEnsemble, background: &[Vec<u8>]) -> Result<Self, AttribError> {
        if background.is_empty() {
            return Err(AttribError::EmptyBackground);
        }
        if background.iter().any(|r| r.len() != ensemble.n_features) {
            return Err(AttribError::Invalid("background width differs from the ensemble".into()));
        }
        let mut leaves = Vec::new();
        'paths: for (path, value) in ensemble.trees.iter().flat_map(|t| t.paths()) {
            let mut feats: Vec<usize> = Vec::new();
            let mut req: Vec<u8> = Vec::new();
            for (f, r) in path {
                match feats.iter().position(|&g| g == f) {
                    Some(k) if req[k] != r => continue 'paths,
                    Some(_) => {}
                    None => {
                        feats.push(f);
                        req.push(r);
                    }
                }
            }
            let m = feats.len();
            let full = (1usize << m) - 1;
            let mut counts = vec![0usize; 1 << m];
            for z in background {
                let hit = (0..m).fold(0usize, |acc, k| acc | (((z[feats[k]] == req[k]) as usize) << k));
                counts[hit] += 1;
            }
            // q over the complement T = full ^ mask: rows whose hit set covers T
            let mut q = vec![0.0; 1 << m];
            for mask in 0..=full {
                let t = full ^ mask;
                let c: usize = (0..=full).filter(|h| h & t == t).map(|h| counts[h]).sum();
                q[mask] = c as f64 / background.len() as f64;
            }
            leaves.push(LeafGame { feats, req, value, q });
        }
        let base = ensemble.base_score + leaves.iter().map(|l| l.value * l.q[0]).sum::<f64>();
        Ok(Explainer { ensemble, leaves, base, fact: factorials(16) })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn explain(&self, x: &[u8]) -> ShapMatrix {
        let n = self.ensemble.n_features;
        let mut out = ShapMatrix::zeros(n, self.base, self.ensemble.predict(x), x);
        let fact = &self.fact;
        for leaf in &self.leaves {
            let m = leaf.feats.len();
            if m == 0 {
                continue;
            }
            let matched = (0..m).fold(0usize, |acc, k| acc | (((x[leaf.feats[k]] == leaf.req[k]) as usize) << k));
            let v = |s: usize| if s & !matched == 0 { leaf.value * leaf.q[s] } else { 0.0 };
            let mut shap = vec![0.0; m];
            for i in 0..m {
                for s in 0..1usize << m {
                    if s >> i & 1 == 1 {
                        continue;
                    }
                    let k = s.count_ones() as usize;
                    shap[i] += fact[k] * fact[m - k - 1] / fact[m] * (v(s | 1 << i) - v(s));
                }
            }
            let mut row_off = vec![0.0; m];
            for i in 0..m {
                for j in i + 1..m {
                    let mut inter = 0.0;
                    for s in 0..1usize << m {
                        if s >> i & 1 == 1 || s >> j & 1 == 1 {
                            continue;
                        }
                        let k = s.count_ones() as usize;
                        let w = fact[k] * fact[m - k - 2] / fact[m - 1];
                        inter += w * (v(s | 1 << i | 1 << j) - v(s | 1 << i) - v(s | 1 << j) + v(s));
                    }
                    let half = inter / 2.0;
                    let (fi, fj) = (leaf.feats[i], leaf.feats[j]);
                    out.phi[fi * n + fj] += half;
                    out.phi[fj * n + fi] += half;
                    row_off[i] += half;
                    row_off[j] += half;
                }
            }
            for i in 0..m {
                let fi = leaf.feats[i];
                out.phi[fi * n + fi] += shap[i] - row_off[i];
            }
        }
        out
    }

    pub fn explain_all(&self, rows: &[Vec<u8>]) -> Vec<ShapMatrix> {
        rows.par_iter().map(|x| self.explain(x)).collect()
    }
}

pub fn shap_interactions(ensemble: &TreeEnsemble, instance: &[u8], background: &[Vec<u8>]) -> Result<ShapMatrix, AttribError> {
    if instance.len() != ensemble.n_features {
        return Err(AttribError::Invalid("instance width differs from the ensemble".into()));
    }
    Ok(Explainer::new(ensemble, background)?.explain(instance))
}

/// Direct evaluation of the interaction index over every subset of the
/// ensemble's split features, predicting on hybrid rows.
pub fn brute_force_shap(ensemble: &TreeEnsemble, instance: &[u8], background: &[Vec<u8>]) -> Result<ShapMatrix, AttribError> {
    if background.is_empty() {
        return Err(AttribError::EmptyBackground);
    }
    let players = ensemble.used_features();
    let m = players.len();
    if m > BRUTE_FORCE_MAX_FEATURES {
        return Err(AttribError::Invalid(format!("{m} features exceed the brute-force limit")));
    }
    let n = ensemble.n_features;
    let values: Vec<f64> = (0..1usize << m)
        .map(|s| {
            let total: f64 = background
                .iter()
                .map(|z| {
                    let mut row = z.clone();
                    for (k, &f) in players.iter().enumerate() {
                        if s >> k & 1 == 1 {
                            row[f] = instance[f];
                        }
                    }
                    ensemble.predict(&row)
                })
                .sum();
            total / background.len() as f64
        })
        .collect();
    let fact = factorials(m.max(2));
    let mut out = ShapMatrix::zeros(n, values[0], ensemble.predict(instance), instance);
    let mut phi_i = vec![0.0; m];
    for (i, p) in phi_i.iter_mut().enumerate() {
        for s in (0..1usize << m).filter(|s| s >> i & 1 == 0) {
            let k = s.count_ones() as usize;
            *p += fact[k] * fact[m - k - 1] / fact[m] * (values[s | 1 << i] - values[s]);
        }
    }
    for i in 0..m {
        let mut off = 0.0;
        for j in (0..m).filter(|&j| j != i) {
            let mut inter = 0.0;
            for s in (0..1usize << m).filter(|s| s >> i & 1 == 0 && s >> j & 1 == 0) {
                let k = s.count_ones() as usize;
                inter += fact[k] * fact[m - k - 2] / fact[m - 1]
                    * (values[s | 1 << i | 1 << j] - values[s | 1 << i] - values[s | 1 << j] + values[s]);
            }
            out.phi[players[i] * n + players[j]] = inter / 2.0;
            off += inter / 2.0;
        }
        out.phi[players[i] * n + players[i]] = phi_i[i] - off;
    }
    Ok(out)
}
