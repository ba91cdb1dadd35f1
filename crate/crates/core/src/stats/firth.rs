//! Firth penalized logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirthFit {
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub p: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// ℓ(β) + ½·log det I(β) at the estimate.
    pub penalized_loglik: f64,
}

impl FirthFit {
    pub fn coef(&self, term: &str) -> Option<(f64, f64, f64)> {
        let i = self.terms.iter().position(|t| t == term)?;
        Some((self.beta[i], self.se[i], self.p[i]))
    }
}

/// log σ(z) without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct State {
    pi: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    objective: f64,
}

fn evaluate(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> Option<State> {
    let eta = x * beta;
    let pi = eta.map(sigmoid);
    let w = pi.map(|p| p * (1.0 - p));
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let info = x.transpose() * xw;
    let chol = info.cholesky()?;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let ll: f64 = eta.iter().zip(y.iter()).map(|(&e, &yi)| yi * log_sigmoid(e) + (1.0 - yi) * log_sigmoid(-e)).sum();
    Some(State { pi, chol, objective: ll + 0.5 * log_det })
}

/// Maximizes ℓ(β) + ½·log det I(β) by Newton steps on the modified score,
/// halving steps that lower the penalized likelihood. `x` must include the
/// intercept column if one is wanted.
pub fn fit_firth(x: &DMatrix<f64>, y: &[f64], terms: Vec<String>) -> Result<FirthFit, StatsError> {
    let (n, k) = x.shape();
    if n != y.len() || terms.len() != k {
        return Err(StatsError::Design(format!("{n} rows, {} outcomes, {k} columns, {} terms", y.len(), terms.len())));
    }
    if k == 0 || n == 0 {
        return Err(StatsError::Design("empty design".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::Design("outcomes must be 0 or 1".into()));
    }
    if x.rank(1e-9 * x.amax().max(1.0)) < k {
        return Err(StatsError::Design("design matrix is rank deficient".into()));
    }
    let y = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(k);
    let mut state = evaluate(x, &y, &beta).ok_or_else(|| StatsError::Design("singular information".into()))?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        // hat diagonal h_i = w_i · x_iᵀ I⁻¹ x_i
        let inv = state.chol.inverse();
        let a = x * &inv;
        let mut score_resid = DVector::zeros(n);
        for i in 0..n {
            let p = state.pi[i];
            let h = p * (1.0 - p) * a.row(i).dot(&x.row(i));
            score_resid[i] = y[i] - p + h * (0.5 - p);
        }
        let score = x.transpose() * score_resid;
        let mut step = state.chol.solve(&score);
        let full = step.amax();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &beta + &step;
            if let Some(s) = evaluate(x, &y, &cand) {
                if s.objective >= state.objective - 1e-12 * state.objective.abs().max(1.0) {
                    accepted = Some((cand, s));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, s)) = accepted else { break };
        beta = cand;
        state = s;
        if full < TOL {
            converged = true;
            break;
        }
    }
    let cov = state.chol.inverse();
    let normal = Normal::standard();
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].sqrt()).collect();
    let p = (0..k).map(|j| 2.0 * (1.0 - normal.cdf((beta[j] / se[j]).abs()))).collect();
    Ok(FirthFit {
        terms,
        beta: beta.iter().copied().collect(),
        se,
        p,
        converged,
        iterations,
        penalized_loglik: state.objective,
    })
}

/// Half-cell-added log odds ratio for a 2×2 table. `a`/`b` are yes/no counts
/// where x = 1, `c`/`d` where x = 0.
pub fn half_cell_log_odds(a: f64, b: f64, c: f64, d: f64) -> f64 {
    ((a + 0.5) * (d + 0.5) / ((b + 0.5) * (c + 0.5))).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two(a: usize, b: usize, c: usize, d: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (x, yes, no) in [(1.0, a, b), (0.0, c, d)] {
            for k in 0..yes + no {
                rows.extend([1.0, x]);
                y.push(if k < yes { 1.0 } else { 0.0 });
            }
        }
        (DMatrix::from_row_slice(y.len(), 2, &rows), y)
    }

    fn terms() -> Vec<String> {
        vec!["intercept".into(), "x".into()]
    }

    #[test]
    fn closed_form_examples() {
        let (x, y) = two_by_two(3, 7, 1, 9);
        let f = fit_firth(&x, &y, terms()).unwrap();
        assert!(f.converged);
        assert!((f.beta[1] - 1.0837).abs() < 1e-4);
        assert!((f.beta[1] - half_cell_log_odds(3.0, 7.0, 1.0, 9.0)).abs() < 1e-8);

        let (x, y) = two_by_two(5, 0, 0, 5);
        let f = fit_firth(&x, &y, terms()).unwrap();
        assert!(f.converged);
        assert!((f.beta[1] - 121f64.ln()).abs() < 1e-8);

        let (x, y) = two_by_two(4, 6, 4, 6);
        assert!(fit_firth(&x, &y, terms()).unwrap().beta[1].abs() < 1e-10);
    }

    // Maximum of the penalized likelihood located by a coarse-to-fine grid,
    // independent of the Newton iteration.
    #[test]
    fn grid_search_agrees() {
        let (x, y) = two_by_two(3, 7, 1, 9);
        let yv = DVector::from_column_slice(&y);
        let obj = |b0: f64, b1: f64| evaluate(&x, &yv, &DVector::from_column_slice(&[b0, b1])).unwrap().objective;
        let (mut c0, mut c1, mut h) = (0.0, 0.0, 1.0);
        for _ in 0..40 {
            let mut best = (obj(c0, c1), c0, c1);
            for i in -4..=4 {
                for j in -4..=4 {
                    let (b0, b1) = (c0 + i as f64 * h / 4.0, c1 + j as f64 * h / 4.0);
                    let v = obj(b0, b1);
                    if v > best.0 {
                        best = (v, b0, b1);
                    }
                }
            }
            (c0, c1) = (best.1, best.2);
            h *= 0.6;
        }
        let f = fit_firth(&x, &y, terms()).unwrap();
        assert!((f.beta[1] - c1).abs() < 1e-6, "{} vs {c1}", f.beta[1]);
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(fit_firth(&x, &[0.0, 1.0, 0.0, 1.0], terms()), Err(StatsError::Design(_))));
    }

    #[test]
    fn column_order_equivariance() {
        let data = [
            (1.0, 0.0, 1.0, 1.0), (1.0, 1.0, 0.0, 0.0), (1.0, 1.0, 1.0, 1.0), (1.0, 0.0, 0.0, 0.0),
            (1.0, 1.0, 0.0, 1.0), (1.0, 0.0, 1.0, 0.0), (1.0, 1.0, 1.0, 1.0), (1.0, 0.0, 0.0, 1.0),
            (1.0, 1.0, 0.0, 0.0), (1.0, 0.0, 1.0, 1.0), (1.0, 1.0, 1.0, 0.0), (1.0, 0.0, 0.0, 0.0),
        ];
        let y: Vec<f64> = data.iter().map(|r| r.3).collect();
        let a = DMatrix::from_fn(data.len(), 3, |i, j| [data[i].0, data[i].1, data[i].2][j]);
        let b = DMatrix::from_fn(data.len(), 3, |i, j| [data[i].2, data[i].0, data[i].1][j]);
        let names = |v: [&str; 3]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let fa = fit_firth(&a, &y, names(["c", "u", "v"])).unwrap();
        let fb = fit_firth(&b, &y, names(["v", "c", "u"])).unwrap();
        for t in ["c", "u", "v"] {
            let (x, y) = (fa.coef(t).unwrap(), fb.coef(t).unwrap());
            assert!((x.0 - y.0).abs() < 1e-9 && (x.2 - y.2).abs() < 1e-9);
        }
    }
}
