//! Limited-memory BFGS with backtracking Armijo line search.
//!
//! The implementation is deliberately small: two-loop recursion over a bounded
//! history, halving line search, and a hard guarantee that the reported value
//! never exceeds the starting value. Dictionary updates in the trainers run
//! this for a handful of iterations per alternation, so robustness under a
//! tiny line-search budget matters more than superlinear polish.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Maximum outer iterations.
    pub max_iters: usize,
    /// Maximum function evaluations per line search (step halves each try).
    pub max_line_search: usize,
    /// Sufficient-decrease constant in the Armijo condition.
    pub armijo_c: f64,
    /// Stop once the gradient max-norm falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 10,
            max_line_search: 5,
            armijo_c: 1e-4,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective value after each accepted iteration, nonincreasing.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which must return the objective value and gradient.
///
/// Fails if the objective is non-finite at the start point; non-finite trial
/// points during line search are skipped. The returned value satisfies
/// `value <= f(x0)`.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("lbfgs needs at least one variable"));
    }
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective non-finite at start point".into()));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= cfg.grad_tol {
            break;
        }

        let mut dir = two_loop(&g, &history);
        for v in dir.iter_mut() {
            *v = -*v;
        }
        let mut dd = dot(&g, &dir);
        if dd >= 0.0 {
            // Curvature information went stale; restart from steepest descent.
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            dd = -dot(&g, &g);
            if dd == 0.0 {
                break;
            }
        }

        let mut step = if history.is_empty() {
            let gnorm = dot(&g, &g).sqrt();
            if gnorm > 1.0 {
                1.0 / gnorm
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let mut fallback: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..cfg.max_line_search.max(1) {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&xt);
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) {
                if ft <= fx + cfg.armijo_c * step * dd {
                    accepted = Some((xt, ft, gt));
                    break;
                }
                if ft < fx && fallback.as_ref().is_none_or(|(_, fb, _)| ft < *fb) {
                    fallback = Some((xt, ft, gt));
                }
            }
            step *= 0.5;
        }
        let Some((xt, ft, gt)) = accepted.or(fallback) else {
            break;
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xt;
        fx = ft;
        g = gt;
        trace.push(fx);
        iterations = iter + 1;
    }

    Ok(LbfgsOutcome { x, value: fx, trace, iterations })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    if history.is_empty() {
        return q;
    }
    let mut alphas = vec![0.0; history.len()];
    for (idx, (s, y, rho)) in history.iter().enumerate().rev() {
        let alpha = rho * dot(s, &q);
        alphas[idx] = alpha;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
    }
    let (s_last, y_last, _) = history.back().expect("non-empty");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (idx, (s, y, rho)) in history.iter().enumerate() {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[idx] - beta) * si;
        }
    }
    q
}
