//! Sparse near-orthogonal trainer: dictionary entries under a global
//! nonzero budget.
//!
//! Training is two staged. Stage one minimizes the penalized objective plus
//! an L1 term, `φ + λ·Σ|c_mkd|`, by cyclic coordinate descent over scalar
//! dictionary entries; every update has the closed soft-threshold form.
//! Stage two fixes the support to the S largest-magnitude entries, zeroes
//! everything else, and refits only the supported entries with λ = 0. The
//! final dictionaries satisfy `nnz ≤ S`, which caps the per-query distance
//! table cost at O(nnz) instead of O(M·K·D).

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{QuantizerModel, TrainRecord, Variant};
use crate::quant::{
    cross_term_delta, deltas_for_codes, quantization_error, reconstruct, CodebookSet, Codes,
    IcmEncoder,
};
use crate::trainers::{update_epsilon, TrainConfig, ValidationHarness, ValidationSweep};

/// Knobs of the sparse trainer: the shared alternation config plus the
/// sparsity budget and L1 weight.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SparseConfig {
    /// Maximum nonzero entries across all dictionaries (S).
    pub s_budget: usize,
    /// L1 weight λ ≥ 0 for the first stage.
    pub lambda: f64,
    pub base: TrainConfig,
}

impl SparseConfig {
    /// The default budget K·D: the footprint of a product quantizer's
    /// codebooks.
    pub fn default_budget(k: usize, d: usize) -> usize {
        k * d
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.base.validate()?;
        if self.s_budget < d {
            return Err(Error::invalid(format!(
                "s_budget {} cannot express a single full element of dimension {d}",
                self.s_budget
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Trained sparse model, the training-set codes, and the L1 stage's log
/// (kept apart from the model's own log, which covers only the monotone
/// support-refit stage).
#[derive(Debug, Clone)]
pub struct SnocqOutput {
    pub model: QuantizerModel,
    pub codes: Codes,
    pub stage1_log: Vec<TrainRecord>,
}

/// Minimizer of `g(c) = ½αc² + βc + λ|c|` for α > 0: the soft-threshold
/// `S_{λ/α}(-β/α)` with the three-branch form.
pub fn soft_threshold_update(alpha: f64, beta: f64, lambda: f64) -> f64 {
    assert!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive");
    assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be non-negative");
    let target = -beta / alpha;
    let threshold = lambda / alpha;
    if target > threshold {
        target - threshold
    } else if target < -threshold {
        target + threshold
    } else {
        0.0
    }
}

/// Exact quadratic coefficients (α, β) of the objective restricted to the
/// single entry `c_{m,k,d}`, summed over the points assigned to element
/// `(m, k)`:
///
/// ```text
/// α = Σ_n (2 + 8μ·a_nd²)
/// β = Σ_n (2(a_nd - x_nd) + 4μ·a_nd·b_nd)
/// ```
///
/// with `a_nd` the dim-d reconstruction excluding this element's entry and
/// `b_nd = δ_n - ε - 2·a_nd·c_mkd`. No assigned points means α = 0 and the
/// entry has no influence; callers skip the update then.
///
/// This is the from-scratch reference; the trainer maintains the same values
/// incrementally.
#[allow(clippy::too_many_arguments)]
pub fn sparse_coefficients(
    codebooks: &CodebookSet,
    m_idx: usize,
    k_idx: usize,
    d_idx: usize,
    codes: &Codes,
    dataset: &Dataset,
    epsilon: f64,
    mu: f64,
) -> Result<(f64, f64)> {
    if m_idx >= codebooks.m() || k_idx >= codebooks.k() || d_idx >= codebooks.dim() {
        return Err(Error::invalid("entry index out of range"));
    }
    if codes.n() != dataset.n() || codes.m() != codebooks.m() {
        return Err(Error::invalid("codes do not match dataset and codebooks"));
    }
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::invalid("mu must be finite and non-negative"));
    }
    let c = codebooks.element(m_idx, k_idx)[d_idx];
    let mut alpha = 0.0;
    let mut beta = 0.0;
    for n in 0..dataset.n() {
        let code = codes.row(n);
        if code[m_idx] as usize != k_idx {
            continue;
        }
        let xbar = reconstruct(codebooks, code)?;
        let delta = cross_term_delta(codebooks, code, None)?;
        let a = xbar[d_idx] - c;
        let b = delta - epsilon - 2.0 * a * c;
        alpha += 2.0 + 8.0 * mu * a * a;
        beta += 2.0 * (a - dataset.row(n)[d_idx]) + 4.0 * mu * a * b;
    }
    Ok((alpha, beta))
}

/// Two-stage sparse training. See the module doc for the stage layout; both
/// stages run the same encode → ε → coordinate-descent alternation as the
/// dense trainers and are individually monotone in their own objective.
pub fn train_snocq(
    data: &Dataset,
    m: usize,
    k: usize,
    config: &SparseConfig,
) -> Result<SnocqOutput> {
    config.validate(data.dim())?;
    let pq = crate::baselines::train_pq(data, m, k, config.base.kmeans_iters, config.base.seed)?;

    let stage1 = run_stage(data, pq.codebooks, pq.codes, 0.0, config, config.lambda, None)?;

    let support = top_magnitude_support(&stage1.codebooks, config.s_budget);
    let mut tensor = stage1.codebooks.tensor().clone();
    for (flat, v) in tensor.iter_mut().enumerate() {
        if !support[flat] {
            *v = 0.0;
        }
    }
    let zeroed = CodebookSet::new(tensor)?;

    let stage2 = run_stage(data, zeroed, stage1.codes, stage1.epsilon, config, 0.0, Some(&support))?;
    debug_assert!(stage2.codebooks.nnz() <= config.s_budget);

    let model =
        QuantizerModel::new(Variant::Snocq, stage2.codebooks, stage2.epsilon, None, stage2.log)?;
    Ok(SnocqOutput { model, codes: stage2.codes, stage1_log: stage1.log })
}

/// λ sweep by held-out recall, mirroring the μ sweep. Default grid:
/// `{1e-3, 1e-2, 1e-1, 1} × (warm-start error / (N·D))` plus the λ = 0
/// baseline.
pub fn select_lambda(data: &Dataset, m: usize, k: usize, config: &SparseConfig) -> Result<f64> {
    Ok(select_lambda_detailed(data, m, k, config)?.chosen)
}

pub fn select_lambda_detailed(
    data: &Dataset,
    m: usize,
    k: usize,
    config: &SparseConfig,
) -> Result<ValidationSweep> {
    config.validate(data.dim())?;
    let harness = ValidationHarness::new(data, config.base.validation_fraction, config.base.seed)?;
    let pq =
        crate::baselines::train_pq(&harness.train, m, k, config.base.kmeans_iters, config.base.seed)?;
    let scale = pq.error / (harness.train.n() as f64 * data.dim() as f64);
    let mut grid: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0].iter().map(|f| f * scale).collect();
    grid.insert(0, 0.0);
    harness.sweep(&grid, |train, lambda| {
        let cfg = SparseConfig { lambda, ..config.clone() };
        let out = train_snocq(train, m, k, &cfg)?;
        let codes = {
            let encoder = IcmEncoder::new(
                &out.model.codebooks,
                cfg.base.mu,
                out.model.epsilon,
                cfg.base.icm_sweeps,
            )?;
            encoder.encode_dataset(data, None)?
        };
        Ok((out.model, codes))
    })
}

struct StageState {
    codebooks: CodebookSet,
    codes: Codes,
    epsilon: f64,
    log: Vec<TrainRecord>,
}

/// Coordinate sweeps over the dictionary block per outer iteration. Two is
/// enough to track the encode step at desk scale without dominating runtime.
const COORDINATE_SWEEPS: usize = 2;

fn run_stage(
    data: &Dataset,
    codebooks: CodebookSet,
    codes: Codes,
    epsilon: f64,
    config: &SparseConfig,
    lambda: f64,
    support: Option<&[bool]>,
) -> Result<StageState> {
    let mu = config.base.mu;
    let mut state = StageState { codebooks, codes, epsilon, log: Vec::new() };
    let first = evaluate(data, &state.codebooks, &state.codes, state.epsilon, mu, lambda)?;
    state.log.push(first);

    for _ in 0..config.base.outer_iters {
        state.codes = {
            let encoder =
                IcmEncoder::new(&state.codebooks, mu, state.epsilon, config.base.icm_sweeps)?;
            encoder.encode_dataset(data, Some(&state.codes))?
        };
        state.epsilon = update_epsilon(&state.codebooks, &state.codes)?;
        coordinate_descent(
            data,
            &mut state.codebooks,
            &state.codes,
            state.epsilon,
            mu,
            lambda,
            support,
        )?;

        let record = evaluate(data, &state.codebooks, &state.codes, state.epsilon, mu, lambda)?;
        let prev = state.log.last().expect("log starts non-empty").objective;
        let converged = prev - record.objective <= config.base.rel_tol * prev.abs();
        state.log.push(record);
        if converged {
            break;
        }
    }
    Ok(state)
}

/// Flags of the S largest-magnitude nonzero entries, ties broken by flat
/// index so the support is deterministic.
fn top_magnitude_support(codebooks: &CodebookSet, s_budget: usize) -> Vec<bool> {
    let flat: Vec<f64> = codebooks.tensor().iter().copied().collect();
    let mut order: Vec<usize> = (0..flat.len()).filter(|&i| flat[i] != 0.0).collect();
    order.sort_by(|&a, &b| flat[b].abs().total_cmp(&flat[a].abs()).then(a.cmp(&b)));
    let mut support = vec![false; flat.len()];
    for &i in order.iter().take(s_budget) {
        support[i] = true;
    }
    support
}

/// `COORDINATE_SWEEPS` cyclic passes over all entries in (m, k, d) order.
///
/// Per-point reconstructions and cross terms are refreshed once, then kept
/// consistent incrementally: changing one entry by Δc shifts `x̄_nd` by Δc
/// and `δ_n` by `2·a_nd·Δc` for exactly the points assigned to the element,
/// so one entry update costs O(|N_mk|). Updates are sequential by design;
/// each depends on all previous ones.
fn coordinate_descent(
    data: &Dataset,
    codebooks: &mut CodebookSet,
    codes: &Codes,
    epsilon: f64,
    mu: f64,
    lambda: f64,
    support: Option<&[bool]>,
) -> Result<()> {
    let (m, k, d) = codebooks.tensor().dim();
    let n = data.n();

    // Points assigned to each (m, k) element, in id order.
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); m * k];
    for i in 0..n {
        for (mi, &ki) in codes.row(i).iter().enumerate() {
            buckets[mi * k + ki as usize].push(i as u32);
        }
    }

    let mut xbar = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let recon = reconstruct(codebooks, codes.row(i))?;
        xbar.row_mut(i).assign(&recon);
    }
    let mut deltas = deltas_for_codes(codebooks, codes)?;

    let view = data.view();
    for _ in 0..COORDINATE_SWEEPS {
        for mi in 0..m {
            for ki in 0..k {
                let pts = &buckets[mi * k + ki];
                if pts.is_empty() {
                    // α would be 0: the entry does not appear in the
                    // objective, so it stays as it is.
                    continue;
                }
                for di in 0..d {
                    if let Some(mask) = support {
                        if !mask[(mi * k + ki) * d + di] {
                            continue;
                        }
                    }
                    let c_old = codebooks.tensor()[[mi, ki, di]];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    for &p in pts {
                        let p = p as usize;
                        let a = xbar[[p, di]] - c_old;
                        let b = deltas[p] - epsilon - 2.0 * a * c_old;
                        alpha += 2.0 + 8.0 * mu * a * a;
                        beta += 2.0 * (a - view[[p, di]]) + 4.0 * mu * a * b;
                    }
                    let c_new = soft_threshold_update(alpha, beta, lambda);
                    if c_new != c_old {
                        for &p in pts {
                            let p = p as usize;
                            let a = xbar[[p, di]] - c_old;
                            xbar[[p, di]] = a + c_new;
                            deltas[p] += 2.0 * a * (c_new - c_old);
                        }
                        codebooks.tensor_mut()[[mi, ki, di]] = c_new;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Objective = quantization error + μ·Σ(δ-ε)² + λ·Σ|c|; the λ term belongs
/// to stage one only (stage two passes λ = 0).
fn evaluate(
    data: &Dataset,
    codebooks: &CodebookSet,
    codes: &Codes,
    epsilon: f64,
    mu: f64,
    lambda: f64,
) -> Result<TrainRecord> {
    let quant_error = quantization_error(codebooks, data, codes)?;
    let deltas = deltas_for_codes(codebooks, codes)?;
    let spread: f64 = deltas.iter().map(|d| (d - epsilon) * (d - epsilon)).sum();
    let l1: f64 = codebooks.tensor().iter().map(|v| v.abs()).sum();
    Ok(TrainRecord {
        objective: quant_error + mu * spread + lambda * l1,
        quant_error,
        constraint_residual: spread,
    })
}
