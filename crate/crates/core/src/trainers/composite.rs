//! The shared alternation behind `train_cq`, `train_nocq` and `train_ocq`.
//!
//! State is `(codebooks, codes, ε)`. One outer iteration runs encode → ε → C,
//! and each step exactly or approximately minimizes the full objective over
//! its own block with the others fixed, never increasing it:
//!
//! * encode: ICM per point (penalized for the δ-spread variant);
//! * ε: closed form, the mean cross term;
//! * C: a few L-BFGS steps (or the closed-form least squares solve, guarded
//!   by accept-if-better so a penalty can never be made worse by it).

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, ArrayView3, Axis};

use crate::baselines::train_pq;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{QuantizerModel, TrainRecord, Variant};
use crate::par::par_sum_vec;
use crate::quant::{deltas_for_codes, quantization_error, CodebookSet, Codes, IcmEncoder};
use crate::solvers::lbfgs_minimize;

use super::{update_epsilon, DictionaryUpdate, TrainConfig, TrainOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Penalty {
    /// Plain composite quantization: minimize quantization error only.
    None,
    /// `μ Σ_n (δ_n - ε)²`: pull every cross term toward a shared constant.
    DeltaSpread,
    /// `μ Σ_{i≠j} ||C_iᵀC_j||_F²`: make dictionaries mutually orthogonal,
    /// with ε pinned at 0.
    Coherence,
}

/// Composite quantization: additive dictionaries minimizing pure
/// reconstruction error. `config.mu` is ignored.
pub fn train_cq(data: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<TrainOutput> {
    train_composite(data, m, k, config, Penalty::None, Variant::Cq)
}

/// Near-orthogonal composite quantization: reconstruction error plus
/// `μ Σ_n (δ_n - ε)²`, so scans can treat every point's cross term as the
/// single constant ε.
pub fn train_nocq(data: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<TrainOutput> {
    train_composite(data, m, k, config, Penalty::DeltaSpread, Variant::Nocq)
}

/// Orthogonal-dictionary composite quantization: reconstruction error plus
/// `μ Σ_{i≠j} ||C_iᵀC_j||_F²`, which drives every cross term toward 0.
pub fn train_ocq(data: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<TrainOutput> {
    train_composite(data, m, k, config, Penalty::Coherence, Variant::Ocq)
}

fn train_composite(
    data: &Dataset,
    m: usize,
    k: usize,
    config: &TrainConfig,
    penalty: Penalty,
    variant: Variant,
) -> Result<TrainOutput> {
    config.validate()?;
    let mu = if penalty == Penalty::None { 0.0 } else { config.mu };

    // Product warm start. Its disjoint supports make every δ_n and the
    // coherence penalty exactly zero, so the starting objective is the
    // product quantizer's error and later iterations can only improve on it.
    let pq = train_pq(data, m, k, config.kmeans_iters, config.seed)?;
    let mut codebooks = pq.codebooks;
    let mut codes = pq.codes;
    let mut epsilon = 0.0f64;
    let mut log = vec![TrainRecord {
        objective: pq.error,
        quant_error: pq.error,
        constraint_residual: 0.0,
    }];

    for _ in 0..config.outer_iters {
        let icm_mu = if penalty == Penalty::DeltaSpread { mu } else { 0.0 };
        codes = {
            let encoder = IcmEncoder::new(&codebooks, icm_mu, epsilon, config.icm_sweeps)?;
            encoder.encode_dataset(data, Some(&codes))?
        };

        if penalty == Penalty::DeltaSpread {
            epsilon = update_epsilon(&codebooks, &codes)?;
        }

        codebooks = match config.dictionary_update {
            DictionaryUpdate::Iterative => {
                lbfgs_update(data, codebooks, &codes, epsilon, mu, penalty, config)?
            }
            DictionaryUpdate::ClosedForm => {
                closed_form_update(data, codebooks, &codes, epsilon, mu, penalty)?
            }
        };

        let record = evaluate(data, &codebooks, &codes, epsilon, mu, penalty)?;
        let prev = log.last().expect("log starts non-empty").objective;
        let converged = prev - record.objective <= config.rel_tol * prev.abs();
        log.push(record);
        if converged {
            break;
        }
    }

    let final_epsilon = match penalty {
        Penalty::DeltaSpread => epsilon,
        // Descriptive for the unpenalized variant: scans that subtract a
        // constant do best with the mean cross term of the final codes.
        Penalty::None => update_epsilon(&codebooks, &codes)?,
        Penalty::Coherence => 0.0,
    };

    let model = QuantizerModel::new(variant, codebooks, final_epsilon, None, log)?;
    Ok(TrainOutput { model, codes })
}

/// Objective, quantization error and unweighted penalty at the given state.
/// The unpenalized variant reports the δ spread about its mean so the three
/// logs stay comparable.
fn evaluate(
    data: &Dataset,
    codebooks: &CodebookSet,
    codes: &Codes,
    epsilon: f64,
    mu: f64,
    penalty: Penalty,
) -> Result<TrainRecord> {
    let quant_error = quantization_error(codebooks, data, codes)?;
    let (objective, constraint_residual) = match penalty {
        Penalty::None => {
            let deltas = deltas_for_codes(codebooks, codes)?;
            let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
            let spread: f64 = deltas.iter().map(|d| (d - mean) * (d - mean)).sum();
            (quant_error, spread)
        }
        Penalty::DeltaSpread => {
            let deltas = deltas_for_codes(codebooks, codes)?;
            let spread: f64 = deltas.iter().map(|d| (d - epsilon) * (d - epsilon)).sum();
            (quant_error + mu * spread, spread)
        }
        Penalty::Coherence => {
            let (m, k, d) = codebooks.tensor().dim();
            let flat = codebooks.tensor().as_slice().expect("codebook tensor is contiguous");
            let coherence = coherence_value_grad(flat, m, k, d, false).0.max(0.0);
            (quant_error + mu * coherence, coherence)
        }
    };
    Ok(TrainRecord { objective, quant_error, constraint_residual })
}

/// A few L-BFGS steps on the dictionary block. The solver never returns a
/// worse point than it started from, so this step is monotone.
fn lbfgs_update(
    data: &Dataset,
    codebooks: CodebookSet,
    codes: &Codes,
    epsilon: f64,
    mu: f64,
    penalty: Penalty,
    config: &TrainConfig,
) -> Result<CodebookSet> {
    let (m, k, d) = codebooks.tensor().dim();
    let x0: Vec<f64> = codebooks.tensor().iter().copied().collect();
    let outcome = lbfgs_minimize(
        |flat| objective_and_gradient(data, codes, flat, m, k, d, epsilon, mu, penalty),
        &x0,
        &config.lbfgs,
    )?;
    let tensor = Array3::from_shape_vec((m, k, d), outcome.x)
        .map_err(|e| Error::invalid(e.to_string()))?;
    CodebookSet::new(tensor)
}

/// Value and gradient of the dictionary objective at a flattened `[M,K,D]`
/// tensor, with codes and ε fixed.
///
/// Per point: `||x - x̄||²` contributes `2(x̄ - x)` to each selected element;
/// the δ penalty adds `μ(δ - ε)²` with `∂δ/∂c = 2(x̄ - c)` at each selected
/// element, using `δ = ||x̄||² - Σ_m ||c_m||²`. The coherence penalty is
/// code-independent and added once at the end.
fn objective_and_gradient(
    data: &Dataset,
    codes: &Codes,
    flat: &[f64],
    m: usize,
    k: usize,
    d: usize,
    epsilon: f64,
    mu: f64,
    penalty: Penalty,
) -> (f64, Vec<f64>) {
    let spread = penalty == Penalty::DeltaSpread;
    let acc = par_sum_vec(data.n(), 1 + m * k * d, |i, buf| {
        let x = data.row(i);
        let x = x.to_slice().expect("dataset rows are contiguous");
        let code = codes.row(i);

        let mut xbar = vec![0.0; d];
        let mut sel_norms = 0.0;
        for (mi, &ki) in code.iter().enumerate() {
            let base = (mi * k + ki as usize) * d;
            let elem = &flat[base..base + d];
            for (r, c) in xbar.iter_mut().zip(elem) {
                *r += *c;
            }
            if spread {
                sel_norms += elem.iter().map(|c| c * c).sum::<f64>();
            }
        }

        let mut err = 0.0;
        for j in 0..d {
            let r = xbar[j] - x[j];
            err += r * r;
        }

        // Penalty coefficient: d/dc of μ(δ-ε)² is gcoef·(x̄ - c) per element.
        let mut gcoef = 0.0;
        if spread {
            let xbar_sq: f64 = xbar.iter().map(|v| v * v).sum();
            let delta = xbar_sq - sel_norms;
            buf[0] += err + mu * (delta - epsilon) * (delta - epsilon);
            gcoef = 4.0 * mu * (delta - epsilon);
        } else {
            buf[0] += err;
        }

        for (mi, &ki) in code.iter().enumerate() {
            let base = (mi * k + ki as usize) * d;
            for j in 0..d {
                let g = 2.0 * (xbar[j] - x[j]) + gcoef * (xbar[j] - flat[base + j]);
                buf[1 + base + j] += g;
            }
        }
    });

    let mut value = acc[0];
    let mut grad = acc[1..].to_vec();
    if penalty == Penalty::Coherence && mu > 0.0 {
        let (pval, pgrad) = coherence_value_grad(flat, m, k, d, true);
        value += mu * pval;
        for (g, p) in grad.iter_mut().zip(&pgrad) {
            *g += mu * p;
        }
    }
    (value, grad)
}

/// `Σ_{i≠j} ||C_iᵀC_j||_F²` and, when asked, its gradient.
///
/// Via the D×D Gram matrices `G_m = C_mᵀC_m` (treating elements as rows of a
/// K×D block `B_m`, `G_m = B_mᵀB_m`): the value is `||T||_F² - Σ||G_m||_F²`
/// with `T = Σ G_m`, and the gradient with respect to `B_m` is
/// `4·B_m(T - G_m)`.
fn coherence_value_grad(
    flat: &[f64],
    m: usize,
    k: usize,
    d: usize,
    with_grad: bool,
) -> (f64, Vec<f64>) {
    let tensor = ArrayView3::from_shape((m, k, d), flat).expect("flat length is m*k*d");
    let grams: Vec<Array2<f64>> = (0..m)
        .map(|mi| {
            let b = tensor.index_axis(Axis(0), mi);
            b.t().dot(&b)
        })
        .collect();
    let mut t = Array2::<f64>::zeros((d, d));
    for g in &grams {
        t += g;
    }
    let total: f64 = t.iter().map(|v| v * v).sum();
    let own: f64 = grams.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    let value = total - own;

    let mut grad = Vec::new();
    if with_grad {
        grad = vec![0.0; m * k * d];
        for mi in 0..m {
            let b = tensor.index_axis(Axis(0), mi);
            let diff = &t - &grams[mi];
            let gm = b.dot(&diff);
            for ki in 0..k {
                for di in 0..d {
                    grad[(mi * k + ki) * d + di] = 4.0 * gm[[ki, di]];
                }
            }
        }
    }
    (value, grad)
}

/// Exact least-squares dictionaries for the current codes, ignoring any
/// penalty: solve `(YYᵀ)·Cᵀ = Y·Xᵀ` over the stacked one-hot code matrix Y.
/// `YYᵀ` is the code co-occurrence count matrix; if its Cholesky fails, a
/// ridge of `1e-8·trace` is added. The candidate only replaces the current
/// dictionaries when it lowers the full objective, which keeps the
/// alternation monotone even when a penalty is active.
fn closed_form_update(
    data: &Dataset,
    codebooks: CodebookSet,
    codes: &Codes,
    epsilon: f64,
    mu: f64,
    penalty: Penalty,
) -> Result<CodebookSet> {
    let (m, k, d) = codebooks.tensor().dim();
    let mk = m * k;
    let mut a = DMatrix::<f64>::zeros(mk, mk);
    let mut b = DMatrix::<f64>::zeros(mk, d);
    for i in 0..data.n() {
        let code = codes.row(i);
        let x = data.row(i);
        for (mi, &ki) in code.iter().enumerate() {
            let row = mi * k + ki as usize;
            for (mj, &kj) in code.iter().enumerate() {
                a[(row, mj * k + kj as usize)] += 1.0;
            }
            for (j, &xj) in x.iter().enumerate() {
                b[(row, j)] += xj;
            }
        }
    }

    let solved = a.clone().cholesky().map(|ch| ch.solve(&b)).or_else(|| {
        // Unused elements leave zero rows in YYᵀ; the ridge keeps them at
        // zero instead of failing the solve.
        let ridge = 1e-8 * a.trace();
        let mut regularized = a;
        for i in 0..mk {
            regularized[(i, i)] += ridge;
        }
        regularized.cholesky().map(|ch| ch.solve(&b))
    });
    let Some(z) = solved else {
        return Ok(codebooks);
    };
    if z.iter().any(|v| !v.is_finite()) {
        return Ok(codebooks);
    }

    let tensor = Array3::from_shape_fn((m, k, d), |(mi, ki, di)| z[(mi * k + ki, di)]);
    let candidate = CodebookSet::new(tensor)?;
    let current = evaluate(data, &codebooks, codes, epsilon, mu, penalty)?.objective;
    let proposed = evaluate(data, &candidate, codes, epsilon, mu, penalty)?.objective;
    Ok(if proposed < current { candidate } else { codebooks })
}
