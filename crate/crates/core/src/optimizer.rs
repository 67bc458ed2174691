//! Optimized zero-forcing noise precoders.
//!
//! A set `Z` of users carries the zero-forcing burden: every other user `i`
//! sends noise `√λ_i v_i` on its own column, and each `k ∈ Z` sends
//! `−√λ_i (h_i/h_k) d_k v_i` on that column so the column cancels at the
//! server. With the per-eavesdropper security written as
//! `S_ℓ = 1 − η² / (K (α_ℓ + Σ_i β_ℓi λ_i))`, maximizing the weakest `S_ℓ`
//! is a linear program in `(t, λ)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SystemRealization;
use crate::encoding::{residual_budgets, EncodingError, NoisePrecoder, PrecoderKind};
use crate::linalg::ComplexMatrix;
use crate::lp::{solve_lp, LpProblem, LpStatus};
use crate::metrics::{coop_security, noncoop_security};

/// Eavesdroppers whose aligned gain falls below this fraction of their
/// total gain are treated as blind.
pub const DROP_TOL: f64 = 1e-12;

/// Score margin a later candidate needs to displace an earlier one.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Exhaustive,
    BestChannel,
}

/// Which security level decides between candidate zero-forcing sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    NonCooperative,
    Cooperative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EavesdropperObjective {
    /// `α_ℓ`; infinite for dropped eavesdroppers.
    pub alpha: Vec<f64>,
    /// `β_ℓi`, one row per eavesdropper, one column per noise column.
    pub beta: Vec<Vec<f64>>,
    pub dropped_eavs: Vec<usize>,
    pub t_star: Option<f64>,
}

impl EavesdropperObjective {
    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.alpha.len()).filter(|l| !self.dropped_eavs.contains(l))
    }

    /// `min_ℓ (α_ℓ + Σ_i β_ℓi λ_i)` over non-dropped eavesdroppers.
    pub fn value_at(&self, lambda: &[f64]) -> f64 {
        self.active()
            .map(|l| self.alpha[l] + self.beta[l].iter().zip(lambda).map(|(b, x)| b * x).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroForcingDesign {
    pub zf_users: Vec<usize>,
    pub weights: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: f64,
}

impl ZeroForcingDesign {
    /// Users that own a noise column, in increasing index order.
    pub fn noise_users(&self, num_users: usize) -> Vec<usize> {
        free_users(num_users, &self.zf_users)
    }
}

fn free_users(num_users: usize, zf_users: &[usize]) -> Vec<usize> {
    (0..num_users).filter(|k| !zf_users.contains(k)).collect()
}

/// Weights `d_k ∝ P − η²/|h_k|²` over `Z`; uniform when no user in `Z`
/// has power left.
pub fn shared_weights(real: &SystemRealization, eta: f64, zf_users: &[usize]) -> Vec<f64> {
    let budgets = residual_budgets(real, eta);
    let total: f64 = zf_users.iter().map(|&k| budgets[k]).sum();
    if total > 0.0 {
        zf_users.iter().map(|&k| budgets[k] / total).collect()
    } else {
        vec![1.0 / zf_users.len() as f64; zf_users.len()]
    }
}

/// Coefficients of the per-eavesdropper objective for a fixed `(Z, d)`.
pub fn compute_alpha_beta(
    real: &SystemRealization,
    eta: f64,
    zf_users: &[usize],
    weights: &[f64],
) -> EavesdropperObjective {
    let k = real.num_users();
    let noise_users = free_users(k, zf_users);
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut dropped = Vec::new();
    for l in 0..real.num_eavesdroppers() {
        let g = real.g.row(l);
        let aligned: Complex64 = g.iter().zip(real.h.iter()).map(|(g, h)| g / h).sum();
        let total: f64 = g.iter().zip(real.h.iter()).map(|(g, h)| (g / h).norm_sqr()).sum();
        let den = aligned.norm_sqr();
        if !(den >= DROP_TOL * total) || den == 0.0 {
            dropped.push(l);
            alpha.push(f64::INFINITY);
            beta.push(vec![0.0; noise_users.len()]);
            continue;
        }
        alpha.push((eta * eta * total + real.eav_noise(l)) / den);
        beta.push(
            noise_users
                .iter()
                .map(|&i| {
                    let leak: Complex64 = zf_users
                        .iter()
                        .zip(weights)
                        .map(|(&j, &d)| g[j] * (real.h[i] / real.h[j]) * d)
                        .sum();
                    (g[i] - leak).norm_sqr() / den
                })
                .collect(),
        );
    }
    EavesdropperObjective {
        alpha,
        beta,
        dropped_eavs: dropped,
        t_star: None,
    }
}

/// Precoder matrix for a zero-forcing design; `hᵀA = 0` by construction.
pub fn assemble_precoder(real: &SystemRealization, design: &ZeroForcingDesign) -> NoisePrecoder {
    let k = real.num_users();
    let noise_users = design.noise_users(k);
    let mut a = ComplexMatrix::zeros(k, noise_users.len());
    for (col, &i) in noise_users.iter().enumerate() {
        let amp = design.lambda[col].max(0.0).sqrt();
        a[(i, col)] = Complex64::new(amp, 0.0);
        for (&j, &d) in design.zf_users.iter().zip(&design.weights) {
            a[(j, col)] = -amp * (real.h[i] / real.h[j]) * d;
        }
    }
    let kind = if design.zf_users.len() == 1 {
        PrecoderKind::Proposed
    } else {
        PrecoderKind::ProposedShared
    };
    NoisePrecoder {
        noise_dim: a.cols(),
        a,
        kind,
        eta: design.eta,
        zf_users: Some(design.zf_users.clone()),
        lambda: Some(design.lambda.clone()),
        zf_weights: Some(design.weights.clone()),
        fallback: false,
    }
}

/// Coefficient of `λ_i` in the power of zero-forcing user `zf_users[j]`.
fn zf_row(real: &SystemRealization, noise_users: &[usize], k: usize, d: f64) -> Vec<f64> {
    noise_users
        .iter()
        .map(|&i| (real.h[i] / real.h[k] * d).norm_sqr())
        .collect()
}

/// Solves the max-min allocation for a fixed `(Z, d)`.
pub fn solve_allocation(
    real: &SystemRealization,
    eta: f64,
    zf_users: &[usize],
    weights: &[f64],
) -> Result<(ZeroForcingDesign, EavesdropperObjective), EncodingError> {
    let k = real.num_users();
    let noise_users = free_users(k, zf_users);
    let n = noise_users.len();
    let budgets = residual_budgets(real, eta);
    let p = real.transmit_power;
    let mut objective = compute_alpha_beta(real, eta, zf_users, weights);
    let active: Vec<usize> = objective.active().collect();
    let flat = active.iter().all(|&l| objective.beta[l].iter().all(|b| *b == 0.0));

    // λ is measured in units of P and t in units of the largest α, so the
    // tableau entries stay near 1 whatever the channel scale.
    let tau = active
        .iter()
        .map(|&l| objective.alpha[l])
        .fold(0.0, f64::max);
    let budget_rows = |lp: &mut LpProblem, offset: usize| {
        let width = offset + n;
        for (col, &i) in noise_users.iter().enumerate() {
            let mut row = vec![0.0; width];
            row[offset + col] = 1.0;
            lp.add_le(row, budgets[i] / p);
        }
        for (&j, &d) in zf_users.iter().zip(weights) {
            let coeffs = zf_row(real, &noise_users, j, d);
            if coeffs.iter().all(|c| *c == 0.0) {
                continue;
            }
            let mut row = vec![0.0; offset];
            row.extend(coeffs);
            lp.add_le(row, budgets[j] / p);
        }
    };

    let mut lambda = if active.is_empty() || flat || !(tau > 0.0) {
        // objective insensitive to λ: spend as much noise power as allowed
        let mut lp = LpProblem::new(vec![1.0; n]);
        budget_rows(&mut lp, 0);
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(EncodingError::Optimizer(format!("power-maximization LP is {:?}", sol.status)));
        }
        sol.x
    } else {
        let mut c = vec![0.0; n + 1];
        c[0] = 1.0;
        let mut lp = LpProblem::new(c);
        lp.set_free(0);
        for &l in &active {
            let mut row = vec![1.0];
            row.extend(objective.beta[l].iter().map(|b| -b * p / tau));
            lp.add_le(row, objective.alpha[l] / tau);
        }
        budget_rows(&mut lp, 1);
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(EncodingError::Optimizer(format!("max-min LP is {:?}", sol.status)));
        }
        sol.x[1..].to_vec()
    };

    for (x, &i) in lambda.iter_mut().zip(&noise_users) {
        *x = (*x * p).clamp(0.0, budgets[i]);
    }
    for (&j, &d) in zf_users.iter().zip(weights) {
        let used: f64 = zf_row(real, &noise_users, j, d).iter().zip(&lambda).map(|(c, x)| c * x).sum();
        if used > budgets[j] {
            let shrink = if used > 0.0 { budgets[j] / used } else { 0.0 };
            lambda.iter_mut().for_each(|x| *x *= shrink);
        }
    }
    if !active.is_empty() {
        objective.t_star = Some(objective.value_at(&lambda));
    }
    let design = ZeroForcingDesign {
        zf_users: zf_users.to_vec(),
        weights: weights.to_vec(),
        lambda,
        eta,
    };
    Ok((design, objective))
}

fn check_eta(real: &SystemRealization, eta: f64) -> Result<(), EncodingError> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(EncodingError::InvalidParameter(format!("eta must be finite and nonnegative, got {eta}")));
    }
    if !real.sigma_z_sq_per_eav.as_ref().map_or(real.sigma_z_sq > 0.0, |v| v.iter().all(|s| *s > 0.0)) {
        return Err(EncodingError::InvalidParameter("eavesdropper noise must be positive".into()));
    }
    Ok(())
}

fn strongest_user(real: &SystemRealization) -> usize {
    let mut best = 0;
    for k in 1..real.num_users() {
        if real.h[k].norm_sqr() > real.h[best].norm_sqr() {
            best = k;
        }
    }
    best
}

/// Zero-forcing with the strongest user alone (`Z = {argmax |h_k|²}`).
pub fn optimize_proposed(real: &SystemRealization, eta: f64) -> Result<NoisePrecoder, EncodingError> {
    check_eta(real, eta)?;
    let (design, _) = solve_allocation(real, eta, &[strongest_user(real)], &[1.0])?;
    Ok(assemble_precoder(real, &design))
}

/// All `n`-subsets of `0..k` in lexicographic order.
fn subsets(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..n).rev().find(|&i| idx[i] != i + k - n) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn best_channels(real: &SystemRealization, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..real.num_users()).collect();
    // stable sort keeps lower indices first among equal gains
    order.sort_by(|&a, &b| real.h[b].norm_sqr().total_cmp(&real.h[a].norm_sqr()));
    let mut chosen = order[..n].to_vec();
    chosen.sort_unstable();
    chosen
}

fn score(real: &SystemRealization, precoder: &NoisePrecoder, ranking: Ranking) -> Result<f64, EncodingError> {
    Ok(match ranking {
        Ranking::NonCooperative => noncoop_security(real, &precoder.a, precoder.eta)?.0,
        Ranking::Cooperative => coop_security(real, &precoder.a, precoder.eta)?.0,
    })
}

/// Zero-forcing shared among `n` users, chosen by exhaustive search or as
/// the `n` strongest channels. Candidates are compared by the selected
/// security level; ties keep the lexicographically smallest set.
pub fn optimize_shared_zf(
    real: &SystemRealization,
    eta: f64,
    n: usize,
    selection: Selection,
    ranking: Ranking,
) -> Result<NoisePrecoder, EncodingError> {
    check_eta(real, eta)?;
    let k = real.num_users();
    if n < 1 || n + 1 > k {
        return Err(EncodingError::InvalidParameter(format!(
            "shared zero-forcing needs 1 <= N <= K-1, got N = {n}, K = {k}"
        )));
    }
    let candidates = match selection {
        Selection::Exhaustive => subsets(k, n),
        Selection::BestChannel => vec![best_channels(real, n)],
    };
    let evaluated: Vec<Result<(NoisePrecoder, f64), EncodingError>> = candidates
        .par_iter()
        .map(|z| {
            let d = shared_weights(real, eta, z);
            let (design, _) = solve_allocation(real, eta, z, &d)?;
            let precoder = assemble_precoder(real, &design);
            let s = score(real, &precoder, ranking)?;
            Ok((precoder, s))
        })
        .collect();
    let mut best: Option<(NoisePrecoder, f64)> = None;
    for item in evaluated {
        let (precoder, s) = item?;
        if best.as_ref().is_none_or(|(_, b)| s > b + RANK_TOL) {
            best = Some((precoder, s));
        }
    }
    let (mut precoder, _) = best.expect("at least one candidate");
    precoder.kind = PrecoderKind::ProposedShared;
    Ok(precoder)
}
