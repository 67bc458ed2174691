//! Power control and artificial-noise precoders.
//!
//! User `k` transmits `x_k = η γ_k / h_k + (A v)_k` and must keep
//! `η²/|h_k|² + ‖a_k‖² ≤ P`, where `a_k` is row `k` of the precoder.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{draw_smallscale, stream_rng, FadingMode, SystemRealization};
use crate::linalg::{ComplexMatrix, LinalgError};
use crate::lp::LpError;
use crate::optimizer::{self, Ranking, Selection};

/// Slack allowed on the per-row power budget, relative to `P`.
pub const POWER_TOL: f64 = 1e-12;

const STREAM_ZF_DRAW: u64 = 16;
const STREAM_RANDOM_DRAW: u64 = 17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("row {row} exceeds its power budget by {excess:e}")]
    PowerBudget { row: usize, excess: f64 },
    #[error("eta = {eta} exceeds the largest feasible value {max}")]
    EtaTooLarge { eta: f64, max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("optimizer failure: {0}")]
    Optimizer(String),
}

/// Amplitude scale together with the parameter that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerControl {
    pub eta: f64,
    pub delta: Option<f64>,
    pub mu: Option<f64>,
}

impl PowerControl {
    pub fn fixed(eta: f64) -> Self {
        Self { eta, delta: None, mu: None }
    }

    pub fn from_delta(real: &SystemRealization, delta: f64) -> Result<Self, EncodingError> {
        Ok(Self {
            eta: eta_from_delta(real, delta)?,
            delta: Some(delta),
            mu: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    None,
    SignalLevel,
    DataLevel,
    RandomZf,
    Proposed,
    ProposedShared,
    Mixture,
}

impl PrecoderKind {
    pub const ALL: [PrecoderKind; 7] = [
        PrecoderKind::None,
        PrecoderKind::SignalLevel,
        PrecoderKind::DataLevel,
        PrecoderKind::RandomZf,
        PrecoderKind::Proposed,
        PrecoderKind::ProposedShared,
        PrecoderKind::Mixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecoderKind::None => "none",
            PrecoderKind::SignalLevel => "signal_level",
            PrecoderKind::DataLevel => "data_level",
            PrecoderKind::RandomZf => "random_zf",
            PrecoderKind::Proposed => "proposed",
            PrecoderKind::ProposedShared => "proposed_shared",
            PrecoderKind::Mixture => "mixture",
        }
    }

    pub fn is_zero_forcing(self) -> bool {
        matches!(self, PrecoderKind::RandomZf | PrecoderKind::Proposed | PrecoderKind::ProposedShared)
    }
}

impl std::str::FromStr for PrecoderKind {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrecoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EncodingError::InvalidParameter(format!("unknown precoder kind '{s}'")))
    }
}

/// Extra knobs for the families that need them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecoderParams {
    /// Interpolation weight toward the unconstrained draw (mixture only).
    pub theta: f64,
    /// Number of users sharing the zero-forcing burden (proposed_shared).
    pub shared_users: usize,
    pub selection: Selection,
    pub ranking: Ranking,
}

impl Default for PrecoderParams {
    fn default() -> Self {
        Self {
            theta: 0.0,
            shared_users: 2,
            selection: Selection::Exhaustive,
            ranking: Ranking::NonCooperative,
        }
    }
}

/// A noise precoding matrix and how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePrecoder {
    #[serde(rename = "A")]
    pub a: ComplexMatrix,
    pub noise_dim: usize,
    pub kind: PrecoderKind,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zf_users: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zf_weights: Option<Vec<f64>>,
    /// Set when the requested family had no power left and `A = 0` was
    /// returned in its place.
    #[serde(default)]
    pub fallback: bool,
}

impl NoisePrecoder {
    pub fn none(num_users: usize, eta: f64) -> Self {
        Self::plain(ComplexMatrix::zeros(num_users, 1), PrecoderKind::None, eta)
    }

    pub(crate) fn plain(a: ComplexMatrix, kind: PrecoderKind, eta: f64) -> Self {
        Self {
            noise_dim: a.cols(),
            a,
            kind,
            eta,
            zf_users: None,
            lambda: None,
            zf_weights: None,
            fallback: false,
        }
    }

    fn fall_back(num_users: usize, eta: f64) -> Self {
        log::debug!("no residual power for artificial noise at eta = {eta:e}; using A = 0");
        Self {
            fallback: true,
            ..Self::none(num_users, eta)
        }
    }

    /// Largest excess of a row's noise power over its budget (negative when
    /// every row has slack).
    pub fn max_budget_excess(&self, real: &SystemRealization) -> f64 {
        (0..self.a.rows())
            .map(|k| self.a.row_norm_sqr(k) - real.residual_power(k, self.eta))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `‖hᵀA‖₂`.
    pub fn leakage(&self, real: &SystemRealization) -> f64 {
        crate::linalg::norm(&self.a.left_mul_vec(&real.h).expect("precoder rows match h"))
    }
}

fn check_rows(real: &SystemRealization, a: &ComplexMatrix) -> Result<(), EncodingError> {
    if a.rows() != real.num_users() {
        return Err(EncodingError::Shape(format!(
            "precoder has {} rows, expected {}",
            a.rows(),
            real.num_users()
        )));
    }
    Ok(())
}

/// Largest `η` with `η²/|h_k|² + ‖a_k‖² ≤ P` for every user.
pub fn eta_upper_bound(real: &SystemRealization, a: &ComplexMatrix) -> Result<f64, EncodingError> {
    check_rows(real, a)?;
    let p = real.transmit_power;
    let mut best = f64::INFINITY;
    for k in 0..a.rows() {
        let residual = p - a.row_norm_sqr(k);
        if residual < -POWER_TOL * p {
            return Err(EncodingError::PowerBudget { row: k, excess: -residual });
        }
        best = best.min(real.h[k].norm_sqr() * residual.max(0.0));
    }
    Ok(best.sqrt())
}

/// Interval of `η` values that meet approximation error `μ` and the power
/// limit; `lower > upper` means no feasible `η`.
pub fn eta_bounds_given_mu(
    real: &SystemRealization,
    a: &ComplexMatrix,
    mu: f64,
) -> Result<(f64, f64), EncodingError> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(EncodingError::InvalidParameter(format!("mu must lie in (0, 1], got {mu}")));
    }
    let upper = eta_upper_bound(real, a)?;
    let leak = crate::linalg::norm_sqr(&a.left_mul_vec(&real.h)?);
    let k = real.num_users() as f64;
    let lower = ((1.0 - mu) * (leak + real.sigma_y_sq) / (mu * k)).sqrt();
    Ok((lower, upper))
}

/// `δ · √(min_k P|h_k|²)`.
pub fn eta_from_delta(real: &SystemRealization, delta: f64) -> Result<f64, EncodingError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(EncodingError::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")));
    }
    Ok(delta * max_eta(real))
}

fn max_eta(real: &SystemRealization) -> f64 {
    let min_gain = real.h.iter().map(|h| h.norm_sqr()).fold(f64::INFINITY, f64::min);
    (real.transmit_power * min_gain).sqrt()
}

/// Per-user noise budgets `P − η²/|h_k|²`, clamped at zero.
pub fn residual_budgets(real: &SystemRealization, eta: f64) -> Vec<f64> {
    (0..real.num_users()).map(|k| real.residual_power(k, eta).max(0.0)).collect()
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| draw_smallscale(rng, FadingMode::Complex))
}

/// Removes from every column its component along `h*`, so that `hᵀA = 0`.
fn project_out(a: &mut ComplexMatrix, h: &[Complex64]) {
    let hh: f64 = h.iter().map(|v| v.norm_sqr()).sum();
    // two passes: the second mops up the rounding left by the first
    for _ in 0..2 {
        for j in 0..a.cols() {
            let c: Complex64 = (0..a.rows()).map(|k| h[k] * a[(k, j)]).sum::<Complex64>() / hh;
            for k in 0..a.rows() {
                a[(k, j)] -= h[k].conj() * c;
            }
        }
    }
}

/// Largest `c ≥ 0` with `c²‖a_k‖² ≤ budget_k` for every row.
fn feasible_scale(a: &ComplexMatrix, budgets: &[f64]) -> f64 {
    let mut c = f64::INFINITY;
    for (k, b) in budgets.iter().enumerate() {
        let r = a.row_norm_sqr(k);
        if r > 0.0 {
            c = c.min((b / r).sqrt());
        }
    }
    if c.is_finite() {
        c
    } else {
        0.0
    }
}

fn zf_draw(real: &SystemRealization, seed: u64) -> ComplexMatrix {
    let k = real.num_users();
    let mut rng = stream_rng(seed, STREAM_ZF_DRAW);
    let mut a = gaussian_matrix(&mut rng, k, k - 1);
    project_out(&mut a, &real.h);
    a
}

fn unit_frobenius(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.frobenius_norm();
    if n > 0.0 {
        a.scale(1.0 / n)
    } else {
        a.clone()
    }
}

/// Builds a precoder of the given family for amplitude `eta`.
pub fn build_precoder(
    kind: PrecoderKind,
    real: &SystemRealization,
    eta: f64,
    seed: u64,
    params: &PrecoderParams,
) -> Result<NoisePrecoder, EncodingError> {
    let k = real.num_users();
    if k < 2 && !matches!(kind, PrecoderKind::None | PrecoderKind::SignalLevel) {
        return Err(EncodingError::InvalidParameter(format!("{} needs at least 2 users", kind.name())));
    }
    let max = max_eta(real);
    if !(eta >= 0.0 && eta.is_finite()) || eta > max * (1.0 + 1e-12) {
        return Err(EncodingError::EtaTooLarge { eta, max });
    }
    let budgets = residual_budgets(real, eta);

    let precoder = match kind {
        PrecoderKind::None => NoisePrecoder::none(k, eta),
        PrecoderKind::SignalLevel => {
            if budgets.iter().all(|b| *b <= 0.0) {
                NoisePrecoder::fall_back(k, eta)
            } else {
                let diag: Vec<Complex64> = budgets.iter().map(|b| Complex64::new(b.sqrt(), 0.0)).collect();
                NoisePrecoder::plain(ComplexMatrix::from_diagonal(&diag), kind, eta)
            }
        }
        PrecoderKind::DataLevel => {
            // η·σ_w with σ_w² = min_k (P|h_k|²/η² − 1), written so η = 0 is fine
            let eta_sigma_sq = max * max - eta * eta;
            if eta_sigma_sq <= 0.0 {
                NoisePrecoder::fall_back(k, eta)
            } else {
                let s = eta_sigma_sq.sqrt();
                let diag: Vec<Complex64> = real.h.iter().map(|h| s / h).collect();
                NoisePrecoder::plain(ComplexMatrix::from_diagonal(&diag), kind, eta)
            }
        }
        PrecoderKind::RandomZf => {
            let a = zf_draw(real, seed);
            let c = feasible_scale(&a, &budgets);
            NoisePrecoder::plain(a.scale(c), kind, eta)
        }
        PrecoderKind::Mixture => {
            let theta = params.theta;
            if !(0.0..=1.0).contains(&theta) {
                return Err(EncodingError::InvalidParameter(format!("theta must lie in [0, 1], got {theta}")));
            }
            let zf = unit_frobenius(&zf_draw(real, seed));
            let mut rng = stream_rng(seed, STREAM_RANDOM_DRAW);
            let free = unit_frobenius(&gaussian_matrix(&mut rng, k, k - 1));
            let mixed = zf.scale(1.0 - theta).add(&free.scale(theta))?;
            let c = feasible_scale(&mixed, &budgets);
            NoisePrecoder::plain(mixed.scale(c), kind, eta)
        }
        PrecoderKind::Proposed => optimizer::optimize_proposed(real, eta)?,
        PrecoderKind::ProposedShared => {
            optimizer::optimize_shared_zf(real, eta, params.shared_users, params.selection, params.ranking)?
        }
    };

    let excess = precoder.max_budget_excess(real);
    if excess > POWER_TOL * real.transmit_power {
        return Err(EncodingError::PowerBudget {
            row: (0..k)
                .max_by(|&i, &j| {
                    let e = |r: usize| precoder.a.row_norm_sqr(r) - real.residual_power(r, eta);
                    e(i).total_cmp(&e(j))
                })
                .unwrap_or(0),
            excess,
        });
    }
    Ok(precoder)
}

/// Transmit vector `x_k = η γ_k / h_k + (A v)_k`.
pub fn transmit(
    real: &SystemRealization,
    precoder: &NoisePrecoder,
    eta: f64,
    gamma: &[Complex64],
    v: &[Complex64],
) -> Result<Vec<Complex64>, EncodingError> {
    if gamma.len() != real.num_users() || v.len() != precoder.noise_dim {
        return Err(EncodingError::Shape(format!(
            "gamma has {} entries (K = {}), v has {} (noise_dim = {})",
            gamma.len(),
            real.num_users(),
            v.len(),
            precoder.noise_dim
        )));
    }
    let w = precoder.a.mul_vec(v)?;
    Ok(gamma
        .iter()
        .zip(real.h.iter())
        .zip(w)
        .map(|((g, h), w)| eta * g / h + w)
        .collect())
}
