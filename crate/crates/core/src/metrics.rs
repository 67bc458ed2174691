//! Accuracy and security of the aggregate `s = Σ_k γ_k`.
//!
//! `D` is the normalized MMSE of the server's estimate from `y = hᵀx + n_y`;
//! `S` is the normalized MMSE an eavesdropper (or a coalition of them) can
//! reach from `z = Gx + n_z`. Both lie in `[0, 1]`, with 1 meaning the
//! observation is useless. The Monte Carlo oracles at the bottom re-derive
//! the same numbers from simulated transmissions.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_smallscale, sample_realization, stream_rng, FadingMode, ScenarioConfig, SystemRealization};
use crate::encoding::{build_precoder, eta_from_delta, PrecoderKind, PrecoderParams};
use crate::linalg::{dot_conj, gram_outer, hermitian_solve, matmul, norm_sqr, ComplexMatrix, LinalgError};
use crate::{Error, Result};

/// Minimum sample count accepted by the Monte Carlo oracles.
pub const MIN_ORACLE_SAMPLES: usize = 10_000;

const ORACLE_BLOCK: usize = 8192;
const ORACLE_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "S_coop")]
    pub s_coop: f64,
    #[serde(rename = "S_noncoop")]
    pub s_noncoop: f64,
    pub p_opt: Vec<Complex64>,
    pub per_eav_security: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    #[serde(rename = "D_hat")]
    pub d_hat: f64,
    #[serde(rename = "S_hat")]
    pub s_hat: f64,
    pub num_samples: usize,
    #[serde(rename = "std_err_D")]
    pub std_err_d: f64,
    #[serde(rename = "std_err_S")]
    pub std_err_s: f64,
}

/// Deliberate defects used to prove that the self-test catches them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negate the first entry of the eavesdropper mean vector.
    FlipMeanSign,
}

fn check_shape(real: &SystemRealization, a: &ComplexMatrix) -> Result<(), LinalgError> {
    if a.rows() != real.num_users() {
        return Err(LinalgError::Shape {
            op: "precoder",
            lhs: (real.num_users(), 1),
            rhs: a.shape(),
        });
    }
    Ok(())
}

fn eav_noise_diag(real: &SystemRealization) -> Vec<f64> {
    (0..real.num_eavesdroppers()).map(|l| real.eav_noise(l)).collect()
}

/// Normalized MSE of the single-receiver estimate
/// `1 − (η²/K)|Σc_k|² / (η²Σ|c_k|² + leak + noise)`, where `c_k` is the
/// receiver's channel divided by `h_k`. Written as a ratio of nonnegative
/// terms so that values near 0 keep their precision.
fn single_receiver_mse(eta: f64, ratios: &[Complex64], leak: f64, noise: f64) -> f64 {
    let k = ratios.len() as f64;
    let mean: Complex64 = ratios.iter().sum::<Complex64>() / k;
    let spread: f64 = ratios.iter().map(|c| (c - mean).norm_sqr()).sum();
    let total: f64 = ratios.iter().map(|c| c.norm_sqr()).sum();
    let den = eta * eta * total + leak + noise;
    if den > 0.0 {
        ((eta * eta * spread + leak + noise) / den).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Server-side approximation error `D`.
pub fn approximation_error(real: &SystemRealization, a: &ComplexMatrix, eta: f64) -> Result<f64, LinalgError> {
    check_shape(real, a)?;
    let k = real.num_users() as f64;
    let leak = norm_sqr(&a.left_mul_vec(&real.h)?);
    let den = eta * eta * k + leak + real.sigma_y_sq;
    Ok(if den > 0.0 { (leak + real.sigma_y_sq) / den } else { 1.0 })
}

/// Cooperative security and the optimal combiner `B⁻¹m`.
pub fn coop_security(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
) -> Result<(f64, Vec<Complex64>), LinalgError> {
    coop_security_with_fault(real, a, eta, Fault::None)
}

#[doc(hidden)]
pub fn coop_security_with_fault(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
    fault: Fault,
) -> Result<(f64, Vec<Complex64>), LinalgError> {
    check_shape(real, a)?;
    let (b, mut m) = covariance_and_mean(real, a, eta)?;
    if fault == Fault::FlipMeanSign {
        m[0] = -m[0];
    }
    let p = hermitian_solve(&b, &m)?;
    let q = dot_conj(&m, &p).re;
    let s = (1.0 - q / real.num_users() as f64).clamp(0.0, 1.0);
    Ok((s, p))
}

/// Eavesdropper covariance `B` and mean vector `m` of `z` given the data.
fn covariance_and_mean(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
) -> Result<(ComplexMatrix, Vec<Complex64>), LinalgError> {
    let g = &real.g;
    let (l, k) = g.shape();
    let ga = matmul(g, a)?;
    let scaled = ComplexMatrix::from_fn(l, k, |i, j| g[(i, j)] * eta / real.h[j]);
    let mut b = gram_outer(&ga).add(&gram_outer(&scaled))?;
    for (i, s) in eav_noise_diag(real).into_iter().enumerate() {
        b[(i, i)] += s;
    }
    let m = (0..l).map(|i| scaled.row(i).iter().sum()).collect();
    Ok((b, m))
}

/// Security against each eavesdropper on its own; returns the minimum and
/// the per-eavesdropper values.
pub fn noncoop_security(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
) -> Result<(f64, Vec<f64>), LinalgError> {
    check_shape(real, a)?;
    let ga = matmul(&real.g, a)?;
    let per: Vec<f64> = (0..real.num_eavesdroppers())
        .map(|l| {
            let ratios: Vec<Complex64> = real.g.row(l).iter().zip(real.h.iter()).map(|(g, h)| g / h).collect();
            single_receiver_mse(eta, &ratios, norm_sqr(ga.row(l)), real.eav_noise(l))
        })
        .collect();
    let min = per.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min, per))
}

/// Security of the virtual eavesdropper that combines observations with `p`.
pub fn effective_channel_security(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
    p: &[Complex64],
) -> Result<f64, LinalgError> {
    check_shape(real, a)?;
    if p.len() != real.num_eavesdroppers() {
        return Err(LinalgError::Shape {
            op: "combiner",
            lhs: real.g.shape(),
            rhs: (p.len(), 1),
        });
    }
    let conj: Vec<Complex64> = p.iter().map(|v| v.conj()).collect();
    let g_eff = real.g.left_mul_vec(&conj)?;
    let ratios: Vec<Complex64> = g_eff.iter().zip(real.h.iter()).map(|(g, h)| g / h).collect();
    let leak = norm_sqr(&a.left_mul_vec(&g_eff)?);
    let noise: f64 = p.iter().enumerate().map(|(l, v)| real.eav_noise(l) * v.norm_sqr()).sum();
    Ok(single_receiver_mse(eta, &ratios, leak, noise))
}

/// All closed-form metrics for one precoder.
pub fn security_report(real: &SystemRealization, a: &ComplexMatrix, eta: f64) -> Result<SecurityReport, LinalgError> {
    let d = approximation_error(real, a, eta)?;
    let (s_coop, p_opt) = coop_security(real, a, eta)?;
    let (s_noncoop, per_eav_security) = noncoop_security(real, a, eta)?;
    Ok(SecurityReport {
        d,
        s_coop,
        s_noncoop,
        p_opt,
        per_eav_security,
    })
}

fn cn_vec(rng: &mut impl rand::Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| draw_smallscale(rng, FadingMode::Complex)).collect()
}

struct Draw {
    s: Complex64,
    y: Complex64,
    z: Vec<Complex64>,
}

/// Simulates one block of transmissions from its own stream.
fn simulate_block(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
    seed: u64,
    block: usize,
    len: usize,
) -> Vec<Draw> {
    let k = real.num_users();
    let l = real.num_eavesdroppers();
    let sy = real.sigma_y_sq.sqrt();
    let sz: Vec<f64> = eav_noise_diag(real).iter().map(|s| s.sqrt()).collect();
    let mut rng = stream_rng(seed, ORACLE_STREAM_BASE + block as u64);
    (0..len)
        .map(|_| {
            let gamma = cn_vec(&mut rng, k);
            let v = cn_vec(&mut rng, a.cols());
            let w = a.mul_vec(&v).expect("shape checked");
            let x: Vec<Complex64> = (0..k).map(|i| eta * gamma[i] / real.h[i] + w[i]).collect();
            let y = (0..k).map(|i| real.h[i] * x[i]).sum::<Complex64>() + sy * draw_smallscale(&mut rng, FadingMode::Complex);
            let z = (0..l)
                .map(|r| {
                    let g = real.g.row(r);
                    (0..k).map(|i| g[i] * x[i]).sum::<Complex64>() + sz[r] * draw_smallscale(&mut rng, FadingMode::Complex)
                })
                .collect();
            Draw {
                s: gamma.iter().sum(),
                y,
                z,
            }
        })
        .collect()
}

#[derive(Clone)]
struct Moments {
    n: usize,
    yy: f64,
    sy: Complex64,
    zz: ComplexMatrix,
    zs: Vec<Complex64>,
}

impl Moments {
    fn zero(l: usize) -> Self {
        Self {
            n: 0,
            yy: 0.0,
            sy: Complex64::new(0.0, 0.0),
            zz: ComplexMatrix::zeros(l, l),
            zs: vec![Complex64::new(0.0, 0.0); l],
        }
    }

    fn absorb(&mut self, d: &Draw) {
        self.n += 1;
        self.yy += d.y.norm_sqr();
        self.sy += d.s * d.y.conj();
        let l = d.z.len();
        for i in 0..l {
            self.zs[i] += d.z[i] * d.s.conj();
            for j in i..l {
                self.zz[(i, j)] += d.z[i] * d.z[j].conj();
            }
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        self.n += other.n;
        self.yy += other.yy;
        self.sy += other.sy;
        self.zz = self.zz.add(&other.zz).expect("same shape");
        for (a, b) in self.zs.iter_mut().zip(&other.zs) {
            *a += b;
        }
        self
    }

    fn covariance(&self) -> ComplexMatrix {
        let l = self.zs.len();
        let n = self.n as f64;
        ComplexMatrix::from_fn(l, l, |i, j| {
            if i <= j {
                self.zz[(i, j)] / n
            } else {
                self.zz[(j, i)].conj() / n
            }
        })
    }
}

#[derive(Clone, Copy, Default)]
struct ErrorSums {
    n: usize,
    sum_d: f64,
    sq_d: f64,
    sum_s: f64,
    sq_s: f64,
}

impl ErrorSums {
    fn merge(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            sum_d: self.sum_d + o.sum_d,
            sq_d: self.sq_d + o.sq_d,
            sum_s: self.sum_s + o.sum_s,
            sq_s: self.sq_s + o.sq_s,
        }
    }
}

fn mean_and_se(sum: f64, sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

fn block_lengths(num_samples: usize) -> Vec<usize> {
    let blocks = num_samples.div_ceil(ORACLE_BLOCK);
    (0..blocks)
        .map(|b| ORACLE_BLOCK.min(num_samples - b * ORACLE_BLOCK))
        .collect()
}

/// Monte Carlo estimate of `D` and `S_coop`.
///
/// Even-indexed blocks of draws fit the linear MMSE estimators from sample
/// second moments; odd-indexed blocks measure their normalized squared
/// error. Blocks use their own RNG streams and are summed in index order,
/// so the result does not depend on the thread count.
pub fn mc_oracle(
    real: &SystemRealization,
    a: &ComplexMatrix,
    eta: f64,
    num_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    if num_samples < MIN_ORACLE_SAMPLES {
        return Err(Error::Config(format!(
            "mc_oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {num_samples}"
        )));
    }
    check_shape(real, a)?;
    let k = real.num_users() as f64;
    let l = real.num_eavesdroppers();
    let lengths = block_lengths(num_samples);

    let fit_parts: Vec<Moments> = lengths
        .par_iter()
        .enumerate()
        .filter(|(b, _)| b % 2 == 0)
        .map(|(b, &len)| {
            let mut m = Moments::zero(l);
            for d in simulate_block(real, a, eta, seed, b, len) {
                m.absorb(&d);
            }
            m
        })
        .collect();
    let fit = fit_parts.iter().fold(Moments::zero(l), |acc, m| acc.merge(m));
    let nf = fit.n as f64;
    let c_y = if fit.yy > 0.0 { fit.sy / fit.yy } else { Complex64::new(0.0, 0.0) };
    // ŝ = wᴴz with R_zz w = E[z s*]
    let r_zs: Vec<Complex64> = fit.zs.iter().map(|v| v / nf).collect();
    let w = hermitian_solve(&fit.covariance(), &r_zs)?;

    let err_parts: Vec<ErrorSums> = lengths
        .par_iter()
        .enumerate()
        .filter(|(b, _)| b % 2 == 1)
        .map(|(b, &len)| {
            let mut e = ErrorSums::default();
            for d in simulate_block(real, a, eta, seed, b, len) {
                let ed = (d.s - c_y * d.y).norm_sqr() / k;
                let es = (d.s - dot_conj(&w, &d.z)).norm_sqr() / k;
                e.n += 1;
                e.sum_d += ed;
                e.sq_d += ed * ed;
                e.sum_s += es;
                e.sq_s += es * es;
            }
            e
        })
        .collect();
    let held = err_parts.into_iter().fold(ErrorSums::default(), ErrorSums::merge);
    let (d_hat, std_err_d) = mean_and_se(held.sum_d, held.sq_d, held.n);
    let (s_hat, std_err_s) = mean_and_se(held.sum_s, held.sq_s, held.n);
    Ok(OracleReport {
        d_hat,
        s_hat,
        num_samples,
        std_err_d,
        std_err_s,
    })
}

/// How the eavesdropper channels behave across the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// Fixed magnitudes, fresh uniform phases on every draw.
    UniformPhase,
    /// The same channel on every draw.
    FixedChannel,
    /// Eavesdroppers hear receiver noise only.
    NoiseOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiCheckReport {
    pub num_realizations: usize,
    /// Sample mean of `z_ℓ s*` per eavesdropper.
    pub crosscov: Vec<Complex64>,
    /// Standard error of each entry of `crosscov`.
    pub std_err: Vec<f64>,
    pub max_abs_crosscov: f64,
    /// `η G D_h⁻¹ 1` for the base channel.
    pub mean_vector: Vec<Complex64>,
}

impl CsiCheckReport {
    /// Largest `|crosscov_ℓ − target_ℓ| / std_err_ℓ`.
    pub fn max_z_score(&self, target: Option<&[Complex64]>) -> f64 {
        self.crosscov
            .iter()
            .zip(&self.std_err)
            .enumerate()
            .map(|(l, (c, se))| {
                let t = target.map_or(Complex64::new(0.0, 0.0), |t| t[l]);
                (c - t).norm() / se
            })
            .fold(0.0, f64::max)
    }
}

/// Ensemble cross-covariance between `s` and the eavesdropper observations
/// when eavesdropper channel phases are unknown and uniform.
pub fn statistical_csi_check(config: &ScenarioConfig, num_realizations: usize, seed: u64) -> Result<CsiCheckReport> {
    statistical_csi_check_with(config, num_realizations, seed, CsiMode::UniformPhase)
}

/// [`statistical_csi_check`] with a selectable channel ensemble. The
/// legitimate channel, the eavesdropper channel magnitudes, and a random
/// zero-forcing precoder at `δ = 0.8` come from the realization at `seed`.
pub fn statistical_csi_check_with(
    config: &ScenarioConfig,
    num_realizations: usize,
    seed: u64,
    mode: CsiMode,
) -> Result<CsiCheckReport> {
    if config.fading_mode != FadingMode::Complex {
        return Err(Error::Config("statistical_csi_check needs complex fading".into()));
    }
    if num_realizations < 2 {
        return Err(Error::Config("statistical_csi_check needs at least 2 draws".into()));
    }
    let base = sample_realization(config, seed)?;
    let eta = eta_from_delta(&base, 0.8)?;
    let precoder = build_precoder(PrecoderKind::RandomZf, &base, eta, seed, &PrecoderParams::default())?;
    let a = &precoder.a;
    let (k, l) = (base.num_users(), base.num_eavesdroppers());
    let magnitudes: Vec<f64> = base.g.as_slice().iter().map(|v| v.norm()).collect();
    let sz: Vec<f64> = eav_noise_diag(&base).iter().map(|s| s.sqrt()).collect();
    let mean_vector: Vec<Complex64> = (0..l)
        .map(|r| (0..k).map(|i| eta * base.g[(r, i)] / base.h[i]).sum())
        .collect();

    let lengths = block_lengths(num_realizations);
    let parts: Vec<(Vec<Complex64>, Vec<f64>)> = lengths
        .par_iter()
        .enumerate()
        .map(|(b, &len)| {
            let mut rng = stream_rng(seed, ORACLE_STREAM_BASE + b as u64);
            let mut sum = vec![Complex64::new(0.0, 0.0); l];
            let mut sq = vec![0.0; l];
            for _ in 0..len {
                let g = match mode {
                    CsiMode::UniformPhase => ComplexMatrix::from_fn(l, k, |r, i| {
                        let phi = std::f64::consts::TAU * rand::Rng::random::<f64>(&mut rng);
                        Complex64::from_polar(magnitudes[r * k + i], phi)
                    }),
                    CsiMode::FixedChannel | CsiMode::NoiseOnly => base.g.clone(),
                };
                let gamma = cn_vec(&mut rng, k);
                let v = cn_vec(&mut rng, a.cols());
                let w = a.mul_vec(&v).expect("shape checked");
                let x: Vec<Complex64> = (0..k).map(|i| eta * gamma[i] / base.h[i] + w[i]).collect();
                let s: Complex64 = gamma.iter().sum();
                for r in 0..l {
                    let noise = sz[r] * draw_smallscale(&mut rng, FadingMode::Complex);
                    let z = match mode {
                        CsiMode::NoiseOnly => noise,
                        _ => g.row(r).iter().zip(&x).map(|(g, x)| g * x).sum::<Complex64>() + noise,
                    };
                    let c = z * s.conj();
                    sum[r] += c;
                    sq[r] += c.norm_sqr();
                }
            }
            (sum, sq)
        })
        .collect();

    let mut sum = vec![Complex64::new(0.0, 0.0); l];
    let mut sq = vec![0.0; l];
    for (ps, pq) in &parts {
        for r in 0..l {
            sum[r] += ps[r];
            sq[r] += pq[r];
        }
    }
    let n = num_realizations as f64;
    let crosscov: Vec<Complex64> = sum.iter().map(|v| v / n).collect();
    let std_err: Vec<f64> = (0..l)
        .map(|r| {
            let var = (sq[r] / n - crosscov[r].norm_sqr()) * n / (n - 1.0);
            (var.max(0.0) / n).sqrt()
        })
        .collect();
    let max_abs_crosscov = crosscov.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(CsiCheckReport {
        num_realizations,
        crosscov,
        std_err,
        max_abs_crosscov,
        mean_vector,
    })
}
