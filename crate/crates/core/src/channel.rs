//! Random topologies and channel coefficients.
//!
//! Users and eavesdroppers are dropped uniformly in a disk around a server at
//! the origin, subject to a minimum pairwise separation. Every link gets a
//! coefficient `d^(-e/2) · ξ` with `ξ` standard complex (or real) Gaussian;
//! the small-scale factors of the legitimate channels are redrawn until they
//! clear a magnitude floor.
//!
//! All draws come from ChaCha8 streams keyed by `(seed, stream)`, one stream
//! per quantity, so appending eavesdroppers leaves users, legitimate
//! channels, and the earlier eavesdropper rows untouched.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{ComplexMatrix, ComplexVector};

/// Upper bound on rejection-sampling draws for one realization.
pub const MAX_REJECTIONS: usize = 1_000_000;

const STREAM_USER_POSITIONS: u64 = 0;
const STREAM_USER_FADING: u64 = 1;
const STREAM_EAV_POSITIONS: u64 = 2;
const STREAM_EAV_FADING: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("rejection sampling exceeded {0} attempts; geometry is infeasible")]
    RejectionLimit(usize),
    #[error("invalid realization: {0}")]
    InvalidRealization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    Complex,
    Real,
}

fn default_radius() -> f64 {
    100.0
}
fn default_separation() -> f64 {
    1.0
}
fn default_exponent() -> f64 {
    4.0
}
fn default_floor() -> f64 {
    0.1
}
fn default_fading() -> FadingMode {
    FadingMode::Complex
}
fn default_snr() -> f64 {
    10.0
}
fn default_power() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_eavesdroppers: usize,
    #[serde(default = "default_radius")]
    pub disk_radius: f64,
    #[serde(default = "default_separation")]
    pub min_separation: f64,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_fading")]
    pub fading_mode: FadingMode,
    #[serde(default = "default_floor")]
    pub min_smallscale_magnitude: f64,
    #[serde(default)]
    pub collocated_eavesdroppers: bool,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_power")]
    pub transmit_power: f64,
}

impl Default for ScenarioConfig {
    /// K = 10 users, L = 5 eavesdroppers, 10 dB.
    fn default() -> Self {
        Self {
            num_users: 10,
            num_eavesdroppers: 5,
            disk_radius: default_radius(),
            min_separation: default_separation(),
            pathloss_exponent: default_exponent(),
            fading_mode: default_fading(),
            min_smallscale_magnitude: default_floor(),
            collocated_eavesdroppers: false,
            snr_db: default_snr(),
            transmit_power: default_power(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: String| Err(ChannelError::InvalidConfig(msg));
        if self.num_users < 2 {
            return bad(format!("num_users must be at least 2, got {}", self.num_users));
        }
        if self.num_eavesdroppers < 1 {
            return bad("num_eavesdroppers must be at least 1".into());
        }
        if !(self.min_separation > 0.0 && self.disk_radius > self.min_separation && self.disk_radius.is_finite()) {
            return bad(format!(
                "need disk_radius > min_separation > 0, got {} and {}",
                self.disk_radius, self.min_separation
            ));
        }
        if !(self.pathloss_exponent > 0.0 && self.pathloss_exponent.is_finite()) {
            return bad(format!("pathloss_exponent must be positive, got {}", self.pathloss_exponent));
        }
        if !(0.0..1.0).contains(&self.min_smallscale_magnitude) {
            return bad(format!(
                "min_smallscale_magnitude must lie in [0, 1), got {}",
                self.min_smallscale_magnitude
            ));
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if !(self.transmit_power > 0.0 && self.transmit_power.is_finite()) {
            return bad(format!("transmit_power must be positive, got {}", self.transmit_power));
        }
        Ok(())
    }

    /// Same scenario at another SNR, with the transmit power moved along so
    /// that the receiver noise stays at `disk_radius^(-e)` watts.
    pub fn at_snr(&self, snr_db: f64) -> Self {
        Self {
            snr_db,
            transmit_power: 10f64.powf(snr_db / 10.0),
            ..self.clone()
        }
    }
}

/// Receiver noise powers `(σ_y², σ_z²)` such that `P·E|h|²/σ²` equals the
/// configured SNR on a link of length `disk_radius`.
pub fn calibrate_noise(config: &ScenarioConfig) -> (f64, f64) {
    let sigma = config.transmit_power * config.disk_radius.powf(-config.pathloss_exponent)
        / 10f64.powf(config.snr_db / 10.0);
    (sigma, sigma)
}

/// One sampled topology with its channels and noise powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRealization {
    #[serde(default)]
    pub user_positions: Vec<[f64; 2]>,
    #[serde(default)]
    pub eav_positions: Vec<[f64; 2]>,
    pub h: ComplexVector,
    #[serde(rename = "G")]
    pub g: ComplexMatrix,
    #[serde(rename = "P")]
    pub transmit_power: f64,
    pub sigma_y_sq: f64,
    pub sigma_z_sq: f64,
    /// Per-eavesdropper noise powers; `sigma_z_sq` applies when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_z_sq_per_eav: Option<Vec<f64>>,
}

impl SystemRealization {
    /// Realization from explicit channel state (no geometry attached).
    pub fn from_channels(
        h: Vec<Complex64>,
        g: ComplexMatrix,
        transmit_power: f64,
        sigma_y_sq: f64,
        sigma_z_sq: f64,
    ) -> Result<Self, ChannelError> {
        let real = Self {
            user_positions: Vec::new(),
            eav_positions: Vec::new(),
            h: ComplexVector(h),
            g,
            transmit_power,
            sigma_y_sq,
            sigma_z_sq,
            sigma_z_sq_per_eav: None,
        };
        real.validate()?;
        Ok(real)
    }

    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn num_eavesdroppers(&self) -> usize {
        self.g.rows()
    }

    pub fn eav_noise(&self, l: usize) -> f64 {
        match &self.sigma_z_sq_per_eav {
            Some(v) => v[l],
            None => self.sigma_z_sq,
        }
    }

    /// Power left for artificial noise at user `k`: `P − η²/|h_k|²`.
    pub fn residual_power(&self, k: usize, eta: f64) -> f64 {
        self.transmit_power - eta * eta / self.h[k].norm_sqr()
    }

    /// Copy restricted to the first `l` eavesdroppers.
    pub fn with_eavesdroppers(&self, l: usize) -> Self {
        assert!(l >= 1 && l <= self.num_eavesdroppers());
        let rows: Vec<Vec<Complex64>> = (0..l).map(|i| self.g.row(i).to_vec()).collect();
        Self {
            eav_positions: self.eav_positions.iter().take(l).copied().collect(),
            g: ComplexMatrix::from_rows(&rows),
            sigma_z_sq_per_eav: self.sigma_z_sq_per_eav.as_ref().map(|v| v[..l].to_vec()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: String| Err(ChannelError::InvalidRealization(msg));
        let k = self.num_users();
        if k == 0 {
            return bad("h is empty".into());
        }
        if self.g.cols() != k {
            return bad(format!("G has {} columns but h has {k} entries", self.g.cols()));
        }
        if self.h.iter().any(|v| !(v.norm_sqr() > 0.0) || !v.re.is_finite() || !v.im.is_finite()) {
            return bad("legitimate channel coefficients must be finite and nonzero".into());
        }
        if self.g.as_slice().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return bad("eavesdropper channels must be finite".into());
        }
        if !(self.transmit_power > 0.0 && self.transmit_power.is_finite()) {
            return bad("P must be positive".into());
        }
        if !(self.sigma_y_sq >= 0.0 && self.sigma_z_sq >= 0.0) {
            return bad("noise variances must be nonnegative".into());
        }
        if let Some(v) = &self.sigma_z_sq_per_eav {
            if v.len() != self.num_eavesdroppers() || v.iter().any(|s| !(*s >= 0.0)) {
                return bad("sigma_z_sq_per_eav must have one nonnegative entry per eavesdropper".into());
            }
        }
        Ok(())
    }
}

/// RNG for one named quantity of one realization.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard small-scale fading factor: `CN(0, 1)` or `N(0, 1)`.
pub fn draw_smallscale(rng: &mut impl Rng, mode: FadingMode) -> Complex64 {
    match mode {
        FadingMode::Complex => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
        FadingMode::Real => Complex64::new(rng.sample(StandardNormal), 0.0),
    }
}

/// One link coefficient `d^(-e/2) · ξ`.
pub fn draw_coefficient(rng: &mut impl Rng, distance: f64, exponent: f64, mode: FadingMode) -> Complex64 {
    draw_smallscale(rng, mode) * distance.powf(-exponent / 2.0)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

struct Placer<'a> {
    config: &'a ScenarioConfig,
    attempts: usize,
}

impl Placer<'_> {
    fn tick(&mut self) -> Result<(), ChannelError> {
        self.attempts += 1;
        if self.attempts > MAX_REJECTIONS {
            Err(ChannelError::RejectionLimit(MAX_REJECTIONS))
        } else {
            Ok(())
        }
    }

    /// Uniform point in the disk, redrawn until it keeps `min_separation`
    /// from the server and from every point in `placed`.
    fn place(&mut self, rng: &mut impl Rng, placed: &[[f64; 2]]) -> Result<[f64; 2], ChannelError> {
        let radius = self.config.disk_radius;
        let sep = self.config.min_separation;
        loop {
            self.tick()?;
            let r = radius * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let p = [r * theta.cos(), r * theta.sin()];
            if r >= sep && placed.iter().all(|q| distance(p, *q) >= sep) {
                return Ok(p);
            }
        }
    }
}

/// Samples one realization; a pure function of `(config, seed)`.
pub fn sample_realization(config: &ScenarioConfig, seed: u64) -> Result<SystemRealization, ChannelError> {
    config.validate()?;
    let k = config.num_users;
    let l = config.num_eavesdroppers;
    let e = config.pathloss_exponent;
    let mut placer = Placer { config, attempts: 0 };

    let mut rng = stream_rng(seed, STREAM_USER_POSITIONS);
    let mut users: Vec<[f64; 2]> = Vec::with_capacity(k);
    for _ in 0..k {
        let p = placer.place(&mut rng, &users)?;
        users.push(p);
    }

    let mut rng = stream_rng(seed, STREAM_USER_FADING);
    let mut h = Vec::with_capacity(k);
    for u in &users {
        let xi = loop {
            placer.tick()?;
            let xi = draw_smallscale(&mut rng, config.fading_mode);
            if xi.norm() >= config.min_smallscale_magnitude {
                break xi;
            }
        };
        h.push(xi * distance(*u, [0.0, 0.0]).powf(-e / 2.0));
    }

    let mut rng = stream_rng(seed, STREAM_EAV_POSITIONS);
    let mut eavs: Vec<[f64; 2]> = Vec::with_capacity(l);
    if config.collocated_eavesdroppers {
        let p = placer.place(&mut rng, &users)?;
        eavs.resize(l, p);
    } else {
        let mut placed = users.clone();
        for _ in 0..l {
            let p = placer.place(&mut rng, &placed)?;
            placed.push(p);
            eavs.push(p);
        }
    }

    let mut rng = stream_rng(seed, STREAM_EAV_FADING);
    let mut g = ComplexMatrix::zeros(l, k);
    for (i, ep) in eavs.iter().enumerate() {
        for (j, up) in users.iter().enumerate() {
            g[(i, j)] = draw_coefficient(&mut rng, distance(*ep, *up), e, config.fading_mode);
        }
    }

    let (sigma_y_sq, sigma_z_sq) = calibrate_noise(config);
    Ok(SystemRealization {
        user_positions: users,
        eav_positions: eavs,
        h: ComplexVector(h),
        g,
        transmit_power: config.transmit_power,
        sigma_y_sq,
        sigma_z_sq,
        sigma_z_sq_per_eav: None,
    })
}
