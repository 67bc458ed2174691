//! Monte Carlo presets and whitespace-separated result tables.
//!
//! Realization `r` of every preset uses seed `base_seed + r` for all sweep
//! values, so curves share topologies and paired differences are cheap to
//! test. Realizations run in parallel and are reduced in index order.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_realization, FadingMode, ScenarioConfig, SystemRealization};
use crate::encoding::{build_precoder, eta_bounds_given_mu, eta_from_delta, PrecoderKind, PrecoderParams};
use crate::linalg::ComplexMatrix;
use crate::metrics::{security_report, SecurityReport};
use crate::optimizer::{optimize_proposed, optimize_shared_zf, Ranking, Selection};
use crate::{Error, Result};

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    EtaDesignSpace,
    #[serde(rename = "sweep_L")]
    SweepL,
    SweepSnrDesigns,
    SecurityGap,
    Collocated,
    SharedZf,
    PowerControl,
    Tradeoff,
}

impl PresetName {
    pub const ALL: [PresetName; 8] = [
        PresetName::EtaDesignSpace,
        PresetName::SweepL,
        PresetName::SweepSnrDesigns,
        PresetName::SecurityGap,
        PresetName::Collocated,
        PresetName::SharedZf,
        PresetName::PowerControl,
        PresetName::Tradeoff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::EtaDesignSpace => "eta_design_space",
            PresetName::SweepL => "sweep_L",
            PresetName::SweepSnrDesigns => "sweep_snr_designs",
            PresetName::SecurityGap => "security_gap",
            PresetName::Collocated => "collocated",
            PresetName::SharedZf => "shared_zf",
            PresetName::PowerControl => "power_control",
            PresetName::Tradeoff => "tradeoff",
        }
    }
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = PresetName::ALL.iter().map(|p| p.as_str()).collect();
            Error::Config(format!("unknown preset '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// Codes of the `design` column in the tradeoff table.
pub mod tradeoff_design {
    pub const RANDOM: f64 = 0.0;
    pub const RANDOM_ZF: f64 = 1.0;
    pub const PROPOSED: f64 = 2.0;
    pub const MIXTURE: f64 = 3.0;
}

/// One experiment. Fields that a preset does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub scenario: ScenarioConfig,
    pub num_realizations: usize,
    /// μ values, L values, SNRs in dB, or δ values, depending on the preset.
    pub sweep: Vec<f64>,
    pub designs: Vec<PrecoderKind>,
    pub base_seed: u64,
    /// Power-control fraction for presets with a single η.
    pub delta: f64,
    /// Power-control fractions compared by `power_control`.
    pub deltas: Vec<f64>,
    /// Transmit powers compared by `eta_design_space`.
    pub powers: Vec<f64>,
    pub fading_modes: Vec<FadingMode>,
    /// Eavesdropper counts compared by `shared_zf`.
    pub eav_counts: Vec<usize>,
    /// Zero-forcing set sizes compared by `shared_zf`.
    pub shared_counts: Vec<usize>,
    pub ranking: Ranking,
    pub mixture_pairs: usize,
    pub mixture_points: usize,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn snr_grid() -> Vec<f64> {
    (-4..=4).map(|i| 5.0 * i as f64).collect()
}

impl ExperimentPreset {
    pub fn new(name: PresetName) -> Self {
        let mut p = Self {
            name,
            scenario: ScenarioConfig::default(),
            num_realizations: 100,
            sweep: snr_grid(),
            designs: vec![
                PrecoderKind::None,
                PrecoderKind::SignalLevel,
                PrecoderKind::DataLevel,
                PrecoderKind::RandomZf,
                PrecoderKind::Proposed,
            ],
            base_seed: 1,
            delta: 1.0,
            deltas: vec![0.4, 0.7, 0.85, 1.0],
            powers: vec![1.0, 10.0],
            fading_modes: vec![FadingMode::Complex, FadingMode::Real],
            eav_counts: vec![3, 5, 7],
            shared_counts: vec![1, 2],
            ranking: Ranking::NonCooperative,
            mixture_pairs: 50,
            mixture_points: 11,
        };
        match name {
            PresetName::EtaDesignSpace => {
                p.num_realizations = 1;
                p.sweep = (1..=100).map(|i| i as f64 / 100.0).collect();
            }
            PresetName::SweepL => p.sweep = (1..=15).map(f64::from).collect(),
            PresetName::Tradeoff => {
                p.num_realizations = 1;
                p.scenario.num_eavesdroppers = 7;
                p.scenario = p.scenario.at_snr(0.0);
                p.sweep = linspace(0.0, 1.0, 40);
            }
            _ => {}
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.scenario.validate()?;
        if self.num_realizations < 1 {
            return bad("num_realizations must be at least 1".into());
        }
        if self.sweep.is_empty() || self.sweep.iter().any(|v| !v.is_finite()) {
            return bad("sweep must be a non-empty list of finite values".into());
        }
        let up = self.sweep.windows(2).all(|w| w[1] > w[0]);
        let down = self.sweep.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return bad("sweep values must be strictly monotone".into());
        }
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if !unit(&self.delta) || !self.deltas.iter().all(unit) {
            return bad("power-control fractions must lie in [0, 1]".into());
        }
        match self.name {
            PresetName::EtaDesignSpace => {
                if !self.sweep.iter().all(|m| *m > 0.0 && *m <= 1.0) {
                    return bad("eta_design_space sweeps mu over (0, 1]".into());
                }
                if self.powers.is_empty() || !self.powers.iter().all(|p| *p > 0.0 && p.is_finite()) {
                    return bad("powers must be positive".into());
                }
            }
            PresetName::SweepL => {
                if !self.sweep.iter().all(|l| *l >= 1.0 && l.fract() == 0.0 && *l <= 64.0) {
                    return bad("sweep_L sweeps integer L in [1, 64]".into());
                }
                if self.fading_modes.is_empty() {
                    return bad("fading_modes must not be empty".into());
                }
            }
            PresetName::SweepSnrDesigns | PresetName::SecurityGap => {
                if self.designs.is_empty() {
                    return bad("designs must not be empty".into());
                }
                if self.designs.iter().any(|d| matches!(d, PrecoderKind::ProposedShared | PrecoderKind::Mixture)) {
                    return bad("design sweeps support none, signal_level, data_level, random_zf, proposed".into());
                }
            }
            PresetName::SharedZf => {
                if self.eav_counts.is_empty() || self.eav_counts.contains(&0) {
                    return bad("eav_counts must be positive".into());
                }
                if self.shared_counts.is_empty()
                    || self.shared_counts.iter().any(|&n| n < 1 || n + 1 > self.scenario.num_users)
                {
                    return bad("shared_counts must lie in [1, K-1]".into());
                }
            }
            PresetName::PowerControl => {
                if self.deltas.is_empty() {
                    return bad("deltas must not be empty".into());
                }
            }
            PresetName::Tradeoff => {
                if !self.sweep.iter().all(unit) {
                    return bad("tradeoff sweeps delta over [0, 1]".into());
                }
                if self.mixture_pairs < 1 || self.mixture_points < 2 {
                    return bad("tradeoff needs mixture_pairs >= 1 and mixture_points >= 2".into());
                }
            }
            PresetName::Collocated => {}
        }
        Ok(())
    }

    fn seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_names.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.column_names.len() {
                return Err(Error::Numeric(format!(
                    "row {i} has {} entries for {} columns",
                    row.len(),
                    self.column_names.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite value in row {i}, column {}",
                    self.column_names[j]
                )));
            }
        }
        Ok(())
    }

    /// Text form: `#` metadata lines, the header, then one line per row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.column_names.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_g12(*v)).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    /// Parses [`ResultTable::render`] output.
    pub fn parse(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = loop {
            let line = lines.next().ok_or_else(|| Error::Config("table has no header".into()))?;
            match line.strip_prefix('#') {
                Some(meta) => {
                    let (k, v) = meta.trim().split_once(':').unwrap_or((meta.trim(), ""));
                    metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                None => break line,
            }
        };
        let column_names: Vec<String> = header.split_whitespace().map(str::to_string).collect();
        let rows = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("bad value '{v}': {e}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let table = Self {
            column_names,
            rows,
            metadata,
        };
        table.validate()?;
        Ok(table)
    }
}

/// Shortest decimal form with 12 significant digits, like C's `%.12g`.
pub fn format_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the table, creating missing parent directories.
pub fn write_table(table: &ResultTable, path: &Path) -> Result<()> {
    table.validate()?;
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(table.render().as_bytes()).map_err(io)?;
    file.flush().map_err(io)
}

/// Per-realization metric values behind an averaged table.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetSamples {
    pub key_names: Vec<String>,
    /// Key columns of each sweep point.
    pub keys: Vec<Vec<f64>>,
    pub metric_names: Vec<String>,
    /// `values[r][i][j]`: realization `r`, sweep point `i`, metric `j`.
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
}

pub fn summarize(samples: &[f64]) -> Summary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Summary {
        mean,
        std_err: (var / n).sqrt(),
    }
}

impl PresetSamples {
    pub fn metric_index(&self, name: &str) -> Result<usize> {
        self.metric_names
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::Config(format!("no metric named '{name}'")))
    }

    /// Values of one metric at one sweep point, in realization order.
    pub fn metric(&self, name: &str, point: usize) -> Result<Vec<f64>> {
        let j = self.metric_index(name)?;
        Ok(self.values.iter().map(|r| r[point][j]).collect())
    }

    /// Summary of `a − b` paired by realization.
    pub fn paired(&self, a: (&str, usize), b: (&str, usize)) -> Result<Summary> {
        let xa = self.metric(a.0, a.1)?;
        let xb = self.metric(b.0, b.1)?;
        let d: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
        Ok(summarize(&d))
    }

    pub fn to_table(&self, preset: &ExperimentPreset) -> Result<ResultTable> {
        let n = self.values.len() as f64;
        let rows = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, key)| {
                let mut row = key.clone();
                for j in 0..self.metric_names.len() {
                    row.push(self.values.iter().map(|r| r[i][j]).sum::<f64>() / n);
                }
                row
            })
            .collect();
        let mut column_names = self.key_names.clone();
        column_names.extend(self.metric_names.iter().cloned());
        let table = ResultTable {
            column_names,
            rows,
            metadata: metadata(preset)?,
        };
        table.validate()?;
        Ok(table)
    }
}

fn metadata(preset: &ExperimentPreset) -> Result<Vec<(String, String)>> {
    let config = serde_json::to_string(preset).map_err(|e| Error::Config(e.to_string()))?;
    Ok(vec![
        ("preset".into(), preset.name.as_str().into()),
        ("config".into(), config),
        ("seed".into(), preset.base_seed.to_string()),
        ("build".into(), BUILD_ID.into()),
    ])
}

fn evaluate(real: &SystemRealization, kind: PrecoderKind, delta: f64, seed: u64) -> Result<SecurityReport> {
    let eta = eta_from_delta(real, delta)?;
    let precoder = match kind {
        PrecoderKind::Proposed => optimize_proposed(real, eta)?,
        _ => build_precoder(kind, real, eta, seed, &PrecoderParams::default())?,
    };
    Ok(security_report(real, &precoder.a, eta)?)
}

/// Runs an averaged preset and keeps every realization's values.
pub fn run_preset_samples(preset: &ExperimentPreset) -> Result<PresetSamples> {
    preset.validate()?;
    let (key_names, keys, metric_names) = layout(preset);
    let values = (0..preset.num_realizations)
        .into_par_iter()
        .map(|r| realization_values(preset, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(PresetSamples {
        key_names,
        keys,
        metric_names,
        values,
    })
}

type Layout = (Vec<String>, Vec<Vec<f64>>, Vec<String>);

fn snr_keys(preset: &ExperimentPreset) -> Vec<Vec<f64>> {
    preset
        .sweep
        .iter()
        .map(|&snr| vec![snr, preset.scenario.at_snr(snr).transmit_power])
        .collect()
}

fn layout(preset: &ExperimentPreset) -> Layout {
    let snr_names = vec!["snr_db".to_string(), "P".to_string()];
    match preset.name {
        PresetName::SweepL => {
            let mut metrics = Vec::new();
            for m in &preset.fading_modes {
                let tag = match m {
                    FadingMode::Complex => "complex",
                    FadingMode::Real => "real",
                };
                metrics.extend([format!("D_{tag}"), format!("Scoop_{tag}"), format!("Snoncoop_{tag}")]);
            }
            (vec!["L".into()], preset.sweep.iter().map(|l| vec![*l]).collect(), metrics)
        }
        PresetName::SweepSnrDesigns => {
            let mut metrics = Vec::new();
            for d in &preset.designs {
                metrics.extend([
                    format!("D_{}", d.name()),
                    format!("Scoop_{}", d.name()),
                    format!("Snoncoop_{}", d.name()),
                ]);
            }
            (snr_names, snr_keys(preset), metrics)
        }
        PresetName::SecurityGap => {
            let metrics = preset.designs.iter().map(|d| format!("gap_{}", d.name())).collect();
            (snr_names, snr_keys(preset), metrics)
        }
        PresetName::Collocated => {
            let metrics = ["D", "Scoop_distributed", "Snoncoop_distributed", "Scoop_collocated", "Snoncoop_collocated"]
                .map(String::from)
                .to_vec();
            (snr_names, snr_keys(preset), metrics)
        }
        PresetName::SharedZf => {
            let mut metrics = Vec::new();
            for l in &preset.eav_counts {
                metrics.push(format!("Scoop_proposed_L{l}"));
                for n in &preset.shared_counts {
                    metrics.push(format!("Scoop_N{n}_exhaustive_L{l}"));
                }
            }
            (snr_names, snr_keys(preset), metrics)
        }
        PresetName::PowerControl => {
            let mut metrics = Vec::new();
            for d in &preset.deltas {
                metrics.push(format!("S_{}", format_g12(*d)));
            }
            for d in &preset.deltas {
                metrics.push(format!("D_{}", format_g12(*d)));
            }
            (snr_names, snr_keys(preset), metrics)
        }
        PresetName::EtaDesignSpace | PresetName::Tradeoff => (Vec::new(), Vec::new(), Vec::new()),
    }
}

/// Metric values of realization `r` at every sweep point.
fn realization_values(preset: &ExperimentPreset, r: usize) -> Result<Vec<Vec<f64>>> {
    let seed = preset.seed(r);
    let base = &preset.scenario;
    match preset.name {
        PresetName::SweepL => {
            let l_max = preset.sweep.iter().copied().fold(0.0, f64::max) as usize;
            let reals = preset
                .fading_modes
                .iter()
                .map(|&fading_mode| {
                    let cfg = ScenarioConfig {
                        num_eavesdroppers: l_max,
                        fading_mode,
                        ..base.clone()
                    };
                    sample_realization(&cfg, seed)
                })
                .collect::<Result<Vec<_>, _>>()?;
            preset
                .sweep
                .iter()
                .map(|&l| {
                    let mut row = Vec::new();
                    for full in &reals {
                        let real = full.with_eavesdroppers(l as usize);
                        let rep = evaluate(&real, PrecoderKind::None, preset.delta, seed)?;
                        row.extend([rep.d, rep.s_coop, rep.s_noncoop]);
                    }
                    Ok(row)
                })
                .collect()
        }
        PresetName::SweepSnrDesigns | PresetName::SecurityGap => preset
            .sweep
            .iter()
            .map(|&snr| {
                let real = sample_realization(&base.at_snr(snr), seed)?;
                let mut row = Vec::new();
                for &kind in &preset.designs {
                    let rep = evaluate(&real, kind, preset.delta, seed)?;
                    if preset.name == PresetName::SecurityGap {
                        row.push(rep.s_noncoop - rep.s_coop);
                    } else {
                        row.extend([rep.d, rep.s_coop, rep.s_noncoop]);
                    }
                }
                Ok(row)
            })
            .collect(),
        PresetName::Collocated => preset
            .sweep
            .iter()
            .map(|&snr| {
                let cfg = ScenarioConfig {
                    collocated_eavesdroppers: false,
                    ..base.at_snr(snr)
                };
                let dist = sample_realization(&cfg, seed)?;
                let colo = sample_realization(
                    &ScenarioConfig {
                        collocated_eavesdroppers: true,
                        ..cfg
                    },
                    seed,
                )?;
                let a = evaluate(&dist, PrecoderKind::None, preset.delta, seed)?;
                let b = evaluate(&colo, PrecoderKind::None, preset.delta, seed)?;
                Ok(vec![a.d, a.s_coop, a.s_noncoop, b.s_coop, b.s_noncoop])
            })
            .collect(),
        PresetName::SharedZf => {
            let l_max = *preset.eav_counts.iter().max().expect("validated");
            preset
                .sweep
                .iter()
                .map(|&snr| {
                    let cfg = ScenarioConfig {
                        num_eavesdroppers: l_max,
                        ..base.at_snr(snr)
                    };
                    let full = sample_realization(&cfg, seed)?;
                    let eta = eta_from_delta(&full, preset.delta)?;
                    let mut row = Vec::new();
                    for &l in &preset.eav_counts {
                        let real = full.with_eavesdroppers(l);
                        let p = optimize_proposed(&real, eta)?;
                        row.push(security_report(&real, &p.a, eta)?.s_coop);
                        for &n in &preset.shared_counts {
                            let p = optimize_shared_zf(&real, eta, n, Selection::Exhaustive, preset.ranking)?;
                            row.push(security_report(&real, &p.a, eta)?.s_coop);
                        }
                    }
                    Ok(row)
                })
                .collect()
        }
        PresetName::PowerControl => preset
            .sweep
            .iter()
            .map(|&snr| {
                let real = sample_realization(&base.at_snr(snr), seed)?;
                let reps = preset
                    .deltas
                    .iter()
                    .map(|&d| evaluate(&real, PrecoderKind::Proposed, d, seed))
                    .collect::<Result<Vec<_>>>()?;
                let mut row: Vec<f64> = reps.iter().map(|r| r.s_coop).collect();
                row.extend(reps.iter().map(|r| r.d));
                Ok(row)
            })
            .collect(),
        PresetName::EtaDesignSpace | PresetName::Tradeoff => {
            Err(Error::Config(format!("{} is not an averaged preset", preset.name.as_str())))
        }
    }
}

fn run_eta_design_space(preset: &ExperimentPreset) -> Result<ResultTable> {
    let mut columns = vec!["mu".to_string()];
    let mut reals = Vec::new();
    for &p in &preset.powers {
        let snr = 10.0 * p.log10();
        let cfg = ScenarioConfig {
            transmit_power: p,
            ..preset.scenario.at_snr(snr)
        };
        reals.push(sample_realization(&cfg, preset.base_seed)?);
        let tag = format_g12(p);
        columns.push(format!("eta_lower_P{tag}"));
        columns.push(format!("eta_upper_P{tag}"));
    }
    let rows = preset
        .sweep
        .iter()
        .map(|&mu| {
            let mut row = vec![mu];
            for real in &reals {
                let zero = ComplexMatrix::zeros(real.num_users(), 1);
                let (lo, hi) = eta_bounds_given_mu(real, &zero, mu)?;
                row.extend([lo, hi]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ResultTable {
        column_names: columns,
        rows,
        metadata: metadata(preset)?,
    };
    table.validate()?;
    Ok(table)
}

fn run_tradeoff(preset: &ExperimentPreset) -> Result<ResultTable> {
    use tradeoff_design::*;
    let real = sample_realization(&preset.scenario, preset.base_seed)?;
    let thetas = linspace(0.0, 1.0, preset.mixture_points);
    let blocks = preset
        .sweep
        .par_iter()
        .map(|&delta| {
            let eta = eta_from_delta(&real, delta)?;
            let mut rows = Vec::new();
            let p = optimize_proposed(&real, eta)?;
            let rep = security_report(&real, &p.a, eta)?;
            rows.push(vec![PROPOSED, delta, 0.0, rep.d, rep.s_coop]);
            for pair in 0..preset.mixture_pairs {
                let seed = preset.seed(pair);
                for (i, &theta) in thetas.iter().enumerate() {
                    let code = if i == 0 {
                        RANDOM_ZF
                    } else if i + 1 == thetas.len() {
                        RANDOM
                    } else {
                        MIXTURE
                    };
                    let params = PrecoderParams {
                        theta,
                        ..PrecoderParams::default()
                    };
                    let m = build_precoder(PrecoderKind::Mixture, &real, eta, seed, &params)?;
                    let rep = security_report(&real, &m.a, eta)?;
                    rows.push(vec![code, delta, theta, rep.d, rep.s_coop]);
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ResultTable {
        column_names: ["design", "delta", "theta", "D", "S"].map(String::from).to_vec(),
        rows: blocks.into_iter().flatten().collect(),
        metadata: metadata(preset)?,
    };
    table.validate()?;
    Ok(table)
}

pub fn run_preset(preset: &ExperimentPreset) -> Result<ResultTable> {
    preset.validate()?;
    match preset.name {
        PresetName::EtaDesignSpace => run_eta_design_space(preset),
        PresetName::Tradeoff => run_tradeoff(preset),
        _ => run_preset_samples(preset)?.to_table(preset),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: PresetName) -> ExperimentPreset {
        let mut p = ExperimentPreset::new(name);
        p.num_realizations = 4;
        p.scenario.num_users = 5;
        p.scenario.num_eavesdroppers = 3;
        p.mixture_pairs = 2;
        p.mixture_points = 3;
        p.eav_counts = vec![2, 3];
        match name {
            PresetName::SweepL => p.sweep = vec![1.0, 2.0, 4.0],
            PresetName::Tradeoff => p.sweep = linspace(0.0, 1.0, 4),
            PresetName::EtaDesignSpace => p.sweep = vec![0.1, 0.5, 1.0],
            _ => p.sweep = vec![-10.0, 0.0, 10.0],
        }
        p
    }

    #[test]
    fn g12_formatting() {
        assert_eq!(format_g12(1.5), "1.5");
        assert_eq!(format_g12(0.0), "0");
        assert_eq!(format_g12(-2.0), "-2");
        assert_eq!(format_g12(1e-8), "1e-08");
        assert_eq!(format_g12(123456.0), "123456");
        assert_eq!(format_g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_g12(2.0 / 3.0 * 1e-7), "6.66666666667e-08");
        assert_eq!(format_g12(1e12), "1e+12");
        assert_eq!(format_g12(999999999999.5), "1e+12");
        assert_eq!(format_g12(0.0001), "0.0001");
        assert_eq!(format_g12(0.00001234), "1.234e-05");
    }

    #[test]
    fn single_cell_table() {
        let t = ResultTable {
            column_names: vec!["x".into()],
            rows: vec![vec![1.5]],
            metadata: vec![("preset".into(), "demo".into())],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.dat");
        write_table(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# preset: demo\nx\n1.5\n");
    }

    #[test]
    fn round_trip_at_twelve_digits() {
        let values = [std::f64::consts::PI, -1e-9 / 7.0, 12345.678901234, 0.1 + 0.2, 6.02e23];
        let t = ResultTable {
            column_names: (0..values.len()).map(|i| format!("c{i}")).collect(),
            rows: vec![values.to_vec()],
            metadata: Vec::new(),
        };
        let back = ResultTable::parse(&t.render()).unwrap();
        for (a, b) in values.iter().zip(&back.rows[0]) {
            assert_eq!(format_g12(*a), format_g12(*b));
            assert!((a - b).abs() <= 1e-11 * a.abs());
        }
    }

    #[test]
    fn non_finite_rows_are_rejected() {
        let t = ResultTable {
            column_names: vec!["x".into()],
            rows: vec![vec![f64::NAN]],
            metadata: Vec::new(),
        };
        assert!(t.validate().is_err());
        assert!(write_table(&t, Path::new("/tmp/never-written.dat")).is_err());
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let t = ResultTable {
            column_names: vec!["x".into()],
            rows: vec![vec![1.0]],
            metadata: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "").unwrap();
        let err = write_table(&t, &blocker.join("child.dat")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn every_preset_runs_and_is_deterministic() {
        for name in PresetName::ALL {
            let p = small(name);
            let a = run_preset(&p).unwrap();
            let b = run_preset(&p).unwrap();
            assert_eq!(a.render(), b.render(), "{}", name.as_str());
            assert!(!a.rows.is_empty());
            for (j, col) in a.column_names.iter().enumerate() {
                if col.starts_with('D') || col.starts_with('S') {
                    assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r[j])), "{col}");
                }
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = small(PresetName::SweepSnrDesigns);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_preset(&p).unwrap());
        let b = four.install(|| run_preset(&p).unwrap());
        assert_eq!(a.render(), b.render());
    }

    #[test]
    fn zero_forcing_column_matches_no_noise_column() {
        let mut p = small(PresetName::SweepSnrDesigns);
        p.delta = 0.8;
        let t = run_preset(&p).unwrap();
        let zf = t.column("D_random_zf").unwrap();
        let none = t.column("D_none").unwrap();
        for (a, b) in zf.iter().zip(&none) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn sweep_l_layout_and_pairing() {
        let p = small(PresetName::SweepL);
        let s = run_preset_samples(&p).unwrap();
        assert_eq!(s.metric_names[..3], ["D_complex", "Scoop_complex", "Snoncoop_complex"]);
        // D does not depend on the eavesdroppers: identical across L per realization
        let d0 = s.metric("D_complex", 0).unwrap();
        assert_eq!(d0, s.metric("D_complex", 2).unwrap());
        let t = s.to_table(&p).unwrap();
        assert_eq!(t.column("L").unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn security_gap_is_paired_difference() {
        let p = small(PresetName::SweepSnrDesigns);
        let g = ExperimentPreset {
            name: PresetName::SecurityGap,
            ..p.clone()
        };
        let a = run_preset(&p).unwrap();
        let b = run_preset(&g).unwrap();
        let diff: Vec<f64> = a
            .column("Snoncoop_proposed")
            .unwrap()
            .iter()
            .zip(a.column("Scoop_proposed").unwrap())
            .map(|(x, y)| x - y)
            .collect();
        for (x, y) in diff.iter().zip(b.column("gap_proposed").unwrap()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn preset_validation() {
        let mut p = small(PresetName::SweepL);
        p.sweep = vec![1.0, 1.0];
        assert!(p.validate().is_err());
        p.sweep = vec![1.5];
        assert!(p.validate().is_err());
        let mut p = small(PresetName::PowerControl);
        p.num_realizations = 0;
        assert!(p.validate().is_err());
        assert!("nosuch".parse::<PresetName>().is_err());
        for name in PresetName::ALL {
            assert_eq!(name.as_str().parse::<PresetName>().unwrap(), name);
            assert_eq!(serde_json::to_value(name).unwrap(), name.as_str());
            ExperimentPreset::new(name).validate().unwrap();
        }
    }

    #[test]
    fn preset_json_round_trip() {
        let p = ExperimentPreset::new(PresetName::SharedZf);
        let v = serde_json::to_value(&p).unwrap();
        let back: ExperimentPreset = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
