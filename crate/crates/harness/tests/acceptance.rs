//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is printed by a plain
//! `cargo test`. Pass a substring to run a subset. The process fails if any
//! criterion outside `KNOWN_RED` fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use common::corpus;
use ser_probe_core::acoustics::{
    energy_entropy, extract_acoustic_features, jitter_local, mean_pitch, pitch_track, shimmer_local, spectral_centroid,
    zero_crossing_rate, AcousticConfig, AcousticFeatures, AudioSignal, EntropyConfig, PitchConfig, SpectralConfig,
};
use ser_probe_core::manifest::{load_manifest, manifest_line};
use ser_probe_core::probe::{
    gradient_check, init_probe, train_probe, FeatureTable, LayerEmbeddingArchive, ProbeConfig, ProbeSplits,
};
use ser_probe_core::seed::stream_rng;
use ser_probe_core::stats::{bootstrap_ci, ccc, paired_t_test, pcc, rmse, t_test, PairedSeries};
use ser_probe_core::suitegen::{
    build_sentiment_suite, expand_template, Category, Lexicon, Polarity, SuiteOptions, Template, TestSuite, WordLists,
};
use ser_probe_core::{Dimension, ModelVariant, PredictionRecord, RunConfig, Utterance};
use ser_probe_harness::mock::{MockAdapter, MockBehavior, SerMode, TtsMode};
use ser_probe_harness::pipeline::{
    predictions_file, run_probing1, run_probing2, run_probing3, GroupKey, PipelineOptions, Probing1Report,
    Probing2Report, SerModel,
};
use ser_probe_harness::run::RunDir;
use ser_probe_harness::transport::Endpoint;

/// Criteria that are reported red on purpose; the process still succeeds.
const KNOWN_RED: &[(&str, &str)] = &[(
    "probe-correctness",
    "linear-target RMSE < 0.05 is not reached with the stated probe hyperparameters",
)];

#[derive(Default)]
struct Checks {
    items: Vec<(String, bool, String)>,
}

impl Checks {
    fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.items.push((name.to_string(), ok, detail.into()));
    }

    fn within(&mut self, name: &str, elapsed: Duration, limit_s: f64) {
        let s = elapsed.as_secs_f64();
        self.check(name, s < limit_s, format!("{s:.1}s < {limit_s}s"));
    }
}

type Criterion = (&'static str, fn(&mut Checks));

const CRITERIA: &[Criterion] = &[
    ("stats-oracle-equivalence", stats_oracle),
    ("ccc-worked-example", ccc_example),
    ("bootstrap-coverage", bootstrap_coverage),
    ("dsp-fixtures", dsp_fixtures),
    ("probe-correctness", probe_correctness),
    ("rmse-ratio-mechanics", rmse_ratio_mechanics),
    ("suite-generation", suite_generation),
    ("pipeline-determinism", pipeline_determinism),
    ("probing2-logic", probing2_logic),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let mut checks = Checks::default();
        if let Err(p) = catch_unwind(AssertUnwindSafe(|| run(&mut checks))) {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.check("panic", false, msg);
        }
        let pass = checks.items.iter().all(|(_, ok, _)| *ok);
        let known = KNOWN_RED.iter().find(|(n, _)| n == name);
        println!(
            "{} {name} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        for (sub, ok, detail) in &checks.items {
            println!("    [{}] {sub}: {detail}", if *ok { "ok" } else { "FAILED" });
        }
        match (pass, known) {
            (false, Some((_, why))) => println!("    known red: {why}"),
            (false, None) => unexpected.push(*name),
            _ => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// reference implementations

/// Population covariance as the mean over all ordered pairs of
/// (x_i - x_j)(y_i - y_j) / 2; no means involved.
fn pair_cov(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += (x[i] - x[j]) * (y[i] - y[j]);
        }
    }
    s / (2.0 * n * n)
}

fn ref_mean(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, b| a + b) / x.len() as f64
}

fn ref_ccc(t: &[f64], p: &[f64]) -> f64 {
    let d = ref_mean(t) - ref_mean(p);
    2.0 * pair_cov(t, p) / (pair_cov(t, t) + pair_cov(p, p) + d * d)
}

fn ref_pcc(x: &[f64], y: &[f64]) -> f64 {
    pair_cov(x, y) / (pair_cov(x, x) * pair_cov(y, y)).sqrt()
}

fn ref_rmse(t: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..t.len() {
        s += (t[i] - p[i]).powi(2);
    }
    (s / t.len() as f64).sqrt()
}

fn sample_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    pair_cov(x, x) * n / (n - 1.0)
}

/// Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn ref_two_tailed(t: f64, df: f64) -> f64 {
    inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

fn ref_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (sample_var(a) / na, sample_var(b) / nb);
    let t = (ref_mean(a) - ref_mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df, ref_two_tailed(t, df))
}

fn ref_paired(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let t = ref_mean(&d) / (sample_var(&d) / n).sqrt();
    (t, n - 1.0, ref_two_tailed(t, n - 1.0))
}

/// Resample means built from draw multiplicities, then interpolated
/// percentiles; only the draw sequence is shared with the library.
fn ref_bootstrap(values: &[f64], cfg: &RunConfig) -> (f64, f64, f64) {
    let n = values.len();
    let mut rng = stream_rng(cfg.seed, "bootstrap", 0);
    let mut means = Vec::with_capacity(cfg.bootstrap_resamples);
    for _ in 0..cfg.bootstrap_resamples {
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.gen_range(0..n)] += 1;
        }
        means.push(counts.iter().zip(values).map(|(&c, v)| c as f64 * v).sum::<f64>() / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| {
        let r = p / 100.0 * (means.len() - 1) as f64;
        let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
        means[lo] * (1.0 - (r - lo as f64)) + means[hi] * (r - lo as f64)
    };
    let m = ref_mean(values);
    (m, pct(cfg.ci_lo).min(m), pct(cfg.ci_hi).max(m))
}

// ---------------------------------------------------------------------------
// statistics

fn stats_oracle(c: &mut Checks) {
    let t0 = Instant::now();
    // sanity anchors for the reference distribution (scipy.stats.t.sf * 2)
    // plus closed forms: df = 1 is Cauchy, df = 2 has p = 1 - t/sqrt(2 + t²)
    let anchors = [
        (2.0, 10.0, 0.073_388_034_770_740_39),
        (3.5, 4.5, 0.020_541_689_969_385_56),
        (1.0, 1.0, 0.5),
        (3.0, 1.0, 1.0 - 2.0 / PI * 3f64.atan()),
        (1.7, 2.0, 1.0 - 1.7 / (2.0 + 1.7f64 * 1.7).sqrt()),
    ];
    let anchor_err = anchors
        .iter()
        .map(|&(t, df, p)| (ref_two_tailed(t, df) - p).abs())
        .fold(0.0, f64::max);
    c.check("reference t distribution anchors", anchor_err < 1e-12, format!("max |Δp| = {anchor_err:.2e}"));

    let mut rng = stream_rng(2024, "acceptance-stats", 0);
    let mut worst = BTreeMap::<&str, f64>::new();
    let mut bump = |k: &'static str, a: f64, b: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max((a - b).abs());
    };
    for inst in 0..100u64 {
        let n = rng.gen_range(3..60);
        let m = rng.gen_range(3..60);
        let scale: f64 = rng.gen_range(0.1..5.0);
        let shift: f64 = rng.gen_range(-3.0..3.0);
        let x: Vec<f64> = (0..n).map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let slope: f64 = rng.gen_range(-1.5..1.5);
        let y: Vec<f64> = x
            .iter()
            .map(|v| slope * v + rng.gen_range(0.0..1.0) * rng.sample::<f64, _>(StandardNormal) + 0.3)
            .collect();
        let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0) + rng.sample::<f64, _>(StandardNormal)).collect();

        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        bump("ccc", ccc(&s).value, ref_ccc(&x, &y));
        bump("rmse", rmse(&s), ref_rmse(&x, &y));
        bump("pcc", pcc(&x, &y).unwrap().value, ref_pcc(&x, &y));

        let w = t_test(&x, &z, 0.05).unwrap();
        let (t, df, p) = ref_welch(&x, &z);
        bump("welch t", w.t_statistic, t);
        bump("welch df", w.df, df);
        bump("welch p", w.p_value, p);

        let pt = paired_t_test(&x, &y, 0.05).unwrap();
        let (t, df, p) = ref_paired(&x, &y);
        bump("paired t", pt.t_statistic, t);
        bump("paired df", pt.df, df);
        bump("paired p", pt.p_value, p);

        let cfg = RunConfig {
            seed: inst,
            bootstrap_resamples: 500,
            ..RunConfig::default()
        };
        let b = bootstrap_ci(&x, &cfg).unwrap();
        let (bm, lo, hi) = ref_bootstrap(&x, &cfg);
        bump("bootstrap mean", b.mean, bm);
        bump("bootstrap lo", b.ci_lo, lo);
        bump("bootstrap hi", b.ci_hi, hi);
    }
    for (k, e) in worst {
        let tol = if k.ends_with(" p") { 1e-8 } else { 1e-10 };
        c.check(k, e < tol, format!("max |Δ| = {e:.2e} over 100 instances (tol {tol:e})"));
    }
    c.within("runtime", t0.elapsed(), 10.0);
}

fn ccc_example(c: &mut Checks) {
    let s = PairedSeries::new(vec![0.0, 0.5, 1.0], vec![0.1, 0.5, 0.9]).unwrap();
    // equal means; population cov 0.4/3, variances 0.5/3 and 0.32/3
    let oracle = 2.0 * (0.4 / 3.0) / (0.5 / 3.0 + 0.32 / 3.0);
    let v = ccc(&s).value;
    c.check(
        "worked example",
        (v - 0.9756).abs() <= 1e-4 && (v - oracle).abs() < 1e-12,
        format!("{v:.6} (oracle {oracle:.6})"),
    );
    let x = vec![0.2, 0.9, 0.4, 0.7, 0.1];
    let same = ccc(&PairedSeries::new(x.clone(), x.clone()).unwrap()).value;
    c.check("ccc(x, x)", same == 1.0, format!("{same}"));
    let flat = ccc(&PairedSeries::new(x.clone(), vec![0.5; 5]).unwrap()).value;
    c.check("constant prediction", flat == 0.0, format!("{flat}"));
}

fn bootstrap_coverage(c: &mut Checks) {
    let t0 = Instant::now();
    let trials = 500;
    let mut covered = 0;
    for trial in 0..trials {
        let mut rng = stream_rng(trial, "coverage", 0);
        let xs: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let cfg = RunConfig {
            seed: trial,
            ..RunConfig::default()
        };
        let s = bootstrap_ci(&xs, &cfg).unwrap();
        if s.ci_lo <= 0.0 && 0.0 <= s.ci_hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    c.check("coverage of the 5–95% interval", (0.85..=0.95).contains(&rate), format!("{rate:.3} over {trials} trials"));
    c.within("runtime", t0.elapsed(), 60.0);
}

// ---------------------------------------------------------------------------
// DSP

fn sine(freq: f64, amp: f64, secs: f64) -> AudioSignal {
    let sr = 16_000u32;
    let n = (sr as f64 * secs) as usize;
    AudioSignal::new((0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect(), sr).unwrap()
}

fn dsp_fixtures(c: &mut Checks) {
    let t0 = Instant::now();
    let track = pitch_track(&sine(200.0, 0.5, 1.0), &PitchConfig::default()).unwrap();
    let f0 = mean_pitch(&track);
    c.check("200 Hz sine pitch ±2%", (f0 - 200.0).abs() <= 4.0, format!("{f0:.3} Hz"));

    let cen = spectral_centroid(&sine(1000.0, 0.5, 1.0), &SpectralConfig::default()).unwrap();
    c.check("1 kHz tone centroid ±2%", (cen - 1000.0).abs() <= 20.0, format!("{cen:.3} Hz"));

    let alt = AudioSignal::new((0..1000).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect(), 16_000).unwrap();
    let z = zero_crossing_rate(&alt).unwrap();
    c.check("alternating-sign ZCR", z == 1.0, format!("{z}"));

    let j = jitter_local(&[0.005; 50]).unwrap();
    let s = shimmer_local(&[0.42; 50]).unwrap();
    c.check("equal periods / amplitudes", j == 0.0 && s == 0.0, format!("jitter {j}, shimmer {s}"));

    let flat = AudioSignal::new(vec![0.3; 16_000], 16_000).unwrap();
    let h = energy_entropy(&flat, &EntropyConfig::default()).unwrap();
    let err = (h - 10f64.log2()).abs();
    c.check("uniform energy entropy = log2(10)", err <= 1e-9, format!("|Δ| = {err:.2e}"));

    // sawtooth with a little vibrato so every feature is non-trivial
    let sr = 16_000u32;
    let mut phase = 0.0;
    let saw: Vec<f64> = (0..12_800)
        .map(|i| {
            let f = 180.0 + 15.0 * (2.0 * PI * 3.0 * i as f64 / sr as f64).sin();
            phase = (phase + f / sr as f64).fract();
            0.3 * (2.0 * phase - 1.0)
        })
        .collect();
    let cfg = AcousticConfig::default();
    let base = extract_acoustic_features(&AudioSignal::new(saw.clone(), sr).unwrap(), &cfg).unwrap();
    let mut worst = (0.0, "");
    for k in [0.01, 0.5, 3.0] {
        let scaled = AudioSignal::new(saw.iter().map(|x| x * k).collect(), sr).unwrap();
        let f = extract_acoustic_features(&scaled, &cfg).unwrap();
        for (name, (a, b)) in AcousticFeatures::COLUMNS.iter().zip(base.values().iter().zip(f.values())) {
            let e = (a - b).abs() / a.abs().max(1.0);
            if e > worst.0 {
                worst = (e, name);
            }
        }
    }
    c.check(
        "amplitude-scale invariance (all 8 features)",
        worst.0 <= 1e-9,
        format!("max relative |Δ| = {:.2e} {}", worst.0, worst.1),
    );
    c.within("runtime", t0.elapsed(), 30.0);
}

// ---------------------------------------------------------------------------
// probes

fn ids(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:05}")).collect()
}

fn probe_correctness(c: &mut Checks) {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = stream_rng(inst, "acceptance-gradcheck", 0);
        let dim = rng.gen_range(2..24);
        let n = rng.gen_range(1..10);
        let m = init_probe(dim, &ProbeConfig { seed: inst, ..Default::default() }).unwrap();
        let x = Array2::from_shape_fn((n, dim), |_| rng.sample(StandardNormal));
        let t: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        worst = worst.max(gradient_check(&m, x.view(), &t, inst).unwrap());
    }
    c.check("gradient check, 20 instances", worst < 1e-4, format!("max relative error {worst:.2e}"));

    // y = w·x on 2000 rows of dim 32, stated hyperparameters
    let seed = 11;
    let mut rng = stream_rng(seed, "linear-task", 0);
    let (n, dim) = (2000, 32);
    let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let x = Array2::from_shape_fn((n, dim), |_| rng.sample::<f64, _>(StandardNormal) as f32);
    let t: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&w).map(|(a, b)| f64::from(*a) * b).sum())
        .collect();
    let splits = ProbeSplits::by_id_hash(&ids(n, "lin"), seed).unwrap();
    let (_, out) = train_probe(x.view(), &t, &splits, &ProbeConfig { seed, ..Default::default() }).unwrap();
    let z = out.rmse_test_standardized;
    c.check(
        "linear target, standardized test RMSE < 0.05 in 100 epochs",
        z < 0.05 && out.history.len() <= 100,
        format!("{z:.4} after {} epochs (best epoch {})", out.history.len(), out.best_epoch),
    );

    // lr too small to move val loss by the relative threshold
    let xs = x.slice(ndarray::s![..200, ..4]).to_owned();
    let ts: Vec<f64> = xs.rows().into_iter().map(|r| r.iter().map(|v| f64::from(*v)).sum()).collect();
    let splits = ProbeSplits::by_id_hash(&ids(200, "stall"), 5).unwrap();
    let cfg = ProbeConfig {
        learning_rate: 1e-12,
        epochs: 12,
        hidden_sizes: vec![32, 8],
        ..ProbeConfig::default()
    };
    let (_, out) = train_probe(xs.view(), &ts, &splits, &cfg).unwrap();
    let lrs: Vec<f64> = out.history.iter().map(|h| h.lr).collect();
    let fired = lrs[..6].iter().all(|&l| l == 1e-12) && lrs[6..11].iter().all(|&l| l == 1e-12 * 0.9) && lrs[11] == 1e-12 * 0.9 * 0.9;
    c.check(
        "plateau schedule fires (lr × 0.9 after 5 flat epochs)",
        fired,
        format!("lr by epoch: {}", lrs.iter().map(|l| format!("{:.3}", l / 1e-12)).collect::<Vec<_>>().join(" ")),
    );
    c.within("runtime", t0.elapsed(), 300.0);
}

fn zscore(xs: &[f64]) -> Vec<f64> {
    let m = ref_mean(xs);
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt();
    xs.iter().map(|x| (x - m) / sd).collect()
}

fn rmse_ratio_mechanics(c: &mut Checks) {
    let t0 = Instant::now();
    let d = tempfile::tempdir().unwrap();
    let n = 400;
    let ids = ids(n, "r");
    let mut rng = stream_rng(3, "acceptance-ratio", 0);
    let neg: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
    let others: Vec<(&str, Vec<f64>)> = vec![
        ("duration", (0..n).map(|_| rng.gen_range(1.0..5.0)).collect()),
        ("mean_pitch", (0..n).map(|_| 150.0 + 30.0 * rng.sample::<f64, _>(StandardNormal)).collect()),
        ("n_nouns", (0..n).map(|_| rng.gen_range(0..7) as f64).collect()),
    ];
    let mut cols = vec!["n_negations".to_string()];
    cols.extend(others.iter().map(|(k, _)| k.to_string()));
    let mut table = FeatureTable::new(cols).unwrap();
    for i in 0..n {
        let mut row = vec![neg[i]];
        row.extend(others.iter().map(|(_, v)| v[i]));
        table.push(&ids[i], row).unwrap();
    }

    // Shared base: coordinates 1..=3 carry the other features plus noise,
    // the rest is noise. Coordinate 0 is noise in frz and the z-scored
    // negation count in ft.
    let (layers, dim) = (4, 16);
    let zs: Vec<Vec<f64>> = others.iter().map(|(_, v)| zscore(v)).collect();
    let zneg = zscore(&neg);
    let mut frz_layers = Vec::new();
    let mut ft_layers = Vec::new();
    for l in 0..layers {
        let noise = 0.3 + 0.1 * l as f64;
        let base = Array2::from_shape_fn((n, dim), |(i, j)| {
            let e: f64 = rng.sample(StandardNormal);
            match j {
                1..=3 => (zs[j - 1][i] + noise * e) as f32,
                _ => e as f32,
            }
        });
        let mut ft = base.clone();
        for i in 0..n {
            ft[[i, 0]] = zneg[i] as f32;
        }
        frz_layers.push(base);
        ft_layers.push(ft);
    }
    let frz = LayerEmbeddingArchive::new(ModelVariant::Frozen, ids.clone(), frz_layers).unwrap();
    let ft = LayerEmbeddingArchive::new(ModelVariant::Finetuned, ids.clone(), ft_layers).unwrap();
    let cfg = ProbeConfig { seed: 5, ..ProbeConfig::default() };

    let small = ProbeConfig {
        hidden_sizes: vec![64, 16],
        epochs: 20,
        ..cfg.clone()
    };
    let same = run_probing3(run_dir(d.path(), "self"), &frz.relabeled(ModelVariant::Finetuned), &frz, &table, &[], &small, 1)
        .unwrap();
    let all100 = same.ratio.cells.iter().all(|c| c.ratio_pct == Some(100.0));
    c.check(
        "identical archives → every cell exactly 100%",
        all100 && same.ratio.cells.len() == layers * 4,
        format!(
            "{} cells; off: {:?}",
            same.ratio.cells.len(),
            same.ratio.cells.iter().filter(|c| c.ratio_pct != Some(100.0)).map(|c| (c.layer, &c.feature, c.ratio_pct)).collect::<Vec<_>>()
        ),
    );

    let r = run_probing3(run_dir(d.path(), "constructed"), &ft, &frz, &table, &[], &cfg, 1).unwrap();
    let cell = |l: usize, f: &str| r.ratio.get(l, f).and_then(|c| c.ratio_pct).unwrap_or(f64::NAN);
    let neg_row: Vec<f64> = (0..layers).map(|l| cell(l, "n_negations")).collect();
    c.check(
        "negation row < 60% at every layer",
        neg_row.iter().all(|&v| v < 60.0),
        format!("{}", neg_row.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(" ")),
    );
    let other_cells: Vec<f64> = others
        .iter()
        .flat_map(|(f, _)| (0..layers).map(move |l| (l, *f)))
        .map(|(l, f)| cell(l, f))
        .collect();
    let (lo, hi) = other_cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    c.check(
        "other features within 100 ± 15%",
        other_cells.iter().all(|&v| (85.0..=115.0).contains(&v)),
        format!("range {lo:.1}–{hi:.1} over {} cells", other_cells.len()),
    );
    c.within("runtime", t0.elapsed(), 600.0);
}

// ---------------------------------------------------------------------------
// suites and pipelines

fn ws(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn suite_generation(c: &mut Checks) {
    let lex = Lexicon {
        negative: ws(&["dreadful", "awful", "terrible"]),
        neutral: ws(&["commercial", "domestic", "private"]),
        positive: ws(&["excellent", "wonderful", "great"]),
        intensifiers: ws(&["really", "very"]),
        reducers: ws(&["somewhat", "slightly"]),
        context_templates: ws(&["That was {a:adj} flight.", "This is {a:adj} airline."]),
        negation_templates: ws(&["That was not {a:adj} flight."]),
        lists: BTreeMap::new(),
    };
    let suite = build_sentiment_suite(&lex, &SuiteOptions::default()).unwrap();

    // words per polarity × templates × modifiers, over the polarities each category admits
    let (w, t, i, r, ng) = (3, 2, 2, 2, 1);
    let expected: BTreeMap<(Category, Polarity), usize> = Polarity::ALL
        .into_iter()
        .flat_map(|p| {
            let polar = p != Polarity::Neutral;
            let mut v = vec![
                ((Category::WordIsolated, p), w),
                ((Category::WordInContext, p), w * t),
                ((Category::Negation, p), w * ng),
            ];
            if polar {
                v.push(((Category::Intensifier, p), w * t * i));
                v.push(((Category::Reducer, p), w * t * r));
            }
            v
        })
        .collect();
    let total: usize = expected.values().sum();
    c.check("case count", suite.cases.len() == 84 && total == 84, format!("{} cases (oracle {total})", suite.cases.len()));

    let mut got: BTreeMap<(Category, Polarity), usize> = BTreeMap::new();
    let mut bad = Vec::new();
    for case in &suite.cases {
        *got.entry((case.category, case.polarity)).or_default() += 1;
        let word_ok = lex.polarity_words(case.polarity).contains(&case.source_word);
        let text_ok = case.text.to_lowercase().contains(&case.source_word);
        let shape_ok = match case.category {
            Category::WordIsolated => case.text == case.source_word && case.modifier.is_none(),
            Category::WordInContext => case.modifier.is_none() && !case.text.contains(" not "),
            Category::Negation => case.text.contains(" not ") && case.modifier.is_none(),
            Category::Intensifier => case.modifier.as_deref().is_some_and(|m| lex.intensifiers.iter().any(|x| x == m)),
            Category::Reducer => case.modifier.as_deref().is_some_and(|m| lex.reducers.iter().any(|x| x == m)),
        };
        if !(word_ok && text_ok && shape_ok) {
            bad.push(case.id.clone());
        }
    }
    c.check(
        "category/polarity tags",
        got == expected && bad.is_empty(),
        if bad.is_empty() { format!("{} groups match", got.len()) } else { format!("mistagged: {bad:?}") },
    );
    let ids: BTreeSet<&str> = suite.cases.iter().map(|c| c.id.as_str()).collect();
    c.check("unique ids", ids.len() == suite.cases.len(), format!("{} ids", ids.len()));

    let again = build_sentiment_suite(&lex, &SuiteOptions::default()).unwrap();
    let bytes = |s: &TestSuite| s.to_utterances().iter().map(|u| manifest_line(u) + "\n").collect::<String>();
    let (a, b) = (bytes(&suite), bytes(&again));
    c.check("byte-identical across runs", a == b, format!("{} bytes", a.len()));

    let tpl = Template::parse("That was {a:adj} flight.").unwrap();
    let lists = WordLists::default().with("adj", ws(&["dreadful", "excellent"]));
    let texts: Vec<String> = expand_template(&tpl, &lists).unwrap().into_iter().map(|e| e.text).collect();
    c.check(
        "article rule",
        texts == ["That was a dreadful flight.", "That was an excellent flight."],
        format!("{texts:?}"),
    );
    let modified = suite.cases.iter().any(|c| c.text == "That was a really excellent flight.");
    c.check("article follows the modifier", modified, "\"a really excellent\"");
}

fn run_dir(root: &Path, name: &str) -> RunDir {
    RunDir::create(root.join(name), json!({"seed": 7})).unwrap()
}

fn opts() -> PipelineOptions {
    PipelineOptions {
        run: RunConfig {
            seed: 7,
            bootstrap_resamples: 500,
            parallelism: 2,
            ..RunConfig::default()
        },
        ..PipelineOptions::default()
    }
}

fn ep(name: &str, m: MockAdapter) -> Endpoint {
    Endpoint::in_process(name, m.with_max_inflight(4)).unwrap()
}

fn sers(make: impl Fn() -> MockAdapter) -> Vec<SerModel> {
    [ModelVariant::Finetuned, ModelVariant::Frozen]
        .into_iter()
        .map(|variant| SerModel {
            variant,
            endpoint: ep(&format!("ser_{variant}"), make().with_variant(variant)),
        })
        .collect()
}

fn probing1(root: &Path, name: &str, utts: &[Utterance], ser: impl Fn() -> MockAdapter) -> Probing1Report {
    run_probing1(
        run_dir(root, name),
        utts,
        &ep("asr", MockAdapter::asr_from(utts)),
        &ep("tts", MockAdapter::new(MockBehavior::Tts(TtsMode::Silence))),
        &sers(ser),
        &opts(),
    )
    .unwrap()
}

fn probing2(root: &Path, name: &str, suite: &TestSuite, mode: SerMode) -> Probing2Report {
    run_probing2(
        run_dir(root, name),
        suite,
        &ep("tts", MockAdapter::new(MockBehavior::Tts(TtsMode::Silence))),
        &sers(|| MockAdapter::new(MockBehavior::Ser(mode.clone())).with_seed(11)),
        &opts(),
    )
    .unwrap()
}

fn same_files(a: &Path, b: &Path, files: &[String]) -> Vec<String> {
    files
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .cloned()
        .collect()
}

fn pipeline_determinism(c: &mut Checks) {
    let d = tempfile::tempdir().unwrap();
    let utts = corpus(d.path(), 30, 9);
    // distorted labels so predictions differ from the truth
    let shifted: Vec<Utterance> = utts
        .iter()
        .map(|u| {
            let l = u.labels.unwrap();
            Utterance {
                labels: Some(ser_probe_core::EmotionTriple::new(0.7 * l.arousal + 0.2, 1.0 - l.valence, l.dominance * l.dominance).unwrap()),
                ..u.clone()
            }
        })
        .collect();
    let mut p1_files = vec!["ccc.json".to_string(), "ccc.tsv".into(), "transcripts.tsv".into(), "manifest.jsonl".into(), "flagged.tsv".into()];
    for v in [ModelVariant::Finetuned, ModelVariant::Frozen] {
        for cond in ser_probe_harness::pipeline::Condition::ALL {
            p1_files.push(predictions_file(v, cond));
        }
    }
    let r = probing1(d.path(), "p1a", &utts, || MockAdapter::ser_truth(&shifted));
    probing1(d.path(), "p1b", &utts, || MockAdapter::ser_truth(&shifted));
    let diff = same_files(&d.path().join("p1a"), &d.path().join("p1b"), &p1_files);
    c.check("probing 1 byte-identical across runs", diff.is_empty(), format!("{} files compared; differing: {diff:?}", p1_files.len()));

    let run = d.path().join("p1a");
    let manifest = load_manifest(run.join("manifest.jsonl")).unwrap();
    let mut worst: f64 = 0.0;
    for cell in &r.cells {
        let preds: Vec<PredictionRecord> = fs::read_to_string(run.join(predictions_file(cell.variant, cell.condition)))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let truth = preds
            .iter()
            .map(|p| manifest.iter().find(|u| u.id == p.utterance_id).unwrap().labels.unwrap().get(cell.dimension))
            .collect();
        let pred = preds.iter().map(|p| p.prediction.get(cell.dimension)).collect();
        let direct = ccc(&PairedSeries::new(truth, pred).unwrap()).value;
        worst = worst.max((direct - cell.ccc).abs());
    }
    c.check("cells equal ccc on persisted predictions", worst == 0.0, format!("{} cells, max |Δ| = {worst:e}", r.cells.len()));

    let truth = probing1(d.path(), "truth", &utts, || MockAdapter::ser_truth(&utts));
    let ones = truth.cells.iter().all(|c| c.ccc == 1.0);
    c.check("ground-truth mock → 1.0 in every cell", ones && truth.cells.len() == 12, format!("{} cells", truth.cells.len()));
    let flat = probing1(d.path(), "flat", &utts, || MockAdapter::new(MockBehavior::Ser(SerMode::Constant(0.5))));
    let zeros = flat.cells.iter().all(|c| c.ccc == 0.0);
    c.check("constant mock → 0.0 in every cell", zeros && flat.cells.len() == 12, format!("{} cells", flat.cells.len()));

    let suite = build_sentiment_suite(&Lexicon::default(), &SuiteOptions::default()).unwrap();
    let mode = SerMode::Polarity { jitter: 0.05 };
    probing2(d.path(), "p2a", &suite, mode.clone());
    probing2(d.path(), "p2b", &suite, mode);
    let p2_files: Vec<String> = ["suite.jsonl", "case_predictions.jsonl", "groups.json", "groups.tsv", "comparisons.json", "comparisons.tsv", "flagged.tsv"]
        .map(String::from)
        .to_vec();
    let diff = same_files(&d.path().join("p2a"), &d.path().join("p2b"), &p2_files);
    c.check("probing 2 byte-identical across runs", diff.is_empty(), format!("{} files compared; differing: {diff:?}", p2_files.len()));
}

fn probing2_logic(c: &mut Checks) {
    let d = tempfile::tempdir().unwrap();
    let suite = build_sentiment_suite(&Lexicon::default(), &SuiteOptions::default()).unwrap();
    let r = probing2(d.path(), "polarity", &suite, SerMode::Polarity { jitter: 0.05 });
    let mut lines = Vec::new();
    let mut all = true;
    for v in [ModelVariant::Finetuned, ModelVariant::Frozen] {
        for cat in [Category::WordIsolated, Category::WordInContext] {
            for (a, b) in [(Polarity::Negative, Polarity::Neutral), (Polarity::Neutral, Polarity::Positive)] {
                let cmp = r.comparison(v, Dimension::Valence, GroupKey::new(cat, a), GroupKey::new(cat, b)).unwrap();
                let o = cmp.outcome.unwrap();
                all &= o.significant;
                lines.push(format!("{v}/{}/{a}-{b} p={:.1e}", cat.as_str(), o.p_value));
            }
        }
    }
    c.check("polarity mock: neg–neu and neu–pos significant (valence)", all, lines.join(", "));

    let r = probing2(d.path(), "constant", &suite, SerMode::Constant(0.5));
    let tested: Vec<_> = r.comparisons.iter().filter(|c| c.outcome.is_some()).collect();
    let none = tested.iter().all(|c| !c.outcome.unwrap().significant);
    c.check(
        "constant mock: no comparison significant",
        none && !tested.is_empty(),
        format!("{} comparisons tested", tested.len()),
    );
}
