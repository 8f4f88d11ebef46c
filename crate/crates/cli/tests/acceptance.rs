//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use mural_cli::config::Config;
use mural_cli::service::ServiceSettings;
use mural_core::active::{run_simulated, score_detections, write_transcript, AnnotationSet, SessionConfig, Simulation};
use mural_core::detect::{detect, prominence};
use mural_core::discrepancy::normal_discrepancy_raw;
use mural_core::eval::match_points;
use mural_core::init::{init_threshold, InitThreshold};
use mural_core::optimize::{evaluate, optimize, SearchSpace};
use mural_core::signal_io::standardize;
use mural_core::synth::{generate, ChangeKind, SynthSpec};
use mural_core::wavelet::{dwt_step, mdwd, WaveletFilters};
use mural_core::{Detector, DetectorConfig, FeatureMatrix, Hyperparams, LabelSet, Ridge, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; only used to make test inputs.
    let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = r.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn prominence_homogeneity() -> Outcome {
    let t = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(3..400);
        let f: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let base = prominence(&f);
        for lambda in [1e-3, 0.31, 1.0, 17.0, 1e3] {
            let scaled: Vec<f64> = f.iter().map(|v| lambda * v).collect();
            let p = prominence(&scaled);
            for (a, b) in p.iter().zip(&base) {
                worst = worst.max((a - lambda * b).abs() / (lambda * max));
            }
        }
    }
    let el = t.elapsed();
    outcome(worst <= 1e-9 && within(el, 5.0), format!("max rel. deviation {worst:.2e}, {el:.2?}"))
}

fn rescale_invariance() -> Outcome {
    let t = Instant::now();
    let mut r = rng(2);
    let mut failures = 0;
    let mut checked = 0;
    for _ in 0..100 {
        let k = r.random_range(1..7);
        let n = r.random_range(20..500);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| r.random::<f64>().powi(3) * 10.0).collect()).collect();
        let f = FeatureMatrix::from_rows(rows).unwrap();
        let weights: Vec<f64> = (0..k).map(|_| r.random_range(0.0..2.0)).collect();
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let probe = Hyperparams::new(weights.clone(), 1.0).unwrap();
        let (score, _) = detect(&f, &probe).unwrap();
        // Tie guard: keep the threshold away from every prominence value.
        let zeta = loop {
            let z = r.random_range(0.01..score.max().max(0.02));
            if score.prominent.iter().all(|&p| (p - z).abs() > 1e-9 * z) {
                break z;
            }
        };
        let params = Hyperparams::new(weights, zeta).unwrap();
        let (_, base) = detect(&f, &params).unwrap();
        for lambda in [1e-3, 0.31, 17.0, 1e3] {
            let (_, d) = detect(&f, &params.scaled(lambda)).unwrap();
            checked += 1;
            if d != base {
                failures += 1;
            }
        }
    }
    let el = t.elapsed();
    outcome(failures == 0 && within(el, 10.0), format!("{failures}/{checked} mismatches, {el:.2?}"))
}

fn brute_force_step(x: &[f64], filter: &[f64]) -> Vec<f64> {
    let n = x.len();
    let full: Vec<f64> = (0..n)
        .map(|j| {
            filter
                .iter()
                .enumerate()
                .map(|(k, f)| f * x[(j + n * filter.len() - k) % n])
                .sum()
        })
        .collect();
    full.into_iter().step_by(2).collect()
}

fn wavelet_correctness() -> Outcome {
    let t = Instant::now();
    let filters = WaveletFilters::db2();
    let mut r = rng(3);

    let constant = TimeSeries::from_channels(vec![vec![3.7; 1024], vec![-0.2; 1024]]).unwrap();
    let bands = mdwd(&constant, 5, &filters).unwrap();
    let max_detail = bands.details.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut energy_err = 0.0f64;
    let mut oracle_err = 0.0f64;
    for _ in 0..100 {
        let n = 2 * r.random_range(2..1000);
        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut r)).collect();
        let (a, d) = dwt_step(std::slice::from_ref(&x), &filters).unwrap();
        let e_in: f64 = x.iter().map(|v| v * v).sum();
        let e_out: f64 = a[0].iter().chain(&d[0]).map(|v| v * v).sum();
        energy_err = energy_err.max((e_out - e_in).abs() / e_in);
        let a_ref = brute_force_step(&x, &filters.low_pass);
        let d_ref = brute_force_step(&x, &filters.high_pass);
        for (u, v) in a[0].iter().chain(&d[0]).zip(a_ref.iter().chain(&d_ref)) {
            oracle_err = oracle_err.max((u - v).abs());
        }
    }
    // Multi-level energy on lengths divisible by 2^K.
    for _ in 0..20 {
        let n = 32 * r.random_range(4..64);
        let x = TimeSeries::from_channels(vec![(0..n).map(|_| gaussian(&mut r)).collect()]).unwrap();
        let e_in: f64 = x.channel(0).iter().map(|v| v * v).sum();
        let e_out = mdwd(&x, 5, &filters).unwrap().energy();
        energy_err = energy_err.max((e_out - e_in).abs() / e_in);
    }
    let el = t.elapsed();
    let pass = max_detail <= 1e-12 && energy_err <= 1e-8 && oracle_err <= 1e-10 && within(el, 10.0);
    outcome(
        pass,
        format!("constant details {max_detail:.1e}, energy rel. err {energy_err:.1e}, oracle err {oracle_err:.1e}, {el:.2?}"),
    )
}

fn discrepancy_nonnegative() -> Outcome {
    let t = Instant::now();
    let mut r = rng(4);
    let mut windows = 0usize;
    let mut min = f64::INFINITY;
    for d in 1..=3usize {
        let mut done = 0;
        while done < 10_000 {
            let w = r.random_range(2..25);
            let n = 2 * w + r.random_range(1..200);
            let scale = 10f64.powf(r.random_range(-3.0..3.0));
            let kind = r.random_range(0..3);
            let channels: Vec<Vec<f64>> = (0..d)
                .map(|_| {
                    (0..n)
                        .map(|i| match kind {
                            0 => scale * gaussian(&mut r),
                            // Heavy tails.
                            1 => scale * gaussian(&mut r) / r.random::<f64>().max(1e-3),
                            // Few distinct values: nearly singular windows.
                            _ => scale * ((i / r.random_range(1..8)) % 3) as f64,
                        })
                        .collect()
                })
                .collect();
            let s = normal_discrepancy_raw(&channels, w, &Ridge::default()).unwrap();
            for v in &s[w - 1..n - w] {
                min = min.min(*v);
            }
            done += n - 2 * w + 1;
        }
        windows += done;
    }
    let el = t.elapsed();
    outcome(min >= -1e-9 && within(el, 10.0), format!("{windows} windows, min score {min:.3e}, {el:.2?}"))
}

fn easy_spec(seed: u64) -> SynthSpec {
    SynthSpec::mean_shift(4096, 2, 5, 3.0, seed)
}

fn hard_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        kinds: vec![ChangeKind::Mean, ChangeKind::Variance],
        ..SynthSpec::mean_shift(4096, 2, 8, 1.5, seed)
    }
}

fn detection_quality() -> Outcome {
    let t = Instant::now();
    let det = Detector::new(DetectorConfig::new(4, 20));
    let mut total = 0.0;
    for seed in 0..20 {
        let (x, truth) = generate(&easy_spec(seed)).unwrap();
        let r = det.run(&standardize(&x)).unwrap();
        total += match_points(&r.detections.indices, truth.indices(), 20).f1;
    }
    let mean = total / 20.0;
    let el = t.elapsed();
    outcome(mean >= 0.8 && within(el, 60.0), format!("mean F1 {mean:.3} over 20 seeds, {el:.2?}"))
}

/// Mean F1 per query count over the hard synthetic seeds.
fn simulate_hard(init: InitThreshold, warmup: usize) -> (Vec<f64>, Duration) {
    let t = Instant::now();
    let seeds = 10;
    let mut mean = vec![0.0; 31];
    for seed in 0..seeds {
        let (x, truth) = generate(&hard_spec(seed)).unwrap();
        let mut dc = DetectorConfig::new(4, 20);
        dc.init = init;
        let mut sc = SessionConfig::new(20, 30, seed);
        sc.warmup = warmup;
        let sim = run_simulated(&standardize(&x), &truth, &dc, sc).unwrap();
        for (m, v) in mean.iter_mut().zip(&sim.curve) {
            *m += v.f1 / seeds as f64;
        }
    }
    (mean, t.elapsed())
}

fn early(curve: &[f64]) -> f64 {
    curve[1..=5].iter().sum::<f64>() / 5.0
}

fn active_learning_lift(base: &(Vec<f64>, Duration)) -> Outcome {
    let (c, el) = base;
    let lift = c[30] - c[0];
    outcome(
        lift >= 0.1 && within(*el, 300.0),
        format!("F1 {:.3} -> {:.3} (lift {lift:.3}), {el:.2?}", c[0], c[30]),
    )
}

fn warmup_ablation(base: &(Vec<f64>, Duration), no_warm: &(Vec<f64>, Duration)) -> Outcome {
    let (w, _) = base;
    let (nw, el) = no_warm;
    let (ew, enw) = (early(w), early(nw));
    let diff = (w[30] - nw[30]).abs();
    outcome(
        enw <= ew && diff <= 0.05 && within(base.1 + *el, 600.0),
        format!(
            "early F1 warmup=0 {enw:.3} vs warmup=10 {ew:.3}; final {:.3} vs {:.3} (|diff| {diff:.3})",
            nw[30], w[30]
        ),
    )
}

fn max_init_ablation(base: &(Vec<f64>, Duration), max_init: &(Vec<f64>, Duration)) -> Outcome {
    let (e, _) = base;
    let (m, el) = max_init;
    let (ee, em) = (early(e), early(m));
    let diff = (e[30] - m[30]).abs();
    outcome(
        ee >= em && diff <= 0.05 && within(base.1 + *el, 600.0),
        format!("early F1 elbow {ee:.3} vs max {em:.3}; final {:.3} vs {:.3} (|diff| {diff:.3})", e[30], m[30]),
    )
}

/// Best (cardinality, -total distance) over all one-to-one matchings.
fn exhaustive_matching(preds: &[usize], truths: &[usize], eta: usize) -> (usize, usize) {
    fn go(k: usize, preds: &[usize], truths: &[usize], used: &mut Vec<bool>, eta: usize) -> (usize, usize) {
        if k == preds.len() {
            return (0, 0);
        }
        let mut best = go(k + 1, preds, truths, used, eta);
        for j in 0..truths.len() {
            let dist = preds[k].abs_diff(truths[j]);
            if used[j] || dist > eta {
                continue;
            }
            used[j] = true;
            let (c, d) = go(k + 1, preds, truths, used, eta);
            used[j] = false;
            let cand = (c + 1, d + dist);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                best = cand;
            }
        }
        best
    }
    go(0, preds, truths, &mut vec![false; truths.len()], eta)
}

fn matcher_oracle() -> Outcome {
    let t = Instant::now();
    let mut r = rng(5);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let span = r.random_range(10..80);
        let draw = |r: &mut ChaCha8Rng| -> Vec<usize> {
            let mut v: Vec<usize> = (0..r.random_range(0..=8)).map(|_| r.random_range(0..span)).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let preds = draw(&mut r);
        let truths = draw(&mut r);
        let eta = r.random_range(0..12);
        let report = match_points(&preds, &truths, eta);
        let dist: usize = report.matches.iter().map(|&(p, q)| p.abs_diff(q)).sum();
        if (report.tp, dist) != exhaustive_matching(&preds, &truths, eta) {
            mismatches += 1;
        }
    }
    let el = t.elapsed();
    outcome(mismatches == 0 && within(el, 10.0), format!("{mismatches}/1000 mismatches, {el:.2?}"))
}

fn optimizer_contracts() -> Outcome {
    let t = Instant::now();
    let mut r = rng(6);
    let mut worse = 0;
    let mut nondeterministic = 0;
    let mut not_exhaustive = 0;
    for trial in 0..20u64 {
        let n = 300;
        let k = 3;
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| r.random::<f64>().powi(2)).collect()).collect();
        let f = FeatureMatrix::from_rows(rows).unwrap();
        let mut labels = AnnotationSet::new(n);
        for w in 0..5 {
            let start = w * 60 + r.random_range(0..20);
            let pos: Vec<usize> = (0..r.random_range(0..3)).map(|_| start + r.random_range(0..30)).collect();
            labels.add(start, start + 30, &pos).unwrap();
        }
        let inc = Hyperparams::new(vec![1.0; k], r.random_range(0.1..1.0)).unwrap();
        let eta = 5;
        let a = optimize(&f, &labels, &SearchSpace::default(), &inc, eta, trial).unwrap();
        let b = optimize(&f, &labels, &SearchSpace::default(), &inc, eta, trial).unwrap();
        if a.objective.loss > evaluate(&inc, &f, &labels, eta).unwrap().loss {
            worse += 1;
        }
        if a != b {
            nondeterministic += 1;
        }
        // Full budget on a 50-candidate space against a direct scan.
        let space = SearchSpace {
            grid_size: 50,
            evaluations: 50,
            ..SearchSpace::default()
        };
        let full = optimize(&f, &labels, &space, &inc, eta, trial).unwrap();
        let (s, _) = detect(&f, &inc).unwrap();
        let mut best = (evaluate(&inc, &f, &labels, eta).unwrap().loss, inc.clone());
        for c in space.candidates(k, space.threshold_bounds(&inc, s.max()), trial) {
            let loss = evaluate(&c, &f, &labels, eta).unwrap().loss;
            if loss < best.0 {
                best = (loss, c);
            }
        }
        if full.params != best.1 || full.objective.loss != best.0 {
            not_exhaustive += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        worse == 0 && nondeterministic == 0 && not_exhaustive == 0 && within(el, 30.0),
        format!("worse {worse}, nondeterministic {nondeterministic}, exhaustive mismatches {not_exhaustive} (20 problems), {el:.2?}"),
    )
}

fn elbow_initializer() -> Outcome {
    let t = Instant::now();
    // Steep drop from 2.5 to 0.9 over t in [0, 0.1], then a shallow tail to 0.1.
    let n = 1001;
    let profile: Vec<f64> = (0..n)
        .map(|m| {
            let t = m as f64 / (n - 1) as f64;
            if t <= 0.1 {
                2.5 - 16.0 * t
            } else {
                0.9 - 0.8 * (t - 0.1) / 0.9
            }
        })
        .collect();
    // Scores in time order are a permutation of the profile.
    let mut scores = profile.clone();
    let mut r = rng(7);
    for i in (1..n).rev() {
        scores.swap(i, r.random_range(0..=i));
    }
    let init = init_threshold(&scores);
    let t_star = init.t_star.unwrap_or(f64::NAN);
    let el = t.elapsed();
    outcome(
        (0.05..=0.15).contains(&t_star) && (0.85..=0.95).contains(&init.threshold) && within(el, 1.0),
        format!("t* {t_star:.3}, zeta0 {:.3}, {el:.2?}", init.threshold),
    )
}

fn performance() -> Outcome {
    let (x, truth) = generate(&SynthSpec {
        kinds: vec![ChangeKind::Mean, ChangeKind::Variance, ChangeKind::Frequency],
        ..SynthSpec::mean_shift(10_000, 3, 8, 2.0, 11)
    })
    .unwrap();
    let x = standardize(&x);
    let dc = DetectorConfig::new(5, 30);
    let t = Instant::now();
    let r = Detector::new(dc.clone()).run(&x).unwrap();
    let pipeline = t.elapsed();
    let t = Instant::now();
    let sim = run_simulated(&x, &truth, &dc, SessionConfig::new(30, 30, 0)).unwrap();
    let session = t.elapsed();
    outcome(
        within(pipeline, 2.0) && within(session, 30.0) && sim.session.queries_used() == 30,
        format!(
            "pipeline {pipeline:.2?} ({} detections), 30-query session {session:.2?}",
            r.detections.indices.len()
        ),
    )
}

fn transcript_text(sim: &Simulation) -> String {
    let mut buf = Vec::new();
    write_transcript(&sim.transcript, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

async fn http_session(base: &str, x: &TimeSeries, truth: &LabelSet, config: &Value) -> (String, Vec<f64>) {
    let client = reqwest::Client::new();
    let created: Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({"csv": common::csv_text(x), "config": config}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let id = created["id"].as_str().unwrap();
    let eta = config["eta"].as_u64().unwrap() as usize;
    let mut curve = vec![score_detections(
        &serde_json::from_value::<Vec<usize>>(created["detections"].clone()).unwrap(),
        truth.indices(),
        eta,
    )
    .f1];
    loop {
        let q: Value = client
            .get(format!("{base}/sessions/{id}/queries"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if q["status"] != "pending" {
            break;
        }
        for query in q["queries"].as_array().unwrap() {
            let (start, end) = (query["start"].as_u64().unwrap() as usize, query["end"].as_u64().unwrap() as usize);
            let confirmed: Vec<usize> = truth.indices().iter().copied().filter(|i| (start..=end).contains(i)).collect();
            let snap: Value = client
                .post(format!("{base}/sessions/{id}/queries/{}/labels", query["id"]))
                .json(&json!({ "confirmed": confirmed }))
                .send()
                .await
                .unwrap()
                .json()
                .await
                .unwrap();
            let det: Vec<usize> = serde_json::from_value(snap["detections"].clone()).unwrap();
            curve.push(score_detections(&det, truth.indices(), eta).f1);
        }
    }
    let transcript = client
        .get(format!("{base}/sessions/{id}/transcript"))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    (transcript, curve)
}

fn api_equivalence() -> Outcome {
    let t = Instant::now();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let server = runtime.block_on(common::start(ServiceSettings::default()));
    let mut identical = 0;
    let runs = 3;
    for seed in 0..runs {
        let (raw, truth) = generate(&hard_spec(seed)).unwrap();
        let config = Config {
            levels: 4,
            window: 20,
            eta: 20,
            budget: 30,
            seed,
            ..Config::default()
        };
        let local = run_simulated(&config.prepare(&raw), &truth, &config.detector_config(), config.session_config()).unwrap();
        let config_json = serde_json::to_value(&config).unwrap();
        let (transcript, curve) = runtime.block_on(http_session(&server.base, &raw, &truth, &config_json));
        let local_curve: Vec<f64> = local.curve.iter().map(|v| v.f1).collect();
        if transcript == transcript_text(&local) && curve == local_curve {
            identical += 1;
        }
    }
    drop(server);
    let el = t.elapsed();
    outcome(identical == runs, format!("{identical}/{runs} sessions bit-identical, {el:.2?}"))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let o = f();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    run("prominence homogeneity", &prominence_homogeneity);
    run("detections invariant under joint rescaling", &rescale_invariance);
    run("wavelet correctness", &wavelet_correctness);
    run("normal discrepancy non-negativity", &discrepancy_nonnegative);
    run("unsupervised detection quality", &detection_quality);
    let base = simulate_hard(InitThreshold::Elbow, 10);
    let no_warm = simulate_hard(InitThreshold::Elbow, 0);
    let max_init = simulate_hard(InitThreshold::Max, 10);
    run("active-learning lift", &|| active_learning_lift(&base));
    run("warm-up ablation", &|| warmup_ablation(&base, &no_warm));
    run("max-init ablation", &|| max_init_ablation(&base, &max_init));
    run("matcher equals exhaustive optimum", &matcher_oracle);
    run("optimizer contracts", &optimizer_contracts);
    run("elbow initializer", &elbow_initializer);
    run("performance budget", &performance);
    run("HTTP and in-process sessions agree", &api_equivalence);

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
