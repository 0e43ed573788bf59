//! Acceptance suite. Runs every criterion in sequence, prints one line each,
//! and exits non-zero if any fails. Sequential on purpose: each criterion's
//! runtime budget is measured without the others competing for cores.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use tempfile::TempDir;
use trackfuse_core::batch::{summarize, sweep, with_random_failure_rates};
use trackfuse_core::detector::{
    correspondence_test, detection_threshold, normal_cdf, FeatureMatchStats, MatchVerdict,
    RejectReason,
};
use trackfuse_core::fusion::{DetectionOutcome, FusionConfig, FusionEngine, FusionOptions};
use trackfuse_core::hmm::{
    estimate_beta_per_state, forward_pass, infer, reestimate_transitions, train, AnnotatedHistory,
    Annotation, BetaShape, HmmParams, ObservableLayout, ObservableModel, ObservationFrame,
    StateIndex, StateSpace, TrainOptions, TransitionMatrix, TransitionPrior, OBSERVABLE_EPS,
};
use trackfuse_core::report::run_trace;
use trackfuse_core::simulator::{
    brute_force, brute_force_filtered, simulate, ScenarioConfig, SimError,
};
use trackfuse_core::trace::TraceFile;
use trackfuse_core::Execution;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    check(took < budget, || {
        format!("took {took:.2?}, budget {budget:?}")
    })?;
    Ok(took)
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, sparsity: f64) -> TransitionMatrix {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j || rng.random::<f64>() >= sparsity {
                data[i * n + j] = rng.random_range(0.05..1.0);
            }
        }
    }
    TransitionMatrix::normalized(n, data).unwrap()
}

fn random_shapes(
    rng: &mut ChaCha8Rng,
    states: usize,
    dims: usize,
    lo: f64,
    hi: f64,
) -> ObservableModel {
    let rows = (0..states)
        .map(|_| {
            (0..dims)
                .map(|_| {
                    BetaShape::new(rng.random_range(lo..hi), rng.random_range(lo..hi)).unwrap()
                })
                .collect()
        })
        .collect();
    ObservableModel::from_rows(rows).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut valid, mut impossible, mut worst) = (0usize, 0usize, 0.0f64);
    while valid < 200 {
        let n = rng.random_range(1..=2);
        let k = rng.random_range(1..=2);
        let states = 1 << n;
        let params = HmmParams::new(
            random_stochastic(&mut rng, states, 0.25),
            random_shapes(&mut rng, states, n * k, 0.4, 6.0),
        )
        .unwrap();
        let len = rng.random_range(1..=6);
        let frames: Vec<ObservationFrame> = (0..len)
            .map(|_| {
                ObservationFrame::new((0..n * k).map(|_| rng.random_range(0.01..0.99)).collect())
                    .unwrap()
            })
            .collect();
        let mut annotations = Vec::new();
        for t in 0..len {
            if rng.random::<f64>() < 0.35 {
                annotations.push(if rng.random::<f64>() < 0.2 {
                    Annotation::unlabeled(t)
                } else {
                    Annotation::observed(t, StateIndex(rng.random_range(0..states)))
                });
            }
        }
        let history = AnnotatedHistory::from_parts(frames, annotations).unwrap();
        let bf = match brute_force(&params, &history) {
            Ok(bf) => bf,
            Err(SimError::ZeroLikelihood) => {
                let f = forward_pass(&params, &history).unwrap();
                check(f.total_likelihood() == f64::NEG_INFINITY, || {
                    "forward pass missed an impossible annotation".into()
                })?;
                impossible += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        let cache = infer(&params, &history).map_err(|e| e.to_string())?;
        let dll = (cache.total_likelihood() - bf.log_likelihood).abs();
        check(dll <= 1e-9, || {
            format!("likelihood off by {dll:e} in log space")
        })?;
        worst = worst.max(dll);
        let filtered = brute_force_filtered(&params, &history).map_err(|e| e.to_string())?;
        for (t, filt) in filtered.iter().enumerate() {
            let pairs = [
                (
                    "smoothed",
                    cache.smoothed_posterior(t).unwrap().to_vec(),
                    bf.smoothed[t].clone(),
                ),
                (
                    "filtered",
                    cache.filter_posterior(t).unwrap().to_vec(),
                    filt.clone(),
                ),
            ];
            let pairwise = bf.pairwise[t]
                .as_ref()
                .map(|xi| ("pairwise", cache.pairwise_posterior(t).unwrap(), xi.clone()));
            check(pairwise.is_some() == cache.is_transition_time(t), || {
                format!("transition times disagree at {t}")
            })?;
            for (what, got, want) in pairs.into_iter().chain(pairwise) {
                for (g, w) in got.iter().zip(&want) {
                    let e = rel_err(*g, *w);
                    worst = worst.max(e);
                    check(e <= 1e-9, || {
                        format!("{what} posterior at t={t}: {g} vs {w}")
                    })?;
                }
            }
        }
        valid += 1;
    }
    let took = within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "{valid} instances (+{impossible} impossible, agreed), max relative error {worst:.1e}, {took:.2?}"
    ))
}

/// Samples a chain with detector resets: at each annotated frame the state is
/// recorded and the next frame restarts in state 0. Also returns the path.
fn sample_history(
    rng: &mut ChaCha8Rng,
    truth: &HmmParams,
    len: usize,
    annotated: &[usize],
) -> (AnnotatedHistory, Vec<usize>) {
    let states = truth.num_states();
    let dists: Vec<Vec<Beta<f64>>> = (0..states)
        .map(|i| {
            truth
                .emissions
                .state_shapes(i)
                .iter()
                .map(|s| Beta::new(s.p(), s.q()).unwrap())
                .collect()
        })
        .collect();
    let mut frames = Vec::with_capacity(len);
    let mut annotations = Vec::new();
    let mut path = Vec::with_capacity(len);
    let mut state = 0;
    for t in 0..len {
        if t > 0 && !annotated.contains(&(t - 1)) {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let row = truth.transitions.row(state);
            state = (0..states)
                .find(|&j| {
                    acc += row[j];
                    u < acc
                })
                .unwrap_or(states - 1);
        } else if t > 0 {
            state = 0;
        }
        let x = dists[state]
            .iter()
            .map(|d| d.sample(rng).clamp(OBSERVABLE_EPS, 1.0 - OBSERVABLE_EPS))
            .collect();
        frames.push(ObservationFrame::new(x).unwrap());
        path.push(state);
        if annotated.contains(&t) {
            annotations.push(Annotation::observed(t, StateIndex(state)));
        }
    }
    (
        AnnotatedHistory::from_parts(frames, annotations).unwrap(),
        path,
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut steps, mut worst_drop) = (0usize, 0.0f64);
    for run in 0..100 {
        let n = rng.random_range(1..=3);
        let layout = ObservableLayout::uniform(n, 1);
        let initial = HmmParams::initial(&layout).unwrap();
        let states = 1 << n;
        // The generator shares the initial model's zero first column so every
        // annotated state is reachable.
        let mut a = random_stochastic(&mut rng, states, 0.0).as_slice().to_vec();
        for i in 1..states {
            a[i * states] = 0.0;
        }
        let truth = HmmParams::new(
            TransitionMatrix::normalized(states, a).unwrap(),
            random_shapes(&mut rng, states, n, 0.7, 8.0),
        )
        .unwrap();
        let len = rng.random_range(20..=200);
        let mut annotated: Vec<usize> = (0..rng.random_range(1..=4))
            .map(|_| rng.random_range(0..len))
            .collect();
        annotated.sort_unstable();
        annotated.dedup();
        let (history, _) = sample_history(&mut rng, &truth, len, &annotated);
        let options = if run % 2 == 0 {
            TrainOptions {
                max_iters: 10,
                ..TrainOptions::default()
            }
        } else {
            TrainOptions {
                max_iters: 10,
                transition_prior: Some(TransitionPrior {
                    matrix: initial.transitions.clone(),
                    weight: 20.0,
                }),
                min_state_mass: 5.0,
                ..TrainOptions::default()
            }
        };
        let report = train(&initial, &history, &options).map_err(|e| format!("run {run}: {e}"))?;
        for w in report.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
            check(w[1] >= w[0] - 1e-12, || {
                format!("run {run}: {} -> {}", w[0], w[1])
            })?;
        }
        let recomputed = forward_pass(&report.params, &history)
            .unwrap()
            .total_likelihood();
        let last = *report.log_likelihoods.last().unwrap();
        check(rel_err(recomputed, last) < 1e-12, || {
            format!("run {run}: reported {last}, recomputed {recomputed}")
        })?;
        steps += report.iterations();
    }
    let took = within_budget(start, Duration::from_secs(30))?;
    Ok(format!(
        "100 runs, {steps} GEM iterations, largest step-down {:.1e}, {took:.2?}",
        worst_drop.max(0.0)
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let dist = Beta::new(2.0, 5.0).unwrap();
    let frames: Vec<ObservationFrame> = (0..10_000)
        .map(|_| ObservationFrame::new(vec![dist.sample(&mut rng)]).unwrap())
        .collect();
    let w = [1.0, 0.0];
    let posts: Vec<&[f64]> = vec![&w[..]; frames.len()];
    let prev = ObservableModel::filled(2, 1, BetaShape::new(1.0, 1.0).unwrap());
    let est = estimate_beta_per_state(&frames, &posts, &prev).map_err(|e| e.to_string())?;
    let s = est.shape(0, 0);
    check(
        (1.8..=2.2).contains(&s.p()) && (4.5..=5.5).contains(&s.q()),
        || format!("recovered ({}, {})", s.p(), s.q()),
    )?;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let shape =
            BetaShape::new(rng.random_range(0.05..50.0), rng.random_range(0.05..50.0)).unwrap();
        let back = BetaShape::from_moments(shape.mean(), shape.variance())
            .ok_or_else(|| format!("moments of {shape:?} rejected"))?;
        let e = rel_err(back.p(), shape.p()).max(rel_err(back.q(), shape.q()));
        worst = worst.max(e);
        check(e <= 1e-10, || format!("{shape:?} came back as {back:?}"))?;
    }
    let took = within_budget(start, Duration::from_secs(5))?;
    Ok(format!(
        "Beta(2,5) -> ({:.3}, {:.3}); 50 round trips, max relative error {worst:.1e}, {took:.2?}",
        s.p(),
        s.q()
    ))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let space = StateSpace::new(2).unwrap();
    let states = space.len();
    let mut data = vec![0.0; states * states];
    for i in 0..states {
        let stay = rng.random_range(0.7..0.95);
        let rest: Vec<f64> = (0..states - 1)
            .map(|_| rng.random_range(0.1..1.0))
            .collect();
        let total: f64 = rest.iter().sum();
        let mut others = rest.iter();
        for j in 0..states {
            data[i * states + j] = if i == j {
                stay
            } else {
                (1.0 - stay) * others.next().unwrap() / total
            };
        }
    }
    let generator = TransitionMatrix::normalized(states, data).unwrap();
    let sharp = |correct: bool| {
        if correct {
            BetaShape::new(60.0, 2.0).unwrap()
        } else {
            BetaShape::new(2.0, 60.0).unwrap()
        }
    };
    let emissions = ObservableModel::from_rows(
        space
            .iter()
            .map(|s| (0..2).map(|c| sharp(space.is_correct(s, c))).collect())
            .collect(),
    )
    .unwrap();
    let truth = HmmParams::new(generator, emissions.clone()).unwrap();
    let len = 5000;
    let (history, path) = sample_history(&mut rng, &truth, len, &[]);
    let mut counts = vec![0.0; states * states];
    for w in path.windows(2) {
        counts[w[0] * states + w[1]] += 1.0;
    }
    let empirical = TransitionMatrix::normalized(states, counts).unwrap();
    let uniform = TransitionMatrix::normalized(states, vec![1.0; states * states]).unwrap();
    let start_params = HmmParams::new(uniform.clone(), emissions).unwrap();
    let cache = infer(&start_params, &history).map_err(|e| e.to_string())?;
    let estimate = reestimate_transitions(&cache, &uniform).map_err(|e| e.to_string())?;
    let worst = estimate
        .as_slice()
        .iter()
        .zip(empirical.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(worst <= 0.05, || format!("largest deviation {worst}"))?;
    let took = within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "T=5000, n=2, largest |a - empirical| = {worst:.1e}, {took:.2?}"
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let base = ScenarioConfig::default();
    check(
        base.channels.len() == 3
            && base.frames == 2000
            && base.detector.recall == 0.30
            && base.detector.fp_rate == 0.0046,
        || "default scenario drifted from the criterion's settings".into(),
    )?;
    let configs: Vec<ScenarioConfig> = (0..50)
        .map(|seed| with_random_failure_rates(&base, seed, 0.002..0.01))
        .collect();
    let results = sweep(&configs, Execution::default()).map_err(|e| e.to_string())?;
    let s = summarize(&results);
    let detail = format!(
        "median engine {:.4} vs best channel {:.4}, engine >= best on {}/{} seeds",
        s.median_engine, s.median_best_channel, s.wins, s.scenarios
    );
    check(
        s.median_engine >= s.median_best_channel && s.win_fraction() >= 0.70,
        || detail.clone(),
    )?;
    let took = within_budget(start, Duration::from_secs(120))?;
    Ok(format!("{detail}, {took:.2?}"))
}

fn criterion_6() -> Outcome {
    let (mut majority_fps, mut rejected, mut identical) = (0usize, 0usize, 0usize);
    for seed in 0..6 {
        let mut cfg = ScenarioConfig {
            frames: 1500,
            seed: 600 + seed,
            ..Default::default()
        };
        cfg.detector.fp_rate = 0.05;
        let trace = simulate(&cfg).map_err(|e| e.to_string())?.trace;
        let mut engine = FusionEngine::new(FusionConfig {
            layout: trace.header.layout.clone(),
            options: cfg.engine.clone(),
        })
        .map_err(|e| e.to_string())?;
        for r in &trace.records {
            let reports = r.reports();
            let Some(det) = r.detection.as_ref() else {
                engine
                    .step(&reports, &r.shared, None)
                    .map_err(|e| e.to_string())?;
                continue;
            };
            let mut twin = engine.clone();
            let plain = twin
                .step(&reports, &r.shared, None)
                .map_err(|e| e.to_string())?;
            let out = engine
                .step(&reports, &r.shared, Some(&det.bbox))
                .map_err(|e| e.to_string())?;
            if out.detection == DetectionOutcome::Rejected {
                let same_bits = engine
                    .posterior()
                    .iter()
                    .zip(twin.posterior())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                let mut out_plain = out.clone();
                out_plain.detection = DetectionOutcome::None;
                check(engine == twin && same_bits && out_plain == plain, || {
                    format!(
                        "seed {}: rejection at frame {} changed engine state",
                        cfg.seed, r.frame
                    )
                })?;
                identical += 1;
            }
            let correct = r
                .channels
                .iter()
                .filter(|c| c.correct == Some(true))
                .count();
            if det.tp == Some(false) && 2 * correct > r.channels.len() {
                majority_fps += 1;
                if out.detection == DetectionOutcome::Rejected {
                    rejected += 1;
                }
            }
        }
    }
    let rate = rejected as f64 / majority_fps.max(1) as f64;
    let detail = format!(
        "{rejected}/{majority_fps} false positives under a true majority rejected ({:.1}%), {identical} rejections left the engine bit-identical",
        100.0 * rate
    );
    check(majority_fps >= 100 && rate >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    for (features, want) in [(100, 5.0), (500, 10.0), (0, 5.0), (200, 6.0)] {
        let got = detection_threshold(features);
        check(got == want, || {
            format!("detection_threshold({features}) = {got}, want {want}")
        })?;
    }
    let stats = FeatureMatchStats::new(10.0, 1.0).unwrap();
    // The CDF equals 0.1% at z = -3.0902323061678132.
    let boundary = 10.0 - 3.090_232_306_167_813;
    let table = [
        (4.0, 10.0, MatchVerdict::Accept),
        (4.0, 5.0, MatchVerdict::Reject(RejectReason::Ratio)),
        (3.9, 5.0, MatchVerdict::Accept),
        (4.0, 4.9, MatchVerdict::Reject(RejectReason::Ratio)),
        (boundary - 1e-6, 100.0, MatchVerdict::Accept),
        (
            boundary + 1e-6,
            100.0,
            MatchVerdict::Reject(RejectReason::Significance),
        ),
        (9.0, 100.0, MatchVerdict::Reject(RejectReason::Significance)),
        (
            4.0,
            0.0,
            MatchVerdict::Reject(RejectReason::ZeroBackgroundDistance),
        ),
    ];
    for (fg, bg, want) in table {
        let got = correspondence_test(fg, bg, &stats);
        check(got == want, || {
            format!("correspondence_test({fg}, {bg}) = {got:?}, want {want:?}")
        })?;
    }
    let mut worst = 0.0f64;
    for (mu, sigma) in [(0.0, 1.0), (10.0, 2.5), (-3.0, 0.1)] {
        let p = normal_cdf(mu - 3.0 * sigma, mu, sigma).map_err(|e| e.to_string())?;
        worst = worst.max((p - 0.00135).abs());
        check((p - 0.00135).abs() <= 1e-5, || {
            format!("normal_cdf(mu - 3 sigma) = {p}")
        })?;
    }
    Ok(format!(
        "thresholds, {}-row correspondence table, normal_cdf(mu - 3 sigma) within {worst:.1e} of 0.00135",
        table.len()
    ))
}

fn trackfuse(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_trackfuse"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!(
            "trackfuse {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn criterion_8() -> Outcome {
    let cfg = ScenarioConfig {
        frames: 500,
        seed: 808,
        ..Default::default()
    };
    let a = simulate(&cfg)
        .map_err(|e| e.to_string())?
        .trace
        .to_json_lines();
    let b = simulate(&cfg)
        .map_err(|e| e.to_string())?
        .trace
        .to_json_lines();
    check(a == b, || "same seed produced different traces".into())?;
    let parsed = TraceFile::parse(&a).map_err(|e| e.to_string())?;
    check(parsed.to_json_lines() == a, || {
        "trace round trip is not byte-identical".into()
    })?;
    let r1 = run_trace(&parsed, &FusionOptions::default(), None).map_err(|e| e.to_string())?;
    let r2 = run_trace(&parsed, &FusionOptions::default(), None).map_err(|e| e.to_string())?;
    check(r1 == r2, || "run_trace is not deterministic".into())?;

    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let d = dir.path();
    for name in ["a", "b"] {
        trackfuse(
            &[
                "simulate",
                "-o",
                &format!("{name}.jsonl"),
                "--frames",
                "400",
                "--seed",
                "8",
            ],
            d,
        )?;
        trackfuse(
            &[
                "run",
                &format!("{name}.jsonl"),
                "-o",
                &format!("{name}.csv"),
                "--summary",
                &format!("{name}.json"),
            ],
            d,
        )?;
    }
    let read = |f: &str| fs::read(d.join(f)).map_err(|e| e.to_string());
    check(read("a.jsonl")? == read("b.jsonl")?, || {
        "simulate output differs between runs".into()
    })?;
    check(read("a.csv")? == read("b.csv")?, || {
        "run report CSV differs between runs".into()
    })?;
    check(read("a.json")? == read("b.json")?, || {
        "run summary differs between runs".into()
    })?;
    Ok("seeded traces, trace round trip, and run reports are byte-identical".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", criterion_1),
        ("GEM monotonicity", criterion_2),
        ("beta moment recovery", criterion_3),
        ("transition recovery", criterion_4),
        ("fusion dominance", criterion_5),
        ("gate correctness", criterion_6),
        ("detector vectors", criterion_7),
        ("determinism and round trip", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
