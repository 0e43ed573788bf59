//! Seed sweeps: many simulated scenarios, engine recall against each channel's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simulator::{channel_recalls, evaluate_trace, simulate, ScenarioConfig, SimError};
use crate::Execution;

/// Recall figures for one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub seed: u64,
    pub engine_recall: f64,
    pub channel_recalls: Vec<f64>,
    pub learning_invocations: usize,
}

impl ScenarioResult {
    pub fn best_channel(&self) -> f64 {
        self.channel_recalls.iter().copied().fold(0.0, f64::max)
    }

    pub fn engine_wins(&self) -> bool {
        self.engine_recall >= self.best_channel()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenarios: usize,
    pub median_engine: f64,
    pub median_best_channel: f64,
    /// Scenarios where the engine matched or beat its best channel.
    pub wins: usize,
}

impl SweepSummary {
    pub fn win_fraction(&self) -> f64 {
        self.wins as f64 / self.scenarios.max(1) as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub fn summarize(results: &[ScenarioResult]) -> SweepSummary {
    SweepSummary {
        scenarios: results.len(),
        median_engine: median(results.iter().map(|r| r.engine_recall).collect()),
        median_best_channel: median(results.iter().map(ScenarioResult::best_channel).collect()),
        wins: results.iter().filter(|r| r.engine_wins()).count(),
    }
}

/// `base` with its seed replaced and every channel's failure rate drawn
/// uniformly from `rates`. The rates come from a separate ChaCha8 stream of
/// the same seed, so they do not perturb the scenario's own draws.
pub fn with_random_failure_rates(
    base: &ScenarioConfig,
    seed: u64,
    rates: std::ops::Range<f64>,
) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut cfg = base.clone();
    cfg.seed = seed;
    for ch in &mut cfg.channels {
        ch.failure_rate = rng.random_range(rates.clone());
    }
    cfg
}

/// Simulates one scenario and scores the engine and every channel against
/// ground truth at IoU > 0.5.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult, SimError> {
    let sim = simulate(config)?;
    let truth = sim
        .trace
        .ground_truth()
        .expect("simulated traces carry ground truth");
    let boxes: Vec<_> = sim.outputs.iter().map(|o| o.bbox).collect();
    Ok(ScenarioResult {
        seed: config.seed,
        engine_recall: evaluate_trace(&boxes, &truth, 0.5)?.recall,
        channel_recalls: channel_recalls(&sim.trace, 0.5)?,
        learning_invocations: sim.learning_invocations,
    })
}

/// Runs every config, in parallel when `exec` allows. Results keep input order.
pub fn sweep(configs: &[ScenarioConfig], exec: Execution) -> Result<Vec<ScenarioResult>, SimError> {
    exec.map(configs, run_scenario).into_iter().collect()
}
