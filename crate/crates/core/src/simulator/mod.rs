//! Seeded synthetic scenarios for exercising the fusion engine without any
//! vision code, plus an enumeration oracle and recall evaluation.
//!
//! A scenario has one object moving along piecewise-linear waypoints, `n`
//! tracker channels and a detector. A correct channel reports the true box
//! plus Gaussian noise and draws its observables from its "correct" beta
//! shapes. At a per-frame onset probability it fails: its box jumps away and
//! then drifts at constant velocity with jitter, and its observables come from
//! the "failed" shapes. The detector fires a noisy true box with probability
//! `recall`; otherwise it emits a false positive with probability `fp_rate`,
//! placed uniformly in the image outside a zone twice the object's size.
//!
//! Generation is closed-loop: the engine runs alongside, and its
//! reinitialization directives move the channels (see [`ReinitPolicy`]).
//! All randomness comes from one ChaCha8 stream seeded with `seed`
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`), so a config reproduces its
//! trace exactly.
//!
//! The default statistics are chosen to exercise every code path, not to
//! mimic any particular real tracker.

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    iou, BBox, FusionConfig, FusionEngine, FusionError, FusionOptions, FusionOutput,
};
use crate::hmm::{BetaShape, HmmError, HmmParams, ObservableLayout, OBSERVABLE_EPS};
use crate::trace::{ChannelRecord, DetectionRecord, TraceFile, TraceHeader, TraceRecord};

pub use oracle::{
    brute_force, brute_force_filtered, brute_force_likelihood, brute_force_posterior, BruteForce,
    MAX_SEQUENCES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("{states}^{frames} state sequences exceed the enumeration cap")]
    OracleTooLarge { states: usize, frames: usize },
    #[error("every state sequence has zero probability")]
    ZeroLikelihood,
    #[error("{outputs} outputs for {truth} ground-truth frames")]
    LengthMismatch { outputs: usize, truth: usize },
}

/// One simulated tracker channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Observable shapes while the channel is correct, one per dimension.
    pub correct_shapes: Vec<BetaShape>,
    /// Observable shapes while failed; same length as `correct_shapes`.
    pub fail_shapes: Vec<BetaShape>,
    /// Per-frame probability that a correct channel fails.
    pub failure_rate: f64,
    /// When set, a failed channel only recovers through reinitialization.
    pub recovery_only_on_reinit: bool,
    /// Per-frame spontaneous recovery probability otherwise.
    pub recovery_rate: f64,
    /// Standard deviation of box noise while correct, in pixels.
    pub noise: f64,
    /// Displacement at failure onset, as a multiple of the object size.
    pub failure_jump: f64,
    /// Drift speed while failed, pixels per frame.
    pub drift_speed: f64,
    /// Standard deviation of the per-frame drift jitter, in pixels.
    pub drift_jitter: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let shape = |p, q| BetaShape::new(p, q).expect("positive literals");
        Self {
            correct_shapes: vec![shape(5.0, 2.0), shape(4.0, 2.0), shape(6.0, 3.0)],
            fail_shapes: vec![shape(2.0, 5.0), shape(2.0, 3.0), shape(3.0, 5.0)],
            failure_rate: 0.005,
            recovery_only_on_reinit: true,
            recovery_rate: 0.0,
            noise: 2.0,
            failure_jump: 0.6,
            drift_speed: 1.5,
            drift_jitter: 1.0,
        }
    }
}

/// An observable shared by all channels, e.g. a global template score.
/// Its shape depends on whether a strict majority of channels is correct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedObservable {
    pub majority_shape: BetaShape,
    pub minority_shape: BetaShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Probability of a true detection per frame.
    pub recall: f64,
    /// Probability of a false positive on a frame without a true detection.
    pub fp_rate: f64,
    /// Standard deviation of true-detection box noise, in pixels.
    pub noise: f64,
    /// False positives avoid a zone this many times the object size.
    pub exclusion_scale: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            recall: 0.30,
            fp_rate: 0.0046,
            noise: 1.0,
            exclusion_scale: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Object centers, visited at evenly spaced times over the scenario.
    pub waypoints: Vec<[f64; 2]>,
    /// Object width and height.
    pub size: [f64; 2],
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            waypoints: vec![
                [120.0, 120.0],
                [500.0, 140.0],
                [460.0, 360.0],
                [170.0, 330.0],
                [120.0, 120.0],
            ],
            size: [60.0, 80.0],
        }
    }
}

impl MotionConfig {
    /// Ground-truth box at `frame` of a `frames`-long scenario.
    pub fn at(&self, frame: usize, frames: usize) -> BBox {
        let [w, h] = self.size;
        let legs = self.waypoints.len() - 1;
        let [cx, cy] = if legs == 0 || frames < 2 {
            self.waypoints[0]
        } else {
            let s = frame as f64 / (frames - 1) as f64 * legs as f64;
            let k = (s.floor() as usize).min(legs - 1);
            let u = s - k as f64;
            let (a, b) = (self.waypoints[k], self.waypoints[k + 1]);
            [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
        };
        BBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }
}

/// Who moves the channels back onto the object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinitPolicy {
    /// Follow the engine's reinitialization directives.
    #[default]
    Engine,
    /// Reinitialize on every true-positive detection, ignoring the engine.
    TruePositives,
    /// Never reinitialize.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub frames: usize,
    pub seed: u64,
    /// Image width and height.
    pub image: [f64; 2],
    pub motion: MotionConfig,
    pub channels: Vec<ChannelConfig>,
    pub shared: Vec<SharedObservable>,
    pub detector: DetectorConfig,
    pub reinit: ReinitPolicy,
    pub engine: FusionOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let shape = |p, q| BetaShape::new(p, q).expect("positive literals");
        let channels = vec![
            ChannelConfig {
                failure_rate: 0.004,
                ..ChannelConfig::default()
            },
            ChannelConfig {
                correct_shapes: vec![shape(6.0, 2.0), shape(5.0, 3.0), shape(4.0, 2.0)],
                fail_shapes: vec![shape(2.0, 4.0), shape(3.0, 6.0), shape(2.0, 5.0)],
                failure_rate: 0.006,
                ..ChannelConfig::default()
            },
            ChannelConfig {
                correct_shapes: vec![shape(4.0, 2.0), shape(5.0, 2.0), shape(6.0, 2.0)],
                fail_shapes: vec![shape(2.0, 3.0), shape(2.0, 4.0), shape(2.0, 6.0)],
                failure_rate: 0.008,
                ..ChannelConfig::default()
            },
        ];
        Self {
            frames: 2000,
            seed: 0,
            image: [640.0, 480.0],
            motion: MotionConfig::default(),
            channels,
            shared: Vec::new(),
            detector: DetectorConfig::default(),
            reinit: ReinitPolicy::Engine,
            engine: FusionOptions::default(),
        }
    }
}

fn check_probability(name: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {v} outside [0,1]")))
    }
}

fn check_nonnegative(name: &str, v: f64) -> Result<(), SimError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!(
            "{name} = {v} must be finite and non-negative"
        )))
    }
}

impl ScenarioConfig {
    pub fn layout(&self) -> ObservableLayout {
        ObservableLayout {
            arities: self
                .channels
                .iter()
                .map(|c| c.correct_shapes.len())
                .collect(),
            shared: self.shared.len(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.frames == 0 {
            return Err(SimError::Config("frames must be at least 1".into()));
        }
        if self.channels.is_empty() {
            return Err(SimError::Config("at least one channel is required".into()));
        }
        if !(self.image[0] > 0.0 && self.image[1] > 0.0) {
            return Err(SimError::Config("image size must be positive".into()));
        }
        let m = &self.motion;
        if m.waypoints.is_empty() {
            return Err(SimError::Config(
                "motion needs at least one waypoint".into(),
            ));
        }
        if !(m.size[0] > 0.0 && m.size[1] > 0.0) {
            return Err(SimError::Config("object size must be positive".into()));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.correct_shapes.len() != ch.fail_shapes.len() {
                return Err(SimError::Config(format!(
                    "channel {c}: {} correct shapes but {} fail shapes",
                    ch.correct_shapes.len(),
                    ch.fail_shapes.len()
                )));
            }
            check_probability("failure_rate", ch.failure_rate)?;
            check_probability("recovery_rate", ch.recovery_rate)?;
            check_nonnegative("noise", ch.noise)?;
            check_nonnegative("failure_jump", ch.failure_jump)?;
            check_nonnegative("drift_speed", ch.drift_speed)?;
            check_nonnegative("drift_jitter", ch.drift_jitter)?;
        }
        let d = &self.detector;
        check_probability("recall", d.recall)?;
        check_probability("fp_rate", d.fp_rate)?;
        check_nonnegative("detector noise", d.noise)?;
        check_nonnegative("exclusion_scale", d.exclusion_scale)?;
        FusionConfig {
            layout: self.layout(),
            options: self.engine.clone(),
        }
        .validate()?;
        Ok(())
    }
}

/// A generated trace together with what the engine produced while generating it.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub trace: TraceFile,
    pub outputs: Vec<FusionOutput>,
    pub final_params: HmmParams,
    pub learning_invocations: usize,
    /// Correct-to-failed transitions over all channels.
    pub failure_episodes: usize,
}

impl Simulation {
    pub fn true_positives(&self) -> usize {
        self.detections(true)
    }

    pub fn false_positives(&self) -> usize {
        self.detections(false)
    }

    fn detections(&self, tp: bool) -> usize {
        self.trace
            .records
            .iter()
            .filter(|r| r.detection.as_ref().is_some_and(|d| d.tp == Some(tp)))
            .count()
    }
}

struct Channel {
    bbox: BBox,
    correct: bool,
    velocity: (f64, f64),
    /// Restarted on the object by the previous frame's reinitialization.
    fresh: bool,
    correct_draws: Vec<Beta<f64>>,
    fail_draws: Vec<Beta<f64>>,
}

fn beta_draws(shapes: &[BetaShape]) -> Vec<Beta<f64>> {
    shapes
        .iter()
        .map(|s| Beta::new(s.p(), s.q()).expect("shapes validated positive"))
        .collect()
}

fn draw(rng: &mut ChaCha8Rng, dist: &Beta<f64>) -> f64 {
    dist.sample(rng).clamp(OBSERVABLE_EPS, 1.0 - OBSERVABLE_EPS)
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    }
}

fn jittered(rng: &mut ChaCha8Rng, b: &BBox, sd: f64) -> BBox {
    let x = b.x + gaussian(rng, sd);
    let y = b.y + gaussian(rng, sd);
    let w = (b.w + gaussian(rng, 0.5 * sd)).max(1.0);
    let h = (b.h + gaussian(rng, 0.5 * sd)).max(1.0);
    BBox::new(x, y, w, h)
}

fn random_direction(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    (angle.cos(), angle.sin())
}

/// Moves a failed channel one frame, bouncing off the image border.
fn drift(rng: &mut ChaCha8Rng, ch: &mut Channel, cfg: &ChannelConfig, image: [f64; 2]) {
    let (mut cx, mut cy) = ch.bbox.center();
    cx += ch.velocity.0 + gaussian(rng, cfg.drift_jitter);
    cy += ch.velocity.1 + gaussian(rng, cfg.drift_jitter);
    if !(0.0..=image[0]).contains(&cx) {
        cx = cx.clamp(0.0, image[0]);
        ch.velocity.0 = -ch.velocity.0;
    }
    if !(0.0..=image[1]).contains(&cy) {
        cy = cy.clamp(0.0, image[1]);
        ch.velocity.1 = -ch.velocity.1;
    }
    ch.bbox = BBox::new(
        cx - 0.5 * ch.bbox.w,
        cy - 0.5 * ch.bbox.h,
        ch.bbox.w,
        ch.bbox.h,
    );
}

fn false_positive(rng: &mut ChaCha8Rng, gt: &BBox, image: [f64; 2], scale: f64) -> Option<BBox> {
    let zone = gt.scaled(scale);
    let (gx, gy) = zone.center();
    for _ in 0..100 {
        let cx = rng.random_range(0.0..image[0]);
        let cy = rng.random_range(0.0..image[1]);
        if (cx - gx).abs() > 0.5 * zone.w || (cy - gy).abs() > 0.5 * zone.h {
            return Some(BBox::new(cx - 0.5 * gt.w, cy - 0.5 * gt.h, gt.w, gt.h));
        }
    }
    None
}

/// Runs a scenario with the engine in the loop.
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation, SimError> {
    config.validate()?;
    let layout = config.layout();
    let mut engine = FusionEngine::new(FusionConfig {
        layout: layout.clone(),
        options: config.engine.clone(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let frames = config.frames;
    let first = config.motion.at(0, frames);
    let mut channels: Vec<Channel> = config
        .channels
        .iter()
        .map(|c| Channel {
            bbox: first,
            correct: true,
            velocity: (0.0, 0.0),
            fresh: false,
            correct_draws: beta_draws(&c.correct_shapes),
            fail_draws: beta_draws(&c.fail_shapes),
        })
        .collect();
    let shared_draws: Vec<(Beta<f64>, Beta<f64>)> = config
        .shared
        .iter()
        .map(|s| {
            let mut d = beta_draws(&[s.majority_shape, s.minority_shape]);
            let minority = d.pop().expect("two shapes");
            (d.pop().expect("two shapes"), minority)
        })
        .collect();

    let mut trace = TraceFile::new(TraceHeader::new(layout, Some(config.seed)));
    let mut outputs = Vec::with_capacity(frames);
    let mut failure_episodes = 0;
    for t in 0..frames {
        let gt = config.motion.at(t, frames);
        let mut records = Vec::with_capacity(channels.len());
        for (ch, cfg) in channels.iter_mut().zip(&config.channels) {
            let fresh = std::mem::take(&mut ch.fresh);
            if ch.correct {
                // The engine restarts its chain in the all-correct state, so
                // a freshly restarted channel holds for one frame.
                let onset = rng.random::<f64>() < cfg.failure_rate;
                if onset && !fresh {
                    ch.correct = false;
                    failure_episodes += 1;
                    let (dx, dy) = random_direction(&mut rng);
                    let (cx, cy) = gt.center();
                    let jump = cfg.failure_jump;
                    ch.bbox = BBox::new(
                        cx + dx * jump * gt.w - 0.5 * gt.w,
                        cy + dy * jump * gt.h - 0.5 * gt.h,
                        gt.w,
                        gt.h,
                    );
                    let (vx, vy) = random_direction(&mut rng);
                    ch.velocity = (vx * cfg.drift_speed, vy * cfg.drift_speed);
                }
            } else if !cfg.recovery_only_on_reinit && rng.random::<f64>() < cfg.recovery_rate {
                ch.correct = true;
            }
            if ch.correct {
                ch.bbox = jittered(&mut rng, &gt, cfg.noise);
            } else {
                drift(&mut rng, ch, cfg, config.image);
            }
            let dists = if ch.correct {
                &ch.correct_draws
            } else {
                &ch.fail_draws
            };
            let observables = dists.iter().map(|d| draw(&mut rng, d)).collect();
            records.push(ChannelRecord {
                bbox: ch.bbox,
                observables,
                correct: Some(ch.correct),
            });
        }
        let correct = channels.iter().filter(|c| c.correct).count();
        let majority = 2 * correct > channels.len();
        let shared = shared_draws
            .iter()
            .map(|(maj, min)| draw(&mut rng, if majority { maj } else { min }))
            .collect();

        let d = &config.detector;
        let detection = if rng.random::<f64>() < d.recall {
            Some(DetectionRecord {
                bbox: jittered(&mut rng, &gt, d.noise),
                tp: Some(true),
            })
        } else if rng.random::<f64>() < d.fp_rate {
            false_positive(&mut rng, &gt, config.image, d.exclusion_scale).map(|bbox| {
                DetectionRecord {
                    bbox,
                    tp: Some(false),
                }
            })
        } else {
            None
        };

        let record = TraceRecord {
            frame: t,
            gt_bbox: Some(gt),
            channels: records,
            detection,
            shared,
        };
        let output = engine.step(
            &record.reports(),
            &record.shared,
            record.detection.as_ref().map(|d| &d.bbox),
        )?;
        let reinit = match config.reinit {
            ReinitPolicy::Engine => output.reinit.as_ref().map(|r| r.bbox),
            ReinitPolicy::TruePositives => record
                .detection
                .as_ref()
                .filter(|d| d.tp == Some(true))
                .map(|d| d.bbox),
            ReinitPolicy::None => None,
        };
        if let Some(target) = reinit {
            // A channel restarted on a false positive locks onto background.
            let on_object = iou(&target, &gt) >= 0.5;
            for ch in &mut channels {
                ch.bbox = target;
                ch.correct = on_object;
                ch.fresh = on_object;
                ch.velocity = (0.0, 0.0);
            }
        }
        trace.records.push(record);
        outputs.push(output);
    }
    Ok(Simulation {
        trace,
        outputs,
        final_params: engine.params().clone(),
        learning_invocations: engine.learning_invocations(),
        failure_episodes,
    })
}

/// The trace of [`simulate`].
pub fn generate_scenario(config: &ScenarioConfig) -> Result<TraceFile, SimError> {
    Ok(simulate(config)?.trace)
}

/// Overlap statistics of a box sequence against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Fraction of frames whose IoU exceeds the threshold.
    pub recall: f64,
    pub mean_iou: f64,
    pub overlaps: Vec<f64>,
}

pub fn evaluate_trace(
    outputs: &[BBox],
    truth: &[BBox],
    threshold: f64,
) -> Result<Evaluation, SimError> {
    if outputs.len() != truth.len() {
        return Err(SimError::LengthMismatch {
            outputs: outputs.len(),
            truth: truth.len(),
        });
    }
    let overlaps: Vec<f64> = outputs.iter().zip(truth).map(|(a, b)| iou(a, b)).collect();
    let len = overlaps.len().max(1) as f64;
    Ok(Evaluation {
        recall: overlaps.iter().filter(|&&o| o > threshold).count() as f64 / len,
        mean_iou: overlaps.iter().sum::<f64>() / len,
        overlaps,
    })
}

/// Recall of each channel's own boxes over a trace with ground truth.
pub fn channel_recalls(trace: &TraceFile, threshold: f64) -> Result<Vec<f64>, SimError> {
    let truth = trace
        .ground_truth()
        .ok_or_else(|| SimError::Config("trace lacks ground truth".into()))?;
    (0..trace.header.n)
        .map(|c| {
            let boxes: Vec<BBox> = trace.records.iter().map(|r| r.channels[c].bbox).collect();
            Ok(evaluate_trace(&boxes, &truth, threshold)?.recall)
        })
        .collect()
}
