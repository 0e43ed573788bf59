use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{average_bbox, iou, BBox};
use crate::hmm::{
    forward_step, most_probable_state, train, AnnotatedHistory, Annotation, EmissionTable,
    HmmError, HmmParams, ObservableLayout, ObservationFrame, StateIndex, StateSpace, StateVector,
    TrainOptions, TransitionPrior,
};
use crate::Execution;

/// Weight of the new appearance when channels refresh their templates on reinitialization.
pub const TEMPLATE_UPDATE_FACTOR: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error("expected {expected} tracker reports, got {got}")]
    ReportCount { expected: usize, got: usize },
    #[error("tracker {tracker} reported {got} observables, layout declares {expected}")]
    Arity {
        tracker: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl FusionError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, FusionError::Hmm(e) if e.is_numeric())
    }
}

/// One channel's output for a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerReport {
    pub bbox: BBox,
    pub observables: Vec<f64>,
}

/// Which frames the learner sees at each accepted detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningWindow {
    /// Every frame since the start of the trace.
    #[default]
    Full,
    /// Only the segment that the detection just closed.
    Segment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionOptions {
    /// A channel counts as correct when its IoU with the detection is at least this.
    pub correct_iou: f64,
    /// Minimum IoU between a detection and the majority's mean box.
    pub gate_iou: f64,
    pub window: LearningWindow,
    /// GEM iterations per learning invocation.
    pub max_iters: usize,
    /// Pseudo-transitions per state drawn from the engine's starting matrix;
    /// 0 gives the plain expected-count estimate.
    pub prior_weight: f64,
    /// Posterior mass a state needs before its shapes are re-estimated.
    pub min_state_mass: f64,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            correct_iou: 0.5,
            gate_iou: 0.5,
            window: LearningWindow::Full,
            max_iters: 3,
            prior_weight: 20.0,
            min_state_mass: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub layout: ObservableLayout,
    #[serde(default)]
    pub options: FusionOptions,
}

impl FusionConfig {
    pub fn new(layout: ObservableLayout) -> Self {
        Self {
            layout,
            options: FusionOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        self.layout.validate()?;
        let o = &self.options;
        for (name, v) in [("correct_iou", o.correct_iou), ("gate_iou", o.gate_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(FusionError::Config(format!("{name} = {v} outside [0,1]")));
            }
        }
        for (name, v) in [
            ("prior_weight", o.prior_weight),
            ("min_state_mass", o.min_state_mass),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FusionError::Config(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSource {
    Detector,
    Fused,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOutcome {
    None,
    /// The detection was used. `annotated` is the recorded state, or `None`
    /// when the detection contradicted the model (e.g. a non-all-correct state
    /// on the first frame after a reinitialization) and only reset the chain.
    Accepted {
        annotated: Option<StateIndex>,
    },
    Rejected,
}

/// Instruction to the caller after an accepted detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReinitDirective {
    /// Pose every channel must restart from.
    pub bbox: BBox,
    /// Frame at which the chain restarts in the all-correct state.
    pub next_segment_start: usize,
    /// Exponential template refresh factor for channels with an appearance model.
    pub template_update_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionOutput {
    pub frame: usize,
    pub bbox: BBox,
    pub source: OutputSource,
    /// Most probable non-all-failed state under the filtering distribution.
    pub state: StateIndex,
    pub posterior: Vec<f64>,
    /// Per-channel probability of being correct.
    pub marginals: Vec<f64>,
    pub detection: DetectionOutcome,
    pub reinit: Option<ReinitDirective>,
}

/// Correctness vector implied by a detection: channel `c` is correct iff its
/// box overlaps the detection by at least `threshold`.
pub fn annotate_state(reports: &[TrackerReport], det: &BBox, threshold: f64) -> StateVector {
    let bits = reports
        .iter()
        .map(|r| iou(&r.bbox, det) >= threshold)
        .collect();
    StateVector::new(bits).expect("report count validated by caller")
}

/// Majority-vote consistency check for a detection.
///
/// Rejects only when the most probable state has strictly more than half the
/// channels correct and the detection overlaps their mean box by less than
/// `gate_iou`. With one or no correct channel the detector takes precedence.
pub fn detection_gate(
    space: &StateSpace,
    posterior: &[f64],
    reports: &[TrackerReport],
    det: &BBox,
    gate_iou: f64,
) -> GateDecision {
    let best = most_probable_state(space, posterior);
    if !space.has_majority(best) {
        return GateDecision::Accept;
    }
    let mean = average_bbox(
        reports
            .iter()
            .enumerate()
            .filter(|(c, _)| space.is_correct(best, *c))
            .map(|(_, r)| &r.bbox),
    )
    .expect("a majority state has at least one correct channel");
    if iou(det, &mean) < gate_iou {
        GateDecision::Reject
    } else {
        GateDecision::Accept
    }
}

/// Online fusion state for one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionEngine {
    config: FusionConfig,
    space: StateSpace,
    params: HmmParams,
    prior: TransitionPrior,
    history: AnnotatedHistory,
    posterior: Vec<f64>,
    ln_posterior: Vec<f64>,
    segment_starts_next: bool,
    learning_invocations: usize,
    last_reinit: Option<ReinitDirective>,
}

impl FusionEngine {
    /// Engine with the default initial model for the configured layout.
    pub fn new(config: FusionConfig) -> Result<Self, FusionError> {
        config.validate()?;
        let params = HmmParams::initial(&config.layout)?;
        Self::with_params(config, params)
    }

    pub fn with_params(config: FusionConfig, params: HmmParams) -> Result<Self, FusionError> {
        config.validate()?;
        params.validate()?;
        let space = StateSpace::new(config.layout.trackers())?;
        if params.num_states() != space.len() || params.dims() != config.layout.dims() {
            return Err(FusionError::Config(format!(
                "parameters are {}x{}, layout needs {}x{}",
                params.num_states(),
                params.dims(),
                space.len(),
                config.layout.dims()
            )));
        }
        let mut posterior = vec![0.0; space.len()];
        posterior[0] = 1.0;
        let mut ln_posterior = vec![f64::NEG_INFINITY; space.len()];
        ln_posterior[0] = 0.0;
        let prior = TransitionPrior {
            matrix: params.transitions.clone(),
            weight: config.options.prior_weight,
        };
        Ok(Self {
            config,
            space,
            params,
            prior,
            history: AnnotatedHistory::new(),
            posterior,
            ln_posterior,
            segment_starts_next: true,
            learning_invocations: 0,
            last_reinit: None,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.space
    }

    pub fn params(&self) -> &HmmParams {
        &self.params
    }

    pub fn history(&self) -> &AnnotatedHistory {
        &self.history
    }

    /// Filtering distribution after the last processed frame.
    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    /// Frames processed so far.
    pub fn frames(&self) -> usize {
        self.history.len()
    }

    pub fn learning_invocations(&self) -> usize {
        self.learning_invocations
    }

    /// True when the next frame starts a new segment in the all-correct state.
    pub fn segment_starts_next(&self) -> bool {
        self.segment_starts_next
    }

    /// The reinitialization the caller owes the channels after the last frame,
    /// if a detection was accepted there.
    pub fn reinit_protocol(&self) -> Option<&ReinitDirective> {
        self.last_reinit.as_ref()
    }

    fn assemble(
        &self,
        reports: &[TrackerReport],
        shared: &[f64],
    ) -> Result<ObservationFrame, FusionError> {
        let layout = &self.config.layout;
        if reports.len() != layout.trackers() {
            return Err(FusionError::ReportCount {
                expected: layout.trackers(),
                got: reports.len(),
            });
        }
        for (c, (r, &k)) in reports.iter().zip(&layout.arities).enumerate() {
            if r.observables.len() != k {
                return Err(FusionError::Arity {
                    tracker: c,
                    expected: k,
                    got: r.observables.len(),
                });
            }
        }
        if shared.len() != layout.shared {
            return Err(FusionError::Arity {
                tracker: layout.trackers(),
                expected: layout.shared,
                got: shared.len(),
            });
        }
        let values = reports
            .iter()
            .flat_map(|r| r.observables.iter().copied())
            .chain(shared.iter().copied())
            .collect();
        Ok(ObservationFrame::new(values)?)
    }

    fn learn(&mut self) -> Result<(), FusionError> {
        let o = &self.config.options;
        let options = TrainOptions {
            max_iters: o.max_iters,
            transition_prior: (o.prior_weight > 0.0).then(|| self.prior.clone()),
            min_state_mass: o.min_state_mass,
            ..TrainOptions::default()
        };
        let report = match self.config.options.window {
            LearningWindow::Full => train(&self.params, &self.history, &options)?,
            LearningWindow::Segment => {
                let start = self
                    .history
                    .last_segment_start()
                    .expect("called right after recording an annotation");
                let window = self.history.suffix_from(start)?;
                train(&self.params, &window, &options)?
            }
        };
        self.params = report.params;
        self.learning_invocations += 1;
        Ok(())
    }

    /// Processes one frame.
    ///
    /// `shared` holds the layout's shared observables (empty for most layouts).
    /// Invalid input is rejected before any engine state changes.
    pub fn step(
        &mut self,
        reports: &[TrackerReport],
        shared: &[f64],
        detection: Option<&BBox>,
    ) -> Result<FusionOutput, FusionError> {
        let frame = self.assemble(reports, shared)?;
        let table = EmissionTable::compute(
            &self.params,
            std::slice::from_ref(&frame),
            Execution::Sequential,
        )?;
        let n = self.space.len();
        let mut posterior = vec![0.0; n];
        let mut ln_posterior = vec![0.0; n];
        let prev = (!self.segment_starts_next)
            .then_some((self.posterior.as_slice(), self.ln_posterior.as_slice()));
        forward_step(
            prev,
            &self.params.transitions,
            table.row(0),
            &mut posterior,
            &mut ln_posterior,
        );

        let best = most_probable_state(&self.space, &posterior);
        let marginals = self.space.tracker_marginals(&posterior);
        let decision = detection.map(|det| {
            (
                det,
                detection_gate(
                    &self.space,
                    &posterior,
                    reports,
                    det,
                    self.config.options.gate_iou,
                ),
            )
        });

        let t = self.history.push(frame)?;
        self.posterior = posterior;
        self.ln_posterior = ln_posterior;
        self.segment_starts_next = false;
        self.last_reinit = None;

        let (bbox, source, outcome) = match decision {
            Some((det, GateDecision::Accept)) => {
                let observed = annotate_state(reports, det, self.config.options.correct_iou);
                let idx = self.space.index_of(&observed)?;
                let label = (self.ln_posterior[idx.0] > f64::NEG_INFINITY).then_some(idx);
                self.history.annotate(Annotation {
                    time: t,
                    state: label,
                })?;
                self.learn()?;
                self.segment_starts_next = true;
                self.last_reinit = Some(ReinitDirective {
                    bbox: *det,
                    next_segment_start: t + 1,
                    template_update_factor: TEMPLATE_UPDATE_FACTOR,
                });
                (
                    *det,
                    OutputSource::Detector,
                    DetectionOutcome::Accepted { annotated: label },
                )
            }
            other => {
                let fused = average_bbox(
                    reports
                        .iter()
                        .enumerate()
                        .filter(|(c, _)| self.space.is_correct(best, *c))
                        .map(|(_, r)| &r.bbox),
                )
                .expect("the most probable state always has a correct channel");
                let outcome = if other.is_some() {
                    DetectionOutcome::Rejected
                } else {
                    DetectionOutcome::None
                };
                (fused, OutputSource::Fused, outcome)
            }
        };

        Ok(FusionOutput {
            frame: t,
            bbox,
            source,
            state: best,
            posterior: self.posterior.clone(),
            marginals,
            detection: outcome,
            reinit: self.last_reinit.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(x: f64, obs: f64) -> TrackerReport {
        TrackerReport {
            bbox: BBox::new(x, 0.0, 10.0, 10.0),
            observables: vec![obs],
        }
    }

    fn engine(n: usize) -> FusionEngine {
        FusionEngine::new(FusionConfig::new(ObservableLayout::uniform(n, 1))).unwrap()
    }

    #[test]
    fn annotation_thresholds() {
        let det = BBox::new(0.0, 0.0, 10.0, 10.0);
        let on = annotate_state(&[report(0.0, 0.5), report(0.0, 0.5)], &det, 0.5);
        assert_eq!(on.bits(), &[true, true]);
        let off = annotate_state(&[report(50.0, 0.5), report(80.0, 0.5)], &det, 0.5);
        assert_eq!(off.bits(), &[false, false]);
        // IoU 0.6 needs overlap 7.5 wide: x = 2.5. IoU 0.3: 10*w/(200-10w)=0.3 -> w = 60/13.
        let a = report(2.5, 0.5);
        let b = report(10.0 - 60.0 / 13.0, 0.5);
        assert!((iou(&a.bbox, &det) - 0.6).abs() < 1e-12);
        assert!((iou(&b.bbox, &det) - 0.3).abs() < 1e-12);
        assert_eq!(annotate_state(&[a, b], &det, 0.5).bits(), &[true, false]);
    }

    #[test]
    fn gate_rejects_far_detection_under_majority() {
        let space = StateSpace::new(3).unwrap();
        let mut post = vec![0.0; 8];
        post[0] = 1.0;
        let reports = vec![report(0.0, 0.5), report(1.0, 0.5), report(0.5, 0.5)];
        let far = BBox::new(200.0, 200.0, 10.0, 10.0);
        assert_eq!(
            detection_gate(&space, &post, &reports, &far, 0.5),
            GateDecision::Reject
        );
        let near = BBox::new(0.5, 0.0, 10.0, 10.0);
        assert!(
            iou(
                &near,
                &average_bbox(reports.iter().map(|r| &r.bbox)).unwrap()
            ) > 0.9
        );
        assert_eq!(
            detection_gate(&space, &post, &reports, &near, 0.5),
            GateDecision::Accept
        );
    }

    #[test]
    fn gate_defers_to_detector_with_one_correct() {
        let space = StateSpace::new(3).unwrap();
        let mut post = vec![0.0; 8];
        post[3] = 1.0; // (1,0,0)
        assert_eq!(space.correct_count(StateIndex(3)), 1);
        let reports = vec![report(0.0, 0.5), report(1.0, 0.5), report(0.5, 0.5)];
        let far = BBox::new(200.0, 200.0, 10.0, 10.0);
        assert_eq!(
            detection_gate(&space, &post, &reports, &far, 0.5),
            GateDecision::Accept
        );
    }

    #[test]
    fn first_frame_averages_all_channels() {
        let mut e = engine(2);
        let out = e
            .step(&[report(0.0, 0.2), report(4.0, 0.9)], &[], None)
            .unwrap();
        assert_eq!(out.state, StateIndex(0));
        assert_eq!(out.bbox, BBox::new(2.0, 0.0, 10.0, 10.0));
        assert_eq!(out.source, OutputSource::Fused);
        assert_eq!(out.posterior, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.marginals, vec![1.0, 1.0]);
    }

    #[test]
    fn accepted_detection_is_output_and_resets_segment() {
        let mut e = engine(2);
        let reports = [report(0.0, 0.8), report(0.0, 0.8)];
        e.step(&reports, &[], None).unwrap();
        let det = BBox::new(1.0, 0.0, 10.0, 10.0);
        let out = e.step(&reports, &[], Some(&det)).unwrap();
        assert_eq!(out.bbox, det);
        assert_eq!(out.source, OutputSource::Detector);
        assert_eq!(
            out.detection,
            DetectionOutcome::Accepted {
                annotated: Some(StateIndex(0))
            }
        );
        let directive = e.reinit_protocol().unwrap();
        assert_eq!(directive.bbox, det);
        assert_eq!(directive.next_segment_start, 2);
        assert_eq!(e.learning_invocations(), 1);
        assert!(e.segment_starts_next());
        // Whatever the observables say, the next frame starts in state 0.
        let out = e
            .step(&[report(0.0, 0.01), report(0.0, 0.01)], &[], None)
            .unwrap();
        assert_eq!(out.posterior[0], 1.0);
        assert!(e.reinit_protocol().is_none());
    }

    #[test]
    fn consecutive_detections_make_one_frame_segments() {
        let mut e = engine(2);
        let reports = [report(0.0, 0.8), report(0.0, 0.8)];
        let det = BBox::new(0.0, 0.0, 10.0, 10.0);
        let a = e.step(&reports, &[], Some(&det)).unwrap();
        let b = e.step(&reports, &[], Some(&det)).unwrap();
        assert_eq!(a.reinit.unwrap().next_segment_start, 1);
        assert_eq!(b.reinit.unwrap().next_segment_start, 2);
        let segs = e.history().segments();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn contradicting_annotation_after_reset_is_unlabeled() {
        let mut e = engine(2);
        let det = BBox::new(0.0, 0.0, 10.0, 10.0);
        e.step(&[report(0.0, 0.8), report(0.0, 0.8)], &[], Some(&det))
            .unwrap();
        // Next frame is a segment start; channel 1 is far from the detection.
        // The all-correct state is not a majority-consistent reject (mean box
        // overlaps), so the detection is accepted but cannot be labeled (1,0).
        let reports = [report(0.0, 0.8), report(6.0, 0.8)];
        let out = e.step(&reports, &[], Some(&det)).unwrap();
        assert_eq!(
            out.detection,
            DetectionOutcome::Accepted { annotated: None }
        );
        assert_eq!(e.history().annotations()[1].state, None);
    }

    #[test]
    fn rejected_detection_matches_no_detection() {
        let mut a = engine(3);
        let reports: Vec<TrackerReport> = (0..3).map(|c| report(c as f64, 0.8)).collect();
        for _ in 0..3 {
            a.step(&reports, &[], None).unwrap();
        }
        let mut b = a.clone();
        let far = BBox::new(300.0, 300.0, 10.0, 10.0);
        let oa = a.step(&reports, &[], Some(&far)).unwrap();
        let ob = b.step(&reports, &[], None).unwrap();
        assert_eq!(oa.detection, DetectionOutcome::Rejected);
        assert_eq!(a, b);
        assert_eq!(oa.bbox, ob.bbox);
        assert_eq!(oa.posterior, ob.posterior);
    }

    #[test]
    fn input_validation_leaves_engine_untouched() {
        let mut e = engine(2);
        let before = e.clone();
        assert!(matches!(
            e.step(&[report(0.0, 0.5)], &[], None),
            Err(FusionError::ReportCount { .. })
        ));
        let bad = TrackerReport {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            observables: vec![0.5, 0.5],
        };
        assert!(matches!(
            e.step(&[report(0.0, 0.5), bad], &[], None),
            Err(FusionError::Arity { tracker: 1, .. })
        ));
        assert!(e
            .step(&[report(0.0, 1.5), report(0.0, 0.5)], &[], None)
            .is_err());
        assert_eq!(e, before);
    }

    #[test]
    fn segment_window_learns_too() {
        let mut cfg = FusionConfig::new(ObservableLayout::uniform(2, 1));
        cfg.options.window = LearningWindow::Segment;
        let mut e = FusionEngine::new(cfg).unwrap();
        let reports = [report(0.0, 0.8), report(0.0, 0.3)];
        let det = BBox::new(0.0, 0.0, 10.0, 10.0);
        for t in 0..12 {
            let d = (t % 4 == 3).then_some(&det);
            e.step(&reports, &[], d).unwrap();
        }
        assert_eq!(e.learning_invocations(), 3);
    }
}
