//! Replaying a recorded trace through the engine.
//!
//! Replays are open-loop: the recorded channel boxes already reflect whatever
//! reinitializations happened when the trace was made, so the engine's
//! directives are reported but not applied.

use serde::{Deserialize, Serialize};

use crate::fusion::{
    iou, DetectionOutcome, FusionConfig, FusionEngine, FusionError, FusionOptions, FusionOutput,
};
use crate::hmm::HmmParams;
use crate::trace::TraceFile;

/// Totals for one replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    /// Fraction of frames with IoU above 0.5 against ground truth, when the
    /// trace carries it.
    pub recall: Option<f64>,
    pub mean_iou: Option<f64>,
    pub detections: usize,
    /// Detections labeled true positive in the trace.
    pub detection_tp: usize,
    /// Detections labeled false positive in the trace.
    pub detection_fp: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Accepted detections that the trace labels false positive.
    pub accepted_fp: usize,
    pub learning_invocations: usize,
    pub final_params: HmmParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub outputs: Vec<FusionOutput>,
    pub summary: RunSummary,
}

/// Streams `trace` through a fresh engine. `params` replaces the default
/// initial model when given.
pub fn run_trace(
    trace: &TraceFile,
    options: &FusionOptions,
    params: Option<HmmParams>,
) -> Result<RunReport, FusionError> {
    let config = FusionConfig {
        layout: trace.header.layout.clone(),
        options: options.clone(),
    };
    let mut engine = match params {
        Some(p) => FusionEngine::with_params(config, p)?,
        None => FusionEngine::new(config)?,
    };
    let mut outputs = Vec::with_capacity(trace.len());
    let (mut accepted, mut rejected, mut accepted_fp) = (0, 0, 0);
    for record in &trace.records {
        let det = record.detection.as_ref();
        let out = engine.step(&record.reports(), &record.shared, det.map(|d| &d.bbox))?;
        match out.detection {
            DetectionOutcome::Accepted { .. } => {
                accepted += 1;
                if det.is_some_and(|d| d.tp == Some(false)) {
                    accepted_fp += 1;
                }
            }
            DetectionOutcome::Rejected => rejected += 1,
            DetectionOutcome::None => {}
        }
        outputs.push(out);
    }

    let labeled = |tp: bool| {
        trace
            .records
            .iter()
            .filter(|r| r.detection.as_ref().is_some_and(|d| d.tp == Some(tp)))
            .count()
    };
    let overlaps: Option<Vec<f64>> = trace.ground_truth().map(|gt| {
        outputs
            .iter()
            .zip(&gt)
            .map(|(o, g)| iou(&o.bbox, g))
            .collect()
    });
    let frames = trace.len();
    let (recall, mean_iou) = match &overlaps {
        Some(v) if frames > 0 => (
            Some(v.iter().filter(|&&o| o > 0.5).count() as f64 / frames as f64),
            Some(v.iter().sum::<f64>() / frames as f64),
        ),
        _ => (None, None),
    };
    let summary = RunSummary {
        frames,
        recall,
        mean_iou,
        detections: trace
            .records
            .iter()
            .filter(|r| r.detection.is_some())
            .count(),
        detection_tp: labeled(true),
        detection_fp: labeled(false),
        accepted,
        rejected,
        accepted_fp,
        learning_invocations: engine.learning_invocations(),
        final_params: engine.params().clone(),
    };
    Ok(RunReport { outputs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::OutputSource;
    use crate::simulator::{simulate, ScenarioConfig};

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            frames: 300,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn replay_matches_the_closed_loop_run() {
        let sim = simulate(&small()).unwrap();
        let report = run_trace(&sim.trace, &small().engine, None).unwrap();
        assert_eq!(report.outputs, sim.outputs);
        assert_eq!(report.summary.final_params, sim.final_params);
        assert_eq!(
            report.summary.learning_invocations,
            sim.learning_invocations
        );
        assert_eq!(report.summary.accepted, sim.learning_invocations);
        assert_eq!(
            report.summary.detections,
            report.summary.detection_tp + report.summary.detection_fp
        );
    }

    #[test]
    fn no_detections_means_no_learning() {
        let mut trace = simulate(&small()).unwrap().trace;
        for r in &mut trace.records {
            r.detection = None;
        }
        let report = run_trace(&trace, &FusionOptions::default(), None).unwrap();
        assert_eq!(report.summary.learning_invocations, 0);
        assert!(report
            .outputs
            .iter()
            .all(|o| o.source == OutputSource::Fused));
        assert_eq!(
            report.summary.final_params,
            HmmParams::initial(&trace.header.layout).unwrap()
        );
    }

    #[test]
    fn recall_needs_ground_truth() {
        let mut trace = simulate(&small()).unwrap().trace;
        trace.records[3].gt_bbox = None;
        let report = run_trace(&trace, &FusionOptions::default(), None).unwrap();
        assert_eq!(report.summary.recall, None);
    }
}
