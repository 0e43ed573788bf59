//! The per-frame fusion engine.
//!
//! Each frame every channel reports a box and its observables. The engine
//! advances the filtering distribution, and either passes through an accepted
//! detection (annotating the hidden state, relearning, and asking the caller to
//! reinitialize all channels) or outputs the mean box of the channels that are
//! correct in the most probable state.

mod bbox;
mod engine;

pub use bbox::{average_bbox, iou, BBox};
pub use engine::{
    annotate_state, detection_gate, DetectionOutcome, FusionConfig, FusionEngine, FusionError,
    FusionOptions, FusionOutput, GateDecision, LearningWindow, OutputSource, ReinitDirective,
    TrackerReport, TEMPLATE_UPDATE_FACTOR,
};
