//! Semi-supervised hidden Markov model over binary tracker-correctness states.
//!
//! The hidden state at each frame is a vector in `{0,1}^n` saying which of the
//! `n` channels track the object. Observables are products of one-dimensional
//! beta densities. Accepted detections pin the state at isolated frames and
//! restart the chain in the all-correct state on the following frame, which
//! splits a history into independent segments.

mod beta;
mod error;
mod history;
mod inference;
mod learn;
mod model;
mod state;

pub use beta::{beta_pdf, ln_beta_pdf, BetaShape};
pub use error::HmmError;
pub use history::{
    AnnotatedHistory, Annotation, ObservationFrame, Segment, Terminal, OBSERVABLE_EPS,
};
pub use inference::{
    backward_pass, emission_density, forward_pass, forward_pass_with, forward_step, infer,
    infer_with, BackwardPass, EmissionTable, ForwardBackwardCache, ForwardPass,
};
pub use learn::{
    estimate_beta_per_state, estimate_beta_pooled, reestimate_transitions,
    reestimate_transitions_with_prior, train, TieGroup, TrainOptions, TrainReport, TransitionPrior,
    MASS_FLOOR_FRACTION, MIN_VARIANCE,
};
pub use model::{
    default_observable_model, default_transition_matrix, DimOwner, HmmParams, ObservableLayout,
    ObservableModel, TransitionMatrix,
};
pub use state::{most_probable_state, StateIndex, StateSpace, StateVector, MAX_TRACKERS};
