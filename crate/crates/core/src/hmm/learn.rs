//! Semi-supervised Baum-Welch learning.
//!
//! Transitions are re-estimated from expected transition counts. Observable
//! shapes come from posterior-weighted moments inverted through the beta
//! mean/variance relations. Since the moment update is not a likelihood
//! maximizer, [`train`] keeps it only when the joint likelihood does not drop.

use super::inference::{backward_pass, forward_pass, ForwardBackwardCache, ForwardPass};
use super::{
    AnnotatedHistory, BetaShape, HmmError, HmmParams, ObservableModel, ObservationFrame,
    StateIndex, TransitionMatrix,
};

/// States whose posterior mass is below this fraction of the frame count keep
/// their previous shapes.
pub const MASS_FLOOR_FRACTION: f64 = 1e-6;

/// Weighted variances below this are treated as degenerate.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Pseudo-counts added to the expected transition counts: row `i` gains
/// `weight * matrix[i][j]` expected transitions to each `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPrior {
    pub matrix: TransitionMatrix,
    pub weight: f64,
}

/// Re-estimates the transition matrix from pairwise posteriors, skipping
/// segment boundaries. Rows with no expected outgoing transitions keep their
/// previous values.
pub fn reestimate_transitions(
    cache: &ForwardBackwardCache,
    previous: &TransitionMatrix,
) -> Result<TransitionMatrix, HmmError> {
    reestimate_transitions_with_prior(cache, previous, None)
}

/// [`reestimate_transitions`] with optional pseudo-counts. A positive prior
/// keeps every transition the prior allows strictly possible, however rarely
/// it has been observed.
pub fn reestimate_transitions_with_prior(
    cache: &ForwardBackwardCache,
    previous: &TransitionMatrix,
    prior: Option<&TransitionPrior>,
) -> Result<TransitionMatrix, HmmError> {
    let n = cache.num_states();
    if previous.size() != n {
        return Err(HmmError::Dimension {
            expected: n,
            got: previous.size(),
        });
    }
    if let Some(p) = prior {
        if p.matrix.size() != n || !(p.weight >= 0.0 && p.weight.is_finite()) {
            return Err(HmmError::Transitions(format!(
                "prior must be {n}x{n} with finite non-negative weight"
            )));
        }
    }
    let mut counts = cache.expected_transitions()?;
    for (i, row) in counts.chunks_mut(n).enumerate() {
        if let Some(p) = prior {
            row.iter_mut()
                .zip(p.matrix.row(i))
                .for_each(|(c, a)| *c += p.weight * a);
        }
        let from: f64 = row.iter().sum();
        if from > 0.0 && from.is_finite() {
            row.iter_mut().for_each(|v| *v /= from);
        } else {
            row.copy_from_slice(previous.row(i));
        }
    }
    TransitionMatrix::normalized(n, counts)
}

/// Weighted first and second central moments of one observable under one
/// state's posterior weights.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Moments {
    mass: f64,
    mean: f64,
    variance: f64,
}

fn shape_from(m: Moments, mass_floor: f64) -> Option<BetaShape> {
    if !(m.mass >= mass_floor) || m.mass <= 0.0 {
        return None;
    }
    if !(m.variance >= MIN_VARIANCE) || m.variance >= m.mean * (1.0 - m.mean) {
        return None;
    }
    BetaShape::from_moments(m.mean, m.variance)
}

fn check_inputs(
    frames: &[ObservationFrame],
    posteriors: &[&[f64]],
    previous: &ObservableModel,
) -> Result<(), HmmError> {
    if frames.len() != posteriors.len() {
        return Err(HmmError::Dimension {
            expected: frames.len(),
            got: posteriors.len(),
        });
    }
    if let Some(f) = frames.iter().find(|f| f.dims() != previous.dims()) {
        return Err(HmmError::Dimension {
            expected: previous.dims(),
            got: f.dims(),
        });
    }
    if let Some(g) = posteriors.iter().find(|g| g.len() != previous.states()) {
        return Err(HmmError::Dimension {
            expected: previous.states(),
            got: g.len(),
        });
    }
    Ok(())
}

/// Generalized method-of-moments shape estimates for every (state, dimension)
/// cell, weighted by the smoothed posteriors.
///
/// A cell keeps its previous shape when its state carries less than
/// `MASS_FLOOR_FRACTION * T` posterior mass, when its variance is below
/// [`MIN_VARIANCE`], or when the moments admit no beta distribution.
pub fn estimate_beta_per_state(
    frames: &[ObservationFrame],
    posteriors: &[&[f64]],
    previous: &ObservableModel,
) -> Result<ObservableModel, HmmError> {
    per_state(frames, posteriors, previous, 0.0)
}

fn mass_floor(frames: usize, min_mass: f64) -> f64 {
    (MASS_FLOOR_FRACTION * frames as f64).max(min_mass)
}

fn per_state(
    frames: &[ObservationFrame],
    posteriors: &[&[f64]],
    previous: &ObservableModel,
    min_mass: f64,
) -> Result<ObservableModel, HmmError> {
    check_inputs(frames, posteriors, previous)?;
    let (states, dims) = (previous.states(), previous.dims());
    let mass_floor = mass_floor(frames.len(), min_mass);
    let mut out = previous.clone();
    for i in 0..states {
        let mass: f64 = posteriors.iter().map(|g| g[i]).sum();
        if !(mass >= mass_floor) || mass <= 0.0 {
            continue;
        }
        for j in 0..dims {
            let mean = frames
                .iter()
                .zip(posteriors)
                .map(|(f, g)| f.values()[j] * g[i])
                .sum::<f64>()
                / mass;
            let variance = frames
                .iter()
                .zip(posteriors)
                .map(|(f, g)| {
                    let d = f.values()[j] - mean;
                    d * d * g[i]
                })
                .sum::<f64>()
                / mass;
            if let Some(s) = shape_from(
                Moments {
                    mass,
                    mean,
                    variance,
                },
                mass_floor,
            ) {
                out.set_shape(i, j, s);
            }
        }
    }
    Ok(out)
}

/// A set of (state, dimension) cells constrained to share one beta shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TieGroup {
    pub cells: Vec<(StateIndex, usize)>,
}

impl TieGroup {
    pub fn new(cells: Vec<(StateIndex, usize)>) -> Self {
        Self { cells }
    }
}

fn validate_groups(groups: &[TieGroup], states: usize, dims: usize) -> Result<(), HmmError> {
    let mut seen = vec![false; states * dims];
    for (g, group) in groups.iter().enumerate() {
        if group.cells.is_empty() {
            return Err(HmmError::TieGroup(format!("group {g} is empty")));
        }
        for &(s, j) in &group.cells {
            if s.0 >= states || j >= dims {
                return Err(HmmError::TieGroup(format!(
                    "cell ({}, {j}) outside {states}x{dims}",
                    s.0
                )));
            }
            let k = s.0 * dims + j;
            if seen[k] {
                return Err(HmmError::TieGroup(format!(
                    "cell ({}, {j}) appears in more than one group",
                    s.0
                )));
            }
            seen[k] = true;
        }
    }
    Ok(())
}

/// Like [`estimate_beta_per_state`], but cells in each tie group share a shape
/// estimated from moments pooled across the group. Untied cells get the
/// per-state estimate.
pub fn estimate_beta_pooled(
    frames: &[ObservationFrame],
    posteriors: &[&[f64]],
    previous: &ObservableModel,
    groups: &[TieGroup],
) -> Result<ObservableModel, HmmError> {
    pooled(frames, posteriors, previous, groups, 0.0)
}

fn pooled(
    frames: &[ObservationFrame],
    posteriors: &[&[f64]],
    previous: &ObservableModel,
    groups: &[TieGroup],
    min_mass: f64,
) -> Result<ObservableModel, HmmError> {
    check_inputs(frames, posteriors, previous)?;
    validate_groups(groups, previous.states(), previous.dims())?;
    let mut out = per_state(frames, posteriors, previous, min_mass)?;
    let mass_floor = mass_floor(frames.len(), min_mass);
    for group in groups {
        let mut mass = 0.0;
        let mut weighted = 0.0;
        for &(s, j) in &group.cells {
            for (f, g) in frames.iter().zip(posteriors) {
                mass += g[s.0];
                weighted += f.values()[j] * g[s.0];
            }
        }
        let mean = weighted / mass;
        let mut spread = 0.0;
        for &(s, j) in &group.cells {
            for (f, g) in frames.iter().zip(posteriors) {
                let d = f.values()[j] - mean;
                spread += d * d * g[s.0];
            }
        }
        let pooled = shape_from(
            Moments {
                mass,
                mean,
                variance: spread / mass,
            },
            mass_floor,
        );
        for &(s, j) in &group.cells {
            let shape = pooled.unwrap_or(*previous.shape(s.0, j));
            out.set_shape(s.0, j, shape);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    /// Maximum number of GEM iterations.
    pub max_iters: usize,
    /// Stop once the relative likelihood gain of an iteration falls below this.
    pub rel_tolerance: f64,
    /// Optional shape tying; empty means per-cell estimates.
    pub tie_groups: Vec<TieGroup>,
    /// Pseudo-counts for the transition update; `None` is the plain estimate.
    pub transition_prior: Option<TransitionPrior>,
    /// Posterior mass a state (or tie group) needs before its shapes are
    /// re-estimated, on top of `MASS_FLOOR_FRACTION * T`.
    pub min_state_mass: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_iters: 3,
            rel_tolerance: 1e-8,
            tie_groups: Vec::new(),
            transition_prior: None,
            min_state_mass: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub params: HmmParams,
    /// Log-likelihood of the starting parameters followed by that of each
    /// accepted iteration. Never decreases.
    pub log_likelihoods: Vec<f64>,
    /// For each completed iteration, whether the moment-based shape update was kept.
    pub emissions_accepted: Vec<bool>,
    /// True when an iteration was discarded because even the transition-only
    /// update lowered the likelihood, which only happens through rounding once
    /// the transitions have converged.
    pub stopped_on_decrease: bool,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.emissions_accepted.len()
    }
}

fn smooth(
    params: &HmmParams,
    history: &AnnotatedHistory,
    forward: ForwardPass,
) -> Result<ForwardBackwardCache, HmmError> {
    let backward = backward_pass(params, &forward)?;
    ForwardBackwardCache::new(params, history, forward, backward)
}

/// Generalized EM over an annotated history.
///
/// Each iteration re-estimates transitions and shapes from the current
/// posteriors. If the joint likelihood under both updates is below the current
/// one, only the transition update is taken.
pub fn train(
    params: &HmmParams,
    history: &AnnotatedHistory,
    options: &TrainOptions,
) -> Result<TrainReport, HmmError> {
    if history.annotations().is_empty() {
        return Err(HmmError::Unannotated);
    }
    params.validate()?;
    let mut current = params.clone();
    let forward = forward_pass(&current, history)?;
    if let Some(time) = forward.impossible_at() {
        return Err(HmmError::ImpossibleAnnotation { time });
    }
    let mut ll = forward.total_likelihood();
    let mut report = TrainReport {
        params: current.clone(),
        log_likelihoods: vec![ll],
        emissions_accepted: Vec::new(),
        stopped_on_decrease: false,
    };
    if options.max_iters == 0 {
        return Ok(report);
    }
    let mut cache = smooth(&current, history, forward)?;

    for iter in 0..options.max_iters {
        let transitions = reestimate_transitions_with_prior(
            &cache,
            &current.transitions,
            options.transition_prior.as_ref(),
        )?;
        let gammas: Vec<&[f64]> = cache.smoothed_posteriors().collect();
        let emissions = if options.tie_groups.is_empty() {
            per_state(
                history.frames(),
                &gammas,
                &current.emissions,
                options.min_state_mass,
            )?
        } else {
            pooled(
                history.frames(),
                &gammas,
                &current.emissions,
                &options.tie_groups,
                options.min_state_mass,
            )?
        };
        drop(gammas);

        let full = HmmParams {
            transitions,
            emissions,
        };
        let full_forward = forward_pass(&full, history)?;
        let (candidate, cand_forward, accepted) = if full_forward.total_likelihood() >= ll {
            (full, full_forward, true)
        } else {
            let partial = HmmParams {
                transitions: full.transitions,
                emissions: current.emissions.clone(),
            };
            let f = forward_pass(&partial, history)?;
            (partial, f, false)
        };
        let cand_ll = cand_forward.total_likelihood();
        if !(cand_ll >= ll) {
            report.stopped_on_decrease = true;
            break;
        }
        let gain = (cand_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        current = candidate;
        ll = cand_ll;
        report.log_likelihoods.push(ll);
        report.emissions_accepted.push(accepted);
        if gain < options.rel_tolerance || iter + 1 == options.max_iters {
            break;
        }
        cache = smooth(&current, history, cand_forward)?;
    }
    report.params = current;
    Ok(report)
}
