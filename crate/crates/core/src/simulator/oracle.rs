//! Exhaustive enumeration over every state sequence of a short history.
//!
//! Independent of the forward-backward code: emissions come straight from
//! [`ln_beta_pdf`] and every sequence's joint probability is accumulated in
//! log space.

use crate::hmm::{ln_beta_pdf, AnnotatedHistory, HmmParams};

use super::SimError;

/// Largest `N^T` the oracle will enumerate.
pub const MAX_SEQUENCES: f64 = 1e7;

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub log_likelihood: f64,
    /// `P(S_t = i | all frames, all annotations)`, one vector per frame.
    pub smoothed: Vec<Vec<f64>>,
    /// Row-major `N x N` pairwise posterior for each frame `t` whose
    /// transition `t -> t+1` stays inside a segment, `None` elsewhere.
    pub pairwise: Vec<Option<Vec<f64>>>,
}

fn check_size(states: usize, frames: usize) -> Result<(), SimError> {
    let count = (states as f64).powi(frames as i32);
    if count > MAX_SEQUENCES {
        return Err(SimError::OracleTooLarge { states, frames });
    }
    Ok(())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + values.iter().map(|v| (v - peak).exp()).sum::<f64>().ln()
}

/// Log joint probability of every sequence, indexed in base-`N` with frame 0
/// as the most significant digit. Inconsistent sequences get `-inf`.
fn sequence_weights(params: &HmmParams, history: &AnnotatedHistory) -> Result<Vec<f64>, SimError> {
    let states = params.num_states();
    let len = history.len();
    check_size(states, len)?;
    let mut ln_f = vec![0.0; len * states];
    for (t, frame) in history.frames().iter().enumerate() {
        for i in 0..states {
            let shapes = params.emissions.state_shapes(i);
            let mut acc = 0.0;
            for (&x, s) in frame.values().iter().zip(shapes) {
                acc += ln_beta_pdf(x, s)?;
            }
            ln_f[t * states + i] = acc;
        }
    }
    let ln_a: Vec<f64> = params
        .transitions
        .as_slice()
        .iter()
        .map(|a| a.ln())
        .collect();
    let mut starts = vec![false; len];
    let mut fixed = vec![None; len];
    if len > 0 {
        starts[0] = true;
    }
    for a in history.annotations() {
        fixed[a.time] = a.state.map(|s| s.0);
        if a.time + 1 < len {
            starts[a.time + 1] = true;
        }
    }

    let total = states.pow(len as u32);
    let mut seq = vec![0usize; len];
    let mut weights = Vec::with_capacity(total);
    for code in 0..total {
        let mut rest = code;
        for t in (0..len).rev() {
            seq[t] = rest % states;
            rest /= states;
        }
        let mut w = 0.0;
        for t in 0..len {
            let s = seq[t];
            if (starts[t] && s != 0) || fixed[t].is_some_and(|f| f != s) {
                w = f64::NEG_INFINITY;
                break;
            }
            if !starts[t] {
                w += ln_a[seq[t - 1] * states + s];
            }
            w += ln_f[t * states + s];
        }
        weights.push(w);
    }
    Ok(weights)
}

/// Likelihood, smoothed marginals and pairwise posteriors by enumeration.
pub fn brute_force(params: &HmmParams, history: &AnnotatedHistory) -> Result<BruteForce, SimError> {
    let states = params.num_states();
    let len = history.len();
    let weights = sequence_weights(params, history)?;
    let log_likelihood = log_sum_exp(&weights);
    if log_likelihood == f64::NEG_INFINITY {
        return Err(SimError::ZeroLikelihood);
    }
    let mut smoothed = vec![vec![0.0; states]; len];
    let mut pairwise: Vec<Option<Vec<f64>>> = (0..len)
        .map(|t| {
            history
                .is_transition_time(t)
                .then(|| vec![0.0; states * states])
        })
        .collect();
    let mut digits = vec![0usize; len];
    for (code, &w) in weights.iter().enumerate() {
        if w == f64::NEG_INFINITY {
            continue;
        }
        let p = (w - log_likelihood).exp();
        let mut rest = code;
        for t in (0..len).rev() {
            digits[t] = rest % states;
            rest /= states;
        }
        for t in 0..len {
            smoothed[t][digits[t]] += p;
            if let Some(xi) = pairwise[t].as_mut() {
                xi[digits[t] * states + digits[t + 1]] += p;
            }
        }
    }
    Ok(BruteForce {
        log_likelihood,
        smoothed,
        pairwise,
    })
}

/// `log P(X, S | params)` by enumeration.
pub fn brute_force_likelihood(
    params: &HmmParams,
    history: &AnnotatedHistory,
) -> Result<f64, SimError> {
    Ok(log_sum_exp(&sequence_weights(params, history)?))
}

/// Smoothed marginals by enumeration.
pub fn brute_force_posterior(
    params: &HmmParams,
    history: &AnnotatedHistory,
) -> Result<Vec<Vec<f64>>, SimError> {
    Ok(brute_force(params, history)?.smoothed)
}

/// Filtering distributions by enumeration: for each `t`, the smoothed
/// marginal of the last frame of the history truncated after `t`, with any
/// annotation at `t` itself removed.
pub fn brute_force_filtered(
    params: &HmmParams,
    history: &AnnotatedHistory,
) -> Result<Vec<Vec<f64>>, SimError> {
    (0..history.len())
        .map(|t| {
            let truncated = AnnotatedHistory::from_parts(
                history.frames()[..=t].to_vec(),
                history
                    .annotations()
                    .iter()
                    .filter(|a| a.time < t)
                    .cloned()
                    .collect(),
            )?;
            let mut smoothed = brute_force(params, &truncated)?.smoothed;
            Ok(smoothed.pop().expect("truncated history is non-empty"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{Annotation, ObservableLayout, ObservationFrame, StateIndex};

    fn history(values: &[f64], annotations: Vec<Annotation>) -> AnnotatedHistory {
        let frames = values
            .iter()
            .map(|&v| ObservationFrame::new(vec![v]).unwrap())
            .collect();
        AnnotatedHistory::from_parts(frames, annotations).unwrap()
    }

    #[test]
    fn single_frame_forced_start() {
        let params = HmmParams::initial(&ObservableLayout::uniform(1, 1)).unwrap();
        let bf = brute_force(&params, &history(&[0.3], vec![])).unwrap();
        assert_eq!(bf.smoothed, vec![vec![1.0, 0.0]]);
        // Beta(2,1) at 0.3 is 0.6.
        assert!((bf.log_likelihood - 0.6f64.ln()).abs() < 1e-14);
        assert!(bf.pairwise[0].is_none());
    }

    #[test]
    fn two_frames_by_hand() {
        let params = HmmParams::initial(&ObservableLayout::uniform(1, 1)).unwrap();
        let h = history(&[0.3, 0.8], vec![]);
        let a = params.transitions.row(0).to_vec();
        // f_0(x) = 2x, f_1(x) = 2(1-x).
        let w0 = 0.6 * a[0] * 1.6;
        let w1 = 0.6 * a[1] * 0.4;
        let bf = brute_force(&params, &h).unwrap();
        assert!((bf.log_likelihood - (w0 + w1).ln()).abs() < 1e-13);
        assert!((bf.smoothed[1][1] - w1 / (w0 + w1)).abs() < 1e-14);
        let xi = bf.pairwise[0].as_ref().unwrap();
        assert!((xi[1] - w1 / (w0 + w1)).abs() < 1e-14);
        assert_eq!(xi[2], 0.0);
    }

    #[test]
    fn annotation_pins_state_and_resets() {
        let params = HmmParams::initial(&ObservableLayout::uniform(1, 1)).unwrap();
        let h = history(
            &[0.3, 0.2, 0.9],
            vec![Annotation::observed(1, StateIndex(1))],
        );
        let bf = brute_force(&params, &h).unwrap();
        assert_eq!(bf.smoothed[1], vec![0.0, 1.0]);
        assert_eq!(bf.smoothed[2], vec![1.0, 0.0]);
        assert!(bf.pairwise[1].is_none());
        let filtered = brute_force_filtered(&params, &h).unwrap();
        // Filtering at the annotated frame ignores the annotation itself.
        assert!(filtered[1][0] > 0.0 && filtered[1][1] > 0.0);
    }

    #[test]
    fn impossible_annotation_is_reported() {
        let params = HmmParams::initial(&ObservableLayout::uniform(1, 1)).unwrap();
        let h = history(&[0.3], vec![Annotation::observed(0, StateIndex(1))]);
        assert_eq!(brute_force(&params, &h), Err(SimError::ZeroLikelihood));
        assert_eq!(brute_force_likelihood(&params, &h), Ok(f64::NEG_INFINITY));
    }

    #[test]
    fn size_cap() {
        let params = HmmParams::initial(&ObservableLayout::uniform(3, 1)).unwrap();
        let h = history(&[0.5; 8], vec![]);
        assert!(matches!(
            brute_force(&params, &h),
            Err(SimError::OracleTooLarge {
                states: 8,
                frames: 8
            })
        ));
    }
}
