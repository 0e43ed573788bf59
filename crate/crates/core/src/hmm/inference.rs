//! Scaled forward-backward inference over detector-delimited segments.
//!
//! Each segment starts in state 0 with probability one. Forward values are
//! normalized per frame; the log of each normalizer is kept so unscaled values
//! and the likelihood can be rebuilt. Emissions are carried as logs and
//! exponentiated against a per-step offset, so long sequences and sharp beta
//! shapes neither underflow nor overflow.

use crate::Execution;

use super::{
    AnnotatedHistory, HmmError, HmmParams, ObservationFrame, Segment, StateIndex, Terminal,
    TransitionMatrix,
};

/// Below this the direct product normalization falls back to log space.
const TINY: f64 = 1e-250;

/// `log f_i(X_t)` for every frame and state, row-major `T x N`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionTable {
    states: usize,
    log: Vec<f64>,
}

impl EmissionTable {
    pub fn compute(
        params: &HmmParams,
        frames: &[ObservationFrame],
        exec: Execution,
    ) -> Result<Self, HmmError> {
        let states = params.num_states();
        let dims = params.dims();
        if let Some(bad) = frames.iter().find(|f| f.dims() != dims) {
            return Err(HmmError::Dimension {
                expected: dims,
                got: bad.dims(),
            });
        }
        let model = &params.emissions;
        // Per state: the constant -sum(ln B(p,q)) and the (p-1, q-1) exponents.
        let offsets: Vec<f64> = (0..states)
            .map(|i| {
                -model
                    .state_shapes(i)
                    .iter()
                    .map(|s| s.ln_normalizer())
                    .sum::<f64>()
            })
            .collect();
        let exponents: Vec<(f64, f64)> = (0..states)
            .flat_map(|i| {
                model
                    .state_shapes(i)
                    .iter()
                    .map(|s| (s.p() - 1.0, s.q() - 1.0))
            })
            .collect();
        let mut log = vec![0.0; frames.len() * states];
        exec.for_each_row(&mut log, states, 256, |t, row| {
            let logs = frames[t].logs();
            for ((out, &c), ex) in row
                .iter_mut()
                .zip(&offsets)
                .zip(exponents.chunks_exact(dims.max(1)))
            {
                *out = c + ex
                    .iter()
                    .zip(logs)
                    .map(|(&(a, b), &(lx, l1x))| a * lx + b * l1x)
                    .sum::<f64>();
            }
        });
        Ok(Self { states, log })
    }

    pub fn len(&self) -> usize {
        self.log.len() / self.states.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.log[t * self.states..(t + 1) * self.states]
    }
}

/// `log f_i(X)` for a single state: the sum of per-dimension log beta densities.
pub fn emission_density(
    params: &HmmParams,
    state: StateIndex,
    frame: &ObservationFrame,
) -> Result<f64, HmmError> {
    if frame.dims() != params.dims() {
        return Err(HmmError::Dimension {
            expected: params.dims(),
            got: frame.dims(),
        });
    }
    if state.0 >= params.num_states() {
        return Err(HmmError::Dimension {
            expected: params.num_states(),
            got: state.0 + 1,
        });
    }
    frame
        .values()
        .iter()
        .zip(params.emissions.state_shapes(state.0))
        .map(|(&x, s)| super::ln_beta_pdf(x, s))
        .sum()
}

/// One forward recursion step.
///
/// With `prev = None` this is a segment start: all mass on state 0. Otherwise
/// `prev` is the previous normalized forward vector. Writes the normalized
/// vector to `out` and its elementwise log to `ln_out` (exact even where `out`
/// underflows), and returns the log of the step's normalizer.
pub fn forward_step(
    prev: Option<(&[f64], &[f64])>,
    transitions: &TransitionMatrix,
    log_emission: &[f64],
    out: &mut [f64],
    ln_out: &mut [f64],
) -> f64 {
    let n = transitions.size();
    let Some((prev, ln_prev)) = prev else {
        out.fill(0.0);
        ln_out.fill(f64::NEG_INFINITY);
        out[0] = 1.0;
        ln_out[0] = 0.0;
        return log_emission[0];
    };
    // ln_out temporarily holds ln(pred_i) + log f_i.
    let mut peak = f64::NEG_INFINITY;
    for i in 0..n {
        let pred: f64 = (0..n).map(|j| prev[j] * transitions.get(j, i)).sum();
        let ln_pred = if pred > UNDERFLOW {
            pred.ln()
        } else {
            ln_dot((0..n).map(|j| (transitions.get(j, i), ln_prev[j])))
        };
        let v = ln_pred + log_emission[i];
        ln_out[i] = v;
        peak = peak.max(v);
    }
    let mut sum = 0.0;
    for i in 0..n {
        out[i] = (ln_out[i] - peak).exp();
        sum += out[i];
    }
    // sum >= 1 because the peak entry contributes exactly 1.
    let ln_sum = sum.ln();
    for i in 0..n {
        out[i] /= sum;
        ln_out[i] -= peak + ln_sum;
    }
    peak + ln_sum
}

const UNDERFLOW: f64 = 1e-290;

/// `ln sum_k w_k exp(l_k)` over `(w_k, l_k)` pairs, skipping zero weights.
fn ln_dot<I: Iterator<Item = (f64, f64)> + Clone>(terms: I) -> f64 {
    let logs = terms
        .filter(|&(w, l)| w > 0.0 && l > f64::NEG_INFINITY)
        .map(|(w, l)| l + w.ln());
    let peak = logs.clone().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + logs.map(|v| (v - peak).exp()).sum::<f64>().ln()
}

/// Normalized forward variables for a whole history.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    states: usize,
    alphas: Vec<f64>,
    ln_alphas: Vec<f64>,
    log_scales: Vec<f64>,
    /// Running sum of `log_scales` from the owning segment's start.
    cum_log_scales: Vec<f64>,
    segments: Vec<Segment>,
    segment_log_likelihoods: Vec<f64>,
    log_likelihood: f64,
    impossible_at: Option<usize>,
    emissions: EmissionTable,
}

/// Runs the forward recursion over every segment of `history`.
///
/// An annotation whose state has zero forward mass does not fail here: the
/// pass records it and the likelihood becomes `-inf`. Smoothing then errors.
pub fn forward_pass(
    params: &HmmParams,
    history: &AnnotatedHistory,
) -> Result<ForwardPass, HmmError> {
    forward_pass_with(params, history, Execution::default())
}

pub fn forward_pass_with(
    params: &HmmParams,
    history: &AnnotatedHistory,
    exec: Execution,
) -> Result<ForwardPass, HmmError> {
    if history.is_empty() {
        return Err(HmmError::EmptyHistory);
    }
    let states = params.num_states();
    for a in history.annotations() {
        if let Some(s) = a.state {
            if s.0 >= states {
                return Err(HmmError::Annotation(format!(
                    "state {} at frame {} outside 0..{states}",
                    s.0, a.time
                )));
            }
        }
    }
    let emissions = EmissionTable::compute(params, history.frames(), exec)?;
    let t_len = history.len();
    let segments = history.segments();
    let mut alphas = vec![0.0; t_len * states];
    let mut ln_alphas = vec![0.0; t_len * states];
    let mut log_scales = vec![0.0; t_len];
    let mut cum_log_scales = vec![0.0; t_len];
    let mut segment_log_likelihoods = Vec::with_capacity(segments.len());
    let mut impossible_at = None;

    for seg in &segments {
        let mut cum = 0.0;
        for t in seg.start..=seg.end {
            let (done, rest) = alphas.split_at_mut(t * states);
            let (ln_done, ln_rest) = ln_alphas.split_at_mut(t * states);
            let prev =
                (t > seg.start).then(|| (&done[(t - 1) * states..], &ln_done[(t - 1) * states..]));
            let scale = forward_step(
                prev,
                &params.transitions,
                emissions.row(t),
                &mut rest[..states],
                &mut ln_rest[..states],
            );
            log_scales[t] = scale;
            cum += scale;
            cum_log_scales[t] = cum;
        }
        let seg_ll = match seg.terminal {
            Terminal::Free => cum,
            Terminal::Observed(s) => {
                let ln_mass = ln_alphas[seg.end * states + s.0];
                if ln_mass == f64::NEG_INFINITY && impossible_at.is_none() {
                    impossible_at = Some(seg.end);
                }
                cum + ln_mass
            }
        };
        segment_log_likelihoods.push(seg_ll);
    }
    let log_likelihood = if impossible_at.is_some() {
        f64::NEG_INFINITY
    } else {
        segment_log_likelihoods.iter().sum()
    };
    Ok(ForwardPass {
        states,
        alphas,
        ln_alphas,
        log_scales,
        cum_log_scales,
        segments,
        segment_log_likelihoods,
        log_likelihood,
        impossible_at,
        emissions,
    })
}

impl ForwardPass {
    pub fn len(&self) -> usize {
        self.log_scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_scales.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn emissions(&self) -> &EmissionTable {
        &self.emissions
    }

    fn check_time(&self, t: usize) -> Result<(), HmmError> {
        if t < self.len() {
            Ok(())
        } else {
            Err(HmmError::TimeOutOfRange {
                time: t,
                len: self.len(),
            })
        }
    }

    /// The online filtering distribution at `t`: normalized forward values.
    pub fn filter_posterior(&self, t: usize) -> Result<&[f64], HmmError> {
        self.check_time(t)?;
        Ok(&self.alphas[t * self.states..(t + 1) * self.states])
    }

    pub fn ln_alpha(&self, t: usize) -> &[f64] {
        &self.ln_alphas[t * self.states..(t + 1) * self.states]
    }

    /// Per-frame log normalizers.
    pub fn log_scales(&self) -> &[f64] {
        &self.log_scales
    }

    /// Unscaled forward variable `alpha_t(i)`, measured from the start of `t`'s segment.
    pub fn unscaled_alpha(&self, t: usize, state: usize) -> Result<f64, HmmError> {
        self.check_time(t)?;
        Ok((self.ln_alphas[t * self.states + state] + self.cum_log_scales[t]).exp())
    }

    /// `log P(X, S | params)`; `-inf` when an annotation is impossible.
    pub fn total_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn segment_log_likelihoods(&self) -> &[f64] {
        &self.segment_log_likelihoods
    }

    /// First annotated frame whose state has zero forward mass.
    pub fn impossible_at(&self) -> Option<usize> {
        self.impossible_at
    }
}

/// Normalized backward variables.
#[derive(Clone, Debug)]
pub struct BackwardPass {
    states: usize,
    betas: Vec<f64>,
    /// Elementwise log of `betas`, exact where `betas` underflows.
    ln_betas: Vec<f64>,
    /// `log` of the factor turning `betas` back into unscaled values.
    cum_log_scales: Vec<f64>,
}

impl BackwardPass {
    pub fn beta(&self, t: usize) -> &[f64] {
        &self.betas[t * self.states..(t + 1) * self.states]
    }

    pub fn ln_beta(&self, t: usize) -> &[f64] {
        &self.ln_betas[t * self.states..(t + 1) * self.states]
    }

    pub fn unscaled_beta(&self, t: usize, state: usize) -> f64 {
        self.betas[t * self.states + state] * self.cum_log_scales[t].exp()
    }
}

/// Runs the backward recursion segment by segment.
///
/// Segments ending in an observed state start from that state's indicator; free
/// segments start from all ones.
pub fn backward_pass(params: &HmmParams, forward: &ForwardPass) -> Result<BackwardPass, HmmError> {
    if let Some(time) = forward.impossible_at {
        return Err(HmmError::ImpossibleAnnotation { time });
    }
    let n = forward.states;
    if params.num_states() != n {
        return Err(HmmError::Dimension {
            expected: n,
            got: params.num_states(),
        });
    }
    let a = &params.transitions;
    let reachable: Vec<bool> = (0..n).map(|j| (0..n).any(|i| a.get(i, j) > 0.0)).collect();
    let t_len = forward.len();
    let mut betas = vec![0.0; t_len * n];
    let mut ln_betas = vec![f64::NEG_INFINITY; t_len * n];
    let mut cum_log_scales = vec![0.0; t_len];
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];

    for seg in &forward.segments {
        let (end, ln_end) = (seg.end * n, &mut ln_betas[seg.end * n..(seg.end + 1) * n]);
        match seg.terminal {
            Terminal::Free => {
                betas[end..end + n].fill(1.0 / n as f64);
                ln_end.fill(-(n as f64).ln());
            }
            Terminal::Observed(s) => {
                betas[end + s.0] = 1.0;
                ln_end[s.0] = 0.0;
            }
        }
        cum_log_scales[seg.end] = match seg.terminal {
            Terminal::Free => (n as f64).ln(),
            Terminal::Observed(_) => 0.0,
        };
        for t in (seg.start..seg.end).rev() {
            let (ln_head, ln_tail) = ln_betas.split_at_mut((t + 1) * n);
            let ln_next = &ln_tail[..n];
            let log_e = forward.emissions.row(t + 1);
            let mut peak = f64::NEG_INFINITY;
            for j in 0..n {
                v[j] = if reachable[j] {
                    log_e[j] + ln_next[j]
                } else {
                    f64::NEG_INFINITY
                };
                peak = peak.max(v[j]);
            }
            if peak == f64::NEG_INFINITY {
                return Err(HmmError::ZeroMass { time: t });
            }
            for j in 0..n {
                w[j] = (v[j] - peak).exp();
            }
            let cur = &mut betas[t * n..(t + 1) * n];
            let mut sum = 0.0;
            for (i, out) in cur.iter_mut().enumerate() {
                *out = a.row(i).iter().zip(&w).map(|(aij, wj)| aij * wj).sum();
                sum += *out;
            }
            if !(sum > 0.0) {
                return Err(HmmError::ZeroMass { time: t });
            }
            let ln_sum = sum.ln();
            let ln_cur = &mut ln_head[t * n..];
            for i in 0..n {
                cur[i] /= sum;
                ln_cur[i] = if cur[i] > UNDERFLOW {
                    cur[i].ln()
                } else {
                    ln_dot(a.row(i).iter().copied().zip(v.iter().copied())) - peak - ln_sum
                };
            }
            cum_log_scales[t] = ln_sum + peak + cum_log_scales[t + 1];
        }
    }
    Ok(BackwardPass {
        states: n,
        betas,
        ln_betas,
        cum_log_scales,
    })
}

/// Normalizes `terms` in place. When the direct sum is tiny, recomputes from
/// the supplied log terms instead.
fn normalize_with_fallback(terms: &mut [f64], log_terms: impl Fn(usize) -> f64) -> bool {
    let sum: f64 = terms.iter().sum();
    if sum > TINY && sum.is_finite() {
        terms.iter_mut().for_each(|v| *v /= sum);
        return true;
    }
    let logs: Vec<f64> = (0..terms.len()).map(log_terms).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY || peak.is_nan() {
        return false;
    }
    let mut total = 0.0;
    for (v, l) in terms.iter_mut().zip(&logs) {
        *v = (l - peak).exp();
        total += *v;
    }
    terms.iter_mut().for_each(|v| *v /= total);
    true
}

/// Both passes plus the smoothed marginals.
#[derive(Clone, Debug)]
pub struct ForwardBackwardCache {
    pub forward: ForwardPass,
    pub backward: BackwardPass,
    transitions: TransitionMatrix,
    transition_times: Vec<bool>,
    gammas: Vec<f64>,
}

/// Forward pass, backward pass and smoothed marginals in one go.
pub fn infer(
    params: &HmmParams,
    history: &AnnotatedHistory,
) -> Result<ForwardBackwardCache, HmmError> {
    infer_with(params, history, Execution::default())
}

pub fn infer_with(
    params: &HmmParams,
    history: &AnnotatedHistory,
    exec: Execution,
) -> Result<ForwardBackwardCache, HmmError> {
    let forward = forward_pass_with(params, history, exec)?;
    let backward = backward_pass(params, &forward)?;
    ForwardBackwardCache::new(params, history, forward, backward)
}

impl ForwardBackwardCache {
    pub fn new(
        params: &HmmParams,
        history: &AnnotatedHistory,
        forward: ForwardPass,
        backward: BackwardPass,
    ) -> Result<Self, HmmError> {
        let n = forward.states;
        let t_len = forward.len();
        let mut gammas = vec![0.0; t_len * n];
        for t in 0..t_len {
            let alpha = forward.filter_posterior(t)?;
            let ln_alpha = forward.ln_alpha(t);
            let beta = backward.beta(t);
            let ln_beta = backward.ln_beta(t);
            let g = &mut gammas[t * n..(t + 1) * n];
            for i in 0..n {
                g[i] = alpha[i] * beta[i];
            }
            if !normalize_with_fallback(g, |i| ln_alpha[i] + ln_beta[i]) {
                return Err(HmmError::ZeroMass { time: t });
            }
        }
        let transition_times = (0..t_len).map(|t| history.is_transition_time(t)).collect();
        Ok(Self {
            forward,
            backward,
            transitions: params.transitions.clone(),
            transition_times,
            gammas,
        })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.forward.states
    }

    pub fn filter_posterior(&self, t: usize) -> Result<&[f64], HmmError> {
        self.forward.filter_posterior(t)
    }

    pub fn total_likelihood(&self) -> f64 {
        self.forward.total_likelihood()
    }

    /// Smoothed marginal `P(S_t = i | X, S)`.
    pub fn smoothed_posterior(&self, t: usize) -> Result<&[f64], HmmError> {
        self.forward.check_time(t)?;
        let n = self.num_states();
        Ok(&self.gammas[t * n..(t + 1) * n])
    }

    pub fn smoothed_posteriors(&self) -> impl Iterator<Item = &[f64]> {
        self.gammas.chunks(self.num_states())
    }

    /// Whether `t -> t+1` is a within-segment transition.
    pub fn is_transition_time(&self, t: usize) -> bool {
        self.transition_times.get(t).copied().unwrap_or(false)
    }

    /// Pairwise posterior `P(S_t = i, S_{t+1} = j | X, S)` as a row-major
    /// `N x N` matrix. Undefined where `t` ends a segment or is the last frame.
    pub fn pairwise_posterior(&self, t: usize) -> Result<Vec<f64>, HmmError> {
        self.forward.check_time(t)?;
        if !self.is_transition_time(t) {
            return Err(HmmError::SegmentBoundary { time: t });
        }
        let n = self.num_states();
        let mut xi = vec![0.0; n * n];
        let mut w = vec![0.0; n];
        let mut ln_w = vec![0.0; n];
        self.pairwise_into(t, &mut xi, &mut w, &mut ln_w)?;
        Ok(xi)
    }

    fn pairwise_into(
        &self,
        t: usize,
        xi: &mut [f64],
        w: &mut [f64],
        ln_w: &mut [f64],
    ) -> Result<(), HmmError> {
        let n = self.num_states();
        let alpha = &self.forward.alphas[t * n..(t + 1) * n];
        let ln_alpha = self.forward.ln_alpha(t);
        let ln_beta = self.backward.ln_beta(t + 1);
        let log_e = self.forward.emissions.row(t + 1);
        let a = &self.transitions;
        let mut peak = f64::NEG_INFINITY;
        for j in 0..n {
            ln_w[j] = log_e[j] + ln_beta[j];
            peak = peak.max(ln_w[j]);
        }
        if peak == f64::NEG_INFINITY {
            return Err(HmmError::ZeroMass { time: t });
        }
        for j in 0..n {
            w[j] = (ln_w[j] - peak).exp();
        }
        for i in 0..n {
            let ai = alpha[i];
            let row = a.row(i);
            for j in 0..n {
                xi[i * n + j] = ai * row[j] * w[j];
            }
        }
        let ok = normalize_with_fallback(xi, |k| {
            let (i, j) = (k / n, k % n);
            ln_alpha[i] + a.get(i, j).ln() + ln_w[j]
        });
        if ok {
            Ok(())
        } else {
            Err(HmmError::ZeroMass { time: t })
        }
    }

    /// Sum of pairwise posteriors over all within-segment transition times.
    pub fn expected_transitions(&self) -> Result<Vec<f64>, HmmError> {
        let n = self.num_states();
        let mut total = vec![0.0; n * n];
        let mut xi = vec![0.0; n * n];
        let mut w = vec![0.0; n];
        let mut ln_w = vec![0.0; n];
        for t in 0..self.len() {
            if !self.is_transition_time(t) {
                continue;
            }
            self.pairwise_into(t, &mut xi, &mut w, &mut ln_w)?;
            total.iter_mut().zip(&xi).for_each(|(acc, v)| *acc += v);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{
        default_transition_matrix, Annotation, BetaShape, ObservableModel, StateSpace,
    };

    fn uniform_params(n: usize, m: usize) -> HmmParams {
        let space = StateSpace::new(n).unwrap();
        HmmParams::new(
            default_transition_matrix(&space),
            ObservableModel::filled(space.len(), m, BetaShape::new(1.0, 1.0).unwrap()),
        )
        .unwrap()
    }

    fn history(values: &[f64], annotations: Vec<Annotation>) -> AnnotatedHistory {
        AnnotatedHistory::from_parts(
            values
                .iter()
                .map(|&v| ObservationFrame::new(vec![v]).unwrap())
                .collect(),
            annotations,
        )
        .unwrap()
    }

    #[test]
    fn single_frame_single_tracker() {
        let space = StateSpace::new(1).unwrap();
        let params = HmmParams::initial(&crate::hmm::ObservableLayout::uniform(1, 1)).unwrap();
        let h = history(&[0.7], vec![]);
        let f = forward_pass(&params, &h).unwrap();
        assert_eq!(f.filter_posterior(0).unwrap(), &[1.0, 0.0]);
        let f1 = beta_of(0.7, 2.0, 1.0);
        assert!((f.unscaled_alpha(0, 0).unwrap() - f1).abs() < 1e-14);
        assert_eq!(f.unscaled_alpha(0, 1).unwrap(), 0.0);
        assert!((f.total_likelihood() - f1.ln()).abs() < 1e-14);
        let _ = space;
    }

    fn beta_of(x: f64, p: f64, q: f64) -> f64 {
        super::super::beta_pdf(x, &BetaShape::new(p, q).unwrap()).unwrap()
    }

    #[test]
    fn uniform_emissions_follow_powers_of_first_row() {
        let params = uniform_params(2, 1);
        let a = &params.transitions;
        let h = history(&[0.5, 0.5, 0.5], vec![]);
        let f = forward_pass(&params, &h).unwrap();
        // With f = 1 the unscaled forward vector is e_0 A^t.
        let mut v = vec![1.0, 0.0, 0.0, 0.0];
        for t in 0..3 {
            for (i, &vi) in v.iter().enumerate() {
                assert!((f.unscaled_alpha(t, i).unwrap() - vi).abs() < 1e-14);
            }
            v = (0..4)
                .map(|i| (0..4).map(|j| v[j] * a.get(j, i)).sum())
                .collect();
        }
        assert!(f.total_likelihood().abs() < 1e-12);
        // One step from the segment start the filter equals A's first row.
        let post = f.filter_posterior(1).unwrap();
        for (p, e) in post.iter().zip(a.row(0)) {
            assert!((p - e).abs() < 1e-14);
        }
    }

    #[test]
    fn final_segment_betas_are_flat() {
        let params = uniform_params(1, 1);
        let h = history(&[0.2, 0.4, 0.9], vec![]);
        let c = infer(&params, &h).unwrap();
        assert_eq!(c.backward.unscaled_beta(2, 0), 1.0);
        assert_eq!(c.backward.unscaled_beta(2, 1), 1.0);
    }

    #[test]
    fn annotated_terminal_betas_are_indicators() {
        let params = uniform_params(1, 1);
        let h = history(
            &[0.2, 0.4, 0.9],
            vec![Annotation::observed(1, StateIndex(0))],
        );
        let c = infer(&params, &h).unwrap();
        assert_eq!(c.backward.unscaled_beta(1, 0), 1.0);
        assert_eq!(c.backward.unscaled_beta(1, 1), 0.0);
        assert_eq!(c.smoothed_posterior(1).unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn impossible_annotation_gives_neg_infinity() {
        let params = uniform_params(2, 1);
        // Frame 0 starts a segment, so only state 0 is possible there.
        let h = history(&[0.5, 0.5], vec![Annotation::observed(0, StateIndex(3))]);
        let f = forward_pass(&params, &h).unwrap();
        assert_eq!(f.total_likelihood(), f64::NEG_INFINITY);
        assert_eq!(f.impossible_at(), Some(0));
        assert!(matches!(
            backward_pass(&params, &f),
            Err(HmmError::ImpossibleAnnotation { time: 0 })
        ));
    }

    #[test]
    fn pairwise_rejects_segment_boundaries() {
        let params = uniform_params(1, 1);
        let h = history(
            &[0.2, 0.4, 0.9, 0.5],
            vec![Annotation::observed(1, StateIndex(0))],
        );
        let c = infer(&params, &h).unwrap();
        assert!(matches!(
            c.pairwise_posterior(1),
            Err(HmmError::SegmentBoundary { time: 1 })
        ));
        assert!(matches!(
            c.pairwise_posterior(3),
            Err(HmmError::SegmentBoundary { time: 3 })
        ));
        let xi = c.pairwise_posterior(2).unwrap();
        assert!((xi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let layout = crate::hmm::ObservableLayout::uniform(3, 3);
        let params = HmmParams::initial(&layout).unwrap();
        let frames: Vec<ObservationFrame> = (0..5000)
            .map(|t| {
                let v = 0.05 + 0.9 * ((t * 7919) % 101) as f64 / 101.0;
                ObservationFrame::new(vec![v; 9]).unwrap()
            })
            .collect();
        let h =
            AnnotatedHistory::from_parts(frames, vec![Annotation::observed(2500, StateIndex(0))])
                .unwrap();
        let c = infer(&params, &h).unwrap();
        assert!(c.total_likelihood().is_finite());
        for g in c.smoothed_posteriors() {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn emission_density_sums_dimensions() {
        let space = StateSpace::new(1).unwrap();
        let model = ObservableModel::from_rows(vec![
            vec![
                BetaShape::new(2.0, 1.0).unwrap(),
                BetaShape::new(2.0, 1.0).unwrap(),
            ],
            vec![
                BetaShape::new(1.0, 1.0).unwrap(),
                BetaShape::new(1.0, 1.0).unwrap(),
            ],
        ])
        .unwrap();
        let params = HmmParams::new(default_transition_matrix(&space), model).unwrap();
        let f = ObservationFrame::new(vec![0.5, 0.5]).unwrap();
        assert!(emission_density(&params, StateIndex(0), &f).unwrap().abs() < 1e-14);
        assert_eq!(emission_density(&params, StateIndex(1), &f).unwrap(), 0.0);
        let bad = ObservationFrame::new(vec![0.5]).unwrap();
        assert!(emission_density(&params, StateIndex(0), &bad).is_err());
    }
}
