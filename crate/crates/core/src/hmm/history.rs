use serde::{Deserialize, Serialize};

use super::{HmmError, StateIndex};

/// Observables are clamped to `[EPS, 1 - EPS]` so beta densities stay finite.
pub const OBSERVABLE_EPS: f64 = 1e-6;

/// One frame's observation vector, every component inside `(0,1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ObservationFrame {
    values: Vec<f64>,
    /// `(ln x, ln(1-x))` per component.
    logs: Vec<(f64, f64)>,
}

impl TryFrom<Vec<f64>> for ObservationFrame {
    type Error = HmmError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        ObservationFrame::new(values)
    }
}

impl From<ObservationFrame> for Vec<f64> {
    fn from(f: ObservationFrame) -> Self {
        f.values
    }
}

impl ObservationFrame {
    /// Accepts values in `[0,1]` and clamps them into `[EPS, 1 - EPS]`.
    pub fn new(mut values: Vec<f64>) -> Result<Self, HmmError> {
        for v in values.iter_mut() {
            if !(0.0..=1.0).contains(v) {
                return Err(HmmError::Domain { value: *v });
            }
            *v = v.clamp(OBSERVABLE_EPS, 1.0 - OBSERVABLE_EPS);
        }
        let logs = values.iter().map(|&v| (v.ln(), (-v).ln_1p())).collect();
        Ok(Self { values, logs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn logs(&self) -> &[(f64, f64)] {
        &self.logs
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }
}

/// A detector-fixed point in the history.
///
/// `state` is the observed hidden state at `time`. `None` marks a frame where
/// the chain was reset (channels reinitialized) without a usable state label;
/// the segment ending there is treated like the final, unterminated segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub time: usize,
    pub state: Option<StateIndex>,
}

impl Annotation {
    pub fn observed(time: usize, state: StateIndex) -> Self {
        Self {
            time,
            state: Some(state),
        }
    }

    pub fn unlabeled(time: usize) -> Self {
        Self { time, state: None }
    }
}

/// How a segment ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminal {
    Observed(StateIndex),
    Free,
}

/// Inclusive frame range `[start, end]` starting in the all-correct state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub terminal: Terminal,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }
}

/// Observation frames (zero-based times `0..T`) plus detector annotations with
/// strictly increasing times.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedHistory {
    frames: Vec<ObservationFrame>,
    annotations: Vec<Annotation>,
}

impl AnnotatedHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        frames: Vec<ObservationFrame>,
        annotations: Vec<Annotation>,
    ) -> Result<Self, HmmError> {
        let mut h = Self {
            frames,
            annotations: Vec::with_capacity(annotations.len()),
        };
        if let Some(first) = h.frames.first() {
            let m = first.dims();
            if let Some(bad) = h.frames.iter().find(|f| f.dims() != m) {
                return Err(HmmError::Dimension {
                    expected: m,
                    got: bad.dims(),
                });
            }
        }
        for a in annotations {
            h.annotate(a)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, frame: ObservationFrame) -> Result<usize, HmmError> {
        if let Some(first) = self.frames.first() {
            if first.dims() != frame.dims() {
                return Err(HmmError::Dimension {
                    expected: first.dims(),
                    got: frame.dims(),
                });
            }
        }
        self.frames.push(frame);
        Ok(self.frames.len() - 1)
    }

    pub fn annotate(&mut self, a: Annotation) -> Result<(), HmmError> {
        if a.time >= self.frames.len() {
            return Err(HmmError::Annotation(format!(
                "time {} beyond history length {}",
                a.time,
                self.frames.len()
            )));
        }
        if let Some(last) = self.annotations.last() {
            if a.time <= last.time {
                return Err(HmmError::Annotation(format!(
                    "time {} not after previous annotation {}",
                    a.time, last.time
                )));
            }
        }
        self.annotations.push(a);
        Ok(())
    }

    pub fn frames(&self) -> &[ObservationFrame] {
        &self.frames
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<usize> {
        self.frames.first().map(ObservationFrame::dims)
    }

    pub fn has_observed_annotation(&self) -> bool {
        self.annotations.iter().any(|a| a.state.is_some())
    }

    /// Splits the history at annotation times. The trailing segment after the
    /// last annotation is omitted when empty.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::with_capacity(self.annotations.len() + 1);
        let mut start = 0;
        for a in &self.annotations {
            out.push(Segment {
                start,
                end: a.time,
                terminal: a.state.map_or(Terminal::Free, Terminal::Observed),
            });
            start = a.time + 1;
        }
        if start < self.frames.len() {
            out.push(Segment {
                start,
                end: self.frames.len() - 1,
                terminal: Terminal::Free,
            });
        }
        out
    }

    /// Times `t` whose transition `t -> t+1` stays inside a segment.
    pub fn is_transition_time(&self, t: usize) -> bool {
        t + 1 < self.frames.len()
            && self
                .annotations
                .binary_search_by_key(&t, |a| a.time)
                .is_err()
    }

    /// The sub-history from `start` to the end, with times shifted to begin at 0.
    /// `start` must be 0 or directly follow an annotation.
    pub fn suffix_from(&self, start: usize) -> Result<Self, HmmError> {
        if start > 0
            && self
                .annotations
                .binary_search_by_key(&(start - 1), |a| a.time)
                .is_err()
        {
            return Err(HmmError::Annotation(format!(
                "frame {start} does not start a segment"
            )));
        }
        Ok(Self {
            frames: self.frames[start.min(self.frames.len())..].to_vec(),
            annotations: self
                .annotations
                .iter()
                .filter(|a| a.time >= start)
                .map(|a| Annotation {
                    time: a.time - start,
                    state: a.state,
                })
                .collect(),
        })
    }

    /// Start of the segment that ends at the last annotation, if any.
    pub fn last_segment_start(&self) -> Option<usize> {
        let n = self.annotations.len();
        match n {
            0 => None,
            1 => Some(0),
            _ => Some(self.annotations[n - 2].time + 1),
        }
    }
}
