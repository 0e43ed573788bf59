use serde::{Deserialize, Serialize};

use super::{BetaShape, HmmError, StateIndex, StateSpace};

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Row-stochastic `N x N` transition matrix, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    size: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = HmmError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        TransitionMatrix::from_rows(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.data.chunks(m.size).map(<[f64]>::to_vec).collect()
    }
}

impl TransitionMatrix {
    /// Builds a matrix from rows that must already be stochastic.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, HmmError> {
        let size = rows.len();
        if size == 0 {
            return Err(HmmError::Transitions("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(size * size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(HmmError::Transitions(format!(
                    "row {i} has {} entries, expected {size}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        let m = Self { size, data };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from arbitrary nonnegative rows, normalizing each to sum 1.
    pub fn normalized(size: usize, mut data: Vec<f64>) -> Result<Self, HmmError> {
        if data.len() != size * size {
            return Err(HmmError::Dimension {
                expected: size * size,
                got: data.len(),
            });
        }
        for (i, row) in data.chunks_mut(size).enumerate() {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || !sum.is_finite() || row.iter().any(|&v| v < 0.0) {
                return Err(HmmError::Transitions(format!(
                    "row {i} cannot be normalized"
                )));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self { size, data })
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        for (i, row) in self.data.chunks(self.size).enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(HmmError::Transitions(format!(
                    "row {i} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(HmmError::Transitions(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Number of states.
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.size..(from + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.size)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Which channel an observable dimension belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimOwner {
    Tracker(usize),
    /// Computed from all channels together; its default shape follows the
    /// state's strict-majority bit.
    Shared,
}

/// How the per-frame observation vector is assembled: each channel's own
/// observables in channel order, followed by the shared ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableLayout {
    pub arities: Vec<usize>,
    #[serde(default)]
    pub shared: usize,
}

impl ObservableLayout {
    pub fn uniform(n: usize, per_tracker: usize) -> Self {
        Self {
            arities: vec![per_tracker; n],
            shared: 0,
        }
    }

    pub fn trackers(&self) -> usize {
        self.arities.len()
    }

    /// Total dimension `m` of the observation vector.
    pub fn dims(&self) -> usize {
        self.arities.iter().sum::<usize>() + self.shared
    }

    pub fn owners(&self) -> Vec<DimOwner> {
        let mut owners: Vec<DimOwner> = self
            .arities
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(DimOwner::Tracker(c), k))
            .collect();
        owners.extend(std::iter::repeat_n(DimOwner::Shared, self.shared));
        owners
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        StateSpace::new(self.trackers())?;
        if self.dims() == 0 {
            return Err(HmmError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        Ok(())
    }
}

/// Beta shapes for every (state, observable dimension) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<BetaShape>>", into = "Vec<Vec<BetaShape>>")]
pub struct ObservableModel {
    states: usize,
    dims: usize,
    shapes: Vec<BetaShape>,
}

impl TryFrom<Vec<Vec<BetaShape>>> for ObservableModel {
    type Error = HmmError;

    fn try_from(rows: Vec<Vec<BetaShape>>) -> Result<Self, Self::Error> {
        ObservableModel::from_rows(rows)
    }
}

impl From<ObservableModel> for Vec<Vec<BetaShape>> {
    fn from(m: ObservableModel) -> Self {
        m.shapes.chunks(m.dims).map(<[BetaShape]>::to_vec).collect()
    }
}

impl ObservableModel {
    pub fn from_rows(rows: Vec<Vec<BetaShape>>) -> Result<Self, HmmError> {
        let states = rows.len();
        let dims = rows.first().map_or(0, Vec::len);
        if states == 0 || dims == 0 {
            return Err(HmmError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        let mut shapes = Vec::with_capacity(states * dims);
        for row in rows {
            if row.len() != dims {
                return Err(HmmError::Dimension {
                    expected: dims,
                    got: row.len(),
                });
            }
            shapes.extend(row);
        }
        Ok(Self {
            states,
            dims,
            shapes,
        })
    }

    pub fn filled(states: usize, dims: usize, shape: BetaShape) -> Self {
        Self {
            states,
            dims,
            shapes: vec![shape; states * dims],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn shape(&self, state: usize, dim: usize) -> &BetaShape {
        &self.shapes[state * self.dims + dim]
    }

    pub fn set_shape(&mut self, state: usize, dim: usize, shape: BetaShape) {
        self.shapes[state * self.dims + dim] = shape;
    }

    pub fn state_shapes(&self, state: usize) -> &[BetaShape] {
        &self.shapes[state * self.dims..(state + 1) * self.dims]
    }
}

/// The model parameters: transitions plus the observable densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub transitions: TransitionMatrix,
    pub emissions: ObservableModel,
}

impl HmmParams {
    pub fn new(
        transitions: TransitionMatrix,
        emissions: ObservableModel,
    ) -> Result<Self, HmmError> {
        let p = Self {
            transitions,
            emissions,
        };
        p.validate()?;
        Ok(p)
    }

    /// The default initial model for `layout`.
    pub fn initial(layout: &ObservableLayout) -> Result<Self, HmmError> {
        layout.validate()?;
        let space = StateSpace::new(layout.trackers())?;
        Ok(Self {
            transitions: default_transition_matrix(&space),
            emissions: default_observable_model(&space, &layout.owners())?,
        })
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let n_states = self.transitions.size();
        if !n_states.is_power_of_two() || n_states < 2 {
            return Err(HmmError::Transitions(format!(
                "{n_states} states is not 2^n for n >= 1"
            )));
        }
        StateSpace::new(n_states.trailing_zeros() as usize)?;
        if self.emissions.states() != n_states {
            return Err(HmmError::Dimension {
                expected: n_states,
                got: self.emissions.states(),
            });
        }
        self.transitions.validate()
    }

    pub fn num_states(&self) -> usize {
        self.transitions.size()
    }

    pub fn dims(&self) -> usize {
        self.emissions.dims()
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::new(self.num_states().trailing_zeros() as usize)
            .expect("validated parameters have a valid state count")
    }
}

/// The initial transition matrix: self-transitions dominate, the all-correct
/// state is never re-entered, and the all-failed state is nearly absorbing.
///
/// Cells are assigned in layers, later layers overwriting earlier ones: 0.05
/// everywhere, 1e-10 on the last row, 0.001 on the last column, 0 on the first
/// column, 0.98 on the diagonal. Rows are then normalized.
pub fn default_transition_matrix(space: &StateSpace) -> TransitionMatrix {
    let size = space.len();
    let mut data = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let mut v = 0.05;
            if i == size - 1 {
                v = 1e-10;
            }
            if j == size - 1 {
                v = 0.001;
            }
            if j == 0 {
                v = 0.0;
            }
            if i == j {
                v = 0.98;
            }
            data[i * size + j] = v;
        }
    }
    TransitionMatrix::normalized(size, data).expect("diagonal keeps every row positive")
}

/// Initial observable shapes: `(2,1)` where the owning channel is correct and
/// `(1,2)` where it has failed.
pub fn default_observable_model(
    space: &StateSpace,
    owners: &[DimOwner],
) -> Result<ObservableModel, HmmError> {
    if owners.is_empty() {
        return Err(HmmError::Dimension {
            expected: 1,
            got: 0,
        });
    }
    let correct = BetaShape::new(2.0, 1.0)?;
    let failed = BetaShape::new(1.0, 2.0)?;
    let mut model = ObservableModel::filled(space.len(), owners.len(), correct);
    for s in space.iter() {
        for (j, owner) in owners.iter().enumerate() {
            let ok = match *owner {
                DimOwner::Tracker(c) if c < space.trackers() => space.is_correct(s, c),
                DimOwner::Tracker(c) => {
                    return Err(HmmError::Dimension {
                        expected: space.trackers(),
                        got: c + 1,
                    })
                }
                DimOwner::Shared => space.has_majority(s),
            };
            model.set_shape(s.0, j, if ok { correct } else { failed });
        }
    }
    Ok(model)
}

impl StateIndex {
    pub fn checked(self, space: &StateSpace) -> Result<Self, HmmError> {
        if self.0 < space.len() {
            Ok(self)
        } else {
            Err(HmmError::Annotation(format!(
                "state {} outside 0..{}",
                self.0,
                space.len()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_rows(n: usize) -> Vec<Vec<f64>> {
        // Hand-applied layering for n = 2, before normalization.
        assert_eq!(n, 2);
        vec![
            vec![0.98, 0.05, 0.05, 0.001],
            vec![0.0, 0.98, 0.05, 0.001],
            vec![0.0, 0.05, 0.98, 0.001],
            vec![0.0, 1e-10, 1e-10, 0.98],
        ]
    }

    #[test]
    fn default_transitions_match_hand_layering() {
        let space = StateSpace::new(2).unwrap();
        let a = default_transition_matrix(&space);
        for (i, raw) in raw_rows(2).iter().enumerate() {
            let sum: f64 = raw.iter().sum();
            for (j, v) in raw.iter().enumerate() {
                assert!((a.get(i, j) - v / sum).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn default_transitions_are_stochastic() {
        for n in 1..=8 {
            let a = default_transition_matrix(&StateSpace::new(n).unwrap());
            for row in a.rows() {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
            // Diagonal dominant.
            for i in 0..a.size() {
                let d = a.get(i, i);
                assert!((0..a.size()).all(|j| j == i || a.get(i, j) < d));
            }
        }
    }

    #[test]
    fn single_tracker_default_shapes() {
        let space = StateSpace::new(1).unwrap();
        let m = default_observable_model(&space, &[DimOwner::Tracker(0)]).unwrap();
        assert_eq!(*m.shape(0, 0), BetaShape::new(2.0, 1.0).unwrap());
        assert_eq!(*m.shape(1, 0), BetaShape::new(1.0, 2.0).unwrap());
    }

    #[test]
    fn ownership_rule_for_two_trackers() {
        let space = StateSpace::new(2).unwrap();
        let layout = ObservableLayout::uniform(2, 1);
        let m = default_observable_model(&space, &layout.owners()).unwrap();
        // State 1 is (1,0).
        assert_eq!(*m.shape(1, 0), BetaShape::new(2.0, 1.0).unwrap());
        assert_eq!(*m.shape(1, 1), BetaShape::new(1.0, 2.0).unwrap());
    }

    #[test]
    fn shared_dims_follow_majority() {
        let space = StateSpace::new(3).unwrap();
        let layout = ObservableLayout {
            arities: vec![1, 1, 1],
            shared: 1,
        };
        let m = default_observable_model(&space, &layout.owners()).unwrap();
        for s in space.iter() {
            let expected = if space.correct_count(s) >= 2 {
                2.0
            } else {
                1.0
            };
            assert_eq!(m.shape(s.0, 3).p(), expected);
        }
    }

    #[test]
    fn params_round_trip_through_json() {
        let layout = ObservableLayout::uniform(2, 2);
        let p = HmmParams::initial(&layout).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: HmmParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(TransitionMatrix::from_rows(vec![vec![0.5, 0.6], vec![0.0, 1.0]]).is_err());
        assert!(TransitionMatrix::from_rows(vec![vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
        assert!(TransitionMatrix::from_rows(vec![vec![1.0], vec![0.0, 1.0]]).is_err());
    }
}
