use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Named block of a flat parameter vector. Matrices are row-major with
/// `rows` outputs and `cols` inputs; vectors have `cols == 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All learnable weights of one network in a single flat vector. Segment
/// order is fixed at construction, so flattening is stable.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterSet {
    segments: Vec<Segment>,
    values: Vec<f64>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-initialised segment and returns its offset.
    pub fn push_segment(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        let offset = self.values.len();
        self.segments.push(Segment {
            name: name.to_string(),
            rows,
            cols,
            offset,
        });
        self.values.resize(offset + rows * cols, 0.0);
        offset
    }

    pub fn from_parts(segments: Vec<Segment>, values: Vec<f64>) -> Result<Self, NnError> {
        let mut expected = 0;
        for s in &segments {
            if s.offset != expected {
                return Err(NnError::Layout(format!(
                    "segment `{}` starts at {} instead of {expected}",
                    s.name, s.offset
                )));
            }
            expected += s.len();
        }
        if expected != values.len() {
            return Err(NnError::Layout(format!(
                "segments cover {expected} values but {} were given",
                values.len()
            )));
        }
        Ok(ParameterSet { segments, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<(), NnError> {
        if values.len() != self.values.len() {
            return Err(NnError::Dimension {
                what: "parameter vector",
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn same_layout(&self, other: &ParameterSet) -> bool {
        self.segments == other.segments
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Fills every segment whose name ends in `weight` (or contains `weight_`)
    /// uniformly in +-1/sqrt(cols); biases stay zero.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        for seg in &self.segments {
            if seg.name.contains("weight") {
                let bound = 1.0 / (seg.cols as f64).sqrt();
                for v in &mut self.values[seg.range()] {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
    }
}
