use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named contiguous slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// A flat array of real weights plus a named layout. The layout ranges
/// partition `[0, len)` in order, and all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Vec<ParamSlice>,
}

impl ParameterVector {
    /// Zero-initialized vector with the given `(name, len)` layout.
    pub fn zeros(layout: &[(&str, usize)]) -> Self {
        let mut slices = Vec::with_capacity(layout.len());
        let mut start = 0;
        for (name, len) in layout {
            slices.push(ParamSlice {
                name: (*name).to_string(),
                start,
                len: *len,
            });
            start += len;
        }
        Self {
            values: vec![0.0; start],
            layout: slices,
        }
    }

    pub fn from_values(layout: Vec<ParamSlice>, values: Vec<f64>) -> Result<Self> {
        let mut expected_start = 0;
        for slice in &layout {
            if slice.start != expected_start {
                return Err(Error::InvalidInput(format!(
                    "layout slice {:?} starts at {}, expected {}",
                    slice.name, slice.start, expected_start
                )));
            }
            expected_start += slice.len;
        }
        if expected_start != values.len() {
            return Err(Error::InvalidInput(format!(
                "layout covers {expected_start} values but {} provided",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "parameter values must be finite, found {bad}"
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamSlice] {
        &self.layout
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.start..s.start + s.len])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let slice = self.layout.iter().find(|s| s.name == name)?.clone();
        Some(&mut self.values[slice.start..slice.start + slice.len])
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.layout == other.layout
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    /// Squared L2 distance to `other`. Layouts must match.
    pub fn sq_dist(&self, other: &Self) -> f64 {
        assert!(self.same_layout(other), "parameter layout mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// `self += a * other`. Layouts must match.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert!(self.same_layout(other), "parameter layout mismatch");
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.values {
            *x *= a;
        }
    }

    /// Rescale so the L2 norm is at most `max_norm`; returns the norm before
    /// clipping.
    pub fn clip_l2(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Full-precision decimal strings that parse back to the exact same bit
    /// patterns; used by the checkpoint format.
    pub fn to_decimal_strings(&self) -> Vec<String> {
        self.values.iter().map(|v| format!("{v}")).collect()
    }

    pub fn from_decimal_strings(layout: Vec<ParamSlice>, strings: &[String]) -> Result<Self> {
        let mut values = Vec::with_capacity(strings.len());
        for s in strings {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::InvalidInput(format!("unparsable parameter value {s:?}")))?;
            values.push(v);
        }
        Self::from_values(layout, values)
    }
}
