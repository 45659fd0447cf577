use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// One named block of a [`ParamVector`], stored as a `[rows, cols]` matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
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

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter storage split into named segments.
///
/// Segment offsets are assigned once at construction and never move, so a
/// gradient, an Adam moment or a checkpoint can share the layout of the
/// parameters it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    segments: Vec<Segment>,
    data: Vec<f64>,
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVector {
    pub fn new() -> Self {
        ParamVector {
            segments: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Appends a zero-filled segment.
    pub fn push_segment(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.data.len();
        self.segments.push(Segment {
            name: name.into(),
            rows,
            cols,
            offset,
        });
        self.data.resize(offset + rows * cols, 0.0);
        self.segments.len() - 1
    }

    /// Same layout, all values zero.
    pub fn zeros_like(&self) -> Self {
        ParamVector {
            segments: self.segments.clone(),
            data: alloc::vec![0.0; self.data.len()],
        }
    }

    /// Replaces the values keeping the layout.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::shape(
                "ParamVector::with_data",
                alloc::format!("expected {} values, got {}", self.data.len(), data.len()),
            ));
        }
        Ok(ParamVector {
            segments: self.segments.clone(),
            data,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, idx: usize) -> &[f64] {
        &self.data[self.segments[idx].range()]
    }

    pub fn segment_mut(&mut self, idx: usize) -> &mut [f64] {
        let r = self.segments[idx].range();
        &mut self.data[r]
    }

    pub fn segment_by_name(&self, name: &str) -> Option<&[f64]> {
        self.segments
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.segment(i))
    }

    pub fn segment_tensor(&self, idx: usize) -> RealTensor {
        let s = &self.segments[idx];
        RealTensor::matrix(s.rows, s.cols, self.segment(idx).to_vec()).expect("segment layout is consistent")
    }

    /// Total number of scalars; equals the sum of segment lengths.
    pub fn total_len(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.segments == other.segments
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm, accumulated in index order.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().fold(0.0, |acc, v| acc + v * v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_contiguous() {
        let mut p = ParamVector::new();
        p.push_segment("w", 2, 3);
        p.push_segment("b", 1, 3);
        assert_eq!(p.total_len(), 9);
        assert_eq!(p.segments()[1].offset, 6);
        p.segment_mut(1).copy_from_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(p.segment_by_name("b").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.segment_tensor(0).shape(), &[2, 3]);
        assert!(p.with_data(alloc::vec![0.0; 8]).is_err());
    }
}
