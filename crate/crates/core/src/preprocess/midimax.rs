use std::ops::Range;

use crate::error::{MmffError, Result};

/// Midimax selection over a one-dimensional series.
#[derive(Debug, Clone, PartialEq)]
pub struct MidimaxPlan {
    /// Slice length.
    pub ratio: usize,
    pub slices: Vec<Range<usize>>,
    /// Selected series indices per slice, ascending.
    pub selected: Vec<Vec<usize>>,
}

impl MidimaxPlan {
    /// All selected indices in temporal order.
    pub fn indices(&self) -> Vec<usize> {
        self.selected.iter().flatten().copied().collect()
    }
}

/// Split `series` into consecutive slices of `ratio` values and keep the
/// maximum, minimum and median of each, re-sorted by position.
///
/// Ties resolve to the earliest index; the median is the lower median
/// (ascending rank `(len - 1) / 2`). A slice shorter than three values, and a
/// trailing partial slice of at most three, keeps every index.
pub fn midimax_select(series: &[f64], ratio: usize) -> Result<MidimaxPlan> {
    if series.is_empty() {
        return Err(MmffError::Data("midimax needs a non-empty series".into()));
    }
    if ratio == 0 {
        return Err(MmffError::Usage("midimax ratio must be at least 1".into()));
    }
    let mut slices = Vec::with_capacity(series.len().div_ceil(ratio));
    let mut selected = Vec::with_capacity(slices.capacity());
    let mut start = 0;
    while start < series.len() {
        let end = (start + ratio).min(series.len());
        let partial = end - start < ratio;
        selected.push(select_slice(&series[start..end], start, partial));
        slices.push(start..end);
        start = end;
    }
    Ok(MidimaxPlan {
        ratio,
        slices,
        selected,
    })
}

fn select_slice(slice: &[f64], offset: usize, partial: bool) -> Vec<usize> {
    if slice.len() < 3 || (partial && slice.len() == 3) {
        return (offset..offset + slice.len()).collect();
    }
    let mut argmax = 0;
    let mut argmin = 0;
    for (i, &v) in slice.iter().enumerate() {
        if v > slice[argmax] {
            argmax = i;
        }
        if v < slice[argmin] {
            argmin = i;
        }
    }
    let mut sorted = slice.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(slice.len() - 1) / 2];
    let argmedian = slice
        .iter()
        .position(|&v| v == median)
        .expect("median is an element of the slice");
    let mut picks = [argmax + offset, argmin + offset, argmedian + offset];
    picks.sort_unstable();
    picks.to_vec()
}
