//! Splitting a reasoning trace into subthoughts.
//!
//! A subthought boundary is an occurrence of a transition marker such as
//! "Wait" or "Alternatively". Each occurrence opens a new chunk that starts
//! with the marker itself, so concatenating the chunks always reproduces the
//! input text byte for byte.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ReasoningTrace;

/// The default transition-marker set.
pub const DEFAULT_MARKERS: [&str; 32] = [
    "Wait",
    "Alternatively",
    "Another angle",
    "Another approach",
    "But wait",
    "Hold on",
    "Hmm",
    "Maybe",
    "Looking back",
    "Okay",
    "Let me",
    "First",
    "Then",
    "Alright",
    "Compute",
    "Correct",
    "Good",
    "Got it",
    "I don't see any errors",
    "I think",
    "Let me double-check",
    "Let's see",
    "Now",
    "Remember",
    "Seems solid",
    "Similarly",
    "So",
    "Starting",
    "That's correct",
    "That seems right",
    "Therefore",
    "Thus",
];

pub fn default_marker_set() -> Vec<String> {
    DEFAULT_MARKERS.iter().map(|m| m.to_string()).collect()
}

/// Parse a marker list from text, one marker per line. Blank lines are
/// skipped; line order sets precedence among equal-length markers.
pub fn parse_marker_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("marker list must not be empty")]
    EmptyMarkerList,
    #[error("marker strings must not be empty")]
    EmptyMarker,
    #[error("cannot segment an empty trace")]
    EmptyTrace,
    #[error("subthought index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
}

/// A compiled marker set.
///
/// Markers match case-sensitively, only at word-like boundaries: the
/// occurrence must be preceded by start-of-text or a non-letter character and
/// followed by a non-letter character or end-of-text, so "Now" never matches
/// inside "Known". When several markers match at one position the longest
/// wins, with list order breaking length ties.
#[derive(Debug, Clone)]
pub struct MarkerPattern {
    markers: Vec<String>,
    // first char -> marker indices, longest first, then list order
    candidates: HashMap<char, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Occurrence {
    start: usize,
    end: usize,
    marker: usize,
}

impl MarkerPattern {
    pub fn markers(&self) -> &[String] {
        &self.markers
    }

    /// Compile the default marker set. Cannot fail: the list is non-empty.
    pub fn default_set() -> Self {
        compile_markers(&default_marker_set()).expect("default markers are valid")
    }

    fn occurrences(&self, text: &str) -> Vec<Occurrence> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut hits = Vec::new();
        let mut i = 0;
        'scan: while i < chars.len() {
            let (pos, c) = chars[i];
            let boundary_before = i == 0 || !chars[i - 1].1.is_alphabetic();
            if boundary_before && let Some(candidates) = self.candidates.get(&c) {
                for &marker_index in candidates {
                    let marker = &self.markers[marker_index];
                    if text[pos..].starts_with(marker.as_str()) {
                        let end = pos + marker.len();
                        let boundary_after =
                            text[end..].chars().next().is_none_or(|next| !next.is_alphabetic());
                        if boundary_after {
                            hits.push(Occurrence { start: pos, end, marker: marker_index });
                            while i < chars.len() && chars[i].0 < end {
                                i += 1;
                            }
                            continue 'scan;
                        }
                    }
                }
            }
            i += 1;
        }
        hits
    }
}

/// Compile `markers` into a matcher. Errors on an empty list or empty entries.
pub fn compile_markers<S: AsRef<str>>(markers: &[S]) -> Result<MarkerPattern, SegmentError> {
    if markers.is_empty() {
        return Err(SegmentError::EmptyMarkerList);
    }
    let markers: Vec<String> = markers.iter().map(|m| m.as_ref().to_string()).collect();
    if markers.iter().any(|m| m.is_empty()) {
        return Err(SegmentError::EmptyMarker);
    }
    let mut candidates: HashMap<char, Vec<usize>> = HashMap::new();
    for (index, marker) in markers.iter().enumerate() {
        let first = marker.chars().next().expect("markers are non-empty");
        candidates.entry(first).or_default().push(index);
    }
    for group in candidates.values_mut() {
        // stable: equal lengths keep list order
        group.sort_by_key(|&index| std::cmp::Reverse(markers[index].len()));
    }
    Ok(MarkerPattern { markers, candidates })
}

/// An ordered split of a trace into subthought chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubthoughtSegmentation {
    chunks: Vec<String>,
    markers: Vec<Option<String>>,
}

impl SubthoughtSegmentation {
    pub fn n(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunks(&self) -> &[String] {
        &self.chunks
    }

    /// The marker that opened each chunk; `None` for a first chunk that does
    /// not begin with a marker.
    pub fn markers(&self) -> &[Option<String>] {
        &self.markers
    }

    /// Merge chunks past `max_chunks` into the final chunk. No-op when the
    /// segmentation already fits.
    pub fn merge_tail(mut self, max_chunks: usize) -> Self {
        if max_chunks >= 1 && self.chunks.len() > max_chunks {
            let tail = self.chunks.split_off(max_chunks - 1).concat();
            self.chunks.push(tail);
            self.markers.truncate(max_chunks);
        }
        self
    }

    /// True when chunk/marker bookkeeping is consistent, used to vet
    /// artifacts reloaded from disk.
    pub fn is_well_formed(&self) -> bool {
        !self.chunks.is_empty()
            && self.markers.len() == self.chunks.len()
            && self.chunks.iter().all(|c| !c.is_empty())
            && self
                .chunks
                .iter()
                .zip(&self.markers)
                .all(|(chunk, marker)| marker.as_ref().is_none_or(|m| chunk.starts_with(m)))
    }
}

/// The cumulative trace through subthought `upto_index` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialTrace {
    pub text: String,
    pub upto_index: usize,
}

/// Split `trace` at every marker occurrence.
///
/// Each occurrence starts a new chunk that begins with the marker, except an
/// occurrence at position 0, which opens the first chunk instead of creating
/// an empty one. A trace with no marker occurrences is a single subthought.
pub fn segment(
    trace: &ReasoningTrace,
    pattern: &MarkerPattern,
) -> Result<SubthoughtSegmentation, SegmentError> {
    let text = trace.text.as_str();
    if text.is_empty() {
        return Err(SegmentError::EmptyTrace);
    }
    let occurrences = pattern.occurrences(text);

    // Every occurrence is a cut point; an occurrence at position 0 opens the
    // first chunk instead of carving out an empty one before it.
    let mut cuts: Vec<(usize, Option<usize>)> = Vec::with_capacity(occurrences.len() + 1);
    if occurrences.first().is_none_or(|o| o.start > 0) {
        cuts.push((0, None));
    }
    cuts.extend(occurrences.iter().map(|o| (o.start, Some(o.marker))));

    let mut chunks = Vec::with_capacity(cuts.len());
    let mut markers = Vec::with_capacity(cuts.len());
    for (k, &(start, marker)) in cuts.iter().enumerate() {
        let end = cuts.get(k + 1).map_or(text.len(), |&(next, _)| next);
        chunks.push(text[start..end].to_string());
        markers.push(marker.map(|m| pattern.markers[m].clone()));
    }

    Ok(SubthoughtSegmentation { chunks, markers })
}

/// Concatenate chunks 1..=i of `seg` (1-based, inclusive).
pub fn cumulative_prefix(
    seg: &SubthoughtSegmentation,
    i: usize,
) -> Result<PartialTrace, SegmentError> {
    if i == 0 || i > seg.n() {
        return Err(SegmentError::IndexOutOfRange { index: i, n: seg.n() });
    }
    Ok(PartialTrace {
        text: seg.chunks[..i].concat(),
        upto_index: i,
    })
}
