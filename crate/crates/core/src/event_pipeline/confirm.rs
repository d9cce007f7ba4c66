//! Temporal confirmation of per-frame candidates.
//!
//! A stream of candidates (one stream per sensor and subject) is cut into
//! runs: consecutive candidates belong to the same run while their frame
//! indices differ by at most `close_after_frames`. A run becomes an event
//! when it contains at least `min_frames` frames in a row (adjacent frame
//! indices) whose confidence exceeds `min_confidence`. The event spans the
//! whole run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfirmParams {
    pub min_frames: usize,
    pub min_confidence: f64,
    /// A run ends once this many frames pass without a candidate. With 1,
    /// any missing frame ends it.
    pub close_after_frames: u64,
}

impl ConfirmParams {
    /// Learning-based defaults: three frames in a row above 0.8.
    pub fn learning() -> Self {
        ConfirmParams {
            min_frames: 3,
            min_confidence: 0.8,
            close_after_frames: 1,
        }
    }

    /// Rule-based candidates carry confidence 1.0 and need `min_frames`
    /// frames; runs bridge up to `gap_frames - 1` empty frames.
    pub fn rule(min_frames: usize, gap_frames: u64) -> Self {
        ConfirmParams {
            min_frames: min_frames.max(1),
            min_confidence: 0.0,
            close_after_frames: gap_frames.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub frame_index: u64,
    pub confidence: f64,
    pub track_ids: Vec<String>,
    pub location: [f64; 2],
}

/// A confirmed run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedRun {
    pub frame_span: [u64; 2],
    /// Highest confidence seen in the run.
    pub confidence: f64,
    pub track_ids: BTreeSet<String>,
    /// Location of the first candidate.
    pub location: [f64; 2],
    pub candidate_frames: usize,
}

#[derive(Debug, Clone)]
struct OpenRun {
    run: ConfirmedRun,
    last_frame: u64,
    /// Strong frames in a row ending just before `last_frame`.
    base: usize,
    /// Best confidence seen at `last_frame`.
    frame_best: f64,
    qualified: bool,
}

impl OpenRun {
    fn streak(&self, threshold: f64) -> usize {
        if self.frame_best > threshold {
            self.base + 1
        } else {
            0
        }
    }
}

/// Streaming confirmer for one candidate stream.
#[derive(Debug, Clone)]
pub struct Confirmer {
    params: ConfirmParams,
    open: Option<OpenRun>,
}

impl Confirmer {
    pub fn new(params: ConfirmParams) -> Self {
        Confirmer { params, open: None }
    }

    /// Feeds the next candidate; returns a run that this candidate closed.
    /// Candidates must arrive in non-decreasing frame order; several for the
    /// same frame are combined.
    pub fn push(&mut self, c: &Candidate) -> Option<ConfirmedRun> {
        let p = self.params;
        let mut closed = None;
        if let Some(open) = &self.open {
            debug_assert!(c.frame_index >= open.last_frame, "candidates out of order");
            if c.frame_index > open.last_frame + p.close_after_frames {
                closed = self.take_closed();
            }
        }
        match &mut self.open {
            Some(open) => {
                if c.frame_index == open.last_frame {
                    open.frame_best = open.frame_best.max(c.confidence);
                } else {
                    let adjacent = c.frame_index == open.last_frame + 1;
                    open.base = if adjacent { open.streak(p.min_confidence) } else { 0 };
                    open.frame_best = c.confidence;
                    open.last_frame = c.frame_index;
                    open.run.frame_span[1] = c.frame_index;
                    open.run.candidate_frames += 1;
                }
                open.run.confidence = open.run.confidence.max(c.confidence);
                open.run.track_ids.extend(c.track_ids.iter().cloned());
                open.qualified |= open.streak(p.min_confidence) >= p.min_frames;
            }
            None => {
                let mut open = OpenRun {
                    run: ConfirmedRun {
                        frame_span: [c.frame_index, c.frame_index],
                        confidence: c.confidence,
                        track_ids: c.track_ids.iter().cloned().collect(),
                        location: c.location,
                        candidate_frames: 1,
                    },
                    last_frame: c.frame_index,
                    base: 0,
                    frame_best: c.confidence,
                    qualified: false,
                };
                open.qualified = open.streak(p.min_confidence) >= p.min_frames;
                self.open = Some(open);
            }
        }
        closed
    }

    fn take_closed(&mut self) -> Option<ConfirmedRun> {
        let open = self.open.take()?;
        open.qualified.then_some(open.run)
    }

    /// Closes the stream.
    pub fn finish(&mut self) -> Option<ConfirmedRun> {
        self.take_closed()
    }
}

/// Batch form of [`Confirmer`].
pub fn confirm(candidates: &[Candidate], params: ConfirmParams) -> Vec<ConfirmedRun> {
    let mut c = Confirmer::new(params);
    let mut out: Vec<ConfirmedRun> = candidates.iter().filter_map(|x| c.push(x)).collect();
    out.extend(c.finish());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(frames: &[(u64, f64)]) -> Vec<Candidate> {
        frames
            .iter()
            .map(|&(f, conf)| Candidate {
                frame_index: f,
                confidence: conf,
                track_ids: vec!["1".into()],
                location: [f as f64, 0.0],
            })
            .collect()
    }

    #[test]
    fn two_frames_are_not_enough() {
        let r = confirm(&cands(&[(10, 0.9), (11, 0.9)]), ConfirmParams::learning());
        assert!(r.is_empty());
    }

    #[test]
    fn three_frames_confirm() {
        let r = confirm(
            &cands(&[(10, 0.85), (11, 0.85), (12, 0.85)]),
            ConfirmParams::learning(),
        );
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].frame_span, [10, 12]);
        assert_eq!(r[0].location, [10.0, 0.0]);
    }

    #[test]
    fn weak_frame_breaks_the_streak() {
        let r = confirm(
            &cands(&[(10, 0.9), (11, 0.7), (12, 0.9)]),
            ConfirmParams::learning(),
        );
        assert!(r.is_empty());
    }

    #[test]
    fn exactly_threshold_is_not_above() {
        let r = confirm(
            &cands(&[(1, 0.8), (2, 0.8), (3, 0.8)]),
            ConfirmParams::learning(),
        );
        assert!(r.is_empty());
    }

    #[test]
    fn run_includes_weak_frames_around_the_streak() {
        let r = confirm(
            &cands(&[(4, 0.3), (5, 0.9), (6, 0.9), (7, 0.95), (8, 0.2)]),
            ConfirmParams::learning(),
        );
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].frame_span, [4, 8]);
        assert_eq!(r[0].confidence, 0.95);
    }

    #[test]
    fn rule_runs_bridge_short_gaps() {
        let p = ConfirmParams::rule(1, 5);
        let r = confirm(&cands(&[(0, 1.0), (4, 1.0), (9, 1.0), (15, 1.0)]), p);
        let spans: Vec<_> = r.iter().map(|x| x.frame_span).collect();
        assert_eq!(spans, vec![[0, 9], [15, 15]]);
    }

    #[test]
    fn same_frame_candidates_combine() {
        let mut c = cands(&[(1, 0.9), (2, 0.9), (3, 0.9)]);
        c.insert(
            1,
            Candidate {
                frame_index: 1,
                confidence: 0.5,
                track_ids: vec!["2".into()],
                location: [0.0, 0.0],
            },
        );
        let r = confirm(&c, ConfirmParams::learning());
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].track_ids.len(), 2);
        assert_eq!(r[0].candidate_frames, 3);
    }
}
