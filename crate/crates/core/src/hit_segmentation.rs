//! Hit sequences from per-frame hit confidences.
//!
//! [`optimize_hits`] picks the hit set maximizing `sum(s - tau)` under a hit
//! budget, a minimum spacing of half a second and strict player alternation.
//! The naive argmax post-process, the trajectory second-difference detector
//! and the set-overlap metrics are provided for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{image_to_court, Homography, ImagePoint, Player, NET_Y};
use crate::reconstruction::ShuttleTrack;

/// Per-frame `(no hit, near hit, far hit)` confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSequence {
    pub fps: f64,
    pub start_frame: usize,
    pub scores: Vec<[f64; 3]>,
}

impl ScoreSequence {
    pub fn new(fps: f64, start_frame: usize, scores: Vec<[f64; 3]>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if scores.is_empty() {
            return Err(Error::invalid("score sequence is empty"));
        }
        if scores.iter().flatten().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scores must be finite and non-negative"));
        }
        Ok(ScoreSequence { fps, start_frame, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn hit_score(&self, idx: usize, player: Player) -> f64 {
        match player {
            Player::Near => self.scores[idx][1],
            Player::Far => self.scores[idx][2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub frame: usize,
    pub player: Player,
}

/// A hit whose player may be unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedHit {
    pub frame: usize,
    pub player: Option<Player>,
}

/// Minimum frame gap between hits: half a second, rounded up.
pub fn min_spacing(fps: f64) -> usize {
    ((fps / 2.0).ceil() as usize).max(1)
}

/// Maximum number of hits: one per started second.
pub fn hit_budget(frames: usize, fps: f64) -> usize {
    (frames as f64 / fps).ceil() as usize
}

/// Mean of `(s_near + s_far) / 2` over all frames.
pub fn tau(scores: &ScoreSequence) -> f64 {
    scores.scores.iter().map(|s| (s[1] + s[2]) / 2.0).sum::<f64>() / scores.len() as f64
}

/// `sum(s - tau)` over the hits, accumulated from the last hit backwards.
pub fn objective(scores: &ScoreSequence, hits: &[Hit]) -> f64 {
    let t = tau(scores);
    hits.iter().rev().fold(0.0, |acc, h| (scores.hit_score(h.frame - scores.start_frame, h.player) - t) + acc)
}

/// Whether `hits` obeys the budget, spacing and alternation constraints.
pub fn is_feasible(scores: &ScoreSequence, hits: &[Hit]) -> bool {
    let gap = min_spacing(scores.fps);
    let end = scores.start_frame + scores.len();
    hits.len() <= hit_budget(scores.len(), scores.fps)
        && hits.iter().all(|h| h.frame >= scores.start_frame && h.frame < end)
        && hits.windows(2).all(|w| w[1].frame >= w[0].frame + gap && w[1].player != w[0].player)
}

#[derive(Clone, Copy)]
struct Cell {
    value: f64,
    count: usize,
    /// Next hit (frame index, player) of the optimal continuation.
    next: Option<(usize, Player)>,
    at: (usize, Player),
}

fn better(a: &Cell, b: &Cell) -> bool {
    a.value > b.value || (a.value == b.value && a.count < b.count)
}

const PLAYERS: [Player; 2] = [Player::Near, Player::Far];

fn pidx(p: Player) -> usize {
    match p {
        Player::Near => 0,
        Player::Far => 1,
    }
}

/// Exact constrained optimum by dynamic programming.
///
/// Ties prefer fewer hits, then earlier frames, then the near player.
pub fn optimize_hits(scores: &ScoreSequence) -> (Vec<Hit>, f64) {
    let n = scores.len();
    let gap = min_spacing(scores.fps);
    let budget = hit_budget(n, scores.fps);
    let t = tau(scores);
    if budget == 0 || n == 0 {
        return (Vec::new(), 0.0);
    }

    let empty = Cell { value: 0.0, count: 0, next: None, at: (usize::MAX, Player::Near) };
    // best[r][i][p]: best sequence starting with a hit at i by p using at most r hits.
    // suffix[r][i][p]: best of best[r][j][p] over j >= i (earliest on ties).
    let mut best = vec![vec![[empty; 2]; n]; budget + 1];
    let mut suffix = vec![vec![[None::<Cell>; 2]; n + 1]; budget + 1];

    for r in 1..=budget {
        for i in (0..n).rev() {
            for p in PLAYERS {
                let base = scores.hit_score(i, p) - t;
                let mut cell = Cell { value: base, count: 1, next: None, at: (i, p) };
                if r > 1 && i + gap < n {
                    if let Some(cont) = suffix[r - 1][i + gap][pidx(p.opponent())] {
                        let v = base + cont.value;
                        if v > base {
                            cell = Cell { value: v, count: 1 + cont.count, next: Some(cont.at), at: (i, p) };
                        }
                    }
                }
                best[r][i][pidx(p)] = cell;
                let s = match suffix[r][i + 1][pidx(p)] {
                    Some(later) if better(&later, &cell) => later,
                    _ => cell,
                };
                suffix[r][i][pidx(p)] = Some(s);
            }
        }
    }

    let mut top = empty;
    for i in 0..n {
        for p in PLAYERS {
            let c = best[budget][i][pidx(p)];
            if better(&c, &top) {
                top = c;
            }
        }
    }
    if top.count == 0 {
        return (Vec::new(), 0.0);
    }

    let mut hits = Vec::with_capacity(top.count);
    let mut cur = top.at;
    let mut r = budget;
    loop {
        hits.push(Hit { frame: scores.start_frame + cur.0, player: cur.1 });
        match best[r][cur.0][pidx(cur.1)].next {
            Some(nx) => {
                cur = nx;
                r -= 1;
            }
            None => break,
        }
    }
    (hits, top.value)
}

/// Per-frame argmax, then drop any hit within half a second after a kept one.
pub fn naive_postprocess(scores: &ScoreSequence) -> Vec<Hit> {
    let gap = min_spacing(scores.fps);
    let mut out: Vec<Hit> = Vec::new();
    for (i, s) in scores.scores.iter().enumerate() {
        let class = if s[1] > s[0] && s[1] >= s[2] {
            Some(Player::Near)
        } else if s[2] > s[0] && s[2] > s[1] {
            Some(Player::Far)
        } else {
            None
        };
        let Some(player) = class else { continue };
        let frame = scores.start_frame + i;
        if out.last().is_none_or(|h| frame >= h.frame + gap) {
            out.push(Hit { frame, player });
        }
    }
    out
}

/// Hits where the track's second difference peaks above `threshold` (px/frame^2).
///
/// Differences are taken only inside runs of at least three consecutive
/// visible frames. With a homography, hits are attributed to the court half
/// under the shuttle's image position.
pub fn derivative_baseline(
    track: &ShuttleTrack,
    threshold: f64,
    homography: Option<&Homography>,
) -> Result<Vec<DetectedHit>> {
    let mut runs: Vec<Vec<(usize, f64, f64)>> = Vec::new();
    let mut current: Vec<(usize, f64, f64)> = Vec::new();
    for e in &track.entries {
        let continues = current.last().is_some_and(|&(f, _, _)| e.frame == f + 1);
        if !e.visible || !continues {
            if current.len() >= 3 {
                runs.push(std::mem::take(&mut current));
            }
            current.clear();
        }
        if e.visible {
            current.push((e.frame, e.u, e.v));
        }
    }
    if current.len() >= 3 {
        runs.push(current);
    }
    if runs.is_empty() {
        return Err(Error::invalid("track has no run of 3 consecutive visible frames"));
    }

    let mut peaks: Vec<(usize, f64, f64)> = Vec::new();
    for run in &runs {
        let mags: Vec<f64> = run
            .windows(3)
            .map(|w| {
                let du = w[0].1 - 2.0 * w[1].1 + w[2].1;
                let dv = w[0].2 - 2.0 * w[1].2 + w[2].2;
                du.abs().max(dv.abs())
            })
            .collect();
        for k in 0..mags.len() {
            let left_ok = k == 0 || mags[k] >= mags[k - 1];
            let right_ok = k + 1 == mags.len() || mags[k] > mags[k + 1];
            if mags[k] > threshold && left_ok && right_ok {
                let (f, u, v) = run[k + 1];
                peaks.push((f, u, v));
            }
        }
    }
    peaks.sort_by_key(|p| p.0);

    let gap = min_spacing(track.fps);
    let mut out: Vec<DetectedHit> = Vec::new();
    for (frame, u, v) in peaks {
        if out.last().is_some_and(|h| frame < h.frame + gap) {
            continue;
        }
        let player = homography.and_then(|h| image_to_court(h, &ImagePoint::new(u, v)).ok()).map(|(_, y)| {
            if y <= NET_Y {
                Player::Near
            } else {
                Player::Far
            }
        });
        out.push(DetectedHit { frame, player });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitMetrics {
    pub matched: usize,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl HitMetrics {
    /// Metrics from the match count and the two set sizes.
    pub fn from_counts(matched: usize, truth: usize, predicted: usize) -> Self {
        let union = truth + predicted - matched;
        let accuracy = if union == 0 { 1.0 } else { matched as f64 / union as f64 };
        let recall = if truth == 0 { 1.0 } else { matched as f64 / truth as f64 };
        let precision = if predicted == 0 { 1.0 } else { matched as f64 / predicted as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let f1 = if truth > 0 && matched == 0 { 0.0 } else { f1 };
        HitMetrics { matched, accuracy, recall, precision, f1 }
    }
}

/// One-to-one greedy matching in frame order; `None` players match either side.
fn count_matches(truth: &[Hit], predicted: &[DetectedHit], tolerance_frames: usize) -> usize {
    let mut gt: Vec<&Hit> = truth.iter().collect();
    gt.sort_by_key(|h| h.frame);
    let mut pred: Vec<&DetectedHit> = predicted.iter().collect();
    pred.sort_by_key(|h| h.frame);
    let mut used = vec![false; pred.len()];
    let mut matched = 0;
    for g in gt {
        let hit = pred.iter().enumerate().position(|(j, p)| {
            !used[j] && p.frame.abs_diff(g.frame) <= tolerance_frames && p.player.is_none_or(|pl| pl == g.player)
        });
        if let Some(j) = hit {
            used[j] = true;
            matched += 1;
        }
    }
    matched
}

/// Accuracy, recall, precision and F1 over hit events.
pub fn hit_metrics(truth: &[Hit], predicted: &[Hit], tolerance_frames: usize) -> HitMetrics {
    let pred: Vec<DetectedHit> =
        predicted.iter().map(|h| DetectedHit { frame: h.frame, player: Some(h.player) }).collect();
    detected_hit_metrics(truth, &pred, tolerance_frames)
}

pub fn detected_hit_metrics(truth: &[Hit], predicted: &[DetectedHit], tolerance_frames: usize) -> HitMetrics {
    HitMetrics::from_counts(count_matches(truth, predicted, tolerance_frames), truth.len(), predicted.len())
}

/// Pick the derivative threshold with the best pooled accuracy on labeled rallies.
/// Ties go to the smaller threshold.
pub fn tune_derivative_threshold(
    labeled: &[(ShuttleTrack, Vec<Hit>)],
    candidates: &[f64],
    homography: Option<&Homography>,
    tolerance_frames: usize,
) -> Result<(f64, HitMetrics)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate thresholds"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, HitMetrics)> = None;
    for &th in &sorted {
        let (mut m, mut g, mut p) = (0, 0, 0);
        for (track, truth) in labeled {
            let pred = derivative_baseline(track, th, homography)?;
            m += count_matches(truth, &pred, tolerance_frames);
            g += truth.len();
            p += pred.len();
        }
        let metrics = HitMetrics::from_counts(m, g, p);
        if best.is_none_or(|(_, b)| metrics.accuracy > b.accuracy) {
            best = Some((th, metrics));
        }
    }
    Ok(best.expect("candidates is non-empty"))
}
