//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use proptest::test_runner::Config;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use shuttle3d::court_detection::{orthogonality_weight, DetectedLine};
use shuttle3d::geometry::{CameraModel, CourtModel, Player, WorldPoint};
use shuttle3d::hit_segmentation::{Hit, ScoreSequence};

/// Property-test settings without on-disk regression files.
pub fn cases(n: u32) -> Config {
    Config { cases: n, failure_persistence: None, ..Config::default() }
}

/// Number of hit sets obeying budget, spacing and alternation.
pub fn feasible_set_count(frames: usize, fps: f64) -> f64 {
    let gap = (fps / 2.0).ceil() as usize;
    let budget = (frames as f64 / fps).ceil() as usize;
    // ways[k][i]: sequences of exactly k hits whose first hit is at i, first player fixed
    let mut ways = vec![vec![0.0f64; frames + gap + 1]; budget + 1];
    let mut total = 1.0;
    for k in 1..=budget {
        for i in (0..frames).rev() {
            ways[k][i] = if k == 1 { 1.0 } else { (i + gap..frames).map(|j| ways[k - 1][j]).sum() };
            total += 2.0 * ways[k][i];
        }
    }
    total
}

/// Mean of the averaged hit classes over all frames.
pub fn mean_hit_score(s: &ScoreSequence) -> f64 {
    let mut sum = 0.0;
    for row in &s.scores {
        sum += (row[1] + row[2]) / 2.0;
    }
    sum / s.scores.len() as f64
}

fn score_of(s: &ScoreSequence, hit: &Hit) -> f64 {
    let row = s.scores[hit.frame - s.start_frame];
    match hit.player {
        Player::Near => row[1],
        Player::Far => row[2],
    }
}

/// Objective summed from the last hit backwards.
pub fn set_value(s: &ScoreSequence, hits: &[Hit]) -> f64 {
    let t = mean_hit_score(s);
    let mut acc = 0.0;
    for h in hits.iter().rev() {
        acc += score_of(s, h) - t;
    }
    acc
}

/// Best objective over every feasible hit set, by explicit enumeration.
pub fn brute_force_best(s: &ScoreSequence) -> f64 {
    let gap = (s.fps / 2.0).ceil() as usize;
    let budget = (s.scores.len() as f64 / s.fps).ceil() as usize;
    let mut best = 0.0f64;
    let mut stack: Vec<Hit> = Vec::new();

    fn walk(s: &ScoreSequence, from: usize, gap: usize, budget: usize, stack: &mut Vec<Hit>, best: &mut f64) {
        if !stack.is_empty() {
            let v = set_value(s, stack);
            if v > *best {
                *best = v;
            }
        }
        if stack.len() == budget {
            return;
        }
        for i in from..s.scores.len() {
            for p in [Player::Near, Player::Far] {
                if stack.last().is_some_and(|h| h.player == p) {
                    continue;
                }
                stack.push(Hit { frame: s.start_frame + i, player: p });
                walk(s, i + gap, gap, budget, stack, best);
                stack.pop();
            }
        }
    }
    walk(s, 0, gap, budget, &mut stack, &mut best);
    best
}

/// Random score sequence small enough to enumerate. Scores are sometimes
/// quantized so that ties occur.
pub fn random_scores(rng: &mut ChaCha8Rng, max_sets: f64) -> ScoreSequence {
    let fps = rng.gen_range(1..=12) as f64;
    let mut frames = rng.gen_range(1..=60usize);
    while frames > 1 && feasible_set_count(frames, fps) > max_sets {
        frames -= 1;
    }
    let quantized = rng.gen_bool(0.3);
    let scores = (0..frames)
        .map(|_| {
            let mut row: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            if quantized {
                row = row.map(|v| (v * 4.0).round() / 4.0);
            }
            row
        })
        .collect();
    ScoreSequence::new(fps, rng.gen_range(0..100), scores).unwrap()
}

/// Lines whose directions cluster within +-20 degrees of two perpendicular
/// axes. Both clusters are populated once `n >= 2`.
pub fn clustered_lines(rng: &mut ChaCha8Rng, n: usize) -> Vec<DetectedLine> {
    let base: f64 = rng.gen_range(0.0..180.0);
    (0..n)
        .map(|i| {
            let second = i == 1 || (i > 1 && rng.gen_bool(0.5));
            let axis = if second { base + 90.0 } else { base };
            let deg = axis + rng.gen_range(-20.0..20.0);
            DetectedLine::new(rng.gen_range(-500.0..500.0), deg.to_radians().rem_euclid(std::f64::consts::PI), 100)
        })
        .collect()
}

/// Maximum cut weight over all 2^n bipartitions.
pub fn exhaustive_max_cut(lines: &[DetectedLine], eps: f64) -> f64 {
    let n = lines.len();
    let mut best = 0.0f64;
    // fixing line 0 on side A halves the work without losing any cut
    for mask in 0u32..(1 << n.saturating_sub(1)) {
        let side = |i: usize| i > 0 && (mask >> (i - 1)) & 1 == 1;
        let mut w = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if side(i) != side(j) {
                    w += orthogonality_weight(&lines[i], &lines[j], eps);
                }
            }
        }
        best = best.max(w);
    }
    best
}

/// Random camera seeing the whole court inside a 1280x720 frame from behind
/// the near baseline. Broadcast views stay near the centre line with little
/// roll; off-centre views range widely in lateral offset and roll.
pub fn random_court_camera(rng: &mut ChaCha8Rng, off_centre: bool) -> CameraModel {
    let model = CourtModel::standard(1.55).unwrap();
    let (lateral, max_roll) = if off_centre { (-8.0..14.0, 0.3) } else { (1.5..4.6, 0.05) };
    loop {
        let eye = WorldPoint::new(rng.gen_range(lateral.clone()), rng.gen_range(-12.0..-3.0), rng.gen_range(3.0..10.0));
        let target = WorldPoint::new(rng.gen_range(2.0..4.1), rng.gen_range(5.0..8.4), 0.0);
        let roll = rng.gen_range(-max_roll..max_roll);
        let focal = rng.gen_range(700.0..1200.0);
        let Ok(cam) = CameraModel::look_at(eye, target, focal, (640.0, 360.0), roll) else { continue };
        let pts = model.lines.iter().flat_map(|(a, b)| [*a, *b]).chain(model.poles);
        let visible = pts.into_iter().all(|p| {
            cam.depth(&p) > 0.0
                && cam.project(&p).is_ok_and(|q| q.x > 20.0 && q.x < 1260.0 && q.y > 20.0 && q.y < 700.0)
        });
        if visible {
            return cam;
        }
    }
}
