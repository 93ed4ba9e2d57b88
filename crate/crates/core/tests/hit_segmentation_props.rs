mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shuttle3d::geometry::Player;
use shuttle3d::hit_segmentation::{
    hit_budget, hit_metrics, is_feasible, min_spacing, naive_postprocess, objective, optimize_hits, tau, Hit,
    ScoreSequence,
};

fn hits_strategy() -> impl Strategy<Value = Vec<Hit>> {
    prop::collection::vec((0usize..40, any::<bool>()), 0..12).prop_map(|v| {
        let mut hits: Vec<Hit> = v
            .into_iter()
            .map(|(frame, near)| Hit { frame, player: if near { Player::Near } else { Player::Far } })
            .collect();
        hits.sort_by_key(|h| h.frame);
        hits.dedup_by_key(|h| h.frame);
        hits
    })
}

/// Drop hits that break alternation, then truncate to the budget.
fn make_feasible(s: &ScoreSequence, hits: &[Hit]) -> Vec<Hit> {
    let gap = min_spacing(s.fps);
    let mut out: Vec<Hit> = Vec::new();
    for h in hits {
        if out.last().is_none_or(|l| l.player != h.player && h.frame >= l.frame + gap) {
            out.push(*h);
        }
    }
    out.truncate(hit_budget(s.len(), s.fps));
    out
}

#[test]
fn random_sequences_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let s = common::random_scores(&mut rng, 2e4);
        let (hits, value) = optimize_hits(&s);
        assert_eq!(value, common::brute_force_best(&s));
        assert!(is_feasible(&s, &hits));
        assert_eq!(common::set_value(&s, &hits), value);
    }
}

#[test]
fn tau_matches_direct_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let s = common::random_scores(&mut rng, 1e3);
        assert_eq!(tau(&s), common::mean_hit_score(&s));
    }
}

#[test]
fn metrics_example_from_two_rallies() {
    let g = [Hit { frame: 10, player: Player::Near }, Hit { frame: 55, player: Player::Far }];
    let p = [Hit { frame: 10, player: Player::Near }, Hit { frame: 55, player: Player::Near }];
    let m = hit_metrics(&g, &p, 0);
    assert_eq!(m.matched, 1);
    assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
    assert!((m.recall - 0.5).abs() < 1e-15);
    assert!((m.precision - 0.5).abs() < 1e-15);
    assert!((m.f1 - 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(common::cases(128))]

    #[test]
    fn output_is_always_feasible(
        fps in 1u32..30,
        rows in prop::collection::vec(prop::array::uniform3(0.0..1.0f64), 1..150),
    ) {
        let s = ScoreSequence::new(fps as f64, 0, rows).unwrap();
        let (hits, value) = optimize_hits(&s);
        prop_assert!(is_feasible(&s, &hits));
        prop_assert!(hits.windows(2).all(|w| w[1].frame > w[0].frame));
        prop_assert_eq!(objective(&s, &hits), value);
    }

    #[test]
    fn never_worse_than_cleaned_naive(
        fps in 1u32..30,
        rows in prop::collection::vec(prop::array::uniform3(0.0..1.0f64), 1..150),
    ) {
        let s = ScoreSequence::new(fps as f64, 0, rows).unwrap();
        let naive = make_feasible(&s, &naive_postprocess(&s));
        prop_assert!(is_feasible(&s, &naive));
        prop_assert!(optimize_hits(&s).1 >= objective(&s, &naive));
    }

    #[test]
    fn scaling_scores_scales_the_optimum(
        fps in 1u32..30,
        rows in prop::collection::vec(prop::array::uniform3(0.0..1.0f64), 1..120),
        c in 0.01..100.0f64,
    ) {
        let s = ScoreSequence::new(fps as f64, 0, rows.clone()).unwrap();
        let scaled = ScoreSequence::new(fps as f64, 0, rows.iter().map(|r| r.map(|v| v * c)).collect()).unwrap();
        prop_assert!((tau(&scaled) - c * tau(&s)).abs() <= 1e-9 * c);
        let (hits, value) = optimize_hits(&s);
        let (_, scaled_value) = optimize_hits(&scaled);
        prop_assert!((scaled_value - c * value).abs() <= 1e-9 * c * (1.0 + value.abs()));
        // the unscaled argmax stays optimal after scaling
        prop_assert!((objective(&scaled, &hits) - scaled_value).abs() <= 1e-9 * c * (1.0 + value.abs()));
    }

    #[test]
    fn metrics_algebra(truth in hits_strategy(), predicted in hits_strategy(), tol in 0usize..3) {
        let m = hit_metrics(&truth, &predicted, tol);
        prop_assert!(m.matched <= truth.len().min(predicted.len()));
        if !truth.is_empty() {
            prop_assert!((m.recall * truth.len() as f64 - m.matched as f64).abs() < 1e-9);
        }
        if !predicted.is_empty() {
            prop_assert!((m.precision * predicted.len() as f64 - m.matched as f64).abs() < 1e-9);
        }
        prop_assert!(m.accuracy <= m.recall.min(m.precision) + 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.f1));
    }
}
