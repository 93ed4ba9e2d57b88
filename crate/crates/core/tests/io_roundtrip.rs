mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use shuttle3d::geometry::{CameraModel, ImagePoint, Player, WorldPoint};
use shuttle3d::hit_segmentation::{Hit, ScoreSequence};
use shuttle3d::io;
use shuttle3d::physics::{FlightPath, PathSample};
use shuttle3d::reconstruction::{ShuttleTrack, TrackEntry};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4..1e4f64, -1.0..1.0f64, Just(0.0)]
}

proptest! {
    #![proptest_config(common::cases(48))]

    #[test]
    fn track_round_trips(rows in prop::collection::vec((finite(), finite(), any::<bool>(), 1usize..4), 1..40),
                         fps in 1.0..240.0f64) {
        let dir = tempfile::tempdir().unwrap();
        let mut frame = 0;
        let entries: Vec<TrackEntry> = rows
            .iter()
            .map(|&(u, v, visible, step)| {
                frame += step;
                TrackEntry { frame, u, v, visible }
            })
            .collect();
        let track = ShuttleTrack::new(fps, entries).unwrap();
        let p = dir.path().join("t.csv");
        io::write_track(&p, &track).unwrap();
        prop_assert_eq!(io::read_track(&p, fps).unwrap(), track);
    }

    #[test]
    fn trajectory_round_trips(pts in prop::collection::vec((finite(), finite(), finite()), 1..50), dt in 1e-4..0.1f64) {
        let dir = tempfile::tempdir().unwrap();
        let samples = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| PathSample { t: i as f64 * dt, pos: WorldPoint::new(x, y, z) })
            .collect();
        let path = FlightPath { dt, samples };
        let p = dir.path().join("sub/p.csv");
        io::write_trajectory(&p, &path).unwrap();
        let back = io::read_trajectory(&p).unwrap();
        prop_assert_eq!(back.samples, path.samples);
    }

    #[test]
    fn hits_and_scores_round_trip(
        raw in prop::collection::vec((0usize..5, any::<bool>()), 0..20),
        rows in prop::collection::vec(prop::array::uniform3(0.0..1.0f64), 1..50),
        start in 0usize..1000, fps in 1.0..60.0f64,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut frame = 0;
        let hits: Vec<Hit> = raw
            .iter()
            .map(|&(gap, near)| {
                frame += gap + 1;
                Hit { frame, player: if near { Player::Near } else { Player::Far } }
            })
            .collect();
        let hp = dir.path().join("h.csv");
        io::write_hits(&hp, &hits).unwrap();
        prop_assert_eq!(io::read_hits(&hp).unwrap(), hits);

        let scores = ScoreSequence::new(fps, start, rows).unwrap();
        let sp = dir.path().join("s.csv");
        io::write_scores(&sp, &scores).unwrap();
        prop_assert_eq!(io::read_scores(&sp, fps).unwrap(), scores);
    }

    #[test]
    fn keypoints_round_trip(raw in prop::collection::btree_map(0usize..500, prop::collection::vec((finite(), finite()), 1..4), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let kp: BTreeMap<usize, Vec<ImagePoint>> =
            raw.into_iter().map(|(f, v)| (f, v.into_iter().map(|(u, v)| ImagePoint::new(u, v)).collect())).collect();
        let p = dir.path().join("k.csv");
        io::write_keypoints(&p, &kp).unwrap();
        prop_assert_eq!(io::read_keypoints(&p).unwrap(), kp);
    }

    #[test]
    fn camera_and_corners_round_trip(
        ex in -5.0..10.0f64, ey in -15.0..-3.0f64, ez in 2.0..12.0f64, f in 300.0..3000.0f64,
        corners in prop::array::uniform4((finite(), finite())), poles in prop::array::uniform2((finite(), finite())),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let cam = CameraModel::look_at(WorldPoint::new(ex, ey, ez), WorldPoint::new(3.05, 6.7, 0.0), f, (640.0, 360.0), 0.0).unwrap();
        let p = dir.path().join("cam.json");
        io::write_camera(&p, &cam).unwrap();
        prop_assert_eq!(io::read_camera(&p).unwrap(), cam);

        let a = io::CourtAnnotation { corners: corners.map(|(u, v)| [u, v]), poles: poles.map(|(u, v)| [u, v]) };
        let cp = dir.path().join("corners.json");
        io::write_json(&cp, &a).unwrap();
        prop_assert_eq!(io::read_corners(&cp).unwrap(), a);
    }
}

#[test]
fn malformed_files_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    std::fs::write(&p, "frame,u,v,visible\n0,1,2,1\n1,x,2,1\n").unwrap();
    let err = io::read_track(&p, 30.0).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains('3'), "{err}");
    std::fs::write(&p, "frame,u,v\n0,1,2\n").unwrap();
    assert_eq!(io::read_track(&p, 30.0).unwrap_err().exit_code(), 2);
    assert_eq!(io::read_track(&dir.path().join("missing.csv"), 30.0).unwrap_err().exit_code(), 2);
}
