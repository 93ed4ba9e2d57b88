mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use shuttle3d::geometry::{
    assign_players, calibrate_dlt, homography_from_corners, image_to_court, CameraModel, CourtModel, ImagePoint,
    PlayerAnchors, WorldPoint, COURT_LENGTH, COURT_WIDTH, NET_Y,
};

fn camera() -> impl Strategy<Value = CameraModel> {
    (-4.0..10.0f64, -14.0..-4.0f64, 3.0..12.0f64, 1.0..5.0f64, 4.0..9.0f64, 600.0..1800.0f64, -0.15..0.15f64).prop_map(
        |(ex, ey, ez, tx, ty, f, roll)| {
            CameraModel::look_at(WorldPoint::new(ex, ey, ez), WorldPoint::new(tx, ty, 0.0), f, (640.0, 360.0), roll)
                .unwrap()
        },
    )
}

fn mirror(p: &WorldPoint) -> WorldPoint {
    WorldPoint::new(COURT_WIDTH - p.x, COURT_LENGTH - p.y, p.z)
}

fn close(a: &WorldPoint, b: &WorldPoint) -> bool {
    (a - b).norm() < 1e-12
}

#[test]
fn court_model_is_point_symmetric() {
    let m = CourtModel::standard(1.55).unwrap();
    for (a, b) in &m.lines {
        let (ma, mb) = (mirror(a), mirror(b));
        assert!(
            m.lines.iter().any(|(c, d)| (close(c, &ma) && close(d, &mb)) || (close(c, &mb) && close(d, &ma))),
            "no mirror for {a} - {b}"
        );
    }
    assert!(close(&mirror(&m.poles[0]), &m.poles[1]));
    let c = m.corners;
    assert!(close(&mirror(&c[0]), &c[3]) && close(&mirror(&c[1]), &c[2]));
}

#[test]
fn bad_pole_height_is_rejected() {
    assert!(CourtModel::standard(0.0).is_err());
    assert!(CourtModel::standard(f64::NAN).is_err());
}

#[test]
fn calibration_needs_six_usable_points() {
    let m = CourtModel::standard(1.55).unwrap();
    let pairs: Vec<_> = m.corners.iter().map(|p| (*p, ImagePoint::new(p.x, p.y))).collect();
    assert!(calibrate_dlt(&pairs).is_err());
    // coplanar references cannot fix a 3D camera
    let flat: Vec<_> = m.lines.iter().take(6).map(|(a, _)| (*a, ImagePoint::new(a.x * 10.0, a.y * 10.0))).collect();
    assert!(calibrate_dlt(&flat).is_err());
}

proptest! {
    #![proptest_config(common::cases(64))]

    #[test]
    fn projection_ignores_scale(cam in camera(), c in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64],
                                x in 0.0..6.1f64, y in 0.0..13.4f64, z in 0.0..4.0f64) {
        let p = WorldPoint::new(x, y, z);
        let a = cam.project(&p).unwrap();
        let b = cam.scaled(c).unwrap().project(&p).unwrap();
        prop_assert!((a - b).norm() < 1e-8 * a.coords.norm().max(1.0));
    }

    #[test]
    fn dlt_reproduces_the_reference_projections(cam in camera(), pole in 1.2..2.0f64) {
        let m = CourtModel::standard(pole).unwrap();
        let pairs: Vec<_> = m.reference_points().iter().map(|p| (*p, cam.project(p).unwrap())).collect();
        let fitted = calibrate_dlt(&pairs).unwrap();
        for (w, i) in &pairs {
            prop_assert!((fitted.project(w).unwrap() - i).norm() < 1e-6);
        }
        // and off the calibration points, since P is recovered up to scale
        let probe = WorldPoint::new(2.0, 9.0, 2.5);
        prop_assert!((fitted.project(&probe).unwrap() - cam.project(&probe).unwrap()).norm() < 1e-5);
    }

    #[test]
    fn homography_interpolates_the_corners(cam in camera()) {
        let m = CourtModel::standard(1.55).unwrap();
        let img = m.corners.map(|c| cam.project(&c).unwrap());
        let h = homography_from_corners(&img, &m).unwrap();
        for (q, c) in img.iter().zip(&m.corners) {
            let (x, y) = image_to_court(&h, q).unwrap();
            prop_assert!((x - c.x).abs() <= 1e-9 * 13.4 && (y - c.y).abs() <= 1e-9 * 13.4);
        }
    }

    #[test]
    fn near_player_never_beyond_far_player(
        cam in camera(),
        feet in prop::collection::vec(prop::collection::vec((-1.0..7.1f64, -2.0..15.4f64), 0..5), 1..30),
        relaxation in 0.0..1.0f64,
    ) {
        let m = CourtModel::standard(1.55).unwrap();
        let h = homography_from_corners(&m.corners.map(|c| cam.project(&c).unwrap()), &m).unwrap();
        let candidates: BTreeMap<usize, Vec<ImagePoint>> = feet
            .iter()
            .enumerate()
            .map(|(f, pts)| (f, pts.iter().map(|&(x, y)| cam.project(&WorldPoint::new(x, y, 0.0)).unwrap()).collect()))
            .collect();
        let out = assign_players(&PlayerAnchors::from_candidates(candidates), &h, relaxation);
        for (f, near) in &out.near {
            if let Some(far) = out.far.get(f) {
                prop_assert!(near.y <= far.y);
            }
        }
        for near in out.near.values() {
            prop_assert!(near.y <= NET_Y + relaxation + 1e-6);
        }
        for far in out.far.values() {
            prop_assert!(far.y >= NET_Y - relaxation - 1e-6);
        }
    }
}
