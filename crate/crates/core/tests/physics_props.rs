mod common;

use nalgebra::Vector3;
use proptest::prelude::*;
use shuttle3d::geometry::WorldPoint;
use shuttle3d::physics::{
    extend_to_ground, integrate, out_of_court_distance, rk4_step, InitialConditions, State, GRAVITY,
};

fn energy(s: &State) -> f64 {
    0.5 * s.vel.norm_squared() + GRAVITY * s.pos.z
}

fn launch() -> impl Strategy<Value = InitialConditions> {
    (0.0..6.1f64, 0.0..6.7f64, 0.0..3.0f64, -15.0..15.0f64, 1.0..40.0f64, -10.0..25.0f64, 0.0..1.0f64).prop_map(
        |(x, y, z, vx, vy, vz, cd)| {
            InitialConditions::new(WorldPoint::new(x, y, z), Vector3::new(vx, vy, vz), cd).unwrap()
        },
    )
}

fn end_error(ic: &InitialConditions, duration: f64, dt: f64, reference: &WorldPoint) -> f64 {
    let path = integrate(ic, duration, dt).unwrap();
    (path.samples.last().unwrap().pos - reference).norm()
}

#[test]
fn drag_free_flight_is_a_parabola() {
    let ic = InitialConditions::new(WorldPoint::new(1.0, 2.0, 1.5), Vector3::new(3.0, 12.0, 9.0), 0.0).unwrap();
    let path = integrate(&ic, 2.0, 1e-3).unwrap();
    assert_eq!(path.samples.len(), 2001);
    for s in &path.samples {
        let t = s.t;
        let exact = ic.x0 + ic.v0 * t - Vector3::new(0.0, 0.0, 0.5 * GRAVITY * t * t);
        assert!((s.pos - exact).norm() < 1e-6, "t = {t}");
    }
}

#[test]
fn sample_times_are_uniform_with_short_final_step() {
    let ic = InitialConditions::new(WorldPoint::new(1.0, 1.0, 1.0), Vector3::new(0.0, 10.0, 5.0), 0.2).unwrap();
    let path = integrate(&ic, 0.105, 0.01).unwrap();
    let ts: Vec<f64> = path.samples.iter().map(|s| s.t).collect();
    assert_eq!(ts.len(), 12);
    assert_eq!(ts[0], 0.0);
    assert!(ts.windows(2).all(|w| w[1] > w[0]));
    assert!((ts[11] - 0.105).abs() < 1e-12);
}

#[test]
fn rejects_bad_steps_and_drag() {
    let ic = InitialConditions::new(WorldPoint::new(1.0, 1.0, 1.0), Vector3::new(0.0, 10.0, 5.0), 0.2).unwrap();
    assert!(integrate(&ic, 1.0, 0.0).is_err());
    assert!(integrate(&ic, 1.0, -0.1).is_err());
    assert!(integrate(&ic, 0.01, 0.1).is_err());
    assert!(InitialConditions::new(WorldPoint::new(1.0, 1.0, 1.0), Vector3::new(0.0, 1.0, 1.0), -0.1).is_err());
}

proptest! {
    #![proptest_config(common::cases(64))]

    #[test]
    fn energy_never_grows_under_drag(ic in launch()) {
        let mut s = State::from_ic(&ic);
        let mut e = energy(&s);
        for _ in 0..1000 {
            s = rk4_step(&s, ic.cd, 2e-3);
            let next = energy(&s);
            if ic.cd > 0.0 {
                prop_assert!(next <= e + 1e-9 * e.abs().max(1.0), "{next} > {e}");
            }
            e = next;
        }
    }

    #[test]
    fn energy_is_conserved_without_drag(mut ic in launch()) {
        ic.cd = 0.0;
        let mut s = State::from_ic(&ic);
        let e0 = energy(&s);
        for _ in 0..2000 {
            s = rk4_step(&s, 0.0, 1e-3);
        }
        prop_assert!((energy(&s) - e0).abs() <= 1e-6 * e0.abs().max(1.0));
    }

    #[test]
    fn horizontal_velocity_never_reverses(ic in launch()) {
        let mut s = State::from_ic(&ic);
        let sx = ic.v0.x.signum();
        let sy = ic.v0.y.signum();
        for _ in 0..2000 {
            s = rk4_step(&s, ic.cd, 1e-3);
            prop_assert!(s.vel.x == 0.0 || s.vel.x.signum() == sx);
            prop_assert!(s.vel.y == 0.0 || s.vel.y.signum() == sy);
        }
    }

    #[test]
    fn fourth_order_convergence(
        z in 1.0..3.0f64, vy in 5.0..25.0f64, vz in 0.0..15.0f64, cd in 0.05..0.4f64,
    ) {
        let ic = InitialConditions::new(WorldPoint::new(2.0, 1.0, z), Vector3::new(1.0, vy, vz), cd).unwrap();
        let duration = 1.5;
        let h = 0.01;
        let reference = integrate(&ic, duration, h / 64.0).unwrap().samples.last().unwrap().pos;
        let coarse = end_error(&ic, duration, h, &reference);
        let fine = end_error(&ic, duration, h / 2.0, &reference);
        let ratio = coarse / fine;
        prop_assert!((ratio / 16.0 - 1.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn out_distance_is_lipschitz(
        x1 in -5.0..11.0f64, y1 in -5.0..18.0f64, x2 in -5.0..11.0f64, y2 in -5.0..18.0f64,
    ) {
        let a = WorldPoint::new(x1, y1, 0.0);
        let b = WorldPoint::new(x2, y2, 0.0);
        let d = (x1 - x2).hypot(y1 - y2);
        prop_assert!((out_of_court_distance(&a) - out_of_court_distance(&b)).abs() <= d + 1e-12);
    }

    #[test]
    fn out_distance_vanishes_exactly_inside(x in -3.0..9.0f64, y in -3.0..16.0f64) {
        let inside = (0.0..=6.1).contains(&x) && (0.0..=13.4).contains(&y);
        prop_assert_eq!(out_of_court_distance(&WorldPoint::new(x, y, 0.0)) == 0.0, inside);
    }

    #[test]
    fn landing_is_on_the_ground(ic in launch()) {
        let landing = extend_to_ground(&ic, 1e-3, 20.0).unwrap();
        prop_assert!(landing.point.z.abs() < 1e-6);
        prop_assert!(landing.time > 0.0 || ic.x0.z == 0.0);
        prop_assert!((landing.out_distance - out_of_court_distance(&landing.point)).abs() < 1e-12);
    }
}
