//! Shuttlecock flight under gravity and quadratic drag.
//!
//! The state obeys `x'' = g - cd * |x'| * x'` with `g = (0, 0, -9.81)`, integrated
//! with classical fixed-step RK4.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{WorldPoint, COURT_LENGTH, COURT_WIDTH, NET_Y};

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_DRAG: f64 = 0.21;
pub const DEFAULT_T_MAX: f64 = 20.0;
pub const DEFAULT_NET_HEIGHT: f64 = 1.55;

const IMPACT_TOLERANCE: f64 = 1e-6;

/// Unknowns of a single shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub x0: WorldPoint,
    pub v0: Vector3<f64>,
    /// Drag coefficient (1/m).
    pub cd: f64,
}

impl InitialConditions {
    pub fn new(x0: WorldPoint, v0: Vector3<f64>, cd: f64) -> Result<Self> {
        let ic = InitialConditions { x0, v0, cd };
        ic.validate()?;
        Ok(ic)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x0.coords.iter().chain(self.v0.iter()).all(|v| v.is_finite()) && self.cd.is_finite()) {
            return Err(Error::invalid("initial conditions must be finite"));
        }
        if self.cd < 0.0 {
            return Err(Error::invalid(format!("drag coefficient must be >= 0, got {}", self.cd)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub pos: WorldPoint,
}

/// Sampled trajectory starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightPath {
    pub dt: f64,
    pub samples: Vec<PathSample>,
}

impl FlightPath {
    pub fn positions(&self) -> impl Iterator<Item = &WorldPoint> {
        self.samples.iter().map(|s| &s.pos)
    }
}

/// Where an extended trajectory meets the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingInfo {
    pub point: WorldPoint,
    pub time: f64,
    /// Distance from the landing point to the court rectangle (0 inside).
    pub out_distance: f64,
}

/// Position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
}

impl State {
    pub fn from_ic(ic: &InitialConditions) -> Self {
        State { pos: ic.x0.coords, vel: ic.v0 }
    }

    fn is_finite(&self) -> bool {
        self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite())
    }
}

#[inline]
fn accel(vel: &Vector3<f64>, cd: f64) -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY) - vel * (cd * vel.norm())
}

/// One classical RK4 step of size `h`.
#[inline]
pub fn rk4_step(s: &State, cd: f64, h: f64) -> State {
    let k1v = accel(&s.vel, cd);
    let k1x = s.vel;
    let v2 = s.vel + k1v * (h / 2.0);
    let k2v = accel(&v2, cd);
    let k2x = v2;
    let v3 = s.vel + k2v * (h / 2.0);
    let k3v = accel(&v3, cd);
    let k3x = v3;
    let v4 = s.vel + k3v * h;
    let k4v = accel(&v4, cd);
    let k4x = v4;
    State {
        pos: s.pos + (k1x + (k2x + k3x) * 2.0 + k4x) * (h / 6.0),
        vel: s.vel + (k1v + (k2v + k3v) * 2.0 + k4v) * (h / 6.0),
    }
}

fn check_step(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Integrate for `duration` seconds, sampling every `dt`.
///
/// If `duration` is not a multiple of `dt` the last sample is reached with a
/// shorter final step.
pub fn integrate(ic: &InitialConditions, duration: f64, dt: f64) -> Result<FlightPath> {
    ic.validate()?;
    check_step(dt)?;
    if !(duration > 0.0 && duration.is_finite()) || dt > duration {
        return Err(Error::invalid(format!("need 0 < dt <= duration, got dt {dt}, duration {duration}")));
    }
    let full = (duration / dt + 1e-9).floor() as usize;
    let rem = duration - full as f64 * dt;
    let mut state = State::from_ic(ic);
    let mut samples = Vec::with_capacity(full + 2);
    samples.push(PathSample { t: 0.0, pos: ic.x0 });
    for i in 1..=full {
        state = rk4_step(&state, ic.cd, dt);
        if !state.is_finite() {
            return Err(Error::Diverged { t: i as f64 * dt });
        }
        samples.push(PathSample { t: i as f64 * dt, pos: WorldPoint::from(state.pos) });
    }
    if rem > dt * 1e-9 {
        state = rk4_step(&state, ic.cd, rem);
        if !state.is_finite() {
            return Err(Error::Diverged { t: duration });
        }
        samples.push(PathSample { t: duration, pos: WorldPoint::from(state.pos) });
    }
    Ok(FlightPath { dt, samples })
}

/// Bisect the step size inside `[0, dt]` for the ground crossing from `s`.
fn refine_impact(s: &State, cd: f64, dt: f64) -> (f64, State) {
    let (mut lo, mut hi) = (0.0, dt);
    let mut best = (dt, rk4_step(s, cd, dt));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let st = rk4_step(s, cd, mid);
        best = (mid, st);
        if st.pos.z.abs() < IMPACT_TOLERANCE {
            break;
        }
        if st.pos.z > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Finds the first ground crossing while stepping a trajectory forward.
pub(crate) struct GroundTracker {
    pub landing: Option<(f64, WorldPoint)>,
}

impl GroundTracker {
    pub fn new(ic: &InitialConditions) -> Self {
        // starting on the ground and moving down counts as landing at t = 0
        let landing = (ic.x0.z <= 0.0 && ic.v0.z <= 0.0).then_some((0.0, WorldPoint::new(ic.x0.x, ic.x0.y, 0.0)));
        GroundTracker { landing }
    }

    /// Record the crossing if it happens between `prev` (at `t`) and `next`.
    #[inline]
    pub fn observe(&mut self, prev: &State, next: &State, t: f64, cd: f64, dt: f64) {
        if self.landing.is_none() && prev.pos.z >= 0.0 && next.pos.z < 0.0 {
            let (h, st) = refine_impact(prev, cd, dt);
            self.landing = Some((t + h, WorldPoint::new(st.pos.x, st.pos.y, 0.0)));
        }
    }
}

/// Extend the trajectory until it first reaches `z = 0`.
pub fn extend_to_ground(ic: &InitialConditions, dt: f64, t_max: f64) -> Result<LandingInfo> {
    ic.validate()?;
    check_step(dt)?;
    if ic.x0.z < 0.0 {
        return Err(Error::invalid("start height must be >= 0"));
    }
    let mut tracker = GroundTracker::new(ic);
    let mut state = State::from_ic(ic);
    let mut step = 0usize;
    while tracker.landing.is_none() {
        let t = step as f64 * dt;
        if t >= t_max {
            return Err(Error::NoImpact { t_max });
        }
        let next = rk4_step(&state, ic.cd, dt);
        if !next.is_finite() {
            return Err(Error::Diverged { t: t + dt });
        }
        tracker.observe(&state, &next, t, ic.cd, dt);
        state = next;
        step += 1;
    }
    let (time, point) = tracker.landing.expect("loop exits with a landing");
    if time > t_max {
        return Err(Error::NoImpact { t_max });
    }
    Ok(LandingInfo { point, time, out_distance: out_of_court_distance(&point) })
}

/// Euclidean distance from `(x, y)` to the court rectangle; zero inside.
pub fn out_of_court_distance(p: &WorldPoint) -> f64 {
    let dx = (-p.x).max(p.x - COURT_WIDTH).max(0.0);
    let dy = (-p.y).max(p.y - COURT_LENGTH).max(0.0);
    dx.hypot(dy)
}

/// Whether the path crosses the net plane above `net_height`.
/// Only the first crossing is considered.
pub fn crosses_net_validly(path: &FlightPath, net_height: f64) -> bool {
    for w in path.samples.windows(2) {
        let (a, b) = (&w[0].pos, &w[1].pos);
        let (da, db) = (a.y - NET_Y, b.y - NET_Y);
        if da == 0.0 {
            return a.z >= net_height;
        }
        if da * db < 0.0 || db == 0.0 {
            let s = da / (da - db);
            let z = a.z + s * (b.z - a.z);
            return z >= net_height;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ic(x0: [f64; 3], v0: [f64; 3], cd: f64) -> InitialConditions {
        InitialConditions::new(WorldPoint::new(x0[0], x0[1], x0[2]), Vector3::new(v0[0], v0[1], v0[2]), cd).unwrap()
    }

    #[test]
    fn ballistic_closed_form_at_half_second() {
        let path = integrate(&ic([3.05, 1.0, 1.0], [0.0, 10.0, 5.0], 0.0), 1.0, 1e-3).unwrap();
        let s = path.samples.iter().find(|s| (s.t - 0.5).abs() < 1e-12).unwrap();
        assert!((s.pos - WorldPoint::new(3.05, 6.0, 2.27375)).norm() < 1e-9);
        assert_eq!(path.samples.len(), 1001);
    }

    #[test]
    fn uneven_duration_gets_final_partial_step() {
        let path = integrate(&ic([0.0, 0.0, 1.0], [1.0, 1.0, 1.0], 0.0), 0.25, 0.1).unwrap();
        let ts: Vec<f64> = path.samples.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 4);
        assert_relative_eq!(ts[3], 0.25);
        let z = 1.0 + 0.25 - 0.5 * GRAVITY * 0.0625;
        assert_relative_eq!(path.samples[3].pos.z, z, epsilon = 1e-12);
    }

    #[test]
    fn resting_shuttle_only_falls() {
        for cd in [0.0, 0.21, 1.0] {
            let path = integrate(&ic([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], cd), 1.0, 0.01).unwrap();
            assert!(path.positions().all(|p| p.x == 1.0 && p.y == 1.0));
        }
    }

    #[test]
    fn terminal_velocity() {
        let cd = 0.21;
        let mut s = State { pos: Vector3::new(0.0, 0.0, 1000.0), vel: Vector3::zeros() };
        for _ in 0..20_000 {
            s = rk4_step(&s, cd, 1e-3);
        }
        assert!((s.vel.norm() - (GRAVITY / cd).sqrt()).abs() < 1e-9);
        assert!((s.vel.norm() - 6.835).abs() < 1e-3);
    }

    #[test]
    fn invalid_parameters() {
        let good = ic([0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 0.2);
        assert!(integrate(&good, 1.0, 0.0).is_err());
        assert!(integrate(&good, 0.0, 0.1).is_err());
        assert!(integrate(&good, 0.1, 0.2).is_err());
        assert!(InitialConditions::new(WorldPoint::origin(), Vector3::zeros(), -1.0).is_err());
        let huge = InitialConditions { x0: WorldPoint::origin(), v0: Vector3::new(1e200, 0.0, 0.0), cd: 1.0 };
        assert!(matches!(integrate(&huge, 1.0, 0.1), Err(Error::Diverged { .. })));
    }

    #[test]
    fn free_fall_landing() {
        let l = extend_to_ground(&ic([3.0, 3.0, 1.0], [0.0, 0.0, 0.0], 0.0), 1e-3, DEFAULT_T_MAX).unwrap();
        assert!((l.time - (2.0 / GRAVITY).sqrt()).abs() < 1e-6);
        assert!((l.time - 0.45152).abs() < 1e-5);
        assert!((l.point - WorldPoint::new(3.0, 3.0, 0.0)).norm() < 1e-9);
        assert_eq!(l.out_distance, 0.0);
    }

    #[test]
    fn landing_with_drag_matches_fine_integration() {
        let c = ic([3.0, 1.0, 2.0], [0.0, 12.0, 6.0], 0.21);
        let coarse = extend_to_ground(&c, 1.0 / 120.0, DEFAULT_T_MAX).unwrap();
        let fine = extend_to_ground(&c, 1e-4, DEFAULT_T_MAX).unwrap();
        assert!((coarse.point - fine.point).norm() < 1e-4);
        assert!((coarse.time - fine.time).abs() < 1e-5);
    }

    #[test]
    fn no_impact_within_horizon() {
        let c = ic([3.0, 1.0, 2.0], [0.0, 1.0, 50.0], 0.0);
        assert!(matches!(extend_to_ground(&c, 0.01, 1.0), Err(Error::NoImpact { .. })));
    }

    #[test]
    fn out_distance_examples() {
        assert_eq!(out_of_court_distance(&WorldPoint::new(3.0, 5.0, 0.0)), 0.0);
        assert_relative_eq!(out_of_court_distance(&WorldPoint::new(-0.5, 5.0, 0.0)), 0.5);
        assert_relative_eq!(
            out_of_court_distance(&WorldPoint::new(6.6, 13.9, 0.0)),
            0.5f64.hypot(0.5),
            epsilon = 1e-12
        );
        assert_relative_eq!(out_of_court_distance(&WorldPoint::new(3.0, 14.4, 0.0)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(out_of_court_distance(&WorldPoint::new(7.1, 14.4, 0.0)), 2f64.sqrt(), epsilon = 1e-12);
    }

    fn straight_path(points: &[(f64, f64)]) -> FlightPath {
        FlightPath {
            dt: 0.1,
            samples: points
                .iter()
                .enumerate()
                .map(|(i, &(y, z))| PathSample { t: i as f64 * 0.1, pos: WorldPoint::new(3.0, y, z) })
                .collect(),
        }
    }

    #[test]
    fn net_crossing() {
        // zero-drag lob from (3, 2, 1): y = 2 + 8t, z = 1 + 8t - 4.905t^2, at the net t = 0.5875
        let path = integrate(&ic([3.0, 2.0, 1.0], [0.0, 8.0, 8.0], 0.0), 1.5, 1e-3).unwrap();
        let t: f64 = (NET_Y - 2.0) / 8.0;
        let z_net = 1.0 + 8.0 * t - 0.5 * GRAVITY * t * t;
        assert!(z_net > 3.0);
        assert!(crosses_net_validly(&path, 1.55));
        assert!(!crosses_net_validly(&path, z_net + 0.01));

        assert!(!crosses_net_validly(&straight_path(&[(1.0, 2.0), (3.0, 2.0), (5.0, 1.0)]), 1.55));
        assert!(!crosses_net_validly(&straight_path(&[(6.0, 1.0), (7.4, 1.0)]), 1.55));
    }
}
