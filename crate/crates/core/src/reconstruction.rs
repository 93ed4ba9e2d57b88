//! Per-shot recovery of initial conditions from a monocular 2D track.
//!
//! The objective combines the weighted reprojection error of the simulated
//! flight with two player-anchor priors and the squared out-of-court distance
//! of the extrapolated landing point:
//!
//! ```text
//! L = sigma * sum_i |project(x(t_i)) - obs_i|^2 + |x(0) - x_H|^2 + |x(t_R) - x_R|^2 + d_O^2
//! ```
//!
//! Box constraints (start position, drag) are handled by clamping the search
//! parameters; the speed cap and the direction half-space use exterior
//! quadratic penalties whose weight grows between rounds.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    anchor_3d, CameraModel, ImagePoint, Player, PlayerAnchors, WorldPoint, COURT_WIDTH, DEFAULT_ANCHOR_HEIGHT,
};
use crate::hit_segmentation::Hit;
use crate::optim::{levenberg_marquardt, nelder_mead, LmOptions, NelderMeadOptions};
use crate::physics::{
    out_of_court_distance, rk4_step, FlightPath, GroundTracker, InitialConditions, LandingInfo, PathSample, State,
    DEFAULT_DRAG, DEFAULT_T_MAX, GRAVITY,
};

pub const MAX_SPEED: f64 = 120.0;
pub const MAX_START_HEIGHT: f64 = 3.0;
pub const DRAG_RANGE: (f64, f64) = (0.05, 1.0);

/// One frame of a 2D shuttle track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame: usize,
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuttleTrack {
    pub fps: f64,
    pub entries: Vec<TrackEntry>,
}

impl ShuttleTrack {
    pub fn new(fps: f64, entries: Vec<TrackEntry>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if entries.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return Err(Error::invalid("track frames must be strictly increasing"));
        }
        if entries.iter().any(|e| e.visible && !(e.u.is_finite() && e.v.is_finite())) {
            return Err(Error::invalid("visible track entries need finite coordinates"));
        }
        Ok(ShuttleTrack { fps, entries })
    }

    /// Entries with `start <= frame < end`.
    pub fn segment(&self, start: usize, end: usize) -> ShuttleTrack {
        ShuttleTrack {
            fps: self.fps,
            entries: self.entries.iter().filter(|e| e.frame >= start && e.frame < end).copied().collect(),
        }
    }

    pub fn visible(&self) -> impl Iterator<Item = &TrackEntry> {
        self.entries.iter().filter(|e| e.visible)
    }

    pub fn visible_count(&self) -> usize {
        self.visible().count()
    }
}

/// Everything known about one shot before reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotObservation {
    pub track: ShuttleTrack,
    pub hit_frame: usize,
    pub receive_frame: usize,
    pub hitter: Player,
    pub anchor_hit: WorldPoint,
    pub anchor_receive: WorldPoint,
}

impl ShotObservation {
    pub fn new(
        track: &ShuttleTrack,
        hit_frame: usize,
        receive_frame: usize,
        hitter: Player,
        anchor_hit: WorldPoint,
        anchor_receive: WorldPoint,
    ) -> Result<Self> {
        if receive_frame <= hit_frame {
            return Err(Error::invalid(format!("receive frame {receive_frame} must follow hit frame {hit_frame}")));
        }
        let (lo, hi) = hitter.half_y_range();
        if anchor_hit.y < lo - 1e-9 || anchor_hit.y > hi + 1e-9 {
            return Err(Error::invalid(format!(
                "hit anchor y = {} is not on the {} half",
                anchor_hit.y,
                hitter.as_str()
            )));
        }
        Ok(ShotObservation {
            track: track.segment(hit_frame, receive_frame),
            hit_frame,
            receive_frame,
            hitter,
            anchor_hit,
            anchor_receive,
        })
    }

    pub fn fps(&self) -> f64 {
        self.track.fps
    }

    /// Flight time to the receiver in seconds.
    pub fn t_r(&self) -> f64 {
        (self.receive_frame - self.hit_frame) as f64 / self.fps()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Reprojection, both anchors and out-of-court distance.
    Full,
    /// Weighted reprojection term only.
    ReprojectionOnly,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LossMode::Full),
            "reprojection-only" => Ok(LossMode::ReprojectionOnly),
            other => Err(Error::invalid(format!("unknown loss mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    /// Replaces the camera-derived reprojection weight when set.
    pub sigma_override: Option<f64>,
    pub anchor_height: f64,
    pub multistart_count: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub penalty_rounds: usize,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    /// Integration steps per video frame.
    pub substeps: usize,
    pub t_max: f64,
    pub seed: u64,
    pub loss: LossMode,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            sigma_override: None,
            anchor_height: DEFAULT_ANCHOR_HEIGHT,
            multistart_count: 8,
            max_iterations: 2000,
            tolerance: 1e-8,
            penalty_rounds: 3,
            penalty_initial: 10.0,
            penalty_growth: 10.0,
            substeps: 4,
            t_max: DEFAULT_T_MAX,
            seed: 0,
            loss: LossMode::Full,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multistart_count == 0 || self.max_iterations == 0 || self.substeps == 0 || self.penalty_rounds == 0 {
            return Err(Error::invalid("counts in the reconstruction config must be positive"));
        }
        if !(self.tolerance > 0.0 && self.penalty_initial > 0.0 && self.penalty_growth >= 1.0 && self.t_max > 0.0) {
            return Err(Error::invalid("tolerances and penalty weights must be positive"));
        }
        if let Some(s) = self.sigma_override {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("sigma override must be positive"));
            }
        }
        Ok(())
    }
}

/// Reprojection weight: inverse square of the spectral norm of P.
pub fn sigma_from_camera(camera: &CameraModel) -> Result<f64> {
    let s = camera.matrix().singular_values().max();
    if !(s > 0.0) {
        return Err(Error::invalid("projection matrix is zero"));
    }
    Ok(1.0 / (s * s))
}

/// The weight actually used in the loss: computed on the canonical camera so
/// that rescaling P does not change the objective.
pub fn effective_sigma(camera: &CameraModel, config: &ReconstructionConfig) -> Result<f64> {
    match config.sigma_override {
        Some(s) => Ok(s),
        None => sigma_from_camera(&camera.normalized()),
    }
}

/// Individual loss terms at one set of initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted sum of squared pixel residuals.
    pub reprojection: f64,
    pub sigma: f64,
    pub hit_anchor: f64,
    pub receive_anchor: f64,
    /// Squared out-of-court distance of the landing point.
    pub out_of_court: f64,
    pub landing: Option<LandingInfo>,
}

/// Precomputed per-shot data for fast repeated loss evaluation.
struct ShotEvaluator<'a> {
    camera: CameraModel,
    shot: &'a ShotObservation,
    /// (integration step index, observed pixel)
    observations: Vec<(usize, ImagePoint)>,
    receive_step: usize,
    dt: f64,
    sigma: f64,
    mode: LossMode,
    t_max: f64,
}

struct Simulated {
    reprojection: f64,
    at_receive: WorldPoint,
    landing: Option<(f64, WorldPoint)>,
}

impl<'a> ShotEvaluator<'a> {
    fn new(
        camera: &CameraModel,
        shot: &'a ShotObservation,
        substeps: usize,
        sigma: f64,
        mode: LossMode,
        t_max: f64,
    ) -> Result<Self> {
        let observations: Vec<(usize, ImagePoint)> = shot
            .track
            .visible()
            .filter(|e| e.frame >= shot.hit_frame && e.frame < shot.receive_frame)
            .map(|e| ((e.frame - shot.hit_frame) * substeps, ImagePoint::new(e.u, e.v)))
            .collect();
        if observations.is_empty() {
            return Err(Error::NoObservations);
        }
        Ok(ShotEvaluator {
            camera: camera.normalized(),
            shot,
            observations,
            receive_step: (shot.receive_frame - shot.hit_frame) * substeps,
            dt: 1.0 / (shot.fps() * substeps as f64),
            sigma,
            mode,
            t_max,
        })
    }

    /// Integrate once through the observations, the receive frame and (if
    /// asked) the ground impact. Pixel residuals go to `pixel_residuals`.
    fn simulate(
        &self,
        ic: &InitialConditions,
        need_landing: bool,
        mut pixel_residuals: Option<&mut Vec<f64>>,
    ) -> Result<Simulated> {
        let mut state = State::from_ic(ic);
        let mut tracker = GroundTracker::new(ic);
        let mut reprojection = 0.0;
        let mut obs = self.observations.iter().peekable();
        let mut at_receive = ic.x0;
        let max_steps = (self.t_max / self.dt).ceil() as usize;
        let mut step = 0usize;
        loop {
            while let Some((k, px)) = obs.peek() {
                if *k != step {
                    break;
                }
                let p = WorldPoint::from(state.pos);
                if self.camera.depth(&p) <= 0.0 {
                    return Err(Error::PointAtInfinity);
                }
                let d = self.camera.project(&p)? - px;
                reprojection += d.norm_squared();
                if let Some(out) = pixel_residuals.as_deref_mut() {
                    out.extend([d.x, d.y]);
                }
                obs.next();
            }
            if step == self.receive_step {
                at_receive = WorldPoint::from(state.pos);
            }
            let done_obs = step >= self.receive_step && obs.peek().is_none();
            if done_obs && (!need_landing || tracker.landing.is_some()) {
                break;
            }
            if step >= max_steps.max(self.receive_step) {
                if need_landing && tracker.landing.is_none() {
                    return Err(Error::NoImpact { t_max: self.t_max });
                }
                break;
            }
            let next = rk4_step(&state, ic.cd, self.dt);
            if !next.pos.iter().chain(next.vel.iter()).all(|v| v.is_finite()) {
                return Err(Error::Diverged { t: (step + 1) as f64 * self.dt });
            }
            if need_landing {
                tracker.observe(&state, &next, step as f64 * self.dt, ic.cd, self.dt);
            }
            state = next;
            step += 1;
        }
        Ok(Simulated { reprojection, at_receive, landing: tracker.landing })
    }

    fn loss(&self, ic: &InitialConditions) -> Result<LossBreakdown> {
        match self.mode {
            LossMode::ReprojectionOnly => {
                let sim = self.simulate(ic, false, None)?;
                Ok(LossBreakdown {
                    total: self.sigma * sim.reprojection,
                    reprojection: sim.reprojection,
                    sigma: self.sigma,
                    hit_anchor: 0.0,
                    receive_anchor: 0.0,
                    out_of_court: 0.0,
                    landing: None,
                })
            }
            LossMode::Full => {
                if ic.x0.z < 0.0 {
                    return Err(Error::invalid("start height must be >= 0"));
                }
                let sim = self.simulate(ic, true, None)?;
                let (time, point) = sim.landing.ok_or(Error::NoImpact { t_max: self.t_max })?;
                let d_o = out_of_court_distance(&point);
                let hit_anchor = (ic.x0 - self.shot.anchor_hit).norm_squared();
                let receive_anchor = (sim.at_receive - self.shot.anchor_receive).norm_squared();
                let out_of_court = d_o * d_o;
                Ok(LossBreakdown {
                    total: self.sigma * sim.reprojection + hit_anchor + receive_anchor + out_of_court,
                    reprojection: sim.reprojection,
                    sigma: self.sigma,
                    hit_anchor,
                    receive_anchor,
                    out_of_court,
                    landing: Some(LandingInfo { point, time, out_distance: d_o }),
                })
            }
        }
    }
}

impl ShotEvaluator<'_> {
    /// Residual vector whose squared norm is the loss.
    fn residuals(&self, ic: &InitialConditions) -> Result<Vec<f64>> {
        let mut r = Vec::with_capacity(2 * self.observations.len() + 7);
        let full = self.mode == LossMode::Full;
        if full && ic.x0.z < 0.0 {
            return Err(Error::invalid("start height must be >= 0"));
        }
        let sim = self.simulate(ic, full, Some(&mut r))?;
        let w = self.sigma.sqrt();
        r.iter_mut().for_each(|e| *e *= w);
        if full {
            let (_, point) = sim.landing.ok_or(Error::NoImpact { t_max: self.t_max })?;
            r.extend((ic.x0 - self.shot.anchor_hit).iter());
            r.extend((sim.at_receive - self.shot.anchor_receive).iter());
            r.push(out_of_court_distance(&point));
        }
        Ok(r)
    }
}

fn substeps_for(fps: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let ratio = 1.0 / (fps * dt);
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::invalid(format!("time step {dt} must divide the frame interval 1/{fps}")));
    }
    Ok(n as usize)
}

/// Sum of squared pixel residuals over the visible frames of the shot.
pub fn reprojection_loss(camera: &CameraModel, ic: &InitialConditions, shot: &ShotObservation, dt: f64) -> Result<f64> {
    ic.validate()?;
    let substeps = substeps_for(shot.fps(), dt)?;
    let eval = ShotEvaluator::new(camera, shot, substeps, 1.0, LossMode::ReprojectionOnly, DEFAULT_T_MAX)?;
    Ok(eval.simulate(ic, false, None)?.reprojection)
}

/// Full objective (or the reprojection-only variant, per `config.loss`).
pub fn total_loss(
    camera: &CameraModel,
    ic: &InitialConditions,
    shot: &ShotObservation,
    config: &ReconstructionConfig,
) -> Result<LossBreakdown> {
    ic.validate()?;
    config.validate()?;
    let sigma = effective_sigma(camera, config)?;
    ShotEvaluator::new(camera, shot, config.substeps, sigma, config.loss, config.t_max)?.loss(ic)
}

/// Zero-drag chord from the hit anchor to the receive anchor.
pub fn initial_guess(shot: &ShotObservation) -> Result<InitialConditions> {
    let t_r = shot.t_r();
    if !(t_r > 0.0) {
        return Err(Error::invalid("shot has zero flight time"));
    }
    let x0 = clamp_start(shot.anchor_hit, shot.hitter);
    let mut v0 = (shot.anchor_receive - shot.anchor_hit) / t_r;
    v0.z += 0.5 * GRAVITY * t_r;
    InitialConditions::new(x0, v0, DEFAULT_DRAG)
}

/// Drag values tried when seeding the search with anchor-to-anchor flights.
const SEED_DRAGS: [f64; 7] = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0];

/// Launch velocity carrying the shuttle from `x0` to `target` in time `t`
/// under drag `cd`, by Newton iteration on the end position.
fn shoot(x0: WorldPoint, target: WorldPoint, t: f64, cd: f64, steps: usize) -> Option<Vector3<f64>> {
    let h = t / steps as f64;
    let end = |v: Vector3<f64>| {
        let mut s = State { pos: x0.coords, vel: v };
        for _ in 0..steps {
            s = rk4_step(&s, cd, h);
        }
        s.pos - target.coords
    };
    let mut v = (target - x0) / t + Vector3::new(0.0, 0.0, 0.5 * GRAVITY * t);
    for _ in 0..15 {
        let e = end(v);
        if !e.iter().all(|c| c.is_finite()) {
            return None;
        }
        if e.norm() < 1e-6 {
            break;
        }
        let eps = 1e-6 * (1.0 + v.norm());
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            let mut vk = v;
            vk[k] += eps;
            jac.set_column(k, &((end(vk) - e) / eps));
        }
        let mut dv = jac.lu().solve(&(-e))?;
        let n = dv.norm();
        if n > 30.0 {
            dv *= 30.0 / n;
        }
        v += dv;
        if v.norm() > 2.0 * MAX_SPEED {
            return None;
        }
    }
    (end(v).norm() < 1e-3 && v.norm() <= MAX_SPEED).then_some(v)
}

/// Flights that start on the hit anchor and pass through the receive anchor
/// after `t_R`, one per seed drag value that admits such a flight.
fn anchor_flights(shot: &ShotObservation, substeps: usize) -> Vec<InitialConditions> {
    let x0 = clamp_start(shot.anchor_hit, shot.hitter);
    let steps = (shot.receive_frame - shot.hit_frame) * substeps;
    SEED_DRAGS
        .iter()
        .filter_map(|&cd| {
            shoot(x0, shot.anchor_receive, shot.t_r(), cd, steps).map(|v0| InitialConditions { x0, v0, cd })
        })
        .collect()
}

fn clamp_start(p: WorldPoint, hitter: Player) -> WorldPoint {
    let (lo, hi) = hitter.half_y_range();
    WorldPoint::new(p.x.clamp(0.0, COURT_WIDTH), p.y.clamp(lo, hi), p.z.clamp(0.0, MAX_START_HEIGHT))
}

/// Result of reconstructing one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub ic: InitialConditions,
    pub loss_total: f64,
    pub loss_reprojection: f64,
    pub components: LossBreakdown,
    /// Positions at every frame from the hit to the receive frame inclusive.
    pub path: FlightPath,
    pub converged: bool,
    /// All constraints hold exactly for `ic`.
    pub feasible: bool,
    /// Height at the receive frame lies within `[0, 3]` m.
    pub final_height_ok: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Constraint checks on a candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub start_box: bool,
    pub speed: bool,
    pub direction: bool,
    pub drag: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.start_box && self.speed && self.direction && self.drag
    }
}

pub fn check_feasibility(ic: &InitialConditions, shot: &ShotObservation) -> Feasibility {
    let (lo, hi) = shot.hitter.half_y_range();
    let x = ic.x0;
    let chord = shot.anchor_receive - shot.anchor_hit;
    Feasibility {
        start_box: (0.0..=MAX_START_HEIGHT).contains(&x.z)
            && (0.0..=COURT_WIDTH).contains(&x.x)
            && (lo..=hi).contains(&x.y),
        speed: ic.v0.norm() <= MAX_SPEED,
        direction: ic.v0.dot(&chord) >= 0.0,
        drag: (DRAG_RANGE.0..=DRAG_RANGE.1).contains(&ic.cd),
    }
}

/// Box of the search vector `(x0, v0, cd)`.
fn param_bounds(hitter: Player) -> [(f64, f64); 7] {
    let (lo, hi) = hitter.half_y_range();
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    [(0.0, COURT_WIDTH), (lo, hi), (0.0, MAX_START_HEIGHT), free, free, free, DRAG_RANGE]
}

/// Map a raw search vector onto the box-constrained parameter space.
fn decode(theta: &[f64; 7], hitter: Player) -> (InitialConditions, f64) {
    let bounds = param_bounds(hitter);
    let mut clamped = [0.0; 7];
    let mut outside = 0.0;
    for i in 0..7 {
        clamped[i] = theta[i].clamp(bounds[i].0, bounds[i].1);
        outside += (theta[i] - clamped[i]).powi(2);
    }
    let ic = InitialConditions {
        x0: WorldPoint::new(clamped[0], clamped[1], clamped[2]),
        v0: Vector3::new(clamped[3], clamped[4], clamped[5]),
        cd: clamped[6],
    };
    (ic, outside)
}

fn encode(ic: &InitialConditions) -> [f64; 7] {
    [ic.x0.x, ic.x0.y, ic.x0.z, ic.v0.x, ic.v0.y, ic.v0.z, ic.cd]
}

fn constraint_violation(ic: &InitialConditions, direction: &Option<Unit<Vector3<f64>>>) -> f64 {
    let over_speed = (ic.v0.norm() - MAX_SPEED).max(0.0);
    let backwards = direction.map_or(0.0, |d| (-ic.v0.dot(&d)).max(0.0));
    over_speed * over_speed + backwards * backwards
}

/// Smallest change making `ic` satisfy the speed cap and the direction half-space.
fn project_feasible(ic: &InitialConditions, direction: &Option<Unit<Vector3<f64>>>) -> InitialConditions {
    let mut v = ic.v0;
    if let Some(d) = direction {
        let along = v.dot(d);
        if along < 0.0 {
            v -= d.into_inner() * along;
        }
    }
    let speed = v.norm();
    if speed > MAX_SPEED {
        v *= MAX_SPEED / speed;
    }
    InitialConditions { v0: v, ..*ic }
}

fn perturbed_start(guess: &InitialConditions, hitter: Player, rng: &mut ChaCha8Rng) -> InitialConditions {
    let mut x0 = guess.x0;
    for i in 0..3 {
        x0[i] += rng.gen_range(-0.3..=0.3);
    }
    let x0 = clamp_start(x0, hitter);
    let speed = guess.v0.norm();
    let v0 = if speed > 0.0 {
        let dir = guess.v0 / speed;
        let horiz = Vector3::new(dir.x, dir.y, 0.0);
        let side = if horiz.norm() > 1e-9 { Vector3::z().cross(&horiz).normalize() } else { Vector3::x() };
        let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), rng.gen_range(-15f64..=15.0).to_radians());
        let pitch = Rotation3::from_axis_angle(&Unit::new_normalize(side), rng.gen_range(-15f64..=15.0).to_radians());
        yaw * (pitch * dir) * speed * rng.gen_range(0.7..=1.4)
    } else {
        guess.v0
    };
    let cd = (guess.cd * rng.gen_range(0.5..=2.0)).clamp(DRAG_RANGE.0, DRAG_RANGE.1);
    InitialConditions { x0, v0, cd }
}

/// Frame-rate samples of the trajectory from the hit to the receive frame.
pub fn frame_path(ic: &InitialConditions, frames: usize, fps: f64, substeps: usize) -> Result<FlightPath> {
    let dt = 1.0 / (fps * substeps as f64);
    let mut state = State::from_ic(ic);
    let mut samples = Vec::with_capacity(frames + 1);
    samples.push(PathSample { t: 0.0, pos: ic.x0 });
    for f in 1..=frames {
        for _ in 0..substeps {
            state = rk4_step(&state, ic.cd, dt);
        }
        if !state.pos.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { t: f as f64 / fps });
        }
        samples.push(PathSample { t: f as f64 / fps, pos: WorldPoint::from(state.pos) });
    }
    Ok(FlightPath { dt: 1.0 / fps, samples })
}

/// Minimize the shot objective subject to the physical constraints.
pub fn reconstruct_shot(
    camera: &CameraModel,
    shot: &ShotObservation,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    config.validate()?;
    if shot.track.visible_count() < 3 {
        return Err(Error::invalid("shot needs at least 3 visible frames"));
    }
    let sigma = effective_sigma(camera, config)?;
    let eval = ShotEvaluator::new(camera, shot, config.substeps, sigma, config.loss, config.t_max)?;
    let chord = shot.anchor_receive - shot.anchor_hit;
    let direction = (chord.norm() > 0.0).then(|| Unit::new_normalize(chord));
    let guess = initial_guess(shot)?;

    let opts = NelderMeadOptions {
        max_iterations: config.max_iterations,
        f_tolerance: config.tolerance,
        ..Default::default()
    };
    let steps = [0.2, 0.2, 0.2, 2.0, 2.0, 2.0, 0.05];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    struct Candidate {
        ic: InitialConditions,
        loss: LossBreakdown,
        converged: bool,
    }
    let mut best: Option<Candidate> = None;
    let mut iterations = 0usize;
    let mut evaluations = 0usize;

    // start from the chord guess, then the best anchor-to-anchor flights,
    // then random perturbations of the best seed
    let mut seeds: Vec<(f64, InitialConditions)> = anchor_flights(shot, config.substeps)
        .into_iter()
        .filter_map(|ic| eval.loss(&ic).ok().filter(|l| l.total.is_finite()).map(|l| (l.total, ic)))
        .collect();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let guess_loss = eval.loss(&guess).map_or(f64::INFINITY, |l| l.total);
    let centre = match seeds.first() {
        Some(&(l, ic)) if l < guess_loss => ic,
        _ => guess,
    };
    let mut seeds = seeds.into_iter().map(|(_, ic)| ic);

    for start_idx in 0..config.multistart_count {
        let start = match start_idx {
            0 => guess,
            _ => seeds.next().unwrap_or_else(|| perturbed_start(&centre, shot.hitter, &mut rng)),
        };
        let mut theta = encode(&start);
        let mut converged = false;
        let mut weight = config.penalty_initial;
        for _ in 0..config.penalty_rounds {
            let objective = |t: &[f64; 7]| {
                let (ic, outside) = decode(t, shot.hitter);
                match eval.loss(&ic) {
                    Ok(l) => l.total + weight * (outside + constraint_violation(&ic, &direction)),
                    Err(_) => f64::INFINITY,
                }
            };
            let m = nelder_mead(objective, theta, steps, &opts);
            iterations += m.iterations;
            evaluations += m.evaluations;
            theta = m.x;
            converged = m.converged;
            let (ic, _) = decode(&theta, shot.hitter);
            if constraint_violation(&ic, &direction) == 0.0 {
                break;
            }
            weight *= config.penalty_growth;
        }
        // least-squares polish of the simplex result at the final penalty weight
        let bounds = param_bounds(shot.hitter);
        let residuals = |t: &[f64; 7]| {
            let (ic, _) = decode(t, shot.hitter);
            let mut r = eval.residuals(&ic).ok()?;
            let over_speed = (ic.v0.norm() - MAX_SPEED).max(0.0);
            let backwards = direction.map_or(0.0, |d| (-ic.v0.dot(&d)).max(0.0));
            r.extend([weight.sqrt() * over_speed, weight.sqrt() * backwards]);
            Some(r)
        };
        let polished =
            levenberg_marquardt(residuals, theta, bounds.map(|b| b.0), bounds.map(|b| b.1), &LmOptions::default());
        evaluations += polished.evaluations;
        if polished.f.is_finite() {
            theta = polished.x;
        }
        let (ic, _) = decode(&theta, shot.hitter);
        let ic = project_feasible(&ic, &direction);
        if let Ok(loss) = eval.loss(&ic) {
            if loss.total.is_finite() && best.as_ref().is_none_or(|b| loss.total < b.loss.total) {
                best = Some(Candidate { ic, loss, converged });
            }
        }
    }

    let frames = shot.receive_frame - shot.hit_frame;
    match best {
        Some(c) => {
            let path = frame_path(&c.ic, frames, shot.fps(), config.substeps)?;
            let z_r = path.samples.last().map_or(0.0, |s| s.pos.z);
            Ok(ReconstructionResult {
                feasible: check_feasibility(&c.ic, shot).all(),
                final_height_ok: (0.0..=MAX_START_HEIGHT).contains(&z_r),
                ic: c.ic,
                loss_total: c.loss.total,
                loss_reprojection: c.loss.reprojection,
                components: c.loss,
                path,
                converged: c.converged,
                iterations,
                evaluations,
            })
        }
        None => {
            // every start diverged; report the guess so callers still get a path
            let path = frame_path(&guess, frames, shot.fps(), config.substeps)?;
            let nan = f64::NAN;
            Ok(ReconstructionResult {
                feasible: check_feasibility(&guess, shot).all(),
                final_height_ok: false,
                ic: guess,
                loss_total: nan,
                loss_reprojection: nan,
                components: LossBreakdown {
                    total: nan,
                    reprojection: nan,
                    sigma,
                    hit_anchor: nan,
                    receive_anchor: nan,
                    out_of_court: nan,
                    landing: None,
                },
                path,
                converged: false,
                iterations,
                evaluations,
            })
        }
    }
}

/// A shot that could not be assembled from the rally annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotIssue {
    pub hit_frame: usize,
    pub receive_frame: usize,
    pub hitter: Player,
    pub reason: String,
}

/// Split a rally into shots between consecutive hits.
///
/// The last hit yields a shot only when `rally_end` is given. Anchors come
/// from the resolved player positions at the hit and receive frames.
pub fn shots_from_hits(
    hits: &[Hit],
    track: &ShuttleTrack,
    anchors: &PlayerAnchors,
    anchor_height: f64,
    rally_end: Option<usize>,
) -> Vec<Result<ShotObservation, ShotIssue>> {
    let mut spans: Vec<(usize, usize, Player)> =
        hits.windows(2).map(|w| (w[0].frame, w[1].frame, w[0].player)).collect();
    if let (Some(last), Some(end)) = (hits.last(), rally_end) {
        if end > last.frame {
            spans.push((last.frame, end, last.player));
        }
    }
    spans
        .into_iter()
        .map(|(hit_frame, receive_frame, hitter)| {
            let issue = |reason: String| ShotIssue { hit_frame, receive_frame, hitter, reason };
            let receiver = hitter.opponent();
            let at_hit = anchors
                .resolved(hitter, hit_frame)
                .ok_or_else(|| issue(format!("no {} player position at frame {hit_frame}", hitter.as_str())))?;
            let at_receive = anchors
                .resolved(receiver, receive_frame)
                .ok_or_else(|| issue(format!("no {} player position at frame {receive_frame}", receiver.as_str())))?;
            let (lo, hi) = hitter.half_y_range();
            let mut x_h = anchor_3d(at_hit, anchor_height);
            x_h.y = x_h.y.clamp(lo, hi);
            let x_r = anchor_3d(at_receive, anchor_height);
            ShotObservation::new(track, hit_frame, receive_frame, hitter, x_h, x_r).map_err(|e| issue(e.to_string()))
        })
        .collect()
}
