//! Synthetic trajectory benchmark.
//!
//! Start positions are drawn cell by cell over one quarter of the court
//! (the near-left half of the near side), launched toward the far half and
//! kept only when they clear the net and land in the opposite half. Each
//! accepted flight is filmed by one of a few broadcast-style cameras. Batch
//! reconstruction and the error reports live here too.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, ImagePoint, Player, WorldPoint, COURT_LENGTH, COURT_WIDTH, NET_Y};
use crate::io;
use crate::physics::{
    crosses_net_validly, extend_to_ground, integrate, FlightPath, InitialConditions, DEFAULT_NET_HEIGHT,
};
use crate::reconstruction::{
    frame_path, reconstruct_shot, ReconstructionConfig, ReconstructionResult, ShotObservation, ShuttleTrack,
    TrackEntry, MAX_SPEED,
};

/// A camera with its image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchCamera {
    #[serde(rename = "P")]
    pub p: [[f64; 4]; 3],
    pub width: u32,
    pub height: u32,
}

impl BenchCamera {
    pub fn model(&self) -> Result<CameraModel> {
        CameraModel::from_rows(self.p)
    }

    /// Pixel position if the point is in front of the camera and inside the frame.
    fn observe(&self, cam: &CameraModel, p: &WorldPoint) -> Option<ImagePoint> {
        if cam.depth(p) <= 0.0 {
            return None;
        }
        let q = cam.project(p).ok()?;
        let inside = q.x >= 0.0 && q.y >= 0.0 && q.x < self.width as f64 && q.y < self.height as f64;
        inside.then_some(q)
    }
}

/// Three elevated views from behind the near baseline at 1280x720.
pub fn broadcast_cameras() -> Vec<BenchCamera> {
    let views = [
        (WorldPoint::new(3.05, -7.5, 6.5), WorldPoint::new(3.05, 6.0, 0.0), 1000.0, 0.0),
        (WorldPoint::new(2.2, -8.5, 7.5), WorldPoint::new(3.1, 6.2, 0.0), 1080.0, 0.01),
        (WorldPoint::new(4.0, -6.5, 5.5), WorldPoint::new(3.0, 5.8, 0.0), 930.0, -0.01),
    ];
    views
        .iter()
        .map(|&(eye, target, focal, roll)| {
            let cam = CameraModel::look_at(eye, target, focal, (640.0, 360.0), roll).expect("fixed views are valid");
            BenchCamera { p: cam.rows(), width: 1280, height: 720 }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Cell size along x, y and z in metres.
    pub cell_size: [f64; 3],
    /// Extent of the sampled quarter court along x, y and z.
    pub extent: [f64; 3],
    /// Launch speed range in m/s.
    pub speed_range: (f64, f64),
    /// Launch elevation range in degrees.
    pub elevation_range_deg: (f64, f64),
    pub drag_range: (f64, f64),
    /// Draws per cell before the cell is given up.
    pub max_retries: usize,
    pub fps: f64,
    /// Integration steps per frame.
    pub substeps: usize,
    pub net_height: f64,
    /// Shortest accepted flight in frames.
    pub min_frames: usize,
    /// Fewest visible track frames for an accepted shot.
    pub min_visible: usize,
    /// Standard deviation of Gaussian pixel noise added to visible track points.
    pub track_noise_px: f64,
    /// Uniform horizontal noise on the stored noisy anchors.
    pub anchor_noise: f64,
    /// Mirror every quarter-court shot into the other three quarters.
    pub symmetric: bool,
    pub cameras: Vec<BenchCamera>,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            cell_size: [0.1, 0.2, 0.2],
            extent: [COURT_WIDTH / 2.0, NET_Y, 2.5],
            speed_range: (2.0, MAX_SPEED),
            elevation_range_deg: (-60.0, 80.0),
            drag_range: (0.05, 1.0),
            max_retries: 200,
            fps: 30.0,
            substeps: 4,
            net_height: DEFAULT_NET_HEIGHT,
            min_frames: 4,
            min_visible: 3,
            track_noise_px: 0.0,
            anchor_noise: 0.5,
            symmetric: false,
            cameras: broadcast_cameras(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.cell_size.iter().chain(&self.extent).all(|&v| positive(v)) {
            return Err(Error::invalid("cell sizes and extents must be positive"));
        }
        if !(self.speed_range.0 >= 0.0 && self.speed_range.0 <= self.speed_range.1 && self.speed_range.1 <= MAX_SPEED) {
            return Err(Error::invalid(format!("speed range must lie in [0, {MAX_SPEED}]")));
        }
        let (e0, e1) = self.elevation_range_deg;
        if !(-90.0..=90.0).contains(&e0) || !(e0..=90.0).contains(&e1) {
            return Err(Error::invalid("elevation range must be ordered within [-90, 90]"));
        }
        if !(self.drag_range.0 >= 0.0 && self.drag_range.0 <= self.drag_range.1) {
            return Err(Error::invalid("drag range must be ordered and non-negative"));
        }
        if !positive(self.fps) || self.substeps == 0 || self.max_retries == 0 || self.cameras.is_empty() {
            return Err(Error::invalid("fps, substeps, retries and cameras must be positive"));
        }
        if !(self.track_noise_px >= 0.0 && self.anchor_noise >= 0.0 && self.net_height >= 0.0) {
            return Err(Error::invalid("noise levels and net height must be non-negative"));
        }
        for c in &self.cameras {
            c.model()?;
        }
        Ok(())
    }

    fn cell_counts(&self) -> [usize; 3] {
        std::array::from_fn(|k| (self.extent[k] / self.cell_size[k] - 1e-9).ceil().max(1.0) as usize)
    }

    /// Number of grid cells (draws before rejection).
    pub fn cell_count(&self) -> usize {
        self.cell_counts().iter().product()
    }
}

/// Start and receive anchors of a shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub hit: WorldPoint,
    pub receive: WorldPoint,
}

/// Position of a shot inside a rally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RallyPosition {
    pub rally: usize,
    pub index: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShot {
    pub id: usize,
    pub cell: [usize; 3],
    pub camera_id: usize,
    pub hitter: Player,
    pub ic_true: InitialConditions,
    /// Frame-rate samples from the hit (frame 0) to the receive frame.
    pub path_true: FlightPath,
    pub track: ShuttleTrack,
    pub receive_frame: usize,
    pub anchors_true: AnchorPair,
    pub anchors_noisy: AnchorPair,
    /// Time from the hit to ground impact in seconds.
    pub flight_time: f64,
    pub landing: WorldPoint,
    pub rally: Option<RallyPosition>,
}

impl SyntheticShot {
    /// Reconstruction input using the noisy (or true) anchors. The hit anchor
    /// is kept on the hitter's half.
    pub fn observation(&self, noisy: bool) -> Result<ShotObservation> {
        let a = if noisy { self.anchors_noisy } else { self.anchors_true };
        let (lo, hi) = self.hitter.half_y_range();
        let mut hit = a.hit;
        hit.y = hit.y.clamp(lo, hi);
        ShotObservation::new(&self.track, 0, self.receive_frame, self.hitter, hit, a.receive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub shots: Vec<SyntheticShot>,
    /// Cells that exhausted their retries.
    pub empty_cells: Vec<[usize; 3]>,
}

fn cell_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulated flight accepted by the rejection rules.
struct Flight {
    ic: InitialConditions,
    path: FlightPath,
    receive_frame: usize,
    flight_time: f64,
    landing: WorldPoint,
}

fn simulate(ic: InitialConditions, cfg: &DatasetConfig, toward: Player) -> Option<Flight> {
    let dt = 1.0 / (cfg.fps * cfg.substeps as f64);
    let landing = extend_to_ground(&ic, dt, 20.0).ok()?;
    let (lo, hi) = toward.half_y_range();
    if landing.out_distance > 0.0 || !(lo..=hi).contains(&landing.point.y) {
        return None;
    }
    let fine = integrate(&ic, landing.time, dt).ok()?;
    if !crosses_net_validly(&fine, cfg.net_height) {
        return None;
    }
    let receive_frame = (landing.time * cfg.fps).floor() as usize;
    if receive_frame < cfg.min_frames.max(1) {
        return None;
    }
    let path = frame_path(&ic, receive_frame, cfg.fps, cfg.substeps).ok()?;
    // the launch must point toward where the shuttle is received, as the
    // reconstruction assumes
    if ic.v0.dot(&(path.samples[receive_frame].pos - ic.x0)) < 0.0 {
        return None;
    }
    Some(Flight { ic, path, receive_frame, flight_time: landing.time, landing: landing.point })
}

/// Uniform draw of a launch from a cell toward the far half.
fn draw_launch(rng: &mut ChaCha8Rng, cfg: &DatasetConfig, cell: [usize; 3]) -> InitialConditions {
    let x0: [f64; 3] = std::array::from_fn(|k| {
        let lo = cell[k] as f64 * cfg.cell_size[k];
        let hi = (lo + cfg.cell_size[k]).min(cfg.extent[k]);
        rng.gen_range(lo..=hi)
    });
    let speed = rng.gen_range(cfg.speed_range.0..=cfg.speed_range.1);
    // area-uniform over the allowed elevation band and the forward hemisphere
    let (e0, e1) = (cfg.elevation_range_deg.0.to_radians(), cfg.elevation_range_deg.1.to_radians());
    let sin_el: f64 = rng.gen_range(e0.sin()..=e1.sin());
    let azimuth = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
    let cos_el = (1.0 - sin_el * sin_el).max(0.0).sqrt();
    let dir = Vector3::new(cos_el * azimuth.sin(), cos_el * azimuth.cos(), sin_el);
    let cd = rng.gen_range(cfg.drag_range.0..=cfg.drag_range.1);
    InitialConditions { x0: WorldPoint::new(x0[0], x0[1], x0[2]), v0: dir * speed, cd }
}

/// Mirror a flight across `x = width/2` and/or `y = net`.
fn mirror(f: &Flight, flip_x: bool, flip_y: bool) -> Flight {
    let m = |p: WorldPoint| {
        WorldPoint::new(
            if flip_x { COURT_WIDTH - p.x } else { p.x },
            if flip_y { COURT_LENGTH - p.y } else { p.y },
            p.z,
        )
    };
    let v = Vector3::new(
        if flip_x { -f.ic.v0.x } else { f.ic.v0.x },
        if flip_y { -f.ic.v0.y } else { f.ic.v0.y },
        f.ic.v0.z,
    );
    let mut path = f.path.clone();
    for s in &mut path.samples {
        s.pos = m(s.pos);
    }
    Flight {
        ic: InitialConditions { x0: m(f.ic.x0), v0: v, cd: f.ic.cd },
        path,
        receive_frame: f.receive_frame,
        flight_time: f.flight_time,
        landing: m(f.landing),
    }
}

/// Project the frames before the receive frame; off-screen frames are invisible.
fn film(
    path: &FlightPath,
    receive_frame: usize,
    fps: f64,
    cam: &BenchCamera,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ShuttleTrack> {
    let model = cam.model()?;
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid(e.to_string()))?;
    let entries = path.samples[..receive_frame]
        .iter()
        .enumerate()
        .map(|(frame, s)| match cam.observe(&model, &s.pos) {
            Some(q) => {
                let (du, dv) = if noise > 0.0 { (normal.sample(rng), normal.sample(rng)) } else { (0.0, 0.0) };
                TrackEntry { frame, u: q.x + du, v: q.y + dv, visible: true }
            }
            None => TrackEntry { frame, u: 0.0, v: 0.0, visible: false },
        })
        .collect();
    ShuttleTrack::new(fps, entries)
}

/// Perturb the horizontal components of both anchors by `U(-magnitude, magnitude)`.
pub fn add_anchor_noise(shot: &SyntheticShot, magnitude: f64, seed: u64) -> Result<SyntheticShot> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::invalid(format!("anchor noise must be non-negative, got {magnitude}")));
    }
    let mut rng = cell_rng(seed, shot.id as u64);
    let mut out = shot.clone();
    out.anchors_noisy = perturb(&shot.anchors_true, magnitude, &mut rng);
    Ok(out)
}

fn perturb(a: &AnchorPair, magnitude: f64, rng: &mut ChaCha8Rng) -> AnchorPair {
    let mut jitter = |p: WorldPoint| {
        if magnitude == 0.0 {
            return p;
        }
        WorldPoint::new(p.x + rng.gen_range(-magnitude..=magnitude), p.y + rng.gen_range(-magnitude..=magnitude), p.z)
    };
    AnchorPair { hit: jitter(a.hit), receive: jitter(a.receive) }
}

/// Simulate, reject and film one shot per grid cell.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let [nx, ny, nz] = cfg.cell_counts();
    let cells: Vec<[usize; 3]> =
        (0..nx).flat_map(|i| (0..ny).flat_map(move |j| (0..nz).map(move |k| [i, j, k]))).collect();

    let per_cell: Vec<Result<Option<Vec<SyntheticShot>>>> = cells
        .par_iter()
        .enumerate()
        .map(|(index, &cell)| {
            let mut rng = cell_rng(cfg.seed, index as u64);
            let mut accepted = None;
            for _ in 0..cfg.max_retries {
                let ic = draw_launch(&mut rng, cfg, cell);
                if let Some(f) = simulate(ic, cfg, Player::Far) {
                    accepted = Some(f);
                    break;
                }
            }
            let Some(flight) = accepted else { return Ok(None) };
            let variants: Vec<(Flight, Player)> = if cfg.symmetric {
                vec![
                    (mirror(&flight, false, false), Player::Near),
                    (mirror(&flight, true, false), Player::Near),
                    (mirror(&flight, false, true), Player::Far),
                    (mirror(&flight, true, true), Player::Far),
                ]
            } else {
                vec![(flight, Player::Near)]
            };
            let mut shots = Vec::new();
            for (v, (f, hitter)) in variants.into_iter().enumerate() {
                let slot = index * 4 + v;
                let camera_id = slot % cfg.cameras.len();
                let track =
                    film(&f.path, f.receive_frame, cfg.fps, &cfg.cameras[camera_id], cfg.track_noise_px, &mut rng)?;
                if track.visible_count() < cfg.min_visible {
                    continue;
                }
                let truth = AnchorPair { hit: f.ic.x0, receive: f.path.samples[f.receive_frame].pos };
                let noisy = perturb(&truth, cfg.anchor_noise, &mut rng);
                shots.push(SyntheticShot {
                    id: 0,
                    cell,
                    camera_id,
                    hitter,
                    ic_true: f.ic,
                    path_true: f.path,
                    track,
                    receive_frame: f.receive_frame,
                    anchors_true: truth,
                    anchors_noisy: noisy,
                    flight_time: f.flight_time,
                    landing: f.landing,
                    rally: None,
                });
            }
            Ok(if shots.is_empty() { None } else { Some(shots) })
        })
        .collect();

    let mut shots = Vec::new();
    let mut empty_cells = Vec::new();
    for (cell, r) in cells.iter().zip(per_cell) {
        match r? {
            Some(s) => shots.extend(s),
            None => empty_cells.push(*cell),
        }
    }
    for (id, s) in shots.iter_mut().enumerate() {
        s.id = id;
    }
    Ok(Dataset { config: cfg.clone(), shots, empty_cells })
}

fn check_aligned(a: &FlightPath, b: &FlightPath) -> Result<()> {
    if a.samples.len() != b.samples.len() || a.samples.iter().zip(&b.samples).any(|(p, q)| (p.t - q.t).abs() > 1e-9) {
        return Err(Error::invalid("paths are not sampled at the same times"));
    }
    if a.samples.is_empty() {
        return Err(Error::invalid("paths are empty"));
    }
    Ok(())
}

/// Mean 3D distance between corresponding samples, in centimetres.
pub fn reconstruction_error(truth: &FlightPath, recon: &FlightPath) -> Result<f64> {
    check_aligned(truth, recon)?;
    let sum: f64 = truth.samples.iter().zip(&recon.samples).map(|(a, b)| (a.pos - b.pos).norm()).sum();
    Ok(100.0 * sum / truth.samples.len() as f64)
}

/// Mean pixel distance between the projections of corresponding samples.
pub fn reprojection_error_px(camera: &CameraModel, truth: &FlightPath, recon: &FlightPath) -> Result<f64> {
    check_aligned(truth, recon)?;
    let mut sum = 0.0;
    for (a, b) in truth.samples.iter().zip(&recon.samples) {
        sum += (camera.project(&a.pos)? - camera.project(&b.pos)?).norm();
    }
    Ok(sum / truth.samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Front,
    Middle,
    Back,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Zone {
    pub side: Player,
    pub band: Band,
}

impl Zone {
    /// All six zones, near side first, each from the net outward.
    pub const ALL: [Zone; 6] = [
        Zone { side: Player::Near, band: Band::Front },
        Zone { side: Player::Near, band: Band::Middle },
        Zone { side: Player::Near, band: Band::Back },
        Zone { side: Player::Far, band: Band::Front },
        Zone { side: Player::Far, band: Band::Middle },
        Zone { side: Player::Far, band: Band::Back },
    ];

    pub fn index(&self) -> usize {
        Zone::ALL.iter().position(|z| z == self).expect("every zone is listed")
    }

    pub fn label(&self) -> String {
        let band = match self.band {
            Band::Front => "front",
            Band::Middle => "middle",
            Band::Back => "back",
        };
        format!("{}-{band}", self.side.as_str())
    }
}

/// Court half and third by distance to the net; ties go toward the net.
pub fn zone_of(p: &WorldPoint) -> Result<Zone> {
    if !(0.0..=COURT_LENGTH).contains(&p.y) {
        return Err(Error::invalid(format!("y = {} lies outside the court length", p.y)));
    }
    let side = if p.y <= NET_Y { Player::Near } else { Player::Far };
    let d = (NET_Y - p.y).abs();
    let third = NET_Y / 3.0;
    let band = if d <= third {
        Band::Front
    } else if d <= 2.0 * third {
        Band::Middle
    } else {
        Band::Back
    };
    Ok(Zone { side, band })
}

/// Reconstruction of one synthetic shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotOutcome {
    pub id: usize,
    pub result: Option<ReconstructionResult>,
    pub error: Option<String>,
}

/// Which anchors the reconstruction sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnchorSource {
    True,
    Stored,
    /// Fresh uniform noise of this magnitude around the true anchors.
    Noise(f64),
}

/// Per-shot seed derived from the run seed and shot id.
fn shot_seed(seed: u64, id: usize) -> u64 {
    seed ^ (id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Reconstruct every shot in parallel; outputs are in dataset order.
pub fn reconstruct_dataset(
    dataset: &Dataset,
    config: &ReconstructionConfig,
    anchors: AnchorSource,
) -> Result<Vec<ShotOutcome>> {
    config.validate()?;
    let cameras: Vec<CameraModel> = dataset.config.cameras.iter().map(|c| c.model()).collect::<Result<_>>()?;
    Ok(dataset
        .shots
        .par_iter()
        .map(|shot| {
            let run = || -> Result<ReconstructionResult> {
                let obs = match anchors {
                    AnchorSource::True => shot.observation(false)?,
                    AnchorSource::Stored => shot.observation(true)?,
                    AnchorSource::Noise(m) => add_anchor_noise(shot, m, config.seed)?.observation(true)?,
                };
                let cfg = ReconstructionConfig { seed: shot_seed(config.seed, shot.id), ..*config };
                reconstruct_shot(&cameras[shot.camera_id], &obs, &cfg)
            };
            match run() {
                Ok(r) => ShotOutcome { id: shot.id, result: Some(r), error: None },
                Err(e) => ShotOutcome { id: shot.id, result: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub flight_bin_width: f64,
    /// Skip the first and last shot of each rally when rally positions are known.
    pub exclude_rally_ends: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { flight_bin_width: 0.25, exclude_rally_ends: true }
    }
}

/// Count, mean and standard deviation of both error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean_cm: f64,
    pub std_cm: f64,
    pub mean_px: f64,
    pub std_px: f64,
}

impl ErrorStats {
    fn from_samples(s: &[(f64, f64)]) -> Self {
        if s.is_empty() {
            return ErrorStats::default();
        }
        let n = s.len() as f64;
        let mean = |f: fn(&(f64, f64)) -> f64| s.iter().map(f).sum::<f64>() / n;
        let (mc, mp) = (mean(|e| e.0), mean(|e| e.1));
        let sd = |f: fn(&(f64, f64)) -> f64, m: f64| (s.iter().map(|e| (f(e) - m).powi(2)).sum::<f64>() / n).sqrt();
        ErrorStats { count: s.len(), mean_cm: mc, std_cm: sd(|e| e.0, mc), mean_px: mp, std_px: sd(|e| e.1, mp) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneCell {
    pub start: Zone,
    pub end: Zone,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightBin {
    pub lo: f64,
    pub hi: f64,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: ErrorStats,
    /// Every (start zone, end zone) pair, row-major over [`Zone::ALL`].
    pub zones: Vec<ZoneCell>,
    /// Statistics by start zone.
    pub start_zones: Vec<(Zone, ErrorStats)>,
    pub flight_bins: Vec<FlightBin>,
    pub failed: usize,
    pub excluded: usize,
}

/// Per-shot errors of a reconstruction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotError {
    pub id: usize,
    pub start: Zone,
    pub end: Zone,
    pub flight_time: f64,
    pub error_cm: f64,
    pub error_px: f64,
}

/// Errors of every successfully reconstructed shot. Failed shots are counted separately.
pub fn shot_errors(
    dataset: &Dataset,
    outcomes: &[ShotOutcome],
    cfg: &EvalConfig,
) -> Result<(Vec<ShotError>, usize, usize)> {
    if outcomes.len() != dataset.shots.len() || outcomes.iter().zip(&dataset.shots).any(|(o, s)| o.id != s.id) {
        return Err(Error::invalid("results are not aligned with the dataset"));
    }
    let cameras: Vec<CameraModel> = dataset.config.cameras.iter().map(|c| c.model()).collect::<Result<_>>()?;
    let (mut failed, mut excluded) = (0, 0);
    let mut out = Vec::new();
    for (shot, o) in dataset.shots.iter().zip(outcomes) {
        if cfg.exclude_rally_ends {
            if let Some(r) = shot.rally {
                if r.index == 0 || r.index + 1 == r.len {
                    excluded += 1;
                    continue;
                }
            }
        }
        let Some(res) = o.result.as_ref().filter(|r| r.loss_total.is_finite()) else {
            failed += 1;
            continue;
        };
        out.push(ShotError {
            id: shot.id,
            start: zone_of(&shot.path_true.samples[0].pos)?,
            end: zone_of(&shot.landing)?,
            flight_time: shot.flight_time,
            error_cm: reconstruction_error(&shot.path_true, &res.path)?,
            error_px: reprojection_error_px(&cameras[shot.camera_id], &shot.path_true, &res.path)?,
        });
    }
    Ok((out, failed, excluded))
}

/// Aggregate errors by zone pair, start zone and flight time.
pub fn evaluate(dataset: &Dataset, outcomes: &[ShotOutcome], cfg: &EvalConfig) -> Result<EvalReport> {
    if !(cfg.flight_bin_width > 0.0 && cfg.flight_bin_width.is_finite()) {
        return Err(Error::invalid("flight-time bin width must be positive"));
    }
    let (errors, failed, excluded) = shot_errors(dataset, outcomes, cfg)?;
    let pick = |f: &dyn Fn(&ShotError) -> bool| -> Vec<(f64, f64)> {
        errors.iter().filter(|e| f(e)).map(|e| (e.error_cm, e.error_px)).collect()
    };
    let zones = Zone::ALL
        .iter()
        .flat_map(|&start| Zone::ALL.iter().map(move |&end| (start, end)))
        .map(|(start, end)| ZoneCell {
            start,
            end,
            stats: ErrorStats::from_samples(&pick(&|e| e.start == start && e.end == end)),
        })
        .collect();
    let start_zones = Zone::ALL.iter().map(|&z| (z, ErrorStats::from_samples(&pick(&|e| e.start == z)))).collect();
    let w = cfg.flight_bin_width;
    let bins = errors.iter().map(|e| (e.flight_time / w).floor() as usize + 1).max().unwrap_or(0);
    let flight_bins = (0..bins)
        .map(|b| {
            let (lo, hi) = (b as f64 * w, (b + 1) as f64 * w);
            FlightBin {
                lo,
                hi,
                stats: ErrorStats::from_samples(&pick(&|e| ((e.flight_time / w).floor() as usize) == b)),
            }
        })
        .collect();
    Ok(EvalReport {
        overall: ErrorStats::from_samples(&pick(&|_| true)),
        zones,
        start_zones,
        flight_bins,
        failed,
        excluded,
    })
}

fn fmt_cell(stats: &ErrorStats, value: f64) -> String {
    if stats.count == 0 {
        String::new()
    } else {
        format!("{value:.4}")
    }
}

/// Write `zone_report.csv` (mean cm), `zone_report_px.csv`, `zone_counts.csv`,
/// `flight_time.csv` and `report.json` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let header = std::iter::once("start\\end".to_string())
        .chain(Zone::ALL.iter().map(Zone::label))
        .collect::<Vec<_>>()
        .join(",");
    let matrix = |f: &dyn Fn(&ErrorStats) -> String| {
        let mut s = header.clone() + "\n";
        for (r, start) in Zone::ALL.iter().enumerate() {
            let row: Vec<String> = (0..6).map(|c| f(&report.zones[r * 6 + c].stats)).collect();
            s += &format!("{},{}\n", start.label(), row.join(","));
        }
        s
    };
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|source| Error::Io { path: p, source })
    };
    write("zone_report.csv", matrix(&|s| fmt_cell(s, s.mean_cm)))?;
    write("zone_report_px.csv", matrix(&|s| fmt_cell(s, s.mean_px)))?;
    write("zone_counts.csv", matrix(&|s| s.count.to_string()))?;
    let mut ft = String::from("lo,hi,count,mean_cm,std_cm,mean_px\n");
    for b in &report.flight_bins {
        ft += &format!(
            "{},{},{},{},{},{}\n",
            b.lo,
            b.hi,
            b.stats.count,
            fmt_cell(&b.stats, b.stats.mean_cm),
            fmt_cell(&b.stats, b.stats.std_cm),
            fmt_cell(&b.stats, b.stats.mean_px)
        );
    }
    write("flight_time.csv", ft)?;
    io::write_json(&dir.join("report.json"), report)
}

/// One manifest line; the track and true path live in side files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    id: usize,
    cell: [usize; 3],
    camera_id: usize,
    hitter: Player,
    ic: InitialConditions,
    receive_frame: usize,
    anchors_true: AnchorPair,
    anchors_noisy: AnchorPair,
    flight_time: f64,
    landing: WorldPoint,
    rally: Option<RallyPosition>,
    track_file: String,
    path_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    config: DatasetConfig,
    shots: usize,
    empty_cells: Vec<[usize; 3]>,
}

/// Write `dataset.json`, `manifest.jsonl`, `tracks/` and `paths/` into `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    let meta = DatasetMeta { config: ds.config.clone(), shots: ds.shots.len(), empty_cells: ds.empty_cells.clone() };
    io::write_json(&dir.join("dataset.json"), &meta)?;
    let lines: Vec<String> = ds
        .shots
        .par_iter()
        .map(|s| {
            let track_file = format!("tracks/{:06}.csv", s.id);
            let path_file = format!("paths/{:06}.csv", s.id);
            io::write_track(&dir.join(&track_file), &s.track)?;
            io::write_trajectory(&dir.join(&path_file), &s.path_true)?;
            let e = ManifestEntry {
                id: s.id,
                cell: s.cell,
                camera_id: s.camera_id,
                hitter: s.hitter,
                ic: s.ic_true,
                receive_frame: s.receive_frame,
                anchors_true: s.anchors_true,
                anchors_noisy: s.anchors_noisy,
                flight_time: s.flight_time,
                landing: s.landing,
                rally: s.rally,
                track_file,
                path_file,
            };
            Ok(serde_json::to_string(&e)?)
        })
        .collect::<Result<_>>()?;
    let p = dir.join("manifest.jsonl");
    std::fs::write(&p, lines.join("\n") + "\n").map_err(|source| Error::Io { path: p, source })
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = io::read_json(&dir.join("dataset.json"))?;
    let p = dir.join("manifest.jsonl");
    let text = std::fs::read_to_string(&p).map_err(|source| Error::Io { path: p.clone(), source })?;
    let mut shots = Vec::with_capacity(meta.shots);
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: ManifestEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
            path: p.clone(),
            line: i as u64 + 1,
            msg: err.to_string(),
        })?;
        let track = io::read_track(&dir.join(&e.track_file), meta.config.fps)?;
        let path_true = io::read_trajectory(&dir.join(&e.path_file))?;
        shots.push(SyntheticShot {
            id: e.id,
            cell: e.cell,
            camera_id: e.camera_id,
            hitter: e.hitter,
            ic_true: e.ic,
            path_true,
            track,
            receive_frame: e.receive_frame,
            anchors_true: e.anchors_true,
            anchors_noisy: e.anchors_noisy,
            flight_time: e.flight_time,
            landing: e.landing,
            rally: e.rally,
        });
    }
    if shots.len() != meta.shots {
        return Err(Error::invalid(format!("manifest lists {} shots, metadata says {}", shots.len(), meta.shots)));
    }
    if shots.iter().any(|s| s.camera_id >= meta.config.cameras.len()) {
        return Err(Error::invalid("manifest refers to an unknown camera"));
    }
    Ok(Dataset { config: meta.config, shots, empty_cells: meta.empty_cells })
}

/// Write one JSON line per outcome.
pub fn write_outcomes(path: &Path, outcomes: &[ShotOutcome]) -> Result<()> {
    let mut text = String::new();
    for o in outcomes {
        text += &serde_json::to_string(o)?;
        text.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_outcomes(path: &Path) -> Result<Vec<ShotOutcome>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig { cell_size: [1.0, 2.0, 1.0], ..Default::default() }
    }

    #[test]
    fn default_grid_size() {
        let cfg = DatasetConfig::default();
        assert_eq!(cfg.cell_counts(), [31, 34, 13]);
        assert_eq!(cfg.cell_count(), 13_702);
    }

    #[test]
    fn cameras_see_the_whole_court() {
        let court = crate::geometry::CourtModel::standard(1.55).unwrap();
        for c in broadcast_cameras() {
            let m = c.model().unwrap();
            for p in court.reference_points() {
                assert!(c.observe(&m, &p).is_some(), "{p:?}");
            }
        }
    }

    #[test]
    fn accepted_shots_obey_the_rejection_rules() {
        let ds = generate_dataset(&small()).unwrap();
        assert!(!ds.shots.is_empty());
        for s in &ds.shots {
            assert_eq!(crate::physics::out_of_court_distance(&s.landing), 0.0);
            assert!(s.landing.y >= NET_Y);
            let fine = integrate(&s.ic_true, s.flight_time, 1.0 / 120.0).unwrap();
            assert!(crosses_net_validly(&fine, DEFAULT_NET_HEIGHT));
            assert_eq!(s.path_true.samples.len(), s.receive_frame + 1);
            assert!(s.ic_true.v0.norm() <= MAX_SPEED);
            assert!(s.observation(true).is_ok());
        }
        assert_eq!(ds.shots.len() + ds.empty_cells.len(), small().cell_count());
    }

    #[test]
    fn generation_is_deterministic_and_thread_independent() {
        let a = generate_dataset(&small()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| generate_dataset(&small()).unwrap());
        assert_eq!(a, b);
        let c = generate_dataset(&DatasetConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.shots, c.shots);
    }

    #[test]
    fn symmetric_generation_fills_all_quarters() {
        let ds = generate_dataset(&DatasetConfig { symmetric: true, ..small() }).unwrap();
        assert!(ds.shots.iter().any(|s| s.hitter == Player::Far && s.landing.y <= NET_Y));
        for s in &ds.shots {
            let (lo, hi) = s.hitter.opponent().half_y_range();
            assert!((lo..=hi).contains(&s.landing.y));
        }
    }

    #[test]
    fn anchor_noise_bounds() {
        let ds = generate_dataset(&small()).unwrap();
        let s = &ds.shots[0];
        assert_eq!(add_anchor_noise(s, 0.0, 3).unwrap().anchors_noisy, s.anchors_true);
        let n = add_anchor_noise(s, 0.5, 3).unwrap();
        for (a, b) in [(n.anchors_noisy.hit, s.anchors_true.hit), (n.anchors_noisy.receive, s.anchors_true.receive)] {
            assert!((a.x - b.x).abs() <= 0.5 && (a.y - b.y).abs() <= 0.5);
            assert_eq!(a.z, b.z);
        }
    }

    #[test]
    fn error_metrics() {
        let ic = InitialConditions::new(WorldPoint::new(1.0, 1.0, 1.0), Vector3::new(0.0, 10.0, 5.0), 0.2).unwrap();
        let p = frame_path(&ic, 20, 30.0, 4).unwrap();
        assert_eq!(reconstruction_error(&p, &p).unwrap(), 0.0);
        let mut q = p.clone();
        for s in &mut q.samples {
            s.pos.z += 0.01;
        }
        assert!((reconstruction_error(&p, &q).unwrap() - 1.0).abs() < 1e-9);
        let cam = broadcast_cameras()[0].model().unwrap();
        let e1 = reprojection_error_px(&cam, &p, &q).unwrap();
        let doubled =
            CameraModel::new(nalgebra::Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0)) * cam.matrix()).unwrap();
        let e2 = reprojection_error_px(&doubled, &p, &q).unwrap();
        assert!((e2 - 2.0 * e1).abs() < 1e-9 * e2);
        q.samples.pop();
        assert!(reconstruction_error(&p, &q).is_err());
    }

    #[test]
    fn zones() {
        let z = |y: f64| zone_of(&WorldPoint::new(1.0, y, 0.0)).unwrap();
        assert_eq!(z(5.0), Zone { side: Player::Near, band: Band::Front });
        assert_eq!(z(0.5), Zone { side: Player::Near, band: Band::Back });
        assert_eq!(z(6.7), Zone { side: Player::Near, band: Band::Front });
        assert_eq!(z(13.4), Zone { side: Player::Far, band: Band::Back });
        assert!(zone_of(&WorldPoint::new(1.0, -0.1, 0.0)).is_err());
    }

    #[test]
    fn dataset_files_round_trip() {
        let ds = generate_dataset(&DatasetConfig { track_noise_px: 1.0, ..small() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.shots.len(), ds.shots.len());
        for (a, b) in back.shots.iter().zip(&ds.shots) {
            assert_eq!(a.track.entries.len(), b.track.entries.len());
            for (x, y) in a.track.entries.iter().zip(&b.track.entries) {
                assert_eq!(x.visible, y.visible);
                if x.visible {
                    assert_eq!((x.u, x.v), (y.u, y.v));
                }
            }
            assert_eq!(a.path_true, b.path_true);
            assert_eq!(a.anchors_noisy, b.anchors_noisy);
        }
    }

    #[test]
    fn perfect_results_give_zero_report() {
        let ds = generate_dataset(&small()).unwrap();
        let outcomes: Vec<ShotOutcome> = ds
            .shots
            .iter()
            .map(|s| {
                let obs = s.observation(false).unwrap();
                let cfg = ReconstructionConfig::default();
                let loss = crate::reconstruction::total_loss(
                    &ds.config.cameras[s.camera_id].model().unwrap(),
                    &s.ic_true,
                    &obs,
                    &cfg,
                )
                .unwrap();
                let result = ReconstructionResult {
                    ic: s.ic_true,
                    loss_total: loss.total,
                    loss_reprojection: loss.reprojection,
                    components: loss,
                    path: s.path_true.clone(),
                    converged: true,
                    feasible: true,
                    final_height_ok: true,
                    iterations: 0,
                    evaluations: 0,
                };
                ShotOutcome { id: s.id, result: Some(result), error: None }
            })
            .collect();
        let report = evaluate(&ds, &outcomes, &EvalConfig::default()).unwrap();
        assert_eq!(report.overall.count, ds.shots.len());
        assert_eq!(report.overall.mean_cm, 0.0);
        assert_eq!(report.zones.iter().map(|z| z.stats.count).sum::<usize>(), ds.shots.len());
        assert_eq!(report.flight_bins.iter().map(|b| b.stats.count).sum::<usize>(), ds.shots.len());
        assert!(report.zones.iter().all(|z| z.stats.mean_cm == 0.0 && z.stats.mean_px == 0.0));
    }
}
