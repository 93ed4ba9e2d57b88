//! Command-line front end.
//!
//! Exit codes: 0 on success (including "no court found"), 2 for bad input or
//! usage, 3 for numerical or degeneracy failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::{self, AnchorSource, DatasetConfig, EvalConfig};
use crate::court_detection::{detect_court, render_court, DetectConfig, PartitionMethod};
use crate::error::{Error, Result};
use crate::geometry::{
    assign_players, calibrate_dlt, homography_from_corners, CourtModel, Player, PlayerAnchors, WorldPoint,
    DEFAULT_POLE_HEIGHT, DEFAULT_RELAXATION,
};
use crate::hit_segmentation::{naive_postprocess, optimize_hits};
use crate::io;
use crate::physics::{integrate, InitialConditions};
use crate::reconstruction::{reconstruct_shot, shots_from_hits, LossMode, ReconstructionConfig, ReconstructionResult};

#[derive(Debug, Parser)]
#[command(name = "shuttle3d", version, about = "Monocular 3D shuttlecock trajectory reconstruction")]
pub struct Cli {
    /// JSON file overriding default parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed for every seeded stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HitMethod {
    Dp,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Farin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Full,
    ReprojectionOnly,
}

impl From<LossArg> for LossMode {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Full => LossMode::Full,
            LossArg::ReprojectionOnly => LossMode::ReprojectionOnly,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a flight and write it as `t,x,y,z`.
    Simulate {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        x0: Vector3<f64>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        v0: Vector3<f64>,
        #[arg(long, allow_hyphen_values = true)]
        cd: f64,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Camera matrix from annotated court corners and net pole tips.
    Calibrate {
        #[arg(long)]
        corners: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the court in a PNM image.
    DetectCourt {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Partition lines by fixed slope bands instead of the graph cut.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Hit events from per-frame hit confidences.
    SegmentHits {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = HitMethod::Dp)]
        method: HitMethod,
    },
    /// Reconstruct every shot of a rally.
    Reconstruct {
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        hits: PathBuf,
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        corners: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        fps: f64,
        /// Frame at which the rally ends; gives the last hit a shot.
        #[arg(long)]
        rally_end: Option<usize>,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
    },
    /// Generate the synthetic trajectory dataset.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct every shot of a synthetic dataset.
    ReconstructDataset {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        /// Draw fresh uniform anchor noise of this magnitude (metres)
        /// instead of using the stored noisy anchors.
        #[arg(long, conflicts_with = "true_anchors")]
        anchor_noise: Option<f64>,
        /// Use the exact anchors.
        #[arg(long)]
        true_anchors: bool,
    },
    /// Aggregate reconstruction errors into zone and flight-time reports.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the court lines seen by a camera.
    RenderCourt {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1280)]
        width: u32,
        #[arg(long, default_value_t = 720)]
        height: u32,
        #[arg(long, default_value_t = 3.0)]
        line_width: f64,
        /// Also write the projected corners and pole tips as a corners file.
        #[arg(long)]
        annotation: Option<PathBuf>,
    },
}

fn parse_vec3(s: &str) -> std::result::Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three comma-separated numbers, got '{s}'")),
    }
}

/// Parameters settable through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub reconstruction: ReconstructionConfig,
    pub dataset: DatasetConfig,
    pub detection: DetectConfig,
    pub evaluation: EvalConfig,
    pub relaxation: f64,
    pub pole_height: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reconstruction: ReconstructionConfig::default(),
            dataset: DatasetConfig::default(),
            detection: DetectConfig::default(),
            evaluation: EvalConfig::default(),
            relaxation: DEFAULT_RELAXATION,
            pole_height: DEFAULT_POLE_HEIGHT,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("--{name} must be positive, got {v}")))
    }
}

/// One reconstructed shot of a rally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotReport {
    pub index: usize,
    pub hit_frame: usize,
    pub receive_frame: usize,
    pub hitter: Player,
    pub result: Option<ReconstructionResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RallySummary {
    shots: usize,
    reconstructed: usize,
    issues: Vec<String>,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg: RunConfig = match &cli.config {
        Some(p) => io::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reconstruction.seed = seed;
        cfg.dataset.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Simulate { x0, v0, cd, duration, dt, out } => {
            let ic = InitialConditions::new(WorldPoint::from(x0), v0, cd)?;
            let path = integrate(&ic, duration, dt)?;
            io::write_trajectory(&out, &path)
        }
        Command::Calibrate { corners, out } => {
            let annotation = io::read_corners(&corners)?;
            let model = CourtModel::standard(cfg.pole_height)?;
            let pairs: Vec<_> = model.reference_points().into_iter().zip(annotation.reference_points()).collect();
            let camera = calibrate_dlt(&pairs)?;
            io::write_camera(&out, &camera)
        }
        Command::DetectCourt { image, out, baseline } => {
            let img = io::read_image(&image)?;
            let model = CourtModel::standard(cfg.pole_height)?;
            let method = if baseline.is_some() { PartitionMethod::Farin } else { PartitionMethod::Graph };
            let detection = detect_court(&img, &model, method, &cfg.detection)?;
            io::write_json(&out, &io::DetectionFile::from_detection(detection.as_ref()))
        }
        Command::SegmentHits { scores, fps, out, method } => {
            let scores = io::read_scores(&scores, positive("fps", fps)?)?;
            let hits = match method {
                HitMethod::Dp => optimize_hits(&scores).0,
                HitMethod::Naive => naive_postprocess(&scores),
            };
            io::write_hits(&out, &hits)
        }
        Command::Reconstruct { track, hits, keypoints, camera, corners, out_dir, fps, rally_end, loss } => {
            let fps = positive("fps", fps)?;
            let track = io::read_track(&track, fps)?;
            let hits = io::read_hits(&hits)?;
            let candidates = io::read_keypoints(&keypoints)?;
            let camera = io::read_camera(&camera)?;
            let annotation = io::read_corners(&corners)?;
            let model = CourtModel::standard(cfg.pole_height)?;
            let h = homography_from_corners(&annotation.corner_points(), &model)?;
            let anchors = assign_players(&PlayerAnchors::from_candidates(candidates), &h, cfg.relaxation);
            let mut rc = cfg.reconstruction;
            if let Some(l) = loss {
                rc.loss = l.into();
            }
            rc.validate()?;
            let shots = shots_from_hits(&hits, &track, &anchors, rc.anchor_height, rally_end);
            let reports: Vec<ShotReport> = shots
                .par_iter()
                .enumerate()
                .map(|(index, shot)| match shot {
                    Ok(obs) => {
                        let run_cfg = ReconstructionConfig { seed: rc.seed.wrapping_add(index as u64), ..rc };
                        let (result, error) = match reconstruct_shot(&camera, obs, &run_cfg) {
                            Ok(r) => (Some(r), None),
                            Err(e) => (None, Some(e.to_string())),
                        };
                        ShotReport {
                            index,
                            hit_frame: obs.hit_frame,
                            receive_frame: obs.receive_frame,
                            hitter: obs.hitter,
                            result,
                            error,
                        }
                    }
                    Err(issue) => ShotReport {
                        index,
                        hit_frame: issue.hit_frame,
                        receive_frame: issue.receive_frame,
                        hitter: issue.hitter,
                        result: None,
                        error: Some(issue.reason.clone()),
                    },
                })
                .collect();
            write_rally(&out_dir, &reports, fps)
        }
        Command::GenDataset { out } => {
            let ds = benchmark::generate_dataset(&cfg.dataset)?;
            benchmark::write_dataset(&out, &ds)
        }
        Command::ReconstructDataset { dataset, out, loss, anchor_noise, true_anchors } => {
            let ds = benchmark::read_dataset(&dataset)?;
            let mut rc = cfg.reconstruction;
            if let Some(l) = loss {
                rc.loss = l.into();
            }
            let source = match (anchor_noise, true_anchors) {
                (_, true) => AnchorSource::True,
                (Some(m), false) => AnchorSource::Noise(m),
                (None, false) => AnchorSource::Stored,
            };
            let outcomes = benchmark::reconstruct_dataset(&ds, &rc, source)?;
            benchmark::write_outcomes(&out, &outcomes)
        }
        Command::Evaluate { dataset, results, out } => {
            let ds = benchmark::read_dataset(&dataset)?;
            let outcomes = benchmark::read_outcomes(&results)?;
            let report = benchmark::evaluate(&ds, &outcomes, &cfg.evaluation)?;
            benchmark::write_report(&out, &report)
        }
        Command::RenderCourt { camera, out, width, height, line_width, annotation } => {
            let camera = io::read_camera(&camera)?;
            let model = CourtModel::standard(cfg.pole_height)?;
            let img = render_court(&camera, &model, width, height, line_width)?;
            io::write_image(&out, &img)?;
            if let Some(path) = annotation {
                let refs = model.reference_points().map(|p| camera.project(&p));
                let mut pts = [[0.0; 2]; 6];
                for (slot, q) in pts.iter_mut().zip(refs) {
                    let q = q?;
                    *slot = [q.x, q.y];
                }
                let a = io::CourtAnnotation { corners: [pts[0], pts[1], pts[2], pts[3]], poles: [pts[4], pts[5]] };
                io::write_json(&path, &a)?;
            }
            Ok(())
        }
    }
}

fn write_rally(dir: &Path, reports: &[ShotReport], fps: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut issues = Vec::new();
    for r in reports {
        io::write_json(&dir.join(format!("shot_{:03}.json", r.index)), r)?;
        match &r.result {
            Some(res) => {
                // trajectory times relative to the start of the video
                let mut path = res.path.clone();
                for s in &mut path.samples {
                    s.t += r.hit_frame as f64 / fps;
                }
                io::write_trajectory(&dir.join(format!("shot_{:03}_path.csv", r.index)), &path)?;
            }
            None => issues.push(format!(
                "shot {} (frames {}..{}): {}",
                r.index,
                r.hit_frame,
                r.receive_frame,
                r.error.as_deref().unwrap_or("not reconstructed")
            )),
        }
    }
    let summary = RallySummary {
        shots: reports.len(),
        reconstructed: reports.iter().filter(|r| r.result.is_some()).count(),
        issues,
    };
    io::write_json(&dir.join("summary.json"), &summary)
}
