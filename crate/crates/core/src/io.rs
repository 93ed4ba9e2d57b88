//! File formats: CSV tables, JSON documents and PNM images.
//!
//! Every CSV file has a header row. Parse failures report the 1-based line
//! number of the offending row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::court_detection::CourtDetection;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, ImagePoint, Player};
use crate::hit_segmentation::{Hit, ScoreSequence};
use crate::physics::{FlightPath, PathSample};
use crate::reconstruction::{ShuttleTrack, TrackEntry};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Rows of a headed CSV file with their line numbers.
fn read_rows(path: &Path, columns: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file);
    let parse = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let headers = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != columns {
        return Err(parse(1, format!("expected header '{}', found '{}'", columns.join(","), names.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns.len() {
            return Err(parse(line, format!("expected {} fields, found {}", columns.len(), rec.len())));
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

fn field<T: FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse { path: path.to_path_buf(), line, msg: format!("bad {name} '{raw}'") })
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn wrap(path: &Path, line: u64, e: Error) -> Error {
    match e {
        Error::InvalidInput(msg) => Error::Parse { path: path.to_path_buf(), line, msg },
        other => other,
    }
}

/// Track CSV: `frame,u,v,visible`. Invisible rows may leave `u,v` empty.
pub fn read_track(path: &Path, fps: f64) -> Result<ShuttleTrack> {
    let rows = read_rows(path, &["frame", "u", "v", "visible"])?;
    let mut entries = Vec::with_capacity(rows.len());
    let mut last_line = 1;
    for (line, r) in &rows {
        let visible = match r[3].as_str() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    msg: format!("bad visible flag '{other}'"),
                })
            }
        };
        let coord = |i: usize, name: &str| -> Result<f64> {
            if r[i].is_empty() && !visible {
                Ok(f64::NAN)
            } else {
                let v: f64 = field(path, *line, name, &r[i])?;
                if visible && !v.is_finite() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: *line,
                        msg: format!("non-finite {name}"),
                    });
                }
                Ok(v)
            }
        };
        let frame: usize = field(path, *line, "frame", &r[0])?;
        if entries.last().is_some_and(|e: &TrackEntry| e.frame >= frame) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                msg: "frames must be strictly increasing".into(),
            });
        }
        entries.push(TrackEntry { frame, u: coord(1, "u")?, v: coord(2, "v")?, visible });
        last_line = *line;
    }
    ShuttleTrack::new(fps, entries).map_err(|e| wrap(path, last_line, e))
}

pub fn write_track(path: &Path, track: &ShuttleTrack) -> Result<()> {
    let mut w = create(path)?;
    let mut out = String::from("frame,u,v,visible\n");
    for e in &track.entries {
        out.push_str(&format!("{},{},{},{}\n", e.frame, fmt_f64(e.u), fmt_f64(e.v), u8::from(e.visible)));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Hit CSV: `frame,player` with player `near` or `far`.
pub fn read_hits(path: &Path) -> Result<Vec<Hit>> {
    read_rows(path, &["frame", "player"])?
        .into_iter()
        .map(|(line, r)| {
            Ok(Hit {
                frame: field(path, line, "frame", &r[0])?,
                player: Player::from_str(&r[1]).map_err(|e| wrap(path, line, e))?,
            })
        })
        .collect()
}

pub fn write_hits(path: &Path, hits: &[Hit]) -> Result<()> {
    let mut w = create(path)?;
    let mut out = String::from("frame,player\n");
    for h in hits {
        out.push_str(&format!("{},{}\n", h.frame, h.player.as_str()));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Score CSV: `frame,s1,s2,s3` (no hit, near hit, far hit) on consecutive frames.
pub fn read_scores(path: &Path, fps: f64) -> Result<ScoreSequence> {
    let rows = read_rows(path, &["frame", "s1", "s2", "s3"])?;
    let mut start = None;
    let mut scores = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let frame: usize = field(path, *line, "frame", &r[0])?;
        let first = *start.get_or_insert(frame);
        if frame != first + scores.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                msg: "score frames must be consecutive".into(),
            });
        }
        let mut s = [0.0; 3];
        for (k, v) in s.iter_mut().enumerate() {
            *v = field(path, *line, "score", &r[k + 1])?;
        }
        scores.push(s);
    }
    let last = rows.last().map_or(1, |r| r.0);
    ScoreSequence::new(fps, start.unwrap_or(0), scores).map_err(|e| wrap(path, last, e))
}

pub fn write_scores(path: &Path, scores: &ScoreSequence) -> Result<()> {
    let mut w = create(path)?;
    let mut out = String::from("frame,s1,s2,s3\n");
    for (i, s) in scores.scores.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", scores.start_frame + i, s[0], s[1], s[2]));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Keypoint CSV: `frame,pose_id,foot_u,foot_v`, one row per detected pose.
/// Returns the foot points per frame ordered by pose id.
pub fn read_keypoints(path: &Path) -> Result<BTreeMap<usize, Vec<ImagePoint>>> {
    let mut by_frame: BTreeMap<usize, BTreeMap<usize, ImagePoint>> = BTreeMap::new();
    for (line, r) in read_rows(path, &["frame", "pose_id", "foot_u", "foot_v"])? {
        let frame: usize = field(path, line, "frame", &r[0])?;
        let pose: usize = field(path, line, "pose_id", &r[1])?;
        let u: f64 = field(path, line, "foot_u", &r[2])?;
        let v: f64 = field(path, line, "foot_v", &r[3])?;
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::Parse { path: path.to_path_buf(), line, msg: "non-finite foot position".into() });
        }
        if by_frame.entry(frame).or_default().insert(pose, ImagePoint::new(u, v)).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("duplicate pose {pose} in frame {frame}"),
            });
        }
    }
    Ok(by_frame.into_iter().map(|(f, poses)| (f, poses.into_values().collect())).collect())
}

pub fn write_keypoints(path: &Path, keypoints: &BTreeMap<usize, Vec<ImagePoint>>) -> Result<()> {
    let mut w = create(path)?;
    let mut out = String::from("frame,pose_id,foot_u,foot_v\n");
    for (frame, poses) in keypoints {
        for (id, p) in poses.iter().enumerate() {
            out.push_str(&format!("{frame},{id},{},{}\n", p.x, p.y));
        }
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Trajectory CSV: `t,x,y,z`.
pub fn read_trajectory(path: &Path) -> Result<FlightPath> {
    let mut samples: Vec<PathSample> = Vec::new();
    for (line, r) in read_rows(path, &["t", "x", "y", "z"])? {
        let v: Vec<f64> =
            r.iter().zip(["t", "x", "y", "z"]).map(|(s, n)| field(path, line, n, s)).collect::<Result<_>>()?;
        if samples.last().is_some_and(|s| s.t >= v[0]) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "times must be strictly increasing".into(),
            });
        }
        samples.push(PathSample { t: v[0], pos: crate::geometry::WorldPoint::new(v[1], v[2], v[3]) });
    }
    let dt = if samples.len() > 1 { samples[1].t - samples[0].t } else { 0.0 };
    Ok(FlightPath { dt, samples })
}

pub fn write_trajectory(path: &Path, traj: &FlightPath) -> Result<()> {
    let mut w = create(path)?;
    let mut out = String::from("t,x,y,z\n");
    for s in &traj.samples {
        out.push_str(&format!("{},{},{},{}\n", s.t, s.pos.x, s.pos.y, s.pos.z));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct CameraFile {
    #[serde(rename = "P")]
    p: [[f64; 4]; 3],
}

/// Camera JSON: `{"P": [[..4], [..4], [..4]]}`.
pub fn read_camera(path: &Path) -> Result<CameraModel> {
    let f: CameraFile = read_json(path)?;
    CameraModel::from_rows(f.p).map_err(|e| wrap(path, 1, e))
}

pub fn write_camera(path: &Path, camera: &CameraModel) -> Result<()> {
    write_json(path, &CameraFile { p: camera.rows() })
}

/// Annotated court references in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtAnnotation {
    /// Near-left, near-right, far-left, far-right.
    pub corners: [[f64; 2]; 4],
    /// Left then right net pole tip.
    pub poles: [[f64; 2]; 2],
}

impl CourtAnnotation {
    pub fn corner_points(&self) -> [ImagePoint; 4] {
        self.corners.map(|[u, v]| ImagePoint::new(u, v))
    }

    /// Corners then pole tips, matching the court model's reference order.
    pub fn reference_points(&self) -> [ImagePoint; 6] {
        let c = self.corner_points();
        let p = self.poles.map(|[u, v]| ImagePoint::new(u, v));
        [c[0], c[1], c[2], c[3], p[0], p[1]]
    }
}

/// Corners JSON: `{"corners": [[u, v] x4], "poles": [[u, v] x2]}`.
pub fn read_corners(path: &Path) -> Result<CourtAnnotation> {
    let a: CourtAnnotation = read_json(path)?;
    if a.corners.iter().chain(&a.poles).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, msg: "non-finite coordinate".into() });
    }
    Ok(a)
}

/// Serialized court detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub success: bool,
    pub score: f64,
    pub corners: Option<[[f64; 2]; 4]>,
    /// Image to court homography, row-major.
    pub homography: Option<[[f64; 3]; 3]>,
    pub candidates: usize,
}

impl DetectionFile {
    pub fn from_detection(d: Option<&CourtDetection>) -> Self {
        match d {
            Some(d) => {
                let m = d.homography.matrix();
                DetectionFile {
                    success: d.success,
                    score: d.score,
                    corners: Some(d.corners.map(|p| [p.x, p.y])),
                    homography: Some(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))),
                    candidates: d.candidates,
                }
            }
            None => DetectionFile { success: false, score: 0.0, corners: None, homography: None, candidates: 0 },
        }
    }
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path).map_err(io_err(path))?.with_guessed_format().map_err(io_err(path))?;
    Ok(reader.decode()?.to_rgb8())
}

/// Binary PPM.
pub fn write_image(path: &Path, img: &RgbImage) -> Result<()> {
    let mut w = create(path)?;
    let enc = image::codecs::pnm::PnmEncoder::new(&mut w)
        .with_subtype(image::codecs::pnm::PnmSubtype::Pixmap(image::codecs::pnm::SampleEncoding::Binary));
    img.write_with_encoder(enc)?;
    w.flush().map_err(io_err(path))
}
