//! Court coordinates, camera projection and calibration, and player localization.
//!
//! World frame: origin at the near-left outer corner of the court, `x` across
//! the court width (`0..=6.1`), `y` along its length (`0..=13.4`), `z` up. The
//! net plane is `y = 6.7`. Image points are in pixels with `v` pointing down.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type WorldPoint = Point3<f64>;
pub type ImagePoint = Point2<f64>;

pub const COURT_WIDTH: f64 = 6.1;
pub const COURT_LENGTH: f64 = 13.4;
pub const NET_Y: f64 = 6.7;
pub const DEFAULT_POLE_HEIGHT: f64 = 1.55;
pub const DEFAULT_ANCHOR_HEIGHT: f64 = 2.0;
pub const DEFAULT_RELAXATION: f64 = 0.5;

const SINGLES_SIDELINE: f64 = 0.46;
const SHORT_SERVICE: f64 = 4.72;
const LONG_SERVICE_DOUBLES: f64 = 0.76;

/// Which player (court half) something belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Near,
    Far,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Near => Player::Far,
            Player::Far => Player::Near,
        }
    }

    /// Allowed `y` range for a shuttle struck by this player.
    pub fn half_y_range(self) -> (f64, f64) {
        match self {
            Player::Near => (0.0, NET_Y),
            Player::Far => (NET_Y, COURT_LENGTH),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Player::Near => "near",
            Player::Far => "far",
        }
    }
}

impl std::str::FromStr for Player {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "near" => Ok(Player::Near),
            "far" => Ok(Player::Far),
            other => Err(Error::invalid(format!("unknown player '{other}'"))),
        }
    }
}

/// Metric line model of a badminton court.
#[derive(Debug, Clone, PartialEq)]
pub struct CourtModel {
    /// Painted line segments, all at `z = 0`.
    pub lines: Vec<(WorldPoint, WorldPoint)>,
    /// Net pole tips, left (`x = 0`) then right.
    pub poles: [WorldPoint; 2],
    /// Outer corners in near-left, near-right, far-left, far-right order.
    pub corners: [WorldPoint; 4],
}

impl CourtModel {
    /// Full court with BWF line positions and net pole tips at `pole_height`.
    pub fn standard(pole_height: f64) -> Result<Self> {
        if !(pole_height > 0.0 && pole_height.is_finite()) {
            return Err(Error::invalid(format!("pole height must be positive, got {pole_height}")));
        }
        let p = |x: f64, y: f64| WorldPoint::new(x, y, 0.0);
        let (w, l) = (COURT_WIDTH, COURT_LENGTH);
        let mut lines = Vec::with_capacity(12);
        // outer boundary
        lines.push((p(0.0, 0.0), p(w, 0.0)));
        lines.push((p(0.0, l), p(w, l)));
        lines.push((p(0.0, 0.0), p(0.0, l)));
        lines.push((p(w, 0.0), p(w, l)));
        // singles sidelines
        lines.push((p(SINGLES_SIDELINE, 0.0), p(SINGLES_SIDELINE, l)));
        lines.push((p(w - SINGLES_SIDELINE, 0.0), p(w - SINGLES_SIDELINE, l)));
        // short service lines
        lines.push((p(0.0, SHORT_SERVICE), p(w, SHORT_SERVICE)));
        lines.push((p(0.0, l - SHORT_SERVICE), p(w, l - SHORT_SERVICE)));
        // doubles long service lines
        lines.push((p(0.0, LONG_SERVICE_DOUBLES), p(w, LONG_SERVICE_DOUBLES)));
        lines.push((p(0.0, l - LONG_SERVICE_DOUBLES), p(w, l - LONG_SERVICE_DOUBLES)));
        // centre lines
        lines.push((p(w / 2.0, 0.0), p(w / 2.0, SHORT_SERVICE)));
        lines.push((p(w / 2.0, l - SHORT_SERVICE), p(w / 2.0, l)));

        Ok(CourtModel {
            lines,
            poles: [WorldPoint::new(0.0, NET_Y, pole_height), WorldPoint::new(w, NET_Y, pole_height)],
            corners: [p(0.0, 0.0), p(w, 0.0), p(0.0, l), p(w, l)],
        })
    }

    /// The six calibration references: four corners then two pole tips.
    pub fn reference_points(&self) -> [WorldPoint; 6] {
        let [a, b, c, d] = self.corners;
        [a, b, c, d, self.poles[0], self.poles[1]]
    }
}

/// Pinhole camera as a 3x4 projection matrix (defined up to scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    p: Matrix3x4<f64>,
}

impl CameraModel {
    pub fn new(p: Matrix3x4<f64>) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("projection matrix has non-finite entries"));
        }
        let sv = p.singular_values();
        let max = sv.max();
        if !(max > 0.0) || sv.min() <= max * 1e-12 {
            return Err(Error::degenerate("projection matrix is not rank 3"));
        }
        Ok(CameraModel { p })
    }

    pub fn from_rows(rows: [[f64; 4]; 3]) -> Result<Self> {
        Self::new(Matrix3x4::from_fn(|r, c| rows[r][c]))
    }

    /// Pinhole camera at `eye` looking at `target` with square pixels.
    /// `roll` rotates the image about the optical axis (radians).
    pub fn look_at(eye: WorldPoint, target: WorldPoint, focal: f64, principal: (f64, f64), roll: f64) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right0 = forward.cross(&Vector3::z());
        if right0.norm() < 1e-9 {
            return Err(Error::degenerate("camera looks straight along the vertical"));
        }
        let right0 = right0.normalize();
        let down0 = forward.cross(&right0);
        let (s, c) = roll.sin_cos();
        let right = right0 * c + down0 * s;
        let down = down0 * c - right0 * s;
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye.coords);
        let k = Matrix3::new(focal, 0.0, principal.0, 0.0, focal, principal.1, 0.0, 0.0, 1.0);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        rt.set_column(3, &t);
        Self::new(k * rt)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.p
    }

    pub fn rows(&self) -> [[f64; 4]; 3] {
        let mut out = [[0.0; 4]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.p[(r, c)];
            }
        }
        out
    }

    /// Same camera scaled by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.p * c)
    }

    /// Canonical representative: unit Frobenius norm, sign chosen so that
    /// points in front of the camera have positive homogeneous scale.
    pub fn normalized(&self) -> Self {
        let m = self.p.fixed_view::<3, 3>(0, 0).into_owned();
        let sign = if m.determinant() < 0.0 { -1.0 } else { 1.0 };
        CameraModel { p: self.p * (sign / self.p.norm()) }
    }

    /// Homogeneous scale `w` of the projected point under the canonical sign.
    pub fn depth(&self, p: &WorldPoint) -> f64 {
        let m = self.p.fixed_view::<3, 3>(0, 0).into_owned();
        let w = self.p.row(2).dot(&p.to_homogeneous().transpose());
        if m.determinant() < 0.0 {
            -w
        } else {
            w
        }
    }

    pub fn project(&self, p: &WorldPoint) -> Result<ImagePoint> {
        let h = self.p * p.to_homogeneous();
        let scale = self.p.row(2).abs().sum() * (1.0 + p.coords.abs().max());
        if h.z.abs() <= scale * 1e-14 || !h.z.is_finite() {
            return Err(Error::PointAtInfinity);
        }
        Ok(ImagePoint::new(h.x / h.z, h.y / h.z))
    }

    /// Camera centre in world coordinates (right null vector of P).
    pub fn centre(&self) -> WorldPoint {
        let m = self.p.fixed_view::<3, 3>(0, 0).into_owned();
        let p4 = self.p.column(3).into_owned();
        match m.try_inverse() {
            Some(inv) => WorldPoint::from(-(inv * p4)),
            None => WorldPoint::new(f64::NAN, f64::NAN, f64::NAN),
        }
    }

    /// Restriction of the camera to the ground plane `z = 0` (court -> image).
    pub fn ground_homography(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.p.column(0), self.p.column(1), self.p.column(3)])
    }
}

/// Similarity transform taking the points to zero centroid and RMS distance
/// `target_rms` from the origin.
fn isotropic_transform<const D: usize>(points: &[[f64; D]], target_rms: f64) -> (Vec<f64>, f64) {
    let n = points.len() as f64;
    let mut centroid = vec![0.0; D];
    for p in points {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v / n;
        }
    }
    let mean_sq =
        points.iter().map(|p| p.iter().zip(&centroid).map(|(v, c)| (v - c).powi(2)).sum::<f64>()).sum::<f64>() / n;
    let scale = if mean_sq > 0.0 { target_rms / mean_sq.sqrt() } else { 1.0 };
    (centroid, scale)
}

/// Direct linear transform from at least six 3D-2D correspondences.
///
/// Points are isotropically normalized before solving; the result is the
/// smallest right singular vector of the stacked system, mapped back and
/// returned in canonical (unit Frobenius norm) form.
pub fn calibrate_dlt(correspondences: &[(WorldPoint, ImagePoint)]) -> Result<CameraModel> {
    let n = correspondences.len();
    if n < 6 {
        return Err(Error::invalid(format!("DLT needs at least 6 correspondences, got {n}")));
    }
    if correspondences.iter().any(|(w, i)| !w.coords.iter().chain(i.coords.iter()).all(|v| v.is_finite())) {
        return Err(Error::invalid("non-finite correspondence"));
    }
    let world: Vec<[f64; 3]> = correspondences.iter().map(|(w, _)| [w.x, w.y, w.z]).collect();
    let image: Vec<[f64; 2]> = correspondences.iter().map(|(_, i)| [i.x, i.y]).collect();
    let (wc, ws) = isotropic_transform(&world, 3f64.sqrt());
    let (ic, is) = isotropic_transform(&image, 2f64.sqrt());

    let rows = 2 * n.max(6);
    let mut a = DMatrix::<f64>::zeros(rows, 12);
    for (k, (w, i)) in world.iter().zip(&image).enumerate() {
        let x = [(w[0] - wc[0]) * ws, (w[1] - wc[1]) * ws, (w[2] - wc[2]) * ws, 1.0];
        let u = (i[0] - ic[0]) * is;
        let v = (i[1] - ic[1]) * is;
        for j in 0..4 {
            a[(2 * k, j)] = x[j];
            a[(2 * k, 8 + j)] = -u * x[j];
            a[(2 * k + 1, 4 + j)] = x[j];
            a[(2 * k + 1, 8 + j)] = -v * x[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::degenerate("SVD failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let smallest = order[0];
    let second = order[1];
    let largest = *order.last().unwrap();
    if svd.singular_values[second] <= svd.singular_values[largest] * 1e-9 {
        return Err(Error::degenerate("correspondences do not determine a camera (coplanar or repeated points)"));
    }
    let sol = v_t.row(smallest);
    let p_norm = Matrix3x4::from_fn(|r, c| sol[4 * r + c]);

    let t_img_inv = Matrix3::new(1.0 / is, 0.0, ic[0], 0.0, 1.0 / is, ic[1], 0.0, 0.0, 1.0);
    let t_world = Matrix4::new(
        ws,
        0.0,
        0.0,
        -ws * wc[0],
        0.0,
        ws,
        0.0,
        -ws * wc[1],
        0.0,
        0.0,
        ws,
        -ws * wc[2],
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let p = t_img_inv * p_norm * t_world;
    Ok(CameraModel::new(p)?.normalized())
}

/// Image-to-court-plane homography.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: Matrix3<f64>,
    inv: Matrix3<f64>,
}

impl Homography {
    pub fn new(h: Matrix3<f64>) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("homography has non-finite entries"));
        }
        let h = h / h.norm();
        let inv = h
            .try_inverse()
            .filter(|_| h.determinant().abs() > 1e-14)
            .ok_or_else(|| Error::degenerate("homography is singular"))?;
        Ok(Homography { h, inv })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    /// Court-plane to image mapping.
    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inv
    }

    pub fn apply(&self, p: &ImagePoint) -> Result<(f64, f64)> {
        apply_h(&self.h, p.x, p.y)
    }

    pub fn apply_inverse(&self, x: f64, y: f64) -> Result<ImagePoint> {
        apply_h(&self.inv, x, y).map(|(u, v)| ImagePoint::new(u, v))
    }
}

fn apply_h(h: &Matrix3<f64>, x: f64, y: f64) -> Result<(f64, f64)> {
    let q = h * Vector3::new(x, y, 1.0);
    let scale = h.row(2).abs().sum() * (1.0 + x.abs().max(y.abs()));
    if q.z.abs() <= scale * 1e-14 || !q.z.is_finite() {
        return Err(Error::PointAtInfinity);
    }
    Ok((q.x / q.z, q.y / q.z))
}

fn cross2(o: &ImagePoint, a: &ImagePoint, b: &ImagePoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Homography mapping `src[i]` to `dst[i]` from four exact correspondences.
pub fn homography_from_points(src: &[ImagePoint; 4], dst: &[ImagePoint; 4]) -> Result<Matrix3<f64>> {
    for pts in [src, dst] {
        let scale = pts.iter().flat_map(|p| pts.iter().map(move |q| (p - q).norm())).fold(0.0, f64::max);
        for skip in 0..4 {
            let tri: Vec<&ImagePoint> = (0..4).filter(|&i| i != skip).map(|i| &pts[i]).collect();
            if cross2(tri[0], tri[1], tri[2]).abs() <= 1e-9 * scale * scale {
                return Err(Error::degenerate("three of the four points are collinear"));
            }
        }
    }
    let s: Vec<[f64; 2]> = src.iter().map(|p| [p.x, p.y]).collect();
    let d: Vec<[f64; 2]> = dst.iter().map(|p| [p.x, p.y]).collect();
    let (sc, ss) = isotropic_transform(&s, 2f64.sqrt());
    let (dc, ds) = isotropic_transform(&d, 2f64.sqrt());

    let mut a = nalgebra::SMatrix::<f64, 9, 9>::zeros();
    for k in 0..4 {
        let x = (s[k][0] - sc[0]) * ss;
        let y = (s[k][1] - sc[1]) * ss;
        let u = (d[k][0] - dc[0]) * ds;
        let v = (d[k][1] - dc[1]) * ds;
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for j in 0..9 {
            a[(2 * k, j)] = r0[j];
            a[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::degenerate("SVD failed"))?;
    let (idx, _) = svd.singular_values.argmin();
    let sol = v_t.row(idx);
    let hn = Matrix3::from_fn(|r, c| sol[3 * r + c]);
    let t_src = Matrix3::new(ss, 0.0, -ss * sc[0], 0.0, ss, -ss * sc[1], 0.0, 0.0, 1.0);
    let t_dst_inv = Matrix3::new(1.0 / ds, 0.0, dc[0], 0.0, 1.0 / ds, dc[1], 0.0, 0.0, 1.0);
    Ok(t_dst_inv * hn * t_src)
}

/// Homography taking the four image corners (near-left, near-right, far-left,
/// far-right) onto the model's outer corners.
pub fn homography_from_corners(image_corners: &[ImagePoint; 4], model: &CourtModel) -> Result<Homography> {
    let dst = model.corners.map(|c| ImagePoint::new(c.x, c.y));
    Homography::new(homography_from_points(image_corners, &dst)?)
}

pub fn image_to_court(h: &Homography, p: &ImagePoint) -> Result<(f64, f64)> {
    h.apply(p)
}

/// Court-plane position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtPos {
    pub x: f64,
    pub y: f64,
}

impl CourtPos {
    pub fn new(x: f64, y: f64) -> Self {
        CourtPos { x, y }
    }

    fn dist(&self, other: &CourtPos) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Candidate foot positions per frame and the resolved player positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlayerAnchors {
    pub candidates: BTreeMap<usize, Vec<ImagePoint>>,
    pub near: BTreeMap<usize, CourtPos>,
    pub far: BTreeMap<usize, CourtPos>,
}

impl PlayerAnchors {
    pub fn from_candidates(candidates: BTreeMap<usize, Vec<ImagePoint>>) -> Self {
        PlayerAnchors { candidates, ..Default::default() }
    }

    pub fn resolved(&self, player: Player, frame: usize) -> Option<CourtPos> {
        match player {
            Player::Near => self.near.get(&frame).copied(),
            Player::Far => self.far.get(&frame).copied(),
        }
    }
}

/// Resolve near and far players frame by frame.
///
/// Candidates whose feet map inside the court expanded by `relaxation` are
/// kept; the kept candidate on the near half with the smallest `y` is the
/// near player and the kept candidate on the far half with the largest `y`
/// is the far player. A side without an in-court candidate takes the
/// candidate nearest to that side's last resolved position.
pub fn assign_players(anchors: &PlayerAnchors, h: &Homography, relaxation: f64) -> PlayerAnchors {
    let mut out = PlayerAnchors { candidates: anchors.candidates.clone(), ..Default::default() };
    let mut last_near: Option<CourtPos> = None;
    let mut last_far: Option<CourtPos> = None;
    let inside = |p: &CourtPos| {
        p.x >= -relaxation && p.x <= COURT_WIDTH + relaxation && p.y >= -relaxation && p.y <= COURT_LENGTH + relaxation
    };

    for (&frame, feet) in &anchors.candidates {
        let positions: Vec<CourtPos> = feet
            .iter()
            .filter_map(|f| h.apply(f).ok())
            .map(|(x, y)| CourtPos::new(x, y))
            .filter(|p| p.x.is_finite() && p.y.is_finite())
            .collect();

        let mut near_idx = None;
        let mut far_idx = None;
        for (i, p) in positions.iter().enumerate() {
            if !inside(p) {
                continue;
            }
            if p.y <= NET_Y {
                if near_idx.is_none_or(|j: usize| p.y < positions[j].y) {
                    near_idx = Some(i);
                }
            } else if far_idx.is_none_or(|j: usize| p.y > positions[j].y) {
                far_idx = Some(i);
            }
        }

        let nearest_to = |last: CourtPos, exclude: Option<usize>, ok: &dyn Fn(&CourtPos) -> bool| {
            positions
                .iter()
                .enumerate()
                .filter(|(i, p)| Some(*i) != exclude && ok(p))
                .min_by(|a, b| a.1.dist(&last).total_cmp(&b.1.dist(&last)))
                .map(|(i, _)| i)
        };
        let mut near_fallback = false;
        let mut far_fallback = false;
        if near_idx.is_none() {
            if let Some(last) = last_near {
                near_idx = nearest_to(last, far_idx, &|p| p.y <= NET_Y + relaxation);
                near_fallback = near_idx.is_some();
            }
        }
        if far_idx.is_none() {
            if let Some(last) = last_far {
                far_idx = nearest_to(last, near_idx, &|p| p.y >= NET_Y - relaxation);
                far_fallback = far_idx.is_some();
            }
        }
        if let (Some(n), Some(f)) = (near_idx, far_idx) {
            if positions[n].y > positions[f].y {
                if far_fallback {
                    far_idx = None;
                } else if near_fallback {
                    near_idx = None;
                }
            }
        }

        if let Some(i) = near_idx {
            out.near.insert(frame, positions[i]);
            last_near = Some(positions[i]);
        }
        if let Some(i) = far_idx {
            out.far.insert(frame, positions[i]);
            last_far = Some(positions[i]);
        }
    }
    out
}

/// Lift a court-plane position to a 3D anchor at the given height.
pub fn anchor_3d(court_pos: CourtPos, anchor_height: f64) -> WorldPoint {
    WorldPoint::new(court_pos.x, court_pos.y, anchor_height)
}
