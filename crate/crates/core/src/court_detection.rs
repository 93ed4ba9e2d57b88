//! Single-frame court detection.
//!
//! White pixels are thresholded, straight lines extracted with a Hough
//! transform, split into two roughly orthogonal families, and every choice of
//! two lines from each family is tried as the court's outer rectangle. The
//! candidate whose projected court layout best covers the mask wins.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{homography_from_corners, CameraModel, CourtModel, Homography, ImagePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    /// Minimum of the three channels.
    pub luminance: u8,
    /// Maximum channel spread.
    pub chroma: u8,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { luminance: 180, chroma: 40 }
    }
}

/// Binary mask (255 = line pixel) of white-ish pixels.
pub fn threshold_white(img: &RgbImage, cfg: &ThresholdConfig) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let Rgb([r, g, b]) = *img.get_pixel(x, y);
        let lo = r.min(g).min(b);
        let hi = r.max(g).max(b);
        Luma([if lo >= cfg.luminance && hi - lo <= cfg.chroma { 255 } else { 0 }])
    })
}

/// Line in normal form `x cos(theta) + y sin(theta) = rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedLine {
    pub rho: f64,
    /// Normal angle in `[0, pi)`.
    pub theta: f64,
    pub support: u32,
}

impl DetectedLine {
    pub fn new(rho: f64, theta: f64, support: u32) -> Self {
        let (rho, theta) = normalize_polar(rho, theta);
        DetectedLine { rho, theta, support }
    }

    /// Through two image points.
    pub fn through(a: ImagePoint, b: ImagePoint) -> Self {
        let d = b - a;
        let theta = d.y.atan2(d.x) + std::f64::consts::FRAC_PI_2;
        let rho = a.x * theta.cos() + a.y * theta.sin();
        DetectedLine::new(rho, theta, 0)
    }

    /// Direction angle of the line in degrees within `(-90, 90]`; 0 is image-horizontal.
    pub fn slope_degrees(&self) -> f64 {
        let mut a = self.theta.to_degrees() - 90.0;
        if a <= -90.0 {
            a += 180.0;
        }
        a
    }

    pub fn intersect(&self, other: &DetectedLine) -> Option<ImagePoint> {
        let (s1, c1) = self.theta.sin_cos();
        let (s2, c2) = other.theta.sin_cos();
        let det = c1 * s2 - s1 * c2;
        if det.abs() < 1e-9 {
            return None;
        }
        Some(ImagePoint::new((self.rho * s2 - other.rho * s1) / det, (c1 * other.rho - c2 * self.rho) / det))
    }

    pub fn distance(&self, p: &ImagePoint) -> f64 {
        (p.x * self.theta.cos() + p.y * self.theta.sin() - self.rho).abs()
    }
}

fn normalize_polar(mut rho: f64, mut theta: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    theta = theta.rem_euclid(2.0 * PI);
    if theta >= PI {
        theta -= PI;
        rho = -rho;
    }
    (rho, theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    pub theta_bins: usize,
    /// Votes needed for a peak; `None` means a tenth of the image diagonal.
    pub vote_threshold: Option<u32>,
    pub max_lines: usize,
    /// Half-width of the band of pixels used to refine a peak.
    pub refine_band: f64,
    /// Peaks closer than this (px, degrees) to a stronger line are dropped.
    pub merge_distance: f64,
    pub merge_angle_deg: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            theta_bins: 180,
            vote_threshold: None,
            max_lines: 40,
            refine_band: 2.0,
            merge_distance: 4.0,
            merge_angle_deg: 2.0,
        }
    }
}

/// Standard (rho, theta) Hough transform with 1 px x 1 deg bins, 3x3
/// non-maximum suppression and total-least-squares refinement.
pub fn hough_lines(mask: &GrayImage, cfg: &HoughConfig) -> Vec<DetectedLine> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let pixels: Vec<(f64, f64)> =
        mask.enumerate_pixels().filter(|(_, _, p)| p.0[0] > 0).map(|(x, y, _)| (x as f64, y as f64)).collect();
    if pixels.is_empty() || w == 0 || h == 0 {
        return Vec::new();
    }
    let diag = (w as f64).hypot(h as f64);
    let threshold = cfg.vote_threshold.unwrap_or((0.1 * diag).round() as u32).max(1);
    let offset = diag.ceil() as i64 + 1;
    let n_rho = (2 * offset + 1) as usize;
    let n_theta = cfg.theta_bins.max(1);
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| (k as f64 * std::f64::consts::PI / n_theta as f64).sin_cos())
        .map(|(s, c)| (c, s))
        .collect();

    let mut acc = vec![0u32; n_theta * n_rho];
    for &(x, y) in &pixels {
        for (k, &(c, s)) in trig.iter().enumerate() {
            let r = (x * c + y * s).round() as i64 + offset;
            acc[k * n_rho + r as usize] += 1;
        }
    }

    let at = |k: i64, r: i64| -> u32 {
        // theta wraps to the mirrored rho at the ends
        let (k, r) = if k < 0 {
            (k + n_theta as i64, 2 * offset - r)
        } else if k >= n_theta as i64 {
            (k - n_theta as i64, 2 * offset - r)
        } else {
            (k, r)
        };
        if r < 0 || r >= n_rho as i64 {
            0
        } else {
            acc[k as usize * n_rho + r as usize]
        }
    };
    let mut peaks: Vec<(u32, usize, usize)> = Vec::new();
    for k in 0..n_theta {
        for r in 0..n_rho {
            let v = acc[k * n_rho + r];
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'nb: for dk in -1i64..=1 {
                for dr in -1i64..=1 {
                    if dk == 0 && dr == 0 {
                        continue;
                    }
                    let nv = at(k as i64 + dk, r as i64 + dr);
                    // strict on earlier neighbours so plateaus yield one peak
                    let earlier = dk < 0 || (dk == 0 && dr < 0);
                    if nv > v || (earlier && nv == v) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((v, k, r));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut lines: Vec<DetectedLine> = Vec::new();
    for (votes, k, r) in peaks {
        let theta = k as f64 * std::f64::consts::PI / n_theta as f64;
        let rho = r as f64 - offset as f64;
        let coarse = DetectedLine::new(rho, theta, votes);
        let refined = refine_tls(&pixels, &coarse, cfg.refine_band).unwrap_or(coarse);
        if lines.iter().any(|l| same_line(l, &refined, cfg.merge_distance, cfg.merge_angle_deg, w, h)) {
            continue;
        }
        lines.push(refined);
        if lines.len() >= cfg.max_lines {
            break;
        }
    }
    lines
}

fn refine_tls(pixels: &[(f64, f64)], line: &DetectedLine, band: f64) -> Option<DetectedLine> {
    let near: Vec<&(f64, f64)> =
        pixels.iter().filter(|(x, y)| line.distance(&ImagePoint::new(*x, *y)) <= band).collect();
    if near.len() < 2 {
        return None;
    }
    let n = near.len() as f64;
    let (mx, my) = near.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &near {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    // direction = major axis of the scatter; the normal is perpendicular
    let dir = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let theta = dir + std::f64::consts::FRAC_PI_2;
    let rho = mx * theta.cos() + my * theta.sin();
    let refined = DetectedLine::new(rho, theta, line.support);
    (angle_between(&refined, line) <= 2f64.to_radians()).then_some(refined)
}

/// Acute angle between two lines, in `[0, pi/2]`.
pub fn angle_between(a: &DetectedLine, b: &DetectedLine) -> f64 {
    let d = (a.theta - b.theta).abs() % std::f64::consts::PI;
    d.min(std::f64::consts::PI - d)
}

fn same_line(a: &DetectedLine, b: &DetectedLine, dist: f64, angle_deg: f64, w: usize, h: usize) -> bool {
    if angle_between(a, b) > angle_deg.to_radians() {
        return false;
    }
    // compare the two lines where they cross the image
    let probes = [
        ImagePoint::new(0.0, 0.0),
        ImagePoint::new(w as f64, 0.0),
        ImagePoint::new(0.0, h as f64),
        ImagePoint::new(w as f64, h as f64),
        ImagePoint::new(w as f64 / 2.0, h as f64 / 2.0),
    ];
    let foot = |l: &DetectedLine, p: &ImagePoint| {
        let (s, c) = l.theta.sin_cos();
        let d = p.x * c + p.y * s - l.rho;
        ImagePoint::new(p.x - d * c, p.y - d * s)
    };
    probes.iter().map(|p| foot(a, p)).any(|q| {
        let inside = q.x >= 0.0 && q.y >= 0.0 && q.x <= w as f64 && q.y <= h as f64;
        inside && b.distance(&q) <= dist
    })
}

/// Lines split into the two families.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinePartition {
    pub horizontal: Vec<DetectedLine>,
    pub vertical: Vec<DetectedLine>,
}

/// Edge weight rewarding near-orthogonal pairs.
pub fn orthogonality_weight(a: &DetectedLine, b: &DetectedLine, eps: f64) -> f64 {
    let d = (angle_between(a, b) - std::f64::consts::FRAC_PI_2).abs();
    1.0 / (d + eps).powi(2)
}

/// Total weight of edges crossing the cut.
pub fn cut_weight(lines: &[DetectedLine], side: &[bool], eps: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if side[i] != side[j] {
                total += orthogonality_weight(&lines[i], &lines[j], eps);
            }
        }
    }
    total
}

/// Greedy maximum-weight cut of the complete line graph.
///
/// Returns the side of every line (`true` = second part). The parts are
/// seeded with the heaviest edge, the remaining lines are placed in order of
/// decreasing total weight, and single moves are applied while they improve
/// the cut. Every split of the line directions into two contiguous arcs is
/// then polished the same way and the heaviest cut wins.
pub fn greedy_max_cut(lines: &[DetectedLine], eps: f64) -> Vec<bool> {
    let n = lines.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = orthogonality_weight(&lines[i], &lines[j], eps);
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    let mut seed = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if w[i][j] > w[seed.0][seed.1] {
                seed = (i, j);
            }
        }
    }
    let mut side = vec![false; n];
    let mut placed = vec![false; n];
    side[seed.1] = true;
    placed[seed.0] = true;
    placed[seed.1] = true;

    let mut order: Vec<usize> = (0..n).filter(|&i| !placed[i]).collect();
    let totals: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
    for i in order {
        let (mut to_false, mut to_true) = (0.0, 0.0);
        for j in 0..n {
            if placed[j] {
                if side[j] {
                    to_true += w[i][j];
                } else {
                    to_false += w[i][j];
                }
            }
        }
        // joining a part cuts the edges to the other one
        side[i] = to_false > to_true;
        placed[i] = true;
    }

    let scale: f64 = totals.iter().sum::<f64>().max(1.0);
    local_search(&w, &mut side, scale);

    // Splits of the direction circle into two arcs; near-perpendicular
    // clusters are often cut better this way than by the insertion order.
    let value = |side: &[bool]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if side[i] != side[j] {
                    total += w[i][j];
                }
            }
        }
        total
    };
    let mut by_angle: Vec<usize> = (0..n).collect();
    by_angle.sort_by(|&a, &b| {
        let ta = lines[a].theta.rem_euclid(std::f64::consts::PI);
        let tb = lines[b].theta.rem_euclid(std::f64::consts::PI);
        ta.total_cmp(&tb).then(a.cmp(&b))
    });
    let mut best = value(&side);
    for a in 0..n {
        for b in a + 1..n {
            let mut arc = vec![false; n];
            for &i in &by_angle[a..b] {
                arc[i] = true;
            }
            local_search(&w, &mut arc, scale);
            let v = value(&arc);
            if v > best * (1.0 + 1e-12) {
                best = v;
                side = arc;
            }
        }
    }
    side
}

/// Move single lines across the cut while that increases its weight.
fn local_search(w: &[Vec<f64>], side: &mut [bool], scale: f64) {
    let n = side.len();
    loop {
        let mut improved = false;
        for i in 0..n {
            let count_same = (0..n).filter(|&j| side[j] == side[i]).count();
            if count_same <= 1 {
                continue;
            }
            let (mut same, mut other) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    if side[j] == side[i] {
                        same += w[i][j];
                    } else {
                        other += w[i][j];
                    }
                }
            }
            if same - other > 1e-12 * scale {
                side[i] = !side[i];
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Weighted-graph bipartition into horizontal and vertical families.
pub fn partition_lines(lines: &[DetectedLine], eps: f64) -> Result<LinePartition> {
    if lines.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 lines to partition, got {}", lines.len())));
    }
    let side = greedy_max_cut(lines, eps);
    let most_horizontal = (0..lines.len())
        .min_by(|&a, &b| lines[a].slope_degrees().abs().total_cmp(&lines[b].slope_degrees().abs()))
        .expect("non-empty");
    let h_side = side[most_horizontal];
    let mut out = LinePartition::default();
    for (l, s) in lines.iter().zip(side) {
        if s == h_side {
            out.horizontal.push(*l);
        } else {
            out.vertical.push(*l);
        }
    }
    Ok(out)
}

/// Fixed slope bands: within 25 degrees of horizontal, or between 60 and 120
/// degrees. Returns the partition and the lines outside both bands.
pub fn farin_partition(lines: &[DetectedLine]) -> (LinePartition, Vec<DetectedLine>) {
    let mut out = LinePartition::default();
    let mut discarded = Vec::new();
    for l in lines {
        let a = l.slope_degrees().abs();
        if a <= 25.0 {
            out.horizontal.push(*l);
        } else if a >= 60.0 {
            out.vertical.push(*l);
        } else {
            discarded.push(*l);
        }
    }
    (out, discarded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub score_threshold: f64,
    /// Spacing of sample points along projected model lines (px).
    pub sample_step: f64,
    /// A sample counts when a mask pixel lies within this distance (px).
    pub tolerance: f64,
    /// Skip candidate rectangles smaller than this fraction of the image.
    pub min_area_fraction: f64,
    pub prune_small: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { score_threshold: 0.7, sample_step: 2.0, tolerance: 2.0, min_area_fraction: 0.05, prune_small: true }
    }
}

/// A fitted court layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CourtDetection {
    /// Near-left, near-right, far-left, far-right.
    pub corners: [ImagePoint; 4],
    pub homography: Homography,
    pub score: f64,
    pub success: bool,
    /// Number of line quadruples enumerated.
    pub candidates: usize,
}

/// `C(|H|, 2) * C(|V|, 2)`.
pub fn candidate_count(partition: &LinePartition) -> usize {
    let pairs = |n: usize| n * n.saturating_sub(1) / 2;
    pairs(partition.horizontal.len()) * pairs(partition.vertical.len())
}

/// Mask of pixels within `radius` of a set pixel.
fn dilate(mask: &GrayImage, radius: f64) -> Vec<bool> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = radius.floor() as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| ((dx * dx + dy * dy) as f64) <= radius * radius)
        .collect();
    let mut out = vec![false; (w * h) as usize];
    for (x, y, p) in mask.enumerate_pixels() {
        if p.0[0] == 0 {
            continue;
        }
        for (dx, dy) in &offsets {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                out[(ny * w + nx) as usize] = true;
            }
        }
    }
    out
}

fn polygon_area(pts: &[ImagePoint]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Canonical corner order from the two horizontal and two vertical lines:
/// the horizontal lower in the image is the near baseline, left = smaller `u`.
fn order_corners(h: [&DetectedLine; 2], v: [&DetectedLine; 2]) -> Option<[ImagePoint; 4]> {
    let mut rows = Vec::with_capacity(2);
    for hl in h {
        let a = hl.intersect(v[0])?;
        let b = hl.intersect(v[1])?;
        rows.push(if a.x <= b.x { [a, b] } else { [b, a] });
    }
    let mean_v = |r: &[ImagePoint; 2]| (r[0].y + r[1].y) / 2.0;
    if mean_v(&rows[0]) < mean_v(&rows[1]) {
        rows.swap(0, 1);
    }
    Some([rows[0][0], rows[0][1], rows[1][0], rows[1][1]])
}

struct Scorer<'a> {
    near: &'a [bool],
    width: usize,
    height: usize,
    step: f64,
}

impl Scorer<'_> {
    fn covered(&self, p: &ImagePoint) -> bool {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return false;
        }
        self.near[y as usize * self.width + x as usize]
    }

    /// Fraction of model-line samples landing on the mask, or `None` when the
    /// layout is not a proper perspective image of the court.
    fn score(&self, h: &Homography, model: &CourtModel) -> Option<f64> {
        let g = h.inverse_matrix();
        let w_sign = |x: f64, y: f64| g[(2, 0)] * x + g[(2, 1)] * y + g[(2, 2)];
        let signs: Vec<f64> = model.corners.iter().map(|c| w_sign(c.x, c.y)).collect();
        if !(signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0)) {
            return None;
        }
        let limit = 20.0 * (self.width as f64).hypot(self.height as f64);
        let (mut hits, mut total) = (0usize, 0usize);
        for (a, b) in &model.lines {
            let pa = h.apply_inverse(a.x, a.y).ok()?;
            let pb = h.apply_inverse(b.x, b.y).ok()?;
            let len = (pb - pa).norm();
            if !len.is_finite() || len > limit {
                return None;
            }
            let n = ((len / self.step).ceil() as usize).max(1);
            for k in 0..=n {
                let t = k as f64 / n as f64;
                let p = pa + (pb - pa) * t;
                total += 1;
                if self.covered(&p) {
                    hits += 1;
                }
            }
        }
        (total > 0).then(|| hits as f64 / total as f64)
    }
}

/// Exhaustive layout search over pairs of horizontal and vertical lines.
pub fn fit_court(
    partition: &LinePartition,
    model: &CourtModel,
    mask: &GrayImage,
    cfg: &FitConfig,
) -> Result<CourtDetection> {
    let (nh, nv) = (partition.horizontal.len(), partition.vertical.len());
    if nh < 2 || nv < 2 {
        return Err(Error::invalid(format!("need 2 horizontal and 2 vertical lines, got {nh} and {nv}")));
    }
    let near = dilate(mask, cfg.tolerance);
    let scorer =
        Scorer { near: &near, width: mask.width() as usize, height: mask.height() as usize, step: cfg.sample_step };
    let image_area = (mask.width() as f64) * (mask.height() as f64);

    let pairs = |n: usize| -> Vec<(usize, usize)> { (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect() };
    let candidates: Vec<((usize, usize), (usize, usize))> =
        pairs(nh).into_iter().flat_map(|hp| pairs(nv).into_iter().map(move |vp| (hp, vp))).collect();

    let best = candidates
        .par_iter()
        .enumerate()
        .filter_map(|(idx, &((h1, h2), (v1, v2)))| {
            let hs = [&partition.horizontal[h1], &partition.horizontal[h2]];
            let vs = [&partition.vertical[v1], &partition.vertical[v2]];
            let corners = order_corners(hs, vs)?;
            let quad = [corners[0], corners[1], corners[3], corners[2]];
            if cfg.prune_small && polygon_area(&quad).abs() < cfg.min_area_fraction * image_area {
                return None;
            }
            let h = homography_from_corners(&corners, model).ok()?;
            let score = scorer.score(&h, model)?;
            Some((score, idx, corners, h))
        })
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });

    let (score, _, corners, homography) =
        best.ok_or_else(|| Error::degenerate("no valid court layout among the candidates"))?;
    Ok(CourtDetection {
        corners,
        homography,
        score,
        success: score >= cfg.score_threshold,
        candidates: candidates.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMethod {
    Graph,
    Farin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub threshold: ThresholdConfig,
    pub hough: HoughConfig,
    pub fit: FitConfig,
    pub epsilon: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            threshold: ThresholdConfig::default(),
            hough: HoughConfig::default(),
            fit: FitConfig::default(),
            epsilon: 1e-2,
        }
    }
}

/// Threshold, extract lines, partition and fit. `Ok(None)` when there are
/// too few lines to form a layout.
pub fn detect_court(
    img: &RgbImage,
    model: &CourtModel,
    method: PartitionMethod,
    cfg: &DetectConfig,
) -> Result<Option<CourtDetection>> {
    let mask = threshold_white(img, &cfg.threshold);
    let lines = hough_lines(&mask, &cfg.hough);
    let partition = match method {
        PartitionMethod::Graph if lines.len() >= 2 => partition_lines(&lines, cfg.epsilon)?,
        PartitionMethod::Graph => return Ok(None),
        PartitionMethod::Farin => farin_partition(&lines).0,
    };
    if partition.horizontal.len() < 2 || partition.vertical.len() < 2 {
        return Ok(None);
    }
    match fit_court(&partition, model, &mask, &cfg.fit) {
        Ok(d) => Ok(Some(d)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn segments_cross(a: ImagePoint, b: ImagePoint, c: ImagePoint, d: ImagePoint) -> bool {
    let orient = |p: ImagePoint, q: ImagePoint, r: ImagePoint| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Polygon ring from corners in near-left, near-right, far-left, far-right order.
fn ring(q: &[ImagePoint; 4]) -> [ImagePoint; 4] {
    [q[0], q[1], q[3], q[2]]
}

fn triangulate(q: &[ImagePoint; 4]) -> [[ImagePoint; 3]; 2] {
    let side = |a: ImagePoint, b: ImagePoint, p: ImagePoint| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    // diagonal 0-2 is interior when 1 and 3 lie on opposite sides of it
    if side(q[0], q[2], q[1]) * side(q[0], q[2], q[3]) < 0.0 {
        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    } else {
        [[q[1], q[2], q[3]], [q[1], q[3], q[0]]]
    }
}

/// Sutherland-Hodgman clip of a convex polygon against a convex clip polygon.
fn clip_convex(subject: &[ImagePoint], clip: &[ImagePoint]) -> Vec<ImagePoint> {
    let ccw = polygon_area(clip) >= 0.0;
    let inside = |a: ImagePoint, b: ImagePoint, p: ImagePoint| {
        let c = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if ccw {
            c >= 0.0
        } else {
            c <= 0.0
        }
    };
    let intersect = |p: ImagePoint, q: ImagePoint, a: ImagePoint, b: ImagePoint| {
        let r = q - p;
        let s = b - a;
        let denom = r.x * s.y - r.y * s.x;
        let t = ((a.x - p.x) * s.y - (a.y - p.y) * s.x) / denom;
        p + r * t
    };
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(a, b, prev), inside(a, b, cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(intersect(prev, cur, a, b)),
                (false, true) => {
                    out.push(intersect(prev, cur, a, b));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

/// Intersection-over-union of two court quadrilaterals.
pub fn detection_iou(detected: &[ImagePoint; 4], truth: &[ImagePoint; 4]) -> Result<f64> {
    let a = ring(detected);
    let b = ring(truth);
    for q in [&a, &b] {
        if segments_cross(q[0], q[1], q[2], q[3]) || segments_cross(q[1], q[2], q[3], q[0]) {
            return Err(Error::invalid("quadrilateral is self-intersecting"));
        }
    }
    let area_a = polygon_area(&a).abs();
    let area_b = polygon_area(&b).abs();
    let mut inter = 0.0;
    for ta in triangulate(&a) {
        for tb in triangulate(&b) {
            let p = clip_convex(&ta, &tb);
            if p.len() >= 3 {
                inter += polygon_area(&p).abs();
            }
        }
    }
    let union = area_a + area_b - inter;
    if !(union > 0.0) {
        return Err(Error::invalid("quadrilaterals have zero area"));
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Render the court lines seen by `camera` as white on green.
pub fn render_court(
    camera: &CameraModel,
    model: &CourtModel,
    width: u32,
    height: u32,
    line_width: f64,
) -> Result<RgbImage> {
    let mut img = RgbImage::from_pixel(width, height, Rgb([40, 110, 70]));
    let half = line_width / 2.0;
    for (a, b) in &model.lines {
        let pa = camera.project(a)?;
        let pb = camera.project(b)?;
        if camera.depth(a) <= 0.0 || camera.depth(b) <= 0.0 {
            return Err(Error::degenerate("court line behind the camera"));
        }
        let d = pb - pa;
        let len2 = d.norm_squared().max(1e-12);
        let x0 = (pa.x.min(pb.x) - half - 1.0).floor().max(0.0) as u32;
        let x1 = (pa.x.max(pb.x) + half + 1.0).ceil().min(width as f64 - 1.0).max(-1.0);
        let y0 = (pa.y.min(pb.y) - half - 1.0).floor().max(0.0) as u32;
        let y1 = (pa.y.max(pb.y) + half + 1.0).ceil().min(height as f64 - 1.0).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=(y1 as u32) {
            for x in x0..=(x1 as u32) {
                let p = ImagePoint::new(x as f64, y as f64);
                let t = ((p - pa).dot(&d) / len2).clamp(0.0, 1.0);
                if (p - (pa + d * t)).norm() <= half {
                    img.put_pixel(x, y, Rgb([245, 245, 245]));
                }
            }
        }
    }
    Ok(img)
}
