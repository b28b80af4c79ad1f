//! KITTI-style 3D detection metrics: rotated-box IoU, interpolated AP,
//! mean depth error, and oracle parameter substitution.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::depth_models::BBox2D;
use crate::scene_sim::{Box3D, DetectionSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no prediction-ground truth pairs passed the 2D IoU threshold")]
    NoMatches,
    #[error("unknown oracle mask '{0}' (use letters x y z l w h t)")]
    UnknownMask(String),
}

/// Center distance below which an oracle may substitute ground truth.
pub const ORACLE_MATCH_DISTANCE: f64 = 4.0;
/// 2D IoU a pair must exceed to count towards the mean depth error.
pub const MDE_IOU2D_THRESHOLD: f64 = 0.7;

const AREA_EPS: f64 = 1e-12;

pub fn iou2d(a: &BBox2D, b: &BBox2D) -> f64 {
    let w = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let h = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= AREA_EPS {
        0.0
    } else {
        inter / union
    }
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

fn counter_clockwise(mut poly: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Sutherland-Hodgman clip of a convex polygon by a convex clip polygon,
/// both counter-clockwise.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (ax, ay) = clip[i];
        let (bx, by) = clip[(i + 1) % clip.len()];
        let side = |(px, py): (f64, f64)| (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Area of the intersection of the two boxes' ground footprints.
pub fn bev_intersection(a: &Box3D, b: &Box3D) -> f64 {
    let pa = counter_clockwise(a.footprint().to_vec());
    let pb = counter_clockwise(b.footprint().to_vec());
    let clipped = clip_convex(&pa, &pb);
    if clipped.len() < 3 {
        0.0
    } else {
        signed_area(&clipped).abs()
    }
}

pub fn vertical_overlap(a: &Box3D, b: &Box3D) -> f64 {
    let top = (a.y - a.h / 2.0).max(b.y - b.h / 2.0);
    let bottom = (a.y + a.h / 2.0).min(b.y + b.h / 2.0);
    (bottom - top).max(0.0)
}

pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection(a, b) * vertical_overlap(a, b);
    let union = a.volume() + b.volume() - inter;
    if union <= AREA_EPS {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou2d: f64,
    pub iou3d: f64,
    pub center_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truth: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchCriterion {
    Iou3d(f64),
    Iou2d(f64),
}

/// Prediction indices sorted by descending score; ties keep input order.
fn score_order(det: &DetectionSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..det.predictions.len()).collect();
    order.sort_by(|&i, &j| det.predictions[j].box3d.score.total_cmp(&det.predictions[i].box3d.score));
    order
}

/// Greedy matching in descending score order: each prediction takes the
/// unmatched ground truth with the highest overlap strictly above the
/// threshold.
pub fn match_frame(det: &DetectionSet, criterion: MatchCriterion) -> MatchResult {
    let mut taken = vec![false; det.ground_truth.len()];
    let mut result = MatchResult::default();
    for p in score_order(det) {
        let pred = &det.predictions[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in det.ground_truth.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let overlap = match criterion {
                MatchCriterion::Iou3d(_) => iou3d(&pred.box3d, &gt.box3d),
                MatchCriterion::Iou2d(_) => iou2d(&pred.projected.bbox, &gt.projected.bbox),
            };
            let threshold = match criterion {
                MatchCriterion::Iou3d(t) | MatchCriterion::Iou2d(t) => t,
            };
            if overlap > threshold && best.is_none_or(|(_, o)| overlap > o) {
                best = Some((g, overlap));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                let gt = &det.ground_truth[g];
                result.pairs.push(MatchPair {
                    prediction: p,
                    ground_truth: g,
                    iou2d: iou2d(&pred.projected.bbox, &gt.projected.bbox),
                    iou3d: iou3d(&pred.box3d, &gt.box3d),
                    center_distance: (pred.box3d.center() - gt.box3d.center()).norm(),
                });
            }
            None => result.unmatched_predictions.push(p),
        }
    }
    result.unmatched_ground_truth = (0..taken.len()).filter(|&g| !taken[g]).collect();
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApInterpolation {
    /// Recall points k/40, k = 1..40.
    #[default]
    R40,
    /// Recall points 0, 0.1, ..., 1.
    R11,
}

impl ApInterpolation {
    fn recall_points(self) -> Vec<f64> {
        match self {
            ApInterpolation::R40 => (1..=40).map(|k| k as f64 / 40.0).collect(),
            ApInterpolation::R11 => (0..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

/// Interpolated average precision at a 3D IoU threshold, in percent.
pub fn average_precision(dets: &[DetectionSet], iou_threshold: f64) -> f64 {
    average_precision_with(dets, iou_threshold, ApInterpolation::R40)
}

pub fn average_precision_with(dets: &[DetectionSet], iou_threshold: f64, interp: ApInterpolation) -> f64 {
    let total_gt: usize = dets.iter().map(|d| d.ground_truth.len()).sum();
    if total_gt == 0 {
        return 0.0;
    }
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for det in dets {
        let m = match_frame(det, MatchCriterion::Iou3d(iou_threshold));
        let mut tp = vec![false; det.predictions.len()];
        for pair in &m.pairs {
            tp[pair.prediction] = true;
        }
        ranked.extend(det.predictions.iter().zip(tp).map(|(p, t)| (p.box3d.score, t)));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (k, (_, hit)) in ranked.iter().enumerate() {
        tp += usize::from(*hit);
        curve.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // Interpolated precision: best precision at any recall at least r.
    let mut envelope = vec![0.0; curve.len()];
    let mut best = 0.0f64;
    for i in (0..curve.len()).rev() {
        best = best.max(curve[i].1);
        envelope[i] = best;
    }
    let points = interp.recall_points();
    let sum: f64 = points
        .iter()
        .map(|&r| {
            curve
                .iter()
                .position(|&(recall, _)| recall >= r - 1e-12)
                .map_or(0.0, |i| envelope[i])
        })
        .sum();
    100.0 * sum / points.len() as f64
}

/// Signed depth errors `z_pred - z_gt` of every pair with 2D IoU above 0.7.
pub fn depth_errors(dets: &[DetectionSet]) -> Vec<f64> {
    depth_error_pairs(dets).into_iter().map(|(_, _, e)| e).collect()
}

/// `(frame index, pair, signed depth error)` for every 2D-matched pair.
pub fn depth_error_pairs(dets: &[DetectionSet]) -> Vec<(usize, MatchPair, f64)> {
    let mut out = Vec::new();
    for (i, det) in dets.iter().enumerate() {
        for pair in match_frame(det, MatchCriterion::Iou2d(MDE_IOU2D_THRESHOLD)).pairs {
            let e = det.predictions[pair.prediction].box3d.z - det.ground_truth[pair.ground_truth].box3d.z;
            out.push((i, pair, e));
        }
    }
    out
}

/// Mean signed depth error over all 2D-matched pairs, averaged per box.
pub fn mean_depth_error(dets: &[DetectionSet]) -> Result<f64, EvalError> {
    let errors = depth_errors(dets);
    crate::stats::mean(&errors).ok_or(EvalError::NoMatches)
}

/// Which box parameters an oracle replaces with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct OracleSpec {
    pub x: bool,
    pub y: bool,
    pub z: bool,
    pub l: bool,
    pub w: bool,
    pub h: bool,
    pub yaw: bool,
}

impl OracleSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply(&self, pred: &mut Box3D, gt: &Box3D) {
        let fields = [
            (self.x, &mut pred.x, gt.x),
            (self.y, &mut pred.y, gt.y),
            (self.z, &mut pred.z, gt.z),
            (self.l, &mut pred.l, gt.l),
            (self.w, &mut pred.w, gt.w),
            (self.h, &mut pred.h, gt.h),
            (self.yaw, &mut pred.yaw, gt.yaw),
        ];
        for (on, slot, value) in fields {
            if on {
                *slot = value;
            }
        }
    }
}

impl FromStr for OracleSpec {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = s.trim();
        let lowered = raw.to_ascii_lowercase();
        let mut spec = OracleSpec::default();
        if matches!(lowered.as_str(), "" | "none" | "baseline") {
            return Ok(spec);
        }
        let letters = lowered.replace("theta", "t").replace("yaw", "t");
        for c in letters.chars().filter(|c| !matches!(c, ',' | '+' | ' ' | '/')) {
            match c {
                'x' => spec.x = true,
                'y' => spec.y = true,
                'z' => spec.z = true,
                'l' => spec.l = true,
                'w' => spec.w = true,
                'h' => spec.h = true,
                't' => spec.yaw = true,
                _ => return Err(EvalError::UnknownMask(raw.to_string())),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        for (on, c) in [
            (self.x, 'x'),
            (self.y, 'y'),
            (self.z, 'z'),
            (self.l, 'l'),
            (self.w, 'w'),
            (self.h, 'h'),
            (self.yaw, 't'),
        ] {
            if on {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub detections: DetectionSet,
    /// Per prediction: the ground truth it was matched to, if any.
    pub matched: Vec<Option<usize>>,
}

/// Replaces the masked parameters of each prediction with those of the
/// nearest ground truth within 4 m center distance. Unmatched predictions
/// are left unchanged.
pub fn oracle_substitute(det: &DetectionSet, spec: &OracleSpec) -> OracleOutcome {
    let mut out = det.clone();
    let mut matched = Vec::with_capacity(det.predictions.len());
    for pred in &mut out.predictions {
        let nearest = det
            .ground_truth
            .iter()
            .enumerate()
            .map(|(g, gt)| (g, (pred.box3d.center() - gt.box3d.center()).norm()))
            .filter(|&(_, d)| d < ORACLE_MATCH_DISTANCE)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((g, _)) = nearest {
            spec.apply(&mut pred.box3d, &det.ground_truth[g].box3d);
        }
        matched.push(nearest.map(|(g, _)| g));
    }
    OracleOutcome { detections: out, matched }
}

/// Per-box mean depth error restricted to predictions the oracle matched.
pub fn matched_depth_error(outcomes: &[OracleOutcome]) -> Result<f64, EvalError> {
    let dets: Vec<DetectionSet> = outcomes.iter().map(|o| o.detections.clone()).collect();
    let errors: Vec<f64> = depth_error_pairs(&dets)
        .into_iter()
        .filter(|(i, pair, _)| outcomes[*i].matched[pair.prediction].is_some())
        .map(|(_, _, e)| e)
        .collect();
    crate::stats::mean(&errors).ok_or(EvalError::NoMatches)
}

/// Metrics of one evaluated set of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Height change the frames were observed at, when known.
    pub delta_h: Option<f64>,
    pub ap3d_70: f64,
    pub ap3d_50: f64,
    pub mde: Option<f64>,
    /// Ground truths paired with a prediction at 2D IoU above 0.7.
    pub matched: usize,
    /// Ground truths without such a pair.
    pub missed: usize,
}

pub fn evaluate(dets: &[DetectionSet], delta_h: Option<f64>) -> EvalResult {
    let pairs = depth_error_pairs(dets);
    let total_gt: usize = dets.iter().map(|d| d.ground_truth.len()).sum();
    let errors: Vec<f64> = pairs.iter().map(|(_, _, e)| *e).collect();
    EvalResult {
        delta_h,
        ap3d_70: average_precision(dets, 0.7),
        ap3d_50: average_precision(dets, 0.5),
        mde: crate::stats::mean(&errors),
        matched: pairs.len(),
        missed: total_gt - pairs.len(),
    }
}
