//! KITTI object label lines.
//!
//! `type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]`
//!
//! Locations are bottom centers in the observing camera's frame. Every real
//! number is written with two decimals, so reading a written file and writing
//! it again reproduces it byte for byte.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::depth_models::{BBox2D, ProjectedBox};
use crate::geometry::{Camera, CameraIntrinsics};
use crate::scene_sim::{Box3D, Detection};

#[derive(Debug, Error)]
pub enum KittiError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabel {
    pub kind: String,
    pub truncated: f64,
    pub occluded: u8,
    /// Observation angle.
    pub alpha: f64,
    pub bbox: BBox2D,
    /// Height, width, length.
    pub dimensions: [f64; 3],
    /// Bottom center in camera coordinates.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let wrapped = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if wrapped <= -std::f64::consts::PI {
        wrapped + two_pi
    } else {
        wrapped
    }
}

/// Fraction of the box lying outside the image.
pub fn truncation(bbox: &BBox2D, intrinsics: &CameraIntrinsics) -> f64 {
    let area = bbox.area();
    if area <= 0.0 {
        return 0.0;
    }
    let w = (bbox.right.min(intrinsics.image_width) - bbox.left.max(0.0)).max(0.0);
    let h = (bbox.bottom.min(intrinsics.image_height) - bbox.top.max(0.0)).max(0.0);
    (1.0 - w * h / area).clamp(0.0, 1.0)
}

impl KittiLabel {
    /// Label of a detection given in world coordinates, as seen by `cam`.
    pub fn from_detection(det: &Detection, cam: &Camera, with_score: bool) -> Self {
        let b = &det.box3d;
        let c = cam.to_camera_frame(&b.center());
        Self {
            kind: b.class.clone(),
            truncated: truncation(&det.projected.bbox, &cam.intrinsics),
            occluded: 0,
            alpha: wrap_angle(b.yaw - c.x.atan2(c.z)),
            bbox: det.projected.bbox,
            dimensions: [b.h, b.w, b.l],
            location: [c.x, c.y + b.h / 2.0, c.z],
            rotation_y: wrap_angle(b.yaw),
            score: with_score.then_some(b.score),
        }
    }

    /// Box in the camera frame of the label.
    pub fn to_box3d(&self) -> Box3D {
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        Box3D {
            x,
            y: y - h / 2.0,
            z,
            l,
            w,
            h,
            yaw: self.rotation_y,
            class: self.kind.clone(),
            score: self.score.unwrap_or(1.0),
        }
    }

    pub fn to_detection(&self) -> Detection {
        let (u, v) = self.bbox.center();
        Detection {
            box3d: self.to_box3d(),
            projected: ProjectedBox::new(u, v, self.bbox, self.truncated > 0.0),
            source: None,
        }
    }
}

impl fmt::Display for KittiLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.bbox;
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        write!(
            f,
            "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
            self.kind, self.truncated, self.occluded, self.alpha, b.left, b.top, b.right, b.bottom, h, w, l, x, y, z,
            self.rotation_y
        )?;
        if let Some(s) = self.score {
            write!(f, " {s:.2}")?;
        }
        Ok(())
    }
}

impl FromStr for KittiLabel {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(format!("expected 15 or 16 fields, found {}", fields.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("field {} ('{}') is not a number", i + 1, fields[i]))
        };
        let (left, top, right, bottom) = (num(4)?, num(5)?, num(6)?, num(7)?);
        if left > right || top > bottom {
            return Err(format!("bounding box {left} {top} {right} {bottom} is not well ordered"));
        }
        let occluded = fields[2].parse::<u8>().map_err(|_| format!("field 3 ('{}') is not an integer", fields[2]))?;
        Ok(Self {
            kind: fields[0].to_string(),
            truncated: num(1)?,
            occluded,
            alpha: num(3)?,
            bbox: BBox2D::new(left, top, right, bottom),
            dimensions: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        })
    }
}

pub fn parse_labels(text: &str) -> Result<Vec<KittiLabel>, KittiError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.parse().map_err(|message| KittiError::Parse { line: i + 1, message }))
        .collect()
}

pub fn format_labels(labels: &[KittiLabel]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn read_label_file(path: &Path) -> Result<Vec<KittiLabel>, KittiError> {
    let text = fs::read_to_string(path).map_err(|source| KittiError::Io { path: path.display().to_string(), source })?;
    parse_labels(&text).map_err(|e| match e {
        KittiError::Parse { line, message } => {
            KittiError::Parse { line, message: format!("{}: {message}", path.display()) }
        }
        other => other,
    })
}

pub fn write_label_file(path: &Path, labels: &[KittiLabel]) -> Result<(), KittiError> {
    fs::write(path, format_labels(labels)).map_err(|source| KittiError::Io { path: path.display().to_string(), source })
}
