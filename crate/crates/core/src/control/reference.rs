use nalgebra::Vector2;

use super::{ControlError, MpcConfig};
use crate::geometry::Polyline;
use crate::se2::{normalize_angle, Pose2};

/// Teach poses prepared for reference generation.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    poses: Vec<Pose2>,
    line: Polyline,
}

impl ReferencePath {
    /// Consecutive poses at the same position are collapsed.
    pub fn new(poses: &[Pose2]) -> Result<Self, ControlError> {
        let mut kept: Vec<Pose2> = Vec::with_capacity(poses.len());
        for p in poses {
            if kept.last().is_none_or(|q| q.translation() != p.translation()) {
                kept.push(*p);
            }
        }
        if kept.len() < 2 {
            return Err(ControlError::EmptyPath);
        }
        let line = Polyline::new(kept.iter().map(|p| p.translation()));
        Ok(Self { poses: kept, line })
    }

    pub fn polyline(&self) -> &Polyline {
        &self.line
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    pub fn length(&self) -> f64 {
        self.line.length()
    }

    /// Pose at arc length `s` with the heading interpolated between the
    /// bracketing teach poses; returns the segment index too.
    pub fn pose_at(&self, s: f64) -> (Pose2, usize) {
        let s = s.clamp(0.0, self.length());
        let i = self.line.segment_at(s);
        let (a0, a1) = (self.line.arc_at(i), self.line.arc_at(i + 1));
        let u = ((s - a0) / (a1 - a0)).clamp(0.0, 1.0);
        let (p0, p1) = (self.poses[i], self.poses[i + 1]);
        let theta = p0.theta + u * normalize_angle(p1.theta - p0.theta);
        let pos = self.line.point_at(s);
        (Pose2::new(pos.x, pos.y, theta), i)
    }

    /// Arc length of the closest point, searched within `[s_min, s_max]`.
    pub fn project(&self, p: Vector2<f64>, s_min: f64, s_max: f64) -> f64 {
        self.line
            .project_within(p, s_min, s_max)
            .map(|q| q.arc_length)
            .expect("path has at least one segment")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    /// Arc length of the robot's projection.
    pub progress: f64,
    /// Path segment at the robot's projection.
    pub start_segment: (Vector2<f64>, Vector2<f64>),
    pub poses: Vec<Pose2>,
    /// Path segment bracketing each reference.
    pub segments: Vec<(Vector2<f64>, Vector2<f64>)>,
}

/// Projects the robot onto the path and marches `target_speed * dt` per
/// step, clamping at the path end.
///
/// `progress_hint` restricts the projection to a window around the previous
/// progress, which keeps the projection from jumping where a closed loop
/// passes by its own start.
pub fn build_reference(
    path: &ReferencePath,
    localized: &Pose2,
    progress_hint: Option<f64>,
    cfg: &MpcConfig,
) -> ReferenceWindow {
    let (lo, hi) = match progress_hint {
        Some(s) => (s - 2.0, s + 5.0),
        None => (0.0, f64::INFINITY),
    };
    let progress = path.project(localized.translation(), lo, hi);
    let seg = |i: usize| path.line.segment(i);
    let start_segment = seg(path.pose_at(progress).1);
    let (poses, segments) = (1..=cfg.horizon)
        .map(|k| {
            let (pose, i) = path.pose_at(progress + k as f64 * cfg.target_speed * cfg.dt);
            (pose, seg(i))
        })
        .unzip();
    ReferenceWindow {
        progress,
        start_segment,
        poses,
        segments,
    }
}
