//! Teach-path pose graph: a chain of keyframe vertices, each holding a
//! merged submap, linked by relative odometry edges.

mod archive;

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Polyline;
use crate::se2::{exp, log, Pose2};
use crate::voxel::voxel_downsample;

pub use archive::{decode_graph, encode_graph, load_graph, save_graph, ARCHIVE_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("unsupported archive version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("archive checksum mismatch")]
    Checksum,
    #[error("malformed archive: {0}")]
    Malformed(&'static str),
    #[error("edge references unknown vertex {0}")]
    UnknownVertex(u32),
}

/// Vertex creation thresholds on the motion since the last vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphThresholds {
    pub d_pos: f64,
    pub d_theta: f64,
    /// Submap voxel size.
    pub voxel: f64,
}

impl Default for GraphThresholds {
    fn default() -> Self {
        Self {
            d_pos: 2.0,
            d_theta: 0.3,
            voxel: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submap {
    pub vertex_id: u32,
    /// Keyframe pose in the teach odometry frame.
    pub keyframe: Pose2,
    /// Merged points in the keyframe frame.
    pub points: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    TeachOdometry,
    RepeatLocalization,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseGraphEdge {
    pub from: u32,
    pub to: u32,
    /// `from^-1 * to`.
    pub relative: Pose2,
    pub kind: EdgeKind,
}

/// Densified teach trajectory in the teach odometry frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TeachPath {
    pub vertex_ids: Vec<u32>,
    pub poses: Vec<Pose2>,
}

impl TeachPath {
    pub const MAX_SPACING: f64 = 0.1;

    /// Densifies a knot trajectory by flowing along the constant twist
    /// between consecutive knots, so curved stretches stay curved.
    pub fn densify(knots: &[Pose2]) -> Vec<Pose2> {
        let mut out: Vec<Pose2> = Vec::with_capacity(knots.len() * 3);
        for (i, w) in knots.windows(2).enumerate() {
            if i == 0 {
                out.push(w[0]);
            }
            let rel = w[0].between(&w[1]);
            let Ok(xi) = log(&rel) else {
                out.push(w[1]);
                continue;
            };
            // Arc length of the constant-twist flow equals the twist's linear norm.
            let n = ((xi.vx.hypot(xi.vy) / Self::MAX_SPACING) * (1.0 + 1e-9)).ceil().max(1.0) as usize;
            for k in 1..n {
                out.push(w[0].compose(&exp(&xi.scaled(k as f64 / n as f64))));
            }
            out.push(w[1]);
        }
        if knots.len() == 1 {
            out.push(knots[0]);
        }
        out
    }

    pub fn polyline(&self) -> Polyline {
        Polyline::new(self.poses.iter().map(|p| p.translation()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseGraph {
    pub vertices: Vec<Submap>,
    pub edges: Vec<PoseGraphEdge>,
    pub path: TeachPath,
    pub metadata: BTreeMap<String, String>,
}

impl PoseGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: u32) -> Option<&Submap> {
        self.vertices.get(id as usize)
    }

    pub fn add_edge(&mut self, edge: PoseGraphEdge) -> Result<(), GraphError> {
        for id in [edge.from, edge.to] {
            if self.vertex(id).is_none() {
                return Err(GraphError::UnknownVertex(id));
            }
        }
        self.edges.push(edge);
        Ok(())
    }

    pub fn teach_edges(&self) -> impl Iterator<Item = &PoseGraphEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::TeachOdometry)
    }

    /// Keyframe poses recovered by compounding teach edges from vertex 0.
    pub fn compounded_poses(&self) -> Vec<Pose2> {
        let Some(first) = self.vertices.first() else {
            return Vec::new();
        };
        let mut out = vec![first.keyframe];
        for e in self.teach_edges() {
            let last = *out.last().expect("non-empty");
            out.push(last.compose(&e.relative));
        }
        out
    }

    pub fn path_polyline(&self) -> Polyline {
        self.path.polyline()
    }
}

/// Whether the motion from the last vertex warrants a new one.
pub fn maybe_add_vertex(current: &Pose2, last_vertex: &Pose2, thresholds: &GraphThresholds) -> bool {
    let rel = last_vertex.between(current);
    rel.translation().norm() > thresholds.d_pos || rel.theta.abs() > thresholds.d_theta
}

/// Transforms each cloud by its pose in the keyframe frame and keeps one
/// centroid per occupied voxel.
pub fn merge_into_submap(clouds: &[(Vec<Vector2<f64>>, Pose2)], voxel: f64) -> Vec<Vector2<f64>> {
    let all: Vec<Vector2<f64>> = clouds
        .iter()
        .flat_map(|(pts, pose)| pts.iter().map(move |p| pose.transform_point(*p)))
        .collect();
    voxel_downsample(&all, voxel)
}

/// Among the current vertex and its chain neighbours within two hops, the
/// one whose keyframe is nearest in translation; ties go to the lower id.
pub fn closest_vertex(estimate: &Pose2, graph: &PoseGraph, current: u32) -> Option<u32> {
    if graph.is_empty() {
        return None;
    }
    let last = graph.len() as u32 - 1;
    let current = current.min(last);
    let lo = current.saturating_sub(2);
    let hi = (current + 2).min(last);
    let mut best: Option<(f64, u32)> = None;
    for id in lo..=hi {
        let d = graph.vertices[id as usize].keyframe.distance_to(estimate);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Incremental teach-phase graph construction from odometry knots.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    thresholds: GraphThresholds,
    graph: PoseGraph,
    /// Scans since the newest vertex: points in the robot frame and the
    /// robot pose in the odometry frame.
    pending: Vec<(Vec<Vector2<f64>>, Pose2)>,
    knots: Vec<Pose2>,
}

impl GraphBuilder {
    pub fn new(thresholds: GraphThresholds) -> Self {
        Self {
            thresholds,
            graph: PoseGraph::default(),
            pending: Vec::new(),
            knots: Vec::new(),
        }
    }

    fn flush(&mut self) {
        if let Some(v) = self.graph.vertices.last_mut() {
            let kf_inv = v.keyframe.inverse();
            let clouds: Vec<_> = self
                .pending
                .drain(..)
                .map(|(pts, pose)| (pts, kf_inv.compose(&pose)))
                .collect();
            v.points = merge_into_submap(&clouds, self.thresholds.voxel);
        }
    }

    fn open_vertex(&mut self, pose: Pose2) {
        self.flush();
        let id = self.graph.vertices.len() as u32;
        if let Some(prev) = self.graph.vertices.last() {
            self.graph.edges.push(PoseGraphEdge {
                from: id - 1,
                to: id,
                relative: prev.keyframe.between(&pose),
                kind: EdgeKind::TeachOdometry,
            });
        }
        self.graph.vertices.push(Submap {
            vertex_id: id,
            keyframe: pose,
            points: Vec::new(),
        });
        self.graph.path.vertex_ids.push(id);
    }

    /// Adds one scan: `pose` is the robot pose at the knot, `points` the
    /// motion-compensated cloud in the robot frame.
    pub fn push_scan(&mut self, pose: Pose2, points: Vec<Vector2<f64>>) {
        let open = match self.graph.vertices.last() {
            None => true,
            Some(v) => maybe_add_vertex(&pose, &v.keyframe, &self.thresholds),
        };
        if open {
            self.open_vertex(pose);
        }
        self.pending.push((points, pose));
        self.knots.push(pose);
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.len()
    }

    /// Closes the teach: the final knot becomes a vertex unless it already is.
    pub fn finish(mut self) -> PoseGraph {
        if let (Some(&last_knot), Some(v)) = (self.knots.last(), self.graph.vertices.last()) {
            if v.keyframe != last_knot {
                let last_scan = self.pending.pop();
                self.open_vertex(last_knot);
                if let Some(scan) = last_scan {
                    self.pending.push(scan);
                }
            }
        }
        self.flush();
        self.graph.path.poses = TeachPath::densify(&self.knots);
        self.graph
    }
}
