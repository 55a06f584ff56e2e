//! Binary graph archive.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    b"RTRG"
//! version  u32
//! metadata u32 count, then (u32 len, utf8 key, u32 len, utf8 value) per entry
//! vertices u32 count, then per vertex:
//!          u32 id, f64 x, f64 y, f64 theta, u32 n, n * (f64 x, f64 y)
//! edges    u32 count, then per edge: u32 from, u32 to, u8 kind, f64 x, f64 y, f64 theta
//! path     u32 count, u32 vertex ids; u32 count, (f64 x, f64 y, f64 theta) poses
//! trailer  32-byte SHA-256 of every preceding byte
//! ```

use std::path::Path;

use nalgebra::Vector2;
use sha2::{Digest, Sha256};

use super::{EdgeKind, GraphError, PoseGraph, PoseGraphEdge, Submap, TeachPath};
use crate::se2::Pose2;

pub const ARCHIVE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RTRG";
const DIGEST_LEN: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("archive section exceeds u32 range"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn pose(&mut self, p: &Pose2) {
        self.f64(p.x);
        self.f64(p.y);
        self.f64(p.theta);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(GraphError::Malformed("unexpected end of data"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, GraphError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f64(&mut self) -> Result<f64, GraphError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    /// Element count, bounded by the bytes left so corrupt counts cannot
    /// trigger huge allocations.
    fn count(&mut self, min_elem_size: usize) -> Result<usize, GraphError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem_size) > self.buf.len() - self.pos {
            return Err(GraphError::Malformed("count exceeds remaining data"));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, GraphError> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| GraphError::Malformed("invalid utf-8"))
    }
    fn pose(&mut self) -> Result<Pose2, GraphError> {
        // Stored poses are already normalized; keep the bits exactly.
        Ok(Pose2 {
            x: self.f64()?,
            y: self.f64()?,
            theta: self.f64()?,
        })
    }
}

pub fn encode_graph(graph: &PoseGraph) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(ARCHIVE_VERSION);
    w.len(graph.metadata.len());
    for (k, v) in &graph.metadata {
        w.str(k);
        w.str(v);
    }
    w.len(graph.vertices.len());
    for v in &graph.vertices {
        w.u32(v.vertex_id);
        w.pose(&v.keyframe);
        w.len(v.points.len());
        for p in &v.points {
            w.f64(p.x);
            w.f64(p.y);
        }
    }
    w.len(graph.edges.len());
    for e in &graph.edges {
        w.u32(e.from);
        w.u32(e.to);
        w.u8(match e.kind {
            EdgeKind::TeachOdometry => 0,
            EdgeKind::RepeatLocalization => 1,
        });
        w.pose(&e.relative);
    }
    w.len(graph.path.vertex_ids.len());
    for id in &graph.path.vertex_ids {
        w.u32(*id);
    }
    w.len(graph.path.poses.len());
    for p in &graph.path.poses {
        w.pose(p);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

pub fn decode_graph(bytes: &[u8]) -> Result<PoseGraph, GraphError> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(GraphError::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(GraphError::Checksum);
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(GraphError::Malformed("bad magic"));
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(GraphError::Version {
            found: version,
            expected: ARCHIVE_VERSION,
        });
    }
    let mut graph = PoseGraph::default();
    for _ in 0..r.count(8)? {
        let k = r.str()?;
        let v = r.str()?;
        graph.metadata.insert(k, v);
    }
    for i in 0..r.count(32)? {
        let vertex_id = r.u32()?;
        if vertex_id as usize != i {
            return Err(GraphError::Malformed("vertex ids must be sequential"));
        }
        let keyframe = r.pose()?;
        let n = r.count(16)?;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            points.push(Vector2::new(r.f64()?, r.f64()?));
        }
        graph.vertices.push(Submap {
            vertex_id,
            keyframe,
            points,
        });
    }
    for _ in 0..r.count(33)? {
        let from = r.u32()?;
        let to = r.u32()?;
        let kind = match r.u8()? {
            0 => EdgeKind::TeachOdometry,
            1 => EdgeKind::RepeatLocalization,
            _ => return Err(GraphError::Malformed("unknown edge kind")),
        };
        let relative = r.pose()?;
        graph.add_edge(PoseGraphEdge { from, to, relative, kind })?;
    }
    let mut path = TeachPath::default();
    for _ in 0..r.count(4)? {
        path.vertex_ids.push(r.u32()?);
    }
    for _ in 0..r.count(24)? {
        path.poses.push(r.pose()?);
    }
    graph.path = path;
    if r.pos != body.len() {
        return Err(GraphError::Malformed("trailing bytes"));
    }
    Ok(graph)
}

pub fn save_graph(graph: &PoseGraph, path: &Path) -> Result<(), GraphError> {
    std::fs::write(path, encode_graph(graph)).map_err(|e| GraphError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_graph(path: &Path) -> Result<PoseGraph, GraphError> {
    let bytes = std::fs::read(path).map_err(|e| GraphError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_graph(&bytes)
}
