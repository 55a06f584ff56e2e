use std::collections::HashMap;

use nalgebra::Vector2;

use super::EstimationError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub query: usize,
    pub target: usize,
    pub distance: f64,
}

/// Uniform hash grid with cell size equal to the search radius, so an exact
/// radius search only has to visit the 3x3 block around the query cell.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Vector2<f64>>,
    radius: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl NeighborIndex {
    pub fn new(points: Vec<Vector2<f64>>, radius: f64) -> Result<Self, EstimationError> {
        if points.is_empty() {
            return Err(EstimationError::EmptyTarget);
        }
        if !(radius > 0.0) {
            return Err(EstimationError::InvalidConfig("search radius must be positive"));
        }
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, radius)).or_default().push(i as u32);
        }
        Ok(Self { points, radius, cells })
    }

    fn key(p: &Vector2<f64>, radius: f64) -> (i64, i64) {
        ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64)
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point within the index radius; ties go to the lower index.
    pub fn nearest(&self, q: &Vector2<f64>) -> Option<(usize, f64)> {
        let (kx, ky) = Self::key(q, self.radius);
        let r2 = self.radius * self.radius;
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(ids) = self.cells.get(&(kx + dx, ky + dy)) else {
                    continue;
                };
                for &i in ids {
                    let d2 = (self.points[i as usize] - q).norm_squared();
                    if d2 <= r2 && best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && i < bi)) {
                        best = Some((d2, i));
                    }
                }
            }
        }
        best.map(|(d2, i)| (i as usize, d2.sqrt()))
    }
}

/// Nearest-neighbour pairs for every query point with a target within the
/// index radius.
pub fn associate(query: &[Vector2<f64>], target: &NeighborIndex) -> Vec<Correspondence> {
    query
        .iter()
        .enumerate()
        .filter_map(|(qi, q)| {
            target.nearest(q).map(|(ti, d)| Correspondence {
                query: qi,
                target: ti,
                distance: d,
            })
        })
        .collect()
}

/// Exhaustive O(nm) association with the same tie rule as [`associate`].
pub fn associate_brute_force(
    query: &[Vector2<f64>],
    target: &[Vector2<f64>],
    max_dist: f64,
) -> Result<Vec<Correspondence>, EstimationError> {
    if target.is_empty() {
        return Err(EstimationError::EmptyTarget);
    }
    let r2 = max_dist * max_dist;
    let mut out = Vec::new();
    for (qi, q) in query.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (ti, t) in target.iter().enumerate() {
            let d2 = (t - q).norm_squared();
            if d2 <= r2 && best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, ti));
            }
        }
        if let Some((d2, ti)) = best {
            out.push(Correspondence {
                query: qi,
                target: ti,
                distance: d2.sqrt(),
            });
        }
    }
    Ok(out)
}
