//! Voxel-grid downsampling shared by the sliding odometry map and submaps.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector2;

pub type VoxelKey = (i64, i64);

pub fn voxel_key(p: &Vector2<f64>, size: f64) -> VoxelKey {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
}

/// Centroid of the points falling in each occupied voxel, ordered by voxel
/// key so the output is independent of input order up to rounding.
pub fn voxel_downsample(points: &[Vector2<f64>], size: f64) -> Vec<Vector2<f64>> {
    assert!(size > 0.0, "voxel size must be positive");
    let mut cells: BTreeMap<VoxelKey, (Vector2<f64>, usize)> = BTreeMap::new();
    for p in points {
        let e = cells.entry(voxel_key(p, size)).or_insert((Vector2::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    cells.into_values().map(|(sum, n)| sum / n as f64).collect()
}

/// Greedy thinning: keeps points in order, dropping any point closer than
/// `min_spacing` to an already kept one.
pub fn thin(points: &[Vector2<f64>], min_spacing: f64) -> Vec<Vector2<f64>> {
    assert!(min_spacing > 0.0, "spacing must be positive");
    let mut grid: HashMap<VoxelKey, Vec<usize>> = HashMap::new();
    let mut kept: Vec<Vector2<f64>> = Vec::with_capacity(points.len());
    let r2 = min_spacing * min_spacing;
    for p in points {
        let (kx, ky) = voxel_key(p, min_spacing);
        let crowded = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                grid.get(&(kx + dx, ky + dy))
                    .is_some_and(|ids| ids.iter().any(|&i| (kept[i] - p).norm_squared() < r2))
            })
        });
        if !crowded {
            grid.entry((kx, ky)).or_default().push(kept.len());
            kept.push(*p);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_per_voxel() {
        let pts = [Vector2::new(0.05, 0.05), Vector2::new(0.15, 0.15), Vector2::new(0.5, 0.5)];
        let out = voxel_downsample(&pts, 0.2);
        assert_eq!(out.len(), 2);
        assert!((out[0] - Vector2::new(0.1, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn thinning_respects_spacing() {
        let pts: Vec<_> = (0..100).map(|i| Vector2::new(i as f64 * 0.03, 0.0)).collect();
        let out = thin(&pts, 0.1);
        for (i, a) in out.iter().enumerate() {
            for b in &out[i + 1..] {
                assert!((a - b).norm() >= 0.1);
            }
        }
        assert_eq!(out.len(), 25);
    }
}
