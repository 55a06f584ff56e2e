//! Radar point extraction: per-azimuth BFAR thresholding, contiguous-run
//! centroid peaks and polar to Cartesian conversion.

use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("row of {len} cells is shorter than the {required} cells the BFAR window needs")]
    RowTooShort { len: usize, required: usize },
    #[error("invalid BFAR parameters: {0}")]
    InvalidParams(&'static str),
    #[error("mask and row lengths differ ({mask} vs {row})")]
    LengthMismatch { mask: usize, row: usize },
}

/// One radar rotation as an azimuth x range-bin power grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarScan {
    /// Row-major `azimuth_count * range_bins` power values.
    pub power: Vec<f32>,
    pub range_bins: usize,
    /// Azimuth angles in the sensor frame, strictly increasing over `[0, 2pi)`.
    pub azimuth_angles: Vec<f64>,
    pub azimuth_timestamps: Vec<f64>,
    pub range_resolution: f64,
}

impl PolarScan {
    pub fn azimuth_count(&self) -> usize {
        self.azimuth_angles.len()
    }

    pub fn row(&self, azimuth: usize) -> &[f32] {
        &self.power[azimuth * self.range_bins..(azimuth + 1) * self.range_bins]
    }

    pub fn row_mut(&mut self, azimuth: usize) -> &mut [f32] {
        let bins = self.range_bins;
        &mut self.power[azimuth * bins..(azimuth + 1) * bins]
    }

    /// Timestamp of the middle azimuth, where the scan's state knot lives.
    pub fn mid_timestamp(&self) -> f64 {
        self.azimuth_timestamps[self.azimuth_count() / 2]
    }

    pub fn start_timestamp(&self) -> f64 {
        self.azimuth_timestamps[0]
    }

    pub fn max_range(&self) -> f64 {
        self.range_bins as f64 * self.range_resolution
    }

    /// Checks grid dimensions and the ordering of angles and timestamps.
    pub fn is_consistent(&self) -> bool {
        let n = self.azimuth_count();
        n > 0
            && self.azimuth_timestamps.len() == n
            && self.power.len() == n * self.range_bins
            && self.azimuth_angles.windows(2).all(|w| w[0] < w[1])
            && self.azimuth_timestamps.windows(2).all(|w| w[0] < w[1])
            && self.azimuth_angles[0] >= 0.0
            && self.azimuth_angles[n - 1] < std::f64::consts::TAU
    }
}

/// Threshold settings for the per-azimuth detector: a cell fires when its
/// power exceeds `scale_a * Z + offset_b`, with `Z` the mean of the training
/// cells on both sides (outside the guard band).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfarParams {
    pub window: usize,
    pub guard: usize,
    pub scale_a: f64,
    pub offset_b: f64,
    pub min_range_bin: usize,
}

impl Default for BfarParams {
    fn default() -> Self {
        Self {
            window: 40,
            guard: 4,
            scale_a: 1.1,
            offset_b: 1.5,
            min_range_bin: 10,
        }
    }
}

impl BfarParams {
    /// Defaults with the static offset set to three noise-floor deviations.
    pub fn for_noise_std(noise_floor_std: f64) -> Self {
        Self {
            offset_b: 3.0 * noise_floor_std,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.window <= self.guard {
            return Err(DetectionError::InvalidParams("window must exceed guard"));
        }
        if !(self.scale_a > 0.0) {
            return Err(DetectionError::InvalidParams("scale_a must be positive"));
        }
        if !self.offset_b.is_finite() {
            return Err(DetectionError::InvalidParams("offset_b must be finite"));
        }
        Ok(())
    }

    pub fn min_row_len(&self) -> usize {
        2 * (self.window + self.guard) + 1
    }
}

/// Per-azimuth BFAR detection over one range profile.
pub fn bfar_detect(row: &[f32], params: &BfarParams) -> Result<Vec<bool>, DetectionError> {
    params.validate()?;
    let n = row.len();
    if n < params.min_row_len() {
        return Err(DetectionError::RowTooShort {
            len: n,
            required: params.min_row_len(),
        });
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0f64;
    for &p in row {
        acc += p as f64;
        prefix.push(acc);
    }
    let sum = |lo: usize, hi: usize| prefix[hi] - prefix[lo];

    let (w, g) = (params.window, params.guard);
    let mut mask = vec![false; n];
    for i in params.min_range_bin.min(n)..n {
        // Training cells [i-g-w, i-g) and (i+g, i+g+w], truncated at the edges.
        let left_hi = i.saturating_sub(g);
        let left_lo = i.saturating_sub(g + w);
        let right_lo = (i + g + 1).min(n);
        let right_hi = (i + g + w + 1).min(n);
        let count = (left_hi - left_lo) + (right_hi - right_lo);
        if count == 0 {
            continue;
        }
        let mean = (sum(left_lo, left_hi) + sum(right_lo, right_hi)) / count as f64;
        mask[i] = row[i] as f64 > params.scale_a * mean + params.offset_b;
    }
    Ok(mask)
}

/// A detected peak: fractional range bin and the run's maximum power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub range_bin: f64,
    pub power: f64,
}

/// Collapses each maximal run of detections to its power-weighted centroid.
pub fn extract_peaks(mask: &[bool], row: &[f32]) -> Result<Vec<Peak>, DetectionError> {
    if mask.len() != row.len() {
        return Err(DetectionError::LengthMismatch {
            mask: mask.len(),
            row: row.len(),
        });
    }
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        let run = start..i;
        let (mut weighted, mut total, mut max) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
        for k in run.clone() {
            let p = row[k] as f64;
            weighted += k as f64 * p;
            total += p;
            max = max.max(p);
        }
        let range_bin = if total > 0.0 {
            (weighted / total).clamp(start as f64, (i - 1) as f64)
        } else {
            (start + i - 1) as f64 / 2.0
        };
        peaks.push(Peak { range_bin, power: max });
    }
    Ok(peaks)
}

/// A timestamped return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub timestamp: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RadarPointCloud {
    pub points: Vec<RadarPoint>,
}

impl RadarPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes `x,y,t,power` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,t,power")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.x, p.y, p.timestamp, p.power)?;
        }
        Ok(())
    }
}

pub fn scan_to_cloud(scan: &PolarScan, params: &BfarParams) -> Result<RadarPointCloud, DetectionError> {
    let mut points = Vec::new();
    for a in 0..scan.azimuth_count() {
        let row = scan.row(a);
        let mask = bfar_detect(row, params)?;
        let (s, c) = scan.azimuth_angles[a].sin_cos();
        for peak in extract_peaks(&mask, row)? {
            let r = peak.range_bin * scan.range_resolution;
            points.push(RadarPoint {
                x: r * c,
                y: r * s,
                timestamp: scan.azimuth_timestamps[a],
                power: peak.power,
            });
        }
    }
    Ok(RadarPointCloud { points })
}
