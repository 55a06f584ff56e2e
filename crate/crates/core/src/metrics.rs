//! Lateral path-tracking evaluation.
//!
//! Errors measured against simulator ground truth and errors estimated by
//! the pipeline travel in distinct record types, so a summary can never mix
//! them up.

use std::io::{self, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{signed_offset, Polyline};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("teach polyline needs at least two distinct points")]
    DegeneratePolyline,
    #[error("no samples to summarize")]
    Empty,
    #[error("measured and estimated samples are not aligned at index {0}")]
    Misaligned(usize),
}

/// Lateral error of the true robot position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredError {
    pub timestamp: f64,
    pub lateral: f64,
}

/// Lateral error of the localized pose, as the pipeline believes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedError {
    pub timestamp: f64,
    pub lateral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSample {
    pub timestamp: f64,
    pub measured: f64,
    pub estimated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrackingReport {
    pub samples: Vec<TrackingSample>,
    pub measured_rmse: f64,
    pub estimated_rmse: f64,
    pub measured_max_abs: f64,
    pub estimated_max_abs: f64,
    pub autonomy_rate: f64,
    pub halt_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Signed distance to the closest segment of `teach`, positive on the left.
///
/// The magnitude is the Euclidean distance to that segment, which equals the
/// perpendicular distance whenever the foot point is interior. Equal
/// distances resolve to the earlier segment.
pub fn lateral_error(point: Vector2<f64>, teach: &Polyline) -> Result<f64, MetricsError> {
    if teach.segment_count() == 0 {
        return Err(MetricsError::DegeneratePolyline);
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..teach.segment_count() {
        let (a, b) = teach.segment(i);
        let d = b - a;
        let u = ((point - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        let dist = (point - (a + u * d)).norm();
        if dist < best.0 {
            best = (dist, signed_offset(point, a, b));
        }
    }
    let (dist, offset) = best;
    Ok(if offset < 0.0 { -dist } else { dist })
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (sum / n as f64).sqrt()
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, e: f64| m.max(e.abs()))
}

/// Pairs the two error streams by index; timestamps must agree.
pub fn summarize(
    measured: &[MeasuredError],
    estimated: &[EstimatedError],
    halts: usize,
) -> Result<PathTrackingReport, MetricsError> {
    if measured.is_empty() {
        return Err(MetricsError::Empty);
    }
    if measured.len() != estimated.len() {
        return Err(MetricsError::Misaligned(measured.len().min(estimated.len())));
    }
    let mut samples = Vec::with_capacity(measured.len());
    for (i, (m, e)) in measured.iter().zip(estimated).enumerate() {
        if m.timestamp != e.timestamp {
            return Err(MetricsError::Misaligned(i));
        }
        samples.push(TrackingSample {
            timestamp: m.timestamp,
            measured: m.lateral,
            estimated: e.lateral,
        });
    }
    samples.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(PathTrackingReport {
        measured_rmse: rmse(samples.iter().map(|s| s.measured)),
        estimated_rmse: rmse(samples.iter().map(|s| s.estimated)),
        measured_max_abs: max_abs(samples.iter().map(|s| s.measured)),
        estimated_max_abs: max_abs(samples.iter().map(|s| s.estimated)),
        autonomy_rate: if halts == 0 { 1.0 } else { 0.0 },
        halt_events: halts,
        samples,
    })
}

/// Linear-interpolation quantile on sorted data: position `(n - 1) p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn five_numbers(mut values: Vec<f64>) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(Quartiles {
        min: values[0],
        q1: quantile(&values, 0.25),
        median: quantile(&values, 0.5),
        q3: quantile(&values, 0.75),
        max: values[values.len() - 1],
    })
}

/// Five-number summaries of the pooled signed errors over all reports,
/// as `(measured, estimated)`. `None` when there are no samples.
pub fn error_distribution(reports: &[PathTrackingReport]) -> Option<(Quartiles, Quartiles)> {
    let pooled = |f: fn(&TrackingSample) -> f64| reports.iter().flat_map(|r| r.samples.iter().map(f)).collect();
    Some((five_numbers(pooled(|s| s.measured))?, five_numbers(pooled(|s| s.estimated))?))
}

impl PathTrackingReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,measured_lateral,estimated_lateral")?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.timestamp, s.measured, s.estimated)?;
        }
        Ok(())
    }

    /// Summary statistics without the per-sample records.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.samples.len(),
            "measured_rmse": self.measured_rmse,
            "estimated_rmse": self.estimated_rmse,
            "measured_max_abs": self.measured_max_abs,
            "estimated_max_abs": self.estimated_max_abs,
            "autonomy_rate": self.autonomy_rate,
            "halt_events": self.halt_events,
        })
    }
}

/// Green at zero, yellow at 0.15 m, red from 0.4 m.
pub fn error_color(abs_error: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, [f64; 3]); 3] = [(0.0, [0.0, 170.0, 0.0]), (0.15, [240.0, 200.0, 0.0]), (0.4, [220.0, 0.0, 0.0])];
    let e = abs_error.clamp(0.0, 0.4);
    let i = if e <= 0.15 { 0 } else { 1 };
    let (e0, c0) = STOPS[i];
    let (e1, c1) = STOPS[i + 1];
    let u = (e - e0) / (e1 - e0);
    let mix = |k: usize| (c0[k] + u * (c1[k] - c0[k])).round() as u8;
    (mix(0), mix(1), mix(2))
}

/// Teach path in grey with the repeat path overlaid, each repeat segment
/// coloured by the absolute error at its start.
pub fn write_svg<W: Write>(teach: &Polyline, repeat: &[(Vector2<f64>, f64)], mut out: W) -> io::Result<()> {
    let all = teach.points().iter().chain(repeat.iter().map(|(p, _)| p));
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for p in all {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if !lo.x.is_finite() {
        lo = Vector2::zeros();
        hi = Vector2::repeat(1.0);
    }
    let margin = 2.0;
    let scale = 8.0;
    let (w, h) = ((hi.x - lo.x + 2.0 * margin) * scale, (hi.y - lo.y + 2.0 * margin) * scale);
    let px = |p: &Vector2<f64>| ((p.x - lo.x + margin) * scale, (hi.y - p.y + margin) * scale);
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#)?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    let teach_pts: Vec<String> = teach.points().iter().map(|p| {
        let (x, y) = px(p);
        format!("{x:.2},{y:.2}")
    }).collect();
    writeln!(out, r##"<polyline points="{}" fill="none" stroke="#999" stroke-width="6"/>"##, teach_pts.join(" "))?;
    for pair in repeat.windows(2) {
        let ((a, e), (b, _)) = (pair[0], pair[1]);
        let ((x1, y1), (x2, y2)) = (px(&a), px(&b));
        let (r, g, bl) = error_color(e.abs());
        writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="rgb({r},{g},{bl})" stroke-width="3"/>"#
        )?;
    }
    writeln!(out, "</svg>")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Polyline {
        Polyline::new([Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)])
    }

    #[test]
    fn lateral_error_examples() {
        assert_eq!(lateral_error(Vector2::new(3.0, 0.0), &straight()).unwrap(), 0.0);
        assert!((lateral_error(Vector2::new(3.0, 0.1), &straight()).unwrap() - 0.1).abs() < 1e-15);
        assert!((lateral_error(Vector2::new(3.0, -0.2), &straight()).unwrap() + 0.2).abs() < 1e-15);
        let single = Polyline::new([Vector2::new(1.0, 1.0)]);
        assert_eq!(lateral_error(Vector2::zeros(), &single), Err(MetricsError::DegeneratePolyline));
    }

    #[test]
    fn corner_ties_use_earlier_segment() {
        let line = Polyline::new([Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, 1.0)]);
        // Outside the corner both segments are 0.5*sqrt(2) away; the first
        // one has the point on its right.
        let e = lateral_error(Vector2::new(1.5, -0.5), &line).unwrap();
        assert!((e + 0.5f64.hypot(0.5)).abs() < 1e-15);
    }

    #[test]
    fn summary_examples() {
        let m = [MeasuredError { timestamp: 0.0, lateral: 0.3 }, MeasuredError { timestamp: 1.0, lateral: -0.4 }];
        let e = [EstimatedError { timestamp: 0.0, lateral: 0.0 }, EstimatedError { timestamp: 1.0, lateral: 0.0 }];
        let r = summarize(&m, &e, 0).unwrap();
        assert!((r.measured_rmse - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.measured_max_abs, 0.4);
        assert_eq!((r.estimated_rmse, r.estimated_max_abs, r.autonomy_rate), (0.0, 0.0, 1.0));
        assert_eq!(summarize(&m, &e, 1).unwrap().autonomy_rate, 0.0);
        assert_eq!(summarize(&[], &[], 0), Err(MetricsError::Empty));
        assert!(summarize(&m, &e[..1], 0).is_err());
    }

    #[test]
    fn constant_error_rmse_equals_max() {
        let m: Vec<_> = (0..7).map(|k| MeasuredError { timestamp: k as f64, lateral: -0.2 }).collect();
        let e: Vec<_> = (0..7).map(|k| EstimatedError { timestamp: k as f64, lateral: 0.0 }).collect();
        let r = summarize(&m, &e, 0).unwrap();
        assert!((r.measured_rmse - 0.2).abs() < 1e-15 && r.measured_max_abs == 0.2);
    }

    #[test]
    fn quantile_rule() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        let q = five_numbers(vec![0.7]).unwrap();
        assert!([q.min, q.q1, q.median, q.q3, q.max].iter().all(|&v| v == 0.7));
    }

    #[test]
    fn color_stops() {
        assert_eq!(error_color(0.0), (0, 170, 0));
        assert_eq!(error_color(0.15), (240, 200, 0));
        assert_eq!(error_color(0.4), (220, 0, 0));
        assert_eq!(error_color(3.0), (220, 0, 0));
    }

    #[test]
    fn svg_is_well_formed() {
        let mut buf = Vec::new();
        write_svg(&straight(), &[(Vector2::new(0.0, 0.1), 0.1), (Vector2::new(5.0, 0.2), 0.2)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<line").count(), 1);
    }
}
