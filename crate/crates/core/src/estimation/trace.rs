use std::io::{self, Write};

use serde::Serialize;

use crate::se2::{Pose2, Twist2};

/// One row of an estimator trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub timestamp: f64,
    pub iterations: usize,
    pub cost: f64,
    pub inliers: usize,
    pub pose: Pose2,
    pub twist: Twist2,
}

pub fn write_trace_csv<W: Write>(rows: &[StepDiagnostics], mut out: W) -> io::Result<()> {
    writeln!(out, "t,iterations,cost,inliers,x,y,theta,vx,vy,omega")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.timestamp, r.iterations, r.cost, r.inliers, r.pose.x, r.pose.y, r.pose.theta, r.twist.vx, r.twist.vy, r.twist.omega
        )?;
    }
    Ok(())
}
