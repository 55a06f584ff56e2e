use crate::se2::{flow, Pose2, Twist2};

use super::SimError;

/// Uniformly sampled true trajectory. The twist logged at sample `i` is the
/// constant body velocity held over `[t_i, t_{i+1})`, so poses between
/// samples follow exactly from the constant-velocity flow.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLog {
    dt: f64,
    poses: Vec<Pose2>,
    twists: Vec<Twist2>,
}

impl GroundTruthLog {
    pub fn new(initial: Pose2, dt: f64) -> Self {
        assert!(dt > 0.0, "sample period must be positive");
        Self {
            dt,
            poses: vec![initial],
            twists: Vec::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.timestamp(self.poses.len() - 1)
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    /// Twist held from sample `i`; the final sample repeats the last twist.
    pub fn twist(&self, i: usize) -> Twist2 {
        self.twists
            .get(i)
            .or_else(|| self.twists.last())
            .copied()
            .unwrap_or_default()
    }

    pub fn last_pose(&self) -> Pose2 {
        *self.poses.last().expect("log is never empty")
    }

    /// Holds `twist` for one sample period and appends the resulting pose.
    pub fn push(&mut self, twist: Twist2) {
        let next = flow(&self.last_pose(), &twist, self.dt);
        self.twists.push(twist);
        self.poses.push(next);
    }

    /// Returns `(timestamp, pose, twist)` for every logged sample.
    pub fn samples(&self) -> impl Iterator<Item = (f64, Pose2, Twist2)> + '_ {
        (0..self.poses.len()).map(|i| (self.timestamp(i), self.poses[i], self.twist(i)))
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        t0 >= -1e-12 && t1 <= self.end_time() + 1e-9
    }

    fn check(&self, t0: f64, t1: f64) -> Result<(), SimError> {
        if self.covers(t0, t1) {
            Ok(())
        } else {
            Err(SimError::TruthCoverage {
                requested: (t0, t1),
                available: (0.0, self.end_time()),
            })
        }
    }

    fn index_at(&self, t: f64) -> usize {
        let i = (t / self.dt + 1e-9).floor().max(0.0) as usize;
        i.min(self.poses.len() - 1)
    }

    pub fn pose_at(&self, t: f64) -> Result<Pose2, SimError> {
        self.check(t, t)?;
        let i = self.index_at(t);
        Ok(flow(&self.poses[i], &self.twist(i), t - self.timestamp(i)))
    }

    pub fn twist_at(&self, t: f64) -> Result<Twist2, SimError> {
        self.check(t, t)?;
        Ok(self.twist(self.index_at(t)))
    }

    pub fn require(&self, t0: f64, t1: f64) -> Result<(), SimError> {
        self.check(t0, t1)
    }

    /// Total path length travelled.
    pub fn distance(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance_to(&w[1])).sum()
    }

    /// Writes `t,x,y,theta,vx,vy,omega` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y,theta,vx,vy,omega")?;
        for (t, p, v) in self.samples() {
            writeln!(out, "{},{},{},{},{},{},{}", t, p.x, p.y, p.theta, v.vx, v.vy, v.omega)?;
        }
        Ok(())
    }
}
