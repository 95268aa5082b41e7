//! Maneuver labels derived from recorded tracks, and dataset summaries.

use std::io::Write;

use super::{DataError, FrameIndex, VehicleTrack, FT_TO_M};
use crate::action::{Lateral, Longitudinal, MetaAction};

/// Frames looked back/ahead when deciding whether a lane change happens.
pub const LABEL_PAST: u32 = 40;
pub const LABEL_FUTURE: u32 = 40;
/// A lane change already visible this many frames ahead counts as hard.
pub const HARD_CHANGE_WINDOW: u32 = 10;
/// Frames averaged for the longitudinal label.
pub const SPEED_WINDOW: u32 = 50;

const BRAKE_RATIO: f64 = 0.8;
const DECEL_RATIO: f64 = 0.95;
const ACCEL_RATIO: f64 = 1.05;

fn boundary(track: &VehicleTrack, t: u32) -> DataError {
    DataError::Boundary {
        vehicle_id: track.vehicle_id,
        frame: t,
    }
}

/// Lateral label at frame `t`: compares lanes 4 s back and 4 s ahead.
pub fn label_lateral(track: &VehicleTrack, t: u32) -> Result<Lateral, DataError> {
    let lane_at = |f: Option<u32>| {
        f.and_then(|f| track.at(f))
            .map(|p| p.lane_id as i64)
            .ok_or_else(|| boundary(track, t))
    };
    let before = lane_at(t.checked_sub(LABEL_PAST))?;
    let after = lane_at(t.checked_add(LABEL_FUTURE))?;
    let now = lane_at(Some(t))?;
    let soon = lane_at(t.checked_add(HARD_CHANGE_WINDOW))?;

    if before == after {
        return Ok(Lateral::SameLane);
    }
    let hard = soon != now;
    Ok(match (after < before, hard) {
        (true, true) => Lateral::HardLeft,
        (true, false) => Lateral::SoftLeft,
        (false, true) => Lateral::HardRight,
        (false, false) => Lateral::SoftRight,
    })
}

/// Longitudinal label at frame `t` from the mean speed over the next 5 s.
pub fn label_longitudinal(track: &VehicleTrack, t: u32) -> Result<Longitudinal, DataError> {
    let end = t.checked_add(SPEED_WINDOW).ok_or_else(|| boundary(track, t))?;
    let span = track.span(t, end).ok_or_else(|| boundary(track, t))?;
    let v0 = span[0].velocity;
    let mean = span[1..].iter().map(|p| p.velocity).sum::<f64>() / SPEED_WINDOW as f64;
    Ok(classify_speed_change(v0, mean))
}

pub(crate) fn classify_speed_change(v0: f64, future_mean: f64) -> Longitudinal {
    if future_mean < BRAKE_RATIO * v0 {
        Longitudinal::Brake
    } else if future_mean < DECEL_RATIO * v0 {
        Longitudinal::Decelerate
    } else if future_mean > ACCEL_RATIO * v0 {
        Longitudinal::Accelerate
    } else {
        Longitudinal::Cruise
    }
}

pub fn label(track: &VehicleTrack, t: u32) -> Result<MetaAction, DataError> {
    Ok(MetaAction::new(label_lateral(track, t)?, label_longitudinal(track, t)?))
}

/// Frames of `track` that have full context on both axes.
pub(crate) fn labelable_frames(track: &VehicleTrack) -> std::ops::RangeInclusive<u32> {
    let lo = track.first_frame() + LABEL_PAST;
    match track.last_frame().checked_sub(SPEED_WINDOW.max(LABEL_FUTURE)) {
        Some(hi) if hi >= lo => lo..=hi,
        _ => 1..=0,
    }
}

/// Class counts over every labelable (vehicle, frame) sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelDistribution {
    pub lateral: [usize; Lateral::COUNT],
    pub longitudinal: [usize; Longitudinal::COUNT],
    pub same_lane_cruise: usize,
    pub total: usize,
}

impl LabelDistribution {
    pub fn from_index(idx: &FrameIndex) -> Result<Self, DataError> {
        let mut d = Self::default();
        for track in idx.tracks() {
            for t in labelable_frames(track) {
                d.add(label(track, t)?);
            }
        }
        if d.total == 0 {
            return Err(DataError::EmptyDataset);
        }
        Ok(d)
    }

    pub fn add(&mut self, a: MetaAction) {
        self.lateral[a.lateral.index()] += 1;
        self.longitudinal[a.longitudinal.index()] += 1;
        if a == MetaAction::IDLE {
            self.same_lane_cruise += 1;
        }
        self.total += 1;
    }

    pub fn percent(&self, count: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.total as f64
        }
    }

    /// `(class, count, percent)` rows: five lateral, four longitudinal,
    /// then the joint same-lane-and-cruise class.
    pub fn rows(&self) -> Vec<(&'static str, usize, f64)> {
        let mut rows = Vec::with_capacity(10);
        for l in Lateral::ALL {
            let c = self.lateral[l.index()];
            rows.push((l.name(), c, self.percent(c)));
        }
        for l in Longitudinal::ALL {
            let c = self.longitudinal[l.index()];
            rows.push((l.name(), c, self.percent(c)));
        }
        rows.push(("same_lane_cruise", self.same_lane_cruise, self.percent(self.same_lane_cruise)));
        rows
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "class,count,percent")?;
        for (class, count, pct) in self.rows() {
            writeln!(w, "{class},{count},{pct:.3}")?;
        }
        writeln!(w, "total,{},100.000", self.total)
    }
}

/// Speed summary over every recorded point, metres per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityStats {
    pub mean: f64,
    pub std_dev: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl VelocityStats {
    pub fn from_index(idx: &FrameIndex) -> Option<Self> {
        let mut v: Vec<f64> = idx
            .tracks()
            .flat_map(|t| t.points.iter().map(|p| p.velocity * FT_TO_M))
            .collect();
        Self::from_samples(&mut v)
    }

    pub fn from_samples(v: &mut [f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std_dev: var.sqrt(),
            p25: percentile(v, 25.0),
            p50: percentile(v, 50.0),
            p75: percentile(v, 75.0),
        })
    }
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LaneConfig, TrajectoryPoint};

    /// Track over frames `0..n` with lane and speed given per frame.
    fn track(n: u32, lane: impl Fn(u32) -> u32, speed: impl Fn(u32) -> f64) -> VehicleTrack {
        VehicleTrack {
            vehicle_id: 1,
            points: (0..n)
                .map(|f| TrajectoryPoint {
                    vehicle_id: 1,
                    frame_id: f,
                    local_x: (lane(f) as f64 - 0.5) * 12.0,
                    local_y: f as f64 * 2.0,
                    lane_id: lane(f),
                    velocity: speed(f),
                })
                .collect(),
        }
    }

    #[test]
    fn lateral_rules() {
        let t = 50;
        let keep = track(120, |_| 3, |_| 20.0);
        assert_eq!(label_lateral(&keep, t).unwrap(), Lateral::SameLane);

        // 3 -> 2 between t+10 and t+40
        let soft = track(120, |f| if f > t + 20 { 2 } else { 3 }, |_| 20.0);
        assert_eq!(label_lateral(&soft, t).unwrap(), Lateral::SoftLeft);

        // 3 -> 4 already by t+10
        let hard = track(120, |f| if f >= t + 5 { 4 } else { 3 }, |_| 20.0);
        assert_eq!(label_lateral(&hard, t).unwrap(), Lateral::HardRight);

        assert!(matches!(label_lateral(&keep, 39), Err(DataError::Boundary { .. })));
        assert!(matches!(label_lateral(&keep, 80), Err(DataError::Boundary { .. })));
    }

    #[test]
    fn longitudinal_rules() {
        // v(t) = 20, constant future speed s
        let with_future = |s: f64| track(60, move |_| 1, move |f| if f == 0 { 20.0 } else { s });
        assert_eq!(label_longitudinal(&with_future(15.0), 0).unwrap(), Longitudinal::Brake);
        assert_eq!(label_longitudinal(&with_future(20.0), 0).unwrap(), Longitudinal::Cruise);
        assert_eq!(label_longitudinal(&with_future(22.0), 0).unwrap(), Longitudinal::Accelerate);
        assert_eq!(label_longitudinal(&with_future(18.5), 0).unwrap(), Longitudinal::Decelerate);
        assert!(label_longitudinal(&with_future(20.0), 10).is_err());
    }

    #[test]
    fn one_braker_among_ten() {
        let mut tracks = Vec::new();
        for id in 0..10u32 {
            let mut t = track(91, |_| 1 + id % 5, |_| 20.0);
            t.vehicle_id = id;
            for p in &mut t.points {
                p.vehicle_id = id;
                if id == 0 && p.frame_id > 40 {
                    p.velocity = 10.0;
                }
            }
            tracks.push(t);
        }
        let idx = FrameIndex::from_tracks(tracks, LaneConfig::default()).unwrap();
        // 91 frames: exactly one labelable frame (40) per vehicle.
        let d = idx.label_distribution().unwrap();
        assert_eq!(d.total, 10);
        assert_eq!(d.longitudinal[Longitudinal::Brake.index()], 1);
        assert!((d.percent(d.longitudinal[Longitudinal::Brake.index()]) - 10.0).abs() < 1e-12);
        assert_eq!(d.lateral.iter().sum::<usize>(), 10);
        assert_eq!(d.longitudinal.iter().sum::<usize>(), 10);
    }

    #[test]
    fn empty_dataset_error() {
        let idx = FrameIndex::from_tracks(vec![track(50, |_| 1, |_| 20.0)], LaneConfig::default())
            .unwrap();
        assert!(matches!(idx.label_distribution(), Err(DataError::EmptyDataset)));
    }

    #[test]
    fn percentiles_interpolate() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
        let s = VelocityStats::from_samples(&mut v).unwrap();
        assert_eq!(s.p50, 3.0);
        assert_eq!(s.p25, 2.0);
        assert_eq!(s.mean, 3.0);
        assert!((s.std_dev - 2f64.sqrt()).abs() < 1e-12);
    }
}
