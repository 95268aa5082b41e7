//! Recorded traffic: ingestion of NGSIM-style trajectory CSVs, the
//! per-frame spatial index, maneuver labeling and dataset statistics.

mod labels;
mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

pub use labels::{
    label, label_lateral, label_longitudinal, LabelDistribution, VelocityStats,
    HARD_CHANGE_WINDOW, LABEL_FUTURE, LABEL_PAST, SPEED_WINDOW,
};
pub use synth::{synth_generate, SynthConfig};

/// Longitudinal sensor range around the ego vehicle, feet.
pub const SENSOR_RANGE_FT: f64 = 90.0;

/// Feet to metres.
pub const FT_TO_M: f64 = 0.3048;

pub const COL_VEHICLE: &str = "Vehicle_ID";
pub const COL_FRAME: &str = "Frame_ID";
pub const COL_X: &str = "Local_X";
pub const COL_Y: &str = "Local_Y";
pub const COL_LANE: &str = "Lane_ID";
pub const COL_VEL: &str = "v_Vel";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("track error for vehicle {vehicle_id}: {reason}")]
    Track { vehicle_id: u32, reason: String },
    #[error("invalid row at line {line}: {reason}")]
    InvalidRow { line: u64, reason: String },
    #[error("vehicle {vehicle_id} is not present at frame {frame}")]
    VehicleAbsent { vehicle_id: u32, frame: u32 },
    #[error("unknown vehicle {0}")]
    UnknownVehicle(u32),
    #[error("vehicle {vehicle_id} lacks the frames needed to label frame {frame}")]
    Boundary { vehicle_id: u32, frame: u32 },
    #[error("dataset has no labelable samples")]
    EmptyDataset,
    #[error("config error: {0}")]
    Config(String),
}

/// One recorded sample of one vehicle. Geometry is in feet: `local_x`
/// grows rightward across lanes, `local_y` along the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub vehicle_id: u32,
    pub frame_id: u32,
    pub local_x: f64,
    pub local_y: f64,
    pub lane_id: u32,
    /// Feet per second.
    pub velocity: f64,
}

/// Contiguous time series of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrack {
    pub vehicle_id: u32,
    pub points: Vec<TrajectoryPoint>,
}

impl VehicleTrack {
    pub fn first_frame(&self) -> u32 {
        self.points[0].frame_id
    }

    pub fn last_frame(&self) -> u32 {
        self.points[self.points.len() - 1].frame_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn at(&self, frame: u32) -> Option<&TrajectoryPoint> {
        let first = self.points.first()?.frame_id;
        let offset = frame.checked_sub(first)? as usize;
        self.points.get(offset)
    }

    /// Points for `frames` inclusive, or `None` if any is missing.
    pub fn span(&self, from: u32, to: u32) -> Option<&[TrajectoryPoint]> {
        let first = self.points.first()?.frame_id;
        let a = from.checked_sub(first)? as usize;
        let b = to.checked_sub(first)? as usize;
        if b < a || b >= self.points.len() {
            return None;
        }
        Some(&self.points[a..=b])
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.points.is_empty() {
            return Err(DataError::Track {
                vehicle_id: self.vehicle_id,
                reason: "empty track".into(),
            });
        }
        for w in self.points.windows(2) {
            let (a, b) = (w[0].frame_id, w[1].frame_id);
            if b <= a {
                return Err(DataError::Track {
                    vehicle_id: self.vehicle_id,
                    reason: format!("non-monotone frames: {a} followed by {b}"),
                });
            }
            if b != a + 1 {
                return Err(DataError::Track {
                    vehicle_id: self.vehicle_id,
                    reason: format!("missing frames between {a} and {b}"),
                });
            }
        }
        Ok(())
    }
}

/// Road layout shared by every track in a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneConfig {
    pub n_lanes: u32,
    /// Feet.
    pub lane_width: f64,
    /// Hz.
    pub frame_rate: f64,
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self {
            n_lanes: 5,
            lane_width: 12.0,
            frame_rate: 10.0,
        }
    }
}

impl LaneConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn road_width(&self) -> f64 {
        self.n_lanes as f64 * self.lane_width
    }

    /// Lane number containing lateral position `x`; may fall outside
    /// `1..=n_lanes` for off-road positions.
    pub fn lane_of_x(&self, x: f64) -> i64 {
        (x / self.lane_width).floor() as i64 + 1
    }

    pub fn lane_center(&self, lane: u32) -> f64 {
        (lane as f64 - 0.5) * self.lane_width
    }
}

/// Immutable two-way view over a dataset: per-vehicle tracks and, for each
/// frame, the vehicles present (sorted by vehicle id).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameIndex {
    frames: BTreeMap<u32, Vec<TrajectoryPoint>>,
    tracks: BTreeMap<u32, VehicleTrack>,
    meta: LaneConfig,
    dropped_rows: usize,
}

impl FrameIndex {
    /// Builds an index from complete tracks, validating every invariant.
    pub fn from_tracks(
        tracks: impl IntoIterator<Item = VehicleTrack>,
        meta: LaneConfig,
    ) -> Result<Self, DataError> {
        let mut by_id = BTreeMap::new();
        let mut frames: BTreeMap<u32, Vec<TrajectoryPoint>> = BTreeMap::new();
        for track in tracks {
            track.validate()?;
            for p in &track.points {
                check_point(p, &meta).map_err(|reason| DataError::Track {
                    vehicle_id: track.vehicle_id,
                    reason,
                })?;
                frames.entry(p.frame_id).or_default().push(*p);
            }
            if by_id.insert(track.vehicle_id, track.clone()).is_some() {
                return Err(DataError::Track {
                    vehicle_id: track.vehicle_id,
                    reason: "duplicate track".into(),
                });
            }
        }
        for pts in frames.values_mut() {
            pts.sort_by_key(|p| p.vehicle_id);
        }
        Ok(Self {
            frames,
            tracks: by_id,
            meta,
            dropped_rows: 0,
        })
    }

    pub fn ingest_csv(path: impl AsRef<Path>, meta: LaneConfig) -> Result<Self, DataError> {
        Self::ingest_reader(File::open(path)?, meta)
    }

    /// Parses NGSIM-style CSV. Extra columns are ignored; rows with a
    /// missing or non-finite required field are dropped and counted.
    pub fn ingest_reader<R: Read>(reader: R, meta: LaneConfig) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &'static str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or(DataError::MissingColumn(name))
        };
        let cols = [
            col(COL_VEHICLE)?,
            col(COL_FRAME)?,
            col(COL_X)?,
            col(COL_Y)?,
            col(COL_LANE)?,
            col(COL_VEL)?,
        ];

        let mut rows: BTreeMap<u32, Vec<TrajectoryPoint>> = BTreeMap::new();
        let mut dropped = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut vals = [0.0f64; 6];
            let mut ok = true;
            for (v, &c) in vals.iter_mut().zip(&cols) {
                match rec.get(c).and_then(|s| s.parse::<f64>().ok()) {
                    Some(x) if x.is_finite() => *v = x,
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                dropped += 1;
                continue;
            }
            let as_id = |v: f64, what: &str| -> Result<u32, DataError> {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    Err(DataError::InvalidRow {
                        line,
                        reason: format!("{what} `{v}` is not a non-negative integer"),
                    })
                } else {
                    Ok(v as u32)
                }
            };
            let p = TrajectoryPoint {
                vehicle_id: as_id(vals[0], COL_VEHICLE)?,
                frame_id: as_id(vals[1], COL_FRAME)?,
                local_x: vals[2],
                local_y: vals[3],
                lane_id: as_id(vals[4], COL_LANE)?,
                velocity: vals[5],
            };
            check_point(&p, &meta).map_err(|reason| DataError::InvalidRow { line, reason })?;
            rows.entry(p.vehicle_id).or_default().push(p);
        }

        let tracks = rows
            .into_iter()
            .map(|(vehicle_id, points)| VehicleTrack { vehicle_id, points });
        let mut idx = Self::from_tracks(tracks, meta)?;
        idx.dropped_rows = dropped;
        Ok(idx)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut f = std::io::BufWriter::new(File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Writes the required columns in vehicle-then-frame order. Floats use
    /// shortest round-trip formatting so re-ingestion is lossless.
    pub fn write_to<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([COL_VEHICLE, COL_FRAME, COL_X, COL_Y, COL_LANE, COL_VEL])?;
        for track in self.tracks.values() {
            for p in &track.points {
                wtr.write_record(&[
                    p.vehicle_id.to_string(),
                    p.frame_id.to_string(),
                    p.local_x.to_string(),
                    p.local_y.to_string(),
                    p.lane_id.to_string(),
                    p.velocity.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn meta(&self) -> &LaneConfig {
        &self.meta
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn tracks(&self) -> impl Iterator<Item = &VehicleTrack> {
        self.tracks.values()
    }

    pub fn track(&self, vehicle_id: u32) -> Option<&VehicleTrack> {
        self.tracks.get(&vehicle_id)
    }

    pub fn vehicle_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.tracks.keys().copied()
    }

    pub fn n_tracks(&self) -> usize {
        self.tracks.len()
    }

    /// Vehicles present at `frame`, ascending by vehicle id.
    pub fn frame(&self, frame: u32) -> &[TrajectoryPoint] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }

    pub fn point(&self, vehicle_id: u32, frame: u32) -> Option<&TrajectoryPoint> {
        self.tracks.get(&vehicle_id)?.at(frame)
    }

    /// Vehicles other than `ego_id` within sensor range and at most one
    /// lane away from the ego's recorded position.
    pub fn neighbors(&self, ego_id: u32, frame: u32) -> Result<Vec<TrajectoryPoint>, DataError> {
        let ego = self
            .point(ego_id, frame)
            .ok_or(DataError::VehicleAbsent {
                vehicle_id: ego_id,
                frame,
            })?;
        Ok(self.neighbors_around(frame, ego.local_y, ego.lane_id as i64, Some(ego_id)))
    }

    /// Neighbor query around an arbitrary (possibly simulated) position.
    pub fn neighbors_around(
        &self,
        frame: u32,
        y: f64,
        lane: i64,
        exclude: Option<u32>,
    ) -> Vec<TrajectoryPoint> {
        self.frame(frame)
            .iter()
            .filter(|p| Some(p.vehicle_id) != exclude)
            .filter(|p| (p.local_y - y).abs() <= SENSOR_RANGE_FT)
            .filter(|p| (p.lane_id as i64 - lane).abs() <= 1)
            .copied()
            .collect()
    }

    /// Restricts the index to the given vehicles.
    pub fn subset(&self, keep: impl Fn(u32) -> bool) -> Result<Self, DataError> {
        let tracks: Vec<_> = self
            .tracks
            .values()
            .filter(|t| keep(t.vehicle_id))
            .cloned()
            .collect();
        Self::from_tracks(tracks, self.meta)
    }

    pub fn label_distribution(&self) -> Result<LabelDistribution, DataError> {
        LabelDistribution::from_index(self)
    }

    pub fn velocity_stats(&self) -> Option<VelocityStats> {
        VelocityStats::from_index(self)
    }
}

fn check_point(p: &TrajectoryPoint, meta: &LaneConfig) -> Result<(), String> {
    if !(p.local_x.is_finite() && p.local_y.is_finite() && p.velocity.is_finite()) {
        return Err(format!("non-finite value at frame {}", p.frame_id));
    }
    if p.velocity < 0.0 {
        return Err(format!("negative velocity {} at frame {}", p.velocity, p.frame_id));
    }
    if p.lane_id < 1 || p.lane_id > meta.n_lanes {
        return Err(format!(
            "lane {} outside 1..={} at frame {}",
            p.lane_id, meta.n_lanes, p.frame_id
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(vehicle_id: u32, frame_id: u32, y: f64, lane_id: u32) -> TrajectoryPoint {
        TrajectoryPoint {
            vehicle_id,
            frame_id,
            local_x: (lane_id as f64 - 0.5) * 12.0,
            local_y: y,
            lane_id,
            velocity: 20.0,
        }
    }

    fn ingest(s: &str) -> Result<FrameIndex, DataError> {
        FrameIndex::ingest_reader(s.as_bytes(), LaneConfig::default())
    }

    #[test]
    fn minimal_file() {
        let idx = ingest(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel\n\
             1,1,6,0,1,20\n1,2,6,2,1,20\n1,3,6,4,1,20\n",
        )
        .unwrap();
        assert_eq!(idx.n_tracks(), 1);
        assert_eq!(idx.track(1).unwrap().len(), 3);
        assert_eq!(idx.frame(2).len(), 1);
    }

    #[test]
    fn missing_lane_column_is_schema_error() {
        let err = ingest("Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel\n1,1,6,0,20\n").unwrap_err();
        assert!(matches!(err, DataError::MissingColumn("Lane_ID")));
    }

    #[test]
    fn shared_frame_has_both_vehicles() {
        let idx = ingest(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel,Extra\n\
             2,10,6,0,1,20,x\n1,10,18,5,2,20,y\n",
        )
        .unwrap();
        let f = idx.frame(10);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].vehicle_id, 1);
    }

    #[test]
    fn non_monotone_frames_name_vehicle() {
        let err = ingest(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel\n7,2,6,0,1,20\n7,1,6,1,1,20\n",
        )
        .unwrap_err();
        match err {
            DataError::Track { vehicle_id, .. } => assert_eq!(vehicle_id, 7),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn gaps_are_rejected() {
        let err = ingest(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel\n7,1,6,0,1,20\n7,3,6,1,1,20\n",
        )
        .unwrap_err();
        assert!(matches!(err, DataError::Track { vehicle_id: 7, .. }));
    }

    #[test]
    fn nan_rows_dropped_and_counted() {
        let idx = ingest(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel\n\
             1,1,6,0,1,20\n2,1,NaN,0,1,20\n3,1,6,,1,20\n",
        )
        .unwrap();
        assert_eq!(idx.n_tracks(), 1);
        assert_eq!(idx.dropped_rows(), 2);
    }

    #[test]
    fn lane_out_of_range_rejected() {
        let err = ingest("Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID,v_Vel\n1,1,6,0,9,20\n")
            .unwrap_err();
        assert!(matches!(err, DataError::InvalidRow { .. }));
    }

    #[test]
    fn neighbor_range_and_lanes() {
        let tracks = vec![
            VehicleTrack { vehicle_id: 1, points: vec![pt(1, 5, 100.0, 3)] },
            VehicleTrack { vehicle_id: 2, points: vec![pt(2, 5, 189.0, 3)] },
            VehicleTrack { vehicle_id: 3, points: vec![pt(3, 5, 191.0, 3)] },
            VehicleTrack { vehicle_id: 4, points: vec![pt(4, 5, 100.0, 5)] },
            VehicleTrack { vehicle_id: 5, points: vec![pt(5, 5, 40.0, 2)] },
        ];
        let idx = FrameIndex::from_tracks(tracks, LaneConfig::default()).unwrap();
        let ids: Vec<u32> = idx.neighbors(1, 5).unwrap().iter().map(|p| p.vehicle_id).collect();
        assert_eq!(ids, vec![2, 5]);
        assert!(matches!(
            idx.neighbors(1, 6),
            Err(DataError::VehicleAbsent { vehicle_id: 1, frame: 6 })
        ));
    }

    #[test]
    fn span_and_at() {
        let t = VehicleTrack {
            vehicle_id: 1,
            points: (10..20).map(|f| pt(1, f, f as f64, 1)).collect(),
        };
        assert_eq!(t.at(10).unwrap().frame_id, 10);
        assert!(t.at(9).is_none());
        assert!(t.at(20).is_none());
        assert_eq!(t.span(12, 15).unwrap().len(), 4);
        assert!(t.span(15, 20).is_none());
    }

    #[test]
    fn lane_of_x() {
        let m = LaneConfig::default();
        assert_eq!(m.lane_of_x(0.1), 1);
        assert_eq!(m.lane_of_x(12.0), 2);
        assert_eq!(m.lane_of_x(-0.1), 0);
        assert_eq!(m.lane_of_x(m.lane_center(4)), 4);
    }
}
