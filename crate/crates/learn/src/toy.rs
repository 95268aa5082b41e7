//! Small synthetic problems with known answers, used to check that the
//! learners actually learn.

use maneuver_core::data::DataError;
use maneuver_core::grid::{build_grid, LanePos, NeighborInput};
use maneuver_core::predictor::PredictionResult;
use maneuver_core::{
    FrameIndex, GridSpec, LaneConfig, Lateral, Longitudinal, MetaAction, TrajectoryPoint,
    VehicleTrack,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imitation::Sample;
use crate::LearnError;

/// Pairs of vehicles in one lane: a lead that brakes hard shortly after
/// the first decision frame and a recorded follower that repeats the lead's
/// speed profile (optionally delayed), keeping a safe gap. Pairs are far enough apart not to see each
/// other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadBrakeConfig {
    pub pairs: usize,
    pub frames: u32,
    /// Initial bumper gap, feet.
    pub gap: f64,
    /// Initial speed of both vehicles, ft/s.
    pub speed: f64,
    /// Lead speed lost per frame while braking, ft/s.
    pub lead_decel: f64,
    /// Lead speed after braking, ft/s.
    pub lead_final: f64,
    /// Frame (from track start) at which the lead starts braking.
    pub brake_frame: u32,
    /// Frames the follower lags behind the lead's speed profile.
    pub follower_delay: u32,
    /// Spacing between pairs, feet.
    pub pair_spacing: f64,
    pub lane: u32,
    pub seed: u64,
}

impl Default for LeadBrakeConfig {
    fn default() -> Self {
        Self {
            pairs: 10,
            frames: 130,
            gap: 40.0,
            speed: 40.0,
            lead_decel: 1.0,
            lead_final: 0.0,
            brake_frame: 32,
            follower_delay: 0,
            pair_spacing: 1000.0,
            lane: 3,
            seed: 0,
        }
    }
}

/// Vehicle ids of the followers; the leads have the even ids.
pub fn lead_brake_egos(cfg: &LeadBrakeConfig) -> Vec<u32> {
    (0..cfg.pairs as u32).map(|i| 2 * i + 1).collect()
}

pub fn lead_brake_dataset(cfg: &LeadBrakeConfig) -> Result<FrameIndex, DataError> {
    let lanes = LaneConfig::default();
    let dt = lanes.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = lanes.lane_center(cfg.lane);
    let mut tracks = Vec::with_capacity(2 * cfg.pairs);
    for i in 0..cfg.pairs {
        let v0 = cfg.speed + rng.gen_range(-3.0..3.0);
        let gap = cfg.gap + rng.gen_range(-5.0..5.0);
        let lead_v = |f: u32| {
            let braking = f.saturating_sub(cfg.brake_frame) as f64 * cfg.lead_decel;
            (v0 - braking).max(cfg.lead_final)
        };
        let follow_v = |f: u32| lead_v(f.saturating_sub(cfg.follower_delay));
        let base = i as f64 * cfg.pair_spacing;
        for (id, y0, speed) in [
            (2 * i as u32 + 1, base, &follow_v as &dyn Fn(u32) -> f64),
            (2 * i as u32 + 2, base + gap, &lead_v as &dyn Fn(u32) -> f64),
        ] {
            let mut y = y0;
            let points = (0..cfg.frames)
                .map(|f| {
                    let v = speed(f);
                    let p = TrajectoryPoint {
                        vehicle_id: id,
                        frame_id: f + 1,
                        local_x: x,
                        local_y: y,
                        lane_id: cfg.lane,
                        velocity: v,
                    };
                    y += v * dt;
                    p
                })
                .collect();
            tracks.push(VehicleTrack { vehicle_id: id, points });
        }
    }
    FrameIndex::from_tracks(tracks, lanes)
}

/// Grids whose label is a function of what the grid shows: the distance
/// of the vehicle ahead in the ego column decides the longitudinal label,
/// and the free side columns decide the lateral label when that vehicle
/// is close. Other vehicles are distractors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableConfig {
    pub samples: usize,
    pub spec: GridSpec,
    /// Probability that a vehicle is ahead in the ego lane.
    pub p_lead: f64,
    /// Probability of a vehicle somewhere in each side column.
    pub p_side: f64,
    /// Probability of a vehicle behind the ego in its lane.
    pub p_behind: f64,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            spec: GridSpec::default(),
            p_lead: 0.85,
            p_side: 0.5,
            p_behind: 0.5,
            seed: 0,
        }
    }
}

const EGO_LANE: u32 = 3;
/// Cells ahead at which a lead vehicle is still sampled.
const MAX_LEAD_CELLS: usize = 6;

/// Label for a lead vehicle `cells` ahead (if any) and free side columns.
pub fn separable_label(lead_cells: Option<usize>, left_free: bool, right_free: bool) -> MetaAction {
    let longitudinal = match lead_cells {
        Some(1) => Longitudinal::Brake,
        Some(2) => Longitudinal::Decelerate,
        Some(3) | Some(4) => Longitudinal::Cruise,
        _ => Longitudinal::Accelerate,
    };
    let close = matches!(lead_cells, Some(1) | Some(2));
    let lateral = if close && left_free {
        Lateral::SoftLeft
    } else if close && right_free {
        Lateral::SoftRight
    } else {
        Lateral::SameLane
    };
    MetaAction::new(lateral, longitudinal)
}

pub fn separable_dataset(cfg: &SeparableConfig) -> Result<Vec<Sample>, LearnError> {
    let spec = cfg.spec;
    let lanes = LaneConfig::default();
    let len = spec.cell_length;
    let reach = spec.ego_row() as f64 * len;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ego_hist = vec![LanePos { y: 0.0, lane: EGO_LANE as i64 }; spec.past];
    let mut out = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let mut vehicles: Vec<(f64, u32)> = Vec::new();
        let lead = if rng.gen_bool(cfg.p_lead) {
            let k = rng.gen_range(1..=MAX_LEAD_CELLS.min(spec.ego_row()));
            vehicles.push((k as f64 * len + rng.gen_range(-0.45..0.45) * len, EGO_LANE));
            Some(k)
        } else {
            None
        };
        let mut side_free = [true, true];
        for (free, lane) in side_free.iter_mut().zip([EGO_LANE - 1, EGO_LANE + 1]) {
            if rng.gen_bool(cfg.p_side) {
                vehicles.push((rng.gen_range(-reach..reach), lane));
                *free = false;
            }
        }
        if rng.gen_bool(cfg.p_behind) {
            vehicles.push((-rng.gen_range(2.0..spec.ego_row() as f64 + 0.4) * len, EGO_LANE));
        }
        let inputs: Vec<NeighborInput> = vehicles
            .iter()
            .enumerate()
            .map(|(i, &(y, lane))| NeighborInput {
                vehicle_id: i as u32 + 1,
                history: vec![Some(LanePos { y, lane: lane as i64 }); spec.past],
                prediction: (spec.future > 0).then(|| PredictionResult {
                    positions: vec![(lanes.lane_center(lane), y); spec.future],
                }),
            })
            .collect();
        let grid = build_grid(&spec, &lanes, &ego_hist, &inputs)
            .map_err(|e| LearnError::Data(e.to_string()))?;
        out.push(Sample {
            grid,
            label: separable_label(lead, side_free[0], side_free[1]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_rules() {
        let l = separable_label(Some(1), true, true);
        assert_eq!(l, MetaAction::new(Lateral::SoftLeft, Longitudinal::Brake));
        let l = separable_label(Some(2), false, true);
        assert_eq!(l, MetaAction::new(Lateral::SoftRight, Longitudinal::Decelerate));
        let l = separable_label(Some(4), true, true);
        assert_eq!(l, MetaAction::new(Lateral::SameLane, Longitudinal::Cruise));
        let l = separable_label(None, false, false);
        assert_eq!(l, MetaAction::new(Lateral::SameLane, Longitudinal::Accelerate));
    }

    #[test]
    fn lead_cell_is_visible_in_grid() {
        let cfg = SeparableConfig { samples: 200, ..SeparableConfig::default() };
        let spec = cfg.spec;
        for s in separable_dataset(&cfg).unwrap() {
            let newest = spec.past - 1;
            let first_ahead = (1..=spec.ego_row())
                .find(|&k| s.grid.get(spec.ego_row() - k, 1, newest) > 0.0);
            let lead = first_ahead.filter(|&k| k <= MAX_LEAD_CELLS);
            let left = (0..spec.rows).all(|r| s.grid.get(r, 0, newest) == 0.0);
            let right = (0..spec.rows).all(|r| s.grid.get(r, 2, newest) == 0.0);
            assert_eq!(separable_label(lead, left, right), s.label);
        }
    }

    #[test]
    fn lead_brake_tracks() {
        let cfg = LeadBrakeConfig::default();
        let idx = lead_brake_dataset(&cfg).unwrap();
        assert_eq!(idx.n_tracks(), 20);
        for id in lead_brake_egos(&cfg) {
            let ego = idx.track(id).unwrap();
            let lead = idx.track(id + 1).unwrap();
            let min_gap = ego
                .points
                .iter()
                .zip(&lead.points)
                .map(|(a, b)| b.local_y - a.local_y)
                .fold(f64::INFINITY, f64::min);
            assert!(min_gap > 20.0, "gap {min_gap}");
        }
    }
}
