//! Seeded synthetic traffic used in place of recorded datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, FrameIndex, LaneConfig, TrajectoryPoint, VehicleTrack};

/// Frames a scripted lane change takes to cross into the adjacent lane.
const CHANGE_FRAMES: u32 = 30;
/// Frames a scripted braking event takes to halve the speed.
const BRAKE_FRAMES: u32 = 10;
const BRAKE_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_vehicles: usize,
    pub lanes: LaneConfig,
    /// Frames per track.
    pub n_frames: u32,
    /// Mean speed, feet per second.
    pub base_speed: f64,
    /// Per-lane speeds are drawn uniformly in `base_speed ± speed_spread`.
    pub speed_spread: f64,
    /// Fraction of vehicles performing one lane change.
    pub lane_change_rate: f64,
    /// Fraction of vehicles performing one hard braking event.
    pub brake_rate: f64,
    /// Longitudinal spacing between vehicles sharing a lane, feet.
    pub headway: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 20,
            lanes: LaneConfig::default(),
            n_frames: 200,
            base_speed: 40.0,
            speed_spread: 5.0,
            lane_change_rate: 0.1,
            brake_rate: 0.1,
            headway: 80.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DataError> {
        let err = |m: &str| Err(DataError::Config(m.to_string()));
        if self.n_vehicles == 0 {
            return err("n_vehicles must be positive");
        }
        if self.lanes.n_lanes == 0 {
            return err("n_lanes must be positive");
        }
        if !(0.0..=1.0).contains(&self.lane_change_rate) || !(0.0..=1.0).contains(&self.brake_rate)
        {
            return err("event rates must lie in [0, 1]");
        }
        if self.lane_change_rate + self.brake_rate > 1.0 + 1e-12 {
            return err("lane_change_rate + brake_rate exceeds 1");
        }
        if self.lanes.n_lanes == 1 && self.lane_change_rate > 0.0 {
            return err("lane changes need at least two lanes");
        }
        let events = self.lane_change_rate > 0.0 || self.brake_rate > 0.0;
        if events && self.n_frames < 150 {
            return err("scripted events need n_frames >= 150");
        }
        if self.n_frames < 2 {
            return err("n_frames must be at least 2");
        }
        if self.base_speed - self.speed_spread < 0.0 {
            return err("speeds would be negative");
        }
        Ok(())
    }

    pub fn n_lane_changes(&self) -> usize {
        (self.lane_change_rate * self.n_vehicles as f64).round() as usize
    }

    pub fn n_brakes(&self) -> usize {
        (self.brake_rate * self.n_vehicles as f64).round() as usize
    }
}

#[derive(Clone, Copy)]
enum Script {
    Keep,
    Brake { at: u32 },
    Change { at: u32, dir: i32 },
}

/// Generates a deterministic dataset: vehicles spread over lanes at fixed
/// headway, each lane at its own speed, with scripted braking and lane
/// change events at the configured rates.
pub fn synth_generate(cfg: &SynthConfig) -> Result<FrameIndex, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lanes = cfg.lanes;
    let n_lanes = lanes.n_lanes;
    let dt = lanes.dt();

    let lane_speed: Vec<f64> = (0..n_lanes)
        .map(|_| cfg.base_speed + rng.gen_range(-1.0..=1.0) * cfg.speed_spread)
        .collect();

    let mut order: Vec<usize> = (0..cfg.n_vehicles).collect();
    order.shuffle(&mut rng);
    let mut scripts = vec![Script::Keep; cfg.n_vehicles];
    let n_brake = cfg.n_brakes();
    let n_change = cfg.n_lane_changes();
    for (k, &v) in order.iter().enumerate() {
        let lane = (v as u32 % n_lanes) + 1;
        scripts[v] = if k < n_brake {
            Script::Brake {
                at: rng.gen_range(50..=cfg.n_frames - 60),
            }
        } else if k < n_brake + n_change {
            let dir = if lane == 1 {
                1
            } else if lane == n_lanes {
                -1
            } else if rng.gen_bool(0.5) {
                1
            } else {
                -1
            };
            Script::Change {
                at: rng.gen_range(50..=cfg.n_frames - 80),
                dir,
            }
        } else {
            Script::Keep
        };
    }

    let mut tracks = Vec::with_capacity(cfg.n_vehicles);
    for v in 0..cfg.n_vehicles {
        let lane = (v as u32 % n_lanes) + 1;
        let slot = v as u32 / n_lanes;
        let mut y = slot as f64 * cfg.headway + rng.gen_range(0.0..cfg.headway * 0.25);
        let v0 = lane_speed[(lane - 1) as usize];
        let x0 = lanes.lane_center(lane);
        let vehicle_id = v as u32 + 1;

        let mut points = Vec::with_capacity(cfg.n_frames as usize);
        for k in 0..cfg.n_frames {
            let (x, speed) = match scripts[v] {
                Script::Keep => (x0, v0),
                Script::Brake { at } => {
                    let frac = (k.saturating_sub(at) as f64 / BRAKE_FRAMES as f64).min(1.0);
                    (x0, v0 * (1.0 - (1.0 - BRAKE_FACTOR) * frac))
                }
                Script::Change { at, dir } => {
                    let frac = (k.saturating_sub(at) as f64 / CHANGE_FRAMES as f64).min(1.0);
                    (x0 + dir as f64 * lanes.lane_width * frac, v0)
                }
            };
            if k > 0 {
                y += speed * dt;
            }
            let lane_id = lanes.lane_of_x(x).clamp(1, n_lanes as i64) as u32;
            points.push(TrajectoryPoint {
                vehicle_id,
                frame_id: k + 1,
                local_x: x,
                local_y: y,
                lane_id,
                velocity: speed,
            });
        }
        tracks.push(VehicleTrack { vehicle_id, points });
    }
    FrameIndex::from_tracks(tracks, lanes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Lateral, Longitudinal};
    use crate::data::labels::{label, labelable_frames};

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { n_vehicles: 10, seed: 3, ..Default::default() };
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
    }

    #[test]
    fn zero_vehicles_rejected() {
        let cfg = SynthConfig { n_vehicles: 0, ..Default::default() };
        assert!(matches!(synth_generate(&cfg), Err(DataError::Config(_))));
    }

    #[test]
    fn single_lane_changes_rejected() {
        let cfg = SynthConfig {
            lanes: LaneConfig { n_lanes: 1, ..Default::default() },
            lane_change_rate: 0.1,
            ..Default::default()
        };
        assert!(matches!(synth_generate(&cfg), Err(DataError::Config(_))));
    }

    #[test]
    fn event_counts_match_rates() {
        let cfg = SynthConfig {
            n_vehicles: 100,
            brake_rate: 0.1,
            lane_change_rate: 0.2,
            seed: 11,
            ..Default::default()
        };
        let idx = synth_generate(&cfg).unwrap();
        let mut brakers = 0;
        let mut changers = 0;
        for t in idx.tracks() {
            let labels: Vec<_> = labelable_frames(t).map(|f| label(t, f).unwrap()).collect();
            if labels.iter().any(|l| l.longitudinal == Longitudinal::Brake) {
                brakers += 1;
            }
            if labels.iter().any(|l| l.lateral != Lateral::SameLane) {
                changers += 1;
            }
        }
        assert_eq!(brakers, 10);
        assert_eq!(changers, 20);
    }
}
