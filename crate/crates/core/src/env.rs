//! Trajectory-replay driving environment.
//!
//! One episode controls one recorded vehicle; every other vehicle replays
//! its recorded track. The controlled ego integrates the unicycle model
//! while the recorded ego position at the same frame stays available as the
//! imitation target. Episodes end only when the ego's track runs out.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use crate::action::{Lateral, Longitudinal, MetaAction};
use crate::data::{self, DataError, FrameIndex, TrajectoryPoint, VehicleTrack};
use crate::dynamics::{estimate_state, step_unicycle, ControlTable, EgoState};
use crate::grid::{build_grid, ContextGrid, GridError, GridSpec, LanePos, NeighborInput};
use crate::policy::{rule_policy_decide, RuleParams, RuleScene};
use crate::predictor::{PredictionResult, PredictorError, TrajectoryPredictor, DEFAULT_HISTORY};
use crate::reward::{total_reward, RewardBreakdown, RewardConfig};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("episode error for vehicle {vehicle_id}: {reason}")]
    Episode { vehicle_id: u32, reason: String },
    #[error("protocol error: {0}")]
    Protocol(&'static str),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub grid: GridSpec,
    pub control: ControlTable<f64>,
    /// Lane geometry in here is overwritten from the dataset.
    pub reward: RewardConfig<f64>,
    /// Positions fed to the predictor per neighbor.
    pub predictor_history: usize,
    /// Frames kept after the last decision so labels are computable.
    pub label_lookahead: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            control: ControlTable::default(),
            reward: RewardConfig::default(),
            predictor_history: DEFAULT_HISTORY,
            label_lookahead: data::SPEED_WINDOW,
        }
    }
}

impl EnvConfig {
    pub fn rule_params(&self) -> RuleParams {
        RuleParams {
            d1: self.reward.d1,
            d2: self.reward.d2,
            vehicle_length: self.reward.l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub ego_id: u32,
    pub ego: EgoState<f64>,
    /// Current frame.
    pub cursor: u32,
    /// First decision frame.
    pub start: u32,
    /// Frame at which the episode is done.
    pub end: u32,
    trail: VecDeque<LanePos>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Frame at which the decision was taken.
    pub decision_frame: u32,
    pub action: MetaAction,
    pub rule_label: MetaAction,
    pub human_lateral: Option<Lateral>,
    pub human_longitudinal: Option<Longitudinal>,
    pub near_collision: bool,
    pub ego_before: EgoState<f64>,
    pub ego_after: EgoState<f64>,
}

impl StepInfo {
    pub fn human_label(&self) -> Option<MetaAction> {
        Some(MetaAction::new(self.human_lateral?, self.human_longitudinal?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: ContextGrid,
    pub reward: RewardBreakdown<f64>,
    pub done: bool,
    pub info: StepInfo,
}

/// Decision frames `[start, end)` for a track, if it is long enough.
pub fn episode_bounds(track: &VehicleTrack, cfg: &EnvConfig) -> Result<(u32, u32), EnvError> {
    let margin = cfg.grid.past + cfg.label_lookahead as usize;
    if track.len() <= margin {
        return Err(EnvError::Episode {
            vehicle_id: track.vehicle_id,
            reason: format!("track has {} frames, needs more than {margin}", track.len()),
        });
    }
    let start = track.first_frame() + cfg.grid.past as u32;
    Ok((start, start + (track.len() - margin) as u32))
}

#[derive(Clone)]
pub struct DrivingEnv {
    data: Arc<FrameIndex>,
    predictor: Arc<dyn TrajectoryPredictor>,
    cfg: EnvConfig,
    speed_p75: f64,
    state: Option<EnvState>,
}

impl std::fmt::Debug for DrivingEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DrivingEnv")
            .field("tracks", &self.data.n_tracks())
            .field("cfg", &self.cfg)
            .field("state", &self.state)
            .finish()
    }
}

impl DrivingEnv {
    pub fn new(
        data: Arc<FrameIndex>,
        predictor: Arc<dyn TrajectoryPredictor>,
        mut cfg: EnvConfig,
    ) -> Self {
        let meta = *data.meta();
        cfg.reward.lane_width = meta.lane_width;
        cfg.reward.n_lanes = meta.n_lanes;
        let speed_p75 = data
            .velocity_stats()
            .map_or(f64::INFINITY, |s| s.p75 / data::FT_TO_M);
        Self {
            data,
            predictor,
            cfg,
            speed_p75,
            state: None,
        }
    }

    pub fn data(&self) -> &Arc<FrameIndex> {
        &self.data
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.state.as_ref().is_none_or(|s| s.cursor >= s.end)
    }

    /// Vehicles long enough to host an episode, ascending by id.
    pub fn episodes(&self) -> Vec<u32> {
        self.data
            .tracks()
            .filter(|t| episode_bounds(t, &self.cfg).is_ok())
            .map(|t| t.vehicle_id)
            .collect()
    }

    /// Total decision steps over all episodes.
    pub fn total_steps(&self) -> usize {
        self.data
            .tracks()
            .filter_map(|t| episode_bounds(t, &self.cfg).ok())
            .map(|(a, b)| (b - a) as usize)
            .sum()
    }

    fn ego_track(&self, id: u32) -> Result<&VehicleTrack, EnvError> {
        self.data.track(id).ok_or(EnvError::Data(DataError::UnknownVehicle(id)))
    }

    pub fn reset(&mut self, vehicle_id: u32) -> Result<ContextGrid, EnvError> {
        let track = self.ego_track(vehicle_id)?;
        let (start, end) = episode_bounds(track, &self.cfg)?;
        let past = self.cfg.grid.past as u32;
        let p = |f: u32| track.at(f).expect("frame inside track");
        let (prev, cur) = (p(start - 1), p(start));
        let ego = estimate_state(
            (prev.local_x, prev.local_y),
            (cur.local_x, cur.local_y),
            self.data.meta().dt(),
        );
        let trail = (start + 1 - past..=start)
            .map(|f| {
                let q = p(f);
                LanePos { y: q.local_y, lane: q.lane_id as i64 }
            })
            .collect();
        self.state = Some(EnvState {
            ego_id: vehicle_id,
            ego,
            cursor: start,
            start,
            end,
            trail,
        });
        self.observe()
    }

    fn state_ref(&self) -> Result<&EnvState, EnvError> {
        self.state.as_ref().ok_or(EnvError::Protocol("environment not reset"))
    }

    fn ego_lane(&self, ego: &EgoState<f64>) -> i64 {
        self.data.meta().lane_of_x(ego.x)
    }

    /// Observation at the current frame.
    pub fn observe(&self) -> Result<ContextGrid, EnvError> {
        let st = self.state_ref()?;
        let t = st.cursor;
        let spec = &self.cfg.grid;
        let ego_lane = self.ego_lane(&st.ego);
        let past = spec.past as u32;
        let mut inputs = Vec::new();
        for nb in self.data.neighbors_around(t, st.ego.y, ego_lane, Some(st.ego_id)) {
            let track = self.data.track(nb.vehicle_id).expect("indexed vehicle has a track");
            let history = (t + 1 - past..=t)
                .map(|f| track.at(f).map(|q| LanePos { y: q.local_y, lane: q.lane_id as i64 }))
                .collect();
            let prediction = if spec.future > 0 {
                Some(self.predict(track, t)?)
            } else {
                None
            };
            inputs.push(NeighborInput {
                vehicle_id: nb.vehicle_id,
                history,
                prediction,
            });
        }
        let ego_hist: Vec<LanePos> = st.trail.iter().copied().collect();
        Ok(build_grid(spec, self.data.meta(), &ego_hist, &inputs)?)
    }

    fn predict(&self, track: &VehicleTrack, t: u32) -> Result<PredictionResult<f64>, EnvError> {
        let horizon = self.cfg.grid.future;
        let from = t
            .saturating_sub(self.cfg.predictor_history as u32 - 1)
            .max(track.first_frame());
        let hist: Vec<(f64, f64)> = track
            .span(from, t)
            .unwrap_or(&[])
            .iter()
            .map(|p| (p.local_x, p.local_y))
            .collect();
        if hist.len() < 2 {
            let last = hist.last().copied().unwrap_or((0.0, 0.0));
            return Ok(PredictionResult { positions: vec![last; horizon] });
        }
        Ok(self.predictor.predict(&hist, horizon)?)
    }

    /// Scene for the rule policy at the current frame.
    pub fn scene(&self) -> Result<RuleScene, EnvError> {
        let st = self.state_ref()?;
        let ego_lane = self.ego_lane(&st.ego);
        Ok(RuleScene {
            ego: st.ego,
            ego_lane,
            n_lanes: self.data.meta().n_lanes,
            neighbors: self
                .data
                .neighbors_around(st.cursor, st.ego.y, ego_lane, Some(st.ego_id))
                .iter()
                .map(|p| (p.local_y, p.lane_id as i64))
                .collect(),
            speed_p75: self.speed_p75,
        })
    }

    pub fn rule_decision(&self) -> Result<MetaAction, EnvError> {
        Ok(rule_policy_decide(&self.scene()?, &self.cfg.rule_params()))
    }

    /// Recorded labels of the ego at its current frame.
    pub fn human_labels(&self) -> Result<(Option<Lateral>, Option<Longitudinal>), EnvError> {
        let st = self.state_ref()?;
        let track = self.ego_track(st.ego_id)?;
        Ok((
            data::label_lateral(track, st.cursor).ok(),
            data::label_longitudinal(track, st.cursor).ok(),
        ))
    }

    /// Surrounding vehicles in sensor range of `pos` at `frame`, ascending
    /// by vehicle id.
    pub fn surrounding(&self, frame: u32, pos: (f64, f64), ego_id: u32) -> Vec<TrajectoryPoint> {
        let lane = self.data.meta().lane_of_x(pos.0);
        self.data.neighbors_around(frame, pos.1, lane, Some(ego_id))
    }

    pub fn step(&mut self, action: MetaAction) -> Result<StepResult, EnvError> {
        if self.is_done() {
            return Err(EnvError::Protocol("step after episode end"));
        }
        let rule_label = self.rule_decision()?;
        let (human_lateral, human_longitudinal) = self.human_labels()?;
        let dt = self.data.meta().dt();
        let u = self.cfg.control.control(action);

        let st = self.state.as_mut().expect("checked above");
        let before = st.ego;
        let after = step_unicycle(before, u, dt);
        let decision_frame = st.cursor;
        st.cursor += 1;
        st.ego = after;
        let lane = self.data.meta().lane_of_x(after.x);
        st.trail.pop_front();
        st.trail.push_back(LanePos { y: after.y, lane });
        let (frame, ego_id, done) = (st.cursor, st.ego_id, st.cursor >= st.end);

        let actual = self
            .data
            .point(ego_id, frame)
            .map(|p| (p.local_x, p.local_y))
            .ok_or(DataError::VehicleAbsent { vehicle_id: ego_id, frame })?;
        let surrounding: Vec<(f64, f64)> = self
            .surrounding(frame, (after.x, after.y), ego_id)
            .iter()
            .map(|p| (p.local_x, p.local_y))
            .collect();
        let reward = total_reward((after.x, after.y), actual, &surrounding, &self.cfg.reward);
        let observation = self.observe()?;
        Ok(StepResult {
            observation,
            reward,
            done,
            info: StepInfo {
                decision_frame,
                action,
                rule_label,
                human_lateral,
                human_longitudinal,
                near_collision: reward.n_count > 0,
                ego_before: before,
                ego_after: after,
            },
        })
    }
}

/// One row of an episode trace dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub frame: u32,
    pub ego: EgoState<f64>,
    pub action: MetaAction,
    pub reward: RewardBreakdown<f64>,
    pub near_collision: bool,
}

impl From<&StepResult> for TraceRow {
    fn from(s: &StepResult) -> Self {
        Self {
            frame: s.info.decision_frame + 1,
            ego: s.info.ego_after,
            action: s.info.action,
            reward: s.reward,
            near_collision: s.info.near_collision,
        }
    }
}

pub fn write_trace<W: Write>(mut w: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "frame,x,y,v,phi,action,r_dis,r_imit,r_offroad,total,near_collision")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.ego.x,
            r.ego.y,
            r.ego.v,
            r.ego.phi,
            r.action,
            r.reward.r_dis,
            r.reward.r_imit,
            r.reward.r_offroad,
            r.reward.total,
            u8::from(r.near_collision)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LaneConfig, TrajectoryPoint};
    use crate::predictor::ConstantVelocity;

    fn straight(id: u32, n: u32, lane: u32, y0: f64, dy: f64) -> VehicleTrack {
        let lanes = LaneConfig::default();
        VehicleTrack {
            vehicle_id: id,
            points: (1..=n)
                .map(|f| TrajectoryPoint {
                    vehicle_id: id,
                    frame_id: f,
                    local_x: lanes.lane_center(lane),
                    local_y: y0 + dy * (f - 1) as f64,
                    lane_id: lane,
                    velocity: dy * 10.0,
                })
                .collect(),
        }
    }

    fn env(tracks: Vec<VehicleTrack>) -> DrivingEnv {
        let idx = FrameIndex::from_tracks(tracks, LaneConfig::default()).unwrap();
        DrivingEnv::new(Arc::new(idx), Arc::new(ConstantVelocity), EnvConfig::default())
    }

    #[test]
    fn episode_length() {
        let mut e = env(vec![straight(1, 200, 3, 0.0, 2.0), straight(2, 20, 2, 0.0, 2.0)]);
        assert_eq!(e.episodes(), vec![1]);
        e.reset(1).unwrap();
        let mut steps = 0;
        let mut dones = 0;
        while !e.is_done() {
            let r = e.step(MetaAction::IDLE).unwrap();
            steps += 1;
            dones += usize::from(r.done);
        }
        assert_eq!(steps, 120);
        assert_eq!(dones, 1);
        assert!(matches!(e.step(MetaAction::IDLE), Err(EnvError::Protocol(_))));
        assert!(matches!(e.reset(2), Err(EnvError::Episode { vehicle_id: 2, .. })));
    }

    #[test]
    fn lone_ego_cruising_earns_zero() {
        let mut e = env(vec![straight(1, 120, 3, 0.0, 2.0)]);
        e.reset(1).unwrap();
        for _ in 0..10 {
            let r = e.step(MetaAction::IDLE).unwrap();
            assert!(r.reward.total.abs() < 1e-9, "{:?}", r.reward);
            assert!(!r.info.near_collision);
        }
    }

    #[test]
    fn resets_are_deterministic() {
        let mut e = env(vec![straight(1, 150, 3, 0.0, 2.0), straight(2, 150, 3, 40.0, 2.0)]);
        let a = e.reset(1).unwrap();
        e.step(MetaAction::IDLE).unwrap();
        let b = e.reset(1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lead_ten_feet_ahead() {
        // Lead sits exactly 10 ft ahead of where the cruising ego will be.
        let mut e = env(vec![straight(1, 150, 3, 0.0, 2.0), straight(2, 150, 3, 10.0, 2.0)]);
        e.reset(1).unwrap();
        let r = e.step(MetaAction::IDLE).unwrap();
        assert!((r.reward.total - (-9.999877)).abs() < 1e-5, "{:?}", r.reward);
        assert!(r.info.near_collision);
        assert_eq!(r.info.rule_label.longitudinal, Longitudinal::Brake);
    }

    #[test]
    fn steering_off_the_left_edge() {
        let mut e = env(vec![straight(1, 200, 1, 0.0, 2.0)]);
        e.reset(1).unwrap();
        let left = MetaAction::new(Lateral::HardLeft, Longitudinal::Cruise);
        let mut saw = false;
        while !e.is_done() {
            let r = e.step(left).unwrap();
            if r.reward.r_offroad == -6.0 {
                saw = true;
                break;
            }
        }
        assert!(saw);
    }
}
