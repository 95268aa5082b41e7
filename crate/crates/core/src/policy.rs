//! Decision policies: the interface the environment and evaluator drive,
//! the gap-acceptance rule baseline, and simple scripted policies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::action::{Lateral, Longitudinal, MetaAction};
use crate::dynamics::EgoState;
use crate::grid::ContextGrid;

/// What the rule policy sees: the ego and the surrounding vehicles.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleScene {
    pub ego: EgoState<f64>,
    pub ego_lane: i64,
    pub n_lanes: u32,
    /// `(local_y, lane)` of every surrounding vehicle in sensor range.
    pub neighbors: Vec<(f64, i64)>,
    /// 75th-percentile recorded speed, feet per second.
    pub speed_p75: f64,
}

/// Gap thresholds for the rule policy, feet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleParams {
    pub d1: f64,
    pub d2: f64,
    pub vehicle_length: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self {
            d1: 16.0,
            d2: 25.0,
            vehicle_length: 15.0,
        }
    }
}

impl RuleScene {
    /// Distance to the nearest vehicle ahead in `lane` (infinite if none).
    pub fn front_gap(&self, lane: i64) -> f64 {
        self.neighbors
            .iter()
            .filter(|&&(_, l)| l == lane)
            .map(|&(y, _)| y - self.ego.y)
            .filter(|&dy| dy > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// No vehicle in `lane` within half a vehicle length of the ego.
    pub fn band_clear(&self, lane: i64, half_length: f64) -> bool {
        !self
            .neighbors
            .iter()
            .any(|&(y, l)| l == lane && (y - self.ego.y).abs() <= half_length)
    }
}

/// Gap-acceptance rules. Longitudinal: front gap below `d1` brakes, below
/// `d2` decelerates, above `2 d2` accelerates while slower than the 75th
/// percentile speed, otherwise cruises. Lateral: soft change towards the
/// first adjacent lane (left, then right) whose front gap is more than twice
/// the current one and whose alongside band is clear.
pub fn rule_policy_decide(scene: &RuleScene, params: &RuleParams) -> MetaAction {
    let gap = scene.front_gap(scene.ego_lane);
    let longitudinal = if gap < params.d1 {
        Longitudinal::Brake
    } else if gap < params.d2 {
        Longitudinal::Decelerate
    } else if gap > 2.0 * params.d2 && scene.ego.v < scene.speed_p75 {
        Longitudinal::Accelerate
    } else {
        Longitudinal::Cruise
    };

    let mut lateral = Lateral::SameLane;
    let on_road = scene.ego_lane >= 1 && scene.ego_lane <= scene.n_lanes as i64;
    if on_road && gap.is_finite() {
        let half = 0.5 * params.vehicle_length;
        for (target, choice) in [(scene.ego_lane - 1, Lateral::SoftLeft), (scene.ego_lane + 1, Lateral::SoftRight)] {
            if target < 1 || target > scene.n_lanes as i64 {
                continue;
            }
            if scene.front_gap(target) > 2.0 * gap && scene.band_clear(target, half) {
                lateral = choice;
                break;
            }
        }
    }
    MetaAction::new(lateral, longitudinal)
}

/// Everything a policy may look at when deciding one step.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub observation: &'a ContextGrid,
    pub scene: &'a RuleScene,
    pub vehicle_id: u32,
    pub step: usize,
    pub previous: Option<MetaAction>,
}

pub trait Policy: Sync {
    fn name(&self) -> &str;
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut ChaCha8Rng) -> MetaAction;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicy {
    pub params: RuleParams,
}

impl Policy for RulePolicy {
    fn name(&self) -> &str {
        "rule"
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> MetaAction {
        rule_policy_decide(ctx.scene, &self.params)
    }
}

/// Uniform over all 20 joint actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&self, _ctx: &DecisionContext<'_>, rng: &mut ChaCha8Rng) -> MetaAction {
        MetaAction::from_index(rng.gen_range(0..MetaAction::COUNT)).expect("index in range")
    }
}

/// Cycles through a fixed action list by step index.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub name: String,
    pub actions: Vec<MetaAction>,
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> MetaAction {
        self.actions[ctx.step % self.actions.len()]
    }
}
