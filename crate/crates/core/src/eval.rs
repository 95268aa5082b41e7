//! Safety and comfort metrics, consensus/conflict splits, and policy
//! evaluation over every episode of a dataset.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::action::{Lateral, MetaAction};
use crate::data::{self, FT_TO_M};
use crate::env::{DrivingEnv, EnvError};
use crate::policy::{DecisionContext, Policy};
use crate::reward::{in_negative_region, RewardConfig};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("input error: {0}")]
    Input(String),
    #[error("dataset has no episodes")]
    EmptyDataset,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Flags steps whose decision moves more than one ordinal step on either
/// axis relative to the previous decision. The first step is never flagged.
pub fn jerk_flags(actions: &[MetaAction]) -> Result<Vec<bool>, EvalError> {
    if actions.len() < 2 {
        return Err(EvalError::Input(format!(
            "need at least 2 actions, got {}",
            actions.len()
        )));
    }
    let mut flags = vec![false; actions.len()];
    for i in 1..actions.len() {
        flags[i] = is_jerk(actions[i - 1], actions[i]);
    }
    Ok(flags)
}

pub fn is_jerk(prev: MetaAction, next: MetaAction) -> bool {
    (next.lateral.ordinal() - prev.lateral.ordinal()).abs() > 1
        || (next.longitudinal.ordinal() - prev.longitudinal.ordinal()).abs() > 1
}

/// True when any surrounding vehicle lies in a negative reward region of
/// the projected ego position.
pub fn near_collision_flag(
    ego_projected: (f64, f64),
    surrounding: &[(f64, f64)],
    cfg: &RewardConfig<f64>,
) -> bool {
    surrounding
        .iter()
        .any(|&(x, y)| in_negative_region(ego_projected.0 - x, ego_projected.1 - y, cfg))
}

/// Mean acceleration variants over a speed series, metres per second squared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccelStats {
    pub signed: f64,
    pub absolute: f64,
    pub positive: f64,
}

/// Speeds in feet per second sampled every `dt` seconds. Fewer than two
/// samples yields zeros.
pub fn average_acceleration(speeds: &[f64], dt: f64) -> AccelStats {
    if speeds.len() < 2 {
        return AccelStats::default();
    }
    let mut acc = Accum::default();
    for w in speeds.windows(2) {
        acc.add_accel((w[1] - w[0]) / dt * FT_TO_M);
    }
    AccelStats {
        signed: acc.accel / acc.steps as f64,
        absolute: acc.abs_accel / acc.steps as f64,
        positive: acc.pos_accel / acc.steps as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    All,
    Consensus,
    Conflict,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::All, Split::Consensus, Split::Conflict];

    pub fn name(self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Consensus => "consensus",
            Split::Conflict => "conflict",
        }
    }
}

/// Indices of samples whose human and rule labels agree on both axes, and
/// of those that do not.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub consensus: Vec<usize>,
    pub conflict: Vec<usize>,
}

pub fn consensus_split(samples: &[(MetaAction, MetaAction)]) -> Partition {
    let mut p = Partition::default();
    for (i, (human, rule)) in samples.iter().enumerate() {
        if human == rule {
            p.consensus.push(i);
        } else {
            p.conflict.push(i);
        }
    }
    p
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Accum {
    steps: u64,
    jerks: u64,
    near: u64,
    accel: f64,
    abs_accel: f64,
    pos_accel: f64,
}

impl Accum {
    fn add_accel(&mut self, a: f64) {
        self.steps += 1;
        self.accel += a;
        self.abs_accel += a.abs();
        self.pos_accel += a.max(0.0);
    }

    fn add(&mut self, accel: f64, jerk: bool, near: bool) {
        self.add_accel(accel);
        self.jerks += u64::from(jerk);
        self.near += u64::from(near);
    }

    fn merge(&mut self, o: &Accum) {
        self.steps += o.steps;
        self.jerks += o.jerks;
        self.near += o.near;
        self.accel += o.accel;
        self.abs_accel += o.abs_accel;
        self.pos_accel += o.pos_accel;
    }

    fn pct(&self, n: u64) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.steps as f64
        }
    }

    fn mean(&self, s: f64) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            s / self.steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: String,
    pub dataset: String,
    pub split: Split,
    pub steps: u64,
    /// Signed mean, m/s².
    pub avg_acceleration: f64,
    pub avg_abs_acceleration: f64,
    pub avg_pos_acceleration: f64,
    pub uncomfortable_pct: f64,
    pub near_collision_pct: f64,
}

impl MetricsReport {
    fn from_accum(policy: &str, dataset: &str, split: Split, a: &Accum) -> Self {
        Self {
            policy: policy.to_string(),
            dataset: dataset.to_string(),
            split,
            steps: a.steps,
            avg_acceleration: a.mean(a.accel),
            avg_abs_acceleration: a.mean(a.abs_accel),
            avg_pos_acceleration: a.mean(a.pos_accel),
            uncomfortable_pct: a.pct(a.jerks),
            near_collision_pct: a.pct(a.near),
        }
    }
}

pub const REPORT_HEADER: &str = "policy,dataset,split,avg_accel_mps2,uncomfortable_pct,near_collision_pct,avg_abs_accel_mps2,avg_pos_accel_mps2,steps";

pub fn write_report<W: Write>(mut w: W, reports: &[MetricsReport]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{:.6},{:.4},{:.4},{:.6},{:.6},{}",
            r.policy,
            r.dataset,
            r.split.name(),
            r.avg_acceleration,
            r.uncomfortable_pct,
            r.near_collision_pct,
            r.avg_abs_acceleration,
            r.avg_pos_acceleration,
            r.steps
        )?;
    }
    Ok(())
}

/// Per-episode totals, the plot-data series.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub vehicle_id: u32,
    pub steps: u64,
    pub total_reward: f64,
    pub avg_acceleration: f64,
    pub uncomfortable_pct: f64,
    pub near_collision_pct: f64,
}

pub fn write_plot_data<W: Write>(
    mut w: W,
    policy: &str,
    dataset: &str,
    episodes: &[EpisodeMetrics],
) -> std::io::Result<()> {
    for e in episodes {
        writeln!(
            w,
            "{policy},{dataset},{},{},{:.6},{:.6},{:.4},{:.4}",
            e.vehicle_id,
            e.steps,
            e.total_reward,
            e.avg_acceleration,
            e.uncomfortable_pct,
            e.near_collision_pct
        )?;
    }
    Ok(())
}

pub const PLOT_HEADER: &str =
    "policy,dataset,vehicle_id,steps,total_reward,avg_accel_mps2,uncomfortable_pct,near_collision_pct";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    /// One report per split, in `Split::ALL` order.
    pub reports: Vec<MetricsReport>,
    pub episodes: Vec<EpisodeMetrics>,
}

impl EvalOutput {
    pub fn report(&self, split: Split) -> &MetricsReport {
        self.reports.iter().find(|r| r.split == split).expect("all splits reported")
    }
}

struct EpisodeAccum {
    vehicle_id: u32,
    splits: [Accum; 3],
    total_reward: f64,
}

fn split_of(human: Option<MetaAction>, rule: MetaAction) -> Option<Split> {
    human.map(|h| if h == rule { Split::Consensus } else { Split::Conflict })
}

fn run_episode<P: Policy + ?Sized>(
    policy: &P,
    env: &mut DrivingEnv,
    vehicle_id: u32,
    seed: u64,
) -> Result<EpisodeAccum, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(vehicle_id) << 20));
    let mut obs = env.reset(vehicle_id)?;
    let mut acc = EpisodeAccum {
        vehicle_id,
        splits: [Accum::default(); 3],
        total_reward: 0.0,
    };
    let dt = env.data().meta().dt();
    let mut previous = None;
    let mut step = 0usize;
    while !env.is_done() {
        let scene = env.scene()?;
        let ctx = DecisionContext {
            observation: &obs,
            scene: &scene,
            vehicle_id,
            step,
            previous,
        };
        let action = policy.decide(&ctx, &mut rng);
        let res = env.step(action)?;
        let accel = (res.info.ego_after.v - res.info.ego_before.v) / dt * FT_TO_M;
        let jerk = previous.is_some_and(|p| is_jerk(p, action));
        let near = res.info.near_collision;
        acc.splits[0].add(accel, jerk, near);
        if let Some(s) = split_of(res.info.human_label(), res.info.rule_label) {
            acc.splits[s as usize].add(accel, jerk, near);
        }
        acc.total_reward += res.reward.total;
        previous = Some(action);
        obs = res.observation;
        step += 1;
    }
    Ok(acc)
}

/// Baseline from the recorded ego itself: near-collisions of the recorded
/// position one frame ahead, recorded speed changes, and jerk over the
/// recorded labels (an unlabelable lateral axis counts as same lane).
fn run_recorded(env: &mut DrivingEnv, vehicle_id: u32) -> Result<EpisodeAccum, EvalError> {
    env.reset(vehicle_id)?;
    let st = env.state().expect("reset").clone();
    let data = env.data().clone();
    let track = data.track(vehicle_id).expect("episode vehicle exists");
    let cfg = env.config().reward;
    let dt = data.meta().dt();
    let mut acc = EpisodeAccum {
        vehicle_id,
        splits: [Accum::default(); 3],
        total_reward: 0.0,
    };
    let mut previous: Option<MetaAction> = None;
    for t in st.start..st.end {
        let (now, next) = (track.at(t).expect("in track"), track.at(t + 1).expect("in track"));
        let pos = (next.local_x, next.local_y);
        let surrounding: Vec<(f64, f64)> = env
            .surrounding(t + 1, pos, vehicle_id)
            .iter()
            .map(|p| (p.local_x, p.local_y))
            .collect();
        let near = near_collision_flag(pos, &surrounding, &cfg);
        let lon = data::label_longitudinal(track, t).ok();
        let lat = data::label_lateral(track, t).ok();
        let action = MetaAction::new(
            lat.unwrap_or(Lateral::SameLane),
            lon.unwrap_or(crate::action::Longitudinal::Cruise),
        );
        let jerk = previous.is_some_and(|p| is_jerk(p, action));
        let accel = (next.velocity - now.velocity) / dt * FT_TO_M;
        acc.splits[0].add(accel, jerk, near);

        // Rule decision for the recorded ego at frame t.
        let scene = crate::policy::RuleScene {
            ego: crate::dynamics::EgoState {
                x: now.local_x,
                y: now.local_y,
                v: now.velocity,
                phi: 0.0,
            },
            ego_lane: now.lane_id as i64,
            n_lanes: data.meta().n_lanes,
            neighbors: data
                .neighbors_around(t, now.local_y, now.lane_id as i64, Some(vehicle_id))
                .iter()
                .map(|p| (p.local_y, p.lane_id as i64))
                .collect(),
            speed_p75: env.scene()?.speed_p75,
        };
        let rule = crate::policy::rule_policy_decide(&scene, &env.config().rule_params());
        let human = lat.zip(lon).map(|(a, b)| MetaAction::new(a, b));
        if let Some(s) = split_of(human, rule) {
            acc.splits[s as usize].add(accel, jerk, near);
        }
        previous = Some(action);
    }
    Ok(acc)
}

/// Runs `work` on every vehicle using up to `workers` threads, each with
/// its own environment clone. Results come back sorted by vehicle id.
fn run_parallel<F>(
    env: &DrivingEnv,
    vehicles: &[u32],
    workers: usize,
    work: F,
) -> Result<Vec<EpisodeAccum>, EvalError>
where
    F: Fn(&mut DrivingEnv, u32) -> Result<EpisodeAccum, EvalError> + Sync,
{
    let workers = workers.clamp(1, vehicles.len().max(1));
    let chunk = vehicles.len().div_ceil(workers).max(1);
    let mut out: Vec<EpisodeAccum> = std::thread::scope(|s| {
        let handles: Vec<_> = vehicles
            .chunks(chunk)
            .map(|ids| {
                let mut local = env.clone();
                let work = &work;
                s.spawn(move || {
                    ids.iter()
                        .map(|&id| work(&mut local, id))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect::<Result<Vec<Vec<_>>, _>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    out.sort_by_key(|e| e.vehicle_id);
    Ok(out)
}

fn summarise(policy: &str, dataset: &str, episodes: Vec<EpisodeAccum>) -> EvalOutput {
    let mut totals = [Accum::default(); 3];
    let mut per_episode = Vec::with_capacity(episodes.len());
    for e in &episodes {
        for (t, s) in totals.iter_mut().zip(&e.splits) {
            t.merge(s);
        }
        let a = &e.splits[0];
        per_episode.push(EpisodeMetrics {
            vehicle_id: e.vehicle_id,
            steps: a.steps,
            total_reward: e.total_reward,
            avg_acceleration: a.mean(a.accel),
            uncomfortable_pct: a.pct(a.jerks),
            near_collision_pct: a.pct(a.near),
        });
    }
    EvalOutput {
        reports: Split::ALL
            .iter()
            .map(|&s| MetricsReport::from_accum(policy, dataset, s, &totals[s as usize]))
            .collect(),
        episodes: per_episode,
    }
}

/// Rolls `policy` through every episode in `vehicles` (all episodes when
/// `None`). Reports are independent of episode order and worker count.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    env: &DrivingEnv,
    dataset: &str,
    vehicles: Option<&[u32]>,
    seed: u64,
    workers: usize,
) -> Result<EvalOutput, EvalError> {
    let mut ids: Vec<u32> = match vehicles {
        Some(v) => v.to_vec(),
        None => env.episodes(),
    };
    if ids.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    ids.sort_unstable();
    let eps = run_parallel(env, &ids, workers, |e, id| run_episode(policy, e, id, seed))?;
    Ok(summarise(policy.name(), dataset, eps))
}

/// Metrics of the recorded human trajectories themselves.
pub fn evaluate_recorded(
    env: &DrivingEnv,
    dataset: &str,
    workers: usize,
) -> Result<EvalOutput, EvalError> {
    let ids = env.episodes();
    if ids.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let eps = run_parallel(env, &ids, workers, run_recorded)?;
    Ok(summarise("human", dataset, eps))
}
