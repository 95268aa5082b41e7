//! Double-Q training of a maneuver policy on top of a frozen encoder.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use maneuver_core::env::episode_bounds;
use maneuver_core::optim::{clip_grad_norm, Adam};
use maneuver_core::{DecisionContext, DrivingEnv, MetaAction, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nets::{argmax, Encoder, QNet, QNetConfig};
use crate::replay::{ReplayBuffer, Transition};
use crate::tape::Tape;
use crate::LearnError;

/// Which network picks the next action inside the bootstrap target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetRule {
    /// Target network selects, primary network evaluates.
    #[default]
    TargetSelects,
    /// Primary network selects, target network evaluates.
    PrimarySelects,
}

/// Bootstrap target for one head. `q_primary` and `q_target` are the two
/// networks' values at the next state.
pub fn ddqn_target(
    reward: f64,
    q_primary: &[f64],
    q_target: &[f64],
    gamma: f64,
    done: bool,
    rule: TargetRule,
) -> f64 {
    if done {
        return reward;
    }
    let next = match rule {
        TargetRule::TargetSelects => q_primary[argmax(q_target)],
        TargetRule::PrimarySelects => q_target[argmax(q_primary)],
    };
    reward + gamma * next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrlConfig {
    pub qnet: QNetConfig,
    pub gamma: f64,
    /// Factor applied to every reward before it is stored.
    pub reward_scale: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Share of a dataset's planned transitions over which ε decays.
    pub eps_fraction: f64,
    pub batch: usize,
    pub capacity: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: usize,
    pub lr: f64,
    pub clip: f64,
    pub huber_delta: f64,
    pub target_rule: TargetRule,
    /// Gradient steps per collected transition.
    pub updates_per_step: f64,
    /// Stored transitions required before the first gradient step.
    pub warmup: usize,
    /// Episodes collected between update rounds, one per worker.
    pub workers: usize,
    pub seed: u64,
}

impl Default for DrlConfig {
    fn default() -> Self {
        Self {
            qnet: QNetConfig::default(),
            gamma: 0.99,
            reward_scale: 1.0,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.5,
            batch: 32,
            capacity: 100_000,
            target_sync: 1000,
            lr: 1e-4,
            clip: 10.0,
            huber_delta: 1.0,
            target_rule: TargetRule::TargetSelects,
            updates_per_step: 1.0,
            warmup: 32,
            workers: 1,
            seed: 0,
        }
    }
}

impl DrlConfig {
    /// Linear ε schedule over `planned` transitions.
    pub fn epsilon(&self, done: usize, planned: usize) -> f64 {
        let span = self.eps_fraction * planned as f64;
        let frac = if span <= 0.0 { 1.0 } else { (done as f64 / span).min(1.0) };
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }

    fn validate(&self, encoding: usize) -> Result<(), LearnError> {
        if self.qnet.input != encoding {
            return Err(LearnError::Config(format!(
                "Q-network input {} does not match encoder width {encoding}",
                self.qnet.input
            )));
        }
        if self.batch == 0 || self.target_sync == 0 || self.workers == 0 {
            return Err(LearnError::Config("batch, target_sync and workers must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(LearnError::Config("gamma must be in [0, 1]".into()));
        }
        if !(self.updates_per_step >= 0.0 && self.reward_scale > 0.0) {
            return Err(LearnError::Config(
                "updates_per_step must be non-negative and reward_scale positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetworks {
    pub primary: QNet,
    pub target: QNet,
}

impl QNetworks {
    pub fn new(cfg: QNetConfig, seed: u64) -> Self {
        let primary = QNet::new(cfg, seed);
        Self {
            target: primary.clone(),
            primary,
        }
    }

    /// Copies the primary weights into the target network.
    pub fn sync(&mut self) {
        self.target.params.data_mut().copy_from_slice(self.primary.params.data());
    }
}

/// One dataset of the curriculum: an environment and the episodes to run
/// on it, in order. Episode ids may repeat.
#[derive(Debug, Clone)]
pub struct DrlDataset {
    pub name: String,
    pub env: DrivingEnv,
    pub episodes: Vec<u32>,
}

/// Where training writes its log and checkpoints.
#[derive(Debug, Clone)]
pub struct DrlOutput {
    pub dir: PathBuf,
}

impl DrlOutput {
    pub fn log_path(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }

    pub fn checkpoint_path(&self, index: usize, name: &str) -> PathBuf {
        self.dir.join(format!("q_{:02}_{name}.bin", index + 1))
    }
}

pub const LOG_HEADER: &str = "dataset,steps,gradient_steps,mean_loss,mean_reward,epsilon";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub name: String,
    pub episodes: usize,
    pub transitions: usize,
    pub stored: usize,
    pub gradient_steps: usize,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrlReport {
    pub datasets: Vec<DatasetSummary>,
    pub checkpoints: Vec<PathBuf>,
    /// Joint-action counts over every executed step.
    pub action_counts: Vec<usize>,
}

struct Episode {
    items: Vec<(Transition, MetaAction)>,
    reward: f64,
}

fn rollout(
    env: &mut DrivingEnv,
    encoder: &Encoder,
    q: &QNet,
    id: u32,
    eps: f64,
    reward_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Episode, LearnError> {
    let obs = env.reset(id)?;
    let mut state: Arc<[f64]> = encoder.encode(&[&obs])?.remove(0).into();
    let mut items = Vec::new();
    let mut reward = 0.0;
    loop {
        let action = if rng.gen::<f64>() < eps {
            MetaAction::from_index(rng.gen_range(0..MetaAction::COUNT)).expect("index in range")
        } else {
            q.greedy(&state)
        };
        let res = env.step(action)?;
        let next: Arc<[f64]> = encoder.encode(&[&res.observation])?.remove(0).into();
        let label = res.info.human_label().unwrap_or(res.info.rule_label);
        let r = res.reward.total;
        reward += r;
        items.push((
            Transition {
                state,
                action,
                reward: r * reward_scale,
                next: next.clone(),
                done: res.done,
            },
            label,
        ));
        state = next;
        if res.done {
            break;
        }
    }
    Ok(Episode { items, reward })
}

struct Learner {
    nets: QNetworks,
    opt: Adam<f64>,
    cfg: DrlConfig,
    steps: usize,
}

impl Learner {
    /// One Huber gradient step on a minibatch; returns the loss.
    fn update(&mut self, batch: &[Transition]) -> f64 {
        let cfg = self.cfg;
        let qc = cfg.qnet;
        let next: Vec<&[f64]> = batch.iter().map(|t| &*t.next).collect();
        let qp = self.nets.primary.q_values(&next);
        let qt = self.nets.target.q_values(&next);

        let mut tape = Tape::new();
        let p = self.nets.primary.params.bind(&mut tape);
        let flat: Vec<f64> = batch.iter().flat_map(|t| t.state.iter().copied()).collect();
        let x = tape.leaf(&[batch.len(), qc.input], flat);
        let heads = self.nets.primary.forward(&mut tape, &p, x);
        let mut loss = None;
        for (h, head) in heads.into_iter().enumerate() {
            let idx: Vec<usize> = batch.iter().map(|t| qc.head_actions(t.action)[h]).collect();
            let targets: Vec<f64> = batch
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    ddqn_target(t.reward, &qp[h][i], &qt[h][i], cfg.gamma, t.done, cfg.target_rule)
                })
                .collect();
            let q = tape.gather(head, idx);
            let l = tape.huber(q, targets, cfg.huber_delta);
            loss = Some(match loss {
                None => l,
                Some(acc) => tape.add(acc, l),
            });
        }
        let loss = loss.expect("at least one head");
        tape.backward(loss);
        let mut g = self.nets.primary.params.gather_grad(&tape, &p);
        clip_grad_norm(&mut g, cfg.clip);
        self.opt.step(self.nets.primary.params.data_mut(), &g);
        self.steps += 1;
        if self.steps % cfg.target_sync == 0 {
            self.nets.sync();
        }
        tape.value(loss)[0]
    }
}

fn episode_rng(seed: u64, dataset: usize, ordinal: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (dataset as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(ordinal as u64);
    rng
}

fn planned_transitions(ds: &DrlDataset) -> Result<usize, LearnError> {
    let mut total = 0;
    for &id in &ds.episodes {
        let track = ds
            .env
            .data()
            .track(id)
            .ok_or_else(|| LearnError::Data(format!("dataset {} has no vehicle {id}", ds.name)))?;
        let (start, end) = episode_bounds(track, ds.env.config())?;
        total += (end - start) as usize;
    }
    Ok(total)
}

/// Runs the curriculum in order with a fresh replay buffer per dataset.
/// Episodes are collected in rounds of `workers` parallel rollouts and
/// pushed in episode order, so results do not depend on thread timing.
/// The encoder is only read.
pub fn train_drl(
    encoder: &Encoder,
    datasets: &[DrlDataset],
    cfg: &DrlConfig,
    out: Option<&DrlOutput>,
) -> Result<(QNetworks, DrlReport), LearnError> {
    cfg.validate(encoder.cfg.encoding)?;
    if datasets.is_empty() {
        return Err(LearnError::Data("no training datasets".into()));
    }
    let mut log = match out {
        Some(o) => {
            fs::create_dir_all(&o.dir).map_err(|e| LearnError::io(&o.dir, e))?;
            let path = o.log_path();
            let f = File::create(&path).map_err(|e| LearnError::io(&path, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{LOG_HEADER}").map_err(|e| LearnError::io(&path, e))?;
            Some((path, w))
        }
        None => None,
    };

    let nets = QNetworks::new(cfg.qnet, cfg.seed);
    let mut learner = Learner {
        opt: Adam::new(nets.primary.params.len(), cfg.lr),
        nets,
        cfg: *cfg,
        steps: 0,
    };
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(7));
    let mut report = DrlReport {
        action_counts: vec![0; MetaAction::COUNT],
        ..DrlReport::default()
    };

    for (d, ds) in datasets.iter().enumerate() {
        if ds.episodes.is_empty() {
            return Err(LearnError::Data(format!("dataset {} has no episodes", ds.name)));
        }
        let planned = planned_transitions(ds)?;
        let mut buffer = ReplayBuffer::new(cfg.capacity);
        let mut summary = DatasetSummary {
            name: ds.name.clone(),
            episodes: ds.episodes.len(),
            transitions: 0,
            stored: 0,
            gradient_steps: 0,
            mean_reward: 0.0,
        };
        let mut reward_sum = 0.0;
        let mut owed = 0.0;
        let ordinals: Vec<usize> = (0..ds.episodes.len()).collect();
        for round in ordinals.chunks(cfg.workers) {
            let eps = cfg.epsilon(summary.transitions, planned);
            let q = &learner.nets.primary;
            let episodes: Vec<Episode> = std::thread::scope(|s| {
                let handles: Vec<_> = round
                    .iter()
                    .map(|&o| {
                        let mut env = ds.env.clone();
                        let id = ds.episodes[o];
                        s.spawn(move || {
                            let mut rng = episode_rng(cfg.seed, d, o);
                            rollout(&mut env, encoder, q, id, eps, cfg.reward_scale, &mut rng)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect::<Result<Vec<_>, _>>()
            })?;

            let mut new = 0;
            let mut round_reward = 0.0;
            for ep in episodes {
                reward_sum += ep.reward;
                round_reward += ep.reward;
                for (t, label) in ep.items {
                    report.action_counts[t.action.index()] += 1;
                    new += 1;
                    if buffer.push(t, label) {
                        summary.stored += 1;
                    }
                }
            }
            summary.transitions += new;

            owed += cfg.updates_per_step * new as f64;
            let mut loss_sum = 0.0;
            let mut n_updates = 0;
            if buffer.len() >= cfg.warmup.max(1) {
                while owed >= 1.0 {
                    owed -= 1.0;
                    let batch = buffer.sample(cfg.batch, &mut sample_rng);
                    loss_sum += learner.update(&batch);
                    n_updates += 1;
                }
            }
            summary.gradient_steps += n_updates;
            if let Some((path, w)) = log.as_mut() {
                let mean_loss = if n_updates > 0 { loss_sum / n_updates as f64 } else { f64::NAN };
                writeln!(
                    w,
                    "{},{},{},{:.6},{:.6},{:.4}",
                    ds.name,
                    summary.transitions,
                    learner.steps,
                    mean_loss,
                    round_reward / new.max(1) as f64,
                    eps
                )
                .map_err(|e| LearnError::io(path, e))?;
            }
        }
        summary.mean_reward = reward_sum / summary.episodes as f64;
        report.datasets.push(summary);
        if let Some(o) = out {
            let path = o.checkpoint_path(d, &ds.name);
            learner.nets.primary.save(&path)?;
            report.checkpoints.push(path);
        }
    }
    if let Some((path, mut w)) = log {
        w.flush().map_err(|e| LearnError::io(&path, e))?;
    }
    Ok((learner.nets, report))
}

/// Loads a pre-trained encoder; a missing file is a dependency error.
pub fn load_encoder(path: &Path) -> Result<Encoder, LearnError> {
    Encoder::load(path)
}

/// Greedy per-head policy over a learned Q-network.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub encoder: Encoder,
    pub q: QNet,
}

impl Policy for QPolicy {
    fn name(&self) -> &str {
        "drl"
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> MetaAction {
        match self.encoder.encode(&[ctx.observation]) {
            Ok(e) => self.q.greedy(&e[0]),
            Err(_) => MetaAction::IDLE,
        }
    }
}
