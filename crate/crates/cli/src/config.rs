//! Flat `key = value` run configuration.
//!
//! Defaults are overridden by the config file, which is overridden by
//! `--set key=value` flags. Every key is known up front; an unknown key or
//! an unparsable value is an error naming the key.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use maneuver_core::data::SynthConfig;
use maneuver_core::dynamics::ControlTable;
use maneuver_core::predictor::MnnTrainConfig;
use maneuver_core::reward::RewardConfig;
use maneuver_core::{EnvConfig, GridSpec, LaneConfig};
use maneuver_learn::drl::{DrlConfig, TargetRule};
use maneuver_learn::imitation::ImitationConfig;
use maneuver_learn::nets::{EncoderConfig, QNetConfig};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin} line {line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
}

/// One dataset: a name and a CSV path, or `synthetic` for generated data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub name: String,
    pub source: String,
}

impl DatasetSpec {
    pub fn is_synthetic(&self) -> bool {
        self.source == "synthetic"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Mnn,
    ConstantVelocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub train: Vec<DatasetSpec>,
    pub eval: Vec<DatasetSpec>,
    pub synth: SynthConfig,
    pub lanes: LaneConfig,
    pub grid: GridSpec,
    pub control: ControlTable<f64>,
    pub reward: RewardConfig<f64>,
    pub predictor: PredictorKind,
    pub mnn: MnnTrainConfig,
    pub imitation: ImitationConfig,
    /// Cap on episodes used to collect imitation samples per dataset
    /// (0 = all).
    pub imitation_episodes: usize,
    pub drl: DrlConfig,
    /// Episodes run per training dataset (0 = each episode once).
    pub drl_episodes: usize,
    /// Cap on evaluated episodes per dataset (0 = all).
    pub eval_episodes: usize,
    pub eval_policies: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        let encoder = EncoderConfig::default();
        Self {
            seed: 0,
            workers: 1,
            output_dir: PathBuf::from("out"),
            train: vec![DatasetSpec {
                name: "synthetic".into(),
                source: "synthetic".into(),
            }],
            eval: Vec::new(),
            synth: SynthConfig::default(),
            lanes: LaneConfig::default(),
            grid,
            control: ControlTable::default(),
            reward: RewardConfig::default(),
            predictor: PredictorKind::Mnn,
            mnn: MnnTrainConfig::default(),
            imitation: ImitationConfig::default(),
            imitation_episodes: 0,
            drl: DrlConfig {
                qnet: QNetConfig {
                    input: encoder.encoding,
                    ..QNetConfig::default()
                },
                ..DrlConfig::default()
            },
            drl_episodes: 0,
            eval_episodes: 0,
            eval_policies: vec!["recorded".into(), "rule".into(), "imitation".into(), "drl".into()],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_datasets(key: &str, value: &str) -> Result<Vec<DatasetSpec>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let (name, source) = item.split_once(':').ok_or_else(|| ConfigError::Value {
                key: key.into(),
                value: value.into(),
                reason: format!("`{item}` is not `name:path`"),
            })?;
            let (name, source) = (name.trim(), source.trim());
            if name.is_empty()
                || source.is_empty()
                || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(ConfigError::Value {
                    key: key.into(),
                    value: value.into(),
                    reason: format!("`{item}` needs a name of letters, digits, `_` or `-` and a path"),
                });
            }
            Ok(DatasetSpec {
                name: name.into(),
                source: source.into(),
            })
        })
        .collect()
}

fn show_datasets(d: &[DatasetSpec]) -> String {
    d.iter()
        .map(|d| format!("{}:{}", d.name, d.source))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Defaults, then `path` (if any), then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.display().to_string(),
                source,
            })?;
            cfg.apply_text(&text, &p.display().to_string())?;
        }
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: "--set".into(),
                line: i + 1,
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.into(),
                line: n + 1,
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let k = key;
        match key {
            "seed" => self.seed = parse(k, v)?,
            "workers" => self.workers = parse(k, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "data.train" => self.train = parse_datasets(k, v)?,
            "data.eval" => self.eval = parse_datasets(k, v)?,
            "synth.vehicles" => self.synth.n_vehicles = parse(k, v)?,
            "synth.frames" => self.synth.n_frames = parse(k, v)?,
            "synth.base_speed" => self.synth.base_speed = parse(k, v)?,
            "synth.speed_spread" => self.synth.speed_spread = parse(k, v)?,
            "synth.lane_change_rate" => self.synth.lane_change_rate = parse(k, v)?,
            "synth.brake_rate" => self.synth.brake_rate = parse(k, v)?,
            "synth.headway" => self.synth.headway = parse(k, v)?,
            "lanes.count" => self.lanes.n_lanes = parse(k, v)?,
            "lanes.width" => self.lanes.lane_width = parse(k, v)?,
            "lanes.frame_rate" => self.lanes.frame_rate = parse(k, v)?,
            "grid.rows" => self.grid.rows = parse(k, v)?,
            "grid.cols" => self.grid.cols = parse(k, v)?,
            "grid.past" => self.grid.past = parse(k, v)?,
            "grid.future" => self.grid.future = parse(k, v)?,
            "grid.cell_length" => self.grid.cell_length = parse(k, v)?,
            "control.dphi_hard" => self.control.dphi_hard = parse(k, v)?,
            "control.dphi_soft" => self.control.dphi_soft = parse(k, v)?,
            "control.dv_accelerate" => self.control.dv_accelerate = parse(k, v)?,
            "control.dv_cruise" => self.control.dv_cruise = parse(k, v)?,
            "control.dv_decelerate" => self.control.dv_decelerate = parse(k, v)?,
            "control.dv_brake" => self.control.dv_brake = parse(k, v)?,
            "reward.c1" => self.reward.c1 = parse(k, v)?,
            "reward.c2" => self.reward.c2 = parse(k, v)?,
            "reward.k1" => self.reward.k1 = parse(k, v)?,
            "reward.k2" => self.reward.k2 = parse(k, v)?,
            "reward.l" => self.reward.l = parse(k, v)?,
            "reward.d1" => self.reward.d1 = parse(k, v)?,
            "reward.d2" => self.reward.d2 = parse(k, v)?,
            "reward.imit_x_weight" => self.reward.imit_x_weight = parse(k, v)?,
            "reward.imit_y_weight" => self.reward.imit_y_weight = parse(k, v)?,
            "reward.imit_scale" => self.reward.imit_scale = parse(k, v)?,
            "predictor.kind" => {
                self.predictor = match v {
                    "mnn" => PredictorKind::Mnn,
                    "constant_velocity" => PredictorKind::ConstantVelocity,
                    _ => {
                        return Err(ConfigError::Value {
                            key: k.into(),
                            value: v.into(),
                            reason: "expected `mnn` or `constant_velocity`".into(),
                        })
                    }
                }
            }
            "mnn.hidden" => self.mnn.hidden = parse(k, v)?,
            "mnn.history" => self.mnn.history = parse(k, v)?,
            "mnn.epochs" => self.mnn.epochs = parse(k, v)?,
            "mnn.lr" => self.mnn.learning_rate = parse(k, v)?,
            "mnn.anneal" => self.mnn.anneal = parse(k, v)?,
            "mnn.batch" => self.mnn.batch_size = parse(k, v)?,
            "mnn.stride" => self.mnn.stride = parse(k, v)?,
            "mnn.max_windows" => self.mnn.max_windows = parse(k, v)?,
            "encoder.conv1" => self.imitation.encoder.conv1 = parse(k, v)?,
            "encoder.conv2" => self.imitation.encoder.conv2 = parse(k, v)?,
            "encoder.pool" => self.imitation.encoder.pool = parse(k, v)?,
            "encoder.encoding" => self.imitation.encoder.encoding = parse(k, v)?,
            "imitation.head_hidden" => self.imitation.head_hidden = parse(k, v)?,
            "imitation.epochs" => self.imitation.epochs = parse(k, v)?,
            "imitation.batch" => self.imitation.batch = parse(k, v)?,
            "imitation.lr" => self.imitation.lr = parse(k, v)?,
            "imitation.clip" => self.imitation.clip = parse(k, v)?,
            "imitation.cruise_every" => self.imitation.cruise_every = parse(k, v)?,
            "imitation.prune" => self.imitation.prune = parse(k, v)?,
            "imitation.episodes" => self.imitation_episodes = parse(k, v)?,
            "drl.hidden1" => self.drl.qnet.hidden1 = parse(k, v)?,
            "drl.hidden2" => self.drl.qnet.hidden2 = parse(k, v)?,
            "drl.joint_head" => self.drl.qnet.joint = parse(k, v)?,
            "drl.gamma" => self.drl.gamma = parse(k, v)?,
            "drl.reward_scale" => self.drl.reward_scale = parse(k, v)?,
            "drl.eps_start" => self.drl.eps_start = parse(k, v)?,
            "drl.eps_end" => self.drl.eps_end = parse(k, v)?,
            "drl.eps_fraction" => self.drl.eps_fraction = parse(k, v)?,
            "drl.batch" => self.drl.batch = parse(k, v)?,
            "drl.capacity" => self.drl.capacity = parse(k, v)?,
            "drl.target_sync" => self.drl.target_sync = parse(k, v)?,
            "drl.lr" => self.drl.lr = parse(k, v)?,
            "drl.clip" => self.drl.clip = parse(k, v)?,
            "drl.huber_delta" => self.drl.huber_delta = parse(k, v)?,
            "drl.target_rule" => {
                self.drl.target_rule = match v {
                    "target_selects" => TargetRule::TargetSelects,
                    "primary_selects" => TargetRule::PrimarySelects,
                    _ => {
                        return Err(ConfigError::Value {
                            key: k.into(),
                            value: v.into(),
                            reason: "expected `target_selects` or `primary_selects`".into(),
                        })
                    }
                }
            }
            "drl.updates_per_step" => self.drl.updates_per_step = parse(k, v)?,
            "drl.warmup" => self.drl.warmup = parse(k, v)?,
            "drl.episodes" => self.drl_episodes = parse(k, v)?,
            "eval.episodes" => self.eval_episodes = parse(k, v)?,
            "eval.policies" => {
                let list: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if let Some(bad) = list
                    .iter()
                    .find(|p| !["recorded", "rule", "imitation", "drl"].contains(&p.as_str()))
                {
                    return Err(ConfigError::Value {
                        key: k.into(),
                        value: v.into(),
                        reason: format!("unknown policy `{bad}`"),
                    });
                }
                self.eval_policies = list;
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        // The Q-network always reads the encoder's output.
        self.drl.qnet.input = self.imitation.encoder.encoding;
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let g = &self.grid;
        let c = &self.control;
        let r = &self.reward;
        let m = &self.mnn;
        let i = &self.imitation;
        let d = &self.drl;
        vec![
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
            ("data.train", show_datasets(&self.train)),
            ("data.eval", show_datasets(&self.eval)),
            ("synth.vehicles", s.n_vehicles.to_string()),
            ("synth.frames", s.n_frames.to_string()),
            ("synth.base_speed", s.base_speed.to_string()),
            ("synth.speed_spread", s.speed_spread.to_string()),
            ("synth.lane_change_rate", s.lane_change_rate.to_string()),
            ("synth.brake_rate", s.brake_rate.to_string()),
            ("synth.headway", s.headway.to_string()),
            ("lanes.count", self.lanes.n_lanes.to_string()),
            ("lanes.width", self.lanes.lane_width.to_string()),
            ("lanes.frame_rate", self.lanes.frame_rate.to_string()),
            ("grid.rows", g.rows.to_string()),
            ("grid.cols", g.cols.to_string()),
            ("grid.past", g.past.to_string()),
            ("grid.future", g.future.to_string()),
            ("grid.cell_length", g.cell_length.to_string()),
            ("control.dphi_hard", c.dphi_hard.to_string()),
            ("control.dphi_soft", c.dphi_soft.to_string()),
            ("control.dv_accelerate", c.dv_accelerate.to_string()),
            ("control.dv_cruise", c.dv_cruise.to_string()),
            ("control.dv_decelerate", c.dv_decelerate.to_string()),
            ("control.dv_brake", c.dv_brake.to_string()),
            ("reward.c1", r.c1.to_string()),
            ("reward.c2", r.c2.to_string()),
            ("reward.k1", r.k1.to_string()),
            ("reward.k2", r.k2.to_string()),
            ("reward.l", r.l.to_string()),
            ("reward.d1", r.d1.to_string()),
            ("reward.d2", r.d2.to_string()),
            ("reward.imit_x_weight", r.imit_x_weight.to_string()),
            ("reward.imit_y_weight", r.imit_y_weight.to_string()),
            ("reward.imit_scale", r.imit_scale.to_string()),
            (
                "predictor.kind",
                match self.predictor {
                    PredictorKind::Mnn => "mnn",
                    PredictorKind::ConstantVelocity => "constant_velocity",
                }
                .into(),
            ),
            ("mnn.hidden", m.hidden.to_string()),
            ("mnn.history", m.history.to_string()),
            ("mnn.epochs", m.epochs.to_string()),
            ("mnn.lr", m.learning_rate.to_string()),
            ("mnn.anneal", m.anneal.to_string()),
            ("mnn.batch", m.batch_size.to_string()),
            ("mnn.stride", m.stride.to_string()),
            ("mnn.max_windows", m.max_windows.to_string()),
            ("encoder.conv1", i.encoder.conv1.to_string()),
            ("encoder.conv2", i.encoder.conv2.to_string()),
            ("encoder.pool", i.encoder.pool.to_string()),
            ("encoder.encoding", i.encoder.encoding.to_string()),
            ("imitation.head_hidden", i.head_hidden.to_string()),
            ("imitation.epochs", i.epochs.to_string()),
            ("imitation.batch", i.batch.to_string()),
            ("imitation.lr", i.lr.to_string()),
            ("imitation.clip", i.clip.to_string()),
            ("imitation.cruise_every", i.cruise_every.to_string()),
            ("imitation.prune", i.prune.to_string()),
            ("imitation.episodes", self.imitation_episodes.to_string()),
            ("drl.hidden1", d.qnet.hidden1.to_string()),
            ("drl.hidden2", d.qnet.hidden2.to_string()),
            ("drl.joint_head", d.qnet.joint.to_string()),
            ("drl.gamma", d.gamma.to_string()),
            ("drl.reward_scale", d.reward_scale.to_string()),
            ("drl.eps_start", d.eps_start.to_string()),
            ("drl.eps_end", d.eps_end.to_string()),
            ("drl.eps_fraction", d.eps_fraction.to_string()),
            ("drl.batch", d.batch.to_string()),
            ("drl.capacity", d.capacity.to_string()),
            ("drl.target_sync", d.target_sync.to_string()),
            ("drl.lr", d.lr.to_string()),
            ("drl.clip", d.clip.to_string()),
            ("drl.huber_delta", d.huber_delta.to_string()),
            (
                "drl.target_rule",
                match d.target_rule {
                    TargetRule::TargetSelects => "target_selects",
                    TargetRule::PrimarySelects => "primary_selects",
                }
                .into(),
            ),
            ("drl.updates_per_step", d.updates_per_step.to_string()),
            ("drl.warmup", d.warmup.to_string()),
            ("drl.episodes", self.drl_episodes.to_string()),
            ("eval.episodes", self.eval_episodes.to_string()),
            ("eval.policies", self.eval_policies.join(",")),
        ]
    }

    /// Canonical text form: one `key = value` line per key.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn hash(&self) -> String {
        crate::manifest::hex(&Sha256::digest(self.to_text().as_bytes()))
    }

    fn invalid(key: &str, value: impl Display, reason: &str) -> ConfigError {
        ConfigError::Value {
            key: key.into(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Err(e) = self.grid.validate() {
            return Err(Self::invalid("grid.rows", self.grid.rows, &e.to_string()));
        }
        if let Err(e) = self.reward.validate() {
            return Err(Self::invalid("reward.d1", self.reward.d1, &e));
        }
        if self.lanes.n_lanes == 0 {
            return Err(Self::invalid("lanes.count", 0, "must be positive"));
        }
        if !(self.lanes.frame_rate > 0.0) {
            return Err(Self::invalid("lanes.frame_rate", self.lanes.frame_rate, "must be positive"));
        }
        if self.workers == 0 {
            return Err(Self::invalid("workers", 0, "must be positive"));
        }
        let mut names: Vec<&str> = self.train.iter().chain(&self.eval).map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        let n = names.len();
        names.dedup();
        if names.len() != n {
            return Err(Self::invalid("data.train", show_datasets(&self.train), "dataset names must be unique"));
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            in_channels: self.grid.channels(),
            rows: self.grid.rows,
            cols: self.grid.cols,
            ..self.imitation.encoder
        }
    }

    pub fn imitation_config(&self) -> ImitationConfig {
        ImitationConfig {
            encoder: self.encoder_config(),
            seed: self.seed,
            ..self.imitation
        }
    }

    pub fn drl_config(&self) -> DrlConfig {
        DrlConfig {
            seed: self.seed,
            workers: self.workers,
            ..self.drl
        }
    }

    pub fn mnn_config(&self) -> MnnTrainConfig {
        MnnTrainConfig {
            seed: self.seed,
            ..self.mnn.clone()
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            grid: self.grid,
            control: self.control,
            reward: RewardConfig {
                lane_width: self.lanes.lane_width,
                n_lanes: self.lanes.n_lanes,
                ..self.reward
            },
            ..EnvConfig::default()
        }
    }

    /// Synthetic generator settings for the `index`-th synthetic dataset.
    pub fn synth_config(&self, index: usize) -> SynthConfig {
        SynthConfig {
            lanes: self.lanes,
            seed: self.seed.wrapping_add(index as u64),
            ..self.synth.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = RunConfig::default();
        let mut other = RunConfig::default();
        for (k, v) in cfg.entries() {
            other.set(k, &v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(other, cfg);
        let text = cfg.to_text();
        let mut parsed = RunConfig::default();
        parsed.apply_text(&text, "dump").unwrap();
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn defaults_match_model_constants() {
        let c = RunConfig::default();
        let t: std::collections::BTreeMap<_, _> = c.entries().into_iter().collect();
        for (k, v) in [
            ("reward.c1", "5"),
            ("reward.c2", "125"),
            ("reward.k1", "2"),
            ("reward.k2", "-6"),
            ("reward.l", "15"),
            ("reward.d1", "16"),
            ("reward.d2", "25"),
            ("lanes.frame_rate", "10"),
            ("grid.rows", "13"),
            ("grid.cols", "3"),
            ("grid.past", "30"),
            ("grid.future", "30"),
            ("imitation.cruise_every", "5"),
            ("control.dphi_hard", "0.04"),
            ("control.dphi_soft", "0.01"),
            ("control.dv_accelerate", "0.5"),
            ("control.dv_decelerate", "-0.5"),
            ("control.dv_brake", "-1.5"),
            ("drl.gamma", "0.99"),
            ("drl.capacity", "100000"),
            ("drl.target_sync", "1000"),
            ("drl.lr", "0.0001"),
        ] {
            assert_eq!(t[k], v, "{k}");
        }
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = RunConfig::default();
        let e = c.set("reward.c9", "1").unwrap_err();
        assert!(e.to_string().contains("reward.c9"));
        let e = c.set("drl.batch", "many").unwrap_err();
        assert!(e.to_string().contains("drl.batch"));
        let e = c.set("data.train", "nocolon").unwrap_err();
        assert!(e.to_string().contains("data.train"));
        let e = c.apply_text("seed 3", "cfg").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn overrides_beat_file_and_hash_changes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# run\nseed = 4\nworkers = 2 # inline\n").unwrap();
        let c = RunConfig::load(Some(&p), &["seed=9".into()]).unwrap();
        assert_eq!((c.seed, c.workers), (9, 2));
        let d = RunConfig::load(Some(&p), &[]).unwrap();
        assert_ne!(c.hash(), d.hash());
        assert_eq!(d.hash(), RunConfig::load(Some(&p), &[]).unwrap().hash());
        assert_eq!(c.hash().len(), 64);
    }
}
