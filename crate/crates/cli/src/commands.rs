use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use maneuver_core::data::synth_generate;
use maneuver_core::env::{write_trace, TraceRow};
use maneuver_core::eval::{
    evaluate_policy, evaluate_recorded, write_plot_data, write_report, EvalOutput, PLOT_HEADER,
};
use maneuver_core::policy::RulePolicy;
use maneuver_core::predictor::{mnn_train, ConstantVelocity, TrajectoryPredictor};
use maneuver_core::{DrivingEnv, FrameIndex, MetaAction, MnnParams, Policy};
use maneuver_learn::drl::{train_drl, DrlDataset, DrlOutput, QPolicy};
use maneuver_learn::imitation::{collect_samples, train_imitation, ImitationModel, ImitationPolicy};
use maneuver_learn::nets::{Encoder, QNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{DatasetSpec, PredictorKind, RunConfig};
use crate::manifest::{self, hex};
use crate::CliError;

pub const MNN_FILE: &str = "mnn.bin";
pub const ENCODER_FILE: &str = "encoder.bin";
pub const HEADS_FILE: &str = "imitation_heads.bin";
pub const Q_FILE: &str = "q.bin";
pub const REPORT_FILE: &str = "report.csv";
pub const PLOT_FILE: &str = "plot_data.csv";

#[derive(Debug, Clone, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Parse every configured dataset and cache the cleaned frame index.
    Ingest,
    /// Maneuver label distribution per dataset.
    LabelStats,
    /// Train the trajectory predictor on the first training dataset.
    TrainMnn,
    /// Train the grid encoder and imitation heads on recorded maneuvers.
    TrainImitation,
    /// Train the Q-network over the curriculum of training datasets.
    TrainDrl,
    /// Metrics report for the configured policies on the evaluation datasets.
    Evaluate,
    /// Per-step trace of one policy on one episode.
    ReplayRender {
        /// Dataset name; defaults to the first evaluation dataset.
        #[arg(long)]
        dataset: Option<String>,
        /// Ego vehicle id; defaults to the first episode.
        #[arg(long)]
        vehicle: Option<u32>,
        /// One of recorded, rule, imitation, drl.
        #[arg(long, default_value = "rule")]
        policy: String,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::LabelStats => "label-stats",
            Command::TrainMnn => "train-mnn",
            Command::TrainImitation => "train-imitation",
            Command::TrainDrl => "train-drl",
            Command::Evaluate => "evaluate",
            Command::ReplayRender { .. } => "replay-render",
        }
    }
}

/// Loads the configuration, runs `command` and records its artifacts.
/// Returns the written paths.
pub fn run(
    command: &Command,
    config: Option<&Path>,
    overrides: &[String],
) -> Result<Vec<PathBuf>, CliError> {
    let cfg = RunConfig::load(config, overrides)?;
    let ctx = Ctx { cfg };
    ctx.create_dir(&ctx.cfg.output_dir)?;
    let mut artifacts = match command {
        Command::Ingest => ctx.ingest()?,
        Command::LabelStats => ctx.label_stats()?,
        Command::TrainMnn => ctx.train_mnn()?,
        Command::TrainImitation => ctx.train_imitation()?,
        Command::TrainDrl => ctx.train_drl()?,
        Command::Evaluate => ctx.evaluate()?,
        Command::ReplayRender {
            dataset,
            vehicle,
            policy,
        } => ctx.replay_render(dataset.as_deref(), *vehicle, policy)?,
    };
    artifacts.push(ctx.write_config()?);
    manifest::record(&ctx.cfg.output_dir, command.name(), &ctx.cfg.hash(), &artifacts)?;
    Ok(artifacts)
}

struct Ctx {
    cfg: RunConfig,
}

impl Ctx {
    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    fn create_dir(&self, p: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
    }

    fn create(&self, p: &Path) -> Result<BufWriter<File>, CliError> {
        if let Some(parent) = p.parent() {
            self.create_dir(parent)?;
        }
        File::create(p).map(BufWriter::new).map_err(|e| CliError::io(p, e))
    }

    fn finish(&self, p: &Path, mut w: BufWriter<File>) -> Result<(), CliError> {
        w.flush().map_err(|e| CliError::io(p, e))
    }

    fn require(&self, rel: &str, producer: &'static str) -> Result<PathBuf, CliError> {
        let p = self.out(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Dependency { path: p, producer })
        }
    }

    fn write_config(&self) -> Result<PathBuf, CliError> {
        let p = self.out(&format!("configs/{}.cfg", self.cfg.hash()));
        let mut w = self.create(&p)?;
        w.write_all(self.cfg.to_text().as_bytes())
            .map_err(|e| CliError::io(&p, e))?;
        self.finish(&p, w)?;
        Ok(p)
    }

    /// Evaluation datasets, falling back to the training datasets.
    fn eval_specs(&self) -> &[DatasetSpec] {
        if self.cfg.eval.is_empty() {
            &self.cfg.train
        } else {
            &self.cfg.eval
        }
    }

    fn all_specs(&self) -> Vec<&DatasetSpec> {
        let mut v: Vec<&DatasetSpec> = self.cfg.train.iter().collect();
        for s in &self.cfg.eval {
            if !v.contains(&s) {
                v.push(s);
            }
        }
        v
    }

    /// Everything that determines the content of a dataset.
    fn dataset_key(&self, spec: &DatasetSpec) -> String {
        let mut text = format!("{}\n{}\n", spec.name, spec.source);
        for (k, v) in self.cfg.entries() {
            let synthetic = spec.is_synthetic() && (k.starts_with("synth.") || k == "seed");
            if k.starts_with("lanes.") || synthetic {
                text.push_str(&format!("{k}={v}\n"));
            }
        }
        hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    fn cache_path(&self, spec: &DatasetSpec) -> PathBuf {
        self.out(&format!("data/{}-{}.csv", spec.name, self.dataset_key(spec)))
    }

    fn synth_seed(&self, spec: &DatasetSpec) -> u64 {
        let d = Sha256::digest(spec.name.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        self.cfg.seed ^ u64::from_le_bytes(b)
    }

    fn read_source(&self, spec: &DatasetSpec) -> Result<FrameIndex, CliError> {
        if spec.is_synthetic() {
            let mut s = self.cfg.synth_config(0);
            s.seed = self.synth_seed(spec);
            return Ok(synth_generate(&s)?);
        }
        let p = Path::new(&spec.source);
        if !p.is_file() {
            return Err(CliError::Input(format!(
                "dataset `{}`: {} does not exist",
                spec.name,
                p.display()
            )));
        }
        Ok(FrameIndex::ingest_csv(p, self.cfg.lanes)?)
    }

    /// Cached frame index if `ingest` produced one for the current
    /// settings, otherwise the source itself.
    fn load(&self, spec: &DatasetSpec) -> Result<Arc<FrameIndex>, CliError> {
        let cache = self.cache_path(spec);
        let idx = if cache.is_file() {
            FrameIndex::ingest_csv(&cache, self.cfg.lanes)?
        } else {
            self.read_source(spec)?
        };
        Ok(Arc::new(idx))
    }

    fn predictor(&self) -> Result<Arc<dyn TrajectoryPredictor>, CliError> {
        match self.cfg.predictor {
            PredictorKind::ConstantVelocity => Ok(Arc::new(ConstantVelocity)),
            PredictorKind::Mnn => {
                let p = self.require(MNN_FILE, "train-mnn")?;
                let f = File::open(&p).map_err(|e| CliError::io(&p, e))?;
                let params: MnnParams = MnnParams::read_from(std::io::BufReader::new(f))?;
                Ok(Arc::new(params))
            }
        }
    }

    fn env(&self, spec: &DatasetSpec, predictor: &Arc<dyn TrajectoryPredictor>) -> Result<DrivingEnv, CliError> {
        let mut env_cfg = self.cfg.env_config();
        env_cfg.predictor_history = self.cfg.mnn.history;
        Ok(DrivingEnv::new(self.load(spec)?, predictor.clone(), env_cfg))
    }

    fn capped(ids: Vec<u32>, cap: usize) -> Vec<u32> {
        if cap == 0 {
            ids
        } else {
            ids.into_iter().take(cap).collect()
        }
    }

    fn ingest(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::new();
        for spec in self.all_specs() {
            let idx = self.read_source(spec)?;
            let p = self.cache_path(spec);
            self.create_dir(p.parent().expect("cache lives in data/"))?;
            idx.write_csv(&p)?;
            println!(
                "{}: {} vehicles, {} frames, {} rows dropped",
                spec.name,
                idx.n_tracks(),
                idx.frame_ids().count(),
                idx.dropped_rows()
            );
            out.push(p);
        }
        Ok(out)
    }

    fn label_stats(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::new();
        for spec in self.all_specs() {
            let dist = self.load(spec)?.label_distribution()?;
            let p = self.out(&format!("labels/{}.csv", spec.name));
            let mut w = self.create(&p)?;
            dist.write_csv(&mut w).map_err(|e| CliError::io(&p, e))?;
            self.finish(&p, w)?;
            out.push(p);
        }
        Ok(out)
    }

    fn first_train(&self) -> Result<&DatasetSpec, CliError> {
        self.cfg
            .train
            .first()
            .ok_or_else(|| CliError::Input("data.train is empty".into()))
    }

    fn train_mnn(&self) -> Result<Vec<PathBuf>, CliError> {
        let idx = self.load(self.first_train()?)?;
        let trained = mnn_train::<f64>(&idx, &self.cfg.mnn_config())?;
        let p = self.out(MNN_FILE);
        let mut w = self.create(&p)?;
        trained.params.write_to(&mut w)?;
        self.finish(&p, w)?;
        let log = self.out("mnn_log.csv");
        let mut w = self.create(&log)?;
        let res: std::io::Result<()> = (|| {
            writeln!(w, "epoch,mean_loss")?;
            for (i, l) in trained.epoch_loss.iter().enumerate() {
                writeln!(w, "{},{l:.9}", i + 1)?;
            }
            Ok(())
        })();
        res.map_err(|e| CliError::io(&log, e))?;
        self.finish(&log, w)?;
        Ok(vec![p, log])
    }

    fn train_imitation(&self) -> Result<Vec<PathBuf>, CliError> {
        if self.cfg.train.is_empty() {
            return Err(CliError::Input("data.train is empty".into()));
        }
        let predictor = self.predictor()?;
        let mut samples = Vec::new();
        for spec in &self.cfg.train {
            let mut env = self.env(spec, &predictor)?;
            let ids = Self::capped(env.episodes(), self.cfg.imitation_episodes);
            samples.extend(collect_samples(&mut env, &ids)?);
        }
        let (model, report) = train_imitation(&samples, &self.cfg.imitation_config())?;
        let (enc, heads) = (self.out(ENCODER_FILE), self.out(HEADS_FILE));
        model.save(&enc, &heads)?;
        let log = self.out("imitation_log.csv");
        let mut w = self.create(&log)?;
        let res: std::io::Result<()> = (|| {
            writeln!(w, "epoch,samples,mean_loss")?;
            for (i, (l, n)) in report.epoch_loss.iter().zip(&report.epoch_samples).enumerate() {
                writeln!(w, "{},{n},{l:.9}", i + 1)?;
            }
            Ok(())
        })();
        res.map_err(|e| CliError::io(&log, e))?;
        self.finish(&log, w)?;
        println!(
            "{} samples, {} left after pruning",
            samples.len(),
            report.remaining
        );
        Ok(vec![enc, heads, log])
    }

    fn train_drl(&self) -> Result<Vec<PathBuf>, CliError> {
        let enc_path = self.require(ENCODER_FILE, "train-imitation")?;
        let encoder = Encoder::load(&enc_path)?;
        let predictor = self.predictor()?;
        let mut data = Vec::new();
        for spec in &self.cfg.train {
            let env = self.env(spec, &predictor)?;
            let ids = env.episodes();
            let episodes = match self.cfg.drl_episodes {
                0 => ids,
                n if ids.is_empty() => vec![0; n],
                n => ids.iter().copied().cycle().take(n).collect(),
            };
            data.push(DrlDataset {
                name: spec.name.clone(),
                env,
                episodes,
            });
        }
        let output = DrlOutput { dir: self.out("drl") };
        let (nets, report) = train_drl(&encoder, &data, &self.cfg.drl_config(), Some(&output))?;
        let q = self.out(Q_FILE);
        nets.primary.save(&q)?;
        for d in &report.datasets {
            println!(
                "{}: {} episodes, {} transitions, {} stored, {} updates, mean reward {:.3}",
                d.name, d.episodes, d.transitions, d.stored, d.gradient_steps, d.mean_reward
            );
        }
        let mut out = vec![output.log_path()];
        out.extend(report.checkpoints);
        out.push(q);
        Ok(out)
    }

    /// Resolves a policy by name, loading its checkpoints.
    fn policy(&self, name: &str) -> Result<Option<Box<dyn Policy>>, CliError> {
        Ok(match name {
            "recorded" => None,
            "rule" => Some(Box::new(RulePolicy {
                params: self.cfg.env_config().rule_params(),
            })),
            "imitation" => {
                let enc = self.require(ENCODER_FILE, "train-imitation")?;
                let heads = self.require(HEADS_FILE, "train-imitation")?;
                Some(Box::new(ImitationPolicy {
                    model: ImitationModel::load(&enc, &heads)?,
                }))
            }
            "drl" => {
                let enc = self.require(ENCODER_FILE, "train-imitation")?;
                let q = self.require(Q_FILE, "train-drl")?;
                Some(Box::new(QPolicy {
                    encoder: Encoder::load(&enc)?,
                    q: QNet::load(&q)?,
                }))
            }
            other => return Err(CliError::Input(format!("unknown policy `{other}`"))),
        })
    }

    fn run_policy(
        &self,
        policy: Option<&dyn Policy>,
        env: &DrivingEnv,
        dataset: &str,
        ids: Option<&[u32]>,
    ) -> Result<EvalOutput, CliError> {
        Ok(match policy {
            Some(p) => evaluate_policy(p, env, dataset, ids, self.cfg.seed, self.cfg.workers)?,
            None => evaluate_recorded(env, dataset, self.cfg.workers)?,
        })
    }

    fn evaluate(&self) -> Result<Vec<PathBuf>, CliError> {
        // Resolve every policy first so a missing checkpoint fails fast.
        let policies = self
            .cfg
            .eval_policies
            .iter()
            .map(|n| Ok((n.as_str(), self.policy(n)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let predictor = self.predictor()?;
        let mut reports = Vec::new();
        let mut plots = Vec::new();
        for spec in self.eval_specs() {
            let env = self.env(spec, &predictor)?;
            let ids = Self::capped(env.episodes(), self.cfg.eval_episodes);
            for (_, p) in &policies {
                let res = self.run_policy(p.as_deref(), &env, &spec.name, Some(&ids))?;
                let name = res.reports[0].policy.clone();
                reports.extend(res.reports);
                plots.push((name, spec.name.clone(), res.episodes));
            }
        }
        let rp = self.out(REPORT_FILE);
        let mut w = self.create(&rp)?;
        write_report(&mut w, &reports).map_err(|e| CliError::io(&rp, e))?;
        self.finish(&rp, w)?;
        let pp = self.out(PLOT_FILE);
        let mut w = self.create(&pp)?;
        let res: std::io::Result<()> = (|| {
            writeln!(w, "{PLOT_HEADER}")?;
            for (policy, dataset, eps) in &plots {
                write_plot_data(&mut w, policy, dataset, eps)?;
            }
            Ok(())
        })();
        res.map_err(|e| CliError::io(&pp, e))?;
        self.finish(&pp, w)?;
        Ok(vec![rp, pp])
    }

    fn replay_render(
        &self,
        dataset: Option<&str>,
        vehicle: Option<u32>,
        policy_name: &str,
    ) -> Result<Vec<PathBuf>, CliError> {
        let specs = self.all_specs();
        let spec = match dataset {
            Some(n) => *specs
                .iter()
                .find(|s| s.name == n)
                .ok_or_else(|| CliError::Input(format!("unknown dataset `{n}`")))?,
            None => self
                .eval_specs()
                .first()
                .ok_or_else(|| CliError::Input("no datasets configured".into()))?,
        };
        let policy = self.policy(policy_name)?;
        let predictor = self.predictor()?;
        let mut env = self.env(spec, &predictor)?;
        let episodes = env.episodes();
        let id = match vehicle {
            Some(v) if episodes.contains(&v) => v,
            Some(v) => {
                return Err(CliError::Input(format!(
                    "vehicle {v} has no episode in dataset `{}`",
                    spec.name
                )))
            }
            None => *episodes
                .first()
                .ok_or_else(|| CliError::Input(format!("dataset `{}` has no episodes", spec.name)))?,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut rows = Vec::new();
        let mut obs = env.reset(id)?;
        let mut previous = None;
        let mut step = 0;
        while !env.is_done() {
            let action = match &policy {
                Some(p) => {
                    let scene = env.scene()?;
                    let ctx = maneuver_core::DecisionContext {
                        observation: &obs,
                        scene: &scene,
                        vehicle_id: id,
                        step,
                        previous,
                    };
                    p.decide(&ctx, &mut rng)
                }
                None => {
                    let (lat, lon) = env.human_labels()?;
                    match (lat, lon) {
                        (Some(a), Some(b)) => MetaAction::new(a, b),
                        _ => env.rule_decision()?,
                    }
                }
            };
            let res = env.step(action)?;
            rows.push(TraceRow::from(&res));
            obs = res.observation;
            previous = Some(action);
            step += 1;
        }

        let stem = format!("traces/{}_{id}_{policy_name}", spec.name);
        let tp = self.out(&format!("{stem}.csv"));
        let mut w = self.create(&tp)?;
        write_trace(&mut w, &rows).map_err(|e| CliError::io(&tp, e))?;
        self.finish(&tp, w)?;

        let res = self.run_policy(policy.as_deref(), &env, &spec.name, Some(&[id]))?;
        let pp = self.out(&format!("{stem}_plot.csv"));
        let mut w = self.create(&pp)?;
        let policy_label = res.reports[0].policy.clone();
        let r: std::io::Result<()> = (|| {
            writeln!(w, "{PLOT_HEADER}")?;
            write_plot_data(&mut w, &policy_label, &spec.name, &res.episodes)
        })();
        r.map_err(|e| CliError::io(&pp, e))?;
        self.finish(&pp, w)?;
        Ok(vec![tp, pp])
    }
}
