//! Imitation pre-training of the grid encoder with two decision heads.

use std::path::Path;

use maneuver_core::{
    ContextGrid, DecisionContext, DrivingEnv, Lateral, Longitudinal, MetaAction, Policy,
};
use maneuver_core::optim::{clip_grad_norm, Adam};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nets::{argmax, Encoder, EncoderConfig, ImitationHeads};
use crate::tape::Tape;
use crate::LearnError;

/// One labelled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub grid: ContextGrid,
    pub label: MetaAction,
}

/// Keeps every `every`-th cruise sample and all others. The counter runs
/// across calls, so successive epochs see different cruise samples when
/// the cruise count is not a multiple of `every`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CruiseFilter {
    pub every: u64,
    count: u64,
}

impl CruiseFilter {
    pub fn new(every: u64) -> Self {
        Self { every: every.max(1), count: 0 }
    }

    pub fn keep(&mut self, label: MetaAction) -> bool {
        if label.longitudinal != Longitudinal::Cruise {
            return true;
        }
        let keep = self.count % self.every == 0;
        self.count += 1;
        keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImitationConfig {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip: f64,
    /// Keep one cruise sample in this many.
    pub cruise_every: u64,
    /// Drop samples the model already gets right after the first epoch.
    pub prune: bool,
    pub seed: u64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            head_hidden: 64,
            epochs: 10,
            batch: 32,
            lr: 1e-3,
            clip: 10.0,
            cruise_every: 5,
            prune: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationModel {
    pub encoder: Encoder,
    pub heads: ImitationHeads,
}

impl ImitationModel {
    pub fn new(cfg: &ImitationConfig) -> Self {
        let encoder = Encoder::new(cfg.encoder, cfg.seed);
        let heads = ImitationHeads::new(cfg.encoder.encoding, cfg.head_hidden, cfg.seed ^ 0x5eed);
        Self { encoder, heads }
    }

    /// Class probabilities `(lateral, longitudinal)` per grid.
    pub fn probabilities(
        &self,
        grids: &[&ContextGrid],
    ) -> Result<Vec<(Vec<f64>, Vec<f64>)>, LearnError> {
        if grids.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let pe = self.encoder.params.bind(&mut tape);
        let ph = self.heads.params.bind(&mut tape);
        let x = self.encoder.input(&mut tape, grids)?;
        let e = self.encoder.forward(&mut tape, &pe, x);
        let (lat, lon) = self.heads.forward(&mut tape, &ph, e);
        Ok(tape
            .value(lat)
            .chunks(Lateral::COUNT)
            .zip(tape.value(lon).chunks(Longitudinal::COUNT))
            .map(|(a, b)| (a.to_vec(), b.to_vec()))
            .collect())
    }

    /// Per-head argmax decisions.
    pub fn predict(&self, grids: &[&ContextGrid]) -> Result<Vec<MetaAction>, LearnError> {
        Ok(self
            .probabilities(grids)?
            .iter()
            .map(|(a, b)| {
                MetaAction::new(
                    Lateral::from_index(argmax(a)).expect("head width"),
                    Longitudinal::from_index(argmax(b)).expect("head width"),
                )
            })
            .collect())
    }

    pub fn save(&self, encoder: &Path, heads: &Path) -> Result<(), LearnError> {
        self.encoder.save(encoder)?;
        self.heads.save(heads)
    }

    pub fn load(encoder: &Path, heads: &Path) -> Result<Self, LearnError> {
        Ok(Self {
            encoder: Encoder::load(encoder)?,
            heads: ImitationHeads::load(heads)?,
        })
    }
}

const EVAL_CHUNK: usize = 64;

fn predict_all(model: &ImitationModel, samples: &[Sample]) -> Result<Vec<MetaAction>, LearnError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let grids: Vec<&ContextGrid> = chunk.iter().map(|s| &s.grid).collect();
        out.extend(model.predict(&grids)?);
    }
    Ok(out)
}

/// Indices of samples the model does not yet get right on both heads.
pub fn prune_indices(model: &ImitationModel, samples: &[Sample]) -> Result<Vec<usize>, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::Data("cannot prune an empty dataset".into()));
    }
    let pred = predict_all(model, samples)?;
    Ok(pred
        .iter()
        .zip(samples)
        .enumerate()
        .filter(|(_, (p, s))| **p != s.label)
        .map(|(i, _)| i)
        .collect())
}

/// Removes samples whose predicted action equals their label.
pub fn prune_dataset(model: &ImitationModel, samples: &[Sample]) -> Result<Vec<Sample>, LearnError> {
    Ok(prune_indices(model, samples)?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

/// Fraction of samples whose predicted action equals the label on both heads.
pub fn accuracy(model: &ImitationModel, samples: &[Sample]) -> Result<f64, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::Data("accuracy over an empty dataset".into()));
    }
    let pred = predict_all(model, samples)?;
    let hits = pred.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationReport {
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Samples used per epoch after cruise subsampling.
    pub epoch_samples: Vec<usize>,
    /// Samples left after pruning.
    pub remaining: usize,
}

struct Trainer {
    model: ImitationModel,
    opt_enc: Adam<f64>,
    opt_heads: Adam<f64>,
    cfg: ImitationConfig,
}

impl Trainer {
    fn step(&mut self, batch: &[&Sample]) -> Result<f64, LearnError> {
        let m = &mut self.model;
        let mut tape = Tape::new();
        let pe = m.encoder.params.bind(&mut tape);
        let ph = m.heads.params.bind(&mut tape);
        let grids: Vec<&ContextGrid> = batch.iter().map(|s| &s.grid).collect();
        let x = m.encoder.input(&mut tape, &grids)?;
        let e = m.encoder.forward(&mut tape, &pe, x);
        let (lat, lon) = m.heads.forward(&mut tape, &ph, e);
        let lat_t = one_hot(batch.iter().map(|s| s.label.lateral.index()), Lateral::COUNT);
        let lon_t = one_hot(batch.iter().map(|s| s.label.longitudinal.index()), Longitudinal::COUNT);
        let l1 = tape.bce(lat, lat_t);
        let l2 = tape.bce(lon, lon_t);
        let loss = tape.add(l1, l2);
        tape.backward(loss);
        let mut ge = m.encoder.params.gather_grad(&tape, &pe);
        let mut gh = m.heads.params.gather_grad(&tape, &ph);
        clip_grad_norm(&mut ge, self.cfg.clip);
        clip_grad_norm(&mut gh, self.cfg.clip);
        self.opt_enc.step(m.encoder.params.data_mut(), &ge);
        self.opt_heads.step(m.heads.params.data_mut(), &gh);
        Ok(tape.value(loss)[0])
    }

    fn epoch(
        &mut self,
        samples: &[&Sample],
        filter: &mut CruiseFilter,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, usize), LearnError> {
        let mut used: Vec<&Sample> = samples.iter().copied().filter(|s| filter.keep(s.label)).collect();
        used.shuffle(rng);
        let mut total = 0.0;
        let mut n = 0;
        for batch in used.chunks(self.cfg.batch.max(1)) {
            total += self.step(batch)?;
            n += 1;
        }
        Ok((total / n.max(1) as f64, used.len()))
    }
}

fn one_hot(idx: impl Iterator<Item = usize>, k: usize) -> Vec<f64> {
    let mut v = Vec::new();
    for i in idx {
        let start = v.len();
        v.resize(start + k, 0.0);
        v[start + i] = 1.0;
    }
    v
}

/// Trains encoder and heads: one epoch over all samples, then pruning of
/// correctly predicted samples, then the remaining epochs on what is left.
pub fn train_imitation(
    samples: &[Sample],
    cfg: &ImitationConfig,
) -> Result<(ImitationModel, ImitationReport), LearnError> {
    if samples.is_empty() {
        return Err(LearnError::Data("imitation dataset is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch == 0 {
        return Err(LearnError::Config("epochs and batch must be positive".into()));
    }
    let model = ImitationModel::new(cfg);
    let mut tr = Trainer {
        opt_enc: Adam::new(model.encoder.params.len(), cfg.lr),
        opt_heads: Adam::new(model.heads.params.len(), cfg.lr),
        model,
        cfg: *cfg,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut filter = CruiseFilter::new(cfg.cruise_every);
    let mut report = ImitationReport {
        epoch_loss: Vec::new(),
        epoch_samples: Vec::new(),
        remaining: samples.len(),
    };

    let all: Vec<&Sample> = samples.iter().collect();
    let (loss, used) = tr.epoch(&all, &mut filter, &mut rng)?;
    report.epoch_loss.push(loss);
    report.epoch_samples.push(used);

    let active: Vec<&Sample> = if cfg.prune {
        let keep = prune_indices(&tr.model, samples)?;
        if keep.is_empty() {
            return Err(LearnError::DegenerateData(
                "every sample was pruned after the first epoch".into(),
            ));
        }
        keep.into_iter().map(|i| &samples[i]).collect()
    } else {
        all
    };
    report.remaining = active.len();

    for _ in 1..cfg.epochs {
        let (loss, used) = tr.epoch(&active, &mut filter, &mut rng)?;
        report.epoch_loss.push(loss);
        report.epoch_samples.push(used);
    }
    Ok((tr.model, report))
}

/// Observations and recorded labels gathered by replaying each episode
/// with its recorded maneuvers. Steps without both labels are skipped.
pub fn collect_samples(env: &mut DrivingEnv, episodes: &[u32]) -> Result<Vec<Sample>, LearnError> {
    let mut out = Vec::new();
    for &id in episodes {
        let mut obs = env.reset(id)?;
        loop {
            let (lat, lon) = env.human_labels()?;
            let action = MetaAction::new(
                lat.unwrap_or(Lateral::SameLane),
                lon.unwrap_or(Longitudinal::Cruise),
            );
            let res = env.step(action)?;
            if let (Some(lateral), Some(longitudinal)) = (lat, lon) {
                out.push(Sample {
                    grid: obs,
                    label: MetaAction::new(lateral, longitudinal),
                });
            }
            obs = res.observation;
            if res.done {
                break;
            }
        }
    }
    Ok(out)
}

/// Greedy policy from an imitation model.
#[derive(Debug, Clone)]
pub struct ImitationPolicy {
    pub model: ImitationModel,
}

impl Policy for ImitationPolicy {
    fn name(&self) -> &str {
        "imitation"
    }

    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> MetaAction {
        self.model
            .predict(&[ctx.observation])
            .ok()
            .and_then(|v| v.into_iter().next())
            .unwrap_or(MetaAction::IDLE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use maneuver_core::GridSpec;

    fn tiny_cfg() -> ImitationConfig {
        let spec = GridSpec { past: 2, future: 0, ..GridSpec::default() };
        ImitationConfig {
            encoder: EncoderConfig {
                in_channels: spec.channels(),
                conv1: 4,
                conv2: 4,
                encoding: 8,
                ..EncoderConfig::default()
            },
            head_hidden: 8,
            ..ImitationConfig::default()
        }
    }

    fn cruise() -> MetaAction {
        MetaAction::new(Lateral::SameLane, Longitudinal::Cruise)
    }

    #[test]
    fn hundred_cruise_keep_twenty() {
        let mut f = CruiseFilter::new(5);
        assert_eq!((0..100).filter(|_| f.keep(cruise())).count(), 20);
        let brake = MetaAction::new(Lateral::SameLane, Longitudinal::Brake);
        assert_eq!((0..10).filter(|_| f.keep(brake)).count(), 10);
    }

    #[test]
    fn one_hot_rows() {
        assert_eq!(one_hot([1, 0].into_iter(), 2), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn prune_counts() {
        let cfg = tiny_cfg();
        let model = ImitationModel::new(&cfg);
        let spec = GridSpec { past: 2, future: 0, ..GridSpec::default() };
        let grid = ContextGrid::zeros(spec);
        let pred = model.predict(&[&grid]).unwrap()[0];
        let other = MetaAction::from_index((pred.index() + 1) % MetaAction::COUNT).unwrap();
        let samples: Vec<Sample> = (0..10)
            .map(|i| Sample {
                grid: grid.clone(),
                label: if i < 4 { pred } else { other },
            })
            .collect();
        assert_eq!(prune_dataset(&model, &samples).unwrap().len(), 6);
        assert!(prune_dataset(&model, &[]).is_err());
        let all_right: Vec<Sample> = samples.iter().take(4).cloned().collect();
        assert!(prune_dataset(&model, &all_right).unwrap().is_empty());
        let frozen = ImitationConfig { epochs: 2, lr: 0.0, ..cfg };
        let err = train_imitation(&all_right, &frozen).unwrap_err();
        assert!(matches!(err, LearnError::DegenerateData(_)));
    }
}
