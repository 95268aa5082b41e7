//! Memory Neuron Network trajectory predictor.
//!
//! The network maps per-frame position increments to the next increment.
//! Each hidden unit `j` carries a memory neuron
//!
//! ```text
//! m_j(t) = α_j z_j(t-1) + (1 - α_j) m_j(t-1)
//! z_j(t) = tanh(W_j · u(t) + β_j m_j(t) + b_j)
//! y(t)   = V z(t) + G m(t) + c
//! ```
//!
//! Inputs and outputs are divided/multiplied by a fixed `scale` (feet per
//! frame) chosen from the training data. Multi-step prediction feeds the
//! predicted increment back as the next input and accumulates positions.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{CheckpointError, CheckpointReader, CheckpointWriter};
use crate::data::FrameIndex;
use crate::optim::Adam;
use crate::scalar::Scalar;

const MAGIC: [u8; 4] = *b"MNN1";
const VERSION: u32 = 1;

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 24;
/// Frames of history fed to the predictor (3 s at 10 Hz).
pub const DEFAULT_HISTORY: usize = 30;
/// Frames predicted (3 s at 10 Hz).
pub const DEFAULT_HORIZON: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("insufficient history: need at least 2 positions, got {0}")]
    InsufficientHistory(usize),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("no training windows: {0}")]
    NoData(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Network weights. Stored as one flat vector; see the `off_*` helpers
/// for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MnnParams<T> {
    hidden: usize,
    scale: T,
    w: Vec<T>,
}

/// Recurrent state: last hidden activations and memory values.
#[derive(Debug, Clone, PartialEq)]
pub struct MnnState<T> {
    pub z: Vec<T>,
    pub m: Vec<T>,
}

impl<T: Scalar> MnnState<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            z: vec![T::zero(); hidden],
            m: vec![T::zero(); hidden],
        }
    }
}

/// Predicted positions for horizons `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult<T> {
    pub positions: Vec<(T, T)>,
}

impl<T> PredictionResult<T> {
    pub fn horizon(&self) -> usize {
        self.positions.len()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> MnnParams<T> {
    pub fn n_params(hidden: usize) -> usize {
        9 * hidden + 2
    }

    fn off_alpha(&self) -> usize {
        0
    }
    fn off_w_in(&self) -> usize {
        self.hidden
    }
    fn off_w_mem(&self) -> usize {
        3 * self.hidden
    }
    fn off_b_h(&self) -> usize {
        4 * self.hidden
    }
    fn off_w_out(&self) -> usize {
        5 * self.hidden
    }
    fn off_w_out_mem(&self) -> usize {
        7 * self.hidden
    }
    fn off_b_out(&self) -> usize {
        9 * self.hidden
    }

    /// All weights zero; memory coefficients set to `alpha`.
    pub fn zeros(hidden: usize, alpha: T) -> Self {
        let mut p = Self {
            hidden,
            scale: T::one(),
            w: vec![T::zero(); Self::n_params(hidden)],
        };
        p.alpha_mut().iter_mut().for_each(|a| *a = alpha);
        p
    }

    /// Uniform fan-in initialisation with memory coefficients in (0.2, 0.8).
    pub fn init(hidden: usize, scale: T, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(hidden, T::lit(0.5));
        p.scale = scale;
        let h = hidden;
        let in_bound = 1.0 / 3f64.sqrt();
        let out_bound = 1.0 / (2.0 * h as f64).sqrt();
        for j in 0..h {
            p.w[j] = T::lit(rng.gen_range(0.2..0.8));
        }
        for i in h..3 * h {
            p.w[i] = T::lit(rng.gen_range(-in_bound..in_bound));
        }
        for i in 3 * h..4 * h {
            p.w[i] = T::lit(rng.gen_range(-in_bound..in_bound));
        }
        for i in 5 * h..9 * h {
            p.w[i] = T::lit(rng.gen_range(-out_bound..out_bound));
        }
        p
    }

    pub fn from_parts(hidden: usize, scale: T, w: Vec<T>) -> Result<Self, PredictorError> {
        if w.len() != Self::n_params(hidden) {
            return Err(PredictorError::Shape(format!(
                "expected {} weights for hidden width {hidden}, got {}",
                Self::n_params(hidden),
                w.len()
            )));
        }
        let p = Self { hidden, scale, w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        if !(self.scale > T::zero() && self.scale.is_finite()) {
            return Err(PredictorError::InvalidParams("scale must be positive".into()));
        }
        if self.w.iter().any(|x| !x.is_finite()) {
            return Err(PredictorError::InvalidParams("non-finite weight".into()));
        }
        if self.alpha().iter().any(|&a| !(a > T::zero() && a <= T::one())) {
            return Err(PredictorError::InvalidParams("memory coefficient outside (0, 1]".into()));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn weights(&self) -> &[T] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.w
    }

    pub fn alpha(&self) -> &[T] {
        &self.w[..self.hidden]
    }

    pub fn alpha_mut(&mut self) -> &mut [T] {
        let h = self.hidden;
        &mut self.w[..h]
    }

    /// Trainable view: identical to the weights except memory coefficients
    /// appear as logits, so unconstrained updates keep them in (0, 1).
    pub fn trainable(&self) -> Vec<T> {
        let mut t = self.w.clone();
        for a in &mut t[..self.hidden] {
            *a = (*a / (T::one() - *a)).ln();
        }
        t
    }

    pub fn set_trainable(&mut self, t: &[T]) {
        self.w.copy_from_slice(t);
        let h = self.hidden;
        for a in &mut self.w[..h] {
            *a = sigmoid(*a);
        }
    }

    /// One recurrent step on an increment in feet per frame.
    pub fn forward(
        &self,
        state: &MnnState<T>,
        increment: (T, T),
    ) -> Result<((T, T), MnnState<T>), PredictorError> {
        if state.z.len() != self.hidden || state.m.len() != self.hidden {
            return Err(PredictorError::Shape(format!(
                "state width {}/{} does not match hidden width {}",
                state.z.len(),
                state.m.len(),
                self.hidden
            )));
        }
        let mut next = state.clone();
        let y = self.step_in_place(&mut next, [increment.0 / self.scale, increment.1 / self.scale]);
        Ok(((y[0] * self.scale, y[1] * self.scale), next))
    }

    /// Advances `state` on a normalised input; returns the normalised output.
    fn step_in_place(&self, state: &mut MnnState<T>, u: [T; 2]) -> [T; 2] {
        let h = self.hidden;
        let w = &self.w;
        let (oa, oi, om, ob) = (self.off_alpha(), self.off_w_in(), self.off_w_mem(), self.off_b_h());
        for j in 0..h {
            let a = w[oa + j];
            state.m[j] = a * state.z[j] + (T::one() - a) * state.m[j];
        }
        for j in 0..h {
            let pre = w[oi + 2 * j] * u[0] + w[oi + 2 * j + 1] * u[1] + w[om + j] * state.m[j] + w[ob + j];
            state.z[j] = pre.tanh();
        }
        let (ov, og, oc) = (self.off_w_out(), self.off_w_out_mem(), self.off_b_out());
        let mut y = [w[oc], w[oc + 1]];
        for (k, yk) in y.iter_mut().enumerate() {
            for j in 0..h {
                *yk = *yk + w[ov + k * h + j] * state.z[j] + w[og + k * h + j] * state.m[j];
            }
        }
        y
    }

    /// Warm-up over the history increments, then `horizon` closed-loop
    /// steps. Position k is the last observed position plus the sum of the
    /// first k predicted increments.
    pub fn rollout(
        &self,
        history: &[(T, T)],
        horizon: usize,
    ) -> Result<PredictionResult<T>, PredictorError> {
        if history.len() < 2 {
            return Err(PredictorError::InsufficientHistory(history.len()));
        }
        if horizon == 0 {
            return Err(PredictorError::ZeroHorizon);
        }
        let s = self.scale;
        let mut state = MnnState::zeros(self.hidden);
        let mut y = [T::zero(); 2];
        for w in history.windows(2) {
            let u = [(w[1].0 - w[0].0) / s, (w[1].1 - w[0].1) / s];
            y = self.step_in_place(&mut state, u);
        }
        let (mut x, mut yy) = history[history.len() - 1];
        let mut positions = Vec::with_capacity(horizon);
        for k in 0..horizon {
            x = x + y[0] * s;
            yy = yy + y[1] * s;
            positions.push((x, yy));
            if k + 1 < horizon {
                y = self.step_in_place(&mut state, y);
            }
        }
        Ok(PredictionResult { positions })
    }

    /// Teacher-forced run over a window of positions: inputs are the
    /// increments `1..n-1`, targets the increments `2..n`.
    fn run_window(&self, window: &[(T, T)]) -> WindowTrace<T> {
        let s = self.scale;
        let incs: Vec<[T; 2]> = window
            .windows(2)
            .map(|w| [(w[1].0 - w[0].0) / s, (w[1].1 - w[0].1) / s])
            .collect();
        let steps = incs.len() - 1;
        let mut state = MnnState::zeros(self.hidden);
        let mut trace = WindowTrace {
            inputs: incs[..steps].to_vec(),
            targets: incs[1..].to_vec(),
            m: Vec::with_capacity(steps),
            z: Vec::with_capacity(steps),
            y: Vec::with_capacity(steps),
        };
        for t in 0..steps {
            let y = self.step_in_place(&mut state, incs[t]);
            trace.m.push(state.m.clone());
            trace.z.push(state.z.clone());
            trace.y.push(y);
        }
        trace
    }

    /// One-step-ahead RMSE in feet over all windows, with its gradient with
    /// respect to the trainable parameter vector.
    pub fn loss_and_grad(&self, windows: &[&[(T, T)]]) -> (T, Vec<T>) {
        let traces: Vec<WindowTrace<T>> = windows.iter().map(|w| self.run_window(w)).collect();
        let s = self.scale;
        let mut sq = T::zero();
        let mut count = 0usize;
        for tr in &traces {
            for (y, t) in tr.y.iter().zip(&tr.targets) {
                for k in 0..2 {
                    let e = (y[k] - t[k]) * s;
                    sq = sq + e * e;
                }
                count += 2;
            }
        }
        let mse = sq / T::lit(count as f64);
        let loss = mse.sqrt();
        let mut grad = vec![T::zero(); self.w.len()];
        if loss > T::zero() {
            // dL/dy_norm = s * (e / (count * L)), with e in feet.
            let coef = s * s / (T::lit(count as f64) * loss);
            for tr in &traces {
                self.backprop(tr, coef, &mut grad);
            }
            // Chain through the logit parameterisation of α.
            for (g, &a) in grad.iter_mut().zip(&self.w[..self.hidden]) {
                *g = *g * a * (T::one() - a);
            }
        }
        (loss, grad)
    }

    fn backprop(&self, tr: &WindowTrace<T>, coef: T, grad: &mut [T]) {
        let h = self.hidden;
        let w = &self.w;
        let (oa, oi, om, ob) = (self.off_alpha(), self.off_w_in(), self.off_w_mem(), self.off_b_h());
        let (ov, og, oc) = (self.off_w_out(), self.off_w_out_mem(), self.off_b_out());
        let one = T::one();
        let mut dm_next = vec![T::zero(); h];
        let mut da = vec![T::zero(); h];
        let mut dm = vec![T::zero(); h];

        for t in (0..tr.y.len()).rev() {
            let z = &tr.z[t];
            let m = &tr.m[t];
            let dy = [
                coef * (tr.y[t][0] - tr.targets[t][0]),
                coef * (tr.y[t][1] - tr.targets[t][1]),
            ];
            grad[oc] = grad[oc] + dy[0];
            grad[oc + 1] = grad[oc + 1] + dy[1];
            for j in 0..h {
                let a = w[oa + j];
                let mut dzj = a * dm_next[j];
                let mut dmj = (one - a) * dm_next[j];
                for k in 0..2 {
                    grad[ov + k * h + j] = grad[ov + k * h + j] + dy[k] * z[j];
                    grad[og + k * h + j] = grad[og + k * h + j] + dy[k] * m[j];
                    dzj = dzj + w[ov + k * h + j] * dy[k];
                    dmj = dmj + w[og + k * h + j] * dy[k];
                }
                da[j] = dzj * (one - z[j] * z[j]);
                dm[j] = dmj + w[om + j] * da[j];
            }
            // m(t+1) = α z(t) + (1-α) m(t)
            if t + 1 < tr.y.len() {
                for j in 0..h {
                    let g = dm_next[j] * (z[j] - m[j]);
                    grad[oa + j] = grad[oa + j] + g;
                }
            }
            let u = tr.inputs[t];
            for j in 0..h {
                grad[oi + 2 * j] = grad[oi + 2 * j] + da[j] * u[0];
                grad[oi + 2 * j + 1] = grad[oi + 2 * j + 1] + da[j] * u[1];
                grad[om + j] = grad[om + j] + da[j] * m[j];
                grad[ob + j] = grad[ob + j] + da[j];
            }
            dm_next.copy_from_slice(&dm);
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), PredictorError> {
        let mut cw = CheckpointWriter::new(w, MAGIC, VERSION).map_err(CheckpointError::from)?;
        let io = |r: std::io::Result<()>| r.map_err(CheckpointError::from);
        io(cw.u32(self.hidden as u32))?;
        io(cw.f64(self.scale.as_f64()))?;
        io(cw.f64s(self.w.iter().map(|x| x.as_f64())))?;
        cw.finish().map_err(CheckpointError::from)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, PredictorError> {
        let mut cr = CheckpointReader::new(r, MAGIC, VERSION)?;
        let hidden = cr.u32()? as usize;
        let scale = T::lit(cr.f64()?);
        let w = cr.f64s(Self::n_params(hidden))?.into_iter().map(T::lit).collect();
        cr.finish()?;
        Self::from_parts(hidden, scale, w)
    }
}

struct WindowTrace<T> {
    inputs: Vec<[T; 2]>,
    targets: Vec<[T; 2]>,
    m: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    y: Vec<[T; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnnTrainConfig {
    pub hidden: usize,
    /// Positions of history per training window (`p`); windows hold `p + 1`.
    pub history: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Cosine-anneal the learning rate towards zero over the epochs.
    pub anneal: bool,
    pub batch_size: usize,
    /// Offset between consecutive windows cut from the same track.
    pub stride: usize,
    /// Cap on the number of windows drawn from the dataset.
    pub max_windows: usize,
    pub seed: u64,
}

impl Default for MnnTrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            history: DEFAULT_HISTORY,
            epochs: 50,
            learning_rate: 5e-3,
            anneal: true,
            batch_size: 32,
            stride: 10,
            max_windows: 2000,
            seed: 0,
        }
    }
}

/// Cuts `history + 1`-position windows out of every long-enough track.
pub fn training_windows(idx: &FrameIndex, cfg: &MnnTrainConfig) -> Vec<Vec<(f64, f64)>> {
    let len = cfg.history + 1;
    let stride = cfg.stride.max(1);
    let mut out = Vec::new();
    for track in idx.tracks() {
        let pos: Vec<(f64, f64)> = track.points.iter().map(|p| (p.local_x, p.local_y)).collect();
        let mut start = 0;
        while start + len <= pos.len() {
            out.push(pos[start..start + len].to_vec());
            start += stride;
        }
    }
    out
}

/// Result of predictor training: parameters plus mean RMSE per epoch.
#[derive(Debug, Clone)]
pub struct MnnTrainOutput<T> {
    pub params: MnnParams<T>,
    pub epoch_loss: Vec<T>,
}

/// Trains on one-step-ahead increment prediction with teacher forcing.
pub fn mnn_train<T: Scalar>(
    idx: &FrameIndex,
    cfg: &MnnTrainConfig,
) -> Result<MnnTrainOutput<T>, PredictorError> {
    if cfg.history < 2 {
        return Err(PredictorError::InsufficientHistory(cfg.history));
    }
    let mut windows = training_windows(idx, cfg);
    if windows.is_empty() {
        return Err(PredictorError::NoData(format!(
            "no track has {} frames",
            cfg.history + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    windows.shuffle(&mut rng);
    windows.truncate(cfg.max_windows.max(1));
    let windows: Vec<Vec<(T, T)>> = windows
        .into_iter()
        .map(|w| w.into_iter().map(|(x, y)| (T::lit(x), T::lit(y))).collect())
        .collect();
    mnn_train_windows(&windows, cfg, &mut rng)
}

/// Training loop over explicit windows of positions.
pub fn mnn_train_windows<T: Scalar>(
    windows: &[Vec<(T, T)>],
    cfg: &MnnTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MnnTrainOutput<T>, PredictorError> {
    if windows.is_empty() {
        return Err(PredictorError::NoData("empty window set".into()));
    }
    if windows.iter().any(|w| w.len() < 3) {
        return Err(PredictorError::InsufficientHistory(2));
    }
    // Scale: RMS increment magnitude per axis over the data.
    let (mut sq, mut n) = (0.0f64, 0usize);
    for w in windows {
        for p in w.windows(2) {
            let dx = (p[1].0 - p[0].0).as_f64();
            let dy = (p[1].1 - p[0].1).as_f64();
            sq += dx * dx + dy * dy;
            n += 2;
        }
    }
    let scale = (sq / n as f64).sqrt().max(1e-3);

    let mut params = MnnParams::<T>::init(cfg.hidden, T::lit(scale), rng.gen());
    let mut theta = params.trainable();
    let mut opt = Adam::new(theta.len(), T::lit(cfg.learning_rate));
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.anneal {
            let frac = epoch as f64 / cfg.epochs as f64;
            opt.lr = T::lit(0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos()));
        }
        order.shuffle(rng);
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let refs: Vec<&[(T, T)]> = chunk.iter().map(|&i| windows[i].as_slice()).collect();
            let (loss, grad) = params.loss_and_grad(&refs);
            opt.step(&mut theta, &grad);
            params.set_trainable(&theta);
            total += loss.as_f64();
            batches += 1;
        }
        epoch_loss.push(T::lit(total / batches as f64));
    }
    Ok(MnnTrainOutput { params, epoch_loss })
}

/// Anything that can extrapolate a position history.
pub trait TrajectoryPredictor: Send + Sync {
    fn predict(&self, history: &[(f64, f64)], horizon: usize)
        -> Result<PredictionResult<f64>, PredictorError>;
}

impl TrajectoryPredictor for MnnParams<f64> {
    fn predict(
        &self,
        history: &[(f64, f64)],
        horizon: usize,
    ) -> Result<PredictionResult<f64>, PredictorError> {
        self.rollout(history, horizon)
    }
}

/// Repeats the last observed increment.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl TrajectoryPredictor for ConstantVelocity {
    fn predict(
        &self,
        history: &[(f64, f64)],
        horizon: usize,
    ) -> Result<PredictionResult<f64>, PredictorError> {
        if history.len() < 2 {
            return Err(PredictorError::InsufficientHistory(history.len()));
        }
        if horizon == 0 {
            return Err(PredictorError::ZeroHorizon);
        }
        let (a, b) = (history[history.len() - 2], history[history.len() - 1]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        Ok(PredictionResult {
            positions: (1..=horizon)
                .map(|k| (b.0 + dx * k as f64, b.1 + dy * k as f64))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, dx: f64, dy: f64) -> Vec<(f64, f64)> {
        (0..n).map(|i| (3.0 + dx * i as f64, 10.0 + dy * i as f64)).collect()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = MnnParams::<f64>::zeros(4, 0.5);
        let (y, _) = p.forward(&MnnState::zeros(4), (3.0, -2.0)).unwrap();
        assert_eq!(y, (0.0, 0.0));
        let pred = p.rollout(&line(10, 1.0, 2.0), 5).unwrap();
        let last = (3.0 + 9.0, 10.0 + 18.0);
        assert!(pred.positions.iter().all(|&q| q == last));
    }

    #[test]
    fn unit_alpha_is_one_step_delay() {
        let mut p = MnnParams::<f64>::init(5, 1.0, 1);
        p.alpha_mut().iter_mut().for_each(|a| *a = 1.0);
        let mut s = MnnState::zeros(5);
        for u in [(0.3, 1.0), (-0.2, 1.4), (0.1, 0.9)] {
            let prev_z = s.z.clone();
            let (_, next) = p.forward(&s, u).unwrap();
            assert_eq!(next.m, prev_z);
            s = next;
        }
    }

    #[test]
    fn state_shape_mismatch() {
        let p = MnnParams::<f64>::zeros(4, 0.5);
        assert!(matches!(
            p.forward(&MnnState::zeros(3), (0.0, 0.0)),
            Err(PredictorError::Shape(_))
        ));
    }

    #[test]
    fn constant_bias_accumulates() {
        // Output bias (0, 1.5) with all other weights zero.
        let mut p = MnnParams::<f64>::zeros(3, 0.5);
        let n = p.weights().len();
        p.weights_mut()[n - 1] = 1.5;
        let hist = line(5, 0.0, 2.0);
        let (x0, y0) = *hist.last().unwrap();
        let pred = p.rollout(&hist, 6).unwrap();
        for (k, &(x, y)) in pred.positions.iter().enumerate() {
            assert_eq!(x, x0);
            assert!((y - (y0 + 1.5 * (k + 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_matches_increment_equation() {
        let p = MnnParams::<f64>::init(6, 1.7, 9);
        let hist = line(8, 0.2, 1.9);
        let pred = p.rollout(&hist, 1).unwrap();
        let mut s = MnnState::zeros(6);
        let mut y = (0.0, 0.0);
        for w in hist.windows(2) {
            let (o, ns) = p.forward(&s, (w[1].0 - w[0].0, w[1].1 - w[0].1)).unwrap();
            y = o;
            s = ns;
        }
        let last = hist[hist.len() - 1];
        assert_eq!(pred.positions, vec![(last.0 + y.0, last.1 + y.1)]);
    }

    #[test]
    fn rollout_errors() {
        let p = MnnParams::<f64>::zeros(2, 0.5);
        assert!(matches!(p.rollout(&[(0.0, 0.0)], 3), Err(PredictorError::InsufficientHistory(1))));
        assert!(matches!(p.rollout(&line(3, 0.0, 1.0), 0), Err(PredictorError::ZeroHorizon)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = MnnParams::<f64>::init(7, 2.5, 4);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MNN1");
        let q = MnnParams::<f64>::read_from(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        buf[0] = b'X';
        assert!(MnnParams::<f64>::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let p = MnnParams::<f32>::init(4, 1.0, 2);
        let hist: Vec<(f32, f32)> = (0..5).map(|i| (0.0, i as f32 * 1.5)).collect();
        assert_eq!(p.rollout(&hist, 3).unwrap().horizon(), 3);
    }

    #[test]
    fn constant_velocity_predictor() {
        let pred = ConstantVelocity.predict(&line(4, 1.0, 2.0), 2).unwrap();
        assert_eq!(pred.positions, vec![(7.0, 18.0), (8.0, 20.0)]);
    }
}
