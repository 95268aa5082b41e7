//! Grid encoder, imitation decision heads and Q-networks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use maneuver_core::checkpoint::{CheckpointReader, CheckpointWriter};
use maneuver_core::{ContextGrid, GridSpec, Lateral, Longitudinal, MetaAction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::Params;
use crate::tape::{Tape, Var};
use crate::LearnError;

const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub rows: usize,
    pub cols: usize,
    /// Filters of the 3x3 convolution.
    pub conv1: usize,
    /// Filters of the 3x1 convolution.
    pub conv2: usize,
    /// Rows per max-pool window.
    pub pool: usize,
    /// Width of the state encoding.
    pub encoding: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            in_channels: g.channels(),
            rows: g.rows,
            cols: g.cols,
            conv1: 32,
            conv2: 64,
            pool: 2,
            encoding: 256,
        }
    }
}

impl EncoderConfig {
    fn pooled_rows(&self) -> usize {
        self.rows.div_ceil(self.pool)
    }

    fn flat(&self) -> usize {
        self.conv2 * self.pooled_rows() * self.cols
    }

    fn dims(&self) -> [u32; 7] {
        [
            self.in_channels,
            self.rows,
            self.cols,
            self.conv1,
            self.conv2,
            self.pool,
            self.encoding,
        ]
        .map(|d| d as u32)
    }

    fn from_dims(d: &[u32]) -> Self {
        let d: Vec<usize> = d.iter().map(|&v| v as usize).collect();
        Self {
            in_channels: d[0],
            rows: d[1],
            cols: d[2],
            conv1: d[3],
            conv2: d[4],
            pool: d[5],
            encoding: d[6],
        }
    }

    /// Number of values in one input grid.
    pub fn input_len(&self) -> usize {
        self.in_channels * self.rows * self.cols
    }
}

/// Conv 3x3 → ReLU → conv 3x1 → ReLU → row max-pool → dense → ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub params: Params,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        p.push_weight(&[cfg.conv1, cfg.in_channels, 3, 3], &mut rng);
        p.push_zeros(&[cfg.conv1]);
        p.push_weight(&[cfg.conv2, cfg.conv1, 3, 1], &mut rng);
        p.push_zeros(&[cfg.conv2]);
        p.push_weight(&[cfg.encoding, cfg.flat()], &mut rng);
        p.push_zeros(&[cfg.encoding]);
        Self { cfg, params: p }
    }

    /// Stacks grids into one `[B, C, H, W]` input leaf.
    pub fn input(&self, tape: &mut Tape, grids: &[&ContextGrid]) -> Result<Var, LearnError> {
        let c = &self.cfg;
        let mut vals = Vec::with_capacity(grids.len() * c.input_len());
        for g in grids {
            let s = g.spec();
            if s.channels() != c.in_channels || s.rows != c.rows || s.cols != c.cols {
                return Err(LearnError::Shape(format!(
                    "grid {}x{}x{} does not match encoder input {}x{}x{}",
                    s.rows,
                    s.cols,
                    s.channels(),
                    c.rows,
                    c.cols,
                    c.in_channels
                )));
            }
            vals.extend_from_slice(g.values());
        }
        Ok(tape.leaf(&[grids.len(), c.in_channels, c.rows, c.cols], vals))
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let h = tape.conv2d(x, p[0], p[1]);
        let h = tape.relu(h);
        let h = tape.conv2d(h, p[2], p[3]);
        let h = tape.relu(h);
        let h = tape.max_pool_rows(h, self.cfg.pool);
        let h = tape.dense(h, p[4], p[5]);
        tape.relu(h)
    }

    /// Encodings of `grids`, one vector per grid, without gradients.
    pub fn encode(&self, grids: &[&ContextGrid]) -> Result<Vec<Vec<f64>>, LearnError> {
        if grids.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let x = self.input(&mut tape, grids)?;
        let e = self.forward(&mut tape, &p, x);
        Ok(tape.value(e).chunks(self.cfg.encoding).map(<[f64]>::to_vec).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        save(path, *b"ENC1", &self.cfg.dims(), &self.params)
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let (dims, mut ck) = open(path, *b"ENC1", 7)?;
        let mut enc = Self::new(EncoderConfig::from_dims(&dims), 0);
        enc.params.read_into(&mut ck)?;
        ck.finish()?;
        Ok(enc)
    }
}

/// Two softmax heads over the encoding: 5 lateral and 4 longitudinal
/// class probabilities, each through one hidden ReLU layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ImitationHeads {
    pub input: usize,
    pub hidden: usize,
    pub params: Params,
}

impl ImitationHeads {
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        for out in [Lateral::COUNT, Longitudinal::COUNT] {
            p.push_weight(&[hidden, input], &mut rng);
            p.push_zeros(&[hidden]);
            p.push_weight(&[out, hidden], &mut rng);
            p.push_zeros(&[out]);
        }
        Self { input, hidden, params: p }
    }

    /// `(lateral, longitudinal)` probability tensors, `[B, 5]` and `[B, 4]`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], enc: Var) -> (Var, Var) {
        let mut head = |o: usize| {
            let h = tape.dense(enc, p[o], p[o + 1]);
            let h = tape.relu(h);
            let z = tape.dense(h, p[o + 2], p[o + 3]);
            tape.softmax(z)
        };
        let lat = head(0);
        let lon = head(4);
        (lat, lon)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        save(path, *b"IMH1", &[self.input as u32, self.hidden as u32], &self.params)
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let (dims, mut ck) = open(path, *b"IMH1", 2)?;
        let mut h = Self::new(dims[0] as usize, dims[1] as usize, 0);
        h.params.read_into(&mut ck)?;
        ck.finish()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QNetConfig {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// One 20-way head over joint actions instead of the 5 + 4 heads.
    pub joint: bool,
}

impl Default for QNetConfig {
    fn default() -> Self {
        Self {
            input: 256,
            hidden1: 128,
            hidden2: 64,
            joint: false,
        }
    }
}

impl QNetConfig {
    /// Output width of each head.
    pub fn heads(&self) -> Vec<usize> {
        if self.joint {
            vec![MetaAction::COUNT]
        } else {
            vec![Lateral::COUNT, Longitudinal::COUNT]
        }
    }

    /// Per-head action indices of `a`.
    pub fn head_actions(&self, a: MetaAction) -> Vec<usize> {
        if self.joint {
            vec![a.index()]
        } else {
            vec![a.lateral.index(), a.longitudinal.index()]
        }
    }

    /// Joint action from per-head indices.
    pub fn action(&self, idx: &[usize]) -> MetaAction {
        if self.joint {
            MetaAction::from_index(idx[0]).expect("head index in range")
        } else {
            MetaAction::new(
                Lateral::from_index(idx[0]).expect("head index in range"),
                Longitudinal::from_index(idx[1]).expect("head index in range"),
            )
        }
    }
}

/// Three dense layers over the encoding: two ReLU trunk layers and a
/// linear output layer per head.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub cfg: QNetConfig,
    pub params: Params,
}

impl QNet {
    pub fn new(cfg: QNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        p.push_weight(&[cfg.hidden1, cfg.input], &mut rng);
        p.push_zeros(&[cfg.hidden1]);
        p.push_weight(&[cfg.hidden2, cfg.hidden1], &mut rng);
        p.push_zeros(&[cfg.hidden2]);
        for out in cfg.heads() {
            p.push_weight(&[out, cfg.hidden2], &mut rng);
            p.push_zeros(&[out]);
        }
        Self { cfg, params: p }
    }

    /// One `[B, K]` Q-value tensor per head.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Vec<Var> {
        let h = tape.dense(x, p[0], p[1]);
        let h = tape.relu(h);
        let h = tape.dense(h, p[2], p[3]);
        let h = tape.relu(h);
        (0..self.cfg.heads().len())
            .map(|k| tape.dense(h, p[4 + 2 * k], p[5 + 2 * k]))
            .collect()
    }

    /// Q-values for a batch of encodings: `out[head][row]` is a `K`-vector.
    pub fn q_values(&self, encodings: &[&[f64]]) -> Vec<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let flat: Vec<f64> = encodings.iter().flat_map(|e| e.iter().copied()).collect();
        let x = tape.leaf(&[encodings.len(), self.cfg.input], flat);
        self.forward(&mut tape, &p, x)
            .into_iter()
            .zip(self.cfg.heads())
            .map(|(v, k)| tape.value(v).chunks(k).map(<[f64]>::to_vec).collect())
            .collect()
    }

    /// Per-head argmax action for one encoding.
    pub fn greedy(&self, encoding: &[f64]) -> MetaAction {
        let q = self.q_values(&[encoding]);
        let idx: Vec<usize> = q.iter().map(|head| argmax(&head[0])).collect();
        self.cfg.action(&idx)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let c = &self.cfg;
        let dims = [c.input, c.hidden1, c.hidden2, usize::from(c.joint)].map(|d| d as u32);
        save(path, *b"QNT1", &dims, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let (d, mut ck) = open(path, *b"QNT1", 4)?;
        let cfg = QNetConfig {
            input: d[0] as usize,
            hidden1: d[1] as usize,
            hidden2: d[2] as usize,
            joint: d[3] != 0,
        };
        let mut q = Self::new(cfg, 0);
        q.params.read_into(&mut ck)?;
        ck.finish()?;
        Ok(q)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn save(path: &Path, magic: [u8; 4], dims: &[u32], params: &Params) -> Result<(), LearnError> {
    let file = File::create(path).map_err(|e| LearnError::io(path, e))?;
    write_model(BufWriter::new(file), magic, dims, params).map_err(|e| LearnError::io(path, e))
}

fn write_model<W: Write>(w: W, magic: [u8; 4], dims: &[u32], params: &Params) -> std::io::Result<()> {
    let mut ck = CheckpointWriter::new(w, magic, VERSION)?;
    ck.u32(dims.len() as u32)?;
    for &d in dims {
        ck.u32(d)?;
    }
    params.write(&mut ck)?;
    ck.finish()?;
    Ok(())
}

fn open(
    path: &Path,
    magic: [u8; 4],
    n_dims: usize,
) -> Result<(Vec<u32>, CheckpointReader<impl Read>), LearnError> {
    if !path.exists() {
        return Err(LearnError::Dependency(path.display().to_string()));
    }
    let file = File::open(path).map_err(|e| LearnError::io(path, e))?;
    let mut ck = CheckpointReader::new(BufReader::new(file), magic, VERSION)?;
    let n = ck.u32()? as usize;
    if n != n_dims {
        return Err(LearnError::Checkpoint(
            maneuver_core::checkpoint::CheckpointError::Malformed(format!(
                "{n} header dimensions, expected {n_dims}"
            )),
        ));
    }
    let dims = (0..n).map(|_| ck.u32()).collect::<Result<Vec<_>, _>>()?;
    Ok((dims, ck))
}
