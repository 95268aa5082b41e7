//! Flat parameter storage with a per-tensor layout, seeded fan-in
//! initialisation and checkpoint serialisation.

use std::io::{Read, Write};

use maneuver_core::checkpoint::{CheckpointError, CheckpointReader, CheckpointWriter};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    offset: usize,
    shape: Vec<usize>,
}

impl Slot {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

/// All tensors of one model in a single contiguous vector, so optimisers
/// and checkpoints can treat the model as one flat parameter list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    data: Vec<f64>,
    slots: Vec<Slot>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Weight tensor drawn from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// where fan-in is the product of all but the first dimension.
    pub fn push_weight(&mut self, shape: &[usize], rng: &mut ChaCha8Rng) -> usize {
        let fan_in: usize = shape[1..].iter().product();
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(shape, vals)
    }

    pub fn push_zeros(&mut self, shape: &[usize]) -> usize {
        let n = shape.iter().product();
        self.push(shape, vec![0.0; n])
    }

    fn push(&mut self, shape: &[usize], vals: Vec<f64>) -> usize {
        self.slots.push(Slot {
            offset: self.data.len(),
            shape: shape.to_vec(),
        });
        self.data.extend(vals);
        self.slots.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_tensors(&self) -> usize {
        self.slots.len()
    }

    pub fn shape(&self, i: usize) -> &[usize] {
        &self.slots[i].shape
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        let s = &self.slots[i];
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [f64] {
        let s = &self.slots[i];
        let (a, b) = (s.offset, s.offset + s.len());
        &mut self.data[a..b]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Registers every tensor as a tape leaf, in slot order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.slots.len())
            .map(|i| tape.leaf(self.shape(i), self.tensor(i).to_vec()))
            .collect()
    }

    /// Gradients of bound leaves gathered into one flat vector.
    pub fn gather_grad(&self, tape: &Tape, vars: &[Var]) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.data.len());
        for &v in vars {
            g.extend_from_slice(tape.grad(v));
        }
        g
    }

    pub fn write<W: Write>(&self, ck: &mut CheckpointWriter<W>) -> std::io::Result<()> {
        ck.u32(self.slots.len() as u32)?;
        for s in &self.slots {
            ck.u32(s.shape.len() as u32)?;
            for &d in &s.shape {
                ck.u32(d as u32)?;
            }
        }
        ck.f64s(self.data.iter().copied())
    }

    /// Reads values into a model whose layout is already known; shapes in
    /// the file must match.
    pub fn read_into<R: Read>(&mut self, ck: &mut CheckpointReader<R>) -> Result<(), CheckpointError> {
        let n = ck.u32()? as usize;
        if n != self.slots.len() {
            return Err(CheckpointError::Malformed(format!(
                "{n} tensors in file, model has {}",
                self.slots.len()
            )));
        }
        for s in &self.slots {
            let rank = ck.u32()? as usize;
            let shape = (0..rank)
                .map(|_| ck.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if shape != s.shape {
                return Err(CheckpointError::Malformed(format!(
                    "tensor shape {shape:?} in file, model expects {:?}",
                    s.shape
                )));
            }
        }
        self.data = ck.f64s(self.data.len())?;
        Ok(())
    }
}
