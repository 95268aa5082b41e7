//! Versioned flat binary checkpoints: a 4-byte magic, a `u32` format
//! version, then `u32` dimensions and little-endian `f64` arrays.

use std::io::{self, Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub struct CheckpointWriter<W: Write> {
    inner: W,
}

impl<W: Write> CheckpointWriter<W> {
    pub fn new(mut inner: W, magic: [u8; 4], version: u32) -> io::Result<Self> {
        inner.write_all(&magic)?;
        inner.write_all(&version.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn u32(&mut self, v: u32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }

    /// Length-prefixed array.
    pub fn f64s(&mut self, vs: impl ExactSizeIterator<Item = f64>) -> io::Result<()> {
        self.u32(vs.len() as u32)?;
        for v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct CheckpointReader<R: Read> {
    inner: R,
    pub version: u32,
}

impl<R: Read> CheckpointReader<R> {
    pub fn new(mut inner: R, magic: [u8; 4], max_version: u32) -> Result<Self, CheckpointError> {
        let mut found = [0u8; 4];
        inner.read_exact(&mut found)?;
        if found != magic {
            return Err(CheckpointError::Magic {
                expected: magic,
                found,
            });
        }
        let mut r = Self { inner, version: 0 };
        r.version = r.u32()?;
        if r.version == 0 || r.version > max_version {
            return Err(CheckpointError::Version(r.version));
        }
        Ok(r)
    }

    pub fn u32(&mut self) -> Result<u32, CheckpointError> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn f64(&mut self) -> Result<f64, CheckpointError> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    /// Reads a length-prefixed array whose length must equal `expected`.
    pub fn f64s(&mut self, expected: usize) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u32()? as usize;
        if n != expected {
            return Err(CheckpointError::Malformed(format!(
                "array length {n}, expected {expected}"
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    /// Fails unless the stream is exhausted.
    pub fn finish(mut self) -> Result<(), CheckpointError> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(CheckpointError::Malformed("trailing bytes".into())),
        }
    }
}
