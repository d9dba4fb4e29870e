//! Binary checkpoint format.
//!
//! Layout (all integers little-endian, reals little-endian f64, matrices
//! row-major and length-prefixed with rows/cols):
//!
//! ```text
//! magic   b"BIOG"
//! version u32          (currently 1)
//! algo    u8           (0 bp, 1 fa, 2 dfa, 3 bfa, 4 bdfa)
//! seed    u64
//! epoch   u64          (completed epochs)
//! forward net:  count u32, then per layer: weight mat, bias mat
//! channel tag u8, then payload per kind (see below)
//! ```
//!
//! Loading a saved state and resuming reproduces the uninterrupted run
//! bit for bit, because all run randomness is derived from (seed, epoch).

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::network::{BackwardNet, ForwardNet};
use crate::numerics::Mat;
use crate::rules::{Algo, FeedbackChannel};

const MAGIC: [u8; 4] = *b"BIOG";
const VERSION: u32 = 1;

const TAG_TRANSPOSE: u8 = 0;
const TAG_FIXED_CHAIN: u8 = 1;
const TAG_FIXED_DIRECT: u8 = 2;
const TAG_TRAINED_MIRROR: u8 = 3;
const TAG_TRAINED_DIRECT: u8 = 4;

/// Resumable training state: everything the loop mutates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub algo: Algo,
    pub seed: u64,
    pub completed_epochs: u64,
    pub net: ForwardNet<f64>,
    pub channel: FeedbackChannel<f64>,
}

#[derive(Debug)]
pub enum CheckpointError {
    Io { path: PathBuf, source: io::Error },
    BadMagic { path: PathBuf, found: [u8; 4] },
    UnsupportedVersion { path: PathBuf, found: u32 },
    Truncated { path: PathBuf, at_byte: usize },
    Corrupt { path: PathBuf, detail: String },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CheckpointError::BadMagic { path, found } => {
                write!(
                    f,
                    "{}: bad magic {found:?}, expected {MAGIC:?}",
                    path.display()
                )
            }
            CheckpointError::UnsupportedVersion { path, found } => {
                write!(
                    f,
                    "{}: unsupported version {found}, expected {VERSION}",
                    path.display()
                )
            }
            CheckpointError::Truncated { path, at_byte } => {
                write!(f, "{}: truncated at byte {at_byte}", path.display())
            }
            CheckpointError::Corrupt { path, detail } => {
                write!(f, "{}: {detail}", path.display())
            }
        }
    }
}

impl std::error::Error for CheckpointError {}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn mat(&mut self, m: &Mat<f64>) {
        self.u32(m.rows() as u32);
        self.u32(m.cols() as u32);
        for &v in m.as_slice() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn mats(&mut self, ms: &[Mat<f64>]) {
        self.u32(ms.len() as u32);
        for m in ms {
            self.mat(m);
        }
    }
    fn net(&mut self, weights: &[Mat<f64>], biases: &[Mat<f64>]) {
        self.u32(weights.len() as u32);
        for (w, b) in weights.iter().zip(biases) {
            self.mat(w);
            self.mat(b);
        }
    }
}

/// (weights, biases) as read back from a checkpoint.
type NetParts = (Vec<Mat<f64>>, Vec<Mat<f64>>);

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                path: self.path.to_path_buf(),
                at_byte: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn corrupt(&self, detail: impl Into<String>) -> CheckpointError {
        CheckpointError::Corrupt {
            path: self.path.to_path_buf(),
            detail: detail.into(),
        }
    }
    fn mat(&mut self) -> Result<Mat<f64>, CheckpointError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| self.corrupt(format!("implausible matrix {rows}x{cols}")))?;
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Mat::from_vec(rows, cols, data)
            .map_err(|e| self.corrupt(format!("bad matrix {rows}x{cols}: {e}")))
    }
    fn mats(&mut self) -> Result<Vec<Mat<f64>>, CheckpointError> {
        let count = self.u32()? as usize;
        (0..count).map(|_| self.mat()).collect()
    }
    fn net_parts(&mut self) -> Result<NetParts, CheckpointError> {
        let count = self.u32()? as usize;
        let mut weights = Vec::with_capacity(count);
        let mut biases = Vec::with_capacity(count);
        for _ in 0..count {
            weights.push(self.mat()?);
            biases.push(self.mat()?);
        }
        Ok((weights, biases))
    }
}

fn sizes_from_weights(weights: &[Mat<f64>]) -> Vec<usize> {
    let mut sizes = vec![weights[0].cols()];
    sizes.extend(weights.iter().map(|w| w.rows()));
    sizes
}

/// Serialize a training state; identical states produce identical bytes.
pub fn encode_checkpoint(state: &TrainState) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u8(state.algo as u8);
    w.u64(state.seed);
    w.u64(state.completed_epochs);
    w.net(state.net.weights(), state.net.biases());
    match &state.channel {
        FeedbackChannel::Transpose => w.u8(TAG_TRANSPOSE),
        FeedbackChannel::FixedChain(mats) => {
            w.u8(TAG_FIXED_CHAIN);
            w.mats(mats);
        }
        FeedbackChannel::FixedDirect(mats) => {
            w.u8(TAG_FIXED_DIRECT);
            w.mats(mats);
        }
        FeedbackChannel::TrainedMirror(net) => {
            w.u8(TAG_TRAINED_MIRROR);
            w.net(net.weights(), net.biases());
        }
        FeedbackChannel::TrainedDirect(mats) => {
            w.u8(TAG_TRAINED_DIRECT);
            w.mats(mats);
        }
    }
    w.buf
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(state)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };

    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let algo = match r.u8()? {
        0 => Algo::Bp,
        1 => Algo::Fa,
        2 => Algo::Dfa,
        3 => Algo::Bfa,
        4 => Algo::Bdfa,
        other => return Err(r.corrupt(format!("unknown algorithm tag {other}"))),
    };
    let seed = r.u64()?;
    let completed_epochs = r.u64()?;

    let (weights, biases) = r.net_parts()?;
    if weights.is_empty() {
        return Err(r.corrupt("empty forward net"));
    }
    let sizes = sizes_from_weights(&weights);
    let net = ForwardNet::from_parts(sizes, weights, biases)
        .map_err(|e| r.corrupt(format!("inconsistent forward net: {e}")))?;

    let channel = match r.u8()? {
        TAG_TRANSPOSE => FeedbackChannel::Transpose,
        TAG_FIXED_CHAIN => FeedbackChannel::FixedChain(r.mats()?),
        TAG_FIXED_DIRECT => FeedbackChannel::FixedDirect(r.mats()?),
        TAG_TRAINED_MIRROR => {
            let (w, b) = r.net_parts()?;
            if w.is_empty() {
                return Err(r.corrupt("empty backward net"));
            }
            let sizes = sizes_from_weights(&w);
            FeedbackChannel::TrainedMirror(
                BackwardNet::from_parts(sizes, w, b)
                    .map_err(|e| r.corrupt(format!("inconsistent backward net: {e}")))?,
            )
        }
        TAG_TRAINED_DIRECT => FeedbackChannel::TrainedDirect(r.mats()?),
        other => return Err(r.corrupt(format!("unknown channel tag {other}"))),
    };
    if !channel.matches(algo) {
        return Err(r.corrupt(format!(
            "channel kind {} does not fit algorithm {algo}",
            channel.kind_name()
        )));
    }

    Ok(TrainState {
        algo,
        seed,
        completed_epochs,
        net,
        channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn sample_state(algo: Algo) -> TrainState {
        let mut rng = RngState::new(99);
        let sizes = [6, 5, 4];
        TrainState {
            algo,
            seed: 7,
            completed_epochs: 3,
            net: ForwardNet::new(&sizes, &mut rng),
            channel: FeedbackChannel::for_algo(algo, &sizes, &mut rng),
        }
    }

    #[test]
    fn round_trip_all_channel_kinds() {
        let dir = std::env::temp_dir().join("bidirnet_ckpt");
        fs::create_dir_all(&dir).unwrap();
        for algo in Algo::ALL {
            let state = sample_state(algo);
            let path = dir.join(format!("{algo}.ckpt"));
            save_checkpoint(&state, &path).unwrap();
            let loaded = load_checkpoint(&path).unwrap();
            assert_eq!(loaded.algo, algo);
            assert_eq!(loaded.seed, 7);
            assert_eq!(loaded.completed_epochs, 3);
            assert_eq!(loaded.net, state.net);
            assert_eq!(loaded.channel, state.channel);
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let state = sample_state(Algo::Bfa);
        let first = encode_checkpoint(&state);
        let dir = std::env::temp_dir().join("bidirnet_ckpt_idem");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.ckpt");
        fs::write(&path, &first).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let second = encode_checkpoint(&loaded);
        assert_eq!(first, second);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let state = sample_state(Algo::Bp);
        let mut bytes = encode_checkpoint(&state);
        bytes[0] = b'X';
        let dir = std::env::temp_dir().join("bidirnet_ckpt_bad");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncation_is_rejected() {
        let state = sample_state(Algo::Dfa);
        let bytes = encode_checkpoint(&state);
        let dir = std::env::temp_dir().join("bidirnet_ckpt_trunc");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.ckpt");
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let state = sample_state(Algo::Fa);
        let mut bytes = encode_checkpoint(&state);
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        let dir = std::env::temp_dir().join("bidirnet_ckpt_ver");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ver.ckpt");
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::UnsupportedVersion { found: 99, .. })
        ));
    }
}
