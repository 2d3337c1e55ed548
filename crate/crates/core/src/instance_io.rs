//! On-disk form of a [`ProblemInstance`].
//!
//! The binary container (all integers and floats little-endian):
//!
//! | offset | size      | content                                        |
//! |--------|-----------|------------------------------------------------|
//! | 0      | 4         | magic `b"MMVP"`                                |
//! | 4      | 4         | `u32` format version, currently 1              |
//! | 8      | 8 × 3     | `u64` M, N, L                                  |
//! | 32     | 4         | `u32` flags: bit 0 truth present, bit 1 noise  |
//! | 36     | 4         | `u32` reserved, zero                           |
//! | 40     | 8·M·N     | Φ, `f64`, row-major                            |
//! |        | 8·M·L     | Y, row-major                                   |
//! |        | 8·N·L     | X (if bit 0), row-major                        |
//! |        | 8·M·L     | E (if bit 1), row-major                        |
//!
//! Metadata lives next to it in a JSON sidecar with the same stem and a `.json`
//! extension (see [`InstanceMeta`]).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::linalg::Mat;
use crate::model::ProblemInstance;

pub const MAGIC: [u8; 4] = *b"MMVP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 40;
const FLAG_TRUTH: u32 = 1;
const FLAG_NOISE: u32 = 2;

#[derive(Debug, Error)]
pub enum InstanceIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Instance(#[from] Error),
}

/// Sidecar metadata for generated instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

impl InstanceMeta {
    pub fn for_instance(p: &ProblemInstance) -> Self {
        Self {
            m: p.m(),
            n: p.n(),
            l: p.l(),
            s: p.true_support().map(<[usize]>::len),
            support: p.true_support().map(<[usize]>::to_vec),
            ..Self::default()
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode_instance(p: &ProblemInstance) -> Vec<u8> {
    let (m, n, l) = (p.m(), p.n(), p.l());
    let mut flags = 0;
    let mut len = HEADER_LEN + 8 * (m * n + m * l);
    if p.truth().is_some() {
        flags |= FLAG_TRUTH;
        len += 8 * n * l;
    }
    if p.noise().is_some() {
        flags |= FLAG_NOISE;
        len += 8 * m * l;
    }
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [m, n, l] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    push_row_major(&mut out, p.phi());
    push_row_major(&mut out, p.y());
    if let Some(x) = p.truth() {
        push_row_major(&mut out, x);
    }
    if let Some(e) = p.noise() {
        push_row_major(&mut out, e);
    }
    out
}

fn push_row_major(out: &mut Vec<u8>, m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

/// Decodes the binary container. `support` overrides the support derived from the truth.
pub fn decode_instance(
    bytes: &[u8],
    support: Option<Vec<usize>>,
) -> std::result::Result<ProblemInstance, String> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
        return Err("not an MMVP instance file".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let dims: Vec<usize> = (0..3)
        .map(|i| usize::try_from(u64_at(8 + 8 * i)).map_err(|_| "dimension overflow".to_string()))
        .collect::<std::result::Result<_, _>>()?;
    let (m, n, l) = (dims[0], dims[1], dims[2]);
    let flags = u32_at(32);
    if flags & !(FLAG_TRUTH | FLAG_NOISE) != 0 {
        return Err(format!("unknown flags {flags:#x}"));
    }
    let mut expected = m
        .checked_mul(n)
        .and_then(|mn| mn.checked_add(m.checked_mul(l)?))
        .ok_or("dimension overflow")?;
    if flags & FLAG_TRUTH != 0 {
        expected += n * l;
    }
    if flags & FLAG_NOISE != 0 {
        expected += m * l;
    }
    if bytes.len() != HEADER_LEN + 8 * expected {
        return Err(format!(
            "expected {} bytes for a {m}x{n}x{l} instance, found {}",
            HEADER_LEN + 8 * expected,
            bytes.len()
        ));
    }

    let mut cursor = HEADER_LEN;
    let mut take = |rows: usize, cols: usize| {
        let m = Mat::from_row_iterator(
            rows,
            cols,
            bytes[cursor..cursor + 8 * rows * cols]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        );
        cursor += 8 * rows * cols;
        m
    };
    let phi = take(m, n);
    let y = take(m, l);
    let truth = (flags & FLAG_TRUTH != 0).then(|| take(n, l));
    let noise = (flags & FLAG_NOISE != 0).then(|| take(m, l));
    ProblemInstance::from_parts(phi, y, truth, noise, support).map_err(|e| e.to_string())
}

/// Writes `path` and its JSON sidecar.
pub fn write_instance(
    path: &Path,
    p: &ProblemInstance,
    meta: &InstanceMeta,
) -> std::result::Result<(), InstanceIoError> {
    let io = |source| InstanceIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(path, encode_instance(p)).map_err(io)?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(meta).map_err(|source| InstanceIoError::Json {
        path: side.clone(),
        source,
    })?;
    fs::write(&side, json).map_err(|source| InstanceIoError::Io { path: side, source })
}

/// Reads an instance and, if present, its sidecar.
pub fn read_instance(
    path: &Path,
) -> std::result::Result<(ProblemInstance, Option<InstanceMeta>), InstanceIoError> {
    let bytes = fs::read(path).map_err(|source| InstanceIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let side = sidecar_path(path);
    let meta = match fs::read(&side) {
        Ok(raw) => Some(
            serde_json::from_slice::<InstanceMeta>(&raw)
                .map_err(|source| InstanceIoError::Json { path: side, source })?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(source) => return Err(InstanceIoError::Io { path: side, source }),
    };
    let support = meta.as_ref().and_then(|m| m.support.clone());
    let inst = decode_instance(&bytes, support).map_err(|msg| InstanceIoError::Format {
        path: path.to_path_buf(),
        msg,
    })?;
    Ok((inst, meta))
}
