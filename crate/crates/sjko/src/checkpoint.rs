//! Binary checkpoint files.
//!
//! Layout: the magic bytes `SJKO`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a UTF-8 JSON header, then every block
//! listed in the header as little-endian `f64` values in order.

use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sjko_core::autodiff::ParamVector;
use sjko_core::nets::{AdamState, MlpSpec};
use sjko_core::rng::RngState;
use sjko_core::sjko::{SjkoTrainer, TrainerCheckpoint};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"SJKO";
pub const FORMAT_VERSION: u32 = 1;
/// Refuse headers larger than this many bytes.
const MAX_HEADER: u64 = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHeader {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: String,
    pub aux_noise_dim: usize,
    pub segments: Vec<SegmentHeader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentHeader {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamHeader {
    pub t: u64,
    pub skipped: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngHeader {
    /// 32-byte key as lowercase hex.
    pub key: String,
    pub stream: u64,
    /// 128-bit position as a decimal string.
    pub word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub created_unix: u64,
    pub config: RunConfig,
    pub dim: usize,
    pub phase: usize,
    pub transport: NetHeader,
    pub potential: NetHeader,
    pub transport_adam: AdamHeader,
    pub potential_adam: AdamHeader,
    pub reference_maps: usize,
    pub rng_source: RngHeader,
    pub rng_target: RngHeader,
    pub rng_noise: RngHeader,
    pub blocks: Vec<BlockHeader>,
}

fn net_header(spec: &MlpSpec, params: &ParamVector) -> NetHeader {
    NetHeader {
        in_dim: spec.in_dim,
        hidden: spec.hidden.clone(),
        out_dim: spec.out_dim,
        activation: spec.activation.name().into(),
        aux_noise_dim: spec.aux_noise_dim,
        segments: params
            .segments()
            .iter()
            .map(|s| SegmentHeader {
                name: s.name.clone(),
                rows: s.rows,
                cols: s.cols,
            })
            .collect(),
    }
}

fn adam_header(a: &AdamState) -> AdamHeader {
    AdamHeader {
        t: a.t,
        skipped: a.skipped,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
    }
}

fn rng_header(s: &RngState) -> RngHeader {
    RngHeader {
        key: s.key.iter().map(|b| format!("{b:02x}")).collect(),
        stream: s.stream,
        word_pos: s.word_pos.to_string(),
    }
}

fn parse_rng(path: &Path, h: &RngHeader) -> CliResult<RngState> {
    let bad = || CliError::checkpoint(path, "malformed RNG state");
    if h.key.len() != 64 {
        return Err(bad());
    }
    let mut key = [0u8; 32];
    for (i, k) in key.iter_mut().enumerate() {
        *k = u8::from_str_radix(&h.key[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(RngState {
        key,
        stream: h.stream,
        word_pos: h.word_pos.parse().map_err(|_| bad())?,
    })
}

/// Writes the trainer state at its current phase boundary.
pub fn save(path: &Path, config: &RunConfig, trainer: &SjkoTrainer) -> CliResult<()> {
    let ck = trainer.checkpoint()?;
    let mut blocks: Vec<(String, &[f64])> = vec![
        ("transport".into(), ck.transport.as_slice()),
        ("transport_adam_m".into(), &ck.transport_adam.m),
        ("transport_adam_v".into(), &ck.transport_adam.v),
        ("potential".into(), ck.potential.as_slice()),
        ("potential_adam_m".into(), &ck.potential_adam.m),
        ("potential_adam_v".into(), &ck.potential_adam.v),
    ];
    for (i, r) in ck.reference.iter().enumerate() {
        blocks.push((format!("reference{i}"), r.as_slice()));
    }
    let header = Header {
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: config.clone(),
        dim: ck.dim,
        phase: ck.phase,
        transport: net_header(trainer.transport_spec(), &ck.transport),
        potential: net_header(trainer.potential_spec(), &ck.potential),
        transport_adam: adam_header(&ck.transport_adam),
        potential_adam: adam_header(&ck.potential_adam),
        reference_maps: ck.reference.len(),
        rng_source: rng_header(&ck.source_rng),
        rng_target: rng_header(&ck.target_rng),
        rng_noise: rng_header(&ck.noise_rng),
        blocks: blocks
            .iter()
            .map(|(n, b)| BlockHeader {
                name: n.clone(),
                len: b.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * blocks.iter().map(|b| b.1.len()).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, b) in &blocks {
        for v in *b {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| CliError::io(path, e))
}

/// Reads the header only.
pub fn read_header(path: &Path) -> CliResult<(Header, Vec<u8>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(CliError::checkpoint(path, "not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CliError::checkpoint(
            path,
            format!("format version {version} is not supported (expected {FORMAT_VERSION})"),
        ));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if len > MAX_HEADER || 16 + len as usize > bytes.len() {
        return Err(CliError::checkpoint(path, "truncated header"));
    }
    let end = 16 + len as usize;
    let header: Header =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| CliError::checkpoint(path, format!("bad header: {e}")))?;
    Ok((header, bytes[end..].to_vec()))
}

/// A checkpoint turned back into a trainer, with the configuration it was
/// written with.
pub fn load(path: &Path) -> CliResult<(RunConfig, SjkoTrainer)> {
    let (header, body) = read_header(path)?;
    let total: usize = header.blocks.iter().map(|b| b.len).sum();
    if body.len() != 8 * total {
        return Err(CliError::checkpoint(
            path,
            format!("expected {} bytes of parameters, found {}", 8 * total, body.len()),
        ));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut blocks = std::collections::BTreeMap::new();
    for b in &header.blocks {
        blocks.insert(b.name.clone(), values.by_ref().take(b.len).collect::<Vec<f64>>());
    }
    let mut take = |name: &str| {
        blocks
            .remove(name)
            .ok_or_else(|| CliError::checkpoint(path, format!("missing block {name}")))
    };

    let config = header.config.clone();
    config.validate()?;
    let (source, target) = config.samplers()?;
    let sjko = config.sjko_config()?;
    let tspec = sjko.transport_spec(header.dim);
    let pspec = sjko.potential_spec(header.dim);
    let layout_matches = |spec: &MlpSpec, h: &NetHeader| {
        let layout = spec.layout();
        spec.hidden == h.hidden
            && spec.in_dim == h.in_dim
            && spec.out_dim == h.out_dim
            && spec.activation.name() == h.activation
            && spec.aux_noise_dim == h.aux_noise_dim
            && layout.segments().len() == h.segments.len()
            && layout
                .segments()
                .iter()
                .zip(&h.segments)
                .all(|(a, b)| a.name == b.name && a.rows == b.rows && a.cols == b.cols)
    };
    if !layout_matches(&tspec, &header.transport) || !layout_matches(&pspec, &header.potential) {
        return Err(CliError::checkpoint(
            path,
            "network layout does not match its configuration",
        ));
    }
    let params = |spec: &MlpSpec, data: Vec<f64>| {
        spec.layout()
            .with_data(data)
            .map_err(|e| CliError::checkpoint(path, e.to_string()))
    };
    let adam = |h: &AdamHeader, m: Vec<f64>, v: Vec<f64>| AdamState {
        m,
        v,
        t: h.t,
        beta1: h.beta1,
        beta2: h.beta2,
        eps: h.eps,
        skipped: h.skipped,
    };
    let transport = params(&tspec, take("transport")?)?;
    let transport_adam = adam(
        &header.transport_adam,
        take("transport_adam_m")?,
        take("transport_adam_v")?,
    );
    let potential = params(&pspec, take("potential")?)?;
    let potential_adam = adam(
        &header.potential_adam,
        take("potential_adam_m")?,
        take("potential_adam_v")?,
    );
    let mut reference = Vec::with_capacity(header.reference_maps);
    for i in 0..header.reference_maps {
        reference.push(params(&tspec, take(&format!("reference{i}"))?)?);
    }
    let ck = TrainerCheckpoint {
        config: sjko,
        dim: header.dim,
        phase: header.phase,
        transport,
        transport_adam,
        potential,
        potential_adam,
        reference,
        source_rng: parse_rng(path, &header.rng_source)?,
        target_rng: parse_rng(path, &header.rng_target)?,
        noise_rng: parse_rng(path, &header.rng_noise)?,
    };
    let trainer = SjkoTrainer::restore(ck, source, target).map_err(|e| CliError::checkpoint(path, e.to_string()))?;
    Ok((config, trainer))
}
