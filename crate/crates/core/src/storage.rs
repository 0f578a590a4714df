//! On-disk run logs: a JSON manifest plus one binary file per round.
//!
//! Layout under a run directory:
//!
//! ```text
//! manifest.json          format version, seed, round count, config echo+hash,
//!                        architecture (layer names and lengths)
//! rounds/round_0001.bin  one file per round, numbered from 1
//! ```
//!
//! A round file is `"FVROUND1"` magic, round number (u32), client count
//! (u32), a pruned-updates flag (u8), then parameter blobs in a fixed order:
//! global model before the round, each client's raw update, each client's
//! pruned update (only if the flag is set), global model after. All integers
//! and floats are little-endian; a parameter blob is a layer count followed
//! by (name length, name bytes, value count, values) per layer. The file ends
//! with the SHA-256 of every preceding byte; replay verifies it, so logs are
//! bit-identical to the run that wrote them or refused outright.
//!
//! Client datasets can be dumped to a `"FVDATA01"` container with the same
//! checksum scheme for external inspection.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::engine::RoundLog;
use crate::error::{Error, Result};
use crate::params::{Architecture, Layer, LayeredParams};
use crate::synthdata::{ClientDataset, Sample, SettingKind};

pub const FORMAT_VERSION: u32 = 1;
pub const ROUND_MAGIC: &[u8; 8] = b"FVROUND1";
pub const DATA_MAGIC: &[u8; 8] = b"FVDATA01";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ROUNDS_SUBDIR: &str = "rounds";

// Caps applied while parsing untrusted length fields.
const MAX_NAME_LEN: u32 = 1 << 12;
const MAX_LAYER_LEN: u64 = 1 << 32;

/// Run-level metadata stored next to the round files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub rounds: u32,
    pub setting: SettingKind,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    /// Layer names and lengths, in declared order.
    pub architecture: Vec<(String, usize)>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, arch: &Architecture) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            seed: cfg.seed,
            rounds: cfg.rounds,
            setting: cfg.setting,
            config_hash: cfg.config_hash(),
            config: cfg.to_map(),
            architecture: arch.layers().to_vec(),
        }
    }
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::CorruptLog(format!("{}: {what}", path.display()))
}

pub fn round_file_name(t: u32) -> String {
    format!("round_{t:04}.bin")
}

pub fn round_file_path(dir: &Path, t: u32) -> PathBuf {
    dir.join(ROUNDS_SUBDIR).join(round_file_name(t))
}

fn write_params_blob(out: &mut Vec<u8>, p: &LayeredParams) {
    out.write_u32::<LittleEndian>(p.n_layers() as u32).unwrap();
    for layer in p.layers() {
        let name = layer.name.as_bytes();
        out.write_u32::<LittleEndian>(name.len() as u32).unwrap();
        out.write_all(name).unwrap();
        out.write_u64::<LittleEndian>(layer.values.len() as u64).unwrap();
        for &v in &layer.values {
            out.write_f64::<LittleEndian>(v).unwrap();
        }
    }
}

fn read_params_blob(cur: &mut Cursor<&[u8]>, path: &Path) -> Result<LayeredParams> {
    let n_layers = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt(path, "truncated layer count"))?;
    let mut layers = Vec::with_capacity(n_layers as usize);
    for _ in 0..n_layers {
        let name_len = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt(path, "truncated name length"))?;
        if name_len > MAX_NAME_LEN {
            return Err(corrupt(path, format!("implausible layer name length {name_len}")));
        }
        let mut name = vec![0u8; name_len as usize];
        cur.read_exact(&mut name)
            .map_err(|_| corrupt(path, "truncated layer name"))?;
        let name = String::from_utf8(name)
            .map_err(|_| corrupt(path, "layer name is not UTF-8"))?;
        let len = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| corrupt(path, "truncated value count"))?;
        if len > MAX_LAYER_LEN {
            return Err(corrupt(path, format!("implausible layer length {len}")));
        }
        let mut values = Vec::with_capacity(len as usize);
        for _ in 0..len {
            values.push(
                cur.read_f64::<LittleEndian>()
                    .map_err(|_| corrupt(path, "truncated layer values"))?,
            );
        }
        layers.push(Layer { name, values });
    }
    Ok(LayeredParams::new(layers))
}

/// Serializes one round to its checksummed byte form.
pub fn round_file_bytes(log: &RoundLog) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(ROUND_MAGIC);
    body.write_u32::<LittleEndian>(log.round).unwrap();
    body.write_u32::<LittleEndian>(log.updates.len() as u32).unwrap();
    body.write_u8(log.pruned.is_some() as u8).unwrap();
    write_params_blob(&mut body, &log.global_before);
    for d in &log.updates {
        write_params_blob(&mut body, d);
    }
    if let Some(pruned) = &log.pruned {
        for d in pruned {
            write_params_blob(&mut body, d);
        }
    }
    write_params_blob(&mut body, &log.global_after);
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);
    body
}

pub fn write_round_file(dir: &Path, log: &RoundLog) -> Result<()> {
    let path = round_file_path(dir, log.round);
    std::fs::write(&path, round_file_bytes(log)).map_err(|e| Error::io(&path, e))
}

pub fn read_round_file(path: &Path) -> Result<RoundLog> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => corrupt(path, "missing round file"),
        _ => Error::io(path, e),
    })?;
    if bytes.len() < 32 + ROUND_MAGIC.len() {
        return Err(corrupt(path, "file shorter than header plus checksum"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != tail {
        return Err(corrupt(path, "checksum mismatch"));
    }
    let mut cur = Cursor::new(body);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic).unwrap();
    if &magic != ROUND_MAGIC {
        return Err(corrupt(path, "bad magic (not a round file or wrong version)"));
    }
    let round = cur.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated round"))?;
    let n_clients = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt(path, "truncated client count"))? as usize;
    let has_pruned = match cur.read_u8().map_err(|_| corrupt(path, "truncated flag"))? {
        0 => false,
        1 => true,
        other => return Err(corrupt(path, format!("bad pruned flag {other}"))),
    };
    let global_before = read_params_blob(&mut cur, path)?;
    let mut updates = Vec::with_capacity(n_clients);
    for _ in 0..n_clients {
        updates.push(read_params_blob(&mut cur, path)?);
    }
    let pruned = if has_pruned {
        let mut v = Vec::with_capacity(n_clients);
        for _ in 0..n_clients {
            v.push(read_params_blob(&mut cur, path)?);
        }
        Some(v)
    } else {
        None
    };
    let global_after = read_params_blob(&mut cur, path)?;
    if cur.position() != body.len() as u64 {
        return Err(corrupt(path, "trailing bytes after payload"));
    }
    Ok(RoundLog { round, global_before, updates, pruned, global_after })
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => corrupt(&path, "missing manifest"),
        _ => Error::io(&path, e),
    })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| corrupt(&path, format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(
            &path,
            format!(
                "format version {} (this build reads {FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    Ok(manifest)
}

/// Creates the run directory skeleton (the directory itself plus `rounds/`).
pub fn init_run_dir(dir: &Path) -> Result<()> {
    let rounds = dir.join(ROUNDS_SUBDIR);
    std::fs::create_dir_all(&rounds).map_err(|e| Error::io(&rounds, e))
}

/// Writes a complete run: manifest plus every round file.
pub fn write_run(dir: &Path, manifest: &Manifest, logs: &[RoundLog]) -> Result<()> {
    init_run_dir(dir)?;
    write_manifest(dir, manifest)?;
    for log in logs {
        write_round_file(dir, log)?;
    }
    Ok(())
}

/// Reads a run back, verifying completeness: every round 1..=manifest.rounds
/// present, properly numbered, checksummed, and architecture-consistent.
pub fn replay(dir: &Path) -> Result<(Manifest, Vec<RoundLog>)> {
    let manifest = read_manifest(dir)?;
    let want_arch = Architecture::new(manifest.architecture.clone());
    let mut logs = Vec::with_capacity(manifest.rounds as usize);
    let mut n_clients: Option<usize> = None;
    for t in 1..=manifest.rounds {
        let path = round_file_path(dir, t);
        let log = read_round_file(&path)?;
        if log.round != t {
            return Err(corrupt(&path, format!("contains round {}, expected {t}", log.round)));
        }
        if log.global_before.architecture() != want_arch {
            return Err(corrupt(&path, "architecture differs from manifest"));
        }
        match n_clients {
            None => n_clients = Some(log.updates.len()),
            Some(n) if n != log.updates.len() => {
                return Err(corrupt(
                    &path,
                    format!("client count changed from {n} to {}", log.updates.len()),
                ));
            }
            _ => {}
        }
        logs.push(log);
    }
    Ok((manifest, logs))
}

/// Serializes client datasets plus the validation split for external
/// inspection.
pub fn dataset_bytes(
    clients: &[ClientDataset],
    validation: &[Sample],
    h: usize,
    w: usize,
) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(DATA_MAGIC);
    body.write_u32::<LittleEndian>(h as u32).unwrap();
    body.write_u32::<LittleEndian>(w as u32).unwrap();
    body.write_u32::<LittleEndian>(clients.len() as u32).unwrap();
    let write_samples = |body: &mut Vec<u8>, samples: &[Sample]| {
        body.write_u64::<LittleEndian>(samples.len() as u64).unwrap();
        for s in samples {
            body.write_u32::<LittleEndian>(s.label as u32).unwrap();
            for &p in &s.pixels {
                body.write_f64::<LittleEndian>(p).unwrap();
            }
        }
    };
    for c in clients {
        body.write_u32::<LittleEndian>(c.client as u32).unwrap();
        write_samples(&mut body, &c.samples);
    }
    write_samples(&mut body, validation);
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);
    body
}

pub fn write_datasets(
    path: &Path,
    clients: &[ClientDataset],
    validation: &[Sample],
    h: usize,
    w: usize,
) -> Result<()> {
    std::fs::write(path, dataset_bytes(clients, validation, h, w))
        .map_err(|e| Error::io(path, e))
}

/// Reads a dataset dump back: (clients, validation, h, w).
pub fn read_datasets(path: &Path) -> Result<(Vec<ClientDataset>, Vec<Sample>, usize, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 + DATA_MAGIC.len() {
        return Err(corrupt(path, "file shorter than header plus checksum"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != tail {
        return Err(corrupt(path, "checksum mismatch"));
    }
    let mut cur = Cursor::new(body);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic).unwrap();
    if &magic != DATA_MAGIC {
        return Err(corrupt(path, "bad magic (not a dataset dump)"));
    }
    let h = cur.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated height"))? as usize;
    let w = cur.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated width"))? as usize;
    let n_clients =
        cur.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated client count"))?;
    let read_samples = |cur: &mut Cursor<&[u8]>| -> Result<Vec<Sample>> {
        let n = cur.read_u64::<LittleEndian>().map_err(|_| corrupt(path, "truncated count"))?;
        if n > MAX_LAYER_LEN {
            return Err(corrupt(path, format!("implausible sample count {n}")));
        }
        let mut samples = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let label =
                cur.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated label"))?;
            let mut pixels = Vec::with_capacity(h * w);
            for _ in 0..h * w {
                pixels.push(
                    cur.read_f64::<LittleEndian>()
                        .map_err(|_| corrupt(path, "truncated pixels"))?,
                );
            }
            samples.push(Sample { pixels, label: label as usize });
        }
        Ok(samples)
    };
    let mut clients = Vec::with_capacity(n_clients as usize);
    for _ in 0..n_clients {
        let client =
            cur.read_u32::<LittleEndian>().map_err(|_| corrupt(path, "truncated client id"))?;
        let samples = read_samples(&mut cur)?;
        clients.push(ClientDataset { client: client as usize, samples });
    }
    let validation = read_samples(&mut cur)?;
    if cur.position() != body.len() as u64 {
        return Err(corrupt(path, "trailing bytes after payload"));
    }
    Ok((clients, validation, h, w))
}
