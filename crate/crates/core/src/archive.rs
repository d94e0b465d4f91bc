//! On-disk chain archives.
//!
//! An archive is a directory holding
//!
//! * `manifest.json`: run metadata, configuration, hyperparameters, and the
//!   list of field files with their SHA-256 digests;
//! * one `<field>.f64` file per retained field: for every draw, a block made
//!   of the number of axes (`u64`), the axis lengths (`u64` each) and the
//!   values (`f64`), all little-endian, row-major;
//! * `checkpoint.json`: the full state after the last sweep, for resuming.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::data::Hyperparams;
use crate::error::{Error, Result};
use crate::gibbs::{ChainConfig, ChainMeta, ChainSamples, ChainState, Draw, KernelSet};
use crate::spatiotemporal::{StAdaptation, StBlock, StDraw, StHyper};

pub const FORMAT: &str = "mmm-chain-archive/1";
pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub name: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub meta: ChainMeta,
    pub config: ChainConfig,
    pub hyper: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub st_hyper: Option<StHyper>,
    /// Iteration index of every retained draw.
    pub iterations: Vec<usize>,
    pub fields: Vec<FieldEntry>,
    /// Free-form run details (paths, wall time, timestamps).
    #[serde(default)]
    pub run: serde_json::Map<String, serde_json::Value>,
}

/// Full sampler state after the last completed sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub next_iteration: usize,
    pub state: ChainState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<StBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<StAdaptation>,
    /// SHA-256 of the archived draws this checkpoint continues.
    pub manifest_digest: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_block(out: &mut Vec<u8>, shape: &[usize], values: &[f64]) {
    out.extend((shape.len() as u64).to_le_bytes());
    for &d in shape {
        out.extend((d as u64).to_le_bytes());
    }
    for v in values {
        out.extend(v.to_le_bytes());
    }
}

struct BlockReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl BlockReader<'_> {
    fn u64(&mut self) -> Result<u64> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::Validation(format!("{} is truncated", self.file)))?;
        self.pos += 8;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn block(&mut self) -> Result<(Vec<usize>, Vec<f64>)> {
        let ndim = self.u64()? as usize;
        if ndim > 8 {
            return Err(Error::Validation(format!("{} has a block with {ndim} axes", self.file)));
        }
        let shape = (0..ndim).map(|_| self.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let values = (0..len).map(|_| self.u64().map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        Ok((shape, values))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Field blocks of one draw, in a fixed order.
fn draw_fields(d: &Draw, meta: &ChainMeta) -> Vec<(&'static str, Vec<usize>, Vec<f64>)> {
    let g = meta.groups;
    let mut out = vec![("mu", vec![g], d.mu.clone()), ("sigma", vec![g, g], d.sigma.clone())];
    if let Some(k) = &d.kernels {
        let flat: Vec<f64> = (0..k.p()).flat_map(|j| k.variable(j).iter().copied()).collect();
        out.push(("kernels", vec![flat.len()], flat));
    }
    if let Some(l) = &d.lambda {
        out.push(("lambda", vec![meta.n, g], l.clone()));
    }
    if let Some(z) = &d.z {
        out.push(("z", vec![meta.n, meta.p], z.iter().map(|&v| v as f64).collect()));
    }
    if let Some(w) = &d.omega {
        out.push(("omega", vec![meta.n, g], w.clone()));
    }
    if let Some(st) = &d.st {
        let t = st.epochs();
        out.push(("beta_t", vec![t, g], st.beta_t.clone()));
        out.push(("beta", vec![g], st.beta.clone()));
        out.push(("sigma_beta", vec![g, g], st.sigma_beta.clone()));
        out.push(("sigma_t", vec![t, g, g], st.sigma_t.concat()));
        out.push(("length_scales", vec![t, g, 2], st.length_scales.clone()));
        out.push(("zeta_tilde", vec![meta.n, g], st.zeta_tilde.clone()));
    }
    out
}

/// Writes `samples` (and optionally a checkpoint) into `dir`, replacing any
/// previous archive there.
pub fn write_archive(
    dir: &Path,
    samples: &ChainSamples,
    config: &ChainConfig,
    hyper: &Hyperparams,
    st_hyper: Option<&StHyper>,
    run: serde_json::Map<String, serde_json::Value>,
    checkpoint: Option<(usize, &ChainState, Option<&StBlock>, Option<&StAdaptation>)>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut buffers: Vec<(&'static str, Vec<u8>)> = Vec::new();
    for d in &samples.draws {
        for (name, shape, values) in draw_fields(d, &samples.meta) {
            let buf = match buffers.iter_mut().find(|(n, _)| *n == name) {
                Some((_, b)) => b,
                None => {
                    buffers.push((name, Vec::new()));
                    &mut buffers.last_mut().expect("just pushed").1
                }
            };
            write_block(buf, &shape, &values);
        }
    }
    let mut fields = Vec::with_capacity(buffers.len());
    for (name, bytes) in &buffers {
        let file = format!("{name}.f64");
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        fields.push(FieldEntry { name: name.to_string(), file, sha256: sha256_hex(bytes) });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        meta: samples.meta.clone(),
        config: *config,
        hyper: hyper.clone(),
        st_hyper: st_hyper.cloned(),
        iterations: samples.draws.iter().map(|d| d.iteration).collect(),
        fields,
        run,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, &text).map_err(io_err(&mpath))?;
    let cpath = dir.join(CHECKPOINT);
    match checkpoint {
        Some((next_iteration, state, block, adaptation)) => {
            let cp = Checkpoint {
                next_iteration,
                state: state.clone(),
                block: block.cloned(),
                adaptation: adaptation.cloned(),
                manifest_digest: draws_digest(&manifest),
            };
            let t = serde_json::to_string(&cp)?;
            fs::write(&cpath, t).map_err(io_err(&cpath))?;
        }
        None => {
            if cpath.exists() {
                fs::remove_file(&cpath).map_err(io_err(&cpath))?;
            }
        }
    }
    Ok(manifest)
}

/// Digest over the field digests and retained iterations, linking a
/// checkpoint to the draws it continues.
fn draws_digest(m: &Manifest) -> String {
    let mut h = Sha256::new();
    for f in &m.fields {
        h.update(f.name.as_bytes());
        h.update(f.sha256.as_bytes());
    }
    for it in &m.iterations {
        h.update((*it as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT {
        return Err(Error::Validation(format!("unsupported archive format '{}'", m.format)));
    }
    Ok(m)
}

fn read_field(dir: &Path, entry: &FieldEntry) -> Result<Vec<u8>> {
    let path: PathBuf = dir.join(&entry.file);
    let mut bytes = Vec::new();
    fs::File::open(&path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(&path))?;
    let digest = sha256_hex(&bytes);
    if digest != entry.sha256 {
        return Err(Error::Validation(format!("checksum mismatch for {}", path.display())));
    }
    Ok(bytes)
}

/// Checks every field file against its recorded digest.
pub fn verify_archive(dir: &Path) -> Result<Manifest> {
    let m = read_manifest(dir)?;
    for f in &m.fields {
        read_field(dir, f)?;
    }
    Ok(m)
}

/// Loads and verifies an archive.
pub fn read_archive(dir: &Path) -> Result<(ChainSamples, Manifest)> {
    let m = read_manifest(dir)?;
    let nd = m.iterations.len();
    let mut columns: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for f in &m.fields {
        let bytes = read_field(dir, f)?;
        let mut r = BlockReader { bytes: &bytes, pos: 0, file: &f.file };
        let blocks = (0..nd).map(|_| r.block().map(|b| b.1)).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Validation(format!("{} has trailing data", f.file)));
        }
        columns.push((f.name.clone(), blocks));
    }
    let take = |name: &str, k: usize| columns.iter().find(|(n, _)| n == name).map(|(_, c)| c[k].clone());
    let meta = &m.meta;
    let g = meta.groups;
    let mut draws = Vec::with_capacity(nd);
    for (k, &iteration) in m.iterations.iter().enumerate() {
        let missing = |n: &str| Error::Validation(format!("archive lacks field '{n}'"));
        let kernels = take("kernels", k).map(|flat| {
            let mut off = 0;
            let theta = meta
                .levels
                .iter()
                .map(|&d| {
                    let v = flat[off..off + 2 * d].to_vec();
                    off += 2 * d;
                    v
                })
                .collect();
            KernelSet::from_flat(2, meta.levels.clone(), theta)
        });
        let st = match take("beta_t", k) {
            Some(beta_t) => {
                let sigma_t_flat = take("sigma_t", k).ok_or_else(|| missing("sigma_t"))?;
                Some(StDraw {
                    beta_t,
                    beta: take("beta", k).ok_or_else(|| missing("beta"))?,
                    sigma_beta: take("sigma_beta", k).ok_or_else(|| missing("sigma_beta"))?,
                    sigma_t: sigma_t_flat.chunks(g * g).map(<[f64]>::to_vec).collect(),
                    length_scales: take("length_scales", k).ok_or_else(|| missing("length_scales"))?,
                    zeta_tilde: take("zeta_tilde", k).ok_or_else(|| missing("zeta_tilde"))?,
                })
            }
            None => None,
        };
        draws.push(Draw {
            iteration,
            mu: take("mu", k).ok_or_else(|| missing("mu"))?,
            sigma: take("sigma", k).ok_or_else(|| missing("sigma"))?,
            kernels,
            lambda: take("lambda", k),
            z: take("z", k).map(|v| v.iter().map(|&x| x as u8).collect()),
            omega: take("omega", k),
            st,
        });
    }
    Ok((ChainSamples { meta: m.meta.clone(), draws }, m))
}

/// Loads the checkpoint and checks that it continues the archived draws.
pub fn read_checkpoint(dir: &Path, manifest: &Manifest) -> Result<Checkpoint> {
    let path = dir.join(CHECKPOINT);
    let mut text = String::new();
    fs::File::open(&path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io_err(&path))?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    if cp.manifest_digest != draws_digest(manifest) {
        return Err(Error::Validation("checkpoint does not belong to the archived draws".into()));
    }
    Ok(cp)
}

/// Appends a line of text to a file, creating it if needed.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}
