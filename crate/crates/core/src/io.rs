//! On-disk formats: the binary grid container (`CTCG` posteriors, `VADG`
//! detector outputs) and the JSON-lines manifests.
//!
//! Container layout, little-endian:
//!
//! ```text
//! magic [u8; 4] | version u32 = 1 | frames u32 | width u32 | frame_shift_ms u32 | frames*width f32
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PosteriorGrid;
use crate::scalar::{to_f64, LogFloat};

pub const GRID_MAGIC: [u8; 4] = *b"CTCG";
pub const VAD_MAGIC: [u8; 4] = *b"VADG";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub magic: [u8; 4],
    pub frames: u32,
    pub width: u32,
    pub frame_shift_ms: u32,
}

fn magic_name(magic: [u8; 4]) -> &'static str {
    if magic == VAD_MAGIC {
        "VADG"
    } else {
        "CTCG"
    }
}

pub fn encode_container(header: ContainerHeader, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + values.len() * 4);
    out.extend_from_slice(&header.magic);
    for word in [
        FORMAT_VERSION,
        header.frames,
        header.width,
        header.frame_shift_ms,
    ] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_header(bytes: &[u8], magic: [u8; 4]) -> Result<ContainerHeader> {
    let kind = magic_name(magic);
    let fail = |reason: String| Error::Format { kind, reason };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if bytes[..4] != magic {
        return Err(fail(format!(
            "magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != FORMAT_VERSION {
        return Err(fail(format!("unsupported version {}", word(0))));
    }
    Ok(ContainerHeader {
        magic,
        frames: word(1),
        width: word(2),
        frame_shift_ms: word(3),
    })
}

pub fn decode_container(bytes: &[u8], magic: [u8; 4]) -> Result<(ContainerHeader, Vec<f32>)> {
    let header = decode_header(bytes, magic)?;
    let count = header.frames as usize * header.width as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 4 {
        return Err(Error::Format {
            kind: magic_name(magic),
            reason: format!("expected {} payload bytes, found {}", count * 4, body.len()),
        });
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn encode_grid<S: LogFloat>(grid: &PosteriorGrid<S>) -> Vec<u8> {
    let values: Vec<f32> = grid.values().iter().map(|&v| to_f64(v) as f32).collect();
    encode_container(
        ContainerHeader {
            magic: GRID_MAGIC,
            frames: grid.frames() as u32,
            width: grid.vocab() as u32,
            frame_shift_ms: grid.frame_shift_ms(),
        },
        &values,
    )
}

pub fn decode_grid<S: LogFloat>(bytes: &[u8]) -> Result<PosteriorGrid<S>> {
    let (header, values) = decode_container(bytes, GRID_MAGIC)?;
    let values = values.into_iter().map(|v| S::lit(v as f64)).collect();
    PosteriorGrid::new(
        header.frames as usize,
        header.width as usize,
        header.frame_shift_ms,
        values,
    )
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid<S: LogFloat>(path: &Path) -> Result<PosteriorGrid<S>> {
    decode_grid(&read_bytes(path)?)
}

pub fn write_grid<S: LogFloat>(path: &Path, grid: &PosteriorGrid<S>) -> Result<()> {
    write_bytes(path, &encode_grid(grid))
}

/// Reads only the 20-byte header of a container file.
pub fn read_header(path: &Path, magic: [u8; 4]) -> Result<ContainerHeader> {
    use std::io::Read;
    let mut buf = [0u8; HEADER_LEN];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    f.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    decode_header(&buf, magic)
}

/// One line of an utterance manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub grid: PathBuf,
    pub frames: usize,
}

impl ManifestEntry {
    /// Grid path, resolved against the manifest's directory when relative.
    pub fn resolve(&self, manifest_dir: &Path) -> PathBuf {
        if self.grid.is_absolute() {
            self.grid.clone()
        } else {
            manifest_dir.join(&self.grid)
        }
    }
}

/// Reference transcript line for evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub id: String,
    pub tokens: Vec<u32>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            kind: "jsonl",
            reason: format!("{}:{}: {e}", path.display(), n + 1),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(writer: impl Write, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(file, items)
}
