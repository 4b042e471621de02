use std::path::Path;

use anyhow::{bail, Context, Result};
use beamlattice::io::{
    read_bytes, read_jsonl, write_jsonl_file, ManifestEntry, GRID_MAGIC, VAD_MAGIC,
};
use beamlattice::segment::{
    hard_segments, vad_pipeline, NodeMap, Segment, SegmentRecord, SegmentSource, SegmentStats,
    VadConfig, VadOutputs,
};

use crate::args::{SegmentArgs, SegmentMode};

fn to_frames(seconds: f64, frame_shift_ms: u32) -> usize {
    (seconds * 1000.0 / frame_shift_ms as f64).round() as usize
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

/// Frame count and frame shift from the header of a grid or detector file.
fn header_of(path: &Path) -> Result<(usize, u32)> {
    let bytes = read_bytes(path)?;
    let magic = if bytes.starts_with(&VAD_MAGIC) {
        VAD_MAGIC
    } else {
        GRID_MAGIC
    };
    let h = beamlattice::io::decode_header(&bytes, magic)
        .with_context(|| path.display().to_string())?;
    Ok((h.frames as usize, h.frame_shift_ms))
}

pub fn run(a: &SegmentArgs) -> Result<bool> {
    let (default_min, default_max) = match a.mode {
        SegmentMode::Vad => (15.0, 20.0),
        SegmentMode::Hard => (19.0, 20.0),
    };
    let min_s = a.min.unwrap_or(default_min);
    let max_s = a.max.unwrap_or(default_max);
    if !(min_s > 0.0 && min_s <= max_s) {
        bail!("need 0 < --min <= --max, got {min_s} and {max_s}");
    }

    let mut segments: Vec<(Segment, u32)> = Vec::new();
    let source = match a.mode {
        SegmentMode::Vad => {
            let Some(nodemap) = &a.nodemap else {
                bail!("vad mode needs --nodemap");
            };
            let nodes = NodeMap::load(nodemap)?;
            if a.inputs.is_empty() {
                bail!("vad mode needs detector output files");
            }
            for path in &a.inputs {
                let out = VadOutputs::read(path)?;
                let cfg = VadConfig {
                    threshold: a.threshold,
                    smooth_window: a.window,
                    min_len: to_frames(min_s, out.frame_shift_ms).max(1),
                    max_len: to_frames(max_s, out.frame_shift_ms).max(1),
                };
                let segs = vad_pipeline(&stem(path), &out, &nodes, &cfg)
                    .with_context(|| path.display().to_string())?;
                segments.extend(segs.into_iter().map(|s| (s, out.frame_shift_ms)));
            }
            SegmentSource::Vad
        }
        SegmentMode::Hard => {
            let mut inputs: Vec<(String, usize, u32)> = Vec::new();
            if let Some(frames) = a.frames {
                inputs.push((a.id.clone(), frames, a.frame_shift_ms));
            }
            if let Some(manifest) = &a.manifest {
                let dir = manifest.parent().unwrap_or(Path::new("."));
                for e in read_jsonl::<ManifestEntry>(manifest)? {
                    let (_, shift) = header_of(&e.resolve(dir))?;
                    inputs.push((e.id, e.frames, shift));
                }
            }
            for path in &a.inputs {
                let (frames, shift) = header_of(path)?;
                inputs.push((stem(path), frames, shift));
            }
            if inputs.is_empty() {
                bail!("hard mode needs --frames, --manifest or input files");
            }
            for (id, frames, shift) in inputs {
                let min_len = to_frames(min_s, shift).max(1);
                let max_len = to_frames(max_s, shift).max(min_len);
                let segs =
                    hard_segments(&id, frames, min_len, max_len).with_context(|| id.clone())?;
                segments.extend(segs.into_iter().map(|s| (s, shift)));
            }
            SegmentSource::Hard
        }
    };

    let records: Vec<SegmentRecord> = segments
        .iter()
        .map(|(s, _)| SegmentRecord::new(s, source))
        .collect();
    write_jsonl_file(&a.out, &records)?;
    let millis: Vec<usize> = segments
        .iter()
        .map(|(s, shift)| s.len() * *shift as usize)
        .collect();
    // lengths are already in milliseconds, so a 1 ms shift converts them
    println!("{}", SegmentStats::from_lengths(&millis, 1));
    Ok(true)
}
