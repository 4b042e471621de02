use std::fs;

use anyhow::{bail, Context, Result};
use beamlattice::io::{write_grid, write_jsonl_file, ManifestEntry, ReferenceEntry};
use beamlattice::segment::{NodeMap, VadOutputs};
use beamlattice::synth::{
    blank_heavy_grid, planted_grid, random_grid, random_table, rng, PlantedParams,
};
use beamlattice::PosteriorGrid;
use log::info;
use rand::Rng;

use crate::args::{GenArgs, Style};

pub fn run(a: &GenArgs) -> Result<bool> {
    if a.num_utts == 0 || a.vocab == 0 || a.min_frames == 0 || a.min_frames > a.max_frames {
        bail!("need --num-utts >= 1, --vocab >= 1 and 1 <= --min-frames <= --max-frames");
    }
    let grids_dir = a.out.join("grids");
    fs::create_dir_all(&grids_dir).with_context(|| format!("creating {}", grids_dir.display()))?;
    let vad_dir = a.out.join("vad");
    if a.style == Style::BlankHeavy {
        fs::create_dir_all(&vad_dir).with_context(|| format!("creating {}", vad_dir.display()))?;
    }
    let params = PlantedParams {
        silence_floor: a.silence_floor,
        ..PlantedParams::default()
    };

    let mut lengths = rng(a.seed);
    let mut manifest = Vec::with_capacity(a.num_utts);
    let mut references = Vec::new();
    for i in 0..a.num_utts {
        let id = format!("utt{i:04}");
        let frames = lengths.gen_range(a.min_frames..=a.max_frames);
        let seed = a.seed.wrapping_mul(7919).wrapping_add(i as u64 + 1);
        let grid: PosteriorGrid<f64> = match a.style {
            Style::Random => random_grid(frames, a.vocab, a.frame_shift_ms, seed),
            Style::Planted => {
                let p = planted_grid(frames, a.vocab, a.frame_shift_ms, seed, &params);
                references.push(ReferenceEntry {
                    id: id.clone(),
                    tokens: p.tokens,
                });
                p.grid
            }
            Style::BlankHeavy => {
                let silences = if a.silences.is_empty() {
                    vec![(frames * 2 / 5, frames * 3 / 5)]
                } else {
                    a.silences.clone()
                };
                let p =
                    blank_heavy_grid(frames, a.vocab, a.frame_shift_ms, seed, &params, &silences);
                references.push(ReferenceEntry {
                    id: id.clone(),
                    tokens: p.tokens,
                });
                VadOutputs::from_grid(&p.grid).write(&vad_dir.join(format!("{id}.vadg")))?;
                p.grid
            }
        };
        let rel = format!("grids/{id}.ctcg");
        write_grid(&a.out.join(&rel), &grid)?;
        manifest.push(ManifestEntry {
            id,
            grid: rel.into(),
            frames,
        });
    }
    write_jsonl_file(&a.out.join("manifest.jsonl"), &manifest)?;
    if !references.is_empty() {
        write_jsonl_file(&a.out.join("references.jsonl"), &references)?;
    }
    if a.style == Style::BlankHeavy {
        let map = NodeMap::for_ctc_vocab(a.vocab + 1);
        fs::write(a.out.join("nodemap.json"), serde_json::to_string(&map)?)?;
    }
    if let Some(order) = a.table_order {
        if order == 0 {
            bail!("--table-order must be at least 1");
        }
        let table = random_table(a.vocab, order, a.seed);
        fs::write(a.out.join("table.json"), table.to_json())?;
    }
    info!("wrote {} utterances to {}", a.num_utts, a.out.display());
    Ok(true)
}
