pub mod bench;
pub mod decode;
pub mod eval;
pub mod gen;
pub mod oracle;
pub mod segment;

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use beamlattice::io::{read_grid, read_jsonl, ManifestEntry};
use beamlattice::{validate_grid, AnyScorer, LogFloat, ScorerSpec, Utterance};
use rayon::ThreadPoolBuilder;
use serde::Serialize;

/// Loads and validates every grid of a manifest, in manifest order.
pub fn load_manifest<S: LogFloat>(manifest: &Path) -> Result<Vec<Utterance<S>>> {
    let entries: Vec<ManifestEntry> =
        read_jsonl(manifest).with_context(|| format!("reading manifest {}", manifest.display()))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut utts = Vec::with_capacity(entries.len());
    for e in entries {
        let path = e.resolve(dir);
        let grid = read_grid::<S>(&path)
            .with_context(|| format!("utterance {}: {}", e.id, path.display()))?;
        if let Err(v) = validate_grid(&grid) {
            bail!("utterance {}: {}: {v}", e.id, path.display());
        }
        if e.frames == 0 || e.frames > grid.frames() {
            bail!(
                "utterance {}: manifest says {} frames, grid has {}",
                e.id,
                e.frames,
                grid.frames()
            );
        }
        let mut utt = Utterance::new(e.id, grid);
        utt.true_frames = e.frames;
        utts.push(utt);
    }
    if let Some(first) = utts.first() {
        let vocab = first.grid.vocab();
        if let Some(u) = utts.iter().find(|u| u.grid.vocab() != vocab) {
            bail!(
                "utterance {}: vocabulary {} differs from {}",
                u.id,
                u.grid.vocab(),
                vocab
            );
        }
    }
    Ok(utts)
}

pub fn build_scorer<S: LogFloat>(spec: &ScorerSpec, utts: &[Utterance<S>]) -> Result<AnyScorer> {
    let vocab = utts.first().map_or(2, |u| u.grid.vocab());
    spec.build(vocab)
        .with_context(|| format!("building scorer {spec:?}"))
}

/// Runs `f` on a pool of `jobs` threads (0 = one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

/// Writes JSON lines to `path`, or to stdout when absent.
pub fn emit_jsonl<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<()> {
    match path {
        Some(p) => beamlattice::io::write_jsonl_file(p, items)
            .with_context(|| format!("writing {}", p.display())),
        None => {
            let stdout = std::io::stdout();
            beamlattice::io::write_jsonl(stdout.lock(), items)?;
            Ok(())
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
