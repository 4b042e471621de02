use anyhow::{bail, Result};
use beamlattice::bench::measure;
use beamlattice::LogFloat;
use log::info;

use super::{build_scorer, emit_jsonl, load_manifest, with_jobs, write_json};
use crate::args::{DecodeArgs, Precision};

pub fn run(a: &DecodeArgs) -> Result<bool> {
    match a.decoder.precision {
        Precision::F64 => run_as::<f64>(a),
        Precision::F32 => run_as::<f32>(a),
    }
}

fn run_as<S: LogFloat>(a: &DecodeArgs) -> Result<bool> {
    if a.batch_size == 0 {
        bail!("--batch-size must be at least 1");
    }
    let cfg = a.decoder.config();
    cfg.validate()?;
    let utts = load_manifest::<S>(&a.manifest)?;
    if utts.is_empty() {
        emit_jsonl::<beamlattice::DecodeResult>(a.out.as_deref(), &[])?;
        return Ok(true);
    }
    let scorer = build_scorer(&a.decoder.scorer, &utts)?;
    let (report, results) = with_jobs(a.jobs, || measure(&utts, &scorer, &cfg, a.batch_size, 1))??;
    emit_jsonl(a.out.as_deref(), &results)?;
    info!(
        "decoded {} utterances: wall={:.3}s xrt={:.3e} steps={} scorer_queries={} ctc_frames={}",
        report.utterances,
        report.wall_seconds,
        report.xrt,
        report.steps,
        report.scorer_queries,
        report.ctc_frames_evaluated
    );
    eprintln!(
        "utterances={} wall_s={:.4} xrt={:.3e} steps={} scorer_queries={} ctc_frames_evaluated={}",
        report.utterances,
        report.wall_seconds,
        report.xrt,
        report.steps,
        report.scorer_queries,
        report.ctc_frames_evaluated
    );
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    Ok(true)
}
