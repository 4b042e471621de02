use anyhow::{bail, Result};
use beamlattice::bench::{measure, BenchReport};
use beamlattice::{DecoderConfig, LogFloat};

use super::{build_scorer, emit_jsonl, load_manifest, with_jobs};
use crate::args::{BenchArgs, Precision};

pub fn run(a: &BenchArgs) -> Result<bool> {
    match a.decoder.precision {
        Precision::F64 => run_as::<f64>(a),
        Precision::F32 => run_as::<f32>(a),
    }
}

fn run_as<S: LogFloat>(a: &BenchArgs) -> Result<bool> {
    if a.batch_sizes.is_empty() || a.batch_sizes.contains(&0) {
        bail!("--batch-sizes must list sizes of at least 1");
    }
    let utts = load_manifest::<S>(&a.manifest)?;
    if utts.is_empty() {
        bail!("manifest {} is empty", a.manifest.display());
    }
    let scorer = build_scorer(&a.decoder.scorer, &utts)?;
    let base = a.decoder.config();
    base.validate()?;

    println!(
        "batch_size\tm1\tm2\teos_mode\twall_s\txrt\tsteps\tscorer_queries\tctc_frames_evaluated"
    );
    let mut reports: Vec<BenchReport> = Vec::new();
    for &eos_mode in &a.eos_modes {
        for &m2 in &a.m2_sweep {
            for &batch_size in &a.batch_sizes {
                let cfg = DecoderConfig {
                    margin_m2: m2,
                    eos_mode,
                    ..base.clone()
                };
                let (r, _) = with_jobs(a.jobs, || {
                    measure(&utts, &scorer, &cfg, batch_size, a.repeat)
                })??;
                println!(
                    "{}\t{}\t{}\t{}\t{:.4}\t{:.3e}\t{}\t{}\t{}",
                    r.batch_size,
                    r.m1,
                    r.m2,
                    r.eos_mode,
                    r.wall_seconds,
                    r.xrt,
                    r.steps,
                    r.scorer_queries,
                    r.ctc_frames_evaluated
                );
                reports.push(r);
            }
        }
    }

    for r in &reports {
        if r.batch_size == 1 {
            continue;
        }
        if let Some(b1) = reports
            .iter()
            .find(|b| b.batch_size == 1 && b.m2 == r.m2 && b.eos_mode == r.eos_mode)
        {
            println!(
                "speedup batch={} vs 1 (m2={} eos={}): {:.2}x",
                r.batch_size,
                r.m2,
                r.eos_mode,
                b1.wall_seconds / r.wall_seconds
            );
        }
    }
    for r in &reports {
        if r.m2 == "inf" {
            continue;
        }
        if let Some(full) = reports
            .iter()
            .find(|b| b.m2 == "inf" && b.batch_size == r.batch_size && b.eos_mode == r.eos_mode)
        {
            println!(
                "ctc_frames ratio m2={} vs inf (batch={} eos={}): {:.3}",
                r.m2,
                r.batch_size,
                r.eos_mode,
                r.ctc_frames_evaluated as f64 / full.ctc_frames_evaluated as f64
            );
        }
    }
    if a.out.is_some() {
        emit_jsonl(a.out.as_deref(), &reports)?;
    }
    Ok(true)
}
