use std::collections::HashMap;

use anyhow::{bail, Result};
use beamlattice::io::{read_jsonl, ReferenceEntry};
use beamlattice::{DecodeResult, EvalReport};

use super::write_json;
use crate::args::EvalArgs;

pub fn run(a: &EvalArgs) -> Result<bool> {
    let hyps: Vec<DecodeResult> = read_jsonl(&a.hyp)?;
    let refs: Vec<ReferenceEntry> = read_jsonl(&a.reference)?;
    let by_id: HashMap<&str, &DecodeResult> = hyps.iter().map(|h| (h.id.as_str(), h)).collect();
    let mut pairs = Vec::with_capacity(refs.len());
    for r in &refs {
        let Some(h) = by_id.get(r.id.as_str()) else {
            bail!("no decoded output for reference {}", r.id);
        };
        pairs.push((r.id.as_str(), r.tokens.as_slice(), h.tokens.as_slice()));
    }
    let report = EvalReport::from_pairs(pairs)?;
    for u in &report.utterances {
        println!("{}\tdistance={}\tref_len={}", u.id, u.distance, u.ref_len);
    }
    println!(
        "CER={:.4} ({} / {})",
        report.cer, report.total_distance, report.total_ref_len
    );
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(true)
}
