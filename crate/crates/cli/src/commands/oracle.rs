use anyhow::Result;
use beamlattice::verify::{exhaustive_template, run_all, OracleOptions};
use log::warn;

use crate::args::OracleArgs;

pub fn run(a: &OracleArgs) -> Result<bool> {
    let opts = OracleOptions {
        max_frames: a.max_frames,
        max_vocab: a.max_vocab,
        trials: a.trials,
        seed: a.seed,
        mutate: a.mutate,
    };
    if a.trials == 0 {
        warn!("--trials 0: no instances checked, suites pass vacuously");
        eprintln!("warning: --trials 0 checks nothing; passing vacuously");
    }
    let mut all_passed = true;
    for suite in run_all(&opts, &exhaustive_template())? {
        match &suite.failure {
            None => println!(
                "{}: pass ({} trials, {} checks, max deviation {:.3e})",
                suite.name, suite.trials, suite.checks, suite.max_error
            ),
            Some(ce) => {
                all_passed = false;
                println!("{}: FAIL seed={} {}", suite.name, ce.seed, ce.detail);
            }
        }
    }
    Ok(all_passed)
}
