use beamlattice::search::{top_b, UtteranceSearch};
use beamlattice::synth::{random_grid, random_table};
use beamlattice::verify::{exhaustive_best, exhaustive_config, exhaustive_template};
use beamlattice::*;
use proptest::prelude::*;

fn utt(seed: u64, frames: usize, size_c: usize) -> Utt {
    Utterance::new(format!("u{seed}"), random_grid(frames, size_c, 10, seed))
}

fn cfg_strategy() -> impl Strategy<Value = DecoderConfig> {
    (
        1usize..5,
        prop_oneof![Just(0.0), Just(0.3), Just(0.5), Just(1.0)],
        prop_oneof![
            Just(EosMode::Baseline),
            Just(EosMode::Ctc),
            Just(EosMode::Both)
        ],
        prop_oneof![Just(Margin::Unbounded), (0u32..8).prop_map(Margin::Frames)],
        prop_oneof![Just(Margin::Unbounded), (0u32..30).prop_map(Margin::Frames)],
    )
        .prop_map(
            |(beam_width, ctc_weight, eos_mode, margin_m1, margin_m2)| DecoderConfig {
                beam_width,
                ctc_weight,
                eos_mode,
                margin_m1,
                margin_m2,
                ..DecoderConfig::default()
            },
        )
}

/// Beam prefixes, finished set and counters of a search at one moment.
type Snapshot = (Vec<Vec<u32>>, FinishedSet<f64>, DecodeStats);

fn best_joint(u: &Utt, scorer: &TableScorer, cfg: &DecoderConfig) -> f64 {
    beam_search(u, scorer, cfg).unwrap().joint_logp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decode_results_are_well_formed(seed in 0u64..10_000, frames in 1usize..40, size_c in 1usize..6, cfg in cfg_strategy()) {
        let u = utt(seed, frames, size_c);
        let scorer = random_table(size_c, 2, seed);
        let r = beam_search(&u, &scorer, &cfg).unwrap();
        let eos = u.grid.tokens().eos_id();
        prop_assert!(r.tokens.iter().all(|&t| (t as usize) < size_c && t != eos));
        prop_assert_eq!(r.tokens.len(), r.label_times.len());
        prop_assert!(r.label_times.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.label_times.iter().all(|&t| (1..=frames as u32).contains(&t)));
        prop_assert!(r.steps_taken <= cfg.max_steps(frames));
        prop_assert!(r.joint_logp <= 1e-9);
    }

    #[test]
    fn work_is_bounded_by_steps_times_beam(seed in 0u64..10_000, lens in prop::collection::vec(1usize..50, 1..6), cfg in cfg_strategy()) {
        let utts: Vec<Utt> = lens.iter().enumerate().map(|(i, &f)| utt(seed + i as u64, f, 4)).collect();
        let scorer = random_table(4, 2, seed);
        let out = decode_all(&utts, &scorer, &cfg, utts.len()).unwrap();
        let steps: u64 = out.iter().map(|(_, s)| s.steps as u64).sum();
        let queries: u64 = out.iter().map(|(_, s)| s.scorer_queries).sum();
        let max_steps = out.iter().map(|(_, s)| s.steps as u64).max().unwrap();
        prop_assert!(queries <= steps * cfg.beam_width as u64);
        prop_assert!(queries <= max_steps * utts.len() as u64 * cfg.beam_width as u64);
    }

    #[test]
    fn batch_results_follow_permutation(seed in 0u64..10_000, lens in prop::collection::vec(1usize..40, 2..8), rot in 0usize..8) {
        let utts: Vec<Utt> = lens.iter().enumerate().map(|(i, &f)| utt(seed * 31 + i as u64, f, 3)).collect();
        let scorer = random_table(3, 2, seed);
        let cfg = DecoderConfig::default();
        let mut permuted = utts.clone();
        permuted.rotate_left(rot % utts.len());
        permuted.reverse();
        let a = decode_all(&utts, &scorer, &cfg, utts.len()).unwrap();
        let b = decode_all(&permuted, &scorer, &cfg, utts.len()).unwrap();
        for (u, (rb, _)) in permuted.iter().zip(&b) {
            let (ra, _) = a.iter().find(|(r, _)| r.id == u.id).unwrap();
            prop_assert_eq!(ra, rb);
        }
    }

    #[test]
    fn finished_searches_stay_frozen(seed in 0u64..10_000, lens in prop::collection::vec(1usize..30, 2..5)) {
        let utts: Vec<Utt> = lens.iter().enumerate().map(|(i, &f)| utt(seed + i as u64, f, 3)).collect();
        let scorer = random_table(3, 2, seed);
        let cfg = DecoderConfig::default();
        let mut searches: Vec<UtteranceSearch<'_, f64>> = utts.iter().map(|u| UtteranceSearch::new(u, &cfg).unwrap()).collect();
        let mut frozen: Vec<Option<Snapshot>> = vec![None; searches.len()];
        while searches.iter().any(|s| !s.is_done()) {
            for (s, snap) in searches.iter_mut().zip(frozen.iter_mut()) {
                let att = if s.is_done() {
                    vec![vec![0.0; 4]; 3]
                } else {
                    scorer.score_batch(&s.queries()).unwrap()
                };
                s.advance(att).unwrap();
                let now = (s.beam().iter().map(|h| h.tokens.clone()).collect::<Vec<_>>(), s.finished().clone(), s.stats());
                match snap {
                    Some(prev) => prop_assert!(*prev == now),
                    None if s.is_done() => *snap = Some(now),
                    None => {}
                }
            }
        }
    }

    #[test]
    fn top_b_ignores_a_common_shift(scores in prop::collection::vec(-50.0f64..0.0, 1..20), shift in -100.0f64..100.0, b in 1usize..8) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        prop_assert_eq!(top_b(&scores, b), top_b(&shifted, b));
    }

    #[test]
    fn ctc_only_search_finds_the_exact_argmax(seed in 0u64..10_000, frames in 1usize..5, size_c in 1usize..4) {
        let u = utt(seed, frames, size_c);
        let scorer = random_table(size_c, 2, seed);
        let template = DecoderConfig { ctc_weight: 1.0, ..exhaustive_template() };
        let cfg = exhaustive_config(&template, size_c, frames);
        let r = beam_search(&u, &scorer, &cfg).unwrap();
        let max_len = cfg.max_steps(frames) - 1;
        let (_, best) = exhaustive_best(&u.grid, &scorer, 1.0, max_len).unwrap();
        prop_assert!((r.joint_logp - best).abs() <= 1e-9);
    }
}

/// A wider beam can let extra children displace the path a narrower beam
/// followed, so the best score is not monotone in the beam width.
#[test]
fn wider_beam_can_score_worse() {
    let (seed, frames) = (11u64, 14usize);
    let u = utt(seed, frames, 3);
    let scorer = random_table(3, 2, seed);
    let at = |beam_width| {
        best_joint(
            &u,
            &scorer,
            &DecoderConfig {
                beam_width,
                ctc_weight: 1.0,
                ..exhaustive_template()
            },
        )
    };
    assert!(at(2) < at(1) - 1e-3, "B=1 {} B=2 {}", at(1), at(2));
}

#[test]
fn exhaustive_beam_dominates_every_narrower_beam() {
    let mut checked = 0;
    let mut violations = Vec::new();
    for seed in 0..200u64 {
        let frames = 1 + (seed as usize % 4);
        let size_c = 1 + (seed as usize % 3);
        let u = utt(seed, frames, size_c);
        let scorer = random_table(size_c, 2, seed);
        for lambda in [0.0, 0.3, 1.0] {
            let template = DecoderConfig {
                ctc_weight: lambda,
                ..exhaustive_template()
            };
            let top = best_joint(&u, &scorer, &exhaustive_config(&template, size_c, frames));
            for beam_width in 1..=6 {
                let got = best_joint(
                    &u,
                    &scorer,
                    &DecoderConfig {
                        beam_width,
                        ..template.clone()
                    },
                );
                checked += 1;
                if got > top + 1e-12 {
                    violations.push((seed, lambda, beam_width));
                }
            }
        }
    }
    assert!(checked > 0 && violations.is_empty(), "{violations:?}");
}

#[test]
#[ignore = "measures how often the best score drops as the beam widens"]
fn beam_nesting_rate() {
    let mut total = 0;
    let mut violations = 0;
    for seed in 0..200u64 {
        let frames = 3 + (seed as usize % 12);
        let u = utt(seed, frames, 3);
        let scorer = random_table(3, 2, seed);
        for lambda in [0.0, 0.3, 1.0] {
            let mut prev = f64::NEG_INFINITY;
            for beam_width in 1..=6 {
                let cfg = DecoderConfig {
                    beam_width,
                    ctc_weight: lambda,
                    ..exhaustive_template()
                };
                let got = best_joint(&u, &scorer, &cfg);
                total += 1;
                if got + 1e-12 < prev {
                    violations += 1;
                    println!("seed {seed} lambda {lambda} B={beam_width}: {got} < {prev}");
                }
                prev = got;
            }
        }
    }
    println!("{violations}/{total} widenings lowered the best score");
}
