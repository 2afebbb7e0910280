//! Equivalence of `judge` against an independently written brute-force
//! oracle over randomized distributions and filters.
//!
//! The oracle never goes near the scanning implementation: it filters
//! the entries down to nouns and takes the maximum by log-probability,
//! breaking ties exactly like the distribution's canonical order does.

use memprobe_core::backend::{TokenDistribution, TokenEntry, Truncation};
use memprobe_core::design::Pcg32;
use memprobe_core::scoring::{Judgment, JudgmentOutcome, NounFilter, judge};

/// Filter-then-argmax, written from scratch: keep noun entries, take the
/// largest logprob (first in canonical order on ties).
fn oracle_judge(
    trial_id: &str,
    dist: &TokenDistribution,
    target_token: &str,
    filter: &NounFilter,
) -> Judgment {
    let nouns: Vec<&TokenEntry> = dist
        .entries()
        .iter()
        .filter(|e| filter.contains(&e.text))
        .collect();
    let best = nouns
        .iter()
        .fold(None::<&TokenEntry>, |best, entry| match best {
            Some(current) if current.logprob >= entry.logprob => Some(current),
            _ => Some(entry),
        });
    let outcome = match best {
        Some(top) => JudgmentOutcome::Scored {
            correct: top.text == target_token,
            top_noun: top.text.clone(),
            target_prob: dist.find(target_token).map(|e| e.prob()),
            target_rank_among_nouns: nouns
                .iter()
                .position(|e| e.text == target_token)
                .map(|i| i as u32 + 1),
        },
        None => JudgmentOutcome::Errored {
            code: memprobe_core::scoring::JudgmentErrorCode::NounNotInTopK,
        },
    };
    Judgment {
        trial_id: trial_id.to_string(),
        target_token: target_token.to_string(),
        outcome,
    }
}

fn word(rng: &mut Pcg32) -> String {
    let len = rng.next_below(6) + 2;
    let mut out = String::from(" ");
    for _ in 0..len {
        let c = (b'a' + rng.next_below(26) as u8) as char;
        out.push(c);
    }
    out
}

/// Random distribution over a mix of noun-pool and junk tokens, plus the
/// filter covering the pool; also returns the chosen target token.
fn random_case(rng: &mut Pcg32) -> (TokenDistribution, NounFilter, String) {
    let pool_size = 4 + rng.next_below(20) as usize;
    let mut pool = Vec::new();
    while pool.len() < pool_size {
        let w = word(rng);
        if !pool.contains(&w) {
            pool.push(w);
        }
    }
    let filter_lines: String = pool.iter().map(|w| format!("{w}\n")).collect();
    let filter = NounFilter::from_token_lines(&filter_lines).unwrap();

    let entry_count = 1 + rng.next_below(30) as usize;
    let mut entries: Vec<TokenEntry> = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    while entries.len() < entry_count {
        // Half the tokens come from the noun pool, half are junk the
        // filter has never heard of.
        let text = if rng.next_below(2) == 0 {
            pool[rng.next_below(pool.len() as u32) as usize].clone()
        } else {
            word(rng)
        };
        if !used.insert(text.clone()) {
            continue;
        }
        // Occasional exact ties exercise the tie-break path.
        let logprob = if rng.next_below(4) == 0 && !entries.is_empty() {
            entries[0].logprob
        } else {
            -(rng.next_below(1_000_000) as f64) / 40_000.0
        };
        entries.push(TokenEntry { text, logprob });
    }
    let dist = TokenDistribution::new(entries, Truncation::TopK(entry_count)).unwrap();
    let target = pool[rng.next_below(pool.len() as u32) as usize].clone();
    (dist, filter, target)
}

#[test]
fn judge_matches_brute_force_oracle_on_1000_random_cases() {
    let mut rng = Pcg32::from_seed(0xBEEF);
    let mut error_cases = 0;
    for case in 0..1000 {
        let (dist, filter, target) = random_case(&mut rng);
        let fast = judge("case", &dist, &target, &filter);
        let slow = oracle_judge("case", &dist, &target, &filter);
        assert_eq!(fast, slow, "case {case} diverged on {dist:?}");
        if fast.error_code().is_some() {
            error_cases += 1;
        }
    }
    // The generator must actually produce both kinds of outcome.
    assert!(error_cases > 0, "no noun-not-in-top-k cases generated");
}

#[test]
fn judge_matches_oracle_in_unrestricted_mode() {
    let mut rng = Pcg32::from_seed(0xF00D);
    let filter = NounFilter::unrestricted();
    for _ in 0..200 {
        let (dist, _, target) = random_case(&mut rng);
        assert_eq!(
            judge("case", &dist, &target, &filter),
            oracle_judge("case", &dist, &target, &filter)
        );
    }
}
