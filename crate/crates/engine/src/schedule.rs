//! Picks the next prompt for a participant.
//!
//! The kind follows the configured agreement ratio, responses are chosen by
//! lowest assignment count so coverage stays balanced, and remaining ties are
//! broken by a keyed hash so the choice is deterministic but not biased
//! towards low response ids.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::cycle::{DialogueCycle, Prompt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub agree_ratio: f64,
    pub allow_self_votes: bool,
    pub seed: u64,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        SchedulePolicy {
            agree_ratio: 0.5,
            allow_self_votes: false,
            seed: 0,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn tie_key(base: u64, a: usize, b: usize) -> u64 {
    splitmix(base ^ splitmix(a as u64) ^ splitmix((b as u64).wrapping_add(0x5bd1_e995)))
}

/// Whether the participant's next prompt should be an agreement prompt when
/// both kinds are available.
fn wants_agreement(ratio: f64, agreements_so_far: usize, total_so_far: usize) -> bool {
    let target = (ratio * (total_so_far + 1) as f64).round() as usize;
    agreements_so_far < target
}

/// Next prompt for `participant`, or `None` once every eligible prompt has
/// been assigned to them.
pub fn choose_prompt(cycle: &DialogueCycle, participant: &str, policy: &SchedulePolicy) -> Option<Prompt> {
    let m = cycle.responses.len();
    let eligible: Vec<usize> = (0..m)
        .filter(|&j| policy.allow_self_votes || cycle.responses[j].participant != participant)
        .collect();

    let mut usage = vec![0usize; m];
    let mut assigned: HashSet<Prompt> = HashSet::new();
    let (mut agreements, mut total) = (0usize, 0usize);
    for exercise in &cycle.exercises {
        match exercise.prompt {
            Prompt::Agreement { response } => usage[response] += 1,
            Prompt::PairChoice { first, second } => {
                usage[first] += 1;
                usage[second] += 1;
            }
        }
        if exercise.participant == participant {
            total += 1;
            agreements += usize::from(exercise.prompt.is_agreement());
            // pairs are stored with first < second or swapped; normalise
            assigned.insert(match exercise.prompt {
                Prompt::PairChoice { first, second } => Prompt::PairChoice {
                    first: first.min(second),
                    second: first.max(second),
                },
                other => other,
            });
        }
    }

    let base = splitmix(policy.seed ^ splitmix(cycle.cycle_id) ^ fnv1a(participant) ^ splitmix(total as u64));

    let agreement = || {
        eligible
            .iter()
            .copied()
            .filter(|&j| !assigned.contains(&Prompt::Agreement { response: j }))
            .min_by_key(|&j| (usage[j], tie_key(base, j, usize::MAX)))
            .map(|response| Prompt::Agreement { response })
    };
    let pair = || {
        let mut best: Option<((usize, usize, u64), (usize, usize))> = None;
        for (x, &a) in eligible.iter().enumerate() {
            for &b in &eligible[x + 1..] {
                if assigned.contains(&Prompt::PairChoice { first: a, second: b }) {
                    continue;
                }
                let key = (usage[a] + usage[b], usage[a].max(usage[b]), tie_key(base, a, b));
                if best.is_none_or(|(k, _)| key < k) {
                    best = Some((key, (a, b)));
                }
            }
        }
        best.map(|((_, _, h), (a, b))| {
            if h & 1 == 0 {
                Prompt::PairChoice { first: a, second: b }
            } else {
                Prompt::PairChoice { first: b, second: a }
            }
        })
    };

    if wants_agreement(policy.agree_ratio, agreements, total) {
        agreement().or_else(pair)
    } else {
        pair().or_else(agreement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{Exercise, Response};
    use chrono::Utc;

    fn cycle_with(owners: &[&str]) -> DialogueCycle {
        let mut cycle = DialogueCycle::new(1, "q".into(), Utc::now());
        for (j, owner) in owners.iter().enumerate() {
            cycle.responses.push(Response {
                response_id: j,
                participant: owner.to_string(),
                text: format!("r{j}"),
            });
        }
        cycle
    }

    fn assign(cycle: &mut DialogueCycle, who: &str, policy: &SchedulePolicy) -> Option<Prompt> {
        let prompt = choose_prompt(cycle, who, policy)?;
        cycle.exercises.push(Exercise {
            exercise_id: cycle.exercises.len(),
            participant: who.into(),
            prompt,
            answer: None,
        });
        Some(prompt)
    }

    #[test]
    fn half_ratio_alternates_kinds() {
        let mut cycle = cycle_with(&["a", "b", "c", "d", "e", "f", "g"]);
        let policy = SchedulePolicy::default();
        let prompts: Vec<Prompt> = (0..10).map(|_| assign(&mut cycle, "z", &policy).unwrap()).collect();
        assert_eq!(prompts.iter().filter(|p| p.is_agreement()).count(), 5);
        let distinct: HashSet<_> = prompts.iter().collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn own_response_is_never_offered() {
        let cycle = cycle_with(&["a"]);
        assert_eq!(choose_prompt(&cycle, "a", &SchedulePolicy::default()), None);
        let policy = SchedulePolicy {
            allow_self_votes: true,
            ..SchedulePolicy::default()
        };
        assert_eq!(
            choose_prompt(&cycle, "a", &policy),
            Some(Prompt::Agreement { response: 0 })
        );
    }

    #[test]
    fn exhausts_after_every_prompt() {
        // three foreign responses: 3 agreement prompts and 3 pairs
        let mut cycle = cycle_with(&["a", "b", "c", "z"]);
        let policy = SchedulePolicy::default();
        let mut n = 0;
        while assign(&mut cycle, "z", &policy).is_some() {
            n += 1;
        }
        assert_eq!(n, 6);
        assert!(cycle
            .exercises
            .iter()
            .all(|e| !matches!(e.prompt, Prompt::Agreement { response: 3 })));
    }

    #[test]
    fn coverage_stays_balanced() {
        let owners: Vec<String> = (0..12).map(|i| format!("p{i}")).collect();
        let refs: Vec<&str> = owners.iter().map(String::as_str).collect();
        let mut cycle = cycle_with(&refs);
        let policy = SchedulePolicy::default();
        for round in 0..6 {
            for who in &refs {
                assert!(assign(&mut cycle, who, &policy).is_some(), "round {round}");
            }
        }
        let mut usage = vec![0usize; 12];
        for e in &cycle.exercises {
            match e.prompt {
                Prompt::Agreement { response } => usage[response] += 1,
                Prompt::PairChoice { first, second } => {
                    usage[first] += 1;
                    usage[second] += 1;
                }
            }
        }
        let (lo, hi) = (usage.iter().min().unwrap(), usage.iter().max().unwrap());
        assert!(hi - lo <= 2, "usage {usage:?}");
    }

    #[test]
    fn deterministic_given_state() {
        let cycle = cycle_with(&["a", "b", "c", "d"]);
        let policy = SchedulePolicy {
            seed: 9,
            ..SchedulePolicy::default()
        };
        assert_eq!(choose_prompt(&cycle, "x", &policy), choose_prompt(&cycle, "x", &policy));
    }
}
