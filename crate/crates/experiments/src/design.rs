//! Votes, holdouts and training subsets for one replicate.
//!
//! Each replicate shares the sweep spec's population and draws its own schedule,
//! votes and splits from a seed derived from the population seed and the
//! replicate index.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlsdp_core::simulator::{
    generate_population, ground_truth_agreement, round_robin_owners, schedule_for_grid, simulate_votes,
};
use rlsdp_core::{Dataset, ExerciseEvent, ScheduleConfig, SyntheticPopulation};

use crate::error::Result;
use crate::spec::SweepSpec;

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of replicate `index` under population seed `base`.
pub fn replicate_seed(base: u64, index: usize) -> u64 {
    splitmix(base ^ splitmix(index as u64 + 1))
}

/// The sweep spec's population with its ground truth.
pub struct World {
    pub population: SyntheticPopulation<f64>,
    pub truth: Vec<f64>,
    pub owners: Vec<usize>,
}

impl World {
    pub fn new(spec: &SweepSpec) -> Result<Self> {
        let population = generate_population::<f64>(&spec.population)?;
        let truth = ground_truth_agreement(&population);
        let owners = round_robin_owners(spec.population.n, spec.population.m);
        Ok(World {
            population,
            truth,
            owners,
        })
    }

    fn votes(&self, schedule: &ScheduleConfig, seed: u64) -> Result<Dataset> {
        let n = self.population.n_participants();
        let plan = schedule_for_grid(n, self.population.n_responses(), &self.owners, schedule)?;
        Ok(simulate_votes(&self.population, &plan, seed)?)
    }
}

fn by_participant(data: &Dataset) -> Vec<Vec<ExerciseEvent>> {
    let mut out = vec![Vec::new(); data.n_participants()];
    for event in data.events() {
        out[event.participant()].push(*event);
    }
    out
}

/// Splits each participant's agreement events into a holdout of `take(count)`
/// events and a shuffled training pool of everything else.
fn stratified_split(
    data: &Dataset,
    rng: &mut ChaCha8Rng,
    take: impl Fn(usize) -> usize,
) -> Result<(Dataset, Vec<Vec<ExerciseEvent>>)> {
    let mut holdout = Vec::new();
    let mut pools = Vec::with_capacity(data.n_participants());
    for events in by_participant(data) {
        let (mut agreements, pairs): (Vec<_>, Vec<_>) = events.into_iter().partition(|e| e.is_agreement());
        agreements.shuffle(rng);
        let k = take(agreements.len()).min(agreements.len());
        holdout.extend_from_slice(&agreements[..k]);
        let mut pool: Vec<_> = agreements[k..].iter().copied().chain(pairs).collect();
        pool.shuffle(rng);
        pools.push(pool);
    }
    Ok((Dataset::new(data.n_participants(), data.n_responses(), holdout)?, pools))
}

/// One replicate of the data-per-participant sweep.
pub struct DppDesign {
    pub replicate: usize,
    pub seed: u64,
    pub holdout: Dataset,
    /// Each participant's training pool in the order subsets are taken.
    pools: Vec<Vec<ExerciseEvent>>,
    n_responses: usize,
}

impl DppDesign {
    pub fn new(world: &World, spec: &SweepSpec, replicate: usize) -> Result<Self> {
        let seed = replicate_seed(spec.population.seed, replicate);
        let schedule = ScheduleConfig {
            exercises_per_participant: spec.exercises_per_participant,
            agree_ratio: spec.agree_ratio,
            allow_self_votes: false,
            seed,
        };
        let votes = world.votes(&schedule, seed.wrapping_add(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let fraction = spec.holdout_fraction;
        let (holdout, pools) = stratified_split(&votes, &mut rng, |a| (fraction * a as f64).round() as usize)?;
        Ok(DppDesign {
            replicate,
            seed,
            holdout,
            pools,
            n_responses: votes.n_responses(),
        })
    }

    /// The first `round(fraction · pool)` events of every participant's pool.
    /// Subsets are nested: a larger fraction only adds events.
    pub fn training(&self, fraction: f64) -> Result<Dataset> {
        let events = self
            .pools
            .iter()
            .flat_map(|pool| {
                let k = (fraction * pool.len() as f64).round() as usize;
                pool[..k.min(pool.len())].iter().copied()
            })
            .collect();
        Ok(Dataset::new(self.pools.len(), self.n_responses, events)?)
    }

    pub fn pool_sizes(&self) -> Vec<usize> {
        self.pools.iter().map(Vec::len).collect()
    }
}

/// One replicate at one agreement ratio of the mixture sweep: every
/// participant trains on the same number of exercises whatever the ratio,
/// and is scored on a fixed number of extra agreement exercises.
pub struct MixtureDesign {
    pub replicate: usize,
    pub seed: u64,
    pub agree_ratio: f64,
    pub train: Dataset,
    pub holdout: Dataset,
}

impl MixtureDesign {
    pub fn new(world: &World, spec: &SweepSpec, replicate: usize, agree_ratio: f64) -> Result<Self> {
        let seed = replicate_seed(spec.population.seed, replicate);
        let budget = spec.mixture_exercises_per_participant;
        let held = spec.mixture_holdout_per_participant;
        let agreements = (agree_ratio * budget as f64).round() as usize + held;
        let schedule = ScheduleConfig {
            exercises_per_participant: budget + held,
            agree_ratio: agreements as f64 / (budget + held) as f64,
            allow_self_votes: false,
            // the ratio changes the schedule, so no seed is shared across ratios
            seed: splitmix(seed ^ agree_ratio.to_bits()),
        };
        let votes = world.votes(&schedule, schedule.seed.wrapping_add(1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed.wrapping_add(2));
        let (holdout, pools) = stratified_split(&votes, &mut rng, |_| held)?;
        let train = Dataset::new(votes.n_participants(), votes.n_responses(), pools.concat())?;
        Ok(MixtureDesign {
            replicate,
            seed,
            agree_ratio,
            train,
            holdout,
        })
    }

    /// Training agreement exercises per participant.
    pub fn training_agreements(&self) -> f64 {
        self.train.events().iter().filter(|e| e.is_agreement()).count() as f64 / self.train.n_participants() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rlsdp_core::PopulationSpec;

    fn spec() -> SweepSpec {
        SweepSpec {
            population: PopulationSpec {
                n: 30,
                m: 40,
                seed: 7,
                ..PopulationSpec::default()
            },
            ..SweepSpec::default()
        }
    }

    #[test]
    fn holdout_is_a_fifth_of_each_participants_agreements() {
        let spec = spec();
        let world = World::new(&spec).unwrap();
        let design = DppDesign::new(&world, &spec, 0).unwrap();
        // 27 exercises at ratio one half: 14 agreements, 3 held out, 24 left
        assert!(
            design.pool_sizes().iter().all(|&s| s == 24),
            "{:?}",
            design.pool_sizes()
        );
        assert_eq!(design.holdout.len(), 30 * 3);
        assert!(design.holdout.events().iter().all(ExerciseEvent::is_agreement));
        let per: Vec<usize> = (0..30)
            .map(|i| design.holdout.events().iter().filter(|e| e.participant() == i).count())
            .collect();
        assert!(per.iter().all(|&c| c == 3));
    }

    #[test]
    fn training_subsets_are_nested_and_hit_the_budget() {
        let spec = spec();
        let world = World::new(&spec).unwrap();
        let design = DppDesign::new(&world, &spec, 1).unwrap();
        let small = design.training(5.0 / 24.0).unwrap();
        let large = design.training(15.0 / 24.0).unwrap();
        assert_eq!(small.len(), 30 * 5);
        assert_eq!(large.len(), 30 * 15);
        for event in small.events() {
            assert!(large.events().contains(event));
        }
        let held: std::collections::HashSet<(usize, usize)> = design
            .holdout
            .events()
            .iter()
            .filter_map(|e| match *e {
                ExerciseEvent::Agreement {
                    participant, response, ..
                } => Some((participant, response)),
                _ => None,
            })
            .collect();
        let full = design.training(1.0 - 1e-12).unwrap();
        for event in full.events() {
            if let ExerciseEvent::Agreement {
                participant, response, ..
            } = *event
            {
                assert!(!held.contains(&(participant, response)));
            }
        }
    }

    #[test]
    fn replicates_differ_and_repeat() {
        let spec = spec();
        let world = World::new(&spec).unwrap();
        let a = DppDesign::new(&world, &spec, 0).unwrap();
        let b = DppDesign::new(&world, &spec, 1).unwrap();
        let again = DppDesign::new(&world, &spec, 0).unwrap();
        assert_ne!(a.seed, b.seed);
        assert_eq!(a.holdout, again.holdout);
        assert_eq!(a.training(0.5).unwrap(), again.training(0.5).unwrap());
        assert_ne!(a.holdout, b.holdout);
    }

    #[test]
    fn mixture_budget_is_constant_across_ratios() {
        let spec = spec();
        let world = World::new(&spec).unwrap();
        for ratio in [0.0, 0.05, 0.5, 0.95, 1.0] {
            let design = MixtureDesign::new(&world, &spec, 0, ratio).unwrap();
            assert_eq!(design.train.len(), 30 * 15, "ratio {ratio}");
            assert_eq!(design.holdout.len(), 30 * 4);
            let expected = (ratio * 15.0_f64).round();
            assert_eq!(design.training_agreements(), expected, "ratio {ratio}");
        }
    }
}
