//! Synthetic populations with known utilities, exercise scheduling, and vote
//! simulation from the model's own likelihood.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aggregation::population_agreement;
use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset, ExerciseEvent, UtilityState};
use crate::scalar::Real;

/// Parameters of a synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    /// Root-mean-square magnitude of the utility entries, in logits.
    pub logit_scale: f64,
    /// Standard deviation of the true participant biases.
    pub bias_std: f64,
    pub seed: u64,
}

impl Default for PopulationSpec {
    /// 110 participants and 136 responses, rank 3, entry scale 2.
    fn default() -> Self {
        PopulationSpec {
            n: 110,
            m: 136,
            rank: 3,
            logit_scale: 2.0,
            bias_std: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation<T: Real> {
    pub m_true: DMatrix<T>,
    pub b_true: DVector<T>,
    pub spec: PopulationSpec,
}

/// Draws a rank-`rank` utility matrix `U·V` with standard normal factors,
/// rescaled so its entries have root-mean-square `logit_scale`, and biases
/// from `N(0, bias_std²)`.
pub fn generate_population<T: Real>(spec: &PopulationSpec) -> Result<SyntheticPopulation<T>> {
    let max = spec.n.min(spec.m);
    if spec.rank > max {
        return Err(Error::RankTooLarge { rank: spec.rank, max });
    }
    if !(spec.logit_scale >= 0.0 && spec.bias_std >= 0.0) {
        return Err(Error::InvalidConfig(
            "logit_scale and bias_std must be non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let u = DMatrix::<f64>::from_fn(spec.n, spec.rank, |_, _| normal());
    let v = DMatrix::<f64>::from_fn(spec.rank, spec.m, |_, _| normal());
    let mut m = &u * &v;
    let rms = if m.is_empty() {
        0.0
    } else {
        (m.norm_squared() / m.len() as f64).sqrt()
    };
    if rms > 0.0 {
        m *= spec.logit_scale / rms;
    } else {
        m.fill(0.0);
    }
    let b = DVector::<f64>::from_fn(spec.n, |_, _| spec.bias_std * normal());
    Ok(SyntheticPopulation {
        m_true: m.map(T::lit),
        b_true: b.map(T::lit),
        spec: spec.clone(),
    })
}

impl<T: Real> SyntheticPopulation<T> {
    pub fn n_participants(&self) -> usize {
        self.m_true.nrows()
    }

    pub fn n_responses(&self) -> usize {
        self.m_true.ncols()
    }

    pub fn true_state(&self) -> UtilityState<T> {
        UtilityState {
            m: self.m_true.clone(),
            b: self.b_true.clone(),
        }
    }

    /// Writes `manifest.json`, `m_true.csv` and `b_true.csv`.
    pub fn export_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("manifest.json"))?), &self.spec)?;
        let state = self.true_state();
        state.write_m_csv(BufWriter::new(File::create(dir.join("m_true.csv"))?))?;
        state.write_b_csv(BufWriter::new(File::create(dir.join("b_true.csv"))?))?;
        Ok(())
    }

    pub fn import_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: PopulationSpec = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        let state = UtilityState::read_csv(File::open(dir.join("m_true.csv"))?, File::open(dir.join("b_true.csv"))?)?;
        Ok(SyntheticPopulation {
            m_true: state.m,
            b_true: state.b,
            spec,
        })
    }
}

/// Population agreement of the true utilities (biases excluded, as in the
/// estimator it is compared against).
pub fn ground_truth_agreement<T: Real>(pop: &SyntheticPopulation<T>) -> Vec<T> {
    population_agreement(&pop.true_state())
}

/// How votes are requested from each participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub exercises_per_participant: usize,
    /// Fraction of each participant's exercises that are agreement prompts.
    pub agree_ratio: f64,
    pub allow_self_votes: bool,
    pub seed: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            exercises_per_participant: 15,
            agree_ratio: 0.5,
            allow_self_votes: false,
            seed: 0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.agree_ratio) {
            return Err(Error::InvalidConfig(format!(
                "agree_ratio must lie in [0, 1], got {}",
                self.agree_ratio
            )));
        }
        Ok(())
    }

    /// Agreement prompts per participant: `round(agree_ratio · count)`.
    pub fn agreement_count(&self) -> usize {
        (self.agree_ratio * self.exercises_per_participant as f64).round() as usize
    }
}

/// A prompt handed to a participant, before it is answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assignment {
    Agreement {
        participant: usize,
        response: usize,
    },
    PairChoice {
        participant: usize,
        first: usize,
        second: usize,
    },
}

impl Assignment {
    pub fn participant(&self) -> usize {
        match *self {
            Assignment::Agreement { participant, .. } | Assignment::PairChoice { participant, .. } => participant,
        }
    }

    pub fn responses(&self) -> (usize, Option<usize>) {
        match *self {
            Assignment::Agreement { response, .. } => (response, None),
            Assignment::PairChoice { first, second, .. } => (first, Some(second)),
        }
    }
}

/// Owner of response `j` is participant `j mod n`.
pub fn round_robin_owners(n_participants: usize, n_responses: usize) -> Vec<usize> {
    (0..n_responses).map(|j| j % n_participants.max(1)).collect()
}

/// Schedules exercises for every participant of `pop`; see
/// [`schedule_for_grid`].
pub fn schedule_exercises<T: Real>(
    pop: &SyntheticPopulation<T>,
    response_owner: &[usize],
    cfg: &ScheduleConfig,
) -> Result<Vec<Assignment>> {
    schedule_for_grid(pop.n_participants(), pop.n_responses(), response_owner, cfg)
}

/// Gives each participant `exercises_per_participant` prompts, of which
/// `round(agree_ratio · count)` are agreement prompts on distinct responses
/// and the rest pair choices on distinct unordered pairs. Responses are drawn
/// least-used first so coverage stays balanced; ties break at random.
pub fn schedule_for_grid(
    n_participants: usize,
    n_responses: usize,
    response_owner: &[usize],
    cfg: &ScheduleConfig,
) -> Result<Vec<Assignment>> {
    cfg.validate()?;
    if response_owner.len() != n_responses {
        return Err(Error::LengthMismatch {
            left: response_owner.len(),
            right: n_responses,
        });
    }
    let n_agree = cfg.agreement_count();
    let n_pair = cfg.exercises_per_participant - n_agree;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut usage = vec![0usize; n_responses];
    let mut per_participant: Vec<Vec<Assignment>> = vec![Vec::new(); n_participants];

    let mut order: Vec<usize> = (0..n_participants).collect();
    order.shuffle(&mut rng);
    for participant in order {
        let eligible: Vec<usize> = (0..n_responses)
            .filter(|&j| cfg.allow_self_votes || response_owner[j] != participant)
            .collect();
        let max_pairs = eligible.len() * eligible.len().saturating_sub(1) / 2;
        if eligible.len() < n_agree || (n_pair > 0 && eligible.len() < 2) || n_pair > max_pairs {
            return Err(Error::InfeasibleSchedule(format!(
                "participant {participant} has {} eligible responses for {n_agree} agreement and {n_pair} pair prompts",
                eligible.len()
            )));
        }
        let out = &mut per_participant[participant];

        let mut ranked = rank_by_usage(&eligible, &usage, &mut rng);
        for &j in ranked.iter().take(n_agree) {
            usage[j] += 1;
            out.push(Assignment::Agreement {
                participant,
                response: j,
            });
        }

        let mut used_pairs: HashSet<(usize, usize)> = HashSet::new();
        for _ in 0..n_pair {
            ranked = rank_by_usage(&eligible, &usage, &mut rng);
            let (a, b) = first_unused_pair(&ranked, &used_pairs).expect("pair count checked against eligibility");
            used_pairs.insert((a.min(b), a.max(b)));
            usage[a] += 1;
            usage[b] += 1;
            out.push(Assignment::PairChoice {
                participant,
                first: a,
                second: b,
            });
        }
    }
    Ok(per_participant.into_iter().flatten().collect())
}

fn rank_by_usage(eligible: &[usize], usage: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut keyed: Vec<(usize, u64, usize)> = eligible.iter().map(|&j| (usage[j], rng.random(), j)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, _, j)| j).collect()
}

fn first_unused_pair(ranked: &[usize], used: &HashSet<(usize, usize)>) -> Option<(usize, usize)> {
    // Pairs are tried in order of combined rank, so the least-used responses
    // go first.
    let len = ranked.len();
    for total in 1..(2 * len).saturating_sub(2) {
        for p in 0..=total / 2 {
            let q = total - p;
            if q <= p || q >= len {
                continue;
            }
            let (a, b) = (ranked[p], ranked[q]);
            if !used.contains(&(a.min(b), a.max(b))) {
                return Some((a, b));
            }
        }
    }
    None
}

/// Samples a vote for every assignment from the population's true utilities.
pub fn simulate_votes<T: Real>(pop: &SyntheticPopulation<T>, assignments: &[Assignment], seed: u64) -> Result<Dataset> {
    let (n, m) = (pop.n_participants(), pop.n_responses());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(assignments.len());
    for (index, assignment) in assignments.iter().enumerate() {
        let invalid = |reason: String| Error::InvalidAssignment { index, reason };
        let u: f64 = rng.random();
        let event = match *assignment {
            Assignment::Agreement { participant, response } => {
                if participant >= n || response >= m {
                    return Err(invalid(format!("({participant}, {response}) outside {n}x{m}")));
                }
                let p = sigmoid(pop.m_true[(participant, response)] + pop.b_true[participant]).to_f64_lossy();
                ExerciseEvent::agreement(participant, response, u < p)
            }
            Assignment::PairChoice {
                participant,
                first,
                second,
            } => {
                if participant >= n || first >= m || second >= m {
                    return Err(invalid(format!("({participant}, {first}, {second}) outside {n}x{m}")));
                }
                if first == second {
                    return Err(invalid("pair of identical responses".into()));
                }
                let p = sigmoid(pop.m_true[(participant, first)] - pop.m_true[(participant, second)]).to_f64_lossy();
                if u < p {
                    ExerciseEvent::pair_choice(participant, first, second)
                } else {
                    ExerciseEvent::pair_choice(participant, second, first)
                }
            }
        };
        events.push(event);
    }
    Dataset::new(n, m, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::singular_values;

    fn spec(n: usize, m: usize, rank: usize) -> PopulationSpec {
        PopulationSpec {
            n,
            m,
            rank,
            seed: 3,
            ..PopulationSpec::default()
        }
    }

    #[test]
    fn rank_one_population() {
        let pop = generate_population::<f64>(&spec(4, 4, 1)).unwrap();
        let mut sv: Vec<f64> = singular_values(&pop.m_true).unwrap().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sv[1] < 1e-9 * sv[0]);
        let rms = (pop.m_true.norm_squared() / 16.0).sqrt();
        assert!((rms - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_and_rank_errors() {
        let pop = generate_population::<f64>(&PopulationSpec {
            logit_scale: 0.0,
            ..spec(5, 3, 2)
        })
        .unwrap();
        assert!(pop.m_true.iter().all(|&x| x == 0.0));
        assert!(ground_truth_agreement(&pop).iter().all(|&q| q == 0.5));
        assert!(matches!(
            generate_population::<f64>(&spec(5, 3, 4)),
            Err(Error::RankTooLarge { rank: 4, max: 3 })
        ));
    }

    #[test]
    fn population_is_deterministic() {
        let a = generate_population::<f64>(&spec(6, 5, 2)).unwrap();
        let b = generate_population::<f64>(&spec(6, 5, 2)).unwrap();
        assert_eq!(a, b);
        let c = generate_population::<f64>(&PopulationSpec {
            seed: 4,
            ..spec(6, 5, 2)
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn schedule_contract() {
        let pop = generate_population::<f64>(&spec(12, 9, 2)).unwrap();
        let owners = round_robin_owners(12, 9);
        let cfg = ScheduleConfig {
            exercises_per_participant: 10,
            ..ScheduleConfig::default()
        };
        let plan = schedule_exercises(&pop, &owners, &cfg).unwrap();
        for i in 0..12 {
            let mine: Vec<_> = plan.iter().filter(|a| a.participant() == i).collect();
            assert_eq!(mine.len(), 10);
            let agree = mine
                .iter()
                .filter(|a| matches!(a, Assignment::Agreement { .. }))
                .count();
            assert_eq!(agree, 5);
            for a in &mine {
                let (x, y) = a.responses();
                assert_ne!(owners[x], i);
                if let Some(y) = y {
                    assert_ne!(owners[y], i);
                    assert_ne!(x, y);
                }
            }
        }
        let mut usage = vec![0usize; 9];
        for a in &plan {
            let (x, y) = a.responses();
            usage[x] += 1;
            if let Some(y) = y {
                usage[y] += 1;
            }
        }
        let (lo, hi) = (usage.iter().min().unwrap(), usage.iter().max().unwrap());
        assert!(hi - lo <= 2, "usage {usage:?}");
    }

    #[test]
    fn agree_only_schedule() {
        let cfg = ScheduleConfig {
            exercises_per_participant: 4,
            agree_ratio: 1.0,
            ..ScheduleConfig::default()
        };
        let plan = schedule_for_grid(3, 6, &round_robin_owners(3, 6), &cfg).unwrap();
        assert!(plan.iter().all(|a| matches!(a, Assignment::Agreement { .. })));
        assert_eq!(plan.len(), 12);
    }

    #[test]
    fn infeasible_schedules() {
        let cfg = ScheduleConfig {
            exercises_per_participant: 2,
            ..ScheduleConfig::default()
        };
        // one response: no pairs possible
        assert!(matches!(
            schedule_for_grid(2, 1, &[0], &cfg),
            Err(Error::InfeasibleSchedule(_))
        ));
        // participant 0 owns everything and self-votes are off
        let cfg = ScheduleConfig {
            exercises_per_participant: 1,
            agree_ratio: 1.0,
            ..ScheduleConfig::default()
        };
        assert!(matches!(
            schedule_for_grid(2, 2, &[0, 0], &cfg),
            Err(Error::InfeasibleSchedule(_))
        ));
        assert!(schedule_for_grid(
            2,
            2,
            &[0, 0],
            &ScheduleConfig {
                allow_self_votes: true,
                ..cfg
            }
        )
        .is_ok());
    }

    #[test]
    fn saturated_and_symmetric_votes() {
        let mut pop = generate_population::<f64>(&spec(1, 2, 1)).unwrap();
        pop.m_true[(0, 0)] = 20.0;
        pop.m_true[(0, 1)] = 20.0;
        pop.b_true[0] = 0.0;
        let agree = vec![
            Assignment::Agreement {
                participant: 0,
                response: 0
            };
            50
        ];
        let data = simulate_votes(&pop, &agree, 1).unwrap();
        assert!(data
            .events()
            .iter()
            .all(|e| matches!(e, ExerciseEvent::Agreement { agreed: true, .. })));

        let pairs = vec![
            Assignment::PairChoice {
                participant: 0,
                first: 0,
                second: 1
            };
            10_000
        ];
        let data = simulate_votes(&pop, &pairs, 2).unwrap();
        let wins = data
            .events()
            .iter()
            .filter(|e| matches!(e, ExerciseEvent::PairChoice { winner: 0, .. }))
            .count();
        let freq = wins as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&freq), "freq {freq}");
    }

    #[test]
    fn votes_are_deterministic_and_validated() {
        let pop = generate_population::<f64>(&spec(5, 6, 2)).unwrap();
        let cfg = ScheduleConfig {
            exercises_per_participant: 6,
            ..ScheduleConfig::default()
        };
        let plan = schedule_exercises(&pop, &round_robin_owners(5, 6), &cfg).unwrap();
        assert_eq!(
            simulate_votes(&pop, &plan, 9).unwrap(),
            simulate_votes(&pop, &plan, 9).unwrap()
        );
        let bad = [Assignment::Agreement {
            participant: 5,
            response: 0,
        }];
        assert!(matches!(
            simulate_votes(&pop, &bad, 0),
            Err(Error::InvalidAssignment { index: 0, .. })
        ));
    }

    #[test]
    fn population_export_round_trip() {
        let pop = generate_population::<f64>(&spec(3, 4, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pop.export_dir(dir.path()).unwrap();
        let back = SyntheticPopulation::<f64>::import_dir(dir.path()).unwrap();
        assert_eq!(back, pop);
    }
}
