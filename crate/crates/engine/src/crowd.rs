//! A simulated crowd that takes part in a cycle through the engine's public
//! operations, voting from a synthetic population's true utilities.

use rlsdp_core::simulator::{generate_population, ground_truth_agreement, simulate_votes, Assignment};
use rlsdp_core::{ExerciseEvent, PopulationSpec, SyntheticPopulation};
use serde::{Deserialize, Serialize};

use crate::cycle::{Prompt, VoteOutcome};
use crate::engine::Engine;
use crate::error::{EngineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdSpec {
    pub question: String,
    pub n_participants: usize,
    pub n_responses: usize,
    pub rank: usize,
    pub logit_scale: f64,
    /// Exercises each participant answers.
    pub exercises_per_participant: usize,
    pub seed: u64,
}

impl Default for CrowdSpec {
    fn default() -> Self {
        let population = PopulationSpec::default();
        CrowdSpec {
            question: "What should the city do with the old rail yard?".into(),
            n_participants: population.n,
            n_responses: population.m,
            rank: population.rank,
            logit_scale: population.logit_scale,
            exercises_per_participant: 15,
            seed: 0,
        }
    }
}

pub struct Crowd {
    spec: CrowdSpec,
    population: SyntheticPopulation<f64>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl Crowd {
    pub fn new(spec: CrowdSpec) -> Result<Self> {
        if spec.n_participants == 0 || spec.n_responses == 0 {
            return Err(EngineError::Config("a crowd needs participants and responses".into()));
        }
        let population = generate_population(&PopulationSpec {
            n: spec.n_participants,
            m: spec.n_responses,
            rank: spec.rank,
            logit_scale: spec.logit_scale,
            seed: spec.seed,
            ..PopulationSpec::default()
        })?;
        Ok(Crowd { spec, population })
    }

    pub fn spec(&self) -> &CrowdSpec {
        &self.spec
    }

    pub fn population(&self) -> &SyntheticPopulation<f64> {
        &self.population
    }

    /// Population agreement of every response under the true utilities.
    pub fn ground_truth(&self) -> Vec<f64> {
        ground_truth_agreement(&self.population)
    }

    pub fn token(&self, participant: usize) -> String {
        format!("crowd-{participant:04}")
    }

    /// Submits every response of the population, response `j` by participant
    /// `j mod n`. Response ids line up with population columns only when the
    /// cycle had no responses before.
    pub fn submit_responses(&self, engine: &mut Engine, cycle_id: u64) -> Result<()> {
        for j in 0..self.spec.n_responses {
            let owner = j % self.spec.n_participants;
            engine.submit_response(cycle_id, &self.token(owner), &format!("Proposal {}", j + 1))?;
        }
        Ok(())
    }

    fn outcome(&self, participant: usize, prompt: Prompt, exercise_id: usize) -> Result<VoteOutcome> {
        let assignment = match prompt {
            Prompt::Agreement { response } => Assignment::Agreement { participant, response },
            Prompt::PairChoice { first, second } => Assignment::PairChoice {
                participant,
                first,
                second,
            },
        };
        let seed = splitmix(self.spec.seed ^ splitmix(exercise_id as u64 + 1));
        let data = simulate_votes(&self.population, &[assignment], seed)?;
        Ok(match data.events()[0] {
            ExerciseEvent::Agreement { agreed, .. } => VoteOutcome::Agreement { agreed },
            ExerciseEvent::PairChoice { winner, .. } => VoteOutcome::Choice { winner },
        })
    }

    /// Requests and answers one exercise for `participant`. Returns `false`
    /// once they have nothing left to answer.
    pub fn vote_once(&self, engine: &mut Engine, cycle_id: u64, participant: usize) -> Result<bool> {
        let token = self.token(participant);
        let exercise = match engine.next_exercise(cycle_id, &token) {
            Ok(exercise) => exercise,
            Err(EngineError::Exhausted { .. }) => return Ok(false),
            Err(other) => return Err(other),
        };
        let outcome = self.outcome(participant, exercise.prompt, exercise.exercise_id)?;
        engine.submit_vote(cycle_id, &token, exercise.exercise_id, outcome)?;
        Ok(true)
    }

    /// Participants vote in rounds, one exercise each per round.
    pub fn vote_all(&self, engine: &mut Engine, cycle_id: u64) -> Result<usize> {
        let mut cast = 0;
        for _ in 0..self.spec.exercises_per_participant {
            for i in 0..self.spec.n_participants {
                cast += usize::from(self.vote_once(engine, cycle_id, i)?);
            }
        }
        Ok(cast)
    }

    /// Opens a cycle, fills it with responses and votes, and leaves it in
    /// `Voting` for the moderator to close.
    pub fn run_cycle(&self, engine: &mut Engine) -> Result<u64> {
        let cycle_id = engine.open_cycle(&self.spec.question)?;
        self.submit_responses(engine, cycle_id)?;
        engine.open_voting(cycle_id)?;
        self.vote_all(engine, cycle_id)?;
        Ok(cycle_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::Phase;

    #[test]
    fn small_crowd_fills_a_cycle() {
        let crowd = Crowd::new(CrowdSpec {
            n_participants: 6,
            n_responses: 8,
            rank: 2,
            exercises_per_participant: 4,
            seed: 3,
            ..CrowdSpec::default()
        })
        .unwrap();
        let mut engine = Engine::default();
        let id = crowd.run_cycle(&mut engine).unwrap();
        let cycle = engine.cycle(id).unwrap();
        assert_eq!(cycle.phase, Phase::Voting);
        assert_eq!(cycle.responses.len(), 8);
        assert_eq!(cycle.votes.len(), 24);
        assert_eq!(cycle.participants.len(), 6);
        assert!(cycle.exercises.iter().all(|e| e.answer.is_some()));
    }
}
