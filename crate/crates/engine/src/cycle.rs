//! Dialogue cycles and what they hold.

use std::fmt;

use chrono::{DateTime, Utc};
use rlsdp_core::{Dataset, ExerciseEvent, InferenceSettings, Method};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    QuestionOpen,
    Voting,
    Inferring,
    ResultsReady,
}

impl Phase {
    /// Phases that count as the single live cycle.
    pub fn is_live(self) -> bool {
        !matches!(self, Phase::ResultsReady)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Phase::QuestionOpen => "QuestionOpen",
            Phase::Voting => "Voting",
            Phase::Inferring => "Inferring",
            Phase::ResultsReady => "ResultsReady",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub response_id: usize,
    pub participant: String,
    pub text: String,
}

/// What a participant is asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prompt {
    Agreement { response: usize },
    PairChoice { first: usize, second: usize },
}

impl Prompt {
    pub fn is_agreement(&self) -> bool {
        matches!(self, Prompt::Agreement { .. })
    }
}

/// A participant's answer to a prompt: `{"agreed": true}` or `{"winner": 4}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VoteOutcome {
    Agreement { agreed: bool },
    Choice { winner: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exercise {
    pub exercise_id: usize,
    pub participant: String,
    pub prompt: Prompt,
    pub answer: Option<VoteOutcome>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub agree: usize,
    pub disagree: usize,
    pub pair_wins: usize,
    pub pair_losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub response_id: usize,
    pub text: String,
    pub mean_agreement: f64,
    pub std_agreement: f64,
    pub votes: VoteCounts,
}

/// Confidence-tagged outcome of a cycle, rows sorted by descending
/// `mean_agreement` (ties by response id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub cycle_id: u64,
    pub method: Method,
    pub wall_clock_seconds: f64,
    pub n_participants: usize,
    pub n_votes: usize,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
}

/// Inference requested at close and not yet finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingInference {
    pub method: Method,
    pub settings: InferenceSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueCycle {
    pub cycle_id: u64,
    pub question: String,
    pub phase: Phase,
    /// Participant tokens in enrollment order; position is the model index.
    pub participants: Vec<String>,
    pub responses: Vec<Response>,
    pub exercises: Vec<Exercise>,
    /// Votes in arrival order, indexed by participant position and response id.
    pub votes: Vec<ExerciseEvent>,
    pub opened_at: DateTime<Utc>,
    pub voting_opened_at: Option<DateTime<Utc>>,
    pub closed_at: Option<DateTime<Utc>>,
    pub pending: Option<PendingInference>,
    pub last_error: Option<String>,
    pub result: Option<CycleResult>,
}

impl DialogueCycle {
    pub(crate) fn new(cycle_id: u64, question: String, opened_at: DateTime<Utc>) -> Self {
        DialogueCycle {
            cycle_id,
            question,
            phase: Phase::QuestionOpen,
            participants: Vec::new(),
            responses: Vec::new(),
            exercises: Vec::new(),
            votes: Vec::new(),
            opened_at,
            voting_opened_at: None,
            closed_at: None,
            pending: None,
            last_error: None,
            result: None,
        }
    }

    pub fn participant_index(&self, token: &str) -> Option<usize> {
        self.participants.iter().position(|p| p == token)
    }

    pub(crate) fn enroll(&mut self, token: &str) -> usize {
        match self.participant_index(token) {
            Some(index) => index,
            None => {
                self.participants.push(token.to_owned());
                self.participants.len() - 1
            }
        }
    }

    /// Immutable snapshot of the votes for inference.
    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset::new(
            self.participants.len(),
            self.responses.len(),
            self.votes.clone(),
        )?)
    }

    pub fn counts(&self) -> LiveCounts {
        let agreement_votes = self.votes.iter().filter(|e| e.is_agreement()).count();
        LiveCounts {
            participants: self.participants.len(),
            responses: self.responses.len(),
            agreement_votes,
            pair_votes: self.votes.len() - agreement_votes,
        }
    }

    pub fn vote_counts(&self) -> Vec<VoteCounts> {
        let mut counts = vec![VoteCounts::default(); self.responses.len()];
        for event in &self.votes {
            match *event {
                ExerciseEvent::Agreement { response, agreed, .. } => {
                    if agreed {
                        counts[response].agree += 1;
                    } else {
                        counts[response].disagree += 1;
                    }
                }
                ExerciseEvent::PairChoice { winner, loser, .. } => {
                    counts[winner].pair_wins += 1;
                    counts[loser].pair_losses += 1;
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveCounts {
    pub participants: usize,
    pub responses: usize,
    pub agreement_votes: usize,
    pub pair_votes: usize,
}
