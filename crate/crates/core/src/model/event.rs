use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One vote cast by a participant.
///
/// Serialized as one JSON object per line, e.g.
/// `{"kind":"agreement","participant":3,"response":7,"agreed":true}` or
/// `{"kind":"pair_choice","participant":3,"winner":7,"loser":2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExerciseEvent {
    /// Participant agreed (or disagreed) with a single response.
    Agreement {
        participant: usize,
        response: usize,
        agreed: bool,
    },
    /// Participant preferred `winner` over `loser`.
    PairChoice {
        participant: usize,
        winner: usize,
        loser: usize,
    },
}

impl ExerciseEvent {
    pub fn agreement(participant: usize, response: usize, agreed: bool) -> Self {
        ExerciseEvent::Agreement {
            participant,
            response,
            agreed,
        }
    }

    pub fn pair_choice(participant: usize, winner: usize, loser: usize) -> Self {
        ExerciseEvent::PairChoice {
            participant,
            winner,
            loser,
        }
    }

    pub fn participant(&self) -> usize {
        match *self {
            ExerciseEvent::Agreement { participant, .. } | ExerciseEvent::PairChoice { participant, .. } => participant,
        }
    }

    pub fn is_agreement(&self) -> bool {
        matches!(self, ExerciseEvent::Agreement { .. })
    }

    /// Largest response index the event touches.
    fn max_response(&self) -> usize {
        match *self {
            ExerciseEvent::Agreement { response, .. } => response,
            ExerciseEvent::PairChoice { winner, loser, .. } => winner.max(loser),
        }
    }

    /// The same choice with winner and loser exchanged; agreement events flip
    /// their verdict.
    pub fn flipped(&self) -> Self {
        match *self {
            ExerciseEvent::Agreement {
                participant,
                response,
                agreed,
            } => ExerciseEvent::agreement(participant, response, !agreed),
            ExerciseEvent::PairChoice {
                participant,
                winner,
                loser,
            } => ExerciseEvent::pair_choice(participant, loser, winner),
        }
    }

    pub(crate) fn check(&self, index: usize, n_participants: usize, n_responses: usize) -> Result<()> {
        let out_of_range = self.participant() >= n_participants || self.max_response() >= n_responses;
        if out_of_range {
            return Err(Error::DimensionMismatch {
                index,
                participant: self.participant(),
                response: self.max_response(),
                n_participants,
                n_responses,
            });
        }
        if let ExerciseEvent::PairChoice { winner, loser, .. } = *self {
            if winner == loser {
                return Err(Error::DegeneratePair {
                    index,
                    response: winner,
                });
            }
        }
        Ok(())
    }
}

/// Sizes of the agreement, disagreement and pair-choice sets of a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub agreements: usize,
    pub disagreements: usize,
    pub pair_choices: usize,
}

impl EventCounts {
    pub fn total(&self) -> usize {
        self.agreements + self.disagreements + self.pair_choices
    }
}

/// An ordered multiset of votes over a fixed participant × response grid.
///
/// Repeated identical events are allowed and each occurrence contributes its
/// own likelihood factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_participants: usize,
    n_responses: usize,
    events: Vec<ExerciseEvent>,
}

impl Dataset {
    pub fn new(n_participants: usize, n_responses: usize, events: Vec<ExerciseEvent>) -> Result<Self> {
        for (index, event) in events.iter().enumerate() {
            event.check(index, n_participants, n_responses)?;
        }
        Ok(Dataset {
            n_participants,
            n_responses,
            events,
        })
    }

    pub fn empty(n_participants: usize, n_responses: usize) -> Self {
        Dataset {
            n_participants,
            n_responses,
            events: Vec::new(),
        }
    }

    pub fn n_participants(&self) -> usize {
        self.n_participants
    }

    pub fn n_responses(&self) -> usize {
        self.n_responses
    }

    pub fn events(&self) -> &[ExerciseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, event: ExerciseEvent) -> Result<()> {
        event.check(self.events.len(), self.n_participants, self.n_responses)?;
        self.events.push(event);
        Ok(())
    }

    /// A dataset over the same grid holding the given subset of events.
    pub fn with_events(&self, events: Vec<ExerciseEvent>) -> Result<Self> {
        Dataset::new(self.n_participants, self.n_responses, events)
    }

    pub fn counts(&self) -> EventCounts {
        let mut counts = EventCounts::default();
        for event in &self.events {
            match event {
                ExerciseEvent::Agreement { agreed: true, .. } => counts.agreements += 1,
                ExerciseEvent::Agreement { agreed: false, .. } => counts.disagreements += 1,
                ExerciseEvent::PairChoice { .. } => counts.pair_choices += 1,
            }
        }
        counts
    }

    /// Splits the events into the agreement set, the disagreement set and the
    /// pair-choice set as `(i, j)`, `(i, j)` and `(i, winner, loser)` tuples.
    #[allow(clippy::type_complexity)]
    pub fn partition(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<(usize, usize, usize)>) {
        let mut agree = Vec::new();
        let mut disagree = Vec::new();
        let mut choices = Vec::new();
        for event in &self.events {
            match *event {
                ExerciseEvent::Agreement {
                    participant,
                    response,
                    agreed,
                } => {
                    if agreed {
                        agree.push((participant, response));
                    } else {
                        disagree.push((participant, response));
                    }
                }
                ExerciseEvent::PairChoice {
                    participant,
                    winner,
                    loser,
                } => choices.push((participant, winner, loser)),
            }
        }
        (agree, disagree, choices)
    }

    /// Writes one JSON object per event.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut writer, event)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads events written by [`Dataset::write_jsonl`]. When `dims` is `None`
    /// the grid is sized to the largest indices seen.
    pub fn read_jsonl<R: BufRead>(reader: R, dims: Option<(usize, usize)>) -> Result<Self> {
        let mut events = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: ExerciseEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        let (n, m) = match dims {
            Some(d) => d,
            None => events.iter().fold((0, 0), |(n, m), e| {
                (n.max(e.participant() + 1), m.max(e.max_response() + 1))
            }),
        };
        Dataset::new(n, m, events)
    }
}
