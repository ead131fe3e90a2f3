//! Append-only event log and its JSONL encoding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ActionChoice;
use crate::gossip::GossipExchange;
use crate::model::{AgentId, EdgeDecision, Encounter, EventSeq};
use crate::reputation::ReputationUpdate;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStart {
    pub pairs: Vec<(AgentId, AgentId)>,
    pub unmatched: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DecisionEvent<F> {
    pub agent: AgentId,
    pub counterpart: Option<AgentId>,
    pub choice: ActionChoice<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCause {
    Interact,
    Gossip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub owner: AgentId,
    pub target: AgentId,
    pub decision: EdgeDecision,
    pub cause: EdgeCause,
    pub cause_seq: EventSeq,
    /// Whether the decision altered the edge set.
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningEvent {
    pub agent: Option<AgentId>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", bound = "F: Scalar")]
pub enum EventBody<F> {
    Round(RoundStart),
    Decision(DecisionEvent<F>),
    Encounter(Encounter<F>),
    ReputationUpdate(ReputationUpdate<F>),
    Gossip(GossipExchange),
    Edge(EdgeEvent),
    Warning(WarningEvent),
}

impl<F> EventBody<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Round(_) => "round",
            EventBody::Decision(_) => "decision",
            EventBody::Encounter(_) => "encounter",
            EventBody::ReputationUpdate(_) => "reputation_update",
            EventBody::Gossip(_) => "gossip",
            EventBody::Edge(_) => "edge",
            EventBody::Warning(_) => "warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SimEvent<F> {
    pub seq: EventSeq,
    pub round: u32,
    #[serde(flatten)]
    pub body: EventBody<F>,
}

impl<F> SimEvent<F> {
    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }
}

/// In-memory log with a monotone sequence counter.
#[derive(Debug, Clone, Default)]
pub struct EventLog<F> {
    events: Vec<SimEvent<F>>,
}

impl<F: Scalar> EventLog<F> {
    pub fn new() -> Self {
        EventLog { events: Vec::new() }
    }

    pub fn next_seq(&self) -> EventSeq {
        self.events.len() as EventSeq
    }

    pub fn push(&mut self, round: u32, body: EventBody<F>) -> EventSeq {
        let seq = self.next_seq();
        self.events.push(SimEvent { seq, round, body });
        seq
    }

    pub fn events(&self) -> &[SimEvent<F>] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SimEvent<F>> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_jsonl<F: Scalar, W: Write>(events: &[SimEvent<F>], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl<F: Scalar>(events: &[SimEvent<F>]) -> String {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Reads a JSONL log, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<F: Scalar, R: BufRead>(input: R) -> Result<Vec<SimEvent<F>>, LogError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}
