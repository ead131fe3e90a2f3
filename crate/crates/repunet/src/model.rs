//! Shared domain types and the per-agent reputation database.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenarios::ScenarioAction;
use crate::{lit, Scalar};

pub type AgentId = usize;
pub type EventSeq = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value where a reputation score was expected")]
    NonFinite,
    #[error("reputation score {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("agent {owner} cannot hold a peer reputation about itself")]
    SelfPeer { owner: AgentId },
    #[error("self reputation of agent {owner} targets agent {target}")]
    SelfTarget { owner: AgentId, target: AgentId },
    #[error("agent {0} cannot hold an edge to itself")]
    SelfLoop(AgentId),
    #[error("gossip about agent {target} violates the third-party rule (gossiper {gossiper}, listener {listener})")]
    NotThirdParty {
        target: AgentId,
        gossiper: AgentId,
        listener: AgentId,
    },
    #[error("credibility {0} outside 1..=5")]
    Likert(u8),
    #[error("empty {0}")]
    Empty(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    #[default]
    Pd,
    Participation,
    Trading,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::Pd, ScenarioId::Participation, ScenarioId::Trading];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Pd => "pd",
            ScenarioId::Participation => "participation",
            ScenarioId::Trading => "trading",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pd" | "1" | "prisoners_dilemma" => Ok(ScenarioId::Pd),
            "participation" | "2" => Ok(ScenarioId::Participation),
            "trading" | "3" | "investment" => Ok(ScenarioId::Trading),
            other => Err(format!("unknown scenario `{other}` (expected pd, participation or trading)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Prosocial,
    SelfInterested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDescription {
    pub id: AgentId,
    pub name: String,
    pub disposition: Disposition,
    pub persona_text: String,
}

impl AgentDescription {
    pub fn new(id: AgentId, disposition: Disposition, persona_text: String) -> Result<Self, ModelError> {
        if persona_text.trim().is_empty() {
            return Err(ModelError::Empty("persona text"));
        }
        Ok(AgentDescription {
            id,
            name: agent_name(id),
            disposition,
            persona_text,
        })
    }
}

pub fn agent_name(id: AgentId) -> String {
    format!("Agent-{id}")
}

/// Clamps a score into `[-1, 1]`.
pub fn clamp_mu<F: Scalar>(x: F) -> Result<F, ModelError> {
    if !x.is_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok(x.max(-F::one()).min(F::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Reputation<F> {
    pub target: AgentId,
    pub scenario: ScenarioId,
    pub role: String,
    pub content: String,
    pub mu: F,
    pub updated_at: EventSeq,
}

impl<F: Scalar> Reputation<F> {
    pub fn new(
        target: AgentId,
        scenario: ScenarioId,
        role: impl Into<String>,
        content: impl Into<String>,
        mu: F,
        updated_at: EventSeq,
    ) -> Result<Self, ModelError> {
        if !mu.is_finite() {
            return Err(ModelError::NonFinite);
        }
        if mu < -F::one() || mu > F::one() {
            return Err(ModelError::OutOfRange(mu.to_f64().unwrap_or(f64::NAN)));
        }
        let content = content.into();
        if content.trim().is_empty() {
            return Err(ModelError::Empty("reputation content"));
        }
        Ok(Reputation {
            target,
            scenario,
            role: role.into(),
            content,
            mu,
            updated_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Positive,
    Neutral,
    Negative,
}

impl Valence {
    pub fn from_sign(cooperative: bool) -> Self {
        if cooperative {
            Valence::Positive
        } else {
            Valence::Negative
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Valence::Positive => 1,
            Valence::Neutral => 0,
            Valence::Negative => -1,
        }
    }

    pub fn value<F: Scalar>(self) -> F {
        lit(self.sign() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipRecord {
    pub target: AgentId,
    pub gossiper: AgentId,
    pub summary: String,
    pub credibility: u8,
    pub valence: Valence,
    pub received_at: EventSeq,
}

impl GossipRecord {
    pub fn new(
        listener: AgentId,
        target: AgentId,
        gossiper: AgentId,
        summary: String,
        credibility: u8,
        valence: Valence,
        received_at: EventSeq,
    ) -> Result<Self, ModelError> {
        if target == gossiper || target == listener || gossiper == listener {
            return Err(ModelError::NotThirdParty { target, gossiper, listener });
        }
        if !(1..=5).contains(&credibility) {
            return Err(ModelError::Likert(credibility));
        }
        Ok(GossipRecord {
            target,
            gossiper,
            summary,
            credibility,
            valence,
            received_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeDecision {
    Y,
    N,
}

impl EdgeDecision {
    pub fn from_bool(keep: bool) -> Self {
        if keep {
            EdgeDecision::Y
        } else {
            EdgeDecision::N
        }
    }

    pub fn is_yes(self) -> bool {
        self == EdgeDecision::Y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Encounter<F> {
    pub seq: EventSeq,
    pub round: u32,
    pub a: AgentId,
    pub b: AgentId,
    pub scenario: ScenarioId,
    pub action_a: ScenarioAction<F>,
    pub action_b: ScenarioAction<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub payoff_a: F,
    pub payoff_b: F,
}

impl<F: Scalar> Encounter<F> {
    pub fn involves(&self, id: AgentId) -> bool {
        self.a == id || self.b == id
    }

    pub fn counterpart(&self, id: AgentId) -> Option<AgentId> {
        if id == self.a {
            Some(self.b)
        } else if id == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn action_of(&self, id: AgentId) -> Option<&ScenarioAction<F>> {
        if id == self.a {
            Some(&self.action_a)
        } else if id == self.b {
            Some(&self.action_b)
        } else {
            None
        }
    }

    /// Valence of `id`'s own move, as seen by its counterpart.
    pub fn valence_of(&self, id: AgentId) -> Option<Valence> {
        self.action_of(id).map(|a| a.valence())
    }

    /// Role label `id` played in this encounter.
    pub fn role_of(&self, id: AgentId) -> &'static str {
        match self.scenario {
            ScenarioId::Pd => "player",
            ScenarioId::Participation => "participant",
            ScenarioId::Trading if id == self.a => "investor",
            ScenarioId::Trading => "trustee",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct DatabaseRepr<F> {
    owner: AgentId,
    self_reputation: Option<Reputation<F>>,
    peer_reputations: Vec<Reputation<F>>,
    out_edges: Vec<AgentId>,
    gossip_log: Vec<GossipRecord>,
    #[serde(default)]
    unreliable_fraction: Option<F>,
}

/// Per-agent store of reputations, out-edges and received gossip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar", into = "DatabaseRepr<F>", try_from = "DatabaseRepr<F>")]
pub struct RepuDatabase<F: Scalar> {
    owner: AgentId,
    self_reputation: Option<Reputation<F>>,
    peers: BTreeMap<(AgentId, ScenarioId), Reputation<F>>,
    out_edges: BTreeSet<AgentId>,
    gossip_log: Vec<GossipRecord>,
}

impl<F: Scalar> From<RepuDatabase<F>> for DatabaseRepr<F> {
    fn from(db: RepuDatabase<F>) -> Self {
        let unreliable = db.unreliable_fraction();
        DatabaseRepr {
            owner: db.owner,
            self_reputation: db.self_reputation,
            peer_reputations: db.peers.into_values().collect(),
            out_edges: db.out_edges.into_iter().collect(),
            gossip_log: db.gossip_log,
            unreliable_fraction: Some(unreliable),
        }
    }
}

impl<F: Scalar> TryFrom<DatabaseRepr<F>> for RepuDatabase<F> {
    type Error = ModelError;
    fn try_from(r: DatabaseRepr<F>) -> Result<Self, ModelError> {
        let mut db = RepuDatabase::new(r.owner);
        if let Some(s) = r.self_reputation {
            db.set_self_reputation(s)?;
        }
        for p in r.peer_reputations {
            db.upsert_peer_reputation(p)?;
        }
        for e in r.out_edges {
            db.add_edge(e)?;
        }
        for g in r.gossip_log {
            db.push_gossip(g)?;
        }
        Ok(db)
    }
}

impl<F: Scalar> RepuDatabase<F> {
    pub fn new(owner: AgentId) -> Self {
        RepuDatabase {
            owner,
            self_reputation: None,
            peers: BTreeMap::new(),
            out_edges: BTreeSet::new(),
            gossip_log: Vec::new(),
        }
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn self_reputation(&self) -> Option<&Reputation<F>> {
        self.self_reputation.as_ref()
    }

    pub fn set_self_reputation(&mut self, r: Reputation<F>) -> Result<(), ModelError> {
        if r.target != self.owner {
            return Err(ModelError::SelfTarget {
                owner: self.owner,
                target: r.target,
            });
        }
        check_mu(r.mu)?;
        self.self_reputation = Some(r);
        Ok(())
    }

    /// Stores `r`, replacing any earlier value for the same target and scenario.
    pub fn upsert_peer_reputation(&mut self, r: Reputation<F>) -> Result<(), ModelError> {
        if r.target == self.owner {
            return Err(ModelError::SelfPeer { owner: self.owner });
        }
        check_mu(r.mu)?;
        self.peers.insert((r.target, r.scenario), r);
        Ok(())
    }

    pub fn peer(&self, target: AgentId, scenario: ScenarioId) -> Option<&Reputation<F>> {
        self.peers.get(&(target, scenario))
    }

    pub fn peer_mu(&self, target: AgentId, scenario: ScenarioId) -> Option<F> {
        self.peer(target, scenario).map(|r| r.mu)
    }

    pub fn peer_reputations(&self) -> impl Iterator<Item = &Reputation<F>> {
        self.peers.values()
    }

    pub fn peer_count(&self) -> usize {
        self.peers.len()
    }

    pub fn out_edges(&self) -> &BTreeSet<AgentId> {
        &self.out_edges
    }

    pub fn has_edge(&self, to: AgentId) -> bool {
        self.out_edges.contains(&to)
    }

    /// Returns whether the edge was newly added.
    pub fn add_edge(&mut self, to: AgentId) -> Result<bool, ModelError> {
        if to == self.owner {
            return Err(ModelError::SelfLoop(to));
        }
        Ok(self.out_edges.insert(to))
    }

    /// Returns whether an edge was removed.
    pub fn remove_edge(&mut self, to: AgentId) -> bool {
        self.out_edges.remove(&to)
    }

    pub fn gossip_log(&self) -> &[GossipRecord] {
        &self.gossip_log
    }

    pub fn push_gossip(&mut self, g: GossipRecord) -> Result<(), ModelError> {
        if g.target == self.owner || g.target == g.gossiper || g.gossiper == self.owner {
            return Err(ModelError::NotThirdParty {
                target: g.target,
                gossiper: g.gossiper,
                listener: self.owner,
            });
        }
        if !(1..=5).contains(&g.credibility) {
            return Err(ModelError::Likert(g.credibility));
        }
        self.gossip_log.push(g);
        Ok(())
    }

    /// Share of received gossip rated 1 or 2; zero for an empty log.
    pub fn unreliable_fraction(&self) -> F {
        let low = self.gossip_log.iter().filter(|g| g.credibility <= 2).count();
        let denom = self.gossip_log.len().max(1);
        lit::<F>(low as f64) / lit::<F>(denom as f64)
    }
}

fn check_mu<F: Scalar>(mu: F) -> Result<(), ModelError> {
    if !mu.is_finite() {
        return Err(ModelError::NonFinite);
    }
    if mu < -F::one() || mu > F::one() {
        return Err(ModelError::OutOfRange(mu.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    Encounter { counterpart: AgentId, valence: Valence },
    Gossip { gossiper: AgentId, target: AgentId, valence: Valence },
}

impl Observation {
    pub fn valence(&self) -> Valence {
        match self {
            Observation::Encounter { valence, .. } | Observation::Gossip { valence, .. } => *valence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub seq: EventSeq,
    pub round: u32,
    pub observation: Observation,
}

/// Append-only record of the events an agent took part in or heard about.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentMemory {
    pub owner: AgentId,
    events: Vec<MemoryEntry>,
}

impl AgentMemory {
    pub fn new(owner: AgentId) -> Self {
        AgentMemory { owner, events: Vec::new() }
    }

    pub fn record_encounter(&mut self, seq: EventSeq, round: u32, counterpart: AgentId, valence: Valence) -> Result<(), ModelError> {
        if counterpart == self.owner {
            return Err(ModelError::SelfPeer { owner: self.owner });
        }
        self.events.push(MemoryEntry {
            seq,
            round,
            observation: Observation::Encounter { counterpart, valence },
        });
        Ok(())
    }

    pub fn record_gossip(&mut self, seq: EventSeq, round: u32, g: &GossipRecord) -> Result<(), ModelError> {
        if g.target == self.owner || g.gossiper == self.owner {
            return Err(ModelError::NotThirdParty {
                target: g.target,
                gossiper: g.gossiper,
                listener: self.owner,
            });
        }
        self.events.push(MemoryEntry {
            seq,
            round,
            observation: Observation::Gossip {
                gossiper: g.gossiper,
                target: g.target,
                valence: g.valence,
            },
        });
        Ok(())
    }

    pub fn events(&self) -> &[MemoryEntry] {
        &self.events
    }

    /// Signs of the last `k` observed valences, oldest first.
    pub fn recent_valences(&self, k: usize) -> Vec<i8> {
        let start = self.events.len().saturating_sub(k);
        self.events[start..].iter().map(|e| e.observation.valence().sign()).collect()
    }
}
