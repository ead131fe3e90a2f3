//! Single-hop gossip: willingness, listener choice, summarizing, credibility.

use serde::{Deserialize, Serialize};

use crate::backend::{judge_checked, BackendError, JudgmentBackend, JudgmentContext, JudgmentRequest, JudgmentResponse, ListenerCandidate};
use crate::events::{EdgeCause, EdgeEvent, EventBody, EventLog, WarningEvent};
use crate::model::{agent_name, AgentDescription, AgentId, AgentMemory, Encounter, EventSeq, GossipRecord, RepuDatabase, ScenarioId, Valence};
use crate::network::gossip_edge_shape;
use crate::reputation::shape_repu_gossip;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipExchange {
    pub seq: EventSeq,
    pub round: u32,
    pub gossiper: AgentId,
    pub listener: AgentId,
    pub target: AgentId,
    pub summary: String,
    pub credibility: u8,
    pub valence: Valence,
}

type Judged<T> = Result<(T, Vec<String>), BackendError>;

/// Whether the gossiper wants to talk about its counterpart in `enc`.
pub fn gossip_will<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    gossiper: &AgentDescription,
    db: &RepuDatabase<F>,
    enc: &Encounter<F>,
    reputation_enabled: bool,
) -> Judged<bool> {
    let other = enc
        .counterpart(gossiper.id)
        .ok_or_else(|| BackendError::InvalidRequest(format!("{} is not part of the encounter", gossiper.name)))?;
    let req = JudgmentRequest {
        agent: gossiper.clone(),
        scenario: enc.scenario,
        context: JudgmentContext::GossipWill {
            encounter: enc.clone(),
            counterpart: other,
            reputation: if reputation_enabled { db.peer(other, enc.scenario).cloned() } else { None },
        },
    };
    match judge_checked(backend, &req)? {
        (JudgmentResponse::Will { decision }, w) => Ok((decision.is_yes(), w)),
        (other, _) => Err(BackendError::InvalidResponse(format!("expected a will decision, got {other:?}"))),
    }
}

/// Picks a listener among all agents except the gossiper and the target.
/// `None` when nobody is eligible.
pub fn gossip_choice<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    gossiper: &AgentDescription,
    db: &RepuDatabase<F>,
    target: AgentId,
    population: usize,
    scenario: ScenarioId,
    reputation_enabled: bool,
) -> Judged<Option<AgentId>> {
    let candidates: Vec<ListenerCandidate<F>> = (0..population)
        .filter(|j| *j != gossiper.id && *j != target)
        .map(|j| ListenerCandidate {
            id: j,
            mu: if reputation_enabled { db.peer_mu(j, scenario) } else { None },
            out_neighbor: db.has_edge(j),
        })
        .collect();
    if candidates.is_empty() {
        return Ok((None, Vec::new()));
    }
    let req = JudgmentRequest {
        agent: gossiper.clone(),
        scenario,
        context: JudgmentContext::GossipChoice { target, candidates },
    };
    match judge_checked(backend, &req)? {
        (JudgmentResponse::Listener { id }, w) => Ok((Some(id), w)),
        (other, _) => Err(BackendError::InvalidResponse(format!("expected a listener, got {other:?}"))),
    }
}

/// Listener's reading of what it was told: target, summary and valence.
pub fn gossip_identify<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    listener: &AgentDescription,
    gossiper: AgentId,
    conversation: &str,
    scenario: ScenarioId,
) -> Judged<(AgentId, String, Valence)> {
    let req = JudgmentRequest::<F> {
        agent: listener.clone(),
        scenario,
        context: JudgmentContext::GossipIdentify {
            gossiper,
            conversation: conversation.to_string(),
        },
    };
    match judge_checked(backend, &req)? {
        (JudgmentResponse::Summary { target, summary, valence }, w) => Ok(((target, summary, valence), w)),
        (other, _) => Err(BackendError::InvalidResponse(format!("expected a summary, got {other:?}"))),
    }
}

/// Credibility rating (1..=5) the listener gives a summary.
#[allow(clippy::too_many_arguments)]
pub fn gossip_evaluate<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    listener: &AgentDescription,
    db: &RepuDatabase<F>,
    gossiper: AgentId,
    summary: &str,
    scenario: ScenarioId,
    reputation_enabled: bool,
) -> Judged<u8> {
    let req = JudgmentRequest {
        agent: listener.clone(),
        scenario,
        context: JudgmentContext::GossipEvaluate {
            gossiper,
            summary: summary.to_string(),
            gossiper_reputation: if reputation_enabled { db.peer(gossiper, scenario).cloned() } else { None },
            p_unreliable: db.unreliable_fraction(),
        },
    };
    match judge_checked(backend, &req)? {
        (JudgmentResponse::Credibility { likert }, w) => Ok((likert.clamp(1, 5) as u8, w)),
        (other, _) => Err(BackendError::InvalidResponse(format!("expected a credibility rating, got {other:?}"))),
    }
}

/// What the gossiper says about the target's move.
pub fn conversation_text<F: Scalar>(gossiper: AgentId, listener: AgentId, enc: &Encounter<F>, target: AgentId) -> String {
    let verb = enc.action_of(target).map(|a| a.verb()).unwrap_or("did something");
    format!(
        "{} to {}: when I met {} in round {}, they {verb}.",
        agent_name(gossiper),
        agent_name(listener),
        agent_name(target),
        enc.round
    )
}

/// Mutable state the gossip phase touches.
pub struct GossipWorld<'a, F: Scalar> {
    pub agents: &'a [AgentDescription],
    pub dbs: &'a mut [RepuDatabase<F>],
    pub memories: &'a mut [AgentMemory],
    pub log: &'a mut EventLog<F>,
}

fn warn<F: Scalar>(log: &mut EventLog<F>, round: u32, agent: Option<AgentId>, messages: Vec<String>) {
    for message in messages {
        log.push(round, EventBody::Warning(WarningEvent { agent, message }));
    }
}

/// Runs one gossip opportunity per encounter participant, in ascending id
/// order. Reputation updates for the round must already be committed.
pub fn run_gossip_phase<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    world: &mut GossipWorld<'_, F>,
    round: u32,
    encounters: &[Encounter<F>],
    reputation_enabled: bool,
) -> Result<Vec<GossipExchange>, BackendError> {
    let mut participants: Vec<(AgentId, &Encounter<F>)> = encounters.iter().flat_map(|e| [(e.a, e), (e.b, e)]).collect();
    participants.sort_by_key(|(id, _)| *id);
    let n = world.agents.len();
    let mut out = Vec::new();
    for (g, enc) in participants {
        let target = enc.counterpart(g).expect("participant of its own encounter");
        let gossiper = &world.agents[g];
        let (will, w) = gossip_will(backend, gossiper, &world.dbs[g], enc, reputation_enabled)?;
        warn(world.log, round, Some(g), w);
        if !will {
            continue;
        }
        let (listener, w) = gossip_choice(backend, gossiper, &world.dbs[g], target, n, enc.scenario, reputation_enabled)?;
        warn(world.log, round, Some(g), w);
        let Some(l) = listener else {
            warn(world.log, round, Some(g), vec![format!("gossip by {} cancelled: no eligible listener", agent_name(g))]);
            continue;
        };
        let listener_desc = &world.agents[l];
        let conversation = conversation_text(g, l, enc, target);
        let ((heard_target, summary, valence), w) = match gossip_identify::<F>(backend, listener_desc, g, &conversation, enc.scenario) {
            Ok(x) => x,
            Err(e @ (BackendError::Unidentifiable | BackendError::InvalidResponse(_))) => {
                warn(world.log, round, Some(l), vec![format!("gossip from {} dropped: {e}", agent_name(g))]);
                continue;
            }
            Err(e) => return Err(e),
        };
        warn(world.log, round, Some(l), w);
        let (credibility, w) = gossip_evaluate(backend, listener_desc, &world.dbs[l], g, &summary, enc.scenario, reputation_enabled)?;
        warn(world.log, round, Some(l), w);
        let seq = world.log.next_seq();
        let record = match GossipRecord::new(l, heard_target, g, summary.clone(), credibility, valence, seq) {
            Ok(r) => r,
            Err(e) => {
                warn(world.log, round, Some(l), vec![format!("gossip from {} dropped: {e}", agent_name(g))]);
                continue;
            }
        };
        let exchange = GossipExchange {
            seq,
            round,
            gossiper: g,
            listener: l,
            target: heard_target,
            summary,
            credibility,
            valence,
        };
        world.log.push(round, EventBody::Gossip(exchange.clone()));
        world.dbs[l].push_gossip(record.clone()).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        world.memories[l].record_gossip(seq, round, &record).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        if reputation_enabled {
            let next = world.log.next_seq();
            let (update, w) = shape_repu_gossip(backend, listener_desc, &mut world.dbs[l], &record, enc.scenario, seq, next)?;
            if let Some(u) = update {
                world.log.push(round, EventBody::ReputationUpdate(u));
            }
            warn(world.log, round, Some(l), w);
        }
        if let Some(edge) = gossip_edge_shape(backend, listener_desc, &mut world.dbs[l], &record, enc.scenario, reputation_enabled)? {
            world.log.push(
                round,
                EventBody::Edge(EdgeEvent {
                    owner: l,
                    target: record.target,
                    decision: edge.decision,
                    cause: EdgeCause::Gossip,
                    cause_seq: seq,
                    changed: edge.changed,
                }),
            );
            warn(world.log, round, Some(l), edge.warnings);
        }
        out.push(exchange);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::model::{Disposition, Reputation};
    use crate::scenarios::ScenarioAction;

    fn agents(n: usize) -> Vec<AgentDescription> {
        (0..n).map(|i| AgentDescription::new(i, Disposition::Prosocial, "p".into()).unwrap()).collect()
    }

    fn enc(a: AgentId, b: AgentId) -> Encounter<f64> {
        Encounter {
            seq: 0,
            round: 1,
            a,
            b,
            scenario: ScenarioId::Pd,
            action_a: ScenarioAction::Cooperate,
            action_b: ScenarioAction::Defect,
            transcript: None,
            payoff_a: 0.0,
            payoff_b: 5.0,
        }
    }

    #[test]
    fn conversation_names_target_once() {
        let t = conversation_text(2, 4, &enc(2, 5), 5);
        assert_eq!(t, "Agent-2 to Agent-4: when I met Agent-5 in round 1, they defected.");
    }

    #[test]
    fn no_listener_in_pair_world() {
        let b = ScriptedBackend::<f64>::default();
        let a = agents(2);
        let db = RepuDatabase::new(0);
        let (l, _) = gossip_choice(&b, &a[0], &db, 1, 2, ScenarioId::Pd, true).unwrap();
        assert_eq!(l, None);
    }

    #[test]
    fn fallback_listener_lowest_id() {
        let b = ScriptedBackend::<f64>::default();
        let a = agents(5);
        let db = RepuDatabase::new(2);
        let (l, _) = gossip_choice(&b, &a[2], &db, 0, 5, ScenarioId::Pd, true).unwrap();
        assert_eq!(l, Some(1));
    }

    #[test]
    fn single_exchange_pipeline() {
        let b = ScriptedBackend::<f64>::default();
        let a = agents(4);
        let mut dbs: Vec<RepuDatabase<f64>> = (0..4).map(RepuDatabase::new).collect();
        let mut mems: Vec<AgentMemory> = (0..4).map(AgentMemory::new).collect();
        let mut log = EventLog::new();
        // agent 0 met 1; only 0's view of 1 is strong enough to gossip about
        dbs[0].upsert_peer_reputation(Reputation::new(1, ScenarioId::Pd, "player", "bad", -0.7, 0).unwrap()).unwrap();
        dbs[1].upsert_peer_reputation(Reputation::new(0, ScenarioId::Pd, "player", "ok", 0.5, 0).unwrap()).unwrap();
        dbs[0].add_edge(3).unwrap();
        dbs[0].upsert_peer_reputation(Reputation::new(3, ScenarioId::Pd, "player", "friend", 0.9, 0).unwrap()).unwrap();
        dbs[3].upsert_peer_reputation(Reputation::new(0, ScenarioId::Pd, "player", "friend", 0.9, 0).unwrap()).unwrap();
        dbs[3].add_edge(1).unwrap();
        let encs = vec![enc(0, 1)];
        let mut world = GossipWorld {
            agents: &a,
            dbs: &mut dbs,
            memories: &mut mems,
            log: &mut log,
        };
        let ex = run_gossip_phase(&b, &mut world, 1, &encs, true).unwrap();
        assert_eq!(ex.len(), 1);
        let e = &ex[0];
        assert_eq!((e.gossiper, e.listener, e.target, e.valence), (0, 3, 1, Valence::Negative));
        // gossiper rated 0.9 and an empty log: 3 + 1 + 1
        assert_eq!(e.credibility, 5);
        let kinds: Vec<_> = log.events().iter().map(|e| e.kind()).collect();
        assert_eq!(kinds, vec!["gossip", "reputation_update", "edge"]);
        // first-time negative gossip at full weight: -0.5, below the sever level
        assert_eq!(dbs[3].peer_mu(1, ScenarioId::Pd), Some(-0.5));
        assert!(!dbs[3].has_edge(1));
        assert_eq!(mems[3].events().len(), 1);
    }

    #[test]
    fn quiet_round() {
        let b = ScriptedBackend::<f64>::default();
        let a = agents(3);
        let mut dbs: Vec<RepuDatabase<f64>> = (0..3).map(RepuDatabase::new).collect();
        dbs[0].upsert_peer_reputation(Reputation::new(1, ScenarioId::Pd, "player", "meh", 0.1, 0).unwrap()).unwrap();
        dbs[1].upsert_peer_reputation(Reputation::new(0, ScenarioId::Pd, "player", "meh", 0.5, 0).unwrap()).unwrap();
        let mut mems: Vec<AgentMemory> = (0..3).map(AgentMemory::new).collect();
        let mut log = EventLog::new();
        let mut world = GossipWorld {
            agents: &a,
            dbs: &mut dbs,
            memories: &mut mems,
            log: &mut log,
        };
        let ex = run_gossip_phase(&b, &mut world, 1, &[enc(0, 1)], true).unwrap();
        assert!(ex.is_empty());
        assert!(log.is_empty());
    }
}
