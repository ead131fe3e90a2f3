//! Reputation shaping from encounters and gossip.

use serde::{Deserialize, Serialize};

use crate::backend::{judge_checked, BackendError, JudgmentBackend, JudgmentContext, JudgmentRequest, JudgmentResponse};
use crate::model::{AgentDescription, AgentId, Encounter, EventSeq, GossipRecord, RepuDatabase, Reputation, ScenarioId};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateCause {
    DirectEncounter,
    Gossip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ReputationUpdate<F> {
    pub owner: AgentId,
    pub target: AgentId,
    pub before: Option<Reputation<F>>,
    pub after: Reputation<F>,
    pub cause: UpdateCause,
    pub cause_seq: EventSeq,
}

/// Result of a shaping call: the committed update (if any) plus validator warnings.
pub type Shaped<F> = (Option<ReputationUpdate<F>>, Vec<String>);

fn scenario_role(s: ScenarioId) -> &'static str {
    match s {
        ScenarioId::Pd => "player",
        ScenarioId::Participation => "participant",
        ScenarioId::Trading => "trader",
    }
}

fn expect_reputation<F: Scalar>(resp: JudgmentResponse<F>) -> Result<Option<(String, F)>, BackendError> {
    match resp {
        JudgmentResponse::Reputation { content, mu } => Ok(Some((content, mu))),
        JudgmentResponse::NoUpdate => Ok(None),
        other => Err(BackendError::InvalidResponse(format!("expected a reputation, got {other:?}"))),
    }
}

/// `observer` re-rates its counterpart after `enc`. The new value is stamped
/// with `seq`, the sequence number the caller will give the update event.
pub fn shape_repu_peer<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    observer: &AgentDescription,
    db: &mut RepuDatabase<F>,
    enc: &Encounter<F>,
    seq: EventSeq,
) -> Result<Shaped<F>, BackendError> {
    let target = enc
        .counterpart(observer.id)
        .ok_or_else(|| BackendError::InvalidRequest(format!("{} is not part of the encounter", observer.name)))?;
    let prior = db.peer(target, enc.scenario).cloned();
    let req = JudgmentRequest {
        agent: observer.clone(),
        scenario: enc.scenario,
        context: JudgmentContext::ShapeRepuPeer {
            encounter: enc.clone(),
            target,
            prior: prior.clone(),
        },
    };
    let (resp, warnings) = judge_checked(backend, &req)?;
    let Some((content, mu)) = expect_reputation(resp)? else {
        return Err(BackendError::InvalidResponse("peer reputation cannot be declined".into()));
    };
    let after = Reputation::new(target, enc.scenario, enc.role_of(target), content, mu, seq).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    db.upsert_peer_reputation(after.clone()).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok((
        Some(ReputationUpdate {
            owner: observer.id,
            target,
            before: prior,
            after,
            cause: UpdateCause::DirectEncounter,
            cause_seq: enc.seq,
        }),
        warnings,
    ))
}

pub fn shape_repu_self<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    owner: &AgentDescription,
    db: &mut RepuDatabase<F>,
    enc: &Encounter<F>,
    seq: EventSeq,
) -> Result<Shaped<F>, BackendError> {
    if db.owner() != owner.id {
        return Err(BackendError::InvalidRequest("description does not belong to the database owner".into()));
    }
    let prior = db.self_reputation().cloned();
    let req = JudgmentRequest {
        agent: owner.clone(),
        scenario: enc.scenario,
        context: JudgmentContext::ShapeRepuSelf {
            encounter: enc.clone(),
            prior: prior.clone(),
        },
    };
    let (resp, warnings) = judge_checked(backend, &req)?;
    let Some((content, mu)) = expect_reputation(resp)? else {
        return Err(BackendError::InvalidResponse("self reputation cannot be declined".into()));
    };
    let after = Reputation::new(owner.id, enc.scenario, enc.role_of(owner.id), content, mu, seq).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    db.set_self_reputation(after.clone()).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok((
        Some(ReputationUpdate {
            owner: owner.id,
            target: owner.id,
            before: prior,
            after,
            cause: UpdateCause::DirectEncounter,
            cause_seq: enc.seq,
        }),
        warnings,
    ))
}

/// Listener re-rates the gossip target. Returns no update when the backend
/// declines (for the scripted policy: credibility 2 or lower).
pub fn shape_repu_gossip<F: Scalar>(
    backend: &dyn JudgmentBackend<F>,
    listener: &AgentDescription,
    db: &mut RepuDatabase<F>,
    record: &GossipRecord,
    scenario: ScenarioId,
    cause_seq: EventSeq,
    seq: EventSeq,
) -> Result<Shaped<F>, BackendError> {
    if record.target == listener.id {
        return Err(BackendError::InvalidRequest("listener cannot be the gossip target".into()));
    }
    let prior = db.peer(record.target, scenario).cloned();
    let req = JudgmentRequest {
        agent: listener.clone(),
        scenario,
        context: JudgmentContext::ShapeRepuGossip {
            record: record.clone(),
            prior: prior.clone(),
        },
    };
    let (resp, warnings) = judge_checked(backend, &req)?;
    let Some((content, mu)) = expect_reputation(resp)? else {
        return Ok((None, warnings));
    };
    let role = prior.as_ref().map(|r| r.role.clone()).unwrap_or_else(|| scenario_role(scenario).to_string());
    let after = Reputation::new(record.target, scenario, role, content, mu, seq).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    db.upsert_peer_reputation(after.clone()).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok((
        Some(ReputationUpdate {
            owner: listener.id,
            target: record.target,
            before: prior,
            after,
            cause: UpdateCause::Gossip,
            cause_seq,
        }),
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::model::{Disposition, Valence};
    use crate::scenarios::ScenarioAction;

    fn who(id: AgentId) -> AgentDescription {
        AgentDescription::new(id, Disposition::Prosocial, "persona".into()).unwrap()
    }

    fn enc(a_coop: bool, b_coop: bool) -> Encounter<f64> {
        let act = |c| if c { ScenarioAction::Cooperate } else { ScenarioAction::Defect };
        Encounter {
            seq: 7,
            round: 1,
            a: 0,
            b: 1,
            scenario: ScenarioId::Pd,
            action_a: act(a_coop),
            action_b: act(b_coop),
            transcript: None,
            payoff_a: 0.0,
            payoff_b: 0.0,
        }
    }

    fn seed_peer(db: &mut RepuDatabase<f64>, target: AgentId, mu: f64) {
        db.upsert_peer_reputation(Reputation::new(target, ScenarioId::Pd, "player", "prior", mu, 0).unwrap()).unwrap();
    }

    #[test]
    fn peer_examples() {
        let b = ScriptedBackend::<f64>::default();
        let mut db = RepuDatabase::new(0);
        let (u, _) = shape_repu_peer(&b, &who(0), &mut db, &enc(true, true), 8).unwrap();
        let u = u.unwrap();
        assert_eq!((u.after.mu, u.cause_seq, u.after.updated_at), (0.5, 7, 8));
        assert!(u.before.is_none());

        seed_peer(&mut db, 1, -1.0);
        let (u, _) = shape_repu_peer(&b, &who(0), &mut db, &enc(true, false), 9).unwrap();
        assert_eq!(u.unwrap().after.mu, -1.0);

        seed_peer(&mut db, 1, 0.9);
        let (u, _) = shape_repu_peer(&b, &who(0), &mut db, &enc(true, true), 10).unwrap();
        assert_eq!(u.unwrap().after.mu, 1.0);
        assert_eq!(db.peer_mu(1, ScenarioId::Pd), Some(1.0));
    }

    #[test]
    fn self_examples() {
        let b = ScriptedBackend::<f64>::default();
        let mut db = RepuDatabase::new(0);
        let (u, _) = shape_repu_self(&b, &who(0), &mut db, &enc(true, false), 1).unwrap();
        assert_eq!(u.unwrap().after.mu, 0.5);
        let (u, _) = shape_repu_self(&b, &who(0), &mut db, &enc(false, false), 2).unwrap();
        assert_eq!(u.unwrap().after.mu, 0.5 - 0.2);
        db.set_self_reputation(Reputation::new(0, ScenarioId::Pd, "player", "top", 1.0, 0).unwrap()).unwrap();
        let (u, _) = shape_repu_self(&b, &who(0), &mut db, &enc(true, true), 3).unwrap();
        assert_eq!(u.unwrap().after.mu, 1.0);
    }

    #[test]
    fn gossip_examples() {
        let b = ScriptedBackend::<f64>::default();
        let rec = |cred, v| GossipRecord::new(0, 5, 2, "s".into(), cred, v, 3).unwrap();
        let mut db = RepuDatabase::new(0);
        let (u, _) = shape_repu_gossip(&b, &who(0), &mut db, &rec(5, Valence::Positive), ScenarioId::Pd, 3, 4).unwrap();
        assert_eq!(u.unwrap().after.mu, 0.5 * 1.0 * 1.0);

        seed_peer(&mut db, 5, 0.4);
        let (u, _) = shape_repu_gossip(&b, &who(0), &mut db, &rec(4, Valence::Negative), ScenarioId::Pd, 3, 5).unwrap();
        let u = u.unwrap();
        assert_eq!(u.after.mu, 0.4 + 0.2 * -1.0 * 0.5);
        assert_eq!(u.cause, UpdateCause::Gossip);

        let before = db.clone();
        let (u, _) = shape_repu_gossip(&b, &who(0), &mut db, &rec(2, Valence::Negative), ScenarioId::Pd, 3, 6).unwrap();
        assert!(u.is_none());
        assert_eq!(db, before);
    }
}
