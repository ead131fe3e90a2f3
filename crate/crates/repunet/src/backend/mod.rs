//! Pluggable judgment providers.
//!
//! Every decision an agent makes is phrased as a [`JudgmentRequest`] and
//! answered by a [`JudgmentBackend`]. Responses from any backend pass through
//! [`validate_response`] before the engine applies them.

mod parse;
mod remote;
mod scripted;
mod template;

pub use parse::parse_completion;
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use scripted::{ScriptedBackend, ScriptedPolicyConfig};
pub use template::{kind_of_template, render_prompt, template_name, TemplateError, TemplateSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{clamp_mu, AgentDescription, AgentId, EdgeDecision, Encounter, GossipRecord, Reputation, ScenarioId, Valence};
use crate::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentKind {
    ShapeRepuPeer,
    ShapeRepuSelf,
    ShapeRepuGossip,
    InteractEdge,
    GossipEdge,
    GossipWill,
    GossipChoice,
    GossipIdentify,
    GossipEvaluate,
    ScenarioAction,
}

impl JudgmentKind {
    pub const ALL: [JudgmentKind; 10] = [
        JudgmentKind::ShapeRepuPeer,
        JudgmentKind::ShapeRepuSelf,
        JudgmentKind::ShapeRepuGossip,
        JudgmentKind::InteractEdge,
        JudgmentKind::GossipEdge,
        JudgmentKind::GossipWill,
        JudgmentKind::GossipChoice,
        JudgmentKind::GossipIdentify,
        JudgmentKind::GossipEvaluate,
        JudgmentKind::ScenarioAction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JudgmentKind::ShapeRepuPeer => "shape_repu_peer",
            JudgmentKind::ShapeRepuSelf => "shape_repu_self",
            JudgmentKind::ShapeRepuGossip => "shape_repu_gossip",
            JudgmentKind::InteractEdge => "interact_edge",
            JudgmentKind::GossipEdge => "gossip_edge",
            JudgmentKind::GossipWill => "gossip_will",
            JudgmentKind::GossipChoice => "gossip_choice",
            JudgmentKind::GossipIdentify => "gossip_identify",
            JudgmentKind::GossipEvaluate => "gossip_evaluate",
            JudgmentKind::ScenarioAction => "scenario_action",
        }
    }

    /// Kinds whose prompt differs depending on whether a prior reputation exists.
    pub fn has_prior_variant(self) -> bool {
        matches!(
            self,
            JudgmentKind::ShapeRepuPeer | JudgmentKind::ShapeRepuSelf | JudgmentKind::ShapeRepuGossip | JudgmentKind::InteractEdge | JudgmentKind::GossipEdge
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ListenerCandidate<F> {
    pub id: AgentId,
    pub mu: Option<F>,
    pub out_neighbor: bool,
}

/// Which move of a scenario is being decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", bound = "F: Scalar")]
pub enum ActionStep<F> {
    PdMove,
    Participation,
    TradePropose,
    TradeInvest { split: F, balance: F },
    TradeAllocate { split: F, invested: F },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "F: Scalar")]
pub enum JudgmentContext<F> {
    ShapeRepuPeer {
        encounter: Encounter<F>,
        target: AgentId,
        prior: Option<Reputation<F>>,
    },
    ShapeRepuSelf {
        encounter: Encounter<F>,
        prior: Option<Reputation<F>>,
    },
    ShapeRepuGossip {
        record: GossipRecord,
        prior: Option<Reputation<F>>,
    },
    InteractEdge {
        encounter: Encounter<F>,
        counterpart: AgentId,
        reputation: Option<Reputation<F>>,
    },
    GossipEdge {
        record: GossipRecord,
        reputation: Option<Reputation<F>>,
    },
    GossipWill {
        encounter: Encounter<F>,
        counterpart: AgentId,
        reputation: Option<Reputation<F>>,
    },
    GossipChoice {
        target: AgentId,
        candidates: Vec<ListenerCandidate<F>>,
    },
    GossipIdentify {
        gossiper: AgentId,
        conversation: String,
    },
    GossipEvaluate {
        gossiper: AgentId,
        summary: String,
        gossiper_reputation: Option<Reputation<F>>,
        p_unreliable: F,
    },
    ScenarioAction {
        step: ActionStep<F>,
        round: u32,
        counterpart: Option<AgentId>,
        reputation: Option<Reputation<F>>,
        reputation_enabled: bool,
        recent_valences: Vec<i8>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct JudgmentRequest<F> {
    pub agent: AgentDescription,
    pub scenario: ScenarioId,
    pub context: JudgmentContext<F>,
}

impl<F: Scalar> JudgmentRequest<F> {
    pub fn kind(&self) -> JudgmentKind {
        match &self.context {
            JudgmentContext::ShapeRepuPeer { .. } => JudgmentKind::ShapeRepuPeer,
            JudgmentContext::ShapeRepuSelf { .. } => JudgmentKind::ShapeRepuSelf,
            JudgmentContext::ShapeRepuGossip { .. } => JudgmentKind::ShapeRepuGossip,
            JudgmentContext::InteractEdge { .. } => JudgmentKind::InteractEdge,
            JudgmentContext::GossipEdge { .. } => JudgmentKind::GossipEdge,
            JudgmentContext::GossipWill { .. } => JudgmentKind::GossipWill,
            JudgmentContext::GossipChoice { .. } => JudgmentKind::GossipChoice,
            JudgmentContext::GossipIdentify { .. } => JudgmentKind::GossipIdentify,
            JudgmentContext::GossipEvaluate { .. } => JudgmentKind::GossipEvaluate,
            JudgmentContext::ScenarioAction { .. } => JudgmentKind::ScenarioAction,
        }
    }

    /// Prior reputation for kinds that have one; `None` otherwise.
    pub fn prior(&self) -> Option<&Reputation<F>> {
        match &self.context {
            JudgmentContext::ShapeRepuPeer { prior, .. }
            | JudgmentContext::ShapeRepuSelf { prior, .. }
            | JudgmentContext::ShapeRepuGossip { prior, .. } => prior.as_ref(),
            JudgmentContext::InteractEdge { reputation, .. }
            | JudgmentContext::GossipEdge { reputation, .. }
            | JudgmentContext::GossipWill { reputation, .. }
            | JudgmentContext::ScenarioAction { reputation, .. } => reputation.as_ref(),
            JudgmentContext::GossipEvaluate { gossiper_reputation, .. } => gossiper_reputation.as_ref(),
            _ => None,
        }
    }
}

/// Scenario move chosen by a backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "choice", rename_all = "snake_case", bound = "F: Scalar")]
pub enum ActionChoice<F> {
    Cooperate,
    Defect,
    Participate,
    NotParticipate,
    Propose { split: F },
    Accept { amount: F },
    Reject,
    Honor,
    Deviate { returned: F },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "F: Scalar")]
pub enum JudgmentResponse<F> {
    Reputation { content: String, mu: F },
    NoUpdate,
    Edge { decision: EdgeDecision },
    Will { decision: EdgeDecision },
    Listener { id: AgentId },
    Summary { target: AgentId, summary: String, valence: Valence },
    Credibility { likert: i64 },
    Action { choice: ActionChoice<F> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed completion: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("response does not fit the request: {0}")]
    InvalidResponse(String),
    #[error("could not identify a single third-party target")]
    Unidentifiable,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Malformed(_))
    }
}

pub trait JudgmentBackend<F: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn judge(&self, req: &JudgmentRequest<F>) -> Result<JudgmentResponse<F>, BackendError>;
}

/// Checks request preconditions shared by all backends.
pub fn validate_request<F: Scalar>(req: &JudgmentRequest<F>) -> Result<(), BackendError> {
    let me = req.agent.id;
    let bad = |m: String| Err(BackendError::InvalidRequest(m));
    if req.agent.persona_text.trim().is_empty() {
        return bad(format!("{} has an empty persona", req.agent.name));
    }
    match &req.context {
        JudgmentContext::ShapeRepuPeer { encounter, target, .. } => {
            if !encounter.involves(me) || encounter.counterpart(me) != Some(*target) {
                return bad(format!("{} did not meet agent {target} in this encounter", req.agent.name));
            }
        }
        JudgmentContext::ShapeRepuSelf { encounter, .. } => {
            if !encounter.involves(me) {
                return bad(format!("{} is not part of the encounter", req.agent.name));
            }
        }
        JudgmentContext::InteractEdge { encounter, counterpart, .. } | JudgmentContext::GossipWill { encounter, counterpart, .. } => {
            if encounter.counterpart(me) != Some(*counterpart) {
                return bad(format!("{} did not meet agent {counterpart}", req.agent.name));
            }
        }
        JudgmentContext::ShapeRepuGossip { record, .. } | JudgmentContext::GossipEdge { record, .. } => {
            if record.target == me || record.gossiper == me {
                return bad("gossip must concern a third party".into());
            }
        }
        JudgmentContext::GossipChoice { target, candidates } => {
            if candidates.is_empty() {
                return bad("no eligible listener".into());
            }
            if candidates.iter().any(|c| c.id == me || c.id == *target) {
                return bad("listener candidates must exclude the gossiper and the target".into());
            }
        }
        JudgmentContext::GossipIdentify { conversation, .. } => {
            if conversation.trim().is_empty() {
                return bad("empty conversation".into());
            }
        }
        JudgmentContext::GossipEvaluate { p_unreliable, .. } => {
            if !(*p_unreliable >= F::zero() && *p_unreliable <= F::one()) {
                return bad("unreliable fraction outside [0, 1]".into());
            }
        }
        JudgmentContext::ScenarioAction { .. } => {}
    }
    Ok(())
}

/// Checks a response against its request. Out-of-range scores and Likert
/// ratings are clamped and reported as warnings; anything else that does
/// not fit is an error.
pub fn validate_response<F: Scalar>(req: &JudgmentRequest<F>, resp: JudgmentResponse<F>) -> Result<(JudgmentResponse<F>, Vec<String>), BackendError> {
    let mut warnings = Vec::new();
    let kind = req.kind();
    let mismatch = || BackendError::InvalidResponse(format!("unexpected response for {}", kind.as_str()));
    let out = match (kind, resp) {
        (JudgmentKind::ShapeRepuPeer | JudgmentKind::ShapeRepuSelf | JudgmentKind::ShapeRepuGossip, JudgmentResponse::Reputation { content, mu }) => {
            let clamped = clamp_mu(mu).map_err(|e| BackendError::Malformed(e.to_string()))?;
            if clamped != mu {
                warnings.push(format!("{}: score {mu} clamped to {clamped}", kind.as_str()));
            }
            let content = if content.trim().is_empty() { format!("score {clamped}") } else { content };
            JudgmentResponse::Reputation { content, mu: clamped }
        }
        (JudgmentKind::ShapeRepuGossip, JudgmentResponse::NoUpdate) => JudgmentResponse::NoUpdate,
        (JudgmentKind::InteractEdge | JudgmentKind::GossipEdge, r @ JudgmentResponse::Edge { .. }) => r,
        (JudgmentKind::GossipWill, r @ JudgmentResponse::Will { .. }) => r,
        (JudgmentKind::GossipChoice, JudgmentResponse::Listener { id }) => {
            let JudgmentContext::GossipChoice { candidates, .. } = &req.context else {
                return Err(mismatch());
            };
            if !candidates.iter().any(|c| c.id == id) {
                return Err(BackendError::InvalidResponse(format!("listener {id} is not an eligible candidate")));
            }
            JudgmentResponse::Listener { id }
        }
        (JudgmentKind::GossipIdentify, JudgmentResponse::Summary { target, summary, valence }) => {
            let JudgmentContext::GossipIdentify { gossiper, .. } = &req.context else {
                return Err(mismatch());
            };
            if target == *gossiper || target == req.agent.id {
                return Err(BackendError::Unidentifiable);
            }
            JudgmentResponse::Summary { target, summary, valence }
        }
        (JudgmentKind::GossipEvaluate, JudgmentResponse::Credibility { likert }) => {
            let c = likert.clamp(1, 5);
            if c != likert {
                warnings.push(format!("gossip_evaluate: credibility {likert} clamped to {c}"));
            }
            JudgmentResponse::Credibility { likert: c }
        }
        (JudgmentKind::ScenarioAction, JudgmentResponse::Action { choice }) => {
            let JudgmentContext::ScenarioAction { step, .. } = &req.context else {
                return Err(mismatch());
            };
            validate_choice(step, &choice)?;
            JudgmentResponse::Action { choice }
        }
        _ => return Err(mismatch()),
    };
    Ok((out, warnings))
}

fn validate_choice<F: Scalar>(step: &ActionStep<F>, choice: &ActionChoice<F>) -> Result<(), BackendError> {
    let bad = |m: &str| Err(BackendError::InvalidResponse(m.to_string()));
    match (step, choice) {
        (ActionStep::PdMove, ActionChoice::Cooperate | ActionChoice::Defect) => Ok(()),
        (ActionStep::Participation, ActionChoice::Participate | ActionChoice::NotParticipate) => Ok(()),
        (ActionStep::TradePropose, ActionChoice::Propose { split }) => {
            if *split >= F::zero() && *split <= F::one() {
                Ok(())
            } else {
                bad("split outside [0, 1]")
            }
        }
        (ActionStep::TradeInvest { balance, .. }, ActionChoice::Accept { amount }) => {
            if *amount >= F::zero() && *amount <= *balance {
                Ok(())
            } else {
                bad("investment outside the investor's holdings")
            }
        }
        (ActionStep::TradeInvest { .. }, ActionChoice::Reject) => Ok(()),
        (ActionStep::TradeAllocate { .. }, ActionChoice::Honor) => Ok(()),
        (ActionStep::TradeAllocate { invested, .. }, ActionChoice::Deviate { returned }) => {
            if *returned >= F::zero() && *returned <= *invested * lit(2.0) {
                Ok(())
            } else {
                bad("returned amount outside the doubled pool")
            }
        }
        _ => bad("choice does not match the scenario step"),
    }
}

/// Runs request validation, the backend call and response validation.
pub fn judge_checked<F: Scalar>(backend: &dyn JudgmentBackend<F>, req: &JudgmentRequest<F>) -> Result<(JudgmentResponse<F>, Vec<String>), BackendError> {
    validate_request(req)?;
    let raw = backend.judge(req)?;
    validate_response(req, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Disposition;
    use crate::scenarios::ScenarioAction;

    fn agent(id: AgentId) -> AgentDescription {
        AgentDescription::new(id, Disposition::Prosocial, "cares about the group".into()).unwrap()
    }

    fn enc() -> Encounter<f64> {
        Encounter {
            seq: 1,
            round: 1,
            a: 0,
            b: 1,
            scenario: ScenarioId::Pd,
            action_a: ScenarioAction::Cooperate,
            action_b: ScenarioAction::Defect,
            transcript: None,
            payoff_a: 0.0,
            payoff_b: 5.0,
        }
    }

    #[test]
    fn clamps_with_warning() {
        let req = JudgmentRequest {
            agent: agent(0),
            scenario: ScenarioId::Pd,
            context: JudgmentContext::ShapeRepuPeer { encounter: enc(), target: 1, prior: None },
        };
        let (r, w) = validate_response(&req, JudgmentResponse::Reputation { content: "x".into(), mu: 1.7 }).unwrap();
        assert_eq!(r, JudgmentResponse::Reputation { content: "x".into(), mu: 1.0 });
        assert_eq!(w.len(), 1);
        assert!(validate_response(&req, JudgmentResponse::Reputation { content: "x".into(), mu: f64::NAN }).is_err());
        assert!(validate_response(&req, JudgmentResponse::NoUpdate).is_err());
    }

    #[test]
    fn likert_clamped() {
        let req = JudgmentRequest::<f64> {
            agent: agent(0),
            scenario: ScenarioId::Pd,
            context: JudgmentContext::GossipEvaluate {
                gossiper: 1,
                summary: "s".into(),
                gossiper_reputation: None,
                p_unreliable: 0.0,
            },
        };
        let (r, w) = validate_response(&req, JudgmentResponse::Credibility { likert: 9 }).unwrap();
        assert_eq!(r, JudgmentResponse::Credibility { likert: 5 });
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn listener_must_be_candidate() {
        let req = JudgmentRequest::<f64> {
            agent: agent(2),
            scenario: ScenarioId::Pd,
            context: JudgmentContext::GossipChoice {
                target: 0,
                candidates: vec![ListenerCandidate { id: 1, mu: None, out_neighbor: false }],
            },
        };
        assert!(validate_response(&req, JudgmentResponse::Listener { id: 1 }).is_ok());
        assert!(validate_response(&req, JudgmentResponse::Listener { id: 3 }).is_err());
    }

    #[test]
    fn request_preconditions() {
        let req = JudgmentRequest {
            agent: agent(5),
            scenario: ScenarioId::Pd,
            context: JudgmentContext::ShapeRepuSelf { encounter: enc(), prior: None },
        };
        assert!(validate_request(&req).is_err());
        let mut a = agent(0);
        a.persona_text.clear();
        let req = JudgmentRequest {
            agent: a,
            scenario: ScenarioId::Pd,
            context: JudgmentContext::ShapeRepuSelf { encounter: enc(), prior: None },
        };
        assert!(validate_request(&req).is_err());
    }

    #[test]
    fn trade_choices_checked() {
        let step = ActionStep::TradeAllocate { split: 0.5, invested: 2.0 };
        assert!(validate_choice(&step, &ActionChoice::Deviate { returned: 4.0 }).is_ok());
        assert!(validate_choice(&step, &ActionChoice::Deviate { returned: 4.5 }).is_err());
        assert!(validate_choice(&ActionStep::<f64>::PdMove, &ActionChoice::Honor).is_err());
        let step = ActionStep::TradeInvest { split: 0.5, balance: 3.0 };
        assert!(validate_choice(&step, &ActionChoice::Accept { amount: 3.5 }).is_err());
    }
}
