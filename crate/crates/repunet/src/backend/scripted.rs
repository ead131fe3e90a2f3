//! Deterministic rule-based stand-in for model judgments.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ActionChoice, ActionStep, BackendError, JudgmentBackend, JudgmentContext, JudgmentRequest, JudgmentResponse};
use crate::metrics::{LexiconClassifier, SentimentClassifier};
use crate::model::{agent_name, clamp_mu, AgentId, Disposition, EdgeDecision, Reputation, Valence};
use crate::{lit, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct ScriptedPolicyConfig<F> {
    pub delta: F,
    pub first_mu: F,
    pub edge_threshold: F,
    pub sever_mu: F,
    pub sever_likert_min: u8,
    pub gossip_mu_trigger: F,
    pub coop_trust_threshold: F,
    pub distrust_threshold: F,
    /// Observations consulted by prosocial agents when reputations are off.
    pub memory_window: usize,
    /// Cooperative share of those observations needed to keep cooperating.
    pub memory_trust_threshold: F,
    pub trade_split: F,
    pub invest_fraction: F,
}

impl<F: Scalar> Default for ScriptedPolicyConfig<F> {
    fn default() -> Self {
        ScriptedPolicyConfig {
            delta: lit(0.2),
            first_mu: lit(0.5),
            edge_threshold: lit(0.0),
            sever_mu: lit(-0.3),
            sever_likert_min: 4,
            gossip_mu_trigger: lit(0.6),
            coop_trust_threshold: lit(0.3),
            distrust_threshold: lit(-0.3),
            memory_window: 10,
            memory_trust_threshold: lit(0.5),
            trade_split: lit(0.5),
            invest_fraction: lit(0.5),
        }
    }
}

impl<F: Scalar> ScriptedPolicyConfig<F> {
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let in_unit = |x: F| x >= -F::one() && x <= F::one();
        let in_01 = |x: F| x >= F::zero() && x <= F::one();
        if !(self.delta > F::zero()) || !self.delta.is_finite() {
            errs.push("policy.delta must be positive".to_string());
        }
        for (name, v) in [
            ("first_mu", self.first_mu),
            ("edge_threshold", self.edge_threshold),
            ("sever_mu", self.sever_mu),
            ("gossip_mu_trigger", self.gossip_mu_trigger),
            ("coop_trust_threshold", self.coop_trust_threshold),
            ("distrust_threshold", self.distrust_threshold),
        ] {
            if !in_unit(v) {
                errs.push(format!("policy.{name} must lie in [-1, 1]"));
            }
        }
        for (name, v) in [
            ("memory_trust_threshold", self.memory_trust_threshold),
            ("trade_split", self.trade_split),
            ("invest_fraction", self.invest_fraction),
        ] {
            if !in_01(v) {
                errs.push(format!("policy.{name} must lie in [0, 1]"));
            }
        }
        if !(1..=5).contains(&self.sever_likert_min) {
            errs.push("policy.sever_likert_min must lie in 1..=5".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// First observation sets `first_mu * v`; later ones move by `delta * v`.
    pub fn step_mu(&self, prior: Option<F>, v: F, weight: F) -> F {
        let raw = match prior {
            None => self.first_mu * v * weight,
            Some(mu) => mu + self.delta * v * weight,
        };
        clamp_mu(raw).expect("finite update")
    }

    /// Credibility from the gossiper's standing and the listener's share of
    /// unreliable past gossip.
    pub fn likert(&self, gossiper_mu: Option<F>, p_unreliable: F) -> i64 {
        let mu = gossiper_mu.unwrap_or_else(F::zero);
        let mut l = 3i64;
        if mu >= lit(0.5) {
            l += 1;
        }
        if mu < F::zero() {
            l -= 1;
        }
        if p_unreliable < lit(0.1) {
            l += 1;
        }
        if p_unreliable > lit(0.5) {
            l -= 1;
        }
        l.clamp(1, 5)
    }

    pub fn gossip_weight(credibility: u8) -> Option<F> {
        if credibility <= 2 {
            None
        } else {
            Some((lit::<F>(credibility as f64) - lit(3.0)).abs() / lit(2.0))
        }
    }

    /// Whether an agent with this disposition makes the cooperative move.
    pub fn cooperates(&self, disposition: Disposition, reputation: Option<F>, reputation_enabled: bool, recent: &[i8]) -> bool {
        match (disposition, reputation_enabled) {
            (Disposition::Prosocial, true) => !matches!(reputation, Some(mu) if mu < self.distrust_threshold),
            (Disposition::SelfInterested, true) => matches!(reputation, Some(mu) if mu >= self.coop_trust_threshold),
            (Disposition::Prosocial, false) => {
                let start = recent.len().saturating_sub(self.memory_window);
                let window = &recent[start..];
                if window.is_empty() {
                    return true;
                }
                let good = window.iter().filter(|v| **v > 0).count();
                lit::<F>(good as f64) / lit::<F>(window.len() as f64) >= self.memory_trust_threshold
            }
            (Disposition::SelfInterested, false) => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend<F> {
    pub policy: ScriptedPolicyConfig<F>,
}

impl<F: Scalar> Default for ScriptedBackend<F> {
    fn default() -> Self {
        ScriptedBackend::new(ScriptedPolicyConfig::default())
    }
}

impl<F: Scalar> ScriptedBackend<F> {
    pub fn new(policy: ScriptedPolicyConfig<F>) -> Self {
        ScriptedBackend { policy }
    }

    fn reputation(&self, prior: Option<&Reputation<F>>, subject: AgentId, v: Valence, weight: F, what: &str) -> JudgmentResponse<F> {
        let mu = self.policy.step_mu(prior.map(|r| r.mu), v.value(), weight);
        let word = match v {
            Valence::Positive => "positive",
            Valence::Neutral => "neutral",
            Valence::Negative => "negative",
        };
        JudgmentResponse::Reputation {
            content: format!("{} left a {word} impression {what}", agent_name(subject)),
            mu,
        }
    }
}

fn agent_ref() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Agent-(\d+)").expect("static regex"))
}

/// Distinct agents named in `text` other than the excluded ones.
pub(crate) fn mentioned_agents(text: &str, exclude: &[AgentId]) -> Vec<AgentId> {
    let mut ids: Vec<AgentId> = agent_ref()
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .filter(|id| !exclude.contains(id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

impl<F: Scalar> JudgmentBackend<F> for ScriptedBackend<F> {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn judge(&self, req: &JudgmentRequest<F>) -> Result<JudgmentResponse<F>, BackendError> {
        let p = &self.policy;
        let me = req.agent.id;
        let missing = |who: AgentId| BackendError::InvalidRequest(format!("agent {who} is not part of the encounter"));
        Ok(match &req.context {
            JudgmentContext::ShapeRepuPeer { encounter, target, prior } => {
                let v = encounter.valence_of(*target).ok_or_else(|| missing(*target))?;
                self.reputation(prior.as_ref(), *target, v, F::one(), &format!("in round {}", encounter.round))
            }
            JudgmentContext::ShapeRepuSelf { encounter, prior } => {
                let v = encounter.valence_of(me).ok_or_else(|| missing(me))?;
                self.reputation(prior.as_ref(), me, v, F::one(), &format!("on others in round {}", encounter.round))
            }
            JudgmentContext::ShapeRepuGossip { record, prior } => match ScriptedPolicyConfig::<F>::gossip_weight(record.credibility) {
                None => JudgmentResponse::NoUpdate,
                Some(w) => self.reputation(prior.as_ref(), record.target, record.valence, w, &format!("according to {}", agent_name(record.gossiper))),
            },
            JudgmentContext::InteractEdge { encounter, counterpart, reputation } => {
                let keep = match reputation {
                    Some(r) => r.mu >= p.edge_threshold,
                    None => encounter.valence_of(*counterpart).ok_or_else(|| missing(*counterpart))? == Valence::Positive,
                };
                JudgmentResponse::Edge {
                    decision: EdgeDecision::from_bool(keep),
                }
            }
            JudgmentContext::GossipEdge { record, reputation } => {
                let credible = record.credibility >= p.sever_likert_min;
                let damning = match reputation {
                    Some(r) => r.mu < p.sever_mu,
                    None => record.valence == Valence::Negative,
                };
                JudgmentResponse::Edge {
                    decision: EdgeDecision::from_bool(!(damning && credible)),
                }
            }
            JudgmentContext::GossipWill { encounter, counterpart, reputation } => {
                let strength = match reputation {
                    Some(r) => r.mu.abs(),
                    None => encounter.valence_of(*counterpart).ok_or_else(|| missing(*counterpart))?.value::<F>().abs(),
                };
                JudgmentResponse::Will {
                    decision: EdgeDecision::from_bool(strength >= p.gossip_mu_trigger),
                }
            }
            JudgmentContext::GossipChoice { candidates, .. } => {
                let mut best: Option<(AgentId, Option<F>)> = None;
                for c in candidates.iter().filter(|c| c.out_neighbor) {
                    let better = match best {
                        None => true,
                        Some((id, mu)) => c.mu > mu || (c.mu == mu && c.id < id),
                    };
                    if better {
                        best = Some((c.id, c.mu));
                    }
                }
                let id = match best {
                    Some((id, _)) => id,
                    None => candidates.iter().map(|c| c.id).min().ok_or_else(|| BackendError::InvalidRequest("no eligible listener".into()))?,
                };
                JudgmentResponse::Listener { id }
            }
            JudgmentContext::GossipIdentify { gossiper, conversation } => {
                let named = mentioned_agents(conversation, &[*gossiper, me]);
                let [target] = named[..] else {
                    return Err(BackendError::Unidentifiable);
                };
                let (valence, _) = LexiconClassifier::default().classify(conversation);
                let verb = match valence {
                    Valence::Positive => "cooperated",
                    Valence::Negative => "defected",
                    Valence::Neutral => "was mentioned",
                };
                JudgmentResponse::Summary {
                    target,
                    summary: format!("{} reports {} {verb}", agent_name(*gossiper), agent_name(target)),
                    valence,
                }
            }
            JudgmentContext::GossipEvaluate {
                gossiper_reputation,
                p_unreliable,
                ..
            } => JudgmentResponse::Credibility {
                likert: p.likert(gossiper_reputation.as_ref().map(|r| r.mu), *p_unreliable),
            },
            JudgmentContext::ScenarioAction {
                step,
                reputation,
                reputation_enabled,
                recent_valences,
                ..
            } => {
                let coop = p.cooperates(req.agent.disposition, reputation.as_ref().map(|r| r.mu), *reputation_enabled, recent_valences);
                let choice = match *step {
                    ActionStep::PdMove if coop => ActionChoice::Cooperate,
                    ActionStep::PdMove => ActionChoice::Defect,
                    ActionStep::Participation if coop => ActionChoice::Participate,
                    ActionStep::Participation => ActionChoice::NotParticipate,
                    ActionStep::TradePropose => ActionChoice::Propose { split: p.trade_split },
                    ActionStep::TradeInvest { balance, .. } if coop => ActionChoice::Accept {
                        amount: balance * p.invest_fraction,
                    },
                    ActionStep::TradeInvest { .. } => ActionChoice::Reject,
                    ActionStep::TradeAllocate { .. } if coop => ActionChoice::Honor,
                    ActionStep::TradeAllocate { .. } => ActionChoice::Deviate { returned: F::zero() },
                };
                JudgmentResponse::Action { choice }
            }
        })
    }
}
