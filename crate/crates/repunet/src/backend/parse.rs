//! Extracts structured decisions from free-text completions.

use std::sync::OnceLock;

use regex::Regex;

use super::scripted::mentioned_agents;
use super::{ActionChoice, ActionStep, BackendError, JudgmentContext, JudgmentKind, JudgmentRequest, JudgmentResponse};
use crate::metrics::{LexiconClassifier, SentimentClassifier};
use crate::model::EdgeDecision;
use crate::{lit, Scalar};

struct Patterns {
    score: Regex,
    impression: Regex,
    decision: Regex,
    listener: Regex,
    target: Regex,
    summary: Regex,
    credibility: Regex,
    action: Regex,
    split: Regex,
    invest: Regex,
    ret: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    const NUM: &str = r"([-+]?(?:\d+\.?\d*|\.\d+))";
    P.get_or_init(|| {
        let re = |s: String| Regex::new(&s).expect("static regex");
        Patterns {
            score: re(format!(r"(?i)score\W{{0,3}}\s*[:=]?\s*\**\s*(none|{NUM})")),
            impression: re(r"(?im)^\W*impression\W*:\s*(.+)$".into()),
            decision: re(r"(?i)decision\W{0,3}\s*[:=]\s*\**\s*(yes|no|y|n)\b".into()),
            listener: re(r"(?i)listener\W{0,3}\s*[:=]\s*\**\s*agent-(\d+)".into()),
            target: re(r"(?i)target\W{0,3}\s*[:=]\s*\**\s*agent-(\d+)".into()),
            summary: re(r"(?im)^\W*summary\W*:\s*(.+)$".into()),
            credibility: re(r"(?i)credibility\W{0,3}\s*[:=]\s*\**\s*(-?\d+)".into()),
            action: re(r"(?i)action\W{0,3}\s*[:=]\s*\**\s*(cooperate|defect|c|d)\b".into()),
            split: re(format!(r"(?i)split\W{{0,3}}\s*[:=]\s*\**\s*{NUM}")),
            invest: re(format!(r"(?i)invest\W{{0,3}}\s*[:=]\s*\**\s*(reject|{NUM})")),
            ret: re(format!(r"(?i)return\W{{0,3}}\s*[:=]\s*\**\s*{NUM}")),
        }
    })
}

fn malformed(kind: JudgmentKind, what: &str) -> BackendError {
    BackendError::Malformed(format!("{}: {what}", kind.as_str()))
}

fn number<F: Scalar>(s: &str, kind: JudgmentKind) -> Result<F, BackendError> {
    let x: f64 = s.parse().map_err(|_| malformed(kind, "unreadable number"))?;
    F::from_f64(x).filter(|v| v.is_finite()).ok_or_else(|| malformed(kind, "non-finite number"))
}

fn yes_no(s: &str) -> EdgeDecision {
    EdgeDecision::from_bool(s.to_ascii_lowercase().starts_with('y'))
}

/// Parses a completion for `req`. Tolerates surrounding prose but fails
/// when the expected answer line cannot be found.
pub fn parse_completion<F: Scalar>(req: &JudgmentRequest<F>, raw: &str) -> Result<JudgmentResponse<F>, BackendError> {
    let kind = req.kind();
    if raw.trim().is_empty() {
        return Err(malformed(kind, "empty completion"));
    }
    let p = patterns();
    match &req.context {
        JudgmentContext::ShapeRepuPeer { .. } | JudgmentContext::ShapeRepuSelf { .. } | JudgmentContext::ShapeRepuGossip { .. } => {
            let cap = p.score.captures(raw).ok_or_else(|| malformed(kind, "no score"))?;
            if cap[1].eq_ignore_ascii_case("none") {
                return if kind == JudgmentKind::ShapeRepuGossip {
                    Ok(JudgmentResponse::NoUpdate)
                } else {
                    Err(malformed(kind, "score withheld"))
                };
            }
            let mu = number(&cap[1], kind)?;
            let content = p
                .impression
                .captures(raw)
                .map(|c| c[1].trim().to_string())
                .unwrap_or_else(|| raw.lines().next().unwrap_or("").trim().to_string());
            Ok(JudgmentResponse::Reputation { content, mu })
        }
        JudgmentContext::InteractEdge { .. } | JudgmentContext::GossipEdge { .. } => {
            let cap = p.decision.captures(raw).ok_or_else(|| malformed(kind, "no Y/N decision"))?;
            Ok(JudgmentResponse::Edge { decision: yes_no(&cap[1]) })
        }
        JudgmentContext::GossipWill { .. } => {
            let cap = p.decision.captures(raw).ok_or_else(|| malformed(kind, "no Y/N decision"))?;
            Ok(JudgmentResponse::Will { decision: yes_no(&cap[1]) })
        }
        JudgmentContext::GossipChoice { target, .. } => {
            if let Some(cap) = p.listener.captures(raw) {
                let id = cap[1].parse().map_err(|_| malformed(kind, "bad agent id"))?;
                return Ok(JudgmentResponse::Listener { id });
            }
            match mentioned_agents(raw, &[req.agent.id, *target])[..] {
                [id] => Ok(JudgmentResponse::Listener { id }),
                _ => Err(malformed(kind, "no single listener named")),
            }
        }
        JudgmentContext::GossipIdentify { gossiper, .. } => {
            let target = match p.target.captures(raw) {
                Some(cap) => cap[1].parse().map_err(|_| malformed(kind, "bad agent id"))?,
                None => match mentioned_agents(raw, &[req.agent.id, *gossiper])[..] {
                    [id] => id,
                    _ => return Err(BackendError::Unidentifiable),
                },
            };
            let summary = p.summary.captures(raw).map(|c| c[1].trim().to_string()).unwrap_or_else(|| raw.trim().to_string());
            let (valence, _) = LexiconClassifier::default().classify(&summary);
            Ok(JudgmentResponse::Summary { target, summary, valence })
        }
        JudgmentContext::GossipEvaluate { .. } => {
            let cap = p.credibility.captures(raw).ok_or_else(|| malformed(kind, "no credibility rating"))?;
            let likert = cap[1].parse().map_err(|_| malformed(kind, "bad rating"))?;
            Ok(JudgmentResponse::Credibility { likert })
        }
        JudgmentContext::ScenarioAction { step, .. } => {
            let choice = match *step {
                ActionStep::PdMove => {
                    let cap = p.action.captures(raw).ok_or_else(|| malformed(kind, "no C/D action"))?;
                    if cap[1].to_ascii_lowercase().starts_with('c') {
                        ActionChoice::Cooperate
                    } else {
                        ActionChoice::Defect
                    }
                }
                ActionStep::Participation => {
                    let cap = p.decision.captures(raw).ok_or_else(|| malformed(kind, "no Y/N decision"))?;
                    if yes_no(&cap[1]).is_yes() {
                        ActionChoice::Participate
                    } else {
                        ActionChoice::NotParticipate
                    }
                }
                ActionStep::TradePropose => {
                    let cap = p.split.captures(raw).ok_or_else(|| malformed(kind, "no split"))?;
                    ActionChoice::Propose { split: number(&cap[1], kind)? }
                }
                ActionStep::TradeInvest { .. } => {
                    let cap = p.invest.captures(raw).ok_or_else(|| malformed(kind, "no investment"))?;
                    if cap[1].eq_ignore_ascii_case("reject") {
                        ActionChoice::Reject
                    } else {
                        ActionChoice::Accept { amount: number(&cap[1], kind)? }
                    }
                }
                ActionStep::TradeAllocate { split, invested } => {
                    let cap = p.ret.captures(raw).ok_or_else(|| malformed(kind, "no returned amount"))?;
                    let returned: F = number(&cap[1], kind)?;
                    let agreed = split * (invested + invested);
                    if returned >= agreed - agreed * lit(1e-12) && returned <= invested + invested {
                        ActionChoice::Honor
                    } else {
                        ActionChoice::Deviate { returned }
                    }
                }
            };
            Ok(JudgmentResponse::Action { choice })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentDescription, Disposition, Encounter, ScenarioId, Valence};
    use crate::scenarios::ScenarioAction;

    fn enc() -> Encounter<f64> {
        Encounter {
            seq: 0,
            round: 1,
            a: 0,
            b: 1,
            scenario: ScenarioId::Pd,
            action_a: ScenarioAction::Cooperate,
            action_b: ScenarioAction::Cooperate,
            transcript: None,
            payoff_a: 3.0,
            payoff_b: 3.0,
        }
    }

    fn req(ctx: JudgmentContext<f64>) -> JudgmentRequest<f64> {
        JudgmentRequest {
            agent: AgentDescription::new(0, Disposition::Prosocial, "p".into()).unwrap(),
            scenario: ScenarioId::Pd,
            context: ctx,
        }
    }

    #[test]
    fn score_extraction() {
        let r = req(JudgmentContext::ShapeRepuPeer { encounter: enc(), target: 1, prior: None });
        let got = parse_completion(&r, "Thinking it over...\nImpression: reliable partner\nscore: 0.75\n").unwrap();
        assert_eq!(
            got,
            JudgmentResponse::Reputation {
                content: "reliable partner".into(),
                mu: 0.75
            }
        );
        assert!(matches!(parse_completion(&r, "Score = -0.2"), Ok(JudgmentResponse::Reputation { mu, .. }) if mu == -0.2));
        assert!(parse_completion(&r, "I like them a lot").is_err());
        assert!(parse_completion(&r, "   ").is_err());
    }

    #[test]
    fn decision_extraction() {
        let r = req(JudgmentContext::InteractEdge {
            encounter: enc(),
            counterpart: 1,
            reputation: None,
        });
        assert_eq!(
            parse_completion(&r, "After reflection.\nDecision: Y").unwrap(),
            JudgmentResponse::Edge { decision: EdgeDecision::Y }
        );
        assert_eq!(
            parse_completion(&r, "**Decision:** no").unwrap(),
            JudgmentResponse::Edge { decision: EdgeDecision::N }
        );
        assert!(parse_completion(&r, "maybe").is_err());
    }

    #[test]
    fn identify_and_rating() {
        let r = req(JudgmentContext::GossipIdentify {
            gossiper: 2,
            conversation: "c".into(),
        });
        let got = parse_completion(&r, "Target: Agent-5\nSummary: Agent-5 betrayed Agent-2 and defected.").unwrap();
        assert!(matches!(got, JudgmentResponse::Summary { target: 5, valence: Valence::Negative, .. }));
        let r = req(JudgmentContext::GossipEvaluate {
            gossiper: 2,
            summary: "s".into(),
            gossiper_reputation: None,
            p_unreliable: 0.0,
        });
        assert_eq!(parse_completion(&r, "Credibility: 4").unwrap(), JudgmentResponse::Credibility { likert: 4 });
    }

    #[test]
    fn allocation_classified() {
        let ctx = |step| JudgmentContext::ScenarioAction {
            step,
            round: 1,
            counterpart: Some(1),
            reputation: None,
            reputation_enabled: true,
            recent_valences: vec![],
        };
        let r = req(ctx(ActionStep::TradeAllocate { split: 0.5, invested: 4.0 }));
        assert_eq!(parse_completion(&r, "Return: 4").unwrap(), JudgmentResponse::Action { choice: ActionChoice::Honor });
        assert_eq!(
            parse_completion(&r, "Return: 1.5").unwrap(),
            JudgmentResponse::Action {
                choice: ActionChoice::Deviate { returned: 1.5 }
            }
        );
        let r = req(ctx(ActionStep::TradeInvest { split: 0.5, balance: 10.0 }));
        assert_eq!(parse_completion(&r, "Invest: reject").unwrap(), JudgmentResponse::Action { choice: ActionChoice::Reject });
        let r = req(ctx(ActionStep::PdMove));
        assert_eq!(parse_completion(&r, "Action: D").unwrap(), JudgmentResponse::Action { choice: ActionChoice::Defect });
    }
}
