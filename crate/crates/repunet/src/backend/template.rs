//! Prompt templates with `{{placeholder}}` markers.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{ActionStep, JudgmentContext, JudgmentKind, JudgmentRequest};
use crate::model::{agent_name, Encounter, Reputation};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("no template named `{0}`")]
    Missing(String),
    #[error("template `{template}` needs a value for `{placeholder}`")]
    MissingValue { template: String, placeholder: String },
    #[error("empty value for `{0}`")]
    EmptyValue(&'static str),
    #[error("reading templates: {0}")]
    Io(String),
}

const BUILTIN: &[(&str, &str)] = &[
    ("shape_repu_peer.first", include_str!("../../templates/shape_repu_peer.first.txt")),
    ("shape_repu_peer.prior", include_str!("../../templates/shape_repu_peer.prior.txt")),
    ("shape_repu_self.first", include_str!("../../templates/shape_repu_self.first.txt")),
    ("shape_repu_self.prior", include_str!("../../templates/shape_repu_self.prior.txt")),
    ("shape_repu_gossip.first", include_str!("../../templates/shape_repu_gossip.first.txt")),
    ("shape_repu_gossip.prior", include_str!("../../templates/shape_repu_gossip.prior.txt")),
    ("interact_edge.first", include_str!("../../templates/interact_edge.first.txt")),
    ("interact_edge.prior", include_str!("../../templates/interact_edge.prior.txt")),
    ("gossip_edge.first", include_str!("../../templates/gossip_edge.first.txt")),
    ("gossip_edge.prior", include_str!("../../templates/gossip_edge.prior.txt")),
    ("gossip_will", include_str!("../../templates/gossip_will.txt")),
    ("gossip_choice", include_str!("../../templates/gossip_choice.txt")),
    ("gossip_identify", include_str!("../../templates/gossip_identify.txt")),
    ("gossip_evaluate", include_str!("../../templates/gossip_evaluate.txt")),
    ("scenario_action", include_str!("../../templates/scenario_action.txt")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            templates: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn empty() -> Self {
        TemplateSet { templates: BTreeMap::new() }
    }

    /// Built-in templates overridden by every `<name>.txt` file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| TemplateError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
            set.templates.insert(stem.to_string(), text);
        }
        Ok(set)
    }

    pub fn insert(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(name.into(), text.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([a-z_]+)\s*\}\}").expect("static regex"))
}

/// Template name used for a request, including the prior/no-prior variant.
pub fn template_name<F: Scalar>(req: &JudgmentRequest<F>) -> String {
    let kind = req.kind();
    if kind.has_prior_variant() {
        let variant = if req.prior().is_some() { "prior" } else { "first" };
        format!("{}.{variant}", kind.as_str())
    } else {
        kind.as_str().to_string()
    }
}

fn describe_encounter<F: Scalar>(enc: &Encounter<F>, me: usize) -> String {
    let other = enc.counterpart(me).unwrap_or(enc.b);
    let mine = enc.action_of(me).map(|a| a.verb()).unwrap_or("took part");
    let theirs = enc.action_of(other).map(|a| a.verb()).unwrap_or("took part");
    format!(
        "in round {} you ({}) {mine}; {} {theirs}. Your payoff was {}, theirs was {}.",
        enc.round,
        enc.role_of(me),
        agent_name(other),
        if me == enc.a { enc.payoff_a } else { enc.payoff_b },
        if me == enc.a { enc.payoff_b } else { enc.payoff_a },
    )
}

fn put_prior<F: Scalar>(vals: &mut BTreeMap<&'static str, String>, key_mu: &'static str, key_content: &'static str, r: Option<&Reputation<F>>) {
    if let Some(r) = r {
        vals.insert(key_mu, format!("{:.3}", r.mu.to_f64().unwrap_or(0.0)));
        vals.insert(key_content, r.content.clone());
    }
}

fn values<F: Scalar>(req: &JudgmentRequest<F>) -> Result<BTreeMap<&'static str, String>, TemplateError> {
    let me = req.agent.id;
    if req.agent.persona_text.trim().is_empty() {
        return Err(TemplateError::EmptyValue("persona"));
    }
    let mut v = BTreeMap::new();
    v.insert("agent_name", req.agent.name.clone());
    v.insert("persona", req.agent.persona_text.trim().to_string());
    v.insert("scenario", req.scenario.to_string());
    let opinion = |r: Option<&Reputation<F>>, who: usize| match r {
        Some(r) => format!("Your current view of {}: \"{}\" (score {:.3}).", agent_name(who), r.content, r.mu.to_f64().unwrap_or(0.0)),
        None => format!("You keep no rating of {}.", agent_name(who)),
    };
    match &req.context {
        JudgmentContext::ShapeRepuPeer { encounter, target, prior } => {
            v.insert("target_name", agent_name(*target));
            v.insert("encounter", describe_encounter(encounter, me));
            put_prior(&mut v, "prior_mu", "prior_content", prior.as_ref());
        }
        JudgmentContext::ShapeRepuSelf { encounter, prior } => {
            v.insert("encounter", describe_encounter(encounter, me));
            put_prior(&mut v, "prior_mu", "prior_content", prior.as_ref());
        }
        JudgmentContext::ShapeRepuGossip { record, prior } => {
            v.insert("target_name", agent_name(record.target));
            v.insert("gossiper_name", agent_name(record.gossiper));
            v.insert("summary", record.summary.clone());
            v.insert("credibility", record.credibility.to_string());
            put_prior(&mut v, "prior_mu", "prior_content", prior.as_ref());
        }
        JudgmentContext::InteractEdge { encounter, counterpart, reputation } => {
            v.insert("counterpart_name", agent_name(*counterpart));
            v.insert("encounter", describe_encounter(encounter, me));
            put_prior(&mut v, "reputation_mu", "reputation_content", reputation.as_ref());
        }
        JudgmentContext::GossipEdge { record, reputation } => {
            v.insert("target_name", agent_name(record.target));
            v.insert("gossiper_name", agent_name(record.gossiper));
            v.insert("summary", record.summary.clone());
            v.insert("credibility", record.credibility.to_string());
            put_prior(&mut v, "reputation_mu", "reputation_content", reputation.as_ref());
        }
        JudgmentContext::GossipWill { encounter, counterpart, reputation } => {
            v.insert("counterpart_name", agent_name(*counterpart));
            v.insert("encounter", describe_encounter(encounter, me));
            v.insert("reputation_line", opinion(reputation.as_ref(), *counterpart));
        }
        JudgmentContext::GossipChoice { target, candidates } => {
            v.insert("target_name", agent_name(*target));
            let lines: Vec<String> = candidates
                .iter()
                .map(|c| {
                    let score = c.mu.map(|m| format!("score {:.3}", m.to_f64().unwrap_or(0.0))).unwrap_or_else(|| "no rating".into());
                    let net = if c.out_neighbor { ", on your list" } else { "" };
                    format!("- {} ({score}{net})", agent_name(c.id))
                })
                .collect();
            v.insert("candidates", lines.join("\n"));
        }
        JudgmentContext::GossipIdentify { gossiper, conversation } => {
            v.insert("gossiper_name", agent_name(*gossiper));
            v.insert("conversation", conversation.clone());
        }
        JudgmentContext::GossipEvaluate {
            gossiper,
            summary,
            gossiper_reputation,
            p_unreliable,
        } => {
            v.insert("gossiper_name", agent_name(*gossiper));
            v.insert("summary", summary.clone());
            v.insert("gossiper_line", opinion(gossiper_reputation.as_ref(), *gossiper));
            v.insert("p_unreliable", format!("{:.2}", p_unreliable.to_f64().unwrap_or(0.0)));
        }
        JudgmentContext::ScenarioAction {
            step,
            round,
            counterpart,
            reputation,
            recent_valences,
            ..
        } => {
            let partner = counterpart.map(agent_name).unwrap_or_else(|| "nobody in particular".into());
            v.insert("round", round.to_string());
            v.insert(
                "reputation_line",
                match counterpart {
                    Some(c) => opinion(reputation.as_ref(), *c),
                    None => "You have no partner this round.".into(),
                },
            );
            let good = recent_valences.iter().filter(|x| **x > 0).count();
            v.insert(
                "memory_line",
                format!("Of the last {} things you saw or heard, {good} were cooperative.", recent_valences.len()),
            );
            let (situation, question, format) = match step {
                ActionStep::PdMove => (
                    format!("You are paired with {partner}. Both cooperating pays 3 each, both defecting 1 each; a lone defector gets 5 and the other 0."),
                    "Do you cooperate (C) or defect (D)?".to_string(),
                    "Action: C or D".to_string(),
                ),
                ActionStep::Participation => (
                    format!("You talked with {partner}. Taking part costs you something but benefits everyone."),
                    "Will you participate until your next decision point?".to_string(),
                    "Decision: Y or N".to_string(),
                ),
                ActionStep::TradePropose => (
                    format!("You are the trustee and {partner} is the investor. Whatever they invest doubles in your hands."),
                    "What share of the doubled amount do you promise to give back?".to_string(),
                    "Split: <number between 0 and 1>".to_string(),
                ),
                ActionStep::TradeInvest { split, balance } => (
                    format!(
                        "You are the investor and {partner} is the trustee. They promise to return {:.2} of the doubled investment. You hold {:.2} units.",
                        split.to_f64().unwrap_or(0.0),
                        balance.to_f64().unwrap_or(0.0)
                    ),
                    "Do you accept, and if so how much do you invest?".to_string(),
                    "Invest: <amount> or Invest: reject".to_string(),
                ),
                ActionStep::TradeAllocate { split, invested } => (
                    format!(
                        "You are the trustee. {partner} invested {:.2}, which doubled to {:.2}. You promised to return {:.2} of it.",
                        invested.to_f64().unwrap_or(0.0),
                        (*invested + *invested).to_f64().unwrap_or(0.0),
                        split.to_f64().unwrap_or(0.0)
                    ),
                    "How much do you actually return?".to_string(),
                    "Return: <amount>".to_string(),
                ),
            };
            v.insert("situation", situation);
            v.insert("question", question);
            v.insert("answer_format", format);
        }
    }
    Ok(v)
}

/// Fills the template for `req`. Fails if the template is absent or uses a
/// placeholder the request cannot supply.
pub fn render_prompt<F: Scalar>(req: &JudgmentRequest<F>, templates: &TemplateSet) -> Result<String, TemplateError> {
    let name = template_name(req);
    let text = templates.get(&name).ok_or_else(|| TemplateError::Missing(name.clone()))?;
    let vals = values(req)?;
    let mut missing = None;
    let out = placeholder().replace_all(text, |c: &regex::Captures<'_>| match vals.get(&c[1]) {
        Some(v) => v.clone(),
        None => {
            missing.get_or_insert_with(|| c[1].to_string());
            String::new()
        }
    });
    if let Some(p) = missing {
        return Err(TemplateError::MissingValue {
            template: name,
            placeholder: p,
        });
    }
    Ok(out.into_owned())
}

/// Kind for a template name, used when loading custom sets.
pub fn kind_of_template(name: &str) -> Option<JudgmentKind> {
    let base = name.split('.').next()?;
    JudgmentKind::ALL.into_iter().find(|k| k.as_str() == base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentDescription, Disposition, ScenarioId};
    use crate::scenarios::ScenarioAction;

    fn enc() -> Encounter<f64> {
        Encounter {
            seq: 3,
            round: 2,
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

    fn req(ctx: JudgmentContext<f64>) -> JudgmentRequest<f64> {
        JudgmentRequest {
            agent: AgentDescription::new(0, Disposition::Prosocial, "You care about how the whole group fares.".into()).unwrap(),
            scenario: ScenarioId::Pd,
            context: ctx,
        }
    }

    #[test]
    fn builtin_covers_every_kind() {
        let set = TemplateSet::builtin();
        for k in JudgmentKind::ALL {
            if k.has_prior_variant() {
                assert!(set.get(&format!("{}.first", k.as_str())).is_some());
                assert!(set.get(&format!("{}.prior", k.as_str())).is_some());
            } else {
                assert!(set.get(k.as_str()).is_some());
            }
        }
        assert!(set.names().all(|n| kind_of_template(n).is_some()));
    }

    #[test]
    fn variant_follows_prior() {
        let r = req(JudgmentContext::ShapeRepuPeer { encounter: enc(), target: 1, prior: None });
        assert_eq!(template_name(&r), "shape_repu_peer.first");
        let prior = Reputation::new(1, ScenarioId::Pd, "player", "earlier", 0.5, 1).unwrap();
        let r = req(JudgmentContext::ShapeRepuPeer {
            encounter: enc(),
            target: 1,
            prior: Some(prior),
        });
        assert_eq!(template_name(&r), "shape_repu_peer.prior");
        let text = render_prompt(&r, &TemplateSet::builtin()).unwrap();
        assert!(text.contains("earlier") && !text.contains("{{"));
    }

    #[test]
    fn self_prompt_carries_description() {
        let r = req(JudgmentContext::ShapeRepuSelf { encounter: enc(), prior: None });
        let text = render_prompt(&r, &TemplateSet::builtin()).unwrap();
        assert!(text.contains("You care about how the whole group fares."));
    }

    #[test]
    fn errors() {
        let mut r = req(JudgmentContext::ShapeRepuSelf { encounter: enc(), prior: None });
        r.agent.persona_text = String::new();
        assert_eq!(render_prompt(&r, &TemplateSet::builtin()), Err(TemplateError::EmptyValue("persona")));
        let mut set = TemplateSet::empty();
        let r = req(JudgmentContext::ShapeRepuSelf { encounter: enc(), prior: None });
        assert!(matches!(render_prompt(&r, &set), Err(TemplateError::Missing(_))));
        set.insert("shape_repu_self.first", "{{agent_name}} {{nonsense}}");
        assert_eq!(
            render_prompt(&r, &set),
            Err(TemplateError::MissingValue {
                template: "shape_repu_self.first".into(),
                placeholder: "nonsense".into()
            })
        );
    }
}
