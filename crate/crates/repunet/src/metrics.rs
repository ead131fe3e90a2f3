//! Analyses recomputed from event logs: rate series, reputation/behavior
//! regression, gossip frequency, sentiment and network folds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventBody, SimEvent};
use crate::model::{AgentId, Encounter, Valence};
use crate::network::{snapshot_from_parts, NetworkGraph, NetworkSnapshot};
use crate::reputation::UpdateCause;
use crate::scenarios::encounter_signals;
use crate::{lit, Scalar};

pub const DEFAULT_SHUFFLES: usize = 10_000;
pub const DEFAULT_PERM_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("regression needs at least 3 points (got {0})")]
    TooFewPoints(usize),
    #[error("regression is undefined: all x values are equal")]
    DegenerateX,
    #[error("non-finite value in regression input")]
    NonFinite,
}

/// Share of cooperative signals among the given encounters; 0 when empty.
pub fn round_rate<F: Scalar>(encounters: &[Encounter<F>]) -> F {
    let signals: Vec<bool> = encounters.iter().flat_map(|e| encounter_signals(e).into_iter().map(|(_, s)| s)).collect();
    if signals.is_empty() {
        return F::zero();
    }
    lit::<F>(signals.iter().filter(|s| **s).count() as f64) / lit(signals.len() as f64)
}

/// Highest round number present in the log.
pub fn rounds_in<F: Scalar>(events: &[SimEvent<F>]) -> u32 {
    events.iter().map(|e| e.round).max().unwrap_or(0)
}

/// Number of agents: one past the highest id listed in any round marker.
pub fn agents_in<F: Scalar>(events: &[SimEvent<F>]) -> usize {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Round(r) => r.pairs.iter().flat_map(|&(a, b)| [a, b]).chain(r.unmatched.iter().copied()).max(),
            _ => None,
        })
        .max()
        .map_or(0, |m| m + 1)
}

fn encounters<F: Scalar>(events: &[SimEvent<F>]) -> impl Iterator<Item = &Encounter<F>> {
    events.iter().filter_map(|e| match &e.body {
        EventBody::Encounter(enc) => Some(enc),
        _ => None,
    })
}

/// Per-round rate, one value for every round in the log.
pub fn rate_series<F: Scalar>(events: &[SimEvent<F>]) -> Vec<F> {
    let rounds = rounds_in(events) as usize;
    let mut by_round: Vec<Vec<Encounter<F>>> = vec![Vec::new(); rounds];
    for enc in encounters(events) {
        by_round[enc.round as usize - 1].push(enc.clone());
    }
    by_round.iter().map(|encs| round_rate(encs)).collect()
}

/// Final peer μ per (owner, target), folded from reputation updates up to
/// and including `round` (all rounds when `None`).
pub fn final_reputations<F: Scalar>(events: &[SimEvent<F>], round: Option<u32>) -> BTreeMap<(AgentId, AgentId), F> {
    let mut out = BTreeMap::new();
    for e in events.iter().filter(|e| round.is_none_or(|r| e.round <= r)) {
        if let EventBody::ReputationUpdate(u) = &e.body {
            if u.owner != u.target {
                out.insert((u.owner, u.target), u.after.mu);
            }
        }
    }
    out
}

/// Mean of every peer's μ toward `target`, if anyone rated it.
pub fn mean_incoming_mu<F: Scalar>(scores: &BTreeMap<(AgentId, AgentId), F>, target: AgentId) -> Option<F> {
    let xs: Vec<F> = scores.iter().filter(|((_, t), _)| *t == target).map(|(_, mu)| *mu).collect();
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().copied().fold(F::zero(), |a, b| a + b) / lit(xs.len() as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct AgentPoint<F> {
    pub agent: AgentId,
    /// Mean incoming peer μ at the end of the run.
    pub x: F,
    /// Share of cooperative signals in the final window.
    pub y: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct BehaviorPoints<F> {
    pub points: Vec<AgentPoint<F>>,
    /// Agents nobody rated, or without signals in the window.
    pub excluded: Vec<AgentId>,
    pub warning: Option<String>,
}

/// One point per agent: (mean incoming μ, cooperative share over the last
/// `last_k` rounds).
pub fn behavior_reputation_points<F: Scalar>(events: &[SimEvent<F>], last_k: u32) -> BehaviorPoints<F> {
    let rounds = rounds_in(events);
    let warning = (rounds < last_k).then(|| format!("run has {rounds} rounds, fewer than {last_k}; using all of them"));
    let from = rounds.saturating_sub(last_k) + 1;
    let n = agents_in(events);
    let mut signals: Vec<(usize, usize)> = vec![(0, 0); n];
    for enc in encounters(events).filter(|e| e.round >= from) {
        for (id, ok) in encounter_signals(enc) {
            signals[id].1 += 1;
            if ok {
                signals[id].0 += 1;
            }
        }
    }
    let scores = final_reputations(events, None);
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (id, &(good, total)) in signals.iter().enumerate() {
        match mean_incoming_mu(&scores, id) {
            Some(x) if total > 0 => points.push(AgentPoint {
                agent: id,
                x,
                y: lit::<F>(good as f64) / lit(total as f64),
            }),
            _ => excluded.push(id),
        }
    }
    BehaviorPoints { points, excluded, warning }
}

/// Agents that produced at least one signal and never a cooperative one.
pub fn always_defectors<F: Scalar>(events: &[SimEvent<F>]) -> Vec<AgentId> {
    let mut seen: BTreeMap<AgentId, bool> = BTreeMap::new();
    for enc in encounters(events) {
        for (id, ok) in encounter_signals(enc) {
            *seen.entry(id).or_insert(true) &= !ok;
        }
    }
    seen.into_iter().filter(|(_, never)| *never).map(|(id, _)| id).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RegressionResult<F> {
    pub slope: F,
    pub intercept: F,
    pub r: F,
    pub p_perm: F,
    pub n: usize,
    pub shuffles: usize,
}

fn pearson<F: Scalar>(xs: &[F], ys: &[F], mx: F, my: F) -> (F, F, F) {
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    let mut syy = F::zero();
    for (x, y) in xs.iter().zip(ys) {
        let dx = *x - mx;
        let dy = *y - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    (sxx, sxy, syy)
}

fn corr<F: Scalar>(sxx: F, sxy: F, syy: F) -> F {
    if syy == F::zero() {
        F::zero()
    } else {
        (sxy / (sxx * syy).sqrt()).max(-F::one()).min(F::one())
    }
}

fn mean<F: Scalar>(v: &[F]) -> F {
    v.iter().copied().fold(F::zero(), |a, b| a + b) / lit(v.len() as f64)
}

/// Least-squares line with the default permutation test.
pub fn linear_regression<F: Scalar>(points: &[(F, F)]) -> Result<RegressionResult<F>, MetricsError> {
    linear_regression_with(points, DEFAULT_SHUFFLES, DEFAULT_PERM_SEED)
}

/// Least-squares line; `p_perm` is the share of `shuffles` seeded
/// permutations of y whose |r| reaches the observed one, as (c + 1)/(N + 1).
pub fn linear_regression_with<F: Scalar>(points: &[(F, F)], shuffles: usize, seed: u64) -> Result<RegressionResult<F>, MetricsError> {
    let n = points.len();
    if n < 3 {
        return Err(MetricsError::TooFewPoints(n));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let xs: Vec<F> = points.iter().map(|p| p.0).collect();
    let mut ys: Vec<F> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let (sxx, sxy, syy) = pearson(&xs, &ys, mx, my);
    if sxx == F::zero() {
        return Err(MetricsError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r = corr(sxx, sxy, syy);
    let p_perm = if syy == F::zero() || shuffles == 0 {
        F::one()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = r.abs() - lit(1e-12);
        let mut hits = 0usize;
        for _ in 0..shuffles {
            ys.shuffle(&mut rng);
            let (_, sxy_p, _) = pearson(&xs, &ys, mx, my);
            if corr(sxx, sxy_p, syy).abs() >= target {
                hits += 1;
            }
        }
        lit::<F>((hits + 1) as f64) / lit((shuffles + 1) as f64)
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r,
        p_perm,
        n,
        shuffles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GossipPoint<F> {
    pub agent: AgentId,
    /// Exchanges with this agent as the target.
    pub count: usize,
    pub mean_incoming_mu: Option<F>,
}

pub fn gossip_frequency_points<F: Scalar>(events: &[SimEvent<F>]) -> Vec<GossipPoint<F>> {
    let n = agents_in(events);
    let mut counts = vec![0usize; n];
    for e in events {
        if let EventBody::Gossip(g) = &e.body {
            counts[g.target] += 1;
        }
    }
    let scores = final_reputations(events, None);
    counts
        .into_iter()
        .enumerate()
        .map(|(agent, count)| GossipPoint {
            agent,
            count,
            mean_incoming_mu: mean_incoming_mu(&scores, agent),
        })
        .collect()
}

/// Maps free text to a valence and a confidence in [0, 1].
pub trait SentimentClassifier {
    fn classify(&self, text: &str) -> (Valence, f64);
}

/// Signed word lists with single-word negation ("not fair" counts as negative).
#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    positive: BTreeSet<&'static str>,
    negative: BTreeSet<&'static str>,
    negators: BTreeSet<&'static str>,
}

const POSITIVE: &[&str] = &[
    "cooperated", "cooperate", "cooperative", "cooperating", "honored", "honoured", "honest", "fair", "trustworthy", "reliable", "helpful", "generous",
    "kind", "good", "great", "participated", "participating", "joined", "contributed", "invested", "accepted", "kept", "returned", "friendly", "trust",
];

const NEGATIVE: &[&str] = &[
    "defected", "defect", "defecting", "cheated", "cheat", "deviated", "betrayed", "exploited", "selfish", "unfair", "dishonest", "untrustworthy",
    "unreliable", "lazy", "bad", "abstained", "refused", "rejected", "stole", "greedy", "avoid", "shirked",
];

const NEGATORS: &[&str] = &["not", "never", "no", "didn't", "did't", "don't", "wasn't", "isn't", "won't", "hardly"];

impl Default for LexiconClassifier {
    fn default() -> Self {
        LexiconClassifier {
            positive: POSITIVE.iter().copied().collect(),
            negative: NEGATIVE.iter().copied().collect(),
            negators: NEGATORS.iter().copied().collect(),
        }
    }
}

impl SentimentClassifier for LexiconClassifier {
    fn classify(&self, text: &str) -> (Valence, f64) {
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower.split(|c: char| !(c.is_alphanumeric() || c == '\'')).filter(|t| !t.is_empty()).collect();
        let (mut pos, mut neg) = (0u32, 0u32);
        for (i, t) in tokens.iter().enumerate() {
            let sign: i8 = if self.positive.contains(t) {
                1
            } else if self.negative.contains(t) {
                -1
            } else {
                continue;
            };
            let negated = i > 0 && self.negators.contains(tokens[i - 1]);
            if (sign > 0) != negated {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        let total = pos + neg;
        if total == 0 || pos == neg {
            return (Valence::Neutral, if total == 0 { 0.0 } else { 0.5 });
        }
        let conf = (pos as f64 - neg as f64).abs() / total as f64;
        (Valence::from_sign(pos > neg), conf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SentimentSummary<F> {
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
    pub total: usize,
    /// Σ(value · confidence) / total, 0 for an empty log.
    pub weighted_mean: F,
    pub positive_fraction: F,
}

/// Summarizes gossip sentiment. With no classifier the exchange's own
/// valence tag is used at confidence 1; otherwise the summary text is
/// classified.
pub fn sentiment_summary<F: Scalar>(events: &[SimEvent<F>], classifier: Option<&dyn SentimentClassifier>) -> SentimentSummary<F> {
    let (mut pos, mut neu, mut neg) = (0usize, 0usize, 0usize);
    let mut acc = F::zero();
    for e in events {
        let EventBody::Gossip(g) = &e.body else { continue };
        let (v, conf) = match classifier {
            None => (g.valence, 1.0),
            Some(c) => c.classify(&g.summary),
        };
        match v {
            Valence::Positive => pos += 1,
            Valence::Neutral => neu += 1,
            Valence::Negative => neg += 1,
        }
        acc = acc + v.value::<F>() * lit(conf);
    }
    let total = pos + neu + neg;
    let (weighted_mean, positive_fraction) = if total == 0 {
        (F::zero(), F::zero())
    } else {
        (acc / lit(total as f64), lit::<F>(pos as f64) / lit(total as f64))
    };
    SentimentSummary {
        positive: pos,
        neutral: neu,
        negative: neg,
        total,
        weighted_mean,
        positive_fraction,
    }
}

/// Interaction graph after all edge events up to and including `round`.
pub fn graph_at<F: Scalar>(events: &[SimEvent<F>], round: u32) -> NetworkGraph {
    let n = agents_in(events);
    let mut edges = BTreeSet::new();
    for e in events.iter().filter(|e| e.round <= round) {
        if let EventBody::Edge(ev) = &e.body {
            if ev.decision.is_yes() {
                edges.insert((ev.owner, ev.target));
            } else {
                edges.remove(&(ev.owner, ev.target));
            }
        }
    }
    NetworkGraph {
        vertices: (0..n).collect(),
        edges,
    }
}

/// Snapshot at `round` rebuilt from the log alone.
pub fn snapshot_from_log<F: Scalar>(events: &[SimEvent<F>], round: u32) -> NetworkSnapshot<F> {
    let g = graph_at(events, round);
    let scores = final_reputations(events, Some(round));
    snapshot_from_parts(g.vertices.len(), &g.edges, &scores, round)
}

/// Counts of each update cause, for quick log summaries.
pub fn update_counts<F: Scalar>(events: &[SimEvent<F>]) -> (usize, usize) {
    events.iter().fold((0, 0), |(d, g), e| match &e.body {
        EventBody::ReputationUpdate(u) if u.cause == UpdateCause::DirectEncounter => (d + 1, g),
        EventBody::ReputationUpdate(_) => (d, g + 1),
        _ => (d, g),
    })
}
