//! Payoff rules and state transitions for the three dilemma scenarios.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, Encounter, ScenarioId, Valence};
use crate::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("payoff matrix violates T > R > P > S (T={t}, R={r}, P={p}, S={s})")]
    Ordering { t: f64, r: f64, p: f64, s: f64 },
    #[error("payoff matrix violates 2R > T + S (2R={two_r}, T+S={t_plus_s})")]
    Alternation { two_r: f64, t_plus_s: f64 },
    #[error("payoff matrix entries must be finite")]
    NonFinite,
    #[error("split {0} outside [0, 1]")]
    Split(f64),
    #[error("investment {invested} exceeds balance {balance}")]
    InvestExceedsBalance { invested: f64, balance: f64 },
    #[error("negative amount {0}")]
    Negative(f64),
    #[error("returned {returned} exceeds the doubled pool {pool}")]
    ReturnExceedsPool { returned: f64, pool: f64 },
    #[error("accepted trade without a trustee allocation")]
    MissingAllocation,
    #[error("agent {0} has no trading balance")]
    UnknownAgent(AgentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PdMove {
    C,
    D,
}

/// Symmetric two-player payoffs: temptation, reward, punishment, sucker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct PayoffMatrix<F> {
    #[serde(rename = "T")]
    pub t: F,
    #[serde(rename = "R")]
    pub r: F,
    #[serde(rename = "P")]
    pub p: F,
    #[serde(rename = "S")]
    pub s: F,
}

impl<F: Scalar> Default for PayoffMatrix<F> {
    fn default() -> Self {
        PayoffMatrix {
            t: lit(5.0),
            r: lit(3.0),
            p: lit(1.0),
            s: lit(0.0),
        }
    }
}

impl<F: Scalar> PayoffMatrix<F> {
    pub fn new(t: F, r: F, p: F, s: F) -> Result<Self, ScenarioError> {
        let m = PayoffMatrix { t, r, p, s };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let f = |x: F| x.to_f64().unwrap_or(f64::NAN);
        if ![self.t, self.r, self.p, self.s].iter().all(|x| x.is_finite()) {
            return Err(ScenarioError::NonFinite);
        }
        if !(self.t > self.r && self.r > self.p && self.p > self.s) {
            return Err(ScenarioError::Ordering {
                t: f(self.t),
                r: f(self.r),
                p: f(self.p),
                s: f(self.s),
            });
        }
        let two_r = self.r + self.r;
        if !(two_r > self.t + self.s) {
            return Err(ScenarioError::Alternation {
                two_r: f(two_r),
                t_plus_s: f(self.t + self.s),
            });
        }
        Ok(())
    }
}

pub fn pd_payoff<F: Scalar>(a: PdMove, b: PdMove, m: &PayoffMatrix<F>) -> (F, F) {
    match (a, b) {
        (PdMove::C, PdMove::C) => (m.r, m.r),
        (PdMove::D, PdMove::D) => (m.p, m.p),
        (PdMove::C, PdMove::D) => (m.s, m.t),
        (PdMove::D, PdMove::C) => (m.t, m.s),
    }
}

/// A participant's move in one encounter.
///
/// In trading encounters the investor plays `Invest` or `Reject` and the
/// trustee plays `Allocate`, `Deviate`, or `Propose` when the offer was
/// turned down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "F: Scalar")]
pub enum ScenarioAction<F> {
    Cooperate,
    Defect,
    Participate,
    NotParticipate,
    Propose { split: F },
    Accept,
    Reject,
    Invest { amount: F },
    Allocate { split: F, returned: F },
    Deviate { split: F, returned: F },
}

impl<F: Scalar> ScenarioAction<F> {
    pub fn from_pd(m: PdMove) -> Self {
        match m {
            PdMove::C => ScenarioAction::Cooperate,
            PdMove::D => ScenarioAction::Defect,
        }
    }

    pub fn pd_move(&self) -> Option<PdMove> {
        match self {
            ScenarioAction::Cooperate => Some(PdMove::C),
            ScenarioAction::Defect => Some(PdMove::D),
            _ => None,
        }
    }

    /// How the counterpart experiences this move. A turned-down proposal
    /// still reads as friendly when it offered at least half.
    pub fn valence(&self) -> Valence {
        match self {
            ScenarioAction::Cooperate
            | ScenarioAction::Participate
            | ScenarioAction::Accept
            | ScenarioAction::Invest { .. }
            | ScenarioAction::Allocate { .. } => Valence::Positive,
            ScenarioAction::Defect
            | ScenarioAction::NotParticipate
            | ScenarioAction::Reject
            | ScenarioAction::Deviate { .. } => Valence::Negative,
            ScenarioAction::Propose { split } => Valence::from_sign(*split >= lit(0.5)),
        }
    }

    pub fn verb(&self) -> &'static str {
        match self {
            ScenarioAction::Cooperate => "cooperated",
            ScenarioAction::Defect => "defected",
            ScenarioAction::Participate => "participated",
            ScenarioAction::NotParticipate => "abstained",
            ScenarioAction::Propose { split } if *split >= lit(0.5) => "offered a fair split",
            ScenarioAction::Propose { .. } => "offered an unfair split",
            ScenarioAction::Accept => "accepted",
            ScenarioAction::Reject => "rejected the offer",
            ScenarioAction::Invest { .. } => "invested",
            ScenarioAction::Allocate { .. } => "honored the agreement",
            ScenarioAction::Deviate { .. } => "deviated from the agreement",
        }
    }
}

/// Whether a single move counts as cooperative for rate metrics.
pub fn cooperation_signal<F: Scalar>(action: &ScenarioAction<F>) -> bool {
    action.valence() == Valence::Positive
}

/// Per-agent signals an encounter contributes to the round's rate.
///
/// Dilemma and participation encounters yield one signal per participant.
/// A trade yields a single signal, credited to the trustee: success means
/// the investor put money in and the agreed share came back.
pub fn encounter_signals<F: Scalar>(enc: &Encounter<F>) -> Vec<(AgentId, bool)> {
    match enc.scenario {
        ScenarioId::Pd | ScenarioId::Participation => vec![
            (enc.a, cooperation_signal(&enc.action_a)),
            (enc.b, cooperation_signal(&enc.action_b)),
        ],
        ScenarioId::Trading => {
            let ok = matches!(enc.action_a, ScenarioAction::Invest { .. }) && matches!(enc.action_b, ScenarioAction::Allocate { .. });
            vec![(enc.b, ok)]
        }
    }
}

/// Signal for `id`'s own behavior in an encounter, if it produced one.
pub fn agent_signal<F: Scalar>(enc: &Encounter<F>, id: AgentId) -> Option<bool> {
    encounter_signals(enc).into_iter().find(|(a, _)| *a == id).map(|(_, s)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TradingState<F> {
    pub investor: AgentId,
    pub trustee: AgentId,
    pub balance: BTreeMap<AgentId, F>,
    pub agreed_split: F,
    pub invested: F,
    pub returned: F,
}

impl<F: Scalar> TradingState<F> {
    pub fn fresh(investor: AgentId, trustee: AgentId, initial: F) -> Self {
        let mut balance = BTreeMap::new();
        balance.insert(investor, initial);
        balance.insert(trustee, initial);
        TradingState {
            investor,
            trustee,
            balance,
            agreed_split: F::zero(),
            invested: F::zero(),
            returned: F::zero(),
        }
    }

    pub fn balance_of(&self, id: AgentId) -> Result<F, ScenarioError> {
        self.balance.get(&id).copied().ok_or(ScenarioError::UnknownAgent(id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeOutcome<F> {
    pub state: TradingState<F>,
    pub investor_action: ScenarioAction<F>,
    pub trustee_action: ScenarioAction<F>,
    pub investor_payoff: F,
    pub trustee_payoff: F,
}

/// Settles one trade. `invest` is `None` when the investor rejects the
/// proposed `split`; `returned` is what the trustee hands back out of the
/// doubled investment.
pub fn trading_round<F: Scalar>(
    state: &TradingState<F>,
    split: F,
    invest: Option<F>,
    returned: Option<F>,
) -> Result<TradeOutcome<F>, ScenarioError> {
    let f = |x: F| x.to_f64().unwrap_or(f64::NAN);
    if !(split >= F::zero() && split <= F::one()) {
        return Err(ScenarioError::Split(f(split)));
    }
    let inv_bal = state.balance_of(state.investor)?;
    let tru_bal = state.balance_of(state.trustee)?;
    let mut next = state.clone();
    next.agreed_split = split;
    let Some(x) = invest else {
        next.invested = F::zero();
        next.returned = F::zero();
        return Ok(TradeOutcome {
            state: next,
            investor_action: ScenarioAction::Reject,
            trustee_action: ScenarioAction::Propose { split },
            investor_payoff: F::zero(),
            trustee_payoff: F::zero(),
        });
    };
    if !(x >= F::zero()) {
        return Err(ScenarioError::Negative(f(x)));
    }
    if x > inv_bal {
        return Err(ScenarioError::InvestExceedsBalance {
            invested: f(x),
            balance: f(inv_bal),
        });
    }
    let r = returned.ok_or(ScenarioError::MissingAllocation)?;
    let pool = x + x;
    if !(r >= F::zero()) {
        return Err(ScenarioError::Negative(f(r)));
    }
    if r > pool {
        return Err(ScenarioError::ReturnExceedsPool {
            returned: f(r),
            pool: f(pool),
        });
    }
    let agreed = split * pool;
    let honored = r >= agreed - agreed * lit(1e-12);
    let inv_delta = r - x;
    let tru_delta = pool - r;
    next.balance.insert(state.investor, inv_bal + inv_delta);
    next.balance.insert(state.trustee, tru_bal + tru_delta);
    next.invested = x;
    next.returned = r;
    let trustee_action = if honored {
        ScenarioAction::Allocate { split, returned: r }
    } else {
        ScenarioAction::Deviate { split, returned: r }
    };
    Ok(TradeOutcome {
        state: next,
        investor_action: ScenarioAction::Invest { amount: x },
        trustee_action,
        investor_payoff: inv_delta,
        trustee_payoff: tru_delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct ParticipationConfig<F> {
    pub decision_window: u32,
    pub cost: F,
    pub benefit: F,
}

impl<F: Scalar> Default for ParticipationConfig<F> {
    fn default() -> Self {
        ParticipationConfig {
            decision_window: 5,
            cost: F::zero(),
            benefit: F::zero(),
        }
    }
}

impl<F: Scalar> ParticipationConfig<F> {
    /// Standing decisions are (re)made on the first round and on every
    /// multiple of the window.
    pub fn is_decision_round(&self, round: u32) -> bool {
        round == 1 || (self.decision_window > 0 && round % self.decision_window == 0)
    }

    /// Each participant pays `cost`; the pair shares `benefit` per participant.
    pub fn payoff(&self, a: bool, b: bool) -> (F, F) {
        let joined = lit::<F>((a as u8 + b as u8) as f64);
        let shared = self.benefit * joined / lit(2.0);
        let pay = |p: bool| if p { shared - self.cost } else { shared };
        (pay(a), pay(b))
    }
}

/// Standing participation decision for an agent in `round`: re-queried via
/// `decide` on decision rounds, carried over otherwise.
pub fn participation_step<F: Scalar, E>(
    cfg: &ParticipationConfig<F>,
    round: u32,
    standing: Option<bool>,
    decide: impl FnOnce() -> Result<bool, E>,
) -> Result<bool, E> {
    match standing {
        Some(s) if !cfg.is_decision_round(round) => Ok(s),
        _ => decide(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct TradingConfig<F> {
    pub initial_balance: F,
}

impl<F: Scalar> Default for TradingConfig<F> {
    fn default() -> Self {
        TradingConfig { initial_balance: lit(10.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, bound = "F: Scalar")]
pub struct ScenarioParams<F: Scalar> {
    pub payoff: PayoffMatrix<F>,
    pub participation: ParticipationConfig<F>,
    pub trading: TradingConfig<F>,
}
