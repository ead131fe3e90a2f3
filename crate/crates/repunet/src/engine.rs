//! Deterministic run loop: initialization, round phases, ablations and
//! stabilization.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    judge_checked, ActionChoice, ActionStep, BackendError, JudgmentBackend, JudgmentContext, JudgmentRequest, JudgmentResponse, RemoteBackend, RemoteConfig,
    ScriptedBackend, ScriptedPolicyConfig,
};
use crate::events::{DecisionEvent, EdgeCause, EdgeEvent, EventBody, EventLog, RoundStart, SimEvent, WarningEvent};
use crate::gossip::{run_gossip_phase, GossipWorld};
use crate::metrics::round_rate;
use crate::model::{AgentDescription, AgentId, AgentMemory, Disposition, Encounter, RepuDatabase, ScenarioId};
use crate::network::{interact_edge_shape, select_partners, NetworkGraph, PairingMode, PairingParams};
use crate::reputation::{shape_repu_peer, shape_repu_self};
use crate::scenarios::{participation_step, pd_payoff, trading_round, PdMove, ScenarioAction, ScenarioParams, TradingState};
use crate::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend {other:?} (expected scripted or remote)")),
        }
    }
}

/// Which mechanisms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoGossip,
    NoReputation,
    NoRepunet,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoGossip, Ablation::NoReputation, Ablation::NoRepunet];

    pub fn reputation_enabled(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoGossip)
    }

    pub fn gossip_enabled(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoReputation)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoGossip => "no_gossip",
            Ablation::NoReputation => "no_reputation",
            Ablation::NoRepunet => "no_repunet",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown ablation {s:?} (expected full, no_gossip, no_reputation or no_repunet)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct StabilizationConfig<F> {
    pub window: usize,
    pub band: F,
    pub min_rounds: usize,
}

impl<F: Scalar> Default for StabilizationConfig<F> {
    fn default() -> Self {
        StabilizationConfig {
            window: 10,
            band: lit(0.05),
            min_rounds: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct RunConfig<F: Scalar> {
    pub n_agents: usize,
    pub scenario: ScenarioId,
    pub seed: u64,
    pub backend: BackendKind,
    pub ablation: Ablation,
    /// Per-agent probability of trying a stranger instead of the best neighbor.
    pub epsilon: F,
    pub max_rounds: u32,
    pub stabilization: StabilizationConfig<F>,
    pub prosocial_fraction: F,
    pub pairing: PairingMode,
    /// Exploring agents skip strangers rated below the edge threshold.
    pub explore_filter: bool,
    pub params: ScenarioParams<F>,
    pub policy: ScriptedPolicyConfig<F>,
    pub remote: RemoteConfig,
}

impl<F: Scalar> Default for RunConfig<F> {
    fn default() -> Self {
        RunConfig {
            n_agents: 20,
            scenario: ScenarioId::Pd,
            seed: 0,
            backend: BackendKind::Scripted,
            ablation: Ablation::Full,
            epsilon: lit(0.2),
            max_rounds: 100,
            stabilization: StabilizationConfig::default(),
            prosocial_fraction: lit(0.5),
            pairing: PairingMode::Reputation,
            explore_filter: true,
            params: ScenarioParams::default(),
            policy: ScriptedPolicyConfig::default(),
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl<F: Scalar> RunConfig<F> {
    /// Lists every offending field.
    pub fn validate(&self) -> Result<(), EngineError> {
        let mut errs = Vec::new();
        if self.n_agents < 2 {
            errs.push(format!("n_agents must be at least 2 (got {})", self.n_agents));
        }
        if !(self.epsilon >= F::zero() && self.epsilon <= F::one()) {
            errs.push("epsilon must lie in [0, 1]".to_string());
        }
        if self.max_rounds == 0 {
            errs.push("max_rounds must be at least 1".to_string());
        }
        if self.stabilization.window < 2 {
            errs.push("stabilization.window must be at least 2".to_string());
        }
        if !(self.stabilization.band >= F::zero()) {
            errs.push("stabilization.band must be non-negative".to_string());
        }
        if !(self.prosocial_fraction >= F::zero() && self.prosocial_fraction <= F::one()) {
            errs.push("prosocial_fraction must lie in [0, 1]".to_string());
        }
        if let Err(e) = self.params.payoff.validate() {
            errs.push(format!("params.payoff: {e}"));
        }
        if !(self.params.trading.initial_balance >= F::zero()) || !self.params.trading.initial_balance.is_finite() {
            errs.push("params.trading.initial_balance must be finite and non-negative".to_string());
        }
        if let Err(e) = self.policy.validate() {
            errs.extend(e);
        }
        if self.backend == BackendKind::Remote {
            if let Err(e) = self.remote.validate() {
                errs.extend(e);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EngineError::Config(errs))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        RunConfig { seed, ..self.clone() }
    }
}

/// Builds the backend the config asks for.
pub fn make_backend<F: Scalar>(cfg: &RunConfig<F>) -> Result<Box<dyn JudgmentBackend<F>>, BackendError> {
    Ok(match cfg.backend {
        BackendKind::Scripted => Box::new(ScriptedBackend::new(cfg.policy.clone())),
        BackendKind::Remote => Box::new(RemoteBackend::from_env(cfg.remote.clone())?),
    })
}

pub fn persona(scenario: ScenarioId, disposition: Disposition) -> &'static str {
    match (scenario, disposition) {
        (ScenarioId::Pd, Disposition::Prosocial) => {
            "You believe repeated games reward trust. You start by cooperating and keep cooperating with partners who have not shown they will exploit you."
        }
        (ScenarioId::Pd, Disposition::SelfInterested) => {
            "You look after your own score first. You cooperate only with partners whose record convinces you that cooperation will be returned."
        }
        (ScenarioId::Participation, Disposition::Prosocial) => {
            "You enjoy contributing to group projects and join in unless the people around you have a history of slacking."
        }
        (ScenarioId::Participation, Disposition::SelfInterested) => {
            "You would rather let others do the work. You only join a project when your partner's track record makes it clearly worth your time."
        }
        (ScenarioId::Trading, Disposition::Prosocial) => {
            "You trade honestly, return what you promised, and are willing to invest in partners who have not cheated before."
        }
        (ScenarioId::Trading, Disposition::SelfInterested) => {
            "You trade to maximize your balance. You keep the money when you can and only invest with partners you have good reason to trust."
        }
    }
}

/// Mutable state of a run. The engine is its only writer.
#[derive(Debug, Clone)]
pub struct World<F: Scalar> {
    pub config: RunConfig<F>,
    pub agents: Vec<AgentDescription>,
    pub databases: Vec<RepuDatabase<F>>,
    pub memories: Vec<AgentMemory>,
    /// Trading balances, one per agent (unused by the other scenarios).
    pub balances: Vec<F>,
    /// Current participation decision per agent.
    pub standing: Vec<Option<bool>>,
    pub log: EventLog<F>,
    pub series: Vec<F>,
    pub round: u32,
    rng: ChaCha8Rng,
}

/// Isolated agents, empty databases, dispositions by seeded shuffle.
pub fn init_run<F: Scalar>(cfg: &RunConfig<F>) -> Result<World<F>, EngineError> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_pro = (cfg.prosocial_fraction * lit(n as f64)).ceil().to_usize().unwrap_or(0).min(n);
    let mut ids: Vec<AgentId> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut disposition = vec![Disposition::SelfInterested; n];
    for &i in &ids[..n_pro] {
        disposition[i] = Disposition::Prosocial;
    }
    let agents = (0..n)
        .map(|i| AgentDescription::new(i, disposition[i], persona(cfg.scenario, disposition[i]).to_string()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| EngineError::Config(vec![e.to_string()]))?;
    Ok(World {
        config: cfg.clone(),
        agents,
        databases: (0..n).map(RepuDatabase::new).collect(),
        memories: (0..n).map(AgentMemory::new).collect(),
        balances: vec![cfg.params.trading.initial_balance; n],
        standing: vec![None; n],
        log: EventLog::new(),
        series: Vec::new(),
        round: 0,
        rng,
    })
}

fn warn<F: Scalar>(log: &mut EventLog<F>, round: u32, agent: Option<AgentId>, messages: Vec<String>) {
    for message in messages {
        log.push(round, EventBody::Warning(WarningEvent { agent, message }));
    }
}

impl<F: Scalar> World<F> {
    pub fn prosocial_ids(&self) -> Vec<AgentId> {
        self.agents.iter().filter(|a| a.disposition == Disposition::Prosocial).map(|a| a.id).collect()
    }

    pub fn graph(&self) -> NetworkGraph {
        NetworkGraph::from_databases(&self.databases)
    }

    fn choose(
        &mut self,
        backend: &dyn JudgmentBackend<F>,
        agent: AgentId,
        counterpart: AgentId,
        step: ActionStep<F>,
    ) -> Result<ActionChoice<F>, BackendError> {
        let cfg = &self.config;
        let rep_on = cfg.ablation.reputation_enabled();
        let req = JudgmentRequest {
            agent: self.agents[agent].clone(),
            scenario: cfg.scenario,
            context: JudgmentContext::ScenarioAction {
                step,
                round: self.round,
                counterpart: Some(counterpart),
                reputation: if rep_on { self.databases[agent].peer(counterpart, cfg.scenario).cloned() } else { None },
                reputation_enabled: rep_on,
                recent_valences: self.memories[agent].recent_valences(cfg.policy.memory_window),
            },
        };
        let (resp, w) = judge_checked(backend, &req)?;
        warn(&mut self.log, self.round, Some(agent), w);
        match resp {
            JudgmentResponse::Action { choice } => Ok(choice),
            other => Err(BackendError::InvalidResponse(format!("expected an action, got {other:?}"))),
        }
    }

    fn pd_encounter(&mut self, backend: &dyn JudgmentBackend<F>, a: AgentId, b: AgentId) -> Result<Encounter<F>, BackendError> {
        let to_move = |c: ActionChoice<F>| match c {
            ActionChoice::Cooperate => Ok(PdMove::C),
            ActionChoice::Defect => Ok(PdMove::D),
            other => Err(BackendError::InvalidResponse(format!("{other:?} is not a dilemma move"))),
        };
        let ma = to_move(self.choose(backend, a, b, ActionStep::PdMove)?)?;
        let mb = to_move(self.choose(backend, b, a, ActionStep::PdMove)?)?;
        let (pa, pb) = pd_payoff(ma, mb, &self.config.params.payoff);
        Ok(self.encounter(a, b, ScenarioAction::from_pd(ma), ScenarioAction::from_pd(mb), pa, pb))
    }

    fn participation_encounter(&mut self, backend: &dyn JudgmentBackend<F>, a: AgentId, b: AgentId) -> Result<Encounter<F>, BackendError> {
        let cfg = self.config.params.participation;
        let round = self.round;
        let mut joined = [false; 2];
        for (k, (me, other)) in [(a, b), (b, a)].into_iter().enumerate() {
            let standing = self.standing[me];
            joined[k] = participation_step(&cfg, round, standing, || -> Result<bool, BackendError> {
                let choice = self.choose(backend, me, other, ActionStep::Participation)?;
                let join = match choice {
                    ActionChoice::Participate => true,
                    ActionChoice::NotParticipate => false,
                    other => return Err(BackendError::InvalidResponse(format!("{other:?} is not a participation decision"))),
                };
                self.log.push(
                    round,
                    EventBody::Decision(DecisionEvent {
                        agent: me,
                        counterpart: Some(other),
                        choice,
                    }),
                );
                Ok(join)
            })?;
            self.standing[me] = Some(joined[k]);
        }
        let act = |p: bool| if p { ScenarioAction::Participate } else { ScenarioAction::NotParticipate };
        let (pa, pb) = cfg.payoff(joined[0], joined[1]);
        Ok(self.encounter(a, b, act(joined[0]), act(joined[1]), pa, pb))
    }

    /// Asks once more when a move breaks the trading rules, then falls back.
    fn trade_choice(
        &mut self,
        backend: &dyn JudgmentBackend<F>,
        me: AgentId,
        other: AgentId,
        step: ActionStep<F>,
        ok: impl Fn(&ActionChoice<F>) -> bool,
        fallback: ActionChoice<F>,
    ) -> Result<ActionChoice<F>, BackendError> {
        for attempt in 0..2 {
            let c = self.choose(backend, me, other, step)?;
            if ok(&c) {
                return Ok(c);
            }
            let msg = if attempt == 0 {
                format!("invalid trading move {c:?}, asking again")
            } else {
                format!("invalid trading move {c:?}, using {fallback:?}")
            };
            warn(&mut self.log, self.round, Some(me), vec![msg]);
        }
        Ok(fallback)
    }

    fn trading_encounter(&mut self, backend: &dyn JudgmentBackend<F>, x: AgentId, y: AgentId) -> Result<Encounter<F>, BackendError> {
        let (investor, trustee) = if self.rng.gen::<bool>() { (x, y) } else { (y, x) };
        let zero = F::zero();
        let one = F::one();
        let proposal = self.trade_choice(
            backend,
            trustee,
            investor,
            ActionStep::TradePropose,
            |c| matches!(c, ActionChoice::Propose { split } if *split >= F::zero() && *split <= F::one()),
            ActionChoice::Propose { split: lit(0.5) },
        )?;
        let ActionChoice::Propose { split } = proposal else { unreachable!("checked above") };
        let balance = self.balances[investor];
        let invest = self.trade_choice(
            backend,
            investor,
            trustee,
            ActionStep::TradeInvest { split, balance },
            |c| match c {
                ActionChoice::Accept { amount } => *amount >= zero && *amount <= balance,
                ActionChoice::Reject => true,
                _ => false,
            },
            ActionChoice::Reject,
        )?;
        let amount = match invest {
            ActionChoice::Accept { amount } => Some(amount),
            _ => None,
        };
        let returned = match amount {
            None => None,
            Some(x) => {
                let pool = x + x;
                let c = self.trade_choice(
                    backend,
                    trustee,
                    investor,
                    ActionStep::TradeAllocate { split, invested: x },
                    |c| match c {
                        ActionChoice::Honor => true,
                        ActionChoice::Deviate { returned } => *returned >= zero && *returned <= pool,
                        _ => false,
                    },
                    ActionChoice::Deviate { returned: zero },
                )?;
                Some(match c {
                    ActionChoice::Honor => (split * pool).min(pool).max(zero),
                    ActionChoice::Deviate { returned } => returned,
                    _ => zero,
                })
            }
        };
        let mut state = TradingState::fresh(investor, trustee, zero);
        state.balance.insert(investor, self.balances[investor]);
        state.balance.insert(trustee, self.balances[trustee]);
        let out = trading_round(&state, split.max(zero).min(one), amount, returned).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        self.balances[investor] = out.state.balance[&investor];
        self.balances[trustee] = out.state.balance[&trustee];
        Ok(self.encounter(investor, trustee, out.investor_action, out.trustee_action, out.investor_payoff, out.trustee_payoff))
    }

    fn encounter(&mut self, a: AgentId, b: AgentId, action_a: ScenarioAction<F>, action_b: ScenarioAction<F>, payoff_a: F, payoff_b: F) -> Encounter<F> {
        Encounter {
            seq: self.log.next_seq(),
            round: self.round,
            a,
            b,
            scenario: self.config.scenario,
            action_a,
            action_b,
            transcript: None,
            payoff_a,
            payoff_b,
        }
    }
}

/// Executes round `world.round + 1` through all five phases.
pub fn run_round<F: Scalar>(world: &mut World<F>, backend: &dyn JudgmentBackend<F>) -> Result<(), BackendError> {
    world.round += 1;
    let round = world.round;
    let cfg = world.config.clone();
    let rep_on = cfg.ablation.reputation_enabled();

    let params = PairingParams {
        mode: cfg.pairing,
        epsilon: cfg.epsilon,
        scenario: cfg.scenario,
        reputation_enabled: rep_on,
        explore_floor: if cfg.explore_filter { Some(cfg.policy.edge_threshold) } else { None },
    };
    let plan = select_partners(round, &world.databases, &mut world.rng, &params);
    world.log.push(
        round,
        EventBody::Round(RoundStart {
            pairs: plan.pairs.clone(),
            unmatched: plan.unmatched.clone(),
        }),
    );

    let mut encounters = Vec::with_capacity(plan.pairs.len());
    for &(a, b) in &plan.pairs {
        let enc = match cfg.scenario {
            ScenarioId::Pd => world.pd_encounter(backend, a, b)?,
            ScenarioId::Participation => world.participation_encounter(backend, a, b)?,
            ScenarioId::Trading => world.trading_encounter(backend, a, b)?,
        };
        let enc = Encounter { seq: world.log.next_seq(), ..enc };
        world.log.push(round, EventBody::Encounter(enc.clone()));
        for (me, other) in [(enc.a, enc.b), (enc.b, enc.a)] {
            let v = enc.valence_of(other).expect("participant");
            world.memories[me]
                .record_encounter(enc.seq, round, other, v)
                .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        }
        encounters.push(enc);
    }

    if rep_on {
        for enc in &encounters {
            let (lo, hi) = (enc.a.min(enc.b), enc.a.max(enc.b));
            for id in [lo, hi] {
                let seq = world.log.next_seq();
                let (u, w) = shape_repu_peer(backend, &world.agents[id], &mut world.databases[id], enc, seq)?;
                if let Some(u) = u {
                    world.log.push(round, EventBody::ReputationUpdate(u));
                }
                warn(&mut world.log, round, Some(id), w);
            }
            for id in [lo, hi] {
                let seq = world.log.next_seq();
                let (u, w) = shape_repu_self(backend, &world.agents[id], &mut world.databases[id], enc, seq)?;
                if let Some(u) = u {
                    world.log.push(round, EventBody::ReputationUpdate(u));
                }
                warn(&mut world.log, round, Some(id), w);
            }
        }
    }

    if cfg.ablation.gossip_enabled() {
        let mut gw = GossipWorld {
            agents: &world.agents,
            dbs: &mut world.databases,
            memories: &mut world.memories,
            log: &mut world.log,
        };
        run_gossip_phase(backend, &mut gw, round, &encounters, rep_on)?;
    }

    for enc in &encounters {
        for id in [enc.a.min(enc.b), enc.a.max(enc.b)] {
            let out = interact_edge_shape(backend, &world.agents[id], &mut world.databases[id], enc, rep_on)?;
            world.log.push(
                round,
                EventBody::Edge(EdgeEvent {
                    owner: id,
                    target: enc.counterpart(id).expect("participant"),
                    decision: out.decision,
                    cause: EdgeCause::Interact,
                    cause_seq: enc.seq,
                    changed: out.changed,
                }),
            );
            warn(&mut world.log, round, Some(id), out.warnings);
        }
    }

    world.series.push(round_rate(&encounters));
    Ok(())
}

/// True once the series is long enough and its last `window` values lie
/// within `band` of each other.
pub fn detect_stabilization<F: Scalar>(series: &[F], window: usize, band: F, min_rounds: usize) -> bool {
    if window < 2 || series.len() < min_rounds.max(window) {
        return false;
    }
    let tail = &series[series.len() - window..];
    let hi = tail.iter().copied().fold(F::neg_infinity(), F::max);
    let lo = tail.iter().copied().fold(F::infinity(), F::min);
    hi - lo <= band
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RunResult<F: Scalar> {
    pub config: RunConfig<F>,
    pub rounds_executed: u32,
    pub stabilized: bool,
    pub agents: Vec<AgentDescription>,
    pub databases: Vec<RepuDatabase<F>>,
    pub graph: NetworkGraph,
    /// Cooperation (or participation, or trade success) rate per round.
    pub series: Vec<F>,
    pub balances: Vec<F>,
    /// Written separately as JSONL.
    #[serde(skip)]
    pub events: Vec<SimEvent<F>>,
}

impl<F: Scalar> RunResult<F> {
    fn from_world(world: World<F>, stabilized: bool) -> Self {
        let graph = world.graph();
        RunResult {
            rounds_executed: world.round,
            stabilized,
            agents: world.agents,
            databases: world.databases,
            graph,
            series: world.series,
            balances: world.balances,
            events: world.log.into_events(),
            config: world.config,
        }
    }

    pub fn prosocial_ids(&self) -> Vec<AgentId> {
        self.agents.iter().filter(|a| a.disposition == Disposition::Prosocial).map(|a| a.id).collect()
    }

    /// Mean rate over the last `k` rounds (all rounds when shorter).
    pub fn tail_mean(&self, k: usize) -> F {
        let tail = &self.series[self.series.len().saturating_sub(k)..];
        if tail.is_empty() {
            return F::zero();
        }
        tail.iter().copied().fold(F::zero(), |a, b| a + b) / lit(tail.len() as f64)
    }
}

/// A run stopped by a backend failure; `partial` holds everything logged so far.
#[derive(Debug, Clone, Error)]
#[error("run aborted in round {}: {error}", partial.rounds_executed)]
pub struct RunAbort<F: Scalar> {
    pub partial: Box<RunResult<F>>,
    pub error: BackendError,
}

/// Runs until stabilization or `max_rounds`.
pub fn run<F: Scalar>(cfg: &RunConfig<F>, backend: &dyn JudgmentBackend<F>) -> Result<RunResult<F>, RunError<F>> {
    let mut world = init_run(cfg)?;
    let st = cfg.stabilization;
    loop {
        if let Err(error) = run_round(&mut world, backend) {
            return Err(RunError::Abort(RunAbort {
                partial: Box::new(RunResult::from_world(world, false)),
                error,
            }));
        }
        if detect_stabilization(&world.series, st.window, st.band, st.min_rounds) {
            return Ok(RunResult::from_world(world, true));
        }
        if world.round >= cfg.max_rounds {
            return Ok(RunResult::from_world(world, false));
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum RunError<F: Scalar> {
    #[error(transparent)]
    Setup(#[from] EngineError),
    #[error(transparent)]
    Abort(RunAbort<F>),
}

/// `repeats` independent runs with seeds `seed + k`, executed on separate
/// threads. Results come back in seed order.
pub fn run_experiment<F: Scalar>(cfg: &RunConfig<F>, repeats: usize, backend: &dyn JudgmentBackend<F>) -> Result<Vec<Result<RunResult<F>, RunError<F>>>, EngineError> {
    if repeats == 0 {
        return Err(EngineError::Config(vec!["repeats must be at least 1".to_string()]));
    }
    cfg.validate()?;
    let configs: Vec<RunConfig<F>> = (0..repeats as u64).map(|k| cfg.with_seed(cfg.seed.wrapping_add(k))).collect();
    Ok(std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run(c, backend))).collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    }))
}
