//! Two-level reputation simulator for networked agent societies.
//!
//! Agents keep per-peer reputations shaped by direct encounters and gossip,
//! and rewire a directed interaction graph from those reputations. Every
//! judgment goes through a pluggable [`backend::JudgmentBackend`]; the
//! scripted backend makes runs fully reproducible.
//!
//! The numeric core is generic over [`Scalar`]; the aliases at the crate
//! root fix it to `f64`.

pub mod backend;
pub mod engine;
pub mod events;
pub mod gossip;
pub mod metrics;
pub mod model;
pub mod network;
pub mod reputation;
pub mod scenarios;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real number type used for reputations, payoffs and statistics.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Serialize + DeserializeOwned + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Serialize + DeserializeOwned + Send + Sync + 'static
{
}

/// Converts an `f64` constant into the scalar type.
#[inline]
pub fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("constant representable in scalar type")
}

pub use model::{AgentId, Disposition, EdgeDecision, EventSeq, ScenarioId, Valence};

pub type Reputation = model::Reputation<f64>;
pub type RepuDatabase = model::RepuDatabase<f64>;
pub type Encounter = model::Encounter<f64>;
pub type ScenarioAction = scenarios::ScenarioAction<f64>;
pub type PayoffMatrix = scenarios::PayoffMatrix<f64>;
pub type TradingState = scenarios::TradingState<f64>;
pub type ScriptedPolicyConfig = backend::ScriptedPolicyConfig<f64>;
pub type ScriptedBackend = backend::ScriptedBackend<f64>;
pub type JudgmentRequest = backend::JudgmentRequest<f64>;
pub type JudgmentResponse = backend::JudgmentResponse<f64>;
pub type ReputationUpdate = reputation::ReputationUpdate<f64>;
pub type RunConfig = engine::RunConfig<f64>;
pub type RunResult = engine::RunResult<f64>;
pub type World = engine::World<f64>;
pub type SimEvent = events::SimEvent<f64>;
pub type NetworkSnapshot = network::NetworkSnapshot<f64>;
pub type RegressionResult = metrics::RegressionResult<f64>;
pub type SentimentSummary = metrics::SentimentSummary<f64>;
