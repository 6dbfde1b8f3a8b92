//! Numerical solver for finite-horizon, one-dimensional, zero-sum stochastic
//! differential games in which both players act through impulse controls.
//!
//! The value function solves a double-obstacle quasi-variational inequality.
//! It is discretized with a semi-Lagrangian scheme whose intervention
//! operators are explicit in the previous time level ([`scheme`]), solved
//! level by level either directly or by Howard policy iteration ([`policy`]).
//! [`strategy`] extracts equilibrium impulses and re-simulates the game, and
//! [`verify`] certifies the scheme's structural properties numerically.

pub mod error;
pub mod operators;
pub mod policy;
pub mod problem;
pub mod scheme;
pub mod strategy;
pub mod verify;

pub use error::{Error, Result};
pub use problem::{
    build_impulse_sets, validate, DiscreteGame, ExchangeRateInstance, GameProblem, Grids, ImpulseRule,
    ImpulseSets, SpatialGrid, TemporalGrid, ValidationReport,
};
pub use scheme::{solve, Branch, Solution, ValueField};
pub use strategy::{extract_strategy, simulate_payoff, Action, MonteCarloEstimate, StrategyRecord};
pub use verify::{certify_scheme, refinement_study, CertificateReport, RefinementRow};
