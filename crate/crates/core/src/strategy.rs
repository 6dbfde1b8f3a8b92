//! Equilibrium impulse strategies and a Monte Carlo payoff oracle.
//!
//! Both the deterministic forward pass and the simulator use the same
//! feedback rule, built from the solved value field. At backward level `n` and
//! state `x`, the rows `H^χ`, `H^c`, `cont` and `max(cont, H^c)` (all computed
//! from `V^{n−1}`) are interpolated at `x`.
//!
//! * The minimizer acts if `H^χ(x) < max(cont, H^c)(x)`, and has priority.
//! * Otherwise the maximizer acts if `H^c(x) > cont(x)`.
//!
//! An acting player moves the state to the target node chosen at the grid node
//! nearest to `x`. An impulse uses up its time step: no running reward accrues
//! and the diffusion does not move the state on that step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::{blend, locate};
use crate::scheme::{assemble_rhs, omicron, ValueField};
use crate::problem::DiscreteGame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    None,
    Maximizer,
    Minimizer,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::None => "none",
            Action::Maximizer => "xi",
            Action::Minimizer => "eta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intervention {
    pub time: f64,
    pub impulse: f64,
}

/// One forward step of the optimal path. `state` is the pre-impulse state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub time: f64,
    pub state: f64,
    pub value: f64,
    pub action: Action,
    /// Zero when `action` is [`Action::None`].
    pub impulse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRecord {
    /// `(τ*_m, ξ*_m)`.
    pub maximizer: Vec<Intervention>,
    /// `(ρ*_l, η*_l)`.
    pub minimizer: Vec<Intervention>,
    /// `N + 1` points, from `t = 0` to `t = T`.
    pub path: Vec<PathPoint>,
}

/// Nodal comparison rows of one backward level.
#[derive(Debug, Clone)]
struct FeedbackLevel {
    continuation: Vec<f64>,
    sup: Vec<f64>,
    inf: Vec<f64>,
    unconstrained: Vec<f64>,
    sup_target: Vec<Option<usize>>,
    inf_target: Vec<Option<usize>>,
    omicron: Vec<f64>,
}

/// A player's decision at an arbitrary state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Post-impulse state; equals the input state when nobody acts.
    pub target: f64,
    /// Interpolated `H^χ`, `H^c`, continuation and `max(cont, H^c)`.
    pub inf: f64,
    pub sup: f64,
    pub continuation: f64,
    pub unconstrained: f64,
    /// Interpolated `ο` at the current level.
    pub omicron: f64,
}

/// Feedback strategies induced by a solved value field.
#[derive(Debug, Clone)]
pub struct FeedbackRule {
    /// Entry `n − 1` holds level `n`.
    levels: Vec<FeedbackLevel>,
}

impl FeedbackRule {
    pub fn new(game: &DiscreteGame, field: &ValueField) -> Self {
        let levels = (1..field.levels())
            .map(|n| {
                let rhs = assemble_rhs(game, n, field.row(n - 1));
                FeedbackLevel {
                    unconstrained: rhs
                        .continuation
                        .iter()
                        .zip(&rhs.sup)
                        .map(|(c, s)| c.max(s.value))
                        .collect(),
                    sup: rhs.sup.iter().map(|r| r.value).collect(),
                    inf: rhs.inf.iter().map(|r| r.value).collect(),
                    sup_target: rhs.sup.iter().enumerate().map(|(i, r)| r.target(i)).collect(),
                    inf_target: rhs.inf.iter().enumerate().map(|(i, r)| r.target(i)).collect(),
                    omicron: (0..game.nodes()).map(|i| omicron(game, n, i, field.row(n))).collect(),
                    continuation: rhs.continuation,
                }
            })
            .collect();
        Self { levels }
    }

    /// Decision at backward level `level ≥ 1` and state `x`.
    pub fn decide(&self, game: &DiscreteGame, level: usize, x: f64) -> Decision {
        let rows = &self.levels[level - 1];
        let (k, alpha) = locate(&game.grids.space, x);
        let at = |row: &[f64]| if k == row.len() - 1 { row[k] } else { blend(row[k], row[k + 1], alpha) };
        let nearest = game.grids.space.nearest(x);
        let mut d = Decision {
            action: Action::None,
            target: x,
            inf: at(&rows.inf),
            sup: at(&rows.sup),
            continuation: at(&rows.continuation),
            unconstrained: at(&rows.unconstrained),
            omicron: at(&rows.omicron),
        };
        if d.inf < d.unconstrained {
            if let Some(t) = rows.inf_target[nearest] {
                d.action = Action::Minimizer;
                d.target = game.x(t);
                return d;
            }
        }
        if d.sup > d.continuation {
            if let Some(t) = rows.sup_target[nearest] {
                d.action = Action::Maximizer;
                d.target = game.x(t);
            }
        }
        d
    }
}

fn clamp_state(game: &DiscreteGame, x: f64) -> f64 {
    x.clamp(game.grids.space.x_min(), game.grids.space.x_max())
}

fn check_start(game: &DiscreteGame, x_start: f64) -> Result<()> {
    if !game.grids.space.contains(x_start) {
        return Err(Error::InvalidArgument(format!(
            "start state {x_start} lies outside [{}, {}]",
            game.grids.space.x_min(),
            game.grids.space.x_max()
        )));
    }
    Ok(())
}

/// Deterministic forward pass from `t = 0`, following the drift between impulses.
pub fn extract_strategy(game: &DiscreteGame, field: &ValueField, x_start: f64) -> Result<StrategyRecord> {
    check_start(game, x_start)?;
    let rule = FeedbackRule::new(game, field);
    extract_with(game, field, &rule, x_start)
}

pub fn extract_with(game: &DiscreteGame, field: &ValueField, rule: &FeedbackRule, x_start: f64) -> Result<StrategyRecord> {
    check_start(game, x_start)?;
    let steps = game.steps();
    let mut record = StrategyRecord { maximizer: vec![], minimizer: vec![], path: Vec::with_capacity(steps + 1) };
    let mut x = x_start;
    for k in 0..=steps {
        let level = game.grids.time.level_of_forward_step(k);
        let t = game.time(level);
        let value = field.value_at(game, level, x);
        if level == 0 {
            record.path.push(PathPoint { time: t, state: x, value, action: Action::None, impulse: 0.0 });
            break;
        }
        let d = rule.decide(game, level, x);
        let impulse = d.target - x;
        record.path.push(PathPoint { time: t, state: x, value, action: d.action, impulse });
        match d.action {
            Action::Minimizer => record.minimizer.push(Intervention { time: t, impulse }),
            Action::Maximizer => record.maximizer.push(Intervention { time: t, impulse }),
            Action::None => {}
        }
        x = match d.action {
            Action::None => clamp_state(game, x + game.h() * (game.problem.drift)(t, x)),
            _ => d.target,
        };
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub paths: usize,
    pub seed: u64,
}

pub const MIN_PATHS: usize = 100;

/// Payoff of one simulated game under the feedback rule.
///
/// Running rewards and both players' costs are discounted to time zero. The
/// maximizer's costs are subtracted and the minimizer's costs are added.
fn simulate_path(game: &DiscreteGame, rule: &FeedbackRule, x_start: f64, rng: &mut ChaCha8Rng) -> f64 {
    let p = &game.problem;
    let h = game.h();
    let sqrt_h = h.sqrt();
    let mut x = x_start;
    let mut payoff = 0.0;
    for k in 0..game.steps() {
        let level = game.grids.time.level_of_forward_step(k);
        let t = game.time(level);
        let discount = (-p.discount * t).exp();
        let d = rule.decide(game, level, x);
        match d.action {
            Action::Minimizer => {
                payoff += discount * (p.minimizer_cost)(t, d.target - x);
                x = d.target;
            }
            Action::Maximizer => {
                payoff -= discount * (p.maximizer_cost)(t, d.target - x);
                x = d.target;
            }
            Action::None => {
                payoff += discount * h * (p.running_reward)(t, x);
                let z: f64 = StandardNormal.sample(rng);
                x = clamp_state(game, x + h * (p.drift)(t, x) + (p.volatility)(t, x) * sqrt_h * z);
            }
        }
    }
    payoff + (-p.discount * game.grids.time.horizon()).exp() * (p.terminal_reward)(x)
}

/// Euler–Maruyama estimate of the game payoff from `(0, x_start)` when both
/// players follow the feedback rule of `field`. Path `j` draws from stream `j`
/// of a ChaCha generator seeded with `seed`, so results do not depend on
/// thread scheduling.
pub fn simulate_payoff(
    game: &DiscreteGame,
    field: &ValueField,
    x_start: f64,
    paths: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_start(game, x_start)?;
    if paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_PATHS} paths, got {paths}")));
    }
    let rule = FeedbackRule::new(game, field);
    let payoffs: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            simulate_path(game, &rule, x_start, &mut rng)
        })
        .collect();
    let n = paths as f64;
    let mean = payoffs.iter().sum::<f64>() / n;
    let variance = payoffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloEstimate { mean, standard_error: (variance / n).sqrt(), paths, seed })
}
