//! Howard policy iteration over the row-decoupled discrete controls.
//!
//! At node `i` the minimizer's decision is `β_i = (p_i, η_i)` and the
//! maximizer's is `α_i = (q_i, ξ_i)`. For fixed controls, one level is the
//! linear system `A(α, β)·V = y(α, β)` with
//!
//! ```text
//! y_i = (1 − p)(1 − q)·cont_i + (1 − p)·q·(H^c V^{n−1})_i + p·(H^χ V^{n−1})_i
//! ```
//!
//! The operator `A` carries no control dependence in this scheme, so it is
//! factorized once per level and reused for every evaluation.

use crate::error::{Error, Result};
use crate::operators::{intervention_inf, intervention_sup};
use crate::scheme::{
    assemble_matrix, continuation_value, max_abs_diff, Branch, TridiagonalFactor, TridiagonalOperator, ValueField,
};
use crate::problem::DiscreteGame;

/// Per-node decisions of both players at one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySnapshot {
    /// `p_i`: the minimizer intervenes.
    pub minimizer_acts: Vec<bool>,
    /// `q_i`: the maximizer intervenes, given the minimizer does not.
    pub maximizer_acts: Vec<bool>,
    /// `ξ_i` as a node offset.
    pub maximizer_offset: Vec<Option<isize>>,
    /// `η_i` as a node offset.
    pub minimizer_offset: Vec<Option<isize>>,
}

impl PolicySnapshot {
    /// Nobody intervenes anywhere.
    pub fn passive(nodes: usize) -> Self {
        Self {
            minimizer_acts: vec![false; nodes],
            maximizer_acts: vec![false; nodes],
            maximizer_offset: vec![None; nodes],
            minimizer_offset: vec![None; nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.minimizer_acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minimizer_acts.is_empty()
    }

    pub fn branch(&self, i: usize) -> Branch {
        if self.minimizer_acts[i] {
            Branch::Minimizer
        } else if self.maximizer_acts[i] {
            Branch::Maximizer
        } else {
            Branch::Continuation
        }
    }

    /// Equal branches everywhere, and equal impulses wherever they are used.
    pub fn same_decisions(&self, other: &Self) -> bool {
        self.len() == other.len()
            && (0..self.len()).all(|i| {
                let b = self.branch(i);
                b == other.branch(i)
                    && match b {
                        Branch::Continuation => true,
                        Branch::Maximizer => self.maximizer_offset[i] == other.maximizer_offset[i],
                        Branch::Minimizer => self.minimizer_offset[i] == other.minimizer_offset[i],
                    }
            })
    }

    /// Every active decision must carry an impulse from the node's set.
    pub fn check(&self, game: &DiscreteGame) -> Result<()> {
        if self.len() != game.nodes() {
            return Err(Error::InvalidArgument(format!(
                "policy covers {} nodes, grid has {}",
                self.len(),
                game.nodes()
            )));
        }
        for i in 0..self.len() {
            let (set, offset) = match self.branch(i) {
                Branch::Continuation => continue,
                Branch::Maximizer => (game.maximizer_impulses.at(i), self.maximizer_offset[i]),
                Branch::Minimizer => (game.minimizer_impulses.at(i), self.minimizer_offset[i]),
            };
            match offset {
                Some(j) if set.contains(&j) => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "node {i} intervenes with {offset:?}, not in its impulse set"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HowardReport {
    pub iterations: usize,
    /// `‖A·V − y(improved policy)‖∞` for the returned row.
    pub residual: f64,
    /// Max-norm change of the evaluated row in the last sweep (infinite after one sweep).
    pub last_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HowardSettings {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for HowardSettings {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iters: 10 }
    }
}

/// `A(α, β)`; identical for every policy.
pub fn policy_matrix(game: &DiscreteGame, _policy: &PolicySnapshot, level: usize) -> TridiagonalOperator {
    assemble_matrix(game, level)
}

/// Right-hand side for fixed decisions. Intervention terms use the policy's
/// impulses as given; nothing is re-optimized.
pub fn policy_rhs(game: &DiscreteGame, policy: &PolicySnapshot, level: usize, row_prev: &[f64]) -> Result<Vec<f64>> {
    policy.check(game)?;
    let t = game.time(level);
    let disc = game.continuation_discount();
    Ok((0..game.nodes())
        .map(|i| match policy.branch(i) {
            Branch::Continuation => continuation_value(game, row_prev, level, i),
            Branch::Maximizer => {
                let j = policy.maximizer_offset[i].expect("checked");
                disc * row_prev[(i as isize + j) as usize] - (game.problem.maximizer_cost)(t, game.displacement(j))
            }
            Branch::Minimizer => {
                let j = policy.minimizer_offset[i].expect("checked");
                disc * row_prev[(i as isize + j) as usize] + (game.problem.minimizer_cost)(t, game.displacement(j))
            }
        })
        .collect())
}

/// Solve `A(α, β)·V = y(α, β)`.
pub fn policy_evaluation(game: &DiscreteGame, policy: &PolicySnapshot, level: usize, row_prev: &[f64]) -> Result<Vec<f64>> {
    let y = policy_rhs(game, policy, level, row_prev)?;
    Ok(policy_matrix(game, policy, level).factorize()?.solve(&y))
}

fn evaluate_with(factor: &TridiagonalFactor, game: &DiscreteGame, policy: &PolicySnapshot, level: usize, row_prev: &[f64]) -> Result<Vec<f64>> {
    Ok(factor.solve(&policy_rhs(game, policy, level, row_prev)?))
}

/// Nodewise re-optimization of both players' decisions.
///
/// The candidate terms only involve the previous level, so the improved policy
/// does not depend on the current iterate. `q_i` is set iff the maximizer's
/// obstacle strictly beats continuation; `p_i` iff the minimizer's obstacle is
/// strictly below the better of the two. Ties mean no intervention.
pub fn policy_improvement(game: &DiscreteGame, level: usize, row_prev: &[f64]) -> PolicySnapshot {
    let mut policy = PolicySnapshot::passive(game.nodes());
    for i in 0..game.nodes() {
        let cont = continuation_value(game, row_prev, level, i);
        let sup = intervention_sup(game, row_prev, level, i);
        let inf = intervention_inf(game, row_prev, level, i);
        policy.maximizer_offset[i] = sup.obstacle_active.then_some(sup.offset);
        policy.minimizer_offset[i] = inf.obstacle_active.then_some(inf.offset);
        policy.maximizer_acts[i] = sup.obstacle_active && sup.value > cont;
        policy.minimizer_acts[i] = inf.obstacle_active && inf.value < cont.max(sup.value);
    }
    policy
}

/// Policy iteration for one backward level, starting from the passive policy.
///
/// Stops when improvement leaves the decisions unchanged or when the evaluated
/// row satisfies the optimal-policy system to within `tolerance`.
pub fn howard_step(
    game: &DiscreteGame,
    level: usize,
    row_prev: &[f64],
    settings: HowardSettings,
) -> Result<(Vec<f64>, PolicySnapshot, HowardReport)> {
    if !(settings.tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", settings.tolerance)));
    }
    let mut policy = PolicySnapshot::passive(game.nodes());
    let a = policy_matrix(game, &policy, level);
    let factor = a.factorize()?;
    let mut previous: Option<Vec<f64>> = None;
    let mut residual = f64::INFINITY;
    for iteration in 1..=settings.max_iters {
        let v = evaluate_with(&factor, game, &policy, level, row_prev)?;
        let improved = policy_improvement(game, level, row_prev);
        residual = max_abs_diff(&a.apply(&v), &policy_rhs(game, &improved, level, row_prev)?);
        let last_change = previous.as_deref().map_or(f64::INFINITY, |p| max_abs_diff(p, &v));
        if improved.same_decisions(&policy) || residual <= settings.tolerance {
            let report = HowardReport { iterations: iteration, residual, last_change, converged: true };
            return Ok((v, improved, report));
        }
        policy = improved;
        previous = Some(v);
    }
    Err(Error::NotConverged { iterations: settings.max_iters, residual })
}

/// Full backward recursion with a Howard solve per level.
pub fn howard_solve(
    game: &DiscreteGame,
    settings: HowardSettings,
) -> Result<(ValueField, Vec<PolicySnapshot>, Vec<HowardReport>)> {
    let mut rows = vec![game.terminal_row()];
    let mut policies = Vec::with_capacity(game.steps());
    let mut reports = Vec::with_capacity(game.steps());
    for n in 1..=game.steps() {
        let (v, policy, report) = howard_step(game, n, &rows[n - 1], settings)?;
        rows.push(v);
        policies.push(policy);
        reports.push(report);
    }
    Ok((ValueField::from_rows(rows), policies, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{coefficient, ExchangeRateInstance, GameProblem, Grids, SpatialGrid, TemporalGrid};
    use crate::scheme::{solve, step};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_game(m: usize) -> DiscreteGame {
        let p = GameProblem::with_linear_costs(1.0, 0.1, 1.0, 0.1);
        let grids = Grids::new(TemporalGrid::new(1.0, 20).unwrap(), SpatialGrid::new(0.0, 5.0, m).unwrap());
        DiscreteGame::new(p, grids).unwrap()
    }

    fn exchange() -> DiscreteGame {
        let ex = ExchangeRateInstance::default();
        DiscreteGame::new(ex.problem(1), ExchangeRateInstance::reference_grids()).unwrap()
    }

    fn random_policy(game: &DiscreteGame, rng: &mut ChaCha8Rng) -> PolicySnapshot {
        let mut policy = PolicySnapshot::passive(game.nodes());
        for i in 0..game.nodes() {
            let up = game.maximizer_impulses.at(i);
            let down = game.minimizer_impulses.at(i);
            policy.maximizer_offset[i] = Some(up[rng.gen_range(0..up.len())]);
            policy.minimizer_offset[i] = Some(down[rng.gen_range(0..down.len())]);
            policy.minimizer_acts[i] = rng.gen_bool(0.3);
            policy.maximizer_acts[i] = rng.gen_bool(0.3);
        }
        policy
    }

    #[test]
    fn rhs_selects_branches() {
        let game = exchange();
        let prev: Vec<f64> = game.grids.space.nodes().map(|x| x.sin()).collect();
        let passive = PolicySnapshot::passive(game.nodes());
        let y = policy_rhs(&game, &passive, 4, &prev).unwrap();
        for i in 0..game.nodes() {
            assert_eq!(y[i], continuation_value(&game, &prev, 4, i));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut policy = random_policy(&game, &mut rng);
        policy.minimizer_acts.iter_mut().for_each(|p| *p = true);
        let y = policy_rhs(&game, &policy, 4, &prev).unwrap();
        for i in 0..game.nodes() {
            let j = policy.minimizer_offset[i].unwrap();
            let eta = j as f64 * game.dx();
            let expected = prev[(i as isize + j) as usize] + eta.abs() + 0.1;
            assert!((y[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn rhs_on_zero_game_takes_three_values() {
        let game = small_game(20);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = random_policy(&game, &mut rng);
        let y = policy_rhs(&game, &policy, 1, &vec![0.0; 21]).unwrap();
        for i in 0..21 {
            let expected = match policy.branch(i) {
                Branch::Continuation => 0.0,
                Branch::Maximizer => -(policy.maximizer_offset[i].unwrap().abs() as f64 * 0.25 + 0.1),
                Branch::Minimizer => policy.minimizer_offset[i].unwrap().abs() as f64 * 0.25 + 0.1,
            };
            assert!((y[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let game = small_game(20);
        let mut policy = PolicySnapshot::passive(21);
        policy.maximizer_acts[3] = true;
        assert!(policy_rhs(&game, &policy, 1, &vec![0.0; 21]).is_err());
        policy.maximizer_offset[3] = Some(100);
        assert!(policy_rhs(&game, &policy, 1, &vec![0.0; 21]).is_err());
        policy.maximizer_offset[3] = Some(-3);
        assert!(policy_rhs(&game, &policy, 1, &vec![0.0; 21]).is_ok());
    }

    #[test]
    fn evaluation_examples() {
        let game = small_game(20);
        let passive = PolicySnapshot::passive(21);
        assert_eq!(policy_evaluation(&game, &passive, 1, &vec![0.0; 21]).unwrap(), vec![0.0; 21]);

        // σ ≡ 0: A = I, so evaluation returns the right-hand side itself.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = random_policy(&game, &mut rng);
        let prev: Vec<f64> = (0..21).map(|i| (i as f64).cos()).collect();
        assert_eq!(
            policy_evaluation(&game, &policy, 2, &prev).unwrap(),
            policy_rhs(&game, &policy, 2, &prev).unwrap()
        );
    }

    #[test]
    fn evaluation_matches_dense_solve() {
        let mut game = small_game(12);
        game.problem.volatility = coefficient(|_, x| 0.2 + 0.3 * x);
        game.problem.drift = coefficient(|_, x| 1.0 - x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prev: Vec<f64> = (0..13).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..5 {
            let policy = random_policy(&game, &mut rng);
            let v = policy_evaluation(&game, &policy, 3, &prev).unwrap();
            let a = policy_matrix(&game, &policy, 3).to_dense();
            let dense = DMatrix::from_row_slice(13, 13, &a.concat());
            let y = DMatrix::from_column_slice(13, 1, &policy_rhs(&game, &policy, 3, &prev).unwrap());
            let oracle = dense.try_inverse().unwrap() * y;
            for i in 0..13 {
                assert!((v[i] - oracle[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn improvement_on_zero_game_is_passive() {
        let game = small_game(20);
        let policy = policy_improvement(&game, 1, &vec![0.0; 21]);
        assert!(policy.minimizer_acts.iter().all(|p| !p));
        assert!(policy.maximizer_acts.iter().all(|q| !q));
        assert!(policy.same_decisions(&PolicySnapshot::passive(21)));
        assert_eq!(policy, policy_improvement(&game, 1, &vec![0.0; 21]));
    }

    #[test]
    fn improvement_chases_a_spike() {
        // Spike of height 5 at x = 2.5 (node 10 of 20, Δx = 0.25); no drift or
        // volatility, so continuation is the previous value itself.
        let game = small_game(20);
        let mut prev = vec![0.0; 21];
        prev[10] = 5.0;
        let policy = policy_improvement(&game, 1, &prev);
        let cost = |i: usize, j: usize| (j as f64 - i as f64).abs() * 0.25 + 0.1;
        for i in 0..21 {
            let others = (0..21).filter(|&j| j != i);
            let sup = others.clone().map(|j| prev[j] - cost(i, j)).fold(f64::MIN, f64::max);
            let inf = others.map(|j| prev[j] + cost(i, j)).fold(f64::MAX, f64::min);
            let cont = prev[i];
            assert_eq!(policy.maximizer_acts[i], sup > cont, "node {i}");
            assert_eq!(policy.minimizer_acts[i], inf < cont.max(sup), "node {i}");
            if i != 10 {
                // Every other node profits from jumping onto the spike.
                assert!(policy.maximizer_acts[i]);
                assert_eq!(policy.maximizer_offset[i], Some(10 - i as isize));
            }
        }
        assert!(!policy.maximizer_acts[10]);
    }

    #[test]
    fn improving_maximizer_never_lowers_value() {
        let game = exchange();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let prev: Vec<f64> = game.grids.space.nodes().map(|x| -(x - 1.5).powi(2) * 0.2).collect();
        let best = policy_improvement(&game, 6, &prev);
        for _ in 0..20 {
            let policy = random_policy(&game, &mut rng);
            let before = policy_evaluation(&game, &policy, 6, &prev).unwrap();
            let mut better = policy.clone();
            better.maximizer_acts = best.maximizer_acts.clone();
            better.maximizer_offset = best.maximizer_offset.clone();
            let after = policy_evaluation(&game, &better, 6, &prev).unwrap();
            for i in 0..game.nodes() {
                assert!(after[i] >= before[i] - 1e-12, "node {i}");
            }
        }
    }

    #[test]
    fn howard_examples() {
        let game = small_game(20);
        let (v, policy, report) = howard_step(&game, 1, &vec![0.0; 21], HowardSettings::default()).unwrap();
        assert_eq!(v, vec![0.0; 21]);
        assert!(report.converged && report.iterations <= 2);
        assert!(policy.same_decisions(&PolicySnapshot::passive(21)));

        let mut forcing = small_game(20);
        forcing.problem.running_reward = coefficient(|_, _| 1.0);
        let prev = vec![0.35; 21];
        let (v, policy, report) = howard_step(&forcing, 8, &prev, HowardSettings::default()).unwrap();
        assert!(report.converged);
        assert!(policy.same_decisions(&PolicySnapshot::passive(21)));
        assert!(v.iter().all(|&x| (x - 0.4).abs() < 1e-14));

        let bad = HowardSettings { tolerance: 0.0, ..Default::default() };
        assert!(howard_step(&game, 1, &vec![0.0; 21], bad).is_err());
    }

    #[test]
    fn howard_agrees_with_direct_step() {
        let game = exchange();
        let field = solve(&game).unwrap().field;
        for n in 1..=game.steps() {
            let (v, _, report) = howard_step(&game, n, field.row(n - 1), HowardSettings::default()).unwrap();
            let (direct, _) = step(&game, field.row(n - 1), n).unwrap();
            assert!(max_abs_diff(&v, &direct) <= 1e-10);
            assert!(report.iterations <= 2 && report.converged);
            assert!(report.residual <= 1e-9);
        }
        let (howard_field, _, _) = howard_solve(&game, HowardSettings::default()).unwrap();
        for n in 0..=game.steps() {
            assert!(max_abs_diff(howard_field.row(n), field.row(n)) <= 1e-10);
        }
    }

    #[test]
    fn howard_policy_matches_branch_provenance() {
        let game = exchange();
        let sol = solve(&game).unwrap();
        let (_, policies, _) = howard_solve(&game, HowardSettings::default()).unwrap();
        for (policy, report) in policies.iter().zip(&sol.reports) {
            for i in 0..game.nodes() {
                assert_eq!(policy.branch(i), report.branches[i]);
            }
        }
    }
}
