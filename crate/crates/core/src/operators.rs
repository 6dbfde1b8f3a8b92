//! Grid-local kernels: clamped linear interpolation, the second difference
//! with zero boundary rows, and the discrete intervention operators.

use std::cmp::Ordering;

use crate::problem::{DiscreteGame, SpatialGrid};

/// `(1 − α)·a + α·b`, exact at the endpoints even for infinite operands.
pub(crate) fn blend(a: f64, b: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        a
    } else if alpha >= 1.0 {
        b
    } else {
        alpha * b + (1.0 - alpha) * a
    }
}

/// Bracketing node `k` and weight `α` with `x = x_k + α·Δx`, after clamping
/// `x` into the grid.
pub(crate) fn locate(grid: &SpatialGrid, x: f64) -> (usize, f64) {
    if x <= grid.x_min() {
        return (0, 0.0);
    }
    if x >= grid.x_max() {
        return (grid.intervals(), 0.0);
    }
    let s = (x - grid.x_min()) / grid.dx();
    let k = (s.floor() as usize).min(grid.intervals() - 1);
    (k, s - k as f64)
}

/// Linear interpolation of a nodal row at `x`. No extrapolation: values outside
/// `[x_0, x_M]` are clamped to the boundary values.
pub fn interpolate(row: &[f64], grid: &SpatialGrid, x: f64) -> f64 {
    debug_assert_eq!(row.len(), grid.len());
    let (k, alpha) = locate(grid, x);
    if k == grid.intervals() {
        return row[k];
    }
    blend(row[k], row[k + 1], alpha)
}

/// Centered second difference; zero at both boundary nodes.
pub fn second_difference(row: &[f64], dx: f64, i: usize) -> f64 {
    let last = row.len() - 1;
    if i == 0 || i >= last {
        return 0.0;
    }
    (row[i + 1] - 2.0 * row[i] + row[i - 1]) / (dx * dx)
}

/// Value and argument of a discrete intervention operator at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionResult {
    /// `−∞` (sup) or `+∞` (inf) when the impulse set is empty.
    pub value: f64,
    /// Chosen node offset; meaningless when `obstacle_active` is false.
    pub offset: isize,
    /// Chosen displacement `offset·Δx`.
    pub impulse: f64,
    pub obstacle_active: bool,
}

impl InterventionResult {
    fn inactive(value: f64) -> Self {
        Self { value, offset: 0, impulse: 0.0, obstacle_active: false }
    }

    /// Target node of the chosen impulse.
    pub fn target(&self, node: usize) -> Option<usize> {
        self.obstacle_active.then(|| (node as isize + self.offset) as usize)
    }
}

/// Preference order among equally good impulses: smaller |offset| first, then
/// the more negative one.
pub(crate) fn tie_order(a: isize, b: isize) -> Ordering {
    a.unsigned_abs().cmp(&b.unsigned_abs()).then(a.cmp(&b))
}

fn select(
    game: &DiscreteGame,
    offsets: &[isize],
    mut score: impl FnMut(isize) -> f64,
    better: impl Fn(f64, f64) -> bool,
    empty: f64,
) -> InterventionResult {
    let mut best: Option<(isize, f64)> = None;
    for &j in offsets {
        let v = score(j);
        best = match best {
            None => Some((j, v)),
            Some((bj, bv)) => {
                if better(v, bv) || (v == bv && tie_order(j, bj) == Ordering::Less) {
                    Some((j, v))
                } else {
                    Some((bj, bv))
                }
            }
        };
    }
    match best {
        None => InterventionResult::inactive(empty),
        Some((offset, value)) => InterventionResult {
            value,
            offset,
            impulse: game.displacement(offset),
            obstacle_active: true,
        },
    }
}

/// `(H^c V)_i = max_ξ [ e^(−λh)·V(x_i + ξ) − c(τ^n, ξ) ]` over the maximizer's
/// impulse set at node `i`. `row_prev` is the value row at level `n − 1`.
pub fn intervention_sup(game: &DiscreteGame, row_prev: &[f64], level: usize, node: usize) -> InterventionResult {
    let t = game.time(level);
    let disc = game.continuation_discount();
    let cost = &game.problem.maximizer_cost;
    select(
        game,
        game.maximizer_impulses.at(node),
        |j| disc * row_prev[(node as isize + j) as usize] - cost(t, game.displacement(j)),
        |v, best| v > best,
        f64::NEG_INFINITY,
    )
}

/// `(H^χ V)_i = min_η [ e^(−λh)·V(x_i + η) + χ(τ^n, η) ]` over the minimizer's
/// impulse set at node `i`.
pub fn intervention_inf(game: &DiscreteGame, row_prev: &[f64], level: usize, node: usize) -> InterventionResult {
    let t = game.time(level);
    let disc = game.continuation_discount();
    let cost = &game.problem.minimizer_cost;
    select(
        game,
        game.minimizer_impulses.at(node),
        |j| disc * row_prev[(node as isize + j) as usize] + cost(t, game.displacement(j)),
        |v, best| v < best,
        f64::INFINITY,
    )
}
