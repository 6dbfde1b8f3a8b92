//! Semi-Lagrangian explicit-impulse timestepping.
//!
//! Each backward level solves one tridiagonal system
//!
//! ```text
//! V^n_i − ½hσ_i²(D²V^n)_i = min{ max[ Ṽ^{n−1}(x_i + h·b_i) + h·f_i , (H^c V^{n−1})_i ], (H^χ V^{n−1})_i }
//! ```
//!
//! where the intervention operators read the previous level only, so the
//! right-hand side is explicit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::{intervention_inf, intervention_sup, interpolate, second_difference, InterventionResult};
use crate::problem::DiscreteGame;

/// Pivot magnitude below which elimination is reported as broken down.
pub const PIVOT_THRESHOLD: f64 = 1e-14;

/// Tridiagonal matrix with `sub[0]` and `sup[last]` unused (kept at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn identity(n: usize) -> Self {
        Self { sub: vec![0.0; n], main: vec![1.0; n], sup: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.main[i] * v[i];
                if i > 0 {
                    s += self.sub[i] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = self.main[i];
            if i > 0 {
                rows[i][i - 1] = self.sub[i];
            }
            if i + 1 < n {
                rows[i][i + 1] = self.sup[i];
            }
        }
        rows
    }

    /// Forward elimination, reusable for several right-hand sides.
    pub fn factorize(&self) -> Result<TridiagonalFactor> {
        let n = self.len();
        let mut upper = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        for i in 0..n {
            let pivot = if i == 0 { self.main[0] } else { self.main[i] - self.sub[i] * upper[i - 1] };
            if !(pivot.abs() >= PIVOT_THRESHOLD) {
                return Err(Error::SingularPivot { row: i, pivot, threshold: PIVOT_THRESHOLD });
            }
            pivots[i] = pivot;
            if i + 1 < n {
                upper[i] = self.sup[i] / pivot;
            }
        }
        Ok(TridiagonalFactor { sub: self.sub.clone(), upper, pivots })
    }
}

/// Thomas-algorithm factors of a [`TridiagonalOperator`].
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    sub: Vec<f64>,
    upper: Vec<f64>,
    pivots: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let n = self.pivots.len();
        assert_eq!(y.len(), n, "right-hand side length mismatch");
        let mut z = vec![0.0; n];
        for i in 0..n {
            let carry = if i == 0 { 0.0 } else { self.sub[i] * z[i - 1] };
            z[i] = (y[i] - carry) / self.pivots[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            z[i] -= self.upper[i] * z[i + 1];
        }
        z
    }
}

/// Direct solve of `A·v = y`, no pivoting.
pub fn solve_tridiagonal(a: &TridiagonalOperator, y: &[f64]) -> Result<Vec<f64>> {
    Ok(a.factorize()?.solve(y))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `A = I − ½·h·diag(σ²)·D²` at level `n`, with identity boundary rows.
pub fn assemble_matrix(game: &DiscreteGame, level: usize) -> TridiagonalOperator {
    let len = game.nodes();
    let t = game.time(level);
    let scale = game.h() / (game.dx() * game.dx());
    let mut a = TridiagonalOperator::identity(len);
    for i in 1..len - 1 {
        let sigma = (game.problem.volatility)(t, game.x(i));
        let r = scale * sigma * sigma;
        a.main[i] = 1.0 + r;
        a.sub[i] = -0.5 * r;
        a.sup[i] = -0.5 * r;
    }
    a
}

/// `ο^n_i = ½·h·σ(τ^n, x_i)²·(D²V^n)_i`.
pub fn omicron(game: &DiscreteGame, level: usize, node: usize, row: &[f64]) -> f64 {
    let sigma = (game.problem.volatility)(game.time(level), game.x(node));
    0.5 * game.h() * sigma * sigma * second_difference(row, game.dx(), node)
}

/// Semi-Lagrangian continuation `e^(−λh)·Ṽ^{n−1}(x_i + h·b_i) + h·f_i`.
pub fn continuation_value(game: &DiscreteGame, row_prev: &[f64], level: usize, node: usize) -> f64 {
    let t = game.time(level);
    let x = game.x(node);
    let foot = x + game.h() * (game.problem.drift)(t, x);
    game.continuation_discount() * interpolate(row_prev, &game.grids.space, foot)
        + game.h() * (game.problem.running_reward)(t, x)
}

/// Which right-hand-side branch produced a node's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Continuation,
    Maximizer,
    Minimizer,
}

impl Branch {
    /// Label used in region tables.
    pub fn label(self) -> &'static str {
        match self {
            Branch::Continuation => "C",
            Branch::Maximizer => "MAX",
            Branch::Minimizer => "MIN",
        }
    }

    /// Strict comparisons, ties resolved to "no intervention".
    pub fn select(continuation: f64, sup: f64, inf: f64) -> Self {
        if inf < continuation.max(sup) {
            Branch::Minimizer
        } else if sup > continuation {
            Branch::Maximizer
        } else {
            Branch::Continuation
        }
    }
}

/// Everything the right-hand side of one level is built from.
#[derive(Debug, Clone)]
pub struct RhsRow {
    pub level: usize,
    pub y: Vec<f64>,
    pub continuation: Vec<f64>,
    pub sup: Vec<InterventionResult>,
    pub inf: Vec<InterventionResult>,
    pub branch: Vec<Branch>,
}

/// `y_i = min{ max[continuation_i, (H^c V^{n−1})_i], (H^χ V^{n−1})_i }` with
/// per-node branch provenance.
pub fn assemble_rhs(game: &DiscreteGame, level: usize, row_prev: &[f64]) -> RhsRow {
    let nodes: Vec<(f64, InterventionResult, InterventionResult)> = (0..game.nodes())
        .into_par_iter()
        .map(|i| {
            (
                continuation_value(game, row_prev, level, i),
                intervention_sup(game, row_prev, level, i),
                intervention_inf(game, row_prev, level, i),
            )
        })
        .collect();
    let mut rhs = RhsRow {
        level,
        y: Vec::with_capacity(nodes.len()),
        continuation: Vec::with_capacity(nodes.len()),
        sup: Vec::with_capacity(nodes.len()),
        inf: Vec::with_capacity(nodes.len()),
        branch: Vec::with_capacity(nodes.len()),
    };
    for (cont, sup, inf) in nodes {
        rhs.y.push(cont.max(sup.value).min(inf.value));
        rhs.branch.push(Branch::select(cont, sup.value, inf.value));
        rhs.continuation.push(cont);
        rhs.sup.push(sup);
        rhs.inf.push(inf);
    }
    rhs
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeStepReport {
    pub level: usize,
    pub continuation_count: usize,
    pub maximizer_count: usize,
    pub minimizer_count: usize,
    /// `‖A·V − y‖∞` of the linear solve.
    pub solve_residual: f64,
    pub branches: Vec<Branch>,
}

impl SchemeStepReport {
    fn new(level: usize, branches: Vec<Branch>, solve_residual: f64) -> Self {
        let count = |b: Branch| branches.iter().filter(|&&x| x == b).count();
        Self {
            level,
            continuation_count: count(Branch::Continuation),
            maximizer_count: count(Branch::Maximizer),
            minimizer_count: count(Branch::Minimizer),
            solve_residual,
            branches,
        }
    }
}

/// One backward level: `V^n = A^{-1}·y(V^{n−1})`.
pub fn step(game: &DiscreteGame, row_prev: &[f64], level: usize) -> Result<(Vec<f64>, SchemeStepReport)> {
    if level == 0 || level > game.steps() {
        return Err(Error::InvalidArgument(format!("step level must be in 1..={}, got {level}", game.steps())));
    }
    let a = assemble_matrix(game, level);
    let rhs = assemble_rhs(game, level, row_prev);
    let v = solve_tridiagonal(&a, &rhs.y)?;
    let solve_residual = max_abs_diff(&a.apply(&v), &rhs.y);
    Ok((v, SchemeStepReport::new(level, rhs.branch, solve_residual)))
}

/// Value rows indexed by backward level: `rows[0]` is the terminal row at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    rows: Vec<Vec<f64>>,
}

impl ValueField {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty(), "a value field needs at least the terminal row");
        Self { rows }
    }

    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.rows[level]
    }

    pub fn row_mut(&mut self, level: usize) -> &mut [f64] {
        &mut self.rows[level]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().fold(0.0_f64, |m, r| m.max(max_abs(r)))
    }

    /// Value at backward level `n` and an arbitrary state.
    pub fn value_at(&self, game: &DiscreteGame, level: usize, x: f64) -> f64 {
        interpolate(&self.rows[level], &game.grids.space, x)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: ValueField,
    /// One report per level `1..=N`.
    pub reports: Vec<SchemeStepReport>,
}

/// Backward recursion from `V^0 = g`.
pub fn solve(game: &DiscreteGame) -> Result<Solution> {
    let mut rows = Vec::with_capacity(game.steps() + 1);
    let mut reports = Vec::with_capacity(game.steps());
    rows.push(game.terminal_row());
    for n in 1..=game.steps() {
        let (v, report) = step(game, &rows[n - 1], n)?;
        rows.push(v);
        reports.push(report);
    }
    Ok(Solution { field: ValueField::from_rows(rows), reports })
}

/// Max-norm of the discrete QVI residual per level. Entry 0 is `‖V^0 − g‖∞`.
///
/// For `n ≥ 1` the nodewise residual is
/// `max{ min[ (AV^n)_i − cont_i , V^n_i − (H^c V^{n−1})_i − ο^n_i ], V^n_i − (H^χ V^{n−1})_i − ο^n_i }`.
pub fn residual(game: &DiscreteGame, field: &ValueField) -> Vec<f64> {
    let mut out = Vec::with_capacity(field.levels());
    out.push(max_abs_diff(field.row(0), &game.terminal_row()));
    for n in 1..field.levels() {
        let (prev, cur) = (field.row(n - 1), field.row(n));
        let a = assemble_matrix(game, n);
        let av = a.apply(cur);
        let worst = (0..game.nodes())
            .into_par_iter()
            .map(|i| {
                let cont = continuation_value(game, prev, n, i);
                let sup = intervention_sup(game, prev, n, i).value;
                let inf = intervention_inf(game, prev, n, i).value;
                let o = omicron(game, n, i, cur);
                let pde = av[i] - cont;
                let max_obstacle = cur[i] - sup - o;
                let min_obstacle = cur[i] - inf - o;
                pde.min(max_obstacle).max(min_obstacle).abs()
            })
            .reduce(|| 0.0, f64::max);
        out.push(worst);
    }
    out
}
