//! Numerical certificates for the scheme's structural properties.
//!
//! None of these prove anything. They measure, on concrete grids, the
//! quantities that convergence theory says must behave: order preservation
//! of one timestep, the a priori bound, the obstacle ordering, the M-matrix
//! class of every assembled operator, and shrinking gaps under refinement.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::intervention_inf;
use crate::problem::{coefficient, terminal, DiscreteGame, GameProblem, Grids, SpatialGrid, TemporalGrid};
use crate::scheme::{assemble_matrix, omicron, residual, solve, step, TridiagonalOperator, ValueField};

/// Structural classes of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixClass {
    /// Every row strictly diagonally dominant.
    pub sdd: bool,
    /// Every row weakly diagonally dominant.
    pub wdd: bool,
    /// WDD, and every row reaches an SDD row along nonzero off-diagonals.
    pub wcdd: bool,
    /// All off-diagonal entries ≤ 0.
    pub z_matrix: bool,
    pub nonnegative_diagonal: bool,
    pub positive_diagonal: bool,
}

impl MatrixClass {
    /// The class every assembled scheme operator must have.
    pub fn is_scheme_class(&self) -> bool {
        self.sdd && self.wcdd && self.z_matrix && self.positive_diagonal
    }
}

/// Rows as `(diagonal, [(column, off-diagonal value)])`.
fn classify_rows(rows: &[(f64, Vec<(usize, f64)>)]) -> MatrixClass {
    let n = rows.len();
    let mut strict = vec![false; n];
    let mut class = MatrixClass {
        sdd: true,
        wdd: true,
        wcdd: false,
        z_matrix: true,
        nonnegative_diagonal: true,
        positive_diagonal: true,
    };
    // Reverse adjacency: row i points at column j when a_ij ≠ 0.
    let mut pointed_by = vec![Vec::new(); n];
    for (i, (diag, off)) in rows.iter().enumerate() {
        let off_sum: f64 = off.iter().map(|(_, a)| a.abs()).sum();
        strict[i] = diag.abs() > off_sum;
        class.sdd &= strict[i];
        class.wdd &= diag.abs() >= off_sum;
        class.z_matrix &= off.iter().all(|&(_, a)| a <= 0.0);
        class.nonnegative_diagonal &= *diag >= 0.0;
        class.positive_diagonal &= *diag > 0.0;
        for &(j, a) in off {
            if a != 0.0 {
                pointed_by[j].push(i);
            }
        }
    }
    if class.wdd {
        let mut reached = strict.clone();
        let mut queue: Vec<usize> = (0..n).filter(|&i| strict[i]).collect();
        while let Some(j) = queue.pop() {
            for &i in &pointed_by[j] {
                if !reached[i] {
                    reached[i] = true;
                    queue.push(i);
                }
            }
        }
        class.wcdd = reached.iter().all(|&r| r);
    }
    class
}

/// Classifies a dense square matrix given by rows.
pub fn classify_dense(a: &[Vec<f64>]) -> Result<MatrixClass> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("matrix with {n} rows is not square")));
    }
    let rows: Vec<_> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let off = r.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, &v)| (j, v)).collect();
            (r[i], off)
        })
        .collect();
    Ok(classify_rows(&rows))
}

pub fn classify_tridiagonal(a: &TridiagonalOperator) -> MatrixClass {
    let n = a.len();
    let rows: Vec<_> = (0..n)
        .map(|i| {
            let mut off = Vec::with_capacity(2);
            if i > 0 {
                off.push((i - 1, a.sub[i]));
            }
            if i + 1 < n {
                off.push((i + 1, a.sup[i]));
            }
            (a.main[i], off)
        })
        .collect();
    classify_rows(&rows)
}

pub const INVERSE_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_INVERSE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseCertificate {
    pub passed: bool,
    pub min_entry: f64,
}

/// Inverts densely and checks `A^{-1} ≥ −1e-12` entrywise.
pub fn certify_monotone_inverse(a: &[Vec<f64>], size_limit: usize) -> Result<InverseCertificate> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("matrix with {n} rows is not square")));
    }
    if n == 0 || n > size_limit {
        return Err(Error::InvalidArgument(format!("dimension {n} outside 1..={size_limit}")));
    }
    let dense = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let inverse = dense.try_inverse().ok_or(Error::SingularMatrix)?;
    let min_entry = inverse.iter().copied().fold(f64::INFINITY, f64::min);
    if !min_entry.is_finite() {
        return Err(Error::SingularMatrix);
    }
    Ok(InverseCertificate { passed: min_entry >= -INVERSE_TOLERANCE, min_entry })
}

/// One certified property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// The property being certified, in words.
    pub statement: &'static str,
    pub passed: bool,
    pub measured: f64,
    /// The value `measured` is compared against.
    pub limit: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CertificateReport {
    pub checks: Vec<Check>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: {} | measured {:e}, limit {:e}, tolerance {:e}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.statement,
                c.measured,
                c.limit,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

pub const MONOTONICITY_TOLERANCE: f64 = 1e-10;
pub const OBSTACLE_TOLERANCE: f64 = 1e-9;
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

/// A timestep `(game, V^{n−1}, n) ↦ V^n`.
pub type Stepper<'a> = &'a (dyn Fn(&DiscreteGame, &[f64], usize) -> Result<Vec<f64>> + Sync);

/// Worst `step(W) − step(V)` entry over `trials` random ordered pairs `V ≤ W`.
///
/// `V` is uniform in `[−B, B]` with `B = max(1, stability bound)`. `W` adds
/// a sparse nonnegative bump scaled to max 1, so the pair is strictly ordered
/// somewhere. Trial `k` draws from stream `k`.
pub fn monotonicity_margin(game: &DiscreteGame, trials: usize, seed: u64, stepper: Stepper<'_>) -> Result<f64> {
    let nodes = game.nodes();
    let scale = game.stability_bound().max(1.0);
    let margins: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let level = rng.gen_range(1..=game.steps());
            let v: Vec<f64> = (0..nodes).map(|_| scale * rng.gen_range(-1.0..=1.0)).collect();
            let mut bump: Vec<f64> =
                (0..nodes).map(|_| if rng.gen_bool(0.2) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
            bump[rng.gen_range(0..nodes)] = 1.0;
            let top = bump.iter().copied().fold(0.0, f64::max);
            let w: Vec<f64> = v.iter().zip(&bump).map(|(a, d)| a + d / top).collect();
            let sv = stepper(game, &v, level)?;
            let sw = stepper(game, &w, level)?;
            Ok(sw.iter().zip(&sv).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_>>()?;
    Ok(margins.into_iter().fold(f64::INFINITY, f64::min))
}

/// `max_n,i V^n_i − (H^χ V^{n−1})_i − ο^n_i`; `−∞` when no node has a minimizer impulse.
pub fn obstacle_margin(game: &DiscreteGame, field: &ValueField) -> f64 {
    (1..field.levels())
        .into_par_iter()
        .map(|n| {
            let (prev, cur) = (field.row(n - 1), field.row(n));
            (0..game.nodes())
                .map(|i| cur[i] - intervention_inf(game, prev, n, i).value - omicron(game, n, i, cur))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Runs every certificate with the scheme's own timestep.
pub fn certify_scheme(game: &DiscreteGame, trials: usize, seed: u64) -> Result<CertificateReport> {
    let stepper = |g: &DiscreteGame, row: &[f64], n: usize| step(g, row, n).map(|(v, _)| v);
    certify_scheme_with(game, trials, seed, &stepper)
}

/// As [`certify_scheme`], with the monotonicity trials run against `stepper`.
pub fn certify_scheme_with(
    game: &DiscreteGame,
    trials: usize,
    seed: u64,
    stepper: Stepper<'_>,
) -> Result<CertificateReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one monotonicity trial".into()));
    }
    let mut checks = Vec::new();

    let margin = monotonicity_margin(game, trials, seed, stepper)?;
    checks.push(Check {
        name: "monotonicity",
        statement: "ordered inputs V <= W give ordered timesteps S(V) <= S(W)",
        passed: margin >= -MONOTONICITY_TOLERANCE,
        measured: margin,
        limit: 0.0,
        tolerance: MONOTONICITY_TOLERANCE,
    });

    let field = solve(game)?.field;
    let bound = game.stability_bound();
    let peak = field.max_abs();
    checks.push(Check {
        name: "stability",
        statement: "max |V| <= T*sup|f| + sup|g|",
        passed: peak <= bound,
        measured: peak,
        limit: bound,
        tolerance: 0.0,
    });

    let obstacle = obstacle_margin(game, &field);
    checks.push(Check {
        name: "obstacle ordering",
        statement: "V^n <= H^chi V^(n-1) + o^n at every node",
        passed: obstacle <= OBSTACLE_TOLERANCE,
        measured: obstacle,
        limit: 0.0,
        tolerance: OBSTACLE_TOLERANCE,
    });

    let worst_residual = residual(game, &field).into_iter().fold(0.0, f64::max);
    checks.push(Check {
        name: "residual",
        statement: "the solved field annihilates the discrete QVI residual",
        passed: worst_residual <= RESIDUAL_TOLERANCE,
        measured: worst_residual,
        limit: 0.0,
        tolerance: RESIDUAL_TOLERANCE,
    });

    let off_class = (1..=game.steps()).filter(|&n| !classify_tridiagonal(&assemble_matrix(game, n)).is_scheme_class()).count();
    checks.push(Check {
        name: "matrix class",
        statement: "every level operator is SDD, WCDD, a Z-matrix with positive diagonal",
        passed: off_class == 0,
        measured: off_class as f64,
        limit: 0.0,
        tolerance: 0.0,
    });

    if game.nodes() <= DEFAULT_INVERSE_LIMIT {
        let min_entry = (1..=game.steps())
            .map(|n| certify_monotone_inverse(&assemble_matrix(game, n).to_dense(), DEFAULT_INVERSE_LIMIT).map(|c| c.min_entry))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        checks.push(Check {
            name: "monotone inverse",
            statement: "every level operator has an entrywise nonnegative inverse",
            passed: min_entry >= -INVERSE_TOLERANCE,
            measured: min_entry,
            limit: 0.0,
            tolerance: INVERSE_TOLERANCE,
        });
    }

    let (gap, allowed) = impulse_set_gap(game)?;
    checks.push(Check {
        name: "impulse set gap",
        statement: "every impulse set is within stride*dx of its continuum interval in Hausdorff distance",
        passed: gap <= allowed + 1e-12,
        measured: gap,
        limit: allowed,
        tolerance: 1e-12,
    });

    Ok(CertificateReport { checks })
}

/// Hausdorff distance between a finite set and the interval `[lo, hi]`.
pub fn hausdorff_gap(set: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("Hausdorff distance of an empty set".into()));
    }
    if !(lo <= hi) || set.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad interval [{lo}, {hi}] or non-finite set")));
    }
    let mut sorted = set.to_vec();
    sorted.sort_by(f64::total_cmp);
    let to_set = |y: f64| sorted.iter().map(|s| (y - s).abs()).fold(f64::INFINITY, f64::min);
    // Distance to a finite set is piecewise linear with peaks at midpoints.
    let mut worst = to_set(lo).max(to_set(hi));
    for w in sorted.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if (lo..=hi).contains(&mid) {
            worst = worst.max(to_set(mid));
        }
    }
    for &s in &sorted {
        worst = worst.max(lo - s).max(s - hi);
    }
    Ok(worst)
}

/// Largest Hausdorff gap over all nodes and both players, with the allowed
/// `stride·Δx` (taken as the largest spacing between consecutive offsets).
pub fn impulse_set_gap(game: &DiscreteGame) -> Result<(f64, f64)> {
    let space = &game.grids.space;
    let mut worst = 0.0_f64;
    let mut allowed = game.dx();
    for sets in [&game.maximizer_impulses, &game.minimizer_impulses] {
        for i in 0..game.nodes() {
            let offsets = sets.at(i);
            if offsets.is_empty() {
                continue;
            }
            let set: Vec<f64> = offsets.iter().map(|&j| game.displacement(j)).collect();
            let x = game.x(i);
            worst = worst.max(hausdorff_gap(&set, space.x_min() - x, space.x_max() - x)?);
            let mut sorted = offsets.to_vec();
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                // The excluded zero impulse leaves a double gap around the origin.
                let spacing = if w[0] < 0 && w[1] > 0 { (w[1] - w[0]) / 2 } else { w[1] - w[0] };
                allowed = allowed.max(game.displacement(spacing));
            }
        }
    }
    Ok((worst, allowed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    /// 1 compares the base grid with its first halving.
    pub level: usize,
    /// Time step of the coarser grid in the pair.
    pub h: f64,
    pub dx: f64,
    /// Sup-norm difference over the space-time nodes of the base grid.
    pub gap: f64,
}

/// Halves `h` and `Δx` together `halvings` times and reports the gap between
/// each consecutive pair of solutions, both sampled at the base grid's nodes
/// (the nodes shared by every resolution).
pub fn refinement_study(game: &DiscreteGame, halvings: usize) -> Result<Vec<RefinementRow>> {
    if halvings < 2 {
        return Err(Error::InvalidArgument(format!("refinement needs at least 2 halvings, got {halvings}")));
    }
    study(game, halvings)
}

/// `‖V^(h) − V^(h/2)‖∞` over the nodes of `game`'s grid.
pub fn halving_gap(game: &DiscreteGame) -> Result<f64> {
    Ok(study(game, 1)?[0].gap)
}

fn study(game: &DiscreteGame, halvings: usize) -> Result<Vec<RefinementRow>> {
    let (base_levels, base_nodes) = (game.steps() + 1, game.nodes());
    let mut rows = Vec::with_capacity(halvings);
    let mut coarse_game = game.clone();
    let mut coarse = solve(&coarse_game)?.field;
    for level in 1..=halvings {
        let fine_game = coarse_game.refined()?;
        let fine = solve(&fine_game)?.field;
        let s = 1usize << (level - 1);
        let gap = (0..base_levels)
            .map(|n| {
                let (c, f) = (coarse.row(n * s), fine.row(2 * n * s));
                (0..base_nodes).map(|i| (c[i * s] - f[2 * i * s]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        rows.push(RefinementRow { level, h: coarse_game.h(), dx: coarse_game.dx(), gap });
        coarse_game = fine_game;
        coarse = fine;
    }
    Ok(rows)
}

/// A random well-posed game on `[0, 2]` with `M = 40`, `N = 10`, `T = 1`.
///
/// Coefficients satisfy `|b| ≤ 1`, `0.1 ≤ σ ≤ 1`, `|f| ≤ 1`, `|g| ≤ 1`, and
/// costs are `λ|z| + k` with `k ∈ [0.1, 0.5]`. The terminal reward oscillates
/// by at most 0.1 around its mean so that no impulse beats waiting at `T`.
pub fn random_instance(rng: &mut impl Rng) -> DiscreteGame {
    let (b0, b1): (f64, f64) = (rng.gen_range(-0.5..=0.5), rng.gen_range(-0.5..=0.5));
    let (s0, s1): (f64, f64) = (rng.gen_range(0.3..=0.7), rng.gen_range(-0.2..=0.2));
    let (f0, f1, w): (f64, f64, f64) = (rng.gen_range(-0.5..=0.5), rng.gen_range(-0.5..=0.5), rng.gen_range(0.5..=3.0));
    let (g0, g1): (f64, f64) = (rng.gen_range(-0.95..=0.95), rng.gen_range(0.5..=3.0));
    let mut problem = GameProblem::with_linear_costs(
        rng.gen_range(0.0..=1.0),
        rng.gen_range(0.1..=0.5),
        rng.gen_range(0.0..=1.0),
        rng.gen_range(0.1..=0.5),
    );
    problem.drift = coefficient(move |_, x: f64| b0 + b1 * x.sin());
    problem.volatility = coefficient(move |_, x: f64| s0 + s1 * x.cos());
    problem.running_reward = coefficient(move |t, x: f64| f0 + f1 * (w * x + t).sin());
    problem.terminal_reward = terminal(move |x: f64| g0 + 0.05 * (g1 * x).sin());
    problem.discount = rng.gen_range(0.0..=0.5);
    let grids = Grids::new(
        TemporalGrid::new(1.0, 10).expect("valid time grid"),
        SpatialGrid::new(0.0, 2.0, 40).expect("valid space grid"),
    );
    DiscreteGame::new(problem, grids).expect("random instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{validate, ExchangeRateInstance};
    use crate::scheme::solve_tridiagonal;
    use proptest::prelude::*;

    fn exchange() -> DiscreteGame {
        let ex = ExchangeRateInstance::default();
        DiscreteGame::new(ex.problem(1), ExchangeRateInstance::reference_grids()).unwrap()
    }

    fn zero_game() -> DiscreteGame {
        let p = GameProblem::with_linear_costs(1.0, 0.1, 1.0, 0.1);
        let grids = Grids::new(TemporalGrid::new(1.0, 20).unwrap(), SpatialGrid::new(0.0, 5.0, 100).unwrap());
        DiscreteGame::new(p, grids).unwrap()
    }

    /// Independent oracle: WCDD by explicit walks, one BFS per row.
    fn wcdd_by_walks(a: &[Vec<f64>]) -> bool {
        let n = a.len();
        let strict = |i: usize| a[i][i].abs() > (0..n).filter(|&j| j != i).map(|j| a[i][j].abs()).sum::<f64>();
        let weak = (0..n).all(|i| a[i][i].abs() >= (0..n).filter(|&j| j != i).map(|j| a[i][j].abs()).sum::<f64>());
        weak && (0..n).all(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                if strict(i) {
                    return true;
                }
                if std::mem::replace(&mut seen[i], true) {
                    continue;
                }
                stack.extend((0..n).filter(|&j| j != i && a[i][j] != 0.0));
            }
            false
        })
    }

    #[test]
    fn classify_examples() {
        let c = classify_dense(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(c.wdd && !c.sdd && !c.wcdd && c.z_matrix);
        let c = classify_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(c.sdd && c.wcdd);
        // Chain: only the last row is strict, yet every row walks to it.
        let chain = vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0], vec![0.0, 0.0, 1.0]];
        let c = classify_dense(&chain).unwrap();
        assert!(c.wcdd && !c.sdd);
        assert!(classify_dense(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn assembled_operators_are_monotone_matrices() {
        let game = exchange();
        for n in 1..=game.steps() {
            let a = assemble_matrix(&game, n);
            let class = classify_tridiagonal(&a);
            assert!(class.is_scheme_class(), "level {n}: {class:?}");
            assert_eq!(class, classify_dense(&a.to_dense()).unwrap());
        }
        let small = DiscreteGame::new(
            ExchangeRateInstance::default().problem(1),
            Grids::new(TemporalGrid::new(1.0, 20).unwrap(), SpatialGrid::new(0.0, 5.0, 50).unwrap()),
        )
        .unwrap();
        let cert = certify_monotone_inverse(&assemble_matrix(&small, 20).to_dense(), 200).unwrap();
        assert!(cert.passed && cert.min_entry >= 0.0, "{cert:?}");
    }

    #[test]
    fn inverse_examples() {
        let cert = certify_monotone_inverse(&[vec![1.0, 0.0], vec![0.0, -1.0]], 200).unwrap();
        assert!(!cert.passed && cert.min_entry == -1.0);
        let id = TridiagonalOperator::identity(4).to_dense();
        assert_eq!(certify_monotone_inverse(&id, 200).unwrap(), InverseCertificate { passed: true, min_entry: 0.0 });
        assert!(matches!(
            certify_monotone_inverse(&[vec![1.0, 1.0], vec![1.0, 1.0]], 200),
            Err(Error::SingularMatrix)
        ));
        assert!(certify_monotone_inverse(&TridiagonalOperator::identity(201).to_dense(), 200).is_err());
    }

    #[test]
    fn inverse_columns_match_tridiagonal_solves() {
        let game = exchange();
        let a = assemble_matrix(&game, 7);
        let inverse = DMatrix::from_fn(a.len(), a.len(), |i, j| a.to_dense()[i][j]).try_inverse().unwrap();
        for col in [0, 13, 50, 100] {
            let mut e = vec![0.0; a.len()];
            e[col] = 1.0;
            let x = solve_tridiagonal(&a, &e).unwrap();
            for (i, xi) in x.iter().enumerate() {
                assert!((xi - inverse[(i, col)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn certify_exchange() {
        let report = certify_scheme(&exchange(), 100, 7).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks.len(), 7);
        assert!(report.check("stability").unwrap().measured < 16.0);
    }

    #[test]
    fn certify_zero_game_has_zero_margins() {
        let report = certify_scheme(&zero_game(), 10, 0).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.check("stability").unwrap().measured, 0.0);
        assert_eq!(report.check("residual").unwrap().measured, 0.0);
    }

    #[test]
    fn sign_flipped_operator_breaks_monotonicity() {
        let corrupted = |g: &DiscreteGame, row: &[f64], n: usize| {
            let rhs = crate::scheme::assemble_rhs(g, n, row);
            let mut a = assemble_matrix(g, n);
            a.sub.iter_mut().for_each(|v| *v = -*v);
            a.sup.iter_mut().for_each(|v| *v = -*v);
            solve_tridiagonal(&a, &rhs.y)
        };
        let report = certify_scheme_with(&exchange(), 20, 3, &corrupted).unwrap();
        let check = report.check("monotonicity").unwrap();
        assert!(!check.passed && check.measured < -1e-3, "{check:?}");
        assert!(!report.passed());
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff_gap(&[-1.0, 1.0], -1.0, 1.0).unwrap(), 1.0);
        assert_eq!(hausdorff_gap(&[0.5], 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(hausdorff_gap(&[3.0], 0.0, 1.0).unwrap(), 3.0);
        assert!(hausdorff_gap(&[], 0.0, 1.0).is_err());

        let game = exchange();
        let set: Vec<f64> = game.maximizer_impulses.at(50).iter().map(|&j| game.displacement(j)).collect();
        assert_eq!(set.len(), 100);
        assert!((hausdorff_gap(&set, -2.5, 2.5).unwrap() - 0.05).abs() < 1e-12);
        let (gap, allowed) = impulse_set_gap(&game).unwrap();
        assert!(gap <= allowed + 1e-12 && (allowed - 0.05).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn classify_agrees_with_walk_oracle(
            entries in proptest::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], 16),
        ) {
            let a: Vec<Vec<f64>> = entries.chunks(4).map(|r| r.to_vec()).collect();
            prop_assert_eq!(classify_dense(&a).unwrap().wcdd, wcdd_by_walks(&a));
        }

        #[test]
        fn hausdorff_matches_fine_sampling(
            mut set in proptest::collection::vec(-3.0..3.0f64, 1..6),
            lo in -2.0..0.0f64,
            width in 0.0..2.0f64,
        ) {
            set.iter_mut().for_each(|s| *s = (*s * 8.0).round() / 8.0);
            let hi = lo + width;
            let exact = hausdorff_gap(&set, lo, hi).unwrap();
            let samples = 4000;
            let sampled = (0..=samples)
                .map(|k| lo + width * k as f64 / samples as f64)
                .map(|y| set.iter().map(|s| (y - s).abs()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
                .max(set.iter().map(|&s| (lo - s).max(s - hi).max(0.0)).fold(0.0, f64::max));
            prop_assert!(exact >= sampled - 1e-12);
            prop_assert!(exact <= sampled + width / samples as f64 + 1e-12);
        }
    }

    #[test]
    fn refinement_examples() {
        let zero = DiscreteGame::new(
            GameProblem::with_linear_costs(1.0, 0.1, 1.0, 0.1),
            Grids::new(TemporalGrid::new(1.0, 4).unwrap(), SpatialGrid::new(0.0, 1.0, 8).unwrap()),
        )
        .unwrap();
        let rows = refinement_study(&zero, 2).unwrap();
        assert!(rows.iter().all(|r| r.gap == 0.0));
        assert_eq!((rows[0].h, rows[1].h), (0.25, 0.125));

        // Fixed costs above h·f, so buying out a step of forcing never pays.
        let mut forcing = zero.clone();
        forcing.problem = GameProblem::with_linear_costs(1.0, 0.3, 1.0, 0.3);
        forcing.problem.running_reward = coefficient(|_, _| 1.0);
        let fr = refinement_study(&forcing, 3).unwrap();
        assert!(fr.iter().all(|r| r.gap <= 1e-12), "{fr:?}");

        // With the cheapest minimizer impulse (0.1 + 0.125) below h = 0.25, the
        // minimizer skips every coarse step, so only the coarse field differs.
        forcing.problem = GameProblem::with_linear_costs(1.0, 0.1, 1.0, 0.1);
        forcing.problem.running_reward = coefficient(|_, _| 1.0);
        let coarse = solve(&forcing).unwrap().field;
        assert!(coarse.rows().iter().enumerate().all(|(n, r)| r.iter().all(|v| (v - 0.225 * n as f64).abs() < 1e-12)));
        let fr = refinement_study(&forcing, 2).unwrap();
        assert!((fr[0].gap - 0.1).abs() < 1e-12 && fr[1].gap <= 1e-12, "{fr:?}");
        assert!(refinement_study(&zero, 1).is_err());
        assert_eq!(halving_gap(&zero).unwrap(), 0.0);
    }

    #[test]
    fn random_instances_are_valid_and_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let game = random_instance(&mut rng);
            let v = validate(&game);
            assert!(v.passed(), "{v}");
            let report = certify_scheme(&game, 10, 1).unwrap();
            assert!(report.passed(), "{report}");
        }
    }
}
