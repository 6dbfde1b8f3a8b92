//! Game instances, grids and impulse sets.
//!
//! A [`GameProblem`] holds the continuous data of the game (coefficients,
//! rewards, intervention costs, discount). Pairing it with a [`Grids`] and
//! building the finite impulse sets yields a [`DiscreteGame`], which is what
//! every numerical routine in this crate consumes.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Function of `(t, x)`.
pub type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Function of `x` only.
pub type Terminal = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn coefficient(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Coefficient {
    Arc::new(f)
}

pub fn terminal(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Terminal {
    Arc::new(f)
}

/// Uniform backward time grid `τ^n = T − n·h`, `n = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalGrid {
    horizon: f64,
    steps: usize,
    step: f64,
}

impl TemporalGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("time steps must be positive".into()));
        }
        Ok(Self { horizon, steps, step: horizon / steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `h = T / N`.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Calendar time of backward level `n`. Level 0 is the horizon, level `N` is time zero.
    pub fn time(&self, level: usize) -> f64 {
        debug_assert!(level <= self.steps);
        if level == 0 {
            self.horizon
        } else {
            (self.steps - level) as f64 * self.step
        }
    }

    /// Backward level of the `k`-th forward step (`t_k = k·h`).
    pub fn level_of_forward_step(&self, k: usize) -> usize {
        self.steps - k
    }

    pub fn halved(&self) -> Self {
        Self { horizon: self.horizon, steps: 2 * self.steps, step: self.horizon / (2 * self.steps) as f64 }
    }
}

/// Uniform spatial grid `x_i = x_min + i·Δx`, `i = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    intervals: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, intervals: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidGrid(format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if intervals < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 intervals, got {intervals}")));
        }
        Ok(Self { x_min, x_max, intervals, dx: (x_max - x_min) / intervals as f64 })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// `M`, the number of intervals. There are `M + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Index of the grid node closest to `x` (clamped into the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.dx).round();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.intervals)
        }
    }

    pub fn halved(&self) -> Self {
        Self {
            x_min: self.x_min,
            x_max: self.x_max,
            intervals: 2 * self.intervals,
            dx: (self.x_max - self.x_min) / (2 * self.intervals) as f64,
        }
    }
}

/// The time/space grid pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grids {
    pub time: TemporalGrid,
    pub space: SpatialGrid,
}

impl Grids {
    pub fn new(time: TemporalGrid, space: SpatialGrid) -> Self {
        Self { time, space }
    }

    /// Both step sizes halved together.
    pub fn refined(&self) -> Self {
        Self { time: self.time.halved(), space: self.space.halved() }
    }
}

/// Per-node finite impulse sets, stored as integer node offsets.
///
/// An offset `j` at node `i` is the displacement `j·Δx`; the post-impulse state
/// is exactly node `i + j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpulseSets {
    offsets: Vec<Vec<isize>>,
}

impl ImpulseSets {
    /// Checks every offset is nonzero and stays on the grid.
    pub fn from_offsets(space: &SpatialGrid, offsets: Vec<Vec<isize>>) -> Result<Self> {
        if offsets.len() != space.len() {
            return Err(Error::InvalidImpulseSet(format!(
                "expected {} node sets, got {}",
                space.len(),
                offsets.len()
            )));
        }
        let m = space.intervals() as isize;
        for (i, set) in offsets.iter().enumerate() {
            for &j in set {
                let target = i as isize + j;
                if j == 0 || target < 0 || target > m {
                    return Err(Error::InvalidImpulseSet(format!(
                        "offset {j} at node {i} is zero or leaves the grid"
                    )));
                }
            }
        }
        Ok(Self { offsets })
    }

    pub fn at(&self, node: usize) -> &[isize] {
        &self.offsets[node]
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Largest |offset| over all nodes.
    pub fn max_offset(&self) -> usize {
        self.offsets.iter().flatten().map(|j| j.unsigned_abs()).max().unwrap_or(0)
    }

    /// All distinct offsets that occur at some node, ascending.
    pub fn distinct_offsets(&self) -> Vec<isize> {
        let mut all: Vec<isize> = self.offsets.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Impulses at node `i` are the nonzero multiples of `stride·Δx` that keep the
/// state on the grid.
pub fn build_impulse_sets(space: &SpatialGrid, stride: usize) -> Result<ImpulseSets> {
    if stride == 0 {
        return Err(Error::InvalidArgument("impulse stride must be at least 1".into()));
    }
    let m = space.intervals();
    if m < 2 * stride {
        return Err(Error::InvalidImpulseSet(format!(
            "grid has {m} intervals, need at least {} for stride {stride}",
            2 * stride
        )));
    }
    let s = stride as isize;
    let offsets = (0..=m as isize)
        .map(|i| {
            let lo = -(i / s);
            let hi = (m as isize - i) / s;
            (lo..=hi).filter(|&j| j != 0).map(|j| j * s).collect()
        })
        .collect();
    Ok(ImpulseSets { offsets })
}

/// How the finite impulse sets are generated for a given spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub enum ImpulseRule {
    /// [`build_impulse_sets`] with this stride, for both players.
    Stride(usize),
    /// Fixed sets; only valid on a grid with matching node count.
    Explicit { maximizer: Vec<Vec<isize>>, minimizer: Vec<Vec<isize>> },
}

/// Continuous data of a zero-sum impulse game.
///
/// Player I (maximizer) pays `c(t, ξ)` per impulse, player II (minimizer)
/// pays `χ(t, η)`, which is added to the payoff.
#[derive(Clone)]
pub struct GameProblem {
    pub drift: Coefficient,
    pub volatility: Coefficient,
    pub running_reward: Coefficient,
    pub terminal_reward: Terminal,
    pub maximizer_cost: Coefficient,
    pub minimizer_cost: Coefficient,
    /// Declared lower bound `k > 0` on both costs.
    pub cost_floor: f64,
    /// Discount rate `λ ≥ 0`.
    pub discount: f64,
    pub impulses: ImpulseRule,
}

impl fmt::Debug for GameProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameProblem")
            .field("cost_floor", &self.cost_floor)
            .field("discount", &self.discount)
            .field("impulses", &self.impulses)
            .finish_non_exhaustive()
    }
}

impl GameProblem {
    /// Game with affine costs `λ|z| + k` for both players and no drift, volatility
    /// or rewards. Fields are public for further customization.
    pub fn with_linear_costs(prop_max: f64, fixed_max: f64, prop_min: f64, fixed_min: f64) -> Self {
        Self {
            drift: coefficient(|_, _| 0.0),
            volatility: coefficient(|_, _| 0.0),
            running_reward: coefficient(|_, _| 0.0),
            terminal_reward: terminal(|_| 0.0),
            maximizer_cost: coefficient(move |_, xi: f64| prop_max * xi.abs() + fixed_max),
            minimizer_cost: coefficient(move |_, eta: f64| prop_min * eta.abs() + fixed_min),
            cost_floor: fixed_max.min(fixed_min),
            discount: 0.0,
            impulses: ImpulseRule::Stride(1),
        }
    }
}

/// Foreign-exchange intervention game between a commercial institution
/// (maximizer) and a central bank (minimizer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeRateInstance {
    pub drift_speed: f64,
    pub volatility: f64,
    pub target: f64,
    pub prop_cost_max: f64,
    pub prop_cost_min: f64,
    pub fixed_cost_max: f64,
    pub fixed_cost_min: f64,
    pub discount: f64,
    pub x0: f64,
}

impl Default for ExchangeRateInstance {
    /// Reference parameters: μ = 0.25, σ = 0.30, x* = 1, λ_i = 1, k_i = 0.1, x_0 = 2.5.
    fn default() -> Self {
        Self {
            drift_speed: 0.25,
            volatility: 0.30,
            target: 1.0,
            prop_cost_max: 1.0,
            prop_cost_min: 1.0,
            fixed_cost_max: 0.1,
            fixed_cost_min: 0.1,
            discount: 0.0,
            x0: 2.5,
        }
    }
}

impl ExchangeRateInstance {
    /// Reference grids: T = 1, h = 0.05 and the domain [0, 5] split into 100 intervals.
    pub fn reference_grids() -> Grids {
        Grids::new(
            TemporalGrid::new(1.0, 20).expect("valid reference time grid"),
            SpatialGrid::new(0.0, 5.0, 100).expect("valid reference space grid"),
        )
    }

    pub fn running_reward(&self, x: f64) -> f64 {
        -(x - self.target).powi(2)
    }

    pub fn problem(&self, stride: usize) -> GameProblem {
        let Self { drift_speed, volatility, target, prop_cost_max, prop_cost_min, .. } = *self;
        let (k1, k2) = (self.fixed_cost_max, self.fixed_cost_min);
        GameProblem {
            drift: coefficient(move |_, x| -drift_speed * x),
            volatility: coefficient(move |_, x| volatility * x),
            running_reward: coefficient(move |_, x| -(x - target).powi(2)),
            terminal_reward: terminal(|_| 0.0),
            maximizer_cost: coefficient(move |_, xi: f64| prop_cost_max * xi.abs() + k1),
            minimizer_cost: coefficient(move |_, eta: f64| prop_cost_min * eta.abs() + k2),
            cost_floor: k1.min(k2),
            discount: self.discount,
            impulses: ImpulseRule::Stride(stride),
        }
    }
}

/// A problem bound to grids, with its impulse sets built.
#[derive(Debug, Clone)]
pub struct DiscreteGame {
    pub problem: GameProblem,
    pub grids: Grids,
    pub maximizer_impulses: ImpulseSets,
    pub minimizer_impulses: ImpulseSets,
}

impl DiscreteGame {
    pub fn new(problem: GameProblem, grids: Grids) -> Result<Self> {
        if !(problem.discount.is_finite() && problem.discount >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "discount rate must be nonnegative, got {}",
                problem.discount
            )));
        }
        let (maximizer_impulses, minimizer_impulses) = match &problem.impulses {
            ImpulseRule::Stride(stride) => {
                let sets = build_impulse_sets(&grids.space, *stride)?;
                (sets.clone(), sets)
            }
            ImpulseRule::Explicit { maximizer, minimizer } => (
                ImpulseSets::from_offsets(&grids.space, maximizer.clone())?,
                ImpulseSets::from_offsets(&grids.space, minimizer.clone())?,
            ),
        };
        Ok(Self { problem, grids, maximizer_impulses, minimizer_impulses })
    }

    /// The same problem on jointly refined grids.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.problem.clone(), self.grids.refined())
    }

    pub fn steps(&self) -> usize {
        self.grids.time.steps()
    }

    pub fn nodes(&self) -> usize {
        self.grids.space.len()
    }

    pub fn h(&self) -> f64 {
        self.grids.time.step()
    }

    pub fn dx(&self) -> f64 {
        self.grids.space.dx()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.grids.time.time(level)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grids.space.node(i)
    }

    /// Displacement of a node offset.
    pub fn displacement(&self, offset: isize) -> f64 {
        offset as f64 * self.dx()
    }

    /// `e^(−λh)`, applied to every continuation read from the previous level.
    pub fn continuation_discount(&self) -> f64 {
        (-self.problem.discount * self.h()).exp()
    }

    pub fn terminal_row(&self) -> Vec<f64> {
        self.grids.space.nodes().map(|x| (self.problem.terminal_reward)(x)).collect()
    }

    /// `max |f|` over all grid nodes and time levels.
    pub fn running_reward_sup(&self) -> f64 {
        let mut sup = 0.0_f64;
        for n in 0..=self.steps() {
            let t = self.time(n);
            for x in self.grids.space.nodes() {
                sup = sup.max((self.problem.running_reward)(t, x).abs());
            }
        }
        sup
    }

    /// `max |g|` over the grid.
    pub fn terminal_reward_sup(&self) -> f64 {
        self.terminal_row().iter().fold(0.0_f64, |m, g| m.max(g.abs()))
    }

    /// `T·‖f‖∞ + ‖g‖∞`, the a priori bound on the discrete value.
    pub fn stability_bound(&self) -> f64 {
        self.grids.time.horizon() * self.running_reward_sup() + self.terminal_reward_sup()
    }
}

/// One named assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

const VALIDATION_SLACK: f64 = 1e-12;

/// Checks the testable standing assumptions on the discretized game.
///
/// Strict subadditivity with a margin function is not checked; only plain
/// subadditivity over impulse pairs whose sum is itself an admissible impulse.
pub fn validate(game: &DiscreteGame) -> ValidationReport {
    let checks = vec![
        cost_floor_check("maximizer cost floor", game, &game.maximizer_impulses, &game.problem.maximizer_cost),
        cost_floor_check("minimizer cost floor", game, &game.minimizer_impulses, &game.problem.minimizer_cost),
        subadditivity_check("maximizer cost subadditivity", game, &game.maximizer_impulses, &game.problem.maximizer_cost),
        subadditivity_check("minimizer cost subadditivity", game, &game.minimizer_impulses, &game.problem.minimizer_cost),
        terminal_check(game),
    ];
    ValidationReport { checks }
}

fn cost_floor_check(name: &'static str, game: &DiscreteGame, sets: &ImpulseSets, cost: &Coefficient) -> ValidationCheck {
    let k = game.problem.cost_floor;
    let offsets = sets.distinct_offsets();
    let mut lowest = f64::INFINITY;
    let mut at = (0.0, 0.0);
    for n in 0..=game.steps() {
        let t = game.time(n);
        for &j in &offsets {
            let z = game.displacement(j);
            let c = cost(t, z);
            if !(c >= lowest) {
                lowest = c;
                at = (t, z);
            }
        }
    }
    // An empty scan leaves `lowest` at +inf, which passes whenever k > 0.
    let passed = k > 0.0 && lowest >= k;
    let detail = if offsets.is_empty() {
        format!("declared k = {k}; no impulses to check")
    } else {
        format!("declared k = {k}; minimum cost {lowest} at t = {}, impulse = {}", at.0, at.1)
    };
    ValidationCheck { name, passed, detail }
}

fn subadditivity_check(name: &'static str, game: &DiscreteGame, sets: &ImpulseSets, cost: &Coefficient) -> ValidationCheck {
    let offsets = sets.distinct_offsets();
    let admissible = |j: isize| offsets.binary_search(&j).is_ok();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut pairs = 0usize;
    for n in 0..=game.steps() {
        let t = game.time(n);
        for (a, &j1) in offsets.iter().enumerate() {
            for &j2 in &offsets[a..] {
                let sum = j1 + j2;
                if sum == 0 || !admissible(sum) {
                    continue;
                }
                pairs += 1;
                let excess = cost(t, game.displacement(sum))
                    - cost(t, game.displacement(j1))
                    - cost(t, game.displacement(j2));
                if excess > worst {
                    worst = excess;
                    witness = Some((t, j1, j2));
                }
            }
        }
    }
    let passed = worst <= VALIDATION_SLACK;
    let detail = match witness {
        Some((t, j1, j2)) => format!(
            "{pairs} pairs; worst c(a+b) - c(a) - c(b) = {worst:e} at t = {t}, a = {}, b = {}",
            game.displacement(j1),
            game.displacement(j2)
        ),
        None => "no impulse pairs with an admissible sum".to_string(),
    };
    ValidationCheck { name, passed, detail }
}

fn terminal_check(game: &DiscreteGame) -> ValidationCheck {
    let g = game.terminal_row();
    let t = game.time(0);
    let mut bad = Vec::new();
    for (i, &gi) in g.iter().enumerate() {
        let x = game.x(i);
        let sup = game
            .maximizer_impulses
            .at(i)
            .iter()
            .map(|&j| g[(i as isize + j) as usize] - (game.problem.maximizer_cost)(t, game.displacement(j)))
            .fold(f64::NEG_INFINITY, f64::max);
        let inf = game
            .minimizer_impulses
            .at(i)
            .iter()
            .map(|&j| g[(i as isize + j) as usize] + (game.problem.minimizer_cost)(t, game.displacement(j)))
            .fold(f64::INFINITY, f64::min);
        if sup > gi + VALIDATION_SLACK || inf < gi - VALIDATION_SLACK {
            bad.push(x);
        }
    }
    let detail = if bad.is_empty() {
        "H^c g <= g <= H^chi g at every node".to_string()
    } else {
        format!(
            "violated at {} nodes (first at x = {}, last at x = {})",
            bad.len(),
            bad[0],
            bad[bad.len() - 1]
        )
    };
    ValidationCheck { name: "terminal compatibility", passed: bad.is_empty(), detail }
}
