//! Run configuration: TOML with one section per stage.

use std::fmt;
use std::path::PathBuf;

use impulse_game::problem::{coefficient, terminal};
use impulse_game::{DiscreteGame, ExchangeRateInstance, GameProblem, Grids, ImpulseRule, SpatialGrid, TemporalGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Exchange,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Exchange only: mean-reversion speed μ in `b = −μx`.
    pub drift_speed: Option<f64>,
    /// Exchange only: σ in `σ(x) = σx`.
    pub volatility: Option<f64>,
    /// Exchange only: the target rate x* in `f = −(x − x*)²`.
    pub target: Option<f64>,
    /// Custom only: `b(x) = drift[0] + drift[1]·x`.
    pub drift: Option<[f64; 2]>,
    /// Custom only: `σ(x) = diffusion[0] + diffusion[1]·x`.
    pub diffusion: Option<[f64; 2]>,
    /// Custom only: `f(x) = c0 + c1·x + c2·x²`.
    pub running_reward: Option<[f64; 3]>,
    /// Custom only: `g(x) = c0 + c1·x + c2·x²`.
    pub terminal_reward: Option<[f64; 3]>,
    #[serde(default = "one")]
    pub prop_cost_max: f64,
    #[serde(default = "one")]
    pub prop_cost_min: f64,
    #[serde(default = "tenth")]
    pub fixed_cost_max: f64,
    #[serde(default = "tenth")]
    pub fixed_cost_min: f64,
    #[serde(default)]
    pub discount: f64,
    #[serde(default = "one_usize")]
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "twenty")]
    pub steps: usize,
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "five")]
    pub x_max: f64,
    #[serde(default = "hundred")]
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Direct,
    Howard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "direct")]
    pub method: SolverMethod,
    #[serde(default = "nano")]
    pub tolerance: f64,
    #[serde(default = "ten")]
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "x_start")]
    pub x_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "paths")]
    pub paths: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Joint halvings of `(h, Δx)` in the refinement study.
    #[serde(default = "three")]
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default = "default_of")]
    pub grid: GridConfig,
    #[serde(default = "default_of")]
    pub solver: SolverConfig,
    #[serde(default = "default_of")]
    pub strategy: StrategyConfig,
    #[serde(default = "default_of")]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default = "default_of")]
    pub verify: VerifyConfig,
    #[serde(default = "default_of")]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn tenth() -> f64 {
    0.1
}
fn five() -> f64 {
    5.0
}
fn nano() -> f64 {
    1e-9
}
fn x_start() -> f64 {
    2.5
}
fn one_usize() -> usize {
    1
}
fn three() -> usize {
    3
}
fn ten() -> usize {
    10
}
fn twenty() -> usize {
    20
}
fn hundred() -> usize {
    100
}
fn paths() -> usize {
    10_000
}
fn one_u64() -> u64 {
    1
}
fn direct() -> SolverMethod {
    SolverMethod::Direct
}
fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Defaults of a section come from deserializing an empty table, so there is
/// one source of truth for every default.
fn default_of<T: for<'de> Deserialize<'de>>() -> T {
    toml::from_str("").expect("every section field has a default")
}

/// A configuration problem, located in the source where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line of the offending key or syntax error.
    pub line: Option<usize>,
    /// `section.key`, when the error concerns one field.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `section.key` in `src`, or of the `[section]` header when the key is absent.
fn key_line(src: &str, section: &str, key: &str) -> Option<usize> {
    let doc = toml_edit::ImDocument::parse(src).ok()?;
    let table = doc.get(section)?.as_table_like()?;
    let span = match table.get_key_value(key) {
        Some((k, _)) => k.span(),
        None => doc.as_table().key(section).and_then(|k| k.span()),
    }?;
    Some(line_of(src, span.start))
}

impl RunConfig {
    /// Parses and validates. Every failure carries a line when one exists.
    pub fn parse(src: &str) -> Result<Self, Vec<ConfigError>> {
        let config: RunConfig = toml::from_str(src).map_err(|e| {
            vec![ConfigError {
                line: e.span().map(|s| line_of(src, s.start)),
                key: None,
                message: e.message().to_string(),
            }]
        })?;
        let errors: Vec<ConfigError> = config
            .violations()
            .into_iter()
            .map(|(section, key, message)| ConfigError {
                line: key_line(src, section, key),
                key: Some(format!("{section}.{key}")),
                message,
            })
            .collect();
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(errors)
        }
    }

    /// `(section, key, message)` for every semantic violation.
    pub fn violations(&self) -> Vec<(&'static str, &'static str, String)> {
        let mut out = Vec::new();
        let mut need = |ok: bool, section, key, message: String| {
            if !ok {
                out.push((section, key, message));
            }
        };
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;

        let p = &self.problem;
        let exchange_keys = [("drift_speed", p.drift_speed.is_some()), ("volatility", p.volatility.is_some()), ("target", p.target.is_some())];
        let custom_keys = [
            ("drift", p.drift.is_some()),
            ("diffusion", p.diffusion.is_some()),
            ("running_reward", p.running_reward.is_some()),
            ("terminal_reward", p.terminal_reward.is_some()),
        ];
        let (foreign, kind) = match p.kind {
            ProblemKind::Exchange => (&custom_keys[..], "exchange"),
            ProblemKind::Custom => (&exchange_keys[..], "custom"),
        };
        for &(key, present) in foreign {
            need(!present, "problem", key, format!("not a parameter of kind = \"{kind}\""));
        }
        let all_finite = [p.drift_speed, p.volatility, p.target].iter().flatten().all(|v| v.is_finite())
            && p.drift.iter().flatten().chain(p.diffusion.iter().flatten()).all(|v| v.is_finite())
            && p.running_reward.iter().flatten().chain(p.terminal_reward.iter().flatten()).all(|v| v.is_finite());
        need(all_finite, "problem", "kind", "coefficients must be finite".into());
        for (key, v) in [("prop_cost_max", p.prop_cost_max), ("prop_cost_min", p.prop_cost_min)] {
            need(finite_nonneg(v), "problem", key, format!("must be finite and >= 0, got {v}"));
        }
        for (key, v) in [("fixed_cost_max", p.fixed_cost_max), ("fixed_cost_min", p.fixed_cost_min)] {
            need(v.is_finite() && v > 0.0, "problem", key, format!("must be finite and > 0, got {v}"));
        }
        need(finite_nonneg(p.discount), "problem", "discount", format!("must be finite and >= 0, got {}", p.discount));
        need(p.stride >= 1, "problem", "stride", "must be positive".into());

        let g = &self.grid;
        need(g.horizon.is_finite() && g.horizon > 0.0, "grid", "horizon", format!("must be positive, got {}", g.horizon));
        need(g.steps >= 1, "grid", "steps", "must be positive".into());
        need(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max, "grid", "x_max", format!("need x_min < x_max, got [{}, {}]", g.x_min, g.x_max));
        need(
            g.intervals >= 2 * p.stride.max(1),
            "grid",
            "intervals",
            format!("must be at least 2 * stride = {}, got {}", 2 * p.stride.max(1), g.intervals),
        );

        let s = &self.solver;
        need(s.tolerance.is_finite() && s.tolerance > 0.0, "solver", "tolerance", format!("must be positive, got {}", s.tolerance));
        need(s.max_iterations >= 1, "solver", "max_iterations", "must be positive".into());

        let x = self.strategy.x_start;
        need(
            x.is_finite() && g.x_min < x && x < g.x_max,
            "strategy",
            "x_start",
            format!("must lie strictly inside ({}, {}), got {x}", g.x_min, g.x_max),
        );

        need(self.monte_carlo.paths >= 100, "monte_carlo", "paths", format!("must be at least 100, got {}", self.monte_carlo.paths));
        need(self.verify.trials >= 1, "verify", "trials", "must be positive".into());
        need(self.verify.levels >= 2, "verify", "levels", format!("must be at least 2, got {}", self.verify.levels));
        out
    }

    pub fn grids(&self) -> Grids {
        let g = &self.grid;
        Grids::new(
            TemporalGrid::new(g.horizon, g.steps).expect("validated time grid"),
            SpatialGrid::new(g.x_min, g.x_max, g.intervals).expect("validated space grid"),
        )
    }

    pub fn problem(&self) -> GameProblem {
        let p = &self.problem;
        match p.kind {
            ProblemKind::Exchange => {
                let defaults = ExchangeRateInstance::default();
                ExchangeRateInstance {
                    drift_speed: p.drift_speed.unwrap_or(defaults.drift_speed),
                    volatility: p.volatility.unwrap_or(defaults.volatility),
                    target: p.target.unwrap_or(defaults.target),
                    prop_cost_max: p.prop_cost_max,
                    prop_cost_min: p.prop_cost_min,
                    fixed_cost_max: p.fixed_cost_max,
                    fixed_cost_min: p.fixed_cost_min,
                    discount: p.discount,
                    x0: self.strategy.x_start,
                }
                .problem(p.stride)
            }
            ProblemKind::Custom => {
                let mut game = GameProblem::with_linear_costs(p.prop_cost_max, p.fixed_cost_max, p.prop_cost_min, p.fixed_cost_min);
                let [b0, b1] = p.drift.unwrap_or_default();
                let [s0, s1] = p.diffusion.unwrap_or_default();
                let [f0, f1, f2] = p.running_reward.unwrap_or_default();
                let [g0, g1, g2] = p.terminal_reward.unwrap_or_default();
                game.drift = coefficient(move |_, x| b0 + b1 * x);
                game.volatility = coefficient(move |_, x| s0 + s1 * x);
                game.running_reward = coefficient(move |_, x| f0 + f1 * x + f2 * x * x);
                game.terminal_reward = terminal(move |x| g0 + g1 * x + g2 * x * x);
                game.discount = p.discount;
                game.impulses = ImpulseRule::Stride(p.stride);
                game
            }
        }
    }

    pub fn game(&self) -> impulse_game::Result<DiscreteGame> {
        DiscreteGame::new(self.problem(), self.grids())
    }
}
