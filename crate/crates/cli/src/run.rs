//! Subcommand execution. Every table is computed in memory before any file
//! is written, so a failed run leaves the output directory untouched.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use impulse_game::policy::{howard_solve, HowardSettings};
use impulse_game::verify::{certify_scheme, halving_gap};
use impulse_game::{extract_strategy, refinement_study, simulate_payoff, solve, validate, Branch, DiscreteGame, ValueField};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SolverMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Strategy,
    Verify,
    Refine,
    Mc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Strategy => "strategy",
            Command::Verify => "verify",
            Command::Refine => "refine",
            Command::Mc => "mc",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Files were written, but at least one certificate failed.
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Invalid(_) | RunError::Io { .. } => 1,
            RunError::Numerical(_) | RunError::Certificate(_) => 2,
        }
    }
}

impl From<impulse_game::Error> for RunError {
    fn from(e: impulse_game::Error) -> Self {
        if e.is_numerical() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Invalid(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub t: f64,
    pub x: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub x: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub t: f64,
    pub x: f64,
    /// `C`, `MAX` or `MIN`.
    pub branch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub t: f64,
    pub x: f64,
    #[serde(rename = "V")]
    pub v: f64,
    /// `none`, `xi` (maximizer) or `eta` (minimizer).
    pub action: String,
    pub impulse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRow {
    pub level: usize,
    pub h: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub mean: f64,
    pub se: f64,
    pub abs_diff: f64,
    pub band: f64,
}

/// A file to be written: name and contents.
type Artifact = (&'static str, Vec<u8>);

fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    w.into_inner().expect("in-memory CSV flush")
}

fn solve_field(config: &RunConfig, game: &DiscreteGame) -> Result<(ValueField, Vec<Vec<Branch>>), RunError> {
    match config.solver.method {
        SolverMethod::Direct => {
            let s = solve(game)?;
            Ok((s.field, s.reports.into_iter().map(|r| r.branches).collect()))
        }
        SolverMethod::Howard => {
            let settings = HowardSettings { tolerance: config.solver.tolerance, max_iters: config.solver.max_iterations };
            let (field, policies, _) = howard_solve(game, settings)?;
            let branches = policies.iter().map(|p| (0..p.len()).map(|i| p.branch(i)).collect()).collect();
            Ok((field, branches))
        }
    }
}

/// Backward level `n` in forward time order, `t = 0` first.
fn forward_levels(game: &DiscreteGame) -> impl Iterator<Item = usize> {
    (0..=game.steps()).rev()
}

fn solve_artifacts(game: &DiscreteGame, field: &ValueField, branches: &[Vec<Branch>]) -> Vec<Artifact> {
    let surface: Vec<SurfaceRow> = forward_levels(game)
        .flat_map(|n| (0..game.nodes()).map(move |i| (n, i)))
        .map(|(n, i)| SurfaceRow { t: game.time(n), x: game.x(i), v: field.row(n)[i] })
        .collect();
    let slice: Vec<SliceRow> =
        (0..game.nodes()).map(|i| SliceRow { x: game.x(i), v: field.row(game.steps())[i] }).collect();
    let regions: Vec<RegionRow> = forward_levels(game)
        .filter(|&n| n >= 1)
        .flat_map(|n| (0..game.nodes()).map(move |i| (n, i)))
        .map(|(n, i)| RegionRow { t: game.time(n), x: game.x(i), branch: branches[n - 1][i].label().to_string() })
        .collect();
    vec![
        ("value_surface.csv", csv_bytes(&surface)),
        ("slice_t0.csv", csv_bytes(&slice)),
        ("regions.csv", csv_bytes(&regions)),
    ]
}

pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Printed to stdout after the files are written.
    pub summary: String,
}

/// Validates, computes and writes. `source` is echoed into the manifest.
pub fn execute(command: Command, config: &RunConfig, source: &str) -> Result<Outcome, RunError> {
    let game = config.game()?;
    let report = validate(&game);
    if !report.passed() {
        return Err(RunError::Invalid(format!("problem violates its standing assumptions:\n{report}")));
    }

    let started = Instant::now();
    let mut artifacts: Vec<Artifact> = Vec::new();
    let mut summary = String::new();
    let mut certificate_failure = None;
    match command {
        Command::Solve => {
            let (field, branches) = solve_field(config, &game)?;
            artifacts.extend(solve_artifacts(&game, &field, &branches));
            let _ = writeln!(summary, "max |V| = {} (bound {})", field.max_abs(), game.stability_bound());
        }
        Command::Strategy => {
            let (field, _) = solve_field(config, &game)?;
            let record = extract_strategy(&game, &field, config.strategy.x_start)?;
            let rows: Vec<PathRow> = record
                .path
                .iter()
                .map(|p| PathRow { t: p.time, x: p.state, v: p.value, action: p.action.label().to_string(), impulse: p.impulse })
                .collect();
            artifacts.push(("path.csv", csv_bytes(&rows)));
            let _ = writeln!(
                summary,
                "{} maximizer and {} minimizer interventions",
                record.maximizer.len(),
                record.minimizer.len()
            );
        }
        Command::Verify => {
            let certificates = certify_scheme(&game, config.verify.trials, config.verify.seed)?;
            let mut text = String::new();
            let _ = writeln!(text, "# standing assumptions\n{report}\n# scheme certificates\n{certificates}");
            artifacts.push(("certificates.txt", text.into_bytes()));
            if !certificates.passed() {
                let failed: Vec<_> = certificates.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
                certificate_failure = Some(failed.join(", "));
            }
            let _ = write!(summary, "{certificates}");
        }
        Command::Refine => {
            let rows: Vec<RefineRow> = refinement_study(&game, config.verify.levels)?
                .into_iter()
                .map(|r| RefineRow { level: r.level, h: r.h, gap: r.gap })
                .collect();
            for r in &rows {
                let _ = writeln!(summary, "level {}: h = {}, gap = {}", r.level, r.h, r.gap);
            }
            artifacts.push(("refine.csv", csv_bytes(&rows)));
        }
        Command::Mc => {
            let (field, _) = solve_field(config, &game)?;
            let x = config.strategy.x_start;
            let estimate = simulate_payoff(&game, &field, x, config.monte_carlo.paths, config.monte_carlo.seed)?;
            let gap = halving_gap(&game)?;
            let value = field.value_at(&game, game.steps(), x);
            let row = McRow {
                mean: estimate.mean,
                se: estimate.standard_error,
                abs_diff: (estimate.mean - value).abs(),
                band: 3.0 * estimate.standard_error + gap,
            };
            let _ = writeln!(
                summary,
                "mean {} (SE {}), V(0, {x}) = {value}, |diff| = {} vs band {}",
                row.mean, row.se, row.abs_diff, row.band
            );
            artifacts.push(("mc.csv", csv_bytes(&[row])));
        }
    }
    let elapsed = started.elapsed();

    let mut manifest = String::new();
    let _ = writeln!(manifest, "program = \"impulse-game {}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "command = \"{}\"", command.name());
    let _ = writeln!(manifest, "files = [{}]", artifacts.iter().map(|(n, _)| format!("\"{n}\"")).collect::<Vec<_>>().join(", "));
    let _ = writeln!(manifest, "elapsed_seconds = {}", elapsed.as_secs_f64());
    let _ = writeln!(manifest, "\n# effective configuration\n{}", toml::to_string(config).expect("config serializes"));
    let _ = writeln!(manifest, "# configuration file as given\n{source}");
    artifacts.push(("manifest.txt", manifest.into_bytes()));

    let files = write_all(&config.output.dir, &artifacts)?;
    match certificate_failure {
        Some(failed) => Err(RunError::Certificate(failed)),
        None => Ok(Outcome { files, summary }),
    }
}

fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    artifacts
        .iter()
        .map(|(name, bytes)| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io(&path))?;
            Ok(path)
        })
        .collect()
}
