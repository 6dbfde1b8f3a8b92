use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impulse_game::{solve, ExchangeRateInstance, DiscreteGame};
use serde::Deserialize;

const EXCHANGE: &str = r#"
[problem]
kind = "exchange"

[monte_carlo]
paths = 2000
seed = 7

[verify]
trials = 20
levels = 2
"#;

const ZERO: &str = r#"
[problem]
kind = "custom"
drift = [0.0, -0.25]
diffusion = [0.0, 0.3]

[monte_carlo]
paths = 500
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_impulse-game"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (output, out)
}

fn ok(dir: &Path, config: &str, args: &[&str]) -> PathBuf {
    let (output, out) = run(dir, config, args);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    out
}

fn read<T: for<'de> Deserialize<'de>>(path: &Path) -> Vec<T> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

#[derive(Deserialize)]
struct Surface {
    t: f64,
    x: f64,
    #[serde(rename = "V")]
    v: f64,
}

#[derive(Deserialize)]
struct Region {
    t: f64,
    x: f64,
    branch: String,
}

#[derive(Deserialize)]
struct PathRow {
    t: f64,
    x: f64,
    #[serde(rename = "V")]
    _v: f64,
    action: String,
    impulse: f64,
}

#[derive(Deserialize, PartialEq, Debug)]
struct Mc {
    mean: f64,
    se: f64,
    abs_diff: f64,
    band: f64,
}

#[test]
fn zero_game_outputs_are_trivial() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), ZERO, &["solve"]);
    let surface: Vec<Surface> = read(&out.join("value_surface.csv"));
    assert_eq!(surface.len(), 21 * 101);
    assert!(surface.iter().all(|r| r.v == 0.0));
    let regions: Vec<Region> = read(&out.join("regions.csv"));
    assert!(regions.iter().all(|r| r.branch == "C"));

    ok(tmp.path(), ZERO, &["strategy"]);
    let path: Vec<PathRow> = read(&out.join("path.csv"));
    assert_eq!(path.len(), 21);
    assert!(path.iter().all(|p| p.action == "none" && p.impulse == 0.0));

    ok(tmp.path(), ZERO, &["mc"]);
    let mc: Vec<Mc> = read(&out.join("mc.csv"));
    assert_eq!(mc, vec![Mc { mean: 0.0, se: 0.0, abs_diff: 0.0, band: 0.0 }]);
}

#[test]
fn invalid_configs_exit_one_without_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("[problem]\nkind = \"exchange\"\n[grid]\nsteps = 0\n", "line 4: grid.steps"),
        ("[problem]\nkind = \"exchange\"\n[strategy]\nx_start = 9.0\n", "line 4: strategy.x_start"),
        ("[problem]\nkind = \"exchange\"\n[grid]\nstep = 20\n", "line 4"),
        ("[problem]\nkind = \"exchange\"\nfixed_cost_min = 0.0\n", "line 3: problem.fixed_cost_min"),
        ("[problem]\nkind = \"martian\"\n", "line 2"),
    ];
    for (config, expected) in cases {
        let (output, out) = run(tmp.path(), config, &["solve"]);
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert_eq!(output.status.code(), Some(1), "{stderr}");
        assert!(stderr.contains(expected), "expected {expected:?} in {stderr}");
        assert!(!out.exists());
    }
    let (output, out) = run(tmp.path(), EXCHANGE, &["refine", "--levels", "1"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn assumption_violations_exit_one() {
    // A terminal reward steeper than the cost of moving breaks terminal compatibility.
    let config = "[problem]\nkind = \"custom\"\nterminal_reward = [0.0, 5.0, 0.0]\n";
    let tmp = tempfile::tempdir().unwrap();
    let (output, out) = run(tmp.path(), config, &["solve"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("terminal compatibility"));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exits_two_without_files() {
    let config = format!("{EXCHANGE}\n[solver]\nmethod = \"howard\"\nmax_iterations = 1\n");
    let tmp = tempfile::tempdir().unwrap();
    let (output, out) = run(tmp.path(), &config, &["solve"]);
    assert_eq!(output.status.code(), Some(2), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in ["solve", "strategy", "mc", "refine", "verify"] {
        ok(a.path(), EXCHANGE, &[cmd]);
        ok(b.path(), EXCHANGE, &[cmd]);
    }
    for file in ["value_surface.csv", "slice_t0.csv", "regions.csv", "path.csv", "mc.csv", "refine.csv", "certificates.txt"] {
        let (x, y) = (fs::read(a.path().join("out").join(file)).unwrap(), fs::read(b.path().join("out").join(file)).unwrap());
        assert!(!x.is_empty() && x == y, "{file} differs between runs");
    }
    // A different seed changes the Monte Carlo estimate.
    ok(b.path(), EXCHANGE, &["mc", "--seed", "8"]);
    assert_ne!(fs::read(a.path().join("out/mc.csv")).unwrap(), fs::read(b.path().join("out/mc.csv")).unwrap());
}

#[test]
fn value_surface_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), EXCHANGE, &["solve"]);
    let game = DiscreteGame::new(ExchangeRateInstance::default().problem(1), ExchangeRateInstance::reference_grids()).unwrap();
    let field = solve(&game).unwrap().field;
    let surface: Vec<Surface> = read(&out.join("value_surface.csv"));
    assert_eq!(surface.len(), field.levels() * game.nodes());
    for (k, row) in surface.iter().enumerate() {
        let (n, i) = (game.steps() - k / game.nodes(), k % game.nodes());
        assert_eq!((row.t, row.x, row.v), (game.time(n), game.x(i), field.row(n)[i]));
    }
    let slice: Vec<Surface> = csv::Reader::from_path(out.join("slice_t0.csv"))
        .unwrap()
        .records()
        .map(|r| {
            let r = r.unwrap();
            Surface { t: 0.0, x: r[0].parse().unwrap(), v: r[1].parse().unwrap() }
        })
        .collect();
    assert!(slice.iter().enumerate().all(|(i, s)| s.t == 0.0 && s.x == game.x(i) && s.v == field.row(game.steps())[i]));
}

#[test]
fn howard_and_direct_outputs_agree() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let direct = ok(a.path(), EXCHANGE, &["solve"]);
    let howard = ok(b.path(), &format!("{EXCHANGE}\n[solver]\nmethod = \"howard\"\n"), &["solve"]);
    assert_eq!(fs::read(direct.join("regions.csv")).unwrap(), fs::read(howard.join("regions.csv")).unwrap());
    let (d, h): (Vec<Surface>, Vec<Surface>) = (read(&direct.join("value_surface.csv")), read(&howard.join("value_surface.csv")));
    assert!(d.iter().zip(&h).all(|(p, q)| (p.v - q.v).abs() <= 1e-10));
}

#[test]
fn path_actions_match_regions() {
    let tmp = tempfile::tempdir().unwrap();
    for start in ["2.5", "4.2", "0.3"] {
        let config = format!("{EXCHANGE}\n[strategy]\nx_start = {start}\n");
        ok(tmp.path(), &config, &["solve"]);
        let out = ok(tmp.path(), &config, &["strategy"]);
        let regions: Vec<Region> = read(&out.join("regions.csv"));
        let path: Vec<PathRow> = read(&out.join("path.csv"));
        assert_eq!(path.len(), 21);
        assert_eq!(path.last().unwrap().action, "none");
        let dx = 0.05;
        let mut checked = 0;
        for p in &path[..path.len() - 1] {
            let at_t: Vec<&Region> = regions.iter().filter(|r| r.t == p.t).collect();
            assert_eq!(at_t.len(), 101);
            // Labels of the grid nodes bracketing x; a node hit exactly brackets itself.
            let lo = ((p.x / dx).floor() as usize).min(100);
            let hi = if at_t[lo].x == p.x { lo } else { (lo + 1).min(100) };
            if at_t[lo].branch != at_t[hi].branch {
                continue;
            }
            let expected = match at_t[lo].branch.as_str() {
                "C" => "none",
                "MAX" => "xi",
                "MIN" => "eta",
                other => panic!("unknown branch {other}"),
            };
            assert_eq!(p.action, expected, "t = {}, x = {}", p.t, p.x);
            assert_eq!(p.action == "none", p.impulse == 0.0);
            checked += 1;
        }
        assert!(checked >= 15, "only {checked} rows had agreeing brackets");
    }
}

#[test]
fn verify_writes_passing_certificates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), EXCHANGE, &["verify"]);
    let text = fs::read_to_string(out.join("certificates.txt")).unwrap();
    assert!(!text.contains("FAIL"), "{text}");
    assert_eq!(text.matches("[pass]").count(), 5 + 7);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = \"verify\"") && manifest.contains("kind = \"exchange\""));
}
