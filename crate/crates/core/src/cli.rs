//! Command-line front end: resolves flags and config files into [`Params`],
//! dispatches to the library, writes CSV/JSON artifacts atomically and a
//! `manifest.json` that `replay` can re-run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::contfrac::{self, FnCf};
use crate::env::{EnvConfig, Environment, Kind};
use crate::error::{Error, Result};
use crate::experiments::{self, ConvergenceReport, LimitTolerances, Verdict};
use crate::prob::{self, RatioSeries, SeriesOpts, SeriesResult};
use crate::sim::{self, CensusParams, StepTable};

#[derive(Parser, Debug)]
#[command(name = "walkcut", version, about = "Cutpoints of (1,2) and (2,1) random walks in varying environments")]
pub struct Cli {
    /// Environment JSON file.
    #[arg(long, global = true)]
    pub env: Option<PathBuf>,
    /// Run config JSON; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate one exact quantity.
    Probe(ProbeArgs),
    /// Simulate raw trajectories, and layer-entry frequencies of Y.
    Simulate(SimulateArgs),
    /// Cutpoint census up to a ceiling K.
    Census(CensusArgs),
    /// Mean S_n over trajectories on a grid.
    Sn(SnArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Cutpoint growth curves in near-critical environments.
    Growth(GrowthArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

fn parse_kind(s: &str) -> std::result::Result<Kind, String> {
    match s {
        "X" | "x" => Ok(Kind::X),
        "Y" | "y" => Ok(Kind::Y),
        _ => Err(format!("kind must be X or Y, got {s}")),
    }
}

#[derive(Args, Debug, Default)]
pub struct ProbeArgs {
    /// FX, FY, G, DX, DY, escape_y, escape_x, never_return_x, never_return_y,
    /// p_cut_x, p_cut_y, p_cut_layer, eta, h, tau.
    #[arg(long)]
    pub quantity: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_terms: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Layers k for Y layer-entry frequencies (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub step_cap: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct CensusArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<Kind>,
    #[arg(long = "K")]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub eps_conf: Option<f64>,
    #[arg(long)]
    pub step_cap: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct SnArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<Kind>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub eps_conf: Option<f64>,
    #[arg(long)]
    pub step_cap: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct VerifyArgs {
    /// prop1, ratio, bounded or inequalities.
    #[arg(long)]
    pub suite: Option<String>,
    /// Largest grid index.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    /// Base indices for the per-base families.
    #[arg(long, value_delimiter = ',')]
    pub k_samples: Option<Vec<usize>>,
}

#[derive(Args, Debug, Default)]
pub struct GrowthArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<Kind>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub eps_conf: Option<f64>,
    #[arg(long)]
    pub step_cap: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Fully resolved run configuration, as read from `--config` and echoed
/// into the manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub command: Option<String>,
    pub env: Option<EnvConfig>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub kind: Option<Kind>,
    pub quantity: Option<String>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k_max: Option<usize>,
    pub trials: Option<u64>,
    pub steps: Option<u64>,
    pub layers: Option<Vec<usize>>,
    pub eps_conf: Option<f64>,
    pub step_cap: Option<u64>,
    pub grid: Option<Vec<usize>>,
    pub suite: Option<String>,
    pub k_samples: Option<Vec<usize>>,
    pub betas: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub max_terms: Option<u64>,
}

macro_rules! overlay {
    ($p:expr, $a:expr, $($f:ident),*) => {
        $( if $a.$f.is_some() { $p.$f = $a.$f.clone(); } )*
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub params: Params,
    pub env_meta: Option<serde_json::Value>,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
}

/// What a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    /// False when a verification verdict failed.
    pub passed: bool,
    /// One-line summary for standard output.
    pub summary: String,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Makes relative table paths absolute so the resolved config does not
/// depend on the working directory.
fn absolutize(env: EnvConfig, base: &Path) -> Result<EnvConfig> {
    Ok(match env {
        EnvConfig::Table { path } => {
            let p = Path::new(&path);
            let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            let p = p.canonicalize().map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            EnvConfig::Table {
                path: p.to_string_lossy().into_owned(),
            }
        }
        other => other,
    })
}

fn dir_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Merges config file, flags and defaults (flags win).
pub fn resolve(cli: Cli) -> Result<Params> {
    let cwd = PathBuf::from(".");
    let mut p = match &cli.config {
        Some(path) => {
            let mut p: Params = read_json(path)?;
            if let Some(env) = p.env.take() {
                p.env = Some(absolutize(env, &dir_of(path))?);
            }
            if let Some(out) = p.out.take() {
                p.out = Some(if out.is_absolute() { out } else { dir_of(path).join(out) });
            }
            p
        }
        None => Params::default(),
    };
    if let Some(path) = &cli.env {
        let env: EnvConfig = read_json(path)?;
        p.env = Some(absolutize(env, &dir_of(path))?);
    }
    if cli.out.is_some() {
        p.out = cli.out.clone();
    }
    if cli.workers.is_some() {
        p.workers = cli.workers;
    }
    if cli.seed.is_some() {
        p.seed = cli.seed;
    }
    let name = match &cli.command {
        Command::Probe(a) => {
            overlay!(p, a, quantity, m, k, n, tol, max_terms);
            "probe"
        }
        Command::Simulate(a) => {
            overlay!(p, a, kind, steps, trials, layers, step_cap);
            "simulate"
        }
        Command::Census(a) => {
            overlay!(p, a, kind, k_max, trials, eps_conf, step_cap);
            "census"
        }
        Command::Sn(a) => {
            overlay!(p, a, kind, grid, trials, eps_conf, step_cap);
            "sn"
        }
        Command::Verify(a) => {
            overlay!(p, a, suite, n, grid, k_samples);
            "verify"
        }
        Command::Growth(a) => {
            overlay!(p, a, kind, betas, grid, trials, eps_conf, step_cap);
            "growth"
        }
        Command::Replay(a) => {
            let m: Manifest = read_json(&a.manifest)?;
            let mut q = m.params;
            if let Some(out) = cli.out {
                q.out = Some(out);
            }
            return Ok(q);
        }
    };
    if let Some(c) = &p.command {
        if c != name {
            return Err(Error::Config(format!("config is for command {c:?}, not {name:?}")));
        }
    }
    p.command = Some(name.to_string());
    if p.out.is_none() {
        p.out = Some(cwd.join("out"));
    }
    Ok(p)
}

/// Reals as the shortest string that round-trips.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 || (x.is_finite() && (1e-5..1e16).contains(&x.abs())) {
        format!("{x}")
    } else if x.is_finite() {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{name}: {e}"));
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).map_err(io)?;
        fs::rename(&tmp, self.dir.join(name)).map_err(io)?;
        if !self.names.iter().any(|n| n == name) {
            self.names.push(name.to_string());
        }
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Io(format!("{name}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(format!("{name}: {e}")))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

fn need<T: Clone>(v: &Option<T>, what: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("missing required parameter {what}")))
}

fn build_env(p: &Params) -> Result<Environment> {
    need(&p.env, "env")?.build(Path::new("."))
}

fn series_opts(p: &Params) -> SeriesOpts {
    let mut o = SeriesOpts::default();
    if let Some(t) = p.tol {
        o.tol = t;
    }
    if let Some(m) = p.max_terms {
        o.max_terms = m;
    }
    o
}

fn census_params(p: &Params, k_max: usize, trials: u64) -> Result<CensusParams> {
    let seed = need(&p.seed, "seed")?;
    let mut c = CensusParams::new(k_max, trials, seed);
    c.workers = p.workers;
    c.series = series_opts(p);
    if let Some(e) = p.eps_conf {
        c.eps_conf = e;
    }
    if let Some(s) = p.step_cap {
        c.step_cap = s;
    }
    Ok(c)
}

/// Runs a resolved configuration.
pub fn run(p: &Params) -> Result<Outcome> {
    let start = Instant::now();
    let command = need(&p.command, "command")?;
    let out_dir = need(&p.out, "out")?;
    let mut art = Artifacts::new(&out_dir)?;
    let env = match (&p.env, command.as_str()) {
        (None, "growth") => None,
        _ => Some(build_env(p)?),
    };
    let (passed, summary) = match command.as_str() {
        "probe" => probe(p, env.as_ref().unwrap(), &mut art)?,
        "simulate" => simulate(p, env.as_ref().unwrap(), &mut art)?,
        "census" => census(p, env.as_ref().unwrap(), &mut art)?,
        "sn" => sn(p, env.as_ref().unwrap(), &mut art)?,
        "verify" => verify(p, env.as_ref().unwrap(), &mut art)?,
        "growth" => growth(p, &mut art)?,
        other => return Err(Error::Config(format!("unknown command {other:?}"))),
    };
    let manifest = Manifest {
        tool: "walkcut".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        params: p.clone(),
        env_meta: env
            .as_ref()
            .map(|e| serde_json::to_value(e.meta()).unwrap_or(serde_json::Value::Null)),
        artifacts: art.names.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    art.json("manifest.json", &manifest)?;
    Ok(Outcome {
        out_dir,
        artifacts: art.names,
        passed,
        summary,
    })
}

fn series_row(q: &str, m: usize, k: Option<usize>, n: Option<usize>, r: &SeriesResult) -> Vec<String> {
    vec![
        q.to_string(),
        m.to_string(),
        k.map_or(String::new(), |k| k.to_string()),
        n.map_or(String::new(), |n| n.to_string()),
        fmt_real(r.value),
        fmt_real(r.tail_bound),
        r.terms_used.to_string(),
        r.diverged.to_string(),
    ]
}

fn exact_row(q: &str, m: Option<usize>, k: Option<usize>, n: Option<usize>, v: f64) -> Vec<String> {
    let o = |x: Option<usize>| x.map_or(String::new(), |x| x.to_string());
    vec![q.to_string(), o(m), o(k), o(n), fmt_real(v), "0".into(), "0".into(), "false".into()]
}

const PROBE_HEADER: [&str; 8] = ["quantity", "m", "k", "n", "value", "tail_bound", "terms_used", "diverged"];

fn probe(p: &Params, env: &Environment, art: &mut Artifacts) -> Result<(bool, String)> {
    let q = need(&p.quantity, "quantity")?;
    let opts = series_opts(p);
    let rows: Vec<Vec<String>> = match q.as_str() {
        "FX" | "FY" | "G" | "DX" | "DY" => {
            let m = need(&p.m, "m")?;
            let r = match q.as_str() {
                "FX" => prob::series_f_x(env, m, p.n, opts)?,
                "FY" => prob::series_ratio(env, RatioSeries::FY, m, p.n, opts)?,
                "G" => prob::series_ratio(env, RatioSeries::G, m, p.n, opts)?,
                "DX" => prob::series_d(env, Kind::X, m, p.n, opts)?,
                _ => prob::series_d(env, Kind::Y, m, p.n, opts)?,
            };
            vec![series_row(&q, m, None, p.n, &r)]
        }
        "escape_y" => {
            let (m, k, n) = (need(&p.m, "m")?, need(&p.k, "k")?, need(&p.n, "n")?);
            let s = prob::escape_y_split(env, m, k, n)?;
            vec![
                exact_row("escape_y_at_n", Some(m), Some(k), Some(n), s.q_low),
                exact_row("escape_y_at_n_plus_1", Some(m), Some(k), Some(n), s.q_high),
                exact_row("escape_y_plus", Some(m), Some(k), Some(n), s.q_plus),
            ]
        }
        "escape_x" => {
            let (m, k, n) = (need(&p.m, "m")?, need(&p.k, "k")?, need(&p.n, "n")?);
            vec![exact_row(&q, Some(m), Some(k), Some(n), prob::escape_x_down(env, m, k, n)?)]
        }
        "never_return_x" => {
            let n = need(&p.n, "n")?;
            let r = prob::series_f_x(env, n, None, opts)?;
            let mut row = series_row(&q, n, None, None, &r);
            row[4] = fmt_real(r.reciprocal());
            vec![row]
        }
        "never_return_y" => {
            let m = need(&p.m, "m")?;
            let r = prob::series_f_y(env, m, None, opts)?;
            let mut row = series_row(&q, m, None, None, &r);
            row[4] = fmt_real(r.reciprocal());
            vec![row]
        }
        "p_cut_x" => {
            let k = need(&p.k, "k")?;
            vec![exact_row(&q, None, Some(k), None, prob::p_cut_x(env, k, opts)?)]
        }
        "p_cut_y" => {
            let k = need(&p.k, "k")?;
            let (a, b) = prob::p_cut_y_sites(env, k, opts)?;
            vec![
                exact_row("p_cut_y_site_2k", None, Some(k), None, a),
                exact_row("p_cut_y_site_2k_plus_1", None, Some(k), None, b),
            ]
        }
        "p_cut_layer" => {
            let k = need(&p.k, "k")?;
            let c = prob::p_cut_layer_y(env, k, opts)?;
            vec![
                exact_row("p_cut_layer", None, Some(k), None, c.exact),
                exact_row("p_cut_layer_lower", None, Some(k), None, c.lower),
                exact_row("p_cut_layer_upper", None, Some(k), None, c.upper),
                exact_row("p_cut_layer_asym", None, Some(k), None, c.asym),
            ]
        }
        "eta" => {
            let k = need(&p.k, "k")?;
            vec![exact_row(&q, None, Some(k), None, prob::eta_diag(env, k)?)]
        }
        "h" => {
            let k = need(&p.k, "k")?;
            let (h1, h2) = prob::h_layer(env, k)?;
            vec![
                exact_row("h1", None, Some(k), None, h1),
                exact_row("h2", None, Some(k), None, h2),
            ]
        }
        "tau" => vec![exact_row(&q, None, None, None, prob::tau(env))],
        other => return Err(Error::Config(format!("unknown quantity {other:?}"))),
    };
    let summary = rows.iter().map(|r| format!("{}={}", r[0], r[4])).collect::<Vec<_>>().join(" ");
    art.csv("probe.csv", &PROBE_HEADER, &rows)?;
    Ok((true, summary))
}

fn simulate(p: &Params, env: &Environment, art: &mut Artifacts) -> Result<(bool, String)> {
    let seed = need(&p.seed, "seed")?;
    let kind = need(&p.kind, "kind")?;
    let trials = p.trials.unwrap_or(1);
    let steps = p.steps.unwrap_or(1000);
    let table = StepTable::new(env, kind, (2 + 2 * steps).min(1 << 24) as usize)?;
    let paths = sim::par_map(trials, p.workers, |i| {
        let mut rng = sim::trajectory_rng(seed, i);
        let mut pos = 2usize;
        let mut out = Vec::with_capacity(steps as usize + 1);
        out.push(pos);
        for _ in 0..steps {
            pos = table.next(env, pos, rand::Rng::random::<f64>(&mut rng))?;
            out.push(pos);
        }
        Ok(out)
    })?;
    let mut rows = Vec::new();
    for (t, path) in paths.iter().enumerate() {
        for (s, pos) in path.iter().enumerate() {
            rows.push(vec![t.to_string(), s.to_string(), pos.to_string()]);
        }
    }
    art.csv("paths.csv", &["trajectory", "step", "position"], &rows)?;
    let mut summary = format!("{trials} trajectories of {steps} steps");
    if let Some(layers) = &p.layers {
        if kind != Kind::Y {
            return Err(Error::Config("layer-entry frequencies are defined for Y".into()));
        }
        let cap = p.step_cap.unwrap_or(sim::DEFAULT_STEP_CAP);
        let mut rows = Vec::new();
        for &k in layers {
            let h = sim::layer_hit_estimate(env, k, trials, seed, cap, p.workers)?;
            rows.push(vec![k.to_string(), fmt_real(h.h1), fmt_real(h.h2), h.trials.to_string()]);
        }
        art.csv("hits.csv", &["k", "h1", "h2", "trials"], &rows)?;
        summary.push_str(&format!(", {} layers", layers.len()));
    }
    Ok((true, summary))
}

#[derive(Serialize)]
struct CensusSummary {
    kind: Kind,
    k_max: usize,
    margin: usize,
    eps_conf: f64,
    eps_cens: f64,
    trials: usize,
    seed: u64,
    mean_steps: f64,
    mean_cutpoints: f64,
    mean_layer_cutpoints: Option<f64>,
}

fn census(p: &Params, env: &Environment, art: &mut Artifacts) -> Result<(bool, String)> {
    let kind = need(&p.kind, "kind")?;
    let k_max = need(&p.k_max, "K")?;
    let trials = need(&p.trials, "trials")?;
    let c = sim::cutpoint_census(env, kind, &census_params(p, k_max, trials)?)?;
    let mut rows = Vec::with_capacity(c.trajectories.len() * k_max);
    for (t, tr) in c.trajectories.iter().enumerate() {
        for k in 2..=k_max {
            let v = tr.visits[k];
            let cut = match kind {
                Kind::X => v == 1,
                Kind::Y => v == 0,
            };
            rows.push(vec![t.to_string(), k.to_string(), v.to_string(), (cut as u8).to_string()]);
        }
    }
    art.csv("census.csv", &["trajectory", "k", "visits", "is_cutpoint"], &rows)?;
    let n = c.trajectories.len() as f64;
    let summary = CensusSummary {
        kind,
        k_max,
        margin: c.margin,
        eps_conf: c.eps_conf,
        eps_cens: c.eps_cens,
        trials: c.trajectories.len(),
        seed: c.seed,
        mean_steps: c.trajectories.iter().map(|t| t.steps as f64).sum::<f64>() / n,
        mean_cutpoints: (0..c.trajectories.len()).map(|t| c.cutpoints(t).len() as f64).sum::<f64>() / n,
        mean_layer_cutpoints: (kind == Kind::Y)
            .then(|| (0..c.trajectories.len()).map(|t| c.layer_cutpoints(t).len() as f64).sum::<f64>() / n),
    };
    art.json("census.json", &summary)?;
    Ok((
        true,
        format!(
            "K={k_max} W={} eps_cens={} mean cutpoints {}",
            c.margin,
            fmt_real(c.eps_cens),
            fmt_real(summary.mean_cutpoints)
        ),
    ))
}

fn sn(p: &Params, env: &Environment, art: &mut Artifacts) -> Result<(bool, String)> {
    let kind = need(&p.kind, "kind")?;
    let grid = need(&p.grid, "grid")?;
    let trials = need(&p.trials, "trials")?;
    let max = grid.iter().copied().max().unwrap_or(0);
    let rows = sim::s_n_statistics(env, kind, &grid, &census_params(p, max, trials)?)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), fmt_real(r.mean_sn), fmt_real(r.ci), r.trials.to_string()])
        .collect();
    art.csv("sn.csv", &["n", "mean_sn", "ci", "trials"], &csv_rows)?;
    let exact = sim::expected_s_n(env, kind, &grid, series_opts(p))?;
    let summary: Vec<BTreeMap<&str, f64>> = rows
        .iter()
        .zip(&exact)
        .map(|(r, &e)| BTreeMap::from([("n", r.n as f64), ("mean_sn", r.mean_sn), ("ci", r.ci), ("exact", e)]))
        .collect();
    art.json("sn.json", &summary)?;
    Ok((true, format!("{} grid points, {trials} trajectories", rows.len())))
}

#[derive(Serialize)]
struct VerdictLine {
    quantity: String,
    base: Option<usize>,
    verdict: Verdict,
    final_error: f64,
}

fn write_reports(art: &mut Artifacts, reports: &[ConvergenceReport]) -> Result<bool> {
    for r in reports {
        let name = match r.base {
            Some(b) => format!("{}_k{b}.csv", r.quantity),
            None => format!("{}.csv", r.quantity),
        };
        let rows: Vec<Vec<String>> = r
            .rows
            .iter()
            .map(|x| vec![x.n.to_string(), fmt_real(x.value), fmt_real(x.target), fmt_real(x.abs_error)])
            .collect();
        art.csv(&name, &["n", "value", "target", "abs_error"], &rows)?;
    }
    let lines: Vec<VerdictLine> = reports
        .iter()
        .map(|r| VerdictLine {
            quantity: r.quantity.clone(),
            base: r.base,
            verdict: r.verdict,
            final_error: r.final_error,
        })
        .collect();
    art.json("summary.json", &lines)?;
    Ok(reports.iter().all(|r| r.passed()))
}

fn verify(p: &Params, env: &Environment, art: &mut Artifacts) -> Result<(bool, String)> {
    let suite = need(&p.suite, "suite")?;
    let n = p.n.unwrap_or(1000);
    let grid = p.grid.clone().unwrap_or_else(|| experiments::geometric_grid(10, n, 4));
    let ks = p.k_samples.clone().unwrap_or_else(|| vec![1, 10, 100]);
    let tol = LimitTolerances::default();
    let passed = match suite.as_str() {
        "prop1" => write_reports(art, &experiments::verify_escape_limits(env, &grid, &ks, tol)?)?,
        "ratio" => write_reports(art, &experiments::verify_ratio_limits(env, &grid, &ks, tol)?)?,
        "bounded" => {
            let r = experiments::verify_bounded_ratios(env, &grid)?;
            let mut rows = Vec::new();
            for f in &r.families {
                for &(m, v) in &f.values {
                    rows.push(vec![f.name.clone(), m.to_string(), fmt_real(v)]);
                }
            }
            art.csv("bounded.csv", &["family", "m", "ratio"], &rows)?;
            art.json("summary.json", &r)?;
            r.verdict == Verdict::Pass
        }
        "inequalities" => {
            // forward tails of the environment's own continued fraction
            let k = ks.first().copied().unwrap_or(2).max(2);
            let depth = n.min(50);
            let cf = FnCf(|j: usize| {
                let (a, b) = env.ab(j)?;
                Ok((a / b, 1.0 / b))
            });
            let alpha_ge_1 = (k..=k + depth).try_fold(true, |acc, j| -> Result<bool> {
                let (a, b) = env.ab(j)?;
                Ok(acc && a / b >= 1.0)
            })?;
            let checks = contfrac::check_tail_inequalities(&cf, k, k + depth - 1, alpha_ge_1, 1e-15)?;
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    vec![c.name.clone(), c.k.to_string(), c.n.to_string(), fmt_real(c.lhs), fmt_real(c.rhs), c.pass.to_string()]
                })
                .collect();
            art.csv("inequalities.csv", &["name", "k", "n", "lhs", "rhs", "pass"], &rows)?;
            checks.iter().all(|c| c.pass)
        }
        other => return Err(Error::Config(format!("unknown suite {other:?}"))),
    };
    Ok((passed, format!("suite {suite}: {}", if passed { "pass" } else { "fail" })))
}

#[derive(Serialize)]
struct GrowthSummary {
    kind: Kind,
    beta: f64,
    flatness: f64,
    verdict: Verdict,
}

fn growth(p: &Params, art: &mut Artifacts) -> Result<(bool, String)> {
    let kind = need(&p.kind, "kind")?;
    let betas = p.betas.clone().unwrap_or_else(|| vec![0.0, 0.5]);
    let grid = p.grid.clone().unwrap_or_else(|| experiments::geometric_grid(1000, 100_000, 4));
    let trials = p.trials.unwrap_or(0);
    let max = grid.iter().copied().max().unwrap_or(0);
    let census = if trials > 0 {
        census_params(p, max, trials)?
    } else {
        let mut c = CensusParams::new(max, 0, 0);
        c.series = series_opts(p);
        c
    };
    let mut rows = Vec::new();
    let mut diag = Vec::new();
    let mut summaries = Vec::new();
    for &beta in &betas {
        let (curve, _) = experiments::growth_curve(kind, beta, &grid, trials, &census)?;
        let opt = |x: Option<f64>| x.map_or(String::new(), fmt_real);
        for r in &curve.rows {
            rows.push(vec![
                fmt_real(beta),
                r.n.to_string(),
                opt(r.exact),
                opt(r.mc_mean),
                opt(r.mc_ci),
                fmt_real(r.normalized),
            ]);
        }
        for (t, vals) in curve.trajectory_diagnostic.iter().enumerate() {
            for (v, n) in vals.iter().zip(&grid) {
                diag.push(vec![fmt_real(beta), t.to_string(), n.to_string(), fmt_real(*v)]);
            }
        }
        summaries.push(GrowthSummary {
            kind,
            beta,
            flatness: curve.flatness,
            verdict: curve.verdict,
        });
    }
    art.csv("growth.csv", &["beta", "n", "exact", "mc_mean", "mc_ci", "normalized"], &rows)?;
    if !diag.is_empty() {
        art.csv("growth_diagnostic.csv", &["beta", "trajectory", "n", "value"], &diag)?;
    }
    art.json("growth.json", &summaries)?;
    let passed = summaries.iter().all(|s| s.verdict == Verdict::Pass);
    let text = summaries
        .iter()
        .map(|s| format!("beta={} flatness={}", s.beta, fmt_real(s.flatness)))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((passed, text))
}

/// Exit code for an error: 2 config, 3 model, 4 numeric cap.
pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        crate::error::Category::Config => 2,
        crate::error::Category::Model => 3,
        crate::error::Category::NumericCap => 4,
    }
}

/// Machine-readable error line for standard error.
pub fn error_json(e: &Error) -> String {
    let class = match e.category() {
        crate::error::Category::Config => "config",
        crate::error::Category::Model => "model",
        crate::error::Category::NumericCap => "numeric_cap",
    };
    serde_json::json!({ "error": class, "exit_code": exit_code(e), "message": e.to_string() }).to_string()
}
