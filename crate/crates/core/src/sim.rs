//! Trajectory simulation of `X` and `Y`, cutpoint census, `S_n` statistics
//! and layer-entry frequencies.
//!
//! Trajectory `i` draws from a ChaCha8 stream keyed by `(seed, i)`, and
//! results are folded in index order, so outputs do not depend on the number
//! of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::env::{Environment, Kind};
use crate::error::{Error, Result};
use crate::prob::{self, SeriesOpts, Transience};
use crate::matprod::{Direction, RatioSeq};

pub const DEFAULT_EPS_CONF: f64 = 1e-6;
pub const DEFAULT_STEP_CAP: u64 = 10_000_000_000;
const MAX_MARGIN: usize = 100_000_000;

pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f(i)` for `i in 0..n` on `workers` threads (all cores if `None`)
/// and returns the results in index order.
pub fn par_map<T, F>(n: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Cumulative step thresholds per site. With `u` uniform on `[0, 1)`:
/// `u < t0` is the `q` move, `u < t1` the `p1` move, otherwise the `p2` move.
#[derive(Clone, Debug)]
pub struct StepTable {
    kind: Kind,
    thresholds: Vec<[f64; 2]>,
}

impl StepTable {
    /// Tabulates sites `2..=max_site` (or up to the end of a table
    /// environment).
    pub fn new(env: &Environment, kind: Kind, max_site: usize) -> Result<Self> {
        let top = env.max_site().map_or(max_site, |m| m.min(max_site));
        let mut thresholds = vec![[0.0; 2]; top.max(1) + 1];
        for (k, t) in thresholds.iter_mut().enumerate().skip(2) {
            let l = env.law(k)?;
            *t = [l.q, l.q + l.p1];
        }
        Ok(StepTable { kind, thresholds })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Next position from `pos` given the uniform draw `u`.
    #[inline]
    pub fn next(&self, env: &Environment, pos: usize, u: f64) -> Result<usize> {
        let t = if pos < self.thresholds.len() {
            self.thresholds[pos]
        } else if pos >= 2 {
            let l = env.law(pos)?;
            [l.q, l.q + l.p1]
        } else {
            [0.0; 2]
        };
        Ok(match (self.kind, pos) {
            (Kind::X, 0) => 1,
            (Kind::X, 1) => 2,
            (Kind::Y, 1) => 0,
            (Kind::Y, 0) => 2,
            (Kind::X, _) => {
                if u < t[0] {
                    pos + 1
                } else if u < t[1] {
                    pos - 1
                } else {
                    pos - 2
                }
            }
            (Kind::Y, _) => {
                if u < t[0] {
                    pos - 1
                } else if u < t[1] {
                    pos + 1
                } else {
                    pos + 2
                }
            }
        })
    }
}

/// One walk: kind, position and steps taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WalkState {
    pub kind: Kind,
    pub position: usize,
    pub steps: u64,
}

impl WalkState {
    /// A walk at the start site 2.
    pub fn start(kind: Kind) -> Self {
        WalkState {
            kind,
            position: 2,
            steps: 0,
        }
    }
}

/// One transition of `state`, drawing a single uniform from `rng`.
pub fn step<R: Rng>(env: &Environment, state: WalkState, rng: &mut R) -> Result<WalkState> {
    let u: f64 = rng.random();
    let pos = state.position;
    let next = match (state.kind, pos) {
        (Kind::X, 0) => 1,
        (Kind::X, 1) => 2,
        (Kind::Y, 1) => 0,
        (Kind::Y, 0) => 2,
        (kind, _) => {
            let l = env.law(pos)?;
            let up = kind == Kind::Y;
            if u < l.q {
                if up { pos - 1 } else { pos + 1 }
            } else if u < l.q + l.p1 {
                if up { pos + 1 } else { pos - 1 }
            } else if up {
                pos + 2
            } else {
                pos - 2
            }
        }
    };
    Ok(WalkState {
        kind: state.kind,
        position: next,
        steps: state.steps + 1,
    })
}

/// Smallest margin `W >= 1` such that, once the walk first reaches
/// `[K + W, inf)`, its probability of ever returning to `[0, K]` is below
/// `eps_conf`. Returns `(W, that probability)`.
///
/// For `X` (which lands exactly on `K + W`) the return probability is
/// `1 - F_X(K, K+W)/F_X(K)`; for `Y` from `p` it is
/// `1 - (sum_{j=K}^{p-1} zeta_{K+1} .. zeta_j) / F_Y(K)`, maximized over the
/// two landing sites `K + W`, `K + W + 1`.
pub fn confirmation_margin(
    env: &Environment,
    kind: Kind,
    k_max: usize,
    eps_conf: f64,
    opts: SeriesOpts,
) -> Result<(usize, f64)> {
    if !(eps_conf > 0.0 && eps_conf < 1.0) {
        return Err(Error::InvalidParam(format!("eps_conf must be in (0,1), got {eps_conf}")));
    }
    let recurrent = || Error::NotTransient(format!("recurrent: cutpoint census undefined for {kind:?}"));
    match kind {
        Kind::X => {
            let total = prob::series_f_x(env, k_max, None, opts)?.finite().ok_or_else(recurrent)?;
            let (mut xp, mut x, mut partial) = (0.0f64, 1.0f64, 1.0f64);
            for w in 1..=MAX_MARGIN {
                // partial = F_X(K, K + w)
                let ret = (1.0 - partial / total).max(0.0);
                if ret < eps_conf {
                    return Ok((w, ret));
                }
                let s = k_max + w;
                let (a, b) = env.ab(s)?;
                let xn = a * x + b * xp;
                xp = x;
                x = xn;
                partial += x;
            }
        }
        Kind::Y => {
            let total = prob::series_f_y(env, k_max, None, opts)?.finite().ok_or_else(recurrent)?;
            let mut block = RatioSeq::new(env, Direction::Forward, k_max + 1, k_max + 4096)?;
            // partial(p) = sum_{j=K}^{p-1} T_j, T_j = zeta_{K+1} .. zeta_j
            let (mut t, mut partial) = (1.0f64, 1.0f64);
            let mut rets = Vec::with_capacity(2);
            let ret_at = |partial: f64| (1.0 - partial / total).max(0.0);
            // p = K + 1
            rets.push(ret_at(partial));
            for p in k_max + 2..=k_max + MAX_MARGIN + 1 {
                let i = p - 1;
                if i > block.hi() {
                    block = RatioSeq::new(env, Direction::Forward, i, i + 4095)?;
                }
                t *= block.get(i);
                partial += t;
                rets.push(ret_at(partial));
                // rets[w - 1] is the value at p = K + w
                let w = p - k_max - 1;
                if w >= 1 {
                    let worst = rets[w - 1].max(rets[w]);
                    if worst < eps_conf {
                        return Ok((w, worst));
                    }
                }
            }
        }
    }
    Err(Error::Numeric(format!(
        "no confirmation margin below {MAX_MARGIN} reaches eps_conf = {eps_conf}"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CensusParams {
    /// Census ceiling `K`.
    pub k_max: usize,
    pub eps_conf: f64,
    /// Per-trajectory step cap.
    pub step_cap: u64,
    pub trials: u64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub series: SeriesOpts,
}

impl CensusParams {
    pub fn new(k_max: usize, trials: u64, seed: u64) -> Self {
        CensusParams {
            k_max,
            eps_conf: DEFAULT_EPS_CONF,
            step_cap: DEFAULT_STEP_CAP,
            trials,
            seed,
            workers: None,
            series: SeriesOpts::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryCensus {
    pub steps: u64,
    /// Visit counts of sites `0..=K`.
    pub visits: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutpointCensus {
    pub kind: Kind,
    pub k_max: usize,
    pub margin: usize,
    pub eps_conf: f64,
    /// Certified bound on the probability that a census site is revisited.
    pub eps_cens: f64,
    pub seed: u64,
    pub trajectories: Vec<TrajectoryCensus>,
}

impl CutpointCensus {
    fn is_cut(&self, visits: u32) -> bool {
        match self.kind {
            Kind::X => visits == 1,
            Kind::Y => visits == 0,
        }
    }

    /// Cutpoint sites `2..=K` of trajectory `t`.
    pub fn cutpoints(&self, t: usize) -> Vec<usize> {
        let v = &self.trajectories[t].visits;
        (2..=self.k_max).filter(|&k| self.is_cut(v[k])).collect()
    }

    /// Layers `k` (sites `{2k, 2k+1}` within `K`) holding a `Y` cutpoint.
    pub fn layer_cutpoints(&self, t: usize) -> Vec<usize> {
        let v = &self.trajectories[t].visits;
        (1..=(self.k_max - 1) / 2)
            .filter(|&k| self.is_cut(v[2 * k]) || self.is_cut(v[2 * k + 1]))
            .collect()
    }

    /// Fraction of trajectories with a cutpoint at site `k`.
    pub fn site_frequency(&self, k: usize) -> f64 {
        let hits = self
            .trajectories
            .iter()
            .filter(|t| self.is_cut(t.visits[k]))
            .count();
        hits as f64 / self.trajectories.len() as f64
    }

    /// Fraction of trajectories with a cutpoint in layer `k`.
    pub fn layer_frequency(&self, k: usize) -> f64 {
        let hits = self
            .trajectories
            .iter()
            .filter(|t| self.is_cut(t.visits[2 * k]) || self.is_cut(t.visits[2 * k + 1]))
            .count();
        hits as f64 / self.trajectories.len() as f64
    }

    /// `S_n` of trajectory `t` for each `n` in `grid` (each `<= K`).
    pub fn s_n(&self, t: usize, grid: &[usize]) -> Vec<u64> {
        let v = &self.trajectories[t].visits;
        let mut cum = vec![0u64; self.k_max + 1];
        for k in 2..=self.k_max {
            cum[k] = cum[k - 1] + self.is_cut(v[k]) as u64;
        }
        grid.iter().map(|&n| cum[n.min(self.k_max)]).collect()
    }
}

fn check_transient(env: &Environment, kind: Kind) -> Result<()> {
    if prob::transient(env, kind)?.class == Transience::Recurrent {
        return Err(Error::NotTransient(format!(
            "recurrent: cutpoint census undefined for {kind:?}"
        )));
    }
    Ok(())
}

/// Simulates `trials` walks from site 2 until they first reach
/// `[K + W, inf)` and records visit counts of sites `0..=K`.
pub fn cutpoint_census(env: &Environment, kind: Kind, p: &CensusParams) -> Result<CutpointCensus> {
    if p.k_max < 4 {
        return Err(Error::InvalidParam(format!("census ceiling must be >= 4, got {}", p.k_max)));
    }
    check_transient(env, kind)?;
    let (margin, eps_cens) = confirmation_margin(env, kind, p.k_max, p.eps_conf, p.series)?;
    let stop = p.k_max + margin;
    let table = StepTable::new(env, kind, stop + 2)?;
    let k_max = p.k_max;
    let trajectories = par_map(p.trials, p.workers, |i| {
        let mut rng = trajectory_rng(p.seed, i);
        let mut visits = vec![0u32; k_max + 1];
        let mut pos = 2usize;
        let mut top = 2usize;
        let mut steps = 0u64;
        visits[pos] += 1;
        while pos < stop {
            if steps >= p.step_cap {
                return Err(Error::StepCap {
                    cap: p.step_cap,
                    trajectory: i,
                    position: pos,
                });
            }
            pos = table.next(env, pos, rng.random::<f64>())?;
            steps += 1;
            if pos <= k_max {
                visits[pos] += 1;
            }
            if pos > top {
                if pos > top + 2 {
                    return Err(Error::Numeric(format!("walk jumped from maximum {top} to {pos}")));
                }
                top = pos;
            }
        }
        Ok(TrajectoryCensus { steps, visits })
    })?;
    Ok(CutpointCensus {
        kind,
        k_max,
        margin,
        eps_conf: p.eps_conf,
        eps_cens,
        seed: p.seed,
        trajectories,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SnRow {
    pub n: usize,
    pub mean_sn: f64,
    /// Three standard errors.
    pub ci: f64,
    pub trials: u64,
}

/// Mean of `S_n` over trajectories with a `3 sigma` half-width, from one
/// census per trajectory with `K = max(grid)`.
pub fn s_n_statistics(env: &Environment, kind: Kind, grid: &[usize], p: &CensusParams) -> Result<Vec<SnRow>> {
    let Some(&nmax) = grid.iter().max() else {
        return Ok(Vec::new());
    };
    if grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParam("grid values must be >= 2".into()));
    }
    let mut params = *p;
    params.k_max = nmax.max(4);
    let census = cutpoint_census(env, kind, &params)?;
    Ok(sn_rows(&census, grid))
}

pub fn sn_rows(census: &CutpointCensus, grid: &[usize]) -> Vec<SnRow> {
    let n = census.trajectories.len();
    let per: Vec<Vec<u64>> = (0..n).map(|t| census.s_n(t, grid)).collect();
    grid.iter()
        .enumerate()
        .map(|(g, &gn)| {
            let xs: Vec<f64> = per.iter().map(|v| v[g] as f64).collect();
            let (mean, sd) = mean_sd(&xs);
            SnRow {
                n: gn,
                mean_sn: mean,
                ci: 3.0 * sd / (n as f64).sqrt(),
                trials: n as u64,
            }
        })
        .collect()
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HitEstimate {
    pub k: usize,
    pub h1: f64,
    pub h2: f64,
    pub trials: u64,
}

/// Frequencies with which `Y` started at 2 first enters `{2k, 2k+1}` at
/// `2k` and at `2k + 1`.
pub fn layer_hit_estimate(
    env: &Environment,
    k: usize,
    trials: u64,
    seed: u64,
    step_cap: u64,
    workers: Option<usize>,
) -> Result<HitEstimate> {
    if k < 1 || trials == 0 {
        return Err(Error::InvalidParam(format!("need k >= 1 and trials > 0, got k={k}")));
    }
    let table = StepTable::new(env, Kind::Y, 2 * k + 2)?;
    let lows = par_map(trials, workers, |i| {
        let mut rng = trajectory_rng(seed, i);
        let mut pos = 2usize;
        let mut steps = 0u64;
        while pos < 2 * k {
            if steps >= step_cap {
                return Err(Error::StepCap {
                    cap: step_cap,
                    trajectory: i,
                    position: pos,
                });
            }
            pos = table.next(env, pos, rng.random::<f64>())?;
            steps += 1;
        }
        match pos - 2 * k {
            0 => Ok(true),
            1 => Ok(false),
            _ => Err(Error::Numeric(format!("entry into [{}, inf) at {pos}", 2 * k))),
        }
    })?;
    let low = lows.iter().filter(|&&b| b).count() as u64;
    let h1 = low as f64 / trials as f64;
    Ok(HitEstimate {
        k,
        h1,
        h2: (trials - low) as f64 / trials as f64,
        trials,
    })
}

/// `E S_n` from the exact formulas for the chosen kind.
pub fn expected_s_n(env: &Environment, kind: Kind, grid: &[usize], opts: SeriesOpts) -> Result<Vec<f64>> {
    match kind {
        Kind::X => prob::expected_cutpoints_x(env, grid, opts),
        Kind::Y => prob::expected_cutpoints_y(env, grid, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Law;
    use crate::oracle;

    fn e0() -> Environment {
        Environment::constant(0.5, 0.25, 0.25).unwrap()
    }
    fn e1() -> Environment {
        Environment::constant(0.7, 0.2, 0.1).unwrap()
    }

    #[test]
    fn forced_boundary_moves() {
        let mut rng = trajectory_rng(1, 0);
        let e = e1();
        let s = step(&e, WalkState { kind: Kind::X, position: 0, steps: 0 }, &mut rng).unwrap();
        assert_eq!(s.position, 1);
        let s = step(&e, s, &mut rng).unwrap();
        assert_eq!((s.position, s.steps), (2, 2));
        let s = step(&e, WalkState { kind: Kind::Y, position: 1, steps: 0 }, &mut rng).unwrap();
        assert_eq!(s.position, 0);
        let s = step(&e, s, &mut rng).unwrap();
        assert_eq!(s.position, 2);
    }

    #[test]
    fn one_step_frequencies() {
        let e = e1();
        let mut rng = trajectory_rng(3, 0);
        let n = 1_000_000;
        let mut c = [0u32; 3];
        for _ in 0..n {
            let s = step(&e, WalkState { kind: Kind::X, position: 5, steps: 0 }, &mut rng).unwrap();
            c[match s.position {
                6 => 0,
                4 => 1,
                _ => 2,
            }] += 1;
        }
        for (i, p) in [0.7, 0.2, 0.1].iter().enumerate() {
            let f = c[i] as f64 / n as f64;
            assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12, "{i}: {f}");
        }
        let t = StepTable::new(&e, Kind::Y, 10).unwrap();
        assert_eq!(t.next(&e, 5, 0.69).unwrap(), 4);
        assert_eq!(t.next(&e, 5, 0.75).unwrap(), 6);
        assert_eq!(t.next(&e, 5, 0.95).unwrap(), 7);
        assert_eq!(t.next(&e, 50, 0.95).unwrap(), 52);
    }

    #[test]
    fn margin_is_certified() {
        let (w, eps) = confirmation_margin(&e1(), Kind::X, 100, 1e-6, SeriesOpts::default()).unwrap();
        assert!(eps < 1e-6);
        // return probability from K + w: (F_X - F_X(K, K+w))/F_X
        let f = 7.0 / 3.0;
        let part = prob::series_f_x(&e1(), 100, Some(100 + w), SeriesOpts::default()).unwrap().value;
        assert!(((f - part) / f - eps).abs() < 1e-12);
        let part = prob::series_f_x(&e1(), 100, Some(99 + w), SeriesOpts::default()).unwrap().value;
        assert!((f - part) / f >= 1e-6);
        let (w, eps) = confirmation_margin(&e0(), Kind::Y, 100, 1e-6, SeriesOpts::default()).unwrap();
        assert!(eps < 1e-6 && w > 10);
        // from p the return probability is zeta^(p-K) here
        let z = 1.0 / e0().limits().rho;
        assert!((eps - z.powi(w as i32)).abs() < 1e-12);
        assert!(matches!(
            confirmation_margin(&e0(), Kind::X, 100, 1e-6, SeriesOpts::default()),
            Err(Error::NotTransient(_))
        ));
    }

    #[test]
    fn y_margin_matches_guarded_oracle() {
        let laws = (0..6000)
            .map(|i| {
                let q = 0.45 + 0.1 * ((i as f64) * 0.7).sin();
                let p2 = (1.0 - q) * (0.4 + 0.3 * ((i as f64) * 1.3).cos());
                Law { q, p1: 1.0 - q - p2, p2 }
            })
            .collect();
        let env = Environment::table(laws).unwrap();
        let k = 20;
        let (w, eps) = confirmation_margin(&env, Kind::Y, k, 1e-3, SeriesOpts::default()).unwrap();
        let ret = |guard: usize| {
            let abs = oracle::absorption_solve(&env, oracle::AbsorptionProblem { kind: Kind::Y, m: k, n: guard }).unwrap();
            let r0 = 1.0 - abs.escape(k + w).unwrap();
            let r1 = 1.0 - abs.escape(k + w + 1).unwrap();
            r0.max(r1)
        };
        let (a, b) = (ret(k + w + 200), ret(k + w + 400));
        assert!((a - b).abs() < 1e-12);
        assert!((b - eps).abs() < 1e-10, "oracle {b}, formula {eps}");
    }

    #[test]
    fn census_is_deterministic_and_sound() {
        let mut p = CensusParams::new(60, 40, 11);
        p.workers = Some(1);
        let a = cutpoint_census(&e1(), Kind::X, &p).unwrap();
        p.workers = Some(3);
        let b = cutpoint_census(&e1(), Kind::X, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.eps_cens < a.eps_conf);
        for t in 0..a.trajectories.len() {
            for k in a.cutpoints(t) {
                assert_eq!(a.trajectories[t].visits[k], 1);
            }
            let s = a.s_n(t, &[2, 10, 30, 60]);
            assert!(s.windows(2).all(|w| w[0] <= w[1]));
        }
        let y = cutpoint_census(&e0(), Kind::Y, &p).unwrap();
        for t in 0..y.trajectories.len() {
            assert!(y.trajectories[t].visits[2] >= 1);
            for k in y.cutpoints(t) {
                assert_eq!(y.trajectories[t].visits[k], 0);
            }
        }
        assert!(matches!(
            cutpoint_census(&e0(), Kind::X, &p),
            Err(Error::NotTransient(_))
        ));
    }

    #[test]
    fn step_cap_reports_position() {
        let mut p = CensusParams::new(200, 2, 5);
        p.step_cap = 10;
        match cutpoint_census(&e1(), Kind::X, &p) {
            Err(Error::StepCap { cap: 10, trajectory: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn layer_hits() {
        let h = layer_hit_estimate(&e0(), 1, 10, 1, 1000, None).unwrap();
        assert_eq!((h.h1, h.h2), (1.0, 0.0));
        let n = 100_000;
        let h = layer_hit_estimate(&e0(), 2, n, 2, 1_000_000, None).unwrap();
        let p = 1.0 / 6.0;
        assert!((h.h2 - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
        assert_eq!(h.h1 + h.h2, 1.0);
    }
}
