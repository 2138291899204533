//! Ground truth for the escape formulas: absorption probabilities on a finite
//! interval from a banded linear solve, and plain Monte Carlo estimators.

use rand::Rng;
use serde::Serialize;

use crate::env::{Environment, Kind};
use crate::error::{Error, Result};
use crate::sim::{self, StepTable};

/// Largest interval (`n - m`) accepted by [`absorption_solve`].
pub const MAX_STATES: usize = 10_000;
const SUM_TOL: f64 = 1e-10;

/// Band matrix with `kl` sub- and `ku` super-diagonals, row-major band
/// storage: entry `(i, j)` lives at `i * w + (j + kl - i)`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Solves `A x = r` for every column of `rhs` in place, by Gaussian
    /// elimination without pivoting. Consumes the matrix.
    pub fn solve(mut self, rhs: &mut [Vec<f64>]) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let piv = self.get(k, k);
            if piv.abs() < 1e-300 || !piv.is_finite() {
                return Err(Error::Numeric(format!("zero pivot at row {k}")));
            }
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                let l = self.get(i, k) / piv;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=(k + self.ku).min(n - 1) {
                    let v = self.get(i, j) - l * self.get(k, j);
                    self.set(i, j, v);
                }
                for r in rhs.iter_mut() {
                    r[i] -= l * r[k];
                }
            }
        }
        for r in rhs.iter_mut() {
            for i in (0..n).rev() {
                let mut s = r[i];
                for j in i + 1..=(i + self.ku).min(n - 1) {
                    s -= self.get(i, j) * r[j];
                }
                r[i] = s / self.get(i, i);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AbsorptionProblem {
    pub kind: Kind,
    pub m: usize,
    pub n: usize,
}

/// Class probabilities for every interior start `m+1..n-1`.
///
/// Classes for `Y`: `[0]` hits `[0, m]`, `[1]` exits at `n`, `[2]` exits at
/// `n + 1`. For `X`: `[0]` exits at `m`, `[1]` exits at `m - 1`, `[2]` hits
/// `[n, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Absorption {
    pub problem: AbsorptionProblem,
    pub classes: [Vec<f64>; 3],
}

impl Absorption {
    /// Class probabilities from start `k`, including the trivial boundary
    /// starts.
    pub fn at(&self, k: usize) -> Result<[f64; 3]> {
        let AbsorptionProblem { kind, m, n } = self.problem;
        Ok(match kind {
            Kind::Y if k <= m => [1.0, 0.0, 0.0],
            Kind::Y if k == n => [0.0, 1.0, 0.0],
            Kind::Y if k == n + 1 => [0.0, 0.0, 1.0],
            Kind::X if k == m => [1.0, 0.0, 0.0],
            Kind::X if k + 1 == m => [0.0, 1.0, 0.0],
            Kind::X if k >= n => [0.0, 0.0, 1.0],
            _ if k > m && k < n => {
                let r = k - m - 1;
                [self.classes[0][r], self.classes[1][r], self.classes[2][r]]
            }
            _ => return Err(Error::InvalidParam(format!("start {k} outside the problem on ({m}, {n})"))),
        })
    }

    /// `Y`: probability of reaching `[n, inf)` before `[0, m]`. `X`:
    /// probability of reaching `[0, m]` before `[n, inf)`.
    pub fn escape(&self, k: usize) -> Result<f64> {
        let c = self.at(k)?;
        Ok(match self.problem.kind {
            Kind::Y => c[1] + c[2],
            Kind::X => c[0] + c[1],
        })
    }
}

/// First-step analysis on the interior states of `(m, n)`, solved by banded
/// elimination.
pub fn absorption_solve(env: &Environment, problem: AbsorptionProblem) -> Result<Absorption> {
    let AbsorptionProblem { kind, m, n } = problem;
    if m < 1 || n < m + 2 {
        return Err(Error::InvalidParam(format!("need 1 <= m and n - m >= 2, got m={m}, n={n}")));
    }
    if n - m > MAX_STATES {
        return Err(Error::OracleTooLarge {
            states: n - m - 1,
            limit: MAX_STATES,
        });
    }
    let size = n - m - 1;
    let (kl, ku) = match kind {
        Kind::Y => (1, 2),
        Kind::X => (2, 1),
    };
    let mut a = BandMatrix::zeros(size, kl, ku);
    let mut rhs = vec![vec![0.0; size]; 3];
    for r in 0..size {
        let i = m + 1 + r;
        let l = env.law(i)?;
        a.set(r, r, 1.0);
        let mut row = 0.0;
        // (target, probability) for the three moves
        let moves: [(isize, f64); 3] = match kind {
            Kind::Y => [(-1, l.q), (1, l.p1), (2, l.p2)],
            Kind::X => [(1, l.q), (-1, l.p1), (-2, l.p2)],
        };
        for (d, p) in moves {
            let t = i as isize + d;
            row += p;
            if t > m as isize && t < n as isize {
                let c = (t - m as isize - 1) as usize;
                let v = a.get(r, c) - p;
                a.set(r, c, v);
                continue;
            }
            let class = match kind {
                Kind::Y if t <= m as isize => 0,
                Kind::Y if t == n as isize => 1,
                Kind::Y => 2,
                Kind::X if t == m as isize => 0,
                Kind::X if t + 1 == m as isize => 1,
                Kind::X => 2,
            };
            rhs[class][r] += p;
        }
        if (row - 1.0).abs() > SUM_TOL {
            return Err(Error::Numeric(format!("transition row at site {i} sums to {row}")));
        }
    }
    a.solve(&mut rhs)?;
    for r in 0..size {
        let s: f64 = rhs.iter().map(|c| c[r]).sum();
        if (s - 1.0).abs() > SUM_TOL || rhs.iter().any(|c| !(-SUM_TOL..=1.0 + SUM_TOL).contains(&c[r])) {
            return Err(Error::Numeric(format!(
                "class probabilities at site {} sum to {s}",
                m + 1 + r
            )));
        }
    }
    let [c0, c1, c2] = <[Vec<f64>; 3]>::try_from(rhs).expect("three classes");
    Ok(Absorption {
        problem,
        classes: [c0, c1, c2],
    })
}

/// Limit of an escape probability as the upper boundary recedes to
/// infinity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GuardLimit {
    pub value: f64,
    /// Last upper boundary used.
    pub guard: usize,
    /// Change over the last doubling.
    pub change: f64,
    pub converged: bool,
}

/// Probability that the walk started at `m + 1` never enters `[0, m]`,
/// as the limit over upper guards `G` of the probability of reaching
/// `[G, inf)` first. The guard starts at `m + 64` and doubles its distance
/// until two values differ by less than `tol` or the state limit is hit.
pub fn never_return_limit(env: &Environment, kind: Kind, m: usize, tol: f64) -> Result<GuardLimit> {
    let mut dist = 64usize;
    let solve = |g: usize| -> Result<f64> {
        let abs = absorption_solve(env, AbsorptionProblem { kind, m, n: g })?;
        let e = abs.escape(m + 1)?;
        Ok(match kind {
            Kind::Y => e,
            Kind::X => 1.0 - e,
        })
    };
    let mut prev = solve(m + dist)?;
    loop {
        let next_dist = (2 * dist).min(MAX_STATES);
        if next_dist == dist {
            return Ok(GuardLimit {
                value: prev,
                guard: m + dist,
                change: f64::NAN,
                converged: false,
            });
        }
        let v = solve(m + next_dist)?;
        let change = (v - prev).abs();
        dist = next_dist;
        if change < tol {
            return Ok(GuardLimit {
                value: v,
                guard: m + dist,
                change,
                converged: true,
            });
        }
        if dist == MAX_STATES {
            return Ok(GuardLimit {
                value: v,
                guard: m + dist,
                change,
                converged: false,
            });
        }
        prev = v;
    }
}

/// Frequency with `3 sigma` binomial half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub trials: u64,
}

impl McEstimate {
    fn from_hits(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        McEstimate {
            estimate: p,
            half_width: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    /// `|estimate - target| <= half_width`, widened by one trial's worth when
    /// the frequency is 0 or 1.
    pub fn covers(&self, target: f64) -> bool {
        let floor = if self.half_width == 0.0 { 1.0 / self.trials as f64 } else { 0.0 };
        (self.estimate - target).abs() <= self.half_width.max(floor)
    }
}

const MC_STEP_CAP: u64 = 1_000_000_000;
const MIN_TRIALS: u64 = 1000;

/// Monte Carlo estimate of the escape probability on `(m, n)` from `k`:
/// for `Y` of reaching `[n, inf)` before `[0, m]`, for `X` of reaching
/// `[0, m]` before `[n, inf)`.
pub fn mc_escape_estimate(
    env: &Environment,
    kind: Kind,
    m: usize,
    k: usize,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParam(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if m < 1 || !(m < k && k < n) {
        return Err(Error::InvalidParam(format!("need 1 <= m < k < n, got m={m}, k={k}, n={n}")));
    }
    let table = StepTable::new(env, kind, n + 2)?;
    let hits = sim::par_map(trials, None, |i| {
        let mut rng = sim::trajectory_rng(seed, i);
        let mut pos = k;
        let mut steps = 0u64;
        while pos > m && pos < n {
            if steps >= MC_STEP_CAP {
                return Err(Error::StepCap {
                    cap: MC_STEP_CAP,
                    trajectory: i,
                    position: pos,
                });
            }
            pos = table.next(env, pos, rng.random::<f64>())?;
            steps += 1;
        }
        Ok(match kind {
            Kind::Y => pos >= n,
            Kind::X => pos <= m,
        })
    })?;
    Ok(McEstimate::from_hits(hits.iter().filter(|&&h| h).count() as u64, trials))
}

/// Fraction of walks started at `m + 1` that enter `[0, m]` within
/// `horizon` steps.
pub fn mc_return_frequency(
    env: &Environment,
    kind: Kind,
    m: usize,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParam(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if m < 1 {
        return Err(Error::InvalidParam("need m >= 1".into()));
    }
    let reach = (m as u64 + 1 + 2 * horizon).min(1 << 24) as usize;
    let table = StepTable::new(env, kind, reach)?;
    let hits = sim::par_map(trials, None, |i| {
        let mut rng = sim::trajectory_rng(seed, i);
        let mut pos = m + 1;
        for _ in 0..horizon {
            pos = table.next(env, pos, rng.random::<f64>())?;
            if pos <= m {
                return Ok(true);
            }
        }
        Ok(false)
    })?;
    Ok(McEstimate::from_hits(hits.iter().filter(|&&h| h).count() as u64, trials))
}

/// Return frequencies over the horizons `base, 2 base, ..` (`doublings + 1`
/// values), all from the same seed.
pub fn return_frequency_by_horizon(
    env: &Environment,
    kind: Kind,
    m: usize,
    base: u64,
    doublings: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<(u64, McEstimate)>> {
    (0..=doublings)
        .map(|d| {
            let h = base << d;
            Ok((h, mc_return_frequency(env, kind, m, h, trials, seed)?))
        })
        .collect()
}
