//! Escape, hitting and cutpoint probabilities, the `F`/`D`/`G` series, and
//! the transience and cutpoint-finiteness diagnostics.
//!
//! Series notation, for `m >= 1`:
//!
//! * `F_X(m, n) = sum_{s=m}^{n-1} x_s` with `x_s = e1 A_s .. A_{m+1} e1'`
//!   (`x_m = 1`),
//! * `F_Y(m, n) = 1 + sum_{j=m+1}^{n-1} zeta_{m+1} .. zeta_j`,
//! * `G(m, n)` the same with `1/theta_i`,
//! * `D_X(m)`, `D_Y(m)` the same with `rho_i` and `1/rho_i`.
//!
//! `n = None` means the limit `n -> infinity`.

use serde::Serialize;

use crate::env::{Environment, Kind};
use crate::error::{Error, Result};
use crate::matprod::{self, Direction, RatioSeq, ScaledReal};

pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_TERMS: u64 = 10_000_000;
const DIVERGE_AT: f64 = 1e300;
const QUIET_RUN: u32 = 32;
const BLOCK: usize = 4096;
const RESCALE: f64 = 1e150;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOpts {
    /// Stop once the tail is below `tol` times the partial sum.
    pub tol: f64,
    pub max_terms: u64,
}

impl Default for SeriesOpts {
    fn default() -> Self {
        SeriesOpts {
            tol: DEFAULT_SERIES_TOL,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// Finite sum, no tail.
    Exact,
    /// `tail_bound` is a proven upper bound on the omitted tail.
    Rigorous,
    /// `tail_bound` is an estimate.
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesResult {
    /// Partial sum.
    pub value: f64,
    pub terms_used: u64,
    pub tail_bound: f64,
    pub tail_kind: TailKind,
    /// The series diverges; `value` is a partial sum only.
    pub diverged: bool,
}

impl SeriesResult {
    fn exact(value: f64, terms: u64) -> Self {
        SeriesResult {
            value,
            terms_used: terms,
            tail_bound: 0.0,
            tail_kind: TailKind::Exact,
            diverged: false,
        }
    }

    /// Partial sum plus the tail estimate; `None` when diverged.
    pub fn finite(&self) -> Option<f64> {
        if self.diverged {
            None
        } else {
            Some(self.value + self.tail_bound)
        }
    }

    /// `1/value`, or 0 for a divergent series.
    pub fn reciprocal(&self) -> f64 {
        self.finite().map_or(0.0, |v| 1.0 / v)
    }
}

/// Tail of a positive series whose current term is `t` at index `i`, with
/// ratio `rho = 1 - gap`. Geometric when the Raabe number `i*gap` is large,
/// power law otherwise; `None` if the terms do not decay fast enough to sum.
fn heuristic_tail(t: f64, i: usize, rho: f64, gap: f64) -> Option<f64> {
    if !(gap > 0.0) {
        return None;
    }
    let p = i as f64 * gap;
    if p >= 50.0 {
        Some(t * rho / gap)
    } else if p > 1.0 {
        Some(t * i as f64 / (p - 1.0))
    } else {
        None
    }
}

fn check_m(m: usize, n: Option<usize>) -> Result<()> {
    if m < 1 {
        return Err(Error::InvalidParam(format!("series need m >= 1, got {m}")));
    }
    if let Some(n) = n {
        if n <= m {
            return Err(Error::InvalidParam(format!("need n > m, got m={m}, n={n}")));
        }
    }
    Ok(())
}

/// True when the ratios of the `kind` series are `>= 1` on the whole tail
/// past `k`, so the series diverges.
fn divergence_witness(env: &Environment, kind: Kind, k: usize) -> bool {
    match (env.rho_range_from(k), kind) {
        (Some((lo, _)), Kind::X) => lo >= 1.0,
        (Some((_, hi)), Kind::Y) => hi <= 1.0,
        _ => false,
    }
}

/// `F_X(m, n)` or `F_X(m)`.
pub fn series_f_x(env: &Environment, m: usize, n: Option<usize>, opts: SeriesOpts) -> Result<SeriesResult> {
    check_m(m, n)?;
    if n.is_none() && divergence_witness(env, Kind::X, m + 1) {
        return Ok(SeriesResult {
            value: 1.0,
            terms_used: 1,
            tail_bound: 0.0,
            tail_kind: TailKind::Exact,
            diverged: true,
        });
    }
    // (x_{s-1}, x_s, sum) share the scale 2^e
    let (mut xp, mut x, mut sum) = (0.0f64, 1.0f64, 1.0f64);
    let mut e = 0i64;
    let mut s = m;
    let mut quiet = 0u32;
    loop {
        if let Some(n) = n {
            if s + 1 >= n {
                return Ok(SeriesResult::exact(
                    ScaledReal::from_parts(sum, e).to_f64(),
                    (n - m) as u64,
                ));
            }
        }
        s += 1;
        let (a, b) = env.ab(s)?;
        let xn = a * x + b * xp;
        xp = x;
        x = xn;
        sum += x;
        if sum > RESCALE {
            let f = 2f64.powi(-498);
            xp *= f;
            x *= f;
            sum *= f;
            e += 498;
        }
        if n.is_some() {
            continue;
        }
        let terms = (s - m + 1) as u64;
        if e > 0 || sum > DIVERGE_AT {
            return Ok(SeriesResult {
                value: ScaledReal::from_parts(sum, e).to_f64(),
                terms_used: terms,
                tail_bound: 0.0,
                tail_kind: TailKind::Exact,
                diverged: true,
            });
        }
        if let Some((sa, sb)) = env.sup_ab_from(s + 1) {
            if sa + sb < 1.0 {
                let bound = ((sa + sb) * x + sb * xp) / (1.0 - sa - sb);
                if bound <= opts.tol * sum {
                    return Ok(SeriesResult {
                        value: sum,
                        terms_used: terms,
                        tail_bound: bound,
                        tail_kind: TailKind::Rigorous,
                        diverged: false,
                    });
                }
            }
        }
        let ratio = if xp > 0.0 { x / xp } else { f64::INFINITY };
        let tail = heuristic_tail(x, s, ratio, 1.0 - ratio);
        if x < opts.tol * sum {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= QUIET_RUN {
            if let Some(t) = tail {
                if t < opts.tol * sum {
                    return Ok(SeriesResult {
                        value: sum,
                        terms_used: terms,
                        tail_bound: t,
                        tail_kind: TailKind::Heuristic,
                        diverged: false,
                    });
                }
            }
        }
        if terms >= opts.max_terms {
            return Ok(SeriesResult {
                value: sum,
                terms_used: terms,
                tail_bound: tail.unwrap_or(0.0),
                tail_kind: TailKind::Heuristic,
                diverged: tail.is_none(),
            });
        }
    }
}

/// Which ratio-product series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RatioSeries {
    /// `F_Y`, ratios `zeta_i`.
    FY,
    /// `G`, ratios `1/theta_i`.
    G,
    /// `D_X`, ratios `rho_i`.
    DX,
    /// `D_Y`, ratios `1/rho_i`.
    DY,
}

impl RatioSeries {
    fn kind(self) -> Kind {
        match self {
            RatioSeries::FY | RatioSeries::DY => Kind::Y,
            RatioSeries::G | RatioSeries::DX => Kind::X,
        }
    }
}

/// Streams `(ratio_i, 1 - ratio_i)` for increasing `i`.
struct RatioStream<'a> {
    env: &'a Environment,
    which: RatioSeries,
    block: Option<RatioSeq>,
}

impl<'a> RatioStream<'a> {
    fn new(env: &'a Environment, which: RatioSeries) -> Self {
        RatioStream {
            env,
            which,
            block: None,
        }
    }

    fn get(&mut self, i: usize) -> Result<(f64, f64)> {
        match self.which {
            RatioSeries::DX => Ok((self.env.drift_ratio(Kind::X, i)?, self.env.drift_gap(Kind::X, i)?)),
            RatioSeries::DY => Ok((self.env.drift_ratio(Kind::Y, i)?, self.env.drift_gap(Kind::Y, i)?)),
            RatioSeries::FY | RatioSeries::G => {
                let stale = match &self.block {
                    Some(b) => i < b.lo() || i > b.hi(),
                    None => true,
                };
                if stale {
                    let dir = if self.which == RatioSeries::FY {
                        Direction::Forward
                    } else {
                        Direction::Reversed
                    };
                    let hi = match self.env.max_site() {
                        Some(max) => (i + BLOCK - 1).min(max.saturating_sub(1)).max(i),
                        None => i + BLOCK - 1,
                    };
                    self.block = Some(RatioSeq::new(self.env, dir, i, hi)?);
                }
                let t = self.block.as_ref().unwrap().get(i);
                Ok(if self.which == RatioSeries::FY {
                    (t, 1.0 - t)
                } else {
                    (1.0 / t, 1.0 - 1.0 / t)
                })
            }
        }
    }

    /// Supremum of the ratios at sites `>= i`, when provable.
    fn sup_from(&self, i: usize) -> Option<f64> {
        let env = self.env;
        match self.which {
            RatioSeries::DX => env.rho_range_from(i).map(|r| r.1),
            RatioSeries::DY => env.rho_range_from(i).map(|r| 1.0 / r.0),
            // tails are the constant fixed point 1/rho
            RatioSeries::FY => env.is_constant().then(|| 1.0 / env.limits().rho),
            RatioSeries::G => env.is_constant().then(|| env.limits().rho),
        }
    }
}

/// `1 + sum_{j=m+1}^{n-1} prod_{i=m+1}^{j} ratio_i`, or its limit.
pub fn series_ratio(
    env: &Environment,
    which: RatioSeries,
    m: usize,
    n: Option<usize>,
    opts: SeriesOpts,
) -> Result<SeriesResult> {
    check_m(m, n)?;
    if n.is_none() && divergence_witness(env, which.kind(), m + 1) {
        return Ok(SeriesResult {
            value: 1.0,
            terms_used: 1,
            tail_bound: 0.0,
            tail_kind: TailKind::Exact,
            diverged: true,
        });
    }
    let mut stream = RatioStream::new(env, which);
    let (mut t, mut sum) = (1.0f64, 1.0f64);
    let mut quiet = 0u32;
    let mut j = m;
    loop {
        if let Some(n) = n {
            if j + 1 >= n {
                return Ok(SeriesResult::exact(sum, (n - m) as u64));
            }
        }
        j += 1;
        let (r, gap) = stream.get(j)?;
        t *= r;
        sum += t;
        if n.is_some() {
            if !sum.is_finite() {
                return Ok(SeriesResult::exact(f64::INFINITY, (j - m + 1) as u64));
            }
            continue;
        }
        let terms = (j - m + 1) as u64;
        if sum > DIVERGE_AT {
            return Ok(SeriesResult {
                value: sum,
                terms_used: terms,
                tail_bound: 0.0,
                tail_kind: TailKind::Exact,
                diverged: true,
            });
        }
        if let Some(s) = stream.sup_from(j + 1) {
            if s < 1.0 {
                let bound = t * s / (1.0 - s);
                if bound <= opts.tol * sum {
                    return Ok(SeriesResult {
                        value: sum,
                        terms_used: terms,
                        tail_bound: bound,
                        tail_kind: TailKind::Rigorous,
                        diverged: false,
                    });
                }
            }
        }
        let tail = heuristic_tail(t, j, r, gap);
        if t < opts.tol * sum {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= QUIET_RUN {
            if let Some(tb) = tail {
                if tb < opts.tol * sum {
                    return Ok(SeriesResult {
                        value: sum,
                        terms_used: terms,
                        tail_bound: tb,
                        tail_kind: TailKind::Heuristic,
                        diverged: false,
                    });
                }
            }
        }
        if terms >= opts.max_terms {
            return Ok(SeriesResult {
                value: sum,
                terms_used: terms,
                tail_bound: tail.unwrap_or(0.0),
                tail_kind: TailKind::Heuristic,
                diverged: tail.is_none(),
            });
        }
    }
}

pub fn series_f_y(env: &Environment, m: usize, n: Option<usize>, opts: SeriesOpts) -> Result<SeriesResult> {
    series_ratio(env, RatioSeries::FY, m, n, opts)
}

pub fn series_g(env: &Environment, m: usize, n: Option<usize>, opts: SeriesOpts) -> Result<SeriesResult> {
    series_ratio(env, RatioSeries::G, m, n, opts)
}

pub fn series_d(env: &Environment, kind: Kind, m: usize, n: Option<usize>, opts: SeriesOpts) -> Result<SeriesResult> {
    let which = match kind {
        Kind::X => RatioSeries::DX,
        Kind::Y => RatioSeries::DY,
    };
    series_ratio(env, which, m, n, opts)
}

/// Seeds for the backward profile recursions sit this far above `hi`.
fn profile_top(hi: usize) -> usize {
    hi + hi.max(1000)
}

/// `F_X(m)` for `m = lo..=hi` (entry `m - lo`) from the backward relation
/// `F_X(m) = 1 + a_{m+1} F_X(m+1) + b_{m+2} F_X(m+2)`. `None` if the series
/// diverges.
pub fn profile_f_x(env: &Environment, lo: usize, hi: usize, opts: SeriesOpts) -> Result<Option<Vec<f64>>> {
    if lo < 1 || hi < lo {
        return Err(Error::InvalidParam(format!("need 1 <= lo <= hi, got {lo}..{hi}")));
    }
    let top = profile_top(hi);
    let s1 = series_f_x(env, top + 1, None, opts)?;
    let s0 = series_f_x(env, top, None, opts)?;
    let (Some(mut f2), Some(mut f1)) = (s1.finite(), s0.finite()) else {
        return Ok(None);
    };
    let mut out = vec![0.0; hi - lo + 1];
    for m in (lo..top).rev() {
        let (a1, _) = env.ab(m + 1)?;
        let (_, b2) = env.ab(m + 2)?;
        let f = 1.0 + a1 * f1 + b2 * f2;
        f2 = f1;
        f1 = f;
        if m <= hi {
            out[m - lo] = f;
        }
    }
    if hi == top {
        out[hi - lo] = s0.finite().unwrap();
    }
    Ok(Some(out))
}

/// Ratio-series values for `m = lo..=hi` from `S(m) = 1 + ratio_{m+1} S(m+1)`.
pub fn profile_ratio(
    env: &Environment,
    which: RatioSeries,
    lo: usize,
    hi: usize,
    opts: SeriesOpts,
) -> Result<Option<Vec<f64>>> {
    if lo < 1 || hi < lo {
        return Err(Error::InvalidParam(format!("need 1 <= lo <= hi, got {lo}..{hi}")));
    }
    let top = profile_top(hi);
    let seed = series_ratio(env, which, top, None, opts)?;
    let Some(mut s) = seed.finite() else {
        return Ok(None);
    };
    let tails = match which {
        RatioSeries::FY => Some(RatioSeq::new(env, Direction::Forward, lo + 1, top)?),
        RatioSeries::G => Some(RatioSeq::new(env, Direction::Reversed, lo + 1, top)?),
        _ => None,
    };
    let mut out = vec![0.0; hi - lo + 1];
    for m in (lo..top).rev() {
        let i = m + 1;
        let r = match which {
            RatioSeries::FY => tails.as_ref().unwrap().get(i),
            RatioSeries::G => 1.0 / tails.as_ref().unwrap().get(i),
            RatioSeries::DX => env.drift_ratio(Kind::X, i)?,
            RatioSeries::DY => env.drift_ratio(Kind::Y, i)?,
        };
        s = 1.0 + r * s;
        if m <= hi {
            out[m - lo] = s;
        }
    }
    Ok(Some(out))
}

/// Exit split of `Y` from the interval `(m, n)`: absorbed in `[0, m]`, or
/// exiting upward at `n` or at `n + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EscapeSplit {
    pub q_low: f64,
    pub q_high: f64,
    pub q_plus: f64,
}

/// `(1 - Q_j(m, j+1, +), Q_j^{j+2}(m, j+1), Q_j^{j+1}(m, j+1))` for
/// `j = m..n-1`. Built forward: with `d = a_j + corner_{j-1} + inv_{j-1}`,
/// `inv_j = inv_{j-1}/d`, `corner_j = b_j/d` and
/// `near_j = (a_j - b_j + corner_{j-1})/d`. Every quantity is a ratio of
/// positive terms.
fn one_step_exits(env: &Environment, m: usize, n: usize) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(n - m);
    let (mut inv, mut corner) = (1.0, 0.0);
    out.push((inv, corner, 0.0));
    for j in m + 1..n {
        let (a, b) = env.ab(j)?;
        let d = a + corner + inv;
        let near = (a - b + corner) / d;
        inv /= d;
        corner = b / d;
        out.push((inv, corner, near));
    }
    Ok(out)
}

/// `Q_k^n(m, n)`, `Q_k^{n+1}(m, n)` and their sum. Starts `k <= m` give
/// zeros, `k = n` gives `(1, 0)` and `k = n + 1` gives `(0, 1)`.
pub fn escape_y_split(env: &Environment, m: usize, k: usize, n: usize) -> Result<EscapeSplit> {
    if m < 1 || n <= m {
        return Err(Error::InvalidParam(format!("need 1 <= m < n, got m={m}, n={n}")));
    }
    if k > n + 1 {
        return Err(Error::InvalidParam(format!("start k={k} beyond n+1={}", n + 1)));
    }
    let split = |lo: f64, hi: f64| EscapeSplit {
        q_low: lo,
        q_high: hi,
        q_plus: lo + hi,
    };
    if k <= m {
        return Ok(split(0.0, 0.0));
    }
    if k == n {
        return Ok(split(1.0, 0.0));
    }
    if k == n + 1 {
        return Ok(split(0.0, 1.0));
    }
    let steps = one_step_exits(env, m, n)?;
    // (h, j): first entry into [N, inf) lands at N or N + 1
    let (mut h, mut jj) = (1.0, 0.0);
    for nn in k + 1..=n {
        let (_, corner, near) = steps[nn - 1 - m];
        let hn = jj + h * near;
        jj = h * corner;
        h = hn;
    }
    Ok(split(h, jj))
}

/// `Q_k(m, n, +)` from the approximant ratios `zeta_{i, n-1}`:
/// `sum_{s<=k} P_s / (P_n + sum_{s<n} P_s)` with
/// `P_s = zeta_{m+1,n-1} .. zeta_{s-1,n-1}`.
pub fn escape_y_plus_zeta(env: &Environment, m: usize, k: usize, n: usize) -> Result<f64> {
    if m < 1 || !(m < k && k < n) {
        return Err(Error::InvalidParam(format!("need 1 <= m < k < n, got m={m}, k={k}, n={n}")));
    }
    let z = matprod::zeta_row(env, m + 1, n - 1)?;
    let mut p = ScaledReal::ONE;
    let mut num = ScaledReal::ZERO;
    let mut den = ScaledReal::ZERO;
    for s in m + 1..n {
        if s <= k {
            num = num + p;
        }
        den = den + p;
        p = p * ScaledReal::new(z[s - m - 1]);
    }
    den = den + p;
    Ok((num / den).to_f64())
}

/// `P_k(m, n, -)`: `X` started at `k` hits `[0, m]` before `[n, inf)`.
pub fn escape_x_down(env: &Environment, m: usize, k: usize, n: usize) -> Result<f64> {
    if m < 1 || n <= m {
        return Err(Error::InvalidParam(format!("need 1 <= m < n, got m={m}, n={n}")));
    }
    if k <= m {
        return Ok(1.0);
    }
    if k >= n {
        return Ok(0.0);
    }
    // P = sum_{s=k}^{n-1} x_s / sum_{s=m}^{n-1} x_s
    let (mut xp, mut x) = (0.0f64, 1.0f64);
    let (mut num, mut den) = (0.0f64, 1.0f64);
    for s in m + 1..n {
        let (a, b) = env.ab(s)?;
        let xn = a * x + b * xp;
        xp = x;
        x = xn;
        den += x;
        if s >= k {
            num += x;
        }
        if den > RESCALE {
            let f = 1.0 / RESCALE;
            xp *= f;
            x *= f;
            num *= f;
            den *= f;
        }
    }
    Ok(num / den)
}

/// `P(X never returns to [0, n] | X_0 = n + 1) = 1/F_X(n)`.
pub fn escape_x_never_return(env: &Environment, n: usize, opts: SeriesOpts) -> Result<f64> {
    Ok(series_f_x(env, n, None, opts)?.reciprocal())
}

/// `P(Y never returns to [0, m] | Y_0 = m + 1) = 1/F_Y(m)`.
pub fn escape_y_to_inf(env: &Environment, m: usize, opts: SeriesOpts) -> Result<f64> {
    Ok(series_f_y(env, m, None, opts)?.reciprocal())
}

/// `eta_{j,j}(2)` for `j = 0..=k` (entry 0 unused): the probability that `Y`
/// started at `j` enters `[j+1, inf)` at `j + 2`.
pub fn eta_table(env: &Environment, k: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; k.max(1) + 1];
    for j in 2..=k {
        let (a, b) = env.ab(j)?;
        out[j] = b / (a + out[j - 1]);
    }
    Ok(out)
}

pub fn eta_diag(env: &Environment, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParam("eta needs k >= 1".into()));
    }
    Ok(eta_table(env, k)?[k])
}

/// `(h_j(1), h_j(2))` for `j = 1..=k` (entry `j - 1`): first entry of `Y`
/// into the layer `{2j, 2j+1}` at `2j` or `2j + 1`.
pub fn h_table(env: &Environment, k: usize) -> Result<Vec<(f64, f64)>> {
    if k < 1 {
        return Err(Error::InvalidParam("h needs k >= 1".into()));
    }
    let eta = eta_table(env, 2 * k)?;
    let mut out = Vec::with_capacity(k);
    let mut h2 = 0.0;
    out.push((1.0, 0.0));
    for j in 1..k {
        let (e0, e1) = (eta[2 * j], eta[2 * j + 1]);
        h2 = h2 * e0 * e1 + (1.0 - e0) * e1;
        out.push((1.0 - h2, h2));
    }
    Ok(out)
}

pub fn h_layer(env: &Environment, k: usize) -> Result<(f64, f64)> {
    Ok(*h_table(env, k)?.last().unwrap())
}

/// `P(k is a cutpoint of X) = q_k / F_X(k)`.
pub fn p_cut_x(env: &Environment, k: usize, opts: SeriesOpts) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("cutpoints start at site 2, got {k}")));
    }
    Ok(env.law(k)?.q * series_f_x(env, k, None, opts)?.reciprocal())
}

/// `P(j and k are cutpoints of X) = q_j q_k / (F_X(j, k) F_X(k))`.
pub fn p_cut_x_joint(env: &Environment, j: usize, k: usize, opts: SeriesOpts) -> Result<f64> {
    if !(2 <= j && j < k) {
        return Err(Error::InvalidParam(format!("need 2 <= j < k, got j={j}, k={k}")));
    }
    let fk = series_f_x(env, k, None, opts)?;
    let fjk = series_f_x(env, j, Some(k), opts)?.value;
    Ok(env.law(j)?.q * env.law(k)?.q * fk.reciprocal() / fjk)
}

/// Per-site cutpoint probabilities of `Y` in layer `k`:
/// `(P(2k cut), P(2k+1 cut))`.
pub fn p_cut_y_sites(env: &Environment, k: usize, opts: SeriesOpts) -> Result<(f64, f64)> {
    if k < 1 {
        return Err(Error::InvalidParam("layers start at k = 1".into()));
    }
    let (h1, h2) = h_layer(env, k)?;
    let eta = eta_diag(env, 2 * k)?;
    let f0 = series_f_y(env, 2 * k, None, opts)?.reciprocal();
    let f1 = series_f_y(env, 2 * k + 1, None, opts)?.reciprocal();
    Ok((h2 * f0, h1 * eta * f1))
}

/// Layer-cutpoint probability of `Y` for `L_k = {2k, 2k+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerCut {
    pub exact: f64,
    /// Bracket using `max`/`min` of `F_Y(2k)`, `F_Y(2k+1)`.
    pub lower: f64,
    pub upper: f64,
    /// Asymptotic approximation `(-2 sigma/(1 - sigma)) / F_Y(2k)`.
    pub asym: f64,
}

pub fn p_cut_layer_y(env: &Environment, k: usize, opts: SeriesOpts) -> Result<LayerCut> {
    if k < 1 {
        return Err(Error::InvalidParam("layers start at k = 1".into()));
    }
    let (h1, h2) = h_layer(env, k)?;
    let eta = eta_diag(env, 2 * k)?;
    let f0 = series_f_y(env, 2 * k, None, opts)?;
    let f1 = series_f_y(env, 2 * k + 1, None, opts)?;
    let (Some(f0), Some(f1)) = (f0.finite(), f1.finite()) else {
        return Ok(LayerCut {
            exact: 0.0,
            lower: 0.0,
            upper: 0.0,
            asym: 0.0,
        });
    };
    let c = h1 * eta + h2;
    let sigma = env.limits().sigma;
    Ok(LayerCut {
        exact: h1 * eta / f1 + h2 / f0,
        lower: c / f0.max(f1),
        upper: c / f0.min(f1),
        asym: (-2.0 * sigma / (1.0 - sigma)) / f0,
    })
}

/// Limit of the corner probability `Q_{k+n-1}^{k+n+1}(k, k+n)` as stated.
pub fn tau(env: &Environment) -> f64 {
    env.limits().tau
}

/// `E S_n = sum_{k=2}^{n} q_k / F_X(k)` for each `n` in `grid`. All zeros when
/// `X` is recurrent.
pub fn expected_cutpoints_x(env: &Environment, grid: &[usize], opts: SeriesOpts) -> Result<Vec<f64>> {
    let Some(&nmax) = grid.iter().max() else {
        return Ok(Vec::new());
    };
    if grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParam("grid values must be >= 2".into()));
    }
    let Some(f) = profile_f_x(env, 2, nmax, opts)? else {
        return Ok(vec![0.0; grid.len()]);
    };
    let mut cum = vec![0.0; nmax + 1];
    for k in 2..=nmax {
        cum[k] = cum[k - 1] + env.law(k)?.q / f[k - 2];
    }
    Ok(grid.iter().map(|&n| cum[n]).collect())
}

/// `E S_n` for `Y`, summing the per-site cutpoint probabilities over sites
/// `2..=n`.
pub fn expected_cutpoints_y(env: &Environment, grid: &[usize], opts: SeriesOpts) -> Result<Vec<f64>> {
    let Some(&nmax) = grid.iter().max() else {
        return Ok(Vec::new());
    };
    if grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParam("grid values must be >= 2".into()));
    }
    let layers = nmax / 2;
    let Some(fy) = profile_ratio(env, RatioSeries::FY, 2, 2 * layers + 1, opts)? else {
        return Ok(vec![0.0; grid.len()]);
    };
    let h = h_table(env, layers)?;
    let eta = eta_table(env, 2 * layers)?;
    let mut site = vec![0.0; 2 * layers + 2];
    for k in 1..=layers {
        let (h1, h2) = h[k - 1];
        site[2 * k] = h2 / fy[2 * k - 2];
        site[2 * k + 1] = h1 * eta[2 * k] / fy[2 * k - 1];
    }
    let mut cum = vec![0.0; 2 * layers + 2];
    for s in 2..cum.len() {
        cum[s] = cum[s - 1] + site[s];
    }
    Ok(grid.iter().map(|&n| cum[n.min(cum.len() - 1)]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transience {
    Transient,
    Recurrent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransienceReport {
    pub class: Transience,
    /// Which test decided: `geometric`, `monotone`, `raabe`, `bertrand`, or
    /// `none`.
    pub witness: String,
    /// Limit of the per-site ratio (`rho` for X, `1/rho` for Y).
    pub limit_ratio: f64,
    /// `(site, statistic)` samples used by the Raabe/Bertrand tests.
    pub samples: Vec<(usize, f64)>,
}

const CRIT_EPS: f64 = 1e-12;
const TEST_MARGIN: f64 = 0.05;
const SAMPLE_SITES: [usize; 10] = [
    1_000,
    10_000,
    100_000,
    1_000_000,
    10_000_000,
    100_000_000,
    1_000_000_000,
    10_000_000_000,
    100_000_000_000,
    1_000_000_000_000,
];

/// Classifies `kind` by the series `sum_s ratio_2 .. ratio_s`.
///
/// Off criticality the limit ratio decides. At criticality a tail of ratios
/// `>= 1` proves divergence; otherwise the Raabe statistic `R_i = i (1 - ratio_i)`
/// and then the Bertrand statistic `(R_i - 1) log i` are sampled on
/// `i = 10^3 .. 10^12`, and a verdict needs every sample beyond the threshold
/// by `0.05` with the last three moving away from it.
pub fn transient(env: &Environment, kind: Kind) -> Result<TransienceReport> {
    let lim = env.limits().rho;
    let limit_ratio = match kind {
        Kind::X => lim,
        Kind::Y => 1.0 / lim,
    };
    let report = |class, witness: &str, samples| TransienceReport {
        class,
        witness: witness.into(),
        limit_ratio,
        samples,
    };
    if limit_ratio < 1.0 - CRIT_EPS {
        return Ok(report(Transience::Transient, "geometric", Vec::new()));
    }
    if limit_ratio > 1.0 + CRIT_EPS {
        return Ok(report(Transience::Recurrent, "geometric", Vec::new()));
    }
    if env.max_site().is_some() {
        return Ok(report(Transience::Inconclusive, "none", Vec::new()));
    }
    if divergence_witness(env, kind, 2) {
        return Ok(report(Transience::Recurrent, "monotone", Vec::new()));
    }
    let raabe: Vec<(usize, f64)> = SAMPLE_SITES
        .iter()
        .map(|&i| Ok((i, i as f64 * env.drift_gap(kind, i)?)))
        .collect::<Result<_>>()?;
    if let Some(c) = decide(&raabe, 1.0) {
        return Ok(report(c, "raabe", raabe));
    }
    let bertrand: Vec<(usize, f64)> = raabe
        .iter()
        .map(|&(i, r)| (i, (r - 1.0) * (i as f64).ln()))
        .collect();
    if let Some(c) = decide(&bertrand, 1.0) {
        return Ok(report(c, "bertrand", bertrand));
    }
    Ok(report(Transience::Inconclusive, "none", bertrand))
}

fn decide(samples: &[(usize, f64)], threshold: f64) -> Option<Transience> {
    let v: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let tail = &v[v.len() - 3..];
    let slack = 1e-9;
    if v.iter().all(|&x| x > threshold + TEST_MARGIN) && tail.windows(2).all(|w| w[1] >= w[0] - slack) {
        return Some(Transience::Transient);
    }
    if v.iter().all(|&x| x < threshold - TEST_MARGIN) && tail.windows(2).all(|w| w[1] <= w[0] + slack) {
        return Some(Transience::Recurrent);
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutpointPrediction {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub kind: Kind,
    pub n_max: usize,
    /// `(n, D_Z(n), partial sum of 1/(D_Z(j) log j) for j = 2..=n)`.
    pub grid: Vec<(usize, f64, f64)>,
    /// Fitted exponent of `D_Z(n)` against `n` over the top half of the grid.
    pub growth_exponent: f64,
    /// Fitted exponent of `D_Z(n)/n` against `log log n`, when computed.
    pub loglog_exponent: Option<f64>,
    /// `rho_k` increasing (X) / decreasing (Y) on the sampled range.
    pub monotone: bool,
    /// `a + b = 1` up to rounding.
    pub near_critical: bool,
    /// `D_Z(n)/(n log n)` nonincreasing over the top half of the grid.
    pub side_condition: bool,
    /// `D_Z` is infinite: the walk is recurrent.
    pub recurrent: bool,
    pub prediction: CutpointPrediction,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Evaluates `sum_n 1/(D_Z(n) log n)` on a log grid up to `n_max` and
/// classifies the growth of `D_Z`: exponent `< 0.9` predicts infinitely many
/// cutpoints, `> 1.1` finitely many; near exponent 1 the `log log` power
/// decides (`> 1.25` finite, `< 0.75` infinite). This is a diagnostic for a
/// limit statement.
pub fn cutpoint_criterion(env: &Environment, kind: Kind, n_max: usize, opts: SeriesOpts) -> Result<CriterionReport> {
    if n_max < 100 {
        return Err(Error::InvalidParam(format!("n_max must be >= 100, got {n_max}")));
    }
    let which = match kind {
        Kind::X => RatioSeries::DX,
        Kind::Y => RatioSeries::DY,
    };
    let l = env.limits();
    let near_critical = (l.a + l.b - 1.0).abs() < 1e-12;
    let mut monotone = true;
    let mut prev = env.rho(2)?;
    let mut k = 3usize;
    while k <= n_max {
        let r = env.rho(k)?;
        let ok = match kind {
            Kind::X => r >= prev,
            Kind::Y => r <= prev,
        };
        monotone &= ok;
        prev = r;
        k += 1 + k / 64;
    }
    let Some(d) = profile_ratio(env, which, 2, n_max, opts)? else {
        return Ok(CriterionReport {
            kind,
            n_max,
            grid: Vec::new(),
            growth_exponent: f64::NAN,
            loglog_exponent: None,
            monotone,
            near_critical,
            side_condition: true,
            recurrent: true,
            prediction: CutpointPrediction::Finite,
        });
    };
    let mut marks: Vec<usize> = Vec::new();
    let mut e = 2.0f64;
    while 10f64.powf(e) <= n_max as f64 * (1.0 + 1e-12) {
        marks.push(10f64.powf(e).round() as usize);
        e += 0.25;
    }
    if *marks.last().unwrap() != n_max {
        marks.push(n_max);
    }
    let mut grid = Vec::with_capacity(marks.len());
    let mut sum = 0.0;
    let mut next = 0;
    for n in 2..=n_max {
        let dn = d[n - 2];
        sum += 1.0 / (dn * (n as f64).ln());
        if next < marks.len() && n == marks[next] {
            grid.push((n, dn, sum));
            next += 1;
        }
    }
    let top = &grid[grid.len() / 2..];
    let lx: Vec<f64> = top.iter().map(|g| (g.0 as f64).ln()).collect();
    let ly: Vec<f64> = top.iter().map(|g| g.1.ln()).collect();
    let growth_exponent = slope(&lx, &ly);
    let side: Vec<f64> = top.iter().map(|g| g.1 / (g.0 as f64 * (g.0 as f64).ln())).collect();
    let side_condition = side.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let mut loglog_exponent = None;
    let prediction = if growth_exponent < 0.9 {
        CutpointPrediction::Infinite
    } else if growth_exponent > 1.1 {
        CutpointPrediction::Finite
    } else {
        let x: Vec<f64> = top.iter().map(|g| (g.0 as f64).ln().ln().ln()).collect();
        let y: Vec<f64> = top.iter().map(|g| (g.1 / g.0 as f64).ln()).collect();
        let b = slope(&x, &y);
        loglog_exponent = Some(b);
        if b > 1.25 {
            CutpointPrediction::Finite
        } else if b < 0.75 {
            CutpointPrediction::Infinite
        } else {
            CutpointPrediction::Inconclusive
        }
    };
    let prediction = if prediction == CutpointPrediction::Infinite && !side_condition {
        CutpointPrediction::Inconclusive
    } else {
        prediction
    };
    Ok(CriterionReport {
        kind,
        n_max,
        grid,
        growth_exponent,
        loglog_exponent,
        monotone,
        near_critical,
        side_condition,
        recurrent: false,
        prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Sign;

    fn e0() -> Environment {
        Environment::constant(0.5, 0.25, 0.25).unwrap()
    }
    fn e1() -> Environment {
        Environment::constant(0.7, 0.2, 0.1).unwrap()
    }
    fn opts() -> SeriesOpts {
        SeriesOpts::default()
    }
    fn rel(x: f64, y: f64) -> f64 {
        ((x - y) / y).abs()
    }

    #[test]
    fn constant_series_closed_forms() {
        let fx = series_f_x(&e1(), 5, None, opts()).unwrap();
        assert_eq!(fx.tail_kind, TailKind::Rigorous);
        assert!(rel(fx.finite().unwrap(), 7.0 / 3.0) < 1e-11);
        let fy = series_f_y(&e0(), 3, None, opts()).unwrap();
        assert!(rel(fy.finite().unwrap(), 2.0 + 3f64.sqrt()) < 1e-11);
        let r = e1().limits().rho;
        let dx = series_d(&e1(), Kind::X, 4, None, opts()).unwrap();
        assert!(rel(dx.finite().unwrap(), 1.0 / (1.0 - r)) < 1e-11);
        assert!((dx.finite().unwrap() - 2.8472).abs() < 1e-4);
        assert!(series_f_x(&e0(), 5, None, opts()).unwrap().diverged);
        assert!(series_f_y(&e1(), 5, None, opts()).unwrap().diverged);
        let g = series_g(&e1(), 5, None, opts()).unwrap();
        assert!(rel(g.finite().unwrap(), 1.0 / (1.0 - r)) < 1e-11);
    }

    #[test]
    fn finite_series_match_direct_sums() {
        let e = Environment::corollary(0.5, Sign::X, 0.25, None).unwrap();
        let f = series_f_x(&e, 3, Some(9), opts()).unwrap().value;
        // x_s = e1 A_s .. A_4 e1' built by explicit 2x2 products
        let mut sum = 1.0;
        for s in 4..9 {
            let mut m = [[1.0, 0.0], [0.0, 1.0]];
            for i in (4..=s).rev() {
                let (a, b) = e.ab(i).unwrap();
                let ai = [[a, b], [1.0, 0.0]];
                m = [
                    [m[0][0] * ai[0][0] + m[0][1] * ai[1][0], m[0][0] * ai[0][1] + m[0][1] * ai[1][1]],
                    [m[1][0] * ai[0][0] + m[1][1] * ai[1][0], m[1][0] * ai[0][1] + m[1][1] * ai[1][1]],
                ];
            }
            sum += m[0][0];
        }
        assert!(rel(f, sum) < 1e-14);
        assert_eq!(series_f_y(&e, 4, Some(5), opts()).unwrap().value, 1.0);
    }

    #[test]
    fn near_critical_d_x_is_linear() {
        // rho_i = 1 - 2/i telescopes to D_X(n) = n
        let e = Environment::corollary(0.0, Sign::X, 0.25, None).unwrap();
        let d = series_d(&e, Kind::X, 100, None, opts()).unwrap();
        assert!(!d.diverged);
        assert_eq!(d.tail_kind, TailKind::Heuristic);
        assert!(rel(d.finite().unwrap(), 100.0) < 1e-6, "{d:?}");
        let p = profile_ratio(&e, RatioSeries::DX, 10, 2000, opts()).unwrap().unwrap();
        for (i, v) in p.iter().enumerate() {
            assert!(rel(*v, (i + 10) as f64) < 1e-6);
        }
    }

    #[test]
    fn profiles_match_series() {
        let e = Environment::corollary(0.5, Sign::Y, 0.25, None).unwrap();
        let p = profile_ratio(&e, RatioSeries::FY, 5, 300, opts()).unwrap().unwrap();
        for m in [5usize, 40, 300] {
            let s = series_f_y(&e, m, None, opts()).unwrap().finite().unwrap();
            assert!(rel(p[m - 5], s) < 1e-6, "m={m}");
        }
        let px = profile_f_x(&e1(), 2, 50, opts()).unwrap().unwrap();
        assert!(px.iter().all(|v| rel(*v, 7.0 / 3.0) < 1e-12));
        assert!(profile_f_x(&e0(), 2, 50, opts()).unwrap().is_none());
    }

    #[test]
    fn escape_single_step() {
        let s = escape_y_split(&e0(), 3, 4, 5).unwrap();
        assert!((s.q_low - 0.25).abs() < 1e-15 && (s.q_high - 0.25).abs() < 1e-15);
        assert!((s.q_plus - 0.5).abs() < 1e-15);
        assert!((escape_x_down(&e1(), 3, 4, 5).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(escape_y_split(&e0(), 3, 3, 8).unwrap().q_plus, 0.0);
        assert_eq!(escape_y_split(&e0(), 3, 9, 8).unwrap().q_high, 1.0);
    }

    #[test]
    fn zeta_path_agrees() {
        let e = Environment::corollary(0.5, Sign::Y, 0.25, Some(16)).unwrap();
        for (m, k, n) in [(1usize, 3usize, 8usize), (4, 10, 60), (2, 3, 200)] {
            let a = escape_y_split(&e, m, k, n).unwrap().q_plus;
            let b = escape_y_plus_zeta(&e, m, k, n).unwrap();
            assert!((a - b).abs() < 1e-13, "{m},{k},{n}: {a} {b}");
        }
        let a = escape_y_split(&e1(), 2, 150, 400).unwrap().q_plus;
        let b = escape_y_plus_zeta(&e1(), 2, 150, 400).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn escape_sandwich() {
        for env in [e0(), e1()] {
            for (m, n) in [(2usize, 5usize), (3, 40), (10, 200)] {
                let q = escape_y_split(&env, m, m + 1, n).unwrap().q_plus;
                let lo = 1.0 / series_f_y(&env, m, Some(n + 1), opts()).unwrap().value;
                let hi = 1.0 / series_f_y(&env, m, Some(n), opts()).unwrap().value;
                assert!(lo <= q * (1.0 + 1e-12) && q <= hi * (1.0 + 1e-12), "{lo} {q} {hi}");
            }
        }
    }

    #[test]
    fn never_return_limits() {
        assert!((escape_x_never_return(&e1(), 6, opts()).unwrap() - 3.0 / 7.0).abs() < 1e-12);
        assert!((escape_y_to_inf(&e0(), 6, opts()).unwrap() - 0.2679491924311227).abs() < 1e-12);
        assert_eq!(escape_y_to_inf(&e1(), 6, opts()).unwrap(), 0.0);
    }

    #[test]
    fn eta_and_h_examples() {
        assert_eq!(eta_diag(&e0(), 2).unwrap(), 0.5);
        assert!((h_layer(&e0(), 2).unwrap().1 - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(h_layer(&e0(), 1).unwrap(), (1.0, 0.0));
        let s = e0().limits().sigma;
        assert!((eta_diag(&e0(), 1000).unwrap() + s).abs() < 1e-12);
        assert!((h_layer(&e0(), 1000).unwrap().1 + s / (1.0 - s)).abs() < 1e-12);
    }

    #[test]
    fn cutpoint_probabilities() {
        assert!((p_cut_x(&e1(), 10, opts()).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(p_cut_x(&e0(), 10, opts()).unwrap(), 0.0);
        assert!((p_cut_x_joint(&e1(), 2, 3, opts()).unwrap() - 0.21).abs() < 1e-12);
        let lc = p_cut_layer_y(&e0(), 200, opts()).unwrap();
        assert!((lc.asym - 0.143594).abs() < 1e-6);
        assert!(lc.lower <= lc.exact && lc.exact <= lc.upper);
        assert!((lc.exact - lc.asym).abs() < 1e-10);
        let (s0, s1) = p_cut_y_sites(&e0(), 200, opts()).unwrap();
        assert!((s0 + s1 - lc.exact).abs() < 1e-15);
        assert_eq!(p_cut_layer_y(&e1(), 20, opts()).unwrap().exact, 0.0);
    }

    #[test]
    fn expected_counts() {
        let es = expected_cutpoints_x(&e1(), &[2, 10, 100], opts()).unwrap();
        assert!((es[1] - 9.0 * 0.3).abs() < 1e-10 && (es[2] - 99.0 * 0.3).abs() < 1e-9);
        let ey = expected_cutpoints_y(&e0(), &[2, 3, 401], opts()).unwrap();
        assert_eq!(ey[0], 0.0);
        let p3 = p_cut_y_sites(&e0(), 1, opts()).unwrap().1;
        assert!((ey[1] - p3).abs() < 1e-12);
        let direct: f64 = (1..=200)
            .map(|k| {
                let (a, b) = p_cut_y_sites(&e0(), k, opts()).unwrap();
                a + b
            })
            .sum();
        assert!(rel(ey[2], direct) < 1e-9);
    }

    #[test]
    fn transience_classes() {
        use Transience::*;
        assert_eq!(transient(&e1(), Kind::X).unwrap().class, Transient);
        assert_eq!(transient(&e1(), Kind::Y).unwrap().class, Recurrent);
        assert_eq!(transient(&e0(), Kind::Y).unwrap().class, Transient);
        assert_eq!(transient(&e0(), Kind::X).unwrap().class, Recurrent);
        let y0 = Environment::corollary(0.0, Sign::Y, 0.25, None).unwrap();
        let r = transient(&y0, Kind::Y).unwrap();
        assert_eq!((r.class, r.witness.as_str()), (Transient, "raabe"));
        assert_eq!(transient(&y0, Kind::X).unwrap().class, Recurrent);
        let x5 = Environment::corollary(0.5, Sign::X, 0.25, None).unwrap();
        let r = transient(&x5, Kind::X).unwrap();
        assert_eq!((r.class, r.witness.as_str()), (Transient, "bertrand"));
    }

    #[test]
    fn criterion_predictions() {
        let c = cutpoint_criterion(&e1(), Kind::X, 10_000, opts()).unwrap();
        assert_eq!(c.prediction, CutpointPrediction::Infinite);
        let c = cutpoint_criterion(&e1(), Kind::Y, 1000, opts()).unwrap();
        assert!(c.recurrent);
        assert_eq!(c.prediction, CutpointPrediction::Finite);
    }
}
