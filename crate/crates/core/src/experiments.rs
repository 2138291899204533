//! Verification suites for the limit and ratio laws, bounded-ratio witnesses
//! and cutpoint growth curves.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{Environment, Kind, Sign};
use crate::error::{Error, Result};
use crate::matprod::{self, Direction, RatioSeq, ScaledHorner, ScaledReal};
use crate::prob::{self, SeriesOpts};
use crate::sim::{self, CensusParams};

/// Errors below this are treated as float noise when checking that an error
/// sequence decreases.
pub const NOISE_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub value: f64,
    pub target: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub quantity: String,
    /// Base index of the sequence, when it has one.
    pub base: Option<usize>,
    pub limit: f64,
    pub tolerance: f64,
    pub rows: Vec<ConvergenceRow>,
    pub final_error: f64,
    pub eventually_decreasing: bool,
    /// Largest disagreement with an independent evaluation path, if any.
    pub cross_check: Option<f64>,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    pub fn new(quantity: &str, base: Option<usize>, limit: f64, tolerance: f64, values: &[(usize, f64)]) -> Self {
        let rows: Vec<ConvergenceRow> = values
            .iter()
            .map(|&(n, value)| ConvergenceRow {
                n,
                value,
                target: limit,
                abs_error: (value - limit).abs(),
            })
            .collect();
        let final_error = rows.last().map_or(f64::NAN, |r| r.abs_error);
        let half = rows.len() / 2;
        let eventually_decreasing = rows[half..]
            .windows(2)
            .all(|w| w[1].abs_error <= w[0].abs_error.max(NOISE_FLOOR) * (1.0 + 1e-9));
        let verdict = if final_error < tolerance && eventually_decreasing {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        ConvergenceReport {
            quantity: quantity.to_string(),
            base,
            limit,
            tolerance,
            rows,
            final_error,
            eventually_decreasing,
            cross_check: None,
            verdict,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Value at grid point `n`.
    pub fn value_at(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.value)
    }
}

/// Tolerances applied at the last grid point of each family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitTolerances {
    pub eta: f64,
    pub h: f64,
    pub q_ratio: f64,
    pub corner: f64,
    pub ratio: f64,
    /// Required agreement between the two corner evaluations.
    pub cross_path: f64,
}

impl Default for LimitTolerances {
    fn default() -> Self {
        LimitTolerances {
            eta: 1e-6,
            h: 1e-4,
            q_ratio: 1e-3,
            corner: 1e-4,
            ratio: 1e-6,
            cross_path: 1e-10,
        }
    }
}

fn require_grid(grid: &[usize], min: usize) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&n| n < min) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam(format!(
            "grid must be strictly increasing with entries >= {min}"
        )));
    }
    Ok(())
}

/// Corner probability `Q_{k+n-1}^{k+n+1}(k, k+n)` as the finite continued
/// fraction `beta_{k+n-1}/(alpha_{k+n-1} + beta_{k+n-2}/(.. + beta_{k+1}/alpha_{k+1}))`
/// with `beta_j = b_j` and
/// `alpha_{k+j} = a_{k+j} + 1/sum_{s=k+1}^{k+j} e1 A_s .. A_{k+j-1} e1'`.
pub fn corner_by_fraction(env: &Environment, k: usize, n: usize) -> Result<f64> {
    if k < 1 || n < 2 {
        return Err(Error::InvalidParam(format!("need k >= 1 and n >= 2, got k={k}, n={n}")));
    }
    let mut t = 0.0;
    for j in 1..n {
        let top = k + j - 1;
        // sum over s of e1 A_s .. A_top e1', from the column recursion
        // c_s = A_s c_{s+1}
        let (mut c0, mut c1) = (1.0f64, 0.0f64);
        let mut sum = ScaledReal::ONE;
        let mut scale = 0i64;
        for s in (k + 1..=top).rev() {
            let (a, b) = env.ab(s)?;
            let n0 = a * c0 + b * c1;
            c1 = c0;
            c0 = n0;
            if c0.abs() > 1e150 {
                c0 *= 2f64.powi(-498);
                c1 *= 2f64.powi(-498);
                scale += 498;
            }
            sum = sum + ScaledReal::from_parts(c0, scale);
        }
        let (a, b) = env.ab(k + j)?;
        let alpha = a + (ScaledReal::ONE / sum).to_f64();
        t = b / (alpha + t);
    }
    Ok(t)
}

/// `eta_{n,n}(2)`, `h_n(2)`, the ratio `Q_{k+1}^n(k, k+n)/Q_{k+1}^{n+1}(k, k+n)`
/// and the corner probability `Q_{k+n-1}^{k+n+1}(k, k+n)` on `n_grid`. The
/// last two get one report per base point `k`.
pub fn verify_escape_limits(
    env: &Environment,
    n_grid: &[usize],
    k_samples: &[usize],
    tol: LimitTolerances,
) -> Result<Vec<ConvergenceReport>> {
    require_grid(n_grid, 2)?;
    let lim = env.limits();
    let mut out = Vec::new();
    let eta = prob::eta_table(env, *n_grid.last().unwrap())?;
    let vals: Vec<(usize, f64)> = n_grid.iter().map(|&n| (n, eta[n])).collect();
    out.push(ConvergenceReport::new("eta", None, -lim.sigma, tol.eta, &vals));

    let h = prob::h_table(env, *n_grid.last().unwrap())?;
    let vals: Vec<(usize, f64)> = n_grid.iter().map(|&n| (n, h[n - 1].1)).collect();
    out.push(ConvergenceReport::new("h", None, -lim.sigma / (1.0 - lim.sigma), tol.h, &vals));

    let per_k: Vec<Result<[ConvergenceReport; 2]>> = k_samples
        .par_iter()
        .map(|&k| {
            let mut ratio = Vec::with_capacity(n_grid.len());
            let mut corner = Vec::with_capacity(n_grid.len());
            let mut cross = 0.0f64;
            for &n in n_grid {
                let s = prob::escape_y_split(env, k, k + 1, k + n)?;
                ratio.push((n, s.q_low / s.q_high));
                let c = prob::escape_y_split(env, k, k + n - 1, k + n)?.q_high;
                cross = cross.max((c - corner_by_fraction(env, k, n)?).abs());
                corner.push((n, c));
            }
            let r = ConvergenceReport::new("q_ratio", Some(k), -1.0 / lim.sigma, tol.q_ratio, &ratio);
            let mut c = ConvergenceReport::new("corner", Some(k), lim.tau, tol.corner, &corner);
            c.cross_check = Some(cross);
            if cross > tol.cross_path {
                c.verdict = Verdict::Fail;
            }
            Ok([r, c])
        })
        .collect();
    let mut corners = Vec::new();
    for r in per_k {
        let [a, b] = r?;
        out.push(a);
        corners.push(b);
    }
    out.extend(corners);
    Ok(out)
}

/// `e1 A_{k+1} .. A_{k+n} e1' * zeta_{k+1} .. zeta_{k+n}` and the summed
/// version `sum_s e1 A_{k+s} .. A_{k+n} e1' / sum_s zeta_{k+s}^{-1} .. zeta_{k+n}^{-1}`
/// (`s = 1..=n+1`).
pub fn product_ratios(env: &Environment, k: usize, n: usize) -> Result<(f64, f64)> {
    if k < 1 || n < 1 {
        return Err(Error::InvalidParam(format!("need k >= 1 and n >= 1, got k={k}, n={n}")));
    }
    let zeta = RatioSeq::new(env, Direction::Forward, k + 1, k + n)?;
    let y = matprod::entry_product(env, k + 1, k + n, 1, 1)?;
    let mut zp = ScaledReal::ONE;
    let mut den = ScaledHorner::default();
    for i in k + 1..=k + n {
        let z = zeta.get(i);
        zp = zp * ScaledReal::new(z);
        den.push(1.0 / z);
    }
    // numerator: column recursion from the top index down
    let (mut c0, mut c1) = (1.0f64, 0.0f64);
    let mut num = ScaledReal::ONE;
    let mut scale = 0i64;
    for s in (k + 1..=k + n).rev() {
        let (a, b) = env.ab(s)?;
        let n0 = a * c0 + b * c1;
        c1 = c0;
        c0 = n0;
        if c0.abs() > 1e150 {
            c0 *= 2f64.powi(-498);
            c1 *= 2f64.powi(-498);
            scale += 498;
        }
        num = num + ScaledReal::from_parts(c0, scale);
    }
    Ok(((y * zp).to_f64(), (num / den.value()).to_f64()))
}

/// Product, summed and `F_X(m, m+n)/G(m, m+n)` ratios against
/// `rho/(rho - sigma)`, one report per base index and family.
pub fn verify_ratio_limits(
    env: &Environment,
    n_grid: &[usize],
    m_samples: &[usize],
    tol: LimitTolerances,
) -> Result<Vec<ConvergenceReport>> {
    require_grid(n_grid, 1)?;
    let lim = env.limits();
    let target = lim.rho / (lim.rho - lim.sigma);
    let opts = SeriesOpts::default();
    let per_m: Vec<Result<[ConvergenceReport; 3]>> = m_samples
        .par_iter()
        .map(|&m| {
            let (mut prod, mut sum, mut fg) = (Vec::new(), Vec::new(), Vec::new());
            for &n in n_grid {
                let (p, s) = product_ratios(env, m, n)?;
                prod.push((n, p));
                sum.push((n, s));
                let f = prob::series_f_x(env, m, Some(m + n), opts)?.value;
                let g = prob::series_g(env, m, Some(m + n), opts)?.value;
                fg.push((n, f / g));
            }
            Ok([
                ConvergenceReport::new("product_ratio", Some(m), target, tol.ratio, &prod),
                ConvergenceReport::new("sum_ratio", Some(m), target, tol.ratio, &sum),
                ConvergenceReport::new("fx_over_g", Some(m), target, tol.ratio, &fg),
            ])
        })
        .collect();
    let mut fams: [Vec<ConvergenceReport>; 3] = Default::default();
    for r in per_m {
        for (i, rep) in r?.into_iter().enumerate() {
            fams[i].push(rep);
        }
    }
    Ok(fams.into_iter().flatten().collect())
}

/// Largest error over base indices at each grid point, for a family of
/// reports sharing one grid.
pub fn max_error_by_n(reports: &[&ConvergenceReport]) -> Vec<(usize, f64)> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    (0..first.rows.len())
        .map(|i| {
            let e = reports.iter().map(|r| r.rows[i].abs_error).fold(0.0, f64::max);
            (first.rows[i].n, e)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioFamily {
    pub name: String,
    /// `(m, ratio)`; empty when the series diverge.
    pub values: Vec<(usize, f64)>,
    pub min: f64,
    pub max: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundedRatioReport {
    pub families: Vec<RatioFamily>,
    pub verdict: Verdict,
}

/// Largest `max/min` accepted as a boundedness witness.
pub const BOUNDED_SPREAD: f64 = 1e3;

fn family(name: &str, values: Vec<(usize, f64)>) -> RatioFamily {
    let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let pass = values.is_empty() || (min > 0.0 && max.is_finite() && max / min < BOUNDED_SPREAD);
    RatioFamily {
        name: name.to_string(),
        values,
        min,
        max,
        pass,
    }
}

/// Ranges of `e1 A_2 .. A_m e1' / (rho_2 .. rho_m)`, `F_X(m)/D_X(m)` and
/// `F_Y(m)/D_Y(m)` over `m_grid`. A series family is left empty when its
/// series diverge.
pub fn verify_bounded_ratios(env: &Environment, m_grid: &[usize]) -> Result<BoundedRatioReport> {
    require_grid(m_grid, 2)?;
    let opts = SeriesOpts::default();
    let top = *m_grid.last().unwrap();
    let mut entry = Vec::with_capacity(m_grid.len());
    let mut y = [1.0f64, 0.0f64];
    let mut log_ratio = 0.0f64;
    let mut gi = 0;
    for s in 2..=top {
        let (a, b) = env.ab(s)?;
        // row vector e1 A_2 .. A_s, normalized by rho_s each step
        let r = env.rho(s)?;
        y = [(y[0] * a + y[1]) / r, y[0] * b / r];
        let norm = y[0].abs().max(y[1].abs());
        log_ratio += norm.ln();
        y = [y[0] / norm, y[1] / norm];
        if s == m_grid[gi] {
            entry.push((s, y[0] * log_ratio.exp()));
            gi += 1;
        }
    }
    let series_family = |name: &str, kind: Kind| -> Result<RatioFamily> {
        let mut vals = Vec::new();
        for &m in m_grid {
            let f = match kind {
                Kind::X => prob::series_f_x(env, m, None, opts)?,
                Kind::Y => prob::series_f_y(env, m, None, opts)?,
            };
            let d = prob::series_d(env, kind, m, None, opts)?;
            match (f.finite(), d.finite()) {
                (Some(f), Some(d)) => vals.push((m, f / d)),
                _ => return Ok(family(name, Vec::new())),
            }
        }
        Ok(family(name, vals))
    };
    let families = vec![
        family("entry_over_rho_product", entry),
        series_family("fx_over_dx", Kind::X)?,
        series_family("fy_over_dy", Kind::Y)?,
    ];
    let verdict = if families.iter().all(|f| f.pass) { Verdict::Pass } else { Verdict::Fail };
    Ok(BoundedRatioReport { families, verdict })
}

/// `log n (log log n)^(-beta)`.
pub fn growth_norm(n: usize, beta: f64) -> f64 {
    let l = (n as f64).ln();
    l * l.ln().powf(-beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub exact: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_ci: Option<f64>,
    /// `E S_n / (log n (log log n)^(-beta))`, from the exact value when
    /// present.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthCurve {
    pub kind: Kind,
    pub beta: f64,
    pub rows: Vec<GrowthRow>,
    /// `max/min` of the normalized curve over the top half of the grid.
    pub flatness: f64,
    pub verdict: Verdict,
    /// Per trajectory and grid point, `S_n / ((log n)^(1+eps) (log log n)^(-beta))`.
    pub trajectory_diagnostic: Vec<Vec<f64>>,
}

/// Flatness above this fails a growth curve.
pub const GROWTH_FLATNESS: f64 = 3.0;
/// Exponent offset of the per-trajectory diagnostic.
pub const DIAGNOSTIC_EPS: f64 = 0.1;

impl GrowthCurve {
    /// `max/min` of the normalized curve over `lo <= n <= hi`.
    pub fn flatness_between(&self, lo: usize, hi: usize) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n >= lo && r.n <= hi)
            .map(|r| r.normalized)
            .collect();
        spread(&v)
    }
}

fn spread(v: &[f64]) -> f64 {
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min > 0.0 { max / min } else { f64::INFINITY }
}

/// Ratio of means `E S_{n2} / E S_{n1}` over one census with a `3 sigma`
/// delta-method half-width.
pub fn mean_ratio(census: &sim::CutpointCensus, n1: usize, n2: usize) -> (f64, f64) {
    let t = census.trajectories.len();
    let pairs: Vec<(f64, f64)> = (0..t)
        .map(|i| {
            let s = census.s_n(i, &[n1, n2]);
            (s[0] as f64, s[1] as f64)
        })
        .collect();
    let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / t as f64;
    let m2 = pairs.iter().map(|p| p.1).sum::<f64>() / t as f64;
    let r = m2 / m1;
    let resid: Vec<f64> = pairs.iter().map(|p| p.1 - r * p.0).collect();
    let (_, sd) = sim::mean_sd(&resid);
    (r, 3.0 * sd / (t as f64).sqrt() / m1)
}

/// Cutpoint growth for the near-critical environment with exponent `beta`
/// and the sign matching `kind`. `E S_n` comes from the exact series, and in
/// addition from `trials` simulated trajectories when `trials > 0`.
pub fn growth_curve(
    kind: Kind,
    beta: f64,
    n_grid: &[usize],
    trials: u64,
    census: &CensusParams,
) -> Result<(GrowthCurve, Option<sim::CutpointCensus>)> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParam(format!("beta must be in [0, 1), got {beta}")));
    }
    require_grid(n_grid, 16)?;
    let sign = match kind {
        Kind::X => Sign::X,
        Kind::Y => Sign::Y,
    };
    let env = Environment::corollary(beta, sign, 0.25, None)?;
    let exact = sim::expected_s_n(&env, kind, n_grid, census.series)?;
    let mc = if trials > 0 {
        let mut p = *census;
        p.trials = trials;
        p.k_max = *n_grid.last().unwrap();
        Some(sim::cutpoint_census(&env, kind, &p)?)
    } else {
        None
    };
    let mc_rows = mc.as_ref().map(|c| sim::sn_rows(c, n_grid));
    let rows: Vec<GrowthRow> = n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let e = exact[i];
            let mr = mc_rows.as_ref().map(|r| r[i]);
            GrowthRow {
                n,
                exact: Some(e),
                mc_mean: mr.map(|r| r.mean_sn),
                mc_ci: mr.map(|r| r.ci),
                normalized: e / growth_norm(n, beta),
            }
        })
        .collect();
    let top: Vec<f64> = rows[rows.len() / 2..].iter().map(|r| r.normalized).collect();
    let flatness = spread(&top);
    let trajectory_diagnostic = mc
        .as_ref()
        .map(|c| {
            (0..c.trajectories.len())
                .map(|t| {
                    c.s_n(t, n_grid)
                        .iter()
                        .zip(n_grid)
                        .map(|(&s, &n)| {
                            let l = (n as f64).ln();
                            s as f64 / (l.powf(1.0 + DIAGNOSTIC_EPS) * l.ln().powf(-beta))
                        })
                        .collect()
                })
                .collect()
        })
        .unwrap_or_default();
    Ok((
        GrowthCurve {
            kind,
            beta,
            rows,
            flatness,
            verdict: if flatness < GROWTH_FLATNESS { Verdict::Pass } else { Verdict::Fail },
            trajectory_diagnostic,
        },
        mc,
    ))
}

/// `n = lo, lo * f, ..` rounded and deduplicated, up to `hi` inclusive.
pub fn geometric_grid(lo: usize, hi: usize, per_decade: u32) -> Vec<usize> {
    let mut out = Vec::new();
    let f = 10f64.powf(1.0 / per_decade as f64);
    let mut x = lo as f64;
    while x.round() as usize <= hi {
        let n = x.round() as usize;
        if out.last() != Some(&n) {
            out.push(n);
        }
        x *= f;
    }
    if out.last() != Some(&hi) {
        out.push(hi);
    }
    out
}
