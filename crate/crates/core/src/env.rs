//! Walk environments: per-site laws `(q_k, p_k1, p_k2)` for `k >= 2`, the
//! companion-matrix coefficients `a_k = (p_k1 + p_k2)/q_k`, `b_k = p_k2/q_k`,
//! and the eigenvalues `rho_k > 0 > sigma_k` of `A_k = [[a_k, b_k], [1, 0]]`.
//!
//! Sites 0 and 1 have forced moves and carry no law.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Which chain a computation refers to. `X` steps `+1` with probability `q_k`
/// and `-1`/`-2` with `p_k1`/`p_k2`; `Y` is the mirror image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    X,
    Y,
}

/// Direction of the near-critical perturbation in a corollary environment.
/// `X` gives `rho_k = 1 - 3 r_k` (X transient, Y recurrent); `Y` gives
/// `rho_k = 1 + 3 r_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Law {
    pub q: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        let Law { q, p1, p2 } = *self;
        if !(q.is_finite() && p1.is_finite() && p2.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite law {self:?}")));
        }
        if q <= 0.0 || q > 1.0 {
            return Err(Error::InvalidParam(format!("q must be in (0,1], got {q}")));
        }
        if p1 < 0.0 {
            return Err(Error::InvalidParam(format!("p1 must be >= 0, got {p1}")));
        }
        if p2 <= 0.0 {
            return Err(Error::InvalidParam(format!("p2 must be > 0, got {p2}")));
        }
        if (q + p1 + p2 - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParam(format!(
                "q + p1 + p2 = {} is not 1",
                q + p1 + p2
            )));
        }
        Ok(())
    }

    pub fn ab(&self) -> (f64, f64) {
        ((self.p1 + self.p2) / self.q, self.p2 / self.q)
    }
}

/// Everything known about one site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiteParams {
    pub q: f64,
    pub p1: f64,
    pub p2: f64,
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub sigma: f64,
}

/// Roots `(rho, sigma)` of `x^2 = a x + b`, larger first. `sigma` is taken
/// as `-b/rho` to avoid cancellation.
pub fn quadratic_roots(a: f64, b: f64) -> (f64, f64) {
    let rho = 0.5 * (a + (a * a + 4.0 * b).sqrt());
    if rho == 0.0 {
        return (0.0, 0.0);
    }
    let sigma = -b / rho;
    (rho, if sigma == 0.0 { 0.0 } else { sigma })
}

/// Limit constants of an environment satisfying `a_k -> a`, `b_k -> b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitConstants {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub sigma: f64,
    /// `a + (1 - rho)(rho - sigma)/rho`, only defined when `rho < 1`.
    pub hat_a: Option<f64>,
    /// Claimed limit of the corner probability `Q_{k+n-1}^{k+n+1}(k, k+n)`.
    pub tau: f64,
}

impl LimitConstants {
    pub fn from_ab(a: f64, b: f64) -> Self {
        let (rho, sigma) = quadratic_roots(a, b);
        let (hat_a, tau) = if rho >= 1.0 {
            (None, -sigma)
        } else {
            let ha = a + (1.0 - rho) * (rho - sigma) / rho;
            (Some(ha), 0.5 * ((ha * ha + 4.0 * b).sqrt() - ha))
        };
        LimitConstants {
            a,
            b,
            rho,
            sigma: if sigma == 0.0 { 0.0 } else { sigma },
            hat_a,
            tau: if tau == 0.0 { 0.0 } else { tau },
        }
    }
}

/// `r_n = (1/n + 1/(n (log log n)^beta))/3` for `n >= 4`, and `r_2 = r_3 = r_4`.
pub fn corollary_r(n: usize, beta: f64) -> f64 {
    let n = n.max(4) as f64;
    let ll = n.ln().ln();
    (1.0 / n + 1.0 / (n * ll.powf(beta))) / 3.0
}

/// Site law with spectral radius `rho` and `b_k = b_base`.
pub fn law_from_rho(rho: f64, b_base: f64) -> Result<Law> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParam(format!("rho must be positive, got {rho}")));
    }
    if !(b_base > 0.0 && b_base.is_finite()) {
        return Err(Error::InvalidParam(format!("b_base must be positive, got {b_base}")));
    }
    let a = rho - b_base / rho;
    if a < b_base {
        return Err(Error::InvalidParam(format!(
            "rho = {rho} gives a = {a} < b = {b_base} (p1 would be negative)"
        )));
    }
    let q = 1.0 / (1.0 + a);
    Ok(Law {
        q,
        p1: (a - b_base) * q,
        p2: b_base * q,
    })
}

/// Smallest `rho` for which [`law_from_rho`] succeeds.
pub fn min_feasible_rho(b_base: f64) -> f64 {
    0.5 * (b_base + (b_base * b_base + 4.0 * b_base).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
struct Corollary {
    beta: f64,
    sign: Sign,
    b_base: f64,
    n0: usize,
}

impl Corollary {
    fn dev(&self, k: usize) -> f64 {
        let r3 = 3.0 * corollary_r(k.max(self.n0), self.beta);
        match self.sign {
            Sign::X => -r3,
            Sign::Y => r3,
        }
    }

    fn rho(&self, k: usize) -> f64 {
        1.0 + self.dev(k)
    }

    fn ab(&self, k: usize) -> (f64, f64) {
        let rho = self.rho(k);
        (rho - self.b_base / rho, self.b_base)
    }

    fn feasible_at(beta: f64, sign: Sign, b_base: f64, n: usize) -> bool {
        let rho = match sign {
            Sign::X => 1.0 - 3.0 * corollary_r(n, beta),
            Sign::Y => 1.0 + 3.0 * corollary_r(n, beta),
        };
        rho >= min_feasible_rho(b_base)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Constant(Law),
    Corollary(Corollary),
    /// Row `i` holds site `i + 2`.
    Table(Vec<Law>),
}

/// How an environment was built, echoed into run manifests.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvMeta {
    Constant { q: f64, p1: f64, p2: f64 },
    Corollary { beta: f64, sign: Sign, b_base: f64, n0: usize },
    Table { max_site: usize },
    RhoInverted { b_base: f64, max_site: usize },
}

/// An immutable environment. Generator environments are evaluated on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    source: Source,
    meta: EnvMeta,
    limit_a: f64,
    limit_b: f64,
}

impl Environment {
    pub fn constant(q: f64, p1: f64, p2: f64) -> Result<Self> {
        let law = Law { q, p1, p2 };
        law.validate()?;
        let (a, b) = law.ab();
        Ok(Environment {
            source: Source::Constant(law),
            meta: EnvMeta::Constant { q, p1, p2 },
            limit_a: a,
            limit_b: b,
        })
    }

    /// Near-critical environment with `rho_k = 1 -+ 3 r_k` for `k >= n0` and
    /// `rho_k = rho_{n0}` below. `n0 = None` picks the smallest `n >= 4` with
    /// `3 r_n < 1/2` at which the inversion is feasible.
    pub fn corollary(beta: f64, sign: Sign, b_base: f64, n0: Option<usize>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParam(format!("beta must be >= 0, got {beta}")));
        }
        if !(b_base > 0.0 && b_base.is_finite()) {
            return Err(Error::InvalidParam(format!("b_base must be > 0, got {b_base}")));
        }
        let smallest = (4..10_000_000usize)
            .find(|&n| Corollary::feasible_at(beta, sign, b_base, n));
        let n0 = match n0 {
            Some(n0) => {
                if n0 < 4 {
                    return Err(Error::InvalidParam(format!("n0 must be >= 4, got {n0}")));
                }
                if !Corollary::feasible_at(beta, sign, b_base, n0) {
                    let rho = match sign {
                        Sign::X => 1.0 - 3.0 * corollary_r(n0, beta),
                        Sign::Y => 1.0 + 3.0 * corollary_r(n0, beta),
                    };
                    return Err(Error::Infeasible {
                        n0,
                        smallest,
                        detail: format!(
                            "target rho = {rho} is below {} required for p1 >= 0",
                            min_feasible_rho(b_base)
                        ),
                    });
                }
                n0
            }
            None => (4..10_000_000usize)
                .find(|&n| {
                    3.0 * corollary_r(n, beta) < 0.5
                        && Corollary::feasible_at(beta, sign, b_base, n)
                })
                .ok_or_else(|| Error::Infeasible {
                    n0: 4,
                    smallest,
                    detail: "no feasible n0 found".into(),
                })?,
        };
        Ok(Environment {
            source: Source::Corollary(Corollary {
                beta,
                sign,
                b_base,
                n0,
            }),
            meta: EnvMeta::Corollary {
                beta,
                sign,
                b_base,
                n0,
            },
            limit_a: 1.0 - b_base,
            limit_b: b_base,
        })
    }

    /// Table environment; `laws[i]` is the law of site `i + 2`. Limits are
    /// taken from the last row.
    pub fn table(laws: Vec<Law>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidParam("empty environment table".into()));
        }
        for (i, l) in laws.iter().enumerate() {
            l.validate()
                .map_err(|e| Error::InvalidParam(format!("site {}: {e}", i + 2)))?;
        }
        let (a, b) = laws[laws.len() - 1].ab();
        let max_site = laws.len() + 1;
        Ok(Environment {
            source: Source::Table(laws),
            meta: EnvMeta::Table { max_site },
            limit_a: a,
            limit_b: b,
        })
    }

    /// Invert a table of spectral radii (`rhos[i]` for site `i + 2`) with
    /// `b_k = b_base`.
    pub fn from_rho(rhos: &[f64], b_base: f64) -> Result<Self> {
        let laws = rhos
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                law_from_rho(r, b_base)
                    .map_err(|e| Error::InvalidParam(format!("site {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut env = Self::table(laws)?;
        env.meta = EnvMeta::RhoInverted {
            b_base,
            max_site: rhos.len() + 1,
        };
        Ok(env)
    }

    /// Reads a CSV with header `k,q,p1,p2`; rows must cover `k = 2, 3, ...`
    /// without gaps.
    pub fn from_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            k: usize,
            q: f64,
            p1: f64,
            p2: f64,
        }
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut laws = Vec::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if row.k != i + 2 {
                return Err(Error::Config(format!(
                    "{}: expected site {} on row {}, found {}",
                    path.display(),
                    i + 2,
                    i + 1,
                    row.k
                )));
            }
            laws.push(Law {
                q: row.q,
                p1: row.p1,
                p2: row.p2,
            });
        }
        Self::table(laws)
    }

    pub fn meta(&self) -> &EnvMeta {
        &self.meta
    }

    /// Largest site with a law, for table environments.
    pub fn max_site(&self) -> Option<usize> {
        match &self.source {
            Source::Table(t) => Some(t.len() + 1),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.source, Source::Constant(_))
    }

    fn check(&self, k: usize) -> Result<()> {
        if k < 2 {
            return Err(Error::InvalidParam(format!(
                "site {k} has forced moves; laws start at k = 2"
            )));
        }
        if let Some(max) = self.max_site() {
            if k > max {
                return Err(Error::SiteOutOfRange { k, max });
            }
        }
        Ok(())
    }

    pub fn law(&self, k: usize) -> Result<Law> {
        self.check(k)?;
        Ok(match &self.source {
            Source::Constant(l) => *l,
            Source::Table(t) => t[k - 2],
            Source::Corollary(c) => {
                let (a, b) = c.ab(k);
                let q = 1.0 / (1.0 + a);
                Law {
                    q,
                    p1: (a - b) * q,
                    p2: b * q,
                }
            }
        })
    }

    /// `(a_k, b_k)`.
    pub fn ab(&self, k: usize) -> Result<(f64, f64)> {
        self.check(k)?;
        Ok(match &self.source {
            Source::Constant(l) => l.ab(),
            Source::Table(t) => t[k - 2].ab(),
            Source::Corollary(c) => c.ab(k),
        })
    }

    pub fn site(&self, k: usize) -> Result<SiteParams> {
        let law = self.law(k)?;
        let (a, b) = self.ab(k)?;
        let (rho, sigma) = match &self.source {
            Source::Corollary(c) => {
                let rho = c.rho(k);
                (rho, -b / rho)
            }
            _ => quadratic_roots(a, b),
        };
        Ok(SiteParams {
            q: law.q,
            p1: law.p1,
            p2: law.p2,
            a,
            b,
            rho,
            sigma,
        })
    }

    pub fn rho(&self, k: usize) -> Result<f64> {
        Ok(self.site(k)?.rho)
    }

    /// `rho_k - 1` without cancellation.
    pub fn rho_minus_one(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        match &self.source {
            Source::Corollary(c) => Ok(c.dev(k)),
            _ => {
                let l = self.law(k)?;
                let s = self.site(k)?;
                // 1 - a - b = (1 - rho)(1 - sigma)
                Ok(((l.p1 + 2.0 * l.p2 - l.q) / l.q) / (1.0 - s.sigma))
            }
        }
    }

    pub fn limits(&self) -> LimitConstants {
        LimitConstants::from_ab(self.limit_a, self.limit_b)
    }

    /// Suprema of `a_j` and `b_j` over `j >= k`, when the environment exposes
    /// a monotone tail.
    pub fn sup_ab_from(&self, k: usize) -> Option<(f64, f64)> {
        match &self.source {
            Source::Constant(l) => Some(l.ab()),
            Source::Corollary(c) => {
                let (a, b) = c.ab(k.max(2));
                Some((a.max(self.limit_a), b))
            }
            Source::Table(_) => None,
        }
    }

    /// Infimum and supremum of `rho_j` over `j >= k`, when known.
    pub fn rho_range_from(&self, k: usize) -> Option<(f64, f64)> {
        match &self.source {
            Source::Constant(_) => {
                let r = self.limits().rho;
                Some((r, r))
            }
            Source::Corollary(c) => {
                let r = c.rho(k.max(2));
                Some((r.min(1.0), r.max(1.0)))
            }
            Source::Table(_) => None,
        }
    }

    /// Per-site ratio driving the transience series of `kind`: `rho_k` for X,
    /// `1/rho_k` for Y.
    pub fn drift_ratio(&self, kind: Kind, k: usize) -> Result<f64> {
        let r = self.rho(k)?;
        Ok(match kind {
            Kind::X => r,
            Kind::Y => 1.0 / r,
        })
    }

    /// `1 - ratio` for [`Environment::drift_ratio`], accurate near criticality.
    pub fn drift_gap(&self, kind: Kind, k: usize) -> Result<f64> {
        let d = self.rho_minus_one(k)?;
        Ok(match kind {
            Kind::X => -d,
            Kind::Y => d / (1.0 + d),
        })
    }
}

/// JSON environment description accepted by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Constant {
        q: f64,
        p1: f64,
        p2: f64,
    },
    Corollary {
        beta: f64,
        sign: Sign,
        #[serde(default = "default_b_base")]
        b_base: f64,
        #[serde(default)]
        n0: Option<usize>,
    },
    Table {
        path: String,
    },
}

fn default_b_base() -> f64 {
    0.25
}

impl EnvConfig {
    /// Builds the environment; relative table paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Environment> {
        match self {
            EnvConfig::Constant { q, p1, p2 } => Environment::constant(*q, *p1, *p2),
            EnvConfig::Corollary {
                beta,
                sign,
                b_base,
                n0,
            } => Environment::corollary(*beta, *sign, *b_base, *n0),
            EnvConfig::Table { path } => {
                let p = Path::new(path);
                let p = if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                };
                Environment::from_csv(&p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol
    }

    #[test]
    fn constant_coefficients() {
        let e0 = Environment::constant(0.5, 0.25, 0.25).unwrap();
        assert_eq!(e0.ab(7).unwrap(), (1.0, 0.5));
        let e1 = Environment::constant(0.7, 0.2, 0.1).unwrap();
        let (a, b) = e1.ab(2).unwrap();
        assert!(close(a, 3.0 / 7.0, 1e-15) && close(b, 1.0 / 7.0, 1e-15));
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(Environment::constant(0.5, 0.5, 0.0).is_err());
        assert!(Environment::constant(0.0, 0.5, 0.5).is_err());
        assert!(Environment::constant(0.5, 0.3, 0.3).is_err());
        assert!(Environment::constant(0.5, -0.1, 0.6).is_err());
    }

    #[test]
    fn site_roots() {
        let e0 = Environment::constant(0.5, 0.25, 0.25).unwrap();
        let s = e0.site(3).unwrap();
        assert!(close(s.rho, (1.0 + 3f64.sqrt()) / 2.0, 1e-12));
        assert!(close(s.sigma, (1.0 - 3f64.sqrt()) / 2.0, 1e-12));
        let e1 = Environment::constant(0.7, 0.2, 0.1).unwrap();
        let s = e1.site(100).unwrap();
        assert!(close(s.rho, (3.0 + 37f64.sqrt()) / 14.0, 1e-12));
        assert!(close(s.rho * s.sigma, -s.b, 1e-12));
        assert!(close(s.rho + s.sigma, s.a, 1e-12));
        assert!(e1.site(1).is_err());
    }

    #[test]
    fn degenerate_roots() {
        assert_eq!(quadratic_roots(0.8, 0.0), (0.8, 0.0));
        let l = LimitConstants::from_ab(1.0, 0.0);
        assert_eq!((l.rho, l.sigma, l.tau), (1.0, 0.0, 0.0));
    }

    #[test]
    fn limits_of_test_environments() {
        let l0 = Environment::constant(0.5, 0.25, 0.25).unwrap().limits();
        assert!(close(l0.rho, 1.366025, 1e-6) && close(l0.tau, 0.366025, 1e-6));
        assert!(l0.hat_a.is_none());
        let l1 = Environment::constant(0.7, 0.2, 0.1).unwrap().limits();
        assert!(close(l1.rho, 0.648769, 1e-6));
        assert!(close(l1.sigma, -0.220197, 1e-6));
        let ha = l1.hat_a.unwrap();
        let expect_ha = l1.a + (1.0 - l1.rho) * (l1.rho - l1.sigma) / l1.rho;
        assert!(close(ha, expect_ha, 1e-15));
        assert!(close(l1.tau, 0.137788, 1e-5));
    }

    #[test]
    fn corollary_example_site() {
        let e = Environment::corollary(0.0, Sign::Y, 0.25, Some(16)).unwrap();
        assert!(close(e.rho(10_000).unwrap(), 1.0002, 1e-14));
        assert!(close(e.rho_minus_one(10_000).unwrap(), 2e-4, 1e-18));
        // clamped below n0
        assert_eq!(e.rho(3).unwrap(), e.rho(16).unwrap());
    }

    #[test]
    fn corollary_infeasible_reports_smallest() {
        let err = Environment::corollary(1.0, Sign::X, 0.25, Some(4)).unwrap_err();
        match err {
            Error::Infeasible { n0, smallest, .. } => {
                assert_eq!(n0, 4);
                let s = smallest.unwrap();
                assert!(s > 4);
                assert!(Environment::corollary(1.0, Sign::X, 0.25, Some(s)).is_ok());
                assert!(Environment::corollary(1.0, Sign::X, 0.25, Some(s - 1)).is_err());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(close(3.0 * corollary_r(4, 1.0), 1.0154, 1e-3));
    }

    #[test]
    fn corollary_default_n0() {
        let e = Environment::corollary(0.0, Sign::X, 0.25, None).unwrap();
        assert_eq!(e.meta(), &EnvMeta::Corollary { beta: 0.0, sign: Sign::X, b_base: 0.25, n0: 6 });
        let e = Environment::corollary(0.5, Sign::X, 0.25, None).unwrap();
        assert!(matches!(e.meta(), EnvMeta::Corollary { n0: 7, .. }));
        let e = Environment::corollary(0.0, Sign::Y, 0.25, None).unwrap();
        assert!(matches!(e.meta(), EnvMeta::Corollary { n0: 5, .. }));
    }

    #[test]
    fn corollary_round_trip_and_monotone() {
        for &(beta, sign) in &[(0.0, Sign::X), (0.5, Sign::Y), (2.0, Sign::X), (1.0, Sign::Y)] {
            let e = Environment::corollary(beta, sign, 0.25, None).unwrap();
            let mut prev = e.rho(2).unwrap();
            for k in 3..3000 {
                let s = e.site(k).unwrap();
                let l = e.law(k).unwrap();
                assert!(close(l.q + l.p1 + l.p2, 1.0, 1e-12));
                let (r, _) = quadratic_roots((l.p1 + l.p2) / l.q, l.p2 / l.q);
                assert!(close(r, s.rho, 1e-12), "k={k} {r} {}", s.rho);
                match sign {
                    Sign::X => assert!(s.rho >= prev),
                    Sign::Y => assert!(s.rho <= prev),
                }
                prev = s.rho;
            }
        }
    }

    #[test]
    fn rho_minus_one_matches_direct() {
        let e = Environment::constant(0.7, 0.2, 0.1).unwrap();
        let d = e.rho_minus_one(5).unwrap();
        assert!(close(d, e.rho(5).unwrap() - 1.0, 1e-14));
    }

    #[test]
    fn from_rho_round_trip() {
        let rhos: Vec<f64> = (0..50).map(|i| 0.7 + 0.01 * i as f64).collect();
        let e = Environment::from_rho(&rhos, 0.25).unwrap();
        for (i, r) in rhos.iter().enumerate() {
            assert!(close(e.rho(i + 2).unwrap(), *r, 1e-12));
        }
        assert_eq!(e.max_site(), Some(51));
        assert!(matches!(e.site(52), Err(Error::SiteOutOfRange { k: 52, max: 51 })));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: EnvConfig =
            serde_json::from_str(r#"{"type":"corollary","beta":0.5,"sign":"Y","b_base":0.25,"n0":16}"#)
                .unwrap();
        assert!(ok.build(Path::new(".")).is_ok());
        let bad = serde_json::from_str::<EnvConfig>(r#"{"type":"constant","q":0.5,"p1":0.25,"p2":0.25,"x":1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn csv_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("env.csv");
        std::fs::write(&p, "k,q,p1,p2\n2,0.5,0.25,0.25\n3,0.7,0.2,0.1\n").unwrap();
        let e = EnvConfig::Table { path: "env.csv".into() }.build(dir.path()).unwrap();
        assert_eq!(e.max_site(), Some(3));
        assert!(close(e.limits().a, 3.0 / 7.0, 1e-15));
        std::fs::write(&p, "k,q,p1,p2\n3,0.5,0.25,0.25\n").unwrap();
        assert!(Environment::from_csv(&p).is_err());
    }
}
