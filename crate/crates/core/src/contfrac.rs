//! Continued fractions `beta_k / (alpha_k + beta_{k+1} / (alpha_{k+1} + ...))`
//! with positive elements: approximants `xi_{k,n}`, tails `xi_k`, and the
//! ordering inequalities between them.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_DEPTH: usize = 1_000_000;

/// Element generator. `terms(j)` returns `(alpha_j, beta_j)` for `j >= 1`.
pub trait ContFrac {
    fn terms(&self, j: usize) -> Result<(f64, f64)>;
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantCf {
    pub alpha: f64,
    pub beta: f64,
}

impl ContFrac for ConstantCf {
    fn terms(&self, _j: usize) -> Result<(f64, f64)> {
        Ok((self.alpha, self.beta))
    }
}

/// Wraps a closure `j -> (alpha_j, beta_j)`.
pub struct FnCf<F>(pub F);

impl<F: Fn(usize) -> Result<(f64, f64)>> ContFrac for FnCf<F> {
    fn terms(&self, j: usize) -> Result<(f64, f64)> {
        (self.0)(j)
    }
}

/// `xi_{k,n}` by the backward recurrence `x <- beta_j / (alpha_j + x)`.
pub fn approximant<C: ContFrac + ?Sized>(cf: &C, k: usize, n: usize) -> Result<f64> {
    if k < 1 || n < k {
        return Err(Error::InvalidParam(format!("approximant needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let mut x = 0.0;
    for j in (k..=n).rev() {
        let (al, be) = cf.terms(j)?;
        x = be / (al + x);
    }
    if !x.is_finite() {
        return Err(Error::Numeric(format!("non-finite approximant xi_{{{k},{n}}}")));
    }
    Ok(x)
}

/// A converged tail together with the bracket that certified it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tail {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub depth: usize,
}

/// `xi_k = lim_n xi_{k,n}`. Approximants of consecutive depths bracket the
/// tail; the depth doubles until the bracket is narrower than `tol`.
pub fn tail_value<C: ContFrac + ?Sized>(
    cf: &C,
    k: usize,
    tol: f64,
    max_depth: usize,
) -> Result<Tail> {
    let mut d = 1usize;
    loop {
        let x0 = approximant(cf, k, k + d - 1)?;
        let x1 = approximant(cf, k, k + d)?;
        let (lower, upper) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        if upper - lower < tol {
            return Ok(Tail {
                value: 0.5 * (lower + upper),
                lower,
                upper,
                depth: d + 1,
            });
        }
        if d >= max_depth {
            return Err(Error::DepthCap {
                depth: d + 1,
                lower,
                upper,
            });
        }
        d = (2 * d).min(max_depth);
    }
}

/// `(alpha/2)(sqrt(1 + 4 beta/alpha^2) - 1)`, the common limit of the tails
/// when `alpha_k -> alpha`, `beta_k -> beta`.
pub fn limit_formula(alpha: f64, beta: f64) -> Result<f64> {
    if alpha == 0.0 || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidParam(format!("limit_formula needs alpha != 0, got {alpha}")));
    }
    if alpha * alpha + 4.0 * beta < 0.0 {
        return Err(Error::InvalidParam("alpha^2 + 4 beta < 0".into()));
    }
    let s = (1.0 + 4.0 * beta / (alpha * alpha)).sqrt();
    Ok(2.0 * beta / (alpha * (1.0 + s)))
}

/// One evaluated inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub k: usize,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub const INEQ_SLACK: f64 = 1e-12;

fn le(name: &str, k: usize, n: usize, lhs: f64, rhs: f64) -> InequalityCheck {
    let scale = 1f64.max(lhs.abs()).max(rhs.abs());
    InequalityCheck {
        name: name.to_string(),
        k,
        n,
        lhs,
        rhs,
        pass: lhs <= rhs + INEQ_SLACK * scale,
    }
}

/// Evaluates every tail/approximant inequality at `(j, n)` for `k <= j <= n`.
/// The families needing `alpha_j >= 1` are included only when
/// `with_alpha_ge_1` is set.
pub fn check_tail_inequalities<C: ContFrac + ?Sized>(
    cf: &C,
    k: usize,
    n: usize,
    with_alpha_ge_1: bool,
    tail_tol: f64,
) -> Result<Vec<InequalityCheck>> {
    if k < 1 || n < k {
        return Err(Error::InvalidParam(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    // xi[j - k] = xi_j for j in k..=n+1; apx[j - k] = xi_{j,n} for j in k..=n.
    let xi: Vec<f64> = (k..=n + 1)
        .map(|j| tail_value(cf, j, tail_tol, DEFAULT_MAX_DEPTH).map(|t| t.value))
        .collect::<Result<_>>()?;
    let mut apx = vec![0.0; n - k + 1];
    let mut x = 0.0;
    for j in (k..=n).rev() {
        let (al, be) = cf.terms(j)?;
        x = be / (al + x);
        apx[j - k] = x;
    }
    let t = |j: usize| xi[j - k];
    let a = |j: usize| apx[j - k];
    let even = |j: usize| (n - j + 1) % 2 == 0;

    let mut out = Vec::new();
    for j in k..=n {
        let tv = t(j);
        out.push(InequalityCheck {
            name: "tail_positive".into(),
            k: j,
            n,
            lhs: 0.0,
            rhs: tv,
            pass: tv > 0.0 && tv.is_finite(),
        });
        if even(j) {
            out.push(le("alternation", j, n, a(j), t(j)));
        } else {
            out.push(le("alternation", j, n, t(j), a(j)));
        }
    }
    for j in k..n {
        let ap = a(j) * a(j + 1);
        let tp = t(j) * t(j + 1);
        if even(j) {
            out.push(le("pair_product", j, n, tp, ap));
        } else {
            out.push(le("pair_product", j, n, ap, tp));
        }
    }
    for j in k..=n {
        let tails: f64 = (j..=n).map(t).product();
        let apxs: f64 = (j..=n).map(a).product();
        let mixed: f64 = (j..n).map(t).product::<f64>() * a(n);
        out.push(le("product_sandwich_lower", j, n, tails, apxs));
        out.push(le("product_sandwich_upper", j, n, apxs, mixed));
    }
    if with_alpha_ge_1 {
        out.push(le("last_level", n, n, a(n), t(n) + t(n) * t(n + 1)));
        for j in k..n {
            let ap = a(j) + a(j) * a(j + 1);
            let tp = t(j) + t(j) * t(j + 1);
            if even(j) {
                out.push(le("sum_pair", j, n, tp, ap));
            } else {
                out.push(le("sum_pair", j, n, ap, tp));
            }
        }
        for j in k..=n {
            let tails: f64 = (j..=n).map(t).product();
            let apxs: f64 = (j..=n).map(a).product();
            out.push(le("product_bound_upper", j, n, apxs, tails * (1.0 + t(n + 1))));

            let (mut st, mut sa, mut pt, mut pa) = (0.0, 0.0, 1.0, 1.0);
            for i in j..=n {
                pt *= t(i);
                pa *= a(i);
                st += pt;
                sa += pa;
            }
            let st_up = st + pt * t(n + 1);
            out.push(le("sum_sandwich_lower", j, n, st, sa));
            out.push(le("sum_sandwich_upper", j, n, sa, st_up));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approximant_examples() {
        let cf = ConstantCf { alpha: 2.0, beta: 3.0 };
        assert_eq!(approximant(&cf, 5, 5).unwrap(), 1.5);
        assert!((approximant(&cf, 1, 200).unwrap() - 1.0).abs() < 1e-12);
        let one = ConstantCf { alpha: 1.0, beta: 1.0 };
        assert_eq!(approximant(&one, 1, 2).unwrap(), 0.5);
        assert!(approximant(&one, 3, 2).is_err());
    }

    #[test]
    fn tail_examples() {
        let cf = ConstantCf { alpha: 2.0, beta: 3.0 };
        let t = tail_value(&cf, 4, 1e-12, DEFAULT_MAX_DEPTH).unwrap();
        assert!((t.value - 1.0).abs() < 1e-12);
        assert!(t.lower <= t.value && t.value <= t.upper);

        // the E0 coefficients a = 1, b = 1/2 give -sigma
        let cf = ConstantCf { alpha: 1.0, beta: 0.5 };
        let t = tail_value(&cf, 1, 1e-12, DEFAULT_MAX_DEPTH).unwrap();
        assert!((t.value - (3f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);

        let dec = FnCf(|j: usize| Ok((1.0, 0.5f64.powi(j as i32))));
        let t = tail_value(&dec, 1, 1e-12, DEFAULT_MAX_DEPTH).unwrap();
        assert!(t.value < 0.5 && t.value > 0.5 / 1.5);
    }

    #[test]
    fn depth_cap_carries_bracket() {
        let cf = ConstantCf { alpha: 1e-6, beta: 1.0 };
        match tail_value(&cf, 1, 1e-15, 8) {
            Err(Error::DepthCap { lower, upper, .. }) => assert!(lower < upper),
            other => panic!("expected depth cap, got {other:?}"),
        }
    }

    #[test]
    fn limit_formula_examples() {
        assert!((limit_formula(2.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(limit_formula(1.0, 0.0).unwrap(), 0.0);
        assert!((limit_formula(1.0, 0.5).unwrap() - 0.3660254037844386).abs() < 1e-15);
        assert!(limit_formula(0.0, 1.0).is_err());
        assert!(limit_formula(1.0, -1.0).is_err());
    }

    #[test]
    fn alternation_examples() {
        let cf = ConstantCf { alpha: 2.0, beta: 3.0 };
        // four levels: below the tail; three levels: above
        assert!(approximant(&cf, 1, 4).unwrap() < 1.0);
        assert!(approximant(&cf, 1, 3).unwrap() > 1.0);
        let rep = check_tail_inequalities(&cf, 1, 4, true, 1e-14).unwrap();
        assert!(rep.iter().all(|r| r.pass), "{rep:?}");
        let names: std::collections::BTreeSet<_> = rep.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names.len(), 10);
    }
}
