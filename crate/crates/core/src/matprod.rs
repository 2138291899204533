//! Products of the companion matrices `A_k = [[a_k, b_k], [1, 0]]`, the ratio
//! sequences `zeta_{k,n} = y_{k+1,n}/y_{k,n}` (with `y_{k,n} = e1 A_k..A_n e1'`)
//! and `theta_{k,n} = z_{k+1,n}/z_{k,n}` (with `z_{k,n} = e1 A_n..A_k e1'`),
//! their tails, and the `f`/`H` sequences of the corner computation.

use std::ops::{Add, Div, Mul};

use crate::contfrac::{self, FnCf};
use crate::env::Environment;
use crate::error::{Error, Result};

/// `mantissa * 2^exponent` with `|mantissa|` in `[1, 2)` or exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledReal {
    mantissa: f64,
    exponent: i64,
}

const EXP_MASK: u64 = 0x7ff << 52;

impl ScaledReal {
    pub const ZERO: ScaledReal = ScaledReal { mantissa: 0.0, exponent: 0 };
    pub const ONE: ScaledReal = ScaledReal { mantissa: 1.0, exponent: 0 };

    /// `x * 2^e`, normalized. Non-finite `x` is passed through unnormalized.
    pub fn from_parts(x: f64, e: i64) -> Self {
        if x == 0.0 || !x.is_finite() {
            return ScaledReal {
                mantissa: if x == 0.0 { 0.0 } else { x },
                exponent: 0,
            };
        }
        let bits = x.to_bits();
        let raw = ((bits & EXP_MASK) >> 52) as i64;
        if raw == 0 {
            return Self::from_parts(x * 2f64.powi(64), e - 64);
        }
        let m = f64::from_bits((bits & !EXP_MASK) | (1023u64 << 52));
        ScaledReal {
            mantissa: m,
            exponent: e + raw - 1023,
        }
    }

    pub fn new(x: f64) -> Self {
        Self::from_parts(x, 0)
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    /// Nearest `f64`; overflows to infinity and underflows to zero.
    pub fn to_f64(&self) -> f64 {
        let e = self.exponent;
        if self.mantissa == 0.0 || !self.mantissa.is_finite() {
            return self.mantissa;
        }
        if e > 1023 {
            return self.mantissa.signum() * f64::INFINITY;
        }
        if e < -1080 {
            return 0.0;
        }
        if e < -1000 {
            return self.mantissa * 2f64.powi((e + 100) as i32) * 2f64.powi(-100);
        }
        self.mantissa * 2f64.powi(e as i32)
    }

    /// Natural log of the absolute value.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.exponent as f64 * std::f64::consts::LN_2
    }
}

impl Mul for ScaledReal {
    type Output = ScaledReal;
    fn mul(self, o: ScaledReal) -> ScaledReal {
        ScaledReal::from_parts(self.mantissa * o.mantissa, self.exponent + o.exponent)
    }
}

impl Div for ScaledReal {
    type Output = ScaledReal;
    fn div(self, o: ScaledReal) -> ScaledReal {
        ScaledReal::from_parts(self.mantissa / o.mantissa, self.exponent - o.exponent)
    }
}

impl Add for ScaledReal {
    type Output = ScaledReal;
    fn add(self, o: ScaledReal) -> ScaledReal {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exponent >= o.exponent { (self, o) } else { (o, self) };
        let d = hi.exponent - lo.exponent;
        if d > 64 {
            return hi;
        }
        ScaledReal::from_parts(hi.mantissa + lo.mantissa * 2f64.powi(-(d as i32)), hi.exponent)
    }
}

const RESCALE_HI: f64 = 1e150;
const RESCALE_BITS: i64 = 498; // 2^498 ~ 1e150

/// Horner accumulation of `1 + g_1 (1 + g_2 (1 + ...))` read inside out: feed
/// `g` innermost first. The result equals `sum_s prod_{i >= s} g_i` over all
/// suffixes including the empty one.
#[derive(Clone, Copy, Debug)]
pub struct ScaledHorner {
    r: f64,
    e: i64,
}

impl Default for ScaledHorner {
    fn default() -> Self {
        ScaledHorner { r: 1.0, e: 0 }
    }
}

impl ScaledHorner {
    pub fn push(&mut self, g: f64) {
        // value = r 2^e;  new value = 1 + g * value
        let one = if self.e > 1100 { 0.0 } else { 2f64.powi(-(self.e as i32)) };
        self.r = self.r * g + one;
        if self.r > RESCALE_HI {
            self.r *= 2f64.powi(-(RESCALE_BITS as i32));
            self.e += RESCALE_BITS;
        }
    }

    pub fn value(&self) -> ScaledReal {
        ScaledReal::from_parts(self.r, self.e)
    }
}

/// `e_i A_k .. A_n e_j'` for `i, j` in `{1, 2}`; `n = k - 1` is the empty
/// product.
pub fn entry_product(env: &Environment, k: usize, n: usize, i: usize, j: usize) -> Result<ScaledReal> {
    if !(1..=2).contains(&i) || !(1..=2).contains(&j) {
        return Err(Error::InvalidParam(format!("matrix indices must be 1 or 2, got ({i},{j})")));
    }
    if k < 2 || n + 1 < k {
        return Err(Error::InvalidParam(format!("need 2 <= k <= n + 1, got k={k}, n={n}")));
    }
    let mut v = if i == 1 { [1.0, 0.0] } else { [0.0, 1.0] };
    let mut e = 0i64;
    for s in k..=n {
        let (a, b) = env.ab(s)?;
        v = [v[0] * a + v[1], v[0] * b];
        let m = v[0].abs().max(v[1].abs());
        if m > RESCALE_HI {
            let f = 2f64.powi(-(RESCALE_BITS as i32));
            v = [v[0] * f, v[1] * f];
            e += RESCALE_BITS;
        } else if m < 1.0 / RESCALE_HI && m > 0.0 {
            let f = 2f64.powi(RESCALE_BITS as i32);
            v = [v[0] * f, v[1] * f];
            e -= RESCALE_BITS;
        }
    }
    Ok(ScaledReal::from_parts(v[j - 1], e))
}

/// `zeta_{j,n}` for `j = k..=n` (entry `j - k`).
pub fn zeta_row(env: &Environment, k: usize, n: usize) -> Result<Vec<f64>> {
    if k < 2 || n < k {
        return Err(Error::InvalidParam(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let mut out = vec![0.0; n - k + 1];
    let mut z = 0.0;
    for j in (k..=n).rev() {
        let (a, b) = env.ab(j)?;
        z = 1.0 / (a + b * z);
        out[j - k] = z;
    }
    Ok(out)
}

pub fn zeta(env: &Environment, k: usize, n: usize) -> Result<f64> {
    Ok(zeta_row(env, k, n)?[0])
}

/// `theta_{j,n}` for `j = k..=n` (entry `j - k`).
pub fn theta_row(env: &Environment, k: usize, n: usize) -> Result<Vec<f64>> {
    if k < 2 || n < k {
        return Err(Error::InvalidParam(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let mut out = vec![0.0; n - k + 1];
    let mut t = 0.0;
    for j in (k..=n).rev() {
        let (a, _) = env.ab(j)?;
        t = if j == n {
            1.0 / a
        } else {
            let (_, b1) = env.ab(j + 1)?;
            1.0 / (a + b1 * t)
        };
        out[j - k] = t;
    }
    Ok(out)
}

pub fn theta(env: &Environment, k: usize, n: usize) -> Result<f64> {
    Ok(theta_row(env, k, n)?[0])
}

/// `zeta_k` as the value of the continued fraction with elements
/// `beta_j = 1/b_j`, `alpha_j = a_j/b_j`.
pub fn zeta_tail(env: &Environment, k: usize, tol: f64) -> Result<f64> {
    let cf = FnCf(|j: usize| {
        let (a, b) = env.ab(j)?;
        Ok((a / b, 1.0 / b))
    });
    Ok(contfrac::tail_value(&cf, k, tol, contfrac::DEFAULT_MAX_DEPTH)?.value)
}

/// `theta_k` from the continued fraction with `beta_j = 1/b_{j+1}`,
/// `alpha_j = a_j/b_{j+1}`.
pub fn theta_tail(env: &Environment, k: usize, tol: f64) -> Result<f64> {
    let cf = FnCf(|j: usize| {
        let (a, _) = env.ab(j)?;
        let (_, b1) = env.ab(j + 1)?;
        Ok((a / b1, 1.0 / b1))
    });
    Ok(contfrac::tail_value(&cf, k, tol, contfrac::DEFAULT_MAX_DEPTH)?.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `zeta` tails.
    Forward,
    /// `theta` tails.
    Reversed,
}

/// Tails `zeta_k` or `theta_k` on a contiguous site range. The top value comes
/// from the continued fraction; lower sites follow from the exact backward
/// relations `zeta_k = 1/(a_k + b_k zeta_{k+1})`,
/// `theta_k = 1/(a_k + b_{k+1} theta_{k+1})`.
#[derive(Clone, Debug)]
pub struct RatioSeq {
    pub direction: Direction,
    lo: usize,
    values: Vec<f64>,
}

const TAIL_TOL: f64 = 1e-15;

impl RatioSeq {
    pub fn new(env: &Environment, direction: Direction, lo: usize, hi: usize) -> Result<Self> {
        if lo < 2 || hi < lo {
            return Err(Error::InvalidParam(format!("need 2 <= lo <= hi, got {lo}..{hi}")));
        }
        let mut values = vec![0.0; hi - lo + 1];
        let mut t = match direction {
            Direction::Forward => zeta_tail(env, hi, TAIL_TOL)?,
            Direction::Reversed => theta_tail(env, hi, TAIL_TOL)?,
        };
        values[hi - lo] = t;
        let mut b_up = env.ab(hi)?.1;
        for j in (lo..hi).rev() {
            let (a, b) = env.ab(j)?;
            t = match direction {
                Direction::Forward => 1.0 / (a + b * t),
                Direction::Reversed => 1.0 / (a + b_up * t),
            };
            b_up = b;
            values[j - lo] = t;
        }
        Ok(RatioSeq {
            direction,
            lo,
            values,
        })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.lo + self.values.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k - self.lo]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// `f_1..f_n` and `H_1..H_n` for base site `k`:
/// `f_n = b_{k+n}/(a_{k+n} + f_{n-1})` with `f_0 = 0`, and
/// `H_n = -f_n f_{n-1} - f_n H_{n-1}` with `H_1 = 0`.
pub fn f_h_sequences(env: &Environment, k: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k < 1 || n < 1 {
        return Err(Error::InvalidParam(format!("need k >= 1 and n >= 1, got k={k}, n={n}")));
    }
    let mut f = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let (mut fp, mut hp) = (0.0, 0.0);
    for i in 1..=n {
        let (a, b) = env.ab(k + i)?;
        let fi = b / (a + fp);
        let hi = if i == 1 { 0.0 } else { -fi * fp - fi * hp };
        f.push(fi);
        h.push(hi);
        fp = fi;
        hp = hi;
    }
    Ok((f, h))
}

pub fn f_seq(env: &Environment, k: usize, n: usize) -> Result<f64> {
    Ok(*f_h_sequences(env, k, n)?.0.last().unwrap())
}

pub fn h_seq(env: &Environment, k: usize, n: usize) -> Result<f64> {
    Ok(*f_h_sequences(env, k, n)?.1.last().unwrap())
}
