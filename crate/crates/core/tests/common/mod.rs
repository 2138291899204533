#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walkcut::env::Law;
use walkcut::Environment;

/// Law with `q` in `[0.2, 0.8]` and `p2 > 0`, from two uniforms.
pub fn law_from_uniforms(uq: f64, us: f64) -> Law {
    let q = 0.2 + 0.6 * uq;
    let rest = 1.0 - q;
    let p2 = rest * (0.05 + 0.95 * us);
    Law { q, p1: rest - p2, p2 }
}

pub fn table_from_uniforms(u: &[(f64, f64)]) -> Environment {
    Environment::table(u.iter().map(|&(a, b)| law_from_uniforms(a, b)).collect()).unwrap()
}

/// Random table environment covering sites `2..=max_site`.
pub fn random_table(rng: &mut ChaCha8Rng, max_site: usize) -> Environment {
    let u: Vec<(f64, f64)> = (2..=max_site).map(|_| (rng.random(), rng.random())).collect();
    table_from_uniforms(&u)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn e0() -> Environment {
    Environment::constant(0.5, 0.25, 0.25).unwrap()
}

pub fn e1() -> Environment {
    Environment::constant(0.7, 0.2, 0.1).unwrap()
}
