//! Property tests for the invariants linking the exact formulas, the oracle
//! and the simulator.

use proptest::prelude::*;
use crate::contfrac::{self, ConstantCf, FnCf};
use crate::matprod;
use crate::oracle::{self, AbsorptionProblem};
use crate::prob::{self, SeriesOpts};
use crate::sim::{self, CensusParams};
use crate::{Environment, Kind, Sign};

use crate::env::Law;

fn table_from_uniforms(u: &[(f64, f64)]) -> Environment {
    let laws = u
        .iter()
        .map(|&(uq, us)| {
            let q = 0.2 + 0.6 * uq;
            let p2 = (1.0 - q) * (0.05 + 0.95 * us);
            Law { q, p1: 1.0 - q - p2, p2 }
        })
        .collect();
    Environment::table(laws).unwrap()
}

fn uniforms(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), len)
}

/// `(m, k, n)` with `1 <= m < k < n <= m + span`.
fn interval(span: usize) -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..40, 2usize..=span).prop_flat_map(|(m, w)| (Just(m), m + 1..m + w, Just(m + w)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_inequalities_hold(
        terms in prop::collection::vec((1.0..20.0f64, 0.05..20.0f64), 60),
        k in 1usize..5,
        depth in 1usize..50,
    ) {
        let cf = FnCf(|j: usize| Ok(terms[(j - 1) % terms.len()]));
        let checks = contfrac::check_tail_inequalities(&cf, k, k + depth - 1, true, 1e-15).unwrap();
        for c in &checks {
            prop_assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn limit_formula_is_constant_tail(alpha in 0.05..20.0f64, beta in 0.05..20.0f64) {
        let exact = contfrac::limit_formula(alpha, beta).unwrap();
        let t = contfrac::tail_value(&ConstantCf { alpha, beta }, 1, 1e-13, contfrac::DEFAULT_MAX_DEPTH).unwrap();
        prop_assert!((t.value - exact).abs() <= 1e-12 * exact.max(1.0));
    }

    #[test]
    fn zeta_products_telescope(u in uniforms(320), k in 2usize..20, len in 1usize..300) {
        let env = table_from_uniforms(&u);
        let n = k + len;
        let z = matprod::zeta_row(&env, k, n).unwrap();
        let y = matprod::entry_product(&env, k, n, 1, 1).unwrap();
        let mut p = matprod::ScaledReal::ONE;
        for v in z {
            p = p * matprod::ScaledReal::new(v);
        }
        prop_assert!(((y * p).to_f64() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn f_identity(u in uniforms(120), k in 1usize..20, n in 1usize..100) {
        let env = table_from_uniforms(&u);
        let (f, _) = matprod::f_h_sequences(&env, k, n).unwrap();
        for i in 1..=n {
            let (a, b) = env.ab(k + i).unwrap();
            let prev = if i == 1 { 0.0 } else { f[i - 2] };
            prop_assert!((f[i - 1] * prev + a * f[i - 1] - b).abs() < 1e-14 * b.max(1.0));
        }
    }

    #[test]
    fn escape_formulas_match_oracle(u in uniforms(360), (m, k, n) in interval(300)) {
        let env = table_from_uniforms(&u);
        let y = oracle::absorption_solve(&env, AbsorptionProblem { kind: Kind::Y, m, n }).unwrap();
        let s = prob::escape_y_split(&env, m, k, n).unwrap();
        let c = y.at(k).unwrap();
        prop_assert!((c[1] - s.q_low).abs() <= 1e-10);
        prop_assert!((c[2] - s.q_high).abs() <= 1e-10);
        let x = oracle::absorption_solve(&env, AbsorptionProblem { kind: Kind::X, m, n }).unwrap();
        let down = prob::escape_x_down(&env, m, k, n).unwrap();
        let cx = x.at(k).unwrap();
        prop_assert!((cx[0] + cx[1] - down).abs() <= 1e-10);
        // complementarity with the oracle's up-escape class
        prop_assert!((down + cx[2] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn escapes_are_monotone_in_start(u in uniforms(120), m in 1usize..20, w in 3usize..80) {
        let env = table_from_uniforms(&u);
        let n = m + w;
        let y = oracle::absorption_solve(&env, AbsorptionProblem { kind: Kind::Y, m, n }).unwrap();
        let x = oracle::absorption_solve(&env, AbsorptionProblem { kind: Kind::X, m, n }).unwrap();
        for k in m + 1..n - 1 {
            let (q0, q1) = (prob::escape_y_split(&env, m, k, n).unwrap().q_plus, prob::escape_y_split(&env, m, k + 1, n).unwrap().q_plus);
            prop_assert!(q0 <= q1 + 1e-14);
            prop_assert!(y.escape(k).unwrap() <= y.escape(k + 1).unwrap() + 1e-12);
            let (p0, p1) = (prob::escape_x_down(&env, m, k, n).unwrap(), prob::escape_x_down(&env, m, k + 1, n).unwrap());
            prop_assert!(p1 <= p0 + 1e-14);
            prop_assert!(x.escape(k + 1).unwrap() <= x.escape(k).unwrap() + 1e-12);
        }
    }

    // F_Y uses the infinite tails zeta_i, computed in blocks of 4096 sites,
    // so the table must reach well past n.
    #[test]
    fn one_step_escape_sandwich(u in uniforms(4400), m in 1usize..20, w in 2usize..90) {
        let env = table_from_uniforms(&u);
        let n = m + w;
        let q = prob::escape_y_split(&env, m, m + 1, n).unwrap().q_plus;
        let opts = SeriesOpts::default();
        let lo = 1.0 / prob::series_f_y(&env, m, Some(n + 1), opts).unwrap().value;
        let hi = 1.0 / prob::series_f_y(&env, m, Some(n), opts).unwrap().value;
        prop_assert!(lo <= q * (1.0 + 1e-12) && q <= hi * (1.0 + 1e-12), "{lo} {q} {hi}");
    }

    #[test]
    fn zeta_path_matches_forward_recursion(u in uniforms(200), (m, k, n) in interval(90)) {
        let env = table_from_uniforms(&u);
        let a = prob::escape_y_plus_zeta(&env, m, k, n).unwrap();
        let b = prob::escape_y_split(&env, m, k, n).unwrap().q_plus;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn census_soundness(seed in any::<u64>(), workers in 1usize..4) {
        let env = Environment::constant(0.7, 0.2, 0.1).unwrap();
        let mut p = CensusParams::new(40, 20, seed);
        p.workers = Some(workers);
        let c = sim::cutpoint_census(&env, Kind::X, &p).unwrap();
        prop_assert!(c.eps_cens < c.eps_conf);
        for t in 0..c.trajectories.len() {
            for k in c.cutpoints(t) {
                prop_assert_eq!(c.trajectories[t].visits[k], 1);
            }
            let s = c.s_n(t, &[2, 5, 10, 20, 40]);
            prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
        }
        p.workers = Some(1);
        prop_assert_eq!(sim::cutpoint_census(&env, Kind::X, &p).unwrap(), c);
    }

    #[test]
    fn y_layers_hold_one_cutpoint(seed in any::<u64>()) {
        let env = Environment::constant(0.5, 0.25, 0.25).unwrap();
        let c = sim::cutpoint_census(&env, Kind::Y, &CensusParams::new(60, 10, seed)).unwrap();
        for t in 0..c.trajectories.len() {
            let v = &c.trajectories[t].visits;
            for k in 1..30 {
                prop_assert!(v[2 * k] > 0 || v[2 * k + 1] > 0);
            }
        }
    }
}

#[test]
fn never_return_matches_guarded_oracle() {
    let opts = SeriesOpts::default();
    for (env, kind) in [(Environment::constant(0.7, 0.2, 0.1).unwrap(), Kind::X), (Environment::constant(0.5, 0.25, 0.25).unwrap(), Kind::Y)] {
        for m in [2usize, 7, 30] {
            let f = match kind {
                Kind::X => prob::escape_x_never_return(&env, m, opts).unwrap(),
                Kind::Y => prob::escape_y_to_inf(&env, m, opts).unwrap(),
            };
            let g = oracle::never_return_limit(&env, kind, m, 1e-12).unwrap();
            assert!(g.converged);
            assert!((g.value - f).abs() < 1e-10, "{kind:?} m={m}: {} vs {f}", g.value);
        }
    }
}

#[test]
fn guard_refinement_is_monotone() {
    let env = Environment::corollary(0.0, Sign::X, 0.25, None).unwrap();
    let mut prev = f64::INFINITY;
    for g in [50usize, 100, 200, 400, 800] {
        let abs = oracle::absorption_solve(&env, AbsorptionProblem { kind: Kind::X, m: 10, n: 10 + g }).unwrap();
        let never = 1.0 - abs.escape(11).unwrap();
        assert!(never <= prev + 1e-15);
        prev = never;
    }
}

#[test]
fn bounded_ratios_on_monotone_environment() {
    let env = Environment::corollary(0.5, Sign::Y, 0.25, None).unwrap();
    let grid = crate::experiments::geometric_grid(10, 10_000, 2);
    let r = crate::experiments::verify_bounded_ratios(&env, &grid).unwrap();
    let fy = r.families.iter().find(|f| f.name == "fy_over_dy").unwrap();
    assert!(!fy.values.is_empty());
    assert!(fy.pass, "{fy:?}");
}
