use super::*;
use crate::dicke::{splus_sminus_expectation, SmallSystemState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N564: (usize, f64, f64) = (564, 3.5e-3, 2.6e-8);

fn budget(n: usize, p1: f64, p2: f64) -> ExcitationBudget<f64> {
    ExcitationBudget::new(n, p1, p2).unwrap()
}

fn paper_budget() -> ExcitationBudget<f64> {
    budget(N564.0, N564.1, N564.2)
}

/// Explicit state vector of one family term.
fn tensor_term(comp: Component, n: usize, m: usize, b: f64) -> SmallSystemState<f64> {
    let block = SmallSystemState::vacuum_plus_w(m, b).unwrap();
    let (blocks, tail) = match comp {
        Component::Plain(j) => (j, None),
        Component::Augmented(j) => {
            // remainder excitation chosen so every tooth carries the same
            // single-excitation amplitude: b'/(k'(1-b')) = b/(M(1-b))
            let rem = n - j * m;
            let bp = if b >= 1.0 {
                1.0
            } else {
                let x = rem as f64 * b / (m as f64 * (1.0 - b));
                x / (1.0 + x)
            };
            (j, Some(SmallSystemState::vacuum_plus_w(rem, bp).unwrap()))
        }
    };
    let mut state = block.clone();
    for _ in 1..blocks {
        state = state.tensor(&block);
    }
    if let Some(t) = tail {
        state = state.tensor(&t);
    }
    let used = state.teeth();
    if used < n {
        state = state.tensor(&SmallSystemState::vacuum(n - used));
    }
    state
}

/// `(P₁, P₂, ⟨Π₁ψ|S₊S₋|Π₁ψ⟩)` of a pure state.
fn tensor_values(state: &SmallSystemState<f64>) -> (f64, f64, f64) {
    let n = state.teeth();
    (state.sector_weight(1), state.sector_weight(2), splus_sminus_expectation(n, &state.project_sector(1)))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn budget_validation() {
    assert!(ExcitationBudget::new(0, 0.1, 0.0).is_err());
    assert!(ExcitationBudget::new(5, 0.0, 0.0).is_err());
    assert!(ExcitationBudget::new(5, 0.1, 0.2).is_err());
    assert!(ExcitationBudget::new(5, 0.8, 0.3).is_err());
    assert!(paper_budget().at_depth(0).is_err());
    assert!(paper_budget().at_depth(565).is_err());
}

#[test]
fn component_layout() {
    let b = paper_budget();
    let comps = b.at_depth(229).unwrap().components();
    assert_eq!(comps, vec![Component::Plain(1), Component::Augmented(2)]);
    assert_eq!(b.at_depth(229).unwrap().blocks(), (2, 106));
    let comps = b.at_depth(282).unwrap().components();
    assert_eq!(comps, vec![Component::Plain(1), Component::Plain(2)]);
    // k = 1 with a remainder keeps the plain single block
    let comps = b.at_depth(400).unwrap().components();
    assert_eq!(comps, vec![Component::Plain(1), Component::Augmented(1)]);
    assert_eq!(b.at_depth(564).unwrap().components(), vec![Component::Plain(1)]);
}

#[test]
fn components_match_tensor_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=10 {
        for m in 1..=n {
            let prob = budget(n, 1e-2, 1e-6).at_depth(m).unwrap();
            for comp in prob.components() {
                for _ in 0..3 {
                    let b: f64 = rng.random_range(0.0..1.0);
                    let v = comp.evaluate::<f64>(m, n, b, 1.0 - b);
                    let (f, g, h) = tensor_values(&tensor_term(comp, n, m, b));
                    assert!(close(v.f, f, 1e-12), "{comp:?} N={n} M={m}: f {} vs {f}", v.f);
                    assert!(close(v.g, g, 1e-12) || (v.g - g).abs() < 1e-15, "{comp:?} N={n} M={m}: g {} vs {g}", v.g);
                    assert!(close(v.h, h, 1e-12), "{comp:?} N={n} M={m}: h {} vs {h}", v.h);
                }
            }
        }
    }
}

#[test]
fn augmented_term_is_w_state_in_single_sector() {
    let (n, m) = (11, 4);
    let state = tensor_term(Component::Augmented(2), n, m, 0.3);
    let c = state.single_excitation_amplitudes();
    for cj in &c {
        assert!((cj.re - c[0].re).abs() < 1e-14);
    }
    let prob = budget(n, 1e-2, 1e-6).at_depth(m).unwrap();
    let state = MixedBlockState { q: vec![0.0, 1.0], beta_sq: vec![0.0, 0.3] };
    let bp = state.beta_kprime_sq(&prob).unwrap();
    let x = 3.0 * 0.3 / (4.0 * 0.7);
    assert!((bp - x / (1.0 + x)).abs() < 1e-15);
}

#[test]
fn component_derivatives() {
    let h = 1e-6;
    for (n, m) in [(9, 2), (11, 4), (564, 229), (564, 50), (7, 7)] {
        let prob = budget(n, 1e-2, 1e-6).at_depth(m).unwrap();
        for comp in prob.components() {
            for b in [0.05f64, 0.3, 0.7] {
                let v = comp.evaluate::<f64>(m, n, b, 1.0 - b);
                let up = comp.evaluate(m, n, b + h, 1.0 - b - h);
                let dn = comp.evaluate(m, n, b - h, 1.0 - b + h);
                for (d, fd) in [
                    (v.df, (up.f - dn.f) / (2.0 * h)),
                    (v.dg, (up.g - dn.g) / (2.0 * h)),
                    (v.dh, (up.h - dn.h) / (2.0 * h)),
                ] {
                    assert!((d - fd).abs() <= 1e-5 * d.abs().max(1.0), "{comp:?} b={b}: {d} vs {fd}");
                }
            }
        }
    }
}

#[test]
fn mixture_sums_match_tensor_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, m) in [(6, 2), (7, 3), (9, 4), (10, 3), (12, 5)] {
        let (p1, p2) = (1e-2, 1e-6);
        let prob = budget(n, p1, p2).at_depth(m).unwrap();
        let comps = prob.components();
        let raw: Vec<f64> = comps.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let b: Vec<f64> = comps.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let state = MixedBlockState::new(&prob, q.clone(), b.clone()).unwrap();
        let (mut f, mut g, mut h) = (0.0, 0.0, 0.0);
        for ((&c, &qi), &bi) in comps.iter().zip(&q).zip(&b) {
            let (tf, tg, th) = tensor_values(&tensor_term(c, n, m, bi));
            f += qi * tf;
            g += qi * tg;
            h += qi * th;
        }
        assert!(close(family_p1(&state, &prob), f, 1e-12));
        assert!(close(family_p2(&state, &prob), g, 1e-12));
        assert!(close(family_r(&state, &prob), h / (p1 + 2.0 * p2), 1e-12));
    }
}

#[test]
fn mixed_state_validation() {
    let prob = paper_budget().at_depth(229).unwrap();
    assert!(MixedBlockState::new(&prob, vec![1.0], vec![0.5]).is_err());
    assert!(MixedBlockState::new(&prob, vec![0.5, 0.6], vec![0.5, 0.5]).is_err());
    assert!(MixedBlockState::new(&prob, vec![0.5, 0.5], vec![0.5, 1.5]).is_err());
    assert!(MixedBlockState::new(&prob, vec![0.5, 0.5], vec![0.5, 0.5]).is_ok());
}

#[test]
fn single_block_contrast_is_depth() {
    // one excitable block alone has R (P₁ + 2P₂) = M P₁
    let prob = paper_budget().at_depth(40).unwrap();
    let k = prob.components().len();
    let mut q = vec![0.0; k];
    q[0] = 1.0;
    let state = MixedBlockState::new(&prob, q, vec![0.2; k]).unwrap();
    assert!((family_p1(&state, &prob) - 0.2).abs() < 1e-15);
    assert_eq!(family_p2(&state, &prob), 0.0);
    let r = family_r(&state, &prob) * (prob.budget.p1 + 2.0 * prob.budget.p2);
    assert!((r - 40.0 * 0.2).abs() < 1e-12);
}

#[test]
fn linear_bound_examples() {
    let b = paper_budget();
    assert!((linear_bound(256.7, &b) - 219.96).abs() < 1e-2);
    assert!((linear_intercept(&b) - 36.7).abs() < 0.05);
    assert_eq!(linear_bound(256.7, &budget(564, 3.5e-3, 0.0)), 256.7);
    // intercept 1 with R = N: the separable point gives M > 0
    let p1 = 0.1;
    let sep = budget(10, p1, p1 * p1 / 2.0);
    assert!(linear_intercept(&sep) - 10.0 < 1e-12);
    assert!(linear_bound(10.0, &sep).abs() < 1e-12);
}

#[test]
fn closed_forms() {
    for m in [1, 7, 100, 563] {
        let r = max_r(&budget(564, 3.5e-3, 0.0).at_depth(m).unwrap()).unwrap();
        assert_eq!(r.max_r, m as f64);
    }
    let b = paper_budget();
    let r = max_r(&b.at_depth(564).unwrap()).unwrap();
    assert!((r.max_r - 564.0 * 3.5e-3 / (3.5e-3 + 5.2e-8)).abs() < 1e-9);
    assert_eq!(r.diagnostics.method, "unrestricted depth");
}

#[test]
fn paper_operating_point() {
    let b = paper_budget();
    let r = max_r(&b.at_depth(229).unwrap()).unwrap();
    assert!((r.max_r - 256.7).abs() < 1.0, "max_R(229) = {}", r.max_r);
    assert_eq!(r.diagnostics.support, vec![0, 1]);
    assert!(r.state.q[1] > 0.99);
    assert!(r.diagnostics.constraint_residuals.iter().all(|c| c.abs() < 1e-10));
    let p = b.at_depth(229).unwrap();
    assert!(close(family_p1(&r.state, &p), 3.5e-3, 1e-10));
    assert!(close(family_p2(&r.state, &p), 2.6e-8, 1e-10));
    assert!(close(family_r(&r.state, &p), r.max_r, 1e-12));
}

#[test]
fn deterministic_for_a_seed() {
    let p = budget(100, 1e-2, 2e-6).at_depth(9).unwrap();
    let a = max_r(&p).unwrap();
    let b = max_r(&p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn certify_paper_value() {
    let res = certify_depth(256.7, 8.7, &paper_budget()).unwrap();
    assert!(res.m_lower.abs_diff(229) <= 11, "M_lower = {}", res.m_lower);
    assert!(res.r_max_at_m >= 256.7);
    assert!(res.r_max_below.unwrap() < 256.7);
    let (lo, hi) = res.m_lower_interval;
    assert!(lo < res.m_lower && res.m_lower < hi);
    assert!((hi - lo) / 2 <= 11 + 2, "interval {lo}..{hi}");
    assert!((res.linear_bound - 219.96).abs() < 1e-2);
}

#[test]
fn certify_trivial_and_inconsistent() {
    let zero = budget(30, 1e-2, 0.0);
    assert_eq!(certify_depth(1.0, 0.0, &zero).unwrap().m_lower, 1);
    assert_eq!(certify_depth(12.5, 0.0, &zero).unwrap().m_lower, 13);
    assert!(matches!(certify_depth(31.0, 0.0, &zero), Err(Error::Inconsistent { .. })));
    assert!(certify_depth(5.0, -1.0, &zero).is_err());
    // just below N but above the unrestricted cap
    let b = budget(30, 1e-2, 1e-4);
    assert!(matches!(certify_depth(29.9, 0.0, &b), Err(Error::Inconsistent { .. })));
}

#[test]
fn nine_tooth_combs() {
    // the windows of R that certify depth 5 (broadband) and 4 (narrowband)
    for (p1, p2, depth) in [(1.1e-2, 2.4e-7, 5), (8.8e-5, 1.6e-11, 4)] {
        let cert = DepthCertifier::new(budget(9, p1, p2), SolverOptions::default());
        let below = cert.max_r(depth - 1).unwrap();
        let at = cert.max_r(depth).unwrap();
        assert!(at - below > 0.8, "window {below}..{at}");
        let r = 0.5 * (below + at);
        assert_eq!(cert.certify(r, 0.0).unwrap().m_lower, depth);
    }
}

/// Best contrast over the two-term reduced family by exhaustive search on
/// `β²` of the last term; the constraints fix the rest.
fn grid_max_r(prob: &BoundProblem<f64>, points: usize) -> Option<f64> {
    let comps = prob.components();
    let last = *comps.last().unwrap();
    let (m, n) = (prob.depth, prob.n_teeth());
    let (p1, p2) = (prob.budget.p1, prob.budget.p2);
    let mut best: Option<f64> = None;
    for i in 0..points {
        let b = 10f64.powf(-9.0 + 9.0 * (i as f64 + 0.5) / points as f64);
        let v = last.evaluate(m, n, b, 1.0 - b);
        if v.g <= 0.0 {
            continue;
        }
        let ql = p2 / v.g;
        if ql > 1.0 {
            continue;
        }
        let b0 = (p1 - ql * v.f) / (1.0 - ql);
        if !(0.0..=1.0).contains(&b0) {
            continue;
        }
        let r = ((1.0 - ql) * m as f64 * b0 + ql * v.h) / (p1 + 2.0 * p2);
        best = Some(best.map_or(r, |x: f64| x.max(r)));
    }
    best
}

#[test]
fn solver_beats_grid_search_for_small_combs() {
    for (n, p1, p2) in [(5, 2e-2, 1e-6), (9, 1.1e-2, 2.4e-7), (12, 1e-2, 1e-6), (12, 3e-3, 1e-8)] {
        let b = budget(n, p1, p2);
        for m in 1..=n {
            let prob = b.at_depth(m).unwrap();
            let solved = max_r(&prob).unwrap().max_r;
            if let Some(grid) = grid_max_r(&prob, 10_000) {
                assert!(solved >= grid - 1e-4, "N={n} M={m}: solver {solved} grid {grid}");
            }
        }
    }
}

#[test]
fn grid_search_agrees_at_operating_point() {
    let prob = paper_budget().at_depth(229).unwrap();
    let solved = max_r(&prob).unwrap().max_r;
    let grid = grid_max_r(&prob, 100_000).unwrap();
    assert!(solved >= grid - 1e-4);
    assert!(solved - grid < 1e-2, "solver {solved} grid {grid}");
}

/// 20 problems with `P₂ ≪ P₁² ≪ 1`, at most 25 family terms each.
fn random_instances() -> Vec<BoundProblem<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20)
        .map(|_| {
            let n = rng.random_range(20..400usize);
            let m = rng.random_range(n.div_ceil(25).max(2)..n);
            let p1 = 10f64.powf(rng.random_range(-3.0..-1.5));
            let p2 = p1 * p1 * 10f64.powf(rng.random_range(-3.0..-1.0));
            budget(n, p1, p2).at_depth(m).unwrap()
        })
        .collect()
}

#[test]
fn optimum_uses_first_and_last_terms() {
    for prob in random_instances() {
        let r = max_r(&prob).unwrap();
        let k = prob.components().len();
        let big: Vec<usize> = (0..k).filter(|&i| r.state.q[i] > 1e-9).collect();
        assert_eq!(big, vec![0, k - 1], "N={} M={}: q = {:?}", prob.n_teeth(), prob.depth, r.state.q);
        assert!(r.state.q[k - 1] > 0.9);
    }
}

#[test]
fn reduced_solver_matches_full() {
    for prob in random_instances() {
        let full = max_r(&prob).unwrap().max_r;
        let reduced = max_r_reduced(&prob, &SolverOptions::default()).unwrap().max_r;
        assert!(close(full, reduced, 1e-6), "N={} M={}: {full} vs {reduced}", prob.n_teeth(), prob.depth);
    }
}

#[test]
fn max_r_monotone_in_depth_and_p2() {
    let p2s = [2.6e-9, 2.6e-8, 2e-7];
    let depths = [10, 60, 150, 229, 230, 350, 500, 563, 564];
    let curves: Vec<Vec<CurvePoint>> = p2s
        .iter()
        .map(|&p2| bound_curve(&budget(564, 3.5e-3, p2), &depths, &SolverOptions::default()).unwrap())
        .collect();
    for c in &curves {
        for w in c.windows(2) {
            assert!(w[1].max_r >= w[0].max_r * (1.0 - 1e-12), "{:?}", w);
        }
    }
    for pair in curves.windows(2) {
        // next to M = N the curves meet the cap N P₁ / (P₁ + 2P₂), which falls with P₂
        for (lo, hi) in pair[0].iter().zip(&pair[1]).filter(|(p, _)| p.depth <= 500) {
            assert!(hi.max_r >= lo.max_r, "M={}: {} vs {}", lo.depth, lo.max_r, hi.max_r);
        }
    }
}

#[test]
fn max_r_monotone_in_n_at_fixed_ratio() {
    let (p1, p2) = (3.5e-3, 2.6e-8);
    let mut prev = 0.0;
    for n in [100, 200, 300, 450, 564] {
        let r = max_r(&budget(n, p1, p2).at_depth(50).unwrap()).unwrap().max_r;
        assert!(r >= prev, "N={n}: {r} < {prev}");
        prev = r;
    }
}

#[test]
fn excess_over_depth_bounded_by_intercept() {
    let b = paper_budget();
    let intercept = linear_intercept(&b);
    for m in [1, 20, 100, 229, 400, 563] {
        let r = max_r(&b.at_depth(m).unwrap()).unwrap().max_r;
        assert!(r - m as f64 <= intercept * 1.01, "M={m}: {r}");
        if m <= b.n_teeth / 2 {
            assert!(r >= 0.95 * (m as f64 + intercept), "M={m}: {r}");
        }
    }
}

#[test]
fn certify_monotone_in_r_and_p2() {
    let opts = SolverOptions { starts: 40, ..SolverOptions::default() };
    let n = 120;
    let mut prev = 0;
    for r in [20.0, 40.0, 60.0, 90.0] {
        let m = certify_depth_with(r, 0.0, &budget(n, 5e-3, 1e-7), &opts).unwrap().m_lower;
        assert!(m >= prev);
        prev = m;
    }
    let mut prev = usize::MAX;
    for p2 in [1e-9, 1e-8, 1e-7, 1e-6] {
        let m = certify_depth_with(60.0, 0.0, &budget(n, 5e-3, p2), &opts).unwrap().m_lower;
        assert!(m <= prev);
        prev = m;
    }
}

#[test]
fn certifier_caches() {
    let cert = DepthCertifier::new(budget(50, 1e-2, 1e-6), SolverOptions::default());
    let a = cert.solve(7).unwrap();
    let b = cert.solve(7).unwrap();
    assert_eq!(a, b);
    let res = cert.certify(20.0, 1.0).unwrap();
    assert!(res.evaluations.iter().any(|p| p.depth == 7));
    assert!(res.evaluations.windows(2).all(|w| w[0].depth < w[1].depth));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn family_probabilities_are_probabilities(
        n in 2usize..600, m_frac in 0.0f64..1.0, b in 0.0f64..1.0, w in 0.0f64..1.0
    ) {
        let m = 1 + ((n - 1) as f64 * m_frac) as usize;
        let prob = budget(n, 1e-2, 1e-6).at_depth(m).unwrap();
        let k = prob.components().len();
        let mut q = vec![0.0; k];
        q[0] = w;
        q[k - 1] += 1.0 - w;
        let state = MixedBlockState::new(&prob, q, vec![b; k]).unwrap();
        let (f, g) = (family_p1(&state, &prob), family_p2(&state, &prob));
        prop_assert!(f >= 0.0 && g >= 0.0 && f + g <= 1.0 + 1e-12);
        // ⟨S₊S₋⟩ on the single sector never exceeds N P₁
        let h = family_r(&state, &prob) * (prob.budget.p1 + 2.0 * prob.budget.p2);
        prop_assert!(h <= n as f64 * f * (1.0 + 1e-12) + 1e-300);
    }
}
