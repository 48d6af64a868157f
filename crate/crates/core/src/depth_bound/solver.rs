//! Multi-start maximisation of the family contrast and depth certification.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::optimize::{augmented_lagrangian, AugLagOptions, ConstrainedProblem};
use super::{linear_bound, BoundProblem, Component, ExcitationBudget, MixedBlockState};
use crate::error::{Error, Result};
use crate::scalar::CompensatedSum;

/// Components whose weight falls below this are pruned and the remaining
/// support re-solved.
const PRUNE_Q: f64 = 1e-6;

const MAX_START_SUPPORT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Random starts, in addition to one structured start.
    pub starts: usize,
    pub seed: u64,
    pub auglag: AugLagOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { starts: 200, seed: 0, auglag: AugLagOptions::default() }
    }
}

/// What the solver maximises.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Goal {
    /// Contrast subject to both `P₁` and `P₂`.
    Contrast,
    /// `P₂` subject to `P₁` only.
    TwoExcitation,
}

/// Variables `(y, θ)`: `q_i = y_i² / |y|²`, `β_i² = sin² θ_i`.
struct FamilyProblem {
    comps: Vec<Component>,
    depth: usize,
    n_teeth: usize,
    p1: f64,
    p2: f64,
    goal: Goal,
}

impl FamilyProblem {
    fn new(prob: &BoundProblem<f64>, comps: Vec<Component>, goal: Goal) -> Self {
        Self { comps, depth: prob.depth, n_teeth: prob.n_teeth(), p1: prob.budget.p1, p2: prob.budget.p2, goal }
    }

    fn k(&self) -> usize {
        self.comps.len()
    }

    fn contrast_scale(&self) -> f64 {
        self.n_teeth as f64 * (self.p1 + 2.0 * self.p2)
    }

    fn decode(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.k();
        let s: f64 = x[..k].iter().map(|y| y * y).sum();
        let q = x[..k].iter().map(|y| y * y / s).collect();
        let b = x[k..].iter().map(|t| t.sin().powi(2)).collect();
        (q, b)
    }

    fn encode(q: &[f64], b: &[f64]) -> Vec<f64> {
        q.iter().map(|v| v.max(0.0).sqrt()).chain(b.iter().map(|v| v.clamp(0.0, 1.0).sqrt().asin())).collect()
    }

    fn renormalise(&self, x: &mut [f64]) {
        let k = self.k();
        let norm = x[..k].iter().map(|y| y * y).sum::<f64>().sqrt();
        if norm > 0.0 {
            x[..k].iter_mut().for_each(|y| *y /= norm);
        }
    }
}

impl ConstrainedProblem for FamilyProblem {
    fn dim(&self) -> usize {
        2 * self.k()
    }

    fn n_constraints(&self) -> usize {
        match self.goal {
            Goal::Contrast => 2,
            Goal::TwoExcitation => 1,
        }
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64], c: &mut [f64], jac: &mut [f64]) -> f64 {
        let k = self.k();
        let n = 2 * k;
        let s: f64 = x[..k].iter().map(|y| y * y).sum();
        if !(s > 1e-300) {
            grad.fill(0.0);
            c.fill(f64::INFINITY);
            jac.fill(0.0);
            return f64::INFINITY;
        }
        let vals: Vec<_> = (0..k)
            .map(|i| {
                if x[i] == 0.0 {
                    return (Default::default(), 0.0);
                }
                let (sin, cos) = x[k + i].sin_cos();
                let v = self.comps[i].evaluate(self.depth, self.n_teeth, sin * sin, cos * cos);
                (v, 2.0 * sin * cos)
            })
            .collect();
        let q: Vec<f64> = x[..k].iter().map(|y| y * y / s).collect();
        let (mut fs, mut gs, mut hs) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
        for (qi, (v, _)) in q.iter().zip(&vals) {
            fs.add(qi * v.f);
            gs.add(qi * v.g);
            hs.add(qi * v.h);
        }
        let (fsum, gsum, hsum) = (fs.value(), gs.value(), hs.value());

        // gradient of Σ q_i x_i with respect to (y, θ), scaled
        let fill = |out: &mut [f64], scale: f64, total: f64, pick: &dyn Fn(usize) -> (f64, f64)| {
            for i in 0..k {
                let (value, deriv) = pick(i);
                out[i] = scale * 2.0 * x[i] * (value - total) / s;
                out[k + i] = scale * q[i] * deriv * vals[i].1;
            }
        };
        let pf = |i: usize| (vals[i].0.f, vals[i].0.df);
        let pg = |i: usize| (vals[i].0.g, vals[i].0.dg);
        let ph = |i: usize| (vals[i].0.h, vals[i].0.dh);
        match self.goal {
            Goal::Contrast => {
                let scale = self.contrast_scale();
                fill(grad, -1.0 / scale, hsum, &ph);
                c[0] = fsum / self.p1 - 1.0;
                c[1] = gsum / self.p2 - 1.0;
                fill(&mut jac[..n], 1.0 / self.p1, fsum, &pf);
                fill(&mut jac[n..2 * n], 1.0 / self.p2, gsum, &pg);
                -hsum / scale
            }
            Goal::TwoExcitation => {
                fill(grad, -1.0 / self.p1, gsum, &pg);
                c[0] = fsum / self.p1 - 1.0;
                fill(&mut jac[..n], 1.0 / self.p1, fsum, &pf);
                -gsum / self.p1
            }
        }
    }
}

/// Solver bookkeeping reported alongside a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub method: &'static str,
    pub starts: usize,
    pub feasible_starts: usize,
    pub best_start: Option<usize>,
    /// Best contrast reached from each start (`None` if it never became feasible).
    pub start_objectives: Vec<Option<f64>>,
    pub constraint_residuals: Vec<f64>,
    /// Components with non-zero weight.
    pub support: Vec<usize>,
    /// Components whose excitation sits at `β² = 1`.
    pub saturated: Vec<usize>,
}

impl SolverDiagnostics {
    fn closed_form(method: &'static str, support: Vec<usize>) -> Self {
        Self {
            method,
            starts: 0,
            feasible_starts: 0,
            best_start: None,
            start_objectives: Vec::new(),
            constraint_residuals: Vec::new(),
            support,
            saturated: Vec::new(),
        }
    }
}

/// Maximum family contrast at one depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxR {
    pub depth: usize,
    pub max_r: f64,
    pub components: Vec<Component>,
    pub state: MixedBlockState<f64>,
    pub diagnostics: SolverDiagnostics,
}

struct MultiStart {
    best: Option<(usize, Vec<f64>, f64)>,
    objectives: Vec<Option<f64>>,
}

/// Random start on a random support of at most `MAX_START_SUPPORT`
/// components. Weights that start at zero stay at zero, so each start
/// explores a low-dimensional face of the simplex.
fn random_start(k: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let size = rng.random_range(1..=k.min(MAX_START_SUPPORT));
    let support = rand::seq::index::sample(&mut rng, k, size);
    let mut q = vec![0.0; k];
    for i in support.iter() {
        q[i] = rng.random_range(0.01..1.0f64);
    }
    let lo = 1e-9f64.log10();
    let hi = 0.5f64.log10();
    let b: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(lo..hi))).collect();
    let total: f64 = q.iter().sum();
    FamilyProblem::encode(&q.iter().map(|v| v / total).collect::<Vec<_>>(), &b)
}

/// Weight on a nearly saturated single block plus the largest term carrying
/// the two-excitation budget.
fn structured_start(problem: &FamilyProblem) -> Vec<f64> {
    let k = problem.k();
    let mut q = vec![0.0; k];
    let mut b = vec![0.0; k];
    let last = problem.comps[k - 1];
    let eval = |bb: f64| last.evaluate(problem.depth, problem.n_teeth, bb, 1.0 - bb);
    let q_first = 0.5 * problem.p1 / 0.99;
    let q_last = 1.0 - q_first;
    let blocks = match last {
        Component::Plain(n) | Component::Augmented(n) => n,
    };
    let (mut lo, mut hi) = (0.0, 1.0 / (blocks as f64 + 1.0));
    if eval(hi).g * q_last > problem.p2 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval(mid).g * q_last > problem.p2 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    q[0] = q_first;
    b[0] = 0.99;
    q[k - 1] += q_last;
    b[k - 1] = hi;
    FamilyProblem::encode(&q, &b)
}

fn multistart(problem: &FamilyProblem, opts: &SolverOptions) -> MultiStart {
    let k = problem.k();
    let results: Vec<(Option<f64>, Vec<f64>)> = (0..=opts.starts)
        .into_par_iter()
        .map(|i| {
            let x0 = if i == 0 { structured_start(problem) } else { random_start(k, opts.seed, i) };
            let sol = augmented_lagrangian(problem, x0, &opts.auglag, |x| problem.renormalise(x));
            (sol.feasible.then_some(-sol.f), sol.x)
        })
        .collect();
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for (i, (obj, x)) in results.iter().enumerate() {
        if let Some(v) = *obj {
            if best.as_ref().is_none_or(|b| v > b.2) {
                best = Some((i, x.clone(), v));
            }
        }
    }
    MultiStart { best, objectives: results.into_iter().map(|r| r.0).collect() }
}

/// Closed-form cases: no two-excitation budget, or unrestricted depth.
fn closed_form(prob: &BoundProblem<f64>) -> Option<MaxR> {
    let comps = prob.components();
    let k = comps.len();
    let p1 = prob.budget.p1;
    if prob.budget.p2 == 0.0 {
        // only single blocks carry no two-excitation weight
        let mut q = vec![0.0; k];
        let mut b = vec![0.0; k];
        q[0] = 1.0;
        b[0] = p1;
        return Some(MaxR {
            depth: prob.depth,
            max_r: prob.depth as f64,
            components: comps,
            state: MixedBlockState { q, beta_sq: b },
            diagnostics: SolverDiagnostics::closed_form("no two-excitation budget", vec![0]),
        });
    }
    if prob.depth == prob.n_teeth() {
        // a single block covers the comb: |W_N⟩ mixed with two-excitation states
        // saturates ⟨S₊S₋⟩ ≤ N P₁, which the block family cannot express
        return Some(MaxR {
            depth: prob.depth,
            max_r: prob.budget.universal_cap(),
            components: comps,
            state: MixedBlockState { q: vec![1.0], beta_sq: vec![p1] },
            diagnostics: SolverDiagnostics::closed_form("unrestricted depth", vec![0]),
        });
    }
    None
}

fn finish(
    prob: &BoundProblem<f64>,
    all: &[Component],
    used: &[usize],
    problem: &FamilyProblem,
    x: &[f64],
    ms: &MultiStart,
    method: &'static str,
) -> MaxR {
    let (q_used, b_used) = problem.decode(x);
    let mut q = vec![0.0; all.len()];
    let mut b = vec![0.0; all.len()];
    for (j, &i) in used.iter().enumerate() {
        q[i] = q_used[j];
        b[i] = b_used[j];
    }
    let mut grad = vec![0.0; problem.dim()];
    let mut c = vec![0.0; 2];
    let mut jac = vec![0.0; 2 * problem.dim()];
    let f = problem.evaluate(x, &mut grad, &mut c, &mut jac);
    MaxR {
        depth: prob.depth,
        max_r: -f * problem.n_teeth as f64,
        components: all.to_vec(),
        diagnostics: SolverDiagnostics {
            method,
            starts: ms.objectives.len(),
            feasible_starts: ms.objectives.iter().flatten().count(),
            best_start: ms.best.as_ref().map(|b| b.0),
            start_objectives: ms.objectives.iter().map(|o| o.map(|v| v * problem.n_teeth as f64)).collect(),
            constraint_residuals: c,
            support: (0..all.len()).filter(|&i| q[i] > 0.0).collect(),
            saturated: (0..all.len()).filter(|&i| q[i] > 0.0 && b[i] >= 1.0 - 1e-12).collect(),
        },
        state: MixedBlockState { q, beta_sq: b },
    }
}

/// Largest `P₂` the family reaches at the given `P₁`.
fn max_two_excitation(prob: &BoundProblem<f64>, opts: &SolverOptions) -> f64 {
    let problem = FamilyProblem::new(prob, prob.components(), Goal::TwoExcitation);
    let ms = multistart(&problem, opts);
    ms.best.map_or(0.0, |b| b.2 * prob.budget.p1)
}

fn solve_on(prob: &BoundProblem<f64>, used: Vec<usize>, opts: &SolverOptions, method: &'static str) -> Result<MaxR> {
    let all = prob.components();
    let comps: Vec<Component> = used.iter().map(|&i| all[i]).collect();
    let problem = FamilyProblem::new(prob, comps, Goal::Contrast);
    let ms = multistart(&problem, opts);
    let Some((_, x, _)) = ms.best.clone() else {
        let p2_max = max_two_excitation(prob, opts);
        if p2_max < prob.budget.p2 {
            return Err(Error::Infeasible { depth: prob.depth, p1: prob.budget.p1, p2: prob.budget.p2, p2_max });
        }
        return Err(Error::Numeric(format!("no solver start reached feasibility at depth {}", prob.depth)));
    };
    let mut best = finish(prob, &all, &used, &problem, &x, &ms, method);

    // re-solve on the surviving support from the current optimum
    let keep: Vec<usize> = (0..used.len()).filter(|&j| best.state.q[used[j]] >= PRUNE_Q).collect();
    if keep.len() < used.len() && !keep.is_empty() {
        let sub_used: Vec<usize> = keep.iter().map(|&j| used[j]).collect();
        let sub = FamilyProblem::new(prob, sub_used.iter().map(|&i| all[i]).collect(), Goal::Contrast);
        let q: Vec<f64> = sub_used.iter().map(|&i| best.state.q[i]).collect();
        let total: f64 = q.iter().sum();
        let b: Vec<f64> = sub_used.iter().map(|&i| best.state.beta_sq[i]).collect();
        let x0 = FamilyProblem::encode(&q.iter().map(|v| v / total).collect::<Vec<_>>(), &b);
        let sol = augmented_lagrangian(&sub, x0, &opts.auglag, |x| sub.renormalise(x));
        if sol.feasible && -sol.f * prob.n_teeth() as f64 >= best.max_r * (1.0 - 1e-10) {
            let pruned = finish(prob, &all, &sub_used, &sub, &sol.x, &ms, method);
            best.max_r = pruned.max_r;
            best.state = pruned.state;
            best.diagnostics.constraint_residuals = pruned.diagnostics.constraint_residuals;
            best.diagnostics.support = pruned.diagnostics.support;
            best.diagnostics.saturated = pruned.diagnostics.saturated;
        }
    }
    Ok(best)
}

/// Maximum contrast over the full family with default options.
pub fn max_r(prob: &BoundProblem<f64>) -> Result<MaxR> {
    max_r_with(prob, &SolverOptions::default())
}

pub fn max_r_with(prob: &BoundProblem<f64>, opts: &SolverOptions) -> Result<MaxR> {
    if let Some(r) = closed_form(prob) {
        return Ok(r);
    }
    let k = prob.components().len();
    solve_on(prob, (0..k).collect(), opts, "multistart")
}

/// Maximum over the first and last family terms only (four variables).
pub fn max_r_reduced(prob: &BoundProblem<f64>, opts: &SolverOptions) -> Result<MaxR> {
    if let Some(r) = closed_form(prob) {
        return Ok(r);
    }
    let k = prob.components().len();
    solve_on(prob, vec![0, k - 1], opts, "reduced multistart")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub depth: usize,
    pub max_r: f64,
}

/// `max_R` at each depth, sorted by depth.
pub fn bound_curve(budget: &ExcitationBudget<f64>, depths: &[usize], opts: &SolverOptions) -> Result<Vec<CurvePoint>> {
    let certifier = DepthCertifier::new(*budget, *opts);
    let mut sorted = depths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.iter().map(|&m| Ok(CurvePoint { depth: m, max_r: certifier.max_r(m)? })).collect()
}

/// Certified lower bound on the entanglement depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthBoundResult {
    pub m_lower: usize,
    pub r_max_at_m: f64,
    /// `max_R(M_lower - 1)`, below the measured contrast.
    pub r_max_below: Option<f64>,
    pub r_input: f64,
    pub sigma_r: f64,
    /// Depth bounds at `R - σ` and `R + σ`.
    pub m_lower_interval: (usize, usize),
    pub linear_bound: f64,
    pub n_teeth: usize,
    pub p1: f64,
    pub p2: f64,
    /// Every depth the search evaluated.
    pub evaluations: Vec<CurvePoint>,
    pub solver: SolverDiagnostics,
}

/// Caches `max_R` per depth for one excitation budget.
pub struct DepthCertifier {
    budget: ExcitationBudget<f64>,
    opts: SolverOptions,
    cache: Mutex<BTreeMap<usize, MaxR>>,
}

impl DepthCertifier {
    pub fn new(budget: ExcitationBudget<f64>, opts: SolverOptions) -> Self {
        Self { budget, opts, cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn solve(&self, depth: usize) -> Result<MaxR> {
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&depth) {
            return Ok(hit.clone());
        }
        let r = max_r_with(&self.budget.at_depth(depth)?, &self.opts)?;
        log::debug!("max_R(M = {depth}) = {}", r.max_r);
        self.cache.lock().expect("cache poisoned").insert(depth, r.clone());
        Ok(r)
    }

    pub fn max_r(&self, depth: usize) -> Result<f64> {
        Ok(self.solve(depth)?.max_r)
    }

    /// Smallest `M` with `max_R(M) >= r`, by bisection; `None` if even
    /// `M = N` falls short.
    pub fn smallest_depth(&self, r: f64) -> Result<Option<usize>> {
        let n = self.budget.n_teeth;
        if self.max_r(n)? < r {
            return Ok(None);
        }
        // lo = 0 stands for "no depth", so small depths are only solved when reached
        let (mut lo, mut hi) = (0, n);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.max_r(mid)? >= r {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }

    pub fn certify(&self, r: f64, sigma_r: f64) -> Result<DepthBoundResult> {
        let n = self.budget.n_teeth;
        if !(sigma_r >= 0.0) || !r.is_finite() {
            return Err(Error::domain("need finite R and sigma_R >= 0"));
        }
        if r > n as f64 {
            return Err(Error::Inconsistent { r, r_max: n as f64, n_teeth: n });
        }
        let Some(m_lower) = self.smallest_depth(r)? else {
            return Err(Error::Inconsistent { r, r_max: self.max_r(n)?, n_teeth: n });
        };
        let lo = self.smallest_depth(r - sigma_r)?.unwrap_or(1);
        let hi = self.smallest_depth(r + sigma_r)?.unwrap_or(n);
        let at = self.solve(m_lower)?;
        let below = if m_lower > 1 { Some(self.max_r(m_lower - 1)?) } else { None };
        let evaluations = self
            .cache
            .lock()
            .expect("cache poisoned")
            .values()
            .map(|v| CurvePoint { depth: v.depth, max_r: v.max_r })
            .collect();
        Ok(DepthBoundResult {
            m_lower,
            r_max_at_m: at.max_r,
            r_max_below: below,
            r_input: r,
            sigma_r,
            m_lower_interval: (lo, hi),
            linear_bound: linear_bound(r, &self.budget),
            n_teeth: n,
            p1: self.budget.p1,
            p2: self.budget.p2,
            evaluations,
            solver: at.diagnostics,
        })
    }
}

/// Smallest depth whose family can reach contrast `r`, with the interval
/// from `r ± sigma_r`.
pub fn certify_depth(r: f64, sigma_r: f64, budget: &ExcitationBudget<f64>) -> Result<DepthBoundResult> {
    certify_depth_with(r, sigma_r, budget, &SolverOptions::default())
}

pub fn certify_depth_with(
    r: f64,
    sigma_r: f64,
    budget: &ExcitationBudget<f64>,
    opts: &SolverOptions,
) -> Result<DepthBoundResult> {
    DepthCertifier::new(*budget, *opts).certify(r, sigma_r)
}
