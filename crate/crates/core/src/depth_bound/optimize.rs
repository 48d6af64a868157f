//! Equality-constrained local minimisation: augmented Lagrangian outer loop,
//! limited-memory BFGS inner loop, and a Gauss-Newton feasibility projection.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// `min f(x)` subject to `c(x) = 0`.
pub trait ConstrainedProblem: Sync {
    fn dim(&self) -> usize;
    fn n_constraints(&self) -> usize;
    /// Returns `f(x)`, fills `grad` with `∇f`, `c` with the constraint values
    /// and `jac` (row-major, `n_constraints × dim`) with their gradients.
    fn evaluate(&self, x: &[f64], grad: &mut [f64], c: &mut [f64], jac: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Stop when the relative decrease of `f` stays below this for three steps.
    pub f_rtol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 8, max_iter: 400, grad_tol: 1e-11, f_rtol: 1e-15 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `fg(x, grad) -> f` in place; returns `(f, iterations)`.
pub fn lbfgs<F>(mut fg: F, x: &mut [f64], opts: &LbfgsOptions) -> (f64, usize)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = fg(x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];
    let mut stalls = 0;
    for iter in 0..opts.max_iter {
        if !f.is_finite() || g.iter().all(|v| v.abs() <= opts.grad_tol) {
            return (f, iter);
        }
        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
        for (i, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[i] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(d, y)| *d -= alpha[i] * y);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt();
            d.iter_mut().for_each(|d| *d /= gn.max(1.0));
        }
        for (i, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(d, s)| *d += (alpha[i] - beta) * s);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
            slope = -dot(&g, &g);
        }
        // Armijo backtracking
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            x_new.iter_mut().zip(x.iter()).zip(&d).for_each(|((xn, x), d)| *xn = x + t * d);
            let f_new = fg(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * t * slope {
                accepted = Some(f_new);
                break;
            }
            t *= 0.5;
        }
        let Some(f_new) = accepted else {
            if hist.is_empty() {
                return (f, iter);
            }
            hist.clear();
            continue;
        };
        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        if decrease <= opts.f_rtol * f.abs().max(1e-300) {
            stalls += 1;
            if stalls >= 3 {
                return (f, iter + 1);
            }
        } else {
            stalls = 0;
        }
    }
    (f, opts.max_iter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugLagOptions {
    pub inner: LbfgsOptions,
    pub max_outer: usize,
    /// Target for `max |c_i|`.
    pub feas_tol: f64,
    /// Relative objective change that counts as converged.
    pub f_rtol: f64,
    pub rho0: f64,
    pub rho_max: f64,
}

impl Default for AugLagOptions {
    fn default() -> Self {
        Self { inner: LbfgsOptions::default(), max_outer: 40, feas_tol: 1e-10, f_rtol: 1e-12, rho0: 10.0, rho_max: 1e10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub f: f64,
    pub c: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub feasible: bool,
}

impl Solution {
    pub fn max_violation(&self) -> f64 {
        self.c.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Minimises the augmented Lagrangian `f + λᵀc + ρ/2 |c|²` with L-BFGS,
/// updating `λ` and `ρ` between rounds, then projects onto `c = 0`.
/// `renormalise` may rescale `x` between rounds for scale-invariant
/// parametrisations.
pub fn augmented_lagrangian<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    x0: Vec<f64>,
    opts: &AugLagOptions,
    renormalise: impl Fn(&mut [f64]),
) -> Solution {
    let n = problem.dim();
    let m = problem.n_constraints();
    let mut x = x0;
    let mut lambda = vec![0.0; m];
    let mut rho = opts.rho0;
    let mut c = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let mut grad = vec![0.0; n];
    let mut f = problem.evaluate(&x, &mut grad, &mut c, &mut jac);
    let mut viol = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut inner_total = 0;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let (lam, r) = (lambda.clone(), rho);
        let mut cb = vec![0.0; m];
        let mut jb = vec![0.0; m * n];
        let (_, it) = lbfgs(
            |z, g| {
                let fz = problem.evaluate(z, g, &mut cb, &mut jb);
                for i in 0..m {
                    let w = lam[i] + r * cb[i];
                    g.iter_mut().zip(&jb[i * n..(i + 1) * n]).for_each(|(g, j)| *g += w * j);
                }
                fz + (0..m).map(|i| lam[i] * cb[i] + 0.5 * r * cb[i] * cb[i]).sum::<f64>()
            },
            &mut x,
            &opts.inner,
        );
        inner_total += it;
        renormalise(&mut x);
        let f_prev = f;
        f = problem.evaluate(&x, &mut grad, &mut c, &mut jac);
        let new_viol = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !f.is_finite() {
            break;
        }
        if new_viol < opts.feas_tol && (f - f_prev).abs() <= opts.f_rtol * f.abs().max(1e-300) {
            viol = new_viol;
            break;
        }
        for i in 0..m {
            lambda[i] += rho * c[i];
        }
        if new_viol > 0.25 * viol {
            rho = (rho * 10.0).min(opts.rho_max);
        }
        viol = new_viol;
    }
    let _ = viol;
    project_feasible(problem, &mut x, 50, 1e-14);
    renormalise(&mut x);
    f = problem.evaluate(&x, &mut grad, &mut c, &mut jac);
    let feasible = f.is_finite() && c.iter().all(|v| v.abs() < opts.feas_tol);
    Solution { x, f, c, outer_iterations: outer, inner_iterations: inner_total, feasible }
}

/// Gauss-Newton minimum-norm steps `x ← x - Jᵀ(JJᵀ)⁻¹c` until
/// `max |c| < tol`. Returns the final violation.
pub fn project_feasible<P: ConstrainedProblem + ?Sized>(problem: &P, x: &mut [f64], max_iter: usize, tol: f64) -> f64 {
    let n = problem.dim();
    let m = problem.n_constraints();
    let mut grad = vec![0.0; n];
    let mut c = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let mut viol = f64::INFINITY;
    for _ in 0..max_iter {
        problem.evaluate(x, &mut grad, &mut c, &mut jac);
        let v = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !v.is_finite() {
            return v;
        }
        viol = v;
        if v < tol {
            break;
        }
        let j = DMatrix::from_row_slice(m, n, &jac);
        let jjt = &j * j.transpose();
        let Some(y) = jjt.lu().solve(&DVector::from_column_slice(&c)) else {
            break;
        };
        let step = j.transpose() * y;
        // damp until the violation decreases
        let mut t = 1.0;
        let mut improved = false;
        let trial: Vec<f64> = x.to_vec();
        for _ in 0..30 {
            let cand: Vec<f64> = trial.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            problem.evaluate(&cand, &mut grad, &mut c, &mut jac);
            let cv = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if cv.is_finite() && cv < v {
                x.copy_from_slice(&cand);
                viol = cv;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    viol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_minimises_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let opts = LbfgsOptions { max_iter: 2000, ..Default::default() };
        let (f, _) = lbfgs(
            |x, g| {
                g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 200.0 * (x[1] - x[0] * x[0]);
                (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
            },
            &mut x,
            &opts,
        );
        assert!(f < 1e-16, "{f}");
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] - 1.0).abs() < 1e-7);
    }

    /// min x + y on the unit circle: optimum (-1/√2, -1/√2).
    struct Circle;

    impl ConstrainedProblem for Circle {
        fn dim(&self) -> usize {
            2
        }
        fn n_constraints(&self) -> usize {
            1
        }
        fn evaluate(&self, x: &[f64], grad: &mut [f64], c: &mut [f64], jac: &mut [f64]) -> f64 {
            grad.copy_from_slice(&[1.0, 1.0]);
            c[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
            jac.copy_from_slice(&[2.0 * x[0], 2.0 * x[1]]);
            x[0] + x[1]
        }
    }

    #[test]
    fn augmented_lagrangian_solves_circle() {
        let sol = augmented_lagrangian(&Circle, vec![0.3, 0.9], &AugLagOptions::default(), |_| {});
        assert!(sol.feasible);
        assert!(sol.max_violation() < 1e-12);
        assert!((sol.f + 2f64.sqrt()).abs() < 1e-9, "{}", sol.f);
    }

    #[test]
    fn projection_reaches_the_constraint() {
        let mut x = vec![3.0, -0.5];
        let v = project_feasible(&Circle, &mut x, 50, 1e-14);
        assert!(v < 1e-14);
        assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-14);
    }
}
