use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, Matrix4, OMatrix, Vector4, U4};
use serde::{Deserialize, Serialize};

use super::{estimate_background, Background, TimeHistogram};
use crate::error::{Error, Result};

const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

/// Gaussian-plus-offset fit of the echo and the window average around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoFit {
    /// Peak height above the fitted offset (counts per bin).
    pub amplitude: f64,
    /// Peak centre relative to the herald (s).
    pub t0: f64,
    pub fwhm: f64,
    pub offset: f64,
    /// Covariance of `(amplitude, t0, fwhm, offset)`.
    pub covariance: [[f64; 4]; 4],
    /// `None` when the histogram has too few pre-herald bins.
    pub background: Option<Background>,
    /// Mean counts per bin over one storage time centred on `t0`.
    pub window_average: f64,
    pub window_average_variance: f64,
    pub window_bins: usize,
    pub fit_window: (f64, f64),
    pub chi2_per_dof: f64,
}

impl EchoFit {
    pub fn sigma_amplitude(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn var_amplitude(&self) -> f64 {
        self.covariance[0][0]
    }

    pub fn var_fwhm(&self) -> f64 {
        self.covariance[2][2]
    }

    pub fn cov_amplitude_fwhm(&self) -> f64 {
        self.covariance[0][2]
    }

    /// Raw contrast `E / A`.
    pub fn raw_contrast(&self) -> f64 {
        self.amplitude / self.window_average
    }
}

/// Weighted least squares on `c + E exp(-4 ln2 (τ - τ₀)² / w²)` with times in
/// bin units.
struct GaussianProblem {
    tau: Vec<f64>,
    y: Vec<f64>,
    sqrt_w: Vec<f64>,
    p: Vector4<f64>,
}

impl GaussianProblem {
    fn model_row(&self, i: usize, p: &Vector4<f64>) -> (f64, [f64; 4]) {
        let (e, t0, w, c) = (p[0], p[1], p[2], p[3]);
        let d = self.tau[i] - t0;
        let w2 = w * w;
        let g = (-FOUR_LN2 * d * d / w2).exp();
        let model = c + e * g;
        let grad = [g, e * g * 2.0 * FOUR_LN2 * d / w2, e * g * 2.0 * FOUR_LN2 * d * d / (w2 * w), 1.0];
        (model, grad)
    }
}

impl LeastSquaresProblem<f64, Dyn, U4> for GaussianProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, x: &Vector4<f64>) {
        self.p = *x;
    }

    fn params(&self) -> Vector4<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        if self.p[2] == 0.0 {
            return None;
        }
        Some(DVector::from_iterator(
            self.y.len(),
            (0..self.y.len()).map(|i| (self.model_row(i, &self.p).0 - self.y[i]) * self.sqrt_w[i]),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        if self.p[2] == 0.0 {
            return None;
        }
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.y.len());
        for i in 0..self.y.len() {
            let (_, g) = self.model_row(i, &self.p);
            for k in 0..4 {
                j[(i, k)] = g[k] * self.sqrt_w[i];
            }
        }
        Some(j)
    }
}

/// Fit window `t_e ± min(t_e/4, 3 ns)`.
pub fn default_window(h: &TimeHistogram) -> (f64, f64) {
    let te = h.storage_time();
    let half = (te / 4.0).min(3e-9);
    (te - half, te + half)
}

pub fn fit_echo(h: &TimeHistogram) -> Result<EchoFit> {
    fit_echo_in(h, default_window(h))
}

/// Fits the echo within `window` (times relative to the herald).
pub fn fit_echo_in(h: &TimeHistogram, window: (f64, f64)) -> Result<EchoFit> {
    let te = h.storage_time();
    let (lo, hi) = window;
    if !(lo < te && te < hi) {
        return Err(Error::domain(format!("fit window ({lo:e}, {hi:e}) s misses the echo time {te:e} s")));
    }
    let range = h.bins_between(lo, hi);
    if range.len() < 6 {
        return Err(Error::domain(format!("fit window holds {} bins, need at least 6", range.len())));
    }
    let bw = h.bin_width();
    let y: Vec<f64> = h.counts()[range.clone()].iter().map(|&c| c as f64).collect();
    let tau: Vec<f64> = range.clone().map(|i| (h.time(i) - te) / bw).collect();

    let p0 = seed(&tau, &y);
    let problem = GaussianProblem {
        sqrt_w: y.iter().map(|&v| 1.0 / v.max(1.0).sqrt()).collect(),
        tau,
        y,
        p: p0,
    };
    let lm = LevenbergMarquardt::new().with_patience(200);
    let (mut problem, report) = lm.minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::LowSignal(format!("echo fit did not converge: {:?}", report.termination)));
    }
    // refit with the Poisson variance taken from the model: count-based
    // weights pull the offset low where bins hold about one count
    for _ in 0..2 {
        let p = problem.p;
        problem.sqrt_w = (0..problem.y.len()).map(|i| 1.0 / problem.model_row(i, &p).0.max(1.0).sqrt()).collect();
        let (next, report) = lm.minimize(problem);
        if !report.termination.was_successful() {
            return Err(Error::LowSignal(format!("echo fit did not converge: {:?}", report.termination)));
        }
        problem = next;
    }
    let p = problem.p;
    let (e, w) = (p[0], p[2].abs());
    let jac = problem.jacobian().ok_or_else(|| Error::LowSignal("degenerate echo width".into()))?;
    let info: Matrix4<f64> = jac.transpose() * &jac;
    let cov_bins = info.try_inverse().ok_or_else(|| Error::LowSignal("singular fit information matrix".into()))?;
    // back to seconds: τ₀ and w were in bin units
    let scale = [1.0, bw, bw, 1.0];
    let mut covariance = [[0.0; 4]; 4];
    for (a, row) in covariance.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = cov_bins[(a, b)] * scale[a] * scale[b];
        }
    }
    let sigma_e = covariance[0][0].sqrt();
    if !(e.is_finite() && sigma_e.is_finite()) || e < 3.0 * sigma_e {
        return Err(Error::LowSignal(format!("echo amplitude {e:.3} below three standard errors ({sigma_e:.3})")));
    }
    let t0 = te + p[1] * bw;
    let fwhm = w * bw;
    if !(t0 > lo && t0 < hi) || fwhm > hi - lo {
        return Err(Error::LowSignal(format!("fitted echo (t0 {t0:e} s, FWHM {fwhm:e} s) leaves the fit window")));
    }

    let avg_range = h.bins_between(t0 - te / 2.0, t0 + te / 2.0);
    let expected = (te / bw).round() as usize;
    if avg_range.len() + 1 < expected {
        return Err(Error::domain("histogram ends inside the averaging window"));
    }
    let n = avg_range.len() as f64;
    let total: u64 = h.counts()[avg_range.clone()].iter().sum();
    let window_average = total as f64 / n;
    let residuals = problem.residuals().map(|r| r.norm_squared()).unwrap_or(f64::NAN);
    let dof = problem.y.len().saturating_sub(4).max(1) as f64;

    Ok(EchoFit {
        amplitude: e,
        t0,
        fwhm,
        offset: p[3],
        covariance,
        background: estimate_background(h).ok(),
        window_average,
        window_average_variance: window_average / n,
        window_bins: avg_range.len(),
        fit_window: window,
        chi2_per_dof: residuals / dof,
    })
}

/// Starting point from a 5-bin running mean: offset at the lower quartile,
/// peak at the qualifying local maximum nearest the expected echo time
/// (`τ = 0`), width from the half-maximum crossings.
fn seed(tau: &[f64], y: &[f64]) -> Vector4<f64> {
    let n = y.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let a = i.saturating_sub(2);
            let b = (i + 3).min(n);
            y[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let offset = sorted[n / 4];
    let top = smooth.iter().copied().fold(f64::MIN, f64::max);
    let cut = offset + 0.5 * (top - offset);
    let peak = (0..n)
        .filter(|&i| {
            smooth[i] >= cut
                && (i == 0 || smooth[i] >= smooth[i - 1])
                && (i + 1 == n || smooth[i] >= smooth[i + 1])
        })
        .min_by(|&a, &b| tau[a].abs().total_cmp(&tau[b].abs()))
        .unwrap_or(0);
    let height = (y[peak].max(smooth[peak]) - offset).max(1.0);
    let half = offset + 0.5 * height;
    let mut left = peak;
    while left > 0 && smooth[left] > half {
        left -= 1;
    }
    let mut right = peak;
    while right + 1 < n && smooth[right] > half {
        right += 1;
    }
    let width = ((right - left) as f64).max(2.0);
    Vector4::new(height, tau[peak], width, offset)
}
