//! Measured comb traces: two columns, frequency (Hz) and optical depth.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{CombSpec, ToothShape};

#[derive(Debug, Clone, PartialEq)]
pub struct CombTrace<T> {
    pub frequency: Vec<T>,
    pub optical_depth: Vec<T>,
}

/// Parses comma- or whitespace-separated columns. `#` starts a comment; a
/// single non-numeric header line is skipped.
pub fn parse_comb_trace<T: Real>(text: &str) -> Result<CombTrace<T>> {
    let mut frequency = Vec::new();
    let mut optical_depth = Vec::new();
    let mut seen_header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => {
                frequency.push(T::lit(v[0]));
                optical_depth.push(T::lit(v[1]));
            }
            None if !seen_header && frequency.is_empty() => seen_header = true,
            _ => return Err(Error::Parse(format!("comb trace line {}: expected two numbers", lineno + 1))),
        }
    }
    if frequency.len() < 3 {
        return Err(Error::Parse("comb trace needs at least three samples".into()));
    }
    if frequency.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parse("comb trace frequencies must be strictly increasing".into()));
    }
    Ok(CombTrace { frequency, optical_depth })
}

/// Extracts comb parameters from a trace.
///
/// `d0` is the minimum optical depth and `d1` the peak-to-peak depth. Teeth
/// are local maxima above `d0 + d1/2`; the spacing is the mean peak
/// separation and `γ` the mean FWHM from linearly interpolated half-height
/// crossings (teeth whose crossings fall outside the trace are skipped).
pub fn fit_comb_trace<T: Real>(trace: &CombTrace<T>, shape: ToothShape) -> Result<CombSpec<T>> {
    let od = &trace.optical_depth;
    let f = &trace.frequency;
    let n = od.len();
    let d0 = od.iter().copied().fold(T::infinity(), T::min);
    let d1 = od.iter().copied().fold(T::neg_infinity(), T::max) - d0;
    if !(d1 > T::zero()) {
        return Err(Error::domain("comb trace is flat"));
    }
    let threshold = d0 + d1 / T::lit(2.0);

    let mut peaks = Vec::new();
    for i in 0..n {
        let left = if i == 0 { T::neg_infinity() } else { od[i - 1] };
        let right = if i + 1 == n { T::neg_infinity() } else { od[i + 1] };
        // first sample of a flat top counts once
        if od[i] > threshold && od[i] > left && od[i] >= right {
            peaks.push(i);
        }
    }
    if peaks.len() < 2 {
        return Err(Error::domain(format!("found {} teeth; spacing needs at least two", peaks.len())));
    }
    let teeth = peaks.len();
    let spacing_hz = (f[peaks[teeth - 1]] - f[peaks[0]]) / T::from_count(teeth - 1);

    let crossing = |a: usize, b: usize, level: T| {
        let t = (level - od[a]) / (od[b] - od[a]);
        f[a] + t * (f[b] - f[a])
    };
    let mut widths = Vec::new();
    for &p in &peaks {
        let level = d0 + (od[p] - d0) / T::lit(2.0);
        let lo = (0..p).rev().find(|&i| od[i] <= level);
        let hi = (p + 1..n).find(|&i| od[i] <= level);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            widths.push(crossing(hi - 1, hi, level) - crossing(lo, lo + 1, level));
        }
    }
    let linewidth = if widths.is_empty() {
        T::zero()
    } else {
        widths.iter().copied().sum::<T>() / T::from_count(widths.len())
    };
    log::debug!("comb trace: {teeth} teeth, spacing {spacing_hz} Hz, FWHM {linewidth} Hz");
    CombSpec::with_teeth(teeth, spacing_hz * T::from_count(teeth), linewidth, d1, d0, shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(teeth: usize, spacing: f64, fwhm: f64, d1: f64, d0: f64) -> String {
        let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let span = spacing * (teeth as f64 + 1.0);
        let mut out = String::from("frequency_hz,optical_depth\n");
        for k in 0..4000 {
            let nu = span * k as f64 / 4000.0;
            let od: f64 = (1..=teeth)
                .map(|j| d1 * (-(nu - j as f64 * spacing).powi(2) / (2.0 * sigma * sigma)).exp())
                .sum();
            out.push_str(&format!("{nu},{}\n", od + d0));
        }
        out
    }

    #[test]
    fn recovers_synthetic_comb() {
        let text = synthetic(9, 0.667e9, 0.1e9, 2.0, 0.3);
        let trace = parse_comb_trace::<f64>(&text).unwrap();
        let comb = fit_comb_trace(&trace, ToothShape::Gaussian).unwrap();
        assert_eq!(comb.teeth(), 9);
        assert!((comb.spacing() / std::f64::consts::TAU / 0.667e9 - 1.0).abs() < 1e-3);
        assert!((comb.linewidth() / 0.1e9 - 1.0).abs() < 0.02, "{}", comb.linewidth());
        assert!((comb.d0() - 0.3).abs() < 1e-6);
        assert!((comb.d1() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn parse_accepts_whitespace_and_comments() {
        let trace = parse_comb_trace::<f32>("# scan\n0 0.1\n1 0.5 # peak\n\n2 0.1\n").unwrap();
        assert_eq!(trace.frequency, vec![0.0, 1.0, 2.0]);
        assert_eq!(trace.optical_depth[1], 0.5);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(matches!(parse_comb_trace::<f64>("0,1\n1,x\n2,3\n"), Err(Error::Parse(_))));
        assert!(parse_comb_trace::<f64>("0,1\n2,1\n1,1\n").is_err());
        assert!(parse_comb_trace::<f64>("0,1\n").is_err());
        assert!(parse_comb_trace::<f64>("0,1,2\n1,1,1\n2,2,2\n").is_err());
    }

    #[test]
    fn single_tooth_has_no_spacing() {
        let trace = parse_comb_trace::<f64>("0,0\n1,1\n2,0\n").unwrap();
        assert!(fit_comb_trace(&trace, ToothShape::Gaussian).is_err());
        let flat = parse_comb_trace::<f64>("0,1\n1,1\n2,1\n").unwrap();
        assert!(fit_comb_trace(&flat, ToothShape::Gaussian).is_err());
    }
}
