use std::path::Path;

use afc_core::depth_bound::{bound_curve, certify_depth_with, CurvePoint, DepthBoundResult, SolverOptions};
use afc_core::echo_analysis::io::read_histogram;
use afc_core::echo_analysis::{
    contrast_vs_param_sweep, echo_contrast, fit_echo, Contrast, Corrections, EchoFit, SweepRow, TimeHistogram,
};
use afc_core::echo_sim::{absorb, emission_trace, simulated_contrast, CombSpec, PhotonSpectrum, SpectrumShape};
use afc_core::photon_stats::monte_carlo::simulate_channel;
use afc_core::photon_stats::{estimate_etas, estimate_mu_from_g2, PhotonStatsReport};
use afc_core::spectroscopy::{atoms_per_tooth_absorption, atoms_per_tooth_singleion, MaterialConfig, MaterialParams};
use afc_core::{Error, ExcitationBudget64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::{AnalyzeConfig, BoundConfig, Config, PhotonConfig, PstatsConfig, SimulateConfig};
use crate::output::{num, opt, OutputDir, Provenance};
use crate::CliError;

/// Integrated tooth absorption used when the material file gives none (Hz).
pub const DEFAULT_THETA_T: f64 = 4.3e6;

fn photon(cfg: &PhotonConfig) -> Result<PhotonSpectrum<f64>, Error> {
    match (cfg.shape, cfg.fwhm) {
        (SpectrumShape::Flat, _) => Ok(PhotonSpectrum::flat()),
        (shape, Some(fwhm)) => PhotonSpectrum::new(shape, fwhm, cfg.center_offset),
        (_, None) => Err(Error::Domain("a Lorentzian photon needs a fwhm".into())),
    }
}

#[derive(Debug, Serialize)]
struct SimRow {
    teeth: usize,
    bandwidth: f64,
    contrast: f64,
    contrast_over_n: f64,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    r_vs_n: Vec<SimRow>,
    r_vs_bandwidth: Vec<SimRow>,
    trace_teeth: usize,
    trace_storage_time: f64,
}

fn comb_for(cfg: &SimulateConfig, teeth: usize, seed: u64, stream: u64) -> Result<CombSpec<f64>, Error> {
    let comb = CombSpec::with_teeth(teeth, cfg.bandwidth, cfg.linewidth, cfg.d1, cfg.d0, cfg.tooth_shape)?;
    if cfg.depth_jitter > 0.0 {
        let normal = Normal::new(1.0, cfg.depth_jitter).map_err(|e| Error::Domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let factors = (0..teeth).map(|_| normal.sample(&mut rng).max(0.0)).collect();
        return comb.with_depth_jitter(factors);
    }
    Ok(comb)
}

fn sim_row(comb: &CombSpec<f64>, photon: &PhotonSpectrum<f64>) -> Result<SimRow, Error> {
    let contrast = simulated_contrast(&absorb(comb, photon)?, comb)?;
    Ok(SimRow {
        teeth: comb.teeth(),
        bandwidth: comb.bandwidth(),
        contrast,
        contrast_over_n: contrast / comb.teeth() as f64,
    })
}

fn sim_csv(rows: &[SimRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| vec![r.teeth.to_string(), num(r.bandwidth), num(r.contrast), num(r.contrast_over_n)])
        .collect()
}

pub fn simulate(cfg: &SimulateConfig, seed: u64, prov: &Provenance, out: &mut OutputDir) -> Result<(), CliError> {
    let ph = photon(&cfg.photon)?;
    let r_vs_n = cfg
        .teeth
        .iter()
        .enumerate()
        .map(|(i, &n)| sim_row(&comb_for(cfg, n, seed, i as u64)?, &ph))
        .collect::<Result<Vec<_>, Error>>()?;

    let sweep = &cfg.bandwidth_sweep;
    let sweep_photon = photon(&sweep.photon)?;
    let spacing = std::f64::consts::TAU * sweep.spacing;
    let r_vs_bandwidth = sweep
        .bandwidths
        .iter()
        .map(|&bw| sim_row(&CombSpec::new(bw, spacing, cfg.linewidth, cfg.d1, cfg.d0, cfg.tooth_shape)?, &sweep_photon))
        .collect::<Result<Vec<_>, Error>>()?;

    let comb = comb_for(cfg, cfg.trace_teeth, seed, u64::MAX)?;
    let te = comb.storage_time();
    let points = cfg.trace_points.max(2);
    let times: Vec<f64> = (0..=(5 * points / 2)).map(|i| te * i as f64 / points as f64).collect();
    let trace = emission_trace(&absorb(&comb, &ph)?, &comb, &times)?;

    let columns = ["teeth", "bandwidth_hz", "contrast", "contrast_over_n"];
    out.csv("r_vs_n.csv", prov, &columns, &sim_csv(&r_vs_n))?;
    out.csv("r_vs_bandwidth.csv", prov, &columns, &sim_csv(&r_vs_bandwidth))?;
    let rows: Vec<Vec<String>> = trace.times.iter().zip(&trace.p).map(|(t, p)| vec![num(*t), num(*p)]).collect();
    out.csv("emission_trace.csv", prov, &["t_s", "p"], &rows)?;
    let report = SimulateReport { r_vs_n, r_vs_bandwidth, trace_teeth: comb.teeth(), trace_storage_time: te };
    out.json("simulate.json", prov, &report)
}

#[derive(Debug, Serialize)]
struct MonteCarloCheck {
    trials: u64,
    accepted: u64,
    p1: f64,
    sigma_p1: f64,
    p2: f64,
    sigma_p2: f64,
}

#[derive(Debug, Serialize)]
struct RateEstimates {
    g2_cross: f64,
    mu: f64,
    eta_a: f64,
    eta_b_star: f64,
}

#[derive(Debug, Serialize)]
struct PstatsOutput<'a> {
    #[serde(flatten)]
    report: &'a PhotonStatsReport,
    monte_carlo: Option<MonteCarloCheck>,
    rates: Option<RateEstimates>,
}

pub fn pstats(
    cfg: &PstatsConfig,
    seed: u64,
    prov: &Provenance,
    out: &mut OutputDir,
) -> Result<PhotonStatsReport, CliError> {
    let report = cfg.channel.evaluate(cfg.r_max)?;
    let monte_carlo = if cfg.mc_trials > 0 {
        let counts = simulate_channel(&report.channel, cfg.mc_trials, seed)?;
        let (p1, sigma_p1) = counts.estimate(1);
        let (p2, sigma_p2) = counts.estimate(2);
        Some(MonteCarloCheck { trials: counts.trials, accepted: counts.accepted, p1, sigma_p1, p2, sigma_p2 })
    } else {
        None
    };
    let rates = match &cfg.rates {
        Some(r) => {
            let g2 = r.g2_cross()?;
            let (eta_a, eta_b_star) = estimate_etas(r)?;
            Some(RateEstimates { g2_cross: g2, mu: estimate_mu_from_g2(g2)?, eta_a, eta_b_star })
        }
        None => None,
    };
    let rows: Vec<Vec<String>> = report.p.iter().enumerate().map(|(r, p)| vec![r.to_string(), num(*p)]).collect();
    out.csv("pstats.csv", prov, &["r", "p_r"], &rows)?;
    out.json("pstats.json", prov, &PstatsOutput { report: &report, monte_carlo, rates })?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct FitReport {
    label: String,
    input: String,
    fit: Option<EchoFit>,
    contrast: Option<Contrast>,
    error: Option<String>,
}

/// Contrast of each analysed histogram under the selected corrections.
#[derive(Debug, Clone, Serialize)]
pub struct Selected {
    pub label: String,
    pub contrast: Option<Contrast>,
    pub error: Option<String>,
}

fn label_for(path: &Path, meta_label: Option<String>) -> String {
    meta_label.unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Fits every histogram; returns the corrections applied and the selected contrasts.
pub fn analyze(
    cfg: &AnalyzeConfig,
    prov: &Provenance,
    out: &mut OutputDir,
) -> Result<(Corrections, Vec<Selected>), CliError> {
    if cfg.histograms.is_empty() {
        return Err(CliError::Config("no histograms to analyse".into()));
    }
    let mut histograms: Vec<(String, TimeHistogram)> = Vec::new();
    let mut inputs = Vec::new();
    let mut detector = cfg.detector_fwhm;
    for path in &cfg.histograms {
        let (h, meta) = read_histogram(path)?;
        match (cfg.detector_fwhm, detector) {
            (Some(_), _) => {}
            (None, None) => detector = Some(meta.detector_fwhm),
            (None, Some(d)) if d != meta.detector_fwhm => {
                return Err(CliError::Config(format!(
                    "{}: detector FWHM {:e} s differs from {d:e} s; set analyze.detector_fwhm",
                    path.display(),
                    meta.detector_fwhm
                )))
            }
            _ => {}
        }
        let label = label_for(path, meta.label);
        if histograms.iter().any(|(l, _)| *l == label) {
            return Err(CliError::Config(format!("duplicate histogram label {label:?}")));
        }
        inputs.push((label.clone(), path.display().to_string()));
        histograms.push((label, h));
    }
    let detector = detector.unwrap_or(afc_core::echo_analysis::DEFAULT_DETECTOR_FWHM);
    let corrections = Corrections {
        subtract_background: cfg.subtract_background,
        deconvolve: cfg.deconvolve,
        detector_fwhm: detector,
    };

    let rows: Vec<SweepRow> = contrast_vs_param_sweep(&histograms, detector);
    let mut reports = Vec::new();
    let mut selected = Vec::new();
    for row in &rows {
        let (_, h) = histograms.iter().find(|(l, _)| *l == row.label).expect("row label from input");
        let input = inputs.iter().find(|(l, _)| *l == row.label).map(|(_, p)| p.clone()).unwrap_or_default();
        let (fit, contrast, error) = match fit_echo(h) {
            Ok(fit) => match echo_contrast(&fit, &corrections) {
                Ok(c) => (Some(fit), Some(c), None),
                Err(e) => (Some(fit), None, Some(e.to_string())),
            },
            Err(e) => (None, None, Some(e.to_string())),
        };
        selected.push(Selected { label: row.label.clone(), contrast, error: error.clone() });
        reports.push(FitReport { label: row.label.clone(), input, fit, contrast, error });
    }

    let columns = [
        "label",
        "r_raw",
        "sigma_raw",
        "r_subtracted",
        "sigma_subtracted",
        "r_deconvolved",
        "sigma_deconvolved",
        "error",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                opt(r.r_raw),
                opt(r.sigma_raw),
                opt(r.r_subtracted),
                opt(r.sigma_subtracted),
                opt(r.r_deconvolved),
                opt(r.sigma_deconvolved),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.csv("analyze.csv", prov, &columns, &table)?;

    #[derive(Serialize)]
    struct AnalyzeOutput<'a> {
        corrections: Corrections,
        fits: &'a [FitReport],
    }
    out.json("fits.json", prov, &AnalyzeOutput { corrections, fits: &reports })?;
    Ok((corrections, selected))
}

#[derive(Debug, Serialize)]
struct Curve {
    p2: f64,
    points: Vec<CurvePoint>,
}

#[derive(Debug, Serialize)]
struct BoundOutput {
    certificate: DepthBoundResult,
    curves: Vec<Curve>,
}

fn solver_options(cfg: &BoundConfig, seed: u64) -> SolverOptions {
    SolverOptions { starts: cfg.starts, seed, ..SolverOptions::default() }
}

pub fn bound(cfg: &BoundConfig, seed: u64, prov: &Provenance, out: &mut OutputDir) -> Result<DepthBoundResult, CliError> {
    let opts = solver_options(cfg, seed);
    let budget = ExcitationBudget64::new(cfg.n_teeth, cfg.p1, cfg.p2)?;
    let certificate = certify_depth_with(cfg.r, cfg.sigma_r, &budget, &opts)?;
    log::info!("M_lower = {} (interval {:?})", certificate.m_lower, certificate.m_lower_interval);

    let mut curves = Vec::new();
    if !cfg.curve_depths.is_empty() {
        let mut p2s = cfg.curve_p2.clone();
        p2s.push(cfg.p2);
        p2s.sort_by(f64::total_cmp);
        p2s.dedup();
        for p2 in p2s {
            let b = ExcitationBudget64::new(cfg.n_teeth, cfg.p1, p2)?;
            curves.push(Curve { p2, points: bound_curve(&b, &cfg.curve_depths, &opts)? });
        }
        let rows: Vec<Vec<String>> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(move |p| vec![num(c.p2), p.depth.to_string(), num(p.max_r)]))
            .collect();
        out.csv("bound_curve.csv", prov, &["p2", "depth", "max_r"], &rows)?;
    }
    let output = BoundOutput { certificate, curves };
    out.json("bound.json", prov, &output)?;
    Ok(output.certificate)
}

#[derive(Debug, Serialize)]
struct AtomsReport {
    material: MaterialParams<f64>,
    theta_t: f64,
    theta_i: f64,
    single_atom_depth: f64,
    n_t_absorption: f64,
    n_t_singleion: f64,
    /// `N_t^(2) / N_t^(1)`.
    ratio: f64,
}

pub fn atoms(cfg: &MaterialConfig, prov: &Provenance, out: &mut OutputDir) -> Result<(), CliError> {
    let material = cfg.material()?;
    let theta_t = cfg.theta_t.unwrap_or(DEFAULT_THETA_T);
    let n1 = atoms_per_tooth_absorption(&material, theta_t)?;
    let n2 = atoms_per_tooth_singleion(&material, theta_t)?;
    let report = AtomsReport {
        material,
        theta_t,
        theta_i: material.integrated_absorption(),
        single_atom_depth: material.single_atom_depth(),
        n_t_absorption: n1,
        n_t_singleion: n2,
        ratio: n2 / n1,
    };
    out.json("atoms.json", prov, &report)
}

#[derive(Debug, Serialize)]
struct PipelineSummary {
    label: String,
    corrections: Corrections,
    r: f64,
    sigma_r: f64,
    n_teeth: usize,
    p1: f64,
    p2: f64,
    m_lower: usize,
    m_lower_interval: (usize, usize),
    linear_bound: f64,
}

pub fn pipeline(cfg: &Config, seed: u64, prov: &Provenance, out: &mut OutputDir) -> Result<(), CliError> {
    let stats = pstats(&cfg.pstats, seed, prov, out)?;
    let (corrections, selected) = analyze(&cfg.analyze, prov, out)?;
    let chosen = match &cfg.pipeline.label {
        Some(label) => selected
            .iter()
            .find(|s| s.label == *label)
            .ok_or_else(|| CliError::Config(format!("no analysed histogram is labelled {label:?}")))?,
        None if selected.len() == 1 => &selected[0],
        None => return Err(CliError::Config("pipeline.label must name one of several histograms".into())),
    };
    let contrast = match (&chosen.contrast, &chosen.error) {
        (Some(c), _) => *c,
        (None, e) => {
            return Err(CliError::Core(Error::LowSignal(format!(
                "{}: {}",
                chosen.label,
                e.as_deref().unwrap_or("no contrast")
            ))))
        }
    };
    let bound_cfg = BoundConfig {
        r: contrast.r,
        sigma_r: contrast.sigma_r,
        n_teeth: cfg.pipeline.n_teeth.unwrap_or(cfg.bound.n_teeth),
        p1: stats.p1,
        p2: stats.p2,
        ..cfg.bound.clone()
    };
    let cert = bound(&bound_cfg, seed, prov, out)?;
    let summary = PipelineSummary {
        label: chosen.label.clone(),
        corrections,
        r: contrast.r,
        sigma_r: contrast.sigma_r,
        n_teeth: bound_cfg.n_teeth,
        p1: stats.p1,
        p2: stats.p2,
        m_lower: cert.m_lower,
        m_lower_interval: cert.m_lower_interval,
        linear_bound: cert.linear_bound,
    };
    out.json("pipeline.json", prov, &summary)
}
