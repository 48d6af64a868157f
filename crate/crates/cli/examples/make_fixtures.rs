//! Regenerates `tests/fixtures`: synthetic histograms for the tooth-count
//! sweep, a pipeline config and a manifest of model-derived expectations.
//!
//!     cargo run --release -p afc-cli --example make_fixtures

use std::path::Path;

use afc_core::depth_bound::{DepthCertifier, SolverOptions};
use afc_core::echo_analysis::io::{histogram_csv, write_histogram, HistogramMeta};
use afc_core::echo_analysis::synth::{SyntheticEcho, FIXTURE_TEETH};
use afc_core::echo_analysis::Corrections;
use afc_core::photon_stats::excitation_probabilities;
use afc_core::ExcitationBudget64;
use afc_cli::config::PstatsConfig;
use afc_cli::output::sha256_hex;
use serde_json::json;

const PIPELINE_TEETH: usize = 564;

const PIPELINE_TOML: &str = r#"# End-to-end run on the bundled sweep fixtures.
seed = 0

[analyze]
histograms = ["n30.csv", "n60.csv", "n100.csv", "n200.csv", "n300.csv", "n408.csv", "n500.csv", "n564.csv"]
subtract_background = true
deconvolve = true

[pipeline]
label = "N=564"

[bound]
n_teeth = 564
starts = 200
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir)?;
    let base = SyntheticEcho::default();
    let mut fixtures = Vec::new();
    for n in FIXTURE_TEETH {
        let cfg = SyntheticEcho::with_teeth(n);
        let seed = n as u64;
        let h = cfg.sample(seed)?;
        let label = format!("N={n}");
        let file = format!("n{n}.csv");
        let meta = HistogramMeta::for_histogram(&h, cfg.detector_fwhm, Some(label.clone()));
        write_histogram(&dir.join(&file), &h, &meta)?;
        let sidecar = std::fs::read(dir.join(format!("n{n}.json")))?;
        fixtures.push(json!({
            "label": label,
            "file": file,
            "teeth": n,
            "seed": seed,
            "csv_sha256": sha256_hex(histogram_csv(&h).as_bytes()),
            "sidecar_sha256": sha256_hex(&sidecar),
            "storage_time": cfg.storage_time(),
            "measured_fwhm": cfg.measured_fwhm(),
            "expected": {
                "raw": cfg.expected_contrast(&Corrections::raw()),
                "subtracted": cfg.expected_contrast(&Corrections::subtracted()),
                "deconvolved": cfg.expected_contrast(&Corrections::full()),
            },
        }));
    }
    std::fs::write(dir.join("pipeline.toml"), PIPELINE_TOML)?;

    let channel = PstatsConfig::default().channel.channel()?;
    let probs = excitation_probabilities(&channel, 2)?;
    let r_true = SyntheticEcho::with_teeth(PIPELINE_TEETH).expected_contrast(&Corrections::full());
    let budget = ExcitationBudget64::new(PIPELINE_TEETH, probs.p1(), probs.p2())?;
    let certifier = DepthCertifier::new(budget, SolverOptions::default());
    let m_true = certifier.smallest_depth(r_true)?.ok_or("model contrast above every depth")?;

    let manifest = json!({
        "generator": base,
        "fixtures": fixtures,
        "pipeline": {
            "config": "pipeline.toml",
            "label": format!("N={PIPELINE_TEETH}"),
            "n_teeth": PIPELINE_TEETH,
            "p1": probs.p1(),
            "p2": probs.p2(),
            "r_deconvolved_model": r_true,
            "m_lower_model": m_true,
        },
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
