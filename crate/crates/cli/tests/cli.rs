use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use afc_cli::output::sha256_hex;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn afc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afc")).current_dir(dir).args(args).output().expect("afc runs")
}

fn result(path: &Path) -> Value {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(doc["provenance"]["version"].is_string());
    doc["result"].clone()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# afc "), "missing provenance header in {}", path.display());
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn error_kind(out: &Output) -> String {
    let err: Value = serde_json::from_slice(&out.stderr).expect("structured error on stderr");
    err["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn bound_on_defaults_certifies_reference_depth() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bound.toml"),
        "[bound]\nr = 256.7\nsigma_r = 8.7\nn_teeth = 564\np1 = 3.5e-3\np2 = 2.6e-8\n",
    )
    .unwrap();
    let out = afc(tmp.path(), &["--config", "bound.toml", "--out", "o", "bound"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = &result(&tmp.path().join("o/bound.json"))["certificate"];
    let m = cert["m_lower"].as_u64().unwrap();
    assert!((218..=240).contains(&m), "M_lower = {m}");
    assert!((cert["linear_bound"].as_f64().unwrap() - 219.96).abs() < 1e-2);
}

#[test]
fn bound_curves_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.toml"),
        "[bound]\ncurve_depths = [50, 100]\ncurve_p2 = [0.0, 2e-7]\n",
    )
    .unwrap();
    let out = afc(tmp.path(), &["--config", "c.toml", "--out", "o", "--starts", "20", "bound"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("o/bound_curve.csv"));
    assert_eq!(rows.len(), 6);
    // higher P2 gives a weaker bound: larger max_R at each depth
    let at = |p2: &str, m: &str| -> f64 {
        rows.iter().find(|r| r[0] == p2 && r[1] == m).map(|r| r[2].parse().unwrap()).unwrap()
    };
    for m in ["50", "100"] {
        assert!(at("0", m) < at("0.000000026", m) && at("0.000000026", m) < at("0.0000002", m));
    }
}

#[test]
fn simulate_ideal_nine_tooth_row() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("s.toml"), "[simulate]\nteeth = [9]\n").unwrap();
    let out = afc(tmp.path(), &["--config", "s.toml", "--out", "o", "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("o/r_vs_n.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "9");
    assert!((rows[0][2].parse::<f64>().unwrap() - 9.0).abs() < 1e-9);
    let trace = csv_rows(&tmp.path().join("o/emission_trace.csv"));
    assert_eq!(trace.len(), 1001);
}

#[test]
fn simulate_depth_jitter_follows_seed() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("s.toml"), "[simulate]\nteeth = [30]\ndepth_jitter = 0.3\n").unwrap();
    let run = |seed: &str, dir: &str| {
        let out = afc(tmp.path(), &["--config", "s.toml", "--out", dir, "--seed", seed, "simulate"]);
        assert!(out.status.success());
        csv_rows(&tmp.path().join(dir).join("r_vs_n.csv"))[0][2].clone()
    };
    let (a, b, c) = (run("1", "a"), run("1", "b"), run("2", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.parse::<f64>().unwrap() < 30.0);
}

#[test]
fn pstats_reports_reference_probabilities() {
    let tmp = tempfile::tempdir().unwrap();
    let out = afc(tmp.path(), &["--out", "o", "pstats"]);
    assert!(out.status.success());
    let r = result(&tmp.path().join("o/pstats.json"));
    assert!((r["p1"].as_f64().unwrap() / 3.5e-3 - 1.0).abs() < 0.02);
    assert!((r["p2"].as_f64().unwrap() / 2.55e-8 - 1.0).abs() < 0.1);
    let poisson = afc(tmp.path(), &["--out", "p", "--stats-model", "poisson", "pstats"]);
    assert!(poisson.status.success());
    let rp = result(&tmp.path().join("p/pstats.json"));
    assert_eq!(rp["channel"]["statistics"], "poisson");
    assert!(rp["p2"].as_f64().unwrap() < r["p2"].as_f64().unwrap());
}

#[test]
fn pstats_monte_carlo_and_rates() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("p.toml"),
        "[pstats]\nmc_trials = 200000\n[pstats.channel]\nmu = 0.05\neta_a = 0.5\neta_b = 0.5\neta_w = 0.5\neta_t = 0.5\n\
         [pstats.rates]\nC_ab = 100.0\nS_a = 1e4\nS_b = 2e4\ntau_p = 1e-9\n",
    )
    .unwrap();
    let out = afc(tmp.path(), &["--config", "p.toml", "--out", "o", "pstats"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = result(&tmp.path().join("o/pstats.json"));
    let mc = &r["monte_carlo"];
    let (p1, s1) = (mc["p1"].as_f64().unwrap(), mc["sigma_p1"].as_f64().unwrap());
    assert!((p1 - r["p1"].as_f64().unwrap()).abs() < 4.0 * s1);
    assert!((r["rates"]["g2_cross"].as_f64().unwrap() - 500.0).abs() < 1e-9);
    assert!((r["rates"]["eta_a"].as_f64().unwrap() - 0.005).abs() < 1e-12);
}

#[test]
fn atoms_reports_both_estimators() {
    let tmp = tempfile::tempdir().unwrap();
    let out = afc(tmp.path(), &["--out", "o", "atoms"]);
    assert!(out.status.success());
    let r = result(&tmp.path().join("o/atoms.json"));
    assert!((r["n_t_absorption"].as_f64().unwrap() / 1.1e9 - 1.0).abs() < 0.1);
    assert!(r["n_t_singleion"].as_f64().unwrap() > 0.0);
}

#[test]
fn analyze_fixture_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let f = fixtures();
    let args: Vec<String> = ["n564.csv", "n30.csv", "n408.csv"].iter().map(|n| f.join(n).display().to_string()).collect();
    let mut argv = vec!["--out", "o", "analyze"];
    argv.extend(args.iter().map(String::as_str));
    let out = afc(tmp.path(), &argv);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("o/analyze.csv"));
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["N=30", "N=408", "N=564"]);
    let fits = result(&tmp.path().join("o/fits.json"));
    assert_eq!(fits["corrections"]["deconvolve"], false);
    // raw correction selected: per-fit contrast equals the raw column
    for (row, fit) in rows.iter().zip(fits["fits"].as_array().unwrap()) {
        let (a, b) = (row[1].parse::<f64>().unwrap(), fit["contrast"]["r"].as_f64().unwrap());
        assert!((a - b).abs() < 1e-14 * a, "{a} vs {b}");
    }
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/fits.json")).unwrap()).unwrap();
    let inputs = doc["provenance"]["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 6);
    for i in inputs {
        let bytes = std::fs::read(i["path"].as_str().unwrap()).unwrap();
        assert_eq!(i["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
}

#[test]
fn pipeline_matches_fixture_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let f = fixtures();
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(f.join("manifest.json")).unwrap()).unwrap();
    let config = f.join("pipeline.toml");
    let out = afc(tmp.path(), &["--config", config.to_str().unwrap(), "--out", "o", "pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = csv_rows(&tmp.path().join("o/analyze.csv"));
    for fx in manifest["fixtures"].as_array().unwrap() {
        let row = rows.iter().find(|r| r[0] == fx["label"].as_str().unwrap()).unwrap();
        for (col, key) in [(1, "raw"), (3, "subtracted"), (5, "deconvolved")] {
            let got: f64 = row[col].parse().unwrap();
            let sigma: f64 = row[col + 1].parse().unwrap();
            let want = fx["expected"][key].as_f64().unwrap();
            assert!((got - want).abs() < 3.0 * sigma, "{} {key}: {got} ± {sigma} vs {want}", row[0]);
        }
    }
    let p = &manifest["pipeline"];
    let summary = result(&tmp.path().join("o/pipeline.json"));
    assert_eq!(summary["label"], p["label"]);
    assert_eq!(summary["p1"], p["p1"]);
    assert_eq!(summary["p2"], p["p2"]);
    let (lo, hi) = (summary["m_lower_interval"][0].as_u64().unwrap(), summary["m_lower_interval"][1].as_u64().unwrap());
    let m_model = p["m_lower_model"].as_u64().unwrap();
    assert!(lo <= m_model && m_model <= hi, "model depth {m_model} outside [{lo}, {hi}]");
}

#[test]
fn fixture_files_match_manifest() {
    let f = fixtures();
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(f.join("manifest.json")).unwrap()).unwrap();
    for fx in manifest["fixtures"].as_array().unwrap() {
        let csv = f.join(fx["file"].as_str().unwrap());
        assert_eq!(sha256_hex(&std::fs::read(&csv).unwrap()), fx["csv_sha256"].as_str().unwrap());
        let side = csv.with_extension("json");
        assert_eq!(sha256_hex(&std::fs::read(&side).unwrap()), fx["sidecar_sha256"].as_str().unwrap());
    }
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "[bound\nr = 1").unwrap();
    std::fs::write(tmp.path().join("unknown.toml"), "[bound]\nrr = 1.0\n").unwrap();
    std::fs::write(tmp.path().join("missing.toml"), "[analyze]\nhistograms = [\"nope.csv\"]\n").unwrap();
    for cfg in ["bad.toml", "unknown.toml", "missing.toml", "absent.toml"] {
        let out = afc(tmp.path(), &["--config", cfg, "--out", "o", "analyze"]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        assert_eq!(error_kind(&out), "config");
    }
    let out = afc(tmp.path(), &["--stats-model", "binomial", "pstats"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn module_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("r.toml"), "[bound]\nr = 600.0\n").unwrap();
    let out = afc(tmp.path(), &["--config", "r.toml", "--out", "o", "bound"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "inconsistent");

    std::fs::write(tmp.path().join("p.toml"), "[pstats.channel]\nmu = 0.001\neta_a = 1.5\neta_b = 0.1\neta_w = 0.3\neta_t = 0.3\n")
        .unwrap();
    let out = afc(tmp.path(), &["--config", "p.toml", "--out", "o", "pstats"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "domain");
}

#[test]
fn pipeline_fails_on_unusable_histogram() {
    let tmp = tempfile::tempdir().unwrap();
    // flat counts: no echo to fit
    let mut csv = String::from("bin_start_s,counts\n");
    for i in 0..3000 {
        csv.push_str(&format!("{:e},1\n", (i as f64 - 1000.0) * 80e-12));
    }
    std::fs::write(tmp.path().join("flat.csv"), csv).unwrap();
    std::fs::write(
        tmp.path().join("flat.json"),
        r#"{"bin_width": 8e-11, "herald_index": 1000, "storage_time": 5e-8}"#,
    )
    .unwrap();
    let out = afc(tmp.path(), &["--out", "o", "analyze", "flat.csv"]);
    assert!(out.status.success());
    let rows = csv_rows(&tmp.path().join("o/analyze.csv"));
    assert!(rows[0][7].contains("low signal"));

    let out = afc(tmp.path(), &["--out", "p", "--starts", "5", "pipeline", "flat.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "low_signal");
}

#[test]
fn repeated_pipeline_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixtures().join("pipeline.toml");
    for dir in ["a", "b"] {
        let out = afc(tmp.path(), &["--config", config.to_str().unwrap(), "--out", dir, "--starts", "40", "pipeline"]);
        assert!(out.status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(tmp.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        let a = std::fs::read(tmp.path().join("a").join(&n)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }
}
