//! `afc`: simulation, photon statistics, histogram analysis and
//! entanglement-depth certification for comb-memory echo experiments.
//!
//! Every output carries a provenance record and is byte-identical across
//! runs with the same inputs and seed.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use afc_core::photon_stats::SourceStatistics;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use config::Config;
use output::{sha256_hex, InputFile, OutputDir, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit code 2).
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] afc_core::Error),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
        }
    }

    /// `{"error": {"kind": …, "message": …}}`
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsModel {
    Thermal,
    Poisson,
}

impl From<StatsModel> for SourceStatistics {
    fn from(m: StatsModel) -> Self {
        match m {
            StatsModel::Thermal => SourceStatistics::Thermal,
            StatsModel::Poisson => SourceStatistics::Poisson,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "afc", version, about = "Comb-memory echo analysis and entanglement-depth bounds")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every random draw (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub subtract_background: bool,
    #[arg(long, global = true)]
    pub deconvolve: bool,
    /// Pair-number distribution of the source.
    #[arg(long, global = true, value_enum)]
    pub stats_model: Option<StatsModel>,
    /// Random solver starts per depth.
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Emission traces and contrast tables from the comb simulator.
    Simulate,
    /// Absorbed-photon-number probabilities of the heralded source.
    Pstats,
    /// Echo fits and contrasts of detection histograms.
    Analyze {
        /// Histogram CSV files (each with a JSON sidecar); replace the configured list.
        histograms: Vec<PathBuf>,
    },
    /// Certified entanglement depth and max-contrast curves.
    Bound,
    /// Atoms per tooth from the two estimators.
    Atoms,
    /// pstats, then analyze, then bound on the analysed contrast.
    Pipeline { histograms: Vec<PathBuf> },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pstats => "pstats",
            Command::Analyze { .. } => "analyze",
            Command::Bound => "bound",
            Command::Atoms => "atoms",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

/// Configuration after applying command-line overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config: Config,
    pub config_sha256: String,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let (mut config, hash) = match &cli.config {
            Some(path) => {
                let (c, bytes) = Config::load(path)?;
                (c, sha256_hex(&bytes))
            }
            None => (Config::default(), String::new()),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(0);
        config.seed = Some(seed);
        if let Command::Analyze { histograms } | Command::Pipeline { histograms } = &cli.command {
            if !histograms.is_empty() {
                config.analyze.histograms = histograms.clone();
            }
        }
        config.analyze.subtract_background |= cli.subtract_background;
        config.analyze.deconvolve |= cli.deconvolve;
        if let Some(m) = cli.stats_model {
            config.pstats.channel.stats_model = m.into();
        }
        if let Some(s) = cli.starts {
            config.bound.starts = s;
        }
        for p in &config.analyze.histograms {
            if !p.is_file() {
                return Err(CliError::Config(format!("histogram {} does not exist", p.display())));
            }
        }
        Ok(Self { command: cli.command.clone(), config, config_sha256: hash, seed, out: cli.out.clone() })
    }

    fn provenance(&self, inputs: Vec<InputFile>) -> Provenance {
        Provenance {
            tool: "afc",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.name().to_string(),
            seed: self.seed,
            config_sha256: self.config_sha256.clone(),
            inputs,
            config: self.relevant_config(),
        }
    }

    /// The seed and the config sections the subcommand reads.
    fn relevant_config(&self) -> serde_json::Value {
        let c = &self.config;
        fn v<T: serde::Serialize>(x: &T) -> serde_json::Value {
            serde_json::to_value(x).unwrap_or_default()
        }
        let mut map = serde_json::Map::new();
        map.insert("seed".into(), self.seed.into());
        let sections: Vec<(&str, serde_json::Value)> = match self.command {
            Command::Simulate => vec![("simulate", v(&c.simulate))],
            Command::Pstats => vec![("pstats", v(&c.pstats))],
            Command::Analyze { .. } => vec![("analyze", v(&c.analyze))],
            Command::Bound => vec![("bound", v(&c.bound))],
            Command::Atoms => vec![("atoms", v(&c.atoms))],
            Command::Pipeline { .. } => vec![
                ("pstats", v(&c.pstats)),
                ("analyze", v(&c.analyze)),
                ("bound", v(&c.bound)),
                ("pipeline", v(&c.pipeline)),
            ],
        };
        for (k, val) in sections {
            map.insert(k.into(), val);
        }
        serde_json::Value::Object(map)
    }
}

fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<InputFile>, CliError> {
    let mut out = Vec::new();
    for csv in paths {
        for p in [csv.clone(), afc_core::echo_analysis::io::sidecar_path(csv)] {
            let bytes = std::fs::read(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            out.push(InputFile { path: p.display().to_string(), sha256: sha256_hex(&bytes) });
        }
    }
    Ok(out)
}

/// Runs one subcommand and returns the files written.
pub fn run(rc: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut out = OutputDir::create(&rc.out)?;
    let inputs = match rc.command {
        Command::Analyze { .. } | Command::Pipeline { .. } => hash_inputs(&rc.config.analyze.histograms)?,
        _ => Vec::new(),
    };
    let prov = rc.provenance(inputs);
    let cfg = &rc.config;
    match rc.command {
        Command::Simulate => commands::simulate(&cfg.simulate, rc.seed, &prov, &mut out)?,
        Command::Pstats => {
            commands::pstats(&cfg.pstats, rc.seed, &prov, &mut out)?;
        }
        Command::Analyze { .. } => {
            commands::analyze(&cfg.analyze, &prov, &mut out)?;
        }
        Command::Bound => {
            commands::bound(&cfg.bound, rc.seed, &prov, &mut out)?;
        }
        Command::Atoms => commands::atoms(&cfg.atoms, &prov, &mut out)?,
        Command::Pipeline { .. } => commands::pipeline(cfg, rc.seed, &prov, &mut out)?,
    }
    Ok(out.written)
}

/// Parses arguments, runs, and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match RunConfig::from_cli(&cli).and_then(|rc| run(&rc)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
