use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gmc_core::chaos::{chaos_density_to, Gamma};
use gmc_core::estimators::d_gamma;
use gmc_core::sampler::sample_hierarchy;
use gmc_core::spectral::fourier_coefficients;
use gmc_core::SeedRecord;
use gmc_harness::export::{export, load_json, write_blocks_csv, write_csv_file, write_json, write_spectrum_csv};
use gmc_harness::report::{block_statistics, clt_profile, summarize};
use gmc_harness::verify::run_verify;
use gmc_harness::{run_ensemble, ExperimentConfig};

#[derive(Parser)]
#[command(name = "gmc", version, about = "Gaussian multiplicative chaos experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact and closed-form self-checks.
    Verify,
    /// Sample one replica and write its density and spectrum as CSV.
    Simulate(RunArgs),
    /// Ensemble spectral statistics as CSV (or a JSON archive with --format json).
    Spectrum(RunArgs),
    /// Decay and correlation-dimension estimates as JSON.
    Dims(RunArgs),
    /// Rescaled-variance profile per frequency block as CSV.
    Clt(RunArgs),
    /// Re-derive fits from an archived ensemble.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat key=value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// mean, median or quantile(q)
    #[arg(long)]
    stat: Option<String>,
    #[arg(long)]
    block_lo: Option<usize>,
    #[arg(long)]
    block_hi: Option<usize>,
    /// Comma-separated depths for the norm probe.
    #[arg(long)]
    norm_depths: Option<String>,
    #[arg(long)]
    allow_shallow: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn build(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        let flags = [
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("grid", self.grid.map(|v| v.to_string())),
            ("n_max", self.nmax.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("replicas", self.reps.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("statistic", self.stat.clone()),
            ("block_lo", self.block_lo.map(|v| v.to_string())),
            ("block_hi", self.block_hi.map(|v| v.to_string())),
            ("norm_depths", self.norm_depths.clone()),
            ("output", self.out.as_ref().map(|p| p.display().to_string())),
            ("format", self.format.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, &v)?;
            }
        }
        if self.allow_shallow {
            c.allow_shallow = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn output_or(config: &ExperimentConfig, default: &str) -> PathBuf {
    config.output.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn simulate(c: &ExperimentConfig) -> anyhow::Result<()> {
    let dir = output_or(c, "gmc-simulate");
    let h = sample_hierarchy::<f64>(c.m, c.grid_spec()?, SeedRecord::new(c.seed, 0))?;
    let density = chaos_density_to(&h, Gamma::new(c.gamma)?, c.m)?;
    let spectrum = fourier_coefficients(&density, c.n_max)?;
    write_csv_file(&dir.join("density.csv"), |w| density.write_csv(w))?;
    write_csv_file(&dir.join("spectrum.csv"), |w| spectrum.write_csv(w))?;
    println!("total mass {}; wrote {}", density.total_mass(), dir.display());
    Ok(())
}

fn report(input: &Path, out: &Path) -> anyhow::Result<()> {
    let result = load_json(input)?;
    let summary = summarize(&result)?;
    write_json(&summary, &out.join("summary.json"))?;
    let blocks = block_statistics(&result, result.config.statistic)?;
    write_csv_file(&out.join("blocks.csv"), |w| write_blocks_csv(&blocks, w))?;
    write_csv_file(&out.join("spectrum.csv"), |w| write_spectrum_csv(&result, w))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Verify => {
            let checks = run_verify();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Simulate(args) => simulate(&args.build()?)?,
        Command::Spectrum(args) => {
            let c = args.build()?;
            let result = run_ensemble(&c)?;
            let path = output_or(&c, &format!("spectrum.{}", c.format));
            match c.format {
                gmc_harness::Format::Csv => write_csv_file(&path, |w| write_spectrum_csv(&result, w))?,
                gmc_harness::Format::Json => export(&result, c.format, c.statistic, &path)?,
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Dims(args) => {
            let c = args.build()?;
            let result = run_ensemble(&c)?;
            if let Some(path) = &c.output {
                export(&result, c.format, c.statistic, path)?;
            }
            let summary = summarize(&result)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("D_gamma = {}", d_gamma(c.gamma)?);
        }
        Command::Clt(args) => {
            let c = args.build()?;
            let result = run_ensemble(&c)?;
            let profile = clt_profile(&result, (c.block_lo, c.block_hi))?;
            match &c.output {
                Some(path) => write_csv_file(path, |w| write_blocks_csv(&profile, w))?,
                None => write_blocks_csv(&profile, std::io::stdout().lock()).context("writing to stdout")?,
            }
        }
        Command::Report { input, out } => {
            if !input.exists() {
                bail!("{} does not exist", input.display());
            }
            report(&input, &out)?
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
