//! `robreg`: generate contaminated samples, fit, sweep and run the
//! verification suites.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use robreg_core::datagen::{contaminate, generate_clean, ols, oracle_ols};
use robreg_core::io::{self, FitMode, RunConfig, SweepRow};
use robreg_core::rng::{derive_seed, PURPOSE_DATA};
use robreg_core::suites::{self, Scale};
use robreg_core::{adaptive_fit, robust_regression, Error, LabeledDataset, Profile, SpectralInputs, Vector};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "robreg", version, about = "Robust heavy-tailed linear regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured constant profile.
    #[arg(long)]
    profile: Option<Profile>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a clean sample and contaminate it.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a dataset file.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset (`.csv` or binary).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: Option<FitMode>,
    },
    /// Robust, OLS and oracle-OLS errors over a grid of settings.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Runs a verification suite and prints one line per criterion.
    Verify {
        /// One of kl, eigen, mw, rounding, init, descent, end-to-end, adaptive, all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Runs about a tenth of the instances.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(core) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return EXIT_FAILED;
    };
    if core.is_numerical() {
        return EXIT_NUMERICAL;
    }
    match core {
        Error::Io(io::IoError::Io(_)) => EXIT_FAILED,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate { common } => generate(&common).map(|_| 0),
        Command::Fit { common, data, mode } => fit(&common, &data, mode).map(|_| 0),
        Command::Sweep { common, jobs } => sweep(&common, jobs).map(|_| 0),
        Command::Verify { suite, quick, seed, out } => verify(&suite, quick, seed, out.as_deref()),
    }
}

fn core<T, E: Into<Error>>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let Some(path) = &common.config else {
        bail!("--config is required");
    };
    let mut cfg = core(RunConfig::load(path)).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(profile) = common.profile {
        cfg.fit.profile = profile;
    }
    Ok(cfg)
}

/// SHA-256 of the canonical TOML of the effective configuration.
fn config_hash(cfg: &RunConfig) -> Result<String> {
    let text = core(cfg.to_toml())?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
    let mut text = format!(
        "tool = robreg {}\ncommand = {command}\nseed = {}\nconfig_hash = {}\nsweep_schema = {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        config_hash(cfg)?,
        io::SWEEP_SCHEMA_VERSION,
    );
    for (k, v) in extra {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

fn simulate(cfg: &RunConfig, seed: u64) -> Result<LabeledDataset> {
    let dims = core(cfg.dims())?;
    let dist = core(cfg.distribution())?;
    let b_star = core(cfg.b_star())?;
    let clean = core(generate_clean(&dims, &dist, &b_star, seed))?;
    core(contaminate(&clean, &cfg.strategy(), dims.outliers, seed))
}

fn generate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    fs::create_dir_all(&common.out)?;
    let data = simulate(&cfg, cfg.seed)?;
    core(io::write_dataset_csv(&data, create(&common.out.join("dataset.csv"))?))?;
    core(io::write_dataset_binary(&data, create(&common.out.join("dataset.rrds"))?))?;
    write_manifest(
        &common.out,
        "generate",
        &cfg,
        &[("rows", data.len().to_string()), ("corrupted", data.corrupted_count().to_string())],
    )?;
    println!("wrote {} rows ({} corrupted) to {}", data.len(), data.corrupted_count(), common.out.display());
    Ok(())
}

/// `|Ξ|` of the configured law, the default noise scale.
fn default_zeta(cfg: &RunConfig) -> Result<f64> {
    let dist = core(cfg.distribution())?;
    let xi = core(dist.noise_covariance(200_000, derive_seed(cfg.seed, &[PURPOSE_DATA, 0x78])))?;
    let top = nalgebra::SymmetricEigen::new(xi).eigenvalues.max();
    Ok(top.max(f64::MIN_POSITIVE))
}

fn fit(common: &Common, data_path: &Path, mode: Option<FitMode>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(m) = mode {
        cfg.fit.mode = m;
    }
    let mut data = core(io::load_dataset(data_path)).with_context(|| format!("reading {}", data_path.display()))?;
    if data.ground_truth_b.is_none() && cfg.data.b_star.is_some() {
        data.ground_truth_b = Some(core(cfg.b_star())?);
    }
    let settings = cfg.fit_settings();
    let consts = core(cfg.constants())?;
    let spectral = spectral_of(&cfg)?;
    fs::create_dir_all(&common.out)?;
    let (fit, extra) = match cfg.fit.mode {
        FitMode::FixedR1 => {
            let noise = cfg.noise_level(default_zeta(&cfg)?);
            let fit = core(robust_regression(&data, &settings, noise, &consts, &spectral, cfg.seed))?;
            (fit, vec![("mode", "fixed-r1".to_string())])
        }
        FitMode::Adaptive => {
            let grid = core(cfg.grid())?;
            let ad = core(adaptive_fit(&data, &settings, &grid, &consts, &spectral, cfg.seed))?;
            core(io::write_lepski_table(&ad, create(&common.out.join("lepski.csv"))?))?;
            let extra = vec![
                ("mode", "adaptive".to_string()),
                ("chosen_level", ad.chosen.to_string()),
                ("levels", ad.levels.len().to_string()),
            ];
            let mut fit = ad.levels[ad.chosen - 1].fit.clone();
            fit.flags.extend(ad.flags);
            (fit, extra)
        }
    };
    core(io::write_fit_log(&fit, create(&common.out.join("fit_log.csv"))?))?;
    core(io::write_vector_csv(&fit.b_hat, create(&common.out.join("b_hat.csv"))?))?;
    let mut extra = extra;
    extra.push(("accepted_steps", fit.accepted_steps.to_string()));
    extra.push(("flags", fit.flags.join("; ")));
    write_manifest(&common.out, "fit", &cfg, &extra)?;
    println!(
        "{} of {} outer steps accepted; b_hat = {}",
        fit.accepted_steps,
        fit.iterates.len(),
        fmt_vector(&fit.b_hat)
    );
    for f in &fit.flags {
        println!("flag: {f}");
    }
    Ok(())
}

fn fmt_vector(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Diagonal `Σ` from the configuration.
fn spectral_of(cfg: &RunConfig) -> Result<SpectralInputs> {
    let diag = cfg.data.sigma_diag.clone().unwrap_or_else(|| vec![1.0; cfg.data.p]);
    let low = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let high = diag.iter().cloned().fold(0.0, f64::max);
    core(SpectralInputs::new(1.0 / low, high))
}

fn sweep(common: &Common, jobs: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let Some(grid) = cfg.sweep.clone() else {
        return Err(anyhow::Error::new(Error::Config(robreg_core::ConfigError::Invalid(
            "sweep needs a [sweep] table".into(),
        ))));
    };
    let mut cells = Vec::new();
    for &n in &grid.n {
        for &p in &grid.p {
            for &eps in &grid.eps {
                for &strategy in &grid.strategies {
                    for s in 0..grid.seeds {
                        cells.push((n, p, eps, strategy, s));
                    }
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let rows: Vec<Result<SweepRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, p, eps, strategy, s)| {
                let mut cell = cfg.clone();
                cell.data.n = n;
                cell.data.p = p;
                cell.data.eps = eps;
                cell.data.strategy = strategy;
                if cell.data.b_star.as_ref().is_some_and(|b| b.len() != p) {
                    cell.data.b_star = None;
                }
                if cell.data.sigma_diag.as_ref().is_some_and(|d| d.len() != p) {
                    cell.data.sigma_diag = None;
                }
                if cell.fit.buckets.is_some_and(|k| n % k != 0) {
                    cell.fit.buckets = None;
                }
                let seed = derive_seed(cfg.seed, &[PURPOSE_DATA, n as u64, p as u64, s]);
                let data = simulate(&cell, seed)?;
                let truth = core(cell.b_star())?;
                let noise = cell.noise_level(default_zeta(&cell)?);
                let consts = core(cell.constants())?;
                let fit = core(robust_regression(
                    &data,
                    &cell.fit_settings(),
                    noise,
                    &consts,
                    &spectral_of(&cell)?,
                    seed,
                ))?;
                Ok(SweepRow {
                    n,
                    p,
                    eps,
                    strategy,
                    seed: s,
                    err_robust: (&fit.b_hat - &truth).norm(),
                    err_ols: (ols(&data) - &truth).norm(),
                    err_oracle_ols: (oracle_ols(&data) - &truth).norm(),
                })
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;
    fs::create_dir_all(&common.out)?;
    core(io::write_sweep_csv(&rows, create(&common.out.join("summary.csv"))?))?;
    write_manifest(&common.out, "sweep", &cfg, &[("cells", rows.len().to_string())])?;
    println!("wrote {} sweep rows to {}", rows.len(), common.out.display());
    Ok(())
}

fn verify(name: &str, quick: bool, seed: u64, out: Option<&Path>) -> Result<u8> {
    let scale = if quick { Scale::Quick } else { Scale::Full };
    let Some(outcomes) = suites::run_suite(name, scale, seed) else {
        return Err(anyhow::Error::new(Error::Config(robreg_core::ConfigError::Invalid(format!(
            "unknown suite {name:?}; expected one of {}",
            suites::SUITE_NAMES.join(", ")
        )))));
    };
    for o in &outcomes {
        println!("{o}");
    }
    if let Some(path) = out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["criterion", "name", "passed", "seconds", "detail"])?;
        for o in &outcomes {
            w.write_record([
                o.id.to_string(),
                o.name.to_string(),
                u8::from(o.passed).to_string(),
                format!("{:.3}", o.elapsed.as_secs_f64()),
                o.detail.clone(),
            ])?;
        }
        w.flush()?;
    }
    Ok(if outcomes.iter().all(|o| o.passed) { 0 } else { EXIT_FAILED })
}
