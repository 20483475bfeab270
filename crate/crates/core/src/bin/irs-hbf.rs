use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use irs_hbf::harness::verify::{
    analog_search_batch, irs_search_batch, reflection_bound_batch, BatchSettings,
};
use irs_hbf::harness::{
    named_experiment, run_experiment, write_experiment, Architecture, Design, ExperimentResult,
    OutputFormat, Sweep, SweepParam, SystemConfig,
};
use irs_hbf::oracle::{
    asymptotics_probe, write_reports_jsonl, OracleReport, ProbeRow, ProbeSettings, ProbeSize,
};
use irs_hbf::{Error, Result};

#[derive(Parser)]
#[command(
    name = "irs-hbf",
    version,
    about = "IRS-assisted hybrid beamforming simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials (or instances).
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, env = "IRS_HBF_OUT_DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment (fig2, fig3, fig4, fig6, fig7, fig8) or a custom sweep.
    Run {
        /// Experiment name, or `custom` together with --sweep-param and --values.
        experiment: String,
        /// JSON system configuration; command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        sweep_param: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run oracle certificate batches and write them as JSON lines.
    Verify {
        /// reflection, irs, analog or all.
        #[arg(default_value = "all")]
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate large-array convergence statistics.
    Probe {
        /// Comma-separated array sizes, used for both the transmitter and the IRS.
        #[arg(long, value_delimiter = ',', default_values_t = vec![16usize, 64, 256])]
        sizes: Vec<usize>,
        /// Receive antennas.
        #[arg(long, default_value_t = 16)]
        rx_antennas: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })
}

fn print_table(result: &ExperimentResult) {
    println!(
        "{:>14} {:>12} {:>14} {:>10} {:>9} {:>6} {:>6}",
        result.sweep_param.name(),
        "design",
        "architecture",
        "mean_se",
        "stderr",
        "n",
        "degen"
    );
    for c in &result.cells {
        println!(
            "{:>14} {:>12} {:>14} {:>10.4} {:>9.4} {:>6} {:>6}",
            c.sweep_value,
            c.design,
            c.architecture,
            c.mean_se_bps_hz,
            c.stderr,
            c.n_trials,
            c.n_degenerate
        );
    }
}

fn run(
    experiment: &str,
    config: Option<&Path>,
    sweep_param: Option<&str>,
    values: Vec<f64>,
    common: &Common,
) -> Result<bool> {
    let mut cfg = match config {
        Some(p) => SystemConfig::from_file(p)?,
        None => SystemConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    let sweep = if experiment == "custom" {
        let name = sweep_param
            .ok_or_else(|| Error::config("sweep_param", "required for a custom sweep"))?;
        Sweep::new(SweepParam::parse(name)?, values)?
    } else {
        let e = named_experiment(experiment)?;
        if let Some(k) = e.subcarriers {
            cfg.subcarriers = k;
        }
        e.sweep
    };
    cfg.validate()?;
    let result = run_experiment(experiment, &cfg, &sweep)?;
    print_table(&result);
    let written = write_experiment(&result, &common.out, common.format)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!(
        "{} trials per point, {} padded, {:.2} s",
        cfg.trials, result.padded_trials, result.wall_time_s
    );
    if let (Some(p), Some(r)) = (
        result.cells.iter().find(|c| {
            c.design == Design::Proposed.name() && c.architecture == Architecture::Hybrid.name()
        }),
        result.cells.iter().find(|c| {
            c.design == Design::RandomIrs.name() && c.architecture == Architecture::Hybrid.name()
        }),
    ) {
        println!(
            "first point: proposed hybrid {:.3} vs random IRS hybrid {:.3}",
            p.mean_se_bps_hz, r.mean_se_bps_hz
        );
    }
    if result.invariant_violations.is_empty() {
        println!("invariant battery: clean");
        Ok(true)
    } else {
        eprintln!(
            "invariant battery: {} violations",
            result.invariant_violations.len()
        );
        for v in result.invariant_violations.iter().take(10) {
            eprintln!("  {v}");
        }
        Ok(false)
    }
}

fn summarize(kind: &str, reports: &[OracleReport], dir: &Path) -> Result<bool> {
    let path = dir.join(format!("verify_{kind}.jsonl"));
    let file = std::fs::File::create(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    write_reports_jsonl(reports, std::io::BufWriter::new(file)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let passed = reports.iter().filter(|r| r.pass).count();
    let worst = reports.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    println!(
        "{kind}: {passed}/{} passed, smallest gap {worst:.3e}, wrote {}",
        reports.len(),
        path.display()
    );
    Ok(passed == reports.len())
}

fn verify(kind: &str, common: &Common) -> Result<bool> {
    let seed = common.seed.unwrap_or(1);
    create_dir(&common.out)?;
    let kinds: Vec<&str> = match kind {
        "all" => vec!["reflection", "irs", "analog"],
        "reflection" | "irs" | "analog" => vec![kind],
        _ => {
            return Err(Error::config(
                "kind",
                format!("unknown certificate `{kind}`"),
            ))
        }
    };
    let mut ok = true;
    for k in kinds {
        let reports = match k {
            "reflection" => reflection_bound_batch(
                &BatchSettings::REFLECTION_BOUND,
                common.trials.unwrap_or(1000),
                seed,
            )?,
            "irs" => irs_search_batch(
                &BatchSettings::IRS_SEARCH,
                common.trials.unwrap_or(100),
                8,
                100,
                seed,
            )?,
            _ => analog_search_batch(
                &BatchSettings::ANALOG_SEARCH,
                common.trials.unwrap_or(200),
                2,
                seed,
            )?,
        };
        ok &= summarize(k, &reports, &common.out)?;
    }
    Ok(ok)
}

fn probe(sizes: &[usize], rx_antennas: usize, common: &Common) -> Result<bool> {
    let sizes: Vec<ProbeSize> = sizes
        .iter()
        .map(|&n| ProbeSize {
            n_t: n,
            n_r: rx_antennas,
            m: n,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(1));
    let rows = asymptotics_probe(
        &sizes,
        common.trials.unwrap_or(500),
        &ProbeSettings::default(),
        &mut rng,
    )?;
    println!(
        "{:>6} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "N_t", "N_r", "M", "cross", "refl_ratio", "eig_error", "orth_resid"
    );
    for r in &rows {
        println!(
            "{:>6} {:>6} {:>6} {:>12.5} {:>12.5} {:>12.5} {:>12.5}",
            r.n_t,
            r.n_r,
            r.m,
            r.mean_cross_inner_product,
            r.median_reflection_ratio,
            r.median_eigenvalue_error,
            r.median_orthogonality_residual
        );
    }
    create_dir(&common.out)?;
    let path = common
        .out
        .join(format!("probe.{}", common.format.extension()));
    write_probe(&rows, &path, common.format)?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn write_probe(rows: &[ProbeRow], path: &Path, format: OutputFormat) -> Result<()> {
    let io = |e: &dyn std::fmt::Display| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
            for r in rows {
                w.serialize(r).map_err(|e| io(&e))?;
            }
            w.flush().map_err(|e| io(&e))
        }
        OutputFormat::Jsonl => {
            let text: String = rows
                .iter()
                .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| io(&e))?;
            std::fs::write(path, text).map_err(|e| io(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            experiment,
            config,
            sweep_param,
            values,
            common,
        } => run(
            experiment,
            config.as_deref(),
            sweep_param.as_deref(),
            values.clone(),
            common,
        ),
        Command::Verify { kind, common } => verify(kind, common),
        Command::Probe {
            sizes,
            rx_antennas,
            common,
        } => probe(sizes, *rx_antennas, common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
