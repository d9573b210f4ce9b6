//! `bandit-design`: reproduce the published tables, optimize a design from a
//! JSON config, or export a calibrated critical schedule.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::{Context, Result};
use bandit_design::calibration::ait_calibrate;
use bandit_design::config::{CalibrationConfig, RunConfig};
use bandit_design::objective::{evaluate_designs_with_progress, recommend, relative_ecp_curve};
use bandit_design::presets::{reproduce, Scale, TableId};
use clap::{Parser, Subcommand, ValueEnum};

/// Exit code for a malformed or invalid config.
const EXIT_CONFIG: u8 = 2;
/// Exit code when no design meets the power target within the cap.
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "bandit-design", version, about)]
struct Cli {
    /// Master seed. Overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores. Results do not
    /// depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for result files. Without it results go to stdout.
    #[arg(long, global = true, env = "BANDIT_DESIGN_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Suppress progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Rerun the preset behind a published table and compare.
    Reproduce {
        /// table1, table2, table3, table4, table5, appendixB or appendixF.
        table: String,
        /// quick or full replication budget.
        #[arg(long, default_value = "full")]
        scale: String,
    },
    /// Optimize the policy parameter and horizon for a run config.
    Design {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Calibrate a critical schedule for a calibration config.
    Calibrate {
        #[arg(short, long)]
        config: PathBuf,
    },
}

struct Progress {
    label: String,
    quiet: bool,
    shown: AtomicU64,
}

impl Progress {
    fn new(label: impl Into<String>, quiet: bool) -> Self {
        Progress {
            label: label.into(),
            quiet,
            shown: AtomicU64::new(0),
        }
    }

    fn report(&self, fraction: f64) {
        if self.quiet {
            return;
        }
        let permille = (fraction.clamp(0.0, 1.0) * 1000.0) as u64;
        if self.shown.fetch_max(permille + 1, Ordering::Relaxed) < permille + 1 {
            eprint!("\r{} {:5.1}%", self.label, permille as f64 / 10.0);
            if permille == 1000 {
                eprintln!();
            }
        }
    }
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn to_json(value: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn emit(cli: &Cli, name: &str, bytes: &[u8]) -> Result<()> {
    match &cli.out_dir {
        Some(dir) => write_out(dir, name, bytes),
        None => Ok(io::stdout().write_all(bytes)?),
    }
}

fn cmd_reproduce(cli: &Cli, table: &str, scale: &str) -> Result<()> {
    let id: TableId = table.parse()?;
    let scale: Scale = scale.parse()?;
    let seed = cli.seed.unwrap_or(42);
    let progress = Progress::new(id.name(), cli.quiet);
    let report = reproduce(id, scale, seed, &|x| progress.report(x))?;
    let (name, bytes) = match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.results.write_csv(&mut buf)?;
            (format!("{id}.csv"), buf)
        }
        Format::Json => (format!("{id}.json"), to_json(&report)?),
    };
    emit(cli, &name, &bytes)?;
    // The summary goes wherever the results do not.
    if cli.out_dir.is_some() {
        print!("{}", report.summary());
    } else {
        eprint!("{}", report.summary());
    }
    Ok(())
}

fn cmd_design(cli: &Cli, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let progress = Progress::new("design", cli.quiet);
    let eval = evaluate_designs_with_progress(&cfg.problem(), cfg.seed, &|x| progress.report(x))?;
    let rec = recommend(&eval.points, cfg.w)?;
    let rec_json = to_json(&rec)?;
    let Some(dir) = &cli.out_dir else {
        io::stdout().write_all(&rec_json)?;
        return Ok(());
    };
    write_out(dir, "recommendation.json", &rec_json)?;

    let mut set = csv::Writer::from_writer(Vec::new());
    set.write_record(["phi", "steps", "mean_reward", "ecp"])?;
    for p in &eval.points {
        set.write_record([
            p.phi.to_string(),
            p.horizon
                .map_or_else(|| "infeasible".into(), |t| t.to_string()),
            p.mean_reward.to_string(),
            p.ecp(cfg.w).map_or_else(String::new, |e| e.to_string()),
        ])?;
    }
    write_out(dir, "feasible_set.csv", &set.into_inner()?)?;

    let curve = relative_ecp_curve(&rec.feasible_set, &cfg.w_grid())?;
    let mut rel = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["w".to_string()];
    header.extend(curve.series.iter().map(|s| format!("phi_{}", s.phi)));
    header.push("best_phi".into());
    rel.write_record(&header)?;
    for (j, w) in curve.w.iter().enumerate() {
        let mut row = vec![w.to_string()];
        row.extend(curve.series.iter().map(|s| s.values[j].to_string()));
        row.push(curve.best_phi[j].to_string());
        rel.write_record(&row)?;
    }
    write_out(dir, "relative_ecp.csv", &rel.into_inner()?)?;

    for (p, c) in eval.points.iter().zip(&eval.curves) {
        let mut buf = Vec::new();
        c.write_csv(&mut buf)?;
        write_out(dir, &format!("power_curve_phi_{}.csv", p.phi), &buf)?;
    }
    print!("{}", String::from_utf8_lossy(&rec_json));
    Ok(())
}

fn cmd_calibrate(cli: &Cli, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = CalibrationConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let schedule = ait_calibrate(&cfg.ait(), &cfg.null_estimate(), cfg.seed)?;
    let (name, bytes) = match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            schedule.write_csv(&mut buf)?;
            ("schedule.csv", buf)
        }
        Format::Json => ("schedule.json", to_json(&schedule)?),
    };
    emit(cli, name, &bytes)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<bandit_design::Error>() {
        Some(bandit_design::Error::NoFeasibleDesign) => EXIT_INFEASIBLE,
        Some(bandit_design::Error::InvalidConfig { .. }) => EXIT_CONFIG,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Reproduce { table, scale } => cmd_reproduce(&cli, table, scale),
        Command::Design { config } => cmd_design(&cli, config),
        Command::Calibrate { config } => cmd_calibrate(&cli, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
