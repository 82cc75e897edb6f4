use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmf_core::ensembles::DetSign;
use dmf_core::rmt::RmtPlan;
use dmf_core::FieldTag;
use dmf_lab::config::{ConfigFile, Preset, RunConfig};
use dmf_lab::scenario::{run_scenario, RunStatus};
use dmf_lab::{gradcheck, plots, rmt, sweep_convergence, LabError, LabResult};

/// Deep matrix factorization lab: trajectories, sweeps and validators.
#[derive(Parser, Debug)]
#[command(name = "dmf-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Config file (flat `key = value`), applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig-h1 | fig-h2 | fig-h3 | convergence
    #[arg(long)]
    preset: Option<Preset>,
    /// real | complex
    #[arg(long)]
    field: Option<FieldTag>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sign of det W(0) for real balanced init: plus | minus
    #[arg(long)]
    det: Option<DetSign>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario (or every variant of a preset) and write CSV + summary.
    Run(RunArgs),
    /// Run a seed sweep and report the converged fraction.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds (seed, seed+1, ...).
        #[arg(long, default_value_t = 100)]
        seeds: usize,
    },
    /// Monte-Carlo validation of the random-matrix facts behind the initialization.
    RmtValidate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use one dimension for every test instead of the defaults.
        #[arg(long)]
        dim: Option<usize>,
        /// Use one sample count for every test instead of the defaults.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Both fields when omitted.
        #[arg(long)]
        field: Option<FieldTag>,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        /// Regularizer weights to check.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 10.0])]
        reg_a: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a plot script for each trajectory CSV.
    Plots {
        csv: Vec<PathBuf>,
        /// Defaults to each CSV's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base_config(args: &RunArgs, default_preset: Option<Preset>) -> LabResult<RunConfig> {
    let mut cfg = args.preset.or(default_preset).map_or_else(RunConfig::default, Preset::config);
    if let Some(path) = &args.config {
        cfg.apply(&ConfigFile::load(path)?)?;
    }
    Ok(cfg)
}

fn override_flags(mut cfg: RunConfig, args: &RunArgs) -> RunConfig {
    if let Some(f) = args.field {
        cfg = cfg.with_field(f);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.det {
        cfg.det_sign = Some(d);
    }
    cfg
}

fn write_file(path: &Path, bytes: &[u8]) -> LabResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> LabResult<()> {
    let base = base_config(args, None)?;
    let stem = args.preset.map_or("run", Preset::name);
    let runs: Vec<(String, RunConfig)> = match args.preset {
        Some(p) if args.field.is_none() && args.det.is_none() && args.config.is_none() => p
            .variants()
            .into_iter()
            .map(|(label, cfg)| (format!("{stem}-{label}"), override_flags(cfg, args)))
            .collect(),
        _ => vec![(stem.to_string(), override_flags(base, args))],
    };
    let mut diverged = None;
    for (name, cfg) in runs {
        let out = run_scenario(&cfg)?;
        let csv_path = args.out.join(format!("{name}.csv"));
        write_file(&csv_path, &out.csv)?;
        write_file(&args.out.join(format!("{name}.summary.txt")), out.summary.to_text().as_bytes())?;
        println!(
            "{name}: {} after {} steps, l_ori = {:e} -> {}",
            out.summary.status.name(),
            out.summary.steps_taken,
            out.summary.final_record.l_ori,
            csv_path.display()
        );
        if out.summary.status == RunStatus::Diverged {
            diverged = Some(out.summary.steps_taken);
        }
    }
    match diverged {
        Some(step) => Err(LabError::Diverged { step }),
        None => Ok(()),
    }
}

fn cmd_sweep(args: &RunArgs, seeds: usize) -> LabResult<()> {
    let cfg = override_flags(base_config(args, Some(Preset::Convergence))?, args);
    let r = sweep_convergence(&cfg, seeds)?;
    let path = args.out.join("sweep.csv");
    write_file(&path, r.to_csv().as_bytes())?;
    println!(
        "converged {}/{} (fraction {:.4}) -> {}",
        r.n_converged,
        r.n_seeds,
        r.fraction,
        path.display()
    );
    if let Some(t) = r.by_det {
        println!(
            "det W(0) > 0: {}/{} ({:.4}); det W(0) < 0: {}/{} ({:.4})",
            t.positive_converged,
            t.positive,
            t.positive_fraction(),
            t.negative_converged,
            t.negative,
            t.negative_fraction()
        );
    }
    let failed = r.per_seed.iter().filter(|o| o.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} seeds failed; see the error column");
    }
    Ok(())
}

fn cmd_rmt(seed: u64, dim: Option<usize>, samples: Option<usize>, out: &Path) -> LabResult<()> {
    let plan = match (dim, samples) {
        (None, None) => RmtPlan::default(),
        (d, n) => RmtPlan::uniform(d.unwrap_or(5), n.unwrap_or(2000)),
    };
    let report = rmt::rmt_validate(&plan, seed)?;
    rmt::write_outputs(&report, seed, out)?;
    print!("{}", rmt::report_text(&report));
    if report.all_pass() {
        Ok(())
    } else {
        Err(LabError::Validation("random-matrix suite".into()))
    }
}

fn cmd_gradcheck(field: Option<FieldTag>, d: usize, layers: usize, reg_a: &[f64], seed: u64) -> LabResult<()> {
    let fields = field.map_or_else(|| vec![FieldTag::Real, FieldTag::Complex], |f| vec![f]);
    let mut ok = true;
    for f in fields {
        for &a in reg_a {
            let r = gradcheck::gradcheck(d, layers, f, a, seed)?;
            println!("{}", r.line());
            ok &= r.pass;
        }
    }
    if ok {
        Ok(())
    } else {
        Err(LabError::Validation("gradient check".into()))
    }
}

fn cmd_plots(csvs: &[PathBuf], out: Option<&Path>) -> LabResult<()> {
    if csvs.is_empty() {
        return Err(LabError::Config("no CSV files given".into()));
    }
    for csv in csvs {
        let text = std::fs::read_to_string(csv)?;
        let script = plots::emit_plot_script(&text, &csv.display().to_string())?;
        let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        let dir = out.map(Path::to_path_buf).unwrap_or_else(|| {
            csv.parent().map(Path::to_path_buf).unwrap_or_default()
        });
        let path = dir.join(format!("{stem}.plot"));
        write_file(&path, script.as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { run, seeds } => cmd_sweep(run, *seeds),
        Command::RmtValidate { seed, dim, samples, out } => cmd_rmt(*seed, *dim, *samples, out),
        Command::Gradcheck {
            field,
            d,
            layers,
            reg_a,
            seed,
        } => cmd_gradcheck(*field, *d, *layers, reg_a, *seed),
        Command::Plots { csv, out } => cmd_plots(csv, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
