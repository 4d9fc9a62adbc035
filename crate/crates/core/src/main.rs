use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evaptwin::bayesopt::Protocol;
use evaptwin::config::{load_schedule, LoadedConfig, Overrides};
use evaptwin::error::{exit, Error, Result};
use evaptwin::imaging::{FitConfig, ImagingParams};
use evaptwin::orchestrator::{self as orch, ImageSource, RunSummary};

/// Evaporative-cooling digital twin and ramp optimizer.
///
/// Every flag can also be set through an environment variable with the
/// EVAPTWIN_ prefix (EVAPTWIN_CONFIG, EVAPTWIN_SEED, ...). Exit codes: 0 ok,
/// 1 I/O, 2 configuration or usage, 3 physics (lost cloud, no condensate,
/// numerical failure), 4 image fit, 5 resume refused, 6 no mask-size
/// plateau.
#[derive(Parser, Debug)]
#[command(name = "evaptwin", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "EVAPTWIN_CONFIG")]
    config: Option<PathBuf>,
    /// Optimizer protocol.
    #[arg(long, global = true, value_enum, env = "EVAPTWIN_PROTOCOL")]
    protocol: Option<Protocol>,
    /// Number of evaluations (per field for scan-field).
    #[arg(long, global = true, env = "EVAPTWIN_BUDGET")]
    budget: Option<usize>,
    /// Continue the campaign log in the output directory.
    #[arg(long, global = true, env = "EVAPTWIN_RESUME")]
    resume: bool,
    /// Overrides the configured seed.
    #[arg(long, global = true, env = "EVAPTWIN_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true, env = "EVAPTWIN_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "EVAPTWIN_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward run of the seed schedule (or --schedule).
    Simulate {
        /// Schedule file, e.g. a best_schedule.toml from optimize.
        #[arg(long, env = "EVAPTWIN_SCHEDULE")]
        schedule: Option<PathBuf>,
    },
    /// Bayesian optimization campaign over the ramp powers.
    Optimize,
    /// One campaign per magnetic field.
    ScanField {
        /// Comma-separated fields in G; defaults to the configured list.
        #[arg(long, value_delimiter = ',', env = "EVAPTWIN_FIELDS")]
        fields: Option<Vec<f64>>,
    },
    /// Condensate decay from a recorded final state.
    Decay {
        /// Summary record to start from [default: <out>/summary.json].
        #[arg(long, env = "EVAPTWIN_FROM")]
        from: Option<PathBuf>,
        /// Hold time in s.
        #[arg(long, env = "EVAPTWIN_DURATION")]
        duration: Option<f64>,
    },
    /// Bimodal fit of an absorption image.
    FitImage {
        /// Image file (binary or text format).
        #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize", env = "EVAPTWIN_IMAGE")]
        image: Option<PathBuf>,
        /// Ground-truth TOML to render and fit.
        #[arg(long, env = "EVAPTWIN_SYNTHESIZE")]
        synthesize: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<LoadedConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Usage("--config is required for this command".into()))?;
    let mut cfg = LoadedConfig::load(path)?;
    cfg.apply(&Overrides {
        seed: common.seed,
        out_dir: common.out.clone(),
        budget: common.budget,
        workers: common.workers,
        protocol: common.protocol,
    });
    if common.out.is_none() && cfg.config.out_dir.is_relative() {
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.config.out_dir = base.join(&cfg.config.out_dir);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Simulate { schedule } => {
            let cfg = load(common)?;
            let schedule = schedule.as_deref().map(load_schedule).transpose()?;
            let s = orch::cmd_simulate(&cfg, schedule.as_ref())?;
            println!(
                "N = {:.4e}  T = {:.4e} uK  N_bec = {:.4e}  psd = {:.4e}  cost = {}",
                s.trajectory.n_total,
                s.trajectory.temperature_uk,
                s.trajectory.n_bec,
                s.trajectory.psd,
                s.cost.map_or("n/a".into(), |c| format!("{c:.6}"))
            );
            println!("wrote {}", cfg.config.out_dir.join("trajectory.csv").display());
        }
        Command::Optimize => {
            let cfg = load(common)?;
            let r = orch::cmd_optimize(&cfg, common.resume)?;
            println!(
                "{} evaluations ({} rejected), best cost {} at #{}",
                r.evaluations,
                r.rejected,
                r.best_cost.map_or("n/a".into(), |c| format!("{c:.6}")),
                r.best_index.map_or("n/a".into(), |i| i.to_string())
            );
            match &r.boundary {
                Some(b) if !b.flagged.is_empty() => println!("at the search-box boundary: {}", b.flagged.join(", ")),
                Some(_) => println!("no coordinate at the search-box boundary"),
                None => {}
            }
        }
        Command::ScanField { fields } => {
            let cfg = load(common)?;
            let fields = fields.unwrap_or_else(|| cfg.config.scan.fields_g.clone());
            let rows = orch::cmd_scan_field(&cfg, &fields)?;
            print!("{}", orch::scan_csv(&rows));
        }
        Command::Decay { from, duration } => {
            let cfg = load(common)?;
            let from = from.unwrap_or_else(|| cfg.config.out_dir.join("summary.json"));
            let summary = RunSummary::load(&from)?;
            let curve = orch::cmd_decay(&cfg, &summary, duration)?;
            let (t, n) = curve.points[curve.points.len() - 1];
            println!("N_bec {:.4e} -> {:.4e} after {t} s", curve.points[0].1, n);
        }
        Command::FitImage { image, synthesize } => {
            let (imaging, fit, seed, out) = match &common.config {
                Some(_) => {
                    let cfg = load(common)?;
                    let c = cfg.config;
                    (c.imaging, c.fit, c.seed, c.out_dir)
                }
                None => (
                    ImagingParams::default(),
                    FitConfig::default(),
                    common.seed.unwrap_or(0),
                    common.out.clone().unwrap_or_else(|| PathBuf::from("out")),
                ),
            };
            let source = match (image, synthesize) {
                (Some(p), _) => ImageSource::File(p),
                (None, Some(p)) => ImageSource::Synthesize(orch::load_synth_spec(&p)?),
                (None, None) => return Err(Error::Usage("give --image or --synthesize".into())),
            };
            let r = orch::cmd_fit_image(&imaging, &fit, seed, &source, &out)?;
            println!("n_thermal = {:.6e}", r.result.n_thermal);
            println!("n_bec = {:.6e}", r.result.n_bec);
            println!("chosen_s = {}", r.result.chosen_s);
            if !r.result.bec_detected {
                println!("condensate below the detection floor ({:.3e} atoms)", r.detection_floor);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
