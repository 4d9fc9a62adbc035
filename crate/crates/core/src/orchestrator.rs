//! Glue between the simulator, the cost layer and the optimizer, plus the
//! subcommand implementations behind the CLI.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bayesopt::{run_campaign, BoundaryReport, Campaign, Evaluated, Observation, OptimizerSettings, Proposal, Protocol};
use crate::cloud::CloudState;
use crate::config::{self, LoadedConfig};
use crate::cost::{self, CostMode, CostWeights};
use crate::error::{Error, Result};
use crate::imaging::{fit_bimodal, sweep_csv, AbsorptionImage, BimodalFitResult, FitConfig, FitError, ImageTruth, ImagingParams};
use crate::par::{self, Execution};
use crate::ramps::{Beam, ParamVector, RampCodec, RampSchedule, Slot};
use crate::sim::{DecayCurve, RescaledCurve, Simulator, Trajectory, TrajectorySummary};

/// Per-evaluation record kept in the campaign log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub gamma: f64,
    pub n_bec: f64,
    pub n_total: f64,
    pub temperature_uk: f64,
    pub psd: f64,
    pub total_time_s: f64,
    /// Total atom number when the cloud crossed the critical PSD.
    pub onset_n: Option<f64>,
    pub lost: bool,
    pub degenerate: bool,
    pub clamped: bool,
}

/// The function the optimizer maximizes: decode, simulate, score.
#[derive(Debug, Clone)]
pub struct Objective {
    pub simulator: Simulator,
    pub codec: RampCodec,
    pub weights: CostWeights,
    pub mode: CostMode,
}

impl Objective {
    pub fn schedule(&self, x: &[f64]) -> Result<RampSchedule> {
        Ok(self.codec.decode(&ParamVector::new(x.to_vec()))?.value)
    }

    /// Scores `x`. Schedules the simulator refuses (invalid decode, a failed
    /// integration) come back as a non-finite cost, which the campaign
    /// rejects and logs.
    pub fn evaluate(&self, x: &[f64]) -> Evaluated<Option<RunInfo>> {
        match self.try_evaluate(x) {
            Ok((cost, clamp_count, info)) => Evaluated {
                cost,
                clamp_count,
                info: Some(info),
            },
            Err(_) => Evaluated {
                cost: f64::NAN,
                clamp_count: 0,
                info: None,
            },
        }
    }

    pub fn evaluate_proposal(&self, p: &Proposal) -> Evaluated<Option<RunInfo>> {
        self.evaluate(&p.x)
    }

    fn try_evaluate(&self, x: &[f64]) -> Result<(f64, usize, RunInfo)> {
        let decoded = self.codec.decode(&ParamVector::new(x.to_vec()))?;
        let traj = self.simulator.run(&decoded.value)?;
        let score = cost::evaluate(&traj, &self.weights, self.mode, None)?;
        let s = traj.summary();
        Ok((
            score.cost,
            decoded.clamp_count(),
            RunInfo {
                gamma: score.gamma,
                n_bec: score.n_bec,
                n_total: s.n_total,
                temperature_uk: s.temperature_uk,
                psd: s.psd,
                total_time_s: decoded.value.total_time(),
                onset_n: s.onset_n,
                lost: score.lost,
                degenerate: score.degenerate,
                clamped: decoded.any_clamped(),
            },
        ))
    }
}

/// Outcome of the final state of a forward run, written as `summary.json`
/// and read back by `decay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub field_g: f64,
    pub trajectory: TrajectorySummary,
    pub final_cloud: CloudState,
    pub final_power_h_w: f64,
    pub final_power_v_w: f64,
    pub cost: Option<f64>,
    pub gamma: Option<f64>,
    pub lost_reason: Option<String>,
    pub config_digest: String,
    pub scenario_digest: String,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything an `optimize` run leaves behind besides the log itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub scenario_digest: String,
    pub protocol: Protocol,
    pub campaign_log: PathBuf,
    pub evaluations: usize,
    pub rejected: usize,
    pub best_index: Option<usize>,
    pub best_cost: Option<f64>,
    pub best_n_bec: Option<f64>,
    pub best_schedule: Option<RampSchedule>,
    pub boundary: Option<BoundaryDiagnostic>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

/// Boundary-saturation report with the flagged coordinates named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDiagnostic {
    pub flagged: Vec<String>,
    pub report: BoundaryReport,
}

impl BoundaryDiagnostic {
    pub fn new(codec: &RampCodec, report: BoundaryReport) -> Self {
        let flagged = report.flagged().into_iter().map(|i| slot_name(codec.layout.coords[i].slot)).collect();
        Self { flagged, report }
    }
}

pub fn slot_name(slot: Slot) -> String {
    match slot {
        Slot::Power { beam: Beam::Horizontal, index } => format!("P_H[{index}]"),
        Slot::Power { beam: Beam::Vertical, index } => format!("P_V[{index}]"),
        Slot::TotalTime => "total_time".into(),
    }
}

fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("record serializes");
    s.push('\n');
    write(path, s)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execution(workers: usize) -> Execution {
    if workers == 1 {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

pub fn objective(cfg: &LoadedConfig, simulator: Simulator, protocol: Protocol) -> Result<Objective> {
    let c = &cfg.config;
    let layout = c.search.layout(protocol, &cfg.schedule)?;
    Ok(Objective {
        simulator,
        codec: RampCodec::new(cfg.schedule.clone(), layout)?,
        weights: c.cost.weights(),
        mode: c.cost.mode,
    })
}

fn summarize(cfg: &LoadedConfig, sim: &Simulator, traj: &Trajectory) -> RunSummary {
    let last = traj.last();
    let score = cost::evaluate(traj, &cfg.config.cost.weights(), cfg.config.cost.mode, None).ok();
    RunSummary {
        field_g: sim.scenario.field_g,
        trajectory: traj.summary(),
        final_cloud: last.cloud,
        final_power_h_w: last.power_h_w,
        final_power_v_w: last.power_v_w,
        cost: score.map(|s| s.cost),
        gamma: score.map(|s| s.gamma),
        lost_reason: traj.lost.as_ref().map(|l| l.reason.clone()),
        config_digest: cfg.digest(),
        scenario_digest: cfg.scenario_digest.clone(),
    }
}

/// Forward run of `schedule` (the configured seed schedule when `None`).
/// Writes `trajectory.csv` and `summary.json`; a lost cloud is reported after
/// both files are written.
pub fn cmd_simulate(cfg: &LoadedConfig, schedule: Option<&RampSchedule>) -> Result<RunSummary> {
    let out = &cfg.config.out_dir;
    ensure_dir(out)?;
    let sim = cfg.simulator()?;
    let schedule = schedule.unwrap_or(&cfg.schedule);
    let traj = sim.run(schedule)?;
    write(&out.join("trajectory.csv"), traj.to_csv())?;
    let summary = summarize(cfg, &sim, &traj);
    write_json(&out.join("summary.json"), &summary)?;
    if let Some(lost) = &traj.lost {
        return Err(Error::LostCloud(format!("at t = {} s: {}", lost.time_s, lost.reason)));
    }
    Ok(summary)
}

pub type Obs = Observation<Option<RunInfo>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: u32,
    pub config_digest: String,
    pub scenario_digest: String,
    pub protocol: Protocol,
    pub field_g: f64,
    pub dims: usize,
    pub seed: u64,
    pub warm_start: bool,
}

/// One line of the campaign log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Observation(Obs),
    Rejected(Proposal),
}

impl LogRecord {
    fn line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log record serializes");
        s.push('\n');
        s
    }
}

pub const LOG_FORMAT: u32 = 1;

/// Reads a campaign log. A trailing partial line (an interrupted append) is
/// dropped and its length returned so the caller can truncate it.
pub fn read_log(path: &Path) -> Result<(Vec<LogRecord>, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    let mut records = Vec::new();
    for (i, line) in text[..complete].lines().enumerate() {
        let r = serde_json::from_str(line)
            .map_err(|e| Error::ResumeMismatch(format!("{} line {} is unreadable: {e}", path.display(), i + 1)))?;
        records.push(r);
    }
    Ok((records, complete as u64))
}

/// A campaign bound to a log file.
pub struct LoggedCampaign {
    pub objective: Objective,
    pub campaign: Campaign<Option<RunInfo>>,
    pub log_path: PathBuf,
}

impl LoggedCampaign {
    /// Starts a new log or, with `resume`, replays an existing one after
    /// checking that it was produced by the same inputs.
    pub fn open(objective: Objective, header: LogHeader, settings: OptimizerSettings, warm: Option<Vec<f64>>, log_path: &Path, resume: bool) -> Result<Self> {
        let mut campaign = Campaign::new(header.dims, header.seed, settings, warm)?;
        let exists = log_path.exists();
        if resume && exists {
            let (records, complete) = read_log(log_path)?;
            let mut it = records.into_iter();
            match it.next() {
                Some(LogRecord::Header(h)) if h == header => {}
                Some(LogRecord::Header(h)) => return Err(Error::ResumeMismatch(describe_mismatch(&h, &header))),
                _ => return Err(Error::ResumeMismatch(format!("{} has no campaign header", log_path.display()))),
            }
            for r in it {
                let replayed = match r {
                    LogRecord::Observation(o) => campaign.replay(o),
                    LogRecord::Rejected(p) => campaign.replay_rejected(p.index),
                    LogRecord::Header(_) => return Err(Error::ResumeMismatch("second header in the log".into())),
                };
                replayed.map_err(|e| Error::ResumeMismatch(e.to_string()))?;
            }
            let f = OpenOptions::new().write(true).open(log_path).map_err(|e| Error::io(log_path, e))?;
            f.set_len(complete).map_err(|e| Error::io(log_path, e))?;
        } else {
            if exists {
                return Err(Error::Usage(format!(
                    "{} already exists; pass --resume to continue it or choose another --out",
                    log_path.display()
                )));
            }
            if let Some(dir) = log_path.parent() {
                ensure_dir(dir)?;
            }
            write(log_path, LogRecord::Header(header).line())?;
        }
        Ok(Self {
            objective,
            campaign,
            log_path: log_path.to_path_buf(),
        })
    }

    /// Runs until `budget` proposals have been evaluated, appending each
    /// result to the log as it is accepted.
    pub fn run(&mut self, budget: usize, exec: Execution) -> Result<()> {
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.log_path)
            .map_err(|e| Error::io(&self.log_path, e))?;
        let path = self.log_path.clone();
        let objective = &self.objective;
        run_campaign::<_, _, _, Error>(
            &mut self.campaign,
            budget,
            exec,
            |p| objective.evaluate_proposal(p),
            |_, p, obs| {
                let rec = match obs {
                    Some(o) => LogRecord::Observation(o.clone()),
                    None => LogRecord::Rejected(p.clone()),
                };
                f.write_all(rec.line().as_bytes()).map_err(|e| Error::io(&path, e))
            },
        )
    }

    pub fn boundary(&self) -> Option<BoundaryDiagnostic> {
        self.campaign
            .boundary_report()
            .map(|r| BoundaryDiagnostic::new(&self.objective.codec, r))
    }

    pub fn best_schedule(&self) -> Option<RampSchedule> {
        self.campaign.best().and_then(|b| self.objective.schedule(&b.x).ok())
    }

    /// Largest condensate seen and the total time of the schedule that gave it.
    pub fn max_n_bec(&self) -> Option<(f64, f64)> {
        self.campaign
            .observations
            .iter()
            .filter_map(|o| o.info.as_ref())
            .map(|i| (i.n_bec, i.total_time_s))
            .fold(None, |b, c| match b {
                Some(b) if b.0 >= c.0 => Some(b),
                _ => Some(c),
            })
    }
}

fn describe_mismatch(logged: &LogHeader, current: &LogHeader) -> String {
    let mut diffs = Vec::new();
    if logged.config_digest != current.config_digest {
        diffs.push(format!("config digest {} (log) vs {} (now)", logged.config_digest, current.config_digest));
    }
    if logged.scenario_digest != current.scenario_digest {
        diffs.push(format!("scenario digest {} (log) vs {} (now)", logged.scenario_digest, current.scenario_digest));
    }
    if logged.protocol != current.protocol {
        diffs.push(format!("protocol {} (log) vs {} (now)", logged.protocol.name(), current.protocol.name()));
    }
    if logged.format != current.format {
        diffs.push(format!("log format {} vs {}", logged.format, current.format));
    }
    if diffs.is_empty() {
        diffs.push("campaign header differs".into());
    }
    format!("the campaign log was produced by different inputs: {}", diffs.join("; "))
}

fn header_for(cfg: &LoadedConfig, objective: &Objective, protocol: Protocol, warm: bool) -> LogHeader {
    LogHeader {
        format: LOG_FORMAT,
        config_digest: cfg.digest(),
        scenario_digest: cfg.scenario_digest.clone(),
        protocol,
        field_g: objective.simulator.scenario.field_g,
        dims: objective.codec.dims(),
        seed: cfg.config.seed,
        warm_start: warm,
    }
}

fn warm_start(cfg: &LoadedConfig, objective: &Objective) -> Result<Option<Vec<f64>>> {
    if !cfg.config.optimizer.warm_start {
        return Ok(None);
    }
    Ok(Some(objective.codec.encode(&cfg.schedule)?.value.values))
}

/// Optimizer campaign in `out_dir`: `campaign.jsonl`, `best_schedule.toml`,
/// `best_schedule.csv`, `boundary.json`, `best_summary.json`,
/// `best_trajectory.csv` and `run_record.json`.
pub fn cmd_optimize(cfg: &LoadedConfig, resume: bool) -> Result<RunRecord> {
    let started = now_unix();
    let c = &cfg.config;
    let out = &c.out_dir;
    ensure_dir(out)?;
    let protocol = c.optimizer.protocol;
    let objective = objective(cfg, cfg.simulator()?, protocol)?;
    let warm = warm_start(cfg, &objective)?;
    let header = header_for(cfg, &objective, protocol, warm.is_some());
    let log_path = out.join("campaign.jsonl");
    let mut lc = LoggedCampaign::open(objective, header, c.optimizer.settings.clone(), warm, &log_path, resume)?;
    let exec = execution(c.optimizer.workers);
    par::with_workers(c.optimizer.workers, || lc.run(c.optimizer.budget, exec))?;

    let best_schedule = lc.best_schedule();
    let boundary = lc.boundary();
    if let Some(s) = &best_schedule {
        write(&out.join("best_schedule.toml"), config::schedule_toml(s))?;
        write(&out.join("best_schedule.csv"), s.to_csv_grid(201))?;
        let traj = lc.objective.simulator.run(s)?;
        write(&out.join("best_trajectory.csv"), traj.to_csv())?;
        write_json(&out.join("best_summary.json"), &summarize(cfg, &lc.objective.simulator, &traj))?;
    }
    if let Some(b) = &boundary {
        write_json(&out.join("boundary.json"), b)?;
    }
    let best = lc.campaign.best();
    let record = RunRecord {
        config_digest: cfg.digest(),
        scenario_digest: cfg.scenario_digest.clone(),
        protocol,
        campaign_log: log_path,
        evaluations: lc.campaign.next_index(),
        rejected: lc.campaign.rejected.len(),
        best_index: best.map(|b| b.index),
        best_cost: best.map(|b| b.cost),
        best_n_bec: best.and_then(|b| b.info.as_ref()).map(|i| i.n_bec),
        best_schedule,
        boundary,
        started_unix_s: started,
        finished_unix_s: now_unix(),
    };
    write_json(&out.join("run_record.json"), &record)?;
    Ok(record)
}

/// One row of the field scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub field_g: f64,
    pub best_n_bec: Option<f64>,
    pub best_total_time_s: Option<f64>,
    pub best_cost: Option<f64>,
    pub status: String,
}

pub const SCAN_CSV_HEADER: &str = "field_G,best_N_bec,best_total_time_s,best_cost,status";

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
    let mut out = String::from(SCAN_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let status = r.status.replace([',', '\n', '"'], " ");
        out.push_str(&format!(
            "{:?},{},{},{},{status}\n",
            r.field_g,
            opt(r.best_n_bec),
            opt(r.best_total_time_s),
            opt(r.best_cost)
        ));
    }
    out
}

fn scan_one(cfg: &LoadedConfig, field_g: f64, budget: usize, exec: Execution, log_path: &Path) -> Result<ScanRow> {
    let protocol = cfg.config.scan.protocol;
    let objective = objective(cfg, cfg.simulator_at(field_g)?, protocol)?;
    let warm = warm_start(cfg, &objective)?;
    let header = header_for(cfg, &objective, protocol, warm.is_some());
    if log_path.exists() {
        fs::remove_file(log_path).map_err(|e| Error::io(log_path, e))?;
    }
    let mut lc = LoggedCampaign::open(objective, header, cfg.config.optimizer.settings.clone(), warm, log_path, false)?;
    lc.run(budget, exec)?;
    let best = lc.campaign.best();
    let max = lc.max_n_bec();
    Ok(ScanRow {
        field_g,
        best_n_bec: max.map(|m| m.0),
        best_total_time_s: max.map(|m| m.1),
        best_cost: best.map(|b| b.cost),
        status: if best.is_some() { "ok".into() } else { "no accepted evaluations".into() },
    })
}

/// Budgeted campaign per field; writes `scan.csv` and one log per field
/// under `scan/`. A failing field becomes a row with its error as status.
pub fn cmd_scan_field(cfg: &LoadedConfig, fields: &[f64]) -> Result<Vec<ScanRow>> {
    if fields.len() < 2 {
        return Err(Error::Usage(format!("scan-field needs at least two fields, got {}", fields.len())));
    }
    let c = &cfg.config;
    let dir = c.out_dir.join("scan");
    ensure_dir(&dir)?;
    let budget = c.scan.budget.unwrap_or(c.optimizer.budget);
    let exec = execution(c.optimizer.workers);
    let rows: Vec<ScanRow> = par::with_workers(c.optimizer.workers, || {
        fields
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let log = dir.join(format!("field_{i:02}_{b}G.jsonl"));
                scan_one(cfg, b, budget, exec, &log).unwrap_or_else(|e| ScanRow {
                    field_g: b,
                    best_n_bec: None,
                    best_total_time_s: None,
                    best_cost: None,
                    status: format!("error: {e}"),
                })
            })
            .collect()
    });
    write(&c.out_dir.join("scan.csv"), scan_csv(&rows))?;
    Ok(rows)
}

/// Condensate decay from the final state recorded in `summary`, held in the
/// final trap of that run. Writes `decay.csv` and `decay_rescaled.csv`.
pub fn cmd_decay(cfg: &LoadedConfig, summary: &RunSummary, duration_s: Option<f64>) -> Result<DecayCurve> {
    let c = &cfg.config;
    if summary.trajectory.lost {
        return Err(Error::NotCondensed(format!(
            "the recorded run lost the cloud ({})",
            summary.lost_reason.as_deref().unwrap_or("no reason recorded")
        )));
    }
    if !(summary.final_cloud.n_bec > 0.0) {
        return Err(Error::NotCondensed(format!(
            "the recorded run ended with N_bec = {} at T = {} µK",
            summary.final_cloud.n_bec, summary.final_cloud.temperature_uk
        )));
    }
    let sim = cfg.simulator_at(summary.field_g)?;
    let trap = cfg.trap_model().state(summary.final_power_h_w, summary.final_power_v_w)?;
    let duration = duration_s.unwrap_or(c.decay.duration_s);
    let curve = sim.decay_bec(&summary.final_cloud, &trap, duration, c.decay.samples)?;
    ensure_dir(&c.out_dir)?;
    write(&c.out_dir.join("decay.csv"), curve.to_csv())?;
    let rescaled = RescaledCurve::identity(curve.points.clone()).rescaled(c.decay.x_factor, c.decay.y_factor)?;
    write(&c.out_dir.join("decay_rescaled.csv"), rescaled.to_csv())?;
    Ok(curve)
}

/// Ground truth to render: a `[truth]` table and optionally an `[imaging]`
/// table that replaces the configured imaging parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub truth: ImageTruth,
    #[serde(default)]
    pub imaging: Option<ImagingParams>,
}

/// Where `fit-image` gets its image.
#[derive(Debug, Clone)]
pub enum ImageSource {
    File(PathBuf),
    Synthesize(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub source: String,
    pub truth: Option<ImageTruth>,
    pub detection_floor: f64,
    pub result: BimodalFitResult,
}

pub fn load_synth_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))
}

/// Bimodal fit of one image; writes `fit.json` and `sweep.csv`. On a
/// plateau failure the sweep is still written before the error returns.
pub fn cmd_fit_image(imaging: &ImagingParams, fit: &FitConfig, seed: u64, source: &ImageSource, out: &Path) -> Result<FitRecord> {
    fit.validate()?;
    let (image, truth, label) = match source {
        ImageSource::File(p) => (AbsorptionImage::load(p)?, None, p.display().to_string()),
        ImageSource::Synthesize(spec) => {
            let params = spec.imaging.as_ref().unwrap_or(imaging);
            (spec.truth.render(params, seed)?, Some(spec.truth), "synthetic".to_string())
        }
    };
    ensure_dir(out)?;
    if truth.is_some() {
        image.save(&out.join("image.evt"))?;
    }
    let result = match fit_bimodal(&image, fit) {
        Ok(r) => r,
        Err(FitError::Plateau { sweep }) => {
            write(&out.join("sweep.csv"), sweep_csv(&sweep))?;
            return Err(FitError::Plateau { sweep }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write(&out.join("sweep.csv"), sweep_csv(&result.s_sweep))?;
    let record = FitRecord {
        source: label,
        truth,
        detection_floor: fit.detection_floor(result.n_thermal),
        result,
    };
    write_json(&out.join("fit.json"), &record)?;
    Ok(record)
}
