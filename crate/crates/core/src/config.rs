//! Run configuration.
//!
//! One TOML document describes a run: trap geometry, simulator settings, a
//! scenario included by reference, the seed schedule, the search box, cost
//! weights, optimizer settings, imaging and decay settings, output directory
//! and the RNG seed. Relative paths are resolved against the directory of the
//! config file. Every validation error names the offending key and, where it
//! can be found in the source, its line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayesopt::{OptimizerSettings, Protocol, SearchBox};
use crate::constants::{AMU, THULIUM_169_AMU};
use crate::cost::{CostMode, CostWeights};
use crate::error::{DomainError, Error};
use crate::feshbach::{FeshbachScenario, BUILTIN_THULIUM};
use crate::imaging::{FitConfig, ImagingParams};
use crate::ramps::RampSchedule;
use crate::sim::{SimConfig, Simulator};
use crate::trap::{BeamGeometry, TrapModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapSection {
    pub mass_amu: f64,
    pub crossed_threshold: f64,
    pub horizontal: BeamGeometry,
    pub vertical: BeamGeometry,
}

impl Default for TrapSection {
    fn default() -> Self {
        Self {
            mass_amu: THULIUM_169_AMU,
            crossed_threshold: 0.05,
            horizontal: BeamGeometry::horizontal_default(),
            vertical: BeamGeometry::vertical_default(),
        }
    }
}

impl TrapSection {
    pub fn model(&self) -> TrapModel {
        TrapModel {
            horizontal: self.horizontal.clone(),
            vertical: self.vertical.clone(),
            crossed_threshold: self.crossed_threshold,
            mass_kg: self.mass_amu * AMU,
        }
    }
}

/// Scenario included by reference: a file, or a scenario compiled into the
/// binary. `field_g` overrides the field stored in the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRef {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub field_g: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailExtension {
    pub segments: usize,
    pub duration_s: f64,
}

/// Seed schedule, inline or from a schedule file (the format written by
/// `optimize` as its best-schedule file).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub path: Option<PathBuf>,
    pub times_s: Vec<f64>,
    pub power_h_w: Vec<f64>,
    pub power_v_w: Vec<f64>,
    /// Holds appended to the seed at its final powers.
    pub extend_tail: Option<TailExtension>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub beta_gamma: f64,
    pub beta_bec: f64,
    pub mode: CostMode,
}

impl Default for CostSection {
    fn default() -> Self {
        let w = CostWeights::default();
        Self {
            beta_gamma: w.beta_gamma,
            beta_bec: w.beta_bec,
            mode: CostMode::Combined,
        }
    }
}

impl CostSection {
    pub fn weights(&self) -> CostWeights {
        CostWeights {
            beta_gamma: self.beta_gamma,
            beta_bec: self.beta_bec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub protocol: Protocol,
    pub budget: usize,
    /// Worker threads for candidate evaluation; 0 uses every core.
    pub workers: usize,
    /// Evaluate the seed schedule first.
    pub warm_start: bool,
    pub settings: OptimizerSettings,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::Full,
            budget: 60,
            workers: 0,
            warm_start: true,
            settings: OptimizerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub duration_s: f64,
    pub samples: usize,
    pub x_factor: f64,
    pub y_factor: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            samples: 201,
            x_factor: 0.34,
            y_factor: 0.130,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub fields_g: Vec<f64>,
    /// Per-field budget; the optimizer budget when absent.
    pub budget: Option<usize>,
    pub protocol: Protocol,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            fields_g: vec![3.91, 4.35, 4.80, 5.25],
            budget: None,
            protocol: Protocol::VariableTime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub trap: TrapSection,
    #[serde(default)]
    pub sim: SimConfig,
    pub scenario: ScenarioRef,
    pub schedule: ScheduleSection,
    pub search: SearchBox,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub imaging: ImagingParams,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub scan: ScanSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line / environment overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub budget: Option<usize>,
    pub workers: Option<usize>,
    pub protocol: Option<Protocol>,
}

/// A parsed, validated configuration with its references resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub source: PathBuf,
    pub config: RunConfig,
    pub scenario: FeshbachScenario,
    /// Git-style content digest of the scenario text.
    pub scenario_digest: String,
    /// Seed schedule after loading and tail extension.
    pub schedule: RampSchedule,
}

/// Content digest in git's object format: SHA-256 of `"blob <len>\0" ‖ data`.
pub fn content_digest(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", data.len()).as_bytes());
    h.update(data);
    hex::encode(h.finalize())
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// First line (1-based) holding `path` (dotted) in `text`. Falls back to the
/// parent key, then to the table header.
pub fn locate_key(text: &str, path: &str) -> Option<usize> {
    let parts: Vec<&str> = path.split('.').filter(|p| !p.is_empty()).collect();
    for len in (1..=parts.len()).rev() {
        if let Some(line) = find_key(text, &parts[..len]) {
            return Some(line);
        }
    }
    None
}

fn find_key(text: &str, parts: &[&str]) -> Option<usize> {
    let mut table: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
            table = inner.split('.').map(|s| s.trim().to_string()).collect();
            if table == parts {
                return Some(i + 1);
            }
            continue;
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            table = inner.split('.').map(|s| s.trim().to_string()).collect();
            if table == parts {
                return Some(i + 1);
            }
            continue;
        }
        if let Some((key, _)) = line.split_once('=') {
            let mut full = table.clone();
            full.extend(key.trim().split('.').map(|s| s.trim().trim_matches('"').to_string()));
            if full == parts {
                return Some(i + 1);
            }
        }
    }
    None
}

struct Ctx<'a> {
    source: &'a Path,
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, msg: impl std::fmt::Display) -> Error {
        match locate_key(self.text, key) {
            Some(line) => Error::Config(format!("{}:{line}: {key}: {msg}", self.source.display())),
            None => Error::Config(format!("{}: {key}: {msg}", self.source.display())),
        }
    }

    fn check<T, E: std::fmt::Display>(&self, key: &str, r: Result<T, E>) -> Result<T, Error> {
        r.map_err(|e| self.err(key, e))
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, &base)
    }

    /// Parses `text`; `source` names it in messages and `base` anchors
    /// relative paths.
    pub fn parse(text: &str, source: &Path, base: &Path) -> Result<Self, Error> {
        let ctx = Ctx { source, text };
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", source.display(), e.to_string().trim_end())))?;
        let (scenario, scenario_digest) = resolve_scenario(&ctx, &config.scenario, base)?;
        let schedule = resolve_schedule(&ctx, &config.schedule, base)?;
        let loaded = Self {
            source: source.to_path_buf(),
            config,
            scenario,
            scenario_digest,
            schedule,
        };
        loaded.validate(&ctx)?;
        Ok(loaded)
    }

    fn validate(&self, ctx: &Ctx) -> Result<(), Error> {
        let c = &self.config;
        ctx.check("trap.mass_amu", DomainError::check_positive("atomic mass", c.trap.mass_amu))?;
        ctx.check("trap.horizontal", c.trap.horizontal.validate())?;
        ctx.check("trap.vertical", c.trap.vertical.validate())?;
        ctx.check("trap", c.trap.model().validate())?;
        ctx.check("sim", c.sim.validate())?;
        ctx.check("search", c.search.validate())?;
        ctx.check("search", c.search.layout(c.optimizer.protocol, &self.schedule))?;
        ctx.check("cost", c.cost.weights().validate())?;
        ctx.check("optimizer.settings", c.optimizer.settings.validate())?;
        if c.optimizer.budget == 0 {
            return Err(ctx.err("optimizer.budget", "must be at least 1"));
        }
        ctx.check("fit", c.fit.validate())?;
        let img = &c.imaging;
        if img.nx < 8 || img.ny < 8 || !(img.pixel_size_um > 0.0) || !(img.sigma_abs_um2 > 0.0) || !(img.noise_od >= 0.0) {
            return Err(ctx.err("imaging", "needs nx, ny ≥ 8, positive pixel size and cross-section, non-negative noise"));
        }
        let d = &c.decay;
        if !(d.duration_s > 0.0) || d.samples < 2 || !(d.x_factor > 0.0) || !(d.y_factor > 0.0) {
            return Err(ctx.err("decay", "needs duration_s > 0, samples ≥ 2 and positive rescale factors"));
        }
        if c.scan.fields_g.is_empty() || c.scan.fields_g.iter().any(|b| !(*b > 0.0)) {
            return Err(ctx.err("scan.fields_g", "needs at least one positive field"));
        }
        if c.scan.budget == Some(0) {
            return Err(ctx.err("scan.budget", "must be at least 1"));
        }
        ctx.check("scenario", Simulator::new(c.trap.model(), self.scenario.clone(), c.sim.clone()))?;
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        let c = &mut self.config;
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(d) = &o.out_dir {
            c.out_dir = d.clone();
        }
        if let Some(b) = o.budget {
            c.optimizer.budget = b;
        }
        if let Some(w) = o.workers {
            c.optimizer.workers = w;
        }
        if let Some(p) = o.protocol {
            c.optimizer.protocol = p;
        }
    }

    pub fn trap_model(&self) -> TrapModel {
        self.config.trap.model()
    }

    pub fn simulator(&self) -> Result<Simulator, DomainError> {
        Simulator::new(self.trap_model(), self.scenario.clone(), self.config.sim.clone())
    }

    /// Simulator with the scenario moved to `field_g`.
    pub fn simulator_at(&self, field_g: f64) -> Result<Simulator, DomainError> {
        Simulator::new(self.trap_model(), self.scenario.at_field(field_g), self.config.sim.clone())
    }

    /// SHA-256 over everything that determines a campaign's results. The
    /// output directory, budget and worker count are excluded so a campaign
    /// can be extended or moved.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Input<'a> {
            config: &'a RunConfig,
            scenario_digest: &'a str,
            schedule: &'a RampSchedule,
        }
        let mut c = self.config.clone();
        c.out_dir = PathBuf::new();
        c.optimizer.budget = 0;
        c.optimizer.workers = 0;
        c.scan.budget = None;
        let json = serde_json::to_vec(&Input {
            config: &c,
            scenario_digest: &self.scenario_digest,
            schedule: &self.schedule,
        })
        .expect("config serializes");
        sha256_hex(&json)
    }
}

fn resolve_scenario(ctx: &Ctx, r: &ScenarioRef, base: &Path) -> Result<(FeshbachScenario, String), Error> {
    let (mut scenario, digest) = match (&r.path, &r.builtin) {
        (Some(_), Some(_)) => return Err(ctx.err("scenario", "give either path or builtin, not both")),
        (None, None) => return Err(ctx.err("scenario", "needs path or builtin")),
        (Some(p), None) => {
            let full = base.join(p);
            let text = std::fs::read_to_string(&full).map_err(|e| ctx.err("scenario.path", format!("{}: {e}", full.display())))?;
            let s = FeshbachScenario::from_toml(&text).map_err(|e| ctx.err("scenario.path", format!("{}: {e}", full.display())))?;
            (s, content_digest(text.as_bytes()))
        }
        (None, Some(name)) => match name.as_str() {
            "thulium" => (FeshbachScenario::builtin_thulium(), content_digest(BUILTIN_THULIUM.as_bytes())),
            other => return Err(ctx.err("scenario.builtin", format!("unknown built-in scenario {other:?} (available: thulium)"))),
        },
    };
    if let Some(b) = r.field_g {
        ctx.check("scenario.field_g", DomainError::check_positive("magnetic field", b))?;
        scenario = scenario.at_field(b);
    }
    ctx.check("scenario.field_g", scenario.scattering_length(scenario.field_g))?;
    Ok((scenario, digest))
}

fn resolve_schedule(ctx: &Ctx, s: &ScheduleSection, base: &Path) -> Result<RampSchedule, Error> {
    let inline = !(s.times_s.is_empty() && s.power_h_w.is_empty() && s.power_v_w.is_empty());
    let schedule = match (&s.path, inline) {
        (Some(_), true) => return Err(ctx.err("schedule", "give either path or inline breakpoints, not both")),
        (Some(p), false) => {
            let full = base.join(p);
            load_schedule(&full).map_err(|e| ctx.err("schedule.path", e))?
        }
        (None, _) => {
            let key = if s.times_s.is_empty() { "schedule" } else { "schedule.times_s" };
            ctx.check(key, RampSchedule::new(s.times_s.clone(), s.power_h_w.clone(), s.power_v_w.clone()))?
        }
    };
    match s.extend_tail {
        Some(t) => ctx.check("schedule.extend_tail", schedule.extend_tail(t.segments, t.duration_s)),
        None => Ok(schedule),
    }
}

/// Reads a schedule file: `times_s`, `power_h_w`, `power_v_w` at top level.
pub fn load_schedule(path: &Path) -> Result<RampSchedule, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: RampSchedule =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
    s.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(s)
}

/// Schedule file text, readable by [`load_schedule`].
pub fn schedule_toml(schedule: &RampSchedule) -> String {
    toml::to_string(schedule).expect("schedule serializes")
}
