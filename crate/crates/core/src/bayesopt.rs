//! Batch Bayesian optimization over the unit box.
//!
//! Every proposal is a pure function of `(seed, settings, observations with a
//! smaller batch index)`: the initial design is one Latin hypercube drawn
//! from a fixed sub-stream, the surrogate hyperparameters are refitted from a
//! deterministic observation prefix, and candidates inside a batch are
//! decorrelated with a constant liar. Replaying a log therefore reproduces
//! the same future proposals, which is what makes campaigns resumable.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::gp::{self, Gp, GpError, Hyper, HyperBounds};
use crate::par::{self, Execution};
use crate::ramps::{Beam, Layout, RampSchedule, Scale};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Space-filling points before the surrogate is used; `None` means `2·d`.
    pub min_init: Option<usize>,
    pub batch_size: usize,
    pub refit_interval: usize,
    pub restarts: usize,
    /// Boundary-flag distance in normalized coordinates.
    pub epsilon: f64,
    /// Exploration offset of expected improvement.
    pub xi: f64,
    pub random_candidates: usize,
    pub local_candidates: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            min_init: None,
            batch_size: 1,
            refit_interval: 5,
            restarts: 8,
            epsilon: 0.02,
            xi: 0.0,
            random_candidates: 1000,
            local_candidates: 3,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.batch_size == 0 || self.refit_interval == 0 || self.restarts == 0 {
            return Err(DomainError::Invalid(
                "batch_size, refit_interval and restarts must be at least 1".into(),
            ));
        }
        if self.random_candidates == 0 {
            return Err(DomainError::Invalid("random_candidates must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(DomainError::Invalid(format!("epsilon {} must lie in [0, 0.5)", self.epsilon)));
        }
        DomainError::check_non_negative("xi", self.xi)?;
        Ok(())
    }

    pub fn min_init_for(&self, dims: usize) -> usize {
        self.min_init.unwrap_or(2 * dims).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    WarmStart,
    Design,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub index: usize,
    pub x: Vec<f64>,
    pub source: ProposalSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub index: usize,
    pub x: Vec<f64>,
    pub cost: f64,
    pub source: ProposalSource,
    /// Coordinates clamped while decoding this point.
    pub clamp_count: usize,
    pub info: T,
}

/// Result of evaluating one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<T> {
    pub cost: f64,
    pub clamp_count: usize,
    pub info: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// Per-dimension flag: best coordinate within ε of 0 or 1.
    pub flags: Vec<bool>,
    pub best_x: Vec<f64>,
    pub clamp_events: usize,
}

impl BoundaryReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect()
    }

    pub fn any(&self) -> bool {
        self.flags.iter().any(|f| *f)
    }
}

/// Per-dimension flags for a point in the unit box.
pub fn boundary_flags(x: &[f64], epsilon: f64) -> Vec<bool> {
    x.iter().map(|&v| v <= epsilon || v >= 1.0 - epsilon).collect()
}

/// `n` points with exactly one point per stratum `[k/n, (k+1)/n)` in every
/// dimension.
pub fn latin_hypercube<R: Rng>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            p[d] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

#[derive(Debug, Clone)]
pub struct Campaign<T> {
    pub dims: usize,
    pub seed: u64,
    pub settings: OptimizerSettings,
    pub warm_start: Option<Vec<f64>>,
    pub observations: Vec<Observation<T>>,
    /// Proposal indices whose cost was non-finite and therefore dropped.
    pub rejected: Vec<usize>,
    design: Vec<Vec<f64>>,
    hyper_cache: BTreeMap<usize, Hyper>,
}

impl<T: Clone> Campaign<T> {
    pub fn new(dims: usize, seed: u64, settings: OptimizerSettings, warm_start: Option<Vec<f64>>) -> Result<Self, DomainError> {
        settings.validate()?;
        if dims == 0 {
            return Err(DomainError::Invalid("search space has no dimensions".into()));
        }
        if let Some(w) = &warm_start {
            if w.len() != dims {
                return Err(DomainError::Invalid(format!(
                    "warm start has {} coordinates, search space has {dims}",
                    w.len()
                )));
            }
        }
        let design = latin_hypercube(settings.min_init_for(dims), dims, &mut substream(seed, "design", 0));
        Ok(Self {
            dims,
            seed,
            settings,
            warm_start,
            observations: Vec::new(),
            rejected: Vec::new(),
            design,
            hyper_cache: BTreeMap::new(),
        })
    }

    /// Index of the next proposal to evaluate.
    pub fn next_index(&self) -> usize {
        self.observations.len() + self.rejected.len()
    }

    pub fn best(&self) -> Option<&Observation<T>> {
        self.observations
            .iter()
            .fold(None, |b: Option<&Observation<T>>, o| match b {
                Some(b) if b.cost >= o.cost => Some(b),
                _ => Some(o),
            })
    }

    /// Best cost after each observation (running maximum).
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut m = f64::NEG_INFINITY;
        self.observations
            .iter()
            .map(|o| {
                m = m.max(o.cost);
                m
            })
            .collect()
    }

    pub fn boundary_report(&self) -> Option<BoundaryReport> {
        let best = self.best()?;
        Some(BoundaryReport {
            flags: boundary_flags(&best.x, self.settings.epsilon),
            best_x: best.x.clone(),
            clamp_events: self.observations.iter().map(|o| o.clamp_count).sum(),
        })
    }

    /// Appends an observation. Non-finite costs are recorded as rejected and
    /// do not reach the surrogate.
    pub fn observe(&mut self, proposal: &Proposal, eval: Evaluated<T>) -> Result<(), DomainError> {
        if proposal.index != self.next_index() {
            return Err(DomainError::Invalid(format!(
                "observation for proposal {} arrived while {} was expected",
                proposal.index,
                self.next_index()
            )));
        }
        if !eval.cost.is_finite() {
            self.rejected.push(proposal.index);
            return Err(DomainError::Invalid(format!(
                "non-finite cost {} for proposal {} rejected",
                eval.cost, proposal.index
            )));
        }
        self.observations.push(Observation {
            index: proposal.index,
            x: proposal.x.clone(),
            cost: eval.cost,
            source: proposal.source,
            clamp_count: eval.clamp_count,
            info: eval.info,
        });
        Ok(())
    }

    /// Replays a logged observation (resume path).
    pub fn replay(&mut self, obs: Observation<T>) -> Result<(), DomainError> {
        if obs.index != self.next_index() {
            return Err(DomainError::Invalid(format!(
                "log entry {} out of order (expected {})",
                obs.index,
                self.next_index()
            )));
        }
        if obs.x.len() != self.dims {
            return Err(DomainError::Invalid(format!(
                "log entry {} has {} coordinates, expected {}",
                obs.index,
                obs.x.len(),
                self.dims
            )));
        }
        self.observations.push(obs);
        Ok(())
    }

    /// Replays a logged rejection (resume path).
    pub fn replay_rejected(&mut self, index: usize) -> Result<(), DomainError> {
        if index != self.next_index() {
            return Err(DomainError::Invalid(format!(
                "log entry {index} out of order (expected {})",
                self.next_index()
            )));
        }
        self.rejected.push(index);
        Ok(())
    }

    fn training_prefix(&self, limit: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.observations
            .iter()
            .filter(|o| o.index < limit)
            .map(|o| (o.x.clone(), o.cost))
            .unzip()
    }

    /// Hyperparameters for a surrogate trained on observations with index
    /// below `limit`: fitted on the largest prefix that is a multiple of the
    /// refit interval.
    fn hyper_for(&mut self, limit: usize) -> Hyper {
        let (x, y) = self.training_prefix(limit);
        let r = x.len() / self.settings.refit_interval * self.settings.refit_interval;
        if r < 2 {
            return Hyper::default_for(self.dims);
        }
        if let Some(h) = self.hyper_cache.get(&r) {
            return h.clone();
        }
        let mut rng = substream(self.seed, "hyper", r as u64);
        let h = gp::fit_hyper(
            &x[..r],
            &y[..r],
            &Hyper::default_for(self.dims),
            &HyperBounds::default(),
            self.settings.restarts,
            &mut rng,
        );
        self.hyper_cache.insert(r, h.clone());
        h
    }

    fn warm_offset(&self) -> usize {
        usize::from(self.warm_start.is_some())
    }

    /// Proposals `start..end` of the batch that contains `start`. Earlier
    /// members of the batch are treated as pending points.
    pub fn propose(&mut self, start: usize, end: usize, exec: Execution) -> Result<Vec<Proposal>, GpError> {
        let b = self.settings.batch_size;
        let batch = start / b;
        let batch_start = batch * b;
        let end = end.min(batch_start + b);
        let mut out = Vec::new();
        let mut pending: Vec<Vec<f64>> = Vec::new();
        let mut model: Option<Gp> = None;
        for index in batch_start..end {
            let p = self.proposal_at(index, batch_start, &pending, &mut model, exec)?;
            pending.push(p.x.clone());
            if index >= start {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn proposal_at(
        &mut self,
        index: usize,
        batch_start: usize,
        pending: &[Vec<f64>],
        model: &mut Option<Gp>,
        exec: Execution,
    ) -> Result<Proposal, GpError> {
        let off = self.warm_offset();
        if index < off {
            return Ok(Proposal {
                index,
                x: self.warm_start.clone().expect("warm start present"),
                source: ProposalSource::WarmStart,
            });
        }
        if index - off < self.design.len() {
            return Ok(Proposal {
                index,
                x: self.design[index - off].clone(),
                source: ProposalSource::Design,
            });
        }
        let (x, y) = self.training_prefix(batch_start);
        if x.is_empty() {
            // every earlier point was rejected: keep exploring at random
            let mut rng = substream(self.seed, "fallback", index as u64);
            return Ok(Proposal {
                index,
                x: (0..self.dims).map(|_| rng.random()).collect(),
                source: ProposalSource::Design,
            });
        }
        if model.is_none() {
            let hyper = self.hyper_for(batch_start);
            *model = Some(Gp::fit(x.clone(), y.clone(), hyper)?);
        }
        let base = model.as_ref().expect("model fitted");
        let best = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let liar = y.iter().sum::<f64>() / y.len() as f64;
        let mut gp = base.clone();
        // every earlier member of the batch, design points included
        for p in pending {
            gp = gp.with_fantasy(p.clone(), liar)?;
        }
        let mut rng = substream(self.seed, "acquisition", index as u64);
        let xpt = maximize_ei(&gp, best, &x, &y, &self.settings, &mut rng, exec);
        Ok(Proposal {
            index,
            x: xpt,
            source: ProposalSource::Model,
        })
    }
}

/// EI of `gp` at `p`.
pub fn ei_at(gp: &Gp, p: &[f64], best: f64, xi: f64) -> f64 {
    let (m, v) = gp.posterior(p);
    gp::expected_improvement(m, v, best, xi)
}

/// Scores a candidate set (order preserved).
pub fn score_candidates(gp: &Gp, candidates: &[Vec<f64>], best: f64, xi: f64, exec: Execution) -> Vec<f64> {
    par::map(exec, candidates, |c| ei_at(gp, c, best, xi))
}

/// Random and near-incumbent candidates, then compass-search refinement of
/// the top few.
fn maximize_ei<R: Rng>(
    gp: &Gp,
    best: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    s: &OptimizerSettings,
    rng: &mut R,
    exec: Execution,
) -> Vec<f64> {
    let d = xs[0].len();
    let mut cands: Vec<Vec<f64>> = (0..s.random_candidates).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]).then(a.cmp(&b)));
    let normal = Normal::new(0.0, 0.05).expect("valid sigma");
    for &i in order.iter().take(5) {
        for _ in 0..40 {
            cands.push(xs[i].iter().map(|v| (v + normal.sample(rng)).clamp(0.0, 1.0)).collect());
        }
    }
    let scores = score_candidates(gp, &cands, best, s.xi, exec);
    let mut ranked: Vec<usize> = (0..cands.len()).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let starts: Vec<(Vec<f64>, f64)> = ranked
        .iter()
        .take(s.local_candidates.max(1))
        .map(|&i| (cands[i].clone(), scores[i]))
        .collect();
    let refined = par::map(exec, &starts, |(x0, f0)| compass_search(|p| ei_at(gp, p, best, s.xi), x0.clone(), *f0));
    let mut out = refined[0].clone();
    for r in &refined[1..] {
        if r.1 > out.1 {
            out = r.clone();
        }
    }
    out.0
}

/// Coordinate pattern search in the unit box.
fn compass_search(f: impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64) {
    let mut step = 0.05;
    let mut evals = 0;
    while step > 1e-4 && evals < 400 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut c = x.clone();
                c[i] = (c[i] + dir * step).clamp(0.0, 1.0);
                if c[i] == x[i] {
                    continue;
                }
                evals += 1;
                let fc = f(&c);
                if fc > fx {
                    x = c;
                    fx = fc;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Runs proposals until `budget` observations (including rejected ones)
/// exist. Each batch is evaluated with `exec`; observations are passed to
/// `sink` in index order before the next batch is proposed.
pub fn run_campaign<T, F, S, E>(
    campaign: &mut Campaign<T>,
    budget: usize,
    exec: Execution,
    evaluate: F,
    mut sink: S,
) -> Result<(), E>
where
    T: Clone + Send,
    F: Fn(&Proposal) -> Evaluated<T> + Sync + Send,
    S: FnMut(&Campaign<T>, &Proposal, Option<&Observation<T>>) -> Result<(), E>,
    E: From<GpError>,
{
    while campaign.next_index() < budget {
        let start = campaign.next_index();
        let b = campaign.settings.batch_size;
        let end = ((start / b + 1) * b).min(budget);
        let proposals = campaign.propose(start, end, exec)?;
        let evals = par::map(exec, &proposals, |p| evaluate(p));
        for (p, e) in proposals.iter().zip(evals) {
            let accepted = campaign.observe(p, e).is_ok();
            let obs = if accepted { campaign.observations.last() } else { None };
            sink(campaign, p, obs)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Protocol {
    /// All powers after the first breakpoint, total time frozen.
    FixedTime,
    /// Only the last `tail_breakpoints` powers of each beam.
    TailOnly,
    /// Same coordinates as `fixed_time`; used after a tail campaign.
    Full,
    /// All powers plus the total-time coordinate.
    VariableTime,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::FixedTime => "fixed_time",
            Protocol::TailOnly => "tail_only",
            Protocol::Full => "full",
            Protocol::VariableTime => "variable_time",
        }
    }
}

/// Multiplicative power box around the seed schedule, log-scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBox {
    pub lo_factor: f64,
    pub hi_factor: f64,
    /// Hardware ceiling, W.
    #[serde(default = "default_max_power")]
    pub max_w: f64,
}

fn default_max_power() -> f64 {
    f64::MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub horizontal: PowerBox,
    pub vertical: PowerBox,
    #[serde(default = "default_tail")]
    pub tail_breakpoints: usize,
    /// Total-time box (s) for the variable-time protocol.
    pub total_time_s: (f64, f64),
}

fn default_tail() -> usize {
    3
}

impl SearchBox {
    pub fn validate(&self) -> Result<(), DomainError> {
        for (name, b) in [("horizontal", &self.horizontal), ("vertical", &self.vertical)] {
            if !(b.lo_factor > 0.0 && b.hi_factor > b.lo_factor && b.max_w > 0.0) {
                return Err(DomainError::Invalid(format!(
                    "{name} power box needs 0 < lo_factor < hi_factor and max_w > 0"
                )));
            }
        }
        if self.tail_breakpoints == 0 {
            return Err(DomainError::Invalid("tail_breakpoints must be at least 1".into()));
        }
        let (lo, hi) = self.total_time_s;
        if !(lo > 0.0 && hi > lo) {
            return Err(DomainError::Invalid("total_time_s must satisfy 0 < lo < hi".into()));
        }
        Ok(())
    }

    /// Coordinates exposed by `protocol` around `base`. Breakpoint 0 is the
    /// loading state and is never optimized.
    pub fn layout(&self, protocol: Protocol, base: &RampSchedule) -> Result<Layout, DomainError> {
        self.validate()?;
        let k = base.len();
        if k < 2 {
            return Err(DomainError::Invalid("seed schedule needs at least two breakpoints".into()));
        }
        let first = match protocol {
            Protocol::TailOnly => k.saturating_sub(self.tail_breakpoints).max(1),
            _ => 1,
        };
        let mut layout = Layout::default();
        for (beam, pb) in [(Beam::Horizontal, &self.horizontal), (Beam::Vertical, &self.vertical)] {
            let powers = base.powers(beam);
            if let Some(i) = (first..k).find(|&i| !(powers[i] > 0.0)) {
                return Err(DomainError::Invalid(format!(
                    "{beam:?} power at breakpoint {i} is zero; multiplicative boxes need positive seed powers"
                )));
            }
            layout.add_powers(
                beam,
                first..k,
                |i| {
                    let hi = (powers[i] * pb.hi_factor).min(pb.max_w);
                    let lo = (powers[i] * pb.lo_factor).min(hi * 0.5);
                    (lo, hi)
                },
                Scale::Log,
            );
        }
        if protocol == Protocol::VariableTime {
            layout.add_total_time(self.total_time_s.0, self.total_time_s.1);
        }
        Ok(layout)
    }
}
