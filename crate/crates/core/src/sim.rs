//! Rate-equation model of forced evaporation along a power schedule.
//!
//! State is `(N, T, N_bec)`. Channels:
//!
//! * evaporation over a truncated Boltzmann distribution,
//!   `dN/dt = −N_th Γ_el (η−4) e^{−η}`, each escaping atom carrying
//!   `(η + (η−5)/(η−4)) k_B T`;
//! * thermal three-body loss `−L₃⟨n²⟩N_th` with `⟨n²⟩ = n₀²/(3√3)` and
//!   anti-evaporation heating `(T/3) L₃⟨n²⟩`;
//! * adiabatic compression/decompression `dT/dt = T d ln ω̄/dt` as the
//!   powers change;
//! * one-body background loss with lifetime `τ`;
//! * condensate growth, relaxing `N_bec` towards `N f_c(T, T_c(N))` at the
//!   elastic rate, and condensate three-body loss
//!   `−c L₃ (8/21) n_p² N_bec` with the Thomas-Fermi peak density `n_p`.
//!
//! Runs that become too shallow (`η < eta_floor`), lose the trap or drop below
//! one atom end early with a [`LostCloud`] marker instead of failing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::{self, CloudState, PsdValue};
use crate::constants::{uk_to_joule, HBAR, K_B, MICRO, PSD_CRITICAL};
use crate::error::DomainError;
use crate::feshbach::FeshbachScenario;
use crate::ode::{Integrator, OdeError, Tolerances};
use crate::ramps::RampSchedule;
use crate::trap::{TrapModel, TrapState};

/// Channel switches, all on by default. Tests use them to isolate limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Channels {
    pub evaporation: bool,
    pub three_body: bool,
    pub three_body_heating: bool,
    pub condensate: bool,
    pub adiabatic: bool,
    pub background: bool,
}

impl Default for Channels {
    fn default() -> Self {
        Self {
            evaporation: true,
            three_body: true,
            three_body_heating: true,
            condensate: true,
            adiabatic: true,
            background: true,
        }
    }
}

impl Channels {
    pub fn none() -> Self {
        Self {
            evaporation: false,
            three_body: false,
            three_body_heating: false,
            condensate: false,
            adiabatic: false,
            background: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub initial_atoms: f64,
    pub initial_temperature_uk: f64,
    pub eta_floor: f64,
    pub rtol: f64,
    /// Absolute tolerance on atom numbers.
    pub atol_atoms: f64,
    /// Absolute tolerance on temperature, µK.
    pub atol_temperature_uk: f64,
    /// Three-body correlation factor of the condensate relative to a thermal
    /// gas.
    pub condensate_correlation_factor: f64,
    /// One-body lifetime, s. Zero disables the channel.
    pub background_lifetime_s: f64,
    pub output_interval_s: f64,
    pub channels: Channels,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            initial_atoms: 3.0e6,
            initial_temperature_uk: 22.5,
            eta_floor: 1.0,
            rtol: 1e-8,
            atol_atoms: 1e-3,
            atol_temperature_uk: 1e-9,
            condensate_correlation_factor: 1.0 / 6.0,
            background_lifetime_s: 0.0,
            output_interval_s: 0.01,
            channels: Channels::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        DomainError::check_positive("initial atom number", self.initial_atoms)?;
        DomainError::check_positive("initial temperature", self.initial_temperature_uk)?;
        DomainError::check_positive("eta floor", self.eta_floor)?;
        DomainError::check_positive("relative tolerance", self.rtol)?;
        DomainError::check_positive("atom-number tolerance", self.atol_atoms)?;
        DomainError::check_positive("temperature tolerance", self.atol_temperature_uk)?;
        DomainError::check_non_negative("condensate correlation factor", self.condensate_correlation_factor)?;
        DomainError::check_non_negative("background lifetime", self.background_lifetime_s)?;
        DomainError::check_positive("output interval", self.output_interval_s)?;
        Ok(())
    }

    pub fn initial_cloud(&self) -> CloudState {
        CloudState {
            n_total: self.initial_atoms,
            temperature_uk: self.initial_temperature_uk,
            n_bec: 0.0,
            time_s: 0.0,
        }
    }
}

/// Per-channel contributions to the derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    /// Elastic collision rate Γ_el, 1/s.
    pub gamma_el: f64,
    pub eta: f64,
    /// L₃ at the current temperature, cm⁶/s.
    pub l3_cm6_s: f64,
    // atom-number channels, atoms/s
    pub evaporation: f64,
    pub three_body_thermal: f64,
    pub three_body_condensate: f64,
    pub background_thermal: f64,
    pub background_condensate: f64,
    /// Transfer from the thermal cloud into the condensate, atoms/s.
    pub condensate_growth: f64,
    // temperature channels, µK/s
    pub cooling_evaporation: f64,
    pub heating_three_body: f64,
    pub adiabatic: f64,
}

impl Rates {
    pub fn dn_dt(&self) -> f64 {
        self.evaporation
            + self.three_body_thermal
            + self.three_body_condensate
            + self.background_thermal
            + self.background_condensate
    }

    pub fn dt_dt(&self) -> f64 {
        self.cooling_evaporation + self.heating_three_body + self.adiabatic
    }

    pub fn dn_bec_dt(&self) -> f64 {
        self.condensate_growth + self.three_body_condensate + self.background_condensate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub cloud: CloudState,
    pub trap: TrapState,
    pub power_h_w: f64,
    pub power_v_w: f64,
    pub psd: PsdValue,
    pub rates: Rates,
}

impl TrajectoryPoint {
    pub fn time_s(&self) -> f64 {
        self.cloud.time_s
    }

    /// PSD counting every atom as thermal; crosses the critical value at
    /// `T = T_c(N)`.
    pub fn psd_all_atoms(&self) -> f64 {
        cloud::harmonic_psd(self.cloud.n_total, self.cloud.temperature_uk, self.trap.omega_bar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LostCloud {
    pub time_s: f64,
    pub reason: String,
}

/// Where the cloud first crossed the condensation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensationOnset {
    pub time_s: f64,
    pub n_total: f64,
    pub temperature_uk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub lost: Option<LostCloud>,
    pub onset: Option<CondensationOnset>,
    /// Number of accepted steps whose state had to be clipped back into the
    /// physical region.
    pub clip_events: usize,
}

impl Trajectory {
    pub fn first(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory holds the initial state")
    }

    pub fn is_lost(&self) -> bool {
        self.lost.is_some()
    }

    pub fn summary(&self) -> TrajectorySummary {
        let last = self.last();
        TrajectorySummary {
            duration_s: last.time_s(),
            n_total: last.cloud.n_total,
            temperature_uk: last.cloud.temperature_uk,
            n_bec: last.cloud.n_bec,
            psd: last.psd.value,
            lost: self.is_lost(),
            onset_n: self.onset.map(|o| o.n_total),
            onset_time_s: self.onset.map(|o| o.time_s),
        }
    }

    pub const CSV_HEADER: &'static str = "time_s,N,T_uK,N_bec,psd,P_H_W,P_V_W,L3";

    /// Trajectory CSV; L3 in cm⁶/s. Values are written with the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 120);
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:?},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                p.cloud.time_s,
                p.cloud.n_total,
                p.cloud.temperature_uk,
                p.cloud.n_bec,
                p.psd.value,
                p.power_h_w,
                p.power_v_w,
                p.rates.l3_cm6_s
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub duration_s: f64,
    pub n_total: f64,
    pub temperature_uk: f64,
    pub n_bec: f64,
    pub psd: f64,
    pub lost: bool,
    pub onset_n: Option<f64>,
    pub onset_time_s: Option<f64>,
}

/// Thomas-Fermi peak density (m⁻³) of `n_bec` atoms in a harmonic trap.
pub fn thomas_fermi_peak_density(n_bec: f64, omega_bar: f64, scattering_length_m: f64, mass_kg: f64) -> f64 {
    if n_bec <= 0.0 {
        return 0.0;
    }
    let a = scattering_length_m;
    let a_ho = (HBAR / (mass_kg * omega_bar)).sqrt();
    let mu = 0.5 * HBAR * omega_bar * (15.0 * n_bec * a / a_ho).powf(0.4);
    let g = 4.0 * std::f64::consts::PI * HBAR * HBAR * a / mass_kg;
    mu / g
}

/// `⟨n³⟩/n_p²` averaged over a Thomas-Fermi profile.
pub const TF_DENSITY_WEIGHT: f64 = 8.0 / 21.0;

/// Smallest scattering length used in the Thomas-Fermi density, m. Keeps
/// the condensate density finite close to a zero crossing of `a(B)`.
const MIN_TF_SCATTERING_LENGTH_M: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub trap: TrapModel,
    pub scenario: FeshbachScenario,
    pub config: SimConfig,
    sigma_el_m2: f64,
    a_m: f64,
}

impl Simulator {
    pub fn new(trap: TrapModel, scenario: FeshbachScenario, config: SimConfig) -> Result<Self, DomainError> {
        trap.validate()?;
        scenario.validate()?;
        config.validate()?;
        let a_m = scenario.scattering_length_m()?;
        Ok(Self {
            sigma_el_m2: 8.0 * std::f64::consts::PI * a_m * a_m,
            a_m,
            trap,
            scenario,
            config,
        })
    }

    pub fn mass_kg(&self) -> f64 {
        self.trap.mass_kg
    }

    pub fn scattering_length_m(&self) -> f64 {
        self.a_m
    }

    fn tf_scattering_length(&self) -> f64 {
        self.a_m.abs().max(MIN_TF_SCATTERING_LENGTH_M)
    }

    /// Condensate three-body coefficient `k` in `dN_bec/dt = −k N_bec^{9/5}`.
    pub fn condensate_decay_coefficient(&self, trap: &TrapState, temperature_uk: f64) -> f64 {
        let l3 = self.scenario.three_body_rate_m6(temperature_uk);
        let c_tf = thomas_fermi_peak_density(1.0, trap.omega_bar, self.tf_scattering_length(), self.mass_kg());
        l3 * self.config.condensate_correlation_factor * TF_DENSITY_WEIGHT * c_tf * c_tf
    }

    /// Channel rates at one instant. `dln_omega_bar_dt` carries the trap's
    /// time dependence.
    pub fn derivatives(&self, cloud: &CloudState, trap: &TrapState, dln_omega_bar_dt: f64) -> Result<Rates, DomainError> {
        trap.ensure_trapped()?;
        let ch = self.config.channels;
        let m = self.mass_kg();
        let t_uk = cloud.temperature_uk;
        DomainError::check_positive("temperature", t_uk)?;
        let n_th = cloud.n_thermal();
        let n_bec = cloud.n_bec.max(0.0);
        let eta = TrapModel::eta(trap, t_uk);
        let kt = uk_to_joule(t_uk);
        let n0 = cloud::peak_density_m3(cloud, trap, m);
        let v_bar = (8.0 * kt / (std::f64::consts::PI * m)).sqrt();
        let gamma_el = n0 * self.sigma_el_m2 * v_bar / std::f64::consts::SQRT_2;
        let l3_cm6_s = self.scenario.three_body_rate(self.scenario.field_g, t_uk);
        let l3 = l3_cm6_s * crate::constants::CM6_TO_M6;

        let mut r = Rates {
            gamma_el,
            eta,
            l3_cm6_s,
            ..Rates::default()
        };

        if ch.evaporation && eta > 4.0 {
            let boltz = (-eta).exp();
            r.evaporation = -n_th * gamma_el * (eta - 4.0) * boltz;
            // (T/N)|dN/dt| ((η + (η−5)/(η−4))/3 − 1) with the (η−4) pole
            // cancelled analytically
            r.cooling_evaporation = -t_uk * gamma_el * boltz * (eta * eta - 6.0 * eta + 7.0) / 3.0;
        }
        if ch.three_body {
            let n2 = n0 * n0 / (3.0 * 3f64.sqrt());
            r.three_body_thermal = -l3 * n2 * n_th;
            if ch.three_body_heating {
                r.heating_three_body = t_uk / 3.0 * l3 * n2;
            }
        }
        if ch.adiabatic {
            r.adiabatic = t_uk * dln_omega_bar_dt;
        }
        if ch.background && self.config.background_lifetime_s > 0.0 {
            r.background_thermal = -n_th / self.config.background_lifetime_s;
            r.background_condensate = -n_bec / self.config.background_lifetime_s;
        }
        if ch.condensate && cloud.n_total > 0.0 {
            let tc = cloud::critical_temperature(cloud.n_total, trap.omega_bar)?;
            let target = cloud.n_total * cloud::condensate_fraction(t_uk, tc)?;
            r.condensate_growth = gamma_el * (target - n_bec);
            if ch.three_body {
                let n_p = thomas_fermi_peak_density(n_bec, trap.omega_bar, self.tf_scattering_length(), m);
                r.three_body_condensate =
                    -l3 * self.config.condensate_correlation_factor * TF_DENSITY_WEIGHT * n_p * n_p * n_bec;
            }
        }
        Ok(r)
    }

    fn point(&self, cloud: CloudState, schedule: &RampSchedule) -> Result<TrajectoryPoint, DomainError> {
        let (ph, pv) = schedule.powers_at(cloud.time_s)?;
        let trap = self.trap.state(ph, pv)?;
        trap.ensure_trapped()?;
        let seg = schedule.segment_index(cloud.time_s)?;
        let dln = self.trap.dln_omega_bar_dt((ph, pv), schedule.segment_slopes(seg));
        let rates = self.derivatives(&cloud, &trap, dln)?;
        let psd = cloud::psd(&cloud, &trap, self.mass_kg())?;
        Ok(TrajectoryPoint {
            cloud,
            trap,
            power_h_w: ph,
            power_v_w: pv,
            psd,
            rates,
        })
    }

    /// Reason the state can no longer be described by the model, if any.
    fn lost_reason(&self, p: &TrajectoryPoint) -> Option<String> {
        if p.cloud.n_total < 1.0 {
            return Some(format!("fewer than one atom left ({:.3})", p.cloud.n_total));
        }
        if p.cloud.n_thermal() > 0.0 && p.rates.eta < self.config.eta_floor {
            return Some(format!(
                "truncation parameter {:.3} fell below the floor {}",
                p.rates.eta, self.config.eta_floor
            ));
        }
        None
    }

    /// Output times: every breakpoint plus a uniform grid inside each
    /// segment.
    fn sample_times(&self, schedule: &RampSchedule) -> Vec<f64> {
        let dt = self.config.output_interval_s;
        let mut out = vec![0.0];
        for w in schedule.times_s.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut j = 1usize;
            loop {
                let t = a + j as f64 * dt;
                if t >= b - 1e-9 * dt {
                    break;
                }
                out.push(t);
                j += 1;
            }
            out.push(b);
        }
        out
    }

    pub fn run(&self, schedule: &RampSchedule) -> Result<Trajectory, DomainError> {
        self.run_from(schedule, self.config.initial_cloud())
    }

    /// Integrates `schedule` from `initial` (whose time is taken as 0).
    pub fn run_from(&self, schedule: &RampSchedule, initial: CloudState) -> Result<Trajectory, DomainError> {
        schedule.validate()?;
        let initial = CloudState { time_s: 0.0, ..initial };
        initial.validate()?;
        let mut traj = Trajectory {
            points: Vec::new(),
            lost: None,
            onset: None,
            clip_events: 0,
        };
        let first = match self.point(initial, schedule) {
            Ok(p) => p,
            Err(DomainError::Untrapped) => {
                return Err(DomainError::Invalid("schedule starts with both beams off".into()));
            }
            Err(e) => return Err(e),
        };
        if let Some(reason) = self.lost_reason(&first) {
            traj.points.push(first);
            traj.lost = Some(LostCloud { time_s: 0.0, reason });
            return Ok(traj);
        }
        traj.points.push(first);

        let c = &self.config;
        let tol = Tolerances {
            rtol: c.rtol,
            atol: [c.atol_atoms, c.atol_temperature_uk, c.atol_atoms],
        };
        let mut integ = Integrator::new(tol, c.output_interval_s.min(1e-3));
        integ.h_max = c.output_interval_s;
        let times = self.sample_times(schedule);
        let mut t = 0.0;
        let mut y = [initial.n_total, initial.temperature_uk, initial.n_bec];
        let mut seg = 0usize;

        for &t_out in &times[1..] {
            while seg + 2 < schedule.len() && t >= schedule.times_s[seg + 1] {
                seg += 1;
            }
            let t0 = schedule.times_s[seg];
            let p0 = (schedule.power_h_w[seg], schedule.power_v_w[seg]);
            let slopes = schedule.segment_slopes(seg);
            let mut rhs = |tt: f64, s: &[f64; 3]| -> Result<[f64; 3], DomainError> {
                let ph = (p0.0 + slopes.0 * (tt - t0)).max(0.0);
                let pv = (p0.1 + slopes.1 * (tt - t0)).max(0.0);
                let trap = self.trap.state(ph, pv)?;
                let dln = self.trap.dln_omega_bar_dt((ph, pv), slopes);
                let cl = CloudState {
                    n_total: s[0].max(0.0),
                    temperature_uk: s[1],
                    n_bec: s[2].clamp(0.0, s[0].max(0.0)),
                    time_s: tt,
                };
                let r = self.derivatives(&cl, &trap, dln)?;
                Ok([r.dn_dt(), r.dt_dt(), r.dn_bec_dt()])
            };
            let mut clip = |s: &mut [f64; 3]| {
                let before = *s;
                s[0] = s[0].max(0.0);
                s[2] = s[2].clamp(0.0, s[0]);
                before != *s
            };
            let step = integ.advance_to(&mut rhs, &mut t, &mut y, t_out, &mut clip);
            if let Err(e) = step {
                let reason = match e {
                    OdeError::Rhs { cause, .. } => format!("model left its domain: {cause}"),
                    other => other.to_string(),
                };
                traj.lost = Some(LostCloud { time_s: t, reason });
                break;
            }
            traj.clip_events += step.unwrap_or(0);
            let cl = CloudState {
                n_total: y[0],
                temperature_uk: y[1],
                n_bec: y[2],
                time_s: t_out,
            };
            let p = match self.point(cl, schedule) {
                Ok(p) => p,
                Err(e) => {
                    traj.lost = Some(LostCloud {
                        time_s: t_out,
                        reason: e.to_string(),
                    });
                    break;
                }
            };
            if let Some(reason) = self.lost_reason(&p) {
                traj.lost = Some(LostCloud { time_s: t_out, reason });
                break;
            }
            if traj.onset.is_none() {
                let prev = traj.last();
                let (a, b) = (prev.psd_all_atoms(), p.psd_all_atoms());
                if b >= PSD_CRITICAL {
                    let f = if a < PSD_CRITICAL && a > 0.0 {
                        ((PSD_CRITICAL / a).ln() / (b / a).ln()).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let lerp = |x: f64, z: f64| x + f * (z - x);
                    traj.onset = Some(CondensationOnset {
                        time_s: lerp(prev.time_s(), p.time_s()),
                        n_total: lerp(prev.cloud.n_total, p.cloud.n_total),
                        temperature_uk: lerp(prev.cloud.temperature_uk, p.cloud.temperature_uk),
                    });
                }
            }
            traj.points.push(p);
        }
        Ok(traj)
    }

    /// Condensate decay in a fixed trap: `dN_bec/dt = −k N_bec^{9/5}`, sampled
    /// at `n_samples` uniform times over `duration_s`.
    pub fn decay_bec(&self, initial: &CloudState, trap: &TrapState, duration_s: f64, n_samples: usize) -> Result<DecayCurve, DomainError> {
        DomainError::check_positive("initial condensate number", initial.n_bec)?;
        DomainError::check_positive("decay duration", duration_s)?;
        trap.ensure_trapped()?;
        if n_samples < 2 {
            return Err(DomainError::Invalid("decay curve needs at least two samples".into()));
        }
        let k = self.condensate_decay_coefficient(trap, initial.temperature_uk);
        let mut integ = Integrator::new(
            Tolerances {
                rtol: 1e-12,
                atol: [1e-9],
            },
            duration_s * 1e-4,
        );
        let mut rhs = |_t: f64, s: &[f64; 1]| Ok::<_, DomainError>([-k * s[0].max(0.0).powf(1.8)]);
        let mut none = |_: &mut [f64; 1]| false;
        let (mut t, mut y) = (0.0, [initial.n_bec]);
        let mut points = vec![(0.0, initial.n_bec)];
        for i in 1..n_samples {
            let target = duration_s * i as f64 / (n_samples - 1) as f64;
            integ
                .advance_to(&mut rhs, &mut t, &mut y, target, &mut none)
                .map_err(|e| DomainError::Invalid(e.to_string()))?;
            points.push((target, y[0]));
        }
        Ok(DecayCurve { points, coefficient: k })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// `(t [s], N_bec)` samples.
    pub points: Vec<(f64, f64)>,
    /// `k` of `dN/dt = −k N^{9/5}`.
    pub coefficient: f64,
}

impl DecayCurve {
    /// Closed-form solution `N(t) = (N₀^{−4/5} + (4/5) k t)^{−5/4}`.
    pub fn analytic(&self, t: f64) -> f64 {
        let n0 = self.points[0].1;
        (n0.powf(-0.8) + 0.8 * self.coefficient * t).powf(-1.25)
    }

    pub fn to_csv(&self) -> String {
        curve_csv(&self.points)
    }
}

pub const DECAY_CSV_HEADER: &str = "time_s,N_bec";

/// Decay-curve CSV with enough digits to reproduce every value bit-exactly.
pub fn curve_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from(DECAY_CSV_HEADER);
    out.push('\n');
    for (t, n) in points {
        let _ = writeln!(out, "{t:?},{n:?}");
    }
    out
}

/// Pointwise `(t·x_factor, N·y_factor)`.
pub fn rescale_curve(points: &[(f64, f64)], x_factor: f64, y_factor: f64) -> Result<Vec<(f64, f64)>, DomainError> {
    DomainError::check_positive("x factor", x_factor)?;
    DomainError::check_positive("y factor", y_factor)?;
    Ok(points.iter().map(|&(t, n)| (t * x_factor, n * y_factor)).collect())
}

pub const RESCALED_CSV_HEADER: &str = "time_s,N_bec,source_time_s,source_N_bec,x_factor,y_factor";

/// A curve together with the source samples and the accumulated factors it
/// was scaled by. Rescaling composes the factors and recomputes from the
/// source, so scaling by `a` then by `1/a` returns the source bit-exactly
/// whenever `a · (1/a)` rounds to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledCurve {
    pub source: Vec<(f64, f64)>,
    pub x_factor: f64,
    pub y_factor: f64,
}

impl RescaledCurve {
    pub fn identity(source: Vec<(f64, f64)>) -> Self {
        Self {
            source,
            x_factor: 1.0,
            y_factor: 1.0,
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.source
            .iter()
            .map(|&(t, n)| (t * self.x_factor, n * self.y_factor))
            .collect()
    }

    pub fn rescaled(&self, x_factor: f64, y_factor: f64) -> Result<Self, DomainError> {
        DomainError::check_positive("x factor", x_factor)?;
        DomainError::check_positive("y factor", y_factor)?;
        Ok(Self {
            source: self.source.clone(),
            x_factor: self.x_factor * x_factor,
            y_factor: self.y_factor * y_factor,
        })
    }

    /// Unit factors give the plain two-column curve file, anything else the
    /// six-column form.
    pub fn to_csv(&self) -> String {
        if self.x_factor == 1.0 && self.y_factor == 1.0 {
            return curve_csv(&self.source);
        }
        let mut out = String::from(RESCALED_CSV_HEADER);
        out.push('\n');
        for ((t, n), (ts, ns)) in self.points().into_iter().zip(&self.source) {
            let _ = writeln!(out, "{t:?},{n:?},{ts:?},{ns:?},{:?},{:?}", self.x_factor, self.y_factor);
        }
        out
    }

    /// Reads either file form.
    pub fn from_csv(text: &str) -> Result<Self, DomainError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let wide = match header {
            DECAY_CSV_HEADER => false,
            RESCALED_CSV_HEADER => true,
            other => return Err(DomainError::Invalid(format!("unrecognised curve header {other:?}"))),
        };
        let mut curve = Self::identity(Vec::new());
        for (i, line) in lines.enumerate() {
            let fields = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| DomainError::Invalid(format!("curve row {}: {e}", i + 1)))?;
            match (wide, fields.as_slice()) {
                (false, &[t, n]) => curve.source.push((t, n)),
                (true, &[_, _, t, n, x, y]) => {
                    if i > 0 && (x != curve.x_factor || y != curve.y_factor) {
                        return Err(DomainError::Invalid(format!("curve row {}: factors differ from the first row", i + 1)));
                    }
                    curve.source.push((t, n));
                    curve.x_factor = x;
                    curve.y_factor = y;
                }
                _ => return Err(DomainError::Invalid(format!("curve row {}: wrong number of columns", i + 1))),
            }
        }
        Ok(curve)
    }
}

/// Ideal-gas ground-state energy scale `ħω̄/k_B`, µK. Handy when choosing
/// trap depths that can reach condensation.
pub fn oscillator_temperature_uk(omega_bar: f64) -> f64 {
    HBAR * omega_bar / (K_B * MICRO)
}
