//! Field- and temperature-dependent interactions.
//!
//! Low-order resonances shape the elastic scattering length through the
//! multi-resonance product `a(B) = a_bg ∏ (1 − Δᵢ/(B − B0ᵢ))`; the background
//! three-body coefficient follows `(a/a_bg)⁴`. High-order resonances do not
//! enter `a(B)`: they add a Lorentzian loss enhancement whose strength is
//! thermally activated, `exp(−T_act / max(T, T_floor))`, so they are
//! suppressed but never absent at low temperature. The result is clamped to
//! `[l3_background, l3_cap]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_RADIUS, CM6_TO_M6};
use crate::error::{DomainError, Error};

/// Lower bound on the temperature in the activation factor, µK (1 nK).
pub const T_FLOOR_UK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceOrder {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub position_g: f64,
    pub width_g: f64,
    pub order: ResonanceOrder,
    /// Only used for high-order resonances.
    #[serde(default)]
    pub activation_temperature_uk: f64,
    /// Peak three-body enhancement of a fully activated high-order
    /// resonance, cm⁶/s.
    #[serde(default)]
    pub l3_peak_cm6_s: f64,
}

impl Resonance {
    pub fn low(position_g: f64, width_g: f64) -> Self {
        Self {
            position_g,
            width_g,
            order: ResonanceOrder::Low,
            activation_temperature_uk: 0.0,
            l3_peak_cm6_s: 0.0,
        }
    }

    pub fn high(position_g: f64, width_g: f64, activation_temperature_uk: f64, l3_peak_cm6_s: f64) -> Self {
        Self {
            position_g,
            width_g,
            order: ResonanceOrder::High,
            activation_temperature_uk,
            l3_peak_cm6_s,
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        DomainError::check_positive("resonance position", self.position_g)?;
        if self.width_g == 0.0 || !self.width_g.is_finite() {
            return Err(DomainError::OutOfDomain {
                quantity: "resonance width",
                requirement: "non-zero and finite",
                value: self.width_g,
            });
        }
        DomainError::check_non_negative("activation temperature", self.activation_temperature_uk)?;
        DomainError::check_non_negative("l3 peak", self.l3_peak_cm6_s)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeshbachScenario {
    #[serde(default)]
    pub name: String,
    pub field_g: f64,
    pub a_background_bohr: f64,
    #[serde(default, rename = "resonance")]
    pub resonances: Vec<Resonance>,
    pub l3_background_cm6_s: f64,
    pub l3_cap_cm6_s: f64,
    /// Fields evaluated by [`scenario_table`]; empty for user scenarios.
    #[serde(default, rename = "table_field")]
    pub table_fields: Vec<f64>,
    /// Temperature (µK) at which the table ranks fields.
    #[serde(default = "default_table_temperature")]
    pub table_temperature_uk: f64,
}

fn default_table_temperature() -> f64 {
    0.3
}

/// Illustrative thulium scenario shipped with the crate.
pub const BUILTIN_THULIUM: &str = include_str!("../scenarios/thulium.toml");

impl FeshbachScenario {
    pub fn validate(&self) -> Result<(), DomainError> {
        DomainError::check_positive("magnetic field", self.field_g)?;
        DomainError::check_positive("l3 background", self.l3_background_cm6_s)?;
        if !(self.l3_cap_cm6_s >= self.l3_background_cm6_s) {
            return Err(DomainError::Invalid(format!(
                "l3 cap {} is below the background {}",
                self.l3_cap_cm6_s, self.l3_background_cm6_s
            )));
        }
        if self.a_background_bohr == 0.0 || !self.a_background_bohr.is_finite() {
            return Err(DomainError::OutOfDomain {
                quantity: "background scattering length",
                requirement: "non-zero and finite",
                value: self.a_background_bohr,
            });
        }
        self.resonances.iter().try_for_each(Resonance::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn builtin_thulium() -> Self {
        Self::from_toml(BUILTIN_THULIUM).expect("bundled scenario parses")
    }

    pub fn at_field(&self, field_g: f64) -> Self {
        Self {
            field_g,
            ..self.clone()
        }
    }

    /// Scattering length in Bohr radii.
    pub fn scattering_length(&self, field_g: f64) -> Result<f64, DomainError> {
        let mut a = self.a_background_bohr;
        for r in self.resonances.iter().filter(|r| r.order == ResonanceOrder::Low) {
            let detuning = field_g - r.position_g;
            if detuning == 0.0 {
                return Err(DomainError::Pole {
                    field: field_g,
                    position: r.position_g,
                });
            }
            a *= 1.0 - r.width_g / detuning;
        }
        Ok(a)
    }

    /// Scattering length at the scenario field, metres.
    pub fn scattering_length_m(&self) -> Result<f64, DomainError> {
        Ok(self.scattering_length(self.field_g)? * BOHR_RADIUS)
    }

    /// Elastic cross-section `8πa²` at the scenario field, m².
    pub fn elastic_cross_section_m2(&self) -> Result<f64, DomainError> {
        let a = self.scattering_length_m()?;
        Ok(8.0 * std::f64::consts::PI * a * a)
    }

    /// Three-body loss coefficient L₃, cm⁶/s.
    pub fn three_body_rate(&self, field_g: f64, temperature_uk: f64) -> f64 {
        let base = match self.scattering_length(field_g) {
            Ok(a) => self.l3_background_cm6_s * (a / self.a_background_bohr).powi(4),
            Err(_) => f64::INFINITY,
        };
        let t = temperature_uk.max(T_FLOOR_UK);
        let enhancement: f64 = self
            .resonances
            .iter()
            .filter(|r| r.order == ResonanceOrder::High)
            .map(|r| {
                let w2 = r.width_g * r.width_g;
                let d = field_g - r.position_g;
                r.l3_peak_cm6_s * w2 / (d * d + w2) * (-r.activation_temperature_uk / t).exp()
            })
            .sum();
        let total = base + enhancement;
        if total.is_nan() {
            return self.l3_cap_cm6_s;
        }
        total.clamp(self.l3_background_cm6_s, self.l3_cap_cm6_s)
    }

    /// L₃ at the scenario field, m⁶/s.
    pub fn three_body_rate_m6(&self, temperature_uk: f64) -> f64 {
        self.three_body_rate(self.field_g, temperature_uk) * CM6_TO_M6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateauTag {
    Relieved,
    Intermediate,
    Saturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub field_g: f64,
    pub l3_cm6_s: f64,
    pub tag: PlateauTag,
}

/// Field table of a scenario, ranked by L₃ at the table temperature: the
/// largest is tagged saturating, the smallest relieved.
pub fn scenario_table_for(scenario: &FeshbachScenario) -> Vec<ScenarioRow> {
    let mut rows: Vec<ScenarioRow> = scenario
        .table_fields
        .iter()
        .map(|&b| ScenarioRow {
            field_g: b,
            l3_cm6_s: scenario.three_body_rate(b, scenario.table_temperature_uk),
            tag: PlateauTag::Intermediate,
        })
        .collect();
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.l3_cm6_s), hi.max(r.l3_cm6_s))
    });
    for r in &mut rows {
        if r.l3_cm6_s == hi && hi > lo {
            r.tag = PlateauTag::Saturating;
        } else if r.l3_cm6_s == lo {
            r.tag = PlateauTag::Relieved;
        }
    }
    rows
}

/// The built-in thulium field set: 3.91 G (saturating), 4.80 G (relieved)
/// and two further fields in between.
pub fn scenario_table() -> Vec<ScenarioRow> {
    scenario_table_for(&FeshbachScenario::builtin_thulium())
}
