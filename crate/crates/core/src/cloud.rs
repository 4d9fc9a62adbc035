//! Thermodynamic state of the cloud and its phase-space density.
//!
//! Both PSD methods are evaluated on the thermal fraction only and reduce to
//! the harmonic-trap Boltzmann expression `N_th (ħω̄ / k_B T)³`; they differ
//! in which route computes it. The frequencies in a [`TrapState`] always come
//! from the summed potential, so the crossed and single-beam labels describe
//! the trap rather than changing the physics. This is a stand-in model, not
//! the experimental per-configuration formulas.

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B, MICRO, PLANCK, PSD_CRITICAL};
use crate::error::DomainError;
use crate::trap::{TrapConfig, TrapState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudState {
    pub n_total: f64,
    pub temperature_uk: f64,
    pub n_bec: f64,
    pub time_s: f64,
}

impl CloudState {
    pub fn new(n_total: f64, temperature_uk: f64, n_bec: f64, time_s: f64) -> Result<Self, DomainError> {
        let s = Self {
            n_total,
            temperature_uk,
            n_bec,
            time_s,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn thermal(n_total: f64, temperature_uk: f64) -> Result<Self, DomainError> {
        Self::new(n_total, temperature_uk, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        DomainError::check_non_negative("atom number", self.n_total)?;
        DomainError::check_non_negative("condensate number", self.n_bec)?;
        if self.n_bec > self.n_total {
            return Err(DomainError::Invalid(format!(
                "condensate number {} exceeds total {}",
                self.n_bec, self.n_total
            )));
        }
        if self.n_thermal() > 0.0 {
            DomainError::check_positive("temperature", self.temperature_uk)?;
        }
        Ok(())
    }

    pub fn n_thermal(&self) -> f64 {
        (self.n_total - self.n_bec).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdMethod {
    Harmonic,
    SingleBeam,
}

impl PsdMethod {
    pub fn for_config(config: TrapConfig) -> Self {
        match config {
            TrapConfig::Crossed => PsdMethod::Harmonic,
            TrapConfig::SingleBeam => PsdMethod::SingleBeam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdValue {
    pub value: f64,
    pub method: PsdMethod,
}

impl PsdValue {
    pub fn is_condensed(&self) -> bool {
        is_condensed(self.value)
    }
}

pub fn is_condensed(psd: f64) -> bool {
    psd >= PSD_CRITICAL
}

fn check_thermal_inputs(n: f64, temperature_uk: f64, trap: &TrapState) -> Result<(), DomainError> {
    trap.ensure_trapped()?;
    if n > 0.0 && !(temperature_uk > 0.0) {
        return Err(DomainError::OutOfDomain {
            quantity: "temperature",
            requirement: "positive when thermal atoms are present",
            value: temperature_uk,
        });
    }
    Ok(())
}

/// Thermal de Broglie wavelength, metres.
pub fn de_broglie_wavelength(temperature_uk: f64, mass_kg: f64) -> f64 {
    PLANCK / (2.0 * std::f64::consts::PI * mass_kg * K_B * temperature_uk * MICRO).sqrt()
}

/// `N (ħω̄ / k_B T)³` for a given atom number.
pub fn harmonic_psd(n: f64, temperature_uk: f64, omega_bar: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    n * (HBAR * omega_bar / (K_B * temperature_uk * MICRO)).powi(3)
}

/// Peak density of a Boltzmann cloud of `n` atoms, m⁻³.
fn peak_density_si(n: f64, temperature_uk: f64, omega: [f64; 3], mass_kg: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let kt = K_B * temperature_uk * MICRO;
    let w3 = omega[0] * omega[1] * omega[2];
    n * w3 * (mass_kg / (2.0 * std::f64::consts::PI * kt)).powf(1.5)
}

/// Peak density of the thermal component, µm⁻³.
pub fn peak_density(cloud: &CloudState, trap: &TrapState, mass_kg: f64) -> Result<f64, DomainError> {
    let n = cloud.n_thermal();
    check_thermal_inputs(n, cloud.temperature_uk, trap)?;
    Ok(peak_density_si(n, cloud.temperature_uk, trap.omega, mass_kg) * 1e-18)
}

/// Peak density of the thermal component in m⁻³ (used by the simulator).
pub(crate) fn peak_density_m3(cloud: &CloudState, trap: &TrapState, mass_kg: f64) -> f64 {
    peak_density_si(cloud.n_thermal(), cloud.temperature_uk, trap.omega, mass_kg)
}

/// PSD with an explicitly chosen method.
pub fn psd_with(
    method: PsdMethod,
    cloud: &CloudState,
    trap: &TrapState,
    mass_kg: f64,
) -> Result<PsdValue, DomainError> {
    let n = cloud.n_thermal();
    check_thermal_inputs(n, cloud.temperature_uk, trap)?;
    let value = match method {
        PsdMethod::Harmonic => harmonic_psd(n, cloud.temperature_uk, trap.omega_bar),
        PsdMethod::SingleBeam => {
            let n0 = peak_density_si(n, cloud.temperature_uk, trap.omega, mass_kg);
            n0 * de_broglie_wavelength(cloud.temperature_uk, mass_kg).powi(3)
        }
    };
    Ok(PsdValue { value, method })
}

/// PSD of the thermal component using the method matching the trap
/// configuration.
pub fn psd(cloud: &CloudState, trap: &TrapState, mass_kg: f64) -> Result<PsdValue, DomainError> {
    psd_with(PsdMethod::for_config(trap.config), cloud, trap, mass_kg)
}

/// `max(0, 1 − (T/T_c)³)`.
pub fn condensate_fraction(temperature_uk: f64, critical_uk: f64) -> Result<f64, DomainError> {
    DomainError::check_non_negative("temperature", temperature_uk)?;
    DomainError::check_positive("critical temperature", critical_uk)?;
    Ok((1.0 - (temperature_uk / critical_uk).powi(3)).max(0.0))
}

/// Temperature (µK) at which `N (ħω̄/k_B T)³` reaches the condensation
/// threshold, i.e. the root of the same trigger used by the simulator.
pub fn critical_temperature(n: f64, omega_bar: f64) -> Result<f64, DomainError> {
    DomainError::check_positive("atom number", n)?;
    DomainError::check_positive("omega_bar", omega_bar)?;
    Ok(HBAR * omega_bar / (K_B * MICRO) * (n / PSD_CRITICAL).cbrt())
}
