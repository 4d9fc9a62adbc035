//! Optical dipole trap built from one horizontal and one vertical Gaussian
//! beam.
//!
//! Lab frame: the horizontal beam propagates along `x`, the vertical beam
//! along `z`. A beam's `waist_x`/`waist_y` are its 1/e² intensity radii along
//! its two transverse axes: lab `(y, z)` for the horizontal beam and lab
//! `(x, y)` for the vertical one. Gravity sag is not modelled.

use serde::{Deserialize, Serialize};

use crate::constants::{uk_to_joule, K_B, MICRO};
use crate::error::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamAxis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub waist_x_um: f64,
    pub waist_y_um: f64,
    pub axis: BeamAxis,
    /// Depth per peak intensity, µK per (W/µm²).
    pub polarizability_coefficient: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_um: f64,
}

fn default_wavelength() -> f64 {
    1.064
}

impl BeamGeometry {
    pub fn new(
        waist_x_um: f64,
        waist_y_um: f64,
        axis: BeamAxis,
        polarizability_coefficient: f64,
    ) -> Result<Self, DomainError> {
        let geom = Self {
            waist_x_um,
            waist_y_um,
            axis,
            polarizability_coefficient,
            wavelength_um: default_wavelength(),
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        DomainError::check_positive("waist_x", self.waist_x_um)?;
        DomainError::check_positive("waist_y", self.waist_y_um)?;
        DomainError::check_positive("polarizability coefficient", self.polarizability_coefficient)?;
        DomainError::check_positive("wavelength", self.wavelength_um)?;
        Ok(())
    }

    /// Placeholder horizontal beam: 24.0 × 54.2 µm waists.
    pub fn horizontal_default() -> Self {
        Self {
            waist_x_um: 24.0,
            waist_y_um: 54.2,
            axis: BeamAxis::Horizontal,
            polarizability_coefficient: 3.0e4,
            wavelength_um: default_wavelength(),
        }
    }

    /// Placeholder vertical beam: round 100 µm waist.
    pub fn vertical_default() -> Self {
        Self {
            waist_x_um: 100.0,
            waist_y_um: 100.0,
            axis: BeamAxis::Vertical,
            polarizability_coefficient: 3.0e4,
            wavelength_um: default_wavelength(),
        }
    }

    fn rayleigh_ranges_um(&self) -> (f64, f64) {
        let pi = std::f64::consts::PI;
        (
            pi * self.waist_x_um * self.waist_x_um / self.wavelength_um,
            pi * self.waist_y_um * self.waist_y_um / self.wavelength_um,
        )
    }

    /// Curvature of the potential at the focus per µK of depth, in µm⁻²,
    /// along lab `(x, y, z)`.
    pub fn curvature_per_depth(&self) -> [f64; 3] {
        let (zx, zy) = self.rayleigh_ranges_um();
        let transverse_a = 4.0 / (self.waist_x_um * self.waist_x_um);
        let transverse_b = 4.0 / (self.waist_y_um * self.waist_y_um);
        let axial = 1.0 / (zx * zx) + 1.0 / (zy * zy);
        match self.axis {
            BeamAxis::Horizontal => [axial, transverse_a, transverse_b],
            BeamAxis::Vertical => [transverse_a, transverse_b, axial],
        }
    }

    /// `U(r) − U(0)` in µK for a beam of depth `depth_uk`, evaluated without
    /// cancellation near the focus.
    pub fn energy_above_bottom(&self, depth_uk: f64, pos_um: [f64; 3]) -> f64 {
        let [x, y, z] = pos_um;
        let (axial, a, b) = match self.axis {
            BeamAxis::Horizontal => (x, y, z),
            BeamAxis::Vertical => (z, x, y),
        };
        let (zx, zy) = self.rayleigh_ranges_um();
        let u = (axial / zx).powi(2);
        let v = (axial / zy).powi(2);
        let wa2 = self.waist_x_um * self.waist_x_um * (1.0 + u);
        let wb2 = self.waist_y_um * self.waist_y_um * (1.0 + v);
        let exponent = -2.0 * a * a / wa2 - 2.0 * b * b / wb2 - 0.5 * (u + v + u * v).ln_1p();
        -depth_uk * exponent.exp_m1()
    }
}

/// Peak depth of a single beam, µK: `α · 2P / (π w_x w_y)`.
pub fn beam_depth(power_w: f64, geom: &BeamGeometry) -> Result<f64, DomainError> {
    if !(power_w >= 0.0) || !power_w.is_finite() {
        return Err(DomainError::OutOfDomain {
            quantity: "beam power",
            requirement: "non-negative and finite",
            value: power_w,
        });
    }
    let intensity = 2.0 * power_w / (std::f64::consts::PI * geom.waist_x_um * geom.waist_y_um);
    Ok(geom.polarizability_coefficient * intensity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapConfig {
    SingleBeam,
    Crossed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapState {
    pub depth_uk: f64,
    /// Angular trap frequencies along lab x, y, z (rad/s).
    pub omega: [f64; 3],
    pub omega_bar: f64,
    pub config: TrapConfig,
    pub trapped: bool,
}

impl TrapState {
    pub fn untrapped() -> Self {
        Self {
            depth_uk: 0.0,
            omega: [0.0; 3],
            omega_bar: 0.0,
            config: TrapConfig::SingleBeam,
            trapped: false,
        }
    }

    pub fn from_frequencies(depth_uk: f64, omega: [f64; 3], config: TrapConfig) -> Self {
        Self {
            depth_uk,
            omega,
            omega_bar: geometric_mean(omega),
            config,
            trapped: depth_uk > 0.0,
        }
    }

    pub fn ensure_trapped(&self) -> Result<(), DomainError> {
        if self.trapped && self.depth_uk > 0.0 && self.omega_bar > 0.0 {
            Ok(())
        } else {
            Err(DomainError::Untrapped)
        }
    }
}

pub fn geometric_mean(omega: [f64; 3]) -> f64 {
    (omega[0] * omega[1] * omega[2]).cbrt()
}

/// Both beams plus the species mass: everything needed to go from powers to
/// a [`TrapState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    pub horizontal: BeamGeometry,
    pub vertical: BeamGeometry,
    #[serde(default = "default_crossed_threshold")]
    pub crossed_threshold: f64,
    pub mass_kg: f64,
}

fn default_crossed_threshold() -> f64 {
    0.05
}

impl TrapModel {
    pub fn new(horizontal: BeamGeometry, vertical: BeamGeometry, mass_kg: f64) -> Self {
        Self {
            horizontal,
            vertical,
            crossed_threshold: default_crossed_threshold(),
            mass_kg,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.horizontal.validate()?;
        self.vertical.validate()?;
        DomainError::check_non_negative("crossed threshold", self.crossed_threshold)?;
        DomainError::check_positive("atomic mass", self.mass_kg)?;
        Ok(())
    }

    /// ω² per watt of each beam along lab (x, y, z), in rad²/s² per W.
    pub fn omega_sq_per_watt(&self) -> ([f64; 3], [f64; 3]) {
        let per_watt = |g: &BeamGeometry| {
            let depth = beam_depth(1.0, g).unwrap_or(0.0);
            g.curvature_per_depth()
                .map(|c| uk_to_joule(c * depth) / (self.mass_kg * MICRO * MICRO))
        };
        (per_watt(&self.horizontal), per_watt(&self.vertical))
    }

    pub fn state(&self, power_h_w: f64, power_v_w: f64) -> Result<TrapState, DomainError> {
        let depth_h = beam_depth(power_h_w, &self.horizontal)?;
        let depth_v = beam_depth(power_v_w, &self.vertical)?;
        if depth_h == 0.0 && depth_v == 0.0 {
            return Ok(TrapState::untrapped());
        }
        let (kh, kv) = self.omega_sq_per_watt();
        let omega = [0, 1, 2].map(|i| (kh[i] * power_h_w + kv[i] * power_v_w).sqrt());
        let config = if depth_h == 0.0 || depth_v / depth_h > self.crossed_threshold {
            TrapConfig::Crossed
        } else {
            TrapConfig::SingleBeam
        };
        Ok(TrapState::from_frequencies(depth_h + depth_v, omega, config))
    }

    /// Summed `U(r) − U(0)` of both beams, µK.
    pub fn energy_above_bottom(&self, power_h_w: f64, power_v_w: f64, pos_um: [f64; 3]) -> f64 {
        let dh = beam_depth(power_h_w, &self.horizontal).unwrap_or(0.0);
        let dv = beam_depth(power_v_w, &self.vertical).unwrap_or(0.0);
        self.horizontal.energy_above_bottom(dh, pos_um) + self.vertical.energy_above_bottom(dv, pos_um)
    }

    /// Logarithmic rate of change of ω̄ for given powers and their time
    /// derivatives.
    pub fn dln_omega_bar_dt(&self, powers: (f64, f64), slopes: (f64, f64)) -> f64 {
        let (kh, kv) = self.omega_sq_per_watt();
        (0..3)
            .map(|i| {
                let w2 = kh[i] * powers.0 + kv[i] * powers.1;
                if w2 > 0.0 {
                    (kh[i] * slopes.0 + kv[i] * slopes.1) / w2
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / 6.0
    }

    /// Trap depth in units of k_B·T.
    pub fn eta(state: &TrapState, temperature_uk: f64) -> f64 {
        uk_to_joule(state.depth_uk) / (K_B * temperature_uk * MICRO)
    }
}
