//! Physical constants (CODATA 2018, SI) and unit conversions.

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
pub const K_B: f64 = 1.380_649e-23;
pub const AMU: f64 = 1.660_539_066_60e-27;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Peak phase-space density at the onset of Bose-Einstein condensation,
/// ζ(3/2) to four digits.
pub const PSD_CRITICAL: f64 = 2.612;

pub const MICRO: f64 = 1e-6;

/// cm⁶/s → m⁶/s
pub const CM6_TO_M6: f64 = 1e-12;

/// Mass of ¹⁶⁹Tm in atomic mass units.
pub const THULIUM_169_AMU: f64 = 168.934_218;

#[inline]
pub fn uk_to_joule(t_uk: f64) -> f64 {
    t_uk * MICRO * K_B
}

#[inline]
pub fn joule_to_uk(e: f64) -> f64 {
    e / (K_B * MICRO)
}
