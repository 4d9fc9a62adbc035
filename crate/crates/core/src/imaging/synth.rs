//! Forward model: in-trap column density of a thermal Gaussian plus a
//! Thomas-Fermi condensate, imaged in the lab x–y plane.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fit::TF_COLUMN_INTEGRAL;
use super::{AbsorptionImage, FitError};
use crate::cloud::CloudState;
use crate::constants::{uk_to_joule, HBAR};
use crate::rng::substream;
use crate::trap::TrapState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingParams {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size_um: f64,
    pub sigma_abs_um2: f64,
    /// Standard deviation of the additive optical-depth noise per pixel.
    pub noise_od: f64,
}

impl Default for ImagingParams {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            pixel_size_um: 1.0,
            sigma_abs_um2: 0.05,
            noise_od: 0.0,
        }
    }
}

impl ImagingParams {
    pub fn pixel_to_atoms(&self) -> f64 {
        self.pixel_size_um * self.pixel_size_um / self.sigma_abs_um2
    }
}

/// Ground truth of a synthetic image, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageTruth {
    pub n_thermal: f64,
    pub n_bec: f64,
    pub sigma_px: [f64; 2],
    pub tf_radius_px: [f64; 2],
    pub center_px: [f64; 2],
}

impl ImageTruth {
    /// Widths from the temperature and trap frequencies, radii from the
    /// Thomas-Fermi chemical potential, centred on the grid.
    pub fn from_cloud(
        cloud: &CloudState,
        trap: &TrapState,
        mass_kg: f64,
        scattering_length_m: f64,
        params: &ImagingParams,
    ) -> Result<Self, FitError> {
        cloud.validate().map_err(|e| FitError::Invalid(e.to_string()))?;
        if !trap.trapped || trap.omega.iter().any(|w| !(*w > 0.0)) {
            return Err(FitError::Invalid("cannot image an untrapped cloud".into()));
        }
        let px_m = params.pixel_size_um * 1e-6;
        let kt = uk_to_joule(cloud.temperature_uk.max(0.0));
        let sigma = |w: f64| (kt / (mass_kg * w * w)).sqrt() / px_m;
        let mu = if cloud.n_bec > 0.0 {
            let a_ho = (HBAR / (mass_kg * trap.omega_bar)).sqrt();
            0.5 * HBAR * trap.omega_bar * (15.0 * cloud.n_bec * scattering_length_m.abs().max(1e-12) / a_ho).powf(0.4)
        } else {
            0.0
        };
        let radius = |w: f64| (2.0 * mu / (mass_kg * w * w)).sqrt() / px_m;
        Ok(Self {
            n_thermal: cloud.n_thermal(),
            n_bec: cloud.n_bec,
            sigma_px: [sigma(trap.omega[0]), sigma(trap.omega[1])],
            tf_radius_px: [radius(trap.omega[0]), radius(trap.omega[1])],
            center_px: [(params.nx as f64 - 1.0) / 2.0, (params.ny as f64 - 1.0) / 2.0],
        })
    }

    pub fn validate(&self, params: &ImagingParams) -> Result<(), FitError> {
        let finite = [self.n_thermal, self.n_bec]
            .iter()
            .chain(&self.sigma_px)
            .chain(&self.tf_radius_px)
            .chain(&self.center_px)
            .all(|v| v.is_finite());
        if !finite || self.n_thermal < 0.0 || self.n_bec < 0.0 {
            return Err(FitError::Invalid(format!("bad ground truth {self:?}")));
        }
        if self.n_thermal > 0.0 && self.sigma_px.iter().any(|s| !(*s > 0.0)) {
            return Err(FitError::Invalid("thermal widths must be positive".into()));
        }
        if self.n_bec > 0.0 && self.tf_radius_px.iter().any(|r| !(*r > 0.0)) {
            return Err(FitError::Invalid("Thomas-Fermi radii must be positive".into()));
        }
        let dims = [params.nx as f64, params.ny as f64];
        for k in 0..2 {
            let mut half = 0.0f64;
            if self.n_thermal > 0.0 {
                half = half.max(4.0 * self.sigma_px[k]);
            }
            if self.n_bec > 0.0 {
                half = half.max(self.tf_radius_px[k]);
            }
            let c = self.center_px[k];
            if c - half < -0.5 || c + half > dims[k] - 0.5 {
                return Err(FitError::Geometry(format!(
                    "cloud extent {c:.1} ± {half:.1} px does not fit in {} px along {}",
                    dims[k],
                    ["x", "y"][k]
                )));
            }
        }
        Ok(())
    }

    /// Peak optical depth of the thermal component.
    pub fn thermal_peak_od(&self, params: &ImagingParams) -> f64 {
        if self.n_thermal <= 0.0 {
            return 0.0;
        }
        self.n_thermal / (params.pixel_to_atoms() * 2.0 * std::f64::consts::PI * self.sigma_px[0] * self.sigma_px[1])
    }

    pub fn tf_peak_od(&self, params: &ImagingParams) -> f64 {
        if self.n_bec <= 0.0 {
            return 0.0;
        }
        self.n_bec / (params.pixel_to_atoms() * TF_COLUMN_INTEGRAL * self.tf_radius_px[0] * self.tf_radius_px[1])
    }

    /// Noise-free optical depth at a pixel centre.
    pub fn od_at(&self, params: &ImagingParams, x: f64, y: f64) -> f64 {
        let dx = x - self.center_px[0];
        let dy = y - self.center_px[1];
        let mut od = 0.0;
        let a = self.thermal_peak_od(params);
        if a > 0.0 {
            let q = dx * dx / (self.sigma_px[0] * self.sigma_px[0]) + dy * dy / (self.sigma_px[1] * self.sigma_px[1]);
            od += a * (-0.5 * q).exp();
        }
        let b = self.tf_peak_od(params);
        if b > 0.0 {
            let u = 1.0
                - dx * dx / (self.tf_radius_px[0] * self.tf_radius_px[0])
                - dy * dy / (self.tf_radius_px[1] * self.tf_radius_px[1]);
            if u > 0.0 {
                od += b * u * u.sqrt();
            }
        }
        od
    }

    /// Renders the image with i.i.d. Gaussian pixel noise drawn from `seed`.
    pub fn render(&self, params: &ImagingParams, seed: u64) -> Result<AbsorptionImage, FitError> {
        self.validate(params)?;
        if !(params.noise_od >= 0.0 && params.noise_od.is_finite()) {
            return Err(FitError::Invalid(format!("noise level {}", params.noise_od)));
        }
        let mut img = AbsorptionImage::zeros(params.nx, params.ny, params.pixel_size_um, params.sigma_abs_um2);
        img.validate()?;
        let noise = Normal::new(0.0, params.noise_od).map_err(|e| FitError::Invalid(e.to_string()))?;
        let mut rng = substream(seed, "image-noise", 0);
        for iy in 0..params.ny {
            for ix in 0..params.nx {
                let mut v = self.od_at(params, ix as f64, iy as f64);
                if params.noise_od > 0.0 {
                    v += noise.sample(&mut rng);
                }
                img.data[iy * params.nx + ix] = v;
            }
        }
        Ok(img)
    }
}

/// Image of `cloud` held in `trap`.
pub fn synthesize(
    cloud: &CloudState,
    trap: &TrapState,
    mass_kg: f64,
    scattering_length_m: f64,
    params: &ImagingParams,
    seed: u64,
) -> Result<AbsorptionImage, FitError> {
    ImageTruth::from_cloud(cloud, trap, mass_kg, scattering_length_m, params)?.render(params, seed)
}
