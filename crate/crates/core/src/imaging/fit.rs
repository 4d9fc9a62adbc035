//! Masked thermal fit, mask-size sweep and the bimodal decomposition.

use serde::{Deserialize, Serialize};

use super::lm::{self, LmOptions, PixelModel, Sample};
use super::{AbsorptionImage, FitError};

/// `∬ (1 − x²/R_x² − y²/R_y²)^{3/2} dx dy / (R_x R_y)`.
pub const TF_COLUMN_INTEGRAL: f64 = 2.0 * std::f64::consts::PI / 5.0;

pub const DEFAULT_S_GRID: [f64; 13] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0];

const GAUSSIAN_PARAMS: usize = 6;
const TF_PARAMS: usize = 5;
/// Unmasked pixels required per free parameter.
const PIXELS_PER_PARAM: usize = 6;
/// Width in pixels of the edge band used to estimate the noise.
const BORDER_BAND: usize = 4;
const TF_MIN_SIGNIFICANCE: f64 = 5.0;

/// Elliptical exclusion region. Semi-axes are `size_s · sigma_ref_px` along x
/// and `aspect` times that along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub center_px: [f64; 2],
    pub size_s: f64,
    pub sigma_ref_px: f64,
    pub aspect: f64,
}

impl MaskSpec {
    pub fn none() -> Self {
        Self {
            center_px: [0.0, 0.0],
            size_s: 0.0,
            sigma_ref_px: 1.0,
            aspect: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let ok = self.size_s >= 0.0
            && self.size_s.is_finite()
            && self.aspect > 0.0
            && self.aspect.is_finite()
            && self.sigma_ref_px > 0.0
            && self.sigma_ref_px.is_finite()
            && self.center_px.iter().all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(FitError::Invalid(format!("bad mask {self:?}")))
        }
    }

    pub fn semi_axes(&self) -> [f64; 2] {
        let a = self.size_s * self.sigma_ref_px;
        [a, a * self.aspect]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [a, b] = self.semi_axes();
        if a <= 0.0 || b <= 0.0 {
            return false;
        }
        let dx = (x - self.center_px[0]) / a;
        let dy = (y - self.center_px[1]) / b;
        dx * dx + dy * dy <= 1.0
    }
}

/// Gaussian plus offset; coordinates are absolute pixel positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center_px: [f64; 2],
    pub sigma_px: [f64; 2],
    pub offset: f64,
    pub residual_norm: f64,
    pub pixels: usize,
}

impl GaussianFit {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.center_px[0]) / self.sigma_px[0];
        let dy = (y - self.center_px[1]) / self.sigma_px[1];
        self.amplitude * (-0.5 * (dx * dx + dy * dy)).exp() + self.offset
    }

    /// Integrated signal above the offset, in units of OD·pixel².
    pub fn integral(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.sigma_px[0] * self.sigma_px[1] * self.amplitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThomasFermiFit {
    pub peak_od: f64,
    pub center_px: [f64; 2],
    pub radius_px: [f64; 2],
    pub residual_norm: f64,
}

impl ThomasFermiFit {
    pub fn integral(&self) -> f64 {
        TF_COLUMN_INTEGRAL * self.radius_px[0] * self.radius_px[1] * self.peak_od
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub s: f64,
    pub sigma_x_px: f64,
    pub fit: GaussianFit,
    /// The fitted thermal component holds fewer atoms than the detection
    /// floor, so its width carries no information.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub s_grid: Vec<f64>,
    pub tol_rel: f64,
    /// Condensates below `max(detection_floor_atoms,
    /// detection_floor_fraction · n_thermal)` count as not detected.
    pub detection_floor_atoms: f64,
    pub detection_floor_fraction: f64,
    /// The sweep stops before a mask that leaves σ_x with a larger predicted
    /// relative standard error than this.
    pub max_width_uncertainty: f64,
    #[serde(skip)]
    pub lm: LmOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            s_grid: DEFAULT_S_GRID.to_vec(),
            tol_rel: 0.01,
            detection_floor_atoms: 1000.0,
            detection_floor_fraction: 0.1,
            max_width_uncertainty: 0.005,
            lm: LmOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn detection_floor(&self, n_thermal: f64) -> f64 {
        self.detection_floor_atoms.max(self.detection_floor_fraction * n_thermal.max(0.0))
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.s_grid.len() < 3 {
            return Err(FitError::Invalid("the s grid needs at least three points".into()));
        }
        if self.s_grid[0] < 0.0 || self.s_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FitError::Invalid("the s grid must be non-negative and increasing".into()));
        }
        if !(self.tol_rel > 0.0 && self.tol_rel.is_finite()) {
            return Err(FitError::Invalid(format!("tolerance {}", self.tol_rel)));
        }
        if !(self.max_width_uncertainty > 0.0) {
            return Err(FitError::Invalid(format!("width uncertainty limit {}", self.max_width_uncertainty)));
        }
        if !(0.0..1.0).contains(&self.detection_floor_fraction) {
            return Err(FitError::Invalid(format!("detection floor fraction {}", self.detection_floor_fraction)));
        }
        if !(self.detection_floor_atoms >= 0.0) {
            return Err(FitError::Invalid(format!("detection floor {}", self.detection_floor_atoms)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalFitResult {
    pub thermal: GaussianFit,
    /// `None` when the residual carries no positive condensate peak.
    pub tf: Option<ThomasFermiFit>,
    pub n_thermal: f64,
    pub n_bec: f64,
    pub bec_detected: bool,
    pub chosen_s: f64,
    pub s_sweep: Vec<(f64, f64)>,
    pub preliminary: GaussianFit,
}

/// Integer pixel near the intensity centroid. Model coordinates are taken
/// relative to it so fits are unchanged by whole-pixel shifts.
fn reference_pixel(image: &AbsorptionImage, background: f64) -> [f64; 2] {
    let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let peak = image.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - background;
    let cut = 0.5 * peak;
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            let v = image.get(ix, iy) - background;
            if v > cut {
                w += v;
                sx += v * ix as f64;
                sy += v * iy as f64;
            }
        }
    }
    if w > 0.0 {
        [(sx / w).round(), (sy / w).round()]
    } else {
        [((image.nx - 1) / 2) as f64, ((image.ny - 1) / 2) as f64]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn border_median(image: &AbsorptionImage) -> f64 {
    let mut v = Vec::new();
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            if ix == 0 || iy == 0 || ix + 1 == image.nx || iy + 1 == image.ny {
                v.push(image.get(ix, iy));
            }
        }
    }
    median(v)
}

struct Gaussian2d;

impl PixelModel<GAUSSIAN_PARAMS> for Gaussian2d {
    fn value_grad(&self, p: &[f64; GAUSSIAN_PARAMS], x: f64, y: f64) -> (f64, [f64; GAUSSIAN_PARAMS]) {
        let [a, x0, y0, sx, sy, c] = *p;
        let dx = x - x0;
        let dy = y - y0;
        let (ix2, iy2) = (1.0 / (sx * sx), 1.0 / (sy * sy));
        let e = (-0.5 * (dx * dx * ix2 + dy * dy * iy2)).exp();
        let ae = a * e;
        (
            ae + c,
            [e, ae * dx * ix2, ae * dy * iy2, ae * dx * dx * ix2 / sx, ae * dy * dy * iy2 / sy, 1.0],
        )
    }
}

struct ThomasFermi2d;

impl PixelModel<TF_PARAMS> for ThomasFermi2d {
    fn value_grad(&self, p: &[f64; TF_PARAMS], x: f64, y: f64) -> (f64, [f64; TF_PARAMS]) {
        let [b, x0, y0, rx, ry] = *p;
        let dx = x - x0;
        let dy = y - y0;
        let (irx2, iry2) = (1.0 / (rx * rx), 1.0 / (ry * ry));
        let u = 1.0 - dx * dx * irx2 - dy * dy * iry2;
        if u <= 0.0 {
            return (0.0, [0.0; TF_PARAMS]);
        }
        let su = u.sqrt();
        let du = 1.5 * b * su;
        (
            b * u * su,
            [
                u * su,
                du * 2.0 * dx * irx2,
                du * 2.0 * dy * iry2,
                du * 2.0 * dx * dx * irx2 / rx,
                du * 2.0 * dy * dy * iry2 / ry,
            ],
        )
    }
}

/// Pixel samples relative to `origin`, skipping masked pixels.
fn samples(image: &AbsorptionImage, origin: [f64; 2], mask: &MaskSpec) -> Vec<Sample> {
    let mut out = Vec::with_capacity(image.data.len());
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            let (x, y) = (ix as f64, iy as f64);
            if !mask.contains(x, y) {
                out.push((x - origin[0], y - origin[1], image.get(ix, iy)));
            }
        }
    }
    out
}

/// Moment-based starting point, relative to `origin`.
fn initial_gaussian(image: &AbsorptionImage, origin: [f64; 2], background: f64) -> [f64; GAUSSIAN_PARAMS] {
    let peak = image.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - background;
    let half = 0.5 * peak;
    let (mut n, mut mx, mut my) = (0.0, 0.0, 0.0);
    let (mut vx, mut vy) = (0.0, 0.0);
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            if image.get(ix, iy) - background > half {
                let (x, y) = (ix as f64 - origin[0], iy as f64 - origin[1]);
                n += 1.0;
                mx += x;
                my += y;
                vx += x * x;
                vy += y * y;
            }
        }
    }
    if n < 1.0 || peak <= 0.0 {
        let s = image.nx.min(image.ny) as f64 / 8.0;
        return [peak.max(1e-12), 0.0, 0.0, s, s, background];
    }
    mx /= n;
    my /= n;
    let aspect = ((vy / n - my * my).max(0.25) / (vx / n - mx * mx).max(0.25)).sqrt();
    // area above half maximum is 2π ln2 σ_x σ_y
    let sxsy = n / (2.0 * std::f64::consts::PI * std::f64::consts::LN_2);
    let sx = (sxsy / aspect).sqrt().max(0.5);
    [peak, mx, my, sx, sx * aspect, background]
}

fn gaussian_from(p: [f64; GAUSSIAN_PARAMS], origin: [f64; 2], chi2: f64, pixels: usize) -> GaussianFit {
    GaussianFit {
        amplitude: p[0],
        center_px: [p[1] + origin[0], p[2] + origin[1]],
        sigma_px: [p[3].abs(), p[4].abs()],
        offset: p[5],
        residual_norm: chi2.sqrt(),
        pixels,
    }
}

fn fit_gaussian_from(
    image: &AbsorptionImage,
    origin: [f64; 2],
    mask: &MaskSpec,
    initial: [f64; GAUSSIAN_PARAMS],
    opts: &LmOptions,
) -> Result<GaussianFit, FitError> {
    mask.validate()?;
    let data = samples(image, origin, mask);
    let required = PIXELS_PER_PARAM * GAUSSIAN_PARAMS;
    if data.len() < required {
        return Err(FitError::TooFewPixels {
            available: data.len(),
            required,
        });
    }
    let r = lm::fit(&Gaussian2d, &data, initial, opts)?;
    let fit = gaussian_from(r.params, origin, r.chi2, data.len());
    if !(fit.sigma_px[0] > 0.0 && fit.sigma_px[1] > 0.0) {
        return Err(FitError::NonFinite);
    }
    Ok(fit)
}

/// Least-squares Gaussian-plus-offset fit to the pixels outside `mask`.
pub fn fit_thermal_masked(image: &AbsorptionImage, mask: &MaskSpec) -> Result<GaussianFit, FitError> {
    image.validate()?;
    let background = border_median(image);
    let origin = reference_pixel(image, background);
    let init = initial_gaussian(image, origin, background);
    fit_gaussian_from(image, origin, mask, init, &LmOptions::default())
}

/// Unmasked preliminary fit, then one masked fit per grid value. The mask is
/// centred on the preliminary centre with the preliminary aspect and σ_x as
/// its unit. The sweep stops at the first `s` that leaves too few pixels.
pub fn mask_sweep(image: &AbsorptionImage, cfg: &FitConfig) -> Result<(GaussianFit, Vec<SweepPoint>), FitError> {
    cfg.validate()?;
    let opts = &cfg.lm;
    image.validate()?;
    let background = border_median(image);
    let origin = reference_pixel(image, background);
    let init = initial_gaussian(image, origin, background);
    let prelim = fit_gaussian_from(image, origin, &MaskSpec::none(), init, opts)?;
    let mut sweep = Vec::with_capacity(cfg.s_grid.len());
    let mut start = to_params(&prelim, origin);
    let noise = border_noise(image);
    for &s in &cfg.s_grid {
        let mask = mask_for(&prelim, s);
        if noise > 0.0 {
            match width_uncertainty(image, origin, &mask, &start, noise) {
                Some(u) if u <= cfg.max_width_uncertainty => {}
                _ => break,
            }
        }
        let fit = match fit_gaussian_from(image, origin, &mask, start, opts) {
            Ok(f) => f,
            Err(FitError::TooFewPixels { .. }) => break,
            Err(e) => return Err(e),
        };
        start = to_params(&fit, origin);
        sweep.push(SweepPoint {
            s,
            sigma_x_px: fit.sigma_px[0],
            fit,
            absent: fit.integral() * image.pixel_to_atoms() < cfg.detection_floor_atoms,
        });
    }
    Ok((prelim, sweep))
}

/// Pixel noise from the median absolute deviation of a band along the edges.
fn border_noise(image: &AbsorptionImage) -> f64 {
    let band = BORDER_BAND.min(image.nx / 4).min(image.ny / 4).max(1);
    let mut v = Vec::new();
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            if ix < band || iy < band || ix + band >= image.nx || iy + band >= image.ny {
                v.push(image.get(ix, iy));
            }
        }
    }
    let m = median(v.clone());
    let mad = median(v.into_iter().map(|x| (x - m).abs()).collect());
    // MAD of a normal distribution is 0.6745 σ
    mad / 0.674_489_75
}

/// Predicted relative standard error of σ_x from the Fisher information of
/// the unmasked pixels, evaluated at `p`.
fn width_uncertainty(
    image: &AbsorptionImage,
    origin: [f64; 2],
    mask: &MaskSpec,
    p: &[f64; GAUSSIAN_PARAMS],
    noise: f64,
) -> Option<f64> {
    let mut info = nalgebra::SMatrix::<f64, GAUSSIAN_PARAMS, GAUSSIAN_PARAMS>::zeros();
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            let (x, y) = (ix as f64, iy as f64);
            if mask.contains(x, y) {
                continue;
            }
            let (_, g) = Gaussian2d.value_grad(p, x - origin[0], y - origin[1]);
            let g = nalgebra::SVector::<f64, GAUSSIAN_PARAMS>::from_column_slice(&g);
            info += g * g.transpose();
        }
    }
    let cov = info.try_inverse()? * (noise * noise);
    let var = cov[(3, 3)];
    (var >= 0.0).then(|| var.sqrt() / p[3].abs())
}

fn to_params(f: &GaussianFit, origin: [f64; 2]) -> [f64; GAUSSIAN_PARAMS] {
    [
        f.amplitude,
        f.center_px[0] - origin[0],
        f.center_px[1] - origin[1],
        f.sigma_px[0],
        f.sigma_px[1],
        f.offset,
    ]
}

fn mask_for(prelim: &GaussianFit, s: f64) -> MaskSpec {
    MaskSpec {
        center_px: prelim.center_px,
        size_s: s,
        sigma_ref_px: prelim.sigma_px[0],
        aspect: prelim.sigma_px[1] / prelim.sigma_px[0],
    }
}

/// Index of the smallest `s` from which every later consecutive pair of σ_x
/// values differs by less than `tol_rel`. Two absent thermal fits in a row
/// count as unchanged.
fn plateau_index(sweep: &[SweepPoint], tol_rel: f64) -> Option<usize> {
    if sweep.len() < 2 {
        return None;
    }
    let mut start = sweep.len() - 1;
    while start > 0 {
        let (p, q) = (&sweep[start - 1], &sweep[start]);
        let same = if p.absent || q.absent {
            p.absent && q.absent
        } else {
            (q.sigma_x_px - p.sigma_x_px).abs() / p.sigma_x_px < tol_rel
        };
        if same {
            start -= 1;
        } else {
            break;
        }
    }
    (start < sweep.len() - 1).then_some(start)
}

/// Chosen `s` and the full `(s, σ_x)` sweep.
pub fn select_mask_size(
    image: &AbsorptionImage,
    s_grid: &[f64],
    tol_rel: f64,
) -> Result<(f64, Vec<SweepPoint>), FitError> {
    let cfg = FitConfig {
        s_grid: s_grid.to_vec(),
        tol_rel,
        ..FitConfig::default()
    };
    select_mask_size_with(image, &cfg)
}

pub fn select_mask_size_with(image: &AbsorptionImage, cfg: &FitConfig) -> Result<(f64, Vec<SweepPoint>), FitError> {
    let (_, sweep) = mask_sweep(image, cfg)?;
    match plateau_index(&sweep, cfg.tol_rel) {
        Some(i) => Ok((sweep[i].s, sweep)),
        None => Err(FitError::Plateau {
            sweep: sweep.iter().map(|p| (p.s, p.sigma_x_px)).collect(),
        }),
    }
}

/// Residual after subtracting the thermal model (offset included) pixel by
/// pixel.
pub fn subtract(image: &AbsorptionImage, thermal: &GaussianFit) -> AbsorptionImage {
    let mut out = image.clone();
    for iy in 0..image.ny {
        for ix in 0..image.nx {
            out.data[iy * image.nx + ix] -= thermal.value(ix as f64, iy as f64);
        }
    }
    out
}

fn fit_thomas_fermi(
    residual: &AbsorptionImage,
    origin: [f64; 2],
    thermal: &GaussianFit,
    opts: &LmOptions,
) -> Result<Option<ThomasFermiFit>, FitError> {
    let c = thermal.center_px;
    let peak = residual.get(
        (c[0].round().clamp(0.0, (residual.nx - 1) as f64)) as usize,
        (c[1].round().clamp(0.0, (residual.ny - 1) as f64)) as usize,
    );
    let max = residual.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let b0 = peak.max(0.5 * max);
    if !(b0 > 0.0) {
        return Ok(None);
    }
    // (1 − u)^{3/2} > 1/2 inside r/R < 0.608, an area of 0.37 π R_x R_y
    let above = residual.data.iter().filter(|&&v| v > 0.5 * b0).count() as f64;
    let aspect = thermal.sigma_px[1] / thermal.sigma_px[0];
    let rx = (above / (0.37 * std::f64::consts::PI * aspect)).sqrt().max(1.0);
    let init = [b0, c[0] - origin[0], c[1] - origin[1], rx, rx * aspect];
    let data = samples(residual, origin, &MaskSpec::none());
    let r = lm::fit(&ThomasFermi2d, &data, init, opts)?;
    let [b, x0, y0, rx, ry] = r.params;
    if !(b > 0.0) {
        return Ok(None);
    }
    let (rx, ry) = (rx.abs(), ry.abs());
    let (cx, cy) = (x0 + origin[0], y0 + origin[1]);
    let (w, h) = (residual.nx as f64, residual.ny as f64);
    let inside = rx >= 0.5
        && ry >= 0.5
        && rx <= 0.5 * w
        && ry <= 0.5 * h
        && (0.0..w).contains(&cx)
        && (0.0..h).contains(&cy);
    // column sum over the TF footprint against the noise of that many pixels
    let noise = border_noise(residual);
    let footprint = std::f64::consts::PI * rx * ry;
    let significant = noise <= 0.0 || TF_COLUMN_INTEGRAL * b * rx * ry >= TF_MIN_SIGNIFICANCE * noise * footprint.sqrt();
    if !(inside && significant) {
        return Ok(None);
    }
    Ok(Some(ThomasFermiFit {
        peak_od: b,
        center_px: [x0 + origin[0], y0 + origin[1]],
        radius_px: [rx, ry],
        residual_norm: r.chi2.sqrt(),
    }))
}

/// Mask sweep, thermal fit at the chosen size, subtraction, then a
/// Thomas-Fermi fit to the residual.
pub fn fit_bimodal(image: &AbsorptionImage, cfg: &FitConfig) -> Result<BimodalFitResult, FitError> {
    let (prelim, sweep) = mask_sweep(image, cfg)?;
    let table: Vec<(f64, f64)> = sweep.iter().map(|p| (p.s, p.sigma_x_px)).collect();
    let Some(i) = plateau_index(&sweep, cfg.tol_rel) else {
        return Err(FitError::Plateau { sweep: table });
    };
    let thermal = sweep[i].fit;
    let residual = subtract(image, &thermal);
    let origin = reference_pixel(image, border_median(image));
    let tf = fit_thomas_fermi(&residual, origin, &thermal, &cfg.lm)?;
    let to_atoms = image.pixel_to_atoms();
    let n_bec = tf.map_or(0.0, |t| t.integral() * to_atoms);
    let n_thermal = thermal.integral() * to_atoms;
    Ok(BimodalFitResult {
        thermal,
        tf,
        n_thermal,
        n_bec,
        bec_detected: n_bec >= cfg.detection_floor(n_thermal),
        chosen_s: sweep[i].s,
        s_sweep: table,
        preliminary: prelim,
    })
}

pub fn sweep_csv(sweep: &[(f64, f64)]) -> String {
    let mut out = String::from("s,sigma_x_px\n");
    for (s, sigma) in sweep {
        out.push_str(&format!("{s:?},{sigma:?}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{ImageTruth, ImagingParams};
    use super::*;

    fn params(noise: f64) -> ImagingParams {
        ImagingParams {
            noise_od: noise,
            ..ImagingParams::default()
        }
    }

    fn truth(n_th: f64, n_bec: f64) -> ImageTruth {
        ImageTruth {
            n_thermal: n_th,
            n_bec,
            sigma_px: [12.0, 10.0],
            tf_radius_px: [8.0, 6.5],
            center_px: [63.3, 61.8],
        }
    }

    #[test]
    fn tf_integral_by_quadrature() {
        // midpoint rule in polar coordinates on the unit disc
        let (nr, nt) = (4000, 64);
        let mut sum = 0.0;
        for i in 0..nr {
            let r = (i as f64 + 0.5) / nr as f64;
            let f = (1.0 - r * r).powf(1.5) * r;
            sum += f * (1.0 / nr as f64) * nt as f64 * (2.0 * std::f64::consts::PI / nt as f64);
        }
        assert!((sum / TF_COLUMN_INTEGRAL - 1.0).abs() < 1e-6, "{sum}");
    }

    #[test]
    fn model_gradients_match_differences() {
        let pg = [1.3, 0.4, -0.7, 5.0, 3.5, 0.02];
        let pt = [0.8, 0.2, -0.1, 6.0, 4.0];
        for &(x, y) in &[(1.0, 2.0), (-3.0, 0.5), (2.5, -1.5)] {
            let (_, g) = Gaussian2d.value_grad(&pg, x, y);
            for k in 0..6 {
                let mut a = pg;
                let mut b = pg;
                a[k] += 1e-6;
                b[k] -= 1e-6;
                let fd = (Gaussian2d.value(&a, x, y) - Gaussian2d.value(&b, x, y)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-6, "gaussian {k}");
            }
            let (_, g) = ThomasFermi2d.value_grad(&pt, x, y);
            for k in 0..5 {
                let mut a = pt;
                let mut b = pt;
                a[k] += 1e-6;
                b[k] -= 1e-6;
                let fd = (ThomasFermi2d.value(&a, x, y) - ThomasFermi2d.value(&b, x, y)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-6, "tf {k}");
            }
        }
    }

    #[test]
    fn pure_gaussian_any_mask() {
        let img = truth(3e5, 0.0).render(&params(0.0), 0).unwrap();
        for s in [0.0, 0.5, 1.5, 2.5] {
            let mask = MaskSpec {
                center_px: [63.0, 62.0],
                size_s: s,
                sigma_ref_px: 12.0,
                aspect: 10.0 / 12.0,
            };
            let fit = fit_thermal_masked(&img, &mask).unwrap();
            assert!((fit.sigma_px[0] / 12.0 - 1.0).abs() < 5e-3, "s={s}: {fit:?}");
        }
    }

    #[test]
    fn full_mask_is_rejected() {
        let img = truth(3e5, 0.0).render(&params(0.0), 0).unwrap();
        let mask = MaskSpec {
            center_px: [63.5, 63.5],
            size_s: 100.0,
            sigma_ref_px: 12.0,
            aspect: 1.0,
        };
        assert!(matches!(fit_thermal_masked(&img, &mask), Err(FitError::TooFewPixels { .. })));
    }

    #[test]
    fn mask_covering_condensate_recovers_thermal_width() {
        let img = truth(3e5, 5e4).render(&params(0.0), 0).unwrap();
        let mask = MaskSpec {
            center_px: [63.3, 61.8],
            size_s: 1.0,
            sigma_ref_px: 8.5,
            aspect: 6.5 / 8.0,
        };
        let fit = fit_thermal_masked(&img, &mask).unwrap();
        assert!((fit.sigma_px[0] / 12.0 - 1.0).abs() < 1e-2, "{fit:?}");
    }

    #[test]
    fn thermal_image_plateaus_at_once() {
        let img = truth(3e5, 0.0).render(&params(0.0), 0).unwrap();
        let (s, _) = select_mask_size(&img, &DEFAULT_S_GRID, 0.01).unwrap();
        assert_eq!(s, 0.0);
        let r = fit_bimodal(&img, &FitConfig::default()).unwrap();
        assert!(r.n_bec < 0.01 * r.n_thermal);
        assert!((r.n_thermal / 3e5 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bimodal_plateau_after_coverage() {
        let t = truth(3e5, 4e4);
        let img = t.render(&params(0.0), 0).unwrap();
        let (s, sweep) = select_mask_size(&img, &DEFAULT_S_GRID, 0.01).unwrap();
        let prelim = mask_sweep(&img, &FitConfig::default()).unwrap().0;
        let cover = t.tf_radius_px[0] / prelim.sigma_px[0];
        assert!(s >= cover, "s = {s}, coverage {cover}, sweep {:?}", sweep.iter().map(|p| (p.s, p.sigma_x_px)).collect::<Vec<_>>());
    }

    #[test]
    fn sweep_width_grows_towards_thermal() {
        let img = truth(3e5, 4e4).render(&params(0.0), 0).unwrap();
        let (_, sweep) = mask_sweep(&img, &FitConfig::default()).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].sigma_x_px >= w[0].sigma_x_px * (1.0 - 0.01), "{:?}", (w[0].s, w[0].sigma_x_px, w[1].sigma_x_px));
        }
        assert!(sweep[0].sigma_x_px < 12.0);
    }

    #[test]
    fn noiseless_bimodal_recovery() {
        let img = truth(1.5e5, 2.0e4).render(&params(0.0), 0).unwrap();
        let r = fit_bimodal(&img, &FitConfig::default()).unwrap();
        assert!((r.n_bec / 2.0e4 - 1.0).abs() < 0.01, "{}", r.n_bec);
        assert!((r.n_thermal / 1.5e5 - 1.0).abs() < 0.01, "{}", r.n_thermal);
        assert!(r.bec_detected);
    }

    #[test]
    fn thermal_only_noise_is_not_a_condensate() {
        for seed in 0..6 {
            let img = truth(5e4, 0.0).render(&params(0.02), seed).unwrap();
            let r = fit_bimodal(&img, &FitConfig::default()).unwrap();
            assert!(!r.bec_detected, "seed {seed}: {}", r.n_bec);
            assert!(r.n_bec < FitConfig::default().detection_floor(r.n_thermal));
        }
    }

    #[test]
    fn condensate_only_round_trip() {
        let t = ImageTruth {
            n_thermal: 0.0,
            n_bec: 5e4,
            sigma_px: [1.0, 1.0],
            tf_radius_px: [9.0, 7.0],
            center_px: [64.0, 60.4],
        };
        let p = params(0.0);
        let img = t.render(&p, 0).unwrap();
        let r = fit_bimodal(&img, &FitConfig::default()).unwrap();
        let tf = r.tf.unwrap();
        assert!((tf.peak_od / t.tf_peak_od(&p) - 1.0).abs() < 0.01, "{r:?}");
        assert!((tf.radius_px[0] / 9.0 - 1.0).abs() < 0.01, "{tf:?}");
        assert!((tf.radius_px[1] / 7.0 - 1.0).abs() < 0.01, "{tf:?}");
        assert!((r.n_bec / 5e4 - 1.0).abs() < 0.01);
    }

    #[test]
    fn subtraction_preserves_signal() {
        let img = truth(3e5, 3e4).render(&params(0.01), 5).unwrap();
        let r = fit_bimodal(&img, &FitConfig::default()).unwrap();
        let res = subtract(&img, &r.thermal);
        let mut model = 0.0;
        for iy in 0..img.ny {
            for ix in 0..img.nx {
                model += r.thermal.value(ix as f64, iy as f64);
            }
        }
        let total: f64 = img.data.iter().sum();
        let rsum: f64 = res.data.iter().sum();
        assert!((total - (model + rsum)).abs() <= 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn whole_pixel_translation_invariance() {
        let p = params(0.005);
        let img = truth(3e5, 3e4).render(&p, 11).unwrap();
        let a = fit_bimodal(&img, &FitConfig::default()).unwrap();
        let moved = img.translated(5, -3, 0.0);
        let b = fit_bimodal(&moved, &FitConfig::default()).unwrap();
        assert_eq!(a.chosen_s, b.chosen_s);
        assert!((a.n_bec / b.n_bec - 1.0).abs() < 1e-3, "{} {}", a.n_bec, b.n_bec);
        assert!((a.thermal.center_px[0] + 5.0 - b.thermal.center_px[0]).abs() < 1e-3);
    }

    #[test]
    fn sweep_csv_layout() {
        let csv = sweep_csv(&[(0.0, 10.5), (0.25, 11.0)]);
        assert_eq!(csv, "s,sigma_x_px\n0.0,10.5\n0.25,11.0\n");
    }
}
