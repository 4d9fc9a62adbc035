//! Cost functions: evaporation efficiency γ and its combination with the
//! condensate atom number.

use serde::{Deserialize, Serialize};

use crate::constants::PSD_CRITICAL;
use crate::error::{DomainError, Error};
use crate::sim::{Trajectory, TrajectoryPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub beta_gamma: f64,
    /// Per-atom weight of the condensate term.
    pub beta_bec: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::normalized(1e4)
    }
}

impl CostWeights {
    /// `β_γ = 1`, `β_BEC = 1/n_scale`.
    pub fn normalized(n_scale: f64) -> Self {
        Self {
            beta_gamma: 1.0,
            beta_bec: 1.0 / n_scale,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        DomainError::check_non_negative("beta_gamma", self.beta_gamma)?;
        DomainError::check_non_negative("beta_bec", self.beta_bec)?;
        if self.beta_gamma == 0.0 && self.beta_bec == 0.0 {
            return Err(DomainError::Invalid("cost weights cannot both be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    EfficiencyOnly,
    #[default]
    Combined,
}

/// `ln(psd/psd0) / ln(n0/n)`.
pub fn gamma_efficiency(psd0: f64, psd: f64, n0: f64, n: f64) -> Result<f64, DomainError> {
    DomainError::check_positive("initial PSD", psd0)?;
    DomainError::check_positive("final PSD", psd)?;
    DomainError::check_positive("initial atom number", n0)?;
    DomainError::check_positive("final atom number", n)?;
    if n >= n0 {
        return Err(DomainError::NoAtomLoss { n, n0 });
    }
    Ok((psd / psd0).ln() / (n0 / n).ln())
}

/// `β_γ γ + β_BEC N_BEC`.
pub fn combined_cost(gamma: f64, n_bec: f64, weights: &CostWeights) -> f64 {
    weights.beta_gamma * gamma + weights.beta_bec * n_bec
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostValue {
    pub cost: f64,
    pub gamma: f64,
    pub n_bec: f64,
    /// γ fell back to zero because no atoms were lost or the PSD vanished.
    pub degenerate: bool,
    pub lost: bool,
}

/// PSD used for γ: the thermal value, or the critical value for a fully
/// condensed cloud whose thermal fraction has vanished.
fn gamma_psd(p: &TrajectoryPoint) -> f64 {
    if p.psd.value > 0.0 {
        p.psd.value
    } else if p.cloud.n_bec > 0.0 {
        PSD_CRITICAL
    } else {
        0.0
    }
}

/// Scores a trajectory. Lost runs use the last valid point for γ and count
/// no condensate. `n_bec_measured` replaces the simulated condensate number
/// (full-loop mode, where it comes from an image fit).
pub fn evaluate(
    trajectory: &Trajectory,
    weights: &CostWeights,
    mode: CostMode,
    n_bec_measured: Option<f64>,
) -> Result<CostValue, Error> {
    if trajectory.points.is_empty() {
        return Err(Error::Usage("cannot score an empty trajectory".into()));
    }
    let first = trajectory.first();
    let last = trajectory.last();
    let gamma = gamma_efficiency(gamma_psd(first), gamma_psd(last), first.cloud.n_total, last.cloud.n_total);
    let (gamma, degenerate) = match gamma {
        Ok(g) if g.is_finite() => (g, false),
        _ => (0.0, true),
    };
    let lost = trajectory.is_lost();
    let n_bec = if lost {
        0.0
    } else {
        n_bec_measured.unwrap_or(last.cloud.n_bec).max(0.0)
    };
    let cost = match mode {
        CostMode::EfficiencyOnly => weights.beta_gamma * gamma,
        CostMode::Combined => combined_cost(gamma, n_bec, weights),
    };
    Ok(CostValue {
        cost,
        gamma,
        n_bec,
        degenerate,
        lost,
    })
}
