//! Piecewise-linear beam-power schedules and the codec between a schedule
//! and the optimizer's normalized parameter vector.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beam {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub times_s: Vec<f64>,
    pub power_h_w: Vec<f64>,
    pub power_v_w: Vec<f64>,
}

impl RampSchedule {
    pub fn new(times_s: Vec<f64>, power_h_w: Vec<f64>, power_v_w: Vec<f64>) -> Result<Self, DomainError> {
        let s = Self {
            times_s,
            power_h_w,
            power_v_w,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let k = self.times_s.len();
        if k == 0 || self.power_h_w.len() != k || self.power_v_w.len() != k {
            return Err(DomainError::Invalid(format!(
                "schedule lists must be non-empty and of equal length (times {}, P_H {}, P_V {})",
                k,
                self.power_h_w.len(),
                self.power_v_w.len()
            )));
        }
        if self.times_s[0] != 0.0 {
            return Err(DomainError::Invalid(format!(
                "schedule must start at t = 0, got {}",
                self.times_s[0]
            )));
        }
        if let Some(w) = self.times_s.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(DomainError::Invalid(format!(
                "breakpoint times must strictly increase ({} then {})",
                w[0], w[1]
            )));
        }
        for &p in self.power_h_w.iter().chain(&self.power_v_w) {
            DomainError::check_non_negative("beam power", p)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        *self.times_s.last().unwrap_or(&0.0)
    }

    pub fn powers(&self, beam: Beam) -> &[f64] {
        match beam {
            Beam::Horizontal => &self.power_h_w,
            Beam::Vertical => &self.power_v_w,
        }
    }

    fn powers_mut(&mut self, beam: Beam) -> &mut Vec<f64> {
        match beam {
            Beam::Horizontal => &mut self.power_h_w,
            Beam::Vertical => &mut self.power_v_w,
        }
    }

    /// Index `i` of the segment `[t_i, t_{i+1}]` containing `t` (the last
    /// segment for `t = t_K`).
    pub fn segment_index(&self, t: f64) -> Result<usize, DomainError> {
        let end = self.total_time();
        if !(t >= 0.0 && t <= end) {
            return Err(DomainError::TimeOutOfRange { t, end });
        }
        if self.len() == 1 {
            return Ok(0);
        }
        let i = self.times_s.partition_point(|&ti| ti <= t);
        Ok(i.saturating_sub(1).min(self.len() - 2))
    }

    pub fn power_at(&self, t: f64, beam: Beam) -> Result<f64, DomainError> {
        let i = self.segment_index(t)?;
        let p = self.powers(beam);
        if self.len() == 1 {
            return Ok(p[0]);
        }
        let (t0, t1) = (self.times_s[i], self.times_s[i + 1]);
        if t == t0 {
            return Ok(p[i]);
        }
        if t == t1 {
            return Ok(p[i + 1]);
        }
        let f = (t - t0) / (t1 - t0);
        Ok(p[i] + f * (p[i + 1] - p[i]))
    }

    pub fn powers_at(&self, t: f64) -> Result<(f64, f64), DomainError> {
        Ok((self.power_at(t, Beam::Horizontal)?, self.power_at(t, Beam::Vertical)?))
    }

    /// dP/dt of both beams on segment `i`.
    pub fn segment_slopes(&self, i: usize) -> (f64, f64) {
        if i + 1 >= self.len() {
            return (0.0, 0.0);
        }
        let dt = self.times_s[i + 1] - self.times_s[i];
        (
            (self.power_h_w[i + 1] - self.power_h_w[i]) / dt,
            (self.power_v_w[i + 1] - self.power_v_w[i]) / dt,
        )
    }

    /// Appends `n_segments` holds of `segment_duration` at the final powers.
    pub fn extend_tail(&self, n_segments: usize, segment_duration: f64) -> Result<Self, DomainError> {
        if n_segments == 0 {
            return Err(DomainError::Invalid("extend_tail needs at least one segment".into()));
        }
        DomainError::check_positive("segment duration", segment_duration)?;
        let mut out = self.clone();
        let (ph, pv) = (*self.power_h_w.last().unwrap(), *self.power_v_w.last().unwrap());
        let t_end = self.total_time();
        for k in 1..=n_segments {
            out.times_s.push(t_end + k as f64 * segment_duration);
            out.power_h_w.push(ph);
            out.power_v_w.push(pv);
        }
        Ok(out)
    }

    /// All breakpoint times multiplied by `factor`.
    pub fn time_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.times_s.iter_mut().for_each(|t| *t *= factor);
        out
    }

    /// `t_s,P_H_W,P_V_W` sampled on `n` uniform points over `[0, t_K]`.
    pub fn to_csv_grid(&self, n: usize) -> String {
        let mut out = String::from("t_s,P_H_W,P_V_W\n");
        let end = self.total_time();
        let n = n.max(2);
        for i in 0..n {
            let t = if i + 1 == n { end } else { end * i as f64 / (n - 1) as f64 };
            let (ph, pv) = self.powers_at(t).expect("t within schedule");
            let _ = writeln!(out, "{t:.6e},{ph:.10e},{pv:.10e}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Slot {
    Power { beam: Beam, index: usize },
    TotalTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// One optimizer coordinate: a schedule slot and its physical box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub slot: Slot,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub scale: Scale,
}

impl Coordinate {
    fn to_unit(&self, physical: f64) -> f64 {
        match self.scale {
            Scale::Linear => (physical - self.lo) / (self.hi - self.lo),
            Scale::Log => (physical.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Layout {
    pub coords: Vec<Coordinate>,
}

impl Layout {
    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn push(&mut self, coord: Coordinate) -> &mut Self {
        self.coords.push(coord);
        self
    }

    /// Power slots for `indices` of `beam` with per-index bounds.
    pub fn add_powers(&mut self, beam: Beam, indices: impl IntoIterator<Item = usize>, bounds: impl Fn(usize) -> (f64, f64), scale: Scale) -> &mut Self {
        for index in indices {
            let (lo, hi) = bounds(index);
            self.coords.push(Coordinate {
                slot: Slot::Power { beam, index },
                lo,
                hi,
                scale,
            });
        }
        self
    }

    pub fn add_total_time(&mut self, lo: f64, hi: f64) -> &mut Self {
        self.coords.push(Coordinate {
            slot: Slot::TotalTime,
            lo,
            hi,
            scale: Scale::Linear,
        });
        self
    }

    pub fn validate_for(&self, schedule: &RampSchedule) -> Result<(), DomainError> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.coords {
            if !seen.insert(c.slot) {
                return Err(DomainError::Invalid(format!("slot {:?} appears twice in the layout", c.slot)));
            }
            if !(c.hi > c.lo) || !c.lo.is_finite() || !c.hi.is_finite() {
                return Err(DomainError::Invalid(format!("empty box [{}, {}] for {:?}", c.lo, c.hi, c.slot)));
            }
            if c.scale == Scale::Log && !(c.lo > 0.0) {
                return Err(DomainError::Invalid(format!("log-scaled box for {:?} needs lo > 0", c.slot)));
            }
            match c.slot {
                Slot::Power { index, .. } if index >= schedule.len() => {
                    return Err(DomainError::Invalid(format!(
                        "layout addresses breakpoint {index} of a {}-breakpoint schedule",
                        schedule.len()
                    )));
                }
                Slot::Power { .. } if c.lo < 0.0 => {
                    return Err(DomainError::Invalid(format!("negative power bound for {:?}", c.slot)));
                }
                Slot::TotalTime if !(c.lo > 0.0) => {
                    return Err(DomainError::Invalid("total-time box must be positive".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }
}

/// Result of a codec direction: the converted value plus per-coordinate
/// clamp flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Clamped<T> {
    pub value: T,
    pub clamped: Vec<bool>,
}

impl<T> Clamped<T> {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }

    pub fn clamp_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// Maps between a base schedule and the exposed coordinates of a layout.
/// Slots not in the layout are frozen at the base schedule's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampCodec {
    pub base: RampSchedule,
    pub layout: Layout,
}

impl RampCodec {
    pub fn new(base: RampSchedule, layout: Layout) -> Result<Self, DomainError> {
        base.validate()?;
        layout.validate_for(&base)?;
        Ok(Self { base, layout })
    }

    pub fn dims(&self) -> usize {
        self.layout.dims()
    }

    /// `true` for every (beam, breakpoint) power held fixed.
    pub fn frozen_mask(&self, beam: Beam) -> Vec<bool> {
        (0..self.base.len())
            .map(|i| {
                !self
                    .layout
                    .coords
                    .iter()
                    .any(|c| c.slot == Slot::Power { beam, index: i })
            })
            .collect()
    }

    pub fn encode(&self, schedule: &RampSchedule) -> Result<Clamped<ParamVector>, DomainError> {
        if schedule.len() != self.base.len() {
            return Err(DomainError::Invalid(format!(
                "schedule has {} breakpoints, codec expects {}",
                schedule.len(),
                self.base.len()
            )));
        }
        let mut values = Vec::with_capacity(self.dims());
        let mut clamped = Vec::with_capacity(self.dims());
        for c in &self.layout.coords {
            let physical = match c.slot {
                Slot::Power { beam, index } => schedule.powers(beam)[index],
                Slot::TotalTime => schedule.total_time(),
            };
            let u = c.to_unit(physical);
            let inside = (0.0..=1.0).contains(&u);
            clamped.push(!inside);
            values.push(if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) });
        }
        Ok(Clamped {
            value: ParamVector::new(values),
            clamped,
        })
    }

    pub fn decode(&self, pv: &ParamVector) -> Result<Clamped<RampSchedule>, DomainError> {
        if pv.dims() != self.dims() {
            return Err(DomainError::Invalid(format!(
                "parameter vector has {} coordinates, layout has {}",
                pv.dims(),
                self.dims()
            )));
        }
        let mut out = self.base.clone();
        let mut clamped = Vec::with_capacity(self.dims());
        let mut new_total = None;
        for (c, &u) in self.layout.coords.iter().zip(&pv.values) {
            let inside = (0.0..=1.0).contains(&u);
            clamped.push(!inside);
            let physical = c.from_unit(if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) });
            match c.slot {
                Slot::Power { beam, index } => out.powers_mut(beam)[index] = physical,
                Slot::TotalTime => new_total = Some(physical),
            }
        }
        if let Some(total) = new_total {
            let base_total = self.base.total_time();
            if base_total > 0.0 {
                out = out.time_scaled(total / base_total);
            }
        }
        out.validate()?;
        Ok(Clamped { value: out, clamped })
    }
}
