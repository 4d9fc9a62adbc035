//! Digital twin of forced evaporative cooling in a crossed optical dipole
//! trap, coupled to a Gaussian-process Bayesian optimizer over the beam-power
//! ramps and to a synthetic absorption-imaging / bimodal-fitting pipeline.
//!
//! The crate is organised bottom-up:
//!
//! * [`trap`] turns beam powers into depth, harmonic frequencies and a
//!   single-beam / crossed classification.
//! * [`cloud`] holds the thermodynamic state and the phase-space density.
//! * [`feshbach`] maps magnetic field and temperature to the scattering length
//!   and the three-body loss coefficient.
//! * [`ramps`] is the piecewise-linear power schedule and its optimizer codec.
//! * [`sim`] integrates the rate equations along a schedule.
//! * [`cost`] scores trajectories.
//! * [`gp`] and [`bayesopt`] form the optimizer.
//! * [`imaging`] synthesizes and fits absorption images.
//! * [`config`] and [`orchestrator`] wire everything behind the CLI.

pub mod bayesopt;
pub mod cloud;
pub mod config;
pub mod constants;
pub mod cost;
pub mod error;
pub mod feshbach;
pub mod gp;
pub mod imaging;
pub mod ode;
pub mod orchestrator;
pub mod par;
pub mod ramps;
pub mod rng;
pub mod sim;
pub mod trap;

pub use error::{DomainError, Error, Result};
