//! Conditional flow-matching policies for imitation learning.
//!
//! A [`model::VelocityModel`] is trained to regress the straight-line velocity
//! `a1 - a0` between Gaussian noise and expert actions ([`train::fit`]), with
//! training times drawn uniformly or from a U-shaped `Beta(alpha, alpha)`
//! ([`train::TimeSchedule`]). Actions are generated by integrating the field
//! with uniform Euler or with the dense-jump schedule, which integrates
//! densely up to `t_jump` and then extrapolates to `t = 1` in one step
//! ([`solver`]).
//!
//! [`diagnostics`] probes the learned field for drift toward training actions
//! and for Lipschitz and curvature growth near `t = 1`; [`bench`] provides
//! synthetic multimodal tasks to evaluate policies closed-loop.

pub mod bench;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
