//! Flow-matching training: linear coupling, time schedules, and the fit loop.

mod coupling;
mod fit;
mod schedule;

pub use coupling::{full_coupling, make_coupling, CouplingBatch};
pub use fit::{fit, EpochRecord, TrainConfig, TrainingHistory};
pub use schedule::{beta_density, ln_beta_symmetric, sample_times, TimeSchedule};
