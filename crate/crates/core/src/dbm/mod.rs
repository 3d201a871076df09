//! Matrix flows and eigenvalue SDEs for the linearized covariance model.

use serde::{Deserialize, Serialize};

/// Brownian (`X + √t W`) or Ornstein–Uhlenbeck (`e^{-t/2} X + √(1−e^{-t}) W`) flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    #[default]
    Brownian,
    OrnsteinUhlenbeck,
}

mod flow;
mod perturbation;
mod sde;

pub use flow::{delocalization_stat, dense_spectrum, matrix_flow_sample, ou_matrix_flow_sample, spectrum};
pub use perturbation::{eigenvalue_gradient, eigenvalue_hessian, eigenvalue_hessian_check, HessianCheck, Label};
pub use sde::{
    drift, step_eigen_sde, write_trajectory, Checkpoint, EigenIntegrator, LoggedStep, NoisePath, RectDrift, SdeConfig,
    SpectrumState, StepLog, TrajectoryRecord,
};
