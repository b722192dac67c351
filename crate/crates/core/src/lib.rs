//! Data-driven prediction and chance-constrained control of stochastic LTI
//! systems using polynomial chaos expansions of the disturbance sequence.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] state-space and VARX plants, conversion and simulation
//! * [`pce`] the joint affine chaos basis, coefficient trajectories, sampling
//! * [`hankel`] Hankel blocks, excitation certificates, data-volume accounting
//! * [`predictor`] coefficient propagation from recorded data
//! * [`estimator`] disturbance estimation and undisturbed-data synthesis
//! * [`socp`] a small dense interior-point solver for conic QPs
//! * [`ocp`] the stochastic optimal control problem in chaos coefficients
//! * [`closed_loop`] receding-horizon runs and the scheme benchmark
//! * [`experiment`] configuration and the command implementations behind the `ddpce` binary
//!
//! Runnable walkthroughs live in the `examples/` directory of this crate.

pub mod aircraft;
pub mod closed_loop;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod hankel;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ocp;
pub mod pce;
pub mod predictor;
pub mod rng;
pub mod socp;

pub use error::{Error, Result};
pub use model::{RealTrajectory, StateSpaceModel, VarxModel};
pub use pce::{DisturbanceSpec, Distribution, JointBasis, PceTrajectory};
