//! The aircraft benchmark: VARX matrices, disturbance law, weights,
//! chance constraint and initial-condition sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{RealTrajectory, VarxModel};
use crate::ocp::{Backoff, ChanceConstraint, OcpWeights};
use crate::pce::{DisturbanceSpec, Distribution};

pub const LAG: usize = 2;
pub const N_U: usize = 1;
pub const N_Y: usize = 3;
pub const DATA_LEN: usize = 90;
pub const HORIZON: usize = 10;
pub const OPEN_LOOP_HORIZON: usize = 25;
pub const CLOSED_LOOP_STEPS: usize = 30;
pub const OUTPUT_BOUND: f64 = 0.349;

/// Â over [y_{k-2}; y_{k-1}].
pub const A_HAT: [f64; 18] = [
    -0.201, 0.256, 0.050, 0.160, -0.256, 0.086, //
    -4.773, 3.688, 0.650, 2.982, -2.688, 1.707, //
    -15.746, 12.898, 2.319, 10.461, -12.897, 5.171,
];

/// B̂ over [u_{k-2}; u_{k-1}].
pub const B_HAT: [f64; 6] = [-0.019, -1.440, 0.711, -1.800, 1.444, -26.922];

pub fn varx() -> VarxModel {
    VarxModel::with_unit_disturbance(
        DMatrix::from_row_slice(N_Y, LAG * N_Y, &A_HAT),
        DMatrix::from_row_slice(N_Y, LAG * N_U, &B_HAT),
        LAG,
    )
    .expect("aircraft matrices are consistent")
}

pub fn disturbance_spec() -> DisturbanceSpec {
    DisturbanceSpec {
        components: vec![
            Distribution::Uniform { lower: -0.1, upper: 0.1 },
            Distribution::Uniform { lower: -3.0, upper: 3.0 },
            Distribution::Uniform { lower: -0.8, upper: 0.8 },
        ],
    }
}

pub fn weights() -> OcpWeights {
    OcpWeights { q: DMatrix::identity(N_Y, N_Y), r: DMatrix::identity(N_U, N_U) }
}

pub fn chance_constraint() -> ChanceConstraint {
    ChanceConstraint {
        component: 0,
        lower: -OUTPUT_BOUND,
        upper: OUTPUT_BOUND,
        level: 0.8,
        backoff: Backoff::Fixed(3.0),
        first_step: 2,
    }
}

/// Initial windows: inputs at `input`, outputs uniform in a box around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitLaw {
    pub center: Vec<f64>,
    pub half_width: f64,
    #[serde(default)]
    pub input: f64,
}

impl Default for InitLaw {
    fn default() -> Self {
        Self { center: vec![0.0, -100.0, 0.0], half_width: 1.0, input: 0.0 }
    }
}

impl InitLaw {
    /// Window over times 1-ℓ..0.
    pub fn sample<R: Rng>(&self, rng: &mut R, lag: usize, n_u: usize) -> Result<RealTrajectory> {
        let c = DVector::from_column_slice(&self.center);
        let y = (0..lag)
            .map(|_| {
                let mut v = c.clone();
                if self.half_width > 0.0 {
                    v.iter_mut().for_each(|x| *x += rng.gen_range(-self.half_width..=self.half_width));
                }
                v
            })
            .collect();
        let u = vec![DVector::from_element(n_u, self.input); lag];
        RealTrajectory::with_dims(1 - lag as i64, n_u, c.len(), u, y, None)
    }

    pub fn center_window(&self, lag: usize, n_u: usize) -> Result<RealTrajectory> {
        let c = DVector::from_column_slice(&self.center);
        RealTrajectory::with_dims(1 - lag as i64, n_u, c.len(), vec![DVector::from_element(n_u, self.input); lag], vec![c; lag], None)
    }
}
