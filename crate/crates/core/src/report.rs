//! Exponent reports with optimizer witnesses.

use crate::ext::ExtReal;
use crate::grid::GridSpec;
use crate::info::{CondDist, FiniteDist, JointDist};
use serde::{Deserialize, Serialize};

/// Arguments at which a game value was attained. Fields not produced by a
/// given exponent stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_x: Option<FiniteDist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_y: Option<FiniteDist>,
    /// Test channel: `Q_{S|Y}` or `Q_{Z|X}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<CondDist>,
    /// Reproduction table `f(y, z)`, row-major in `(y, z)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<usize>>,
    /// Innermost optimizer as a full joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointDist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub value: ExtReal,
    pub witness: Witness,
    pub grid_used: GridSpec,
    /// Whether a continuous refinement step improved on grid seeds.
    pub refined: bool,
}

impl ExponentReport {
    pub fn infinite(grid: &GridSpec) -> Self {
        ExponentReport { value: ExtReal::INFINITY, witness: Witness::default(), grid_used: *grid, refined: false }
    }
}
