//! Projective dynamics over the reals and the p-adics: metric geometry,
//! Cartan data, contraction and proximality certification, ping-pong
//! arenas, and free-element synthesis in prescribed double cosets.

pub mod cert;
pub mod field;
pub mod linalg;
pub mod proj;
pub mod synth;

pub use cert::*;
pub use field::{PadicField, RealField, ValuedField};
pub use linalg::{CartanField, CartanFull, Mat, ProjError};
pub use proj::{
    apply_hyperplane, apply_point, dist_point_hyperplane, hausdorff_dist, proj_dist,
    ProjHyperplane, ProjPoint,
};
pub use synth::*;

/// The calibration constants of the contraction estimates. The theory only
/// asserts their existence; certificates record the values actually used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants { c: 4.0, c1: 4.0, c2: 4.0 }
    }
}
