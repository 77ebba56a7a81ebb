//! Quaternionic maps of ℝ⁴ that take lines to circles: the map families,
//! numerical extraction of their differential invariants, and verification
//! sweeps.

pub mod diff_lab;
pub mod error;
pub mod exec;
pub mod map_zoo;
pub mod qforms;
pub mod quat;
pub mod sphere_geom;
pub mod verifier;

pub use error::{Error, Result};
pub use exec::Execution;
pub use map_zoo::{eval, Jet3, Map4, MapSpec, Side};
pub use qforms::{QOneForm, QThreeForm, QTwoForm};
pub use quat::Quaternion;
