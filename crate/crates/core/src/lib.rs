//! Desk-scale closed-loop testbed for LiDAR perception in fog.
//!
//! The crate is organised as a pipeline:
//!
//! * [`scene`] holds analytic world geometry and the fog attenuation field.
//! * [`lidar`] turns ray queries into pulse-response curves (hard target
//!   return plus fog backscatter) and picks one point per ray.
//! * [`perception`] is the detector stub of the system under test.
//! * [`worldsim`] runs the kinematic closed loop and collects run counters.
//! * [`sync`] is the lockstep time-advance middleware between the simulator
//!   and the driving stack.
//! * [`search`] discovers corner cases with simulated annealing.
//! * [`campaign`] wires everything into the command-line modes.

pub mod campaign;
pub mod error;
pub mod io;
pub mod lidar;
pub mod perception;
pub mod scene;
pub mod search;
pub mod sync;
pub mod worldsim;

pub use error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Vec3 = nalgebra::Vector3<f64>;
