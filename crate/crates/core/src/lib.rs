//! Simulation of software-programmable indoor radio environments.
//!
//! Walls are covered in tiles whose reflection can be steered or absorbed by
//! software. The crate traces rays through such a floorplan, searches tile
//! configurations with a genetic algorithm, synthesises per-tile switch
//! patterns and simulates the control network that deploys them.

pub mod channel;
pub mod controlnet;
pub mod emfunc;
pub mod error;
pub mod experiment;
pub mod optimize;
pub mod raytrace;
pub mod scene;
pub mod vec3;

pub use channel::{delay_spread, received_signal, total_power_dbm, PowerDelayProfile, ReceivedPower};
pub use emfunc::{EmFunction, EmKind, LookupTable, SwitchMatrix, TileFunction};
pub use error::{Error, Result};
pub use optimize::{FitnessReport, GaParams};
pub use raytrace::{EnvConfiguration, PropagationPath, RadioParams, Trace, Tracer};
pub use scene::{Hit, Scene, Surface, Tile};
pub use vec3::Vec3;
