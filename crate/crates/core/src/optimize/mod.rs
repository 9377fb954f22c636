//! Genetic search over tile configurations and multi-user resource allocation.

pub mod fitness;
pub mod ga;
pub mod multiuser;

pub use fitness::{assess, fitness_case_a, fitness_case_b, FitnessReport, FitnessScore, Objective, Optimization, Optimizer};
pub use ga::{ga_run, GaParams, GaResult, Score};
pub use multiuser::{allocate_multiuser, Allocation, MultiUserProblem, PathGainModel};
