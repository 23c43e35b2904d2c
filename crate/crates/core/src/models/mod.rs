//! Model catalogue, each model packaged with its auxiliary process.

pub mod arctan;
pub mod cle;
pub mod linear;
pub mod lotka_volterra;
pub mod toy;

pub use arctan::Arctan;
pub use cle::{CleModel, EndpointHazards, Hazard, HazardLinearization, ReactionNetwork};
pub use linear::LinearSde;
pub use lotka_volterra::LotkaVolterra;
pub use toy::ScaledBrownian;
