//! Simulation of optical pulse storage in a Λ-type atomic vapour under
//! electromagnetically induced transparency, with magnetic-field phase
//! manipulation of the stored spin coherence and heterodyne detection.

pub mod analysis;
pub mod detect;
pub mod model;
pub mod sequence;
pub mod solver;
