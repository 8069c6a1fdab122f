//! Stroke classification from simulated EIT electrode data.
//!
//! The chain runs from a 2D head phantom through complete-electrode-model
//! voltages, a discrete Dirichlet-to-Neumann matrix, complex geometrical
//! optics traces and virtual hybrid edge detection (VHED) profiles, to a
//! small neural network that separates hemorrhagic from ischemic strokes.
//! [`pipeline`] wires the stages into reproducible experiments.

pub mod cem_fem;
pub mod cgo_bie;
pub mod classifier;
pub mod dn_mimic;
pub mod geometry;
pub mod io;
pub mod phantom;
pub mod pipeline;
pub mod sparse;
pub mod spectral;
pub mod vhed;
