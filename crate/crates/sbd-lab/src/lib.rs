//! Constructive approximation of SBD displacement fields in the plane and
//! a cohesive phase-field energy with its desk-scale Gamma-limit check.

pub mod expr;
pub mod geometry;
pub mod sbd_field;
pub mod rigid_fit;
pub mod extension;
pub mod mollify;
pub mod rough_approx;
pub mod density_pipeline;
pub mod corpus;
pub mod phase_field;
pub mod cli;
