//! Certifying that two feasible AC OPF operating points lie in disconnected
//! components of the feasible space.
//!
//! The pipeline: read a MATPOWER case ([`case_io`]), evaluate and solve the
//! nonconvex model ([`network`]), build its QC relaxation ([`relaxation`]),
//! tighten bounds ([`tightening`]) and test a separating hyperplane
//! ([`certify`]).

pub mod case_io;
pub mod network;
pub mod relaxation;
pub mod tightening;
pub mod certify;
