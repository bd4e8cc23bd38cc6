//! Desk-scale simulation of a 1+2-dimensional Weyl fermion encoded in a single
//! trapped ion.
//!
//! * [`units`] — trap parameters and the dimensionless unit system.
//! * [`wavepacket`] — kicked Gaussian spinors and exact momentum-space evolution.
//! * [`observables`] — mean-position integrals, Zitterbewegung diagnostics.
//! * [`ionfock`] — truncated Fock-space sideband Hamiltonians and state preparation.
//! * [`measurement`] — displacement-probe readout and density reconstruction.

pub mod ionfock;
pub mod measurement;
pub mod observables;
pub mod units;
pub mod wavepacket;
