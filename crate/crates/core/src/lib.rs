//! Futures pricing and optimal trading boundaries for a mean-reverting
//! (CIR) index whose coefficients switch with a finite-state Markov chain.

pub mod config;
pub mod discretization;
pub mod error;
pub mod futures;
pub mod model;
pub mod output;
pub mod simulator;
pub mod stopping;
pub mod surface;
