//! Negacyclic NTT polynomial multiplication over word-sized primes, RNS
//! decomposition for wide moduli, and a cycle-accurate model of a banked
//! NTT accelerator with a conflict-free layout and a hazard-free schedule.

pub mod cli;
pub mod error;
pub mod modarith;
pub mod ntt;
pub mod layout;
pub mod rns;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
