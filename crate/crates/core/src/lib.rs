//! Linearized hybrid-imaging inverse problems on 2-D grids: forward elliptic
//! solves, internal-data functionals and their Fréchet derivatives, symbol
//! audits, complex geometrical optics solutions and linearized
//! reconstructions for UMOT, AET and QPAT.

pub mod banded;
pub mod cgo;
pub mod cli;
pub mod draw;
pub mod elliptic;
pub mod error;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod linearization;
pub mod microlocal;

pub use error::{Error, Result};
