//! Coupled-channel inverse scattering on the line.
//!
//! The crate covers both directions of the one-dimensional `N`-channel
//! scattering problem with threshold energies:
//!
//! * [`forward`] integrates the matrix Schrödinger equation across a potential of
//!   finite support and returns left reflection/transmission matrices, bound
//!   states (zeros of the Jost Wronskian) and the residues of the reflection
//!   matrix at those states.
//! * [`kernel`] turns reflection data plus bound-state data into the input kernel
//!   of the Marchenko equation, handling the inverse square-root measure at every
//!   channel threshold.
//! * [`marchenko`] solves the integral equation row by row and differentiates the
//!   diagonal of the transformation kernel to recover the potential.
//! * [`boundfit`] recovers bound-state parameters from the scattering part of the
//!   kernel alone, so the inversion can run from reflection data only.
//! * [`susy`] builds phase-equivalent partner potentials and the superpotential
//!   used to verify them.
//!
//! Everything here is pure computation over `alloc`; file formats, configuration
//! and the command line live in the `mcis` crate. Build with
//! `--no-default-features` for `no_std` targets.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(a > b)` is used on purpose so NaN fails range checks; index loops
// mirror the matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod boundfit;
pub mod channels;
mod error;
pub mod forward;
pub mod kernel;
pub mod linalg;
pub mod marchenko;
pub mod profiles;
pub mod susy;

pub use channels::{ChannelMomenta, ChannelSystem};
pub use error::{Error, Result};
pub use forward::{BoundState, ReflectionTable};
pub use kernel::InputKernel;
pub use linalg::CMat;
pub use num_complex::Complex64;
pub use profiles::{MatrixPotential, PotentialGrid, ProfileSpec};
