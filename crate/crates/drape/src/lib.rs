//! Energy of a hanging wrinkled drape in the Föppl–von Kármán model:
//! discrete evaluation and direct minimization, the explicit low-energy
//! constructions it is sandwiched between, and the closed-form excess-energy
//! scaling law with its phase diagram.
//!
//! The sheet occupies `[-W,W] x [-L,0]`, clamped along the top edge into
//! fine sinusoidal wrinkles of period `w0` with compression factor `Delta`,
//! and hangs under gravity `tau`. As the thickness `h` tends to zero, the
//! energy tends to the bulk value `-τ²L³(2W)/12`; everything interesting is
//! in the excess above that, which the modules here measure three
//! independent ways: quadrature on explicit constructions
//! ([`constructions`]), the closed-form law ([`scaling`]), and direct
//! minimization ([`minimize`]).

pub mod constructions;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod minimize;
pub mod params;
pub mod scaling;

pub use error::{Error, Result};
pub use grid::{DeformationField, Grid, Mask};
pub use params::{CanonicalParams, PhysicalParams, ScaleRecord, Violation};
